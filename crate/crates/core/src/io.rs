//! File formats: AIS CSV, detection and annotation JSON lines, ground-truth CSV and reports.

use std::io::{BufRead, Read, Write};

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::ais::{AisRecord, Mmsi};
use crate::fusion::{FusedAnnotation, Provenance};
use crate::metrics::{FusionReport, GroundTruthRecord, Prediction, Scores};
use crate::tracking::{normalize, DetectionBox};
use crate::{Error, GeoPoint, Rect, Result, Seconds};

pub const AIS_HEADER: [&str; 7] = ["mmsi", "t", "lon", "lat", "sog", "cog", "heading"];
pub const GT_HEADER: [&str; 7] = ["t", "mmsi", "track_id", "x_tl", "y_tl", "x_br", "y_br"];

/// Unix seconds, or an ISO-8601 / RFC 3339 timestamp (naive times are taken as UTC).
pub fn parse_time(s: &str) -> Option<Seconds> {
    let s = s.trim();
    if let Ok(v) = s.parse::<i64>() {
        return Some(v);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp());
    }
    ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .map(|dt| dt.and_utc().timestamp())
}

fn csv_reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(false).from_reader(input)
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, idx: usize, name: &str, src: &str, line: usize) -> Result<T> {
    let raw = rec.get(idx).unwrap_or("");
    raw.parse()
        .map_err(|_| Error::parse(src, line, format!("field `{name}`: cannot parse {raw:?}")))
}

fn check_header(rdr: &mut csv::Reader<impl Read>, expected: &[&str], src: &str) -> Result<()> {
    let header = rdr.headers().map_err(|e| Error::parse(src, 1, e.to_string()))?;
    let got: Vec<&str> = header.iter().collect();
    if got != expected {
        return Err(Error::parse(src, 1, format!("expected header {}", expected.join(","))));
    }
    Ok(())
}

/// Reads AIS reports. Records must be sorted by time; the first offending line is reported.
/// An empty `heading` or the AIS "not available" value 511 maps to `None`.
pub fn read_ais_csv<R: Read>(input: R, src: &str) -> Result<Vec<AisRecord>> {
    let mut rdr = csv_reader(input);
    check_header(&mut rdr, &AIS_HEADER, src)?;
    let mut out: Vec<AisRecord> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::parse(src, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let t = parse_time(rec.get(1).unwrap_or(""))
            .ok_or_else(|| Error::parse(src, line, format!("field `t`: cannot parse {:?}", rec.get(1).unwrap_or(""))))?;
        if out.last().is_some_and(|prev| t < prev.t) {
            return Err(Error::parse(src, line, "records are not sorted by time"));
        }
        let heading = match rec.get(6).unwrap_or("") {
            "" => None,
            _ => Some(field::<f64>(&rec, 6, "heading", src, line)?).filter(|h| *h != 511.0),
        };
        out.push(AisRecord {
            mmsi: Mmsi(field(&rec, 0, "mmsi", src, line)?),
            t,
            pos: GeoPoint {
                lon: field(&rec, 2, "lon", src, line)?,
                lat: field(&rec, 3, "lat", src, line)?,
            },
            sog: field(&rec, 4, "sog", src, line)?,
            cog: field(&rec, 5, "cog", src, line)?,
            heading,
            synthetic: false,
        });
    }
    Ok(out)
}

pub fn write_ais_csv<W: Write>(out: W, records: &[AisRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(AIS_HEADER).map_err(csv_io)?;
    for r in records {
        let heading = r.heading.map_or(String::new(), |h| h.to_string());
        w.write_record([
            r.mmsi.to_string(),
            r.t.to_string(),
            r.pos.lon.to_string(),
            r.pos.lat.to_string(),
            r.sog.to_string(),
            r.cog.to_string(),
            heading,
        ])
        .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DetectionLine {
    t: Seconds,
    detections: Vec<DetectionJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DetectionJson {
    #[serde(rename = "box")]
    bbox: [f64; 4],
    confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    embedding: Option<Vec<f64>>,
}

/// Reads one JSON object per line: `{"t": .., "detections": [{"box": [x_tl, y_tl, x_br, y_br],
/// "confidence": .., "embedding": [..]}]}`. Embeddings are rescaled to unit length; tick times
/// must strictly increase.
pub fn read_detections_jsonl<R: BufRead>(input: R, src: &str) -> Result<Vec<(Seconds, Vec<DetectionBox>)>> {
    let mut frames: Vec<(Seconds, Vec<DetectionBox>)> = Vec::new();
    for (k, line) in input.lines().enumerate() {
        let line_no = k + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: DetectionLine =
            serde_json::from_str(&line).map_err(|e| Error::parse(src, line_no, e.to_string()))?;
        if frames.last().is_some_and(|(t, _)| parsed.t <= *t) {
            return Err(Error::parse(src, line_no, "ticks are not strictly increasing"));
        }
        let mut boxes = Vec::with_capacity(parsed.detections.len());
        for d in parsed.detections {
            let [a, b, c, e] = d.bbox;
            let embedding = match d.embedding {
                Some(v) => Some(normalize(&v).ok_or_else(|| Error::parse(src, line_no, "zero embedding"))?),
                None => None,
            };
            let rect = Rect::new(a, b, c, e).map_err(|e| Error::parse(src, line_no, e.to_string()))?;
            boxes.push(
                DetectionBox::new(parsed.t, rect, d.confidence, embedding)
                    .map_err(|e| Error::parse(src, line_no, e.to_string()))?,
            );
        }
        frames.push((parsed.t, boxes));
    }
    Ok(frames)
}

fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

/// Writes detections; box coordinates and embedding components are rounded to 1e-6.
pub fn write_detections_jsonl<W: Write>(mut out: W, frames: &[(Seconds, Vec<DetectionBox>)]) -> Result<()> {
    for (t, boxes) in frames {
        let line = DetectionLine {
            t: *t,
            detections: boxes
                .iter()
                .map(|d| DetectionJson {
                    bbox: [d.rect.x_tl, d.rect.y_tl, d.rect.x_br, d.rect.y_br].map(round6),
                    confidence: round6(d.confidence),
                    embedding: d.embedding.as_ref().map(|e| e.iter().copied().map(round6).collect()),
                })
                .collect(),
        };
        serde_json::to_writer(&mut out, &line).map_err(std::io::Error::other)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Ground truth as `t,mmsi,track_id,x_tl,y_tl,x_br,y_br`; an empty MMSI marks a vessel without AIS.
pub fn read_gt_csv<R: Read>(input: R, src: &str) -> Result<Vec<GroundTruthRecord>> {
    let mut rdr = csv_reader(input);
    check_header(&mut rdr, &GT_HEADER, src)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::parse(src, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let mmsi = match rec.get(1).unwrap_or("") {
            "" => None,
            _ => Some(field(&rec, 1, "mmsi", src, line)?),
        };
        let rect = Rect::new(
            field(&rec, 3, "x_tl", src, line)?,
            field(&rec, 4, "y_tl", src, line)?,
            field(&rec, 5, "x_br", src, line)?,
            field(&rec, 6, "y_br", src, line)?,
        )
        .map_err(|e| Error::parse(src, line, e.to_string()))?;
        out.push(GroundTruthRecord {
            t: field(&rec, 0, "t", src, line)?,
            mmsi,
            track_id: field(&rec, 2, "track_id", src, line)?,
            rect,
        });
    }
    Ok(out)
}

pub fn write_gt_csv<W: Write>(out: W, records: &[GroundTruthRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(GT_HEADER).map_err(csv_io)?;
    for g in records {
        let r = g.rect;
        w.write_record([
            g.t.to_string(),
            g.mmsi.map_or(String::new(), |m| m.to_string()),
            g.track_id.to_string(),
            round6(r.x_tl).to_string(),
            round6(r.y_tl).to_string(),
            round6(r.x_br).to_string(),
            round6(r.y_br).to_string(),
        ])
        .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_annotations_jsonl<W: Write>(mut out: W, annotations: &[FusedAnnotation]) -> Result<()> {
    for a in annotations {
        serde_json::to_writer(&mut out, a).map_err(std::io::Error::other)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_annotations_jsonl<R: BufRead>(input: R, src: &str) -> Result<Vec<FusedAnnotation>> {
    let mut out = Vec::new();
    for (k, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let a: FusedAnnotation = serde_json::from_str(&line).map_err(|e| Error::parse(src, k + 1, e.to_string()))?;
        if (a.mmsi.is_some()) == (a.prov == Provenance::Unmatched) {
            return Err(Error::parse(src, k + 1, "mmsi must be present exactly when provenance is not unmatched"));
        }
        out.push(a);
    }
    Ok(out)
}

pub fn predictions_from_annotations(annotations: &[FusedAnnotation]) -> Result<Vec<Prediction>> {
    annotations
        .iter()
        .map(|a| {
            let [x0, y0, x1, y1] = a.bbox;
            Ok(Prediction {
                t: a.t,
                track_id: a.track,
                mmsi: a.mmsi.map(|m| m.0),
                rect: Rect::new(x0, y0, x1, y1)?,
            })
        })
        .collect()
}

/// Pretty JSON with a trailing newline.
pub fn write_report_json<W: Write>(mut out: W, report: &FusionReport) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, report).map_err(std::io::Error::other)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub const REPORT_COLUMNS: [&str; 12] = [
    "clip", "MOFA", "IDP", "IDR", "IDF1", "MOFP", "MOTA", "Precision", "Recall", "TrackIDF1", "IDs", "GT",
];

/// One row per clip plus the aggregate. Rates are percentages with two decimals; MOFP stays a
/// fraction of the image diagonal. Undefined values are empty cells.
pub fn write_report_csv<W: Write>(out: W, report: &FusionReport) -> Result<()> {
    let pct = |v: Option<f64>| v.map_or(String::new(), |x| format!("{:.2}", x * 100.0));
    let frac = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.4}"));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_COLUMNS).map_err(csv_io)?;
    for c in report.clips.iter().chain(std::iter::once(&report.aggregate)) {
        let s: &Scores = &c.scores;
        w.write_record([
            c.clip.clone(),
            pct(s.mofa),
            pct(s.idp),
            pct(s.idr),
            pct(s.idf1),
            frac(s.mofp),
            pct(s.mota),
            pct(s.precision),
            pct(s.recall),
            pct(s.track_idf1),
            c.counters.id_switches.to_string(),
            c.counters.gt.to_string(),
        ])
        .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_formats() {
        assert_eq!(parse_time("1700000000"), Some(1_700_000_000));
        assert_eq!(parse_time("2023-11-14T22:13:20Z"), Some(1_700_000_000));
        assert_eq!(parse_time("2023-11-14 22:13:20"), Some(1_700_000_000));
        assert_eq!(parse_time("2023-11-15T06:13:20+08:00"), Some(1_700_000_000));
        assert_eq!(parse_time("yesterday"), None);
    }

    #[test]
    fn ais_round_trip() {
        let recs = vec![
            AisRecord {
                mmsi: Mmsi(413_000_001),
                t: 10,
                pos: GeoPoint { lon: 114.3, lat: 30.61 },
                sog: 5.5,
                cog: 90.0,
                heading: Some(91.0),
                synthetic: false,
            },
            AisRecord {
                mmsi: Mmsi(413_000_002),
                t: 12,
                pos: GeoPoint { lon: 114.31, lat: 30.62 },
                sog: 0.0,
                cog: 0.0,
                heading: None,
                synthetic: false,
            },
        ];
        let mut buf = Vec::new();
        write_ais_csv(&mut buf, &recs).unwrap();
        assert_eq!(read_ais_csv(buf.as_slice(), "mem").unwrap(), recs);
    }

    #[test]
    fn ais_errors_name_the_line() {
        let text = "mmsi,t,lon,lat,sog,cog,heading\n413000001,5,114,30,1,1,1\n413000001,4,114,30,1,1,1\n";
        match read_ais_csv(text.as_bytes(), "a.csv").unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("{e:?}"),
        }
        let text = "mmsi,t,lon,lat,sog,cog,heading\n413000001,5,abc,30,1,1,511\n";
        match read_ais_csv(text.as_bytes(), "a.csv").unwrap_err() {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 2);
                assert!(message.contains("lon"));
            }
            e => panic!("{e:?}"),
        }
        let text = "mmsi,t,lon,lat,sog,cog,heading\n413000001,5,114,30,1,1,511\n";
        assert_eq!(read_ais_csv(text.as_bytes(), "a.csv").unwrap()[0].heading, None);
    }

    #[test]
    fn detections_round_trip_and_normalize() {
        let text = "{\"t\":3,\"detections\":[{\"box\":[1,2,11,12],\"confidence\":0.5,\"embedding\":[3,4]}]}\n\n\
                    {\"t\":4,\"detections\":[]}\n";
        let frames = read_detections_jsonl(text.as_bytes(), "d").unwrap();
        assert_eq!(frames.len(), 2);
        assert_eq!(frames[0].1[0].embedding, Some(vec![0.6, 0.8]));
        let mut buf = Vec::new();
        write_detections_jsonl(&mut buf, &frames).unwrap();
        assert_eq!(read_detections_jsonl(buf.as_slice(), "d").unwrap(), frames);

        let bad = "{\"t\":4,\"detections\":[]}\n{\"t\":4,\"detections\":[]}\n";
        assert!(matches!(read_detections_jsonl(bad.as_bytes(), "d"), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn gt_round_trip() {
        let gts = vec![
            GroundTruthRecord {
                t: 1,
                mmsi: Some(413_000_001),
                track_id: 1,
                rect: Rect::new(1.0, 2.0, 3.0, 4.0).unwrap(),
            },
            GroundTruthRecord {
                t: 1,
                mmsi: None,
                track_id: 2,
                rect: Rect::new(5.0, 6.0, 7.5, 8.25).unwrap(),
            },
        ];
        let mut buf = Vec::new();
        write_gt_csv(&mut buf, &gts).unwrap();
        assert_eq!(read_gt_csv(buf.as_slice(), "g").unwrap(), gts);
    }
}
