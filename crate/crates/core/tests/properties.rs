use proptest::prelude::*;
use vessel_fusion::ais::{clean, AisConfig, AisRecord, Mmsi};
use vessel_fusion::assignment::{brute_force, matching_cost, solve};
use vessel_fusion::config::CameraConfig;
use vessel_fusion::metrics::{id_scores, mofa};
use vessel_fusion::similarity::{dtw_exact, e_fastdtw, fastdtw};
use vessel_fusion::{CostMatrix, GeoPoint, PixelSeries};

fn series(max_len: usize) -> impl Strategy<Value = PixelSeries> {
    prop::collection::vec((-500.0..500.0f64, -500.0..500.0f64), 1..=max_len)
        .prop_map(|xy| PixelSeries::from_xy(&xy).unwrap())
}

fn finite_matrix() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..=5, 1usize..=6).prop_flat_map(|(r, c)| {
        let (r, c) = (r.min(c), r.max(c));
        prop::collection::vec(prop::collection::vec(-50i32..50, c), r)
            .prop_map(|rows| rows.into_iter().map(|row| row.into_iter().map(f64::from).collect()).collect())
    })
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn dtw_is_symmetric(x in series(20), y in series(20)) {
        let (a, _) = dtw_exact(&x, &y).unwrap();
        let (b, _) = dtw_exact(&y, &x).unwrap();
        prop_assert!(close(a, b, 1e-12));
        let n = x.len().max(y.len());
        prop_assert!(close(e_fastdtw(&x, &y, n).unwrap(), e_fastdtw(&y, &x, n).unwrap(), 1e-12));
    }

    #[test]
    fn similarity_ignores_common_translation(x in series(20), y in series(20), dx in -300.0..300.0f64, dy in -300.0..300.0f64) {
        let base = e_fastdtw(&x, &y, 1).unwrap();
        let moved = e_fastdtw(&x.translated(dx, dy), &y.translated(dx, dy), 1).unwrap();
        prop_assert!(close(base, moved, 1e-9), "{base} vs {moved}");
    }

    #[test]
    fn fastdtw_paths_are_valid_and_bounded(x in series(40), y in series(40), radius in 0usize..4) {
        let (exact, _) = dtw_exact(&x, &y).unwrap();
        let (approx, path) = fastdtw(&x, &y, radius).unwrap();
        prop_assert!(path.validate(x.len(), y.len()).is_ok());
        prop_assert!(approx >= exact - 1e-9 * exact.max(1.0));
        prop_assert!(close(path.cost(&x, &y), approx, 1e-12));
    }

    #[test]
    fn assignment_is_transpose_invariant(rows in finite_matrix()) {
        let c = CostMatrix::from_rows(rows).unwrap();
        let a = matching_cost(&c, &solve(&c).unwrap());
        let t = c.transpose();
        let b = matching_cost(&t, &solve(&t).unwrap());
        prop_assert_eq!(a, b);
    }

    #[test]
    fn row_constant_shifts_total(rows in finite_matrix(), row in 0usize..5, k in -20i32..20) {
        let c = CostMatrix::from_rows(rows.clone()).unwrap();
        let row = row % c.rows();
        let mut shifted = rows;
        for v in &mut shifted[row] {
            *v += f64::from(k);
        }
        let s = CostMatrix::from_rows(shifted).unwrap();
        let a = matching_cost(&c, &solve(&c).unwrap());
        let b = matching_cost(&s, &solve(&s).unwrap());
        prop_assert_eq!(b, a + f64::from(k));
    }

    #[test]
    fn solve_matches_brute_force_with_forbidden_cells(
        cells in prop::collection::vec(prop_oneof![8 => (-30i32..30).prop_map(f64::from), 1 => Just(f64::INFINITY), 1 => Just(f64::NEG_INFINITY)], 1..=20),
        cols in 1usize..=5,
    ) {
        let rows: Vec<Vec<f64>> = cells.chunks(cols).filter(|r| r.len() == cols).map(<[f64]>::to_vec).collect();
        prop_assume!(!rows.is_empty());
        let c = CostMatrix::from_rows(rows).unwrap();
        let forced: Vec<(usize, usize)> = (0..c.rows())
            .flat_map(|r| (0..c.cols()).map(move |col| (r, col)))
            .filter(|&(r, col)| c.get(r, col) == f64::NEG_INFINITY)
            .collect();
        let conflict = forced.iter().enumerate().any(|(i, a)| forced[i + 1..].iter().any(|b| a.0 == b.0 || a.1 == b.1));
        if conflict {
            prop_assert!(solve(&c).is_err());
            return Ok(());
        }
        let s = solve(&c).unwrap();
        let b = brute_force(&c).unwrap();
        prop_assert!(forced.iter().all(|f| s.contains(f)));
        prop_assert_eq!(s.len(), b.len());
        prop_assert_eq!(matching_cost(&c, &s), matching_cost(&c, &b));
        prop_assert!(s.iter().all(|&(r, col)| c.get(r, col) != f64::INFINITY));
    }

    #[test]
    fn idf1_is_harmonic_mean(tp in 0u64..10_000, fp in 0u64..10_000, fn_count in 0u64..10_000) {
        let s = id_scores::<f64>(tp, fp, fn_count);
        if let (Some(p), Some(r), Some(f)) = (s.idp, s.idr, s.idf1) {
            if p + r > 0.0 {
                prop_assert!((f - 2.0 * p * r / (p + r)).abs() < 1e-12);
            }
        }
        if tp + fn_count > 0 {
            let m: f64 = mofa(fn_count, 0, tp + fn_count).unwrap();
            prop_assert!((m - s.idr.unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn cleaning_is_idempotent(
        raw in prop::collection::vec(
            (prop_oneof![Just(413_000_001u32), Just(413_000_002), Just(12_345)], 0i64..30, -0.05..0.05f64, -0.05..0.05f64, -5.0..60.0f64, -10.0..370.0f64, prop::option::of(0.0..360.0f64)),
            0..40,
        ),
    ) {
        let cam = CameraConfig::default().model().unwrap();
        let cfg = AisConfig::default();
        let records: Vec<AisRecord> = raw
            .into_iter()
            .map(|(m, t, dlon, dlat, sog, cog, heading)| AisRecord {
                mmsi: Mmsi(m),
                t,
                pos: GeoPoint { lon: 114.3 + dlon, lat: 30.6 + dlat },
                sog,
                cog,
                heading,
                synthetic: false,
            })
            .collect();
        let once = clean(&records, &cam, 25, &cfg);
        let twice = clean(&once, &cam, 25, &cfg);
        prop_assert_eq!(&once, &twice);
        prop_assert!(once.iter().all(|r| r.t <= 25 && r.mmsi.is_valid()));
    }
}
