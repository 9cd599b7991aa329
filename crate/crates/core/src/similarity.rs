//! Trajectory similarity: exact DTW, multilevel FastDTW and the direction-weighted score
//! `S(X, Y) = Dis(W) * e^phi`, where `phi` is the angle in radians between the two series'
//! end-to-end displacement vectors.

use crate::geo::PixelPoint;
use crate::{Error, Result, Scalar, Seconds};

#[derive(Debug, Clone, PartialEq)]
pub struct PixelSeries<T = f64> {
    points: Vec<PixelPoint<T>>,
    times: Vec<Seconds>,
}

impl<T: Scalar> PixelSeries<T> {
    pub fn new(points: Vec<PixelPoint<T>>, times: Vec<Seconds>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("pixel series must not be empty"));
        }
        if points.len() != times.len() {
            return Err(Error::invalid("points and timestamps differ in length"));
        }
        if times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid("timestamps must be non-decreasing"));
        }
        if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::invalid("pixel series must be finite"));
        }
        Ok(Self { points, times })
    }

    /// Series with implicit timestamps `0, 1, 2, ...`.
    pub fn from_points(points: Vec<PixelPoint<T>>) -> Result<Self> {
        let times = (0..points.len() as Seconds).collect();
        Self::new(points, times)
    }

    pub fn from_xy(xy: &[(T, T)]) -> Result<Self> {
        Self::from_points(xy.iter().map(|&(x, y)| PixelPoint::new(x, y)).collect())
    }

    pub fn points(&self) -> &[PixelPoint<T>] {
        &self.points
    }

    pub fn times(&self) -> &[Seconds] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first(&self) -> PixelPoint<T> {
        self.points[0]
    }

    pub fn last(&self) -> PixelPoint<T> {
        self.points[self.points.len() - 1]
    }

    /// Same series shifted by `(dx, dy)`.
    pub fn translated(&self, dx: T, dy: T) -> Self {
        Self {
            points: self.points.iter().map(|p| PixelPoint::new(p.x + dx, p.y + dy)).collect(),
            times: self.times.clone(),
        }
    }

    /// Halves the resolution by averaging consecutive pairs; an odd tail point is carried.
    fn coarsened(&self) -> Vec<PixelPoint<T>> {
        let two = T::lit(2.0);
        self.points
            .chunks(2)
            .map(|c| match c {
                [a, b] => PixelPoint::new((a.x + b.x) / two, (a.y + b.y) / two),
                [a] => *a,
                _ => unreachable!(),
            })
            .collect()
    }
}

/// Alignment between two series as 0-based `(p, q)` index pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WarpPath {
    pub pairs: Vec<(usize, usize)>,
}

impl WarpPath {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Checks the boundary, adjacency and monotonicity restrictions plus the length bounds
    /// `max(P, Q) <= C < P + Q`.
    pub fn validate(&self, p_len: usize, q_len: usize) -> std::result::Result<(), String> {
        let c = self.pairs.len();
        if p_len == 0 || q_len == 0 {
            return Err("series lengths must be positive".into());
        }
        if self.pairs.first() != Some(&(0, 0)) {
            return Err(format!("path must start at (0, 0), got {:?}", self.pairs.first()));
        }
        if self.pairs.last() != Some(&(p_len - 1, q_len - 1)) {
            return Err(format!(
                "path must end at ({}, {}), got {:?}",
                p_len - 1,
                q_len - 1,
                self.pairs.last()
            ));
        }
        for (k, w) in self.pairs.windows(2).enumerate() {
            let (p0, q0) = w[0];
            let (p1, q1) = w[1];
            if p1 < p0 || q1 < q0 {
                return Err(format!("non-monotone step at {k}: {:?} -> {:?}", w[0], w[1]));
            }
            let step = (p1 - p0, q1 - q0);
            if !matches!(step, (1, 0) | (0, 1) | (1, 1)) {
                return Err(format!("non-adjacent step at {k}: {:?} -> {:?}", w[0], w[1]));
            }
        }
        if c < p_len.max(q_len) || c >= p_len + q_len {
            return Err(format!("path length {c} outside [max(P,Q), P+Q)"));
        }
        Ok(())
    }

    /// Sum of point distances along the path.
    pub fn cost<T: Scalar>(&self, x: &PixelSeries<T>, y: &PixelSeries<T>) -> T {
        self.pairs
            .iter()
            .fold(T::zero(), |acc, &(p, q)| acc + x.points[p].distance(&y.points[q]))
    }
}

/// Per-row inclusive column ranges of the cells the dynamic program may visit.
struct Window {
    ranges: Vec<(usize, usize)>,
}

impl Window {
    fn full(p_len: usize, q_len: usize) -> Self {
        Self {
            ranges: vec![(0, q_len - 1); p_len],
        }
    }

    fn from_coarse_path(path: &WarpPath, radius: usize, p_len: usize, q_len: usize) -> Self {
        let mut ranges = vec![(usize::MAX, 0usize); p_len];
        for &(i, j) in &path.pairs {
            let row_lo = (2 * i).saturating_sub(radius);
            let row_hi = (2 * i + 1 + radius).min(p_len - 1);
            let col_lo = (2 * j).saturating_sub(radius);
            let col_hi = (2 * j + 1 + radius).min(q_len - 1);
            for r in ranges.iter_mut().take(row_hi + 1).skip(row_lo) {
                r.0 = r.0.min(col_lo);
                r.1 = r.1.max(col_hi);
            }
        }
        // Keep the band monotone so every admissible cell stays reachable.
        for p in 1..p_len {
            ranges[p].1 = ranges[p].1.max(ranges[p - 1].1);
        }
        for p in (0..p_len - 1).rev() {
            ranges[p].0 = ranges[p].0.min(ranges[p + 1].0);
        }
        ranges[0].0 = 0;
        ranges[p_len - 1].1 = q_len - 1;
        Self { ranges }
    }
}

fn windowed_dtw<T: Scalar>(x: &PixelSeries<T>, y: &PixelSeries<T>, window: &Window) -> (T, WarpPath) {
    let p_len = x.len();
    let inf = T::infinity();
    let mut acc: Vec<Vec<T>> = window
        .ranges
        .iter()
        .map(|&(lo, hi)| vec![inf; hi + 1 - lo])
        .collect();
    let get = |acc: &Vec<Vec<T>>, p: usize, q: usize| -> T {
        let (lo, hi) = window.ranges[p];
        if q < lo || q > hi {
            inf
        } else {
            acc[p][q - lo]
        }
    };
    for p in 0..p_len {
        let (lo, hi) = window.ranges[p];
        for q in lo..=hi {
            let d = x.points[p].distance(&y.points[q]);
            let best = if p == 0 && q == 0 {
                T::zero()
            } else {
                let mut b = inf;
                if p > 0 && q > 0 {
                    b = b.min(get(&acc, p - 1, q - 1));
                }
                if p > 0 {
                    b = b.min(get(&acc, p - 1, q));
                }
                if q > 0 {
                    b = b.min(get(&acc, p, q - 1));
                }
                b
            };
            acc[p][q - lo] = d + best;
        }
    }

    let q_len = y.len();
    let distance = get(&acc, p_len - 1, q_len - 1);
    let mut pairs = vec![(p_len - 1, q_len - 1)];
    let (mut p, mut q) = (p_len - 1, q_len - 1);
    while p > 0 || q > 0 {
        let (np, nq) = if p == 0 {
            (0, q - 1)
        } else if q == 0 {
            (p - 1, 0)
        } else {
            let diag = get(&acc, p - 1, q - 1);
            let up = get(&acc, p - 1, q);
            let left = get(&acc, p, q - 1);
            if diag <= up && diag <= left {
                (p - 1, q - 1)
            } else if up <= left {
                (p - 1, q)
            } else {
                (p, q - 1)
            }
        };
        p = np;
        q = nq;
        pairs.push((p, q));
    }
    pairs.reverse();
    (distance, WarpPath { pairs })
}

/// Exact DTW with Euclidean point distance over the full alignment matrix.
pub fn dtw_exact<T: Scalar>(x: &PixelSeries<T>, y: &PixelSeries<T>) -> Result<(T, WarpPath)> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::invalid("DTW requires non-empty series"));
    }
    Ok(windowed_dtw(x, y, &Window::full(x.len(), y.len())))
}

/// Multilevel FastDTW: coarsen by halving, solve recursively, project the path back and refine
/// within `radius` cells of it.
pub fn fastdtw<T: Scalar>(x: &PixelSeries<T>, y: &PixelSeries<T>, radius: usize) -> Result<(T, WarpPath)> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::invalid("FastDTW requires non-empty series"));
    }
    Ok(fastdtw_rec(x, y, radius))
}

fn fastdtw_rec<T: Scalar>(x: &PixelSeries<T>, y: &PixelSeries<T>, radius: usize) -> (T, WarpPath) {
    let min_size = radius + 2;
    if x.len() <= min_size || y.len() <= min_size {
        return windowed_dtw(x, y, &Window::full(x.len(), y.len()));
    }
    let cx = PixelSeries {
        times: (0..x.len().div_ceil(2) as Seconds).collect(),
        points: x.coarsened(),
    };
    let cy = PixelSeries {
        times: (0..y.len().div_ceil(2) as Seconds).collect(),
        points: y.coarsened(),
    };
    let (_, coarse_path) = fastdtw_rec(&cx, &cy, radius);
    let window = Window::from_coarse_path(&coarse_path, radius, x.len(), y.len());
    windowed_dtw(x, y, &window)
}

/// Angle in `[0, pi]` between the end-to-end displacement vectors; `0` when either series
/// has coincident first and last points.
pub fn direction_angle<T: Scalar>(x: &PixelSeries<T>, y: &PixelSeries<T>) -> T {
    let (ax, ay) = (x.last().x - x.first().x, x.last().y - x.first().y);
    let (bx, by) = (y.last().x - y.first().x, y.last().y - y.first().y);
    if (ax == T::zero() && ay == T::zero()) || (bx == T::zero() && by == T::zero()) {
        return T::zero();
    }
    let cross = ax * by - ay * bx;
    let dot = ax * bx + ay * by;
    cross.abs().atan2(dot)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Similarity<T = f64> {
    /// `Dis(W)`, optionally divided by the path length.
    pub distance: T,
    pub phi: T,
    pub score: T,
    pub path: WarpPath,
}

/// Direction-weighted FastDTW similarity. Lower is more similar.
pub fn e_fastdtw<T: Scalar>(x: &PixelSeries<T>, y: &PixelSeries<T>, radius: usize) -> Result<T> {
    e_fastdtw_detailed(x, y, radius, false).map(|s| s.score)
}

/// As [`e_fastdtw`], also returning the path and its parts. With `normalize` the path cost is
/// divided by the path length before weighting.
pub fn e_fastdtw_detailed<T: Scalar>(
    x: &PixelSeries<T>,
    y: &PixelSeries<T>,
    radius: usize,
    normalize: bool,
) -> Result<Similarity<T>> {
    let (raw, path) = fastdtw(x, y, radius)?;
    let distance = if normalize {
        raw / T::of_usize(path.len())
    } else {
        raw
    };
    let phi = direction_angle(x, y);
    Ok(Similarity {
        distance,
        phi,
        score: distance * phi.exp(),
        path,
    })
}
