//! Point sets, positive-point sampling, farthest point sampling and kNN.

use super::rng::{SplitRng, STREAM_FPS, STREAM_POINTS};
use crate::error::{Error, Result};
use crate::geometry::BinaryMask;

/// Points with pixel-unit positions and a per-point feature vector.
///
/// Normalized coordinates are `position / extent`; distances are measured
/// in normalized space from exact pixel differences, so translating a set
/// by whole pixels leaves every distance bit-identical.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    positions: Vec<[f64; 2]>,
    extent: [f64; 2],
    channels: usize,
    features: Vec<f64>,
}

impl PointSet {
    pub fn new(positions: Vec<[f64; 2]>, extent: [f64; 2], channels: usize, features: Vec<f64>) -> Result<Self> {
        if !(extent[0] > 0.0 && extent[1] > 0.0) {
            return Err(Error::ShapeMismatch(format!("point extent {extent:?}")));
        }
        if features.len() != positions.len() * channels {
            return Err(Error::ShapeMismatch(format!(
                "{} features for {} points x {channels} channels",
                features.len(),
                positions.len()
            )));
        }
        Ok(Self {
            positions,
            extent,
            channels,
            features,
        })
    }

    /// Points already in `[0, 1]^2`, without features.
    pub fn from_normalized(coords: Vec<[f64; 2]>) -> Self {
        Self {
            positions: coords,
            extent: [1.0, 1.0],
            channels: 0,
            features: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn extent(&self) -> [f64; 2] {
        self.extent
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    pub fn position(&self, i: usize) -> [f64; 2] {
        self.positions[i]
    }

    /// Normalized coordinate of point `i`.
    pub fn coord(&self, i: usize) -> [f64; 2] {
        let p = self.positions[i];
        [p[0] / self.extent[0], p[1] / self.extent[1]]
    }

    pub fn feature(&self, i: usize) -> &[f64] {
        &self.features[i * self.channels..(i + 1) * self.channels]
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn with_features(&self, channels: usize, features: Vec<f64>) -> Result<Self> {
        Self::new(self.positions.clone(), self.extent, channels, features)
    }

    pub fn select(&self, idx: &[usize], channels: usize, features: Vec<f64>) -> Result<Self> {
        let positions = idx.iter().map(|&i| self.positions[i]).collect();
        Self::new(positions, self.extent, channels, features)
    }

    /// Squared Euclidean distance in normalized coordinates.
    pub fn dist2(&self, a: usize, b: usize) -> f64 {
        let (pa, pb) = (self.positions[a], self.positions[b]);
        let dx = (pa[0] - pb[0]) / self.extent[0];
        let dy = (pa[1] - pb[1]) / self.extent[1];
        dx * dx + dy * dy
    }
}

/// Draws `n` pixel centers uniformly from the set pixels of `mask`: without
/// replacement when the mask has at least `n` pixels, with replacement
/// otherwise. Positions are pixel centers in image units.
pub fn sample_positive_points(mask: &BinaryMask, n: usize, seed: u64) -> Result<PointSet> {
    let mut pool: Vec<[f64; 2]> = mask.ones().map(|(x, y)| [x as f64 + 0.5, y as f64 + 0.5]).collect();
    if pool.is_empty() {
        return Err(Error::EmptyMask);
    }
    let mut rng = SplitRng::new(seed, STREAM_POINTS);
    let chosen = if pool.len() < n {
        (0..n).map(|_| pool[rng.index(pool.len())]).collect()
    } else {
        // partial Fisher-Yates
        for i in 0..n {
            let j = i + rng.index(pool.len() - i);
            pool.swap(i, j);
        }
        pool.truncate(n);
        pool
    };
    let extent = [mask.width() as f64, mask.height() as f64];
    PointSet::new(chosen, extent, 0, Vec::new())
}

/// Farthest point sampling with a seeded random start (stream `STREAM_FPS`).
pub fn fps(points: &PointSet, m: usize, seed: u64) -> Result<Vec<usize>> {
    fps_stream(points, m, seed, STREAM_FPS)
}

pub(crate) fn fps_stream(points: &PointSet, m: usize, seed: u64, stream: u64) -> Result<Vec<usize>> {
    check_count(m, points.len())?;
    if m == 0 {
        return Ok(Vec::new());
    }
    let start = SplitRng::new(seed, stream).index(points.len());
    fps_from(points, m, start)
}

/// Greedy max-min selection from a given first index. Each step takes the
/// unselected point farthest from the selected set, lowest index on ties.
pub fn fps_from(points: &PointSet, m: usize, start: usize) -> Result<Vec<usize>> {
    let n = points.len();
    check_count(m, n)?;
    if m == 0 {
        return Ok(Vec::new());
    }
    if start >= n {
        return Err(Error::OutOfRange(format!("start index {start} >= {n}")));
    }
    let mut picked = vec![false; n];
    let mut nearest = vec![f64::INFINITY; n];
    let mut out = Vec::with_capacity(m);
    let mut last = start;
    picked[last] = true;
    out.push(last);
    while out.len() < m {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..n {
            if picked[i] {
                continue;
            }
            let d = points.dist2(i, last);
            if d < nearest[i] {
                nearest[i] = d;
            }
            if best.is_none_or(|(_, bd)| nearest[i] > bd) {
                best = Some((i, nearest[i]));
            }
        }
        let (i, _) = best.expect("unselected point remains while out.len() < m <= n");
        picked[i] = true;
        out.push(i);
        last = i;
    }
    Ok(out)
}

/// The `k` points nearest to `query` (itself included), ascending by
/// distance with ties broken by lowest index.
pub fn knn(points: &PointSet, query: usize, k: usize) -> Result<Vec<usize>> {
    check_count(k, points.len())?;
    if query >= points.len() {
        return Err(Error::OutOfRange(format!("query index {query} >= {}", points.len())));
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    let mut order: Vec<(f64, usize)> = (0..points.len()).map(|i| (points.dist2(query, i), i)).collect();
    let by_dist = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < order.len() {
        order.select_nth_unstable_by(k - 1, by_dist);
        order.truncate(k);
    }
    order.sort_unstable_by(by_dist);
    Ok(order.into_iter().map(|(_, i)| i).collect())
}

fn check_count(m: usize, n: usize) -> Result<()> {
    if m > n {
        return Err(Error::OutOfRange(format!("requested {m} of {n} points")));
    }
    Ok(())
}
