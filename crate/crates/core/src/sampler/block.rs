//! One sampling / gathering / pooling block.
//!
//! For every FPS center `i` and each of its `k` neighbours `j`:
//!
//! ```text
//! h_ij = sigma([theta([Z(x_j) - Z(x_i); C(x_j) - C(x_i)]); Z(x_i); C(x_i)])
//! h_i  = max_j h_ij          (per channel)
//! ```
//!
//! where `Z` is the point feature and `C` its normalized coordinate.

use super::params::BlockParams;
use super::points::{fps_stream, knn, PointSet};
use super::rng::STREAM_FPS;
use crate::error::{Error, Result};

/// Everything a block chose or computed that backward needs.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockTrace {
    /// Indices into the block input, in output order.
    pub centers: Vec<usize>,
    /// `centers.len() x k` neighbour indices into the block input.
    pub neighbors: Vec<usize>,
    pub k: usize,
    /// theta outputs, `centers.len() x k x C`.
    pub theta_out: Vec<f64>,
    /// Fused features before pooling, `centers.len() x k x C`.
    pub fused: Vec<f64>,
    /// Winning neighbour slot per `(center, channel)`, lowest slot on ties.
    pub argmax: Vec<usize>,
}

impl BlockTrace {
    pub fn neighbors_of(&self, i: usize) -> &[usize] {
        &self.neighbors[i * self.k..(i + 1) * self.k]
    }

    /// `h_ij` for center slot `i`, neighbour slot `j`.
    pub fn fused_at(&self, i: usize, j: usize, channels: usize) -> &[f64] {
        let o = (i * self.k + j) * channels;
        &self.fused[o..o + channels]
    }
}

pub(crate) fn theta_input(input: &PointSet, center: usize, nb: usize) -> Vec<f64> {
    let c = input.channels();
    let mut u = Vec::with_capacity(c + 2);
    u.extend(input.feature(nb).iter().zip(input.feature(center)).map(|(a, b)| a - b));
    let (cn, cc) = (input.coord(nb), input.coord(center));
    u.push(cn[0] - cc[0]);
    u.push(cn[1] - cc[1]);
    u
}

pub(crate) fn sigma_input(input: &PointSet, center: usize, theta_out: &[f64]) -> Vec<f64> {
    let c = input.channels();
    let mut v = Vec::with_capacity(2 * c + 2);
    v.extend_from_slice(theta_out);
    v.extend_from_slice(input.feature(center));
    v.extend_from_slice(&input.coord(center));
    v
}

/// Runs the block with FPS drawn from `seed` on the block's own stream.
pub fn block_forward(
    input: &PointSet,
    ratio: usize,
    k: usize,
    params: &BlockParams,
    seed: u64,
    block_index: usize,
) -> Result<(PointSet, BlockTrace)> {
    if ratio == 0 || !input.len().is_multiple_of(ratio) {
        return Err(Error::ShapeMismatch(format!(
            "{} points not divisible by r={ratio}",
            input.len()
        )));
    }
    let centers = fps_stream(input, input.len() / ratio, seed, STREAM_FPS + block_index as u64)?;
    block_forward_with_centers(input, k, params, centers)
}

/// Gathering and pooling for an explicit list of centers.
pub fn block_forward_with_centers(
    input: &PointSet,
    k: usize,
    params: &BlockParams,
    centers: Vec<usize>,
) -> Result<(PointSet, BlockTrace)> {
    let c = input.channels();
    if params.theta.in_dim != c + 2 || params.theta.out_dim != c {
        return Err(Error::ShapeMismatch(format!(
            "theta is {}x{}, block has {c} channels",
            params.theta.out_dim, params.theta.in_dim
        )));
    }
    if params.sigma.in_dim != 2 * c + 2 || params.sigma.out_dim != c {
        return Err(Error::ShapeMismatch(format!(
            "sigma is {}x{}, block has {c} channels",
            params.sigma.out_dim, params.sigma.in_dim
        )));
    }
    if k == 0 {
        return Err(Error::InvalidConfig("k must be positive".into()));
    }
    let m = centers.len();
    let mut neighbors = Vec::with_capacity(m * k);
    let mut theta_out = Vec::with_capacity(m * k * c);
    let mut fused = Vec::with_capacity(m * k * c);
    let mut argmax = Vec::with_capacity(m * c);
    let mut out = Vec::with_capacity(m * c);

    for &ci in &centers {
        let nbs = knn(input, ci, k)?;
        let base = fused.len();
        for &nb in &nbs {
            let t = params.theta.forward(&theta_input(input, ci, nb));
            let h = params.sigma.forward(&sigma_input(input, ci, &t));
            theta_out.extend_from_slice(&t);
            fused.extend_from_slice(&h);
        }
        for ch in 0..c {
            let mut best = 0;
            for j in 1..k {
                if fused[base + j * c + ch] > fused[base + best * c + ch] {
                    best = j;
                }
            }
            argmax.push(best);
            out.push(fused[base + best * c + ch]);
        }
        neighbors.extend(nbs);
    }
    let output = input.select(&centers, c, out)?;
    Ok((
        output,
        BlockTrace {
            centers,
            neighbors,
            k,
            theta_out,
            fused,
            argmax,
        },
    ))
}
