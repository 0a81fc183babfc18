//! Spatial-aware visual sampler: mask + feature map -> fixed-size region
//! feature, with reverse-mode gradients.
//!
//! Forward pipeline: sample N positive points in the mask, look up their
//! features bilinearly, run `blocks` FPS/kNN/fuse/max-pool blocks (each
//! keeping `1/r` of its input), flatten the surviving points' features in
//! output order and project them to `D` dimensions.
//!
//! Backward holds every discrete choice of the forward pass fixed (sampled
//! pixels, FPS picks, kNN lists, pooling winners) and differentiates the
//! remaining piecewise-linear map.

pub mod block;
pub mod config;
pub mod params;
pub mod points;
pub mod rng;

use std::sync::atomic::{AtomicU64, Ordering};

pub use block::{block_forward, block_forward_with_centers, BlockTrace};
pub use config::SamplerConfig;
pub use params::{BlockParams, Linear, SamplerParams};
pub use points::{fps, fps_from, knn, sample_positive_points, PointSet};

use crate::error::{Error, Result};
use crate::featmap::{mask_to_featmap_coords, BilinearTaps, FeatureMap};
use crate::geometry::BinaryMask;

static NEXT_SAMPLER_ID: AtomicU64 = AtomicU64::new(1);

/// The `D`-dimensional feature that replaces a `<SPE>` placeholder.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionFeature(pub Vec<f64>);

impl RegionFeature {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Forward-pass record consumed by [`SpatialSampler::backward`].
#[derive(Debug, Clone)]
pub struct Tape {
    sampler_id: u64,
    fmap_len: usize,
    channels: usize,
    taps: Vec<BilinearTaps>,
    block_inputs: Vec<PointSet>,
    traces: Vec<BlockTrace>,
    final_points: PointSet,
    flat: Vec<f64>,
}

impl Tape {
    /// Positions and features of the points sampled inside the mask.
    pub fn initial_points(&self) -> &PointSet {
        &self.block_inputs[0]
    }

    pub fn block_input(&self, b: usize) -> &PointSet {
        &self.block_inputs[b]
    }

    pub fn traces(&self) -> &[BlockTrace] {
        &self.traces
    }

    /// Points left after the last block, in flatten order.
    pub fn final_points(&self) -> &PointSet {
        &self.final_points
    }

    pub fn flattened(&self) -> &[f64] {
        &self.flat
    }

    /// Point count after each block.
    pub fn block_output_counts(&self) -> Vec<usize> {
        self.traces.iter().map(|t| t.centers.len()).collect()
    }

    /// Pooling winners of every block, for detecting tie crossings.
    pub fn argmax_pattern(&self) -> Vec<usize> {
        self.traces.iter().flat_map(|t| t.argmax.iter().copied()).collect()
    }
}

/// Gradients with the same layout as [`SamplerParams`] and the input map.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerGrads {
    pub params: SamplerParams,
    /// Same layout as [`FeatureMap::data`].
    pub featmap: Vec<f64>,
}

/// A configured sampler with fixed weights.
#[derive(Debug)]
pub struct SpatialSampler {
    id: u64,
    cfg: SamplerConfig,
    params: SamplerParams,
}

impl SpatialSampler {
    pub fn new(cfg: SamplerConfig, params: SamplerParams) -> Result<Self> {
        params.validate(&cfg)?;
        Ok(Self {
            id: NEXT_SAMPLER_ID.fetch_add(1, Ordering::Relaxed),
            cfg,
            params,
        })
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.cfg
    }

    pub fn params(&self) -> &SamplerParams {
        &self.params
    }

    pub fn forward(&self, mask: &BinaryMask, fmap: &FeatureMap, seed: u64) -> Result<(RegionFeature, Tape)> {
        let cfg = &self.cfg;
        if fmap.channels() != cfg.channels {
            return Err(Error::ShapeMismatch(format!(
                "feature map has {} channels, sampler expects {}",
                fmap.channels(),
                cfg.channels
            )));
        }
        let coords = sample_positive_points(mask, cfg.n_points, seed)?;
        let image = mask.size();
        let mut taps = Vec::with_capacity(coords.len());
        let mut feats = Vec::with_capacity(coords.len() * cfg.channels);
        for p in coords.positions() {
            // positions are pixel centers; undo the +0.5 for the pixel index
            let (gx, gy) = mask_to_featmap_coords(p[0] - 0.5, p[1] - 0.5, image, fmap);
            let t = fmap.taps(gx, gy)?;
            feats.extend(fmap.gather(&t));
            taps.push(t);
        }
        let mut current = coords.with_features(cfg.channels, feats)?;
        let mut block_inputs = Vec::with_capacity(cfg.blocks);
        let mut traces = Vec::with_capacity(cfg.blocks);
        for (b, bp) in self.params.blocks.iter().enumerate() {
            let (next, trace) = block_forward(&current, cfg.ratio, cfg.k, bp, seed, b)?;
            block_inputs.push(current);
            traces.push(trace);
            current = next;
        }
        let flat = current.features().to_vec();
        let out = self.params.projection.forward(&flat);
        let tape = Tape {
            sampler_id: self.id,
            fmap_len: fmap.data().len(),
            channels: cfg.channels,
            taps,
            block_inputs,
            traces,
            final_points: current,
            flat,
        };
        Ok((RegionFeature(out), tape))
    }

    /// Reverse-mode gradients of `upstream . output` for all parameters and
    /// feature-map values.
    pub fn backward(&self, tape: &Tape, upstream: &[f64]) -> Result<SamplerGrads> {
        if tape.sampler_id != self.id {
            return Err(Error::ForeignTape);
        }
        if upstream.len() != self.cfg.dim {
            return Err(Error::LengthMismatch(upstream.len(), self.cfg.dim));
        }
        let c = tape.channels;
        let mut grads = SamplerParams::zeros(&self.cfg);
        let mut d_feat = self
            .params
            .projection
            .backward(&tape.flat, upstream, &mut grads.projection);

        for b in (0..self.cfg.blocks).rev() {
            let input = &tape.block_inputs[b];
            let trace = &tape.traces[b];
            let bp = &self.params.blocks[b];
            let gp = &mut grads.blocks[b];
            let mut d_in = vec![0.0; input.len() * c];
            for (slot, &ci) in trace.centers.iter().enumerate() {
                for (j, &nb) in trace.neighbors_of(slot).iter().enumerate() {
                    let mut dh = vec![0.0; c];
                    let mut any = false;
                    for ch in 0..c {
                        if trace.argmax[slot * c + ch] == j {
                            dh[ch] = d_feat[slot * c + ch];
                            any |= dh[ch] != 0.0;
                        }
                    }
                    if !any {
                        continue;
                    }
                    let o = (slot * trace.k + j) * c;
                    let t = &trace.theta_out[o..o + c];
                    let dv = bp.sigma.backward(&block::sigma_input(input, ci, t), &dh, &mut gp.sigma);
                    for ch in 0..c {
                        d_in[ci * c + ch] += dv[c + ch];
                    }
                    let du = bp
                        .theta
                        .backward(&block::theta_input(input, ci, nb), &dv[..c], &mut gp.theta);
                    for ch in 0..c {
                        d_in[nb * c + ch] += du[ch];
                        d_in[ci * c + ch] -= du[ch];
                    }
                }
            }
            d_feat = d_in;
        }

        let mut featmap = vec![0.0; tape.fmap_len];
        for (p, t) in tape.taps.iter().enumerate() {
            for (&cell, &w) in t.cells.iter().zip(&t.weights) {
                if w == 0.0 {
                    continue;
                }
                for ch in 0..c {
                    featmap[cell * c + ch] += w * d_feat[p * c + ch];
                }
            }
        }
        Ok(SamplerGrads { params: grads, featmap })
    }
}

/// One-shot forward without keeping the sampler around.
pub fn sampler_forward(
    mask: &BinaryMask,
    fmap: &FeatureMap,
    cfg: SamplerConfig,
    params: SamplerParams,
    seed: u64,
) -> Result<RegionFeature> {
    Ok(SpatialSampler::new(cfg, params)?.forward(mask, fmap, seed)?.0)
}
