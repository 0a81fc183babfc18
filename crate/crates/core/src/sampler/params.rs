//! Learnable weights and the `.sparams` binary format.
//!
//! `.sparams` layout (little-endian): magic `SPRM`, `u32` version (1), then
//! `u32` N, r, k, blocks, C, D; then `f32` values: for each block
//! theta weight (C x (C+2), row-major), theta bias (C), sigma weight
//! (C x (2C+2)), sigma bias (C); finally projection weight (D x P*C) and
//! projection bias (D), with P = N / r^blocks.

use std::io::{Read, Write};
use std::path::Path;

use super::config::SamplerConfig;
use super::rng::{SplitRng, STREAM_INIT};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"SPRM";
const VERSION: u32 = 1;

/// Affine map `y = W x + b` with row-major `W` of shape `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weight: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    /// Uniform(-a, a) with a = fan_in^(-1/2), weights then biases.
    pub fn init(in_dim: usize, out_dim: usize, rng: &mut SplitRng) -> Self {
        let a = (in_dim as f64).powf(-0.5);
        let mut draw = || (rng.uniform() * 2.0 - 1.0) * a;
        let weight = (0..in_dim * out_dim).map(|_| draw()).collect();
        let bias = (0..out_dim).map(|_| draw()).collect();
        Self {
            in_dim,
            out_dim,
            weight,
            bias,
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.in_dim);
        self.weight
            .chunks_exact(self.in_dim)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }

    /// Accumulates `dW += dy x^T`, `db += dy` and returns `W^T dy`.
    pub fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Linear) -> Vec<f64> {
        let mut dx = vec![0.0; self.in_dim];
        for (o, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad.bias[o] += g;
            let row = &self.weight[o * self.in_dim..(o + 1) * self.in_dim];
            let grow = &mut grad.weight[o * self.in_dim..(o + 1) * self.in_dim];
            for i in 0..self.in_dim {
                grow[i] += g * x[i];
                dx[i] += g * row[i];
            }
        }
        dx
    }

    fn check(&self, in_dim: usize, out_dim: usize, what: &str) -> Result<()> {
        if self.in_dim != in_dim
            || self.out_dim != out_dim
            || self.weight.len() != in_dim * out_dim
            || self.bias.len() != out_dim
        {
            return Err(Error::ShapeMismatch(format!(
                "{what}: expected {out_dim}x{in_dim}, got {}x{} ({} weights, {} biases)",
                self.out_dim,
                self.in_dim,
                self.weight.len(),
                self.bias.len()
            )));
        }
        if self.weight.iter().chain(&self.bias).any(|v| !v.is_finite()) {
            return Err(Error::OutOfRange(format!("{what}: non-finite parameter")));
        }
        Ok(())
    }
}

/// theta: (C+2) -> C on relative features; sigma: (2C+2) -> C fusing them
/// with the center's own feature and coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams {
    pub theta: Linear,
    pub sigma: Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerParams {
    pub blocks: Vec<BlockParams>,
    pub projection: Linear,
}

impl SamplerParams {
    pub fn zeros(cfg: &SamplerConfig) -> Self {
        let c = cfg.channels;
        Self {
            blocks: (0..cfg.blocks)
                .map(|_| BlockParams {
                    theta: Linear::zeros(c + 2, c),
                    sigma: Linear::zeros(2 * c + 2, c),
                })
                .collect(),
            projection: Linear::zeros(cfg.flat_dim(), cfg.dim),
        }
    }

    pub fn init(cfg: &SamplerConfig, seed: u64) -> Self {
        let c = cfg.channels;
        let mut rng = SplitRng::new(seed, STREAM_INIT);
        let blocks = (0..cfg.blocks)
            .map(|_| {
                let theta = Linear::init(c + 2, c, &mut rng);
                let sigma = Linear::init(2 * c + 2, c, &mut rng);
                BlockParams { theta, sigma }
            })
            .collect();
        let projection = Linear::init(cfg.flat_dim(), cfg.dim, &mut rng);
        Self { blocks, projection }
    }

    pub fn validate(&self, cfg: &SamplerConfig) -> Result<()> {
        cfg.validate()?;
        if self.blocks.len() != cfg.blocks {
            return Err(Error::ShapeMismatch(format!(
                "{} block parameter sets for {} blocks",
                self.blocks.len(),
                cfg.blocks
            )));
        }
        let c = cfg.channels;
        for (b, bp) in self.blocks.iter().enumerate() {
            bp.theta.check(c + 2, c, &format!("block {b} theta"))?;
            bp.sigma.check(2 * c + 2, c, &format!("block {b} sigma"))?;
        }
        self.projection.check(cfg.flat_dim(), cfg.dim, "projection")
    }

    /// Every parameter array in serialization order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for bp in &self.blocks {
            out.extend([&bp.theta.weight[..], &bp.theta.bias, &bp.sigma.weight, &bp.sigma.bias]);
        }
        out.extend([&self.projection.weight[..], &self.projection.bias]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = Vec::new();
        for bp in &mut self.blocks {
            out.push(&mut bp.theta.weight);
            out.push(&mut bp.theta.bias);
            out.push(&mut bp.sigma.weight);
            out.push(&mut bp.sigma.bias);
        }
        out.push(&mut self.projection.weight);
        out.push(&mut self.projection.bias);
        out
    }

    pub fn tensor_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for b in 0..self.blocks.len() {
            for t in ["theta.weight", "theta.bias", "sigma.weight", "sigma.bias"] {
                out.push(format!("block{b}.{t}"));
            }
        }
        out.push("projection.weight".into());
        out.push("projection.bias".into());
        out
    }

    pub fn write_sparams(&self, cfg: &SamplerConfig, mut w: impl Write) -> Result<()> {
        self.validate(cfg)?;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        for v in [cfg.n_points, cfg.ratio, cfg.k, cfg.blocks, cfg.channels, cfg.dim] {
            let v = u32::try_from(v).map_err(|_| Error::Format(format!("{v} exceeds u32")))?;
            w.write_all(&v.to_le_bytes())?;
        }
        for t in self.tensors() {
            for &v in t {
                w.write_all(&(v as f32).to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_sparams(mut r: impl Read) -> Result<(SamplerConfig, Self)> {
        let mut hdr = [0u8; 32];
        r.read_exact(&mut hdr)
            .map_err(|e| Error::Format(format!("sparams header: {e}")))?;
        if &hdr[..4] != MAGIC {
            return Err(Error::Format("not a .sparams file".into()));
        }
        let word = |i: usize| u32::from_le_bytes(hdr[i * 4..i * 4 + 4].try_into().unwrap());
        if word(1) != VERSION {
            return Err(Error::Format(format!("unsupported sparams version {}", word(1))));
        }
        let cfg = SamplerConfig {
            n_points: word(2) as usize,
            ratio: word(3) as usize,
            k: word(4) as usize,
            blocks: word(5) as usize,
            channels: word(6) as usize,
            dim: word(7) as usize,
        };
        cfg.validate()?;
        let mut params = Self::zeros(&cfg);
        let expected: usize = params.tensors().iter().map(|t| t.len()).sum();
        let mut payload = Vec::new();
        r.read_to_end(&mut payload)?;
        if payload.len() != expected * 4 {
            return Err(Error::Format(format!(
                "sparams payload has {} bytes, header implies {}",
                payload.len(),
                expected * 4
            )));
        }
        let mut vals = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64);
        for t in params.tensors_mut() {
            for v in t.iter_mut() {
                *v = vals.next().unwrap();
            }
        }
        params.validate(&cfg)?;
        Ok((cfg, params))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(SamplerConfig, Self)> {
        Self::read_sparams(std::io::BufReader::new(std::fs::File::open(path)?))
    }

    pub fn save(&self, cfg: &SamplerConfig, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_sparams(cfg, &mut f)?;
        f.flush()?;
        Ok(())
    }
}
