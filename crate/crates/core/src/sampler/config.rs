use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyperparameters of the spatial-aware sampler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Points sampled inside the mask.
    pub n_points: usize,
    /// Downsample ratio of each block.
    pub ratio: usize,
    /// Neighbours gathered per center.
    pub k: usize,
    pub blocks: usize,
    /// Feature-map channels; every block maps C -> C.
    pub channels: usize,
    /// Output embedding dimension.
    pub dim: usize,
}

impl SamplerConfig {
    /// N=512, r=4, k=24, two blocks.
    pub fn standard(channels: usize, dim: usize) -> Self {
        Self {
            n_points: 512,
            ratio: 4,
            k: 24,
            blocks: 2,
            channels,
            dim,
        }
    }

    /// C=3, N=16, r=2, k=3, two blocks, D=5.
    pub fn tiny() -> Self {
        Self {
            n_points: 16,
            ratio: 2,
            k: 3,
            blocks: 2,
            channels: 3,
            dim: 5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [self.n_points, self.ratio, self.k, self.blocks, self.channels, self.dim];
        if fields.contains(&0) {
            return Err(Error::InvalidConfig(format!(
                "all sampler sizes must be positive: {self:?}"
            )));
        }
        let mut n = self.n_points;
        for b in 0..self.blocks {
            if !n.is_multiple_of(self.ratio) {
                return Err(Error::InvalidConfig(format!(
                    "block {b} input of {n} points is not divisible by r={}",
                    self.ratio
                )));
            }
            n /= self.ratio;
            if self.k > n {
                return Err(Error::InvalidConfig(format!(
                    "k={} exceeds {n} centers at block {b}",
                    self.k
                )));
            }
        }
        Ok(())
    }

    /// Point count entering block `b` (`b == blocks` gives the final count).
    pub fn points_at(&self, b: usize) -> usize {
        self.n_points / self.ratio.pow(b as u32)
    }

    pub fn out_points(&self) -> usize {
        self.points_at(self.blocks)
    }

    pub fn flat_dim(&self) -> usize {
        self.out_points() * self.channels
    }
}
