//! Dense `H x W x C` feature grids with continuous bilinear lookup, plus
//! the `.fmap` binary format.
//!
//! `.fmap` layout (little-endian): `H: i32, W: i32, C: i32` followed by
//! `H * W * C` `f32` values in row-major `(y, x, c)` order.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::ImageSize;
use crate::sampler::rng::SplitRng;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

/// The four grid cells and weights a bilinear lookup blends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BilinearTaps {
    pub cells: [usize; 4],
    pub weights: [f64; 4],
}

impl FeatureMap {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::ShapeMismatch(format!("feature map {height}x{width}x{channels}")));
        }
        if data.len() != height * width * channels {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {height}x{width}x{channels}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::OutOfRange(format!("non-finite feature at {i}")));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        f: impl Fn(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c));
                }
            }
        }
        Self::new(height, width, channels, data)
    }

    pub fn constant(height: usize, width: usize, value: &[f64]) -> Result<Self> {
        Self::from_fn(height, width, value.len(), |_, _, c| value[c])
    }

    /// Seeded uniform values in `[-1, 1)`.
    pub fn random(height: usize, width: usize, channels: usize, seed: u64) -> Result<Self> {
        let mut rng = SplitRng::new(seed, 0);
        let data = (0..height * width * channels)
            .map(|_| rng.uniform() * 2.0 - 1.0)
            .collect();
        Self::new(height, width, channels, data)
    }

    /// Channel `c` holds `(c + 1) * x` (axis 0) or `(c + 1) * y` (axis 1).
    pub fn ramp(height: usize, width: usize, channels: usize, along_y: bool) -> Result<Self> {
        Self::from_fn(height, width, channels, |y, x, c| {
            let t = if along_y { y } else { x } as f64;
            (c + 1) as f64 * t
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn cell(&self, x: usize, y: usize) -> &[f64] {
        let i = self.cell_index(x, y);
        &self.data[i * self.channels..(i + 1) * self.channels]
    }

    pub fn cell_index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    fn check_coord(&self, x: f64, y: f64) -> Result<()> {
        let (xmax, ymax) = ((self.width - 1) as f64, (self.height - 1) as f64);
        if !(x.is_finite() && y.is_finite() && (0.0..=xmax).contains(&x) && (0.0..=ymax).contains(&y)) {
            return Err(Error::OutOfRange(format!(
                "grid coordinate ({x}, {y}) outside [0, {xmax}]x[0, {ymax}]"
            )));
        }
        Ok(())
    }

    /// Lower cell index and fractional offset along one axis. The upper
    /// edge uses the last cell pair so the fraction reaches exactly 1.
    fn axis(t: f64, n: usize) -> (usize, usize, f64) {
        if n == 1 {
            return (0, 0, 0.0);
        }
        let lo = (t.floor() as usize).min(n - 2);
        (lo, lo + 1, t - lo as f64)
    }

    pub fn taps(&self, x: f64, y: f64) -> Result<BilinearTaps> {
        self.check_coord(x, y)?;
        let (x0, x1, fx) = Self::axis(x, self.width);
        let (y0, y1, fy) = Self::axis(y, self.height);
        Ok(BilinearTaps {
            cells: [
                self.cell_index(x0, y0),
                self.cell_index(x1, y0),
                self.cell_index(x0, y1),
                self.cell_index(x1, y1),
            ],
            weights: [(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy],
        })
    }

    pub fn gather(&self, taps: &BilinearTaps) -> Vec<f64> {
        let c = self.channels;
        let mut out = vec![0.0; c];
        for (&cell, &w) in taps.cells.iter().zip(&taps.weights) {
            if w == 0.0 {
                continue;
            }
            for (o, v) in out.iter_mut().zip(&self.data[cell * c..(cell + 1) * c]) {
                *o += w * v;
            }
        }
        out
    }

    /// Four-neighbour bilinear blend at grid coordinate `(x, y)`.
    pub fn bilinear(&self, x: f64, y: f64) -> Result<Vec<f64>> {
        Ok(self.gather(&self.taps(x, y)?))
    }

    /// Value plus its partial derivatives along x and y.
    pub fn bilinear_with_grad(&self, x: f64, y: f64) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        self.check_coord(x, y)?;
        let (x0, x1, fx) = Self::axis(x, self.width);
        let (y0, y1, fy) = Self::axis(y, self.height);
        let (v00, v10) = (self.cell(x0, y0), self.cell(x1, y0));
        let (v01, v11) = (self.cell(x0, y1), self.cell(x1, y1));
        let c = self.channels;
        let (mut val, mut dx, mut dy) = (vec![0.0; c], vec![0.0; c], vec![0.0; c]);
        let sx = if self.width > 1 { 1.0 } else { 0.0 };
        let sy = if self.height > 1 { 1.0 } else { 0.0 };
        for k in 0..c {
            let top = v00[k] + fx * (v10[k] - v00[k]);
            let bot = v01[k] + fx * (v11[k] - v01[k]);
            val[k] = top + fy * (bot - top);
            dx[k] = sx * ((1.0 - fy) * (v10[k] - v00[k]) + fy * (v11[k] - v01[k]));
            dy[k] = sy * (bot - top);
        }
        Ok((val, dx, dy))
    }

    pub fn write_fmap(&self, mut w: impl Write) -> Result<()> {
        for dim in [self.height, self.width, self.channels] {
            let d = i32::try_from(dim).map_err(|_| Error::Format(format!("dimension {dim} exceeds i32")))?;
            w.write_all(&d.to_le_bytes())?;
        }
        for &v in &self.data {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_fmap(mut r: impl Read) -> Result<Self> {
        let mut hdr = [0u8; 12];
        r.read_exact(&mut hdr)
            .map_err(|e| Error::Format(format!("fmap header: {e}")))?;
        let dim = |i: usize| -> Result<usize> {
            let v = i32::from_le_bytes(hdr[i * 4..i * 4 + 4].try_into().unwrap());
            usize::try_from(v).map_err(|_| Error::Format(format!("negative fmap dimension {v}")))
        };
        let (h, w, c) = (dim(0)?, dim(1)?, dim(2)?);
        let n = h
            .checked_mul(w)
            .and_then(|v| v.checked_mul(c))
            .ok_or_else(|| Error::Format("fmap dimensions overflow".into()))?;
        let mut payload = Vec::new();
        r.read_to_end(&mut payload)?;
        if payload.len() != n * 4 {
            return Err(Error::Format(format!(
                "fmap payload has {} bytes, header implies {}",
                payload.len(),
                n * 4
            )));
        }
        let data = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect();
        Self::new(h, w, c, data)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_fmap(std::io::BufReader::new(std::fs::File::open(path)?))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_fmap(&mut f)?;
        f.flush()?;
        Ok(())
    }
}

/// Maps the center of image pixel `(px, py)` onto the feature grid with
/// align-centers scaling, clamped into the valid bilinear range.
pub fn mask_to_featmap_coords(px: f64, py: f64, image: ImageSize, map: &FeatureMap) -> (f64, f64) {
    let gx = (px + 0.5) / image.width as f64 * map.width as f64 - 0.5;
    let gy = (py + 0.5) / image.height as f64 * map.height as f64 - 0.5;
    (
        gx.clamp(0.0, (map.width - 1) as f64),
        gy.clamp(0.0, (map.height - 1) as f64),
    )
}
