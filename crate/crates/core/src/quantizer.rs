//! Discrete coordinate bins and the textual hybrid region encoding
//! `name [b1, b2, b3, b4] <SPE>`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{bounding_box, rasterize, BBox, ImageSize, Region};

/// Placeholder later replaced by the sampler's region feature.
pub const SPE_TOKEN: &str = "<SPE>";

pub const DEFAULT_N_BINS: u32 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantizerConfig {
    pub n_bins: u32,
}

impl Default for QuantizerConfig {
    fn default() -> Self {
        Self { n_bins: DEFAULT_N_BINS }
    }
}

impl QuantizerConfig {
    pub fn new(n_bins: u32) -> Result<Self> {
        if n_bins < 2 {
            return Err(Error::InvalidConfig(format!("n_bins must be >= 2, got {n_bins}")));
        }
        Ok(Self { n_bins })
    }

    pub fn quantize(&self, coord: f64, extent: f64) -> Result<u32> {
        quantize(coord, extent, *self)
    }

    pub fn dequantize(&self, bin: u32, extent: f64) -> Result<f64> {
        dequantize(bin, extent, *self)
    }
}

/// Maps `coord` in `[0, extent]` to `floor(coord * n_bins / extent)`, with
/// the right edge clamped into the last bin.
pub fn quantize(coord: f64, extent: f64, cfg: QuantizerConfig) -> Result<u32> {
    if !(extent.is_finite() && extent > 0.0) {
        return Err(Error::OutOfRange(format!("extent {extent}")));
    }
    if !(coord.is_finite() && (0.0..=extent).contains(&coord)) {
        return Err(Error::OutOfRange(format!("coordinate {coord} outside [0, {extent}]")));
    }
    let n = cfg.n_bins as f64;
    let bin = (coord * n / extent).floor();
    Ok((bin as u32).min(cfg.n_bins - 1))
}

/// Center of `bin` in pixel units.
pub fn dequantize(bin: u32, extent: f64, cfg: QuantizerConfig) -> Result<f64> {
    if bin >= cfg.n_bins {
        return Err(Error::OutOfRange(format!("bin {bin} >= n_bins {}", cfg.n_bins)));
    }
    Ok((bin as f64 + 0.5) * extent / cfg.n_bins as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BinBox(pub [u32; 4]);

impl BinBox {
    pub fn is_valid(&self, n_bins: u32) -> bool {
        let [a, b, c, d] = self.0;
        a <= c && b <= d && c < n_bins && d < n_bins
    }

    /// Bin centers in pixel coordinates of `size`.
    pub fn to_pixels(self, size: ImageSize, cfg: QuantizerConfig) -> Result<BBox> {
        let (w, h) = (size.width as f64, size.height as f64);
        let [a, b, c, d] = self.0;
        BBox::new(
            dequantize(a, w, cfg)?,
            dequantize(b, h, cfg)?,
            dequantize(c, w, cfg)?,
            dequantize(d, h, cfg)?,
        )
    }

    pub fn from_pixels(b: &BBox, size: ImageSize, cfg: QuantizerConfig) -> Result<Self> {
        b.validate()?;
        let (w, h) = (size.width as f64, size.height as f64);
        Ok(BinBox([
            quantize(b.x_min, w, cfg)?,
            quantize(b.y_min, h, cfg)?,
            quantize(b.x_max, w, cfg)?,
            quantize(b.y_max, h, cfg)?,
        ]))
    }
}

impl fmt::Display for BinBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c, d] = self.0;
        write!(f, "[{a}, {b}, {c}, {d}]")
    }
}

/// Quantized coordinates: a point (2 bins) or a box (4 bins).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BinCoords {
    Point([u32; 2]),
    Box(BinBox),
}

impl BinCoords {
    pub fn is_valid(&self, n_bins: u32) -> bool {
        match self {
            BinCoords::Point(p) => p[0] < n_bins && p[1] < n_bins,
            BinCoords::Box(b) => b.is_valid(n_bins),
        }
    }

    /// Points become zero-area boxes.
    pub fn as_box(&self) -> BinBox {
        match *self {
            BinCoords::Point([x, y]) => BinBox([x, y, x, y]),
            BinCoords::Box(b) => b,
        }
    }
}

impl fmt::Display for BinCoords {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BinCoords::Point([x, y]) => write!(f, "[{x}, {y}]"),
            BinCoords::Box(b) => b.fmt(f),
        }
    }
}

/// `region_name [coords] <SPE>` in structured form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HybridRegionToken {
    pub region_name: String,
    pub coords: BinCoords,
}

impl HybridRegionToken {
    /// Text without the feature placeholder, e.g. `a cat [100, 50, 200, 300]`.
    pub fn render_plain(&self) -> String {
        format!("{} {}", self.region_name, self.coords)
    }
}

impl fmt::Display for HybridRegionToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.region_name, self.coords, SPE_TOKEN)
    }
}

/// Quantized coordinates of a region. Boxes are quantized as given, points
/// as their center, and free-form shapes through the continuous extent of
/// their rasterized mask's bounding box.
pub fn region_bins(region: &Region, size: ImageSize, cfg: QuantizerConfig) -> Result<BinCoords> {
    region.validate(size)?;
    let (w, h) = (size.width as f64, size.height as f64);
    match region {
        Region::Point { x, y, .. } => Ok(BinCoords::Point([quantize(*x, w, cfg)?, quantize(*y, h, cfg)?])),
        Region::Box(b) => Ok(BinCoords::Box(BinBox::from_pixels(b, size, cfg)?)),
        _ => {
            let mask = rasterize(region, size)?;
            let extent = bounding_box(&mask)?.pixel_extent();
            Ok(BinCoords::Box(BinBox::from_pixels(&extent, size, cfg)?))
        }
    }
}

pub fn hybrid_token(name: &str, region: &Region, size: ImageSize, cfg: QuantizerConfig) -> Result<HybridRegionToken> {
    if name.trim().is_empty() {
        return Err(Error::EmptyInput("region name".into()));
    }
    Ok(HybridRegionToken {
        region_name: name.to_string(),
        coords: region_bins(region, size, cfg)?,
    })
}

/// Renders `name [b1, b2, b3, b4] <SPE>` (or `name [b1, b2] <SPE>` for points).
pub fn encode_region_text(name: &str, region: &Region, size: ImageSize, cfg: QuantizerConfig) -> Result<String> {
    Ok(hybrid_token(name, region, size, cfg)?.to_string())
}
