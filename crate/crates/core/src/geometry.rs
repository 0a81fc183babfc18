//! Region shapes, binary-mask rasterization and box geometry.
//!
//! All shapes live in continuous pixel coordinates of an image of a given
//! size. A pixel `(i, j)` belongs to a shape iff its center `(i + 0.5, j + 0.5)`
//! lies inside the continuous shape; the same rule is used for every variant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_POINT_RADIUS: f64 = 5.0;
pub const DEFAULT_STROKE_WIDTH: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageSize {
    pub width: u32,
    pub height: u32,
}

impl ImageSize {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height }
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        (0.0..=self.width as f64).contains(&x) && (0.0..=self.height as f64).contains(&y)
    }

    fn check_point(&self, x: f64, y: f64) -> Result<()> {
        if self.contains(x, y) {
            Ok(())
        } else {
            Err(Error::OutOfBounds(format!(
                "({x}, {y}) outside {}x{} image",
                self.width, self.height
            )))
        }
    }
}

/// Axis-aligned box in continuous pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let b = Self {
            x_min,
            y_min,
            x_max,
            y_max,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn from_array(a: [f64; 4]) -> Result<Self> {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x_min, self.y_min, self.x_max, self.y_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::OutOfBounds(format!("non-finite box {self:?}")));
        }
        if self.x_min > self.x_max || self.y_min > self.y_max {
            return Err(Error::DegenerateRegion(format!("inverted box {self:?}")));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Continuous extent covered by the pixels of a pixel-index box: pixel
    /// `i` spans `[i, i + 1]`.
    pub fn pixel_extent(&self) -> BBox {
        BBox {
            x_min: self.x_min,
            y_min: self.y_min,
            x_max: self.x_max + 1.0,
            y_max: self.y_max + 1.0,
        }
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        iou(self, other)
    }
}

/// Intersection over union with continuous-coordinate areas.
///
/// Two zero-area boxes have no union; they score 1 when identical and 0
/// otherwise.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let ih = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return if a == b { 1.0 } else { 0.0 };
    }
    (inter / union).clamp(0.0, 1.0)
}

/// A referable image area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Region {
    Point {
        x: f64,
        y: f64,
        #[serde(default = "default_radius")]
        radius: f64,
    },
    Box(BBox),
    Polygon {
        vertices: Vec<[f64; 2]>,
    },
    Scribble {
        strokes: Vec<Vec<[f64; 2]>>,
        #[serde(default = "default_stroke_width")]
        stroke_width: f64,
    },
    Mask(BinaryMask),
}

fn default_radius() -> f64 {
    DEFAULT_POINT_RADIUS
}

fn default_stroke_width() -> f64 {
    DEFAULT_STROKE_WIDTH
}

impl Region {
    pub fn point(x: f64, y: f64) -> Self {
        Region::Point {
            x,
            y,
            radius: DEFAULT_POINT_RADIUS,
        }
    }

    pub fn bbox(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        Region::Box(BBox {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn polygon(vertices: Vec<[f64; 2]>) -> Self {
        Region::Polygon { vertices }
    }

    pub fn scribble(strokes: Vec<Vec<[f64; 2]>>) -> Self {
        Region::Scribble {
            strokes,
            stroke_width: DEFAULT_STROKE_WIDTH,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Region::Point { .. } => "point",
            Region::Box(_) => "box",
            Region::Polygon { .. } => "polygon",
            Region::Scribble { .. } => "scribble",
            Region::Mask(_) => "mask",
        }
    }

    /// Checks the region against an image size without rasterizing it.
    pub fn validate(&self, size: ImageSize) -> Result<()> {
        match self {
            Region::Point { x, y, radius } => {
                if !(radius.is_finite() && *radius >= 0.0) {
                    return Err(Error::DegenerateRegion(format!("point radius {radius}")));
                }
                size.check_point(*x, *y)
            }
            Region::Box(b) => {
                b.validate()?;
                size.check_point(b.x_min, b.y_min)?;
                size.check_point(b.x_max, b.y_max)
            }
            Region::Polygon { vertices } => {
                if vertices.len() < 3 {
                    return Err(Error::DegenerateRegion(format!(
                        "polygon with {} vertices",
                        vertices.len()
                    )));
                }
                vertices.iter().try_for_each(|v| size.check_point(v[0], v[1]))
            }
            Region::Scribble { strokes, stroke_width } => {
                if strokes.is_empty() || strokes.iter().any(|s| s.is_empty()) {
                    return Err(Error::DegenerateRegion("scribble without points".into()));
                }
                if !(stroke_width.is_finite() && *stroke_width > 0.0) {
                    return Err(Error::DegenerateRegion(format!("stroke width {stroke_width}")));
                }
                strokes.iter().flatten().try_for_each(|v| size.check_point(v[0], v[1]))
            }
            Region::Mask(m) => {
                if m.width != size.width || m.height != size.height {
                    return Err(Error::SizeMismatch(format!(
                        "mask {}x{} on {}x{} image",
                        m.width, m.height, size.width, size.height
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn rasterize(&self, size: ImageSize) -> Result<BinaryMask> {
        rasterize(self, size)
    }
}

/// Builds the binary mask of `region` on an image of `size`.
pub fn rasterize(region: &Region, size: ImageSize) -> Result<BinaryMask> {
    region.validate(size)?;
    if let Region::Mask(m) = region {
        return Ok(m.clone());
    }
    let mut mask = BinaryMask::new(size.width, size.height)?;
    match region {
        Region::Point { x, y, radius } => fill_disk(&mut mask, *x, *y, *radius),
        Region::Box(b) => fill_box(&mut mask, b),
        Region::Polygon { vertices } => fill_polygon(&mut mask, vertices),
        Region::Scribble { strokes, stroke_width } => {
            let r = stroke_width / 2.0;
            for stroke in strokes {
                if stroke.len() == 1 {
                    fill_disk(&mut mask, stroke[0][0], stroke[0][1], r);
                }
                for seg in stroke.windows(2) {
                    fill_capsule(&mut mask, seg[0], seg[1], r);
                }
            }
        }
        Region::Mask(_) => unreachable!(),
    }
    Ok(mask)
}

/// Pixel index range whose centers fall in `[lo, hi]`, clipped to `[0, n)`.
fn center_range(lo: f64, hi: f64, n: u32) -> std::ops::Range<u32> {
    let start = (lo - 0.5).ceil().max(0.0);
    let end = ((hi - 0.5).floor() + 1.0).min(n as f64);
    if end <= start {
        0..0
    } else {
        start as u32..end as u32
    }
}

fn fill_box(mask: &mut BinaryMask, b: &BBox) {
    let xs = center_range(b.x_min, b.x_max, mask.width);
    let ys = center_range(b.y_min, b.y_max, mask.height);
    if xs.is_empty() || ys.is_empty() {
        // zero-area (or sub-pixel) boxes keep the pixel under their corner
        let x = (b.x_min.floor() as u32).min(mask.width - 1);
        let y = (b.y_min.floor() as u32).min(mask.height - 1);
        mask.set(x, y, true);
        return;
    }
    for y in ys {
        for x in xs.clone() {
            mask.set(x, y, true);
        }
    }
}

fn fill_disk(mask: &mut BinaryMask, cx: f64, cy: f64, r: f64) {
    let r2 = r * r;
    for y in center_range(cy - r, cy + r, mask.height) {
        let dy = y as f64 + 0.5 - cy;
        for x in center_range(cx - r, cx + r, mask.width) {
            let dx = x as f64 + 0.5 - cx;
            if dx * dx + dy * dy <= r2 {
                mask.set(x, y, true);
            }
        }
    }
}

fn segment_dist2(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (qx, qy) = (a[0] + t * dx - p[0], a[1] + t * dy - p[1]);
    qx * qx + qy * qy
}

fn fill_capsule(mask: &mut BinaryMask, a: [f64; 2], b: [f64; 2], r: f64) {
    let r2 = r * r;
    let ys = center_range(a[1].min(b[1]) - r, a[1].max(b[1]) + r, mask.height);
    let xs = center_range(a[0].min(b[0]) - r, a[0].max(b[0]) + r, mask.width);
    for y in ys {
        for x in xs.clone() {
            let c = [x as f64 + 0.5, y as f64 + 0.5];
            if segment_dist2(c, a, b) <= r2 {
                mask.set(x, y, true);
            }
        }
    }
}

/// Even-odd scanline fill. A pixel is set iff an odd number of edge
/// crossings lie strictly to the right of its center on its scanline.
fn fill_polygon(mask: &mut BinaryMask, vertices: &[[f64; 2]]) {
    let n = vertices.len();
    let mut xs = Vec::with_capacity(n);
    for y in 0..mask.height {
        let cy = y as f64 + 0.5;
        xs.clear();
        for i in 0..n {
            let (a, b) = (vertices[i], vertices[(i + 1) % n]);
            if (a[1] > cy) != (b[1] > cy) {
                xs.push(a[0] + (cy - a[1]) * (b[0] - a[0]) / (b[1] - a[1]));
            }
        }
        if xs.is_empty() {
            continue;
        }
        xs.sort_by(f64::total_cmp);
        for x in 0..mask.width {
            let cx = x as f64 + 0.5;
            let right = xs.len() - xs.partition_point(|&v| v <= cx);
            if right % 2 == 1 {
                mask.set(x, y, true);
            }
        }
    }
}

/// Image-sized bit grid, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "MaskRepr", into = "MaskRepr")]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::SizeMismatch(format!("mask dims {width}x{height}")));
        }
        Ok(Self {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        })
    }

    pub fn from_bits(width: u32, height: u32, bits: Vec<bool>) -> Result<Self> {
        let mut m = Self::new(width, height)?;
        if bits.len() != m.bits.len() {
            return Err(Error::SizeMismatch(format!(
                "{} bits for {width}x{height} mask",
                bits.len()
            )));
        }
        m.bits = bits;
        Ok(m)
    }

    pub fn full(width: u32, height: u32) -> Result<Self> {
        let mut m = Self::new(width, height)?;
        m.bits.fill(true);
        Ok(m)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn size(&self) -> ImageSize {
        ImageSize::new(self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[(y * self.width + x) as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        let w = self.width;
        self.bits[(y * w + x) as usize] = v;
    }

    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Set pixels in row-major order.
    pub fn ones(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i as u32 % w, i as u32 / w))
    }

    /// True when every set pixel of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    /// Tightest box of pixel indices containing every set pixel.
    pub fn bounding_box(&self) -> Result<BBox> {
        bounding_box(self)
    }

    /// Run lengths per row, alternating 0-runs and 1-runs, starting with 0s.
    pub fn to_rle_rows(&self) -> Vec<Vec<u32>> {
        self.bits
            .chunks(self.width as usize)
            .map(|row| {
                let mut runs = Vec::new();
                let mut cur = false;
                let mut len = 0u32;
                for &b in row {
                    if b != cur {
                        runs.push(len);
                        cur = b;
                        len = 0;
                    }
                    len += 1;
                }
                runs.push(len);
                runs
            })
            .collect()
    }

    pub fn from_rle_rows(width: u32, height: u32, rows: &[Vec<u32>]) -> Result<Self> {
        let mut m = Self::new(width, height)?;
        if rows.len() != height as usize {
            return Err(Error::SizeMismatch(format!(
                "{} rle rows for height {height}",
                rows.len()
            )));
        }
        for (y, runs) in rows.iter().enumerate() {
            let total: u64 = runs.iter().map(|&r| r as u64).sum();
            if total != width as u64 {
                return Err(Error::SizeMismatch(format!(
                    "rle row {y} sums to {total}, width {width}"
                )));
            }
            let mut x = 0usize;
            for (k, &run) in runs.iter().enumerate() {
                if k % 2 == 1 {
                    let start = y * width as usize + x;
                    m.bits[start..start + run as usize].fill(true);
                }
                x += run as usize;
            }
        }
        Ok(m)
    }
}

#[derive(Serialize, Deserialize)]
struct MaskRepr {
    width: u32,
    height: u32,
    rle: Vec<Vec<u32>>,
}

impl TryFrom<MaskRepr> for BinaryMask {
    type Error = Error;

    fn try_from(r: MaskRepr) -> Result<Self> {
        BinaryMask::from_rle_rows(r.width, r.height, &r.rle)
    }
}

impl From<BinaryMask> for MaskRepr {
    fn from(m: BinaryMask) -> Self {
        MaskRepr {
            width: m.width,
            height: m.height,
            rle: m.to_rle_rows(),
        }
    }
}

/// Tightest axis-aligned box of pixel indices containing all set pixels.
pub fn bounding_box(mask: &BinaryMask) -> Result<BBox> {
    let mut it = mask.ones();
    let (x0, y0) = it.next().ok_or(Error::EmptyMask)?;
    let (mut xmin, mut xmax, mut ymin, mut ymax) = (x0, x0, y0, y0);
    for (x, y) in it {
        xmin = xmin.min(x);
        xmax = xmax.max(x);
        ymin = ymin.min(y);
        ymax = ymax.max(y);
    }
    Ok(BBox {
        x_min: xmin as f64,
        y_min: ymin as f64,
        x_max: xmax as f64,
        y_max: ymax as f64,
    })
}
