//! Scene records: the symbolic description of one image (objects,
//! relationships, region descriptions, captions) in relative `[0, 1]`
//! coordinates.

use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BBox, BinaryMask, ImageSize, Region};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub name: String,
    /// Relative `[x_min, y_min, x_max, y_max]`.
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<BinaryMask>,
}

/// `object -> predicate -> subject`, both indices into `objects`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Relationship {
    pub object: usize,
    pub predicate: String,
    pub subject: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionDescription {
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    pub text: String,
}

/// Ties a phrase of a caption (byte range) to an object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionGrounding {
    pub caption: usize,
    pub range: [usize; 2],
    pub object: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    #[serde(default)]
    pub objects: Vec<SceneObject>,
    #[serde(default)]
    pub relationships: Vec<Relationship>,
    #[serde(default)]
    pub regions: Vec<RegionDescription>,
    #[serde(default)]
    pub captions: Vec<String>,
    #[serde(default)]
    pub groundings: Vec<CaptionGrounding>,
}

pub(crate) fn check_rel_box(b: &[f64; 4]) -> bool {
    b.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)) && b[0] <= b[2] && b[1] <= b[3]
}

impl SceneRecord {
    pub fn size(&self) -> ImageSize {
        ImageSize::new(self.width, self.height)
    }

    fn invalid(&self, reason: String) -> Error {
        Error::InvalidRecord {
            id: self.image_id.clone(),
            reason,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(self.invalid(format!("image size {}x{}", self.width, self.height)));
        }
        for (i, o) in self.objects.iter().enumerate() {
            if !check_rel_box(&o.bbox) {
                return Err(self.invalid(format!("object {i} box {:?} is not a relative box", o.bbox)));
            }
            if let Some(m) = &o.mask {
                if m.size() != self.size() {
                    return Err(self.invalid(format!("object {i} mask {}x{}", m.width(), m.height())));
                }
            }
        }
        let n = self.objects.len();
        for r in &self.relationships {
            if r.object >= n || r.subject >= n {
                return Err(self.invalid(format!("relationship {r:?} indexes {n} objects")));
            }
        }
        for (i, r) in self.regions.iter().enumerate() {
            if !check_rel_box(&r.bbox) {
                return Err(self.invalid(format!("region {i} box {:?} is not a relative box", r.bbox)));
            }
        }
        for g in &self.groundings {
            let Some(cap) = self.captions.get(g.caption) else {
                return Err(self.invalid(format!("grounding refers to caption {}", g.caption)));
            };
            let [s, e] = g.range;
            if s > e || e > cap.len() || !cap.is_char_boundary(s) || !cap.is_char_boundary(e) {
                return Err(self.invalid(format!("grounding range {s}..{e} in caption {}", g.caption)));
            }
            if g.object >= n {
                return Err(self.invalid(format!("grounding refers to object {}", g.object)));
            }
        }
        Ok(())
    }

    /// Object `i` as a pixel-space region: its mask when present, else its box.
    pub fn object_region(&self, i: usize) -> Region {
        let o = &self.objects[i];
        match &o.mask {
            Some(m) => Region::Mask(m.clone()),
            None => Region::Box(self.to_pixels(&o.bbox)),
        }
    }

    pub fn to_pixels(&self, b: &[f64; 4]) -> BBox {
        let (w, h) = (self.width as f64, self.height as f64);
        BBox {
            x_min: b[0] * w,
            y_min: b[1] * h,
            x_max: b[2] * w,
            y_max: b[3] * h,
        }
    }

    /// Distinct object names, in first-seen order.
    pub fn class_names(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for o in &self.objects {
            if !out.iter().any(|n| n.eq_ignore_ascii_case(&o.name)) {
                out.push(&o.name);
            }
        }
        out
    }
}

/// A dining-room scene with four objects, one relationship, one region
/// description and one aligned caption.
pub fn example_scene() -> SceneRecord {
    let caption = "White chairs sit around a polished wood dining table while a sectional soft sits in the background.";
    let chairs = caption.find("White chairs").unwrap();
    let table = caption.find("a polished wood dining table").unwrap();
    SceneRecord {
        image_id: "vg-1".into(),
        width: 500,
        height: 333,
        objects: vec![
            SceneObject {
                name: "chair".into(),
                bbox: [0.596, 0.637, 0.698, 0.997],
                mask: None,
            },
            SceneObject {
                name: "table".into(),
                bbox: [0.214, 0.541, 0.720, 0.997],
                mask: None,
            },
            SceneObject {
                name: "frame".into(),
                bbox: [0.560, 0.466, 0.600, 0.529],
                mask: None,
            },
            SceneObject {
                name: "photo".into(),
                bbox: [0.566, 0.472, 0.594, 0.523],
                mask: None,
            },
        ],
        relationships: vec![Relationship {
            object: 2,
            predicate: "with".into(),
            subject: 3,
        }],
        regions: vec![RegionDescription {
            bbox: [0.560, 0.466, 0.600, 0.529],
            text: "a white picture frame with a black and white photo on it.".into(),
        }],
        captions: vec![caption.into()],
        groundings: vec![
            CaptionGrounding {
                caption: 0,
                range: [chairs, chairs + 12],
                object: 0,
            },
            CaptionGrounding {
                caption: 0,
                range: [table, table + 28],
                object: 1,
            },
        ],
    }
}

pub fn read_scenes(r: impl BufRead) -> Result<Vec<SceneRecord>> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let scene: SceneRecord = serde_json::from_str(&line).map_err(|e| Error::InvalidRecord {
            id: format!("line {}", n + 1),
            reason: e.to_string(),
        })?;
        scene.validate()?;
        out.push(scene);
    }
    Ok(out)
}
