//! Template conversion of scene records into instruction samples.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::scene::SceneRecord;
use super::templates::{fill_template, slots};
use super::{InstructionSample, Polarity, Task};
use crate::error::{Error, Result};
use crate::geometry::{bounding_box, BBox, ImageSize};
use crate::grounding::{GroundedText, GroundedTextBuilder};
use crate::quantizer::{quantize, region_bins, BinBox, BinCoords, QuantizerConfig, SPE_TOKEN};
use crate::sampler::rng::{SplitRng, STREAM_TEMPLATES};

/// How locations inside prompts are written.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoordStyle {
    /// Quantized integer bins, as the model consumes them.
    #[default]
    Bins,
    /// Relative floats with three decimals.
    Relative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvertOptions {
    pub quantizer: QuantizerConfig,
    pub style: CoordStyle,
    /// Follow prompt locations with the region-feature placeholder.
    pub include_spe: bool,
}

impl Default for ConvertOptions {
    fn default() -> Self {
        Self {
            quantizer: QuantizerConfig::default(),
            style: CoordStyle::Bins,
            include_spe: true,
        }
    }
}

/// A detected phrase: byte range into the text and a pixel box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub phrase: String,
    pub range: Range<usize>,
    #[serde(rename = "box")]
    pub bbox: BBox,
}

pub(crate) fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Per-sample seeds for one (record, task) pair.
pub(crate) fn seed_stream(seed: u64, image_id: &str, salt: u64) -> SplitRng {
    SplitRng::new(seed ^ fnv1a(image_id), STREAM_TEMPLATES + 1 + salt)
}

fn rel_bins(b: &[f64; 4], q: QuantizerConfig) -> Result<BinBox> {
    Ok(BinBox([
        quantize(b[0], 1.0, q)?,
        quantize(b[1], 1.0, q)?,
        quantize(b[2], 1.0, q)?,
        quantize(b[3], 1.0, q)?,
    ]))
}

pub(crate) fn render_relative(b: &[f64; 4]) -> String {
    format!("[{:.3}, {:.3}, {:.3}, {:.3}]", b[0], b[1], b[2], b[3])
}

impl SceneRecord {
    /// Bins of object `i`: its mask's extent when it has one, else its box.
    pub fn object_bins(&self, i: usize, q: QuantizerConfig) -> Result<BinCoords> {
        match &self.objects[i].mask {
            Some(_) => region_bins(&self.object_region(i), self.size(), q),
            None => Ok(BinCoords::Box(rel_bins(&self.objects[i].bbox, q)?)),
        }
    }

    /// Relative box of object `i`, taken from the mask when present.
    pub fn object_rel_box(&self, i: usize) -> Result<[f64; 4]> {
        match &self.objects[i].mask {
            Some(m) => {
                let e = bounding_box(m)?.pixel_extent();
                let (w, h) = (self.width as f64, self.height as f64);
                Ok([e.x_min / w, e.y_min / h, e.x_max / w, e.y_max / h])
            }
            None => Ok(self.objects[i].bbox),
        }
    }
}

fn location_for(opts: &ConvertOptions, bins: BinCoords, rel: &[f64; 4]) -> String {
    let mut s = match opts.style {
        CoordStyle::Bins => bins.to_string(),
        CoordStyle::Relative => render_relative(rel),
    };
    if opts.include_spe {
        s.push(' ');
        s.push_str(SPE_TOKEN);
    }
    s
}

fn object_location(scene: &SceneRecord, i: usize, opts: &ConvertOptions) -> Result<String> {
    Ok(location_for(
        opts,
        scene.object_bins(i, opts.quantizer)?,
        &scene.object_rel_box(i)?,
    ))
}

fn sample(scene: &SceneRecord, task: Task, prompt: String, response: String) -> InstructionSample {
    InstructionSample {
        prompt,
        response,
        task,
        polarity: Polarity::Positive,
        image_id: scene.image_id.clone(),
        mining: None,
    }
}

fn strip_end_punct(s: &str) -> &str {
    s.trim().trim_end_matches(['.', '!', '?', ',', ';']).trim_end()
}

/// Inserts coordinate runs after the given byte ranges of `text`. Ranges
/// listed twice get all their coordinates in one run.
pub(crate) fn ground_ranges(text: &str, items: &[(Range<usize>, BinCoords)]) -> Result<GroundedText> {
    let mut sorted: Vec<(Range<usize>, Vec<BinCoords>)> = Vec::new();
    let mut idx: Vec<usize> = (0..items.len()).collect();
    idx.sort_by_key(|&i| (items[i].0.start, items[i].0.end, i));
    for i in idx {
        let (r, c) = &items[i];
        if r.start > r.end || r.end > text.len() || !text.is_char_boundary(r.start) || !text.is_char_boundary(r.end) {
            return Err(Error::OutOfBounds(format!(
                "range {r:?} in text of {} bytes",
                text.len()
            )));
        }
        match sorted.last_mut() {
            Some((last, coords)) if last == r => coords.push(*c),
            Some((last, _)) if last.end > r.start => return Err(Error::OverlappingRanges(last.clone(), r.clone())),
            _ => sorted.push((r.clone(), vec![*c])),
        }
    }
    // Assemble left to right; the result equals right-to-left insertion
    // because every insertion point lies at or after the previous range.
    let mut b = GroundedTextBuilder::new();
    let mut pos = 0;
    for (r, coords) in &sorted {
        b.text(&text[pos..r.start]);
        b.grounded(&text[r.clone()], coords);
        pos = r.end;
    }
    b.text(&text[pos..]);
    Ok(b.build())
}

/// Appends ` [b1, b2, b3, b4]` after each detected phrase.
pub fn append_pseudo_grounding(
    text: &str,
    detections: &[Detection],
    image: ImageSize,
    q: QuantizerConfig,
) -> Result<GroundedText> {
    let items = detections
        .iter()
        .map(|d| Ok((d.range.clone(), BinCoords::Box(BinBox::from_pixels(&d.bbox, image, q)?))))
        .collect::<Result<Vec<_>>>()?;
    ground_ranges(text, &items)
}

/// Caption `c` with its aligned phrases grounded, or `None` without alignments.
fn grounded_caption(scene: &SceneRecord, c: usize, q: QuantizerConfig) -> Result<Option<(GroundedText, Vec<String>)>> {
    let items = scene
        .groundings
        .iter()
        .filter(|g| g.caption == c)
        .map(|g| Ok((g.range[0]..g.range[1], scene.object_bins(g.object, q)?)))
        .collect::<Result<Vec<_>>>()?;
    if items.is_empty() {
        return Ok(None);
    }
    let text = ground_ranges(&scene.captions[c], &items)?;
    let phrases = text.spans.iter().map(|s| s.phrase.clone()).collect();
    Ok(Some((text, phrases)))
}

/// Emits every sample `task` yields for `scene`, in annotation order.
pub fn convert_record(
    scene: &SceneRecord,
    task: Task,
    opts: &ConvertOptions,
    seed: u64,
) -> Result<Vec<InstructionSample>> {
    scene.validate()?;
    let q = opts.quantizer;
    let mut rng = seed_stream(seed, &scene.image_id, task as u64);
    let mut out = Vec::new();
    match task {
        Task::ReferObject => {
            for (i, o) in scene.objects.iter().enumerate() {
                let s = slots([("location", object_location(scene, i, opts)?)]);
                out.push(sample(
                    scene,
                    task,
                    fill_template(task, &s, rng.next_u64())?,
                    o.name.clone(),
                ));
            }
        }
        Task::ReferRelation => {
            for r in &scene.relationships {
                let (a, b) = (&scene.objects[r.object], &scene.objects[r.subject]);
                let s = slots([
                    ("object1", a.name.clone()),
                    ("location1", object_location(scene, r.object, opts)?),
                    ("object2", b.name.clone()),
                    ("location2", object_location(scene, r.subject, opts)?),
                ]);
                let response = format!("{} {} {}", a.name, r.predicate, b.name);
                out.push(sample(scene, task, fill_template(task, &s, rng.next_u64())?, response));
            }
        }
        Task::ReferRegion => {
            for r in &scene.regions {
                let loc = location_for(opts, BinCoords::Box(rel_bins(&r.bbox, q)?), &r.bbox);
                let s = slots([("location", loc)]);
                out.push(sample(
                    scene,
                    task,
                    fill_template(task, &s, rng.next_u64())?,
                    r.text.trim().to_string(),
                ));
            }
        }
        Task::Rec => {
            for r in &scene.regions {
                let query = strip_end_punct(&r.text);
                if query.is_empty() {
                    continue;
                }
                let s = slots([("object", query.to_string())]);
                let response = format!("{query} {}.", rel_bins(&r.bbox, q)?);
                out.push(sample(scene, task, fill_template(task, &s, rng.next_u64())?, response));
            }
        }
        Task::PhraseGrounding => {
            for c in 0..scene.captions.len() {
                if let Some((text, phrases)) = grounded_caption(scene, c, q)? {
                    let s = slots([("objects", phrases.join(", "))]);
                    out.push(sample(scene, task, fill_template(task, &s, rng.next_u64())?, text.raw));
                }
            }
        }
        Task::Detection => {
            let names = scene.class_names();
            if !names.is_empty() {
                let mut b = GroundedTextBuilder::new();
                for (n, name) in names.iter().enumerate() {
                    if n > 0 {
                        b.text(", ");
                    }
                    let coords = (0..scene.objects.len())
                        .filter(|&i| scene.objects[i].name.eq_ignore_ascii_case(name))
                        .map(|i| scene.object_bins(i, q))
                        .collect::<Result<Vec<_>>>()?;
                    b.grounded(name, &coords);
                }
                b.text(".");
                let s = slots([("class", names.join(", "))]);
                out.push(sample(
                    scene,
                    task,
                    fill_template(task, &s, rng.next_u64())?,
                    b.build().raw,
                ));
            }
        }
        Task::GroundedCaption => {
            if !scene.captions.is_empty() && scene.groundings.is_empty() {
                return Err(Error::MissingAlignments(scene.image_id.clone()));
            }
            for c in 0..scene.captions.len() {
                if let Some((text, _)) = grounded_caption(scene, c, q)? {
                    let prompt = fill_template(task, &Default::default(), rng.next_u64())?;
                    out.push(sample(scene, task, prompt, text.raw));
                }
            }
        }
        Task::Hallucination => {
            out = super::negatives::hallucination_positives(scene, q, rng.next_u64())?;
        }
    }
    Ok(out)
}

/// Converts every task in `tasks`. Grounded captioning is skipped for
/// records without caption alignments rather than failing the record.
pub fn convert_all(
    scene: &SceneRecord,
    tasks: &[Task],
    opts: &ConvertOptions,
    seed: u64,
) -> Result<Vec<InstructionSample>> {
    let mut out = Vec::new();
    for &t in tasks {
        match convert_record(scene, t, opts, seed) {
            Ok(v) => out.extend(v),
            Err(Error::MissingAlignments(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}
