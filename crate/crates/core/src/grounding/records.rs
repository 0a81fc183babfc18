//! JSON-lines evaluation records and the typed samples they turn into.

use std::collections::HashMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::metrics::{GroundedCaptionSample, GtObject, GtPhrase, PhraseGroundingSample, RecSample, ReferSample};
use super::parse::parse_grounded_text;
use crate::error::{Error, Result};
use crate::geometry::{BBox, ImageSize};
use crate::quantizer::QuantizerConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalTask {
    Rec,
    PhraseGrounding,
    GroundedCaption,
    ReferCls,
    Pope,
    Bench,
}

/// One line of a predictions or ground-truth file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub id: String,
    pub task: EvalTask,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default)]
    pub gt: Value,
}

#[derive(Deserialize)]
struct RecGt {
    #[serde(rename = "box")]
    bbox: [f64; 4],
    width: u32,
    height: u32,
}

#[derive(Deserialize)]
struct PhraseGt {
    phrase: String,
    boxes: Vec<[f64; 4]>,
}

#[derive(Deserialize)]
struct PhrasesGt {
    width: u32,
    height: u32,
    phrases: Vec<PhraseGt>,
}

#[derive(Deserialize)]
struct ObjectGt {
    word: String,
    boxes: Vec<[f64; 4]>,
}

#[derive(Deserialize)]
struct ObjectsGt {
    width: u32,
    height: u32,
    objects: Vec<ObjectGt>,
}

#[derive(Deserialize)]
struct ReferGt {
    class: String,
    negative: String,
}

#[derive(Deserialize)]
struct PopeGt {
    answer: String,
}

#[derive(Deserialize)]
struct BenchGt {
    pred_score: f64,
    judge_score: f64,
}

impl EvalRecord {
    fn invalid(&self, reason: impl Into<String>) -> Error {
        Error::InvalidRecord {
            id: self.id.clone(),
            reason: reason.into(),
        }
    }

    fn expect_task(&self, task: EvalTask) -> Result<()> {
        if self.task != task {
            return Err(self.invalid(format!("task {:?}, expected {:?}", self.task, task)));
        }
        Ok(())
    }

    fn gt_as<T: for<'de> Deserialize<'de>>(&self) -> Result<T> {
        serde_json::from_value(self.gt.clone()).map_err(|e| self.invalid(format!("gt: {e}")))
    }

    /// Predicted text, falling back to `label`.
    pub fn prediction(&self) -> &str {
        self.text.as_deref().or(self.label.as_deref()).unwrap_or("")
    }

    fn image(&self, width: u32, height: u32) -> Result<ImageSize> {
        if width == 0 || height == 0 {
            return Err(self.invalid(format!("image size {width}x{height}")));
        }
        Ok(ImageSize::new(width, height))
    }

    fn bbox(&self, a: [f64; 4]) -> Result<BBox> {
        BBox::from_array(a).map_err(|e| self.invalid(e.to_string()))
    }

    pub fn to_rec(&self, q: QuantizerConfig) -> Result<RecSample> {
        self.expect_task(EvalTask::Rec)?;
        let gt: RecGt = self.gt_as()?;
        Ok(RecSample {
            prediction: parse_grounded_text(self.prediction(), q.n_bins),
            gt: self.bbox(gt.bbox)?,
            image: self.image(gt.width, gt.height)?,
        })
    }

    pub fn to_phrase_grounding(&self, q: QuantizerConfig) -> Result<PhraseGroundingSample> {
        self.expect_task(EvalTask::PhraseGrounding)?;
        let gt: PhrasesGt = self.gt_as()?;
        let phrases = gt
            .phrases
            .into_iter()
            .map(|p| {
                Ok(GtPhrase {
                    phrase: p.phrase,
                    boxes: p.boxes.into_iter().map(|b| self.bbox(b)).collect::<Result<_>>()?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(PhraseGroundingSample {
            prediction: parse_grounded_text(self.prediction(), q.n_bins),
            gt: phrases,
            image: self.image(gt.width, gt.height)?,
        })
    }

    pub fn to_grounded_caption(&self, q: QuantizerConfig) -> Result<GroundedCaptionSample> {
        self.expect_task(EvalTask::GroundedCaption)?;
        let gt: ObjectsGt = self.gt_as()?;
        let objects = gt
            .objects
            .into_iter()
            .map(|o| {
                Ok(GtObject {
                    word: o.word,
                    boxes: o.boxes.into_iter().map(|b| self.bbox(b)).collect::<Result<_>>()?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(GroundedCaptionSample {
            prediction: parse_grounded_text(self.prediction(), q.n_bins),
            gt: objects,
            image: self.image(gt.width, gt.height)?,
        })
    }

    pub fn to_refer(&self) -> Result<ReferSample> {
        self.expect_task(EvalTask::ReferCls)?;
        let gt: ReferGt = self.gt_as()?;
        Ok(ReferSample {
            response: self.prediction().to_string(),
            gt_class: gt.class,
            neg_class: gt.negative,
        })
    }

    /// `(answer, gt is yes)`.
    pub fn to_pope(&self) -> Result<(String, bool)> {
        self.expect_task(EvalTask::Pope)?;
        let gt: PopeGt = self.gt_as()?;
        let gt_yes = match gt.answer.trim().to_lowercase().as_str() {
            "yes" => true,
            "no" => false,
            other => return Err(self.invalid(format!("gt answer `{other}` is not yes/no"))),
        };
        Ok((self.prediction().to_string(), gt_yes))
    }

    /// `(predicted answer score, judge answer score)`.
    pub fn to_bench(&self) -> Result<(f64, f64)> {
        self.expect_task(EvalTask::Bench)?;
        let gt: BenchGt = self.gt_as()?;
        Ok((gt.pred_score, gt.judge_score))
    }
}

/// Reads JSON-lines records, skipping blank lines.
pub fn read_records(r: impl BufRead) -> Result<Vec<EvalRecord>> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: EvalRecord = serde_json::from_str(&line).map_err(|e| Error::InvalidRecord {
            id: format!("line {}", n + 1),
            reason: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Takes predictions from `preds` and ground truth from `gts`, joined by id.
pub fn join_records(preds: Vec<EvalRecord>, gts: &[EvalRecord]) -> Result<Vec<EvalRecord>> {
    let by_id: HashMap<&str, &EvalRecord> = gts.iter().map(|g| (g.id.as_str(), g)).collect();
    preds
        .into_iter()
        .map(|mut p| {
            let g = by_id.get(p.id.as_str()).ok_or_else(|| Error::InvalidRecord {
                id: p.id.clone(),
                reason: "no ground truth with this id".into(),
            })?;
            p.gt = g.gt.clone();
            Ok(p)
        })
        .collect()
}
