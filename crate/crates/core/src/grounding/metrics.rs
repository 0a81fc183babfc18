//! Evaluation metrics: REC and phrase-grounding accuracy at IoU > 0.5,
//! grounded-captioning F1, referring classification, POPE and the
//! score-ratio aggregate.
//!
//! Every report keeps integer counts; ratios are derived from them so that
//! reports over disjoint record sets can be merged exactly.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::parse::GroundedText;
use crate::error::{Error, Result};
use crate::geometry::{iou, BBox, ImageSize};
use crate::quantizer::QuantizerConfig;

/// A prediction counts as a hit only strictly above this IoU.
pub const IOU_THRESHOLD: f64 = 0.5;

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn hit(pred: &BBox, gt: &BBox) -> bool {
    iou(pred, gt) > IOU_THRESHOLD
}

fn predicted_boxes<'a>(
    spans: impl Iterator<Item = &'a super::parse::GroundedSpan>,
    image: ImageSize,
    q: QuantizerConfig,
) -> Vec<BBox> {
    spans
        .flat_map(|s| s.coords.iter())
        .filter_map(|c| c.as_box().to_pixels(image, q).ok())
        .collect()
}

// ---------------------------------------------------------------- REC

#[derive(Debug, Clone, PartialEq)]
pub struct RecSample {
    pub prediction: GroundedText,
    pub gt: BBox,
    pub image: ImageSize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub correct: u64,
    pub total: u64,
}

impl AccuracyReport {
    pub fn accuracy(&self) -> f64 {
        ratio(self.correct, self.total)
    }

    pub fn merge(&mut self, other: &Self) {
        self.correct += other.correct;
        self.total += other.total;
    }
}

/// Whether the first predicted box, mapped back to pixels, beats IoU 0.5.
pub fn rec_correct(sample: &RecSample, q: QuantizerConfig) -> bool {
    sample
        .prediction
        .first_box()
        .and_then(|b| b.to_pixels(sample.image, q).ok())
        .is_some_and(|b| hit(&b, &sample.gt))
}

pub fn eval_rec(samples: &[RecSample], q: QuantizerConfig) -> AccuracyReport {
    AccuracyReport {
        correct: samples.iter().filter(|s| rec_correct(s, q)).count() as u64,
        total: samples.len() as u64,
    }
}

// ---------------------------------------------------- phrase grounding

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtPhrase {
    pub phrase: String,
    pub boxes: Vec<BBox>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhraseGroundingSample {
    pub prediction: GroundedText,
    pub gt: Vec<GtPhrase>,
    pub image: ImageSize,
}

const LEADING_DETERMINERS: &[&str] = &["a", "an", "the", "this", "that", "these", "those", "some"];

fn phrase_tokens(s: &str) -> Vec<String> {
    let mut toks: Vec<String> = s
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect();
    while toks.first().is_some_and(|t| LEADING_DETERMINERS.contains(&t.as_str())) {
        toks.remove(0);
    }
    toks
}

/// Case-folded token match, ignoring leading determiners; a phrase also
/// matches when its tokens end the other phrase's tokens.
pub fn phrases_match(pred: &str, gt: &str) -> bool {
    let (p, g) = (phrase_tokens(pred), phrase_tokens(gt));
    if p.is_empty() || g.is_empty() {
        return false;
    }
    p == g || p.ends_with(&g) || g.ends_with(&p)
}

/// Per phrase: correct iff any predicted box attached to a matching span
/// beats IoU 0.5 against any of the phrase's GT boxes.
pub fn phrase_grounding_counts(sample: &PhraseGroundingSample, q: QuantizerConfig) -> AccuracyReport {
    let mut report = AccuracyReport::default();
    for gt in &sample.gt {
        report.total += 1;
        let spans = sample
            .prediction
            .spans
            .iter()
            .filter(|s| phrases_match(&s.phrase, &gt.phrase));
        let preds = predicted_boxes(spans, sample.image, q);
        if preds.iter().any(|p| gt.boxes.iter().any(|g| hit(p, g))) {
            report.correct += 1;
        }
    }
    report
}

pub fn eval_phrase_grounding(samples: &[PhraseGroundingSample], q: QuantizerConfig) -> AccuracyReport {
    let mut report = AccuracyReport::default();
    for s in samples {
        report.merge(&phrase_grounding_counts(s, q));
    }
    report
}

// --------------------------------------------------- grounded captions

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtObject {
    pub word: String,
    pub boxes: Vec<BBox>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundedCaptionSample {
    pub prediction: GroundedText,
    pub gt: Vec<GtObject>,
    pub image: ImageSize,
}

/// Counts over unique object words per image.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CaptionCounts {
    /// Distinct grounded words in the predictions.
    pub predicted: u64,
    /// Distinct GT object words.
    pub gt: u64,
    /// Predicted words that are GT words.
    pub matched: u64,
    /// Matched words with a predicted box above IoU 0.5.
    pub localized: u64,
}

impl CaptionCounts {
    pub fn merge(&mut self, o: &Self) {
        self.predicted += o.predicted;
        self.gt += o.gt;
        self.matched += o.matched;
        self.localized += o.localized;
    }

    pub fn precision_all(&self) -> f64 {
        ratio(self.localized, self.predicted)
    }

    pub fn recall_all(&self) -> f64 {
        ratio(self.localized, self.gt)
    }

    /// Grounding scored over every predicted and every GT word.
    pub fn f1_all(&self) -> f64 {
        f1(self.precision_all(), self.recall_all())
    }

    /// Grounding scored only over correctly predicted words.
    pub fn f1_loc(&self) -> f64 {
        let p = ratio(self.localized, self.matched);
        f1(p, p)
    }
}

/// Lower-cased word with surrounding punctuation removed.
pub fn normalize_word(s: &str) -> String {
    s.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase()
}

/// Head word of a phrase: its last token.
pub fn head_word(phrase: &str) -> String {
    phrase
        .split_whitespace()
        .map(normalize_word).rfind(|w| !w.is_empty())
        .unwrap_or_default()
}

pub fn grounded_caption_counts(sample: &GroundedCaptionSample, q: QuantizerConfig) -> CaptionCounts {
    let mut pred: BTreeMap<String, Vec<BBox>> = BTreeMap::new();
    for s in &sample.prediction.spans {
        let w = head_word(&s.phrase);
        if w.is_empty() {
            continue;
        }
        let boxes = predicted_boxes(std::iter::once(s), sample.image, q);
        pred.entry(w).or_default().extend(boxes);
    }
    let mut gt: BTreeMap<String, Vec<BBox>> = BTreeMap::new();
    for o in &sample.gt {
        gt.entry(normalize_word(&o.word))
            .or_default()
            .extend(o.boxes.iter().copied());
    }
    let mut c = CaptionCounts {
        predicted: pred.len() as u64,
        gt: gt.len() as u64,
        ..Default::default()
    };
    for (word, pboxes) in &pred {
        if let Some(gboxes) = gt.get(word) {
            c.matched += 1;
            if pboxes.iter().any(|p| gboxes.iter().any(|g| hit(p, g))) {
                c.localized += 1;
            }
        }
    }
    c
}

pub fn eval_grounded_caption(samples: &[GroundedCaptionSample], q: QuantizerConfig) -> CaptionCounts {
    let mut c = CaptionCounts::default();
    for s in samples {
        c.merge(&grounded_caption_counts(s, q));
    }
    c
}

// -------------------------------------------- referring classification

fn not_clause() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\bnot\b[^,.]*").expect("static regex"))
}

/// Deletes every clause from a standalone `not` up to (excluding) the next
/// comma or period, or to the end of the text.
pub fn strip_negated(response: &str) -> String {
    not_clause().replace_all(response, "").into_owned()
}

pub fn mentions(text: &str, class: &str) -> bool {
    let class = class.trim();
    if class.is_empty() {
        return false;
    }
    let pat = format!(r"(?i)\b{}\b", regex::escape(class));
    Regex::new(&pat).map(|re| re.is_match(text)).unwrap_or(false)
}

/// Whether a binary-choice answer names the GT class once negated clauses
/// are removed.
pub fn match_refer_answer(response: &str, gt_class: &str) -> bool {
    mentions(&strip_negated(response), gt_class)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferSample {
    pub response: String,
    pub gt_class: String,
    pub neg_class: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ReferReport {
    pub correct: u64,
    pub total: u64,
    /// Responses naming both classes before negation removal.
    pub both_mentioned: u64,
}

impl ReferReport {
    pub fn accuracy(&self) -> f64 {
        ratio(self.correct, self.total)
    }
}

pub fn eval_refer(samples: &[ReferSample]) -> ReferReport {
    let mut r = ReferReport::default();
    for s in samples {
        r.total += 1;
        if match_refer_answer(&s.response, &s.gt_class) {
            r.correct += 1;
        }
        if mentions(&s.response, &s.gt_class) && mentions(&s.response, &s.neg_class) {
            r.both_mentioned += 1;
        }
    }
    r
}

// ---------------------------------------------------------------- POPE

/// Leading `yes`/`no` token, else an unambiguous `yes` or `no`/`not` word.
pub fn parse_yes_no(answer: &str) -> Option<bool> {
    let words: Vec<String> = answer
        .split_whitespace()
        .map(normalize_word)
        .filter(|w| !w.is_empty())
        .collect();
    match words.first().map(String::as_str) {
        Some("yes") => return Some(true),
        Some("no") => return Some(false),
        _ => {}
    }
    let yes = words.iter().any(|w| w == "yes");
    let no = words.iter().any(|w| w == "no" || w == "not");
    match (yes, no) {
        (true, false) => Some(true),
        (false, true) => Some(false),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopeCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    /// Answers that parsed as neither yes nor no; scored as "no".
    pub unparsed: u64,
}

impl PopeCounts {
    pub fn add(&mut self, predicted_yes: bool, gt_yes: bool) {
        match (predicted_yes, gt_yes) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    pub fn merge(&mut self, o: &Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.tn += o.tn;
        self.fn_ += o.fn_;
        self.unparsed += o.unparsed;
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        f1(self.precision(), self.recall())
    }

    pub fn yes_ratio(&self) -> f64 {
        ratio(self.tp + self.fp, self.total())
    }
}

/// `(answer text, gt is yes)` pairs with "yes" as the positive class.
pub fn eval_pope<'a>(records: impl IntoIterator<Item = (&'a str, bool)>) -> PopeCounts {
    let mut c = PopeCounts::default();
    for (answer, gt) in records {
        let pred = parse_yes_no(answer).unwrap_or_else(|| {
            c.unparsed += 1;
            false
        });
        c.add(pred, gt);
    }
    c
}

// ---------------------------------------------------------- score ratio

/// `100 * sum(pred) / sum(judge)` over paired 1-10 ratings.
pub fn bench_ratio(pred_scores: &[f64], judge_scores: &[f64]) -> Result<f64> {
    if pred_scores.len() != judge_scores.len() {
        return Err(Error::LengthMismatch(pred_scores.len(), judge_scores.len()));
    }
    if pred_scores.is_empty() {
        return Err(Error::EmptyInput("score lists".into()));
    }
    for &s in pred_scores.iter().chain(judge_scores) {
        if !(1.0..=10.0).contains(&s) {
            return Err(Error::OutOfRange(format!("score {s} outside [1, 10]")));
        }
    }
    let p: f64 = pred_scores.iter().sum();
    let j: f64 = judge_scores.iter().sum();
    Ok(100.0 * p / j)
}
