//! Parsing grounded model output and scoring it.

pub mod metrics;
pub mod parse;
pub mod records;

pub use metrics::{
    bench_ratio, eval_grounded_caption, eval_phrase_grounding, eval_pope, eval_rec, eval_refer, match_refer_answer,
    parse_yes_no, AccuracyReport, CaptionCounts, GroundedCaptionSample, GtObject, GtPhrase, PhraseGroundingSample,
    PopeCounts, RecSample, ReferReport, ReferSample,
};
pub use parse::{parse_grounded_text, GroundedSpan, GroundedText, GroundedTextBuilder};
pub use records::{join_records, read_records, EvalRecord, EvalTask};
