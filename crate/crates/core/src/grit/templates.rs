//! Task templates used to turn annotations into questions.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;

use super::Task;
use crate::error::{Error, Result};
use crate::sampler::rng::{SplitRng, STREAM_TEMPLATES};

pub type Slots = BTreeMap<String, String>;

const REFER_OBJECT: &[&str] = &[
    "What is the class of the object <location> within the image?",
    "Classify object <location> in the image.",
    "Identify the object <location> in the image.",
];

const REFER_RELATION: &[&str] = &[
    "What does <object1> <location1> do to <object2> <location2> of the image?",
    "What is the physical relation between <object1> <location1> and <object2> <location2>?",
    "Can you figure out the geometric relation of the <object1> <location1> and <object2> <location2>?",
];

const REFER_REGION: &[&str] = &[
    "Describe the region <location> in a short phrase.",
    "What is in the region <location>? Describe in a phrase.",
    "Capture in a phrase: what's near region <location> in the picture?",
];

const REC: &[&str] = &[
    "Where is <object> in the image?",
    "What are the coordinates for the given <object> in the image?",
    "Given the image, could you please tell me where is <object>",
];

const PHRASE_GROUNDING: &[&str] = &[
    "What are the locations of <objects>?",
    "Could you provide me with the exact locations of <objects>?",
    "Please indicate the positions of <objects> in the image?",
];

const DETECTION: &[&str] = &[
    "Detect all objects among <class> in the image.",
    "Perform object detection given the image within <class>.",
    "Given the image and set <class>, identify all the objects that belong to the set.",
];

const GROUNDED_CAPTION: &[&str] = &[
    "What is this photo about? Use concise language.",
    "Describe the overall picture in just a few words.",
    "What do you see happening in this image? Provide the answer in short.",
];

const HALLUCINATION: &[&str] = &[
    "Is there a <object> in the image?",
    "Are there <object> in the image?",
    "Please tell me whether <object> exists in the image?",
];

pub fn templates_for(task: Task) -> &'static [&'static str] {
    match task {
        Task::ReferObject => REFER_OBJECT,
        Task::ReferRelation => REFER_RELATION,
        Task::ReferRegion => REFER_REGION,
        Task::Rec => REC,
        Task::PhraseGrounding => PHRASE_GROUNDING,
        Task::Detection => DETECTION,
        Task::GroundedCaption => GROUNDED_CAPTION,
        Task::Hallucination => HALLUCINATION,
    }
}

fn placeholder() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"<(location[12]?|objects|object[12]?|class)>").expect("static regex"))
}

/// Placeholder names used by any template of `task`.
pub fn slot_names(task: Task) -> Vec<&'static str> {
    let mut names: Vec<&str> = templates_for(task)
        .iter()
        .flat_map(|t| placeholder().captures_iter(t).map(|c| c.get(1).unwrap().as_str()))
        .collect();
    names.sort_unstable();
    names.dedup();
    names
}

/// Picks one of the task's templates uniformly from `seed` and substitutes
/// its placeholders in a single pass.
pub fn fill_template(task: Task, slots: &Slots, seed: u64) -> Result<String> {
    if let Some(missing) = slot_names(task).into_iter().find(|n| !slots.contains_key(*n)) {
        return Err(Error::MissingSlot(missing.to_string()));
    }
    let options = templates_for(task);
    let template = options[SplitRng::new(seed, STREAM_TEMPLATES).index(options.len())];
    Ok(placeholder()
        .replace_all(template, |c: &regex::Captures| slots[&c[1]].clone())
        .into_owned())
}

pub fn slots<const N: usize>(pairs: [(&str, String); N]) -> Slots {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}
