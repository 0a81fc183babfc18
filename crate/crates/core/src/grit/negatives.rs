//! Spatial negative mining and polarity balancing.

use std::collections::BTreeMap;

use super::convert::seed_stream;
use super::llm::LlmClient;
use super::prompts::build_semantic_negative_prompt;
use super::scene::SceneRecord;
use super::templates::{fill_template, slots};
use super::{InstructionSample, MiningType, Polarity, Task};
use crate::error::{Error, Result};
use crate::grounding::GroundedTextBuilder;
use crate::quantizer::{BinCoords, QuantizerConfig};
use crate::sampler::rng::{SplitRng, STREAM_TEMPLATES};

/// Answers to a question about something that is not in the image.
pub const REFUSALS: [&str; 3] = [
    "No, there is no {class} in the image.",
    "There is no {class} in the image.",
    "Sorry, I cannot find any {class} in the image.",
];

pub fn refusal(class: &str, variant: usize) -> String {
    REFUSALS[variant % REFUSALS.len()].replace("{class}", class)
}

const SALT_IMAGE_NEG: u64 = 100;
const SALT_SEMANTIC: u64 = 101;
const SALT_BALANCE: u64 = 102;

fn key(s: &str) -> String {
    s.trim().to_lowercase()
}

fn hallucination_sample(
    scene: &SceneRecord,
    object: &str,
    response: String,
    polarity: Polarity,
    mining: MiningType,
    seed: u64,
) -> Result<InstructionSample> {
    Ok(InstructionSample {
        prompt: fill_template(Task::Hallucination, &slots([("object", object.to_string())]), seed)?,
        response,
        task: Task::Hallucination,
        polarity,
        image_id: scene.image_id.clone(),
        mining: Some(mining),
    })
}

fn confirm(name: &str, coords: &[BinCoords]) -> String {
    let mut b = GroundedTextBuilder::new();
    b.text("Yes, there is ").grounded(name, coords).text(" in the image.");
    b.build().raw
}

/// One positive per present class, answered with all of its boxes.
pub fn hallucination_positives(scene: &SceneRecord, q: QuantizerConfig, seed: u64) -> Result<Vec<InstructionSample>> {
    let mut rng = SplitRng::new(seed, STREAM_TEMPLATES);
    let mut out = Vec::new();
    for name in scene.class_names() {
        let coords = (0..scene.objects.len())
            .filter(|&i| scene.objects[i].name.eq_ignore_ascii_case(name))
            .map(|i| scene.object_bins(i, q))
            .collect::<Result<Vec<_>>>()?;
        out.push(hallucination_sample(
            scene,
            name,
            confirm(name, &coords),
            Polarity::Positive,
            MiningType::ImageConditioned,
            rng.next_u64(),
        )?);
    }
    Ok(out)
}

/// Asks about a vocabulary class absent from the scene.
pub fn mine_negative_image_conditioned<S: AsRef<str>>(
    scene: &SceneRecord,
    vocabulary: &[S],
    seed: u64,
) -> Result<InstructionSample> {
    let present: Vec<String> = scene.objects.iter().map(|o| key(&o.name)).collect();
    let mut candidates: Vec<&str> = Vec::new();
    for v in vocabulary.iter().map(|v| v.as_ref().trim()) {
        let k = key(v);
        if !v.is_empty() && !present.contains(&k) && !candidates.iter().any(|c| key(c) == k) {
            candidates.push(v);
        }
    }
    if candidates.is_empty() {
        return Err(Error::ExhaustedVocabulary(scene.image_id.clone()));
    }
    let mut rng = seed_stream(seed, &scene.image_id, SALT_IMAGE_NEG);
    let class = candidates[rng.index(candidates.len())];
    let variant = rng.index(REFUSALS.len());
    hallucination_sample(
        scene,
        class,
        refusal(class, variant),
        Polarity::Negative,
        MiningType::ImageConditioned,
        rng.next_u64(),
    )
}

/// Distinct grounded caption phrases and the boxes they are tied to.
pub fn semantic_entities(scene: &SceneRecord, q: QuantizerConfig) -> Result<Vec<(String, Vec<BinCoords>)>> {
    let mut out: Vec<(String, Vec<BinCoords>)> = Vec::new();
    for g in &scene.groundings {
        let phrase = scene.captions[g.caption][g.range[0]..g.range[1]].trim().to_string();
        if phrase.is_empty() {
            continue;
        }
        let coords = scene.object_bins(g.object, q)?;
        match out.iter_mut().find(|(p, _)| key(p) == key(&phrase)) {
            Some((_, c)) if !c.contains(&coords) => c.push(coords),
            Some(_) => {}
            None => out.push((phrase, vec![coords])),
        }
    }
    Ok(out)
}

/// Reads a list of names from an LLM reply: a JSON array, a Python-style
/// list with single quotes, or one name per line or comma.
pub fn parse_entity_list(reply: &str) -> Vec<String> {
    let t = reply.trim();
    if let Ok(v) = serde_json::from_str::<Vec<String>>(t) {
        return v.into_iter().map(|s| s.trim().to_string()).collect();
    }
    let inner = t.trim_start_matches('[').trim_end_matches(']');
    let sep = if inner.contains('\n') { '\n' } else { ',' };
    inner
        .split(sep)
        .map(|s| {
            s.trim()
                .trim_start_matches(|c: char| c.is_ascii_digit() || c == '.' || c == '-' || c == ')')
                .trim()
                .trim_matches(|c| c == '"' || c == '\'' || c == ',')
                .trim()
                .to_string()
        })
        .filter(|s| !s.is_empty())
        .collect()
}

/// Asks the client for misleading versions of the scene's grounded
/// entities, then emits a negative per replacement and a positive per
/// original entity.
pub fn mine_negative_semantic(
    scene: &SceneRecord,
    client: &dyn LlmClient,
    q: QuantizerConfig,
    seed: u64,
) -> Result<Vec<InstructionSample>> {
    let entities = semantic_entities(scene, q)?;
    if entities.is_empty() {
        return Ok(Vec::new());
    }
    let names: Vec<&str> = entities.iter().map(|(p, _)| p.as_str()).collect();
    let reply = client.complete(&build_semantic_negative_prompt(&names)?)?;
    let misleading = parse_entity_list(&reply);
    if misleading.len() != names.len() {
        return Err(Error::Llm(format!(
            "expected {} misleading names for {}, got {}",
            names.len(),
            scene.image_id,
            misleading.len()
        )));
    }
    let present: Vec<String> = scene
        .objects
        .iter()
        .map(|o| key(&o.name))
        .chain(names.iter().map(|n| key(n)))
        .collect();
    let mut rng = seed_stream(seed, &scene.image_id, SALT_SEMANTIC);
    let mut out = Vec::new();
    for m in &misleading {
        if present.contains(&key(m)) {
            continue;
        }
        let variant = rng.index(REFUSALS.len());
        out.push(hallucination_sample(
            scene,
            m,
            refusal(m, variant),
            Polarity::Negative,
            MiningType::SemanticConditioned,
            rng.next_u64(),
        )?);
    }
    for (phrase, coords) in &entities {
        out.push(hallucination_sample(
            scene,
            phrase,
            confirm(phrase, coords),
            Polarity::Positive,
            MiningType::SemanticConditioned,
            rng.next_u64(),
        )?);
    }
    Ok(out)
}

/// Downsamples the larger polarity within each mining type to the size of
/// the smaller one. Samples without a mining type pass through. Order is
/// preserved.
pub fn balance(samples: Vec<InstructionSample>, seed: u64) -> Vec<InstructionSample> {
    let mut groups: BTreeMap<(MiningType, bool), Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        if let Some(m) = s.mining {
            groups.entry((m, s.polarity == Polarity::Positive)).or_default().push(i);
        }
    }
    let mut keep = vec![true; samples.len()];
    let mut rng = SplitRng::new(seed, STREAM_TEMPLATES + 1 + SALT_BALANCE);
    for m in [MiningType::ImageConditioned, MiningType::SemanticConditioned] {
        let pos = groups.get(&(m, true)).map_or(0, Vec::len);
        let neg = groups.get(&(m, false)).map_or(0, Vec::len);
        let target = pos.min(neg);
        for positive in [true, false] {
            let Some(idx) = groups.get_mut(&(m, positive)) else {
                continue;
            };
            if idx.len() <= target {
                continue;
            }
            // partial shuffle: the first `target` slots are the survivors
            for i in 0..target {
                let j = i + rng.index(idx.len() - i);
                idx.swap(i, j);
            }
            for &dropped in &idx[target..] {
                keep[dropped] = false;
            }
        }
    }
    samples
        .into_iter()
        .zip(keep)
        .filter_map(|(s, k)| k.then_some(s))
        .collect()
}
