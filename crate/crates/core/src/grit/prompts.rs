//! Prompt assembly for LLM-assisted data generation.

use serde::{Deserialize, Serialize};

use super::convert::render_relative;
use super::llm::ChatPrompt;
use super::scene::SceneRecord;
use crate::error::{Error, Result};

pub const SEMANTIC_NEGATIVE_SYSTEM_PROMPT: &str = "You are an AI visual assistant that can analyze a single image. You receive several entities given by a list, each describing the objects in the image you are observing.

For each entity mentioned, change them with the most misleading entity name (may belong to the same category but are actually different) (nonexistent objects: man → woman, nonexistent attributes: brown → yellow, nonexistent quantities: two → three, etc.). The instructions should contain interrogative and declarative sentences.

The output format needs to be a list only which contains the misleading entity names. Please follow the instructions carefully.

1. The length of the output list needs to be exactly equal to the input list.

2. Do not explain the reasons.

3. Do not mention the input entities, at least the output name and input name needs to be different.

4. Do not mention something abstract, like \"alien\".

5. When dealing with quantities, focus solely on increasing the numbers during revision.

6. When dealing with words like \"a few\", \"a group\", \"several\", \"some\", etc., try changing the objects (A few men → A few women).

7. Ensure that inclusive words are not substituted with their specific subsets. For example, if the word is \"people,\" avoid replacing it with genders like \"man\" or \"woman.\" Instead, consider modifying them to different categories, such as \"people\" → \"animals.\".";

pub const CONVERSATION_SYSTEM_PROMPT: &str = "You are an AI visual assistant that can analyze a single image. You receive five global captions, each describing the same image you are observing. In addition, specific object locations within the image are given, along with detailed coordinates. These coordinates are in the form of bounding boxes, represented as (x1, y1, x2, y2) with floating numbers ranging from 0 to 1. These values correspond to the top left x, top left y, bottom right x, and bottom right y. Also, the relationships between pairs of objects are provided in the format of object → relationship → subject, where the object/subject are indexed by object id from previous object lists as well as the object names. Also, several region descriptions are given, each describing a box region of the image, with detailed coordinates.

Design a conversation between you and a person asking about this photo. Ask diverse questions and give corresponding answers. The answers should be in a tone that a visual AI assistant is seeing the image and answering the question.

Here are some additional requirements about generated questions and answers:

1. Only include questions that have definite answers:
(1) one can see the content in the image that the question asks about and can answer confidently;
(2) one can determine confidently from the image that it is not in the image. Do not ask any questions that cannot be answered confidently.

2. Also include complex questions that are relevant to the content in the image, for example, asking about background knowledge of the objects in the image, asking to discuss events happening in the image, asking about object actions in the context of entire images, etc. Again, do not ask about uncertain details.

3. Provide detailed answers when answering complex questions. For example, give detailed examples or reasoning steps to make the content more convincing and well-organized.  You can include multiple paragraphs if necessary.

4. In all samples, either in question or answer, you must mention bounding box coordinates to refer to the object or regions instead of directly saying the object name or describing the regions in text. In answer, explain the region in the context of the scene.

5. Do not mention that the information source is provided in the text/caption/region description.  Always answer as if you are directly looking at the image.

6. Make the question as diverse as possible. Include questions asking about the visual content of the image, including the object types, counting the objects, object actions, object locations, relative positions between objects, object selection, object functions, etc. Make the question challenging by less including the visual content details in the question.";

pub const REASONING_SYSTEM_PROMPT: &str = "You are an AI visual assistant that can analyze a single image. You receive five global captions, each describing the same image you are observing. In addition, specific object locations within the image are given, along with detailed coordinates. These coordinates are in the form of bounding boxes, represented as (x1, y1, x2, y2) with floating numbers ranging from 0 to 1. These values correspond to the top left x, top left y, bottom right x, and bottom right y. Also, the relationships between pairs of objects are provided, in the format of object → relationship → subject, where the object/subject are indexed by object id from previous object lists as well as the object names. Also, several region descriptions are given, each describing a box region of the image, with detailed coordinates.

The task is to use the provided image information (objects, attribute, relationship, region description, captions), create a plausible and challenging question about the image, and provide the answer in detail.

Create complex questions that mention specific regions of the image, but the question should require some knowledge-aware or high-level commonsense reasoning beyond describing the scene.

To answer such questions, one should first understand the visual content, then based on the background knowledge or reasoning, either explain why the things are happening that way or provide guides and help to the user's request.  Make the question challenging by not including the visual content details in the question so that the user needs to reason about that first.

Here are some additional requirements about generated questions and answers:

1. In question or answer, you must mention bounding box coordinates to refer to the object or regions, instead of directly say the object name or describing the regions in text.  In answers, explain the region in the context of scene. Include details like object counts, position of the objects, relative position between the objects.

2. Don't ask the question you are not confident to answer.  Only include question that have definite answer.

3. Do not mention that the information source is provided in text/catpion/region description.  Always answer as if you are directly looking at the image.

4. Make the question as diverse as possible and as complex-reasoning required as possible.";

pub const REFINE_SYSTEM_PROMPT: &str = "You are given a dialogue about an image in which objects and regions are referred to by bounding boxes [x1, y1, x2, y2] with floating numbers ranging from 0 to 1. Rewrite the dialogue so that it follows these rules, changing as little as possible.

1. Keep the Question/Answer structure and the \"===\" separators.

2. Every bounding box must directly follow the object or region it refers to.

3. Use only bounding boxes that already appear in the dialogue, copied exactly.

4. Remove any mention that the information comes from captions, text or region descriptions.

5. Output the rewritten dialogue only.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    /// Multi-round conversation.
    Conversation,
    /// One-round complex reasoning.
    Reasoning,
}

impl PromptKind {
    pub fn system_prompt(self) -> &'static str {
        match self {
            PromptKind::Conversation => CONVERSATION_SYSTEM_PROMPT,
            PromptKind::Reasoning => REASONING_SYSTEM_PROMPT,
        }
    }
}

/// A worked example: a scene context and the dialogue written for it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShot {
    pub context: String,
    pub response: String,
}

/// Asks for one misleading replacement per entity.
pub fn build_semantic_negative_prompt<S: AsRef<str>>(entities: &[S]) -> Result<ChatPrompt> {
    if entities.is_empty() {
        return Err(Error::EmptyInput("entity list".into()));
    }
    let list: Vec<&str> = entities.iter().map(AsRef::as_ref).collect();
    let n = list.len();
    let noun = if n == 1 { "name" } else { "names" };
    let mut p = ChatPrompt::new();
    p.system(SEMANTIC_NEGATIVE_SYSTEM_PROMPT).user(format!(
        "Entities: {}\nReturn a list of exactly {n} misleading entity {noun}.",
        serde_json::to_string(&list)?
    ));
    Ok(p)
}

/// The symbolic scene description: objects, relationships, region
/// descriptions and captions, with relative coordinates.
pub fn scene_context(scene: &SceneRecord) -> Result<String> {
    let mut lines = vec!["Objects".to_string()];
    for (i, o) in scene.objects.iter().enumerate() {
        lines.push(format!(
            "Object {i}: {} at {}.",
            o.name,
            render_relative(&scene.object_rel_box(i)?)
        ));
    }
    lines.push("Relationships".into());
    for r in &scene.relationships {
        lines.push(format!(
            "Object {} : {} → {} → Object {} : {}",
            r.object, scene.objects[r.object].name, r.predicate, r.subject, scene.objects[r.subject].name
        ));
    }
    lines.push("Region Descriptions".into());
    for r in &scene.regions {
        lines.push(format!(
            "Region Description at {} : {}",
            render_relative(&r.bbox),
            r.text.trim()
        ));
    }
    lines.push("Global Caption".into());
    lines.extend(scene.captions.iter().map(|c| c.trim().to_string()));
    Ok(lines.join("\n"))
}

/// System prompt, then each example as a user/assistant pair, then the
/// query scene.
pub fn build_conversation_prompt(kind: PromptKind, fewshot: &[FewShot], scene: &SceneRecord) -> Result<ChatPrompt> {
    scene.validate()?;
    let mut p = ChatPrompt::new();
    p.system(kind.system_prompt());
    for ex in fewshot {
        p.user(ex.context.clone()).assistant(ex.response.clone());
    }
    p.user(scene_context(scene)?);
    Ok(p)
}

/// Second pass over a generated dialogue.
pub fn build_refine_prompt(dialogue: &str) -> Result<ChatPrompt> {
    if dialogue.trim().is_empty() {
        return Err(Error::EmptyInput("dialogue".into()));
    }
    let mut p = ChatPrompt::new();
    p.system(REFINE_SYSTEM_PROMPT).user(dialogue.trim().to_string());
    Ok(p)
}
