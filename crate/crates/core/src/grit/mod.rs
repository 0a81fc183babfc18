//! Instruction-data compilation: scene records -> prompt/response samples,
//! GPT prompt assembly, spatial negative mining and polarity balancing.

pub mod convert;
pub mod llm;
pub mod negatives;
pub mod prompts;
pub mod scene;
pub mod templates;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

pub use convert::{append_pseudo_grounding, convert_all, convert_record, ConvertOptions, CoordStyle, Detection};
pub use llm::{ChatMessage, ChatPrompt, LlmClient, LlmSettings, StubClient};
pub use negatives::{
    balance, hallucination_positives, mine_negative_image_conditioned, mine_negative_semantic, parse_entity_list,
    refusal, semantic_entities, REFUSALS,
};
pub use prompts::{
    build_conversation_prompt, build_refine_prompt, build_semantic_negative_prompt, scene_context, PromptKind,
};
pub use scene::{example_scene, read_scenes, SceneObject, SceneRecord};
pub use templates::{fill_template, templates_for, Slots};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    ReferObject,
    ReferRelation,
    ReferRegion,
    Rec,
    PhraseGrounding,
    Detection,
    GroundedCaption,
    Hallucination,
}

impl Task {
    pub const ALL: [Task; 8] = [
        Task::ReferObject,
        Task::ReferRelation,
        Task::ReferRegion,
        Task::Rec,
        Task::PhraseGrounding,
        Task::Detection,
        Task::GroundedCaption,
        Task::Hallucination,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Task::ReferObject => "refer_object",
            Task::ReferRelation => "refer_relation",
            Task::ReferRegion => "refer_region",
            Task::Rec => "rec",
            Task::PhraseGrounding => "phrase_grounding",
            Task::Detection => "detection",
            Task::GroundedCaption => "grounded_caption",
            Task::Hallucination => "hallucination",
        }
    }

    /// Tasks whose responses carry coordinates.
    pub fn is_region_out(self) -> bool {
        matches!(
            self,
            Task::Rec | Task::PhraseGrounding | Task::Detection | Task::GroundedCaption
        )
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Task::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::UnknownTask(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Positive,
    Negative,
}

/// How a hallucination sample's category was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MiningType {
    /// Absent class drawn from a vocabulary.
    ImageConditioned,
    /// Misleading analog of a present entity, proposed by an LLM.
    SemanticConditioned,
}

/// One emitted prompt/response pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionSample {
    pub prompt: String,
    pub response: String,
    pub task: Task,
    pub polarity: Polarity,
    pub image_id: String,
    #[serde(skip)]
    pub mining: Option<MiningType>,
}
