//! Grounded text: free text with bracketed coordinate groups placed right
//! after the phrase they localize, e.g. `There is a dog [100, 150, 300, 200].`

use std::ops::Range;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::quantizer::{BinBox, BinCoords};

/// Longest phrase the parser attaches to a coordinate run.
pub const MAX_PHRASE_TOKENS: usize = 6;

/// A phrase and the coordinates that follow it. Ranges are byte offsets
/// into [`GroundedText::raw`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundedSpan {
    pub range: Range<usize>,
    pub phrase: String,
    pub coords: Vec<BinCoords>,
    pub coords_range: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundedText {
    pub raw: String,
    pub spans: Vec<GroundedSpan>,
}

impl GroundedText {
    pub fn parse(text: &str, n_bins: u32) -> Self {
        parse_grounded_text(text, n_bins)
    }

    pub fn plain(text: impl Into<String>) -> Self {
        Self {
            raw: text.into(),
            spans: Vec::new(),
        }
    }

    /// All coordinate groups in text order.
    pub fn coords(&self) -> impl Iterator<Item = &BinCoords> {
        self.spans.iter().flat_map(|s| s.coords.iter())
    }

    pub fn first_box(&self) -> Option<BinBox> {
        self.coords().next().map(BinCoords::as_box)
    }

    /// The raw text with every parsed coordinate run removed.
    pub fn strip_coords(&self) -> String {
        let mut out = String::with_capacity(self.raw.len());
        let mut pos = 0;
        for s in &self.spans {
            let mut start = s.coords_range.start;
            // drop the separating space too
            if self.raw[pos..start].ends_with(' ') {
                start -= 1;
            }
            out.push_str(&self.raw[pos..start]);
            pos = s.coords_range.end;
        }
        out.push_str(&self.raw[pos..]);
        out
    }
}

/// Assembles grounded text piece by piece, recording spans as it goes.
#[derive(Debug, Default, Clone)]
pub struct GroundedTextBuilder {
    raw: String,
    spans: Vec<GroundedSpan>,
}

impl GroundedTextBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn text(&mut self, s: &str) -> &mut Self {
        self.raw.push_str(s);
        self
    }

    /// Appends `phrase [..] [..]`.
    pub fn grounded(&mut self, phrase: &str, coords: &[BinCoords]) -> &mut Self {
        let start = self.raw.len();
        self.raw.push_str(phrase);
        let end = self.raw.len();
        if !coords.is_empty() {
            self.raw.push(' ');
        }
        let cstart = self.raw.len();
        for (i, c) in coords.iter().enumerate() {
            if i > 0 {
                self.raw.push(' ');
            }
            self.raw.push_str(&c.to_string());
        }
        self.spans.push(GroundedSpan {
            range: start..end,
            phrase: phrase.to_string(),
            coords: coords.to_vec(),
            coords_range: cstart..self.raw.len(),
        });
        self
    }

    pub fn build(self) -> GroundedText {
        GroundedText {
            raw: self.raw,
            spans: self.spans,
        }
    }
}

fn group_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\[\s*(\d+)\s*,\s*(\d+)\s*(?:,\s*(\d+)\s*,\s*(\d+)\s*)?\]").expect("static regex"))
}

/// Words that end a phrase when scanning backwards and are not part of it.
const BREAK_WORDS: &[&str] = &[
    "is", "are", "was", "were", "be", "been", "being", "am", "has", "have", "had", "do", "does", "did", "there",
    "here", "in", "on", "at", "with", "by", "from", "to", "into", "onto", "near", "under", "over", "behind", "above",
    "below", "beside", "between", "for", "about", "like", "through", "inside", "outside", "around", "across", "along",
    "against", "among", "and", "or", "but", "while", "where", "which", "who", "whom", "whose", "i", "you", "he", "she",
    "it", "we", "they", "me", "him", "them", "us", "see", "sees", "shows", "show", "contains", "include", "includes",
    "locate", "located", "find", "found", "what", "how", "why", "when", "if", "as", "than", "then",
];

/// Words that open a noun phrase; kept, and scanning stops after them.
const DETERMINERS: &[&str] = &[
    "a", "an", "the", "this", "that", "these", "those", "my", "your", "his", "her", "its", "our", "their", "some",
    "any", "each", "every", "another",
];

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '-' || c == '\'' || c == '_'
}

/// Byte range of the noun-like phrase ending right before `end`, looking
/// no further back than `floor`.
fn phrase_before(text: &str, floor: usize, end: usize) -> Range<usize> {
    let seg = &text[floor..end];
    let mut tokens: Vec<Range<usize>> = Vec::new();
    let mut cursor = seg.len();
    loop {
        let trimmed = seg[..cursor].trim_end();
        if trimmed.is_empty() {
            break;
        }
        let last = trimmed.chars().next_back().unwrap();
        if !is_word_char(last) {
            break;
        }
        let start = trimmed
            .char_indices()
            .rev()
            .take_while(|&(_, c)| is_word_char(c))
            .last()
            .map(|(i, _)| i)
            .unwrap();
        let word = trimmed[start..].to_lowercase();
        if BREAK_WORDS.contains(&word.as_str()) {
            break;
        }
        tokens.push(start..trimmed.len());
        cursor = start;
        if DETERMINERS.contains(&word.as_str()) || tokens.len() == MAX_PHRASE_TOKENS {
            break;
        }
    }
    match (tokens.last(), tokens.first()) {
        (Some(first), Some(last)) => floor + first.start..floor + last.end,
        _ => end..end,
    }
}

/// Extracts every well-formed coordinate group. Groups separated only by
/// whitespace attach to one phrase. Groups with out-of-range values or
/// inverted boxes stay plain text.
pub fn parse_grounded_text(text: &str, n_bins: u32) -> GroundedText {
    let mut runs: Vec<(Range<usize>, Vec<BinCoords>)> = Vec::new();
    for caps in group_regex().captures_iter(text) {
        let whole = caps.get(0).unwrap();
        let nums: Option<Vec<u32>> = (1..=4)
            .filter_map(|i| caps.get(i))
            .map(|m| m.as_str().parse::<u32>().ok())
            .collect();
        let Some(nums) = nums else { continue };
        let coords = match nums[..] {
            [x, y] => BinCoords::Point([x, y]),
            [a, b, c, d] => BinCoords::Box(BinBox([a, b, c, d])),
            _ => continue,
        };
        if !coords.is_valid(n_bins) {
            continue;
        }
        match runs.last_mut() {
            Some((range, list)) if text[range.end..whole.start()].trim().is_empty() => {
                range.end = whole.end();
                list.push(coords);
            }
            _ => runs.push((whole.range(), vec![coords])),
        }
    }

    let mut spans = Vec::with_capacity(runs.len());
    let mut floor = 0;
    for (coords_range, coords) in runs {
        let range = phrase_before(text, floor, coords_range.start);
        spans.push(GroundedSpan {
            phrase: text[range.clone()].to_string(),
            range,
            coords,
            coords_range: coords_range.clone(),
        });
        floor = coords_range.end;
    }
    GroundedText {
        raw: text.to_string(),
        spans,
    }
}
