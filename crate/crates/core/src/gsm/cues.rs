//! Deterministic cue extraction from goal descriptions: landmark names by
//! longest token match, object phrases by splitting at relation words.

use serde::{Deserialize, Serialize};

use super::GsmError;
use crate::text;
use crate::worldmodel::{Category, Scene, SceneObject};

/// Words that end an object phrase. Stop words end phrases too, except the
/// joiners below ("car with a sunroof" stays one phrase).
const RELATION_WORDS: &[&str] = &[
    "north", "south", "east", "west", "northeast", "northwest", "southeast", "southwest", "next", "beside", "behind",
    "front", "left", "right", "opposite", "across", "between", "along", "parked", "located", "standing", "lies", "sits",
    "close", "corner", "side", "end", "edge", "there", "which", "where", "but", "not", "inside", "within", "outside",
    "over", "under", "above", "below", "around", "towards", "toward", "past", "off", "into", "onto", "facing",
];

/// Tokens skipped inside a phrase without ending it.
const JOINERS: &[&str] = &["with", "a", "an", "the"];

/// Tokens dropped from attribute matching because they only complete a category name.
const CATEGORY_FILLERS: &[&str] = &["lot", "lots"];

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DescriptionCues {
    pub landmark_names: Vec<String>,
    pub goal_phrases: Vec<Vec<String>>,
    pub surrounding_phrases: Vec<Vec<String>>,
}

fn splits_phrase(tok: &str) -> bool {
    !JOINERS.contains(&tok) && (text::is_stop_word(tok) || RELATION_WORDS.contains(&tok))
}

/// Parses a description against the scene's visible landmark store. Without a
/// landmark match the partial cues are returned inside the error.
pub fn extract_cues(description: &str, scene: &Scene) -> Result<DescriptionCues, GsmError> {
    let toks = text::tokenize(description);
    let names: Vec<(Vec<String>, &str)> = scene
        .visible_landmarks()
        .map(|l| (text::tokenize(&l.name), l.name.as_str()))
        .filter(|(t, _)| !t.is_empty())
        .collect();

    let mut cues = DescriptionCues::default();
    let mut in_landmark = vec![false; toks.len()];
    let mut i = 0;
    while i < toks.len() {
        let best = names
            .iter()
            .filter(|(t, _)| toks[i..].starts_with(t))
            .max_by_key(|(t, _)| t.len());
        match best {
            Some((t, name)) => {
                if !cues.landmark_names.iter().any(|n| n == name) {
                    cues.landmark_names.push(name.to_string());
                }
                in_landmark[i..i + t.len()].iter_mut().for_each(|b| *b = true);
                i += t.len();
            }
            None => i += 1,
        }
    }

    let mut chunks: Vec<Vec<String>> = Vec::new();
    let mut cur: Vec<String> = Vec::new();
    for (tok, lm) in toks.iter().zip(&in_landmark) {
        if *lm || splits_phrase(tok) {
            if !cur.is_empty() {
                chunks.push(std::mem::take(&mut cur));
            }
        } else if !JOINERS.contains(&tok.as_str()) {
            cur.push(tok.clone());
        }
    }
    if !cur.is_empty() {
        chunks.push(cur);
    }
    for chunk in chunks {
        if !chunk.iter().any(|t| Category::from_keyword(t).is_some()) {
            continue;
        }
        if cues.goal_phrases.is_empty() {
            cues.goal_phrases.push(chunk);
        } else {
            cues.surrounding_phrases.push(chunk);
        }
    }

    if cues.landmark_names.is_empty() {
        Err(GsmError::NoLandmarkFound(cues))
    } else {
        Ok(cues)
    }
}

/// An object matches a phrase when the phrase's category word (if any) names its
/// category and, if the phrase carries attribute words, one of them is among
/// the object's name tokens.
pub fn phrase_matches(phrase: &[String], obj: &SceneObject) -> bool {
    let cat = phrase.iter().find_map(|t| Category::from_keyword(t));
    if cat.is_some_and(|c| c != obj.category) {
        return false;
    }
    let mut attrs = phrase
        .iter()
        .filter(|t| Category::from_keyword(t).is_none() && !CATEGORY_FILLERS.contains(&t.as_str()))
        .peekable();
    if attrs.peek().is_none() {
        return cat.is_some();
    }
    attrs.any(|a| obj.name_tokens.iter().any(|n| n == a))
}
