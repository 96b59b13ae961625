//! Referring-expression decomposition.
//!
//! A compositional query like "a chair between the dining table and window"
//! splits into a target noun phrase, optional attribute modifiers, and
//! landmark phrases each tagged with a spatial relation. Two parsers share
//! the output type: a deterministic rule parser built on a relation keyword
//! table and the bundled lexicons, and an LLM-backed parser that validates
//! the model's structured reply and falls back to the rules on failure.

mod lexicon;
mod llm;

pub use lexicon::Lexicon;
pub use llm::{parse_query_llm, LlmParse};

use crate::grounder::tokenize;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("query must be non-empty")]
    EmptyQuery,
    #[error("no recognizable head noun in span {span:?}")]
    NoHeadNoun { span: String },
    #[error("relation 'between' needs two landmarks joined by 'and', got {span:?}")]
    BetweenArity { span: String },
    #[error("landmark phrase {0:?} duplicates the target phrase")]
    LandmarkEqualsTarget(String),
}

/// Spatial relation between a target and its landmark(s).
///
/// `Between` is the only binary relation and always carries exactly two
/// landmark entries in a [`ParsedQuery`]. Relation words the pipeline
/// cannot honor (view-dependent ones like "left of" need a camera pose the
/// tools never expose) parse to `Unsupported` so downstream handles them
/// explicitly instead of silently misreading the query.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpatialRelation {
    Between,
    Near,
    In,
    On,
    Above,
    Below,
    Closest,
    Farthest,
    Unsupported(String),
}

impl SpatialRelation {
    pub fn is_supported(&self) -> bool {
        !matches!(self, SpatialRelation::Unsupported(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub phrase: String,
    pub relation: SpatialRelation,
}

/// Decomposed referring expression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedQuery {
    pub target: String,
    pub attributes: Vec<String>,
    pub landmarks: Vec<Landmark>,
    pub raw: String,
}

/// Relation keyword table. Longer keywords are tried first at each
/// position, so "in front of" wins over "in" and "on top of" over "on".
const RELATION_KEYWORDS: &[(&[&str], Option<SpatialRelation>)] = &[
    (&["in", "front", "of"], None),
    (&["to", "the", "left", "of"], None),
    (&["to", "the", "right", "of"], None),
    (&["on", "top", "of"], Some(SpatialRelation::On)),
    (&["closest", "to"], Some(SpatialRelation::Closest)),
    (&["nearest", "to"], Some(SpatialRelation::Closest)),
    (&["farthest", "from"], Some(SpatialRelation::Farthest)),
    (&["furthest", "from"], Some(SpatialRelation::Farthest)),
    (&["next", "to"], Some(SpatialRelation::Near)),
    (&["close", "to"], Some(SpatialRelation::Near)),
    (&["left", "of"], None),
    (&["right", "of"], None),
    (&["across", "from"], None),
    (&["between"], Some(SpatialRelation::Between)),
    (&["near"], Some(SpatialRelation::Near)),
    (&["beside"], Some(SpatialRelation::Near)),
    (&["in"], Some(SpatialRelation::In)),
    (&["inside"], Some(SpatialRelation::In)),
    (&["on"], Some(SpatialRelation::On)),
    (&["above"], Some(SpatialRelation::Above)),
    (&["over"], Some(SpatialRelation::Above)),
    (&["below"], Some(SpatialRelation::Below)),
    (&["under"], Some(SpatialRelation::Below)),
    (&["beneath"], Some(SpatialRelation::Below)),
    (&["underneath"], Some(SpatialRelation::Below)),
    (&["behind"], None),
    (&["facing"], None),
    (&["opposite"], None),
];

const DETERMINERS: &[&str] = &["a", "an", "the", "this", "that", "these", "those", "its"];

fn find_relation(tokens: &[String]) -> Option<(usize, usize, SpatialRelation)> {
    for start in 0..tokens.len() {
        let mut best: Option<(usize, SpatialRelation)> = None;
        for (keyword, relation) in RELATION_KEYWORDS {
            let end = start + keyword.len();
            if end > tokens.len() {
                continue;
            }
            if tokens[start..end].iter().zip(*keyword).all(|(t, k)| t == k)
                && best.as_ref().is_none_or(|(blen, _)| keyword.len() > *blen)
            {
                let rel = relation
                    .clone()
                    .unwrap_or_else(|| SpatialRelation::Unsupported(keyword.join(" ")));
                best = Some((keyword.len(), rel));
            }
        }
        if let Some((len, rel)) = best {
            return Some((start, start + len, rel));
        }
    }
    None
}

/// Strip determiners, peel leading modifiers into attributes, and validate
/// that a suffix of what remains is a known noun.
fn parse_noun_phrase(
    tokens: &[String],
    collect_attributes: bool,
) -> Result<(String, Vec<String>), ParseError> {
    let lex = Lexicon::bundled();
    let mut rest: Vec<String> = tokens
        .iter()
        .filter(|t| !DETERMINERS.contains(&t.as_str()))
        .cloned()
        .collect();
    let mut attributes = Vec::new();
    if collect_attributes {
        while rest.len() > 1 && lex.is_modifier(&rest[0]) && !lex.is_noun(&rest[..]) {
            attributes.push(rest.remove(0));
        }
    }
    let has_head = (0..rest.len()).any(|start| lex.is_noun(&rest[start..]));
    if rest.is_empty() || !has_head {
        return Err(ParseError::NoHeadNoun {
            span: tokens.join(" "),
        });
    }
    Ok((rest.join(" "), attributes))
}

/// Deterministic rule parser: split target span from landmark span(s) at the
/// first relation keyword, "between X and Y" yielding two landmarks.
pub fn parse_query_rules(text: &str) -> Result<ParsedQuery, ParseError> {
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return Err(ParseError::EmptyQuery);
    }
    let (target_span, landmark_spans, relation) = match find_relation(&tokens) {
        None => (tokens.as_slice(), Vec::new(), None),
        Some((start, end, relation)) => {
            let landmark_tokens = &tokens[end..];
            let spans: Vec<&[String]> = if relation == SpatialRelation::Between {
                let and_pos = landmark_tokens
                    .iter()
                    .position(|t| t == "and")
                    .ok_or_else(|| ParseError::BetweenArity {
                        span: landmark_tokens.join(" "),
                    })?;
                vec![&landmark_tokens[..and_pos], &landmark_tokens[and_pos + 1..]]
            } else {
                vec![landmark_tokens]
            };
            (&tokens[..start], spans, Some(relation))
        }
    };

    let (target, attributes) = parse_noun_phrase(target_span, true)?;
    let mut landmarks = Vec::new();
    if let Some(relation) = relation {
        for span in landmark_spans {
            let (phrase, _) = parse_noun_phrase(span, false)?;
            if phrase == target {
                return Err(ParseError::LandmarkEqualsTarget(phrase));
            }
            landmarks.push(Landmark {
                phrase,
                relation: relation.clone(),
            });
        }
    }
    Ok(ParsedQuery {
        target,
        attributes,
        landmarks,
        raw: text.to_string(),
    })
}

/// Query-complexity metric: nouns found by greedy longest match against the
/// bundled lexicon; multiword compounds count once.
pub fn count_nouns(text: &str) -> usize {
    Lexicon::bundled().count_nouns(&tokenize(text))
}

/// Structural invariants every accepted [`ParsedQuery`] must satisfy,
/// shared by both parsers (a hard gate for LLM output).
pub fn validate_query(query: &ParsedQuery) -> Result<(), String> {
    if query.target.trim().is_empty() {
        return Err("target phrase is empty".into());
    }
    let between_count = query
        .landmarks
        .iter()
        .filter(|l| l.relation == SpatialRelation::Between)
        .count();
    if between_count != 0 && between_count != 2 {
        return Err(format!(
            "relation 'between' requires exactly two landmarks, got {between_count}"
        ));
    }
    for landmark in &query.landmarks {
        if landmark.phrase.trim().is_empty() {
            return Err("landmark phrase is empty".into());
        }
        if landmark.phrase == query.target {
            return Err(format!(
                "landmark {:?} duplicates the target phrase",
                landmark.phrase
            ));
        }
    }
    Ok(())
}
