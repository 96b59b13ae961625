//! LLM-backed query decomposition with schema validation and fallback.

use super::{parse_query_rules, validate_query, Landmark, ParseError, ParsedQuery, SpatialRelation};
use crate::agent::chat::{ChatClient, ChatMessage};
use serde::Deserialize;

const PARSE_INSTRUCTION: &str = "\
Decompose the following 3D referring expression into JSON with this exact \
shape and nothing else:
{\"target\": \"<head noun phrase>\", \"attributes\": [\"<modifier>\", ...], \
\"landmarks\": [{\"phrase\": \"<noun phrase>\", \"relation\": \"<RELATION>\"}, ...]}
RELATION must be one of BETWEEN, NEAR, IN, ON, ABOVE, BELOW, CLOSEST, \
FARTHEST, or UNSUPPORTED. A BETWEEN query lists exactly two landmarks, \
both tagged BETWEEN. View-dependent relations (left, right, front, \
behind) are UNSUPPORTED. Landmark phrases must differ from the target.";

/// Result of the LLM parser: the query plus how it was obtained.
#[derive(Debug, Clone, PartialEq)]
pub struct LlmParse {
    pub query: ParsedQuery,
    pub retries: u32,
    /// True when the model failed twice and the rule parser supplied the
    /// result instead.
    pub degraded: bool,
}

#[derive(Deserialize)]
struct ReplyLandmark {
    phrase: String,
    relation: String,
}

#[derive(Deserialize)]
struct ReplyQuery {
    target: String,
    #[serde(default)]
    attributes: Vec<String>,
    #[serde(default)]
    landmarks: Vec<ReplyLandmark>,
}

fn relation_from_str(s: &str) -> SpatialRelation {
    match s.to_uppercase().as_str() {
        "BETWEEN" => SpatialRelation::Between,
        "NEAR" => SpatialRelation::Near,
        "IN" => SpatialRelation::In,
        "ON" => SpatialRelation::On,
        "ABOVE" => SpatialRelation::Above,
        "BELOW" => SpatialRelation::Below,
        "CLOSEST" => SpatialRelation::Closest,
        "FARTHEST" => SpatialRelation::Farthest,
        other => SpatialRelation::Unsupported(other.to_lowercase()),
    }
}

fn validate_reply(reply: &str, raw: &str) -> Result<ParsedQuery, String> {
    // tolerate a fenced code block around the JSON
    let body = reply
        .trim()
        .trim_start_matches("```json")
        .trim_start_matches("```")
        .trim_end_matches("```")
        .trim();
    let parsed: ReplyQuery =
        serde_json::from_str(body).map_err(|e| format!("reply is not valid JSON: {e}"))?;
    let query = ParsedQuery {
        target: parsed.target,
        attributes: parsed.attributes,
        landmarks: parsed
            .landmarks
            .into_iter()
            .map(|l| Landmark {
                phrase: l.phrase,
                relation: relation_from_str(&l.relation),
            })
            .collect(),
        raw: raw.to_string(),
    };
    validate_query(&query)?;
    Ok(query)
}

/// Parse via the LLM, retrying once with the validation error quoted back;
/// on a second failure fall back to [`parse_query_rules`] and flag the
/// result as degraded.
pub fn parse_query_llm(text: &str, client: &ChatClient) -> Result<LlmParse, ParseError> {
    if text.trim().is_empty() {
        return Err(ParseError::EmptyQuery);
    }
    let mut messages = vec![
        ChatMessage::system(PARSE_INSTRUCTION),
        ChatMessage::user(text.to_string()),
    ];
    let mut retries = 0;
    for attempt in 0..2 {
        match client.chat(&messages) {
            Ok(reply) => match validate_reply(&reply, text) {
                Ok(query) => {
                    return Ok(LlmParse {
                        query,
                        retries,
                        degraded: false,
                    })
                }
                Err(validation_error) => {
                    if attempt == 0 {
                        retries += 1;
                        messages.push(ChatMessage::assistant(reply));
                        messages.push(ChatMessage::user(format!(
                            "Your reply was rejected: {validation_error}. \
                             Reply again with only the corrected JSON."
                        )));
                    }
                }
            },
            Err(_) if attempt == 0 => {
                retries += 1;
            }
            Err(_) => break,
        }
    }
    let query = parse_query_rules(text)?;
    Ok(LlmParse {
        query,
        retries,
        degraded: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::chat::{ChatError, ChatTransport};
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::{Arc, Mutex};

    struct ScriptedTransport {
        replies: Mutex<Vec<String>>,
        calls: AtomicUsize,
    }

    impl ScriptedTransport {
        fn new(replies: Vec<&str>) -> Arc<Self> {
            Arc::new(Self {
                replies: Mutex::new(replies.into_iter().rev().map(String::from).collect()),
                calls: AtomicUsize::new(0),
            })
        }
    }

    impl ChatTransport for ScriptedTransport {
        fn complete(
            &self,
            _model: &str,
            _messages: &[ChatMessage],
            _temperature: f64,
        ) -> Result<String, ChatError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.replies
                .lock()
                .unwrap()
                .pop()
                .ok_or_else(|| ChatError::Upstream("script exhausted".into()))
        }
    }

    const FIG1_JSON: &str = r#"{"target": "chair", "attributes": [], "landmarks": [
        {"phrase": "dining table", "relation": "BETWEEN"},
        {"phrase": "window", "relation": "BETWEEN"}]}"#;

    fn client(transport: Arc<ScriptedTransport>) -> ChatClient {
        ChatClient::new("test").with_transport(transport)
    }

    #[test]
    fn valid_reply_matches_rule_parser() {
        let text = "a chair between the dining table and window";
        let c = client(ScriptedTransport::new(vec![FIG1_JSON]));
        let result = parse_query_llm(text, &c).unwrap();
        assert!(!result.degraded);
        assert_eq!(result.retries, 0);
        assert_eq!(result.query, parse_query_rules(text).unwrap());
    }

    #[test]
    fn malformed_then_valid_counts_one_retry() {
        let text = "a chair between the dining table and window";
        let c = client(ScriptedTransport::new(vec!["not json at all", FIG1_JSON]));
        let result = parse_query_llm(text, &c).unwrap();
        assert_eq!(result.retries, 1);
        assert!(!result.degraded);
        assert_eq!(result.query.target, "chair");
    }

    #[test]
    fn double_failure_falls_back_to_rules() {
        let text = "a chair between the dining table and window";
        let c = client(ScriptedTransport::new(vec!["garbage", "{\"target\": \"\"}"]));
        let result = parse_query_llm(text, &c).unwrap();
        assert!(result.degraded);
        assert_eq!(result.query, parse_query_rules(text).unwrap());
    }

    #[test]
    fn invariant_violations_are_rejected() {
        // landmark duplicating the target must not be accepted
        let bad = r#"{"target": "chair", "landmarks": [{"phrase": "chair", "relation": "NEAR"}]}"#;
        let c = client(ScriptedTransport::new(vec![bad, bad]));
        let result = parse_query_llm("a chair near the window", &c).unwrap();
        assert!(result.degraded);
        assert_eq!(result.query.landmarks[0].phrase, "window");
    }
}
