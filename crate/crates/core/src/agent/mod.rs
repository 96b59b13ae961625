//! LLM agent orchestration loop.
//!
//! Each round the model replies with four plain-text sections
//! (observation, reasoning, plan, self-critique) and exactly one action:
//! a tool call against the target or landmark finder, or a final answer
//! citing a candidate id a tool previously returned. Tool results are fed
//! back as user messages. On budget exhaustion, an unparseable reply after
//! one reprompt, or upstream failure, the loop degrades to the
//! deterministic resolver instead of erroring, because the benchmark
//! scores every query.

pub mod chat;

pub use chat::{ChatClient, ChatError, ChatMessage, ChatTransport, HttpChatTransport};

use crate::geometry::{Aabb, PointCloud};
use crate::grounder::{
    landmark_finder, target_finder, Candidate, GrounderParams, RelevanceBackend,
};
use crate::spatial::{resolve, VolumeFilterConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
#[error("reply format error: {message} (offending span: {span:?})")]
pub struct ReplyFormatError {
    pub message: String,
    pub span: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ToolKind {
    TargetFinder,
    LandmarkFinder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub tool: ToolKind,
    pub phrase: String,
    /// Optional relation context on landmark calls.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AgentAction {
    Tool(ToolCall),
    Final { candidate_id: u32 },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Sections {
    pub observation: String,
    pub reasoning: String,
    pub plan: String,
    pub self_critique: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentStep {
    pub round: u32,
    pub sections: Sections,
    pub action: AgentAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolExchange {
    pub round: u32,
    pub call: ToolCall,
    pub response_text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Outcome {
    FinalAnswer { candidate: Candidate },
    FallbackUsed { reason: String, candidate: Candidate },
    Failed { reason: String },
}

/// Complete, replayable record of one agent run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub query: String,
    pub steps: Vec<AgentStep>,
    pub tool_exchanges: Vec<ToolExchange>,
    pub outcome: Outcome,
    pub rounds_used: u32,
    pub tool_calls_used: u32,
}

impl Transcript {
    pub fn chosen_box(&self) -> Option<Aabb> {
        match &self.outcome {
            Outcome::FinalAnswer { candidate } | Outcome::FallbackUsed { candidate, .. } => {
                Some(candidate.aabb)
            }
            Outcome::Failed { .. } => None,
        }
    }

    pub fn write(&self, path: &std::path::Path) -> std::io::Result<()> {
        std::fs::write(
            path,
            serde_json::to_string_pretty(self).expect("serializable"),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub max_rounds: u32,
    pub max_tool_calls: u32,
    pub timeout_secs: u64,
}

impl Default for Budget {
    fn default() -> Self {
        Self {
            max_rounds: 5,
            max_tool_calls: 10,
            timeout_secs: 60,
        }
    }
}

pub const SYSTEM_PROMPT: &str = "\
You are a 3D visual grounding agent. A user gives you a referring \
expression describing one object in a 3D scene. You cannot see the scene; \
you interact with it only through two tools.

Tool APIs:
  target_finder(\"<noun phrase>\")
    Finds candidate locations for a noun phrase. Returns a list of \
candidates, each with an id, centroid (Cx, Cy, Cz), extents (dX, dY, dZ) \
in meters, and volume in cubic meters.
  landmark_finder(\"<noun phrase>\")
    Finds the best box for a landmark phrase and returns the Euclidean \
distance from each current target candidate's centroid to the landmark's \
centroid.

Every reply must contain these four sections, each starting on its own \
line with the exact header:
OBSERVATION: summarize what you know so far.
REASONING: your mental scratchpad for high-level planning.
PLAN: the concrete next steps, including any tool use or comparison.
SELF-CRITIQUE: reflect on the plan and correct it if needed.

After the sections, emit exactly one action line, either
ACTION: target_finder(\"...\")
ACTION: landmark_finder(\"...\")
or, once you can decide,
ACTION: final_answer(<candidate id>)

Ground the target one noun phrase at a time: query the target class \
first, then each landmark, then pick the candidate whose volume is \
plausible and whose distances comply with the spatial relations in the \
query. A volume as small as 0.01 cubic meters is probably a false \
positive. final_answer must cite a candidate id returned by \
target_finder.";

/// Parse one model reply into sections plus its single action.
///
/// Section headers are case-insensitive, may appear in any order, and
/// missing sections default to empty. Zero or multiple action lines are a
/// format error.
pub fn parse_agent_reply(text: &str) -> Result<(Sections, AgentAction), ReplyFormatError> {
    let mut slots: [String; 4] = Default::default();
    let mut actions: Vec<(AgentAction, String)> = Vec::new();
    let mut current: Option<usize> = None;
    for line in text.lines() {
        let trimmed = line.trim();
        let upper = trimmed.to_uppercase();
        if let Some(rest) = upper.strip_prefix("ACTION:") {
            let raw = trimmed[trimmed.len() - rest.trim_start().len()..].trim();
            actions.push((parse_action(raw)?, trimmed.to_string()));
            current = None;
            continue;
        }
        let header = ["OBSERVATION:", "REASONING:", "PLAN:", "SELF-CRITIQUE:"]
            .iter()
            .position(|h| upper.starts_with(h));
        if let Some(idx) = header {
            let h_len = ["OBSERVATION:", "REASONING:", "PLAN:", "SELF-CRITIQUE:"][idx].len();
            slots[idx] = trimmed[h_len..].trim_start().to_string();
            current = Some(idx);
            continue;
        }
        if let Some(idx) = current {
            if !trimmed.is_empty() {
                if !slots[idx].is_empty() {
                    slots[idx].push('\n');
                }
                slots[idx].push_str(trimmed);
            }
        }
    }
    let [observation, reasoning, plan, self_critique] = slots;
    let sections = Sections {
        observation,
        reasoning,
        plan,
        self_critique,
    };
    match actions.len() {
        0 => Err(ReplyFormatError {
            message: "no action line found".into(),
            span: text.chars().take(120).collect(),
        }),
        1 => Ok((sections, actions.pop().unwrap().0)),
        n => Err(ReplyFormatError {
            message: format!("{n} action lines found, expected exactly one"),
            span: actions[1].1.clone(),
        }),
    }
}

fn parse_action(raw: &str) -> Result<AgentAction, ReplyFormatError> {
    let err = |message: &str| ReplyFormatError {
        message: message.into(),
        span: raw.to_string(),
    };
    let open = raw.find('(').ok_or_else(|| err("missing '(' in action"))?;
    let close = raw.rfind(')').ok_or_else(|| err("missing ')' in action"))?;
    if close < open {
        return Err(err("malformed parentheses in action"));
    }
    let name = raw[..open].trim().to_lowercase();
    let args = raw[open + 1..close].trim();
    match name.as_str() {
        "final_answer" => {
            let id: u32 = args
                .trim_matches(|c: char| c == '"' || c.is_whitespace())
                .strip_prefix("candidate")
                .map(str::trim)
                .unwrap_or(args)
                .trim()
                .parse()
                .map_err(|_| err("final_answer argument must be a candidate id"))?;
            Ok(AgentAction::Final { candidate_id: id })
        }
        "target_finder" | "landmark_finder" => {
            let mut parts = split_string_args(args).ok_or_else(|| {
                err("tool arguments must be double-quoted strings")
            })?;
            if parts.is_empty() || parts[0].trim().is_empty() {
                return Err(err("tool call needs a non-empty phrase"));
            }
            let phrase = parts.remove(0);
            let context = parts.into_iter().next();
            let tool = if name == "target_finder" {
                ToolKind::TargetFinder
            } else {
                ToolKind::LandmarkFinder
            };
            Ok(AgentAction::Tool(ToolCall {
                tool,
                phrase,
                context,
            }))
        }
        other => Err(err(&format!("unknown action {other:?}"))),
    }
}

fn split_string_args(args: &str) -> Option<Vec<String>> {
    let mut out = Vec::new();
    let mut rest = args.trim();
    while !rest.is_empty() {
        rest = rest.strip_prefix('"')?;
        let end = rest.find('"')?;
        out.push(rest[..end].to_string());
        rest = rest[end + 1..].trim_start();
        if let Some(r) = rest.strip_prefix(',') {
            rest = r.trim_start();
        } else if !rest.is_empty() {
            return None;
        }
    }
    Some(out)
}

fn format_box(aabb: &Aabb) -> String {
    format!(
        "centroid=({:.3}, {:.3}, {:.3}) extents=({:.3}, {:.3}, {:.3})",
        aabb.centroid.x,
        aabb.centroid.y,
        aabb.centroid.z,
        aabb.extents[0],
        aabb.extents[1],
        aabb.extents[2]
    )
}

pub struct AgentEnv<'a> {
    pub scene: &'a PointCloud,
    pub params: &'a GrounderParams,
    pub backend: &'a RelevanceBackend,
    pub volume_config: &'a VolumeFilterConfig,
}

/// Run the full agent loop for one query. Always returns a transcript;
/// the outcome is `Failed` only when even the deterministic fallback
/// found no candidates.
pub fn run_agent(
    query: &str,
    env: &AgentEnv<'_>,
    client: &ChatClient,
    budget: &Budget,
) -> Transcript {
    let mut steps: Vec<AgentStep> = Vec::new();
    let mut exchanges: Vec<ToolExchange> = Vec::new();
    let mut messages = vec![
        ChatMessage::system(SYSTEM_PROMPT),
        ChatMessage::user(format!("Ground this query: {query}")),
    ];
    let mut tool_calls: u32 = 0;
    let mut reprompted_format = false;
    let mut reprompted_final = false;
    let mut known_targets: Vec<Candidate> = Vec::new();
    let mut rounds_used = 0;

    let fallback = |reason: String,
                    steps: Vec<AgentStep>,
                    exchanges: Vec<ToolExchange>,
                    rounds_used: u32,
                    tool_calls: u32| {
        let outcome = match resolve(
            env.scene,
            query,
            env.params,
            env.backend,
            env.volume_config,
        ) {
            Ok(selection) => Outcome::FallbackUsed {
                reason,
                candidate: selection.chosen,
            },
            Err(e) => Outcome::Failed {
                reason: format!("{reason}; deterministic fallback also failed: {e}"),
            },
        };
        Transcript {
            query: query.to_string(),
            steps,
            tool_exchanges: exchanges,
            outcome,
            rounds_used,
            tool_calls_used: tool_calls,
        }
    };

    for round in 0..budget.max_rounds {
        rounds_used = round + 1;
        let reply = match client.chat(&messages) {
            Ok(r) => r,
            Err(e) => {
                return fallback(
                    format!("upstream chat failed: {e}"),
                    steps,
                    exchanges,
                    rounds_used,
                    tool_calls,
                )
            }
        };
        messages.push(ChatMessage::assistant(reply.clone()));
        let (sections, action) = match parse_agent_reply(&reply) {
            Ok(parsed) => parsed,
            Err(e) => {
                if !reprompted_format {
                    reprompted_format = true;
                    log::warn!("agent reply failed to parse ({e}); reprompting once");
                    messages.push(ChatMessage::user(format!(
                        "Your reply could not be parsed: {e}. Reply again following \
                         the required section and action format exactly."
                    )));
                    continue;
                }
                return fallback(
                    format!("unparseable reply after reprompt: {e}"),
                    steps,
                    exchanges,
                    rounds_used,
                    tool_calls,
                );
            }
        };
        steps.push(AgentStep {
            round,
            sections,
            action: action.clone(),
        });
        match action {
            AgentAction::Final { candidate_id } => {
                match known_targets
                    .iter()
                    .find(|c| c.candidate_id == candidate_id)
                {
                    Some(candidate) => {
                        return Transcript {
                            query: query.to_string(),
                            steps,
                            tool_exchanges: exchanges,
                            outcome: Outcome::FinalAnswer {
                                candidate: candidate.clone(),
                            },
                            rounds_used,
                            tool_calls_used: tool_calls,
                        };
                    }
                    None => {
                        if !reprompted_final {
                            reprompted_final = true;
                            messages.push(ChatMessage::user(format!(
                                "Candidate id {candidate_id} was never returned by \
                                 target_finder. Cite one of the ids you received."
                            )));
                            continue;
                        }
                        return fallback(
                            format!("final answer cited unknown candidate id {candidate_id}"),
                            steps,
                            exchanges,
                            rounds_used,
                            tool_calls,
                        );
                    }
                }
            }
            AgentAction::Tool(call) => {
                if tool_calls >= budget.max_tool_calls {
                    return fallback(
                        "tool-call budget exhausted".to_string(),
                        steps,
                        exchanges,
                        rounds_used,
                        tool_calls,
                    );
                }
                tool_calls += 1;
                let response_text = match execute_tool(&call, env, &mut known_targets) {
                    Ok(text) => text,
                    Err(e) => format!("TOOL_ERROR {}: {e}", tool_name(call.tool)),
                };
                exchanges.push(ToolExchange {
                    round,
                    call,
                    response_text: response_text.clone(),
                });
                messages.push(ChatMessage::user(response_text));
            }
        }
    }
    fallback(
        "round budget exhausted without a final answer".to_string(),
        steps,
        exchanges,
        rounds_used,
        tool_calls,
    )
}

fn tool_name(tool: ToolKind) -> &'static str {
    match tool {
        ToolKind::TargetFinder => "target_finder",
        ToolKind::LandmarkFinder => "landmark_finder",
    }
}

fn execute_tool(
    call: &ToolCall,
    env: &AgentEnv<'_>,
    known_targets: &mut Vec<Candidate>,
) -> Result<String, crate::grounder::GrounderError> {
    match call.tool {
        ToolKind::TargetFinder => {
            let resp = target_finder(env.scene, &call.phrase, env.params, env.backend)?;
            let mut text = format!("TOOL_RESULT target_finder({:?}):\n", call.phrase);
            if let Some(note) = &resp.note {
                text.push_str(note);
                text.push('\n');
            }
            for c in &resp.candidates {
                text.push_str(&format!(
                    "candidate {}: {} volume={:.4}\n",
                    c.candidate_id,
                    format_box(&c.aabb),
                    c.volume
                ));
            }
            *known_targets = resp.candidates;
            Ok(text)
        }
        ToolKind::LandmarkFinder => {
            let resp =
                landmark_finder(env.scene, &call.phrase, env.params, env.backend, known_targets)?;
            let mut text = format!("TOOL_RESULT landmark_finder({:?}):\n", call.phrase);
            match &resp.landmark {
                None => text.push_str(resp.note.as_deref().unwrap_or("landmark not found")),
                Some(landmark) => {
                    text.push_str(&format!("landmark: {}\n", format_box(&landmark.aabb)));
                    for d in &resp.distances {
                        text.push_str(&format!(
                            "distance to candidate {}: {:.3}\n",
                            d.candidate_id, d.meters
                        ));
                    }
                    // record distances on the candidates for auditing
                    for t in known_targets.iter_mut() {
                        if let Some(d) = resp
                            .distances
                            .iter()
                            .find(|d| d.candidate_id == t.candidate_id)
                        {
                            t.landmark_distances.insert(call.phrase.clone(), d.meters);
                        }
                    }
                }
            }
            Ok(text)
        }
    }
}
