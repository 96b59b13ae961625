//! Chat-completions client with deterministic replay caching.
//!
//! Every request is keyed by a digest of (model, message list, temperature)
//! and cached as one human-readable JSON file per entry. Temperature is
//! pinned to 0, so a warmed cache makes whole agent runs replayable and
//! free. Corrupted entries are treated as misses and overwritten.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ChatError {
    #[error("no upstream endpoint configured and no cached reply for this request")]
    NoUpstream,
    #[error("upstream chat call failed: {0}")]
    Upstream(String),
    #[error("upstream reply malformed: {0}")]
    BadReply(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: "system".into(),
            content: content.into(),
        }
    }
    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: "user".into(),
            content: content.into(),
        }
    }
    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: "assistant".into(),
            content: content.into(),
        }
    }
}

/// Transport behind the cache: one completion call.
pub trait ChatTransport: Send + Sync {
    fn complete(
        &self,
        model: &str,
        messages: &[ChatMessage],
        temperature: f64,
    ) -> Result<String, ChatError>;
}

/// Chat-completions wire protocol over HTTP(S).
pub struct HttpChatTransport {
    pub endpoint: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    content: String,
}

impl ChatTransport for HttpChatTransport {
    fn complete(
        &self,
        model: &str,
        messages: &[ChatMessage],
        temperature: f64,
    ) -> Result<String, ChatError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .build()
            .into();
        let mut request = agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = request
            .send_json(&WireRequest {
                model,
                messages,
                temperature,
            })
            .map_err(|e| ChatError::Upstream(e.to_string()))?;
        let parsed: WireResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| ChatError::BadReply(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| ChatError::BadReply("empty choices".into()))
    }
}

/// On-disk cache entry; keeps the request alongside the reply for auditing.
#[derive(Debug, Serialize, Deserialize)]
struct CacheEntry {
    model: String,
    temperature: f64,
    messages: Vec<ChatMessage>,
    response: String,
}

#[derive(Debug, Default, Clone, Copy, Serialize, Deserialize)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub upstream_calls: u64,
}

pub struct ChatClient {
    pub model: String,
    pub temperature: f64,
    cache_dir: Option<PathBuf>,
    transport: Option<Arc<dyn ChatTransport>>,
    hits: AtomicU64,
    misses: AtomicU64,
    upstream_calls: AtomicU64,
    // upstream calls are rate limited globally per client
    rate: Mutex<Option<Instant>>,
    min_interval: Duration,
}

impl ChatClient {
    pub fn new(model: impl Into<String>) -> Self {
        Self {
            model: model.into(),
            temperature: 0.0,
            cache_dir: None,
            transport: None,
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
            upstream_calls: AtomicU64::new(0),
            rate: Mutex::new(None),
            min_interval: Duration::ZERO,
        }
    }

    pub fn with_cache_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.cache_dir = Some(dir.into());
        self
    }

    pub fn with_transport(mut self, transport: Arc<dyn ChatTransport>) -> Self {
        self.transport = Some(transport);
        self
    }

    pub fn with_min_interval(mut self, interval: Duration) -> Self {
        self.min_interval = interval;
        self
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            hits: self.hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
            upstream_calls: self.upstream_calls.load(Ordering::Relaxed),
        }
    }

    fn digest(&self, messages: &[ChatMessage]) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.model.as_bytes());
        hasher.update([0]);
        hasher.update(self.temperature.to_le_bytes());
        for m in messages {
            hasher.update(m.role.as_bytes());
            hasher.update([0]);
            hasher.update(m.content.as_bytes());
            hasher.update([0]);
        }
        hex::encode(hasher.finalize())
    }

    fn entry_path(&self, digest: &str) -> Option<PathBuf> {
        self.cache_dir.as_ref().map(|d| d.join(format!("{digest}.json")))
    }

    fn load_cached(&self, digest: &str, messages: &[ChatMessage]) -> Option<String> {
        let path = self.entry_path(digest)?;
        let text = std::fs::read_to_string(path).ok()?;
        let entry: CacheEntry = match serde_json::from_str(&text) {
            Ok(entry) => entry,
            Err(e) => {
                log::warn!("cache entry {digest} is corrupted ({e}); refetching");
                return None;
            }
        };
        // a corrupted or mismatching entry is a miss
        if entry.model != self.model
            || entry.temperature != self.temperature
            || entry.messages != messages
        {
            return None;
        }
        Some(entry.response)
    }

    fn store(&self, digest: &str, messages: &[ChatMessage], response: &str) -> Result<(), ChatError> {
        let Some(path) = self.entry_path(digest) else {
            return Ok(());
        };
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let entry = CacheEntry {
            model: self.model.clone(),
            temperature: self.temperature,
            messages: messages.to_vec(),
            response: response.to_string(),
        };
        // write-then-rename keeps concurrent readers off half-written entries
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, serde_json::to_string_pretty(&entry).expect("serializable"))?;
        std::fs::rename(&tmp, &path)?;
        Ok(())
    }

    /// Cache-first completion; at most one upstream call per unique request.
    pub fn chat(&self, messages: &[ChatMessage]) -> Result<String, ChatError> {
        assert!(!messages.is_empty(), "messages must be non-empty");
        let digest = self.digest(messages);
        if let Some(cached) = self.load_cached(&digest, messages) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(cached);
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let transport = self.transport.as_ref().ok_or(ChatError::NoUpstream)?;
        {
            let mut last = self.rate.lock().expect("rate lock");
            if let Some(prev) = *last {
                let elapsed = prev.elapsed();
                if elapsed < self.min_interval {
                    std::thread::sleep(self.min_interval - elapsed);
                }
            }
            *last = Some(Instant::now());
        }
        self.upstream_calls.fetch_add(1, Ordering::Relaxed);
        let response = transport.complete(&self.model, messages, self.temperature)?;
        self.store(&digest, messages, &response)?;
        Ok(response)
    }
}

/// Portable cache bundle for replay on another machine.
#[derive(Debug, Serialize, Deserialize)]
pub struct CacheBundle {
    entries: std::collections::BTreeMap<String, serde_json::Value>,
}

pub fn cache_entry_count(dir: &Path) -> std::io::Result<usize> {
    if !dir.exists() {
        return Ok(0);
    }
    Ok(std::fs::read_dir(dir)?
        .filter_map(Result::ok)
        .filter(|e| e.path().extension().is_some_and(|x| x == "json"))
        .count())
}

pub fn cache_clear(dir: &Path) -> std::io::Result<usize> {
    let mut removed = 0;
    if dir.exists() {
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().is_some_and(|x| x == "json") {
                std::fs::remove_file(path)?;
                removed += 1;
            }
        }
    }
    Ok(removed)
}

pub fn cache_export(dir: &Path, out: &Path) -> std::io::Result<usize> {
    let mut entries = std::collections::BTreeMap::new();
    if dir.exists() {
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().is_some_and(|x| x == "json") {
                let stem = path.file_stem().unwrap().to_string_lossy().to_string();
                let value: serde_json::Value =
                    serde_json::from_str(&std::fs::read_to_string(&path)?)
                        .map_err(std::io::Error::other)?;
                entries.insert(stem, value);
            }
        }
    }
    let bundle = CacheBundle { entries };
    std::fs::write(out, serde_json::to_string_pretty(&bundle).expect("serializable"))?;
    Ok(bundle.entries.len())
}

pub fn cache_import(bundle_path: &Path, dir: &Path) -> std::io::Result<usize> {
    let bundle: CacheBundle = serde_json::from_str(&std::fs::read_to_string(bundle_path)?)
        .map_err(std::io::Error::other)?;
    std::fs::create_dir_all(dir)?;
    for (digest, value) in &bundle.entries {
        std::fs::write(
            dir.join(format!("{digest}.json")),
            serde_json::to_string_pretty(value).expect("serializable"),
        )?;
    }
    Ok(bundle.entries.len())
}
