//! Persistent, append-only response cache keyed by canonical request keys.
//!
//! On disk the cache is one JSON file per tool, `<root>/<category>/<tool>.json`,
//! holding every stored call for that tool grouped by API name. Records are
//! kept in storage order; the newest record of an API is the last one.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::classifier::{classify, is_cacheable, ApiStatus};
use crate::model::{
    canonical_key, ApiIdentifier, ApiResponse, CallRequest, KeyDerivationError, ToolRef,
};

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("cache I/O error at {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("corrupt cache file {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error("malformed record dump {path}:{line}: {reason}")]
    ImportFormat {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error(transparent)]
    Key(#[from] KeyDerivationError),
}

impl CacheError {
    fn io(path: &Path) -> impl FnOnce(io::Error) -> CacheError + '_ {
        move |source| CacheError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Where a record came from. Earlier variants take priority at import time.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub enum CacheSource {
    TrainSet,
    TestSet,
    NewExperiment,
}

impl CacheSource {
    pub const ALL: [CacheSource; 3] = [
        CacheSource::TrainSet,
        CacheSource::TestSet,
        CacheSource::NewExperiment,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub key: String,
    pub request: CallRequest,
    pub response: ApiResponse,
    pub status: ApiStatus,
    pub source: CacheSource,
    pub stored_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheStats {
    pub per_source_counts: BTreeMap<CacheSource, u64>,
    pub total: u64,
    pub hits: u64,
    pub misses: u64,
    pub hit_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StoreOutcome {
    Stored,
    /// Not cacheable; nothing written.
    Rejected(ApiStatus),
    /// The key already held a record; it is returned unchanged.
    AlreadyPresent(ApiResponse),
}

impl StoreOutcome {
    pub fn stored(&self) -> bool {
        matches!(self, StoreOutcome::Stored)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImportSummary {
    pub kept: usize,
    pub dropped: usize,
    /// Cacheable records whose key was already held by an equal or higher
    /// priority source.
    pub unchanged: usize,
}

#[derive(Default)]
struct Index {
    by_key: HashMap<String, Arc<CacheRecord>>,
    /// tool -> api_name -> keys in storage order
    by_tool: BTreeMap<ToolRef, BTreeMap<String, Vec<String>>>,
}

impl Index {
    fn insert(&mut self, record: CacheRecord) {
        let keys = self
            .by_tool
            .entry(record.request.id.tool())
            .or_default()
            .entry(record.request.id.api_name.clone())
            .or_default();
        if !keys.contains(&record.key) {
            keys.push(record.key.clone());
        }
        self.by_key.insert(record.key.clone(), Arc::new(record));
    }

    fn remove(&mut self, key: &str) -> Option<Arc<CacheRecord>> {
        let record = self.by_key.remove(key)?;
        let tool = record.request.id.tool();
        if let Some(apis) = self.by_tool.get_mut(&tool) {
            if let Some(keys) = apis.get_mut(&record.request.id.api_name) {
                keys.retain(|k| k != key);
                if keys.is_empty() {
                    apis.remove(&record.request.id.api_name);
                }
            }
            if apis.is_empty() {
                self.by_tool.remove(&tool);
            }
        }
        Some(record)
    }

    fn tool_records(&self, tool: &ToolRef) -> BTreeMap<String, Vec<Arc<CacheRecord>>> {
        self.by_tool
            .get(tool)
            .map(|apis| {
                apis.iter()
                    .map(|(api, keys)| {
                        (
                            api.clone(),
                            keys.iter().filter_map(|k| self.by_key.get(k).cloned()).collect(),
                        )
                    })
                    .collect()
            })
            .unwrap_or_default()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ToolFile {
    category: String,
    tool_name: String,
    apis: BTreeMap<String, Vec<StoredEntry>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct StoredEntry {
    arguments: String,
    response: ApiResponse,
    status: ApiStatus,
    source: CacheSource,
    stored_at: DateTime<Utc>,
}

pub struct Cache {
    root: Option<PathBuf>,
    index: RwLock<Index>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl Cache {
    /// A cache that lives only in memory.
    pub fn in_memory() -> Self {
        Self {
            root: None,
            index: RwLock::new(Index::default()),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }

    /// Opens (creating if needed) a cache directory and loads every tool file.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, CacheError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(CacheError::io(&root))?;
        let mut index = Index::default();
        for file in tool_files(&root)? {
            let text = fs::read_to_string(&file).map_err(CacheError::io(&file))?;
            let parsed: ToolFile = serde_json::from_str(&text).map_err(|e| CacheError::Corrupt {
                path: file.clone(),
                reason: e.to_string(),
            })?;
            for (api, entries) in parsed.apis {
                for entry in entries {
                    let id = ApiIdentifier::new(&parsed.category, &parsed.tool_name, &api).map_err(
                        |e| CacheError::Corrupt {
                            path: file.clone(),
                            reason: e.to_string(),
                        },
                    )?;
                    let request = CallRequest::new(id, entry.arguments);
                    let key = canonical_key(&request).map_err(|e| CacheError::Corrupt {
                        path: file.clone(),
                        reason: e.to_string(),
                    })?;
                    index.insert(CacheRecord {
                        key,
                        status: classify(&entry.response),
                        request,
                        response: entry.response,
                        source: entry.source,
                        stored_at: entry.stored_at,
                    });
                }
            }
        }
        Ok(Self {
            root: Some(root),
            index: RwLock::new(index),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        })
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    pub fn len(&self) -> usize {
        self.index.read().by_key.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cached response for the request, counting a hit or a miss.
    pub fn lookup(&self, request: &CallRequest) -> Result<Option<ApiResponse>, CacheError> {
        let key = canonical_key(request)?;
        let found = self.index.read().by_key.get(&key).map(|r| r.response.clone());
        let counter = if found.is_some() { &self.hits } else { &self.misses };
        counter.fetch_add(1, Ordering::Relaxed);
        Ok(found)
    }

    /// Lookup without touching the hit/miss counters.
    pub fn peek(&self, request: &CallRequest) -> Result<Option<Arc<CacheRecord>>, CacheError> {
        let key = canonical_key(request)?;
        Ok(self.index.read().by_key.get(&key).cloned())
    }

    /// Classifies and persists the response if cacheable. The first record
    /// stored under a key is never replaced.
    pub fn store(
        &self,
        request: &CallRequest,
        response: &ApiResponse,
        source: CacheSource,
    ) -> Result<StoreOutcome, CacheError> {
        let key = canonical_key(request)?;
        let status = classify(response);
        if !is_cacheable(status) {
            return Ok(StoreOutcome::Rejected(status));
        }
        let mut index = self.index.write();
        if let Some(existing) = index.by_key.get(&key) {
            return Ok(StoreOutcome::AlreadyPresent(existing.response.clone()));
        }
        let record = CacheRecord {
            key: key.clone(),
            request: request.canonicalized()?,
            response: response.clone(),
            status,
            source,
            stored_at: Utc::now(),
        };
        let tool = request.id.tool();
        index.insert(record);
        if let Err(e) = self.persist_tool(&index, &tool) {
            index.remove(&key);
            return Err(e);
        }
        Ok(StoreOutcome::Stored)
    }

    /// Up to `limit` cached calls of the API, newest first.
    pub fn examples_for(&self, id: &ApiIdentifier, limit: usize) -> Vec<(CallRequest, ApiResponse)> {
        let index = self.index.read();
        let Some(keys) = index
            .by_tool
            .get(&id.tool())
            .and_then(|apis| apis.get(&id.api_name))
        else {
            return Vec::new();
        };
        keys.iter()
            .rev()
            .filter_map(|k| index.by_key.get(k))
            .take(limit)
            .map(|r| (r.request.clone(), r.response.clone()))
            .collect()
    }

    pub fn stats(&self) -> CacheStats {
        let index = self.index.read();
        let mut per_source_counts: BTreeMap<CacheSource, u64> =
            CacheSource::ALL.iter().map(|s| (*s, 0)).collect();
        for r in index.by_key.values() {
            *per_source_counts.entry(r.source).or_default() += 1;
        }
        let hits = self.hits.load(Ordering::Relaxed);
        let misses = self.misses.load(Ordering::Relaxed);
        let lookups = hits + misses;
        CacheStats {
            total: per_source_counts.values().sum(),
            per_source_counts,
            hits,
            misses,
            hit_rate: if lookups == 0 { 0.0 } else { hits as f64 / lookups as f64 },
        }
    }

    pub fn reset_counters(&self) {
        self.hits.store(0, Ordering::Relaxed);
        self.misses.store(0, Ordering::Relaxed);
    }

    /// All records, sorted by key.
    pub fn records(&self) -> Vec<Arc<CacheRecord>> {
        let index = self.index.read();
        let mut all: Vec<_> = index.by_key.values().cloned().collect();
        all.sort_by(|a, b| a.key.cmp(&b.key));
        all
    }

    /// Loads a record dump, keeping only cacheable records. A dump is a
    /// `.jsonl` file of `{category, tool_name, api_name, tool_input, error,
    /// response}` lines, or a directory tree holding such files and/or
    /// `<category>/<tool>/<api>.json` files mapping tool inputs to envelopes.
    ///
    /// On a key collision the record from the higher-priority source wins
    /// (TrainSet over TestSet over NewExperiment); ties keep the existing one.
    pub fn import_records(&self, path: &Path, source: CacheSource) -> Result<ImportSummary, CacheError> {
        let mut dumped = Vec::new();
        read_dump(path, path, &mut dumped)?;

        let mut index = self.index.write();
        let mut summary = ImportSummary::default();
        let mut touched = std::collections::BTreeSet::new();
        for (request, response) in dumped {
            let status = classify(&response);
            if !is_cacheable(status) {
                summary.dropped += 1;
                continue;
            }
            let key = canonical_key(&request)?;
            if let Some(existing) = index.by_key.get(&key) {
                if existing.source <= source {
                    summary.unchanged += 1;
                    continue;
                }
            }
            index.insert(CacheRecord {
                key,
                request: request.canonicalized()?,
                response,
                status,
                source,
                stored_at: Utc::now(),
            });
            touched.insert(request.id.tool());
            summary.kept += 1;
        }
        for tool in &touched {
            self.persist_tool(&index, tool)?;
        }
        Ok(summary)
    }

    /// Drops records that are no longer cacheable; returns how many.
    pub fn filter(&self) -> Result<usize, CacheError> {
        let mut index = self.index.write();
        let doomed: Vec<String> = index
            .by_key
            .values()
            .filter(|r| !is_cacheable(classify(&r.response)))
            .map(|r| r.key.clone())
            .collect();
        let mut touched = std::collections::BTreeSet::new();
        for key in &doomed {
            if let Some(r) = index.remove(key) {
                touched.insert(r.request.id.tool());
            }
        }
        for tool in &touched {
            self.persist_tool(&index, tool)?;
        }
        Ok(doomed.len())
    }

    /// Rewrites every tool file in canonical form.
    pub fn compact(&self) -> Result<(), CacheError> {
        let index = self.index.write();
        let tools: Vec<ToolRef> = index.by_tool.keys().cloned().collect();
        for tool in &tools {
            self.persist_tool(&index, tool)?;
        }
        Ok(())
    }

    fn persist_tool(&self, index: &Index, tool: &ToolRef) -> Result<(), CacheError> {
        let Some(root) = &self.root else {
            return Ok(());
        };
        let path = tool_path(root, tool);
        let records = index.tool_records(tool);
        if records.is_empty() {
            if path.exists() {
                fs::remove_file(&path).map_err(CacheError::io(&path))?;
            }
            return Ok(());
        }
        let file = ToolFile {
            category: tool.category.clone(),
            tool_name: tool.tool_name.clone(),
            apis: records
                .into_iter()
                .map(|(api, recs)| {
                    let entries = recs
                        .iter()
                        .map(|r| StoredEntry {
                            arguments: r.request.tool_input.clone(),
                            response: r.response.clone(),
                            status: r.status,
                            source: r.source,
                            stored_at: r.stored_at,
                        })
                        .collect();
                    (api, entries)
                })
                .collect(),
        };
        let dir = path.parent().expect("tool path has a parent");
        fs::create_dir_all(dir).map_err(CacheError::io(dir))?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(CacheError::io(dir))?;
        serde_json::to_writer_pretty(&mut tmp, &file).map_err(|e| CacheError::Io {
            path: path.clone(),
            source: e.into(),
        })?;
        tmp.write_all(b"\n").map_err(CacheError::io(&path))?;
        tmp.persist(&path).map_err(|e| CacheError::Io {
            path: path.clone(),
            source: e.error,
        })?;
        Ok(())
    }
}

fn safe_component(name: &str) -> String {
    let cleaned: String = name
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.' | ' ') {
                c
            } else {
                '_'
            }
        })
        .collect();
    if cleaned == name && !name.starts_with('.') && !name.is_empty() {
        cleaned
    } else {
        let digest = Sha256::digest(name.as_bytes());
        format!("{}-{}", cleaned.trim_start_matches('.'), &hex::encode(digest)[..8])
    }
}

fn tool_path(root: &Path, tool: &ToolRef) -> PathBuf {
    root.join(safe_component(&tool.category))
        .join(format!("{}.json", safe_component(&tool.tool_name)))
}

fn tool_files(root: &Path) -> Result<Vec<PathBuf>, CacheError> {
    let mut out = Vec::new();
    for dir in sorted_entries(root)? {
        if dir.is_dir() {
            out.extend(
                sorted_entries(&dir)?
                    .into_iter()
                    .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "json")),
            );
        }
    }
    Ok(out)
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>, CacheError> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(CacheError::io(dir))?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .collect();
    entries.sort();
    Ok(entries)
}

#[derive(Deserialize)]
struct DumpLine {
    #[serde(flatten)]
    request: CallRequest,
    #[serde(default)]
    error: String,
    #[serde(default)]
    response: serde_json::Value,
}

fn text_of(value: serde_json::Value) -> String {
    match value {
        serde_json::Value::String(s) => s,
        serde_json::Value::Null => String::new(),
        other => other.to_string(),
    }
}

fn read_dump(
    root: &Path,
    path: &Path,
    out: &mut Vec<(CallRequest, ApiResponse)>,
) -> Result<(), CacheError> {
    if path.is_dir() {
        for entry in sorted_entries(path)? {
            read_dump(root, &entry, out)?;
        }
        return Ok(());
    }
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    match ext {
        "jsonl" | "ndjson" => read_jsonl(path, out),
        "json" => read_api_file(root, path, out),
        _ if path == root => Err(CacheError::ImportFormat {
            path: path.to_path_buf(),
            line: 0,
            reason: "expected a .jsonl/.json file or a directory".into(),
        }),
        _ => Ok(()),
    }
}

fn read_jsonl(path: &Path, out: &mut Vec<(CallRequest, ApiResponse)>) -> Result<(), CacheError> {
    let file = fs::File::open(path).map_err(CacheError::io(path))?;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(CacheError::io(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| CacheError::ImportFormat {
            path: path.to_path_buf(),
            line: i + 1,
            reason,
        };
        let parsed: DumpLine = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        parsed.request.id.validate().map_err(|e| bad(e.to_string()))?;
        parsed.request.arguments().map_err(|e| bad(e.to_string()))?;
        out.push((
            parsed.request,
            ApiResponse::new(parsed.error, text_of(parsed.response)),
        ));
    }
    Ok(())
}

/// `<category>/<tool>/<api>.json`: `{ "<tool_input>": {"error": .., "response": ..}, .. }`.
fn read_api_file(
    root: &Path,
    path: &Path,
    out: &mut Vec<(CallRequest, ApiResponse)>,
) -> Result<(), CacheError> {
    let bad = |line: usize, reason: String| CacheError::ImportFormat {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let rel = path.strip_prefix(root).unwrap_or(path);
    let parts: Vec<String> = rel
        .iter()
        .map(|c| c.to_string_lossy().into_owned())
        .collect();
    if parts.len() < 3 {
        return Err(bad(0, "expected <category>/<tool>/<api>.json".into()));
    }
    let n = parts.len();
    let api = parts[n - 1].trim_end_matches(".json");
    let id = ApiIdentifier::new(&parts[n - 3], &parts[n - 2], api).map_err(|e| bad(0, e.to_string()))?;
    let text = fs::read_to_string(path).map_err(CacheError::io(path))?;
    let map: BTreeMap<String, serde_json::Value> =
        serde_json::from_str(&text).map_err(|e| bad(e.line(), e.to_string()))?;
    for (input, value) in map {
        let envelope = match value {
            serde_json::Value::Object(mut obj) => ApiResponse::new(
                text_of(obj.remove("error").unwrap_or_default()),
                text_of(obj.remove("response").unwrap_or_default()),
            ),
            other => ApiResponse::ok(text_of(other)),
        };
        let request = CallRequest::new(id.clone(), input);
        request.arguments().map_err(|e| bad(0, e.to_string()))?;
        out.push((request, envelope));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(api: &str, input: &str) -> CallRequest {
        CallRequest::new(ApiIdentifier::new("Logistics", "SQUAKE", api).unwrap(), input)
    }

    #[test]
    fn hit_and_miss_counting() {
        let cache = Cache::in_memory();
        let r = req("Checkhealth", "{}");
        assert_eq!(cache.lookup(&r).unwrap(), None);
        cache
            .store(&r, &ApiResponse::ok("healthy"), CacheSource::NewExperiment)
            .unwrap();
        let a = cache.lookup(&r).unwrap().unwrap();
        let b = cache.lookup(&r).unwrap().unwrap();
        assert_eq!(a.to_wire(), b.to_wire());
        let s = cache.stats();
        assert_eq!((s.hits, s.misses), (2, 1));
        assert!((s.hit_rate - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_uncacheable() {
        let cache = Cache::in_memory();
        let out = cache
            .store(&req("a", "{}"), &ApiResponse::ok("connection refused"), CacheSource::TestSet)
            .unwrap();
        assert_eq!(out, StoreOutcome::Rejected(ApiStatus::NotConnected));
        assert!(cache.is_empty());
    }

    #[test]
    fn first_write_wins() {
        let cache = Cache::in_memory();
        let r = req("a", r#"{"x":1}"#);
        assert!(cache.store(&r, &ApiResponse::ok("one"), CacheSource::NewExperiment).unwrap().stored());
        let again = cache
            .store(&req("a", r#"{ "x" : 1 }"#), &ApiResponse::ok("two"), CacheSource::NewExperiment)
            .unwrap();
        assert_eq!(again, StoreOutcome::AlreadyPresent(ApiResponse::ok("one")));
        assert_eq!(cache.lookup(&r).unwrap().unwrap().response, "one");
    }

    #[test]
    fn other_errors_are_kept() {
        let cache = Cache::in_memory();
        let out = cache
            .store(&req("a", "{}"), &ApiResponse::new("boom", ""), CacheSource::NewExperiment)
            .unwrap();
        assert!(out.stored());
    }

    #[test]
    fn examples_newest_first_and_limited() {
        let cache = Cache::in_memory();
        for i in 0..8 {
            cache
                .store(&req("a", &format!(r#"{{"i":{i}}}"#)), &ApiResponse::ok(format!("r{i}")), CacheSource::NewExperiment)
                .unwrap();
        }
        cache.store(&req("b", "{}"), &ApiResponse::ok("other api"), CacheSource::NewExperiment).unwrap();
        let id = ApiIdentifier::new("Logistics", "SQUAKE", "a").unwrap();
        let ex = cache.examples_for(&id, 5);
        assert_eq!(ex.len(), 5);
        let bodies: Vec<_> = ex.iter().map(|(_, r)| r.response.as_str()).collect();
        assert_eq!(bodies, ["r7", "r6", "r5", "r4", "r3"]);
        assert_eq!(cache.examples_for(&id, 0).len(), 0);
        let unknown = ApiIdentifier::new("Logistics", "SQUAKE", "zzz").unwrap();
        assert!(cache.examples_for(&unknown, 5).is_empty());
    }

    #[test]
    fn persists_and_reloads() {
        let dir = tempfile::tempdir().unwrap();
        {
            let cache = Cache::open(dir.path()).unwrap();
            cache.store(&req("a", r#"{"b":1,"a":2}"#), &ApiResponse::ok("x"), CacheSource::TrainSet).unwrap();
            cache.store(&req("b", ""), &ApiResponse::ok("y"), CacheSource::TestSet).unwrap();
        }
        assert!(dir.path().join("Logistics/SQUAKE.json").exists());
        let cache = Cache::open(dir.path()).unwrap();
        assert_eq!(cache.len(), 2);
        assert_eq!(cache.lookup(&req("a", r#"{"a":2,"b":1}"#)).unwrap().unwrap().response, "x");
        let s = cache.stats();
        assert_eq!(s.per_source_counts[&CacheSource::TrainSet], 1);
        assert_eq!(s.per_source_counts[&CacheSource::TestSet], 1);
        assert_eq!(s.per_source_counts[&CacheSource::NewExperiment], 0);
        // counters are not persisted
        assert_eq!(s.hits, 1);
    }

    #[test]
    fn unsafe_names_get_distinct_files() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::open(dir.path()).unwrap();
        let a = CallRequest::new(ApiIdentifier::new("c", "a/b", "x").unwrap(), "{}");
        let b = CallRequest::new(ApiIdentifier::new("c", "a_b", "x").unwrap(), "{}");
        cache.store(&a, &ApiResponse::ok("1"), CacheSource::TestSet).unwrap();
        cache.store(&b, &ApiResponse::ok("2"), CacheSource::TestSet).unwrap();
        let reopened = Cache::open(dir.path()).unwrap();
        assert_eq!(reopened.lookup(&a).unwrap().unwrap().response, "1");
        assert_eq!(reopened.lookup(&b).unwrap().unwrap().response, "2");
    }

    #[test]
    fn open_on_file_path_fails_naming_it() {
        let file = tempfile::NamedTempFile::new().unwrap();
        let err = Cache::open(file.path()).err().unwrap();
        assert!(err.to_string().contains(&file.path().display().to_string()));
    }

    #[test]
    fn import_empty_and_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let empty = dir.path().join("empty.jsonl");
        fs::write(&empty, "").unwrap();
        let cache = Cache::in_memory();
        assert_eq!(
            cache.import_records(&empty, CacheSource::TrainSet).unwrap(),
            ImportSummary::default()
        );
        let bad = dir.path().join("bad.jsonl");
        fs::write(
            &bad,
            "{\"category\":\"c\",\"tool_name\":\"t\",\"api_name\":\"a\",\"tool_input\":\"{}\",\"error\":\"\",\"response\":\"ok\"}\nnot json\n",
        )
        .unwrap();
        match cache.import_records(&bad, CacheSource::TrainSet) {
            Err(CacheError::ImportFormat { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn import_toolbench_tree() {
        let dir = tempfile::tempdir().unwrap();
        let api_dir = dir.path().join("Logistics/SQUAKE");
        fs::create_dir_all(&api_dir).unwrap();
        fs::write(
            api_dir.join("Checkhealth.json"),
            r#"{"{}": {"error": "", "response": "healthy"},
                "{\"q\": 1}": {"error": "", "response": "Rate limit exceeded"}}"#,
        )
        .unwrap();
        let cache = Cache::in_memory();
        let s = cache.import_records(dir.path(), CacheSource::TrainSet).unwrap();
        assert_eq!((s.kept, s.dropped), (1, 1));
        assert_eq!(cache.lookup(&req("Checkhealth", "")).unwrap().unwrap().response, "healthy");
    }

    #[test]
    fn import_source_priority() {
        let dir = tempfile::tempdir().unwrap();
        let dump = dir.path().join("d.jsonl");
        fs::write(
            &dump,
            "{\"category\":\"Logistics\",\"tool_name\":\"SQUAKE\",\"api_name\":\"a\",\"tool_input\":\"{}\",\"error\":\"\",\"response\":\"train\"}\n",
        )
        .unwrap();
        let cache = Cache::in_memory();
        cache.store(&req("a", "{}"), &ApiResponse::ok("live"), CacheSource::NewExperiment).unwrap();
        let s = cache.import_records(&dump, CacheSource::TrainSet).unwrap();
        assert_eq!(s.kept, 1);
        assert_eq!(cache.lookup(&req("a", "{}")).unwrap().unwrap().response, "train");
        let s = cache.import_records(&dump, CacheSource::TestSet).unwrap();
        assert_eq!((s.kept, s.unchanged), (0, 1));
    }

    #[test]
    fn filter_removes_hand_edited_bad_records() {
        let dir = tempfile::tempdir().unwrap();
        {
            let cache = Cache::open(dir.path()).unwrap();
            cache.store(&req("a", "{}"), &ApiResponse::ok("fine"), CacheSource::TestSet).unwrap();
            cache.store(&req("b", "{}"), &ApiResponse::ok("also fine"), CacheSource::TestSet).unwrap();
        }
        let path = dir.path().join("Logistics/SQUAKE.json");
        let text = fs::read_to_string(&path).unwrap().replace("also fine", "Service Not Found");
        fs::write(&path, text).unwrap();
        let cache = Cache::open(dir.path()).unwrap();
        assert_eq!(cache.filter().unwrap(), 1);
        assert_eq!(cache.filter().unwrap(), 0);
        assert_eq!(Cache::open(dir.path()).unwrap().len(), 1);
    }
}
