//! Keyword-rule classification of call outcomes, cache filtration, and the
//! API status scanner.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::debug;

use crate::cache::Cache;
use crate::llm::ChatModel;
use crate::model::{ApiDocumentation, ApiResponse, CallRequest};
use crate::prompts::PromptSet;
use crate::simulator::{extract_json_object, render_examples};
use crate::upstream::Upstream;

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub enum ApiStatus {
    NotConnected,
    NotFound,
    ParameterChange,
    ParsingError,
    NotAuthorised,
    Other,
    Success,
}

impl ApiStatus {
    pub const ALL: [ApiStatus; 7] = [
        ApiStatus::NotConnected,
        ApiStatus::NotFound,
        ApiStatus::ParameterChange,
        ApiStatus::ParsingError,
        ApiStatus::NotAuthorised,
        ApiStatus::Other,
        ApiStatus::Success,
    ];
}

impl fmt::Display for ApiStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

const PARSING_PREFIX: &str = "function executing from";
const NOT_CONNECTED_RESPONSE: &[&str] =
    &["http error", "connection", "rate limit", "timed out", "time out"];
const NOT_AUTHORISED: &[&str] = &[
    "authoriz",
    "authoris",
    "unauthoriz",
    "unauthoris",
    "blocked user",
    "unsubscribe",
    "credential",
    "disabled for your subscription",
];
const ACCESS_DENIED: &str = "ACCESS_DENIED";
const NOT_FOUND: &[&str] = &[
    "not found",
    "not available",
    "api doesn't exists",
    "service not found",
    "internal error",
];
const PARAMETER_CHANGE: &[&str] = &["parameter", "parse", "is not defined"];

/// Classifies an envelope. Rules are tried in a fixed order and the first
/// match wins; keywords match case-insensitively except `ACCESS_DENIED`.
pub fn classify(response: &ApiResponse) -> ApiStatus {
    let error = response.error.to_lowercase();
    let body = response.response.to_lowercase();
    let either = |words: &[&str]| words.iter().any(|w| error.contains(w) || body.contains(w));
    let code = |c: &str| has_status_code(&response.error, c) || has_status_code(&response.response, c);

    if error.starts_with(PARSING_PREFIX) {
        ApiStatus::ParsingError
    } else if error.contains("http") || NOT_CONNECTED_RESPONSE.iter().any(|w| body.contains(w)) {
        ApiStatus::NotConnected
    } else if either(NOT_AUTHORISED)
        || response.error.contains(ACCESS_DENIED)
        || response.response.contains(ACCESS_DENIED)
        || code("401")
        || code("403")
    {
        ApiStatus::NotAuthorised
    } else if either(NOT_FOUND) || code("404") {
        ApiStatus::NotFound
    } else if either(PARAMETER_CHANGE) {
        ApiStatus::ParameterChange
    } else if !response.error.is_empty() {
        ApiStatus::Other
    } else {
        ApiStatus::Success
    }
}

/// `code` appears in `text` with no ASCII digit immediately before or after.
fn has_status_code(text: &str, code: &str) -> bool {
    let bytes = text.as_bytes();
    text.match_indices(code).any(|(i, m)| {
        let before = i.checked_sub(1).map(|j| bytes[j]);
        let after = bytes.get(i + m.len()).copied();
        !before.is_some_and(|b| b.is_ascii_digit()) && !after.is_some_and(|b| b.is_ascii_digit())
    })
}

/// Whether a response with this status may enter the cache.
pub fn is_cacheable(status: ApiStatus) -> bool {
    matches!(status, ApiStatus::Success | ApiStatus::Other)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusReport {
    pub total: u64,
    pub counts: BTreeMap<ApiStatus, u64>,
    pub percentages: BTreeMap<ApiStatus, f64>,
}

impl StatusReport {
    pub fn from_statuses(statuses: impl IntoIterator<Item = ApiStatus>) -> Self {
        let mut counts: BTreeMap<ApiStatus, u64> = ApiStatus::ALL.iter().map(|s| (*s, 0)).collect();
        for s in statuses {
            *counts.entry(s).or_default() += 1;
        }
        let total: u64 = counts.values().sum();
        let percentages = counts
            .iter()
            .map(|(s, c)| {
                let p = if total == 0 { 0.0 } else { *c as f64 / total as f64 };
                (*s, p)
            })
            .collect();
        Self {
            total,
            counts,
            percentages,
        }
    }

    pub fn count(&self, status: ApiStatus) -> u64 {
        self.counts.get(&status).copied().unwrap_or(0)
    }

    pub fn render_table(&self) -> String {
        let mut out = format!("{:<16} {:>8} {:>8}\n", "status", "count", "percent");
        for s in ApiStatus::ALL {
            out.push_str(&format!(
                "{:<16} {:>8} {:>7.1}%\n",
                s.to_string(),
                self.count(s),
                self.percentages.get(&s).copied().unwrap_or(0.0) * 100.0
            ));
        }
        out.push_str(&format!("{:<16} {:>8}\n", "total", self.total));
        out
    }
}

#[derive(Debug, Error)]
pub enum ScanError {
    #[error("scan configuration error: {0}")]
    Config(String),
}

#[derive(Debug, Clone)]
pub struct ScanOptions {
    pub workers: usize,
    /// Extra attempts at writing a parseable probe call.
    pub retry_budget: u32,
    pub max_examples: usize,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            workers: 8,
            retry_budget: 2,
            max_examples: 3,
        }
    }
}

/// Probes every documented API once: an LLM writes the call arguments, the
/// call runs against the real upstream, and the outcome is classified.
pub struct StatusScanner {
    call_writer: ChatModel,
    upstream: Option<Arc<dyn Upstream>>,
    examples: Option<Arc<Cache>>,
    prompts: Arc<PromptSet>,
    options: ScanOptions,
}

impl StatusScanner {
    pub fn new(call_writer: ChatModel, upstream: Option<Arc<dyn Upstream>>) -> Self {
        Self {
            call_writer,
            upstream,
            examples: None,
            prompts: Arc::new(PromptSet::default()),
            options: ScanOptions::default(),
        }
    }

    pub fn with_examples(mut self, cache: Arc<Cache>) -> Self {
        self.examples = Some(cache);
        self
    }

    pub fn with_prompts(mut self, prompts: Arc<PromptSet>) -> Self {
        self.prompts = prompts;
        self
    }

    pub fn with_options(mut self, options: ScanOptions) -> Self {
        self.options = options;
        self
    }

    /// Builds the call-writing prompt for one API.
    pub fn call_prompt(&self, doc: &ApiDocumentation) -> (String, String) {
        let examples = self
            .examples
            .as_ref()
            .map(|c| c.examples_for(&doc.id, self.options.max_examples))
            .unwrap_or_default();
        let mut user = format!("API Documentation:\n{}\n", doc.to_json());
        if !examples.is_empty() {
            user.push_str("API Examples (if available):\n");
            user.push_str(&render_examples(&examples));
        }
        user.push_str("one more API Input example:\n");
        (self.prompts.api_call_writing_system.clone(), user)
    }

    async fn probe(&self, doc: &ApiDocumentation, upstream: &dyn Upstream) -> ApiStatus {
        let (system, user) = self.call_prompt(doc);
        for attempt in 0..=self.options.retry_budget {
            let completion = match self.call_writer.complete(&system, &user).await {
                Ok(c) => c,
                Err(e) => {
                    debug!(api = %doc.id, attempt, error = %e, "call writer failed");
                    continue;
                }
            };
            let Some(args) = extract_json_object(&completion)
                .and_then(|s| serde_json::from_str::<serde_json::Value>(&s).ok())
                .filter(|v| v.is_object())
            else {
                debug!(api = %doc.id, attempt, "probe call not parseable");
                continue;
            };
            let request = CallRequest::new(doc.id.clone(), args.to_string());
            return classify(&upstream.call(&request).await);
        }
        ApiStatus::ParsingError
    }

    pub async fn scan(&self, docs: &[ApiDocumentation]) -> Result<StatusReport, ScanError> {
        let upstream = self
            .upstream
            .clone()
            .ok_or_else(|| ScanError::Config("no upstream client configured".into()))?;
        let statuses: Vec<ApiStatus> = stream::iter(docs)
            .map(|doc| {
                let upstream = upstream.clone();
                async move { self.probe(doc, upstream.as_ref()).await }
            })
            .buffer_unordered(self.options.workers.max(1))
            .collect()
            .await;
        Ok(StatusReport::from_statuses(statuses))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(error: &str, response: &str) -> ApiStatus {
        classify(&ApiResponse::new(error, response))
    }

    #[test]
    fn examples_from_rules() {
        assert_eq!(c("", "Error: rate limit exceeded for this key"), ApiStatus::NotConnected);
        assert_eq!(c("Function executing from my_tool.api raised", ""), ApiStatus::ParsingError);
        assert_eq!(c("", r#"{"data": [1,2,3]}"#), ApiStatus::Success);
        assert_eq!(c("", "404 Not Found"), ApiStatus::NotFound);
    }

    #[test]
    fn parsing_error_needs_prefix() {
        assert_eq!(c("x Function executing from", ""), ApiStatus::Other);
    }

    #[test]
    fn http_in_error_only_counts_in_error_field() {
        assert_eq!(c("HTTPSConnectionPool failed", ""), ApiStatus::NotConnected);
        // "http" alone in the body is not a NotConnected marker
        assert_eq!(c("", "see http://example.com"), ApiStatus::Success);
    }

    #[test]
    fn status_code_markers_need_digit_boundaries() {
        assert_eq!(c("", "code 401"), ApiStatus::NotAuthorised);
        assert_eq!(c("", "id 14010"), ApiStatus::Success);
        assert_eq!(c("", "(403)"), ApiStatus::NotAuthorised);
        assert_eq!(c("", "price 4040"), ApiStatus::Success);
    }

    #[test]
    fn access_denied_is_case_sensitive() {
        assert_eq!(c("", "ACCESS_DENIED"), ApiStatus::NotAuthorised);
        assert_eq!(c("", "access_denied"), ApiStatus::Success);
    }

    #[test]
    fn precedence_not_connected_over_not_found() {
        assert_eq!(c("", "connection reset; service not found"), ApiStatus::NotConnected);
    }

    #[test]
    fn cacheable_statuses() {
        assert!(is_cacheable(ApiStatus::Success));
        assert!(is_cacheable(ApiStatus::Other));
        for s in [
            ApiStatus::NotConnected,
            ApiStatus::NotFound,
            ApiStatus::ParameterChange,
            ApiStatus::ParsingError,
            ApiStatus::NotAuthorised,
        ] {
            assert!(!is_cacheable(s));
        }
    }

    #[test]
    fn empty_report() {
        let r = StatusReport::from_statuses([]);
        assert_eq!(r.total, 0);
        assert!(r.counts.values().all(|c| *c == 0));
        assert!(r.percentages.values().all(|p| *p == 0.0));
    }

    #[test]
    fn report_table_lists_every_status() {
        let r = StatusReport::from_statuses([ApiStatus::Success, ApiStatus::NotFound]);
        let t = r.render_table();
        for s in ApiStatus::ALL {
            assert!(t.contains(&s.to_string()));
        }
    }

    proptest! {
        #[test]
        fn classify_is_total(error in ".*", response in ".*") {
            let _ = c(&error, &response);
        }

        #[test]
        fn success_implies_empty_error(error in ".*", response in ".*") {
            if c(&error, &response) == ApiStatus::Success {
                prop_assert!(error.is_empty());
            }
        }

        #[test]
        fn not_connected_beats_not_found(prefix in "[a-z ]{0,8}", nf in prop::sample::select(NOT_FOUND.to_vec()),
                                          nc in prop::sample::select(NOT_CONNECTED_RESPONSE.to_vec())) {
            let body = format!("{prefix}{nf} {nc}");
            prop_assert_eq!(c("", &body), ApiStatus::NotConnected);
        }

        #[test]
        fn percentages_sum_to_one_and_ignore_order(idx in prop::collection::vec(0usize..7, 1..60), seed in any::<u64>()) {
            let statuses: Vec<_> = idx.iter().map(|i| ApiStatus::ALL[*i]).collect();
            let a = StatusReport::from_statuses(statuses.clone());
            let sum: f64 = a.percentages.values().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
            let mut shuffled = statuses;
            let n = shuffled.len();
            shuffled.rotate_left((seed as usize) % n);
            shuffled.reverse();
            prop_assert_eq!(a, StatusReport::from_statuses(shuffled));
        }
    }
}
