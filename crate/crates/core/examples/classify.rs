//! Sorts a handful of raw API envelopes into the seven statuses and shows
//! which of them the cache would keep.

use toolgate::classifier::{classify, is_cacheable};
use toolgate::model::ApiResponse;

fn main() {
    let samples = [
        ApiResponse::ok(r#"{"temperature": 21.5}"#),
        ApiResponse::new("HTTP request failed", ""),
        ApiResponse::ok("Rate limit exceeded"),
        ApiResponse::ok("Service Not Found"),
        ApiResponse::ok("Missing parameter: city"),
        ApiResponse::new("Function executing from weather.now raised KeyError", ""),
        ApiResponse::ok("This endpoint is disabled for your subscription"),
        ApiResponse::new("quota exhausted for today", ""),
    ];
    for r in &samples {
        let status = classify(r);
        println!(
            "{:<16} keep={:<5} error={:?} response={:?}",
            status.to_string(),
            is_cacheable(status),
            r.error,
            r.response
        );
    }
}
