//! Stores a response on disk, reopens the cache and serves the same call
//! again with its arguments in a different order.

use toolgate::cache::{Cache, CacheSource};
use toolgate::model::{canonical_key, ApiIdentifier, ApiResponse, CallRequest};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let api = ApiIdentifier::new("Finance", "Quotes", "price")?;
    let first = CallRequest::new(api.clone(), r#"{"symbol": "ACME", "currency": "EUR"}"#);
    let again = CallRequest::new(api, r#"{"currency": "EUR", "symbol": "ACME"}"#);
    println!("key: {:?}", canonical_key(&first)?);

    {
        let cache = Cache::open(dir.path())?;
        println!("store: {:?}", cache.store(&first, &ApiResponse::ok("12.40 EUR"), CacheSource::NewExperiment)?);
        // first write wins
        println!("store: {:?}", cache.store(&first, &ApiResponse::ok("99 EUR"), CacheSource::NewExperiment)?);
        // not cacheable
        println!("store: {:?}", cache.store(&first, &ApiResponse::ok("connection reset"), CacheSource::NewExperiment)?);
    }

    let cache = Cache::open(dir.path())?;
    println!("reopened lookup: {:?}", cache.lookup(&again)?);
    println!("stats: {:?}", cache.stats());
    Ok(())
}
