//! The batched status-lookup contract shared by the mock service and the
//! fetcher's clients.

use thiserror::Error;

use crate::tweet::HydratedTweet;

pub const LOOKUP_PATH: &str = "/1.1/statuses/lookup.json";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LookupError {
    #[error("request too large: {0} ids, at most 100 allowed")]
    RequestTooLarge(usize),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("throttled; retry after {retry_after_ms} ms")]
    Throttled { retry_after_ms: u64 },
    #[error("transport failure: {0}")]
    Transport(String),
}

/// Anything that answers lookup requests: returns the existing tweets among
/// `ids`, in request order, silently omitting the rest.
pub trait Lookup {
    fn lookup(&mut self, ids: &[u64], token: &str) -> Result<Vec<HydratedTweet>, LookupError>;
}

impl<L: Lookup + ?Sized> Lookup for Box<L> {
    fn lookup(&mut self, ids: &[u64], token: &str) -> Result<Vec<HydratedTweet>, LookupError> {
        (**self).lookup(ids, token)
    }
}

/// Parses the comma-separated `id` form field.
pub fn parse_id_field(field: &str) -> Result<Vec<u64>, LookupError> {
    let ids = field
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<u64>()
                .ok()
                .filter(|v| *v > 0)
                .ok_or_else(|| LookupError::BadRequest(format!("malformed id {s:?}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if ids.is_empty() {
        return Err(LookupError::BadRequest("no ids given".into()));
    }
    Ok(ids)
}

pub fn render_id_field(ids: &[u64]) -> String {
    let mut out = String::with_capacity(ids.len() * 11);
    for (i, id) in ids.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&id.to_string());
    }
    out
}
