//! Deterministic stand-in for the historical lookup endpoint.

mod corpus;
pub mod http;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

pub use corpus::{mix64, Corpus, CorpusSpec, IdDomain, DEFAULT_EXISTENCE_RATE, DEFAULT_T0_MS, DEFAULT_T1_MS, MAX_TEXT_CHARS, STOP_WORDS};

use crate::clock::Clock;
use crate::idgen::{MAX_BATCH, MAX_TWEET_ID};
use crate::lookup::{Lookup, LookupError};
use crate::tweet::HydratedTweet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Served { found: usize },
    Throttled { retry_after_ms: u64 },
}

/// One accepted-for-inspection request, as the service saw it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestRecord {
    pub token: String,
    pub at_ms: u64,
    pub ids: Vec<u64>,
    pub outcome: Outcome,
}

#[derive(Debug, Default)]
struct LimiterState {
    last_start: HashMap<String, u64>,
    log: Option<Vec<RequestRecord>>,
}

/// The lookup contract over a synthetic corpus, with a per-credential
/// minimum spacing between served requests.
#[derive(Debug)]
pub struct MockService {
    corpus: Corpus,
    min_interval_ms: u64,
    state: Mutex<LimiterState>,
}

impl MockService {
    pub fn new(corpus: Corpus, min_interval_ms: u64) -> MockService {
        MockService { corpus, min_interval_ms, state: Mutex::new(LimiterState::default()) }
    }

    /// Keeps every request (served or throttled) for later inspection.
    pub fn with_request_log(self) -> MockService {
        self.state.lock().unwrap().log = Some(Vec::new());
        self
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn min_interval_ms(&self) -> u64 {
        self.min_interval_ms
    }

    pub fn request_log(&self) -> Vec<RequestRecord> {
        self.state.lock().unwrap().log.clone().unwrap_or_default()
    }

    /// Answers one lookup arriving at `now_ms`.
    pub fn serve_lookup(&self, ids: &[u64], token: &str, now_ms: u64) -> Result<Vec<HydratedTweet>, LookupError> {
        if ids.is_empty() {
            return Err(LookupError::BadRequest("no ids given".into()));
        }
        if ids.len() > MAX_BATCH {
            return Err(LookupError::RequestTooLarge(ids.len()));
        }
        if let Some(bad) = ids.iter().find(|&&id| id == 0 || id > MAX_TWEET_ID) {
            return Err(LookupError::BadRequest(format!("id {bad} outside 1..={MAX_TWEET_ID}")));
        }
        let log_slot = {
            let mut state = self.state.lock().unwrap();
            let earliest = state.last_start.get(token).map(|t| t + self.min_interval_ms);
            let outcome = match earliest {
                Some(e) if now_ms < e => Outcome::Throttled { retry_after_ms: e - now_ms },
                _ => {
                    state.last_start.insert(token.to_string(), now_ms);
                    Outcome::Served { found: 0 }
                }
            };
            let slot = state.log.as_mut().map(|log| {
                log.push(RequestRecord { token: token.to_string(), at_ms: now_ms, ids: ids.to_vec(), outcome });
                log.len() - 1
            });
            if let Outcome::Throttled { retry_after_ms } = outcome {
                return Err(LookupError::Throttled { retry_after_ms });
            }
            slot
        };
        let found: Vec<HydratedTweet> = ids.iter().filter_map(|&id| self.corpus.gen_tweet(id)).collect();
        if let (Some(slot), Some(log)) = (log_slot, self.state.lock().unwrap().log.as_mut()) {
            log[slot].outcome = Outcome::Served { found: found.len() };
        }
        Ok(found)
    }
}

/// Calls a [`MockService`] directly, stamping requests with an injected clock.
pub struct InProcessLookup<C> {
    service: Arc<MockService>,
    clock: C,
}

impl<C: Clock> InProcessLookup<C> {
    pub fn new(service: Arc<MockService>, clock: C) -> Self {
        InProcessLookup { service, clock }
    }
}

impl<C: Clock> Lookup for InProcessLookup<C> {
    fn lookup(&mut self, ids: &[u64], token: &str) -> Result<Vec<HydratedTweet>, LookupError> {
        self.service.serve_lookup(ids, token, self.clock.now_ms())
    }
}
