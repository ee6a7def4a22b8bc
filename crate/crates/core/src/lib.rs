//! Building blocks for reconstructing, storing and searching an archive of
//! early-era tweets: candidate id enumeration, rate-limited collection
//! against a lookup endpoint, dehydration, partitioned storage, full-text
//! search and trend analytics.

pub mod analytics;
pub mod calendar;
pub mod clock;
pub mod config;
pub mod dehydrator;
pub mod error;
pub mod fetcher;
pub mod idgen;
pub mod lookup;
pub mod mockhose;
pub mod pipeline;
pub mod planner;
pub mod search;
pub mod store;
pub mod tweet;

pub use error::{Error, Result};
