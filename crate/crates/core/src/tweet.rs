//! Wire shapes of tweet records.
//!
//! [`HydratedTweet`] follows the public v1.1 status object closely enough
//! that the dehydrator and the mock service agree on it; [`DehydratedTweet`]
//! is the eight-field record the archive stores and indexes.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HydratedTweet {
    pub created_at: String,
    pub id: u64,
    pub id_str: String,
    pub text: String,
    pub source: String,
    pub truncated: bool,
    pub in_reply_to_status_id: Option<u64>,
    pub in_reply_to_status_id_str: Option<String>,
    pub in_reply_to_user_id: Option<u64>,
    pub in_reply_to_user_id_str: Option<String>,
    pub in_reply_to_screen_name: Option<String>,
    pub user: User,
    pub geo: Option<serde_json::Value>,
    pub coordinates: Option<serde_json::Value>,
    pub place: Option<serde_json::Value>,
    pub retweet_count: u32,
    pub favorite_count: u32,
    pub favorited: bool,
    pub retweeted: bool,
    pub entities: Option<Entities>,
    pub lang: Option<String>,
    /// Set by the mock service when the id fell outside its time anchors.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub time_clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct User {
    pub id: u64,
    pub id_str: String,
    pub name: String,
    pub screen_name: String,
    pub location: String,
    pub description: String,
    pub url: Option<String>,
    pub protected: bool,
    pub followers_count: u32,
    pub friends_count: u32,
    pub listed_count: u32,
    pub created_at: String,
    pub favourites_count: u32,
    pub utc_offset: Option<i32>,
    pub time_zone: Option<String>,
    pub verified: bool,
    pub statuses_count: u32,
    pub lang: String,
    pub profile_background_color: String,
    pub profile_image_url: String,
    pub profile_link_color: String,
    pub profile_text_color: String,
    pub default_profile: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Entities {
    pub hashtags: Vec<serde_json::Value>,
    pub urls: Vec<UrlEntity>,
    pub user_mentions: Vec<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UrlEntity {
    pub url: String,
    pub expanded_url: Option<String>,
    pub indices: [u32; 2],
}

/// The eight-field archive record. Field order is the on-disk order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DehydratedTweet {
    pub created_at: String,
    pub id_str: String,
    pub in_reply_to_status_id_str: Option<String>,
    pub in_reply_to_user_id_str: Option<String>,
    pub lang: String,
    pub text: String,
    pub timestamp: i64,
    pub user_id_str: String,
}

impl DehydratedTweet {
    /// Numeric id; records are validated on the way in, so this only fails on hand-built values.
    pub fn id(&self) -> u64 {
        self.id_str.parse().unwrap_or(0)
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("plain struct serializes")
    }

    pub fn from_line(line: &str) -> serde_json::Result<DehydratedTweet> {
        serde_json::from_str(line)
    }
}
