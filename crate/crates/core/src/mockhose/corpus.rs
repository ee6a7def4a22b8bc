//! Seeded synthetic tweet corpus.
//!
//! Every candidate id either exists or not according to a hash of
//! `(seed, id)`, and an existing tweet's fields are drawn from a generator
//! seeded by the same pair, so any slice of the corpus can be regenerated
//! on its own, bit for bit.

use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::calendar::{self, format_created_at};
use crate::config::{parse_weights, render_weights, KeyValues};
use crate::error::{Error, Result};
use crate::idgen::{IdRange, RangeTable, ARCHIVE_END_ID, MAX_TWEET_ID};
use crate::tweet::{Entities, HydratedTweet, UrlEntity, User};

/// 1,483,823,453 collected tweets over 2,292,166,175 candidates, rounded.
pub const DEFAULT_EXISTENCE_RATE: f64 = 0.647;
/// Created 2006-03-21T20:50:14Z, the first public status.
pub const DEFAULT_T0_MS: i64 = 1_142_974_214_000;
/// Last millisecond of 2009-07-31.
pub const DEFAULT_T1_MS: i64 = 1_249_084_799_999;
pub const MAX_TEXT_CHARS: usize = 140;

const STREAM_EXISTS: u64 = 0x6578_6973;
const STREAM_FIELDS: u64 = 0x6669_656c;
const STREAM_USER: u64 = 0x7573_6572;
const STREAM_PROFILE: u64 = 0x7072_6f66;

/// Which ids may exist at all.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IdDomain {
    Table(RangeTable),
    Span { start: u64, end: u64 },
}

impl IdDomain {
    pub fn contains(&self, id: u64) -> bool {
        match self {
            IdDomain::Table(t) => t.contains(id),
            IdDomain::Span { start, end } => (*start..=*end).contains(&id),
        }
    }

    fn render(&self) -> String {
        match self {
            IdDomain::Table(t) if *t == RangeTable::builtin() => "builtin".into(),
            IdDomain::Table(t) => t.ranges().iter().map(|r| r.to_string()).collect::<Vec<_>>().join(";"),
            IdDomain::Span { start, end } => format!("{start}:{end}"),
        }
    }

    fn parse(text: &str) -> Result<IdDomain> {
        if text == "builtin" {
            return Ok(IdDomain::Table(RangeTable::builtin()));
        }
        let ranges: Vec<IdRange> = text.split(';').map(str::parse).collect::<Result<_>>()?;
        match ranges[..] {
            [r] if r.step == 1 => Ok(IdDomain::Span { start: r.start, end: r.end }),
            _ => Ok(IdDomain::Table(RangeTable::new(ranges)?)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub seed: u64,
    pub id_domain: IdDomain,
    pub existence_rate: f64,
    pub vocab: Vec<(String, f64)>,
    pub lang_weights: Vec<(String, f64)>,
    pub t0: i64,
    pub t1: i64,
    pub anchor_id0: u64,
    pub anchor_id1: u64,
    /// Fraction of tweets whose text carries a URL.
    pub url_rate: f64,
    pub url_domains: Vec<(String, f64)>,
    pub reply_rate: f64,
    pub users: u64,
}

fn weighted(items: &[(&str, f64)]) -> Vec<(String, f64)> {
    items.iter().map(|(w, x)| (w.to_string(), *x)).collect()
}

/// Function words most tweets contain, matching the stop-word probe query.
pub const STOP_WORDS: [&str; 100] = [
    "a", "about", "after", "all", "also", "an", "and", "any", "as", "at", "back", "be", "because",
    "but", "by", "can", "come", "could", "day", "do", "even", "first", "for", "from", "get",
    "give", "go", "good", "have", "he", "her", "him", "his", "how", "i", "if", "in", "into", "it",
    "its", "just", "know", "like", "look", "make", "me", "most", "my", "new", "no", "not", "now",
    "of", "on", "one", "only", "or", "other", "our", "out", "over", "people", "say", "see",
    "she", "so", "some", "take", "than", "that", "the", "their", "them", "then", "there",
    "these", "they", "think", "this", "time", "to", "two", "up", "us", "use", "want", "way",
    "we", "well", "what", "when", "which", "who", "will", "with", "work", "would", "year", "you",
    "your",
];

const CONTENT_WORDS: [(&str, f64); 48] = [
    ("twitter", 3.0), ("coffee", 2.0), ("lunch", 2.0), ("home", 2.5), ("tonight", 2.0),
    ("morning", 2.0), ("sandwich", 1.0), ("eating", 1.5), ("watching", 1.6), ("going", 2.2),
    ("working", 1.8), ("reading", 1.2), ("listening", 1.0), ("sleeping", 0.8), ("playing", 1.0),
    ("thinking", 1.1), ("writing", 0.9), ("drinking", 0.7), ("waiting", 0.9), ("cooking", 0.5),
    ("obama", 0.8), ("biden", 0.2), ("mccain", 0.4), ("palin", 0.3), ("election", 0.5),
    ("iran", 0.3), ("bieber", 0.05), ("justin", 0.2), ("superbowl", 0.1), ("music", 1.2),
    ("movie", 1.0), ("blog", 1.3), ("post", 1.2), ("friends", 1.4), ("weekend", 1.1),
    ("tv", 1.0), ("phone", 0.9), ("iphone", 0.6), ("rain", 0.6), ("sun", 0.6),
    ("#barcamp", 0.1), ("#iranelection", 0.1), ("@chris", 0.1), ("@ev", 0.1),
    ("ایران", 0.15), ("انتخابات", 0.1), ("東京", 0.1), ("café", 0.2),
];

impl Default for CorpusSpec {
    fn default() -> Self {
        let mut vocab: Vec<(String, f64)> = STOP_WORDS
            .iter()
            .enumerate()
            .map(|(rank, w)| (w.to_string(), 12.0 / (1.0 + rank as f64 / 10.0)))
            .collect();
        vocab.extend(weighted(&CONTENT_WORDS));
        CorpusSpec {
            seed: 42,
            id_domain: IdDomain::Table(RangeTable::builtin()),
            existence_rate: DEFAULT_EXISTENCE_RATE,
            vocab,
            lang_weights: weighted(&[("en", 0.86), ("ja", 0.05), ("es", 0.03), ("pt", 0.03), ("de", 0.01), ("fa", 0.02)]),
            t0: DEFAULT_T0_MS,
            t1: DEFAULT_T1_MS,
            anchor_id0: 20,
            anchor_id1: ARCHIVE_END_ID,
            url_rate: 0.253,
            url_domains: weighted(&[
                ("tinyurl.com", 0.40),
                ("bit.ly", 0.20),
                ("is.gd", 0.08),
                ("ow.ly", 0.04),
                ("tr.im", 0.03),
                ("twitpic.com", 0.10),
                ("youtube.com", 0.08),
                ("flickr.com", 0.04),
                ("blog.example.org", 0.03),
            ]),
            reply_rate: 0.2,
            users: 50_000,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(m));
        if !(0.0..=1.0).contains(&self.existence_rate) {
            return bad(format!("existence_rate {} outside [0, 1]", self.existence_rate));
        }
        for (name, rate) in [("url_rate", self.url_rate), ("reply_rate", self.reply_rate)] {
            if !(0.0..=1.0).contains(&rate) {
                return bad(format!("{name} {rate} outside [0, 1]"));
            }
        }
        if self.t0 >= self.t1 {
            return bad(format!("t0 {} must precede t1 {}", self.t0, self.t1));
        }
        if self.anchor_id0 == 0 || self.anchor_id0 >= self.anchor_id1 {
            return bad(format!("anchors {} .. {} must be increasing and positive", self.anchor_id0, self.anchor_id1));
        }
        for (what, list) in [("vocab", &self.vocab), ("lang_weights", &self.lang_weights), ("url_domains", &self.url_domains)] {
            if list.is_empty() {
                return bad(format!("{what} is empty"));
            }
            if list.iter().any(|(_, w)| !(*w > 0.0 && w.is_finite())) {
                return bad(format!("{what} weights must be positive"));
            }
        }
        if self.users == 0 {
            return bad("users must be positive".into());
        }
        Ok(())
    }

    /// Reads `key = value` settings over the defaults.
    pub fn from_kv(kv: &KeyValues) -> Result<CorpusSpec> {
        let mut spec = CorpusSpec::default();
        for key in kv.keys() {
            let v = kv.get(key).unwrap_or_default();
            match key {
                "seed" => spec.seed = kv.parsed(key)?.unwrap_or(spec.seed),
                "id_domain" => spec.id_domain = IdDomain::parse(v)?,
                "existence_rate" => spec.existence_rate = kv.parsed(key)?.unwrap_or(spec.existence_rate),
                "vocab" => spec.vocab = parse_weights(v)?,
                "lang_weights" => spec.lang_weights = parse_weights(v)?,
                "t0" => spec.t0 = calendar::parse_instant(v)?,
                "t1" => spec.t1 = calendar::parse_instant(v)?,
                "anchor_id0" => spec.anchor_id0 = kv.parsed(key)?.unwrap_or(spec.anchor_id0),
                "anchor_id1" => spec.anchor_id1 = kv.parsed(key)?.unwrap_or(spec.anchor_id1),
                "url_rate" => spec.url_rate = kv.parsed(key)?.unwrap_or(spec.url_rate),
                "url_domains" => spec.url_domains = parse_weights(v)?,
                "reply_rate" => spec.reply_rate = kv.parsed(key)?.unwrap_or(spec.reply_rate),
                "users" => spec.users = kv.parsed(key)?.unwrap_or(spec.users),
                other => return Err(Error::invalid(format!("unknown corpus key {other:?}"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<CorpusSpec> {
        CorpusSpec::from_kv(&KeyValues::load(path)?)
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.set("seed", self.seed.to_string());
        kv.set("id_domain", self.id_domain.render());
        kv.set("existence_rate", self.existence_rate.to_string());
        kv.set("vocab", render_weights(&self.vocab));
        kv.set("lang_weights", render_weights(&self.lang_weights));
        kv.set("t0", self.t0.to_string());
        kv.set("t1", self.t1.to_string());
        kv.set("anchor_id0", self.anchor_id0.to_string());
        kv.set("anchor_id1", self.anchor_id1.to_string());
        kv.set("url_rate", self.url_rate.to_string());
        kv.set("url_domains", render_weights(&self.url_domains));
        kv.set("reply_rate", self.reply_rate.to_string());
        kv.set("users", self.users.to_string());
        kv
    }
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn keyed(seed: u64, id: u64, stream: u64) -> u64 {
    mix64(mix64(seed ^ stream.rotate_left(32)) ^ id)
}

/// Uniform in [0, 1) from the top 53 bits of a keyed hash.
fn unit(seed: u64, id: u64, stream: u64) -> f64 {
    (keyed(seed, id, stream) >> 11) as f64 / (1u64 << 53) as f64
}

/// A validated spec with its samplers prepared.
#[derive(Debug, Clone)]
pub struct Corpus {
    spec: CorpusSpec,
    vocab: WeightedIndex<f64>,
    langs: WeightedIndex<f64>,
    domains: WeightedIndex<f64>,
    ln_span: f64,
}

impl Corpus {
    pub fn new(spec: CorpusSpec) -> Result<Corpus> {
        spec.validate()?;
        let dist = |items: &[(String, f64)]| {
            WeightedIndex::new(items.iter().map(|(_, w)| *w)).map_err(|e| Error::invalid(e.to_string()))
        };
        Ok(Corpus {
            vocab: dist(&spec.vocab)?,
            langs: dist(&spec.lang_weights)?,
            domains: dist(&spec.url_domains)?,
            ln_span: (spec.anchor_id1 as f64 / spec.anchor_id0 as f64).ln(),
            spec,
        })
    }

    pub fn spec(&self) -> &CorpusSpec {
        &self.spec
    }

    /// Time at a real-valued id position on the log-interpolated id-to-time map.
    pub fn time_at(&self, id: f64) -> f64 {
        let s = &self.spec;
        s.t0 as f64 + (s.t1 - s.t0) as f64 * (id / s.anchor_id0 as f64).ln() / self.ln_span
    }

    /// Creation time of `id`, and whether `id` had to be clamped into the anchors.
    pub fn id_to_time(&self, id: u64) -> (i64, bool) {
        let s = &self.spec;
        let clamped = id.clamp(s.anchor_id0, s.anchor_id1);
        let t = if clamped == s.anchor_id0 {
            s.t0
        } else if clamped == s.anchor_id1 {
            s.t1
        } else {
            (self.time_at(clamped as f64).floor() as i64).clamp(s.t0, s.t1)
        };
        (t, clamped != id)
    }

    pub fn exists(&self, id: u64) -> bool {
        (1..=MAX_TWEET_ID).contains(&id)
            && self.spec.id_domain.contains(id)
            && unit(self.spec.seed, id, STREAM_EXISTS) < self.spec.existence_rate
    }

    fn user_of(&self, id: u64) -> u64 {
        1 + keyed(self.spec.seed, id, STREAM_USER) % self.spec.users
    }

    fn screen_name(uid: u64) -> String {
        const SYLLABLES: [&str; 16] =
            ["ka", "lo", "mi", "ra", "ben", "to", "su", "na", "ze", "pi", "do", "vel", "an", "jo", "ri", "mo"];
        let mut name = String::new();
        let mut x = mix64(uid);
        for _ in 0..3 {
            name.push_str(SYLLABLES[(x & 15) as usize]);
            x >>= 4;
        }
        format!("{name}{}", uid % 1000)
    }

    fn words(&self, rng: &mut ChaCha8Rng, n: usize) -> Vec<&str> {
        (0..n).map(|_| self.spec.vocab[self.vocab.sample(rng)].0.as_str()).collect()
    }

    fn user(&self, uid: u64) -> User {
        let mut rng = ChaCha8Rng::seed_from_u64(keyed(self.spec.seed, uid, STREAM_PROFILE));
        let screen_name = Corpus::screen_name(uid);
        let n = rng.gen_range(6..=14);
        let description = self.words(&mut rng, n).join(" ");
        let lang = self.spec.lang_weights[self.langs.sample(&mut rng)].0.clone();
        let joined = self.spec.t0 + (rng.gen::<f64>() * (self.spec.t1 - self.spec.t0) as f64 * 0.5) as i64;
        User {
            id: uid,
            id_str: uid.to_string(),
            name: format!("User {uid}"),
            location: ["", "San Francisco", "London", "Tokyo", "Tehran", "São Paulo"][rng.gen_range(0..6)].to_string(),
            description,
            url: rng.gen_bool(0.3).then(|| format!("http://{screen_name}.example.com/")),
            protected: false,
            followers_count: rng.gen_range(0..5_000),
            friends_count: rng.gen_range(0..2_000),
            listed_count: rng.gen_range(0..50),
            created_at: format_created_at(joined),
            favourites_count: rng.gen_range(0..300),
            utc_offset: Some(rng.gen_range(-12..=12) * 3600),
            time_zone: Some("Pacific Time (US & Canada)".to_string()),
            verified: false,
            statuses_count: rng.gen_range(1..20_000),
            lang,
            profile_background_color: format!("{:06X}", rng.gen_range(0..0x100_0000)),
            profile_image_url: format!("http://a1.twimg.com/profile_images/{uid}/avatar_normal.png"),
            profile_link_color: format!("{:06X}", rng.gen_range(0..0x100_0000)),
            profile_text_color: "333333".to_string(),
            default_profile: rng.gen_bool(0.5),
            screen_name,
        }
    }

    /// The tweet with this id, or `None` when the id does not resolve.
    pub fn gen_tweet(&self, id: u64) -> Option<HydratedTweet> {
        if !self.exists(id) {
            return None;
        }
        let spec = &self.spec;
        let mut rng = ChaCha8Rng::seed_from_u64(keyed(spec.seed, id, STREAM_FIELDS));
        let (created, time_clamped) = self.id_to_time(id);

        let n = rng.gen_range(3..=12);
        let mut words = self.words(&mut rng, n);
        let url = rng.gen_bool(spec.url_rate).then(|| {
            let domain = &spec.url_domains[self.domains.sample(&mut rng)].0;
            let path: String = (0..rng.gen_range(4..=7))
                .map(|_| char::from(b"abcdefghijkmnopqrstuvwxyzABCDEFGHJKLMNPQRSTUVWXYZ23456789"[rng.gen_range(0..57)]))
                .collect();
            format!("http://{domain}/{path}")
        });
        let text = loop {
            let mut parts = words.clone();
            if let Some(u) = &url {
                parts.push(u);
            }
            let text = parts.join(" ");
            if text.chars().count() <= MAX_TEXT_CHARS || words.len() <= 1 {
                break text;
            }
            words.pop();
        };

        let reply = rng.gen_bool(spec.reply_rate).then(|| {
            (0..16).find_map(|_| {
                let target = rng.gen_range(1..id.max(2));
                (target < id && self.exists(target)).then_some(target)
            })
        });
        let reply_to = reply.flatten().map(|t| (t, self.user_of(t)));

        let lang = spec.lang_weights[self.langs.sample(&mut rng)].0.clone();
        let retweet_count = rng.gen_range(0..5);
        let favorite_count = rng.gen_range(0..5);
        let source = ["web", "<a href=\"http://twitterrific.com\">Twitterrific</a>", "txt", "im"][rng.gen_range(0..4)];

        let entities = Entities {
            urls: url
                .iter()
                .map(|u| {
                    let start = text.chars().count() - u.chars().count();
                    UrlEntity { url: u.clone(), expanded_url: None, indices: [start as u32, text.chars().count() as u32] }
                })
                .collect(),
            ..Entities::default()
        };

        Some(HydratedTweet {
            created_at: format_created_at(created),
            id,
            id_str: id.to_string(),
            text,
            source: source.to_string(),
            truncated: false,
            in_reply_to_status_id: reply_to.map(|(t, _)| t),
            in_reply_to_status_id_str: reply_to.map(|(t, _)| t.to_string()),
            in_reply_to_user_id: reply_to.map(|(_, u)| u),
            in_reply_to_user_id_str: reply_to.map(|(_, u)| u.to_string()),
            in_reply_to_screen_name: reply_to.map(|(_, u)| Corpus::screen_name(u)),
            user: self.user(self.user_of(id)),
            geo: None,
            coordinates: None,
            place: None,
            retweet_count,
            favorite_count,
            favorited: false,
            retweeted: false,
            entities: Some(entities),
            lang: Some(lang),
            time_clamped,
        })
    }
}
