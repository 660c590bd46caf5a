//! Zero-shot stance annotation of users through a chat-completion service.
//!
//! Each of a user's tweets (at most 20, pre-ranked by the caller) is
//! classified on its own with a topic prompt; the per-tweet classes are
//! then aggregated by majority. All-neutral users and users with as many
//! tweets for one stance as for the other are left undetermined.

mod backend;
mod batch;
pub mod mock;

use std::fmt;

use log::warn;
use serde::{Deserialize, Serialize};

pub use backend::{ChatBackend, EndpointConfig, HttpBackend, API_KEY_ENV};
pub use batch::{
    annotate_batch, read_journal, read_results, write_results, BatchOptions, BatchReport, Clock, FailedUser,
    GuardedBackend, RateLimiter, SystemClock, VirtualClock,
};

use crate::stance::{Stance, StanceNames};

pub const MAX_TWEETS_PER_USER: usize = 20;

#[derive(Debug, thiserror::Error)]
pub enum AnnotateError {
    #[error("invalid request for user {user}: {reason}")]
    InvalidRequest { user: String, reason: String },
    #[error("missing credential: set {0}")]
    MissingCredential(String),
    #[error("http status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("transport: {0}")]
    Transport(String),
    #[error("malformed service response: {0}")]
    Response(String),
    #[error("journal line {line}: {message}")]
    Journal { line: usize, message: String },
    #[error("results line {line}: {message}")]
    Results { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topic {
    GunControl,
    ClimateChange,
}

const GUN_PROMPT: &str =
    "The stance of the content. Is the message pro gun control, anti gun control, or neutral?";
const CLIMATE_PROMPT: &str = "The stance of the content. Does the message capture the user's belief in climate change, disbelief, or is it neutral?";

impl Topic {
    /// The function-call description sent with every tweet.
    pub fn prompt(self) -> &'static str {
        match self {
            Topic::GunControl => GUN_PROMPT,
            Topic::ClimateChange => CLIMATE_PROMPT,
        }
    }

    /// Class words in the order stance 1, stance 2, neutral.
    pub fn options(self) -> [&'static str; 3] {
        match self {
            Topic::GunControl => ["pro", "anti", "neutral"],
            Topic::ClimateChange => ["belief", "disbelief", "neutral"],
        }
    }

    pub fn stance_names(self) -> StanceNames {
        match self {
            Topic::GunControl => StanceNames::gun_control(),
            Topic::ClimateChange => StanceNames::climate(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Topic::GunControl => "gun_control",
            Topic::ClimateChange => "climate_change",
        }
    }
}

impl std::str::FromStr for Topic {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "gun_control" | "gun-control" | "gun" => Ok(Topic::GunControl),
            "climate_change" | "climate-change" | "climate" => Ok(Topic::ClimateChange),
            other => Err(format!("unknown topic {other:?}")),
        }
    }
}

/// Class of a single tweet.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TweetClass {
    Stance1,
    Stance2,
    Neutral,
}

impl TweetClass {
    pub fn word(self, topic: Topic) -> &'static str {
        let [a, b, n] = topic.options();
        match self {
            TweetClass::Stance1 => a,
            TweetClass::Stance2 => b,
            TweetClass::Neutral => n,
        }
    }

    pub fn from_word(word: &str, topic: Topic) -> Option<Self> {
        let w = word.trim().trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase();
        let [a, b, n] = topic.options();
        if w == a {
            Some(TweetClass::Stance1)
        } else if w == b {
            Some(TweetClass::Stance2)
        } else if w == n {
            Some(TweetClass::Neutral)
        } else {
            None
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRequest {
    pub user_id: String,
    pub tweets: Vec<String>,
    pub topic: Topic,
}

impl AnnotationRequest {
    pub fn validate(&self) -> Result<(), AnnotateError> {
        let bad = |reason: &str| {
            Err(AnnotateError::InvalidRequest {
                user: self.user_id.clone(),
                reason: reason.into(),
            })
        };
        if self.user_id.is_empty() || self.user_id.contains(['\t', '\n']) {
            return bad("user id must be non-empty without tabs or newlines");
        }
        if self.tweets.is_empty() || self.tweets.len() > MAX_TWEETS_PER_USER {
            return bad("need 1 to 20 tweets");
        }
        if self.tweets.iter().any(|t| t.trim().is_empty()) {
            return bad("empty tweet text");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationResult {
    pub user_id: String,
    pub topic: Topic,
    pub classes: Vec<TweetClass>,
    /// `None` means undetermined.
    pub label: Option<Stance>,
    /// Raw service replies, one per tweet.
    pub raw: Vec<String>,
    pub unparseable: usize,
}

/// Majority rule over per-tweet classes.
pub fn aggregate(classes: &[TweetClass]) -> Option<Stance> {
    let s1 = classes.iter().filter(|&&c| c == TweetClass::Stance1).count();
    let s2 = classes.iter().filter(|&&c| c == TweetClass::Stance2).count();
    match s1.cmp(&s2) {
        std::cmp::Ordering::Greater => Some(Stance::S1),
        std::cmp::Ordering::Less => Some(Stance::S2),
        std::cmp::Ordering::Equal => None,
    }
}

impl AnnotationResult {
    /// Re-derives the label from the stored raw replies.
    pub fn reaggregate(&self) -> Option<Stance> {
        let classes: Vec<TweetClass> = self
            .raw
            .iter()
            .map(|r| parse_reply(r, self.topic).unwrap_or(TweetClass::Neutral))
            .collect();
        aggregate(&classes)
    }

    /// Label column of the results file: the topic's stance name or
    /// `undetermined`.
    pub fn label_name(&self) -> String {
        match self.label {
            Some(s) => self.topic.stance_names().name(s).to_string(),
            None => "undetermined".to_string(),
        }
    }
}

/// Extracts the class from a service reply: the `stance` argument of a
/// function call, or else a single word of content.
pub fn parse_reply(raw: &str, topic: Topic) -> Option<TweetClass> {
    let v: serde_json::Value = serde_json::from_str(raw).ok()?;
    let message = v.pointer("/choices/0/message")?;
    if let Some(args) = message.pointer("/tool_calls/0/function/arguments").and_then(|a| a.as_str()) {
        let args: serde_json::Value = serde_json::from_str(args).ok()?;
        return args.get("stance").and_then(|s| s.as_str()).and_then(|s| TweetClass::from_word(s, topic));
    }
    message
        .get("content")
        .and_then(|c| c.as_str())
        .and_then(|c| TweetClass::from_word(c, topic))
}

/// Classifies every tweet of one user and aggregates the result. Wrap the
/// backend in a [`GuardedBackend`] for retries and rate limiting; the first
/// call that still fails fails the whole user.
pub fn annotate_user<B: ChatBackend + ?Sized>(
    req: &AnnotationRequest,
    backend: &B,
) -> Result<AnnotationResult, AnnotateError> {
    req.validate()?;
    let mut classes = Vec::with_capacity(req.tweets.len());
    let mut raw = Vec::with_capacity(req.tweets.len());
    let mut unparseable = 0;
    for tweet in &req.tweets {
        let reply = backend.classify(req.topic, tweet)?;
        let class = parse_reply(&reply, req.topic).unwrap_or_else(|| {
            warn!("user {}: unparseable reply counted as neutral", req.user_id);
            unparseable += 1;
            TweetClass::Neutral
        });
        classes.push(class);
        raw.push(reply);
    }
    Ok(AnnotationResult {
        user_id: req.user_id.clone(),
        topic: req.topic,
        label: aggregate(&classes),
        classes,
        raw,
        unparseable,
    })
}

impl fmt::Display for Topic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use TweetClass::*;

    #[test]
    fn aggregation_rule() {
        assert_eq!(aggregate(&[Stance1, Stance1, Neutral]), Some(Stance::S1));
        assert_eq!(aggregate(&[Stance1, Stance2]), None);
        assert_eq!(aggregate(&[Neutral; 20]), None);
        assert_eq!(aggregate(&[Stance2, Neutral, Neutral, Neutral]), Some(Stance::S2));
        assert_eq!(aggregate(&[Stance1, Stance2, Stance2, Stance1, Neutral]), None);
    }

    #[test]
    fn word_parsing() {
        let t = Topic::GunControl;
        assert_eq!(TweetClass::from_word(" Pro.", t), Some(Stance1));
        assert_eq!(TweetClass::from_word("ANTI", t), Some(Stance2));
        assert_eq!(TweetClass::from_word("belief", t), None);
        assert_eq!(TweetClass::from_word("disbelief", Topic::ClimateChange), Some(Stance2));
    }

    #[test]
    fn reply_parsing() {
        let t = Topic::ClimateChange;
        let call = r#"{"choices":[{"message":{"tool_calls":[{"function":{"name":"classify_stance","arguments":"{\"stance\":\"belief\"}"}}]}}]}"#;
        assert_eq!(parse_reply(call, t), Some(Stance1));
        let text = r#"{"choices":[{"message":{"content":"Neutral"}}]}"#;
        assert_eq!(parse_reply(text, t), Some(Neutral));
        assert_eq!(parse_reply(r#"{"choices":[{"message":{"content":"maybe"}}]}"#, t), None);
        assert_eq!(parse_reply("not json", t), None);
    }

    #[test]
    fn request_validation() {
        let ok = AnnotationRequest {
            user_id: "u".into(),
            tweets: vec!["hello".into()],
            topic: Topic::GunControl,
        };
        ok.validate().unwrap();
        let too_many = AnnotationRequest {
            tweets: vec!["x".into(); 21],
            ..ok.clone()
        };
        assert!(too_many.validate().is_err());
        let empty = AnnotationRequest {
            tweets: vec![" ".into()],
            ..ok.clone()
        };
        assert!(empty.validate().is_err());
        let none = AnnotationRequest { tweets: vec![], ..ok };
        assert!(none.validate().is_err());
    }

    #[test]
    fn prompts_are_exact() {
        assert!(Topic::GunControl.prompt().ends_with("Is the message pro gun control, anti gun control, or neutral?"));
        assert!(Topic::ClimateChange
            .prompt()
            .ends_with("belief in climate change, disbelief, or is it neutral?"));
    }
}
