//! Action extraction: tweets into per-action-type event streams.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::ingest::Tweet;

/// Separates the two halves of a higher-order action key.
pub const KEY_SEPARATOR: char = '\u{1F}';

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActionType {
    Hashtag,
    Url,
    Mention,
    HashtagUrl,
    UrlMention,
    HashtagMention,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Entity {
    Hashtags,
    Urls,
    Mentions,
}

impl Entity {
    fn of(self, tweet: &Tweet) -> &[String] {
        match self {
            Entity::Hashtags => &tweet.hashtags,
            Entity::Urls => &tweet.urls,
            Entity::Mentions => &tweet.mentions,
        }
    }
}

impl ActionType {
    pub const ALL: [ActionType; 6] = [
        ActionType::Hashtag,
        ActionType::Url,
        ActionType::Mention,
        ActionType::HashtagUrl,
        ActionType::UrlMention,
        ActionType::HashtagMention,
    ];

    pub const STANDARD: [ActionType; 3] = [ActionType::Hashtag, ActionType::Url, ActionType::Mention];

    pub const HIGHER_ORDER: [ActionType; 3] = [
        ActionType::HashtagUrl,
        ActionType::UrlMention,
        ActionType::HashtagMention,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ActionType::Hashtag => "hashtag",
            ActionType::Url => "url",
            ActionType::Mention => "mention",
            ActionType::HashtagUrl => "hashtag-url",
            ActionType::UrlMention => "url-mention",
            ActionType::HashtagMention => "hashtag-mention",
        }
    }

    pub fn is_higher_order(self) -> bool {
        self.parts().1.is_some()
    }

    /// The constituent standard kinds, as (first, second).
    pub fn constituents(self) -> (ActionType, Option<ActionType>) {
        use ActionType::*;
        match self {
            HashtagUrl => (Hashtag, Some(Url)),
            UrlMention => (Url, Some(Mention)),
            HashtagMention => (Hashtag, Some(Mention)),
            standard => (standard, None),
        }
    }

    fn parts(self) -> (Entity, Option<Entity>) {
        use ActionType::*;
        match self {
            Hashtag => (Entity::Hashtags, None),
            Url => (Entity::Urls, None),
            Mention => (Entity::Mentions, None),
            HashtagUrl => (Entity::Hashtags, Some(Entity::Urls)),
            UrlMention => (Entity::Urls, Some(Entity::Mentions)),
            HashtagMention => (Entity::Hashtags, Some(Entity::Mentions)),
        }
    }

    /// Parses a comma-separated list such as `"hashtag,url,mention"`.
    pub fn parse_list(list: &str) -> Result<Vec<ActionType>, UnknownActionType> {
        let mut out = Vec::new();
        for part in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let kind: ActionType = part.parse()?;
            if !out.contains(&kind) {
                out.push(kind);
            }
        }
        Ok(out)
    }
}

impl fmt::Display for ActionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown action type {0:?}")]
pub struct UnknownActionType(pub String);

impl FromStr for ActionType {
    type Err = UnknownActionType;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let normalized = s.trim().to_ascii_lowercase().replace('_', "-");
        ActionType::ALL
            .into_iter()
            .find(|kind| kind.name() == normalized)
            .ok_or_else(|| UnknownActionType(s.to_string()))
    }
}

/// A (user, time, action) atom.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ActionEvent {
    pub user_id: Arc<str>,
    pub timestamp: i64,
    pub action_key: Arc<str>,
    pub tweet_id: Arc<str>,
}

impl ActionEvent {
    pub fn new(user_id: &str, timestamp: i64, action_key: &str, tweet_id: &str) -> Self {
        ActionEvent {
            user_id: Arc::from(user_id),
            timestamp,
            action_key: Arc::from(action_key),
            tweet_id: Arc::from(tweet_id),
        }
    }

    pub(crate) fn sort_key(&self) -> (i64, &str, &str, &str) {
        (self.timestamp, &self.tweet_id, &self.action_key, &self.user_id)
    }
}

fn escape_component(value: &str) -> std::borrow::Cow<'_, str> {
    if value.contains(['\\', KEY_SEPARATOR]) {
        value.replace('\\', "\\\\").replace(KEY_SEPARATOR, "\\x1f").into()
    } else {
        value.into()
    }
}

/// Joins two normalized values into a higher-order action key.
pub fn composite_key(first: &str, second: &str) -> String {
    let mut key = String::with_capacity(first.len() + second.len() + 1);
    key.push_str(&escape_component(first));
    key.push(KEY_SEPARATOR);
    key.push_str(&escape_component(second));
    key
}

/// Events of one action type emitted by a single tweet.
///
/// Higher-order kinds take the full cross product of the two entity lists.
pub fn extract_actions(tweet: &Tweet, action_type: ActionType) -> Vec<ActionEvent> {
    let (first, second) = action_type.parts();
    let firsts = first.of(tweet);
    if firsts.is_empty() {
        return Vec::new();
    }
    let user: Arc<str> = Arc::from(tweet.user_id.as_str());
    let tweet_id: Arc<str> = Arc::from(tweet.tweet_id.as_str());
    let event = |key: String| ActionEvent {
        user_id: user.clone(),
        timestamp: tweet.timestamp,
        action_key: Arc::from(key),
        tweet_id: tweet_id.clone(),
    };

    match second {
        None => firsts.iter().map(|v| event(v.clone())).collect(),
        Some(second) => {
            let seconds = second.of(tweet);
            let mut out = Vec::with_capacity(firsts.len() * seconds.len());
            for a in firsts {
                for b in seconds {
                    out.push(event(composite_key(a, b)));
                }
            }
            out
        }
    }
}

/// Whether retweets contribute actions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum RetweetPolicy {
    #[default]
    Exclude,
    Include,
}

/// Extracts every requested action type from a corpus.
///
/// Each list is sorted by `(timestamp, tweet_id, action_key)`, so the output
/// does not depend on input order.
pub fn extract_all(
    tweets: &[Tweet],
    action_types: &[ActionType],
    retweets: RetweetPolicy,
) -> BTreeMap<ActionType, Vec<ActionEvent>> {
    let mut out = BTreeMap::new();
    for &kind in action_types {
        let mut events: Vec<ActionEvent> = tweets
            .iter()
            .filter(|t| retweets == RetweetPolicy::Include || !t.is_retweet)
            .flat_map(|t| extract_actions(t, kind))
            .collect();
        events.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        out.insert(kind, events);
    }
    out
}
