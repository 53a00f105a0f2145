//! Corpus ingestion: line-delimited JSON records into normalized [`Tweet`]s.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use url::{Position, Url};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: {reason}")]
    Record { line: usize, reason: String },
    #[error("failed to read input: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to write error report: {0}")]
    Csv(#[from] csv::Error),
}

/// One normalized post event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tweet {
    #[serde(rename = "id")]
    pub tweet_id: String,
    pub user_id: String,
    pub timestamp: i64,
    pub hashtags: Vec<String>,
    pub urls: Vec<String>,
    pub mentions: Vec<String>,
    pub is_retweet: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub text: Option<String>,
}

impl Tweet {
    /// Builds a tweet, normalizing and deduplicating every entity list.
    pub fn new(
        tweet_id: impl Into<String>,
        user_id: impl Into<String>,
        timestamp: i64,
        hashtags: &[&str],
        urls: &[&str],
        mentions: &[&str],
    ) -> Self {
        let mut tweet = Tweet {
            tweet_id: tweet_id.into(),
            user_id: user_id.into(),
            timestamp,
            hashtags: hashtags.iter().map(|s| s.to_string()).collect(),
            urls: urls.iter().map(|s| s.to_string()).collect(),
            mentions: mentions.iter().map(|s| s.to_string()).collect(),
            is_retweet: false,
            text: None,
        };
        tweet.normalize();
        tweet
    }

    /// Re-applies entity normalization in place. A no-op on normalized tweets.
    pub fn normalize(&mut self) {
        self.hashtags = normalize_list(&self.hashtags, |s| normalize_tag(s, TagKind::Hashtag));
        self.mentions = normalize_list(&self.mentions, |s| normalize_tag(s, TagKind::Mention));
        self.urls = normalize_list(&self.urls, canonicalize_url);
    }
}

fn normalize_list(raw: &[String], f: impl Fn(&str) -> String) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(raw.len());
    for item in raw {
        if item.trim().is_empty() {
            continue;
        }
        let value = f(item);
        if !value.is_empty() && seen.insert(value.clone()) {
            out.push(value);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TagKind {
    Hashtag,
    Mention,
}

impl TagKind {
    fn sigils(self) -> &'static [char] {
        match self {
            TagKind::Hashtag => &['#', '\u{FF03}'],
            TagKind::Mention => &['@', '\u{FF20}'],
        }
    }
}

/// Strips leading sigils and lowercases.
pub fn normalize_tag(raw: &str, kind: TagKind) -> String {
    raw.trim()
        .trim_start_matches(kind.sigils())
        .trim()
        .to_lowercase()
}

/// Canonical form of a URL used as an action key.
///
/// Scheme and host are lowercased, the fragment and any `utm_*` query
/// parameters are dropped, and a bare `/` path is removed. Input that does
/// not parse as an absolute URL is returned trimmed and lowercased.
pub fn canonicalize_url(raw: &str) -> String {
    let trimmed = raw.trim();
    let mut url = match Url::parse(trimmed) {
        Ok(url) => url,
        Err(_) => return trimmed.to_lowercase(),
    };
    url.set_fragment(None);

    if let Some(host) = url.host_str() {
        if host.chars().any(|c| c.is_uppercase()) {
            let lower = host.to_lowercase();
            // Only non-special schemes keep host case; failures leave it as is.
            let _ = url.set_host(Some(&lower));
        }
    }

    if let Some(query) = url.query() {
        let kept: Vec<&str> = query
            .split('&')
            .filter(|param| !param.is_empty())
            .filter(|param| {
                let key = param.split('=').next().unwrap_or("");
                !key.to_ascii_lowercase().starts_with("utm_")
            })
            .collect();
        if kept.is_empty() {
            url.set_query(None);
        } else {
            let joined = kept.join("&");
            url.set_query(Some(&joined));
        }
    }

    if !url.cannot_be_a_base() && url.path() == "/" {
        format!("{}{}", &url[..Position::BeforePath], &url[Position::AfterPath..])
    } else {
        url.to_string()
    }
}

/// Pulls `#tags`, `@mentions` and `http(s)://` links out of free text.
pub fn extract_entities(text: &str) -> (Vec<String>, Vec<String>, Vec<String>) {
    let mut hashtags = Vec::new();
    let mut urls = Vec::new();
    let mut mentions = Vec::new();
    for token in text.split_whitespace() {
        let lower = token.to_ascii_lowercase();
        if lower.starts_with("http://") || lower.starts_with("https://") {
            let link = token.trim_end_matches(|c: char| ",.;:!?)]}\"'".contains(c));
            urls.push(link.to_string());
            continue;
        }
        let mut chars = token.chars();
        let sigil = match chars.next() {
            Some(c @ ('#' | '@')) => c,
            _ => continue,
        };
        let body: String = chars
            .take_while(|c| c.is_alphanumeric() || *c == '_')
            .collect();
        if body.is_empty() {
            continue;
        }
        if sigil == '#' {
            hashtags.push(body);
        } else {
            mentions.push(body);
        }
    }
    (hashtags, urls, mentions)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ParseOptions {
    /// Abort on the first bad record instead of reporting it.
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordError {
    pub line_number: usize,
    pub reason: String,
}

#[derive(Debug, Default)]
pub struct ParseReport {
    pub tweets: Vec<Tweet>,
    pub errors: Vec<RecordError>,
}

impl ParseReport {
    /// Writes the error report as CSV (`line_number,reason`).
    pub fn write_errors<W: Write>(&self, writer: W) -> Result<(), IngestError> {
        let mut csv = csv::Writer::from_writer(writer);
        csv.write_record(["line_number", "reason"])?;
        for err in &self.errors {
            csv.write_record([err.line_number.to_string(), err.reason.clone()])?;
        }
        csv.flush()?;
        Ok(())
    }
}

#[derive(Deserialize)]
struct RawRecord {
    id: Option<Value>,
    user_id: Option<Value>,
    timestamp: Option<Value>,
    hashtags: Option<Vec<String>>,
    urls: Option<Vec<String>>,
    mentions: Option<Vec<String>>,
    text: Option<String>,
    #[serde(default)]
    is_retweet: bool,
}

fn required_string(value: Option<Value>, field: &str) -> Result<String, String> {
    match value {
        Some(Value::String(s)) if !s.trim().is_empty() => Ok(s),
        Some(Value::String(_)) => Err(format!("empty {field}")),
        Some(Value::Number(n)) => Ok(n.to_string()),
        Some(Value::Null) | None => Err(format!("missing {field}")),
        Some(_) => Err(format!("{field} must be a string")),
    }
}

/// Epoch seconds from an integer or an ISO-8601 string (naive times are UTC).
pub fn parse_timestamp(value: &Value) -> Result<i64, String> {
    let ts = match value {
        Value::Number(n) => n
            .as_i64()
            .ok_or_else(|| format!("timestamp {n} is not an integer"))?,
        Value::String(s) => {
            let s = s.trim();
            if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
                dt.timestamp()
            } else if let Ok(naive) = NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S") {
                naive.and_utc().timestamp()
            } else if let Ok(naive) = NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S") {
                naive.and_utc().timestamp()
            } else {
                return Err(format!("unparseable timestamp {s:?}"));
            }
        }
        Value::Null => return Err("missing timestamp".into()),
        _ => return Err("timestamp must be an integer or string".into()),
    };
    if ts < 0 {
        return Err(format!("negative timestamp {ts}"));
    }
    Ok(ts)
}

/// Parses a single JSON record into a normalized tweet.
pub fn parse_record(line: &str) -> Result<Tweet, String> {
    let raw: RawRecord = serde_json::from_str(line).map_err(|e| format!("malformed JSON: {e}"))?;
    let tweet_id = required_string(raw.id, "id")?;
    let user_id = required_string(raw.user_id, "user_id")?;
    let timestamp = match raw.timestamp {
        Some(v) => parse_timestamp(&v)?,
        None => return Err("missing timestamp".into()),
    };

    let has_lists = raw.hashtags.is_some() || raw.urls.is_some() || raw.mentions.is_some();
    let (hashtags, urls, mentions) = match (&raw.text, has_lists) {
        (Some(text), false) => extract_entities(text),
        _ => (
            raw.hashtags.unwrap_or_default(),
            raw.urls.unwrap_or_default(),
            raw.mentions.unwrap_or_default(),
        ),
    };

    let mut tweet = Tweet {
        tweet_id,
        user_id,
        timestamp,
        hashtags,
        urls,
        mentions,
        is_retweet: raw.is_retweet,
        text: raw.text,
    };
    tweet.normalize();
    Ok(tweet)
}

/// Parses a line-delimited JSON corpus.
///
/// Every input line yields exactly one tweet or one error entry (blank lines
/// and repeated ids included), unless `strict` is set, in which case the
/// first bad line aborts.
pub fn parse_corpus<R: BufRead>(input: R, options: ParseOptions) -> Result<ParseReport, IngestError> {
    let mut report = ParseReport::default();
    let mut seen_ids = HashSet::new();
    for (idx, line) in input.lines().enumerate() {
        let line_number = idx + 1;
        let line = line?;
        let result = if line.trim().is_empty() {
            Err("empty line".to_string())
        } else {
            parse_record(&line).and_then(|tweet| {
                if seen_ids.insert(tweet.tweet_id.clone()) {
                    Ok(tweet)
                } else {
                    Err(format!("duplicate id {:?}", tweet.tweet_id))
                }
            })
        };
        match result {
            Ok(tweet) => report.tweets.push(tweet),
            Err(reason) if options.strict => {
                return Err(IngestError::Record { line: line_number, reason })
            }
            Err(reason) => report.errors.push(RecordError { line_number, reason }),
        }
    }
    Ok(report)
}

/// Writes tweets in the ingest JSONL schema.
pub fn write_corpus<W: Write>(tweets: &[Tweet], mut writer: W) -> std::io::Result<()> {
    for tweet in tweets {
        serde_json::to_writer(&mut writer, tweet)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}
