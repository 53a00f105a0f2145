//! Synthetic corpora: uniform background chatter plus planted campaigns
//! whose members repeatedly post the same actions within a short jitter.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actions::ActionType;
use crate::ingest::Tweet;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GenError {
    #[error("duration_seconds must be positive")]
    ZeroDuration,
    #[error("campaign {campaign}: jitter {jitter}s exceeds the duration {duration}s")]
    JitterTooLarge { campaign: usize, jitter: u64, duration: u64 },
    #[error("campaign {0}: needs at least 2 users")]
    TooFewUsers(usize),
    #[error("campaign {0}: needs at least one action per used type")]
    NoActions(usize),
    #[error("background tweets need at least one background user")]
    NoBackgroundUsers,
}

/// Size of the background action pools.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActionCounts {
    pub hashtags: usize,
    pub urls: usize,
    pub mentions: usize,
}

impl Default for ActionCounts {
    fn default() -> Self {
        ActionCounts { hashtags: 200, urls: 200, mentions: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignSpec {
    pub k_users: usize,
    /// Actions in the campaign's pool for each type it uses.
    pub m_actions: usize,
    pub repetitions: usize,
    pub jitter_seconds: u64,
    /// Standard action types the campaign posts together.
    pub action_types: Vec<ActionType>,
    /// Give each member an extra hashtag of its own in every post.
    pub regional_split: bool,
}

impl Default for CampaignSpec {
    fn default() -> Self {
        CampaignSpec {
            k_users: 10,
            m_actions: 5,
            repetitions: 20,
            jitter_seconds: 60,
            action_types: ActionType::STANDARD.to_vec(),
            regional_split: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub n_background_users: usize,
    pub n_background_tweets: usize,
    pub n_actions: ActionCounts,
    pub duration_seconds: u64,
    pub start_timestamp: i64,
    pub campaigns: Vec<CampaignSpec>,
    /// Draw campaign actions from the background pools instead of a
    /// disjoint namespace.
    pub overlap: bool,
    pub seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            n_background_users: 1000,
            n_background_tweets: 5000,
            n_actions: ActionCounts::default(),
            duration_seconds: 7 * 24 * 3600,
            start_timestamp: 1_585_699_200,
            campaigns: Vec::new(),
            overlap: false,
            seed: 42,
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<(), GenError> {
        if self.duration_seconds == 0 {
            return Err(GenError::ZeroDuration);
        }
        if self.n_background_tweets > 0 && self.n_background_users == 0 {
            return Err(GenError::NoBackgroundUsers);
        }
        for (i, c) in self.campaigns.iter().enumerate() {
            if c.jitter_seconds > self.duration_seconds {
                return Err(GenError::JitterTooLarge {
                    campaign: i,
                    jitter: c.jitter_seconds,
                    duration: self.duration_seconds,
                });
            }
            if c.k_users < 2 {
                return Err(GenError::TooFewUsers(i));
            }
            if c.m_actions == 0 && !c.action_types.is_empty() {
                return Err(GenError::NoActions(i));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Label {
    Background,
    Campaign(usize),
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Label::Background => f.write_str("background"),
            Label::Campaign(i) => write!(f, "campaign-{i}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    /// Sorted by timestamp; ids are `t<position>`.
    pub tweets: Vec<Tweet>,
    pub labels: BTreeMap<String, Label>,
}

impl Corpus {
    /// Labels CSV: `user_id,label`.
    pub fn write_labels<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "user_id,label")?;
        for (user, label) in &self.labels {
            writeln!(w, "{user},{label}")?;
        }
        w.flush()
    }
}

pub fn background_user(i: usize) -> String {
    format!("bg{i:06}")
}

pub fn campaign_user(campaign: usize, j: usize) -> String {
    format!("c{campaign}u{j:03}")
}

fn background_value(kind: ActionType, j: usize) -> String {
    match kind {
        ActionType::Hashtag => format!("bgtag{j}"),
        ActionType::Url => format!("https://news.example/{j}"),
        _ => format!("bgacct{j}"),
    }
}

fn campaign_value(kind: ActionType, campaign: usize, j: usize) -> String {
    match kind {
        ActionType::Hashtag => format!("c{campaign}tag{j}"),
        ActionType::Url => format!("https://c{campaign}.example/{j}"),
        _ => format!("c{campaign}target{j}"),
    }
}

struct Draft {
    user: String,
    timestamp: i64,
    hashtags: Vec<String>,
    urls: Vec<String>,
    mentions: Vec<String>,
}

/// Generates a corpus and its ground truth. Same scenario, same output.
pub fn generate(scenario: &Scenario) -> Result<Corpus, GenError> {
    scenario.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let start = scenario.start_timestamp;
    let duration = scenario.duration_seconds;
    let pools = scenario.n_actions;
    let mut drafts: Vec<Draft> = Vec::new();
    let mut labels = BTreeMap::new();

    for i in 0..scenario.n_background_users {
        labels.insert(background_user(i), Label::Background);
    }
    let pick = |rng: &mut ChaCha8Rng, kind: ActionType, pool: usize| -> Vec<String> {
        if pool == 0 {
            Vec::new()
        } else {
            vec![background_value(kind, rng.gen_range(0..pool))]
        }
    };
    for _ in 0..scenario.n_background_tweets {
        let user = background_user(rng.gen_range(0..scenario.n_background_users));
        let timestamp = start + rng.gen_range(0..duration) as i64;
        drafts.push(Draft {
            user,
            timestamp,
            hashtags: pick(&mut rng, ActionType::Hashtag, pools.hashtags),
            urls: pick(&mut rng, ActionType::Url, pools.urls),
            mentions: pick(&mut rng, ActionType::Mention, pools.mentions),
        });
    }

    for (c, spec) in scenario.campaigns.iter().enumerate() {
        let members: Vec<String> = (0..spec.k_users).map(|j| campaign_user(c, j)).collect();
        for user in &members {
            labels.insert(user.clone(), Label::Campaign(c));
        }
        let value = |rng: &mut ChaCha8Rng, kind: ActionType| -> String {
            let pool = match kind {
                ActionType::Hashtag => pools.hashtags,
                ActionType::Url => pools.urls,
                _ => pools.mentions,
            };
            if scenario.overlap && pool > 0 {
                background_value(kind, rng.gen_range(0..pool))
            } else {
                campaign_value(kind, c, rng.gen_range(0..spec.m_actions))
            }
        };
        let latest_start = duration - spec.jitter_seconds;
        for _ in 0..spec.repetitions {
            let burst = start + rng.gen_range(0..=latest_start) as i64;
            let mut shared: [Vec<String>; 3] = Default::default();
            for kind in spec.action_types.iter().map(|k| k.constituents()) {
                let kinds = [Some(kind.0), kind.1];
                for kind in kinds.into_iter().flatten() {
                    let slot = match kind {
                        ActionType::Hashtag => 0,
                        ActionType::Url => 1,
                        _ => 2,
                    };
                    if shared[slot].is_empty() {
                        shared[slot].push(value(&mut rng, kind));
                    }
                }
            }
            let mut order = members.clone();
            order.shuffle(&mut rng);
            for (j, user) in order.into_iter().enumerate() {
                let offset = rng.gen_range(0..=spec.jitter_seconds) as i64;
                let mut hashtags = shared[0].clone();
                if spec.regional_split {
                    hashtags.push(format!("c{c}region{j:03}"));
                }
                drafts.push(Draft {
                    user,
                    timestamp: burst + offset,
                    hashtags,
                    urls: shared[1].clone(),
                    mentions: shared[2].clone(),
                });
            }
        }
    }

    // Stable sort keeps generation order among equal timestamps.
    drafts.sort_by_key(|d| d.timestamp);
    let tweets = drafts
        .into_iter()
        .enumerate()
        .map(|(i, d)| {
            let mut t = Tweet {
                tweet_id: format!("t{i:08}"),
                user_id: d.user,
                timestamp: d.timestamp,
                hashtags: d.hashtags,
                urls: d.urls,
                mentions: d.mentions,
                is_retweet: false,
                text: None,
            };
            t.normalize();
            t
        })
        .collect();
    Ok(Corpus { tweets, labels })
}
