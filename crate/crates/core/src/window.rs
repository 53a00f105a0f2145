//! Synchronized-action edge weights from per-action event streams.
//!
//! Events are grouped by action key and each group is scanned with a
//! forward-looking sliding window of `window_seconds`. For an anchor event
//! `e_i` by user `u`, the window holds every event of the group with
//! `ts_i <= ts_j <= ts_i + t` (closed on both ends). The anchor draws one
//! unit of weight to every other user `v` in that window whose presence
//! (event count inside the window) is strictly larger than `u`'s. Equal
//! presence draws only when the configured [`TieBreak`] selects `u`.
//!
//! This caps the contribution of a prolific account: a user with two events
//! sharing a window with a user with a hundred gets weight two, the same as
//! the min-count rule of a fixed bin.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::actions::ActionEvent;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WindowError {
    #[error("window_seconds must be positive")]
    ZeroWindow,
    #[error("group is not sorted by timestamp at position {index}")]
    Unsorted { index: usize },
    #[error("group mixes action keys {first:?} and {other:?}")]
    MixedKeys { first: String, other: String },
}

/// How an equal-presence pair is resolved at an anchor.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum TieBreak {
    /// The anchor draws if its earliest event in the window strictly precedes
    /// the other user's earliest; equal timestamps fall back to the smaller
    /// user id.
    #[default]
    EarliestAnchor,
    /// The anchor draws only if its user id is the smaller of the two.
    SmallerUserId,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowConfig {
    pub window_seconds: u64,
    pub tie_break: TieBreak,
    /// Scale each increment by `1 / log2(1 + n)` where `n` is the group size.
    pub popularity_downweight: bool,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            window_seconds: 300,
            tie_break: TieBreak::EarliestAnchor,
            popularity_downweight: false,
        }
    }
}

impl WindowConfig {
    pub fn with_window(window_seconds: u64) -> Self {
        WindowConfig { window_seconds, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), WindowError> {
        if self.window_seconds == 0 {
            Err(WindowError::ZeroWindow)
        } else {
            Ok(())
        }
    }

    /// Per-increment weight for a group of `n` events.
    pub fn increment_scale(&self, n: usize) -> f64 {
        if self.popularity_downweight {
            1.0 / (1.0 + n as f64).log2()
        } else {
            1.0
        }
    }
}

/// An unordered pair of distinct users, stored with `lo < hi`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UserPair {
    lo: Arc<str>,
    hi: Arc<str>,
}

impl UserPair {
    /// `None` for a self-pair.
    pub fn new(a: impl Into<Arc<str>>, b: impl Into<Arc<str>>) -> Option<Self> {
        let (a, b) = (a.into(), b.into());
        match a.cmp(&b) {
            Ordering::Less => Some(UserPair { lo: a, hi: b }),
            Ordering::Greater => Some(UserPair { lo: b, hi: a }),
            Ordering::Equal => None,
        }
    }

    pub fn lo(&self) -> &str {
        &self.lo
    }

    pub fn hi(&self) -> &str {
        &self.hi
    }

    pub fn lo_arc(&self) -> &Arc<str> {
        &self.lo
    }

    pub fn hi_arc(&self) -> &Arc<str> {
        &self.hi
    }

    pub fn contains(&self, user: &str) -> bool {
        &*self.lo == user || &*self.hi == user
    }
}

/// Weighted user pairs. All weights are positive.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EdgeAccumulator {
    weights: HashMap<UserPair, f64>,
}

impl EdgeAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `weight` to the pair; self-pairs and non-positive weights are ignored.
    pub fn add(&mut self, a: &Arc<str>, b: &Arc<str>, weight: f64) {
        if weight <= 0.0 {
            return;
        }
        if let Some(pair) = UserPair::new(a.clone(), b.clone()) {
            *self.weights.entry(pair).or_insert(0.0) += weight;
        }
    }

    pub fn add_pair(&mut self, pair: UserPair, weight: f64) {
        if weight > 0.0 {
            *self.weights.entry(pair).or_insert(0.0) += weight;
        }
    }

    pub fn get(&self, a: &str, b: &str) -> f64 {
        UserPair::new(a, b)
            .and_then(|p| self.weights.get(&p).copied())
            .unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.sorted().iter().map(|(_, w)| w).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&UserPair, f64)> {
        self.weights.iter().map(|(p, w)| (p, *w))
    }

    /// Pairs in ascending order.
    pub fn sorted(&self) -> Vec<(UserPair, f64)> {
        let mut out: Vec<_> = self.weights.iter().map(|(p, w)| (p.clone(), *w)).collect();
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }

    /// Adds every weight of `other` into `self`.
    pub fn merge(&mut self, other: EdgeAccumulator) {
        if self.weights.is_empty() {
            self.weights = other.weights;
            return;
        }
        for (pair, w) in other.weights {
            *self.weights.entry(pair).or_insert(0.0) += w;
        }
    }
}

impl FromIterator<(UserPair, f64)> for EdgeAccumulator {
    fn from_iter<I: IntoIterator<Item = (UserPair, f64)>>(iter: I) -> Self {
        let mut acc = EdgeAccumulator::new();
        for (pair, w) in iter {
            acc.add_pair(pair, w);
        }
        acc
    }
}

/// Sums accumulators in the order given.
pub fn merge_accumulators<I: IntoIterator<Item = EdgeAccumulator>>(parts: I) -> EdgeAccumulator {
    parts.into_iter().fold(EdgeAccumulator::new(), |mut acc, part| {
        acc.merge(part);
        acc
    })
}

/// Partitions events by action key, each group sorted by `(timestamp, tweet_id)`.
pub fn group_by_action(events: &[ActionEvent]) -> BTreeMap<Arc<str>, Vec<ActionEvent>> {
    let mut groups: BTreeMap<Arc<str>, Vec<ActionEvent>> = BTreeMap::new();
    for event in events {
        groups.entry(event.action_key.clone()).or_default().push(event.clone());
    }
    for group in groups.values_mut() {
        group.sort_by(|a, b| {
            (a.timestamp, &a.tweet_id, &a.user_id).cmp(&(b.timestamp, &b.tweet_id, &b.user_id))
        });
    }
    groups
}

fn check_group(group: &[ActionEvent], config: &WindowConfig) -> Result<(), WindowError> {
    config.validate()?;
    for (index, pair) in group.windows(2).enumerate() {
        if pair[1].timestamp < pair[0].timestamp {
            return Err(WindowError::Unsorted { index: index + 1 });
        }
        if pair[1].action_key != pair[0].action_key {
            return Err(WindowError::MixedKeys {
                first: pair[0].action_key.to_string(),
                other: pair[1].action_key.to_string(),
            });
        }
    }
    Ok(())
}

/// Dense per-group user numbering. `rank[u]` orders users by id.
struct LocalUsers<'a> {
    names: Vec<&'a Arc<str>>,
    of_event: Vec<u32>,
    rank: Vec<u32>,
}

impl<'a> LocalUsers<'a> {
    fn new(group: &'a [ActionEvent]) -> Self {
        let mut index: HashMap<&str, u32> = HashMap::new();
        let mut names = Vec::new();
        let of_event = group
            .iter()
            .map(|e| {
                *index.entry(&e.user_id).or_insert_with(|| {
                    names.push(&e.user_id);
                    (names.len() - 1) as u32
                })
            })
            .collect();
        let mut order: Vec<u32> = (0..names.len() as u32).collect();
        order.sort_by(|&a, &b| names[a as usize].cmp(names[b as usize]));
        let mut rank = vec![0; names.len()];
        for (r, &u) in order.iter().enumerate() {
            rank[u as usize] = r as u32;
        }
        LocalUsers { names, of_event, rank }
    }

    fn into_accumulator(self, counts: HashMap<(u32, u32), u64>, scale: f64) -> EdgeAccumulator {
        counts
            .into_iter()
            .filter_map(|((a, b), n)| {
                UserPair::new(self.names[a as usize].clone(), self.names[b as usize].clone())
                    .map(|pair| (pair, n as f64 * scale))
            })
            .collect()
    }
}

fn local_pair(a: u32, b: u32) -> (u32, u32) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Sliding-window edge weights for one action group.
///
/// `group` must be sorted by timestamp and share a single action key.
/// Runs in `O(N * W)` for `N` events and at most `W` events per window.
pub fn sliding_window_edges(
    group: &[ActionEvent],
    config: &WindowConfig,
) -> Result<EdgeAccumulator, WindowError> {
    check_group(group, config)?;
    if group.len() < 2 {
        return Ok(EdgeAccumulator::new());
    }
    let users = LocalUsers::new(group);
    let n_users = users.names.len();
    let t = config.window_seconds.min(i64::MAX as u64) as i64;

    // Per-user event positions, and how many of them lie before the window
    // start (`before`) and before the window end (`upto`).
    let mut positions: Vec<Vec<usize>> = vec![Vec::new(); n_users];
    for (i, &u) in users.of_event.iter().enumerate() {
        positions[u as usize].push(i);
    }
    let mut before = vec![0usize; n_users];
    let mut upto = vec![0usize; n_users];
    let mut seen = vec![usize::MAX; n_users];
    let mut counts: HashMap<(u32, u32), u64> = HashMap::new();

    let mut lo = 0;
    let mut hi = 0;
    for i in 0..group.len() {
        let ts = group[i].timestamp;
        while group[lo].timestamp < ts {
            before[users.of_event[lo] as usize] += 1;
            lo += 1;
        }
        let end = ts.saturating_add(t);
        while hi < group.len() && group[hi].timestamp <= end {
            upto[users.of_event[hi] as usize] += 1;
            hi += 1;
        }

        let u = users.of_event[i] as usize;
        let presence_u = upto[u] - before[u];
        seen[u] = i;
        for j in lo..hi {
            let v = users.of_event[j] as usize;
            if seen[v] == i {
                continue;
            }
            seen[v] = i;
            let presence_v = upto[v] - before[v];
            let draws = match presence_u.cmp(&presence_v) {
                Ordering::Less => true,
                Ordering::Greater => false,
                Ordering::Equal => match config.tie_break {
                    TieBreak::EarliestAnchor => {
                        // The anchor is u's earliest event in its own window.
                        let earliest_v = group[positions[v][before[v]]].timestamp;
                        earliest_v > ts || (earliest_v == ts && users.rank[u] < users.rank[v])
                    }
                    TieBreak::SmallerUserId => users.rank[u] < users.rank[v],
                },
            };
            if draws {
                *counts.entry(local_pair(u as u32, v as u32)).or_insert(0) += 1;
            }
        }
    }

    Ok(users.into_accumulator(counts, config.increment_scale(group.len())))
}

/// Fixed-bin baseline: bins of `window_seconds` starting at the group's
/// first timestamp; each pair in a bin gains `min(count_x, count_y)`.
pub fn fixed_window_edges(
    group: &[ActionEvent],
    config: &WindowConfig,
) -> Result<EdgeAccumulator, WindowError> {
    check_group(group, config)?;
    if group.len() < 2 {
        return Ok(EdgeAccumulator::new());
    }
    let users = LocalUsers::new(group);
    let t = config.window_seconds.min(i64::MAX as u64) as i64;
    let origin = group[0].timestamp;
    let mut counts: HashMap<(u32, u32), u64> = HashMap::new();

    let mut start = 0;
    while start < group.len() {
        let bin = (group[start].timestamp - origin) / t;
        let mut end = start;
        let mut present: BTreeMap<u32, u64> = BTreeMap::new();
        while end < group.len() && (group[end].timestamp - origin) / t == bin {
            *present.entry(users.of_event[end]).or_insert(0) += 1;
            end += 1;
        }
        let present: Vec<(u32, u64)> = present.into_iter().collect();
        for (a, &(x, cx)) in present.iter().enumerate() {
            for &(y, cy) in &present[a + 1..] {
                *counts.entry(local_pair(x, y)).or_insert(0) += cx.min(cy);
            }
        }
        start = end;
    }

    Ok(users.into_accumulator(counts, config.increment_scale(group.len())))
}

/// Which edge rule a view is built with.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum WindowMethod {
    #[default]
    Sliding,
    Fixed,
}

/// Groups `events` by action and builds one accumulator for the whole view.
///
/// Groups are processed in parallel on the current rayon pool; partial
/// results are merged in action-key order, so the output is identical for
/// any thread count.
pub fn build_view(
    events: &[ActionEvent],
    config: &WindowConfig,
    method: WindowMethod,
) -> Result<EdgeAccumulator, WindowError> {
    config.validate()?;
    let groups = group_by_action(events);
    let groups: Vec<&Vec<ActionEvent>> = groups.values().collect();
    let parts: Vec<EdgeAccumulator> = groups
        .par_iter()
        .map(|group| match method {
            WindowMethod::Sliding => sliding_window_edges(group, config),
            WindowMethod::Fixed => fixed_window_edges(group, config),
        })
        .collect::<Result<_, _>>()?;
    Ok(merge_accumulators(parts))
}
