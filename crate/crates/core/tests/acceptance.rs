//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits nonzero if any fails. Run with `cargo test --test acceptance`.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::{
    accumulator_weights, brute_sliding, cosine, dense, dense_eigenvector, modularity_double_loop, random_group,
    vitality_from_scratch,
};
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use syncnet::actions::{extract_all, ActionEvent, ActionType, RetweetPolicy};
use syncnet::cluster::{modularity, multiview_cluster, ClusterParams, Clustering};
use syncnet::gen::{self, ActionCounts, CampaignSpec, Scenario};
use syncnet::ingest::Tweet;
use syncnet::metrics::{eigenvector_centrality, VitalityContext, VitalityGraph};
use syncnet::network::{MultiViewNetwork, ViewGraph};
use syncnet::pipeline::{self, BuildConfig, ClusterConfig};
use syncnet::window::{build_view, sliding_window_edges, TieBreak, WindowConfig, WindowMethod};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Uniform single-action traffic: share of within-t co-occurrences the
/// fixed bins keep, relative to the sliding window.
fn fixed_window_loss() -> Outcome {
    let scenario = Scenario {
        n_background_users: 100_000,
        n_background_tweets: 100_000,
        n_actions: ActionCounts { hashtags: 1, urls: 0, mentions: 0 },
        duration_seconds: 3_000_000,
        seed: 2024,
        ..Default::default()
    };
    let corpus = gen::generate(&scenario).map_err(|e| e.to_string())?;
    let events = extract_all(&corpus.tweets, &[ActionType::Hashtag], RetweetPolicy::Exclude)
        .remove(&ActionType::Hashtag)
        .unwrap_or_default();
    let config = WindowConfig::default();
    let sliding = build_view(&events, &config, WindowMethod::Sliding).map_err(|e| e.to_string())?;
    let fixed = build_view(&events, &config, WindowMethod::Fixed).map_err(|e| e.to_string())?;
    let ratio = fixed.total_weight() / sliding.total_weight();
    let edge_ratio = fixed.len() as f64 / sliding.len() as f64;
    check(
        events.len() >= 100_000 && (ratio - 0.5).abs() <= 0.03,
        format!(
            "{} events, captured co-occurrences fixed/sliding = {ratio:.4} (distinct pairs {edge_ratio:.4})",
            events.len()
        ),
    )
}

fn sliding_oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut total_events = 0;
    for i in 0..1000 {
        let users = rng.gen_range(2..60);
        let span = rng.gen_range(1..6000);
        let group = random_group(&mut rng, 500, users, span);
        total_events += group.len();
        let config = WindowConfig {
            window_seconds: rng.gen_range(1..900),
            tie_break: if i % 2 == 0 { TieBreak::EarliestAnchor } else { TieBreak::SmallerUserId },
            popularity_downweight: false,
        };
        let fast = accumulator_weights(&sliding_window_edges(&group, &config).map_err(|e| e.to_string())?);
        if fast != brute_sliding(&group, &config) {
            return Err(format!("group {i} ({} events) differs from the oracle", group.len()));
        }
    }
    Ok(format!("1000 groups, {total_events} events, all identical"))
}

fn anti_spam() -> Outcome {
    let mut worst = Vec::new();
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let seconds = index::sample(&mut rng, 301, 102).into_vec();
        let mut users: Vec<&str> = vec!["spam"; 100];
        users.extend(["norm", "norm"]);
        users.shuffle(&mut rng);
        let mut events: Vec<ActionEvent> = users
            .iter()
            .zip(&seconds)
            .enumerate()
            .map(|(i, (u, &s))| ActionEvent::new(u, 1_000_000 + s as i64, "#reopen", &format!("t{i:03}")))
            .collect();
        events.sort_by_key(|e| e.timestamp);
        let w = sliding_window_edges(&events, &WindowConfig::default()).map_err(|e| e.to_string())?.get("spam", "norm");
        if w != 2.0 {
            worst.push((seed, w));
        }
    }
    check(
        worst.is_empty(),
        format!("100 interleavings of 100 vs 2 events in one 300 s window; wrong weights: {worst:?}"),
    )
}

fn higher_order_extraction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut tweets = Vec::new();
    for i in 0..1000 {
        let tags: Vec<String> = (0..rng.gen_range(0..5)).map(|j| format!("tag{j}")).collect();
        let urls: Vec<String> = (0..rng.gen_range(0..5)).map(|j| format!("https://site{j}.example/p")).collect();
        let tags: Vec<&str> = tags.iter().map(String::as_str).collect();
        let urls: Vec<&str> = urls.iter().map(String::as_str).collect();
        tweets.push(Tweet::new(format!("{i}"), format!("u{}", i % 37), i as i64, &tags, &urls, &["m"]));
    }
    let events = extract_all(&tweets, &[ActionType::HashtagUrl], RetweetPolicy::Exclude);
    let mut per_tweet: BTreeMap<&str, usize> = BTreeMap::new();
    for e in &events[&ActionType::HashtagUrl] {
        *per_tweet.entry(&e.tweet_id).or_default() += 1;
    }
    let bad = tweets
        .iter()
        .filter(|t| per_tweet.get(t.tweet_id.as_str()).copied().unwrap_or(0) != t.hashtags.len() * t.urls.len())
        .count();
    check(bad == 0, format!("1000 random tweets, {bad} with a wrong tuple count"))
}

fn planted_recovery() -> Outcome {
    let started = Instant::now();
    let mut lines = Vec::new();
    let mut failed = false;
    for seed in 0..10 {
        let scenario = Scenario {
            n_background_users: 1000,
            n_background_tweets: 20_000,
            n_actions: ActionCounts { hashtags: 300, urls: 300, mentions: 300 },
            duration_seconds: 7 * 24 * 3600,
            campaigns: vec![
                CampaignSpec { k_users: 10, repetitions: 20, jitter_seconds: 60, ..Default::default() };
                3
            ],
            overlap: true,
            seed,
            ..Default::default()
        };
        let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
        pipeline::run_simulate(&scenario, tmp.path()).map_err(|e| e.to_string())?;
        let build = BuildConfig {
            inputs: vec![tmp.path().join(pipeline::CORPUS_FILE)],
            output_dir: tmp.path().join("build"),
            // Campaigns reuse background values; one chance co-occurrence
            // is not a strong link.
            min_weight: 2.0,
            ..Default::default()
        };
        pipeline::run_build(&build).map_err(|e| e.to_string())?;
        let outcome = pipeline::run_cluster(&ClusterConfig::new(&build.output_dir)).map_err(|e| e.to_string())?;
        let found = read_members(&build.output_dir.join(pipeline::DENSEST_MEMBERS_FILE))?;
        let planted: Vec<BTreeSet<String>> = (0..3)
            .map(|c| (0..10).map(|j| gen::campaign_user(c, j)).collect())
            .collect();
        let (p, r) = common::precision_recall(&found, &planted);
        failed |= p < 0.9 || r < 0.9;
        lines.push(format!("seed {seed}: P={p:.2} R={r:.2} size={}", outcome.densest_size));
    }
    let elapsed = started.elapsed();
    let detail = format!("{} in {:.1}s", lines.join(", "), elapsed.as_secs_f64());
    check(!failed && elapsed < Duration::from_secs(120), detail)
}

fn read_members(path: &Path) -> Result<BTreeSet<String>, String> {
    let text = fs::read_to_string(path).map_err(|e| e.to_string())?;
    Ok(text.lines().skip(1).map(str::to_string).collect())
}

fn modularity_and_vitality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut worst_q, mut worst_v): (f64, f64) = (0.0, 0.0);
    let mut graphs = 0;
    while graphs < 100 {
        let n = rng.gen_range(2..=50);
        let p = rng.gen_range(0.05..0.5);
        let view = common::random_view(&mut rng, ActionType::Hashtag, n, p, graphs % 2 == 0);
        if view.edge_count() == 0 {
            continue;
        }
        graphs += 1;
        let names: Vec<String> = view.nodes().iter().map(|u| u.to_string()).collect();
        let k = rng.gen_range(1..=8);
        let raw: Vec<usize> = names.iter().map(|_| rng.gen_range(0..k)).collect();
        let clustering = Clustering::relabeled(names.iter().cloned().zip(raw), ClusterParams::default());
        let (order, a) = dense(&view);
        let labels: Vec<usize> = order.iter().map(|u| clustering.cluster_of(u).unwrap()).collect();
        for gamma in [1.0, rng.gen_range(0.1..3.0)] {
            let q = modularity(&view, &clustering, gamma).map_err(|e| e.to_string())?;
            worst_q = worst_q.max((q - modularity_double_loop(&a, &labels, gamma)).abs());
        }
        let net = MultiViewNetwork::from_views(vec![view]).map_err(|e| e.to_string())?;
        let ctx = VitalityContext::new(&net, &clustering, VitalityGraph::Aggregate).map_err(|e| e.to_string())?;
        for i in 0..order.len() {
            worst_v = worst_v.max((ctx.vitality(i) - vitality_from_scratch(&a, &labels, i)).abs());
        }
    }
    check(
        worst_q <= 1e-12 && worst_v <= 1e-12,
        format!("100 graphs, max |dQ| = {worst_q:.2e}, max |dVitality| = {worst_v:.2e}"),
    )
}

fn eigenvector_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 1.0;
    for _ in 0..100 {
        let n = rng.gen_range(2..=30);
        let p = rng.gen_range(0.0..0.4);
        let view = common::random_connected_view(&mut rng, ActionType::Url, n, p);
        let scores = eigenvector_centrality(&view).map_err(|e| e.to_string())?;
        let (names, a) = dense(&view);
        let ours: Vec<f64> = names.iter().map(|u| scores[u.as_str()]).collect();
        worst = worst.min(cosine(&ours, &dense_eigenvector(&a)));
    }
    let triangle = ViewGraph::from_edges(ActionType::Url, [("a", "b", 2.0), ("b", "c", 2.0), ("a", "c", 2.0)]);
    let tri = eigenvector_centrality(&triangle).map_err(|e| e.to_string())?;
    let tri_err = tri.values().map(|v| (v - 1.0 / 3f64.sqrt()).abs()).fold(0.0, f64::max);
    check(
        worst >= 1.0 - 1e-6 && tri_err <= 1e-8,
        format!("100 graphs, min cosine = {worst:.12}; triangle max error {tri_err:.1e}"),
    )
}

fn multiview_reduction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    for seed in 0..50 {
        let n = rng.gen_range(3..40);
        let view = common::random_view(&mut rng, ActionType::Mention, n, 0.15, seed % 2 == 0);
        if view.edge_count() == 0 {
            continue;
        }
        let net = MultiViewNetwork::from_views(vec![view.clone()]).map_err(|e| e.to_string())?;
        let params = ClusterParams { seed, coupling: rng.gen_range(0.0..3.0), ..Default::default() };
        let c = multiview_cluster(&net, params).map_err(|e| e.to_string())?;
        worst = worst.max((c.objective - modularity(&view, &c, 1.0).map_err(|e| e.to_string())?).abs());
    }
    let mut edges = Vec::new();
    for prefix in ["a", "b"] {
        for i in 0..5 {
            for j in i + 1..5 {
                edges.push((format!("{prefix}{i}"), format!("{prefix}{j}"), 1.0));
            }
        }
    }
    let cliques = MultiViewNetwork::from_views(vec![ViewGraph::from_edges(ActionType::Hashtag, edges)])
        .map_err(|e| e.to_string())?;
    let c = multiview_cluster(&cliques, ClusterParams::default()).map_err(|e| e.to_string())?;
    check(
        worst <= 1e-12 && c.objective == 0.5 && c.num_clusters() == 2,
        format!("max |objective - Q| = {worst:.2e}; two 5-cliques Q = {} with {} clusters", c.objective, c.num_clusters()),
    )
}

fn directory_bytes(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| e.to_string())? {
        let entry = entry.map_err(|e| e.to_string())?;
        let name = entry.file_name().to_string_lossy().into_owned();
        out.insert(name, fs::read(entry.path()).map_err(|e| e.to_string())?);
    }
    Ok(out)
}

fn build_determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let scenario = Scenario {
        n_background_users: 500,
        n_background_tweets: 20_000,
        n_actions: ActionCounts { hashtags: 50, urls: 50, mentions: 50 },
        duration_seconds: 2 * 24 * 3600,
        campaigns: vec![CampaignSpec { regional_split: true, ..Default::default() }; 2],
        overlap: true,
        seed: 77,
        ..Default::default()
    };
    pipeline::run_simulate(&scenario, tmp.path()).map_err(|e| e.to_string())?;
    let mut checked = 0;
    for downweight in [false, true] {
        let mut reference: Option<BTreeMap<String, Vec<u8>>> = None;
        for (run, threads) in [None, Some(1), Some(4), Some(8), Some(8)].into_iter().enumerate() {
            let out = tmp.path().join(format!("build-{downweight}-{run}"));
            let config = BuildConfig {
                inputs: vec![tmp.path().join(pipeline::CORPUS_FILE)],
                views: ActionType::ALL.to_vec(),
                window: WindowConfig { popularity_downweight: downweight, ..Default::default() },
                threads,
                output_dir: out.clone(),
                ..Default::default()
            };
            pipeline::run_build(&config).map_err(|e| e.to_string())?;
            let files = directory_bytes(&out)?;
            match &reference {
                None => reference = Some(files),
                Some(r) if *r == files => checked += 1,
                Some(_) => return Err(format!("outputs differ (downweight={downweight}, threads={threads:?})")),
            }
        }
    }
    Ok(format!("{checked} reruns over threads default/1/4/8 with 6 views, byte-identical"))
}

fn window_throughput() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let keys: Vec<Arc<str>> = (0..10_000).map(|k| Arc::from(format!("key{k}"))).collect();
    let users: Vec<Arc<str>> = (0..100_000).map(|u| Arc::from(format!("user{u}"))).collect();
    let events: Vec<ActionEvent> = (0..1_000_000u32)
        .map(|i| {
            // Every key appears; popularity is skewed towards low key ids.
            let key = if (i as usize) < keys.len() {
                i as usize
            } else {
                (keys.len() as f64 * rng.gen::<f64>().powi(3)) as usize
            };
            ActionEvent {
                user_id: users[rng.gen_range(0..users.len())].clone(),
                timestamp: rng.gen_range(0..7 * 86_400),
                action_key: keys[key].clone(),
                tweet_id: Arc::from(format!("t{i}")),
            }
        })
        .collect();
    let started = Instant::now();
    let acc = build_view(&events, &WindowConfig::default(), WindowMethod::Sliding).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    check(
        elapsed < Duration::from_secs(60),
        format!(
            "{} events over {} keys -> {} edges in {:.2}s",
            events.len(),
            keys.len(),
            acc.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn main() -> ExitCode {
    let criteria: Vec<(&str, fn() -> Outcome)> = vec![
        ("1 fixed-window loss near 50%", fixed_window_loss),
        ("2 sliding-window oracle equivalence", sliding_oracle_equivalence),
        ("3 anti-spam weighting", anti_spam),
        ("4 higher-order extraction", higher_order_extraction),
        ("5 planted-campaign recovery", planted_recovery),
        ("6 modularity and vitality oracles", modularity_and_vitality),
        ("7 eigenvector oracle", eigenvector_oracle),
        ("8 multi-view reduction", multiview_reduction),
        ("9 build determinism across runs and threads", build_determinism),
        ("10 window-stage throughput", window_throughput),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failures = 0;
    for (name, run) in criteria {
        if !only.is_empty() && !only.iter().any(|o| name.contains(o.as_str())) {
            continue;
        }
        let started = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(msg)
        });
        let secs = started.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS [{name}] {detail} ({secs:.1}s)"),
            Err(detail) => {
                failures += 1;
                println!("FAIL [{name}] {detail} ({secs:.1}s)");
            }
        }
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
