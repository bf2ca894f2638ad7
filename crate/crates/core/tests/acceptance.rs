//! Acceptance suite: one PASS/FAIL line per criterion. Pass criterion numbers
//! as arguments to run a subset, e.g. `cargo test --release --test acceptance -- 1 4 9`.

mod common;

use std::collections::HashSet;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use taste::dataio::{Dataset, LayeredEmbeddings};
use taste::metrics::{auc, logloss, topk_metrics, LOGLOSS_CLIP};
use taste::muqtoken::{adjusted_rand_index, ari_matrix, fit_kmeans, tokenize, KMeansOptions, Points};
use taste::pipeline::{
    self, cmd_coldstart, cmd_diversity, cmd_sweep, parse_config, replay, ColdstartReport, Command, Manifest, RunConfig,
};
use taste::synth::{generate, SynthConfig};

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn config(value: serde_json::Value) -> RunConfig {
    parse_config(&value.to_string()).expect("acceptance config parses")
}

fn study_config(out: &Path, extra: serde_json::Value) -> RunConfig {
    let mut v = json!({
        "out_dir": out,
        "seeds": SEEDS,
        "synth": {},
        "train": {"learning_rate": 0.01},
        "split": {"kind": "cold"}
    });
    for (k, val) in extra.as_object().expect("object") {
        v[k] = val.clone();
    }
    config(v)
}

// ---------------------------------------------------------------- oracles

fn pairwise_auc(labels: &[bool], scores: &[f64]) -> f64 {
    let (mut num, mut pairs) = (0.0, 0.0);
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                num += 1.0;
            } else if scores[i] == scores[j] {
                num += 0.5;
            }
        }
    }
    num / pairs
}

fn direct_logloss(labels: &[bool], probs: &[f64]) -> f64 {
    let n = labels.len() as f64;
    -labels
        .iter()
        .zip(probs)
        .map(|(&y, &p)| {
            let p = p.clamp(LOGLOSS_CLIP, 1.0 - LOGLOSS_CLIP);
            if y {
                p.ln()
            } else {
                (1.0 - p).ln()
            }
        })
        .sum::<f64>()
        / n
}

/// `(recall, precision, ndcg, mrr over the full list, mrr truncated at K)`.
fn direct_ranking(ranked: &[u32], relevant: &HashSet<u32>, k: usize) -> [f64; 5] {
    let top = &ranked[..k.min(ranked.len())];
    let hits = top.iter().filter(|i| relevant.contains(i)).count() as f64;
    let dcg: f64 = top
        .iter()
        .enumerate()
        .filter(|(_, i)| relevant.contains(i))
        .map(|(r, _)| 1.0 / (r as f64 + 2.0).log2())
        .sum();
    let idcg: f64 = (0..relevant.len().min(k)).map(|r| 1.0 / (r as f64 + 2.0).log2()).sum();
    let first = ranked.iter().position(|i| relevant.contains(i));
    let rr = first.map_or(0.0, |r| 1.0 / (r as f64 + 1.0));
    let rr_k = first.filter(|&r| r < k).map_or(0.0, |r| 1.0 / (r as f64 + 1.0));
    [hits / relevant.len() as f64, hits / k as f64, dcg / idcg, rr, rr_k]
}

fn criterion_metric_oracles() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_auc: f64 = 0.0;
    let mut done = 0;
    while done < 1000 {
        let n = rng.random_range(2..80);
        let levels = rng.random_range(1..12);
        let labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
            continue;
        }
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 * 0.25).collect();
        worst_auc = worst_auc.max((auc(&labels, &scores).unwrap() - pairwise_auc(&labels, &scores)).abs());
        done += 1;
    }
    let mut worst_other: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(1..30);
        let labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        let probs: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..=1.0)).collect();
        worst_other = worst_other.max((logloss(&labels, &probs).unwrap() - direct_logloss(&labels, &probs)).abs());

        let users = rng.random_range(1..6);
        let k = rng.random_range(1..12);
        let mut ranked = Vec::new();
        let mut relevant = Vec::new();
        for _ in 0..users {
            let n_items = rng.random_range(1..25u32);
            let mut list: Vec<u32> = (0..n_items).collect();
            list.shuffle(&mut rng);
            let rel: HashSet<u32> = (0..rng.random_range(1..6)).map(|_| rng.random_range(0..n_items + 3)).collect();
            ranked.push(list);
            relevant.push(rel);
        }
        let got = topk_metrics(&ranked, &relevant, k).unwrap();
        let mut mean = [0.0; 5];
        for (list, rel) in ranked.iter().zip(&relevant) {
            for (m, v) in mean.iter_mut().zip(direct_ranking(list, rel, k)) {
                *m += v / users as f64;
            }
        }
        let got = [got.recall, got.precision, got.ndcg, got.mrr, got.mrr_at_k];
        for (g, e) in got.iter().zip(mean) {
            worst_other = worst_other.max((g - e).abs());
        }
    }
    Verdict::new(
        worst_auc <= 1e-12 && worst_other <= 1e-10,
        format!("auc max |Δ| {worst_auc:.1e} over 1000; logloss/ranking max |Δ| {worst_other:.1e} over 200"),
    )
}

fn criterion_gradients() -> Verdict {
    let mut checks = common::grad::ctr_checks();
    checks.extend(common::grad::recall_checks());
    let (label, worst) = checks
        .iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .cloned()
        .expect("at least one check");
    let failing = checks.iter().filter(|c| c.1 >= common::grad::MAX_REL_ERROR).count();
    Verdict::new(
        failing == 0,
        format!("{} combinations, worst rel error {worst:.2e} ({label}), {failing} failing", checks.len()),
    )
}

/// Lowest two-cluster inertia over every bipartition.
fn enumerated_optimum(rows: &[Vec<f64>]) -> f64 {
    let n = rows.len();
    let sse = |members: &[&Vec<f64>]| -> f64 {
        let d = members[0].len();
        let mut mean = vec![0.0; d];
        for m in members {
            mean.iter_mut().zip(m.iter()).for_each(|(a, x)| *a += x / members.len() as f64);
        }
        members.iter().map(|m| m.iter().zip(&mean).map(|(x, c)| (x - c).powi(2)).sum::<f64>()).sum()
    };
    let mut best = f64::INFINITY;
    // point 0 stays in the first group; every other mask is one bipartition
    for mask in 0u32..(1 << (n - 1)) {
        let (mut a, mut b) = (vec![&rows[0]], Vec::new());
        for (i, row) in rows.iter().enumerate().skip(1) {
            if mask >> (i - 1) & 1 == 1 {
                b.push(row);
            } else {
                a.push(row);
            }
        }
        if b.is_empty() {
            continue;
        }
        best = best.min(sse(&a) + sse(&b));
    }
    best
}

fn criterion_kmeans() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut non_monotone = 0;
    for run in 0..100 {
        let n = rng.random_range(10..200);
        let d = rng.random_range(1..5);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        let k = rng.random_range(1..9).min(n);
        let fit = fit_kmeans(&Points::from_rows(&rows).unwrap(), k, run, &KMeansOptions::default()).unwrap();
        if fit.history.windows(2).any(|w| w[1] > w[0]) {
            non_monotone += 1;
        }
    }
    let restarts = KMeansOptions {
        n_init: 10,
        ..KMeansOptions::default()
    };
    let mut optimal = 0;
    for trial in 0..100 {
        let n = rng.random_range(2..=8);
        let d = rng.random_range(1..4);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let fit = fit_kmeans(&Points::from_rows(&rows).unwrap(), 2, trial, &restarts).unwrap();
        let opt = enumerated_optimum(&rows);
        if (fit.inertia - opt).abs() <= 1e-9 * opt.max(1.0) {
            optimal += 1;
        }
    }
    Verdict::new(
        non_monotone == 0 && optimal >= 95,
        format!("{non_monotone}/100 runs with an inertia increase; optimum reached in {optimal}/100 trials"),
    )
}

fn pair_count_ari(a: &[u32], b: &[u32]) -> f64 {
    let n = a.len();
    let (mut both, mut in_a, mut in_b) = (0u64, 0u64, 0u64);
    for i in 0..n {
        for j in i + 1..n {
            let sa = a[i] == a[j];
            let sb = b[i] == b[j];
            in_a += sa as u64;
            in_b += sb as u64;
            both += (sa && sb) as u64;
        }
    }
    let total = (n * (n - 1) / 2) as f64;
    let expected = in_a as f64 * in_b as f64 / total;
    let max = 0.5 * (in_a + in_b) as f64;
    if max == expected {
        return 1.0;
    }
    (both as f64 - expected) / (max - expected)
}

fn criterion_ari() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    let mut self_fail = 0;
    for _ in 0..2000 {
        let n = rng.random_range(2..=8);
        let ka = rng.random_range(1..5);
        let kb = rng.random_range(1..5);
        let a: Vec<u32> = (0..n).map(|_| rng.random_range(0..ka)).collect();
        let b: Vec<u32> = (0..n).map(|_| rng.random_range(0..kb)).collect();
        worst = worst.max((adjusted_rand_index(&a, &b).unwrap() - pair_count_ari(&a, &b)).abs());
        if adjusted_rand_index(&a, &a).unwrap() != 1.0 {
            self_fail += 1;
        }
    }
    let mut total = 0.0;
    for _ in 0..100 {
        let a: Vec<u32> = (0..1000).map(|_| rng.random_range(0..10)).collect();
        let b: Vec<u32> = (0..1000).map(|_| rng.random_range(0..10)).collect();
        total += adjusted_rand_index(&a, &b).unwrap();
    }
    let mean_random = total / 100.0;
    Verdict::new(
        worst <= 1e-12 && self_fail == 0 && mean_random.abs() <= 0.05,
        format!("pair-count max |Δ| {worst:.1e}; ARI(x,x)≠1 in {self_fail}; random mean {mean_random:+.4}"),
    )
}

// ---------------------------------------------------------------- studies

fn criterion_token_effect(report: &ColdstartReport, elapsed: Duration) -> Verdict {
    let mut pass = elapsed < Duration::from_secs(300);
    let mut parts = Vec::new();
    for name in ["fm", "dcnv2"] {
        let Some(m) = report.model(name) else {
            return Verdict::new(false, format!("{name} missing from report"));
        };
        let (test, cold) = (m.split("test").expect("test"), m.split("cold_test").expect("cold_test"));
        let ok = test.variant_auc >= test.baseline_auc + 0.03
            && cold.variant_auc >= 0.65
            && (0.48..=0.52).contains(&cold.baseline_auc)
            && test.auc_test.p_value < 0.05;
        pass &= ok;
        parts.push(format!(
            "{name}: test {:.4} vs {:.4} (p={:.1e}), cold {:.4} vs id {:.4}",
            test.variant_auc, test.baseline_auc, test.auc_test.p_value, cold.variant_auc, cold.baseline_auc
        ));
    }
    parts.push(format!("{:.0}s", elapsed.as_secs_f64()));
    Verdict::new(pass, parts.join("; "))
}

fn criterion_token_vs_dense(token_and_id: &ColdstartReport, out: &Path) -> Verdict {
    let cfg = study_config(
        out,
        json!({"coldstart": {"models": ["fm"], "baseline": {"kind": "muq_dense", "variant": "mean"}}}),
    );
    let dense = match cmd_coldstart(&cfg) {
        Ok((r, _)) => r,
        Err(e) => return Verdict::new(false, format!("dense run failed: {e}")),
    };
    let fm = token_and_id.model("fm").expect("fm");
    let fm_dense = dense.model("fm").expect("fm");
    let mut pass = true;
    let mut rows = Vec::new();
    for (a, b) in fm.runs.iter().zip(&fm_dense.runs) {
        let (id, tok, den) = (
            a.baseline_val_auc.unwrap_or(f64::NAN),
            a.variant_val_auc.unwrap_or(f64::NAN),
            b.baseline_val_auc.unwrap_or(f64::NAN),
        );
        pass &= tok >= den - 0.005 && tok >= id + 0.03;
        rows.push(format!("s{} tok {tok:.4} dense {den:.4} id {id:.4}", a.seed));
    }
    Verdict::new(pass, rows.join("; "))
}

fn criterion_sweep(out: &Path) -> Verdict {
    let cfg = study_config(out, json!({"sweep": {"k_list": [4, 8, 16, 32]}}));
    let report = match cmd_sweep(&cfg) {
        Ok((r, _)) => r,
        Err(e) => return Verdict::new(false, format!("sweep failed: {e}")),
    };
    let hits = report.argmax.values().filter(|&&k| k == 16).count();
    let argmax: Vec<String> = report.argmax.iter().map(|(s, k)| format!("s{s}→{k}")).collect();
    let means: Vec<String> = report.mean_val_auc.iter().map(|(k, v)| format!("k{k} {v:.4}")).collect();
    Verdict::new(
        hits >= 4,
        format!("argmax at 16 in {hits}/5 ({}); mean val {}", argmax.join(" "), means.join(", ")),
    )
}

fn criterion_diversity(out: &Path) -> Verdict {
    let synth = serde_json::to_value(SynthConfig::long_tail()).unwrap();
    let cfg = config(json!({
        "out_dir": out,
        "seeds": SEEDS,
        "synth": synth,
        "model": {"kind": "dcnv2"},
        "train": {"learning_rate": 0.01}
    }));
    let report = match cmd_diversity(&cfg) {
        Ok((r, _)) => r,
        Err(e) => return Verdict::new(false, format!("diversity failed: {e}")),
    };
    let ok = report.runs.len() == SEEDS.len() && report.runs.iter().all(|r| r.variant_tail_mass >= r.baseline_tail_mass);
    let rows: Vec<String> = report
        .runs
        .iter()
        .map(|r| format!("s{} {:.3} vs {:.3}", r.seed, r.variant_tail_mass, r.baseline_tail_mass))
        .collect();
    Verdict::new(ok, format!("bottom-quartile mass token vs id: {}", rows.join(", ")))
}

fn criterion_ari_pattern() -> Verdict {
    let data = generate(&SynthConfig::default()).unwrap();
    let (_, tokens) = tokenize(&data.embeddings, 16, 0).unwrap();
    let m = ari_matrix(&tokens).unwrap();
    let (near, far) = (m.mean_at_gap(1).unwrap(), m.mean_at_gap(3).unwrap());
    Verdict::new(near > far, format!("mean ARI gap 1 {near:.4} > gap 3 {far:.4}"))
}

fn criterion_determinism(out: &Path) -> Verdict {
    let cfg = config(json!({
        "out_dir": out,
        "synth": {},
        "features": {"modal": {"kind": "muq_token", "k": 16}},
        "train": {"learning_rate": 0.01, "max_epochs": 4, "patience": 2}
    }));
    for c in [Command::Synth, Command::Ingest, Command::Tokenize, Command::Train, Command::Eval] {
        if let Err(e) = pipeline::run(c, &cfg) {
            return Verdict::new(false, format!("{} failed: {e}", c.name()));
        }
    }
    let before = std::fs::read(out.join("metrics.json")).unwrap();
    let outcome = replay(&Manifest::path_for(out, Command::Eval)).unwrap();
    let after = std::fs::read(out.join("metrics.json")).unwrap();
    let replay_ok = outcome.identical() && before == after;

    let data = generate(&SynthConfig::default()).unwrap();
    let emb_path = out.join("roundtrip.temb");
    data.embeddings.write(&emb_path).unwrap();
    let emb_ok = LayeredEmbeddings::load(&emb_path).unwrap() == data.embeddings;
    let ds = Dataset::from_events(&data.events, 2, 5).unwrap();
    let ds_path = out.join("roundtrip.bin");
    ds.write(&ds_path).unwrap();
    let ds_ok = Dataset::load(&ds_path).unwrap() == ds;
    let golden = common::golden::mismatches();
    Verdict::new(
        replay_ok && emb_ok && ds_ok && golden.is_empty(),
        format!(
            "replay identical {replay_ok}; embeddings {emb_ok}; dataset {ds_ok}; golden mismatches {:?}",
            golden
        ),
    )
}

fn main() -> ExitCode {
    let wanted: HashSet<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let want = |n: u32| wanted.is_empty() || wanted.contains(&n);
    let root = tempfile::tempdir().expect("temp dir");
    let mut failed = 0;
    let mut report = |n: u32, name: &str, start: Instant, v: Verdict| {
        let tag = if v.pass { "PASS" } else { "FAIL" };
        println!("[{tag}] {n:>2} {name}: {} ({:.1}s)", v.detail, start.elapsed().as_secs_f64());
        if !v.pass {
            failed += 1;
        }
    };

    let simple: [(u32, &str, fn() -> Verdict); 4] = [
        (1, "metric oracles", criterion_metric_oracles),
        (2, "gradient integrity", criterion_gradients),
        (3, "k-means correctness", criterion_kmeans),
        (4, "ARI correctness", criterion_ari),
    ];
    for (n, name, f) in simple {
        if want(n) {
            let t = Instant::now();
            report(n, name, t, f());
        }
    }

    let mut coldstart: Option<ColdstartReport> = None;
    if want(5) || want(6) {
        let t = Instant::now();
        match cmd_coldstart(&study_config(&root.path().join("coldstart"), json!({}))) {
            Ok((r, _)) => {
                if want(5) {
                    report(5, "token effect", t, criterion_token_effect(&r, t.elapsed()));
                }
                coldstart = Some(r);
            }
            Err(e) => report(5, "token effect", t, Verdict::new(false, format!("coldstart failed: {e}"))),
        }
    }
    if want(6) {
        let t = Instant::now();
        let v = match &coldstart {
            Some(r) => criterion_token_vs_dense(r, &root.path().join("dense")),
            None => Verdict::new(false, "no coldstart report"),
        };
        report(6, "token vs dense fusion", t, v);
    }
    let studies: [(u32, &str, fn(&Path) -> Verdict, &str); 2] = [
        (7, "cluster sweep", criterion_sweep, "sweep"),
        (8, "diversity", criterion_diversity, "diversity"),
    ];
    for (n, name, f, dir) in studies {
        if want(n) {
            let t = Instant::now();
            report(n, name, t, f(&root.path().join(dir)));
        }
    }
    if want(9) {
        let t = Instant::now();
        report(9, "ARI layer pattern", t, criterion_ari_pattern());
    }
    if want(10) {
        let t = Instant::now();
        report(10, "determinism and formats", t, criterion_determinism(&root.path().join("replay")));
    }

    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
