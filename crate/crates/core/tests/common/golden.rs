//! Small hand-built instances of every serialized report, rendered to the
//! exact text written on disk.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use taste::features::{FeatureSetting, ModalSpec};
use taste::metrics::{MetricReport, PopularityHistogram, TopK};
use taste::models::ModelFamily;
use taste::muqtoken::{AriMatrix, Codebook, TokenCodebooks, TokenTable};
use taste::pipeline::{
    coldstart_csv, paired_t_test, ColdstartReport, Command, DiversityReport, DiversityRun, DriftReport, EvalReport,
    Manifest, ModelComparison, PeriodProfile, Projection, RunConfig, SeedComparison, SideDrift, SplitKind, SplitSummary,
    SweepReport, SweepRow,
};
use taste::train::{EpochRecord, TrainReport};

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn ctr_report(auc: f64, logloss: f64, count: usize) -> MetricReport {
    MetricReport {
        auc: Some(auc),
        logloss: Some(logloss),
        count,
        topk: BTreeMap::new(),
    }
}

fn eval_ctr() -> EvalReport {
    let mut splits = BTreeMap::new();
    splits.insert("test".into(), ctr_report(0.75, 0.5, 400));
    splits.insert("validation".into(), ctr_report(0.625, 0.5625, 200));
    EvalReport {
        model: "fm".into(),
        family: ModelFamily::Ctr,
        setting: FeatureSetting::IdOnly,
        modal: ModalSpec::MuqToken { k: 16 },
        split: SplitKind::Random,
        seed: 3,
        splits,
    }
}

fn eval_recall() -> EvalReport {
    let mut topk = BTreeMap::new();
    topk.insert(
        10,
        TopK {
            recall: 0.25,
            precision: 0.125,
            ndcg: 0.5,
            mrr: 0.375,
            mrr_at_k: 0.25,
            users: 8,
        },
    );
    let mut splits = BTreeMap::new();
    splits.insert(
        "test".into(),
        MetricReport {
            auc: None,
            logloss: None,
            count: 8,
            topk,
        },
    );
    EvalReport {
        model: "bpr".into(),
        family: ModelFamily::Recall,
        setting: FeatureSetting::IdOnly,
        modal: ModalSpec::None,
        split: SplitKind::Random,
        seed: 0,
        splits,
    }
}

fn token_table() -> TokenTable {
    TokenTable {
        items: vec!["t0".into(), "t1".into(), "t2".into()],
        k: vec![2, 3],
        tokens: vec![vec![0, 2], vec![1, 0], vec![1, 1]],
    }
}

fn codebooks() -> TokenCodebooks {
    TokenCodebooks {
        codebooks: vec![Codebook {
            layer: 0,
            k: 2,
            dim: 2,
            centroids: vec![vec![0.0, 0.5], vec![2.0, -1.0]],
            inertia: 1.25,
            seed: 7,
            standardize: None,
        }],
    }
}

fn train_report() -> TrainReport {
    TrainReport {
        model: "deepfm".into(),
        metric: "auc".into(),
        history: vec![
            EpochRecord {
                epoch: 1,
                train_loss: 0.6875,
                val_metric: Some(0.5625),
                seconds: 1.5,
            },
            EpochRecord {
                epoch: 2,
                train_loss: 0.625,
                val_metric: Some(0.625),
                seconds: 1.5,
            },
        ],
        best_epoch: 2,
        best_metric: Some(0.625),
        stopped_early: false,
        steps: 12,
        checkpoint: Some("model.ckpt".into()),
    }
}

fn coldstart() -> ColdstartReport {
    let runs: Vec<SeedComparison> = [(0u64, 0.5, 0.625), (1, 0.5, 0.75)]
        .into_iter()
        .map(|(seed, b, v)| {
            let mut baseline = BTreeMap::new();
            baseline.insert("test".to_string(), ctr_report(b, 0.5, 10));
            let mut variant = BTreeMap::new();
            variant.insert("test".to_string(), ctr_report(v, 0.5, 10));
            SeedComparison {
                seed,
                baseline,
                variant,
                baseline_val_auc: Some(b),
                variant_val_auc: Some(v),
            }
        })
        .collect();
    let summary = vec![SplitSummary {
        split: "test".into(),
        baseline_auc: 0.5,
        variant_auc: 0.6875,
        baseline_logloss: 0.5,
        variant_logloss: 0.5,
        auc_test: paired_t_test(&[0.5, 0.5], &[0.625, 0.75]).unwrap(),
        logloss_test: paired_t_test(&[0.5, 0.5], &[0.5, 0.5]).unwrap(),
    }];
    ColdstartReport {
        baseline: ModalSpec::None,
        variant: ModalSpec::MuqToken { k: 16 },
        seeds: vec![0, 1],
        models: vec![ModelComparison {
            model: "fm".into(),
            runs,
            summary,
        }],
    }
}

fn sweep() -> SweepReport {
    let rows = vec![
        SweepRow {
            seed: 0,
            k: 4,
            val_auc: Some(0.625),
            test_auc: Some(0.5),
        },
        SweepRow {
            seed: 0,
            k: 16,
            val_auc: Some(0.75),
            test_auc: Some(0.6875),
        },
    ];
    SweepReport {
        model: "fm".into(),
        rows,
        argmax: BTreeMap::from([(0, 16)]),
        mean_val_auc: BTreeMap::from([(4, 0.625), (16, 0.75)]),
    }
}

fn histogram(freq: [f64; 2]) -> PopularityHistogram {
    PopularityHistogram {
        edges: vec![0.0, 4.0, 9.0],
        frequencies: freq.to_vec(),
        recommendations: 8,
    }
}

fn diversity() -> DiversityReport {
    DiversityReport {
        model: "dcnv2".into(),
        baseline: ModalSpec::None,
        variant: ModalSpec::MuqToken { k: 16 },
        top_k: 10,
        runs: vec![DiversityRun {
            seed: 0,
            baseline: histogram([0.25, 0.75]),
            variant: histogram([0.5, 0.5]),
            tail_threshold: 4.0,
            baseline_tail_mass: 0.25,
            variant_tail_mass: 0.5,
        }],
    }
}

fn drift() -> DriftReport {
    DriftReport {
        sides: vec![SideDrift {
            side: "user".into(),
            fields: vec!["age".into()],
            periods: vec![
                PeriodProfile {
                    period: "2023-01".into(),
                    events: 3,
                    values: vec![20.0],
                },
                PeriodProfile {
                    period: "2023-02".into(),
                    events: 5,
                    values: vec![30.0],
                },
            ],
            normalized: vec![vec![0.0], vec![1.0]],
            projection: Projection {
                coords: vec![[-0.5, 0.0], [0.5, 0.0]],
                variance_share: [1.0, 0.0],
            },
        }],
        skipped_months: vec!["2023-03".into()],
    }
}

fn manifest() -> Manifest {
    let mut m = Manifest::new(Command::Eval, &RunConfig::default());
    m.inputs.insert("taste-run/model.ckpt".into(), "0".repeat(64));
    m.outputs.insert("metrics.json".into(), "f".repeat(64));
    m
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).unwrap() + "\n"
}

/// `(file name, rendered text)` for every golden file.
pub fn rendered() -> Vec<(&'static str, String)> {
    let ari = AriMatrix {
        values: vec![vec![1.0, 0.5], vec![0.5, 1.0]],
    };
    let div = diversity();
    let drift = drift();
    vec![
        ("metrics_ctr.csv", eval_ctr().to_csv()),
        ("metrics_ctr.json", json(&eval_ctr())),
        ("metrics_recall.csv", eval_recall().to_csv()),
        ("metrics_recall.json", json(&eval_recall())),
        ("tokens.csv", token_table().to_csv()),
        ("codebooks.json", json(&codebooks())),
        ("ari.csv", ari.to_csv()),
        ("train_report.json", json(&train_report())),
        ("coldstart.csv", coldstart_csv(&coldstart())),
        ("coldstart.json", json(&coldstart())),
        ("sweep.csv", sweep().to_csv()),
        ("sweep.json", json(&sweep())),
        ("popularity.csv", div.runs[0].variant.to_csv()),
        ("diversity.csv", div.to_csv()),
        ("diversity.json", json(&div)),
        ("drift_periods.csv", drift.periods_csv()),
        ("drift_projection.csv", drift.projection_csv()),
        ("drift.json", json(&drift)),
        ("manifest.json", json(&manifest())),
    ]
}

/// Names whose rendering differs from the checked-in file. With
/// `UPDATE_GOLDEN` set the files are rewritten instead.
pub fn mismatches() -> Vec<String> {
    let dir = golden_dir();
    let update = std::env::var_os("UPDATE_GOLDEN").is_some();
    let mut bad = Vec::new();
    for (name, text) in rendered() {
        let path = dir.join(name);
        if update {
            std::fs::write(&path, &text).unwrap();
            continue;
        }
        match std::fs::read_to_string(&path) {
            Ok(expected) if expected == text => {}
            _ => bad.push(name.to_string()),
        }
    }
    bad
}
