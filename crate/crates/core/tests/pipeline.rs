use std::path::Path;
use std::process::Command as Process;

use taste::pipeline::{self, parse_config, replay, Command, Manifest, RunConfig};

fn tiny(out: &Path) -> RunConfig {
    let text = serde_json::json!({
        "out_dir": out,
        "seeds": [0, 1],
        "synth": {
            "n_users": 60, "n_items": 120, "n_clusters": 4, "liked_clusters": 2,
            "genre_group_size": 2, "events_per_user": 40.0, "audio_dim": 8, "text_dim": 4
        },
        "features": {"modal": {"kind": "muq_token", "k": 4}},
        "model": {"hyper": {"embed_dim": 4}},
        "train": {"max_epochs": 3, "patience": 2, "learning_rate": 0.01, "batch_size": 256},
        "tokenize": {"k": 4},
        "coldstart": {"models": ["fm"], "variant": {"kind": "muq_token", "k": 4}},
        "sweep": {"k_list": [2, 4]},
        "diversity": {"variant": {"kind": "muq_token", "k": 4}, "users": 20}
    });
    parse_config(&text.to_string()).unwrap()
}

#[test]
fn every_command_runs_and_replays_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    for command in Command::ALL {
        let m = pipeline::run(command, &cfg).unwrap_or_else(|e| panic!("{}: {e}", command.name()));
        assert!(!m.outputs.is_empty(), "{} wrote nothing", command.name());
        for rel in m.outputs.keys() {
            assert!(dir.path().join(rel).exists(), "{rel} missing");
        }
    }
    for command in [Command::Tokenize, Command::Train, Command::Eval, Command::Sweep] {
        let outcome = replay(&Manifest::path_for(dir.path(), command)).unwrap();
        assert!(outcome.identical(), "{}: {outcome:?}", command.name());
    }
}


fn taste_bin(args: &[&str], threads: &str) -> i32 {
    Process::new(env!("CARGO_BIN_EXE_taste"))
        .args(args)
        .env("TASTE_THREADS", threads)
        .env("RUST_LOG", "error")
        .status()
        .unwrap()
        .code()
        .unwrap()
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, body: String| {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p.display().to_string()
    };
    let out = dir.path().join("run").display().to_string();
    let bad = write("bad.json", r#"{"modle": {}}"#.into());
    assert_eq!(taste_bin(&["train", "--config", &bad], "1"), pipeline::EXIT_CONFIG);
    assert_eq!(taste_bin(&["frobnicate"], "1"), pipeline::EXIT_CONFIG);
    let empty = write("empty.json", "{}".into());
    assert_eq!(taste_bin(&["ingest", "--config", &empty, "--out", &out], "1"), pipeline::EXIT_DATA);
    assert_eq!(taste_bin(&["ingest", "--config", &empty, "--out", &out], "zero"), pipeline::EXIT_CONFIG);

    let cfg = tiny(&dir.path().join("run"));
    let mut value = serde_json::to_value(&cfg).unwrap();
    value["train"]["learning_rate"] = serde_json::json!(1e300);
    value["model"]["hyper"]["init_std"] = serde_json::json!(1e150);
    value["features"]["modal"] = serde_json::json!({"kind": "none"});
    let blowup = write("blowup.json", value.to_string());
    assert_eq!(taste_bin(&["synth", "--config", &blowup], "1"), pipeline::EXIT_OK);
    assert_eq!(taste_bin(&["train", "--config", &blowup], "1"), pipeline::EXIT_NUMERICAL);
}
