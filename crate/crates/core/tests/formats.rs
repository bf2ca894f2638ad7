mod common;

use taste::dataio::{Dataset, LayeredEmbeddings};
use taste::synth::{generate, SynthConfig};

fn small_synth() -> SynthConfig {
    SynthConfig {
        n_users: 40,
        n_items: 80,
        n_clusters: 4,
        liked_clusters: 2,
        genre_group_size: 2,
        events_per_user: 30.0,
        ..SynthConfig::default()
    }
}

#[test]
fn golden_files_match() {
    let bad = common::golden::mismatches();
    assert!(bad.is_empty(), "golden mismatches (rerun with UPDATE_GOLDEN=1 after review): {bad:?}");
}

#[test]
fn embeddings_round_trip_through_disk() {
    let data = generate(&small_synth()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("emb.bin");
    data.embeddings.write(&path).unwrap();
    let back = LayeredEmbeddings::load(&path).unwrap();
    assert_eq!(back, data.embeddings);
}

#[test]
fn dataset_round_trips_through_disk() {
    let data = generate(&small_synth()).unwrap();
    let ds = Dataset::from_events(&data.events, 2, 5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dataset.bin");
    ds.write(&path).unwrap();
    assert_eq!(Dataset::load(&path).unwrap(), ds);
}
