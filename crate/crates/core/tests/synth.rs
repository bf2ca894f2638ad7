use taste::dataio::{load_layered_embeddings, EventLog, parse_interactions, parse_metadata, EntityKind};
use taste::muqtoken::adjusted_rand_index;
use taste::synth::{cluster_positive_rates, generate, GroundTruth, SynthConfig};

#[test]
fn written_files_parse_back_losslessly() {
    let cfg = SynthConfig {
        n_users: 60,
        n_items: 150,
        n_clusters: 6,
        liked_clusters: 2,
        genre_group_size: 3,
        events_per_user: 40.0,
        ..SynthConfig::default()
    };
    let data = generate(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let paths = data.write(dir.path()).unwrap();
    // the parser interns keys in first-appearance order, so compare by key
    let keyed = |log: &EventLog| -> Vec<(String, String, i64)> {
        log.events
            .iter()
            .map(|e| (log.users.key(e.user).to_string(), log.items.key(e.item).to_string(), e.timestamp))
            .collect()
    };
    assert_eq!(keyed(&parse_interactions(&paths.events).unwrap()), keyed(&data.events));
    assert_eq!(parse_metadata(&paths.users, EntityKind::User).unwrap(), data.user_meta);
    assert_eq!(parse_metadata(&paths.items, EntityKind::Item).unwrap(), data.item_meta);
    assert_eq!(load_layered_embeddings(&paths.embeddings).unwrap(), data.embeddings);
    assert_eq!(GroundTruth::load(&paths.ground_truth).unwrap(), data.truth);
}

fn assert_rates_within_three_se(cfg: &SynthConfig) {
    let data = generate(cfg).unwrap();
    for (cluster, (rate, expected, n)) in cluster_positive_rates(&data) {
        // the Bernoulli variance at the mean bounds the variance of a
        // heterogeneous sum from above
        let se = (expected * (1.0 - expected) / n as f64).sqrt();
        assert!(
            (rate - expected).abs() <= 3.0 * se,
            "cluster {cluster}: rate {rate:.4} vs {expected:.4} (n={n}, se={se:.4})"
        );
    }
}

#[test]
fn cluster_positive_rates_match_planted_affinity() {
    assert_rates_within_three_se(&SynthConfig::default());
}

#[test]
fn long_tail_rates_match_planted_probabilities() {
    assert_rates_within_three_se(&SynthConfig::long_tail());
}

#[test]
fn adjacent_layers_agree_more_than_distant_ones() {
    let data = generate(&SynthConfig::default()).unwrap();
    let labels: Vec<Vec<u32>> = (0..4).map(|l| data.truth.layer_labels(l)).collect();
    let near = adjusted_rand_index(&labels[0], &labels[1]).unwrap();
    let far = adjusted_rand_index(&labels[0], &labels[3]).unwrap();
    assert!(near > far, "{near} vs {far}");
}

#[test]
fn long_tail_positives_lean_towards_popular_items() {
    let data = generate(&SynthConfig::long_tail()).unwrap();
    let (_, items) = data.truth.index();
    let n = data.truth.items.len();
    let (mut head, mut tail) = ((0.0, 0usize), (0.0, 0usize));
    for p in &data.truth.pairs {
        let rank = data.truth.popularity_rank[items[p.item.as_str()]];
        let slot = if rank < n / 4 { &mut head } else if rank >= 3 * n / 4 { &mut tail } else { continue };
        slot.0 += p.probability;
        slot.1 += 1;
    }
    assert!(head.0 / head.1 as f64 > tail.0 / tail.1 as f64 + 0.1);
}
