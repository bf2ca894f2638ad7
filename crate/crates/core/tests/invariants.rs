mod common;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use taste::dataio::{
    binarize, k_core_filter, parse_interactions_from, split_cold_start, split_random, LabeledPair, SplitRatios,
};
use taste::features::{bin_numeric, FeatureSetting, FieldKind, FieldValue, ModalSpec, NumericBinSpec, SchemaOptions};
use taste::metrics::{auc, logloss, topk_metrics, user_topk};
use taste::models::{rank_items, CtrKind, CtrModel};
use taste::muqtoken::{adjusted_rand_index, fit_kmeans, tokenize, KMeansOptions, Points};
use taste::tensor::{gradient_check, ParamStore, Tape, Tensor};

fn config(cases: u32) -> Config {
    Config {
        cases,
        rng_seed: RngSeed::Fixed(0x7a57e),
        failure_persistence: None,
        ..Config::default()
    }
}

fn pairs_strategy(max_users: u32, max_items: u32, max_len: usize) -> impl Strategy<Value = Vec<LabeledPair>> {
    prop::collection::btree_set((0..max_users, 0..max_items), 1..max_len).prop_flat_map(|keys| {
        let n = keys.len();
        (Just(keys), prop::collection::vec(1u32..5, n)).prop_map(|(keys, counts)| {
            keys.into_iter()
                .zip(counts)
                .map(|((user, item), count)| LabeledPair {
                    user,
                    item,
                    count,
                    label: count >= 2,
                })
                .collect()
        })
    })
}

fn sorted(mut v: Vec<LabeledPair>) -> Vec<(u32, u32, u32, bool)> {
    v.sort_by_key(|p| (p.user, p.item));
    v.into_iter().map(|p| (p.user, p.item, p.count, p.label)).collect()
}

/// Repeatedly drops every pair touching an entity with degree below `k`.
fn naive_k_core(pairs: &[LabeledPair], k: usize) -> Vec<LabeledPair> {
    let mut cur = pairs.to_vec();
    loop {
        let mut du: HashMap<u32, usize> = HashMap::new();
        let mut di: HashMap<u32, usize> = HashMap::new();
        for p in &cur {
            *du.entry(p.user).or_default() += 1;
            *di.entry(p.item).or_default() += 1;
        }
        let next: Vec<LabeledPair> = cur.iter().copied().filter(|p| du[&p.user] >= k && di[&p.item] >= k).collect();
        if next.len() == cur.len() {
            return cur;
        }
        cur = next;
    }
}

fn pair_count_ari(a: &[u32], b: &[u32]) -> f64 {
    let n = a.len();
    let (mut both, mut in_a, mut in_b) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            let sa = a[i] == a[j];
            let sb = b[i] == b[j];
            in_a += sa as u8 as f64;
            in_b += sb as u8 as f64;
            both += (sa && sb) as u8 as f64;
        }
    }
    let total = (n * (n - 1) / 2) as f64;
    let expected = in_a * in_b / total;
    let max = 0.5 * (in_a + in_b);
    if max == expected {
        return 1.0;
    }
    (both - expected) / (max - expected)
}

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn binarize_after_parse_ignores_event_order(
        events in prop::collection::vec((0u8..5, 0u8..6, 0i64..1000), 1..60),
        seed in any::<u64>(),
    ) {
        let to_text = |ev: &[(u8, u8, i64)]| {
            let mut s = String::from("user_id\titem_id\ttimestamp\n");
            for (u, i, t) in ev {
                s.push_str(&format!("u{u}\ti{i}\t{t}\n"));
            }
            s
        };
        let mut shuffled = events.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let by_key = |text: String| {
            let log = parse_interactions_from(text.as_bytes()).unwrap();
            binarize(&log.events, 2)
                .unwrap()
                .into_iter()
                .map(|p| ((log.users.key(p.user).to_string(), log.items.key(p.item).to_string()), (p.count, p.label)))
                .collect::<BTreeMap<_, _>>()
        };
        prop_assert_eq!(by_key(to_text(&events)), by_key(to_text(&shuffled)));
    }

    #[test]
    fn binarize_labels_follow_threshold(
        events in prop::collection::vec((0u8..4, 0u8..4, 0i64..100), 1..40),
        threshold in 1u32..4,
    ) {
        let log = parse_interactions_from(
            events.iter().map(|(u, i, t)| format!("u{u}\ti{i}\t{t}\n")).collect::<String>().as_bytes(),
        )
        .unwrap();
        let pairs = binarize(&log.events, threshold).unwrap();
        let mut counts: HashMap<(u32, u32), u32> = HashMap::new();
        for e in &log.events {
            *counts.entry((e.user, e.item)).or_default() += 1;
        }
        prop_assert_eq!(pairs.len(), counts.len());
        for p in &pairs {
            prop_assert_eq!(p.count, counts[&(p.user, p.item)]);
            prop_assert_eq!(p.label, p.count >= threshold);
        }
    }

    #[test]
    fn k_core_is_the_unique_fixpoint(pairs in pairs_strategy(12, 12, 80), k in 1usize..5) {
        let once = k_core_filter(&pairs, k).unwrap();
        prop_assert_eq!(sorted(k_core_filter(&once, k).unwrap()), sorted(once.clone()));
        prop_assert_eq!(sorted(once), sorted(naive_k_core(&pairs, k)));
    }

    #[test]
    fn random_split_partitions_input(pairs in pairs_strategy(8, 30, 150), seed in any::<u64>()) {
        let s = split_random(&pairs, SplitRatios::default(), seed).unwrap();
        prop_assert_eq!(s.len(), pairs.len());
        let all: Vec<LabeledPair> = [s.train.clone(), s.validation.clone(), s.test.clone()].concat();
        prop_assert_eq!(sorted(all), sorted(pairs.clone()));
        prop_assert_eq!(split_random(&pairs, SplitRatios::default(), seed).unwrap(), s);
    }

    #[test]
    fn cold_split_keeps_cold_items_out_of_train(pairs in pairs_strategy(10, 30, 200), seed in any::<u64>()) {
        let n_items = pairs.iter().map(|p| p.item).collect::<BTreeSet<_>>().len();
        let result = split_cold_start(&pairs, 0.2, SplitRatios::default(), seed);
        if n_items < 5 {
            prop_assert!(result.is_err());
            return Ok(());
        }
        let s = result.unwrap();
        prop_assert!(s.train.iter().all(|p| !s.cold_items.contains(&p.item)));
        prop_assert!(s.cold_validation.len().abs_diff(s.cold_test.len()) <= 1);
        let cold: Vec<LabeledPair> = [s.cold_validation.clone(), s.cold_test.clone()].concat();
        prop_assert!(cold.iter().all(|p| s.cold_items.contains(&p.item)));
        let all = [s.train.clone(), s.validation(), s.test()].concat();
        prop_assert_eq!(sorted(all), sorted(pairs.clone()));
        prop_assert_eq!(split_cold_start(&pairs, 0.2, SplitRatios::default(), seed).unwrap(), s);
    }

    #[test]
    fn bins_are_monotone_and_constant_within_a_bucket(
        lo in -100.0f64..100.0,
        span in 0.1f64..50.0,
        k in 1usize..20,
        xs in prop::collection::vec(-200.0f64..200.0, 2..40),
    ) {
        let spec = NumericBinSpec::new(lo, lo + span, k).unwrap();
        let mut xs = xs;
        xs.sort_by(f64::total_cmp);
        let bins: Vec<usize> = xs.iter().map(|&x| bin_numeric(x, &spec).unwrap()).collect();
        prop_assert!(bins.windows(2).all(|w| w[0] <= w[1]));
        for (&x, &b) in xs.iter().zip(&bins) {
            prop_assert!(b < k);
            if x >= lo && x < lo + span {
                let start = lo + b as f64 * spec.width();
                let mid = start + 0.5 * spec.width();
                prop_assert_eq!(bin_numeric(mid, &spec).unwrap(), b);
            }
        }
    }

    #[test]
    fn encoded_indices_respect_cardinalities(seed in 0u64..200) {
        let w = common::world(seed);
        for setting in [FeatureSetting::IdOnly, FeatureSetting::IdCategories, FeatureSetting::Full] {
            for modal in [ModalSpec::None, ModalSpec::MuqToken { k: 2 }] {
                let schema = w.schema(&SchemaOptions { setting, modal, ..SchemaOptions::default() });
                let enc = w.encoder(schema.clone());
                for pair in &w.pairs {
                    let inst = enc.encode(pair);
                    prop_assert_eq!(inst.values.len(), schema.len());
                    for (f, v) in schema.fields.iter().zip(&inst.values) {
                        let card = f.kind.cardinality();
                        match v {
                            FieldValue::Index(i) => prop_assert!((*i as usize) < card.unwrap()),
                            FieldValue::Bag(b) => prop_assert!(b.iter().all(|&i| (i as usize) < card.unwrap())),
                            FieldValue::Dense(d) => {
                                let FieldKind::Dense { dim } = f.kind else { panic!("dense value in {}", f.name) };
                                prop_assert_eq!(d.len(), dim);
                                prop_assert!(d.iter().all(|x| x.is_finite()));
                            }
                            FieldValue::Scalar(x) => prop_assert!(x.is_finite()),
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn kmeans_inertia_never_increases(
        rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 6..60),
        k in 1usize..6,
        seed in any::<u64>(),
    ) {
        let points = Points::from_rows(&rows).unwrap();
        let fit = fit_kmeans(&points, k, seed, &KMeansOptions::default()).unwrap();
        prop_assert!(fit.history.windows(2).all(|w| w[1] <= w[0] + 1e-9 * w[0].abs()));
        prop_assert!(fit.labels.iter().all(|&l| (l as usize) < k));
        prop_assert!(fit.centroids.iter().flatten().all(|c| c.is_finite()));
    }

    #[test]
    fn ari_is_symmetric_and_relabel_invariant(
        a in prop::collection::vec(0u32..4, 2..9),
        b_seed in any::<u64>(),
        perm_seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(b_seed);
        let b: Vec<u32> = a.iter().map(|_| rand::Rng::random_range(&mut rng, 0..3)).collect();
        let mut perm: Vec<u32> = (0..4).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(perm_seed));
        let a_perm: Vec<u32> = a.iter().map(|&x| perm[x as usize]).collect();
        let ab = adjusted_rand_index(&a, &b).unwrap();
        prop_assert!((ab - adjusted_rand_index(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!((ab - adjusted_rand_index(&a_perm, &b).unwrap()).abs() < 1e-12);
        prop_assert!((ab - pair_count_ari(&a, &b)).abs() < 1e-12);
        prop_assert_eq!(adjusted_rand_index(&a, &a_perm).unwrap(), 1.0);
        prop_assert!(ab <= 1.0 + 1e-12 && ab >= -1.0 - 1e-12);
    }

    #[test]
    fn auc_and_topk_ignore_increasing_transforms(
        data in prop::collection::vec((any::<bool>(), -3i32..4), 2..60),
    ) {
        let labels: Vec<bool> = data.iter().map(|d| d.0).collect();
        let scores: Vec<f64> = data.iter().map(|d| d.1 as f64).collect();
        let warped: Vec<f64> = scores.iter().map(|s| (s * 0.7).exp() + 3.0).collect();
        match auc(&labels, &scores) {
            Ok(v) => prop_assert_eq!(v, auc(&labels, &warped).unwrap()),
            Err(_) => prop_assert!(auc(&labels, &warped).is_err()),
        }
        let none = HashSet::new();
        let relevant: HashSet<u32> = labels.iter().enumerate().filter(|(_, &l)| l).map(|(i, _)| i as u32).collect();
        let k = 5;
        let r1 = rank_items(&scores, &none, scores.len());
        let r2 = rank_items(&warped, &none, warped.len());
        prop_assert_eq!(&r1.items, &r2.items);
        if relevant.is_empty() {
            return Ok(());
        }
        prop_assert_eq!(
            topk_metrics(&[r1.items.clone()], &[relevant.clone()], k).unwrap(),
            topk_metrics(&[r2.items], &[relevant], k).unwrap()
        );
    }

    #[test]
    fn ranking_metric_bounds(
        n_items in 1u32..30,
        rel in prop::collection::btree_set(0u32..30, 1..10),
        seed in any::<u64>(),
    ) {
        let mut ranked: Vec<u32> = (0..n_items).collect();
        ranked.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let relevant: HashSet<u32> = rel.into_iter().collect();
        let mut prev_recall = 0.0;
        for k in 1..=12usize {
            let m = user_topk(&ranked, &relevant, k).unwrap();
            let hits = ranked.iter().take(k).filter(|i| relevant.contains(i)).count();
            prop_assert!((m.precision * k as f64 - hits as f64).abs() < 1e-12);
            prop_assert!(m.recall >= prev_recall);
            prev_recall = m.recall;
            for v in [m.recall, m.precision, m.ndcg, m.mrr, m.mrr_at_k] {
                prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
            }
        }
    }

    #[test]
    fn logloss_is_minimised_by_the_positive_rate(labels in prop::collection::vec(any::<bool>(), 2..50)) {
        let rate = labels.iter().filter(|&&l| l).count() as f64 / labels.len() as f64;
        let at = |p: f64| logloss(&labels, &vec![p; labels.len()]).unwrap();
        let best = at(rate);
        for step in 1..100 {
            prop_assert!(best <= at(step as f64 / 100.0) + 1e-12);
        }
    }

    #[test]
    fn tape_primitives_match_finite_differences(
        rows in 1usize..9,
        inner in 1usize..9,
        cols in 1usize..9,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let a = store.add_normal("a", vec![rows, inner], 1.0, &mut rng);
        let b = store.add_normal("b", vec![inner, cols], 1.0, &mut rng);
        let c = store.add_normal("c", vec![rows, cols], 1.0, &mut rng);
        let w = Tensor::new(vec![rows, cols], (0..rows * cols).map(|i| 0.5 + (i as f64 * 0.61).sin().abs()).collect()).unwrap();
        let targets: Vec<f64> = (0..rows * cols).map(|i| (i % 2) as f64).collect();
        let report = gradient_check(&mut store, 1e-5, |t| {
            let (va, vb, vc) = (t.param(a)?, t.param(b)?, t.param(c)?);
            let ab = t.matmul(va, vb)?;
            let s = t.add(ab, vc)?;
            let sig = t.sigmoid(s)?;
            let sm = t.softmax(vc)?;
            let prod = t.mul(sig, sm)?;
            let weights = t.constant(w.clone())?;
            let weighted = t.mul(prod, weights)?;
            let bce = t.bce_with_logits(s, &targets)?;
            let mean_bce = t.mean(bce)?;
            let total = t.sum(weighted)?;
            let scaled = t.scale(total, 3.0)?;
            t.add(scaled, mean_bce)
        })
        .unwrap();
        prop_assert!(report.max_rel_error < 1e-6, "rel error {}", report.max_rel_error);
    }

    #[test]
    fn backward_is_linear_in_the_loss(n in 1usize..9, factor in -4.0f64..4.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let p = store.add_normal("p", vec![n, n], 1.0, &mut rng);
        let grads = |scale: f64| {
            let mut tape = Tape::new(&store);
            let v = tape.param(p).unwrap();
            let sq = tape.mul(v, v).unwrap();
            let r = tape.relu(v).unwrap();
            let both = tape.add(sq, r).unwrap();
            let s = tape.sum(both).unwrap();
            let s = tape.scale(s, scale).unwrap();
            tape.backward(s).unwrap().get(p).unwrap().data().to_vec()
        };
        let base = grads(1.0);
        for (g, b) in grads(factor).iter().zip(&base) {
            prop_assert!((g - factor * b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn fm_pairwise_identity_matches_double_loop(seed in 0u64..100) {
        let w = common::world(seed);
        let opts = SchemaOptions { setting: FeatureSetting::IdCategories, ..SchemaOptions::default() };
        let schema = w.schema(&opts);
        let enc = w.encoder(schema.clone());
        let hyper = taste::models::ModelHyper { embed_dim: 4, init_std: 0.5, ..Default::default() };
        let mut model = CtrModel::new(CtrKind::Fm, schema.clone(), hyper, seed).unwrap();
        let ids: Vec<_> = model.params.ids().collect();
        for id in ids {
            let name = model.params.name(id).to_string();
            if name == "bias" || name.starts_with("first.") {
                model.params.get_mut(id).data_mut().iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let batch = enc.batch(&w.pairs);
        let logits = model.predict_logits(&batch).unwrap();
        for (pair, &logit) in w.pairs.iter().zip(&logits) {
            let inst = enc.encode(pair);
            let vecs: Vec<Vec<f64>> = schema
                .fields
                .iter()
                .zip(&inst.values)
                .map(|(f, v)| {
                    let table = model.params.get(model.param_id(&format!("emb.{}", f.name)).unwrap());
                    let d = table.shape()[1];
                    let row = |i: u32| table.data()[i as usize * d..(i as usize + 1) * d].to_vec();
                    match v {
                        FieldValue::Index(i) => row(*i),
                        FieldValue::Bag(bag) => {
                            let mut acc = vec![0.0; d];
                            for &i in bag {
                                acc.iter_mut().zip(row(i)).for_each(|(a, x)| *a += x / bag.len() as f64);
                            }
                            acc
                        }
                        other => panic!("unexpected value {other:?}"),
                    }
                })
                .collect();
            let mut naive = 0.0;
            for i in 0..vecs.len() {
                for j in i + 1..vecs.len() {
                    naive += vecs[i].iter().zip(&vecs[j]).map(|(x, y)| x * y).sum::<f64>();
                }
            }
            prop_assert!((naive - logit).abs() < 1e-10, "{naive} vs {logit}");
        }
    }

    #[test]
    fn afm_attention_is_a_distribution(seed in 0u64..100) {
        let w = common::world(seed);
        let opts = SchemaOptions { setting: FeatureSetting::Full, ..SchemaOptions::default() };
        let schema = w.schema(&opts);
        let enc = w.encoder(schema.clone());
        let model = CtrModel::new(CtrKind::Afm, schema, common::grad::small_hyper(), seed).unwrap();
        let att = model.net.attention_weights(&model.params, &enc.batch(&w.pairs)).unwrap().unwrap();
        let width = att.numel() / w.pairs.len();
        for row in att.data().chunks(width) {
            prop_assert!(row.iter().all(|&a| a >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn tokenize_is_deterministic_and_in_range() {
    let data = taste::synth::generate(&taste::synth::SynthConfig {
        n_users: 40,
        n_items: 120,
        n_clusters: 4,
        liked_clusters: 2,
        genre_group_size: 2,
        events_per_user: 30.0,
        ..Default::default()
    })
    .unwrap();
    let (books, tokens) = tokenize(&data.embeddings, 4, 3).unwrap();
    let (books2, tokens2) = tokenize(&data.embeddings, 4, 3).unwrap();
    assert_eq!(books, books2);
    assert_eq!(tokens, tokens2);
    assert_eq!(tokens.len(), data.embeddings.len());
    for row in &tokens.tokens {
        assert_eq!(row.len(), data.embeddings.n_layers());
        assert!(row.iter().all(|&t| t < 4));
    }
    for layer in 0..data.embeddings.n_layers() {
        let ari = adjusted_rand_index(&tokens.column(layer), &data.truth.layer_labels(layer)).unwrap();
        assert!(ari >= 0.99, "layer {layer}: ARI {ari}");
    }
    let distinct: BTreeSet<Vec<u64>> = books.codebooks[0]
        .centroids
        .iter()
        .map(|c| c.iter().map(|v| v.to_bits()).collect())
        .collect();
    assert_eq!(distinct.len(), 4);
}
