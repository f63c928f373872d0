mod common;

use std::collections::HashMap;

use common::*;
use hlwc::corpus::word_major_view;
use hlwc::synth::generate_synthetic;
use hlwc::{init_chain, init_state, DocId, Hyperparams, ModelState};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Fraction of `n` resamplings of one token that land on level 1, with
/// everything else held fixed.
fn level_one_frequency(state: &mut ModelState, word: u32, token: usize, n: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut hits = 0usize;
    for _ in 0..n {
        state.sample_token_level(word, token, &mut rng);
        hits += usize::from(state.token_levels(word)[token] == 1);
    }
    state.check_consistency().unwrap();
    hits as f64 / n as f64
}

fn within_three_sigma(freq: f64, p: f64, n: usize) -> bool {
    (freq - p).abs() <= 3.0 * (p * (1.0 - p) / n as f64).sqrt()
}

#[test]
fn symmetric_level_draws_are_even() {
    let docs: Vec<Vec<DocId>> = vec![vec![0]];
    let view = word_major_view(&corpus_from_tokens(1, &docs));
    let hyper = Hyperparams::new(1.0, vec![1.0; 2], vec![1.0; 2], 1).unwrap();
    let mut s = ModelState::from_assignment(&view, &hyper, &[vec![0]], &[vec![0]], &[0], 0).unwrap();
    let n = 100_000;
    let f = level_one_frequency(&mut s, 0, 0, n);
    assert!(within_three_sigma(f, 0.5, n), "{f}");
}

#[test]
fn asymmetric_level_draws_match_conditional() {
    // With the target token removed, the root holds {d0: 2, d1: 3} and the
    // leaf {d0: 1, d1: 2}; the word keeps one token at each level. Weights
    // are 6/7 and 4/5.
    let docs: Vec<Vec<DocId>> = vec![vec![0, 1, 1], vec![0, 0, 0, 1, 1, 1]];
    let levels = vec![vec![0, 0, 1], vec![0, 0, 1, 0, 0, 1]];
    let view = word_major_view(&corpus_from_tokens(2, &docs));
    let hyper = Hyperparams::new(1.0, vec![1.0; 2], vec![1.0; 2], 2).unwrap();
    let mut s =
        ModelState::from_assignment(&view, &hyper, &[vec![0], vec![0]], &levels, &[0, 1], 0).unwrap();
    let n = 100_000;
    let p: f64 = (4.0 / 5.0) / (6.0 / 7.0 + 4.0 / 5.0);
    assert!((p - 0.4828).abs() < 1e-4);
    let f = level_one_frequency(&mut s, 0, 0, n);
    assert!(within_three_sigma(f, p, n), "{f} vs {p}");
}

#[test]
fn depth_three_gibbs_matches_enumeration() {
    let docs: Vec<Vec<DocId>> = vec![vec![0], vec![1], vec![0, 1]];
    let hyper = Hyperparams::new(0.7, vec![0.5, 1.0, 2.0], vec![1.0, 0.5, 2.0], 2).unwrap();
    let mut exact: HashMap<(Vec<Vec<u32>>, Vec<u8>), f64> = HashMap::new();
    for partition in nested_partitions(3, 3) {
        for code in 0..81u32 {
            let flat: Vec<u8> = (0..4).map(|t| (code / 3u32.pow(t) % 3) as u8).collect();
            let levels = vec![flat[..1].to_vec(), flat[1..2].to_vec(), flat[2..].to_vec()];
            exact.insert((partition.clone(), flat), sequential_joint(&docs, &partition, &levels, &hyper));
        }
    }
    let norm = log_sum_exp(&exact.values().copied().collect::<Vec<_>>());

    let view = word_major_view(&corpus_from_tokens(2, &docs));
    let mut s = init_state(&view, &hyper, 8).unwrap();
    let sweeps = 400_000;
    let mut counts: HashMap<(Vec<Vec<u32>>, Vec<u8>), u64> = HashMap::new();
    for _ in 0..sweeps {
        s.gibbs_sweep();
        let flat: Vec<u8> = (0..3).flat_map(|w| s.token_levels(w).to_vec()).collect();
        *counts.entry((state_labels(&s), flat)).or_insert(0) += 1;
    }
    assert!(counts.keys().all(|k| exact.contains_key(k)));
    let tv: f64 = 0.5
        * exact
            .iter()
            .map(|(k, lj)| {
                let q = counts.get(k).copied().unwrap_or(0) as f64 / sweeps as f64;
                ((lj - norm).exp() - q).abs()
            })
            .sum::<f64>();
    assert!(tv < 0.03, "total variation {tv} over {} states", exact.len());
}

#[test]
fn log_likelihood_trends_upward() {
    let hyper = Hyperparams::new(0.8, vec![0.2; 3], vec![1.0; 3], 30).unwrap();
    let mut rising = 0;
    for seed in 0..5u64 {
        let synth = generate_synthetic(30, 40, 30, &hyper, seed).unwrap();
        let view = word_major_view(&synth.corpus);
        let mut s = init_state(&view, &hyper, seed + 100).unwrap();
        let report = s.run(200, |_, _| Ok(())).unwrap();
        let mean = |xs: &[hlwc::SweepStats]| xs.iter().map(|t| t.joint_ll).sum::<f64>() / xs.len() as f64;
        let tenth = report.trace.len() / 10;
        if mean(&report.trace[report.trace.len() - tenth..]) > mean(&report.trace[..tenth]) {
            rising += 1;
        }
    }
    assert!(rising >= 3, "only {rising} of 5 seeds rose");
}

#[test]
fn runs_are_deterministic_per_seed_and_chain() {
    let hyper = Hyperparams::new(1.0, vec![0.5; 3], vec![1.0; 3], 15).unwrap();
    let synth = generate_synthetic(15, 20, 10, &hyper, 1).unwrap();
    let view = word_major_view(&synth.corpus);
    let trace = |chain| {
        let mut s = init_chain(&view, &hyper, 42, chain).unwrap();
        let r = s.run(30, |_, _| Ok(())).unwrap();
        let bits: Vec<u64> = r.trace.iter().map(|t| t.joint_ll.to_bits()).collect();
        (s, bits)
    };
    let (a, ta) = trace(0);
    let (b, tb) = trace(0);
    assert_eq!(ta, tb);
    assert_eq!(a, b);
    let (_, tc) = trace(1);
    assert_ne!(ta, tc);
}

/// Nested labels for every word of a state (inactive words get none).
fn full_labels(state: &ModelState) -> Vec<Vec<u32>> {
    let mut out = vec![Vec::new(); state.n_words()];
    for (w, labels) in state.active_words().zip(state_labels(state)) {
        out[w as usize] = labels;
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sweeps_keep_counts_consistent(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rs = RandomState::draw(&mut rng);
        let mut s = rs.build_shuffled(&mut rng);
        for _ in 0..5 {
            let stats = s.gibbs_sweep();
            prop_assert!(s.check_consistency().is_ok());
            prop_assert!(stats.joint_ll.is_finite());
            let levels: Vec<Vec<u8>> = (0..s.n_words() as u32).map(|w| s.token_levels(w).to_vec()).collect();
            let oracle = sequential_joint(&rs.docs, &full_labels(&s), &levels, &rs.hyper);
            prop_assert!((stats.joint_ll - oracle).abs() <= 1e-9 * oracle.abs().max(1.0),
                "bookkept {} vs recomputed {oracle}", stats.joint_ll);
        }
    }
}
