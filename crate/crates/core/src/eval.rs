//! Adjusted Rand index between a fitted tree and planted clusters.

use std::collections::HashMap;
use std::hash::Hash;

use crate::corpus::WordId;
use crate::error::{Error, Result};
use crate::sampler::ModelState;
use crate::synth::GroundTruth;
use crate::tree::NodeId;

fn comb2(n: u64) -> f64 {
    let n = n as f64;
    n * (n - 1.0) / 2.0
}

/// Adjusted Rand index of two labelings of the same items, in [-1, 1].
///
/// Returns 1.0 when the two partitions are identical, including the
/// degenerate cases where the chance-corrected formula has a zero
/// denominator.
pub fn adjusted_rand_index<A, B>(predicted: &[A], truth: &[B]) -> Result<f64>
where
    A: Eq + Hash,
    B: Eq + Hash,
{
    if predicted.len() != truth.len() {
        return Err(Error::Value(format!(
            "label length mismatch: predicted {} vs truth {}",
            predicted.len(),
            truth.len()
        )));
    }
    let n = predicted.len() as u64;
    let mut cells: HashMap<(&A, &B), u64> = HashMap::new();
    let mut rows: HashMap<&A, u64> = HashMap::new();
    let mut cols: HashMap<&B, u64> = HashMap::new();
    for (a, b) in predicted.iter().zip(truth) {
        *cells.entry((a, b)).or_insert(0) += 1;
        *rows.entry(a).or_insert(0) += 1;
        *cols.entry(b).or_insert(0) += 1;
    }
    let index: f64 = cells.values().map(|&c| comb2(c)).sum();
    let sum_rows: f64 = rows.values().map(|&c| comb2(c)).sum();
    let sum_cols: f64 = cols.values().map(|&c| comb2(c)).sum();
    let total = comb2(n);
    let expected = if total > 0.0 {
        sum_rows * sum_cols / total
    } else {
        0.0
    };
    let max_index = (sum_rows + sum_cols) / 2.0;
    let denom = max_index - expected;
    if denom == 0.0 {
        // both partitions trivial in the same way (or fewer than two items)
        return Ok(if index == max_index { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / denom)
}

/// Node each active word occupies at `level`, in word-id order.
pub fn state_clusters(state: &ModelState, level: usize) -> Vec<(WordId, NodeId)> {
    state
        .active_words()
        .map(|w| (w, state.path(w).expect("active word has a path")[level]))
        .collect()
}

/// ARI between the fitted nodes at `level` and the planted ones, over the
/// state's active words.
pub fn ari_against_truth(state: &ModelState, truth: &GroundTruth, level: usize) -> Result<f64> {
    if truth.paths.len() != state.n_words() {
        return Err(Error::Value(format!(
            "truth covers {} words, model has {}",
            truth.paths.len(),
            state.n_words()
        )));
    }
    if level >= state.depth() || truth.depth != state.depth() {
        return Err(Error::Value(format!(
            "level {level} not comparable (model depth {}, truth depth {})",
            state.depth(),
            truth.depth
        )));
    }
    let planted = truth.clusters_at(level);
    let (pred, gold): (Vec<NodeId>, Vec<u32>) = state_clusters(state, level)
        .into_iter()
        .map(|(w, node)| (node, planted[w as usize]))
        .unzip();
    adjusted_rand_index(&pred, &gold)
}
