//! Reference computations shared by the integration tests. Everything here
//! is built from sequential predictive probabilities (one observation at a
//! time) rather than the gamma-function closed forms the library uses.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

use hlwc::corpus::word_major_view;
use hlwc::{Corpus, DocId, Hyperparams, ModelState, NodeId};
use rand::seq::SliceRandom;
use rand::Rng;

/// Log probability of observing `obs` in order from a Pólya urn over
/// `n_docs` colours seeded with `prior` balls plus `eta` per colour.
pub fn polya_sequence(prior: &HashMap<DocId, u32>, obs: &[DocId], eta: f64, n_docs: usize) -> f64 {
    let mut counts = prior.clone();
    let mut n: f64 = prior.values().map(|&c| f64::from(c)).sum();
    let mut total = 0.0;
    for &d in obs {
        let c = counts.entry(d).or_insert(0);
        total += ((f64::from(*c) + eta) / (n + n_docs as f64 * eta)).ln();
        *c += 1;
        n += 1.0;
    }
    total
}

/// Log probability of a nested seating, words arriving in index order.
/// `paths[w]` holds labels as in `ModelState::from_assignment`.
pub fn sequential_seating(paths: &[Vec<u32>], gamma: f64) -> f64 {
    let mut seated: HashMap<&[u32], u32> = HashMap::new();
    let mut total = 0.0;
    for labels in paths {
        for k in 1..=labels.len() {
            let parent = f64::from(seated.get(&labels[..k - 1]).copied().unwrap_or(0));
            let here = seated.get(&labels[..k]).copied().unwrap_or(0);
            let p = if here > 0 {
                f64::from(here) / (parent + gamma)
            } else {
                gamma / (parent + gamma)
            };
            total += p.ln();
        }
        for k in 0..=labels.len() {
            *seated.entry(&labels[..k]).or_insert(0) += 1;
        }
    }
    total
}

/// Full log joint of paths, levels and token documents, accumulated one
/// word and one token at a time. Words with no tokens are skipped.
pub fn sequential_joint(
    docs: &[Vec<DocId>],
    paths: &[Vec<u32>],
    levels: &[Vec<u8>],
    hyper: &Hyperparams,
) -> f64 {
    let active: Vec<usize> = (0..docs.len()).filter(|&w| !docs[w].is_empty()).collect();
    let active_paths: Vec<Vec<u32>> = active.iter().map(|&w| paths[w].clone()).collect();
    let mut total = sequential_seating(&active_paths, hyper.gamma);

    let alpha_sum: f64 = hyper.alpha.iter().sum();
    let n_docs = hyper.n_docs as f64;
    let mut nodes: HashMap<Vec<u32>, (HashMap<DocId, u32>, u32)> = HashMap::new();
    for &w in &active {
        let mut seen = vec![0u32; hyper.depth()];
        for (i, (&d, &z)) in docs[w].iter().zip(&levels[w]).enumerate() {
            let z = z as usize;
            total += ((f64::from(seen[z]) + hyper.alpha[z]) / (i as f64 + alpha_sum)).ln();
            seen[z] += 1;

            let eta = hyper.eta[z];
            let (counts, n) = nodes.entry(paths[w][..z].to_vec()).or_default();
            let c = counts.entry(d).or_insert(0);
            total += ((f64::from(*c) + eta) / (f64::from(*n) + n_docs * eta)).ln();
            *c += 1;
            *n += 1;
        }
    }
    total
}

/// Corpus from per-word token documents.
pub fn corpus_from_tokens(n_docs: usize, docs: &[Vec<DocId>]) -> Corpus {
    let mut c = Corpus::new(n_docs, docs.len());
    for (w, ds) in docs.iter().enumerate() {
        for &d in ds {
            c.add(d, w as u32, 1).unwrap();
        }
    }
    c
}

/// Relabels so that the label at position k is the order of first
/// appearance of the prefix `labels[..=k]`. Two assignments give the same
/// result iff they induce the same nested partition.
pub fn canonical_labels(paths: &[Vec<u32>]) -> Vec<Vec<u32>> {
    let mut seen: Vec<HashMap<&[u32], u32>> = Vec::new();
    paths
        .iter()
        .map(|labels| {
            (0..labels.len())
                .map(|k| {
                    if seen.len() <= k {
                        seen.push(HashMap::new());
                    }
                    let next = seen[k].len() as u32;
                    *seen[k].entry(&labels[..=k]).or_insert(next)
                })
                .collect()
        })
        .collect()
}

/// The nested partition a state's active words occupy, in the same
/// canonical labelling as [`canonical_labels`].
pub fn state_labels(state: &ModelState) -> Vec<Vec<u32>> {
    let depth = state.depth();
    let mut seen: Vec<HashMap<NodeId, u32>> = vec![HashMap::new(); depth];
    state
        .active_words()
        .map(|w| {
            let path = state.path(w).unwrap();
            (1..depth)
                .map(|k| {
                    let next = seen[k].len() as u32;
                    *seen[k].entry(path[k]).or_insert(next)
                })
                .collect()
        })
        .collect()
}

/// Every distinct nested partition of `n` items into a depth-`depth` tree,
/// in canonical labelling.
pub fn nested_partitions(n: usize, depth: usize) -> Vec<Vec<Vec<u32>>> {
    let positions = depth - 1;
    let per_word = (n as u32).pow(positions as u32);
    let mut out = BTreeSet::new();
    let total = (per_word as u64).pow(n as u32);
    for code in 0..total {
        let mut rest = code;
        let paths: Vec<Vec<u32>> = (0..n)
            .map(|_| {
                (0..positions)
                    .map(|_| {
                        let l = (rest % n as u64) as u32;
                        rest /= n as u64;
                        l
                    })
                    .collect()
            })
            .collect();
        out.insert(canonical_labels(&paths));
    }
    out.into_iter().collect()
}

/// All permutations of `0..n`.
pub fn permutations(n: usize) -> Vec<Vec<u32>> {
    fn go(prefix: &mut Vec<u32>, left: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if left.is_empty() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..left.len() {
            let x = left.remove(i);
            prefix.push(x);
            go(prefix, left, out);
            prefix.pop();
            left.insert(i, x);
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), &mut (0..n as u32).collect(), &mut out);
    out
}

/// A random small problem together with a random assignment.
#[derive(Clone)]
pub struct RandomState {
    pub n_docs: usize,
    pub docs: Vec<Vec<DocId>>,
    pub paths: Vec<Vec<u32>>,
    pub levels: Vec<Vec<u8>>,
    pub hyper: Hyperparams,
}

impl RandomState {
    pub fn draw<R: Rng>(rng: &mut R) -> Self {
        let n_docs = rng.random_range(1..=6);
        let n_words = rng.random_range(1..=8);
        let depth = rng.random_range(1..=4);
        let docs: Vec<Vec<DocId>> = (0..n_words)
            .map(|w| {
                // keep word 0 active so the state is never empty
                let lo = usize::from(w == 0);
                let mut ds: Vec<DocId> = (0..rng.random_range(lo..=6))
                    .map(|_| rng.random_range(0..n_docs as u32))
                    .collect();
                ds.sort_unstable();
                ds
            })
            .collect();
        let paths = docs
            .iter()
            .map(|ds| {
                if ds.is_empty() {
                    Vec::new()
                } else {
                    (1..depth).map(|_| rng.random_range(0..3)).collect()
                }
            })
            .collect();
        let levels = docs
            .iter()
            .map(|ds| ds.iter().map(|_| rng.random_range(0..depth as u8)).collect())
            .collect();
        let draw_vec = |rng: &mut R| -> Vec<f64> { (0..depth).map(|_| rng.random_range(0.05..3.0)).collect() };
        let eta = draw_vec(rng);
        let alpha = draw_vec(rng);
        let hyper = Hyperparams::new(rng.random_range(0.1..4.0), eta, alpha, n_docs).unwrap();
        RandomState {
            n_docs,
            docs,
            paths,
            levels,
            hyper,
        }
    }

    pub fn active(&self) -> Vec<u32> {
        (0..self.docs.len() as u32)
            .filter(|&w| !self.docs[w as usize].is_empty())
            .collect()
    }

    pub fn build(&self, order: &[u32]) -> ModelState {
        let view = word_major_view(&corpus_from_tokens(self.n_docs, &self.docs));
        ModelState::from_assignment(&view, &self.hyper, &self.paths, &self.levels, order, 0).unwrap()
    }

    pub fn build_shuffled<R: Rng>(&self, rng: &mut R) -> ModelState {
        let mut order = self.active();
        order.shuffle(rng);
        self.build(&order)
    }

    pub fn oracle_joint(&self) -> f64 {
        sequential_joint(&self.docs, &self.paths, &self.levels, &self.hyper)
    }
}

/// Log-sum-exp of a slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
