//! Forward sampling from the generative model, for recovery experiments.
//!
//! Each word draws a path from the nCRP, a level distribution theta_w from
//! Dirichlet(alpha), and for each token a level z ~ theta_w and a document
//! d ~ beta at its node on that level, where every node's beta is drawn
//! from a symmetric Dirichlet(eta[level]) over the documents.

use std::fs;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Gamma;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, DocId, WordId};
use crate::error::{Error, Result};
use crate::likelihood::Hyperparams;

/// Planted assignments behind a synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub depth: usize,
    /// Per word, the planted node label at levels 1..L. Labels are unique
    /// across the whole tree, so equal labels at a level mean a shared node.
    pub paths: Vec<Vec<u32>>,
    /// Per word, token levels ordered by (doc, level), matching the order in
    /// which the sampler expands a word's tokens.
    pub levels: Vec<Vec<u8>>,
    /// Per word, the drawn level distribution.
    pub thetas: Vec<Vec<f64>>,
}

impl GroundTruth {
    /// Planted cluster label of each word at `level` (0 is the shared root).
    pub fn clusters_at(&self, level: usize) -> Vec<u32> {
        self.paths
            .iter()
            .map(|p| if level == 0 { 0 } else { p[level - 1] })
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone)]
pub struct Synthetic {
    pub corpus: Corpus,
    pub truth: GroundTruth,
}

struct PlantedNode {
    customers: u32,
    children: Vec<u32>,
}

/// Draws from Dirichlet(shape) through normalized gamma variates. If every
/// variate underflows, all mass goes to one component picked in proportion
/// to `shape`.
fn dirichlet<R: Rng + ?Sized>(shape: &[f64], rng: &mut R) -> Vec<f64> {
    let mut x: Vec<f64> = shape
        .iter()
        .map(|&a| Gamma::new(a, 1.0).expect("positive shape").sample(rng))
        .collect();
    let sum: f64 = x.iter().sum();
    if sum > 0.0 && sum.is_finite() {
        x.iter_mut().for_each(|v| *v /= sum);
    } else {
        let k = WeightedIndex::new(shape).expect("positive shape").sample(rng);
        x.iter_mut().enumerate().for_each(|(i, v)| *v = f64::from(u8::from(i == k)));
    }
    x
}

pub fn generate_synthetic(
    n_docs: usize,
    vocab_size: usize,
    tokens_per_word: usize,
    hyper: &Hyperparams,
    seed: u64,
) -> Result<Synthetic> {
    if n_docs == 0 || vocab_size == 0 || tokens_per_word == 0 {
        return Err(Error::Value(
            "documents, vocabulary size and tokens per word must all be at least 1".into(),
        ));
    }
    if hyper.n_docs != n_docs {
        return Err(Error::Value(format!(
            "hyperparameters assume {} documents, asked for {n_docs}",
            hyper.n_docs
        )));
    }
    hyper.validate()?;
    let depth = hyper.depth();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // paths
    let mut nodes = vec![PlantedNode {
        customers: 0,
        children: Vec::new(),
    }];
    let mut node_level = vec![0usize];
    let mut paths = Vec::with_capacity(vocab_size);
    let mut full_paths = Vec::with_capacity(vocab_size);
    for _ in 0..vocab_size {
        let mut cur = 0u32;
        let mut full = vec![0u32];
        nodes[0].customers += 1;
        for level in 1..depth {
            let parent = &nodes[cur as usize];
            let mut weights: Vec<f64> = parent
                .children
                .iter()
                .map(|&c| f64::from(nodes[c as usize].customers))
                .collect();
            weights.push(hyper.gamma);
            let k = WeightedIndex::new(&weights)
                .expect("positive weights")
                .sample(&mut rng);
            let next = if k < parent.children.len() {
                parent.children[k]
            } else {
                let id = nodes.len() as u32;
                nodes.push(PlantedNode {
                    customers: 0,
                    children: Vec::new(),
                });
                node_level.push(level);
                nodes[cur as usize].children.push(id);
                id
            };
            nodes[next as usize].customers += 1;
            full.push(next);
            cur = next;
        }
        paths.push(full[1..].to_vec());
        full_paths.push(full);
    }

    // per-node document distributions
    let betas: Vec<WeightedIndex<f64>> = node_level
        .iter()
        .map(|&l| {
            let beta = dirichlet(&vec![hyper.eta[l]; n_docs], &mut rng);
            WeightedIndex::new(&beta).expect("a Dirichlet draw has positive mass")
        })
        .collect();

    let mut corpus = Corpus::new(n_docs, vocab_size);
    let mut levels = Vec::with_capacity(vocab_size);
    let mut thetas = Vec::with_capacity(vocab_size);
    for (w, full) in full_paths.iter().enumerate() {
        let theta = dirichlet(&hyper.alpha, &mut rng);
        let level_dist = WeightedIndex::new(&theta).expect("a Dirichlet draw has positive mass");
        let mut tokens: Vec<(DocId, u8)> = (0..tokens_per_word)
            .map(|_| {
                let z = level_dist.sample(&mut rng);
                let d = betas[full[z] as usize].sample(&mut rng) as DocId;
                (d, z as u8)
            })
            .collect();
        tokens.sort_unstable();
        for &(d, _) in &tokens {
            corpus.add(d, w as WordId, 1)?;
        }
        levels.push(tokens.into_iter().map(|(_, z)| z).collect());
        thetas.push(theta);
    }

    Ok(Synthetic {
        corpus,
        truth: GroundTruth {
            depth,
            paths,
            levels,
            thetas,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::word_major_view;

    fn hyper(gamma: f64, eta: f64, alpha: Vec<f64>, n_docs: usize) -> Hyperparams {
        let depth = alpha.len();
        Hyperparams::new(gamma, vec![eta; depth], alpha, n_docs).unwrap()
    }

    #[test]
    fn one_word_vocabulary() {
        let s = generate_synthetic(5, 1, 40, &hyper(1.0, 1.0, vec![1.0; 3], 5), 3).unwrap();
        assert_eq!(s.corpus.n_words(), 1);
        assert_eq!(s.corpus.total_tokens(), 40);
        assert_eq!(s.truth.paths, vec![vec![1, 2]]);
        assert_eq!(s.truth.levels[0].len(), 40);
    }

    #[test]
    fn tiny_gamma_shares_one_path() {
        let s = generate_synthetic(10, 50, 5, &hyper(1e-9, 1.0, vec![1.0; 3], 10), 8).unwrap();
        assert!(s.truth.paths.iter().all(|p| p == &s.truth.paths[0]));
    }

    #[test]
    fn concentrated_alpha_puts_tokens_at_root() {
        let s = generate_synthetic(
            10,
            20,
            30,
            &hyper(1.0, 1.0, vec![1e9, 1e-9, 1e-9], 10),
            5,
        )
        .unwrap();
        assert!(s.truth.levels.iter().flatten().all(|&z| z == 0));
    }

    #[test]
    fn levels_align_with_sampler_token_order() {
        let h = hyper(1.0, 0.5, vec![1.0; 3], 8);
        let s = generate_synthetic(8, 12, 25, &h, 21).unwrap();
        let view = word_major_view(&s.corpus);
        let order: Vec<WordId> = (0..12).collect();
        let state = crate::sampler::ModelState::from_assignment(
            &view,
            &h,
            &s.truth.paths,
            &s.truth.levels,
            &order,
            0,
        )
        .unwrap();
        state.check_consistency().unwrap();
    }

    #[test]
    fn same_seed_same_corpus() {
        let h = hyper(0.8, 0.2, vec![1.0, 2.0, 0.5], 30);
        let a = generate_synthetic(30, 40, 20, &h, 77).unwrap();
        let b = generate_synthetic(30, 40, 20, &h, 77).unwrap();
        assert_eq!(a.corpus, b.corpus);
        assert_eq!(a.truth, b.truth);
        let c = generate_synthetic(30, 40, 20, &h, 78).unwrap();
        assert_ne!(a.corpus, c.corpus);
    }

    #[test]
    fn level_frequencies_match_theta() {
        let n = 100_000usize;
        let s = generate_synthetic(4, 1, n, &hyper(1.0, 1.0, vec![1.0; 3], 4), 13).unwrap();
        let theta = &s.truth.thetas[0];
        let mut freq = [0usize; 3];
        for &z in &s.truth.levels[0] {
            freq[z as usize] += 1;
        }
        for l in 0..3 {
            let p = theta[l];
            let sigma = (n as f64 * p * (1.0 - p)).sqrt();
            let diff = (freq[l] as f64 - n as f64 * p).abs();
            assert!(diff <= 3.0 * sigma + 1.0, "level {l}: {} vs {}", freq[l], n as f64 * p);
        }
    }

    #[test]
    fn rejects_zero_sizes() {
        let h = hyper(1.0, 1.0, vec![1.0; 2], 3);
        assert!(generate_synthetic(3, 0, 5, &h, 0).is_err());
        assert!(generate_synthetic(3, 2, 0, &h, 0).is_err());
        assert!(generate_synthetic(4, 2, 5, &h, 0).is_err());
    }
}
