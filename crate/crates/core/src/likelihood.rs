//! Collapsed probabilities: Dirichlet-multinomial marginals for path moves,
//! the per-token level conditional, and the joint log-likelihood.
//!
//! Everything is computed in log space through `ln_gamma`; nothing here
//! mutates model state.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::corpus::DocId;
use crate::error::{Error, Result};
use crate::tree::{CandidatePath, DocCounts, Node, Tree};

/// Model hyperparameters. `eta` and `alpha` carry one entry per level, so
/// their length is the tree depth L.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub gamma: f64,
    pub eta: Vec<f64>,
    pub alpha: Vec<f64>,
    /// Dimension of every node's Dirichlet over documents.
    pub n_docs: usize,
}

impl Hyperparams {
    pub fn new(gamma: f64, eta: Vec<f64>, alpha: Vec<f64>, n_docs: usize) -> Result<Self> {
        let h = Hyperparams {
            gamma,
            eta,
            alpha,
            n_docs,
        };
        h.validate()?;
        Ok(h)
    }

    /// gamma = 1 and eta = alpha = 1 at each of three levels.
    pub fn defaults(n_docs: usize) -> Self {
        Hyperparams {
            gamma: 1.0,
            eta: vec![1.0; 3],
            alpha: vec![1.0; 3],
            n_docs,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.gamma) {
            return Err(Error::Value(format!("gamma must be positive, got {}", self.gamma)));
        }
        if self.eta.is_empty() || self.eta.len() > u8::MAX as usize {
            return Err(Error::Value(format!(
                "depth must be between 1 and {}, got {}",
                u8::MAX,
                self.eta.len()
            )));
        }
        if self.alpha.len() != self.eta.len() {
            return Err(Error::Value(format!(
                "eta has {} levels but alpha has {}",
                self.eta.len(),
                self.alpha.len()
            )));
        }
        if let Some(x) = self.eta.iter().chain(&self.alpha).find(|&&x| !positive(x)) {
            return Err(Error::Value(format!("eta and alpha must be positive, got {x}")));
        }
        if self.n_docs == 0 {
            return Err(Error::Value("corpus has no documents".into()));
        }
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.eta.len()
    }
}

/// A word's tokens grouped by level: for each level, sorted `(doc, count)`
/// pairs. The levels partition the word's tokens.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LevelDocCounts {
    levels: Vec<Vec<(DocId, u32)>>,
    totals: Vec<u64>,
}

impl LevelDocCounts {
    /// Normalizes arbitrary per-level lists: sorts, merges repeats, drops zeros.
    pub fn from_levels(levels: Vec<Vec<(DocId, u32)>>) -> Self {
        let levels: Vec<Vec<(DocId, u32)>> = levels
            .into_iter()
            .map(|mut l| {
                l.sort_unstable_by_key(|&(d, _)| d);
                let mut merged: Vec<(DocId, u32)> = Vec::with_capacity(l.len());
                for (d, c) in l {
                    match merged.last_mut() {
                        Some(last) if last.0 == d => last.1 += c,
                        _ => merged.push((d, c)),
                    }
                }
                merged.retain(|&(_, c)| c > 0);
                merged
            })
            .collect();
        let totals = levels
            .iter()
            .map(|l| l.iter().map(|&(_, c)| u64::from(c)).sum())
            .collect();
        LevelDocCounts { levels, totals }
    }

    /// Groups a word's tokens by level. `docs` must be sorted ascending.
    pub fn from_tokens(depth: usize, docs: &[DocId], levels: &[u8]) -> Self {
        debug_assert_eq!(docs.len(), levels.len());
        debug_assert!(docs.windows(2).all(|p| p[0] <= p[1]));
        let mut out = LevelDocCounts {
            levels: vec![Vec::new(); depth],
            totals: vec![0; depth],
        };
        for (&d, &l) in docs.iter().zip(levels) {
            let l = l as usize;
            let list = &mut out.levels[l];
            match list.last_mut() {
                Some(last) if last.0 == d => last.1 += 1,
                _ => list.push((d, 1)),
            }
            out.totals[l] += 1;
        }
        out
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, l: usize) -> &[(DocId, u32)] {
        &self.levels[l]
    }

    /// n_{w,l}: tokens of the word at level `l`.
    pub fn total(&self, l: usize) -> u64 {
        self.totals[l]
    }

    pub fn n_tokens(&self) -> u64 {
        self.totals.iter().sum()
    }
}

/// Log probability of appending the `added` document observations to a
/// node that already holds `node_counts`, under a symmetric Dirichlet(eta)
/// over `n_docs` documents.
///
/// `node_total` must equal the sum of `node_counts`. The result depends only
/// on the counts in `added`, never on their order; an empty `added` gives 0.
pub fn dm_log_marginal(
    node_counts: &DocCounts,
    node_total: u64,
    added: impl IntoIterator<Item = (DocId, u32)>,
    eta: f64,
    n_docs: usize,
) -> f64 {
    assert!(eta > 0.0, "eta must be positive");
    let mut added_total = 0u64;
    let mut per_doc = 0.0;
    for (d, c) in added {
        if c == 0 {
            continue;
        }
        let have = f64::from(node_counts.get(&d).copied().unwrap_or(0));
        per_doc += ln_gamma(have + f64::from(c) + eta) - ln_gamma(have + eta);
        added_total += u64::from(c);
    }
    if added_total == 0 {
        return 0.0;
    }
    let base = node_total as f64 + n_docs as f64 * eta;
    ln_gamma(base) - ln_gamma(base + added_total as f64) + per_doc
}

/// Log probability of a word's level-grouped documents along `candidate`.
///
/// `New` steps score against an empty node. The tree must not contain the
/// word being scored.
pub fn path_log_likelihood(
    tree: &Tree,
    candidate: &CandidatePath,
    word: &LevelDocCounts,
    hyper: &Hyperparams,
) -> f64 {
    let empty = DocCounts::new();
    (0..tree.depth())
        .map(|l| {
            let (counts, total) = match candidate.node_at(tree, l) {
                Some(id) => {
                    let n = tree.node(id);
                    (n.doc_counts(), n.doc_total())
                }
                None => (&empty, 0),
            };
            dm_log_marginal(
                counts,
                total,
                word.level(l).iter().copied(),
                hyper.eta[l],
                hyper.n_docs,
            )
        })
        .sum()
}

/// Unnormalized level weights for one token of document `doc`.
///
/// `level_counts[l]` is the word's token count at level `l` and `path[l]`
/// its node there, both with the token itself already removed.
pub fn level_weights(
    level_counts: &[u32],
    path: &[&Node],
    doc: DocId,
    hyper: &Hyperparams,
    out: &mut [f64],
) {
    let n_docs = hyper.n_docs as f64;
    for (l, w) in out.iter_mut().enumerate() {
        let node = path[l];
        let eta = hyper.eta[l];
        *w = (f64::from(level_counts[l]) + hyper.alpha[l])
            * (f64::from(node.doc_count(doc)) + eta)
            / (node.doc_total() as f64 + n_docs * eta);
    }
}

/// Normalized distribution over levels for one token; see [`level_weights`].
pub fn level_conditional(
    level_counts: &[u32],
    path: &[&Node],
    doc: DocId,
    hyper: &Hyperparams,
) -> Vec<f64> {
    let mut w = vec![0.0; hyper.depth()];
    level_weights(level_counts, path, doc, hyper, &mut w);
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= sum);
    w
}

/// log P(C | gamma): the product of CRP seating probabilities at every
/// internal node, in closed form.
pub fn ncrp_log_prior(tree: &Tree, gamma: f64) -> f64 {
    let mut total = 0.0;
    for node in tree.nodes() {
        if node.level() + 1 == tree.depth() || node.n_words() == 0 {
            continue;
        }
        let n = f64::from(node.n_words());
        total += node.children().len() as f64 * gamma.ln();
        for &c in node.children() {
            total += ln_gamma(f64::from(tree.node(c).n_words()));
        }
        total += ln_gamma(gamma) - ln_gamma(gamma + n);
    }
    total
}

/// Log probability of a word's level sequence with its level distribution
/// integrated out under Dirichlet(alpha).
pub fn level_log_marginal(level_counts: &[u32], alpha: &[f64]) -> f64 {
    let a: f64 = alpha.iter().sum();
    let n: u64 = level_counts.iter().map(|&c| u64::from(c)).sum();
    if n == 0 {
        return 0.0;
    }
    let mut total = ln_gamma(a) - ln_gamma(a + n as f64);
    for (&c, &al) in level_counts.iter().zip(alpha) {
        if c > 0 {
            total += ln_gamma(al + f64::from(c)) - ln_gamma(al);
        }
    }
    total
}

/// log P(C, Z, D): nCRP prior, every node's document marginal, and every
/// word's level marginal.
pub fn joint_log_likelihood<'a>(
    tree: &Tree,
    word_level_counts: impl IntoIterator<Item = &'a [u32]>,
    hyper: &Hyperparams,
) -> f64 {
    let empty = DocCounts::new();
    let mut total = ncrp_log_prior(tree, hyper.gamma);
    for node in tree.nodes() {
        total += dm_log_marginal(
            &empty,
            0,
            node.doc_counts().iter().map(|(&d, &c)| (d, c)),
            hyper.eta[node.level()],
            hyper.n_docs,
        );
    }
    for counts in word_level_counts {
        total += level_log_marginal(counts, &hyper.alpha);
    }
    total
}
