//! Collapsed Gibbs sampler over word paths and token levels.
//!
//! A sweep visits every active word in a fresh random order, resamples its
//! path given everything else, then resamples the level of each of its
//! tokens in index order.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{DocId, WordId, WordView};
use crate::error::{Error, Result};
use crate::likelihood::{self, dm_log_marginal, Hyperparams, LevelDocCounts};
use crate::tree::{CandidatePath, DocCounts, Inconsistency, Node, NodeId, Step, Tree};

/// Seedable chain generator: ChaCha8 keyed by `seed_from_u64(seed)`, with
/// chain `k` reading stream `k`. Its position can be saved and restored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainRng(ChaCha8Rng);

/// Serializable position of a [`ChainRng`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    /// 32-byte key, hex encoded.
    pub key: String,
    pub stream: u64,
    /// Position in 32-bit words, as a decimal string (it is a u128).
    pub word_pos: String,
}

impl ChainRng {
    pub fn new(seed: u64, chain: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(chain);
        ChainRng(rng)
    }

    pub fn state(&self) -> RngState {
        RngState {
            key: hex::encode(self.0.get_seed()),
            stream: self.0.get_stream(),
            word_pos: self.0.get_word_pos().to_string(),
        }
    }

    pub fn from_state(state: &RngState) -> Result<Self> {
        let bad = |what: &str| Error::CheckpointCorrupt(format!("rng {what}"));
        let key: [u8; 32] = hex::decode(&state.key)
            .map_err(|_| bad("key"))?
            .try_into()
            .map_err(|_| bad("key length"))?;
        let pos: u128 = state.word_pos.parse().map_err(|_| bad("position"))?;
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(state.stream);
        rng.set_word_pos(pos);
        Ok(ChainRng(rng))
    }
}

impl RngCore for ChainRng {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}

/// Per-word sampler state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct WordState {
    /// d_wi: one entry per token, ascending.
    pub(crate) docs: Vec<DocId>,
    /// z_wi for each token.
    pub(crate) levels: Vec<u8>,
    /// n_{w,l}: tokens at each level.
    pub(crate) level_counts: Vec<u32>,
    /// c_w, root first; empty for inactive words.
    pub(crate) path: Vec<NodeId>,
}

impl WordState {
    fn from_docs(docs: &[(DocId, u32)], depth: usize) -> Self {
        let docs: Vec<DocId> = docs
            .iter()
            .flat_map(|&(d, c)| std::iter::repeat_n(d, c as usize))
            .collect();
        WordState {
            levels: vec![0; docs.len()],
            docs,
            level_counts: vec![0; depth],
            path: Vec::new(),
        }
    }

    fn is_active(&self) -> bool {
        !self.docs.is_empty()
    }

    fn level_doc_counts(&self, depth: usize) -> LevelDocCounts {
        LevelDocCounts::from_tokens(depth, &self.docs, &self.levels)
    }
}

/// Everything a chain needs to continue: tree, assignments, hyperparameters,
/// and the generator position.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub(crate) tree: Tree,
    pub(crate) words: Vec<WordState>,
    pub(crate) hyper: Hyperparams,
    pub(crate) rng: ChainRng,
    pub(crate) seed: u64,
    pub(crate) chain: u64,
    pub(crate) iteration: u64,
}

/// Outcome of one sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepStats {
    pub iteration: u64,
    /// Words whose path node ids changed.
    pub words_moved: usize,
    /// Tokens whose level changed.
    pub tokens_relevelled: usize,
    pub joint_ll: f64,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub trace: Vec<SweepStats>,
    pub best_iteration: u64,
    pub best_ll: f64,
    /// State at `best_iteration`.
    pub best_state: Box<ModelState>,
    pub wall_time: Duration,
}

fn check_view(view: &WordView, hyper: &Hyperparams) -> Result<()> {
    hyper.validate()?;
    if view.n_docs() != hyper.n_docs {
        return Err(Error::Value(format!(
            "hyperparameters assume {} documents but the corpus has {}",
            hyper.n_docs,
            view.n_docs()
        )));
    }
    if view.active_words().next().is_none() {
        return Err(Error::Value("corpus has no active words".into()));
    }
    Ok(())
}

fn empty_state(view: &WordView, hyper: &Hyperparams, seed: u64, chain: u64) -> ModelState {
    let depth = hyper.depth();
    ModelState {
        tree: Tree::new(depth),
        words: (0..view.n_words() as WordId)
            .map(|w| WordState::from_docs(view.docs(w), depth))
            .collect(),
        hyper: hyper.clone(),
        rng: ChainRng::new(seed, chain),
        seed,
        chain,
        iteration: 0,
    }
}

/// Initializes chain 0 for `seed`; see [`init_chain`].
pub fn init_state(view: &WordView, hyper: &Hyperparams, seed: u64) -> Result<ModelState> {
    init_chain(view, hyper, seed, 0)
}

/// Sequential initialization: active words are inserted one at a time in
/// random order, each with uniformly drawn token levels and a path drawn
/// from its conditional given the words already placed.
pub fn init_chain(view: &WordView, hyper: &Hyperparams, seed: u64, chain: u64) -> Result<ModelState> {
    check_view(view, hyper)?;
    let mut state = empty_state(view, hyper, seed, chain);
    let mut rng = state.rng.clone();
    let depth = hyper.depth();
    let mut order: Vec<WordId> = view.active_words().collect();
    order.shuffle(&mut rng);
    for w in order {
        let word = &mut state.words[w as usize];
        for z in word.levels.iter_mut() {
            *z = rng.random_range(0..depth) as u8;
            word.level_counts[*z as usize] += 1;
        }
        let counts = word.level_doc_counts(depth);
        let cands = state.tree.enumerate_candidates(hyper.gamma);
        let scores = score_candidates(&state.tree, &cands, &counts, hyper);
        let pick = sample_log_categorical(&scores, &mut rng);
        let path = state.tree.attach_word(&cands[pick], &counts)?;
        state.words[w as usize].path = path;
    }
    state.rng = rng;
    Ok(state)
}

/// Log posterior weight (nCRP prior plus document likelihood) of every
/// candidate. Per-node terms are computed once and shared between
/// candidates passing through the same node.
pub fn score_candidates(
    tree: &Tree,
    candidates: &[CandidatePath],
    word: &LevelDocCounts,
    hyper: &Hyperparams,
) -> Vec<f64> {
    let depth = tree.depth();
    let empty = DocCounts::new();
    let fresh: Vec<f64> = (0..depth)
        .map(|l| {
            dm_log_marginal(
                &empty,
                0,
                word.level(l).iter().copied(),
                hyper.eta[l],
                hyper.n_docs,
            )
        })
        .collect();
    let score_node = |node: &Node| {
        let l = node.level();
        dm_log_marginal(
            node.doc_counts(),
            node.doc_total(),
            word.level(l).iter().copied(),
            hyper.eta[l],
            hyper.n_docs,
        )
    };
    let root = score_node(tree.root());
    let mut memo: HashMap<NodeId, f64> = HashMap::new();
    candidates
        .iter()
        .map(|c| {
            let mut s = c.log_prior + root;
            for (i, step) in c.steps.iter().enumerate() {
                s += match *step {
                    Step::Existing(id) => {
                        *memo.entry(id).or_insert_with(|| score_node(tree.node(id)))
                    }
                    Step::New => fresh[i + 1],
                };
            }
            s
        })
        .collect()
}

/// Draws an index with probability proportional to `exp(log_weights)`,
/// subtracting the maximum first.
pub fn sample_log_categorical<R: Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> usize {
    let max = log_weights
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(max.is_finite(), "no candidate has finite weight");
    let weights: Vec<f64> = log_weights.iter().map(|&l| (l - max).exp()).collect();
    sample_weighted(&weights, rng)
}

fn sample_weighted<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    // rounding left u just past the end
    weights
        .iter()
        .rposition(|&w| w > 0.0)
        .expect("at least one positive weight")
}

impl ModelState {
    /// Builds a state with prescribed paths and levels, inserting words in
    /// `order`.
    ///
    /// `paths[w]` holds L-1 labels; two words share the node at level `k` iff
    /// their labels agree on positions `0..k`. Inactive words take empty
    /// entries. The generator starts fresh from `seed`.
    pub fn from_assignment(
        view: &WordView,
        hyper: &Hyperparams,
        paths: &[Vec<u32>],
        levels: &[Vec<u8>],
        order: &[WordId],
        seed: u64,
    ) -> Result<ModelState> {
        check_view(view, hyper)?;
        let depth = hyper.depth();
        if paths.len() != view.n_words() || levels.len() != view.n_words() {
            return Err(Error::Value("one path and level list per word required".into()));
        }
        let mut expected: Vec<WordId> = view.active_words().collect();
        let mut given = order.to_vec();
        given.sort_unstable();
        expected.sort_unstable();
        if given != expected {
            return Err(Error::Value("order must list every active word once".into()));
        }

        let mut state = empty_state(view, hyper, seed, 0);
        let mut nodes: HashMap<Vec<u32>, NodeId> = HashMap::new();
        for &w in order {
            let (labels, lv) = (&paths[w as usize], &levels[w as usize]);
            let word = &mut state.words[w as usize];
            if labels.len() + 1 != depth || lv.len() != word.docs.len() {
                return Err(Error::Value(format!("word {w}: path or level length mismatch")));
            }
            if let Some(&z) = lv.iter().find(|&&z| z as usize >= depth) {
                return Err(Error::Value(format!("word {w}: level {z} out of range")));
            }
            word.levels.clone_from(lv);
            word.level_counts = vec![0; depth];
            for &z in lv {
                word.level_counts[z as usize] += 1;
            }
            let steps = (1..depth)
                .map(|k| match nodes.get(&labels[..k]) {
                    Some(&id) => Step::Existing(id),
                    None => Step::New,
                })
                .collect();
            let cand = CandidatePath {
                steps,
                log_prior: 0.0,
            };
            let counts = word.level_doc_counts(depth);
            let path = state.tree.attach_word(&cand, &counts)?;
            for k in 1..depth {
                nodes.insert(labels[..k].to_vec(), path[k]);
            }
            state.words[w as usize].path = path;
        }
        Ok(state)
    }

    pub fn tree(&self) -> &Tree {
        &self.tree
    }

    pub fn hyper(&self) -> &Hyperparams {
        &self.hyper
    }

    pub fn depth(&self) -> usize {
        self.hyper.depth()
    }

    pub fn n_words(&self) -> usize {
        self.words.len()
    }

    /// Completed sweeps.
    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn chain(&self) -> u64 {
        self.chain
    }

    pub fn rng_state(&self) -> RngState {
        self.rng.state()
    }

    pub fn is_active(&self, w: WordId) -> bool {
        self.words[w as usize].is_active()
    }

    pub fn active_words(&self) -> impl Iterator<Item = WordId> + '_ {
        (0..self.words.len() as WordId).filter(|&w| self.is_active(w))
    }

    /// N_w.
    pub fn word_tokens(&self, w: WordId) -> usize {
        self.words[w as usize].docs.len()
    }

    /// Root-to-leaf node ids; `None` for inactive words.
    pub fn path(&self, w: WordId) -> Option<&[NodeId]> {
        let p = &self.words[w as usize].path;
        (!p.is_empty()).then_some(p.as_slice())
    }

    pub fn token_docs(&self, w: WordId) -> &[DocId] {
        &self.words[w as usize].docs
    }

    pub fn token_levels(&self, w: WordId) -> &[u8] {
        &self.words[w as usize].levels
    }

    pub fn level_counts(&self, w: WordId) -> &[u32] {
        &self.words[w as usize].level_counts
    }

    pub fn level_doc_counts(&self, w: WordId) -> LevelDocCounts {
        self.words[w as usize].level_doc_counts(self.depth())
    }

    pub fn joint_log_likelihood(&self) -> f64 {
        likelihood::joint_log_likelihood(
            &self.tree,
            self.words.iter().map(|w| w.level_counts.as_slice()),
            &self.hyper,
        )
    }

    /// Resamples the path of word `w` from its full conditional. Returns
    /// whether its node ids changed. Inactive words are skipped.
    pub fn sample_word_path<R: Rng + ?Sized>(&mut self, w: WordId, rng: &mut R) -> bool {
        let depth = self.depth();
        let word = &self.words[w as usize];
        if !word.is_active() {
            return false;
        }
        let counts = word.level_doc_counts(depth);
        let old = std::mem::take(&mut self.words[w as usize].path);
        self.tree.detach_word(&old, &counts);
        let cands = self.tree.enumerate_candidates(self.hyper.gamma);
        let scores = score_candidates(&self.tree, &cands, &counts, &self.hyper);
        let pick = sample_log_categorical(&scores, rng);
        let path = self
            .tree
            .attach_word(&cands[pick], &counts)
            .expect("freshly enumerated candidate is valid");
        let moved = path != old;
        self.words[w as usize].path = path;
        moved
    }

    /// Resamples the level of token `i` of word `w`. Returns whether it changed.
    pub fn sample_token_level<R: Rng + ?Sized>(&mut self, w: WordId, i: usize, rng: &mut R) -> bool {
        let depth = self.depth();
        if depth == 1 {
            return false;
        }
        let word = &mut self.words[w as usize];
        let doc = word.docs[i];
        let old = word.levels[i] as usize;
        self.tree.remove_token(word.path[old], doc);
        word.level_counts[old] -= 1;

        let nodes: Vec<&Node> = word.path.iter().map(|&id| self.tree.node(id)).collect();
        let mut weights = vec![0.0; depth];
        likelihood::level_weights(&word.level_counts, &nodes, doc, &self.hyper, &mut weights);
        let new = sample_weighted(&weights, rng);

        self.tree.add_token(word.path[new], doc);
        word.level_counts[new] += 1;
        word.levels[i] = new as u8;
        new != old
    }

    /// One full sweep drawing from `rng`. Does not advance the state's own
    /// generator.
    pub fn gibbs_sweep_with<R: Rng + ?Sized>(&mut self, rng: &mut R) -> SweepStats {
        let mut order: Vec<WordId> = self.active_words().collect();
        order.shuffle(rng);
        let mut words_moved = 0;
        let mut tokens_relevelled = 0;
        for w in order {
            words_moved += usize::from(self.sample_word_path(w, rng));
            for i in 0..self.words[w as usize].docs.len() {
                tokens_relevelled += usize::from(self.sample_token_level(w, i, rng));
            }
        }
        self.iteration += 1;
        SweepStats {
            iteration: self.iteration,
            words_moved,
            tokens_relevelled,
            joint_ll: self.joint_log_likelihood(),
        }
    }

    /// One full sweep using the chain's own generator.
    pub fn gibbs_sweep(&mut self) -> SweepStats {
        let mut rng = self.rng.clone();
        let stats = self.gibbs_sweep_with(&mut rng);
        self.rng = rng;
        stats
    }

    /// Runs `n_iterations` sweeps, calling `hook` after each. Tracks the
    /// highest joint log-likelihood state seen, including the starting one.
    ///
    /// A hook error stops the run after the sweep it follows; the state is
    /// left as that sweep produced it.
    pub fn run<F>(&mut self, n_iterations: u64, mut hook: F) -> Result<RunReport>
    where
        F: FnMut(&ModelState, &SweepStats) -> Result<()>,
    {
        if n_iterations == 0 {
            return Err(Error::Value("iterations must be at least 1".into()));
        }
        let start = Instant::now();
        let mut best_ll = self.joint_log_likelihood();
        let mut best_iteration = self.iteration;
        let mut best_state = Box::new(self.clone());
        let mut trace = Vec::with_capacity(n_iterations as usize);
        for _ in 0..n_iterations {
            let stats = self.gibbs_sweep();
            if stats.joint_ll > best_ll {
                best_ll = stats.joint_ll;
                best_iteration = stats.iteration;
                best_state = Box::new(self.clone());
            }
            trace.push(stats);
            hook(self, &stats)?;
        }
        Ok(RunReport {
            trace,
            best_iteration,
            best_ll,
            best_state,
            wall_time: start.elapsed(),
        })
    }

    /// Tree invariants plus a full recount of node customers and document
    /// counts from the word assignments.
    pub fn check_consistency(&self) -> std::result::Result<(), Inconsistency> {
        self.tree.assert_consistency()?;
        let depth = self.depth();
        let root = self.tree.root_id();
        let mut n_words: HashMap<NodeId, u32> = HashMap::new();
        let mut docs: HashMap<NodeId, DocCounts> = HashMap::new();
        let fail = |node, field, detail| Err(Inconsistency { node, field, detail });

        for (w, word) in self.words.iter().enumerate() {
            if !word.is_active() {
                if !word.path.is_empty() {
                    return fail(root, "path", format!("inactive word {w} has a path"));
                }
                continue;
            }
            if word.path.len() != depth || word.path[0] != root {
                return fail(root, "path", format!("word {w} path {:?}", word.path));
            }
            let mut counts = vec![0u32; depth];
            for &z in &word.levels {
                if z as usize >= depth {
                    return fail(root, "levels", format!("word {w} has level {z}"));
                }
                counts[z as usize] += 1;
            }
            if counts != word.level_counts {
                return fail(root, "level_counts", format!("word {w} cached counts stale"));
            }
            for (l, &id) in word.path.iter().enumerate() {
                let Some(node) = self.tree.get(id) else {
                    return fail(id, "path", format!("word {w} routes through a missing node"));
                };
                if node.level() != l || (l > 0 && node.parent() != Some(word.path[l - 1])) {
                    return fail(id, "path", format!("word {w} path is not a chain"));
                }
                *n_words.entry(id).or_insert(0) += 1;
            }
            for (&d, &z) in word.docs.iter().zip(&word.levels) {
                *docs
                    .entry(word.path[z as usize])
                    .or_default()
                    .entry(d)
                    .or_insert(0) += 1;
            }
        }
        for node in self.tree.nodes() {
            let expect = n_words.get(&node.id()).copied().unwrap_or(0);
            if node.n_words() != expect {
                return fail(
                    node.id(),
                    "n_words",
                    format!("stored {} but {expect} words route through it", node.n_words()),
                );
            }
            let empty = DocCounts::new();
            if node.doc_counts() != docs.get(&node.id()).unwrap_or(&empty) {
                return fail(node.id(), "doc_counts", "disagree with token assignments".into());
            }
        }
        Ok(())
    }
}
