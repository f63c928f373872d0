//! Hierarchical latent word clustering.
//!
//! Words are clustered into a fixed-depth tree drawn from a nested Chinese
//! restaurant process. Each tree node carries a multinomial over document
//! ids, each word picks a root-to-leaf path, and each occurrence of a word
//! is allocated to one level on that path. Words that occur in similar
//! documents end up sharing nodes. Inference is collapsed Gibbs sampling
//! over paths and levels.
//!
//! The pipeline is: load a corpus ([`corpus`]), transpose it to the
//! word-major view, initialize a [`sampler::ModelState`], run sweeps, then
//! export the tree ([`export`]) or save a [`checkpoint`].

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod export;
pub mod likelihood;
pub mod sampler;
pub mod synth;
pub mod tree;

pub use corpus::{Corpus, DocId, Vocabulary, WordId, WordView};
pub use error::{Error, Result};
pub use likelihood::{Hyperparams, LevelDocCounts};
pub use sampler::{init_chain, init_state, ModelState, RunReport, SweepStats};
pub use tree::{CandidatePath, Node, NodeId, Step, Tree};
