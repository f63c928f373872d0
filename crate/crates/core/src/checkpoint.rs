//! Checkpoints: the full sampler state, including the generator position,
//! as versioned JSON.
//!
//! The file is an envelope `{format, version, checksum, body}` where
//! `checksum` is the SHA-256 of the compact serialization of `body`.
//! Serialization is canonical (ordered maps, fixed field order), so saving a
//! loaded checkpoint reproduces the original bytes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::DocId;
use crate::error::{Error, Result};
use crate::likelihood::Hyperparams;
use crate::sampler::{ChainRng, ModelState, RngState, WordState};
use crate::tree::{Node, NodeId, Tree};

pub const FORMAT: &str = "hlwc-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Envelope<B> {
    format: String,
    version: u32,
    checksum: String,
    body: B,
}

#[derive(Serialize, Deserialize)]
struct Body {
    seed: u64,
    chain: u64,
    iteration: u64,
    rng: RngState,
    hyper: Hyperparams,
    tree: TreeBody,
    words: Vec<WordBody>,
}

#[derive(Serialize, Deserialize)]
struct TreeBody {
    root: NodeId,
    next_id: NodeId,
    nodes: Vec<NodeBody>,
}

#[derive(Serialize, Deserialize)]
struct NodeBody {
    id: NodeId,
    parent: Option<NodeId>,
    level: usize,
    children: Vec<NodeId>,
    n_words: u32,
    doc_total: u64,
    doc_counts: Vec<(DocId, u32)>,
}

#[derive(Serialize, Deserialize)]
struct WordBody {
    /// Run-length encoded token documents.
    docs: Vec<(DocId, u32)>,
    levels: Vec<u8>,
    path: Vec<NodeId>,
}

fn body_of(state: &ModelState) -> Body {
    let nodes = state
        .tree
        .nodes()
        .map(|n| NodeBody {
            id: n.id,
            parent: n.parent,
            level: n.level,
            children: n.children.clone(),
            n_words: n.n_words,
            doc_total: n.doc_total,
            doc_counts: n.doc_counts.iter().map(|(&d, &c)| (d, c)).collect(),
        })
        .collect();
    let words = state
        .words
        .iter()
        .map(|w| {
            let mut docs: Vec<(DocId, u32)> = Vec::new();
            for &d in &w.docs {
                match docs.last_mut() {
                    Some(last) if last.0 == d => last.1 += 1,
                    _ => docs.push((d, 1)),
                }
            }
            WordBody {
                docs,
                levels: w.levels.clone(),
                path: w.path.clone(),
            }
        })
        .collect();
    Body {
        seed: state.seed,
        chain: state.chain,
        iteration: state.iteration,
        rng: state.rng.state(),
        hyper: state.hyper.clone(),
        tree: TreeBody {
            root: state.tree.root_id(),
            next_id: state.tree.next_id(),
            nodes,
        },
        words,
    }
}

fn checksum(body_json: &str) -> String {
    hex::encode(Sha256::digest(body_json.as_bytes()))
}

/// Canonical checkpoint bytes for `state`.
pub fn to_bytes(state: &ModelState) -> Result<Vec<u8>> {
    let body = body_of(state);
    let sum = checksum(&serde_json::to_string(&body)?);
    let env = Envelope {
        format: FORMAT.to_owned(),
        version: VERSION,
        checksum: sum,
        body,
    };
    let mut bytes = serde_json::to_vec(&env)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn from_bytes(bytes: &[u8]) -> Result<ModelState> {
    let corrupt = |msg: String| Error::CheckpointCorrupt(msg);
    let raw: serde_json::Value =
        serde_json::from_slice(bytes).map_err(|e| corrupt(format!("not valid JSON: {e}")))?;
    if raw.get("format").and_then(|f| f.as_str()) != Some(FORMAT) {
        return Err(corrupt("not a checkpoint file".into()));
    }
    let version = raw
        .get("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| corrupt("missing version".into()))?;
    if version != u64::from(VERSION) {
        return Err(Error::CheckpointVersion {
            found: version.try_into().unwrap_or(u32::MAX),
            expected: VERSION,
        });
    }
    let env: Envelope<Body> =
        serde_json::from_value(raw).map_err(|e| corrupt(format!("malformed body: {e}")))?;
    let actual = checksum(&serde_json::to_string(&env.body)?);
    if actual != env.checksum {
        return Err(corrupt(format!(
            "checksum mismatch: stored {}, computed {actual}",
            env.checksum
        )));
    }
    state_of(env.body)
}

fn state_of(body: Body) -> Result<ModelState> {
    let corrupt = |msg: String| Error::CheckpointCorrupt(msg);
    body.hyper.validate()?;
    let depth = body.hyper.depth();
    let nodes = body.tree.nodes.into_iter().map(|n| Node {
        id: n.id,
        parent: n.parent,
        level: n.level,
        children: n.children,
        n_words: n.n_words,
        doc_counts: n.doc_counts.into_iter().collect(),
        doc_total: n.doc_total,
    });
    let tree = Tree::from_parts(depth, body.tree.root, body.tree.next_id, nodes)
        .map_err(|e| corrupt(e.to_string()))?;
    let mut words = Vec::with_capacity(body.words.len());
    for (w, wb) in body.words.into_iter().enumerate() {
        let docs: Vec<DocId> = wb
            .docs
            .iter()
            .flat_map(|&(d, c)| std::iter::repeat_n(d, c as usize))
            .collect();
        if docs.len() != wb.levels.len() || wb.levels.iter().any(|&z| z as usize >= depth) {
            return Err(corrupt(format!("word {w}: bad token levels")));
        }
        if docs.iter().any(|&d| d as usize >= body.hyper.n_docs) {
            return Err(corrupt(format!("word {w}: document id out of range")));
        }
        let mut level_counts = vec![0u32; depth];
        for &z in &wb.levels {
            level_counts[z as usize] += 1;
        }
        words.push(WordState {
            docs,
            levels: wb.levels,
            level_counts,
            path: wb.path,
        });
    }
    let state = ModelState {
        tree,
        words,
        hyper: body.hyper,
        rng: ChainRng::from_state(&body.rng)?,
        seed: body.seed,
        chain: body.chain,
        iteration: body.iteration,
    };
    state
        .check_consistency()
        .map_err(|e| corrupt(e.to_string()))?;
    Ok(state)
}

pub fn checkpoint_save(state: &ModelState, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(state)?).map_err(|e| Error::io(path, e))
}

pub fn checkpoint_load(path: &Path) -> Result<ModelState> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}
