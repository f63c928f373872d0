//! Tree export: schema-versioned JSON and Graphviz DOT.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::corpus::{DocId, Vocabulary};
use crate::error::{Error, Result};
use crate::sampler::ModelState;
use crate::tree::NodeId;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportWord {
    pub term: String,
    /// Tokens of the word allocated to this node's level.
    pub tokens_here: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportNode {
    pub id: NodeId,
    pub level: usize,
    pub parent: Option<NodeId>,
    pub n_words: u32,
    /// All tokens allocated to this node.
    pub tokens: u64,
    pub words: Vec<ExportWord>,
    pub top_docs: Vec<(DocId, u32)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportMetadata {
    pub config: RunConfig,
    pub iteration: u64,
    pub joint_ll: f64,
    pub n_docs: usize,
    pub n_words: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeExport {
    pub schema_version: u32,
    pub metadata: ExportMetadata,
    /// Breadth-first from the root.
    pub nodes: Vec<ExportNode>,
}

/// Per node (BFS order), every word on a path through it with its token
/// count at that level, sorted by count descending then word id.
fn words_by_node(state: &ModelState) -> Vec<(NodeId, Vec<(u32, u32)>)> {
    let order = state.tree().bfs();
    let pos: std::collections::HashMap<NodeId, usize> =
        order.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let mut lists: Vec<Vec<(u32, u32)>> = vec![Vec::new(); order.len()];
    for w in state.active_words() {
        let counts = state.level_counts(w);
        for (l, id) in state.path(w).expect("active").iter().enumerate() {
            lists[pos[id]].push((w, counts[l]));
        }
    }
    for list in &mut lists {
        list.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    }
    order.into_iter().zip(lists).collect()
}

fn check_vocab(state: &ModelState, vocab: &Vocabulary) -> Result<()> {
    if vocab.len() != state.n_words() {
        return Err(Error::Value(format!(
            "vocabulary has {} terms, model has {} words",
            vocab.len(),
            state.n_words()
        )));
    }
    Ok(())
}

pub fn export_tree(state: &ModelState, vocab: &Vocabulary, config: &RunConfig) -> Result<TreeExport> {
    check_vocab(state, vocab)?;
    let opts = &config.export;
    let nodes = words_by_node(state)
        .into_iter()
        .map(|(id, words)| {
            let node = state.tree().node(id);
            let words = words
                .into_iter()
                .filter(|&(w, here)| f64::from(here) >= opts.min_share * state.word_tokens(w) as f64)
                .map(|(w, here)| ExportWord {
                    term: vocab.term(w).to_owned(),
                    tokens_here: here,
                })
                .collect();
            let mut top_docs: Vec<(DocId, u32)> =
                node.doc_counts().iter().map(|(&d, &c)| (d, c)).collect();
            top_docs.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
            top_docs.truncate(opts.top_docs);
            ExportNode {
                id,
                level: node.level(),
                parent: node.parent(),
                n_words: node.n_words(),
                tokens: node.doc_total(),
                words,
                top_docs,
            }
        })
        .collect();
    Ok(TreeExport {
        schema_version: SCHEMA_VERSION,
        metadata: ExportMetadata {
            config: config.clone(),
            iteration: state.iteration(),
            joint_ll: state.joint_log_likelihood(),
            n_docs: state.hyper().n_docs,
            n_words: state.n_words(),
        },
        nodes,
    })
}

pub fn export_json(state: &ModelState, vocab: &Vocabulary, config: &RunConfig) -> Result<String> {
    Ok(serde_json::to_string_pretty(&export_tree(state, vocab, config)?)?)
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Graphviz digraph; each node is labelled with its top words by tokens at
/// that level.
pub fn export_dot(state: &ModelState, vocab: &Vocabulary, config: &RunConfig) -> Result<String> {
    check_vocab(state, vocab)?;
    let opts = &config.export;
    let root = state.tree().root_id();
    let mut out = String::from("digraph hlwc {\n  node [shape=box, fontname=\"Helvetica\"];\n");
    for (id, words) in words_by_node(state) {
        if opts.dot_hide_root && id == root {
            continue;
        }
        let label: Vec<String> = words
            .iter()
            .filter(|&&(_, here)| here > 0)
            .take(opts.dot_top_words)
            .map(|&(w, _)| dot_escape(vocab.term(w)))
            .collect();
        let node = state.tree().node(id);
        writeln!(
            out,
            "  n{id} [label=\"{}\", tooltip=\"node {id}, level {}, {} words\"];",
            label.join("\\n"),
            node.level(),
            node.n_words()
        )
        .expect("writing to a String");
        if let Some(parent) = node.parent() {
            if !(opts.dot_hide_root && parent == root) {
                writeln!(out, "  n{parent} -> n{id};").expect("writing to a String");
            }
        }
    }
    out.push_str("}\n");
    Ok(out)
}
