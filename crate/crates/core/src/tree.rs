//! Fixed-depth nested CRP tree.
//!
//! Every node is a restaurant whose customers are the words routed through
//! it, and it carries the document-id counts of the tokens allocated to it
//! (the collapsed per-node multinomial over documents). The root is shared by
//! all words; choices start at level 1.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use crate::corpus::DocId;
use crate::error::{Error, Result};
use crate::likelihood::LevelDocCounts;

/// Stable node identifier. Ids are handed out monotonically and never reused.
pub type NodeId = u64;

pub type DocCounts = BTreeMap<DocId, u32>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub(crate) id: NodeId,
    pub(crate) parent: Option<NodeId>,
    pub(crate) level: usize,
    pub(crate) children: Vec<NodeId>,
    pub(crate) n_words: u32,
    pub(crate) doc_counts: DocCounts,
    pub(crate) doc_total: u64,
}

impl Node {
    fn new(id: NodeId, parent: Option<NodeId>, level: usize) -> Self {
        Node {
            id,
            parent,
            level,
            children: Vec::new(),
            n_words: 0,
            doc_counts: DocCounts::new(),
            doc_total: 0,
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn parent(&self) -> Option<NodeId> {
        self.parent
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn children(&self) -> &[NodeId] {
        &self.children
    }

    /// Words whose path passes through this node.
    pub fn n_words(&self) -> u32 {
        self.n_words
    }

    pub fn doc_counts(&self) -> &DocCounts {
        &self.doc_counts
    }

    pub fn doc_count(&self, doc: DocId) -> u32 {
        self.doc_counts.get(&doc).copied().unwrap_or(0)
    }

    pub fn doc_total(&self) -> u64 {
        self.doc_total
    }

    fn add_docs(&mut self, docs: &[(DocId, u32)]) {
        for &(d, c) in docs {
            *self.doc_counts.entry(d).or_insert(0) += c;
            self.doc_total += u64::from(c);
        }
    }

    fn remove_docs(&mut self, docs: &[(DocId, u32)]) {
        for &(d, c) in docs {
            let slot = self.doc_counts.get_mut(&d).unwrap_or_else(|| {
                panic!("node {}: removing doc {d} which has no count", self.id)
            });
            assert!(
                *slot >= c,
                "node {}: doc {d} count {} would go below zero (removing {c})",
                self.id,
                *slot
            );
            *slot -= c;
            if *slot == 0 {
                self.doc_counts.remove(&d);
            }
            self.doc_total -= u64::from(c);
        }
    }
}

/// One step below the root on a candidate path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Step {
    Existing(NodeId),
    New,
}

/// A root-to-leaf route a detached word could take, with its nCRP log prior.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePath {
    /// Steps for levels 1..L. Once a step is `New` every deeper step is `New`.
    pub steps: Vec<Step>,
    pub log_prior: f64,
}

impl CandidatePath {
    /// The existing node at `level`, if any. Level 0 is always the root.
    pub fn node_at(&self, tree: &Tree, level: usize) -> Option<NodeId> {
        if level == 0 {
            return Some(tree.root);
        }
        match self.steps[level - 1] {
            Step::Existing(id) => Some(id),
            Step::New => None,
        }
    }
}

/// Violation found by [`Tree::assert_consistency`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Inconsistency {
    pub node: NodeId,
    pub field: &'static str,
    pub detail: String,
}

impl fmt::Display for Inconsistency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "node {} {}: {}", self.node, self.field, self.detail)
    }
}

impl std::error::Error for Inconsistency {}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tree {
    nodes: BTreeMap<NodeId, Node>,
    root: NodeId,
    depth: usize,
    next_id: NodeId,
}

impl Tree {
    /// A bare root. `depth` is the number of levels L, counting the root.
    pub fn new(depth: usize) -> Self {
        assert!(depth >= 1, "tree depth must be at least 1");
        let mut nodes = BTreeMap::new();
        nodes.insert(0, Node::new(0, None, 0));
        Tree {
            nodes,
            root: 0,
            depth,
            next_id: 1,
        }
    }

    /// Reassembles a tree from stored nodes, checking every invariant.
    pub fn from_parts(
        depth: usize,
        root: NodeId,
        next_id: NodeId,
        nodes: impl IntoIterator<Item = Node>,
    ) -> std::result::Result<Self, Inconsistency> {
        let tree = Tree {
            nodes: nodes.into_iter().map(|n| (n.id, n)).collect(),
            root,
            depth,
            next_id,
        };
        tree.assert_consistency()?;
        Ok(tree)
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn root_id(&self) -> NodeId {
        self.root
    }

    pub fn root(&self) -> &Node {
        self.node(self.root)
    }

    pub fn next_id(&self) -> NodeId {
        self.next_id
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.root().n_words == 0
    }

    pub fn get(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(&id)
    }

    /// Panics if `id` is not live.
    pub fn node(&self, id: NodeId) -> &Node {
        self.nodes
            .get(&id)
            .unwrap_or_else(|| panic!("node {id} is not in the tree"))
    }

    fn node_mut(&mut self, id: NodeId) -> &mut Node {
        self.nodes
            .get_mut(&id)
            .unwrap_or_else(|| panic!("node {id} is not in the tree"))
    }

    /// Nodes in id order.
    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    /// Node ids in breadth-first order, children in insertion order.
    pub fn bfs(&self) -> Vec<NodeId> {
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut queue = VecDeque::from([self.root]);
        while let Some(id) = queue.pop_front() {
            order.push(id);
            queue.extend(self.node(id).children.iter().copied());
        }
        order
    }

    /// Every way a detached word can descend the tree, with its nCRP prior.
    ///
    /// One candidate per existing leaf plus one per internal node (branching
    /// off to a fresh child there, all fresh below). Candidates come out in
    /// depth-first order, and at each node the fresh branch follows the
    /// existing children.
    pub fn enumerate_candidates(&self, gamma: f64) -> Vec<CandidatePath> {
        let mut out = Vec::new();
        let mut steps = Vec::with_capacity(self.depth.saturating_sub(1));
        self.collect_candidates(self.root, gamma, 0.0, &mut steps, &mut out);
        out
    }

    fn collect_candidates(
        &self,
        id: NodeId,
        gamma: f64,
        log_prior: f64,
        steps: &mut Vec<Step>,
        out: &mut Vec<CandidatePath>,
    ) {
        let node = self.node(id);
        if node.level + 1 == self.depth {
            out.push(CandidatePath {
                steps: steps.clone(),
                log_prior,
            });
            return;
        }
        let denom = f64::from(node.n_words) + gamma;
        for &child in &node.children {
            let m = f64::from(self.node(child).n_words);
            steps.push(Step::Existing(child));
            self.collect_candidates(child, gamma, log_prior + (m / denom).ln(), steps, out);
            steps.pop();
        }
        let fresh = self.depth - 1 - node.level;
        let mut new_steps = steps.clone();
        new_steps.extend(std::iter::repeat_n(Step::New, fresh));
        out.push(CandidatePath {
            steps: new_steps,
            log_prior: log_prior + (gamma / denom).ln(),
        });
    }

    /// Attaches a detached word along `candidate`, creating nodes for `New`
    /// steps, and adds its per-level document counts. Returns the L node ids
    /// of the path. The tree is left untouched on error.
    pub fn attach_word(
        &mut self,
        candidate: &CandidatePath,
        counts: &LevelDocCounts,
    ) -> Result<Vec<NodeId>> {
        if candidate.steps.len() + 1 != self.depth || counts.depth() != self.depth {
            return Err(Error::Value(format!(
                "candidate/count depth mismatch for a depth-{} tree",
                self.depth
            )));
        }
        let mut parent = self.root;
        let mut seen_new = false;
        for step in &candidate.steps {
            match *step {
                Step::Existing(id) => {
                    if seen_new {
                        return Err(Error::Value("existing node below a new branch".into()));
                    }
                    match self.nodes.get(&id) {
                        Some(n) if n.parent == Some(parent) => parent = id,
                        _ => return Err(Error::StaleCandidate(id)),
                    }
                }
                Step::New => seen_new = true,
            }
        }

        let mut path = Vec::with_capacity(self.depth);
        path.push(self.root);
        for (i, step) in candidate.steps.iter().enumerate() {
            let id = match *step {
                Step::Existing(id) => id,
                Step::New => {
                    let id = self.next_id;
                    self.next_id += 1;
                    let parent = *path.last().expect("path starts at root");
                    self.nodes.insert(id, Node::new(id, Some(parent), i + 1));
                    self.node_mut(parent).children.push(id);
                    id
                }
            };
            path.push(id);
        }
        for (level, &id) in path.iter().enumerate() {
            let node = self.node_mut(id);
            node.n_words += 1;
            node.add_docs(counts.level(level));
        }
        Ok(path)
    }

    /// Removes a word's counts from `path` and prunes nodes left without
    /// customers. Panics on any count underflow.
    pub fn detach_word(&mut self, path: &[NodeId], counts: &LevelDocCounts) {
        assert_eq!(path.len(), self.depth, "path length must equal tree depth");
        assert_eq!(path[0], self.root, "path must start at the root");
        for (level, &id) in path.iter().enumerate() {
            let node = self.node_mut(id);
            assert!(node.n_words > 0, "node {id}: n_words would go below zero");
            node.n_words -= 1;
            node.remove_docs(counts.level(level));
        }
        // Deepest first, so a pruned node has already lost its empty children.
        for &id in path[1..].iter().rev() {
            if self.node(id).n_words == 0 {
                let node = self.nodes.remove(&id).expect("checked above");
                assert!(
                    node.children.is_empty() && node.doc_total == 0,
                    "node {id}: pruned with {} children and {} document counts left",
                    node.children.len(),
                    node.doc_total
                );
                let parent = node.parent.expect("non-root node has a parent");
                self.node_mut(parent).children.retain(|&c| c != id);
            }
        }
    }

    /// Moves one token of document `doc` onto node `id`.
    pub fn add_token(&mut self, id: NodeId, doc: DocId) {
        self.node_mut(id).add_docs(&[(doc, 1)]);
    }

    /// Takes one token of document `doc` off node `id`. Panics on underflow.
    pub fn remove_token(&mut self, id: NodeId, doc: DocId) {
        self.node_mut(id).remove_docs(&[(doc, 1)]);
    }

    /// Checks every structural and count invariant, recomputing customer and
    /// document totals from scratch.
    pub fn assert_consistency(&self) -> std::result::Result<(), Inconsistency> {
        let bad = |node: NodeId, field: &'static str, detail: String| {
            Err(Inconsistency {
                node,
                field,
                detail,
            })
        };

        let Some(root) = self.nodes.get(&self.root) else {
            return bad(self.root, "root", "root node missing".into());
        };
        if root.level != 0 || root.parent.is_some() {
            return bad(self.root, "root", "root must be level 0 without parent".into());
        }

        let mut reached = 0usize;
        let mut queue = VecDeque::from([self.root]);
        while let Some(id) = queue.pop_front() {
            let Some(node) = self.nodes.get(&id) else {
                return bad(id, "children", "listed as a child but missing".into());
            };
            reached += 1;
            if node.id != id {
                return bad(id, "id", format!("stored under {id} but carries {}", node.id));
            }
            if id >= self.next_id {
                return bad(id, "id", format!("not below next_id {}", self.next_id));
            }
            if node.level >= self.depth {
                return bad(id, "level", format!("{} exceeds depth {}", node.level, self.depth));
            }
            if id != self.root && node.n_words == 0 {
                return bad(id, "n_words", "non-root node without customers".into());
            }
            let sum: u64 = node.doc_counts.values().map(|&c| u64::from(c)).sum();
            if sum != node.doc_total {
                return bad(
                    id,
                    "doc_total",
                    format!("stored {} but counts sum to {sum}", node.doc_total),
                );
            }
            if let Some((d, _)) = node.doc_counts.iter().find(|(_, &c)| c == 0) {
                return bad(id, "doc_counts", format!("zero entry for doc {d}"));
            }

            if node.level + 1 == self.depth {
                if !node.children.is_empty() {
                    return bad(id, "children", "leaf-level node has children".into());
                }
                continue;
            }
            let mut child_words = 0u64;
            for (i, &c) in node.children.iter().enumerate() {
                if node.children[..i].contains(&c) {
                    return bad(id, "children", format!("child {c} listed twice"));
                }
                let Some(child) = self.nodes.get(&c) else {
                    return bad(c, "children", format!("child of {id} is missing"));
                };
                if child.parent != Some(id) {
                    return bad(c, "parent", format!("expected {id}, found {:?}", child.parent));
                }
                if child.level != node.level + 1 {
                    return bad(
                        c,
                        "level",
                        format!("{} under a level-{} parent", child.level, node.level),
                    );
                }
                child_words += u64::from(child.n_words);
                queue.push_back(c);
            }
            if child_words != u64::from(node.n_words) {
                return bad(
                    id,
                    "n_words",
                    format!("stored {} but children sum to {child_words}", node.n_words),
                );
            }
        }
        if reached != self.nodes.len() {
            let orphan = self
                .nodes
                .keys()
                .copied()
                .find(|&id| self.depth_of(id).is_none())
                .unwrap_or(self.root);
            return bad(orphan, "parent", "node not reachable from root".into());
        }
        Ok(())
    }

    fn depth_of(&self, mut id: NodeId) -> Option<usize> {
        let mut d = 0;
        while id != self.root {
            let parent = self.nodes.get(&id)?.parent?;
            if !self.nodes.get(&parent)?.children.contains(&id) {
                return None;
            }
            id = parent;
            d += 1;
            if d > self.depth {
                return None;
            }
        }
        Some(d)
    }
}
