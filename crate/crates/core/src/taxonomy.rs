//! Semantic tree of scene classes.
//!
//! Nodes are stored in document (pre-order) order, so a parent always
//! precedes its children and every traversal order derives from the file.

use std::collections::HashMap;
use std::fmt::Write as _;

use sha2::{Digest, Sha256};
use thiserror::Error;

/// The food-related scene tree shipped with the crate.
pub const DEFAULT_TAXONOMY: &str = include_str!("../data/food_scenes.taxonomy");

/// Position of a node inside [`Taxonomy::nodes`].
pub type NodeIndex = usize;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TaxonomyError {
    #[error("empty taxonomy document")]
    Empty,
    #[error("multiple roots: {first:?} and {second:?} (line {line})")]
    MultipleRoots {
        first: String,
        second: String,
        line: usize,
    },
    #[error("inconsistent indentation at line {line}: {reason}")]
    Indentation { line: usize, reason: String },
    #[error("duplicate node id {0:?}")]
    DuplicateId(String),
    #[error("orphan node {node:?}: parent {parent:?} does not exist")]
    Orphan { node: String, parent: String },
    #[error("cycle through node {0:?}")]
    Cycle(String),
    #[error("unknown node {0:?}")]
    UnknownNode(String),
    #[error("{0:?} is not a leaf")]
    NotALeaf(String),
    #[error("level {level} exceeds depth {depth} of {node:?}")]
    LevelTooDeep {
        node: String,
        level: usize,
        depth: usize,
    },
    #[error("level {level} out of range 0..={max}")]
    LevelOutOfRange { level: usize, max: usize },
}

/// Converts a display name into a node id: lowercase, spaces become hyphens.
pub fn node_id_for(name: &str) -> String {
    name.trim()
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join("-")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaxonomyNode {
    pub id: String,
    pub name: String,
    pub parent: Option<NodeIndex>,
    pub children: Vec<NodeIndex>,
    pub depth: usize,
}

impl TaxonomyNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

/// Immutable rooted tree. Index 0 is always the root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Taxonomy {
    nodes: Vec<TaxonomyNode>,
    index: HashMap<String, NodeIndex>,
    leaves: Vec<NodeIndex>,
    max_depth: usize,
}

impl Taxonomy {
    /// The built-in food-scene tree.
    pub fn food_scenes() -> Taxonomy {
        Taxonomy::parse(DEFAULT_TAXONOMY).expect("bundled taxonomy is valid")
    }

    /// Parses the indented text format (two spaces per level, `#` comments).
    pub fn parse(text: &str) -> Result<Taxonomy, TaxonomyError> {
        let mut nodes: Vec<TaxonomyNode> = Vec::new();
        let mut index = HashMap::new();
        // stack[d] = most recent node seen at depth d
        let mut stack: Vec<NodeIndex> = Vec::new();

        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let content = raw.trim_end();
            let trimmed = content.trim_start();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let indent = &content[..content.len() - trimmed.len()];
            if indent.chars().any(|c| c != ' ') {
                return Err(TaxonomyError::Indentation {
                    line: line_no,
                    reason: "only spaces may indent".into(),
                });
            }
            if indent.len() % 2 != 0 {
                return Err(TaxonomyError::Indentation {
                    line: line_no,
                    reason: format!("{} spaces is not a multiple of two", indent.len()),
                });
            }
            let depth = indent.len() / 2;
            let name = trimmed.to_string();
            let id = node_id_for(&name);

            if depth == 0 && !nodes.is_empty() {
                return Err(TaxonomyError::MultipleRoots {
                    first: nodes[0].id.clone(),
                    second: id,
                    line: line_no,
                });
            }
            if depth > stack.len() {
                return Err(TaxonomyError::Indentation {
                    line: line_no,
                    reason: format!(
                        "depth {depth} skips a level (previous depth {})",
                        stack.len().saturating_sub(1)
                    ),
                });
            }
            if index.contains_key(&id) {
                return Err(TaxonomyError::DuplicateId(id));
            }

            stack.truncate(depth);
            let parent = stack.last().copied();
            let idx = nodes.len();
            if let Some(p) = parent {
                nodes[p].children.push(idx);
            }
            index.insert(id.clone(), idx);
            nodes.push(TaxonomyNode {
                id,
                name,
                parent,
                children: Vec::new(),
                depth,
            });
            stack.push(idx);
        }

        if nodes.is_empty() {
            return Err(TaxonomyError::Empty);
        }
        Ok(Taxonomy::finish(nodes, index))
    }

    /// Builds a tree from `(name, parent name)` pairs in any order.
    ///
    /// Children keep the order in which they appear in `entries`. The
    /// resulting node order is the pre-order walk from the root.
    pub fn from_parent_list<S: AsRef<str>>(entries: &[(S, Option<S>)]) -> Result<Taxonomy, TaxonomyError> {
        if entries.is_empty() {
            return Err(TaxonomyError::Empty);
        }
        let mut ids = HashMap::new();
        for (i, (name, _)) in entries.iter().enumerate() {
            let id = node_id_for(name.as_ref());
            if ids.insert(id.clone(), i).is_some() {
                return Err(TaxonomyError::DuplicateId(id));
            }
        }
        let mut root = None;
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); entries.len()];
        for (i, (name, parent)) in entries.iter().enumerate() {
            match parent {
                None => {
                    if let Some(r) = root {
                        let first: &(S, Option<S>) = &entries[r];
                        return Err(TaxonomyError::MultipleRoots {
                            first: node_id_for(first.0.as_ref()),
                            second: node_id_for(name.as_ref()),
                            line: i + 1,
                        });
                    }
                    root = Some(i);
                }
                Some(p) => {
                    let pid = node_id_for(p.as_ref());
                    let Some(&pi) = ids.get(&pid) else {
                        return Err(TaxonomyError::Orphan {
                            node: node_id_for(name.as_ref()),
                            parent: pid,
                        });
                    };
                    if pi == i {
                        return Err(TaxonomyError::Cycle(pid));
                    }
                    children[pi].push(i);
                }
            }
        }
        // Every node has at most one parent, so a node that is unreachable
        // from the root must sit on a cycle.
        let Some(root) = root else {
            let id = node_id_for(entries[0].0.as_ref());
            return Err(TaxonomyError::Cycle(id));
        };

        let mut nodes = Vec::with_capacity(entries.len());
        let mut index = HashMap::new();
        let mut stack = vec![(root, None::<NodeIndex>, 0usize)];
        while let Some((entry, parent, depth)) = stack.pop() {
            let name = entries[entry].0.as_ref().trim().to_string();
            let id = node_id_for(&name);
            let idx = nodes.len();
            if let Some(p) = parent {
                let parent_node: &mut TaxonomyNode = &mut nodes[p];
                parent_node.children.push(idx);
            }
            index.insert(id.clone(), idx);
            nodes.push(TaxonomyNode {
                id,
                name,
                parent,
                children: Vec::new(),
                depth,
            });
            for &c in children[entry].iter().rev() {
                stack.push((c, Some(idx), depth + 1));
            }
        }
        if nodes.len() != entries.len() {
            let orphan = entries
                .iter()
                .map(|(n, _)| node_id_for(n.as_ref()))
                .find(|id| !index.contains_key(id))
                .unwrap_or_default();
            return Err(TaxonomyError::Cycle(orphan));
        }
        Ok(Taxonomy::finish(nodes, index))
    }

    fn finish(nodes: Vec<TaxonomyNode>, index: HashMap<String, NodeIndex>) -> Taxonomy {
        let leaves = nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.is_leaf())
            .map(|(i, _)| i)
            .collect();
        let max_depth = nodes.iter().map(|n| n.depth).max().unwrap_or(0);
        Taxonomy {
            nodes,
            index,
            leaves,
            max_depth,
        }
    }

    /// Writes the tree back in the indented text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for node in &self.nodes {
            let _ = writeln!(out, "{}{}", "  ".repeat(node.depth), node.name);
        }
        out
    }

    /// SHA-256 of the canonical text form, hex encoded.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }

    pub fn nodes(&self) -> &[TaxonomyNode] {
        &self.nodes
    }

    pub fn node(&self, idx: NodeIndex) -> &TaxonomyNode {
        &self.nodes[idx]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> NodeIndex {
        0
    }

    pub fn leaves(&self) -> &[NodeIndex] {
        &self.leaves
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn id(&self, idx: NodeIndex) -> &str {
        &self.nodes[idx].id
    }

    /// Resolves a node id, or a display name that normalizes to one.
    pub fn index_of(&self, key: &str) -> Result<NodeIndex, TaxonomyError> {
        self.index
            .get(key)
            .or_else(|| self.index.get(&node_id_for(key)))
            .copied()
            .ok_or_else(|| TaxonomyError::UnknownNode(key.to_string()))
    }

    pub fn leaf_index(&self, key: &str) -> Result<NodeIndex, TaxonomyError> {
        let idx = self.index_of(key)?;
        if self.nodes[idx].is_leaf() {
            Ok(idx)
        } else {
            Err(TaxonomyError::NotALeaf(self.nodes[idx].id.clone()))
        }
    }

    /// Internal nodes whose children need a classifier to be told apart.
    pub fn branching_nodes(&self) -> impl Iterator<Item = NodeIndex> + '_ {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].children.len() >= 2)
    }

    /// Indices from `idx` up to the root, child before parent.
    pub fn path_indices(&self, idx: NodeIndex) -> Vec<NodeIndex> {
        let mut path = vec![idx];
        let mut cur = idx;
        while let Some(p) = self.nodes[cur].parent {
            path.push(p);
            cur = p;
        }
        path
    }

    pub fn path_to_root(&self, node: &str) -> Result<Vec<String>, TaxonomyError> {
        let idx = self.index_of(node)?;
        Ok(self
            .path_indices(idx)
            .into_iter()
            .map(|i| self.nodes[i].id.clone())
            .collect())
    }

    /// Ancestor of `node` at `level`, with shallow leaves standing in for
    /// themselves at deeper levels.
    pub fn representative_at(&self, node: NodeIndex, level: usize) -> NodeIndex {
        let mut cur = node;
        while self.nodes[cur].depth > level {
            cur = self.nodes[cur].parent.expect("non-root node has a parent");
        }
        cur
    }

    pub fn ancestor_at_level(&self, leaf: &str, level: usize) -> Result<String, TaxonomyError> {
        let idx = self.leaf_index(leaf)?;
        let depth = self.nodes[idx].depth;
        if level > depth {
            return Err(TaxonomyError::LevelTooDeep {
                node: self.nodes[idx].id.clone(),
                level,
                depth,
            });
        }
        Ok(self.nodes[self.representative_at(idx, level)].id.clone())
    }

    /// Members of a level: nodes at that depth plus shallower leaves carried
    /// down, in document order.
    pub fn level_members(&self, level: usize) -> Result<Vec<NodeIndex>, TaxonomyError> {
        if level > self.max_depth {
            return Err(TaxonomyError::LevelOutOfRange {
                level,
                max: self.max_depth,
            });
        }
        Ok((0..self.nodes.len())
            .filter(|&i| {
                let n = &self.nodes[i];
                n.depth == level || (n.is_leaf() && n.depth < level)
            })
            .collect())
    }

    pub fn nodes_at_level(&self, level: usize) -> Result<Vec<String>, TaxonomyError> {
        Ok(self
            .level_members(level)?
            .into_iter()
            .map(|i| self.nodes[i].id.clone())
            .collect())
    }

    /// Number of leaves in the subtree rooted at `idx`.
    pub fn leaf_count(&self, idx: NodeIndex) -> usize {
        let node = &self.nodes[idx];
        if node.is_leaf() {
            1
        } else {
            node.children.iter().map(|&c| self.leaf_count(c)).sum()
        }
    }

    /// The child of `ancestor` whose subtree contains `descendant`.
    pub fn child_towards(&self, ancestor: NodeIndex, descendant: NodeIndex) -> Option<NodeIndex> {
        let target_depth = self.nodes[ancestor].depth + 1;
        if self.nodes[descendant].depth < target_depth {
            return None;
        }
        let child = self.representative_at(descendant, target_depth);
        (self.nodes[child].parent == Some(ancestor)).then_some(child)
    }
}
