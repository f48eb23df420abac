//! The denotation graph: one node per canonical expression, edges from more
//! generic to more specific expressions, image sets attached bottom-up.
//!
//! The graph is a DAG. Rule-generated derivations routinely produce diamonds
//! (two abstractions of a sentence sharing a further abstraction), so nodes
//! may have several parents and undirected cycles are allowed.
//!
//! A caption whose canonical form coincides with an abstraction of another
//! caption becomes a node with both children and images of its own. Image
//! sets therefore satisfy `images(i) = own(i) ∪ ⋃ images(children(i))`,
//! where `own(i)` is empty for every node that is not a caption.

mod io;
mod stats;

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use rayon::prelude::*;

use crate::corpus::{CaptionRecord, HypernymLexicon};
use crate::error::{Error, Result};
use crate::ling::{abstract_closure, Expression, RuleId, RuleSet};

pub use io::{FORMAT_VERSION, load, save};
pub use stats::{GraphStats, Split};

pub type NodeId = usize;

/// Index into [`DenotationGraph::image_ids`].
pub type ImageIdx = u32;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Node {
    pub id: NodeId,
    pub expression: Expression,
    /// Every image the expression describes.
    pub images: BTreeSet<ImageIdx>,
    /// Images whose captions normalize to this node's expression.
    pub own_images: BTreeSet<ImageIdx>,
    pub is_leaf: bool,
}

impl Node {
    pub fn norm(&self) -> &str {
        self.expression.norm()
    }

    pub fn level(&self) -> u32 {
        self.expression.level()
    }

    pub fn is_caption(&self) -> bool {
        !self.own_images.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BuildOptions {
    pub max_levels: u32,
    pub rules: RuleSet,
    pub reduce_transitive: bool,
    pub threads: usize,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            max_levels: 3,
            rules: RuleSet::all(),
            reduce_transitive: true,
            threads: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DenotationGraph {
    image_ids: Vec<String>,
    nodes: Vec<Node>,
    edges: BTreeMap<(NodeId, NodeId), RuleId>,
    children: Vec<Vec<NodeId>>,
    parents: Vec<Vec<NodeId>>,
    by_norm: HashMap<String, NodeId>,
}

impl DenotationGraph {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> Result<&Node> {
        self.nodes.get(id).ok_or(Error::UnknownNode(id))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges in lexicographic `(parent, child)` order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId, RuleId)> + '_ {
        self.edges.iter().map(|(&(p, c), &r)| (p, c, r))
    }

    pub fn has_edge(&self, parent: NodeId, child: NodeId) -> bool {
        self.edges.contains_key(&(parent, child))
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.children[id]
    }

    pub fn parents(&self, id: NodeId) -> &[NodeId] {
        &self.parents[id]
    }

    pub fn find(&self, norm: &str) -> Option<NodeId> {
        self.by_norm.get(norm).copied()
    }

    /// All image ids appearing in the graph, sorted.
    pub fn image_ids(&self) -> &[String] {
        &self.image_ids
    }

    pub fn image_id(&self, idx: ImageIdx) -> &str {
        &self.image_ids[idx as usize]
    }

    pub fn image_index(&self, image_id: &str) -> Option<ImageIdx> {
        self.image_ids
            .binary_search_by(|s| s.as_str().cmp(image_id))
            .ok()
            .map(|i| i as ImageIdx)
    }

    pub fn node_image_ids(&self, id: NodeId) -> impl Iterator<Item = &str> + '_ {
        self.nodes[id].images.iter().map(|&i| self.image_id(i))
    }

    pub fn leaves(&self) -> impl Iterator<Item = &Node> + '_ {
        self.nodes.iter().filter(|n| n.is_leaf)
    }

    /// Nodes sharing at least one parent with `id`, excluding `id`.
    pub fn siblings(&self, id: NodeId) -> Result<BTreeSet<NodeId>> {
        self.node(id)?;
        Ok(self.parents[id]
            .iter()
            .flat_map(|&p| self.children[p].iter().copied())
            .filter(|&j| j != id)
            .collect())
    }

    pub fn ancestors(&self, id: NodeId) -> Result<BTreeSet<NodeId>> {
        self.node(id)?;
        Ok(self.reach(id, &self.parents))
    }

    pub fn descendants(&self, id: NodeId) -> Result<BTreeSet<NodeId>> {
        self.node(id)?;
        Ok(self.reach(id, &self.children))
    }

    fn reach(&self, start: NodeId, adj: &[Vec<NodeId>]) -> BTreeSet<NodeId> {
        let mut seen = BTreeSet::new();
        let mut queue: VecDeque<NodeId> = adj[start].iter().copied().collect();
        while let Some(n) = queue.pop_front() {
            if seen.insert(n) {
                queue.extend(adj[n].iter().copied());
            }
        }
        seen
    }

    /// The subgraph seen through a subset of the images: image sets are
    /// intersected with `keep` and nodes left without images are dropped.
    /// Node ids are renumbered densely in the original order.
    pub fn restrict_images(&self, keep: &BTreeSet<String>) -> Result<DenotationGraph> {
        let image_ids: Vec<String> = self
            .image_ids
            .iter()
            .filter(|id| keep.contains(*id))
            .cloned()
            .collect();
        let remap: HashMap<ImageIdx, ImageIdx> = self
            .image_ids
            .iter()
            .enumerate()
            .filter(|(_, id)| keep.contains(*id))
            .enumerate()
            .map(|(new, (old, _))| (old as ImageIdx, new as ImageIdx))
            .collect();
        let map_set = |s: &BTreeSet<ImageIdx>| -> BTreeSet<ImageIdx> {
            s.iter().filter_map(|i| remap.get(i).copied()).collect()
        };

        let mut new_id = vec![None; self.nodes.len()];
        let mut nodes = Vec::new();
        for node in &self.nodes {
            let images = map_set(&node.images);
            if images.is_empty() {
                continue;
            }
            new_id[node.id] = Some(nodes.len());
            nodes.push(Node {
                id: nodes.len(),
                expression: node.expression.clone(),
                images,
                own_images: map_set(&node.own_images),
                is_leaf: false,
            });
        }
        // a node without images has no descendants with images, so no path
        // through a dropped node is lost
        let edges = self
            .edges
            .iter()
            .filter_map(|(&(p, c), &r)| Some(((new_id[p]?, new_id[c]?), r)))
            .collect();
        DenotationGraph::from_parts(image_ids, nodes, edges)
    }

    /// Kahn order, parents before children.
    pub fn topological_order(&self) -> Result<Vec<NodeId>> {
        topo_sort(self.nodes.len(), &self.children, &self.parents)
    }

    /// Assemble a graph from already-attached nodes and edges, recomputing
    /// adjacency and leaf flags. Node ids must be dense and in order.
    pub(crate) fn from_parts(
        image_ids: Vec<String>,
        mut nodes: Vec<Node>,
        edges: BTreeMap<(NodeId, NodeId), RuleId>,
    ) -> Result<Self> {
        let n = nodes.len();
        let mut children = vec![Vec::new(); n];
        let mut parents = vec![Vec::new(); n];
        for &(p, c) in edges.keys() {
            if p >= n || c >= n {
                return Err(Error::UnknownNode(p.max(c)));
            }
            children[p].push(c);
            parents[c].push(p);
        }
        let mut by_norm = HashMap::with_capacity(n);
        for (i, node) in nodes.iter_mut().enumerate() {
            if node.id != i {
                return Err(Error::format("graph", format!("node id {} at position {}", node.id, i)));
            }
            node.is_leaf = children[i].is_empty();
            if by_norm.insert(node.norm().to_string(), i).is_some() {
                return Err(Error::format("graph", format!("duplicate norm '{}'", node.norm())));
            }
        }
        let g = DenotationGraph {
            image_ids,
            nodes,
            edges,
            children,
            parents,
            by_norm,
        };
        g.topological_order()?;
        Ok(g)
    }
}

fn topo_sort(n: usize, children: &[Vec<NodeId>], parents: &[Vec<NodeId>]) -> Result<Vec<NodeId>> {
    let mut indeg: Vec<usize> = parents.iter().map(Vec::len).collect();
    let mut queue: VecDeque<NodeId> = (0..n).filter(|&i| indeg[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(v) = queue.pop_front() {
        order.push(v);
        for &c in &children[v] {
            indeg[c] -= 1;
            if indeg[c] == 0 {
                queue.push_back(c);
            }
        }
    }
    if order.len() != n {
        return Err(Error::Cycle);
    }
    Ok(order)
}

/// Drop every edge `(a, c)` for which a longer path `a -> b -> ... -> c` exists.
fn transitive_reduction(n: usize, edges: &mut BTreeMap<(NodeId, NodeId), RuleId>) {
    let mut children = vec![Vec::new(); n];
    for &(p, c) in edges.keys() {
        children[p].push(c);
    }
    let mut redundant = Vec::new();
    let mut seen = vec![usize::MAX; n];
    for a in 0..n {
        if children[a].len() < 2 {
            continue;
        }
        // everything reachable from a by a path of length >= 2
        let mut stack: Vec<NodeId> = children[a]
            .iter()
            .flat_map(|&b| children[b].iter().copied())
            .collect();
        while let Some(v) = stack.pop() {
            if seen[v] == a {
                continue;
            }
            seen[v] = a;
            stack.extend(children[v].iter().copied());
        }
        redundant.extend(children[a].iter().filter(|&&c| seen[c] == a).map(|&c| (a, c)));
    }
    for e in redundant {
        edges.remove(&e);
    }
}

/// Build a denotation graph from tagged captions.
pub fn build(
    corpus: &[CaptionRecord],
    lexicon: &HypernymLexicon,
    opts: &BuildOptions,
) -> Result<DenotationGraph> {
    // distinct sentences, each with every image it describes
    let mut sentences: BTreeMap<String, (Expression, BTreeSet<String>)> = BTreeMap::new();
    for rec in corpus {
        let expr = Expression::from_caption(rec)?;
        sentences
            .entry(expr.norm().to_string())
            .or_insert_with(|| (expr, BTreeSet::new()))
            .1
            .insert(rec.image_id.clone());
    }

    let roots: Vec<&Expression> = sentences.values().map(|(e, _)| e).collect();
    let closure_of = |e: &&Expression| abstract_closure(e, lexicon, &opts.rules, opts.max_levels);
    let closures = if opts.threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.threads)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        pool.install(|| roots.par_iter().map(closure_of).collect::<Vec<_>>())
    } else {
        roots.iter().map(closure_of).collect::<Vec<_>>()
    };

    // merge; the lowest level wins, ties keep the first sentence in norm order
    let mut merged: BTreeMap<String, Expression> = BTreeMap::new();
    let mut derivations: BTreeMap<(String, String), RuleId> = BTreeMap::new();
    for closure in closures {
        for (norm, expr) in closure.expressions {
            match merged.get(&norm) {
                Some(existing) if existing.level() <= expr.level() => {}
                _ => {
                    merged.insert(norm, expr);
                }
            }
        }
        for (key, rule) in closure.derivations {
            derivations
                .entry(key)
                .and_modify(|r| *r = (*r).min(rule))
                .or_insert(rule);
        }
    }

    let image_ids: Vec<String> = corpus
        .iter()
        .map(|r| r.image_id.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let image_idx = |id: &str| image_ids.binary_search_by(|s| s.as_str().cmp(id)).unwrap() as ImageIdx;

    let mut ordered: Vec<Expression> = merged.into_values().collect();
    ordered.sort_by(|a, b| a.level().cmp(&b.level()).then_with(|| a.norm().cmp(b.norm())));
    let ids: HashMap<&str, NodeId> = ordered
        .iter()
        .enumerate()
        .map(|(i, e)| (e.norm(), i))
        .collect();

    let mut edges: BTreeMap<(NodeId, NodeId), RuleId> = derivations
        .iter()
        .map(|((p, c), &r)| ((ids[p.as_str()], ids[c.as_str()]), r))
        .collect();
    let n = ordered.len();
    if opts.reduce_transitive {
        transitive_reduction(n, &mut edges);
    }

    let mut nodes: Vec<Node> = ordered
        .iter()
        .enumerate()
        .map(|(id, e)| {
            let own_images = sentences
                .get(e.norm())
                .map(|(_, imgs)| imgs.iter().map(|s| image_idx(s)).collect())
                .unwrap_or_default();
            Node {
                id,
                expression: e.clone(),
                images: BTreeSet::new(),
                own_images,
                is_leaf: false,
            }
        })
        .collect();

    let mut children = vec![Vec::new(); n];
    let mut parents = vec![Vec::new(); n];
    for &(p, c) in edges.keys() {
        children[p].push(c);
        parents[c].push(p);
    }
    let order = topo_sort(n, &children, &parents)?;
    // children before parents
    for &v in order.iter().rev() {
        let mut images = nodes[v].own_images.clone();
        for &c in &children[v] {
            images.extend(nodes[c].images.iter().copied());
        }
        nodes[v].images = images;
    }

    DenotationGraph::from_parts(image_ids, nodes, edges)
}
