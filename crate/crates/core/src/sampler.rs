//! Positive pairs and the four kinds of negatives drawn from the graph.
//!
//! For a positive `(x, i)` (image `x` of node `i`):
//!
//! - `VisMismatch`: an image outside `images(i)`, paired with `i`'s text.
//! - `SemMismatch`: a node `j` whose images do not include `x`. Ancestors of
//!   `i` always contain `x`, so they are excluded automatically.
//! - `SemHard`: a leaf `j` showing an image among `x`'s nearest visual
//!   neighbours, with `x ∉ images(j)`.
//! - `DgHard`: a sibling `j` of `i` (shares a parent) with `x ∉ images(j)`.
//!
//! Each kind is sampled without replacement. When a kind has fewer legal
//! candidates than requested, the batch records the shortfall.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::FeatureStore;
use crate::error::{Error, Result};
use crate::graph::{DenotationGraph, ImageIdx, NodeId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NegativeKind {
    VisMismatch,
    SemMismatch,
    SemHard,
    DgHard,
}

impl NegativeKind {
    pub const ALL: [NegativeKind; 4] = [
        NegativeKind::VisMismatch,
        NegativeKind::SemMismatch,
        NegativeKind::SemHard,
        NegativeKind::DgHard,
    ];
}

impl fmt::Display for NegativeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Requested negatives per kind, in `NegativeKind::ALL` order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegativeCounts(pub [usize; 4]);

impl NegativeCounts {
    pub fn uniform(n: usize) -> Self {
        NegativeCounts([n; 4])
    }

    pub fn get(&self, kind: NegativeKind) -> usize {
        self.0[kind as usize]
    }

    pub fn set(mut self, kind: NegativeKind, n: usize) -> Self {
        self.0[kind as usize] = n;
        self
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }
}

impl Default for NegativeCounts {
    fn default() -> Self {
        NegativeCounts::uniform(1)
    }
}

impl FromStr for NegativeCounts {
    type Err = Error;

    /// `v,s,h,d`
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(Error::Config(format!("expected four counts v,s,h,d, got '{}'", s)));
        }
        let mut out = [0; 4];
        for (slot, p) in out.iter_mut().zip(parts) {
            *slot = p
                .parse()
                .map_err(|_| Error::Config(format!("bad negative count '{}'", p)))?;
        }
        Ok(NegativeCounts(out))
    }
}

impl fmt::Display for NegativeCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [v, s, h, d] = self.0;
        write!(f, "{},{},{},{}", v, s, h, d)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Negative {
    pub image: String,
    pub node: NodeId,
    pub kind: NegativeKind,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingBatch {
    pub positive_image: String,
    pub positive_node: NodeId,
    pub negatives: Vec<Negative>,
    /// Requested minus delivered, per kind.
    pub shortfall: NegativeCounts,
    pub rng_seed: u64,
}

impl TrainingBatch {
    pub fn has_shortfall(&self) -> bool {
        self.shortfall.total() > 0
    }

    pub fn of_kind(&self, kind: NegativeKind) -> impl Iterator<Item = &Negative> + '_ {
        self.negatives.iter().filter(move |n| n.kind == kind)
    }
}

/// Exact cosine k-nearest neighbours over a feature store.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityIndex {
    k: usize,
    neighbors: BTreeMap<String, Vec<(String, f64)>>,
}

impl SimilarityIndex {
    /// Neighbours are sorted by decreasing similarity, ties by ascending id.
    pub fn build(features: &FeatureStore, k: usize) -> Result<Self> {
        let n = features.len();
        if n < 2 || k == 0 || k >= n {
            return Err(Error::InvalidK { k, n });
        }
        let items: Vec<(&str, Vec<f64>, f64)> = features
            .iter()
            .map(|f| {
                let v = f.vector_f64();
                let sq: f64 = v.iter().map(|x| x * x).sum();
                (f.image_id.as_str(), v, sq)
            })
            .collect();
        if let Some((id, _, _)) = items.iter().find(|(_, _, sq)| *sq == 0.0) {
            return Err(Error::ZeroNorm(id.to_string()));
        }

        let mut neighbors = BTreeMap::new();
        for (qi, (qid, qv, qsq)) in items.iter().enumerate() {
            let mut scored: Vec<(&str, f64)> = items
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != qi)
                .map(|(_, (id, v, sq))| {
                    let dot: f64 = qv.iter().zip(v).map(|(a, b)| a * b).sum();
                    (*id, (dot / (qsq * sq).sqrt()).clamp(-1.0, 1.0))
                })
                .collect();
            scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
            scored.truncate(k);
            neighbors.insert(
                qid.to_string(),
                scored.into_iter().map(|(id, s)| (id.to_string(), s)).collect(),
            );
        }
        Ok(SimilarityIndex { k, neighbors })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn neighbors(&self, image_id: &str) -> Result<&[(String, f64)]> {
        self.neighbors
            .get(image_id)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownImage(image_id.to_string()))
    }
}

/// Legal candidates for each negative kind, sorted ascending.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Candidates {
    pub vis: Vec<ImageIdx>,
    pub sem: Vec<NodeId>,
    pub hard: Vec<NodeId>,
    pub dg: Vec<NodeId>,
}

/// Enumerate every legal negative for the positive `(image, node)`.
pub fn candidates(
    graph: &DenotationGraph,
    index: &SimilarityIndex,
    node: NodeId,
    image: &str,
) -> Result<Candidates> {
    let target = graph.node(node)?;
    let x = graph
        .image_index(image)
        .ok_or_else(|| Error::UnknownImage(image.to_string()))?;
    if !target.images.contains(&x) {
        return Err(Error::ImageNotInNode {
            image: image.to_string(),
            node,
        });
    }
    let ancestors = graph.ancestors(node)?;
    let lacks_x = |j: NodeId| !graph.nodes()[j].images.contains(&x);

    let vis = (0..graph.image_ids().len() as ImageIdx)
        .filter(|i| !target.images.contains(i))
        .collect();

    let sem = (0..graph.len())
        .filter(|&j| j != node && !ancestors.contains(&j) && lacks_x(j))
        .collect();

    let similar: BTreeSet<ImageIdx> = index
        .neighbors(image)?
        .iter()
        .filter_map(|(id, _)| graph.image_index(id))
        .collect();
    let hard = graph
        .leaves()
        .map(|n| n.id)
        .filter(|&j| {
            j != node
                && !ancestors.contains(&j)
                && lacks_x(j)
                && !graph.nodes()[j].images.is_disjoint(&similar)
        })
        .collect();

    let dg = graph
        .siblings(node)?
        .into_iter()
        .filter(|&j| lacks_x(j))
        .collect();

    Ok(Candidates { vis, sem, hard, dg })
}

/// Draw one positive's negative set.
pub fn sample_batch(
    graph: &DenotationGraph,
    index: &SimilarityIndex,
    node: NodeId,
    image: &str,
    counts: NegativeCounts,
    seed: u64,
) -> Result<TrainingBatch> {
    let cands = candidates(graph, index, node, image)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut negatives = Vec::with_capacity(counts.total());
    let mut shortfall = NegativeCounts::uniform(0);

    for kind in NegativeKind::ALL {
        let want = counts.get(kind);
        let before = negatives.len();
        match kind {
            NegativeKind::VisMismatch => {
                negatives.extend(cands.vis.choose_multiple(&mut rng, want).map(|&img| Negative {
                    image: graph.image_id(img).to_string(),
                    node,
                    kind,
                }))
            }
            _ => {
                let pool = match kind {
                    NegativeKind::SemMismatch => &cands.sem,
                    NegativeKind::SemHard => &cands.hard,
                    _ => &cands.dg,
                };
                negatives.extend(pool.choose_multiple(&mut rng, want).map(|&j| Negative {
                    image: image.to_string(),
                    node: j,
                    kind,
                }))
            }
        }
        let got = negatives.len() - before;
        if got < want {
            shortfall = shortfall.set(kind, want - got);
        }
    }

    Ok(TrainingBatch {
        positive_image: image.to_string(),
        positive_node: node,
        negatives,
        shortfall,
        rng_seed: seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_captions, parse_features, HypernymLexicon};
    use crate::graph::{build, BuildOptions};

    #[test]
    fn identical_vectors_are_top_neighbours() {
        let fs = parse_features(b"a\t1,2,3\nb\t1,2,3\nc\t-1,0,0\n").unwrap();
        let idx = SimilarityIndex::build(&fs, 1).unwrap();
        assert_eq!(idx.neighbors("a").unwrap(), [("b".to_string(), 1.0)]);
        assert_eq!(idx.neighbors("b").unwrap(), [("a".to_string(), 1.0)]);
    }

    #[test]
    fn orthogonal_ties_break_by_id() {
        let fs = parse_features(b"q\t1,0,0\nz\t0,1,0\ny\t0,0,1\n").unwrap();
        let idx = SimilarityIndex::build(&fs, 1).unwrap();
        assert_eq!(idx.neighbors("q").unwrap(), [("y".to_string(), 0.0)]);
    }

    #[test]
    fn index_errors() {
        let fs = parse_features(b"a\t1,0\nb\t0,0\n").unwrap();
        assert!(matches!(SimilarityIndex::build(&fs, 1), Err(Error::ZeroNorm(ref id)) if id == "b"));
        let fs = parse_features(b"a\t1,0\nb\t0,1\n").unwrap();
        assert!(matches!(SimilarityIndex::build(&fs, 2), Err(Error::InvalidK { .. })));
        let fs = parse_features(b"a\t1,0\n").unwrap();
        assert!(SimilarityIndex::build(&fs, 1).is_err());
    }

    fn parent_with_two_children() -> (DenotationGraph, SimilarityIndex) {
        // "dog" is the parent of "dog run" (img1) and "dog sit" (img2)
        let corpus = parse_captions(
            "img1\ts\tdog|dog|NN|B-NP runs|run|VBZ|B-VP\nimg2\ts\tdog|dog|NN|B-NP sits|sit|VBZ|B-VP\n",
        )
        .unwrap();
        let g = build(&corpus, &HypernymLexicon::new(), &BuildOptions::default()).unwrap();
        let fs = parse_features(b"img1\t1,0\nimg2\t0,1\n").unwrap();
        (g, SimilarityIndex::build(&fs, 1).unwrap())
    }

    #[test]
    fn dg_hard_is_the_sibling() {
        let (g, idx) = parent_with_two_children();
        let a = g.find("dog run").unwrap();
        let b = g.find("dog sit").unwrap();
        let batch = sample_batch(&g, &idx, a, "img1", NegativeCounts::uniform(1), 7).unwrap();
        let dg: Vec<_> = batch.of_kind(NegativeKind::DgHard).collect();
        assert_eq!(dg.len(), 1);
        assert_eq!(dg[0].node, b);
        assert_eq!(dg[0].image, "img1");
    }

    #[test]
    fn exhausted_visual_pool_flags_shortfall() {
        let (g, idx) = parent_with_two_children();
        let root = g.find("dog").unwrap();
        // every image belongs to "dog"
        let batch = sample_batch(&g, &idx, root, "img1", NegativeCounts::uniform(1), 7).unwrap();
        assert_eq!(batch.of_kind(NegativeKind::VisMismatch).count(), 0);
        assert_eq!(batch.shortfall.get(NegativeKind::VisMismatch), 1);
        assert!(batch.has_shortfall());
    }

    #[test]
    fn unknown_inputs() {
        let (g, idx) = parent_with_two_children();
        assert!(matches!(
            sample_batch(&g, &idx, 99, "img1", NegativeCounts::default(), 0),
            Err(Error::UnknownNode(99))
        ));
        let a = g.find("dog run").unwrap();
        // img2 is not an image of "dog run"
        assert!(matches!(
            sample_batch(&g, &idx, a, "img2", NegativeCounts::default(), 0),
            Err(Error::ImageNotInNode { .. })
        ));
    }

    #[test]
    fn same_seed_same_batch() {
        let (g, idx) = parent_with_two_children();
        let a = g.find("dog run").unwrap();
        let counts = NegativeCounts([3, 3, 3, 3]);
        let b1 = sample_batch(&g, &idx, a, "img1", counts, 11).unwrap();
        let b2 = sample_batch(&g, &idx, a, "img1", counts, 11).unwrap();
        assert_eq!(b1, b2);
    }

    #[test]
    fn counts_parse() {
        assert_eq!("1,2,0,4".parse::<NegativeCounts>().unwrap(), NegativeCounts([1, 2, 0, 4]));
        assert!("1,2,3".parse::<NegativeCounts>().is_err());
        assert_eq!(NegativeCounts([1, 2, 0, 4]).to_string(), "1,2,0,4");
    }
}
