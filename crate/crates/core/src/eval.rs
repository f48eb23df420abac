//! Retrieval metrics and the counterfactual region-selection rule.
//!
//! Rankings sort by score descending and break ties by ascending key, so a
//! model with `theta = 0` ranks candidates in plain id order.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::FeatureStore;
use crate::error::{Error, Result};
use crate::graph::DenotationGraph;
use crate::model::MatchModel;

pub const RECALL_KS: [usize; 3] = [1, 5, 10];

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Fraction of queries with a relevant item in the top K.
    pub r_at: BTreeMap<usize, f64>,
    /// `100 * (R@1 + R@5 + R@10)`
    pub rsum: f64,
    /// Mean AP per abstraction level; empty unless computed.
    pub map_by_level: BTreeMap<u32, f64>,
}

impl Metrics {
    pub fn r(&self, k: usize) -> f64 {
        self.r_at.get(&k).copied().unwrap_or(0.0)
    }
}

/// `(key, score)` sorted by score descending, then key ascending.
pub fn sort_ranking(mut scored: Vec<(String, f64)>) -> Vec<(String, f64)> {
    // adding 0.0 folds -0.0 into 0.0 so signed zeros tie
    scored.sort_by(|a, b| (b.1 + 0.0).total_cmp(&(a.1 + 0.0)).then_with(|| a.0.cmp(&b.0)));
    scored
}

/// Rank candidate images for a text query.
pub fn rank_images(
    model: &MatchModel,
    tokens: &[usize],
    features: &FeatureStore,
    candidates: &[String],
) -> Result<Vec<(String, f64)>> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let scored = candidates
        .iter()
        .map(|id| {
            let x = features.get(id)?.vector_f64();
            Ok((id.clone(), model.score_tokens(&x, tokens)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(sort_ranking(scored))
}

/// Rank candidate texts, given as `(key, tokens)`, for an image.
pub fn rank_texts(
    model: &MatchModel,
    image: &[f64],
    candidates: &[(String, Vec<usize>)],
) -> Result<Vec<(String, f64)>> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let scored = candidates
        .iter()
        .map(|(key, tokens)| Ok((key.clone(), model.score_tokens(image, tokens)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(sort_ranking(scored))
}

/// R@K and RSUM from finished rankings. Each entry is a ranked key list and
/// the set of keys relevant to that query. K beyond the ranking length is
/// clamped to it.
pub fn recall_from_rankings(queries: &[(Vec<String>, BTreeSet<String>)]) -> Result<Metrics> {
    if queries.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let mut hits = [0usize; 3];
    let mut warned = false;
    for (ranking, relevant) in queries {
        let first = ranking
            .iter()
            .position(|k| relevant.contains(k))
            .ok_or_else(|| Error::Shape("query has no relevant candidate in its pool".into()))?;
        for (slot, &k) in hits.iter_mut().zip(&RECALL_KS) {
            if k > ranking.len() && !warned {
                log::warn!("R@{} requested over a pool of {}; clamping", k, ranking.len());
                warned = true;
            }
            if first < k.min(ranking.len()) {
                *slot += 1;
            }
        }
    }
    let n = queries.len() as f64;
    let r_at: BTreeMap<usize, f64> = RECALL_KS
        .iter()
        .zip(hits)
        .map(|(&k, h)| (k, h as f64 / n))
        .collect();
    let rsum = 100.0 * r_at.values().sum::<f64>();
    Ok(Metrics {
        r_at,
        rsum,
        map_by_level: BTreeMap::new(),
    })
}

/// A text query with the image ids that count as correct.
#[derive(Clone, Debug, PartialEq)]
pub struct TextQuery {
    pub key: String,
    pub tokens: Vec<usize>,
    pub relevant: BTreeSet<String>,
}

/// One query per leaf node that shows at least one image of `pool`; the
/// relevant set is the node's images within the pool.
pub fn leaf_queries(model: &MatchModel, graph: &DenotationGraph, pool: &[String]) -> Vec<TextQuery> {
    let pool: BTreeSet<&str> = pool.iter().map(String::as_str).collect();
    graph
        .leaves()
        .filter_map(|n| {
            let relevant: BTreeSet<String> = graph
                .node_image_ids(n.id)
                .filter(|id| pool.contains(id))
                .map(str::to_string)
                .collect();
            (!relevant.is_empty()).then(|| TextQuery {
                key: n.norm().to_string(),
                tokens: model.vocab.encode(&n.expression),
                relevant,
            })
        })
        .collect()
}

/// Text-to-image retrieval over `pool`.
pub fn text_to_image(
    model: &MatchModel,
    features: &FeatureStore,
    queries: &[TextQuery],
    pool: &[String],
) -> Result<Metrics> {
    let rankings = queries
        .iter()
        .map(|q| {
            let ranked = rank_images(model, &q.tokens, features, pool)?;
            Ok((ranked.into_iter().map(|(k, _)| k).collect(), q.relevant.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    recall_from_rankings(&rankings)
}

/// Image-to-text retrieval: each image in `images` ranks every query text;
/// a text is relevant when the image is among its relevant images.
pub fn image_to_text(
    model: &MatchModel,
    features: &FeatureStore,
    queries: &[TextQuery],
    images: &[String],
) -> Result<Metrics> {
    let texts: Vec<(String, Vec<usize>)> =
        queries.iter().map(|q| (q.key.clone(), q.tokens.clone())).collect();
    let rankings = images
        .iter()
        .map(|img| {
            let x = features.get(img)?.vector_f64();
            let ranked = rank_texts(model, &x, &texts)?;
            let relevant = queries
                .iter()
                .filter(|q| q.relevant.contains(img))
                .map(|q| q.key.clone())
                .collect();
            Ok((ranked.into_iter().map(|(k, _)| k).collect(), relevant))
        })
        .collect::<Result<Vec<_>>>()?;
    recall_from_rankings(&rankings)
}

/// Mean of precision at the rank of each relevant item.
pub fn average_precision(ranking: &[String], relevant: &BTreeSet<String>) -> Result<f64> {
    let mut found = 0usize;
    let mut total = 0.0;
    for (i, key) in ranking.iter().enumerate() {
        if relevant.contains(key) {
            found += 1;
            total += found as f64 / (i + 1) as f64;
        }
    }
    if found == 0 {
        return Err(Error::Shape("no relevant item in ranking".into()));
    }
    Ok(total / found as f64)
}

/// Mean AP of retrieving each inner node's images from `pool`, grouped by the
/// node's abstraction level. Levels without nodes are omitted.
pub fn map_by_level(
    model: &MatchModel,
    graph: &DenotationGraph,
    features: &FeatureStore,
    pool: &[String],
) -> Result<BTreeMap<u32, f64>> {
    let pool_set: BTreeSet<&str> = pool.iter().map(String::as_str).collect();
    let mut per_level: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
    for node in graph.nodes().iter().filter(|n| !n.is_leaf && n.level() >= 1) {
        let relevant: BTreeSet<String> = graph
            .node_image_ids(node.id)
            .filter(|id| pool_set.contains(id))
            .map(str::to_string)
            .collect();
        if relevant.is_empty() {
            continue;
        }
        let tokens = model.vocab.encode(&node.expression);
        let ranking: Vec<String> = rank_images(model, &tokens, features, pool)?
            .into_iter()
            .map(|(k, _)| k)
            .collect();
        let ap = average_precision(&ranking, &relevant)?;
        let slot = per_level.entry(node.level()).or_insert((0.0, 0));
        slot.0 += ap;
        slot.1 += 1;
    }
    Ok(per_level
        .into_iter()
        .map(|(level, (sum, n))| (level, sum / n as f64))
        .collect())
}

/// How a score change from masking a region is turned into a region score.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReferRule {
    /// `(s_base - s_masked) * [s_masked > s_base]`: regions whose masking
    /// raises the score; the largest magnitude wins.
    #[default]
    Literal,
    /// `(s_base - s_masked) * [s_base > s_masked]`: regions whose masking
    /// lowers the score; the largest drop wins.
    DropSemantics,
}

pub fn region_scores(s_base: f64, s_masked: &[f64], rule: ReferRule) -> Vec<f64> {
    s_masked
        .iter()
        .map(|&m| {
            let active = match rule {
                ReferRule::Literal => m > s_base,
                ReferRule::DropSemantics => s_base > m,
            };
            if active {
                s_base - m
            } else {
                0.0
            }
        })
        .collect()
}

fn argmax_first(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Region picked from base and masked scores. Ties go to the lowest index;
/// when every region score is zero the region with the largest
/// `s_base - s_masked` is returned.
pub fn select_region(s_base: f64, s_masked: &[f64], rule: ReferRule) -> Result<usize> {
    if s_masked.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let scores = region_scores(s_base, s_masked, rule);
    if scores.iter().all(|&s| s == 0.0) {
        return Ok(argmax_first(s_masked.iter().map(|m| s_base - m)));
    }
    Ok(argmax_first(scores.iter().map(|s| s.abs())))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegionChoice {
    pub region: usize,
    pub s_base: f64,
    pub s_masked: Vec<f64>,
    pub s_region: Vec<f64>,
}

/// Pick the region an expression refers to. The image is represented as the
/// mean of the whole-image vector and all region vectors; masking region `r`
/// swaps its vector for one random vector drawn from `seed`, shared by all
/// regions.
pub fn refer_select(
    model: &MatchModel,
    tokens: &[usize],
    whole: &[f64],
    regions: &[Vec<f64>],
    seed: u64,
    rule: ReferRule,
) -> Result<RegionChoice> {
    if regions.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let d = whole.len();
    if let Some(r) = regions.iter().find(|r| r.len() != d) {
        return Err(Error::Shape(format!(
            "region vector has {} entries, image vector has {}",
            r.len(),
            d
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mask: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();

    let n = (regions.len() + 1) as f64;
    let mut sum = whole.to_vec();
    for r in regions {
        for (s, v) in sum.iter_mut().zip(r) {
            *s += v;
        }
    }
    let mean = |s: &[f64]| -> Vec<f64> { s.iter().map(|v| v / n).collect() };
    let s_base = model.score_tokens(&mean(&sum), tokens)?;
    let s_masked = regions
        .iter()
        .map(|r| {
            let swapped: Vec<f64> = sum
                .iter()
                .zip(r)
                .zip(&mask)
                .map(|((s, v), m)| s - v + m)
                .collect();
            model.score_tokens(&mean(&swapped), tokens)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RegionChoice {
        region: select_region(s_base, &s_masked, rule)?,
        s_region: region_scores(s_base, &s_masked, rule),
        s_base,
        s_masked,
    })
}
