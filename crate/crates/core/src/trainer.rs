//! SGD over the combined matching, specificity and edge-prediction losses.
//!
//! An epoch visits every leaf positive `(image, node)` of the training split
//! plus a fixed share of internal-node positives, in a seeded order. Every
//! random draw is derived from the config seed and the step position, so
//! identical configs give byte-identical checkpoints and logs.
//!
//! Per positive `(x, j)` a step gathers:
//! - one matching instance with the sampler's negatives,
//! - one specificity term `(x, parent p, j)` for every parent `p` of `j`,
//! - for every parent edge, `edge_pairs_per_edge` positive pairs (an image of
//!   `p` with `x`) and as many non-edge pairs, alternating between a sibling
//!   of `j` and a random node that has no edge into `j`.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::seq::{IteratorRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::FeatureStore;
use crate::error::{Error, Result};
use crate::eval::{self, Metrics, TextQuery};
use crate::graph::{DenotationGraph, NodeId};
use crate::model::{loss_total, EdgePair, MatchInstance, MatchModel, Pair, SpecTerm, Vocab};
use crate::sampler::{sample_batch, NegativeCounts, SimilarityIndex, TrainingBatch};

pub const LOG_HEADER: &str = "epoch,loss_match,loss_spec,loss_edge,total,r1,r5,r10,rsum";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Share of all steps spent ramping the rate up linearly from zero.
    pub warmup_fraction: f64,
    /// Multiply the rate by `decay_factor` every this many epochs; 0 disables.
    pub decay_epochs: usize,
    pub decay_factor: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Negatives per positive, in `v, s, h, d` order.
    pub negatives: NegativeCounts,
    pub seed: u64,
    /// Save an intermediate checkpoint every this many epochs; 0 disables.
    pub checkpoint_interval: usize,
    pub h: usize,
    pub m: usize,
    pub knn_k: usize,
    /// Share of internal-node positives visited per epoch.
    pub internal_ratio: f64,
    pub edge_pairs_per_edge: usize,
    pub heldout_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 8,
            lr: 0.05,
            warmup_fraction: 0.1,
            decay_epochs: 0,
            decay_factor: 0.5,
            lambda1: 1.0,
            lambda2: 1.0,
            negatives: NegativeCounts::default(),
            seed: 0,
            checkpoint_interval: 0,
            h: 16,
            m: 16,
            knn_k: 20,
            internal_ratio: 1.0,
            edge_pairs_per_edge: 1,
            heldout_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    /// Parse `key = value` lines; unset keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.epochs == 0 {
            return fail("epochs must be >= 1");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be >= 1");
        }
        // zero is allowed: it makes a dry run that leaves the model untouched
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return fail("lr must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return fail("warmup_fraction must be in [0, 1)");
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return fail("decay_factor must be in (0, 1]");
        }
        for l in [self.lambda1, self.lambda2] {
            if !(l.is_finite() && l >= 0.0) {
                return fail("lambda1 and lambda2 must be finite and non-negative");
            }
        }
        if self.h == 0 || self.m == 0 || self.knn_k == 0 {
            return fail("h, m and knn_k must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.internal_ratio) {
            return fail("internal_ratio must be in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.heldout_fraction) {
            return fail("heldout_fraction must be in [0, 1)");
        }
        Ok(())
    }
}

/// Learning rate per global step: linear warmup from zero, then step decay.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Schedule {
    pub base: f64,
    pub warmup_steps: usize,
    pub steps_per_epoch: usize,
    pub decay_epochs: usize,
    pub decay_factor: f64,
}

impl Schedule {
    pub fn new(cfg: &TrainConfig, steps_per_epoch: usize) -> Self {
        let total = cfg.epochs * steps_per_epoch;
        Schedule {
            base: cfg.lr,
            warmup_steps: (cfg.warmup_fraction * total as f64).floor() as usize,
            steps_per_epoch,
            decay_epochs: cfg.decay_epochs,
            decay_factor: cfg.decay_factor,
        }
    }

    pub fn lr_at(&self, step: usize) -> f64 {
        if step < self.warmup_steps {
            return self.base * (step + 1) as f64 / (self.warmup_steps + 1) as f64;
        }
        if self.decay_epochs == 0 {
            return self.base;
        }
        let epoch = step / self.steps_per_epoch.max(1);
        self.base * self.decay_factor.powi((epoch / self.decay_epochs) as i32)
    }
}

/// Images held out for evaluation: the `ceil(fraction * n)` ids with the
/// smallest SHA-256 digest, never all of them.
pub fn heldout_split(image_ids: &[String], fraction: f64) -> BTreeSet<String> {
    let n = image_ids.len();
    let want = ((fraction * n as f64).ceil() as usize).min(n.saturating_sub(1));
    let mut keyed: Vec<([u8; 8], &String)> = image_ids
        .iter()
        .map(|id| {
            let digest = Sha256::digest(id.as_bytes());
            (digest[..8].try_into().unwrap(), id)
        })
        .collect();
    keyed.sort();
    keyed.into_iter().take(want).map(|(_, id)| id.clone()).collect()
}

/// Derive an independent seed from a base seed and a position.
pub fn mix_seed(base: u64, salt: u64) -> u64 {
    let mut z = base ^ salt.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss_match: f64,
    pub loss_spec: f64,
    pub loss_edge: f64,
    pub total: f64,
    pub r1: f64,
    pub r5: f64,
    pub r10: f64,
    pub rsum: f64,
}

impl EpochLog {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.epoch,
            self.loss_match,
            self.loss_spec,
            self.loss_edge,
            self.total,
            self.r1,
            self.r5,
            self.r10,
            self.rsum
        )
    }
}

pub fn log_to_csv(log: &[EpochLog]) -> String {
    let mut out = String::from(LOG_HEADER);
    out.push('\n');
    for row in log {
        out.push_str(&row.csv_row());
        out.push('\n');
    }
    out
}

pub struct TrainOutput {
    pub model: MatchModel,
    pub log: Vec<EpochLog>,
    pub train_images: Vec<String>,
    pub heldout_images: Vec<String>,
}

impl TrainOutput {
    pub fn log_csv(&self) -> String {
        log_to_csv(&self.log)
    }
}

/// What gets written when a step produces a non-finite loss.
#[derive(Serialize)]
struct FailedStep<'a> {
    epoch: usize,
    step: usize,
    lr: f64,
    seed: u64,
    batches: &'a [TrainingBatch],
}

/// Text-to-image queries for leaves showing a held-out image, ranked over
/// every image of the graph.
pub fn heldout_queries(
    model: &MatchModel,
    graph: &DenotationGraph,
    heldout: &BTreeSet<String>,
) -> Vec<TextQuery> {
    eval::leaf_queries(model, graph, graph.image_ids())
        .into_iter()
        .filter(|q| !q.relevant.is_disjoint(heldout))
        .collect()
}

struct Context<'a> {
    graph: DenotationGraph,
    features: &'a FeatureStore,
    index: SimilarityIndex,
    tokens: Vec<Vec<usize>>,
}

impl Context<'_> {
    fn pair(&self, image: &str, node: NodeId) -> Result<Pair> {
        Ok(Pair {
            image: self.features.get(image)?.vector_f64(),
            tokens: self.tokens[node].clone(),
        })
    }

    fn random_image_of(&self, node: NodeId, rng: &mut ChaCha8Rng) -> &str {
        let imgs = &self.graph.nodes()[node].images;
        let pick = *imgs.iter().choose(rng).expect("nodes have images");
        self.graph.image_id(pick)
    }

    /// A node other than `child` with no edge into it, alternating between
    /// siblings and uniform draws.
    fn non_parent(&self, child: NodeId, prefer_sibling: bool, rng: &mut ChaCha8Rng) -> Option<NodeId> {
        if prefer_sibling {
            let sibs: Vec<NodeId> = self
                .graph
                .siblings(child)
                .ok()?
                .into_iter()
                .filter(|&s| !self.graph.has_edge(s, child))
                .collect();
            if let Some(&s) = sibs.choose(rng) {
                return Some(s);
            }
        }
        (0..self.graph.len())
            .filter(|&r| r != child && !self.graph.has_edge(r, child))
            .choose(rng)
    }

    fn step_terms(
        &self,
        batch: &TrainingBatch,
        cfg: &TrainConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<(MatchInstance, Vec<SpecTerm>, Vec<EdgePair>)> {
        let x = &batch.positive_image;
        let j = batch.positive_node;
        let positive = self.pair(x, j)?;
        let negatives = batch
            .negatives
            .iter()
            .map(|n| self.pair(&n.image, n.node))
            .collect::<Result<Vec<_>>>()?;

        let mut spec = Vec::new();
        let mut edges = Vec::new();
        let mut prefer_sibling = true;
        for &p in self.graph.parents(j) {
            spec.push(SpecTerm {
                image: positive.image.clone(),
                parent: self.tokens[p].clone(),
                child: positive.tokens.clone(),
            });
            for _ in 0..cfg.edge_pairs_per_edge {
                edges.push(EdgePair {
                    parent: self.pair(self.random_image_of(p, rng), p)?,
                    child: positive.clone(),
                    is_edge: true,
                });
                if let Some(r) = self.non_parent(j, prefer_sibling, rng) {
                    edges.push(EdgePair {
                        parent: self.pair(self.random_image_of(r, rng), r)?,
                        child: positive.clone(),
                        is_edge: false,
                    });
                }
                prefer_sibling = !prefer_sibling;
            }
        }
        Ok((MatchInstance { positive, negatives }, spec, edges))
    }
}

/// Train a model on `graph`. With `out_dir`, checkpoints, the vocabulary and
/// the CSV log are written there.
pub fn train(
    graph: &DenotationGraph,
    features: &FeatureStore,
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<TrainOutput> {
    cfg.validate()?;
    for id in graph.image_ids() {
        if !features.contains(id) {
            return Err(Error::UnknownImage(id.clone()));
        }
    }
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let heldout = heldout_split(graph.image_ids(), cfg.heldout_fraction);
    let train_ids: BTreeSet<String> = graph
        .image_ids()
        .iter()
        .filter(|id| !heldout.contains(*id))
        .cloned()
        .collect();
    let train_graph = graph.restrict_images(&train_ids)?;
    if train_graph.leaves().next().is_none() {
        return Err(Error::EmptyGraph);
    }
    let train_features = FeatureStore::new(
        features.dim(),
        features
            .iter()
            .filter(|f| train_ids.contains(&f.image_id))
            .cloned()
            .collect(),
    )?;
    if train_features.len() < 2 {
        return Err(Error::Config("training split needs at least two images".into()));
    }
    let k = cfg.knn_k.min(train_features.len() - 1);
    let index = SimilarityIndex::build(&train_features, k)?;

    let vocab = Vocab::from_graph(graph);
    let mut model = MatchModel::new(vocab, cfg.h, features.dim(), cfg.m, cfg.seed)?;
    let tokens = train_graph
        .nodes()
        .iter()
        .map(|n| model.vocab.encode(&n.expression))
        .collect();
    let ctx = Context {
        graph: train_graph,
        features: &train_features,
        index,
        tokens,
    };

    let positives = select_positives(&ctx.graph, cfg);
    let steps_per_epoch = positives.len().div_ceil(cfg.batch_size);
    let schedule = Schedule::new(cfg, steps_per_epoch);
    let heldout_vec: Vec<String> = heldout.iter().cloned().collect();
    let eval_on: BTreeSet<String> = if heldout.is_empty() { train_ids.clone() } else { heldout.clone() };

    let mut log = Vec::with_capacity(cfg.epochs);
    let mut order = positives.clone();
    for epoch in 0..cfg.epochs {
        order.copy_from_slice(&positives);
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, epoch as u64)));
        let mut sums = [0.0f64; 4];
        for (s, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let step = epoch * steps_per_epoch + s;
            let mut batches = Vec::with_capacity(chunk.len());
            let mut instances = Vec::with_capacity(chunk.len());
            let mut spec = Vec::new();
            let mut edges = Vec::new();
            for (i, &(node, img)) in chunk.iter().enumerate() {
                let seed = mix_seed(cfg.seed ^ 0x5EED, (step * cfg.batch_size + i) as u64);
                let image = ctx.graph.image_id(img);
                let batch = sample_batch(&ctx.graph, &ctx.index, node, image, cfg.negatives, seed)?;
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 1));
                let (inst, sp, ed) = ctx.step_terms(&batch, cfg, &mut rng)?;
                instances.push(inst);
                spec.extend(sp);
                edges.extend(ed);
                batches.push(batch);
            }
            let lr = schedule.lr_at(step);
            let loss = loss_total(&model, &instances, &spec, &edges, cfg.lambda1, cfg.lambda2)?;
            if !loss.total.is_finite() || !loss.gradients.is_finite() {
                if let Some(dir) = out_dir {
                    let failed = FailedStep { epoch, step, lr, seed: cfg.seed, batches: &batches };
                    let path = dir.join("nonfinite_batch.json");
                    let json = serde_json::to_string_pretty(&failed).expect("batch serializes");
                    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
                }
                return Err(Error::NonFiniteLoss { epoch, step });
            }
            model.params.axpy(-lr / chunk.len() as f64, &loss.gradients);
            sums[0] += loss.match_loss;
            sums[1] += loss.spec;
            sums[2] += loss.edge;
            sums[3] += loss.total;
        }

        let queries = heldout_queries(&model, graph, &eval_on);
        let metrics = if queries.is_empty() {
            Metrics::default()
        } else {
            eval::text_to_image(&model, features, &queries, graph.image_ids())?
        };
        let n = positives.len().max(1) as f64;
        log.push(EpochLog {
            epoch: epoch + 1,
            loss_match: sums[0] / n,
            loss_spec: sums[1] / n,
            loss_edge: sums[2] / n,
            total: sums[3] / n,
            r1: metrics.r(1),
            r5: metrics.r(5),
            r10: metrics.r(10),
            rsum: metrics.rsum,
        });
        log::debug!("epoch {} total {:.6}", epoch + 1, sums[3] / n);

        if let Some(dir) = out_dir {
            if cfg.checkpoint_interval > 0 && (epoch + 1) % cfg.checkpoint_interval == 0 {
                let path = dir.join(format!("epoch_{:04}.dgmd", epoch + 1));
                fs::write(&path, model.to_bytes()).map_err(|e| Error::io(&path, e))?;
            }
        }
    }

    let out = TrainOutput {
        model,
        log,
        train_images: train_ids.into_iter().collect(),
        heldout_images: heldout_vec,
    };
    if let Some(dir) = out_dir {
        out.model.save(dir.join("model.dgmd"), dir.join("vocab.txt"))?;
        let path = dir.join("train_log.csv");
        fs::write(&path, out.log_csv()).map_err(|e| Error::io(&path, e))?;
    }
    Ok(out)
}

/// Leaf positives, then a seeded `internal_ratio` share of internal ones.
fn select_positives(graph: &DenotationGraph, cfg: &TrainConfig) -> Vec<(NodeId, u32)> {
    let mut leaf = Vec::new();
    let mut internal = Vec::new();
    for n in graph.nodes() {
        let dst = if n.is_leaf { &mut leaf } else { &mut internal };
        dst.extend(n.images.iter().map(|&x| (n.id, x)));
    }
    let keep = (cfg.internal_ratio * internal.len() as f64).round() as usize;
    if keep < internal.len() {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, u64::MAX));
        internal.shuffle(&mut rng);
        internal.truncate(keep);
        internal.sort();
    }
    leaf.extend(internal);
    leaf
}
