//! Image-text matching model.
//!
//! Text is embedded as the mean of learned word vectors, images by an affine
//! projection of their feature vector. The fused embedding is the elementwise
//! product `v = φ(x) ⊙ ψ(y)` and the matching score is `s = θ · v`.
//!
//! Three losses are provided, each returning its value and exact gradients:
//!
//! - matching: negative log softmax of the positive score against its
//!   negatives;
//! - specificity: hinge `[s(x_child, y_parent) - s(x_child, y_child)]_+`
//!   summed over edges;
//! - edge prediction: binary cross-entropy of a one-hidden-layer tanh
//!   perceptron applied to `[v_parent; v_child]`.

mod checkpoint;
mod loss;
mod params;

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::DenotationGraph;
use crate::ling::Expression;

pub use checkpoint::{CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use loss::{
    bce_with_logit, loss_edge, loss_match, loss_spec, loss_total, EdgePair, LossValue, MatchInstance, Pair,
    SpecTerm,
};
pub use params::{Dims, Params, BLOCK_NAMES};

pub type Gradients = Params;

pub const UNK: &str = "<unk>";

/// Lemma vocabulary; row 0 is the unknown word.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Build from lemmas; duplicates are dropped and the order is sorted.
    pub fn new<I, S>(lemmas: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut rest: Vec<String> = lemmas.into_iter().map(Into::into).filter(|w| w != UNK).collect();
        rest.sort();
        rest.dedup();
        let mut words = vec![UNK.to_string()];
        words.extend(rest);
        Self::from_rows(words).expect("unique rows")
    }

    /// Every lemma of every node in the graph.
    pub fn from_graph(graph: &DenotationGraph) -> Self {
        Vocab::new(graph.nodes().iter().flat_map(|n| n.expression.lemmas()))
    }

    fn from_rows(words: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::format("vocabulary", format!("duplicate entry '{}'", w)));
            }
        }
        Ok(Vocab { words, index })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, lemma: &str) -> usize {
        self.index.get(lemma).copied().unwrap_or(0)
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn encode(&self, expr: &Expression) -> Vec<usize> {
        expr.lemmas().iter().map(|l| self.id(l)).collect()
    }

    /// One lemma per line, line number = row.
    pub fn to_text(&self) -> String {
        let mut out = self.words.join("\n");
        out.push('\n');
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let words: Vec<String> = text.lines().map(str::to_string).collect();
        if words.first().map(String::as_str) != Some(UNK) {
            return Err(Error::format("vocabulary", "first row must be <unk>"));
        }
        Self::from_rows(words)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatchModel {
    pub vocab: Vocab,
    pub params: Params,
}

/// Intermediate values of one forward pass over an image-text pair.
#[derive(Clone, Debug)]
pub(crate) struct Forward {
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    pub v: Vec<f64>,
}

impl MatchModel {
    pub fn new(vocab: Vocab, h: usize, d: usize, m: usize, seed: u64) -> Result<Self> {
        if h == 0 || m == 0 || d == 0 {
            return Err(Error::Config("model widths h, d, m must be >= 1".into()));
        }
        let dims = Dims {
            vocab: vocab.len(),
            h,
            d,
            m,
        };
        Ok(MatchModel {
            vocab,
            params: Params::init(dims, seed),
        })
    }

    pub fn dims(&self) -> Dims {
        self.params.dims
    }

    pub(crate) fn check_image(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dims().d {
            return Err(Error::Shape(format!(
                "image vector has {} entries, model expects {}",
                x.len(),
                self.dims().d
            )));
        }
        Ok(())
    }

    /// Image embedding `x^T W + b`.
    pub fn embed_image(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_image(x)?;
        let h = self.dims().h;
        let p = &self.params;
        let mut out = p.img_bias.clone();
        for (xi, row) in x.iter().zip(p.img_proj.chunks_exact(h)) {
            for (o, w) in out.iter_mut().zip(row) {
                *o += xi * w;
            }
        }
        Ok(out)
    }

    /// Mean of the word rows of `tokens`.
    pub fn embed_tokens(&self, tokens: &[usize]) -> Result<Vec<f64>> {
        if tokens.is_empty() {
            return Err(Error::EmptyExpression);
        }
        let h = self.dims().h;
        let mut out = vec![0.0; h];
        for &t in tokens {
            let row = self
                .params
                .word_table
                .get(t * h..(t + 1) * h)
                .ok_or_else(|| Error::Shape(format!("token id {} outside vocabulary", t)))?;
            for (o, w) in out.iter_mut().zip(row) {
                *o += w;
            }
        }
        let n = tokens.len() as f64;
        out.iter_mut().for_each(|o| *o /= n);
        Ok(out)
    }

    pub fn embed_text(&self, expr: &Expression) -> Result<Vec<f64>> {
        self.embed_tokens(&self.vocab.encode(expr))
    }

    pub(crate) fn forward(&self, x: &[f64], tokens: &[usize]) -> Result<Forward> {
        let phi = self.embed_image(x)?;
        let psi = self.embed_tokens(tokens)?;
        let v = phi.iter().zip(&psi).map(|(a, b)| a * b).collect();
        Ok(Forward { phi, psi, v })
    }

    pub fn score_tokens(&self, x: &[f64], tokens: &[usize]) -> Result<f64> {
        let f = self.forward(x, tokens)?;
        Ok(dot(&self.params.theta, &f.v))
    }

    pub fn score(&self, x: &[f64], expr: &Expression) -> Result<f64> {
        self.score_tokens(x, &self.vocab.encode(expr))
    }

    /// Fused embedding `φ(x) ⊙ ψ(y)`.
    pub fn fused(&self, x: &[f64], tokens: &[usize]) -> Result<Vec<f64>> {
        Ok(self.forward(x, tokens)?.v)
    }

    /// Push a gradient `dv` on the fused embedding back into `grads`.
    pub(crate) fn backprop_fused(
        &self,
        x: &[f64],
        tokens: &[usize],
        f: &Forward,
        dv: &[f64],
        grads: &mut Gradients,
    ) {
        let h = self.dims().h;
        let dphi: Vec<f64> = dv.iter().zip(&f.psi).map(|(g, p)| g * p).collect();
        let n = tokens.len() as f64;
        let dpsi: Vec<f64> = dv.iter().zip(&f.phi).map(|(g, p)| g * p / n).collect();

        for (xi, row) in x.iter().zip(grads.img_proj.chunks_exact_mut(h)) {
            for (g, d) in row.iter_mut().zip(&dphi) {
                *g += xi * d;
            }
        }
        for (g, d) in grads.img_bias.iter_mut().zip(&dphi) {
            *g += d;
        }
        for &t in tokens {
            for (g, d) in grads.word_table[t * h..(t + 1) * h].iter_mut().zip(&dpsi) {
                *g += d;
            }
        }
    }

    /// Add `coef * ∂s(x, tokens)/∂params` into `grads`.
    pub(crate) fn backprop_score(
        &self,
        x: &[f64],
        tokens: &[usize],
        f: &Forward,
        coef: f64,
        grads: &mut Gradients,
    ) {
        for (g, v) in grads.theta.iter_mut().zip(&f.v) {
            *g += coef * v;
        }
        let dv: Vec<f64> = self.params.theta.iter().map(|t| coef * t).collect();
        self.backprop_fused(x, tokens, f, &dv, grads);
    }

    pub fn save(&self, model_path: impl AsRef<Path>, vocab_path: impl AsRef<Path>) -> Result<()> {
        let (mp, vp) = (model_path.as_ref(), vocab_path.as_ref());
        fs::write(mp, self.to_bytes()).map_err(|e| Error::io(mp, e))?;
        fs::write(vp, self.vocab.to_text()).map_err(|e| Error::io(vp, e))
    }

    pub fn load(model_path: impl AsRef<Path>, vocab_path: impl AsRef<Path>) -> Result<Self> {
        let mp = model_path.as_ref();
        let vocab = Vocab::load(vocab_path)?;
        let bytes = fs::read(mp).map_err(|e| Error::io(mp, e))?;
        Self::from_bytes(&bytes, vocab)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
