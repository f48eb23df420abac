use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Shape of a [`Params`] set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    /// Vocabulary rows, including the unknown-word row.
    pub vocab: usize,
    /// Embedding width.
    pub h: usize,
    /// Image feature width.
    pub d: usize,
    /// Hidden width of the edge predictor.
    pub m: usize,
}

/// Every learnable array, stored row-major. Gradients use the same type.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    pub dims: Dims,
    /// `vocab x h`
    pub word_table: Vec<f64>,
    /// `d x h`; the image embedding is `x^T W + b`
    pub img_proj: Vec<f64>,
    pub img_bias: Vec<f64>,
    pub theta: Vec<f64>,
    /// `m x 2h`, applied to `[v_parent; v_child]`
    pub edge_hidden: Vec<f64>,
    pub edge_hidden_bias: Vec<f64>,
    pub edge_out: Vec<f64>,
    pub edge_out_bias: Vec<f64>,
}

pub const BLOCK_NAMES: [&str; 8] = [
    "word_table",
    "img_proj",
    "img_bias",
    "theta",
    "edge_hidden",
    "edge_hidden_bias",
    "edge_out",
    "edge_out_bias",
];

impl Params {
    pub fn zeros(dims: Dims) -> Self {
        let Dims { vocab, h, d, m } = dims;
        Params {
            dims,
            word_table: vec![0.0; vocab * h],
            img_proj: vec![0.0; d * h],
            img_bias: vec![0.0; h],
            theta: vec![0.0; h],
            edge_hidden: vec![0.0; m * 2 * h],
            edge_hidden_bias: vec![0.0; m],
            edge_out: vec![0.0; m],
            edge_out_bias: vec![0.0; 1],
        }
    }

    /// Weights uniform in `(-1/sqrt(h), 1/sqrt(h))`, biases zero.
    pub fn init(dims: Dims, seed: u64) -> Self {
        let mut p = Params::zeros(dims);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / (dims.h as f64).sqrt();
        for block in [
            &mut p.word_table,
            &mut p.img_proj,
            &mut p.theta,
            &mut p.edge_hidden,
            &mut p.edge_out,
        ] {
            for w in block.iter_mut() {
                *w = rng.gen_range(-bound..bound);
            }
        }
        p
    }

    pub fn blocks(&self) -> [&Vec<f64>; 8] {
        [
            &self.word_table,
            &self.img_proj,
            &self.img_bias,
            &self.theta,
            &self.edge_hidden,
            &self.edge_hidden_bias,
            &self.edge_out,
            &self.edge_out_bias,
        ]
    }

    pub fn blocks_mut(&mut self) -> [&mut Vec<f64>; 8] {
        [
            &mut self.word_table,
            &mut self.img_proj,
            &mut self.img_bias,
            &mut self.theta,
            &mut self.edge_hidden,
            &mut self.edge_hidden_bias,
            &mut self.edge_out,
            &mut self.edge_out_bias,
        ]
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &Params) {
        for (dst, src) in self.blocks_mut().into_iter().zip(other.blocks()) {
            for (a, b) in dst.iter_mut().zip(src) {
                *a += alpha * b;
            }
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for block in self.blocks_mut() {
            for a in block.iter_mut() {
                *a *= alpha;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|x| x.is_finite()))
    }

    pub fn len(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn max_abs(&self) -> f64 {
        self.blocks()
            .iter()
            .flat_map(|b| b.iter())
            .fold(0.0, |m, x| m.max(x.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_seeded_and_bounded() {
        let dims = Dims { vocab: 5, h: 4, d: 3, m: 2 };
        let a = Params::init(dims, 3);
        assert_eq!(a, Params::init(dims, 3));
        assert_ne!(a, Params::init(dims, 4));
        assert!(a.max_abs() < 0.5);
        assert_eq!(a.img_bias, vec![0.0; 4]);
        assert_eq!(a.len(), 5 * 4 + 3 * 4 + 4 + 4 + 2 * 8 + 2 + 2 + 1);
    }

    #[test]
    fn axpy_adds() {
        let dims = Dims { vocab: 1, h: 1, d: 1, m: 1 };
        let mut a = Params::zeros(dims);
        let mut b = Params::zeros(dims);
        b.theta[0] = 2.0;
        a.axpy(-0.5, &b);
        assert_eq!(a.theta[0], -1.0);
    }
}
