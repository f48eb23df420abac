use std::fmt;

use serde::Serialize;

use super::DenotationGraph;
use crate::error::{Error, Result};

/// A quantity broken down over all / internal / leaf nodes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Split<T> {
    pub all: T,
    pub internal: T,
    pub leaf: T,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GraphStats {
    pub n_edges: usize,
    pub n_nodes: Split<usize>,
    /// Arithmetic means; `None` when the category is empty.
    pub tokens_per_node: Split<Option<f64>>,
    pub images_per_node: Split<Option<f64>>,
}

fn mean(sum: usize, n: usize) -> Option<f64> {
    (n > 0).then(|| sum as f64 / n as f64)
}

impl DenotationGraph {
    pub fn stats(&self) -> Result<GraphStats> {
        if self.is_empty() {
            return Err(Error::EmptyGraph);
        }
        let (mut n_leaf, mut tok_leaf, mut img_leaf) = (0, 0, 0);
        let (mut n_int, mut tok_int, mut img_int) = (0, 0, 0);
        for node in self.nodes() {
            let (tokens, images) = (node.expression.len(), node.images.len());
            if node.is_leaf {
                n_leaf += 1;
                tok_leaf += tokens;
                img_leaf += images;
            } else {
                n_int += 1;
                tok_int += tokens;
                img_int += images;
            }
        }
        let n_all = n_leaf + n_int;
        Ok(GraphStats {
            n_edges: self.edge_count(),
            n_nodes: Split {
                all: n_all,
                internal: n_int,
                leaf: n_leaf,
            },
            tokens_per_node: Split {
                all: mean(tok_leaf + tok_int, n_all),
                internal: mean(tok_int, n_int),
                leaf: mean(tok_leaf, n_leaf),
            },
            images_per_node: Split {
                all: mean(img_leaf + img_int, n_all),
                internal: mean(img_int, n_int),
                leaf: mean(img_leaf, n_leaf),
            },
        })
    }
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "–".to_string(), |x| format!("{:.2}", x))
}

impl fmt::Display for Split<Option<f64>> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", cell(self.all), cell(self.internal), cell(self.leaf))
    }
}

impl fmt::Display for Split<usize> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.all, self.internal, self.leaf)
    }
}

impl GraphStats {
    /// Rows of `(label, all/internal/leaf)` in summary-table layout.
    pub fn table_rows(&self) -> Vec<(&'static str, String)> {
        vec![
            ("# of edges", self.n_edges.to_string()),
            ("# of nodes", self.n_nodes.to_string()),
            ("# of tokens/node", self.tokens_per_node.to_string()),
            ("# of images/node", self.images_per_node.to_string()),
        ]
    }
}
