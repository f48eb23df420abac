//! Line-delimited JSON graph files.
//!
//! Line 1 is a header `{format_version, node_count, edge_count, checksum}`.
//! Then one node object per line in id order, then one edge object per line
//! in `(parent, child)` order. The checksum is the SHA-256 of every byte after
//! the header line.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{DenotationGraph, ImageIdx, Node, NodeId};
use crate::corpus::TaggedToken;
use crate::error::{Error, Result};
use crate::ling::{Expression, RuleId};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    node_count: usize,
    edge_count: usize,
    checksum: String,
}

#[derive(Serialize, Deserialize)]
struct NodeLine {
    id: NodeId,
    norm: String,
    tokens: Vec<String>,
    level: u32,
    images: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    own: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct EdgeLine {
    parent: NodeId,
    child: NodeId,
    rule_id: RuleId,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{:02x}", b))
        .collect()
}

impl DenotationGraph {
    pub fn to_dg_string(&self) -> String {
        let ids = |set: &BTreeSet<ImageIdx>| -> Vec<String> {
            set.iter().map(|&i| self.image_id(i).to_string()).collect()
        };
        let mut body = String::new();
        for n in self.nodes() {
            let line = NodeLine {
                id: n.id,
                norm: n.norm().to_string(),
                tokens: n.expression.tokens().iter().map(|t| t.to_string()).collect(),
                level: n.level(),
                images: ids(&n.images),
                own: ids(&n.own_images),
            };
            body.push_str(&serde_json::to_string(&line).expect("node serializes"));
            body.push('\n');
        }
        for (parent, child, rule_id) in self.edges() {
            let line = EdgeLine {
                parent,
                child,
                rule_id,
            };
            body.push_str(&serde_json::to_string(&line).expect("edge serializes"));
            body.push('\n');
        }
        let header = Header {
            format_version: FORMAT_VERSION,
            node_count: self.len(),
            edge_count: self.edge_count(),
            checksum: sha256_hex(body.as_bytes()),
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        out.push_str(&body);
        out
    }

    pub fn from_dg_str(text: &str) -> Result<Self> {
        let (head, body) = text
            .split_once('\n')
            .ok_or_else(|| Error::format("graph file", "missing header line"))?;
        let header: Header = serde_json::from_str(head)
            .map_err(|e| Error::format("graph header", e.to_string()))?;
        if header.format_version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                expected: FORMAT_VERSION,
                found: header.format_version,
            });
        }
        let found = sha256_hex(body.as_bytes());
        if found != header.checksum {
            return Err(Error::ChecksumMismatch {
                expected: header.checksum,
                found,
            });
        }

        let lines: Vec<&str> = body.lines().collect();
        if lines.len() != header.node_count + header.edge_count {
            return Err(Error::format(
                "graph file",
                format!(
                    "header announces {} nodes and {} edges but body has {} lines",
                    header.node_count,
                    header.edge_count,
                    lines.len()
                ),
            ));
        }

        let node_lines = lines[..header.node_count]
            .iter()
            .map(|l| serde_json::from_str::<NodeLine>(l))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::format("graph node", e.to_string()))?;

        let image_ids: Vec<String> = node_lines
            .iter()
            .flat_map(|n| n.images.iter().chain(n.own.iter()).cloned())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let index = |id: &String| image_ids.binary_search(id).unwrap() as ImageIdx;

        let mut nodes = Vec::with_capacity(node_lines.len());
        for nl in node_lines {
            let tokens = nl
                .tokens
                .iter()
                .map(|t| {
                    TaggedToken::parse(t)
                        .map_err(|_| Error::format("graph node", format!("bad token '{}'", t)))
                })
                .collect::<Result<Vec<_>>>()?;
            let expression = Expression::new(tokens, nl.level)?;
            if expression.norm() != nl.norm {
                return Err(Error::format(
                    "graph node",
                    format!("norm '{}' does not match its tokens", nl.norm),
                ));
            }
            nodes.push(Node {
                id: nl.id,
                expression,
                images: nl.images.iter().map(index).collect(),
                own_images: nl.own.iter().map(index).collect(),
                is_leaf: false,
            });
        }

        let mut edges = BTreeMap::new();
        for l in &lines[header.node_count..] {
            let e: EdgeLine = serde_json::from_str(l)
                .map_err(|e| Error::format("graph edge", e.to_string()))?;
            edges.insert((e.parent, e.child), e.rule_id);
        }

        DenotationGraph::from_parts(image_ids, nodes, edges)
    }
}

pub fn save(graph: &DenotationGraph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, graph.to_dg_string()).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<DenotationGraph> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    DenotationGraph::from_dg_str(&text)
}
