//! Image feature stores and their text and binary file formats.
//!
//! Text: `image_id<TAB>f1,...,fd[<TAB>r1_1,...,r1_d ...]`, one extra tab
//! field per candidate region.
//!
//! Binary: magic `DGFT`, u32 LE dimension, then per record a u16 LE id
//! length, the id bytes, `d` LE f32 values, a u16 LE region count and that
//! many blocks of `d` LE f32 values.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const FEATURE_MAGIC: &[u8; 4] = b"DGFT";

#[derive(Clone, Debug, PartialEq)]
pub struct ImageFeature {
    pub image_id: String,
    pub vector: Vec<f32>,
    pub regions: Vec<Vec<f32>>,
}

impl ImageFeature {
    pub fn vector_f64(&self) -> Vec<f64> {
        self.vector.iter().map(|&v| v as f64).collect()
    }
}

/// Immutable, id-indexed collection of image features of one dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStore {
    dim: usize,
    entries: Vec<ImageFeature>,
    index: HashMap<String, usize>,
}

impl FeatureStore {
    pub fn new(dim: usize, entries: Vec<ImageFeature>) -> Result<Self> {
        let mut index = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            for v in std::iter::once(&e.vector).chain(e.regions.iter()) {
                if v.len() != dim {
                    return Err(Error::DimensionMismatch {
                        image_id: e.image_id.clone(),
                        expected: dim,
                        found: v.len(),
                    });
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFiniteFeature(e.image_id.clone()));
                }
            }
            if index.insert(e.image_id.clone(), i).is_some() {
                return Err(Error::DuplicateFeature(e.image_id.clone()));
            }
        }
        Ok(FeatureStore {
            dim,
            entries,
            index,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, image_id: &str) -> Result<&ImageFeature> {
        self.index
            .get(image_id)
            .map(|&i| &self.entries[i])
            .ok_or_else(|| Error::UnknownImage(image_id.to_string()))
    }

    pub fn contains(&self, image_id: &str) -> bool {
        self.index.contains_key(image_id)
    }

    /// Entries in file order.
    pub fn iter(&self) -> impl Iterator<Item = &ImageFeature> {
        self.entries.iter()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&e.image_id);
            for v in std::iter::once(&e.vector).chain(e.regions.iter()) {
                out.push('\t');
                let joined: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                out.push_str(&joined.join(","));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_binary(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(FEATURE_MAGIC);
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for e in &self.entries {
            out.extend_from_slice(&(e.image_id.len() as u16).to_le_bytes());
            out.extend_from_slice(e.image_id.as_bytes());
            for x in &e.vector {
                out.extend_from_slice(&x.to_le_bytes());
            }
            out.extend_from_slice(&(e.regions.len() as u16).to_le_bytes());
            for r in &e.regions {
                for x in r {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
        out
    }
}

/// Load a feature file, detecting the binary format by its magic bytes.
pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureStore> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_features(&bytes)
}

pub fn parse_features(bytes: &[u8]) -> Result<FeatureStore> {
    if bytes.starts_with(FEATURE_MAGIC) {
        parse_binary(bytes)
    } else {
        let text = std::str::from_utf8(bytes)
            .map_err(|e| Error::format("feature file", e.to_string()))?;
        parse_text(text)
    }
}

/// Write a store to `path`; the format follows the extension (`.dgft` is binary).
pub fn write_features(store: &FeatureStore, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = if path.extension().is_some_and(|e| e == "dgft") {
        store.to_binary()
    } else {
        store.to_text().into_bytes()
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn parse_text(text: &str) -> Result<FeatureStore> {
    let mut entries = Vec::new();
    let mut dim = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() || raw.starts_with('#') {
            continue;
        }
        let mut fields = raw.split('\t');
        let image_id = fields.next().unwrap_or_default().to_string();
        let mut vectors = Vec::new();
        for field in fields {
            let v = field
                .split(',')
                .map(|x| {
                    x.trim().parse::<f32>().map_err(|_| Error::Parse {
                        line,
                        message: format!("bad feature value '{}'", x),
                    })
                })
                .collect::<Result<Vec<f32>>>()?;
            vectors.push(v);
        }
        if image_id.is_empty() || vectors.is_empty() {
            return Err(Error::Parse {
                line,
                message: "expected image_id<TAB>f1,...,fd".into(),
            });
        }
        let expected = *dim.get_or_insert(vectors[0].len());
        if let Some(bad) = vectors.iter().find(|v| v.len() != expected) {
            return Err(Error::DimensionMismatch {
                image_id,
                expected,
                found: bad.len(),
            });
        }
        let vector = vectors.remove(0);
        entries.push(ImageFeature {
            image_id,
            vector,
            regions: vectors,
        });
    }
    FeatureStore::new(dim.unwrap_or(0), entries)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::format(
                "binary feature file",
                format!("truncated at byte {}", self.pos),
            ));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        Ok(self
            .take(4 * n)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

fn parse_binary(bytes: &[u8]) -> Result<FeatureStore> {
    let mut cur = Cursor { bytes, pos: 4 };
    let dim = cur.u32()? as usize;
    let mut entries = Vec::new();
    while !cur.done() {
        let id_len = cur.u16()? as usize;
        let image_id = String::from_utf8(cur.take(id_len)?.to_vec())
            .map_err(|e| Error::format("binary feature file", e.to_string()))?;
        let vector = cur.f32s(dim)?;
        let n_regions = cur.u16()? as usize;
        let regions = (0..n_regions)
            .map(|_| cur.f32s(dim))
            .collect::<Result<Vec<_>>>()?;
        entries.push(ImageFeature {
            image_id,
            vector,
            regions,
        });
    }
    FeatureStore::new(dim, entries)
}
