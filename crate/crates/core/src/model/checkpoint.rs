//! Binary checkpoint: magic `DGMD`, then u32 LE version, h, d, vocabulary
//! size and m, then every parameter block as LE f64 in declaration order.
//! The vocabulary lives in a sidecar text file.

use super::{Dims, MatchModel, Params, Vocab};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DGMD";
pub const CHECKPOINT_VERSION: u32 = 1;

impl MatchModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let Dims { vocab, h, d, m } = self.dims();
        let mut out = Vec::with_capacity(24 + 8 * self.params.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        for v in [CHECKPOINT_VERSION, h as u32, d as u32, vocab as u32, m as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for block in self.params.blocks() {
            for x in block {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], vocab: Vocab) -> Result<Self> {
        if bytes.len() < 24 || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(Error::format("checkpoint", "missing DGMD header"));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
        let version = word(0);
        if version != CHECKPOINT_VERSION {
            return Err(Error::VersionMismatch {
                expected: CHECKPOINT_VERSION,
                found: version,
            });
        }
        let dims = Dims {
            h: word(1) as usize,
            d: word(2) as usize,
            vocab: word(3) as usize,
            m: word(4) as usize,
        };
        if dims.vocab != vocab.len() {
            return Err(Error::Shape(format!(
                "checkpoint has {} vocabulary rows, sidecar has {}",
                dims.vocab,
                vocab.len()
            )));
        }
        let mut params = Params::zeros(dims);
        let payload = &bytes[24..];
        if payload.len() != 8 * params.len() {
            return Err(Error::format(
                "checkpoint",
                format!("expected {} parameter bytes, found {}", 8 * params.len(), payload.len()),
            ));
        }
        let mut values = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        for block in params.blocks_mut() {
            for slot in block.iter_mut() {
                *slot = values.next().expect("length checked");
            }
        }
        Ok(MatchModel { vocab, params })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let m = MatchModel::new(Vocab::new(["x", "y"]), 4, 3, 2, 9).unwrap();
        let bytes = m.to_bytes();
        let back = MatchModel::from_bytes(&bytes, m.vocab.clone()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn rejects_bad_headers() {
        let m = MatchModel::new(Vocab::new(["x"]), 2, 2, 1, 0).unwrap();
        let mut bytes = m.to_bytes();
        assert!(MatchModel::from_bytes(&bytes[..bytes.len() - 8], m.vocab.clone()).is_err());
        assert!(MatchModel::from_bytes(&bytes, Vocab::new(["x", "y"])).is_err());
        bytes[4] = 7;
        assert!(matches!(
            MatchModel::from_bytes(&bytes, m.vocab.clone()),
            Err(Error::VersionMismatch { found: 7, .. })
        ));
    }
}
