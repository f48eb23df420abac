use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::tags::{first_bio_violation, TaggedToken, TokenParseError};
use crate::error::{Error, Result};

/// A tagged caption describing one image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CaptionRecord {
    pub image_id: String,
    pub sentence_id: String,
    pub tokens: Vec<TaggedToken>,
}

impl CaptionRecord {
    pub fn surface(&self) -> String {
        self.tokens
            .iter()
            .map(|t| t.surface.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// The record in caption-file form, without a trailing newline.
    pub fn to_line(&self) -> String {
        let mut line = format!("{}\t{}\t", self.image_id, self.sentence_id);
        for (i, tok) in self.tokens.iter().enumerate() {
            if i > 0 {
                line.push(' ');
            }
            let _ = write!(line, "{}", tok);
        }
        line
    }
}

pub fn load_captions(path: impl AsRef<Path>) -> Result<Vec<CaptionRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_captions(&text)
}

/// Parse caption lines. Blank lines and lines starting with `#` are skipped;
/// line numbers in errors are 1-based.
pub fn parse_captions(text: &str) -> Result<Vec<CaptionRecord>> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() || raw.starts_with('#') {
            continue;
        }
        let record = parse_line(raw, line)?;
        if !seen.insert((record.image_id.clone(), record.sentence_id.clone())) {
            return Err(Error::DuplicateCaption {
                line,
                image_id: record.image_id,
                sentence_id: record.sentence_id,
            });
        }
        records.push(record);
    }

    Ok(records)
}

fn parse_line(raw: &str, line: usize) -> Result<CaptionRecord> {
    let mut fields = raw.splitn(3, '\t');
    let image_id = fields.next().unwrap_or("");
    let sentence_id = fields.next();
    let body = fields.next();
    let (sentence_id, body) = match (sentence_id, body) {
        (Some(s), Some(b)) => (s, b),
        _ => {
            return Err(Error::Parse {
                line,
                message: "expected image_id<TAB>sentence_id<TAB>tokens".into(),
            })
        }
    };
    if image_id.is_empty() || sentence_id.is_empty() {
        return Err(Error::Parse {
            line,
            message: "empty image or sentence id".into(),
        });
    }

    let tokens = body
        .split_whitespace()
        .map(|field| {
            TaggedToken::parse(field).map_err(|e| match e {
                TokenParseError::Pos(tag) => Error::UnknownPos { line, tag },
                TokenParseError::Chunk(label) => Error::UnknownChunk { line, label },
                TokenParseError::Shape(field) => Error::Parse {
                    line,
                    message: format!("token '{}' is not surface|lemma|POS|CHUNK", field),
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;

    if tokens.is_empty() {
        return Err(Error::EmptyTokens { line });
    }
    if let Some((position, tag)) = first_bio_violation(tokens.iter().map(|t| t.chunk)) {
        return Err(Error::InvalidBio {
            line,
            position,
            label: tag.to_string(),
            kind: tag.kind().to_string(),
        });
    }

    Ok(CaptionRecord {
        image_id: image_id.to_string(),
        sentence_id: sentence_id.to_string(),
        tokens,
    })
}
