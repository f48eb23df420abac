use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use super::captions::CaptionRecord;
use crate::error::{Error, Result};

/// Maps a (possibly multi-word) lemma phrase to its next, more generic phrase.
///
/// Keys and values are stored lowercased as word sequences. Following the
/// mapping from any key terminates; cycles are rejected at load time.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct HypernymLexicon {
    next: BTreeMap<Vec<String>, Vec<String>>,
    max_key_words: usize,
}

fn words(phrase: &str) -> Vec<String> {
    phrase.split_whitespace().map(str::to_lowercase).collect()
}

impl HypernymLexicon {
    pub fn new() -> Self {
        Self::default()
    }

    /// Build from `(phrase, hypernym)` pairs, with the same validation as the loader.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let mut lex = HypernymLexicon::new();
        for (i, (k, v)) in pairs.into_iter().enumerate() {
            lex.insert(k, v, i + 1)?;
        }
        lex.check_acyclic()?;
        Ok(lex)
    }

    fn insert(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        let k = words(key);
        let v = words(value);
        if k.is_empty() || v.is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty lexicon phrase".into(),
            });
        }
        if k == v {
            return Err(Error::LexiconSelfMap(k.join(" ")));
        }
        if v.len() > k.len() {
            return Err(Error::LexiconLengthening {
                key: k.join(" "),
                value: v.join(" "),
            });
        }
        if let Some(existing) = self.next.get(&k) {
            if *existing != v {
                return Err(Error::LexiconConflict {
                    line,
                    key: k.join(" "),
                    existing: existing.join(" "),
                });
            }
            return Ok(());
        }
        self.max_key_words = self.max_key_words.max(k.len());
        self.next.insert(k, v);
        Ok(())
    }

    fn check_acyclic(&self) -> Result<()> {
        // 0 = unvisited, 1 = on the current path, 2 = done
        let mut state: HashMap<&[String], u8> = HashMap::new();
        for start in self.next.keys() {
            let mut path: Vec<&[String]> = Vec::new();
            let mut cur: &[String] = start;
            loop {
                match state.get(cur).copied().unwrap_or(0) {
                    2 => break,
                    1 => {
                        let at = path.iter().position(|p| *p == cur).unwrap_or(0);
                        let mut cycle: Vec<String> =
                            path[at..].iter().map(|p| p.join(" ")).collect();
                        cycle.push(cur.join(" "));
                        return Err(Error::LexiconCycle(cycle));
                    }
                    _ => {}
                }
                state.insert(cur, 1);
                path.push(cur);
                match self.next.get(cur) {
                    Some(v) => cur = v,
                    None => break,
                }
            }
            for p in path {
                state.insert(p, 2);
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.next.len()
    }

    pub fn is_empty(&self) -> bool {
        self.next.is_empty()
    }

    /// Number of words in the longest key.
    pub fn max_key_words(&self) -> usize {
        self.max_key_words
    }

    /// The immediate hypernym of a word sequence.
    pub fn hypernym(&self, key: &[String]) -> Option<&[String]> {
        self.next.get(key).map(Vec::as_slice)
    }

    /// Increasingly generic replacements of `phrase`, nearest first.
    pub fn lookup(&self, phrase: &str) -> Vec<String> {
        let mut chain = Vec::new();
        let mut cur = words(phrase);
        while let Some(v) = self.next.get(&cur) {
            chain.push(v.join(" "));
            cur = v.clone();
            // acyclic, but never loop past the table size
            if chain.len() > self.next.len() {
                break;
            }
        }
        chain
    }

    /// Longest key matching `lemmas` starting at `start`: (key length, hypernym).
    pub fn longest_match(&self, lemmas: &[String], start: usize) -> Option<(usize, &[String])> {
        let max = self.max_key_words.min(lemmas.len().saturating_sub(start));
        (1..=max)
            .rev()
            .find_map(|len| self.hypernym(&lemmas[start..start + len]).map(|h| (len, h)))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[String], &[String])> {
        self.next.iter().map(|(k, v)| (k.as_slice(), v.as_slice()))
    }
}

pub fn load_lexicon(path: impl AsRef<Path>) -> Result<HypernymLexicon> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_lexicon(&text)
}

/// Parse `phrase<TAB>hypernym` lines. Blank lines and `#` comments are skipped.
pub fn parse_lexicon(text: &str) -> Result<HypernymLexicon> {
    let mut lex = HypernymLexicon::new();
    for (line, key, value) in parse_pairs(text)? {
        lex.insert(key, value, line)?;
    }
    lex.check_acyclic()?;
    Ok(lex)
}

fn parse_pairs(text: &str) -> Result<Vec<(usize, &str, &str)>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() || raw.starts_with('#') {
            continue;
        }
        let mut parts = raw.split('\t');
        match (parts.next(), parts.next(), parts.next()) {
            (Some(k), Some(v), None) if !k.trim().is_empty() && !v.trim().is_empty() => {
                out.push((idx + 1, k, v))
            }
            _ => {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: "expected two tab-separated columns".into(),
                })
            }
        }
    }
    Ok(out)
}

/// Surface-form corrections applied to captions before any other processing.
///
/// Matching is on the lowercased surface form; a hit replaces both the
/// surface and the lemma with the corrected word.
#[derive(Clone, Debug, Default)]
pub struct SpellingLexicon {
    fixes: HashMap<String, String>,
}

impl SpellingLexicon {
    pub fn parse(text: &str) -> Result<Self> {
        let mut fixes = HashMap::new();
        for (line, k, v) in parse_pairs(text)? {
            let (k, v) = (k.trim().to_lowercase(), v.trim().to_string());
            if v.contains(char::is_whitespace) || v.contains('|') {
                return Err(Error::Parse {
                    line,
                    message: format!("correction '{}' must be a single token", v),
                });
            }
            if k == v.to_lowercase() {
                return Err(Error::LexiconSelfMap(k));
            }
            fixes.insert(k, v);
        }
        Ok(SpellingLexicon { fixes })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn apply(&self, records: &mut [CaptionRecord]) -> usize {
        let mut replaced = 0;
        for tok in records.iter_mut().flat_map(|r| r.tokens.iter_mut()) {
            if let Some(fix) = self.fixes.get(&tok.surface.to_lowercase()) {
                tok.surface = fix.clone();
                tok.lemma = fix.to_lowercase();
                replaced += 1;
            }
        }
        replaced
    }
}
