//! Fine-to-coarse phrase abstraction.
//!
//! Each rule takes a chunked expression and produces strictly more generic
//! expressions:
//!
//! | id | rule |
//! |----|------|
//! | R1 | drop the determiners of one noun phrase |
//! | R2 | replace a head noun (or multi-word phrase ending in one) by its next hypernym |
//! | R3 | drop a trailing prepositional phrase |
//! | R4 | drop adjective/adverb pre-modifiers inside one noun phrase |
//! | R5 | extract a subject or object noun phrase on its own |
//! | R6 | truncate after the head verb of the first verb phrase |
//!
//! Lexicon keys are matched longest-first against the lowercased lemma
//! sequence. A hypernym replacement also drops the determiners of the noun
//! phrase it lands in, so `a crowd of people` becomes `crowd`.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{CaptionRecord, ChunkTag, HypernymLexicon, PhraseKind, Pos, TaggedToken};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RuleId {
    #[serde(rename = "R1")]
    DropDeterminer,
    #[serde(rename = "R2")]
    Hypernym,
    #[serde(rename = "R3")]
    DropTrailingPp,
    #[serde(rename = "R4")]
    DropModifier,
    #[serde(rename = "R5")]
    ExtractNp,
    #[serde(rename = "R6")]
    TruncateVp,
}

impl RuleId {
    pub const ALL: [RuleId; 6] = [
        RuleId::DropDeterminer,
        RuleId::Hypernym,
        RuleId::DropTrailingPp,
        RuleId::DropModifier,
        RuleId::ExtractNp,
        RuleId::TruncateVp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RuleId::DropDeterminer => "R1",
            RuleId::Hypernym => "R2",
            RuleId::DropTrailingPp => "R3",
            RuleId::DropModifier => "R4",
            RuleId::ExtractNp => "R5",
            RuleId::TruncateVp => "R6",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RuleId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RuleId::ALL
            .into_iter()
            .find(|r| r.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown rule '{}'", s)))
    }
}

/// Which rules are switched on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RuleSet([bool; 6]);

impl RuleSet {
    pub fn all() -> Self {
        RuleSet([true; 6])
    }

    pub fn none() -> Self {
        RuleSet([false; 6])
    }

    pub fn with(mut self, rule: RuleId) -> Self {
        self.0[rule.index()] = true;
        self
    }

    pub fn without(mut self, rule: RuleId) -> Self {
        self.0[rule.index()] = false;
        self
    }

    pub fn contains(&self, rule: RuleId) -> bool {
        self.0[rule.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = RuleId> + '_ {
        RuleId::ALL.into_iter().filter(|r| self.contains(*r))
    }

    /// Parse a comma-separated list such as `R1,R3`.
    pub fn parse_list(s: &str) -> Result<Self> {
        s.split(',')
            .filter(|p| !p.trim().is_empty())
            .try_fold(RuleSet::none(), |set, p| Ok(set.with(p.parse()?)))
    }
}

impl Default for RuleSet {
    fn default() -> Self {
        RuleSet::all()
    }
}

impl<'a> FromIterator<&'a RuleId> for RuleSet {
    fn from_iter<I: IntoIterator<Item = &'a RuleId>>(iter: I) -> Self {
        iter.into_iter().fold(RuleSet::none(), |s, r| s.with(*r))
    }
}

/// Canonical key of a token sequence: lowercased lemmas joined by single spaces.
pub fn normalize(tokens: &[TaggedToken]) -> String {
    tokens
        .iter()
        .map(|t| t.norm_lemma())
        .collect::<Vec<_>>()
        .join(" ")
}

/// A chunked token sequence with its canonical key and abstraction level.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Expression {
    tokens: Vec<TaggedToken>,
    norm: String,
    level: u32,
}

#[derive(Clone, Debug)]
struct Chunk {
    kind: PhraseKind,
    tokens: Vec<TaggedToken>,
}

impl Expression {
    /// Build from tokens whose chunk labels already form a valid BIO sequence.
    pub fn new(tokens: Vec<TaggedToken>, level: u32) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::EmptyExpression);
        }
        if let Some((position, tag)) =
            crate::corpus::first_bio_violation(tokens.iter().map(|t| t.chunk))
        {
            return Err(Error::InvalidBio {
                line: 0,
                position,
                label: tag.to_string(),
                kind: tag.kind().to_string(),
            });
        }
        let norm = normalize(&tokens);
        Ok(Expression {
            tokens,
            norm,
            level,
        })
    }

    /// The level-0 expression of a caption, with punctuation removed.
    pub fn from_caption(record: &CaptionRecord) -> Result<Self> {
        let chunks = split_chunks(&record.tokens)
            .into_iter()
            .map(|mut c| {
                c.tokens.retain(|t| !t.pos.is_punctuation());
                c
            })
            .filter(|c| !c.tokens.is_empty())
            .collect::<Vec<_>>();
        if chunks.is_empty() {
            return Err(Error::EmptyExpression);
        }
        Ok(join_chunks(chunks, 0))
    }

    pub fn tokens(&self) -> &[TaggedToken] {
        &self.tokens
    }

    pub fn norm(&self) -> &str {
        &self.norm
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn lemmas(&self) -> Vec<String> {
        self.tokens.iter().map(TaggedToken::norm_lemma).collect()
    }

    pub fn surface(&self) -> String {
        self.tokens
            .iter()
            .map(|t| t.surface.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub(crate) fn with_level(mut self, level: u32) -> Self {
        self.level = level;
        self
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.surface())
    }
}

/// A subsumption between two expressions: `parent` is the more generic one.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Derivation {
    pub parent: String,
    pub child: String,
    pub rule: RuleId,
}

fn split_chunks(tokens: &[TaggedToken]) -> Vec<Chunk> {
    let mut chunks: Vec<Chunk> = Vec::new();
    for tok in tokens {
        match chunks.last_mut() {
            Some(last) if tok.chunk.is_inside() && last.kind == tok.chunk.kind() => {
                last.tokens.push(tok.clone())
            }
            _ => chunks.push(Chunk {
                kind: tok.chunk.kind(),
                tokens: vec![tok.clone()],
            }),
        }
    }
    chunks
}

/// Flatten chunks back to tokens, relabelling B/I so each chunk stays intact.
fn join_chunks(chunks: Vec<Chunk>, level: u32) -> Expression {
    let mut tokens = Vec::new();
    for chunk in chunks {
        for (i, mut tok) in chunk.tokens.into_iter().enumerate() {
            tok.chunk = match ChunkTag::inside(chunk.kind) {
                Some(inside) if i > 0 => inside,
                _ => ChunkTag::begin(chunk.kind),
            };
            tokens.push(tok);
        }
    }
    let norm = normalize(&tokens);
    Expression {
        tokens,
        norm,
        level,
    }
}

fn hypernym_tokens(words: &[String]) -> Vec<TaggedToken> {
    words
        .iter()
        .map(|w| TaggedToken::new(w, w, Pos::Nn, ChunkTag::InsideNp))
        .collect()
}

/// Every expression one application of `rule` produces from `expr`, in
/// positional order. May contain duplicates and `expr`'s own norm.
pub fn apply_rule(rule: RuleId, expr: &Expression, lexicon: &HypernymLexicon) -> Vec<Expression> {
    let chunks = split_chunks(&expr.tokens);
    let level = expr.level + 1;
    let mut out = Vec::new();
    let rebuild = |replace: usize, with: Chunk| {
        let mut cs = chunks.clone();
        cs[replace] = with;
        join_chunks(cs, level)
    };

    match rule {
        RuleId::DropDeterminer => {
            for (ci, c) in chunks.iter().enumerate() {
                if c.kind != PhraseKind::Np {
                    continue;
                }
                let kept: Vec<_> = c
                    .tokens
                    .iter()
                    .filter(|t| !t.pos.is_determiner())
                    .cloned()
                    .collect();
                if !kept.is_empty() && kept.len() < c.tokens.len() {
                    out.push(rebuild(ci, Chunk { kind: PhraseKind::Np, tokens: kept }));
                }
            }
        }
        RuleId::Hypernym => {
            // token index -> (chunk index, offset in chunk)
            let mut owner = Vec::with_capacity(expr.tokens.len());
            for (ci, c) in chunks.iter().enumerate() {
                for off in 0..c.tokens.len() {
                    owner.push((ci, off));
                }
            }
            let lemmas = expr.lemmas();
            let mut p = 0;
            while p < lemmas.len() {
                let max = lexicon.max_key_words().min(lemmas.len() - p);
                let hit = (1..=max).rev().find_map(|len| {
                    let hyp = lexicon.hypernym(&lemmas[p..p + len])?;
                    let (cs, _) = owner[p];
                    let (ce, end_off) = owner[p + len - 1];
                    let head_ok = chunks[cs].kind == PhraseKind::Np
                        && chunks[ce].kind == PhraseKind::Np
                        && end_off == chunks[ce].tokens.len() - 1
                        && expr.tokens[p + len - 1].pos.is_noun();
                    head_ok.then_some((len, hyp))
                });
                match hit {
                    Some((len, hyp)) => {
                        let (cs, start_off) = owner[p];
                        let (ce, _) = owner[p + len - 1];
                        let mut np: Vec<TaggedToken> = chunks[cs].tokens[..start_off]
                            .iter()
                            .filter(|t| !t.pos.is_determiner())
                            .cloned()
                            .collect();
                        np.extend(hypernym_tokens(hyp));
                        let mut cs_out: Vec<Chunk> = chunks[..cs].to_vec();
                        cs_out.push(Chunk { kind: PhraseKind::Np, tokens: np });
                        cs_out.extend(chunks[ce + 1..].iter().cloned());
                        out.push(join_chunks(cs_out, level));
                        p += len;
                    }
                    None => p += 1,
                }
            }
        }
        RuleId::DropTrailingPp => {
            let n = chunks.len();
            let cut = match chunks.last().map(|c| c.kind) {
                Some(PhraseKind::Pp) => Some(n - 1),
                Some(PhraseKind::Np) if n >= 2 && chunks[n - 2].kind == PhraseKind::Pp => {
                    Some(n - 2)
                }
                _ => None,
            };
            if let Some(cut) = cut.filter(|&c| c > 0) {
                out.push(join_chunks(chunks[..cut].to_vec(), level));
            }
        }
        RuleId::DropModifier => {
            for (ci, c) in chunks.iter().enumerate() {
                if c.kind != PhraseKind::Np || c.tokens.len() < 2 {
                    continue;
                }
                let head = c.tokens.len() - 1;
                let kept: Vec<_> = c
                    .tokens
                    .iter()
                    .enumerate()
                    .filter(|(i, t)| *i == head || !t.pos.is_modifier())
                    .map(|(_, t)| t.clone())
                    .collect();
                if kept.len() < c.tokens.len() {
                    out.push(rebuild(ci, Chunk { kind: PhraseKind::Np, tokens: kept }));
                }
            }
        }
        RuleId::ExtractNp => {
            if chunks.len() >= 2 {
                for (ci, c) in chunks.iter().enumerate() {
                    let after_pp = ci > 0 && chunks[ci - 1].kind == PhraseKind::Pp;
                    if c.kind == PhraseKind::Np && !after_pp {
                        out.push(join_chunks(vec![c.clone()], level));
                    }
                }
            }
        }
        RuleId::TruncateVp => {
            let vp = chunks.iter().position(|c| c.kind == PhraseKind::Vp);
            if let Some(ci) = vp.filter(|&ci| ci >= 1 && ci + 1 < chunks.len()) {
                let verb = &chunks[ci];
                if let Some(head) = verb.tokens.iter().rposition(|t| t.pos.is_verb()) {
                    let mut cs: Vec<Chunk> = chunks[..ci].to_vec();
                    cs.push(Chunk {
                        kind: PhraseKind::Vp,
                        tokens: verb.tokens[..=head].to_vec(),
                    });
                    out.push(join_chunks(cs, level));
                }
            }
        }
    }
    out
}

/// All distinct expressions one rule application produces from `expr`,
/// each with the derivation linking it back to `expr`.
///
/// Rules are tried in id order; when two rules yield the same expression the
/// lower rule id is recorded.
pub fn abstract_once(
    expr: &Expression,
    lexicon: &HypernymLexicon,
    rules: &RuleSet,
) -> Vec<(Expression, Derivation)> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for rule in rules.iter() {
        for generic in apply_rule(rule, expr, lexicon) {
            if generic.norm == expr.norm || !seen.insert(generic.norm.clone()) {
                continue;
            }
            let derivation = Derivation {
                parent: generic.norm.clone(),
                child: expr.norm.clone(),
                rule,
            };
            out.push((generic, derivation));
        }
    }
    out
}

/// Expressions reachable from one sentence, keyed by norm, plus the
/// derivations between them.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Closure {
    pub expressions: BTreeMap<String, Expression>,
    /// (parent norm, child norm) -> lowest rule id producing it
    pub derivations: BTreeMap<(String, String), RuleId>,
}

impl Closure {
    pub fn derivations(&self) -> impl Iterator<Item = Derivation> + '_ {
        self.derivations.iter().map(|((p, c), r)| Derivation {
            parent: p.clone(),
            child: c.clone(),
            rule: *r,
        })
    }
}

/// Breadth-first closure of [`abstract_once`] up to `max_levels` above the
/// sentence. Each expression keeps the lowest level it first appears at;
/// only newly discovered expressions are expanded further.
pub fn abstract_closure(
    sentence: &Expression,
    lexicon: &HypernymLexicon,
    rules: &RuleSet,
    max_levels: u32,
) -> Closure {
    let mut closure = Closure::default();
    let root = sentence.clone().with_level(0);
    closure.expressions.insert(root.norm.clone(), root.clone());

    let mut frontier = vec![root];
    for level in 1..=max_levels {
        let mut next: BTreeMap<String, Expression> = BTreeMap::new();
        for expr in &frontier {
            for (generic, d) in abstract_once(expr, lexicon, rules) {
                closure
                    .derivations
                    .entry((d.parent, d.child))
                    .and_modify(|r| *r = (*r).min(d.rule))
                    .or_insert(d.rule);
                if !closure.expressions.contains_key(&generic.norm) {
                    next.entry(generic.norm.clone())
                        .or_insert_with(|| generic.with_level(level));
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next.values().cloned().collect();
        closure.expressions.extend(next);
    }
    closure
}
