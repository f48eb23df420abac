//! The closed POS tag set and BIO chunk labels accepted in caption files.
//!
//! Tags follow the Penn Treebank inventory. Chunk labels are restricted to
//! noun, verb and prepositional phrases; everything else is `O`. Prepositional
//! chunks are single tokens, so there is no `I-PP`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

macro_rules! pos_tags {
    ($($variant:ident => $tag:literal),* $(,)?) => {
        #[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum Pos {
            $($variant),*
        }

        impl Pos {
            pub const ALL: &'static [Pos] = &[$(Pos::$variant),*];

            pub fn as_str(self) -> &'static str {
                match self {
                    $(Pos::$variant => $tag),*
                }
            }
        }

        impl FromStr for Pos {
            type Err = ();

            fn from_str(s: &str) -> Result<Self, ()> {
                match s {
                    $($tag => Ok(Pos::$variant),)*
                    _ => Err(()),
                }
            }
        }
    };
}

pos_tags! {
    Cc => "CC",
    Cd => "CD",
    Dt => "DT",
    Ex => "EX",
    Fw => "FW",
    In => "IN",
    Jj => "JJ",
    Jjr => "JJR",
    Jjs => "JJS",
    Ls => "LS",
    Md => "MD",
    Nn => "NN",
    Nns => "NNS",
    Nnp => "NNP",
    Nnps => "NNPS",
    Pdt => "PDT",
    Possessive => "POS",
    Prp => "PRP",
    PrpPoss => "PRP$",
    Rb => "RB",
    Rbr => "RBR",
    Rbs => "RBS",
    Rp => "RP",
    Sym => "SYM",
    To => "TO",
    Uh => "UH",
    Vb => "VB",
    Vbd => "VBD",
    Vbg => "VBG",
    Vbn => "VBN",
    Vbp => "VBP",
    Vbz => "VBZ",
    Wdt => "WDT",
    Wp => "WP",
    WpPoss => "WP$",
    Wrb => "WRB",
    Period => ".",
    Comma => ",",
    Colon => ":",
    OpenQuote => "``",
    CloseQuote => "''",
    LeftParen => "-LRB-",
    RightParen => "-RRB-",
    Dollar => "$",
    Hash => "#",
}

impl Pos {
    pub fn is_noun(self) -> bool {
        matches!(self, Pos::Nn | Pos::Nns | Pos::Nnp | Pos::Nnps)
    }

    pub fn is_verb(self) -> bool {
        matches!(
            self,
            Pos::Vb | Pos::Vbd | Pos::Vbg | Pos::Vbn | Pos::Vbp | Pos::Vbz
        )
    }

    pub fn is_determiner(self) -> bool {
        matches!(self, Pos::Dt | Pos::Pdt)
    }

    /// Adjectives and adverbs.
    pub fn is_modifier(self) -> bool {
        matches!(
            self,
            Pos::Jj | Pos::Jjr | Pos::Jjs | Pos::Rb | Pos::Rbr | Pos::Rbs
        )
    }

    pub fn is_punctuation(self) -> bool {
        matches!(
            self,
            Pos::Period
                | Pos::Comma
                | Pos::Colon
                | Pos::OpenQuote
                | Pos::CloseQuote
                | Pos::LeftParen
                | Pos::RightParen
                | Pos::Hash
        )
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PhraseKind {
    Np,
    Vp,
    Pp,
    O,
}

impl fmt::Display for PhraseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PhraseKind::Np => "NP",
            PhraseKind::Vp => "VP",
            PhraseKind::Pp => "PP",
            PhraseKind::O => "O",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ChunkTag {
    BeginNp,
    InsideNp,
    BeginPp,
    BeginVp,
    InsideVp,
    Outside,
}

impl ChunkTag {
    pub fn kind(self) -> PhraseKind {
        match self {
            ChunkTag::BeginNp | ChunkTag::InsideNp => PhraseKind::Np,
            ChunkTag::BeginPp => PhraseKind::Pp,
            ChunkTag::BeginVp | ChunkTag::InsideVp => PhraseKind::Vp,
            ChunkTag::Outside => PhraseKind::O,
        }
    }

    pub fn is_inside(self) -> bool {
        matches!(self, ChunkTag::InsideNp | ChunkTag::InsideVp)
    }

    pub fn begin(kind: PhraseKind) -> Self {
        match kind {
            PhraseKind::Np => ChunkTag::BeginNp,
            PhraseKind::Vp => ChunkTag::BeginVp,
            PhraseKind::Pp => ChunkTag::BeginPp,
            PhraseKind::O => ChunkTag::Outside,
        }
    }

    /// Continuation label, or `None` for phrase kinds that are single-token.
    pub fn inside(kind: PhraseKind) -> Option<Self> {
        match kind {
            PhraseKind::Np => Some(ChunkTag::InsideNp),
            PhraseKind::Vp => Some(ChunkTag::InsideVp),
            PhraseKind::Pp | PhraseKind::O => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ChunkTag::BeginNp => "B-NP",
            ChunkTag::InsideNp => "I-NP",
            ChunkTag::BeginPp => "B-PP",
            ChunkTag::BeginVp => "B-VP",
            ChunkTag::InsideVp => "I-VP",
            ChunkTag::Outside => "O",
        }
    }
}

impl FromStr for ChunkTag {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Ok(match s {
            "B-NP" => ChunkTag::BeginNp,
            "I-NP" => ChunkTag::InsideNp,
            "B-PP" => ChunkTag::BeginPp,
            "B-VP" => ChunkTag::BeginVp,
            "I-VP" => ChunkTag::InsideVp,
            "O" => ChunkTag::Outside,
            _ => return Err(()),
        })
    }
}

impl fmt::Display for ChunkTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One token of a tagged caption.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TaggedToken {
    pub surface: String,
    pub lemma: String,
    pub pos: Pos,
    pub chunk: ChunkTag,
}

impl TaggedToken {
    pub fn new(surface: &str, lemma: &str, pos: Pos, chunk: ChunkTag) -> Self {
        TaggedToken {
            surface: surface.to_string(),
            lemma: lemma.to_string(),
            pos,
            chunk,
        }
    }

    /// Parse the `surface|lemma|POS|CHUNK` form.
    ///
    /// The error carries the offending tag so callers can attach a line number.
    pub fn parse(field: &str) -> Result<Self, TokenParseError> {
        let parts: Vec<&str> = field.split('|').collect();
        if parts.len() != 4 {
            return Err(TokenParseError::Shape(field.to_string()));
        }
        if parts[0].is_empty() || parts[1].is_empty() {
            return Err(TokenParseError::Shape(field.to_string()));
        }
        let pos = parts[2]
            .parse()
            .map_err(|_| TokenParseError::Pos(parts[2].to_string()))?;
        let chunk = parts[3]
            .parse()
            .map_err(|_| TokenParseError::Chunk(parts[3].to_string()))?;
        Ok(TaggedToken::new(parts[0], parts[1], pos, chunk))
    }

    pub fn norm_lemma(&self) -> String {
        self.lemma.to_lowercase()
    }
}

impl fmt::Display for TaggedToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}|{}|{}|{}", self.surface, self.lemma, self.pos, self.chunk)
    }
}

#[derive(Debug, PartialEq, Eq)]
pub enum TokenParseError {
    Shape(String),
    Pos(String),
    Chunk(String),
}

/// Position of the first label that does not continue a chunk of its own kind.
pub fn first_bio_violation(tags: impl IntoIterator<Item = ChunkTag>) -> Option<(usize, ChunkTag)> {
    let mut prev: Option<ChunkTag> = None;
    for (i, tag) in tags.into_iter().enumerate() {
        if tag.is_inside() {
            let continues = prev.is_some_and(|p| p.kind() == tag.kind());
            if !continues {
                return Some((i, tag));
            }
        }
        prev = Some(tag);
    }
    None
}
