//! Grapheme vocabulary: the acoustic modeling unit. Index 0 is the CTC
//! blank, followed by the fixed specials `<SPACE>`, `<UNK>` and the
//! apostrophe, then every grapheme observed in the training transcripts
//! (Chinese characters as-is, English letters uppercased) in code-point
//! order so rebuilds are reproducible.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use crate::error::{Error, Result};

pub const BLANK: usize = 0;
pub const SPACE: usize = 1;
pub const UNK: usize = 2;
pub const APOSTROPHE: usize = 3;

const BLANK_TOKEN: &str = "<BLANK>";
const SPACE_TOKEN: &str = "<SPACE>";
const UNK_TOKEN: &str = "<UNK>";

pub type TokenSequence = Vec<usize>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    symbols: Vec<String>,
    lookup: HashMap<char, usize>,
}

impl Vocabulary {
    /// Build from transcripts: specials first, then distinct observed
    /// graphemes sorted by code point.
    pub fn build(transcripts: impl IntoIterator<Item = impl AsRef<str>>) -> Self {
        let mut learned: BTreeSet<char> = BTreeSet::new();
        for t in transcripts {
            for ch in t.as_ref().chars() {
                match normalize_grapheme(ch) {
                    Grapheme::Space | Grapheme::Apostrophe => {}
                    Grapheme::Plain(c) => {
                        learned.insert(c);
                    }
                }
            }
        }
        Self::from_learned(learned.into_iter())
    }

    fn from_learned(learned: impl Iterator<Item = char>) -> Self {
        let mut symbols = vec![
            BLANK_TOKEN.to_string(),
            SPACE_TOKEN.to_string(),
            UNK_TOKEN.to_string(),
            "'".to_string(),
        ];
        symbols.extend(learned.map(|c| c.to_string()));
        let mut lookup = HashMap::new();
        for (i, s) in symbols.iter().enumerate() {
            let mut chars = s.chars();
            if let (Some(c), None) = (chars.next(), chars.next()) {
                lookup.insert(c, i);
            }
        }
        Self { symbols, lookup }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn symbol(&self, index: usize) -> Option<&str> {
        self.symbols.get(index).map(String::as_str)
    }

    /// Map text to token indices: spaces become `<SPACE>`, graphemes not in
    /// the vocabulary become `<UNK>`, and the blank is never emitted.
    pub fn encode(&self, text: &str) -> TokenSequence {
        text.chars()
            .map(|ch| match normalize_grapheme(ch) {
                Grapheme::Space => SPACE,
                Grapheme::Apostrophe => APOSTROPHE,
                Grapheme::Plain(c) => self.lookup.get(&c).copied().unwrap_or(UNK),
            })
            .collect()
    }

    /// Map token indices back to text. `<SPACE>` renders as ' ', `<UNK>` as
    /// U+FFFD; the blank index is decode-internal and rejected here.
    pub fn decode(&self, tokens: &[usize]) -> Result<String> {
        let mut out = String::new();
        for &t in tokens {
            match t {
                BLANK => {
                    return Err(Error::InvalidToken {
                        index: t,
                        detail: "blank is internal to CTC and never part of a transcript".into(),
                    })
                }
                SPACE => out.push(' '),
                UNK => out.push('\u{FFFD}'),
                _ => match self.symbols.get(t) {
                    Some(s) => out.push_str(s),
                    None => {
                        return Err(Error::InvalidToken {
                            index: t,
                            detail: format!("vocabulary has only {} symbols", self.symbols.len()),
                        })
                    }
                },
            }
        }
        Ok(out)
    }

    /// One symbol per line, line number = index, blank spelled `<BLANK>`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.symbols.join("\n") + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(&path)?;
        let lines: Vec<&str> = text.lines().collect();
        let expected = [BLANK_TOKEN, SPACE_TOKEN, UNK_TOKEN, "'"];
        if lines.len() < expected.len() || lines[..4] != expected {
            return Err(Error::Config(format!(
                "vocabulary file {} must start with {BLANK_TOKEN}, {SPACE_TOKEN}, {UNK_TOKEN}, '",
                path.as_ref().display()
            )));
        }
        let mut learned = Vec::new();
        for line in &lines[4..] {
            let mut chars = line.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) => learned.push(c),
                _ => {
                    return Err(Error::Config(format!(
                        "vocabulary entry {line:?} is not a single grapheme"
                    )))
                }
            }
        }
        Ok(Self::from_learned(learned.into_iter()))
    }
}

enum Grapheme {
    Space,
    Apostrophe,
    Plain(char),
}

fn normalize_grapheme(ch: char) -> Grapheme {
    if ch.is_whitespace() {
        Grapheme::Space
    } else if ch == '\'' {
        Grapheme::Apostrophe
    } else if ch.is_ascii_lowercase() {
        Grapheme::Plain(ch.to_ascii_uppercase())
    } else {
        Grapheme::Plain(ch)
    }
}
