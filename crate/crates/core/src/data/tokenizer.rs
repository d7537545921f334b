use crate::error::{invalid, Result};

pub const PAD: u32 = 0;
pub const EOT: u32 = 1;
pub const PAD_CHAR: char = '\u{2400}';
pub const EOT_CHAR: char = '\u{2404}';
/// Display symbol of the mask token. Never produced by [`Tokenizer::encode`].
pub const MASK_CHAR: char = '\u{2592}';

/// Character-level tokenizer. Ids `0..vocab()` are predictable symbols (pad
/// and end-of-text first); id `vocab()` is the mask token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tokenizer {
    name: String,
    symbols: Vec<char>,
}

impl Tokenizer {
    fn with_symbols(name: String, extra: impl IntoIterator<Item = char>) -> Self {
        let mut symbols = vec![PAD_CHAR, EOT_CHAR];
        symbols.extend(extra);
        Self { name, symbols }
    }

    /// States of an `n`-state chain as the letters `a`, `b`, ...
    pub fn markov(states: usize) -> Result<Self> {
        if !(2..=26).contains(&states) {
            return invalid(format!("markov tokenizer supports 2..=26 states, got {states}"));
        }
        Ok(Self::with_symbols(format!("markov-{states}"), (b'a'..).take(states).map(char::from)))
    }

    /// Digits and the operators used by the addition corpus.
    pub fn arithmetic() -> Self {
        Self::with_symbols("arith".into(), "0123456789+=>,".chars())
    }

    /// Letters `a..j` and the copy/reverse markers.
    pub fn strings() -> Self {
        Self::with_symbols("strings".into(), "abcdefghij<>=".chars())
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "arith" => Ok(Self::arithmetic()),
            "strings" => Ok(Self::strings()),
            _ => match name.strip_prefix("markov-").map(str::parse::<usize>) {
                Some(Ok(n)) => Self::markov(n),
                _ => invalid(format!("unknown tokenizer {name:?}")),
            },
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Predictable vocabulary size `V`.
    pub fn vocab(&self) -> usize {
        self.symbols.len()
    }

    pub fn mask_id(&self) -> u32 {
        self.symbols.len() as u32
    }

    pub fn id_of(&self, c: char) -> Option<u32> {
        self.symbols.iter().position(|s| *s == c).map(|i| i as u32)
    }

    pub fn symbol(&self, id: u32) -> Option<char> {
        if id == self.mask_id() {
            Some(MASK_CHAR)
        } else {
            self.symbols.get(id as usize).copied()
        }
    }

    pub fn encode(&self, text: &str) -> Result<Vec<u32>> {
        text.chars()
            .enumerate()
            .map(|(i, c)| match self.id_of(c) {
                Some(id) => Ok(id),
                None => invalid(format!("unknown symbol {c:?} at position {i}")),
            })
            .collect()
    }

    pub fn decode(&self, ids: &[u32]) -> Result<String> {
        ids.iter()
            .enumerate()
            .map(|(i, &id)| match self.symbol(id) {
                Some(c) => Ok(c),
                None => invalid(format!("unknown token id {id} at position {i}")),
            })
            .collect()
    }
}
