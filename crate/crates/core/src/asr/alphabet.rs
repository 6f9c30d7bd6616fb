//! Character alphabet for the CTC recognizer: blank + 26 letters + space.

use crate::error::{Error, Result};

pub const BLANK: usize = 0;

#[derive(Debug, Clone)]
pub struct Alphabet {
    symbols: Vec<char>,
}

impl Default for Alphabet {
    fn default() -> Self {
        let mut symbols = vec!['\0'];
        symbols.extend('a'..='z');
        symbols.push(' ');
        Alphabet { symbols }
    }
}

impl Alphabet {
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn encode(&self, text: &str) -> Result<Vec<usize>> {
        text.chars()
            .map(|c| {
                self.symbols
                    .iter()
                    .position(|&s| s == c)
                    .filter(|&i| i != BLANK)
                    .ok_or_else(|| Error::invalid(format!("character {c:?} not in alphabet")))
            })
            .collect()
    }

    pub fn decode(&self, indices: &[usize]) -> String {
        indices
            .iter()
            .filter(|&&i| i != BLANK)
            .map(|&i| self.symbols[i])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alphabet_has_28_symbols_with_reserved_blank() {
        let a = Alphabet::default();
        assert_eq!(a.len(), 28);
        assert_eq!(BLANK, 0);
    }

    #[test]
    fn encode_decode_round_trip() {
        let a = Alphabet::default();
        let ids = a.encode("help me").unwrap();
        assert_eq!(ids.len(), 7);
        assert!(ids.iter().all(|&i| i != BLANK));
        assert_eq!(a.decode(&ids), "help me");
    }

    #[test]
    fn unknown_characters_rejected() {
        let a = Alphabet::default();
        assert!(a.encode("Hello").is_err());
        assert!(a.encode("a1").is_err());
    }
}
