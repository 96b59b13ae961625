//! Bundled noun and modifier lexicons.
//!
//! Plain-text files, one lowercase entry per line, compounds joined by
//! spaces. Noun counting and head-noun validation use these rather than a
//! statistical tagger so results are deterministic and versioned with the
//! repo.

use std::collections::HashSet;
use std::sync::OnceLock;

const NOUNS: &str = include_str!("../../data/nouns.txt");
const MODIFIERS: &str = include_str!("../../data/modifiers.txt");

#[derive(Debug)]
pub struct Lexicon {
    nouns: HashSet<Vec<String>>,
    modifiers: HashSet<String>,
    max_noun_len: usize,
}

impl Lexicon {
    pub fn bundled() -> &'static Lexicon {
        static LEXICON: OnceLock<Lexicon> = OnceLock::new();
        LEXICON.get_or_init(|| Lexicon::from_text(NOUNS, MODIFIERS))
    }

    pub fn from_text(nouns: &str, modifiers: &str) -> Self {
        let nouns: HashSet<Vec<String>> = nouns
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(|l| l.split_whitespace().map(str::to_string).collect())
            .collect();
        let max_noun_len = nouns.iter().map(Vec::len).max().unwrap_or(1);
        Self {
            nouns,
            modifiers: modifiers
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(str::to_string)
                .collect(),
            max_noun_len,
        }
    }

    pub fn is_noun(&self, tokens: &[String]) -> bool {
        self.nouns.contains(tokens)
    }

    pub fn is_modifier(&self, token: &str) -> bool {
        self.modifiers.contains(token)
    }

    /// Longest noun compound starting at `tokens[start]`, as a token count.
    pub fn noun_match_at(&self, tokens: &[String], start: usize) -> Option<usize> {
        let limit = self.max_noun_len.min(tokens.len() - start);
        (1..=limit)
            .rev()
            .find(|&len| self.nouns.contains(&tokens[start..start + len]))
    }

    /// Number of maximal (greedy, non-overlapping) noun phrases in the
    /// token stream; multiword compounds count once.
    pub fn count_nouns(&self, tokens: &[String]) -> usize {
        let mut count = 0;
        let mut i = 0;
        while i < tokens.len() {
            match self.noun_match_at(tokens, i) {
                Some(len) => {
                    count += 1;
                    i += len;
                }
                None => i += 1,
            }
        }
        count
    }
}
