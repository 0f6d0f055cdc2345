use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A multiple-choice answer letter, `A` through `E`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Letter {
    A,
    B,
    C,
    D,
    E,
}

impl Letter {
    pub const ALL: [Letter; 5] = [Letter::A, Letter::B, Letter::C, Letter::D, Letter::E];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Letter> {
        Letter::ALL
            .get(i)
            .copied()
            .ok_or_else(|| Error::InvalidLetter(format!("index {i}")))
    }

    pub fn as_char(self) -> char {
        (b'A' + self as u8) as char
    }

    /// The first `arity` letters.
    pub fn first(arity: usize) -> &'static [Letter] {
        &Letter::ALL[..arity.min(5)]
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

impl FromStr for Letter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" => Ok(Letter::A),
            "B" | "b" => Ok(Letter::B),
            "C" | "c" => Ok(Letter::C),
            "D" | "d" => Ok(Letter::D),
            "E" | "e" => Ok(Letter::E),
            other => Err(Error::InvalidLetter(other.to_string())),
        }
    }
}

/// Vocabulary ids of the five answer-letter tokens in one spelling variant
/// (with or without the leading space).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LetterSet {
    pub ids: [u32; 5],
    pub leading_space: bool,
}

impl LetterSet {
    pub fn id(&self, letter: Letter) -> u32 {
        self.ids[letter.index()]
    }

    pub fn anchor(&self) -> u32 {
        self.ids[0]
    }

    pub fn letter_of(&self, id: u32) -> Option<Letter> {
        self.ids
            .iter()
            .position(|&x| x == id)
            .map(|i| Letter::ALL[i])
    }
}

/// Anything that can render a token id as text for reports.
pub trait TokenText {
    fn token_text(&self, id: u32) -> String;
}
