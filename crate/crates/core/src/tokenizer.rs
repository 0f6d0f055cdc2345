//! Byte-level BPE compatible with the GPT-2 `vocab.json` / `merges.txt` pair.

use std::collections::HashMap;
use std::path::Path;

use fancy_regex::Regex;

use crate::error::{Error, Result};
use crate::letter::{Letter, LetterSet, TokenText};

const PRETOKENIZE: &str =
    r"'s|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+";

pub struct Tokenizer {
    encoder: HashMap<String, u32>,
    decoder: Vec<Vec<u8>>,
    ranks: HashMap<(String, String), usize>,
    byte_encoder: [char; 256],
    pattern: Regex,
}

impl std::fmt::Debug for Tokenizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tokenizer")
            .field("vocab_size", &self.decoder.len())
            .field("merges", &self.ranks.len())
            .finish()
    }
}

/// The reversible byte -> printable-char table used by GPT-2's vocab files.
fn bytes_to_unicode() -> [char; 256] {
    let mut table = ['\0'; 256];
    let mut assigned = [false; 256];
    let printable = (b'!'..=b'~').chain(0xA1..=0xAC).chain(0xAE..=0xFF);
    for b in printable {
        table[b as usize] = char::from(b);
        assigned[b as usize] = true;
    }
    let mut n = 0u32;
    for b in 0..256usize {
        if !assigned[b] {
            table[b] = char::from_u32(256 + n).expect("valid code point");
            n += 1;
        }
    }
    table
}

impl Tokenizer {
    pub fn from_files(vocab: &Path, merges: &Path) -> Result<Self> {
        let vocab_json = std::fs::read_to_string(vocab).map_err(|e| Error::io(vocab, e))?;
        let merges_txt = std::fs::read_to_string(merges).map_err(|e| Error::io(merges, e))?;
        Self::from_strs(&vocab_json, &merges_txt)
    }

    pub fn from_strs(vocab_json: &str, merges_txt: &str) -> Result<Self> {
        let encoder: HashMap<String, u32> = serde_json::from_str(vocab_json)?;
        let n = encoder.len();
        let mut slots: Vec<Option<String>> = vec![None; n];
        for (tok, &id) in &encoder {
            let slot = slots.get_mut(id as usize).ok_or_else(|| {
                Error::Tokenizer(format!("id {id} of `{tok}` exceeds vocab size {n}"))
            })?;
            if slot.is_some() {
                return Err(Error::Tokenizer(format!("id {id} assigned twice")));
            }
            *slot = Some(tok.clone());
        }

        let byte_encoder = bytes_to_unicode();
        let byte_decoder: HashMap<char, u8> = byte_encoder
            .iter()
            .enumerate()
            .map(|(b, &c)| (c, b as u8))
            .collect();

        let mut decoder = Vec::with_capacity(n);
        for (id, tok) in slots.into_iter().enumerate() {
            let tok = tok.ok_or_else(|| Error::Tokenizer(format!("id {id} unassigned")))?;
            let bytes = tok
                .chars()
                .map(|c| {
                    byte_decoder.get(&c).copied().ok_or_else(|| {
                        Error::Tokenizer(format!(
                            "token `{tok}` has char {c:?} outside the byte alphabet"
                        ))
                    })
                })
                .collect::<Result<Vec<u8>>>()?;
            decoder.push(bytes);
        }

        let mut ranks = HashMap::new();
        for (i, line) in merges_txt
            .lines()
            .filter(|l| !l.starts_with("#version") && !l.trim().is_empty())
            .enumerate()
        {
            let (a, b) = line
                .split_once(' ')
                .ok_or_else(|| Error::Tokenizer(format!("malformed merge line `{line}`")))?;
            ranks.insert((a.to_string(), b.to_string()), i);
        }

        let pattern = Regex::new(PRETOKENIZE).map_err(|e| Error::Tokenizer(e.to_string()))?;
        Ok(Tokenizer {
            encoder,
            decoder,
            ranks,
            byte_encoder,
            pattern,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.decoder.len()
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        let mut ids = Vec::new();
        let mut start = 0;
        // fancy-regex only errors on backtrack-limit exhaustion, which this
        // pattern cannot hit; fall back to treating the rest as one piece.
        while start < text.len() {
            let piece = match self.pattern.find_from_pos(text, start) {
                Ok(Some(m)) if m.end() > start => {
                    if m.start() > start {
                        // unmatched gap (cannot occur with the GPT-2 pattern)
                        self.encode_piece(&text[start..m.start()], &mut ids);
                    }
                    start = m.end();
                    m.as_str()
                }
                _ => {
                    let rest = &text[start..];
                    start = text.len();
                    rest
                }
            };
            self.encode_piece(piece, &mut ids);
        }
        ids
    }

    fn encode_piece(&self, piece: &str, out: &mut Vec<u32>) {
        let mapped: String = piece
            .bytes()
            .map(|b| self.byte_encoder[b as usize])
            .collect();
        for sym in self.bpe(&mapped) {
            match self.encoder.get(&sym) {
                Some(&id) => out.push(id),
                // every single byte is in the vocab, so split as a last resort
                None => out.extend(
                    sym.chars()
                        .filter_map(|c| self.encoder.get(&c.to_string()).copied()),
                ),
            }
        }
    }

    fn bpe(&self, word: &str) -> Vec<String> {
        let mut parts: Vec<String> = word.chars().map(String::from).collect();
        if parts.len() < 2 {
            return parts;
        }
        loop {
            let best = parts
                .windows(2)
                .filter_map(|w| {
                    self.ranks
                        .get(&(w[0].clone(), w[1].clone()))
                        .map(|&r| (r, w))
                })
                .min_by_key(|(r, _)| *r)
                .map(|(_, w)| (w[0].clone(), w[1].clone()));
            let Some((first, second)) = best else { break };
            let mut merged = Vec::with_capacity(parts.len());
            let mut i = 0;
            while i < parts.len() {
                if i + 1 < parts.len() && parts[i] == first && parts[i + 1] == second {
                    merged.push(format!("{first}{second}"));
                    i += 2;
                } else {
                    merged.push(std::mem::take(&mut parts[i]));
                    i += 1;
                }
            }
            parts = merged;
            if parts.len() == 1 {
                break;
            }
        }
        parts
    }

    pub fn decode_bytes(&self, ids: &[u32]) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        for &id in ids {
            let bytes = self
                .decoder
                .get(id as usize)
                .ok_or(Error::TokenOutOfRange(id))?;
            out.extend_from_slice(bytes);
        }
        Ok(out)
    }

    /// Decodes to UTF-8, replacing invalid sequences.
    pub fn decode(&self, ids: &[u32]) -> Result<String> {
        Ok(String::from_utf8_lossy(&self.decode_bytes(ids)?).into_owned())
    }

    pub fn token_bytes(&self, id: u32) -> Option<&[u8]> {
        self.decoder.get(id as usize).map(Vec::as_slice)
    }

    /// Id of a single-token string, if the string is exactly one vocab entry.
    pub fn single_token(&self, text: &str) -> Option<u32> {
        let ids = self.encode(text);
        (ids.len() == 1).then(|| ids[0])
    }

    pub fn letter_token_id(&self, letter: Letter, leading_space: bool) -> Result<u32> {
        let text = if leading_space {
            format!(" {}", letter.as_char())
        } else {
            letter.as_char().to_string()
        };
        self.single_token(&text)
            .ok_or_else(|| Error::Tokenizer(format!("`{text}` is not a single token")))
    }

    pub fn letter_set(&self, leading_space: bool) -> Result<LetterSet> {
        let mut ids = [0u32; 5];
        for l in Letter::ALL {
            ids[l.index()] = self.letter_token_id(l, leading_space)?;
        }
        Ok(LetterSet { ids, leading_space })
    }

    /// Raw vocab entry (byte-level alphabet) for an id.
    pub fn vocab_entry(&self, id: u32) -> Option<String> {
        self.token_bytes(id)
            .map(|b| b.iter().map(|&x| self.byte_encoder[x as usize]).collect())
    }
}

/// Text-to-id conversion used by prompt rendering. Implemented by the GPT-2
/// tokenizer and by the symbolic vocabulary of toy models.
pub trait Codec: TokenText + Send + Sync {
    fn encode(&self, text: &str) -> Vec<u32>;
    fn vocab_size(&self) -> usize;
    fn letter_set(&self, leading_space: bool) -> Result<LetterSet>;
}

impl Codec for Tokenizer {
    fn encode(&self, text: &str) -> Vec<u32> {
        Tokenizer::encode(self, text)
    }

    fn vocab_size(&self) -> usize {
        Tokenizer::vocab_size(self)
    }

    fn letter_set(&self, leading_space: bool) -> Result<LetterSet> {
        Tokenizer::letter_set(self, leading_space)
    }
}

impl TokenText for Tokenizer {
    fn token_text(&self, id: u32) -> String {
        self.token_bytes(id)
            .map(|b| String::from_utf8_lossy(b).into_owned())
            .unwrap_or_else(|| format!("<{id}>"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// A tiny hand-built vocab: all 256 byte symbols plus a few merges.
    fn toy() -> Tokenizer {
        let table = bytes_to_unicode();
        let mut vocab: Vec<String> = table.iter().map(|c| c.to_string()).collect();
        let g = table[b' ' as usize];
        for extra in [
            format!("{g}A"),
            "he".into(),
            "hel".into(),
            "hell".into(),
            "hello".into(),
        ] {
            vocab.push(extra);
        }
        let json = serde_json::to_string(
            &vocab
                .iter()
                .enumerate()
                .map(|(i, t)| (t.clone(), i as u32))
                .collect::<HashMap<_, _>>(),
        )
        .unwrap();
        let merges = format!("#version: 0.2\n{g} A\nh e\nhe l\nhel l\nhell o\n");
        Tokenizer::from_strs(&json, &merges).unwrap()
    }

    #[test]
    fn byte_table_is_a_bijection() {
        let t = bytes_to_unicode();
        let mut seen: Vec<char> = t.to_vec();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 256);
        assert_eq!(t[b'A' as usize], 'A');
        assert_eq!(t[b' ' as usize], 'Ġ');
    }

    #[test]
    fn merges_apply_in_rank_order() {
        let t = toy();
        assert_eq!(t.encode("hello").len(), 1);
        assert_eq!(t.encode(" A").len(), 1);
        assert_ne!(t.encode("A"), t.encode(" A"));
    }

    #[test]
    fn empty_and_out_of_range() {
        let t = toy();
        assert!(t.encode("").is_empty());
        assert_eq!(t.decode(&[]).unwrap(), "");
        assert!(matches!(
            t.decode(&[99_999]),
            Err(Error::TokenOutOfRange(99_999))
        ));
    }

    #[test]
    fn rejects_non_bijective_vocab() {
        let json = r#"{"a": 0, "b": 0}"#;
        assert!(Tokenizer::from_strs(json, "").is_err());
        let json = r#"{"a": 0, "b": 2}"#;
        assert!(Tokenizer::from_strs(json, "").is_err());
    }

    #[test]
    fn invalid_utf8_boundaries_are_replaced() {
        let t = toy();
        // a lone continuation byte
        let id = t.encoder[&t.byte_encoder[0x80].to_string()];
        assert_eq!(t.decode(&[id]).unwrap(), "\u{FFFD}");
    }

    proptest::proptest! {
        #[test]
        fn round_trip_any_string(s in "\\PC{0,40}") {
            let t = toy();
            proptest::prop_assert_eq!(t.decode(&t.encode(&s)).unwrap(), s);
        }
    }
}
