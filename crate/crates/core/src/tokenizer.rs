//! Word-piece vocabulary training, encoding and decoding.
//!
//! Words are split on whitespace. The first piece of a word is stored as-is and
//! every following piece carries a `##` prefix, so `"aaab"` may become
//! `["aa", "##a", "##b"]`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const CONTINUATION: &str = "##";

/// Index of a piece in a [`Vocabulary`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenId(pub u32);

impl TokenId {
    pub const PAD: TokenId = TokenId(0);
    pub const BOS: TokenId = TokenId(1);
    pub const EOS: TokenId = TokenId(2);
    pub const UNK: TokenId = TokenId(3);

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn is_special(self) -> bool {
        self.0 < SPECIALS.len() as u32
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

pub const SPECIALS: [&str; 4] = ["[PAD]", "[BOS]", "[EOS]", "[UNK]"];

/// An immutable word-piece vocabulary. Ids are dense and the four specials
/// occupy ids 0 to 3.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    pieces: Vec<String>,
    ids: HashMap<String, TokenId>,
    max_piece_chars: usize,
}

impl Vocabulary {
    /// Builds a vocabulary from an ordered piece list whose first four entries
    /// must be the specials.
    pub fn from_pieces(pieces: Vec<String>) -> Result<Self> {
        if pieces.len() < SPECIALS.len() || pieces[..SPECIALS.len()] != SPECIALS {
            return Err(Error::Format(format!(
                "vocabulary must start with {SPECIALS:?}"
            )));
        }
        let mut ids = HashMap::with_capacity(pieces.len());
        let mut max_piece_chars = 1;
        for (i, piece) in pieces.iter().enumerate() {
            if piece.is_empty() || piece.chars().any(char::is_whitespace) {
                return Err(Error::Format(format!("invalid piece {piece:?} at line {i}")));
            }
            if ids.insert(piece.clone(), TokenId(i as u32)).is_some() {
                return Err(Error::Format(format!("duplicate piece {piece:?}")));
            }
            let body = piece.strip_prefix(CONTINUATION).unwrap_or(piece);
            max_piece_chars = max_piece_chars.max(body.chars().count());
        }
        Ok(Vocabulary {
            pieces,
            ids,
            max_piece_chars,
        })
    }

    /// Trains a vocabulary on whitespace-split `corpus`.
    ///
    /// The alphabet holds every character seen, in both word-initial and `##`
    /// form. Merges then repeatedly join the adjacent pair maximising
    /// `count(ab) / (count(a) * count(b))`, breaking ties by higher pair count
    /// and then lexicographically, until `vocab_size` pieces exist or no pair
    /// occurs at least `min_frequency` times.
    pub fn train<S: AsRef<str>>(
        corpus: &[S],
        vocab_size: usize,
        min_frequency: usize,
    ) -> Result<Self> {
        let mut word_counts: BTreeMap<&str, usize> = BTreeMap::new();
        for text in corpus {
            for word in text.as_ref().split_whitespace() {
                *word_counts.entry(word).or_default() += 1;
            }
        }
        if word_counts.is_empty() {
            return Err(Error::Input("cannot train a tokenizer on an empty corpus".into()));
        }

        let mut alphabet: Vec<String> = word_counts
            .keys()
            .flat_map(|w| w.chars())
            .flat_map(|c| [c.to_string(), format!("{CONTINUATION}{c}")])
            .collect();
        alphabet.sort();
        alphabet.dedup();
        let minimum = alphabet.len() + SPECIALS.len();
        if vocab_size < minimum {
            return Err(Error::Capacity(format!(
                "vocab_size {vocab_size} is below the {minimum} pieces needed for the alphabet and specials"
            )));
        }

        let mut pieces: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        pieces.extend(alphabet);

        let mut words: Vec<(Vec<String>, usize)> = word_counts
            .iter()
            .map(|(w, &count)| {
                let symbols = w
                    .chars()
                    .enumerate()
                    .map(|(i, c)| {
                        if i == 0 {
                            c.to_string()
                        } else {
                            format!("{CONTINUATION}{c}")
                        }
                    })
                    .collect();
                (symbols, count)
            })
            .collect();

        let min_frequency = min_frequency.max(1);
        while pieces.len() < vocab_size {
            let Some((left, right)) = best_pair(&words, min_frequency) else {
                break;
            };
            let merged = merge_name(&left, &right);
            for (symbols, _) in &mut words {
                let mut i = 0;
                while i + 1 < symbols.len() {
                    if symbols[i] == left && symbols[i + 1] == right {
                        symbols[i] = merged.clone();
                        symbols.remove(i + 1);
                    }
                    i += 1;
                }
            }
            if !pieces.contains(&merged) {
                pieces.push(merged);
            }
        }
        Vocabulary::from_pieces(pieces)
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn pieces(&self) -> &[String] {
        &self.pieces
    }

    pub fn id(&self, piece: &str) -> Option<TokenId> {
        self.ids.get(piece).copied()
    }

    pub fn piece(&self, id: TokenId) -> Result<&str> {
        self.pieces
            .get(id.index())
            .map(String::as_str)
            .ok_or(Error::TokenRange {
                id: id.0,
                size: self.pieces.len(),
            })
    }

    /// Greedy longest-match-first encoding. Characters with no piece become
    /// [`TokenId::UNK`]; encoding never fails.
    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        let mut out = Vec::new();
        let mut buf = String::new();
        for word in text.split_whitespace() {
            let chars: Vec<char> = word.chars().collect();
            let mut start = 0;
            while start < chars.len() {
                let longest = (start + 1..=chars.len().min(start + self.max_piece_chars))
                    .rev()
                    .find_map(|end| {
                        buf.clear();
                        if start > 0 {
                            buf.push_str(CONTINUATION);
                        }
                        buf.extend(&chars[start..end]);
                        self.ids.get(buf.as_str()).map(|&id| (id, end))
                    });
                match longest {
                    Some((id, end)) => {
                        out.push(id);
                        start = end;
                    }
                    None => {
                        out.push(TokenId::UNK);
                        start += 1;
                    }
                }
            }
        }
        out
    }

    /// Joins pieces back into text, dropping specials.
    pub fn decode(&self, ids: &[TokenId]) -> Result<String> {
        let mut text = String::new();
        for &id in ids {
            let piece = self.piece(id)?;
            if id.is_special() {
                continue;
            }
            match piece.strip_prefix(CONTINUATION) {
                Some(rest) => text.push_str(rest),
                None => {
                    if !text.is_empty() {
                        text.push(' ');
                    }
                    text.push_str(piece);
                }
            }
        }
        Ok(text)
    }

    /// Checks that every id is in range.
    pub fn check_ids(&self, ids: &[TokenId]) -> Result<()> {
        match ids.iter().find(|id| id.index() >= self.len()) {
            Some(id) => Err(Error::TokenRange {
                id: id.0,
                size: self.len(),
            }),
            None => Ok(()),
        }
    }

    /// One piece per line; the line number is the id.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for piece in &self.pieces {
            out.push_str(piece);
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Vocabulary::from_pieces(text.lines().map(str::to_string).collect())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(self.to_text().as_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Vocabulary::from_text(&text)
    }
}

fn merge_name(left: &str, right: &str) -> String {
    format!("{left}{}", right.strip_prefix(CONTINUATION).unwrap_or(right))
}

fn best_pair(words: &[(Vec<String>, usize)], min_frequency: usize) -> Option<(String, String)> {
    let mut symbol_counts: HashMap<&str, usize> = HashMap::new();
    let mut pair_counts: HashMap<(&str, &str), usize> = HashMap::new();
    for (symbols, count) in words {
        for s in symbols {
            *symbol_counts.entry(s).or_default() += count;
        }
        for pair in symbols.windows(2) {
            *pair_counts.entry((&pair[0], &pair[1])).or_default() += count;
        }
    }
    pair_counts
        .into_iter()
        .filter(|&(_, count)| count >= min_frequency)
        .map(|((a, b), count)| {
            let score = count as f64 / (symbol_counts[a] as f64 * symbol_counts[b] as f64);
            (score, count, a, b)
        })
        .max_by(|x, y| {
            x.0.total_cmp(&y.0)
                .then(x.1.cmp(&y.1))
                .then_with(|| (y.2, y.3).cmp(&(x.2, x.3)))
        })
        .map(|(_, _, a, b)| (a.to_string(), b.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(vocab: &Vocabulary, pieces: &[&str]) -> Vec<TokenId> {
        pieces.iter().map(|p| vocab.id(p).unwrap()).collect()
    }

    #[test]
    fn merges_repeated_pairs() {
        let vocab = Vocabulary::train(&["aaab", "aaab"], 10, 1).unwrap();
        assert_eq!(vocab.len(), 10);
        assert!(vocab.id("a").is_some() && vocab.id("b").is_some());
        let multi = vocab
            .pieces()
            .iter()
            .skip(4)
            .filter(|p| p.trim_start_matches(CONTINUATION).chars().count() > 1)
            .count();
        assert!(multi >= 1);
        assert_eq!(vocab.decode(&vocab.encode("aaab")).unwrap(), "aaab");
    }

    #[test]
    fn alphabet_only_when_no_room() {
        // alphabet: a, b, ##a, ##b
        let vocab = Vocabulary::train(&["aaab"], 8, 1).unwrap();
        assert_eq!(&vocab.pieces()[..4], &SPECIALS);
        assert_eq!(&vocab.pieces()[4..], &["##a", "##b", "a", "b"]);
        assert!(matches!(
            Vocabulary::train(&["aaab"], 7, 1),
            Err(Error::Capacity(_))
        ));
        let empty: [&str; 0] = [];
        assert!(Vocabulary::train(&empty, 100, 1).is_err());
        assert!(Vocabulary::train(&["   "], 100, 1).is_err());
    }

    #[test]
    fn greedy_longest_match() {
        let pieces = ["[PAD]", "[BOS]", "[EOS]", "[UNK]", "a", "##a", "##b", "aa"];
        let vocab = Vocabulary::from_pieces(pieces.iter().map(|s| s.to_string()).collect()).unwrap();
        let encoded = vocab.encode("aaab");
        assert_eq!(encoded, ids(&vocab, &["aa", "##a", "##b"]));
        assert_eq!(vocab.decode(&encoded).unwrap(), "aaab");
        assert_eq!(vocab.encode("aa"), ids(&vocab, &["aa"]));
        assert_eq!(vocab.encode("axa"), ids(&vocab, &["a", "[UNK]", "##a"]));
        assert_eq!(vocab.decode(&[]).unwrap(), "");
        assert!(matches!(
            vocab.decode(&[TokenId(99)]),
            Err(Error::TokenRange { id: 99, .. })
        ));
    }

    #[test]
    fn whitespace_collapses() {
        let vocab = Vocabulary::train(&["PO BID daily"], 200, 1).unwrap();
        let encoded = vocab.encode("  PO\t BID\n daily ");
        assert_eq!(vocab.decode(&encoded).unwrap(), "PO BID daily");
    }

    #[test]
    fn text_round_trip() {
        let vocab = Vocabulary::train(&["one two three", "two three"], 40, 1).unwrap();
        let text = vocab.to_text();
        assert!(text.starts_with("[PAD]\n[BOS]\n[EOS]\n[UNK]\n"));
        assert_eq!(Vocabulary::from_text(&text).unwrap(), vocab);
        assert!(Vocabulary::from_text("a\nb\n").is_err());
    }
}
