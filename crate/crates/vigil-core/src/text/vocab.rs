//! Vocabulary with reserved PAD/UNK entries, and fixed-width id encoding.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD_INDEX: u32 = 0;
pub const UNK_INDEX: u32 = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Bidirectional token ↔ index map. Indices 0 and 1 are reserved for
/// padding and unknown tokens; real tokens start at 2, ordered by
/// (frequency desc, token asc).
#[derive(Debug, Clone)]
pub struct Vocabulary {
    token_to_index: HashMap<String, u32>,
    index_to_token: Vec<String>,
    pub min_frequency: u32,
}

impl Vocabulary {
    /// Count tokens over the corpus and keep those at or above
    /// `min_frequency`. An empty corpus yields just the reserved entries.
    pub fn build<S: AsRef<str>>(corpus: &[Vec<S>], min_frequency: u32) -> Result<Vocabulary> {
        if min_frequency < 1 {
            return Err(Error::Config(format!(
                "min_frequency must be at least 1, got {min_frequency}"
            )));
        }
        let mut counts: HashMap<&str, u32> = HashMap::new();
        for row in corpus {
            for tok in row {
                let tok = tok.as_ref();
                // The reserved surface forms cannot be counted as tokens.
                if tok == PAD_TOKEN || tok == UNK_TOKEN {
                    continue;
                }
                *counts.entry(tok).or_insert(0) += 1;
            }
        }
        let mut kept: Vec<(&str, u32)> = counts
            .into_iter()
            .filter(|(_, c)| *c >= min_frequency)
            .collect();
        kept.sort_by(|(ta, ca), (tb, cb)| cb.cmp(ca).then_with(|| ta.cmp(tb)));

        let mut index_to_token = Vec::with_capacity(kept.len() + 2);
        index_to_token.push(PAD_TOKEN.to_string());
        index_to_token.push(UNK_TOKEN.to_string());
        let mut token_to_index = HashMap::with_capacity(kept.len());
        for (tok, _) in kept {
            token_to_index.insert(tok.to_string(), index_to_token.len() as u32);
            index_to_token.push(tok.to_string());
        }
        Ok(Vocabulary {
            token_to_index,
            index_to_token,
            min_frequency,
        })
    }

    /// Total entries including PAD and UNK.
    pub fn len(&self) -> usize {
        self.index_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        false // reserved entries are always present
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.token_to_index.get(token).copied()
    }

    /// Token id, falling back to UNK.
    pub fn encode_token(&self, token: &str) -> u32 {
        self.id(token).unwrap_or(UNK_INDEX)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.index_to_token.get(id as usize).map(String::as_str)
    }

    /// Tokens for the non-PAD prefix of an id row.
    pub fn decode(&self, ids: &[u32]) -> Vec<String> {
        ids.iter()
            .take_while(|&&id| id != PAD_INDEX)
            .map(|&id| {
                self.token(id)
                    .unwrap_or(UNK_TOKEN)
                    .to_string()
            })
            .collect()
    }

    /// One token per line, in index order, reserved entries first.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for tok in &self.index_to_token {
            out.push_str(tok);
            out.push('\n');
        }
        crate::util::write_atomic(path, out.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Vocabulary> {
        let content = fs::read_to_string(path)?;
        let lines: Vec<&str> = content.lines().collect();
        if lines.len() < 2 || lines[0] != PAD_TOKEN || lines[1] != UNK_TOKEN {
            return Err(Error::Format {
                line: 1,
                msg: format!(
                    "vocabulary file must start with '{PAD_TOKEN}' and '{UNK_TOKEN}' lines"
                ),
            });
        }
        let mut index_to_token = Vec::with_capacity(lines.len());
        let mut token_to_index = HashMap::new();
        for (i, line) in lines.iter().enumerate() {
            index_to_token.push(line.to_string());
            if i >= 2 {
                if token_to_index.insert(line.to_string(), i as u32).is_some() {
                    return Err(Error::Format {
                        line: i + 1,
                        msg: format!("duplicate token '{line}'"),
                    });
                }
            }
        }
        Ok(Vocabulary {
            token_to_index,
            index_to_token,
            min_frequency: 1,
        })
    }
}

/// Map tokens to ids (unknown → UNK), truncate to `max_len`, post-pad with
/// PAD. Returns the row and the original token count.
pub fn encode_pad<S: AsRef<str>>(
    tokens: &[S],
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<(Vec<u32>, usize)> {
    if max_len < 1 {
        return Err(Error::Config(format!(
            "max_len must be at least 1, got {max_len}"
        )));
    }
    let mut row = Vec::with_capacity(max_len);
    for tok in tokens.iter().take(max_len) {
        row.push(vocab.encode_token(tok.as_ref()));
    }
    row.resize(max_len, PAD_INDEX);
    Ok((row, tokens.len()))
}

/// Fixed-width id matrix with optional labels in {0, 1, 2}.
#[derive(Debug, Clone)]
pub struct EncodedBatch {
    ids: Vec<u32>,
    max_len: usize,
    pub labels: Option<Vec<u8>>,
    pub lengths: Vec<usize>,
}

impl EncodedBatch {
    pub fn encode<S: AsRef<str>>(
        rows: &[Vec<S>],
        labels: Option<&[u8]>,
        vocab: &Vocabulary,
        max_len: usize,
    ) -> Result<EncodedBatch> {
        if let Some(ls) = labels {
            if ls.len() != rows.len() {
                return Err(Error::Data(format!(
                    "{} labels for {} rows",
                    ls.len(),
                    rows.len()
                )));
            }
        }
        let mut ids = Vec::with_capacity(rows.len() * max_len);
        let mut lengths = Vec::with_capacity(rows.len());
        for row in rows {
            let (encoded, len) = encode_pad(row, vocab, max_len)?;
            ids.extend_from_slice(&encoded);
            lengths.push(len);
        }
        Ok(EncodedBatch {
            ids,
            max_len,
            labels: labels.map(<[u8]>::to_vec),
            lengths,
        })
    }

    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.ids[i * self.max_len..(i + 1) * self.max_len]
    }

    /// New batch holding the chosen rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> EncodedBatch {
        let mut ids = Vec::with_capacity(indices.len() * self.max_len);
        let mut lengths = Vec::with_capacity(indices.len());
        for &i in indices {
            ids.extend_from_slice(self.row(i));
            lengths.push(self.lengths[i]);
        }
        let labels = self
            .labels
            .as_ref()
            .map(|ls| indices.iter().map(|&i| ls[i]).collect());
        EncodedBatch {
            ids,
            max_len: self.max_len,
            labels,
            lengths,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(rows: &[&[&str]]) -> Vec<Vec<String>> {
        rows.iter()
            .map(|r| r.iter().map(|s| s.to_string()).collect())
            .collect()
    }

    #[test]
    fn counting_and_ordering() {
        let v = Vocabulary::build(&corpus(&[&["a", "b", "a"]]), 1).unwrap();
        assert_eq!(v.len(), 4);
        assert_eq!(v.id("a"), Some(2));
        assert_eq!(v.id("b"), Some(3));
    }

    #[test]
    fn min_frequency_filters() {
        let v = Vocabulary::build(&corpus(&[&["a", "b", "a"]]), 2).unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v.id("a"), Some(2));
        assert_eq!(v.id("b"), None);
    }

    #[test]
    fn empty_corpus_keeps_reserved_entries() {
        let v = Vocabulary::build(&corpus(&[]), 1).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v.token(PAD_INDEX), Some(PAD_TOKEN));
        assert_eq!(v.token(UNK_INDEX), Some(UNK_TOKEN));
    }

    #[test]
    fn frequency_ties_break_alphabetically() {
        let v = Vocabulary::build(&corpus(&[&["z", "k", "z", "k", "a"]]), 1).unwrap();
        // k and z both occur twice; k sorts first.
        assert_eq!(v.id("k"), Some(2));
        assert_eq!(v.id("z"), Some(3));
        assert_eq!(v.id("a"), Some(4));
    }

    #[test]
    fn encode_pad_pads_and_truncates() {
        let v = Vocabulary::build(&corpus(&[&["a", "b", "c"]]), 1).unwrap();
        let tokens: Vec<String> = vec!["a".into(), "b".into(), "c".into()];
        let (row, len) = encode_pad(&tokens, &v, 220).unwrap();
        assert_eq!(row.len(), 220);
        assert_eq!(len, 3);
        assert_eq!(&row[..3], &[2, 3, 4]);
        assert!(row[3..].iter().all(|&id| id == PAD_INDEX));

        let long: Vec<String> = (0..300).map(|_| "a".to_string()).collect();
        let (row, len) = encode_pad(&long, &v, 220).unwrap();
        assert_eq!(row.len(), 220);
        assert_eq!(len, 300);
        assert!(row.iter().all(|&id| id == 2));

        let (row, len) = encode_pad::<String>(&[], &v, 220).unwrap();
        assert_eq!(row, vec![PAD_INDEX; 220]);
        assert_eq!(len, 0);
    }

    #[test]
    fn unknown_tokens_map_to_unk() {
        let v = Vocabulary::build(&corpus(&[&["a"]]), 1).unwrap();
        assert_eq!(v.encode_token("zzz"), UNK_INDEX);
    }

    #[test]
    fn decode_inverts_encode_for_known_tokens() {
        let v = Vocabulary::build(&corpus(&[&["a", "b", "c"]]), 1).unwrap();
        let tokens: Vec<String> = vec!["c".into(), "a".into()];
        let (row, _) = encode_pad(&tokens, &v, 8).unwrap();
        assert_eq!(v.decode(&row), vec!["c", "a"]);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        let v = Vocabulary::build(&corpus(&[&["mày", "tụi", "mày"]]), 1).unwrap();
        v.save(&path).unwrap();
        let loaded = Vocabulary::load(&path).unwrap();
        assert_eq!(loaded.len(), v.len());
        assert_eq!(loaded.id("mày"), v.id("mày"));
        assert_eq!(loaded.id("tụi"), v.id("tụi"));
    }

    #[test]
    fn batch_select_reorders_rows() {
        let v = Vocabulary::build(&corpus(&[&["a", "b"]]), 1).unwrap();
        let rows = corpus(&[&["a"], &["b"], &["a", "b"]]);
        let batch = EncodedBatch::encode(&rows, Some(&[0, 1, 2]), &v, 4).unwrap();
        let picked = batch.select(&[2, 0]);
        assert_eq!(picked.len(), 2);
        assert_eq!(picked.row(0), batch.row(2));
        assert_eq!(picked.row(1), batch.row(0));
        assert_eq!(picked.labels.as_deref(), Some(&[2u8, 0][..]));
    }
}
