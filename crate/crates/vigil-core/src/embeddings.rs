//! Pre-trained word vectors in the fastText `.vec` text format.
//!
//! Format: a header line `count dim` (two integers), then one line per
//! token: the token (any non-space characters) followed by `dim`
//! space-separated decimal floats. Duplicate tokens keep the last
//! occurrence; a header count that disagrees with the actual number of rows
//! is accepted with a warning, since published files are frequently off.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::layers::EmbeddingTable;
use crate::rng::RngState;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::text::vocab::Vocabulary;

/// Parsed `.vec` file: declared counts plus the token → vector map in file
/// order.
#[derive(Debug, Clone)]
pub struct VecFile<T> {
    pub declared_count: usize,
    pub dim: usize,
    entries: IndexMap<String, Vec<T>>,
}

impl<T: Scalar> VecFile<T> {
    pub fn parse(path: &Path) -> Result<VecFile<T>> {
        let file = File::open(path)?;
        Self::read(BufReader::new(file))
    }

    pub fn read<R: BufRead>(reader: R) -> Result<VecFile<T>> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .transpose()?
            .ok_or(Error::Format {
                line: 1,
                msg: "empty file, expected 'count dim' header".into(),
            })?;
        let mut parts = header.split_whitespace();
        let (count, dim) = match (parts.next(), parts.next(), parts.next()) {
            (Some(c), Some(d), None) => {
                let count = c.parse::<usize>().map_err(|_| bad_header(&header))?;
                let dim = d.parse::<usize>().map_err(|_| bad_header(&header))?;
                (count, dim)
            }
            _ => return Err(bad_header(&header)),
        };
        if dim == 0 {
            return Err(bad_header(&header));
        }

        let mut entries: IndexMap<String, Vec<T>> = IndexMap::new();
        for (idx, line) in lines.enumerate() {
            let line_no = idx + 2;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let token = fields.next().expect("non-empty line has a first field");
            let values: Vec<T> = fields
                .map(|f| {
                    f.parse::<f64>().map(T::from_f64).map_err(|_| Error::Format {
                        line: line_no,
                        msg: format!("'{f}' is not a number"),
                    })
                })
                .collect::<Result<_>>()?;
            if values.len() != dim {
                return Err(Error::Format {
                    line: line_no,
                    msg: format!("expected {dim} vector components, got {}", values.len()),
                });
            }
            if entries.insert(token.to_string(), values).is_some() {
                log::warn!("duplicate token '{token}' at line {line_no}; keeping the last");
            }
        }
        if entries.len() != count {
            log::warn!(
                "header declares {count} vectors but file holds {}",
                entries.len()
            );
        }
        Ok(VecFile {
            declared_count: count,
            dim,
            entries,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[T]> {
        self.entries.get(token).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[T])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// Write in the same text format, header reflecting the actual count.
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{} {}", self.entries.len(), self.dim)?;
        for (token, values) in &self.entries {
            write!(w, "{token}")?;
            for v in values {
                write!(w, " {v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Construct in memory (used by tests and fixture generation).
    pub fn from_entries(dim: usize, entries: impl IntoIterator<Item = (String, Vec<T>)>) -> VecFile<T> {
        let entries: IndexMap<String, Vec<T>> = entries.into_iter().collect();
        VecFile {
            declared_count: entries.len(),
            dim,
            entries,
        }
    }
}

fn bad_header(line: &str) -> Error {
    Error::Format {
        line: 1,
        msg: format!("expected header 'count dim', got '{line}'"),
    }
}

/// Result of aligning a vector file to a vocabulary.
#[derive(Debug)]
pub struct EmbeddingBuild<T> {
    pub table: EmbeddingTable<T>,
    /// Found / (vocab size − 2): PAD and UNK are excluded from coverage.
    pub coverage: f64,
    pub found: usize,
}

/// Build the `[vocab, dim]` embedding matrix: PAD stays zero, known tokens
/// take their file vector, everything else (including UNK) is initialized
/// uniformly in [-0.05, 0.05].
pub fn build_embedding_matrix<T: Scalar>(
    vec_file: &VecFile<T>,
    vocab: &Vocabulary,
    embed_dim: usize,
    trainable: bool,
    rng: &mut RngState,
) -> Result<EmbeddingBuild<T>> {
    if vec_file.dim != embed_dim {
        return Err(Error::Config(format!(
            "vector file dimension {} does not match configured embedding dimension {embed_dim}",
            vec_file.dim
        )));
    }
    let vocab_size = vocab.len();
    let mut weights = Tensor::zeros(&[vocab_size, embed_dim]);
    let mut found = 0usize;
    let lim = T::from_f64(0.05);
    for idx in 1..vocab_size {
        let token = vocab.token(idx as u32).expect("index within vocab");
        let row = &mut weights.data_mut()[idx * embed_dim..(idx + 1) * embed_dim];
        match (idx as u32 != crate::text::vocab::UNK_INDEX)
            .then(|| vec_file.get(token))
            .flatten()
        {
            Some(vector) => {
                row.copy_from_slice(vector);
                found += 1;
            }
            None => {
                for v in row.iter_mut() {
                    *v = rng.uniform(-lim, lim);
                }
            }
        }
    }
    let real_tokens = vocab_size.saturating_sub(2);
    let coverage = if real_tokens == 0 {
        0.0
    } else {
        found as f64 / real_tokens as f64
    };
    Ok(EmbeddingBuild {
        table: EmbeddingTable::new(weights, trainable)?,
        coverage,
        found,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn vocab_with(tokens: &[&str]) -> Vocabulary {
        let corpus: Vec<Vec<String>> =
            vec![tokens.iter().map(|s| s.to_string()).collect()];
        Vocabulary::build(&corpus, 1).unwrap()
    }

    #[test]
    fn minimal_well_formed_file() {
        let vf = VecFile::<f32>::read(Cursor::new("2 3\na 1 2 3\nb 4 5 6\n")).unwrap();
        assert_eq!(vf.dim, 3);
        assert_eq!(vf.len(), 2);
        assert_eq!(vf.get("a"), Some(&[1.0f32, 2.0, 3.0][..]));
        assert_eq!(vf.get("b"), Some(&[4.0f32, 5.0, 6.0][..]));
    }

    #[test]
    fn wrong_component_count_names_line() {
        let err = VecFile::<f32>::read(Cursor::new("1 3\na 1 2\n")).unwrap_err();
        assert!(matches!(err, Error::Format { line: 2, .. }), "{err}");
    }

    #[test]
    fn malformed_header_is_line_one() {
        let err = VecFile::<f32>::read(Cursor::new("three hundred\na 1\n")).unwrap_err();
        assert!(matches!(err, Error::Format { line: 1, .. }));
    }

    #[test]
    fn count_mismatch_is_lenient() {
        let vf = VecFile::<f32>::read(Cursor::new("5 2\na 1 2\nb 3 4\nc 5 6\n")).unwrap();
        assert_eq!(vf.len(), 3);
        assert_eq!(vf.declared_count, 5);
    }

    #[test]
    fn duplicate_token_keeps_last() {
        let vf = VecFile::<f32>::read(Cursor::new("2 2\na 1 1\na 9 9\n")).unwrap();
        assert_eq!(vf.get("a"), Some(&[9.0f32, 9.0][..]));
    }

    #[test]
    fn write_parse_round_trip_is_exact() {
        let mut rng = RngState::new(42);
        let entries: Vec<(String, Vec<f32>)> = (0..20)
            .map(|i| {
                let vals = (0..5).map(|_| rng.uniform(-2.0f32, 2.0)).collect();
                (format!("tok{i}"), vals)
            })
            .collect();
        let vf = VecFile::from_entries(5, entries);
        let mut buf = Vec::new();
        vf.write(&mut buf).unwrap();
        let reparsed = VecFile::<f32>::read(Cursor::new(buf)).unwrap();
        assert_eq!(reparsed.len(), vf.len());
        for (tok, vals) in vf.iter() {
            let got = reparsed.get(tok).unwrap();
            for (a, b) in vals.iter().zip(got) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn matrix_rows_follow_vocab() {
        let vocab = vocab_with(&["mày", "tao"]);
        let vf = VecFile::<f32>::from_entries(
            2,
            [("mày".to_string(), vec![0.5f32, -0.5])],
        );
        let mut rng = RngState::new(1);
        let build = build_embedding_matrix(&vf, &vocab, 2, true, &mut rng).unwrap();
        let w = &build.table.weights;
        assert_eq!(w.shape(), &[4, 2]);
        assert_eq!(&w.data()[0..2], &[0.0, 0.0], "PAD row zero");
        let may_row = vocab.id("mày").unwrap() as usize;
        assert_eq!(&w.data()[may_row * 2..may_row * 2 + 2], &[0.5, -0.5]);
        assert_eq!(build.found, 1);
        assert_eq!(build.coverage, 0.5);
    }

    #[test]
    fn empty_file_gives_zero_coverage_random_rows() {
        let vocab = vocab_with(&["a", "b", "c"]);
        let vf = VecFile::<f32>::from_entries(4, []);
        let mut rng = RngState::new(2);
        let build = build_embedding_matrix(&vf, &vocab, 4, true, &mut rng).unwrap();
        assert_eq!(build.coverage, 0.0);
        // Non-PAD rows are random in [-0.05, 0.05], not all zero.
        let data = build.table.weights.data();
        assert!(data[4..].iter().any(|&v| v != 0.0));
        assert!(data[4..].iter().all(|&v| (-0.05..0.05).contains(&v)));
    }

    #[test]
    fn dimension_mismatch_reports_both() {
        let vocab = vocab_with(&["a"]);
        let vf = VecFile::<f32>::from_entries(7, []);
        let mut rng = RngState::new(3);
        let err = build_embedding_matrix(&vf, &vocab, 300, true, &mut rng)
            .unwrap_err()
            .to_string();
        assert!(err.contains('7') && err.contains("300"), "{err}");
    }

    #[test]
    fn coverage_grows_with_overlap() {
        let vocab = vocab_with(&["a", "b", "c", "d"]);
        let mut rng = RngState::new(4);
        let half = VecFile::<f32>::from_entries(
            1,
            [("a".to_string(), vec![1.0f32]), ("b".to_string(), vec![2.0])],
        );
        let full = VecFile::<f32>::from_entries(
            1,
            ["a", "b", "c", "d"]
                .into_iter()
                .map(|t| (t.to_string(), vec![1.0f32])),
        );
        let c_half = build_embedding_matrix(&half, &vocab, 1, true, &mut rng)
            .unwrap()
            .coverage;
        let c_full = build_embedding_matrix(&full, &vocab, 1, true, &mut rng)
            .unwrap()
            .coverage;
        assert_eq!(c_half, 0.5);
        assert_eq!(c_full, 1.0);
    }
}
