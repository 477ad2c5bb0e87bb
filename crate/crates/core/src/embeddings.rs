//! Word vocabulary and fixed pre-trained embedding table.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::{cast, Scalar};

/// Fixed word-embedding table with a total lookup: exact match first, then
/// a lowercase retry, then a deterministic all-zeros out-of-vocabulary row.
///
/// Rows are never mutated during training; the table stays outside the
/// parameter store.
#[derive(Clone, Debug)]
pub struct WordEmbeddings<F> {
    index: HashMap<String, usize>,
    data: Vec<F>,
    dim: usize,
    oov: Vec<F>,
}

impl<F: Scalar> WordEmbeddings<F> {
    /// Load GloVe text format: one `word v1 v2 ... vd` line per word,
    /// space-separated, consistent dimension throughout.
    ///
    /// When `restrict_to` is given, only words in the set are kept.
    /// Duplicate words keep their first occurrence.
    pub fn load_glove_text(
        path: impl AsRef<Path>,
        restrict_to: Option<&HashSet<String>>,
    ) -> Result<Self> {
        let file = File::open(path.as_ref())?;
        Self::read_glove_text(BufReader::new(file), restrict_to)
    }

    pub fn read_glove_text(
        reader: impl BufRead,
        restrict_to: Option<&HashSet<String>>,
    ) -> Result<Self> {
        let mut index = HashMap::new();
        let mut data = Vec::new();
        let mut dim = None;

        for (line_no, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split(' ');
            let word = fields.next().expect("non-empty line has a first field");
            let values: Vec<&str> = fields.collect();
            match dim {
                None => dim = Some(values.len()),
                Some(d) if d != values.len() => {
                    return Err(Error::Format {
                        line: line_no + 1,
                        reason: format!(
                            "embedding dimension {} disagrees with established {d}",
                            values.len()
                        ),
                    })
                }
                _ => {}
            }
            if let Some(keep) = restrict_to {
                if !keep.contains(word) {
                    continue;
                }
            }
            if index.contains_key(word) {
                continue;
            }
            let row_start = data.len();
            for v in &values {
                let parsed: f64 = v.parse().map_err(|_| Error::Format {
                    line: line_no + 1,
                    reason: format!("unparseable float {v:?}"),
                })?;
                data.push(cast(parsed));
            }
            index.insert(word.to_string(), row_start / dim.expect("set above"));
        }

        let dim = dim.unwrap_or(0);
        Ok(WordEmbeddings {
            index,
            data,
            dim,
            oov: vec![F::zero(); dim],
        })
    }

    /// Seeded synthetic table over the given words, entries uniform in
    /// [-0.05, 0.05]. For tests and the gradient-check command.
    pub fn synthetic(words: &[String], dim: usize, seed: u64) -> Self {
        Self::synthetic_scaled(words, dim, seed, 0.05)
    }

    /// Synthetic table with a caller-chosen entry bound. Gradient checks
    /// use GloVe-like magnitudes (around 0.5) so that no gradient sits in
    /// the finite-difference noise floor.
    pub fn synthetic_scaled(words: &[String], dim: usize, seed: u64, bound: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut index = HashMap::new();
        let mut data = Vec::with_capacity(words.len() * dim);
        for (row, word) in words.iter().enumerate() {
            index.entry(word.clone()).or_insert(row);
            for _ in 0..dim {
                data.push(cast(rng.random_range(-bound..bound)));
            }
        }
        WordEmbeddings {
            index,
            data,
            dim,
            oov: vec![F::zero(); dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab_size(&self) -> usize {
        self.index.len()
    }

    /// Embedding row for a word. Unknown words fall back to the lowercase
    /// form, then to the zero vector; two lookups of the same word always
    /// return the same row.
    pub fn lookup(&self, word: &str) -> &[F] {
        if let Some(&row) = self.index.get(word) {
            return &self.data[row * self.dim..(row + 1) * self.dim];
        }
        let lower = word.to_lowercase();
        if let Some(&row) = self.index.get(&lower) {
            return &self.data[row * self.dim..(row + 1) * self.dim];
        }
        &self.oov
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    /// Raw table bytes for change detection in tests.
    pub fn fingerprint(&self) -> u64 {
        let mut h = 0xcbf29ce484222325u64;
        for v in &self.data {
            let bits = v.to_f64().expect("scalar to f64").to_bits();
            h ^= bits;
            h = h.wrapping_mul(0x100000001b3);
        }
        h
    }
}

/// Read a word-list file (one word per line) into a restriction set for
/// [`WordEmbeddings::load_glove_text`].
pub fn read_word_list(path: impl AsRef<Path>) -> Result<HashSet<String>> {
    let text = std::fs::read_to_string(path.as_ref())?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|w| !w.is_empty())
        .map(String::from)
        .collect())
}
