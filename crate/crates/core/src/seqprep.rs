//! Turning raw labeled text into fixed-length, mean-removed numeric
//! sequences: tokenization, optional bigram augmentation, embedding lookup,
//! length normalization and dataset centering.
//!
//! File formats handled here:
//! - dataset text: UTF-8, one `label<TAB>text` sample per line, labels
//!   non-negative integers;
//! - embedding table: first line the dimension `D`, then
//!   `token v1 v2 ... vD` per line;
//! - stopword list: one token per line;
//! - prepared dataset: a binary snapshot of a centered dataset (documented
//!   in the repository README).

use std::collections::{HashMap, HashSet};
use std::io::BufRead;
use std::path::Path;

use crate::format::{dim_to_u32, EnvelopeReader, EnvelopeWriter};
use crate::linalg::Matrix;
use crate::{Error, Result};

const PREPARED_MAGIC: &[u8; 4] = b"TMPP";

/// Token-to-vector lookup. Unknown tokens and the pad position both map to
/// the all-zeros vector, keeping them energy-neutral before centering.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dim: usize,
    entries: HashMap<String, Vec<f64>>,
    pad_vector: Vec<f64>,
    unknown_vector: Vec<f64>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput(
                "embedding dimension must be positive".to_string(),
            ));
        }
        Ok(Self {
            dim,
            entries: HashMap::new(),
            pad_vector: vec![0.0; dim],
            unknown_vector: vec![0.0; dim],
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn pad_vector(&self) -> &[f64] {
        &self.pad_vector
    }

    pub fn insert(&mut self, token: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::InvalidInput(format!(
                "embedding vector has length {}, table dimension is {}",
                vector.len(),
                self.dim
            )));
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "embedding vector must be finite".to_string(),
            ));
        }
        self.entries.insert(token.into(), vector);
        Ok(())
    }

    pub fn lookup(&self, token: &str) -> &[f64] {
        self.entries
            .get(token)
            .map_or(&self.unknown_vector, Vec::as_slice)
    }

    /// Per-token lookup in order; unknown tokens become zero vectors.
    pub fn embed(&self, tokens: &[String]) -> Vec<Vec<f64>> {
        tokens.iter().map(|t| self.lookup(t).to_vec()).collect()
    }

    /// Parses the `D`-then-`token floats...` text layout.
    pub fn from_reader(reader: impl BufRead) -> Result<Self> {
        let mut lines = reader.lines();
        let first = lines
            .next()
            .ok_or_else(|| Error::Format("embedding file is empty".to_string()))??;
        let dim: usize = first
            .trim()
            .parse()
            .map_err(|_| Error::Format(format!("bad embedding dimension line: {first:?}")))?;
        let mut table = Self::new(dim)?;
        for (idx, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let token = parts
                .next()
                .ok_or_else(|| Error::Format(format!("embedding line {} is blank", idx + 2)))?;
            let values: Vec<f64> = parts
                .map(|p| {
                    p.parse::<f64>().map_err(|_| {
                        Error::Format(format!("bad float {p:?} on embedding line {}", idx + 2))
                    })
                })
                .collect::<Result<_>>()?;
            if values.len() != dim {
                return Err(Error::Format(format!(
                    "embedding line {} has {} values, expected {dim}",
                    idx + 2,
                    values.len()
                )));
            }
            table.insert(token, values)?;
        }
        Ok(table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_reader(std::io::BufReader::new(file))
    }
}

/// Lowercases, strips punctuation from token edges, splits on whitespace and
/// drops stopwords. Tokens that strip down to nothing are removed.
pub fn tokenize(text: &str, stopwords: Option<&HashSet<String>>) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|raw| {
            let token = raw
                .trim_matches(|c: char| !c.is_alphanumeric())
                .to_lowercase();
            if token.is_empty() {
                return None;
            }
            if let Some(stop) = stopwords {
                if stop.contains(&token) {
                    return None;
                }
            }
            Some(token)
        })
        .collect()
}

/// Loads a one-token-per-line stopword file (lowercased).
pub fn load_stopwords(path: impl AsRef<Path>) -> Result<HashSet<String>> {
    let file = std::fs::File::open(path)?;
    let mut set = HashSet::new();
    for line in std::io::BufReader::new(file).lines() {
        let token = line?.trim().to_lowercase();
        if !token.is_empty() {
            set.insert(token);
        }
    }
    Ok(set)
}

/// Appends every adjacent-pair join token (joined with `_`) after the
/// original tokens, preserving order.
pub fn bigram_augment(tokens: &[String]) -> Vec<String> {
    let mut out = tokens.to_vec();
    out.extend(tokens.windows(2).map(|w| format!("{}_{}", w[0], w[1])));
    out
}

/// Segment sizes for shortening a length-`n_prime` sequence to `n` segments.
///
/// Every segment gets `d = floor(n_prime/n)` elements; the `r = n_prime - d·n`
/// leftover elements go one apiece to the segments at indices
/// `0, floor(n/r), 2·floor(n/r), ...` until exhausted.
pub fn segment_sizes(n_prime: usize, n: usize) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::InvalidInput(
            "segment count must be positive".to_string(),
        ));
    }
    if n_prime <= n {
        return Err(Error::InvalidInput(format!(
            "segmentation needs more elements ({n_prime}) than segments ({n}); pad instead"
        )));
    }
    let base = n_prime / n;
    let extra = n_prime - base * n;
    let mut sizes = vec![base; n];
    if let Some(stride) = n.checked_div(extra) {
        for k in 0..extra {
            sizes[k * stride] += 1;
        }
    }
    Ok(sizes)
}

/// Maps a variable-length list of `dim`-vectors to exactly `n` rows: identity
/// when lengths match, zero-vector padding at the end when short, and
/// segment-mean pooling per [`segment_sizes`] when long.
pub fn normalize_length(vectors: &[Vec<f64>], dim: usize, n: usize) -> Result<Matrix> {
    if n == 0 {
        return Err(Error::InvalidInput(
            "target length must be positive".to_string(),
        ));
    }
    for (i, v) in vectors.iter().enumerate() {
        if v.len() != dim {
            return Err(Error::InvalidInput(format!(
                "vector {i} has length {}, expected {dim}",
                v.len()
            )));
        }
    }
    let n_prime = vectors.len();
    let mut data = Vec::with_capacity(n * dim);
    if n_prime <= n {
        for v in vectors {
            data.extend_from_slice(v);
        }
        data.resize(n * dim, 0.0);
    } else {
        let sizes = segment_sizes(n_prime, n)?;
        let mut start = 0;
        for size in sizes {
            let mut mean = vec![0.0; dim];
            for v in &vectors[start..start + size] {
                for (m, x) in mean.iter_mut().zip(v) {
                    *m += x;
                }
            }
            for m in mean.iter_mut() {
                *m /= size as f64;
            }
            data.extend_from_slice(&mean);
            start += size;
        }
    }
    Matrix::from_vec(n, dim, data)
}

/// One prepared sample: its class id, the surviving tokens and the
/// fixed-length `N x D` sequence matrix.
#[derive(Debug, Clone)]
pub struct LabeledSequence {
    pub label: usize,
    pub tokens: Vec<String>,
    pub matrix: Matrix,
}

/// A prepared dataset. `mean` is set once [`Dataset::center`] has run.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub samples: Vec<LabeledSequence>,
    pub class_count: usize,
    pub mean: Option<Vec<f64>>,
}

/// Preparation settings for turning text into sequences.
#[derive(Debug, Clone)]
pub struct PrepOptions {
    /// Target sequence length `N`.
    pub target_len: usize,
    /// Append adjacent-pair join tokens before embedding.
    pub bigram: bool,
}

impl Dataset {
    pub fn seq_len(&self) -> usize {
        self.samples.first().map_or(0, |s| s.matrix.rows())
    }

    pub fn element_dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.matrix.cols())
    }

    /// Sample matrices, in dataset order.
    pub fn matrices(&self) -> Vec<Matrix> {
        self.samples.iter().map(|s| s.matrix.clone()).collect()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    /// Parses `label<TAB>text` lines and prepares each sample: tokenize,
    /// optional bigram augmentation, embed, normalize to `target_len` rows.
    pub fn from_text_reader(
        reader: impl BufRead,
        table: &EmbeddingTable,
        stopwords: Option<&HashSet<String>>,
        opts: &PrepOptions,
    ) -> Result<Self> {
        let mut samples = Vec::new();
        let mut max_label = 0usize;
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let (label_str, text) = line.split_once('\t').ok_or_else(|| {
                Error::Format(format!("line {}: expected label<TAB>text", idx + 1))
            })?;
            let label: usize = label_str
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("line {}: bad label {label_str:?}", idx + 1)))?;
            max_label = max_label.max(label);

            let mut tokens = tokenize(text, stopwords);
            if opts.bigram {
                tokens = bigram_augment(&tokens);
            }
            let vectors = table.embed(&tokens);
            let matrix = normalize_length(&vectors, table.dim(), opts.target_len)?;
            samples.push(LabeledSequence {
                label,
                tokens,
                matrix,
            });
        }
        if samples.is_empty() {
            return Err(Error::InsufficientData(
                "dataset has no samples".to_string(),
            ));
        }
        Ok(Self {
            samples,
            class_count: max_label + 1,
            mean: None,
        })
    }

    pub fn from_text_file(
        path: impl AsRef<Path>,
        table: &EmbeddingTable,
        stopwords: Option<&HashSet<String>>,
        opts: &PrepOptions,
    ) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_text_reader(std::io::BufReader::new(file), table, stopwords, opts)
    }

    /// Subtracts the per-coordinate mean of the flattened samples from every
    /// sample, stores it, and returns it for the model to keep.
    pub fn center(&mut self) -> Result<Vec<f64>> {
        if self.samples.is_empty() {
            return Err(Error::InsufficientData(
                "cannot center an empty dataset".to_string(),
            ));
        }
        let n = self.seq_len();
        let d = self.element_dim();
        let dim = n * d;
        let mut mean = vec![0.0; dim];
        for s in &self.samples {
            for (m, v) in mean.iter_mut().zip(s.matrix.as_slice()) {
                *m += v;
            }
        }
        let count = self.samples.len() as f64;
        for m in mean.iter_mut() {
            *m /= count;
        }
        for s in self.samples.iter_mut() {
            let centered: Vec<f64> = s
                .matrix
                .as_slice()
                .iter()
                .zip(&mean)
                .map(|(v, m)| v - m)
                .collect();
            s.matrix = Matrix::from_vec(n, d, centered)?;
        }
        self.mean = Some(mean.clone());
        Ok(mean)
    }

    /// Binary snapshot of a centered dataset (labels, mean, sample matrices).
    pub fn to_prepared_bytes(&self) -> Result<Vec<u8>> {
        let mean = self.mean.as_ref().ok_or_else(|| {
            Error::InvalidInput("dataset must be centered before saving".to_string())
        })?;
        let n = self.seq_len();
        let d = self.element_dim();
        let mut w = EnvelopeWriter::new(PREPARED_MAGIC);
        w.put_u32(dim_to_u32(self.samples.len(), "sample count")?);
        w.put_u32(dim_to_u32(n, "sequence length")?);
        w.put_u32(dim_to_u32(d, "element dimension")?);
        w.put_u32(dim_to_u32(self.class_count, "class count")?);
        w.put_f64_slice(mean);
        for s in &self.samples {
            w.put_u32(dim_to_u32(s.label, "label")?);
        }
        for s in &self.samples {
            w.put_f64_slice(s.matrix.as_slice());
        }
        Ok(w.finish())
    }

    pub fn from_prepared_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = EnvelopeReader::new(bytes, PREPARED_MAGIC)?;
        let count = r.get_usize()?;
        let n = r.get_usize()?;
        let d = r.get_usize()?;
        let class_count = r.get_usize()?;
        if count == 0 || n == 0 || d == 0 {
            return Err(Error::Validation(
                "prepared dataset has empty dimensions".to_string(),
            ));
        }
        let mean = r.get_f64_vec(n * d)?;
        let labels: Vec<usize> = (0..count).map(|_| r.get_usize()).collect::<Result<_>>()?;
        let mut samples = Vec::with_capacity(count);
        for &label in &labels {
            let data = r.get_f64_vec(n * d)?;
            let matrix = Matrix::from_vec(n, d, data)
                .map_err(|e| Error::Validation(format!("sample matrix: {e}")))?;
            samples.push(LabeledSequence {
                label,
                tokens: Vec::new(),
                matrix,
            });
        }
        r.expect_end()?;
        Ok(Self {
            samples,
            class_count,
            mean: Some(mean),
        })
    }

    pub fn save_prepared(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_prepared_bytes()?)?;
        Ok(())
    }

    pub fn load_prepared(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_prepared_bytes(&std::fs::read(path)?)
    }

    /// Detects the prepared-dataset magic so callers can accept either text
    /// or prepared files on the same flag.
    pub fn is_prepared_file(path: impl AsRef<Path>) -> Result<bool> {
        let mut magic = [0u8; 4];
        let mut file = std::fs::File::open(path)?;
        use std::io::Read;
        match file.read_exact(&mut magic) {
            Ok(()) => Ok(&magic == PREPARED_MAGIC),
            Err(_) => Ok(false),
        }
    }
}
