//! Versioned, immutable word-vector spaces and their text formats.
//!
//! Two text layouts are understood:
//!
//! * `word2vec-text`: a header line `<vocab_count> <dim>` followed by one
//!   row per word, `<token> <c1> ... <cd>`, fields separated by spaces.
//! * `headerless`: the same rows without the header; the dimension is
//!   taken from the first row.
//!
//! Tokens are case-sensitive and stored verbatim. Duplicate tokens are
//! rejected rather than overwritten.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Identifier of one immutable space version. Assigned in creation order.
#[derive(
    Copy, Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct VersionId(pub u64);

impl VersionId {
    /// Version carried by every freshly loaded space.
    pub const BASE: VersionId = VersionId(0);

    pub fn next(self) -> VersionId {
        VersionId(self.0 + 1)
    }
}

impl fmt::Display for VersionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Default)]
pub enum TextFormat {
    #[default]
    Word2VecText,
    Headerless,
}

impl FromStr for TextFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "word2vec-text" | "word2vec" => Ok(TextFormat::Word2VecText),
            "headerless" => Ok(TextFormat::Headerless),
            other => Err(format!(
                "unknown format {other:?} (expected word2vec-text or headerless)"
            )),
        }
    }
}

/// How components are printed by [`save_text`].
#[derive(Copy, Clone, Debug, PartialEq, Eq, Default)]
pub enum Precision {
    /// Six decimal places for `|x| >= 0.1` (and zero), six significant
    /// digits in scientific notation below that. Every component keeps at
    /// least six significant digits; the printed value is within 5e-7 of the
    /// stored one (re-parsing adds at most half an ulp on top).
    #[default]
    Compact,
    /// Shortest representation that parses back to the identical value.
    RoundTrip,
}

/// An immutable vocabulary-to-vector map with a version tag.
#[derive(Clone, Debug)]
pub struct EmbeddingSpace<T> {
    version: VersionId,
    dim: usize,
    words: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<T>,
}

impl<T: Scalar> PartialEq for EmbeddingSpace<T> {
    /// Content equality; the version tag is not compared.
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.words == other.words && self.data == other.data
    }
}

pub(crate) fn validate_token(word: &str) -> Result<()> {
    if word.is_empty() || word.chars().any(char::is_whitespace) {
        return Err(Error::InvalidToken(word.to_string()));
    }
    Ok(())
}

impl<T: Scalar> EmbeddingSpace<T> {
    /// Builds a validated space from `(word, vector)` rows in order.
    pub fn from_rows<I, S>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<T>)>,
        S: Into<String>,
    {
        let mut words = Vec::new();
        let mut index = HashMap::new();
        let mut data = Vec::new();
        let mut dim = None;
        for (line, (word, vector)) in rows.into_iter().enumerate() {
            let word = word.into();
            validate_token(&word)?;
            let expected = *dim.get_or_insert(vector.len());
            if vector.len() != expected {
                return Err(Error::DimensionMismatch {
                    expected,
                    found: vector.len(),
                });
            }
            if vector.iter().any(|c| !c.is_finite()) {
                return Err(Error::NonFinite(word));
            }
            if index.insert(word.clone(), words.len()).is_some() {
                return Err(Error::DuplicateWord {
                    word,
                    line: line + 1,
                });
            }
            words.push(word);
            data.extend(vector);
        }
        match dim {
            None => Err(Error::EmptyInput),
            Some(0) => Err(Error::DimensionMismatch {
                expected: 1,
                found: 0,
            }),
            Some(dim) => Ok(EmbeddingSpace {
                version: VersionId::BASE,
                dim,
                words,
                index,
                data,
            }),
        }
    }

    pub fn version(&self) -> VersionId {
        self.version
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Tokens in storage order.
    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn get(&self, word: &str) -> Option<&[T]> {
        self.index.get(word).map(|&i| self.row(i))
    }

    /// Stored vector for `word`, or an out-of-vocabulary error naming it.
    pub fn vector(&self, word: &str) -> Result<&[T]> {
        self.get(word)
            .ok_or_else(|| Error::OutOfVocabulary(word.to_string()))
    }

    pub(crate) fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[T])> + '_ {
        self.words
            .iter()
            .enumerate()
            .map(move |(i, w)| (w.as_str(), self.row(i)))
    }

    /// Returns a new space tagged `new_version` with `updates` applied.
    /// Words not named in the update set keep their exact bits.
    pub fn apply_updates(&self, updates: &VectorUpdateSet<T>, new_version: VersionId) -> Result<Self> {
        if updates.base_version != self.version {
            return Err(Error::VersionMismatch {
                expected: updates.base_version,
                current: self.version,
            });
        }
        let mut data = self.data.clone();
        for (word, vector) in &updates.changes {
            let i = *self
                .index
                .get(word)
                .ok_or_else(|| Error::OutOfVocabulary(word.clone()))?;
            if vector.len() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    found: vector.len(),
                });
            }
            if vector.iter().any(|c| !c.is_finite()) {
                return Err(Error::NonFinite(word.clone()));
            }
            data[i * self.dim..(i + 1) * self.dim].copy_from_slice(vector);
        }
        Ok(EmbeddingSpace {
            version: new_version,
            dim: self.dim,
            words: self.words.clone(),
            index: self.index.clone(),
            data,
        })
    }

    /// SHA-256 over dimension, tokens and component bit patterns.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.dim as u64).to_le_bytes());
        for (word, vector) in self.iter() {
            hash_row(&mut hasher, word, vector);
        }
        hex::encode(hasher.finalize())
    }
}

fn hash_row<T: Scalar>(hasher: &mut Sha256, word: &str, vector: &[T]) {
    hasher.update((word.len() as u64).to_le_bytes());
    hasher.update(word.as_bytes());
    for c in vector {
        hasher.update(c.to_f64_lossless().to_bits().to_le_bytes());
    }
}

/// Replacement vectors for some words of one base version.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct VectorUpdateSet<T> {
    pub base_version: VersionId,
    pub changes: BTreeMap<String, Vec<T>>,
}

impl<T: Scalar> VectorUpdateSet<T> {
    pub fn empty(base_version: VersionId) -> Self {
        VectorUpdateSet {
            base_version,
            changes: BTreeMap::new(),
        }
    }

    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for (word, vector) in &self.changes {
            hash_row(&mut hasher, word, vector);
        }
        hex::encode(hasher.finalize())
    }
}

/// Parses a space from UTF-8 text.
pub fn load_text<T: Scalar, R: BufRead>(reader: R, format: TextFormat) -> Result<EmbeddingSpace<T>> {
    let mut lines = reader.lines().enumerate().filter_map(|(i, line)| match line {
        Ok(l) if l.trim().is_empty() => None,
        Ok(l) => Some(Ok((i + 1, l))),
        Err(e) => Some(Err(Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })),
    });

    let mut expected_rows = None;
    let mut dim = None;
    if format == TextFormat::Word2VecText {
        let (line_no, header) = lines.next().ok_or(Error::EmptyInput)??;
        let (count, d) = parse_header(&header).ok_or_else(|| Error::Parse {
            line: line_no,
            message: format!("malformed header {header:?}, expected \"<count> <dim>\""),
        })?;
        if count == 0 {
            return Err(Error::EmptyInput);
        }
        expected_rows = Some(count);
        dim = Some(d);
    }

    let mut rows = Vec::new();
    for entry in lines {
        let (line_no, line) = entry?;
        let mut fields = line.split_whitespace();
        let word = fields.next().ok_or(Error::EmptyInput)?;
        let vector = fields
            .map(|f| parse_component::<T>(f, line_no))
            .collect::<Result<Vec<T>>>()?;
        let d = *dim.get_or_insert(vector.len());
        if vector.len() != d || d == 0 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("row for {word:?} has {} components, expected {d}", vector.len()),
            });
        }
        rows.push((line_no, word.to_string(), vector));
    }

    if let Some(count) = expected_rows {
        if rows.len() != count {
            return Err(Error::Parse {
                line: 1,
                message: format!("header declares {count} rows, found {}", rows.len()),
            });
        }
    }

    // Report duplicates with their source line.
    let mut seen = HashMap::with_capacity(rows.len());
    for (line_no, word, _) in &rows {
        if seen.insert(word.as_str(), *line_no).is_some() {
            return Err(Error::DuplicateWord {
                word: word.clone(),
                line: *line_no,
            });
        }
    }
    EmbeddingSpace::from_rows(rows.into_iter().map(|(_, w, v)| (w, v)))
}

/// Convenience wrapper over [`load_text`] for in-memory text.
pub fn load_str<T: Scalar>(text: &str, format: TextFormat) -> Result<EmbeddingSpace<T>> {
    load_text(text.as_bytes(), format)
}

fn parse_header(line: &str) -> Option<(usize, usize)> {
    let mut fields = line.split_whitespace();
    let count = fields.next()?.parse().ok()?;
    let dim: usize = fields.next()?.parse().ok()?;
    if fields.next().is_some() || dim == 0 {
        return None;
    }
    Some((count, dim))
}

fn parse_component<T: Scalar>(field: &str, line: usize) -> Result<T> {
    match field.parse::<T>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Parse {
            line,
            message: format!("invalid component {field:?}"),
        }),
    }
}

/// Formats one component according to `precision`.
pub fn format_component<T: Scalar>(x: T, precision: Precision) -> String {
    let abs = x.abs();
    match precision {
        Precision::Compact => {
            if x.is_zero() || abs >= T::from_f64_lossy(0.1) {
                format!("{x:.6}")
            } else {
                format!("{x:.5e}")
            }
        }
        Precision::RoundTrip => {
            if x.is_zero() || (abs >= T::from_f64_lossy(1e-4) && abs < T::from_f64_lossy(1e15)) {
                format!("{x}")
            } else {
                format!("{x:e}")
            }
        }
    }
}

/// Writes `space` in the requested text layout.
pub fn save_text<T: Scalar, W: Write>(
    space: &EmbeddingSpace<T>,
    format: TextFormat,
    precision: Precision,
    mut out: W,
) -> std::io::Result<()> {
    if format == TextFormat::Word2VecText {
        writeln!(out, "{} {}", space.len(), space.dim())?;
    }
    let mut line = String::new();
    for (word, vector) in space.iter() {
        line.clear();
        line.push_str(word);
        for &c in vector {
            line.push(' ');
            line.push_str(&format_component(c, precision));
        }
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    out.flush()
}

/// Owner of every version created during a session.
///
/// Single writer: commits and checkouts take `&mut self`, while the spaces
/// themselves are shared read-only through `Arc`.
#[derive(Debug)]
pub struct Store<T> {
    versions: BTreeMap<VersionId, Arc<EmbeddingSpace<T>>>,
    current: VersionId,
}

impl<T: Scalar> Store<T> {
    pub fn new(base: EmbeddingSpace<T>) -> Self {
        let current = base.version();
        let mut versions = BTreeMap::new();
        versions.insert(current, Arc::new(base));
        Store { versions, current }
    }

    pub fn current(&self) -> Arc<EmbeddingSpace<T>> {
        Arc::clone(&self.versions[&self.current])
    }

    pub fn current_version(&self) -> VersionId {
        self.current
    }

    pub fn get(&self, version: VersionId) -> Result<Arc<EmbeddingSpace<T>>> {
        self.versions
            .get(&version)
            .cloned()
            .ok_or(Error::UnknownVersion(version))
    }

    /// Highest version ever created; new versions are allocated after it.
    pub fn latest_version(&self) -> VersionId {
        *self.versions.keys().next_back().expect("store is never empty")
    }

    /// Applies `updates` to the current version and makes the result current.
    pub fn commit(&mut self, updates: &VectorUpdateSet<T>) -> Result<Arc<EmbeddingSpace<T>>> {
        let next = self.prepare(updates)?;
        self.install(next);
        Ok(self.current())
    }

    /// Builds the next version from `updates` without registering it.
    pub fn prepare(&self, updates: &VectorUpdateSet<T>) -> Result<EmbeddingSpace<T>> {
        if updates.base_version != self.current {
            return Err(Error::VersionMismatch {
                expected: updates.base_version,
                current: self.current,
            });
        }
        self.current()
            .apply_updates(updates, self.latest_version().next())
    }

    /// Registers a space produced by [`Store::prepare`] and makes it current.
    pub fn install(&mut self, space: EmbeddingSpace<T>) -> VersionId {
        let version = space.version();
        assert_eq!(version, self.latest_version().next(), "install out of order");
        self.versions.insert(version, Arc::new(space));
        self.current = version;
        version
    }

    /// Makes an existing version current again.
    pub fn checkout(&mut self, version: VersionId) -> Result<()> {
        if !self.versions.contains_key(&version) {
            return Err(Error::UnknownVersion(version));
        }
        self.current = version;
        Ok(())
    }
}
