//! Cosine search and pairwise distance reports.
//!
//! Search is an exhaustive scan over the vocabulary. Ties are broken by
//! ascending token so that identical inputs always give identical output.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{dot, squared_distance, Scalar};
use crate::store::EmbeddingSpace;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Hit<T> {
    pub word: String,
    pub score: T,
}

/// Ranked hits, best first.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SearchResult<T> {
    pub hits: Vec<Hit<T>>,
}

/// Pairwise Euclidean distances and cosine similarities for a word list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DistanceReport<T> {
    pub words: Vec<String>,
    pub euclidean: Vec<Vec<T>>,
    pub cosine: Vec<Vec<T>>,
}

fn check_len(u: usize, v: usize) -> Result<()> {
    if u != v {
        return Err(Error::DimensionMismatch {
            expected: u,
            found: v,
        });
    }
    Ok(())
}

fn norm<T: Scalar>(v: &[T]) -> T {
    dot(v, v).sqrt()
}

fn clamp_unit<T: Scalar>(x: T) -> T {
    x.max(-T::one()).min(T::one())
}

pub fn cosine<T: Scalar>(u: &[T], v: &[T]) -> Result<T> {
    check_len(u.len(), v.len())?;
    let (nu, nv) = (norm(u), norm(v));
    if nu.is_zero() || nv.is_zero() {
        return Err(Error::ZeroNorm);
    }
    Ok(clamp_unit(dot(u, v) / (nu * nv)))
}

pub fn euclidean<T: Scalar>(u: &[T], v: &[T]) -> Result<T> {
    check_len(u.len(), v.len())?;
    Ok(squared_distance(u, v).sqrt())
}

fn rank<T: Scalar>(a: &Hit<T>, b: &Hit<T>) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.word.cmp(&b.word))
}

fn scan<T: Scalar>(
    space: &EmbeddingSpace<T>,
    query: &[T],
    k: usize,
    exclude: Option<&str>,
) -> Result<SearchResult<T>> {
    check_len(space.dim(), query.len())?;
    if k == 0 {
        return Ok(SearchResult::default());
    }
    let qn = norm(query);
    if qn.is_zero() {
        return Err(Error::ZeroNorm);
    }
    // Zero-norm vocabulary entries have no defined cosine and are skipped.
    let mut hits: Vec<Hit<T>> = space
        .iter()
        .filter(|(w, _)| Some(*w) != exclude)
        .filter_map(|(w, v)| {
            let n = norm(v);
            (!n.is_zero()).then(|| Hit {
                word: w.to_string(),
                score: clamp_unit(dot(query, v) / (qn * n)),
            })
        })
        .collect();
    if k < hits.len() {
        hits.select_nth_unstable_by(k - 1, rank);
        hits.truncate(k);
    }
    hits.sort_by(rank);
    Ok(SearchResult { hits })
}

/// The `k` words most cosine-similar to `query`, excluding `query` itself.
pub fn top_k<T: Scalar>(space: &EmbeddingSpace<T>, query: &str, k: usize) -> Result<SearchResult<T>> {
    let v = space.vector(query)?;
    scan(space, v, k, Some(query))
}

/// The `k` words most cosine-similar to an arbitrary vector.
pub fn top_k_vector<T: Scalar>(
    space: &EmbeddingSpace<T>,
    vector: &[T],
    k: usize,
) -> Result<SearchResult<T>> {
    scan(space, vector, k, None)
}

/// Builds the report from already resolved vectors.
pub fn distance_report_of<T: Scalar>(words: &[String], vectors: &[&[T]]) -> DistanceReport<T> {
    let n = words.len();
    let mut euclid = vec![vec![T::zero(); n]; n];
    let mut cos = vec![vec![T::zero(); n]; n];
    let norms: Vec<T> = vectors.iter().map(|v| norm(v)).collect();
    for i in 0..n {
        if !norms[i].is_zero() {
            cos[i][i] = T::one();
        }
        for j in i + 1..n {
            let d = squared_distance(vectors[i], vectors[j]).sqrt();
            euclid[i][j] = d;
            euclid[j][i] = d;
            if !norms[i].is_zero() && !norms[j].is_zero() {
                let c = clamp_unit(dot(vectors[i], vectors[j]) / (norms[i] * norms[j]));
                cos[i][j] = c;
                cos[j][i] = c;
            }
        }
    }
    DistanceReport {
        words: words.to_vec(),
        euclidean: euclid,
        cosine: cos,
    }
}

/// Pairwise report over `words`; pairs involving a zero vector get cosine 0.
pub fn distance_report<T: Scalar>(space: &EmbeddingSpace<T>, words: &[String]) -> Result<DistanceReport<T>> {
    let vectors = words
        .iter()
        .map(|w| space.vector(w))
        .collect::<Result<Vec<_>>>()?;
    Ok(distance_report_of(words, &vectors))
}
