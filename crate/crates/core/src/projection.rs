//! Deterministic 2D PCA layouts for before/after plots.
//!
//! Points are mean-centered and projected onto the two leading principal
//! axes. Each axis is oriented so that its largest-magnitude loading is
//! positive (first such index on ties). Missing axes of rank-deficient
//! inputs are filled with zeros.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{dot, Scalar};
use crate::store::EmbeddingSpace;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Projection2D<T> {
    pub words: Vec<String>,
    pub coords: Vec<(T, T)>,
}

/// Mean and two unit axes fitted to a point set.
struct Basis<T> {
    mean: Vec<T>,
    axes: [Option<Vec<T>>; 2],
}

impl<T: Scalar> Basis<T> {
    fn fit(points: &[&[T]]) -> Basis<T> {
        let n = points.len();
        let d = points[0].len();
        let count = T::from_usize(n).expect("point count fits scalar");
        let mut mean = vec![T::zero(); d];
        for p in points {
            for (m, &x) in mean.iter_mut().zip(*p) {
                *m = *m + x;
            }
        }
        mean.iter_mut().for_each(|m| *m = *m / count);
        let centered: Vec<Vec<T>> = points
            .iter()
            .map(|p| p.iter().zip(&mean).map(|(&x, &m)| x - m).collect())
            .collect();

        // Eigen-decompose whichever of the Gram (n x n) or scatter (d x d)
        // matrix is smaller.
        let use_gram = n <= d;
        let size = n.min(d);
        let mut matrix = vec![vec![T::zero(); size]; size];
        for i in 0..size {
            for j in i..size {
                let v = if use_gram {
                    dot(&centered[i], &centered[j])
                } else {
                    centered.iter().fold(T::zero(), |acc, r| acc + r[i] * r[j])
                };
                matrix[i][j] = v;
                matrix[j][i] = v;
            }
        }
        let (values, vectors) = symmetric_eigen(matrix);
        let mut order: Vec<usize> = (0..size).collect();
        order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).expect("finite").then(a.cmp(&b)));

        let largest = values[order[0]].max(T::zero());
        let cutoff = largest * T::from_f64_lossy(1e-12);
        let mut axes: [Option<Vec<T>>; 2] = [None, None];
        for (slot, &k) in order.iter().take(2).enumerate() {
            if largest.is_zero() || values[k] <= cutoff {
                continue;
            }
            let column: Vec<T> = (0..size).map(|r| vectors[r][k]).collect();
            let mut axis = if use_gram {
                (0..d)
                    .map(|c| centered.iter().zip(&column).fold(T::zero(), |acc, (r, &u)| acc + r[c] * u))
                    .collect()
            } else {
                column
            };
            if let Some(first) = &axes[0] {
                let overlap = dot(&axis, first);
                axis.iter_mut().zip(first).for_each(|(a, &f)| *a = *a - overlap * f);
            }
            let norm = dot(&axis, &axis).sqrt();
            if norm <= T::epsilon() {
                continue;
            }
            axis.iter_mut().for_each(|a| *a = *a / norm);
            orient(&mut axis);
            axes[slot] = Some(axis);
        }
        Basis { mean, axes }
    }

    fn project(&self, words: Vec<String>, points: &[&[T]]) -> Projection2D<T> {
        let coord = |p: &[T], axis: &Option<Vec<T>>| match axis {
            Some(axis) => p
                .iter()
                .zip(&self.mean)
                .zip(axis)
                .fold(T::zero(), |acc, ((&x, &m), &a)| acc + (x - m) * a),
            None => T::zero(),
        };
        let coords = points
            .iter()
            .map(|p| (coord(p, &self.axes[0]), coord(p, &self.axes[1])))
            .collect();
        Projection2D { words, coords }
    }
}

fn orient<T: Scalar>(axis: &mut [T]) {
    let mut best = 0;
    for (i, a) in axis.iter().enumerate() {
        if a.abs() > axis[best].abs() {
            best = i;
        }
    }
    if axis[best] < T::zero() {
        axis.iter_mut().for_each(|a| *a = -*a);
    }
}

/// Cyclic Jacobi rotations. Returns eigenvalues and the eigenvector matrix
/// (eigenvectors in columns).
fn symmetric_eigen<T: Scalar>(mut a: Vec<Vec<T>>) -> (Vec<T>, Vec<Vec<T>>) {
    let n = a.len();
    let mut v = vec![vec![T::zero(); n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = T::one();
    }
    let two = T::from_f64_lossy(2.0);
    for _ in 0..100 {
        let off = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .fold(T::zero(), |acc, (i, j)| acc + a[i][j] * a[i][j]);
        let total = a.iter().flatten().fold(T::zero(), |acc, &x| acc + x * x);
        if off <= total * T::epsilon() * T::epsilon() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].is_zero() {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (two * a[p][q]);
                let t = if theta.abs() > T::from_f64_lossy(1e100) {
                    T::one() / (two * theta)
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt())
                };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for row in a.iter_mut() {
                    let (kp, kq) = (row[p], row[q]);
                    row[p] = c * kp - s * kq;
                    row[q] = s * kp + c * kq;
                }
                for k in 0..n {
                    let (pk, qk) = (a[p][k], a[q][k]);
                    a[p][k] = c * pk - s * qk;
                    a[q][k] = s * pk + c * qk;
                }
                for row in v.iter_mut() {
                    let (kp, kq) = (row[p], row[q]);
                    row[p] = c * kp - s * kq;
                    row[q] = s * kp + c * kq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i][i]).collect(), v)
}

fn check_points<T: Scalar>(points: &[&[T]]) -> Result<()> {
    let first = points
        .first()
        .ok_or_else(|| Error::Projection("no vectors to project".into()))?;
    if first.is_empty() {
        return Err(Error::Projection("zero-dimensional vectors".into()));
    }
    for p in points {
        if p.len() != first.len() {
            return Err(Error::DimensionMismatch {
                expected: first.len(),
                found: p.len(),
            });
        }
    }
    Ok(())
}

/// Projects labelled vectors onto their own two leading principal axes.
pub fn pca_2d<T: Scalar>(words: Vec<String>, vectors: &[&[T]]) -> Result<Projection2D<T>> {
    if words.len() != vectors.len() {
        return Err(Error::Projection(format!(
            "{} labels for {} vectors",
            words.len(),
            vectors.len()
        )));
    }
    check_points(vectors)?;
    Ok(Basis::fit(vectors).project(words, vectors))
}

/// Fits one basis to `before` and `after` together and projects both, so
/// positions in the two frames are directly comparable. The union is
/// centered; each frame on its own generally is not.
pub fn joint_projection<T: Scalar>(
    words: Vec<String>,
    before: &[&[T]],
    after: &[&[T]],
) -> Result<(Projection2D<T>, Projection2D<T>)> {
    if before.len() != after.len() || words.len() != before.len() {
        return Err(Error::Projection("before/after frames must label the same words".into()));
    }
    let union: Vec<&[T]> = before.iter().chain(after).copied().collect();
    check_points(&union)?;
    let basis = Basis::fit(&union);
    Ok((basis.project(words.clone(), before), basis.project(words, after)))
}

/// Looks up `words` in `space` and projects them.
pub fn project_words<T: Scalar>(space: &EmbeddingSpace<T>, words: &[String]) -> Result<Projection2D<T>> {
    let vectors = words.iter().map(|w| space.vector(w)).collect::<Result<Vec<_>>>()?;
    pca_2d(words.to_vec(), &vectors)
}

/// Joint projection of the same words in two spaces.
pub fn project_versions<T: Scalar>(
    before: &EmbeddingSpace<T>,
    after: &EmbeddingSpace<T>,
    words: &[String],
) -> Result<(Projection2D<T>, Projection2D<T>)> {
    let b = words.iter().map(|w| before.vector(w)).collect::<Result<Vec<_>>>()?;
    let a = words.iter().map(|w| after.vector(w)).collect::<Result<Vec<_>>>()?;
    joint_projection(words.to_vec(), &b, &a)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("w{i}")).collect()
    }

    #[test]
    fn identical_vectors_collapse_to_origin() {
        let v = [1.0, 2.0, 3.0];
        let p = pca_2d(labels(3), &[&v[..], &v, &v]).unwrap();
        assert!(p.coords.iter().all(|&c| c == (0.0, 0.0)));
    }

    #[test]
    fn two_points_lie_on_x_axis() {
        let a: [f64; 3] = [1.0, 2.0, 2.0];
        let b = [-1.0, 0.0, 3.0];
        let p = pca_2d(labels(2), &[&a[..], &b]).unwrap();
        let dist: f64 = 3.0; // sqrt(4 + 4 + 1)
        assert_eq!(p.coords[0].1, 0.0);
        assert_eq!(p.coords[1].1, 0.0);
        assert!(((p.coords[0].0 - p.coords[1].0).abs() - dist).abs() < 1e-12);
    }

    #[test]
    fn recovers_axis_aligned_spread() {
        let pts = [[3.0, 0.0, 0.0], [-3.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, -1.0, 0.0]];
        let refs: Vec<&[f64]> = pts.iter().map(|p| &p[..]).collect();
        let p = pca_2d(labels(4), &refs).unwrap();
        let expect = [(3.0, 0.0), (-3.0, 0.0), (0.0, 1.0), (0.0, -1.0)];
        for (got, want) in p.coords.iter().zip(expect) {
            assert!((got.0 - want.0).abs() < 1e-12 && (got.1 - want.1).abs() < 1e-12, "{got:?}");
        }
    }

    #[test]
    fn scatter_path_matches_gram_path() {
        // n > d uses the d x d scatter matrix; n <= d the Gram matrix.
        let pts = [[1.0, 0.5], [0.2, -0.3], [-0.7, 0.1], [0.4, 0.9]];
        let refs: Vec<&[f64]> = pts.iter().map(|p| &p[..]).collect();
        let wide: Vec<Vec<f64>> = pts.iter().map(|p| vec![p[0], p[1], 0.0, 0.0, 0.0]).collect();
        let wide_refs: Vec<&[f64]> = wide.iter().map(Vec::as_slice).collect();
        let a = pca_2d(labels(4), &refs).unwrap();
        let b = pca_2d(labels(4), &wide_refs).unwrap();
        for (x, y) in a.coords.iter().zip(&b.coords) {
            assert!((x.0 - y.0).abs() < 1e-12 && (x.1 - y.1).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(pca_2d::<f64>(vec![], &[]).is_err());
        let a = [1.0, 2.0];
        let b = [1.0];
        assert!(pca_2d(labels(2), &[&a[..], &b]).is_err());
        assert!(pca_2d(labels(1), &[&a[..], &a]).is_err());
    }

    #[test]
    fn joint_frames_share_basis() {
        let before = [[0.0, 0.0], [2.0, 0.0]];
        let after = [[0.5, 0.0], [1.5, 0.0]];
        let b: Vec<&[f64]> = before.iter().map(|p| &p[..]).collect();
        let a: Vec<&[f64]> = after.iter().map(|p| &p[..]).collect();
        let (pb, pa) = joint_projection(labels(2), &b, &a).unwrap();
        assert_eq!(pb.coords, [(-1.0, 0.0), (1.0, 0.0)]);
        assert_eq!(pa.coords, [(-0.5, 0.0), (0.5, 0.0)]);
    }
}
