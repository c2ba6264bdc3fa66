//! Closed-form minimizer of the refit objective.
//!
//! Per dimension the stationarity conditions form the linear system
//! `(diag(alpha) + L_beta) q = alpha * q^ + (pinned neighbor terms)`, with
//! `L_beta` the weighted Laplacian restricted to movable words. The matrix
//! is shared by all dimensions, so it is factored once.

use super::solver::{Assignment, Problem};
use super::spec::AttractSpec;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::store::EmbeddingSpace;

/// Largest number of movable words [`exact_solve`] accepts.
pub const EXACT_SOLVE_LIMIT: usize = 64;

/// Exact minimizer for every member; pinned members keep their anchors.
pub fn exact_solve<T: Scalar>(space: &EmbeddingSpace<T>, spec: &AttractSpec<T>) -> Result<Assignment<T>> {
    let problem = Problem::new(space, spec)?;
    let movable: Vec<usize> = (0..problem.members.len())
        .filter(|&i| problem.movable[i])
        .collect();
    if movable.len() > EXACT_SOLVE_LIMIT {
        return Err(Error::TooManyMembers {
            limit: EXACT_SOLVE_LIMIT,
            got: movable.len(),
        });
    }
    check_anchored(&problem, &movable)?;

    let m = movable.len();
    let dim = problem.anchors[0].len();
    let slot = |i: usize| movable.iter().position(|&k| k == i);

    let mut matrix = vec![vec![T::zero(); m]; m];
    let mut rhs = vec![vec![T::zero(); dim]; m];
    for (row, &i) in movable.iter().enumerate() {
        let mut diag = T::zero();
        for &(j, beta) in &problem.neighbors[i] {
            diag = diag + beta;
            match slot(j) {
                Some(col) => matrix[row][col] = matrix[row][col] - beta,
                None => {
                    for (r, &q) in rhs[row].iter_mut().zip(&problem.anchors[j]) {
                        *r = *r + beta * q;
                    }
                }
            }
        }
        matrix[row][row] = diag + problem.alpha[i];
        for (r, &a) in rhs[row].iter_mut().zip(&problem.anchors[i]) {
            *r = *r + problem.alpha[i] * a;
        }
    }

    let solution = solve_in_place(matrix, rhs)?;
    let mut state = problem.anchors.clone();
    for (row, &i) in movable.iter().enumerate() {
        state[i] = solution[row].clone();
    }
    Ok(problem.assignment(state))
}

/// Every component of the movable subgraph needs an anchor weight or a
/// pinned neighbor, otherwise the system is singular.
fn check_anchored<T: Scalar>(problem: &Problem<T>, movable: &[usize]) -> Result<()> {
    let n = problem.members.len();
    let mut component = vec![usize::MAX; n];
    for &start in movable {
        if component[start] != usize::MAX {
            continue;
        }
        let mut stack = vec![start];
        component[start] = start;
        let mut anchored = false;
        while let Some(i) = stack.pop() {
            anchored |= problem.alpha[i] > T::zero();
            for &(j, _) in &problem.neighbors[i] {
                if !problem.movable[j] {
                    anchored = true;
                } else if component[j] == usize::MAX {
                    component[j] = start;
                    stack.push(j);
                }
            }
        }
        if !anchored {
            return Err(Error::SingularSystem);
        }
    }
    Ok(())
}

/// Gaussian elimination with partial pivoting for a matrix of right-hand
/// sides (one row of `rhs` per unknown, one column per dimension).
fn solve_in_place<T: Scalar>(mut a: Vec<Vec<T>>, mut b: Vec<Vec<T>>) -> Result<Vec<Vec<T>>> {
    let n = a.len();
    let scale = a
        .iter()
        .flatten()
        .fold(T::zero(), |acc, &x| acc.max(x.abs()));
    let tiny = scale * T::epsilon() * T::from_usize(n.max(1)).expect("size fits scalar");
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&r, &s| a[r][col].abs().partial_cmp(&a[s][col].abs()).expect("finite matrix"))
            .expect("non-empty range");
        if a[pivot][col].abs() <= tiny {
            return Err(Error::SingularSystem);
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor.is_zero() {
                continue;
            }
            for k in col..n {
                a[row][k] = a[row][k] - factor * a[col][k];
            }
            for k in 0..b[row].len() {
                b[row][k] = b[row][k] - factor * b[col][k];
            }
        }
    }
    for row in (0..n).rev() {
        for k in 0..b[row].len() {
            let mut acc = b[row][k];
            for col in row + 1..n {
                acc = acc - a[row][col] * b[col][k];
            }
            b[row][k] = acc / a[row][row];
        }
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::refit::solver::point_update;
    use crate::refit::spec::{build_spec, BetaScheme, Edge, Mode, RefitParams};
    use crate::store::{load_str, TextFormat};
    use std::collections::BTreeMap;

    #[test]
    fn two_word_clique() {
        let s = load_str::<f64>("2 1\nu 0\nv 2", TextFormat::Word2VecText).unwrap();
        let params = RefitParams {
            beta_scheme: BetaScheme::Uniform(1.0),
            ..RefitParams::default()
        };
        let spec = build_spec(Mode::Clique, &["u".into(), "v".into()], None, &params).unwrap();
        let q = exact_solve(&s, &spec).unwrap();
        assert!((q["u"][0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((q["v"][0] - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn target_mode_matches_single_update_bitwise() {
        let s = load_str::<f64>("4 3\nt 0.1 0.7 -0.3\na 1.3 0.2 0.9\nb -0.4 0.5 0.33\nc 0.01 2 1", TextFormat::Word2VecText)
            .unwrap();
        let words: Vec<String> = ["a", "t", "b", "c"].iter().map(|w| w.to_string()).collect();
        let spec = build_spec(Mode::TargetToSet, &words, Some("t"), &RefitParams::default()).unwrap();
        let exact = exact_solve(&s, &spec).unwrap();
        let start: Assignment<f64> = words.iter().map(|w| (w.clone(), s.vector(w).unwrap().to_vec())).collect();
        assert_eq!(exact["t"], point_update("t", &s, &start, &spec).unwrap());
        assert_eq!(exact["a"], s.vector("a").unwrap());
    }

    #[test]
    fn huge_alpha_pins_to_anchors() {
        let s = load_str::<f64>("3 2\na 0 0\nb 1 2\nc -3 1", TextFormat::Word2VecText).unwrap();
        let words: Vec<String> = ["a", "b", "c"].iter().map(|w| w.to_string()).collect();
        let params = RefitParams {
            alpha_default: 1e12,
            ..RefitParams::default()
        };
        let spec = build_spec(Mode::Clique, &words, None, &params).unwrap();
        let q = exact_solve(&s, &spec).unwrap();
        for w in &words {
            for (x, y) in q[w].iter().zip(s.vector(w).unwrap()) {
                assert!((x - y).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn zero_alpha_clique_is_singular() {
        let s = load_str::<f64>("2 1\nu 0\nv 2", TextFormat::Word2VecText).unwrap();
        let params = RefitParams {
            alpha_default: 0.0,
            ..RefitParams::default()
        };
        let spec = build_spec(Mode::Clique, &["u".into(), "v".into()], None, &params).unwrap();
        assert!(matches!(exact_solve(&s, &spec), Err(Error::SingularSystem)));
    }

    #[test]
    fn zero_alpha_target_is_pinned_by_neighbors() {
        let s = load_str::<f64>("2 1\nu 0\nv 2", TextFormat::Word2VecText).unwrap();
        let spec = AttractSpec::from_parts(
            Mode::TargetToSet,
            vec!["u".into(), "v".into()],
            Some("u".into()),
            vec![Edge { a: "u".into(), b: "v".into(), beta: 1.0 }],
            BTreeMap::new(),
        )
        .unwrap();
        assert_eq!(exact_solve(&s, &spec).unwrap()["u"], [2.0]);
    }

    #[test]
    fn solver_pivots() {
        let a = vec![vec![0.0, 1.0], vec![2.0, 0.0]];
        let b = vec![vec![3.0], vec![4.0]];
        assert_eq!(solve_in_place(a, b).unwrap(), vec![vec![2.0], vec![3.0]]);
    }
}
