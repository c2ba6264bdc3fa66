//! Coordinate-descent retrofitting over the quadratic
//!
//! ```text
//! Psi(Q) = sum_i alpha_i |q_i - q^_i|^2 + sum_{(i,j) in E} beta_ij |q_i - q_j|^2
//! ```
//!
//! where `q^_i` are the anchor (original) vectors. Setting the gradient in
//! `q_i` to zero gives the update
//!
//! ```text
//! q_i = (sum_j beta_ij q_j + alpha_i q^_i) / (sum_j beta_ij + alpha_i)
//! ```
//!
//! which is the exact minimizer along that coordinate block, so in-order
//! (Gauss-Seidel) sweeps never increase `Psi`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::spec::{AttractSpec, RefitParams};
use crate::error::{Error, Result};
use crate::scalar::{squared_distance, squared_distance_dw, DoubleWord, Scalar};
use crate::similarity::{distance_report_of, DistanceReport};
use crate::store::{EmbeddingSpace, VectorUpdateSet};

/// Word-to-vector assignment for the members of a spec.
pub type Assignment<T> = BTreeMap<String, Vec<T>>;

/// A spec resolved against a concrete space, addressed by member index.
#[derive(Debug)]
pub(crate) struct Problem<T> {
    pub members: Vec<String>,
    pub movable: Vec<bool>,
    pub alpha: Vec<T>,
    pub anchors: Vec<Vec<T>>,
    /// Incident `(other, beta)` pairs per member, in edge order.
    pub neighbors: Vec<Vec<(usize, T)>>,
    pub edges: Vec<(usize, usize, T)>,
}

impl<T: Scalar> Problem<T> {
    pub fn new(anchors: &EmbeddingSpace<T>, spec: &AttractSpec<T>) -> Result<Self> {
        let members = spec.members().to_vec();
        let position = |w: &str| members.iter().position(|m| m == w).expect("validated spec");
        let anchor_vecs = members
            .iter()
            .map(|w| anchors.vector(w).map(<[T]>::to_vec))
            .collect::<Result<Vec<_>>>()?;
        let mut neighbors = vec![Vec::new(); members.len()];
        let mut edges = Vec::with_capacity(spec.edges().len());
        for e in spec.edges() {
            let (a, b) = (position(&e.a), position(&e.b));
            neighbors[a].push((b, e.beta));
            neighbors[b].push((a, e.beta));
            edges.push((a, b, e.beta));
        }
        Ok(Problem {
            movable: members.iter().map(|m| spec.is_movable(m)).collect(),
            alpha: members.iter().map(|m| spec.alpha(m)).collect(),
            members,
            anchors: anchor_vecs,
            neighbors,
            edges,
        })
    }

    /// State vector ordered like `members`, taken from an assignment.
    pub fn state_from(&self, current: &Assignment<T>) -> Result<Vec<Vec<T>>> {
        let dim = self.anchors[0].len();
        self.members
            .iter()
            .map(|w| {
                let v = current
                    .get(w)
                    .ok_or_else(|| Error::InvalidSpec(format!("no current vector for {w:?}")))?;
                if v.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        found: v.len(),
                    });
                }
                Ok(v.clone())
            })
            .collect()
    }

    pub fn assignment(&self, state: Vec<Vec<T>>) -> Assignment<T> {
        self.members.iter().cloned().zip(state).collect()
    }

    /// True when no edge joins two movable words, so one sweep is exact.
    pub fn is_decoupled(&self) -> bool {
        self.edges
            .iter()
            .all(|&(a, b, _)| !(self.movable[a] && self.movable[b]))
    }

    /// Evaluated in double-word arithmetic: near the optimum successive
    /// values differ by less than an ulp, and plain summation would round
    /// them in arbitrary directions.
    pub fn objective(&self, state: &[Vec<T>]) -> T {
        let anchor_term = state
            .iter()
            .zip(&self.anchors)
            .zip(&self.alpha)
            .fold(DoubleWord::zero(), |acc, ((q, a), &w)| {
                acc.add(DoubleWord::from_value(w).mul(squared_distance_dw(q, a)))
            });
        anchor_term.add(self.edge_energy_dw(state)).value()
    }

    fn edge_energy_dw(&self, state: &[Vec<T>]) -> DoubleWord<T> {
        self.edges.iter().fold(DoubleWord::zero(), |acc, &(a, b, beta)| {
            acc.add(DoubleWord::from_value(beta).mul(squared_distance_dw(&state[a], &state[b])))
        })
    }

    /// Closed-form coordinate minimizer for member `i`.
    pub fn update(&self, i: usize, state: &[Vec<T>]) -> Result<Vec<T>> {
        let alpha = self.alpha[i];
        let denom = self.neighbors[i]
            .iter()
            .fold(T::zero(), |acc, &(_, beta)| acc + beta)
            + alpha;
        if !(denom > T::zero()) {
            return Err(Error::ZeroDenominator(self.members[i].clone()));
        }
        let mut num = vec![T::zero(); self.anchors[i].len()];
        for &(j, beta) in &self.neighbors[i] {
            for (n, &q) in num.iter_mut().zip(&state[j]) {
                *n = *n + beta * q;
            }
        }
        Ok(num
            .into_iter()
            .zip(&self.anchors[i])
            .map(|(n, &a)| (n + alpha * a) / denom)
            .collect())
    }

    /// One in-place Gauss-Seidel pass; returns the largest l2 move.
    pub fn sweep(&self, state: &mut [Vec<T>]) -> Result<T> {
        let mut largest = T::zero();
        for i in 0..self.members.len() {
            if !self.movable[i] {
                continue;
            }
            let next = self.update(i, state)?;
            largest = largest.max(squared_distance(&next, &state[i]).sqrt());
            state[i] = next;
        }
        Ok(largest)
    }
}

/// Result of one refit run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct RefitOutcome<T> {
    /// New vectors for the movable words, relative to the input version.
    pub updates: VectorUpdateSet<T>,
    pub sweeps_executed: usize,
    pub converged: bool,
    /// Objective before any sweep, then after each sweep.
    pub objective_trace: Vec<T>,
    /// l2 distance between each member's anchor and final vector.
    pub displacement: BTreeMap<String, T>,
    pub distance_before: DistanceReport<T>,
    pub distance_after: DistanceReport<T>,
}

/// `Psi` for `current`, with anchors read from `anchors`.
pub fn objective<T: Scalar>(
    anchors: &EmbeddingSpace<T>,
    current: &Assignment<T>,
    spec: &AttractSpec<T>,
) -> Result<T> {
    let problem = Problem::new(anchors, spec)?;
    Ok(problem.objective(&problem.state_from(current)?))
}

/// Weighted sum of squared edge lengths, the attraction part of `Psi`.
pub fn edge_energy<T: Scalar>(current: &Assignment<T>, spec: &AttractSpec<T>) -> Result<T> {
    let get = |w: &String| {
        current
            .get(w)
            .ok_or_else(|| Error::InvalidSpec(format!("no current vector for {w:?}")))
    };
    let total = spec.edges().iter().try_fold(DoubleWord::zero(), |acc, e| {
        let d = squared_distance_dw(get(&e.a)?, get(&e.b)?);
        Ok::<_, Error>(acc.add(DoubleWord::from_value(e.beta).mul(d)))
    })?;
    Ok(total.value())
}

/// Coordinate update for one movable `word`, using current neighbor vectors
/// and the word's own anchor.
pub fn point_update<T: Scalar>(
    word: &str,
    anchors: &EmbeddingSpace<T>,
    current: &Assignment<T>,
    spec: &AttractSpec<T>,
) -> Result<Vec<T>> {
    let problem = Problem::new(anchors, spec)?;
    let i = problem
        .members
        .iter()
        .position(|m| m == word)
        .ok_or_else(|| Error::InvalidSpec(format!("{word:?} is not a member")))?;
    if !problem.movable[i] {
        return Err(Error::InvalidSpec(format!("{word:?} is not movable")));
    }
    problem.update(i, &problem.state_from(current)?)
}

/// One Gauss-Seidel pass over the movable members in member order.
pub fn sweep<T: Scalar>(
    anchors: &EmbeddingSpace<T>,
    current: &Assignment<T>,
    spec: &AttractSpec<T>,
) -> Result<Assignment<T>> {
    let problem = Problem::new(anchors, spec)?;
    let mut state = problem.state_from(current)?;
    problem.sweep(&mut state)?;
    Ok(problem.assignment(state))
}

/// Runs sweeps from the anchors until the largest per-word move is within
/// `params.tolerance` or `params.max_sweeps` is reached.
pub fn refit<T: Scalar>(
    space: &EmbeddingSpace<T>,
    spec: &AttractSpec<T>,
    params: &RefitParams<T>,
) -> Result<RefitOutcome<T>> {
    params.validate()?;
    let problem = Problem::new(space, spec)?;
    let mut state = problem.anchors.clone();
    let mut trace = vec![problem.objective(&state)];
    let decoupled = problem.is_decoupled();
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < params.max_sweeps {
        let moved = problem.sweep(&mut state)?;
        sweeps += 1;
        trace.push(problem.objective(&state));
        if decoupled || moved <= params.tolerance {
            converged = true;
            break;
        }
    }

    let members = &problem.members;
    let before: Vec<&[T]> = problem.anchors.iter().map(Vec::as_slice).collect();
    let after: Vec<&[T]> = state.iter().map(Vec::as_slice).collect();
    let distance_before = distance_report_of(members, &before);
    let distance_after = distance_report_of(members, &after);
    let displacement = members
        .iter()
        .zip(&problem.anchors)
        .zip(&state)
        .map(|((w, a), q)| (w.clone(), squared_distance(a, q).sqrt()))
        .collect();
    let changes = members
        .iter()
        .zip(&problem.movable)
        .zip(&state)
        .filter(|((_, &m), _)| m)
        .map(|((w, _), q)| (w.clone(), q.clone()))
        .collect();

    Ok(RefitOutcome {
        updates: VectorUpdateSet {
            base_version: space.version(),
            changes,
        },
        sweeps_executed: sweeps,
        converged,
        objective_trace: trace,
        displacement,
        distance_before,
        distance_after,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::refit::spec::{build_spec, BetaScheme, Mode};
    use crate::store::{load_str, TextFormat};

    fn line_space() -> EmbeddingSpace<f64> {
        load_str("2 1\nu 0\nv 2", TextFormat::Word2VecText).unwrap()
    }

    fn unit_params() -> RefitParams<f64> {
        RefitParams {
            beta_scheme: BetaScheme::Uniform(1.0),
            ..RefitParams::default()
        }
    }

    fn pair_spec() -> AttractSpec<f64> {
        build_spec(Mode::Clique, &["u".into(), "v".into()], None, &unit_params()).unwrap()
    }

    fn assign(pairs: &[(&str, &[f64])]) -> Assignment<f64> {
        pairs.iter().map(|(w, v)| (w.to_string(), v.to_vec())).collect()
    }

    #[test]
    fn objective_hand_values() {
        let s = line_space();
        let spec = pair_spec();
        assert_eq!(objective(&s, &assign(&[("u", &[0.0]), ("v", &[2.0])]), &spec).unwrap(), 4.0);
        let opt = objective(&s, &assign(&[("u", &[2.0 / 3.0]), ("v", &[4.0 / 3.0])]), &spec).unwrap();
        assert!((opt - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn objective_zero_when_everything_coincides() {
        let s = load_str::<f64>("2 2\na 1 1\nb 1 1", TextFormat::Word2VecText).unwrap();
        let spec = build_spec(Mode::Clique, &["a".into(), "b".into()], None, &RefitParams::default()).unwrap();
        let cur = assign(&[("a", &[1.0, 1.0]), ("b", &[1.0, 1.0])]);
        assert_eq!(objective(&s, &cur, &spec).unwrap(), 0.0);
    }

    #[test]
    fn update_midpoint_and_identity() {
        let s = load_str::<f64>("3 2\nt 0 0\na 2 2\nb 2 0", TextFormat::Word2VecText).unwrap();
        let spec = build_spec(Mode::TargetToSet, &["t".into(), "a".into()], Some("t"), &unit_params()).unwrap();
        let cur = assign(&[("t", &[0.0, 0.0]), ("a", &[2.0, 2.0])]);
        assert_eq!(point_update("t", &s, &cur, &spec).unwrap(), [1.0, 1.0]);
        assert!(point_update("a", &s, &cur, &spec).is_err());
    }

    #[test]
    fn update_two_neighbors() {
        let s = load_str::<f64>("3 2\nt 0 0\na 2 0\nb 0 2", TextFormat::Word2VecText).unwrap();
        let words = ["t".to_string(), "a".into(), "b".into()];
        let spec = build_spec(Mode::TargetToSet, &words, Some("t"), &RefitParams::default()).unwrap();
        let cur = assign(&[("t", &[0.0, 0.0]), ("a", &[2.0, 0.0]), ("b", &[0.0, 2.0])]);
        assert_eq!(point_update("t", &s, &cur, &spec).unwrap(), [0.5, 0.5]);
    }

    #[test]
    fn update_without_edges_keeps_anchor() {
        // Not constructible through build_spec; exercise the problem directly.
        let problem = Problem {
            members: vec!["a".to_string()],
            movable: vec![true],
            alpha: vec![1.0],
            anchors: vec![vec![3.0, -1.0]],
            neighbors: vec![vec![]],
            edges: vec![],
        };
        assert_eq!(problem.update(0, &[vec![9.0, 9.0]]).unwrap(), [3.0, -1.0]);
        let zero = Problem { alpha: vec![0.0], ..problem };
        assert!(matches!(zero.update(0, &[vec![0.0, 0.0]]), Err(Error::ZeroDenominator(_))));
    }

    #[test]
    fn hand_iterated_sweeps() {
        let s = line_space();
        let spec = pair_spec();
        let start = assign(&[("u", &[0.0]), ("v", &[2.0])]);
        let one = sweep(&s, &start, &spec).unwrap();
        assert_eq!(one, assign(&[("u", &[1.0]), ("v", &[1.5])]));
        let two = sweep(&s, &one, &spec).unwrap();
        assert_eq!(two, assign(&[("u", &[0.75]), ("v", &[1.375])]));
    }

    #[test]
    fn coincident_members_are_a_fixed_point() {
        let s = load_str::<f64>("3 2\na 1 2\nb 1 2\nc 1 2", TextFormat::Word2VecText).unwrap();
        let words = ["a".to_string(), "b".into(), "c".into()];
        let spec = build_spec(Mode::Clique, &words, None, &RefitParams::default()).unwrap();
        let start: Assignment<f64> = words.iter().map(|w| (w.clone(), vec![1.0, 2.0])).collect();
        assert_eq!(sweep(&s, &start, &spec).unwrap(), start);
        let out = refit(&s, &spec, &RefitParams::default()).unwrap();
        assert_eq!(out.sweeps_executed, 1);
        assert!(out.displacement.values().all(|&d| d == 0.0));
    }

    #[test]
    fn clique_converges_to_exact_minimizer() {
        let params = RefitParams {
            max_sweeps: 100,
            ..unit_params()
        };
        let out = refit(&line_space(), &pair_spec(), &params).unwrap();
        assert!(out.converged);
        assert!((out.updates.changes["u"][0] - 2.0 / 3.0).abs() < 1e-6);
        assert!((out.updates.changes["v"][0] - 4.0 / 3.0).abs() < 1e-6);
        assert!(out.objective_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn infinite_tolerance_stops_after_one_sweep() {
        let params = RefitParams {
            tolerance: f64::INFINITY,
            ..unit_params()
        };
        let out = refit(&line_space(), &pair_spec(), &params).unwrap();
        assert_eq!(out.sweeps_executed, 1);
        assert_eq!(out.objective_trace.len(), 2);
    }

    #[test]
    fn target_mode_single_sweep() {
        let s = load_str::<f64>("3 2\nshe 0 1\nwoman 1 0\nscience 1 1", TextFormat::Word2VecText).unwrap();
        let words = ["she".to_string(), "woman".into(), "science".into()];
        let spec = build_spec(Mode::TargetToSet, &words, Some("she"), &RefitParams::default()).unwrap();
        let out = refit(&s, &spec, &RefitParams::default()).unwrap();
        assert_eq!(out.sweeps_executed, 1);
        assert_eq!(out.updates.changes.len(), 1);
        assert_eq!(out.displacement["woman"], 0.0);
        // (0.5*[1,0] + 0.5*[1,1] + [0,1]) / 2
        assert_eq!(out.updates.changes["she"], [0.5, 0.75]);
    }

    #[test]
    fn oov_member_is_reported() {
        let spec = build_spec::<f64>(Mode::Clique, &["u".into(), "w".into()], None, &RefitParams::default()).unwrap();
        assert!(matches!(
            refit(&line_space(), &spec, &RefitParams::default()),
            Err(Error::OutOfVocabulary(w)) if w == "w"
        ));
    }
}
