//! Exact-arithmetic oracles for the refit engine.
//!
//! The stationarity system of the refit objective is assembled here from
//! scratch and solved over rationals, independently of the crate's solver.

use std::collections::BTreeMap;

use num_rational::Rational64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use refit_core::refit::{build_spec, exact_solve, refit, sweep, Assignment, BetaScheme, Mode, RefitParams};
use refit_core::store::{load_str, TextFormat};
use refit_core::Space;

type Q = Rational64;

fn q(n: i64, d: i64) -> Q {
    Q::new(n, d)
}

fn to_f64(x: Q) -> f64 {
    *x.numer() as f64 / *x.denom() as f64
}

/// Solves `(diag(alpha) + L) x = alpha * anchor` for a clique with uniform
/// `beta`, one dimension at a time, by Gauss-Jordan elimination.
fn rational_clique_solve(anchors: &[Vec<Q>], alpha: &[Q], beta: Q) -> Vec<Vec<Q>> {
    let n = anchors.len();
    let dim = anchors[0].len();
    let mut out = vec![vec![Q::from_integer(0); dim]; n];
    for c in 0..dim {
        let mut m: Vec<Vec<Q>> = (0..n)
            .map(|i| {
                let mut row: Vec<Q> = (0..n)
                    .map(|j| if i == j { alpha[i] + beta * Q::from_integer(n as i64 - 1) } else { -beta })
                    .collect();
                row.push(alpha[i] * anchors[i][c]);
                row
            })
            .collect();
        for col in 0..n {
            let p = (col..n).find(|&r| m[r][col] != Q::from_integer(0)).expect("nonsingular");
            m.swap(col, p);
            let pivot = m[col][col];
            for k in 0..=n {
                m[col][k] /= pivot;
            }
            for r in 0..n {
                if r != col {
                    let f = m[r][col];
                    for k in 0..=n {
                        let v = m[col][k];
                        m[r][k] -= f * v;
                    }
                }
            }
        }
        for i in 0..n {
            out[i][c] = m[i][n];
        }
    }
    out
}

fn unit_beta() -> RefitParams<f64> {
    RefitParams {
        beta_scheme: BetaScheme::Uniform(1.0),
        ..RefitParams::default()
    }
}

#[test]
fn two_word_fixture_matches_rational_solution() {
    let exact = rational_clique_solve(
        &[vec![Q::from_integer(0)], vec![Q::from_integer(2)]],
        &[Q::from_integer(1), Q::from_integer(1)],
        Q::from_integer(1),
    );
    assert_eq!(exact, vec![vec![q(2, 3)], vec![q(4, 3)]]);

    let space: Space = load_str("2 1\nu 0\nv 2", TextFormat::Word2VecText).unwrap();
    let spec = build_spec(Mode::Clique, &["u".into(), "v".into()], None, &unit_beta()).unwrap();
    let solved = exact_solve(&space, &spec).unwrap();
    assert!((solved["u"][0] - to_f64(exact[0][0])).abs() < 1e-15);
    assert!((solved["v"][0] - to_f64(exact[1][0])).abs() < 1e-15);

    let params = RefitParams {
        max_sweeps: 200,
        tolerance: 1e-12,
        ..unit_beta()
    };
    let out = refit(&space, &spec, &params).unwrap();
    assert!((out.updates.changes["u"][0] - 2.0 / 3.0).abs() < 1e-9);
    assert!((out.updates.changes["v"][0] - 4.0 / 3.0).abs() < 1e-9);
}

#[test]
fn hand_iteration_in_rationals() {
    // Gauss-Seidel by hand: u <- v / 2, v <- (u + 2) / 2
    let mut v = q(2, 1);
    let mut states = Vec::new();
    for _ in 0..2 {
        let u = v / 2;
        v = (u + 2) / 2;
        states.push((u, v));
    }
    assert_eq!(states, [(q(1, 1), q(3, 2)), (q(3, 4), q(11, 8))]);

    let space: Space = load_str("2 1\nu 0\nv 2", TextFormat::Word2VecText).unwrap();
    let spec = build_spec(Mode::Clique, &["u".into(), "v".into()], None, &unit_beta()).unwrap();
    let mut cur: Assignment<f64> = [("u".to_string(), vec![0.0]), ("v".to_string(), vec![2.0])].into();
    for (u, v) in states {
        cur = sweep(&space, &cur, &spec).unwrap();
        assert_eq!(cur["u"][0], to_f64(u));
        assert_eq!(cur["v"][0], to_f64(v));
    }
}

#[test]
fn random_cliques_match_rational_solution() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..40 {
        let n = rng.gen_range(2..=5);
        let dim = rng.gen_range(1..=4);
        let anchors: Vec<Vec<Q>> = (0..n)
            .map(|_| (0..dim).map(|_| q(rng.gen_range(-40..=40), 8)).collect())
            .collect();
        let alpha_num = rng.gen_range(2..=8);
        let alpha = q(alpha_num, 4);
        let beta = q(1, n as i64 - 1);
        let expected = rational_clique_solve(&anchors, &vec![alpha; n], beta);

        let rows: Vec<(String, Vec<f64>)> = anchors
            .iter()
            .enumerate()
            .map(|(i, a)| (format!("w{i}"), a.iter().map(|&x| to_f64(x)).collect()))
            .collect();
        let words: Vec<String> = rows.iter().map(|(w, _)| w.clone()).collect();
        let space = Space::from_rows(rows).unwrap();
        let params = RefitParams {
            alpha_default: to_f64(alpha),
            ..RefitParams::default()
        };
        let spec = build_spec(Mode::Clique, &words, None, &params).unwrap();
        let got = exact_solve(&space, &spec).unwrap();
        for (i, w) in words.iter().enumerate() {
            for (x, &e) in got[w].iter().zip(&expected[i]) {
                assert!((x - to_f64(e)).abs() < 1e-12, "{x} vs {e}");
            }
        }
    }
}

#[test]
fn f32_engine_agrees_with_f64() {
    let text = "3 2\na 0.5 -1\nb 1.25 0.75\nc -0.5 2";
    let s64: refit_core::Space = load_str(text, TextFormat::Word2VecText).unwrap();
    let s32: refit_core::SpaceF32 = load_str(text, TextFormat::Word2VecText).unwrap();
    let words: Vec<String> = ["a", "b", "c"].iter().map(|w| w.to_string()).collect();
    let p64 = RefitParams::<f64>::default();
    let p32 = RefitParams::<f32>::default();
    let o64 = refit(&s64, &build_spec(Mode::Clique, &words, None, &p64).unwrap(), &p64).unwrap();
    let o32 = refit(&s32, &build_spec(Mode::Clique, &words, None, &p32).unwrap(), &p32).unwrap();
    let mut diffs = BTreeMap::new();
    for w in &words {
        let d = o64.updates.changes[w]
            .iter()
            .zip(&o32.updates.changes[w])
            .map(|(a, &b)| (a - f64::from(b)).abs())
            .fold(0.0, f64::max);
        diffs.insert(w.clone(), d);
    }
    assert!(diffs.values().all(|&d| d < 1e-5), "{diffs:?}");
}
