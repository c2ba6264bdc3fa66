use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::store::validate_token;

/// Which words move and how they are connected.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    /// One target word is pulled toward the others; the others stay put.
    #[serde(rename = "target", alias = "target_to_set")]
    TargetToSet,
    /// Every word is pulled toward every other word.
    #[serde(rename = "set", alias = "clique")]
    Clique,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::TargetToSet => "target",
            Mode::Clique => "set",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "target" | "target_to_set" => Ok(Mode::TargetToSet),
            "set" | "clique" => Ok(Mode::Clique),
            other => Err(format!("unknown mode {other:?} (expected target or set)")),
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", bound = "T: Scalar")]
pub enum BetaScheme<T> {
    /// Every edge gets the same weight.
    Uniform(T),
    /// `1 / degree` of the movable endpoint.
    InverseDegree,
}

/// Solver controls.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct RefitParams<T> {
    pub max_sweeps: usize,
    /// Converged once no word moves more than this (l2) within a sweep.
    /// Infinity is written to JSON as `null`.
    #[serde(serialize_with = "ser_tolerance", deserialize_with = "de_tolerance")]
    pub tolerance: T,
    pub beta_scheme: BetaScheme<T>,
    pub alpha_default: T,
}

fn ser_tolerance<T: Scalar, S: Serializer>(t: &T, s: S) -> std::result::Result<S::Ok, S::Error> {
    if t.is_finite() {
        t.serialize(s)
    } else {
        s.serialize_none()
    }
}

fn de_tolerance<'de, T: Scalar, D: Deserializer<'de>>(d: D) -> std::result::Result<T, D::Error> {
    Ok(Option::<T>::deserialize(d)?.unwrap_or_else(T::infinity))
}

impl<T: Scalar> Default for RefitParams<T> {
    fn default() -> Self {
        RefitParams {
            max_sweeps: 10,
            tolerance: T::from_f64_lossy(1e-6),
            beta_scheme: BetaScheme::InverseDegree,
            alpha_default: T::one(),
        }
    }
}

impl<T: Scalar> RefitParams<T> {
    pub fn validate(&self) -> Result<()> {
        if self.max_sweeps == 0 {
            return Err(Error::InvalidParams("max_sweeps must be at least 1".into()));
        }
        if self.tolerance.is_nan() || self.tolerance < T::zero() {
            return Err(Error::InvalidParams("tolerance must be non-negative".into()));
        }
        if !self.alpha_default.is_finite() || self.alpha_default < T::zero() {
            return Err(Error::InvalidParams("alpha must be finite and non-negative".into()));
        }
        if let BetaScheme::Uniform(c) = self.beta_scheme {
            if !c.is_finite() || c <= T::zero() {
                return Err(Error::InvalidParams("uniform beta must be finite and positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Edge<T> {
    pub a: String,
    pub b: String,
    pub beta: T,
}

/// One re-fit problem: the word set, its edges and weights.
///
/// Serialized with edges as word pairs and `beta` as a list aligned with them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(
    into = "SpecWire<T>",
    try_from = "SpecWire<T>",
    bound = "T: Scalar"
)]
pub struct AttractSpec<T> {
    mode: Mode,
    members: Vec<String>,
    target: Option<String>,
    edges: Vec<Edge<T>>,
    alpha: BTreeMap<String, T>,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct SpecWire<T> {
    mode: Mode,
    members: Vec<String>,
    #[serde(default)]
    target: Option<String>,
    edges: Vec<(String, String)>,
    alpha: BTreeMap<String, T>,
    beta: Vec<T>,
}

impl<T: Scalar> From<AttractSpec<T>> for SpecWire<T> {
    fn from(s: AttractSpec<T>) -> Self {
        let (edges, beta) = s.edges.into_iter().map(|e| ((e.a, e.b), e.beta)).unzip();
        SpecWire {
            mode: s.mode,
            members: s.members,
            target: s.target,
            edges,
            alpha: s.alpha,
            beta,
        }
    }
}

impl<T: Scalar> TryFrom<SpecWire<T>> for AttractSpec<T> {
    type Error = Error;

    fn try_from(w: SpecWire<T>) -> Result<Self> {
        if w.edges.len() != w.beta.len() {
            return Err(Error::InvalidSpec(format!(
                "{} edges but {} beta weights",
                w.edges.len(),
                w.beta.len()
            )));
        }
        let edges = w
            .edges
            .into_iter()
            .zip(w.beta)
            .map(|((a, b), beta)| Edge { a, b, beta })
            .collect();
        AttractSpec::from_parts(w.mode, w.members, w.target, edges, w.alpha)
    }
}

impl<T: Scalar> AttractSpec<T> {
    /// Assembles and validates a spec from explicit parts.
    pub fn from_parts(
        mode: Mode,
        members: Vec<String>,
        target: Option<String>,
        edges: Vec<Edge<T>>,
        alpha: BTreeMap<String, T>,
    ) -> Result<Self> {
        let spec = AttractSpec {
            mode,
            members,
            target,
            edges,
            alpha,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn members(&self) -> &[String] {
        &self.members
    }

    pub fn target(&self) -> Option<&str> {
        self.target.as_deref()
    }

    pub fn edges(&self) -> &[Edge<T>] {
        &self.edges
    }

    /// Anchor weight of `word`; zero for words without an entry.
    pub fn alpha(&self, word: &str) -> T {
        self.alpha.get(word).copied().unwrap_or_else(T::zero)
    }

    pub fn alphas(&self) -> &BTreeMap<String, T> {
        &self.alpha
    }

    pub fn is_movable(&self, word: &str) -> bool {
        match self.mode {
            Mode::TargetToSet => self.target.as_deref() == Some(word),
            Mode::Clique => self.members.iter().any(|m| m == word),
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.members.len() < 2 {
            return bad(format!("need at least 2 words, got {}", self.members.len()));
        }
        let mut seen = BTreeSet::new();
        for m in &self.members {
            validate_token(m)?;
            if !seen.insert(m.as_str()) {
                return bad(format!("duplicate word {m:?}"));
            }
        }
        match (self.mode, &self.target) {
            (Mode::TargetToSet, None) => return bad("target mode requires a target word".into()),
            (Mode::TargetToSet, Some(t)) if !seen.contains(t.as_str()) => {
                return bad(format!("target {t:?} is not among the words"))
            }
            (Mode::Clique, Some(_)) => return bad("set mode takes no target word".into()),
            _ => {}
        }
        for (w, &a) in &self.alpha {
            if !seen.contains(w.as_str()) {
                return bad(format!("alpha given for non-member {w:?}"));
            }
            if !a.is_finite() || a < T::zero() {
                return bad(format!("alpha for {w:?} must be finite and non-negative"));
            }
        }

        let mut pairs = BTreeSet::new();
        for e in &self.edges {
            if !seen.contains(e.a.as_str()) || !seen.contains(e.b.as_str()) || e.a == e.b {
                return bad(format!("edge ({:?}, {:?}) is not a pair of distinct members", e.a, e.b));
            }
            if !e.beta.is_finite() || e.beta <= T::zero() {
                return bad(format!("beta for ({:?}, {:?}) must be finite and positive", e.a, e.b));
            }
            let key = if e.a < e.b { (&e.a, &e.b) } else { (&e.b, &e.a) };
            if !pairs.insert(key) {
                return bad(format!("duplicate edge ({:?}, {:?})", e.a, e.b));
            }
        }
        let n = self.members.len();
        match self.mode {
            Mode::TargetToSet => {
                let t = self.target.as_deref().unwrap_or_default();
                let star = self.edges.len() == n - 1
                    && self.edges.iter().all(|e| e.a == t || e.b == t);
                if !star {
                    return bad("target mode edges must form a star on the target".into());
                }
            }
            Mode::Clique => {
                if self.edges.len() != n * (n - 1) / 2 {
                    return bad("set mode edges must form the complete graph".into());
                }
            }
        }
        // n >= 2 and the edge shape checks above guarantee at least one edge,
        // so the problem is never vacuous.
        Ok(())
    }
}

/// Builds the star (target mode) or complete graph (set mode) over `words`.
pub fn build_spec<T: Scalar>(
    mode: Mode,
    words: &[String],
    target: Option<&str>,
    params: &RefitParams<T>,
) -> Result<AttractSpec<T>> {
    params.validate()?;
    let n = words.len();
    if n < 2 {
        return Err(Error::InvalidSpec(format!("need at least 2 words, got {n}")));
    }
    let beta = match params.beta_scheme {
        BetaScheme::Uniform(c) => c,
        // star: the target has degree n-1; clique: every word has degree n-1
        BetaScheme::InverseDegree => T::one() / T::from_usize(n - 1).expect("word count fits scalar"),
    };
    let edges = match mode {
        Mode::TargetToSet => {
            let t = target.ok_or_else(|| Error::InvalidSpec("target mode requires a target word".into()))?;
            words
                .iter()
                .filter(|w| w.as_str() != t)
                .map(|w| Edge {
                    a: t.to_string(),
                    b: w.clone(),
                    beta,
                })
                .collect()
        }
        Mode::Clique => {
            let mut edges = Vec::with_capacity(n * (n - 1) / 2);
            for (i, a) in words.iter().enumerate() {
                for b in &words[i + 1..] {
                    edges.push(Edge {
                        a: a.clone(),
                        b: b.clone(),
                        beta,
                    });
                }
            }
            edges
        }
    };
    let alpha = words
        .iter()
        .map(|w| (w.clone(), params.alpha_default))
        .collect();
    AttractSpec::from_parts(
        mode,
        words.to_vec(),
        target.map(str::to_string),
        edges,
        alpha,
    )
}
