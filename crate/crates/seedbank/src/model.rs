//! Parameter families and derived quantities.
//!
//! A Cannings reproduction law is a law on exchangeable weight vectors
//! `W = (W_1..W_N)`; a child picks parent label `k` with probability `W_k`.
//! The seed bank law `mu` on `{1..m}` gives the number of generations between
//! a child and its parent. Both are immutable after construction.

use crate::rng::{self, StreamRng};
use crate::scalar::Scalar;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("probabilities sum to {0}")]
    NotNormalized(f64),
    #[error("negative or non-finite probability {0}")]
    BadProbability(f64),
    #[error("empty seed bank law")]
    EmptyLaw,
    #[error("population size must be positive")]
    ZeroPopulation,
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("mutation probabilities violate u0 = 1 - u1 - u2 >= 0 (u1 + u2 = {0})")]
    MutationSum(f64),
    #[error("mixing time cap exceeded")]
    MixingCap,
}

const SUM_TOL: f64 = 1e-12;

/// One entry of an explicit paintbox: probability and weight vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PaintboxEntry {
    pub prob: f64,
    pub weights: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LawKind {
    WrightFisher,
    SymmetricDirichlet { alpha: f64 },
    /// With probability `eps` one uniform label gets the extra mass `psi`:
    /// `W = psi e_U + (1 - psi)/N`; otherwise `W = 1/N`.
    EldonWagner { psi: f64, eps: f64 },
    /// Finite list of vectors; a uniform random permutation is applied to the
    /// selected vector so the law is exchangeable.
    ExplicitPaintbox { entries: Vec<PaintboxEntry> },
}

/// Exchangeable reproduction law for a population of size `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CanningsLaw {
    n: usize,
    kind: LawKind,
}

/// One realised weight vector.
#[derive(Clone, Debug, PartialEq)]
pub enum Weights {
    Uniform { n: usize },
    Spike { n: usize, psi: f64, at: usize },
    Vector { w: Vec<f64>, cum: Vec<f64> },
}

impl Weights {
    pub fn from_vec(w: Vec<f64>) -> Self {
        let mut cum = Vec::with_capacity(w.len());
        let mut s = 0.0;
        for &x in &w {
            s += x;
            cum.push(s);
        }
        Weights::Vector { w, cum }
    }

    pub fn len(&self) -> usize {
        match self {
            Weights::Uniform { n } | Weights::Spike { n, .. } => *n,
            Weights::Vector { w, .. } => w.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Weight of the 0-based label `k`.
    pub fn weight(&self, k: usize) -> f64 {
        match self {
            Weights::Uniform { n } => 1.0 / *n as f64,
            Weights::Spike { n, psi, at } => {
                let base = (1.0 - psi) / *n as f64;
                if k == *at { psi + base } else { base }
            }
            Weights::Vector { w, .. } => w[k],
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.weight(k)).collect()
    }

    /// Total weight of the labels `0..k`.
    pub fn mass_of_first(&self, k: usize) -> f64 {
        match self {
            Weights::Uniform { n } => k as f64 / *n as f64,
            Weights::Spike { n, psi, at } => {
                let base = (1.0 - psi) * k as f64 / *n as f64;
                if *at < k { psi + base } else { base }
            }
            Weights::Vector { cum, .. } => {
                if k == 0 { 0.0 } else { cum[k - 1] }
            }
        }
    }

    /// Draw a 0-based label with probability `W_k`.
    pub fn sample_label<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match self {
            Weights::Uniform { n } => rng.random_range(0..*n),
            Weights::Spike { n, psi, at } => {
                if rng.random::<f64>() < *psi {
                    *at
                } else {
                    rng.random_range(0..*n)
                }
            }
            Weights::Vector { cum, .. } => {
                let u = rng.random::<f64>() * cum[cum.len() - 1];
                cum.partition_point(|&c| c <= u).min(cum.len() - 1)
            }
        }
    }
}

impl CanningsLaw {
    pub fn new(n: usize, kind: LawKind) -> Result<Self, ModelError> {
        if n == 0 {
            return Err(ModelError::ZeroPopulation);
        }
        match &kind {
            LawKind::WrightFisher => {}
            LawKind::SymmetricDirichlet { alpha } => {
                if !(alpha.is_finite() && *alpha > 0.0) {
                    return Err(ModelError::Parameter(format!("alpha must be positive, got {alpha}")));
                }
            }
            LawKind::EldonWagner { psi, eps } => {
                if !(*psi > 0.0 && *psi <= 1.0) {
                    return Err(ModelError::Parameter(format!("psi must lie in (0,1], got {psi}")));
                }
                if !(0.0..=1.0).contains(eps) {
                    return Err(ModelError::Parameter(format!("eps must lie in [0,1], got {eps}")));
                }
            }
            LawKind::ExplicitPaintbox { entries } => {
                if entries.is_empty() {
                    return Err(ModelError::Parameter("paintbox has no entries".into()));
                }
                check_probability_vector(&entries.iter().map(|e| e.prob).collect::<Vec<_>>())?;
                for e in entries {
                    if e.weights.len() != n {
                        return Err(ModelError::Parameter(format!(
                            "paintbox vector has length {}, expected N = {n}",
                            e.weights.len()
                        )));
                    }
                    check_probability_vector(&e.weights)?;
                }
            }
        }
        Ok(CanningsLaw { n, kind })
    }

    pub fn wright_fisher(n: usize) -> Self {
        CanningsLaw::new(n, LawKind::WrightFisher).expect("n > 0")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> &LawKind {
        &self.kind
    }

    pub fn is_wright_fisher(&self) -> bool {
        matches!(self.kind, LawKind::WrightFisher)
    }

    /// Draw one exchangeable weight vector.
    pub fn sample_weights<R: Rng + ?Sized>(&self, rng: &mut R) -> Weights {
        let n = self.n;
        match &self.kind {
            LawKind::WrightFisher => Weights::Uniform { n },
            LawKind::SymmetricDirichlet { alpha } => {
                let g = Gamma::new(*alpha, 1.0).expect("alpha > 0");
                let mut w: Vec<f64> = (0..n).map(|_| g.sample(rng)).collect();
                let mut s: f64 = w.iter().sum();
                if s <= 0.0 {
                    // every draw underflowed: the mass sits on one uniform label
                    w.iter_mut().for_each(|x| *x = 0.0);
                    w[rng.random_range(0..n)] = 1.0;
                    s = 1.0;
                }
                w.iter_mut().for_each(|x| *x /= s);
                Weights::from_vec(w)
            }
            LawKind::EldonWagner { psi, eps } => {
                if rng.random::<f64>() < *eps {
                    Weights::Spike { n, psi: *psi, at: rng.random_range(0..n) }
                } else {
                    Weights::Uniform { n }
                }
            }
            LawKind::ExplicitPaintbox { entries } => {
                let u = rng.random::<f64>();
                let mut acc = 0.0;
                let mut chosen = &entries[entries.len() - 1];
                for e in entries {
                    acc += e.prob;
                    if u < acc {
                        chosen = e;
                        break;
                    }
                }
                let mut w = chosen.weights.clone();
                w.shuffle(rng);
                Weights::from_vec(w)
            }
        }
    }

    /// Closed-form `(c, d)` when available.
    pub fn exact_c_d(&self) -> Option<(f64, f64)> {
        let nf = self.n as f64;
        match &self.kind {
            LawKind::WrightFisher => Some((1.0 / nf, 1.0 / (nf * nf))),
            LawKind::SymmetricDirichlet { alpha } => {
                let a = *alpha;
                let c = (a + 1.0) / (nf * a + 1.0);
                let d = (a + 1.0) * (a + 2.0) / ((nf * a + 1.0) * (nf * a + 2.0));
                Some((c, d))
            }
            LawKind::EldonWagner { psi, eps } => {
                let base = (1.0 - psi) / nf;
                let big = psi + base;
                let c = eps * (big * big + (nf - 1.0) * base * base) + (1.0 - eps) / nf;
                let d = eps * (big.powi(3) + (nf - 1.0) * base.powi(3)) + (1.0 - eps) / (nf * nf);
                Some((c, d))
            }
            LawKind::ExplicitPaintbox { entries } => {
                let c = entries.iter().map(|e| e.prob * e.weights.iter().map(|w| w * w).sum::<f64>()).sum();
                let d = entries.iter().map(|e| e.prob * e.weights.iter().map(|w| w * w * w).sum::<f64>()).sum();
                Some((c, d))
            }
        }
    }

    /// Finite support of the weight law up to permutation, for exact
    /// enumeration (`None` for continuous laws).
    pub fn finite_support(&self) -> Option<Vec<(f64, Vec<f64>)>> {
        match &self.kind {
            LawKind::WrightFisher => Some(vec![(1.0, vec![1.0 / self.n as f64; self.n])]),
            LawKind::ExplicitPaintbox { entries } => {
                Some(entries.iter().map(|e| (e.prob, e.weights.clone())).collect())
            }
            LawKind::EldonWagner { psi, eps } => {
                let base = (1.0 - psi) / self.n as f64;
                let mut spike = vec![base; self.n];
                spike[0] += psi;
                let mut out = vec![(*eps, spike)];
                if *eps < 1.0 {
                    out.push((1.0 - eps, vec![1.0 / self.n as f64; self.n]));
                }
                Some(out)
            }
            LawKind::SymmetricDirichlet { .. } => None,
        }
    }
}

fn check_probability_vector(p: &[f64]) -> Result<(), ModelError> {
    for &x in p {
        if !(x.is_finite() && x >= 0.0) {
            return Err(ModelError::BadProbability(x));
        }
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > SUM_TOL {
        return Err(ModelError::NotNormalized(s));
    }
    Ok(())
}

/// Seed bank law `mu` on `{1..m}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SeedBankLaw {
    probs: Vec<f64>,
    cum: Vec<f64>,
}

impl TryFrom<Vec<f64>> for SeedBankLaw {
    type Error = ModelError;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        SeedBankLaw::new(v)
    }
}

impl From<SeedBankLaw> for Vec<f64> {
    fn from(s: SeedBankLaw) -> Self {
        s.probs
    }
}

impl SeedBankLaw {
    pub fn new(probs: Vec<f64>) -> Result<Self, ModelError> {
        if probs.is_empty() {
            return Err(ModelError::EmptyLaw);
        }
        check_probability_vector(&probs)?;
        let mut cum = Vec::with_capacity(probs.len());
        let mut s = 0.0;
        for &p in &probs {
            s += p;
            cum.push(s);
        }
        Ok(SeedBankLaw { probs, cum })
    }

    /// No seed bank: `mu = delta_1`.
    pub fn delta1() -> Self {
        SeedBankLaw::new(vec![1.0]).expect("valid")
    }

    pub fn uniform(m: usize) -> Self {
        SeedBankLaw::new(vec![1.0 / m as f64; m]).expect("valid")
    }

    pub fn m(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// `mu(j)` for `j` in `1..=m` (zero outside).
    pub fn prob(&self, j: usize) -> f64 {
        if j == 0 || j > self.m() { 0.0 } else { self.probs[j - 1] }
    }

    /// `P(J >= i)`.
    pub fn tail(&self, i: usize) -> f64 {
        if i == 0 {
            return 1.0;
        }
        self.probs.iter().skip(i - 1).sum()
    }

    /// `beta = E[J]`.
    pub fn beta(&self) -> f64 {
        self.probs.iter().enumerate().map(|(i, p)| (i + 1) as f64 * p).sum()
    }

    /// Draw `J` in `1..=m`.
    pub fn sample_jump<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u = rng.random::<f64>() * self.cum[self.cum.len() - 1];
        let mut j = self.cum.partition_point(|&c| c <= u).min(self.m() - 1);
        while self.probs[j] == 0.0 {
            j = (j + 1) % self.m();
        }
        j + 1
    }

    /// Transition matrix of the clock chain `R` on `{1..m}` (0-based indices):
    /// deterministic decrement above 1, redistribution by `mu` from 1.
    pub fn transition_matrix<S: Scalar>(&self) -> Vec<Vec<S>> {
        let m = self.m();
        let mut p = vec![vec![S::zero(); m]; m];
        for (j, &q) in self.probs.iter().enumerate() {
            p[0][j] = S::from_f64(q);
        }
        for (i, row) in p.iter_mut().enumerate().skip(1) {
            row[i - 1] = S::one();
        }
        p
    }
}

/// Stationary law `nu(i) = P(J >= i) / E[J]` of the clock chain.
pub fn stationary_law(mu: &SeedBankLaw) -> Vec<f64> {
    let beta = mu.beta();
    (1..=mu.m()).map(|i| mu.tail(i) / beta).collect()
}

/// [`stationary_law`] in an arbitrary scalar type.
pub fn stationary_law_exact<S: Scalar>(mu: &SeedBankLaw) -> Vec<S> {
    let p: Vec<S> = mu.probs().iter().map(|&x| S::from_f64(x)).collect();
    let mut beta = S::zero();
    for (i, q) in p.iter().enumerate() {
        beta = beta + S::from_int(i as i64 + 1) * q.clone();
    }
    let mut out = Vec::with_capacity(p.len());
    for i in 0..p.len() {
        let mut tail = S::zero();
        for q in &p[i..] {
            tail = tail + q.clone();
        }
        out.push(tail / beta.clone());
    }
    out
}

/// Row vector times matrix.
pub fn vec_mat<S: Scalar>(v: &[S], p: &[Vec<S>]) -> Vec<S> {
    let m = p.first().map_or(0, |r| r.len());
    let mut out = vec![S::zero(); m];
    for (vi, row) in v.iter().zip(p) {
        if vi.is_zero() {
            continue;
        }
        for (o, x) in out.iter_mut().zip(row) {
            if !x.is_zero() {
                *o = o.clone() + vi.clone() * x.clone();
            }
        }
    }
    out
}

/// Total variation distance (half L1) between two probability vectors.
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Worst-start distance `d(g) = max_j TV(P^g(j, .), nu)` for `g = 0..=g_max`.
pub fn distance_to_stationarity(mu: &SeedBankLaw, g_max: usize) -> Vec<f64> {
    let nu = stationary_law(mu);
    let p = mu.transition_matrix::<f64>();
    let m = mu.m();
    let mut rows: Vec<Vec<f64>> = (0..m).map(|j| (0..m).map(|k| if j == k { 1.0 } else { 0.0 }).collect()).collect();
    let mut out = Vec::with_capacity(g_max + 1);
    for g in 0..=g_max {
        out.push(rows.iter().map(|r| tv_distance(r, &nu)).fold(0.0, f64::max));
        if g < g_max {
            rows = rows.iter().map(|r| vec_mat(r, &p)).collect();
        }
    }
    out
}

pub const MIXING_CAP: usize = 1_000_000;

/// Mixing time `tau = min{g : d(g) < 1/4}` of the clock chain.
pub fn mixing_time(mu: &SeedBankLaw) -> Result<usize, ModelError> {
    mixing_time_with_cap(mu, MIXING_CAP)
}

pub fn mixing_time_with_cap(mu: &SeedBankLaw, cap: usize) -> Result<usize, ModelError> {
    let nu = stationary_law(mu);
    let p = mu.transition_matrix::<f64>();
    let m = mu.m();
    let mut rows: Vec<Vec<f64>> = (0..m).map(|j| (0..m).map(|k| if j == k { 1.0 } else { 0.0 }).collect()).collect();
    for g in 0..=cap {
        let d = rows.iter().map(|r| tv_distance(r, &nu)).fold(0.0, f64::max);
        if d < 0.25 {
            return Ok(g);
        }
        rows = rows.iter().map(|r| vec_mat(r, &p)).collect();
    }
    Err(ModelError::MixingCap)
}

/// Per-vertex mutation probabilities: `u1` sends the edge to the type-a
/// source, `u2` to the type-A source.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct MutationRates {
    pub u1: f64,
    pub u2: f64,
}

impl MutationRates {
    pub fn new(u1: f64, u2: f64) -> Result<Self, ModelError> {
        for u in [u1, u2] {
            if !(u.is_finite() && u >= 0.0) {
                return Err(ModelError::BadProbability(u));
            }
        }
        if u1 + u2 > 1.0 + SUM_TOL {
            return Err(ModelError::MutationSum(u1 + u2));
        }
        Ok(MutationRates { u1, u2 })
    }

    pub fn none() -> Self {
        MutationRates { u1: 0.0, u2: 0.0 }
    }

    pub fn u0(&self) -> f64 {
        (1.0 - self.u1 - self.u2).max(0.0)
    }

    /// Probability that a lineage is frozen at a given step.
    pub fn freeze_prob(&self) -> f64 {
        self.u1 + self.u2
    }

    pub fn is_zero(&self) -> bool {
        self.u1 == 0.0 && self.u2 == 0.0
    }

    /// `theta = u1 / (u1 + u2)`, undefined without mutation.
    pub fn theta(&self) -> Option<f64> {
        let s = self.u1 + self.u2;
        (s > 0.0).then(|| self.u1 / s)
    }

    /// Weight carried by each frozen lineage in the moment duality: the
    /// probability that a mutation is of type A, `u2 / (u1 + u2)`.
    /// Equals 1 by convention when there is no mutation.
    pub fn frozen_weight(&self) -> f64 {
        let s = self.u1 + self.u2;
        if s > 0.0 { self.u2 / s } else { 1.0 }
    }

    pub fn frozen_weight_exact<S: Scalar>(&self) -> S {
        if self.u1 + self.u2 > 0.0 {
            let u1 = S::from_f64(self.u1);
            let u2 = S::from_f64(self.u2);
            u2.clone() / (u1 + u2)
        } else {
            S::one()
        }
    }
}

/// Pair and triple coalescence probabilities of one Cannings step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CoalescenceStats {
    pub c: f64,
    pub d: f64,
    pub estimator_stderr: f64,
    pub d_stderr: f64,
}

/// `c = N E[W^2]`, `d = N E[W^3]`.
///
/// Exact for Wright-Fisher and explicit paintboxes; Monte Carlo otherwise,
/// using the unbiased per-draw estimators `sum_k W_k^2` and `sum_k W_k^3`.
pub fn coalescence_probs(law: &CanningsLaw, replicates: u64, seed: u64) -> CoalescenceStats {
    match law.kind() {
        LawKind::WrightFisher | LawKind::ExplicitPaintbox { .. } => {
            let (c, d) = law.exact_c_d().expect("closed form");
            CoalescenceStats { c, d, estimator_stderr: 0.0, d_stderr: 0.0 }
        }
        _ => {
            let reps = replicates.max(1);
            let mut rng: StreamRng = rng::stream(seed, &[rng::tag::WEIGHTS, 0xc0a1]);
            let (mut s2, mut s2sq, mut s3, mut s3sq) = (0.0, 0.0, 0.0, 0.0);
            for _ in 0..reps {
                let w = law.sample_weights(&mut rng).to_vec();
                let a: f64 = w.iter().map(|x| x * x).sum();
                let b: f64 = w.iter().map(|x| x * x * x).sum();
                s2 += a;
                s2sq += a * a;
                s3 += b;
                s3sq += b * b;
            }
            let r = reps as f64;
            let c = s2 / r;
            let d = s3 / r;
            let se = |s: f64, sq: f64| {
                if reps > 1 { ((sq / r - (s / r).powi(2)).max(0.0) * r / (r - 1.0) / r).sqrt() } else { 0.0 }
            };
            CoalescenceStats { c, d, estimator_stderr: se(s2, s2sq), d_stderr: se(s3, s3sq) }
        }
    }
}

/// Monotone trend of a sequence along the size grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Decreasing,
    Increasing,
    Constant,
    Mixed,
}

pub fn trend(xs: &[f64]) -> Trend {
    let scale = xs.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(f64::MIN_POSITIVE);
    let tol = 1e-9 * scale;
    let diffs: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    if diffs.iter().all(|d| d.abs() <= tol) {
        Trend::Constant
    } else if diffs.iter().all(|&d| d <= tol) {
        Trend::Decreasing
    } else if diffs.iter().all(|&d| d >= -tol) {
        Trend::Increasing
    } else {
        Trend::Mixed
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionRow {
    pub n: usize,
    pub c: f64,
    pub d: f64,
    pub c_stderr: f64,
    pub beta: f64,
    pub tau: usize,
    pub c_over_beta2: f64,
    pub mixing_term: f64,
    pub tail_term: f64,
    pub d_over_beta_c: f64,
    /// `m / (N^eps beta^2)`: the relaxed alternative to the mixing condition,
    /// informational only.
    pub relaxed_term: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionReport {
    pub eps: f64,
    pub rows: Vec<ConditionRow>,
    pub c_over_beta2: Trend,
    pub mixing_term: Trend,
    pub tail_term: Trend,
    pub d_over_beta_c: Trend,
    pub relaxed_term: Trend,
}

impl ConditionReport {
    /// Last over first value of `d / (beta c)`; stays away from 0 outside the
    /// Kingman regime.
    pub fn d_ratio_change(&self) -> f64 {
        match (self.rows.first(), self.rows.last()) {
            (Some(a), Some(b)) if a.d_over_beta_c > 0.0 => b.d_over_beta_c / a.d_over_beta_c,
            _ => f64::NAN,
        }
    }
}

/// Evaluate the four Kingman-limit sequences along `n_grid`. Diagnostic only.
pub fn check_limit_conditions<F>(
    family: F,
    eps: f64,
    n_grid: &[usize],
    replicates: u64,
    seed: u64,
) -> Result<ConditionReport, ModelError>
where
    F: Fn(usize) -> (CanningsLaw, SeedBankLaw),
{
    if !(eps > 0.0) {
        return Err(ModelError::Parameter("eps must be positive".into()));
    }
    if n_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ModelError::Parameter("N grid must be increasing".into()));
    }
    let mut rows = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let (law, mu) = family(n);
        let stats = match law.exact_c_d() {
            Some((c, d)) => CoalescenceStats { c, d, estimator_stderr: 0.0, d_stderr: 0.0 },
            None => coalescence_probs(&law, replicates, seed ^ n as u64),
        };
        let beta = mu.beta();
        let tau = mixing_time(&mu)?;
        let ne = (n as f64).powf(eps);
        rows.push(ConditionRow {
            n,
            c: stats.c,
            d: stats.d,
            c_stderr: stats.estimator_stderr,
            beta,
            tau,
            c_over_beta2: stats.c / (beta * beta),
            mixing_term: ne * tau as f64 * stats.c,
            tail_term: 0.25f64.powf(ne) * beta * beta,
            d_over_beta_c: stats.d / (beta * stats.c),
            relaxed_term: mu.m() as f64 / (ne * beta * beta),
        });
    }
    let col = |f: fn(&ConditionRow) -> f64| trend(&rows.iter().map(f).collect::<Vec<_>>());
    Ok(ConditionReport {
        eps,
        c_over_beta2: col(|r| r.c_over_beta2),
        mixing_term: col(|r| r.mixing_term),
        tail_term: col(|r| r.tail_term),
        d_over_beta_c: col(|r| r.d_over_beta_c),
        relaxed_term: col(|r| r.relaxed_term),
        rows,
    })
}
