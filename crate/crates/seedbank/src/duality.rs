//! Exact finite-`N` duality checks.
//!
//! Small instances are enumerated completely: the one-step laws of the
//! window process `(B, D)`, of the frequency process `X` and of the
//! ancestral counts are assembled into row-stochastic matrices, and both
//! sides of a duality are evaluated by matrix powers. All routines are
//! generic over [`Scalar`], so the same code runs in `f64` and in exact
//! rational arithmetic.
//!
//! Window states are stored as `(b_1, .., b_m, d)`, frequency states as the
//! type-A counts `(k_1, .., k_m)` and ancestral states as the per-generation
//! counts of distinct ancestors.

use crate::backward::run_window_distributional;
use crate::forward::{initial_counts, simulate_frequency_at, ForwardError};
use crate::model::{CanningsLaw, LawKind, MutationRates, SeedBankLaw};
use crate::par::{map_replicates, Execution};
use crate::rng;
use crate::scalar::{binom, Scalar};
use crate::stats::MeanEstimate;
use serde::Serialize;
use std::collections::{BTreeMap, HashMap, VecDeque};
use thiserror::Error;

/// Largest state space built by the exact routines.
pub const MAX_STATES: usize = 50_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DualityError {
    #[error("law not exactly enumerable")]
    NotEnumerable,
    #[error("state space too large for exact enumeration ({0} states)")]
    TooLarge(usize),
    #[error("state {0:?} is not in the chain")]
    UnknownState(Vec<usize>),
    #[error("{0}")]
    Unsupported(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Forward(#[from] ForwardError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StateKind {
    /// `(b_1, .., b_m, d)`
    Window,
    /// `(k_1, .., k_m)`, type-A counts
    Frequency,
    /// distinct ancestors per generation
    Ancestral,
}

/// Row-stochastic matrix over an enumerated state space.
#[derive(Clone, Debug)]
pub struct ChainMatrix<S> {
    kind: StateKind,
    states: Vec<Vec<usize>>,
    index: HashMap<Vec<usize>, usize>,
    rows: Vec<Vec<(usize, S)>>,
}

impl<S: Scalar> ChainMatrix<S> {
    fn assemble(kind: StateKind, states: Vec<Vec<usize>>, rows: Vec<BTreeMap<Vec<usize>, S>>) -> Self {
        let index: HashMap<Vec<usize>, usize> = states.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
        let rows = rows
            .into_iter()
            .map(|r| {
                r.into_iter()
                    .filter(|(_, p)| !p.is_zero())
                    .map(|(t, p)| (*index.get(&t).expect("state space is closed"), p))
                    .collect()
            })
            .collect();
        ChainMatrix { kind, states, index, rows }
    }

    pub fn kind(&self) -> StateKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[Vec<usize>] {
        &self.states
    }

    pub fn index_of(&self, state: &[usize]) -> Option<usize> {
        self.index.get(state).copied()
    }

    /// Nonzero entries of row `i` as `(column, probability)`.
    pub fn row(&self, i: usize) -> &[(usize, S)] {
        &self.rows[i]
    }

    pub fn entry(&self, from: &[usize], to: &[usize]) -> S {
        let (Some(i), Some(j)) = (self.index_of(from), self.index_of(to)) else {
            return S::zero();
        };
        self.rows[i].iter().find(|(c, _)| *c == j).map(|(_, p)| p.clone()).unwrap_or_else(S::zero)
    }

    pub fn row_sum(&self, i: usize) -> S {
        self.rows[i].iter().fold(S::zero(), |acc, (_, p)| acc + p.clone())
    }

    /// Largest `|row sum - 1|`.
    pub fn max_row_defect(&self) -> f64 {
        (0..self.len()).map(|i| (self.row_sum(i) - S::one()).abs().to_f64()).fold(0.0, f64::max)
    }

    /// One step of a distribution (row vector times matrix).
    pub fn step(&self, dist: &[S]) -> Vec<S> {
        let mut out = vec![S::zero(); self.len()];
        for (i, p) in dist.iter().enumerate() {
            if p.is_zero() {
                continue;
            }
            for (j, q) in &self.rows[i] {
                out[*j] = out[*j].clone() + p.clone() * q.clone();
            }
        }
        out
    }

    pub fn point_mass(&self, state: &[usize]) -> Result<Vec<S>, DualityError> {
        let i = self.index_of(state).ok_or_else(|| DualityError::UnknownState(state.to_vec()))?;
        let mut v = vec![S::zero(); self.len()];
        v[i] = S::one();
        Ok(v)
    }

    /// Laws of the chain started at `start` after `0..=g` steps.
    pub fn distributions(&self, start: &[usize], g: usize) -> Result<Vec<Vec<S>>, DualityError> {
        let mut v = self.point_mass(start)?;
        let mut out = Vec::with_capacity(g + 1);
        for _ in 0..g {
            let next = self.step(&v);
            out.push(v);
            v = next;
        }
        out.push(v);
        Ok(out)
    }

    /// `sum_s dist(s) f(s)`.
    pub fn expectation(&self, dist: &[S], f: impl Fn(&[usize]) -> S) -> S {
        dist.iter()
            .zip(&self.states)
            .filter(|(p, _)| !p.is_zero())
            .fold(S::zero(), |acc, (p, s)| acc + p.clone() * f(s))
    }

    pub fn to_dense_f64(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.len()]; self.len()];
        for (i, row) in self.rows.iter().enumerate() {
            for (j, p) in row {
                out[i][*j] = p.to_f64();
            }
        }
        out
    }
}

/// Finite support of the weight law, up to permutation, in `S`.
fn weight_support<S: Scalar>(law: &CanningsLaw) -> Result<Vec<(S, Vec<S>)>, DualityError> {
    let n = law.n();
    match law.kind() {
        LawKind::WrightFisher => Ok(vec![(S::one(), vec![S::ratio(1, n as i64); n])]),
        LawKind::EldonWagner { psi, eps } => {
            let psi = S::from_f64(*psi);
            let eps = S::from_f64(*eps);
            let base = (S::one() - psi.clone()) / S::from_int(n as i64);
            let mut spike = vec![base; n];
            spike[0] = spike[0].clone() + psi;
            let mut out = vec![(eps.clone(), spike)];
            if !(S::one() - eps.clone()).is_zero() {
                out.push((S::one() - eps, vec![S::ratio(1, n as i64); n]));
            }
            Ok(out)
        }
        LawKind::ExplicitPaintbox { entries } => Ok(entries
            .iter()
            .map(|e| (S::from_f64(e.prob), e.weights.iter().map(|&w| S::from_f64(w)).collect()))
            .collect()),
        LawKind::SymmetricDirichlet { .. } => Err(DualityError::NotEnumerable),
    }
}

/// Exact law of `C(k)`, the number of distinct labels among `k` draws from
/// one weight vector; entry `c` of the result is `P(C(k) = c)`.
pub fn ancestor_count_law<S: Scalar>(law: &CanningsLaw, k: usize) -> Result<Vec<S>, DualityError> {
    let support = weight_support::<S>(law)?;
    let mut out = vec![S::zero(); k + 1];
    if k <= 1 {
        out[k] = S::one();
        return Ok(out);
    }
    for (prob, w) in support {
        // dp[j][b]: j draws placed on the labels seen so far, b of them hit
        let mut dp = vec![vec![S::zero(); k + 1]; k + 1];
        dp[0][0] = S::one();
        for wl in &w {
            let mut next = vec![vec![S::zero(); k + 1]; k + 1];
            for j in 0..=k {
                for b in 0..=j {
                    if dp[j][b].is_zero() {
                        continue;
                    }
                    for t in 0..=(k - j) {
                        let nb = if t > 0 { b + 1 } else { b };
                        let add = dp[j][b].clone() * binom::<S>(k - j, t) * wl.ipow(t as u32);
                        next[j + t][nb] = next[j + t][nb].clone() + add;
                    }
                }
            }
            dp = next;
        }
        for c in 0..=k {
            out[c] = out[c].clone() + prob.clone() * dp[k][c].clone();
        }
    }
    Ok(out)
}

/// All vectors of `m` nonnegative integers summing to `total`.
pub fn compositions(total: usize, m: usize) -> Vec<Vec<usize>> {
    if m == 0 {
        return if total == 0 { vec![vec![]] } else { vec![] };
    }
    let mut out = Vec::new();
    for first in (0..=total).rev() {
        for mut rest in compositions(total - first, m - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Multinomial probability of the allocation `a` with cell probabilities `p`.
pub fn multinomial_pmf<S: Scalar>(a: &[usize], p: &[S]) -> S {
    let mut left: usize = a.iter().sum();
    let mut acc = S::one();
    for (k, q) in a.iter().zip(p) {
        acc = acc * binom::<S>(left, *k) * q.ipow(*k as u32);
        left -= k;
    }
    acc
}

pub fn binomial_pmf<S: Scalar>(n: usize, k: usize, p: &S) -> S {
    binom::<S>(n, k) * p.ipow(k as u32) * (S::one() - p.clone()).ipow((n - k) as u32)
}

fn mu_exact<S: Scalar>(mu: &SeedBankLaw) -> Vec<S> {
    mu.probs().iter().map(|&p| S::from_f64(p)).collect()
}

fn mutation_exact<S: Scalar>(mutation: &MutationRates) -> (S, S, S) {
    let u1 = S::from_f64(mutation.u1);
    let u2 = S::from_f64(mutation.u2);
    (S::one() - u1.clone() - u2.clone(), u1, u2)
}

fn build_rows<S: Scalar>(
    states: &[Vec<usize>],
    f: impl Fn(&[usize]) -> Result<BTreeMap<Vec<usize>, S>, DualityError> + Sync + Send,
) -> Result<Vec<BTreeMap<Vec<usize>, S>>, DualityError> {
    map_replicates(Execution::default(), states.len() as u64, |i| f(&states[i as usize])).into_iter().collect()
}

fn add_to<S: Scalar>(row: &mut BTreeMap<Vec<usize>, S>, key: Vec<usize>, p: S) {
    if p.is_zero() {
        return;
    }
    let e = row.entry(key).or_insert_with(S::zero);
    *e = e.clone() + p;
}

/// Exact one-step law of the window process `(B, D)` on all states with
/// `|B| + D <= n_max`. The set is closed because `|B| + D` never increases.
pub fn backward_matrix<S: Scalar>(
    law: &CanningsLaw,
    mu: &SeedBankLaw,
    mutation: &MutationRates,
    n_max: usize,
) -> Result<ChainMatrix<S>, DualityError> {
    weight_support::<S>(law)?;
    let m = mu.m();
    let mut states = Vec::new();
    for total in 0..=n_max {
        for v in compositions(total, m + 1) {
            states.push(v);
        }
    }
    if states.len() > MAX_STATES {
        return Err(DualityError::TooLarge(states.len()));
    }
    let c_laws: Vec<Vec<S>> = (0..=n_max).map(|k| ancestor_count_law::<S>(law, k)).collect::<Result<_, _>>()?;
    let mu_s = mu_exact::<S>(mu);
    let (_, u1, u2) = mutation_exact::<S>(mutation);
    let freeze = u1 + u2;
    let rows = build_rows(&states, |s| {
        let n1 = s[0];
        let d = s[m];
        let mut shifted: Vec<usize> = s[1..m].to_vec();
        shifted.push(0);
        let mut row = BTreeMap::new();
        for (c, pc) in c_laws[n1].iter().enumerate() {
            if pc.is_zero() {
                continue;
            }
            for f in 0..=c {
                let pf = pc.clone() * binomial_pmf(c, f, &freeze);
                if pf.is_zero() {
                    continue;
                }
                for a in compositions(c - f, m) {
                    let pa = multinomial_pmf(&a, &mu_s);
                    let mut t: Vec<usize> = shifted.iter().zip(&a).map(|(x, y)| x + y).collect();
                    t.push(d + f);
                    add_to(&mut row, t, pf.clone() * pa);
                }
            }
        }
        Ok(row)
    })?;
    Ok(ChainMatrix::assemble(StateKind::Window, states, rows))
}

/// Law of the weight mass `S` of a uniformly placed set of `k` labels, for
/// a law with finite support (the selected vector is uniformly permuted).
fn subset_mass_law<S: Scalar>(support: &[(S, Vec<S>)], n: usize, k: usize) -> Vec<(S, S)> {
    let mut out = Vec::new();
    let subsets = binom::<S>(n, k);
    for (prob, w) in support {
        for subset in k_subsets(n, k) {
            let mass = subset.iter().fold(S::zero(), |acc, &i| acc + w[i].clone());
            out.push((prob.clone() / subsets.clone(), mass));
        }
    }
    out
}

fn k_subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::with_capacity(k), &mut out);
    out
}

/// Exact one-step law of the frequency process on the grid `{0..N}^m`.
///
/// Given the weight vectors the `N` newborns are independent, each of type A
/// with probability `u2 + u0 sum_j mu(j) S_j`, where `S_j` is the weight
/// mass of the type-A set of generation slot `j`. For Wright-Fisher
/// `S_j = k_j / N` and any `m` is supported. For other laws the counts alone
/// are Markov only when `m = 1`, because a generation's weight vector is
/// reused while it moves through the window.
pub fn forward_matrix<S: Scalar>(
    law: &CanningsLaw,
    mu: &SeedBankLaw,
    mutation: &MutationRates,
) -> Result<ChainMatrix<S>, DualityError> {
    let support = weight_support::<S>(law)?;
    let n = law.n();
    let m = mu.m();
    if !law.is_wright_fisher() && m > 1 {
        return Err(DualityError::Unsupported(
            "the type-A counts of a non-Wright-Fisher law are Markov only for m = 1".into(),
        ));
    }
    let size = (n + 1).checked_pow(m as u32).unwrap_or(usize::MAX);
    if size > MAX_STATES {
        return Err(DualityError::TooLarge(size));
    }
    let states: Vec<Vec<usize>> = (0..size)
        .map(|mut x| {
            let mut v = vec![0; m];
            for slot in v.iter_mut() {
                *slot = x % (n + 1);
                x /= n + 1;
            }
            v
        })
        .collect();
    let mu_s = mu_exact::<S>(mu);
    let (u0, _, u2) = mutation_exact::<S>(mutation);
    let rows = build_rows(&states, |k| {
        let masses: Vec<(S, S)> = if law.is_wright_fisher() {
            let s = k
                .iter()
                .zip(&mu_s)
                .fold(S::zero(), |acc, (&kj, q)| acc + q.clone() * S::ratio(kj as i64, n as i64));
            vec![(S::one(), s)]
        } else {
            subset_mass_law(&support, n, k[0])
                .into_iter()
                .map(|(p, s)| (p, mu_s[0].clone() * s))
                .collect()
        };
        let mut row = BTreeMap::new();
        for (pw, s) in masses {
            let p = u2.clone() + u0.clone() * s;
            for k1 in 0..=n {
                let mut t = Vec::with_capacity(m);
                t.push(k1);
                t.extend_from_slice(&k[..m - 1]);
                add_to(&mut row, t, pw.clone() * binomial_pmf(n, k1, &p));
            }
        }
        Ok(row)
    })?;
    Ok(ChainMatrix::assemble(StateKind::Frequency, states, rows))
}

/// One step of the ancestral counts of a Wright-Fisher population: the
/// distinct ancestors in the first slot each choose a slot by `mu` and a
/// uniform label there; the others move one slot down.
fn ancestral_step<S: Scalar>(a: &[usize], n: usize, mu_s: &[S]) -> BTreeMap<Vec<usize>, S> {
    let m = a.len();
    let mut start: Vec<usize> = a[1..].to_vec();
    start.push(0);
    let mut dist: BTreeMap<Vec<usize>, S> = BTreeMap::new();
    dist.insert(start, S::one());
    for _ in 0..a[0] {
        let mut next = BTreeMap::new();
        for (s, p) in &dist {
            for j in 0..m {
                if mu_s[j].is_zero() {
                    continue;
                }
                let hit = S::ratio(s[j] as i64, n as i64);
                add_to(&mut next, s.clone(), p.clone() * mu_s[j].clone() * hit.clone());
                let mut t = s.clone();
                t[j] += 1;
                add_to(&mut next, t, p.clone() * mu_s[j].clone() * (S::one() - hit));
            }
        }
        dist = next;
    }
    dist
}

/// Exact chain of the ancestral counts of a Wright-Fisher population on the
/// states reachable from `start`.
pub fn ancestral_matrix<S: Scalar>(n: usize, mu: &SeedBankLaw, start: &[usize]) -> Result<ChainMatrix<S>, DualityError> {
    if start.len() != mu.m() {
        return Err(DualityError::Dimension(format!("{} sample counts for m = {}", start.len(), mu.m())));
    }
    let mu_s = mu_exact::<S>(mu);
    let mut seen: BTreeMap<Vec<usize>, BTreeMap<Vec<usize>, S>> = BTreeMap::new();
    let mut queue = VecDeque::from([start.to_vec()]);
    while let Some(s) = queue.pop_front() {
        if seen.contains_key(&s) {
            continue;
        }
        let row = ancestral_step(&s, n, &mu_s);
        for t in row.keys() {
            if !seen.contains_key(t) {
                queue.push_back(t.clone());
            }
        }
        seen.insert(s, row);
        if seen.len() > MAX_STATES {
            return Err(DualityError::TooLarge(seen.len()));
        }
    }
    let (states, rows): (Vec<_>, Vec<_>) = seen.into_iter().unzip();
    Ok(ChainMatrix::assemble(StateKind::Ancestral, states, rows))
}

/// `h0(n, k)`: probability that the one-step ancestors of a sample of
/// distinct individuals (`n_i` from slot `i`) all carry type A when the
/// window has type-A counts `k`.
pub fn h0<S: Scalar>(sample: &[usize], k: &[usize], n: usize, mu: &SeedBankLaw) -> S {
    let m = k.len();
    let mu_s = mu_exact::<S>(mu);
    let mut total = S::zero();
    for a in compositions(sample.first().copied().unwrap_or(0), m) {
        let mut p = multinomial_pmf(&a, &mu_s);
        for j in 0..m {
            let e = sample.get(j + 1).copied().unwrap_or(0);
            p = p * binom::<S>(k[j], e) / binom::<S>(n, e) * S::ratio(k[j] as i64, n as i64).ipow(a[j] as u32);
        }
        total = total + p;
    }
    total
}

/// `H(n, x) = prod_i x_i^{n_i}`.
pub fn moment_h<S: Scalar>(n: &[usize], x: &[S]) -> S {
    n.iter().zip(x).fold(S::one(), |acc, (&k, xi)| acc * xi.ipow(k as u32))
}

/// Both sides of a duality at one time.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DualityRow<S> {
    pub g: usize,
    pub lhs: S,
    pub rhs: S,
    pub diff: S,
}

impl<S: Scalar> DualityRow<S> {
    fn new(g: usize, lhs: S, rhs: S) -> Self {
        let diff = (lhs.clone() - rhs.clone()).abs();
        DualityRow { g, lhs, rhs, diff }
    }
}

fn pad(v: &[usize], m: usize) -> Result<Vec<usize>, DualityError> {
    if v.len() > m {
        return Err(DualityError::Dimension(format!("{} coordinates for m = {m}", v.len())));
    }
    let mut out = v.to_vec();
    out.resize(m, 0);
    Ok(out)
}

/// Moment duality between the frequency process started at `x` and the
/// window process started at `(n, 0)`:
/// `E_x[prod_i (X^i_g)^{n_i}] = E_n[w^{D_g} prod_i x_i^{B^i_g}]`, with `w`
/// the frozen-lineage weight `u2 / (u1 + u2)`. Rows for `0..=g`.
pub fn moment_duality_check<S: Scalar>(
    law: &CanningsLaw,
    mu: &SeedBankLaw,
    mutation: &MutationRates,
    n: &[usize],
    x: &[f64],
    g: usize,
) -> Result<Vec<DualityRow<S>>, DualityError> {
    let m = mu.m();
    let sample = pad(n, m)?;
    let k0 = initial_counts(x, law.n())?;
    if k0.len() != m {
        return Err(ForwardError::Dimension { expected: m, got: k0.len() }.into());
    }
    let k0: Vec<usize> = k0.into_iter().map(|k| k as usize).collect();
    let size = law.n() as i64;
    let xs: Vec<S> = k0.iter().map(|&k| S::ratio(k as i64, size)).collect();
    let fwd = forward_matrix::<S>(law, mu, mutation)?;
    let total: usize = sample.iter().sum();
    let bwd = backward_matrix::<S>(law, mu, mutation, total)?;
    let w = mutation.frozen_weight_exact::<S>();
    let fd = fwd.distributions(&k0, g)?;
    let mut start = sample.clone();
    start.push(0);
    let bd = bwd.distributions(&start, g)?;
    let moment = |k: &[usize]| {
        let xs: Vec<S> = k.iter().map(|&ki| S::ratio(ki as i64, size)).collect();
        moment_h(&sample, &xs)
    };
    let dual = |s: &[usize]| w.ipow(s[m] as u32) * moment_h(&s[..m], &xs);
    Ok((0..=g)
        .map(|t| DualityRow::new(t, fwd.expectation(&fd[t], moment), bwd.expectation(&bd[t], dual)))
        .collect())
}

/// Sampling duality for Wright-Fisher reproduction without mutation:
/// `E_x[h0(n, X_g)] = E_n[h0(A_g, x)]` for a sample of distinct individuals.
/// At `g = 0` both sides are `h0(n, x)`, which fixes the time alignment.
pub fn sampling_duality_check<S: Scalar>(
    law: &CanningsLaw,
    mu: &SeedBankLaw,
    n: &[usize],
    x: &[f64],
    g: usize,
) -> Result<Vec<DualityRow<S>>, DualityError> {
    if !law.is_wright_fisher() {
        return Err(DualityError::Unsupported("the sampling duality is enumerated for Wright-Fisher laws".into()));
    }
    let size = law.n();
    let m = mu.m();
    let sample = pad(n, m)?;
    if sample.iter().any(|&s| s > size) {
        return Err(DualityError::Dimension(format!("more than N = {size} distinct individuals in one generation")));
    }
    let k0 = initial_counts(x, size)?;
    if k0.len() != m {
        return Err(ForwardError::Dimension { expected: m, got: k0.len() }.into());
    }
    let k0: Vec<usize> = k0.into_iter().map(|k| k as usize).collect();
    let fwd = forward_matrix::<S>(law, mu, &MutationRates::none())?;
    let anc = ancestral_matrix::<S>(size, mu, &sample)?;
    let fd = fwd.distributions(&k0, g)?;
    let ad = anc.distributions(&sample, g)?;
    Ok((0..=g)
        .map(|t| {
            let lhs = fwd.expectation(&fd[t], |k| h0::<S>(&sample, k, size, mu));
            let rhs = anc.expectation(&ad[t], |a| h0::<S>(a, &k0, size, mu));
            DualityRow::new(t, lhs, rhs)
        })
        .collect())
}

/// Monte Carlo estimates of both sides of the moment duality, for sizes
/// beyond exact enumeration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonteCarloDuality {
    pub g: usize,
    pub forward: MeanEstimate,
    pub backward: MeanEstimate,
}

impl MonteCarloDuality {
    /// `|forward - backward|` in units of the combined standard error.
    pub fn z_score(&self) -> f64 {
        let se = (self.forward.stderr.powi(2) + self.backward.stderr.powi(2)).sqrt();
        let d = (self.forward.mean - self.backward.mean).abs();
        if se > 0.0 { d / se } else if d == 0.0 { 0.0 } else { f64::INFINITY }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn moment_duality_mc(
    law: &CanningsLaw,
    mu: &SeedBankLaw,
    mutation: &MutationRates,
    n: &[usize],
    x: &[f64],
    g: usize,
    replicates: u64,
    seed: u64,
    exec: Execution,
) -> Result<MonteCarloDuality, DualityError> {
    let m = mu.m();
    let sample = pad(n, m)?;
    let k0 = initial_counts(x, law.n())?;
    if k0.len() != m {
        return Err(ForwardError::Dimension { expected: m, got: k0.len() }.into());
    }
    let size = law.n() as f64;
    let w = mutation.frozen_weight();
    let fwd = map_replicates(exec, replicates, |r| {
        let mut rng = rng::replicate(seed, &[0xd0_a1, 1], r);
        let k = simulate_frequency_at(law, mu, mutation, &k0, &[g], &mut rng).remove(0);
        sample.iter().zip(&k).map(|(&ni, &ki)| (ki as f64 / size).powi(ni as i32)).product::<f64>()
    });
    let bwd = map_replicates(exec, replicates, |r| {
        let mut rng = rng::replicate(seed, &[0xd0_a1, 2], r);
        let run = run_window_distributional(&sample, law, mu, mutation, g, &mut rng);
        let s = &run[g];
        w.powi(s.d as i32) * s.b.iter().zip(x).map(|(&b, xi)| xi.powi(b as i32)).product::<f64>()
    });
    Ok(MonteCarloDuality { g, forward: MeanEstimate::from_samples(&fwd), backward: MeanEstimate::from_samples(&bwd) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;

    #[test]
    fn two_draws_share_a_parent_with_probability_c() {
        let law = CanningsLaw::wright_fisher(4);
        let b = backward_matrix::<Rational>(&law, &SeedBankLaw::delta1(), &MutationRates::none(), 2).unwrap();
        assert_eq!(b.entry(&[2, 0], &[1, 0]), Rational::ratio(1, 4));
        assert_eq!(b.max_row_defect(), 0.0);
    }

    #[test]
    fn occupancy_law_matches_stirling_counts() {
        // 3 draws on 3 labels: 3 singles w.p. 6/27, one label w.p. 3/27
        let law = CanningsLaw::wright_fisher(3);
        let c = ancestor_count_law::<Rational>(&law, 3).unwrap();
        assert_eq!(c, vec![Rational::ratio(0, 1), Rational::ratio(3, 27), Rational::ratio(18, 27), Rational::ratio(6, 27)]);
    }

    #[test]
    fn wright_fisher_pair_forward() {
        let law = CanningsLaw::wright_fisher(2);
        let f = forward_matrix::<Rational>(&law, &SeedBankLaw::delta1(), &MutationRates::none()).unwrap();
        assert_eq!(f.entry(&[1], &[1]), Rational::ratio(1, 2));
    }

    #[test]
    fn time_zero_identity() {
        let law = CanningsLaw::wright_fisher(4);
        let mu = SeedBankLaw::uniform(2);
        let rows = moment_duality_check::<f64>(&law, &mu, &MutationRates::none(), &[2, 1], &[0.5, 0.25], 0).unwrap();
        assert_eq!(rows[0].lhs, 0.0625);
        assert_eq!(rows[0].rhs, 0.0625);
    }

    #[test]
    fn compositions_count() {
        assert_eq!(compositions(3, 2).len(), 4);
        assert_eq!(compositions(0, 3), vec![vec![0, 0, 0]]);
    }

    #[test]
    fn dirichlet_is_rejected() {
        let law = CanningsLaw::new(3, LawKind::SymmetricDirichlet { alpha: 1.0 }).unwrap();
        let e = backward_matrix::<f64>(&law, &SeedBankLaw::delta1(), &MutationRates::none(), 2).unwrap_err();
        assert_eq!(e.to_string(), "law not exactly enumerable");
    }
}
