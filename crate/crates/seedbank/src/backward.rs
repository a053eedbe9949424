//! Backward processes on the di-graph: the ancestral process `A`, the window
//! process `(B, D)` (graphical and distributional forms) and the particle
//! system `Y = (R, L)`.
//!
//! Generations are relative to an anchor `g0`; at step `g` the current level
//! is `g0 - g`, and coordinate `i` of a state refers to generation
//! `g0 - g - i + 1`.

use crate::graph::{DiGraphWindow, EdgeTarget, GraphError, Vertex};
use crate::model::{CanningsLaw, MutationRates, SeedBankLaw, Weights};
use crate::scalar::{binom, Scalar};
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackwardError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("invalid sample: {0}")]
    Sample(String),
    #[error("state outside exact table")]
    OutsideTable,
}

/// Sample sizes per generation offset: `counts[i-1]` individuals from
/// generation `anchor - i + 1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SampleConfig {
    pub counts: Vec<usize>,
    pub anchor: i64,
    /// Uniform sampling with repetition (default) or distinct individuals
    /// per generation.
    pub repetition: bool,
}

impl SampleConfig {
    pub fn new(counts: Vec<usize>) -> Self {
        SampleConfig { counts, anchor: 0, repetition: true }
    }

    pub fn without_repetition(mut self) -> Self {
        self.repetition = false;
        self
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn validate(&self, n: usize, m: usize) -> Result<(), BackwardError> {
        if self.total() == 0 {
            return Err(BackwardError::Sample("empty sample".into()));
        }
        if self.counts.len() > m {
            return Err(BackwardError::Sample(format!("{} generation offsets but m = {m}", self.counts.len())));
        }
        if !self.repetition && self.counts.iter().any(|&k| k > n) {
            return Err(BackwardError::Sample(format!("more than N = {n} distinct individuals requested")));
        }
        Ok(())
    }

    /// Draw the sample members (a multiset when sampling with repetition).
    pub fn draw<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Sample, BackwardError> {
        self.validate(n, self.counts.len())?;
        let mut members = Vec::with_capacity(self.total());
        for (i, &k) in self.counts.iter().enumerate() {
            let g = self.anchor - i as i64;
            if self.repetition {
                for _ in 0..k {
                    members.push(Vertex::new(g, rng.random_range(1..=n as u32)));
                }
            } else {
                for l in sample_indices(rng, n, k).into_iter() {
                    members.push(Vertex::new(g, l as u32 + 1));
                }
            }
        }
        Ok(Sample { anchor: self.anchor, members })
    }
}

/// Concrete sample members anchored at generation `anchor`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sample {
    pub anchor: i64,
    pub members: Vec<Vertex>,
}

impl Sample {
    pub fn explicit(anchor: i64, members: Vec<Vertex>) -> Self {
        Sample { anchor, members }
    }

    fn check(&self, m: usize) -> Result<(), BackwardError> {
        for v in &self.members {
            if v.generation > self.anchor || v.generation <= self.anchor - m as i64 {
                return Err(BackwardError::Sample(format!("{v} outside the initial window")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AncestralState {
    pub a: Vec<usize>,
    pub g: usize,
}

impl AncestralState {
    pub fn total(&self) -> usize {
        self.a.iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct WindowState {
    pub b: Vec<usize>,
    pub d: usize,
    pub g: usize,
}

impl WindowState {
    pub fn initial(counts: &[usize], m: usize) -> Self {
        let mut b = counts.to_vec();
        b.resize(m, 0);
        WindowState { b, d: 0, g: 0 }
    }

    pub fn total(&self) -> usize {
        self.b.iter().sum()
    }

    /// `|B| + D`.
    pub fn mass(&self) -> usize {
        self.total() + self.d
    }
}

fn slot(level: i64, gen: i64) -> usize {
    (level - gen) as usize
}

/// Ancestral process: at step `g`, the distinct first ancestors at
/// generations `<= g0 - g` of the sample members, counted per generation.
/// Duplicated sample members are one vertex; lineages that reach a sink drop
/// out.
pub fn run_ancestral(graph: &DiGraphWindow, sample: &Sample, steps: usize) -> Result<Vec<AncestralState>, BackwardError> {
    let m = graph.m();
    sample.check(m)?;
    let mut frontier: BTreeSet<Vertex> = sample.members.iter().copied().collect();
    let mut out = Vec::with_capacity(steps + 1);
    for g in 0..=steps {
        let level = sample.anchor - g as i64;
        let movers: Vec<Vertex> = frontier.iter().filter(|v| v.generation > level).copied().collect();
        for v in movers {
            frontier.remove(&v);
            if let EdgeTarget::Parent(p) = graph.edge(v)? {
                frontier.insert(p);
            }
        }
        let mut a = vec![0usize; m];
        for v in &frontier {
            a[slot(level, v.generation)] += 1;
        }
        out.push(AncestralState { a, g });
    }
    Ok(out)
}

/// Window process read off the genealogical tree of the sample.
///
/// `B^i_g` counts tree edges leaving a generation above `g0 - g` and arriving
/// at generation `g0 - g - i + 1`, plus the sample members (with multiplicity)
/// living there that the level has not yet passed. `D_g` counts tree vertices
/// strictly above the level whose edge goes to a sink.
pub fn run_window_graphical(graph: &DiGraphWindow, sample: &Sample, steps: usize) -> Result<Vec<WindowState>, BackwardError> {
    let m = graph.m();
    sample.check(m)?;
    let bottom = sample.anchor - steps as i64;
    let mut tree: BTreeMap<Vertex, Option<EdgeTarget>> = BTreeMap::new();
    let mut stack: Vec<Vertex> = sample.members.clone();
    while let Some(v) = stack.pop() {
        if tree.contains_key(&v) {
            continue;
        }
        if v.generation > bottom {
            let e = graph.edge(v)?;
            if let EdgeTarget::Parent(p) = e {
                stack.push(p);
            }
            tree.insert(v, Some(e));
        } else {
            tree.insert(v, None);
        }
    }
    let mut out = Vec::with_capacity(steps + 1);
    for g in 0..=steps {
        let level = sample.anchor - g as i64;
        let mut b = vec![0usize; m];
        let mut d = 0usize;
        for (u, e) in &tree {
            if u.generation <= level {
                continue;
            }
            match e.expect("edges are loaded above the bottom level") {
                EdgeTarget::Parent(p) if p.generation <= level => b[slot(level, p.generation)] += 1,
                EdgeTarget::Parent(_) => {}
                _ => d += 1,
            }
        }
        for s in &sample.members {
            if s.generation <= level {
                b[slot(level, s.generation)] += 1;
            }
        }
        out.push(WindowState { b, d, g });
    }
    Ok(out)
}

/// Number of distinct labels among `k` draws from `w`.
pub fn distinct_draws<R: Rng + ?Sized>(w: &Weights, k: usize, rng: &mut R) -> usize {
    if k <= 1 {
        return k;
    }
    let mut labels: Vec<usize> = (0..k).map(|_| w.sample_label(rng)).collect();
    labels.sort_unstable();
    labels.dedup();
    labels.len()
}

/// Draw `C(k)`: the number of parents of `k` individuals after one Cannings
/// step (no weight vector is drawn for `k <= 1`).
pub fn sample_ancestor_count<R: Rng + ?Sized>(law: &CanningsLaw, k: usize, rng: &mut R) -> usize {
    if k <= 1 {
        return k;
    }
    let w = law.sample_weights(rng);
    distinct_draws(&w, k, rng)
}

/// Multinomial allocation of `k` lineages over `{1..m}` by `mu`.
pub fn sample_multinomial<R: Rng + ?Sized>(mu: &SeedBankLaw, k: usize, rng: &mut R) -> Vec<usize> {
    let mut out = vec![0usize; mu.m()];
    for _ in 0..k {
        out[mu.sample_jump(rng) - 1] += 1;
    }
    out
}

/// One step of the distributional window process:
/// `B' = (B^2..B^m, 0) + M(C(B^1) - F)` and `D' = D + F`, where the `C(B^1)`
/// parents are each frozen independently with probability `u1 + u2`.
pub fn step_window_distributional<R: Rng + ?Sized>(
    state: &WindowState,
    law: &CanningsLaw,
    mu: &SeedBankLaw,
    mutation: &MutationRates,
    rng: &mut R,
) -> WindowState {
    let m = mu.m();
    let n1 = state.b.first().copied().unwrap_or(0);
    let mut b: Vec<usize> = state.b.iter().skip(1).copied().collect();
    b.resize(m, 0);
    let mut d = state.d;
    if n1 > 0 {
        let c = sample_ancestor_count(law, n1, rng);
        let p = mutation.freeze_prob();
        let f = if p > 0.0 {
            Binomial::new(c as u64, p.min(1.0)).expect("valid binomial").sample(rng) as usize
        } else {
            0
        };
        d += f;
        for (x, add) in b.iter_mut().zip(sample_multinomial(mu, c - f, rng)) {
            *x += add;
        }
    }
    WindowState { b, d, g: state.g + 1 }
}

/// Run the distributional window process from `B_0 = counts`, `D_0 = 0`.
pub fn run_window_distributional<R: Rng + ?Sized>(
    counts: &[usize],
    law: &CanningsLaw,
    mu: &SeedBankLaw,
    mutation: &MutationRates,
    steps: usize,
    rng: &mut R,
) -> Vec<WindowState> {
    let mut s = WindowState::initial(counts, mu.m());
    let mut out = Vec::with_capacity(steps + 1);
    out.push(s.clone());
    for _ in 0..steps {
        s = step_window_distributional(&s, law, mu, mutation, rng);
        out.push(s.clone());
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Sink {
    TypeA1,
    TypeA2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ParticleStatus {
    Active,
    /// Merged into the lower-indexed particle `into` at step `sigma`.
    Coalesced { sigma: usize, into: usize },
    /// First step `gamma` at which the particle sits in a sink.
    Frozen { gamma: usize, sink: Sink },
}

/// A lineage of the particle system: its ancestor lives `r - 1` generations
/// below the current level and carries label `label`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Particle {
    pub r: usize,
    pub label: u32,
    pub status: ParticleStatus,
}

impl Particle {
    pub fn sigma(&self) -> Option<usize> {
        match self.status {
            ParticleStatus::Coalesced { sigma, .. } => Some(sigma),
            _ => None,
        }
    }

    pub fn gamma(&self) -> Option<usize> {
        match self.status {
            ParticleStatus::Frozen { gamma, .. } => Some(gamma),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParticleRun {
    pub states: Vec<WindowState>,
    pub particles: Vec<Particle>,
}

fn merge_at_clock_one(ps: &mut [Particle], g: usize) {
    let mut first: HashMap<u32, usize> = HashMap::new();
    for j in 0..ps.len() {
        if ps[j].status != ParticleStatus::Active || ps[j].r != 1 {
            continue;
        }
        match first.get(&ps[j].label) {
            Some(&k) => ps[j].status = ParticleStatus::Coalesced { sigma: g, into: k },
            None => {
                first.insert(ps[j].label, j);
            }
        }
    }
}

fn window_counts(ps: &[Particle], g: usize, m: usize) -> WindowState {
    let mut b = vec![0usize; m];
    let mut d = 0;
    for p in ps {
        match p.status {
            ParticleStatus::Active => b[p.r - 1] += 1,
            ParticleStatus::Coalesced { sigma, .. } if sigma == g => b[p.r - 1] += 1,
            ParticleStatus::Frozen { .. } => d += 1,
            _ => {}
        }
    }
    WindowState { b, d, g }
}

/// Particle system coupled to the window process.
///
/// Particle `j` starts with clock `R = i` for a sample member at offset `i`
/// and its label. While `R > 1` the clock decrements and the label is kept;
/// at `R = 1` the particle freezes with probability `u1 + u2`, otherwise it
/// jumps to `R = J ~ mu` and draws a label from the weights of the target
/// generation (one weight vector per generation, shared by all particles).
/// Active particles at `R = 1` with equal labels sit on the same vertex and
/// the higher indices coalesce into the lowest.
pub fn run_particles<R: Rng + ?Sized>(
    sample: &SampleConfig,
    law: &CanningsLaw,
    mu: &SeedBankLaw,
    mutation: &MutationRates,
    steps: usize,
    rng: &mut R,
) -> Result<ParticleRun, BackwardError> {
    let n = law.n();
    let m = mu.m();
    sample.validate(n, m)?;
    let drawn = sample.draw(n, rng)?;
    let mut ps: Vec<Particle> = drawn
        .members
        .iter()
        .map(|v| Particle { r: (sample.anchor - v.generation) as usize + 1, label: v.label, status: ParticleStatus::Active })
        .collect();
    let wf = law.is_wright_fisher();
    let mut weights: BTreeMap<i64, Weights> = BTreeMap::new();
    let (u1, u2) = (mutation.u1, mutation.u2);
    merge_at_clock_one(&mut ps, 0);
    let mut states = Vec::with_capacity(steps + 1);
    states.push(window_counts(&ps, 0, m));
    for g in 0..steps {
        let level = sample.anchor - g as i64;
        for p in ps.iter_mut() {
            if p.status != ParticleStatus::Active {
                continue;
            }
            if p.r > 1 {
                p.r -= 1;
                continue;
            }
            if u1 + u2 > 0.0 {
                let k: f64 = rng.random();
                if k < u1 + u2 {
                    let sink = if k < u1 { Sink::TypeA1 } else { Sink::TypeA2 };
                    p.status = ParticleStatus::Frozen { gamma: g + 1, sink };
                    continue;
                }
            }
            let j = mu.sample_jump(rng);
            let label = if wf {
                rng.random_range(0..n)
            } else {
                let h = level - j as i64;
                weights.entry(h).or_insert_with(|| law.sample_weights(rng)).sample_label(rng)
            };
            p.r = j;
            p.label = label as u32 + 1;
        }
        // generations at or above the new level receive no further draws
        weights.retain(|&h, _| h < level - 1);
        merge_at_clock_one(&mut ps, g + 1);
        states.push(window_counts(&ps, g + 1, m));
    }
    Ok(ParticleRun { states, particles: ps })
}

/// One-step law of the ancestral process from a small state.
#[derive(Clone, Debug, PartialEq)]
pub struct OneStepLaw<S> {
    /// Law of the shifted, unmerged state `Z(n) = (n_2..n_m, 0) + M(n_1)`.
    pub z: BTreeMap<Vec<usize>, S>,
    /// Exact law of `A_1`.
    pub exact: BTreeMap<Vec<usize>, S>,
    /// First-order form: from `Z`, slot `i` loses one lineage with
    /// probability `c [C(M_i, 2) + M_i n_{i+1}]`.
    pub first_order: BTreeMap<Vec<usize>, S>,
}

/// Law of the number of distinct ancestors when `k` movers land in a
/// generation holding `e` distinct ancestors already (`e + k <= 3`).
///
/// Labels of individuals reached through edges are draws from that
/// generation's weights, so a pair coincides with probability `c` and a
/// triple with probability `d`; for the `e = 2` case the two existing
/// ancestors are conditioned to be distinct.
fn group_law<S: Scalar>(e: usize, k: usize, c: &S, d: &S) -> Result<Vec<(usize, S)>, BackwardError> {
    let one = S::one();
    let three = S::from_int(3);
    let two = S::from_int(2);
    let t = match (e, k) {
        (_, 0) => vec![(e, one)],
        (0, 1) => vec![(1, one)],
        (0, 2) | (1, 1) => vec![(1, c.clone()), (2, one - c.clone())],
        (0, 3) | (1, 2) => vec![
            (1, d.clone()),
            (2, three.clone() * (c.clone() - d.clone())),
            (3, one - three * c.clone() + two * d.clone()),
        ],
        (2, 1) => {
            let hit = if (one.clone() - c.clone()).is_zero() {
                S::zero()
            } else {
                two * (c.clone() - d.clone()) / (one.clone() - c.clone())
            };
            vec![(2, hit.clone()), (3, one - hit)]
        }
        _ => return Err(BackwardError::OutsideTable),
    };
    Ok(t)
}

fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for mut rest in compositions(total - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

fn multinomial_prob<S: Scalar>(a: &[usize], mu: &[S]) -> S {
    let mut p = S::one();
    let mut left = a.iter().sum::<usize>();
    for (k, q) in a.iter().zip(mu) {
        p = p * binom::<S>(left, *k) * q.ipow(*k as u32);
        left -= k;
    }
    p
}

fn add_to<S: Scalar>(m: &mut BTreeMap<Vec<usize>, S>, k: Vec<usize>, p: S) {
    if p.is_zero() {
        return;
    }
    let e = m.entry(k).or_insert_with(S::zero);
    *e = e.clone() + p;
}

/// Exact and first-order one-step laws of `A` from `n` with `|n| <= 3`.
pub fn transition_law_one_step<S: Scalar>(n: &[usize], mu: &SeedBankLaw, c: S, d: S) -> Result<OneStepLaw<S>, BackwardError> {
    let m = mu.m();
    if n.iter().sum::<usize>() > 3 || n.len() > m {
        return Err(BackwardError::OutsideTable);
    }
    let mut nn = n.to_vec();
    nn.resize(m, 0);
    let muv: Vec<S> = mu.probs().iter().map(|&x| S::from_f64(x)).collect();
    let mut law = OneStepLaw { z: BTreeMap::new(), exact: BTreeMap::new(), first_order: BTreeMap::new() };
    for a in compositions(nn[0], m) {
        let pa = multinomial_prob(&a, &muv);
        if pa.is_zero() {
            continue;
        }
        let existing: Vec<usize> = (0..m).map(|j| if j + 1 < m { nn[j + 1] } else { 0 }).collect();
        let z: Vec<usize> = (0..m).map(|j| existing[j] + a[j]).collect();
        add_to(&mut law.z, z.clone(), pa.clone());

        let mut partial: Vec<(Vec<usize>, S)> = vec![(Vec::new(), pa.clone())];
        for j in 0..m {
            let g = group_law(existing[j], a[j], &c, &d)?;
            let mut next = Vec::new();
            for (prefix, p) in &partial {
                for (k, q) in &g {
                    let mut v = prefix.clone();
                    v.push(*k);
                    next.push((v, p.clone() * q.clone()));
                }
            }
            partial = next;
        }
        for (v, p) in partial {
            add_to(&mut law.exact, v, p);
        }

        let mut stay = pa.clone();
        for j in 0..m {
            let q = c.clone() * (binom::<S>(a[j], 2) + S::from_int((a[j] * existing[j]) as i64));
            if q.is_zero() {
                continue;
            }
            let mut w = z.clone();
            w[j] -= 1;
            add_to(&mut law.first_order, w, pa.clone() * q.clone());
            stay = stay - pa.clone() * q;
        }
        add_to(&mut law.first_order, z, stay);
    }
    Ok(law)
}

/// Bound on the per-state difference between the exact law and the
/// first-order form for a state with `n` lineages: triple coincidences
/// (order `d`) plus two simultaneous pair coincidences (order `c^2`).
pub fn first_order_remainder_bound(n: usize, c: f64, d: f64) -> f64 {
    let pairs = binom::<f64>(n, 2);
    (3.0 * binom::<f64>(n, 3) * d + pairs * (pairs - 1.0) / 2.0 * c * c) / (1.0 - c).max(f64::MIN_POSITIVE)
}

/// One row of the closed-form table for the state `2e_1 + e_i`, as printed:
/// target `e_{i-1} + e_j + e_k` (with `e_0 = 0`) and its probability.
#[derive(Clone, Debug, PartialEq)]
pub struct TableRow<S> {
    pub row: usize,
    pub j: usize,
    pub k: usize,
    pub target: Vec<usize>,
    pub prob: S,
}

/// The six-case closed-form table for `2e_1 + e_i`, `i >= 2`, evaluated
/// literally for every admissible `(j, k)` (unordered, `e_0` the null
/// vector).
pub fn coupling_table_2e1_ei<S: Scalar>(i: usize, mu: &SeedBankLaw, c: S, d: S) -> Vec<TableRow<S>> {
    let m = mu.m();
    assert!(i >= 2 && i <= m, "state 2e_1 + e_i needs 2 <= i <= m");
    let q = |j: usize| S::from_f64(mu.prob(j));
    let one = S::one();
    let two = S::from_int(2);
    let h = i - 1;
    let target = |j: usize, k: usize| {
        let mut v = vec![0usize; m];
        for x in [h, j, k] {
            if x > 0 {
                v[x - 1] += 1;
            }
        }
        v
    };
    let mut rows = Vec::new();
    for j in 0..=m {
        for k in 0..=j {
            let (row, p) = if j != h && k != h && j != k && k > 0 {
                (1, two.clone() * q(j) * q(k))
            } else if j == k && j != h && j > 0 {
                (2, q(j) * q(j) * (one.clone() - c.clone()))
            } else if (j == h) != (k == h) && j > 0 && k > 0 {
                let other = if j == h { k } else { j };
                (3, two.clone() * q(h) * q(other) * (one.clone() - c.clone()))
            } else if k == 0 && j != h && j > 0 {
                (4, (two.clone() * q(h) * q(j) + q(j) * q(j)) * c.clone())
            } else if k == 0 && j == h {
                (5, q(h) * q(h) * (c.clone() - d.clone()))
            } else if j == 0 && k == 0 {
                (6, q(h) * q(h) * d.clone())
            } else {
                continue;
            };
            rows.push(TableRow { row, j, k, target: target(j, k), prob: p });
        }
    }
    rows
}
