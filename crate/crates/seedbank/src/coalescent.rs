//! Limit block-counting processes.
//!
//! A [`CoalescentLaw`] is a Kingman, Λ or finite-Ξ coalescent together with a
//! seed bank delay `beta >= 1` and a freezing rate `u`. The delayed process
//! is simulated by thinning: every merger event of the base law is drawn from
//! its paintbox and each candidate block takes part only with probability
//! `1/beta`. [`seed_bank_transform`] gives the same process as a pushforward
//! of the base measure, which is used for rate cross-checks. Λ laws with a
//! density have infinitely many small events, so they are simulated from the
//! rate table of the transformed measure instead.

use crate::scalar::binom_f64;
use quadrature::double_exponential;
use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

/// Absolute accuracy requested from the quadrature.
pub const QUADRATURE_TOL: f64 = 1e-10;
/// Total-variation accuracy of [`dual_moment`].
pub const ODE_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoalescentError {
    #[error("quadrature failed to converge")]
    Quadrature,
    #[error("ODE tolerance not met")]
    OdeTolerance,
    #[error("invalid coalescent law: {0}")]
    Invalid(String),
}

/// Finite measure `Lambda` on `(0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LambdaMeasure {
    /// Beta(a, b) probability density.
    Beta { a: f64, b: f64 },
    /// Lebesgue measure on `(0, 1)` (Bolthausen-Sznitman).
    Uniform01,
    /// `mass` times the unit mass at `psi`.
    PointMass {
        psi: f64,
        #[serde(default = "one")]
        mass: f64,
    },
    /// Piecewise linear density through the points `(xs[i], ys[i])`.
    Density { xs: Vec<f64>, ys: Vec<f64> },
    /// `Lambda'(A) = Lambda(beta A) / beta^2`, the image of `base` under
    /// `x -> x / beta` scaled by `1 / beta^2`.
    Scaled { base: Box<LambdaMeasure>, beta: f64 },
}

fn one() -> f64 {
    1.0
}

/// One atom of a finite Ξ measure: `weight` at the mass partition `boxes`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct XiAtom {
    pub weight: f64,
    pub boxes: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseLaw {
    /// Every pair merges at `rate`.
    Kingman {
        #[serde(default = "one")]
        rate: f64,
    },
    Lambda { measure: LambdaMeasure },
    FiniteXi { atoms: Vec<XiAtom> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoalescentLaw {
    pub base: BaseLaw,
    #[serde(default = "one")]
    pub beta: f64,
    #[serde(default)]
    pub freeze_rate: f64,
}

impl LambdaMeasure {
    pub fn validate(&self) -> Result<(), CoalescentError> {
        let bad = |m: &str| Err(CoalescentError::Invalid(m.to_string()));
        match self {
            LambdaMeasure::Beta { a, b } => {
                if !(a.is_finite() && b.is_finite() && *a > 0.0 && *b > 0.0) {
                    return bad("beta parameters must be positive");
                }
            }
            LambdaMeasure::Uniform01 => {}
            LambdaMeasure::PointMass { psi, mass } => {
                if !(*psi > 0.0 && *psi <= 1.0) {
                    return bad("point mass location must lie in (0, 1]");
                }
                if !(mass.is_finite() && *mass >= 0.0) {
                    return bad("point mass must be finite and nonnegative");
                }
            }
            LambdaMeasure::Density { xs, ys } => {
                if xs.len() < 2 || xs.len() != ys.len() {
                    return bad("density table needs at least two points and matching lengths");
                }
                if xs[0] < 0.0 || *xs.last().unwrap() > 1.0 || xs.windows(2).any(|w| w[1] <= w[0]) {
                    return bad("density abscissae must increase within [0, 1]");
                }
                if ys.iter().any(|y| !(y.is_finite() && *y >= 0.0)) {
                    return bad("density values must be finite and nonnegative");
                }
            }
            LambdaMeasure::Scaled { base, beta } => {
                if !(beta.is_finite() && *beta >= 1.0) {
                    return bad("beta must be at least 1");
                }
                base.validate()?;
            }
        }
        Ok(())
    }

    /// Density at `x` for absolutely continuous measures.
    pub fn density(&self, x: f64) -> Option<f64> {
        match self {
            LambdaMeasure::Beta { a, b } => {
                if x <= 0.0 || x >= 1.0 {
                    return Some(0.0);
                }
                Some(((a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() - ln_beta(*a, *b)).exp())
            }
            LambdaMeasure::Uniform01 => Some(if (0.0..=1.0).contains(&x) { 1.0 } else { 0.0 }),
            LambdaMeasure::PointMass { .. } => None,
            LambdaMeasure::Density { xs, ys } => {
                if x < xs[0] || x > *xs.last().unwrap() {
                    return Some(0.0);
                }
                let i = xs.partition_point(|&p| p <= x).clamp(1, xs.len() - 1);
                let (x0, x1, y0, y1) = (xs[i - 1], xs[i], ys[i - 1], ys[i]);
                Some(y0 + (y1 - y0) * (x - x0) / (x1 - x0))
            }
            LambdaMeasure::Scaled { base, beta } => base.density(beta * x).map(|f| f / beta),
        }
    }

    /// `Lambda'` for delay `beta`; point masses stay point masses.
    pub fn transformed(&self, beta: f64) -> LambdaMeasure {
        if beta == 1.0 {
            return self.clone();
        }
        match self {
            LambdaMeasure::PointMass { psi, mass } => LambdaMeasure::PointMass { psi: psi / beta, mass: mass / (beta * beta) },
            LambdaMeasure::Scaled { base, beta: b0 } => LambdaMeasure::Scaled { base: base.clone(), beta: b0 * beta },
            other => LambdaMeasure::Scaled { base: Box::new(other.clone()), beta },
        }
    }
}

impl CoalescentLaw {
    pub fn kingman() -> Self {
        CoalescentLaw { base: BaseLaw::Kingman { rate: 1.0 }, beta: 1.0, freeze_rate: 0.0 }
    }

    pub fn lambda(measure: LambdaMeasure) -> Self {
        CoalescentLaw { base: BaseLaw::Lambda { measure }, beta: 1.0, freeze_rate: 0.0 }
    }

    pub fn finite_xi(atoms: Vec<XiAtom>) -> Self {
        CoalescentLaw { base: BaseLaw::FiniteXi { atoms }, beta: 1.0, freeze_rate: 0.0 }
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_freezing(mut self, u: f64) -> Self {
        self.freeze_rate = u;
        self
    }

    pub fn validate(&self) -> Result<(), CoalescentError> {
        if !(self.beta.is_finite() && self.beta >= 1.0) {
            return Err(CoalescentError::Invalid("beta must be at least 1".into()));
        }
        if !(self.freeze_rate.is_finite() && self.freeze_rate >= 0.0) {
            return Err(CoalescentError::Invalid("freezing rate must be nonnegative".into()));
        }
        match &self.base {
            BaseLaw::Kingman { rate } => {
                if !(rate.is_finite() && *rate >= 0.0) {
                    return Err(CoalescentError::Invalid("Kingman rate must be nonnegative".into()));
                }
            }
            BaseLaw::Lambda { measure } => measure.validate()?,
            BaseLaw::FiniteXi { atoms } => {
                for a in atoms {
                    if !(a.weight.is_finite() && a.weight >= 0.0) {
                        return Err(CoalescentError::Invalid("atom weights must be nonnegative".into()));
                    }
                    if a.boxes.iter().any(|s| !(s.is_finite() && *s >= 0.0)) || a.boxes.iter().sum::<f64>() > 1.0 + 1e-12 {
                        return Err(CoalescentError::Invalid("box vectors must be nonnegative with sum at most 1".into()));
                    }
                    if a.boxes.len() > 20 {
                        return Err(CoalescentError::Invalid("at most 20 boxes per atom".into()));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Pushforward form of the delayed law: the returned law has `beta = 1` and
/// the same block-counting dynamics as `law` run with delay `beta`.
pub fn seed_bank_transform(law: &CoalescentLaw, beta: f64) -> Result<CoalescentLaw, CoalescentError> {
    if !(beta.is_finite() && beta >= 1.0) {
        return Err(CoalescentError::Invalid("beta must be at least 1".into()));
    }
    let b = beta * law.beta;
    let base = match &law.base {
        BaseLaw::Kingman { rate } => BaseLaw::Kingman { rate: rate / (b * b) },
        BaseLaw::Lambda { measure } => BaseLaw::Lambda { measure: measure.transformed(b) },
        BaseLaw::FiniteXi { atoms } => BaseLaw::FiniteXi {
            atoms: atoms
                .iter()
                .map(|a| XiAtom { weight: a.weight / (b * b), boxes: a.boxes.iter().map(|s| s / b).collect() })
                .collect(),
        },
    };
    Ok(CoalescentLaw { base, beta: 1.0, freeze_rate: law.freeze_rate })
}

/// `lambda_{b,k}` for `2 <= k <= b <= n`.
#[derive(Clone, Debug, PartialEq)]
pub struct RateTable {
    n: usize,
    rates: Vec<Vec<f64>>,
}

impl RateTable {
    pub fn kingman(n: usize, rate: f64) -> Self {
        let mut rates = vec![vec![0.0; n + 1]; n + 1];
        for row in rates.iter_mut().skip(2) {
            row[2] = rate;
        }
        RateTable { n, rates }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, b: usize, k: usize) -> f64 {
        if k < 2 || k > b || b > self.n {
            0.0
        } else {
            self.rates[b][k]
        }
    }

    /// Rate at which some `k` of `b` blocks merge: `C(b, k) lambda_{b,k}`.
    pub fn merge_rate(&self, b: usize, k: usize) -> f64 {
        binom_f64(b, k) * self.get(b, k)
    }

    pub fn total(&self, b: usize) -> f64 {
        (2..=b).map(|k| self.merge_rate(b, k)).sum()
    }
}

fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64) -> Result<f64, CoalescentError> {
    if b <= a {
        return Ok(0.0);
    }
    let out = double_exponential::integrate(f, a, b, QUADRATURE_TOL * 1e-2);
    if !out.integral.is_finite() || out.error_estimate > QUADRATURE_TOL * out.integral.abs().max(1.0) {
        return Err(CoalescentError::Quadrature);
    }
    Ok(out.integral)
}

/// `E[X^i (1 - X/beta)^j]` for `X ~ Beta(a, b0)`, expanding
/// `1 - x/beta = (1 - x) + x (1 - 1/beta)` so that every term is a positive
/// Beta moment.
fn scaled_beta_moment(a: f64, b0: f64, i: usize, j: usize, beta: f64) -> f64 {
    let lb = ln_beta(a, b0);
    let q = 1.0 - 1.0 / beta;
    (0..=j)
        .map(|l| {
            if l > 0 && q == 0.0 {
                return 0.0;
            }
            let ln_c = ln_gamma(j as f64 + 1.0) - ln_gamma(l as f64 + 1.0) - ln_gamma((j - l) as f64 + 1.0);
            let ln_q = if l == 0 { 0.0 } else { l as f64 * q.ln() };
            (ln_c + ln_q + ln_beta(a + (i + l) as f64, b0 + (j - l) as f64) - lb).exp()
        })
        .sum()
}

/// `int x^{k-2} (1 - x)^{b-k} Lambda(dx)`.
fn lambda_integral(measure: &LambdaMeasure, b: usize, k: usize) -> Result<f64, CoalescentError> {
    let (i, j) = ((k - 2) as i32, (b - k) as i32);
    match measure {
        LambdaMeasure::Beta { a, b: b0 } => Ok((ln_beta(k as f64 - 2.0 + a, (b - k) as f64 + b0) - ln_beta(*a, *b0)).exp()),
        LambdaMeasure::Uniform01 => Ok((ln_beta(k as f64 - 1.0, (b - k) as f64 + 1.0)).exp()),
        LambdaMeasure::PointMass { psi, mass } => Ok(mass * psi.powi(i) * (1.0 - psi).powi(j)),
        LambdaMeasure::Density { xs, .. } => {
            let mut total = 0.0;
            for w in xs.windows(2) {
                total += integrate(|x| x.powi(i) * (1.0 - x).powi(j) * measure.density(x).unwrap_or(0.0), w[0], w[1])?;
            }
            Ok(total)
        }
        LambdaMeasure::Scaled { base, beta } => {
            // substitute y = x / beta: beta^{-k} int x^{k-2} (1 - x/beta)^{b-k} Lambda(dx)
            let scale = beta.powi(-(k as i32));
            let g = |x: f64| x.powi(i) * (1.0 - x / beta).powi(j);
            let inner = match base.as_ref() {
                LambdaMeasure::PointMass { psi, mass } => mass * g(*psi),
                LambdaMeasure::Beta { a, b: b0 } => scaled_beta_moment(*a, *b0, i as usize, j as usize, *beta),
                LambdaMeasure::Uniform01 => scaled_beta_moment(1.0, 1.0, i as usize, j as usize, *beta),
                LambdaMeasure::Density { xs, .. } => {
                    let mut total = 0.0;
                    for w in xs.windows(2) {
                        total += integrate(|x| g(x) * base.density(x).unwrap_or(0.0), w[0], w[1])?;
                    }
                    total
                }
                LambdaMeasure::Scaled { base: inner, beta: b2 } => {
                    let flat = LambdaMeasure::Scaled { base: inner.clone(), beta: beta * b2 };
                    return lambda_integral(&flat, b, k);
                }
            };
            Ok(scale * inner)
        }
    }
}

/// Collision rates of a Λ-coalescent for up to `n` blocks.
pub fn lambda_collision_rates(n: usize, measure: &LambdaMeasure) -> Result<RateTable, CoalescentError> {
    measure.validate()?;
    let mut rates = vec![vec![0.0; n + 1]; n + 1];
    for b in 2..=n {
        for k in 2..=b {
            rates[b][k] = lambda_integral(measure, b, k)?;
        }
    }
    Ok(RateTable { n, rates })
}

/// Law of the block count after one event of a finite-Ξ atom on `b` blocks
/// (each block picks box `i` with probability `s_i`); entry `j` is the
/// probability of `j` blocks.
fn xi_event_law(boxes: &[f64], b: usize) -> Vec<f64> {
    let r = boxes.len();
    let rest = (1.0 - boxes.iter().sum::<f64>()).max(0.0);
    // state: (occupied-box mask, blocks outside every box)
    let mut dp = vec![vec![0.0; b + 1]; 1 << r];
    dp[0][0] = 1.0;
    for _ in 0..b {
        let mut next = vec![vec![0.0; b + 1]; 1 << r];
        for mask in 0..(1usize << r) {
            for free in 0..=b {
                let p = dp[mask][free];
                if p == 0.0 {
                    continue;
                }
                if rest > 0.0 && free < b {
                    next[mask][free + 1] += p * rest;
                }
                for (i, s) in boxes.iter().enumerate() {
                    if *s > 0.0 {
                        next[mask | (1 << i)][free] += p * s;
                    }
                }
            }
        }
        dp = next;
    }
    let mut out = vec![0.0; b + 1];
    for (mask, row) in dp.iter().enumerate() {
        let occupied = mask.count_ones() as usize;
        for (free, p) in row.iter().enumerate() {
            if *p > 0.0 {
                out[occupied + free] += p;
            }
        }
    }
    out
}

fn xi_event_rate(atom: &XiAtom) -> f64 {
    let s2: f64 = atom.boxes.iter().map(|s| s * s).sum();
    if s2 > 0.0 { atom.weight / s2 } else { 0.0 }
}

/// Simulation engine prepared for one law and a maximal block count.
#[derive(Clone, Debug)]
pub struct BlockCountingSimulator {
    law: CoalescentLaw,
    n: usize,
    table: Option<RateTable>,
    /// merge[b][j]: rate of a jump from `b` to `j < b` blocks
    merge: Vec<Vec<f64>>,
}

/// Path of the block counting process: `(time, M, D)` at time zero and after
/// every jump.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlockCountingPath {
    pub points: Vec<PathPoint>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PathPoint {
    pub time: f64,
    pub m: usize,
    pub d: usize,
}

impl BlockCountingPath {
    /// `(M_t, D_t)`.
    pub fn state_at(&self, t: f64) -> (usize, usize) {
        let i = self.points.partition_point(|p| p.time <= t);
        let p = self.points[i.max(1) - 1];
        (p.m, p.d)
    }

    /// Time of the first jump, if any.
    pub fn first_jump(&self) -> Option<f64> {
        self.points.get(1).map(|p| p.time)
    }

    /// Blocks lost in mergers (freezes excluded).
    pub fn merged_blocks(&self) -> usize {
        self.points
            .windows(2)
            .map(|w| if w[1].d > w[0].d { 0 } else { w[0].m - w[1].m })
            .sum()
    }
}

/// Branch lengths `L_1..L_{n-1}` of one coalescent tree.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SfsVector {
    pub n: usize,
    pub lengths: Vec<f64>,
    pub height: f64,
}

enum Event {
    /// groups of block indices to merge
    Merge(Vec<Vec<usize>>),
    Freeze(usize),
    Nothing,
}

impl BlockCountingSimulator {
    pub fn new(law: &CoalescentLaw, n: usize) -> Result<Self, CoalescentError> {
        law.validate()?;
        let table = match &law.base {
            BaseLaw::Kingman { rate } => Some(RateTable::kingman(n, rate / (law.beta * law.beta))),
            BaseLaw::Lambda { measure } => Some(lambda_collision_rates(n, &measure.transformed(law.beta))?),
            BaseLaw::FiniteXi { .. } => None,
        };
        let mut merge = vec![vec![0.0; n + 1]; n + 1];
        for b in 2..=n {
            match (&table, &law.base) {
                (Some(t), _) => {
                    for k in 2..=b {
                        merge[b][b - k + 1] += t.merge_rate(b, k);
                    }
                }
                (None, BaseLaw::FiniteXi { atoms }) => {
                    for atom in atoms {
                        let rate = xi_event_rate(atom);
                        if rate == 0.0 {
                            continue;
                        }
                        let boxes: Vec<f64> = atom.boxes.iter().map(|s| s / law.beta).collect();
                        for (j, p) in xi_event_law(&boxes, b).into_iter().enumerate().take(b) {
                            merge[b][j] += rate * p;
                        }
                    }
                }
                _ => unreachable!(),
            }
        }
        Ok(BlockCountingSimulator { law: law.clone(), n, table, merge })
    }

    pub fn law(&self) -> &CoalescentLaw {
        &self.law
    }

    /// Rate table of the transformed measure (Kingman and Λ laws).
    pub fn rate_table(&self) -> Option<&RateTable> {
        self.table.as_ref()
    }

    /// Rates of jumps from `b` blocks to each `j < b` blocks by merging.
    pub fn merge_rates(&self, b: usize) -> &[f64] {
        &self.merge[b][..b]
    }

    fn sample_event<R: Rng + ?Sized>(&self, blocks: usize, rng: &mut R) -> Option<(f64, Event)> {
        let u = self.law.freeze_rate;
        let beta = self.law.beta;
        let freeze = u * blocks as f64;
        let merge_rate = match &self.law.base {
            BaseLaw::Kingman { rate } => rate * binom_f64(blocks, 2),
            BaseLaw::Lambda { measure: LambdaMeasure::PointMass { psi, mass } } => {
                if blocks >= 2 { mass / (psi * psi) } else { 0.0 }
            }
            BaseLaw::Lambda { .. } => self.table.as_ref().map_or(0.0, |t| t.total(blocks)),
            BaseLaw::FiniteXi { atoms } => {
                if blocks >= 2 { atoms.iter().map(xi_event_rate).sum() } else { 0.0 }
            }
        };
        let total = freeze + merge_rate;
        if total <= 0.0 {
            return None;
        }
        let dt = Exp::new(total).expect("positive rate").sample(rng);
        if rng.random::<f64>() * total < freeze {
            return Some((dt, Event::Freeze(rng.random_range(0..blocks))));
        }
        let thin = |rng: &mut R| beta == 1.0 || rng.random::<f64>() < 1.0 / beta;
        let event = match &self.law.base {
            BaseLaw::Kingman { .. } => {
                let i = rng.random_range(0..blocks);
                let mut j = rng.random_range(0..blocks - 1);
                if j >= i {
                    j += 1;
                }
                if thin(rng) && thin(rng) { Event::Merge(vec![vec![i, j]]) } else { Event::Nothing }
            }
            BaseLaw::Lambda { measure: LambdaMeasure::PointMass { psi, .. } } => {
                let group: Vec<usize> = (0..blocks).filter(|_| rng.random::<f64>() < *psi && thin(rng)).collect();
                Event::Merge(vec![group])
            }
            BaseLaw::Lambda { .. } => {
                let t = self.table.as_ref().expect("table prepared");
                let mut x = rng.random::<f64>() * merge_rate;
                let mut k = blocks;
                for kk in 2..=blocks {
                    x -= t.merge_rate(blocks, kk);
                    if x < 0.0 {
                        k = kk;
                        break;
                    }
                }
                let group = rand::seq::index::sample(rng, blocks, k).into_vec();
                Event::Merge(vec![group])
            }
            BaseLaw::FiniteXi { atoms } => {
                let mut x = rng.random::<f64>() * merge_rate;
                let mut atom = &atoms[atoms.len() - 1];
                for a in atoms {
                    x -= xi_event_rate(a);
                    if x < 0.0 {
                        atom = a;
                        break;
                    }
                }
                let mut groups = vec![Vec::new(); atom.boxes.len()];
                for blk in 0..blocks {
                    let mut y = rng.random::<f64>();
                    let mut chosen = None;
                    for (i, s) in atom.boxes.iter().enumerate() {
                        if y < *s {
                            chosen = Some(i);
                            break;
                        }
                        y -= s;
                    }
                    if let Some(i) = chosen {
                        if thin(rng) {
                            groups[i].push(blk);
                        }
                    }
                }
                Event::Merge(groups)
            }
        };
        Some((dt, event))
    }

    /// Run from `n` blocks; stops at `M = 0` when freezing is on and at
    /// `M = 1` otherwise. Only jumps that change the state are recorded.
    pub fn simulate<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> BlockCountingPath {
        self.run(n, rng, |_, _| {}).0
    }

    /// Path together with the leaf counts of the blocks, which are passed to
    /// `visit(block_leaf_counts, holding_time)` before every jump.
    fn run<R: Rng + ?Sized>(
        &self,
        n: usize,
        rng: &mut R,
        mut visit: impl FnMut(&[usize], f64),
    ) -> (BlockCountingPath, f64) {
        assert!(n <= self.n, "simulator prepared for at most {} blocks", self.n);
        let stop = if self.law.freeze_rate > 0.0 { 0 } else { 1 };
        let mut blocks = vec![1usize; n];
        let mut t = 0.0;
        let mut d = 0;
        let mut points = vec![PathPoint { time: 0.0, m: n, d: 0 }];
        let mut pending = 0.0;
        while blocks.len() > stop {
            let Some((dt, event)) = self.sample_event(blocks.len(), rng) else { break };
            t += dt;
            pending += dt;
            let changed = match event {
                Event::Nothing => false,
                Event::Freeze(i) => {
                    visit(&blocks, pending);
                    blocks.swap_remove(i);
                    d += 1;
                    true
                }
                Event::Merge(groups) => {
                    if groups.iter().all(|g| g.len() < 2) {
                        false
                    } else {
                        visit(&blocks, pending);
                        let mut remove = Vec::new();
                        for g in groups.iter().filter(|g| g.len() >= 2) {
                            let merged: usize = g.iter().map(|&i| blocks[i]).sum();
                            blocks[g[0]] = merged;
                            remove.extend_from_slice(&g[1..]);
                        }
                        remove.sort_unstable_by(|a, b| b.cmp(a));
                        for i in remove {
                            blocks.swap_remove(i);
                        }
                        true
                    }
                }
            };
            if changed {
                pending = 0.0;
                points.push(PathPoint { time: t, m: blocks.len(), d });
            }
        }
        (BlockCountingPath { points }, t)
    }

    /// Site frequency spectrum branch lengths of one tree (`u = 0`).
    pub fn simulate_sfs<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<(SfsVector, BlockCountingPath), CoalescentError> {
        if self.law.freeze_rate > 0.0 {
            return Err(CoalescentError::Invalid("the SFS is defined without freezing".into()));
        }
        if n < 2 {
            return Err(CoalescentError::Invalid("the SFS needs at least two leaves".into()));
        }
        let mut lengths = vec![0.0; n - 1];
        let (path, height) = self.run(n, rng, |blocks, dt| {
            for &b in blocks {
                lengths[b - 1] += dt;
            }
        });
        Ok((SfsVector { n, lengths, height }, path))
    }
}

/// One path of the block counting process started from `n` blocks.
pub fn simulate_block_counting<R: Rng + ?Sized>(law: &CoalescentLaw, n: usize, rng: &mut R) -> Result<BlockCountingPath, CoalescentError> {
    Ok(BlockCountingSimulator::new(law, n)?.simulate(n, rng))
}

/// One tree's branch lengths by number of leaves subtended.
pub fn simulate_sfs<R: Rng + ?Sized>(law: &CoalescentLaw, n: usize, rng: &mut R) -> Result<SfsVector, CoalescentError> {
    Ok(BlockCountingSimulator::new(law, n)?.simulate_sfs(n, rng)?.0)
}

/// `E_n[x0^{M_t}]`.
pub fn dual_moment(law: &CoalescentLaw, n: usize, x0: f64, t: f64) -> Result<f64, CoalescentError> {
    dual_moment_weighted(law, n, x0, 1.0, t)
}

/// `E_n[w^{D_t} x0^{M_t}]`.
pub fn dual_moment_weighted(law: &CoalescentLaw, n: usize, x0: f64, w: f64, t: f64) -> Result<f64, CoalescentError> {
    let dist = block_count_law(law, n, 0, t)?;
    Ok(dist.expect(|m, d| x0.powi(m as i32) * w.powi(d as i32)))
}

/// Law of `(M_t, D_t)` on the states `m + d <= n`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlockCountLaw {
    pub n: usize,
    probs: Vec<f64>,
}

impl BlockCountLaw {
    fn idx(&self, m: usize, d: usize) -> usize {
        m * (self.n + 1) + d
    }

    pub fn prob(&self, m: usize, d: usize) -> f64 {
        if m + d > self.n { 0.0 } else { self.probs[self.idx(m, d)] }
    }

    /// Law of `M_t`, indexed by block count.
    pub fn blocks(&self) -> Vec<f64> {
        (0..=self.n).map(|m| (0..=(self.n - m)).map(|d| self.prob(m, d)).sum()).collect()
    }

    /// Nonzero entries `((m, d), p)`.
    pub fn support(&self) -> Vec<((usize, usize), f64)> {
        let mut out = Vec::new();
        for m in 0..=self.n {
            for d in 0..=(self.n - m) {
                let p = self.prob(m, d);
                if p > 0.0 {
                    out.push(((m, d), p));
                }
            }
        }
        out
    }

    pub fn expect(&self, f: impl Fn(usize, usize) -> f64) -> f64 {
        self.support().into_iter().map(|((m, d), p)| p * f(m, d)).sum()
    }
}

/// Law of `(M_t, D_t)` from `(m0, d0)`.
pub fn block_count_law(law: &CoalescentLaw, m0: usize, d0: usize, t: f64) -> Result<BlockCountLaw, CoalescentError> {
    BlockCountingSimulator::new(law, m0.max(2))?.transition_law(m0, d0, t)
}

impl BlockCountingSimulator {
    /// Law of `(M_t, D_t)` from `(m0, d0)` by uniformization of the
    /// block-counting chain, accurate to [`ODE_TOL`] in total variation.
    pub fn transition_law(&self, m0: usize, d0: usize, t: f64) -> Result<BlockCountLaw, CoalescentError> {
        assert!(m0 <= self.n, "simulator prepared for at most {} blocks", self.n);
        let n = m0 + d0;
        let u = self.law.freeze_rate;
        let idx = |m: usize, d: usize| m * (n + 1) + d;
        let size = (n + 1) * (n + 1);
        let out_rate: Vec<f64> = (0..=m0).map(|m| self.merge_rates(m).iter().sum::<f64>() + u * m as f64).collect();
        let lambda = out_rate.iter().cloned().fold(0.0, f64::max);
        let mut p = vec![0.0; size];
        p[idx(m0, d0)] = 1.0;
        if t == 0.0 || lambda == 0.0 {
            return Ok(BlockCountLaw { n, probs: p });
        }
        let lt = lambda * t;
        let max_terms = (lt + 12.0 * lt.sqrt() + 100.0).min(1e7) as usize;
        let mut acc = vec![0.0; size];
        let mut mass = 0.0;
        for k in 0..=max_terms {
            let wk = (-lt + k as f64 * lt.ln() - ln_gamma(k as f64 + 1.0)).exp();
            mass += wk;
            for (a, q) in acc.iter_mut().zip(&p) {
                *a += wk * q;
            }
            if mass >= 1.0 - ODE_TOL && k as f64 > lt {
                return Ok(BlockCountLaw { n, probs: acc });
            }
            let mut next = vec![0.0; size];
            for m in 0..=m0 {
                for d in 0..=(n - m) {
                    let q = p[idx(m, d)];
                    if q == 0.0 {
                        continue;
                    }
                    next[idx(m, d)] += q * (1.0 - out_rate[m] / lambda);
                    for (j, r) in self.merge_rates(m).iter().enumerate() {
                        if *r > 0.0 {
                            next[idx(j, d)] += q * r / lambda;
                        }
                    }
                    if u > 0.0 && m > 0 {
                        next[idx(m - 1, d + 1)] += q * u * m as f64 / lambda;
                    }
                }
            }
            p = next;
        }
        Err(CoalescentError::OdeTolerance)
    }
}

/// Density of the seed bank transform of Beta(2 - alpha, alpha), written on
/// `(0, 1/beta)` as `x^{1-alpha} (1/beta - x)^{alpha-1} / (Gamma(2-alpha) Gamma(alpha))`
/// before the `1/beta^2` rate normalisation; see [`LambdaMeasure::Scaled`].
pub fn beta_transform_density(alpha: f64, beta: f64, x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 / beta {
        return 0.0;
    }
    ((1.0 - alpha) * x.ln() + (alpha - 1.0) * (1.0 / beta - x).ln() - ln_gamma(2.0 - alpha) - ln_gamma(alpha)).exp()
}
