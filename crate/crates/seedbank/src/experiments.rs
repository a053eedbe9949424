//! Scaling-limit harness.
//!
//! For each population size on the grid the finite model is run with the
//! regime's time scale, and the rescaled block counts (or frequencies) are
//! compared with the limit block-counting process. The limit laws are
//! computed exactly by uniformization, so all randomness is on the finite-`N`
//! side.
//!
//! Time scales and freezing rates per regime, with `c = c_N`,
//! `beta = E[J]` and `u0 = 1 - u1 - u2`:
//!
//! | regime           | steps per unit time | `u_i` at size `N`  | limit freezing      |
//! |------------------|---------------------|--------------------|---------------------|
//! | `kingman`        | `beta^2 / c`        | 0                  | 0                   |
//! | `kingman_freeze` | `beta^2 / (c u0^2)` | `a_i c / beta`     | `(a1 + a2) / u0^2`  |
//! | `xi`             | `1 / c`             | 0                  | 0                   |
//! | `xi_freeze`      | `1 / c`             | `a_i beta c`       | `a1 + a2`           |
//! | `forward`        | `beta^2 / (c u0^2)` | `a_i c / beta`     | `(a1 + a2) / u0^2`  |

use crate::backward::{step_window_distributional, WindowState};
use crate::coalescent::{BlockCountLaw, BlockCountingSimulator, CoalescentError, CoalescentLaw, LambdaMeasure};
use crate::duality::{backward_matrix, compositions, multinomial_pmf};
use crate::forward::{floor_counts, simulate_frequency_at};
use crate::model::{stationary_law, CanningsLaw, LawKind, ModelError, MutationRates, SeedBankLaw};
use crate::par::{map_replicates, Execution};
use crate::rng::{self, tag};
use crate::stats::{chi_square_gof, kolmogorov_survival, ks_statistic, MeanEstimate};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error("invalid experiment configuration: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error("configuration mismatch: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Coalescent(#[from] CoalescentError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Kingman,
    Xi,
    KingmanFreeze,
    XiFreeze,
    Forward,
}

impl Regime {
    fn freezes(self) -> bool {
        matches!(self, Regime::KingmanFreeze | Regime::XiFreeze)
    }

    fn is_xi(self) -> bool {
        matches!(self, Regime::Xi | Regime::XiFreeze)
    }
}

/// Reproduction law as a function of `N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LawFamily {
    WrightFisher,
    SymmetricDirichlet { alpha: f64 },
    /// `eps_N = eps_scale * N^(-eps_exponent)`.
    EldonWagner {
        psi: f64,
        #[serde(default = "one")]
        eps_scale: f64,
        #[serde(default = "quarter")]
        eps_exponent: f64,
    },
}

fn one() -> f64 {
    1.0
}

fn quarter() -> f64 {
    0.25
}

impl LawFamily {
    pub fn law(&self, n: usize) -> Result<CanningsLaw, ModelError> {
        match self {
            LawFamily::WrightFisher => Ok(CanningsLaw::wright_fisher(n)),
            LawFamily::SymmetricDirichlet { alpha } => CanningsLaw::new(n, LawKind::SymmetricDirichlet { alpha: *alpha }),
            LawFamily::EldonWagner { psi, eps_scale, eps_exponent } => {
                let eps = (eps_scale * (n as f64).powf(-eps_exponent)).min(1.0);
                CanningsLaw::new(n, LawKind::EldonWagner { psi: *psi, eps })
            }
        }
    }
}

/// Rescaled mutation strengths `a1`, `a2`; see the module table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct MutationScaling {
    #[serde(default)]
    pub a1: f64,
    #[serde(default)]
    pub a2: f64,
}

impl MutationScaling {
    pub fn is_zero(&self) -> bool {
        self.a1 == 0.0 && self.a2 == 0.0
    }

    /// Probability that a frozen lineage is of type A.
    pub fn frozen_weight(&self) -> f64 {
        let s = self.a1 + self.a2;
        if s > 0.0 { self.a2 / s } else { 1.0 }
    }
}

/// Where the initial lineages sit in the window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Start {
    /// `sample[i]` lineages in slot `i + 1`.
    #[default]
    Given,
    /// `sum(sample)` lineages with independent slots drawn from `nu`.
    Stationary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub regime: Regime,
    pub law: LawFamily,
    pub mu: SeedBankLaw,
    #[serde(default)]
    pub mutation: MutationScaling,
    #[serde(default = "default_n_grid")]
    pub n_grid: Vec<usize>,
    #[serde(default = "default_t_grid")]
    pub t_grid: Vec<f64>,
    #[serde(default = "default_replicates")]
    pub replicates: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_sample")]
    pub sample: Vec<usize>,
    #[serde(default)]
    pub start: Start,
    /// Initial frequencies of the forward regime, one per window slot.
    #[serde(default)]
    pub x: Vec<f64>,
    /// Time pairs for joint distances; consecutive grid times when absent.
    #[serde(default)]
    pub pairs: Option<Vec<(f64, f64)>>,
}

pub fn default_n_grid() -> Vec<usize> {
    vec![50, 200, 800]
}

pub fn default_t_grid() -> Vec<f64> {
    vec![0.1, 0.5, 1.0, 2.0]
}

pub fn default_replicates() -> u64 {
    10_000
}

fn default_sample() -> Vec<usize> {
    vec![2]
}

impl ExperimentConfig {
    pub fn new(regime: Regime, law: LawFamily, mu: SeedBankLaw) -> Self {
        ExperimentConfig {
            regime,
            law,
            mu,
            mutation: MutationScaling::default(),
            n_grid: default_n_grid(),
            t_grid: default_t_grid(),
            replicates: default_replicates(),
            seed: 0,
            sample: default_sample(),
            start: Start::Given,
            x: Vec::new(),
            pairs: None,
        }
    }

    /// Every violated constraint, each naming its field.
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let mut errs = Vec::new();
        if self.n_grid.is_empty() {
            errs.push("n_grid: must not be empty".to_string());
        }
        if self.n_grid.windows(2).any(|w| w[1] <= w[0]) {
            errs.push("n_grid: must be increasing".to_string());
        }
        if self.n_grid.first() == Some(&0) {
            errs.push("n_grid: population sizes must be positive".to_string());
        }
        if self.replicates < 100 {
            errs.push(format!("replicates: at least 100 required, got {}", self.replicates));
        }
        if self.t_grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            errs.push("t_grid: times must be finite and nonnegative".to_string());
        }
        if self.sample.len() > self.mu.m() {
            errs.push(format!("sample: {} slots but m = {}", self.sample.len(), self.mu.m()));
        }
        if self.sample.iter().sum::<usize>() == 0 && self.regime != Regime::Forward {
            errs.push("sample: at least one lineage required".to_string());
        }
        let (a1, a2) = (self.mutation.a1, self.mutation.a2);
        if !(a1.is_finite() && a2.is_finite() && a1 >= 0.0 && a2 >= 0.0) {
            errs.push("mutation: a1 and a2 must be finite and nonnegative".to_string());
        }
        match self.regime {
            Regime::Kingman | Regime::Xi if !self.mutation.is_zero() => {
                errs.push(format!("mutation: regime {:?} requires a1 = a2 = 0", self.regime).to_lowercase());
            }
            Regime::KingmanFreeze | Regime::XiFreeze if self.mutation.is_zero() => {
                errs.push("mutation: freezing regimes require a1 + a2 > 0".to_string());
            }
            _ => {}
        }
        if self.regime.is_xi() && !matches!(self.law, LawFamily::EldonWagner { .. }) {
            errs.push("law: the xi regimes require an eldon_wagner family".to_string());
        }
        if let LawFamily::EldonWagner { psi, eps_scale, eps_exponent } = &self.law {
            if !(*psi > 0.0 && *psi <= 1.0) {
                errs.push("law.psi: must lie in (0, 1]".to_string());
            }
            if !(*eps_scale > 0.0 && *eps_exponent >= 0.0) {
                errs.push("law.eps_scale, law.eps_exponent: must be positive and nonnegative".to_string());
            }
        }
        if let LawFamily::SymmetricDirichlet { alpha } = &self.law {
            if !(alpha.is_finite() && *alpha > 0.0) {
                errs.push("law.alpha: must be positive".to_string());
            }
        }
        if self.regime == Regime::Forward {
            if self.x.len() != self.mu.m() {
                errs.push(format!("x: {} initial frequencies for m = {}", self.x.len(), self.mu.m()));
            }
            if self.x.iter().any(|x| !(0.0..=1.0).contains(x)) {
                errs.push("x: frequencies must lie in [0, 1]".to_string());
            }
        }
        if let Some(pairs) = &self.pairs {
            if pairs.iter().any(|(a, b)| !(*a >= 0.0 && b > a)) {
                errs.push("pairs: each pair needs 0 <= t1 < t2".to_string());
            }
        }
        if errs.is_empty() { Ok(()) } else { Err(ExperimentError::Config(errs)) }
    }

    fn time_pairs(&self) -> Vec<(f64, f64)> {
        self.pairs.clone().unwrap_or_else(|| self.t_grid.windows(2).map(|w| (w[0], w[1])).collect())
    }

    /// Finite model, time scale and limit law at population size `n`.
    pub fn scaling(&self, n: usize) -> Result<Scaling, ExperimentError> {
        let law = self.law.law(n)?;
        let (c, _) = law.exact_c_d().expect("families have closed-form c");
        let beta = self.mu.beta();
        let (a1, a2) = (self.mutation.a1, self.mutation.a2);
        let kingman_like = matches!(self.regime, Regime::Kingman | Regime::KingmanFreeze | Regime::Forward);
        let mutation = if self.mutation.is_zero() {
            MutationRates::none()
        } else if kingman_like {
            MutationRates::new(a1 * c / beta, a2 * c / beta)?
        } else {
            MutationRates::new(a1 * beta * c, a2 * beta * c)?
        };
        let u0 = mutation.u0();
        let (steps_per_unit, limit) = if kingman_like {
            let u = if self.mutation.is_zero() { 0.0 } else { (a1 + a2) / (u0 * u0) };
            (beta * beta / (c * u0 * u0), CoalescentLaw::kingman().with_freezing(u))
        } else {
            let LawFamily::EldonWagner { psi, .. } = self.law else {
                return Err(ExperimentError::Mismatch("the xi regimes require an eldon_wagner family".into()));
            };
            let limit = CoalescentLaw::lambda(LambdaMeasure::PointMass { psi, mass: 1.0 })
                .with_beta(beta)
                .with_freezing(a1 + a2);
            (1.0 / c, limit)
        };
        Ok(Scaling { n, law, mutation, c, steps_per_unit, limit })
    }
}

/// Finite-`N` model and its limit for one grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct Scaling {
    pub n: usize,
    pub law: CanningsLaw,
    pub mutation: MutationRates,
    pub c: f64,
    pub steps_per_unit: f64,
    pub limit: CoalescentLaw,
}

impl Scaling {
    /// Step index of limit time `t`.
    pub fn step(&self, t: f64) -> usize {
        (t * self.steps_per_unit).floor() as usize
    }
}

/// One comparison between the finite model and the limit.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistanceRow {
    /// `pair_time`, `block_count`, `joint`, `merge_size`, `window_vector`,
    /// `moment_<k>` or `coordinate_gap`.
    pub statistic: String,
    pub n: usize,
    pub t: f64,
    pub t2: Option<f64>,
    /// Finite-`N` mean (or empirical value) and its standard error.
    pub mc: f64,
    pub stderr: f64,
    pub limit: f64,
    pub ks: Option<f64>,
    pub tv: Option<f64>,
    pub p_value: Option<f64>,
    /// Rough 95% radius of the distance under sampling noise alone.
    pub radius: f64,
}

pub const CSV_HEADER: [&str; 11] = ["statistic", "N", "t", "t2", "mc", "stderr", "limit", "ks", "tv", "p_value", "radius"];

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt).unwrap_or_default()
}

impl DistanceRow {
    pub fn csv_record(&self) -> Vec<String> {
        vec![
            self.statistic.clone(),
            self.n.to_string(),
            fmt(self.t),
            fmt_opt(self.t2),
            fmt(self.mc),
            fmt(self.stderr),
            fmt(self.limit),
            fmt_opt(self.ks),
            fmt_opt(self.tv),
            fmt_opt(self.p_value),
            fmt(self.radius),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistanceReport {
    pub experiment: String,
    pub regime: Regime,
    pub rows: Vec<DistanceRow>,
    pub verdicts: Vec<Verdict>,
}

impl DistanceReport {
    pub fn select<'a>(&'a self, statistic: &'a str) -> impl Iterator<Item = &'a DistanceRow> + 'a {
        self.rows.iter().filter(move |r| r.statistic == statistic)
    }

    pub fn verdict(&self, name: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }

    /// Whether every gating verdict passes; `info_` verdicts are reported
    /// only, since their sampling noise is of the order of the effect.
    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().filter(|v| !v.name.starts_with("info_")).all(|v| v.pass)
    }
}

/// Number of increases along the sequence.
pub fn inversions(xs: &[f64]) -> usize {
    xs.windows(2).filter(|w| w[1] > w[0]).count()
}

/// Weak decrease with at most `allowed` inversions, ending below the start.
pub fn decreasing_with_inversions(xs: &[f64], allowed: usize) -> bool {
    xs.len() < 2 || (inversions(xs) <= allowed && xs[xs.len() - 1] < xs[0])
}

fn trend_verdict(name: String, xs: &[f64]) -> Verdict {
    Verdict {
        pass: decreasing_with_inversions(xs, 1),
        detail: format!("{xs:?} ({} inversions)", inversions(xs)),
        name,
    }
}

fn tv_maps<K: Ord>(p: &BTreeMap<K, f64>, q: &BTreeMap<K, f64>) -> f64 {
    let mut s = 0.0;
    for (k, a) in p {
        s += (a - q.get(k).copied().unwrap_or(0.0)).abs();
    }
    for (k, b) in q {
        if !p.contains_key(k) {
            s += b.abs();
        }
    }
    (0.5 * s).min(1.0)
}

fn empirical_map<K: Ord + Clone>(xs: &[K]) -> BTreeMap<K, f64> {
    let mut m = BTreeMap::new();
    for x in xs {
        *m.entry(x.clone()).or_insert(0.0) += 1.0;
    }
    let n = xs.len() as f64;
    m.values_mut().for_each(|v| *v /= n);
    m
}

fn discrete_ks(emp: &BTreeMap<usize, f64>, law: &[f64]) -> f64 {
    let top = law.len().max(emp.keys().max().map_or(0, |k| k + 1));
    let (mut a, mut b, mut d) = (0.0, 0.0, 0.0f64);
    for k in 0..top {
        a += emp.get(&k).copied().unwrap_or(0.0);
        b += law.get(k).copied().unwrap_or(0.0);
        d = d.max((a - b).abs());
    }
    d.min(1.0)
}

fn initial_window<R: Rng + ?Sized>(config: &ExperimentConfig, rng: &mut R) -> WindowState {
    let m = config.mu.m();
    match config.start {
        Start::Given => WindowState::initial(&config.sample, m),
        Start::Stationary => {
            let nu = stationary_law(&config.mu);
            let mut b = vec![0usize; m];
            for _ in 0..config.sample.iter().sum::<usize>() {
                let mut u: f64 = rng.random();
                let mut slot = m - 1;
                for (i, p) in nu.iter().enumerate() {
                    if u < *p {
                        slot = i;
                        break;
                    }
                    u -= p;
                }
                b[slot] += 1;
            }
            WindowState { b, d: 0, g: 0 }
        }
    }
}

/// What one replicate of the window process reports.
#[derive(Clone, Debug, Default)]
struct WindowTrace {
    /// `(|B|, D)` at each checkpoint
    counts: Vec<(usize, usize)>,
    /// `B` at each checkpoint, when requested
    vectors: Vec<Vec<usize>>,
    /// first step with fewer than two lineages
    coalescence: Option<usize>,
    /// lineages merged at the first merger (`lost + 1`)
    first_merge: Option<usize>,
}

#[derive(Clone, Copy)]
struct TraceRequest {
    vectors: bool,
    coalescence: bool,
    first_merge: bool,
    /// cap on extra steps beyond the last checkpoint
    horizon: usize,
}

fn trace_window<R: Rng + ?Sized>(
    config: &ExperimentConfig,
    sc: &Scaling,
    checkpoints: &[usize],
    req: TraceRequest,
    rng: &mut R,
) -> WindowTrace {
    let mut s = initial_window(config, rng);
    let last = checkpoints.iter().copied().max().unwrap_or(0);
    let stop = if sc.mutation.is_zero() { 1 } else { 0 };
    let mut out = WindowTrace::default();
    let mut next = 0;
    let mut g = 0usize;
    loop {
        while next < checkpoints.len() && checkpoints[next] == g {
            out.counts.push((s.total(), s.d));
            if req.vectors {
                out.vectors.push(s.b.clone());
            }
            next += 1;
        }
        if req.coalescence && out.coalescence.is_none() && s.total() < 2 {
            out.coalescence = Some(g);
        }
        let pending = next < checkpoints.len()
            || (req.coalescence && out.coalescence.is_none())
            || (req.first_merge && out.first_merge.is_none());
        if !pending || g >= last + req.horizon {
            break;
        }
        // once absorbed the counts no longer change; only slots move
        if s.total() <= stop && !req.vectors && !(req.first_merge && out.first_merge.is_none()) {
            while next < checkpoints.len() {
                out.counts.push((s.total(), s.d));
                next += 1;
            }
            if req.coalescence && out.coalescence.is_none() {
                out.coalescence = Some(g);
            }
            break;
        }
        let before = s.total() + s.d;
        s = step_window_distributional(&s, &sc.law, &config.mu, &sc.mutation, rng);
        g += 1;
        let after = s.total() + s.d;
        if req.first_merge && out.first_merge.is_none() && after < before {
            out.first_merge = Some(before - after + 1);
        }
    }
    out
}

fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    kolmogorov_survival((sn + 0.12 + 0.11 / sn) * d)
}

/// Joint law of `((M_t1, D_t1), (M_t2, D_t2))`.
fn joint_limit(
    sim: &BlockCountingSimulator,
    first: &BlockCountLaw,
    dt: f64,
) -> Result<BTreeMap<((usize, usize), (usize, usize)), f64>, ExperimentError> {
    let mut out = BTreeMap::new();
    for ((m1, d1), p1) in first.support() {
        let second = sim.transition_law(m1, d1, dt)?;
        for (s2, p2) in second.support() {
            *out.entry(((m1, d1), s2)).or_insert(0.0) += p1 * p2;
        }
    }
    Ok(out)
}

/// Rescaled window process against the limit block counting process.
///
/// Rows per size `N`: `block_count` at each grid time (TV on `(M, D)`, KS
/// on `M`), `joint` for each time pair (TV on the joint law), `pair_time`
/// for two lineages without mutation (KS against the exponential law of the
/// limit), and `merge_size` in the `xi` regime (chi-square of the first
/// merger size against the limit's first-event law).
pub fn backward_scaling_experiment(config: &ExperimentConfig, exec: Execution) -> Result<DistanceReport, ExperimentError> {
    config.validate()?;
    if config.regime == Regime::Forward {
        return Err(ExperimentError::Mismatch("use forward_scaling_experiment for the forward regime".into()));
    }
    let n0: usize = config.sample.iter().sum();
    let pairs = config.time_pairs();
    let mut times: Vec<f64> = config.t_grid.clone();
    for (a, b) in &pairs {
        times.push(*a);
        times.push(*b);
    }
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times.dedup();
    let pair_time = n0 == 2 && !config.regime.freezes();
    let merge_size = config.regime == Regime::Xi;
    let mut rows = Vec::new();
    let mut verdicts = Vec::new();
    for &n in &config.n_grid {
        let sc = config.scaling(n)?;
        let sim = BlockCountingSimulator::new(&sc.limit, n0.max(2))?;
        let mut cps: Vec<usize> = times.iter().map(|&t| sc.step(t)).collect();
        cps.dedup();
        let req = TraceRequest {
            vectors: false,
            coalescence: pair_time,
            first_merge: merge_size,
            horizon: (200.0 * sc.steps_per_unit) as usize + 1000,
        };
        let traces = map_replicates(exec, config.replicates, |r| {
            let mut rng = rng::replicate(config.seed, &[tag::LIMIT, 1, n as u64], r);
            trace_window(config, &sc, &cps, req, &mut rng)
        });
        let reps = traces.len();
        let radius = 1.36 / (reps as f64).sqrt();
        let at = |t: f64| cps.iter().position(|&c| c == sc.step(t)).expect("checkpoint");
        let mut limits = BTreeMap::new();
        for &t in &times {
            limits.insert(t.to_bits(), sim.transition_law(n0, 0, t)?);
        }
        if pair_time {
            let rate = sim.merge_rates(2).iter().sum::<f64>();
            let samples: Vec<f64> = traces
                .iter()
                .map(|tr| tr.coalescence.map_or(f64::INFINITY, |g| g as f64 / sc.steps_per_unit))
                .collect();
            let d = ks_statistic(&samples, |x| 1.0 - (-rate * x).exp());
            let finite: Vec<f64> = samples.iter().copied().filter(|x| x.is_finite()).collect();
            let est = MeanEstimate::from_samples(&finite);
            rows.push(DistanceRow {
                statistic: "pair_time".into(),
                n,
                t: 0.0,
                t2: None,
                mc: est.mean,
                stderr: est.stderr,
                limit: 1.0 / rate,
                ks: Some(d),
                tv: None,
                p_value: Some(ks_p_value(d, reps)),
                radius,
            });
        }
        if pair_time {
            if let Some(ks) = exact_pair_time_ks(config, &sc, sim.merge_rates(2).iter().sum())? {
                rows.push(DistanceRow {
                    statistic: "pair_time_exact".into(),
                    n,
                    t: 0.0,
                    t2: None,
                    mc: f64::NAN,
                    stderr: 0.0,
                    limit: f64::NAN,
                    ks: Some(ks),
                    tv: None,
                    p_value: None,
                    radius: 0.0,
                });
            }
        }
        for &t in &config.t_grid {
            let i = at(t);
            let law = &limits[&t.to_bits()];
            let states: Vec<(usize, usize)> = traces.iter().map(|tr| tr.counts[i]).collect();
            let emp = empirical_map(&states);
            let limit_map: BTreeMap<(usize, usize), f64> = law.support().into_iter().collect();
            let m_emp = empirical_map(&states.iter().map(|s| s.0).collect::<Vec<_>>());
            let est = MeanEstimate::from_samples(&states.iter().map(|s| s.0 as f64).collect::<Vec<_>>());
            rows.push(DistanceRow {
                statistic: "block_count".into(),
                n,
                t,
                t2: None,
                mc: est.mean,
                stderr: est.stderr,
                limit: law.expect(|m, _| m as f64),
                ks: Some(discrete_ks(&m_emp, &law.blocks())),
                tv: Some(tv_maps(&emp, &limit_map)),
                p_value: None,
                radius,
            });
        }
        for &(t1, t2) in &pairs {
            let (i1, i2) = (at(t1), at(t2));
            let joint: Vec<_> = traces.iter().map(|tr| (tr.counts[i1], tr.counts[i2])).collect();
            let emp = empirical_map(&joint);
            let lim = joint_limit(&sim, &limits[&t1.to_bits()], t2 - t1)?;
            rows.push(DistanceRow {
                statistic: "joint".into(),
                n,
                t: t1,
                t2: Some(t2),
                mc: f64::NAN,
                stderr: f64::NAN,
                limit: f64::NAN,
                ks: None,
                tv: Some(tv_maps(&emp, &lim)),
                p_value: None,
                radius,
            });
        }
        if merge_size {
            let sizes: Vec<usize> = traces.iter().filter_map(|tr| tr.first_merge).collect();
            let law = first_merge_law(&sim, n0);
            let mut counts = vec![0u64; n0 - 1];
            for &k in &sizes {
                counts[k.clamp(2, n0) - 2] += 1;
            }
            let chi = chi_square_gof(&counts, &law, 5.0);
            let est = MeanEstimate::from_samples(&sizes.iter().map(|&k| k as f64).collect::<Vec<_>>());
            let want: f64 = law.iter().enumerate().map(|(i, p)| (i + 2) as f64 * p).sum();
            rows.push(DistanceRow {
                statistic: "merge_size".into(),
                n,
                t: 0.0,
                t2: None,
                mc: est.mean,
                stderr: est.stderr,
                limit: want,
                ks: None,
                tv: Some(tv_maps(
                    &empirical_map(&sizes),
                    &law.iter().enumerate().map(|(i, p)| (i + 2, *p)).collect(),
                )),
                p_value: Some(chi.p_value),
                radius,
            });
        }
    }
    let series = |stat: &str, t: f64| -> Vec<f64> {
        rows.iter()
            .filter(|r| r.statistic == stat && r.t == t)
            .map(|r| r.ks.or(r.tv).unwrap_or(f64::NAN))
            .collect()
    };
    if pair_time {
        let ks = series("pair_time", 0.0);
        verdicts.push(Verdict {
            name: "info_pair_time_mc_ks_decreasing".into(),
            pass: ks.windows(2).all(|w| w[1] < w[0]),
            detail: format!("{ks:?}"),
        });
        let exact = series("pair_time_exact", 0.0);
        if exact.len() == config.n_grid.len() {
            verdicts.push(Verdict {
                name: "pair_time_exact_ks_decreasing".into(),
                pass: exact.windows(2).all(|w| w[1] < w[0]),
                detail: format!("{exact:?}"),
            });
            let radius = 1.36 / (config.replicates as f64).sqrt();
            let worst = ks.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            verdicts.push(Verdict {
                name: "pair_time_mc_within_noise_of_exact".into(),
                pass: worst <= radius,
                detail: format!("max |mc - exact| = {worst:.4} vs radius {radius:.4}"),
            });
        }
        verdicts.push(Verdict {
            name: "pair_time_ks_final_below_0.1".into(),
            pass: ks.last().is_some_and(|&d| d < 0.1),
            detail: format!("{:?}", ks.last()),
        });
    }
    for &t in &config.t_grid {
        let tv: Vec<f64> = rows.iter().filter(|r| r.statistic == "block_count" && r.t == t).filter_map(|r| r.tv).collect();
        verdicts.push(trend_verdict(format!("info_block_count_tv_trend_t{t}"), &tv));
    }
    if merge_size {
        let p = rows.iter().rfind(|r| r.statistic == "merge_size").and_then(|r| r.p_value).unwrap_or(0.0);
        verdicts.push(Verdict { name: "merge_size_chi_square_p_above_0.01".into(), pass: p > 0.01, detail: format!("p = {p}") });
    }
    Ok(DistanceReport { experiment: "backward".into(), regime: config.regime, rows, verdicts })
}

/// Exact KS distance between the rescaled pair coalescence time of the
/// finite model and the exponential law with `rate`, from the backward chain
/// on at most two lineages. `None` when the law is not exactly enumerable.
pub fn exact_pair_time_ks(config: &ExperimentConfig, sc: &Scaling, rate: f64) -> Result<Option<f64>, ExperimentError> {
    let chain = match backward_matrix::<f64>(&sc.law, &config.mu, &sc.mutation, 2) {
        Ok(c) => c,
        Err(_) => return Ok(None),
    };
    let m = config.mu.m();
    let mut start = vec![0usize; m + 1];
    start[..config.sample.len()].copy_from_slice(&config.sample);
    let mut dist = chain.point_mass(&start).map_err(|e| ExperimentError::Mismatch(e.to_string()))?;
    let merged: Vec<bool> = chain.states().iter().map(|s| s[..m].iter().sum::<usize>() < 2).collect();
    let cdf = |d: &[f64]| d.iter().zip(&merged).filter(|(_, &b)| b).map(|(p, _)| p).sum::<f64>();
    let limit = |x: f64| 1.0 - (-rate * x).exp();
    let mut prev = cdf(&dist);
    let mut ks = prev;
    let cap = (60.0 / rate * sc.steps_per_unit) as usize + 10;
    for g in 1..=cap {
        dist = chain.step(&dist);
        let f = cdf(&dist);
        let x = g as f64 / sc.steps_per_unit;
        ks = ks.max((limit(x) - prev).abs()).max((f - limit(x)).abs());
        prev = f;
        if 1.0 - f < 1e-13 && 1.0 - limit(x) < 1e-13 {
            break;
        }
    }
    Ok(Some(ks))
}

/// Law of the number of blocks merged by the first merger of the limit
/// started from `n` blocks, indexed from 2.
pub fn first_merge_law(sim: &BlockCountingSimulator, n: usize) -> Vec<f64> {
    let rates = sim.merge_rates(n);
    let total: f64 = rates.iter().sum();
    (2..=n).map(|k| rates[n - k + 1] / total).collect()
}

/// Law of the window vector `B` at limit time `t` against the mixture of
/// multinomials `Mult(M_t, nu)` over the limit block count.
pub fn window_vector_limit_check(config: &ExperimentConfig, t: f64, exec: Execution) -> Result<DistanceReport, ExperimentError> {
    config.validate()?;
    if config.regime != Regime::Kingman {
        return Err(ExperimentError::Mismatch("the window vector check runs in the kingman regime".into()));
    }
    let n0: usize = config.sample.iter().sum();
    let m = config.mu.m();
    let nu = stationary_law(&config.mu);
    let mut rows = Vec::new();
    for &n in &config.n_grid {
        let sc = config.scaling(n)?;
        let law = block_count_law_for(&sc.limit, n0, t)?;
        let blocks = law.blocks();
        let mut cells: Vec<Vec<usize>> = Vec::new();
        let mut probs = Vec::new();
        for total in 0..=n0 {
            for b in compositions(total, m) {
                probs.push(blocks[total] * multinomial_pmf(&b, &nu));
                cells.push(b);
            }
        }
        let req = TraceRequest { vectors: true, coalescence: false, first_merge: false, horizon: 0 };
        let cps = [sc.step(t)];
        let vecs = map_replicates(exec, config.replicates, |r| {
            let mut rng = rng::replicate(config.seed, &[tag::LIMIT, 2, n as u64], r);
            trace_window(config, &sc, &cps, req, &mut rng).vectors.remove(0)
        });
        let index: BTreeMap<&Vec<usize>, usize> = cells.iter().enumerate().map(|(i, c)| (c, i)).collect();
        let mut counts = vec![0u64; cells.len()];
        for v in &vecs {
            counts[index[v]] += 1;
        }
        let chi = chi_square_gof(&counts, &probs, 5.0);
        let emp = empirical_map(&vecs);
        let lim: BTreeMap<Vec<usize>, f64> = cells.iter().cloned().zip(probs.iter().copied()).collect();
        let est = MeanEstimate::from_samples(&vecs.iter().map(|v| v[0] as f64).collect::<Vec<_>>());
        let want: f64 = cells.iter().zip(&probs).map(|(c, p)| c[0] as f64 * p).sum();
        rows.push(DistanceRow {
            statistic: "window_vector".into(),
            n,
            t,
            t2: None,
            mc: est.mean,
            stderr: est.stderr,
            limit: want,
            ks: None,
            tv: Some(tv_maps(&emp, &lim)),
            p_value: Some(chi.p_value),
            radius: (cells.len() as f64 / vecs.len() as f64).sqrt(),
        });
    }
    let p = rows.last().and_then(|r| r.p_value).unwrap_or(0.0);
    let verdicts = vec![Verdict { name: "window_vector_chi_square_p_above_0.01".into(), pass: p > 0.01, detail: format!("p = {p}") }];
    Ok(DistanceReport { experiment: "window_vector".into(), regime: config.regime, rows, verdicts })
}

fn block_count_law_for(limit: &CoalescentLaw, n0: usize, t: f64) -> Result<BlockCountLaw, ExperimentError> {
    Ok(BlockCountingSimulator::new(limit, n0.max(2))?.transition_law(n0, 0, t)?)
}

/// Rescaled frequency process against the dual moments of the limit.
///
/// Rows per `(N, t)`: `moment_k` for `k = 1..4` (Monte Carlo mean of
/// `(X^1)^k` against `E_k[w^{D_t} x0^{M_t}]` with `x0 = sum nu(i) x_i`;
/// at `t = 0` the limit column holds `x_1^k`), and `coordinate_gap`,
/// the mean of `(X^1 - X^2)^2`, when `m >= 2`.
pub fn forward_scaling_experiment(config: &ExperimentConfig, exec: Execution) -> Result<DistanceReport, ExperimentError> {
    config.validate()?;
    if config.regime != Regime::Forward {
        return Err(ExperimentError::Mismatch("forward_scaling_experiment needs the forward regime".into()));
    }
    let m = config.mu.m();
    let nu = stationary_law(&config.mu);
    let x0: f64 = nu.iter().zip(&config.x).map(|(a, b)| a * b).sum();
    let w = config.mutation.frozen_weight();
    let mut rows = Vec::new();
    for &n in &config.n_grid {
        let sc = config.scaling(n)?;
        let k0 = floor_counts(&config.x, n);
        let cps: Vec<usize> = config.t_grid.iter().map(|&t| sc.step(t)).collect();
        let mut order: Vec<usize> = cps.clone();
        order.sort_unstable();
        order.dedup();
        let runs = map_replicates(exec, config.replicates, |r| {
            let mut rng = rng::replicate(config.seed, &[tag::LIMIT, 3, n as u64], r);
            simulate_frequency_at(&sc.law, &config.mu, &sc.mutation, &k0, &order, &mut rng)
        });
        let sim = BlockCountingSimulator::new(&sc.limit, 4)?;
        for (ti, &t) in config.t_grid.iter().enumerate() {
            let slot = order.iter().position(|&c| c == cps[ti]).expect("checkpoint");
            let xs: Vec<Vec<f64>> = runs.iter().map(|run| run[slot].iter().map(|&k| k as f64 / n as f64).collect()).collect();
            for k in 1..=4usize {
                let vals: Vec<f64> = xs.iter().map(|x| x[0].powi(k as i32)).collect();
                let est = MeanEstimate::from_samples(&vals);
                let limit = if t == 0.0 {
                    config.x[0].powi(k as i32)
                } else {
                    sim.transition_law(k, 0, t)?.expect(|mm, d| x0.powi(mm as i32) * w.powi(d as i32))
                };
                rows.push(DistanceRow {
                    statistic: format!("moment_{k}"),
                    n,
                    t,
                    t2: None,
                    mc: est.mean,
                    stderr: est.stderr,
                    limit,
                    ks: None,
                    tv: Some((est.mean - limit).abs().min(1.0)),
                    p_value: None,
                    radius: 3.0 * est.stderr,
                });
            }
            if m >= 2 {
                let gaps: Vec<f64> = xs.iter().map(|x| (x[0] - x[1]).powi(2)).collect();
                let est = MeanEstimate::from_samples(&gaps);
                rows.push(DistanceRow {
                    statistic: "coordinate_gap".into(),
                    n,
                    t,
                    t2: None,
                    mc: est.mean,
                    stderr: est.stderr,
                    limit: 0.0,
                    ks: None,
                    tv: Some(est.mean.min(1.0)),
                    p_value: None,
                    radius: 3.0 * est.stderr,
                });
            }
        }
    }
    let mut verdicts = Vec::new();
    if let Some(&largest) = config.n_grid.last() {
        let bad: Vec<String> = rows
            .iter()
            .filter(|r| r.n == largest && r.statistic.starts_with("moment_"))
            .filter(|r| (r.mc - r.limit).abs() > 3.0 * r.stderr + 1e-12)
            .map(|r| format!("{} at t = {}", r.statistic, r.t))
            .collect();
        verdicts.push(Verdict { name: "moments_within_3_stderr_at_largest_N".into(), pass: bad.is_empty(), detail: bad.join(", ") });
    }
    if m >= 2 {
        for &t in config.t_grid.iter().filter(|&&t| t > 0.0) {
            let gap: Vec<f64> = rows.iter().filter(|r| r.statistic == "coordinate_gap" && r.t == t).map(|r| r.mc).collect();
            verdicts.push(Verdict {
                name: format!("coordinate_gap_decreasing_t{t}"),
                pass: gap.windows(2).all(|w| w[1] < w[0]),
                detail: format!("{gap:?}"),
            });
        }
    }
    Ok(DistanceReport { experiment: "forward".into(), regime: config.regime, rows, verdicts })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation_collects_every_error() {
        let mut c = ExperimentConfig::new(Regime::Xi, LawFamily::WrightFisher, SeedBankLaw::uniform(2));
        c.n_grid = vec![200, 50];
        c.replicates = 10;
        c.mutation.a1 = 0.5;
        let Err(ExperimentError::Config(errs)) = c.validate() else { panic!() };
        assert_eq!(errs.len(), 4, "{errs:?}");
        assert!(errs.iter().any(|e| e.starts_with("n_grid")));
        assert!(errs.iter().any(|e| e.starts_with("law")));
    }

    #[test]
    fn kingman_scaling() {
        let c = ExperimentConfig::new(Regime::Kingman, LawFamily::WrightFisher, SeedBankLaw::uniform(2));
        let sc = c.scaling(100).unwrap();
        assert!((sc.steps_per_unit - 225.0).abs() < 1e-9);
        assert_eq!(sc.step(1.0), 225);
    }

    #[test]
    fn freeze_scaling() {
        let mut c = ExperimentConfig::new(Regime::XiFreeze, LawFamily::EldonWagner { psi: 0.5, eps_scale: 1.0, eps_exponent: 0.25 }, SeedBankLaw::uniform(2));
        c.mutation = MutationScaling { a1: 0.5, a2: 0.25 };
        let sc = c.scaling(256).unwrap();
        assert!((sc.mutation.u1 - 0.5 * 1.5 * sc.c).abs() < 1e-15);
        assert_eq!(sc.limit.freeze_rate, 0.75);
        assert_eq!(sc.limit.beta, 1.5);
    }

    #[test]
    fn inversion_rule() {
        assert!(decreasing_with_inversions(&[0.3, 0.2, 0.25, 0.1], 1));
        assert!(!decreasing_with_inversions(&[0.3, 0.35, 0.3, 0.4], 1));
    }
}
