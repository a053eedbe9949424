//! Run configuration: one TOML (or JSON) document with a table per
//! subcommand. See `configs/README.md` for the schema.

use seedbank::coalescent::CoalescentLaw;
use seedbank::experiments::{
    default_n_grid, default_replicates, default_t_grid, ExperimentConfig, LawFamily, MutationScaling, Regime, Start,
};
use seedbank::model::{CanningsLaw, LawKind, MutationRates, SeedBankLaw};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<GraphSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backward: Option<BackwardSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forward: Option<ForwardSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duality: Option<DualitySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sfs: Option<SfsSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limits: Option<LimitsSection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub n: Option<usize>,
    /// Seed bank probabilities `mu(1..m)`.
    pub mu: Option<Vec<f64>>,
    #[serde(default = "wright_fisher")]
    pub law: LawKind,
    #[serde(default)]
    pub mutation: MutationRates,
}

fn wright_fisher() -> LawKind {
    LawKind::WrightFisher
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    #[serde(default = "default_lo")]
    pub lo: i64,
    #[serde(default)]
    pub hi: i64,
    #[serde(default)]
    pub dot: bool,
}

fn default_lo() -> i64 {
    -10
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BackwardMode {
    #[default]
    Graphical,
    Distributional,
    Particles,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackwardSection {
    #[serde(default)]
    pub mode: BackwardMode,
    pub steps: usize,
    #[serde(default = "one")]
    pub replicates: u64,
    /// Sample sizes per generation offset, drawn uniformly.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<Vec<usize>>,
    /// Draw distinct individuals within a generation.
    #[serde(default)]
    pub distinct: bool,
    /// Explicit sample members `[generation, label]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub members: Option<Vec<(i64, u32)>>,
    #[serde(default)]
    pub anchor: i64,
    /// Edge list to run on instead of a random graph.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture: Option<PathBuf>,
}

fn one() -> u64 {
    1
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ForwardMode {
    Graphical,
    #[default]
    Distributional,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForwardSection {
    #[serde(default)]
    pub mode: ForwardMode,
    pub steps: usize,
    #[serde(default = "one")]
    pub replicates: u64,
    /// Initial type-A fractions, one per window generation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<f64>>,
    /// Initial type-A counts (alternative to `x`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DualityKind {
    #[default]
    Moment,
    Sampling,
    Both,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DualitySection {
    #[serde(default)]
    pub kind: DualityKind,
    /// Dual starting vectors; every composition of `1..=max_total` when empty.
    #[serde(default)]
    pub samples: Vec<Vec<usize>>,
    #[serde(default = "default_max_total")]
    pub max_total: usize,
    /// Initial frequency vectors; the full grid `{0, 1/N, .., 1}^m` when empty.
    #[serde(default)]
    pub x: Vec<Vec<f64>>,
    #[serde(default = "default_g")]
    pub g: usize,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Monte Carlo replicates per case for the moment duality (0: none).
    #[serde(default)]
    pub mc_replicates: u64,
}

fn default_max_total() -> usize {
    2
}

fn default_g() -> usize {
    4
}

fn default_tolerance() -> f64 {
    1e-10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SfsSection {
    pub coalescent: CoalescentLaw,
    pub n: usize,
    #[serde(default = "default_replicates")]
    pub replicates: u64,
    /// Also write the block counting paths.
    #[serde(default)]
    pub paths: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitsSection {
    pub regime: Regime,
    pub law: LawFamily,
    pub mu: Option<Vec<f64>>,
    #[serde(default)]
    pub mutation: MutationScaling,
    #[serde(default = "default_n_grid")]
    pub n_grid: Vec<usize>,
    #[serde(default = "default_t_grid")]
    pub t_grid: Vec<f64>,
    #[serde(default = "default_replicates")]
    pub replicates: u64,
    #[serde(default = "default_sample")]
    pub sample: Vec<usize>,
    #[serde(default)]
    pub start: Start,
    #[serde(default)]
    pub x: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairs: Option<Vec<(f64, f64)>>,
    /// Rescaled time of the window-vector check (kingman only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_vector_t: Option<f64>,
}

fn default_sample() -> Vec<usize> {
    vec![2]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Subcommand {
    Graph,
    Backward,
    Forward,
    Duality,
    Sfs,
    Limits,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Graph => "graph",
            Subcommand::Backward => "backward",
            Subcommand::Forward => "forward",
            Subcommand::Duality => "duality",
            Subcommand::Sfs => "sfs",
            Subcommand::Limits => "limits",
        }
    }

    fn needs_model(self) -> bool {
        !matches!(self, Subcommand::Sfs | Subcommand::Limits)
    }
}

/// Validated model parameters.
#[derive(Clone, Debug)]
pub struct Model {
    pub law: CanningsLaw,
    pub mu: SeedBankLaw,
    pub mutation: MutationRates,
}

impl Model {
    pub fn n(&self) -> usize {
        self.law.n()
    }

    pub fn m(&self) -> usize {
        self.mu.m()
    }
}

/// A configuration that passed validation, with defaults filled in and
/// fixture paths made absolute.
#[derive(Clone, Debug)]
pub struct Validated {
    pub config: Config,
    pub seed: u64,
    pub model: Option<Model>,
}

impl Validated {
    pub fn model(&self) -> &Model {
        self.model.as_ref().expect("validated model")
    }

    pub fn experiment(&self) -> ExperimentConfig {
        let l = self.config.limits.as_ref().expect("validated limits");
        ExperimentConfig {
            regime: l.regime,
            law: l.law.clone(),
            mu: SeedBankLaw::new(l.mu.clone().expect("validated mu")).expect("validated mu"),
            mutation: l.mutation,
            n_grid: l.n_grid.clone(),
            t_grid: l.t_grid.clone(),
            replicates: l.replicates,
            seed: self.seed,
            sample: l.sample.clone(),
            start: l.start,
            x: l.x.clone(),
            pairs: l.pairs.clone(),
        }
    }
}

/// Parse `text` as TOML, or as JSON when `path` ends in `.json`.
pub fn parse(text: &str, path: &Path) -> Result<Config, Vec<String>> {
    if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(text).map_err(|e| vec![format!("line {}, column {}: {e}", e.line(), e.column())])
    } else {
        toml::from_str(text).map_err(|e| vec![e.to_string().trim_end().to_string()])
    }
}

/// Line of the first `key =` (TOML) or `"key":` (JSON) in `text`.
fn locate(text: &str, key: &str) -> Option<usize> {
    let leaf = key.rsplit('.').next().unwrap_or(key);
    text.lines().position(|line| {
        let t = line.trim_start();
        let quoted = format!("\"{leaf}\"");
        (t.starts_with(leaf) && t[leaf.len()..].trim_start().starts_with('='))
            || (t.starts_with(&quoted) && t[quoted.len()..].trim_start().starts_with(':'))
    })
    .map(|i| i + 1)
}

struct Errors<'a> {
    text: &'a str,
    list: Vec<String>,
}

impl Errors<'_> {
    fn push(&mut self, field: &str, msg: impl std::fmt::Display) {
        match locate(self.text, field) {
            Some(line) => self.list.push(format!("{field} (line {line}): {msg}")),
            None => self.list.push(format!("{field}: {msg}")),
        }
    }
}

/// Full validation for `sub` (every present section when `sub` is `None`).
/// Returns every violated constraint at once.
pub fn validate(
    mut config: Config,
    text: &str,
    base: &Path,
    sub: Option<Subcommand>,
    seed_flag: Option<u64>,
) -> Result<Validated, Vec<String>> {
    let mut e = Errors { text, list: Vec::new() };
    if seed_flag.is_some() {
        config.seed = seed_flag;
    }
    if config.seed.is_none() {
        e.push("seed", "required (set `seed` in the config or pass --seed)");
    }
    let wanted = |s: Subcommand| sub.map_or(true, |x| x == s);
    if let Some(s) = sub {
        let present = match s {
            Subcommand::Graph => config.graph.is_some(),
            Subcommand::Backward => config.backward.is_some(),
            Subcommand::Forward => config.forward.is_some(),
            Subcommand::Duality => config.duality.is_some(),
            Subcommand::Sfs => config.sfs.is_some(),
            Subcommand::Limits => config.limits.is_some(),
        };
        if !present {
            e.push(s.name(), format!("missing [{}] table", s.name()));
        }
    }
    let model_needed = match sub {
        Some(s) => s.needs_model(),
        None => config.graph.is_some() || config.backward.is_some() || config.forward.is_some() || config.duality.is_some(),
    };
    let model = match (&config.model, model_needed) {
        (None, true) => {
            e.push("model", "missing [model] table");
            None
        }
        (None, false) => None,
        (Some(ms), _) => check_model(ms, &mut e),
    };

    if let (Some(g), true) = (&config.graph, wanted(Subcommand::Graph)) {
        if g.lo > g.hi {
            e.push("graph.lo", format!("lo = {} exceeds hi = {}", g.lo, g.hi));
        }
    }
    if let (Some(b), true) = (config.backward.as_mut(), wanted(Subcommand::Backward)) {
        check_backward(b, model.as_ref(), base, &mut e);
    }
    if let (Some(f), true) = (config.forward.as_mut(), wanted(Subcommand::Forward)) {
        check_forward(f, model.as_ref(), base, &mut e);
    }
    if let (Some(d), true) = (&config.duality, wanted(Subcommand::Duality)) {
        check_duality(d, model.as_ref(), &mut e);
    }
    if let (Some(s), true) = (&config.sfs, wanted(Subcommand::Sfs)) {
        if s.n < 2 {
            e.push("sfs.n", "sample size must be at least 2");
        }
        if s.replicates == 0 {
            e.push("sfs.replicates", "must be positive");
        }
        if let Err(err) = s.coalescent.validate() {
            e.push("sfs.coalescent", err);
        }
    }
    if let (Some(l), true) = (&config.limits, wanted(Subcommand::Limits)) {
        check_limits(l, &mut e);
    }
    if e.list.is_empty() {
        let seed = config.seed.expect("checked");
        Ok(Validated { config, seed, model })
    } else {
        Err(e.list)
    }
}

fn check_model(ms: &ModelSection, e: &mut Errors) -> Option<Model> {
    let law = match ms.n {
        None => {
            e.push("model.n", "missing population size");
            None
        }
        Some(n) => CanningsLaw::new(n, ms.law.clone()).map_err(|err| e.push("model.law", err)).ok(),
    };
    let mu = match &ms.mu {
        None => {
            e.push("model.mu", "missing seed bank probabilities");
            None
        }
        Some(p) => SeedBankLaw::new(p.clone()).map_err(|err| e.push("model.mu", err)).ok(),
    };
    let mutation = MutationRates::new(ms.mutation.u1, ms.mutation.u2).map_err(|err| e.push("model.mutation", err)).ok();
    Some(Model { law: law?, mu: mu?, mutation: mutation? })
}

fn absolute(base: &Path, p: &Path) -> PathBuf {
    let joined = if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
    joined.canonicalize().unwrap_or(joined)
}

fn check_fixture(field: &str, path: &mut Option<PathBuf>, base: &Path, e: &mut Errors) {
    if let Some(p) = path.as_mut() {
        *p = absolute(base, p);
        if !p.is_file() {
            e.push(field, format!("no such file {}", p.display()));
        }
    }
}

fn check_backward(b: &mut BackwardSection, model: Option<&Model>, base: &Path, e: &mut Errors) {
    check_fixture("backward.fixture", &mut b.fixture, base, e);
    if b.replicates == 0 {
        e.push("backward.replicates", "must be positive");
    }
    match (&b.sample, &b.members) {
        (None, None) => e.push("backward.sample", "either sample or members is required"),
        (Some(_), Some(_)) => e.push("backward.members", "give either sample or members, not both"),
        _ => {}
    }
    if b.members.is_some() && b.mode != BackwardMode::Graphical {
        e.push("backward.members", "explicit members need mode = \"graphical\"");
    }
    if b.fixture.is_some() {
        if b.members.is_none() {
            e.push("backward.fixture", "a fixture needs explicit members");
        }
        if b.replicates != 1 {
            e.push("backward.replicates", "a fixture run has exactly one replicate");
        }
    }
    if b.distinct && b.mode == BackwardMode::Distributional {
        e.push("backward.distinct", "the distributional chain does not track individuals");
    }
    let Some(model) = model else { return };
    let (n, m) = (model.n(), model.m());
    if let Some(s) = &b.sample {
        if s.len() > m {
            e.push("backward.sample", format!("{} generation offsets but m = {m}", s.len()));
        }
        if s.iter().sum::<usize>() == 0 {
            e.push("backward.sample", "empty sample");
        }
        if b.distinct && s.iter().any(|&k| k > n) {
            e.push("backward.sample", format!("more than N = {n} distinct individuals in one generation"));
        }
    }
    if let Some(members) = &b.members {
        if members.is_empty() {
            e.push("backward.members", "empty sample");
        }
        for &(g, l) in members {
            if g > b.anchor || g <= b.anchor - m as i64 {
                e.push("backward.members", format!("({g}, {l}) outside the window of anchor {}", b.anchor));
            }
            if l == 0 || l as usize > n {
                e.push("backward.members", format!("label {l} outside 1..={n}"));
            }
        }
    }
}

fn check_forward(f: &mut ForwardSection, model: Option<&Model>, base: &Path, e: &mut Errors) {
    check_fixture("forward.fixture", &mut f.fixture, base, e);
    if f.replicates == 0 {
        e.push("forward.replicates", "must be positive");
    }
    if f.x.is_some() == f.counts.is_some() {
        e.push("forward.x", "give exactly one of x and counts");
    }
    if f.fixture.is_some() {
        if f.mode != ForwardMode::Graphical {
            e.push("forward.fixture", "a fixture needs mode = \"graphical\"");
        }
        if f.replicates != 1 {
            e.push("forward.replicates", "a fixture run has exactly one replicate");
        }
    }
    let Some(model) = model else { return };
    let (n, m) = (model.n(), model.m());
    if let Some(x) = &f.x {
        if x.len() != m {
            e.push("forward.x", format!("{} fractions for m = {m}", x.len()));
        }
        if let Err(err) = seedbank::forward::initial_counts(x, n) {
            e.push("forward.x", err);
        }
    }
    if let Some(k) = &f.counts {
        if k.len() != m {
            e.push("forward.counts", format!("{} counts for m = {m}", k.len()));
        }
        if k.iter().any(|&k| k as usize > n) {
            e.push("forward.counts", format!("counts must not exceed N = {n}"));
        }
    }
}

fn check_duality(d: &DualitySection, model: Option<&Model>, e: &mut Errors) {
    if !(d.tolerance.is_finite() && d.tolerance > 0.0) {
        e.push("duality.tolerance", "must be positive");
    }
    if d.samples.is_empty() && d.max_total == 0 {
        e.push("duality.max_total", "must be positive when samples is empty");
    }
    let Some(model) = model else { return };
    let (n, m) = (model.n(), model.m());
    for s in &d.samples {
        if s.len() > m {
            e.push("duality.samples", format!("{s:?} has more than m = {m} coordinates"));
        }
    }
    for x in &d.x {
        if x.len() != m {
            e.push("duality.x", format!("{x:?} needs m = {m} coordinates"));
        } else if let Err(err) = seedbank::forward::initial_counts(x, n) {
            e.push("duality.x", err);
        }
    }
    if d.kind != DualityKind::Moment {
        if !model.law.is_wright_fisher() {
            e.push("duality.kind", "the sampling duality needs law.kind = \"wright_fisher\"");
        }
        if !model.mutation.is_zero() {
            e.push("duality.kind", "the sampling duality needs mutation u1 = u2 = 0");
        }
        if d.samples.iter().any(|s| s.iter().any(|&k| k > n)) {
            e.push("duality.samples", format!("the sampling duality takes at most N = {n} individuals per generation"));
        }
    }
    if d.kind != DualityKind::Sampling && model.law.finite_support().is_none() {
        e.push("model.law", "exact moment duality needs a law with finite support");
    }
}

fn check_limits(l: &LimitsSection, e: &mut Errors) {
    let mu = match &l.mu {
        None => {
            e.push("limits.mu", "missing seed bank probabilities");
            None
        }
        Some(p) => SeedBankLaw::new(p.clone()).map_err(|err| e.push("limits.mu", err)).ok(),
    };
    if let Some(t) = l.window_vector_t {
        if l.regime != Regime::Kingman {
            e.push("limits.window_vector_t", "the window-vector check runs in the kingman regime");
        }
        if !(t.is_finite() && t > 0.0) {
            e.push("limits.window_vector_t", "must be positive");
        }
    }
    let Some(mu) = mu else { return };
    let exp = ExperimentConfig {
        regime: l.regime,
        law: l.law.clone(),
        mu,
        mutation: l.mutation,
        n_grid: l.n_grid.clone(),
        t_grid: l.t_grid.clone(),
        replicates: l.replicates,
        seed: 0,
        sample: l.sample.clone(),
        start: l.start,
        x: l.x.clone(),
        pairs: l.pairs.clone(),
    };
    if let Err(seedbank::experiments::ExperimentError::Config(list)) = exp.validate() {
        for msg in list {
            let (field, rest) = msg.split_once(": ").unwrap_or(("limits", msg.as_str()));
            let first = field.split(", ").next().unwrap_or(field);
            e.push(&format!("limits.{first}"), rest);
        }
    }
}

/// Canonical TOML rendering of a (normalized) configuration.
pub fn to_toml(config: &Config) -> String {
    toml::to_string(config).expect("configs serialise")
}
