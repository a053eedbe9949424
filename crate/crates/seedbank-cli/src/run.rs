//! Subcommand execution and artifact writing.

use crate::config::{BackwardMode, DualityKind, ForwardMode, Subcommand, Validated};
use anyhow::{bail, Context, Result};
use rand::Rng;
use seedbank::backward::{run_ancestral, run_particles, run_window_distributional, run_window_graphical, Sample, SampleConfig, WindowState};
use seedbank::coalescent::BlockCountingSimulator;
use seedbank::duality::{compositions, moment_duality_check, moment_duality_mc, sampling_duality_check, DualityRow};
use seedbank::experiments::{backward_scaling_experiment, forward_scaling_experiment, window_vector_limit_check, Regime, CSV_HEADER};
use seedbank::forward::{initial_counts, run_frequency_counts, simulate_frequency, FrequencyState};
use seedbank::graph::{load_fixture, DiGraphWindow, EdgeTarget, Vertex};
use seedbank::par::{map_replicates, Execution};
use seedbank::rng;
use seedbank::scalar::{Rational, Scalar};
use seedbank::stats::MeanEstimate;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};

const BACKWARD: u64 = 0x4241_434b;
const FORWARD: u64 = 0x464f_5257;
const SFS: u64 = 0x5346_5321;
const GRAPH: u64 = 0x4752_4150;
const DUALITY_MC: u64 = 0x4455_414c;

/// Flags that shape a run without changing its results.
pub struct Options {
    pub out: PathBuf,
    pub exact: bool,
}

/// Outcome of a run: artifacts are written either way; `passed` is false
/// when a check reported by the subcommand failed.
pub struct Outcome {
    pub passed: bool,
    pub summary: String,
}

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

struct Artifacts {
    dir: PathBuf,
    files: Vec<String>,
}

impl Artifacts {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Artifacts { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn csv<I>(&mut self, name: &str, header: &[String], rows: I) -> Result<()>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let path = self.dir.join(name);
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(&r)?;
        }
        w.flush()?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn text(&mut self, name: &str, body: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.text(name, &(serde_json::to_string_pretty(value)? + "\n"))
    }
}

fn header(fixed: &[&str], prefix: &str, m: usize, tail: &[&str]) -> Vec<String> {
    let mut h: Vec<String> = fixed.iter().map(|s| s.to_string()).collect();
    h.extend((1..=m).map(|i| format!("{prefix}{i}")));
    h.extend(tail.iter().map(|s| s.to_string()));
    h
}

#[derive(Serialize)]
struct Manifest<'a> {
    subcommand: &'a str,
    config_hash: String,
    seed: u64,
    exact: bool,
    versions: Versions,
    outputs: Vec<String>,
    rerun: String,
    config: &'a crate::config::Config,
}

#[derive(Serialize)]
struct Versions {
    seedbank: &'static str,
    seedbank_cli: &'static str,
}

/// SHA-256 of the canonical JSON form of the normalized configuration.
pub fn config_hash(v: &Validated) -> String {
    let canon = serde_json::to_string(&v.config).expect("configs serialise");
    Sha256::digest(canon.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn run(sub: Subcommand, v: &Validated, opts: &Options) -> Result<Outcome> {
    let mut art = Artifacts::new(&opts.out)?;
    let outcome = match sub {
        Subcommand::Graph => graph(v, &mut art)?,
        Subcommand::Backward => backward(v, &mut art)?,
        Subcommand::Forward => forward(v, &mut art)?,
        Subcommand::Duality => duality(v, opts.exact, &mut art)?,
        Subcommand::Sfs => sfs(v, &mut art)?,
        Subcommand::Limits => limits(v, &mut art)?,
    };
    art.text("config.toml", &crate::config::to_toml(&v.config))?;
    let manifest = Manifest {
        subcommand: sub.name(),
        config_hash: config_hash(v),
        seed: v.seed,
        exact: opts.exact,
        versions: Versions { seedbank: seedbank::VERSION, seedbank_cli: env!("CARGO_PKG_VERSION") },
        outputs: art.files.clone(),
        rerun: format!("seedbank {} --config config.toml{}", sub.name(), if opts.exact { " --exact" } else { "" }),
        config: &v.config,
    };
    art.json("manifest.json", &manifest)?;
    Ok(outcome)
}

fn target_cells(t: EdgeTarget) -> [String; 3] {
    match t {
        EdgeTarget::Parent(p) => [p.generation.to_string(), p.label.to_string(), String::new()],
        EdgeTarget::Sink1 => [String::new(), String::new(), "D1".into()],
        EdgeTarget::Sink2 => [String::new(), String::new(), "D2".into()],
    }
}

fn graph(v: &Validated, art: &mut Artifacts) -> Result<Outcome> {
    let g = v.config.graph.as_ref().expect("validated");
    let model = v.model();
    let seed = rng::stream(v.seed, &[GRAPH]).random();
    let graph = DiGraphWindow::random_span(model.law.clone(), model.mu.clone(), model.mutation, seed, g.lo, g.hi);
    let edges = graph.edge_list();
    let h = ["generation", "label", "parent_generation", "parent_label", "sink"].map(String::from);
    art.csv(
        "edges.csv",
        &h,
        edges.iter().map(|(v, t)| {
            let [a, b, c] = target_cells(*t);
            vec![v.generation.to_string(), v.label.to_string(), a, b, c]
        }),
    )?;
    art.text("graph.txt", &graph.to_fixture())?;
    if g.dot {
        art.text("graph.dot", &graph.to_dot())?;
    }
    Ok(Outcome { passed: true, summary: format!("{} edges over generations {}..={}", edges.len(), g.lo, g.hi) })
}

fn window_rows(r: u64, run: &[WindowState]) -> impl Iterator<Item = Vec<String>> + '_ {
    run.iter().map(move |s| {
        let mut row = vec![r.to_string(), s.g.to_string()];
        row.extend(s.b.iter().map(|x| x.to_string()));
        row.push(s.d.to_string());
        row
    })
}

fn backward(v: &Validated, art: &mut Artifacts) -> Result<Outcome> {
    let b = v.config.backward.as_ref().expect("validated");
    let model = v.model();
    let (n, m) = (model.n(), model.m());
    let steps = b.steps;
    let mut counts_cfg = SampleConfig::new(b.sample.clone().unwrap_or_default());
    counts_cfg.anchor = b.anchor;
    if b.distinct {
        counts_cfg = counts_cfg.without_repetition();
    }
    let wh = header(&["replicate", "g"], "B", m, &["D"]);
    let ah = header(&["replicate", "g"], "A", m, &[]);
    match b.mode {
        BackwardMode::Graphical => {
            let fixture = match &b.fixture {
                Some(p) => {
                    let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                    Some(load_fixture(&text, n, m).with_context(|| format!("loading {}", p.display()))?)
                }
                None => None,
            };
            let members = b.members.as_ref().map(|ms| ms.iter().map(|&(g, l)| Vertex::new(g, l)).collect::<Vec<_>>());
            let runs = map_replicates(Execution::Parallel, b.replicates, |r| -> Result<_> {
                let mut rng = rng::replicate(v.seed, &[BACKWARD], r);
                let sample = match &members {
                    Some(ms) => Sample::explicit(b.anchor, ms.clone()),
                    None => counts_cfg.draw(n, &mut rng)?,
                };
                let owned;
                let graph = match &fixture {
                    Some(g) => g,
                    None => {
                        let lo = b.anchor - (steps + m) as i64;
                        owned = DiGraphWindow::random_span(model.law.clone(), model.mu.clone(), model.mutation, rng.random(), lo, b.anchor);
                        &owned
                    }
                };
                Ok((run_ancestral(graph, &sample, steps)?, run_window_graphical(graph, &sample, steps)?))
            });
            let runs: Vec<_> = runs.into_iter().collect::<Result<_>>()?;
            art.csv(
                "ancestral.csv",
                &ah,
                runs.iter().enumerate().flat_map(|(r, (anc, _))| {
                    anc.iter().map(move |s| {
                        let mut row = vec![r.to_string(), s.g.to_string()];
                        row.extend(s.a.iter().map(|x| x.to_string()));
                        row
                    })
                }),
            )?;
            art.csv("window.csv", &wh, runs.iter().enumerate().flat_map(|(r, (_, w))| window_rows(r as u64, w)))?;
            let last = &runs[0].1[steps];
            Ok(Outcome { passed: true, summary: format!("{} replicates; replicate 0 ends at B = {:?}, D = {}", runs.len(), last.b, last.d) })
        }
        BackwardMode::Distributional => {
            let counts = b.sample.clone().expect("validated");
            let runs = map_replicates(Execution::Parallel, b.replicates, |r| {
                let mut rng = rng::replicate(v.seed, &[BACKWARD], r);
                run_window_distributional(&counts, &model.law, &model.mu, &model.mutation, steps, &mut rng)
            });
            art.csv("window.csv", &wh, runs.iter().enumerate().flat_map(|(r, w)| window_rows(r as u64, w)))?;
            Ok(Outcome { passed: true, summary: format!("{} replicates of {} steps", runs.len(), steps) })
        }
        BackwardMode::Particles => {
            let runs = map_replicates(Execution::Parallel, b.replicates, |r| {
                let mut rng = rng::replicate(v.seed, &[BACKWARD], r);
                run_particles(&counts_cfg, &model.law, &model.mu, &model.mutation, steps, &mut rng)
            });
            let runs: Vec<_> = runs.into_iter().collect::<Result<_, _>>()?;
            art.csv("window.csv", &wh, runs.iter().enumerate().flat_map(|(r, p)| window_rows(r as u64, &p.states)))?;
            Ok(Outcome { passed: true, summary: format!("{} replicates of {} steps", runs.len(), steps) })
        }
    }
}

fn forward(v: &Validated, art: &mut Artifacts) -> Result<Outcome> {
    let f = v.config.forward.as_ref().expect("validated");
    let model = v.model();
    let (n, m) = (model.n(), model.m());
    let k0: Vec<u32> = match (&f.x, &f.counts) {
        (Some(x), _) => initial_counts(x, n)?,
        (None, Some(k)) => k.clone(),
        _ => unreachable!("validated"),
    };
    let fixture = match &f.fixture {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Some(load_fixture(&text, n, m).with_context(|| format!("loading {}", p.display()))?)
        }
        None => None,
    };
    let runs = map_replicates(Execution::Parallel, f.replicates, |r| -> Result<Vec<FrequencyState>> {
        let mut rng = rng::replicate(v.seed, &[FORWARD], r);
        Ok(match (f.mode, &fixture) {
            (ForwardMode::Graphical, Some(g)) => run_frequency_counts(g, &k0, f.steps)?,
            (ForwardMode::Graphical, None) => {
                let graph = DiGraphWindow::random_span(model.law.clone(), model.mu.clone(), model.mutation, rng.random(), 1, f.steps as i64);
                run_frequency_counts(&graph, &k0, f.steps)?
            }
            (ForwardMode::Distributional, _) => simulate_frequency(&model.law, &model.mu, &model.mutation, &k0, f.steps, &mut rng),
        })
    });
    let runs: Vec<_> = runs.into_iter().collect::<Result<_>>()?;
    let mut h = header(&["replicate", "g"], "X", m, &[]);
    h.extend((1..=m).map(|i| format!("K{i}")));
    art.csv(
        "frequency.csv",
        &h,
        runs.iter().enumerate().flat_map(|(r, run)| {
            run.iter().map(move |s| {
                let mut row = vec![r.to_string(), s.g.to_string()];
                row.extend(s.fractions().into_iter().map(fmt));
                row.extend(s.k.iter().map(|k| k.to_string()));
                row
            })
        }),
    )?;
    Ok(Outcome { passed: true, summary: format!("{} replicates of {} steps", runs.len(), f.steps) })
}

fn grid(n: usize, m: usize) -> Vec<Vec<f64>> {
    (0..(n + 1).pow(m as u32))
        .map(|mut c| {
            (0..m)
                .map(|_| {
                    let k = c % (n + 1);
                    c /= n + 1;
                    k as f64 / n as f64
                })
                .collect()
        })
        .collect()
}

fn joined<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

#[derive(Serialize)]
struct DualitySummary {
    cases: usize,
    rows: usize,
    max_diff: f64,
    tolerance: f64,
    passed: bool,
    max_mc_z: Option<f64>,
}

fn duality(v: &Validated, exact: bool, art: &mut Artifacts) -> Result<Outcome> {
    let d = v.config.duality.as_ref().expect("validated");
    let model = v.model();
    let (n, m) = (model.n(), model.m());
    let samples: Vec<Vec<usize>> =
        if d.samples.is_empty() { (1..=d.max_total).flat_map(|t| compositions(t, m)).collect() } else { d.samples.clone() };
    let xs = if d.x.is_empty() { grid(n, m) } else { d.x.clone() };
    let kinds: &[&str] = match d.kind {
        DualityKind::Moment => &["moment"],
        DualityKind::Sampling => &["sampling"],
        DualityKind::Both => &["moment", "sampling"],
    };
    let mut cases = Vec::new();
    for &kind in kinds {
        for s in &samples {
            if kind == "sampling" && s.iter().any(|&k| k > n) {
                continue;
            }
            for x in &xs {
                cases.push((kind, s.clone(), x.clone()));
            }
        }
    }
    fn render<S: Scalar>(rows: Vec<DualityRow<S>>) -> Vec<(usize, String, String, String, f64)> {
        rows.into_iter().map(|r| (r.g, r.lhs.render(), r.rhs.render(), r.diff.render(), r.diff.to_f64())).collect()
    }
    let results = map_replicates(Execution::Parallel, cases.len() as u64, |i| {
        let (kind, s, x) = &cases[i as usize];
        let rows = match (*kind, exact) {
            ("moment", false) => render(moment_duality_check::<f64>(&model.law, &model.mu, &model.mutation, s, x, d.g)?),
            ("moment", true) => render(moment_duality_check::<Rational>(&model.law, &model.mu, &model.mutation, s, x, d.g)?),
            (_, false) => render(sampling_duality_check::<f64>(&model.law, &model.mu, s, x, d.g)?),
            (_, true) => render(sampling_duality_check::<Rational>(&model.law, &model.mu, s, x, d.g)?),
        };
        Ok::<_, seedbank::duality::DualityError>(rows)
    });
    let results: Vec<_> = results.into_iter().collect::<Result<_, _>>()?;
    let h = ["case", "kind", "n", "x", "g", "lhs", "rhs", "diff"].map(String::from);
    let mut max_diff = 0.0f64;
    let mut rows = Vec::new();
    for (i, ((kind, s, x), res)) in cases.iter().zip(&results).enumerate() {
        for (g, lhs, rhs, diff, df) in res {
            max_diff = max_diff.max(*df);
            rows.push(vec![i.to_string(), kind.to_string(), joined(s), x.iter().map(|&y| fmt(y)).collect::<Vec<_>>().join(";"), g.to_string(), lhs.clone(), rhs.clone(), diff.clone()]);
        }
    }
    let nrows = rows.len();
    art.csv("duality.csv", &h, rows)?;

    let mut max_z = None;
    if d.mc_replicates > 0 && d.kind != DualityKind::Sampling {
        let mut mc_rows = Vec::new();
        let mut worst = 0.0f64;
        for (i, s) in samples.iter().enumerate() {
            for (j, x) in xs.iter().enumerate() {
                let key = rng::stream(v.seed, &[DUALITY_MC, i as u64, j as u64]).random();
                let r = moment_duality_mc(&model.law, &model.mu, &model.mutation, s, x, d.g, d.mc_replicates, key, Execution::Parallel)?;
                worst = worst.max(r.z_score());
                mc_rows.push(vec![
                    joined(s),
                    x.iter().map(|&y| fmt(y)).collect::<Vec<_>>().join(";"),
                    r.g.to_string(),
                    fmt(r.forward.mean),
                    fmt(r.forward.stderr),
                    fmt(r.backward.mean),
                    fmt(r.backward.stderr),
                    fmt(r.z_score()),
                ]);
            }
        }
        let h = ["n", "x", "g", "forward", "forward_stderr", "backward", "backward_stderr", "z"].map(String::from);
        art.csv("duality_mc.csv", &h, mc_rows)?;
        max_z = Some(worst);
    }
    let passed = max_diff < d.tolerance;
    art.json(
        "duality.json",
        &DualitySummary { cases: cases.len(), rows: nrows, max_diff, tolerance: d.tolerance, passed, max_mc_z: max_z },
    )?;
    let mut summary = format!("{} cases, {nrows} rows, max diff {max_diff:.3e} (tolerance {:.0e})", cases.len(), d.tolerance);
    if let Some(z) = max_z {
        summary.push_str(&format!("; Monte Carlo max |z| {z:.2}"));
    }
    Ok(Outcome { passed, summary })
}

fn sfs(v: &Validated, art: &mut Artifacts) -> Result<Outcome> {
    let s = v.config.sfs.as_ref().expect("validated");
    let sim = BlockCountingSimulator::new(&s.coalescent, s.n)?;
    let runs = map_replicates(Execution::Parallel, s.replicates, |r| sim.simulate_sfs(s.n, &mut rng::replicate(v.seed, &[SFS], r)));
    let runs: Vec<_> = runs.into_iter().collect::<Result<_, _>>()?;
    let h = ["replicate", "i", "L_i"].map(String::from);
    art.csv(
        "sfs.csv",
        &h,
        runs.iter().enumerate().flat_map(|(r, (sfs, _))| sfs.lengths.iter().enumerate().map(move |(i, l)| vec![r.to_string(), (i + 1).to_string(), fmt(*l)])),
    )?;
    let means: Vec<MeanEstimate> =
        (0..s.n - 1).map(|i| MeanEstimate::from_samples(&runs.iter().map(|(x, _)| x.lengths[i]).collect::<Vec<_>>())).collect();
    let h = ["i", "mean", "stderr"].map(String::from);
    art.csv("sfs_mean.csv", &h, means.iter().enumerate().map(|(i, e)| vec![(i + 1).to_string(), fmt(e.mean), fmt(e.stderr)]))?;
    if s.paths {
        let h = ["replicate", "time", "M", "D"].map(String::from);
        art.csv(
            "paths.csv",
            &h,
            runs.iter().enumerate().flat_map(|(r, (_, p))| {
                p.points.iter().map(move |q| vec![r.to_string(), fmt(q.time), q.m.to_string(), q.d.to_string()])
            }),
        )?;
    }
    let shown: Vec<String> = means.iter().take(4).map(|e| format!("{:.4}", e.mean)).collect();
    Ok(Outcome { passed: true, summary: format!("{} trees; E[L_1..] = [{}{}]", runs.len(), shown.join(", "), if means.len() > 4 { ", .." } else { "" }) })
}

#[derive(Serialize)]
struct LimitsSummary<'a> {
    experiment: &'a str,
    regime: Regime,
    all_pass: bool,
    verdicts: &'a [seedbank::experiments::Verdict],
}

fn limits(v: &Validated, art: &mut Artifacts) -> Result<Outcome> {
    let l = v.config.limits.as_ref().expect("validated");
    let exp = v.experiment();
    let mut report = if exp.regime == Regime::Forward {
        forward_scaling_experiment(&exp, Execution::Parallel)?
    } else {
        backward_scaling_experiment(&exp, Execution::Parallel)?
    };
    if let Some(t) = l.window_vector_t {
        let vector = window_vector_limit_check(&exp, t, Execution::Parallel)?;
        report.rows.extend(vector.rows);
        report.verdicts.extend(vector.verdicts);
    }
    let h: Vec<String> = CSV_HEADER.iter().map(|s| s.to_string()).collect();
    art.csv("distances.csv", &h, report.rows.iter().map(|r| r.csv_record()))?;
    let passed = report.all_pass();
    art.json("summary.json", &LimitsSummary { experiment: &report.experiment, regime: report.regime, all_pass: passed, verdicts: &report.verdicts })?;
    let failed: Vec<&str> = report.verdicts.iter().filter(|v| !v.pass && !v.name.starts_with("info_")).map(|v| v.name.as_str()).collect();
    let summary = if failed.is_empty() {
        format!("{} rows; all {} gating verdicts pass", report.rows.len(), report.verdicts.iter().filter(|v| !v.name.starts_with("info_")).count())
    } else {
        format!("{} rows; failed: {}", report.rows.len(), failed.join(", "))
    };
    if report.rows.is_empty() {
        bail!("experiment produced no rows");
    }
    Ok(Outcome { passed, summary })
}
