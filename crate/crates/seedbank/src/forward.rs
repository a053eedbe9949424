//! Forward frequency process on the di-graph.
//!
//! The initial window consists of generations `0, -1, .., 1-m`; in generation
//! `1-i` the labels `1..=k_i` carry type A. A vertex of a later generation
//! inherits the type of its first ancestor inside the initial window, unless
//! its ancestry first reaches a mutation source: the type-a source (`D1`)
//! makes it type a, the type-A source (`D2`) type A. `X^i_g` is the type-A
//! fraction of generation `g + 1 - i`.

use crate::graph::{DiGraphWindow, EdgeTarget, GraphError, Vertex};
use crate::model::{stationary_law, vec_mat, CanningsLaw, MutationRates, SeedBankLaw};
use crate::par::{map_replicates, Execution};
use crate::rng;
use crate::stats::MeanEstimate;
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::Serialize;
use std::collections::{HashMap, VecDeque};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForwardError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("initial frequency {0} is not a multiple of 1/N")]
    OffGrid(f64),
    #[error("expected {expected} initial frequencies, got {got}")]
    Dimension { expected: usize, got: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FrequencyState {
    /// Type-A counts `N X^i_g`.
    pub k: Vec<u32>,
    pub n: usize,
    pub g: usize,
}

impl FrequencyState {
    pub fn fractions(&self) -> Vec<f64> {
        self.k.iter().map(|&k| k as f64 / self.n as f64).collect()
    }
}

/// Convert fractions on the grid `{0, 1/N, .., 1}` to counts.
pub fn initial_counts(x: &[f64], n: usize) -> Result<Vec<u32>, ForwardError> {
    x.iter()
        .map(|&xi| {
            let k = (xi * n as f64).round();
            if !(0.0..=n as f64).contains(&k) || (k - xi * n as f64).abs() > 1e-9 {
                Err(ForwardError::OffGrid(xi))
            } else {
                Ok(k as u32)
            }
        })
        .collect()
}

/// Counts `floor(N x_i)`.
pub fn floor_counts(x: &[f64], n: usize) -> Vec<u32> {
    x.iter().map(|&xi| ((xi * n as f64).floor().max(0.0) as u32).min(n as u32)).collect()
}

/// Frequency process from initial fractions `x`.
pub fn run_frequency(graph: &DiGraphWindow, x: &[f64], steps: usize) -> Result<Vec<FrequencyState>, ForwardError> {
    let k = initial_counts(x, graph.n())?;
    run_frequency_counts(graph, &k, steps)
}

/// Frequency process from initial type-A counts.
pub fn run_frequency_counts(graph: &DiGraphWindow, k0: &[u32], steps: usize) -> Result<Vec<FrequencyState>, ForwardError> {
    let n = graph.n();
    let m = graph.m();
    if k0.len() != m {
        return Err(ForwardError::Dimension { expected: m, got: k0.len() });
    }
    let mut types: HashMap<i64, Vec<bool>> = HashMap::new();
    for (i, &k) in k0.iter().enumerate() {
        types.insert(-(i as i64), (1..=n as u32).map(|l| l <= k).collect());
    }
    let mut out = Vec::with_capacity(steps + 1);
    out.push(FrequencyState { k: k0.to_vec(), n, g: 0 });
    for g in 1..=steps as i64 {
        let mut row = Vec::with_capacity(n);
        for l in 1..=n as u32 {
            let t = match graph.edge(Vertex::new(g, l))? {
                EdgeTarget::Sink1 => false,
                EdgeTarget::Sink2 => true,
                EdgeTarget::Parent(p) => types[&p.generation][p.label as usize - 1],
            };
            row.push(t);
        }
        types.insert(g, row);
        types.remove(&(g - m as i64));
        let k: Vec<u32> = (0..m as i64)
            .map(|i| types[&(g - i)].iter().filter(|&&t| t).count() as u32)
            .collect();
        out.push(FrequencyState { k, n, g: g as usize });
    }
    Ok(out)
}

/// Distributional simulation of the type-A counts, returning the state at
/// each step listed in `checkpoints` (in increasing order).
///
/// Given the weight vectors, the `N` newborns of a generation are
/// independent, so the new count is `Bin(N, p)` with
/// `p = u2 + u0 sum_j mu(j) S_j`, where `S_j` is the weight mass of the
/// type-A set of generation `g + 1 - j`. By exchangeability `S_j` is the
/// mass of the first `k_j` entries of a fresh weight vector.
pub fn simulate_frequency_at<R: Rng + ?Sized>(
    law: &CanningsLaw,
    mu: &SeedBankLaw,
    mutation: &MutationRates,
    k0: &[u32],
    checkpoints: &[usize],
    rng: &mut R,
) -> Vec<Vec<u32>> {
    let n = law.n();
    let m = mu.m();
    assert_eq!(k0.len(), m, "one initial count per window generation");
    let mass = |k: u32, rng: &mut R| -> f64 {
        if law.is_wright_fisher() {
            k as f64 / n as f64
        } else {
            law.sample_weights(rng).mass_of_first(k as usize)
        }
    };
    let mut window: VecDeque<(u32, f64)> = VecDeque::with_capacity(m);
    for &k in k0 {
        let s = mass(k, rng);
        window.push_back((k, s));
    }
    let (u0, u2) = (mutation.u0(), mutation.u2);
    let mut out = Vec::with_capacity(checkpoints.len());
    let last = checkpoints.iter().copied().max().unwrap_or(0);
    let mut next = 0;
    for g in 0..=last {
        while next < checkpoints.len() && checkpoints[next] == g {
            out.push(window.iter().map(|w| w.0).collect());
            next += 1;
        }
        if g == last {
            break;
        }
        let mut p = u2;
        for (j, w) in window.iter().enumerate() {
            p += u0 * mu.probs()[j] * w.1;
        }
        let p = p.clamp(0.0, 1.0);
        let k = Binomial::new(n as u64, p).expect("valid binomial").sample(rng) as u32;
        let s = mass(k, rng);
        window.pop_back();
        window.push_front((k, s));
    }
    out
}

/// Distributional simulation of every step `0..=steps`.
pub fn simulate_frequency<R: Rng + ?Sized>(
    law: &CanningsLaw,
    mu: &SeedBankLaw,
    mutation: &MutationRates,
    k0: &[u32],
    steps: usize,
    rng: &mut R,
) -> Vec<FrequencyState> {
    let cps: Vec<usize> = (0..=steps).collect();
    simulate_frequency_at(law, mu, mutation, k0, &cps, rng)
        .into_iter()
        .enumerate()
        .map(|(g, k)| FrequencyState { k, n: law.n(), g })
        .collect()
}

/// `E_{e_i}[prod_j x_j^{B^j_g}]` for a single lineage: `sum_j P^g(i, j) x_j`.
pub fn single_lineage_dual(mu: &SeedBankLaw, x: &[f64], i: usize, g: usize) -> f64 {
    let p = mu.transition_matrix::<f64>();
    let mut row = vec![0.0; mu.m()];
    row[i - 1] = 1.0;
    for _ in 0..g {
        row = vec_mat(&row, &p);
    }
    row.iter().zip(x).map(|(a, b)| a * b).sum()
}

/// Limit of [`single_lineage_dual`] as `g` grows: `x0 = sum_i nu(i) x_i`.
pub fn stationary_mean(mu: &SeedBankLaw, x: &[f64]) -> f64 {
    stationary_law(mu).iter().zip(x).map(|(a, b)| a * b).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DualMeanCheck {
    pub coordinate: usize,
    pub g: usize,
    pub mc: MeanEstimate,
    pub dual: f64,
}

/// Monte Carlo mean of `X^i_g` over random graphs against the exact
/// single-lineage dual.
#[allow(clippy::too_many_arguments)]
pub fn single_dual_mean_check(
    law: &CanningsLaw,
    mu: &SeedBankLaw,
    x: &[f64],
    i: usize,
    g: usize,
    replicates: u64,
    seed: u64,
    exec: Execution,
) -> Result<DualMeanCheck, ForwardError> {
    let k0 = initial_counts(x, law.n())?;
    if k0.len() != mu.m() {
        return Err(ForwardError::Dimension { expected: mu.m(), got: k0.len() });
    }
    let vals = map_replicates(exec, replicates, |r| {
        let gseed: u64 = rng::replicate(seed, &[0xf0_4d], r).random();
        let mut graph = DiGraphWindow::random(law.clone(), mu.clone(), MutationRates::none(), gseed);
        if g > 0 {
            graph.extend_to(1, g as i64).expect("random graph");
        }
        let run = run_frequency_counts(&graph, &k0, g).expect("span covers the run");
        run[g].k[i - 1] as f64 / law.n() as f64
    });
    Ok(DualMeanCheck { coordinate: i, g, mc: MeanEstimate::from_samples(&vals), dual: single_lineage_dual(mu, x, i, g) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixation_and_loss_are_absorbing() {
        let law = CanningsLaw::wright_fisher(6);
        let mu = SeedBankLaw::uniform(2);
        let g = DiGraphWindow::random_span(law, mu, MutationRates::new(0.0, 0.2).unwrap(), 4, 1, 30);
        let run = run_frequency(&g, &[1.0, 1.0], 30).unwrap();
        assert!(run.iter().all(|s| s.k == vec![6, 6]));
        let law = CanningsLaw::wright_fisher(6);
        let g = DiGraphWindow::random_span(law, SeedBankLaw::uniform(2), MutationRates::new(0.2, 0.0).unwrap(), 4, 1, 30);
        let run = run_frequency(&g, &[0.0, 0.0], 30).unwrap();
        assert!(run.iter().all(|s| s.k == vec![0, 0]));
    }

    #[test]
    fn shift_identity_holds() {
        let law = CanningsLaw::wright_fisher(9);
        let mu = SeedBankLaw::new(vec![0.2, 0.3, 0.5]).unwrap();
        let g = DiGraphWindow::random_span(law, mu, MutationRates::none(), 8, 1, 40);
        let run = run_frequency_counts(&g, &[3, 5, 7], 40).unwrap();
        for w in run.windows(2) {
            assert_eq!(w[1].k[1..], w[0].k[..2]);
        }
    }

    #[test]
    fn dual_limit() {
        let mu = SeedBankLaw::uniform(2);
        assert!((stationary_mean(&mu, &[0.6, 0.3]) - 0.5).abs() < 1e-15);
        assert!((single_lineage_dual(&mu, &[0.6, 0.3], 1, 200) - 0.5).abs() < 1e-12);
        assert_eq!(single_lineage_dual(&mu, &[0.6, 0.3], 2, 0), 0.3);
    }

    #[test]
    fn off_grid_rejected() {
        assert_eq!(initial_counts(&[0.3], 4), Err(ForwardError::OffGrid(0.3)));
        assert_eq!(initial_counts(&[0.25, 1.0], 4).unwrap(), vec![1, 4]);
    }
}
