//! Simulation routes against exact chains and against each other.

use rand::Rng;
use seedbank::backward::{run_ancestral, run_particles, run_window_distributional, run_window_graphical, SampleConfig, WindowState};
use seedbank::duality::{ancestral_matrix, backward_matrix, forward_matrix, ChainMatrix};
use seedbank::forward::{run_frequency_counts, single_dual_mean_check};
use seedbank::graph::{DiGraphWindow, EdgeTarget, Vertex};
use seedbank::model::{CanningsLaw, LawKind, MutationRates, SeedBankLaw};
use seedbank::par::{map_replicates, Execution};
use seedbank::rng;
use seedbank::stats::{chi_square_gof, chi_square_two_sample, ks_two_sample, MeanEstimate};

const REPS: u64 = 20_000;

fn window_key(s: &WindowState) -> Vec<usize> {
    let mut k = s.b.clone();
    k.push(s.d);
    k
}

/// Chi-square of observed states against the exact law after `g` steps.
fn against_chain(chain: &ChainMatrix<f64>, start: &[usize], g: usize, observed: &[Vec<usize>]) -> f64 {
    let law = chain.distributions(start, g).unwrap().pop().unwrap();
    let mut counts = vec![0u64; chain.len()];
    for s in observed {
        counts[chain.index_of(s).unwrap_or_else(|| panic!("{s:?} outside the chain"))] += 1;
    }
    chi_square_gof(&counts, &law, 5.0).p_value
}

fn laws() -> Vec<CanningsLaw> {
    vec![CanningsLaw::wright_fisher(3), CanningsLaw::new(3, LawKind::EldonWagner { psi: 0.6, eps: 0.5 }).unwrap()]
}

#[test]
fn window_routes_match_the_exact_chain() {
    let mu = SeedBankLaw::new(vec![0.25, 0.75]).unwrap();
    let counts = vec![2, 1];
    let start = vec![2, 1, 0];
    let steps = 3;
    for (li, law) in laws().into_iter().enumerate() {
        for mutation in [MutationRates::none(), MutationRates::new(0.1, 0.15).unwrap()] {
            let chain = backward_matrix::<f64>(&law, &mu, &mutation, 3).unwrap();
            let graph_runs = map_replicates(Execution::Parallel, REPS, |r| {
                let mut rng = rng::replicate(1, &[li as u64, 1], r);
                let graph = DiGraphWindow::random_span(law.clone(), mu.clone(), mutation, rng.random(), -6, 0);
                let sample = SampleConfig::new(counts.clone()).draw(3, &mut rng).unwrap();
                run_window_graphical(&graph, &sample, steps).unwrap()
            });
            let dist_runs = map_replicates(Execution::Parallel, REPS, |r| {
                let mut rng = rng::replicate(1, &[li as u64, 2], r);
                run_window_distributional(&counts, &law, &mu, &mutation, steps, &mut rng)
            });
            let particle_runs = map_replicates(Execution::Parallel, REPS, |r| {
                let mut rng = rng::replicate(1, &[li as u64, 3], r);
                run_particles(&SampleConfig::new(counts.clone()), &law, &mu, &mutation, steps, &mut rng).unwrap().states
            });
            for g in 1..=steps {
                let key = |runs: &Vec<Vec<WindowState>>| runs.iter().map(|run| window_key(&run[g])).collect::<Vec<_>>();
                let p = against_chain(&chain, &start, g, &key(&dist_runs));
                assert!(p > 1e-3, "distributional law {li} {mutation:?} g = {g}: p = {p}");
                // sampled individuals are uniform, edge arrivals carry
                // weight-distributed labels; the chain treats every slot-1
                // lineage as an arrival, which is exact for uniform weights
                if law.is_wright_fisher() {
                    for (name, runs) in [("graph", &graph_runs), ("particles", &particle_runs)] {
                        let p = against_chain(&chain, &start, g, &key(runs));
                        assert!(p > 1e-3, "{name} law {li} {mutation:?} g = {g}: p = {p}");
                    }
                }
                let p = chi_square_two_sample(&key(&graph_runs), &key(&particle_runs), 5).p_value;
                assert!(p > 1e-3, "graph vs particles law {li} {mutation:?} g = {g}: p = {p}");
            }
        }
    }
}

#[test]
fn ancestral_process_matches_its_exact_chain() {
    let mu = SeedBankLaw::uniform(2);
    let law = CanningsLaw::wright_fisher(3);
    let chain = ancestral_matrix::<f64>(3, &mu, &[2, 1]).unwrap();
    let runs = map_replicates(Execution::Parallel, REPS, |r| {
        let mut rng = rng::replicate(2, &[], r);
        let graph = DiGraphWindow::random_span(law.clone(), mu.clone(), MutationRates::none(), rng.random(), -8, 0);
        let sample = SampleConfig::new(vec![2, 1]).without_repetition().draw(3, &mut rng).unwrap();
        run_ancestral(&graph, &sample, 4).unwrap()
    });
    for g in 1..=4 {
        let obs: Vec<Vec<usize>> = runs.iter().map(|run| run[g].a.clone()).collect();
        let p = against_chain(&chain, &[2, 1], g, &obs);
        assert!(p > 1e-3, "g = {g}: p = {p}");
    }
}

#[test]
fn forward_moments_match_matrix_powers() {
    let law = CanningsLaw::wright_fisher(4);
    let mu = SeedBankLaw::uniform(2);
    let mutation = MutationRates::new(0.05, 0.1).unwrap();
    let k0 = [3u32, 1];
    let g = 3;
    let chain = forward_matrix::<f64>(&law, &mu, &mutation).unwrap();
    let dist = chain.distributions(&[3, 1], g).unwrap().pop().unwrap();
    let f = |k: &[usize]| (k[0] as f64 / 4.0).powi(2) * (k[1] as f64 / 4.0);
    let exact = chain.expectation(&dist, f);
    let vals = map_replicates(Execution::Parallel, 40_000, |r| {
        let graph = DiGraphWindow::random_span(law.clone(), mu.clone(), mutation, rng::replicate(3, &[], r).random(), 1, g as i64);
        let run = run_frequency_counts(&graph, &k0, g).unwrap();
        let k: Vec<usize> = run[g].k.iter().map(|&x| x as usize).collect();
        f(&k)
    });
    let est = MeanEstimate::from_samples(&vals);
    assert!(est.within(exact, 3.0), "{est:?} vs {exact}");
}

#[test]
fn single_lineage_dual_means() {
    let cases = [
        (CanningsLaw::wright_fisher(10), SeedBankLaw::uniform(3), vec![0.5, 0.2, 0.9], 1, 4),
        (CanningsLaw::new(10, LawKind::SymmetricDirichlet { alpha: 0.7 }).unwrap(), SeedBankLaw::new(vec![0.3, 0.7]).unwrap(), vec![0.1, 0.8], 2, 5),
    ];
    for (law, mu, x, i, g) in cases {
        let check = single_dual_mean_check(&law, &mu, &x, i, g, 20_000, 4, Execution::Parallel).unwrap();
        assert!(check.mc.within(check.dual, 3.0), "{check:?}");
    }
}

#[test]
fn weights_are_exchangeable() {
    for law in [
        CanningsLaw::new(6, LawKind::SymmetricDirichlet { alpha: 0.5 }).unwrap(),
        CanningsLaw::new(6, LawKind::EldonWagner { psi: 0.4, eps: 0.3 }).unwrap(),
    ] {
        let draws = map_replicates(Execution::Parallel, 200_000, |r| law.sample_weights(&mut rng::replicate(5, &[], r)).to_vec());
        let first: Vec<f64> = draws.iter().step_by(2).map(|w| w[0]).collect();
        let last: Vec<f64> = draws.iter().skip(1).step_by(2).map(|w| w[5]).collect();
        let (_, p) = ks_two_sample(&first, &last);
        assert!(p > 0.01, "{law:?}: p = {p}");
    }
}

#[test]
fn edge_gaps_follow_the_seed_bank_law() {
    for (mu, seed) in [(SeedBankLaw::uniform(2), 6), (SeedBankLaw::new(vec![0.5, 0.2, 0.3]).unwrap(), 7)] {
        let graph = DiGraphWindow::random_span(CanningsLaw::wright_fisher(100), mu.clone(), MutationRates::none(), seed, -999, 0);
        let mut counts = vec![0u64; mu.m()];
        for (v, e) in graph.edge_list() {
            let EdgeTarget::Parent(p) = e else { panic!("sink without mutation") };
            counts[(v.generation - p.generation) as usize - 1] += 1;
        }
        assert_eq!(counts.iter().sum::<u64>(), 100_000);
        let chi = chi_square_gof(&counts, mu.probs(), 5.0);
        assert!(chi.p_value > 0.01, "{chi:?}");
        if mu.m() == 2 {
            let est = MeanEstimate::from_samples(&(0..100_000).map(|i| if (i as u64) < counts[0] { 1.0 } else { 0.0 }).collect::<Vec<_>>());
            assert!(est.within(0.5, 3.0), "{est:?}");
        }
    }
}

#[test]
fn wright_fisher_parents_are_uniform() {
    let graph = DiGraphWindow::random_span(CanningsLaw::wright_fisher(8), SeedBankLaw::delta1(), MutationRates::none(), 8, -4000, 0);
    let mut counts = vec![0u64; 8];
    for (v, e) in graph.edge_list() {
        let EdgeTarget::Parent(p) = e else { unreachable!() };
        assert_eq!(p.generation, v.generation - 1);
        counts[p.label as usize - 1] += 1;
    }
    assert!(chi_square_gof(&counts, &[0.125; 8], 5.0).p_value > 0.01);
    assert_eq!(graph.edge(Vertex::new(0, 1)).unwrap(), graph.edge(Vertex::new(0, 1)).unwrap());
}
