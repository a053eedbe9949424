use seedbank::coalescent::*;
use seedbank::par::{map_replicates, Execution};
use seedbank::rng;
use seedbank::scalar::binom_f64;
use seedbank::stats::{chi_square_gof, MeanEstimate};

#[test]
fn transform_identity_and_point_mass() {
    let law = CoalescentLaw::lambda(LambdaMeasure::Beta { a: 0.5, b: 1.5 });
    assert_eq!(seed_bank_transform(&law, 1.0).unwrap(), law);
    let pm = CoalescentLaw::lambda(LambdaMeasure::PointMass { psi: 0.6, mass: 1.0 });
    let t = seed_bank_transform(&pm, 2.0).unwrap();
    assert_eq!(t.base, BaseLaw::Lambda { measure: LambdaMeasure::PointMass { psi: 0.3, mass: 0.25 } });
    assert_eq!(t.beta, 1.0);
}

#[test]
fn beta_transform_density_shape() {
    let (alpha, beta) = (1.5, 2.0);
    let m = LambdaMeasure::Beta { a: 2.0 - alpha, b: alpha }.transformed(beta);
    for &y in &[0.01, 0.1, 0.25, 0.4, 0.49] {
        let ours = m.density(y).unwrap();
        assert!((ours * beta - beta_transform_density(alpha, beta, y)).abs() < 1e-12 * ours.max(1.0), "{y}");
    }
    assert_eq!(m.density(0.6), Some(0.0));
    assert_eq!(beta_transform_density(alpha, beta, 0.6), 0.0);
}

#[test]
fn delayed_kingman_pair_waits_beta_squared() {
    let law = CoalescentLaw::kingman().with_beta(2.0);
    let sim = BlockCountingSimulator::new(&law, 2).unwrap();
    let times = map_replicates(Execution::Parallel, 100_000, |r| sim.simulate(2, &mut rng::replicate(3, &[1], r)).first_jump().unwrap());
    let est = MeanEstimate::from_samples(&times);
    assert!(est.within(4.0, 3.0), "{est:?}");
}

#[test]
fn freezing_competes_with_coalescence() {
    let u = 0.35;
    let law = CoalescentLaw::kingman().with_freezing(u);
    let sim = BlockCountingSimulator::new(&law, 2).unwrap();
    let hits = map_replicates(Execution::Parallel, 100_000, |r| {
        let path = sim.simulate(2, &mut rng::replicate(4, &[1], r));
        if path.points[1].d == 0 { 1.0 } else { 0.0 }
    });
    let est = MeanEstimate::from_samples(&hits);
    assert!(est.within(1.0 / (1.0 + 2.0 * u), 3.0), "{est:?}");
}

#[test]
fn paths_are_well_formed() {
    let law = CoalescentLaw::lambda(LambdaMeasure::Uniform01).with_beta(1.5).with_freezing(0.2);
    let sim = BlockCountingSimulator::new(&law, 12).unwrap();
    for r in 0..200 {
        let p = sim.simulate(12, &mut rng::replicate(5, &[], r));
        assert_eq!(p.points.last().unwrap().m, 0);
        for w in p.points.windows(2) {
            assert!(w[1].time > w[0].time);
            assert!(w[1].m < w[0].m);
            if w[1].d > w[0].d {
                assert_eq!((w[1].d - w[0].d, w[0].m - w[1].m), (1, 1));
            }
        }
    }
}

#[test]
fn kingman_sfs_three_leaves() {
    let sim = BlockCountingSimulator::new(&CoalescentLaw::kingman(), 3).unwrap();
    let sfs = map_replicates(Execution::Parallel, 100_000, |r| sim.simulate_sfs(3, &mut rng::replicate(8, &[], r)).unwrap().0);
    let l1 = MeanEstimate::from_samples(&sfs.iter().map(|s| s.lengths[0]).collect::<Vec<_>>());
    let l2 = MeanEstimate::from_samples(&sfs.iter().map(|s| s.lengths[1]).collect::<Vec<_>>());
    assert!(l1.within(2.0, 3.0) && l2.within(1.0, 3.0), "{l1:?} {l2:?}");
}

#[test]
fn sfs_conserves_lineages() {
    for law in [
        CoalescentLaw::kingman().with_beta(2.0),
        CoalescentLaw::lambda(LambdaMeasure::Uniform01).with_beta(3.0),
        CoalescentLaw::finite_xi(vec![XiAtom { weight: 1.0, boxes: vec![0.4, 0.3] }]).with_beta(1.5),
    ] {
        let sim = BlockCountingSimulator::new(&law, 15).unwrap();
        for r in 0..100 {
            let (sfs, path) = sim.simulate_sfs(15, &mut rng::replicate(7, &[], r)).unwrap();
            assert_eq!(path.merged_blocks(), 14);
            let weighted: f64 = sfs.lengths.iter().enumerate().map(|(i, l)| (i + 1) as f64 * l).sum();
            assert!(weighted <= 15.0 * sfs.height + 1e-9);
        }
    }
}

#[test]
fn thinned_point_mass_matches_pushforward_rates() {
    let (psi, beta, n) = (0.6, 2.0, 5usize);
    let law = CoalescentLaw::lambda(LambdaMeasure::PointMass { psi, mass: 1.0 }).with_beta(beta);
    let sim = BlockCountingSimulator::new(&law, n).unwrap();
    let jumps = map_replicates(Execution::Parallel, 100_000, |r| {
        let p = sim.simulate(n, &mut rng::replicate(8, &[], r));
        (p.points[0].m - p.points[1].m + 1, p.points[1].time)
    });
    let pushed = lambda_collision_rates(n, &LambdaMeasure::PointMass { psi: psi / beta, mass: 1.0 / (beta * beta) }).unwrap();
    let total = pushed.total(n);
    let probs: Vec<f64> = (2..=n).map(|k| binom_f64(n, k) * pushed.get(n, k) / total).collect();
    let mut counts = vec![0u64; n - 1];
    for (k, _) in &jumps {
        counts[k - 2] += 1;
    }
    let chi = chi_square_gof(&counts, &probs, 5.0);
    assert!(chi.p_value > 0.01, "{chi:?}");
    let wait = MeanEstimate::from_samples(&jumps.iter().map(|j| j.1).collect::<Vec<_>>());
    assert!(wait.within(1.0 / total, 3.0));
}

#[test]
fn bolthausen_sznitman_ratios_vary_with_leaf_count() {
    let n = 20;
    let reps = 4_000;
    let mean_sfs = |beta: f64| {
        let sim = BlockCountingSimulator::new(&CoalescentLaw::lambda(LambdaMeasure::Uniform01).with_beta(beta), n).unwrap();
        let all = map_replicates(Execution::Parallel, reps, |r| sim.simulate_sfs(n, &mut rng::replicate(9, &[beta as u64], r)).unwrap().0);
        (0..n - 1).map(|i| all.iter().map(|s| s.lengths[i]).sum::<f64>() / reps as f64).collect::<Vec<f64>>()
    };
    let base = mean_sfs(1.0);
    for beta in [2.0, 3.0] {
        let ratios: Vec<f64> = mean_sfs(beta).iter().zip(&base).map(|(a, b)| a / b).collect();
        let (lo, hi) = ratios[..10].iter().fold((f64::MAX, f64::MIN), |(lo, hi), r| (lo.min(*r), hi.max(*r)));
        assert!(hi / lo > 1.2, "{ratios:?}");
    }
}

#[test]
fn dual_moment_limits_and_monotonicity() {
    let law = CoalescentLaw::kingman();
    assert_eq!(dual_moment(&law, 5, 0.5, 0.0).unwrap(), 0.03125);
    assert!((dual_moment(&law, 5, 0.3, 60.0).unwrap() - 0.3).abs() < 1e-8);
    let mut prev = 0.0;
    for i in 0..40 {
        let v = dual_moment(&law, 6, 0.45, i as f64 * 0.1).unwrap();
        assert!(v >= prev - 1e-12);
        prev = v;
    }
}

#[test]
fn dual_moment_matches_monte_carlo_for_xi_and_freezing() {
    let law = CoalescentLaw::finite_xi(vec![XiAtom { weight: 0.5, boxes: vec![0.5, 0.25] }]).with_beta(1.5).with_freezing(0.3);
    let (n, x0, w, t) = (4, 0.6, 0.25, 0.8);
    let exact = dual_moment_weighted(&law, n, x0, w, t).unwrap();
    let sim = BlockCountingSimulator::new(&law, n).unwrap();
    let vals = map_replicates(Execution::Parallel, 60_000, |r| {
        let (m, d) = sim.simulate(n, &mut rng::replicate(10, &[], r)).state_at(t);
        x0.powi(m as i32) * w.powi(d as i32)
    });
    let est = MeanEstimate::from_samples(&vals);
    assert!(est.within(exact, 3.5), "{est:?} vs {exact}");
}

#[test]
fn pushforward_and_thinning_give_the_same_block_rates() {
    let base = CoalescentLaw::finite_xi(vec![XiAtom { weight: 1.0, boxes: vec![0.5, 0.3] }]);
    let thinned = BlockCountingSimulator::new(&base.clone().with_beta(2.0), 6).unwrap();
    let pushed = BlockCountingSimulator::new(&seed_bank_transform(&base, 2.0).unwrap(), 6).unwrap();
    for b in 2..=6 {
        let r1 = thinned.merge_rates(b);
        let r2 = pushed.merge_rates(b);
        for j in 0..b {
            assert!((r1[j] - r2[j]).abs() < 1e-12, "{b} {j}");
        }
    }
}
