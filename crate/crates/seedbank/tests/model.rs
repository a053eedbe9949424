use rand::Rng;
use seedbank::model::*;
use seedbank::par::{map_replicates, Execution};
use seedbank::rng;
use seedbank::stats::MeanEstimate;

#[test]
fn dirichlet_pair_probability_matches_parent_resampling() {
    let law = CanningsLaw::new(50, LawKind::SymmetricDirichlet { alpha: 1.0 }).unwrap();
    let stats = coalescence_probs(&law, 1_000_000, 1);
    // two children pick parents from the same weight vector
    let hits = map_replicates(Execution::Parallel, 1_000_000, |r| {
        let mut g = rng::replicate(2, &[], r);
        let w = law.sample_weights(&mut g);
        if w.sample_label(&mut g) == w.sample_label(&mut g) { 1.0 } else { 0.0 }
    });
    let brute = MeanEstimate::from_samples(&hits);
    let se = (brute.stderr.powi(2) + stats.estimator_stderr.powi(2)).sqrt();
    assert!((brute.mean - stats.c).abs() < 3.0 * se, "{brute:?} vs {stats:?}");
    let (c, _) = law.exact_c_d().unwrap();
    assert!((stats.c - c).abs() < 3.0 * stats.estimator_stderr, "{stats:?} vs {c}");
}

#[test]
fn eldon_wagner_parents_concentrate() {
    let law = CanningsLaw::new(20, LawKind::EldonWagner { psi: 0.5, eps: 0.2 }).unwrap();
    let (c, d) = law.exact_c_d().unwrap();
    let stats = coalescence_probs(&law, 400_000, 3);
    assert!((stats.c - c).abs() < 3.0 * stats.estimator_stderr);
    assert!((stats.d - d).abs() < 3.0 * stats.d_stderr);
}

#[test]
fn eldon_wagner_condition_report_flags_multiple_mergers() {
    let rep = check_limit_conditions(
        |n| (CanningsLaw::new(n, LawKind::EldonWagner { psi: 0.5, eps: 0.3 }).unwrap(), SeedBankLaw::delta1()),
        0.1,
        &[10, 100, 1000],
        10_000,
        4,
    )
    .unwrap();
    assert!(rep.d_ratio_change() > 0.5, "{rep:?}");
    assert!(rep.rows.last().unwrap().d_over_beta_c > 0.2);
}

#[test]
fn wright_fisher_condition_report() {
    let rep = check_limit_conditions(|n| (CanningsLaw::wright_fisher(n), SeedBankLaw::uniform(2)), 0.1, &[10, 100, 1000], 1, 0).unwrap();
    assert!(rep.rows.iter().all(|r| r.tau == 2));
    assert_eq!(rep.mixing_term, Trend::Decreasing);
    assert_eq!(rep.d_over_beta_c, Trend::Decreasing);
}

#[test]
fn mixing_time_is_the_first_quarter_crossing() {
    let mut g = rng::stream(5, &[]);
    for _ in 0..20 {
        let m = g.random_range(1..=5);
        let raw: Vec<f64> = (0..m).map(|_| g.random::<f64>() + 0.05).collect();
        let s: f64 = raw.iter().sum();
        let mu = SeedBankLaw::new(raw.iter().map(|x| x / s).collect()).unwrap();
        let tau = mixing_time(&mu).unwrap();
        // brute force: worst start over matrix powers
        let p = mu.transition_matrix::<f64>();
        let nu = stationary_law(&mu);
        let mut rows: Vec<Vec<f64>> = (0..m).map(|i| (0..m).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        let mut first = None;
        for t in 0..500 {
            let worst = rows.iter().map(|r| tv_distance(r, &nu)).fold(0.0, f64::max);
            if worst <= 0.25 {
                first = Some(t);
                break;
            }
            rows = rows.iter().map(|r| vec_mat(r, &p)).collect();
        }
        assert_eq!(Some(tau), first, "{mu:?}");
    }
}
