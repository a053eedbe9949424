use seedbank::duality::*;
use seedbank::model::{CanningsLaw, LawKind, MutationRates, PaintboxEntry, SeedBankLaw};
use seedbank::par::Execution;
use seedbank::scalar::{Rational, Scalar};

fn zero() -> Rational {
    <Rational as Scalar>::zero()
}

#[test]
fn moment_duality_wright_fisher_two_slots() {
    let law = CanningsLaw::wright_fisher(4);
    let mu = SeedBankLaw::uniform(2);
    let rows = moment_duality_check::<f64>(&law, &mu, &MutationRates::none(), &[1, 1], &[0.75, 0.25], 2).unwrap();
    assert!(rows[2].diff < 1e-10, "{rows:?}");
    let exact = moment_duality_check::<Rational>(&law, &mu, &MutationRates::none(), &[1, 1], &[0.75, 0.25], 6).unwrap();
    assert!(exact.iter().all(|r| r.diff == zero()));
}

#[test]
fn moment_duality_with_mutation() {
    let law = CanningsLaw::wright_fisher(3);
    let mu = SeedBankLaw::delta1();
    let mutation = MutationRates::new(0.1, 0.1).unwrap();
    let rows = moment_duality_check::<f64>(&law, &mu, &mutation, &[2], &[2.0 / 3.0], 3).unwrap();
    assert!(rows[3].diff < 1e-10, "{rows:?}");
    let exact = moment_duality_check::<Rational>(&law, &mu, &mutation, &[2], &[2.0 / 3.0], 3).unwrap();
    assert!(exact.iter().all(|r| r.diff == zero()));
}

#[test]
fn frozen_lineages_carry_the_type_a_mutation_probability() {
    // unequal rates separate u2/(u1+u2) from u1/(u1+u2)
    let law = CanningsLaw::wright_fisher(3);
    let mu = SeedBankLaw::new(vec![0.25, 0.75]).unwrap();
    let mutation = MutationRates::new(0.125, 0.375).unwrap();
    let exact = moment_duality_check::<Rational>(&law, &mu, &mutation, &[2, 1], &[1.0 / 3.0, 1.0], 4).unwrap();
    assert!(exact.iter().all(|r| r.diff == zero()), "{exact:?}");
    // N = 1: X_1 is type A with probability u2 + u0 x
    let one = CanningsLaw::wright_fisher(1);
    let rows = moment_duality_check::<f64>(&one, &SeedBankLaw::delta1(), &mutation, &[1], &[1.0], 1).unwrap();
    assert!((rows[1].lhs - (0.375 + 0.5)).abs() < 1e-15);
    assert!((rows[1].rhs - rows[1].lhs).abs() < 1e-15);
}

#[test]
fn rational_rows_are_stochastic() {
    let law = CanningsLaw::wright_fisher(4);
    let mu = SeedBankLaw::uniform(2);
    let b = backward_matrix::<Rational>(&law, &mu, &MutationRates::new(0.25, 0.125).unwrap(), 4).unwrap();
    let f = forward_matrix::<Rational>(&law, &mu, &MutationRates::new(0.25, 0.125).unwrap()).unwrap();
    for i in 0..b.len() {
        assert_eq!(b.row_sum(i), <Rational as Scalar>::one());
    }
    for i in 0..f.len() {
        assert_eq!(f.row_sum(i), <Rational as Scalar>::one());
    }
}

#[test]
fn no_mutation_never_freezes() {
    let law = CanningsLaw::wright_fisher(3);
    let mu = SeedBankLaw::uniform(2);
    let b = backward_matrix::<f64>(&law, &mu, &MutationRates::none(), 4).unwrap();
    for (i, s) in b.states().iter().enumerate() {
        for (j, _) in b.row(i) {
            assert_eq!(b.states()[*j][2], s[2]);
        }
    }
}

#[test]
fn forward_rows_shift_the_window() {
    let law = CanningsLaw::wright_fisher(3);
    let f = forward_matrix::<f64>(&law, &SeedBankLaw::uniform(2), &MutationRates::new(0.1, 0.2).unwrap()).unwrap();
    for (i, s) in f.states().iter().enumerate() {
        for (j, _) in f.row(i) {
            assert_eq!(f.states()[*j][1], s[0]);
        }
    }
    let all_a = forward_matrix::<f64>(&law, &SeedBankLaw::uniform(2), &MutationRates::new(0.0, 0.2).unwrap()).unwrap();
    let i = all_a.index_of(&[3, 3]).unwrap();
    assert_eq!(all_a.row(i).len(), 1);
    assert_eq!(all_a.entry(&[3, 3], &[3, 3]), 1.0);
}

#[test]
fn sampling_duality_cases() {
    let law = CanningsLaw::wright_fisher(3);
    let rows = sampling_duality_check::<f64>(&law, &SeedBankLaw::delta1(), &[2], &[2.0 / 3.0], 1).unwrap();
    assert!(rows[0].diff < 1e-15 && rows[1].diff < 1e-10, "{rows:?}");
    let law = CanningsLaw::wright_fisher(4);
    let mu = SeedBankLaw::new(vec![0.25, 0.75]).unwrap();
    let exact = sampling_duality_check::<Rational>(&law, &mu, &[2, 1], &[0.75, 0.5], 3).unwrap();
    assert!(exact.iter().all(|r| r.diff == zero()), "{exact:?}");
    let empty = sampling_duality_check::<f64>(&law, &mu, &[0, 0], &[0.75, 0.5], 3).unwrap();
    assert!(empty.iter().all(|r| r.lhs == 1.0 && r.rhs == 1.0));
}

#[test]
fn h0_by_direct_enumeration() {
    // two distinct individuals of generation 1, parents uniform among 3 in
    // generation 0 where labels 1 and 2 are type A
    let mu = SeedBankLaw::delta1();
    assert_eq!(h0::<Rational>(&[2], &[2], 3, &mu), Rational::ratio(4, 9));
    // one mover, one already in slot 1
    let mu2 = SeedBankLaw::uniform(2);
    let got = h0::<Rational>(&[1, 1], &[2, 1], 3, &mu2);
    // slot-2 member lands in slot 1: 2/3; mover goes to slot 1 (2/3) or slot 2 (1/3)
    let want = Rational::ratio(2, 3) * (Rational::ratio(1, 2) * Rational::ratio(2, 3) + Rational::ratio(1, 2) * Rational::ratio(1, 3));
    assert_eq!(got, want);
}

#[test]
fn paintbox_single_slot_duality_uses_the_exact_ancestor_law() {
    let law = CanningsLaw::new(
        3,
        LawKind::ExplicitPaintbox {
            entries: vec![
                PaintboxEntry { prob: 0.5, weights: vec![0.5, 0.25, 0.25] },
                PaintboxEntry { prob: 0.5, weights: vec![1.0 / 3.0; 3] },
            ],
        },
    )
    .unwrap();
    let f = forward_matrix::<f64>(&law, &SeedBankLaw::delta1(), &MutationRates::none()).unwrap();
    assert!(f.max_row_defect() < 1e-12);
    let rows = moment_duality_check::<f64>(&law, &SeedBankLaw::delta1(), &MutationRates::none(), &[1], &[2.0 / 3.0], 5).unwrap();
    assert!(rows.iter().all(|r| r.diff < 1e-12), "{rows:?}");
    assert!(forward_matrix::<f64>(&law, &SeedBankLaw::uniform(2), &MutationRates::none()).is_err());
}

#[test]
fn monte_carlo_sides_agree_at_larger_size() {
    let law = CanningsLaw::wright_fisher(50);
    let mu = SeedBankLaw::uniform(2);
    let mutation = MutationRates::new(0.02, 0.02).unwrap();
    let r = moment_duality_mc(&law, &mu, &mutation, &[2, 1], &[0.5, 0.3], 8, 20_000, 11, Execution::Parallel).unwrap();
    assert!(r.z_score() < 4.0, "{r:?}");
}
