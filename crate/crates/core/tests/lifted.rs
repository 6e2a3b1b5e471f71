mod common;

use proptest::prelude::*;

use common::{blkdiag, gaussian, member, orthogonal, rng};
use netsys::ensemble::planted_unobservable_ring;
use netsys::lifted::{
    lift, max_geometric_multiplicity, observability_singular_values, pbh_controllable, pbh_observable, verify_lemma3,
};
use netsys::model::assemble_global_blocks;
use netsys::{NetworkedSystem, Status, SubsystemRealization, Tolerances};
use netsys::linalg::Mat;

/// Solve the internal loop `v = Phi (A_ST x + A_SS v + B_S u)` by plain
/// fixed-point iteration and step the subsystems once.
fn step_by_iteration(sys: &NetworkedSystem, x: &Mat, u: &Mat) -> (Mat, Mat) {
    let g = assemble_global_blocks(sys);
    let phi = sys.phi();
    let mut v = Mat::zeros(phi.nrows(), 1);
    for _ in 0..5000 {
        let next = phi * (&g.a_st * x + &g.a_ss * &v + &g.b_s * u);
        let done = (&next - &v).norm() <= 1e-15 * next.norm().max(1.0);
        v = next;
        if done {
            break;
        }
    }
    (&g.a_tt * x + &g.a_ts * &v + &g.b_t * u, &g.c_t * x + &g.c_s * &v + &g.d * u)
}

#[test]
fn one_step_matches_fixed_point_iteration() {
    let tol = Tolerances::default();
    let mut r = rng(3);
    for k in 0..100 {
        let sys = member(k, 3);
        let l = lift(&sys, &tol).unwrap();
        let x = gaussian(&mut r, l.a.nrows(), 1);
        let u = gaussian(&mut r, l.b.ncols(), 1);
        let (xn, yn) = l.step(&x, &u);
        let (xo, yo) = step_by_iteration(&sys, &x, &u);
        assert!((&xn - &xo).norm() <= 1e-10 * xo.norm().max(1.0), "state mismatch on member {k}");
        assert!((&yn - &yo).norm() <= 1e-10 * yo.norm().max(1.0), "output mismatch on member {k}");
    }
}

/// Append a decoupled subsystem with one state at `mu` that no output sees.
fn with_hidden_mode(sys: &NetworkedSystem, mu: f64) -> NetworkedSystem {
    let mut subs = sys.subsystems().to_vec();
    let n_u = 1;
    subs.push(SubsystemRealization {
        a_tt: Mat::from_element(1, 1, mu),
        a_ts: Mat::zeros(1, 0),
        b_t: Mat::from_element(1, n_u, 1.0),
        a_st: Mat::zeros(0, 1),
        a_ss: Mat::zeros(0, 0),
        b_s: Mat::zeros(0, n_u),
        c_t: Mat::zeros(1, 1),
        c_s: Mat::zeros(1, 0),
        d: Mat::zeros(1, n_u),
    });
    NetworkedSystem::new(subs, sys.phi().clone(), sys.interconnection().strict_assumption3)
}

#[test]
fn hidden_mode_is_certified_unobservable_at_its_eigenvalue() {
    let tol = Tolerances::default();
    for k in 0..10 {
        let mu = 0.37 + 0.01 * k as f64;
        let sys = with_hidden_mode(&member(k, 3), mu);
        let v = verify_lemma3(&sys, &tol).unwrap();
        assert_eq!(v.status, Status::CertifiedNo, "member {k}: {}", v.notes);
        assert!(v.witnesses_no().iter().any(|w| (w.lambda.re - mu).abs() < 1e-8 && w.lambda.im.abs() < 1e-8));
    }
}

#[test]
fn lifted_rank_test_agrees_with_pbh() {
    let tol = Tolerances::default();
    let mut seen = [0usize; 2];
    for k in 0..200 {
        let sys = if k % 4 == 3 { planted_unobservable_ring(3, 2, k) } else { member(k, 3) };
        let l = lift(&sys, &tol).unwrap();
        let pbh = pbh_observable(&l.a, &l.c, &tol).status;
        let m = verify_lemma3(&sys, &tol).unwrap().status;
        if pbh == Status::Inconclusive || m == Status::Inconclusive {
            continue;
        }
        assert_eq!(pbh, m, "trial {k}");
        seen[(pbh == Status::CertifiedNo) as usize] += 1;
    }
    assert!(seen[0] > 20 && seen[1] > 20, "{seen:?}");
}

#[test]
fn observability_singular_values_of_diagonal_pair() {
    let a = Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 2.0]));
    let c = Mat::from_row_slice(1, 2, &[1.0, 1.0]);
    let s = observability_singular_values(&a, &c);
    let r5 = 5f64.sqrt();
    assert!((s[0] - (3.0 - r5) / 2.0).abs() < 1e-14);
    assert!((s[1] - (3.0 + r5) / 2.0).abs() < 1e-14);
}

#[test]
fn pbh_detects_repeated_eigenvalue_with_single_output() {
    let tol = Tolerances::default();
    // Two independent eigenvectors at 0.5 cannot both be seen by one output.
    let a = Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![0.5, 0.5, -0.2]));
    let c = Mat::from_row_slice(1, 3, &[1.0, 1.0, 1.0]);
    assert_eq!(pbh_observable(&a, &c, &tol).status, Status::CertifiedNo);
    let c2 = Mat::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
    assert_eq!(pbh_observable(&a, &c2, &tol).status, Status::CertifiedYes);
}

#[test]
fn block_diagonal_copy_doubles_geometric_multiplicity() {
    let tol = Tolerances::default();
    let mut r = rng(9);
    for _ in 0..20 {
        let q = orthogonal(&mut r, 3);
        let j = Mat::from_row_slice(3, 3, &[0.4, 1.0, 0.0, 0.0, 0.4, 0.0, 0.0, 0.0, -0.7]);
        let a = &q * j * q.transpose();
        let one = max_geometric_multiplicity(&a, &tol).p_max;
        let two = max_geometric_multiplicity(&blkdiag(&[&a, &a]), &tol).p_max;
        assert_eq!(one, 1);
        assert_eq!(two, 2);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn observability_is_dual_to_controllability(seed in any::<u64>(), n in 1usize..6, p in 1usize..3) {
        let tol = Tolerances::default();
        let mut r = rng(seed);
        let a = gaussian(&mut r, n, n);
        let c = gaussian(&mut r, p, n);
        let obs = pbh_observable(&a, &c, &tol);
        let ctrb = pbh_controllable(&a.transpose(), &c.transpose(), &tol);
        prop_assert_eq!(obs.status, ctrb.status);
    }

    #[test]
    fn pbh_verdict_survives_orthogonal_change_of_state(seed in any::<u64>()) {
        let tol = Tolerances::default();
        let mut r = rng(seed);
        let sys = if seed % 3 == 0 { planted_unobservable_ring(3, 2, seed) } else { member(seed, 3) };
        let l = lift(&sys, &tol).unwrap();
        let q = orthogonal(&mut r, l.a.nrows());
        let before = pbh_observable(&l.a, &l.c, &tol).status;
        let after = pbh_observable(&(q.transpose() * &l.a * &q), &(&l.c * &q), &tol).status;
        prop_assume!(before != Status::Inconclusive && after != Status::Inconclusive);
        prop_assert_eq!(before, after);
    }
}
