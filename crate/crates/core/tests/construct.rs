mod common;

use common::{gaussian, rng};
use netsys::construct::{
    construct_controllable, construct_observable, design_observing_matrix, kappa_bound, partition_outputs,
    ConstructOptions, SubsystemSeed,
};
use netsys::criteria::{full_analysis, theorem1_sufficient_obs, Mode, Overall};
use netsys::ensemble::{generate_member, EnsembleSpec, Span};
use netsys::lifted::{lift, pbh_controllable, pbh_observable};
use netsys::linalg::{sigma_max_real, Mat};
use netsys::model::{assemble_global_blocks, check_well_posedness};
use netsys::spectra::{zero_groups, Side};
use netsys::{NetError, Status, SubsystemRealization, Tolerances};

fn stms(seed: u64, count: usize, n: usize) -> Vec<Mat> {
    let mut r = rng(seed);
    (0..count).map(|_| gaussian(&mut r, n, n) / (n as f64).sqrt()).collect()
}

fn seeds(count: usize, budget: usize, internal: usize) -> Vec<SubsystemSeed> {
    (0..count)
        .map(|_| SubsystemSeed { budget: Some(budget), internal: Some(internal), ..Default::default() })
        .collect()
}

/// Seeds for a ring where every subsystem passes `internal` signals on and
/// the received signals reach both the state and the external outputs.
fn coupled_seeds(seed: u64, count: usize, n_x: usize, budget: usize, internal: usize) -> Vec<SubsystemSeed> {
    let mut r = rng(seed);
    (0..count)
        .map(|_| SubsystemSeed {
            budget: Some(budget),
            internal: Some(internal),
            a_ts: Some(gaussian(&mut r, n_x, internal)),
            c_s: Some(gaussian(&mut r, budget - internal, internal)),
            ..Default::default()
        })
        .collect()
}

#[test]
fn bound_scaling_makes_the_loop_contractive() {
    let tol = Tolerances::default();
    let mut checked = 0;
    let spec = EnsembleSpec { subsystems: Span::new(3, 3), n_x: Span::new(1, 4), fcnr_obs: true, ..Default::default() };
    for k in 0..60 {
        let sys = generate_member(&EnsembleSpec { seed: k, ..spec.clone() }, 0).unwrap();
        let Ok(groups) = zero_groups(&sys, Side::Observability, &tol) else { continue };
        let bounds = kappa_bound(&sys, &groups).unwrap();
        let subs: Vec<SubsystemRealization> = sys
            .subsystems()
            .iter()
            .zip(&bounds)
            .map(|(s, b)| {
                let f = b.pick(0.9);
                SubsystemRealization { a_st: &s.a_st * f, a_ss: &s.a_ss * f, ..s.clone() }
            })
            .collect();
        let scaled = sys.with_subsystems(subs);
        let g = assemble_global_blocks(&scaled);
        assert!(sigma_max_real(&(scaled.phi() * &g.a_ss)) < 1.0, "member {k}");
        assert!(check_well_posedness(&scaled, &tol).well_posed);
        checked += 1;
    }
    assert!(checked > 40, "{checked}");
}

#[test]
fn ring_with_one_output_converges_to_observable() {
    let tol = Tolerances::default();
    for k in 0..20 {
        let a = stms(k, 3, 3);
        let opts = ConstructOptions { kappa: 0.5, seed: k, ..Default::default() };
        let (sys, trace) = construct_observable(&a, &seeds(3, 1, 0), &opts, &tol).unwrap();
        assert!(trace.converged, "trial {k}");
        assert_eq!(trace.iterations.last().unwrap().status, Status::CertifiedYes);
        let l = lift(&sys, &tol).unwrap();
        assert_eq!(pbh_observable(&l.a, &l.c, &tol).status, Status::CertifiedYes, "trial {k}");
        // The default split keeps the single output external.
        for s in sys.subsystems() {
            assert_eq!((s.c_t.nrows(), s.a_st.nrows()), (1, 0));
        }
    }
}

#[test]
fn bound_mode_satisfies_the_sufficient_test() {
    let tol = Tolerances::default();
    for k in 0..20 {
        let a = stms(100 + k, 3, 3);
        let opts = ConstructOptions { use_kappa_bound: true, seed: k, ..Default::default() };
        let (sys, trace) = construct_observable(&a, &coupled_seeds(k, 3, 3, 2, 1), &opts, &tol).unwrap();
        assert!(trace.converged, "trial {k}");
        assert!(trace.kappa_bound.is_some());
        assert_eq!(trace.iterations.len(), 2, "one scaling step");
        let res = theorem1_sufficient_obs(&sys, &tol).unwrap();
        assert_eq!(res.overall, Overall::Pass, "trial {k}: {:?}", res.reason);
        assert!(check_well_posedness(&sys, &tol).well_posed);
    }
}

#[test]
fn dual_construction_is_controllable() {
    let tol = Tolerances::default();
    for k in 0..20 {
        let a = stms(200 + k, 3, 2 + (k as usize % 3));
        let opts = ConstructOptions { seed: k, ..Default::default() };
        let (sys, trace) = construct_controllable(&a, &seeds(3, 2, 1), &opts, &tol).unwrap();
        assert!(trace.converged, "trial {k}");
        let l = lift(&sys, &tol).unwrap();
        assert_eq!(pbh_controllable(&l.a, &l.b, &tol).status, Status::CertifiedYes, "trial {k}");
        for s in sys.subsystems() {
            assert_eq!(s.b_t.ncols() + s.a_ts.ncols(), 2);
        }
    }
}

#[test]
fn trace_factors_never_grow() {
    let tol = Tolerances::default();
    for k in 0..20 {
        let a = stms(300 + k, 4, 2);
        for use_kappa_bound in [false, true] {
            let opts = ConstructOptions { kappa: 0.8, use_kappa_bound, seed: k, ..Default::default() };
            let (_, trace) = construct_observable(&a, &coupled_seeds(k, 4, 2, 3, 1), &opts, &tol).unwrap();
            for w in trace.iterations.windows(2) {
                for (before, after) in w[0].kappa.iter().zip(&w[1].kappa) {
                    assert!(after <= before && *after > 0.0);
                }
            }
            assert!(trace.iterations[0].kappa.iter().all(|&f| f == 1.0));
        }
    }
}

#[test]
fn exhausted_iterations_are_reported() {
    let tol = Tolerances::default();
    // Identity STMs need as many outputs as states; with one output the
    // design step refuses before any scaling happens.
    let a = vec![Mat::identity(2, 2); 2];
    let err = construct_observable(&a, &seeds(2, 1, 0), &ConstructOptions::default(), &tol).unwrap_err();
    assert!(matches!(err, NetError::BudgetBelowPmax { subsystem: 0, budget: 1, p_max: 2 }));
    let opts = ConstructOptions { max_iters: 0, ..Default::default() };
    let (_, trace) = construct_observable(&stms(7, 3, 3), &seeds(3, 1, 1), &opts, &tol).unwrap();
    assert_eq!(trace.iterations.len(), 1);
    assert_eq!(trace.converged, trace.iterations[0].status == Status::CertifiedYes);
}

#[test]
fn designed_output_maps_are_observable_and_split_in_order() {
    let tol = Tolerances::default();
    let mut r = rng(40);
    for k in 0..30 {
        let a = &stms(400 + k, 1, 4)[0];
        let c = design_observing_matrix(a, 2, &mut r, &tol).unwrap();
        assert_eq!(c.shape(), (2, 4));
        assert_eq!(pbh_observable(a, &c, &tol).status, Status::CertifiedYes);
        let (ct, ast) = partition_outputs(&c, 1, 1).unwrap();
        assert_eq!(ct.row(0), c.row(0));
        assert_eq!(ast.row(0), c.row(1));
    }
    assert!(partition_outputs(&Mat::zeros(2, 3), 2, 1).is_err());
}

#[test]
fn invalid_kappa_is_rejected() {
    let tol = Tolerances::default();
    for kappa in [0.0, 1.0, -0.5, 1.5] {
        let opts = ConstructOptions { kappa, ..Default::default() };
        assert!(matches!(
            construct_observable(&stms(1, 2, 2), &[], &opts, &tol),
            Err(NetError::InvalidArgument(_))
        ));
    }
}

#[test]
fn converged_systems_pass_full_analysis() {
    let tol = Tolerances::default();
    for k in 0..15 {
        let a = stms(500 + k, 3, 3);
        let opts = ConstructOptions { seed: k, ..Default::default() };
        let (sys, trace) = construct_observable(&a, &coupled_seeds(k, 3, 3, 2, 1), &opts, &tol).unwrap();
        assert!(trace.converged);
        let rep = full_analysis(&sys, Mode::Observability, &tol).unwrap();
        assert_eq!(rep.observability.unwrap().status, Status::CertifiedYes, "trial {k}");
        assert!(rep.consistency_flags.is_empty(), "{:?}", rep.consistency_flags);
    }
}

#[test]
fn loop_gain_shrinks_strictly_while_scaling() {
    let tol = Tolerances::default();
    let mut scaled_runs = 0;
    for k in 0..30 {
        let a = stms(600 + k, 3, 2);
        let opts = ConstructOptions { kappa: 0.9, seed: k, ..Default::default() };
        let (_, trace) = construct_observable(&a, &coupled_seeds(k, 3, 2, 2, 1), &opts, &tol).unwrap();
        assert!(trace.converged, "trial {k}");
        for w in trace.iterations.windows(2) {
            assert!(w[1].kappa.iter().zip(&w[0].kappa).all(|(after, before)| after < before));
        }
        scaled_runs += (trace.iterations.len() > 1) as usize;
    }
    assert!(scaled_runs > 0);
}

#[test]
fn every_output_map_below_pmax_fails() {
    let tol = Tolerances::default();
    let mut r = rng(41);
    // p_max = 2 at 0.6 in a 3x3 matrix.
    let q = common::orthogonal(&mut r, 3);
    let a = &q * Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![0.6, 0.6, -0.1])) * q.transpose();
    for _ in 0..200 {
        let c = gaussian(&mut r, 1, 3);
        assert_ne!(pbh_observable(&a, &c, &tol).status, Status::CertifiedYes);
    }
    assert!(matches!(
        design_observing_matrix(&a, 1, &mut r, &tol),
        Err(NetError::BudgetBelowPmax { budget: 1, p_max: 2, .. })
    ));
}

#[test]
fn design_at_pmax_clears_the_rank_tolerance() {
    let tol = Tolerances::default();
    let mut r = rng(42);
    for k in 0..500u64 {
        let n = 1 + (k as usize % 5);
        let a = gaussian(&mut r, n, n);
        let p = netsys::lifted::max_geometric_multiplicity(&a, &tol).p_max;
        let c = design_observing_matrix(&a, p, &mut r, &tol).unwrap();
        let v = pbh_observable(&a, &c, &tol);
        assert!(v.evidence.iter().all(|w| w.margin > w.tol), "trial {k}");
    }
}
