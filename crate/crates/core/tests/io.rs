mod common;

use proptest::prelude::*;

use netsys::io::{read_model, read_stms, write_model, write_stms};
use netsys::linalg::Mat;
use netsys::{NetError, NetworkedSystem};

fn same_bits(a: &Mat, b: &Mat) -> bool {
    a.shape() == b.shape() && a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits())
}

fn same_system(a: &NetworkedSystem, b: &NetworkedSystem) -> bool {
    same_bits(a.phi(), b.phi())
        && a.interconnection().strict_assumption3 == b.interconnection().strict_assumption3
        && a.subsystems().iter().zip(b.subsystems()).all(|(x, y)| {
            x.blocks().iter().zip(y.blocks()).all(|((_, p), (_, q))| same_bits(p, q))
        })
}

fn document_error(text: &str) -> String {
    match read_model(text) {
        Err(NetError::Document(msg)) => msg,
        other => panic!("expected a document error, got {other:?}"),
    }
}

#[test]
fn ensemble_members_round_trip_bit_exactly() {
    for seed in 0..50 {
        let sys = common::default_member(seed, 0);
        let text = write_model(&sys).unwrap();
        assert!(same_system(&sys, &read_model(&text).unwrap()), "seed {seed}");
    }
}

#[test]
fn empty_blocks_keep_their_shapes() {
    let sys = common::default_member(3, 0);
    let back = read_model(&write_model(&sys).unwrap()).unwrap();
    for (x, y) in sys.subsystems().iter().zip(back.subsystems()) {
        for ((name, p), (_, q)) in x.blocks().iter().zip(y.blocks()) {
            assert_eq!(p.shape(), q.shape(), "{name}");
        }
    }
}

#[test]
fn malformed_json_reports_position() {
    let msg = document_error("{\n  \"subsystems\": [\n    {\"A_TT\": [[0.5,]]}\n  ]\n}");
    assert!(msg.starts_with("line 3 column"), "{msg}");
    assert!(!msg.contains(" at line "), "position is reported once: {msg}");
}

#[test]
fn unknown_field_reports_path() {
    let msg = document_error(r#"{"subsystems": [{"A_TT": [[0.5]], "A_XX": [[1]]}]}"#);
    assert!(msg.contains("subsystems[0]"), "{msg}");
    assert!(msg.contains("A_XX"), "{msg}");
}

#[test]
fn ragged_rows_are_rejected() {
    let msg = document_error(r#"{"subsystems": [{"A_TT": [[0.5, 1.0], [2.0]]}]}"#);
    assert_eq!(msg, "subsystems[0].A_TT: row 2 has 1 entries, row 1 has 2");
}

#[test]
fn stm_documents() {
    let bare = read_stms("[[[0.5]], [[1, 0], [0, 2]]]").unwrap();
    assert_eq!(bare.stms.len(), 2);
    assert_eq!(bare.stms[1][(1, 1)], 2.0);
    let full = read_stms(r#"{"stms": [[[0.5]]], "budgets": [1], "internal": [0]}"#).unwrap();
    assert_eq!(full.budgets, Some(vec![1]));
    let from_model = read_stms(r#"{"subsystems": [{"A_TT": [[0.25]]}]}"#).unwrap();
    assert_eq!(from_model.stms[0][(0, 0)], 0.25);
    assert!(matches!(read_stms("[[[1, 2]]]"), Err(NetError::Document(m)) if m == "stms[0] is 1x2, expected square"));
    assert!(matches!(
        read_stms(r#"{"stms": [[[1]]], "budgets": [1, 2]}"#),
        Err(NetError::Document(m)) if m == "budgets has 2 entries for 1 matrices"
    ));
}

fn finite_f64() -> impl Strategy<Value = f64> {
    prop_oneof![
        any::<f64>().prop_filter("finite", |x| x.is_finite()),
        Just(f64::MAX),
        Just(f64::MIN),
        Just(f64::MIN_POSITIVE),
        Just(f64::EPSILON),
        Just(5e-324),
        Just(-5e-324),
        Just(0.1),
        Just(1.0 / 3.0),
        -1e3..1e3f64,
    ]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn stm_lists_round_trip_bit_exactly(n in 1usize..4, vals in prop::collection::vec(finite_f64(), 16)) {
        let m = Mat::from_fn(n, n, |i, j| vals[i * 4 + j]);
        let text = write_stms(std::slice::from_ref(&m)).unwrap();
        let back = read_stms(&text).unwrap();
        prop_assert!(same_bits(&m, &back.stms[0]), "{}", text);
    }

    #[test]
    fn models_round_trip_bit_exactly(seed in any::<u64>(), vals in prop::collection::vec(finite_f64(), 4)) {
        let sys = common::default_member(seed, 0);
        let mut subs = sys.subsystems().to_vec();
        let n = subs[0].a_tt.nrows();
        for (k, v) in vals.iter().enumerate() {
            subs[0].a_tt[(k % n, (k / n) % n)] = *v;
        }
        let sys = sys.with_subsystems(subs);
        let back = read_model(&write_model(&sys).unwrap()).unwrap();
        prop_assert!(same_system(&sys, &back));
    }
}
