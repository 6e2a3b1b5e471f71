//! Subsystem-wise observability and controllability criteria, and the full
//! analysis that cross-checks them against the lifted oracle.

use serde::{Deserialize, Serialize};

use crate::error::{NetError, Result};
use crate::lifted::{lift, pbh_controllable, pbh_observable, verify_lemma3, Status, Verdict};
use crate::linalg::{hermitian_eigenvalues, hstack, vstack, C64};
use crate::model::{check_well_posedness, ensure_well_posed, NetworkedSystem, WellPosedness};
use crate::spectra::{fcnr, make_block, member_form, zero_groups, BlockTag, Side, ZeroGroup};
use crate::tolerance::Tolerances;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CriterionName {
    Lemma5,
    Thm1,
    Thm2Nec,
    Thm2Suf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Overall {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Definiteness {
    Positive,
    Negative,
    Indefinite,
}

/// One evaluated item: a subsystem PBH test, or one member of a zero group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub subsystem: usize,
    pub group: Option<usize>,
    /// `[re, im]` of the zero the member belongs to.
    pub lambda: Option<[f64; 2]>,
    /// Smallest eigenvalue of the tested form, or the smallest PBH margin.
    pub min: f64,
    /// Largest eigenvalue of the tested form, or the smallest PBH margin.
    pub max: f64,
    /// Margin a value must clear to count as strict.
    pub threshold: f64,
    pub sign: Option<Definiteness>,
    pub result: Overall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub name: CriterionName,
    pub outcomes: Vec<Outcome>,
    pub overall: Overall,
    pub reason: Option<String>,
    /// Verdict under the reading where each `(k, s)` may pick its own sign;
    /// only reported when it differs from `overall`.
    pub per_pair_overall: Option<Overall>,
}

impl CriterionResult {
    fn inconclusive(name: CriterionName, reason: String) -> Self {
        Self {
            name,
            outcomes: Vec::new(),
            overall: Overall::Inconclusive,
            reason: Some(reason),
            per_pair_overall: None,
        }
    }
}

fn combine(results: impl IntoIterator<Item = Overall>) -> Overall {
    let mut out = Overall::Pass;
    for r in results {
        match r {
            Overall::Fail => return Overall::Fail,
            Overall::Inconclusive => out = Overall::Inconclusive,
            Overall::Pass => {}
        }
    }
    out
}

fn pbh_outcome(subsystem: usize, v: &Verdict) -> Outcome {
    let worst = v
        .evidence
        .iter()
        .min_by(|a, b| (a.margin / a.tol.max(f64::MIN_POSITIVE)).total_cmp(&(b.margin / b.tol.max(f64::MIN_POSITIVE))));
    let (lambda, margin, thr) = match worst {
        Some(w) => (Some([w.lambda.re, w.lambda.im]), w.margin, w.tol),
        None => (None, f64::INFINITY, 0.0),
    };
    Outcome {
        subsystem,
        group: None,
        lambda,
        min: margin,
        max: margin,
        threshold: thr,
        sign: None,
        result: match v.status {
            Status::CertifiedYes => Overall::Pass,
            Status::CertifiedNo => Overall::Fail,
            Status::Inconclusive => Overall::Inconclusive,
        },
    }
}

fn necessary(name: CriterionName, system: &NetworkedSystem, tol: &Tolerances) -> CriterionResult {
    let outcomes: Vec<Outcome> = system
        .subsystems()
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let v = match name {
                CriterionName::Lemma5 => {
                    let c = vstack(&[&s.c_t, &s.a_st], s.a_tt.ncols());
                    pbh_observable(&s.a_tt, &c, tol)
                }
                _ => {
                    let b = hstack(&[&s.b_t, &s.a_ts], s.a_tt.nrows());
                    pbh_controllable(&s.a_tt, &b, tol)
                }
            };
            pbh_outcome(i, &v)
        })
        .collect();
    let overall = combine(outcomes.iter().map(|o| o.result));
    let reason = outcomes
        .iter()
        .find(|o| o.result == Overall::Fail)
        .map(|o| format!("subsystem {} fails the local rank test", o.subsystem + 1));
    CriterionResult {
        name,
        outcomes,
        overall,
        reason,
        per_pair_overall: None,
    }
}

/// `(A_TT(i), col{C_T(i), A_ST(i)})` observable for every `i`. Failure
/// certifies that the whole network is unobservable.
pub fn lemma5_necessary_obs(system: &NetworkedSystem, tol: &Tolerances) -> CriterionResult {
    necessary(CriterionName::Lemma5, system, tol)
}

/// `(A_TT(i), [B_T(i) A_TS(i)])` controllable for every `i`. Failure
/// certifies that no interconnection makes the network controllable.
pub fn theorem2_necessary_ctrb(system: &NetworkedSystem, tol: &Tolerances) -> CriterionResult {
    necessary(CriterionName::Thm2Nec, system, tol)
}

fn classify(ev: &[f64], eps: f64) -> Definiteness {
    let lo = ev.first().copied().unwrap_or(0.0);
    let hi = ev.last().copied().unwrap_or(0.0);
    if ev.is_empty() {
        Definiteness::Indefinite
    } else if lo > eps {
        Definiteness::Positive
    } else if hi < -eps {
        Definiteness::Negative
    } else {
        Definiteness::Indefinite
    }
}

fn preconditions(system: &NetworkedSystem, tol: &Tolerances) -> Result<()> {
    system.ensure_admissible()?;
    system.require_weights()?;
    ensure_well_posed(system, tol)?;
    Ok(())
}

fn first_non_fcnr(system: &NetworkedSystem, tag: BlockTag, tol: &Tolerances) -> Option<usize> {
    (0..system.len()).find(|&i| !fcnr(&make_block(system, i, tag), tol))
}

/// Definiteness test of every member form in the given groups.
///
/// With `allow_negative`, a group passes when all its members are positive
/// definite or all are negative definite; otherwise only positive counts.
pub fn evaluate_groups(
    name: CriterionName,
    system: &NetworkedSystem,
    groups: &[ZeroGroup],
    allow_negative: bool,
    tol: &Tolerances,
) -> CriterionResult {
    let mut outcomes = Vec::new();
    let mut group_results = Vec::new();
    let mut pair_results = Vec::new();
    let mut reason = None;
    for (k, g) in groups.iter().enumerate() {
        let mut signs = Vec::new();
        for s in 0..g.members.len() {
            let m = &g.members[s];
            let (sign, lo, hi, eps) = match member_form(system, g, s) {
                Ok((q, scale)) => {
                    let ev = hermitian_eigenvalues(&q);
                    let eps = tol.pd_margin * scale;
                    (
                        classify(&ev, eps),
                        ev.first().copied().unwrap_or(f64::NAN),
                        ev.last().copied().unwrap_or(f64::NAN),
                        eps,
                    )
                }
                Err(NetError::SingularTheta { subsystem }) => {
                    reason.get_or_insert(format!(
                        "Theta^-2 undefined: subsystem {} has an internal output with out-degree 0",
                        subsystem + 1
                    ));
                    (Definiteness::Indefinite, f64::NAN, f64::NAN, f64::NAN)
                }
                Err(e) => {
                    reason.get_or_insert(e.to_string());
                    (Definiteness::Indefinite, f64::NAN, f64::NAN, f64::NAN)
                }
            };
            let ok = match sign {
                Definiteness::Positive => true,
                Definiteness::Negative => allow_negative,
                Definiteness::Indefinite => false,
            };
            pair_results.push(if ok { Overall::Pass } else { Overall::Inconclusive });
            signs.push(sign);
            outcomes.push(Outcome {
                subsystem: m.subsystem,
                group: Some(k),
                lambda: Some([m.lambda.re, m.lambda.im]),
                min: lo,
                max: hi,
                threshold: eps,
                sign: Some(sign),
                result: if ok { Overall::Pass } else { Overall::Inconclusive },
            });
        }
        let uniform = signs.iter().all(|&x| x == Definiteness::Positive)
            || (allow_negative && signs.iter().all(|&x| x == Definiteness::Negative));
        if !uniform && reason.is_none() {
            reason = Some(format!(
                "zero group {k} at {} has no uniform strict sign",
                fmt_c(g.lambda0)
            ));
        }
        group_results.push(if uniform { Overall::Pass } else { Overall::Inconclusive });
    }
    let overall = combine(group_results);
    let pair = combine(pair_results);
    CriterionResult {
        name,
        outcomes,
        overall,
        reason: if groups.is_empty() {
            Some("no zeros: condition holds vacuously".into())
        } else if overall == Overall::Pass {
            None
        } else {
            reason
        },
        per_pair_overall: (pair != overall).then_some(pair),
    }
}

fn fmt_c(z: C64) -> String {
    format!("{:.6}{:+.6}j", z.re, z.im)
}

/// Sufficient observability condition: for every zero group, the member
/// forms `I - Gamma^H Theta^2 Gamma` are all positive definite or all
/// negative definite. A pass certifies observability; anything else is
/// inconclusive.
pub fn theorem1_sufficient_obs(system: &NetworkedSystem, tol: &Tolerances) -> Result<CriterionResult> {
    preconditions(system, tol)?;
    if let Some(i) = first_non_fcnr(system, BlockTag::G1, tol) {
        return Ok(CriterionResult::inconclusive(
            CriterionName::Thm1,
            format!("G1 of subsystem {} is not of full column normal rank", i + 1),
        ));
    }
    match zero_groups(system, Side::Observability, tol) {
        Ok(groups) => Ok(evaluate_groups(CriterionName::Thm1, system, &groups, true, tol)),
        Err(NetError::NotFcnr) => Ok(CriterionResult::inconclusive(
            CriterionName::Thm1,
            "local pencil is singular".into(),
        )),
        Err(e) => Err(e),
    }
}

/// Sufficient controllability condition: every member form
/// `I - Gamma_bar^H Gamma_bar` is positive definite.
pub fn theorem2_sufficient_ctrb(system: &NetworkedSystem, tol: &Tolerances) -> Result<CriterionResult> {
    preconditions(system, tol)?;
    if let Some(i) = first_non_fcnr(system, BlockTag::G1Bar, tol) {
        return Ok(CriterionResult::inconclusive(
            CriterionName::Thm2Suf,
            format!("G1bar of subsystem {} is not of full column normal rank", i + 1),
        ));
    }
    match zero_groups(system, Side::Controllability, tol) {
        Ok(groups) => Ok(evaluate_groups(CriterionName::Thm2Suf, system, &groups, false, tol)),
        Err(NetError::NotFcnr) => Ok(CriterionResult::inconclusive(
            CriterionName::Thm2Suf,
            "local pencil is singular".into(),
        )),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Observability,
    Controllability,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideReport {
    pub status: Status,
    pub oracle: Verdict,
    /// Rank test of `M(l)`; observability only.
    pub lemma3: Option<Verdict>,
    pub necessary: CriterionResult,
    pub sufficient: CriterionResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub well_posedness: WellPosedness,
    pub observability: Option<SideReport>,
    pub controllability: Option<SideReport>,
    /// Any criterion contradicting the oracle; always a bug.
    pub consistency_flags: Vec<String>,
}

impl AnalysisReport {
    pub fn status(&self) -> Status {
        Status::all(
            [&self.observability, &self.controllability]
                .into_iter()
                .flatten()
                .map(|s| s.status),
        )
    }
}

fn side_report(
    label: &str,
    oracle: Verdict,
    lemma3: Option<Verdict>,
    necessary: CriterionResult,
    sufficient: CriterionResult,
    flags: &mut Vec<String>,
) -> SideReport {
    if necessary.overall == Overall::Fail && oracle.status == Status::CertifiedYes {
        flags.push(format!("{label}: necessary condition fails but the lifted system passes"));
    }
    if sufficient.overall == Overall::Pass && oracle.status == Status::CertifiedNo {
        flags.push(format!("{label}: sufficient condition passes but the lifted system fails"));
    }
    if let Some(l3) = &lemma3 {
        let decided = |s: Status| s != Status::Inconclusive;
        if decided(l3.status) && decided(oracle.status) && l3.status != oracle.status {
            flags.push(format!(
                "{label}: M(l) rank test says {} but lifted PBH says {}",
                l3.status, oracle.status
            ));
        }
    }
    let claims_no = necessary.overall == Overall::Fail || oracle.status == Status::CertifiedNo;
    let claims_yes = sufficient.overall == Overall::Pass || oracle.status == Status::CertifiedYes;
    let status = match (claims_yes, claims_no) {
        (true, false) => Status::CertifiedYes,
        (false, true) => Status::CertifiedNo,
        _ => Status::Inconclusive,
    };
    SideReport {
        status,
        oracle,
        lemma3,
        necessary,
        sufficient,
    }
}

/// Run the necessary and sufficient criteria and the lifted oracle for the
/// requested side(s).
pub fn full_analysis(system: &NetworkedSystem, mode: Mode, tol: &Tolerances) -> Result<AnalysisReport> {
    system.ensure_admissible()?;
    let well_posedness = check_well_posedness(system, tol);
    let lifted = lift(system, tol)?;
    let mut flags = Vec::new();

    let observability = if mode != Mode::Controllability {
        let oracle = pbh_observable(&lifted.a, &lifted.c, tol);
        let l3 = verify_lemma3(system, tol)?;
        Some(side_report(
            "observability",
            oracle,
            Some(l3),
            lemma5_necessary_obs(system, tol),
            theorem1_sufficient_obs(system, tol)?,
            &mut flags,
        ))
    } else {
        None
    };
    let controllability = if mode != Mode::Observability {
        let oracle = pbh_controllable(&lifted.a, &lifted.b, tol);
        Some(side_report(
            "controllability",
            oracle,
            None,
            theorem2_necessary_ctrb(system, tol),
            theorem2_sufficient_ctrb(system, tol)?,
            &mut flags,
        ))
    } else {
        None
    };
    Ok(AnalysisReport {
        well_posedness,
        observability,
        controllability,
        consistency_flags: flags,
    })
}
