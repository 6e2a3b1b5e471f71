//! Plain-text tables and serializable summaries.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::construct::ConstructionTrace;
use crate::criteria::{AnalysisReport, CriterionResult, SideReport};
use crate::error::Result;
use crate::lifted::{lift, observability_singular_values, LiftedSystem, Verdict};
use crate::linalg::{hstack, vstack, Mat, C64};
use crate::model::{NetworkedSystem, ValidationReport, WellPosedness};
use crate::selection::{BudgetCheck, SelectionResult};
use crate::serde_util::complex_vec;
use crate::spectra::{fcnr, invariant_zeros, make_block, transmission_zeros, zero_groups, BlockTag, Side};
use crate::tolerance::Tolerances;

fn fmt_c(z: C64) -> String {
    if z.im == 0.0 {
        format!("{:.6e}", z.re)
    } else {
        format!("{:.6e}{:+.6e}j", z.re, z.im)
    }
}

fn fmt_matrix(name: &str, m: &Mat) -> String {
    let mut s = format!("{name} ({}x{})\n", m.nrows(), m.ncols());
    for r in m.row_iter() {
        let cells: Vec<String> = r.iter().map(|x| format!("{x:>12.5e}")).collect();
        let _ = writeln!(s, "  [{}]", cells.join(" "));
    }
    s
}

pub fn render_validation(report: &ValidationReport, wp: Option<&WellPosedness>) -> String {
    let mut s = String::new();
    if report.is_admissible() {
        s.push_str("admissible: yes\n");
    } else {
        let _ = writeln!(s, "admissible: no ({} problems)", report.violations.len());
        for v in &report.violations {
            let _ = writeln!(s, "  - {}", v.message);
        }
    }
    if let Some(w) = wp {
        let _ = writeln!(
            s,
            "well-posed: {} (sigma_min(I - Phi A_SS) = {:.4e}, tolerance {:.4e})",
            if w.well_posed { "yes" } else { "no" },
            w.sigma_min,
            w.tol
        );
    }
    s
}

pub fn render_lifted(l: &LiftedSystem) -> String {
    [
        fmt_matrix("A", &l.a),
        fmt_matrix("B", &l.b),
        fmt_matrix("C", &l.c),
        fmt_matrix("D", &l.d),
    ]
    .concat()
}

/// One row of a singular-value table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvRow {
    pub label: String,
    pub values: Vec<f64>,
}

/// Ascending singular values of observability matrices: per subsystem with
/// external outputs only and with internal outputs added, then for the
/// lifted system.
pub fn observability_table(system: &NetworkedSystem, tol: &Tolerances) -> Result<Vec<SvRow>> {
    let mut rows = Vec::new();
    for (i, s) in system.subsystems().iter().enumerate() {
        rows.push(SvRow {
            label: format!("subsystem {} (A_TT, C_T)", i + 1),
            values: observability_singular_values(&s.a_tt, &s.c_t),
        });
        let c = vstack(&[&s.c_t, &s.a_st], s.a_tt.ncols());
        rows.push(SvRow {
            label: format!("subsystem {} (A_TT, [C_T; A_ST])", i + 1),
            values: observability_singular_values(&s.a_tt, &c),
        });
    }
    let l = lift(system, tol)?;
    rows.push(SvRow {
        label: "whole system (A, C)".into(),
        values: observability_singular_values(&l.a, &l.c),
    });
    Ok(rows)
}

/// Same layout for controllability, via the transposed pairs.
pub fn controllability_table(system: &NetworkedSystem, tol: &Tolerances) -> Result<Vec<SvRow>> {
    let mut rows = Vec::new();
    for (i, s) in system.subsystems().iter().enumerate() {
        let at = s.a_tt.transpose();
        rows.push(SvRow {
            label: format!("subsystem {} (A_TT, B_T)", i + 1),
            values: observability_singular_values(&at, &s.b_t.transpose()),
        });
        let b = hstack(&[&s.b_t, &s.a_ts], s.a_tt.nrows());
        rows.push(SvRow {
            label: format!("subsystem {} (A_TT, [B_T A_TS])", i + 1),
            values: observability_singular_values(&at, &b.transpose()),
        });
    }
    let l = lift(system, tol)?;
    rows.push(SvRow {
        label: "whole system (A, B)".into(),
        values: observability_singular_values(&l.a.transpose(), &l.b.transpose()),
    });
    Ok(rows)
}

pub fn render_sv_table(title: &str, rows: &[SvRow]) -> String {
    let mut s = format!("{title}\n");
    let width = rows.iter().map(|r| r.label.len()).max().unwrap_or(0);
    for r in rows {
        let vals: Vec<String> = r.values.iter().map(|v| format!("{v:.4e}")).collect();
        let _ = writeln!(s, "  {:<width$}  {}", r.label, vals.join("  "));
    }
    s
}

fn render_verdict(label: &str, v: &Verdict) -> String {
    let mut s = format!("  {label}: {}", v.status);
    let m = v.min_margin();
    if m.is_finite() {
        let _ = write!(s, " (smallest margin {m:.4e})");
    }
    s.push('\n');
    for w in v.witnesses_no() {
        let _ = writeln!(s, "    rank drop at {} (margin {:.3e} <= {:.3e})", fmt_c(w.lambda), w.margin, w.tol);
    }
    if !v.notes.is_empty() {
        let _ = writeln!(s, "    {}", v.notes);
    }
    s
}

fn render_criterion(c: &CriterionResult) -> String {
    let mut s = format!("  {:?}: {:?}", c.name, c.overall);
    if let Some(r) = &c.reason {
        let _ = write!(s, " ({r})");
    }
    s.push('\n');
    for o in &c.outcomes {
        let at = o.lambda.map(|[re, im]| format!(" at {}", fmt_c(C64::new(re, im)))).unwrap_or_default();
        match o.group {
            Some(k) => {
                let _ = writeln!(
                    s,
                    "    group {k}, subsystem {}{at}: eigenvalues in [{:.4e}, {:.4e}] -> {:?}",
                    o.subsystem + 1,
                    o.min,
                    o.max,
                    o.result
                );
            }
            None => {
                let _ = writeln!(s, "    subsystem {}: {:?}{at}", o.subsystem + 1, o.result);
            }
        }
    }
    if let Some(p) = c.per_pair_overall {
        let _ = writeln!(s, "    reading each (k, s) separately: {p:?}");
    }
    s
}

fn render_side(title: &str, r: &SideReport) -> String {
    let mut s = format!("{title}: {}\n", r.status);
    s.push_str(&render_verdict("lifted PBH", &r.oracle));
    if let Some(l3) = &r.lemma3 {
        s.push_str(&render_verdict("M(l) rank test", l3));
    }
    s.push_str(&render_criterion(&r.necessary));
    s.push_str(&render_criterion(&r.sufficient));
    s
}

pub fn render_analysis(rep: &AnalysisReport) -> String {
    let mut s = String::new();
    if let Some(o) = &rep.observability {
        s.push_str(&render_side("observability", o));
    }
    if let Some(c) = &rep.controllability {
        s.push_str(&render_side("controllability", c));
    }
    if rep.consistency_flags.is_empty() {
        s.push_str("consistency: ok\n");
    } else {
        for f in &rep.consistency_flags {
            let _ = writeln!(s, "CONSISTENCY VIOLATION: {f}");
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsystemZeros {
    pub subsystem: usize,
    pub fcnr: bool,
    /// Zeros of the transfer block.
    #[serde(with = "complex_vec")]
    pub transmission: Vec<C64>,
    /// All rank-drop points of the local pencil, including decoupling zeros.
    #[serde(with = "complex_vec")]
    pub invariant: Vec<C64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub lambda0: [f64; 2],
    pub members: Vec<usize>,
    /// Null dimension `p(k, s)` per member.
    pub p: Vec<usize>,
    /// Kernel directions with vanishing internal input, per member.
    pub hidden: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZerosReport {
    pub side: Side,
    pub subsystems: Vec<SubsystemZeros>,
    pub groups: Vec<GroupRow>,
}

pub fn zeros_report(system: &NetworkedSystem, side: Side, tol: &Tolerances) -> Result<ZerosReport> {
    let tag = match side {
        Side::Observability => BlockTag::G1,
        Side::Controllability => BlockTag::G1Bar,
    };
    let mut subsystems = Vec::new();
    for i in 0..system.len() {
        let b = make_block(system, i, tag);
        let ok = fcnr(&b, tol);
        let (transmission, invariant) = if ok {
            (
                transmission_zeros(&b, tol)?,
                invariant_zeros(&b, tol)?.into_iter().map(|z| z.lambda).collect(),
            )
        } else {
            (Vec::new(), Vec::new())
        };
        subsystems.push(SubsystemZeros {
            subsystem: i,
            fcnr: ok,
            transmission,
            invariant,
        });
    }
    let groups = if subsystems.iter().all(|s| s.fcnr) {
        zero_groups(system, side, tol)?
            .iter()
            .map(|g| GroupRow {
                lambda0: [g.lambda0.re, g.lambda0.im],
                members: g.members.iter().map(|m| m.subsystem).collect(),
                p: g.members.iter().map(|m| m.p()).collect(),
                hidden: g.members.iter().map(|m| m.hidden.ncols()).collect(),
            })
            .collect()
    } else {
        Vec::new()
    };
    Ok(ZerosReport { side, subsystems, groups })
}

pub fn render_zeros(r: &ZerosReport) -> String {
    let block = match r.side {
        Side::Observability => "G1",
        Side::Controllability => "G1bar",
    };
    let mut s = String::new();
    for z in &r.subsystems {
        if !z.fcnr {
            let _ = writeln!(s, "subsystem {}: {block} not of full column normal rank", z.subsystem + 1);
            continue;
        }
        let list = |v: &[C64]| {
            if v.is_empty() {
                "none".to_string()
            } else {
                v.iter().map(|&x| fmt_c(x)).collect::<Vec<_>>().join(", ")
            }
        };
        let _ = writeln!(
            s,
            "subsystem {}: transmission zeros {}; pencil zeros {}",
            z.subsystem + 1,
            list(&z.transmission),
            list(&z.invariant)
        );
    }
    let _ = writeln!(s, "{} distinct zero group(s)", r.groups.len());
    for (k, g) in r.groups.iter().enumerate() {
        let members: Vec<String> = g
            .members
            .iter()
            .zip(&g.p)
            .zip(&g.hidden)
            .map(|((m, p), h)| {
                if *h > 0 {
                    format!("{} (p={p}, hidden={h})", m + 1)
                } else {
                    format!("{} (p={p})", m + 1)
                }
            })
            .collect();
        let _ = writeln!(
            s,
            "  group {k}: {} members {}",
            fmt_c(C64::new(g.lambda0[0], g.lambda0[1])),
            members.join(", ")
        );
    }
    s
}

pub fn render_selection(sel: &SelectionResult, budget: Option<&[BudgetCheck]>) -> String {
    let mut s = String::from("subsystem  p_max  min outputs  min inputs");
    if budget.is_some() {
        s.push_str("  budget  feasible");
    }
    s.push('\n');
    for (i, r) in sel.subsystems.iter().enumerate() {
        let _ = write!(s, "{:>9}  {:>5}  {:>11}  {:>10}", i + 1, r.p_max, r.min_outputs, r.min_inputs);
        if let Some(b) = budget {
            let c = &b[i];
            let verdict = if c.feasible {
                "yes".to_string()
            } else {
                format!("no (short by {})", c.deficit)
            };
            let _ = write!(s, "  {:>6}  {verdict}", c.budget);
        }
        s.push('\n');
    }
    s
}

pub fn render_trace(t: &ConstructionTrace) -> String {
    let mut s = String::from("iter  status        well-posed  min margin  A_SS factor\n");
    for e in &t.iterations {
        let k = e.kappa.iter().copied().fold(f64::INFINITY, f64::min);
        let _ = writeln!(
            s,
            "{:>4}  {:<12}  {:<10}  {:>10.3e}  {:.4e}",
            e.iteration,
            e.status.to_string(),
            if e.well_posed { "yes" } else { "no" },
            e.min_margin,
            if k.is_finite() { k } else { 1.0 }
        );
    }
    if let Some(b) = &t.kappa_bound {
        for (i, kb) in b.iter().enumerate() {
            let _ = writeln!(s, "subsystem {}: gamma = {:.4e}, admissible kappa < {:.4e}", i + 1, kb.gamma, kb.upper);
        }
    }
    let _ = writeln!(s, "converged: {}", if t.converged { "yes" } else { "no" });
    s
}
