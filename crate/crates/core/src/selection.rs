//! Minimal numbers of local outputs and inputs per subsystem.
//!
//! An observable (controllable) network can be built with local outputs
//! (inputs) iff every subsystem has at least `p_max(i)` of them, the largest
//! geometric multiplicity of its state-transition matrix.

use serde::{Deserialize, Serialize};

use crate::lifted::{max_geometric_multiplicity, GeometricMultiplicity};
use crate::linalg::Mat;
use crate::tolerance::Tolerances;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsystemSelection {
    pub p_max: usize,
    /// Minimal `m_y + m_z`.
    pub min_outputs: usize,
    /// Minimal `m_u + m_v`.
    pub min_inputs: usize,
    pub multiplicities: GeometricMultiplicity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub subsystems: Vec<SubsystemSelection>,
}

pub fn min_local_io(stms: &[Mat], tol: &Tolerances) -> SelectionResult {
    SelectionResult {
        subsystems: stms
            .iter()
            .map(|a| {
                let gm = max_geometric_multiplicity(a, tol);
                SubsystemSelection {
                    p_max: gm.p_max,
                    min_outputs: gm.p_max,
                    min_inputs: gm.p_max,
                    multiplicities: gm,
                }
            })
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetCheck {
    pub subsystem: usize,
    pub p_max: usize,
    pub budget: usize,
    pub feasible: bool,
    pub deficit: usize,
}

/// Compare per-subsystem budgets against `p_max(i)`.
///
/// # Panics
///
/// If `budgets` and `stms` differ in length.
pub fn check_budget(stms: &[Mat], budgets: &[usize], tol: &Tolerances) -> Vec<BudgetCheck> {
    assert_eq!(stms.len(), budgets.len(), "one budget per subsystem");
    min_local_io(stms, tol)
        .subsystems
        .iter()
        .zip(budgets)
        .enumerate()
        .map(|(i, (s, &b))| BudgetCheck {
            subsystem: i,
            p_max: s.p_max,
            budget: b,
            feasible: b >= s.p_max,
            deficit: s.p_max.saturating_sub(b),
        })
        .collect()
}
