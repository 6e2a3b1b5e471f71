use serde::{Deserialize, Serialize};

/// Numerical thresholds shared by every analysis routine.
///
/// Defaults follow the conventional SVD rank rule and the values documented
/// on each field; every one of them can be overridden from the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Relative rank factor. `None` selects `max(rows, cols) * eps`.
    pub rank_factor: Option<f64>,
    /// Eigenvalues closer than `eig_cluster * (1 + |lambda|)` are merged.
    pub eig_cluster: f64,
    /// Zeros closer than `zero_group * (1 + |lambda|)` share one group.
    pub zero_group: f64,
    /// Relative singular-value threshold for numerical null spaces.
    pub null_rel: f64,
    /// Relative margin for strict definiteness checks.
    pub pd_margin: f64,
    /// Margins within this factor of the rank tolerance are inconclusive.
    pub inconclusive_factor: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rank_factor: None,
            eig_cluster: 1e-7,
            zero_group: 1e-9,
            null_rel: 1e-8,
            pd_margin: 1e-9,
            inconclusive_factor: 10.0,
        }
    }
}

impl Tolerances {
    /// Absolute rank threshold for a `rows x cols` matrix with largest
    /// singular value `sigma_max`.
    pub fn rank_tol(&self, rows: usize, cols: usize, sigma_max: f64) -> f64 {
        let factor = self
            .rank_factor
            .unwrap_or_else(|| rows.max(cols) as f64 * f64::EPSILON);
        factor * sigma_max
    }

    pub fn cluster_radius(&self, lambda_abs: f64) -> f64 {
        self.eig_cluster * (1.0 + lambda_abs)
    }

    pub fn group_radius(&self, lambda_abs: f64) -> f64 {
        self.zero_group * (1.0 + lambda_abs)
    }
}
