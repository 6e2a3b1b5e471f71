//! Synthesis of observable (controllable) networks.
//!
//! Each subsystem gets a random output map `C(i)` with at least `p_max(i)`
//! rows, split into external outputs `C_T(i)` and internal outputs `A_ST(i)`.
//! The internal feed-through `A_SS(i)` is then shrunk by a factor `kappa`
//! until the lifted system is observable. Alternatively, one step of the
//! per-subsystem bound `kappa_i < 1/gamma_i` scales `A_ST(i)` and `A_SS(i)`
//! together, which certifies observability through the sufficient condition
//! directly. Controllable synthesis is the dual.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{NetError, Result};
use crate::lifted::{lift, max_geometric_multiplicity, pbh_controllable, pbh_observable, Status};
use crate::linalg::{sigma_max, sigma_max_real, Mat};
use crate::model::{check_well_posedness, NetworkedSystem, SubsystemDims, SubsystemRealization};
use crate::spectra::{gamma_ctrb, gamma_obs, zero_groups, Side, ZeroGroup};
use crate::tolerance::Tolerances;

const MAX_DRAWS: usize = 50;

/// Random `q x n` matrix `C` with `(A, C)` observable.
///
/// Fails when `q < p_max(A)`; the subsystem index in the error is 0.
pub fn design_observing_matrix<R: Rng>(a: &Mat, q: usize, rng: &mut R, tol: &Tolerances) -> Result<Mat> {
    let n = a.nrows();
    let p_max = max_geometric_multiplicity(a, tol).p_max;
    if q < p_max {
        return Err(NetError::BudgetBelowPmax {
            subsystem: 0,
            budget: q,
            p_max,
        });
    }
    for _ in 0..MAX_DRAWS {
        let c = Mat::from_fn(q, n, |_, _| rng.sample(StandardNormal));
        if pbh_observable(a, &c, tol).status == Status::CertifiedYes {
            return Ok(c);
        }
    }
    Err(NetError::RetriesExhausted(MAX_DRAWS))
}

/// Split `C` into its first `m_y` rows (`C_T`) and the remaining `m_z` rows
/// (`A_ST`).
pub fn partition_outputs(c: &Mat, m_y: usize, m_z: usize) -> Result<(Mat, Mat)> {
    if m_y + m_z != c.nrows() {
        return Err(NetError::InvalidArgument(format!(
            "split {m_y} + {m_z} does not match {} rows",
            c.nrows()
        )));
    }
    Ok((c.rows(0, m_y).into_owned(), c.rows(m_y, m_z).into_owned()))
}

/// `gamma_i` and the admissible scaling interval `(0, upper)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaBound {
    pub gamma: f64,
    /// `1 / gamma`, infinite when `gamma = 0`.
    pub upper: f64,
}

impl KappaBound {
    fn new(gamma: f64) -> Self {
        Self {
            gamma,
            upper: if gamma > 0.0 { 1.0 / gamma } else { f64::INFINITY },
        }
    }

    /// `fraction / gamma`, capped at one so coupling never grows.
    pub fn pick(&self, fraction: f64) -> f64 {
        if self.gamma > 0.0 {
            (fraction / self.gamma).min(1.0)
        } else {
            1.0
        }
    }
}

/// Per-subsystem bound for observability groups:
/// `gamma_i = max(sigma_max(Theta(i) A_SS(i)), max sigma_max(Theta(i) Gamma))`
/// over the group members owned by `i`.
///
/// For controllability groups the first term is replaced by
/// `|Phi| sigma_max(A_SS(i))`, which bounds `sigma_max(Phi A_SS)` after
/// scaling, and `Gamma_bar` enters unweighted.
pub fn kappa_bound(system: &NetworkedSystem, groups: &[ZeroGroup]) -> Result<Vec<KappaBound>> {
    let w = system.require_weights()?;
    let side = groups.first().map(|g| g.side).unwrap_or(Side::Observability);
    let phi_norm = w.m.iter().copied().max().map_or(0.0, |m| (m as f64).sqrt());
    let mut gamma: Vec<f64> = system
        .subsystems()
        .iter()
        .enumerate()
        .map(|(i, s)| match side {
            Side::Observability => sigma_max_real(&(&w.theta_blocks[i] * &s.a_ss)),
            Side::Controllability => phi_norm * sigma_max_real(&s.a_ss),
        })
        .collect();
    for g in groups {
        for (s, m) in g.members.iter().enumerate() {
            let i = m.subsystem;
            let val = match side {
                Side::Observability => {
                    let theta = crate::linalg::complexify(&w.theta_blocks[i]);
                    sigma_max(&(theta * gamma_obs(g, s)))
                }
                Side::Controllability => sigma_max(&gamma_ctrb(system, g, s)?),
            };
            gamma[i] = gamma[i].max(val);
        }
    }
    Ok(gamma.into_iter().map(KappaBound::new).collect())
}

/// Optional fixed data for one subsystem. Anything left `None` is designed
/// (output or input map, initial `A_SS`) or set to zero.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SubsystemSeed {
    /// Rows of `C(i)` (observable mode) or columns of `B(i)` (controllable
    /// mode); defaults to `p_max(i)`.
    pub budget: Option<usize>,
    /// `m_z(i)` (observable) or `m_v(i)` (controllable); defaults to 0.
    pub internal: Option<usize>,
    /// Use this `C(i)` / `B(i)` instead of drawing one.
    pub design: Option<Mat>,
    pub a_ts: Option<Mat>,
    pub a_st: Option<Mat>,
    pub a_ss: Option<Mat>,
    pub b_t: Option<Mat>,
    pub b_s: Option<Mat>,
    pub c_t: Option<Mat>,
    pub c_s: Option<Mat>,
    pub d: Option<Mat>,
}

/// How subsystems are wired.
#[derive(Debug, Clone, PartialEq)]
pub enum Topology {
    /// `v(i)` copies all of `z(i-1)` (indices mod N); empty for `N = 1`.
    Ring,
    /// Explicit SCM; `free_dims[i]` is `n_v(i)` (observable mode) or
    /// `n_z(i)` (controllable mode).
    Given { phi: Mat, free_dims: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstructOptions {
    /// Shrink factor of the loop, and the fraction of `1/gamma_i` used by
    /// the bound step.
    pub kappa: f64,
    pub max_iters: usize,
    pub use_kappa_bound: bool,
    pub seed: u64,
    pub topology: Topology,
}

impl Default for ConstructOptions {
    fn default() -> Self {
        Self {
            kappa: 0.9,
            max_iters: 50,
            use_kappa_bound: false,
            seed: 0,
            topology: Topology::Ring,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    /// Cumulative factor applied to each subsystem's `A_SS` so far.
    pub kappa: Vec<f64>,
    pub well_posed: bool,
    pub status: Status,
    /// Smallest PBH margin of the lifted test (0 when ill-posed).
    pub min_margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstructionTrace {
    pub iterations: Vec<TraceEntry>,
    pub converged: bool,
    pub kappa_bound: Option<Vec<KappaBound>>,
}

fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

fn unit_norm_gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    let m = gaussian(rng, r, c);
    let s = sigma_max_real(&m);
    if s > 0.0 {
        m / s
    } else {
        m
    }
}

fn take(name: &str, i: usize, given: &Option<Mat>, r: usize, c: usize) -> Result<Mat> {
    match given {
        None => Ok(Mat::zeros(r, c)),
        Some(m) if m.shape() == (r, c) => Ok(m.clone()),
        Some(m) => Err(NetError::Dimension(format!(
            "subsystem {i}: {name} is {}x{}, expected {r}x{c}",
            m.nrows(),
            m.ncols()
        ))),
    }
}

fn ring_phi(widths: &[usize]) -> Mat {
    let n = widths.len();
    let total: usize = widths.iter().sum();
    let mut phi = Mat::zeros(total, total);
    if n < 2 {
        return Mat::zeros(0, 0);
    }
    let offsets: Vec<usize> = widths
        .iter()
        .scan(0, |acc, &w| {
            let o = *acc;
            *acc += w;
            Some(o)
        })
        .collect();
    for i in 0..n {
        let src = (i + n - 1) % n;
        for k in 0..widths[src] {
            // v rows of subsystem i are laid out with the widths of their sources.
            phi[(offsets_v(widths, i) + k, offsets[src] + k)] = 1.0;
        }
    }
    phi
}

/// Row offset of subsystem `i`'s `v` block in a ring where `n_v(i) = n_z(i-1)`.
fn offsets_v(widths: &[usize], i: usize) -> usize {
    let n = widths.len();
    (0..i).map(|j| widths[(j + n - 1) % n]).sum()
}

struct Plan {
    subs: Vec<SubsystemRealization>,
    phi: Mat,
}

fn plan_observable(stms: &[Mat], seeds: &[SubsystemSeed], opts: &ConstructOptions, tol: &Tolerances) -> Result<Plan> {
    let n = stms.len();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut designs = Vec::with_capacity(n);
    for (i, a) in stms.iter().enumerate() {
        let seed = &seeds[i];
        let p_max = max_geometric_multiplicity(a, tol).p_max;
        let q = seed.budget.or(seed.design.as_ref().map(|c| c.nrows())).unwrap_or(p_max);
        if q < p_max {
            return Err(NetError::BudgetBelowPmax { subsystem: i, budget: q, p_max });
        }
        let c = match &seed.design {
            Some(c) => take("C", i, &Some(c.clone()), q, a.nrows())?,
            None => design_observing_matrix(a, q, &mut rng, tol).map_err(|e| match e {
                NetError::BudgetBelowPmax { budget, p_max, .. } => NetError::BudgetBelowPmax { subsystem: i, budget, p_max },
                e => e,
            })?,
        };
        let m_z = seed.internal.unwrap_or(0);
        if m_z > q {
            return Err(NetError::InvalidArgument(format!("subsystem {i}: m_z = {m_z} exceeds budget {q}")));
        }
        designs.push(partition_outputs(&c, q - m_z, m_z)?);
    }
    let n_z: Vec<usize> = designs.iter().map(|(_, ast)| ast.nrows()).collect();
    let (phi, n_v) = match &opts.topology {
        Topology::Ring if n < 2 => (Mat::zeros(0, n_z.iter().sum()), vec![0; n]),
        Topology::Ring => (ring_phi(&n_z), (0..n).map(|i| n_z[(i + n - 1) % n]).collect()),
        Topology::Given { phi, free_dims } => (phi.clone(), free_dims.clone()),
    };
    if n_v.len() != n {
        return Err(NetError::Dimension(format!("{} v widths for {n} subsystems", n_v.len())));
    }
    let mut subs = Vec::with_capacity(n);
    for (i, ((c_t, a_st), a)) in designs.into_iter().zip(stms).enumerate() {
        let seed = &seeds[i];
        let n_x = a.nrows();
        let n_u = seed.b_t.as_ref().or(seed.b_s.as_ref()).or(seed.d.as_ref()).map_or(0, |m| m.ncols());
        let dims = SubsystemDims { n_x, n_v: n_v[i], n_u, n_z: a_st.nrows(), n_y: c_t.nrows() };
        let a_ss = match &seed.a_ss {
            Some(_) => take("A_SS", i, &seed.a_ss, dims.n_z, dims.n_v)?,
            None => unit_norm_gaussian(&mut rng, dims.n_z, dims.n_v),
        };
        subs.push(SubsystemRealization {
            a_tt: a.clone(),
            a_ts: take("A_TS", i, &seed.a_ts, n_x, dims.n_v)?,
            b_t: take("B_T", i, &seed.b_t, n_x, n_u)?,
            a_st,
            a_ss,
            b_s: take("B_S", i, &seed.b_s, dims.n_z, n_u)?,
            c_t,
            c_s: take("C_S", i, &seed.c_s, dims.n_y, dims.n_v)?,
            d: take("D", i, &seed.d, dims.n_y, n_u)?,
        });
    }
    Ok(Plan { subs, phi })
}

fn plan_controllable(stms: &[Mat], seeds: &[SubsystemSeed], opts: &ConstructOptions, tol: &Tolerances) -> Result<Plan> {
    // Design on the transposed problem, then transpose back.
    let stms_t: Vec<Mat> = stms.iter().map(|a| a.transpose()).collect();
    let dual_topology = match &opts.topology {
        Topology::Ring => Topology::Ring,
        Topology::Given { phi, free_dims } => Topology::Given {
            phi: phi.transpose(),
            free_dims: free_dims.clone(),
        },
    };
    let t = |m: &Option<Mat>| m.as_ref().map(|x| x.transpose());
    let dual_seeds: Vec<SubsystemSeed> = seeds
        .iter()
        .map(|s| SubsystemSeed {
            budget: s.budget,
            internal: s.internal,
            design: t(&s.design),
            a_ts: t(&s.a_st),
            a_st: None,
            a_ss: t(&s.a_ss),
            b_t: t(&s.c_t),
            b_s: t(&s.c_s),
            c_t: None,
            c_s: t(&s.b_s),
            d: t(&s.d),
        })
        .collect();
    let dual_opts = ConstructOptions { topology: dual_topology, ..opts.clone() };
    let dual = plan_observable(&stms_t, &dual_seeds, &dual_opts, tol)?;
    let subs = dual
        .subs
        .into_iter()
        .map(|s| SubsystemRealization {
            a_tt: s.a_tt.transpose(),
            a_ts: s.a_st.transpose(),
            b_t: s.c_t.transpose(),
            a_st: s.a_ts.transpose(),
            a_ss: s.a_ss.transpose(),
            b_s: s.c_s.transpose(),
            c_t: s.b_t.transpose(),
            c_s: s.b_s.transpose(),
            d: s.d.transpose(),
        })
        .collect();
    Ok(Plan { subs, phi: dual.phi.transpose() })
}

fn assemble(subs: Vec<SubsystemRealization>, phi: &Mat) -> NetworkedSystem {
    let strict = phi.row_iter().all(|r| r.iter().any(|&x| x != 0.0));
    NetworkedSystem::new(subs, phi.clone(), strict)
}

fn test_side(system: &NetworkedSystem, side: Side, tol: &Tolerances) -> (bool, Status, f64) {
    if !check_well_posedness(system, tol).well_posed {
        return (false, Status::Inconclusive, 0.0);
    }
    match lift(system, tol) {
        Ok(l) => {
            let v = match side {
                Side::Observability => pbh_observable(&l.a, &l.c, tol),
                Side::Controllability => pbh_controllable(&l.a, &l.b, tol),
            };
            (true, v.status, v.min_margin())
        }
        Err(_) => (false, Status::Inconclusive, 0.0),
    }
}

fn run(plan: Plan, side: Side, opts: &ConstructOptions, tol: &Tolerances) -> Result<(NetworkedSystem, ConstructionTrace)> {
    if !(opts.kappa > 0.0 && opts.kappa < 1.0) {
        return Err(NetError::InvalidArgument(format!("kappa = {} is not in (0, 1)", opts.kappa)));
    }
    let Plan { mut subs, phi } = plan;
    let n = subs.len();
    let mut factor = vec![1.0; n];
    let mut iterations = Vec::new();
    let mut bound_used = None;
    let mut converged = false;

    for it in 0..=opts.max_iters {
        let system = assemble(subs.clone(), &phi);
        let (well_posed, status, margin) = test_side(&system, side, tol);
        iterations.push(TraceEntry {
            iteration: it,
            kappa: factor.clone(),
            well_posed,
            status,
            min_margin: margin,
        });
        let bound_pending = opts.use_kappa_bound && bound_used.is_none();
        if status == Status::CertifiedYes && !bound_pending {
            converged = true;
            break;
        }
        if it == opts.max_iters {
            break;
        }
        if bound_pending {
            let groups = zero_groups(&system, side, tol)?;
            let bounds = kappa_bound(&system, &groups)?;
            for (i, s) in subs.iter_mut().enumerate() {
                let k = bounds[i].pick(opts.kappa);
                match side {
                    Side::Observability => s.a_st *= k,
                    Side::Controllability => s.a_ts *= k,
                }
                s.a_ss *= k;
                factor[i] *= k;
            }
            bound_used = Some(bounds);
        } else {
            for (i, s) in subs.iter_mut().enumerate() {
                s.a_ss *= opts.kappa;
                factor[i] *= opts.kappa;
            }
        }
    }
    Ok((
        assemble(subs, &phi),
        ConstructionTrace {
            iterations,
            converged,
            kappa_bound: bound_used,
        },
    ))
}

fn check_seeds(stms: &[Mat], seeds: &[SubsystemSeed]) -> Result<()> {
    if !seeds.is_empty() && seeds.len() != stms.len() {
        return Err(NetError::InvalidArgument(format!(
            "{} seeds for {} subsystems",
            seeds.len(),
            stms.len()
        )));
    }
    if let Some(i) = stms.iter().position(|a| !a.is_square()) {
        return Err(NetError::Dimension(format!("STM {i} is not square")));
    }
    Ok(())
}

fn seeds_or_default(stms: &[Mat], seeds: &[SubsystemSeed]) -> Vec<SubsystemSeed> {
    if seeds.is_empty() {
        vec![SubsystemSeed::default(); stms.len()]
    } else {
        seeds.to_vec()
    }
}

/// Build an observable network around the given state-transition matrices.
///
/// Returns the final system even when the loop runs out of iterations;
/// check `trace.converged`.
pub fn construct_observable(
    stms: &[Mat],
    seeds: &[SubsystemSeed],
    opts: &ConstructOptions,
    tol: &Tolerances,
) -> Result<(NetworkedSystem, ConstructionTrace)> {
    check_seeds(stms, seeds)?;
    let plan = plan_observable(stms, &seeds_or_default(stms, seeds), opts, tol)?;
    run(plan, Side::Observability, opts, tol)
}

/// Dual of [`construct_observable`]: designs `[B_T(i) A_TS(i)]` and scales
/// `A_SS` (or `A_TS` and `A_SS` with the bound) until the lifted system is
/// controllable.
pub fn construct_controllable(
    stms: &[Mat],
    seeds: &[SubsystemSeed],
    opts: &ConstructOptions,
    tol: &Tolerances,
) -> Result<(NetworkedSystem, ConstructionTrace)> {
    check_seeds(stms, seeds)?;
    let plan = plan_controllable(stms, &seeds_or_default(stms, seeds), opts, tol)?;
    run(plan, Side::Controllability, opts, tol)
}
