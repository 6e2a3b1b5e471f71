//! Reproducible random networks for tests and benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{NetError, Result};
use crate::linalg::{complexify, sigma_max_real, Mat};
use crate::model::{assemble_global_blocks, NetworkedSystem, SubsystemRealization};

/// Inclusive integer range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub lo: usize,
    pub hi: usize,
}

impl Span {
    pub const fn new(lo: usize, hi: usize) -> Self {
        Self { lo, hi }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> usize {
        rng.random_range(self.lo..=self.hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub subsystems: Span,
    pub n_x: Span,
    pub n_v: Span,
    pub n_u: Span,
    pub n_z: Span,
    pub n_y: Span,
    /// Probability that an internal input is wired to some internal output.
    pub density: f64,
    /// Upper bound on `sigma_max(Phi A_SS)`.
    pub rho_cap: f64,
    pub seed: u64,
    /// Force `n_y >= n_v` so every `G1` block can have full column normal rank.
    pub fcnr_obs: bool,
    /// Force `n_u >= n_z` likewise for `G1bar`.
    pub fcnr_ctrb: bool,
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        Self {
            subsystems: Span::new(2, 4),
            n_x: Span::new(1, 4),
            n_v: Span::new(0, 2),
            n_u: Span::new(0, 2),
            n_z: Span::new(0, 2),
            n_y: Span::new(0, 2),
            density: 1.0,
            rho_cap: 0.95,
            seed: 0,
            fcnr_obs: false,
            fcnr_ctrb: false,
        }
    }
}

impl EnsembleSpec {
    fn check(&self) -> Result<()> {
        let spans = [
            ("subsystems", self.subsystems),
            ("n_x", self.n_x),
            ("n_v", self.n_v),
            ("n_u", self.n_u),
            ("n_z", self.n_z),
            ("n_y", self.n_y),
        ];
        for (name, s) in spans {
            if s.lo > s.hi {
                return Err(NetError::InvalidArgument(format!("{name}: empty range {}..={}", s.lo, s.hi)));
            }
        }
        if self.subsystems.lo == 0 {
            return Err(NetError::InvalidArgument("need at least one subsystem".into()));
        }
        if !(0.0..=1.0).contains(&self.density) {
            return Err(NetError::InvalidArgument(format!("density {} not in [0, 1]", self.density)));
        }
        if !(self.rho_cap > 0.0 && self.rho_cap <= 1.0) {
            return Err(NetError::InvalidArgument(format!("rho_cap {} not in (0, 1]", self.rho_cap)));
        }
        Ok(())
    }
}

fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

/// Independent stream per member, so member `k` does not depend on `count`.
fn member_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// The `index`-th member of the ensemble described by `spec`.
pub fn generate_member(spec: &EnsembleSpec, index: usize) -> Result<NetworkedSystem> {
    spec.check()?;
    let mut rng = member_rng(spec.seed, index);
    let n = spec.subsystems.draw(&mut rng);
    let mut subs = Vec::with_capacity(n);
    for _ in 0..n {
        let n_x = spec.n_x.draw(&mut rng);
        let n_v = spec.n_v.draw(&mut rng);
        let n_z = spec.n_z.draw(&mut rng);
        let n_y = if spec.fcnr_obs {
            rng.random_range(spec.n_y.lo.max(n_v)..=spec.n_y.hi.max(n_v))
        } else {
            spec.n_y.draw(&mut rng)
        };
        let n_u = if spec.fcnr_ctrb {
            rng.random_range(spec.n_u.lo.max(n_z)..=spec.n_u.hi.max(n_z))
        } else {
            spec.n_u.draw(&mut rng)
        };
        let scale = 1.0 / (n_x.max(1) as f64).sqrt();
        subs.push(SubsystemRealization {
            a_tt: gaussian(&mut rng, n_x, n_x) * scale,
            a_ts: gaussian(&mut rng, n_x, n_v),
            b_t: gaussian(&mut rng, n_x, n_u),
            a_st: gaussian(&mut rng, n_z, n_x),
            a_ss: gaussian(&mut rng, n_z, n_v),
            b_s: gaussian(&mut rng, n_z, n_u),
            c_t: gaussian(&mut rng, n_y, n_x),
            c_s: gaussian(&mut rng, n_y, n_v),
            d: gaussian(&mut rng, n_y, n_u),
        });
    }
    let m_v: usize = subs.iter().map(|s| s.a_ss.ncols()).sum();
    let m_z: usize = subs.iter().map(|s| s.a_ss.nrows()).sum();
    let mut phi = Mat::zeros(m_v, m_z);
    for r in 0..m_v {
        if m_z > 0 && rng.random_bool(spec.density) {
            phi[(r, rng.random_range(0..m_z))] = 1.0;
        }
    }
    let strict = m_v == 0 || phi.row_iter().all(|r| r.iter().any(|&x| x != 0.0));
    let sys = NetworkedSystem::new(subs, phi, strict);
    Ok(cap_loop_gain(&sys, spec.rho_cap))
}

/// Rescale all `A_SS` so that `sigma_max(Phi A_SS) < cap`.
pub fn cap_loop_gain(system: &NetworkedSystem, cap: f64) -> NetworkedSystem {
    let g = assemble_global_blocks(system);
    let s = sigma_max_real(&(system.phi() * &g.a_ss));
    if s < cap {
        return system.clone();
    }
    let k = 0.9 * cap / s;
    let subs = system
        .subsystems()
        .iter()
        .map(|sub| SubsystemRealization {
            a_ss: &sub.a_ss * k,
            ..sub.clone()
        })
        .collect();
    system.with_subsystems(subs)
}

/// `count` members, in index order.
pub fn generate_ensemble(spec: &EnsembleSpec, count: usize) -> Result<Vec<NetworkedSystem>> {
    (0..count).map(|k| generate_member(spec, k)).collect()
}

/// A ring of `n` subsystems with one internal signal each, built so that the
/// lifted system is unobservable at the real point `lambda_star`.
///
/// Each subsystem has one external output and one internal output. `C_S` is
/// chosen so that `G1` vanishes at `lambda_star`, and `A_SS(i) = 1 - g_i`
/// with `g_i = A_ST (lambda_star I - A_TT)^{-1} A_TS` makes
/// `x2 = (1, ..., 1)` circulate around the ring. Removing any one ring edge
/// (zeroing that SCM row) breaks the cycle.
pub fn planted_unobservable_ring(n: usize, n_x: usize, seed: u64) -> NetworkedSystem {
    assert!(n >= 2 && n_x >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let lambda_star: f64 = rng.random_range(-0.8..0.8);
        let mut subs = Vec::with_capacity(n);
        let mut ok = true;
        for _ in 0..n {
            let a_tt = gaussian(&mut rng, n_x, n_x) / (n_x as f64).sqrt();
            let res = Mat::identity(n_x, n_x) * lambda_star - &a_tt;
            let smin = crate::linalg::singular_values_real(&res).last().copied().unwrap_or(0.0);
            if smin < 0.05 {
                ok = false;
                break;
            }
            let inv = res.try_inverse().expect("resolvent checked nonsingular");
            let a_ts = gaussian(&mut rng, n_x, 1);
            let a_st = gaussian(&mut rng, 1, n_x);
            let c_t = gaussian(&mut rng, 1, n_x);
            let c_s = -(&c_t * &inv * &a_ts);
            let g = (&a_st * &inv * &a_ts)[(0, 0)];
            subs.push(SubsystemRealization {
                a_tt,
                a_ts,
                b_t: Mat::zeros(n_x, 0),
                a_st,
                a_ss: Mat::from_element(1, 1, 1.0 - g),
                b_s: Mat::zeros(1, 0),
                c_t,
                c_s,
                d: Mat::zeros(1, 0),
            });
        }
        if !ok {
            continue;
        }
        let mut phi = Mat::zeros(n, n);
        for i in 0..n {
            phi[(i, (i + n - 1) % n)] = 1.0;
        }
        let sys = NetworkedSystem::new(subs, phi, true);
        // Reject draws whose loop is close to singular.
        let l = crate::model::loop_matrix(&sys);
        let smin = crate::linalg::singular_values(&complexify(&l)).last().copied().unwrap_or(1.0);
        if smin > 1e-3 {
            return sys;
        }
    }
}
