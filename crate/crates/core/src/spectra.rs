//! Subsystem transfer blocks, their zeros, and the quantities the
//! subsystem-wise criteria are built from.
//!
//! For subsystem `i`:
//!
//! ```text
//! G1(l)    = C_S + C_T (lI - A_TT)^{-1} A_TS
//! G2(l)    = A_SS + A_ST (lI - A_TT)^{-1} A_TS
//! G1bar(l) = B_S^T + B_T^T (lI - A_TT^T)^{-1} A_ST^T
//! G2bar(l) = G2(l)^T
//! ```
//!
//! Zeros are found as rank-drop points of the Rosenbrock pencil and
//! re-verified. Besides the transfer-level zeros, the criteria need every
//! kernel vector `(x1, x2)` of the local pencil, including decoupling zeros
//! at eigenvalues of `A_TT`; [`ZeroGroup`] members carry that kernel.

use serde::{Deserialize, Serialize};

use crate::error::{NetError, Result};
use crate::linalg::{
    c64, cluster, column_rank_margin, complexify, eigenvalues, hermitian_inv_sqrt, null_space,
    pinv, projection_matrix, refine_pencil_point, sigma_max, sigma_max_real, singular_values, vstack, C64, CMat, Mat,
};
use crate::model::NetworkedSystem;
use crate::serde_util::complex;
use crate::tolerance::Tolerances;

const REFINE_ITERS: usize = 4;
const SQUARE_UP_SEED: u64 = 0x9e37_79b9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockTag {
    G1,
    G2,
    G1Bar,
    G2Bar,
}

/// `D + C (lI - A)^{-1} B` for one subsystem.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalBlock {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub d: Mat,
    pub tag: BlockTag,
    pub owner: usize,
}

impl RationalBlock {
    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn rows(&self) -> usize {
        self.d.nrows()
    }

    pub fn cols(&self) -> usize {
        self.d.ncols()
    }

    /// `(E, F)` with Rosenbrock matrix `P(l) = l E - F = [[lI - A, -B], [-C, -D]]`.
    fn pencil(&self) -> (CMat, CMat) {
        let (n, m, p) = (self.order(), self.cols(), self.rows());
        let mut e = CMat::zeros(n + p, n + m);
        e.view_mut((0, 0), (n, n)).fill_diagonal(c64(1.0, 0.0));
        let mut f = Mat::zeros(n + p, n + m);
        f.view_mut((0, 0), (n, n)).copy_from(&self.a);
        f.view_mut((0, n), (n, m)).copy_from(&self.b);
        f.view_mut((n, 0), (p, n)).copy_from(&self.c);
        f.view_mut((n, n), (p, m)).copy_from(&self.d);
        (e, complexify(&f))
    }

    /// Rosenbrock matrix with the state rows divided by `max(1, |l|)`, so
    /// that large candidates are judged on a comparable scale.
    fn scaled_pencil(&self, lambda: C64) -> CMat {
        let (e, f) = self.pencil();
        let mut p = e * lambda - f;
        let s = lambda.norm().max(1.0);
        let n = self.order();
        for r in 0..n {
            p.row_mut(r).scale_mut(1.0 / s);
        }
        p
    }
}

pub fn make_block(system: &NetworkedSystem, i: usize, tag: BlockTag) -> RationalBlock {
    let s = system.subsystem(i);
    let (a, b, c, d) = match tag {
        BlockTag::G1 => (s.a_tt.clone(), s.a_ts.clone(), s.c_t.clone(), s.c_s.clone()),
        BlockTag::G2 => (s.a_tt.clone(), s.a_ts.clone(), s.a_st.clone(), s.a_ss.clone()),
        BlockTag::G1Bar => (
            s.a_tt.transpose(),
            s.a_st.transpose(),
            s.b_t.transpose(),
            s.b_s.transpose(),
        ),
        BlockTag::G2Bar => (
            s.a_tt.transpose(),
            s.a_st.transpose(),
            s.a_ts.transpose(),
            s.a_ss.transpose(),
        ),
    };
    RationalBlock { a, b, c, d, tag, owner: i }
}

/// Evaluate the block at `lambda`.
///
/// At an eigenvalue of `A` the resolvent term is replaced by its limit
/// `lim_{d->0} ((l - d)I - A)^{-1} B`, which exists when `B` has no component
/// along the generalized eigenspace of `l`; the solution then lies in the
/// complementary invariant subspace `range((lI - A)^n)`. If the limit does not
/// exist, the Moore-Penrose pseudo-inverse is used instead.
pub fn eval(block: &RationalBlock, lambda: C64, tol: &Tolerances) -> CMat {
    let n = block.order();
    let d = complexify(&block.d);
    if n == 0 {
        return d;
    }
    let res = CMat::identity(n, n) * lambda - complexify(&block.a);
    let b = complexify(&block.b);
    let (smin, smax) = column_rank_margin(&res);
    let scale = smax.max(sigma_max_real(&block.a)).max(lambda.norm());
    let x = if smin > tol.rank_tol(n, n, scale) {
        res.clone().lu().solve(&b).expect("resolvent is nonsingular")
    } else {
        resolvent_limit(&block.a, &res, &b, lambda, tol)
    };
    d + complexify(&block.c) * x
}

fn resolvent_limit(a: &Mat, res: &CMat, b: &CMat, lambda: C64, tol: &Tolerances) -> CMat {
    let n = a.nrows();
    let alg = eigenvalues(a)
        .iter()
        .filter(|&&e| (e - lambda).norm() <= tol.cluster_radius(lambda.norm()))
        .count()
        .max(1);
    if alg < n && b.ncols() > 0 {
        let mut pow = res.clone();
        for _ in 1..n {
            pow = &pow * res;
        }
        let svd = nalgebra::SVD::new(pow, true, false);
        let u = svd.u.expect("requested U");
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
        let basis = CMat::from_fn(n, n - alg, |r, c| u[(r, order[c])]);
        let restricted = res * &basis;
        let y = pinv(&restricted, 1e-12) * b;
        let x = &basis * y;
        let residual = (res * &x - b).norm();
        if residual <= tol.null_rel * b.norm().max(f64::MIN_POSITIVE) {
            return x;
        }
    }
    pinv(res, tol.null_rel) * b
}

/// Probe points well outside the spectrum of `A`.
fn probe_points(a: &Mat) -> [C64; 3] {
    let rho = eigenvalues(a).iter().map(|e| e.norm()).fold(0.0, f64::max);
    let r = 1.0 + 1.25 * rho;
    [0.7, 2.1, 4.0].map(|t: f64| c64(r * t.cos(), r * t.sin()))
}

fn numerical_rank(m: &CMat, rel: f64) -> usize {
    let s = singular_values(m);
    let Some(&smax) = s.first() else { return 0 };
    s.iter().filter(|&&x| x > rel * smax).count()
}

/// Full column normal rank, by majority vote over three probe points.
pub fn fcnr(block: &RationalBlock, tol: &Tolerances) -> bool {
    let m = block.cols();
    if m == 0 {
        return true;
    }
    if block.rows() < m {
        return false;
    }
    let votes = probe_points(&block.a)
        .iter()
        .filter(|&&l| numerical_rank(&eval(block, l, tol), tol.null_rel) == m)
        .count();
    votes >= 2
}

/// A rank-drop point of the Rosenbrock pencil with an orthonormal basis of
/// its kernel (columns stacked as `(x1, x2)`).
#[derive(Debug, Clone, PartialEq)]
pub struct PencilZero {
    pub lambda: C64,
    pub kernel: CMat,
}

/// Finite invariant zeros of an FCNR block, each refined, verified on the
/// scaled pencil, and deduplicated.
pub fn invariant_zeros(block: &RationalBlock, tol: &Tolerances) -> Result<Vec<PencilZero>> {
    if !fcnr(block, tol) {
        return Err(NetError::NotFcnr);
    }
    let (n, m, p) = (block.order(), block.cols(), block.rows());
    if n + m == 0 {
        return Ok(Vec::new());
    }
    let r = if p > m {
        projection_matrix(m, p, SQUARE_UP_SEED ^ block.owner as u64)
    } else {
        Mat::identity(m, m)
    };
    let mut sq = Mat::zeros(n + m, n + m);
    sq.view_mut((0, 0), (n, n)).copy_from(&block.a);
    sq.view_mut((0, n), (n, m)).copy_from(&block.b);
    sq.view_mut((n, 0), (m, n)).copy_from(&(&r * &block.c));
    sq.view_mut((n, n), (m, m)).copy_from(&(&r * &block.d));
    let candidates = crate::linalg::finite_pencil_eigenvalues(n, &sq).ok_or(NetError::NotFcnr)?;

    let (e, f) = block.pencil();
    let verified: Vec<C64> = candidates
        .into_iter()
        .filter_map(|l0| {
            let (l, _) = refine_pencil_point(&e, &f, l0, REFINE_ITERS);
            let ps = block.scaled_pencil(l);
            let (smin, smax) = column_rank_margin(&ps);
            (smin <= tol.null_rel * smax).then_some(l)
        })
        .collect();

    let mut out = Vec::new();
    for cl in cluster(&verified, tol.eig_cluster) {
        let k = null_space(&block.scaled_pencil(cl.center), tol.null_rel);
        if k.ncols() > 0 {
            out.push(PencilZero { lambda: cl.center, kernel: k });
        }
    }
    Ok(out)
}

/// Magnitude against which small values of the evaluated block are judged:
/// the larger of `|G(l)|` and `|G|` at a probe point off the spectrum.
fn reference_scale(block: &RationalBlock, g: &CMat, tol: &Tolerances) -> f64 {
    let probe = eval(block, probe_points(&block.a)[0], tol);
    sigma_max(g).max(sigma_max(&probe)).max(f64::MIN_POSITIVE)
}

/// Null space of `G(l)` with the threshold `null_rel * reference_scale`.
fn block_null_space(block: &RationalBlock, g: &CMat, tol: &Tolerances) -> (CMat, f64, f64) {
    let m = g.ncols();
    let thr = tol.null_rel * reference_scale(block, g, tol);
    if m == 0 {
        return (CMat::zeros(0, 0), f64::INFINITY, thr);
    }
    // null_space uses a threshold relative to sigma_max; rescale so that it
    // becomes the absolute threshold `thr`.
    let smax = sigma_max(g);
    let (smin, _) = column_rank_margin(g);
    let y = if smax <= thr {
        CMat::identity(m, m)
    } else {
        null_space(g, thr / smax)
    };
    (y, smin, thr)
}

/// Finite transmission zeros: pencil zeros at which the evaluated block
/// itself loses column rank.
pub fn transmission_zeros(block: &RationalBlock, tol: &Tolerances) -> Result<Vec<C64>> {
    Ok(invariant_zeros(block, tol)?
        .into_iter()
        .map(|z| z.lambda)
        .filter(|&l| {
            let g = eval(block, l, tol);
            block_null_space(block, &g, tol).0.ncols() > 0
        })
        .collect())
}

/// Orthonormal basis of the numerical null space of the block at `lambda0`.
pub fn null_basis(block: &RationalBlock, lambda0: C64, tol: &Tolerances) -> Result<(CMat, usize)> {
    let g = eval(block, lambda0, tol);
    let (y, smin, thr) = block_null_space(block, &g, tol);
    if y.ncols() == 0 {
        return Err(NetError::NotAZero {
            lambda: lambda0,
            sigma_min: smin,
            threshold: thr,
        });
    }
    let p = y.ncols();
    Ok((y, p))
}

/// One cluster of zeros across subsystems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroCluster {
    #[serde(with = "complex")]
    pub lambda0: C64,
    pub members: Vec<usize>,
}

/// Group per-subsystem zero lists into distinct zeros with increasing
/// member lists. A zero repeated within one subsystem counts once.
pub fn group_zeros(per_subsystem: &[Vec<C64>], tol: &Tolerances) -> Vec<ZeroCluster> {
    let flat: Vec<(usize, C64)> = per_subsystem
        .iter()
        .enumerate()
        .flat_map(|(i, zs)| zs.iter().map(move |&z| (i, z)))
        .collect();
    let values: Vec<C64> = flat.iter().map(|&(_, z)| z).collect();
    let mut out = Vec::new();
    for cl in cluster_indices(&values, tol.zero_group) {
        let sum: C64 = cl.iter().map(|&k| values[k]).sum();
        let mut members: Vec<usize> = cl.iter().map(|&k| flat[k].0).collect();
        members.sort_unstable();
        members.dedup();
        out.push(ZeroCluster {
            lambda0: sum / cl.len() as f64,
            members,
        });
    }
    out
}

/// Like [`cluster`] but returning member indices.
fn cluster_indices(values: &[C64], rel: f64) -> Vec<Vec<usize>> {
    let n = values.len();
    let mut label: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            let scale = 1.0 + values[i].norm().max(values[j].norm());
            if (values[i] - values[j]).norm() <= rel * scale {
                let (a, b) = (label[i], label[j]);
                if a != b {
                    for l in label.iter_mut() {
                        if *l == b {
                            *l = a;
                        }
                    }
                }
            }
        }
    }
    let mut seen: Vec<usize> = Vec::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        match seen.iter().position(|&l| l == label[i]) {
            Some(g) => groups[g].push(i),
            None => {
                seen.push(label[i]);
                groups.push(vec![i]);
            }
        }
    }
    groups
}

/// Which dual the zeros belong to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Observability,
    Controllability,
}

impl Side {
    fn local_block(self, system: &NetworkedSystem, i: usize) -> RationalBlock {
        match self {
            Side::Observability => make_block(system, i, BlockTag::G1),
            Side::Controllability => make_block(system, i, BlockTag::G1Bar),
        }
    }

    /// `(A_ST, A_SS)` or its dual `(A_TS^T, A_SS^T)`: maps a kernel vector
    /// to the internal output it produces.
    fn companions(self, system: &NetworkedSystem, i: usize) -> (Mat, Mat) {
        let s = system.subsystem(i);
        match self {
            Side::Observability => (s.a_st.clone(), s.a_ss.clone()),
            Side::Controllability => (s.a_ts.transpose(), s.a_ss.transpose()),
        }
    }
}

/// One subsystem's share of a zero group.
///
/// The local pencil kernel is split into directions with `x2 != 0`, described
/// by `y` (orthonormal `x2` basis) and the companion `x1`, and `hidden`
/// directions `(h, 0)` that are invisible in `x2`. For a zero away from the
/// spectrum of `A_TT`, `hidden` is empty and `y` spans the null space of the
/// transfer block.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupMember {
    pub subsystem: usize,
    pub lambda: C64,
    pub y: CMat,
    pub x1: CMat,
    pub hidden: CMat,
    /// Internal output produced by `(x1, y)`: `G2(l) y` away from poles.
    pub g2y: CMat,
    /// Internal output produced by the hidden directions.
    pub hidden_out: CMat,
}

impl GroupMember {
    pub fn p(&self) -> usize {
        self.y.ncols()
    }

    /// Same kernel expressed in the basis `y T` (T invertible).
    pub fn rebased(&self, t: &CMat) -> Self {
        Self {
            y: &self.y * t,
            x1: &self.x1 * t,
            g2y: &self.g2y * t,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZeroGroup {
    pub side: Side,
    pub lambda0: C64,
    pub members: Vec<GroupMember>,
}

fn split_kernel(kernel: &CMat, n: usize, thr: f64) -> (CMat, CMat, CMat) {
    let d = kernel.ncols();
    let m = kernel.nrows() - n;
    let kx1 = kernel.rows(0, n).into_owned();
    let kx2 = kernel.rows(n, m).into_owned();
    if m == 0 {
        return (CMat::zeros(0, 0), CMat::zeros(n, 0), kx1);
    }
    // x2 = U S V^H: directions with S > thr become (y, x1), the rest hidden.
    let rows = m.max(d);
    let mut padded = CMat::zeros(rows, d);
    padded.view_mut((0, 0), (m, d)).copy_from(&kx2);
    let svd = nalgebra::SVD::new(padded, true, true);
    let u = svd.u.expect("requested U");
    let v = svd.v_t.expect("requested V^H").adjoint();
    let sv = &svd.singular_values;
    let vis: Vec<usize> = (0..sv.len()).filter(|&k| sv[k] > thr).collect();
    let hid: Vec<usize> = (0..d).filter(|k| !vis.contains(k)).collect();
    let y = CMat::from_fn(m, vis.len(), |r, c| u[(r, vis[c])]);
    let x1 = CMat::from_fn(n, vis.len(), |r, c| {
        (0..d).map(|j| kx1[(r, j)] * v[(j, vis[c])]).sum::<C64>() / sv[vis[c]]
    });
    let hidden = CMat::from_fn(n, hid.len(), |r, c| (0..d).map(|j| kx1[(r, j)] * v[(j, hid[c])]).sum());
    (y, x1, hidden)
}

/// All zero groups for one side, using the complete local pencil kernels.
///
/// Fails with [`NetError::NotFcnr`] when some local block is not FCNR.
pub fn zero_groups(system: &NetworkedSystem, side: Side, tol: &Tolerances) -> Result<Vec<ZeroGroup>> {
    let n_sub = system.len();
    let mut zeros = Vec::with_capacity(n_sub);
    for i in 0..n_sub {
        zeros.push(invariant_zeros(&side.local_block(system, i), tol)?);
    }
    let lists: Vec<Vec<C64>> = zeros.iter().map(|zs| zs.iter().map(|z| z.lambda).collect()).collect();
    let clusters = group_zeros(&lists, tol);
    let mut groups = Vec::with_capacity(clusters.len());
    for cl in clusters {
        let mut members = Vec::new();
        for &i in &cl.members {
            let n = system.subsystem(i).a_tt.nrows();
            let (c2, d2) = side.companions(system, i);
            let (c2, d2) = (complexify(&c2), complexify(&d2));
            for z in zeros[i]
                .iter()
                .filter(|z| (z.lambda - cl.lambda0).norm() <= tol.group_radius(cl.lambda0.norm()))
            {
                let (y, x1, hidden) = split_kernel(&z.kernel, n, tol.null_rel);
                let g2y = &c2 * &x1 + &d2 * &y;
                let hidden_out = &c2 * &hidden;
                members.push(GroupMember {
                    subsystem: i,
                    lambda: z.lambda,
                    y,
                    x1,
                    hidden,
                    g2y,
                    hidden_out,
                });
            }
        }
        groups.push(ZeroGroup {
            side,
            lambda0: cl.lambda0,
            members,
        });
    }
    Ok(groups)
}

fn theta_block(system: &NetworkedSystem, side: Side, i: usize) -> Result<Mat> {
    let w = system.require_weights()?;
    let t = w.theta_blocks[i].clone();
    if side == Side::Controllability && t.diagonal().iter().any(|&x| x == 0.0) {
        return Err(NetError::SingularTheta { subsystem: i });
    }
    Ok(t)
}

/// `Gamma = G2(l0) Y (Y^H Y)^{-1/2}` for member `s` of an observability group.
pub fn gamma_obs(group: &ZeroGroup, s: usize) -> CMat {
    let m = &group.members[s];
    let gram = m.y.adjoint() * &m.y;
    let r = hermitian_inv_sqrt(&gram).expect("null basis has full column rank");
    &m.g2y * r
}

/// `Gamma_bar = G2bar(l0) Y (Y^H Theta^{-2} Y)^{-1/2}` for member `s` of a
/// controllability group.
pub fn gamma_ctrb(system: &NetworkedSystem, group: &ZeroGroup, s: usize) -> Result<CMat> {
    let m = &group.members[s];
    let theta = theta_block(system, Side::Controllability, m.subsystem)?;
    let inv2 = complexify(&theta.map(|x| if x == 0.0 { 0.0 } else { 1.0 / (x * x) }));
    let gram = m.y.adjoint() * inv2 * &m.y;
    let r = hermitian_inv_sqrt(&gram).expect("weighted Gram is positive definite");
    Ok(&m.g2y * r)
}

/// The Hermitian quadratic form a member contributes to the
/// definiteness test, together with the scale used for the margin.
///
/// Without hidden directions this is `I - Gamma^H Theta^2 Gamma`
/// (observability) or `I - Gamma_bar^H Gamma_bar` (controllability). With
/// hidden directions the form is written on the whole kernel, where the
/// hidden block contributes `-|Theta A_ST h|^2` (or `-|A_TS^T h|^2`).
pub fn member_form(system: &NetworkedSystem, group: &ZeroGroup, s: usize) -> Result<(CMat, f64)> {
    let m = &group.members[s];
    let p = m.p();
    let h = m.hidden.ncols();
    let theta = complexify(&theta_block(system, group.side, m.subsystem)?);
    let gamma = match group.side {
        Side::Observability => &theta * gamma_obs(group, s),
        Side::Controllability => gamma_ctrb(system, group, s)?,
    };
    let hidden_out = match group.side {
        Side::Observability => &theta * &m.hidden_out,
        Side::Controllability => m.hidden_out.clone(),
    };
    let rows = gamma.nrows();
    let z = crate::linalg::hstack(&[&gamma, &hidden_out], rows);
    let mut q = -(z.adjoint() * &z);
    for k in 0..p {
        q[(k, k)] += c64(1.0, 0.0);
    }
    let scale = 1.0 + sigma_max(&z).powi(2);
    debug_assert_eq!(q.nrows(), p + h);
    Ok((q, scale))
}

/// `|P(l) [x1; y]|` for each member: how well the stored kernel satisfies
/// the local pencil.
pub fn kernel_residuals(system: &NetworkedSystem, group: &ZeroGroup) -> Vec<f64> {
    group
        .members
        .iter()
        .map(|m| {
            let (e, f) = group.side.local_block(system, m.subsystem).pencil();
            let full = vstack(&[&m.x1, &m.y], m.p());
            ((e * m.lambda - f) * full).norm()
        })
        .collect()
}
