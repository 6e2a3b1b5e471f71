//! Dense linear-algebra helpers on top of `nalgebra`.
//!
//! Inputs are real; every spectral quantity is computed in complex
//! arithmetic. Empty matrices are legal everywhere and handled up front,
//! since `nalgebra` decompositions do not accept zero-sized inputs.

use nalgebra::{Complex, ComplexField, DMatrix, DVector, SymmetricEigen, SVD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type C64 = Complex<f64>;
pub type Mat = DMatrix<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub fn c64(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

pub fn complexify(m: &Mat) -> CMat {
    m.map(|x| Complex::new(x, 0.0))
}

/// Singular values in descending order. Empty matrices have none.
pub fn singular_values(m: &CMat) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let svd = SVD::new(m.clone(), false, false);
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

pub fn singular_values_real(m: &Mat) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let svd = SVD::new(m.clone(), false, false);
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

pub fn sigma_max(m: &CMat) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

pub fn sigma_max_real(m: &Mat) -> f64 {
    singular_values_real(m).first().copied().unwrap_or(0.0)
}

/// Full-column-rank margin: `(sigma_min, sigma_max)` where `sigma_min` is the
/// `ncols`-th singular value (zero for wide matrices, `+inf` when there are
/// no columns at all).
pub fn column_rank_margin(m: &CMat) -> (f64, f64) {
    if m.ncols() == 0 {
        return (f64::INFINITY, 0.0);
    }
    if m.nrows() < m.ncols() {
        return (0.0, sigma_max(m));
    }
    let s = singular_values(m);
    (s[m.ncols() - 1], s[0])
}

/// Right singular vectors, as columns, with the singular values attached
/// (descending). Wide inputs are padded with zero rows so `V` is complete.
fn full_right_svd(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.ncols();
    let rows = m.nrows().max(n);
    let mut padded = CMat::zeros(rows, n);
    padded.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
    let svd = SVD::new(padded, false, true);
    let v = svd.v_t.expect("requested V^H").adjoint();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sv = order.iter().map(|&i| svd.singular_values[i]).collect();
    let vs = CMat::from_fn(n, n, |r, c| v[(r, order[c])]);
    (sv, vs)
}

/// Orthonormal basis of the numerical null space: right singular vectors
/// whose singular value is at most `rel * sigma_max`.
pub fn null_space(m: &CMat, rel: f64) -> CMat {
    let n = m.ncols();
    if n == 0 {
        return CMat::zeros(0, 0);
    }
    if m.nrows() == 0 {
        return CMat::identity(n, n);
    }
    let (s, v) = full_right_svd(m);
    let thr = rel * s[0];
    let idx: Vec<usize> = (0..n).filter(|&i| s[i] <= thr).collect();
    CMat::from_fn(n, idx.len(), |r, c| v[(r, idx[c])])
}

/// Smallest singular value over the column space and its right singular
/// vector (unit norm).
pub fn smallest_right_singular(m: &CMat) -> (f64, CVec) {
    let n = m.ncols();
    assert!(n > 0, "no columns");
    if m.nrows() == 0 {
        let mut e = CVec::zeros(n);
        e[0] = c64(1.0, 0.0);
        return (0.0, e);
    }
    let (s, v) = full_right_svd(m);
    let smin = if m.nrows() < n { 0.0 } else { s[n - 1] };
    (smin, v.column(n - 1).into_owned())
}

/// Eigenvalues of a real square matrix.
///
/// Uses faer: nalgebra's real Schur iteration fails to converge on some
/// matrices with repeated eigenvalues.
pub fn eigenvalues(a: &Mat) -> Vec<C64> {
    let n = a.nrows();
    if n == 0 {
        return Vec::new();
    }
    assert!(is_finite(a), "eigenvalues of a non-finite matrix");
    let m = faer::Mat::<f64>::from_fn(n, n, |i, j| a[(i, j)]);
    m.eigenvalues()
        .expect("eigenvalue iteration converges")
        .into_iter()
        .map(|z| c64(z.re, z.im))
        .collect()
}

/// Ascending eigenvalues of a Hermitian matrix (symmetrised first).
pub fn hermitian_eigenvalues(h: &CMat) -> Vec<f64> {
    if h.nrows() == 0 {
        return Vec::new();
    }
    let sym = (h + h.adjoint()) * c64(0.5, 0.0);
    let mut ev: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// `G^{-1/2}` for a Hermitian positive-definite `G`; `None` when `G` has a
/// nonpositive eigenvalue.
pub fn hermitian_inv_sqrt(g: &CMat) -> Option<CMat> {
    let n = g.nrows();
    if n == 0 {
        return Some(CMat::zeros(0, 0));
    }
    let sym = (g + g.adjoint()) * c64(0.5, 0.0);
    let eig = SymmetricEigen::new(sym);
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return None;
    }
    let q = &eig.eigenvectors;
    let d = CMat::from_diagonal(&eig.eigenvalues.map(|l| c64(1.0 / l.sqrt(), 0.0)));
    Some(q * d * q.adjoint())
}

/// `G^{1/2}` for a Hermitian positive-semidefinite `G`.
pub fn hermitian_sqrt(g: &CMat) -> CMat {
    let n = g.nrows();
    if n == 0 {
        return CMat::zeros(0, 0);
    }
    let sym = (g + g.adjoint()) * c64(0.5, 0.0);
    let eig = SymmetricEigen::new(sym);
    let q = &eig.eigenvectors;
    let d = CMat::from_diagonal(&eig.eigenvalues.map(|l| c64(l.max(0.0).sqrt(), 0.0)));
    q * d * q.adjoint()
}

/// Moore-Penrose pseudo-inverse with relative cutoff `rel * sigma_max`.
pub fn pinv(m: &CMat, rel: f64) -> CMat {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return CMat::zeros(c, r);
    }
    let svd = SVD::new(m.clone(), true, true);
    let smax = svd.singular_values.max();
    svd.pseudo_inverse(rel * smax.max(f64::MIN_POSITIVE))
        .expect("U and V were requested")
}

/// A set of numerically coincident eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub center: C64,
    pub size: usize,
    /// Largest distance of a member from the centre.
    pub spread: f64,
}

/// Single-linkage clustering with radius `rel * (1 + |lambda|)`.
pub fn cluster(values: &[C64], rel: f64) -> Vec<Cluster> {
    let n = values.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            let scale = 1.0 + values[i].norm().max(values[j].norm());
            if (values[i] - values[j]).norm() <= rel * scale {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[b] = a;
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut root_slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if root_slot[r] == usize::MAX {
            root_slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[root_slot[r]].push(i);
    }
    groups
        .into_iter()
        .map(|members| {
            let sum: C64 = members.iter().map(|&i| values[i]).sum();
            let center = sum / members.len() as f64;
            let spread = members
                .iter()
                .map(|&i| (values[i] - center).norm())
                .fold(0.0, f64::max);
            Cluster {
                center,
                size: members.len(),
                spread,
            }
        })
        .collect()
}

pub fn block_diag(blocks: &[&Mat]) -> Mat {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(*b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Stack blocks vertically; all must share the column count `cols`.
pub fn vstack<T: ComplexField>(blocks: &[&DMatrix<T>], cols: usize) -> DMatrix<T> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        assert_eq!(b.ncols(), cols, "vstack column mismatch");
        out.view_mut((r, 0), b.shape()).copy_from(*b);
        r += b.nrows();
    }
    out
}

/// Stack blocks horizontally; all must share the row count `rows`.
pub fn hstack<T: ComplexField>(blocks: &[&DMatrix<T>], rows: usize) -> DMatrix<T> {
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        assert_eq!(b.nrows(), rows, "hstack row mismatch");
        out.view_mut((0, c), b.shape()).copy_from(*b);
        c += b.ncols();
    }
    out
}

/// Descend `sigma_min(lambda * E - F)` by alternating between the smallest
/// right singular vector `v` and the least-squares update
/// `lambda = (E v)^H (F v) / |E v|^2`. Each step cannot increase the margin.
pub fn refine_pencil_point(e: &CMat, f: &CMat, lambda: C64, iters: usize) -> (C64, f64) {
    let eval = |l: C64| -> CMat { e * l - f };
    let mut best = lambda;
    let (mut best_s, mut v) = smallest_right_singular(&eval(best));
    for _ in 0..iters {
        let ev = e * &v;
        let denom = ev.norm_squared();
        if denom <= f64::EPSILON {
            break;
        }
        let fv = f * &v;
        let cand = ev.dotc(&fv) / denom;
        if !cand.re.is_finite() || !cand.im.is_finite() {
            break;
        }
        let (s, w) = smallest_right_singular(&eval(cand));
        if s < best_s {
            best = cand;
            best_s = s;
            v = w;
        } else {
            break;
        }
    }
    (best, best_s)
}

/// Finite generalized eigenvalues of the square pencil
/// `lambda * diag(I_n, 0) - F` by shift-and-invert: with `S = (F - sigma E)^{-1}`
/// the finite eigenvalues are `sigma + 1/mu` for the nonzero eigenvalues `mu`
/// of the leading `n x n` block of `S`.
///
/// Returns `None` when `F - sigma E` is singular for every trial shift, i.e.
/// the pencil is singular.
pub fn finite_pencil_eigenvalues(n: usize, f: &Mat) -> Option<Vec<C64>> {
    let dim = f.nrows();
    assert_eq!(dim, f.ncols(), "pencil must be square");
    assert!(n <= dim);
    if n == 0 {
        // No dynamics: the pencil is constant, and regular iff F invertible.
        if dim == 0 {
            return Some(Vec::new());
        }
        let s = singular_values_real(f);
        return if s[dim - 1] > 1e-12 * s[0].max(1.0) {
            Some(Vec::new())
        } else {
            None
        };
    }
    let scale = 1.0 + f.norm() / (dim as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0f_5b1f7);
    for _ in 0..8 {
        let sigma = scale * rng.random_range(-1.3..1.3);
        let mut shifted = f.clone();
        for i in 0..n {
            shifted[(i, i)] -= sigma;
        }
        let s = singular_values_real(&shifted);
        if s[dim - 1] <= 1e-11 * s[0] {
            continue;
        }
        let Some(inv) = shifted.try_inverse() else {
            continue;
        };
        let lead = inv.view((0, 0), (n, n)).into_owned();
        let mu = eigenvalues(&lead);
        let mu_floor = 1e-9 * lead.norm().max(f64::MIN_POSITIVE);
        let lambdas = mu
            .into_iter()
            .filter(|m| m.norm() > mu_floor)
            .map(|m| c64(sigma, 0.0) + c64(1.0, 0.0) / m)
            .collect();
        return Some(lambdas);
    }
    None
}

/// Deterministic Gaussian matrix used to square up tall pencils.
pub fn projection_matrix(rows: usize, cols: usize, seed: u64) -> Mat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Mat::from_fn(rows, cols, |_, _| rng.sample(rand_distr::StandardNormal))
}

pub fn is_finite(m: &Mat) -> bool {
    m.iter().all(|x| x.is_finite())
}

pub fn rel_frobenius_diff(a: &CMat, b: &CMat) -> f64 {
    let denom = a.norm().max(b.norm()).max(f64::MIN_POSITIVE);
    (a - b).norm() / denom
}
