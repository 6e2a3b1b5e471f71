#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use netsys::ensemble::{generate_member, EnsembleSpec, Span};
use netsys::linalg::{c64, CMat, Mat, C64};
use netsys::spectra::{BlockTag, RationalBlock};
use netsys::NetworkedSystem;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

pub fn complex_gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> CMat {
    CMat::from_fn(r, c, |_, _| c64(rng.sample(StandardNormal), rng.sample(StandardNormal)))
}

pub fn random_point(rng: &mut ChaCha8Rng) -> C64 {
    c64(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

pub fn orthogonal(rng: &mut ChaCha8Rng, n: usize) -> Mat {
    gaussian(rng, n, n).qr().q()
}

pub fn rel_diff(a: &CMat, b: &CMat) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(f64::MIN_POSITIVE)
}

pub fn member(seed: u64, n: usize) -> NetworkedSystem {
    let spec = EnsembleSpec {
        subsystems: Span::new(n, n),
        n_x: Span::new(1, 4),
        seed,
        ..Default::default()
    };
    generate_member(&spec, 0).unwrap()
}

pub fn default_member(seed: u64, index: usize) -> NetworkedSystem {
    let spec = EnsembleSpec { seed, ..Default::default() };
    generate_member(&spec, index).unwrap()
}

pub fn block(a: Mat, b: Mat, c: Mat, d: Mat) -> RationalBlock {
    RationalBlock { a, b, c, d, tag: BlockTag::G1, owner: 0 }
}

pub fn scalar_block(a: f64, b: f64, c: f64, d: f64) -> RationalBlock {
    let m = |x| Mat::from_element(1, 1, x);
    block(m(a), m(b), m(c), m(d))
}

/// `D + C (l I - A)^{-1} B` by direct inversion.
pub fn transfer(blk: &RationalBlock, lambda: C64) -> CMat {
    let n = blk.a.nrows();
    let cx = |m: &Mat| m.map(|x| c64(x, 0.0));
    let res = (CMat::identity(n, n) * lambda - cx(&blk.a)).try_inverse().unwrap();
    cx(&blk.d) + cx(&blk.c) * res * cx(&blk.b)
}

/// Block-diagonal real matrix.
pub fn blkdiag(blocks: &[&Mat]) -> Mat {
    let r: usize = blocks.iter().map(|b| b.nrows()).sum();
    let c: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(r, c);
    let (mut i, mut j) = (0, 0);
    for b in blocks {
        out.view_mut((i, j), b.shape()).copy_from(*b);
        i += b.nrows();
        j += b.ncols();
    }
    out
}

/// Relative difference with an absolute floor, for quantities that may be
/// structurally zero.
pub fn close(a: &CMat, b: &CMat, rel: f64, floor: f64) -> bool {
    (a - b).norm() <= rel * a.norm().max(b.norm()) + floor
}

/// State and output response `col{x, y}` of the interconnected network to
/// `u` at `lambda`, solving the loop equations for `(x, v)` directly. Works
/// for any real `Phi`.
pub fn network_response(sys: &NetworkedSystem, lambda: C64) -> CMat {
    let g = netsys::model::assemble_global_blocks(sys);
    let cx = |m: &Mat| m.map(|x| c64(x, 0.0));
    let phi = cx(sys.phi());
    let (n, m) = (g.a_tt.nrows(), g.a_ts.ncols());
    let mut k = CMat::zeros(n + m, n + m);
    k.view_mut((0, 0), (n, n)).copy_from(&(CMat::identity(n, n) * lambda - cx(&g.a_tt)));
    k.view_mut((0, n), (n, m)).copy_from(&(-cx(&g.a_ts)));
    k.view_mut((n, 0), (m, n)).copy_from(&(-(&phi * cx(&g.a_st))));
    k.view_mut((n, n), (m, m)).copy_from(&(CMat::identity(m, m) - &phi * cx(&g.a_ss)));
    let nu = g.b_t.ncols();
    let mut rhs = CMat::zeros(n + m, nu);
    rhs.view_mut((0, 0), (n, nu)).copy_from(&cx(&g.b_t));
    rhs.view_mut((n, 0), (m, nu)).copy_from(&(&phi * cx(&g.b_s)));
    let xv = k.lu().solve(&rhs).expect("loop equations are solvable");
    let ny = g.c_t.nrows();
    let mut out = CMat::zeros(ny, n + m);
    out.view_mut((0, 0), (ny, n)).copy_from(&cx(&g.c_t));
    out.view_mut((0, n), (ny, m)).copy_from(&cx(&g.c_s));
    let y = cx(&g.d) + out * &xv;
    let mut both = CMat::zeros(n + ny, nu);
    both.view_mut((0, 0), (n, nu)).copy_from(&xv.rows(0, n));
    both.view_mut((n, 0), (ny, nu)).copy_from(&y);
    both
}

/// The same response from a lifted realization.
pub fn lifted_response(l: &netsys::LiftedSystem, lambda: C64) -> CMat {
    let cx = |m: &Mat| m.map(|x| c64(x, 0.0));
    let n = l.a.nrows();
    let x = (CMat::identity(n, n) * lambda - cx(&l.a)).lu().solve(&cx(&l.b)).unwrap();
    let y = cx(&l.d) + cx(&l.c) * &x;
    let nu = l.b.ncols();
    let mut both = CMat::zeros(n + y.nrows(), nu);
    both.view_mut((0, 0), (n, nu)).copy_from(&x);
    both.view_mut((n, 0), (y.nrows(), nu)).copy_from(&y);
    both
}
