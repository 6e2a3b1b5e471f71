//! Networked-system data model.
//!
//! A networked system is `N` subsystems
//!
//! ```text
//! x(t+1, i) = A_TT(i) x + A_TS(i) v + B_T(i) u
//! z(t, i)   = A_ST(i) x + A_SS(i) v + B_S(i) u
//! y(t, i)   = C_T(i) x  + C_S(i) v  + D(i) u
//! ```
//!
//! coupled through the subsystem connection matrix (SCM): `v = Phi z`.

use std::collections::HashMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{NetError, Result};
use crate::linalg::{block_diag, complexify, is_finite, singular_values_real, vstack, C64, CMat, Mat};
use crate::tolerance::Tolerances;

/// Dimensions of one subsystem's signal vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SubsystemDims {
    pub n_x: usize,
    pub n_v: usize,
    pub n_u: usize,
    pub n_z: usize,
    pub n_y: usize,
}

/// Signal kinds, used to index offsets and totals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Signal {
    X,
    V,
    U,
    Z,
    Y,
}

impl SubsystemDims {
    pub fn get(&self, s: Signal) -> usize {
        match s {
            Signal::X => self.n_x,
            Signal::V => self.n_v,
            Signal::U => self.n_u,
            Signal::Z => self.n_z,
            Signal::Y => self.n_y,
        }
    }
}

/// Per-subsystem dimensions with cumulative offsets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dims {
    per: Vec<SubsystemDims>,
}

impl Dims {
    pub fn new(per: Vec<SubsystemDims>) -> Self {
        Self { per }
    }

    pub fn len(&self) -> usize {
        self.per.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per.is_empty()
    }

    pub fn subsystem(&self, i: usize) -> SubsystemDims {
        self.per[i]
    }

    /// `M_{s,i}`: sum of the first `i` subsystem dimensions (`M_{s,0} = 0`).
    pub fn offset(&self, s: Signal, i: usize) -> usize {
        self.per[..i].iter().map(|d| d.get(s)).sum()
    }

    /// `M_s`: total dimension.
    pub fn total(&self, s: Signal) -> usize {
        self.offset(s, self.per.len())
    }

    pub fn range(&self, s: Signal, i: usize) -> Range<usize> {
        let start = self.offset(s, i);
        start..start + self.per[i].get(s)
    }

    pub fn ranges(&self, s: Signal) -> Vec<Range<usize>> {
        (0..self.per.len()).map(|i| self.range(s, i)).collect()
    }

    /// Index of the subsystem owning global element `k` of signal `s`.
    pub fn owner(&self, s: Signal, k: usize) -> Option<usize> {
        (0..self.per.len()).find(|&i| self.range(s, i).contains(&k))
    }
}

/// The nine real matrix blocks of one subsystem.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsystemRealization {
    pub a_tt: Mat,
    pub a_ts: Mat,
    pub b_t: Mat,
    pub a_st: Mat,
    pub a_ss: Mat,
    pub b_s: Mat,
    pub c_t: Mat,
    pub c_s: Mat,
    pub d: Mat,
}

impl SubsystemRealization {
    /// All-zero realization with the given dimensions.
    pub fn zeros(d: SubsystemDims) -> Self {
        Self {
            a_tt: Mat::zeros(d.n_x, d.n_x),
            a_ts: Mat::zeros(d.n_x, d.n_v),
            b_t: Mat::zeros(d.n_x, d.n_u),
            a_st: Mat::zeros(d.n_z, d.n_x),
            a_ss: Mat::zeros(d.n_z, d.n_v),
            b_s: Mat::zeros(d.n_z, d.n_u),
            c_t: Mat::zeros(d.n_y, d.n_x),
            c_s: Mat::zeros(d.n_y, d.n_v),
            d: Mat::zeros(d.n_y, d.n_u),
        }
    }

    /// Dimensions read off the "defining" blocks (`A_TT`, `A_TS`, `B_T`,
    /// `A_ST`, `C_T`); [`Self::shape_errors`] checks the rest against them.
    pub fn dims(&self) -> SubsystemDims {
        SubsystemDims {
            n_x: self.a_tt.nrows(),
            n_v: self.a_ts.ncols(),
            n_u: self.b_t.ncols(),
            n_z: self.a_st.nrows(),
            n_y: self.c_t.nrows(),
        }
    }

    pub fn blocks(&self) -> [(&'static str, &Mat); 9] {
        [
            ("A_TT", &self.a_tt),
            ("A_TS", &self.a_ts),
            ("B_T", &self.b_t),
            ("A_ST", &self.a_st),
            ("A_SS", &self.a_ss),
            ("B_S", &self.b_s),
            ("C_T", &self.c_t),
            ("C_S", &self.c_s),
            ("D", &self.d),
        ]
    }

    pub fn shape_errors(&self) -> Vec<String> {
        let d = self.dims();
        let expected = [
            (d.n_x, d.n_x),
            (d.n_x, d.n_v),
            (d.n_x, d.n_u),
            (d.n_z, d.n_x),
            (d.n_z, d.n_v),
            (d.n_z, d.n_u),
            (d.n_y, d.n_x),
            (d.n_y, d.n_v),
            (d.n_y, d.n_u),
        ];
        self.blocks()
            .iter()
            .zip(expected)
            .filter(|((_, m), e)| m.shape() != *e)
            .map(|((name, m), e)| {
                format!("{name} is {}x{}, expected {}x{}", m.nrows(), m.ncols(), e.0, e.1)
            })
            .collect()
    }
}

/// The subsystem connection matrix and its partitions.
#[derive(Debug, Clone, PartialEq)]
pub struct Interconnection {
    pub phi: Mat,
    pub z_partition: Vec<Range<usize>>,
    pub v_partition: Vec<Range<usize>>,
    pub strict_assumption3: bool,
}

impl Interconnection {
    /// True when every entry is exactly 0 or 1.
    pub fn is_binary(&self) -> bool {
        self.phi.iter().all(|&x| x == 0.0 || x == 1.0)
    }

    /// True when every row has at most one nonzero entry and it equals one.
    pub fn is_unit_selecting(&self) -> bool {
        self.phi.row_iter().all(|row| {
            let nz: Vec<f64> = row.iter().copied().filter(|&x| x != 0.0).collect();
            nz.len() <= 1 && nz.iter().all(|&x| x == 1.0)
        })
    }
}

/// Out-degree weights `m(i)` and `Theta = diag(sqrt(m(i)))`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutDegreeWeights {
    pub m: Vec<usize>,
    pub theta: Mat,
    pub theta_blocks: Vec<Mat>,
}

impl OutDegreeWeights {
    /// Out-degree of subsystem `j`: sum of `m(i)` over its z-range.
    pub fn subsystem_out_degree(&self, z_range: Range<usize>) -> usize {
        self.m[z_range].iter().sum()
    }
}

/// `N` subsystems plus their interconnection. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkedSystem {
    dims: Dims,
    subsystems: Vec<SubsystemRealization>,
    interconnection: Interconnection,
    weights: Option<OutDegreeWeights>,
}

impl NetworkedSystem {
    /// Assemble a system. No admissibility checks happen here; run
    /// [`validate`] to obtain the list of problems.
    pub fn new(subsystems: Vec<SubsystemRealization>, phi: Mat, strict_assumption3: bool) -> Self {
        let dims = Dims::new(subsystems.iter().map(|s| s.dims()).collect());
        let interconnection = Interconnection {
            phi,
            z_partition: dims.ranges(Signal::Z),
            v_partition: dims.ranges(Signal::V),
            strict_assumption3,
        };
        let weights = out_degree_weights(&interconnection).ok();
        Self {
            dims,
            subsystems,
            interconnection,
            weights,
        }
    }

    pub fn dims(&self) -> &Dims {
        &self.dims
    }

    pub fn subsystems(&self) -> &[SubsystemRealization] {
        &self.subsystems
    }

    pub fn subsystem(&self, i: usize) -> &SubsystemRealization {
        &self.subsystems[i]
    }

    pub fn len(&self) -> usize {
        self.subsystems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsystems.is_empty()
    }

    pub fn interconnection(&self) -> &Interconnection {
        &self.interconnection
    }

    pub fn phi(&self) -> &Mat {
        &self.interconnection.phi
    }

    /// Cached out-degree weights; `None` when `Phi` is not binary.
    pub fn weights(&self) -> Option<&OutDegreeWeights> {
        self.weights.as_ref()
    }

    pub fn require_weights(&self) -> Result<&OutDegreeWeights> {
        match &self.weights {
            Some(w) => Ok(w),
            None => Err(out_degree_weights(&self.interconnection).unwrap_err()),
        }
    }

    /// Copy with some subsystems replaced; used by the synthesis loop.
    pub fn with_subsystems(&self, subsystems: Vec<SubsystemRealization>) -> Self {
        Self::new(
            subsystems,
            self.interconnection.phi.clone(),
            self.interconnection.strict_assumption3,
        )
    }

    pub fn with_phi(&self, phi: Mat) -> Self {
        Self::new(
            self.subsystems.clone(),
            phi,
            self.interconnection.strict_assumption3,
        )
    }

    /// Error unless [`validate`] reports no violations.
    pub fn ensure_admissible(&self) -> Result<()> {
        let report = validate(self);
        if report.is_admissible() {
            Ok(())
        } else {
            Err(NetError::Dimension(report.to_string()))
        }
    }
}

/// Category of an admissibility problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Dimension,
    NonFinite,
    ScmRow,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_admissible(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, kind: ViolationKind, message: String) {
        self.violations.push(Violation { kind, message });
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "admissible");
        }
        let msgs: Vec<&str> = self.violations.iter().map(|v| v.message.as_str()).collect();
        write!(f, "{}", msgs.join("; "))
    }
}

/// Report every violation of the dimension, finiteness and SCM-structure
/// hypotheses. Row and subsystem numbers in messages are 1-based.
pub fn validate(system: &NetworkedSystem) -> ValidationReport {
    let mut report = ValidationReport::default();
    for (i, sub) in system.subsystems.iter().enumerate() {
        for e in sub.shape_errors() {
            report.push(ViolationKind::Dimension, format!("subsystem {}: {e}", i + 1));
        }
        for (name, m) in sub.blocks() {
            if !is_finite(m) {
                report.push(
                    ViolationKind::NonFinite,
                    format!("subsystem {}: {name} has non-finite entries", i + 1),
                );
            }
        }
    }
    let phi = &system.interconnection.phi;
    let (mv, mz) = (system.dims.total(Signal::V), system.dims.total(Signal::Z));
    if phi.shape() != (mv, mz) {
        report.push(
            ViolationKind::Dimension,
            format!("phi is {}x{}, expected {mv}x{mz}", phi.nrows(), phi.ncols()),
        );
    }
    if !is_finite(phi) {
        report.push(ViolationKind::NonFinite, "phi has non-finite entries".into());
    }
    let strict = system.interconnection.strict_assumption3;
    for (r, row) in phi.row_iter().enumerate() {
        let nz: Vec<(usize, f64)> = row
            .iter()
            .enumerate()
            .filter(|(_, &x)| x != 0.0)
            .map(|(c, &x)| (c, x))
            .collect();
        match nz.len() {
            0 if strict => report.push(ViolationKind::ScmRow, format!("row {} is all-zero", r + 1)),
            0 | 1 => {}
            k => report.push(
                ViolationKind::ScmRow,
                format!("row {} has {k} nonzero entries", r + 1),
            ),
        }
        for (c, x) in nz {
            if x != 1.0 {
                report.push(
                    ViolationKind::ScmRow,
                    format!("row {}: entry in column {} is {x}, not 1", r + 1, c + 1),
                );
            }
        }
    }
    report
}

/// Column sums of a binary `Phi` and the derived `Theta` blocks.
pub fn out_degree_weights(ic: &Interconnection) -> Result<OutDegreeWeights> {
    let phi = &ic.phi;
    for r in 0..phi.nrows() {
        for c in 0..phi.ncols() {
            let x = phi[(r, c)];
            if x != 0.0 && x != 1.0 {
                return Err(NetError::NonBinary { row: r, col: c, value: x });
            }
        }
    }
    let m: Vec<usize> = (0..phi.ncols())
        .map(|c| phi.column(c).iter().filter(|&&x| x == 1.0).count())
        .collect();
    let theta = Mat::from_diagonal(&nalgebra::DVector::from_iterator(
        m.len(),
        m.iter().map(|&k| (k as f64).sqrt()),
    ));
    let theta_blocks = ic
        .z_partition
        .iter()
        .map(|r| theta.view((r.start, r.start), (r.len(), r.len())).into_owned())
        .collect();
    Ok(OutDegreeWeights { m, theta, theta_blocks })
}

/// `Phi^T Phi` in integer arithmetic, for binary `Phi`.
pub fn phi_gram_counts(phi: &Mat) -> Vec<Vec<usize>> {
    let n = phi.ncols();
    let mut g = vec![vec![0usize; n]; n];
    for row in phi.row_iter() {
        let ones: Vec<usize> = (0..n).filter(|&c| row[c] == 1.0).collect();
        for &a in &ones {
            for &b in &ones {
                g[a][b] += 1;
            }
        }
    }
    g
}

/// Result of the invertibility test on `I - Phi A_SS`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WellPosedness {
    pub well_posed: bool,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub tol: f64,
}

/// `I - Phi * diag(A_SS(i))`.
pub fn loop_matrix(system: &NetworkedSystem) -> Mat {
    let g = assemble_global_blocks(system);
    let mv = system.dims.total(Signal::V);
    Mat::identity(mv, mv) - system.phi() * &g.a_ss
}

pub fn check_well_posedness(system: &NetworkedSystem, tol: &Tolerances) -> WellPosedness {
    let l = loop_matrix(system);
    let n = l.nrows();
    if n == 0 {
        return WellPosedness {
            well_posed: true,
            sigma_min: f64::INFINITY,
            sigma_max: 0.0,
            tol: 0.0,
        };
    }
    let s = singular_values_real(&l);
    let (smin, smax) = (s[n - 1], s[0]);
    let t = tol.rank_tol(n, n, smax);
    WellPosedness {
        well_posed: smin > t,
        sigma_min: smin,
        sigma_max: smax,
        tol: t,
    }
}

pub fn ensure_well_posed(system: &NetworkedSystem, tol: &Tolerances) -> Result<WellPosedness> {
    let wp = check_well_posedness(system, tol);
    if wp.well_posed {
        Ok(wp)
    } else {
        Err(NetError::IllPosed {
            sigma_min: wp.sigma_min,
            tol: wp.tol,
        })
    }
}

/// Block-diagonal global matrices `A_TT = diag(A_TT(i))` and so on.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalBlocks {
    pub a_tt: Mat,
    pub a_ts: Mat,
    pub a_st: Mat,
    pub a_ss: Mat,
    pub b_t: Mat,
    pub b_s: Mat,
    pub c_t: Mat,
    pub c_s: Mat,
    pub d: Mat,
}

pub fn assemble_global_blocks(system: &NetworkedSystem) -> GlobalBlocks {
    let subs = &system.subsystems;
    let diag = |f: fn(&SubsystemRealization) -> &Mat| -> Mat {
        let blocks: Vec<&Mat> = subs.iter().map(f).collect();
        block_diag(&blocks)
    };
    GlobalBlocks {
        a_tt: diag(|s| &s.a_tt),
        a_ts: diag(|s| &s.a_ts),
        a_st: diag(|s| &s.a_st),
        a_ss: diag(|s| &s.a_ss),
        b_t: diag(|s| &s.b_t),
        b_s: diag(|s| &s.b_s),
        c_t: diag(|s| &s.c_t),
        c_s: diag(|s| &s.c_s),
        d: diag(|s| &s.d),
    }
}

/// The output stacks `M1 = col{lI - A_TT, -C_T, -Phi A_ST}` and
/// `M1hat = col{lI - A_TT, C_T, Theta A_ST}`, whose Gram matrices coincide.
pub fn output_stacks(system: &NetworkedSystem, lambda: C64) -> Result<(CMat, CMat)> {
    let w = system.require_weights()?;
    let g = assemble_global_blocks(system);
    let mx = system.dims.total(Signal::X);
    let pencil = CMat::identity(mx, mx) * lambda - complexify(&g.a_tt);
    let neg_ct = complexify(&(-&g.c_t));
    let neg_phi_ast = complexify(&(-(system.phi() * &g.a_st)));
    let ct = complexify(&g.c_t);
    let theta_ast = complexify(&(&w.theta * &g.a_st));
    let m1 = vstack(&[&pencil, &neg_ct, &neg_phi_ast], mx);
    let m1hat = vstack(&[&pencil, &ct, &theta_ast], mx);
    Ok((m1, m1hat))
}

/// Rewrite a system with an arbitrary real `Phi` into an equivalent one whose
/// SCM rows each select a single internal output with weight one (zero rows
/// are kept).
///
/// A row `v_r = w_1 z_a + w_2 z_b + ...` is split into one internal input per
/// term, duplicating the corresponding columns of `A_TS`, `A_SS` and `C_S`.
/// A weight `w != 1` is moved to the output side by appending a scaled copy
/// `w z_a` to the owner of `z_a` (scaled rows of `A_ST`, `A_SS`, `B_S`).
pub fn normalize_interconnection(system: &NetworkedSystem, tol: &Tolerances) -> Result<NetworkedSystem> {
    ensure_well_posed(system, tol)?;
    if system.interconnection.is_unit_selecting() {
        return Ok(system.clone());
    }
    let dims = &system.dims;
    let phi = system.phi();
    let n = system.len();

    // v side: per subsystem, list of (local source column, optional term).
    let mut v_plan: Vec<Vec<(usize, Option<(usize, f64)>)>> = vec![Vec::new(); n];
    for (i, plan) in v_plan.iter_mut().enumerate() {
        for (local, r) in dims.range(Signal::V, i).enumerate() {
            let terms: Vec<(usize, f64)> = (0..phi.ncols())
                .filter(|&c| phi[(r, c)] != 0.0)
                .map(|c| (c, phi[(r, c)]))
                .collect();
            if terms.is_empty() {
                plan.push((local, None));
            } else {
                plan.extend(terms.into_iter().map(|t| (local, Some(t))));
            }
        }
    }

    let pick_cols = |m: &Mat, cols: &[usize]| Mat::from_fn(m.nrows(), cols.len(), |r, c| m[(r, cols[c])]);
    let mut subs: Vec<SubsystemRealization> = system.subsystems.clone();
    for (i, sub) in subs.iter_mut().enumerate() {
        let cols: Vec<usize> = v_plan[i].iter().map(|(l, _)| *l).collect();
        sub.a_ts = pick_cols(&sub.a_ts, &cols);
        sub.a_ss = pick_cols(&sub.a_ss, &cols);
        sub.c_s = pick_cols(&sub.c_s, &cols);
    }

    // z side: scaled copies for non-unit weights, deduplicated by (column, weight).
    let mut extra: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut extra_index: HashMap<(usize, u64), (usize, usize)> = HashMap::new();
    for plan in &v_plan {
        for (_, term) in plan {
            if let Some((c, w)) = *term {
                if w != 1.0 && !extra_index.contains_key(&(c, w.to_bits())) {
                    let j = dims.owner(Signal::Z, c).expect("column within z range");
                    extra_index.insert((c, w.to_bits()), (j, extra[j].len()));
                    extra[j].push((c - dims.offset(Signal::Z, j), w));
                }
            }
        }
    }
    let append_rows = |m: &Mat, rows: &[(usize, f64)]| {
        let mut out = Mat::zeros(m.nrows() + rows.len(), m.ncols());
        out.view_mut((0, 0), m.shape()).copy_from(m);
        for (k, &(r, w)) in rows.iter().enumerate() {
            out.row_mut(m.nrows() + k).copy_from(&(m.row(r) * w));
        }
        out
    };
    for (j, sub) in subs.iter_mut().enumerate() {
        sub.a_st = append_rows(&sub.a_st, &extra[j]);
        sub.a_ss = append_rows(&sub.a_ss, &extra[j]);
        sub.b_s = append_rows(&sub.b_s, &extra[j]);
    }

    let new_dims = Dims::new(subs.iter().map(|s| s.dims()).collect());
    let new_col = |c: usize, w: f64| -> usize {
        let j = dims.owner(Signal::Z, c).expect("column within z range");
        if w == 1.0 {
            new_dims.offset(Signal::Z, j) + (c - dims.offset(Signal::Z, j))
        } else {
            let (owner, k) = extra_index[&(c, w.to_bits())];
            new_dims.offset(Signal::Z, owner) + dims.subsystem(owner).n_z + k
        }
    };
    let mv = new_dims.total(Signal::V);
    let mz = new_dims.total(Signal::Z);
    let mut new_phi = Mat::zeros(mv, mz);
    let mut row = 0;
    for plan in &v_plan {
        for (_, term) in plan {
            if let Some((c, w)) = *term {
                new_phi[(row, new_col(c, w))] = 1.0;
            }
            row += 1;
        }
    }
    let strict = new_phi.row_iter().all(|r| r.iter().any(|&x| x != 0.0));
    Ok(NetworkedSystem::new(subs, new_phi, strict))
}
