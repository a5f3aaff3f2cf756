//! First-order quasilinear systems with a partially damping source term,
//! their symmetrized linearization at an equilibrium, and the structural
//! checks that the stability machinery relies on.
//!
//! A system is written as
//!
//! ```text
//!     A0(V) dV/dt + sum_j A_j(V) dV/dx_j = H(V),      H = (0, H_2),
//! ```
//!
//! together with a symmetrizer S(V) making S*A_j symmetric and S*A0 positive
//! definite. States are split into a conserved block of size `n1` (rows the
//! source never touches) and a damped block of size `n2 = n - n1`.

use crate::error::{Error, Result};
use crate::linalg;
use crate::sampling::ball_samples;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fmt;

type MatFn = Box<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
type FluxFn = Box<dyn Fn(usize, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;
type VecFn = Box<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;

/// Systems for which a closed-form damped mode is available.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ClosedForm {
    /// Isentropic Euler flow with velocity relaxation; `gamma` is the
    /// adiabatic exponent of the pressure law, `lambda` the friction rate.
    EulerDamped { gamma: f64, lambda: f64 },
}

/// A quasilinear system given through its coefficient evaluators.
/// Immutable after construction and safe to share across threads.
pub struct SystemSpec {
    pub d: usize,
    pub n: usize,
    pub n1: usize,
    pub equilibrium: DVector<f64>,
    /// Radius of the state-space ball around the equilibrium on which the
    /// coefficients are trusted; sampling checks and the time integrator
    /// stay inside it.
    pub neighborhood_radius: f64,
    pub label: String,
    pub closed_form: Option<ClosedForm>,
    a0: MatFn,
    flux: FluxFn,
    source: VecFn,
    symmetrizer: MatFn,
    /// Exact Jacobian of V -> S(V) H(V), when the modeller can supply one;
    /// otherwise linearization falls back to central differences.
    sh_jacobian: Option<MatFn>,
    /// Set when A0 does not depend on the state, letting integrators factor
    /// it once instead of once per grid point.
    constant_a0: Option<DMatrix<f64>>,
}

impl fmt::Debug for SystemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemSpec")
            .field("label", &self.label)
            .field("d", &self.d)
            .field("n", &self.n)
            .field("n1", &self.n1)
            .field("equilibrium", &self.equilibrium)
            .finish()
    }
}

impl SystemSpec {
    pub fn new(
        d: usize,
        n: usize,
        n1: usize,
        equilibrium: DVector<f64>,
        a0: MatFn,
        flux: FluxFn,
        source: VecFn,
        symmetrizer: MatFn,
    ) -> Result<Self> {
        if !(1..=3).contains(&d) {
            return Err(Error::OutOfRange {
                what: format!("space dimension d = {d} (supported: 1..=3)"),
            });
        }
        if n == 0 || n1 > n {
            return Err(Error::DimensionMismatch {
                context: "state partition",
                expected: n,
                got: n1,
            });
        }
        if equilibrium.len() != n {
            return Err(Error::DimensionMismatch {
                context: "equilibrium state",
                expected: n,
                got: equilibrium.len(),
            });
        }
        let spec = Self {
            d,
            n,
            n1,
            equilibrium,
            neighborhood_radius: 0.1,
            label: String::from("custom"),
            closed_form: None,
            a0,
            flux,
            source,
            symmetrizer,
            sh_jacobian: None,
            constant_a0: None,
        };
        // Shape checks at the equilibrium so misuse fails fast.
        let v = spec.equilibrium.clone();
        for j in 0..=d {
            let m = if j == 0 { spec.a0(&v) } else { spec.flux(j - 1, &v) };
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::DimensionMismatch {
                    context: "coefficient matrix",
                    expected: n,
                    got: m.nrows().max(m.ncols()),
                });
            }
        }
        if spec.source(&v).len() != n || spec.symmetrizer(&v).nrows() != n {
            return Err(Error::DimensionMismatch {
                context: "source/symmetrizer",
                expected: n,
                got: spec.source(&v).len(),
            });
        }
        Ok(spec)
    }

    /// Constant-coefficient linear system `A0 dZ/dt + sum A_j dZ/dx_j = -L (V - Vbar)`
    /// with identity symmetrizer. `a` holds the d+1 matrices A0, A_1, ..., A_d.
    pub fn linear(
        d: usize,
        n1: usize,
        a: Vec<DMatrix<f64>>,
        damping: DMatrix<f64>,
        equilibrium: DVector<f64>,
    ) -> Result<Self> {
        let n = equilibrium.len();
        if a.len() != d + 1 {
            return Err(Error::DimensionMismatch {
                context: "coefficient matrix count",
                expected: d + 1,
                got: a.len(),
            });
        }
        let a0 = a[0].clone();
        let fluxes: Vec<DMatrix<f64>> = a[1..].to_vec();
        let damp = damping.clone();
        let vbar = equilibrium.clone();
        let exact = damping.clone();
        let mut spec = Self::new(
            d,
            n,
            n1,
            equilibrium,
            Box::new(move |_| a0.clone()),
            Box::new(move |j, _| fluxes[j].clone()),
            Box::new(move |v| -(&damp * (v - &vbar))),
            Box::new(move |v| DMatrix::identity(v.len(), v.len())),
        )?;
        spec.sh_jacobian = Some(Box::new(move |_| -exact.clone()));
        spec.constant_a0 = Some(a[0].clone());
        spec.label = String::from("linear");
        Ok(spec)
    }

    pub fn from_json_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: LinearSystemFile = serde_json::from_str(&text)?;
        file.build()
    }

    pub fn with_label(mut self, label: &str) -> Self {
        self.label = label.to_string();
        self
    }

    /// Declares that `A0(V)` equals `m` for every state.
    pub fn with_constant_a0(mut self, m: DMatrix<f64>) -> Self {
        self.constant_a0 = Some(m);
        self
    }

    pub fn constant_a0(&self) -> Option<&DMatrix<f64>> {
        self.constant_a0.as_ref()
    }

    pub fn with_radius(mut self, radius: f64) -> Self {
        self.neighborhood_radius = radius;
        self
    }

    pub fn with_closed_form(mut self, cf: ClosedForm) -> Self {
        self.closed_form = Some(cf);
        self
    }

    pub fn with_sh_jacobian(mut self, jac: MatFn) -> Self {
        self.sh_jacobian = Some(jac);
        self
    }

    pub fn n2(&self) -> usize {
        self.n - self.n1
    }

    pub fn a0(&self, v: &DVector<f64>) -> DMatrix<f64> {
        (self.a0)(v)
    }

    /// Flux matrix for spatial direction `j` (0-based, j < d).
    pub fn flux(&self, j: usize, v: &DVector<f64>) -> DMatrix<f64> {
        (self.flux)(j, v)
    }

    pub fn source(&self, v: &DVector<f64>) -> DVector<f64> {
        (self.source)(v)
    }

    pub fn symmetrizer(&self, v: &DVector<f64>) -> DMatrix<f64> {
        (self.symmetrizer)(v)
    }

    /// Symmetrized time weight S(V) A0(V).
    pub fn sym_a0(&self, v: &DVector<f64>) -> DMatrix<f64> {
        self.symmetrizer(v) * self.a0(v)
    }

    /// Symmetrized flux S(V) A_j(V).
    pub fn sym_flux(&self, j: usize, v: &DVector<f64>) -> DMatrix<f64> {
        self.symmetrizer(v) * self.flux(j, v)
    }

    /// Symmetrized source S(V) H(V).
    pub fn sym_source(&self, v: &DVector<f64>) -> DVector<f64> {
        self.symmetrizer(v) * self.source(v)
    }

    fn sh_jacobian_at(&self, v: &DVector<f64>) -> DMatrix<f64> {
        match &self.sh_jacobian {
            Some(j) => j(v),
            None => linalg::central_jacobian(|x| self.sym_source(x), v),
        }
    }

    /// Deviation `r(Z) = S(Vbar+Z) H(Vbar+Z) + L Z` of the source from its
    /// linearization; vanishes to second order at the equilibrium.
    pub fn source_remainder(&self, damping: &DMatrix<f64>, z: &DVector<f64>) -> DVector<f64> {
        let v = &self.equilibrium + z;
        self.sym_source(&v) + damping * z
    }
}

/// Symmetrized constant-coefficient linearization at the equilibrium.
#[derive(Clone, Debug)]
pub struct LinearizedSystem {
    pub d: usize,
    pub n: usize,
    pub n1: usize,
    /// Positive definite time weight S A0 at the equilibrium.
    pub a0: DMatrix<f64>,
    /// Symmetric fluxes S A_j at the equilibrium, one per spatial direction.
    pub a: Vec<DMatrix<f64>>,
    /// Damping matrix -D(S H); its first n1 rows vanish.
    pub l: DMatrix<f64>,
    /// Normalized damping N = (S A0)^-1 L.
    pub n_mat: DMatrix<f64>,
    /// Largest constant with (N eta, eta) >= kappa0 |N eta|^2; infinite when
    /// N = 0 (the bound is vacuous).
    pub kappa0: f64,
    a0_chol: Cholesky<f64, Dyn>,
}

impl LinearizedSystem {
    pub fn n2(&self) -> usize {
        self.n - self.n1
    }

    /// Transport symbol M_omega = (S A0)^-1 sum_j omega_j S A_j for a unit
    /// direction omega.
    pub fn m_omega(&self, omega: &[f64]) -> DMatrix<f64> {
        assert_eq!(omega.len(), self.d, "direction dimension");
        let mut s = DMatrix::zeros(self.n, self.n);
        for (j, &w) in omega.iter().enumerate() {
            s += &self.a[j] * w;
        }
        self.a0_chol.solve(&s)
    }

    /// Mode generator i*rho*M_omega + N at frequency xi; the zero mode has no
    /// transport part and evolves by N alone.
    pub fn generator(&self, xi: &[f64]) -> DMatrix<Complex64> {
        let rho = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
        if rho == 0.0 {
            return linalg::complexify(&self.n_mat);
        }
        let omega: Vec<f64> = xi.iter().map(|x| x / rho).collect();
        let m = self.m_omega(&omega);
        linalg::complexify(&m) * Complex64::new(0.0, rho) + linalg::complexify(&self.n_mat)
    }

    /// Lower-right n2 x n2 block of the damping matrix (an isomorphism of the
    /// damped block for genuinely dissipative systems).
    pub fn damping_block(&self) -> DMatrix<f64> {
        let n2 = self.n2();
        self.l.view((self.n1, self.n1), (n2, n2)).into_owned()
    }

    /// Solve the damping block against each column of `rhs`.
    pub fn damping_block_solve(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let block = self.damping_block();
        let lu = block.clone().lu();
        match lu.solve(rhs) {
            Some(x) => Ok(x),
            None => {
                let sv = linalg::singular_values(&block);
                Err(Error::SingularBlock {
                    min_sigma: sv.last().copied().unwrap_or(0.0),
                })
            }
        }
    }

    /// Lower-right block of the time weight.
    pub fn a0_22(&self) -> DMatrix<f64> {
        let n2 = self.n2();
        self.a0.view((self.n1, self.n1), (n2, n2)).into_owned()
    }

    /// Rows n1.. of the j-th symmetrized flux.
    pub fn a_lower_rows(&self, j: usize) -> DMatrix<f64> {
        self.a[j].view((self.n1, 0), (self.n2(), self.n)).into_owned()
    }

    pub fn solve_a0(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.a0_chol.solve(rhs)
    }
}

/// Tolerance for declaring a symmetrized flux symmetric.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Tolerance on the source at the declared equilibrium.
pub const EQUILIBRIUM_TOL: f64 = 1e-12;
/// Relative singular-value cutoff for rank decisions.
pub const RANK_TOL: f64 = 1e-10;

/// Build the symmetrized linearization of `spec` at its equilibrium.
pub fn linearize(spec: &SystemSpec) -> Result<LinearizedSystem> {
    let vbar = &spec.equilibrium;
    let n = spec.n;

    let residual = spec.source(vbar).amax();
    if residual > EQUILIBRIUM_TOL {
        return Err(Error::NotEquilibrium { residual });
    }

    let a0_raw = spec.sym_a0(vbar);
    let defect0 = linalg::symmetry_defect(&a0_raw);
    if defect0 > SYMMETRY_TOL {
        return Err(Error::NonSymmetric { index: 0, defect: defect0 });
    }
    let a0 = linalg::sym_part(&a0_raw);
    let (min_eig, _) = linalg::symmetric_eigen_range(&a0);
    let a0_chol = match a0.clone().cholesky() {
        Some(c) if min_eig > 0.0 => c,
        _ => return Err(Error::SingularWeight { min_eig }),
    };

    let mut a = Vec::with_capacity(spec.d);
    for j in 0..spec.d {
        let aj = spec.sym_flux(j, vbar);
        let defect = linalg::symmetry_defect(&aj);
        if defect > SYMMETRY_TOL {
            return Err(Error::NonSymmetric { index: j + 1, defect });
        }
        a.push(linalg::sym_part(&aj));
    }

    let l = -spec.sh_jacobian_at(vbar);
    // The damping must not act on the conserved block; anything else violates
    // the partially dissipative structure this crate is built around.
    let scale = l.amax().max(1.0);
    for i in 0..spec.n1 {
        for j in 0..n {
            if l[(i, j)].abs() > 1e-9 * scale {
                return Err(Error::Config(format!(
                    "damping matrix couples into conserved row {i} (entry {:.3e})",
                    l[(i, j)]
                )));
            }
        }
    }
    // Clamp the numerically-zero conserved rows so downstream algebra sees the
    // exact block structure.
    let mut l = l;
    for i in 0..spec.n1 {
        for j in 0..n {
            l[(i, j)] = 0.0;
        }
    }

    let n_mat = a0_chol.solve(&l);
    let kappa0 = match dissipativity_constant(&n_mat) {
        Dissipativity::Vacuous => f64::INFINITY,
        Dissipativity::Constant(c) => c,
    };

    Ok(LinearizedSystem {
        d: spec.d,
        n,
        n1: spec.n1,
        a0,
        a,
        l,
        n_mat,
        kappa0,
        a0_chol,
    })
}

/// Outcome of the dissipativity bound (M eta, eta) >= c |M eta|^2.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Dissipativity {
    /// M = 0: the bound holds with any constant.
    Vacuous,
    /// Largest admissible c, clamped at zero when no positive constant works.
    Constant(f64),
}

impl Dissipativity {
    pub fn value(self) -> f64 {
        match self {
            Dissipativity::Vacuous => f64::INFINITY,
            Dissipativity::Constant(c) => c,
        }
    }
}

/// Largest c >= 0 with (M eta, eta) >= c |M eta|^2 for all eta.
///
/// The quotient is minimized over the orthogonal complement of ker M. If the
/// range of M is not orthogonal to its kernel the infimum over all eta is
/// -infinity, and if the symmetric part is indefinite on the complement the
/// minimum is negative; both cases report 0.
pub fn dissipativity_constant(m: &DMatrix<f64>) -> Dissipativity {
    if m.amax() == 0.0 {
        return Dissipativity::Vacuous;
    }
    let q = linalg::row_space_basis(m, RANK_TOL);
    let k = linalg::null_space_basis(m, RANK_TOL);
    let mq = m * &q;
    if k.ncols() > 0 {
        let cross = (k.transpose() * &mq).norm();
        let scale = linalg::spectral_norm(m).max(1.0);
        if cross > 1e-12 * scale {
            return Dissipativity::Constant(0.0);
        }
    }
    let sym = linalg::sym_part(m);
    let a_r = &q.transpose() * &sym * &q;
    let b_r = mq.transpose() * &mq;
    match linalg::smallest_generalized_eigenvalue(&a_r, &b_r) {
        Some(lam) => Dissipativity::Constant(lam.max(0.0)),
        None => Dissipativity::Constant(0.0),
    }
}

/// Summary of sampling-based symmetrizability checks around the equilibrium.
#[derive(Clone, Debug, Serialize)]
pub struct SymmetrizabilityReport {
    pub samples: usize,
    /// Worst relative symmetry defect of S A_j over all j (0 = time weight)
    /// and sampled states.
    pub max_symmetry_defect: f64,
    pub worst_matrix_index: usize,
    /// Smallest eigenvalue of S A0 over the sampled states.
    pub min_weight_eigenvalue: f64,
    pub symmetric_pass: bool,
    pub positive_pass: bool,
}

impl SymmetrizabilityReport {
    pub fn pass(&self) -> bool {
        self.symmetric_pass && self.positive_pass
    }
}

/// Tolerance for the sampled symmetry/positivity verdicts.
pub const SAMPLING_TOL: f64 = 1e-9;

/// Check that the symmetrizer does its job on a neighborhood of the
/// equilibrium, not only at the equilibrium itself.
pub fn check_symmetrizability(spec: &SystemSpec, samples: usize) -> SymmetrizabilityReport {
    let pts = ball_samples(&spec.equilibrium, spec.neighborhood_radius, samples.max(1));
    let mut max_defect = 0.0;
    let mut worst = 0;
    let mut min_eig = f64::INFINITY;
    for v in &pts {
        for j in 0..=spec.d {
            let m = if j == 0 { spec.sym_a0(v) } else { spec.sym_flux(j - 1, v) };
            let defect = linalg::symmetry_defect(&m);
            if defect > max_defect {
                max_defect = defect;
                worst = j;
            }
            if j == 0 {
                let (lo, _) = linalg::symmetric_eigen_range(&linalg::sym_part(&m));
                min_eig = min_eig.min(lo);
            }
        }
    }
    SymmetrizabilityReport {
        samples: pts.len(),
        max_symmetry_defect: max_defect,
        worst_matrix_index: worst,
        min_weight_eigenvalue: min_eig,
        symmetric_pass: max_defect <= SAMPLING_TOL,
        positive_pass: min_eig > 0.0,
    }
}

/// Zero tolerance for first-order finite-difference derivatives.
const FD1_ZERO_TOL: f64 = 1e-7;
/// Zero tolerance for second-order finite-difference derivatives.
const FD2_ZERO_TOL: f64 = 1e-5;

/// Block-structure report: how closely the system matches the structural
/// assumptions under which the refined low-frequency analysis applies.
#[derive(Clone, Debug, Serialize)]
pub struct BlockStructureReport {
    /// Max over samples of the off-diagonal-block norm of the symmetrized
    /// time weight, relative to its full norm.
    pub weight_offdiag_norm: f64,
    /// Max |r(Z1, 0)| over sampled conserved-block perturbations, where r is
    /// the second-order source remainder.
    pub max_remainder_on_conserved: f64,
    /// Conserved-block flux submatrix vanishes at the equilibrium.
    pub flux_11_vanishes: bool,
    /// ... and its derivative along the conserved block vanishes too.
    pub flux_11_derivative_vanishes: bool,
    /// Derivative of the coupling flux block along the conserved block vanishes.
    pub flux_21_derivative_vanishes: bool,
    /// r restricted to conserved-block perturbations vanishes.
    pub remainder_vanishes_on_conserved: bool,
    /// r is exactly quadratic in the damped components (no higher terms, no
    /// dependence on the conserved components to second order).
    pub remainder_quadratic_in_damped: bool,
}

impl BlockStructureReport {
    pub fn pass(&self) -> bool {
        self.flux_11_vanishes
            && self.flux_11_derivative_vanishes
            && self.flux_21_derivative_vanishes
            && self.remainder_vanishes_on_conserved
            && self.remainder_quadratic_in_damped
    }
}

/// Probe the block structure of the system near its equilibrium.
///
/// The symmetrized time weight is expected to be block diagonal with respect
/// to the conserved/damped partition (the fluxes need not be), and the source
/// remainder r must be a quadratic form of the damped components only.
pub fn check_block_structure(spec: &SystemSpec) -> Result<BlockStructureReport> {
    let lin = linearize(spec)?;
    let vbar = &spec.equilibrium;
    let n = spec.n;
    let n1 = spec.n1;
    let n2 = n - n1;

    // Off-diagonal blocks of the weight over sampled states.
    let pts = ball_samples(vbar, spec.neighborhood_radius, 100);
    let mut offdiag: f64 = 0.0;
    for v in &pts {
        let w = spec.sym_a0(v);
        let upper = w.view((0, n1), (n1, n2)).norm();
        let lower = w.view((n1, 0), (n2, n1)).norm();
        offdiag = offdiag.max((upper.max(lower)) / w.norm().max(1.0));
    }

    // r on conserved-block perturbations.
    let mut max_r: f64 = 0.0;
    if n1 > 0 {
        let sub_center = DVector::zeros(n1);
        for z1 in ball_samples(&sub_center, spec.neighborhood_radius, 100) {
            let mut z = DVector::zeros(n);
            z.rows_mut(0, n1).copy_from(&z1);
            max_r = max_r.max(spec.source_remainder(&lin.l, &z).amax());
        }
    }

    // Flux structure at the equilibrium, via direct evaluation and central
    // differences along the conserved directions.
    let mut f11_val: f64 = 0.0;
    let mut f11_d: f64 = 0.0;
    let mut f21_d: f64 = 0.0;
    for j in 0..spec.d {
        let aj = spec.flux(j, vbar);
        if n1 > 0 {
            f11_val = f11_val.max(aj.view((0, 0), (n1, n1)).amax());
        }
        for i in 0..n1 {
            let h = linalg::fd_step(vbar[i]);
            let mut vp = vbar.clone();
            let mut vm = vbar.clone();
            vp[i] += h;
            vm[i] -= h;
            let diff = (spec.flux(j, &vp) - spec.flux(j, &vm)) / (2.0 * h);
            f11_d = f11_d.max(diff.view((0, 0), (n1, n1)).amax());
            f21_d = f21_d.max(diff.view((n1, 0), (n2, n1)).amax());
        }
    }

    // Quadratic structure of r: mixed second derivatives touching the
    // conserved block vanish, and pure damped-block scaling is exactly
    // homogeneous of degree two.
    let r = |z: &DVector<f64>| spec.source_remainder(&lin.l, z);
    let zero = DVector::zeros(n);
    let mut mixed: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            if i >= n1 && j >= n1 {
                continue;
            }
            mixed = mixed.max(linalg::central_second_partial(&r, &zero, i, j).amax());
        }
    }
    let mut homogeneity: f64 = 0.0;
    if n2 > 0 {
        let sub_center = DVector::zeros(n2);
        for z2 in ball_samples(&sub_center, 0.5 * spec.neighborhood_radius, 32) {
            let mut z = DVector::zeros(n);
            z.rows_mut(n1, n2).copy_from(&z2);
            let r1 = r(&z);
            let r2 = r(&(&z * 2.0));
            homogeneity = homogeneity.max((r2 - r1 * 4.0).amax());
        }
    }

    Ok(BlockStructureReport {
        weight_offdiag_norm: offdiag,
        max_remainder_on_conserved: max_r,
        flux_11_vanishes: f11_val <= SAMPLING_TOL,
        flux_11_derivative_vanishes: f11_d <= FD1_ZERO_TOL,
        flux_21_derivative_vanishes: f21_d <= FD1_ZERO_TOL,
        remainder_vanishes_on_conserved: max_r <= FD1_ZERO_TOL,
        remainder_quadratic_in_damped: mixed <= FD2_ZERO_TOL && homogeneity <= FD2_ZERO_TOL,
    })
}

/// On-disk description of a constant-coefficient linear system.
///
/// `a` lists the d+1 coefficient matrices (time weight first, then one per
/// spatial direction), each as n*n numbers in row-major order; `lmat` is the
/// damping matrix in the same layout.
#[derive(Debug, Serialize, Deserialize)]
pub struct LinearSystemFile {
    pub d: usize,
    pub n: usize,
    pub n1: usize,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "Lmat")]
    pub lmat: Vec<f64>,
    pub equilibrium: Vec<f64>,
}

impl LinearSystemFile {
    pub fn build(&self) -> Result<SystemSpec> {
        let n = self.n;
        if self.a.len() != self.d + 1 {
            return Err(Error::DimensionMismatch {
                context: "matrix list in system file",
                expected: self.d + 1,
                got: self.a.len(),
            });
        }
        let mut mats = Vec::with_capacity(self.a.len());
        for raw in &self.a {
            if raw.len() != n * n {
                return Err(Error::DimensionMismatch {
                    context: "matrix entries in system file",
                    expected: n * n,
                    got: raw.len(),
                });
            }
            mats.push(DMatrix::from_row_slice(n, n, raw));
        }
        if self.lmat.len() != n * n {
            return Err(Error::DimensionMismatch {
                context: "damping entries in system file",
                expected: n * n,
                got: self.lmat.len(),
            });
        }
        let lmat = DMatrix::from_row_slice(n, n, &self.lmat);
        if self.equilibrium.len() != n {
            return Err(Error::DimensionMismatch {
                context: "equilibrium in system file",
                expected: n,
                got: self.equilibrium.len(),
            });
        }
        let spec = SystemSpec::linear(
            self.d,
            self.n1,
            mats,
            lmat,
            DVector::from_vec(self.equilibrium.clone()),
        )?;
        Ok(spec.with_label("file"))
    }
}
