//! Small dense linear-algebra helpers shared across the crate: symmetry
//! measures, rank decisions, generalized Rayleigh quotients, complex matrix
//! exponentials, finite differences and a compact Nelder-Mead refiner.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Machine-epsilon based step for first-order central differences,
/// scaled by the magnitude of the expansion point.
pub fn fd_step(scale: f64) -> f64 {
    f64::EPSILON.cbrt() * scale.abs().max(1.0)
}

/// Step for second-order central differences.
pub fn fd2_step(scale: f64) -> f64 {
    f64::EPSILON.powf(0.25) * scale.abs().max(1.0)
}

pub fn sym_part(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn antisym_part(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m - m.transpose()) * 0.5
}

/// Relative departure from symmetry in Frobenius norm: ||M - M^T|| / max(1, ||M||).
pub fn symmetry_defect(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).norm() / m.norm().max(1.0)
}

/// Hermitian part (A + A^H)/2 of a complex matrix.
pub fn hermitian_part(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    (m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Eigenvalue range (min, max) of a real symmetric matrix.
pub fn symmetric_eigen_range(m: &DMatrix<f64>) -> (f64, f64) {
    let ev = m.clone().symmetric_eigen().eigenvalues;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in ev.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

/// Eigenvalue range (min, max) of a complex Hermitian matrix.
/// The input is symmetrized first so tiny Hermiticity defects do not leak
/// imaginary parts into the spectrum.
pub fn hermitian_eigen_range(m: &DMatrix<Complex64>) -> (f64, f64) {
    let h = hermitian_part(m);
    let ev = h.symmetric_eigen().eigenvalues;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in ev.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// Singular values sorted descending.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut sv: Vec<f64> = m.clone().svd(false, false).singular_values.iter().cloned().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Numerical rank at a relative cutoff: singular values above tol * sigma_max count.
/// Returns (rank, smallest_retained_or_zero, sigma_max).
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> (usize, f64, f64) {
    let sv = singular_values(m);
    let sigma_max = sv.first().copied().unwrap_or(0.0);
    if sigma_max == 0.0 {
        return (0, 0.0, 0.0);
    }
    let cut = rel_tol * sigma_max;
    let rank = sv.iter().filter(|&&s| s > cut).count();
    (rank, sv.get(rank.saturating_sub(1)).copied().unwrap_or(0.0), sigma_max)
}

/// Orthonormal basis of the row space of `m` (right singular vectors with
/// singular value above rel_tol * sigma_max), returned as columns.
pub fn row_space_basis(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let svd = m.clone().svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let sv = &svd.singular_values;
    let sigma_max = sv.iter().cloned().fold(0.0, f64::max);
    let mut cols = Vec::new();
    for (i, &s) in sv.iter().enumerate() {
        if sigma_max > 0.0 && s > rel_tol * sigma_max {
            cols.push(vt.row(i).transpose());
        }
    }
    let n = m.ncols();
    let mut basis = DMatrix::zeros(n, cols.len());
    for (j, c) in cols.iter().enumerate() {
        basis.set_column(j, c);
    }
    basis
}

/// Orthonormal basis of the (numerical) null space of a square matrix,
/// returned as columns; empty matrix when `m` has full rank.
pub fn null_space_basis(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let svd = m.clone().svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let sv = &svd.singular_values;
    let sigma_max = sv.iter().cloned().fold(0.0, f64::max);
    let n = m.ncols();
    let mut cols = Vec::new();
    for i in 0..n {
        let s = sv.get(i).copied().unwrap_or(0.0);
        if sigma_max == 0.0 || s <= rel_tol * sigma_max {
            if i < vt.nrows() {
                cols.push(vt.row(i).transpose());
            }
        }
    }
    let mut basis = DMatrix::zeros(n, cols.len());
    for (j, c) in cols.iter().enumerate() {
        basis.set_column(j, c);
    }
    basis
}

/// Smallest eigenvalue of the pencil (A, B) with A symmetric and B symmetric
/// positive definite, via the Cholesky congruence B = R^T R.
pub fn smallest_generalized_eigenvalue(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<f64> {
    let chol = b.clone().cholesky()?;
    // Solve R^-T A R^-1 without forming inverses explicitly: C = L^-1 A L^-T
    // where B = L L^T.
    let l = chol.l();
    let la = l.clone().solve_lower_triangular(a)?;
    let lat = l.solve_lower_triangular(&la.transpose())?;
    let c = sym_part(&lat);
    Some(symmetric_eigen_range(&c).0)
}

/// Matrix exponential of a complex square matrix (scaling-and-squaring with
/// Pade approximation, as provided by the dense backend).
pub fn expm(a: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    a.exp()
}

/// Promote a real matrix to complex entries.
pub fn complexify(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|x| Complex64::new(x, 0.0))
}

/// Central-difference Jacobian of a vector-valued map at `x`.
pub fn central_jacobian<F>(f: F, x: &DVector<f64>) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = x.len();
    let m = f(x).len();
    let mut jac = DMatrix::zeros(m, n);
    for j in 0..n {
        let h = fd_step(x[j]);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        let col = (f(&xp) - f(&xm)) / (2.0 * h);
        jac.set_column(j, &col);
    }
    jac
}

/// Central second partial d2 f / dx_i dx_j of a vector-valued map, at `x`.
pub fn central_second_partial<F>(f: F, x: &DVector<f64>, i: usize, j: usize) -> DVector<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let hi = fd2_step(x[i]);
    let hj = fd2_step(x[j]);
    if i == j {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += hi;
        xm[i] -= hi;
        (f(&xp) - f(x) * 2.0 + f(&xm)) / (hi * hi)
    } else {
        let mut xpp = x.clone();
        let mut xpm = x.clone();
        let mut xmp = x.clone();
        let mut xmm = x.clone();
        xpp[i] += hi;
        xpp[j] += hj;
        xpm[i] += hi;
        xpm[j] -= hj;
        xmp[i] -= hi;
        xmp[j] += hj;
        xmm[i] -= hi;
        xmm[j] -= hj;
        (f(&xpp) - f(&xpm) - f(&xmp) + f(&xmm)) / (4.0 * hi * hj)
    }
}

/// Nelder-Mead simplex minimizer for low-dimensional smooth objectives.
/// Used to polish worst-case points found on coarse parameter grids.
pub fn nelder_mead<F>(f: F, x0: &[f64], step: f64, max_iter: usize) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> f64,
{
    let n = x0.len();
    if n == 0 {
        return (Vec::new(), f(x0));
    }
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), f(x0)));
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += step;
        let fv = f(&v);
        simplex.push((v, fv));
    }
    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        if (worst - best).abs() <= 1e-14 * (1.0 + best.abs()) {
            break;
        }
        // centroid of all but the worst vertex
        let mut centroid = vec![0.0; n];
        for v in simplex.iter().take(n) {
            for (c, x) in centroid.iter_mut().zip(&v.0) {
                *c += x / n as f64;
            }
        }
        let xw = simplex[n].0.clone();
        let reflect: Vec<f64> = centroid
            .iter()
            .zip(&xw)
            .map(|(c, w)| c + alpha * (c - w))
            .collect();
        let fr = f(&reflect);
        if fr < simplex[0].1 {
            let expand: Vec<f64> = centroid
                .iter()
                .zip(&xw)
                .map(|(c, w)| c + gamma * (c - w))
                .collect();
            let fe = f(&expand);
            simplex[n] = if fe < fr { (expand, fe) } else { (reflect, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (reflect, fr);
        } else {
            let contract: Vec<f64> = centroid
                .iter()
                .zip(&xw)
                .map(|(c, w)| c + rho * (w - c))
                .collect();
            let fc = f(&contract);
            if fc < simplex[n].1 {
                simplex[n] = (contract, fc);
            } else {
                let x0v = simplex[0].0.clone();
                for v in simplex.iter_mut().skip(1) {
                    for (x, b) in v.0.iter_mut().zip(&x0v) {
                        *x = b + sigma * (*x - b);
                    }
                    v.1 = f(&v.0);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex.swap_remove(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn symmetry_defect_detects_asymmetry() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(symmetry_defect(&m), 0.0);
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert!(symmetry_defect(&m) > 0.5);
    }

    #[test]
    fn rank_of_singular_matrix() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1e-14, 0.0, 0.0, 0.0, 0.0]);
        let (rank, _, smax) = numerical_rank(&m, 1e-10);
        assert_eq!(rank, 1);
        assert_relative_eq!(smax, 1.0);
    }

    #[test]
    fn generalized_eigenvalue_matches_direct() {
        // A = diag(2, 6), B = diag(1, 2): pencil eigenvalues {2, 3}.
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 6.0]);
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        let lam = smallest_generalized_eigenvalue(&a, &b).unwrap();
        assert_relative_eq!(lam, 2.0, max_relative = 1e-12);
    }

    #[test]
    fn expm_rotation_block() {
        // exp(t J) with J = [[0,-1],[1,0]] is a rotation by t.
        let j = complexify(&DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]));
        let t = 0.7;
        let e = expm(&(j * Complex64::new(t, 0.0)));
        assert_relative_eq!(e[(0, 0)].re, t.cos(), max_relative = 1e-13);
        assert_relative_eq!(e[(1, 0)].re, t.sin(), max_relative = 1e-13);
        assert!(e[(0, 0)].im.abs() < 1e-14);
    }

    #[test]
    fn jacobian_of_quadratic_map() {
        let f = |x: &DVector<f64>| {
            DVector::from_vec(vec![x[0] * x[0] + x[1], 3.0 * x[1] * x[0]])
        };
        let x = DVector::from_vec(vec![1.5, -2.0]);
        let j = central_jacobian(f, &x);
        assert_relative_eq!(j[(0, 0)], 3.0, max_relative = 1e-9);
        assert_relative_eq!(j[(0, 1)], 1.0, max_relative = 1e-9);
        assert_relative_eq!(j[(1, 0)], -6.0, max_relative = 1e-9);
        assert_relative_eq!(j[(1, 1)], 4.5, max_relative = 1e-9);
    }

    #[test]
    fn second_partial_of_cubic() {
        let f = |x: &DVector<f64>| DVector::from_vec(vec![x[0] * x[0] * x[1]]);
        let x = DVector::from_vec(vec![1.0, 2.0]);
        let dxx = central_second_partial(&f, &x, 0, 0);
        let dxy = central_second_partial(&f, &x, 0, 1);
        assert!((dxx[0] - 4.0).abs() < 1e-5);
        assert!((dxy[0] - 2.0).abs() < 1e-5);
    }

    #[test]
    fn nelder_mead_finds_quadratic_minimum() {
        let f = |x: &[f64]| (x[0] - 1.0).powi(2) + 2.0 * (x[1] + 0.5).powi(2);
        let (x, fx) = nelder_mead(f, &[0.0, 0.0], 0.5, 200);
        assert!((x[0] - 1.0).abs() < 1e-6 && (x[1] + 0.5).abs() < 1e-6);
        assert!(fx < 1e-10);
    }
}
