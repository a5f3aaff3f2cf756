//! Dyadic frequency decomposition and the Besov-type norms built from it.
//!
//! The radial cutoff [`chi`] equals 1 below 3/4 and 0 above 4/3, glued with
//! the standard smooth step `e^{-1/s}`.  The annulus bump
//! `φ(t) = χ(t/2) - χ(t)` is supported in `[3/4, 8/3]` and telescopes:
//! summing `φ(2^{-q} t)` over `q ∈ [a, b]` gives
//! `χ(2^{-(b+1)} t) - χ(2^{-a} t)`, so on any finite grid a finite block range
//! reconstructs every nonzero frequency exactly.
//!
//! The zero mode belongs to no block: all block norms see only the
//! oscillating (mean-free) part of a field.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::SpectralField;

/// Smooth low-pass cutoff: 1 on `[0, 3/4]`, 0 on `[4/3, ∞)`.
pub fn chi(t: f64) -> f64 {
    let t = t.abs();
    if t <= 0.75 {
        1.0
    } else if t >= 4.0 / 3.0 {
        0.0
    } else {
        let a = smooth_step(4.0 / 3.0 - t);
        let b = smooth_step(t - 0.75);
        a / (a + b)
    }
}

/// Annulus bump `φ(t) = χ(t/2) - χ(t)`, supported in `[3/4, 8/3]`.
pub fn phi(t: f64) -> f64 {
    chi(0.5 * t) - chi(t)
}

fn smooth_step(s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else {
        (-1.0 / s).exp()
    }
}

/// Inclusive range of dyadic indices a grid can resolve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockRange {
    pub q_min: i32,
    pub q_max: i32,
}

impl BlockRange {
    pub fn iter(&self) -> impl Iterator<Item = i32> {
        self.q_min..=self.q_max
    }

    pub fn contains(&self, q: i32) -> bool {
        (self.q_min..=self.q_max).contains(&q)
    }
}

/// Block range covering every nonzero grid frequency of `field`.
///
/// The lowest nonzero frequency is `2π/L`, the largest is `√d · π·res/L`;
/// the returned range leaves one spare block on each side so the telescoped
/// cutoffs evaluate to exactly 1 across the whole resolved spectrum.
pub fn grid_block_range(field: &SpectralField) -> BlockRange {
    let xi_min = 2.0 * std::f64::consts::PI / field.l_box;
    let xi_max = xi_min * (field.res as f64 / 2.0) * (field.d as f64).sqrt();
    let q_min = xi_min.log2().floor() as i32 - 1;
    let q_max = xi_max.log2().ceil() as i32 + 1;
    BlockRange { q_min, q_max }
}

/// Fails when a requested band extends beyond what the grid resolves.
pub fn check_band(range: BlockRange, q_lo: i32, q_hi: i32) -> Result<()> {
    if q_lo < range.q_min || q_hi > range.q_max {
        return Err(Error::UnresolvedBand {
            q_lo,
            q_hi,
            q_min: range.q_min,
            q_max: range.q_max,
        });
    }
    Ok(())
}

/// The dyadic block `Δ_q z`: every coefficient scaled by `φ(2^{-q} |ξ|)`.
pub fn dyadic_block(field: &SpectralField, q: i32) -> SpectralField {
    let mut out = field.clone();
    let scale = 2.0f64.powi(-q);
    let total = field.total();
    let weights: Vec<f64> = (0..total)
        .map(|flat| phi(scale * field.xi_norm(flat)))
        .collect();
    for c in 0..out.n_components() {
        let coeffs = out.coeffs_mut(c);
        for (v, &w) in coeffs.iter_mut().zip(&weights) {
            *v *= w;
        }
    }
    out
}

/// Per-block `L²` norms of a field, the raw material of every Besov norm.
#[derive(Debug, Clone)]
pub struct BlockProfile {
    pub d: usize,
    pub l_box: f64,
    /// `q → ‖Δ_q z‖_{L²}` over the grid-resolved range.
    pub norms: BTreeMap<i32, f64>,
}

/// Computes `‖Δ_q z‖_{L²}` for every resolvable block, optionally under a
/// constant symmetric component weight: `‖z‖² = L^d Σ_k φ_q(|ξ_k|)² (Wẑ|ẑ)`.
pub fn block_profile_weighted(
    field: &SpectralField,
    weight: Option<&DMatrix<f64>>,
) -> BlockProfile {
    let range = grid_block_range(field);
    let total = field.total();
    let ncomp = field.n_components();
    let xi: Vec<f64> = (0..total).map(|flat| field.xi_norm(flat)).collect();
    // Quadratic form (W ẑ|ẑ) per mode (or plain |ẑ|² when unweighted).
    let mut density = vec![0.0f64; total];
    match weight {
        None => {
            for c in 0..ncomp {
                for (dst, v) in density.iter_mut().zip(field.coeffs(c)) {
                    *dst += v.norm_sqr();
                }
            }
        }
        Some(w) => {
            assert_eq!(w.nrows(), ncomp, "weight size mismatch");
            let mut mode = vec![Complex64::default(); ncomp];
            for (flat, dst) in density.iter_mut().enumerate() {
                field.mode_into(flat, &mut mode);
                let mut acc = 0.0;
                for i in 0..ncomp {
                    for j in 0..ncomp {
                        acc += w[(i, j)] * (mode[i] * mode[j].conj()).re;
                    }
                }
                *dst = acc;
            }
        }
    }
    let vol = field.volume();
    let mut norms = BTreeMap::new();
    for q in range.iter() {
        let scale = 2.0f64.powi(-q);
        let mut acc = 0.0;
        for (flat, &rho) in density.iter().enumerate() {
            if rho == 0.0 {
                continue;
            }
            let w = phi(scale * xi[flat]);
            if w > 0.0 {
                acc += w * w * rho;
            }
        }
        norms.insert(q, (vol * acc).max(0.0).sqrt());
    }
    BlockProfile {
        d: field.d,
        l_box: field.l_box,
        norms,
    }
}

pub fn block_profile(field: &SpectralField) -> BlockProfile {
    block_profile_weighted(field, None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Summability {
    /// `ℓ¹` over blocks.
    Sum,
    /// `ℓ^∞` over blocks.
    Sup,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Band {
    All,
    /// Blocks with `q ≤ q_split`.
    Low,
    /// Blocks with `q > q_split`.
    High,
}

/// Splitting index for a real frequency threshold: `2^q ≤ λ ⟺ q ≤ ⌊log₂ λ⌋`.
pub fn q_split_for_lambda(lambda: f64) -> i32 {
    lambda.log2().floor() as i32
}

/// Homogeneous Besov-type norm `Σ_q 2^{qs} ‖Δ_q z‖` (or the sup over blocks),
/// restricted to the requested band relative to `q_split`.
pub fn besov_norm(
    profile: &BlockProfile,
    s: f64,
    summability: Summability,
    band: Band,
    q_split: i32,
) -> f64 {
    let terms = profile.norms.iter().filter_map(|(&q, &norm)| {
        let keep = match band {
            Band::All => true,
            Band::Low => q <= q_split,
            Band::High => q > q_split,
        };
        keep.then(|| 2.0f64.powf(s * q as f64) * norm)
    });
    match summability {
        Summability::Sum => terms.sum(),
        Summability::Sup => terms.fold(0.0, f64::max),
    }
}

/// Hybrid norm with different regularity below and above the split:
/// `Σ_{q ≤ q₀} 2^{q s_low} ‖Δ_q z‖ + Σ_{q > q₀} 2^{q s_high} ‖Δ_q z‖`.
pub fn hybrid_norm(profile: &BlockProfile, s_low: f64, s_high: f64, q_split: i32) -> f64 {
    besov_norm(profile, s_low, Summability::Sum, Band::Low, q_split)
        + besov_norm(profile, s_high, Summability::Sum, Band::High, q_split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{E, PI};

    #[test]
    fn cutoff_reference_values() {
        assert_eq!(chi(0.0), 1.0);
        assert_eq!(chi(0.75), 1.0);
        assert_eq!(chi(4.0 / 3.0), 0.0);
        assert_eq!(chi(10.0), 0.0);
        // Midpoint of the transition has equal glue weights.
        assert_relative_eq!(chi(25.0 / 24.0), 0.5, epsilon = 1e-15);
        // At t = 1 the weights are e^{-1/(1/3)} vs e^{-1/(7/12)}… frozen value:
        assert_relative_eq!(chi(1.0), 0.7310585786300049, epsilon = 1e-15);
        assert_relative_eq!(phi(1.0), 1.0 - 0.7310585786300049, epsilon = 1e-15);
        assert_relative_eq!(phi(2.0), 0.7310585786300049, epsilon = 1e-15);
        // Support bounds of the annulus bump.
        assert_eq!(phi(0.75), 0.0);
        assert_eq!(phi(8.0 / 3.0), 0.0);
        assert!(phi(1.5) > 0.99);
    }

    #[test]
    fn partition_of_unity_on_random_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..200 {
            let t = 2.0f64.powf(rng.gen_range(-10.0..10.0));
            let sum: f64 = (-14..=14).map(|q| phi(2.0f64.powi(-q) * t)).sum();
            assert_relative_eq!(sum, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn telescoping_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..50 {
            let t = 2.0f64.powf(rng.gen_range(-6.0..6.0));
            let (a, b) = (-5i32, 4i32);
            let sum: f64 = (a..=b).map(|q| phi(2.0f64.powi(-q) * t)).sum();
            let expected = chi(2.0f64.powi(-(b + 1)) * t) - chi(2.0f64.powi(-a) * t);
            assert_relative_eq!(sum, expected, epsilon = 1e-12);
        }
    }

    /// A pure cosine at |ξ| = 1 lands in exactly two blocks, with the weight
    /// ratio `φ(2)/φ(1) = e`.
    #[test]
    fn single_mode_block_split() {
        let mut field = SpectralField::zeros(1, 1, 16, 2.0 * PI).unwrap();
        let plus = field.flat_index(&[1]);
        let minus = field.flat_index(&[-1]);
        field.coeffs_mut(0)[plus] = Complex64::new(0.5, 0.0);
        field.coeffs_mut(0)[minus] = Complex64::new(0.5, 0.0);
        let profile = block_profile(&field);
        let active: Vec<i32> = profile
            .norms
            .iter()
            .filter(|(_, &v)| v > 1e-14)
            .map(|(&q, _)| q)
            .collect();
        assert_eq!(active, vec![-1, 0]);
        let ratio = profile.norms[&-1] / profile.norms[&0];
        assert_relative_eq!(ratio, E, epsilon = 1e-12);
        // Block norms recombine to the full L² norm: φ(2) + φ(1) = 1 on the
        // only active frequency, so the *linear* sum of block fields is exact,
        // while the squared norms combine through the partition weights.
        let total = field.l2_norm_sq(0).sqrt();
        let recombined =
            (profile.norms[&-1].powi(2) / phi(2.0) + profile.norms[&0].powi(2) / phi(1.0)).sqrt();
        assert_relative_eq!(recombined, total, epsilon = 1e-12);
    }

    fn random_mean_free_field(
        rng: &mut ChaCha8Rng,
        d: usize,
        res: usize,
        l_box: f64,
    ) -> SpectralField {
        let mut field = SpectralField::zeros(d, 2, res, l_box).unwrap();
        for c in 0..2 {
            for v in field.coeffs_mut(c).iter_mut() {
                *v = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            }
        }
        field.dealias();
        field.enforce_hermitian();
        // Remove the mean: blocks cannot see it.
        let zero = field.flat_index(&[0, 0, 0]);
        for c in 0..2 {
            field.coeffs_mut(c)[zero] = Complex64::default();
        }
        field
    }

    #[test]
    fn blocks_reconstruct_mean_free_fields() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for trial in 0..20 {
            let d = 1 + (trial % 2);
            let field = random_mean_free_field(&mut rng, d, 16, 2.0 * PI);
            let range = grid_block_range(&field);
            let mut sum = SpectralField::zeros(d, 2, 16, 2.0 * PI).unwrap();
            for q in range.iter() {
                sum.add_scaled(1.0, &dyadic_block(&field, q));
            }
            for c in 0..2 {
                let err: f64 = sum
                    .coeffs(c)
                    .iter()
                    .zip(field.coeffs(c))
                    .map(|(a, b)| (a - b).norm())
                    .fold(0.0, f64::max);
                assert!(err < 1e-10, "trial {trial}: reconstruction error {err}");
            }
        }
    }

    #[test]
    fn block_derivatives_obey_bernstein_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let field = random_mean_free_field(&mut rng, 2, 32, 2.0 * PI);
        for q in [-1, 0, 1, 2] {
            let block = dyadic_block(&field, q);
            let norm_sq: f64 = (0..2).map(|c| block.l2_norm_sq(c)).sum();
            if norm_sq < 1e-20 {
                continue;
            }
            let deriv_sq: f64 = (0..2)
                .map(|a| {
                    let db = block.derivative(a);
                    (0..2).map(|c| db.l2_norm_sq(c)).sum::<f64>()
                })
                .sum();
            let ratio = (deriv_sq / norm_sq).sqrt() / 2.0f64.powi(q);
            assert!(
                (0.75..=8.0 / 3.0 + 1e-12).contains(&ratio),
                "q = {q}: derivative/norm ratio {ratio}"
            );
        }
    }

    #[test]
    fn distant_blocks_are_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let field = random_mean_free_field(&mut rng, 1, 64, 2.0 * PI);
        let b0 = dyadic_block(&field, 0);
        let b3 = dyadic_block(&field, 3);
        let inner: f64 = (0..2)
            .map(|c| {
                b0.coeffs(c)
                    .iter()
                    .zip(b3.coeffs(c))
                    .map(|(a, b)| (a * b.conj()).re)
                    .sum::<f64>()
            })
            .sum();
        assert!(inner.abs() < 1e-14);
    }

    /// Doubling every frequency (same coefficients, half the box) scales the
    /// norm by exactly `2^{s - d/2}`.
    #[test]
    fn besov_norm_rescaling_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let field = random_mean_free_field(&mut rng, 2, 16, 2.0 * PI);
        let mut halved = field.clone();
        halved.l_box = field.l_box / 2.0;
        for s in [-0.5, 0.0, 1.0, 2.0] {
            let a = besov_norm(&block_profile(&field), s, Summability::Sum, Band::All, 0);
            let b = besov_norm(&block_profile(&halved), s, Summability::Sum, Band::All, 0);
            assert_relative_eq!(b / a, 2.0f64.powf(s - 1.0), max_relative = 1e-12);
        }
    }

    #[test]
    fn band_split_is_additive_and_checked() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let field = random_mean_free_field(&mut rng, 1, 32, 2.0 * PI);
        let profile = block_profile(&field);
        let s = 0.5;
        let all = besov_norm(&profile, s, Summability::Sum, Band::All, 0);
        let low = besov_norm(&profile, s, Summability::Sum, Band::Low, 0);
        let high = besov_norm(&profile, s, Summability::Sum, Band::High, 0);
        assert_relative_eq!(low + high, all, max_relative = 1e-12);

        let range = grid_block_range(&field);
        assert!(check_band(range, range.q_min, range.q_max).is_ok());
        assert!(matches!(
            check_band(range, range.q_min - 5, range.q_max),
            Err(Error::UnresolvedBand { .. })
        ));
        assert_eq!(q_split_for_lambda(1.0), 0);
        assert_eq!(q_split_for_lambda(3.0), 1);
        assert_eq!(q_split_for_lambda(0.4), -2);
    }
}
