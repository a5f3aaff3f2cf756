//! Trajectory bookkeeping and decay-rate analysis.
//!
//! A [`TrajectoryRecord`] collects functional snapshots along a run and
//! maintains the running space-time quantities the stability theory bounds:
//! suprema, time integrals, and square-integrals of hybrid block norms.  On
//! top of that sit least-squares decay fits and the table of predicted decay
//! exponents for isotropic data of prescribed low-frequency regularity.

use serde::Serialize;
use std::collections::BTreeMap;
use std::io::Write as IoWrite;
use std::path::Path;

use crate::error::{Error, Result};
use crate::lp::{besov_norm, Band, BlockProfile, Summability};
use crate::lyapunov::FunctionalSnapshot;

fn low(profile: &BlockProfile, s: f64) -> f64 {
    besov_norm(profile, s, Summability::Sum, Band::Low, 0)
}

fn high(profile: &BlockProfile, s: f64) -> f64 {
    besov_norm(profile, s, Summability::Sum, Band::High, 0)
}

/// One stored sample of a trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub l: f64,
    pub l_refined: f64,
    pub l_tilde: f64,
    pub l_tilde_refined: f64,
    pub h_tilde: f64,
    pub h_tilde_refined: f64,
    /// Running space-time control quantity at the base regularity level.
    pub z_query: f64,
    /// Same one derivative higher.
    pub z_query_refined: f64,
    /// `‖Z‖ℓ at d/2-1`: the weakest norm the theory propagates.
    pub z_low_base: f64,
    /// `‖Z‖h at d/2+1`: the critical high-frequency norm.
    pub z_high_crit: f64,
    /// `‖Z₂‖ℓ at d/2-1`.
    pub z2_low_base: f64,
    /// `‖Z₂‖ℓ at d/2`.
    pub z2_low_mid: f64,
    /// `‖W‖ℓ at d/2-1`.
    pub w_low_base: f64,
}

/// Instantaneous norms that feed the trapezoid accumulators.
#[derive(Debug, Clone, Copy, Default)]
struct Instant {
    z_all_dp1: f64,
    wl_dm1: f64,
    z2l_d2: f64,
    z2l_dm1_sq: f64,
    zl_dp2: f64,
    z2l_dp1: f64,
    zh_dp1: f64,
    wl_d2: f64,
    z2l_d2_sq: f64,
}

/// Snapshot series with running space-time norms.
///
/// The base control quantity combines, over `[0, t]`:
/// sup of `‖Z‖ℓ_{d/2-1}` and `‖Z‖h_{d/2+1}`, the time integral of
/// `‖Z‖_{d/2+1}`, `‖W‖ℓ_{d/2-1}` and `‖Z₂‖ℓ_{d/2}`, and the `L²`-in-time
/// norm of `‖Z₂‖ℓ_{d/2-1}`.  The refined variant shifts every low-frequency
/// index up by one derivative and adds the integrated critical high norm.
#[derive(Debug, Clone, Default)]
pub struct TrajectoryRecord {
    samples: Vec<TrajectorySample>,
    prev: Option<(f64, Instant)>,
    sup_zl_dm1: f64,
    sup_zl_d2: f64,
    sup_zh_dp1: f64,
    int_z_dp1: f64,
    int_wl_dm1: f64,
    int_z2l_d2: f64,
    int_sq_z2l_dm1: f64,
    int_zl_dp2: f64,
    int_z2l_dp1: f64,
    int_zh_dp1: f64,
    int_wl_d2: f64,
    int_sq_z2l_d2: f64,
}

impl TrajectoryRecord {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn samples(&self) -> &[TrajectorySample] {
        &self.samples
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn column(&self, f: impl Fn(&TrajectorySample) -> f64) -> Vec<f64> {
        self.samples.iter().map(f).collect()
    }

    /// Appends a snapshot taken at time `t`; times must increase strictly.
    pub fn push(&mut self, t: f64, snap: &FunctionalSnapshot) -> Result<()> {
        if let Some((t_prev, _)) = self.prev {
            if t <= t_prev {
                return Err(Error::OutOfRange {
                    what: format!(
                        "trajectory times must increase strictly: got {t} after {t_prev}"
                    ),
                });
            }
        }
        let d2 = snap.z_profile.d as f64 / 2.0;
        let zp = &snap.z_profile;
        let z2p = &snap.z2_profile;
        let wp = &snap.w_profile;
        let z2l_dm1 = low(z2p, d2 - 1.0);
        let z2l_d2 = low(z2p, d2);
        let now = Instant {
            z_all_dp1: low(zp, d2 + 1.0) + high(zp, d2 + 1.0),
            wl_dm1: low(wp, d2 - 1.0),
            z2l_d2,
            z2l_dm1_sq: z2l_dm1 * z2l_dm1,
            zl_dp2: low(zp, d2 + 2.0),
            z2l_dp1: low(z2p, d2 + 1.0),
            zh_dp1: high(zp, d2 + 1.0),
            wl_d2: low(wp, d2),
            z2l_d2_sq: z2l_d2 * z2l_d2,
        };
        let zl_dm1 = low(zp, d2 - 1.0);
        let zl_d2 = low(zp, d2);
        self.sup_zl_dm1 = self.sup_zl_dm1.max(zl_dm1);
        self.sup_zl_d2 = self.sup_zl_d2.max(zl_d2);
        self.sup_zh_dp1 = self.sup_zh_dp1.max(now.zh_dp1);
        if let Some((t_prev, prev)) = self.prev {
            let h = 0.5 * (t - t_prev);
            self.int_z_dp1 += h * (prev.z_all_dp1 + now.z_all_dp1);
            self.int_wl_dm1 += h * (prev.wl_dm1 + now.wl_dm1);
            self.int_z2l_d2 += h * (prev.z2l_d2 + now.z2l_d2);
            self.int_sq_z2l_dm1 += h * (prev.z2l_dm1_sq + now.z2l_dm1_sq);
            self.int_zl_dp2 += h * (prev.zl_dp2 + now.zl_dp2);
            self.int_z2l_dp1 += h * (prev.z2l_dp1 + now.z2l_dp1);
            self.int_zh_dp1 += h * (prev.zh_dp1 + now.zh_dp1);
            self.int_wl_d2 += h * (prev.wl_d2 + now.wl_d2);
            self.int_sq_z2l_d2 += h * (prev.z2l_d2_sq + now.z2l_d2_sq);
        }
        let z_query = self.sup_zl_dm1
            + self.sup_zh_dp1
            + self.int_z_dp1
            + self.int_wl_dm1
            + self.int_z2l_d2
            + self.int_sq_z2l_dm1.max(0.0).sqrt();
        let z_query_refined = self.sup_zl_d2
            + self.sup_zh_dp1
            + self.int_zl_dp2
            + self.int_z2l_dp1
            + self.int_zh_dp1
            + self.int_wl_d2
            + self.int_sq_z2l_d2.max(0.0).sqrt();
        self.samples.push(TrajectorySample {
            t,
            l: snap.l,
            l_refined: snap.l_refined,
            l_tilde: snap.l_tilde,
            l_tilde_refined: snap.l_tilde_refined,
            h_tilde: snap.h_tilde,
            h_tilde_refined: snap.h_tilde_refined,
            z_query,
            z_query_refined,
            z_low_base: zl_dm1,
            z_high_crit: now.zh_dp1,
            z2_low_base: z2l_dm1,
            z2_low_mid: now.z2l_d2,
            w_low_base: now.wl_dm1,
        });
        self.prev = Some((t, now));
        Ok(())
    }

    /// Writes the sample table as CSV with full float precision.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        writeln!(
            f,
            "t,l,l_refined,l_tilde,l_tilde_refined,h_tilde,h_tilde_refined,\
             z_query,z_query_refined,z_low_base,z_high_crit,z2_low_base,z2_low_mid,w_low_base"
        )?;
        for s in &self.samples {
            writeln!(
                f,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                s.t,
                s.l,
                s.l_refined,
                s.l_tilde,
                s.l_tilde_refined,
                s.h_tilde,
                s.h_tilde_refined,
                s.z_query,
                s.z_query_refined,
                s.z_low_base,
                s.z_high_crit,
                s.z2_low_base,
                s.z2_low_mid,
                s.w_low_base
            )?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Decay fits
// ---------------------------------------------------------------------------

/// Result of a least-squares decay fit.
#[derive(Debug, Clone, Serialize)]
pub struct DecayFit {
    /// Fitted decay exponent (power of `⟨t⟩`) or rate (per unit time for
    /// exponential fits); positive means decay.
    pub exponent: f64,
    pub intercept: f64,
    pub r2: f64,
    pub samples: usize,
    pub window: (f64, f64),
    /// High-confidence fit: `R² ≥ 0.98` over at least ten samples.
    pub reliable: bool,
}

/// Fit quality threshold above which an exponent is reported as reliable.
pub const FIT_R2_THRESHOLD: f64 = 0.98;
/// Minimum number of samples inside the fit window.
pub const FIT_MIN_SAMPLES: usize = 10;

fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let xm = xs.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - xm).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let slope = sxy / sxx;
    let sse: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - ym - slope * (x - xm)).powi(2))
        .sum();
    let syy: f64 = ys.iter().map(|y| (y - ym).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    (slope, ym - slope * xm, r2)
}

fn windowed(
    times: &[f64],
    values: &[f64],
    window: (f64, f64),
) -> Result<(Vec<f64>, Vec<f64>)> {
    if times.len() != values.len() {
        return Err(Error::DimensionMismatch {
            context: "fit sample arrays",
            expected: times.len(),
            got: values.len(),
        });
    }
    let (lo, hi) = window;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&t, &v) in times.iter().zip(values) {
        if t >= lo && t <= hi && v.is_finite() && v > 0.0 {
            xs.push(t);
            ys.push(v);
        }
    }
    if xs.len() < FIT_MIN_SAMPLES {
        return Err(Error::DegenerateWindow {
            detail: format!(
                "{} positive samples in [{lo}, {hi}], need at least {FIT_MIN_SAMPLES}",
                xs.len()
            ),
        });
    }
    Ok((xs, ys))
}

/// Default fit window `[t_end/10, t_end]`.
pub fn default_fit_window(t_end: f64) -> (f64, f64) {
    (t_end / 10.0, t_end)
}

/// Fits `value ≈ C ⟨t⟩^{-exponent}` with `⟨t⟩ = (1 + t²)^{1/2}` by least
/// squares in log-log coordinates.
pub fn fit_decay_exponent(
    times: &[f64],
    values: &[f64],
    window: (f64, f64),
) -> Result<DecayFit> {
    let (ts, vs) = windowed(times, values, window)?;
    let xs: Vec<f64> = ts.iter().map(|t| 0.5 * (1.0 + t * t).ln()).collect();
    let ys: Vec<f64> = vs.iter().map(|v| v.ln()).collect();
    let (slope, intercept, r2) = least_squares(&xs, &ys);
    Ok(DecayFit {
        exponent: -slope,
        intercept,
        r2,
        samples: xs.len(),
        window,
        reliable: r2 >= FIT_R2_THRESHOLD,
    })
}

/// Fits `value ≈ C e^{-rate·t}` by least squares of `log value` against `t`;
/// the rate is returned in the `exponent` field.
pub fn fit_exponential_rate(
    times: &[f64],
    values: &[f64],
    window: (f64, f64),
) -> Result<DecayFit> {
    let (ts, vs) = windowed(times, values, window)?;
    let ys: Vec<f64> = vs.iter().map(|v| v.ln()).collect();
    let (slope, intercept, r2) = least_squares(&ts, &ys);
    Ok(DecayFit {
        exponent: -slope,
        intercept,
        r2,
        samples: ts.len(),
        window,
        reliable: r2 >= FIT_R2_THRESHOLD,
    })
}

/// Two-sided verdict with relative tolerance.
pub fn matches_within(measured: f64, predicted: f64, rel_tol: f64) -> bool {
    (measured - predicted).abs() <= rel_tol * predicted.abs()
}

/// One-sided verdict: at least the predicted value, up to tolerance.
pub fn at_least(measured: f64, predicted: f64, rel_tol: f64) -> bool {
    measured >= predicted - rel_tol * predicted.abs()
}

// ---------------------------------------------------------------------------
// Predicted exponents
// ---------------------------------------------------------------------------

/// Which set of a-priori bounds to use: the base theory or the refined one
/// that trades the damped-mode structure for one extra derivative of decay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    General,
    Refined,
}

/// Predicted decay exponents for an isotropic datum whose low-frequency
/// content has regularity index `sigma1`, measured in the block norm of
/// index `sigma`.
#[derive(Debug, Clone, Serialize)]
pub struct ExponentTable {
    pub variant: Variant,
    pub d: usize,
    pub sigma1: f64,
    pub sigma: f64,
    /// Low-frequency decay of the full field: `(σ + σ₁)/2`.
    pub z_low: f64,
    /// Low-frequency decay of the damped components; both mechanisms are
    /// listed where their validity ranges overlap.
    pub z2_low: Vec<f64>,
    /// Terminal damped-component exponent at the top of the low range.
    pub alpha1: f64,
    /// High-frequency decay exponent, `2 α₁`.
    pub z_high: f64,
}

/// Evaluates the predicted exponents, rejecting out-of-range indices with an
/// error naming the violated inequality.
pub fn theory_exponents(
    d: usize,
    sigma1: f64,
    sigma: f64,
    variant: Variant,
) -> Result<ExponentTable> {
    let d2 = d as f64 / 2.0;
    if !(sigma1 > -d2 && sigma1 <= d2) {
        return Err(Error::OutOfRange {
            what: format!("sigma1 = {sigma1} violates -d/2 < sigma1 <= d/2 (d = {d})"),
        });
    }
    let (z_cap, z2_cap_a, alpha1) = match variant {
        Variant::General => (d2 - 1.0, d2 - 2.0, 0.5 * (sigma1 + d2 - 1.0)),
        Variant::Refined => (d2, d2 - 1.0, 0.5 * (sigma1 + d2)),
    };
    if !(sigma > -sigma1) {
        return Err(Error::OutOfRange {
            what: format!("sigma = {sigma} violates sigma > -sigma1 = {}", -sigma1),
        });
    }
    if sigma > z_cap {
        return Err(Error::OutOfRange {
            what: format!("sigma = {sigma} violates sigma <= {z_cap} ({variant:?})"),
        });
    }
    let mut z2_low = Vec::new();
    if sigma <= z2_cap_a {
        z2_low.push(0.5 * (sigma + sigma1) + 0.5);
    }
    if sigma > z2_cap_a.min(-sigma1) {
        z2_low.push(alpha1);
    }
    Ok(ExponentTable {
        variant,
        d,
        sigma1,
        sigma,
        z_low: 0.5 * (sigma + sigma1),
        z2_low,
        alpha1,
        z_high: 2.0 * alpha1,
    })
}

/// Collected fits with their verdicts, ready for serialization.
#[derive(Debug, Clone, Serialize, Default)]
pub struct FitReport {
    pub fits: BTreeMap<String, DecayFit>,
    pub verdicts: BTreeMap<String, bool>,
}

impl FitReport {
    pub fn insert(&mut self, name: &str, fit: DecayFit, verdict: bool) {
        self.fits.insert(name.to_string(), fit);
        self.verdicts.insert(name.to_string(), verdict);
    }

    pub fn all_pass(&self) -> bool {
        self.verdicts.values().all(|&v| v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lyapunov::{functional_snapshot, FunctionalOptions};
    use crate::simulate::{linear_exact_evolve, make_euler_system, InitialDatum};
    use crate::stability::make_schedule;
    use crate::system::linearize;
    use approx::assert_relative_eq;

    #[test]
    fn fit_recovers_power_law() {
        let times: Vec<f64> = (0..40).map(|i| 1.0 + 49.0 * i as f64 / 39.0).collect();
        let values: Vec<f64> = times
            .iter()
            .map(|&t| 3.0 * (1.0 + t * t).powf(-0.375))
            .collect();
        let fit = fit_decay_exponent(&times, &values, (5.0, 50.0)).unwrap();
        assert_relative_eq!(fit.exponent, 0.75, epsilon = 1e-10);
        assert!(fit.reliable);
        assert!(fit.r2 > 0.999999);
    }

    #[test]
    fn fit_rejects_sparse_window() {
        let times: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let values = vec![1.0; 40];
        let err = fit_decay_exponent(&times, &values, (35.5, 39.0));
        assert!(matches!(err, Err(Error::DegenerateWindow { .. })));
    }

    #[test]
    fn exponential_fit_recovers_rate() {
        let times: Vec<f64> = (0..20).map(|i| 0.5 * i as f64).collect();
        let values: Vec<f64> = times.iter().map(|&t| 2.0 * (-0.3 * t).exp()).collect();
        let fit = fit_exponential_rate(&times, &values, (0.0, 10.0)).unwrap();
        assert_relative_eq!(fit.exponent, 0.3, epsilon = 1e-12);
        assert!(fit.reliable);
    }

    #[test]
    fn exponent_table_reference_values() {
        let t = theory_exponents(2, 1.0, 0.0, Variant::General).unwrap();
        assert_relative_eq!(t.z_low, 0.5);
        assert_relative_eq!(t.alpha1, 0.5);
        assert_relative_eq!(t.z_high, 1.0);
        assert_eq!(t.z2_low, vec![0.5]);

        let t = theory_exponents(2, 1.0, 0.0, Variant::Refined).unwrap();
        assert_relative_eq!(t.alpha1, 1.0);
        assert_relative_eq!(t.z_high, 2.0);
        assert!(t.z2_low.contains(&1.0));

        // d = 3 with the borderline datum regularity.
        let t = theory_exponents(3, 1.5, 0.5, Variant::General).unwrap();
        assert_relative_eq!(t.z_low, 1.0);
        assert_eq!(t.z2_low, vec![1.0]);

        // Below the damped-component switch both mechanisms apply.
        let t = theory_exponents(3, 1.5, -0.6, Variant::General).unwrap();
        assert_eq!(t.z2_low.len(), 2);
        assert_relative_eq!(t.z2_low[0], 0.95);
        assert_relative_eq!(t.z2_low[1], 1.0);
    }

    #[test]
    fn exponent_table_range_errors() {
        for (d, s1, s, v) in [
            (2, 1.0, -1.0, Variant::General),
            (2, 1.0, 0.5, Variant::General),
            (2, 1.2, 0.0, Variant::General),
            (2, -1.0, 0.5, Variant::General),
            (2, 1.0, 1.5, Variant::Refined),
        ] {
            let err = theory_exponents(d, s1, s, v);
            assert!(
                matches!(err, Err(Error::OutOfRange { .. })),
                "expected range error for {d} {s1} {s} {v:?}"
            );
        }
        // The refined range admits one more derivative.
        assert!(theory_exponents(2, 1.0, 1.0, Variant::Refined).is_ok());
    }

    #[test]
    fn trajectory_record_tracks_running_norms() {
        let spec = make_euler_system(1, 1.4, 1.0).unwrap();
        let lin = linearize(&spec).unwrap();
        let schedule = make_schedule(2, 1, lin.kappa0, 1.0, 0.25).unwrap();
        let datum = InitialDatum::FourierRandomBand {
            amplitude: 1e-3,
            k_min: 1.0,
            k_max: 4.0,
            seed: Some(21),
        }
        .build(1, 2, 32, 2.0 * std::f64::consts::PI, 0)
        .unwrap();
        let opts = FunctionalOptions {
            nonlinear_weight: false,
            eps_w: 1e-2,
            eps_w2: 1e-4,
        };
        let mut record = TrajectoryRecord::new();
        for i in 0..6 {
            let t = 0.5 * i as f64;
            let state = linear_exact_evolve(&lin, &datum, t);
            let snap = functional_snapshot(&spec, &lin, &schedule, &state, &opts).unwrap();
            record.push(t, &snap).unwrap();
        }
        // Repeated time must be rejected.
        let state = linear_exact_evolve(&lin, &datum, 2.5);
        let snap = functional_snapshot(&spec, &lin, &schedule, &state, &opts).unwrap();
        assert!(record.push(2.5, &snap).is_err());

        let samples = record.samples();
        assert_eq!(samples.len(), 6);
        // Running control quantities never decrease; instantaneous norms do.
        for w in samples.windows(2) {
            assert!(w[1].z_query >= w[0].z_query);
            assert!(w[1].z_query_refined >= w[0].z_query_refined);
        }
        assert!(samples[5].l < samples[0].l);
        assert!(samples[0].z_query > 0.0);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trajectory.csv");
        record.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        let header = lines.next().unwrap();
        assert!(header.starts_with("t,l,"));
        assert_eq!(lines.count(), 6);
    }

    #[test]
    fn verdict_helpers() {
        assert!(matches_within(0.52, 0.5, 0.1));
        assert!(!matches_within(0.58, 0.5, 0.1));
        assert!(at_least(0.46, 0.5, 0.1));
        assert!(!at_least(0.44, 0.5, 0.1));
    }
}
