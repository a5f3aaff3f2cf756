//! Periodic spectral fields.
//!
//! A [`SpectralField`] stores the Fourier coefficients of an `n`-component
//! field on a periodic box `[0, L)^d`, sampled on a uniform grid with the same
//! power-of-two resolution along every axis.  Coefficients live in row-major
//! FFT index order (axis 0 slowest); index `i` along an axis means the signed
//! wavenumber `i` for `i ≤ N/2` and `i - N` above, and the continuous
//! frequency is `ξ = 2πk/L`.
//!
//! The forward transform is normalized so coefficients are Fourier-series
//! coefficients: `ẑ_k = N^{-d} Σ_j z(x_j) e^{-iξ_k·x_j}`, which makes the
//! discrete Parseval identity `‖z‖²_{L²} = L^d Σ_k |ẑ_k|²`.

use num_complex::Complex64;
use rustfft::FftPlanner;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"LPF1";

#[derive(Debug, Clone)]
pub struct SpectralField {
    pub d: usize,
    /// Grid points per axis; a power of two.
    pub res: usize,
    /// Side length of the periodic box.
    pub l_box: f64,
    /// One coefficient array per component, each of length `res^d`.
    components: Vec<Vec<Complex64>>,
}

impl SpectralField {
    pub fn zeros(d: usize, n_components: usize, res: usize, l_box: f64) -> Result<Self> {
        if !(1..=3).contains(&d) {
            return Err(Error::OutOfRange {
                what: format!("field dimension d = {d} not in 1..=3"),
            });
        }
        if n_components == 0 {
            return Err(Error::OutOfRange {
                what: "field needs at least one component".into(),
            });
        }
        if res < 4 || !res.is_power_of_two() {
            return Err(Error::OutOfRange {
                what: format!("resolution {res} must be a power of two >= 4"),
            });
        }
        if !(l_box.is_finite() && l_box > 0.0) {
            return Err(Error::OutOfRange {
                what: format!("box size {l_box} must be positive"),
            });
        }
        let total = res.pow(d as u32);
        Ok(SpectralField {
            d,
            res,
            l_box,
            components: vec![vec![Complex64::default(); total]; n_components],
        })
    }

    /// Builds the spectral representation of real-valued grid samples.
    pub fn from_physical(
        d: usize,
        res: usize,
        l_box: f64,
        samples: &[Vec<f64>],
    ) -> Result<Self> {
        let mut field = Self::zeros(d, samples.len(), res, l_box)?;
        let total = field.total();
        for (c, comp) in samples.iter().enumerate() {
            if comp.len() != total {
                return Err(Error::DimensionMismatch {
                    context: "physical sample length",
                    expected: total,
                    got: comp.len(),
                });
            }
            let buf = &mut field.components[c];
            for (dst, &s) in buf.iter_mut().zip(comp) {
                *dst = Complex64::new(s, 0.0);
            }
            fft_all_axes(buf, d, res, true);
        }
        Ok(field)
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn total(&self) -> usize {
        self.res.pow(self.d as u32)
    }

    /// Box volume `L^d`; the Parseval weight in all norms.
    pub fn volume(&self) -> f64 {
        self.l_box.powi(self.d as i32)
    }

    pub fn coeffs(&self, component: usize) -> &[Complex64] {
        &self.components[component]
    }

    pub fn coeffs_mut(&mut self, component: usize) -> &mut [Complex64] {
        &mut self.components[component]
    }

    /// Signed wavenumbers of a flat index, unused axes zero.
    pub fn signed_k(&self, flat: usize) -> [i64; 3] {
        let mut k = [0i64; 3];
        let mut rem = flat;
        for axis in (0..self.d).rev() {
            let idx = rem % self.res;
            rem /= self.res;
            k[axis] = signed(idx, self.res);
        }
        k
    }

    /// Flat index of a signed wavenumber triple (taken modulo the grid).
    pub fn flat_index(&self, k: &[i64]) -> usize {
        let n = self.res as i64;
        let mut flat = 0usize;
        for axis in 0..self.d {
            let idx = k[axis].rem_euclid(n) as usize;
            flat = flat * self.res + idx;
        }
        flat
    }

    /// Continuous frequency `ξ = 2πk/L` of a flat index.
    pub fn xi(&self, flat: usize) -> [f64; 3] {
        let k = self.signed_k(flat);
        let scale = 2.0 * std::f64::consts::PI / self.l_box;
        [k[0] as f64 * scale, k[1] as f64 * scale, k[2] as f64 * scale]
    }

    pub fn xi_norm(&self, flat: usize) -> f64 {
        let xi = self.xi(flat);
        (xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]).sqrt()
    }

    /// Grid point coordinates of a flat *physical* index.
    pub fn point(&self, flat: usize) -> [f64; 3] {
        let mut x = [0.0f64; 3];
        let mut rem = flat;
        let h = self.l_box / self.res as f64;
        for axis in (0..self.d).rev() {
            x[axis] = (rem % self.res) as f64 * h;
            rem /= self.res;
        }
        x
    }

    /// Copies the coefficient vector of one wavevector into `buf`.
    pub fn mode_into(&self, flat: usize, buf: &mut [Complex64]) {
        for (c, comp) in self.components.iter().enumerate() {
            buf[c] = comp[flat];
        }
    }

    pub fn set_mode(&mut self, flat: usize, values: &[Complex64]) {
        for (c, comp) in self.components.iter_mut().enumerate() {
            comp[flat] = values[c];
        }
    }

    /// Inverse transform of one component, returning the real part on the grid.
    pub fn to_physical(&self, component: usize) -> Vec<f64> {
        let mut buf = self.components[component].clone();
        fft_all_axes(&mut buf, self.d, self.res, false);
        buf.into_iter().map(|z| z.re).collect()
    }

    /// Largest pointwise magnitude over components and grid points.
    pub fn linf(&self) -> f64 {
        (0..self.n_components())
            .map(|c| {
                self.to_physical(c)
                    .into_iter()
                    .fold(0.0f64, |acc, v| acc.max(v.abs()))
            })
            .fold(0.0f64, f64::max)
    }

    /// Spectral derivative along `axis`: multiply by `iξ_axis`, zeroing the
    /// unmatched Nyquist plane so real fields stay real.
    pub fn derivative(&self, axis: usize) -> SpectralField {
        assert!(axis < self.d, "derivative axis out of range");
        let mut out = self.clone();
        let scale = 2.0 * std::f64::consts::PI / self.l_box;
        let nyquist = (self.res / 2) as i64;
        for comp in &mut out.components {
            for (flat, v) in comp.iter_mut().enumerate() {
                let k = index_axis(flat, axis, self.d, self.res);
                let ks = signed(k, self.res);
                if ks == -nyquist {
                    *v = Complex64::default();
                } else {
                    *v *= Complex64::new(0.0, ks as f64 * scale);
                }
            }
        }
        out
    }

    /// Projects onto conjugate-symmetric coefficients (real physical field):
    /// pairs `(k, -k)` are averaged, self-paired modes lose their imaginary
    /// part.
    pub fn enforce_hermitian(&mut self) {
        let total = self.total();
        for comp in &mut self.components {
            for flat in 0..total {
                let partner = conjugate_partner(flat, self.d, self.res);
                if partner == flat {
                    comp[flat] = Complex64::new(comp[flat].re, 0.0);
                } else if flat < partner {
                    let avg = 0.5 * (comp[flat] + comp[partner].conj());
                    comp[flat] = avg;
                    comp[partner] = avg.conj();
                }
            }
        }
    }

    /// Two-thirds rule: zero every coefficient with any `|k_axis| > N/3`.
    pub fn dealias(&mut self) {
        let cutoff = (self.res / 3) as i64;
        let total = self.total();
        for flat in 0..total {
            let k = self.signed_k(flat);
            if k[..self.d].iter().any(|&ka| ka.abs() > cutoff) {
                for comp in &mut self.components {
                    comp[flat] = Complex64::default();
                }
            }
        }
    }

    /// `‖component‖²_{L²}` via Parseval.
    pub fn l2_norm_sq(&self, component: usize) -> f64 {
        self.volume()
            * self.components[component]
                .iter()
                .map(|z| z.norm_sqr())
                .sum::<f64>()
    }

    /// Squared `L²` norm of the full vector field under a constant symmetric
    /// weight: `L^d Σ_k (W ẑ_k | ẑ_k)`.
    pub fn l2_norm_sq_weighted(&self, weight: &nalgebra::DMatrix<f64>) -> f64 {
        let n = self.n_components();
        assert_eq!(weight.nrows(), n, "weight size mismatch");
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                let w = weight[(i, j)];
                if w == 0.0 {
                    continue;
                }
                let s: f64 = self.components[i]
                    .iter()
                    .zip(&self.components[j])
                    .map(|(a, b)| (a * b.conj()).re)
                    .sum();
                acc += w * s;
            }
        }
        self.volume() * acc
    }

    pub fn scale(&mut self, factor: f64) {
        for comp in &mut self.components {
            for v in comp.iter_mut() {
                *v *= factor;
            }
        }
    }

    /// `self += c · other`, component by component.
    pub fn add_scaled(&mut self, c: f64, other: &SpectralField) {
        debug_assert_eq!(self.total(), other.total());
        debug_assert_eq!(self.n_components(), other.n_components());
        for (dst, src) in self.components.iter_mut().zip(&other.components) {
            for (a, b) in dst.iter_mut().zip(src) {
                *a += c * b;
            }
        }
    }

    pub fn fill_zero(&mut self) {
        for comp in &mut self.components {
            comp.fill(Complex64::default());
        }
    }

    /// New field holding a contiguous subset of the components.
    pub fn select_components(&self, range: std::ops::Range<usize>) -> SpectralField {
        assert!(range.end <= self.n_components(), "component range out of bounds");
        SpectralField {
            d: self.d,
            res: self.res,
            l_box: self.l_box,
            components: self.components[range].to_vec(),
        }
    }

    // -- binary field files -------------------------------------------------

    /// Writes the field in the `LPF1` layout: a 4-byte magic, then `d`,
    /// component count and resolution as little-endian u64, the box size as
    /// f64, then for each wavevector in row-major order the components
    /// interleaved as `(re, im)` f64 pairs.
    pub fn write_file(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        out.write_all(MAGIC)?;
        out.write_all(&(self.d as u64).to_le_bytes())?;
        out.write_all(&(self.n_components() as u64).to_le_bytes())?;
        out.write_all(&(self.res as u64).to_le_bytes())?;
        out.write_all(&self.l_box.to_le_bytes())?;
        let total = self.total();
        for flat in 0..total {
            for comp in &self.components {
                out.write_all(&comp[flat].re.to_le_bytes())?;
                out.write_all(&comp[flat].im.to_le_bytes())?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        let mut input = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format(format!(
                "bad field file magic {:?} in {}",
                magic,
                path.display()
            )));
        }
        let d = read_u64(&mut input)? as usize;
        let n_components = read_u64(&mut input)? as usize;
        let res = read_u64(&mut input)? as usize;
        let l_box = read_f64(&mut input)?;
        let mut field = Self::zeros(d, n_components, res, l_box)?;
        let total = field.total();
        for flat in 0..total {
            for c in 0..n_components {
                let re = read_f64(&mut input)?;
                let im = read_f64(&mut input)?;
                field.components[c][flat] = Complex64::new(re, im);
            }
        }
        Ok(field)
    }
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn signed(idx: usize, res: usize) -> i64 {
    if idx <= res / 2 {
        idx as i64
    } else {
        idx as i64 - res as i64
    }
}

/// Per-axis index of a flat row-major position.
fn index_axis(flat: usize, axis: usize, d: usize, res: usize) -> usize {
    let stride = res.pow((d - 1 - axis) as u32);
    (flat / stride) % res
}

/// Flat index of the wavevector `-k` (mod N on each axis).
fn conjugate_partner(flat: usize, d: usize, res: usize) -> usize {
    let mut rem = flat;
    let mut idx = [0usize; 3];
    for axis in (0..d).rev() {
        idx[axis] = rem % res;
        rem /= res;
    }
    let mut partner = 0usize;
    for axis in 0..d {
        let neg = (res - idx[axis]) % res;
        partner = partner * res + neg;
    }
    partner
}

thread_local! {
    static PLAN_CACHE: std::cell::RefCell<
        std::collections::HashMap<(usize, bool), std::sync::Arc<dyn rustfft::Fft<f64>>>,
    > = std::cell::RefCell::new(std::collections::HashMap::new());
}

fn cached_plan(res: usize, forward: bool) -> std::sync::Arc<dyn rustfft::Fft<f64>> {
    PLAN_CACHE.with(|cache| {
        cache
            .borrow_mut()
            .entry((res, forward))
            .or_insert_with(|| {
                let mut planner = FftPlanner::new();
                if forward {
                    planner.plan_fft_forward(res)
                } else {
                    planner.plan_fft_inverse(res)
                }
            })
            .clone()
    })
}

/// In-place d-dimensional FFT by running 1-D transforms along every axis.
/// The forward direction carries the `N^{-d}` normalization.
pub(crate) fn fft_all_axes(data: &mut [Complex64], d: usize, res: usize, forward: bool) {
    let plan = cached_plan(res, forward);
    let total = data.len();
    let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
    let mut line = vec![Complex64::default(); res];
    for axis in 0..d {
        let stride = res.pow((d - 1 - axis) as u32);
        if stride == 1 {
            for chunk in data.chunks_exact_mut(res) {
                plan.process_with_scratch(chunk, &mut scratch);
            }
            continue;
        }
        // Lines along this axis start at base = outer·(stride·res) + inner
        // with inner < stride, and step by `stride`.
        let block = stride * res;
        for outer in 0..total / block {
            for inner in 0..stride {
                let base = outer * block + inner;
                for (j, slot) in line.iter_mut().enumerate() {
                    *slot = data[base + j * stride];
                }
                plan.process_with_scratch(&mut line, &mut scratch);
                for (j, slot) in line.iter().enumerate() {
                    data[base + j * stride] = *slot;
                }
            }
        }
    }
    if forward {
        let scale = 1.0 / total as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }
}
