//! Periodic grids, FFT plans and smooth cutoffs.

use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Uniform periodic grid on `[center - half_length, center + half_length)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec<T> {
    n_points: usize,
    half_length: T,
    center: T,
}

impl<T: Real> GridSpec<T> {
    pub fn new(n_points: usize, half_length: T) -> Result<Self> {
        if n_points < 16 || !n_points.is_power_of_two() {
            return Err(Error::Domain(format!(
                "grid size must be a power of two >= 16, got {n_points}"
            )));
        }
        if !(half_length > T::zero()) || !half_length.is_finite() {
            return Err(Error::Domain(format!(
                "half-length must be positive, got {half_length}"
            )));
        }
        Ok(Self {
            n_points,
            half_length,
            center: T::zero(),
        })
    }

    pub fn with_center(mut self, center: T) -> Self {
        self.center = center;
        self
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn half_length(&self) -> T {
        self.half_length
    }

    pub fn center(&self) -> T {
        self.center
    }

    pub fn spacing(&self) -> T {
        T::lit(2.0) * self.half_length / T::from_usize_lossy(self.n_points)
    }

    pub fn node(&self, j: usize) -> T {
        self.center - self.half_length + self.spacing() * T::from_usize_lossy(j)
    }

    pub fn nodes(&self) -> Vec<T> {
        (0..self.n_points).map(|j| self.node(j)).collect()
    }

    /// Index of the node sitting at the grid center.
    pub fn center_index(&self) -> usize {
        self.n_points / 2
    }

    /// Signed mode number of FFT slot `m`.
    pub fn mode(&self, m: usize) -> isize {
        if m < self.n_points / 2 {
            m as isize
        } else {
            m as isize - self.n_points as isize
        }
    }

    /// Angular wavenumber of FFT slot `m`.
    pub fn wavenumber(&self, m: usize) -> T {
        T::PI() * T::lit(self.mode(m) as f64) / self.half_length
    }

    pub fn wavenumbers(&self) -> Vec<T> {
        (0..self.n_points).map(|m| self.wavenumber(m)).collect()
    }

    pub fn nyquist_slot(&self) -> usize {
        self.n_points / 2
    }

    /// Largest mode number kept by the two-thirds rule.
    pub fn dealias_mode(&self) -> usize {
        self.n_points / 3
    }
}

/// FFT plan bound to one grid. Not shared between concurrent runs.
pub struct SpectralPlan<T: Real> {
    grid: GridSpec<T>,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
    k: Vec<T>,
    buffer: Vec<Complex<T>>,
    scratch: Vec<Complex<T>>,
}

impl<T: Real> SpectralPlan<T> {
    pub fn new(grid: GridSpec<T>) -> Self {
        let mut planner = FftPlanner::new();
        let n = grid.n_points();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Self {
            grid,
            forward,
            inverse,
            k: grid.wavenumbers(),
            buffer: vec![Complex::new(T::zero(), T::zero()); n],
            scratch: vec![Complex::new(T::zero(), T::zero()); scratch_len],
        }
    }

    pub fn grid(&self) -> &GridSpec<T> {
        &self.grid
    }

    pub fn wavenumbers(&self) -> &[T] {
        &self.k
    }

    /// Normalised Fourier coefficients: `v_j = Σ_m c_m e^{2πi m j / N}`.
    pub fn forward(&mut self, values: &[T]) -> Vec<Complex<T>> {
        let n = self.grid.n_points();
        assert_eq!(values.len(), n, "field length does not match the plan");
        let inv_n = T::one() / T::from_usize_lossy(n);
        for (b, &v) in self.buffer.iter_mut().zip(values) {
            *b = Complex::new(v, T::zero());
        }
        self.forward
            .process_with_scratch(&mut self.buffer, &mut self.scratch);
        self.buffer.iter().map(|c| c * inv_n).collect()
    }

    /// Inverse transform of normalised coefficients, keeping the real part.
    pub fn inverse_real(&mut self, coeffs: &[Complex<T>]) -> Vec<T> {
        self.buffer.copy_from_slice(coeffs);
        self.inverse
            .process_with_scratch(&mut self.buffer, &mut self.scratch);
        self.buffer.iter().map(|c| c.re).collect()
    }

    /// Inverse transforms of two Hermitian spectra with a single complex FFT.
    pub fn inverse_pair(&mut self, a: &[Complex<T>], b: &[Complex<T>]) -> (Vec<T>, Vec<T>) {
        let i = Complex::new(T::zero(), T::one());
        for ((slot, &x), &y) in self.buffer.iter_mut().zip(a).zip(b) {
            *slot = x + i * y;
        }
        self.inverse
            .process_with_scratch(&mut self.buffer, &mut self.scratch);
        let re = self.buffer.iter().map(|c| c.re).collect();
        let im = self.buffer.iter().map(|c| c.im).collect();
        (re, im)
    }

    /// Largest imaginary residue of the last inverse transform.
    pub fn last_imaginary_residue(&self) -> T {
        self.buffer
            .iter()
            .fold(T::zero(), |acc, c| acc.max(c.im.abs()))
    }

    /// Applies a Fourier multiplier `m(k)`. The Nyquist slot is dropped unless
    /// the multiplier is real there, so real input stays real.
    pub fn apply_multiplier<F>(&mut self, values: &[T], mut symbol: F) -> Vec<T>
    where
        F: FnMut(T) -> Complex<T>,
    {
        let mut c = self.forward(values);
        let nyq = self.grid.nyquist_slot();
        for (m, cm) in c.iter_mut().enumerate() {
            let s = symbol(self.k[m]);
            *cm = if m == nyq && s.im != T::zero() {
                Complex::new(T::zero(), T::zero())
            } else {
                *cm * s
            };
        }
        self.inverse_real(&c)
    }

    /// Spectral derivative of the given order.
    pub fn derivative(&mut self, values: &[T], order: u32) -> Vec<T> {
        if order == 0 {
            return values.to_vec();
        }
        self.apply_multiplier(values, |k| ik_power(k, order))
    }

    /// Zeroes every mode above the two-thirds cutoff.
    pub fn truncate(&self, coeffs: &mut [Complex<T>]) {
        let cut = self.grid.dealias_mode() as isize;
        for (m, c) in coeffs.iter_mut().enumerate() {
            if self.grid.mode(m).abs() > cut {
                *c = Complex::new(T::zero(), T::zero());
            }
        }
    }

    /// Evaluates the Fourier series with normalised coefficients at `x`.
    pub fn eval_series(&self, coeffs: &[Complex<T>], x: T) -> T {
        eval_series(&self.grid, coeffs, x)
    }
}

/// `(ik)^order` as a complex number.
pub fn ik_power<T: Real>(k: T, order: u32) -> Complex<T> {
    let mag = k.powi(order as i32);
    match order % 4 {
        0 => Complex::new(mag, T::zero()),
        1 => Complex::new(T::zero(), mag),
        2 => Complex::new(-mag, T::zero()),
        _ => Complex::new(T::zero(), -mag),
    }
}

/// Evaluates `Σ_m c_m e^{i k_m (x - x_0)}` with `x_0` the first grid node.
/// The Nyquist slot contributes its cosine part only.
pub fn eval_series<T: Real>(grid: &GridSpec<T>, coeffs: &[Complex<T>], x: T) -> T {
    let x0 = grid.node(0);
    let dx = x - x0;
    let nyq = grid.nyquist_slot();
    let mut acc = coeffs[0].re;
    for (m, z) in coeffs.iter().enumerate().take(grid.n_points()).skip(1) {
        let (s, c) = (grid.wavenumber(m) * dx).sin_cos();
        if m == nyq {
            acc += z.re * c;
        } else {
            acc += z.re * c - z.im * s;
        }
    }
    acc
}

/// Smooth monotone step: 0 for `t ≤ 0`, 1 for `t ≥ 1`, `C^∞` in between,
/// with `S(t) + S(1 - t) = 1`.
pub fn smooth_step<T: Real>(t: T) -> T {
    if t <= T::zero() {
        return T::zero();
    }
    if t >= T::one() {
        return T::one();
    }
    let f = |v: T| (-T::one() / v).exp();
    let a = f(t);
    let b = f(T::one() - t);
    a / (a + b)
}

/// Frequency cutoff: 1 on `|ζ| ≤ 1`, 0 on `|ζ| ≥ 2`.
pub fn cutoff<T: Real>(zeta: T) -> T {
    smooth_step(T::lit(2.0) - zeta.abs())
}

/// Complement `1 - cutoff(ζ)`, evaluated without cancellation.
pub fn cutoff_complement<T: Real>(zeta: T) -> T {
    smooth_step(zeta.abs() - T::one())
}

/// Smooth plateau equal to 1 on `[a + w, b - w]` and 0 outside `[a, b]`.
pub fn plateau<T: Real>(q: T, a: T, b: T, w: T) -> T {
    smooth_step((q - a) / w) * smooth_step((b - q) / w)
}

/// Exact band-limited resampling `f(c + μ(x_j - c) + δ)` on a periodic grid.
///
/// Evaluates the trigonometric interpolant at dilated and shifted nodes with a
/// chirp transform (Bluestein convolution), `O(N log N)` per call.
pub struct DilationResampler<T: Real> {
    grid: GridSpec<T>,
    padded: usize,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
    kernels: HashMap<u64, Vec<Complex<T>>>,
}

impl<T: Real> DilationResampler<T> {
    pub fn new(grid: GridSpec<T>) -> Self {
        let padded = (2 * grid.n_points()).next_power_of_two();
        let mut planner = FftPlanner::new();
        Self {
            grid,
            padded,
            forward: planner.plan_fft_forward(padded),
            inverse: planner.plan_fft_inverse(padded),
            kernels: HashMap::new(),
        }
    }

    /// `e^{πi μ q² / N}` with the integer part of the phase reduced exactly.
    fn chirp(&self, q: usize, eta: f64) -> Complex<T> {
        let n = self.grid.n_points() as u128;
        let q2 = (q as u128) * (q as u128);
        let exact = (q2 % (2 * n)) as f64 / n as f64;
        let drift = eta * (q2 as f64) / n as f64;
        let phase = std::f64::consts::PI * (exact - drift);
        Complex::new(T::lit(phase.cos()), T::lit(phase.sin()))
    }

    fn kernel(&mut self, eta: f64) -> Vec<Complex<T>> {
        let key = eta.to_bits();
        if let Some(k) = self.kernels.get(&key) {
            return k.clone();
        }
        let n = self.grid.n_points();
        let mut b = vec![Complex::new(T::zero(), T::zero()); self.padded];
        for q in 0..n {
            let c = self.chirp(q, eta).conj();
            b[q] = c;
            if q > 0 {
                b[self.padded - q] = c;
            }
        }
        self.forward.process(&mut b);
        if self.kernels.len() > 8 {
            self.kernels.clear();
        }
        self.kernels.insert(key, b.clone());
        b
    }

    /// Values of the interpolant with normalised coefficients `coeffs` at
    /// `center + μ (x_j - center) + δ` for every node `x_j`.
    pub fn resample(&mut self, coeffs: &[Complex<T>], mu: f64, delta: f64) -> Vec<T> {
        let n = self.grid.n_points();
        assert_eq!(coeffs.len(), n);
        let eta = 1.0 - mu;
        let l = self.grid.half_length().to_f64_lossy();
        let theta = std::f64::consts::PI * (eta + delta / l);
        let half = n / 2;
        let mut a = vec![Complex::new(T::zero(), T::zero()); self.padded];
        for (shifted, slot) in a.iter_mut().take(n).enumerate() {
            // shifted index m'' = m' + N/2 with m' the signed mode.
            let signed = shifted as isize - half as isize;
            if signed == -(half as isize) {
                continue;
            }
            let m = if signed < 0 {
                (signed + n as isize) as usize
            } else {
                signed as usize
            };
            let ph = theta * signed as f64;
            let rot = Complex::new(T::lit(ph.cos()), T::lit(ph.sin()));
            *slot = coeffs[m] * rot * self.chirp(shifted, eta);
        }
        let kernel = self.kernel(eta);
        self.forward.process(&mut a);
        for (x, k) in a.iter_mut().zip(&kernel) {
            *x = *x * *k;
        }
        self.inverse.process(&mut a);
        let inv_p = T::one() / T::from_usize_lossy(self.padded);
        (0..n)
            .map(|j| {
                let ph = std::f64::consts::PI * eta * j as f64;
                let sign = if j % 2 == 0 { T::one() } else { -T::one() };
                let post = Complex::new(T::lit(ph.cos()), T::lit(ph.sin())) * self.chirp(j, eta);
                (a[j] * inv_p * post).re * sign
            })
            .collect()
    }
}
