//! Dispersion multiplier, its high/low frequency split and the kernel of the
//! high-frequency part.
//!
//! The dispersion is `K ∂_x` with `K = (I - ∂²)^{p}`, `p = (α - 1)/2`, so a
//! Fourier mode `e^{ikx}` is multiplied by `i k (1 + k²)^p`. In the rescaled
//! variable `X = e^{3s/2} x` the same operator reads
//! `e^{3s/2} ∂_X (I - e^{3s} ∂_X²)^p`; the split cuts it at rescaled frequency
//! `e^{3s/2}|k| ∈ [1, 2]` with a smooth cutoff.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use num_complex::Complex;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{max_abs, Field};
use crate::scalar::Real;
use crate::spectral::{cutoff, cutoff_complement, GridSpec, SpectralPlan};

/// Exponent `p = (α - 1)/2` of the Bessel potential.
pub fn bessel_exponent<T: Real>(alpha: T) -> T {
    (alpha - T::one()) / T::lit(2.0)
}

/// Imaginary part of the dispersion symbol: `k (1 + k²)^p`.
pub fn dispersion_symbol<T: Real>(k: T, alpha: T) -> T {
    k * (T::one() + k * k).powf(bessel_exponent(alpha))
}

fn check_alpha<T: Real>(alpha: T) -> Result<()> {
    if alpha < T::zero() && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "dispersion exponent must be negative, got {alpha}"
        )))
    }
}

/// `K ∂_x u` computed mode by mode.
pub fn apply_dispersion<T: Real>(u: &Field<T>, alpha: T) -> Result<Field<T>> {
    let mut plan = SpectralPlan::new(*u.grid());
    apply_dispersion_with(&mut plan, u, alpha)
}

/// [`apply_dispersion`] reusing an existing plan.
pub fn apply_dispersion_with<T: Real>(
    plan: &mut SpectralPlan<T>,
    u: &Field<T>,
    alpha: T,
) -> Result<Field<T>> {
    check_alpha(alpha)?;
    let out = plan.apply_multiplier(u.values(), |k| {
        Complex::new(T::zero(), dispersion_symbol(k, alpha))
    });
    Ok(u.with_values(out))
}

/// Dispersion in the rescaled variable at self-similar time `s`, split into
/// a high-frequency part `H` and a low-frequency part `L` with `H + L` equal
/// to the full operator. Signs follow the convention without a leading minus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorSplit<T> {
    alpha: T,
    s: T,
    scale: T,
}

impl<T: Real> OperatorSplit<T> {
    pub fn new(alpha: T, s: T) -> Result<Self> {
        check_alpha(alpha)?;
        if !s.is_finite() {
            return Err(Error::Domain(format!(
                "self-similar time must be finite, got {s}"
            )));
        }
        Ok(Self {
            alpha,
            s,
            scale: (T::lit(1.5) * s).exp(),
        })
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn s(&self) -> T {
        self.s
    }

    /// `e^{3s/2}`, the factor converting rescaled to physical frequency.
    pub fn scale(&self) -> T {
        self.scale
    }

    /// Imaginary part of the full symbol at rescaled wavenumber `k`.
    pub fn full_symbol(&self, k: T) -> T {
        dispersion_symbol(self.scale * k, self.alpha)
    }

    pub fn low_symbol(&self, k: T) -> T {
        cutoff(self.scale * k) * self.full_symbol(k)
    }

    pub fn high_symbol(&self, k: T) -> T {
        self.full_symbol(k) - self.low_symbol(k)
    }

    /// Low and high parts together, sharing one evaluation of the full symbol.
    pub fn symbols(&self, k: T) -> (T, T) {
        let full = self.full_symbol(k);
        let low = cutoff(self.scale * k) * full;
        (low, full - low)
    }

    /// Number of positive grid wavenumbers inside the transition band.
    pub fn band_samples(&self, grid: &GridSpec<T>) -> usize {
        let lo = T::one() / self.scale;
        let hi = T::lit(2.0) * lo;
        (1..grid.n_points() / 2)
            .map(|m| grid.wavenumber(m))
            .filter(|&k| k >= lo && k <= hi)
            .count()
    }

    pub fn check_resolved(&self, grid: &GridSpec<T>) -> Result<()> {
        let n = self.band_samples(grid);
        if n < 2 {
            return Err(Error::Resolution(format!(
                "cutoff transition band at s = {} holds {n} grid frequencies (need 2)",
                self.s
            )));
        }
        Ok(())
    }
}

/// `(H(∂^order f), L(∂^order f))` for a field `f` sampled in the rescaled variable.
pub fn apply_split<T: Real>(
    f: &Field<T>,
    split: &OperatorSplit<T>,
    order: u32,
) -> Result<(Field<T>, Field<T>)> {
    let mut plan = SpectralPlan::new(*f.grid());
    apply_split_with(&mut plan, f, split, order)
}

pub fn apply_split_with<T: Real>(
    plan: &mut SpectralPlan<T>,
    f: &Field<T>,
    split: &OperatorSplit<T>,
    order: u32,
) -> Result<(Field<T>, Field<T>)> {
    if order > 5 {
        return Err(Error::Domain(format!("derivative order {order} exceeds 5")));
    }
    split.check_resolved(f.grid())?;
    let coeffs = plan.forward(f.values());
    let nyq = plan.grid().nyquist_slot();
    let zero = Complex::new(T::zero(), T::zero());
    let mut high = vec![zero; coeffs.len()];
    let mut low = vec![zero; coeffs.len()];
    for (m, c) in coeffs.iter().enumerate() {
        if m == nyq {
            continue;
        }
        let k = plan.wavenumbers()[m];
        let d = crate::spectral::ik_power(k, order) * *c;
        let (l, h) = split.symbols(k);
        let i = Complex::new(T::zero(), T::one());
        high[m] = d * i * h;
        low[m] = d * i * l;
    }
    let (h, l) = plan.inverse_pair(&high, &low);
    Ok((f.with_values(h), f.with_values(l)))
}

/// Accuracy settings for [`eval_kernel_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelQuadrature {
    /// Gauss-Legendre panels per unit of radius on the transition band.
    pub panels_per_unit: usize,
    pub order: usize,
    /// Half-periods summed before extrapolating the oscillatory tail.
    pub half_periods: usize,
    /// Levels of repeated averaging applied to the partial sums.
    pub levels: usize,
}

impl Default for KernelQuadrature {
    fn default() -> Self {
        Self {
            panels_per_unit: 8,
            order: 20,
            half_periods: 48,
            levels: 20,
        }
    }
}

impl KernelQuadrature {
    pub fn refined(self) -> Self {
        Self {
            panels_per_unit: self.panels_per_unit * 2,
            order: self.order + 10,
            half_periods: self.half_periods + 24,
            levels: self.levels + 4,
        }
    }
}

struct KernelIntegrator {
    rule: GaussLegendre,
    q: KernelQuadrature,
}

impl KernelIntegrator {
    fn new(q: KernelQuadrature) -> Self {
        let order = NonZeroUsize::new(q.order.max(2)).expect("order is positive");
        Self {
            rule: GaussLegendre::new(order),
            q,
        }
    }

    /// Integral over `[a, b]` split into panels whose endpoints grow by at
    /// most a factor of two, suited to power-law amplitudes.
    fn geometric(&self, a: f64, b: f64, f: &impl Fn(f64) -> f64) -> f64 {
        let mut acc = 0.0;
        let mut x = a;
        while x < b {
            let next = (2.0 * x).min(b);
            acc += self.rule.integrate(x, next, f);
            x = next;
        }
        acc
    }

    fn eval(&self, r: f64, alpha: f64) -> f64 {
        let p = bessel_exponent(alpha);
        let amp = move |z: f64| z * (1.0 + z * z).powf(p);
        // Transition band [1, 2] carries the cutoff complement.
        let band = |z: f64| cutoff_complement(z) * amp(z) * (z * r).sin();
        let panels = self.q.panels_per_unit * (r.ceil() as usize).max(1);
        let h = 1.0 / panels as f64;
        let band_part: f64 = (0..panels)
            .map(|i| {
                self.rule
                    .integrate(1.0 + i as f64 * h, 1.0 + (i + 1) as f64 * h, band)
            })
            .sum();
        // Tail [2, ∞) as an alternating series over half-periods of sin(zr).
        let tail_f = |z: f64| amp(z) * (z * r).sin();
        let period = std::f64::consts::PI / r;
        let mut k = (2.0 / period).floor() + 1.0;
        let mut a = 2.0;
        let mut sums = Vec::with_capacity(self.q.half_periods);
        let mut acc = 0.0;
        for _ in 0..self.q.half_periods {
            let b = k * period;
            acc += self.geometric(a, b, &tail_f);
            sums.push(acc);
            a = b;
            k += 1.0;
        }
        let tail = repeated_average(&sums, self.q.levels);
        -(band_part + tail) / std::f64::consts::PI
    }
}

/// Longman-style extrapolation of an alternating series from its partial sums.
fn repeated_average(sums: &[f64], levels: usize) -> f64 {
    let levels = levels.min(sums.len() - 1);
    let mut row: Vec<f64> = sums[sums.len() - 1 - levels..].to_vec();
    while row.len() > 1 {
        row = row.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    }
    row[0]
}

/// Kernel of the high-frequency dispersion at unit scale, as an even function
/// of the radius: `H f(x) = ∫ sign(x - y) G(|x - y|) f(y) dy`.
pub fn eval_kernel<T: Real>(r: T, alpha: T) -> Result<T> {
    eval_kernel_with(r, alpha, KernelQuadrature::default())
}

pub fn eval_kernel_with<T: Real>(r: T, alpha: T, q: KernelQuadrature) -> Result<T> {
    check_alpha(alpha)?;
    if !(r > T::zero()) || !r.is_finite() {
        return Err(Error::Domain(format!(
            "kernel radius must be positive, got {r}"
        )));
    }
    let value = KernelIntegrator::new(q).eval(r.to_f64_lossy(), alpha.to_f64_lossy());
    Ok(T::lit(value))
}

/// Behaviour of the kernel envelope near the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "exponent")]
pub enum NearOrigin {
    /// `r^{-exponent}` for `-1 < α < 0`.
    Power(f64),
    /// `log(1/r) + 1` at `α = -1`.
    Logarithmic,
    /// Bounded for `α < -1`.
    Bounded,
}

impl NearOrigin {
    pub fn for_alpha(alpha: f64) -> Self {
        if alpha > -1.0 {
            Self::Power(1.0 + alpha)
        } else if alpha == -1.0 {
            Self::Logarithmic
        } else {
            Self::Bounded
        }
    }
}

/// Envelope of `|G|`: the near-origin form for `r ≤ 1`, `e^{-r/2}` beyond.
pub fn kernel_envelope(r: f64, alpha: f64) -> f64 {
    if r > 1.0 {
        return (-r / 2.0).exp();
    }
    match NearOrigin::for_alpha(alpha) {
        NearOrigin::Power(e) => r.powf(-e),
        NearOrigin::Logarithmic => (1.0 / r).ln() + 1.0,
        NearOrigin::Bounded => 1.0,
    }
}

/// Tabulated kernel on a logarithmic radius grid.
#[derive(Debug, Clone, Serialize)]
pub struct KernelTable {
    pub alpha: f64,
    pub near_origin: NearOrigin,
    pub quadrature: KernelQuadrature,
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
}

impl KernelTable {
    pub fn build(
        alpha: f64,
        rmin: f64,
        rmax: f64,
        n: usize,
        quadrature: KernelQuadrature,
    ) -> Result<Self> {
        check_alpha(alpha)?;
        if !(rmin > 0.0 && rmax > rmin) || n < 2 {
            return Err(Error::Domain(
                "kernel table needs 0 < rmin < rmax and n >= 2".into(),
            ));
        }
        let integrator = KernelIntegrator::new(quadrature);
        let ratio = (rmax / rmin).ln() / (n - 1) as f64;
        let radii: Vec<f64> = (0..n).map(|i| rmin * (ratio * i as f64).exp()).collect();
        let values = radii.iter().map(|&r| integrator.eval(r, alpha)).collect();
        Ok(Self {
            alpha,
            near_origin: NearOrigin::for_alpha(alpha),
            quadrature,
            radii,
            values,
        })
    }

    pub fn envelope(&self, i: usize) -> f64 {
        kernel_envelope(self.radii[i], self.alpha)
    }

    pub fn ratio(&self, i: usize) -> f64 {
        self.values[i].abs() / self.envelope(i)
    }

    /// Largest envelope ratio over samples with `r ≤ 1` and over `r > 1`.
    pub fn constants(&self) -> (f64, f64) {
        let mut near = 0.0_f64;
        let mut far = 0.0_f64;
        for i in 0..self.radii.len() {
            if self.radii[i] <= 1.0 {
                near = near.max(self.ratio(i));
            } else {
                far = far.max(self.ratio(i));
            }
        }
        (near, far)
    }
}

/// One sampled time of an operator-bound check.
#[derive(Debug, Clone, Serialize)]
pub struct OperatorBoundSample {
    pub s: f64,
    /// `‖L(∂^l U)‖_∞ e^{(3l-1)s/2}` for `l = 1..=5`; `None` when unresolved.
    pub low_ratios: [Option<f64>; 5],
    /// `‖H(∂U)‖_∞ / ‖∂U‖_∞`.
    pub high_ratio: Option<f64>,
    /// `‖(H + L)(∂U)‖_∞`.
    pub combined: Option<f64>,
}

/// Measured constants of the operator bounds over a run.
#[derive(Debug, Clone, Serialize)]
pub struct OperatorBoundReport {
    pub alpha: f64,
    pub m: f64,
    pub samples: Vec<OperatorBoundSample>,
    /// Max over the run of each low ratio, the high ratio and the combined norm.
    pub low_constants: [f64; 5],
    pub high_constant: f64,
    pub combined_constant: f64,
    /// Least-squares slope of the log of each low ratio against `s`.
    pub low_trends: [f64; 5],
    pub high_trend: f64,
    /// Set when a fitted constant grows with `s` faster than the tolerance.
    pub growth_flags: [bool; 6],
}

/// Slope tolerance on `log(constant)` per unit `s` before a bound is flagged.
pub const GROWTH_TOLERANCE: f64 = 0.05;

/// Measures the operator bounds on slope samples `(s, ∂_X U)` of a run.
pub fn verify_operator_bounds(
    slopes: &[(f64, Field<f64>)],
    alpha: f64,
    m: f64,
) -> Result<OperatorBoundReport> {
    check_alpha(alpha)?;
    let mut samples = Vec::with_capacity(slopes.len());
    for (s, w) in slopes {
        let split = OperatorSplit::new(alpha, *s)?;
        let mut plan = SpectralPlan::new(*w.grid());
        let mut low_ratios = [None; 5];
        let mut high_ratio = None;
        let mut combined = None;
        if split.check_resolved(w.grid()).is_ok() {
            for (l, slot) in low_ratios.iter_mut().enumerate() {
                let (h, lo) = apply_split_with(&mut plan, w, &split, l as u32)?;
                let weight = ((3.0 * (l + 1) as f64 - 1.0) * s / 2.0).exp();
                *slot = Some(lo.max_abs() * weight);
                if l == 0 {
                    let wn = w.max_abs();
                    high_ratio = (wn > 0.0).then(|| h.max_abs() / wn);
                    let sum: Vec<f64> = h
                        .values()
                        .iter()
                        .zip(lo.values())
                        .map(|(a, b)| a + b)
                        .collect();
                    combined = Some(max_abs(&sum));
                }
            }
        }
        samples.push(OperatorBoundSample {
            s: *s,
            low_ratios,
            high_ratio,
            combined,
        });
    }
    let mut low_constants = [0.0; 5];
    let mut low_trends = [0.0; 5];
    for l in 0..5 {
        let series: Vec<(f64, f64)> = samples
            .iter()
            .filter_map(|x| x.low_ratios[l].map(|v| (x.s, v)))
            .collect();
        low_constants[l] = series.iter().fold(0.0_f64, |a, &(_, v)| a.max(v));
        low_trends[l] = log_slope(&series);
    }
    let high: Vec<(f64, f64)> = samples
        .iter()
        .filter_map(|x| x.high_ratio.map(|v| (x.s, v)))
        .collect();
    let high_constant = high.iter().fold(0.0_f64, |a, &(_, v)| a.max(v));
    let high_trend = log_slope(&high);
    let combined_constant = samples
        .iter()
        .filter_map(|x| x.combined)
        .fold(0.0, f64::max);
    let mut growth_flags = [false; 6];
    for l in 0..5 {
        growth_flags[l] = low_trends[l] > GROWTH_TOLERANCE;
    }
    growth_flags[5] = high_trend > GROWTH_TOLERANCE;
    Ok(OperatorBoundReport {
        alpha,
        m,
        samples,
        low_constants,
        high_constant,
        combined_constant,
        low_trends,
        high_trend,
        growth_flags,
    })
}

/// Least-squares slope of `ln y` against `x`, ignoring non-positive `y`.
pub fn log_slope(series: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|p| p.1 > 0.0)
        .map(|&(x, y)| (x, y.ln()))
        .collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return 0.0;
    }
    pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn averaging_sums_alternating_harmonic_series() {
        let mut acc = 0.0;
        let sums: Vec<f64> = (1..40)
            .map(|k| {
                acc += if k % 2 == 1 { 1.0 } else { -1.0 } / k as f64;
                acc
            })
            .collect();
        assert!((repeated_average(&sums, 20) - 2f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn split_symbols_partition_full_symbol() {
        let split = OperatorSplit::new(-0.5, 1.3).unwrap();
        for i in 0..200 {
            let k = -0.2 + 0.002 * i as f64;
            let (l, h) = split.symbols(k);
            let full = split.full_symbol(k);
            assert!((l + h - full).abs() <= f64::EPSILON * full.abs());
        }
    }
}
