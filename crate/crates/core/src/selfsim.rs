//! Dynamic-rescaling solver in self-similar variables.
//!
//! The physical solution is written as `u(x,t) = e^{-s/2} U(X,s) + κ(t)` with
//! `X = e^{3s/2}(x - ξ(t))` and `s = -log(τ(t) - t)`. The modulation variables
//! `(τ, ξ, κ)` are fixed by the pins `U(0) = 0`, `∂U(0) = -1`, `∂²U(0) = 0`.
//!
//! The evolved variable is the slope `W = ∂_X U`, which decays at the edges of
//! the periodic box; `U` is rebuilt as its antiderivative anchored at the
//! origin. Within a step the solver works in the co-dilating coordinate
//! `Y = X e^{-3σ/2}`, which removes the stiff `3X/2` transport, then maps back
//! to the fixed grid with an exact band-limited resampling that also re-pins
//! the constraints.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{max_abs, Field};
use crate::multiplier::{bessel_exponent, dispersion_symbol};
use crate::spectral::{
    eval_series, ik_power, smooth_step, DilationResampler, GridSpec, SpectralPlan,
};

/// Third derivative at the origin below which the modulation system is ill-posed.
pub const MIN_CURVATURE: f64 = 1.0;

/// Modulation variables and their rates at one self-similar time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulationState {
    pub s: f64,
    pub t: f64,
    pub tau: f64,
    pub xi: f64,
    pub kappa: f64,
    pub tau_dot: f64,
    pub xi_dot: f64,
    pub kappa_dot: f64,
    /// `e^{s/2}(κ - ξ̇)`.
    pub drift: f64,
    /// `e^{-s/2} κ̇`.
    pub kappa_rate: f64,
    /// Self-similar time at which the rates were evaluated.
    pub rates_s: f64,
}

impl ModulationState {
    /// Positions at `(s, t)` with `τ = t + e^{-s}` and rates not yet computed.
    pub fn at(s: f64, t: f64, xi: f64, kappa: f64) -> Self {
        Self {
            s,
            t,
            tau: t + (-s).exp(),
            xi,
            kappa,
            tau_dot: 0.0,
            xi_dot: 0.0,
            kappa_dot: 0.0,
            drift: 0.0,
            kappa_rate: 0.0,
            rates_s: f64::NAN,
        }
    }

    /// `1 / (1 - τ̇)`.
    pub fn beta(&self) -> f64 {
        1.0 / (1.0 - self.tau_dot)
    }

    fn check_fresh(&self, s: f64) -> Result<()> {
        if self.rates_s == s {
            Ok(())
        } else {
            Err(Error::ModulationStale {
                rates_s: self.rates_s,
                field_s: s,
            })
        }
    }
}

/// Slope `W = ∂_X U` and profile `U` on a grid in `X`, at time `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct SelfSimField {
    grid: GridSpec<f64>,
    slope: Vec<f64>,
    values: Vec<f64>,
    s_tag: f64,
}

impl SelfSimField {
    /// Builds the field from its slope; `U` is the antiderivative with `U(0) = 0`.
    pub fn from_slope(grid: GridSpec<f64>, slope: Vec<f64>, s: f64) -> Result<Self> {
        if grid.center() != 0.0 {
            return Err(Error::Domain(
                "self-similar grids must be centred at the origin".into(),
            ));
        }
        let w = Field::new(grid, slope, s)?;
        let mut plan = SpectralPlan::new(grid);
        let c = plan.forward(w.values());
        let values = antiderivative(&mut plan, &c, 1.0);
        Ok(Self {
            grid,
            slope: w.into_values(),
            values,
            s_tag: s,
        })
    }

    pub fn grid(&self) -> &GridSpec<f64> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn slope(&self) -> &[f64] {
        &self.slope
    }

    pub fn s_tag(&self) -> f64 {
        self.s_tag
    }

    /// `∂_X^order U` on the grid (`order ≥ 1`).
    pub fn derivative(&self, order: u32) -> Vec<f64> {
        match order {
            0 => self.values.clone(),
            1 => self.slope.clone(),
            _ => SpectralPlan::new(self.grid).derivative(&self.slope, order - 1),
        }
    }

    /// `(U(0), ∂U(0) + 1, ∂²U(0))`.
    pub fn pin_residuals(&self) -> [f64; 3] {
        let c = SpectralPlan::new(self.grid).forward(&self.slope);
        let d = origin_jet(&self.grid, &c, 2);
        [self.values[self.grid.center_index()], d[0] + 1.0, d[1]]
    }

    /// `∂_X³ U(0, s)`.
    pub fn curvature(&self) -> f64 {
        let c = SpectralPlan::new(self.grid).forward(&self.slope);
        origin_jet(&self.grid, &c, 3)[2]
    }
}

/// `Σ_m c_m (ik_m)^j e^{ik_m L}` for `j = 0..n`: derivatives of the series at the
/// origin of a grid centred at zero.
fn origin_jet(grid: &GridSpec<f64>, c: &[Complex<f64>], n: usize) -> Vec<f64> {
    let nyq = grid.nyquist_slot();
    let mut out = vec![0.0; n];
    for (m, cm) in c.iter().enumerate() {
        if m == nyq {
            continue;
        }
        let sign = if grid.mode(m) % 2 == 0 { 1.0 } else { -1.0 };
        let k = grid.wavenumber(m);
        for (j, slot) in out.iter_mut().enumerate() {
            *slot += sign * (cm * ik_power(k, j as u32)).re;
        }
    }
    out
}

/// Antiderivative of the series with coefficients `c`, anchored at the origin
/// and scaled by `stretch` (for the co-dilating coordinate).
fn antiderivative(plan: &mut SpectralPlan<f64>, c: &[Complex<f64>], stretch: f64) -> Vec<f64> {
    let grid = *plan.grid();
    let nyq = grid.nyquist_slot();
    let mut a = vec![Complex::new(0.0, 0.0); c.len()];
    let mut at_origin = 0.0;
    for m in 1..c.len() {
        if m == nyq {
            continue;
        }
        let k = grid.wavenumber(m);
        a[m] = c[m] / Complex::new(0.0, k);
        let sign = if grid.mode(m) % 2 == 0 { 1.0 } else { -1.0 };
        at_origin += sign * a[m].re;
    }
    let periodic = plan.inverse_real(&a);
    let mean = c[0].re;
    grid.nodes()
        .iter()
        .zip(periodic)
        .map(|(x, p)| stretch * (mean * x + p - at_origin))
        .collect()
}

/// Numerical settings of the self-similar solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfSimConfig {
    pub alpha: f64,
    pub dispersion: bool,
    pub ds: f64,
    /// Sponge layer starts at this fraction of the half-length.
    pub sponge_start: f64,
    /// Ramp width of the sponge as a fraction of the half-length.
    pub sponge_ramp: f64,
    pub sponge_strength: f64,
    /// Spacing in `s` between stored snapshots.
    pub snapshot_interval: f64,
    /// Co-dilation accumulated before the slope is mapped back to the grid.
    pub regrid_interval: f64,
    pub pin_tolerance: f64,
    pub max_newton: usize,
    /// Half-width of the window on which the transport CFL guard is checked.
    pub cfl_window: f64,
}

impl Default for SelfSimConfig {
    fn default() -> Self {
        Self {
            alpha: -1.0,
            dispersion: true,
            ds: 1.0e-3,
            sponge_start: 0.85,
            sponge_ramp: 0.1,
            sponge_strength: 15.0,
            snapshot_interval: 0.05,
            regrid_interval: 0.05,
            pin_tolerance: 1.0e-10,
            max_newton: 10,
            cfl_window: 20.0,
        }
    }
}

impl SelfSimConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = (self.alpha < 0.0 || !self.dispersion)
            && self.ds > 0.0
            && self.sponge_start > 0.0
            && self.sponge_start + self.sponge_ramp <= 1.0
            && self.sponge_strength >= 0.0
            && self.snapshot_interval > 0.0
            && self.regrid_interval > 0.0
            && self.regrid_interval <= 0.2
            && self.max_newton > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "invalid self-similar solver settings: {self:?}"
            )))
        }
    }

    /// First `|X|` reached by the sponge layer.
    pub fn interior_limit(&self, half_length: f64) -> f64 {
        self.sponge_start * half_length
    }
}

/// Operator values at the origin that fix the modulation rates.
#[derive(Debug, Clone, Copy)]
struct OriginTerms {
    /// `(H + L)(∂U)(0)`.
    disp_slope: f64,
    /// `(H + L)(∂²U)(0)`.
    disp_curv: f64,
    /// `(K_s ∂U)(0)`, so that `e^{-s}(H + L)(U)(0) = e^{s/2}(K_s ∂U)(0)`.
    bessel_slope: f64,
    /// `∂³U(0)`.
    curvature: f64,
}

fn rates_from_terms(
    s: f64,
    t: f64,
    xi: f64,
    kappa: f64,
    o: OriginTerms,
) -> Result<ModulationState> {
    if !(o.curvature.abs() >= MIN_CURVATURE) {
        return Err(Error::DegenerateProfile(o.curvature));
    }
    let es = (-s).exp();
    let tau_dot = es * o.disp_slope;
    let drift = es * o.disp_curv / o.curvature;
    let kappa_rate = drift + (0.5 * s).exp() * o.bessel_slope;
    let mut m = ModulationState::at(s, t, xi, kappa);
    m.tau_dot = tau_dot;
    m.drift = drift;
    m.kappa_rate = kappa_rate;
    m.xi_dot = kappa - (-0.5 * s).exp() * drift;
    m.kappa_dot = (0.5 * s).exp() * kappa_rate;
    m.rates_s = s;
    Ok(m)
}

/// Symbols of the dispersion at fixed physical-frequency scale `e^{3s/2}`.
struct DispersionTables {
    /// Imaginary part of `(H + L)` per slot.
    full: Vec<f64>,
    /// `(1 + ζ²)^p` per slot.
    bessel: Vec<f64>,
}

impl DispersionTables {
    fn new(grid: &GridSpec<f64>, alpha: f64, s: f64, enabled: bool) -> Self {
        let scale = (1.5 * s).exp();
        let p = bessel_exponent(alpha);
        let n = grid.n_points();
        if !enabled {
            return Self {
                full: vec![0.0; n],
                bessel: vec![0.0; n],
            };
        }
        let full = (0..n)
            .map(|m| dispersion_symbol(scale * grid.wavenumber(m), alpha))
            .collect();
        let bessel = (0..n)
            .map(|m| {
                let z = scale * grid.wavenumber(m);
                (1.0 + z * z).powf(p)
            })
            .collect();
        Self { full, bessel }
    }

    /// Origin terms for slope coefficients `c`, with `∂_X = stretch ∂_Y`.
    fn origin_terms(&self, grid: &GridSpec<f64>, c: &[Complex<f64>], stretch: f64) -> OriginTerms {
        let nyq = grid.nyquist_slot();
        let (mut d0, mut d1, mut b0, mut w2) = (0.0, 0.0, 0.0, 0.0);
        for (m, cm) in c.iter().enumerate() {
            if m == nyq {
                continue;
            }
            let sign = if grid.mode(m) % 2 == 0 { 1.0 } else { -1.0 };
            let k = grid.wavenumber(m);
            let f = self.full[m];
            // i f c, i k i f c, (ik)² c.
            d0 += sign * (-f * cm.im);
            d1 += sign * (-k * f * cm.re);
            b0 += sign * self.bessel[m] * cm.re;
            w2 += sign * (-k * k * cm.re);
        }
        OriginTerms {
            disp_slope: d0,
            disp_curv: stretch * d1,
            bessel_slope: b0,
            curvature: stretch * stretch * w2,
        }
    }
}

/// Modulation rates of a pinned field at positions `(t, ξ, κ)` given by `at`.
pub fn solve_modulation(
    u: &SelfSimField,
    at: &ModulationState,
    alpha: f64,
    dispersion: bool,
) -> Result<ModulationState> {
    let s = u.s_tag();
    let tables = DispersionTables::new(u.grid(), alpha, s, dispersion);
    let c = SpectralPlan::new(*u.grid()).forward(u.slope());
    let o = tables.origin_terms(u.grid(), &c, 1.0);
    rates_from_terms(s, at.t, at.xi, at.kappa, o)
}

/// `∂_s U` in the fixed frame:
/// `½U - V ∂U - β e^{-s/2} κ̇ + β e^{-s} (H + L)(U)`.
pub fn rhs_selfsim(
    u: &SelfSimField,
    m: &ModulationState,
    alpha: f64,
    dispersion: bool,
) -> Result<Field<f64>> {
    m.check_fresh(u.s_tag())?;
    let s = u.s_tag();
    let grid = *u.grid();
    let beta = m.beta();
    let tables = DispersionTables::new(&grid, alpha, s, dispersion);
    let mut plan = SpectralPlan::new(grid);
    let c = plan.forward(u.slope());
    // e^{-s}(H + L)(U) = e^{s/2} K_s ∂U.
    let kw: Vec<Complex<f64>> = c.iter().zip(&tables.bessel).map(|(x, b)| x * *b).collect();
    let kw = plan.inverse_real(&kw);
    let es2 = (0.5 * s).exp();
    let out = grid
        .nodes()
        .iter()
        .enumerate()
        .map(|(j, &x)| {
            let v = 1.5 * x + beta * (u.values()[j] + m.drift);
            0.5 * u.values()[j] - v * u.slope()[j] - beta * m.kappa_rate + beta * es2 * kw[j]
        })
        .collect();
    Field::new(grid, out, s)
}

/// Right side of the `n`-times differentiated equation for `∂_s ∂^n U`, `n ≥ 1`:
/// `-((3n-1)/2 + β(n + [n≠1])∂U) ∂^nU - V ∂^{n+1}U + β e^{-s}(H+L)(∂^nU)
///  - β Σ_{k=2}^{n-1} C(n,k) ∂^kU ∂^{n+1-k}U`.
pub fn rhs_differentiated(
    u: &SelfSimField,
    m: &ModulationState,
    alpha: f64,
    dispersion: bool,
    n: u32,
) -> Result<Field<f64>> {
    m.check_fresh(u.s_tag())?;
    if n == 0 {
        return rhs_selfsim(u, m, alpha, dispersion);
    }
    let s = u.s_tag();
    let grid = *u.grid();
    let beta = m.beta();
    let tables = DispersionTables::new(&grid, alpha, s, dispersion);
    let mut plan = SpectralPlan::new(grid);
    let d: Vec<Vec<f64>> = (0..=n + 1).map(|k| u.derivative(k)).collect();
    let c = plan.forward(&d[n as usize]);
    let disp: Vec<Complex<f64>> = c
        .iter()
        .zip(&tables.full)
        .map(|(x, f)| x * Complex::new(0.0, *f))
        .collect();
    let disp_vals = plan.inverse_real(&disp);
    let es = (-s).exp();
    let nf = n as f64;
    let damping_count = nf + if n != 1 { 1.0 } else { 0.0 };
    let binom =
        |n: u32, k: u32| -> f64 { (1..=k).fold(1.0, |acc, i| acc * (n + 1 - i) as f64 / i as f64) };
    let out = grid
        .nodes()
        .iter()
        .enumerate()
        .map(|(j, &x)| {
            let v = 1.5 * x + beta * (u.values()[j] + m.drift);
            let mut r = -((3.0 * nf - 1.0) / 2.0 + beta * damping_count * d[1][j])
                * d[n as usize][j]
                - v * d[n as usize + 1][j]
                + beta * es * disp_vals[j];
            for k in 2..n {
                r -= beta * binom(n, k) * d[k as usize][j] * d[(n + 1 - k) as usize][j];
            }
            r
        })
        .collect();
    Field::new(grid, out, s)
}

/// One row of the per-step log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub s: f64,
    pub t: f64,
    pub tau: f64,
    pub xi: f64,
    pub kappa: f64,
    pub tau_dot: f64,
    pub drift: f64,
    pub kappa_rate: f64,
    pub beta: f64,
    pub nu: f64,
    pub pin_value: f64,
    pub pin_slope: f64,
    pub pin_curvature: f64,
    /// `ln λ`, the shift in `s` applied by the re-pin.
    pub repin_shift: f64,
    pub newton_iterations: usize,
}

/// Field and modulation stored at one snapshot time.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub field: SelfSimField,
    pub modulation: ModulationState,
}

impl Snapshot {
    /// Transport speed `V = 3X/2 + β(U + e^{s/2}(κ - ξ̇))` on the grid.
    pub fn velocity(&self) -> Vec<f64> {
        let m = &self.modulation;
        let beta = m.beta();
        self.field
            .grid()
            .nodes()
            .iter()
            .zip(self.field.values())
            .map(|(x, u)| 1.5 * x + beta * (u + m.drift))
            .collect()
    }
}

/// The integrator. Owns its FFT plans; not shared between threads.
pub struct SelfSimSolver {
    config: SelfSimConfig,
    grid: GridSpec<f64>,
    plan: SpectralPlan<f64>,
    resampler: DilationResampler<f64>,
    keep: Vec<bool>,
    sponge: Vec<f64>,
    /// Slope coefficients in the co-dilating coordinate `Y = X e^{-3σ/2}`.
    coeffs: Vec<Complex<f64>>,
    /// Self-similar time of the last regrid.
    base_s: f64,
    /// Time elapsed since the last regrid.
    sigma: f64,
    tables: DispersionTables,
    step_cap: f64,
    t: f64,
    xi: f64,
    kappa: f64,
    last_regrid: Option<RegridRecord>,
}

/// Outcome of one regrid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegridRecord {
    /// `ln λ`, the shift in `s` from rescaling the slope minimum to `-1`.
    pub shift: f64,
    /// Displacement of the slope minimum in `X`.
    pub offset: f64,
    pub newton_iterations: usize,
}

struct Stage {
    dc: Vec<Complex<f64>>,
    dt: f64,
    dxi: f64,
    dkappa: f64,
}

impl SelfSimSolver {
    pub fn new(
        u0: &SelfSimField,
        initial: &ModulationState,
        config: SelfSimConfig,
    ) -> Result<Self> {
        config.validate()?;
        let grid = *u0.grid();
        let mut plan = SpectralPlan::new(grid);
        let mut coeffs = plan.forward(u0.slope());
        let cut = grid.dealias_mode() as isize;
        let keep: Vec<bool> = (0..grid.n_points())
            .map(|m| grid.mode(m).abs() <= cut)
            .collect();
        project(&mut coeffs, &keep, grid.nyquist_slot());
        let l = grid.half_length();
        let start = config.sponge_start * l;
        let ramp = config.sponge_ramp * l;
        let sponge = grid
            .nodes()
            .iter()
            .map(|x| config.sponge_strength * smooth_step((x.abs() - start) / ramp))
            .collect();
        let s = u0.s_tag();
        let mut solver = Self {
            resampler: DilationResampler::new(grid),
            tables: DispersionTables::new(&grid, config.alpha, s, config.dispersion),
            config,
            grid,
            plan,
            keep,
            sponge,
            coeffs,
            base_s: s,
            sigma: 0.0,
            step_cap: 0.0,
            t: initial.t,
            xi: initial.xi,
            kappa: initial.kappa,
            last_regrid: None,
        };
        solver.regrid_now()?;
        Ok(solver)
    }

    pub fn config(&self) -> &SelfSimConfig {
        &self.config
    }

    pub fn grid(&self) -> &GridSpec<f64> {
        &self.grid
    }

    pub fn s(&self) -> f64 {
        self.base_s + self.sigma
    }

    pub fn last_regrid(&self) -> Option<RegridRecord> {
        self.last_regrid
    }

    /// Field on the fixed grid; regrids first if needed.
    pub fn field(&mut self) -> Result<SelfSimField> {
        self.regrid()?;
        let slope = self.plan.inverse_real(&self.coeffs);
        let values = antiderivative(&mut self.plan, &self.coeffs, 1.0);
        Ok(SelfSimField {
            grid: self.grid,
            slope,
            values,
            s_tag: self.base_s,
        })
    }

    /// Modulation state with rates evaluated at the current time.
    pub fn rates(&self) -> Result<ModulationState> {
        let stretch = (-1.5 * self.sigma).exp();
        let o = self.tables.origin_terms(&self.grid, &self.coeffs, stretch);
        rates_from_terms(self.s(), self.t, self.xi, self.kappa, o)
    }

    /// `(∂U(0) + 1, ∂²U(0), ∂³U(0))` from the current coefficients.
    fn origin_state(&self) -> [f64; 3] {
        let jet = origin_jet(&self.grid, &self.coeffs, 3);
        let stretch = (-1.5 * self.sigma).exp();
        [jet[0] + 1.0, stretch * jet[1], stretch * stretch * jet[2]]
    }

    fn stage(
        &mut self,
        c: &[Complex<f64>],
        sigma: f64,
        t: f64,
        xi: f64,
        kappa: f64,
    ) -> Result<Stage> {
        let s = self.base_s + sigma;
        let stretch = (-1.5 * sigma).exp();
        let o = self.tables.origin_terms(&self.grid, c, stretch);
        let m = rates_from_terms(s, t, xi, kappa, o)?;
        let beta = m.beta();
        let es = (-s).exp();
        let n = c.len();
        let nyq = self.grid.nyquist_slot();
        let zero = Complex::new(0.0, 0.0);
        let mut cy = vec![zero; n];
        for (m_, (slot, (&cm, &k))) in cy
            .iter_mut()
            .zip(c.iter().zip(self.plan.wavenumbers()))
            .enumerate()
        {
            if m_ != nyq {
                *slot = Complex::new(-k * cm.im, k * cm.re);
            }
        }
        let (w, wy) = self.plan.inverse_pair(c, &cy);
        let u = antiderivative(&mut self.plan, c, 1.0 / stretch);
        let prod: Vec<f64> = (0..n)
            .map(|j| {
                -beta * w[j] * w[j]
                    - beta * (u[j] + m.drift) * stretch * wy[j]
                    - self.sponge[j] * w[j]
            })
            .collect();
        let p = self.plan.forward(&prod);
        let mut dc = vec![zero; n];
        let full = &self.tables.full;
        for m_ in 0..n {
            if m_ == nyq {
                continue;
            }
            let disp = Complex::new(-full[m_] * c[m_].im, full[m_] * c[m_].re);
            let nonlinear = if self.keep[m_] { p[m_] } else { zero };
            dc[m_] = nonlinear - c[m_] + disp * (beta * es);
        }
        let dtds = beta * es;
        Ok(Stage {
            dc,
            dt: dtds,
            dxi: m.xi_dot * dtds,
            dkappa: m.kappa_dot * dtds,
        })
    }

    /// Largest stable step for the residual transport `β(U + drift)` on the inner window.
    fn cfl_step(&mut self) -> Result<f64> {
        let m = self.rates()?;
        let stretch = (-1.5 * self.sigma).exp();
        let u = antiderivative(&mut self.plan, &self.coeffs, 1.0 / stretch);
        let beta = m.beta();
        let dx = self.grid.spacing();
        let w = self.config.cfl_window;
        let vmax = self
            .grid
            .nodes()
            .iter()
            .zip(&u)
            .filter(|(y, _)| (*y / stretch).abs() <= w)
            .fold(0.0_f64, |a, (_, u)| {
                a.max((beta * (u + m.drift) * stretch).abs())
            });
        Ok(if vmax > 0.0 {
            0.5 * dx / vmax
        } else {
            f64::INFINITY
        })
    }

    /// Advances by one RK4 step, regridding when the co-dilation reaches the
    /// regrid interval. Returns the log row.
    pub fn step(&mut self) -> Result<StepRecord> {
        let remaining = self.config.regrid_interval - self.sigma;
        let mut ds = self.config.ds.min(self.step_cap);
        if ds >= remaining - 1e-12 {
            ds = remaining;
        } else if remaining - ds < 0.25 * ds {
            ds = 0.5 * remaining;
        }
        let c0 = self.coeffs.clone();
        let (t0, xi0, ka0, s0) = (self.t, self.xi, self.kappa, self.sigma);
        let axpy = |base: &[Complex<f64>], k: &[Complex<f64>], h: f64| -> Vec<Complex<f64>> {
            base.iter().zip(k).map(|(a, b)| a + b * h).collect()
        };
        let h = 0.5 * ds;
        let k1 = self.stage(&c0, s0, t0, xi0, ka0)?;
        let k2 = self.stage(
            &axpy(&c0, &k1.dc, h),
            s0 + h,
            t0 + h * k1.dt,
            xi0 + h * k1.dxi,
            ka0 + h * k1.dkappa,
        )?;
        let k3 = self.stage(
            &axpy(&c0, &k2.dc, h),
            s0 + h,
            t0 + h * k2.dt,
            xi0 + h * k2.dxi,
            ka0 + h * k2.dkappa,
        )?;
        let k4 = self.stage(
            &axpy(&c0, &k3.dc, ds),
            s0 + ds,
            t0 + ds * k3.dt,
            xi0 + ds * k3.dxi,
            ka0 + ds * k3.dkappa,
        )?;
        let w6 = ds / 6.0;
        self.coeffs = (0..c0.len())
            .map(|m| c0[m] + (k1.dc[m] + (k2.dc[m] + k3.dc[m]) * 2.0 + k4.dc[m]) * w6)
            .collect();
        self.t = t0 + w6 * (k1.dt + 2.0 * (k2.dt + k3.dt) + k4.dt);
        self.xi = xi0 + w6 * (k1.dxi + 2.0 * (k2.dxi + k3.dxi) + k4.dxi);
        self.kappa = ka0 + w6 * (k1.dkappa + 2.0 * (k2.dkappa + k3.dkappa) + k4.dkappa);
        self.sigma = s0 + ds;
        let mut regrid = None;
        if self.sigma >= self.config.regrid_interval - 1e-12 {
            regrid = self.regrid_now()?;
        }
        let m = self.rates()?;
        let [pin_slope, pin_curvature, nu] = self.origin_state();
        Ok(StepRecord {
            s: self.s(),
            t: self.t,
            tau: m.tau,
            xi: self.xi,
            kappa: self.kappa,
            tau_dot: m.tau_dot,
            drift: m.drift,
            kappa_rate: m.kappa_rate,
            beta: m.beta(),
            nu,
            pin_value: 0.0,
            pin_slope,
            pin_curvature,
            repin_shift: regrid.map_or(0.0, |r| r.shift),
            newton_iterations: regrid.map_or(0, |r| r.newton_iterations),
        })
    }

    /// Maps the co-dilated slope back to the fixed grid if any co-dilation is pending.
    pub fn regrid(&mut self) -> Result<()> {
        if self.sigma > 0.0 {
            self.regrid_now()?;
        }
        Ok(())
    }

    /// Maps the co-dilated slope back to the grid, moving the slope minimum to
    /// the origin and rescaling it to `-1`.
    fn regrid_now(&mut self) -> Result<Option<RegridRecord>> {
        let c = std::mem::take(&mut self.coeffs);
        let ds = self.sigma;
        let jet = origin_jet(&self.grid, &c, 6);
        let taylor = |d: &[f64], x: f64| -> f64 {
            let mut acc = 0.0;
            let mut term = 1.0;
            for (i, v) in d.iter().enumerate() {
                if i > 0 {
                    term *= x / i as f64;
                }
                acc += v * term;
            }
            acc
        };
        let dx = self.grid.spacing();
        let use_series = |delta: f64| delta.abs() > 1e-3 * dx;
        let derivative = |order: u32| -> Vec<Complex<f64>> {
            c.iter()
                .zip(self.plan.wavenumbers())
                .map(|(cm, &k)| cm * ik_power(k, order))
                .collect()
        };
        let (c1, c2) = (derivative(1), derivative(2));
        let slope_at = |delta: f64| {
            if use_series(delta) {
                (
                    eval_series(&self.grid, &c1, delta),
                    eval_series(&self.grid, &c2, delta),
                )
            } else {
                (taylor(&jet[1..], delta), taylor(&jet[2..], delta))
            }
        };
        let tol = 1e-3 * self.config.pin_tolerance;
        let mut delta = 0.0;
        let mut iterations = 0;
        loop {
            let (g, gp) = slope_at(delta);
            if g.abs() <= tol {
                break;
            }
            if iterations == self.config.max_newton || !(gp > 0.0) {
                return Err(Error::PinFailure(iterations));
            }
            delta -= g / gp;
            iterations += 1;
        }
        let value = if use_series(delta) {
            eval_series(&self.grid, &c, delta)
        } else {
            taylor(&jet, delta)
        };
        let lambda = -value;
        if !(lambda > 0.0) {
            return Err(Error::PinFailure(iterations));
        }
        // ∫_0^δ of the slope, in co-dilated units.
        let integral = if use_series(delta) {
            let nyq = self.grid.nyquist_slot();
            let a: Vec<Complex<f64>> = c
                .iter()
                .zip(self.plan.wavenumbers())
                .enumerate()
                .map(|(m, (cm, &k))| {
                    if m == 0 || m == nyq {
                        Complex::new(0.0, 0.0)
                    } else {
                        cm / Complex::new(0.0, k)
                    }
                })
                .collect();
            c[0].re * delta + eval_series(&self.grid, &a, delta) - eval_series(&self.grid, &a, 0.0)
        } else {
            let mut acc = 0.0;
            let mut term = delta;
            for (i, v) in jet.iter().enumerate() {
                if i > 0 {
                    term *= delta / (i + 1) as f64;
                }
                acc += v * term;
            }
            acc
        };
        let grow = (1.5 * ds).exp();
        let mu = lambda.powf(-1.5) / grow;
        let mut w = self.resampler.resample(&c, mu, delta);
        for v in &mut w {
            *v /= lambda;
        }
        let s_after = self.base_s + ds;
        let offset = grow * delta;
        self.xi += (-1.5 * s_after).exp() * offset;
        self.kappa += (-0.5 * s_after).exp() * grow * integral;
        self.base_s = s_after + lambda.ln();
        self.sigma = 0.0;
        let mut coeffs = self.plan.forward(&w);
        project(&mut coeffs, &self.keep, self.grid.nyquist_slot());
        self.coeffs = coeffs;
        self.tables = DispersionTables::new(
            &self.grid,
            self.config.alpha,
            self.base_s,
            self.config.dispersion,
        );
        self.step_cap = self.cfl_step()?;
        let record = RegridRecord {
            shift: lambda.ln(),
            offset,
            newton_iterations: iterations,
        };
        self.last_regrid = Some(record);
        Ok(Some(record))
    }

    /// Steps until `s ≥ s_end`, storing a snapshot at each regrid that
    /// crosses a multiple of `snapshot_interval`.
    pub fn run(&mut self, s_end: f64, max_steps: usize) -> Result<SelfSimRun> {
        let mut log = Vec::new();
        let mut snapshots = vec![self.snapshot()?];
        let mut next_snapshot = self.s() + self.config.snapshot_interval - 1e-9;
        let mut steps = 0;
        while self.s() < s_end && steps < max_steps {
            let rec = match self.step() {
                Ok(r) => r,
                Err(e) => {
                    return Ok(SelfSimRun {
                        log,
                        snapshots,
                        failure: Some(e.to_string()),
                    })
                }
            };
            log.push(rec);
            steps += 1;
            if self.sigma == 0.0 && self.s() >= next_snapshot {
                snapshots.push(self.snapshot()?);
                next_snapshot += self.config.snapshot_interval;
            }
        }
        let failure = match self.regrid() {
            Ok(()) => {
                if self.sigma == 0.0 && snapshots.last().is_none_or(|s| s.field.s_tag() < self.s())
                {
                    snapshots.push(self.snapshot()?);
                }
                None
            }
            Err(e) => Some(e.to_string()),
        };
        Ok(SelfSimRun {
            log,
            snapshots,
            failure,
        })
    }

    fn snapshot(&mut self) -> Result<Snapshot> {
        let field = self.field()?;
        let modulation = self.rates()?;
        Ok(Snapshot { field, modulation })
    }
}

fn project(c: &mut [Complex<f64>], keep: &[bool], nyq: usize) {
    for (m, x) in c.iter_mut().enumerate() {
        if !keep[m] || m == nyq {
            *x = Complex::new(0.0, 0.0);
        }
    }
}

/// One controlled step from `(u, m)`; `m` supplies the positions `(t, ξ, κ)`.
pub fn step_selfsim(
    u: &SelfSimField,
    m: &ModulationState,
    config: &SelfSimConfig,
) -> Result<(SelfSimField, ModulationState)> {
    let mut solver = SelfSimSolver::new(u, m, config.clone())?;
    solver.step()?;
    let field = solver.field()?;
    let next = solver.rates()?;
    Ok((field, next))
}

/// Log and snapshots of a self-similar run.
#[derive(Debug, Clone)]
pub struct SelfSimRun {
    pub log: Vec<StepRecord>,
    pub snapshots: Vec<Snapshot>,
    /// Set when the run stopped early; the history up to that point is kept.
    pub failure: Option<String>,
}

impl SelfSimRun {
    pub fn last(&self) -> &Snapshot {
        self.snapshots
            .last()
            .expect("a run stores its initial snapshot")
    }

    /// Physical profile `u(x) = e^{-s/2} U(X) + κ`, `X = e^{3s/2}(x - ξ)`, at
    /// the given snapshot, evaluated by local interpolation in `X`.
    pub fn physical_value(snap: &Snapshot, x: f64) -> Option<f64> {
        let m = &snap.modulation;
        let big_x = (1.5 * m.s).exp() * (x - m.xi);
        let u = lagrange_sample(snap.field.grid(), snap.field.values(), big_x, 8)?;
        Some((-0.5 * m.s).exp() * u + m.kappa)
    }
}

/// `points`-point Lagrange interpolation of grid samples at `x`; `None` when
/// the stencil would leave the grid.
pub fn lagrange_sample(grid: &GridSpec<f64>, values: &[f64], x: f64, points: usize) -> Option<f64> {
    let h = grid.spacing();
    let pos = (x - grid.node(0)) / h;
    let half = points / 2;
    let base = pos.floor() as isize - half as isize + 1;
    if base < 0 || (base as usize + points) > values.len() {
        return None;
    }
    let base = base as usize;
    let frac = pos - base as f64;
    let mut acc = 0.0;
    for i in 0..points {
        let mut w = 1.0;
        for j in 0..points {
            if i != j {
                w *= (frac - j as f64) / (i as f64 - j as f64);
            }
        }
        acc += w * values[base + i];
    }
    Some(acc)
}

/// Samples `(s, Φ(s))` of a Lagrangian trajectory `dΦ/ds = V(Φ, s)`.
pub fn integrate_trajectory(x0: f64, history: &[Snapshot], ds: f64) -> Result<Vec<(f64, f64)>> {
    let limit = history
        .first()
        .map_or(0.0, |h| h.field.grid().half_length());
    let traced = trace_trajectory(x0, history, ds, limit)?;
    match traced.exit {
        Some((s, x)) => Err(Error::OutOfDomain { s, position: x }),
        None => Ok(traced.path),
    }
}

/// Path of a Lagrangian trajectory, possibly cut short at the edge of a window.
#[derive(Debug, Clone, PartialEq)]
pub struct TracedPath {
    pub path: Vec<(f64, f64)>,
    /// `(s, X)` of the first stage that would have left `|X| < limit`.
    pub exit: Option<(f64, f64)>,
}

/// RK4 integration of `dX/ds = V(X, s)` stopping once a stage leaves `|X| < limit`.
pub fn trace_trajectory(x0: f64, history: &[Snapshot], ds: f64, limit: f64) -> Result<TracedPath> {
    if history.len() < 4 {
        return Err(Error::Domain(
            "trajectory integration needs at least four snapshots".into(),
        ));
    }
    let times: Vec<f64> = history.iter().map(|h| h.field.s_tag()).collect();
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("snapshot times must increase".into()));
    }
    let velocities: Vec<Vec<f64>> = history.iter().map(Snapshot::velocity).collect();
    let grid = *history[0].field.grid();
    let limit = limit.min(grid.half_length());
    let speed = |x: f64, s: f64| -> Result<f64> {
        if x.abs() >= limit {
            return Err(Error::OutOfDomain { s, position: x });
        }
        // Cubic Lagrange in s over the four snapshots bracketing s.
        let i = match times.iter().position(|&t| t > s) {
            Some(i) => i,
            None => times.len() - 1,
        };
        let lo = i.saturating_sub(2).min(times.len() - 4);
        let mut v = 0.0;
        for a in lo..lo + 4 {
            let mut w = 1.0;
            for b in lo..lo + 4 {
                if a != b {
                    w *= (s - times[b]) / (times[a] - times[b]);
                }
            }
            let va = lagrange_sample(&grid, &velocities[a], x, 6)
                .ok_or(Error::OutOfDomain { s, position: x })?;
            v += w * va;
        }
        Ok(v)
    };
    let s0 = times[0];
    let s_end = *times.last().expect("non-empty");
    let mut s = s0;
    let mut x = x0;
    let mut out = vec![(s, x)];
    while s < s_end - 1e-12 {
        let h = ds.min(s_end - s);
        let stages = (|| -> Result<f64> {
            let k1 = speed(x, s)?;
            let k2 = speed(x + 0.5 * h * k1, s + 0.5 * h)?;
            let k3 = speed(x + 0.5 * h * k2, s + 0.5 * h)?;
            let k4 = speed(x + h * k3, s + h)?;
            Ok(x + h / 6.0 * (k1 + 2.0 * (k2 + k3) + k4))
        })();
        match stages {
            Ok(next) if next.abs() < limit => {
                x = next;
                s += h;
                out.push((s, x));
            }
            Ok(next) => {
                return Ok(TracedPath {
                    path: out,
                    exit: Some((s + h, next)),
                })
            }
            Err(Error::OutOfDomain { s, position }) => {
                return Ok(TracedPath {
                    path: out,
                    exit: Some((s, position)),
                })
            }
            Err(e) => return Err(e),
        }
    }
    Ok(TracedPath {
        path: out,
        exit: None,
    })
}

/// Largest `|∂U|` and its grid index.
pub fn slope_extremum(u: &SelfSimField) -> (f64, usize) {
    let mut best = (0.0, 0);
    for (j, w) in u.slope().iter().enumerate() {
        if w.abs() > best.0 {
            best = (w.abs(), j);
        }
    }
    best
}

/// `max |∂U|` restricted to `|X| ≤ window`.
pub fn windowed_max(grid: &GridSpec<f64>, v: &[f64], window: f64) -> f64 {
    let vals: Vec<f64> = grid
        .nodes()
        .iter()
        .zip(v)
        .filter(|(x, _)| x.abs() <= window)
        .map(|(_, v)| *v)
        .collect();
    max_abs(&vals)
}
