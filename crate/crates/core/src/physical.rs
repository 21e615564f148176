//! Pseudospectral method-of-lines solver in physical variables.
//!
//! The state is kept as normalised Fourier coefficients on a periodic grid and
//! advanced with classical RK4. The quadratic term is dealiased with the
//! two-thirds rule: coefficients above the cutoff are zeroed both before the
//! product is formed and after it is transformed back.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{l2_norm, max_abs, Field};
use crate::multiplier::dispersion_symbol;
use crate::scalar::Real;
use crate::spectral::{eval_series, GridSpec, SpectralPlan};

/// Any sample beyond this magnitude aborts the run.
pub const OVERFLOW_GUARD: f64 = 1.0e12;
/// Relative spectral tail above which a field counts as unresolved.
pub const TAIL_TOLERANCE: f64 = 1.0e-8;

/// Which terms of the equation are switched on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Model<T> {
    pub alpha: T,
    pub dispersion: bool,
    pub transport: bool,
}

impl<T: Real> Model<T> {
    pub fn full(alpha: T) -> Result<Self> {
        if !(alpha < T::zero()) {
            return Err(Error::Domain(format!(
                "dispersion exponent must be negative, got {alpha}"
            )));
        }
        Ok(Self {
            alpha,
            dispersion: true,
            transport: true,
        })
    }

    /// Inviscid Burgers: dispersion off.
    pub fn burgers() -> Self {
        Self {
            alpha: -T::one(),
            dispersion: false,
            transport: true,
        }
    }

    /// Linear dispersive flow: transport off.
    pub fn linear(alpha: T) -> Result<Self> {
        Ok(Self {
            transport: false,
            ..Self::full(alpha)?
        })
    }
}

/// Time-step selection and termination threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepController<T> {
    pub cfl: T,
    pub gradient_safety: T,
    pub stop_gradient: T,
}

impl<T: Real> Default for StepController<T> {
    fn default() -> Self {
        Self {
            cfl: T::lit(0.5),
            gradient_safety: T::lit(0.05),
            stop_gradient: T::lit(-1.0e4),
        }
    }
}

impl<T: Real> StepController<T> {
    pub fn validate(&self) -> Result<()> {
        let ok = self.cfl > T::zero()
            && self.cfl <= T::one()
            && self.gradient_safety > T::zero()
            && self.stop_gradient < T::zero();
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "step controller needs cfl in (0,1], gradient_safety > 0, stop_gradient < 0; got {self:?}"
            )))
        }
    }

    /// `min(cfl Δx / max|u|, gradient_safety / |min u_x|)`.
    pub fn dt(&self, dx: T, max_u: T, min_ux: T) -> T {
        let transport = if max_u > T::zero() {
            self.cfl * dx / max_u
        } else {
            T::infinity()
        };
        let gradient = if min_ux < T::zero() {
            self.gradient_safety / (-min_ux)
        } else {
            T::infinity()
        };
        let dt = transport.min(gradient);
        if dt.is_finite() {
            dt
        } else {
            self.cfl * dx
        }
    }
}

/// Diagnostics of one state.
#[derive(Debug, Clone, Copy)]
struct Probe<T> {
    max_u: T,
    min_ux: T,
    argmin: usize,
}

/// Spectral integrator bound to one grid size.
pub struct PhysicalSolver<T: Real> {
    model: Model<T>,
    plan: SpectralPlan<T>,
    coeffs: Vec<Complex<T>>,
    dispersion: Vec<T>,
    keep: Vec<bool>,
    time: T,
}

impl<T: Real> PhysicalSolver<T> {
    pub fn new(u0: &Field<T>, model: Model<T>) -> Self {
        let grid = *u0.grid();
        let mut plan = SpectralPlan::new(grid);
        let mut coeffs = plan.forward(u0.values());
        let (dispersion, keep) = Self::tables(&grid, &model);
        Self::project(&mut coeffs, &keep);
        Self {
            model,
            plan,
            coeffs,
            dispersion,
            keep,
            time: u0.time_tag(),
        }
    }

    fn tables(grid: &GridSpec<T>, model: &Model<T>) -> (Vec<T>, Vec<bool>) {
        let cut = grid.dealias_mode() as isize;
        let keep: Vec<bool> = (0..grid.n_points())
            .map(|m| grid.mode(m).abs() <= cut)
            .collect();
        let dispersion = (0..grid.n_points())
            .map(|m| {
                if model.dispersion {
                    dispersion_symbol(grid.wavenumber(m), model.alpha)
                } else {
                    T::zero()
                }
            })
            .collect();
        (dispersion, keep)
    }

    fn project(c: &mut [Complex<T>], keep: &[bool]) {
        for (x, &k) in c.iter_mut().zip(keep) {
            if !k {
                *x = Complex::new(T::zero(), T::zero());
            }
        }
    }

    pub fn grid(&self) -> &GridSpec<T> {
        self.plan.grid()
    }

    pub fn time(&self) -> T {
        self.time
    }

    pub fn coefficients(&self) -> &[Complex<T>] {
        &self.coeffs
    }

    pub fn field(&mut self) -> Field<T> {
        let values = self.plan.inverse_real(&self.coeffs);
        Field::new(*self.plan.grid(), values, self.time).expect("finite state")
    }

    /// Largest coefficient in the top fifth of the retained band relative to
    /// the largest coefficient overall.
    pub fn spectral_tail(&self) -> T {
        spectral_tail(self.plan.grid(), &self.coeffs)
    }

    /// Right-hand side in coefficient space, plus state diagnostics.
    fn rhs(&mut self, c: &[Complex<T>]) -> (Vec<Complex<T>>, Probe<T>) {
        let n = c.len();
        let zero = Complex::new(T::zero(), T::zero());
        let k = self.plan.wavenumbers().to_vec();
        let nyq = self.plan.grid().nyquist_slot();
        let mut cx = vec![zero; n];
        for m in 0..n {
            if m != nyq {
                cx[m] = Complex::new(-k[m] * c[m].im, k[m] * c[m].re);
            }
        }
        let (u, ux) = self.plan.inverse_pair(c, &cx);
        let mut argmin = 0;
        for j in 1..n {
            if ux[j] < ux[argmin] {
                argmin = j;
            }
        }
        let probe = Probe {
            max_u: max_abs(&u),
            min_ux: ux[argmin],
            argmin,
        };
        let mut out = vec![zero; n];
        if self.model.transport {
            let prod: Vec<T> = u.iter().zip(&ux).map(|(a, b)| *a * *b).collect();
            let p = self.plan.forward(&prod);
            for m in 0..n {
                if self.keep[m] {
                    out[m] = -p[m];
                }
            }
        }
        if self.model.dispersion {
            for m in 0..n {
                if m != nyq {
                    let d = self.dispersion[m];
                    out[m] = out[m] + Complex::new(-d * c[m].im, d * c[m].re);
                }
            }
        }
        out[0] = zero;
        out[nyq] = zero;
        (out, probe)
    }

    fn probe(&mut self) -> Probe<T> {
        let c = self.coeffs.clone();
        let model = self.model;
        self.model = Model {
            transport: false,
            dispersion: false,
            ..model
        };
        let (_, p) = self.rhs(&c);
        self.model = model;
        p
    }

    /// One RK4 step of length `dt`.
    pub fn step_fixed(&mut self, dt: T) -> Result<()> {
        let c0 = self.coeffs.clone();
        let (k1, _) = self.rhs(&c0);
        let half = dt / T::lit(2.0);
        let stage = |base: &[Complex<T>], k: &[Complex<T>], h: T| -> Vec<Complex<T>> {
            base.iter().zip(k).map(|(a, b)| *a + *b * h).collect()
        };
        let (k2, _) = self.rhs(&stage(&c0, &k1, half));
        let (k3, _) = self.rhs(&stage(&c0, &k2, half));
        let (k4, _) = self.rhs(&stage(&c0, &k3, dt));
        let sixth = dt / T::lit(6.0);
        for m in 0..c0.len() {
            self.coeffs[m] = c0[m] + (k1[m] + (k2[m] + k3[m]) * T::lit(2.0) + k4[m]) * sixth;
        }
        self.time += dt;
        let guard = self.coeffs.iter().fold(T::zero(), |a, c| a + c.norm());
        if !guard.is_finite() || guard > T::lit(OVERFLOW_GUARD) {
            return Err(Error::Blowup {
                value: guard.to_f64_lossy(),
                time: self.time.to_f64_lossy(),
            });
        }
        Ok(())
    }

    /// RK4 step with `dt` from the controller, capped by `dt_max`. Returns `dt`.
    pub fn step_controlled(&mut self, controller: &StepController<T>, dt_max: T) -> Result<T> {
        let p = self.probe();
        let dt = controller
            .dt(self.grid().spacing(), p.max_u, p.min_ux)
            .min(dt_max);
        self.step_fixed(dt)?;
        Ok(dt)
    }

    /// Re-samples the state on a grid with twice the points (exact for the
    /// band-limited interpolant).
    pub fn refine(&mut self) -> Result<()> {
        let old = *self.grid();
        let grid = GridSpec::new(old.n_points() * 2, old.half_length())?.with_center(old.center());
        let n_old = old.n_points();
        let n_new = grid.n_points();
        let zero = Complex::new(T::zero(), T::zero());
        let mut c = vec![zero; n_new];
        for m in 0..n_old {
            let mode = old.mode(m);
            if m == old.nyquist_slot() {
                continue;
            }
            let slot = if mode >= 0 {
                mode as usize
            } else {
                (n_new as isize + mode) as usize
            };
            c[slot] = self.coeffs[m];
        }
        let (dispersion, keep) = Self::tables(&grid, &self.model);
        self.plan = SpectralPlan::new(grid);
        self.coeffs = c;
        self.dispersion = dispersion;
        self.keep = keep;
        Ok(())
    }

    /// Minimum of `u_x` refined off-grid by Newton on `u_xx = 0`.
    fn refined_min(&self, argmin: usize) -> (T, T) {
        let grid = *self.grid();
        let k = self.plan.wavenumbers();
        let deriv = |order: u32| -> Vec<Complex<T>> {
            self.coeffs
                .iter()
                .zip(k)
                .enumerate()
                .map(|(m, (c, &km))| {
                    if m == grid.nyquist_slot() {
                        Complex::new(T::zero(), T::zero())
                    } else {
                        *c * crate::spectral::ik_power(km, order)
                    }
                })
                .collect()
        };
        let (c1, c2, c3) = (deriv(1), deriv(2), deriv(3));
        let mut x = grid.node(argmin);
        let dx = grid.spacing();
        let x0 = x;
        for _ in 0..8 {
            let f = eval_series(&grid, &c2, x);
            let fp = eval_series(&grid, &c3, x);
            if fp <= T::zero() {
                break;
            }
            let next = x - f / fp;
            if (next - x0).abs() > dx {
                break;
            }
            let done = (next - x).abs() < T::lit(1e-14) * (T::one() + x.abs());
            x = next;
            if done {
                break;
            }
        }
        (eval_series(&grid, &c1, x), x)
    }
}

/// Relative amplitude of the top fifth of the two-thirds band.
pub fn spectral_tail<T: Real>(grid: &GridSpec<T>, coeffs: &[Complex<T>]) -> T {
    let cut = grid.dealias_mode() as isize;
    let lo = (cut * 4) / 5;
    let mut peak = T::zero();
    let mut tail = T::zero();
    for (m, c) in coeffs.iter().enumerate() {
        let a = c.norm();
        peak = peak.max(a);
        let mode = grid.mode(m).abs();
        if mode >= lo && mode <= cut {
            tail = tail.max(a);
        }
    }
    if peak > T::zero() {
        tail / peak
    } else {
        T::zero()
    }
}

/// `-u u_x + K u_x` with the product dealiased. Fails when `u` is unresolved.
pub fn rhs_physical<T: Real>(u: &Field<T>, model: &Model<T>) -> Result<Field<T>> {
    let mut plan = SpectralPlan::new(*u.grid());
    let c = plan.forward(u.values());
    let tail = spectral_tail(u.grid(), &c);
    if tail > T::lit(TAIL_TOLERANCE) {
        return Err(Error::Resolution(format!(
            "spectral tail {:e} exceeds {TAIL_TOLERANCE:e}",
            tail.to_f64_lossy()
        )));
    }
    let mut solver = PhysicalSolver::new(u, *model);
    let state = solver.coeffs.clone();
    let (r, _) = solver.rhs(&state);
    let values = solver.plan.inverse_real(&r);
    Field::new(*u.grid(), values, u.time_tag())
}

/// One controlled RK4 step from `u`.
pub fn step<T: Real>(
    u: &Field<T>,
    controller: &StepController<T>,
    model: &Model<T>,
) -> Result<Field<T>> {
    controller.validate()?;
    let mut solver = PhysicalSolver::new(u, *model);
    solver.step_controlled(controller, T::infinity())?;
    Ok(solver.field())
}

/// Options of a run to breaking beyond the step controller.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOptions {
    /// Largest grid the solver may refine to.
    pub max_points: usize,
    /// Output interval in time before the gradient steepens.
    pub output_interval: f64,
    /// A record is written whenever `-1/min u_x` shrinks by this factor.
    pub geometric_ratio: f64,
    /// Times at which full frames are kept (sorted ascending).
    pub snapshot_times: Vec<f64>,
    /// Hard cap on the number of steps.
    pub max_steps: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            max_points: 1 << 16,
            output_interval: 1.0e-3,
            geometric_ratio: 0.97,
            snapshot_times: Vec::new(),
            max_steps: 10_000_000,
        }
    }
}

/// One output row of a physical run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalRecord {
    pub t: f64,
    pub min_ux: f64,
    pub argmin: f64,
    pub max_abs_u: f64,
    pub l2: f64,
    pub mean: f64,
    pub tail: f64,
    /// Largest `|u|` at the two end nodes of the periodic box.
    pub edge: f64,
    pub n_points: usize,
}

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason")]
pub enum Termination {
    /// `min u_x` reached the stop threshold.
    Breaking,
    /// The tail check tripped at the largest allowed grid.
    ResolutionLimit {
        last_resolved_time: f64,
    },
    StepLimit,
}

/// Output of [`run_to_breaking`].
#[derive(Debug, Clone)]
pub struct PhysicalTrajectory {
    pub records: Vec<PhysicalRecord>,
    /// Frames at the requested snapshot times that were reached while resolved.
    pub snapshots: Vec<Field<f64>>,
    /// Last resolved state.
    pub final_frame: Field<f64>,
    pub termination: Termination,
    pub steps: usize,
}

fn to_f64_field<T: Real>(f: &Field<T>) -> Field<f64> {
    let g = f.grid();
    let grid = GridSpec::new(g.n_points(), g.half_length().to_f64_lossy())
        .expect("grid already validated")
        .with_center(g.center().to_f64_lossy());
    let values = f.values().iter().map(|v| v.to_f64_lossy()).collect();
    Field::new(grid, values, f.time_tag().to_f64_lossy()).expect("finite frame")
}

/// Integrates from `u0` until `min u_x ≤ stop_gradient` or the grid can no
/// longer resolve the solution.
pub fn run_to_breaking<T: Real>(
    u0: &Field<T>,
    model: &Model<T>,
    controller: &StepController<T>,
    options: &RunOptions,
) -> Result<PhysicalTrajectory> {
    controller.validate()?;
    if options.max_points < u0.grid().n_points() {
        return Err(Error::Config(
            "max_points is smaller than the initial grid".into(),
        ));
    }
    let mut solver = PhysicalSolver::new(u0, *model);
    let mut records = Vec::new();
    let mut snapshots = Vec::new();
    let mut pending: Vec<f64> = options.snapshot_times.clone();
    pending.sort_by(|a, b| a.partial_cmp(b).expect("finite snapshot times"));
    pending.retain(|&t| t >= u0.time_tag().to_f64_lossy());
    let mut pending = pending.into_iter().peekable();
    let mut last_record_t = f64::NEG_INFINITY;
    let mut last_record_y = f64::INFINITY;
    let mut steps = 0;
    let mut last_good = solver.field();
    let termination = loop {
        if solver.spectral_tail() > T::lit(TAIL_TOLERANCE) {
            if solver.grid().n_points() * 2 <= options.max_points {
                solver.coeffs = last_good_coeffs(&mut solver, &last_good);
                solver.refine()?;
                continue;
            }
            break Termination::ResolutionLimit {
                last_resolved_time: last_good.time_tag().to_f64_lossy(),
            };
        }
        last_good = solver.field();
        let probe = solver.probe();
        let t = solver.time().to_f64_lossy();
        let min_ux = probe.min_ux.to_f64_lossy();
        let y = if min_ux < 0.0 {
            -1.0 / min_ux
        } else {
            f64::INFINITY
        };
        let stop = probe.min_ux <= controller.stop_gradient;
        if stop
            || t - last_record_t >= options.output_interval
            || y <= last_record_y * options.geometric_ratio
        {
            let (min_ref, x_ref) = solver.refined_min(probe.argmin);
            let values = last_good.values();
            records.push(PhysicalRecord {
                t,
                min_ux: min_ref.to_f64_lossy().min(min_ux),
                argmin: x_ref.to_f64_lossy(),
                max_abs_u: max_abs(values).to_f64_lossy(),
                l2: l2_norm(values, solver.grid().spacing()).to_f64_lossy(),
                mean: solver.coeffs[0].re.to_f64_lossy(),
                tail: solver.spectral_tail().to_f64_lossy(),
                edge: values[0]
                    .abs()
                    .max(values[values.len() - 1].abs())
                    .to_f64_lossy(),
                n_points: solver.grid().n_points(),
            });
            last_record_t = t;
            last_record_y = y;
        }
        if let Some(&ts) = pending.peek() {
            if (t - ts).abs() <= 1e-14 * (1.0 + ts.abs()) {
                snapshots.push(to_f64_field(&last_good));
                pending.next();
            }
        }
        if stop {
            break Termination::Breaking;
        }
        if steps >= options.max_steps {
            break Termination::StepLimit;
        }
        let dt_max = pending
            .peek()
            .map(|&ts| T::lit(ts - t))
            .unwrap_or(T::infinity());
        solver.step_controlled(controller, dt_max)?;
        steps += 1;
    };
    Ok(PhysicalTrajectory {
        records,
        snapshots,
        final_frame: to_f64_field(&last_good),
        termination,
        steps,
    })
}

/// Restores the coefficients of the last resolved frame before refining, so
/// the refined grid starts from a state that passed the tail check.
fn last_good_coeffs<T: Real>(
    solver: &mut PhysicalSolver<T>,
    last_good: &Field<T>,
) -> Vec<Complex<T>> {
    solver.time = last_good.time_tag();
    let mut c = solver.plan.forward(last_good.values());
    PhysicalSolver::<T>::project(&mut c, &solver.keep);
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn controller_takes_smaller_limit() {
        let c = StepController {
            cfl: 0.5,
            gradient_safety: 0.1,
            stop_gradient: -1e4,
        };
        assert_eq!(c.dt(0.01, 2.0, -1.0), 0.0025);
        assert_eq!(c.dt(0.01, 0.001, -100.0), 0.001);
    }

    #[test]
    fn refinement_preserves_the_interpolant() {
        let grid = GridSpec::new(64, 4.0).unwrap();
        let u = Field::from_fn(grid, 0.0, |x: f64| (-(x * x)).exp());
        let mut s = PhysicalSolver::new(&u, Model::burgers());
        let before = eval_series(&grid, s.coefficients(), 0.3);
        s.refine().unwrap();
        let after = eval_series(s.grid(), s.coefficients(), 0.3);
        assert!((before - after).abs() < 1e-14);
    }
}
