//! Blowup fits, convergence to the profile family, and runtime monitors of
//! the bootstrap inequalities.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::field::{l2_norm, Field};
use crate::initial_data::{derivative_stack, japanese, perturbation_stack, AdmissibilityParams};
use crate::multiplier::{apply_split_with, log_slope, OperatorSplit, GROWTH_TOLERANCE};
use crate::physical::PhysicalRecord;
use crate::profile::eval_rescaled;
use crate::selfsim::{lagrange_sample, ModulationState, SelfSimField, Snapshot};
use crate::spectral::{GridSpec, SpectralPlan};

/// Least-squares line `y = a + b x` with the residual variance.
#[derive(Debug, Clone, Copy, PartialEq)]
struct LineFit {
    a: f64,
    b: f64,
    var_a: f64,
    var_b: f64,
    cov_ab: f64,
}

fn fit_line(pts: &[(f64, f64)]) -> LineFit {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let ssr: f64 = pts.iter().map(|p| (p.1 - a - b * p.0).powi(2)).sum();
    let sigma2 = if pts.len() > 2 { ssr / (n - 2.0) } else { 0.0 };
    LineFit {
        a,
        b,
        var_a: sigma2 * (1.0 / n + mx * mx / sxx),
        var_b: sigma2 / sxx,
        cov_ab: -sigma2 * mx / sxx,
    }
}

/// Smallest gradient a trajectory must reach before its rate is fitted.
pub const MIN_FIT_GRADIENT: f64 = -100.0;
/// Minimum number of samples in the fitted decade.
pub const MIN_FIT_SAMPLES: usize = 10;

/// Fit of `-1 / min_x u_x ≈ c (T* - t)` over the final decade.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub t_star: f64,
    /// Half-width of the 95% confidence interval of `T*`.
    pub t_star_ci: f64,
    pub x_star: f64,
    /// `c` in `min u_x ≈ -c / (T* - t)`.
    pub rate_constant: f64,
    pub samples: usize,
    /// Ratio of the largest to the smallest `-1/min u_x` in the fit.
    pub decade_span: f64,
}

/// Fits the blowup time from the records of a physical run.
pub fn fit_blowup_time(records: &[PhysicalRecord]) -> Result<RateFit> {
    let pts: Vec<&PhysicalRecord> = records.iter().filter(|r| r.min_ux < 0.0).collect();
    let last = pts
        .last()
        .ok_or_else(|| Error::InsufficientDecade("no record has a negative gradient".into()))?;
    if last.min_ux > MIN_FIT_GRADIENT {
        return Err(Error::InsufficientDecade(format!(
            "steepest gradient {} has not reached {MIN_FIT_GRADIENT}",
            last.min_ux
        )));
    }
    let y_end = -1.0 / last.min_ux;
    let y_start = pts.iter().map(|r| -1.0 / r.min_ux).fold(0.0, f64::max);
    if y_start < 10.0 * y_end {
        return Err(Error::InsufficientDecade(format!(
            "trajectory spans y in [{y_end:e}, {y_start:e}], less than a decade"
        )));
    }
    // Start at the last sample still a full decade above the end point.
    let first = pts
        .iter()
        .rposition(|r| -1.0 / r.min_ux >= 10.0 * y_end)
        .expect("span checked above");
    let window = &pts[first..];
    if window.len() < MIN_FIT_SAMPLES {
        return Err(Error::InsufficientDecade(format!(
            "only {} samples in the final decade",
            window.len()
        )));
    }
    let line = fit_line(
        &window
            .iter()
            .map(|r| (r.t, -1.0 / r.min_ux))
            .collect::<Vec<_>>(),
    );
    let t_star = -line.a / line.b;
    let (ga, gb) = (-1.0 / line.b, line.a / (line.b * line.b));
    let var_t = ga * ga * line.var_a + gb * gb * line.var_b + 2.0 * ga * gb * line.cov_ab;
    let dof = (window.len() - 2) as f64;
    let quantile = StudentsT::new(0.0, 1.0, dof)
        .map_err(|e| Error::Domain(e.to_string()))?
        .inverse_cdf(0.975);
    let drift = fit_line(&window.iter().map(|r| (r.t, r.argmin)).collect::<Vec<_>>());
    let span = window.iter().map(|r| -1.0 / r.min_ux).fold(0.0, f64::max) / y_end;
    Ok(RateFit {
        t_star,
        t_star_ci: quantile * var_t.max(0.0).sqrt(),
        x_star: drift.a + drift.b * t_star,
        rate_constant: -1.0 / line.b,
        samples: window.len(),
        decade_span: span,
    })
}

/// Default fit window in `|x - x*|`.
pub const HOLDER_WINDOW: (f64, f64) = (1.0e-3, 1.0e-1);
/// Exponents above this are reported as non-cusp.
pub const SMOOTH_EXPONENT: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderFit {
    pub exponent: f64,
    pub left: f64,
    pub right: f64,
    pub samples: usize,
    pub cusp: bool,
}

/// Slope of `log|u(x) - u(x*)|` against `log|x - x*|` on both sides of `x*`.
pub fn fit_holder_exponent(u: &Field<f64>, x_star: f64, window: (f64, f64)) -> Result<HolderFit> {
    let grid = u.grid();
    let (lo, hi) = window;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::Domain("window needs 0 < lo < hi".into()));
    }
    if grid.spacing() > 0.25 * lo {
        return Err(Error::WindowUnresolved(format!(
            "grid spacing {} is coarse for |x - x*| >= {lo}",
            grid.spacing()
        )));
    }
    let left_edge = grid.node(0) + 4.0 * grid.spacing();
    let right_edge = grid.node(grid.n_points() - 1) - 4.0 * grid.spacing();
    if x_star - hi < left_edge || x_star + hi > right_edge {
        return Err(Error::WindowUnresolved(format!(
            "window [{lo}, {hi}] around {x_star} leaves the grid"
        )));
    }
    let at = |x: f64| lagrange_sample(grid, u.values(), x, 8).expect("inside the checked window");
    let center = at(x_star);
    let count = 40;
    let side = |sign: f64| -> Vec<(f64, f64)> {
        (0..count)
            .filter_map(|i| {
                let r = lo * (hi / lo).powf(i as f64 / (count - 1) as f64);
                let d = (at(x_star + sign * r) - center).abs();
                (d > 0.0).then(|| (r.ln(), d.ln()))
            })
            .collect()
    };
    let (l, r) = (side(-1.0), side(1.0));
    if l.len() < 2 || r.len() < 2 {
        return Err(Error::WindowUnresolved(
            "profile is flat in the window".into(),
        ));
    }
    let both: Vec<(f64, f64)> = l.iter().chain(&r).copied().collect();
    let exponent = fit_line(&both).b;
    Ok(HolderFit {
        exponent,
        left: fit_line(&l).b,
        right: fit_line(&r).b,
        samples: both.len(),
        cusp: exponent < SMOOTH_EXPONENT,
    })
}

/// Physical profile `e^{-s/2} U(e^{3s/2}(x - ξ)) + κ` of a snapshot on `grid`.
pub fn physical_frame(snapshot: &Snapshot, grid: GridSpec<f64>) -> Result<Field<f64>> {
    let m = &snapshot.modulation;
    let scale = (1.5 * m.s).exp();
    let f = &snapshot.field;
    let values = grid
        .nodes()
        .iter()
        .map(|&x| {
            lagrange_sample(f.grid(), f.values(), scale * (x - m.xi), 8)
                .map(|u| (-0.5 * m.s).exp() * u + m.kappa)
                .ok_or(Error::OutOfDomain {
                    s: m.s,
                    position: scale * (x - m.xi),
                })
        })
        .collect::<Result<Vec<f64>>>()?;
    Field::new(grid, values, m.t)
}

/// Physical profile around `ξ` on the widest symmetric window whose image
/// stays inside `|X| ≤ interior_limit`, capped at `max_half_width`.
pub fn local_frame(
    snapshot: &Snapshot,
    interior_limit: f64,
    max_half_width: f64,
    n_points: usize,
) -> Result<Field<f64>> {
    let m = &snapshot.modulation;
    let half = (0.98 * interior_limit * (-1.5 * m.s).exp()).min(max_half_width);
    physical_frame(snapshot, GridSpec::new(n_points, half)?.with_center(m.xi))
}

/// Result of the Mann–Kendall trend test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendTest {
    pub statistic: f64,
    pub z: f64,
    pub p_value: f64,
    pub decreasing: bool,
}

/// Mann–Kendall test for a monotone trend at the 5% level.
pub fn mann_kendall(series: &[f64]) -> TrendTest {
    let n = series.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            s += (series[j] - series[i]).signum() * ((series[j] != series[i]) as i32 as f64);
        }
    }
    let nf = n as f64;
    let var = nf * (nf - 1.0) * (2.0 * nf + 5.0) / 18.0;
    let z = if var <= 0.0 {
        0.0
    } else if s > 0.0 {
        (s - 1.0) / var.sqrt()
    } else if s < 0.0 {
        (s + 1.0) / var.sqrt()
    } else {
        0.0
    };
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let p_value = 2.0 * (1.0 - normal.cdf(z.abs()));
    TrendTest {
        statistic: s,
        z,
        p_value,
        decreasing: z < 0.0 && p_value < 0.05,
    }
}

/// Window `|X| ≤ base e^{(s - s₀)/5}`, capped at `limit`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceWindow {
    pub base: f64,
    pub s0: f64,
    pub limit: f64,
}

impl ConvergenceWindow {
    pub fn at(&self, s: f64) -> f64 {
        (self.base * ((s - self.s0) / 5.0).exp()).min(self.limit)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCurve {
    pub nu_limit: f64,
    /// `(s, ‖U - Ū_ν‖_∞ on the window)`.
    pub points: Vec<(f64, f64)>,
    /// Spread of `ν(s)` over the last unit of `s`.
    pub nu_spread: f64,
    pub trend: TrendTest,
    /// Final value over initial value.
    pub reduction: f64,
}

/// Distance of each snapshot to the profile with the final `ν`.
pub fn convergence_to_profile(
    history: &[Snapshot],
    window: ConvergenceWindow,
    cauchy_tolerance: f64,
) -> Result<ConvergenceCurve> {
    let last = history
        .last()
        .ok_or_else(|| Error::Domain("empty history".into()))?;
    let s_end = last.field.s_tag();
    if s_end - history[0].field.s_tag() < 1.0 {
        return Err(Error::Domain(
            "history must span at least one unit of s".into(),
        ));
    }
    let nus: Vec<(f64, f64)> = history
        .iter()
        .map(|h| (h.field.s_tag(), h.field.curvature()))
        .collect();
    let recent: Vec<f64> = nus
        .iter()
        .filter(|(s, _)| *s >= s_end - 1.0)
        .map(|p| p.1)
        .collect();
    let spread = recent.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - recent.iter().cloned().fold(f64::INFINITY, f64::min);
    if spread > cauchy_tolerance {
        return Err(Error::NonCauchy {
            spread,
            tolerance: cauchy_tolerance,
        });
    }
    let nu_limit = nus.last().expect("non-empty").1;
    let points: Vec<(f64, f64)> = history
        .iter()
        .map(|h| {
            let s = h.field.s_tag();
            let w = window.at(s);
            let grid = h.field.grid();
            let d = grid
                .nodes()
                .iter()
                .zip(h.field.values())
                .filter(|(x, _)| x.abs() <= w)
                .map(|(&x, &u)| (u - eval_rescaled(x, nu_limit).expect("positive nu")).abs())
                .fold(0.0, f64::max);
            Ok((s, d))
        })
        .collect::<Result<_>>()?;
    let values: Vec<f64> = points.iter().map(|p| p.1).collect();
    let reduction = if values[0] > 0.0 {
        values[values.len() - 1] / values[0]
    } else {
        0.0
    };
    Ok(ConvergenceCurve {
        nu_limit,
        points,
        nu_spread: spread,
        trend: mann_kendall(&values),
        reduction,
    })
}

/// Outcome of one monitored inequality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    /// The region or quantity is not represented on the grid at this time.
    Untestable,
    /// Bound with an unspecified constant; judged by the trend over a run.
    Trend,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorCheck {
    pub id: String,
    pub region: String,
    pub bound: f64,
    pub measured: f64,
    pub margin: f64,
    pub status: CheckStatus,
}

impl MonitorCheck {
    fn bounded(id: &str, region: &str, bound: f64, measured: f64) -> Self {
        let margin = bound - measured;
        let status = if margin >= 0.0 {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        };
        Self {
            id: id.into(),
            region: region.into(),
            bound,
            measured,
            margin,
            status,
        }
    }

    fn untestable(id: &str, region: &str, bound: f64) -> Self {
        Self {
            id: id.into(),
            region: region.into(),
            bound,
            measured: f64::NAN,
            margin: f64::NAN,
            status: CheckStatus::Untestable,
        }
    }

    fn trend(id: &str, region: &str, scale: f64, measured: f64) -> Self {
        Self {
            id: id.into(),
            region: region.into(),
            bound: scale,
            measured,
            margin: f64::NAN,
            status: CheckStatus::Trend,
        }
    }

    fn gated(self, testable: bool) -> Self {
        if testable {
            self
        } else {
            Self::untestable(&self.id, &self.region, self.bound)
        }
    }
}

/// Which part of the line the grid represents at a given time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    /// Largest `|X|` outside the absorbing layer.
    pub interior_limit: f64,
    /// Radius in `x` around the blowup point containing the physical support.
    pub support_radius: f64,
}

impl Coverage {
    /// Whether the image of the physical support lies inside the interior at `s`.
    pub fn covers(&self, s: f64) -> bool {
        s <= self.horizon()
    }

    /// Last `s` at which the support is covered.
    pub fn horizon(&self) -> f64 {
        (self.interior_limit / self.support_radius).ln() / 1.5
    }
}

/// Monitor identifiers in report order. Trend-type entries end in `_trend`.
pub const MONITOR_IDS: [&str; 30] = [
    "near_value",
    "middle_value",
    "near_slope",
    "middle_slope",
    "far_slope",
    "near_curvature",
    "outer_curvature",
    "near_third",
    "near_fourth",
    "fourth_sup",
    "shifted_sup",
    "origin_third",
    "tau_rate",
    "tau_position",
    "xi_rate",
    "xi_position",
    "slope_sup",
    "curvature_sup",
    "third_sup_trend",
    "beta",
    "nu_range",
    "shifted_l2",
    "slope_l2",
    "fifth_l2",
    "second_l2_trend",
    "third_l2_trend",
    "fourth_l2_trend",
    "tau_rate_strict",
    "drift_rate",
    "kappa_rate",
];

/// Monitors that must stay violation-free on a compliant run.
pub const COMPLIANCE_IDS: [&str; 23] = [
    "near_value",
    "middle_value",
    "near_slope",
    "middle_slope",
    "far_slope",
    "near_curvature",
    "outer_curvature",
    "near_third",
    "near_fourth",
    "fourth_sup",
    "shifted_sup",
    "origin_third",
    "tau_rate",
    "tau_position",
    "xi_rate",
    "xi_position",
    "slope_sup",
    "beta",
    "nu_range",
    "shifted_l2",
    "slope_l2",
    "fifth_l2",
    "curvature_sup",
];

/// Monitors of the modulation rates.
pub const MODULATION_IDS: [&str; 3] = ["tau_rate", "drift_rate", "kappa_rate"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapEntry {
    pub s: f64,
    pub covered: bool,
    pub checks: Vec<MonitorCheck>,
}

impl BootstrapEntry {
    pub fn check(&self, id: &str) -> Option<&MonitorCheck> {
        self.checks.iter().find(|c| c.id == id)
    }

    pub fn failures(&self) -> impl Iterator<Item = &MonitorCheck> {
        self.checks.iter().filter(|c| c.status == CheckStatus::Fail)
    }
}

/// Evaluates every monitored inequality at one snapshot.
///
/// Ũ is measured against the ground state. Sup and L² norms over the line,
/// and anything depending on `κ`, are untestable once the physical support
/// leaves the interior; far-field checks are untestable once the far field
/// starts beyond it.
pub fn monitor_bootstrap(
    u: &SelfSimField,
    m: &ModulationState,
    params: &AdmissibilityParams,
    coverage: &Coverage,
) -> BootstrapEntry {
    let grid = *u.grid();
    let s = u.s_tag();
    let (eps, big_m, h) = (params.epsilon, params.m, params.h());
    let inner = coverage.interior_limit;
    let covered = coverage.covers(s);
    let edge = 0.5 * (1.5 * s).exp();
    let d = derivative_stack(u);
    let pert = perturbation_stack(&grid, &d);
    let nodes = grid.nodes();
    let sup = |v: &[f64], keep: &dyn Fn(f64) -> bool, w: &dyn Fn(f64) -> f64| -> f64 {
        nodes
            .iter()
            .zip(v)
            .filter(|(x, _)| keep(**x))
            .fold(0.0_f64, |a, (x, v)| a.max(v.abs() / w(*x)))
    };
    let one = |_: f64| 1.0;
    let near = |x: f64| x.abs() <= h;
    let middle = |x: f64| x.abs() >= h && x.abs() <= edge.min(inner);
    let far = |x: f64| x.abs() >= edge && x.abs() <= inner;
    let outer = |x: f64| x.abs() >= h && x.abs() <= inner;
    let interior = |x: f64| x.abs() <= inner;
    let e13 = eps.powf(1.0 / 3.0);
    let dx = grid.spacing();
    let c = grid.center_index();
    let es2 = (0.5 * s).exp();
    let beta = m.beta();
    let mut out = Vec::with_capacity(MONITOR_IDS.len());

    out.push(MonitorCheck::bounded(
        "near_value",
        "near",
        e13 * h.powi(4),
        sup(&pert[0], &near, &one),
    ));
    out.push(MonitorCheck::bounded(
        "middle_value",
        "middle",
        eps.powf(0.25),
        sup(&pert[0], &middle, &|x| japanese(x).powf(1.0 / 3.0)),
    ));
    out.push(MonitorCheck::bounded(
        "near_slope",
        "near",
        e13 * h.powi(3),
        sup(&pert[1], &near, &one),
    ));
    out.push(MonitorCheck::bounded(
        "middle_slope",
        "middle",
        eps.powf(0.125),
        sup(&pert[1], &middle, &|x| japanese(x).powf(-2.0 / 3.0)),
    ));
    out.push(
        MonitorCheck::bounded("far_slope", "far", 2.0 * (-s).exp(), sup(&d[1], &far, &one))
            .gated(edge < inner),
    );
    out.push(MonitorCheck::bounded(
        "near_curvature",
        "near",
        e13 * h * h,
        sup(&pert[2], &near, &one),
    ));
    out.push(
        MonitorCheck::bounded(
            "outer_curvature",
            "outer",
            big_m.powf(0.2),
            sup(&d[2], &outer, &one),
        )
        .gated(covered),
    );
    out.push(MonitorCheck::bounded(
        "near_third",
        "near",
        e13 * h,
        sup(&pert[3], &near, &one),
    ));
    out.push(MonitorCheck::bounded(
        "near_fourth",
        "near",
        e13,
        sup(&pert[4], &near, &one),
    ));
    out.push(
        MonitorCheck::bounded("fourth_sup", "line", big_m, sup(&d[4], &interior, &one))
            .gated(covered),
    );
    let shifted: Vec<f64> = d[0].iter().map(|v| v + es2 * m.kappa).collect();
    let shifted_interior: Vec<f64> = nodes
        .iter()
        .zip(&shifted)
        .filter(|(x, _)| x.abs() <= inner)
        .map(|(_, v)| *v)
        .collect();
    out.push(
        MonitorCheck::bounded(
            "shifted_sup",
            "line",
            big_m * es2,
            sup(&shifted, &interior, &one),
        )
        .gated(covered),
    );
    out.push(MonitorCheck::bounded(
        "origin_third",
        "origin",
        eps.sqrt(),
        pert[3][c].abs(),
    ));
    out.push(MonitorCheck::bounded(
        "tau_rate",
        "scalar",
        (-0.75 * s).exp(),
        m.tau_dot.abs(),
    ));
    out.push(MonitorCheck::bounded(
        "tau_position",
        "scalar",
        2.0 * eps.powf(1.75),
        m.tau.abs(),
    ));
    out.push(
        MonitorCheck::bounded("xi_rate", "scalar", 2.0 * big_m, m.xi_dot.abs()).gated(covered),
    );
    out.push(
        MonitorCheck::bounded("xi_position", "scalar", 3.0 * big_m * eps, m.xi.abs())
            .gated(covered),
    );

    let (slope_max, arg) = nodes
        .iter()
        .zip(&d[1])
        .enumerate()
        .filter(|(_, (x, _))| x.abs() <= inner)
        .fold((0.0_f64, c), |(best, at), (j, (_, v))| {
            if v.abs() > best {
                (v.abs(), j)
            } else {
                (best, at)
            }
        });
    let mut slope_check = MonitorCheck::bounded("slope_sup", "line", 1.01, slope_max);
    slope_check.margin = (1.01 - slope_max).min(slope_max - 0.99);
    if arg != c {
        slope_check.margin = slope_check.margin.min(d[1][c].abs() - slope_max);
    }
    slope_check.status = if slope_check.margin >= 0.0 {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail
    };
    out.push(slope_check.gated(covered));

    out.push(
        MonitorCheck::bounded(
            "curvature_sup",
            "line",
            big_m.powf(0.2),
            sup(&d[2], &interior, &one),
        )
        .gated(covered),
    );
    out.push(
        MonitorCheck::trend(
            "third_sup_trend",
            "line",
            big_m.powf(0.6),
            sup(&d[3], &interior, &one) / big_m.powf(0.6),
        )
        .gated(covered),
    );
    out.push(MonitorCheck::bounded(
        "beta",
        "scalar",
        0.01,
        (beta - 1.0).abs(),
    ));
    let nu = d[3][c];
    let mut nu_check = MonitorCheck::bounded("nu_range", "origin", 7.0, nu);
    nu_check.margin = (nu - 5.0).min(7.0 - nu);
    nu_check.status = if nu_check.margin >= 0.0 {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail
    };
    out.push(nu_check);
    out.push(
        MonitorCheck::bounded(
            "shifted_l2",
            "line",
            big_m * (1.25 * s).exp(),
            l2_norm(&shifted_interior, dx),
        )
        .gated(covered),
    );
    let l2 = |k: usize| {
        let v: Vec<f64> = nodes
            .iter()
            .zip(&d[k])
            .filter(|(x, _)| x.abs() <= inner)
            .map(|(_, v)| *v)
            .collect();
        l2_norm(&v, dx)
    };
    out.push(MonitorCheck::bounded("slope_l2", "line", 100.0, l2(1)).gated(covered));
    out.push(MonitorCheck::bounded("fifth_l2", "line", big_m.powf(1.5), l2(5)).gated(covered));
    out.push(
        MonitorCheck::trend(
            "second_l2_trend",
            "line",
            big_m.powf(1.0 / 6.0),
            l2(2) / big_m.powf(1.0 / 6.0),
        )
        .gated(covered),
    );
    out.push(
        MonitorCheck::trend(
            "third_l2_trend",
            "line",
            big_m.powf(0.25),
            l2(3) / big_m.powf(0.25),
        )
        .gated(covered),
    );
    out.push(
        MonitorCheck::trend(
            "fourth_l2_trend",
            "line",
            big_m.powf(0.75),
            l2(4) / big_m.powf(0.75),
        )
        .gated(covered),
    );
    out.push(MonitorCheck::bounded(
        "tau_rate_strict",
        "scalar",
        0.5 * (-0.75 * s).exp(),
        m.tau_dot.abs(),
    ));
    out.push(MonitorCheck::bounded(
        "drift_rate",
        "scalar",
        (-0.75 * s).exp(),
        m.drift.abs(),
    ));
    out.push(
        MonitorCheck::bounded("kappa_rate", "scalar", (-s / 3.0).exp(), m.kappa_rate.abs())
            .gated(covered),
    );

    BootstrapEntry {
        s,
        covered,
        checks: out,
    }
}

/// Time series of monitor entries.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BootstrapLog {
    pub entries: Vec<BootstrapEntry>,
}

/// Growth of one trend-type monitor over a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendSummary {
    pub id: String,
    pub max_ratio: f64,
    pub log_slope: f64,
    pub growing: bool,
}

impl BootstrapLog {
    /// `(s, id)` of every failed check whose id is in `ids`.
    pub fn violations(&self, ids: &[&str]) -> Vec<(f64, String)> {
        self.entries
            .iter()
            .flat_map(|e| {
                e.failures()
                    .filter(|c| ids.contains(&c.id.as_str()))
                    .map(move |c| (e.s, c.id.clone()))
            })
            .collect()
    }

    /// Number of entries at which each id could be evaluated.
    pub fn tested(&self, id: &str) -> usize {
        self.entries
            .iter()
            .filter(|e| {
                e.check(id)
                    .is_some_and(|c| c.status != CheckStatus::Untestable)
            })
            .count()
    }

    pub fn trends(&self) -> Vec<TrendSummary> {
        MONITOR_IDS
            .iter()
            .filter(|id| id.ends_with("_trend"))
            .map(|id| {
                let series: Vec<(f64, f64)> = self
                    .entries
                    .iter()
                    .filter_map(|e| {
                        e.check(id)
                            .filter(|c| c.status == CheckStatus::Trend)
                            .map(|c| (e.s, c.measured))
                    })
                    .collect();
                let slope = log_slope(&series);
                TrendSummary {
                    id: id.to_string(),
                    max_ratio: series.iter().map(|p| p.1).fold(0.0, f64::max),
                    log_slope: slope,
                    growing: slope > GROWTH_TOLERANCE,
                }
            })
            .collect()
    }

    /// CSV with one row per entry and check.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,id,region,bound,measured,margin,status\n");
        for e in &self.entries {
            for c in &e.checks {
                let status = serde_json::to_value(c.status)
                    .ok()
                    .and_then(|v| v.as_str().map(String::from))
                    .unwrap_or_default();
                out.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    fmt17(e.s),
                    c.id,
                    c.region,
                    fmt17(c.bound),
                    fmt17(c.measured),
                    fmt17(c.margin),
                    status
                ));
            }
        }
        out
    }
}

/// Round-trip formatting with 17 significant digits.
pub fn fmt17(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

/// Operator-decay measurements at one snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorDecayEntry {
    pub s: f64,
    /// `sup |H(∂U)| / envelope` over the middle field, when the split is resolved.
    pub middle_ratio: Option<f64>,
    /// `sup |H(∂U)| e^{5s/8}` over the far field, when it is on the grid.
    pub far_ratio: Option<f64>,
}

/// Middle-field envelope of the high-frequency part.
pub fn high_envelope(x: f64, s: f64, alpha: f64) -> f64 {
    if alpha > -0.5 {
        (1.5 * alpha * s).exp() * japanese(x).powf(-0.5 - alpha) + (-0.75 * s).exp()
    } else {
        (-0.625 * s).exp()
    }
}

/// Decay of the high-frequency part of the dispersion. Both ratios are `None`
/// once the cutoff band falls below the grid's frequency spacing.
pub fn monitor_operator_decay(
    u: &SelfSimField,
    split: &OperatorSplit<f64>,
    params: &AdmissibilityParams,
    coverage: &Coverage,
) -> OperatorDecayEntry {
    let grid = *u.grid();
    let s = split.s();
    let unresolved = OperatorDecayEntry {
        s,
        middle_ratio: None,
        far_ratio: None,
    };
    let Ok(slope) = Field::new(grid, u.slope().to_vec(), s) else {
        return unresolved;
    };
    let mut plan = SpectralPlan::new(grid);
    let Ok((high, _)) = apply_split_with(&mut plan, &slope, split, 0) else {
        return unresolved;
    };
    let h = params.h();
    let edge = 0.5 * (1.5 * s).exp();
    let inner = coverage.interior_limit;
    let mut middle = 0.0_f64;
    let mut far = 0.0_f64;
    for (x, v) in grid.nodes().iter().zip(high.values()) {
        let a = x.abs();
        if a >= h && a <= edge.min(inner) {
            middle = middle.max(v.abs() / high_envelope(*x, s, split.alpha()));
        } else if a > edge && a <= inner {
            far = far.max(v.abs() * (0.625 * s).exp());
        }
    }
    OperatorDecayEntry {
        s,
        middle_ratio: Some(middle),
        far_ratio: (edge < inner).then_some(far),
    }
}

/// Flags of the blowup theorem checked on one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoremFlags {
    pub amplitude_bounded: bool,
    pub rate_in_range: bool,
    pub holder_cusp: bool,
    pub time_bound: bool,
    pub location_bound: bool,
}

/// Holder exponent tolerance around one third.
pub const HOLDER_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupReport {
    pub rate: RateFit,
    pub holder: HolderFit,
    pub convergence: ConvergenceCurve,
    pub max_amplitude: f64,
    pub flags: TheoremFlags,
}

impl BlowupReport {
    pub fn assemble(
        rate: RateFit,
        holder: HolderFit,
        convergence: ConvergenceCurve,
        max_amplitude: f64,
        params: &AdmissibilityParams,
    ) -> Self {
        let flags = TheoremFlags {
            amplitude_bounded: max_amplitude <= params.m,
            rate_in_range: (1.0 / 3.0..=3.0).contains(&rate.rate_constant),
            holder_cusp: (holder.exponent - 1.0 / 3.0).abs() <= HOLDER_TOLERANCE,
            time_bound: rate.t_star <= 2.0 * params.epsilon.powf(1.75),
            location_bound: rate.x_star.abs() <= 3.0 * params.m * params.epsilon,
        };
        Self {
            rate,
            holder,
            convergence,
            max_amplitude,
            flags,
        }
    }

    pub fn all_pass(&self) -> bool {
        let f = self.flags;
        f.amplitude_bounded && f.rate_in_range && f.holder_cusp && f.time_bound && f.location_bound
    }
}

/// `τ(t) - t` sandwich against the fitted blowup time: fraction of samples in
/// `[½(T* - t), 2(T* - t)]`.
pub fn sandwich_fraction(history: &[ModulationState], t_star: f64) -> f64 {
    let pts: Vec<&ModulationState> = history.iter().filter(|m| m.t < t_star).collect();
    if pts.is_empty() {
        return 0.0;
    }
    let ok = pts
        .iter()
        .filter(|m| {
            let gap = m.tau - m.t;
            let d = t_star - m.t;
            gap >= 0.5 * d && gap <= 2.0 * d
        })
        .count();
    ok as f64 / pts.len() as f64
}

/// Minimal SVG line plot.
pub fn svg_plot(title: &str, series: &[(&str, &[(f64, f64)])], log_y: bool) -> String {
    let (w, h, pad) = (640.0, 400.0, 50.0);
    let tr = |y: f64| if log_y { y.max(1e-300).log10() } else { y };
    let all: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|(_, p)| p.iter().map(|&(x, y)| (x, tr(y))))
        .filter(|p| p.1.is_finite())
        .collect();
    let (x0, x1) = all
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| {
            (a.min(p.0), b.max(p.0))
        });
    let (y0, y1) = all
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| {
            (a.min(p.1), b.max(p.1))
        });
    let sx = |x: f64| pad + (x - x0) / (x1 - x0).max(1e-300) * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - (y - y0) / (y1 - y0).max(1e-300) * (h - 2.0 * pad);
    let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">{title}</text>\n",
        w / 2.0
    );
    out.push_str(&format!(
        "<rect x=\"{pad}\" y=\"{pad}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n",
        w - 2.0 * pad,
        h - 2.0 * pad
    ));
    out.push_str(&format!(
        "<text x=\"{pad}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{x0:.4}</text><text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">{x1:.4}</text>\n",
        h - pad + 16.0,
        w - pad,
        h - pad + 16.0
    ));
    let label = |v: f64| {
        if log_y {
            format!("1e{v:.1}")
        } else {
            format!("{v:.4}")
        }
    };
    out.push_str(&format!(
        "<text x=\"4\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{}</text><text x=\"4\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
        h - pad,
        label(y0),
        pad + 4.0,
        label(y1)
    ));
    for (i, (name, pts)) in series.iter().enumerate() {
        let path: Vec<String> = pts
            .iter()
            .filter(|p| tr(p.1).is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(tr(y))))
            .collect();
        let color = colors[i % colors.len()];
        out.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            path.join(" ")
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" fill=\"{color}\" font-family=\"sans-serif\" font-size=\"12\">{name}</text>\n",
            w - pad - 150.0,
            pad + 16.0 * (i + 1) as f64
        ));
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_fit_is_exact_on_lines() {
        let pts: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 3.0 - 0.5 * i as f64)).collect();
        let f = fit_line(&pts);
        assert!((f.a - 3.0).abs() < 1e-14 && (f.b + 0.5).abs() < 1e-14);
        assert!(f.var_b.abs() < 1e-28);
    }

    #[test]
    fn mann_kendall_detects_monotone_decrease() {
        let v: Vec<f64> = (0..20).map(|i| (-(i as f64)).exp()).collect();
        let t = mann_kendall(&v);
        assert_eq!(t.statistic, -190.0);
        assert!(t.decreasing);
        let flat = mann_kendall(&[1.0; 10]);
        assert_eq!(flat.z, 0.0);
        assert!(!flat.decreasing);
    }
}
