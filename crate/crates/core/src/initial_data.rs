//! Admissible initial data: a tapered copy of the ground-state profile and a
//! certificate listing the margin of every admissibility inequality.

use std::num::NonZeroUsize;
use std::sync::OnceLock;

use gauss_quad::legendre::GaussLegendre;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{l2_norm, max_abs, Field};
use crate::profile::{eval_jet, GROUND_NU};
use crate::selfsim::{ModulationState, SelfSimField};
use crate::spectral::{plateau, GridSpec, SpectralPlan};

/// Tolerance on the pinned values at the origin.
/// Spectral round-off allowed outside the support.
pub const SUPPORT_NOISE: f64 = 1.0e-10;

pub const PIN_TOLERANCE: f64 = 1.0e-9;

/// Size parameters of the construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityParams {
    /// Large amplitude parameter.
    pub m: f64,
    /// Initial distance to the blowup time; the run starts at `t = -ε`.
    pub epsilon: f64,
    /// Exponent slack in the outer curvature bound.
    pub delta: f64,
    pub kappa0: f64,
}

impl AdmissibilityParams {
    pub fn new(m: f64, epsilon: f64) -> Result<Self> {
        let p = Self {
            m,
            epsilon,
            delta: 0.01,
            kappa0: 0.0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m >= 100.0) || !(self.epsilon > 0.0 && self.epsilon < 1.0) || !(self.delta > 0.0)
        {
            return Err(Error::Domain(format!(
                "invalid admissibility parameters {self:?}"
            )));
        }
        Ok(())
    }

    /// Initial self-similar time `-ln ε`.
    pub fn s0(&self) -> f64 {
        -self.epsilon.ln()
    }

    /// Near-field radius `1 / ln M`.
    pub fn h(&self) -> f64 {
        1.0 / self.m.ln()
    }

    /// Outer edge of the middle field at the initial time, `½ ε^{-3/2}`.
    pub fn middle_edge(&self) -> f64 {
        0.5 * self.epsilon.powf(-1.5)
    }
}

/// Radial taper `χ(r) = 1 - ∫_0^r ρ`, with `ρ` a mix of two smooth plateaus
/// of unit mass: one on `[inner, split]` and one on `[split, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Taper {
    pub inner: f64,
    pub split: f64,
    pub width: f64,
    /// Fraction of the unit mass carried by the inner plateau.
    pub inner_mass: f64,
    norms: (f64, f64),
    /// Cumulative mass at `r = i / PANELS`.
    table: Vec<f64>,
}

const PANELS: usize = 400;

impl Taper {
    pub fn new(inner: f64, split: f64, width: f64, inner_mass: f64) -> Result<Self> {
        if !(0.0 < inner
            && inner < split
            && split < 1.0
            && width > 0.0
            && (0.0..=1.0).contains(&inner_mass))
        {
            return Err(Error::Domain(
                "taper needs 0 < inner < split < 1, width > 0, mass in [0,1]".into(),
            ));
        }
        let mut taper = Self {
            inner,
            split,
            width,
            inner_mass,
            norms: (1.0, 1.0),
            table: Vec::new(),
        };
        let rule = gauss();
        let raw = |r: f64| plateau(r, inner, split, width);
        let raw2 = |r: f64| plateau(r, split, 1.0, width);
        let mut i1 = 0.0;
        let mut i2 = 0.0;
        for i in 0..PANELS {
            let (a, b) = (i as f64 / PANELS as f64, (i + 1) as f64 / PANELS as f64);
            i1 += rule.integrate(a, b, raw);
            i2 += rule.integrate(a, b, raw2);
        }
        taper.norms = (i1, i2);
        let mut table = vec![0.0; PANELS + 1];
        for i in 0..PANELS {
            let (a, b) = (i as f64 / PANELS as f64, (i + 1) as f64 / PANELS as f64);
            table[i + 1] = table[i] + rule.integrate(a, b, |r| taper.density(r));
        }
        taper.table = table;
        Ok(taper)
    }

    /// `ρ(r)`.
    pub fn density(&self, r: f64) -> f64 {
        let (i1, i2) = self.norms;
        self.inner_mass * plateau(r, self.inner, self.split, self.width) / i1
            + (1.0 - self.inner_mass) * plateau(r, self.split, 1.0, self.width) / i2
    }

    /// `χ(r)` for `r ≥ 0`.
    pub fn value(&self, r: f64) -> f64 {
        if r <= self.inner {
            return 1.0;
        }
        if r >= 1.0 {
            return 0.0;
        }
        let i = ((r * PANELS as f64).floor() as usize).min(PANELS - 1);
        let a = i as f64 / PANELS as f64;
        let mass = self.table[i] + gauss().integrate(a, r, |q| self.density(q));
        (1.0 - mass).max(0.0)
    }
}

impl Default for Taper {
    fn default() -> Self {
        Self::new(0.02, 0.55, 0.1, 0.3).expect("default taper parameters are valid")
    }
}

fn gauss() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(NonZeroUsize::new(24).expect("nonzero")))
}

/// Initial data in both frames plus the initial modulation state.
#[derive(Debug, Clone)]
pub struct InitialData {
    pub params: AdmissibilityParams,
    pub selfsim: SelfSimField,
    pub physical: Field<f64>,
    /// Positions at `s₀` (`t = -ε`, `τ = 0`, `ξ = 0`, `κ = κ₀`); rates unset.
    pub modulation: ModulationState,
}

/// `(U₀, ∂U₀)` at `X` for `U₀(X) = Ū(X) χ(ε^{3/2}|X|)`.
pub fn tapered_profile(taper: &Taper, epsilon: f64, x: f64) -> (f64, f64) {
    let scale = epsilon.powf(1.5);
    let r = scale * x.abs();
    let jet = eval_jet(x, GROUND_NU);
    let chi = taper.value(r);
    let dchi = -taper.density(r) * scale * x.signum();
    (jet.value * chi, jet.d1 * chi + jet.value * dchi)
}

/// Builds the data without certifying it.
pub fn construct_unchecked(
    params: &AdmissibilityParams,
    taper: &Taper,
    selfsim_grid: GridSpec<f64>,
    physical_grid: GridSpec<f64>,
) -> Result<InitialData> {
    params.validate()?;
    let eps = params.epsilon;
    let s0 = params.s0();
    let slope: Vec<f64> = selfsim_grid
        .nodes()
        .iter()
        .map(|&x| tapered_profile(taper, eps, x).1)
        .collect();
    let selfsim = SelfSimField::from_slope(selfsim_grid, slope, s0)?;
    let stretch = eps.powf(-1.5);
    let amp = eps.sqrt();
    let physical = Field::from_fn(physical_grid, -eps, |x| {
        amp * tapered_profile(taper, eps, stretch * x).0 + params.kappa0
    });
    let modulation = ModulationState::at(s0, -eps, 0.0, params.kappa0);
    Ok(InitialData {
        params: *params,
        selfsim,
        physical,
        modulation,
    })
}

/// Builds the data and rejects it unless every admissibility check passes.
pub fn construct_data(
    params: &AdmissibilityParams,
    taper: &Taper,
    selfsim_grid: GridSpec<f64>,
    physical_grid: GridSpec<f64>,
) -> Result<(InitialData, AdmissibilityReport)> {
    let data = construct_unchecked(params, taper, selfsim_grid, physical_grid)?;
    let report = certify(&data.selfsim, params)?;
    if !report.admissible() {
        let failed: Vec<&str> = report.failures().map(|c| c.id.as_str()).collect();
        return Err(Error::Infeasible(format!(
            "epsilon = {} with M = {} fails {}",
            params.epsilon,
            params.m,
            failed.join(", ")
        )));
    }
    Ok((data, report))
}

/// One admissibility inequality and its worst margin `bound - measured`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub id: String,
    pub region: String,
    pub bound: f64,
    pub measured: f64,
    pub margin: f64,
    pub pass: bool,
}

impl ConditionCheck {
    fn new(id: &str, region: &str, bound: f64, measured: f64) -> Self {
        let margin = bound - measured;
        Self {
            id: id.into(),
            region: region.into(),
            bound,
            measured,
            margin,
            pass: margin >= 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub epsilon: f64,
    pub m: f64,
    pub entries: Vec<ConditionCheck>,
}

impl AdmissibilityReport {
    pub fn admissible(&self) -> bool {
        self.entries.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ConditionCheck> {
        self.entries.iter().filter(|c| !c.pass)
    }

    pub fn entry(&self, id: &str) -> Option<&ConditionCheck> {
        self.entries.iter().find(|c| c.id == id)
    }
}

/// Identifiers of the checks, in report order.
pub const CONDITION_IDS: [&str; 17] = [
    "pins",
    "near_value",
    "middle_value",
    "near_slope",
    "middle_slope",
    "far_slope",
    "near_curvature",
    "outer_curvature",
    "near_third",
    "near_fourth",
    "slope_l2",
    "fifth_l2",
    "fourth_sup",
    "shifted_sup",
    "origin_third",
    "support",
    "amplitude_shift",
];

/// `∂^k U` for `k = 0..=5` on the grid.
pub(crate) fn derivative_stack(u: &SelfSimField) -> Vec<Vec<f64>> {
    let mut plan = SpectralPlan::new(*u.grid());
    let mut out = vec![u.values().to_vec(), u.slope().to_vec()];
    for k in 1..=4 {
        out.push(plan.derivative(u.slope(), k));
    }
    out
}

/// `∂^k (U - Ū)` for `k = 0..=5` on the grid.
pub(crate) fn perturbation_stack(grid: &GridSpec<f64>, d: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let jets: Vec<_> = grid
        .nodes()
        .iter()
        .map(|&x| eval_jet(x, GROUND_NU))
        .collect();
    (0..6)
        .map(|k| {
            d[k].iter()
                .zip(&jets)
                .map(|(v, j)| v - j.derivative(k))
                .collect()
        })
        .collect()
}

pub(crate) fn japanese(x: f64) -> f64 {
    (1.0 + x * x).sqrt()
}

/// Largest `|v_j| / w(X_j)` over nodes selected by `keep`, or 0 when none.
pub(crate) fn weighted_sup(
    grid: &GridSpec<f64>,
    v: &[f64],
    keep: impl Fn(f64) -> bool,
    w: impl Fn(f64) -> f64,
) -> f64 {
    grid.nodes()
        .iter()
        .zip(v)
        .filter(|(x, _)| keep(**x))
        .fold(0.0_f64, |a, (x, v)| a.max(v.abs() / w(*x)))
}

/// Evaluates every admissibility inequality on the grid nodes.
pub fn certify(u0: &SelfSimField, params: &AdmissibilityParams) -> Result<AdmissibilityReport> {
    params.validate()?;
    let grid = *u0.grid();
    let edge = params.middle_edge();
    if edge >= grid.half_length() {
        return Err(Error::UnresolvedRegion(format!(
            "middle field reaches |X| = {edge}, grid half-length is {}",
            grid.half_length()
        )));
    }
    let (eps, m, h) = (params.epsilon, params.m, params.h());
    let d = derivative_stack(u0);
    let pert = perturbation_stack(&grid, &d);
    let dx = grid.spacing();
    let near = |x: f64| x.abs() <= h;
    let middle = |x: f64| x.abs() >= h && x.abs() <= edge;
    let far = |x: f64| x.abs() >= edge;
    let outer = |x: f64| x.abs() >= h;
    let one = |_: f64| 1.0;
    let c = grid.center_index();
    let e13 = eps.powf(1.0 / 3.0);
    let mut entries = Vec::with_capacity(CONDITION_IDS.len());

    let min_slope = d[1].iter().cloned().fold(f64::INFINITY, f64::min);
    let pin_error = d[0][c]
        .abs()
        .max((d[1][c] + 1.0).abs())
        .max(d[2][c].abs())
        .max((-1.0 - min_slope).max(0.0));
    entries.push(ConditionCheck::new(
        "pins",
        "origin",
        PIN_TOLERANCE,
        pin_error,
    ));

    // Near-field conditions are posed as |∂^k Ũ| ≤ C h^{4-k}; compare ratios to C.
    let near_ratio = |k: usize| weighted_sup(&grid, &pert[k], near, one);
    entries.push(ConditionCheck::new(
        "near_value",
        "near",
        0.5 * e13 * h.powi(4),
        near_ratio(0),
    ));
    entries.push(ConditionCheck::new(
        "middle_value",
        "middle",
        eps.sqrt(),
        weighted_sup(&grid, &pert[0], middle, |x| japanese(x).powf(1.0 / 3.0)),
    ));
    entries.push(ConditionCheck::new(
        "near_slope",
        "near",
        0.5 * e13 * h.powi(3),
        near_ratio(1),
    ));
    entries.push(ConditionCheck::new(
        "middle_slope",
        "middle",
        eps.powf(0.25),
        weighted_sup(&grid, &pert[1], middle, |x| japanese(x).powf(-2.0 / 3.0)),
    ));
    entries.push(ConditionCheck::new(
        "far_slope",
        "far",
        1.0 / eps,
        weighted_sup(&grid, &d[1], far, one),
    ));
    entries.push(ConditionCheck::new(
        "near_curvature",
        "near",
        0.5 * e13 * h * h,
        near_ratio(2),
    ));
    entries.push(ConditionCheck::new(
        "outer_curvature",
        "outer",
        m.powf(0.2 - params.delta),
        weighted_sup(&grid, &d[2], outer, one),
    ));
    entries.push(ConditionCheck::new(
        "near_third",
        "near",
        0.25 * e13 * h,
        near_ratio(3),
    ));
    entries.push(ConditionCheck::new(
        "near_fourth",
        "near",
        0.25 * e13,
        near_ratio(4),
    ));
    entries.push(ConditionCheck::new(
        "slope_l2",
        "line",
        50.0,
        l2_norm(&d[1], dx),
    ));
    entries.push(ConditionCheck::new(
        "fifth_l2",
        "line",
        0.5 * m.powf(1.5),
        l2_norm(&d[5], dx),
    ));
    entries.push(ConditionCheck::new(
        "fourth_sup",
        "line",
        0.5 * m,
        max_abs(&d[4]),
    ));
    let shift = params.kappa0 / eps.sqrt();
    let shifted: Vec<f64> = d[0].iter().map(|v| v + shift).collect();
    entries.push(ConditionCheck::new(
        "shifted_sup",
        "line",
        0.5 * m / eps.sqrt(),
        max_abs(&shifted),
    ));
    entries.push(ConditionCheck::new(
        "origin_third",
        "origin",
        0.25 * eps.sqrt(),
        pert[3][c].abs(),
    ));
    // Physical support [-1, 1] is |X| ≤ ε^{-3/2}.
    let support_edge = eps.powf(-1.5);
    let outside = weighted_sup(&grid, &d[0], |x| x.abs() > support_edge, one);
    entries.push(ConditionCheck::new(
        "support",
        "outside",
        SUPPORT_NOISE,
        outside,
    ));
    entries.push(ConditionCheck::new(
        "amplitude_shift",
        "scalar",
        m,
        params.kappa0.abs(),
    ));

    Ok(AdmissibilityReport {
        epsilon: eps,
        m,
        entries,
    })
}

/// One row of the feasible-wedge table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WedgeRow {
    pub m: f64,
    /// Largest admissible `ε` found by bisection.
    pub epsilon_max: f64,
    /// Smallest `ε` whose middle field fits in the grid.
    pub epsilon_min: f64,
}

/// Bisection in `ε` for the admissibility boundary at fixed `M`.
///
/// `lo` must be admissible and `hi` not; the result brackets the boundary to `tol`.
pub fn feasible_epsilon(
    m: f64,
    lo: f64,
    hi: f64,
    tol: f64,
    taper: &Taper,
    grid: GridSpec<f64>,
) -> Result<WedgeRow> {
    let admissible = |eps: f64| -> Result<bool> {
        let p = AdmissibilityParams::new(m, eps)?;
        let data = construct_unchecked(&p, taper, grid, GridSpec::new(16, 4.0)?)?;
        Ok(certify(&data.selfsim, &p)?.admissible())
    };
    if !admissible(lo)? {
        return Err(Error::Infeasible(format!(
            "lower end epsilon = {lo} is not admissible for M = {m}"
        )));
    }
    if admissible(hi)? {
        return Err(Error::Domain(format!(
            "upper end epsilon = {hi} is admissible for M = {m}; widen the bracket"
        )));
    }
    let (mut a, mut b) = (lo, hi);
    while b - a > tol {
        let mid = 0.5 * (a + b);
        if admissible(mid)? {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(WedgeRow {
        m,
        epsilon_max: a,
        epsilon_min: (2.0 * grid.half_length()).powf(-2.0 / 3.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn taper_has_unit_mass_and_plateaus() {
        let t = Taper::default();
        assert_eq!(t.value(0.01), 1.0);
        assert_eq!(t.value(1.0), 0.0);
        assert!(t.value(0.999_999) < 1e-12);
        let mid = t.value(0.55);
        assert!((mid - 0.7).abs() < 1e-12, "{mid}");
    }
}
