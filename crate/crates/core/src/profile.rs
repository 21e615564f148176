//! Self-similar Burgers profiles.
//!
//! The family `Ψ_ν` is defined implicitly by `X = -Ψ - (ν/6) Ψ³`. The ground
//! state (`ν = 6`) solves `U³ + U + X = 0` and has a closed form; other members
//! follow from a safeguarded Newton solve or from the scaling identity
//! `Ψ_ν(X) = (ν/6)^{-1/2} Ψ_6((ν/6)^{1/2} X)`.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Parameter of the ground state.
pub const GROUND_NU: f64 = 6.0;

/// Envelope constants `C_i` in `|∂^i Ψ_6(X)| ≤ C_i ⟨X⟩^{1/3-i}`, `i = 0..=5`.
///
/// The first three are exactly one. The last three were fitted as the maximum
/// ratio over a logarithmic grid in `[0, 10⁷]` and rounded up.
pub const DECAY_CONSTANTS: [f64; 6] = [1.0, 1.0, 1.0, 6.05, 31.0, 361.0];

/// Lower and upper constants of the two-sided slope envelope, valid for `|X| ≥ 100`.
pub const SLOPE_ENVELOPE: (f64, f64) = (0.25, 0.35);

/// Value and derivatives of a profile at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileJet<T> {
    pub value: T,
    pub d1: T,
    pub d2: T,
    pub d3: T,
    pub d4: T,
    pub d5: T,
}

impl<T: Real> ProfileJet<T> {
    /// Derivative of order `i` (`0` is the value).
    pub fn derivative(&self, i: usize) -> T {
        match i {
            0 => self.value,
            1 => self.d1,
            2 => self.d2,
            3 => self.d3,
            4 => self.d4,
            5 => self.d5,
            _ => panic!("profile jets carry derivatives up to order 5"),
        }
    }

    fn from_array(d: [T; 6]) -> Self {
        Self {
            value: d[0],
            d1: d[1],
            d2: d[2],
            d3: d[3],
            d4: d[4],
            d5: d[5],
        }
    }
}

/// One member of the self-similar profile family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileFamily<T> {
    nu: T,
}

impl<T: Real> ProfileFamily<T> {
    pub fn new(nu: T) -> Result<Self> {
        if !(nu > T::zero()) || !nu.is_finite() {
            return Err(Error::Domain(format!(
                "profile parameter must be positive, got {nu}"
            )));
        }
        Ok(Self { nu })
    }

    pub fn ground() -> Self {
        Self {
            nu: T::lit(GROUND_NU),
        }
    }

    pub fn nu(&self) -> T {
        self.nu
    }

    pub fn value(&self, x: T) -> T {
        eval_profile(x, self.nu)
    }

    pub fn jet(&self, x: T) -> ProfileJet<T> {
        eval_jet(x, self.nu)
    }
}

/// Real root of `U³ + U + X = 0`.
fn ground_root<T: Real>(x: T) -> T {
    if x == T::zero() {
        return T::zero();
    }
    let ax = x.abs();
    let q = ax / T::lit(2.0);
    let d = (q * q + T::lit(1.0 / 27.0)).sqrt();
    // Stable Cardano form for X > 0: U = A - 1/(3A), A = -cbrt(q + d).
    let a = -(q + d).cbrt();
    let mut u = a - T::one() / (T::lit(3.0) * a);
    if ax > T::lit(1.0e3) {
        u = -(ax).cbrt();
    }
    u = polish(u, ax, T::one());
    if x > T::zero() {
        u
    } else {
        -u
    }
}

/// Newton polish of `u + c u³ + x = 0`, safeguarded by the bracket between
/// `-min(x, (x/c)^{1/3})` and `0` (for `x > 0`).
fn polish<T: Real>(seed: T, x: T, c: T) -> T {
    let g = |u: T| u + c * u * u * u + x;
    let mut lo = -(x.min((x / c).cbrt()));
    let mut hi = T::zero();
    let mut u = seed.max(lo).min(hi);
    let tol = T::lit(4.0) * T::epsilon();
    for _ in 0..200 {
        let gu = g(u);
        if gu == T::zero() {
            return u;
        }
        if gu > T::zero() {
            hi = u;
        } else {
            lo = u;
        }
        let slope = T::one() + T::lit(3.0) * c * u * u;
        let mut next = u - gu / slope;
        if !(next > lo && next < hi) {
            next = (lo + hi) / T::lit(2.0);
        }
        let step = (next - u).abs();
        u = next;
        if step <= tol * u.abs().max(T::min_positive_value()) {
            break;
        }
    }
    u
}

/// `Ψ_ν(X)`: the unique real solution of `X = -Ψ - (ν/6) Ψ³`.
///
/// `ν` must be positive; callers that cannot guarantee this should go through
/// [`ProfileFamily::new`].
pub fn eval_profile<T: Real>(x: T, nu: T) -> T {
    let c = nu / T::lit(GROUND_NU);
    if c == T::one() {
        return ground_root(x);
    }
    if x == T::zero() {
        return T::zero();
    }
    let ax = x.abs();
    let seed = if ax > T::lit(1.0e3) {
        -(ax / c).cbrt()
    } else {
        -(ax.min((ax / c).cbrt()))
    };
    let u = polish(seed, ax, c);
    if x > T::zero() {
        u
    } else {
        -u
    }
}

/// Value and first five derivatives by repeated implicit differentiation.
pub fn eval_jet<T: Real>(x: T, nu: T) -> ProfileJet<T> {
    let c = nu / T::lit(GROUND_NU);
    let psi = eval_profile(x, nu);
    let mut d = [T::zero(); 6];
    d[0] = psi;
    let denom = T::one() + T::lit(3.0) * c * psi * psi;
    for n in 1..=5 {
        // n-th derivative of Ψ³ with every term containing Ψ^{(n)} removed.
        let mut cube = T::zero();
        for i in 0..n {
            for j in 0..n {
                let k = n as isize - i as isize - j as isize;
                if k < 0 || k as usize >= n {
                    continue;
                }
                let k = k as usize;
                let coef = T::lit(multinomial(n, i, j, k));
                cube += coef * d[i] * d[j] * d[k];
            }
        }
        let forcing = if n == 1 { T::one() } else { T::zero() };
        d[n] = -(forcing + c * cube) / denom;
    }
    ProfileJet::from_array(d)
}

fn multinomial(n: usize, i: usize, j: usize, k: usize) -> f64 {
    let f = |m: usize| (1..=m).fold(1.0, |acc, v| acc * v as f64);
    f(n) / (f(i) * f(j) * f(k))
}

/// `Ū_ν(X) = (ν/6)^{-1/2} Ū((ν/6)^{1/2} X)`.
pub fn eval_rescaled<T: Real>(x: T, nu: T) -> Result<T> {
    if !(nu > T::zero()) {
        return Err(Error::Domain(format!(
            "profile parameter must be positive, got {nu}"
        )));
    }
    let a = (nu / T::lit(GROUND_NU)).sqrt();
    Ok(ground_root(a * x) / a)
}

/// Jet of the rescaled profile `Ū_ν` via the scaling identity.
pub fn eval_rescaled_jet<T: Real>(x: T, nu: T) -> Result<ProfileJet<T>> {
    if !(nu > T::zero()) {
        return Err(Error::Domain(format!(
            "profile parameter must be positive, got {nu}"
        )));
    }
    let a = (nu / T::lit(GROUND_NU)).sqrt();
    let g = eval_jet(a * x, T::lit(GROUND_NU));
    let mut d = [T::zero(); 6];
    let mut scale = T::one() / a;
    for (i, slot) in d.iter_mut().enumerate() {
        *slot = g.derivative(i) * scale;
        scale *= a;
    }
    Ok(ProfileJet::from_array(d))
}

fn japanese<T: Real>(x: T) -> T {
    (T::one() + x * x).sqrt()
}

/// One-sided bounds `|∂^i Ū(X)| ≤ C_i ⟨X⟩^{1/3-i}` for `i = 0..=5`; valid for every `X`.
pub fn check_decay_bounds<T: Real>(x: T) -> bool {
    let jet = eval_jet(x, T::lit(GROUND_NU));
    let w = japanese(x);
    (0..6).all(|i| {
        let bound = T::lit(DECAY_CONSTANTS[i]) * w.powf(T::lit(1.0 / 3.0 - i as f64));
        jet.derivative(i).abs() <= bound
    })
}

/// Two-sided slope envelope `¼⟨X⟩^{-2/3} ≤ |Ū'(X)| ≤ (7/20)⟨X⟩^{-2/3}` together
/// with the one-sided bounds. Requires `|X| ≥ 100`.
pub fn check_decay_envelope<T: Real>(x: T) -> Result<bool> {
    if x.abs() < T::lit(100.0) {
        return Err(Error::Domain(format!(
            "two-sided slope envelope needs |X| >= 100, got {x}"
        )));
    }
    let d1 = eval_jet(x, T::lit(GROUND_NU)).d1.abs();
    let w = japanese(x).powf(T::lit(-2.0 / 3.0));
    let (lo, hi) = SLOPE_ENVELOPE;
    Ok(d1 >= T::lit(lo) * w && d1 <= T::lit(hi) * w && check_decay_bounds(x))
}

/// Rows `(X, U, d1..d5)` on a uniform grid, for the profile table.
pub fn profile_table<T: Real>(nu: T, xmin: T, xmax: T, n: usize) -> Result<Vec<[T; 7]>> {
    ProfileFamily::new(nu)?;
    if n < 2 || !(xmax > xmin) {
        return Err(Error::Domain(
            "profile table needs n >= 2 and xmax > xmin".into(),
        ));
    }
    let step = (xmax - xmin) / T::from_usize_lossy(n - 1);
    Ok((0..n)
        .map(|i| {
            let x = xmin + step * T::from_usize_lossy(i);
            let j = eval_jet(x, nu);
            [x, j.value, j.d1, j.d2, j.d3, j.d4, j.d5]
        })
        .collect())
}
