//! Reciprocal-hazard diagnostics.
//!
//! For a distribution `G` with density `g`, the reciprocal hazard is
//! `h(x) = {1 - G(x)}/g(x)` and `h'(x) → ξ` in the upper tail characterises the tail
//! index. This module evaluates `h'` numerically, tabulates the penultimate index
//! `h'(u_n)` at `u_n = G^{-1}(1 - 1/n)` for the EGP families, builds `F_V` from an
//! `s`-function by nested quadrature, and checks a claimed tail index along a
//! sequence of survival levels.

use crate::error::{Error, Result};
use crate::models::{ModelFamily, ModelParams, XI_SWITCH};
use crate::quadrature::integrate;
use crate::special::{ln_beta, ln_gamma};
use serde::Serialize;
use std::fmt;
use std::sync::Arc;

/// Default relative step for [`hazard_derivative`].
pub const DEFAULT_RELATIVE_STEP: f64 = 1e-5;
/// Survival below which [`hazard_derivative`] refuses to difference.
pub const MIN_SURVIVAL: f64 = 1e-12;
const QUAD_TOL: f64 = 1e-11;
/// Allowance for rounding in the exact slope.
const SLOPE_FLOOR: f64 = 1e-14;

/// A continuous distribution with survival function and density.
pub trait TailDistribution {
    fn sf(&self, x: f64) -> f64;
    fn density(&self, x: f64) -> f64;

    fn lower_endpoint(&self) -> f64 {
        0.0
    }

    fn upper_endpoint(&self) -> f64 {
        f64::INFINITY
    }

    fn reciprocal_hazard(&self, x: f64) -> f64 {
        self.sf(x) / self.density(x)
    }

    /// Upper-tail quantile: the `x` with `sf(x) = p`.
    fn isf(&self, p: f64) -> Result<f64> {
        bisect_isf(self, p)
    }
}

fn bisect_isf<D: TailDistribution + ?Sized>(dist: &D, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!("survival level must lie in (0, 1), got {p}")));
    }
    let mut lo = dist.lower_endpoint();
    let mut hi = dist.upper_endpoint();
    if !hi.is_finite() {
        hi = lo.abs().max(1.0) + lo;
        while dist.sf(hi) > p {
            lo = hi;
            hi *= 2.0;
            if !hi.is_finite() {
                return Err(Error::numeric(format!("survival level {p:e} is beyond the representable range")));
            }
        }
    }
    for _ in 0..400 {
        let mid = if lo > 0.0 && hi > 4.0 * lo { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
        if mid <= lo || mid >= hi {
            break;
        }
        if dist.sf(mid) > p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

impl TailDistribution for ModelParams {
    fn sf(&self, x: f64) -> f64 {
        ModelParams::sf(self, x)
    }

    fn density(&self, x: f64) -> f64 {
        ModelParams::density(self, x)
    }

    fn upper_endpoint(&self) -> f64 {
        self.support().upper
    }

    fn isf(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::domain(format!("survival level must lie in (0, 1), got {p}")));
        }
        self.quantile(1.0 - p)
    }
}

/// GP scale transform followed by a Weibull survival:
/// `1 - G(x) = exp[-{ξ^{-1} log(1 + ξx/σ)}^κ]`.
///
/// With κ < 1 and ξ > 0 the tail is heavier than any power law, so no finite tail
/// index exists.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeibullComposition {
    pub kappa: f64,
    pub sigma: f64,
    pub xi: f64,
}

impl WeibullComposition {
    pub fn new(kappa: f64, sigma: f64, xi: f64) -> Result<Self> {
        // reuse the parameter checks of the model constructor
        ModelParams::new(ModelFamily::Egp3, kappa, sigma, xi)?;
        Ok(WeibullComposition { kappa, sigma, xi })
    }

    fn cum_hazard(&self, x: f64) -> f64 {
        if self.xi.abs() < XI_SWITCH {
            x / self.sigma
        } else {
            (self.xi * x / self.sigma).ln_1p() / self.xi
        }
    }
}

impl TailDistribution for WeibullComposition {
    fn sf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        if x >= self.upper_endpoint() {
            return 0.0;
        }
        (-self.cum_hazard(x).powf(self.kappa)).exp()
    }

    fn density(&self, x: f64) -> f64 {
        if x <= 0.0 || x >= self.upper_endpoint() {
            return 0.0;
        }
        let y = self.cum_hazard(x);
        let dy = 1.0 / (self.sigma + self.xi * x);
        self.sf(x) * self.kappa * y.powf(self.kappa - 1.0) * dy
    }

    fn upper_endpoint(&self) -> f64 {
        if self.xi < 0.0 {
            self.sigma / -self.xi
        } else {
            f64::INFINITY
        }
    }

    fn reciprocal_hazard(&self, x: f64) -> f64 {
        let y = self.cum_hazard(x);
        (self.sigma + self.xi * x) * y.powf(1.0 - self.kappa) / self.kappa
    }

    fn isf(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::domain(format!("survival level must lie in (0, 1), got {p}")));
        }
        let y = (-p.ln()).powf(1.0 / self.kappa);
        let x = if self.xi.abs() < XI_SWITCH { self.sigma * y } else { self.sigma * (self.xi * y).exp_m1() / self.xi };
        if x.is_finite() {
            Ok(x)
        } else {
            Err(Error::numeric(format!("survival level {p:e} is beyond the representable range")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HazardPoint {
    pub u: f64,
    /// Reciprocal hazard, in data units.
    pub h: f64,
    pub h_prime: f64,
}

/// Central-difference estimate of `h'(u)` with one Richardson extrapolation.
///
/// `step` defaults to `1e-5·max(1, |u|)` and is shrunk to stay a quarter of the way
/// from either end point.
pub fn hazard_derivative<D: TailDistribution + ?Sized>(dist: &D, u: f64, step: Option<f64>) -> Result<HazardPoint> {
    let (lo, hi) = (dist.lower_endpoint(), dist.upper_endpoint());
    if !(u > lo && u < hi) {
        return Err(Error::domain(format!("u = {u} is not interior to the support")));
    }
    let survival = dist.sf(u);
    if !(survival > MIN_SURVIVAL) {
        return Err(Error::numeric(format!(
            "u = {u} is too deep in the tail (survival {survival:e}) for stable differencing"
        )));
    }
    let mut d = step.unwrap_or(DEFAULT_RELATIVE_STEP * u.abs().max(1.0));
    if !(d > 0.0 && d.is_finite()) {
        return Err(Error::domain(format!("step must be positive, got {d}")));
    }
    d = d.min(0.25 * (hi - u)).min(0.25 * (u - lo));
    let central = |d: f64| (dist.reciprocal_hazard(u + d) - dist.reciprocal_hazard(u - d)) / (2.0 * d);
    let h_prime = (4.0 * central(0.5 * d) - central(d)) / 3.0;
    let h = dist.reciprocal_hazard(u);
    if h.is_finite() && h > 0.0 && h_prime.is_finite() {
        Ok(HazardPoint { u, h, h_prime })
    } else {
        Err(Error::numeric(format!("reciprocal hazard is not evaluable near u = {u}")))
    }
}

/// The constants `A`, `D = (ξ - |ξ|)A` and `E = |ξ|A` of the EGP1 expansion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Egp1Constants {
    pub a: f64,
    pub d: f64,
    pub e: f64,
}

impl Egp1Constants {
    pub fn new(kappa: f64, xi: f64) -> Result<Self> {
        let m = xi.abs();
        if m == 0.0 {
            return Err(Error::domain("the EGP1 constants need xi != 0"));
        }
        let be = ln_beta(kappa, 1.0 / m)?.exp();
        let a = (kappa - 1.0) / (1.0 + 1.0 / m) * (m / be).powf(-m);
        Ok(Egp1Constants { a, d: (xi - m) * a, e: m * a })
    }
}

/// Penultimate tail index of one family at one `n`.
#[derive(Debug, Clone, Serialize)]
pub struct PenultimateRow {
    pub family: ModelFamily,
    pub kappa: f64,
    pub sigma: f64,
    pub xi: f64,
    pub n: f64,
    /// Leading-order approximation to `u_n`.
    pub u_n: f64,
    /// `G^{-1}(1 - 1/n)`.
    pub u_n_exact: f64,
    /// Leading term for `h'(u_n)` in its published form.
    pub h_prime_leading: f64,
    /// Leading term re-derived from the series expansion of `h'` (see the README).
    pub h_prime_corrected: f64,
    /// `h'(u_n_exact)` from the closed-form slope.
    pub h_prime_exact: f64,
    /// Magnitude of the first term the corrected expansion leaves out.
    pub next_order: f64,
    pub constants: Option<Egp1Constants>,
}

impl PenultimateRow {
    pub fn leading_agrees(&self) -> bool {
        (self.h_prime_exact - self.h_prime_leading).abs() <= self.next_order
    }

    pub fn corrected_agrees(&self) -> bool {
        (self.h_prime_exact - self.h_prime_corrected).abs() <= self.next_order
    }
}

/// Tabulates `u_n` and `h'(u_n)` for a family, alongside the exact values.
pub fn penultimate_table(family: ModelFamily, kappa: f64, sigma: f64, xi: f64, n: f64) -> Result<PenultimateRow> {
    if !(n >= 2.0 && n.is_finite()) {
        return Err(Error::domain(format!("n must be at least 2, got {n}")));
    }
    let model = ModelParams::new(family, kappa, sigma, xi)?;
    let u_n_exact = model.quantile(1.0 - 1.0 / n)?;
    let h_prime_exact = model.reciprocal_hazard_slope(u_n_exact)?;
    let ln_n = n.ln();
    let c = kappa - 1.0;
    let lg = ln_gamma(kappa)?;
    let near_zero = xi.abs() < XI_SWITCH;
    let power_u = |log_base: f64| sigma * (xi * log_base).exp_m1() / xi;

    let mut constants = None;
    let (u_n, leading, corrected, next) = match family {
        ModelFamily::Gp => (u_n_exact, xi, xi, 0.0),
        ModelFamily::Egp1 | ModelFamily::Egp2 if near_zero => {
            let v = -c / (ln_n * ln_n);
            let m = 2.0 * c.abs() * (c.abs() * ln_n.ln() + lg.abs() + (kappa - 2.0).abs()) / ln_n.powi(3);
            (sigma * (ln_n - lg), v, v, m)
        }
        ModelFamily::Egp1 => {
            let m = xi.abs();
            let b = 1.0 / m;
            let k = Egp1Constants::new(kappa, xi)?;
            constants = Some(k);
            let ln_be = ln_beta(kappa, b)?;
            let delta = ((ln_be - m.ln() - ln_n) * m).exp();
            let a2 = c * (c - 1.0) * b / (2.0 * (b + 2.0)) - c * c * b / (b + 1.0) + c * (c + 1.0) / 2.0;
            let (t1, t2) = if xi > 0.0 {
                (0.0, -xi * a2 * delta * delta)
            } else {
                (k.d * n.powf(-m), xi * (2.0 * c * c / ((b + 1.0) * (b + 1.0)) + 3.0 * a2) * delta * delta)
            };
            let leading = xi + n.powf(-m) * k.d - n.powf(-2.0 * m) * k.e;
            let next = 5.0 * t2.abs() * delta + c.abs() * delta.powi(3);
            (power_u(ln_n + m.ln() - ln_be), leading, xi + t1 + t2, next)
        }
        ModelFamily::Egp2 => {
            let next = c.abs() * (xi.abs() * (c.abs() * ln_n.ln() + lg.abs() + (kappa - 2.0).abs()) + 1.0) / (ln_n * ln_n);
            (power_u(ln_n - lg), xi + c / ln_n, xi + xi * c / ln_n, next)
        }
        ModelFamily::Egp3 => {
            let kn = kappa * n;
            let t2 = (c * c * (xi - 1.0) / 4.0 + c * ((1.0 + xi) * (c + 2.0) - 6.0 - 3.0 * c) / 6.0) / (kn * kn);
            let next = 1.5 * t2.abs() + c.abs() * (1.0 + c.abs()).powi(2) / kn.powi(3);
            if near_zero {
                (sigma * kn.ln(), -c / kn, -c / (2.0 * kn), next)
            } else {
                (power_u(kn.ln()), xi + c * (xi - 1.0) / (2.0 * kn), xi + c * (xi - 1.0) / (2.0 * kn), next)
            }
        }
    };
    Ok(PenultimateRow {
        family,
        kappa,
        sigma,
        xi,
        n,
        u_n,
        u_n_exact,
        h_prime_leading: leading,
        h_prime_corrected: corrected,
        h_prime_exact,
        next_order: next + SLOPE_FLOOR,
        constants,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RateScale {
    /// Deviation modelled as `n^p`.
    N,
    /// Deviation modelled as `(log n)^p`.
    LogN,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatePoint {
    pub n: f64,
    pub u_n: f64,
    pub deviation: f64,
}

/// Empirical convergence rate of `h'(u_n)` towards ξ.
#[derive(Debug, Clone, Serialize)]
pub struct RateReport {
    pub family: ModelFamily,
    pub kappa: f64,
    pub xi: f64,
    pub scale: RateScale,
    /// Exponent according to the published order statement.
    pub claimed_exponent: Option<f64>,
    /// Exponent of the leading term of the series expansion.
    pub derived_exponent: Option<f64>,
    /// Least-squares slope of `log|h'(u_n) - ξ|` against `log n` or `log log n`.
    pub empirical_exponent: Option<f64>,
    /// Set when every deviation is below `1e-12`.
    pub converged: bool,
    pub points: Vec<RatePoint>,
}

impl RateReport {
    pub fn matches_claim(&self, tol: f64) -> bool {
        self.converged || matches!((self.empirical_exponent, self.claimed_exponent), (Some(e), Some(c)) if (e - c).abs() <= tol)
    }

    pub fn matches_derived(&self, tol: f64) -> bool {
        self.converged || matches!((self.empirical_exponent, self.derived_exponent), (Some(e), Some(c)) if (e - c).abs() <= tol)
    }
}

/// Rate scale and (claimed, derived) exponents for a family.
fn rate_claims(family: ModelFamily, xi: f64) -> (RateScale, Option<f64>, Option<f64>) {
    let zero = xi.abs() < XI_SWITCH;
    let m = xi.abs();
    match family {
        ModelFamily::Gp => (RateScale::N, None, None),
        ModelFamily::Egp1 | ModelFamily::Egp2 if zero => (RateScale::LogN, Some(-2.0), Some(-2.0)),
        ModelFamily::Egp1 if xi > 0.0 => (RateScale::N, Some(-m), Some(-2.0 * m)),
        ModelFamily::Egp1 => (RateScale::N, Some(-2.0 * m), Some(-m)),
        ModelFamily::Egp2 => (RateScale::LogN, Some(-1.0), Some(-1.0)),
        ModelFamily::Egp3 => (RateScale::N, Some(-1.0), Some(-1.0)),
    }
}

/// Regresses `log|h'(u_n) - ξ|` over `n_grid` to estimate the convergence rate.
pub fn convergence_rate_check(family: ModelFamily, kappa: f64, xi: f64, n_grid: &[f64]) -> Result<RateReport> {
    if n_grid.len() < 3 {
        return Err(Error::domain("the n grid needs at least three points"));
    }
    if n_grid.windows(2).any(|w| !(w[1] > w[0])) || !(n_grid[0] >= 2.0) {
        return Err(Error::domain("the n grid must be increasing and start at 2 or more"));
    }
    let model = ModelParams::new(family, kappa, 1.0, xi)?;
    let mut points = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let u_n = model.quantile(1.0 - 1.0 / n)?;
        let deviation = model.reciprocal_hazard_slope(u_n)? - xi;
        points.push(RatePoint { n, u_n, deviation });
    }
    let (scale, claimed, derived) = rate_claims(family, xi);
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.deviation.abs() >= 1e-12)
        .map(|p| {
            let t = match scale {
                RateScale::N => p.n.ln(),
                RateScale::LogN => p.n.ln().ln(),
            };
            (t, p.deviation.abs().ln())
        })
        .collect();
    let converged = usable.is_empty();
    let empirical = (usable.len() >= 2).then(|| {
        let k = usable.len() as f64;
        let mx = usable.iter().map(|p| p.0).sum::<f64>() / k;
        let my = usable.iter().map(|p| p.1).sum::<f64>() / k;
        let sxy: f64 = usable.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = usable.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    });
    Ok(RateReport {
        family,
        kappa,
        xi,
        scale,
        claimed_exponent: claimed,
        derived_exponent: derived,
        empirical_exponent: empirical,
        converged,
        points,
    })
}

type SFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// An `s`-function generating `F_V` through
/// `F_V(v) = 1 - exp{-∫_0^v [ξ(1-z)^{1+ξ} C(z)]^{-1} dz}`,
/// `C(z) = ∫ s(z)/(1-z)^{1+ξ} dz + c`.
///
/// The antiderivative is pinned by its value at `anchor_z` (before adding `c`).
#[derive(Clone)]
pub struct SFunctionSpec {
    pub kappa: f64,
    pub xi: f64,
    pub c: f64,
    s: SFn,
    anchor_z: f64,
    anchor_value: f64,
}

impl fmt::Debug for SFunctionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SFunctionSpec")
            .field("kappa", &self.kappa)
            .field("xi", &self.xi)
            .field("c", &self.c)
            .field("anchor_z", &self.anchor_z)
            .field("anchor_value", &self.anchor_value)
            .finish()
    }
}

impl SFunctionSpec {
    pub fn new(kappa: f64, xi: f64, c: f64, s: SFn, anchor_z: f64, anchor_value: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::domain(format!("kappa must be positive, got {kappa}")));
        }
        if !xi.is_finite() || xi == 0.0 {
            return Err(Error::domain("the s-function construction needs a finite xi != 0"));
        }
        if !c.is_finite() || c < 0.0 {
            return Err(Error::domain(format!("the integration constant must be c >= 0, got {c}")));
        }
        if xi < 0.0 && c != 0.0 {
            return Err(Error::domain("for xi < 0 only c = 0 yields a distribution function"));
        }
        if !(anchor_z > 0.0 && anchor_z < 1.0) || !anchor_value.is_finite() {
            return Err(Error::domain("the anchor must satisfy 0 < z < 1 with a finite value"));
        }
        Ok(SFunctionSpec { kappa, xi, c, s, anchor_z, anchor_value })
    }

    /// `s(z) = z^{-κ}{z^κ + κ - 1 + ξz^{κ+1} - z(κ + ξ)}/{κξ(z - 1)}`, whose `c = 0`
    /// member gives `F_V(v) = v^κ`.
    pub fn power(kappa: f64, xi: f64, c: f64) -> Result<Self> {
        let s: SFn = Arc::new(move |z: f64| power_s(z, kappa, xi));
        let za: f64 = 0.5;
        let anchor = (1.0 - za.powf(kappa)) / (kappa * xi * za.powf(kappa - 1.0) * (1.0 - za).powf(1.0 + xi));
        Self::new(kappa, xi, c, s, za, anchor)
    }

    pub fn s(&self, z: f64) -> f64 {
        (self.s)(z)
    }

    /// `(z, s(z))` at `z = 1 - 10^{-k}`, `k = 3..8`.
    pub fn limit_trace(&self) -> Vec<(f64, f64)> {
        (3..=8).map(|k| 1.0 - 10f64.powi(-k)).map(|z| (z, self.s(z))).collect()
    }

    /// Checks numerically that `s(z) → 1` as `z → 1`.
    pub fn check_limit(&self) -> Result<()> {
        let trace = self.limit_trace();
        let last = (trace[trace.len() - 1].1 - 1.0).abs();
        let first = (trace[0].1 - 1.0).abs();
        if last < 1e-4 && last <= first {
            Ok(())
        } else {
            Err(Error::domain(format!("s(z) does not approach 1 as z -> 1: trace {trace:?}")))
        }
    }

    /// `C` at `z = 1 - e^{-τ}`, integrating in `τ` so that the upper end stays resolved.
    fn antiderivative(&self, tau: f64) -> Result<f64> {
        let tau_a = -(-self.anchor_z).ln_1p();
        let xi = self.xi;
        let inner = integrate(|t| self.s(-(-t).exp_m1()) * (xi * t).exp(), tau_a, tau, QUAD_TOL)?;
        Ok(self.anchor_value + self.c + inner)
    }

    /// `dH/dτ` where `H = -log(1 - F_V)`.
    fn hazard_rate(&self, tau: f64) -> Result<f64> {
        let denom = self.xi * self.antiderivative(tau)?;
        if denom > 0.0 && denom.is_finite() {
            Ok((self.xi * tau).exp() / denom)
        } else {
            Err(Error::numeric(format!("xi*C(z) is not positive at z = {}", -(-tau).exp_m1())))
        }
    }

    /// `H(b) - H(a)`.
    fn cum_hazard_increment(&self, a: f64, b: f64) -> Result<f64> {
        let mut failure = None;
        let value = integrate(
            |t| match self.hazard_rate(t) {
                Ok(v) => v,
                Err(e) => {
                    failure.get_or_insert(e);
                    0.0
                }
            },
            a,
            b,
            QUAD_TOL,
        )?;
        match failure {
            Some(e) => Err(e),
            None => Ok(value),
        }
    }
}

fn power_s(z: f64, kappa: f64, xi: f64) -> f64 {
    if kappa == 1.0 || z >= 1.0 {
        return 1.0;
    }
    if z <= 0.0 {
        return if kappa > 1.0 { -f64::INFINITY * xi.signum() } else { f64::INFINITY * xi.signum() };
    }
    // with t = -log z the numerator is expm1(-κt) - κ·expm1(-t) + ξz·expm1(-κt)
    let t = -z.ln();
    let a = (-kappa * t).exp_m1();
    let b = (-t).exp_m1();
    z.powf(-kappa) * (a - kappa * b + xi * z * a) / (kappa * xi * b)
}

/// Upper clamp applied to `v` before integrating; `F_V(1) = 1` by continuity.
const V_MAX: f64 = 1.0 - 1e-9;

/// Evaluates `F_V` on `grid` from the `s`-function.
pub fn fv_from_s(spec: &SFunctionSpec, grid: &[f64]) -> Result<Vec<f64>> {
    if let Some(v) = grid.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::domain(format!("grid values must lie in [0, 1], got {v}")));
    }
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&i, &j| grid[i].total_cmp(&grid[j]));
    let mut out = vec![0.0; grid.len()];
    let (mut tau, mut h) = (0.0, 0.0);
    for i in order {
        let v = grid[i];
        if v == 1.0 {
            out[i] = 1.0;
            continue;
        }
        let target = -(-v.min(V_MAX)).ln_1p();
        if target > tau {
            h += spec
                .cum_hazard_increment(tau, target)
                .map_err(|e| Error::numeric(format!("F_V quadrature failed at v = {v}: {e}")))?;
            tau = target;
        }
        out[i] = -(-h).exp_m1();
    }
    Ok(out)
}

/// The GP quantile function applied to `V ~ F_V` from an `s`-function.
///
/// Its reciprocal hazard is `h(x) = σξC(z)` with `z = F_GP(x)`.
#[derive(Debug, Clone)]
pub struct SFunctionDistribution {
    pub spec: SFunctionSpec,
    pub sigma: f64,
}

impl SFunctionDistribution {
    pub fn new(spec: SFunctionSpec, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::domain(format!("sigma must be positive, got {sigma}")));
        }
        Ok(SFunctionDistribution { spec, sigma })
    }

    fn gp_hazard(&self, x: f64) -> f64 {
        (self.spec.xi * x / self.sigma).ln_1p() / self.spec.xi
    }
}

impl TailDistribution for SFunctionDistribution {
    fn sf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        if x >= self.upper_endpoint() {
            return 0.0;
        }
        self.spec.cum_hazard_increment(0.0, self.gp_hazard(x)).map_or(f64::NAN, |h| (-h).exp())
    }

    fn density(&self, x: f64) -> f64 {
        self.sf(x) / self.reciprocal_hazard(x)
    }

    fn upper_endpoint(&self) -> f64 {
        if self.spec.xi < 0.0 {
            self.sigma / -self.spec.xi
        } else {
            f64::INFINITY
        }
    }

    fn reciprocal_hazard(&self, x: f64) -> f64 {
        self.spec.antiderivative(self.gp_hazard(x)).map_or(f64::NAN, |c| self.sigma * self.spec.xi * c)
    }

    fn isf(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::domain(format!("survival level must lie in (0, 1), got {p}")));
        }
        // Newton on H(τ) = -log p, integrating H incrementally
        let target = -p.ln();
        let (mut tau, mut h) = (0.0, 0.0);
        let mut next = target;
        for _ in 0..100 {
            h += self.spec.cum_hazard_increment(tau, next)?;
            tau = next;
            if (h - target).abs() <= 1e-12 * target {
                break;
            }
            let step = (target - h) / self.spec.hazard_rate(tau)?;
            next = if tau + step > 0.0 { tau + step } else { 0.5 * tau };
        }
        let xi = self.spec.xi;
        Ok(self.sigma * (xi * tau).exp_m1() / xi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Consistent,
    Inconsistent,
    /// Fewer than two levels could be evaluated.
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailIndexPoint {
    pub survival: f64,
    pub u: f64,
    pub h_prime: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TailIndexReport {
    pub xi_claimed: f64,
    pub verdict: Verdict,
    /// Allowed distance between the last `h'` and the claim.
    pub tolerance: Option<f64>,
    pub trace: Vec<TailIndexPoint>,
    pub failure: Option<String>,
}

/// Survival levels `10^{-2}, …, 10^{-8}` at which the tail index is checked.
pub const TAIL_LEVELS: [f64; 7] = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8];

/// Follows `h'(u_p)` down the survival levels and judges whether it settles at `xi_claimed`.
///
/// The last value must lie within `max(0.05, 3|h'_last - h'_previous|)` of the claim.
pub fn verify_tail_index<D: TailDistribution + ?Sized>(dist: &D, xi_claimed: f64) -> TailIndexReport {
    let mut trace = Vec::new();
    let mut failure = None;
    for &p in &TAIL_LEVELS {
        let point = dist.isf(p).and_then(|u| hazard_derivative(dist, u, None));
        match point {
            Ok(hp) => trace.push(TailIndexPoint { survival: p, u: hp.u, h_prime: hp.h_prime }),
            Err(e) => {
                failure = Some(format!("survival level {p:e}: {e}"));
                break;
            }
        }
    }
    let (verdict, tolerance) = match trace.as_slice() {
        [.., prev, last] => {
            let tol = (3.0 * (last.h_prime - prev.h_prime).abs()).max(0.05);
            let ok = (last.h_prime - xi_claimed).abs() <= tol;
            (if ok { Verdict::Consistent } else { Verdict::Inconsistent }, Some(tol))
        }
        _ => (Verdict::Inconclusive, None),
    };
    TailIndexReport { xi_claimed, verdict, tolerance, trace, failure }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(f: ModelFamily, k: f64, s: f64, x: f64) -> ModelParams {
        ModelParams::new(f, k, s, x).unwrap()
    }

    #[test]
    fn gp_reciprocal_hazard_is_linear() {
        for xi in [-0.3, 0.0, 0.2, 1.5] {
            let m = ModelParams::gp(2.0, xi).unwrap();
            for u in [0.1, 1.0, 3.0] {
                let hp = hazard_derivative(&m, u, None).unwrap();
                assert!((hp.h - (2.0 + xi * u)).abs() < 1e-10);
                assert!((hp.h_prime - xi).abs() < 1e-6, "{xi} {u} {}", hp.h_prime);
            }
        }
    }

    #[test]
    fn closed_form_slope_matches_differencing() {
        for f in [ModelFamily::Egp1, ModelFamily::Egp2, ModelFamily::Egp3] {
            for (k, xi) in [(0.5, -0.2), (2.0, 0.0), (2.0, 0.5), (3.0, 0.3)] {
                let m = model(f, k, 1.3, xi);
                for p in [0.3, 0.01, 1e-4] {
                    let u = m.quantile(1.0 - p).unwrap();
                    let exact = m.reciprocal_hazard_slope(u).unwrap();
                    let num = hazard_derivative(&m, u, None).unwrap().h_prime;
                    assert!((exact - num).abs() < 1e-6 * (1.0 + exact.abs()), "{f} {k} {xi} {p}: {exact} {num}");
                }
            }
        }
    }

    #[test]
    fn kappa_one_rows_are_exact() {
        for f in ModelFamily::ALL {
            for xi in [-0.2, 0.0, 0.5] {
                for n in [1e2, 1e4] {
                    let row = penultimate_table(f, 1.0, 1.0, xi, n).unwrap();
                    assert_eq!(row.h_prime_leading, xi);
                    assert!((row.h_prime_exact - xi).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn table_examples() {
        let row = penultimate_table(ModelFamily::Egp3, 2.0, 1.0, 0.5, 100.0).unwrap();
        assert!((row.h_prime_leading - 0.49875).abs() < 1e-15);
        assert!((row.h_prime_exact - 0.49875).abs() < row.next_order);
        let row = penultimate_table(ModelFamily::Egp2, 1.0, 1.0, 0.2, 1000.0).unwrap();
        assert!((row.u_n - (1000f64.powf(0.2) - 1.0) / 0.2).abs() < 1e-12);
        assert!(penultimate_table(ModelFamily::Egp3, 2.0, 1.0, 0.5, 1.0).is_err());
        assert!(penultimate_table(ModelFamily::Gp, 2.0, 1.0, 0.5, 10.0).is_err());
    }

    // h'(u_n) - ξ from 60-digit arithmetic (numerical differentiation of the exact
    // reciprocal hazard at the exact u_n).
    const FROZEN: [(ModelFamily, f64, f64, f64, f64); 12] = [
        (ModelFamily::Egp1, 0.5, -0.2, 1e4, 0.008998745690958721),
        (ModelFamily::Egp1, 2.0, -0.2, 1e6, -0.0031715497101039362),
        (ModelFamily::Egp1, 2.0, 0.0, 1e4, -0.007235247934847724),
        (ModelFamily::Egp1, 0.5, 0.5, 1e6, 1.3913113052979653e-07),
        (ModelFamily::Egp1, 2.0, 0.5, 1e4, -5.6421503218361685e-06),
        (ModelFamily::Egp2, 0.5, -0.2, 1e6, 0.01029982811995871),
        (ModelFamily::Egp2, 2.0, 0.5, 1e4, 0.03529488236958388),
        (ModelFamily::Egp2, 0.5, 0.0, 1e6, 0.0028176948620387424),
        (ModelFamily::Egp3, 0.5, -0.2, 1e6, 6.000008000009e-07),
        (ModelFamily::Egp3, 2.0, 0.0, 1e4, -2.5003125343786333e-05),
        (ModelFamily::Egp3, 2.0, 0.5, 1e6, -1.2500021875026562e-07),
        (ModelFamily::Egp3, 0.5, 0.5, 1e4, 2.5006250812590634e-05),
    ];

    #[test]
    fn exact_slope_matches_high_precision_reference() {
        for (f, k, xi, n, dev) in FROZEN {
            let row = penultimate_table(f, k, 1.0, xi, n).unwrap();
            let got = row.h_prime_exact - xi;
            assert!((got - dev).abs() < 1e-9 * dev.abs() + 1e-15, "{f} {k} {xi} {n}: {got} vs {dev}");
        }
    }

    #[test]
    fn corrected_terms_agree_within_next_order() {
        for f in [ModelFamily::Egp1, ModelFamily::Egp2, ModelFamily::Egp3] {
            for k in [0.5, 2.0] {
                for xi in [-0.2, 0.0, 0.5] {
                    for n in [1e4, 1e6] {
                        let row = penultimate_table(f, k, 1.0, xi, n).unwrap();
                        assert!(row.corrected_agrees(), "{row:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn published_terms_that_disagree() {
        // the ξ ≠ 0 EGP2 term lacks a factor ξ and the ξ → 0 EGP3 term a factor 1/2
        assert!(!penultimate_table(ModelFamily::Egp2, 2.0, 1.0, 0.3, 1e4).unwrap().leading_agrees());
        assert!(!penultimate_table(ModelFamily::Egp3, 2.0, 1.0, 0.0, 1e4).unwrap().leading_agrees());
        assert!(!penultimate_table(ModelFamily::Egp1, 2.0, 1.0, 0.5, 1e4).unwrap().leading_agrees());
        assert!(penultimate_table(ModelFamily::Egp3, 2.0, 1.0, 0.5, 1e4).unwrap().leading_agrees());
    }

    #[test]
    fn egp1_constants() {
        // Be(2, 5) = 1/30
        let k = Egp1Constants::new(2.0, -0.2).unwrap();
        assert!((k.a - 6f64.powf(-0.2) / 6.0).abs() < 1e-14);
        assert!((k.d + 0.4 * k.a).abs() < 1e-15);
        assert!((k.e - 0.2 * k.a).abs() < 1e-15);
        assert_eq!(Egp1Constants::new(2.0, 0.3).unwrap().d, 0.0);
    }

    #[test]
    fn rates() {
        let grid = [1e3, 1e4, 1e5, 1e6];
        let r = convergence_rate_check(ModelFamily::Egp3, 2.0, 0.5, &grid).unwrap();
        assert!((r.empirical_exponent.unwrap() + 1.0).abs() < 0.15);
        assert!(r.matches_claim(0.15));
        let r = convergence_rate_check(ModelFamily::Egp1, 2.0, 1.0, &grid).unwrap();
        assert!(r.matches_derived(0.15) && !r.matches_claim(0.15), "{r:?}");
        for f in ModelFamily::ALL {
            assert!(convergence_rate_check(f, 1.0, 0.3, &grid).unwrap().converged);
        }
        assert!(convergence_rate_check(ModelFamily::Egp3, 2.0, 0.5, &[1e3, 1e4]).is_err());
        assert!(convergence_rate_check(ModelFamily::Egp3, 2.0, 0.5, &[1e3, 1e5, 1e4]).is_err());
    }

    #[test]
    fn power_s_function() {
        let spec = SFunctionSpec::power(2.0, 0.5, 0.0).unwrap();
        spec.check_limit().unwrap();
        for (z, s) in spec.limit_trace() {
            assert!((s - 1.0).abs() < 10.0 * (1.0 - z), "{z} {s}");
        }
        assert!(SFunctionSpec::power(2.0, -0.3, 0.5).is_err());
        assert!(SFunctionSpec::power(2.0, 0.0, 0.0).is_err());
        assert!(SFunctionSpec::power(2.0, -0.3, 0.0).is_ok());
    }

    #[test]
    fn fv_reproduces_power_law() {
        let grid: Vec<f64> = (0..=40).map(|i| i as f64 / 40.0 * (1.0 - 1e-6)).collect();
        for (k, xi) in [(1.0, 0.5), (2.0, 0.5), (0.5, 0.3), (3.0, -0.2)] {
            let spec = SFunctionSpec::power(k, xi, 0.0).unwrap();
            let fv = fv_from_s(&spec, &grid).unwrap();
            for (v, f) in grid.iter().zip(&fv) {
                assert!((f - v.powf(k)).abs() < 1e-6, "{k} {xi} {v}: {f}");
            }
            assert!(fv.windows(2).all(|w| w[1] >= w[0]));
        }
        let spec = SFunctionSpec::power(2.0, 0.5, 1.0).unwrap();
        let fv = fv_from_s(&spec, &[0.9, 0.1, 0.5, 1.0]).unwrap();
        assert!(fv[1] < fv[2] && fv[2] < fv[0] && fv[3] == 1.0);
        assert!(fv_from_s(&spec, &[1.5]).is_err());
    }

    #[test]
    fn tail_index_verdicts() {
        let r = verify_tail_index(&model(ModelFamily::Egp1, 2.0, 1.0, 0.4), 0.4);
        assert_eq!(r.verdict, Verdict::Consistent, "{r:?}");
        let r = verify_tail_index(&ModelParams::gp(1.0, -0.2).unwrap(), -0.2);
        assert_eq!(r.verdict, Verdict::Consistent);
        assert!(r.trace.iter().all(|p| (p.h_prime + 0.2).abs() < 1e-6));
        let w = WeibullComposition::new(0.5, 1.0, 1.0).unwrap();
        let r = verify_tail_index(&w, 1.0);
        assert_eq!(r.verdict, Verdict::Inconsistent);
        assert!(r.trace.windows(2).all(|p| p[1].h_prime > p[0].h_prime));
    }

    #[test]
    fn constructed_distribution_closes_the_loop() {
        let spec = SFunctionSpec::power(2.0, 0.5, 0.0).unwrap();
        let d = SFunctionDistribution::new(spec, 1.0).unwrap();
        let egp3 = model(ModelFamily::Egp3, 2.0, 1.0, 0.5);
        for x in [0.5, 3.0, 40.0] {
            assert!((d.sf(x) - egp3.sf(x)).abs() < 1e-9 * egp3.sf(x).max(1e-3));
        }
        let u = d.isf(1e-5).unwrap();
        assert!((u - egp3.quantile(1.0 - 1e-5).unwrap()).abs() < 1e-6 * u);
        let r = verify_tail_index(&d, 0.5);
        assert_eq!(r.verdict, Verdict::Consistent, "{r:?}");
        assert_eq!(r.trace.len(), TAIL_LEVELS.len());
    }
}
