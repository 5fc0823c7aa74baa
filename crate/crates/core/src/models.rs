//! The generalised Pareto distribution and its three extensions.
//!
//! Each EGP model is the GP quantile function applied to a unit-interval
//! variable `V` with distribution `F_V(·; κ)`:
//!
//! | family | `F_V(v)`                                  |
//! |--------|-------------------------------------------|
//! | GP     | `v`                                       |
//! | EGP1   | `β{1 - (1-v)^{|ξ|}; κ, 1/|ξ|}`            |
//! | EGP2   | `γ{-log(1-v); κ}`                         |
//! | EGP3   | `v^κ`                                     |
//!
//! Internally all kernels are written in terms of the GP cumulative hazard
//! `y = log(1 + ξx/σ)/ξ`, so that `1 - F_GP(x) = e^{-y}` is available without
//! cancellation in either tail.

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::special::{
    inc_beta_pair, inc_gamma_pair, ln_beta_raw, ln_gamma_raw, reg_inc_beta_inv, reg_inc_gamma_lower_inv,
};
use rand::distributions::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Below this |ξ| the exponential-limit branches are used.
pub const XI_SWITCH: f64 = 1e-6;

/// `ln(1 - e^{-y})` for `y > 0`, accurate at both ends.
fn ln_one_minus_exp(y: f64) -> f64 {
    if y < std::f64::consts::LN_2 {
        (-(-y).exp_m1()).ln()
    } else {
        (-(-y).exp()).ln_1p()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelFamily {
    #[serde(rename = "GP")]
    Gp,
    #[serde(rename = "EGP1")]
    Egp1,
    #[serde(rename = "EGP2")]
    Egp2,
    #[serde(rename = "EGP3")]
    Egp3,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 4] = [ModelFamily::Gp, ModelFamily::Egp1, ModelFamily::Egp2, ModelFamily::Egp3];

    /// Whether κ is a free parameter.
    pub fn has_kappa(self) -> bool {
        self != ModelFamily::Gp
    }

    pub fn n_params(self) -> usize {
        if self.has_kappa() {
            3
        } else {
            2
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelFamily::Gp => "GP",
            ModelFamily::Egp1 => "EGP1",
            ModelFamily::Egp2 => "EGP2",
            ModelFamily::Egp3 => "EGP3",
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "GP" | "GPD" => Ok(ModelFamily::Gp),
            "EGP1" => Ok(ModelFamily::Egp1),
            "EGP2" => Ok(ModelFamily::Egp2),
            "EGP3" => Ok(ModelFamily::Egp3),
            _ => Err(Error::Config(format!("unknown model family '{s}' (expected GP, EGP1, EGP2 or EGP3)"))),
        }
    }
}

/// Upper end point of the support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SupportBound {
    /// `σ/|ξ|` for ξ < 0, otherwise `+∞`.
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub family: ModelFamily,
    pub kappa: f64,
    pub sigma: f64,
    pub xi: f64,
}

impl ModelParams {
    pub fn new(family: ModelFamily, kappa: f64, sigma: f64, xi: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::domain(format!("kappa must be positive and finite, got {kappa}")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::domain(format!("sigma must be positive and finite, got {sigma}")));
        }
        if !xi.is_finite() {
            return Err(Error::domain(format!("xi must be finite, got {xi}")));
        }
        if family == ModelFamily::Gp && kappa != 1.0 {
            return Err(Error::domain(format!("the GP family has kappa fixed at 1, got {kappa}")));
        }
        Ok(ModelParams { family, kappa, sigma, xi })
    }

    pub fn gp(sigma: f64, xi: f64) -> Result<Self> {
        Self::new(ModelFamily::Gp, 1.0, sigma, xi)
    }

    /// Unchecked constructor for optimiser internals; callers guarantee validity.
    pub(crate) fn raw(family: ModelFamily, kappa: f64, sigma: f64, xi: f64) -> Self {
        ModelParams { family, kappa, sigma, xi }
    }

    pub fn support(&self) -> SupportBound {
        SupportBound { upper: if self.xi < 0.0 { self.sigma / -self.xi } else { f64::INFINITY } }
    }

    fn limit_branch(&self) -> bool {
        self.xi.abs() < XI_SWITCH
    }

    /// GP cumulative hazard `-log(1 - F_GP(x))` for `0 ≤ x < upper`.
    fn cum_hazard(&self, x: f64) -> f64 {
        if self.limit_branch() {
            x / self.sigma
        } else {
            (self.xi * x / self.sigma).ln_1p() / self.xi
        }
    }

    /// Inverse of [`Self::cum_hazard`].
    fn from_cum_hazard(&self, y: f64) -> f64 {
        if self.limit_branch() {
            self.sigma * y
        } else {
            self.sigma * (self.xi * y).exp_m1() / self.xi
        }
    }

    /// `(F(x), 1 - F(x))` for a point strictly inside the support.
    fn cdf_pair_interior(&self, y: f64) -> (f64, f64) {
        let k = self.kappa;
        match self.family {
            _ if k == 1.0 => {
                let s = (-y).exp();
                (-(-y).exp_m1(), s)
            }
            ModelFamily::Gp => unreachable!("GP always has kappa = 1"),
            ModelFamily::Egp3 => {
                let ln_f = k * ln_one_minus_exp(y);
                (ln_f.exp(), -ln_f.exp_m1())
            }
            ModelFamily::Egp2 => inc_gamma_pair(y, k),
            ModelFamily::Egp1 if self.limit_branch() => inc_gamma_pair(y, k),
            ModelFamily::Egp1 => {
                let a = self.xi.abs();
                let w = -(-a * y).exp_m1();
                inc_beta_pair(w, (-a * y).exp(), k, 1.0 / a)
            }
        }
    }

    /// `(F(x), 1 - F(x))`, total on the real line.
    pub fn cdf_pair(&self, x: f64) -> (f64, f64) {
        if x.is_nan() {
            return (f64::NAN, f64::NAN);
        }
        if x <= 0.0 {
            return (0.0, 1.0);
        }
        if x >= self.support().upper {
            return (1.0, 0.0);
        }
        self.cdf_pair_interior(self.cum_hazard(x))
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.cdf_pair(x).0
    }

    /// Survival function `1 - F(x)`, accurate far into the upper tail.
    pub fn sf(&self, x: f64) -> f64 {
        self.cdf_pair(x).1
    }

    /// Log-density; `-∞` outside the support.
    pub fn log_density(&self, x: f64) -> f64 {
        if !(x >= 0.0) || x >= self.support().upper {
            return f64::NEG_INFINITY;
        }
        let y = self.cum_hazard(x);
        let ln_g = -self.sigma.ln() - (1.0 + self.xi) * y;
        ln_g + self.ln_fv_density(y)
    }

    pub fn density(&self, x: f64) -> f64 {
        self.log_density(x).exp()
    }

    /// `ln f_V(v)` expressed through `y = -log(1 - v)`.
    fn ln_fv_density(&self, y: f64) -> f64 {
        self.ln_fv_const() + self.ln_fv_var(y)
    }

    /// The parameter-only part of `ln f_V`, hoisted out of likelihood loops.
    pub(crate) fn ln_fv_const(&self) -> f64 {
        let k = self.kappa;
        if k == 1.0 {
            return 0.0;
        }
        match self.family {
            ModelFamily::Gp => 0.0,
            ModelFamily::Egp3 => k.ln(),
            ModelFamily::Egp2 => -ln_gamma_raw(k),
            ModelFamily::Egp1 if self.limit_branch() => -ln_gamma_raw(k),
            ModelFamily::Egp1 => {
                let a = self.xi.abs();
                a.ln() - ln_beta_raw(k, 1.0 / a)
            }
        }
    }

    pub(crate) fn ln_fv_var(&self, y: f64) -> f64 {
        let k = self.kappa;
        if k == 1.0 {
            return 0.0;
        }
        match self.family {
            ModelFamily::Gp => 0.0,
            ModelFamily::Egp3 => (k - 1.0) * ln_one_minus_exp(y),
            ModelFamily::Egp2 => (k - 1.0) * y.ln(),
            ModelFamily::Egp1 if self.limit_branch() => (k - 1.0) * y.ln(),
            ModelFamily::Egp1 => (k - 1.0) * ln_one_minus_exp(self.xi.abs() * y),
        }
    }

    /// `d/dy ln f_V` in the cumulative-hazard coordinate.
    fn ln_fv_var_slope(&self, y: f64) -> f64 {
        let k = self.kappa;
        if k == 1.0 {
            return 0.0;
        }
        match self.family {
            ModelFamily::Gp => 0.0,
            ModelFamily::Egp3 => (k - 1.0) / y.exp_m1(),
            ModelFamily::Egp2 => (k - 1.0) / y,
            ModelFamily::Egp1 if self.limit_branch() => (k - 1.0) / y,
            ModelFamily::Egp1 => {
                let a = self.xi.abs();
                (k - 1.0) * a / (a * y).exp_m1()
            }
        }
    }

    /// Closed-form derivative of the reciprocal hazard `h(x) = (1 - F(x))/f(x)`.
    ///
    /// Writing `r(y)` for the reciprocal hazard of the cumulative-hazard variable,
    /// `h'(x) = ξ r + r'(y)`, so `h'(x) - ξ` keeps absolute accuracy near machine precision
    /// even where a finite difference of `h` would not.
    pub fn reciprocal_hazard_slope(&self, x: f64) -> Result<f64> {
        if !(x > 0.0 && x < self.support().upper) {
            return Err(Error::domain(format!("x = {x} is not interior to the support")));
        }
        let y = self.cum_hazard(x);
        let xi = if self.limit_branch() { 0.0 } else { self.xi };
        let sf = self.cdf_pair_interior(y).1;
        let r = (sf.ln() - self.ln_fv_density(y) + y).exp();
        let slope = (1.0 + xi) * r - 1.0 - r * self.ln_fv_var_slope(y);
        if sf > 0.0 && slope.is_finite() {
            Ok(slope)
        } else {
            Err(Error::numeric(format!("reciprocal hazard is not evaluable at x = {x}")))
        }
    }

    /// Sum of log-densities; `-∞` as soon as one point leaves the support.
    pub(crate) fn log_density_sum(&self, xs: &[f64]) -> f64 {
        let upper = self.support().upper;
        let mut total = xs.len() as f64 * (self.ln_fv_const() - self.sigma.ln());
        for &x in xs {
            if !(x >= 0.0) || x >= upper {
                return f64::NEG_INFINITY;
            }
            let y = self.cum_hazard(x);
            total += self.ln_fv_var(y) - (1.0 + self.xi) * y;
        }
        total
    }

    /// Generator distribution `F_V(v)` on the unit interval.
    pub fn fv_cdf(&self, v: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::domain(format!("fv_cdf requires 0 <= v <= 1, got {v}")));
        }
        if v == 0.0 {
            return Ok(0.0);
        }
        if v == 1.0 {
            return Ok(1.0);
        }
        Ok(self.cdf_pair_interior(-(-v).ln_1p()).0)
    }

    /// Inverse of [`Self::fv_cdf`], returned as `y = -log(1 - v)` to keep upper-tail digits.
    fn fv_quantile_hazard(&self, p: f64) -> Result<f64> {
        let k = self.kappa;
        if k == 1.0 {
            return Ok(-(-p).ln_1p());
        }
        match self.family {
            ModelFamily::Gp => Ok(-(-p).ln_1p()),
            ModelFamily::Egp3 => Ok(-ln_one_minus_exp(-p.ln() / k)),
            ModelFamily::Egp2 => reg_inc_gamma_lower_inv(p, k),
            ModelFamily::Egp1 if self.limit_branch() => reg_inc_gamma_lower_inv(p, k),
            ModelFamily::Egp1 => {
                let a = self.xi.abs();
                let b = 1.0 / a;
                if p > 0.5 {
                    let one_minus_w = reg_inc_beta_inv(1.0 - p, b, k)?;
                    Ok(-one_minus_w.ln() / a)
                } else {
                    let w = reg_inc_beta_inv(p, k, b)?;
                    Ok(-(-w).ln_1p() / a)
                }
            }
        }
    }

    /// Inverse of [`Self::fv_cdf`].
    pub fn fv_quantile(&self, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::domain(format!("fv_quantile requires 0 <= p <= 1, got {p}")));
        }
        if p == 0.0 || p == 1.0 {
            return Ok(p);
        }
        Ok(-(-self.fv_quantile_hazard(p)?).exp_m1())
    }

    /// Quantile function. `p = 1` is allowed only when the support is bounded.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::domain(format!("quantile requires 0 <= p <= 1, got {p}")));
        }
        if p == 0.0 {
            return Ok(0.0);
        }
        if p == 1.0 {
            let upper = self.support().upper;
            if upper.is_finite() {
                return Ok(upper);
            }
            return Err(Error::domain("quantile at p = 1 is infinite for xi >= 0"));
        }
        let y = self.fv_quantile_hazard(p)?;
        Ok(self.from_cum_hazard(y).min(self.support().upper))
    }

    /// `n` independent draws by inverse transform, deterministic in `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rng_from_seed(seed);
        self.sample_with(n, &mut rng)
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        (0..n)
            .map(|_| {
                let u: f64 = rng.sample(Open01);
                self.quantile(u).expect("quantile is total on (0, 1) for valid parameters")
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;
    use crate::special::reg_inc_beta;
    use proptest::prelude::*;

    fn p(f: ModelFamily, k: f64, s: f64, x: f64) -> ModelParams {
        ModelParams::new(f, k, s, x).unwrap()
    }

    #[test]
    fn family_parsing() {
        assert_eq!("egp2".parse::<ModelFamily>().unwrap(), ModelFamily::Egp2);
        assert_eq!("GP".parse::<ModelFamily>().unwrap(), ModelFamily::Gp);
        assert!("EGP4".parse::<ModelFamily>().is_err());
        assert!(ModelParams::new(ModelFamily::Gp, 2.0, 1.0, 0.1).is_err());
        assert!(ModelParams::new(ModelFamily::Egp1, 0.0, 1.0, 0.1).is_err());
        assert!(ModelParams::new(ModelFamily::Egp1, 1.0, -1.0, 0.1).is_err());
    }

    #[test]
    fn fv_examples() {
        assert!((p(ModelFamily::Egp3, 2.0, 1.0, 0.1).fv_cdf(0.5).unwrap() - 0.25).abs() < 1e-15);
        assert!((p(ModelFamily::Egp2, 1.0, 1.0, 0.1).fv_cdf(0.5).unwrap() - 0.5).abs() < 1e-15);
        let m = p(ModelFamily::Egp1, 1.5, 1.0, 0.5);
        let w = 1.0 - 0.7f64.sqrt();
        let lb = ln_beta_raw(1.5, 2.0);
        let oracle = integrate(|t| (0.5 * t.ln() + (1.0 - t).ln() - lb).exp(), 0.0, w, 1e-14).unwrap();
        assert!((m.fv_cdf(0.3).unwrap() - oracle).abs() < 1e-12);
        assert!(m.fv_cdf(1.3).is_err());
        assert_eq!(m.fv_cdf(0.0).unwrap(), 0.0);
        assert_eq!(m.fv_cdf(1.0).unwrap(), 1.0);
    }

    #[test]
    fn cdf_examples() {
        assert!((p(ModelFamily::Gp, 1.0, 1.0, 1.0).cdf(1.0) - 0.5).abs() < 1e-15);
        assert!((p(ModelFamily::Egp3, 2.0, 1.0, 1.0).cdf(1.0) - 0.25).abs() < 1e-15);
        // gamma(2, 1) limit, by quadrature of x e^{-x}
        let oracle = integrate(|t: f64| t * (-t).exp(), 0.0, 1.0, 1e-15).unwrap();
        assert!((p(ModelFamily::Egp2, 2.0, 1.0, 0.0).cdf(1.0) - oracle).abs() < 1e-13);
        let m = p(ModelFamily::Egp1, 2.0, 1.0, -0.5);
        assert_eq!(m.cdf(-1.0), 0.0);
        assert_eq!(m.cdf(2.0), 1.0);
        assert_eq!(m.cdf(5.0), 1.0);
    }

    #[test]
    fn log_density_examples() {
        assert!((p(ModelFamily::Gp, 1.0, 2.0, 0.0).log_density(0.0) - 0.5f64.ln()).abs() < 1e-15);
        assert!((p(ModelFamily::Egp3, 1.0, 1.0, 0.5).log_density(1.0) + 3.0 * 1.5f64.ln()).abs() < 1e-14);
        let m = p(ModelFamily::Egp1, 2.0, 1.0, 0.3);
        let h = 1e-6;
        let fd = (m.cdf(0.7 + h) - m.cdf(0.7 - h)) / (2.0 * h);
        assert!((m.density(0.7) - fd).abs() / fd < 1e-6);
        assert_eq!(m.log_density(-0.1), f64::NEG_INFINITY);
        assert_eq!(p(ModelFamily::Egp2, 2.0, 1.0, -0.5).log_density(2.5), f64::NEG_INFINITY);
    }

    #[test]
    fn egp1_matches_incomplete_beta_definition() {
        // direct composition with the public incomplete beta
        for &xi in &[-0.3, 0.4] {
            let m = p(ModelFamily::Egp1, 1.7, 1.3, xi);
            let x = 0.8;
            let v = 1.0 - (1.0 + xi * x / 1.3f64).powf(-1.0 / xi);
            let direct = reg_inc_beta(1.0 - (1.0 - v).powf(xi.abs()), 1.7, 1.0 / xi.abs()).unwrap();
            assert!((m.cdf(x) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn quantile_examples() {
        assert!((p(ModelFamily::Egp3, 2.0, 1.0, 1.0).quantile(0.25).unwrap() - 1.0).abs() < 1e-12);
        assert!((p(ModelFamily::Gp, 1.0, 1.0, 0.0).quantile(0.5).unwrap() - 2f64.ln()).abs() < 1e-15);
        let m = p(ModelFamily::Egp2, 2.0, 1.0, 0.2);
        let (mut lo, mut hi) = (0.0f64, 100.0f64);
        while hi - lo > 1e-12 {
            let mid = 0.5 * (lo + hi);
            if m.cdf(mid) < 0.9 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((m.quantile(0.9).unwrap() - 0.5 * (lo + hi)).abs() < 1e-9);
        assert!(p(ModelFamily::Gp, 1.0, 1.0, 0.1).quantile(1.0).is_err());
        assert_eq!(p(ModelFamily::Egp1, 2.0, 1.0, -0.25).quantile(1.0).unwrap(), 4.0);
    }

    #[test]
    fn sampling() {
        let m = p(ModelFamily::Egp3, 3.0, 1.0, -0.2);
        assert!(m.sample(0, 1).is_empty());
        let xs = m.sample(100_000, 11);
        assert!(xs.iter().all(|&x| x < 5.0 && x > 0.0));
        assert_eq!(xs[..10], m.sample(10, 11)[..]);
        let g = p(ModelFamily::Gp, 1.0, 1.0, 0.2);
        let mut ys = g.sample(100_000, 5);
        ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = ys.len() as f64;
        let ks = ys
            .iter()
            .enumerate()
            .map(|(i, &y)| {
                let c = g.cdf(y);
                (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.01, "ks = {ks}");
    }

    #[test]
    fn continuity_across_switch() {
        for fam in ModelFamily::ALL {
            let k = if fam.has_kappa() { 1.8 } else { 1.0 };
            let zero = p(fam, k, 1.0, 0.0);
            for &xi in &[1e-9, -1e-9, 2e-6, -2e-6] {
                let m = p(fam, k, 1.0, xi);
                for i in 1..50 {
                    let x = i as f64 * 0.2;
                    let tol = if xi.abs() > 1e-6 { 1e-5 } else { 1e-7 };
                    assert!((m.cdf(x) - zero.cdf(x)).abs() < tol, "{fam} xi={xi} x={x}");
                }
            }
        }
    }

    #[test]
    fn normalisation() {
        for fam in ModelFamily::ALL {
            for &xi in &[-0.4, 0.0, 0.5] {
                let k = if fam.has_kappa() { 2.5 } else { 1.0 };
                let m = p(fam, k, 1.0, xi);
                // map (0, upper) onto (0, 1) through the model's own GP transform
                let gp = p(ModelFamily::Gp, 1.0, 1.0, xi);
                let total = integrate(
                    |v| {
                        let x = gp.quantile(v).unwrap();
                        let r = m.density(x) / gp.density(x);
                        if r.is_finite() { r } else { 0.0 }
                    },
                    0.0,
                    1.0,
                    1e-10,
                )
                .unwrap();
                assert!((total - 1.0).abs() < 1e-6, "{fam} xi={xi}: {total}");
            }
        }
    }

    proptest! {
        #[test]
        fn kappa_one_reduces_to_gp(x in 0.0f64..20.0, sigma in 0.1f64..5.0, xi in -0.45f64..2.0) {
            let gp = p(ModelFamily::Gp, 1.0, sigma, xi);
            for fam in [ModelFamily::Egp1, ModelFamily::Egp2, ModelFamily::Egp3] {
                let m = p(fam, 1.0, sigma, xi);
                prop_assert!((m.cdf(x) - gp.cdf(x)).abs() < 1e-10);
                let (a, b) = (m.log_density(x), gp.log_density(x));
                prop_assert!(a == b || (a - b).abs() < 1e-10);
            }
        }

        #[test]
        fn quantile_round_trip(pr in 1e-6f64..(1.0 - 1e-6), k in 0.3f64..4.0, xi in -0.4f64..2.0, fi in 0usize..4) {
            let fam = ModelFamily::ALL[fi];
            let k = if fam.has_kappa() { k } else { 1.0 };
            let m = p(fam, k, 1.3, xi);
            let q = m.quantile(pr).unwrap();
            prop_assert!((m.cdf(q) - pr).abs() < 1e-9, "{} q={} cdf={}", fam, q, m.cdf(q));
        }

        #[test]
        fn cdf_is_monotone(x in 0.0f64..10.0, dx in 0.0f64..1.0, k in 0.3f64..4.0, xi in -0.4f64..1.0, fi in 1usize..4) {
            let m = p(ModelFamily::ALL[fi], k, 1.0, xi);
            prop_assert!(m.cdf(x + dx) >= m.cdf(x) - 1e-15);
        }
    }
}
