use crate::error::{Error, Result};
use crate::fitting::simplex::nelder_mead;
use crate::fitting::{profile_interval, ExcessSample, FitOptions, FitResult, XI_MIN};
use crate::models::{ModelFamily, ModelParams, XI_SWITCH};
use crate::special::{chi_squared1_quantile, normal_quantile_raw, reg_inc_beta_inv, reg_inc_gamma_lower_inv};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CiMethod {
    Delta,
    Profile,
}

impl std::str::FromStr for CiMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "delta" => Ok(CiMethod::Delta),
            "profile" => Ok(CiMethod::Profile),
            _ => Err(Error::Config(format!("unknown interval method '{s}' (expected delta or profile)"))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReturnLevelEstimate {
    #[serde(rename = "T")]
    pub t: f64,
    pub x_t: f64,
    pub std_error: Option<f64>,
    pub ci: (f64, f64),
    pub method: CiMethod,
    /// Set when the interval could not be closed on one side.
    pub one_sided: bool,
}

fn exceedance_prob(t: f64, zeta_u: f64) -> Result<f64> {
    if !(zeta_u > 0.0 && zeta_u <= 1.0) {
        return Err(Error::domain(format!("exceedance probability must lie in (0, 1], got {zeta_u}")));
    }
    if !(t * zeta_u > 1.0) {
        return Err(Error::domain(format!("return level below threshold: T·ζ_u = {} ≤ 1", t * zeta_u)));
    }
    Ok(1.0 - 1.0 / (t * zeta_u))
}

/// `T`-observation return level `u + F⁻¹(1 - 1/(T ζ_u))`.
pub fn return_level(params: &ModelParams, t: f64, zeta_u: f64, u: f64) -> Result<f64> {
    let p = exceedance_prob(t, zeta_u)?;
    Ok(u + params.quantile(p)?)
}

/// Closed-form return levels written out family by family (ξ ≠ 0 only).
///
/// The EGP3 entry follows the `(1 - (Tζ)^{-1/κ})` form, which is not the inverse of
/// `F^κ` unless κ = 1; it is kept to document that disagreement.
pub fn return_level_closed_form(params: &ModelParams, t: f64, zeta_u: f64, u: f64) -> Result<f64> {
    let p = exceedance_prob(t, zeta_u)?;
    let (k, s, x) = (params.kappa, params.sigma, params.xi);
    if x.abs() < XI_SWITCH {
        return Err(Error::domain("closed forms are written for xi != 0"));
    }
    let bracket = match params.family {
        ModelFamily::Gp => (t * zeta_u).powf(x) - 1.0,
        ModelFamily::Egp1 => (1.0 - reg_inc_beta_inv(p, k, 1.0 / x.abs())?).powf(-x / x.abs()) - 1.0,
        ModelFamily::Egp2 => (x * reg_inc_gamma_lower_inv(p, k)?).exp() - 1.0,
        ModelFamily::Egp3 => (1.0 - (1.0 - (t * zeta_u).powf(-1.0 / k))).powf(-x) - 1.0,
    };
    Ok(u + s / x * bracket)
}

/// Central-difference gradient of `x_T` with respect to `(κ, σ, ξ)`.
fn return_level_gradient(params: &ModelParams, t: f64, zeta_u: f64, cov: &[[f64; 3]; 3]) -> Result<[f64; 3]> {
    let base = [params.kappa, params.sigma, params.xi];
    let mut g = [0.0; 3];
    for i in 0..3 {
        if cov[i][i] == 0.0 {
            continue;
        }
        let h = 1e-5 * base[i].abs().max(if i == 2 { 0.1 } else { 1e-3 });
        let at = |delta: f64| -> Result<f64> {
            let mut v = base;
            v[i] += delta;
            let m = ModelParams::new(params.family, v[0], v[1], v[2])?;
            return_level(&m, t, zeta_u, 0.0)
        };
        g[i] = (at(h)? - at(-h)?) / (2.0 * h);
    }
    Ok(g)
}

/// Delta-method standard error of the return level.
pub fn return_level_se(fit: &FitResult, t: f64, zeta_u: f64, u: f64) -> Result<f64> {
    let cov = fit
        .covariance3()
        .ok_or_else(|| Error::numeric("return-level standard error needs the fit covariance"))?;
    return_level(&fit.params, t, zeta_u, u)?;
    if cov.iter().flatten().all(|&c| c == 0.0) {
        return Ok(0.0);
    }
    let g = return_level_gradient(&fit.params, t, zeta_u, &cov)?;
    let mut var = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            var += g[i] * cov[i][j] * g[j];
        }
    }
    Ok(var.max(0.0).sqrt())
}

/// Return level with a delta-method or profile-likelihood interval at `level`.
pub fn return_level_estimate(
    fit: &FitResult,
    sample: &ExcessSample,
    t: f64,
    level: f64,
    method: CiMethod,
    options: &FitOptions,
) -> Result<ReturnLevelEstimate> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::domain(format!("confidence level must lie in (0, 1), got {level}")));
    }
    let zeta = sample.zeta_hat;
    let u = sample.threshold;
    let x_t = return_level(&fit.params, t, zeta, u)?;
    let se = return_level_se(fit, t, zeta, u).ok();
    match method {
        CiMethod::Delta => {
            let z = normal_quantile_raw(0.5 + 0.5 * level);
            let (ci, one_sided) = match se {
                Some(s) => ((x_t - z * s, x_t + z * s), false),
                None => ((f64::NAN, f64::NAN), true),
            };
            Ok(ReturnLevelEstimate { t, x_t, std_error: se, ci, method, one_sided })
        }
        CiMethod::Profile => {
            let iv = profile_return_level(fit, sample, t, level, se, options)?;
            Ok(ReturnLevelEstimate {
                t,
                x_t,
                std_error: se,
                ci: (u + iv.lower, u + iv.upper),
                method,
                one_sided: iv.one_sided(),
            })
        }
    }
}

/// Profile likelihood for `ψ = x_T - u`, with σ eliminated as `ψ / q₁(κ, ξ)` where
/// `q₁` is the unit-scale quantile at the target probability.
fn profile_return_level(
    fit: &FitResult,
    sample: &ExcessSample,
    t: f64,
    level: f64,
    se: Option<f64>,
    options: &FitOptions,
) -> Result<crate::fitting::ProfileInterval> {
    let p = exceedance_prob(t, sample.zeta_hat)?;
    let family = fit.params.family;
    let free_kappa = fit.param_names.iter().any(|n| n == "kappa");
    let fixed_kappa = fit.params.kappa;
    let psi_hat = fit.params.quantile(p)?;
    let cutoff = fit.loglik - 0.5 * chi_squared1_quantile(level)?;
    let xs = &sample.excesses;

    let loglik = |psi: f64, theta: &[f64]| -> f64 {
        let (kappa, xi) = if free_kappa { (theta[0].exp(), theta[1]) } else { (fixed_kappa, theta[0]) };
        if !(kappa.is_finite() && kappa > 0.0 && xi > XI_MIN && xi.is_finite()) {
            return f64::NEG_INFINITY;
        }
        let unit = ModelParams::raw(family, kappa, 1.0, xi);
        let q1 = match unit.quantile(p) {
            Ok(q) if q > 0.0 && q.is_finite() => q,
            _ => return f64::NEG_INFINITY,
        };
        let sigma = psi / q1;
        if !(sigma > 0.0 && sigma.is_finite()) {
            return f64::NEG_INFINITY;
        }
        ModelParams::raw(family, kappa, sigma, xi).log_density_sum(xs)
    };
    let mut warm: Vec<f64> =
        if free_kappa { vec![fit.params.kappa.ln(), fit.params.xi] } else { vec![fit.params.xi] };
    let steps: Vec<f64> = if free_kappa { vec![0.2, 0.1] } else { vec![0.1] };
    let prof = |psi: f64| -> Option<f64> {
        // fall back to heavier-tailed starts when the warm start cannot reach the largest excess
        let xi_at = warm.len() - 1;
        let start = [None, Some(0.0), Some(0.5), Some(1.0)]
            .iter()
            .map(|xi| {
                let mut s = warm.clone();
                if let Some(x) = xi {
                    s[xi_at] = s[xi_at].max(*x);
                }
                s
            })
            .find(|s| loglik(psi, s).is_finite())?;
        let first = nelder_mead(|th| -loglik(psi, th), &start, &steps, options.tol, options.max_evals);
        let second = nelder_mead(|th| -loglik(psi, th), &first.x, &steps, options.tol, options.max_evals);
        let v = -second.value;
        if v.is_finite() {
            warm = second.x;
            Some(v)
        } else {
            None
        }
    };
    let step0 = match se {
        Some(s) if s > 0.0 && s.is_finite() => 0.5 * s / psi_hat,
        _ => 0.1,
    };
    Ok(profile_interval(psi_hat, cutoff, true, step0, level, prof))
}
