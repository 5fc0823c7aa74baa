//! Likelihood-based estimation for threshold excesses.
//!
//! One optimisation engine serves single-sample fits ([`fit_mle`]), fits with
//! parameters shared or split across groups ([`fit_pooled`]) and profile
//! likelihoods ([`profile_ci`]). Optimisation runs on `(log κ, log σ, ξ)`.

mod pooling;
mod profile;
pub(crate) mod simplex;

pub use pooling::{fit_pooled, lrt_pooling, PooledFit, PoolingLrt, PoolingScheme, Sharing};
pub use profile::{profile_ci, ProfileInterval};
pub(crate) use profile::profile_interval;

use crate::error::{Error, Result};
use crate::models::{ModelFamily, ModelParams};
use crate::rng::rng_from_seed;
use nalgebra::DMatrix;
use rand::Rng;
use serde::Serialize;
use simplex::nelder_mead;

/// Exceedances of a threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExcessSample {
    pub threshold: f64,
    /// `x_i - u` for every observation above `u`.
    pub excesses: Vec<f64>,
    pub n_u: usize,
    pub n_total: usize,
    /// Empirical exceedance probability `n_u / n_total`.
    pub zeta_hat: f64,
}

impl ExcessSample {
    pub fn new(threshold: f64, excesses: Vec<f64>, n_total: usize) -> Result<Self> {
        if excesses.is_empty() {
            return Err(Error::domain(format!("no exceedances of threshold {threshold}")));
        }
        if let Some(bad) = excesses.iter().find(|&&e| !(e > 0.0 && e.is_finite())) {
            return Err(Error::domain(format!("excesses must be positive and finite, found {bad}")));
        }
        if n_total < excesses.len() {
            return Err(Error::domain("n_total is smaller than the number of exceedances"));
        }
        let n_u = excesses.len();
        Ok(ExcessSample { threshold, excesses, n_u, n_total, zeta_hat: n_u as f64 / n_total as f64 })
    }

    /// Excesses of `data` over `u`; observations equal to `u` do not exceed it.
    pub fn from_data(data: &[f64], u: f64) -> Result<Self> {
        let excesses: Vec<f64> = data.iter().filter(|&&x| x > u).map(|&x| x - u).collect();
        Self::new(u, excesses, data.len())
    }

    /// A sample of excesses already measured from a threshold at 0, with every observation exceeding it.
    pub fn from_excesses(excesses: Vec<f64>) -> Result<Self> {
        let n = excesses.len();
        Self::new(0.0, excesses, n)
    }

    pub fn mean_excess(&self) -> f64 {
        self.excesses.iter().sum::<f64>() / self.n_u as f64
    }

    pub fn max_excess(&self) -> f64 {
        self.excesses.iter().cloned().fold(0.0, f64::max)
    }
}

/// Log-likelihood of `params` for the excesses in `sample`.
pub fn log_likelihood(params: &ModelParams, sample: &ExcessSample) -> Result<f64> {
    if sample.excesses.is_empty() {
        return Err(Error::domain("log-likelihood of an empty sample"));
    }
    Ok(params.log_density_sum(&sample.excesses))
}

/// Identifies one of the three model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Param {
    Kappa,
    Sigma,
    Xi,
}

impl Param {
    fn index(self) -> usize {
        match self {
            Param::Kappa => 0,
            Param::Sigma => 1,
            Param::Xi => 2,
        }
    }

    pub fn name(self) -> &'static str {
        ["kappa", "sigma", "xi"][self.index()]
    }
}

impl std::str::FromStr for Param {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kappa" => Ok(Param::Kappa),
            "sigma" => Ok(Param::Sigma),
            "xi" => Ok(Param::Xi),
            _ => Err(Error::Config(format!("unknown parameter '{s}' (expected kappa, sigma or xi)"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Jittered restarts in addition to the default start.
    pub n_restarts: usize,
    pub seed: u64,
    /// Simplex diameter at convergence, in the transformed coordinates.
    pub tol: f64,
    /// Function evaluations allowed per simplex run.
    pub max_evals: usize,
    pub min_exceedances: usize,
    /// Additional starting points tried before the jittered restarts.
    pub extra_starts: Vec<ModelParams>,
    /// Hold κ at a fixed value instead of estimating it.
    pub fixed_kappa: Option<f64>,
    pub compute_covariance: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            n_restarts: 5,
            seed: 0,
            tol: 1e-8,
            max_evals: 5000,
            min_exceedances: 5,
            extra_starts: Vec::new(),
            fixed_kappa: None,
            compute_covariance: true,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub params: ModelParams,
    pub loglik: f64,
    /// Names of the estimated parameters, in the order used by `std_errors` and `covariance`.
    pub param_names: Vec<String>,
    pub std_errors: Option<Vec<f64>>,
    /// Inverse observed information on the natural scale.
    pub covariance: Option<Vec<Vec<f64>>>,
    pub converged: bool,
    pub n_restarts_used: usize,
    pub n_evaluations: usize,
    /// Set when the observed information is not positive definite.
    pub hessian_warning: Option<String>,
}

impl FitResult {
    /// Standard error of one parameter, if it was estimated and the covariance is available.
    pub fn std_error(&self, which: Param) -> Option<f64> {
        let i = self.param_names.iter().position(|n| n == which.name())?;
        self.std_errors.as_ref().map(|se| se[i])
    }

    /// Covariance embedded in the full `(κ, σ, ξ)` space, with zero rows for fixed parameters.
    pub fn covariance3(&self) -> Option<[[f64; 3]; 3]> {
        let cov = self.covariance.as_ref()?;
        let idx: Vec<usize> = self
            .param_names
            .iter()
            .map(|n| match n.as_str() {
                "kappa" => 0,
                "sigma" => 1,
                _ => 2,
            })
            .collect();
        let mut out = [[0.0; 3]; 3];
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                out[i][j] = cov[a][b];
            }
        }
        Some(out)
    }
}

/// Maximum-likelihood fit of one family to one sample.
pub fn fit_mle(sample: &ExcessSample, family: ModelFamily, options: &FitOptions) -> Result<FitResult> {
    let scheme = PoolingScheme::all_shared();
    let pooled = pooling::fit_pooled_with(std::slice::from_ref(sample), family, &scheme, options, &[])?;
    let params = pooled.groups[0];
    let loglik = log_likelihood(&params, sample)?;
    Ok(FitResult {
        params,
        loglik,
        param_names: pooled.param_names,
        std_errors: pooled.std_errors,
        covariance: pooled.covariance,
        converged: pooled.converged,
        n_restarts_used: pooled.n_restarts_used,
        n_evaluations: pooled.n_evaluations,
        hessian_warning: pooled.hessian_warning,
    })
}

/// Recomputes the observed-information covariance of an existing fit.
pub fn standard_errors(fit: &FitResult, sample: &ExcessSample) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let fixed: Vec<(Param, f64)> = if fit.param_names.iter().any(|n| n == "kappa") {
        Vec::new()
    } else {
        vec![(Param::Kappa, fit.params.kappa)]
    };
    let layout = Layout::new(fit.params.family, 1, &PoolingScheme::all_shared(), &fixed);
    let theta = layout.encode(&[fit.params]);
    let samples = [sample.excesses.as_slice()];
    match observed_covariance(&layout, &samples, &theta) {
        Ok(cov) => Ok((cov.iter().enumerate().map(|(i, r)| r[i].sqrt()).collect(), cov)),
        Err(msg) => Err(Error::numeric(msg)),
    }
}

/// Lower bound on ξ; below −1 the likelihood is unbounded at the end point.
pub(crate) const XI_MIN: f64 = -1.0;

#[derive(Debug, Clone, Copy)]
enum Slot {
    Fixed(f64),
    Shared(usize),
    PerGroup(usize),
}

/// Maps a free coordinate vector onto per-group parameters.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    family: ModelFamily,
    groups: usize,
    slots: [Slot; 3],
    dim: usize,
}

impl Layout {
    pub(crate) fn new(family: ModelFamily, groups: usize, scheme: &PoolingScheme, fixed: &[(Param, f64)]) -> Self {
        let sharing = [scheme.kappa, scheme.sigma, scheme.xi];
        let mut slots = [Slot::Fixed(1.0); 3];
        let mut dim = 0;
        for (i, slot) in slots.iter_mut().enumerate() {
            let fixed_here = match fixed.iter().find(|(p, _)| p.index() == i) {
                Some(&(_, v)) => Some(v),
                None if i == 0 && !family.has_kappa() => Some(1.0),
                None => None,
            };
            *slot = match (fixed_here, sharing[i]) {
                (Some(v), _) => Slot::Fixed(v),
                (None, Sharing::Shared) => {
                    dim += 1;
                    Slot::Shared(dim - 1)
                }
                (None, Sharing::PerGroup) => {
                    dim += groups;
                    Slot::PerGroup(dim - groups)
                }
            };
        }
        Layout { family, groups, slots, dim }
    }

    pub(crate) fn dim(&self) -> usize {
        self.dim
    }

    fn is_log(coord_param: usize) -> bool {
        coord_param < 2
    }

    /// Parameter index (κ = 0, σ = 1, ξ = 2) of each free coordinate.
    fn coord_params(&self) -> Vec<usize> {
        let mut out = vec![0; self.dim];
        for (i, slot) in self.slots.iter().enumerate() {
            match *slot {
                Slot::Fixed(_) => {}
                Slot::Shared(k) => out[k] = i,
                Slot::PerGroup(k) => out[k..k + self.groups].iter_mut().for_each(|o| *o = i),
            }
        }
        out
    }

    pub(crate) fn names(&self) -> Vec<String> {
        let base = ["kappa", "sigma", "xi"];
        let mut out = vec![String::new(); self.dim];
        for (i, slot) in self.slots.iter().enumerate() {
            match *slot {
                Slot::Fixed(_) => {}
                Slot::Shared(k) => out[k] = base[i].to_string(),
                Slot::PerGroup(k) => {
                    for g in 0..self.groups {
                        out[k + g] = format!("{}[{g}]", base[i]);
                    }
                }
            }
        }
        out
    }

    fn value(&self, i: usize, g: usize, theta: &[f64]) -> f64 {
        let raw = match self.slots[i] {
            Slot::Fixed(v) => return v,
            Slot::Shared(k) => theta[k],
            Slot::PerGroup(k) => theta[k + g],
        };
        if Self::is_log(i) {
            raw.exp()
        } else {
            raw
        }
    }

    /// Group parameters, or `None` when θ lies outside the parameter space.
    pub(crate) fn params(&self, theta: &[f64]) -> Option<Vec<ModelParams>> {
        (0..self.groups)
            .map(|g| {
                let (k, s, x) = (self.value(0, g, theta), self.value(1, g, theta), self.value(2, g, theta));
                let ok = k > 0.0 && k.is_finite() && s > 0.0 && s.is_finite() && x > XI_MIN && x.is_finite();
                ok.then(|| ModelParams::raw(self.family, k, s, x))
            })
            .collect()
    }

    /// Free coordinates for the given group parameters; shared slots take the group average.
    pub(crate) fn encode(&self, groups: &[ModelParams]) -> Vec<f64> {
        let mut theta = vec![0.0; self.dim];
        let get = |p: &ModelParams, i: usize| -> f64 {
            let v = [p.kappa, p.sigma, p.xi][i];
            if Self::is_log(i) {
                v.ln()
            } else {
                v
            }
        };
        let pick = |g: usize| &groups[g.min(groups.len() - 1)];
        for (i, slot) in self.slots.iter().enumerate() {
            match *slot {
                Slot::Fixed(_) => {}
                Slot::Shared(k) => {
                    theta[k] = (0..self.groups).map(|g| get(pick(g), i)).sum::<f64>() / self.groups as f64;
                }
                Slot::PerGroup(k) => {
                    for g in 0..self.groups {
                        theta[k + g] = get(pick(g), i);
                    }
                }
            }
        }
        theta
    }

    pub(crate) fn loglik(&self, samples: &[&[f64]], theta: &[f64]) -> f64 {
        match self.params(theta) {
            None => f64::NEG_INFINITY,
            Some(ps) => ps.iter().zip(samples).map(|(p, xs)| p.log_density_sum(xs)).sum(),
        }
    }

    fn to_natural(&self, theta: &[f64]) -> Vec<f64> {
        self.coord_params().iter().zip(theta).map(|(&i, &t)| if Self::is_log(i) { t.exp() } else { t }).collect()
    }

    fn from_natural(&self, nat: &[f64]) -> Option<Vec<f64>> {
        self.coord_params()
            .iter()
            .zip(nat)
            .map(|(&i, &v)| {
                if Self::is_log(i) {
                    (v > 0.0).then(|| v.ln())
                } else {
                    Some(v)
                }
            })
            .collect()
    }

    fn simplex_steps(&self) -> Vec<f64> {
        self.coord_params().iter().map(|&i| if i == 2 { 0.1 } else { 0.2 }).collect()
    }
}

pub(crate) struct EngineOutcome {
    pub theta: Vec<f64>,
    pub loglik: f64,
    pub converged: bool,
    pub starts: usize,
    pub evaluations: usize,
}

/// Multi-start simplex maximisation of the log-likelihood.
pub(crate) fn maximise(
    layout: &Layout,
    samples: &[&[f64]],
    base: Vec<f64>,
    extra: &[Vec<f64>],
    options: &FitOptions,
) -> Result<EngineOutcome> {
    let objective = |t: &[f64]| -layout.loglik(samples, t);
    let steps = layout.simplex_steps();
    let coord_params = layout.coord_params();
    let mut rng = rng_from_seed(options.seed);

    let mut starts: Vec<Vec<f64>> = vec![base.clone()];
    starts.extend(extra.iter().cloned());
    for _ in 0..options.n_restarts {
        let mut s: Vec<f64> = base
            .iter()
            .zip(&coord_params)
            .map(|(&b, &i)| if i == 2 { b + rng.gen_range(-0.3..0.3) } else { b + rng.gen_range(0.5f64..1.5).ln() })
            .collect();
        // move ξ toward zero until the start is feasible
        let mut tries = 0;
        while !layout.loglik(samples, &s).is_finite() && tries < 60 {
            for (v, &i) in s.iter_mut().zip(&coord_params) {
                if i == 2 {
                    *v *= 0.5;
                }
            }
            tries += 1;
        }
        starts.push(s);
    }

    let mut best: Option<EngineOutcome> = None;
    let mut evaluations = 0;
    let mut best_value = f64::NEG_INFINITY;
    for start in &starts {
        if !layout.loglik(samples, start).is_finite() {
            continue;
        }
        let first = nelder_mead(objective, start, &steps, options.tol, options.max_evals);
        let second = nelder_mead(objective, &first.x, &steps, options.tol, options.max_evals);
        evaluations += first.evaluations + second.evaluations;
        let ll = -second.value;
        if ll > best_value || best.is_none() {
            best_value = ll;
            best = Some(EngineOutcome { theta: second.x, loglik: ll, converged: second.converged, starts: 0, evaluations: 0 });
        }
    }
    match best {
        Some(mut b) if b.loglik.is_finite() => {
            if !b.converged {
                return Err(Error::Fit {
                    message: format!("simplex did not converge within {} evaluations", options.max_evals),
                    best_loglik: Some(b.loglik),
                });
            }
            b.starts = starts.len();
            b.evaluations = evaluations;
            Ok(b)
        }
        _ => Err(Error::Fit { message: "no feasible starting point".into(), best_loglik: None }),
    }
}

/// Inverse of the negative Hessian of the log-likelihood on the natural scale.
pub(crate) fn observed_covariance(
    layout: &Layout,
    samples: &[&[f64]],
    theta: &[f64],
) -> std::result::Result<Vec<Vec<f64>>, String> {
    let nat = layout.to_natural(theta);
    let d = nat.len();
    let f = |x: &[f64]| -> f64 {
        match layout.from_natural(x) {
            Some(t) => layout.loglik(samples, &t),
            None => f64::NEG_INFINITY,
        }
    };
    let h: Vec<f64> = nat.iter().map(|v| 5e-4 * v.abs().max(0.05)).collect();
    let f0 = f(&nat);
    let mut hess = DMatrix::<f64>::zeros(d, d);
    let shifted = |moves: &[(usize, f64)]| -> f64 {
        let mut x = nat.clone();
        for &(i, s) in moves {
            x[i] += s * h[i];
        }
        f(&x)
    };
    for i in 0..d {
        let v = (shifted(&[(i, 1.0)]) - 2.0 * f0 + shifted(&[(i, -1.0)])) / (h[i] * h[i]);
        hess[(i, i)] = v;
        for j in 0..i {
            let v = (shifted(&[(i, 1.0), (j, 1.0)]) - shifted(&[(i, 1.0), (j, -1.0)]) - shifted(&[(i, -1.0), (j, 1.0)])
                + shifted(&[(i, -1.0), (j, -1.0)]))
                / (4.0 * h[i] * h[j]);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    if hess.iter().any(|v| !v.is_finite()) {
        return Err("Hessian has non-finite entries (estimate on or near the support boundary)".into());
    }
    let info = -hess;
    let chol = info
        .cholesky()
        .ok_or_else(|| "observed information is not positive definite; covariance omitted".to_string())?;
    let cov = chol.inverse();
    Ok((0..d).map(|i| (0..d).map(|j| 0.5 * (cov[(i, j)] + cov[(j, i)])).collect()).collect())
}

pub(crate) fn check_sample(sample: &ExcessSample, options: &FitOptions) -> Result<()> {
    if sample.n_u < options.min_exceedances {
        return Err(Error::Fit {
            message: format!(
                "{} exceedances of u = {} is below the minimum of {}",
                sample.n_u, sample.threshold, options.min_exceedances
            ),
            best_loglik: None,
        });
    }
    let first = sample.excesses[0];
    if sample.excesses.iter().all(|&e| e == first) {
        return Err(Error::Fit { message: "degenerate sample: all excesses are equal".into(), best_loglik: None });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gp_sample(n: usize, sigma: f64, xi: f64, seed: u64) -> ExcessSample {
        ExcessSample::from_excesses(ModelParams::gp(sigma, xi).unwrap().sample(n, seed)).unwrap()
    }

    #[test]
    fn sample_construction() {
        let s = ExcessSample::from_data(&[1.0, 5.0, 3.0, 7.0], 4.0).unwrap();
        assert_eq!(s.excesses, vec![1.0, 3.0]);
        assert_eq!((s.n_u, s.n_total), (2, 4));
        assert_eq!(s.zeta_hat, 0.5);
        assert!(ExcessSample::from_data(&[1.0, 2.0], 5.0).is_err());
        assert!(ExcessSample::new(0.0, vec![1.0, -1.0], 3).is_err());
    }

    #[test]
    fn loglik_examples() {
        let s = ExcessSample::from_excesses(vec![1.0, 2.0]).unwrap();
        assert!((log_likelihood(&ModelParams::gp(1.0, 0.0).unwrap(), &s).unwrap() + 3.0).abs() < 1e-15);
        let t = ExcessSample::from_excesses(vec![0.5, 1.0, 1.5]).unwrap();
        let m = ModelParams::new(ModelFamily::Egp1, 2.0, 1.0, 0.3).unwrap();
        let h = 1e-6;
        let fd: f64 = t.excesses.iter().map(|&x| ((m.cdf(x + h) - m.cdf(x - h)) / (2.0 * h)).ln()).sum();
        assert!((log_likelihood(&m, &t).unwrap() - fd).abs() < 1e-6);
        let g = ModelParams::gp(1.3, 0.2).unwrap();
        let e3 = ModelParams::new(ModelFamily::Egp3, 1.0, 1.3, 0.2).unwrap();
        assert_eq!(log_likelihood(&g, &t).unwrap(), log_likelihood(&e3, &t).unwrap());
        let neg = ModelParams::gp(1.0, -1.0).unwrap();
        assert_eq!(log_likelihood(&neg, &t).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn gp_recovery() {
        let s = gp_sample(5000, 1.0, 0.2, 3);
        let fit = fit_mle(&s, ModelFamily::Gp, &FitOptions::default()).unwrap();
        assert!(fit.converged);
        let se_s = fit.std_error(Param::Sigma).unwrap();
        let se_x = fit.std_error(Param::Xi).unwrap();
        assert!((fit.params.sigma - 1.0).abs() < 3.0 * se_s);
        assert!((fit.params.xi - 0.2).abs() < 3.0 * se_x);
        // asymptotic SE(ξ̂) = (1 + ξ)/√n
        let asym = 1.2 / (5000f64).sqrt();
        assert!((se_x / asym - 1.0).abs() < 0.15, "{se_x} vs {asym}");
        assert_eq!(fit.loglik, log_likelihood(&fit.params, &s).unwrap());
    }

    #[test]
    fn egp3_recovery_and_nesting() {
        let m = ModelParams::new(ModelFamily::Egp3, 3.0, 1.0, -0.1).unwrap();
        let s = ExcessSample::from_excesses(m.sample(5000, 8)).unwrap();
        let fit = fit_mle(&s, ModelFamily::Egp3, &FitOptions::default()).unwrap();
        let se_k = fit.std_error(Param::Kappa).unwrap();
        assert!((fit.params.kappa - 3.0).abs() < 3.0 * se_k, "{} ± {se_k}", fit.params.kappa);
        assert!(fit.params.xi >= 0.0 || s.max_excess() < fit.params.sigma / -fit.params.xi);
        let gp = fit_mle(&s, ModelFamily::Gp, &FitOptions::default()).unwrap();
        assert!(fit.loglik >= gp.loglik);
    }

    #[test]
    fn scale_equivariance() {
        let s = gp_sample(800, 1.0, 0.1, 4);
        let doubled = ExcessSample::from_excesses(s.excesses.iter().map(|x| 2.0 * x).collect()).unwrap();
        let a = fit_mle(&s, ModelFamily::Gp, &FitOptions::default()).unwrap();
        let b = fit_mle(&doubled, ModelFamily::Gp, &FitOptions::default()).unwrap();
        assert!((b.params.sigma / a.params.sigma - 2.0).abs() < 1e-5);
        assert!((b.params.xi - a.params.xi).abs() < 1e-6);
        let ratio = b.std_error(Param::Sigma).unwrap() / a.std_error(Param::Sigma).unwrap();
        assert!((ratio - 2.0).abs() < 1e-3);
        assert!((b.std_error(Param::Xi).unwrap() / a.std_error(Param::Xi).unwrap() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn deterministic_and_fixed_kappa() {
        let s = gp_sample(300, 2.0, 0.3, 5);
        let opts = FitOptions { seed: 17, ..FitOptions::default() };
        let a = fit_mle(&s, ModelFamily::Egp2, &opts).unwrap();
        let b = fit_mle(&s, ModelFamily::Egp2, &opts).unwrap();
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
        let fixed = fit_mle(&s, ModelFamily::Egp2, &FitOptions { fixed_kappa: Some(1.0), ..opts.clone() }).unwrap();
        let gp = fit_mle(&s, ModelFamily::Gp, &opts).unwrap();
        assert_eq!(fixed.params.sigma, gp.params.sigma);
        assert_eq!(fixed.params.xi, gp.params.xi);
        assert_eq!(fixed.param_names, vec!["sigma", "xi"]);
    }

    #[test]
    fn fit_errors() {
        let tiny = ExcessSample::from_excesses(vec![1.0, 2.0, 3.0]).unwrap();
        assert!(matches!(fit_mle(&tiny, ModelFamily::Gp, &FitOptions::default()), Err(Error::Fit { .. })));
        let flat = ExcessSample::from_excesses(vec![1.0; 10]).unwrap();
        assert!(matches!(fit_mle(&flat, ModelFamily::Egp1, &FitOptions::default()), Err(Error::Fit { .. })));
    }

    #[test]
    fn standard_errors_recomputed() {
        let s = gp_sample(1000, 1.0, 0.2, 6);
        let fit = fit_mle(&s, ModelFamily::Egp1, &FitOptions::default()).unwrap();
        let (se, cov) = standard_errors(&fit, &s).unwrap();
        assert_eq!(se, fit.std_errors.clone().unwrap());
        assert_eq!(cov.len(), 3);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(cov[i][j], cov[j][i]);
            }
        }
    }

    #[test]
    fn gradient_self_consistency() {
        // central differences at two step sizes agree, so the Hessian machinery sees a smooth surface
        let s = gp_sample(400, 1.0, 0.2, 9);
        let m = ModelParams::new(ModelFamily::Egp1, 1.4, 0.9, 0.25).unwrap();
        let ll = |k: f64, sg: f64, x: f64| {
            log_likelihood(&ModelParams::new(ModelFamily::Egp1, k, sg, x).unwrap(), &s).unwrap()
        };
        let base = [m.kappa, m.sigma, m.xi];
        for i in 0..3 {
            let grad = |h: f64| {
                let mut up = base;
                let mut dn = base;
                up[i] += h;
                dn[i] -= h;
                (ll(up[0], up[1], up[2]) - ll(dn[0], dn[1], dn[2])) / (2.0 * h)
            };
            let (g1, g2) = (grad(1e-4), grad(1e-5));
            assert!((g1 - g2).abs() <= 1e-5 * g1.abs().max(1.0), "component {i}: {g1} vs {g2}");
        }
    }
}
