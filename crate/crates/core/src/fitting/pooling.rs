use super::{check_sample, maximise, observed_covariance, ExcessSample, FitOptions, Layout, Param};
use crate::error::{Error, Result};
use crate::models::{ModelFamily, ModelParams};
use crate::special::chi_squared_sf;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sharing {
    Shared,
    PerGroup,
}

/// How each of κ, σ and ξ is tied across groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolingScheme {
    pub kappa: Sharing,
    pub sigma: Sharing,
    pub xi: Sharing,
}

impl PoolingScheme {
    pub fn all_shared() -> Self {
        PoolingScheme { kappa: Sharing::Shared, sigma: Sharing::Shared, xi: Sharing::Shared }
    }

    pub fn all_per_group() -> Self {
        PoolingScheme { kappa: Sharing::PerGroup, sigma: Sharing::PerGroup, xi: Sharing::PerGroup }
    }

    fn has_per_group(&self) -> bool {
        [self.kappa, self.sigma, self.xi].contains(&Sharing::PerGroup)
    }

    /// Whether every parameter shared here is either shared or split in `other`.
    fn nested_in(&self, other: &PoolingScheme) -> bool {
        [(self.kappa, other.kappa), (self.sigma, other.sigma), (self.xi, other.xi)]
            .iter()
            .all(|(a, b)| !(*a == Sharing::PerGroup && *b == Sharing::Shared))
    }

    /// Number of free parameters for `groups` groups of `family`.
    pub fn n_free(&self, family: ModelFamily, groups: usize) -> usize {
        Layout::new(family, groups, self, &[]).dim()
    }
}

impl std::str::FromStr for PoolingScheme {
    type Err = Error;

    /// Parses a comma-separated list of the parameters estimated per group, e.g. `"kappa,sigma"`.
    /// The empty string and `"none"` share everything.
    fn from_str(s: &str) -> Result<Self> {
        let mut scheme = PoolingScheme::all_shared();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty() && *p != "none") {
            match part.parse::<Param>()? {
                Param::Kappa => scheme.kappa = Sharing::PerGroup,
                Param::Sigma => scheme.sigma = Sharing::PerGroup,
                Param::Xi => scheme.xi = Sharing::PerGroup,
            }
        }
        Ok(scheme)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PooledFit {
    pub family: ModelFamily,
    pub scheme: PoolingScheme,
    /// Fitted parameters for each group, in input order.
    pub groups: Vec<ModelParams>,
    pub loglik: f64,
    pub n_free: usize,
    pub param_names: Vec<String>,
    /// Free parameters on the natural scale, ordered as `param_names`.
    pub estimates: Vec<f64>,
    pub std_errors: Option<Vec<f64>>,
    pub covariance: Option<Vec<Vec<f64>>>,
    pub converged: bool,
    pub n_restarts_used: usize,
    pub n_evaluations: usize,
    pub hessian_warning: Option<String>,
}

/// Maximises the summed group log-likelihoods under a sharing pattern.
pub fn fit_pooled(
    samples: &[ExcessSample],
    family: ModelFamily,
    scheme: &PoolingScheme,
    options: &FitOptions,
) -> Result<PooledFit> {
    let mut extra = Vec::new();
    if samples.len() > 1 && scheme.has_per_group() {
        let shared = fit_pooled_with(
            samples,
            family,
            &PoolingScheme::all_shared(),
            &FitOptions { compute_covariance: false, ..options.clone() },
            &[],
        )?;
        extra.push(shared.groups);
    }
    fit_pooled_with(samples, family, scheme, options, &extra)
}

pub(crate) fn fit_pooled_with(
    samples: &[ExcessSample],
    family: ModelFamily,
    scheme: &PoolingScheme,
    options: &FitOptions,
    group_starts: &[Vec<ModelParams>],
) -> Result<PooledFit> {
    if samples.is_empty() {
        return Err(Error::domain("no groups to fit"));
    }
    for s in samples {
        check_sample(s, options)?;
    }
    if let Some(k) = options.fixed_kappa {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::domain(format!("fixed kappa must be positive, got {k}")));
        }
    }
    let fixed: Vec<(Param, f64)> = options.fixed_kappa.map(|k| (Param::Kappa, k)).into_iter().collect();
    let layout = Layout::new(family, samples.len(), scheme, &fixed);
    let xs: Vec<&[f64]> = samples.iter().map(|s| s.excesses.as_slice()).collect();

    let base_groups: Vec<ModelParams> =
        samples.iter().map(|s| ModelParams::raw(family, options.fixed_kappa.unwrap_or(1.0), s.mean_excess(), 0.0)).collect();
    let base = layout.encode(&base_groups);
    let mut extra: Vec<Vec<f64>> = options.extra_starts.iter().map(|p| layout.encode(&[*p])).collect();
    extra.extend(group_starts.iter().map(|g| layout.encode(g)));

    let out = maximise(&layout, &xs, base, &extra, options)?;
    let groups = layout.params(&out.theta).expect("optimum lies in the parameter space");
    let loglik: f64 = groups.iter().zip(&xs).map(|(p, x)| p.log_density_sum(x)).sum();
    let estimates = layout.to_natural(&out.theta);

    let (covariance, hessian_warning) = if options.compute_covariance {
        match observed_covariance(&layout, &xs, &out.theta) {
            Ok(c) => (Some(c), None),
            Err(w) => (None, Some(w)),
        }
    } else {
        (None, None)
    };
    let std_errors = covariance.as_ref().map(|c| (0..c.len()).map(|i| c[i][i].sqrt()).collect());
    Ok(PooledFit {
        family,
        scheme: *scheme,
        groups,
        loglik,
        n_free: layout.dim(),
        param_names: layout.names(),
        estimates,
        std_errors,
        covariance,
        converged: out.converged,
        n_restarts_used: out.starts,
        n_evaluations: out.evaluations,
        hessian_warning,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PoolingLrt {
    pub lambda: f64,
    pub df: usize,
    pub p_value: f64,
    pub null: PooledFit,
    pub alt: PooledFit,
}

/// Likelihood-ratio test of a pooled (null) against a less pooled (alternative) scheme.
pub fn lrt_pooling(
    samples: &[ExcessSample],
    family: ModelFamily,
    null: &PoolingScheme,
    alt: &PoolingScheme,
    options: &FitOptions,
) -> Result<PoolingLrt> {
    if !null.nested_in(alt) {
        return Err(Error::domain("the null pooling scheme must be nested in the alternative"));
    }
    let null_fit = fit_pooled(samples, family, null, options)?;
    let alt_fit = fit_pooled_with(samples, family, alt, options, &[null_fit.groups.clone()])?;
    let df = alt_fit.n_free.saturating_sub(null_fit.n_free);
    let lambda = (2.0 * (alt_fit.loglik - null_fit.loglik)).max(0.0);
    let p_value = if df == 0 { 1.0 } else { chi_squared_sf(lambda, df as f64) };
    Ok(PoolingLrt { lambda, df, p_value, null: null_fit, alt: alt_fit })
}
