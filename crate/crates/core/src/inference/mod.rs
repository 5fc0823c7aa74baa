//! Return levels, the κ = 1 likelihood-ratio test, threshold stability and QQ diagnostics.

mod return_levels;

pub use return_levels::{
    return_level, return_level_closed_form, return_level_estimate, return_level_se, CiMethod, ReturnLevelEstimate,
};

use crate::error::{Error, Result};
use crate::fitting::{fit_mle, ExcessSample, FitOptions, FitResult, Param};
use crate::models::{ModelFamily, ModelParams};
use crate::rng::split_seed;
use crate::special::{chi_squared_sf, normal_quantile_raw};
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct LrtResult {
    pub lambda: f64,
    pub p_value: f64,
    pub fit_null: FitResult,
    pub fit_alt: FitResult,
}

/// Likelihood-ratio test of κ = 1 (GP) against a free κ in `family`.
pub fn lrt_kappa(sample: &ExcessSample, family: ModelFamily, options: &FitOptions) -> Result<LrtResult> {
    if !family.has_kappa() {
        return Err(Error::domain("the kappa test needs an EGP alternative"));
    }
    let fit_null = fit_mle(sample, ModelFamily::Gp, options)?;
    let mut alt_options = options.clone();
    let p = fit_null.params;
    alt_options.extra_starts.push(ModelParams { family, ..p });
    let fit_alt = fit_mle(sample, family, &alt_options)?;
    let lambda = (2.0 * (fit_alt.loglik - fit_null.loglik)).max(0.0);
    Ok(LrtResult { lambda, p_value: chi_squared_sf(lambda, 1.0), fit_null, fit_alt })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    fn nan() -> Self {
        Interval { lo: f64::NAN, hi: f64::NAN }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

/// Results at one threshold of a stability profile.
#[derive(Debug, Clone, Serialize)]
pub struct ThresholdEntry {
    pub u: f64,
    pub n_u: usize,
    pub fit: Option<FitResult>,
    pub kappa_hat: f64,
    pub kappa_ci: Interval,
    /// Modified scale `σ̂ - ξ̂u`.
    pub sigma_star: f64,
    pub sigma_star_ci: Interval,
    pub xi_hat: f64,
    pub xi_ci: Interval,
    pub lrt_p: Option<f64>,
    pub return_levels: Vec<ReturnLevelEstimate>,
    /// Why this threshold has no estimates, if fitting failed.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdProfile {
    pub family: ModelFamily,
    pub level: f64,
    pub entries: Vec<ThresholdEntry>,
}

#[derive(Debug, Clone)]
pub struct ProfileOptions {
    pub fit: FitOptions,
    /// Confidence level for all intervals.
    pub level: f64,
    pub return_periods: Vec<f64>,
    pub return_level_method: CiMethod,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        ProfileOptions {
            fit: FitOptions::default(),
            level: 0.95,
            return_periods: Vec::new(),
            return_level_method: CiMethod::Delta,
        }
    }
}

fn wald(est: f64, se: Option<f64>, z: f64) -> Interval {
    match se {
        Some(s) if s.is_finite() => Interval { lo: est - z * s, hi: est + z * s },
        _ => Interval::nan(),
    }
}

fn profile_entry(data: &[f64], u: f64, family: ModelFamily, options: &ProfileOptions) -> ThresholdEntry {
    let n_u = data.iter().filter(|&&x| x > u).count();
    let failed = |msg: String| ThresholdEntry {
        u,
        n_u,
        fit: None,
        kappa_hat: f64::NAN,
        kappa_ci: Interval::nan(),
        sigma_star: f64::NAN,
        sigma_star_ci: Interval::nan(),
        xi_hat: f64::NAN,
        xi_ci: Interval::nan(),
        lrt_p: None,
        return_levels: Vec::new(),
        failure: Some(msg),
    };
    let sample = match ExcessSample::from_data(data, u) {
        Ok(s) => s,
        Err(e) => return failed(e.to_string()),
    };
    let (fit, lrt_p) = if family.has_kappa() {
        match lrt_kappa(&sample, family, &options.fit) {
            Ok(r) => (r.fit_alt, Some(r.p_value)),
            Err(e) => return failed(e.to_string()),
        }
    } else {
        match fit_mle(&sample, family, &options.fit) {
            Ok(f) => (f, None),
            Err(e) => return failed(e.to_string()),
        }
    };
    let z = normal_quantile_raw(0.5 + 0.5 * options.level);
    let p = fit.params;
    let kappa_ci = if family.has_kappa() {
        // Wald interval on log κ, back-transformed
        match fit.std_error(Param::Kappa) {
            Some(se) if se.is_finite() => {
                let half = z * se / p.kappa;
                Interval { lo: p.kappa * (-half).exp(), hi: p.kappa * half.exp() }
            }
            _ => Interval::nan(),
        }
    } else {
        Interval { lo: 1.0, hi: 1.0 }
    };
    let sigma_star = p.sigma - p.xi * u;
    let sigma_star_ci = match fit.covariance3() {
        Some(c) => {
            let var = c[1][1] - 2.0 * u * c[1][2] + u * u * c[2][2];
            wald(sigma_star, Some(var.max(0.0).sqrt()), z)
        }
        None => Interval::nan(),
    };
    let xi_ci = wald(p.xi, fit.std_error(Param::Xi), z);
    let return_levels = options
        .return_periods
        .iter()
        .filter_map(|&t| {
            return_level_estimate(&fit, &sample, t, options.level, options.return_level_method, &options.fit).ok()
        })
        .collect();
    ThresholdEntry {
        u,
        n_u,
        kappa_hat: p.kappa,
        kappa_ci,
        sigma_star,
        sigma_star_ci,
        xi_hat: p.xi,
        xi_ci,
        lrt_p,
        return_levels,
        fit: Some(fit),
        failure: None,
    }
}

/// Fits `family` at every threshold of `grid`. Entries whose fit fails are kept and flagged.
pub fn threshold_profile(
    data: &[f64],
    grid: &[f64],
    family: ModelFamily,
    options: &ProfileOptions,
) -> Result<ThresholdProfile> {
    if grid.is_empty() {
        return Err(Error::domain("empty threshold grid"));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::domain("threshold grid must be strictly increasing"));
    }
    let entries = grid.par_iter().map(|&u| profile_entry(data, u, family, options)).collect();
    Ok(ThresholdProfile { family, level: options.level, entries })
}

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdSelection {
    /// Selected threshold, or `None` when no grid point qualifies.
    pub threshold: Option<f64>,
    pub index: Option<usize>,
    pub alpha: f64,
    /// `(u, p-value)` for every grid point; `None` marks a failed fit.
    pub trace: Vec<(f64, Option<f64>)>,
    pub rationale: String,
}

/// Lowest threshold whose κ-test p-value is at least `alpha` there and at every higher
/// threshold. Failed grid points are neither selectable nor disqualifying.
pub fn select_threshold(profile: &ThresholdProfile, alpha: f64) -> Result<ThresholdSelection> {
    if profile.entries.is_empty() {
        return Err(Error::domain("empty threshold profile"));
    }
    let trace: Vec<(f64, Option<f64>)> = profile.entries.iter().map(|e| (e.u, e.lrt_p)).collect();
    let mut chosen = None;
    for (i, &(_, p)) in trace.iter().enumerate().rev() {
        match p {
            None => continue,
            Some(p) if p >= alpha => chosen = Some(i),
            Some(_) => break,
        }
    }
    let rationale = match chosen {
        Some(i) => format!(
            "kappa test p-value >= {alpha} at u = {} and at all {} higher grid thresholds with successful fits",
            trace[i].0,
            trace[i + 1..].iter().filter(|t| t.1.is_some()).count()
        ),
        None => "no GP-compatible threshold found".to_string(),
    };
    Ok(ThresholdSelection { threshold: chosen.map(|i| trace[i].0), index: chosen, alpha, trace, rationale })
}

#[derive(Debug, Clone, Serialize)]
pub struct QqRow {
    pub plotting_position: f64,
    pub model_quantile: f64,
    pub observed: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct QqTable {
    pub rows: Vec<QqRow>,
    pub n_boot: usize,
    pub level: f64,
    pub warning: Option<String>,
}

impl QqTable {
    /// Fraction of observed order statistics outside the tolerance band.
    pub fn exit_fraction(&self) -> f64 {
        let out = self.rows.iter().filter(|r| r.observed < r.lower || r.observed > r.upper).count();
        out as f64 / self.rows.len() as f64
    }
}

/// Sample quantile with linear interpolation between order statistics (type 7).
pub(crate) fn type7_quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// QQ table for the excesses against `params`, with pointwise tolerance bands from
/// `n_boot` parametric-bootstrap samples of the same size.
pub fn qq_data(params: &ModelParams, sample: &ExcessSample, n_boot: usize, level: f64, seed: u64) -> Result<QqTable> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::domain(format!("tolerance level must lie in (0, 1), got {level}")));
    }
    if n_boot == 0 {
        return Err(Error::domain("n_boot must be positive"));
    }
    let n = sample.n_u;
    let mut observed = sample.excesses.clone();
    observed.sort_by(f64::total_cmp);
    let boots: Vec<Vec<f64>> = (0..n_boot)
        .into_par_iter()
        .map(|b| {
            let mut xs = params.sample(n, split_seed(seed, b as u64));
            xs.sort_by(f64::total_cmp);
            xs
        })
        .collect();
    let mut rows = Vec::with_capacity(n);
    let mut column = vec![0.0; n_boot];
    for i in 0..n {
        for (c, b) in column.iter_mut().zip(&boots) {
            *c = b[i];
        }
        column.sort_by(f64::total_cmp);
        let pp = (i + 1) as f64 / (n + 1) as f64;
        rows.push(QqRow {
            plotting_position: pp,
            model_quantile: params.quantile(pp)?,
            observed: observed[i],
            lower: type7_quantile(&column, 0.5 - 0.5 * level),
            upper: type7_quantile(&column, 0.5 + 0.5 * level),
        });
    }
    let warning = (n_boot < 100).then(|| format!("n_boot = {n_boot} is below 100; tolerance bounds are unreliable"));
    Ok(QqTable { rows, n_boot, level, warning })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile_with(ps: &[Option<f64>]) -> ThresholdProfile {
        let entries = ps
            .iter()
            .enumerate()
            .map(|(i, &p)| ThresholdEntry {
                u: i as f64,
                n_u: 100,
                fit: None,
                kappa_hat: 1.0,
                kappa_ci: Interval::nan(),
                sigma_star: 1.0,
                sigma_star_ci: Interval::nan(),
                xi_hat: 0.0,
                xi_ci: Interval::nan(),
                lrt_p: p,
                return_levels: vec![],
                failure: None,
            })
            .collect();
        ThresholdProfile { family: ModelFamily::Egp3, level: 0.95, entries }
    }

    #[test]
    fn selection_rule() {
        let all_ok = profile_with(&[Some(0.5), Some(0.6), Some(0.7)]);
        assert_eq!(select_threshold(&all_ok, 0.05).unwrap().threshold, Some(0.0));
        let hand = profile_with(&[Some(0.001), Some(0.2), Some(0.3), Some(0.4)]);
        assert_eq!(select_threshold(&hand, 0.05).unwrap().index, Some(1));
        let late_fail = profile_with(&[Some(0.5), Some(0.5), Some(0.01)]);
        let sel = select_threshold(&late_fail, 0.05).unwrap();
        assert_eq!(sel.threshold, None);
        assert_eq!(sel.rationale, "no GP-compatible threshold found");
        let gap = profile_with(&[Some(0.01), Some(0.3), None, Some(0.4)]);
        assert_eq!(select_threshold(&gap, 0.05).unwrap().index, Some(1));
    }

    #[test]
    fn lrt_identity_and_power() {
        let gp = ExcessSample::from_excesses(ModelParams::gp(1.0, 0.2).unwrap().sample(300, 1)).unwrap();
        let r = lrt_kappa(&gp, ModelFamily::Egp3, &FitOptions::default()).unwrap();
        assert!(r.lambda >= 0.0 && r.p_value <= 1.0);
        assert!(r.fit_alt.loglik >= r.fit_null.loglik);
        let m = ModelParams::new(ModelFamily::Egp3, 3.0, 1.0, 0.2).unwrap();
        let e = ExcessSample::from_excesses(m.sample(1000, 2)).unwrap();
        assert!(lrt_kappa(&e, ModelFamily::Egp3, &FitOptions::default()).unwrap().p_value < 0.05);
        assert!(lrt_kappa(&e, ModelFamily::Gp, &FitOptions::default()).is_err());
    }

    #[test]
    fn profile_counts_and_failures() {
        let data: Vec<f64> = ModelParams::gp(1.0, 0.1).unwrap().sample(400, 3).iter().map(|x| x + 10.0).collect();
        let grid = [5.0, 10.5, 1e6];
        let prof = threshold_profile(&data, &grid, ModelFamily::Egp2, &ProfileOptions::default()).unwrap();
        assert_eq!(prof.entries[0].n_u, data.len());
        assert!(prof.entries[2].failure.is_some());
        assert!(prof.entries[1].failure.is_none());
        assert!(threshold_profile(&data, &[], ModelFamily::Egp2, &ProfileOptions::default()).is_err());
        assert!(threshold_profile(&data, &[2.0, 1.0], ModelFamily::Egp2, &ProfileOptions::default()).is_err());
    }

    #[test]
    fn qq_bands() {
        let m = ModelParams::gp(1.0, 0.2).unwrap();
        let s = ExcessSample::from_excesses(m.sample(200, 8)).unwrap();
        let table = qq_data(&m, &s, 200, 0.95, 1).unwrap();
        assert_eq!(table.rows.len(), 200);
        assert!(table.warning.is_none());
        assert!(table.rows.iter().all(|r| r.lower <= r.upper));
        assert!(table.exit_fraction() < 0.3);
        // the generating quantiles sit inside their own bands
        let inside = table.rows.iter().filter(|r| r.lower <= r.model_quantile && r.model_quantile <= r.upper).count();
        assert_eq!(inside, 200);
        assert!(qq_data(&m, &s, 50, 0.95, 1).unwrap().warning.is_some());
    }

    #[test]
    fn type7() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(type7_quantile(&xs, 0.0), 1.0);
        assert_eq!(type7_quantile(&xs, 1.0), 4.0);
        assert!((type7_quantile(&xs, 0.5) - 2.5).abs() < 1e-15);
    }
}
