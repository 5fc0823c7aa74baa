//! Monte Carlo comparison of GP and EGP return-level estimators over a threshold grid.

use crate::error::{Error, Result};
use crate::fitting::{fit_mle, ExcessSample, FitOptions};
use crate::inference::return_level;
use crate::models::{ModelFamily, ModelParams};
use crate::rng::{rng_from_seed, split_seed};
use crate::special::{normal_quantile_raw, std_normal_quantile};
use rand::distributions::Open01;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Fewest exceedances a replicate needs at a threshold before it is fitted.
pub const MIN_EXCEEDANCES: usize = 5;

/// Distribution the replicates are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Parent {
    Normal,
    Model(ModelParams),
}

impl Parent {
    pub fn quantile(&self, p: f64) -> Result<f64> {
        match self {
            Parent::Normal => std_normal_quantile(p),
            Parent::Model(m) => m.quantile(p),
        }
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        match self {
            Parent::Normal => (0..n).map(|_| normal_quantile_raw(rng.sample(Open01))).collect(),
            Parent::Model(m) => m.sample_with(n, rng),
        }
    }
}

impl fmt::Display for Parent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Parent::Normal => f.write_str("normal"),
            Parent::Model(m) => write!(f, "{}(kappa={}, sigma={}, xi={})", m.family, m.kappa, m.sigma, m.xi),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub parent: Parent,
    /// Sample size of each replicate.
    pub n: usize,
    pub n_reps: usize,
    pub n_thresholds: usize,
    pub families: Vec<ModelFamily>,
    /// Return periods as multiples of `n`.
    pub t_ratios: Vec<f64>,
    pub master_seed: u64,
    /// Jittered restarts per fit, on top of the default and warm starts.
    pub n_restarts: usize,
    /// Explicit threshold grid; when absent the grid spans the parent quantiles at `1/n` and `1 - 30/n`.
    pub thresholds: Option<Vec<f64>>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            parent: Parent::Normal,
            n: 100,
            n_reps: 500,
            n_thresholds: 20,
            families: vec![ModelFamily::Gp, ModelFamily::Egp1, ModelFamily::Egp2],
            t_ratios: vec![1.5, 5.0],
            master_seed: 1,
            n_restarts: 1,
            thresholds: None,
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_reps == 0 {
            return Err(Error::Config("n_reps must be at least 1".into()));
        }
        if self.families.is_empty() {
            return Err(Error::Config("at least one family is required".into()));
        }
        if self.t_ratios.is_empty() || self.t_ratios.iter().any(|r| !(r.is_finite() && r * self.n as f64 > 1.0)) {
            return Err(Error::Config("every T/n ratio must give a return period above 1".into()));
        }
        if let Some(g) = &self.thresholds {
            if g.is_empty() || g.iter().any(|u| !u.is_finite()) {
                return Err(Error::Config("explicit thresholds must be finite and nonempty".into()));
            }
        }
        Ok(())
    }

    /// Thresholds the study will use.
    pub fn grid(&self) -> Result<Vec<f64>> {
        match &self.thresholds {
            Some(g) => Ok(g.clone()),
            None => parent_grid(&self.parent, self.n, self.n_thresholds),
        }
    }
}

fn linspace(a: f64, b: f64, count: usize) -> Vec<f64> {
    let step = (b - a) / (count - 1) as f64;
    (0..count).map(|i| if i + 1 == count { b } else { a + step * i as f64 }).collect()
}

fn parent_grid(parent: &Parent, n: usize, count: usize) -> Result<Vec<f64>> {
    if n <= 30 {
        return Err(Error::domain(format!("the threshold grid needs n > 30, got {n}")));
    }
    if count < 2 {
        return Err(Error::domain(format!("the threshold grid needs at least 2 points, got {count}")));
    }
    let lo = parent.quantile(1.0 / n as f64)?;
    let hi = parent.quantile(1.0 - 30.0 / n as f64)?;
    Ok(linspace(lo, hi, count))
}

/// `count` equally spaced thresholds from `Φ^{-1}(1/n)` to `Φ^{-1}(1 - 30/n)`.
pub fn build_threshold_grid(n: usize, count: usize) -> Result<Vec<f64>> {
    parent_grid(&Parent::Normal, n, count)
}

/// The parent quantile at `1 - 1/T`.
pub fn true_return_level(parent: &Parent, t: f64) -> Result<f64> {
    if !(t > 1.0) {
        return Err(Error::domain(format!("the return period must exceed 1, got {t}")));
    }
    parent.quantile(1.0 - 1.0 / t)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RmseCell {
    pub threshold: f64,
    pub family: ModelFamily,
    #[serde(rename = "T")]
    pub t: f64,
    pub rmse: f64,
    pub bias: f64,
    pub variance: f64,
    /// Replicates that contributed an estimate.
    pub n_fits: usize,
    pub n_failed_fits: usize,
}

/// `x̂_T` per (threshold, family, T) for one replicate; `None` marks a failure.
fn replicate(config: &StudyConfig, grid: &[f64], periods: &[f64], rep: usize) -> Vec<Option<f64>> {
    let seed = split_seed(config.master_seed, rep as u64);
    let mut rng = rng_from_seed(seed);
    let data = config.parent.sample_with(config.n, &mut rng);
    let nf = config.families.len();
    let mut out = vec![None; grid.len() * nf * periods.len()];
    let mut warm: Vec<Option<ModelParams>> = vec![None; nf];
    for (i, &u) in grid.iter().enumerate() {
        let sample = match ExcessSample::from_data(&data, u) {
            Ok(s) if s.n_u >= MIN_EXCEEDANCES => s,
            _ => continue,
        };
        for (j, &family) in config.families.iter().enumerate() {
            let options = FitOptions {
                n_restarts: config.n_restarts,
                seed: split_seed(seed, (i * nf + j) as u64),
                compute_covariance: false,
                extra_starts: warm[j].into_iter().collect(),
                ..FitOptions::default()
            };
            let fit = match fit_mle(&sample, family, &options) {
                Ok(f) => f,
                Err(_) => continue,
            };
            // shift σ to the next threshold so the warm start stays near the optimum
            let mut next = fit.params;
            if let Some(&u_next) = grid.get(i + 1) {
                next.sigma = (next.sigma + next.xi * (u_next - u)).max(1e-3 * next.sigma);
            }
            warm[j] = Some(next);
            for (k, &t) in periods.iter().enumerate() {
                out[(i * nf + j) * periods.len() + k] = return_level(&fit.params, t, sample.zeta_hat, u).ok();
            }
        }
    }
    out
}

/// Runs the study; replicates are independent and evaluated in parallel, then
/// aggregated in replicate order, so the output does not depend on scheduling.
pub fn run_study(config: &StudyConfig) -> Result<Vec<RmseCell>> {
    config.validate()?;
    let grid = config.grid()?;
    let periods: Vec<f64> = config.t_ratios.iter().map(|r| r * config.n as f64).collect();
    let truths = periods.iter().map(|&t| true_return_level(&config.parent, t)).collect::<Result<Vec<_>>>()?;
    let reps: Vec<Vec<Option<f64>>> =
        (0..config.n_reps).into_par_iter().map(|r| replicate(config, &grid, &periods, r)).collect();

    let nf = config.families.len();
    let mut cells = Vec::with_capacity(grid.len() * nf * periods.len());
    for (i, &u) in grid.iter().enumerate() {
        for (j, &family) in config.families.iter().enumerate() {
            for (k, &t) in periods.iter().enumerate() {
                let idx = (i * nf + j) * periods.len() + k;
                let est: Vec<f64> = reps.iter().filter_map(|r| r[idx]).collect();
                let m = est.len();
                let (rmse, bias, variance) = if m == 0 {
                    (f64::NAN, f64::NAN, f64::NAN)
                } else {
                    let mean = est.iter().sum::<f64>() / m as f64;
                    let variance = est.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / m as f64;
                    let mse = est.iter().map(|x| (x - truths[k]).powi(2)).sum::<f64>() / m as f64;
                    (mse.sqrt(), mean - truths[k], variance)
                };
                cells.push(RmseCell {
                    threshold: u,
                    family,
                    t,
                    rmse,
                    bias,
                    variance,
                    n_fits: m,
                    n_failed_fits: config.n_reps - m,
                });
            }
        }
    }
    Ok(cells)
}

/// Threshold of least RMSE for one family and return period; ties go to the lower threshold.
pub fn optimal_threshold(cells: &[RmseCell], family: ModelFamily, t: f64) -> Result<f64> {
    let mut rows: Vec<&RmseCell> = cells.iter().filter(|c| c.family == family && c.t == t).collect();
    if rows.is_empty() {
        return Err(Error::domain(format!("no cells for {family} at T = {t}")));
    }
    rows.sort_by(|a, b| a.threshold.total_cmp(&b.threshold));
    let mut best: Option<&RmseCell> = None;
    for c in rows.into_iter().filter(|c| c.rmse.is_finite()) {
        if best.map_or(true, |b| c.rmse < b.rmse) {
            best = Some(c);
        }
    }
    best.map(|c| c.threshold).ok_or_else(|| Error::numeric(format!("every fit failed for {family} at T = {t}")))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimalThreshold {
    pub family: ModelFamily,
    #[serde(rename = "T")]
    pub t: f64,
    pub threshold: f64,
    pub rmse: f64,
}

/// [`optimal_threshold`] for every (family, T) present in `cells`, in order of appearance.
pub fn optimal_thresholds(cells: &[RmseCell]) -> Vec<OptimalThreshold> {
    let mut keys: Vec<(ModelFamily, f64)> = Vec::new();
    for c in cells {
        if !keys.iter().any(|&(f, t)| f == c.family && t == c.t) {
            keys.push((c.family, c.t));
        }
    }
    keys.into_iter()
        .filter_map(|(family, t)| {
            let threshold = optimal_threshold(cells, family, t).ok()?;
            let rmse = cells.iter().find(|c| c.family == family && c.t == t && c.threshold == threshold)?.rmse;
            Some(OptimalThreshold { family, t, threshold, rmse })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_examples() {
        let g = build_threshold_grid(100, 20).unwrap();
        assert!((g[0] + 2.326_347_874_040_841).abs() < 1e-9);
        assert!((g[19] - 0.524_400_512_708_041).abs() < 1e-9);
        let d: Vec<f64> = g.windows(2).map(|w| w[1] - w[0]).collect();
        assert!(d.iter().all(|x| (x - d[0]).abs() < 1e-12));
        let two = build_threshold_grid(100, 2).unwrap();
        assert_eq!(two, vec![g[0], g[19]]);
        assert!(build_threshold_grid(30, 5).is_err());
        assert!(build_threshold_grid(100, 1).is_err());
    }

    #[test]
    fn truth_examples() {
        assert!(true_return_level(&Parent::Normal, 2.0).unwrap().abs() < 1e-15);
        let t = true_return_level(&Parent::Normal, 150.0).unwrap();
        assert!((t - std_normal_quantile(1.0 - 1.0 / 150.0).unwrap()).abs() < 1e-15);
        let gp = Parent::Model(ModelParams::gp(1.0, 0.5).unwrap());
        assert!((true_return_level(&gp, 4.0).unwrap() - 2.0).abs() < 1e-12);
        assert!(true_return_level(&gp, 1.0).is_err());
    }

    #[test]
    fn optimal_threshold_rules() {
        let cell = |u: f64, r: f64| RmseCell {
            threshold: u,
            family: ModelFamily::Gp,
            t: 10.0,
            rmse: r,
            bias: 0.0,
            variance: r * r,
            n_fits: 1,
            n_failed_fits: 0,
        };
        assert_eq!(optimal_threshold(&[cell(0.3, 2.0)], ModelFamily::Gp, 10.0).unwrap(), 0.3);
        let cells = [cell(1.0, 3.0), cell(2.0, 1.0), cell(3.0, 2.0)];
        assert_eq!(optimal_threshold(&cells, ModelFamily::Gp, 10.0).unwrap(), 2.0);
        let tie = [cell(3.0, 1.0), cell(1.0, 1.0)];
        assert_eq!(optimal_threshold(&tie, ModelFamily::Gp, 10.0).unwrap(), 1.0);
        assert!(optimal_threshold(&[cell(1.0, f64::NAN)], ModelFamily::Gp, 10.0).is_err());
        assert!(optimal_threshold(&cells, ModelFamily::Egp1, 10.0).is_err());
    }

    fn small_config() -> StudyConfig {
        StudyConfig { n: 200, n_reps: 12, n_thresholds: 4, t_ratios: vec![1.5], ..StudyConfig::default() }
    }

    #[test]
    fn study_is_deterministic_and_decomposes() {
        let cfg = small_config();
        let a = run_study(&cfg).unwrap();
        let b = run_study(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 4 * 3);
        for c in &a {
            assert!((c.rmse * c.rmse - c.bias * c.bias - c.variance).abs() < 1e-9 * (1.0 + c.rmse * c.rmse));
            assert_eq!(c.n_fits + c.n_failed_fits, cfg.n_reps);
        }
        let serial = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| run_study(&cfg)).unwrap();
        assert_eq!(a, serial);
    }

    #[test]
    fn sparse_thresholds_are_counted_as_failures() {
        let cfg = StudyConfig { thresholds: Some(vec![0.0, 3.5]), ..small_config() };
        let cells = run_study(&cfg).unwrap();
        let top: Vec<&RmseCell> = cells.iter().filter(|c| c.threshold == 3.5).collect();
        assert!(top.iter().all(|c| c.n_failed_fits == cfg.n_reps && c.rmse.is_nan()));
    }

    #[test]
    fn true_model_bias_shrinks() {
        let parent = Parent::Model(ModelParams::gp(1.0, 0.2).unwrap());
        let mut errs = Vec::new();
        for n in [250usize, 1000, 4000] {
            let cfg = StudyConfig {
                parent,
                n,
                n_reps: 40,
                families: vec![ModelFamily::Gp],
                t_ratios: vec![2.0],
                thresholds: Some(vec![0.0]),
                ..StudyConfig::default()
            };
            let cells = run_study(&cfg).unwrap();
            let truth = true_return_level(&parent, 2.0 * n as f64).unwrap();
            errs.push(cells[0].rmse / truth);
        }
        assert!(errs[2] < errs[0], "{errs:?}");
    }
}
