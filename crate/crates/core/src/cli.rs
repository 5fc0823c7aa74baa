//! Subcommand implementations behind the `egp` binary.
//!
//! Each command turns a resolved [`RunConfig`] into its primary output bytes plus
//! optional SVG and human-readable summary lines, so callers decide where they go.

use crate::error::{Error, Result};
use crate::fitting::{fit_mle, fit_pooled, ExcessSample, FitOptions, FitResult, PoolingScheme};
use crate::inference::{
    lrt_kappa, qq_data, return_level_estimate, select_threshold, threshold_profile, CiMethod, ProfileOptions,
};
use crate::io::{fmt_f64, fmt_opt, read_dataset, svg, to_json, ColumnSelector, Dataset, GridSpec, ReadOptions, RunConfig, Table};
use crate::models::{ModelFamily, ModelParams};
use crate::penultimate::penultimate_table;
use crate::simulation::{optimal_thresholds, run_study, RmseCell, StudyConfig};
use rayon::prelude::*;
use serde::Serialize;

pub const DEFAULT_BOOT: usize = 200;
pub const DEFAULT_RESTARTS: usize = 5;
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Fit,
    Stability,
    ReturnLevels,
    Lrt,
    Qq,
    Penultimate,
    RmseStudy,
    Simulate,
}

#[derive(Debug, Clone, Default)]
pub struct CommandOutput {
    pub primary: Vec<u8>,
    pub svg: Option<String>,
    /// Notes for the user, kept out of the primary output.
    pub summary: Vec<String>,
}

pub fn run(command: Command, config: &RunConfig) -> Result<CommandOutput> {
    match command {
        Command::Fit => cmd_fit(config),
        Command::Stability => cmd_stability(config),
        Command::ReturnLevels => cmd_return_levels(config),
        Command::Lrt => cmd_lrt(config),
        Command::Qq => cmd_qq(config),
        Command::Penultimate => cmd_penultimate(config),
        Command::RmseStudy => cmd_rmse_study(config),
        Command::Simulate => cmd_simulate(config),
    }
}

pub fn load_dataset(config: &RunConfig) -> Result<Dataset> {
    let parse = |s: &Option<String>| s.as_deref().map(str::parse::<ColumnSelector>).transpose();
    let options = ReadOptions { column: parse(&config.column)?, group: parse(&config.group)?, has_header: config.header };
    read_dataset(config.require_data()?, &options)
}

fn fit_options(config: &RunConfig, default_restarts: usize) -> Result<FitOptions> {
    if let Some(k) = config.fixed_kappa {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::Config(format!("fixed_kappa must be positive, got {k}")));
        }
    }
    Ok(FitOptions {
        n_restarts: config.restarts.unwrap_or(default_restarts),
        seed: config.seed.unwrap_or(DEFAULT_SEED),
        fixed_kappa: config.fixed_kappa,
        ..FitOptions::default()
    })
}

fn method(config: &RunConfig) -> Result<CiMethod> {
    config.method.as_deref().map_or(Ok(CiMethod::Delta), str::parse)
}

#[derive(Debug, Clone, Serialize)]
pub struct SampleSummary {
    pub threshold: f64,
    pub n_u: usize,
    pub n_total: usize,
    pub zeta_hat: f64,
    pub mean_excess: f64,
    pub max_excess: f64,
}

impl From<&ExcessSample> for SampleSummary {
    fn from(s: &ExcessSample) -> Self {
        SampleSummary {
            threshold: s.threshold,
            n_u: s.n_u,
            n_total: s.n_total,
            zeta_hat: s.zeta_hat,
            mean_excess: s.mean_excess(),
            max_excess: s.max_excess(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Estimates {
    pub kappa: f64,
    pub sigma: f64,
    pub xi: f64,
}

impl From<&ModelParams> for Estimates {
    fn from(p: &ModelParams) -> Self {
        Estimates { kappa: p.kappa, sigma: p.sigma, xi: p.xi }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub family: ModelFamily,
    pub fixed_kappa: Option<f64>,
    pub sample: SampleSummary,
    pub estimates: Estimates,
    pub param_names: Vec<String>,
    /// Standard errors in `param_names` order.
    pub std_errors: Option<Vec<f64>>,
    pub loglik: f64,
    pub converged: bool,
    pub n_restarts_used: usize,
    pub n_evaluations: usize,
    pub hessian_warning: Option<String>,
}

impl FitReport {
    pub fn new(fit: &FitResult, sample: &ExcessSample, fixed_kappa: Option<f64>) -> Self {
        FitReport {
            family: fit.params.family,
            fixed_kappa,
            sample: sample.into(),
            estimates: (&fit.params).into(),
            param_names: fit.param_names.clone(),
            std_errors: fit.std_errors.clone(),
            loglik: fit.loglik,
            converged: fit.converged,
            n_restarts_used: fit.n_restarts_used,
            n_evaluations: fit.n_evaluations,
            hessian_warning: fit.hessian_warning.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupReport {
    pub group: String,
    pub sample: SampleSummary,
    pub estimates: Estimates,
}

#[derive(Debug, Clone, Serialize)]
pub struct PooledReport {
    pub family: ModelFamily,
    pub fixed_kappa: Option<f64>,
    pub scheme: PoolingScheme,
    pub groups: Vec<GroupReport>,
    pub param_names: Vec<String>,
    pub estimates: Vec<f64>,
    pub std_errors: Option<Vec<f64>>,
    pub loglik: f64,
    pub n_free: usize,
    pub converged: bool,
    pub n_restarts_used: usize,
    pub n_evaluations: usize,
    pub hessian_warning: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FitOutput {
    Single(FitReport),
    Pooled(PooledReport),
}

fn cmd_fit(config: &RunConfig) -> Result<CommandOutput> {
    let family = config.family(ModelFamily::Egp1)?;
    let u = config.require_threshold()?;
    let options = fit_options(config, DEFAULT_RESTARTS)?;
    let data = load_dataset(config)?;
    let report = if data.groups.is_some() {
        let grouped = data.grouped();
        let samples = grouped.iter().map(|(_, v)| ExcessSample::from_data(v, u)).collect::<Result<Vec<_>>>()?;
        let scheme: PoolingScheme = config.pooling.as_deref().unwrap_or("").parse()?;
        let fit = fit_pooled(&samples, family, &scheme, &options)?;
        FitOutput::Pooled(PooledReport {
            family,
            fixed_kappa: config.fixed_kappa,
            scheme,
            groups: grouped
                .iter()
                .zip(&samples)
                .zip(&fit.groups)
                .map(|(((g, _), s), p)| GroupReport { group: g.clone(), sample: s.into(), estimates: p.into() })
                .collect(),
            param_names: fit.param_names,
            estimates: fit.estimates,
            std_errors: fit.std_errors,
            loglik: fit.loglik,
            n_free: fit.n_free,
            converged: fit.converged,
            n_restarts_used: fit.n_restarts_used,
            n_evaluations: fit.n_evaluations,
            hessian_warning: fit.hessian_warning,
        })
    } else {
        if config.pooling.is_some() {
            return Err(Error::Config("--pooling needs a --group column".into()));
        }
        let sample = ExcessSample::from_data(&data.values, u)?;
        let fit = fit_mle(&sample, family, &options)?;
        FitOutput::Single(FitReport::new(&fit, &sample, config.fixed_kappa))
    };
    Ok(CommandOutput { primary: to_json(&report)?, ..CommandOutput::default() })
}

pub const STABILITY_COLUMNS: [&str; 12] = [
    "u", "n_u", "kappa_hat", "kappa_lo", "kappa_hi", "sigma_star", "sigma_star_lo", "sigma_star_hi", "xi_hat", "xi_lo",
    "xi_hi", "lrt_p",
];

fn thresholds(config: &RunConfig, data: &[f64]) -> Result<Vec<f64>> {
    config.grid_spec()?.resolve(data)
}

fn cmd_stability(config: &RunConfig) -> Result<CommandOutput> {
    let family = config.family(ModelFamily::Egp1)?;
    let level = config.level()?;
    let alpha = config.alpha()?;
    let options = ProfileOptions { fit: fit_options(config, DEFAULT_RESTARTS)?, level, ..ProfileOptions::default() };
    let data = load_dataset(config)?;
    let grid = thresholds(config, &data.values)?;
    let profile = threshold_profile(&data.values, &grid, family, &options)?;
    let mut table = Table::new(&STABILITY_COLUMNS);
    let mut summary = Vec::new();
    for e in &profile.entries {
        table.push(vec![
            fmt_f64(e.u),
            e.n_u.to_string(),
            fmt_f64(e.kappa_hat),
            fmt_f64(e.kappa_ci.lo),
            fmt_f64(e.kappa_ci.hi),
            fmt_f64(e.sigma_star),
            fmt_f64(e.sigma_star_ci.lo),
            fmt_f64(e.sigma_star_ci.hi),
            fmt_f64(e.xi_hat),
            fmt_f64(e.xi_ci.lo),
            fmt_f64(e.xi_ci.hi),
            fmt_opt(e.lrt_p),
        ]);
        if let Some(f) = &e.failure {
            summary.push(format!("fit failed at u = {}: {f}", e.u));
        }
    }
    let selection = if family.has_kappa() && config.fixed_kappa.is_none() {
        let s = select_threshold(&profile, alpha)?;
        summary.push(match s.threshold {
            Some(u) => format!("recommended threshold: {u} ({})", s.rationale),
            None => format!("recommended threshold: none ({})", s.rationale),
        });
        Some(s)
    } else {
        None
    };
    let svg = config.svg.as_ref().map(|_| svg::stability_svg(&profile, selection.as_ref()));
    Ok(CommandOutput { primary: table.to_csv()?, svg, summary })
}

pub const RETURN_LEVEL_COLUMNS: [&str; 9] = ["u", "n_u", "family", "T", "x_T", "se", "lo", "hi", "flag"];

fn cmd_return_levels(config: &RunConfig) -> Result<CommandOutput> {
    let families = config.families(&[ModelFamily::Gp, ModelFamily::Egp1])?;
    let periods = config.return_periods()?;
    let level = config.level()?;
    let method = method(config)?;
    let options = fit_options(config, DEFAULT_RESTARTS)?;
    let data = load_dataset(config)?;
    let grid = thresholds(config, &data.values)?;
    let jobs: Vec<(f64, ModelFamily)> = grid.iter().flat_map(|&u| families.iter().map(move |&f| (u, f))).collect();
    let blocks: Vec<(Vec<Vec<String>>, Option<String>)> = jobs
        .par_iter()
        .map(|&(u, family)| {
            let n_u = data.values.iter().filter(|&&x| x > u).count();
            let row = |t: f64, est: [String; 4], flag: &str| {
                let [x, se, lo, hi] = est;
                vec![fmt_f64(u), n_u.to_string(), family.to_string(), fmt_f64(t), x, se, lo, hi, flag.to_string()]
            };
            let blank = || [String::new(), String::new(), String::new(), String::new()];
            let fitted = ExcessSample::from_data(&data.values, u).and_then(|s| fit_mle(&s, family, &options).map(|f| (s, f)));
            let (sample, fit) = match fitted {
                Ok(v) => v,
                Err(e) => {
                    let note = format!("{family} fit failed at u = {u}: {e}");
                    return (periods.iter().map(|&t| row(t, blank(), "fit_failed")).collect(), Some(note));
                }
            };
            let rows = periods
                .iter()
                .map(|&t| {
                    if t * sample.zeta_hat <= 1.0 {
                        return row(t, blank(), "t_zeta_le_1");
                    }
                    match return_level_estimate(&fit, &sample, t, level, method, &options) {
                        Ok(r) => row(
                            t,
                            [fmt_f64(r.x_t), fmt_opt(r.std_error), fmt_f64(r.ci.0), fmt_f64(r.ci.1)],
                            if r.one_sided { "one_sided" } else { "ok" },
                        ),
                        Err(_) => row(t, blank(), "fit_failed"),
                    }
                })
                .collect();
            (rows, None)
        })
        .collect();
    let mut table = Table::new(&RETURN_LEVEL_COLUMNS);
    let mut summary = Vec::new();
    for (rows, note) in blocks {
        rows.into_iter().for_each(|r| table.push(r));
        summary.extend(note);
    }
    Ok(CommandOutput { primary: table.to_csv()?, svg: None, summary })
}

#[derive(Debug, Clone, Serialize)]
pub struct LrtReport {
    pub family: ModelFamily,
    pub sample: SampleSummary,
    pub lambda: f64,
    pub df: usize,
    pub p_value: f64,
    pub null: FitReport,
    pub alternative: FitReport,
}

fn cmd_lrt(config: &RunConfig) -> Result<CommandOutput> {
    let family = config.family(ModelFamily::Egp1)?;
    if !family.has_kappa() {
        return Err(Error::Config("lrt needs an EGP family as the alternative".into()));
    }
    if config.fixed_kappa.is_some() {
        return Err(Error::Config("lrt estimates kappa; drop --fixed-kappa".into()));
    }
    let u = config.require_threshold()?;
    let options = fit_options(config, DEFAULT_RESTARTS)?;
    let data = load_dataset(config)?;
    let sample = ExcessSample::from_data(&data.values, u)?;
    let r = lrt_kappa(&sample, family, &options)?;
    let report = LrtReport {
        family,
        sample: (&sample).into(),
        lambda: r.lambda,
        df: 1,
        p_value: r.p_value,
        null: FitReport::new(&r.fit_null, &sample, None),
        alternative: FitReport::new(&r.fit_alt, &sample, None),
    };
    Ok(CommandOutput { primary: to_json(&report)?, ..CommandOutput::default() })
}

pub const QQ_COLUMNS: [&str; 5] = ["plotting_position", "model_quantile", "observed", "lower", "upper"];

fn cmd_qq(config: &RunConfig) -> Result<CommandOutput> {
    let family = config.family(ModelFamily::Egp1)?;
    let u = config.require_threshold()?;
    let level = config.level()?;
    let boot = config.boot.unwrap_or(DEFAULT_BOOT);
    let options = fit_options(config, DEFAULT_RESTARTS)?;
    let data = load_dataset(config)?;
    let sample = ExcessSample::from_data(&data.values, u)?;
    let fit = fit_mle(&sample, family, &options)?;
    let qq = qq_data(&fit.params, &sample, boot, level, options.seed)?;
    let mut table = Table::new(&QQ_COLUMNS);
    for r in &qq.rows {
        table.push(vec![fmt_f64(r.plotting_position), fmt_f64(r.model_quantile), fmt_f64(r.observed), fmt_f64(r.lower), fmt_f64(r.upper)]);
    }
    let mut summary = vec![format!(
        "{family} at u = {u}: {:.1}% of order statistics outside the {level} tolerance band",
        100.0 * qq.exit_fraction()
    )];
    summary.extend(qq.warning.clone());
    let svg = config.svg.as_ref().map(|_| svg::qq_svg(&qq, &format!("{family} QQ, u = {u}")));
    Ok(CommandOutput { primary: table.to_csv()?, svg, summary })
}

pub const PENULTIMATE_COLUMNS: [&str; 14] = [
    "family", "kappa", "sigma", "xi", "n", "u_n", "u_n_exact", "h_prime_leading", "h_prime_corrected", "h_prime_exact",
    "next_order", "A", "D", "E",
];

fn cmd_penultimate(config: &RunConfig) -> Result<CommandOutput> {
    let families = config.families(&[ModelFamily::Egp1, ModelFamily::Egp2, ModelFamily::Egp3])?;
    let kappas = config.kappa.clone().unwrap_or_else(|| vec![0.5, 2.0]);
    let xis = config.xi.clone().unwrap_or_else(|| vec![-0.2, 0.0, 0.5]);
    let ns = config.n.clone().unwrap_or_else(|| vec![1e4, 1e6]);
    let sigma = config.sigma.unwrap_or(1.0);
    let mut jobs = Vec::new();
    for &f in &families {
        for &k in &kappas {
            for &x in &xis {
                for &n in &ns {
                    jobs.push((f, if f.has_kappa() { k } else { 1.0 }, x, n));
                }
            }
        }
    }
    // reject bad parameters before the (parallel) evaluation
    for &(f, k, x, n) in &jobs {
        ModelParams::new(f, k, sigma, x).map_err(|e| Error::Config(e.to_string()))?;
        if !(n >= 2.0 && n.is_finite()) {
            return Err(Error::Config(format!("n must be at least 2, got {n}")));
        }
    }
    let rows = jobs.par_iter().map(|&(f, k, x, n)| penultimate_table(f, k, sigma, x, n)).collect::<Result<Vec<_>>>()?;
    let mut table = Table::new(&PENULTIMATE_COLUMNS);
    for r in rows {
        let c = r.constants;
        table.push(vec![
            r.family.to_string(),
            fmt_f64(r.kappa),
            fmt_f64(r.sigma),
            fmt_f64(r.xi),
            fmt_f64(r.n),
            fmt_f64(r.u_n),
            fmt_f64(r.u_n_exact),
            fmt_f64(r.h_prime_leading),
            fmt_f64(r.h_prime_corrected),
            fmt_f64(r.h_prime_exact),
            fmt_f64(r.next_order),
            fmt_opt(c.map(|c| c.a)),
            fmt_opt(c.map(|c| c.d)),
            fmt_opt(c.map(|c| c.e)),
        ]);
    }
    Ok(CommandOutput { primary: table.to_csv()?, ..CommandOutput::default() })
}

pub const RMSE_COLUMNS: [&str; 9] = ["n", "threshold", "family", "T", "rmse", "bias", "variance", "n_fits", "n_failed_fits"];

/// Study configuration for sample size `n` built from the run options.
pub fn study_config(config: &RunConfig, n: usize) -> Result<StudyConfig> {
    let defaults = StudyConfig::default();
    let thresholds = match &config.grid {
        None => None,
        Some(g) => match g.parse::<GridSpec>()? {
            GridSpec::Explicit(v) => Some(v),
            GridSpec::Quantiles { .. } => {
                return Err(Error::Config("rmse-study takes an explicit grid or --n-thresholds".into()))
            }
        },
    };
    let study = StudyConfig {
        parent: config.parent()?,
        n,
        n_reps: config.reps.unwrap_or(defaults.n_reps),
        n_thresholds: config.n_thresholds.unwrap_or(defaults.n_thresholds),
        families: config.families(&defaults.families)?,
        t_ratios: config.t_ratios.clone().unwrap_or(defaults.t_ratios),
        master_seed: config.seed.unwrap_or(DEFAULT_SEED),
        n_restarts: config.restarts.unwrap_or(defaults.n_restarts),
        thresholds,
    };
    study.validate()?;
    Ok(study)
}

fn cmd_rmse_study(config: &RunConfig) -> Result<CommandOutput> {
    let ns = config.n.clone().unwrap_or_else(|| vec![100.0]);
    let mut studies = Vec::new();
    for &n in &ns {
        if !(n >= 1.0 && n.fract() == 0.0) {
            return Err(Error::Config(format!("sample size must be a positive integer, got {n}")));
        }
        studies.push(study_config(config, n as usize)?);
    }
    let mut table = Table::new(&RMSE_COLUMNS);
    let mut summary = vec!["optimal thresholds (minimum RMSE over the grid):".to_string()];
    let mut results: Vec<(usize, Vec<RmseCell>)> = Vec::new();
    for study in &studies {
        let cells = run_study(study)?;
        for c in &cells {
            table.push(vec![
                study.n.to_string(),
                fmt_f64(c.threshold),
                c.family.to_string(),
                fmt_f64(c.t),
                fmt_f64(c.rmse),
                fmt_f64(c.bias),
                fmt_f64(c.variance),
                c.n_fits.to_string(),
                c.n_failed_fits.to_string(),
            ]);
        }
        for o in optimal_thresholds(&cells) {
            summary.push(format!("n={} family={} T={} u_opt={} rmse={}", study.n, o.family, o.t, fmt_f64(o.threshold), fmt_f64(o.rmse)));
        }
        results.push((study.n, cells));
    }
    let svg = config.svg.as_ref().map(|_| svg::rmse_svg(&results));
    Ok(CommandOutput { primary: table.to_csv()?, svg, summary })
}

/// Defaults of the river-flow stand-in: 154 values above 65 with a moderately heavy tail.
pub const SIMULATE_DEFAULTS: (usize, f64, f64, f64, f64) = (154, 65.0, 1.5, 20.0, 0.2);

fn cmd_simulate(config: &RunConfig) -> Result<CommandOutput> {
    let (n0, loc0, k0, s0, x0) = SIMULATE_DEFAULTS;
    let family = config.family(ModelFamily::Egp1)?;
    let n = match config.n.as_deref() {
        None => n0,
        Some([n]) if *n >= 1.0 && n.fract() == 0.0 => *n as usize,
        Some(other) => return Err(Error::Config(format!("simulate takes one positive integer n, got {other:?}"))),
    };
    let first = |v: &Option<Vec<f64>>, d: f64| v.as_ref().and_then(|v| v.first().copied()).unwrap_or(d);
    let kappa = if family.has_kappa() { first(&config.kappa, k0) } else { 1.0 };
    let params = ModelParams::new(family, kappa, config.sigma.unwrap_or(s0), first(&config.xi, x0))
        .map_err(|e| Error::Config(e.to_string()))?;
    let location = config.location.unwrap_or(loc0);
    let values = params.sample(n, config.seed.unwrap_or(DEFAULT_SEED));
    let mut table = Table::new(&["flow"]);
    for v in values {
        table.push(vec![fmt_f64(location + v)]);
    }
    let summary = vec![format!("{n} draws from {family}(kappa={kappa}, sigma={}, xi={}) shifted by {location}", params.sigma, params.xi)];
    Ok(CommandOutput { primary: table.to_csv()?, svg: None, summary })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn penultimate_defaults_and_kappa_one() {
        let out = run(Command::Penultimate, &RunConfig::default()).unwrap();
        let text = String::from_utf8(out.primary).unwrap();
        assert_eq!(text.lines().count(), 1 + 3 * 2 * 3 * 2);
        assert!(text.starts_with(&PENULTIMATE_COLUMNS.join(",")));
        let cfg = RunConfig { kappa: Some(vec![1.0]), xi: Some(vec![0.3]), ..RunConfig::default() };
        let text = String::from_utf8(run(Command::Penultimate, &cfg).unwrap().primary).unwrap();
        for line in text.lines().skip(1) {
            let cells: Vec<&str> = line.split(',').collect();
            assert_eq!(cells[7], "0.3");
            assert!((cells[9].parse::<f64>().unwrap() - 0.3).abs() < 1e-9);
        }
    }

    #[test]
    fn config_errors_before_work() {
        let missing = run(Command::Fit, &RunConfig { threshold: Some(1.0), ..RunConfig::default() }).unwrap_err();
        assert_eq!(missing.exit_code(), 2);
        let bad = RunConfig { sigma: Some(-1.0), ..RunConfig::default() };
        assert_eq!(run(Command::Penultimate, &bad).unwrap_err().exit_code(), 2);
        let bad = RunConfig { parent: Some("weibull".into()), ..RunConfig::default() };
        assert_eq!(run(Command::RmseStudy, &bad).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn simulate_is_seeded() {
        let cfg = RunConfig { seed: Some(3), ..RunConfig::default() };
        let a = run(Command::Simulate, &cfg).unwrap().primary;
        assert_eq!(a, run(Command::Simulate, &cfg).unwrap().primary);
        let text = String::from_utf8(a).unwrap();
        assert_eq!(text.lines().count(), 155);
        assert!(text.lines().skip(1).all(|l| l.parse::<f64>().unwrap() > 65.0));
    }
}
