use super::simplex::nelder_mead;
use super::{fit_mle, ExcessSample, FitOptions, Layout, Param, PoolingScheme};
use crate::error::{Error, Result};
use crate::models::ModelFamily;
use crate::special::chi_squared1_quantile;
use serde::Serialize;

/// Profile-likelihood confidence interval.
#[derive(Debug, Clone, Serialize)]
pub struct ProfileInterval {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    /// False when the profile never dropped below the cutoff on that side; the bound is then
    /// the last point searched.
    pub lower_found: bool,
    pub upper_found: bool,
    pub level: f64,
}

impl ProfileInterval {
    pub fn one_sided(&self) -> bool {
        !(self.lower_found && self.upper_found)
    }
}

const MAX_STEPS: usize = 60;
const BISECTIONS: usize = 40;

/// Walks away from `psi_hat` in both directions until the profile log-likelihood `prof` drops
/// below `cutoff`, then bisects the crossing.
///
/// Steps are taken in `log ψ` when `positive` is set. `prof` returns `None` where the
/// parameter value is infeasible.
pub(crate) fn profile_interval<F>(
    psi_hat: f64,
    cutoff: f64,
    positive: bool,
    step0: f64,
    level: f64,
    mut prof: F,
) -> ProfileInterval
where
    F: FnMut(f64) -> Option<f64>,
{
    let to_psi = |phi: f64| if positive { phi.exp() } else { phi };
    let phi_hat = if positive { psi_hat.ln() } else { psi_hat };
    let mut bounds = [(psi_hat, false); 2];
    for (side, dir) in [-1.0f64, 1.0].into_iter().enumerate() {
        let mut inside = phi_hat;
        let mut step = step0;
        let mut outside = None;
        let mut failures = 0;
        for _ in 0..MAX_STEPS {
            let trial = inside + dir * step;
            match prof(to_psi(trial)) {
                Some(v) if v >= cutoff => {
                    inside = trial;
                    step *= 1.5;
                }
                Some(_) => {
                    outside = Some(trial);
                    break;
                }
                None => {
                    failures += 1;
                    step *= 0.25;
                    if failures > 12 {
                        break;
                    }
                }
            }
        }
        bounds[side] = match outside {
            None => (to_psi(inside), false),
            Some(mut out) => {
                let mut inn = inside;
                for _ in 0..BISECTIONS {
                    if (out - inn).abs() <= 1e-7 * step0 {
                        break;
                    }
                    let mid = 0.5 * (inn + out);
                    match prof(to_psi(mid)) {
                        Some(v) if v >= cutoff => inn = mid,
                        _ => out = mid,
                    }
                }
                (to_psi(0.5 * (inn + out)), true)
            }
        };
    }
    ProfileInterval {
        estimate: psi_hat,
        lower: bounds[0].0,
        upper: bounds[1].0,
        lower_found: bounds[0].1,
        upper_found: bounds[1].1,
        level,
    }
}

/// Profile-likelihood interval for one parameter of a single-sample fit.
pub fn profile_ci(
    sample: &ExcessSample,
    family: ModelFamily,
    which: Param,
    level: f64,
    options: &FitOptions,
) -> Result<ProfileInterval> {
    if !(0.0..1.0).contains(&level) {
        return Err(Error::domain(format!("confidence level must lie in [0, 1), got {level}")));
    }
    if which == Param::Kappa && (!family.has_kappa() || options.fixed_kappa.is_some()) {
        return Err(Error::domain("kappa is not a free parameter of this fit"));
    }
    let fit = fit_mle(sample, family, options)?;
    let psi_hat = match which {
        Param::Kappa => fit.params.kappa,
        Param::Sigma => fit.params.sigma,
        Param::Xi => fit.params.xi,
    };
    if level == 0.0 {
        return Ok(ProfileInterval {
            estimate: psi_hat,
            lower: psi_hat,
            upper: psi_hat,
            lower_found: true,
            upper_found: true,
            level,
        });
    }
    let cutoff = fit.loglik - 0.5 * chi_squared1_quantile(level)?;
    let positive = which != Param::Xi;
    let step0 = match fit.std_error(which) {
        Some(se) if se.is_finite() && se > 0.0 => 0.5 * if positive { se / psi_hat } else { se },
        _ => 0.1,
    };

    let xs = [sample.excesses.as_slice()];
    let mut fixed: Vec<(Param, f64)> = options.fixed_kappa.map(|k| (Param::Kappa, k)).into_iter().collect();
    fixed.push((which, psi_hat));
    let mut warm = Layout::new(family, 1, &PoolingScheme::all_shared(), &fixed).encode(&[fit.params]);
    let prof = |psi: f64| -> Option<f64> {
        *fixed.last_mut().unwrap() = (which, psi);
        let layout = Layout::new(family, 1, &PoolingScheme::all_shared(), &fixed);
        let steps = layout.simplex_steps();
        let start = if layout.loglik(&xs, &warm).is_finite() {
            warm.clone()
        } else {
            // shrink ξ toward zero, which is always feasible
            let mut p = fit.params;
            p.xi = if which == Param::Xi { psi } else { 0.0 };
            p.sigma = if which == Param::Sigma { psi } else { sample.mean_excess() };
            layout.encode(&[p])
        };
        let best = if layout.dim() == 0 {
            layout.loglik(&xs, &start)
        } else {
            let first = nelder_mead(|t| -layout.loglik(&xs, t), &start, &steps, options.tol, options.max_evals);
            let second = nelder_mead(|t| -layout.loglik(&xs, t), &first.x, &steps, options.tol, options.max_evals);
            if second.value.is_finite() {
                warm = second.x;
            }
            -second.value
        };
        best.is_finite().then_some(best)
    };
    Ok(profile_interval(psi_hat, cutoff, positive, step0, level, prof))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelParams;

    #[test]
    fn degenerate_level_and_containment() {
        let s = ExcessSample::from_excesses(ModelParams::gp(1.0, 0.1).unwrap().sample(500, 2)).unwrap();
        let opts = FitOptions::default();
        let zero = profile_ci(&s, ModelFamily::Gp, Param::Xi, 0.0, &opts).unwrap();
        assert_eq!(zero.lower, zero.upper);
        let ci = profile_ci(&s, ModelFamily::Gp, Param::Xi, 0.95, &opts).unwrap();
        assert!(ci.lower < ci.estimate && ci.estimate < ci.upper);
        assert!(!ci.one_sided());
        let sg = profile_ci(&s, ModelFamily::Gp, Param::Sigma, 0.95, &opts).unwrap();
        assert!(sg.lower < sg.estimate && sg.estimate < sg.upper);
        assert!(profile_ci(&s, ModelFamily::Gp, Param::Kappa, 0.95, &opts).is_err());
    }

    #[test]
    fn profile_close_to_wald_in_large_samples() {
        let s = ExcessSample::from_excesses(ModelParams::gp(1.0, 0.2).unwrap().sample(5000, 21)).unwrap();
        let opts = FitOptions::default();
        let fit = fit_mle(&s, ModelFamily::Gp, &opts).unwrap();
        let se = fit.std_error(Param::Xi).unwrap();
        let ci = profile_ci(&s, ModelFamily::Gp, Param::Xi, 0.95, &opts).unwrap();
        let wald = (fit.params.xi - 1.959964 * se, fit.params.xi + 1.959964 * se);
        let width = wald.1 - wald.0;
        assert!((ci.lower - wald.0).abs() < 0.15 * width);
        assert!((ci.upper - wald.1).abs() < 0.15 * width);
    }

    #[test]
    fn kappa_profile_for_egp3() {
        let s = ExcessSample::from_excesses(ModelParams::gp(1.0, 0.2).unwrap().sample(600, 5)).unwrap();
        let ci = profile_ci(&s, ModelFamily::Egp3, Param::Kappa, 0.95, &FitOptions::default()).unwrap();
        assert!(ci.lower > 0.0 && ci.lower < ci.estimate && ci.estimate < ci.upper);
    }
}
