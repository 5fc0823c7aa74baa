use crate::error::{Error, Result};
use crate::inference::type7_quantile;
use crate::models::{ModelFamily, ModelParams};
use crate::simulation::Parent;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// Run parameters shared by every subcommand.
///
/// The same keys are accepted as long command-line flags and in a flat TOML file
/// passed with `--config`; flags take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, clap::Args)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Flat TOML file with any of these options.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// Input CSV file.
    #[arg(long)]
    pub data: Option<PathBuf>,

    /// Data column, by header name or 0-based index [default: 0].
    #[arg(long)]
    pub column: Option<String>,

    /// Group column for pooled fits, by header name or 0-based index.
    #[arg(long)]
    pub group: Option<String>,

    /// Whether the CSV has a header row [default: detected].
    #[arg(long)]
    pub header: Option<bool>,

    /// Model family, or a comma-separated list where several are accepted (GP, EGP1, EGP2, EGP3).
    #[arg(long)]
    pub family: Option<String>,

    /// Single threshold.
    #[arg(long, allow_hyphen_values = true)]
    pub threshold: Option<f64>,

    /// Threshold grid: a comma-separated list, or `q:COUNT:LO:HI` for COUNT thresholds equally
    /// spaced between the LO and HI sample quantiles (probabilities in (0, 1)).
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<String>,

    /// Return periods in observations [default: 10,50,100,200,500].
    #[arg(long = "T", value_delimiter = ',')]
    #[serde(rename = "T")]
    pub t: Option<Vec<f64>>,

    /// Significance level for threshold selection [default: 0.05].
    #[arg(long)]
    pub alpha: Option<f64>,

    /// Confidence or tolerance level [default: 0.95].
    #[arg(long)]
    pub level: Option<f64>,

    /// Bootstrap replicates for QQ tolerance bands [default: 200].
    #[arg(long)]
    pub boot: Option<usize>,

    /// Master seed for every random stream [default: 1].
    #[arg(long)]
    pub seed: Option<u64>,

    /// Primary output file [default: standard output].
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Optional SVG rendering.
    #[arg(long)]
    pub svg: Option<PathBuf>,

    /// Return-level interval method: delta or profile [default: delta].
    #[arg(long)]
    pub method: Option<String>,

    /// Jittered optimiser restarts per fit [default: 5; 1 in rmse-study].
    #[arg(long)]
    pub restarts: Option<usize>,

    /// Hold κ at this value (κ = 1 reproduces the GP fit).
    #[arg(long)]
    pub fixed_kappa: Option<f64>,

    /// Parameters estimated per group in pooled fits, e.g. `sigma,xi` [default: none].
    #[arg(long)]
    pub pooling: Option<String>,

    /// κ values for penultimate [default: 0.5,2]; simulate uses the first [default: 1.5].
    #[arg(long, value_delimiter = ',')]
    pub kappa: Option<Vec<f64>>,

    /// Scale σ for penultimate [default: 1] and simulate [default: 20].
    #[arg(long)]
    pub sigma: Option<f64>,

    /// ξ values for penultimate [default: -0.2,0,0.5]; simulate uses the first [default: 0.2].
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub xi: Option<Vec<f64>>,

    /// Sample sizes: n for penultimate [default: 10000,1000000], replicate sizes for
    /// rmse-study [default: 100], sample size for simulate [default: 154].
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<f64>>,

    /// Parent distribution of rmse-study: `normal` or `FAMILY:kappa:sigma:xi` [default: normal].
    #[arg(long)]
    pub parent: Option<String>,

    /// Replicates in rmse-study [default: 500].
    #[arg(long)]
    pub reps: Option<usize>,

    /// Grid size in rmse-study [default: 20].
    #[arg(long)]
    pub n_thresholds: Option<usize>,

    /// Return periods as multiples of n in rmse-study [default: 1.5,5].
    #[arg(long, value_delimiter = ',')]
    pub t_ratios: Option<Vec<f64>>,

    /// Location added to simulated values [default: 65].
    #[arg(long, allow_hyphen_values = true)]
    pub location: Option<f64>,
}

macro_rules! overlay {
    ($hi:expr, $lo:expr, $($f:ident),*) => {
        RunConfig { $($f: $hi.$f.or($lo.$f),)* }
    };
}

impl RunConfig {
    /// Parses a flat TOML document, rejecting unknown keys.
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Values set here win over those in `file`.
    pub fn overlay(self, file: RunConfig) -> RunConfig {
        overlay!(
            self, file, config, data, column, group, header, family, threshold, grid, t, alpha, level, boot, seed,
            out, svg, method, restarts, fixed_kappa, pooling, kappa, sigma, xi, n, parent, reps, n_thresholds,
            t_ratios, location
        )
    }

    /// Command-line values merged over the `--config` file, if any.
    pub fn resolve(self) -> Result<RunConfig> {
        match self.config.clone() {
            Some(path) => Ok(self.overlay(RunConfig::load(&path)?)),
            None => Ok(self),
        }
    }

    pub fn families(&self, default: &[ModelFamily]) -> Result<Vec<ModelFamily>> {
        match &self.family {
            None => Ok(default.to_vec()),
            Some(s) => {
                let fams = s.split(',').map(|f| f.trim().parse()).collect::<Result<Vec<ModelFamily>>>()?;
                if fams.is_empty() {
                    return Err(Error::Config("empty family list".into()));
                }
                Ok(fams)
            }
        }
    }

    pub fn family(&self, default: ModelFamily) -> Result<ModelFamily> {
        match self.families(&[default])?.as_slice() {
            [f] => Ok(*f),
            _ => Err(Error::Config("this command takes a single family".into())),
        }
    }

    pub fn level(&self) -> Result<f64> {
        let l = self.level.unwrap_or(0.95);
        if l > 0.0 && l < 1.0 {
            Ok(l)
        } else {
            Err(Error::Config(format!("level must lie in (0, 1), got {l}")))
        }
    }

    pub fn alpha(&self) -> Result<f64> {
        let a = self.alpha.unwrap_or(0.05);
        if a > 0.0 && a < 1.0 {
            Ok(a)
        } else {
            Err(Error::Config(format!("alpha must lie in (0, 1), got {a}")))
        }
    }

    pub fn return_periods(&self) -> Result<Vec<f64>> {
        let t = self.t.clone().unwrap_or_else(|| vec![10.0, 50.0, 100.0, 200.0, 500.0]);
        if t.is_empty() || t.iter().any(|v| !(*v > 1.0 && v.is_finite())) {
            return Err(Error::Config("return periods must exceed 1".into()));
        }
        Ok(t)
    }

    pub fn require_data(&self) -> Result<&Path> {
        self.data.as_deref().ok_or_else(|| Error::Config("--data is required".into()))
    }

    pub fn require_threshold(&self) -> Result<f64> {
        match self.threshold {
            Some(u) if u.is_finite() => Ok(u),
            Some(u) => Err(Error::Config(format!("threshold must be finite, got {u}"))),
            None => Err(Error::Config("--threshold is required".into())),
        }
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        match (&self.grid, self.threshold) {
            (Some(g), _) => g.parse(),
            (None, Some(u)) => Ok(GridSpec::Explicit(vec![u])),
            (None, None) => Err(Error::Config("--grid or --threshold is required".into())),
        }
    }

    pub fn parent(&self) -> Result<Parent> {
        match &self.parent {
            None => Ok(Parent::Normal),
            Some(s) => s.parse::<ParentSpec>().map(|p| p.0),
        }
    }
}

/// Parsed `--parent` value.
pub struct ParentSpec(pub Parent);

impl FromStr for ParentSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim().eq_ignore_ascii_case("normal") {
            return Ok(ParentSpec(Parent::Normal));
        }
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        let bad = || Error::Config(format!("parent must be 'normal' or FAMILY:kappa:sigma:xi, got '{s}'"));
        if parts.len() != 4 {
            return Err(bad());
        }
        let family: ModelFamily = parts[0].parse()?;
        let nums: Vec<f64> = parts[1..].iter().map(|p| p.parse().map_err(|_| bad())).collect::<Result<_>>()?;
        let m = ModelParams::new(family, nums[0], nums[1], nums[2]).map_err(|e| Error::Config(e.to_string()))?;
        Ok(ParentSpec(Parent::Model(m)))
    }
}

/// Threshold grid, either listed or as equally spaced values between two sample quantiles.
#[derive(Debug, Clone, PartialEq)]
pub enum GridSpec {
    Explicit(Vec<f64>),
    Quantiles { count: usize, lo: f64, hi: f64 },
}

impl FromStr for GridSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("q:") {
            let parts: Vec<&str> = rest.split(':').collect();
            let bad = || Error::Config(format!("quantile grid must be q:COUNT:LO:HI, got '{s}'"));
            if parts.len() != 3 {
                return Err(bad());
            }
            let count: usize = parts[0].trim().parse().map_err(|_| bad())?;
            let lo: f64 = parts[1].trim().parse().map_err(|_| bad())?;
            let hi: f64 = parts[2].trim().parse().map_err(|_| bad())?;
            if count == 0 || !(0.0 < lo && lo <= hi && hi < 1.0) || (count > 1 && lo == hi) {
                return Err(Error::Config(format!("quantile grid needs COUNT >= 1 and 0 < LO < HI < 1, got '{s}'")));
            }
            return Ok(GridSpec::Quantiles { count, lo, hi });
        }
        let values: Vec<f64> = s
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| Error::Config(format!("bad threshold '{v}' in grid"))))
            .collect::<Result<_>>()?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("grid thresholds must be finite".into()));
        }
        if values.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("grid thresholds must be strictly increasing".into()));
        }
        Ok(GridSpec::Explicit(values))
    }
}

impl GridSpec {
    pub fn resolve(&self, data: &[f64]) -> Result<Vec<f64>> {
        match self {
            GridSpec::Explicit(v) => Ok(v.clone()),
            GridSpec::Quantiles { count, lo, hi } => {
                let mut sorted = data.to_vec();
                sorted.sort_by(f64::total_cmp);
                let (a, b) = (type7_quantile(&sorted, *lo), type7_quantile(&sorted, *hi));
                if *count == 1 {
                    return Ok(vec![a]);
                }
                let step = (b - a) / (*count - 1) as f64;
                let grid: Vec<f64> = (0..*count).map(|i| if i + 1 == *count { b } else { a + step * i as f64 }).collect();
                if grid.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::Config("quantile grid collapses: the data have too many ties".into()));
                }
                Ok(grid)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_and_unknown_keys() {
        let c = RunConfig::from_toml("family = \"EGP1\"\nT = [10.0, 100.0]\nseed = 7\ngrid = \"q:5:0.1:0.9\"\n").unwrap();
        assert_eq!(c.t, Some(vec![10.0, 100.0]));
        assert_eq!(c.seed, Some(7));
        let e = RunConfig::from_toml("famly = \"EGP1\"").unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(RunConfig::from_toml("seed = \"x\"").is_err());
    }

    #[test]
    fn cli_overrides_file() {
        let file = RunConfig { seed: Some(1), family: Some("GP".into()), ..RunConfig::default() };
        let cli = RunConfig { seed: Some(9), ..RunConfig::default() };
        let merged = cli.overlay(file);
        assert_eq!(merged.seed, Some(9));
        assert_eq!(merged.family.as_deref(), Some("GP"));
    }

    #[test]
    fn grids() {
        assert_eq!("1,2.5,3".parse::<GridSpec>().unwrap(), GridSpec::Explicit(vec![1.0, 2.5, 3.0]));
        assert!("3,2".parse::<GridSpec>().is_err());
        assert!("q:5:0.9:0.1".parse::<GridSpec>().is_err());
        assert!("q:5:0.1".parse::<GridSpec>().is_err());
        let data: Vec<f64> = (0..=100).map(f64::from).collect();
        let g = "q:3:0.1:0.5".parse::<GridSpec>().unwrap().resolve(&data).unwrap();
        assert_eq!(g, vec![10.0, 30.0, 50.0]);
    }

    #[test]
    fn defaults_and_parents() {
        let c = RunConfig::default();
        assert_eq!(c.return_periods().unwrap(), vec![10.0, 50.0, 100.0, 200.0, 500.0]);
        assert_eq!(c.level().unwrap(), 0.95);
        assert!(matches!(c.parent().unwrap(), Parent::Normal));
        let p = RunConfig { parent: Some("GP:1:1:0.2".into()), ..RunConfig::default() }.parent().unwrap();
        assert!(matches!(p, Parent::Model(m) if m.xi == 0.2));
        assert!(RunConfig { parent: Some("GP:2:1:0.2".into()), ..RunConfig::default() }.parent().is_err());
        let f = RunConfig { family: Some("gp, egp2".into()), ..RunConfig::default() };
        assert_eq!(f.families(&[]).unwrap(), vec![ModelFamily::Gp, ModelFamily::Egp2]);
        assert!(f.family(ModelFamily::Gp).is_err());
    }
}
