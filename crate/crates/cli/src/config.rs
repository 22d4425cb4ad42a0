//! Run configuration: a TOML file with one section per stage, overridden by flags.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::Deserialize;

use dnlab_core::geometry::Sym2;

use crate::error::{CliError, CliResult};

/// Flags shared by every subcommand.
#[derive(Args, Debug, Clone, Default)]
pub struct CommonArgs {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Geometry name (disk, annulus, inclusion, collar, patch) or mesh file path.
    #[arg(long, global = true)]
    pub mesh: Option<String>,
    /// Outer boundary node count.
    #[arg(long, global = true)]
    pub resolution: Option<usize>,
    /// Random seed for sampled test functions.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Pass tolerance of the command's suite.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Worker threads.
    #[arg(long, global = true)]
    pub parallel: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<String>,
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub out: Option<PathBuf>,
    pub parallel: Option<usize>,
    #[serde(default)]
    pub geometry: GeometrySection,
    #[serde(default)]
    pub metric: MetricSection,
    #[serde(default)]
    pub identities: IdentitySection,
    #[serde(default)]
    pub evolve: EvolveSection,
    #[serde(default)]
    pub runge: RungeSection,
    #[serde(default)]
    pub probe: ProbeSection,
    #[serde(default)]
    pub recurrence: RecurrenceSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub mesh: Option<String>,
    pub resolution: Option<usize>,
    pub inner_radius: Option<f64>,
}

/// Metrics as `[a11, a12, a22]`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSection {
    pub g: Option<[f64; 3]>,
    pub h: Option<[f64; 3]>,
    pub delta: Option<[f64; 3]>,
    pub contrasts: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentitySection {
    pub trials: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveSection {
    pub levels: Option<usize>,
    /// linear, exponential or wobble.
    pub profile: Option<String>,
    pub rate: Option<f64>,
    pub amplitude: Option<f64>,
    pub mode: Option<u32>,
    /// Angular frequency of the initial data.
    pub frequency: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RungeSection {
    pub eps: Option<f64>,
    pub max_iterations: Option<usize>,
    /// scheduled, line-search or exact.
    pub rule: Option<String>,
    pub cylinder_length: Option<f64>,
    pub eps_ladder: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSection {
    pub frequencies: Option<Vec<f64>>,
    pub radius: Option<f64>,
    pub spacing: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecurrenceSection {
    pub sigma0: Option<f64>,
    pub c: Option<f64>,
    pub steps: Option<usize>,
    /// Keep every n-th row of the trajectory CSV.
    pub every: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }
}

/// Flags layered over the file, with validation of shared settings.
#[derive(Debug, Clone)]
pub struct Settings {
    pub file: RunConfig,
    pub flags: CommonArgs,
}

impl Settings {
    pub fn new(flags: CommonArgs) -> CliResult<Self> {
        let file = match &flags.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let s = Self { file, flags };
        if let Some(t) = s.flags.tol.or(s.file.tol) {
            if !(t > 0.0 && t.is_finite()) {
                return Err(CliError::Config(format!("tolerance must be positive, got {t}")));
            }
        }
        if s.parallel() == Some(0) {
            return Err(CliError::Config("parallel must be at least 1".into()));
        }
        Ok(s)
    }

    pub fn seed(&self) -> u64 {
        self.flags.seed.or(self.file.seed).unwrap_or(0)
    }

    pub fn tol(&self, default: f64) -> f64 {
        self.flags.tol.or(self.file.tol).unwrap_or(default)
    }

    pub fn out(&self) -> PathBuf {
        self.flags.out.clone().or_else(|| self.file.out.clone()).unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn parallel(&self) -> Option<usize> {
        self.flags.parallel.or(self.file.parallel)
    }

    pub fn mesh(&self, default: &str) -> String {
        self.flags.mesh.clone().or_else(|| self.file.geometry.mesh.clone()).unwrap_or_else(|| default.to_string())
    }

    pub fn resolution(&self, default: usize) -> usize {
        self.flags.resolution.or(self.file.geometry.resolution).unwrap_or(default)
    }
}

pub fn sym2(v: [f64; 3], what: &str) -> CliResult<Sym2> {
    let s = Sym2::new(v[0], v[1], v[2]);
    if v.iter().any(|x| !x.is_finite()) {
        return Err(CliError::Config(format!("{what} has non-finite entries")));
    }
    Ok(s)
}

pub fn spd(v: [f64; 3], what: &str) -> CliResult<Sym2> {
    let s = sym2(v, what)?;
    if !s.is_spd() {
        return Err(CliError::Config(format!("{what} = {v:?} is not positive definite")));
    }
    Ok(s)
}

pub fn positive(x: f64, what: &str) -> CliResult<f64> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(CliError::Config(format!("{what} must be positive, got {x}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_parse() {
        let c = RunConfig::parse("command = \"probe\"\n[probe]\nfrequencies = [10.0, 20.0]\n[metric]\nh = [4.0, 0.0, 1.0]\n").unwrap();
        assert_eq!(c.command.as_deref(), Some("probe"));
        assert_eq!(c.probe.frequencies.unwrap(), vec![10.0, 20.0]);
        assert_eq!(c.metric.h, Some([4.0, 0.0, 1.0]));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(RunConfig::parse("[probe]\nfreq = 3\n"), Err(CliError::Config(_))));
    }

    #[test]
    fn flags_override_the_file() {
        let file = RunConfig::parse("seed = 3\n[geometry]\nresolution = 16\n").unwrap();
        let flags = CommonArgs { resolution: Some(64), ..Default::default() };
        let s = Settings { file, flags };
        assert_eq!(s.resolution(32), 64);
        assert_eq!(s.seed(), 3);
    }

    #[test]
    fn indefinite_metric_is_a_config_error() {
        assert!(spd([1.0, 2.0, 1.0], "h").is_err());
    }
}
