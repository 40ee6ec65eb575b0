//! Study configuration and its run identity.

use anyhow::{bail, Context, Result};
use clap::Args;
use rcopf::netcase::{parse_case, place_res, CaseFormat, McaseOptions, NetworkCase};
use rcopf::opf::{Budget, DEFAULT_EPS_THETA};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

/// Environment variable overriding the output directory.
pub const OUTPUT_DIR_ENV: &str = "RCOPF_OUTPUT_DIR";
/// Uncertainty fractions above this draw a warning.
pub const SOFT_UNCERTAINTY_LIMIT: f64 = 0.15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub case: PathBuf,
    /// Guessed from the extension when absent.
    pub format: Option<CaseFormat>,
    pub quadratic_tangent: bool,
    pub res_penetration: f64,
    pub load_uncertainty: f64,
    pub res_uncertainty: f64,
    pub budget: Budget,
    pub eps_theta: f64,
    /// Ramp limits as a fraction of the deterministic base point.
    pub ramp_fraction: f64,
    pub tolerance: f64,
    pub n_s: usize,
    pub seed: u64,
    /// Not part of the run identity.
    pub output_dir: PathBuf,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            case: PathBuf::new(),
            format: None,
            quadratic_tangent: false,
            res_penetration: 0.0,
            load_uncertainty: 0.05,
            res_uncertainty: 0.0,
            budget: Budget::Full,
            eps_theta: DEFAULT_EPS_THETA,
            ramp_fraction: 0.75,
            tolerance: 1e-8,
            n_s: 10_000,
            seed: 1,
            output_dir: PathBuf::from("runs"),
        }
    }
}

fn parse_budget(s: &str) -> Result<Budget, String> {
    if s.eq_ignore_ascii_case("full") {
        return Ok(Budget::Full);
    }
    s.parse().map(Budget::Gamma).map_err(|_| format!("expected `full` or an integer, got `{s}`"))
}

fn parse_format(s: &str) -> Result<CaseFormat, String> {
    match s {
        "mcase" | "m" => Ok(CaseFormat::Mcase),
        "json" | "native-json" => Ok(CaseFormat::NativeJson),
        _ => Err(format!("unknown case format `{s}`")),
    }
}

/// Study flags; any flag given overrides the `--config` file.
#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// JSON study configuration to start from.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Case file (`.m` or native `.json`).
    #[arg(long)]
    pub case: Option<PathBuf>,
    /// Case format: `mcase` or `json`.
    #[arg(long, value_parser = parse_format)]
    pub format: Option<CaseFormat>,
    /// Replace quadratic cost curves by their tangent.
    #[arg(long)]
    pub quadratic_tangent: bool,
    /// RES capacity as a fraction of conventional capacity.
    #[arg(long)]
    pub res_penetration: Option<f64>,
    /// Load deviation as a fraction of nominal load.
    #[arg(long)]
    pub load_uncertainty: Option<f64>,
    /// RES deviation as a fraction of nominal output.
    #[arg(long)]
    pub res_uncertainty: Option<f64>,
    /// Budget of uncertainty: `full` or the number of deviating parameters.
    #[arg(long, value_parser = parse_budget)]
    pub budget: Option<Budget>,
    /// Allowed angle linearisation error, radians.
    #[arg(long)]
    pub eps_theta: Option<f64>,
    /// Ramp limit as a fraction of the deterministic base point.
    #[arg(long)]
    pub ramp_fraction: Option<f64>,
    /// Solver tolerance.
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Number of Monte Carlo scenarios.
    #[arg(long)]
    pub n_s: Option<usize>,
    /// Monte Carlo seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Artifact directory; overridden by RCOPF_OUTPUT_DIR.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<StudyConfig> {
        let mut c = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => StudyConfig::default(),
        };
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = &self.$f { c.$f = v.clone(); })*};
        }
        set!(case, res_penetration, load_uncertainty, res_uncertainty, budget, eps_theta, ramp_fraction, tolerance, n_s, seed, output_dir);
        if self.format.is_some() {
            c.format = self.format;
        }
        c.quadratic_tangent |= self.quadratic_tangent;
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV) {
            c.output_dir = dir.into();
        }
        c.validate()?;
        Ok(c)
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.case.as_os_str().is_empty() {
            bail!("no case file given");
        }
        for (name, v) in [
            ("res_penetration", self.res_penetration),
            ("load_uncertainty", self.load_uncertainty),
            ("res_uncertainty", self.res_uncertainty),
            ("ramp_fraction", self.ramp_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                bail!("{name} must lie in [0, 1], got {v}");
            }
        }
        if self.n_s == 0 {
            bail!("n_s must be at least 1");
        }
        if !(self.tolerance > 0.0) || !(self.eps_theta >= 0.0) {
            bail!("tolerance must be positive and eps_theta nonnegative");
        }
        Ok(())
    }

    pub fn warnings(&self) -> Vec<String> {
        [("load_uncertainty", self.load_uncertainty), ("res_uncertainty", self.res_uncertainty)]
            .into_iter()
            .filter(|(_, v)| *v > SOFT_UNCERTAINTY_LIMIT)
            .map(|(n, v)| format!("{n} = {v} exceeds {SOFT_UNCERTAINTY_LIMIT}; results are outside the studied range"))
            .collect()
    }

    pub fn format(&self) -> CaseFormat {
        self.format.unwrap_or_else(|| CaseFormat::from_path(&self.case))
    }

    /// Run identity: SHA-256 over the canonical config (without the output
    /// directory) and the case file bytes, shortened to 16 hex digits.
    pub fn hash(&self) -> Result<String> {
        let mut identity = self.clone();
        identity.output_dir = PathBuf::new();
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&identity)?);
        h.update(read_case_bytes(&self.case)?);
        let digest = h.finalize();
        Ok(digest[..8].iter().map(|b| format!("{b:02x}")).collect())
    }

    /// Parses the case and places RES units.
    pub fn load_case(&self) -> Result<NetworkCase> {
        let bytes = read_case_bytes(&self.case)?;
        let opts = McaseOptions {
            quadratic_tangent: self.quadratic_tangent,
        };
        let case = parse_case(&bytes, self.format(), &opts).with_context(|| format!("parsing {}", self.case.display()))?;
        Ok(place_res(&case, self.res_penetration, None)?)
    }
}

fn read_case_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("reading {}", path.display()))
}
