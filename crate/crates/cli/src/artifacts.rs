//! Files written by the subcommands.

use crate::config::StudyConfig;
use anyhow::{Context, Result};
use rcopf::mcs::ValidationReport;
use rcopf::robust::{ExactnessReport, RobustSetpoints, StrongDualityReport};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SolveMode {
    Deterministic,
    Robust,
}

impl SolveMode {
    pub fn name(self) -> &'static str {
        match self {
            SolveMode::Deterministic => "deterministic",
            SolveMode::Robust => "robust",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub duality_gap: f64,
    pub orientation_rounds: usize,
    pub big_m_usage: f64,
    pub strong_duality: Option<StrongDualityReport>,
    pub exactness: Option<ExactnessReport>,
    /// Checks that could not be completed.
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub config_hash: String,
    pub mode: SolveMode,
    pub case: String,
    pub config: StudyConfig,
    pub objective: f64,
    pub setpoints: RobustSetpoints,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationFile {
    pub config_hash: String,
    /// First 16 hex digits of the SHA-256 of the setpoints file.
    pub setpoints_digest: String,
    /// Mode of the solve that produced the setpoints, when known.
    pub solution_mode: Option<SolveMode>,
    pub case: String,
    pub config: StudyConfig,
    pub report: ValidationReport,
}

/// Any JSON artifact, tagged by kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Artifact {
    Solution(SolutionFile),
    Validation(ValidationFile),
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_hash: &'a str,
    config: &'a StudyConfig,
    versions: Versions,
    started_unix: u64,
    wall_time_s: f64,
    exit_code: u8,
    artifacts: &'a [PathBuf],
}

#[derive(Debug, Serialize)]
struct Versions {
    rcopf: &'static str,
    rcopf_cli: &'static str,
}

/// Collects artifact paths and writes the manifest at the end of a run.
pub struct Run {
    pub dir: PathBuf,
    pub hash: String,
    started: SystemTime,
    clock: Instant,
    written: Vec<PathBuf>,
}

impl Run {
    pub fn new(dir: &Path, hash: String) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            hash,
            started: SystemTime::now(),
            clock: Instant::now(),
            written: Vec::new(),
        })
    }

    pub fn path(&self, stem: &str, ext: &str) -> PathBuf {
        self.dir.join(format!("{stem}-{}.{ext}", self.hash))
    }

    pub fn write(&mut self, stem: &str, ext: &str, contents: &[u8]) -> Result<PathBuf> {
        let path = self.path(stem, ext);
        std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, stem: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(stem, "json", text.as_bytes())
    }

    pub fn finish(mut self, command: &str, config: &StudyConfig, exit_code: u8) -> Result<PathBuf> {
        let artifacts = std::mem::take(&mut self.written);
        let hash = self.hash.clone();
        let manifest = Manifest {
            command,
            config_hash: &hash,
            config,
            versions: Versions {
                rcopf: rcopf::VERSION,
                rcopf_cli: env!("CARGO_PKG_VERSION"),
            },
            started_unix: self.started.duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            wall_time_s: self.clock.elapsed().as_secs_f64(),
            exit_code,
            artifacts: &artifacts,
        };
        self.write_json(&format!("manifest-{command}"), &manifest)
    }
}

/// Config as stored inside artifacts: the output directory does not belong
/// to the run identity.
pub fn stored_config(config: &StudyConfig) -> StudyConfig {
    StudyConfig {
        output_dir: PathBuf::new(),
        ..config.clone()
    }
}

pub fn case_name(config: &StudyConfig) -> String {
    config
        .case
        .file_stem()
        .map_or_else(|| config.case.display().to_string(), |s| s.to_string_lossy().into_owned())
}

pub fn read_artifact(path: &Path) -> Result<Artifact> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Tidy per-family slices of the envelope table.
pub fn split_envelope(csv: &str) -> Vec<(&'static str, String)> {
    let mut lines = csv.lines();
    let header = lines.next().unwrap_or_default();
    let groups: [(&str, &[&str]); 3] = [
        ("flow", &["flow"]),
        ("voltage", &["voltage"]),
        ("generation", &["gen_active", "gen_reactive", "ramp"]),
    ];
    let rows: Vec<&str> = lines.collect();
    groups
        .iter()
        .map(|(name, families)| {
            let mut out = format!("{header}\n");
            for r in &rows {
                let fam = r.split(',').next().unwrap_or_default();
                if families.contains(&fam) {
                    out.push_str(r);
                    out.push('\n');
                }
            }
            (*name, out)
        })
        .collect()
}
