//! Power-network case data: types, MATPOWER and JSON ingestion, admittances
//! and RES placement.

mod admittance;
mod mcase;
mod res;
mod types;

pub use admittance::{branch_admittance, build_admittance, Admittance, BranchAdmittance};
pub use mcase::{parse_mcase, McaseOptions};
pub use res::{place_res, RES_RATING_FACTOR};
pub use types::*;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("syntax error at line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("unsupported input at line {line}: {msg}")]
    Unsupported { line: usize, msg: String },
    #[error("invalid `{field}`: {msg}")]
    Invariant { field: String, msg: String },
    #[error("expected exactly one reference bus, found {0}")]
    ReferenceBus(usize),
    #[error("zero series impedance on branch {from}-{to}")]
    ZeroImpedance { from: usize, to: usize },
    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("input is not valid UTF-8")]
    Utf8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CaseFormat {
    Mcase,
    NativeJson,
}

impl CaseFormat {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => CaseFormat::NativeJson,
            _ => CaseFormat::Mcase,
        }
    }
}

pub fn parse_case(source: &[u8], format: CaseFormat, opts: &McaseOptions) -> Result<NetworkCase, CaseError> {
    let text = std::str::from_utf8(source).map_err(|_| CaseError::Utf8)?;
    match format {
        CaseFormat::Mcase => parse_mcase(text, opts),
        CaseFormat::NativeJson => serde_json::from_str::<NetworkCase>(text)?.normalize(),
    }
}

/// Canonical JSON dump (struct field order, pretty printed).
pub fn to_json(case: &NetworkCase) -> String {
    serde_json::to_string_pretty(case).expect("case serializes")
}
