//! Robust SOC-relaxed AC optimal power flow.

pub mod acpf;
pub mod conic;
pub mod ipm;
pub mod linalg;
pub mod mcs;
pub mod netcase;
pub mod opf;
pub mod robust;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
