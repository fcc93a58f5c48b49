use std::fmt::Write as _;
use std::time::{SystemTime, UNIX_EPOCH};

use renewal_spectral::Error;

use crate::Common;

/// Exit code 2: bad input (unknown model, malformed JSON, invalid values).
pub const EXIT_DOMAIN: u8 = 2;
/// Exit code 3: the numerics failed (no convergence, integration failure).
pub const EXIT_NUMERIC: u8 = 3;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn domain(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_DOMAIN,
            message: message.into(),
        }
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_NUMERIC,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_domain_error() {
            Failure::domain(e.to_string())
        } else {
            Failure::numeric(e.to_string())
        }
    }
}

/// Formats a float with 17 significant digits (exact round trip).
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Leading comment lines: version, command, model, `M`, `τ`, tolerances and
/// seed, then a timestamp unless `--reproducible` was given.
pub fn preamble(command: &str, common: &Common, model: &str, m: &str, tau: f64, tolerances: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# renewal-spectral {} command={command} model={model} M={m} tau={} {tolerances} seed={}",
        env!("CARGO_PKG_VERSION"),
        num(tau),
        common.seed
    );
    if !common.reproducible {
        let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let _ = writeln!(out, "# generated unix_time={secs}");
    }
    out
}
