use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nht_core::levy_kernels::KernelSpec;
use nht_core::potentials::PotentialSpec;
use nht_core::{NhtError, QuadratureConfig};
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const EXIT_VERIFY: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn failure(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_VERIFY,
            message: message.into(),
        }
    }
}

impl From<NhtError> for CliError {
    fn from(e: NhtError) -> Self {
        match e {
            NhtError::InvalidParameter(_) | NhtError::Io(_) | NhtError::IllConditioned(_) => Self::usage(e.to_string()),
            _ => Self::failure(e.to_string()),
        }
    }
}

fn read_json<T: DeserializeOwned>(path: &Path, what: &str) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::usage(format!("cannot read {what} {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::usage(format!("malformed {what} {}: {e}", path.display())))
}

pub fn load_spec(path: &Path) -> Result<KernelSpec, CliError> {
    read_json(path, "kernel spec")
}

pub fn load_potential(path: &Path) -> Result<PotentialSpec, CliError> {
    read_json(path, "potential")
}

pub fn load_config(path: Option<&Path>) -> Result<QuadratureConfig, CliError> {
    let cfg = match path {
        Some(p) => read_json(p, "quadrature config")?,
        None => QuadratureConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

/// First 16 hex digits of the SHA-256 of the canonical JSON form.
pub fn short_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_string(value).expect("serializable");
    let digest = Sha256::digest(json.as_bytes());
    hex::encode(digest)[..16].to_string()
}

/// The resolved configuration as `# `-prefixed lines.
pub fn config_header(config: &serde_json::Value) -> String {
    let pretty = serde_json::to_string_pretty(config).expect("serializable");
    pretty.lines().map(|l| format!("# {l}\n")).collect()
}

pub fn version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}

/// Writes to `path`, or to stdout when it is `None`.
pub fn emit(path: Option<&PathBuf>, contents: &[u8]) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, contents).map_err(|e| CliError::usage(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(contents)
                .and_then(|_| out.flush())
                .map_err(|e| CliError::failure(format!("cannot write to stdout: {e}")))
        }
    }
}

/// `a:b:logN` (log-spaced, inclusive), `a:b:linN`, a comma list, or one value.
pub fn parse_t_grid(text: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::usage(format!("bad time grid `{text}`; expected a:b:logN, a:b:linN or a comma list"));
    let parts: Vec<&str> = text.split(':').collect();
    let grid = match parts.as_slice() {
        [a, b, kind] => {
            let a: f64 = a.trim().parse().map_err(|_| bad())?;
            let b: f64 = b.trim().parse().map_err(|_| bad())?;
            let kind = kind.trim();
            let (log, n) = if let Some(n) = kind.strip_prefix("log") {
                (true, n)
            } else if let Some(n) = kind.strip_prefix("lin") {
                (false, n)
            } else {
                return Err(bad());
            };
            let n: usize = n.parse().map_err(|_| bad())?;
            if n == 0 || !(a > 0.0 && b >= a && b.is_finite()) {
                return Err(bad());
            }
            (0..n)
                .map(|i| {
                    let f = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
                    if i == 0 {
                        a
                    } else if i == n - 1 {
                        b
                    } else if log {
                        (a.ln() + f * (b.ln() - a.ln())).exp()
                    } else {
                        a + f * (b - a)
                    }
                })
                .collect()
        }
        [list] => parse_list(list).map_err(|_| bad())?,
        _ => return Err(bad()),
    };
    if grid.iter().any(|t: &f64| !(*t > 0.0 && t.is_finite())) {
        return Err(bad());
    }
    Ok(grid)
}

pub fn parse_list(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::usage(format!("`{s}` is not a number")))
        })
        .collect()
}
