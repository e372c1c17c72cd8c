//! Flat key/value run configuration.
//!
//! The file format is INI-like: `[section]` headers name the module a key
//! belongs to, `key = value` lines assign, `#`/`;` start comments. Every key
//! has a default, so an empty file is valid. The environment variable
//! `DELAYMP_SEED` overrides the configured seed; an explicit `--seed` flag
//! overrides both.

use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::lq::LqParams;

/// The built-in test problems the CLI can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    /// The linear-quadratic benchmark.
    Lq,
    /// The smooth nonlinear problem used by the order study:
    /// `b = sin(x) + 0.5 x_d + v`, `sigma = 0.3 x + 0.2 x_d + 0.5 v + 0.2 v_d`,
    /// `l = v^2`, terminal cost `x`, `U = {-1, 1}`.
    Smooth,
    /// `dX = X dB` with exact solution `exp(B(T) - T/2)`; no delay terms.
    ExpMartingale,
}

impl ProblemKind {
    fn parse(s: &str) -> Result<Self> {
        match s {
            "lq" => Ok(Self::Lq),
            "smooth" => Ok(Self::Smooth),
            "exp-martingale" => Ok(Self::ExpMartingale),
            other => Err(Error::Config(format!(
                "unknown problem '{other}'; expected one of lq, smooth, exp-martingale"
            ))),
        }
    }
}

/// Fully resolved run parameters.
#[derive(Debug, Clone)]
pub struct RunConfig {
    // [core]
    pub horizon: f64,
    pub delta: f64,
    pub steps_per_delay: usize,
    pub n_paths: usize,
    pub seed: u64,
    /// Rayon worker count; 0 means the library default. Must not affect
    /// results.
    pub threads: usize,
    // [sdde]
    pub problem: ProblemKind,
    /// Constant candidate control on `[0, T]`.
    pub control: f64,
    pub phi0: f64,
    pub eta: f64,
    // [absde]
    pub basis_degree: usize,
    // [variation]
    pub tau: f64,
    pub spike_value: f64,
    pub eps_steps: Vec<usize>,
    // [mp]
    /// Spike times to scan; empty means every grid node.
    pub taus: Vec<f64>,
    /// Alternatives to scan; empty means the control set representatives.
    pub alternatives: Vec<f64>,
    /// Margin tolerance; 0 means three standard errors per cell.
    pub margin_tol: f64,
    pub k_tol: f64,
    // [lq]
    pub lq: LqParams<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            horizon: 1.0,
            delta: 0.5,
            steps_per_delay: 8,
            n_paths: 10_000,
            seed: 42,
            threads: 0,
            problem: ProblemKind::Lq,
            control: -1.0,
            phi0: 0.0,
            eta: -1.0,
            basis_degree: 2,
            tau: 0.25,
            spike_value: 1.0,
            eps_steps: vec![1, 2, 4],
            taus: Vec::new(),
            alternatives: Vec::new(),
            margin_tol: 0.0,
            k_tol: 2e-2,
            lq: LqParams::example(),
        }
    }
}

const EXAMPLE_STANZA: &str = "\
[core]
horizon = 1.0
delta = 0.5
steps_per_delay = 8
n_paths = 10000
seed = 42
threads = 0

[sdde]
problem = lq          # lq | smooth | exp-martingale
control = -1.0
phi0 = 0.0
eta = -1.0

[absde]
basis_degree = 2

[variation]
tau = 0.25
spike_value = 1.0
eps_steps = 1,2,4   # spike widths in grid steps; windows must fit in [0, T]

[mp]
taus = 0.25,0.75      # empty = every grid node
alternatives = -1,1   # empty = control-set representatives
margin_tol = 0        # 0 = three standard errors
k_tol = 0.02

[lq]
m = 2.0
m_bar = 2.0
c = 0.2
d = 0.1
d_bar = 0.1
n = 1.0
n_bar = 1.0
phi0 = 0.0
eta = -1.0
";

fn config_err(section: &str, key: &str, msg: &str) -> Error {
    Error::Config(format!(
        "[{section}] {key}: {msg}\n\nexample configuration:\n{EXAMPLE_STANZA}"
    ))
}

fn parse_num<T: std::str::FromStr>(section: &str, key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| config_err(section, key, &format!("cannot parse '{value}'")))
}

fn parse_list<T: std::str::FromStr>(section: &str, key: &str, value: &str) -> Result<Vec<T>> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|s| parse_num(section, key, s.trim()))
        .collect()
}

impl RunConfig {
    /// Parses a config file and applies the `DELAYMP_SEED` environment
    /// override.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let env_seed = match std::env::var("DELAYMP_SEED") {
            Ok(s) => Some(s.parse().map_err(|_| {
                Error::Config(format!("DELAYMP_SEED must be a 64-bit integer, got '{s}'"))
            })?),
            Err(_) => None,
        };
        Self::from_str_with_seed(&text, env_seed)
    }

    /// Parses config text; `seed_override` models the environment variable.
    pub fn from_str_with_seed(text: &str, seed_override: Option<u64>) -> Result<Self> {
        let mut cfg = Self::default();
        for (section, key, value) in parse_ini(text)? {
            cfg.apply(&section, &key, &value)?;
        }
        if let Some(seed) = seed_override {
            cfg.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        match (section, key) {
            ("core", "horizon") => self.horizon = parse_num(section, key, value)?,
            ("core", "delta") => self.delta = parse_num(section, key, value)?,
            ("core", "steps_per_delay") => self.steps_per_delay = parse_num(section, key, value)?,
            ("core", "n_paths") => self.n_paths = parse_num(section, key, value)?,
            ("core", "seed") => self.seed = parse_num(section, key, value)?,
            ("core", "threads") => self.threads = parse_num(section, key, value)?,
            ("sdde", "problem") => self.problem = ProblemKind::parse(value)?,
            ("sdde", "control") => self.control = parse_num(section, key, value)?,
            ("sdde", "phi0") => self.phi0 = parse_num(section, key, value)?,
            ("sdde", "eta") => self.eta = parse_num(section, key, value)?,
            ("absde", "basis_degree") => self.basis_degree = parse_num(section, key, value)?,
            ("variation", "tau") => self.tau = parse_num(section, key, value)?,
            ("variation", "spike_value") => self.spike_value = parse_num(section, key, value)?,
            ("variation", "eps_steps") => self.eps_steps = parse_list(section, key, value)?,
            ("mp", "taus") => self.taus = parse_list(section, key, value)?,
            ("mp", "alternatives") => self.alternatives = parse_list(section, key, value)?,
            ("mp", "margin_tol") => self.margin_tol = parse_num(section, key, value)?,
            ("mp", "k_tol") => self.k_tol = parse_num(section, key, value)?,
            ("lq", "m") => self.lq.m_lin = parse_num(section, key, value)?,
            ("lq", "m_bar") => self.lq.m_bar = parse_num(section, key, value)?,
            ("lq", "c") => self.lq.c = parse_num(section, key, value)?,
            ("lq", "d") => self.lq.d = parse_num(section, key, value)?,
            ("lq", "d_bar") => self.lq.d_bar = parse_num(section, key, value)?,
            ("lq", "n") => self.lq.n_lin = parse_num(section, key, value)?,
            ("lq", "n_bar") => self.lq.n_bar = parse_num(section, key, value)?,
            ("lq", "phi0") => self.lq.phi0 = parse_num(section, key, value)?,
            ("lq", "eta") => self.lq.eta = parse_num(section, key, value)?,
            _ => return Err(config_err(section, key, "unknown key")),
        }
        Ok(())
    }

    fn basis_size(&self) -> usize {
        (self.basis_degree + 1) * (self.basis_degree + 2) / 2
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_tol <= 0.0 || self.margin_tol < 0.0 {
            return Err(Error::Config(
                "tolerances must be positive (margin_tol may be 0 for the statistical default)"
                    .into(),
            ));
        }
        if self.n_paths < 2 * self.basis_size() {
            return Err(Error::Config(format!(
                "n_paths = {} is below 2 x basis size = {}",
                self.n_paths,
                2 * self.basis_size()
            )));
        }
        Ok(())
    }

    /// Builds the grid the config describes; LQ runs take `T`, `delta` from
    /// the LQ section instead.
    pub fn grid(&self) -> Result<TimeGrid<f64>> {
        TimeGrid::new(self.horizon, self.delta, self.steps_per_delay)
    }

    /// One-line grid provenance for output headers.
    pub fn grid_label(&self) -> String {
        format!(
            "T={} delta={} steps_per_delay={}",
            self.horizon, self.delta, self.steps_per_delay
        )
    }
}

/// Lines of `(section, key, value)`; section defaults to `core`.
fn parse_ini(text: &str) -> Result<Vec<(String, String, String)>> {
    let mut out = Vec::new();
    let mut section = "core".to_string();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find(['#', ';']) {
            Some(idx) => &raw[..idx],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            section = name.trim().to_string();
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config(format!(
                "line {}: expected 'key = value' or '[section]', got '{raw}'",
                lineno + 1
            )));
        };
        out.push((
            section.clone(),
            key.trim().to_string(),
            value.trim().to_string(),
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_uses_defaults() {
        let cfg = RunConfig::from_str_with_seed("", None).unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.problem, ProblemKind::Lq);
        assert_eq!(cfg.eps_steps, vec![1, 2, 4]);
    }

    #[test]
    fn sections_and_lists_parse() {
        let text = "\
[core]
seed = 7
n_paths = 500  # comment
[sdde]
problem = smooth
[variation]
eps_steps = 4, 8, 16, 32
[mp]
alternatives = -1, 1
[lq]
m_bar = 3.5
";
        let cfg = RunConfig::from_str_with_seed(text, None).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.n_paths, 500);
        assert_eq!(cfg.problem, ProblemKind::Smooth);
        assert_eq!(cfg.eps_steps, vec![4, 8, 16, 32]);
        assert_eq!(cfg.alternatives, vec![-1.0, 1.0]);
        assert_eq!(cfg.lq.m_bar, 3.5);
    }

    #[test]
    fn seed_override_wins() {
        let cfg = RunConfig::from_str_with_seed("seed = 9", Some(1234)).unwrap();
        assert_eq!(cfg.seed, 1234);
    }

    #[test]
    fn unknown_key_is_rejected_with_example() {
        let err = RunConfig::from_str_with_seed("[core]\nhorzon = 1.0", None).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("horzon"), "{msg}");
        assert!(msg.contains("example configuration"), "{msg}");
    }

    #[test]
    fn malformed_line_is_rejected() {
        assert!(RunConfig::from_str_with_seed("what is this", None).is_err());
    }

    #[test]
    fn validation_rejects_tiny_ensembles() {
        let err = RunConfig::from_str_with_seed("n_paths = 4", None).unwrap_err();
        assert!(err.to_string().contains("basis"));
    }

    #[test]
    fn validation_rejects_nonpositive_tolerance() {
        assert!(RunConfig::from_str_with_seed("[mp]\nk_tol = 0", None).is_err());
    }
}
