//! Run configuration: a flat TOML file (`key = value`, no tables).
//!
//! | key | type | default |
//! |-----|------|---------|
//! | `scheme` | `"dg0"`, `"fem1"`, `"fem1-unreg"` | required |
//! | `velocity` | `"p2"`, `"p2-reduced"` (dg0), `"mini"` (fem1) | `"p2"` |
//! | `nx`, `ny` | structured mesh cells per side | 8 |
//! | `mesh_file` | plain-text mesh, relative to the config file | none |
//! | `re`, `wi`, `eps`, `alpha` | physics | 1, 1, 0.5, 0 (dg0) or 0.01 (fem1) |
//! | `delta` | regularization in (0, 1/2]; not used by fem1-unreg | 0.1 |
//! | `cutoff` | cut-off L >= 2 | none |
//! | `t_end`, `steps` | uniform time grid | 1, 10 |
//! | `dts` | explicit steps, overrides `t_end`/`steps` | none |
//! | `forcing` | `"none"`, `"cavity"`, `"constant"` | `"none"`, `"cavity"` for the cavity initial state |
//! | `forcing_amplitude` | cavity amplitude | 100 |
//! | `forcing_x`, `forcing_y` | constant body force | 0 |
//! | `initial` | `"equilibrium"`, `"random-spd"`, `"lid-driven-cavity"` | `"equilibrium"` |
//! | `spd_min`, `spd_max`, `seed` | random SPD initial stress | 0.5, 2, 1 |
//! | `vortex_amplitude` | initial no-slip vortex of the cavity state | 64 |
//! | `output_dir` | output directory | `"out"` |
//! | `tol`, `max_iter`, `audit_tol` | solver | 1e-10, 200, 1e-9 |
//! | `continuation` | strictly decreasing list of delta values | none |

use std::path::{Path, PathBuf};

use serde::Deserialize;
use viscofem::fem::SpaceTag;
use viscofem::mesh::{build_structured_mesh, Rect, SimplicialMesh};
use viscofem::scheme::{FluidParams, SchemeKind, SolverOpts};
use viscofem::stepper::TimeGrid;
use viscofem::tensor::{RegParams, Regime};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}:{line}:{column}: {message}")]
    At { path: String, line: usize, column: usize, message: String },
    #[error("{path}: {message}")]
    File { path: String, message: String },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Raw {
    scheme: String,
    velocity: Option<String>,
    nx: Option<usize>,
    ny: Option<usize>,
    mesh_file: Option<String>,
    re: Option<f64>,
    wi: Option<f64>,
    eps: Option<f64>,
    alpha: Option<f64>,
    delta: Option<f64>,
    cutoff: Option<f64>,
    t_end: Option<f64>,
    steps: Option<usize>,
    dts: Option<Vec<f64>>,
    forcing: Option<String>,
    forcing_amplitude: Option<f64>,
    forcing_x: Option<f64>,
    forcing_y: Option<f64>,
    initial: Option<String>,
    spd_min: Option<f64>,
    spd_max: Option<f64>,
    seed: Option<u64>,
    vortex_amplitude: Option<f64>,
    output_dir: Option<String>,
    tol: Option<f64>,
    max_iter: Option<usize>,
    audit_tol: Option<f64>,
    continuation: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ForcingSpec {
    None,
    Cavity { amplitude: f64 },
    Constant { fx: f64, fy: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitialSpec {
    Equilibrium,
    RandomSpd { min: f64, max: f64, seed: u64 },
    Cavity { vortex: f64 },
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub scheme_label: String,
    pub kind: SchemeKind,
    pub velocity: SpaceTag,
    pub mesh: SimplicialMesh<f64>,
    pub params: FluidParams<f64>,
    pub regime: Regime<f64>,
    pub grid: TimeGrid<f64>,
    pub forcing: ForcingSpec,
    pub initial: InitialSpec,
    pub output_dir: PathBuf,
    pub solver: SolverOpts<f64>,
    pub continuation: Option<Vec<f64>>,
    /// Hash of the exact configuration text.
    pub hash: String,
}

/// Byte offset to 1-based `(line, column)`.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |i| before.len() - i - 1) + 1;
    (line, column)
}

/// Position of the value of `key`, or of the file start when the key is absent.
fn key_position(text: &str, key: &str) -> (usize, usize) {
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim_start();
        if let Some(rest) = trimmed.strip_prefix(key) {
            let rest_trim = rest.trim_start();
            if let Some(after) = rest_trim.strip_prefix('=') {
                let indent = line.len() - trimmed.len();
                let eq = key.len() + (rest.len() - rest_trim.len());
                let value = after.len() - after.trim_start().len();
                return line_col(text, offset + indent + eq + 1 + value);
            }
        }
        offset += line.len();
    }
    (1, 1)
}

struct Ctx<'a> {
    text: &'a str,
    path: &'a str,
}

impl Ctx<'_> {
    fn err(&self, key: &str, message: impl Into<String>) -> ConfigError {
        let (line, column) = key_position(self.text, key);
        ConfigError::At { path: self.path.to_string(), line, column, message: format!("{key}: {}", message.into()) }
    }
}

pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
    let p = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::File { path: p.clone(), message: e.to_string() })?;
    parse(&text, &p, path.parent().unwrap_or(Path::new(".")))
}

pub fn parse(text: &str, path: &str, base: &Path) -> Result<RunConfig, ConfigError> {
    let raw: Raw = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((1, 1), |s| line_col(text, s.start));
        ConfigError::At { path: path.to_string(), line, column, message: e.message().trim().to_string() }
    })?;
    let cx = Ctx { text, path };

    let (kind, unreg) = match raw.scheme.as_str() {
        "dg0" => (SchemeKind::Dg0, false),
        "fem1" => (SchemeKind::Fem1, false),
        "fem1-unreg" => (SchemeKind::Fem1, true),
        other => return Err(cx.err("scheme", format!("unknown scheme `{other}` (expected dg0, fem1 or fem1-unreg)"))),
    };
    let velocity: SpaceTag = raw
        .velocity
        .as_deref()
        .unwrap_or("p2")
        .parse()
        .map_err(|_| cx.err("velocity", "expected p2, p2-reduced or mini"))?;

    let mesh = match &raw.mesh_file {
        Some(f) => {
            if raw.nx.is_some() || raw.ny.is_some() {
                return Err(cx.err("mesh_file", "give either mesh_file or nx/ny, not both"));
            }
            let full = base.join(f);
            let t = std::fs::read_to_string(&full).map_err(|e| cx.err("mesh_file", format!("{}: {e}", full.display())))?;
            SimplicialMesh::from_text(&t).map_err(|e| cx.err("mesh_file", e.to_string()))?
        }
        None => {
            let (nx, ny) = (raw.nx.unwrap_or(8), raw.ny.unwrap_or(8));
            if nx == 0 {
                return Err(cx.err("nx", "must be >= 1"));
            }
            if ny == 0 {
                return Err(cx.err("ny", "must be >= 1"));
            }
            build_structured_mesh(nx, ny, Rect::unit()).map_err(|e| cx.err("nx", e.to_string()))?
        }
    };

    let default_alpha = if kind == SchemeKind::Fem1 { 0.01 } else { 0.0 };
    let (re, wi, eps, alpha) = (raw.re.unwrap_or(1.0), raw.wi.unwrap_or(1.0), raw.eps.unwrap_or(0.5), raw.alpha.unwrap_or(default_alpha));
    for (k, v) in [("re", re), ("wi", wi)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(cx.err(k, format!("{v} must be positive and finite")));
        }
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(cx.err("eps", format!("{eps} must lie in (0, 1)")));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(cx.err("alpha", format!("{alpha} must be >= 0")));
    }
    if kind == SchemeKind::Dg0 && alpha != 0.0 {
        return Err(cx.err("alpha", "stress diffusion is only used by fem1"));
    }
    let params = FluidParams::new(re, wi, eps, alpha).map_err(|e| cx.err("re", e.to_string()))?;

    if let Some(l) = raw.cutoff {
        if !(l >= 2.0 && l.is_finite()) {
            return Err(cx.err("cutoff", format!("L = {l} must be finite and >= 2")));
        }
    }
    let regime = if unreg {
        if raw.delta.is_some() {
            return Err(cx.err("delta", "fem1-unreg has no regularization parameter"));
        }
        if raw.continuation.is_some() {
            return Err(cx.err("continuation", "continuation needs a regularized scheme"));
        }
        Regime::Unregularized { cutoff: raw.cutoff }
    } else {
        let delta = raw.delta.unwrap_or(0.1);
        if !(delta > 0.0 && delta <= 0.5) {
            return Err(cx.err("delta", format!("{delta} must lie in (0, 1/2]")));
        }
        Regime::Regularized(RegParams::new(delta, raw.cutoff).map_err(|e| cx.err("delta", e.to_string()))?)
    };

    let grid = match &raw.dts {
        Some(d) => {
            if raw.t_end.is_some() || raw.steps.is_some() {
                return Err(cx.err("dts", "give either dts or t_end/steps, not both"));
            }
            TimeGrid::from_steps(d, TimeGrid::<f64>::DEFAULT_RATIO).map_err(|e| cx.err("dts", e.to_string()))?
        }
        None => {
            let t_end = raw.t_end.unwrap_or(1.0);
            if !(t_end > 0.0 && t_end.is_finite()) {
                return Err(cx.err("t_end", format!("{t_end} must be positive")));
            }
            let steps = raw.steps.unwrap_or(10);
            if steps == 0 {
                return Err(cx.err("steps", "must be >= 1"));
            }
            TimeGrid::uniform(t_end, steps).map_err(|e| cx.err("steps", e.to_string()))?
        }
    };

    let initial = match raw.initial.as_deref().unwrap_or("equilibrium") {
        "equilibrium" => InitialSpec::Equilibrium,
        "lid-driven-cavity" => {
            let vortex = raw.vortex_amplitude.unwrap_or(64.0);
            if !vortex.is_finite() {
                return Err(cx.err("vortex_amplitude", "must be finite"));
            }
            InitialSpec::Cavity { vortex }
        }
        "random-spd" => {
            let (min, max) = (raw.spd_min.unwrap_or(0.5), raw.spd_max.unwrap_or(2.0));
            if !(min > 0.0) {
                return Err(cx.err("spd_min", format!("{min} must be positive")));
            }
            if !(max >= min && max.is_finite()) {
                return Err(cx.err("spd_max", format!("{max} must be finite and >= spd_min")));
            }
            InitialSpec::RandomSpd { min, max, seed: raw.seed.unwrap_or(1) }
        }
        other => return Err(cx.err("initial", format!("unknown initial state `{other}`"))),
    };
    if raw.vortex_amplitude.is_some() && !matches!(initial, InitialSpec::Cavity { .. }) {
        return Err(cx.err("vortex_amplitude", "only used with initial = \"lid-driven-cavity\""));
    }
    if !matches!(initial, InitialSpec::RandomSpd { .. }) {
        for (k, set) in [("spd_min", raw.spd_min.is_some()), ("spd_max", raw.spd_max.is_some()), ("seed", raw.seed.is_some())] {
            if set {
                return Err(cx.err(k, "only used with initial = \"random-spd\""));
            }
        }
    }

    let default_forcing = if matches!(initial, InitialSpec::Cavity { .. }) { "cavity" } else { "none" };
    let forcing = match raw.forcing.as_deref().unwrap_or(default_forcing) {
        "none" => ForcingSpec::None,
        "cavity" => {
            let amplitude = raw.forcing_amplitude.unwrap_or(100.0);
            if !amplitude.is_finite() {
                return Err(cx.err("forcing_amplitude", "must be finite"));
            }
            ForcingSpec::Cavity { amplitude }
        }
        "constant" => {
            let (fx, fy) = (raw.forcing_x.unwrap_or(0.0), raw.forcing_y.unwrap_or(0.0));
            if !(fx.is_finite() && fy.is_finite()) {
                return Err(cx.err("forcing_x", "must be finite"));
            }
            ForcingSpec::Constant { fx, fy }
        }
        other => return Err(cx.err("forcing", format!("unknown forcing `{other}`"))),
    };

    let solver = SolverOpts {
        tol: raw.tol.unwrap_or(1e-10),
        max_iter: raw.max_iter.unwrap_or(200),
        audit_tol: raw.audit_tol.unwrap_or(1e-9),
        parallel: false,
    };
    if !(solver.tol > 0.0) {
        return Err(cx.err("tol", "must be positive"));
    }
    if solver.max_iter == 0 {
        return Err(cx.err("max_iter", "must be >= 1"));
    }
    if !(solver.audit_tol >= 0.0) {
        return Err(cx.err("audit_tol", "must be >= 0"));
    }

    if let Some(c) = &raw.continuation {
        if c.is_empty() || c.iter().any(|d| !(*d > 0.0 && *d <= 0.5)) || c.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(cx.err("continuation", "must be a non-empty, strictly decreasing list in (0, 1/2]"));
        }
    }

    Ok(RunConfig {
        scheme_label: raw.scheme.clone(),
        kind,
        velocity,
        mesh,
        params,
        regime,
        grid,
        forcing,
        initial,
        output_dir: PathBuf::from(raw.output_dir.unwrap_or_else(|| "out".into())),
        solver,
        continuation: raw.continuation,
        hash: viscofem::audit::config_hash(text.as_bytes()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_str(t: &str) -> Result<RunConfig, ConfigError> {
        parse(t, "test.toml", Path::new("."))
    }

    #[test]
    fn minimal_config_uses_defaults() {
        let c = parse_str("scheme = \"fem1\"\n").unwrap();
        assert_eq!(c.kind, SchemeKind::Fem1);
        assert_eq!(c.params.alpha, 0.01);
        assert_eq!(c.grid.n_steps(), 10);
        assert_eq!(c.initial, InitialSpec::Equilibrium);
        assert_eq!(c.forcing, ForcingSpec::None);
    }

    #[test]
    fn delta_out_of_range_points_at_value() {
        let e = parse_str("scheme = \"dg0\"\n\ndelta = 0.9\n").unwrap_err().to_string();
        assert!(e.starts_with("test.toml:3:9:"), "{e}");
        assert!(e.contains("(0, 1/2]"), "{e}");
    }

    #[test]
    fn syntax_error_reports_line_and_column() {
        let e = parse_str("scheme = \"dg0\"\nre = = 1\n").unwrap_err().to_string();
        assert!(e.starts_with("test.toml:2:"), "{e}");
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(parse_str("scheme = \"dg0\"\nfoo = 1\n").is_err());
    }

    #[test]
    fn cavity_defaults_to_cavity_forcing() {
        let c = parse_str("scheme = \"dg0\"\ninitial = \"lid-driven-cavity\"\n").unwrap();
        assert_eq!(c.forcing, ForcingSpec::Cavity { amplitude: 100.0 });
    }

    #[test]
    fn random_spd_keys_require_random_spd() {
        assert!(parse_str("scheme = \"dg0\"\nseed = 3\n").is_err());
        assert!(parse_str("scheme = \"dg0\"\ninitial = \"random-spd\"\nseed = 3\n").is_ok());
    }

    #[test]
    fn unregularized_rejects_delta() {
        assert!(parse_str("scheme = \"fem1-unreg\"\ndelta = 0.1\n").is_err());
        let c = parse_str("scheme = \"fem1-unreg\"\ncutoff = 10.0\n").unwrap();
        assert!(!c.regime.is_regularized());
    }

    #[test]
    fn key_position_skips_prefix_keys() {
        let t = "forcing_x = 1\nforcing = \"constant\"\n";
        assert_eq!(key_position(t, "forcing"), (2, 11));
    }
}
