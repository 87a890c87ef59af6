//! Run certificates: every step's energy inequality recomputed from the raw trajectory,
//! plus the summed (cumulative) form and the SPD timeline.
//!
//! Text format, one `key = value` per line, floats with 17 significant digits:
//!
//! | key | meaning |
//! |-----|---------|
//! | `scheme` | scheme id |
//! | `config_hash` | SHA-256 of the configuration text |
//! | `audit_tol` | slack tolerance used for the verdict |
//! | `steps_planned`, `steps_completed` | step counts |
//! | `partial` | `true` when the run stopped early |
//! | `analyzed_regime` | `false` for fem1 with `alpha = 0` |
//! | `min_slack` | minimum per-step slack |
//! | `first_failing_step` | first step with slack below `-audit_tol`, or `none` |
//! | `cumulative_residual` | `min_n [F^0 + sum dt <f,u> - F^n - sum dt D]` |
//! | `max_abs_telescoping`, `max_abs_skew` | transport cancellation checks |
//! | `min_eigenvalue` | minimum stress eigenvalue over all states |
//! | `verdict` | `pass` or `fail` |
//! | `slack.<n>`, `min_eig.<n>` | per-step slack (`n >= 1`) and per-state eigenvalue (`n >= 0`) |

use sha2::{Digest, Sha256};

use crate::scalar::Real;
use crate::scheme::{EnergyBreakdown, Scheme, SchemeError};
use crate::stepper::Trajectory;

#[derive(Clone, Debug, PartialEq)]
pub struct RunCertificate<T> {
    pub scheme: String,
    pub config_hash: String,
    pub audit_tol: T,
    pub steps_planned: usize,
    pub audits: Vec<EnergyBreakdown<T>>,
    pub slacks: Vec<T>,
    pub min_slack: T,
    pub first_failing_step: Option<usize>,
    pub cumulative_residual: T,
    pub max_abs_telescoping: T,
    pub max_abs_skew: T,
    pub spd_timeline: Vec<T>,
    pub analyzed_regime: bool,
    pub partial: bool,
    pub passed: bool,
}

/// Hex SHA-256 of a configuration text.
pub fn config_hash(text: &[u8]) -> String {
    Sha256::digest(text).iter().map(|b| format!("{b:02x}")).collect()
}

/// Recomputes the audit of every completed step from `traj.states`, `traj.loads`, and
/// `traj.dts`; stored audits are not trusted.
pub fn certify<T: Real>(
    scheme: &Scheme<T>,
    traj: &Trajectory<T>,
    steps_planned: usize,
    config_hash: &str,
    audit_tol: T,
) -> Result<RunCertificate<T>, SchemeError> {
    let completed = traj.states.len().saturating_sub(1);
    if traj.loads.len() != completed || traj.dts.len() != completed {
        return Err(SchemeError::Mismatch("trajectory records disagree on the step count".into()));
    }
    let mut audits = Vec::with_capacity(completed);
    for n in 1..=completed {
        audits.push(scheme.audit(&traj.states[n - 1], &traj.states[n], &traj.loads[n - 1], traj.dts[n - 1])?);
    }
    let slacks: Vec<T> = audits.iter().map(|a| a.slack).collect();
    let min_slack = slacks.iter().fold(T::infinity(), |m, s| m.min(*s));
    let first_failing_step = slacks.iter().position(|s| !(*s >= -audit_tol)).map(|i| i + 1);

    let f0 = scheme.energy(&traj.states[0])?.total;
    let mut supply = T::zero();
    let mut dissipated = T::zero();
    let mut cumulative_residual = T::infinity();
    for (a, dt) in audits.iter().zip(&traj.dts) {
        supply += *dt * a.forcing;
        dissipated += *dt * a.dissipation();
        cumulative_residual = cumulative_residual.min(f0 + supply - a.total - dissipated);
    }
    if completed == 0 {
        cumulative_residual = T::zero();
    }
    let max_abs_telescoping = audits.iter().fold(T::zero(), |m, a| m.max(a.telescoping.abs()));
    let max_abs_skew = audits.iter().fold(T::zero(), |m, a| m.max(a.skew.abs()));
    let spd_timeline: Vec<T> = traj.states.iter().map(|s| s.min_stress_eigenvalue()).collect();
    let partial = traj.failure.is_some() || completed < steps_planned;
    let passed = !partial && first_failing_step.is_none() && slacks.iter().all(|s| !s.is_nan());
    Ok(RunCertificate {
        scheme: scheme.kind().name().to_string(),
        config_hash: config_hash.to_string(),
        audit_tol,
        steps_planned,
        audits,
        min_slack: if completed == 0 { T::zero() } else { min_slack },
        slacks,
        first_failing_step,
        cumulative_residual,
        max_abs_telescoping,
        max_abs_skew,
        spd_timeline,
        analyzed_regime: scheme.in_analyzed_regime(),
        partial,
        passed,
    })
}

fn num<T: Real>(x: T) -> String {
    format!("{:.16e}", x.as_f64())
}

impl<T: Real> RunCertificate<T> {
    pub fn min_eigenvalue(&self) -> T {
        self.spd_timeline.iter().fold(T::infinity(), |m, v| m.min(*v))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        kv("scheme", self.scheme.clone());
        kv("config_hash", self.config_hash.clone());
        kv("audit_tol", num(self.audit_tol));
        kv("steps_planned", self.steps_planned.to_string());
        kv("steps_completed", self.slacks.len().to_string());
        kv("partial", self.partial.to_string());
        kv("analyzed_regime", self.analyzed_regime.to_string());
        kv("min_slack", num(self.min_slack));
        kv("first_failing_step", self.first_failing_step.map_or("none".into(), |n| n.to_string()));
        kv("cumulative_residual", num(self.cumulative_residual));
        kv("max_abs_telescoping", num(self.max_abs_telescoping));
        kv("max_abs_skew", num(self.max_abs_skew));
        kv("min_eigenvalue", num(self.min_eigenvalue()));
        kv("verdict", if self.passed { "pass" } else { "fail" }.into());
        for (n, v) in self.slacks.iter().enumerate() {
            kv(&format!("slack.{}", n + 1), num(*v));
        }
        for (n, v) in self.spd_timeline.iter().enumerate() {
            kv(&format!("min_eig.{n}"), num(*v));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::SpaceTag;
    use crate::mesh::{build_structured_mesh, Rect};
    use crate::scenarios::random_spd_stress;
    use crate::scheme::{FluidParams, SchemeKind, SolverOpts};
    use crate::stepper::{run, TimeGrid};
    use crate::tensor::{RegParams, Regime};

    fn scheme(kind: SchemeKind) -> Scheme<f64> {
        let mesh = build_structured_mesh(3, 3, Rect::unit()).unwrap();
        let params = FluidParams::new(1.0, 1.0, 0.5, 0.01).unwrap();
        Scheme::new(mesh, kind, SpaceTag::VelP2, params, Regime::Regularized(RegParams::new(0.1, None).unwrap())).unwrap()
    }

    #[test]
    fn equilibrium_passes_with_zero_slack() {
        let s = scheme(SchemeKind::Dg0);
        let grid = TimeGrid::uniform(1.0, 4).unwrap();
        let traj = run(&s, s.equilibrium(0.0), &grid, None, &SolverOpts::default(), None).unwrap();
        let c = certify(&s, &traj, 4, &config_hash(b""), 1e-9).unwrap();
        assert!(c.passed);
        assert_eq!(c.min_slack, 0.0);
        assert!(c.to_text().contains("verdict = pass"));
    }

    #[test]
    fn recomputation_is_idempotent_and_detects_corruption() {
        for kind in [SchemeKind::Dg0, SchemeKind::Fem1] {
            let s = scheme(kind);
            let init = s.initial_state(|_| [0.0, 0.0], &random_spd_stress(&s, 0.5, 2.0, 9), 0.1).unwrap();
            let grid = TimeGrid::uniform(0.5, 5).unwrap();
            let traj = run(&s, init, &grid, None, &SolverOpts::default(), None).unwrap();
            let a = certify(&s, &traj, 5, "h", 1e-9).unwrap();
            let b = certify(&s, &traj, 5, "h", 1e-9).unwrap();
            assert!(a.passed);
            assert_eq!(a.to_text(), b.to_text());

            let mut bad = traj.clone();
            bad.states[3].velocity.iter_mut().for_each(|v| *v += 0.05);
            let c = certify(&s, &bad, 5, "h", 1e-9).unwrap();
            assert!(!c.passed);
            assert_eq!(c.first_failing_step, Some(3));
        }
    }

    #[test]
    fn short_trajectory_is_partial() {
        let s = scheme(SchemeKind::Dg0);
        let grid = TimeGrid::uniform(1.0, 2).unwrap();
        let traj = run(&s, s.equilibrium(0.0), &grid, None, &SolverOpts::default(), None).unwrap();
        let c = certify(&s, &traj, 3, "h", 1e-9).unwrap();
        assert!(c.partial && !c.passed);
    }

    #[test]
    fn hash_is_sha256_hex() {
        assert_eq!(config_hash(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
