//! Time loop, time-averaged forcing and continuation in the regularization parameter.

use crate::fem::gauss2;
use crate::mesh::Point;
use crate::scalar::{max_abs, Real};
use crate::scheme::{DiscreteState, EnergyBreakdown, Scheme, SchemeError, SchemeKind, SolverOpts};
use crate::tensor::{negative_part, RegParams, Regime};

/// Partition `0 = t_0 < ... < t_N = T` with `dt_n <= ratio * dt_{n-1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid<T> {
    times: Vec<T>,
    ratio: T,
}

impl<T: Real> TimeGrid<T> {
    pub const DEFAULT_RATIO: f64 = 2.0;

    pub fn uniform(t_end: T, n: usize) -> Result<Self, SchemeError> {
        if n == 0 || !(t_end > T::zero()) || !t_end.is_finite() {
            return Err(SchemeError::Params(format!("time grid needs T > 0 and N >= 1 (T = {t_end}, N = {n})")));
        }
        let dt = t_end / T::from_usize_lossy(n);
        Self::from_steps(&vec![dt; n], T::lit(Self::DEFAULT_RATIO))
    }

    pub fn from_steps(dts: &[T], ratio: T) -> Result<Self, SchemeError> {
        if dts.is_empty() {
            return Err(SchemeError::Params("time grid needs at least one step".into()));
        }
        if !(ratio > T::zero()) {
            return Err(SchemeError::Params(format!("step ratio C = {ratio} must be positive")));
        }
        let mut times = vec![T::zero()];
        for (n, &dt) in dts.iter().enumerate() {
            if !(dt > T::zero()) || !dt.is_finite() {
                return Err(SchemeError::Params(format!("step {} has dt = {dt}", n + 1)));
            }
            if n > 0 && dt > ratio * dts[n - 1] {
                return Err(SchemeError::Params(format!(
                    "step {} violates dt_n <= C dt_(n-1): {dt} > {ratio} * {}",
                    n + 1,
                    dts[n - 1]
                )));
            }
            times.push(times[n] + dt);
        }
        Ok(Self { times, ratio })
    }

    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    /// `dt_n`, `n >= 1`.
    pub fn dt(&self, n: usize) -> T {
        self.times[n] - self.times[n - 1]
    }

    /// Smoothing parameter of the initial projections, `dt_0 = dt_1`.
    pub fn dt0(&self) -> T {
        self.dt(1)
    }

    pub fn ratio(&self) -> T {
        self.ratio
    }
}

/// Space-time body force.
pub type Forcing<'a, T> = &'a (dyn Fn(T, Point<T>) -> Point<T> + Sync);

/// Load vector of `(1 / (tb - ta)) int_ta^tb f dt` by two-point Gauss in time.
pub fn time_average_forcing<T: Real>(scheme: &Scheme<T>, f: Option<Forcing<'_, T>>, ta: T, tb: T) -> Result<Vec<T>, SchemeError> {
    if !(tb > ta) {
        return Err(SchemeError::Params(format!("empty time interval [{ta}, {tb}]")));
    }
    let n = scheme.velocity_space().n_dofs();
    let Some(f) = f else { return Ok(vec![T::zero(); n]) };
    let (nodes, weights) = gauss2::<T>();
    let mut out = vec![T::zero(); n];
    for (s, w) in nodes.iter().zip(&weights) {
        let t = ta + *s * (tb - ta);
        let b = scheme.load_vector(|x| f(t, x));
        for (o, v) in out.iter_mut().zip(b) {
            *o += *w * v;
        }
    }
    Ok(out)
}

/// Why a run stopped early.
#[derive(Clone, Debug, PartialEq)]
pub struct FailureReport {
    /// Step index `n >= 1` that failed.
    pub step: usize,
    pub message: String,
    pub residual_history: Vec<f64>,
}

/// States `0..=n`, one audit per completed step.
#[derive(Clone, Debug)]
pub struct Trajectory<T> {
    pub states: Vec<DiscreteState<T>>,
    pub audits: Vec<EnergyBreakdown<T>>,
    pub iterations: Vec<usize>,
    pub residual_norms: Vec<T>,
    /// Load vectors used for each completed step.
    pub loads: Vec<Vec<T>>,
    pub dts: Vec<T>,
    pub failure: Option<FailureReport>,
}

impl<T: Real> Trajectory<T> {
    pub fn is_complete(&self, grid: &TimeGrid<T>) -> bool {
        self.failure.is_none() && self.audits.len() == grid.n_steps()
    }

    pub fn final_state(&self) -> &DiscreteState<T> {
        self.states.last().expect("trajectory holds the initial state")
    }
}

/// Runs every step of `grid`. A step failure halts the run and is recorded in the
/// returned trajectory; `guesses[n]` seeds the nonlinear solve for step `n`.
pub fn run<T: Real>(
    scheme: &Scheme<T>,
    initial: DiscreteState<T>,
    grid: &TimeGrid<T>,
    forcing: Option<Forcing<'_, T>>,
    opts: &SolverOpts<T>,
    guesses: Option<&[DiscreteState<T>]>,
) -> Result<Trajectory<T>, SchemeError> {
    opts.validate()?;
    let mut traj = Trajectory {
        states: vec![initial],
        audits: Vec::with_capacity(grid.n_steps()),
        iterations: Vec::new(),
        residual_norms: Vec::new(),
        loads: Vec::new(),
        dts: Vec::new(),
        failure: None,
    };
    for n in 1..=grid.n_steps() {
        let (ta, tb) = (grid.times()[n - 1], grid.times()[n]);
        let dt = grid.dt(n);
        let load = time_average_forcing(scheme, forcing, ta, tb)?;
        let prev = traj.states.last().expect("non-empty");
        let guess = guesses.and_then(|g| g.get(n));
        match scheme.step(prev, &load, dt, opts, guess) {
            Ok(out) => {
                let mut state = out.state;
                state.t = tb;
                let audit = scheme.audit(prev, &state, &load, dt)?;
                traj.audits.push(audit);
                traj.iterations.push(out.iterations);
                traj.residual_norms.push(out.residual_norm);
                traj.loads.push(load);
                traj.dts.push(dt);
                traj.states.push(state);
            }
            Err(SchemeError::StepFailure { iterations, residual, reason, history, .. }) => {
                traj.failure = Some(FailureReport {
                    step: n,
                    message: format!("step {n} failed after {iterations} iterations (residual {residual:e}): {reason}"),
                    residual_history: history,
                });
                break;
            }
            Err(e) => {
                traj.failure = Some(FailureReport { step: n, message: e.to_string(), residual_history: Vec::new() });
                break;
            }
        }
    }
    Ok(traj)
}

/// Area-weighted `int |[sigma]_-|` (element values for dg0, lumped for fem1).
pub fn negative_part_integral<T: Real>(scheme: &Scheme<T>, state: &DiscreteState<T>) -> Result<T, SchemeError> {
    let mesh = scheme.mesh();
    let norms: Vec<T> = state.stress.iter().map(|s| negative_part(s).map(|m| m.norm())).collect::<Result<_, _>>()?;
    let mut total = T::zero();
    match scheme.kind() {
        SchemeKind::Dg0 => {
            for (k, v) in norms.iter().enumerate() {
                total += mesh.area(k) * *v;
            }
        }
        SchemeKind::Fem1 => {
            for (k, el) in mesh.elements.iter().enumerate() {
                total += mesh.area(k) / T::lit(3.0) * (norms[el[0]] + norms[el[1]] + norms[el[2]]);
            }
        }
    }
    Ok(total)
}

/// One value of the regularization parameter in a continuation.
#[derive(Clone, Debug)]
pub struct ContinuationLeg<T> {
    pub delta: T,
    pub completed_steps: usize,
    pub failure: Option<FailureReport>,
    pub final_state: DiscreteState<T>,
    pub negative_part: T,
    pub min_eigenvalue: T,
    pub min_slack: T,
}

#[derive(Clone, Debug)]
pub struct ContinuationReport<T> {
    pub legs: Vec<ContinuationLeg<T>>,
    /// Infinity-norm difference of consecutive legs' final states.
    pub differences: Vec<T>,
    /// Residual of the last leg's final step in the unregularized scheme; `Err` holds the
    /// reason it could not be evaluated (failed leg or non-positive-definite stress).
    pub unregularized_residual: Result<T, String>,
    /// Full trajectory of the last leg.
    pub final_trajectory: Trajectory<T>,
}

/// Runs the full trajectory for each `delta` of a strictly decreasing schedule in `(0, 1/2]`,
/// seeding each leg's nonlinear solves with the previous leg's states.
pub fn delta_continuation<T: Real>(
    scheme: &Scheme<T>,
    initial: &DiscreteState<T>,
    grid: &TimeGrid<T>,
    forcing: Option<Forcing<'_, T>>,
    schedule: &[T],
    opts: &SolverOpts<T>,
) -> Result<ContinuationReport<T>, SchemeError> {
    if schedule.is_empty() || schedule.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(SchemeError::Params("continuation schedule must be non-empty and strictly decreasing".into()));
    }
    let cutoff = scheme.regime().cutoff();
    let mut legs: Vec<ContinuationLeg<T>> = Vec::with_capacity(schedule.len());
    let mut last: Option<Trajectory<T>> = None;
    for &delta in schedule {
        let regime = Regime::Regularized(RegParams::new(delta, cutoff)?);
        let leg_scheme = scheme.with_regime(regime);
        let guesses = last.as_ref().map(|t| t.states.as_slice());
        let traj = run(&leg_scheme, initial.clone(), grid, forcing, opts, guesses)?;
        let fin = traj.final_state().clone();
        legs.push(ContinuationLeg {
            delta,
            completed_steps: traj.audits.len(),
            failure: traj.failure.clone(),
            negative_part: negative_part_integral(&leg_scheme, &fin)?,
            min_eigenvalue: fin.min_stress_eigenvalue(),
            min_slack: traj.audits.iter().map(|a| a.slack).fold(T::infinity(), |a, b| a.min(b)),
            final_state: fin,
        });
        last = Some(traj);
    }
    let differences = legs
        .windows(2)
        .map(|w| {
            let a = scheme.pack(&w[0].final_state);
            let b = scheme.pack(&w[1].final_state);
            max_abs(&a.iter().zip(&b).map(|(x, y)| *x - *y).collect::<Vec<_>>())
        })
        .collect();
    let final_trajectory = last.expect("schedule is non-empty");
    let unregularized_residual = match &final_trajectory {
        traj if traj.is_complete(grid) && !traj.audits.is_empty() => {
            let n = traj.audits.len();
            let unreg = scheme.with_regime(Regime::Unregularized { cutoff });
            unreg
                .residual_norm(&traj.states[n - 1], &traj.states[n], &traj.loads[n - 1], traj.dts[n - 1])
                .map_err(|e| e.to_string())
        }
        _ => Err("last leg did not complete".to_string()),
    };
    Ok(ContinuationReport { legs, differences, unregularized_residual, final_trajectory })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::SpaceTag;
    use crate::mesh::{build_structured_mesh, Rect};
    use crate::scheme::FluidParams;
    use crate::tensor::SymMat;

    fn scheme(kind: SchemeKind) -> Scheme<f64> {
        let mesh = build_structured_mesh(2, 2, Rect::unit()).unwrap();
        let p = FluidParams::new(1.0, 1.0, 0.5, 0.01).unwrap();
        Scheme::new(mesh, kind, SpaceTag::VelP2, p, Regime::Regularized(RegParams::new(0.1, None).unwrap())).unwrap()
    }

    #[test]
    fn grid_ratio_guard() {
        assert!(TimeGrid::from_steps(&[0.1, 0.2, 0.4], 2.0).is_ok());
        assert!(TimeGrid::from_steps(&[0.1, 0.3], 2.0).is_err());
        let g = TimeGrid::uniform(1.0, 4).unwrap();
        assert_eq!(g.n_steps(), 4);
        assert_eq!(g.dt0(), 0.25);
        assert!(TimeGrid::<f64>::uniform(1.0, 0).is_err());
    }

    #[test]
    fn forcing_average_is_exact_for_affine_time_dependence() {
        let s = scheme(SchemeKind::Dg0);
        let g = |x: Point<f64>| [x[1] * x[1], x[0]];
        let f = move |t: f64, x: Point<f64>| {
            let v = g(x);
            [t * v[0], t * v[1]]
        };
        let avg = time_average_forcing(&s, Some(&f), 0.0, 1.0).unwrap();
        let half = s.load_vector(|x| [0.5 * g(x)[0], 0.5 * g(x)[1]]);
        for (a, b) in avg.iter().zip(&half) {
            assert!((a - b).abs() < 1e-15);
        }
        let c = |_: f64, x: Point<f64>| g(x);
        let avg = time_average_forcing(&s, Some(&c), 0.3, 0.7).unwrap();
        let direct = s.load_vector(g);
        assert!(avg.iter().zip(&direct).all(|(a, b)| (a - b).abs() < 1e-15));
        assert!(time_average_forcing(&s, None, 0.0, 1.0).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn equilibrium_run_is_constant() {
        for kind in [SchemeKind::Dg0, SchemeKind::Fem1] {
            let s = scheme(kind);
            let grid = TimeGrid::uniform(1.0, 10).unwrap();
            let traj = run(&s, s.equilibrium(0.0), &grid, None, &SolverOpts::default(), None).unwrap();
            assert!(traj.is_complete(&grid));
            for st in &traj.states {
                assert_eq!(st.velocity, traj.states[0].velocity);
                assert_eq!(st.stress, traj.states[0].stress);
            }
            assert!(traj.audits.iter().all(|a| a.slack == 0.0));
        }
    }

    #[test]
    fn identity_stress_continuation_is_delta_independent() {
        let s = scheme(SchemeKind::Fem1);
        let grid = TimeGrid::uniform(0.5, 2).unwrap();
        let rep = delta_continuation(&s, &s.equilibrium(0.0), &grid, None, &[0.5, 0.25, 0.125], &SolverOpts::default()).unwrap();
        assert!(rep.differences.iter().all(|d| *d == 0.0));
        assert!(rep.unregularized_residual.unwrap() < 1e-15);
        assert!(delta_continuation(&s, &s.equilibrium(0.0), &grid, None, &[0.1, 0.2], &SolverOpts::default()).is_err());
    }

    #[test]
    fn failure_is_reported_with_partial_trajectory() {
        let s = scheme(SchemeKind::Dg0);
        let mut init = s.equilibrium(0.0);
        init.stress[0] = SymMat::diag(&[3.0, 0.2]);
        let grid = TimeGrid::uniform(1.0, 3).unwrap();
        let opts = SolverOpts { max_iter: 1, tol: 1e-300, ..Default::default() };
        let traj = run(&s, init, &grid, None, &opts, None).unwrap();
        let f = traj.failure.expect("must fail");
        assert_eq!(f.step, 1);
        assert_eq!(traj.states.len(), 1);
    }
}
