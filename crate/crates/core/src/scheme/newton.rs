//! Damped Newton iteration with monotone acceptance.

use crate::linsolve::{LuFactors, SparseMatrix};
use crate::scalar::{max_abs, Real};

use super::SchemeError;

/// What the iteration needs from a discrete problem.
pub(crate) trait NonlinearSystem<T: Real> {
    /// `Err` signals a point outside the residual's domain (treated like an increase).
    fn residual(&self, x: &[T]) -> Result<Vec<T>, SchemeError>;
    fn jacobian(&self, x: &[T]) -> Result<SparseMatrix<T>, SchemeError>;
}

#[derive(Clone, Debug)]
pub(crate) struct NewtonResult<T> {
    pub x: Vec<T>,
    pub iterations: usize,
    pub residual_norm: T,
    pub history: Vec<T>,
}

#[derive(Clone, Debug)]
pub(crate) struct NewtonFailure<T> {
    pub x: Vec<T>,
    pub iterations: usize,
    pub history: Vec<T>,
    pub reason: String,
}

const MAX_HALVINGS: usize = 40;

/// Damping: `theta` starts at 1, is halved whenever the trial residual would increase
/// (the trial is rejected) and is reset to 1 after two consecutive accepted decreases.
pub(crate) fn solve<T: Real, S: NonlinearSystem<T>>(
    sys: &S,
    x0: Vec<T>,
    tol: T,
    max_iter: usize,
) -> Result<NewtonResult<T>, NewtonFailure<T>> {
    let mut x = x0;
    let mut r = match sys.residual(&x) {
        Ok(r) => r,
        Err(e) => return Err(NewtonFailure { x, iterations: 0, history: vec![], reason: format!("initial iterate: {e}") }),
    };
    let mut norm = max_abs(&r);
    let mut history = vec![norm];
    let mut theta = T::one();
    let mut decreases = 0usize;
    let mut iterations = 0usize;
    while norm > tol || !norm.is_finite() {
        if iterations >= max_iter {
            return Err(NewtonFailure { x, iterations, history, reason: format!("no convergence in {max_iter} iterations") });
        }
        iterations += 1;
        let step = sys.jacobian(&x).and_then(|j| {
            let csc = j.compile()?;
            let neg: Vec<T> = r.iter().map(|v| -*v).collect();
            Ok(LuFactors::factor(&csc)?.solve_refined(&csc, &neg).0)
        });
        let dx = match step {
            Ok(d) => d,
            Err(e) => return Err(NewtonFailure { x, iterations, history, reason: format!("linear solve: {e}") }),
        };
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let trial: Vec<T> = x.iter().zip(&dx).map(|(a, b)| *a + theta * *b).collect();
            if let Ok(rt) = sys.residual(&trial) {
                let nt = max_abs(&rt);
                if nt.is_finite() && nt <= norm {
                    x = trial;
                    r = rt;
                    norm = nt;
                    accepted = true;
                    break;
                }
            }
            theta *= T::lit(0.5);
            decreases = 0;
        }
        if !accepted {
            return Err(NewtonFailure { x, iterations, history, reason: "damping exhausted without decrease".into() });
        }
        history.push(norm);
        decreases += 1;
        if decreases >= 2 {
            theta = T::one();
            decreases = 0;
        }
    }
    Ok(NewtonResult { x, iterations, residual_norm: norm, history })
}
