//! The two fully discrete schemes and what they share: parameters, states, the element
//! tabulation, global assembly, the nonlinear step and the initial projections.
//!
//! Unknowns are kept in a *natural* order `[velocity | pressure | stress]`, stress stored
//! as packed symmetric components per node. Linear solves use a geometric reordering
//! (by node location, `y` then `x`) that keeps the factor fill banded.

pub mod dg0;
pub mod fem1;
pub(crate) mod newton;

use rayon::prelude::*;
use thiserror::Error;

use crate::fem::{check_lbb_pair, triangle_rule, FemError, PressureSpace, SpaceTag, VelocitySpace};
use crate::linsolve::{LuFactors, SolveError, SparseMatrix};
use crate::mesh::{ElementGeom, Point, SimplicialMesh};
use crate::scalar::{max_abs, Real};
use crate::tensor::{Mat, Regime, SymMat, TensorError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchemeError {
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("state does not match the discretization: {0}")]
    Mismatch(String),
    #[error("step failed after {iterations} iterations (residual {residual:e}): {reason}")]
    StepFailure {
        iterations: usize,
        residual: f64,
        reason: String,
        history: Vec<f64>,
        /// Last iterate in natural unknown order.
        last_iterate: Vec<f64>,
    },
}

/// Physical parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FluidParams<T> {
    pub re: T,
    pub wi: T,
    /// Viscosity fraction `epsilon in (0, 1)`.
    pub eps: T,
    /// Stress diffusion `alpha >= 0` (ignored by dg0).
    pub alpha: T,
}

impl<T: Real> FluidParams<T> {
    pub fn new(re: T, wi: T, eps: T, alpha: T) -> Result<Self, SchemeError> {
        if !(re > T::zero() && re.is_finite()) {
            return Err(SchemeError::Params(format!("Re = {re} must be positive")));
        }
        if !(wi > T::zero() && wi.is_finite()) {
            return Err(SchemeError::Params(format!("Wi = {wi} must be positive")));
        }
        if !(eps > T::zero() && eps < T::one()) {
            return Err(SchemeError::Params(format!("eps = {eps} must lie in (0, 1)")));
        }
        if !(alpha >= T::zero() && alpha.is_finite()) {
            return Err(SchemeError::Params(format!("alpha = {alpha} must be >= 0")));
        }
        Ok(Self { re, wi, eps, alpha })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SchemeKind {
    /// Piecewise constant stress with upwind facet transport.
    Dg0,
    /// Continuous P1 stress with diffusion, lumping and the transport tensor.
    Fem1,
}

impl SchemeKind {
    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::Dg0 => "dg0",
            SchemeKind::Fem1 => "fem1",
        }
    }

    pub fn pressure_space(self) -> SpaceTag {
        match self {
            SchemeKind::Dg0 => SpaceTag::PresP0,
            SchemeKind::Fem1 => SpaceTag::PresP1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOpts<T> {
    /// Nonlinear residual tolerance (infinity norm).
    pub tol: T,
    pub max_iter: usize,
    /// Energy audit passes iff `slack >= -audit_tol`.
    pub audit_tol: T,
    /// Element-parallel assembly; the reduction order is fixed either way.
    pub parallel: bool,
}

impl<T: Real> Default for SolverOpts<T> {
    fn default() -> Self {
        Self { tol: T::lit(1e-10), max_iter: 200, audit_tol: T::lit(1e-9), parallel: false }
    }
}

impl<T: Real> SolverOpts<T> {
    pub fn validate(&self) -> Result<(), SchemeError> {
        if !(self.tol > T::zero()) || self.max_iter == 0 || !(self.audit_tol >= T::zero()) {
            return Err(SchemeError::Params("solver tol > 0, max_iter >= 1 and audit_tol >= 0 required".into()));
        }
        Ok(())
    }
}

/// One time level. `stress` holds one matrix per element (dg0) or per vertex (fem1).
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteState<T> {
    pub velocity: Vec<T>,
    pub pressure: Vec<T>,
    pub stress: Vec<SymMat<T>>,
    pub t: T,
}

impl<T: Real> DiscreteState<T> {
    pub fn min_stress_eigenvalue(&self) -> T {
        self.stress
            .iter()
            .map(|s| s.min_eigenvalue().unwrap_or_else(|_| T::nan()))
            .fold(T::infinity(), |a, b| a.min(b))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct EnergyParts<T> {
    pub kinetic: T,
    pub entropy: T,
    pub total: T,
}

/// Every term of the discrete energy inequality for one step.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct EnergyBreakdown<T> {
    pub total: T,
    pub kinetic: T,
    pub entropy: T,
    /// `(F^n - F^{n-1}) / dt`
    pub energy_rate: T,
    /// `Re / (2 dt) int |u^n - u^{n-1}|^2`
    pub increment: T,
    /// `(1 - eps) int |grad u^n|^2`
    pub viscous: T,
    /// `eps / (2 Wi^2) int tr(beta + beta^{-1} - 2 I)`, lumped for fem1
    pub stress_dissipation: T,
    /// `alpha eps delta^2 / (2 Wi) int |grad pi_h G'|^2` (fem1, regularized)
    pub diffusion: T,
    /// `<f^n, u^n>`
    pub forcing: T,
    /// `forcing - (energy_rate + increment + viscous + stress_dissipation + diffusion)`
    pub slack: T,
    /// Transport cancellation that the energy argument relies on; should vanish.
    pub telescoping: T,
    /// Convection form `b(u^{n-1}; u^n, u^n)`; vanishes by skew-symmetry.
    pub skew: T,
}

impl<T: Real> EnergyBreakdown<T> {
    pub fn dissipation(&self) -> T {
        self.increment + self.viscous + self.stress_dissipation + self.diffusion
    }
}

#[derive(Clone, Debug)]
pub struct StepOutcome<T> {
    pub state: DiscreteState<T>,
    pub iterations: usize,
    pub residual_norm: T,
    pub history: Vec<T>,
}

/// Initial stress data.
pub enum InitialStress<'a, T> {
    Function(&'a (dyn Fn(Point<T>) -> SymMat<T> + Sync)),
    /// Piecewise constant field, one value per element.
    ElementValues(Vec<SymMat<T>>),
    /// Continuous P1 field given by vertex values.
    VertexValues(Vec<SymMat<T>>),
}

impl<T: Real> InitialStress<'_, T> {
    fn eval(&self, mesh: &SimplicialMesh<T>, k: usize, geom: &ElementGeom<T>, l: &[T; 3]) -> SymMat<T> {
        match self {
            InitialStress::Function(f) => f(geom.point(l)),
            InitialStress::ElementValues(v) => v[k],
            InitialStress::VertexValues(v) => {
                let el = mesh.elements[k];
                v[el[0]] * l[0] + v[el[1]] * l[1] + v[el[2]] * l[2]
            }
        }
    }
}

/// Per-element data at the quadrature points of the degree-6 rule.
#[derive(Clone, Debug)]
pub(crate) struct ElemTab<T> {
    pub geom: ElementGeom<T>,
    pub lam: Vec<[T; 3]>,
    /// Quadrature weight times element area.
    pub wq: Vec<T>,
    pub phi: Vec<Vec<Point<T>>>,
    pub dphi: Vec<Vec<Mat<T>>>,
    /// `int_K grad phi_l`.
    pub int_dphi: Vec<Mat<T>>,
    /// `int_K lambda_i grad phi_l`.
    pub int_lam_dphi: [Vec<Mat<T>>; 3],
    pub nl: usize,
}

/// Precomputed data that depends only on the previous time level.
pub(crate) struct StepContext<'a, T> {
    pub prev: &'a DiscreteState<T>,
    pub dt: T,
    /// `u^{n-1}` at the quadrature points of each element.
    pub up_q: Vec<Vec<Point<T>>>,
    /// `int_K u^{n-1}`.
    pub up_int: Vec<Point<T>>,
    /// Facet upwind couplings `(downstream, upstream, weight |u.n|)` for dg0.
    pub couplings: Vec<(usize, usize, T)>,
}

/// A scheme instance: mesh, spaces, physics and regularization.
#[derive(Clone, Debug)]
pub struct Scheme<T> {
    mesh: SimplicialMesh<T>,
    kind: SchemeKind,
    vspace: VelocitySpace<T>,
    pspace: PressureSpace,
    params: FluidParams<T>,
    regime: Regime<T>,
    tabs: Vec<ElemTab<T>>,
    elem_dofs: Vec<Vec<usize>>,
    n_u: usize,
    n_p: usize,
    n_s: usize,
    /// `perm[natural] = ordered`.
    perm: Vec<usize>,
}

const PACKED: usize = 3;

impl<T: Real> Scheme<T> {
    pub fn new(
        mesh: SimplicialMesh<T>,
        kind: SchemeKind,
        velocity: SpaceTag,
        params: FluidParams<T>,
        regime: Regime<T>,
    ) -> Result<Self, SchemeError> {
        let pres = kind.pressure_space();
        check_lbb_pair(velocity, pres)?;
        match (kind, velocity) {
            (SchemeKind::Dg0, SpaceTag::VelP2 | SpaceTag::VelP2Reduced) => {}
            (SchemeKind::Fem1, SpaceTag::VelP2 | SpaceTag::VelMini) => {}
            _ => {
                return Err(SchemeError::Params(format!("velocity space {velocity} is not used by {}", kind.name())));
            }
        }
        let vspace = VelocitySpace::new(&mesh, velocity)?;
        let pspace = PressureSpace::new(&mesh, pres)?;
        let rule = triangle_rule::<T>(6)?;
        let mut tabs = Vec::with_capacity(mesh.n_elements());
        for k in 0..mesh.n_elements() {
            let geom = mesh.geometry(k);
            let local = vspace.local(k);
            let mut phi = Vec::with_capacity(rule.len());
            let mut dphi: Vec<Vec<Mat<T>>> = Vec::with_capacity(rule.len());
            for l in &rule.points {
                phi.push(local.iter().map(|f| f.value(l)).collect());
                dphi.push(local.iter().map(|f| f.grad(l, &geom)).collect());
            }
            let wq: Vec<T> = rule.weights.iter().map(|w| *w * geom.area).collect();
            let nl = local.len();
            let mut int_dphi = vec![Mat::zeros(2); nl];
            let mut int_lam_dphi = [vec![Mat::zeros(2); nl], vec![Mat::zeros(2); nl], vec![Mat::zeros(2); nl]];
            for (q, l) in rule.points.iter().enumerate() {
                for m in 0..nl {
                    int_dphi[m] = int_dphi[m].add_scaled(&dphi[q][m], wq[q]);
                    for i in 0..3 {
                        int_lam_dphi[i][m] = int_lam_dphi[i][m].add_scaled(&dphi[q][m], wq[q] * l[i]);
                    }
                }
            }
            tabs.push(ElemTab { geom, lam: rule.points.clone(), wq, phi, dphi, int_dphi, int_lam_dphi, nl });
        }
        let n_u = vspace.n_dofs();
        let n_p = pspace.n_dofs();
        let n_s = match kind {
            SchemeKind::Dg0 => mesh.n_elements(),
            SchemeKind::Fem1 => mesh.n_vertices(),
        };
        let mut elem_dofs = Vec::with_capacity(mesh.n_elements());
        for k in 0..mesh.n_elements() {
            let mut d: Vec<usize> = vspace.local(k).iter().map(|f| f.dof).collect();
            d.extend(pspace.local_dofs(&mesh, k).into_iter().map(|p| n_u + p));
            let nodes: Vec<usize> = match kind {
                SchemeKind::Dg0 => vec![k],
                SchemeKind::Fem1 => mesh.elements[k].to_vec(),
            };
            for s in nodes {
                for c in 0..PACKED {
                    d.push(n_u + n_p + PACKED * s + c);
                }
            }
            elem_dofs.push(d);
        }
        let mut keyed: Vec<(T, T, usize)> = Vec::with_capacity(n_u + n_p + PACKED * n_s);
        for i in 0..n_u {
            let p = vspace.dof_point(i);
            keyed.push((p[1], p[0], i));
        }
        for i in 0..n_p {
            let p = pspace.dof_point(&mesh, i);
            keyed.push((p[1], p[0], n_u + i));
        }
        for s in 0..n_s {
            let p = match kind {
                SchemeKind::Dg0 => mesh.geometry(s).centroid(),
                SchemeKind::Fem1 => mesh.vertices[s],
            };
            for c in 0..PACKED {
                keyed.push((p[1], p[0], n_u + n_p + PACKED * s + c));
            }
        }
        keyed.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.partial_cmp(&b.1).unwrap()).then(a.2.cmp(&b.2)));
        let mut perm = vec![0; keyed.len()];
        for (ordered, (_, _, natural)) in keyed.iter().enumerate() {
            perm[*natural] = ordered;
        }
        Ok(Self { mesh, kind, vspace, pspace, params, regime, tabs, elem_dofs, n_u, n_p, n_s, perm })
    }

    /// Same discretization with a different member of the logarithm family.
    pub fn with_regime(&self, regime: Regime<T>) -> Self {
        let mut s = self.clone();
        s.regime = regime;
        s
    }

    pub fn mesh(&self) -> &SimplicialMesh<T> {
        &self.mesh
    }

    pub fn kind(&self) -> SchemeKind {
        self.kind
    }

    pub fn velocity_space(&self) -> &VelocitySpace<T> {
        &self.vspace
    }

    pub fn pressure_space(&self) -> &PressureSpace {
        &self.pspace
    }

    pub fn params(&self) -> &FluidParams<T> {
        &self.params
    }

    pub fn regime(&self) -> &Regime<T> {
        &self.regime
    }

    /// fem1 is analyzed for `alpha > 0` only.
    pub fn in_analyzed_regime(&self) -> bool {
        self.kind == SchemeKind::Dg0 || self.params.alpha > T::zero()
    }

    pub fn n_unknowns(&self) -> usize {
        self.n_u + self.n_p + PACKED * self.n_s
    }

    pub fn n_stress_nodes(&self) -> usize {
        self.n_s
    }

    pub(crate) fn tab(&self, k: usize) -> &ElemTab<T> {
        &self.tabs[k]
    }

    fn check_state(&self, s: &DiscreteState<T>) -> Result<(), SchemeError> {
        if s.velocity.len() != self.n_u || s.pressure.len() != self.n_p || s.stress.len() != self.n_s {
            return Err(SchemeError::Mismatch(format!(
                "expected ({}, {}, {}) velocity/pressure/stress entries, got ({}, {}, {})",
                self.n_u,
                self.n_p,
                self.n_s,
                s.velocity.len(),
                s.pressure.len(),
                s.stress.len()
            )));
        }
        if s.stress.iter().any(|m| m.dim() != 2) {
            return Err(SchemeError::Mismatch("stress must be 2x2".into()));
        }
        Ok(())
    }

    pub fn pack(&self, s: &DiscreteState<T>) -> Vec<T> {
        let mut x = Vec::with_capacity(self.n_unknowns());
        x.extend_from_slice(&s.velocity);
        x.extend_from_slice(&s.pressure);
        for m in &s.stress {
            x.extend_from_slice(m.packed());
        }
        x
    }

    pub fn unpack(&self, x: &[T], t: T) -> DiscreteState<T> {
        let (u, rest) = x.split_at(self.n_u);
        let (p, s) = rest.split_at(self.n_p);
        DiscreteState {
            velocity: u.to_vec(),
            pressure: p.to_vec(),
            stress: s.chunks(PACKED).map(SymMat::from_packed).collect(),
            t,
        }
    }

    /// Equilibrium state `u = 0, p = 0, sigma = I`.
    pub fn equilibrium(&self, t: T) -> DiscreteState<T> {
        DiscreteState {
            velocity: vec![T::zero(); self.n_u],
            pressure: vec![T::zero(); self.n_p],
            stress: vec![SymMat::identity(2); self.n_s],
            t,
        }
    }

    /// `(int f . phi_i)_i` over the velocity basis; boundary entries are zero.
    pub fn load_vector<F: Fn(Point<T>) -> Point<T>>(&self, f: F) -> Vec<T> {
        let mut b = vec![T::zero(); self.n_u];
        for (k, tab) in self.tabs.iter().enumerate() {
            let local = self.vspace.local(k);
            for q in 0..tab.wq.len() {
                let fx = f(tab.geom.point(&tab.lam[q]));
                for (l, lf) in local.iter().enumerate() {
                    let v = tab.phi[q][l];
                    b[lf.dof] += tab.wq[q] * (fx[0] * v[0] + fx[1] * v[1]);
                }
            }
        }
        for (i, bi) in b.iter_mut().enumerate() {
            if self.vspace.is_fixed(i) {
                *bi = T::zero();
            }
        }
        b
    }

    pub(crate) fn velocity_at(&self, k: usize, q: usize, coeffs: &[T]) -> Point<T> {
        let tab = &self.tabs[k];
        let mut u = [T::zero(); 2];
        for (l, f) in self.vspace.local(k).iter().enumerate() {
            let v = tab.phi[q][l];
            u[0] += coeffs[f.dof] * v[0];
            u[1] += coeffs[f.dof] * v[1];
        }
        u
    }

    pub(crate) fn velocity_grad_at(&self, k: usize, q: usize, coeffs: &[T]) -> Mat<T> {
        let tab = &self.tabs[k];
        let mut g = [[T::zero(); 2]; 2];
        for (l, f) in self.vspace.local(k).iter().enumerate() {
            let d = &tab.dphi[q][l];
            let c = coeffs[f.dof];
            for (i, row) in g.iter_mut().enumerate() {
                for (j, x) in row.iter_mut().enumerate() {
                    *x += c * d.get(i, j);
                }
            }
        }
        Mat::from_rows2(g[0], g[1])
    }

    /// `Re/2 int |u|^2` and `(1 - eps) int |grad u|^2`.
    pub(crate) fn kinetic_and_viscous(&self, u: &[T]) -> (T, T) {
        let (mut kin, mut vis) = (T::zero(), T::zero());
        for k in 0..self.tabs.len() {
            for q in 0..self.tabs[k].wq.len() {
                let w = self.tabs[k].wq[q];
                let v = self.velocity_at(k, q, u);
                kin += w * (v[0] * v[0] + v[1] * v[1]);
                let g = self.velocity_grad_at(k, q, u);
                vis += w * g.ddot(&g);
            }
        }
        (self.params.re * T::lit(0.5) * kin, (T::one() - self.params.eps) * vis)
    }

    /// `Re/2 int [((w . grad) u) . v - u . ((w . grad) v)]`.
    pub fn convection_form(&self, w: &[T], u: &[T], v: &[T]) -> T {
        let mut s = T::zero();
        for k in 0..self.tabs.len() {
            for q in 0..self.tabs[k].wq.len() {
                let wq = self.velocity_at(k, q, w);
                let (uq, vq) = (self.velocity_at(k, q, u), self.velocity_at(k, q, v));
                let (gu, gv) = (self.velocity_grad_at(k, q, u), self.velocity_grad_at(k, q, v));
                let mut a = T::zero();
                for i in 0..2 {
                    let cu = gu.get(i, 0) * wq[0] + gu.get(i, 1) * wq[1];
                    let cv = gv.get(i, 0) * wq[0] + gv.get(i, 1) * wq[1];
                    a += cu * vq[i] - uq[i] * cv;
                }
                s += self.tabs[k].wq[q] * a;
            }
        }
        self.params.re * T::lit(0.5) * s
    }

    pub(crate) fn context<'a>(&self, prev: &'a DiscreteState<T>, dt: T) -> StepContext<'a, T> {
        let mut up_q = Vec::with_capacity(self.tabs.len());
        let mut up_int = Vec::with_capacity(self.tabs.len());
        for k in 0..self.tabs.len() {
            let pts: Vec<Point<T>> = (0..self.tabs[k].wq.len()).map(|q| self.velocity_at(k, q, &prev.velocity)).collect();
            let mut s = [T::zero(); 2];
            for (q, p) in pts.iter().enumerate() {
                s[0] += self.tabs[k].wq[q] * p[0];
                s[1] += self.tabs[k].wq[q] * p[1];
            }
            up_q.push(pts);
            up_int.push(s);
        }
        let couplings = match self.kind {
            SchemeKind::Dg0 => dg0::facet_couplings(self, &prev.velocity),
            SchemeKind::Fem1 => Vec::new(),
        };
        StepContext { prev, dt, up_q, up_int, couplings }
    }

    fn element_residual(&self, ctx: &StepContext<T>, k: usize, x: &[T], out: &mut [T]) -> Result<(), TensorError> {
        match self.kind {
            SchemeKind::Dg0 => dg0::element_residual(self, ctx, k, x, out),
            SchemeKind::Fem1 => fem1::element_residual(self, ctx, k, x, out),
        }
    }

    fn gather(&self, k: usize, x: &[T]) -> Vec<T> {
        self.elem_dofs[k].iter().map(|&i| x[i]).collect()
    }

    fn map_elements<R: Send, F: Fn(usize) -> R + Sync + Send>(&self, parallel: bool, f: F) -> Vec<R> {
        if parallel {
            (0..self.tabs.len()).into_par_iter().map(f).collect()
        } else {
            (0..self.tabs.len()).map(f).collect()
        }
    }

    fn residual_natural(&self, ctx: &StepContext<T>, x: &[T], load: &[T], parallel: bool) -> Result<Vec<T>, SchemeError> {
        let locals = self.map_elements(parallel, |k| {
            let xl = self.gather(k, x);
            let mut out = vec![T::zero(); xl.len()];
            self.element_residual(ctx, k, &xl, &mut out).map(|_| out)
        });
        let mut r = vec![T::zero(); x.len()];
        for (k, loc) in locals.into_iter().enumerate() {
            let loc = loc?;
            for (i, v) in self.elem_dofs[k].iter().zip(loc) {
                r[*i] += v;
            }
        }
        let s0 = self.n_u + self.n_p;
        let mult = [T::one(), T::lit(2.0), T::one()];
        for &(down, up, w) in &ctx.couplings {
            for c in 0..PACKED {
                let d = x[s0 + PACKED * down + c] - x[s0 + PACKED * up + c];
                r[s0 + PACKED * down + c] += w * mult[c] * d;
            }
        }
        for i in 0..self.n_u {
            r[i] -= load[i];
            if self.vspace.is_fixed(i) {
                r[i] = x[i];
            }
        }
        r[self.n_u] = x[self.n_u];
        Ok(r)
    }

    /// Triplets in natural numbering.
    fn jacobian_natural(&self, ctx: &StepContext<T>, x: &[T], parallel: bool) -> Result<Vec<(usize, usize, T)>, SchemeError> {
        let locals = self.map_elements(parallel, |k| self.element_jacobian(ctx, k, x));
        let mut trip = Vec::new();
        let fixed_row = |i: usize| (i < self.n_u && self.vspace.is_fixed(i)) || i == self.n_u;
        for (k, loc) in locals.into_iter().enumerate() {
            let loc = loc?;
            let dofs = &self.elem_dofs[k];
            let n = dofs.len();
            for (j, &cj) in dofs.iter().enumerate() {
                for (i, &ri) in dofs.iter().enumerate() {
                    let v = loc[j * n + i];
                    if v != T::zero() && !fixed_row(ri) {
                        trip.push((ri, cj, v));
                    }
                }
            }
        }
        let s0 = self.n_u + self.n_p;
        let mult = [T::one(), T::lit(2.0), T::one()];
        for &(down, up, w) in &ctx.couplings {
            for c in 0..PACKED {
                let row = s0 + PACKED * down + c;
                trip.push((row, row, w * mult[c]));
                trip.push((row, s0 + PACKED * up + c, -w * mult[c]));
            }
        }
        for i in 0..self.n_u {
            if self.vspace.is_fixed(i) {
                trip.push((i, i, T::one()));
            }
        }
        trip.push((self.n_u, self.n_u, T::one()));
        Ok(trip)
    }

    /// Column-major local Jacobian by central differences of the element residual.
    fn element_jacobian(&self, ctx: &StepContext<T>, k: usize, x: &[T]) -> Result<Vec<T>, SchemeError> {
        let xl = self.gather(k, x);
        let n = xl.len();
        let mut jac = vec![T::zero(); n * n];
        let mut xp = xl.clone();
        let mut rp = vec![T::zero(); n];
        let mut rm = vec![T::zero(); n];
        let h0 = T::lit(1e-6);
        for j in 0..n {
            let h = h0 * T::one().max(xl[j].abs());
            xp[j] = xl[j] + h;
            let plus = self.element_residual(ctx, k, &xp, &mut rp);
            xp[j] = xl[j] - h;
            let minus = self.element_residual(ctx, k, &xp, &mut rm);
            xp[j] = xl[j];
            let (scale, base_needed) = match (plus.is_ok(), minus.is_ok()) {
                (true, true) => (T::lit(2.0) * h, false),
                (true, false) | (false, true) => (h, true),
                (false, false) => return Err(plus.unwrap_err().into()),
            };
            if base_needed {
                let mut r0 = vec![T::zero(); n];
                self.element_residual(ctx, k, &xl, &mut r0)?;
                if plus.is_ok() {
                    rm.copy_from_slice(&r0);
                } else {
                    rp.copy_from_slice(&r0);
                }
            }
            for i in 0..n {
                jac[j * n + i] = (rp[i] - rm[i]) / scale;
            }
        }
        Ok(jac)
    }

    /// Residual of the scheme equations for candidate `cand` given `prev`, in natural
    /// unknown order. Boundary velocity rows hold the boundary values and the first
    /// pressure row holds the pressure normalization.
    pub fn residual(&self, prev: &DiscreteState<T>, cand: &DiscreteState<T>, load: &[T], dt: T) -> Result<Vec<T>, SchemeError> {
        self.check_state(prev)?;
        self.check_state(cand)?;
        self.check_load(load)?;
        let ctx = self.context(prev, dt);
        self.residual_natural(&ctx, &self.pack(cand), load, false)
    }

    fn check_load(&self, load: &[T]) -> Result<(), SchemeError> {
        if load.len() != self.n_u {
            return Err(SchemeError::Mismatch(format!("load vector has {} entries, expected {}", load.len(), self.n_u)));
        }
        Ok(())
    }

    /// One time step by damped Newton starting from `prev` (or from `guess`).
    pub fn step(
        &self,
        prev: &DiscreteState<T>,
        load: &[T],
        dt: T,
        opts: &SolverOpts<T>,
        guess: Option<&DiscreteState<T>>,
    ) -> Result<StepOutcome<T>, SchemeError> {
        self.check_state(prev)?;
        self.check_load(load)?;
        opts.validate()?;
        if !(dt > T::zero()) {
            return Err(SchemeError::Params(format!("dt = {dt} must be positive")));
        }
        let ctx = self.context(prev, dt);
        let sys = OrderedSystem { scheme: self, ctx: &ctx, load, parallel: opts.parallel };
        let start = guess.unwrap_or(prev);
        self.check_state(start)?;
        let x0 = sys.to_ordered(&self.pack(start));
        match newton::solve(&sys, x0, opts.tol, opts.max_iter) {
            Ok(res) => Ok(StepOutcome {
                state: self.unpack(&sys.to_natural(&res.x), prev.t + dt),
                iterations: res.iterations,
                residual_norm: res.residual_norm,
                history: res.history,
            }),
            Err(f) => Err(SchemeError::StepFailure {
                iterations: f.iterations,
                residual: f.history.last().map(|v| v.as_f64()).unwrap_or(f64::NAN),
                reason: f.reason,
                history: f.history.iter().map(|v| v.as_f64()).collect(),
                last_iterate: sys.to_natural(&f.x).iter().map(|v| v.as_f64()).collect(),
            }),
        }
    }

    pub fn energy(&self, state: &DiscreteState<T>) -> Result<EnergyParts<T>, SchemeError> {
        self.check_state(state)?;
        match self.kind {
            SchemeKind::Dg0 => dg0::energy(self, state),
            SchemeKind::Fem1 => fem1::energy(self, state),
        }
    }

    /// Every term of the step's energy inequality.
    pub fn audit(
        &self,
        prev: &DiscreteState<T>,
        next: &DiscreteState<T>,
        load: &[T],
        dt: T,
    ) -> Result<EnergyBreakdown<T>, SchemeError> {
        self.check_state(prev)?;
        self.check_state(next)?;
        self.check_load(load)?;
        let f_prev = self.energy(prev)?;
        let f_next = self.energy(next)?;
        let du: Vec<T> = next.velocity.iter().zip(&prev.velocity).map(|(a, b)| *a - *b).collect();
        let (kin_du, _) = self.kinetic_and_viscous(&du);
        let (_, viscous) = self.kinetic_and_viscous(&next.velocity);
        let forcing: T = load.iter().zip(&next.velocity).map(|(f, u)| *f * *u).sum();
        let (stress_dissipation, diffusion, telescoping) = match self.kind {
            SchemeKind::Dg0 => dg0::audit_terms(self, prev, next)?,
            SchemeKind::Fem1 => fem1::audit_terms(self, prev, next)?,
        };
        let energy_rate = (f_next.total - f_prev.total) / dt;
        let increment = kin_du / dt;
        let slack = forcing - (energy_rate + increment + viscous + stress_dissipation + diffusion);
        Ok(EnergyBreakdown {
            total: f_next.total,
            kinetic: f_next.kinetic,
            entropy: f_next.entropy,
            energy_rate,
            increment,
            viscous,
            stress_dissipation,
            diffusion,
            forcing,
            slack,
            telescoping,
            skew: self.convection_form(&prev.velocity, &next.velocity, &next.velocity),
        })
    }

    /// Smoothed velocity projection `int u v + dt0 grad u : grad v = int u0 v` onto the
    /// discretely divergence-free space (`dt0 = 0` gives the L2 projection).
    pub fn project_velocity<F: Fn(Point<T>) -> Point<T>>(&self, u0: F, dt0: T) -> Result<(Vec<T>, Vec<T>), SchemeError> {
        let (nu, np) = (self.n_u, self.n_p);
        let n = nu + np;
        let mut a = SparseMatrix::new(n, n);
        let mut b = vec![T::zero(); n];
        let fixed_row = |i: usize| (i < nu && self.vspace.is_fixed(i)) || i == nu;
        for (k, tab) in self.tabs.iter().enumerate() {
            let local = self.vspace.local(k);
            let pdofs = self.pspace.local_dofs(&self.mesh, k);
            for q in 0..tab.wq.len() {
                let w = tab.wq[q];
                let ux = u0(tab.geom.point(&tab.lam[q]));
                let pvals = self.pspace.local_values(&self.mesh, k, &tab.lam[q]);
                for (l, fl) in local.iter().enumerate() {
                    let (pl, gl) = (tab.phi[q][l], &tab.dphi[q][l]);
                    if !fixed_row(fl.dof) {
                        b[fl.dof] += w * (ux[0] * pl[0] + ux[1] * pl[1]);
                        for (m, fm) in local.iter().enumerate() {
                            let (pm, gm) = (tab.phi[q][m], &tab.dphi[q][m]);
                            let v = w * (pl[0] * pm[0] + pl[1] * pm[1] + dt0 * gl.ddot(gm));
                            a.push(fl.dof, fm.dof, v);
                        }
                    }
                    let div = gl.trace();
                    for &(pd, pv) in &pvals {
                        if !fixed_row(fl.dof) {
                            a.push(fl.dof, nu + pd, -w * pv * div);
                        }
                        if !fixed_row(nu + pd) {
                            a.push(nu + pd, fl.dof, -w * pv * div);
                        }
                    }
                }
            }
            let _ = pdofs;
        }
        for i in 0..n {
            if fixed_row(i) {
                a.push(i, i, T::one());
            }
        }
        let x = crate::linsolve::solve(&a, &b)?;
        Ok((x[..nu].to_vec(), x[nu..].to_vec()))
    }

    /// Initial state: velocity by the (smoothed) projection, stress by the element
    /// average (dg0) or the lumped smoothed projection (fem1).
    pub fn initial_state<F: Fn(Point<T>) -> Point<T>>(
        &self,
        u0: F,
        sigma0: &InitialStress<'_, T>,
        dt0: T,
    ) -> Result<DiscreteState<T>, SchemeError> {
        match sigma0 {
            InitialStress::ElementValues(v) if v.len() != self.mesh.n_elements() => {
                return Err(SchemeError::Mismatch("one initial stress per element expected".into()))
            }
            InitialStress::VertexValues(v) if v.len() != self.mesh.n_vertices() => {
                return Err(SchemeError::Mismatch("one initial stress per vertex expected".into()))
            }
            _ => {}
        }
        let (velocity, pressure, stress) = match self.kind {
            SchemeKind::Dg0 => {
                let (u, p) = self.project_velocity(u0, T::zero())?;
                let mut s = Vec::with_capacity(self.n_s);
                for (k, tab) in self.tabs.iter().enumerate() {
                    let mut acc = SymMat::zeros(2);
                    for q in 0..tab.wq.len() {
                        acc += sigma0.eval(&self.mesh, k, &tab.geom, &tab.lam[q]) * tab.wq[q];
                    }
                    s.push(acc * tab.geom.area.recip());
                }
                (u, p, s)
            }
            SchemeKind::Fem1 => {
                if !(dt0 > T::zero()) {
                    return Err(SchemeError::Params("dt0 must be positive".into()));
                }
                let (u, p) = self.project_velocity(u0, dt0)?;
                let s = fem1::project_stress(self, sigma0, dt0)?;
                (u, p, s)
            }
        };
        Ok(DiscreteState { velocity, pressure, stress, t: T::zero() })
    }

    /// Infinity norm of the residual.
    pub fn residual_norm(&self, prev: &DiscreteState<T>, cand: &DiscreteState<T>, load: &[T], dt: T) -> Result<T, SchemeError> {
        Ok(max_abs(&self.residual(prev, cand, load, dt)?))
    }
}

/// The nonlinear system in the geometric (solver) ordering.
struct OrderedSystem<'a, T: Real> {
    scheme: &'a Scheme<T>,
    ctx: &'a StepContext<'a, T>,
    load: &'a [T],
    parallel: bool,
}

impl<T: Real> OrderedSystem<'_, T> {
    fn to_ordered(&self, nat: &[T]) -> Vec<T> {
        let mut o = vec![T::zero(); nat.len()];
        for (i, v) in nat.iter().enumerate() {
            o[self.scheme.perm[i]] = *v;
        }
        o
    }

    fn to_natural(&self, ord: &[T]) -> Vec<T> {
        self.scheme.perm.iter().map(|&p| ord[p]).collect()
    }
}

impl<T: Real> newton::NonlinearSystem<T> for OrderedSystem<'_, T> {
    fn residual(&self, x: &[T]) -> Result<Vec<T>, SchemeError> {
        let r = self.scheme.residual_natural(self.ctx, &self.to_natural(x), self.load, self.parallel)?;
        Ok(self.to_ordered(&r))
    }

    fn jacobian(&self, x: &[T]) -> Result<SparseMatrix<T>, SchemeError> {
        let trip = self.scheme.jacobian_natural(self.ctx, &self.to_natural(x), self.parallel)?;
        let n = x.len();
        let mut m = SparseMatrix::with_capacity(n, n, trip.len());
        let p = &self.scheme.perm;
        for (i, j, v) in trip {
            m.push(p[i], p[j], v);
        }
        Ok(m)
    }
}

/// Solve `(M_lumped + dt0 K) X = B` for several right-hand sides with the P1 scalar
/// lumped mass and stiffness matrices.
pub(crate) fn lumped_p1_solve<T: Real>(mesh: &SimplicialMesh<T>, dt0: T, rhs: &[Vec<T>]) -> Result<Vec<Vec<T>>, SchemeError> {
    let nv = mesh.n_vertices();
    let mut a = SparseMatrix::new(nv, nv);
    let mut lumped = vec![T::zero(); nv];
    for k in 0..mesh.n_elements() {
        let g = mesh.geometry(k);
        let el = mesh.elements[k];
        for i in 0..3 {
            a.push(el[i], el[i], g.area / T::lit(3.0));
            lumped[el[i]] += g.area / T::lit(3.0);
            for j in 0..3 {
                let d = g.grad_lambda[i][0] * g.grad_lambda[j][0] + g.grad_lambda[i][1] * g.grad_lambda[j][1];
                a.push(el[i], el[j], dt0 * g.area * d);
            }
        }
    }
    let csc = a.compile()?;
    let lu = LuFactors::factor(&csc)?;
    // solve for the correction to the mass-only solution so that large dt0 keeps constants exact
    rhs.iter()
        .map(|b| {
            let x0: Vec<T> = b.iter().zip(&lumped).map(|(v, m)| *v / *m).collect();
            let r: Vec<T> = b.iter().zip(csc.mul_vec(&x0)).map(|(v, ax)| *v - ax).collect();
            let w = lu.solve_checked(&csc, &r)?;
            Ok(x0.iter().zip(&w).map(|(a, b)| *a + *b).collect())
        })
        .collect()
}

#[cfg(test)]
mod tests;
