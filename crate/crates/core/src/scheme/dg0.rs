//! Piecewise constant stress with upwind transport across internal facets.

use crate::fem::field::{facet_bary, facet_rule};
use crate::scalar::Real;
use crate::tensor::{SymMat, TensorError};

use super::{DiscreteState, EnergyParts, Scheme, SchemeError, StepContext, PACKED};

/// `(downstream element, upstream element, |u.n| w |E|)` per facet quadrature node.
pub(crate) fn facet_couplings<T: Real>(scheme: &Scheme<T>, u_prev: &[T]) -> Vec<(usize, usize, T)> {
    let mesh = scheme.mesh();
    let mut out = Vec::new();
    for (fi, f) in mesh.internal_facets.iter().enumerate() {
        for (t, w) in facet_rule(mesh, fi) {
            let l = facet_bary(mesh, f.left, f.vertices, t);
            let u = scheme.velocity_space().eval(f.left, &l, u_prev);
            let un = u[0] * f.normal[0] + u[1] * f.normal[1];
            if un > T::zero() {
                out.push((f.right, f.left, un * w));
            } else if un < T::zero() {
                out.push((f.left, f.right, -un * w));
            }
        }
    }
    out
}

/// Element contributions in local layout `[velocity | pressure | stress (3)]`.
pub(crate) fn element_residual<T: Real>(
    scheme: &Scheme<T>,
    ctx: &StepContext<T>,
    k: usize,
    x: &[T],
    out: &mut [T],
) -> Result<(), TensorError> {
    let tab = scheme.tab(k);
    let prm = scheme.params();
    let nl = tab.nl;
    let p = x[nl];
    let sigma = SymMat::from_packed(&x[nl + 1..nl + 1 + PACKED]);
    let beta = scheme.regime().beta(&sigma)?;
    let half_re = prm.re * T::lit(0.5);
    let re_dt = prm.re / ctx.dt;
    let visc = T::one() - prm.eps;
    out.iter_mut().for_each(|v| *v = T::zero());

    let mut grad_int = crate::tensor::Mat::zeros(2);
    for q in 0..tab.wq.len() {
        let w = tab.wq[q];
        let up = ctx.up_q[k][q];
        let mut u = [T::zero(); 2];
        let mut g = crate::tensor::Mat::zeros(2);
        for l in 0..nl {
            u[0] += x[l] * tab.phi[q][l][0];
            u[1] += x[l] * tab.phi[q][l][1];
            g = g.add_scaled(&tab.dphi[q][l], x[l]);
        }
        grad_int = grad_int.add_scaled(&g, w);
        let conv = [g.get(0, 0) * up[0] + g.get(0, 1) * up[1], g.get(1, 0) * up[0] + g.get(1, 1) * up[1]];
        let du = [u[0] - up[0], u[1] - up[1]];
        for l in 0..nl {
            let v = tab.phi[q][l];
            let dv = &tab.dphi[q][l];
            let conv_v = [dv.get(0, 0) * up[0] + dv.get(0, 1) * up[1], dv.get(1, 0) * up[0] + dv.get(1, 1) * up[1]];
            let r = re_dt * (du[0] * v[0] + du[1] * v[1])
                + half_re * (conv[0] * v[0] + conv[1] * v[1] - u[0] * conv_v[0] - u[1] * conv_v[1])
                + visc * g.ddot(dv)
                - p * dv.trace();
            out[l] += w * r;
        }
        out[nl] -= w * g.trace();
    }
    let coupling = prm.eps / prm.wi;
    for l in 0..nl {
        out[l] += coupling * beta.ddot_mat(&tab.int_dphi[l]);
    }
    let sp = ctx.prev.stress[k];
    let id = SymMat::identity(2);
    let m = (sigma - sp) * ctx.dt.recip() + (sigma - id) * prm.wi.recip();
    for c in 0..PACKED {
        let e = SymMat::unit(2, c);
        out[nl + 1 + c] = tab.geom.area * m.ddot(&e) - T::lit(2.0) * e.matmul(&beta).ddot(&grad_int);
    }
    Ok(())
}

pub(crate) fn energy<T: Real>(scheme: &Scheme<T>, state: &DiscreteState<T>) -> Result<EnergyParts<T>, SchemeError> {
    let (kinetic, _) = scheme.kinetic_and_viscous(&state.velocity);
    let prm = scheme.params();
    let mut ent = T::zero();
    for (k, s) in state.stress.iter().enumerate() {
        ent += scheme.tab(k).geom.area * scheme.regime().entropy_trace(s)?;
    }
    let entropy = prm.eps / (T::lit(2.0) * prm.wi) * ent;
    Ok(EnergyParts { kinetic, entropy, total: kinetic + entropy })
}

/// `(stress dissipation, diffusion, telescoping sum)`.
pub(crate) fn audit_terms<T: Real>(
    scheme: &Scheme<T>,
    prev: &DiscreteState<T>,
    next: &DiscreteState<T>,
) -> Result<(T, T, T), SchemeError> {
    let prm = scheme.params();
    let mut diss = T::zero();
    let mut q = Vec::with_capacity(next.stress.len());
    for (k, s) in next.stress.iter().enumerate() {
        diss += scheme.tab(k).geom.area * scheme.regime().stress_dissipation_trace(s)?;
        q.push(scheme.regime().entropy_trace(s)?);
    }
    let stress_dissipation = prm.eps / (T::lit(2.0) * prm.wi * prm.wi) * diss;
    Ok((stress_dissipation, T::zero(), telescoping(scheme, &prev.velocity, &q)))
}

/// `sum_f int_f (u.n) [q]` for a piecewise constant `q`, by the facet rule.
pub fn telescoping<T: Real>(scheme: &Scheme<T>, velocity: &[T], q: &[T]) -> T {
    let mesh = scheme.mesh();
    let mut s = T::zero();
    for (fi, f) in mesh.internal_facets.iter().enumerate() {
        for (t, w) in facet_rule(mesh, fi) {
            let l = facet_bary(mesh, f.left, f.vertices, t);
            let u = scheme.velocity_space().eval(f.left, &l, velocity);
            s += w * (u[0] * f.normal[0] + u[1] * f.normal[1]) * (q[f.right] - q[f.left]);
        }
    }
    s
}
