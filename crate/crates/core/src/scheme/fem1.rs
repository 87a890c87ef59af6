//! Continuous piecewise linear stress: lumped mass, stress diffusion and a transport
//! tensor built so the convection term tested with the entropy variable telescopes.

use crate::fem::triangle_rule;
use crate::mesh::ElementGeom;
use crate::scalar::Real;
use crate::tensor::{Mat, Regime, SymMat, TensorError};

use super::{lumped_p1_solve, DiscreteState, EnergyParts, InitialStress, Scheme, SchemeError, StepContext, PACKED};

/// Interpolating matrix `L` on the segment from `sigma_0` to `sigma_j`:
/// `L : (G'(sigma_j) - G'(sigma_0)) = tr H(G'(sigma_j)) - tr H(G'(sigma_0))`.
///
/// `L = lam beta_0 + (1 - lam) beta_j`, with `lam` solving the scalar identity. When the
/// identity is degenerate (`beta_0 - beta_j` orthogonal to the increment) `beta_j` is used.
pub fn lambda_hat<T: Real>(regime: &Regime<T>, sigma_j: &SymMat<T>, sigma_0: &SymMat<T>) -> Result<SymMat<T>, TensorError> {
    let bj = regime.beta(sigma_j)?;
    Ok(match lambda_weight(regime, sigma_j, sigma_0)? {
        Some(lam) => regime.beta(sigma_0)? * lam + bj * (T::one() - lam),
        None => bj,
    })
}

/// The weight `lam` of [`lambda_hat`], `None` in the degenerate case.
pub fn lambda_weight<T: Real>(regime: &Regime<T>, sigma_j: &SymMat<T>, sigma_0: &SymMat<T>) -> Result<Option<T>, TensorError> {
    let bj = regime.beta(sigma_j)?;
    let b0 = regime.beta(sigma_0)?;
    let dg = regime.g_prime(sigma_j)? - regime.g_prime(sigma_0)?;
    let dh = regime.trace_h_of_g_prime(sigma_j)? - regime.trace_h_of_g_prime(sigma_0)?;
    let den = (b0 - bj).ddot(&dg);
    if den.abs() <= T::lit(1e-12) * (T::one() + bj.norm() * dg.norm()) {
        return Ok(None);
    }
    Ok(Some((dh - bj.ddot(&dg)) / den))
}

/// Element transport tensor `Lambda[m][p]`, `m, p in {x, y}`, with local vertex 0 as base.
pub fn lambda_tensor<T: Real>(
    regime: &Regime<T>,
    geom: &ElementGeom<T>,
    sigma: &[SymMat<T>; 3],
) -> Result<[[SymMat<T>; 2]; 2], TensorError> {
    let z = SymMat::zeros(2);
    let mut out = [[z; 2]; 2];
    let p0 = geom.vertices[0];
    for j in 1..3 {
        let lh = lambda_hat(regime, &sigma[j], &sigma[0])?;
        let e = [geom.vertices[j][0] - p0[0], geom.vertices[j][1] - p0[1]];
        for (m, row) in out.iter_mut().enumerate() {
            for (p, entry) in row.iter_mut().enumerate() {
                *entry += lh * (geom.grad_lambda[j][m] * e[p]);
            }
        }
    }
    Ok(out)
}

/// `max_m | sum_p Lambda_mp : d_p pi[G'(sigma)] - d_m pi[tr H(G'(sigma))] |` on one element.
pub fn chain_identity_residual<T: Real>(
    regime: &Regime<T>,
    geom: &ElementGeom<T>,
    sigma: &[SymMat<T>; 3],
) -> Result<T, TensorError> {
    let lt = lambda_tensor(regime, geom, sigma)?;
    let mut gp = [SymMat::zeros(2); 3];
    let mut th = [T::zero(); 3];
    for i in 0..3 {
        gp[i] = regime.g_prime(&sigma[i])?;
        th[i] = regime.trace_h_of_g_prime(&sigma[i])?;
    }
    let mut worst = T::zero();
    for m in 0..2 {
        let mut lhs = T::zero();
        for p in 0..2 {
            let mut d = SymMat::zeros(2);
            for i in 0..3 {
                d += gp[i] * geom.grad_lambda[i][p];
            }
            lhs += lt[m][p].ddot(&d);
        }
        let rhs: T = (0..3).map(|i| th[i] * geom.grad_lambda[i][m]).sum();
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(worst)
}

/// Local layout `[velocity | pressure (3) | stress (3 vertices x 3 components)]`.
pub(crate) fn element_residual<T: Real>(
    scheme: &Scheme<T>,
    ctx: &StepContext<T>,
    k: usize,
    x: &[T],
    out: &mut [T],
) -> Result<(), TensorError> {
    let tab = scheme.tab(k);
    let prm = scheme.params();
    let regime = scheme.regime();
    let el = scheme.mesh().elements[k];
    let nl = tab.nl;
    let s0 = nl + 3;
    let sigma: [SymMat<T>; 3] = std::array::from_fn(|i| SymMat::from_packed(&x[s0 + PACKED * i..s0 + PACKED * (i + 1)]));
    let mut beta = [SymMat::zeros(2); 3];
    for i in 0..3 {
        beta[i] = regime.beta(&sigma[i])?;
    }
    let half_re = prm.re * T::lit(0.5);
    let re_dt = prm.re / ctx.dt;
    let visc = T::one() - prm.eps;
    out.iter_mut().for_each(|v| *v = T::zero());

    for q in 0..tab.wq.len() {
        let w = tab.wq[q];
        let lam = tab.lam[q];
        let up = ctx.up_q[k][q];
        let p = x[nl] * lam[0] + x[nl + 1] * lam[1] + x[nl + 2] * lam[2];
        let mut u = [T::zero(); 2];
        let mut g = Mat::zeros(2);
        for l in 0..nl {
            u[0] += x[l] * tab.phi[q][l][0];
            u[1] += x[l] * tab.phi[q][l][1];
            g = g.add_scaled(&tab.dphi[q][l], x[l]);
        }
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
        let div = g.trace();
        for i in 0..3 {
            out[nl + i] -= w * lam[i] * div;
        }
    }
    let coupling = prm.eps / prm.wi;
    for l in 0..nl {
        for i in 0..3 {
            out[l] += coupling * beta[i].ddot_mat(&tab.int_lam_dphi[i][l]);
        }
    }

    let geom = &tab.geom;
    let area = geom.area;
    let third = area / T::lit(3.0);
    let id = SymMat::identity(2);
    let units: [SymMat<T>; 3] = std::array::from_fn(|c| SymMat::unit(2, c));
    for i in 0..3 {
        let sp = ctx.prev.stress[el[i]];
        let m = (sigma[i] - sp) * ctx.dt.recip() + (sigma[i] - id) * prm.wi.recip();
        let mut diff = SymMat::zeros(2);
        for j in 0..3 {
            let gg = geom.grad_lambda[i][0] * geom.grad_lambda[j][0] + geom.grad_lambda[i][1] * geom.grad_lambda[j][1];
            diff += sigma[j] * gg;
        }
        let gi = (0..nl).fold(Mat::zeros(2), |acc, l| acc.add_scaled(&tab.int_lam_dphi[i][l], x[l]));
        for c in 0..PACKED {
            let e = &units[c];
            out[s0 + PACKED * i + c] = third * m.ddot(e) + prm.alpha * area * diff.ddot(e)
                - T::lit(2.0) * e.matmul(&beta[i]).ddot(&gi);
        }
    }
    // Transport: sum_{m,p} Lambda_mp : E_c d_p lambda_i int u_m, using
    // (P_j - P_0) . grad lambda_i = delta_ij - delta_i0.
    let ui = ctx.up_int[k];
    for j in 1..3 {
        let lh = lambda_hat(regime, &sigma[j], &sigma[0])?;
        let a = geom.grad_lambda[j][0] * ui[0] + geom.grad_lambda[j][1] * ui[1];
        for c in 0..PACKED {
            let t = lh.ddot(&units[c]) * a;
            out[s0 + PACKED * j + c] -= t;
            out[s0 + c] += t;
        }
    }
    Ok(())
}

fn lumped<T: Real, F: Fn(&SymMat<T>) -> Result<T, TensorError>>(
    scheme: &Scheme<T>,
    stress: &[SymMat<T>],
    f: F,
) -> Result<T, SchemeError> {
    let vals: Vec<T> = stress.iter().map(&f).collect::<Result<_, _>>()?;
    let mut s = T::zero();
    for (k, el) in scheme.mesh().elements.iter().enumerate() {
        let third = scheme.tab(k).geom.area / T::lit(3.0);
        s += third * (vals[el[0]] + vals[el[1]] + vals[el[2]]);
    }
    Ok(s)
}

pub(crate) fn energy<T: Real>(scheme: &Scheme<T>, state: &DiscreteState<T>) -> Result<EnergyParts<T>, SchemeError> {
    let (kinetic, _) = scheme.kinetic_and_viscous(&state.velocity);
    let prm = scheme.params();
    let ent = lumped(scheme, &state.stress, |s| scheme.regime().entropy_trace(s))?;
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
    let regime = scheme.regime();
    let two = T::lit(2.0);
    let diss = lumped(scheme, &next.stress, |s| regime.stress_dissipation_trace(s))?;
    let stress_dissipation = prm.eps / (two * prm.wi * prm.wi) * diss;
    let diffusion = match regime.delta() {
        Some(delta) => {
            let gp: Vec<SymMat<T>> = next.stress.iter().map(|s| regime.g_prime(s)).collect::<Result<_, _>>()?;
            let mut s = T::zero();
            for (k, el) in scheme.mesh().elements.iter().enumerate() {
                let geom = &scheme.tab(k).geom;
                for p in 0..2 {
                    let mut d = SymMat::zeros(2);
                    for i in 0..3 {
                        d += gp[el[i]] * geom.grad_lambda[i][p];
                    }
                    s += geom.area * d.ddot(&d);
                }
            }
            prm.alpha * prm.eps * delta * delta / (two * prm.wi) * s
        }
        None => T::zero(),
    };
    let th: Vec<T> = next.stress.iter().map(|s| regime.trace_h_of_g_prime(s)).collect::<Result<_, _>>()?;
    Ok((stress_dissipation, diffusion, telescoping(scheme, &prev.velocity, &th)))
}

/// `int u . grad pi_h[q]` for vertex values `q`.
pub fn telescoping<T: Real>(scheme: &Scheme<T>, velocity: &[T], q: &[T]) -> T {
    let mut s = T::zero();
    for (k, el) in scheme.mesh().elements.iter().enumerate() {
        let tab = scheme.tab(k);
        let mut grad = [T::zero(); 2];
        for i in 0..3 {
            grad[0] += q[el[i]] * tab.geom.grad_lambda[i][0];
            grad[1] += q[el[i]] * tab.geom.grad_lambda[i][1];
        }
        for qp in 0..tab.wq.len() {
            let u = scheme.velocity_at(k, qp, velocity);
            s += tab.wq[qp] * (u[0] * grad[0] + u[1] * grad[1]);
        }
    }
    s
}

/// `(M_lumped + dt0 K) sigma = (int sigma0 lambda_v)_v`, componentwise.
pub(crate) fn project_stress<T: Real>(
    scheme: &Scheme<T>,
    sigma0: &InitialStress<'_, T>,
    dt0: T,
) -> Result<Vec<SymMat<T>>, SchemeError> {
    let mesh = scheme.mesh();
    let nv = mesh.n_vertices();
    let rule = triangle_rule::<T>(2)?;
    let mut rhs = vec![vec![T::zero(); nv]; PACKED];
    for k in 0..mesh.n_elements() {
        let geom = &scheme.tab(k).geom;
        let el = mesh.elements[k];
        for (l, w) in rule.points.iter().zip(&rule.weights) {
            let s = sigma0.eval(mesh, k, geom, l);
            for (i, &v) in el.iter().enumerate() {
                for (c, b) in rhs.iter_mut().enumerate() {
                    b[v] += *w * geom.area * l[i] * s.packed()[c];
                }
            }
        }
    }
    let sol = lumped_p1_solve(mesh, dt0, &rhs)?;
    Ok((0..nv).map(|v| SymMat::from_packed(&[sol[0][v], sol[1][v], sol[2][v]])).collect())
}
