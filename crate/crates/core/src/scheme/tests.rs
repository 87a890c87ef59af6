use approx::assert_abs_diff_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::fem1::{chain_identity_residual, lambda_hat, lambda_weight};
use super::*;
use crate::mesh::{build_structured_mesh, Rect};
use crate::tensor::RegParams;

fn regime(delta: f64, cutoff: Option<f64>) -> Regime<f64> {
    Regime::Regularized(RegParams::new(delta, cutoff).unwrap())
}

fn scheme(kind: SchemeKind, n: usize, alpha: f64) -> Scheme<f64> {
    let mesh = build_structured_mesh(n, n, Rect::unit()).unwrap();
    let vel = match kind {
        SchemeKind::Dg0 => SpaceTag::VelP2,
        SchemeKind::Fem1 => SpaceTag::VelP2,
    };
    Scheme::new(mesh, kind, vel, FluidParams::new(1.0, 1.0, 0.5, alpha).unwrap(), regime(0.1, None)).unwrap()
}

fn random_spd(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> SymMat<f64> {
    let (a, b) = (rng.gen_range(lo..hi), rng.gen_range(lo..hi));
    let th: f64 = rng.gen_range(0.0..std::f64::consts::PI);
    let (c, s) = (th.cos(), th.sin());
    SymMat::new2(a * c * c + b * s * s, (a - b) * c * s, a * s * s + b * c * c)
}

#[test]
fn rejects_bad_parameters_and_spaces() {
    assert!(FluidParams::new(1.0, 1.0, 1.0, 0.0).is_err());
    assert!(FluidParams::new(0.0, 1.0, 0.5, 0.0).is_err());
    let mesh = build_structured_mesh(2, 2, Rect::unit()).unwrap();
    let p = FluidParams::new(1.0, 1.0, 0.5, 0.0).unwrap();
    assert!(Scheme::new(mesh.clone(), SchemeKind::Dg0, SpaceTag::VelMini, p, regime(0.1, None)).is_err());
    assert!(Scheme::new(mesh, SchemeKind::Fem1, SpaceTag::VelP2Reduced, p, regime(0.1, None)).is_err());
}

#[test]
fn equilibrium_has_zero_residual() {
    for kind in [SchemeKind::Dg0, SchemeKind::Fem1] {
        let s = scheme(kind, 3, 0.01);
        let eq = s.equilibrium(0.0);
        let load = vec![0.0; s.velocity_space().n_dofs()];
        for dt in [0.01, 1.0, 10.0] {
            assert!(s.residual_norm(&eq, &eq, &load, dt).unwrap() < 1e-14);
        }
        let out = s.step(&eq, &load, 0.5, &SolverOpts::default(), None).unwrap();
        assert_eq!(out.iterations, 0);
        assert_eq!(out.state.stress, eq.stress);
    }
}

#[test]
fn frozen_velocity_relaxation_closed_form() {
    for kind in [SchemeKind::Dg0, SchemeKind::Fem1] {
        let s = scheme(kind, 2, 0.0);
        let mut prev = s.equilibrium(0.0);
        prev.stress.iter_mut().for_each(|m| *m = SymMat::diag(&[2.0, 2.0]));
        let load = vec![0.0; s.velocity_space().n_dofs()];
        let opts = SolverOpts { tol: 1e-13, ..Default::default() };
        let out = s.step(&prev, &load, 1.0, &opts, None).unwrap();
        for m in &out.state.stress {
            assert_abs_diff_eq!(m.get(0, 0), 1.5, epsilon = 1e-11);
            assert_abs_diff_eq!(m.get(1, 1), 1.5, epsilon = 1e-11);
            assert_abs_diff_eq!(m.get(0, 1), 0.0, epsilon = 1e-11);
        }
        assert!(out.state.velocity.iter().all(|v| v.abs() < 1e-11));
    }
}

#[test]
fn energy_of_uniform_stress() {
    for kind in [SchemeKind::Dg0, SchemeKind::Fem1] {
        let s = scheme(kind, 4, 0.01);
        let mut st = s.equilibrium(0.0);
        assert_abs_diff_eq!(s.energy(&st).unwrap().total, 0.0, epsilon = 1e-15);
        st.stress.iter_mut().for_each(|m| *m = SymMat::diag(&[2.0, 2.0]));
        let e = s.energy(&st).unwrap();
        assert_abs_diff_eq!(e.total, 0.25 * (2.0 - 2.0 * 2f64.ln()), epsilon = 1e-14);
        assert_abs_diff_eq!(e.total, 0.1534264, epsilon = 1e-7);
    }
}

#[test]
fn kinetic_energy_with_unit_l2_norm() {
    let mesh = build_structured_mesh(3, 3, Rect::unit()).unwrap();
    let s = Scheme::new(mesh, SchemeKind::Dg0, SpaceTag::VelP2, FluidParams::new(2.0, 1.0, 0.5, 0.0).unwrap(), regime(0.1, None))
        .unwrap();
    let mut st = s.equilibrium(0.0);
    let u = s.velocity_space().interpolate(s.mesh(), |x| [x[0], 0.0]);
    let scale = 3f64.sqrt();
    st.velocity = u.iter().map(|v| v * scale).collect();
    assert_abs_diff_eq!(s.energy(&st).unwrap().total, 1.0, epsilon = 1e-12);
}

#[test]
fn lambda_hat_scalar_identity_and_weight_range() {
    let r = regime(0.1, None);
    let (a, b) = (SymMat::diag(&[2.0, 2.0]), SymMat::diag(&[0.5, 0.5]));
    let l = lambda_hat(&r, &a, &b).unwrap();
    let lhs = l.ddot(&(r.g_prime(&a).unwrap() - r.g_prime(&b).unwrap()));
    // tr H(G'(s)) = -2 ln s for s in [delta, 1/delta]
    let rhs = -2.0 * 2f64.ln() + 2.0 * 0.5f64.ln();
    assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-12);
    let id = SymMat::identity(2);
    assert_eq!(lambda_hat(&r, &id, &id).unwrap(), id);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let (x, y) = (random_spd(&mut rng, 0.01, 20.0), random_spd(&mut rng, 0.01, 20.0));
        for reg in [r, regime(0.01, Some(10.0)), Regime::Unregularized { cutoff: None }] {
            if let Some(w) = lambda_weight(&reg, &x, &y).unwrap() {
                assert!((-1e-12..=1.0 + 1e-12).contains(&w), "weight {w}");
            }
        }
    }
}

#[test]
fn chain_identity_on_random_elements() {
    let mesh = build_structured_mesh(3, 3, Rect::unit()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for reg in [regime(0.1, None), regime(0.05, Some(10.0))] {
        for k in 0..mesh.n_elements() {
            let sig = [random_spd(&mut rng, 0.02, 15.0), random_spd(&mut rng, 0.02, 15.0), random_spd(&mut rng, 0.02, 15.0)];
            assert!(chain_identity_residual(&reg, &mesh.geometry(k), &sig).unwrap() < 1e-10);
        }
    }
}

#[test]
fn constant_stress_gives_diagonal_lambda_tensor() {
    let mesh = build_structured_mesh(2, 2, Rect::unit()).unwrap();
    let r = regime(0.1, None);
    let s = SymMat::new2(2.0, 0.3, 1.0);
    let lt = fem1::lambda_tensor(&r, &mesh.geometry(1), &[s, s, s]).unwrap();
    let b = r.beta(&s).unwrap();
    for m in 0..2 {
        for p in 0..2 {
            let expect = if m == p { b } else { SymMat::zeros(2) };
            assert!((lt[m][p] - expect).norm() < 1e-13);
        }
    }
}

#[test]
fn converged_steps_pass_audit() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for kind in [SchemeKind::Dg0, SchemeKind::Fem1] {
        let s = scheme(kind, 3, 0.01);
        let mut prev = s.equilibrium(0.0);
        prev.stress.iter_mut().for_each(|m| *m = random_spd(&mut rng, 0.5, 2.0));
        let f = s.load_vector(|x| [(3.0 * x[1]).sin(), x[0] * x[0]]);
        for dt in [0.01, 1.0, 10.0] {
            let out = s.step(&prev, &f, dt, &SolverOpts::default(), None).unwrap();
            let a = s.audit(&prev, &out.state, &f, dt).unwrap();
            assert!(a.slack >= -1e-9, "{kind:?} dt {dt}: {a:?}");
            assert!(a.telescoping.abs() < 1e-10, "{a:?}");
            assert!(a.skew.abs() < 1e-11);
            assert!(a.diffusion >= 0.0);
            let r = s.residual_norm(&prev, &out.state, &f, dt).unwrap();
            assert!(r <= 1e-10);
        }
    }
}

#[test]
fn parallel_assembly_is_bit_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let s = scheme(SchemeKind::Fem1, 3, 0.01);
    let mut prev = s.equilibrium(0.0);
    prev.stress.iter_mut().for_each(|m| *m = random_spd(&mut rng, 0.5, 2.0));
    let f = vec![0.0; s.velocity_space().n_dofs()];
    let seq = s.step(&prev, &f, 0.1, &SolverOpts::default(), None).unwrap();
    let par = s.step(&prev, &f, 0.1, &SolverOpts { parallel: true, ..Default::default() }, None).unwrap();
    assert_eq!(seq.state, par.state);
}

#[test]
fn initial_projection_preserves_identity_and_zero() {
    for kind in [SchemeKind::Dg0, SchemeKind::Fem1] {
        let s = scheme(kind, 4, 0.01);
        let id = |_: Point<f64>| SymMat::identity(2);
        let st = s.initial_state(|_| [0.0, 0.0], &InitialStress::Function(&id), 0.1).unwrap();
        assert!(st.velocity.iter().all(|v| *v == 0.0));
        for m in &st.stress {
            assert!((*m - SymMat::identity(2)).norm() < 1e-14);
        }
    }
}

#[test]
fn projected_velocity_is_discretely_divergence_free() {
    for kind in [SchemeKind::Dg0, SchemeKind::Fem1] {
        let s = scheme(kind, 4, 0.01);
        let id = |_: Point<f64>| SymMat::identity(2);
        let st = s
            .initial_state(|x| [(x[0] * 3.0).sin() * x[1], x[0] * x[1]], &InitialStress::Function(&id), 0.1)
            .unwrap();
        let r = crate::fem::discrete_divfree_residual(s.mesh(), s.velocity_space(), &st.velocity, s.pressure_space()).unwrap();
        assert!(crate::scalar::max_abs(&r) < 1e-11);
    }
}
