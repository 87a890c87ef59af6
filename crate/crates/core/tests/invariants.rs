use proptest::prelude::*;

use viscofem::fem::{exact_p1_l2_squared, lumped_integral, P1Field, SpaceTag};
use viscofem::mesh::{audit_mesh, build_structured_mesh, Rect};
use viscofem::scenarios::random_spd_stress;
use viscofem::scheme::{FluidParams, Scheme, SchemeKind, SolverOpts};
use viscofem::tensor::{Mat, RegParams, Regime, SymMat};

fn sym2() -> impl Strategy<Value = SymMat<f64>> {
    (-30.0..30.0f64, -30.0..30.0f64, -30.0..30.0f64).prop_map(|(a, b, c)| SymMat::new2(a, b, c))
}

fn regime() -> impl Strategy<Value = Regime<f64>> {
    (0.001..0.5f64, prop::option::of(2.0..50.0f64)).prop_map(|(d, l)| Regime::Regularized(RegParams::new(d, l).unwrap()))
}

proptest! {
    #[test]
    fn beta_inverts_gprime(phi in sym2(), r in regime()) {
        let p = r.beta(&phi).unwrap().matmul(&r.g_prime(&phi).unwrap());
        let err = (0..2).flat_map(|i| (0..2).map(move |j| (i, j)))
            .map(|(i, j)| (p.get(i, j) - Mat::<f64>::identity(2).get(i, j)).abs())
            .fold(0.0, f64::max);
        prop_assert!(err < 1e-11);
    }

    #[test]
    fn entropy_and_dissipation_are_nonnegative(phi in sym2(), r in regime()) {
        prop_assert!(r.entropy_trace(&phi).unwrap() >= -1e-12);
        prop_assert!(r.stress_dissipation_trace(&phi).unwrap() >= -1e-12);
    }

    #[test]
    fn beta_is_monotone(a in sym2(), b in sym2(), r in regime()) {
        let d = (r.beta(&a).unwrap() - r.beta(&b).unwrap()).ddot(&(a - b));
        prop_assert!(d >= -1e-10 * (1.0 + (a - b).norm()));
    }

    #[test]
    fn structured_meshes_are_non_obtuse(nx in 1usize..12, ny in 1usize..12) {
        let mesh = build_structured_mesh::<f64>(nx, ny, Rect::unit()).unwrap();
        let audit = audit_mesh(&mesh);
        prop_assert!(audit.non_obtuse);
        prop_assert!((audit.max_angle - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        let area: f64 = (0..mesh.n_elements()).map(|k| mesh.area(k)).sum();
        prop_assert!((area - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lumping_dominates_exact(vals in prop::collection::vec(sym2(), 16)) {
        let mesh = build_structured_mesh(3, 3, Rect::unit()).unwrap();
        let f = P1Field { values: vals };
        let exact = exact_p1_l2_squared(&mesh, &f).unwrap();
        let lumped = lumped_integral(&mesh, &f, &f).unwrap();
        prop_assert!(exact <= lumped * (1.0 + 1e-12) + 1e-12);
        prop_assert!(lumped <= 4.0 * exact * (1.0 + 1e-12) + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn unforced_steps_dissipate(
        fem1 in any::<bool>(),
        log_dt in -2.0..1.0f64,
        seed in any::<u64>(),
        r in regime(),
    ) {
        let kind = if fem1 { SchemeKind::Fem1 } else { SchemeKind::Dg0 };
        let mesh = build_structured_mesh(3, 3, Rect::unit()).unwrap();
        let params = FluidParams::new(1.0, 1.0, 0.5, 0.01).unwrap();
        let s = Scheme::new(mesh, kind, SpaceTag::VelP2, params, r).unwrap();
        let dt = 10f64.powf(log_dt);
        let init = s.initial_state(|_| [0.0, 0.0], &random_spd_stress(&s, 0.5, 2.0, seed), dt).unwrap();
        let load = vec![0.0; s.velocity_space().n_dofs()];
        let out = s.step(&init, &load, dt, &SolverOpts::default(), None).unwrap();
        let audit = s.audit(&init, &out.state, &load, dt).unwrap();
        prop_assert!(audit.slack >= -1e-9);
        prop_assert!(audit.telescoping.abs() <= 1e-10);
        prop_assert!(audit.total <= s.energy(&init).unwrap().total + 1e-12);
    }
}
