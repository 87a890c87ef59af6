//! Named property suites over random data. Each check yields a margin (`lhs - rhs` for an
//! inequality `lhs >= rhs`, minus the error for an identity); a check fails when its margin
//! drops below `-tolerance`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fem::{exact_p1_l2_squared, lumped_integral, lumped_integral_scalar, triangle_rule, P1Field, SpaceTag};
use crate::mesh::{build_structured_mesh, ElementGeom, Point, Rect, SimplicialMesh};
use crate::scenarios::random_spd;
use crate::scheme::fem1::{chain_identity_residual, lambda_tensor, lambda_weight, project_stress};
use crate::scheme::{FluidParams, InitialStress, Scheme, SchemeKind};
use crate::tensor::{matrix_fn, negative_part, trace_abs, Mat, RegParams, Regime, SymMat, TensorError};

/// Tolerances used by the suites.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    pub identity: f64,
    pub inequality: f64,
    pub chain: f64,
    pub vertex_bound: f64,
    pub exact_value: f64,
    pub min_order: f64,
}

pub const TOLERANCES: Tolerances = Tolerances {
    identity: 1e-12,
    inequality: 1e-10,
    chain: 1e-10,
    vertex_bound: 1e-12,
    exact_value: 1e-12,
    min_order: 0.9,
};

pub const SUITES: [&str; 6] =
    ["matrix-inequalities", "nonobtuse-gradient", "lambda-chain", "lambda-consistency", "lumping", "initial-projection"];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CheckStats {
    pub count: usize,
    pub failures: usize,
    pub worst_margin: f64,
    pub tolerance: f64,
}

/// Outcome of a suite: per-check statistics plus named measurements.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SuiteReport {
    pub name: String,
    pub checks: BTreeMap<String, CheckStats>,
    pub measurements: BTreeMap<String, f64>,
}

impl SuiteReport {
    fn new(name: &str) -> Self {
        Self { name: name.to_string(), ..Default::default() }
    }

    pub fn record(&mut self, check: &str, margin: f64, tolerance: f64) {
        let e = self.checks.entry(check.to_string()).or_insert(CheckStats {
            count: 0,
            failures: 0,
            worst_margin: f64::INFINITY,
            tolerance,
        });
        e.count += 1;
        // NaN margins count as failures
        if !(margin >= -tolerance) {
            e.failures += 1;
        }
        e.worst_margin = if margin.is_nan() { f64::NAN } else { e.worst_margin.min(margin) };
    }

    pub fn measure(&mut self, key: &str, value: f64) {
        self.measurements.insert(key.to_string(), value);
    }

    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.values().all(|c| c.failures == 0)
    }

    /// Flat `key = value` lines.
    pub fn to_text(&self) -> String {
        let mut s = format!("suite = {}\npassed = {}\n", self.name, self.passed());
        for (k, c) in &self.checks {
            s += &format!(
                "check.{k}.count = {}\ncheck.{k}.failures = {}\ncheck.{k}.worst_margin = {:.16e}\ncheck.{k}.tolerance = {:e}\n",
                c.count, c.failures, c.worst_margin, c.tolerance
            );
        }
        for (k, v) in &self.measurements {
            s += &format!("measure.{k} = {v:.16e}\n");
        }
        s
    }
}

/// Runs a suite by name with its default sample sizes.
pub fn run_suite(name: &str, seed: u64) -> Option<Result<SuiteReport, TensorError>> {
    Some(match name {
        "matrix-inequalities" => matrix_inequalities(1000, seed),
        "nonobtuse-gradient" => nonobtuse_gradient(8, 200, seed),
        "lambda-chain" => lambda_chain(8, 200, seed),
        "lambda-consistency" => lambda_consistency(&[4, 8, 16, 32]),
        "lumping" => lumping(8, 200, seed),
        "initial-projection" => initial_projection(8, 50, seed),
        _ => return None,
    })
}

fn random_symmetric<R: Rng>(rng: &mut R, d: usize) -> SymMat<f64> {
    const SCALES: [f64; 6] = [0.01, 0.1, 0.5, 1.0, 4.0, 20.0];
    let s = SCALES[rng.gen_range(0..SCALES.len())];
    let shift = if rng.gen_bool(0.5) { rng.gen_range(0.0..2.0) * s } else { 0.0 };
    let mut m = SymMat::zeros(d);
    for i in 0..d {
        for j in i..d {
            let v = rng.gen_range(-s..s) + if i == j { shift } else { 0.0 };
            m.set(i, j, v);
        }
    }
    m
}

fn frob(m: &Mat<f64>) -> f64 {
    m.norm()
}

/// Regularized logarithm identities and inequalities on random symmetric matrices.
pub fn matrix_inequalities(samples: usize, seed: u64) -> Result<SuiteReport, TensorError> {
    let tol = TOLERANCES;
    let mut rep = SuiteReport::new("matrix-inequalities");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for d in [2usize, 3] {
        for delta in [0.5, 0.1, 0.01] {
            for cutoff in [Some(2.0), Some(10.0), None] {
                let regime = Regime::Regularized(RegParams::new(delta, cutoff)?);
                let (g, h) = (regime.g(), regime.h());
                let id = Mat::identity(d);
                for _ in 0..samples {
                    let phi = random_symmetric(&mut rng, d);
                    let psi = random_symmetric(&mut rng, d);
                    let scale = 1.0 + phi.norm() + psi.norm();
                    let (bp, gp) = (regime.beta(&phi)?, regime.g_prime(&phi)?);
                    let (bq, gq) = (regime.beta(&psi)?, regime.g_prime(&psi)?);
                    let gphi = matrix_fn(&phi, |s| g.value(s))?;
                    let gpsi = matrix_fn(&psi, |s| g.value(s))?;
                    let ident = SymMat::identity(d);

                    rep.record("inverse_beta_gprime", -frob(&bp.matmul(&gp).sub(&id)), tol.identity);
                    rep.record("inverse_gprime_beta", -frob(&gp.matmul(&bp).sub(&id)), tol.identity);
                    rep.record("stress_dissipation_positive", regime.stress_dissipation_trace(&phi)?, tol.inequality);
                    rep.record("entropy_positive", regime.entropy_trace(&phi)?, tol.inequality);
                    rep.record("beta_excess_positive", (phi - bp).ddot(&(ident - gp)), tol.inequality);
                    let concav = (phi - psi).ddot(&gq) - (gphi - gpsi).trace();
                    rep.record("concavity", concav / scale, tol.inequality);
                    let dg = gp - gq;
                    rep.record("strong_monotonicity", -(phi - psi).ddot(&dg) - delta * delta * dg.ddot(&dg), tol.inequality);
                    let hb = matrix_fn(&gp, |y| h.derivative(y))?;
                    // rounding in G' is amplified by |H''| <= |beta|^2
                    let cond = 1.0 + gp.norm() * bp.norm() * bp.norm();
                    rep.record("h_chain", -(hb - bp).norm() / cond, tol.identity);

                    let ent2 = (phi - gphi).trace();
                    rep.record("entropy2_norm", ent2 - 0.5 * phi.norm(), tol.inequality);
                    rep.record("entropy2_negative_part", ent2 - negative_part(&phi)?.norm() / (2.0 * delta), tol.inequality);
                    rep.record("entropy2_test", phi.ddot(&(ident - gp)) - 0.5 * phi.norm() + d as f64, tol.inequality);

                    let dist = (phi - psi).norm();
                    rep.record("lipschitz_beta", dist - (bp - bq).norm(), tol.inequality);
                    rep.record("lipschitz_negative_part", dist - (negative_part(&phi)? - negative_part(&psi)?).norm(), tol.inequality);

                    let ta = trace_abs(&phi)?;
                    let n2 = phi.ddot(&phi);
                    rep.record("norm_sandwich_lower", (n2 - ta * ta / d as f64) / scale, tol.inequality);
                    rep.record("norm_sandwich_upper", (ta * ta - n2) / scale, tol.inequality);
                }
            }
        }
    }
    Ok(rep)
}

fn p1_grad(geom: &ElementGeom<f64>, v: [f64; 3]) -> Point<f64> {
    let mut g = [0.0; 2];
    for i in 0..3 {
        g[0] += v[i] * geom.grad_lambda[i][0];
        g[1] += v[i] * geom.grad_lambda[i][1];
    }
    g
}

fn p1_grad_tensor(geom: &ElementGeom<f64>, v: [SymMat<f64>; 3]) -> [SymMat<f64>; 2] {
    let mut g = [SymMat::zeros(2); 2];
    for (p, gp) in g.iter_mut().enumerate() {
        for i in 0..3 {
            *gp += v[i] * geom.grad_lambda[i][p];
        }
    }
    g
}

type ScalarMap = Box<dyn Fn(f64) -> f64>;

/// Elementwise gradient inequality for monotone Lipschitz compositions on a non-obtuse mesh.
pub fn nonobtuse_gradient(n: usize, fields: usize, seed: u64) -> Result<SuiteReport, TensorError> {
    let tol = TOLERANCES.inequality;
    let mut rep = SuiteReport::new("nonobtuse-gradient");
    let mesh = build_structured_mesh(n, n, Rect::unit()).expect("valid structured mesh");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let delta = 0.1;
    let regime = Regime::Regularized(RegParams::new(delta, None)?);
    let gp = regime.g();
    // (name, scalar map, Lipschitz constant)
    let maps: [(&str, ScalarMap, f64); 2] = [
        ("negative_part", Box::new(|s: f64| s.min(0.0)), 1.0),
        ("minus_gprime", Box::new(move |s: f64| -gp.derivative(s)), 1.0 / (delta * delta)),
    ];
    let geoms: Vec<ElementGeom<f64>> = (0..mesh.n_elements()).map(|k| mesh.geometry(k)).collect();
    for _ in 0..fields {
        let amp = rng.gen_range(0.05..3.0);
        let q: Vec<f64> = (0..mesh.n_vertices()).map(|_| rng.gen_range(-amp..amp) + 0.5 * amp).collect();
        let phi: Vec<SymMat<f64>> = (0..mesh.n_vertices()).map(|_| random_symmetric(&mut rng, 2)).collect();
        for (name, g, lip) in &maps {
            let gq: Vec<f64> = q.iter().map(|s| g(*s)).collect();
            let gphi: Vec<SymMat<f64>> = phi.iter().map(|m| matrix_fn(m, g)).collect::<Result<_, _>>()?;
            for (k, geom) in geoms.iter().enumerate() {
                let el = mesh.elements[k];
                let dq = p1_grad(geom, el.map(|i| q[i]));
                let dg = p1_grad(geom, el.map(|i| gq[i]));
                let lhs = lip * (dg[0] * dq[0] + dg[1] * dq[1]);
                let rhs = dg[0] * dg[0] + dg[1] * dg[1];
                let size = 1.0 + lip * rhs.sqrt() * (dq[0] * dq[0] + dq[1] * dq[1]).sqrt() + rhs;
                rep.record(&format!("scalar_{name}"), (lhs - rhs) / size, tol);
                let dphi = p1_grad_tensor(geom, el.map(|i| phi[i]));
                let dgphi = p1_grad_tensor(geom, el.map(|i| gphi[i]));
                let lhs = lip * (dgphi[0].ddot(&dphi[0]) + dgphi[1].ddot(&dphi[1]));
                let rhs = dgphi[0].ddot(&dgphi[0]) + dgphi[1].ddot(&dgphi[1]);
                // rounding floor of the spectral map scales with the vertex values
                let gmag: f64 = (0..3).map(|i| gphi[el[i]].norm() * geom.grad_lambda[i][0].hypot(geom.grad_lambda[i][1])).sum();
                let dphi_norm = (dphi[0].ddot(&dphi[0]) + dphi[1].ddot(&dphi[1])).sqrt();
                let size = 1.0 + lip * (rhs.sqrt() + gmag) * dphi_norm + rhs;
                rep.record(&format!("tensor_{name}"), (lhs - rhs) / size, tol);
            }
        }
    }
    Ok(rep)
}

/// Transport tensor chain identity on random SPD P1 fields, plus the weight range.
pub fn lambda_chain(n: usize, fields: usize, seed: u64) -> Result<SuiteReport, TensorError> {
    let tol = TOLERANCES;
    let mut rep = SuiteReport::new("lambda-chain");
    let mesh = build_structured_mesh(n, n, Rect::unit()).expect("valid structured mesh");
    let geoms: Vec<ElementGeom<f64>> = (0..mesh.n_elements()).map(|k| mesh.geometry(k)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_block = 0.0f64;
    for (label, cutoff) in [("cutoff10", Some(10.0)), ("no_cutoff", None)] {
        let regime = Regime::Regularized(RegParams::new(0.1, cutoff)?);
        for _ in 0..fields {
            let sig: Vec<SymMat<f64>> = (0..mesh.n_vertices()).map(|_| random_spd(&mut rng, 0.01, 20.0)).collect();
            for (k, geom) in geoms.iter().enumerate() {
                let s = mesh.elements[k].map(|i| sig[i]);
                rep.record(&format!("chain_{label}"), -chain_identity_residual(&regime, geom, &s)?, tol.chain);
                for j in 1..3 {
                    if let Some(w) = lambda_weight(&regime, &s[j], &s[0])? {
                        rep.record("weight_in_unit_interval", w.min(1.0 - w), tol.identity);
                    }
                }
                if cutoff.is_some() {
                    let lt = lambda_tensor(&regime, geom, &s)?;
                    for row in &lt {
                        for b in row {
                            worst_block = worst_block.max(b.norm());
                        }
                    }
                }
            }
        }
    }
    rep.measure("max_block_norm_cutoff10", worst_block);
    Ok(rep)
}

/// Smooth SPD test field with eigenvalues in roughly `[0.3, 3]`.
pub fn smooth_spd_field(x: Point<f64>) -> SymMat<f64> {
    use std::f64::consts::PI;
    let l1 = 1.2 + 0.9 * (2.0 * PI * x[0]).sin() * (PI * x[1]).cos();
    let l2 = 2.0 + (PI * x[0] * x[1]).cos();
    let th = 0.5 * PI * x[0] * x[1] + 0.3 * x[1];
    let (c, s) = (th.cos(), th.sin());
    SymMat::new2(l1 * c * c + l2 * s * s, (l1 - l2) * c * s, l1 * s * s + l2 * c * c)
}

/// `max_{m,p} || Lambda_mp - beta(pi_h sigma) delta_mp ||_{L2}` on an `n x n` mesh.
pub fn lambda_gap(n: usize, regime: &Regime<f64>) -> Result<f64, TensorError> {
    let mesh = build_structured_mesh(n, n, Rect::unit()).expect("valid structured mesh");
    let vals: Vec<SymMat<f64>> = mesh.vertices.iter().map(|v| smooth_spd_field(*v)).collect();
    let rule = triangle_rule::<f64>(4).expect("supported degree");
    let mut acc = [[0.0f64; 2]; 2];
    for k in 0..mesh.n_elements() {
        let geom = mesh.geometry(k);
        let s = mesh.elements[k].map(|i| vals[i]);
        let lt = lambda_tensor(regime, &geom, &s)?;
        for (l, w) in rule.points.iter().zip(&rule.weights) {
            let sig = s[0] * l[0] + s[1] * l[1] + s[2] * l[2];
            let b = regime.beta(&sig)?;
            for m in 0..2 {
                for p in 0..2 {
                    let diff = if m == p { lt[m][p] - b } else { lt[m][p] };
                    acc[m][p] += w * geom.area * diff.ddot(&diff);
                }
            }
        }
    }
    Ok(acc.iter().flatten().fold(0.0f64, |a, b| a.max(b.sqrt())))
}

/// Least-squares slope of `log gap` against `log h`.
pub fn observed_order(ns: &[usize], gaps: &[f64]) -> f64 {
    let xs: Vec<f64> = ns.iter().map(|n| (1.0 / *n as f64).ln()).collect();
    let ys: Vec<f64> = gaps.iter().map(|g| g.ln()).collect();
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    num / den
}

/// First-order consistency of the transport tensor under refinement.
pub fn lambda_consistency(ns: &[usize]) -> Result<SuiteReport, TensorError> {
    let mut rep = SuiteReport::new("lambda-consistency");
    for (label, regime) in [
        ("delta0.5", Regime::Regularized(RegParams::new(0.5, None)?)),
        ("delta0.1_cutoff2", Regime::Regularized(RegParams::new(0.1, Some(2.0))?)),
    ] {
        let gaps: Vec<f64> = ns.iter().map(|n| lambda_gap(*n, &regime)).collect::<Result<_, _>>()?;
        for (n, g) in ns.iter().zip(&gaps) {
            rep.measure(&format!("gap_{label}_n{n}"), *g);
        }
        let order = observed_order(ns, &gaps);
        rep.measure(&format!("order_{label}"), order);
        rep.record(&format!("order_{label}"), order - TOLERANCES.min_order, 0.0);
    }
    Ok(rep)
}

/// Vertex-rule sandwich and the single-triangle reference values.
pub fn lumping(n: usize, fields: usize, seed: u64) -> Result<SuiteReport, TensorError> {
    let tol = TOLERANCES;
    let mut rep = SuiteReport::new("lumping");
    let tri = SimplicialMesh::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]]).expect("valid triangle");
    let q = P1Field { values: vec![1.0, 2.0, 3.0] };
    let lumped = lumped_integral_scalar(&tri, &P1Field { values: q.values.iter().map(|v| v * v).collect() }).expect("sizes match");
    let exact = exact_p1_l2_squared(&tri, &P1Field { values: q.values.iter().map(|v| SymMat::new2(*v, 0.0, 0.0)).collect() })
        .expect("sizes match");
    rep.measure("triangle_lumped", lumped);
    rep.measure("triangle_exact", exact);
    rep.record("triangle_lumped_value", -(lumped - 7.0 / 3.0).abs(), tol.exact_value);
    rep.record("triangle_exact_value", -(exact - 25.0 / 12.0).abs(), tol.exact_value);

    let mesh = build_structured_mesh(n, n, Rect::unit()).expect("valid structured mesh");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_ratio = 0.0f64;
    for _ in 0..fields {
        let chi = P1Field { values: (0..mesh.n_vertices()).map(|_| random_symmetric(&mut rng, 2)).collect() };
        let ex = exact_p1_l2_squared(&mesh, &chi).expect("sizes match");
        let lu = lumped_integral(&mesh, &chi, &chi).expect("sizes match");
        let scale = 1.0 + lu;
        rep.record("exact_le_lumped", (lu - ex) / scale, tol.inequality);
        rep.record("lumped_le_4_exact", (4.0 * ex - lu) / scale, tol.inequality);
        if ex > 0.0 {
            worst_ratio = worst_ratio.max(lu / ex);
        }
    }
    rep.measure("max_lumped_over_exact", worst_ratio);
    Ok(rep)
}

/// Vertex eigenvalue bounds of the smoothed stress projection used by the fem1 initial state.
pub fn initial_projection(n: usize, fields: usize, seed: u64) -> Result<SuiteReport, TensorError> {
    use std::f64::consts::PI;
    let tol = TOLERANCES.vertex_bound;
    let mut rep = SuiteReport::new("initial-projection");
    let mesh = build_structured_mesh(n, n, Rect::unit()).expect("valid structured mesh");
    let params = FluidParams::new(1.0, 1.0, 0.5, 0.01).expect("valid parameters");
    let scheme = Scheme::new(mesh, SchemeKind::Fem1, SpaceTag::VelP2, params, Regime::Regularized(RegParams::new(0.1, None)?))
        .expect("valid scheme");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zero = |_: Point<f64>| [0.0, 0.0];
    let id = |_: Point<f64>| SymMat::identity(2);
    let st = scheme.initial_state(zero, &InitialStress::Function(&id), 0.1).expect("projection solves");
    let err = st.stress.iter().map(|m| (*m - SymMat::identity(2)).norm()).fold(0.0, f64::max);
    rep.record("identity_reproduced", -err, 1e-14);
    for _ in 0..fields {
        let lo = rng.gen_range(0.05..1.0);
        let hi = lo + rng.gen_range(0.1..5.0);
        let (a, b, c, e): (f64, f64, f64, f64) = (rng.gen(), rng.gen(), rng.gen(), rng.gen());
        let dt0 = [1e-3, 1e-2, 0.1, 1.0][rng.gen_range(0..4)];
        let f = move |x: Point<f64>| {
            let s1 = 0.5 + 0.5 * (2.0 * PI * (a * x[0] + b * x[1]) + 7.0 * c).sin();
            let s2 = 0.5 + 0.5 * (PI * (3.0 * c * x[0] - 2.0 * e * x[1]) + a).cos();
            let (l1, l2) = (lo + (hi - lo) * s1, lo + (hi - lo) * s2);
            let th = PI * (e * x[0] + a * x[1] * x[1]);
            let (co, si) = (th.cos(), th.sin());
            SymMat::new2(l1 * co * co + l2 * si * si, (l1 - l2) * co * si, l1 * si * si + l2 * co * co)
        };
        let stress = project_stress(&scheme, &InitialStress::Function(&f), dt0).expect("projection solves");
        for m in &stress {
            rep.record("vertex_min_eigenvalue", m.min_eigenvalue()? - lo, tol);
            rep.record("vertex_max_eigenvalue", hi - m.max_eigenvalue()?, tol);
        }
    }
    Ok(rep)
}
