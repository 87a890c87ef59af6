//! CSV trace and legacy-ASCII VTK snapshots.

use std::fmt::Write;

use viscofem::scheme::{DiscreteState, Scheme, SchemeError, SchemeKind};
use viscofem::stepper::Trajectory;

pub const CSV_HEADER: &str = "n,t,F,kinetic,entropy,visc_dissipation,stress_dissipation,diffusion_dissipation,forcing_pairing,slack,picard_iters,min_eig_stress";

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// One row per stored state; row 0 carries the initial energy and zero step terms.
pub fn trace_csv(scheme: &Scheme<f64>, traj: &Trajectory<f64>) -> Result<String, SchemeError> {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    let e0 = scheme.energy(&traj.states[0])?;
    let st0 = &traj.states[0];
    let zero = num(0.0);
    let _ = writeln!(
        s,
        "0,{},{},{},{},{zero},{zero},{zero},{zero},{zero},0,{}",
        num(st0.t),
        num(e0.total),
        num(e0.kinetic),
        num(e0.entropy),
        num(st0.min_stress_eigenvalue())
    );
    for (i, a) in traj.audits.iter().enumerate() {
        let st = &traj.states[i + 1];
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            i + 1,
            num(st.t),
            num(a.total),
            num(a.kinetic),
            num(a.entropy),
            num(a.viscous),
            num(a.stress_dissipation),
            num(a.diffusion),
            num(a.forcing),
            num(a.slack),
            traj.iterations[i],
            num(st.min_stress_eigenvalue())
        );
    }
    Ok(s)
}

/// Unstructured-grid snapshot: vertex velocity, stress components and pressure as point
/// data (fem1) or cell data (dg0 stress, P0 pressure).
pub fn vtk_snapshot(scheme: &Scheme<f64>, state: &DiscreteState<f64>, title: &str) -> String {
    let mesh = scheme.mesh();
    let (nv, ne) = (mesh.n_vertices(), mesh.n_elements());
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID");
    let _ = writeln!(s, "POINTS {nv} double");
    for p in &mesh.vertices {
        let _ = writeln!(s, "{} {} 0", num(p[0]), num(p[1]));
    }
    let _ = writeln!(s, "CELLS {ne} {}", 4 * ne);
    for el in &mesh.elements {
        let _ = writeln!(s, "3 {} {} {}", el[0], el[1], el[2]);
    }
    let _ = writeln!(s, "CELL_TYPES {ne}");
    for _ in 0..ne {
        s.push_str("5\n");
    }

    let mut vel = vec![[0.0; 2]; nv];
    for (k, el) in mesh.elements.iter().enumerate() {
        for (i, &v) in el.iter().enumerate() {
            let mut l = [0.0; 3];
            l[i] = 1.0;
            vel[v] = scheme.velocity_space().eval(k, &l, &state.velocity);
        }
    }
    let _ = writeln!(s, "POINT_DATA {nv}\nVECTORS velocity double");
    for u in &vel {
        let _ = writeln!(s, "{} {} 0", num(u[0]), num(u[1]));
    }
    let scalars = |s: &mut String, name: &str, vals: &mut dyn Iterator<Item = f64>| {
        let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for v in vals {
            let _ = writeln!(s, "{}", num(v));
        }
    };
    let comps = [("sigma_xx", 0, 0), ("sigma_xy", 0, 1), ("sigma_yy", 1, 1)];
    match scheme.kind() {
        SchemeKind::Fem1 => {
            for (name, i, j) in comps {
                scalars(&mut s, name, &mut state.stress.iter().map(|m| m.get(i, j)));
            }
            scalars(&mut s, "pressure", &mut state.pressure.iter().copied());
            let _ = writeln!(s, "CELL_DATA {ne}");
            scalars(&mut s, "cell_index", &mut (0..ne).map(|k| k as f64));
        }
        SchemeKind::Dg0 => {
            let _ = writeln!(s, "CELL_DATA {ne}");
            for (name, i, j) in comps {
                scalars(&mut s, name, &mut state.stress.iter().map(|m| m.get(i, j)));
            }
            scalars(&mut s, "pressure", &mut state.pressure.iter().copied());
        }
    }
    s
}
