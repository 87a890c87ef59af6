//! Discrete fields and the operations that act on them directly.

use crate::mesh::SimplicialMesh;
use crate::scalar::Real;
use crate::tensor::SymMat;

use super::quadrature::{gauss2, triangle_rule};
use super::space::{check_lbb_pair, PressureSpace, SpaceTag, VelocitySpace};
use super::FemError;

#[derive(Clone, Debug, PartialEq)]
pub struct VelocityField<T> {
    pub space: SpaceTag,
    pub coeffs: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PressureField<T> {
    pub space: SpaceTag,
    pub coeffs: Vec<T>,
}

/// Piecewise constant stress, one matrix per element.
#[derive(Clone, Debug, PartialEq)]
pub struct StressFieldP0<T> {
    pub values: Vec<SymMat<T>>,
}

/// Continuous piecewise linear field given by its vertex values.
#[derive(Clone, Debug, PartialEq)]
pub struct P1Field<V> {
    pub values: Vec<V>,
}

pub type StressFieldP1<T> = P1Field<SymMat<T>>;
pub type ScalarP1<T> = P1Field<T>;

impl<T: Real> StressFieldP1<T> {
    /// Every vertex value is symmetric positive definite.
    pub fn spd_at_vertices(&self) -> bool {
        self.values.iter().all(|s| s.min_eigenvalue().map(|l| l > T::zero()).unwrap_or(false))
    }

    pub fn min_vertex_eigenvalue(&self) -> T {
        self.values
            .iter()
            .map(|s| s.min_eigenvalue().unwrap_or_else(|_| T::nan()))
            .fold(T::infinity(), |a, b| a.min(b))
    }
}

impl<T: Real> StressFieldP0<T> {
    pub fn min_element_eigenvalue(&self) -> T {
        self.values
            .iter()
            .map(|s| s.min_eigenvalue().unwrap_or_else(|_| T::nan()))
            .fold(T::infinity(), |a, b| a.min(b))
    }
}

/// `pi_h` of vertex data: the P1 field with exactly these vertex values.
pub fn interpolate_vertexwise<T: Real, V: Clone>(mesh: &SimplicialMesh<T>, values: &[V]) -> Result<P1Field<V>, FemError> {
    if values.len() != mesh.n_vertices() {
        return Err(FemError::LengthMismatch { expected: mesh.n_vertices(), got: values.len() });
    }
    Ok(P1Field { values: values.to_vec() })
}

fn check_len<T: Real, V>(mesh: &SimplicialMesh<T>, f: &P1Field<V>) -> Result<(), FemError> {
    if f.values.len() != mesh.n_vertices() {
        return Err(FemError::LengthMismatch { expected: mesh.n_vertices(), got: f.values.len() });
    }
    Ok(())
}

/// `int pi_h[chi : phi]` by the vertex rule.
pub fn lumped_integral<T: Real>(mesh: &SimplicialMesh<T>, chi: &StressFieldP1<T>, phi: &StressFieldP1<T>) -> Result<T, FemError> {
    check_len(mesh, chi)?;
    check_len(mesh, phi)?;
    let q: Vec<T> = chi.values.iter().zip(&phi.values).map(|(a, b)| a.ddot(b)).collect();
    lumped_integral_scalar(mesh, &P1Field { values: q })
}

/// `int pi_h[q]` for vertex data `q`.
pub fn lumped_integral_scalar<T: Real>(mesh: &SimplicialMesh<T>, q: &ScalarP1<T>) -> Result<T, FemError> {
    check_len(mesh, q)?;
    let third = T::lit(1.0 / 3.0);
    let mut s = T::zero();
    for k in 0..mesh.n_elements() {
        let el = mesh.elements[k];
        s += mesh.area(k) * third * (q.values[el[0]] + q.values[el[1]] + q.values[el[2]]);
    }
    Ok(s)
}

/// Exact `int ||chi||^2` for a P1 tensor field (consistent P1 mass matrix).
pub fn exact_p1_l2_squared<T: Real>(mesh: &SimplicialMesh<T>, chi: &StressFieldP1<T>) -> Result<T, FemError> {
    check_len(mesh, chi)?;
    let mut s = T::zero();
    for k in 0..mesh.n_elements() {
        let el = mesh.elements[k];
        let v = el.map(|i| chi.values[i]);
        let sum = v[0] + v[1] + v[2];
        let sq: T = v.iter().map(|a| a.ddot(a)).sum();
        s += mesh.area(k) / T::lit(12.0) * (sq + sum.ddot(&sum));
    }
    Ok(s)
}

/// Upwind data at one facet point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpwindTrace<T> {
    pub downstream: SymMat<T>,
    pub upstream: SymMat<T>,
    /// `downstream - upstream`
    pub jump: SymMat<T>,
    /// `|u . n|`
    pub speed: T,
    /// Element the flow enters at this point, `None` when `u . n = 0`.
    pub downstream_element: Option<usize>,
}

/// Barycentric coordinates, on element `k`, of the point `(1 - t) a + t b` of facet `(a, b)`.
pub(crate) fn facet_bary<T: Real>(mesh: &SimplicialMesh<T>, k: usize, verts: [usize; 2], t: T) -> [T; 3] {
    let mut l = [T::zero(); 3];
    for (i, &v) in mesh.elements[k].iter().enumerate() {
        if v == verts[0] {
            l[i] = T::one() - t;
        } else if v == verts[1] {
            l[i] = t;
        }
    }
    l
}

/// Upwind trace of a P0 field on internal facet `facet` at facet parameter `t in [0, 1]`.
pub fn facet_upwind_trace<T: Real>(
    mesh: &SimplicialMesh<T>,
    space: &VelocitySpace<T>,
    velocity: &[T],
    field: &StressFieldP0<T>,
    facet: usize,
    t: T,
) -> Result<UpwindTrace<T>, FemError> {
    let f = mesh.internal_facets.get(facet).ok_or(FemError::NotInternal(facet))?;
    let l = facet_bary(mesh, f.left, f.vertices, t);
    let u = space.eval(f.left, &l, velocity);
    let un = u[0] * f.normal[0] + u[1] * f.normal[1];
    let (sl, sr) = (field.values[f.left], field.values[f.right]);
    let (down, up, el) = if un > T::zero() {
        (sr, sl, Some(f.right))
    } else if un < T::zero() {
        (sl, sr, Some(f.left))
    } else {
        let z = SymMat::zeros(sl.dim());
        return Ok(UpwindTrace { downstream: sl, upstream: sl, jump: z, speed: T::zero(), downstream_element: None });
    };
    Ok(UpwindTrace { downstream: down, upstream: up, jump: down - up, speed: un.abs(), downstream_element: el })
}

/// `(int q_i div u)_i` over the pressure basis. The velocity lies in the discretely
/// divergence-free subspace iff every entry vanishes.
pub fn discrete_divfree_residual<T: Real>(
    mesh: &SimplicialMesh<T>,
    space: &VelocitySpace<T>,
    velocity: &[T],
    pressure: &PressureSpace,
) -> Result<Vec<T>, FemError> {
    check_lbb_pair(space.tag, pressure.tag)?;
    if velocity.len() != space.n_dofs() {
        return Err(FemError::LengthMismatch { expected: space.n_dofs(), got: velocity.len() });
    }
    let rule = triangle_rule::<T>(4)?;
    let mut r = vec![T::zero(); pressure.n_dofs()];
    for k in 0..mesh.n_elements() {
        let g = mesh.geometry(k);
        for (l, w) in rule.points.iter().zip(&rule.weights) {
            let div = space.grad(k, l, &g, velocity).trace();
            for (dof, q) in pressure.local_values(mesh, k, l) {
                r[dof] += *w * g.area * q * div;
            }
        }
    }
    Ok(r)
}

/// Facet quadrature nodes and weights (weights include the facet length).
pub(crate) fn facet_rule<T: Real>(mesh: &SimplicialMesh<T>, facet: usize) -> [(T, T); 2] {
    let (t, w) = gauss2::<T>();
    let len = mesh.edges[mesh.internal_facets[facet].edge].length;
    [(t[0], w[0] * len), (t[1], w[1] * len)]
}
