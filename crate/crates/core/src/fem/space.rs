//! Velocity, pressure and stress spaces on a [`SimplicialMesh`].
//!
//! Vector velocity basis functions are products `s(lambda) * d` of a scalar shape and a
//! constant direction (`e_x`, `e_y` or a facet normal), which keeps evaluation uniform
//! across the three velocity spaces.
//!
//! Global velocity numbering (`nv` vertices):
//! * vertex `v`, component `c`: `2 v + c` (all spaces)
//! * P2 edge `e`, component `c`: `2 nv + 2 e + c`
//! * MINI bubble of element `k`, component `c`: `2 nv + 2 k + c`
//! * reduced-P2 normal bubble of edge `e`: `2 nv + e`

use std::fmt;
use std::str::FromStr;

use crate::mesh::{ElementGeom, Point, SimplicialMesh};
use crate::scalar::Real;
use crate::tensor::Mat;

use super::FemError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SpaceTag {
    VelP2,
    VelP2Reduced,
    VelMini,
    PresP0,
    PresP1,
    StressP0,
    StressP1,
}

impl SpaceTag {
    pub fn name(self) -> &'static str {
        match self {
            SpaceTag::VelP2 => "p2",
            SpaceTag::VelP2Reduced => "p2-reduced",
            SpaceTag::VelMini => "mini",
            SpaceTag::PresP0 => "p0",
            SpaceTag::PresP1 => "p1",
            SpaceTag::StressP0 => "stress-p0",
            SpaceTag::StressP1 => "stress-p1",
        }
    }

    pub fn is_velocity(self) -> bool {
        matches!(self, SpaceTag::VelP2 | SpaceTag::VelP2Reduced | SpaceTag::VelMini)
    }

    pub fn is_pressure(self) -> bool {
        matches!(self, SpaceTag::PresP0 | SpaceTag::PresP1)
    }
}

impl fmt::Display for SpaceTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SpaceTag {
    type Err = FemError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "p2" => SpaceTag::VelP2,
            "p2-reduced" => SpaceTag::VelP2Reduced,
            "mini" => SpaceTag::VelMini,
            "p0" => SpaceTag::PresP0,
            "p1" => SpaceTag::PresP1,
            "stress-p0" => SpaceTag::StressP0,
            "stress-p1" => SpaceTag::StressP1,
            _ => return Err(FemError::UnknownSpace(s.to_string())),
        })
    }
}

/// Inf-sup stable velocity/pressure pairs this crate accepts.
pub const LBB_WHITELIST: [(SpaceTag, SpaceTag); 4] = [
    (SpaceTag::VelP2, SpaceTag::PresP0),
    (SpaceTag::VelP2Reduced, SpaceTag::PresP0),
    (SpaceTag::VelP2, SpaceTag::PresP1),
    (SpaceTag::VelMini, SpaceTag::PresP1),
];

pub fn check_lbb_pair(velocity: SpaceTag, pressure: SpaceTag) -> Result<(), FemError> {
    if LBB_WHITELIST.contains(&(velocity, pressure)) {
        Ok(())
    } else {
        Err(FemError::NotWhitelisted(velocity, pressure))
    }
}

/// Scalar shape functions in barycentric coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    /// `lambda_i`
    Linear(usize),
    /// `lambda_i (2 lambda_i - 1)`
    QuadVertex(usize),
    /// `4 lambda_j lambda_k`
    QuadEdge(usize, usize),
    /// `lambda_j lambda_k`
    EdgeBubble(usize, usize),
    /// `27 lambda_0 lambda_1 lambda_2`
    CubicBubble,
}

impl Shape {
    pub fn value<T: Real>(self, l: &[T; 3]) -> T {
        match self {
            Shape::Linear(i) => l[i],
            Shape::QuadVertex(i) => l[i] * (T::lit(2.0) * l[i] - T::one()),
            Shape::QuadEdge(j, k) => T::lit(4.0) * l[j] * l[k],
            Shape::EdgeBubble(j, k) => l[j] * l[k],
            Shape::CubicBubble => T::lit(27.0) * l[0] * l[1] * l[2],
        }
    }

    /// Partial derivatives with respect to `(lambda_0, lambda_1, lambda_2)`.
    pub fn bary_grad<T: Real>(self, l: &[T; 3]) -> [T; 3] {
        let mut g = [T::zero(); 3];
        match self {
            Shape::Linear(i) => g[i] = T::one(),
            Shape::QuadVertex(i) => g[i] = T::lit(4.0) * l[i] - T::one(),
            Shape::QuadEdge(j, k) => {
                g[j] = T::lit(4.0) * l[k];
                g[k] = T::lit(4.0) * l[j];
            }
            Shape::EdgeBubble(j, k) => {
                g[j] = l[k];
                g[k] = l[j];
            }
            Shape::CubicBubble => {
                let c = T::lit(27.0);
                g = [c * l[1] * l[2], c * l[0] * l[2], c * l[0] * l[1]];
            }
        }
        g
    }

    pub fn grad<T: Real>(self, l: &[T; 3], geom: &ElementGeom<T>) -> Point<T> {
        let b = self.bary_grad(l);
        let mut g = [T::zero(); 2];
        for i in 0..3 {
            g[0] += b[i] * geom.grad_lambda[i][0];
            g[1] += b[i] * geom.grad_lambda[i][1];
        }
        g
    }
}

/// One local velocity basis function `shape * direction` and its global index.
#[derive(Clone, Copy, Debug)]
pub struct LocalFn<T> {
    pub shape: Shape,
    pub direction: Point<T>,
    pub dof: usize,
}

impl<T: Real> LocalFn<T> {
    pub fn value(&self, l: &[T; 3]) -> Point<T> {
        let s = self.shape.value(l);
        [s * self.direction[0], s * self.direction[1]]
    }

    /// `(grad v)_{ij} = d v_i / d x_j`.
    pub fn grad(&self, l: &[T; 3], geom: &ElementGeom<T>) -> Mat<T> {
        let g = self.shape.grad(l, geom);
        let d = self.direction;
        Mat::from_rows2([d[0] * g[0], d[0] * g[1]], [d[1] * g[0], d[1] * g[1]])
    }
}

#[derive(Clone, Debug)]
pub struct VelocitySpace<T> {
    pub tag: SpaceTag,
    n_dofs: usize,
    local: Vec<Vec<LocalFn<T>>>,
    fixed: Vec<bool>,
    dof_points: Vec<Point<T>>,
}

impl<T: Real> VelocitySpace<T> {
    pub fn new(mesh: &SimplicialMesh<T>, tag: SpaceTag) -> Result<Self, FemError> {
        if !tag.is_velocity() {
            return Err(FemError::WrongKind(tag, "velocity"));
        }
        let nv = mesh.n_vertices();
        let (ex, ey) = ([T::one(), T::zero()], [T::zero(), T::one()]);
        let n_dofs = match tag {
            SpaceTag::VelP2 => 2 * (nv + mesh.n_edges()),
            SpaceTag::VelMini => 2 * (nv + mesh.n_elements()),
            _ => 2 * nv + mesh.n_edges(),
        };
        let mut fixed = vec![false; n_dofs];
        let mut dof_points = vec![[T::zero(); 2]; n_dofs];
        for v in 0..nv {
            for c in 0..2 {
                fixed[2 * v + c] = mesh.boundary_vertex[v];
                dof_points[2 * v + c] = mesh.vertices[v];
            }
        }
        let half = T::lit(0.5);
        for (e, edge) in mesh.edges.iter().enumerate() {
            let [a, b] = edge.vertices;
            let mid = [half * (mesh.vertices[a][0] + mesh.vertices[b][0]), half * (mesh.vertices[a][1] + mesh.vertices[b][1])];
            let boundary = edge.elements.1.is_none();
            match tag {
                SpaceTag::VelP2 => {
                    for c in 0..2 {
                        fixed[2 * nv + 2 * e + c] = boundary;
                        dof_points[2 * nv + 2 * e + c] = mid;
                    }
                }
                SpaceTag::VelP2Reduced => {
                    fixed[2 * nv + e] = boundary;
                    dof_points[2 * nv + e] = mid;
                }
                _ => {}
            }
        }
        let mut local = Vec::with_capacity(mesh.n_elements());
        for k in 0..mesh.n_elements() {
            let el = mesh.elements[k];
            let mut fns = Vec::new();
            let vertex_shape = |i| if tag == SpaceTag::VelP2 { Shape::QuadVertex(i) } else { Shape::Linear(i) };
            for (i, &v) in el.iter().enumerate() {
                fns.push(LocalFn { shape: vertex_shape(i), direction: ex, dof: 2 * v });
                fns.push(LocalFn { shape: vertex_shape(i), direction: ey, dof: 2 * v + 1 });
            }
            match tag {
                SpaceTag::VelP2 => {
                    for i in 0..3 {
                        let e = mesh.element_edges[k][i];
                        let s = Shape::QuadEdge((i + 1) % 3, (i + 2) % 3);
                        fns.push(LocalFn { shape: s, direction: ex, dof: 2 * nv + 2 * e });
                        fns.push(LocalFn { shape: s, direction: ey, dof: 2 * nv + 2 * e + 1 });
                    }
                }
                SpaceTag::VelP2Reduced => {
                    for i in 0..3 {
                        let e = mesh.element_edges[k][i];
                        let s = Shape::EdgeBubble((i + 1) % 3, (i + 2) % 3);
                        fns.push(LocalFn { shape: s, direction: mesh.edges[e].normal, dof: 2 * nv + e });
                    }
                }
                _ => {
                    let c = mesh.geometry(k).centroid();
                    for (comp, dir) in [ex, ey].into_iter().enumerate() {
                        let dof = 2 * nv + 2 * k + comp;
                        dof_points[dof] = c;
                        fns.push(LocalFn { shape: Shape::CubicBubble, direction: dir, dof });
                    }
                }
            }
            local.push(fns);
        }
        Ok(Self { tag, n_dofs, local, fixed, dof_points })
    }

    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    pub fn local(&self, k: usize) -> &[LocalFn<T>] {
        &self.local[k]
    }

    /// Whether the DOF is pinned to zero by the no-flow boundary condition.
    pub fn is_fixed(&self, dof: usize) -> bool {
        self.fixed[dof]
    }

    pub fn fixed_mask(&self) -> &[bool] {
        &self.fixed
    }

    /// Nodal location used for geometric DOF ordering.
    pub fn dof_point(&self, dof: usize) -> Point<T> {
        self.dof_points[dof]
    }

    pub fn eval(&self, k: usize, l: &[T; 3], coeffs: &[T]) -> Point<T> {
        let mut u = [T::zero(); 2];
        for f in &self.local[k] {
            let v = f.value(l);
            u[0] += coeffs[f.dof] * v[0];
            u[1] += coeffs[f.dof] * v[1];
        }
        u
    }

    pub fn grad(&self, k: usize, l: &[T; 3], geom: &ElementGeom<T>, coeffs: &[T]) -> Mat<T> {
        let mut g = Mat::zeros(2);
        for f in &self.local[k] {
            let gf = f.grad(l, geom);
            for i in 0..2 {
                for j in 0..2 {
                    g.set(i, j, g.get(i, j) + coeffs[f.dof] * gf.get(i, j));
                }
            }
        }
        g
    }

    /// Canonical interpolant of `f` (boundary DOFs are not zeroed).
    ///
    /// P2 is nodal at vertices and edge midpoints; MINI matches the centroid value with
    /// the bubble; reduced P2 matches the normal component at each edge midpoint.
    pub fn interpolate<F: Fn(Point<T>) -> Point<T>>(&self, mesh: &SimplicialMesh<T>, f: F) -> Vec<T> {
        let nv = mesh.n_vertices();
        let mut c = vec![T::zero(); self.n_dofs];
        for v in 0..nv {
            let u = f(mesh.vertices[v]);
            c[2 * v] = u[0];
            c[2 * v + 1] = u[1];
        }
        let half = T::lit(0.5);
        for (e, edge) in mesh.edges.iter().enumerate() {
            let [a, b] = edge.vertices;
            let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
            let mid = [half * (pa[0] + pb[0]), half * (pa[1] + pb[1])];
            let u = f(mid);
            match self.tag {
                SpaceTag::VelP2 => {
                    c[2 * nv + 2 * e] = u[0];
                    c[2 * nv + 2 * e + 1] = u[1];
                }
                SpaceTag::VelP2Reduced => {
                    let n = edge.normal;
                    let lin = [half * (c[2 * a] + c[2 * b]), half * (c[2 * a + 1] + c[2 * b + 1])];
                    let gap = (u[0] - lin[0]) * n[0] + (u[1] - lin[1]) * n[1];
                    c[2 * nv + e] = T::lit(4.0) * gap;
                }
                _ => {}
            }
        }
        if self.tag == SpaceTag::VelMini {
            let third = T::lit(1.0 / 3.0);
            for k in 0..mesh.n_elements() {
                let el = mesh.elements[k];
                let g = mesh.geometry(k);
                let u = f(g.centroid());
                for comp in 0..2 {
                    let lin = third * (c[2 * el[0] + comp] + c[2 * el[1] + comp] + c[2 * el[2] + comp]);
                    c[2 * nv + 2 * k + comp] = u[comp] - lin;
                }
            }
        }
        c
    }
}

/// Scalar pressure space, P0 per element or continuous P1.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PressureSpace {
    pub tag: SpaceTag,
    n_dofs: usize,
}

impl PressureSpace {
    pub fn new<T: Real>(mesh: &SimplicialMesh<T>, tag: SpaceTag) -> Result<Self, FemError> {
        let n_dofs = match tag {
            SpaceTag::PresP0 => mesh.n_elements(),
            SpaceTag::PresP1 => mesh.n_vertices(),
            _ => return Err(FemError::WrongKind(tag, "pressure")),
        };
        Ok(Self { tag, n_dofs })
    }

    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    /// Local `(global dof, value)` pairs on element `k` at barycentric point `l`.
    pub fn local_values<T: Real>(&self, mesh: &SimplicialMesh<T>, k: usize, l: &[T; 3]) -> Vec<(usize, T)> {
        match self.tag {
            SpaceTag::PresP0 => vec![(k, T::one())],
            _ => mesh.elements[k].iter().zip(l.iter()).map(|(&v, &x)| (v, x)).collect(),
        }
    }

    pub fn local_dofs<T: Real>(&self, mesh: &SimplicialMesh<T>, k: usize) -> Vec<usize> {
        match self.tag {
            SpaceTag::PresP0 => vec![k],
            _ => mesh.elements[k].to_vec(),
        }
    }

    pub fn dof_point<T: Real>(&self, mesh: &SimplicialMesh<T>, dof: usize) -> Point<T> {
        match self.tag {
            SpaceTag::PresP0 => mesh.geometry(dof).centroid(),
            _ => mesh.vertices[dof],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::quadrature::triangle_rule;
    use crate::mesh::{build_structured_mesh, Rect};
    use approx::assert_abs_diff_eq;

    #[test]
    fn whitelist() {
        assert!(check_lbb_pair(SpaceTag::VelP2, SpaceTag::PresP0).is_ok());
        assert!(check_lbb_pair(SpaceTag::VelMini, SpaceTag::PresP1).is_ok());
        assert!(check_lbb_pair(SpaceTag::VelMini, SpaceTag::PresP0).is_err());
        assert!(check_lbb_pair(SpaceTag::VelP2Reduced, SpaceTag::PresP1).is_err());
        assert_eq!("p2-reduced".parse::<SpaceTag>().unwrap(), SpaceTag::VelP2Reduced);
        assert!("p3".parse::<SpaceTag>().is_err());
    }

    #[test]
    fn dof_counts() {
        let m = build_structured_mesh::<f64>(2, 2, Rect::unit()).unwrap();
        let (nv, ne, nedge) = (9, 8, 16);
        assert_eq!(VelocitySpace::new(&m, SpaceTag::VelP2).unwrap().n_dofs(), 2 * (nv + nedge));
        assert_eq!(VelocitySpace::new(&m, SpaceTag::VelMini).unwrap().n_dofs(), 2 * (nv + ne));
        assert_eq!(VelocitySpace::new(&m, SpaceTag::VelP2Reduced).unwrap().n_dofs(), 2 * nv + nedge);
        let free = VelocitySpace::new(&m, SpaceTag::VelP2).unwrap().fixed_mask().iter().filter(|f| !**f).count();
        // one interior vertex and four interior edges
        assert_eq!(free, 2 * (1 + 8));
    }

    #[test]
    fn interpolation_reproduces_polynomials() {
        let m = build_structured_mesh::<f64>(3, 2, Rect::unit()).unwrap();
        let lin = |p: [f64; 2]| [1.0 + 2.0 * p[0] - p[1], 0.5 * p[0] + 3.0 * p[1]];
        let quad = |p: [f64; 2]| [p[0] * p[1], p[0] * p[0] - p[1]];
        let rule = triangle_rule::<f64>(4).unwrap();
        for (tag, f) in [
            (SpaceTag::VelP2, &quad as &dyn Fn([f64; 2]) -> [f64; 2]),
            (SpaceTag::VelMini, &lin),
            (SpaceTag::VelP2Reduced, &lin),
        ] {
            let s = VelocitySpace::new(&m, tag).unwrap();
            let c = s.interpolate(&m, f);
            for k in 0..m.n_elements() {
                let g = m.geometry(k);
                for l in &rule.points {
                    let u = s.eval(k, l, &c);
                    let e = f(g.point(l));
                    assert_abs_diff_eq!(u[0], e[0], epsilon = 1e-13);
                    assert_abs_diff_eq!(u[1], e[1], epsilon = 1e-13);
                }
            }
        }
    }

    #[test]
    fn velocity_gradients_match_finite_differences() {
        let m = build_structured_mesh::<f64>(2, 2, Rect::unit()).unwrap();
        for tag in [SpaceTag::VelP2, SpaceTag::VelMini, SpaceTag::VelP2Reduced] {
            let s = VelocitySpace::new(&m, tag).unwrap();
            let c: Vec<f64> = (0..s.n_dofs()).map(|i| ((i * 7919) % 13) as f64 / 13.0 - 0.4).collect();
            let k = 3;
            let g = m.geometry(k);
            let l = [0.2, 0.5, 0.3];
            let grad = s.grad(k, &l, &g, &c);
            let h = 1e-6;
            for j in 0..2 {
                // moving x_j by h changes lambda by h * grad_lambda[.][j]
                let shift = |sgn: f64| {
                    let ll = [0, 1, 2].map(|i| l[i] + sgn * h * g.grad_lambda[i][j]);
                    s.eval(k, &ll, &c)
                };
                let (up, dn) = (shift(1.0), shift(-1.0));
                for i in 0..2 {
                    assert_abs_diff_eq!(grad.get(i, j), (up[i] - dn[i]) / (2.0 * h), epsilon = 1e-8);
                }
            }
        }
    }

    #[test]
    fn velocity_is_continuous_across_facets() {
        let m = build_structured_mesh::<f64>(2, 3, Rect::unit()).unwrap();
        for tag in [SpaceTag::VelP2, SpaceTag::VelMini, SpaceTag::VelP2Reduced] {
            let s = VelocitySpace::new(&m, tag).unwrap();
            let c: Vec<f64> = (0..s.n_dofs()).map(|i| ((i * 31) % 17) as f64 / 17.0).collect();
            for f in &m.internal_facets {
                for t in [0.0, 0.3, 0.5, 1.0] {
                    let mut vals = Vec::new();
                    for k in [f.left, f.right] {
                        let el = m.elements[k];
                        let mut l = [0.0; 3];
                        for (i, &v) in el.iter().enumerate() {
                            if v == f.vertices[0] {
                                l[i] = 1.0 - t;
                            } else if v == f.vertices[1] {
                                l[i] = t;
                            }
                        }
                        vals.push(s.eval(k, &l, &c));
                    }
                    assert_abs_diff_eq!(vals[0][0], vals[1][0], epsilon = 1e-14);
                    assert_abs_diff_eq!(vals[0][1], vals[1][1], epsilon = 1e-14);
                }
            }
        }
    }
}
