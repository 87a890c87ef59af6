//! Conforming 2D triangulations, affine reference maps and mesh audits.
//!
//! Plain-text mesh format (all indices 0-based, whitespace separated, `#` starts a comment):
//!
//! ```text
//! 2 nv ne nf
//! x y            # nv vertex lines
//! a b c          # ne element lines (vertex indices)
//! a b left right # nf internal facet lines (vertex pair, adjacent elements)
//! ```
//!
//! Facet lines are checked against the topology recomputed from the elements.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::scalar::Real;
use crate::tensor::Mat;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("element {element} is degenerate (zero area)")]
    SingularMap { element: usize },
    #[error("non-conforming mesh: edge ({0}, {1}) shared by more than two elements")]
    NonConforming(usize, usize),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Point<T> = [T; 2];

/// Mesh edge. `elements.1` is `None` on the boundary. For internal edges the unit
/// normal points from the lower-index element `elements.0` into `elements.1`; for
/// boundary edges it is the outward normal.
#[derive(Clone, Debug, PartialEq)]
pub struct Edge<T> {
    pub vertices: [usize; 2],
    pub elements: (usize, Option<usize>),
    pub normal: Point<T>,
    pub length: T,
}

/// Internal facet `E_j` with its two neighbours (`left < right`) and the unit normal
/// pointing from `left` into `right`.
#[derive(Clone, Debug, PartialEq)]
pub struct InternalFacet<T> {
    pub edge: usize,
    pub vertices: [usize; 2],
    pub left: usize,
    pub right: usize,
    pub normal: Point<T>,
}

#[derive(Clone, Debug)]
pub struct SimplicialMesh<T> {
    pub vertices: Vec<Point<T>>,
    /// Positively oriented vertex triples.
    pub elements: Vec<[usize; 3]>,
    pub edges: Vec<Edge<T>>,
    pub internal_facets: Vec<InternalFacet<T>>,
    /// Global edge index of the edge opposite local vertex `i`.
    pub element_edges: Vec<[usize; 3]>,
    pub boundary_vertex: Vec<bool>,
}

/// Per-element geometric data derived from the affine map.
#[derive(Clone, Copy, Debug)]
pub struct ElementGeom<T> {
    pub vertices: [Point<T>; 3],
    pub area: T,
    /// Gradients of the barycentric coordinates.
    pub grad_lambda: [Point<T>; 3],
    pub map: AffineMap<T>,
}

impl<T: Real> ElementGeom<T> {
    pub fn point(&self, lam: &[T; 3]) -> Point<T> {
        let mut p = [T::zero(); 2];
        for (i, v) in self.vertices.iter().enumerate() {
            p[0] += lam[i] * v[0];
            p[1] += lam[i] * v[1];
        }
        p
    }

    pub fn centroid(&self) -> Point<T> {
        let t = T::lit(1.0 / 3.0);
        self.point(&[t, t, t])
    }

    /// Outward unit normal of the edge opposite local vertex `i`.
    pub fn outward_normal(&self, i: usize) -> Point<T> {
        let g = self.grad_lambda[i];
        let n = g[0].hypot(g[1]);
        [-g[0] / n, -g[1] / n]
    }
}

/// `x = origin + B x_hat`, sending reference vertex `e_j` to element vertex `P_j`.
#[derive(Clone, Copy, Debug)]
pub struct AffineMap<T> {
    pub origin: Point<T>,
    pub matrix: Mat<T>,
    pub determinant: T,
}

impl<T: Real> AffineMap<T> {
    pub fn apply(&self, xh: Point<T>) -> Point<T> {
        let b = &self.matrix;
        [
            self.origin[0] + b.get(0, 0) * xh[0] + b.get(0, 1) * xh[1],
            self.origin[1] + b.get(1, 0) * xh[0] + b.get(1, 1) * xh[1],
        ]
    }

    /// `B^{-T}`, the transform taking reference gradients to physical ones.
    pub fn inverse_transpose(&self) -> Mat<T> {
        let b = &self.matrix;
        let d = self.determinant;
        // (B^{-1})^T = cof(B) / det
        Mat::from_rows2([b.get(1, 1) / d, -b.get(1, 0) / d], [-b.get(0, 1) / d, b.get(0, 0) / d])
    }

    pub fn physical_gradient(&self, ref_grad: Point<T>) -> Point<T> {
        let m = self.inverse_transpose();
        [
            m.get(0, 0) * ref_grad[0] + m.get(0, 1) * ref_grad[1],
            m.get(1, 0) * ref_grad[0] + m.get(1, 1) * ref_grad[1],
        ]
    }
}

fn signed_area<T: Real>(a: Point<T>, b: Point<T>, c: Point<T>) -> T {
    T::lit(0.5) * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn dist<T: Real>(a: Point<T>, b: Point<T>) -> T {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect<T> {
    pub x0: T,
    pub x1: T,
    pub y0: T,
    pub y1: T,
}

impl<T: Real> Rect<T> {
    pub fn unit() -> Self {
        Self { x0: T::zero(), x1: T::one(), y0: T::zero(), y1: T::one() }
    }

    pub fn area(&self) -> T {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

impl<T: Real> SimplicialMesh<T> {
    /// Builds topology from raw vertices and triangles. Negatively oriented triangles are
    /// re-oriented; zero-area ones and edges shared by three or more triangles are errors.
    pub fn new(vertices: Vec<Point<T>>, mut elements: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        let nv = vertices.len();
        if elements.is_empty() {
            return Err(MeshError::InvalidInput("mesh has no elements".into()));
        }
        if vertices.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(MeshError::InvalidInput("non-finite vertex coordinate".into()));
        }
        for (k, el) in elements.iter_mut().enumerate() {
            if el.iter().any(|&v| v >= nv) {
                return Err(MeshError::InvalidInput(format!("element {k} references a missing vertex")));
            }
            let a = signed_area(vertices[el[0]], vertices[el[1]], vertices[el[2]]);
            if a == T::zero() || !a.is_finite() {
                return Err(MeshError::SingularMap { element: k });
            }
            if a < T::zero() {
                el.swap(1, 2);
            }
        }

        let mut edge_map: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges: Vec<Edge<T>> = Vec::new();
        let mut element_edges = vec![[0usize; 3]; elements.len()];
        for (k, el) in elements.iter().enumerate() {
            for i in 0..3 {
                let (a, b) = (el[(i + 1) % 3], el[(i + 2) % 3]);
                let key = (a.min(b), a.max(b));
                match edge_map.get(&key) {
                    Some(&e) => {
                        if edges[e].elements.1.is_some() {
                            return Err(MeshError::NonConforming(key.0, key.1));
                        }
                        edges[e].elements.1 = Some(k);
                        element_edges[k][i] = e;
                    }
                    None => {
                        edge_map.insert(key, edges.len());
                        element_edges[k][i] = edges.len();
                        edges.push(Edge {
                            vertices: [key.0, key.1],
                            elements: (k, None),
                            normal: [T::zero(); 2],
                            length: dist(vertices[key.0], vertices[key.1]),
                        });
                    }
                }
            }
        }

        let mut boundary_vertex = vec![false; nv];
        let mut internal_facets = Vec::new();
        for (e, edge) in edges.iter_mut().enumerate() {
            let [a, b] = edge.vertices;
            let (pa, pb) = (vertices[a], vertices[b]);
            let t = [pb[0] - pa[0], pb[1] - pa[1]];
            let len = t[0].hypot(t[1]);
            let mut n = [t[1] / len, -t[0] / len];
            // orient out of elements.0
            let el = elements[edge.elements.0];
            let opp = el.iter().copied().find(|&v| v != a && v != b).expect("triangle has a third vertex");
            let po = vertices[opp];
            let to_opp = (po[0] - pa[0]) * n[0] + (po[1] - pa[1]) * n[1];
            if to_opp > T::zero() {
                n = [-n[0], -n[1]];
            }
            edge.normal = n;
            match edge.elements.1 {
                Some(right) => internal_facets.push(InternalFacet {
                    edge: e,
                    vertices: edge.vertices,
                    left: edge.elements.0,
                    right,
                    normal: n,
                }),
                None => {
                    boundary_vertex[a] = true;
                    boundary_vertex[b] = true;
                }
            }
        }
        Ok(Self { vertices, elements, edges, internal_facets, element_edges, boundary_vertex })
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn element_vertices(&self, k: usize) -> [Point<T>; 3] {
        let el = self.elements[k];
        [self.vertices[el[0]], self.vertices[el[1]], self.vertices[el[2]]]
    }

    pub fn area(&self, k: usize) -> T {
        let [a, b, c] = self.element_vertices(k);
        signed_area(a, b, c)
    }

    pub fn total_area(&self) -> T {
        (0..self.n_elements()).map(|k| self.area(k)).sum()
    }

    pub fn geometry(&self, k: usize) -> ElementGeom<T> {
        let map = reference_map(self, k).expect("mesh elements are non-degenerate by construction");
        let bit = map.inverse_transpose();
        let g1 = [bit.get(0, 0), bit.get(1, 0)];
        let g2 = [bit.get(0, 1), bit.get(1, 1)];
        let g0 = [-g1[0] - g2[0], -g1[1] - g2[1]];
        ElementGeom {
            vertices: self.element_vertices(k),
            area: map.determinant * T::lit(0.5),
            grad_lambda: [g0, g1, g2],
            map,
        }
    }

    /// Longest edge of element `k`.
    pub fn diameter(&self, k: usize) -> T {
        let [a, b, c] = self.element_vertices(k);
        dist(a, b).max(dist(b, c)).max(dist(c, a))
    }

    /// Mesh size `h = max_k h_k`.
    pub fn mesh_size(&self) -> T {
        (0..self.n_elements()).fold(T::zero(), |m, k| m.max(self.diameter(k)))
    }

    /// Writes the plain-text mesh format.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "2 {} {} {}", self.n_vertices(), self.n_elements(), self.internal_facets.len());
        for p in &self.vertices {
            let _ = writeln!(s, "{:.17e} {:.17e}", p[0].as_f64(), p[1].as_f64());
        }
        for el in &self.elements {
            let _ = writeln!(s, "{} {} {}", el[0], el[1], el[2]);
        }
        for f in &self.internal_facets {
            let _ = writeln!(s, "{} {} {} {}", f.vertices[0], f.vertices[1], f.left, f.right);
        }
        s
    }

    /// Parses the plain-text mesh format.
    pub fn from_text(text: &str) -> Result<Self, MeshError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let parse_err = |line: usize, msg: &str| MeshError::Parse { line, msg: msg.to_string() };
        let (hl, header) = lines.next().ok_or_else(|| parse_err(0, "empty mesh file"))?;
        let h: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|_| parse_err(hl, "header must be `d nv ne nf`"))?;
        if h.len() != 4 {
            return Err(parse_err(hl, "header must be `d nv ne nf`"));
        }
        if h[0] != 2 {
            return Err(parse_err(hl, "only d = 2 meshes are supported"));
        }
        let (nv, ne, nf) = (h[1], h[2], h[3]);
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (ln, l) = lines.next().ok_or_else(|| parse_err(hl, "missing vertex lines"))?;
            let xs: Vec<f64> = l
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| parse_err(ln, "bad vertex coordinate"))?;
            if xs.len() != 2 {
                return Err(parse_err(ln, "vertex line needs 2 coordinates"));
            }
            vertices.push([T::lit(xs[0]), T::lit(xs[1])]);
        }
        let mut parse_ints = |n: usize, what: &str| -> Result<Vec<(usize, Vec<usize>)>, MeshError> {
            let mut out = Vec::with_capacity(n);
            for _ in 0..n {
                let (ln, l) = lines.next().ok_or_else(|| parse_err(hl, &format!("missing {what} lines")))?;
                let v: Vec<usize> = l
                    .split_whitespace()
                    .map(|t| t.parse::<usize>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| parse_err(ln, &format!("bad {what} index")))?;
                out.push((ln, v));
            }
            Ok(out)
        };
        let el_lines = parse_ints(ne, "element")?;
        let mut elements = Vec::with_capacity(ne);
        for (ln, v) in &el_lines {
            if v.len() != 3 {
                return Err(parse_err(*ln, "element line needs 3 indices"));
            }
            elements.push([v[0], v[1], v[2]]);
        }
        let facet_lines = parse_ints(nf, "facet")?;
        let mesh = Self::new(vertices, elements)?;
        if facet_lines.len() != mesh.internal_facets.len() {
            return Err(MeshError::InvalidInput(format!(
                "file lists {} internal facets, topology has {}",
                facet_lines.len(),
                mesh.internal_facets.len()
            )));
        }
        let known: HashMap<(usize, usize), (usize, usize)> = mesh
            .internal_facets
            .iter()
            .map(|f| ((f.vertices[0], f.vertices[1]), (f.left, f.right)))
            .collect();
        for (ln, v) in &facet_lines {
            if v.len() != 4 {
                return Err(parse_err(*ln, "facet line needs 4 indices"));
            }
            let key = (v[0].min(v[1]), v[0].max(v[1]));
            let els = (v[2].min(v[3]), v[2].max(v[3]));
            if known.get(&key) != Some(&els) {
                return Err(parse_err(*ln, "facet does not match the element topology"));
            }
        }
        Ok(mesh)
    }
}

/// Structured right-triangle mesh of a rectangle. Each cell is split along the diagonal
/// pointing away from the rectangle centre ("union jack"), so the mesh is symmetric and
/// every corner cell is cut through the domain corner.
pub fn build_structured_mesh<T: Real>(nx: usize, ny: usize, domain: Rect<T>) -> Result<SimplicialMesh<T>, MeshError> {
    if nx == 0 || ny == 0 {
        return Err(MeshError::InvalidInput(format!("nx = {nx}, ny = {ny} must both be >= 1")));
    }
    if !(domain.x1 > domain.x0 && domain.y1 > domain.y0) {
        return Err(MeshError::InvalidInput("empty rectangle".into()));
    }
    let hx = (domain.x1 - domain.x0) / T::from_usize_lossy(nx);
    let hy = (domain.y1 - domain.y0) / T::from_usize_lossy(ny);
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            let x = if i == nx { domain.x1 } else { domain.x0 + hx * T::from_usize_lossy(i) };
            let y = if j == ny { domain.y1 } else { domain.y0 + hy * T::from_usize_lossy(j) };
            vertices.push([x, y]);
        }
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut elements = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            // sign of (xc - cx)(yc - cy) in doubled integer arithmetic
            let sx = 2 * i as i64 + 1 - nx as i64;
            let sy = 2 * j as i64 + 1 - ny as i64;
            let (v00, v10, v01, v11) = (id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1));
            if sx * sy >= 0 {
                // diagonal v00 - v11
                elements.push([v00, v10, v11]);
                elements.push([v00, v11, v01]);
            } else {
                // diagonal v10 - v01
                elements.push([v00, v10, v01]);
                elements.push([v10, v11, v01]);
            }
        }
    }
    SimplicialMesh::new(vertices, elements)
}

/// Affine map of element `k` with `B` columns `P_1 - P_0`, `P_2 - P_0`.
pub fn reference_map<T: Real>(mesh: &SimplicialMesh<T>, k: usize) -> Result<AffineMap<T>, MeshError> {
    if k >= mesh.n_elements() {
        return Err(MeshError::InvalidInput(format!("element index {k} out of range")));
    }
    let [p0, p1, p2] = mesh.element_vertices(k);
    let b = Mat::from_rows2([p1[0] - p0[0], p2[0] - p0[0]], [p1[1] - p0[1], p2[1] - p0[1]]);
    let det = b.get(0, 0) * b.get(1, 1) - b.get(0, 1) * b.get(1, 0);
    if det == T::zero() || !det.is_finite() {
        return Err(MeshError::SingularMap { element: k });
    }
    Ok(AffineMap { origin: p0, matrix: b, determinant: det })
}

#[derive(Clone, Debug)]
pub struct MeshAudit<T> {
    /// `max_k h_k / rho_k` with `rho_k` the inscribed-circle diameter.
    pub max_shape_ratio: T,
    /// `min_k h_k / h`.
    pub quasi_uniformity: T,
    pub non_obtuse: bool,
    /// Offending `(element, angle)` pairs, angles in radians.
    pub violations: Vec<(usize, T)>,
    pub max_angle: T,
    /// Elements whose three vertices all lie on the boundary (Taylor-Hood stability needs
    /// at least one interior vertex per element).
    pub all_boundary_elements: Vec<usize>,
}

/// Angles of element `k` at its three vertices.
pub fn element_angles<T: Real>(mesh: &SimplicialMesh<T>, k: usize) -> [T; 3] {
    let p = mesh.element_vertices(k);
    let mut out = [T::zero(); 3];
    for i in 0..3 {
        let a = p[i];
        let b = p[(i + 1) % 3];
        let c = p[(i + 2) % 3];
        let u = [b[0] - a[0], b[1] - a[1]];
        let v = [c[0] - a[0], c[1] - a[1]];
        let cross = u[0] * v[1] - u[1] * v[0];
        let dot = u[0] * v[0] + u[1] * v[1];
        out[i] = cross.abs().atan2(dot);
    }
    out
}

pub fn audit_mesh<T: Real>(mesh: &SimplicialMesh<T>) -> MeshAudit<T> {
    let h = mesh.mesh_size();
    let half_pi = T::lit(std::f64::consts::FRAC_PI_2);
    let tol = T::lit(1e-12);
    let mut audit = MeshAudit {
        max_shape_ratio: T::zero(),
        quasi_uniformity: T::one(),
        non_obtuse: true,
        violations: Vec::new(),
        max_angle: T::zero(),
        all_boundary_elements: Vec::new(),
    };
    for k in 0..mesh.n_elements() {
        let [a, b, c] = mesh.element_vertices(k);
        let perimeter = dist(a, b) + dist(b, c) + dist(c, a);
        let rho = T::lit(4.0) * mesh.area(k) / perimeter;
        let hk = mesh.diameter(k);
        audit.max_shape_ratio = audit.max_shape_ratio.max(hk / rho);
        audit.quasi_uniformity = audit.quasi_uniformity.min(hk / h);
        for angle in element_angles(mesh, k) {
            audit.max_angle = audit.max_angle.max(angle);
            if angle > half_pi + tol {
                audit.non_obtuse = false;
                audit.violations.push((k, angle));
            }
        }
        if mesh.elements[k].iter().all(|&v| mesh.boundary_vertex[v]) {
            audit.all_boundary_elements.push(k);
        }
    }
    audit
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3};

    #[test]
    fn minimal_structured_meshes() {
        let m = build_structured_mesh::<f64>(1, 1, Rect::unit()).unwrap();
        assert_eq!((m.n_elements(), m.internal_facets.len(), m.n_vertices()), (2, 1, 4));
        let m = build_structured_mesh::<f64>(2, 2, Rect::unit()).unwrap();
        assert_eq!((m.n_elements(), m.n_vertices()), (8, 9));
        assert!(build_structured_mesh::<f64>(0, 3, Rect::unit()).is_err());
    }

    #[test]
    fn structured_mesh_is_non_obtuse_right_angled() {
        for n in [4, 8] {
            let m = build_structured_mesh::<f64>(n, n, Rect::unit()).unwrap();
            let a = audit_mesh(&m);
            assert!(a.non_obtuse);
            assert_abs_diff_eq!(a.max_angle, FRAC_PI_2, epsilon = 1e-12);
            assert!(a.all_boundary_elements.is_empty());
            assert!(a.quasi_uniformity > 0.0 && a.quasi_uniformity <= 1.0);
        }
        let one = audit_mesh(&build_structured_mesh::<f64>(1, 1, Rect::unit()).unwrap());
        assert_eq!(one.all_boundary_elements.len(), 2);
        let odd = audit_mesh(&build_structured_mesh::<f64>(3, 5, Rect::unit()).unwrap());
        assert!(odd.all_boundary_elements.is_empty());
    }

    #[test]
    fn obtuse_and_equilateral_audit() {
        let m = SimplicialMesh::new(vec![[0.0, 0.0], [1.0, 0.0], [-0.5, 0.1]], vec![[0, 1, 2]]).unwrap();
        let a = audit_mesh(&m);
        assert!(!a.non_obtuse);
        assert_eq!(a.violations.len(), 1);
        // law of cosines at vertex 0
        let (u, v) = ((1.0f64, 0.0f64), (-0.5f64, 0.1f64));
        let cos = (u.0 * v.0 + u.1 * v.1) / (v.0.hypot(v.1));
        assert_abs_diff_eq!(a.violations[0].1, cos.acos(), epsilon = 1e-12);
        let s3 = 3f64.sqrt() / 2.0;
        let eq = SimplicialMesh::new(vec![[0.0, 0.0], [1.0, 0.0], [0.5, s3]], vec![[0, 1, 2]]).unwrap();
        let a = audit_mesh(&eq);
        assert!(a.non_obtuse);
        assert_abs_diff_eq!(a.max_angle, FRAC_PI_3, epsilon = 1e-12);
    }

    #[test]
    fn reference_map_examples() {
        let m = SimplicialMesh::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]]).unwrap();
        let map = reference_map(&m, 0).unwrap();
        assert_eq!(map.matrix, Mat::identity(2));
        let m = SimplicialMesh::<f64>::new(vec![[0.0, 0.0], [2.0, 0.0], [0.0, 3.0]], vec![[0, 1, 2]]).unwrap();
        let map = reference_map(&m, 0).unwrap();
        assert_eq!(map.matrix, Mat::from_rows2([2.0, 0.0], [0.0, 3.0]));
        assert_eq!(map.determinant, 6.0);
        assert_abs_diff_eq!(map.determinant.abs(), 2.0 * m.area(0), epsilon = 1e-12);
        assert!(reference_map(&m, 3).is_err());
    }

    #[test]
    fn gradient_transform_matches_finite_differences() {
        let m = SimplicialMesh::new(vec![[0.3, -0.2], [1.4, 0.1], [0.5, 1.7]], vec![[0, 1, 2]]).unwrap();
        let map = reference_map(&m, 0).unwrap();
        // eta(x) = 2 + 3x - 5y, reference version eta_hat = eta(map(x_hat))
        let eta = |x: [f64; 2]| 2.0 + 3.0 * x[0] - 5.0 * x[1];
        let eh = |xh: [f64; 2]| eta(map.apply(xh));
        let e = 1e-6;
        let xh = [0.2, 0.3];
        let ref_grad = [
            (eh([xh[0] + e, xh[1]]) - eh([xh[0] - e, xh[1]])) / (2.0 * e),
            (eh([xh[0], xh[1] + e]) - eh([xh[0], xh[1] - e])) / (2.0 * e),
        ];
        let g = map.physical_gradient(ref_grad);
        assert_abs_diff_eq!(g[0], 3.0, epsilon = 1e-8);
        assert_abs_diff_eq!(g[1], -5.0, epsilon = 1e-8);
        // vertices map exactly
        for (xh, x) in [([1.0, 0.0], [1.4, 0.1]), ([0.0, 1.0], [0.5, 1.7])] {
            let y = map.apply(xh);
            assert_abs_diff_eq!(y[0], x[0], epsilon = 1e-15);
            assert_abs_diff_eq!(y[1], x[1], epsilon = 1e-15);
        }
    }

    #[test]
    fn facet_normals_and_gradients() {
        let m = build_structured_mesh::<f64>(4, 3, Rect { x0: 0.0, x1: 2.0, y0: -1.0, y1: 1.0 }).unwrap();
        for f in &m.internal_facets {
            let a = m.vertices[f.vertices[0]];
            let b = m.vertices[f.vertices[1]];
            let t = [b[0] - a[0], b[1] - a[1]];
            assert!((t[0] * f.normal[0] + t[1] * f.normal[1]).abs() <= 1e-14);
            assert!((f.normal[0].hypot(f.normal[1]) - 1.0).abs() <= 1e-14);
            assert!(f.left < f.right);
            // normal points out of the left element
            let gl = m.geometry(f.left);
            let c = gl.centroid();
            assert!((a[0] - c[0]) * f.normal[0] + (a[1] - c[1]) * f.normal[1] > 0.0);
        }
        for k in 0..m.n_elements() {
            let g = m.geometry(k);
            let s = [0, 1].map(|c| g.grad_lambda.iter().map(|v| v[c]).sum::<f64>());
            assert!(s[0].abs() <= 1e-14 && s[1].abs() <= 1e-14);
            for i in 0..3 {
                for j in 0..3 {
                    if i != j {
                        let d = g.grad_lambda[i][0] * g.grad_lambda[j][0] + g.grad_lambda[i][1] * g.grad_lambda[j][1];
                        assert!(d <= 1e-14);
                    }
                }
            }
        }
    }

    #[test]
    fn text_round_trip_and_errors() {
        let m = build_structured_mesh::<f64>(3, 2, Rect::unit()).unwrap();
        let back = SimplicialMesh::<f64>::from_text(&m.to_text()).unwrap();
        assert_eq!(back.elements, m.elements);
        assert_eq!(back.vertices, m.vertices);
        assert!(matches!(SimplicialMesh::<f64>::from_text("3 1 1 0\n"), Err(MeshError::Parse { line: 1, .. })));
        let bad = "2 3 1 0\n0 0\n1 0\n2 0\n0 1 2\n";
        assert!(matches!(SimplicialMesh::<f64>::from_text(bad), Err(MeshError::SingularMap { element: 0 })));
    }
}
