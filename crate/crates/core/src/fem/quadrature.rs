//! Symmetric triangle rules in barycentric coordinates, plus the two-point Gauss rule
//! used on facets and in time.

#![allow(clippy::excessive_precision)]

use crate::mesh::ElementGeom;
use crate::scalar::Real;

use super::FemError;

/// Weights sum to one; multiply by the element area to integrate.
#[derive(Clone, Debug)]
pub struct QuadRule<T> {
    pub points: Vec<[T; 3]>,
    pub weights: Vec<T>,
}

impl<T: Real> QuadRule<T> {
    fn push_orbit3(&mut self, a: f64, w: f64) {
        let b = 1.0 - 2.0 * a;
        for p in [[b, a, a], [a, b, a], [a, a, b]] {
            self.points.push(p.map(T::lit));
            self.weights.push(T::lit(w));
        }
    }

    fn push_orbit6(&mut self, a: f64, b: f64, w: f64) {
        let c = 1.0 - a - b;
        for p in [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]] {
            self.points.push(p.map(T::lit));
            self.weights.push(T::lit(w));
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Rule exact for polynomials of total degree `degree <= 6`.
pub fn triangle_rule<T: Real>(degree: usize) -> Result<QuadRule<T>, FemError> {
    let mut r = QuadRule { points: Vec::new(), weights: Vec::new() };
    let third = T::lit(1.0 / 3.0);
    match degree {
        0 | 1 => {
            r.points.push([third; 3]);
            r.weights.push(T::one());
        }
        2 => r.push_orbit3(1.0 / 6.0, 1.0 / 3.0),
        3 | 4 => {
            r.push_orbit3(0.445_948_490_915_964_886_32, 0.223_381_589_678_011_465_70);
            r.push_orbit3(0.091_576_213_509_770_743_46, 0.109_951_743_655_321_867_64);
        }
        5 => {
            r.points.push([third; 3]);
            r.weights.push(T::lit(0.225));
            r.push_orbit3(0.470_142_064_105_115_089_77, 0.132_394_152_788_506_180_74);
            r.push_orbit3(0.101_286_507_323_456_338_80, 0.125_939_180_544_827_152_60);
        }
        6 => {
            r.push_orbit3(0.249_286_745_170_910_421_29, 0.116_786_275_726_379_366_03);
            r.push_orbit3(0.063_089_014_491_502_228_34, 0.050_844_906_370_206_816_92);
            r.push_orbit6(
                0.053_145_049_844_816_947_35,
                0.310_352_451_033_784_405_42,
                0.082_851_075_618_373_575_19,
            );
        }
        _ => return Err(FemError::UnsupportedDegree(degree)),
    }
    Ok(r)
}

/// Vertex (lumping) rule: the three vertices with weight 1/3 each.
pub fn vertex_rule<T: Real>() -> QuadRule<T> {
    let w = T::lit(1.0 / 3.0);
    let (o, z) = (T::one(), T::zero());
    QuadRule { points: vec![[o, z, z], [z, o, z], [z, z, o]], weights: vec![w, w, w] }
}

/// Two-point Gauss rule on `[0, 1]` as `(nodes, weights)`; exact to degree 3.
pub fn gauss2<T: Real>() -> ([T; 2], [T; 2]) {
    let h = T::lit(0.5 / 3f64.sqrt());
    let half = T::lit(0.5);
    ([half - h, half + h], [half, half])
}

/// `int_K f` with the symmetric rule of the requested degree.
pub fn quadrature_integral<T: Real, F: Fn([T; 2]) -> T>(f: F, geom: &ElementGeom<T>, degree: usize) -> Result<T, FemError> {
    let rule = triangle_rule::<T>(degree)?;
    let mut s = T::zero();
    for (lam, w) in rule.points.iter().zip(&rule.weights) {
        s += *w * f(geom.point(lam));
    }
    Ok(s * geom.area)
}
