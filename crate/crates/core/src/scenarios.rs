//! Reusable initial data and forcings.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::mesh::Point;
use crate::scalar::Real;
use crate::scheme::{InitialStress, Scheme, SchemeKind};
use crate::tensor::SymMat;

/// Random 2x2 SPD matrix with eigenvalues uniform in `[lo, hi]` and a uniform rotation.
pub fn random_spd<T: Real, R: Rng>(rng: &mut R, lo: f64, hi: f64) -> SymMat<T> {
    let a = rng.gen_range(lo..=hi);
    let b = rng.gen_range(lo..=hi);
    let th = rng.gen_range(0.0..std::f64::consts::PI);
    let (c, s) = (th.cos(), th.sin());
    SymMat::new2(T::lit(a * c * c + b * s * s), T::lit((a - b) * c * s), T::lit(a * s * s + b * c * c))
}

/// Random SPD initial stress: element values for dg0, vertex values for fem1.
pub fn random_spd_stress<T: Real>(scheme: &Scheme<T>, lo: f64, hi: f64, seed: u64) -> InitialStress<'static, T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match scheme.kind() {
        SchemeKind::Dg0 => InitialStress::ElementValues((0..scheme.mesh().n_elements()).map(|_| random_spd(&mut rng, lo, hi)).collect()),
        SchemeKind::Fem1 => InitialStress::VertexValues((0..scheme.mesh().n_vertices()).map(|_| random_spd(&mut rng, lo, hi)).collect()),
    }
}

/// Cavity driven by a body force concentrated under the top wall:
/// `f = (A 4 x (1 - x) y^2, 0)`.
pub fn cavity_force<T: Real>(amplitude: T) -> impl Fn(T, Point<T>) -> Point<T> + Sync + Send {
    move |_, x| {
        let four = T::lit(4.0);
        [amplitude * four * x[0] * (T::one() - x[0]) * x[1] * x[1], T::zero()]
    }
}

/// Divergence-free no-slip vortex from the stream function `A x^2 (1-x)^2 y^2 (1-y)^2`.
pub fn cavity_vortex<T: Real>(amplitude: T) -> impl Fn(Point<T>) -> Point<T> + Sync + Send {
    move |x| {
        let one = T::one();
        let two = T::lit(2.0);
        let (a, b) = (x[0] * x[0] * (one - x[0]) * (one - x[0]), x[1] * x[1] * (one - x[1]) * (one - x[1]));
        let da = two * x[0] * (one - x[0]) * (one - two * x[0]);
        let db = two * x[1] * (one - x[1]) * (one - two * x[1]);
        [amplitude * a * db, -amplitude * da * b]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_spd_eigenvalues_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let m: SymMat<f64> = random_spd(&mut rng, 0.5, 2.0);
            assert!(m.min_eigenvalue().unwrap() >= 0.5 - 1e-12);
            assert!(m.max_eigenvalue().unwrap() <= 2.0 + 1e-12);
        }
    }

    #[test]
    fn cavity_force_vanishes_on_bottom_and_sides() {
        let f = cavity_force(3.0f64);
        assert_eq!(f(0.0, [0.3, 0.0]), [0.0, 0.0]);
        assert_eq!(f(0.0, [0.0, 0.7]), [0.0, 0.0]);
        assert!((f(0.0, [0.5, 1.0])[0] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn cavity_vortex_is_divergence_free_and_no_slip() {
        let u = cavity_vortex(64.0f64);
        let h = 1e-5;
        for p in [[0.3, 0.6], [0.7, 0.2], [0.5, 0.5]] {
            let dux = (u([p[0] + h, p[1]])[0] - u([p[0] - h, p[1]])[0]) / (2.0 * h);
            let dvy = (u([p[0], p[1] + h])[1] - u([p[0], p[1] - h])[1]) / (2.0 * h);
            assert!((dux + dvy).abs() < 1e-8);
        }
        for t in [0.0, 0.25, 0.9] {
            for p in [[t, 0.0], [t, 1.0], [0.0, t], [1.0, t]] {
                assert_eq!(u(p), [0.0, 0.0]);
            }
        }
    }
}
