//! Symmetric-matrix calculus for the conformation tensor.
//!
//! Small `d x d` symmetric matrices (`d` is 2 or 3) with packed storage, their spectral
//! decomposition, spectral application of scalar functions, and the regularized
//! logarithm family `G`, its derivative, the clamped identity `beta = 1/G'` and the
//! companion function `H` that satisfies `H'(G'(s)) = beta(s)`.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("function undefined at eigenvalue {eigenvalue}")]
    Domain { eigenvalue: f64 },
    #[error("invalid regularization parameters: {0}")]
    Params(String),
}

const PACKED2: [[usize; 2]; 2] = [[0, 1], [1, 2]];
const PACKED3: [[usize; 3]; 3] = [[0, 1, 2], [1, 3, 4], [2, 4, 5]];

#[inline]
fn packed_index(dim: usize, i: usize, j: usize) -> usize {
    if dim == 2 {
        PACKED2[i][j]
    } else {
        PACKED3[i][j]
    }
}

/// Symmetric matrix with packed upper-triangle storage.
///
/// For `d = 2` the packed components are `(xx, xy, yy)`, for `d = 3`
/// `(xx, xy, xz, yy, yz, zz)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymMat<T> {
    dim: usize,
    v: [T; 6],
}

impl<T: Real> SymMat<T> {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim == 2 || dim == 3, "dimension must be 2 or 3");
        Self { dim, v: [T::zero(); 6] }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, T::one())
    }

    pub fn scaled_identity(dim: usize, c: T) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.set(i, i, c);
        }
        m
    }

    /// 2x2 matrix `[[xx, xy], [xy, yy]]`.
    pub fn new2(xx: T, xy: T, yy: T) -> Self {
        let mut v = [T::zero(); 6];
        v[0] = xx;
        v[1] = xy;
        v[2] = yy;
        Self { dim: 2, v }
    }

    pub fn diag(entries: &[T]) -> Self {
        let mut m = Self::zeros(entries.len());
        for (i, &e) in entries.iter().enumerate() {
            m.set(i, i, e);
        }
        m
    }

    /// Builds from packed components; `comps.len()` must be 3 or 6.
    pub fn from_packed(comps: &[T]) -> Self {
        let dim = match comps.len() {
            3 => 2,
            6 => 3,
            n => panic!("packed length {n} is neither 3 nor 6"),
        };
        let mut v = [T::zero(); 6];
        v[..comps.len()].copy_from_slice(comps);
        Self { dim, v }
    }

    /// Symmetric part `(a + a^T) / 2` of a general matrix.
    pub fn sym_part(a: &Mat<T>) -> Self {
        let half = T::lit(0.5);
        let mut m = Self::zeros(a.dim);
        for i in 0..a.dim {
            for j in i..a.dim {
                m.set(i, j, half * (a.get(i, j) + a.get(j, i)));
            }
        }
        m
    }

    /// Unit basis element for packed component `c`: `e_i e_i^T` on the diagonal,
    /// `e_i e_j^T + e_j e_i^T` off it.
    pub fn unit(dim: usize, c: usize) -> Self {
        let mut m = Self::zeros(dim);
        m.v[c] = T::one();
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn n_comps(dim: usize) -> usize {
        dim * (dim + 1) / 2
    }

    #[inline]
    pub fn packed(&self) -> &[T] {
        &self.v[..Self::n_comps(self.dim)]
    }

    #[inline]
    pub fn packed_mut(&mut self) -> &mut [T] {
        let n = Self::n_comps(self.dim);
        &mut self.v[..n]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.v[packed_index(self.dim, i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, x: T) {
        self.v[packed_index(self.dim, i, j)] = x;
    }

    pub fn trace(&self) -> T {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// Frobenius inner product `phi : psi`.
    pub fn ddot(&self, other: &Self) -> T {
        debug_assert_eq!(self.dim, other.dim);
        let mut s = T::zero();
        for i in 0..self.dim {
            s += self.get(i, i) * other.get(i, i);
            for j in (i + 1)..self.dim {
                s += T::lit(2.0) * self.get(i, j) * other.get(i, j);
            }
        }
        s
    }

    /// Frobenius inner product with a general matrix.
    pub fn ddot_mat(&self, other: &Mat<T>) -> T {
        let mut s = T::zero();
        for i in 0..self.dim {
            for j in 0..self.dim {
                s += self.get(i, j) * other.get(i, j);
            }
        }
        s
    }

    pub fn norm(&self) -> T {
        self.ddot(self).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.packed().iter().all(|x| x.is_finite())
    }

    pub fn to_mat(&self) -> Mat<T> {
        let mut m = Mat::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                m.set(i, j, self.get(i, j));
            }
        }
        m
    }

    pub fn matmul(&self, other: &Self) -> Mat<T> {
        self.to_mat().matmul(&other.to_mat())
    }

    pub fn scale(&self, c: T) -> Self {
        let mut m = *self;
        for x in m.packed_mut() {
            *x *= c;
        }
        m
    }

    pub fn max_abs_entry(&self) -> T {
        self.packed().iter().fold(T::zero(), |m, x| m.max(x.abs()))
    }

    /// Smallest eigenvalue.
    pub fn min_eigenvalue(&self) -> Result<T, TensorError> {
        Ok(spectral_decompose(self)?.eigenvalues()[0])
    }

    /// Largest eigenvalue.
    pub fn max_eigenvalue(&self) -> Result<T, TensorError> {
        let sp = spectral_decompose(self)?;
        Ok(sp.eigenvalues()[self.dim - 1])
    }

    pub fn cast<U: Real>(&self) -> SymMat<U> {
        let mut v = [U::zero(); 6];
        for (d, s) in v.iter_mut().zip(self.v.iter()) {
            *d = U::lit(s.as_f64());
        }
        SymMat { dim: self.dim, v }
    }
}

impl<T: Real> Add for SymMat<T> {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        self += rhs;
        self
    }
}

impl<T: Real> AddAssign for SymMat<T> {
    fn add_assign(&mut self, rhs: Self) {
        debug_assert_eq!(self.dim, rhs.dim);
        for (a, b) in self.v.iter_mut().zip(rhs.v.iter()) {
            *a += *b;
        }
    }
}

impl<T: Real> Sub for SymMat<T> {
    type Output = Self;
    fn sub(mut self, rhs: Self) -> Self {
        self -= rhs;
        self
    }
}

impl<T: Real> SubAssign for SymMat<T> {
    fn sub_assign(&mut self, rhs: Self) {
        debug_assert_eq!(self.dim, rhs.dim);
        for (a, b) in self.v.iter_mut().zip(rhs.v.iter()) {
            *a -= *b;
        }
    }
}

impl<T: Real> Mul<T> for SymMat<T> {
    type Output = Self;
    fn mul(self, c: T) -> Self {
        self.scale(c)
    }
}

impl<T: Real> Neg for SymMat<T> {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale(-T::one())
    }
}

/// Dense general `d x d` matrix (`d <= 3`), row-major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat<T> {
    dim: usize,
    a: [[T; 3]; 3],
}

impl<T: Real> Mat<T> {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, a: [[T::zero(); 3]; 3] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.a[i][i] = T::one();
        }
        m
    }

    pub fn from_rows2(r0: [T; 2], r1: [T; 2]) -> Self {
        let mut m = Self::zeros(2);
        m.a[0][..2].copy_from_slice(&r0);
        m.a[1][..2].copy_from_slice(&r1);
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.a[i][j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, x: T) {
        self.a[i][j] = x;
    }

    pub fn transpose(&self) -> Self {
        let mut m = Self::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                m.a[i][j] = self.a[j][i];
            }
        }
        m
    }

    pub fn matmul(&self, other: &Self) -> Self {
        let mut m = Self::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                let mut s = T::zero();
                for k in 0..self.dim {
                    s += self.a[i][k] * other.a[k][j];
                }
                m.a[i][j] = s;
            }
        }
        m
    }

    pub fn ddot(&self, other: &Self) -> T {
        let mut s = T::zero();
        for i in 0..self.dim {
            for j in 0..self.dim {
                s += self.a[i][j] * other.a[i][j];
            }
        }
        s
    }

    pub fn trace(&self) -> T {
        (0..self.dim).map(|i| self.a[i][i]).sum()
    }

    pub fn norm(&self) -> T {
        self.ddot(self).sqrt()
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut m = *self;
        for i in 0..self.dim {
            for j in 0..self.dim {
                m.a[i][j] -= other.a[i][j];
            }
        }
        m
    }

    /// `self + c * other`.
    pub fn add_scaled(&self, other: &Self, c: T) -> Self {
        let mut m = *self;
        for i in 0..self.dim {
            for j in 0..self.dim {
                m.a[i][j] += c * other.a[i][j];
            }
        }
        m
    }
}

/// Orthogonal diagonalization `phi = O^T diag(lambda) O`.
///
/// Rows of `rotation` are unit eigenvectors; eigenvalues ascend.
#[derive(Clone, Copy, Debug)]
pub struct SpectralPair<T> {
    pub rotation: Mat<T>,
    eigenvalues: [T; 3],
}

impl<T: Real> SpectralPair<T> {
    pub fn dim(&self) -> usize {
        self.rotation.dim()
    }

    pub fn eigenvalues(&self) -> &[T] {
        &self.eigenvalues[..self.dim()]
    }

    /// Unit eigenvector belonging to eigenvalue `i`.
    pub fn eigenvector(&self, i: usize) -> [T; 3] {
        self.rotation.a[i]
    }

    /// `O^T diag(values) O`.
    pub fn reconstruct_with(&self, values: &[T]) -> SymMat<T> {
        let d = self.dim();
        let mut m = SymMat::zeros(d);
        for i in 0..d {
            for j in i..d {
                let mut s = T::zero();
                for (k, &val) in values.iter().enumerate().take(d) {
                    s += val * self.rotation.a[k][i] * self.rotation.a[k][j];
                }
                m.set(i, j, s);
            }
        }
        m
    }

    pub fn reconstruct(&self) -> SymMat<T> {
        let vals = self.eigenvalues;
        self.reconstruct_with(&vals[..self.dim()])
    }
}

/// Spectral decomposition with ascending eigenvalues.
///
/// 2x2 uses the closed form built from the half-difference radius and the rotation
/// angle (no cancellation when the eigenvalues nearly coincide); 3x3 uses cyclic Jacobi.
pub fn spectral_decompose<T: Real>(phi: &SymMat<T>) -> Result<SpectralPair<T>, TensorError> {
    if !phi.is_finite() {
        return Err(TensorError::InvalidInput("non-finite matrix entry".into()));
    }
    match phi.dim() {
        2 => Ok(decompose2(phi)),
        _ => Ok(decompose3(phi)),
    }
}

fn decompose2<T: Real>(phi: &SymMat<T>) -> SpectralPair<T> {
    let half = T::lit(0.5);
    let (a, b, c) = (phi.get(0, 0), phi.get(0, 1), phi.get(1, 1));
    let mean = half * (a + c);
    let hd = half * (a - c);
    let r = hd.hypot(b);
    let theta = half * b.atan2(hd);
    let (s, co) = theta.sin_cos();
    let mut rot = Mat::zeros(2);
    // row 0: eigenvector of the smaller eigenvalue, row 1: of the larger one
    rot.a[0][0] = -s;
    rot.a[0][1] = co;
    rot.a[1][0] = co;
    rot.a[1][1] = s;
    let mut ev = [T::zero(); 3];
    ev[0] = mean - r;
    ev[1] = mean + r;
    SpectralPair { rotation: rot, eigenvalues: ev }
}

fn decompose3<T: Real>(phi: &SymMat<T>) -> SpectralPair<T> {
    let mut a = phi.to_mat().a;
    let mut v = [[T::zero(); 3]; 3];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = T::one();
    }
    let scale = phi.norm().max(T::one());
    let tol = T::lit(1e-14).max(T::epsilon()) * scale;
    let off = |a: &[[T; 3]; 3]| {
        (T::lit(2.0) * (a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2])).sqrt()
    };
    for _sweep in 0..64 {
        if off(&a) <= tol {
            break;
        }
        for p in 0..2 {
            for q in (p + 1)..3 {
                let apq = a[p][q];
                if apq == T::zero() {
                    continue;
                }
                let tau = (a[q][q] - a[p][p]) / (T::lit(2.0) * apq);
                let t = tau.signum() / (tau.abs() + (T::one() + tau * tau).sqrt());
                let t = if tau == T::zero() { T::one() } else { t };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = t * c;
                for k in 0..3 {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..3 {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vp = row[p];
                    let vq = row[q];
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    // columns of v are eigenvectors; sort ascending, stable on ties
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| a[i][i].partial_cmp(&a[j][j]).unwrap_or(std::cmp::Ordering::Equal));
    let mut rot = Mat::zeros(3);
    let mut ev = [T::zero(); 3];
    for (r, &col) in order.iter().enumerate() {
        ev[r] = a[col][col];
        for k in 0..3 {
            rot.a[r][k] = v[k][col];
        }
    }
    // re-orthonormalize rows (modified Gram-Schmidt)
    for r in 0..3 {
        for prev in 0..r {
            let dot: T = (0..3).map(|k| rot.a[r][k] * rot.a[prev][k]).sum();
            for k in 0..3 {
                let x = rot.a[prev][k];
                rot.a[r][k] -= dot * x;
            }
        }
        let n = (0..3).map(|k| rot.a[r][k] * rot.a[r][k]).sum::<T>().sqrt();
        for k in 0..3 {
            rot.a[r][k] /= n;
        }
    }
    SpectralPair { rotation: rot, eigenvalues: ev }
}

/// Spectral application `g(phi) = O^T g(D) O`.
///
/// `g` is treated as undefined wherever it returns a non-finite value, which turns
/// `ln` at a non-positive eigenvalue into a domain error naming that eigenvalue.
pub fn matrix_fn<T: Real, F: Fn(T) -> T>(phi: &SymMat<T>, g: F) -> Result<SymMat<T>, TensorError> {
    let sp = spectral_decompose(phi)?;
    apply_spectral(&sp, g)
}

/// [`matrix_fn`] reusing an existing decomposition.
pub fn apply_spectral<T: Real, F: Fn(T) -> T>(
    sp: &SpectralPair<T>,
    g: F,
) -> Result<SymMat<T>, TensorError> {
    let d = sp.dim();
    let mut vals = [T::zero(); 3];
    for (i, &lam) in sp.eigenvalues().iter().enumerate() {
        let gv = g(lam);
        if !gv.is_finite() {
            return Err(TensorError::Domain { eigenvalue: lam.as_f64() });
        }
        vals[i] = gv;
    }
    Ok(sp.reconstruct_with(&vals[..d]))
}

/// Regularization knobs: `delta in (0, 1/2]` and an optional cut-off `L >= 2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegParams<T> {
    pub delta: T,
    pub cutoff: Option<T>,
}

impl<T: Real> RegParams<T> {
    pub fn new(delta: T, cutoff: Option<T>) -> Result<Self, TensorError> {
        if !(delta > T::zero() && delta <= T::lit(0.5)) {
            return Err(TensorError::Params(format!("delta = {delta} must lie in (0, 1/2]")));
        }
        if let Some(l) = cutoff {
            if !(l >= T::lit(2.0)) || !l.is_finite() {
                return Err(TensorError::Params(format!("cut-off L = {l} must be finite and >= 2")));
            }
        }
        Ok(Self { delta, cutoff })
    }
}

/// The logarithm with optional linear continuations: `s/a + ln a - 1` below `a = lower`
/// and `s/b + ln b - 1` above `b = upper`. Both `G` and `H` are members of this family.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogBranch<T> {
    pub lower: Option<T>,
    pub upper: Option<T>,
}

impl<T: Real> LogBranch<T> {
    /// Clamped identity `min(max(s, lower), upper)`; equals `1 / value'(s)`.
    /// Without a lower knot it is only defined for `s > 0` (NaN otherwise).
    #[inline]
    pub fn clamp(&self, s: T) -> T {
        let mut x = s;
        match self.lower {
            Some(a) => x = x.max(a),
            None => {
                if !(x > T::zero()) {
                    return T::nan();
                }
            }
        }
        if let Some(b) = self.upper {
            x = x.min(b);
        }
        x
    }

    #[inline]
    pub fn value(&self, s: T) -> T {
        if let Some(a) = self.lower {
            if s <= a {
                return s / a + a.ln() - T::one();
            }
        }
        if let Some(b) = self.upper {
            if s >= b {
                return s / b + b.ln() - T::one();
            }
        }
        // ln of a non-positive argument is -inf/NaN: the domain error signal
        s.ln()
    }

    #[inline]
    pub fn derivative(&self, s: T) -> T {
        T::one() / self.clamp(s)
    }
}

/// Which member of the logarithm family a scheme uses.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Regime<T> {
    /// `G_delta^(L)`, `beta_delta^(L)`, `H_delta^(L)`: total on the real line.
    Regularized(RegParams<T>),
    /// `G^(L)`, `beta^(L)`, `H^(L)`: defined on positive definite matrices only.
    Unregularized { cutoff: Option<T> },
}

impl<T: Real> Regime<T> {
    pub fn g(&self) -> LogBranch<T> {
        match *self {
            Regime::Regularized(p) => LogBranch { lower: Some(p.delta), upper: p.cutoff },
            Regime::Unregularized { cutoff } => LogBranch { lower: None, upper: cutoff },
        }
    }

    /// `H^(L)_delta = G^{1/delta}_{1/L}`; the unregularized member is `G_{1/L}` (plain
    /// `ln` without cut-off), the `delta -> 0` limit of the same construction.
    pub fn h(&self) -> LogBranch<T> {
        match *self {
            Regime::Regularized(p) => LogBranch {
                lower: p.cutoff.map(|l| l.recip()),
                upper: Some(p.delta.recip()),
            },
            Regime::Unregularized { cutoff } => LogBranch { lower: cutoff.map(|l| l.recip()), upper: None },
        }
    }

    pub fn delta(&self) -> Option<T> {
        match *self {
            Regime::Regularized(p) => Some(p.delta),
            Regime::Unregularized { .. } => None,
        }
    }

    pub fn cutoff(&self) -> Option<T> {
        match *self {
            Regime::Regularized(p) => p.cutoff,
            Regime::Unregularized { cutoff } => cutoff,
        }
    }

    pub fn is_regularized(&self) -> bool {
        matches!(self, Regime::Regularized(_))
    }

    pub fn beta(&self, phi: &SymMat<T>) -> Result<SymMat<T>, TensorError> {
        let g = self.g();
        matrix_fn(phi, |s| g.clamp(s))
    }

    pub fn g_prime(&self, phi: &SymMat<T>) -> Result<SymMat<T>, TensorError> {
        let g = self.g();
        matrix_fn(phi, |s| g.derivative(s))
    }

    /// `tr(phi - G(phi) - I)`.
    pub fn entropy_trace(&self, phi: &SymMat<T>) -> Result<T, TensorError> {
        let sp = spectral_decompose(phi)?;
        let g = self.g();
        let mut s = T::zero();
        for &lam in sp.eigenvalues() {
            let gv = g.value(lam);
            if !gv.is_finite() {
                return Err(TensorError::Domain { eigenvalue: lam.as_f64() });
            }
            s += lam - gv - T::one();
        }
        Ok(s)
    }

    /// `tr(beta + beta^{-1} - 2I)`.
    pub fn stress_dissipation_trace(&self, phi: &SymMat<T>) -> Result<T, TensorError> {
        let sp = spectral_decompose(phi)?;
        let g = self.g();
        let mut s = T::zero();
        for &lam in sp.eigenvalues() {
            let b = g.clamp(lam);
            if !b.is_finite() {
                return Err(TensorError::Domain { eigenvalue: lam.as_f64() });
            }
            s += b + b.recip() - T::lit(2.0);
        }
        Ok(s)
    }

    /// `tr H(G'(phi))`.
    pub fn trace_h_of_g_prime(&self, phi: &SymMat<T>) -> Result<T, TensorError> {
        let sp = spectral_decompose(phi)?;
        let (g, h) = (self.g(), self.h());
        let mut s = T::zero();
        for &lam in sp.eigenvalues() {
            let v = h.value(g.derivative(lam));
            if !v.is_finite() {
                return Err(TensorError::Domain { eigenvalue: lam.as_f64() });
            }
            s += v;
        }
        Ok(s)
    }
}

/// Scalar `G_delta` or `G_delta^L`.
pub fn g_reg<T: Real>(s: T, p: &RegParams<T>) -> T {
    Regime::Regularized(*p).g().value(s)
}

/// `(G_delta^(L))'(s) = 1 / beta_delta^(L)(s)`.
pub fn g_reg_prime<T: Real>(s: T, p: &RegParams<T>) -> T {
    Regime::Regularized(*p).g().derivative(s)
}

/// Scalar `beta_delta` or `beta_delta^L`.
pub fn beta_reg<T: Real>(s: T, p: &RegParams<T>) -> T {
    Regime::Regularized(*p).g().clamp(s)
}

/// Scalar `H_delta` or `H_delta^L`. Without a cut-off `H_delta` is only defined for
/// `y > 0`; it is evaluated on the range of `G'`, which is positive.
pub fn h_reg<T: Real>(y: T, p: &RegParams<T>) -> T {
    Regime::Regularized(*p).h().value(y)
}

pub fn h_reg_prime<T: Real>(y: T, p: &RegParams<T>) -> T {
    Regime::Regularized(*p).h().derivative(y)
}

/// `tr(phi - G_delta^(L)(phi) - I) >= 0`.
pub fn entropy_trace<T: Real>(phi: &SymMat<T>, p: &RegParams<T>) -> T {
    Regime::Regularized(*p)
        .entropy_trace(phi)
        .expect("regularized entropy is total on finite symmetric matrices")
}

/// `|phi|` trace, i.e. the sum of absolute eigenvalues.
pub fn trace_abs<T: Real>(phi: &SymMat<T>) -> Result<T, TensorError> {
    Ok(spectral_decompose(phi)?.eigenvalues().iter().map(|x| x.abs()).sum())
}

/// Negative part `[phi]_-` taken spectrally.
pub fn negative_part<T: Real>(phi: &SymMat<T>) -> Result<SymMat<T>, TensorError> {
    matrix_fn(phi, |s| s.min(T::zero()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn rot30() -> Mat<f64> {
        let t = std::f64::consts::PI / 6.0;
        Mat::from_rows2([t.cos(), -t.sin()], [t.sin(), t.cos()])
    }

    /// R diag R^T built by hand, independent of the decomposition.
    fn rotated(d0: f64, d1: f64) -> SymMat<f64> {
        let r = rot30();
        let mut m = SymMat::zeros(2);
        for i in 0..2 {
            for j in i..2 {
                m.set(i, j, r.get(i, 0) * d0 * r.get(j, 0) + r.get(i, 1) * d1 * r.get(j, 1));
            }
        }
        m
    }

    #[test]
    fn identity_decomposes_to_unit_eigenvalues() {
        let sp = spectral_decompose(&SymMat::<f64>::identity(2)).unwrap();
        assert_eq!(sp.eigenvalues(), &[1.0, 1.0]);
        let o = sp.rotation;
        let oto = o.transpose().matmul(&o);
        assert!(oto.sub(&Mat::identity(2)).norm() <= 1e-13);
    }

    #[test]
    fn diagonal_input_gives_permutation() {
        let sp = spectral_decompose(&SymMat::<f64>::new2(3.0, 0.0, -1.0)).unwrap();
        assert_eq!(sp.eigenvalues(), &[-1.0, 3.0]);
        assert_abs_diff_eq!(sp.eigenvector(0)[1].abs(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(sp.eigenvector(1)[0].abs(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn rotated_eigenvalues_recovered() {
        let phi = rotated(0.2, 2.0);
        let sp = spectral_decompose(&phi).unwrap();
        assert_abs_diff_eq!(sp.eigenvalues()[0], 0.2, epsilon = 1e-14);
        assert_abs_diff_eq!(sp.eigenvalues()[1], 2.0, epsilon = 1e-14);
        assert!((sp.reconstruct() - phi).norm() <= 1e-12 * (1.0 + phi.norm()));
    }

    #[test]
    fn three_by_three_jacobi() {
        let mut phi = SymMat::<f64>::zeros(3);
        let e = [[2.0, 0.3, -0.7], [0.3, -1.0, 0.25], [-0.7, 0.25, 0.5]];
        for i in 0..3 {
            for j in i..3 {
                phi.set(i, j, e[i][j]);
            }
        }
        let sp = spectral_decompose(&phi).unwrap();
        let ev = sp.eigenvalues();
        assert!(ev[0] <= ev[1] && ev[1] <= ev[2]);
        assert!((sp.reconstruct() - phi).norm() <= 1e-12 * (1.0 + phi.norm()));
        let o = sp.rotation;
        assert!(o.transpose().matmul(&o).sub(&Mat::identity(3)).norm() <= 1e-13);
        assert_abs_diff_eq!(ev.iter().sum::<f64>(), phi.trace(), epsilon = 1e-13);
    }

    #[test]
    fn non_finite_rejected() {
        let phi = SymMat::new2(f64::NAN, 0.0, 1.0);
        assert!(matches!(spectral_decompose(&phi), Err(TensorError::InvalidInput(_))));
    }

    #[test]
    fn matrix_fn_examples() {
        let p = RegParams::new(0.5, None).unwrap();
        let z = matrix_fn(&SymMat::identity(2), |s| g_reg(s, &p)).unwrap();
        assert_eq!(z, SymMat::zeros(2));
        let r = matrix_fn(&SymMat::new2(4.0, 0.0, 9.0), f64::sqrt).unwrap();
        assert_abs_diff_eq!(r.get(0, 0), 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.get(1, 1), 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.get(0, 1), 0.0, epsilon = 1e-15);
        let b = matrix_fn(&rotated(0.2, 2.0), |s| beta_reg(s, &p)).unwrap();
        assert!((b - rotated(0.5, 2.0)).norm() <= 1e-14);
    }

    #[test]
    fn unregularized_log_domain_error() {
        let err = matrix_fn(&SymMat::new2(-0.5, 0.0, 2.0), f64::ln).unwrap_err();
        assert_eq!(err, TensorError::Domain { eigenvalue: -0.5 });
        let reg = Regime::<f64>::Unregularized { cutoff: None };
        assert!(reg.beta(&SymMat::new2(0.0, 0.0, 1.0)).is_err());
    }

    #[test]
    fn scaled_identity_exact() {
        let p = RegParams::new(0.1, Some(10.0)).unwrap();
        for c in [-3.0, 0.05, 0.1, 1.0, 7.3, 12.0] {
            for d in [2, 3] {
                let r = matrix_fn(&SymMat::scaled_identity(d, c), |s| g_reg(s, &p)).unwrap();
                assert_eq!(r, SymMat::scaled_identity(d, g_reg(c, &p)));
            }
        }
    }

    #[test]
    fn scalar_g_examples() {
        let p = RegParams::new(0.5, None).unwrap();
        assert_eq!(g_reg(1.0, &p), 0.0);
        // 0.25/0.5 + ln 0.5 - 1
        assert_abs_diff_eq!(g_reg(0.25, &p), -1.193_147_180_559_945_3, epsilon = 1e-15);
        let lin = 0.5 / 0.5 + 0.5f64.ln() - 1.0;
        assert_abs_diff_eq!(g_reg(0.5, &p), 0.5f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(lin, 0.5f64.ln(), epsilon = 1e-15);
        // C1 at both knots
        let pl = RegParams::new(0.5, Some(2.0)).unwrap();
        for knot in [0.5, 2.0] {
            let e = 1e-7;
            assert_abs_diff_eq!(g_reg(knot - e, &pl), g_reg(knot + e, &pl), epsilon = 1e-6);
            assert_abs_diff_eq!(g_reg_prime(knot - e, &pl), g_reg_prime(knot + e, &pl), epsilon = 1e-6);
        }
        assert_abs_diff_eq!(g_reg(4.0, &pl), 4.0 / 2.0 + 2f64.ln() - 1.0, epsilon = 1e-15);
    }

    #[test]
    fn scalar_beta_examples() {
        let p = RegParams::new(0.5, None).unwrap();
        let pl = RegParams::new(0.5, Some(2.0)).unwrap();
        assert_eq!(beta_reg(-1.0, &p), 0.5);
        assert_eq!(beta_reg(3.0, &pl), 2.0);
        assert_eq!(beta_reg(1.3, &pl), 1.3);
        for s in [-2.0, 0.1, 0.5, 1.0, 1.9, 2.0, 5.0] {
            assert_abs_diff_eq!(beta_reg(s, &pl), 1.0 / g_reg_prime(s, &pl), epsilon = 1e-15);
        }
    }

    #[test]
    fn scalar_h_examples() {
        let p = RegParams::new(0.5, None).unwrap();
        assert_abs_diff_eq!(h_reg_prime(g_reg_prime(0.25, &p), &p), 0.5, epsilon = 1e-15);
        assert_eq!(h_reg(1.0, &p), 0.0);
        assert_abs_diff_eq!(h_reg(4.0, &p), 1.693_147_180_559_945_3, epsilon = 1e-15);
        let pl = RegParams::new(0.1, Some(10.0)).unwrap();
        for s in [-4.0, 0.01, 0.1, 0.7, 3.0, 10.0, 40.0] {
            assert_abs_diff_eq!(h_reg_prime(g_reg_prime(s, &pl), &pl), beta_reg(s, &pl), epsilon = 1e-13);
            assert_abs_diff_eq!(h_reg_prime(g_reg_prime(s, &p), &p), beta_reg(s, &p), epsilon = 1e-13);
        }
    }

    #[test]
    fn entropy_trace_examples() {
        let p = RegParams::new(0.5, None).unwrap();
        assert_eq!(entropy_trace(&SymMat::<f64>::identity(2), &p), 0.0);
        assert_abs_diff_eq!(entropy_trace(&SymMat::new2(2.0, 0.0, 2.0), &p), 0.613_705_638_880_109_4, epsilon = 1e-14);
        assert_abs_diff_eq!(entropy_trace(&SymMat::new2(-1.0, 0.0, 3.0), &p), 2.594_534_891_891_836_4, epsilon = 1e-7);
    }

    #[test]
    fn params_validation() {
        assert!(RegParams::new(0.9, None).is_err());
        assert!(RegParams::new(0.0, None).is_err());
        assert!(RegParams::new(0.5, Some(1.5)).is_err());
        assert!(RegParams::new(0.5f32, Some(2.0)).is_ok());
    }

    #[test]
    fn works_in_single_precision() {
        let phi = SymMat::<f32>::new2(2.0, 0.5, 1.0);
        let sp = spectral_decompose(&phi).unwrap();
        assert!((sp.reconstruct() - phi).norm() < 1e-5);
    }
}
