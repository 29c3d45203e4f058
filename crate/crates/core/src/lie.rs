//! Homographies as elements of SL(3) and their logarithms in sl(3).
//!
//! A [`Homography`] is a 3×3 matrix normalized to determinant one. Its
//! principal logarithm is a trace-free 3×3 matrix, stored as a
//! [`LogHomography`] 9-vector in row-major order:
//!
//! ```text
//! [ v0 v1 v2 ]     v0, v1, v3, v4  affine block
//! [ v3 v4 v5 ]     v2, v5          translation
//! [ v6 v7 v8 ]     v6, v7          keystone (perspective)
//! ```
//!
//! Every module shares this flattening order.
//!
//! Geometry is expressed in normalized frame coordinates: origin at the frame
//! center, `x` in `[-1, 1]` and `y` in `[-h/w, h/w]`, with `y` pointing down.
//! Corner sets are ordered top-left, top-right, bottom-right, bottom-left,
//! which gives a positive shoelace sum in these coordinates.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vector8 = SVector<f64, 8>;
pub type Vector9 = SVector<f64, 9>;

/// Smallest determinant accepted by [`normalize_det1`].
pub const MIN_DETERMINANT: f64 = 1e-12;
/// Tolerance on the trace of a [`LogHomography`].
pub const TRACE_TOLERANCE: f64 = 1e-10;
/// Eigenvalues closer than this to the closed negative real axis are rejected by [`log_h`].
pub const BRANCH_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LieError {
    #[error("determinant {0:e} is not positive")]
    NonPositiveDeterminant(f64),
    #[error("matrix has an eigenvalue on the negative real axis; principal logarithm undefined")]
    LogDomain,
    #[error("point maps to infinity (homogeneous w = {0:e})")]
    PointAtInfinity(f64),
    #[error("corner set has non-positive oriented area {0:e}")]
    NegativeArea(f64),
    #[error("edge {0} of the corner set is degenerate")]
    DegenerateEdge(usize),
    #[error("log-homography trace {0:e} is not zero")]
    TraceNotZero(f64),
}

/// A projective transform normalized to determinant one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography(Matrix3<f64>);

impl Homography {
    pub fn identity() -> Self {
        Homography(Matrix3::identity())
    }

    /// Normalizes `m` to determinant one. See [`normalize_det1`].
    pub fn new(m: Matrix3<f64>) -> Result<Self, LieError> {
        normalize_det1(m)
    }

    /// Pure translation by `(tx, ty)`.
    pub fn translation(tx: f64, ty: f64) -> Self {
        Homography(Matrix3::new(1.0, 0.0, tx, 0.0, 1.0, ty, 0.0, 0.0, 1.0))
    }

    pub fn from_row_major(v: &[f64; 9]) -> Result<Self, LieError> {
        normalize_det1(Matrix3::from_row_slice(v))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        row_major(&self.0)
    }

    /// Exact inverse. The inverse of a det-1 matrix has det 1.
    pub fn inverse(&self) -> Homography {
        let inv = self
            .0
            .try_inverse()
            .expect("determinant-one matrix is invertible");
        Homography(inv)
    }

    pub fn compose(&self, other: &Homography) -> Homography {
        Homography(self.0 * other.0)
    }

    pub fn apply(&self, p: Point2) -> Result<Point2, LieError> {
        apply(self, p)
    }

    pub fn log(&self) -> Result<LogHomography, LieError> {
        log_h(self)
    }
}

impl Mul for Homography {
    type Output = Homography;

    fn mul(self, rhs: Homography) -> Homography {
        self.compose(&rhs)
    }
}

/// Trace-free 3×3 matrix flattened row-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 9]", into = "[f64; 9]")]
pub struct LogHomography(Vector9);

impl LogHomography {
    pub const AFFINE: [usize; 4] = [0, 1, 3, 4];
    pub const TRANSLATION: [usize; 2] = [2, 5];
    pub const KEYSTONE: [usize; 2] = [6, 7];

    pub fn zero() -> Self {
        LogHomography(Vector9::zeros())
    }

    /// Validates that the trace is zero within [`TRACE_TOLERANCE`].
    pub fn new(v: Vector9) -> Result<Self, LieError> {
        let tr = v[0] + v[4] + v[8];
        if tr.abs() > TRACE_TOLERANCE || !tr.is_finite() {
            return Err(LieError::TraceNotZero(tr));
        }
        Ok(LogHomography(v))
    }

    /// Projects onto the trace-free subspace by overwriting `v[8] = -(v[0] + v[4])`.
    pub fn projected(mut v: Vector9) -> Self {
        v[8] = -(v[0] + v[4]);
        LogHomography(v)
    }

    pub fn from_slice(v: &[f64]) -> Result<Self, LieError> {
        Self::new(Vector9::from_column_slice(v))
    }

    /// Log of the pure translation by `(tx, ty)`. Exact: the generator is nilpotent.
    pub fn translation(tx: f64, ty: f64) -> Self {
        let mut v = Vector9::zeros();
        v[2] = tx;
        v[5] = ty;
        LogHomography(v)
    }

    pub fn vector(&self) -> &Vector9 {
        &self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn to_array(&self) -> [f64; 9] {
        let mut out = [0.0; 9];
        out.copy_from_slice(self.0.as_slice());
        out
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::from_row_slice(self.0.as_slice())
    }

    pub fn trace(&self) -> f64 {
        self.0[0] + self.0[4] + self.0[8]
    }

    pub fn exp(&self) -> Homography {
        exp_h(self)
    }

    pub fn norm_inf(&self) -> f64 {
        self.0.amax()
    }

    pub fn scale(&self, s: f64) -> Self {
        LogHomography(self.0 * s)
    }
}

impl Default for LogHomography {
    fn default() -> Self {
        Self::zero()
    }
}

impl std::ops::Index<usize> for LogHomography {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl Add for LogHomography {
    type Output = LogHomography;

    fn add(self, rhs: Self) -> Self {
        LogHomography(self.0 + rhs.0)
    }
}

impl Sub for LogHomography {
    type Output = LogHomography;

    fn sub(self, rhs: Self) -> Self {
        LogHomography(self.0 - rhs.0)
    }
}

impl Neg for LogHomography {
    type Output = LogHomography;

    fn neg(self) -> Self {
        LogHomography(-self.0)
    }
}

impl TryFrom<[f64; 9]> for LogHomography {
    type Error = LieError;

    fn try_from(v: [f64; 9]) -> Result<Self, LieError> {
        Self::from_slice(&v)
    }
}

impl From<LogHomography> for [f64; 9] {
    fn from(h: LogHomography) -> [f64; 9] {
        h.to_array()
    }
}

/// A point in normalized frame coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

impl From<[f64; 2]> for Point2 {
    fn from(v: [f64; 2]) -> Self {
        Point2::new(v[0], v[1])
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> [f64; 2] {
        [p.x, p.y]
    }
}

/// Four corners: top-left, top-right, bottom-right, bottom-left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CornerSet {
    pub corners: [Point2; 4],
}

impl CornerSet {
    pub fn new(corners: [Point2; 4]) -> Self {
        CornerSet { corners }
    }

    /// Axis-aligned rectangle centered at the origin.
    pub fn centered_rect(half_width: f64, half_height: f64) -> Self {
        CornerSet::new([
            Point2::new(-half_width, -half_height),
            Point2::new(half_width, -half_height),
            Point2::new(half_width, half_height),
            Point2::new(-half_width, half_height),
        ])
    }

    /// Coordinates stacked as `[x0, y0, x1, y1, x2, y2, x3, y3]`.
    pub fn to_vector(&self) -> Vector8 {
        let mut v = Vector8::zeros();
        for (i, c) in self.corners.iter().enumerate() {
            v[2 * i] = c.x;
            v[2 * i + 1] = c.y;
        }
        v
    }

    pub fn from_vector(v: &Vector8) -> Self {
        let mut corners = [Point2::default(); 4];
        for (i, c) in corners.iter_mut().enumerate() {
            *c = Point2::new(v[2 * i], v[2 * i + 1]);
        }
        CornerSet { corners }
    }

    pub fn transformed(&self, h: &Homography) -> Result<CornerSet, LieError> {
        let mut corners = self.corners;
        for c in corners.iter_mut() {
            *c = apply(h, *c)?;
        }
        Ok(CornerSet { corners })
    }

    pub fn area(&self) -> Result<f64, LieError> {
        quad_area(self)
    }

    pub fn sidelengths(&self) -> [f64; 4] {
        let mut out = [0.0; 4];
        for (i, len) in out.iter_mut().enumerate() {
            let a = self.corners[i];
            let b = self.corners[(i + 1) % 4];
            *len = (b.x - a.x).hypot(b.y - a.y);
        }
        out
    }

    /// Axis-aligned bounding box as `(min, max)`.
    pub fn bounds(&self) -> (Point2, Point2) {
        let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for c in &self.corners {
            lo.x = lo.x.min(c.x);
            lo.y = lo.y.min(c.y);
            hi.x = hi.x.max(c.x);
            hi.y = hi.y.max(c.y);
        }
        (lo, hi)
    }
}

pub fn row_major(m: &Matrix3<f64>) -> [f64; 9] {
    let mut out = [0.0; 9];
    for r in 0..3 {
        for c in 0..3 {
            out[3 * r + c] = m[(r, c)];
        }
    }
    out
}

/// Scales `m` to determinant one: `m / det(m)^(1/3)`.
pub fn normalize_det1(m: Matrix3<f64>) -> Result<Homography, LieError> {
    let det = m.determinant();
    if !(det > MIN_DETERMINANT) {
        return Err(LieError::NonPositiveDeterminant(det));
    }
    Ok(Homography(m / det.cbrt()))
}

/// Principal matrix logarithm by inverse scaling and squaring.
///
/// Square roots (Denman–Beavers) are taken until the matrix is within 0.25
/// of the identity in the 1-norm, then `log(I + A)` is evaluated with the
/// 8-point Gauss–Legendre rule applied to `∫ A (I + tA)⁻¹ dt`, which is the
/// [8/8] Padé approximant. The result is scaled back by `2^k`.
pub fn log_h(h: &Homography) -> Result<LogHomography, LieError> {
    let m = h.0;
    for ev in m.complex_eigenvalues().iter() {
        if ev.re <= BRANCH_TOLERANCE && ev.im.abs() <= BRANCH_TOLERANCE {
            return Err(LieError::LogDomain);
        }
    }

    let identity = Matrix3::identity();
    let mut x = m;
    let mut squarings = 0;
    while norm1(&(x - identity)) > 0.25 {
        x = sqrtm(&x).ok_or(LieError::LogDomain)?;
        squarings += 1;
        if squarings > 64 {
            return Err(LieError::LogDomain);
        }
    }

    let a = x - identity;
    let mut log = Matrix3::zeros();
    for (node, weight) in GAUSS_LEGENDRE_8 {
        let t = 0.5 * (1.0 + node);
        let inv = (identity + a * t)
            .try_inverse()
            .ok_or(LieError::LogDomain)?;
        log += a * inv * (0.5 * weight);
    }
    log *= 2f64.powi(squarings);

    let v = Vector9::from_row_slice(&row_major(&log));
    Ok(LogHomography::projected(v))
}

/// Matrix exponential by scaling and squaring with a degree-18 Taylor polynomial.
pub fn exp_h(h: &LogHomography) -> Homography {
    Homography(expm(&h.matrix()))
}

pub(crate) fn expm(x: &Matrix3<f64>) -> Matrix3<f64> {
    let norm = norm1(x);
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scaled = x / 2f64.powi(squarings);
    let identity = Matrix3::identity();
    let mut result = identity;
    for k in (1..=18).rev() {
        result = identity + scaled * result / k as f64;
    }
    for _ in 0..squarings {
        result *= result;
    }
    result
}

/// Perspective image of `p` under `h`.
pub fn apply(h: &Homography, p: Point2) -> Result<Point2, LieError> {
    let q = h.0 * Vector3::new(p.x, p.y, 1.0);
    if q.z.abs() < 1e-12 {
        return Err(LieError::PointAtInfinity(q.z));
    }
    Ok(Point2::new(q.x / q.z, q.y / q.z))
}

/// Derivative of `apply(exp(h), p) - p` with respect to `h` at `h = 0`.
pub fn displacement_jacobian(p: Point2) -> SMatrix<f64, 2, 9> {
    let (x, y) = (p.x, p.y);
    SMatrix::<f64, 2, 9>::from_row_slice(&[
        x,
        y,
        1.0,
        0.0,
        0.0,
        0.0,
        -x * x,
        -x * y,
        -x, //
        0.0,
        0.0,
        0.0,
        x,
        y,
        1.0,
        -x * y,
        -y * y,
        -y,
    ])
}

/// Displacement Jacobians of the four corners stacked in corner order.
pub fn corner_jacobian(c: &CornerSet) -> SMatrix<f64, 8, 9> {
    let mut jac = SMatrix::<f64, 8, 9>::zeros();
    for (i, &corner) in c.corners.iter().enumerate() {
        jac.fixed_view_mut::<2, 9>(2 * i, 0)
            .copy_from(&displacement_jacobian(corner));
    }
    jac
}

/// Shoelace area; errors unless the orientation is positive.
pub fn quad_area(c: &CornerSet) -> Result<f64, LieError> {
    let area = signed_area(c);
    if area <= 0.0 {
        return Err(LieError::NegativeArea(area));
    }
    Ok(area)
}

pub(crate) fn signed_area(c: &CornerSet) -> f64 {
    let mut sum = 0.0;
    for i in 0..4 {
        let a = c.corners[i];
        let b = c.corners[(i + 1) % 4];
        sum += a.x * b.y - b.x * a.y;
    }
    0.5 * sum
}

/// Gradient of the shoelace area with respect to the stacked corner coordinates.
pub fn area_gradient(c: &CornerSet) -> Vector8 {
    let mut g = Vector8::zeros();
    for i in 0..4 {
        let prev = c.corners[(i + 3) % 4];
        let next = c.corners[(i + 1) % 4];
        g[2 * i] = 0.5 * (next.y - prev.y);
        g[2 * i + 1] = 0.5 * (prev.x - next.x);
    }
    g
}

/// Gradient of each edge length `|c[i+1] - c[i]|` with respect to the stacked corners.
pub fn sidelength_gradients(c: &CornerSet) -> Result<[Vector8; 4], LieError> {
    let mut out = [Vector8::zeros(); 4];
    for (i, g) in out.iter_mut().enumerate() {
        let j = (i + 1) % 4;
        let a = c.corners[i];
        let b = c.corners[j];
        let (dx, dy) = (b.x - a.x, b.y - a.y);
        let len = dx.hypot(dy);
        if len <= 1e-9 {
            return Err(LieError::DegenerateEdge(i));
        }
        let (ux, uy) = (dx / len, dy / len);
        g[2 * i] = -ux;
        g[2 * i + 1] = -uy;
        g[2 * j] = ux;
        g[2 * j + 1] = uy;
    }
    Ok(out)
}

fn norm1(m: &Matrix3<f64>) -> f64 {
    (0..3)
        .map(|c| m.column(c).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn sqrtm(a: &Matrix3<f64>) -> Option<Matrix3<f64>> {
    let mut y = *a;
    let mut z = Matrix3::identity();
    for _ in 0..100 {
        let y_inv = y.try_inverse()?;
        let z_inv = z.try_inverse()?;
        let y_next = (y + z_inv) * 0.5;
        let z_next = (z + y_inv) * 0.5;
        let delta = norm1(&(y_next - y));
        y = y_next;
        z = z_next;
        if delta <= 1e-15 * norm1(&y) {
            return Some(y);
        }
    }
    None
}

// Nodes and weights on [-1, 1].
#[allow(clippy::excessive_precision)]
const GAUSS_LEGENDRE_8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_3, 0.101_228_536_290_376_3),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_5),
    (-0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_5),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_3),
];
