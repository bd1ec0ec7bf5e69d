//! Jones-calculus primitives: polarization vectors, 2x2 element matrices,
//! composition, reciprocal backward propagation, and the Faraday-mirror
//! round trip.
//!
//! Conventions (fixed once, used everywhere):
//! * basis H = (1, 0), V = (0, 1);
//! * angles in degrees, measured from the H axis, counter-clockwise looking
//!   toward the source;
//! * every matrix is expressed in a single fixed forward frame, so a
//!   reciprocal element traversed backward acts as the transpose;
//! * global phases are physical in this representation and are never
//!   silently normalized away.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Tolerance for construction-level checks (unitarity, unit determinant).
pub const UNITARITY_TOL: f64 = 1e-10;
/// Tolerance for theorem-level checks (round-trip compensation).
pub const THEOREM_TOL: f64 = 1e-12;

/// Two-component complex polarization amplitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JonesVector {
    pub h: Complex64,
    pub v: Complex64,
}

impl JonesVector {
    pub fn new(h: Complex64, v: Complex64) -> Self {
        Self { h, v }
    }

    pub fn horizontal() -> Self {
        Self::new(Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0))
    }

    pub fn vertical() -> Self {
        Self::new(Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0))
    }

    /// Linear polarization at `angle_deg` from the H axis.
    pub fn linear(angle_deg: f64) -> Self {
        let a = angle_deg.to_radians();
        Self::new(Complex64::new(a.cos(), 0.0), Complex64::new(a.sin(), 0.0))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.h.norm_sqr() + self.v.norm_sqr()
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.norm_sqr() - 1.0).abs() < tol
    }

    pub fn is_finite(&self) -> bool {
        self.h.is_finite() && self.v.is_finite()
    }

    /// Inner product ⟨self|other⟩ (conjugate-linear in `self`).
    pub fn inner(&self, other: &JonesVector) -> Complex64 {
        self.h.conj() * other.h + self.v.conj() * other.v
    }

    pub fn distance(&self, other: &JonesVector) -> f64 {
        ((self.h - other.h).norm_sqr() + (self.v - other.v).norm_sqr()).sqrt()
    }
}

/// 2x2 complex operator of an optical element, row-major entries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JonesMatrix {
    pub m00: Complex64,
    pub m01: Complex64,
    pub m10: Complex64,
    pub m11: Complex64,
}

impl JonesMatrix {
    pub fn new(m00: Complex64, m01: Complex64, m10: Complex64, m11: Complex64) -> Self {
        Self { m00, m01, m10, m11 }
    }

    pub fn from_reals(m00: f64, m01: f64, m10: f64, m11: f64) -> Self {
        Self::new(
            Complex64::new(m00, 0.0),
            Complex64::new(m01, 0.0),
            Complex64::new(m10, 0.0),
            Complex64::new(m11, 0.0),
        )
    }

    pub fn identity() -> Self {
        Self::from_reals(1.0, 0.0, 0.0, 1.0)
    }

    pub fn zero() -> Self {
        Self::from_reals(0.0, 0.0, 0.0, 0.0)
    }

    /// Real rotation by `angle_deg` (counter-clockwise).
    pub fn rotation(angle_deg: f64) -> Self {
        let a = angle_deg.to_radians();
        Self::from_reals(a.cos(), -a.sin(), a.sin(), a.cos())
    }

    pub fn transpose(&self) -> Self {
        Self::new(self.m00, self.m10, self.m01, self.m11)
    }

    pub fn adjoint(&self) -> Self {
        Self::new(
            self.m00.conj(),
            self.m10.conj(),
            self.m01.conj(),
            self.m11.conj(),
        )
    }

    pub fn det(&self) -> Complex64 {
        self.m00 * self.m11 - self.m01 * self.m10
    }

    pub fn scale(&self, k: Complex64) -> Self {
        Self::new(k * self.m00, k * self.m01, k * self.m10, k * self.m11)
    }

    pub fn frobenius_norm(&self) -> f64 {
        (self.m00.norm_sqr() + self.m01.norm_sqr() + self.m10.norm_sqr() + self.m11.norm_sqr())
            .sqrt()
    }

    pub fn frobenius_dist(&self, other: &JonesMatrix) -> f64 {
        ((self.m00 - other.m00).norm_sqr()
            + (self.m01 - other.m01).norm_sqr()
            + (self.m10 - other.m10).norm_sqr()
            + (self.m11 - other.m11).norm_sqr())
        .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.m00.is_finite() && self.m01.is_finite() && self.m10.is_finite() && self.m11.is_finite()
    }

    /// M†M = I within `tol` (Frobenius).
    pub fn is_unitary(&self, tol: f64) -> bool {
        let g = self.adjoint() * *self;
        g.frobenius_dist(&JonesMatrix::identity()) < tol
    }

    /// Lossless fiber label: unitary with unit determinant.
    pub fn is_fiber(&self, tol: f64) -> bool {
        self.is_unitary(tol) && (self.det() - Complex64::new(1.0, 0.0)).norm() < tol
    }
}

impl std::ops::Mul for JonesMatrix {
    type Output = JonesMatrix;

    fn mul(self, rhs: JonesMatrix) -> JonesMatrix {
        JonesMatrix::new(
            self.m00 * rhs.m00 + self.m01 * rhs.m10,
            self.m00 * rhs.m01 + self.m01 * rhs.m11,
            self.m10 * rhs.m00 + self.m11 * rhs.m10,
            self.m10 * rhs.m01 + self.m11 * rhs.m11,
        )
    }
}

impl std::ops::Mul<JonesVector> for JonesMatrix {
    type Output = JonesVector;

    fn mul(self, rhs: JonesVector) -> JonesVector {
        JonesVector::new(
            self.m00 * rhs.h + self.m01 * rhs.v,
            self.m10 * rhs.h + self.m11 * rhs.v,
        )
    }
}

/// Optical elements appearing in the source and analyzer paths.
///
/// Axis angles are in degrees and act modulo 180 for the half-wave plate and
/// the polarizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ElementSpec {
    HalfWavePlate { axis_deg: f64 },
    Polarizer { axis_deg: f64 },
    FaradayRotator { rotation_deg: f64 },
    Mirror,
    Fiber(JonesMatrix),
    PbsPort(PbsPort),
}

/// Output port of an ideal polarization beam-splitter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PbsPort {
    HorizontalPass,
    VerticalPass,
}

impl ElementSpec {
    pub fn matrix(&self) -> Result<JonesMatrix> {
        match *self {
            ElementSpec::HalfWavePlate { axis_deg } => hwp_matrix(axis_deg),
            ElementSpec::Polarizer { axis_deg } => polarizer_matrix(axis_deg),
            ElementSpec::FaradayRotator { rotation_deg } => {
                if !rotation_deg.is_finite() {
                    return Err(Error::invalid("Faraday rotation angle must be finite"));
                }
                Ok(JonesMatrix::rotation(rotation_deg))
            }
            // A mirror reverses propagation; in the fixed forward frame its
            // polarization action is the identity.
            ElementSpec::Mirror => Ok(JonesMatrix::identity()),
            ElementSpec::Fiber(u) => {
                if !u.is_fiber(UNITARITY_TOL) {
                    return Err(Error::invalid(
                        "fiber element must be unitary with unit determinant",
                    ));
                }
                Ok(u)
            }
            ElementSpec::PbsPort(port) => Ok(match port {
                PbsPort::HorizontalPass => JonesMatrix::from_reals(1.0, 0.0, 0.0, 0.0),
                PbsPort::VerticalPass => JonesMatrix::from_reals(0.0, 0.0, 0.0, 1.0),
            }),
        }
    }
}

/// Half-wave plate with fast axis at `theta_deg`:
/// [[cos 2θ, sin 2θ], [sin 2θ, −cos 2θ]].
pub fn hwp_matrix(theta_deg: f64) -> Result<JonesMatrix> {
    if !theta_deg.is_finite() {
        return Err(Error::invalid("half-wave plate angle must be finite"));
    }
    let t = 2.0 * theta_deg.to_radians();
    Ok(JonesMatrix::from_reals(t.cos(), t.sin(), t.sin(), -t.cos()))
}

/// Ideal linear polarizer at `theta_deg`: the projector onto that axis.
pub fn polarizer_matrix(theta_deg: f64) -> Result<JonesMatrix> {
    if !theta_deg.is_finite() {
        return Err(Error::invalid("polarizer angle must be finite"));
    }
    let t = theta_deg.to_radians();
    let (s, c) = t.sin_cos();
    Ok(JonesMatrix::from_reals(c * c, s * c, s * c, s * s))
}

/// Faraday rotator mirror as one component: F = [[0, 1], [−1, 0]].
///
/// The 45-degree rotator, the mirror, and the second (non-reciprocal) pass of
/// the rotator are collapsed into this single matrix in the fixed forward
/// frame.
pub fn frm_matrix() -> JonesMatrix {
    JonesMatrix::from_reals(0.0, 1.0, -1.0, 0.0)
}

/// Right-to-left product: the first element of the slice acts first.
pub fn compose(elements: &[JonesMatrix]) -> Result<JonesMatrix> {
    let (first, rest) = elements
        .split_first()
        .ok_or_else(|| Error::invalid("compose requires at least one element"))?;
    Ok(rest.iter().fold(*first, |acc, m| *m * acc))
}

/// Backward propagation through a reciprocal element, in the fixed forward
/// frame: the transpose.
pub fn backward_matrix(u: &JonesMatrix) -> Result<JonesMatrix> {
    if !u.is_fiber(UNITARITY_TOL) {
        return Err(Error::invalid(
            "backward propagation is defined for unit-determinant unitaries",
        ));
    }
    Ok(u.transpose())
}

/// Round trip through fiber `u`, the Faraday mirror, and the same fiber
/// backward: Uᵀ F U.
///
/// For every unit-determinant unitary U this equals F itself, which is the
/// birefringence-compensation property the source relies on.
pub fn frm_roundtrip(u: &JonesMatrix) -> Result<JonesMatrix> {
    let back = backward_matrix(u)?;
    Ok(back * frm_matrix() * *u)
}

/// Haar-uniform random SU(2) element.
///
/// Samples a uniform unit 4-vector (a, b, c, d) and forms
/// [[a+ib, c+id], [−c+id, a−ib]], which has determinant a²+b²+c²+d² = 1.
pub fn haar_random_su2<R: Rng + ?Sized>(rng: &mut R) -> JonesMatrix {
    loop {
        let q: [f64; 4] = [
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        ];
        let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
        if n < 1e-8 {
            continue;
        }
        let (a, b, c, d) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
        return JonesMatrix::new(
            Complex64::new(a, b),
            Complex64::new(c, d),
            Complex64::new(-c, d),
            Complex64::new(a, -b),
        );
    }
}
