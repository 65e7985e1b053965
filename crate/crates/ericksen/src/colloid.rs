//! Signed-distance and phase-field representation of rigid colloidal
//! inclusions for the immersed-boundary energies.
//!
//! The nodal gradient of the phase field is evaluated analytically and
//! then interpolated (the `I_h grad phi` of the discrete anchoring
//! forms), not obtained by differentiating the P1 interpolant of phi.

use crate::error::{Error, Result};
use crate::geom::{Mat3, Vec3};
use crate::mesh::Mesh;
use std::f64::consts::PI;

/// Surface-area normalization constant of the phase-field perimeter
/// functional.
pub const C0: f64 = 4.0 * PI;

/// Affine map x_hat = R x + b from the physical colloid to its
/// reference shape.
#[derive(Clone, Debug)]
pub struct RigidMotion {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl RigidMotion {
    pub fn identity() -> Self {
        RigidMotion {
            rotation: Mat3::identity(),
            translation: Vec3::ZERO,
        }
    }

    /// Pure translation by `b` (reference frame = physical frame shifted).
    pub fn translation(b: Vec3) -> Self {
        RigidMotion {
            rotation: Mat3::identity(),
            translation: b,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let rt_r = self.rotation.transpose().mul_mat(&self.rotation);
        let mut dev: f64 = 0.0;
        let id = Mat3::identity();
        for i in 0..3 {
            for j in 0..3 {
                dev = dev.max((rt_r.m[i][j] - id.m[i][j]).abs());
            }
        }
        if dev > 1e-12 {
            return Err(Error::Model(format!("rotation is not orthogonal (deviation {dev:.2e})")));
        }
        if (self.rotation.det() - 1.0).abs() > 1e-12 {
            return Err(Error::Model("rotation must have determinant +1".into()));
        }
        Ok(())
    }

    pub fn apply(&self, x: Vec3) -> Vec3 {
        self.rotation.mul_vec(x) + self.translation
    }
}

#[derive(Clone, Debug)]
pub enum ReferenceShape {
    /// Sphere of radius r centered at the reference origin.
    Sphere { radius: f64 },
}

/// A rigid inclusion: a reference shape exposing a signed distance
/// (positive inside), placed by a rigid motion.
#[derive(Clone, Debug)]
pub struct ColloidShape {
    pub shape: ReferenceShape,
    pub motion: RigidMotion,
}

impl ColloidShape {
    /// Sphere of radius `r` centered at `c` with identity rotation.
    pub fn sphere(radius: f64, center: Vec3) -> Result<Self> {
        if radius <= 0.0 {
            return Err(Error::Model("sphere radius must be positive".into()));
        }
        Ok(ColloidShape {
            shape: ReferenceShape::Sphere { radius },
            motion: RigidMotion::translation(-center),
        })
    }

    fn reference_distance(&self, x_hat: Vec3) -> f64 {
        match self.shape {
            ReferenceShape::Sphere { radius } => radius - x_hat.norm(),
        }
    }

    /// Gradient of the reference signed distance; zero at the center
    /// where the direction is undefined.
    fn reference_distance_gradient(&self, x_hat: Vec3) -> Vec3 {
        match self.shape {
            ReferenceShape::Sphere { .. } => {
                let r = x_hat.norm();
                if r == 0.0 {
                    Vec3::ZERO
                } else {
                    -x_hat * (1.0 / r)
                }
            }
        }
    }
}

/// Signed distance d(x) = d_hat(F(x)), positive inside the colloid.
pub fn signed_distance(shape: &ColloidShape, x: Vec3) -> f64 {
    shape.reference_distance(shape.motion.apply(x))
}

/// grad d(x) = R^T grad_hat d_hat(F(x)).
pub fn signed_distance_gradient(shape: &ColloidShape, x: Vec3) -> Vec3 {
    let x_hat = shape.motion.apply(x);
    let g_hat = shape.reference_distance_gradient(x_hat);
    shape.motion.rotation.transpose().mul_vec(g_hat)
}

/// One-dimensional phase-field profile
/// phi_ref(t) = (1/2)[(2/pi) arctan(-t/eps) + 1].
pub fn phase_ref(t: f64, eps: f64) -> f64 {
    0.5 * ((2.0 / PI) * (-t / eps).atan() + 1.0)
}

/// phi_ref'(t) = -1/(pi eps) * 1/(1 + (t/eps)^2).
pub fn phase_ref_deriv(t: f64, eps: f64) -> f64 {
    -1.0 / (PI * eps) / (1.0 + (t / eps) * (t / eps))
}

/// Nodal phase field phi_i = phi_ref(d(x_i)) and its analytic nodal
/// gradient.
#[derive(Clone, Debug)]
pub struct PhaseField {
    pub epsilon: f64,
    pub phi: Vec<f64>,
    pub grad_phi: Vec<Vec3>,
}

pub fn build_phase_field(mesh: &Mesh, shape: &ColloidShape, eps: f64) -> Result<PhaseField> {
    if eps <= 0.0 {
        return Err(Error::Model("phase-field width must be positive".into()));
    }
    shape.motion.validate()?;
    let h = mesh.max_edge_length();
    if eps < 2.0 * h {
        log::warn!("phase-field width eps = {eps} below 2h = {} (under-resolved interface)", 2.0 * h);
    }
    let n = mesh.n_vertices();
    let mut phi = Vec::with_capacity(n);
    let mut grad_phi = Vec::with_capacity(n);
    for i in 0..n {
        let x = mesh.vertex(i);
        let d = signed_distance(shape, x);
        phi.push(phase_ref(d, eps));
        grad_phi.push(signed_distance_gradient(shape, x) * phase_ref_deriv(d, eps));
    }
    Ok(PhaseField { epsilon: eps, phi, grad_phi })
}

/// Perimeter functional J_eps(f) = C0 (eps/2) int f |grad phi|^2,
/// evaluated with the nodal interpolated gradient and mass lumping.
/// For f = 1 this approximates the colloid's surface area.
pub fn perimeter_functional(lumped: &[f64], f: &[f64], pf: &PhaseField) -> f64 {
    assert_eq!(lumped.len(), f.len());
    assert_eq!(f.len(), pf.phi.len());
    let mut acc = 0.0;
    for i in 0..f.len() {
        acc += lumped[i] * f[i] * pf.grad_phi[i].norm2();
    }
    C0 * 0.5 * pf.epsilon * acc
}
