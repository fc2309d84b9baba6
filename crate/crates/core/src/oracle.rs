//! Gaussian-state cross-check of the sensitivity formula.
//!
//! The signal/idler pair is a two-mode squeezed vacuum over the quadratures
//! (a₁, a₂, b₁, b₂) with vacuum variance 1. The interferometer shears the
//! signal (A₂ = a₂ − K a₁) and rotates the idler by Φ_rot. Homodyning one idler
//! quadrature and conditioning A₂ on the outcome gives the conditional noise,
//! calibrated to strain by the signal gain √(2K)/h_SQL. Overall phases of the
//! input-output relations drop out of every variance and are not modelled.

use nalgebra::{Matrix2, Matrix4, SMatrix, SymmetricEigen, Vector2, Vector4};

use crate::error::{domain, Error, Result};
use crate::noise::{h_sql, kappa_lbi, phi_rot, FilterTarget};
use crate::params::InterferometerParams;

/// Covariance of (a₁, a₂, b₁, b₂); vacuum is the identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianState {
    pub cov: Matrix4<f64>,
}

/// Block-diagonal symplectic form diag(J₂, J₂), J₂ = [[0, 1], [−1, 0]].
pub fn symplectic_form() -> Matrix4<f64> {
    let mut j = Matrix4::zeros();
    j[(0, 1)] = 1.0;
    j[(1, 0)] = -1.0;
    j[(2, 3)] = 1.0;
    j[(3, 2)] = -1.0;
    j
}

impl GaussianState {
    pub fn vacuum() -> Self {
        GaussianState {
            cov: Matrix4::identity(),
        }
    }

    pub fn variance(&self, v: &Vector4<f64>) -> f64 {
        (v.transpose() * self.cov * v)[(0, 0)]
    }

    pub fn covariance(&self, u: &Vector4<f64>, v: &Vector4<f64>) -> f64 {
        (u.transpose() * self.cov * v)[(0, 0)]
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (self.cov - self.cov.transpose()).amax() <= tol * self.cov.amax().max(1.0)
    }

    /// Smallest eigenvalue of the covariance.
    pub fn min_eigenvalue(&self) -> f64 {
        let sym = (self.cov + self.cov.transpose()) * 0.5;
        SymmetricEigen::new(sym).eigenvalues.min()
    }

    /// Smallest eigenvalue of the Hermitian matrix V + iJ, through its real
    /// 8×8 embedding [[V, −J], [J, V]]. Non-negative for physical states.
    pub fn uncertainty_margin(&self) -> f64 {
        let v = (self.cov + self.cov.transpose()) * 0.5;
        let j = symplectic_form();
        let mut m = SMatrix::<f64, 8, 8>::zeros();
        m.fixed_view_mut::<4, 4>(0, 0).copy_from(&v);
        m.fixed_view_mut::<4, 4>(4, 4).copy_from(&v);
        m.fixed_view_mut::<4, 4>(0, 4).copy_from(&(-j));
        m.fixed_view_mut::<4, 4>(4, 0).copy_from(&j);
        SymmetricEigen::new(m).eigenvalues.min()
    }

    /// Symmetric, positive semidefinite and uncertainty-bounded, each to
    /// `tol` relative to the largest covariance entry.
    pub fn is_physical(&self, tol: f64) -> bool {
        let scale = self.cov.amax().max(1.0);
        self.is_symmetric(tol)
            && self.min_eigenvalue() >= -tol * scale
            && self.uncertainty_margin() >= -tol * scale
    }
}

/// Two-mode squeezed vacuum: a₁ − b₁ and a₂ + b₂ squeezed to 2e^{−2r}.
pub fn epr_state(r: f64) -> Result<GaussianState> {
    if !(r.is_finite() && r >= 0.0) {
        return Err(domain(format!("squeezing parameter must be >= 0, got {r}")));
    }
    let (c, s) = ((2.0 * r).cosh(), (2.0 * r).sinh());
    #[rustfmt::skip]
    let cov = Matrix4::new(
        c,   0.0, s,   0.0,
        0.0, c,   0.0, -s,
        s,   0.0, c,   0.0,
        0.0, -s,  0.0, c,
    );
    Ok(GaussianState { cov })
}

/// Maps (x₁, x₂) to (x_θ, x_{θ+π/2}) with x_θ = x₁ cos θ + x₂ sin θ.
pub fn rotate_quadrature(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, s, -s, c)
}

/// Quadrature transfer: shear on the signal, rotation on the idler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureTransfer {
    pub block_signal: Matrix2<f64>,
    pub block_idler: Matrix2<f64>,
}

impl QuadratureTransfer {
    /// A₁ = a₁, A₂ = a₂ − K a₁; B₁ = b₁ cos Φ + b₂ sin Φ, B₂ = −b₁ sin Φ + b₂ cos Φ.
    pub fn new(kappa: f64, phi_rot: f64) -> Self {
        QuadratureTransfer {
            block_signal: Matrix2::new(1.0, 0.0, -kappa, 1.0),
            block_idler: rotate_quadrature(phi_rot),
        }
    }

    pub fn matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::zeros();
        m.fixed_view_mut::<2, 2>(0, 0).copy_from(&self.block_signal);
        m.fixed_view_mut::<2, 2>(2, 2).copy_from(&self.block_idler);
        m
    }
}

/// cov' = M cov Mᵀ for the block-diagonal transfer M.
pub fn apply_transfer(state: &GaussianState, kappa: f64, phi_rot: f64) -> GaussianState {
    let m = QuadratureTransfer::new(kappa, phi_rot).matrix();
    GaussianState {
        cov: m * state.cov * m.transpose(),
    }
}

fn signal_phase() -> Vector4<f64> {
    Vector4::new(0.0, 1.0, 0.0, 0.0)
}

fn idler_quadrature(theta: f64) -> Vector4<f64> {
    let (s, c) = theta.sin_cos();
    Vector4::new(0.0, 0.0, c, s)
}

/// Variance of A₂ conditioned on a homodyne measurement of the idler
/// quadrature B_θ = B₁ cos θ + B₂ sin θ: V_AA − V_AB² / V_BB.
pub fn condition_on_idler(state: &GaussianState, theta: f64) -> Result<f64> {
    let a = signal_phase();
    let b = idler_quadrature(theta);
    let vbb = state.variance(&b);
    let scale = state.cov.amax().max(1.0);
    if !(vbb > 1e-14 * scale) {
        return Err(Error::Singular(vbb));
    }
    let vab = state.covariance(&a, &b);
    Ok(state.variance(&a) - vab * vab / vbb)
}

/// Idler homodyne angle with the largest squared correlation to A₂,
/// θ = arg(V_BB⁻¹ c) where c is the idler/A₂ cross-covariance.
pub fn optimal_idler_angle(state: &GaussianState) -> Result<f64> {
    let vbb: Matrix2<f64> = state.cov.fixed_view::<2, 2>(2, 2).into();
    let c = Vector2::new(state.cov[(2, 1)], state.cov[(3, 1)]);
    let inv = vbb
        .try_inverse()
        .ok_or_else(|| Error::Singular(vbb.determinant()))?;
    let v = inv * c;
    Ok(v[1].atan2(v[0]))
}

/// How the idler homodyne angle is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum IdlerAnglePolicy {
    /// The angle that is optimal when the idler rotation is exactly −arctan K
    /// (the B₂ quadrature). Rotation errors then show up as lost correlation.
    #[default]
    IdealRotation,
    /// Optimal angle for the actual transfer at each frequency.
    PerFrequency,
    Fixed(f64),
}

/// Conditional strain PSD for an explicit idler rotation angle.
pub fn oracle_sensitivity_with_rotation(
    params: &InterferometerParams,
    omega: f64,
    phi_rotation: f64,
    policy: IdlerAnglePolicy,
) -> Result<f64> {
    let h = h_sql(params, omega)?;
    let k = kappa_lbi(params, omega)?;
    let input = epr_state(params.squeeze_r)?;
    let out = apply_transfer(&input, k, phi_rotation);
    let theta = match policy {
        IdlerAnglePolicy::IdealRotation => {
            optimal_idler_angle(&apply_transfer(&input, k, -k.atan()))?
        }
        IdlerAnglePolicy::PerFrequency => optimal_idler_angle(&out)?,
        IdlerAnglePolicy::Fixed(t) => t,
    };
    let var = condition_on_idler(&out, theta)?;
    Ok(var * h * h / (2.0 * k))
}

/// Conditional strain PSD with the idler rotation of `target`.
pub fn oracle_sensitivity(
    params: &InterferometerParams,
    omega: f64,
    target: &FilterTarget,
    policy: IdlerAnglePolicy,
) -> Result<f64> {
    oracle_sensitivity_with_rotation(params, omega, phi_rot(omega, target), policy)
}
