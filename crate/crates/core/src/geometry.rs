//! Fisher information, quantum Fisher information and precision bounds.
//!
//! For a zero-mean Gaussian outcome with variance `σ²(y)` the classical FI
//! reduces to `F_ij = (∂_i σ²)(∂_j σ²) / (2σ⁴)`, a rank-one outer product for
//! any single LO setting. Information only becomes invertible once several
//! settings are mixed, see [`composite_fi_matrix`].

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::quadrature::{
    axis_terms, effective_squeezing, variance_unchecked, ProbeParams, QuadratureAngle,
};

/// Matrices whose condition number exceeds this are treated as singular.
pub const MAX_CONDITION_NUMBER: f64 = 1e12;

/// Per-measurement information matrix over `(φ, r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FisherMatrix {
    pub phase_phase: f64,
    pub phase_squeezing: f64,
    pub squeezing_squeezing: f64,
    /// Set when the matrix is known to be `g gᵀ` for this vector.
    #[serde(skip)]
    rank_one_factor: Option<[f64; 2]>,
}

/// Inverse of a [`FisherMatrix`]; entries are per-measurement CRB terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InverseFisher {
    pub phase_phase: f64,
    pub phase_squeezing: f64,
    pub squeezing_squeezing: f64,
}

impl InverseFisher {
    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        (self.phase_phase.powi(2)
            + 2.0 * self.phase_squeezing.powi(2)
            + self.squeezing_squeezing.powi(2))
        .sqrt()
    }
}

impl FisherMatrix {
    pub fn new(phase_phase: f64, phase_squeezing: f64, squeezing_squeezing: f64) -> Self {
        Self {
            phase_phase,
            phase_squeezing,
            squeezing_squeezing,
            rank_one_factor: None,
        }
    }

    pub fn zero() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    fn rank_one(g: [f64; 2]) -> Self {
        Self {
            phase_phase: g[0] * g[0],
            phase_squeezing: g[0] * g[1],
            squeezing_squeezing: g[1] * g[1],
            rank_one_factor: Some(g),
        }
    }

    pub fn is_rank_one(&self) -> bool {
        self.rank_one_factor.is_some()
    }

    /// Determinant. Exactly zero for single-setting matrices.
    pub fn determinant(&self) -> f64 {
        if self.rank_one_factor.is_some() {
            return 0.0;
        }
        self.phase_phase * self.squeezing_squeezing - self.phase_squeezing.powi(2)
    }

    pub fn trace(&self) -> f64 {
        self.phase_phase + self.squeezing_squeezing
    }

    /// Eigenvalues, smallest first.
    pub fn eigenvalues(&self) -> [f64; 2] {
        let half_tr = 0.5 * self.trace();
        let disc = (0.25 * (self.phase_phase - self.squeezing_squeezing).powi(2)
            + self.phase_squeezing.powi(2))
        .sqrt();
        [half_tr - disc, half_tr + disc]
    }

    pub fn condition_number(&self) -> f64 {
        let [lo, hi] = self.eigenvalues();
        if lo <= 0.0 || self.determinant() <= 0.0 {
            f64::INFINITY
        } else {
            hi / lo
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            phase_phase: s * self.phase_phase,
            phase_squeezing: s * self.phase_squeezing,
            squeezing_squeezing: s * self.squeezing_squeezing,
            rank_one_factor: self.rank_one_factor.map(|[a, b]| {
                let k = s.sqrt();
                [k * a, k * b]
            }),
        }
    }

    pub fn plus(&self, other: &Self) -> Self {
        Self::new(
            self.phase_phase + other.phase_phase,
            self.phase_squeezing + other.phase_squeezing,
            self.squeezing_squeezing + other.squeezing_squeezing,
        )
    }

    /// Inverse, refusing matrices whose condition number exceeds
    /// [`MAX_CONDITION_NUMBER`].
    pub fn inverse(&self) -> Result<InverseFisher> {
        let condition = self.condition_number();
        if !(condition <= MAX_CONDITION_NUMBER) {
            return Err(Error::NonInvertible { condition });
        }
        let det = self.determinant();
        Ok(InverseFisher {
            phase_phase: self.squeezing_squeezing / det,
            phase_squeezing: -self.phase_squeezing / det,
            squeezing_squeezing: self.phase_phase / det,
        })
    }
}

/// Gradient of the quadrature variance with respect to `(φ, r, η)`.
pub fn variance_gradient(phi_rel: f64, r: f64, eta: f64) -> [f64; 3] {
    let (c, s) = (phi_rel.cos(), phi_rel.sin());
    let (sqz, asqz) = axis_terms(r, eta);
    let e_m = (-2.0 * r).exp();
    [
        0.25 * (asqz - sqz) * (2.0 * phi_rel).sin(),
        0.5 * (asqz * s * s - eta * e_m * c * c),
        0.25 * (e_m - 1.0) * c * c,
    ]
}

/// Classical FI of one homodyne outcome at a fixed LO phase.
pub fn fi_matrix_single_setting(probe: &ProbeParams, theta: QuadratureAngle) -> FisherMatrix {
    let phi_rel = theta.relative_to(probe.phase);
    let var = variance_unchecked(phi_rel, probe.squeezing, probe.efficiency);
    let g = variance_gradient(phi_rel, probe.squeezing, probe.efficiency);
    // F = g gᵀ / (2σ⁴) = u uᵀ with u = g / (√2 σ²)
    let k = 1.0 / (std::f64::consts::SQRT_2 * var);
    FisherMatrix::rank_one([g[0] * k, g[1] * k])
}

/// Information of the rough-plus-fine adaptive schedule:
/// `(M_R/M)·mean_rough F + ((M − M_R)/M)·F(θ_fine)`.
pub fn composite_fi_matrix(
    probe: &ProbeParams,
    theta_fine: QuadratureAngle,
    rough_count: usize,
    total_count: usize,
    rough_angles: &[f64],
) -> Result<FisherMatrix> {
    ensure(!rough_angles.is_empty(), || "rough_angles must not be empty".into())?;
    ensure(rough_count > 0 && rough_count <= total_count, || {
        format!("need 0 < M_R <= M, got M_R={rough_count}, M={total_count}")
    })?;
    let rough_weight = rough_count as f64 / total_count as f64;
    let per_angle = rough_weight / rough_angles.len() as f64;
    let mut acc = FisherMatrix::zero();
    for &theta in rough_angles {
        acc = acc.plus(&fi_matrix_single_setting(probe, QuadratureAngle::new(theta)).scaled(per_angle));
    }
    let fine_weight = (total_count - rough_count) as f64 / total_count as f64;
    if fine_weight > 0.0 {
        acc = acc.plus(&fi_matrix_single_setting(probe, theta_fine).scaled(fine_weight));
    }
    Ok(acc)
}

/// Quantum Fisher information of the pure squeezed vacuum, `diag(2 sinh²2r, 2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QfiMatrix {
    pub phase: f64,
    pub squeezing: f64,
}

impl QfiMatrix {
    pub fn off_diagonal(&self) -> f64 {
        0.0
    }
}

pub fn qfi_matrix(r: f64) -> QfiMatrix {
    QfiMatrix {
        phase: 2.0 * (2.0 * r).sinh().powi(2),
        squeezing: 2.0,
    }
}

/// Squeezed-state phase QFI with loss folded in through `r_eff`.
pub fn effective_phase_qfi(r: f64, eta: f64) -> Result<f64> {
    Ok(qfi_matrix(effective_squeezing(r, eta)?).phase)
}

/// Per-measurement variance bounds. Unbounded entries are `+∞`; entries
/// that need an invertible composite FI are `None` when it is singular.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundSet {
    pub qcrb_phase_squeezed: f64,
    pub qcrb_phase_coherent: f64,
    pub crb_phase_adaptive: Option<f64>,
    pub crb_squeezing_adaptive: Option<f64>,
    pub mean_photon_number: f64,
}

impl BoundSet {
    /// Bounds for a total budget of `m` measurements.
    pub fn for_budget(&self, m: usize) -> Self {
        let m = m as f64;
        Self {
            qcrb_phase_squeezed: self.qcrb_phase_squeezed / m,
            qcrb_phase_coherent: self.qcrb_phase_coherent / m,
            crb_phase_adaptive: self.crb_phase_adaptive.map(|v| v / m),
            crb_squeezing_adaptive: self.crb_squeezing_adaptive.map(|v| v / m),
            mean_photon_number: self.mean_photon_number,
        }
    }
}

pub fn phase_bounds(r: f64, eta: f64, composite: Option<&FisherMatrix>) -> Result<BoundSet> {
    let f_sq = effective_phase_qfi(r, eta)?;
    let n = r.sinh().powi(2);
    let (crb_phase, crb_sqz) = match composite.map(FisherMatrix::inverse) {
        Some(Ok(inv)) => (Some(inv.phase_phase), Some(inv.squeezing_squeezing)),
        _ => (None, None),
    };
    Ok(BoundSet {
        qcrb_phase_squeezed: 1.0 / f_sq,
        qcrb_phase_coherent: 1.0 / (4.0 * n),
        crb_phase_adaptive: crb_phase,
        crb_squeezing_adaptive: crb_sqz,
        mean_photon_number: n,
    })
}

/// Relative angle `φ − θ` maximizing the single-parameter phase FI.
pub fn optimal_angle_single(r_eff: f64) -> f64 {
    0.5 * (2.0 * r_eff).tanh().acos()
}

/// Relative angle at which `∂σ²/∂r = 0`, so the single-setting FI carries no
/// squeezing information and no φ–r cross term.
pub fn decorrelation_angle(r_hat: f64, eta: f64) -> f64 {
    // arccos(e^{2r}/√(e^{4r}+η)) written as an arctangent, which stays
    // accurate when the arccos argument rounds to 1
    (eta.sqrt() * (-2.0 * r_hat).exp()).atan()
}

/// `|⟨[L_φ, L_r]⟩| = 4 sinh 2r`; zero only for vacuum.
pub fn weak_commutation_witness(r: f64) -> f64 {
    4.0 * (2.0 * r).sinh()
}

/// 3×3 FI over `(φ, r, η)` from the defining integral
/// `∫ p ∂_i ln p ∂_j ln p dx`, with scores by central differences and
/// composite Simpson quadrature. Diagnostic only: no closed form is used.
pub fn fi_matrix_integral(probe: &ProbeParams, theta: QuadratureAngle) -> [[f64; 3]; 3] {
    let y0 = [probe.phase, probe.squeezing, probe.efficiency];
    let theta = theta.radians();
    let log_p = |x: f64, y: [f64; 3]| {
        let v = variance_unchecked(y[0] - theta, y[1], y[2]);
        -0.5 * (TAU * v).ln() - x * x / (2.0 * v)
    };
    let h = [1e-5, 1e-5, 1e-6];
    let score = |x: f64, i: usize| {
        let mut up = y0;
        let mut dn = y0;
        up[i] += h[i];
        dn[i] -= h[i];
        (log_p(x, up) - log_p(x, dn)) / (2.0 * h[i])
    };
    let sd = variance_unchecked(y0[0] - theta, y0[1], y0[2]).sqrt();
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in i..3 {
            let f = |x: f64| log_p(x, y0).exp() * score(x, i) * score(x, j);
            // symmetric integrand; the tail past 12 sd is below e^-72
            let v = 2.0 * composite_simpson(&f, 0.0, 12.0 * sd, 6000);
            out[i][j] = v;
            out[j][i] = v;
        }
    }
    out
}

fn composite_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / (2 * panels) as f64;
    let inner: f64 = (1..2 * panels)
        .map(|k| f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 })
        .sum();
    h / 3.0 * (f(a) + inner + f(b))
}
