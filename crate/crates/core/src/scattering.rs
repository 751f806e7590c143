//! Phase functions, the scattering operator K and the angular (Step 1) system
//!
//! ```text
//! (M¹ + Δt σ_τ M¹ − Δt σ_s M²) ũ_k = M¹ u_k      for every spatial node k
//! ```
//!
//! with DG(0) mass M¹ = diag(|K_i|) and scattering matrix
//! M²_ij = Φ(s_i, s_j)|K_i||K_j| from the cell-center rule.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::angular_mesh::AngularMesh;
use crate::geometry::{dot, Vec3};
use crate::linalg::{dense_factor, DenseFactorization};
use crate::{Error, Result};

const INV_4PI: f64 = 1.0 / (4.0 * PI);

/// Scattering kernel Φ(s, s′), a function of μ = s·s′ only.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PhaseFunction {
    /// Φ = 1/(4π).
    Isotropic,
    /// Φ = (1 + b μ)/(4π), |b| ≤ 1.
    LinearAnisotropic { b: f64 },
    /// Φ = (1/4π)(1 − η²)/(1 + η² − 2ημ)^{3/2}, |η| < 1.
    HenyeyGreenstein { eta: f64 },
}

impl PhaseFunction {
    pub fn henyey_greenstein(eta: f64) -> Result<Self> {
        if !(eta > -1.0 && eta < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "anisotropy factor η = {eta} must satisfy η ∈ (−1,1)"
            )));
        }
        Ok(Self::HenyeyGreenstein { eta })
    }

    pub fn linear_anisotropic(b: f64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&b) {
            return Err(Error::InvalidArgument(format!(
                "linear anisotropy coefficient b = {b} must satisfy |b| ≤ 1"
            )));
        }
        Ok(Self::LinearAnisotropic { b })
    }

    /// Kernel value as a function of the scattering cosine.
    #[inline]
    pub fn eval_cos(&self, mu: f64) -> f64 {
        match *self {
            Self::Isotropic => INV_4PI,
            Self::LinearAnisotropic { b } => (1.0 + b * mu) * INV_4PI,
            Self::HenyeyGreenstein { eta } => {
                let d = 1.0 + eta * eta - 2.0 * eta * mu;
                INV_4PI * (1.0 - eta * eta) / (d * d.sqrt())
            }
        }
    }

    /// Φ(s, s′) for unit directions.
    pub fn eval(&self, s: Vec3, s_prime: Vec3) -> Result<f64> {
        crate::geometry::check_unit(s, 1e-10)?;
        crate::geometry::check_unit(s_prime, 1e-10)?;
        Ok(self.eval_cos(dot(s, s_prime).clamp(-1.0, 1.0)))
    }

    /// Mean scattering cosine ∫ Φ(μ) μ ds′.
    pub fn mean_cosine(&self) -> f64 {
        match *self {
            Self::Isotropic => 0.0,
            Self::LinearAnisotropic { b } => b / 3.0,
            Self::HenyeyGreenstein { eta } => eta,
        }
    }
}

/// Total and scattering coefficients, constant in space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CrossSections {
    pub sigma_t: f64,
    pub sigma_s: f64,
}

impl CrossSections {
    pub fn new(sigma_t: f64, sigma_s: f64) -> Result<Self> {
        if !(sigma_s >= 0.0) || !(sigma_t >= sigma_s) || !sigma_t.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "need 0 ≤ σ_s ≤ σ_τ, got σ_τ = {sigma_t}, σ_s = {sigma_s}"
            )));
        }
        let cs = Self { sigma_t, sigma_s };
        if let Some(w) = cs.warning() {
            log::warn!("{w}");
        }
        Ok(cs)
    }

    /// Absorption coefficient σ_a = σ_τ − σ_s.
    pub fn sigma_a(&self) -> f64 {
        self.sigma_t - self.sigma_s
    }

    /// The stability analysis assumes σ_a ≥ 1/8; smaller values run but are
    /// flagged.
    pub fn warning(&self) -> Option<String> {
        (self.sigma_a() < 0.125).then(|| {
            format!(
                "absorption σ_a = {} is below 1/8; stability estimates do not cover this case",
                self.sigma_a()
            )
        })
    }
}

/// Diagonal DG(0) mass matrix, M¹_ii = |K_i|.
pub fn assemble_angular_mass(mesh: &AngularMesh) -> Vec<f64> {
    mesh.areas()
}

/// Dense scattering matrix M²_ij = Φ(s_i, s_j)|K_i||K_j|, stored row-major
/// in an `nalgebra` matrix.
pub fn assemble_scattering_matrix(mesh: &AngularMesh, phase: &PhaseFunction) -> DMatrix<f64> {
    let c = mesh.centers();
    let a = mesh.areas();
    let n = c.len();
    let mut m2 = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = phase.eval_cos(dot(c[i], c[j]).clamp(-1.0, 1.0)) * a[i] * a[j];
            m2[(i, j)] = v;
            m2[(j, i)] = v;
        }
    }
    m2
}

/// (Kv)_i = Σ_j Φ(s_i, s_j) v_j |K_j|.
pub fn apply_scattering(mesh: &AngularMesh, phase: &PhaseFunction, v: &[f64]) -> Result<Vec<f64>> {
    if v.len() != mesh.len() {
        return Err(Error::InvalidArgument(format!(
            "vector of length {} for {} angular cells",
            v.len(),
            mesh.len()
        )));
    }
    let c = mesh.centers();
    let a = mesh.areas();
    Ok((0..c.len())
        .map(|i| {
            (0..c.len())
                .map(|j| phase.eval_cos(dot(c[i], c[j]).clamp(-1.0, 1.0)) * v[j] * a[j])
                .sum()
        })
        .collect())
}

/// M_s = (1 + Δt σ_τ) M¹ − Δt σ_s M², unfactored.
pub fn step1_matrix(m1: &[f64], m2: &DMatrix<f64>, cs: &CrossSections, dt: f64) -> DMatrix<f64> {
    let mut ms = m2 * (-dt * cs.sigma_s);
    for i in 0..m1.len() {
        ms[(i, i)] += (1.0 + dt * cs.sigma_t) * m1[i];
    }
    ms
}

/// Factors the Step-1 matrix for time step `dt`.
pub fn build_step1_system(
    m1: &[f64],
    m2: &DMatrix<f64>,
    cs: &CrossSections,
    dt: f64,
) -> Result<DenseFactorization> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
    }
    dense_factor(step1_matrix(m1, m2, cs, dt))
}

/// Angular operators for one mesh, phase function and time step.
#[derive(Clone, Debug)]
pub struct AngularOperators {
    pub m1: Vec<f64>,
    pub m2: DMatrix<f64>,
    pub cross_sections: CrossSections,
    pub dt: f64,
    step1: DenseFactorization,
}

impl AngularOperators {
    pub fn assemble(mesh: &AngularMesh, phase: &PhaseFunction, cs: CrossSections, dt: f64) -> Result<Self> {
        let m1 = assemble_angular_mass(mesh);
        let m2 = assemble_scattering_matrix(mesh, phase);
        let step1 = build_step1_system(&m1, &m2, &cs, dt)?;
        Ok(Self {
            m1,
            m2,
            cross_sections: cs,
            dt,
            step1,
        })
    }

    pub fn len(&self) -> usize {
        self.m1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m1.is_empty()
    }

    pub fn step1(&self) -> &DenseFactorization {
        &self.step1
    }

    /// ‖v‖²_{M¹} = Σ |K_i| v_i².
    pub fn mass_norm_sq(&self, v: &[f64]) -> f64 {
        self.m1.iter().zip(v).map(|(m, x)| m * x * x).sum()
    }

    /// ũ = M_s⁻¹ M¹ u for a single angular vector.
    pub fn solve_step1(&self, u: &[f64]) -> Result<Vec<f64>> {
        let rhs: Vec<f64> = self.m1.iter().zip(u).map(|(m, x)| m * x).collect();
        self.step1.solve(&rhs)
    }

    /// Largest deviation of the discrete kernel row sums Σ_j M²_ij/|K_i| from
    /// one.
    pub fn normalization_defect(&self) -> f64 {
        (0..self.len())
            .map(|i| (self.m2.row(i).sum() / self.m1[i] - 1.0).abs())
            .fold(0.0, f64::max)
    }
}
