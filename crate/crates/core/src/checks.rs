//! Invariant suite: geometry, operator and stability properties that must hold
//! for any correct build. Each check is also callable on its own.

use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::angular_mesh::AngularMesh;
use crate::geometry::{normalize, Vec3};
use crate::scattering::{assemble_scattering_matrix, AngularOperators, CrossSections, PhaseFunction};
use crate::solver::{monolithic_reference_solve, Layout, SolutionField, SolverOptions, SplittingSolver};
use crate::spatial_mesh::SpatialMesh;
use crate::transport_assembly::{assemble_convection_direct, assemble_spatial_components, StabilizationPolicy};
use crate::verification::ManufacturedCase;
use crate::Result;

/// Deliberate corruption of an assembled operator, used to confirm the
/// suite detects it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mutation {
    /// Negate convection component a (0, 1 or 2).
    FlipConvectionComponent(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CheckReport {
    pub results: Vec<CheckResult>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn failed(&self) -> impl Iterator<Item = &CheckResult> {
        self.results.iter().filter(|r| !r.passed)
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.results {
            writeln!(f, "[{}] {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail)?;
        }
        Ok(())
    }
}

fn reference_cs() -> CrossSections {
    CrossSections {
        sigma_t: 2.0,
        sigma_s: 0.5,
    }
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    let z: f64 = rng.gen_range(-1.0..1.0);
    let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let r = (1.0 - z * z).sqrt();
    normalize([r * phi.cos(), r * phi.sin(), z])
}

pub fn check_area_sums() -> Result<CheckResult> {
    let mut worst: f64 = 0.0;
    for level in 0..=4 {
        let m = AngularMesh::build(level)?;
        worst = worst.max((m.total_area() - 4.0 * std::f64::consts::PI).abs());
    }
    Ok(CheckResult {
        name: "angular-area-sum",
        passed: worst < 1e-10,
        detail: format!("max |Σ|K_i| − 4π| over levels 0–4 = {worst:.2e}"),
    })
}

/// Row-sum defects of the discrete Henyey–Greenstein kernel (η = 0.5) at
/// levels 1–4.
pub fn normalization_defects() -> Result<Vec<f64>> {
    let p = PhaseFunction::henyey_greenstein(0.5)?;
    (2..=4)
        .map(|l| Ok(AngularOperators::assemble(&AngularMesh::build(l)?, &p, reference_cs(), 0.5)?.normalization_defect()))
        .collect()
}

pub fn check_kernel_normalization() -> Result<CheckResult> {
    let d = normalization_defects()?;
    let ratios: Vec<f64> = d.windows(2).map(|w| w[0] / w[1]).collect();
    let lin = AngularOperators::assemble(
        &AngularMesh::build(2)?,
        &PhaseFunction::LinearAnisotropic { b: 1.0 },
        reference_cs(),
        0.5,
    )?
    .normalization_defect();
    Ok(CheckResult {
        name: "kernel-normalization",
        passed: ratios.iter().all(|r| (3.0..=5.0).contains(r)) && lin < 1e-12,
        detail: format!("HG defects [{}], ratios {ratios:.2?}; linear kernel defect {lin:.1e}", sci(&d)),
    })
}

pub fn check_scattering_symmetry() -> Result<CheckResult> {
    let m = AngularMesh::build(3)?;
    let mut worst: f64 = 0.0;
    for p in [PhaseFunction::LinearAnisotropic { b: 1.0 }, PhaseFunction::henyey_greenstein(0.5)?] {
        let m2 = assemble_scattering_matrix(&m, &p);
        worst = worst.max((&m2 - m2.transpose()).amax());
    }
    Ok(CheckResult {
        name: "scattering-symmetry",
        passed: worst < 1e-12,
        detail: format!("max |M² − M²ᵀ| = {worst:.2e}"),
    })
}

/// Largest composed-versus-direct convection difference over `count` random
/// directions.
pub fn component_split_error(mutation: Option<Mutation>, count: usize) -> Result<f64> {
    let mesh = SpatialMesh::build(3)?;
    let mut comp = assemble_spatial_components(&mesh, &StabilizationPolicy::default(), 0.5)?;
    if let Some(Mutation::FlipConvectionComponent(a)) = mutation {
        comp.convection[a].iter_mut().for_each(|v| *v = -*v);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let s = random_unit(&mut rng);
        let a = comp.convection_matrix(s).to_dense();
        let b = assemble_convection_direct(&mesh, s).to_dense();
        worst = worst.max((a - b).amax());
    }
    Ok(worst)
}

pub fn check_component_split(mutation: Option<Mutation>) -> Result<CheckResult> {
    let worst = component_split_error(mutation, 100)?;
    Ok(CheckResult {
        name: "component-split",
        passed: worst < 1e-13,
        detail: format!("max |Σ s_a A_a − A(s)| over 100 directions = {worst:.2e}"),
    })
}

/// Step-1 decay per node and the f = 0 Step-2 growth bound on random states.
pub fn check_step_stability() -> Result<CheckResult> {
    let case = ManufacturedCase::zero(reference_cs());
    let mut problem = case.problem_with(1, 4, 1.0 / 3.0, 1.0, StabilizationPolicy::default());
    problem.phase = PhaseFunction::henyey_greenstein(0.5)?;
    let solver = SplittingSolver::new(problem, SolverOptions::default())?;
    let (n_s, n_x, dt) = (solver.angular_mesh().len(), solver.spatial_mesh().num_nodes(), 1.0 / 3.0);
    let ops = solver.angular_operators();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let (mut decay_fail, mut growth_worst) = (0usize, 0.0f64);
    for trial in 0..100 {
        let u = SolutionField::from_fn(n_s, n_x, Layout::AngularMajor, |_, _| rng.gen_range(-1.0..1.0));
        let ut = solver.angular_sweep(&u)?;
        decay_fail += (0..n_x)
            .filter(|&k| ops.mass_norm_sq(ut.node(k)) > ops.mass_norm_sq(u.node(k)))
            .count();
        if trial < 20 {
            let tilde = ut.transpose_layout();
            let (next, _) = solver.transport_sweep(&tilde, dt)?;
            growth_worst = growth_worst.max(solver.norm_sq(&next) / solver.norm_sq(&tilde));
        }
    }
    Ok(CheckResult {
        name: "step-stability",
        passed: decay_fail == 0 && growth_worst <= 1.0 + 2.0 * dt,
        detail: format!(
            "Step-1 decay violations {decay_fail}; max ‖u‖²/‖ũ‖² = {growth_worst:.4} ≤ {:.4}",
            1.0 + 2.0 * dt
        ),
    })
}

/// ‖split − monolithic‖₀ at T = 1 for Example 1 data on N_s = 12, N_x = 27.
pub fn splitting_differences(dts: &[f64]) -> Result<Vec<f64>> {
    let case = ManufacturedCase::example1(reference_cs());
    dts.iter()
        .map(|&dt| {
            let problem = case.problem_with(0, 3, dt, 1.0, StabilizationPolicy::default());
            let mono = monolithic_reference_solve(&problem, 1e-13)?;
            let solver = SplittingSolver::new(
                problem,
                SolverOptions {
                    tol: 1e-13,
                    ..Default::default()
                },
            )?;
            let split = solver.run()?.final_field;
            let last = mono.last().expect("history has the initial field");
            let diff = SolutionField::from_fn(split.n_s(), split.n_x(), Layout::AngularMajor, |i, k| {
                split.get(i, k) - last.get(i, k)
            });
            Ok(solver.norm_sq(&diff).sqrt())
        })
        .collect()
}

pub fn check_splitting_consistency() -> Result<CheckResult> {
    let start = Instant::now();
    let d = splitting_differences(&[0.25, 0.125, 0.0625])?;
    let ratios: Vec<f64> = d.windows(2).map(|w| w[0] / w[1]).collect();
    Ok(CheckResult {
        name: "splitting-consistency",
        passed: ratios.iter().all(|r| (1.5..=2.5).contains(r)),
        detail: format!(
            "‖split − monolithic‖ = [{}], ratios {ratios:.3?} ({:.1} s)",
            sci(&d),
            start.elapsed().as_secs_f64()
        ),
    })
}

/// Runs every check, applying `mutation` where it is relevant.
pub fn run_checks(mutation: Option<Mutation>) -> Result<CheckReport> {
    Ok(CheckReport {
        results: vec![
            check_area_sums()?,
            check_kernel_normalization()?,
            check_scattering_symmetry()?,
            check_component_split(mutation)?,
            check_step_stability()?,
            check_splitting_consistency()?,
        ],
    })
}

fn sci(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(", ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn component_split_detects_sign_flip() {
        assert!(check_component_split(None).unwrap().passed);
        let r = check_component_split(Some(Mutation::FlipConvectionComponent(1))).unwrap();
        assert!(!r.passed);
        assert_eq!(r.name, "component-split");
    }
}
