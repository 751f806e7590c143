//! The split time loop.
//!
//! One backward Euler step from t^n to t^{n+1}:
//!
//! 1. angular step, per spatial node k: M_s ũ_k = M¹ u_k;
//! 2. transpose to direction-major storage;
//! 3. transport step, per direction ℓ:
//!    (M + Mδ + Δt(A + Aδ)) u_ℓ = Δt(F + Fδ)(t^{n+1}) + (M + Mδ) P_ℓ ũ_ℓ,
//!    where P_ℓ zeroes the inflow entries and inflow rows are unit rows;
//! 4. transpose back.
//!
//! [`monolithic_reference_solve`] discretizes the same problem without
//! splitting and serves as the oracle for the splitting error.

use std::io::Write;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::angular_mesh::AngularMesh;
use crate::geometry::Vec3;
use crate::linalg::{CsrMatrix, SparseSystem, DEFAULT_TOL};
use crate::par;
use crate::scattering::{AngularOperators, CrossSections, PhaseFunction};
use crate::spatial_mesh::{DirectionBoundary, SpatialMesh};
use crate::transport_assembly::{
    assemble_load, assemble_spatial_components, compose_step2_matrix, SpatialComponents,
    StabilizationPolicy,
};
use crate::{Error, Result};

/// Source term f(x, s, t).
pub type SourceFn = Arc<dyn Fn(Vec3, Vec3, f64) -> f64 + Send + Sync>;
/// Initial condition u₀(x, s).
pub type InitialFn = Arc<dyn Fn(Vec3, Vec3) -> f64 + Send + Sync>;

/// Largest N_s·N_x accepted by [`monolithic_reference_solve`].
pub const MONOLITHIC_GUARD: usize = 10_000;

/// Storage order of a [`SolutionField`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    /// `data[k * n_s + i]`: the angular vector of each spatial node is contiguous.
    AngularMajor,
    /// `data[i * n_x + k]`: the spatial vector of each direction is contiguous.
    SpatialMajor,
}

/// Coefficients u_{ik} of a function in W_h ⊗ V_h.
#[derive(Clone, Debug, PartialEq)]
pub struct SolutionField {
    n_s: usize,
    n_x: usize,
    layout: Layout,
    data: Vec<f64>,
}

impl SolutionField {
    pub fn zeros(n_s: usize, n_x: usize, layout: Layout) -> Self {
        Self {
            n_s,
            n_x,
            layout,
            data: vec![0.0; n_s * n_x],
        }
    }

    pub fn from_fn(n_s: usize, n_x: usize, layout: Layout, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut field = Self::zeros(n_s, n_x, layout);
        for i in 0..n_s {
            for k in 0..n_x {
                let idx = field.index(i, k);
                field.data[idx] = f(i, k);
            }
        }
        field
    }

    pub fn from_vec(n_s: usize, n_x: usize, layout: Layout, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_s * n_x {
            return Err(Error::InvalidArgument(format!(
                "{} coefficients for a {n_s}x{n_x} field",
                data.len()
            )));
        }
        Ok(Self {
            n_s,
            n_x,
            layout,
            data,
        })
    }

    pub fn n_s(&self) -> usize {
        self.n_s
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn index(&self, i: usize, k: usize) -> usize {
        match self.layout {
            Layout::AngularMajor => k * self.n_s + i,
            Layout::SpatialMajor => i * self.n_x + k,
        }
    }

    /// Coefficient of angular cell `i` and spatial node `k`.
    #[inline]
    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.data[self.index(i, k)]
    }

    /// Spatial vector of direction `i` (spatial-major only).
    pub fn direction(&self, i: usize) -> &[f64] {
        assert_eq!(self.layout, Layout::SpatialMajor);
        &self.data[i * self.n_x..(i + 1) * self.n_x]
    }

    /// Angular vector at node `k` (angular-major only).
    pub fn node(&self, k: usize) -> &[f64] {
        assert_eq!(self.layout, Layout::AngularMajor);
        &self.data[k * self.n_s..(k + 1) * self.n_s]
    }

    fn expect(&self, layout: Layout) -> Result<()> {
        if self.layout != layout {
            return Err(Error::Layout {
                expected: layout,
                found: self.layout,
            });
        }
        Ok(())
    }

    /// Same coefficients in the other storage order.
    pub fn transpose_layout(&self) -> Self {
        let (rows, cols) = match self.layout {
            Layout::AngularMajor => (self.n_x, self.n_s),
            Layout::SpatialMajor => (self.n_s, self.n_x),
        };
        let mut data = vec![0.0; self.data.len()];
        for r in 0..rows {
            for c in 0..cols {
                data[c * rows + r] = self.data[r * cols + c];
            }
        }
        let layout = match self.layout {
            Layout::AngularMajor => Layout::SpatialMajor,
            Layout::SpatialMajor => Layout::AngularMajor,
        };
        Self {
            n_s: self.n_s,
            n_x: self.n_x,
            layout,
            data,
        }
    }

    /// Writes a metadata header and `k i value` rows.
    pub fn write_dump<W: Write>(&self, mut w: W, angular_level: usize, spatial_n: usize, time: f64) -> std::io::Result<()> {
        writeln!(
            w,
            "# field angular_level={angular_level} spatial_n={spatial_n} n_s={} n_x={} t={time}",
            self.n_s, self.n_x
        )?;
        for k in 0..self.n_x {
            for i in 0..self.n_s {
                writeln!(w, "{k} {i} {:.17e}", self.get(i, k))?;
            }
        }
        Ok(())
    }
}

/// Discrete problem definition.
#[derive(Clone)]
pub struct ModelProblem {
    pub angular_level: usize,
    /// Spatial vertices per axis.
    pub spatial_n: usize,
    pub cross_sections: CrossSections,
    pub phase: PhaseFunction,
    pub source: SourceFn,
    pub initial: InitialFn,
    pub final_time: f64,
    pub dt: f64,
    pub policy: StabilizationPolicy,
}

impl std::fmt::Debug for ModelProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelProblem")
            .field("angular_level", &self.angular_level)
            .field("spatial_n", &self.spatial_n)
            .field("cross_sections", &self.cross_sections)
            .field("phase", &self.phase)
            .field("final_time", &self.final_time)
            .field("dt", &self.dt)
            .field("policy", &self.policy)
            .finish_non_exhaustive()
    }
}

impl ModelProblem {
    /// Checks the time-step bounds and returns the number of steps.
    pub fn validate(&self) -> Result<usize> {
        if !(self.dt > 0.0) {
            return Err(Error::Config(format!("time step Δt = {} must be positive", self.dt)));
        }
        if self.dt > 0.5 {
            return Err(Error::Config(format!(
                "time step violates Δt ≤ 1/2: Δt = {}",
                self.dt
            )));
        }
        if !(self.final_time > 0.0) {
            return Err(Error::Config(format!("final time T = {} must be positive", self.final_time)));
        }
        let steps = (self.final_time / self.dt).round();
        if (steps * self.dt - self.final_time).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "Δt = {} does not divide T = {}",
                self.dt, self.final_time
            )));
        }
        Ok(steps as usize)
    }
}

/// Linear solver settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    /// Relative residual target of each Step-2 solve.
    pub tol: f64,
    /// Keep each direction's Step-2 matrix and preconditioner for the whole run.
    pub cache_factorizations: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            cache_factorizations: true,
        }
    }
}

/// Per-step record.
#[derive(Clone, Debug, PartialEq)]
pub struct StepDiagnostics {
    pub step: usize,
    pub time: f64,
    /// ‖u^n‖₀.
    pub norm: f64,
    /// ‖ũ^n‖₀ after the angular step.
    pub intermediate_norm: f64,
    /// Largest relative residual over the Step-2 solves.
    pub residual: f64,
    pub iterations: usize,
    /// ‖f(t^n)‖²₀ from the load quadrature.
    pub source_norm_sq: f64,
}

impl StepDiagnostics {
    /// `step t ‖u‖_L2 ‖residual_check‖`.
    pub fn line(&self) -> String {
        format!("{} {:.6} {:.10e} {:.3e}", self.step, self.time, self.norm, self.residual)
    }
}

/// Result of [`SplittingSolver::run`].
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub initial_norm: f64,
    pub diagnostics: Vec<StepDiagnostics>,
    pub final_field: SolutionField,
}

impl RunOutput {
    /// Checks, for every step n,
    /// ‖u^n‖² ≤ e^{2T}(‖u⁰‖² + 2Δt(1 + 4δΔt) Σ_{m<n} ‖f^{m+1}‖²).
    /// Returns the first violating step, if any.
    pub fn stability_violation(&self, dt: f64, delta: f64) -> Option<usize> {
        let mut acc = 0.0;
        let t_final = self.diagnostics.last().map_or(0.0, |d| d.time);
        let growth = (2.0 * t_final).exp();
        for d in &self.diagnostics {
            acc += d.source_norm_sq;
            let bound = growth * (self.initial_norm.powi(2) + 2.0 * dt * (1.0 + 4.0 * delta * dt) * acc);
            if d.norm * d.norm > bound * (1.0 + 1e-12) {
                return Some(d.step);
            }
        }
        None
    }

    pub fn write_diagnostics<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# step t norm_l2 residual")?;
        for d in &self.diagnostics {
            writeln!(w, "{}", d.line())?;
        }
        Ok(())
    }
}

struct DirectionCache {
    system: SparseSystem,
}

/// Assembled operators and the split time loop for one [`ModelProblem`].
pub struct SplittingSolver {
    problem: ModelProblem,
    options: SolverOptions,
    steps: usize,
    angular_mesh: AngularMesh,
    spatial_mesh: SpatialMesh,
    directions: Vec<Vec3>,
    angular: AngularOperators,
    spatial: SpatialComponents,
    boundaries: Vec<DirectionBoundary>,
    cache: Option<Vec<DirectionCache>>,
}

impl SplittingSolver {
    /// Validates the problem, builds both meshes and assembles every
    /// time-independent operator.
    pub fn new(problem: ModelProblem, options: SolverOptions) -> Result<Self> {
        let steps = problem.validate()?;
        let spatial_mesh = SpatialMesh::build(problem.spatial_n)?;
        problem.policy.validate(&spatial_mesh, problem.dt)?;
        let angular_mesh = AngularMesh::build(problem.angular_level)?;
        let angular = AngularOperators::assemble(&angular_mesh, &problem.phase, problem.cross_sections, problem.dt)?;
        let spatial = assemble_spatial_components(&spatial_mesh, &problem.policy, problem.dt)?;
        let directions = angular_mesh.centers();
        let boundaries = directions
            .iter()
            .map(|&s| spatial_mesh.classify_boundary(s))
            .collect::<Result<Vec<_>>>()?;
        let cache = if options.cache_factorizations {
            let built = par::map_indices(directions.len(), |i| {
                let a = compose_step2_matrix(&spatial, &boundaries[i])?;
                Ok(DirectionCache {
                    system: SparseSystem::new(a)?,
                })
            });
            Some(built.into_iter().collect::<Result<Vec<_>>>()?)
        } else {
            None
        };
        Ok(Self {
            problem,
            options,
            steps,
            angular_mesh,
            spatial_mesh,
            directions,
            angular,
            spatial,
            boundaries,
            cache,
        })
    }

    pub fn problem(&self) -> &ModelProblem {
        &self.problem
    }

    pub fn num_steps(&self) -> usize {
        self.steps
    }

    pub fn angular_mesh(&self) -> &AngularMesh {
        &self.angular_mesh
    }

    pub fn spatial_mesh(&self) -> &SpatialMesh {
        &self.spatial_mesh
    }

    pub fn angular_operators(&self) -> &AngularOperators {
        &self.angular
    }

    pub fn spatial_components(&self) -> &SpatialComponents {
        &self.spatial
    }

    pub fn boundaries(&self) -> &[DirectionBoundary] {
        &self.boundaries
    }

    /// Nodal interpolation in x, cell-center evaluation in s.
    pub fn initial_field(&self) -> SolutionField {
        let u0 = &self.problem.initial;
        let nodes = self.spatial_mesh.nodes();
        SolutionField::from_fn(self.directions.len(), nodes.len(), Layout::AngularMajor, |i, k| {
            u0(nodes[k], self.directions[i])
        })
    }

    /// ‖u_h‖²₀ = Σ_i |K_i| u_iᵀ M u_i, exact for u_h ∈ W_h ⊗ V_h.
    pub fn norm_sq(&self, field: &SolutionField) -> f64 {
        let owned;
        let f = if field.layout == Layout::SpatialMajor {
            field
        } else {
            owned = field.transpose_layout();
            &owned
        };
        (0..f.n_s)
            .map(|i| self.angular.m1[i] * self.spatial.mass_norm_sq(f.direction(i)))
            .sum()
    }

    /// Step 1: ũ_k = M_s⁻¹ M¹ u_k at every spatial node.
    pub fn angular_sweep(&self, field: &SolutionField) -> Result<SolutionField> {
        field.expect(Layout::AngularMajor)?;
        let n_s = field.n_s;
        let mut data = field.data.clone();
        let failed = AtomicBool::new(false);
        let lu = self.angular.step1();
        let m1 = &self.angular.m1;
        let chunk_nodes = 64;
        par::for_each_chunk_mut(&mut data, n_s * chunk_nodes, |_, chunk| {
            let cols = chunk.len() / n_s;
            let mut b = DMatrix::from_column_slice(n_s, cols, chunk);
            for c in 0..cols {
                for i in 0..n_s {
                    b[(i, c)] *= m1[i];
                }
            }
            if lu.solve_columns(&mut b).is_err() {
                failed.store(true, Ordering::Relaxed);
            }
            chunk.copy_from_slice(b.as_slice());
        });
        if failed.load(Ordering::Relaxed) {
            return Err(Error::Numerical("angular step solve failed".into()));
        }
        Ok(SolutionField { data, ..field.clone() })
    }

    /// Step 2 at time `t_next`: one sparse solve per direction.
    pub fn transport_sweep(&self, field: &SolutionField, t_next: f64) -> Result<(SolutionField, SweepStats)> {
        field.expect(Layout::SpatialMajor)?;
        let n_x = field.n_x;
        let dt = self.problem.dt;
        let source = &self.problem.source;
        let results = par::map_indices(self.directions.len(), |i| -> Result<(Vec<f64>, SweepStats)> {
            let s = self.directions[i];
            let bd = &self.boundaries[i];
            let mut u_tilde = field.direction(i).to_vec();
            for &v in &bd.inflow_nodes {
                u_tilde[v] = 0.0;
            }
            let load = assemble_load(&self.spatial_mesh, &self.spatial, source.as_ref(), s, t_next, Some(bd));
            let mut rhs_values = Vec::new();
            self.spatial.rhs_values(s, &mut rhs_values);
            let mut rhs = vec![0.0; n_x];
            self.spatial.apply_pattern(&rhs_values, &u_tilde, &mut rhs);
            for (r, l) in rhs.iter_mut().zip(&load.values) {
                *r += dt * l;
            }
            for &v in &bd.inflow_nodes {
                rhs[v] = 0.0;
            }
            let owned;
            let system = match &self.cache {
                Some(c) => &c[i].system,
                None => {
                    owned = SparseSystem::new(compose_step2_matrix(&self.spatial, bd)?)?;
                    &owned
                }
            };
            let mut x = u_tilde;
            let stats = system
                .solve_into(&rhs, &mut x, self.options.tol)
                .map_err(|e| Error::Numerical(format!("transport solve for direction {i}: {e}")))?;
            Ok((
                x,
                SweepStats {
                    max_residual: stats.relative_residual,
                    iterations: stats.iterations,
                    source_norm_sq: self.angular.m1[i] * load.source_norm_sq,
                },
            ))
        });
        let mut out = SolutionField::zeros(field.n_s, n_x, Layout::SpatialMajor);
        let mut total = SweepStats::default();
        for (i, r) in results.into_iter().enumerate() {
            let (x, st) = r?;
            out.data[i * n_x..(i + 1) * n_x].copy_from_slice(&x);
            total.max_residual = total.max_residual.max(st.max_residual);
            total.iterations += st.iterations;
            total.source_norm_sq += st.source_norm_sq;
        }
        Ok((out, total))
    }

    /// One full split step from `t` (angular-major in and out).
    pub fn advance(&self, field: &SolutionField, step: usize) -> Result<(SolutionField, StepDiagnostics)> {
        let t_next = step as f64 * self.problem.dt;
        let tilde = self.angular_sweep(field)?.transpose_layout();
        let intermediate_norm = self.norm_sq(&tilde).sqrt();
        let (next, stats) = self.transport_sweep(&tilde, t_next)?;
        let norm = self.norm_sq(&next).sqrt();
        Ok((
            next.transpose_layout(),
            StepDiagnostics {
                step,
                time: t_next,
                norm,
                intermediate_norm,
                residual: stats.max_residual,
                iterations: stats.iterations,
                source_norm_sq: stats.source_norm_sq,
            },
        ))
    }

    pub fn run(&self) -> Result<RunOutput> {
        self.run_with_observer(|_, _, _| {})
    }

    /// Runs all steps, calling `observer(step, t, field)` after each one.
    pub fn run_with_observer(&self, mut observer: impl FnMut(usize, f64, &SolutionField)) -> Result<RunOutput> {
        let mut field = self.initial_field();
        let initial_norm = self.norm_sq(&field).sqrt();
        let mut diagnostics = Vec::with_capacity(self.steps);
        for step in 1..=self.steps {
            let (next, d) = self.advance(&field, step)?;
            log::debug!("{}", d.line());
            observer(step, d.time, &next);
            diagnostics.push(d);
            field = next;
        }
        Ok(RunOutput {
            initial_norm,
            diagnostics,
            final_field: field,
        })
    }
}

/// Aggregate statistics of one transport sweep.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SweepStats {
    pub max_residual: f64,
    pub iterations: usize,
    /// Σ_ℓ |K_ℓ| ‖f(·, s_ℓ)‖²_{L²(Ω)}.
    pub source_norm_sq: f64,
}

/// Unsplit backward Euler on the full tensor system with the same element
/// matrices. Returns the field after every step (angular-major), starting
/// with the initial field.
pub fn monolithic_reference_solve(problem: &ModelProblem, tol: f64) -> Result<Vec<SolutionField>> {
    let steps = problem.validate()?;
    let amesh = AngularMesh::build(problem.angular_level)?;
    let smesh = SpatialMesh::build(problem.spatial_n)?;
    let (n_s, n_x) = (amesh.len(), smesh.num_nodes());
    if n_s * n_x > MONOLITHIC_GUARD {
        return Err(Error::ResourceLimit(format!(
            "monolithic system of size {} exceeds {MONOLITHIC_GUARD}",
            n_s * n_x
        )));
    }
    let dt = problem.dt;
    let cs = problem.cross_sections;
    let ang = AngularOperators::assemble(&amesh, &problem.phase, cs, dt)?;
    let comp = assemble_spatial_components(&smesh, &problem.policy, dt)?;
    let dirs = amesh.centers();
    let bds = dirs
        .iter()
        .map(|&s| smesh.classify_boundary(s))
        .collect::<Result<Vec<_>>>()?;

    // R = M¹⁻¹(σ_τ M¹ − σ_s M²)
    let r = DMatrix::from_fn(n_s, n_s, |i, j| {
        (if i == j { cs.sigma_t } else { 0.0 }) - cs.sigma_s * ang.m2[(i, j)] / ang.m1[i]
    });
    let n = n_s * n_x;
    let mut trip = Vec::new();
    let mut rhs_ops: Vec<CsrMatrix> = Vec::with_capacity(n_s);
    for i in 0..n_s {
        let s = dirs[i];
        let b = comp.rhs_matrix(s);
        let sys = comp.step2_matrix_unconstrained(s);
        let bd = &bds[i];
        for m in 0..n_x {
            let row = i * n_x + m;
            if bd.is_inflow[m] {
                trip.push((row, row, 1.0));
                continue;
            }
            for p in sys.row_ptr()[m]..sys.row_ptr()[m + 1] {
                let l = sys.col_idx()[p];
                trip.push((row, i * n_x + l, sys.values()[p]));
                if bd.is_inflow[l] {
                    continue;
                }
                let bml = b.values()[p];
                for j in 0..n_s {
                    let c = dt * r[(i, j)] * bml;
                    if c != 0.0 {
                        trip.push((row, j * n_x + l, c));
                    }
                }
            }
        }
        rhs_ops.push(b);
    }
    let system = SparseSystem::new(CsrMatrix::from_triplets(n, &trip)?)?;

    let nodes = smesh.nodes();
    let mut u = SolutionField::from_fn(n_s, n_x, Layout::SpatialMajor, |i, k| (problem.initial)(nodes[k], dirs[i]));
    let mut history = vec![u.transpose_layout()];
    for step in 1..=steps {
        let t = step as f64 * dt;
        let mut rhs = vec![0.0; n];
        for i in 0..n_s {
            let load = assemble_load(&smesh, &comp, problem.source.as_ref(), dirs[i], t, Some(&bds[i]));
            let mut prev = u.direction(i).to_vec();
            for &v in &bds[i].inflow_nodes {
                prev[v] = 0.0;
            }
            let bu = rhs_ops[i].mul(&prev);
            for m in 0..n_x {
                rhs[i * n_x + m] = if bds[i].is_inflow[m] { 0.0 } else { bu[m] + dt * load.values[m] };
            }
        }
        let mut x = u.data.clone();
        system.solve_into(&rhs, &mut x, tol)?;
        u = SolutionField::from_vec(n_s, n_x, Layout::SpatialMajor, x)?;
        history.push(u.transpose_layout());
    }
    Ok(history)
}
