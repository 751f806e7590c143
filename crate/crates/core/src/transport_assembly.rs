//! Direction-independent spatial matrix components and per-direction Step-2
//! systems.
//!
//! Every matrix here lives on the P1 node-adjacency pattern of the mesh, with
//! rows indexed by the test function ψ_m and columns by the trial function
//! ψ_l. The direction-dependent matrices are stored as components,
//!
//! ```text
//! A(s)  = Σ_a s_a A_a                A_a[m,l]   = ∫ ∂_a ψ_l ψ_m
//! Mδ(s) = Σ_a s_a Mδ_a               Mδ_a[m,l]  = Σ_K δ_K (ψ_l, ∂_a ψ_m)_K
//! Aδ(s) = Σ_{a≤b} c_ab s_a s_b Aδ_ab Aδ_ab[m,l] = Σ_K δ_K (sym ∂_a ψ_l ∂_b ψ_m)_K
//! ```
//!
//! with c_aa = 1 and c_ab = 2 otherwise, so a Step-2 matrix for any direction
//! is a linear combination of value arrays on one shared pattern.

use crate::geometry::{check_unit, dot, Vec3};
use crate::linalg::CsrMatrix;
use crate::quadrature::{tet_degree2, TetPoint};
use crate::spatial_mesh::{DirectionBoundary, SpatialMesh};
use crate::{Error, Result};

/// Index pairs (a, b), a ≤ b, of the SUPG stiffness components.
pub const STIFF_PAIRS: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];

/// Rule producing the SUPG parameter δ_K of each tetrahedron.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StabilizationPolicy {
    /// δ_K = δ₀ · min(h_K, Δt).
    MinRule { delta0: f64 },
    /// δ_K = δ₀ · h_K, independent of the time step.
    Proportional { delta0: f64 },
    /// δ_K = 0.
    Off,
}

impl Default for StabilizationPolicy {
    fn default() -> Self {
        Self::MinRule { delta0: 0.25 }
    }
}

impl StabilizationPolicy {
    pub fn delta0(&self) -> f64 {
        match *self {
            Self::MinRule { delta0 } | Self::Proportional { delta0 } => delta0,
            Self::Off => 0.0,
        }
    }

    pub fn delta(&self, h_k: f64, dt: f64) -> f64 {
        match *self {
            Self::MinRule { delta0 } => delta0 * h_k.min(dt),
            Self::Proportional { delta0 } => delta0 * h_k,
            Self::Off => 0.0,
        }
    }

    /// Checks 0 ≤ δ_K ≤ δ₀h_K and δ_K ≤ Δt/4 on every cell.
    pub fn validate(&self, mesh: &SpatialMesh, dt: f64) -> Result<Vec<f64>> {
        if !(self.delta0() >= 0.0) {
            return Err(Error::Config(format!(
                "stabilization constant δ₀ = {} must be non-negative",
                self.delta0()
            )));
        }
        let mut deltas = Vec::with_capacity(mesh.tets().len());
        for t in mesh.tets() {
            let d = self.delta(t.diameter, dt);
            if d > self.delta0() * t.diameter * (1.0 + 1e-14) {
                return Err(Error::Config(format!(
                    "SUPG parameter violates 0 ≤ δ_K ≤ δ₀h: δ_K = {d} with h_K = {}",
                    t.diameter
                )));
            }
            if d > dt / 4.0 * (1.0 + 1e-14) {
                return Err(Error::Config(format!(
                    "SUPG parameter violates δ_K ≤ Δt/4: δ_K = {d} > {} (Δt = {dt})",
                    dt / 4.0
                )));
            }
            deltas.push(d);
        }
        Ok(deltas)
    }
}

/// Assembled direction-independent components for one mesh and time step.
#[derive(Clone, Debug)]
pub struct SpatialComponents {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    pub mass: Vec<f64>,
    pub convection: [Vec<f64>; 3],
    pub supg_mass: [Vec<f64>; 3],
    pub supg_stiffness: [Vec<f64>; 6],
    /// δ_K per tetrahedron.
    pub delta: Vec<f64>,
    pub dt: f64,
    load_rule: Vec<TetPoint>,
}

fn node_pattern(mesh: &SpatialMesh) -> (Vec<usize>, Vec<usize>) {
    let n = mesh.num_nodes();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for t in mesh.tets() {
        for &a in &t.nodes {
            adj[a].extend_from_slice(&t.nodes);
        }
    }
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::new();
    row_ptr.push(0);
    for mut row in adj {
        row.sort_unstable();
        row.dedup();
        col_idx.extend(row);
        row_ptr.push(col_idx.len());
    }
    (row_ptr, col_idx)
}

#[inline]
fn position(row_ptr: &[usize], col_idx: &[usize], i: usize, j: usize) -> usize {
    let cols = &col_idx[row_ptr[i]..row_ptr[i + 1]];
    row_ptr[i] + cols.binary_search(&j).expect("entry outside node pattern")
}

/// Assembles all components once; they are reused for every direction and
/// time step. Fails when the policy breaks a stability bound for `dt`.
pub fn assemble_spatial_components(
    mesh: &SpatialMesh,
    policy: &StabilizationPolicy,
    dt: f64,
) -> Result<SpatialComponents> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
    }
    let delta = policy.validate(mesh, dt)?;
    let (row_ptr, col_idx) = node_pattern(mesh);
    let nnz = col_idx.len();
    let zeros = || vec![0.0; nnz];
    let mut mass = zeros();
    let mut convection = [zeros(), zeros(), zeros()];
    let mut supg_mass = [zeros(), zeros(), zeros()];
    let mut supg_stiffness = [zeros(), zeros(), zeros(), zeros(), zeros(), zeros()];

    for (t, &d) in mesh.tets().iter().zip(&delta) {
        let v = t.volume;
        let g = &t.grads;
        for (bm, &m) in t.nodes.iter().enumerate() {
            for (al, &l) in t.nodes.iter().enumerate() {
                let p = position(&row_ptr, &col_idx, m, l);
                mass[p] += v / 20.0 * if al == bm { 2.0 } else { 1.0 };
                for a in 0..3 {
                    convection[a][p] += g[al][a] * v / 4.0;
                    supg_mass[a][p] += d * g[bm][a] * v / 4.0;
                }
                for (k, &(a, b)) in STIFF_PAIRS.iter().enumerate() {
                    supg_stiffness[k][p] += d * v * 0.5 * (g[al][a] * g[bm][b] + g[al][b] * g[bm][a]);
                }
            }
        }
    }

    Ok(SpatialComponents {
        n: mesh.num_nodes(),
        row_ptr,
        col_idx,
        mass,
        convection,
        supg_mass,
        supg_stiffness,
        delta,
        dt,
        load_rule: tet_degree2(),
    })
}

impl SpatialComponents {
    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn max_delta(&self) -> f64 {
        self.delta.iter().copied().fold(0.0, f64::max)
    }

    fn matrix(&self, values: Vec<f64>) -> CsrMatrix {
        CsrMatrix::from_parts(self.n, self.row_ptr.clone(), self.col_idx.clone(), values)
            .expect("node pattern is valid CSR")
    }

    pub fn mass_matrix(&self) -> CsrMatrix {
        self.matrix(self.mass.clone())
    }

    /// A(s) = Σ_a s_a A_a.
    pub fn convection_matrix(&self, s: Vec3) -> CsrMatrix {
        let mut v = vec![0.0; self.nnz()];
        for a in 0..3 {
            axpy(s[a], &self.convection[a], &mut v);
        }
        self.matrix(v)
    }

    /// Aδ(s) = Σ_{a≤b} c_ab s_a s_b Aδ_ab.
    pub fn supg_stiffness_matrix(&self, s: Vec3) -> CsrMatrix {
        let mut v = vec![0.0; self.nnz()];
        for (k, &(a, b)) in STIFF_PAIRS.iter().enumerate() {
            let c = if a == b { 1.0 } else { 2.0 };
            axpy(c * s[a] * s[b], &self.supg_stiffness[k], &mut v);
        }
        self.matrix(v)
    }

    /// Values of M + Mδ(s), the operator applied to ũ on the right-hand side.
    pub fn rhs_values(&self, s: Vec3, out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(&self.mass);
        for a in 0..3 {
            axpy(s[a], &self.supg_mass[a], out);
        }
    }

    pub fn rhs_matrix(&self, s: Vec3) -> CsrMatrix {
        let mut v = Vec::new();
        self.rhs_values(s, &mut v);
        self.matrix(v)
    }

    /// M + Mδ(s) + Δt(A(s) + Aδ(s)) without boundary conditions.
    pub fn step2_matrix_unconstrained(&self, s: Vec3) -> CsrMatrix {
        let mut v = Vec::new();
        self.rhs_values(s, &mut v);
        for a in 0..3 {
            axpy(self.dt * s[a], &self.convection[a], &mut v);
        }
        for (k, &(a, b)) in STIFF_PAIRS.iter().enumerate() {
            let c = if a == b { 1.0 } else { 2.0 };
            axpy(self.dt * c * s[a] * s[b], &self.supg_stiffness[k], &mut v);
        }
        self.matrix(v)
    }

    /// y = (M + Mδ(s)) x using precomposed values from [`Self::rhs_values`].
    pub fn apply_pattern(&self, values: &[f64], x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut acc = 0.0;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += values[p] * x[self.col_idx[p]];
            }
            y[i] = acc;
        }
    }

    /// ‖v‖²_{M} = vᵀ M v.
    pub fn mass_norm_sq(&self, v: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.n {
            let mut row = 0.0;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                row += self.mass[p] * v[self.col_idx[p]];
            }
            acc += v[i] * row;
        }
        acc
    }
}

#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    if a != 0.0 {
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi += a * xi;
        }
    }
}

/// Step-2 matrix M + Mδ(s) + Δt(A(s) + Aδ(s)) with the inflow rows of
/// `boundary` replaced by unit rows.
pub fn compose_step2_matrix(comp: &SpatialComponents, boundary: &DirectionBoundary) -> Result<CsrMatrix> {
    let s = boundary.direction;
    check_unit(s, 1e-10)?;
    if boundary.is_inflow.len() != comp.n {
        return Err(Error::InvalidArgument(
            "boundary classification belongs to a different mesh".into(),
        ));
    }
    let mut a = comp.step2_matrix_unconstrained(s);
    for &v in &boundary.inflow_nodes {
        a.set_identity_row(v);
    }
    Ok(a)
}

/// Load vector for one direction and time level.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadVector {
    /// F + Fδ with inflow entries zeroed.
    pub values: Vec<f64>,
    /// ∫_Ω f² dx from the same quadrature.
    pub source_norm_sq: f64,
}

/// F_m = ∫ f ψ_m and Fδ_m = Σ_K δ_K (f, s·∇ψ_m)_K with the four-point rule,
/// `f` evaluated at fixed (s, t).
pub fn assemble_load(
    mesh: &SpatialMesh,
    comp: &SpatialComponents,
    f: &dyn Fn(Vec3, Vec3, f64) -> f64,
    s: Vec3,
    t: f64,
    boundary: Option<&DirectionBoundary>,
) -> LoadVector {
    let mut values = vec![0.0; mesh.num_nodes()];
    let mut source_norm_sq = 0.0;
    for (tet, &d) in mesh.tets().iter().zip(&comp.delta) {
        let sg = [
            dot(s, tet.grads[0]),
            dot(s, tet.grads[1]),
            dot(s, tet.grads[2]),
            dot(s, tet.grads[3]),
        ];
        for (l, w) in &comp.load_rule {
            let x = mesh.map_point(tet, l);
            let fx = f(x, s, t);
            let wf = w * tet.volume * fx;
            source_norm_sq += wf * fx;
            for b in 0..4 {
                values[tet.nodes[b]] += wf * (l[b] + d * sg[b]);
            }
        }
    }
    if let Some(bd) = boundary {
        for &v in &bd.inflow_nodes {
            values[v] = 0.0;
        }
    }
    LoadVector {
        values,
        source_norm_sq,
    }
}

/// Reference path: assembles (s·∇ψ_l, ψ_m) for one direction directly from
/// the element gradients, without components.
pub fn assemble_convection_direct(mesh: &SpatialMesh, s: Vec3) -> CsrMatrix {
    let mut trip = Vec::with_capacity(16 * mesh.tets().len());
    for t in mesh.tets() {
        for &m in &t.nodes {
            for (al, &l) in t.nodes.iter().enumerate() {
                trip.push((m, l, dot(s, t.grads[al]) * t.volume / 4.0));
            }
        }
    }
    CsrMatrix::from_triplets(mesh.num_nodes(), &trip).expect("indices in range")
}

/// Reference path: the unconstrained Step-2 matrix for one direction,
/// assembled element by element.
pub fn assemble_step2_direct(mesh: &SpatialMesh, delta: &[f64], s: Vec3, dt: f64) -> CsrMatrix {
    let mut trip = Vec::with_capacity(16 * mesh.tets().len());
    for (t, &d) in mesh.tets().iter().zip(delta) {
        let v = t.volume;
        for (bm, &m) in t.nodes.iter().enumerate() {
            let sgm = dot(s, t.grads[bm]);
            for (al, &l) in t.nodes.iter().enumerate() {
                let sgl = dot(s, t.grads[al]);
                let mass = v / 20.0 * if al == bm { 2.0 } else { 1.0 };
                let val = mass + d * sgm * v / 4.0 + dt * (sgl * v / 4.0 + d * v * sgl * sgm);
                trip.push((m, l, val));
            }
        }
    }
    CsrMatrix::from_triplets(mesh.num_nodes(), &trip).expect("indices in range")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::normalize;
    use crate::quadrature::tet_degree4;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
        loop {
            let v = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let n = crate::geometry::norm(v);
            if n > 0.1 && n <= 1.0 {
                return normalize(v);
            }
        }
    }

    fn max_diff(a: &CsrMatrix, b: &CsrMatrix) -> f64 {
        let (da, db) = (a.to_dense(), b.to_dense());
        (da - db).amax()
    }

    #[test]
    fn mass_sums_to_volume_and_is_spd() {
        let mesh = SpatialMesh::build(3).unwrap();
        let comp = assemble_spatial_components(&mesh, &StabilizationPolicy::default(), 0.5).unwrap();
        assert!((comp.mass.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let m = comp.mass_matrix().to_dense();
        assert!((&m - m.transpose()).amax() < 1e-15);
        assert!(m.cholesky().is_some());
    }

    #[test]
    fn composed_convection_matches_direct_assembly() {
        let mesh = SpatialMesh::build(4).unwrap();
        let comp = assemble_spatial_components(&mesh, &StabilizationPolicy::default(), 1.0 / 3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let s = random_unit(&mut rng);
            assert!(max_diff(&comp.convection_matrix(s), &assemble_convection_direct(&mesh, s)) < 1e-13);
        }
        let z = [0.0, 0.0, 1.0];
        let direct = assemble_step2_direct(&mesh, &comp.delta, z, comp.dt);
        assert!(max_diff(&comp.step2_matrix_unconstrained(z), &direct) < 1e-13);
    }

    #[test]
    fn composed_step2_matches_direct_for_random_directions() {
        let mesh = SpatialMesh::build(3).unwrap();
        let comp = assemble_spatial_components(&mesh, &StabilizationPolicy::default(), 0.25).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let s = random_unit(&mut rng);
            let direct = assemble_step2_direct(&mesh, &comp.delta, s, comp.dt);
            assert!(max_diff(&comp.step2_matrix_unconstrained(s), &direct) < 1e-13);
        }
    }

    #[test]
    fn supg_stiffness_is_symmetric_psd() {
        let mesh = SpatialMesh::build(3).unwrap();
        let comp = assemble_spatial_components(&mesh, &StabilizationPolicy::default(), 0.5).unwrap();
        let s = normalize([0.2, -0.7, 0.4]);
        let a = comp.supg_stiffness_matrix(s).to_dense();
        assert!((&a - a.transpose()).amax() < 1e-15);
        let eig = a.symmetric_eigenvalues();
        assert!(eig.iter().all(|&e| e > -1e-14));
    }

    #[test]
    fn no_stabilization_reduces_to_galerkin() {
        let mesh = SpatialMesh::build(3).unwrap();
        let comp = assemble_spatial_components(&mesh, &StabilizationPolicy::Off, 0.5).unwrap();
        let s = normalize([1.0, 1.0, 1.0]);
        let expected = comp.mass_matrix().to_dense() + comp.convection_matrix(s).to_dense() * 0.5;
        assert!((comp.step2_matrix_unconstrained(s).to_dense() - expected).amax() < 1e-15);
    }

    #[test]
    fn inflow_rows_become_unit_rows() {
        let mesh = SpatialMesh::build(3).unwrap();
        let comp = assemble_spatial_components(&mesh, &StabilizationPolicy::default(), 0.5).unwrap();
        let bd = mesh.classify_boundary(normalize([0.3, -0.4, 0.8])).unwrap();
        let a = compose_step2_matrix(&comp, &bd).unwrap();
        for &v in &bd.inflow_nodes {
            for j in 0..27 {
                assert_eq!(a.get(v, j), if j == v { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn default_policy_satisfies_both_bounds() {
        let mesh = SpatialMesh::build(5).unwrap();
        let dt = mesh.h_x();
        let d = StabilizationPolicy::default().validate(&mesh, dt).unwrap();
        for (t, dk) in mesh.tets().iter().zip(&d) {
            assert!(*dk <= dt / 4.0 && *dk <= 0.25 * t.diameter && *dk >= 0.0);
        }
    }

    #[test]
    fn violating_policies_are_rejected_by_name() {
        let mesh = SpatialMesh::build(3).unwrap();
        let err = assemble_spatial_components(&mesh, &StabilizationPolicy::Proportional { delta0: 0.5 }, 0.25)
            .unwrap_err();
        assert!(err.to_string().contains("δ_K ≤ Δt/4"), "{err}");
        let err = StabilizationPolicy::MinRule { delta0: 0.3 }.validate(&mesh, 0.25).unwrap_err();
        assert!(err.to_string().contains("δ_K ≤ Δt/4"));
        assert!(StabilizationPolicy::MinRule { delta0: -0.1 }.validate(&mesh, 0.25).is_err());
    }

    #[test]
    fn loads_zero_and_unit_sources() {
        let mesh = SpatialMesh::build(3).unwrap();
        let comp = assemble_spatial_components(&mesh, &StabilizationPolicy::Off, 0.5).unwrap();
        let s = [0.0, 0.0, 1.0];
        let zero = assemble_load(&mesh, &comp, &|_, _, _| 0.0, s, 0.0, None);
        assert!(zero.values.iter().all(|&v| v == 0.0));
        let one = assemble_load(&mesh, &comp, &|_, _, _| 1.0, s, 0.0, None);
        assert!((one.values.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!((one.source_norm_sq - 1.0).abs() < 1e-14);
    }

    fn refined_load_oracle(
        mesh: &SpatialMesh,
        comp: &SpatialComponents,
        f: &dyn Fn(Vec3, Vec3, f64) -> f64,
        s: Vec3,
    ) -> Vec<f64> {
        // degree-4 rule on each tet split into 8 children
        let rule = tet_degree4();
        let mut oracle = vec![0.0; mesh.num_nodes()];
        for (tet, &d) in mesh.tets().iter().zip(&comp.delta) {
            for child in refine_barycentric() {
                for (lq, w) in &rule {
                    let mut l = [0.0; 4];
                    for (c, corner) in child.iter().enumerate() {
                        for k in 0..4 {
                            l[k] += lq[c] * corner[k];
                        }
                    }
                    let fx = f(mesh.map_point(tet, &l), s, 0.0);
                    for b in 0..4 {
                        oracle[tet.nodes[b]] += w / 8.0 * tet.volume * fx * (l[b] + d * dot(s, tet.grads[b]));
                    }
                }
            }
        }
        oracle
    }

    #[test]
    fn load_is_exact_for_linear_sources() {
        let mesh = SpatialMesh::build(3).unwrap();
        let comp = assemble_spatial_components(&mesh, &StabilizationPolicy::default(), 0.5).unwrap();
        let s = normalize([0.4, 0.1, -0.6]);
        let f = |x: Vec3, s: Vec3, t: f64| 1.0 + 2.0 * x[0] - x[1] + 0.5 * x[2] * s[2] + t;
        let load = assemble_load(&mesh, &comp, &f, s, 0.0, None);
        let oracle = refined_load_oracle(&mesh, &comp, &f, s);
        for m in 0..mesh.num_nodes() {
            assert!((load.values[m] - oracle[m]).abs() < 1e-13, "node {m}");
        }
    }

    #[test]
    fn load_matches_high_order_quadrature() {
        use crate::verification::ManufacturedCase;
        let mesh = SpatialMesh::build(9).unwrap();
        let comp = assemble_spatial_components(&mesh, &StabilizationPolicy::default(), 0.125).unwrap();
        let case = ManufacturedCase::example1(crate::scattering::CrossSections::new(2.0, 0.5).unwrap());
        let s = normalize([0.4, 0.1, -0.6]);
        let f = |x: Vec3, s: Vec3, t: f64| case.source(x, s, t);
        let load = assemble_load(&mesh, &comp, &f, s, 0.0, None);
        let oracle = refined_load_oracle(&mesh, &comp, &f, s);
        let scale = oracle.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for m in 0..mesh.num_nodes() {
            assert!(
                (load.values[m] - oracle[m]).abs() <= 1e-2 * scale,
                "node {m}: {} vs {}",
                load.values[m],
                oracle[m]
            );
        }
    }

    // Barycentric corners of the 8 children of a red-refined tet.
    fn refine_barycentric() -> Vec<[[f64; 4]; 4]> {
        let e = |i: usize| {
            let mut v = [0.0; 4];
            v[i] = 1.0;
            v
        };
        let mid = |i: usize, j: usize| {
            let mut v = [0.0; 4];
            v[i] = 0.5;
            v[j] = 0.5;
            v
        };
        let (m01, m02, m03, m12, m13, m23) = (mid(0, 1), mid(0, 2), mid(0, 3), mid(1, 2), mid(1, 3), mid(2, 3));
        vec![
            [e(0), m01, m02, m03],
            [m01, e(1), m12, m13],
            [m02, m12, e(2), m23],
            [m03, m13, m23, e(3)],
            [m01, m02, m03, m13],
            [m01, m02, m12, m13],
            [m02, m03, m13, m23],
            [m02, m12, m13, m23],
        ]
    }

    #[test]
    fn coercivity_witness_on_constrained_vectors() {
        let mesh = SpatialMesh::build(4).unwrap();
        let comp = assemble_spatial_components(&mesh, &StabilizationPolicy::default(), 1.0 / 3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..30 {
            let s = random_unit(&mut rng);
            let bd = mesh.classify_boundary(s).unwrap();
            let mut v: Vec<f64> = (0..mesh.num_nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            for &k in &bd.inflow_nodes {
                v[k] = 0.0;
            }
            let a = comp.convection_matrix(s).mul(&v);
            let ad = comp.supg_stiffness_matrix(s).mul(&v);
            let q: f64 = v.iter().zip(a.iter().zip(&ad)).map(|(x, (y, z))| x * (y + z)).sum();
            assert!(q >= -1e-12, "{q}");
        }
    }

    #[test]
    fn assembly_is_bitwise_reproducible() {
        let mesh = SpatialMesh::build(4).unwrap();
        let a = assemble_spatial_components(&mesh, &StabilizationPolicy::default(), 0.25).unwrap();
        let b = assemble_spatial_components(&mesh, &StabilizationPolicy::default(), 0.25).unwrap();
        assert_eq!(a.row_ptr, b.row_ptr);
        assert_eq!(a.col_idx, b.col_idx);
        assert_eq!(a.mass, b.mass);
        assert_eq!(a.convection, b.convection);
        assert_eq!(a.supg_mass, b.supg_mass);
        assert_eq!(a.supg_stiffness, b.supg_stiffness);
    }
}
