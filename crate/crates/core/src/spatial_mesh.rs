//! Structured tetrahedral mesh of the unit cube, the P1 space V_h and
//! per-direction inflow classification.

use std::io::Write;

use crate::geometry::{check_unit, dot, norm, sub, Vec3};
use crate::{Error, Result};

/// Tolerance below which s·n is treated as tangential (outflow).
pub const TANGENTIAL_TOL: f64 = 1e-12;

/// A tetrahedron with constant P1 gradients.
#[derive(Clone, Debug)]
pub struct Tet {
    pub nodes: [usize; 4],
    /// Gradient of the hat function of each local node.
    pub grads: [Vec3; 4],
    pub volume: f64,
    /// Longest edge.
    pub diameter: f64,
}

/// Boundary triangle with its outward axis-aligned unit normal.
#[derive(Clone, Debug)]
pub struct BoundaryFace {
    pub nodes: [usize; 3],
    pub normal: Vec3,
}

#[derive(Clone, Debug)]
pub struct SpatialMesh {
    n: usize,
    nodes: Vec<Vec3>,
    tets: Vec<Tet>,
    boundary_faces: Vec<BoundaryFace>,
    on_boundary: Vec<bool>,
}

impl SpatialMesh {
    /// Builds an n × n × n vertex grid on [0,1]³ with each cube split into
    /// six Kuhn tetrahedra sharing the main diagonal.
    pub fn build(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 vertices per axis, got {n}"
            )));
        }
        let h = 1.0 / (n - 1) as f64;
        let id = |i: usize, j: usize, k: usize| i + n * (j + n * k);
        let mut nodes = Vec::with_capacity(n * n * n);
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    nodes.push([i as f64 * h, j as f64 * h, k as f64 * h]);
                }
            }
        }

        const PERMS: [[usize; 3]; 6] = [
            [0, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0],
        ];
        let m = n - 1;
        let mut tets = Vec::with_capacity(6 * m * m * m);
        for k in 0..m {
            for j in 0..m {
                for i in 0..m {
                    for p in PERMS {
                        let mut c = [i, j, k];
                        let mut ids = [id(c[0], c[1], c[2]); 4];
                        for (step, &axis) in p.iter().enumerate() {
                            c[axis] += 1;
                            ids[step + 1] = id(c[0], c[1], c[2]);
                        }
                        tets.push(make_tet(&nodes, ids));
                    }
                }
            }
        }

        let on_plane = |x: Vec3, axis: usize, value: f64| (x[axis] - value).abs() < 1e-14;
        let mut boundary_faces = Vec::new();
        for t in &tets {
            for skip in 0..4 {
                let f: Vec<usize> = (0..4).filter(|&q| q != skip).map(|q| t.nodes[q]).collect();
                for axis in 0..3 {
                    for (value, sign) in [(0.0, -1.0), (1.0, 1.0)] {
                        if f.iter().all(|&v| on_plane(nodes[v], axis, value)) {
                            let mut normal = [0.0; 3];
                            normal[axis] = sign;
                            boundary_faces.push(BoundaryFace {
                                nodes: [f[0], f[1], f[2]],
                                normal,
                            });
                        }
                    }
                }
            }
        }
        let mut on_boundary = vec![false; nodes.len()];
        for f in &boundary_faces {
            for &v in &f.nodes {
                on_boundary[v] = true;
            }
        }

        Ok(Self {
            n,
            nodes,
            tets,
            boundary_faces,
            on_boundary,
        })
    }

    /// Vertices per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[Vec3] {
        &self.nodes
    }

    pub fn tets(&self) -> &[Tet] {
        &self.tets
    }

    pub fn boundary_faces(&self) -> &[BoundaryFace] {
        &self.boundary_faces
    }

    pub fn is_boundary_node(&self, v: usize) -> bool {
        self.on_boundary[v]
    }

    /// Axis spacing 1/(n−1).
    pub fn h_x(&self) -> f64 {
        1.0 / (self.n - 1) as f64
    }

    /// Largest tetrahedron diameter.
    pub fn h_max(&self) -> f64 {
        self.tets.iter().map(|t| t.diameter).fold(0.0, f64::max)
    }

    pub fn total_volume(&self) -> f64 {
        self.tets.iter().map(|t| t.volume).sum()
    }

    /// Point of tet `t` with barycentric coordinates `l`.
    #[inline]
    pub fn map_point(&self, t: &Tet, l: &[f64; 4]) -> Vec3 {
        let mut x = [0.0; 3];
        for (q, &v) in t.nodes.iter().enumerate() {
            for d in 0..3 {
                x[d] += l[q] * self.nodes[v][d];
            }
        }
        x
    }

    /// Nodal interpolant of `g`.
    pub fn interpolate(&self, g: impl Fn(Vec3) -> f64) -> Vec<f64> {
        self.nodes.iter().map(|&x| g(x)).collect()
    }

    /// Splits the boundary for direction `s` into inflow nodes (on some face
    /// with s·n < 0) and outflow faces (s·n ≥ 0).
    pub fn classify_boundary(&self, s: Vec3) -> Result<DirectionBoundary> {
        check_unit(s, 1e-10)?;
        let mut is_inflow = vec![false; self.nodes.len()];
        let mut outflow_faces = Vec::new();
        for (fi, f) in self.boundary_faces.iter().enumerate() {
            if dot(s, f.normal) < -TANGENTIAL_TOL {
                for &v in &f.nodes {
                    is_inflow[v] = true;
                }
            } else {
                outflow_faces.push(fi);
            }
        }
        let inflow_nodes = (0..self.nodes.len()).filter(|&v| is_inflow[v]).collect();
        Ok(DirectionBoundary {
            direction: s,
            inflow_nodes,
            is_inflow,
            outflow_faces,
        })
    }

    /// Writes `node_id x y z` rows followed by `tet_id n0 n1 n2 n3` rows.
    pub fn write_dump<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# nodes {}", self.nodes.len())?;
        for (i, [x, y, z]) in self.nodes.iter().enumerate() {
            writeln!(w, "{i} {x:.17e} {y:.17e} {z:.17e}")?;
        }
        writeln!(w, "# tets {}", self.tets.len())?;
        for (i, t) in self.tets.iter().enumerate() {
            let [a, b, c, d] = t.nodes;
            writeln!(w, "{i} {a} {b} {c} {d}")?;
        }
        Ok(())
    }
}

fn make_tet(nodes: &[Vec3], mut ids: [usize; 4]) -> Tet {
    let det = |ids: &[usize; 4]| {
        let e1 = sub(nodes[ids[1]], nodes[ids[0]]);
        let e2 = sub(nodes[ids[2]], nodes[ids[0]]);
        let e3 = sub(nodes[ids[3]], nodes[ids[0]]);
        dot(e1, crate::geometry::cross(e2, e3))
    };
    if det(&ids) < 0.0 {
        ids.swap(2, 3);
    }
    let x0 = nodes[ids[0]];
    let e = [
        sub(nodes[ids[1]], x0),
        sub(nodes[ids[2]], x0),
        sub(nodes[ids[3]], x0),
    ];
    let jac = nalgebra::Matrix3::from_fn(|r, c| e[c][r]);
    let det = jac.determinant();
    let inv = jac.try_inverse().expect("degenerate tetrahedron");
    let mut grads = [[0.0; 3]; 4];
    for q in 0..3 {
        for d in 0..3 {
            grads[q + 1][d] = inv[(q, d)];
        }
    }
    for d in 0..3 {
        grads[0][d] = -(grads[1][d] + grads[2][d] + grads[3][d]);
    }
    let mut diameter: f64 = 0.0;
    for a in 0..4 {
        for b in a + 1..4 {
            diameter = diameter.max(norm(sub(nodes[ids[a]], nodes[ids[b]])));
        }
    }
    Tet {
        nodes: ids,
        grads,
        volume: det / 6.0,
        diameter,
    }
}

/// Inflow/outflow split of ∂Ω for one direction.
#[derive(Clone, Debug)]
pub struct DirectionBoundary {
    pub direction: Vec3,
    /// Sorted ids of nodes on ∂Ω_{s,−}.
    pub inflow_nodes: Vec<usize>,
    pub is_inflow: Vec<bool>,
    /// Indices into [`SpatialMesh::boundary_faces`] with s·n ≥ 0.
    pub outflow_faces: Vec<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn counts_and_volume() {
        for (n, nodes) in [(3, 27), (5, 125), (9, 729), (17, 4913)] {
            let m = SpatialMesh::build(n).unwrap();
            assert_eq!(m.num_nodes(), nodes);
            assert_eq!(m.tets().len(), 6 * (n - 1).pow(3));
            assert!((m.total_volume() - 1.0).abs() < 1e-12);
            assert!(m.tets().iter().all(|t| t.volume > 0.0));
            assert_eq!(m.boundary_faces().len(), 12 * (n - 1).pow(2));
        }
        let m = SpatialMesh::build(3).unwrap();
        assert_eq!(m.tets().len(), 48);
        assert_eq!(SpatialMesh::build(5).unwrap().h_x(), 0.25);
        assert!((m.h_max() - 3f64.sqrt() * 0.5).abs() < 1e-14);
    }

    #[test]
    fn rejects_tiny_grids() {
        assert!(matches!(SpatialMesh::build(1), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn boundary_normals_are_axis_aligned_units() {
        let m = SpatialMesh::build(4).unwrap();
        for f in m.boundary_faces() {
            assert!((norm(f.normal) - 1.0).abs() < 1e-15);
            assert_eq!(f.normal.iter().filter(|c| **c != 0.0).count(), 1);
            let axis = f.normal.iter().position(|c| *c != 0.0).unwrap();
            let value = if f.normal[axis] > 0.0 { 1.0 } else { 0.0 };
            assert!(f.nodes.iter().all(|&v| m.nodes()[v][axis] == value));
        }
    }

    #[test]
    fn gradients_reproduce_linear_functions() {
        let m = SpatialMesh::build(4).unwrap();
        let a = [0.3, -1.7, 2.2];
        let u = m.interpolate(|x| dot(a, x) + 0.9);
        for t in m.tets() {
            let mut g = [0.0; 3];
            for q in 0..4 {
                for d in 0..3 {
                    g[d] += u[t.nodes[q]] * t.grads[q][d];
                }
            }
            for d in 0..3 {
                assert!((g[d] - a[d]).abs() < 1e-12);
            }
        }
    }

    // Oracle: brute-force enumeration of boundary faces applying s·n < 0.
    fn inflow_by_enumeration(m: &SpatialMesh, s: Vec3) -> BTreeSet<usize> {
        let mut set = BTreeSet::new();
        for (v, x) in m.nodes().iter().enumerate() {
            for axis in 0..3 {
                if x[axis] == 0.0 && s[axis] > 0.0 || x[axis] == 1.0 && s[axis] < 0.0 {
                    set.insert(v);
                }
            }
        }
        set
    }

    #[test]
    fn x_direction_inflow_is_the_x0_face() {
        let m = SpatialMesh::build(3).unwrap();
        let b = m.classify_boundary([1.0, 0.0, 0.0]).unwrap();
        let expected: Vec<usize> = (0..27).filter(|&v| m.nodes()[v][0] == 0.0).collect();
        assert_eq!(b.inflow_nodes, expected);
        assert_eq!(b.inflow_nodes.len(), 9);
        assert_eq!(
            b.inflow_nodes.iter().copied().collect::<BTreeSet<_>>(),
            inflow_by_enumeration(&m, [1.0, 0.0, 0.0])
        );
    }

    #[test]
    fn z_direction_top_face_is_outflow() {
        let m = SpatialMesh::build(3).unwrap();
        let b = m.classify_boundary([0.0, 0.0, 1.0]).unwrap();
        for &fi in &b.outflow_faces {
            let _ = &m.boundary_faces()[fi];
        }
        let top: Vec<usize> = (0..m.boundary_faces().len())
            .filter(|&fi| m.boundary_faces()[fi].normal == [0.0, 0.0, 1.0])
            .collect();
        assert!(top.iter().all(|fi| b.outflow_faces.contains(fi)));
        // interior of the top face is not inflow; its rim is (tangential faces don't count)
        let centre_top = 4 + 9 * 2;
        assert!(!b.is_inflow[centre_top]);
    }

    #[test]
    fn positive_octant_direction_inflows_through_lower_faces() {
        let m = SpatialMesh::build(3).unwrap();
        let s = crate::geometry::normalize([0.3, 0.5, 0.8]);
        let b = m.classify_boundary(s).unwrap();
        for (v, x) in m.nodes().iter().enumerate() {
            assert_eq!(b.is_inflow[v], x.contains(&0.0));
        }
    }

    #[test]
    fn rejects_non_unit_direction() {
        let m = SpatialMesh::build(3).unwrap();
        assert!(m.classify_boundary([1.0, 1.0, 0.0]).is_err());
    }

    #[test]
    fn dump_row_counts() {
        let m = SpatialMesh::build(3).unwrap();
        let mut buf = Vec::new();
        m.write_dump(&mut buf).unwrap();
        let rows = String::from_utf8(buf)
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with('#'))
            .count();
        assert_eq!(rows, 27 + 48);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn unit() -> impl Strategy<Value = Vec3> {
            (-1.0f64..1.0, 0.0f64..std::f64::consts::TAU).prop_map(|(z, phi)| {
                let r = (1.0 - z * z).sqrt();
                [r * phi.cos(), r * phi.sin(), z]
            })
        }

        proptest! {
            #[test]
            fn classification_matches_enumeration(s in unit()) {
                let m = SpatialMesh::build(4).unwrap();
                let b = m.classify_boundary(s).unwrap();
                let got: BTreeSet<usize> = b.inflow_nodes.iter().copied().collect();
                prop_assert_eq!(got, inflow_by_enumeration(&m, s));
                for &v in &b.inflow_nodes {
                    prop_assert!(m.is_boundary_node(v));
                }
            }

            #[test]
            fn reversing_direction_swaps_strict_faces(s in unit()) {
                let m = SpatialMesh::build(3).unwrap();
                let fwd = m.classify_boundary(s).unwrap();
                let back = m.classify_boundary([-s[0], -s[1], -s[2]]).unwrap();
                for (fi, f) in m.boundary_faces().iter().enumerate() {
                    let sn = dot(s, f.normal);
                    let out_f = fwd.outflow_faces.contains(&fi);
                    let out_b = back.outflow_faces.contains(&fi);
                    if sn.abs() <= TANGENTIAL_TOL {
                        prop_assert!(out_f && out_b);
                    } else {
                        prop_assert_ne!(out_f, out_b);
                    }
                }
            }
        }
    }
}
