//! Hierarchical triangulation of the unit sphere and the DG(0) angular space.
//!
//! The level-0 mesh is the cube with vertices (±1, ±1, ±1)/√3, each face cut
//! into two triangles along the diagonal joining the two corners whose
//! tangential coordinates are equal. That choice makes the mesh invariant under
//! the central inversion s ↦ −s, so odd integrands integrate to zero on every
//! level. Each refinement splits a triangle into four through its projected
//! edge midpoints, giving 12·4^level cells.

use std::io::Write;

use crate::geometry::{add, arc_length, cross, dot, norm, normalize, scale, sub, Vec3};
use crate::{Error, Result};

/// Deepest refinement level accepted by [`AngularMesh::build`].
pub const MAX_LEVEL: usize = 6;

/// One spherical triangle with its DG(0) collocation data.
#[derive(Clone, Debug, PartialEq)]
pub struct SphericalCell {
    /// Vertices, counter-clockwise seen from outside the sphere.
    pub vertices: [Vec3; 3],
    /// Normalized vertex centroid.
    pub center: Vec3,
    /// Spherical area in steradians.
    pub area: f64,
}

impl SphericalCell {
    fn new(vertices: [Vec3; 3]) -> Self {
        let [a, b, c] = vertices;
        let center = normalize(add(add(a, b), c));
        Self {
            vertices,
            center,
            area: spherical_triangle_area(a, b, c),
        }
    }

    /// Largest great-circle edge length.
    pub fn diameter(&self) -> f64 {
        let [a, b, c] = self.vertices;
        arc_length(a, b).max(arc_length(b, c)).max(arc_length(c, a))
    }

    /// True when the unit vector `s` lies in the closed spherical triangle.
    pub fn contains(&self, s: Vec3) -> bool {
        let [a, b, c] = self.vertices;
        let eps = -1e-14;
        dot(cross(a, b), s) >= eps && dot(cross(b, c), s) >= eps && dot(cross(c, a), s) >= eps
    }

    /// Three-point rule for integrals over the cell, exact for quadratics in
    /// the flat-triangle parameterization and carried to the sphere through
    /// the central-projection Jacobian. Weights are rescaled to sum to the
    /// exact spherical area.
    pub fn quadrature(&self) -> [(Vec3, f64); 3] {
        const BARY: [[f64; 3]; 3] = [
            [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
            [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
            [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
        ];
        let [a, b, c] = self.vertices;
        let normal = cross(sub(b, a), sub(c, a));
        let flat_area = 0.5 * norm(normal);
        let unit_normal = scale(normal, 1.0 / norm(normal));
        let mut out = [([0.0; 3], 0.0); 3];
        let mut total = 0.0;
        for (q, l) in BARY.iter().enumerate() {
            let p = add(add(scale(a, l[0]), scale(b, l[1])), scale(c, l[2]));
            let r = norm(p);
            let jac = dot(p, unit_normal).abs() / (r * r * r);
            let w = flat_area * jac / 3.0;
            out[q] = (scale(p, 1.0 / r), w);
            total += w;
        }
        let fix = self.area / total;
        for q in &mut out {
            q.1 *= fix;
        }
        out
    }
}

/// Area of the spherical triangle with unit vertices `a, b, c`, from the
/// Van Oosterom–Strackee form of the spherical excess.
pub fn spherical_triangle_area(a: Vec3, b: Vec3, c: Vec3) -> f64 {
    let triple = dot(a, cross(b, c)).abs();
    let denom = 1.0 + dot(a, b) + dot(b, c) + dot(c, a);
    2.0 * triple.atan2(denom)
}

/// Geodesic triangulation S²_h with one DG(0) unknown per cell.
#[derive(Clone, Debug)]
pub struct AngularMesh {
    level: usize,
    cells: Vec<SphericalCell>,
    h_s: f64,
}

impl AngularMesh {
    /// Builds the level-`level` refinement of the cube seed.
    pub fn build(level: usize) -> Result<Self> {
        if level > MAX_LEVEL {
            return Err(Error::ResourceLimit(format!(
                "angular level {level} exceeds the limit {MAX_LEVEL}"
            )));
        }
        let mut tris = cube_seed();
        for _ in 0..level {
            tris = tris.into_iter().flat_map(subdivide).collect();
        }
        let cells: Vec<SphericalCell> = tris.into_iter().map(SphericalCell::new).collect();
        let h_s = cells.iter().map(SphericalCell::diameter).fold(0.0, f64::max);
        Ok(Self { level, cells, h_s })
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> &[SphericalCell] {
        &self.cells
    }

    /// Maximum cell diameter in the great-circle metric.
    pub fn h_s(&self) -> f64 {
        self.h_s
    }

    pub fn cell_center(&self, i: usize) -> Result<Vec3> {
        self.cells.get(i).map(|c| c.center).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "cell index {i} out of range (mesh has {} cells)",
                self.cells.len()
            ))
        })
    }

    pub fn centers(&self) -> Vec<Vec3> {
        self.cells.iter().map(|c| c.center).collect()
    }

    pub fn areas(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.area).collect()
    }

    pub fn total_area(&self) -> f64 {
        self.cells.iter().map(|c| c.area).sum()
    }

    /// Cell-center rule Σ g(s_i)|K_i|.
    pub fn midpoint_quadrature(&self, g: impl Fn(Vec3) -> f64) -> f64 {
        self.cells.iter().map(|c| g(c.center) * c.area).sum()
    }

    /// Writes `cell_id cx cy cz area` rows.
    pub fn write_dump<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# angular mesh level {} cells {}", self.level, self.len())?;
        for (i, c) in self.cells.iter().enumerate() {
            let [x, y, z] = c.center;
            writeln!(w, "{i} {x:.17e} {y:.17e} {z:.17e} {:.17e}", c.area)?;
        }
        Ok(())
    }
}

fn cube_seed() -> Vec<[Vec3; 3]> {
    let r = 1.0 / 3f64.sqrt();
    let mut tris = Vec::with_capacity(12);
    for axis in 0..3 {
        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
        for sign in [1.0, -1.0] {
            let corner = |a: f64, b: f64| {
                let mut p = [0.0; 3];
                p[axis] = sign * r;
                p[u] = a * r;
                p[v] = b * r;
                p
            };
            // diagonal joins (−,−) and (+,+)
            let (p00, p11) = (corner(-1.0, -1.0), corner(1.0, 1.0));
            for other in [corner(1.0, -1.0), corner(-1.0, 1.0)] {
                tris.push(orient_outward([p00, other, p11]));
            }
        }
    }
    tris
}

fn orient_outward(t: [Vec3; 3]) -> [Vec3; 3] {
    let [a, b, c] = t;
    if dot(cross(sub(b, a), sub(c, a)), add(add(a, b), c)) < 0.0 {
        [a, c, b]
    } else {
        t
    }
}

fn subdivide(t: [Vec3; 3]) -> [[Vec3; 3]; 4] {
    let [a, b, c] = t;
    let ab = normalize(add(a, b));
    let bc = normalize(add(b, c));
    let ca = normalize(add(c, a));
    [[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]
}
