//! wasm-bindgen bindings for the static demo page in `www/`.

use rtsplit::angular_mesh::AngularMesh;
use rtsplit::scattering::{CrossSections, PhaseFunction};
use rtsplit::solver::{Layout, SolverOptions, SplittingSolver};
use rtsplit::transport_assembly::StabilizationPolicy;
use rtsplit::verification::{ErrorEvaluator, ManufacturedCase};
use wasm_bindgen::prelude::*;

/// Largest paired level the page may request; level 2 already takes a
/// second or two in the browser.
pub const MAX_DEMO_LEVEL: usize = 2;

fn js_err(e: rtsplit::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn phase(kind: &str, param: f64) -> Result<PhaseFunction, JsError> {
    match kind {
        "isotropic" => Ok(PhaseFunction::Isotropic),
        "linear" => PhaseFunction::linear_anisotropic(param).map_err(js_err),
        "hg" => PhaseFunction::henyey_greenstein(param).map_err(js_err),
        other => Err(JsError::new(&format!("unknown phase function `{other}`"))),
    }
}

/// Φ(μ) at `samples` equally spaced μ in [−1, 1].
#[wasm_bindgen]
pub fn phase_curve(kind: &str, param: f64, samples: usize) -> Result<Vec<f64>, JsError> {
    let p = phase(kind, param)?;
    let n = samples.max(2);
    Ok((0..n)
        .map(|k| p.eval_cos(-1.0 + 2.0 * k as f64 / (n - 1) as f64))
        .collect())
}

/// Cells of the angular mesh as flat `[cx, cy, cz, area, ...]`.
#[wasm_bindgen]
pub fn angular_cells(level: usize) -> Result<Vec<f64>, JsError> {
    let m = AngularMesh::build(level).map_err(js_err)?;
    Ok(m.cells()
        .iter()
        .flat_map(|c| [c.center[0], c.center[1], c.center[2], c.area])
        .collect())
}

/// Result of [`solve_slice`].
#[wasm_bindgen]
pub struct SliceResult {
    n: usize,
    values: Vec<f64>,
    exact: Vec<f64>,
    l2_error: f64,
    steps: usize,
}

#[wasm_bindgen]
impl SliceResult {
    /// Vertices per axis of the slice.
    #[wasm_bindgen(getter)]
    pub fn n(&self) -> usize {
        self.n
    }

    /// Angle-averaged computed intensity on the plane z = 1/2, row-major in (y, x).
    #[wasm_bindgen(getter)]
    pub fn values(&self) -> Vec<f64> {
        self.values.clone()
    }

    /// Angle-averaged exact intensity at the same nodes.
    #[wasm_bindgen(getter)]
    pub fn exact(&self) -> Vec<f64> {
        self.exact.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn l2_error(&self) -> f64 {
        self.l2_error
    }

    #[wasm_bindgen(getter)]
    pub fn steps(&self) -> usize {
        self.steps
    }
}

/// Runs a manufactured example (1 or 2) at a paired level up to T = 1 and
/// returns the mid-plane slice of the angle-averaged solution.
#[wasm_bindgen]
pub fn solve_slice(example: u32, level: usize, sigma_t: f64, sigma_s: f64, eta: f64) -> Result<SliceResult, JsError> {
    if level > MAX_DEMO_LEVEL {
        return Err(JsError::new(&format!("the demo runs levels 0–{MAX_DEMO_LEVEL}")));
    }
    let cs = CrossSections::new(sigma_t, sigma_s).map_err(js_err)?;
    let case = match example {
        1 => ManufacturedCase::example1(cs),
        2 => ManufacturedCase::example2(cs, eta).map_err(js_err)?,
        _ => return Err(JsError::new("example must be 1 or 2")),
    };
    let n = (1usize << level.max(1)) + 1;
    let problem = case.problem_with(level, n, 1.0 / (n - 1) as f64, 1.0, StabilizationPolicy::default());
    let solver = SplittingSolver::new(problem, SolverOptions::default()).map_err(js_err)?;
    let out = solver.run().map_err(js_err)?;
    let field = out.final_field;
    debug_assert_eq!(field.layout(), Layout::AngularMajor);
    let l2_error = ErrorEvaluator::new(solver.angular_mesh(), solver.spatial_mesh())
        .l2_error(&field, &case, 1.0)
        .map_err(js_err)?;

    let amesh = solver.angular_mesh();
    let areas = amesh.areas();
    let centers = amesh.centers();
    let total: f64 = areas.iter().sum();
    let nodes = solver.spatial_mesh().nodes();
    let k_mid = n / 2;
    let mut values = Vec::with_capacity(n * n);
    let mut exact = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            let k = i + n * (j + n * k_mid);
            let u = field.node(k);
            values.push(u.iter().zip(&areas).map(|(v, a)| v * a).sum::<f64>() / total);
            exact.push(
                centers
                    .iter()
                    .zip(&areas)
                    .map(|(&s, a)| case.exact(nodes[k], s, 1.0) * a)
                    .sum::<f64>()
                    / total,
            );
        }
    }
    Ok(SliceResult {
        n,
        values,
        exact,
        l2_error,
        steps: out.diagnostics.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phase_curve_endpoints() {
        let c = phase_curve("linear", 1.0, 3).unwrap();
        assert_eq!(c.len(), 3);
        assert!(c[0].abs() < 1e-15);
        assert!((c[2] - 2.0 / (4.0 * std::f64::consts::PI)).abs() < 1e-15);
    }

    #[test]
    fn angular_cells_layout() {
        let c = angular_cells(1).unwrap();
        assert_eq!(c.len(), 48 * 4);
        let area: f64 = c.chunks(4).map(|r| r[3]).sum();
        assert!((area - 4.0 * std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn slice_tracks_exact_solution() {
        let r = solve_slice(1, 2, 2.0, 0.5, 0.5).unwrap();
        assert_eq!(r.n(), 5);
        assert_eq!(r.values().len(), 25);
        assert_eq!(r.steps(), 4);
        let centre = 12;
        assert!((r.values()[centre] - r.exact()[centre]).abs() < 0.3 * r.exact()[centre]);
        assert!(r.l2_error() > 0.0 && r.l2_error() < 0.5);
    }
}
