use proptest::prelude::*;
use rtsplit::config::RunConfig;
use rtsplit::geometry::normalize;
use rtsplit::linalg::{sparse_solve, CsrMatrix};
use rtsplit::scattering::{CrossSections, PhaseFunction};
use rtsplit::solver::{monolithic_reference_solve, Layout, SolutionField, SolverOptions, SplittingSolver};
use rtsplit::spatial_mesh::SpatialMesh;
use rtsplit::transport_assembly::StabilizationPolicy;
use rtsplit::verification::{run_level, ManufacturedCase};
use rtsplit::Error;

#[test]
fn config_text_drives_a_full_run() {
    let mut cfg = RunConfig::default();
    cfg.merge_text("# small run\nexample = ex2\nlevel = 1\neta = 0.3\ndt = 0.25\n").unwrap();
    cfg.validate().unwrap();
    let problem = cfg.problem().unwrap();
    assert_eq!(problem.spatial_n, 3);
    assert_eq!(problem.phase, PhaseFunction::HenyeyGreenstein { eta: 0.3 });
    let solver = SplittingSolver::new(problem, cfg.solver_options()).unwrap();
    let out = solver.run().unwrap();
    assert_eq!(out.diagnostics.len(), 4);
    assert!(out.diagnostics.iter().all(|d| d.residual <= 1e-10 && d.norm.is_finite()));
}

#[test]
fn invalid_settings_map_to_config_errors() {
    let mut cfg = RunConfig::default();
    assert!(matches!(cfg.set("nonsense", "1"), Err(Error::Config(_))));
    assert!(matches!(cfg.set("level", "two"), Err(Error::Config(_))));
    cfg.set("sigma_s", "3.0").unwrap();
    let err = cfg.validate().unwrap_err();
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn cached_and_uncached_runs_agree() {
    let case = ManufacturedCase::example1(CrossSections::new(2.0, 0.5).unwrap());
    let p = case.problem(1, StabilizationPolicy::default());
    let a = SplittingSolver::new(p.clone(), SolverOptions::default()).unwrap().run().unwrap();
    let b = SplittingSolver::new(
        p,
        SolverOptions {
            cache_factorizations: false,
            ..Default::default()
        },
    )
    .unwrap()
    .run()
    .unwrap();
    assert_eq!(a.final_field, b.final_field);
}

#[test]
fn split_solution_stays_close_to_monolithic_reference() {
    let case = ManufacturedCase::example1(CrossSections::new(2.0, 0.5).unwrap());
    let p = case.problem_with(0, 3, 0.125, 1.0, StabilizationPolicy::default());
    let mono = monolithic_reference_solve(&p, 1e-12).unwrap();
    let solver = SplittingSolver::new(p, SolverOptions::default()).unwrap();
    let split = solver.run().unwrap().final_field;
    let last = mono.last().unwrap();
    let diff = SolutionField::from_fn(split.n_s(), split.n_x(), Layout::AngularMajor, |i, k| {
        split.get(i, k) - last.get(i, k)
    });
    let rel = (solver.norm_sq(&diff) / solver.norm_sq(last)).sqrt();
    assert!(rel < 0.15, "relative split − monolithic difference {rel}");
}

#[test]
fn manufactured_level_one_is_stable_and_accurate() {
    let case = ManufacturedCase::example2(CrossSections::new(2.0, 0.5).unwrap(), 0.5).unwrap();
    let r = run_level(&case, 1, StabilizationPolicy::default(), SolverOptions::default()).unwrap();
    assert!(r.stable);
    assert_eq!(r.step_errors.len(), 2);
    assert!(r.l2_final < 0.5, "{}", r.l2_final);
}

#[test]
fn field_dump_has_header_and_rows() {
    let f = SolutionField::from_fn(3, 8, Layout::AngularMajor, |i, k| (i * 8 + k) as f64);
    let mut buf = Vec::new();
    f.transpose_layout().write_dump(&mut buf, 0, 2, 0.5).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.lines().next().unwrap().starts_with('#'));
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 24);
}

#[test]
fn dimension_mismatch_is_invalid_argument() {
    let a = CsrMatrix::identity(4);
    assert!(matches!(sparse_solve(&a, &[1.0; 3], 1e-10), Err(Error::InvalidArgument(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn phase_functions_are_reciprocal(
        a in prop::array::uniform3(-1.0f64..1.0),
        b in prop::array::uniform3(-1.0f64..1.0),
        eta in -0.9f64..0.9,
    ) {
        prop_assume!(a.iter().map(|v| v * v).sum::<f64>() > 1e-3);
        prop_assume!(b.iter().map(|v| v * v).sum::<f64>() > 1e-3);
        let (s, t) = (normalize(a), normalize(b));
        let p = PhaseFunction::henyey_greenstein(eta).unwrap();
        let (x, y) = (p.eval(s, t).unwrap(), p.eval(t, s).unwrap());
        prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        prop_assert!(x >= 0.0);
    }

    #[test]
    fn transpose_round_trips(n_s in 1usize..20, n_x in 1usize..40, seed in any::<u64>()) {
        let f = SolutionField::from_fn(n_s, n_x, Layout::AngularMajor, |i, k| {
            ((seed ^ (i as u64 * 31 + k as u64)) % 1000) as f64
        });
        let t = f.transpose_layout();
        prop_assert_eq!(t.layout(), Layout::SpatialMajor);
        for i in 0..n_s {
            for k in 0..n_x {
                prop_assert_eq!(t.get(i, k), f.get(i, k));
            }
        }
        prop_assert_eq!(t.transpose_layout(), f);
    }

    #[test]
    fn inflow_sets_of_opposite_directions_cover_the_boundary(
        a in prop::array::uniform3(-1.0f64..1.0),
    ) {
        prop_assume!(a.iter().map(|v| v * v).sum::<f64>() > 1e-3);
        let s = normalize(a);
        let mesh = SpatialMesh::build(4).unwrap();
        let fwd = mesh.classify_boundary(s).unwrap();
        let back = mesh.classify_boundary([-s[0], -s[1], -s[2]]).unwrap();
        for v in 0..mesh.num_nodes() {
            if mesh.is_boundary_node(v) {
                prop_assert!(fwd.is_inflow[v] || back.is_inflow[v]);
            } else {
                prop_assert!(!fwd.is_inflow[v] && !back.is_inflow[v]);
            }
        }
    }
}
