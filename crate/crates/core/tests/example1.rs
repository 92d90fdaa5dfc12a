use std::sync::Arc;

use cutfem_core::control::{
    example1, multilevel_optimize, optimize, DiscreteProblem, LinearSolver, OptimizerOptions, ProblemData,
    ProblemOptions,
};
use cutfem_core::linalg::dot;
use cutfem_core::mesh::{build_structured_mesh, BoundingBox, MeshHierarchy};
use cutfem_core::LevelSet;

fn hierarchy(refinements: usize) -> MeshHierarchy {
    let base = build_structured_mesh(BoundingBox::centered_square(1.5).unwrap(), 17).unwrap();
    MeshHierarchy::new(base, refinements).unwrap()
}

fn tight() -> OptimizerOptions {
    OptimizerOptions {
        tol: 1e-12,
        ..Default::default()
    }
}

#[test]
fn errors_match_reference_values() {
    // L2 errors of y and p, then H1 errors of y and p, at h = 2^-2 .. 2^-5
    let reference_l2 = [
        [0.914502e-2, 0.289888e-2],
        [0.263861e-2, 0.073717e-2],
        [0.057354e-2, 0.017087e-2],
        [0.013884e-2, 0.004151e-2],
    ];
    let reference_h1 = [
        [0.271164, 0.426922e-1],
        [0.145505, 0.222987e-1],
        [0.069620, 0.110154e-1],
        [0.034615, 0.055082e-1],
    ];
    let (data, exact) = example1();
    let h = hierarchy(3);
    let opts = ProblemOptions::default();
    let levels = multilevel_optimize(&h, 0, 3, &LevelSet::unit_circle(), &data, &opts, &tight(), true).unwrap();
    let mut prev: Option<(f64, [f64; 4])> = None;
    let mut eoc_sum = [0.0; 4];
    for (l, r) in levels.iter().enumerate() {
        assert!(r.result.h <= 0.25 / (1 << l) as f64);
        let ey = r.problem.errors(&r.result.y, &exact.y, &exact.grad_y).unwrap();
        let ep = r.problem.errors(&r.result.p, &exact.p, &exact.grad_p).unwrap();
        let ours = [ey.l2, ep.l2, ey.h1, ep.h1];
        let reference = [reference_l2[l][0], reference_l2[l][1], reference_h1[l][0], reference_h1[l][1]];
        for (o, p) in ours.iter().zip(reference) {
            assert!(o / p > 1.0 / 1.5 && o / p < 1.5, "level {l}: {o:e} vs reference {p:e}");
        }
        if let Some((hp, ep)) = prev {
            for i in 0..4 {
                eoc_sum[i] += (ep[i] / ours[i]).ln() / (hp / r.result.h).ln();
            }
        }
        prev = Some((r.result.h, ours));
    }
    let mean: Vec<f64> = eoc_sum.iter().map(|s| s / 3.0).collect();
    assert!(mean[..2].iter().all(|e| (1.85..=2.15).contains(e)), "{mean:?}");
    assert!(mean[2..].iter().all(|e| (0.90..=1.10).contains(e)), "{mean:?}");
}

#[test]
fn optimality_identity_at_termination() {
    let (data, exact) = example1();
    let h = hierarchy(1);
    let opts = ProblemOptions {
        solver: LinearSolver::Direct,
        ..Default::default()
    };
    let problem = DiscreteProblem::new(&h, 1, &LevelSet::unit_circle(), &data, &opts).unwrap();
    let res = optimize(&problem, None, &tight()).unwrap();
    assert!(res.converged);
    let m = &problem.system().mass;
    let g = problem.reduced_gradient(&res.u, &res.p);
    let ratio = (dot(&g, &m.mul_vec(&g)) / dot(&res.p, &m.mul_vec(&res.p))).sqrt();
    assert!(ratio <= 1e-8, "{ratio:e}");
    let eu = problem.errors(&res.u, &exact.u, &exact.grad_u).unwrap();
    let ep = problem.errors(&res.p, &exact.p, &exact.grad_p).unwrap();
    assert!((eu.l2 - ep.l2 / data.alpha).abs() <= 1e-10 * eu.l2);
}

#[test]
fn affine_solutions_are_reproduced() {
    // -Δy = 0 with affine Dirichlet data: Nitsche and ghost terms are consistent
    let base = build_structured_mesh(BoundingBox::centered_square(1.5).unwrap(), 12).unwrap();
    let h = MeshHierarchy::new(base, 0).unwrap();
    let hmax = h.mesh(0).h_max();
    let affine = |p: [f64; 2]| 0.7 - 1.3 * p[0] + 2.1 * p[1];
    let data = ProblemData {
        f: Arc::new(|_| 0.0),
        y_d: Arc::new(|_| 0.0),
        g_d: Arc::new(affine),
        g_n: Arc::new(|_| 0.0),
        alpha: 1.0,
    };
    let opts = ProblemOptions {
        solver: LinearSolver::Direct,
        ..Default::default()
    };
    let value: cutfem_core::control::Field = Arc::new(affine);
    let grad: cutfem_core::control::GradField = Arc::new(|_| [-1.3, 2.1]);
    for k in 0..12 {
        let t = k as f64 / 12.0;
        let center = [0.9 * hmax * t, 0.37 * hmax * t];
        let ls = LevelSet::Circle { center, radius: 0.83 };
        let problem = DiscreteProblem::new(&h, 0, &ls, &data, &opts).unwrap();
        let (y, _) = problem.solve_state(&vec![0.0; problem.num_dofs()]).unwrap();
        let e = problem.errors(&y, &value, &grad).unwrap();
        assert!(e.l2 <= 1e-10, "offset {k}: {:e}", e.l2);
    }
}
