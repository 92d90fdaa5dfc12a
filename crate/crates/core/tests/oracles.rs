use cutfem_core::control::{build_multigrid, example1, DiscreteProblem, LinearSolver, MultigridOptions, ProblemOptions};
use cutfem_core::linalg::{
    cg_solve, estimate_condition, CsrMatrix, IdentityPreconditioner, Jacobi, Preconditioner, SkylineCholesky,
    SymmetricGaussSeidel,
};
use cutfem_core::mesh::{build_structured_mesh, BoundingBox, MeshHierarchy};
use cutfem_core::LevelSet;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dense(a: &CsrMatrix) -> DMatrix<f64> {
    let rows = a.to_dense();
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| rows[i][j])
}

/// Sparse SPD matrix: random symmetric pattern made diagonally dominant.
fn random_spd(n: usize, seed: u64) -> CsrMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Vec::new();
    let mut row_sum = vec![0.0; n];
    for i in 0..n {
        for _ in 0..3 {
            let j = rng.gen_range(0..n);
            if j != i {
                let v: f64 = rng.gen_range(-1.0..1.0);
                t.push((i, j, v));
                t.push((j, i, v));
                row_sum[i] += v.abs();
                row_sum[j] += v.abs();
            }
        }
    }
    for (i, s) in row_sum.iter().enumerate() {
        t.push((i, i, s + rng.gen_range(0.01..1.0)));
    }
    CsrMatrix::from_triplets(n, n, &t).unwrap()
}

fn circle_problem(n: usize, level: usize) -> (MeshHierarchy, DiscreteProblem) {
    let base = build_structured_mesh(BoundingBox::centered_square(1.5).unwrap(), n).unwrap();
    let h = MeshHierarchy::new(base, level).unwrap();
    let (data, _) = example1();
    let opts = ProblemOptions {
        solver: LinearSolver::Direct,
        ..Default::default()
    };
    let p = DiscreteProblem::new(&h, level, &LevelSet::unit_circle(), &data, &opts).unwrap();
    (h, p)
}

fn max_rel_diff(x: &[f64], y: &DVector<f64>) -> f64 {
    let scale = y.amax().max(1e-300);
    x.iter().zip(y.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale
}

#[test]
fn pcg_matches_dense_solve() {
    let mut cases: Vec<(CsrMatrix, Option<Box<dyn Preconditioner>>)> = Vec::new();
    for (n, seed) in [(3, 1), (17, 2), (64, 3), (200, 4)] {
        cases.push((random_spd(n, seed), None));
    }
    let (h, p) = circle_problem(6, 1);
    let k = p.system().stiffness.clone();
    assert!(k.nrows() <= 200, "{} dofs", k.nrows());
    let mg = build_multigrid(&h, 1, p.space(), &k, &MultigridOptions::default()).unwrap();
    cases.push((k, Some(Box::new(mg))));
    for (a, extra) in cases {
        let n = a.nrows();
        let b: Vec<f64> = (0..n).map(|i| ((i * 7 + 3) as f64).sin()).collect();
        let exact = dense(&a).lu().solve(&DVector::from_vec(b.clone())).unwrap();
        let mut pcs: Vec<Box<dyn Preconditioner>> = vec![
            Box::new(IdentityPreconditioner),
            Box::new(Jacobi::new(&a).unwrap()),
            Box::new(SymmetricGaussSeidel::new(&a).unwrap()),
            Box::new(SkylineCholesky::factor(&a).unwrap()),
        ];
        pcs.extend(extra);
        for pc in &pcs {
            let rep = cg_solve(&a, &b, None, &**pc, 1e-13, 10 * n + 100).unwrap();
            let err = max_rel_diff(&rep.x, &exact);
            assert!(err <= 1e-8, "n = {n}, {}: {err:e}", pc.name());
        }
    }
}

#[test]
fn skyline_cholesky_matches_dense() {
    let (_, p) = circle_problem(8, 0);
    let k = &p.system().stiffness;
    let b: Vec<f64> = (0..k.nrows()).map(|i| (i as f64).cos()).collect();
    let exact = dense(k).cholesky().unwrap().solve(&DVector::from_vec(b.clone()));
    let x = SkylineCholesky::factor(k).unwrap().solve(&b);
    assert!(max_rel_diff(&x, &exact) < 1e-12);
}

#[test]
fn galerkin_operators_match_dense_triple_products() {
    let (h, p) = circle_problem(5, 2);
    let k = &p.system().stiffness;
    let mg = build_multigrid(&h, 2, p.space(), k, &MultigridOptions::default()).unwrap();
    assert_eq!(mg.num_levels(), 3);
    for l in 1..mg.num_levels() {
        let fine = mg.level(l);
        let r = dense(fine.prolongation.as_ref().unwrap());
        let expected = r.transpose() * dense(&fine.matrix) * &r;
        let got = dense(&mg.level(l - 1).matrix);
        let scale = expected.amax();
        let diff = (got - expected).amax();
        assert!(diff <= 1e-12 * scale.max(1.0), "level {l}: {diff:e}");
    }
}

#[test]
fn sgs_is_the_inverse_of_its_splitting() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for case in 0..20 {
        let b = DMatrix::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0));
        let a = b.transpose() * &b + DMatrix::identity(3, 3) * 0.1;
        let t: Vec<_> = (0..3)
            .flat_map(|i| (0..3).map(move |j| (i, j)))
            .map(|(i, j)| (i, j, a[(i, j)]))
            .collect();
        let sparse = CsrMatrix::from_triplets(3, 3, &t).unwrap();
        let d = DMatrix::from_diagonal(&a.diagonal());
        let l = a.lower_triangle() - &d;
        let m = (&d + &l) * d.clone().try_inverse().unwrap() * (&d + l.transpose());
        let r = DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
        let expected = m.try_inverse().unwrap() * &r;
        let mut z = vec![0.0; 3];
        SymmetricGaussSeidel::new(&sparse).unwrap().apply(r.as_slice(), &mut z);
        assert!(max_rel_diff(&z, &expected) < 1e-12, "case {case}");
    }
}

#[test]
fn multigrid_is_a_symmetric_operator() {
    let (h, p) = circle_problem(6, 2);
    let k = &p.system().stiffness;
    let mg = build_multigrid(&h, 2, p.space(), k, &MultigridOptions::default()).unwrap();
    let n = k.nrows();
    let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
    let y: Vec<f64> = (0..n).map(|i| (i as f64 * 1.9).cos()).collect();
    let (mut mx, mut my) = (vec![0.0; n], vec![0.0; n]);
    mg.apply(&x, &mut mx);
    mg.apply(&y, &mut my);
    let (a, b) = (
        mx.iter().zip(&y).map(|(p, q)| p * q).sum::<f64>(),
        x.iter().zip(&my).map(|(p, q)| p * q).sum::<f64>(),
    );
    assert!((a - b).abs() < 1e-10 * a.abs().max(b.abs()), "{a} vs {b}");
    assert!(mx.iter().zip(&x).map(|(p, q)| p * q).sum::<f64>() > 0.0);
}

#[test]
fn lanczos_matches_dense_spectrum() {
    let (_, p) = circle_problem(8, 0);
    let k = &p.system().stiffness;
    let diag = k.diagonal();
    let s = DMatrix::from_diagonal(&DVector::from_iterator(diag.len(), diag.iter().map(|d| 1.0 / d.sqrt())));
    let eig = (&s * dense(k) * &s).symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    let est = estimate_condition(k, &Jacobi::new(k).unwrap(), 400, 3).unwrap();
    assert!(est.definite);
    assert!((est.lambda_max - hi).abs() < 1e-6 * hi, "{} vs {hi}", est.lambda_max);
    assert!((est.lambda_min - lo).abs() < 1e-3 * lo, "{} vs {lo}", est.lambda_min);
    assert!((est.kappa - hi / lo).abs() < 2e-3 * hi / lo);
}
