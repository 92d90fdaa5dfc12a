//! Discrete optimal control: state and adjoint solves, the reduced cost and
//! gradient, and gradient descent with exact line search.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{ControlError, LinalgError};
use crate::fem::{assemble_system, measure_error, AssembledSystem, ErrorNorms, P1Space, PenaltyParams, SourceTerms};
use crate::geometry::{classify_elements_with, ClassifyOptions, CutTopology, LevelSet};
use crate::linalg::{
    cg_solve, dot, norm, prolongation, IdentityPreconditioner, Jacobi, Multigrid, Preconditioner, SkylineCholesky,
    SolveReport, SymmetricGaussSeidel,
};
use crate::mesh::{BackgroundMesh, MeshHierarchy, Point};
use crate::quadrature::TriangleRule;

pub type Field = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
pub type GradField = Arc<dyn Fn(Point) -> Point + Send + Sync>;

/// Data of the control problem
/// `min 1/2 ||y - y_d||^2 + alpha/2 ||u||^2` s.t. `-Δy = f + u`,
/// `y = g_D` on the Dirichlet and `∂_n y = g_N` on the Neumann boundary.
#[derive(Clone)]
pub struct ProblemData {
    pub f: Field,
    pub y_d: Field,
    pub g_d: Field,
    pub g_n: Field,
    pub alpha: f64,
}

/// Analytic optimal state, adjoint and control with gradients.
#[derive(Clone)]
pub struct ExactSolution {
    pub y: Field,
    pub grad_y: GradField,
    pub p: Field,
    pub grad_p: GradField,
    pub u: Field,
    pub grad_u: GradField,
}

/// Manufactured solution on the unit disk with `alpha = 0.1`:
/// `y = sin(πx/2) sin(πy/2)`, `u = (r^2 - 1) sin(πx/2)`, `p = -alpha u`.
pub fn example1() -> (ProblemData, ExactSolution) {
    const A: f64 = PI / 2.0;
    const ALPHA: f64 = 0.1;
    let y = |p: Point| (A * p[0]).sin() * (A * p[1]).sin();
    let u = |p: Point| (p[0] * p[0] + p[1] * p[1] - 1.0) * (A * p[0]).sin();
    let grad_u = |p: Point| {
        let (s, c) = (A * p[0]).sin_cos();
        let r2m1 = p[0] * p[0] + p[1] * p[1] - 1.0;
        [2.0 * p[0] * s + r2m1 * A * c, 2.0 * p[1] * s]
    };
    let data = ProblemData {
        f: Arc::new(move |p| 0.5 * PI * PI * y(p) - u(p)),
        y_d: Arc::new(move |p| {
            let (s, c) = (A * p[0]).sin_cos();
            let r2m1 = p[0] * p[0] + p[1] * p[1] - 1.0;
            0.025 * ((PI * PI * r2m1 - 16.0) * s - 8.0 * PI * p[0] * c) + y(p)
        }),
        g_d: Arc::new(y),
        g_n: Arc::new(|_| 0.0),
        alpha: ALPHA,
    };
    let exact = ExactSolution {
        y: Arc::new(y),
        grad_y: Arc::new(|p| {
            let (sx, cx) = (A * p[0]).sin_cos();
            let (sy, cy) = (A * p[1]).sin_cos();
            [A * cx * sy, A * sx * cy]
        }),
        p: Arc::new(move |p| -ALPHA * u(p)),
        grad_p: Arc::new(move |p| grad_u(p).map(|g| -ALPHA * g)),
        u: Arc::new(u),
        grad_u: Arc::new(grad_u),
    };
    (data, exact)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PreconditionerKind {
    None,
    Jacobi,
    Sgs,
    Multigrid,
}

impl PreconditionerKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Jacobi => "jacobi",
            Self::Sgs => "sgs",
            Self::Multigrid => "multigrid",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LinearSolver {
    /// Sparse Cholesky factorization, reused for every solve.
    Direct,
    Cg {
        preconditioner: PreconditionerKind,
        #[serde(default = "default_cg_tol")]
        tol: f64,
        #[serde(default = "default_cg_max_iter")]
        max_iter: usize,
    },
}

fn default_cg_tol() -> f64 {
    1e-8
}

fn default_cg_max_iter() -> usize {
    20_000
}

impl Default for LinearSolver {
    fn default() -> Self {
        Self::Cg {
            preconditioner: PreconditionerKind::Multigrid,
            tol: default_cg_tol(),
            max_iter: default_cg_max_iter(),
        }
    }
}

/// Multigrid layout: smoothing sweeps and the mesh level of the coarsest grid.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct MultigridOptions {
    pub smoothing_steps: usize,
    pub coarsest_level: usize,
}

impl Default for MultigridOptions {
    fn default() -> Self {
        Self {
            smoothing_steps: 1,
            coarsest_level: 0,
        }
    }
}

/// Multigrid preconditioner for the stiffness matrix `k` of `space` on
/// level `level` of `hierarchy`. Coarse spaces are induced from the fine
/// one, coarse operators are Galerkin products.
pub fn build_multigrid(
    hierarchy: &MeshHierarchy,
    level: usize,
    space: &P1Space,
    k: &crate::linalg::CsrMatrix,
    options: &MultigridOptions,
) -> Result<Multigrid, LinalgError> {
    if level <= options.coarsest_level {
        return Err(LinalgError::TooFewLevels(level + 1 - options.coarsest_level.min(level)));
    }
    let mut spaces = vec![space.clone()];
    let mut prolongations = Vec::new();
    for l in (options.coarsest_level + 1..=level).rev() {
        let fine = spaces.last().unwrap();
        let map = hierarchy.refinement_map(l);
        let coarse = fine.induced_coarse(hierarchy.mesh(l - 1), map);
        prolongations.push(prolongation(map, fine.vertex_of_dof(), coarse.dof_of_vertex(), coarse.num_dofs())?);
        spaces.push(coarse);
    }
    prolongations.reverse();
    let cut_dofs = spaces
        .iter()
        .rev()
        .zip(options.coarsest_level..=level)
        .map(|(s, l)| s.cut_dofs(hierarchy.mesh(l)))
        .collect();
    Multigrid::galerkin(k.clone(), prolongations, cut_dofs, options.smoothing_steps)
}

pub fn build_preconditioner(
    kind: PreconditionerKind,
    hierarchy: &MeshHierarchy,
    level: usize,
    space: &P1Space,
    k: &crate::linalg::CsrMatrix,
    mg: &MultigridOptions,
) -> Result<Box<dyn Preconditioner>, LinalgError> {
    Ok(match kind {
        PreconditionerKind::None => Box::new(IdentityPreconditioner),
        PreconditionerKind::Jacobi => Box::new(Jacobi::new(k)?),
        PreconditionerKind::Sgs => Box::new(SymmetricGaussSeidel::new(k)?),
        PreconditionerKind::Multigrid => Box::new(build_multigrid(hierarchy, level, space, k, mg)?),
    })
}

enum StateSolver {
    Direct(SkylineCholesky),
    Cg {
        preconditioner: Box<dyn Preconditioner>,
        tol: f64,
        max_iter: usize,
    },
}

/// The discretized control problem on one level of a mesh hierarchy.
pub struct DiscreteProblem {
    mesh: BackgroundMesh,
    topo: CutTopology,
    params: PenaltyParams,
    data: ProblemData,
    system: AssembledSystem,
    solver: StateSolver,
    /// `||y_d||^2` on `D_h`.
    target_norm_sq: f64,
    inner_iterations: std::sync::atomic::AtomicUsize,
}

#[derive(Clone, Debug, Default)]
pub struct ProblemOptions {
    pub params: PenaltyParams,
    pub solver: LinearSolver,
    pub multigrid: MultigridOptions,
    pub classify: ClassifyOptions,
}

impl DiscreteProblem {
    pub fn new(
        hierarchy: &MeshHierarchy,
        level: usize,
        level_set: &LevelSet,
        data: &ProblemData,
        options: &ProblemOptions,
    ) -> Result<Self, ControlError> {
        if !(data.alpha > 0.0) {
            return Err(ControlError::InvalidParameter(format!("alpha must be positive, got {}", data.alpha)));
        }
        let mesh = hierarchy.mesh(level).clone();
        let topo = classify_elements_with(&mesh, level_set, &options.classify)?;
        let sources = SourceTerms {
            f: &*data.f,
            g_d: &*data.g_d,
            g_n: &*data.g_n,
            y_d: &*data.y_d,
        };
        let system = assemble_system(&mesh, &topo, &options.params, &sources)?;
        let solver = match options.solver {
            LinearSolver::Direct => StateSolver::Direct(SkylineCholesky::factor(&system.stiffness)?),
            LinearSolver::Cg {
                preconditioner,
                tol,
                max_iter,
            } => StateSolver::Cg {
                preconditioner: build_preconditioner(
                    preconditioner,
                    hierarchy,
                    level,
                    &system.space,
                    &system.stiffness,
                    &options.multigrid,
                )?,
                tol,
                max_iter,
            },
        };
        let target_norm_sq = l2_norm_sq(&mesh, &topo, &options.params, &*data.y_d)?;
        Ok(Self {
            mesh,
            topo,
            params: options.params,
            data: data.clone(),
            system,
            solver,
            target_norm_sq,
            inner_iterations: Default::default(),
        })
    }

    pub fn mesh(&self) -> &BackgroundMesh {
        &self.mesh
    }

    pub fn topology(&self) -> &CutTopology {
        &self.topo
    }

    pub fn system(&self) -> &AssembledSystem {
        &self.system
    }

    pub fn space(&self) -> &P1Space {
        &self.system.space
    }

    pub fn num_dofs(&self) -> usize {
        self.system.space.num_dofs()
    }

    pub fn alpha(&self) -> f64 {
        self.data.alpha
    }

    /// CG iterations spent in all solves so far.
    pub fn inner_iterations(&self) -> usize {
        self.inner_iterations.load(std::sync::atomic::Ordering::Relaxed)
    }

    fn solve(&self, rhs: &[f64], which: &'static str) -> Result<(Vec<f64>, SolveReport), ControlError> {
        match &self.solver {
            StateSolver::Direct(chol) => {
                let x = chol.solve(rhs);
                let mut r = self.system.stiffness.mul_vec(&x);
                r.iter_mut().zip(rhs).for_each(|(ri, bi)| *ri = bi - *ri);
                let bnorm = norm(rhs);
                let residual = if bnorm > 0.0 { norm(&r) / bnorm } else { 0.0 };
                Ok((
                    x.clone(),
                    SolveReport {
                        x,
                        iterations: 0,
                        residual,
                        converged: true,
                    },
                ))
            }
            StateSolver::Cg {
                preconditioner,
                tol,
                max_iter,
            } => {
                let rep = cg_solve(&self.system.stiffness, rhs, None, preconditioner.as_ref(), *tol, *max_iter)?;
                self.inner_iterations
                    .fetch_add(rep.iterations, std::sync::atomic::Ordering::Relaxed);
                if !rep.converged {
                    return Err(ControlError::SolveFailed {
                        which,
                        iterations: rep.iterations,
                        residual: rep.residual,
                    });
                }
                Ok((rep.x.clone(), rep))
            }
        }
    }

    /// `K y = M u + d`.
    pub fn solve_state(&self, u: &[f64]) -> Result<(Vec<f64>, SolveReport), ControlError> {
        let mut rhs = self.system.mass.mul_vec(u);
        rhs.iter_mut().zip(&self.system.load).for_each(|(r, d)| *r += d);
        self.solve(&rhs, "state")
    }

    /// `K p = M y + b`.
    pub fn solve_adjoint(&self, y: &[f64]) -> Result<(Vec<f64>, SolveReport), ControlError> {
        let mut rhs = self.system.mass.mul_vec(y);
        rhs.iter_mut().zip(&self.system.target).for_each(|(r, b)| *r += b);
        self.solve(&rhs, "adjoint")
    }

    /// `1/2 ||y - y_d||^2 + alpha/2 ||u||^2` on `D_h`.
    pub fn cost(&self, y: &[f64], u: &[f64]) -> f64 {
        let m = &self.system.mass;
        let tracking = dot(y, &m.mul_vec(y)) + 2.0 * dot(&self.system.target, y) + self.target_norm_sq;
        0.5 * tracking.max(0.0) + 0.5 * self.data.alpha * dot(u, &m.mul_vec(u))
    }

    /// `||y - y_d||` on `D_h`.
    pub fn misfit_norm(&self, y: &[f64]) -> f64 {
        let m = &self.system.mass;
        (dot(y, &m.mul_vec(y)) + 2.0 * dot(&self.system.target, y) + self.target_norm_sq)
            .max(0.0)
            .sqrt()
    }

    /// `||v||` on `D_h` for a finite element function `v`.
    pub fn l2_norm(&self, v: &[f64]) -> f64 {
        dot(v, &self.system.mass.mul_vec(v)).max(0.0).sqrt()
    }

    /// `alpha u + p`, the gradient as a finite element function.
    pub fn reduced_gradient(&self, u: &[f64], p: &[f64]) -> Vec<f64> {
        u.iter().zip(p).map(|(u, p)| self.data.alpha * u + p).collect()
    }

    pub fn errors(&self, coeffs: &[f64], value: &Field, grad: &GradField) -> Result<ErrorNorms, ControlError> {
        Ok(measure_error(
            &self.mesh,
            &self.topo,
            &self.system.space,
            &self.params,
            coeffs,
            &**value,
            &**grad,
        )?)
    }
}

fn l2_norm_sq(
    mesh: &BackgroundMesh,
    topo: &CutTopology,
    params: &PenaltyParams,
    f: &(dyn Fn(Point) -> f64 + Sync),
) -> Result<f64, ControlError> {
    let mut s = 0.0;
    let order = params.quadrature_order.max(TriangleRule::with_degree(4).degree);
    for &e in topo.active_elements() {
        for (p, w) in crate::geometry::volume_quadrature(mesh, topo, e, order)? {
            s += w * f(p).powi(2);
        }
    }
    Ok(s)
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum StepRule {
    ExactLineSearch,
    Fixed { tau: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct OptimizerOptions {
    /// Stop once `|J_k - J_{k-1}| / J_k` is at most this.
    pub tol: f64,
    pub max_iter: usize,
    pub step: StepRule,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 500,
            step: StepRule::ExactLineSearch,
        }
    }
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct OptimizationResult {
    #[serde(skip)]
    pub u: Vec<f64>,
    #[serde(skip)]
    pub y: Vec<f64>,
    #[serde(skip)]
    pub p: Vec<f64>,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Cost before each update.
    pub cost_history: Vec<f64>,
    pub inner_iterations: usize,
    pub dofs: usize,
    pub h: f64,
}

/// Gradient descent on the reduced cost from `u0` (constant 1 if `None`).
/// On exit the control is reset to `-p / alpha` from the last adjoint.
pub fn optimize(
    problem: &DiscreteProblem,
    u0: Option<Vec<f64>>,
    options: &OptimizerOptions,
) -> Result<OptimizationResult, ControlError> {
    let n = problem.num_dofs();
    let mut u = u0.unwrap_or_else(|| vec![1.0; n]);
    if u.len() != n {
        return Err(ControlError::InvalidParameter(format!(
            "initial control has {} entries, the space has {n} dofs",
            u.len()
        )));
    }
    let alpha = problem.alpha();
    let m = &problem.system.mass;
    let start_inner = problem.inner_iterations();
    let mut j_prev = f64::INFINITY;
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let (y, p) = loop {
        let (y, _) = problem.solve_state(&u)?;
        let j = problem.cost(&y, &u);
        if !j.is_finite() {
            return Err(LinalgError::NotANumber {
                context: "cost",
                iteration: iterations,
            }
            .into());
        }
        let (p, _) = problem.solve_adjoint(&y)?;
        history.push(j);
        if (j_prev - j).abs() <= options.tol * j {
            converged = true;
            break (y, p);
        }
        if iterations >= options.max_iter {
            break (y, p);
        }
        let g = problem.reduced_gradient(&u, &p);
        let tau = match options.step {
            StepRule::Fixed { tau } => tau,
            StepRule::ExactLineSearch => {
                let mg = m.mul_vec(&g);
                let gmg = dot(&g, &mg);
                if gmg == 0.0 {
                    converged = true;
                    break (y, p);
                }
                let (sg, _) = problem.solve(&mg, "line search")?;
                gmg / (dot(&sg, &m.mul_vec(&sg)) + alpha * gmg)
            }
        };
        u.iter_mut().zip(&g).for_each(|(ui, gi)| *ui -= tau * gi);
        j_prev = j;
        iterations += 1;
    };
    let u: Vec<f64> = p.iter().map(|p| -p / alpha).collect();
    let cost = problem.cost(&y, &u);
    if !converged {
        log::warn!("optimization stopped after {iterations} iterations without meeting the tolerance");
    }
    Ok(OptimizationResult {
        u,
        y,
        p,
        cost,
        iterations,
        converged,
        cost_history: history,
        inner_iterations: problem.inner_iterations() - start_inner,
        dofs: n,
        h: problem.mesh.h_max(),
    })
}

/// Result on one level of a multilevel run.
pub struct LevelResult {
    pub level: usize,
    pub problem: DiscreteProblem,
    pub result: OptimizationResult,
    pub warm_started: bool,
}

/// Solves on levels `first..=last` of `hierarchy`: the first level with the
/// direct solver, finer ones with `options.solver`, each warm started from
/// the prolonged control of the previous level when the spaces nest.
pub fn multilevel_optimize(
    hierarchy: &MeshHierarchy,
    first: usize,
    last: usize,
    level_set: &LevelSet,
    data: &ProblemData,
    options: &ProblemOptions,
    optimizer: &OptimizerOptions,
    warm_start: bool,
) -> Result<Vec<LevelResult>, ControlError> {
    let mut out: Vec<LevelResult> = Vec::new();
    for level in first..=last {
        let problem = if level == first {
            let direct = ProblemOptions {
                solver: LinearSolver::Direct,
                ..options.clone()
            };
            DiscreteProblem::new(hierarchy, level, level_set, data, &direct)?
        } else {
            DiscreteProblem::new(hierarchy, level, level_set, data, options)?
        };
        let mut u0 = None;
        if warm_start {
            if let Some(prev) = out.last() {
                match prolongation(
                    hierarchy.refinement_map(level),
                    problem.space().vertex_of_dof(),
                    prev.problem.space().dof_of_vertex(),
                    prev.problem.num_dofs(),
                ) {
                    Ok(p) => u0 = Some(p.mul_vec(&prev.result.u)),
                    Err(e) => log::warn!("level {level}: cold start ({e})"),
                }
            }
        }
        let warm_started = u0.is_some();
        let result = optimize(&problem, u0, optimizer)?;
        log::info!(
            "level {level}: {} dofs, {} iterations, cost {:.6e}",
            result.dofs,
            result.iterations,
            result.cost
        );
        out.push(LevelResult {
            level,
            problem,
            result,
            warm_started,
        });
    }
    Ok(out)
}

/// JSON summary of one optimization run.
#[derive(Clone, Debug, serde::Serialize)]
pub struct RunRecord {
    pub level: usize,
    pub h: f64,
    pub dofs: usize,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub inner_iterations: usize,
    pub warm_started: bool,
}

impl From<&LevelResult> for RunRecord {
    fn from(r: &LevelResult) -> Self {
        Self {
            level: r.level,
            h: r.result.h,
            dofs: r.result.dofs,
            cost: r.result.cost,
            iterations: r.result.iterations,
            converged: r.result.converged,
            inner_iterations: r.result.inner_iterations,
            warm_started: r.warm_started,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_structured_mesh, BoundingBox};

    fn hierarchy(n: usize, refinements: usize) -> MeshHierarchy {
        let base = build_structured_mesh(BoundingBox::centered_square(1.5).unwrap(), n).unwrap();
        MeshHierarchy::new(base, refinements).unwrap()
    }

    #[test]
    fn manufactured_data_is_consistent() {
        // -Δy = f + u and -Δp = y - y_d by central differences
        let (data, exact) = example1();
        let h = 1e-3;
        let lap = |g: &Field, p: Point| {
            (g([p[0] + h, p[1]]) + g([p[0] - h, p[1]]) + g([p[0], p[1] + h]) + g([p[0], p[1] - h]) - 4.0 * g(p))
                / (h * h)
        };
        for p in [[0.3, -0.2], [-0.5, 0.6], [0.1, 0.8]] {
            assert!((-lap(&exact.y, p) - (data.f)(p) - (exact.u)(p)).abs() < 1e-5);
            assert!((-lap(&exact.p, p) - (exact.y)(p) + (data.y_d)(p)).abs() < 1e-5);
            assert!(((exact.u)(p) + (exact.p)(p) / data.alpha).abs() < 1e-15);
            let gu = (exact.grad_u)(p);
            let fd = [
                ((exact.u)([p[0] + h, p[1]]) - (exact.u)([p[0] - h, p[1]])) / (2.0 * h),
                ((exact.u)([p[0], p[1] + h]) - (exact.u)([p[0], p[1] - h])) / (2.0 * h),
            ];
            assert!((gu[0] - fd[0]).abs() < 1e-5 && (gu[1] - fd[1]).abs() < 1e-5);
        }
    }

    #[test]
    fn cg_and_direct_agree() {
        let (data, _) = example1();
        let h = hierarchy(8, 1);
        let ls = LevelSet::unit_circle();
        let direct = DiscreteProblem::new(
            &h,
            1,
            &ls,
            &data,
            &ProblemOptions {
                solver: LinearSolver::Direct,
                ..Default::default()
            },
        )
        .unwrap();
        let mg = DiscreteProblem::new(&h, 1, &ls, &data, &ProblemOptions::default()).unwrap();
        let u = vec![0.5; direct.num_dofs()];
        let (y1, y2) = (direct.solve_state(&u).unwrap().0, mg.solve_state(&u).unwrap().0);
        let diff = y1.iter().zip(&y2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-6, "{diff}");
        assert!(mg.inner_iterations() > 0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (data, _) = example1();
        let h = hierarchy(6, 0);
        let opts = ProblemOptions {
            solver: LinearSolver::Direct,
            ..Default::default()
        };
        let problem = DiscreteProblem::new(&h, 0, &LevelSet::unit_circle(), &data, &opts).unwrap();
        let n = problem.num_dofs();
        let u: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let dir: Vec<f64> = (0..n).map(|i| (i as f64 * 1.3).cos()).collect();
        let reduced = |u: &[f64]| problem.cost(&problem.solve_state(u).unwrap().0, u);
        let y = problem.solve_state(&u).unwrap().0;
        let p = problem.solve_adjoint(&y).unwrap().0;
        let g = problem.reduced_gradient(&u, &p);
        let analytic = dot(&problem.system().mass.mul_vec(&g), &dir);
        let eps = 1e-5;
        let shift = |s: f64| -> Vec<f64> { u.iter().zip(&dir).map(|(a, d)| a + s * d).collect() };
        let fd = (reduced(&shift(eps)) - reduced(&shift(-eps))) / (2.0 * eps);
        assert!((fd - analytic).abs() < 1e-6 * analytic.abs().max(1.0), "{fd} vs {analytic}");
    }

    #[test]
    fn descent_decreases_cost_and_stops() {
        let (data, _) = example1();
        let h = hierarchy(8, 0);
        let opts = ProblemOptions {
            solver: LinearSolver::Direct,
            ..Default::default()
        };
        let problem = DiscreteProblem::new(&h, 0, &LevelSet::unit_circle(), &data, &opts).unwrap();
        let res = optimize(&problem, None, &OptimizerOptions::default()).unwrap();
        assert!(res.converged);
        assert!(res.cost_history.windows(2).all(|w| w[1] <= w[0] + 1e-14));
        let once = optimize(
            &problem,
            None,
            &OptimizerOptions {
                tol: f64::INFINITY,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(once.iterations, 0);
        assert_eq!(once.cost_history.len(), 1);
        let capped = optimize(
            &problem,
            None,
            &OptimizerOptions {
                tol: -1.0,
                max_iter: 2,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(!capped.converged && capped.iterations == 2);
    }

    #[test]
    fn warm_start_begins_closer_to_the_optimum() {
        let (data, _) = example1();
        let h = hierarchy(8, 1);
        let opts = ProblemOptions {
            solver: LinearSolver::Direct,
            ..Default::default()
        };
        let tight = OptimizerOptions {
            tol: 1e-12,
            ..Default::default()
        };
        let ls = LevelSet::unit_circle();
        let warm = multilevel_optimize(&h, 0, 1, &ls, &data, &opts, &tight, true).unwrap();
        let cold = multilevel_optimize(&h, 1, 1, &ls, &data, &opts, &tight, false).unwrap();
        assert!(warm[1].warm_started);
        assert!(warm[1].result.cost_history[0] < cold[0].result.cost_history[0]);
        assert!((warm[1].result.cost - cold[0].result.cost).abs() < 1e-8);
    }
}
