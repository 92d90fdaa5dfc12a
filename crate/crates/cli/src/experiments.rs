use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use cutfem_core::control::{
    build_preconditioner, example1, optimize, DiscreteProblem, LinearSolver, PreconditionerKind, ProblemData,
    ProblemOptions,
};
use cutfem_core::fem::ErrorNorms;
use cutfem_core::linalg::{cg_solve, estimate_condition};
use cutfem_core::qmc::{
    self, convergence_rows, evaluate, log_log_slope, statistics, ConvergenceRow, Estimate, GasketProblem,
    QoiStatistics, SampleSet, Sampler,
};
use serde::Serialize;

use crate::config::{ExperimentConfig, ExperimentKind, Integrand};

/// Manufactured unit-disk data with the configured `alpha`.
pub fn problem_data(cfg: &ExperimentConfig) -> ProblemData {
    let (mut data, _) = example1();
    data.alpha = cfg.problem.alpha;
    data
}

/// The configured solver, replaced by the direct one where multigrid has
/// no coarser level to work with.
pub fn options_for_level(cfg: &ExperimentConfig, level: usize) -> ProblemOptions {
    let mut opts = cfg.problem_options();
    if let LinearSolver::Cg {
        preconditioner: PreconditionerKind::Multigrid,
        ..
    } = opts.solver
    {
        if level <= cfg.multigrid.coarsest_level {
            log::info!("level {level}: direct solver on the coarsest multigrid level");
            opts.solver = LinearSolver::Direct;
        }
    }
    opts
}

pub const ERROR_COLUMNS: [&str; 9] = [
    "y_l2", "y_h1", "y_star", "p_l2", "p_h1", "p_star", "u_l2", "u_h1", "u_star",
];

#[derive(Clone, Debug, Serialize)]
pub struct ConvergeLevel {
    pub level: usize,
    pub h: f64,
    pub dofs: usize,
    pub iterations: usize,
    pub converged: bool,
    pub y: ErrorNorms,
    pub p: ErrorNorms,
    pub u: ErrorNorms,
}

impl ConvergeLevel {
    /// Errors in the order of `ERROR_COLUMNS`.
    pub fn errors(&self) -> [f64; 9] {
        let mut out = [0.0; 9];
        for (i, e) in [self.y, self.p, self.u].iter().enumerate() {
            out[3 * i] = e.l2;
            out[3 * i + 1] = e.h1;
            out[3 * i + 2] = e.star;
        }
        out
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergeReport {
    pub levels: Vec<ConvergeLevel>,
    /// EOC between each level and the previous one; `None` on the first.
    pub eoc: Vec<[Option<f64>; 9]>,
    pub mean_eoc: [Option<f64>; 9],
}

impl ConvergeReport {
    pub fn mean_eoc_of(&self, column: &str) -> Option<f64> {
        ERROR_COLUMNS
            .iter()
            .position(|c| *c == column)
            .and_then(|i| self.mean_eoc[i])
    }
}

/// `log(e_{l-1} / e_l) / log(h_{l-1} / h_l)`.
pub fn eoc(e_coarse: f64, e_fine: f64, h_coarse: f64, h_fine: f64) -> f64 {
    (e_coarse / e_fine).ln() / (h_coarse / h_fine).ln()
}

pub fn run_converge(cfg: &ExperimentConfig) -> Result<ConvergeReport> {
    if !cfg.geometry.is_unit_circle() || cfg.problem.alpha != 0.1 {
        bail!("no exact solution is registered for this geometry and alpha (only the unit circle with alpha = 0.1)");
    }
    let (data, exact) = example1();
    let hierarchy = cfg.mesh.hierarchy()?;
    let level_set = cfg.geometry.level_set()?;
    let mut levels = Vec::new();
    for &level in &cfg.mesh.levels {
        let problem = DiscreteProblem::new(&hierarchy, level, &level_set, &data, &options_for_level(cfg, level))?;
        let res = optimize(&problem, None, &cfg.optimizer)?;
        let row = ConvergeLevel {
            level,
            h: res.h,
            dofs: res.dofs,
            iterations: res.iterations,
            converged: res.converged,
            y: problem.errors(&res.y, &exact.y, &exact.grad_y)?,
            p: problem.errors(&res.p, &exact.p, &exact.grad_p)?,
            u: problem.errors(&res.u, &exact.u, &exact.grad_u)?,
        };
        log::info!("level {level}: h = {:.4}, {} dofs, L2 error of y {:.3e}", row.h, row.dofs, row.y.l2);
        levels.push(row);
    }
    let mut eocs = vec![[None; 9]];
    for w in levels.windows(2) {
        let (a, b) = (w[0].errors(), w[1].errors());
        let mut r = [None; 9];
        for i in 0..9 {
            r[i] = Some(eoc(a[i], b[i], w[0].h, w[1].h));
        }
        eocs.push(r);
    }
    let mut mean_eoc = [None; 9];
    if levels.len() > 1 {
        for (i, m) in mean_eoc.iter_mut().enumerate() {
            let vals: Vec<f64> = eocs.iter().filter_map(|r| r[i]).collect();
            *m = Some(vals.iter().sum::<f64>() / vals.len() as f64);
        }
    }
    Ok(ConvergeReport {
        levels,
        eoc: eocs,
        mean_eoc,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct PrecondCell {
    pub preconditioner: PreconditionerKind,
    pub kappa: Option<f64>,
    pub iterations: Option<usize>,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PrecondLevel {
    pub level: usize,
    pub h: f64,
    pub dofs: usize,
    pub cells: Vec<PrecondCell>,
}

impl PrecondLevel {
    pub fn cell(&self, kind: PreconditionerKind) -> Option<&PrecondCell> {
        self.cells.iter().find(|c| c.preconditioner == kind)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PrecondReport {
    pub levels: Vec<PrecondLevel>,
}

impl PrecondReport {
    pub fn failures(&self) -> usize {
        self.levels
            .iter()
            .flat_map(|l| &l.cells)
            .filter(|c| c.error.is_some() || !c.converged)
            .count()
    }
}

/// Condition numbers of the preconditioned stiffness matrix and CG
/// iterations for the state equation with control `u = 1`.
pub fn run_precond(cfg: &ExperimentConfig) -> Result<PrecondReport> {
    let hierarchy = cfg.mesh.hierarchy()?;
    let level_set = cfg.geometry.level_set()?;
    let data = problem_data(cfg);
    let (tol, max_iter) = match cfg.solver {
        LinearSolver::Cg { tol, max_iter, .. } => (tol, max_iter),
        LinearSolver::Direct => (1e-8, 20_000),
    };
    let assemble_only = ProblemOptions {
        solver: LinearSolver::Cg {
            preconditioner: PreconditionerKind::None,
            tol,
            max_iter,
        },
        ..cfg.problem_options()
    };
    let mut levels = Vec::new();
    for &level in &cfg.mesh.levels {
        let problem = DiscreteProblem::new(&hierarchy, level, &level_set, &data, &assemble_only)?;
        let sys = problem.system();
        let k = &sys.stiffness;
        let ones = vec![1.0; problem.num_dofs()];
        let rhs: Vec<f64> = sys.mass.mul_vec(&ones).iter().zip(&sys.load).map(|(a, b)| a + b).collect();
        let mut cells = Vec::new();
        for &kind in &cfg.precond.preconditioners {
            let cell = match build_preconditioner(kind, &hierarchy, level, &sys.space, k, &cfg.multigrid) {
                Err(e) => PrecondCell {
                    preconditioner: kind,
                    kappa: None,
                    iterations: None,
                    converged: false,
                    error: Some(e.to_string()),
                },
                Ok(pc) => {
                    let kappa = estimate_condition(k, &*pc, cfg.precond.lanczos_steps, cfg.precond.seed);
                    let solve = cg_solve(k, &rhs, None, &*pc, tol, max_iter);
                    let error = match (&kappa, &solve) {
                        (Err(e), _) | (_, Err(e)) => Some(e.to_string()),
                        _ => None,
                    };
                    PrecondCell {
                        preconditioner: kind,
                        kappa: kappa.ok().map(|c| c.kappa),
                        iterations: solve.as_ref().ok().map(|s| s.iterations),
                        converged: solve.map(|s| s.converged).unwrap_or(false),
                        error,
                    }
                }
            };
            if let Some(e) = &cell.error {
                log::warn!("level {level}, {}: {e}", kind.name());
            }
            cells.push(cell);
        }
        levels.push(PrecondLevel {
            level,
            h: problem.mesh().h_max(),
            dofs: problem.num_dofs(),
            cells,
        });
    }
    Ok(PrecondReport { levels })
}

#[derive(Clone, Debug, Serialize)]
pub struct SampledRow {
    /// Seed of a Monte Carlo run.
    pub seed: Option<u64>,
    #[serde(flatten)]
    pub row: ConvergenceRow,
}

#[derive(Clone, Debug, Serialize)]
pub struct SlopeSummary {
    pub sampler: String,
    pub qoi: String,
    /// Log-log slope of the mean error against `N`, averaged over runs.
    pub mean_error_slope: Option<f64>,
    pub variance_error_slope: Option<f64>,
    /// Log-log slope of the RMS estimate against `N`.
    pub rms_slope: Option<f64>,
    pub runs: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct QmcReport {
    pub reference_n: usize,
    /// Reference values are exact rather than a high-`N` estimate.
    pub exact_reference: bool,
    pub rows: Vec<SampledRow>,
    pub slopes: Vec<SlopeSummary>,
    pub failures: usize,
}

impl QmcReport {
    pub fn slope(&self, sampler: &str, qoi: &str) -> Option<&SlopeSummary> {
        self.slopes.iter().find(|s| s.sampler == sampler && s.qoi == qoi)
    }
}

/// Evaluates the configured integrand at the samples of `sampler`.
fn sample(cfg: &ExperimentConfig, sampler: &Sampler, n: usize) -> Result<SampleSet> {
    let q = &cfg.qmc;
    let bounds = q.bounds();
    let sets = sampler.point_sets(n, bounds.len())?;
    Ok(match q.integrand {
        Integrand::Product => evaluate(&sets, &bounds, &["product"], |t| {
            Ok::<_, String>(vec![t.iter().product()])
        })?,
        Integrand::Gasket => {
            let gasket = GasketProblem {
                hierarchy: cfg.mesh.hierarchy_to(q.level)?,
                level: q.level,
                data: problem_data(cfg),
                options: options_for_level(cfg, q.level),
                optimizer: cfg.optimizer,
            };
            evaluate(&sets, &bounds, &qmc::QOI_NAMES, |w| gasket.solve(w).map(|r| r.values()))?
        }
    })
}

fn exact_reference(cfg: &ExperimentConfig) -> Option<Estimate> {
    match cfg.qmc.integrand {
        Integrand::Product => {
            let s = cfg.qmc.z.len() as i32;
            // E[prod t_i] = 2^-s, E[prod t_i^2] = 3^-s
            let mean = 0.5f64.powi(s);
            let variance = (1.0f64 / 3.0).powi(s) - mean * mean;
            Some(Estimate {
                n: 0,
                q: 1,
                samples_used: 0,
                failures: 0,
                qois: vec![QoiStatistics {
                    name: "product".into(),
                    mean,
                    variance,
                    shift_means: Vec::new(),
                    rms: None,
                }],
            })
        }
        Integrand::Gasket => None,
    }
}

fn slope_of(rows: &[&ConvergenceRow], ns: &[usize], reference_n: usize, f: impl Fn(&ConvergenceRow) -> f64) -> Option<f64> {
    let (x, y): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| ns.contains(&r.n) && r.n < reference_n)
        .map(|r| (r.n as f64, f(r)))
        .unzip();
    log_log_slope(&x, &y)
}

fn summarize(rows: &[SampledRow], ns: &[usize], reference_n: usize, exact: bool) -> Vec<SlopeSummary> {
    // with an exact reference every N contributes
    let cap = if exact { usize::MAX } else { reference_n };
    let mut out: Vec<SlopeSummary> = Vec::new();
    let mut keys: Vec<(String, String)> = Vec::new();
    for r in rows {
        let key = (r.row.sampler.clone(), r.row.qoi.clone());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    for (sampler, qoi) in keys {
        let mut seeds: Vec<Option<u64>> = Vec::new();
        for r in rows.iter().filter(|r| r.row.sampler == sampler && r.row.qoi == qoi) {
            if !seeds.contains(&r.seed) {
                seeds.push(r.seed);
            }
        }
        let mut acc = [Vec::new(), Vec::new(), Vec::new()];
        for seed in &seeds {
            let run: Vec<&ConvergenceRow> = rows
                .iter()
                .filter(|r| r.row.sampler == sampler && r.row.qoi == qoi && r.seed == *seed)
                .map(|r| &r.row)
                .collect();
            let slopes = [
                slope_of(&run, ns, cap, |r| r.abs_error),
                slope_of(&run, ns, cap, |r| r.var_abs_error),
                slope_of(&run, ns, usize::MAX, |r| r.rms.unwrap_or(0.0)),
            ];
            for (a, s) in acc.iter_mut().zip(slopes) {
                a.extend(s);
            }
        }
        let mean = |v: &Vec<f64>| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
        out.push(SlopeSummary {
            sampler,
            qoi,
            mean_error_slope: mean(&acc[0]),
            variance_error_slope: mean(&acc[1]),
            rms_slope: mean(&acc[2]),
            runs: seeds.len(),
        });
    }
    out
}

/// Deterministic lattice study with concurrent Monte Carlo runs. Errors are
/// taken against the exact moments when known, otherwise against the lattice
/// estimate at `reference_n`.
pub fn run_qmc_deterministic(cfg: &ExperimentConfig) -> Result<QmcReport> {
    let q = &cfg.qmc;
    let reference_n = q.reference_n();
    let lattice = Sampler::Lattice { z: q.z.clone() };
    let lattice_samples = sample(cfg, &lattice, reference_n)?;
    let mut failures = lattice_samples.failures;
    let exact = exact_reference(cfg);
    let reference = match &exact {
        Some(e) => e.clone(),
        None => statistics(&lattice_samples, &(0..reference_n).collect::<Vec<_>>())?,
    };
    let mut rows: Vec<SampledRow> = convergence_rows(&lattice, &lattice_samples, &q.ns, &reference)?
        .into_iter()
        .map(|row| SampledRow { seed: None, row })
        .collect();
    let n_mc = q.ns.iter().copied().max().unwrap_or(1);
    for i in 0..q.mc_runs as u64 {
        let seed = q.seed.wrapping_add(i);
        let mc = Sampler::Mc { seed };
        let samples = sample(cfg, &mc, n_mc)?;
        failures += samples.failures;
        rows.extend(
            convergence_rows(&mc, &samples, &q.ns, &reference)?
                .into_iter()
                .map(|row| SampledRow { seed: Some(seed), row }),
        );
    }
    let slopes = summarize(&rows, &q.ns, reference_n, exact.is_some());
    Ok(QmcReport {
        reference_n,
        exact_reference: exact.is_some(),
        rows,
        slopes,
        failures,
    })
}

/// Randomly shifted lattice study: per-`N` means and RMS estimates from `q`
/// shifts, all `N` taken as sub-rules of the `reference_n` rule.
pub fn run_qmc_randomized(cfg: &ExperimentConfig) -> Result<QmcReport> {
    let q = &cfg.qmc;
    let reference_n = q.reference_n();
    let sampler = Sampler::ShiftedLattice {
        z: q.z.clone(),
        q: q.q,
        seed: q.seed,
    };
    let samples = sample(cfg, &sampler, reference_n)?;
    let exact = exact_reference(cfg);
    let reference = match &exact {
        Some(e) => e.clone(),
        None => statistics(&samples, &(0..reference_n).collect::<Vec<_>>())?,
    };
    let rows: Vec<SampledRow> = convergence_rows(&sampler, &samples, &q.ns, &reference)?
        .into_iter()
        .map(|row| SampledRow {
            seed: Some(q.seed),
            row,
        })
        .collect();
    let slopes = summarize(&rows, &q.ns, reference_n, exact.is_some());
    Ok(QmcReport {
        reference_n,
        exact_reference: exact.is_some(),
        rows,
        slopes,
        failures: samples.failures,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct DumpReport {
    pub level: usize,
    pub h: f64,
    pub elements: usize,
    pub active_elements: usize,
    pub cut_elements: usize,
    pub polylines: usize,
    pub closed_polylines: usize,
    pub unsupported_cut_elements: usize,
    pub multiply_crossed_facets: usize,
    pub dofs: Option<usize>,
    pub cost: Option<f64>,
}

pub fn run_geometry_dump(cfg: &ExperimentConfig, out: &Path) -> Result<DumpReport> {
    let level = cfg.dump.level;
    let hierarchy = cfg.mesh.hierarchy_to(level)?;
    let mesh = hierarchy.mesh(level);
    let level_set = cfg.geometry.level_set()?;
    let topo = cutfem_core::geometry::classify_elements(mesh, &level_set)?;
    let polylines = topo.interface_polylines(mesh);
    write_file(&out.join("mesh.txt"), &mesh.to_text())?;
    write_file(&out.join("geometry.txt"), &topo.to_text(mesh))?;
    let mut report = DumpReport {
        level,
        h: mesh.h_max(),
        elements: mesh.num_triangles(),
        active_elements: topo.active_elements().len(),
        cut_elements: topo.cut_elements().len(),
        polylines: polylines.len(),
        closed_polylines: polylines.iter().filter(|p| p.closed).count(),
        unsupported_cut_elements: topo.unsupported_cut_elements().len(),
        multiply_crossed_facets: topo.multiply_crossed_facets().len(),
        dofs: None,
        cost: None,
    };
    if cfg.dump.solve {
        let data = problem_data(cfg);
        let problem = DiscreteProblem::new(&hierarchy, level, &level_set, &data, &options_for_level(cfg, level))?;
        let res = optimize(&problem, None, &cfg.optimizer)?;
        let space = problem.space();
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["vertex", "x", "y", "state", "adjoint", "control"])?;
        for dof in 0..space.num_dofs() {
            let v = space.vertex(dof);
            let p = mesh.vertices()[v];
            w.write_record([
                v.to_string(),
                num(p[0]),
                num(p[1]),
                num(res.y[dof]),
                num(res.p[dof]),
                num(res.u[dof]),
            ])?;
        }
        write_file(&out.join("fields.csv"), &String::from_utf8(w.into_inner()?)?)?;
        report.dofs = Some(space.num_dofs());
        report.cost = Some(res.cost);
    }
    Ok(report)
}

/// Floats in CSV output: shortest round-trip representation.
pub fn num(x: f64) -> String {
    format!("{x:e}")
}

fn opt_num(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".into(), num)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    write_file(path, &String::from_utf8(w.into_inner()?)?)
}

pub fn converge_csv(report: &ConvergeReport) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header: Vec<String> = ["level", "h", "dofs", "iterations"].map(String::from).to_vec();
    for c in ERROR_COLUMNS {
        header.push(c.to_string());
        header.push(format!("{c}_eoc"));
    }
    let mut rows = Vec::new();
    for (l, e) in report.levels.iter().zip(&report.eoc) {
        let mut r = vec![l.level.to_string(), num(l.h), l.dofs.to_string(), l.iterations.to_string()];
        for (err, eoc) in l.errors().iter().zip(e) {
            r.push(num(*err));
            r.push(eoc.map_or_else(String::new, num));
        }
        rows.push(r);
    }
    let mut mean = vec!["mean".to_string(), String::new(), String::new(), String::new()];
    for m in &report.mean_eoc {
        mean.push(String::new());
        mean.push(m.map_or_else(String::new, num));
    }
    rows.push(mean);
    (header, rows)
}

pub fn precond_csv(report: &PrecondReport, kinds: &[PreconditionerKind]) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header: Vec<String> = ["level", "h", "dofs"].map(String::from).to_vec();
    for k in kinds {
        header.push(format!("kappa_{}", k.name()));
        header.push(format!("iterations_{}", k.name()));
    }
    let rows = report
        .levels
        .iter()
        .map(|l| {
            let mut r = vec![l.level.to_string(), num(l.h), l.dofs.to_string()];
            for &k in kinds {
                let c = l.cell(k);
                r.push(opt_num(c.and_then(|c| c.kappa)));
                r.push(
                    c.filter(|c| c.converged)
                        .and_then(|c| c.iterations)
                        .map_or_else(|| "NA".into(), |i| i.to_string()),
                );
            }
            r
        })
        .collect();
    (header, rows)
}

pub fn qmc_csv(report: &QmcReport) -> (Vec<String>, Vec<Vec<String>>) {
    let header = [
        "sampler",
        "seed",
        "N",
        "q",
        "qoi",
        "mean",
        "variance",
        "abs_error",
        "rel_error",
        "rms",
        "var_abs_error",
        "var_rel_error",
        "failures",
    ]
    .map(String::from)
    .to_vec();
    let rows = report
        .rows
        .iter()
        .map(|s| {
            let r = &s.row;
            vec![
                r.sampler.clone(),
                s.seed.map_or_else(String::new, |v| v.to_string()),
                r.n.to_string(),
                r.q.to_string(),
                r.qoi.clone(),
                num(r.mean),
                num(r.variance),
                num(r.abs_error),
                num(r.rel_error),
                opt_num(r.rms),
                num(r.var_abs_error),
                num(r.var_rel_error),
                r.failures.to_string(),
            ]
        })
        .collect();
    (header, rows)
}

pub fn rms_csv(report: &QmcReport) -> (Vec<String>, Vec<Vec<String>>) {
    let header = ["N", "q", "total_points", "qoi", "mean", "rms"].map(String::from).to_vec();
    let rows = report
        .rows
        .iter()
        .map(|s| {
            let r = &s.row;
            vec![
                r.n.to_string(),
                r.q.to_string(),
                (r.n * r.q).to_string(),
                r.qoi.clone(),
                num(r.mean),
                opt_num(r.rms),
            ]
        })
        .collect();
    (header, rows)
}

#[derive(Serialize)]
pub struct RunRecord<'a, T: Serialize> {
    pub experiment: &'static str,
    pub config: &'a ExperimentConfig,
    pub failures: usize,
    pub report: &'a T,
}

fn write_record<T: Serialize>(out: &Path, cfg: &ExperimentConfig, failures: usize, report: &T) -> Result<()> {
    let record = RunRecord {
        experiment: cfg.experiment.name(),
        config: cfg,
        failures,
        report,
    };
    let mut text = serde_json::to_string_pretty(&record)?;
    text.push('\n');
    write_file(&out.join("run.json"), &text)
}

/// Runs the configured experiment, writes its CSV files and `run.json` to
/// `out`, and returns the number of failed computations.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> Result<usize> {
    cfg.validate()?;
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let failures = match cfg.experiment {
        ExperimentKind::Converge => {
            let report = run_converge(cfg)?;
            let (h, r) = converge_csv(&report);
            write_csv(&out.join("converge.csv"), &h, &r)?;
            let failures = report.levels.iter().filter(|l| !l.converged).count();
            write_record(out, cfg, failures, &report)?;
            failures
        }
        ExperimentKind::Precond => {
            let report = run_precond(cfg)?;
            let (h, r) = precond_csv(&report, &cfg.precond.preconditioners);
            write_csv(&out.join("precond.csv"), &h, &r)?;
            let failures = report.failures();
            write_record(out, cfg, failures, &report)?;
            failures
        }
        ExperimentKind::QmcDeterministic | ExperimentKind::QmcRandomized => {
            let report = if cfg.experiment == ExperimentKind::QmcDeterministic {
                run_qmc_deterministic(cfg)?
            } else {
                run_qmc_randomized(cfg)?
            };
            let (h, r) = qmc_csv(&report);
            write_csv(&out.join("qmc_convergence.csv"), &h, &r)?;
            if cfg.experiment == ExperimentKind::QmcRandomized {
                let (h, r) = rms_csv(&report);
                write_csv(&out.join("qmc_rms.csv"), &h, &r)?;
            }
            write_record(out, cfg, report.failures, &report)?;
            report.failures
        }
        ExperimentKind::GeometryDump => {
            let report = run_geometry_dump(cfg, out)?;
            write_record(out, cfg, 0, &report)?;
            0
        }
    };
    Ok(failures)
}
