//! Rank-1 lattice rules, random shifts and plain Monte Carlo over a parameter
//! box, with mean/variance/RMS statistics of sampled quantities of interest.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::control::{optimize, DiscreteProblem, OptimizerOptions, ProblemData, ProblemOptions};
use crate::error::{ControlError, QmcError};
use crate::geometry::LevelSet;
use crate::mesh::MeshHierarchy;

pub const DEFAULT_GENERATOR: [u64; 2] = [1, 127];
pub const DEFAULT_SHIFTS: usize = 16;
pub const DEFAULT_SEED: u64 = 20_190_601;

/// Parameter box of the deterministic lattice study.
pub const WIDE_BOX: [[f64; 2]; 2] = [[9.0, 12.0], [2.0, 3.0]];
/// Parameter box of the randomized study.
pub const NARROW_BOX: [[f64; 2]; 2] = [[9.0, 9.25], [2.0, 2.25]];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LatticeRule {
    n: usize,
    z: Vec<u64>,
}

impl LatticeRule {
    pub fn new(n: usize, z: Vec<u64>) -> Result<Self, QmcError> {
        if n == 0 {
            return Err(QmcError::EmptyRule);
        }
        if z.is_empty() || z.contains(&0) {
            return Err(QmcError::InvalidGenerator(z));
        }
        // {k z / N} only depends on z mod N; N = 1 is the single point 0
        let z: Vec<u64> = if n == 1 {
            vec![0; z.len()]
        } else {
            z.iter().map(|&zi| zi % n as u64).collect()
        };
        if n > 1 && z.contains(&0) {
            return Err(QmcError::InvalidGenerator(z));
        }
        Ok(Self { n, z })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn z(&self) -> &[u64] {
        &self.z
    }

    pub fn dim(&self) -> usize {
        self.z.len()
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        lattice_points(self.n, &self.z)
    }
}

/// `t_k = {k z / N}` for `k = 0..N`, in integer arithmetic.
pub fn lattice_points(n: usize, z: &[u64]) -> Vec<Vec<f64>> {
    let nn = n as u128;
    (0..n as u128)
        .map(|k| z.iter().map(|&zi| ((k * zi as u128) % nn) as f64 / n as f64).collect())
        .collect()
}

/// `{t + delta}` componentwise.
pub fn shift_and_wrap(points: &[Vec<f64>], delta: &[f64]) -> Vec<Vec<f64>> {
    points
        .iter()
        .map(|t| t.iter().zip(delta).map(|(&a, &d)| wrap(a + d)).collect())
        .collect()
}

fn wrap(x: f64) -> f64 {
    let f = x - x.floor();
    // x slightly below an integer can round up to 1.0
    if f >= 1.0 {
        0.0
    } else {
        f
    }
}

/// Affine image `a + t (b - a)` of unit-cube points in the box `[a_i, b_i]`.
pub fn map_to_box(points: &[Vec<f64>], bounds: &[[f64; 2]]) -> Result<Vec<Vec<f64>>, QmcError> {
    if let Some(i) = bounds.iter().position(|[a, b]| !(b > a) || !a.is_finite() || !b.is_finite()) {
        return Err(QmcError::DegenerateBox { dim: i });
    }
    Ok(points
        .iter()
        .map(|t| t.iter().zip(bounds).map(|(&t, [a, b])| a + t * (b - a)).collect())
        .collect())
}

/// `n` uniform points in `[0,1)^s` from a ChaCha8 stream seeded by `seed`.
pub fn mc_points(n: usize, s: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..s).map(|_| rng.gen::<f64>()).collect()).collect()
}

/// `q` independent uniform shifts in `[0,1)^s`.
pub fn random_shifts(q: usize, s: usize, seed: u64) -> Vec<Vec<f64>> {
    mc_points(q, s, seed)
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Sampler {
    Mc { seed: u64 },
    Lattice { z: Vec<u64> },
    ShiftedLattice { z: Vec<u64>, q: usize, seed: u64 },
}

impl Sampler {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Mc { .. } => "mc",
            Self::Lattice { .. } => "lattice",
            Self::ShiftedLattice { .. } => "shifted_lattice",
        }
    }

    pub fn shifts(&self) -> usize {
        match self {
            Self::ShiftedLattice { q, .. } => *q,
            _ => 1,
        }
    }

    /// Unit-cube point sets, one per shift.
    pub fn point_sets(&self, n: usize, s: usize) -> Result<Vec<Vec<Vec<f64>>>, QmcError> {
        match self {
            Self::Mc { seed } => Ok(vec![mc_points(n, s, *seed)]),
            Self::Lattice { z } => {
                check_dim(z, s)?;
                Ok(vec![LatticeRule::new(n, z.clone())?.points()])
            }
            Self::ShiftedLattice { z, q, seed } => {
                check_dim(z, s)?;
                if *q == 0 {
                    return Err(QmcError::NoShifts);
                }
                let base = LatticeRule::new(n, z.clone())?.points();
                Ok(random_shifts(*q, s, *seed)
                    .iter()
                    .map(|d| shift_and_wrap(&base, d))
                    .collect())
            }
        }
    }
}

fn check_dim(z: &[u64], s: usize) -> Result<(), QmcError> {
    if z.len() != s {
        return Err(QmcError::DimensionMismatch {
            generator: z.len(),
            box_dim: s,
        });
    }
    Ok(())
}

/// QoI values at every sample, grouped by shift; `None` marks a failed sample.
#[derive(Clone, Debug)]
pub struct SampleSet {
    pub names: Vec<String>,
    pub values: Vec<Vec<Option<Vec<f64>>>>,
    pub failures: usize,
}

impl SampleSet {
    pub fn shifts(&self) -> usize {
        self.values.len()
    }

    pub fn points_per_shift(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }
}

/// Evaluates `f` at the box images of `point_sets` in parallel. Results are
/// collected in sample order, so the outcome does not depend on scheduling.
pub fn evaluate<F, E>(
    point_sets: &[Vec<Vec<f64>>],
    bounds: &[[f64; 2]],
    names: &[&str],
    f: F,
) -> Result<SampleSet, QmcError>
where
    F: Fn(&[f64]) -> Result<Vec<f64>, E> + Sync,
    E: fmt::Display,
{
    let mut values = Vec::with_capacity(point_sets.len());
    let mut failures = 0;
    for (j, points) in point_sets.iter().enumerate() {
        let omegas = map_to_box(points, bounds)?;
        let evaluated: Vec<Result<Vec<f64>, String>> = omegas
            .par_iter()
            .map(|w| match f(w) {
                Ok(v) if v.len() != names.len() => Err(format!("{} values for {} names", v.len(), names.len())),
                Ok(v) if v.iter().any(|x| !x.is_finite()) => Err(format!("non-finite value {v:?}")),
                Ok(v) => Ok(v),
                Err(e) => Err(e.to_string()),
            })
            .collect();
        let mut row = Vec::with_capacity(evaluated.len());
        for (k, r) in evaluated.into_iter().enumerate() {
            match r {
                Ok(v) => row.push(Some(v)),
                Err(e) => {
                    log::warn!("sample {k} of shift {j} at {:?} failed: {e}", omegas[k]);
                    failures += 1;
                    row.push(None);
                }
            }
        }
        values.push(row);
    }
    if failures > 0 {
        log::warn!("{failures} failed samples excluded from the statistics");
    }
    Ok(SampleSet {
        names: names.iter().map(|s| s.to_string()).collect(),
        values,
        failures,
    })
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct QoiStatistics {
    pub name: String,
    /// Grand mean `Q_q` (the plain mean when there is a single shift).
    pub mean: f64,
    /// Unbiased sample variance over the points of a shift, averaged over shifts.
    pub variance: f64,
    /// Per-shift averages `Q_N(h; Δ_j)`.
    pub shift_means: Vec<f64>,
    /// `sqrt(Σ_j (Q_N(h;Δ_j) - Q_q)^2 / (q-1))`, only for `q ≥ 2`.
    pub rms: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct Estimate {
    pub n: usize,
    pub q: usize,
    pub samples_used: usize,
    pub failures: usize,
    pub qois: Vec<QoiStatistics>,
}

impl Estimate {
    pub fn qoi(&self, name: &str) -> Option<&QoiStatistics> {
        self.qois.iter().find(|q| q.name == name)
    }
}

/// Statistics from the samples with indices `indices` in every shift.
pub fn statistics(set: &SampleSet, indices: &[usize]) -> Result<Estimate, QmcError> {
    let nq = set.names.len();
    let mut shift_means = vec![Vec::new(); nq];
    let mut shift_vars = vec![Vec::new(); nq];
    let mut used = 0;
    let mut failures = 0;
    for row in &set.values {
        let vals: Vec<&Vec<f64>> = indices.iter().filter_map(|&k| row[k].as_ref()).collect();
        failures += indices.len() - vals.len();
        if vals.is_empty() {
            continue;
        }
        used += vals.len();
        let m = vals.len() as f64;
        for i in 0..nq {
            let mean = vals.iter().map(|v| v[i]).sum::<f64>() / m;
            let var = if vals.len() > 1 {
                vals.iter().map(|v| (v[i] - mean).powi(2)).sum::<f64>() / (m - 1.0)
            } else {
                0.0
            };
            shift_means[i].push(mean);
            shift_vars[i].push(var);
        }
    }
    if used == 0 {
        return Err(QmcError::AllSamplesFailed);
    }
    let qois = set
        .names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let means = std::mem::take(&mut shift_means[i]);
            let q = means.len() as f64;
            let mean = means.iter().sum::<f64>() / q;
            let variance = shift_vars[i].iter().sum::<f64>() / q;
            let rms = (means.len() > 1).then(|| rms_error(&means));
            QoiStatistics {
                name: name.clone(),
                mean,
                variance,
                shift_means: means,
                rms,
            }
        })
        .collect();
    Ok(Estimate {
        n: indices.len(),
        q: set.shifts(),
        samples_used: used,
        failures,
        qois,
    })
}

/// RMS error estimate of a shifted lattice rule from its per-shift averages.
pub fn rms_error(shift_means: &[f64]) -> f64 {
    let q = shift_means.len();
    // the rounded grand mean of equal values need not equal them
    if q < 2 || shift_means.iter().all(|&m| m == shift_means[0]) {
        return 0.0;
    }
    let grand = shift_means.iter().sum::<f64>() / q as f64;
    (shift_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (q - 1) as f64).sqrt()
}

/// Runs `f` at `n` samples of `sampler` mapped to `bounds`.
pub fn estimate<F, E>(
    sampler: &Sampler,
    n: usize,
    bounds: &[[f64; 2]],
    names: &[&str],
    f: F,
) -> Result<Estimate, QmcError>
where
    F: Fn(&[f64]) -> Result<Vec<f64>, E> + Sync,
    E: fmt::Display,
{
    let sets = sampler.point_sets(n, bounds.len())?;
    let samples = evaluate(&sets, bounds, names, f)?;
    statistics(&samples, &(0..n).collect::<Vec<_>>())
}

/// Indices of the `n`-point estimate inside the `reference_n` sample set:
/// every `reference_n / n`-th lattice point (which is exactly the `n`-point
/// rule with the same `z`), or the first `n` Monte Carlo points.
pub fn subset_indices(sampler: &Sampler, n: usize, reference_n: usize) -> Result<Vec<usize>, QmcError> {
    if n == 0 || n > reference_n {
        return Err(QmcError::BadSubset { n, reference_n });
    }
    match sampler {
        Sampler::Mc { .. } => Ok((0..n).collect()),
        _ => {
            if !reference_n.is_multiple_of(n) {
                return Err(QmcError::BadSubset { n, reference_n });
            }
            let step = reference_n / n;
            Ok((0..n).map(|k| k * step).collect())
        }
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct ConvergenceRow {
    pub sampler: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub q: usize,
    pub qoi: String,
    pub mean: f64,
    pub variance: f64,
    pub abs_error: f64,
    pub rel_error: f64,
    pub rms: Option<f64>,
    pub var_abs_error: f64,
    pub var_rel_error: f64,
    pub failures: usize,
}

/// Errors of the mean and variance estimates for every `n` in `ns` against
/// the estimates at `reference_n`, from a single set of `reference_n` samples.
pub fn convergence_study<F, E>(
    sampler: &Sampler,
    ns: &[usize],
    reference_n: usize,
    bounds: &[[f64; 2]],
    names: &[&str],
    f: F,
) -> Result<Vec<ConvergenceRow>, QmcError>
where
    F: Fn(&[f64]) -> Result<Vec<f64>, E> + Sync,
    E: fmt::Display,
{
    if ns.iter().any(|&n| n > reference_n) {
        return Err(QmcError::BadSubset {
            n: *ns.iter().max().unwrap(),
            reference_n,
        });
    }
    let sets = sampler.point_sets(reference_n, bounds.len())?;
    let samples = evaluate(&sets, bounds, names, f)?;
    let reference = statistics(&samples, &(0..reference_n).collect::<Vec<_>>())?;
    convergence_rows(sampler, &samples, ns, &reference)
}

/// Rows of a convergence study for an already evaluated sample set.
pub fn convergence_rows(
    sampler: &Sampler,
    samples: &SampleSet,
    ns: &[usize],
    reference: &Estimate,
) -> Result<Vec<ConvergenceRow>, QmcError> {
    let mut rows = Vec::new();
    for &n in ns {
        let est = statistics(samples, &subset_indices(sampler, n, samples.points_per_shift())?)?;
        for (s, r) in est.qois.iter().zip(&reference.qois) {
            let abs_error = (s.mean - r.mean).abs();
            let var_abs_error = (s.variance - r.variance).abs();
            rows.push(ConvergenceRow {
                sampler: sampler.name().to_string(),
                n,
                q: est.q,
                qoi: s.name.clone(),
                mean: s.mean,
                variance: s.variance,
                abs_error,
                rel_error: relative(abs_error, r.mean),
                rms: s.rms,
                var_abs_error,
                var_rel_error: relative(var_abs_error, r.variance),
                failures: est.failures,
            });
        }
    }
    Ok(rows)
}

fn relative(err: f64, reference: f64) -> f64 {
    if reference == 0.0 {
        if err == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        err / reference.abs()
    }
}

/// Least-squares slope of `log y` against `log x` over the positive pairs.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let (mx, my) = (
        pts.iter().map(|p| p.0).sum::<f64>() / m,
        pts.iter().map(|p| p.1).sum::<f64>() / m,
    );
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx)
}

pub const QOI_NAMES: [&str; 4] = ["misfit", "state", "control", "cost"];

/// Quantities of interest of one optimal control solve.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct QoiRecord {
    pub omega: [f64; 2],
    /// `||y - y_d||`
    pub misfit: f64,
    /// `||y||`
    pub state: f64,
    /// `||u||`
    pub control: f64,
    pub cost: f64,
}

impl QoiRecord {
    pub fn values(&self) -> Vec<f64> {
        vec![self.misfit, self.state, self.control, self.cost]
    }
}

/// Optimal control on the gasket `D(omega)` at a fixed mesh level.
pub struct GasketProblem {
    pub hierarchy: MeshHierarchy,
    pub level: usize,
    pub data: ProblemData,
    pub options: ProblemOptions,
    pub optimizer: OptimizerOptions,
}

impl GasketProblem {
    pub fn solve(&self, omega: &[f64]) -> Result<QoiRecord, ControlError> {
        let &[w1, w2] = omega else {
            return Err(ControlError::InvalidParameter(format!(
                "gasket takes two parameters, got {}",
                omega.len()
            )));
        };
        let ls = LevelSet::gasket(w1, w2);
        let problem = DiscreteProblem::new(&self.hierarchy, self.level, &ls, &self.data, &self.options)?;
        let res = optimize(&problem, None, &self.optimizer)?;
        Ok(QoiRecord {
            omega: [w1, w2],
            misfit: problem.misfit_norm(&res.y),
            state: problem.l2_norm(&res.y),
            control: problem.l2_norm(&res.u),
            cost: res.cost,
        })
    }
}
