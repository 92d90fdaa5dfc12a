use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, ensure, Context, Result};
use cutfem_core::control::{LinearSolver, MultigridOptions, OptimizerOptions, PreconditionerKind, ProblemOptions};
use cutfem_core::fem::PenaltyParams;
use cutfem_core::mesh::{build_structured_mesh_xy, BoundingBox, MeshHierarchy, Point};
use cutfem_core::qmc;
use cutfem_core::LevelSet;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    #[serde(alias = "CONVERGE")]
    Converge,
    #[serde(alias = "PRECOND")]
    Precond,
    #[serde(alias = "QMC_DETERMINISTIC")]
    QmcDeterministic,
    #[serde(alias = "QMC_RANDOMIZED")]
    QmcRandomized,
    #[serde(alias = "GEOMETRY_DUMP")]
    GeometryDump,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Converge => "converge",
            Self::Precond => "precond",
            Self::QmcDeterministic => "qmc_deterministic",
            Self::QmcRandomized => "qmc_randomized",
            Self::GeometryDump => "geometry_dump",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeometrySpec {
    Circle {
        #[serde(default)]
        center: Point,
        #[serde(default = "one")]
        radius: f64,
    },
    Gasket {
        omega: [f64; 2],
    },
    Affine {
        normal: Point,
        offset: f64,
    },
    /// Level-set expression in `x` and `y`, negative inside.
    User {
        expression: String,
    },
}

fn one() -> f64 {
    1.0
}

impl Default for GeometrySpec {
    fn default() -> Self {
        Self::Circle {
            center: [0.0, 0.0],
            radius: 1.0,
        }
    }
}

impl GeometrySpec {
    pub fn level_set(&self) -> Result<LevelSet> {
        Ok(match self {
            Self::Circle { center, radius } => {
                ensure!(*radius > 0.0, "circle radius must be positive");
                LevelSet::Circle {
                    center: *center,
                    radius: *radius,
                }
            }
            Self::Gasket { omega } => LevelSet::gasket(omega[0], omega[1]),
            Self::Affine { normal, offset } => LevelSet::Affine {
                normal: *normal,
                offset: *offset,
            },
            Self::User { expression } => {
                let tree = evalexpr::build_operator_tree(expression)
                    .with_context(|| format!("cannot parse level set `{expression}`"))?;
                let eval = move |p: Point| -> std::result::Result<f64, evalexpr::EvalexprError> {
                    use evalexpr::{ContextWithMutableVariables, HashMapContext, Value};
                    let mut ctx = HashMapContext::new();
                    ctx.set_value("x".into(), Value::Float(p[0]))?;
                    ctx.set_value("y".into(), Value::Float(p[1]))?;
                    tree.eval_number_with_context(&ctx)
                };
                eval([0.0, 0.0]).with_context(|| format!("cannot evaluate level set `{expression}`"))?;
                LevelSet::Custom(Arc::new(move |p| eval(p).unwrap_or(f64::NAN)))
            }
        })
    }

    pub fn is_unit_circle(&self) -> bool {
        matches!(self, Self::Circle { center, radius } if *center == [0.0, 0.0] && *radius == 1.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    pub min: Point,
    pub max: Point,
    /// Subdivisions of the coarsest mesh along x and y.
    pub cells: [usize; 2],
    pub levels: Vec<usize>,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self {
            min: [-1.5, -1.5],
            max: [1.5, 1.5],
            cells: [17, 17],
            levels: vec![0, 1, 2, 3],
        }
    }
}

impl MeshConfig {
    pub fn hierarchy(&self) -> Result<MeshHierarchy> {
        self.hierarchy_to(self.levels.iter().copied().max().unwrap_or(0))
    }

    pub fn hierarchy_to(&self, finest: usize) -> Result<MeshHierarchy> {
        let bbox = BoundingBox::new(self.min, self.max)?;
        let base = build_structured_mesh_xy(bbox, self.cells[0], self.cells[1])?;
        Ok(MeshHierarchy::new(base, finest)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub alpha: f64,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self { alpha: 0.1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrecondConfig {
    pub preconditioners: Vec<PreconditionerKind>,
    pub lanczos_steps: usize,
    pub seed: u64,
}

impl Default for PrecondConfig {
    fn default() -> Self {
        Self {
            preconditioners: vec![
                PreconditionerKind::None,
                PreconditionerKind::Jacobi,
                PreconditionerKind::Sgs,
                PreconditionerKind::Multigrid,
            ],
            lanczos_steps: 400,
            seed: 7,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrand {
    /// `t1 t2` on the unit square, mean 1/4.
    Product,
    /// Quantities of interest of the optimal control problem on the gasket.
    Gasket,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QmcConfig {
    pub integrand: Integrand,
    #[serde(rename = "box")]
    pub bounds: Vec<[f64; 2]>,
    pub ns: Vec<usize>,
    /// Sample count of the self-reference; defaults to the largest of `ns`.
    pub reference_n: Option<usize>,
    pub z: Vec<u64>,
    pub q: usize,
    pub seed: u64,
    /// Monte Carlo runs alongside the deterministic lattice, seeded
    /// `seed, seed + 1, ...`.
    pub mc_runs: usize,
    /// Mesh level of the per-sample solves.
    pub level: usize,
}

impl Default for QmcConfig {
    fn default() -> Self {
        Self {
            integrand: Integrand::Gasket,
            bounds: qmc::WIDE_BOX.to_vec(),
            ns: (1..=10).map(|m| 1 << m).collect(),
            reference_n: None,
            z: qmc::DEFAULT_GENERATOR.to_vec(),
            q: qmc::DEFAULT_SHIFTS,
            seed: qmc::DEFAULT_SEED,
            mc_runs: 1,
            level: 0,
        }
    }
}

impl QmcConfig {
    pub fn reference_n(&self) -> usize {
        self.reference_n
            .unwrap_or_else(|| self.ns.iter().copied().max().unwrap_or(1))
    }

    pub fn bounds(&self) -> Vec<[f64; 2]> {
        match self.integrand {
            Integrand::Product => vec![[0.0, 1.0]; self.z.len()],
            Integrand::Gasket => self.bounds.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DumpConfig {
    pub level: usize,
    /// Also solve the control problem and write nodal fields.
    pub solve: bool,
}

impl Default for DumpConfig {
    fn default() -> Self {
        Self { level: 0, solve: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub geometry: GeometrySpec,
    #[serde(default)]
    pub mesh: MeshConfig,
    #[serde(default)]
    pub penalty: PenaltyParams,
    #[serde(default)]
    pub problem: ProblemConfig,
    #[serde(default)]
    pub solver: LinearSolver,
    #[serde(default)]
    pub multigrid: MultigridOptions,
    #[serde(default)]
    pub optimizer: OptimizerOptions,
    #[serde(default)]
    pub precond: PrecondConfig,
    #[serde(default)]
    pub qmc: QmcConfig,
    #[serde(default)]
    pub dump: DumpConfig,
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind) -> Self {
        Self {
            experiment,
            output: None,
            geometry: GeometrySpec::default(),
            mesh: MeshConfig::default(),
            penalty: PenaltyParams::default(),
            problem: ProblemConfig::default(),
            solver: LinearSolver::default(),
            multigrid: MultigridOptions::default(),
            optimizer: OptimizerOptions::default(),
            precond: PrecondConfig::default(),
            qmc: QmcConfig::default(),
            dump: DumpConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    /// Applies a seed override to every seeded component.
    pub fn set_seed(&mut self, seed: u64) {
        self.precond.seed = seed;
        self.qmc.seed = seed;
    }

    pub fn problem_options(&self) -> ProblemOptions {
        ProblemOptions {
            params: self.penalty,
            solver: self.solver,
            multigrid: self.multigrid,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.penalty;
        ensure!(p.gamma_d > 0.0, "gamma_d must be positive");
        ensure!(p.gamma_n >= 0.0 && p.gamma_1 >= 0.0, "penalties must be nonnegative");
        ensure!(self.problem.alpha > 0.0, "alpha must be positive");
        ensure!(self.mesh.cells.iter().all(|&c| c > 0), "mesh cells must be positive");
        ensure!(!self.mesh.levels.is_empty(), "at least one mesh level is needed");
        ensure!(
            self.mesh.levels.windows(2).all(|w| w[0] < w[1]),
            "mesh levels must be strictly increasing"
        );
        if let LinearSolver::Cg { tol, max_iter, .. } = self.solver {
            ensure!(tol > 0.0 && max_iter > 0, "CG tolerance and iteration cap must be positive");
        }
        ensure!(self.optimizer.max_iter > 0, "optimizer max_iter must be positive");
        let q = &self.qmc;
        if matches!(self.experiment, ExperimentKind::QmcDeterministic | ExperimentKind::QmcRandomized) {
            ensure!(!q.ns.is_empty() && q.ns.iter().all(|&n| n > 0), "qmc.ns must be positive counts");
            ensure!(
                q.ns.iter().all(|&n| n <= q.reference_n()),
                "qmc.reference_n must not be smaller than any of qmc.ns"
            );
            ensure!(!q.z.is_empty(), "qmc.z must be nonempty");
            if q.integrand == Integrand::Gasket {
                ensure!(q.bounds.len() == 2 && q.z.len() == 2, "the gasket has two parameters");
            }
            if self.experiment == ExperimentKind::QmcRandomized {
                ensure!(q.q >= 2, "randomized QMC needs at least two shifts");
            }
        }
        if self.experiment == ExperimentKind::Precond && self.precond.lanczos_steps < 2 {
            bail!("precond.lanczos_steps must be at least 2");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = ExperimentConfig::from_toml("experiment = \"CONVERGE\"").unwrap();
        assert_eq!(cfg.experiment, ExperimentKind::Converge);
        assert!(cfg.geometry.is_unit_circle());
        assert_eq!(cfg.mesh.levels, vec![0, 1, 2, 3]);
        assert_eq!(cfg.penalty, PenaltyParams::default());
    }

    #[test]
    fn rejects_bad_values() {
        for text in [
            "experiment = \"converge\"\n[mesh]\nlevels = [1, 1]",
            "experiment = \"converge\"\n[problem]\nalpha = 0.0",
            "experiment = \"converge\"\n[penalty]\ngamma_d = -1.0",
            "experiment = \"converge\"\nbogus = 1",
            "experiment = \"qmc_randomized\"\n[qmc]\nq = 1",
        ] {
            assert!(ExperimentConfig::from_toml(text).is_err(), "{text}");
        }
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = ExperimentConfig::new(ExperimentKind::QmcRandomized);
        cfg.geometry = GeometrySpec::Gasket { omega: [9.0, 2.0] };
        cfg.solver = LinearSolver::Direct;
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn user_expression_level_set() {
        let g = GeometrySpec::User {
            expression: "x * x + y * y - 1.0".into(),
        };
        let ls = g.level_set().unwrap();
        assert!((ls.eval([0.5, 0.5]) + 0.5).abs() < 1e-15);
        assert!(GeometrySpec::User {
            expression: "x +* 1".into()
        }
        .level_set()
        .is_err());
    }
}
