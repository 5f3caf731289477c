//! Level-set descent on the mean objective with an augmented Lagrangian
//! volume constraint.

use std::path::PathBuf;
use std::sync::Arc;

use crate::correlation::{
    assemble_correlation_matrix, CorrelationKernel, CorrelationRegion, LowRankFactorization,
};
use crate::error::{Error, Result};
use crate::fem::{
    solve_state_ensemble, Field, HookeLaw, LoadKind, Operator, SolverOptions, StateEnsemble,
};
use crate::io::{write_history, write_vtk};
use crate::levelset::{extend_velocity, initialize_levelset, Band, Hole, LevelSet, CFL_DEFAULT};
use crate::mesh::{BoundaryTag, Mesh};
use crate::objectives::{
    compliance_gradient, compliance_mean, dirichlet_energy_gradient, dirichlet_energy_mean,
    tracking_adjoints, tracking_gradient, tracking_mean, FunctionalKind, GradientDensity,
    TrackingData,
};

/// State equation solved on the current shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Physics {
    /// Poisson problem with `u = 0` on the free boundary, imposed by Nitsche's
    /// method with base penalty `penalty`.
    Poisson { penalty: f64 },
    /// Linear elasticity with the Ersatz material in the void.
    Elasticity { law: HookeLaw },
}

/// One independent part of the random data with its own factorization.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadPiece {
    pub kernel: CorrelationKernel,
    pub region: CorrelationRegion,
}

/// Fully resolved problem: geometry, initial shape, physics and data.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub mesh: Arc<Mesh>,
    pub holes: Vec<Hole>,
    pub functional: FunctionalKind,
    pub physics: Physics,
    pub clamp: BoundaryTag,
    pub load_kind: LoadKind,
    /// `𝔼(f)`; its state is the first member of the ensemble.
    pub mean_load: Option<Field>,
    /// Centred fluctuations; the data correlation is `𝔼(f)⊗𝔼(f)` plus the
    /// sum of the piece kernels.
    pub pieces: Vec<LoadPiece>,
    pub tracking: Option<TrackingData>,
}

#[derive(Debug, Clone)]
pub struct OptimizationConfig {
    pub scenario: Scenario,
    pub volume_target: f64,
    pub iterations: usize,
    pub lambda0: f64,
    /// Initial penalty; `None` picks `10 |ℳ(D₀)| / area` (at least 1).
    pub penalty0: Option<f64>,
    pub penalty_growth: f64,
    pub penalty_every: usize,
    /// `b_max = penalty_max_factor · b₀`.
    pub penalty_max_factor: f64,
    pub cfl: f64,
    pub redistance_every: usize,
    pub cholesky_epsilon: f64,
    pub max_rank: usize,
    pub ersatz: f64,
    /// `μ` of the velocity regularization, zero for plain extension.
    pub smoothing: f64,
    pub solver: SolverOptions,
    /// VTK snapshot cadence, zero for none.
    pub snapshot_every: usize,
    pub output_dir: Option<PathBuf>,
}

impl OptimizationConfig {
    pub fn new(scenario: Scenario, volume_target: f64, iterations: usize) -> Self {
        Self {
            scenario,
            volume_target,
            iterations,
            lambda0: 0.0,
            penalty0: None,
            penalty_growth: 1.2,
            penalty_every: 5,
            penalty_max_factor: 1e3,
            cfl: CFL_DEFAULT,
            redistance_every: 5,
            cholesky_epsilon: 1e-6,
            max_rank: 200,
            ersatz: 1e-3,
            smoothing: 0.0,
            solver: SolverOptions::default(),
            snapshot_every: 0,
            output_dir: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let range = |key: &str, message: String| {
            Err(Error::ConfigRange {
                key: format!("optimization.{key}"),
                message,
            })
        };
        let area = self.scenario.mesh.total_area();
        if !(self.volume_target > 0.0 && self.volume_target < area) {
            return range("volume_target", format!("must lie in (0, {area})"));
        }
        if !(self.cfl > 0.0 && self.cfl <= 0.9) {
            return range("cfl", "must lie in (0, 0.9]".into());
        }
        if !(self.penalty_growth >= 1.0) || self.penalty_every == 0 {
            return range(
                "penalty_growth",
                "growth must be ≥ 1 and the cadence ≥ 1".into(),
            );
        }
        if !(self.penalty_max_factor >= 1.0) {
            return range("penalty_max_factor", "must be ≥ 1".into());
        }
        if matches!(self.penalty0, Some(b) if !(b > 0.0)) {
            return range("penalty0", "must be > 0".into());
        }
        if !(self.cholesky_epsilon > 0.0) || self.max_rank == 0 {
            return range(
                "cholesky_epsilon",
                "epsilon must be > 0 and max_rank ≥ 1".into(),
            );
        }
        if !(self.ersatz > 0.0 && self.ersatz < 1.0) {
            return range("ersatz", "must lie in (0, 1)".into());
        }
        if !(self.smoothing >= 0.0) {
            return range("smoothing", "must be ≥ 0".into());
        }
        let s = &self.scenario;
        if s.functional == FunctionalKind::Tracking && s.tracking.is_none() {
            return range("tracking", "tracking functional needs a target".into());
        }
        let elastic = matches!(s.physics, Physics::Elasticity { .. });
        if elastic != (s.functional == FunctionalKind::Compliance) {
            return range(
                "functional",
                "compliance pairs with elasticity, the others with Poisson".into(),
            );
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub volume: f64,
    pub lambda: f64,
    pub penalty: f64,
    /// Pseudo-time step taken from this iterate, zero for the last one.
    pub dt: f64,
    pub rank: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Completed,
    StepCollapse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationHistory {
    pub records: Vec<IterationRecord>,
    pub termination: Termination,
    pub final_phi: Vec<f64>,
}

/// `L = ℳ + λ (Vol − V_t) + (b/2) (Vol − V_t)²`
pub fn augmented_lagrangian_value(
    m: f64,
    vol: f64,
    volume_target: f64,
    lambda: f64,
    penalty: f64,
) -> f64 {
    let c = vol - volume_target;
    m + lambda * c + 0.5 * penalty * c * c
}

/// `λ′ = λ + b (Vol − V_t)`, `b′ = min(growth · b, b_max)`.
pub fn multiplier_update(
    lambda: f64,
    penalty: f64,
    vol: f64,
    volume_target: f64,
    growth: f64,
    penalty_max: f64,
) -> (f64, f64) {
    (
        lambda + penalty * (vol - volume_target),
        (growth * penalty).min(penalty_max),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Accept,
    /// Retry from the last accepted iterate with the halved step.
    Retry,
    /// The step fell below its floor.
    Collapse,
}

/// Pseudo-time step control on the augmented Lagrangian. A trial that
/// increases `L` over the last accepted iterate halves `dt`; five or more
/// consecutive decreases grow it by 1.2, never above `cap`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub dt: f64,
    pub cap: f64,
    pub floor: f64,
    decreases: usize,
}

impl StepControl {
    pub fn new(dt: f64, cap: f64, floor: f64) -> Self {
        Self {
            dt: dt.min(cap),
            cap,
            floor,
            decreases: 0,
        }
    }

    pub fn judge(&mut self, accepted: f64, trial: f64) -> StepOutcome {
        if trial > accepted {
            self.decreases = 0;
            self.dt *= 0.5;
            if self.dt < self.floor {
                StepOutcome::Collapse
            } else {
                StepOutcome::Retry
            }
        } else {
            self.decreases += 1;
            if self.decreases >= 5 {
                self.dt = (1.2 * self.dt).min(self.cap);
            }
            StepOutcome::Accept
        }
    }
}

/// Loads of the ensemble, fixed for a run.
#[derive(Debug, Clone)]
pub struct FactoredLoads {
    pub loads: Vec<Field>,
    /// Coefficients of `𝔼(u)` on the ensemble states.
    pub mean_coefficients: Vec<f64>,
    pub factorizations: Vec<LowRankFactorization>,
}

/// Mean load followed by the factors of every piece. A piece that hits
/// `max_rank` before `epsilon` keeps its truncated factorization.
pub fn factorize_loads(
    scenario: &Scenario,
    epsilon: f64,
    max_rank: usize,
) -> Result<FactoredLoads> {
    let mut loads = Vec::new();
    let mut factorizations = Vec::new();
    if let Some(m) = &scenario.mean_load {
        loads.push(m.clone());
    }
    for piece in &scenario.pieces {
        let dc = assemble_correlation_matrix(&piece.kernel, &scenario.mesh, piece.region)?;
        if let Some(direct) = dc.direct_loads() {
            loads.extend(direct.iter().cloned());
            continue;
        }
        let fac = match dc.factorize(epsilon, max_rank) {
            Ok(f) => f,
            Err(Error::RankExhausted {
                partial,
                trace_error,
                ..
            }) => {
                log::info!(
                    "kernel truncated at rank {max_rank}, relative trace error {trace_error:.3e}"
                );
                *partial
            }
            Err(e) => return Err(e),
        };
        loads.extend(dc.loads(&fac)?);
        factorizations.push(fac);
    }
    if loads.is_empty() {
        let kind = match scenario.physics {
            Physics::Poisson { .. } => crate::fem::FieldKind::Scalar,
            Physics::Elasticity { .. } => crate::fem::FieldKind::Vector2,
        };
        loads.push(Field::zeros(kind, scenario.mesh.node_count()));
    }
    let mut mean_coefficients = vec![0.0; loads.len()];
    if scenario.mean_load.is_some() {
        mean_coefficients[0] = 1.0;
    }
    Ok(FactoredLoads {
        loads,
        mean_coefficients,
        factorizations,
    })
}

/// Mean objective, volume and gradient density on one shape.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub objective: f64,
    pub volume: f64,
    pub gradient: GradientDensity,
    pub ensemble: StateEnsemble,
}

pub fn evaluate(
    cfg: &OptimizationConfig,
    loads: &FactoredLoads,
    ls: &LevelSet,
    iteration: usize,
) -> Result<Evaluation> {
    let s = &cfg.scenario;
    let operator = match s.physics {
        Physics::Poisson { penalty } => Operator::immersed_poisson(ls, cfg.ersatz, penalty),
        Physics::Elasticity { law } => Operator::ersatz_elasticity(ls, law, cfg.ersatz),
    }
    .map_err(|e| e.at_stage(iteration, "operator"))?;
    let mut ens = solve_state_ensemble(
        &s.mesh,
        operator,
        s.clamp,
        &loads.loads,
        s.load_kind,
        cfg.solver,
    )
    .map_err(|e| e.at_stage(iteration, "solve"))?;
    let (objective, gradient) = match s.functional {
        FunctionalKind::DirichletEnergy => (
            dirichlet_energy_mean(&ens).map_err(|e| e.at_stage(iteration, "objective"))?,
            dirichlet_energy_gradient(&ens, ls),
        ),
        FunctionalKind::Tracking => {
            let data = s.tracking.as_ref().ok_or(Error::Missing("tracking data"))?;
            ens.set_mean_from_states(loads.mean_coefficients.clone())
                .and_then(|_| tracking_adjoints(&mut ens, data, &s.mesh))
                .map_err(|e| e.at_stage(iteration, "adjoint"))?;
            (
                tracking_mean(&ens, data, &s.mesh)
                    .map_err(|e| e.at_stage(iteration, "objective"))?,
                tracking_gradient(&ens, data, ls),
            )
        }
        FunctionalKind::Compliance => (
            compliance_mean(&ens).map_err(|e| e.at_stage(iteration, "objective"))?,
            compliance_gradient(&ens, ls),
        ),
    };
    Ok(Evaluation {
        objective,
        volume: ls.volume(),
        gradient: gradient.map_err(|e| e.at_stage(iteration, "gradient"))?,
        ensemble: ens,
    })
}

struct Outputs<'a> {
    cfg: &'a OptimizationConfig,
}

impl Outputs<'_> {
    fn snapshot(
        &self,
        iteration: usize,
        ls: &LevelSet,
        grad: Option<&GradientDensity>,
    ) -> Result<()> {
        let (Some(dir), every) = (&self.cfg.output_dir, self.cfg.snapshot_every) else {
            return Ok(());
        };
        if every == 0 || !iteration.is_multiple_of(every) {
            return Ok(());
        }
        let mesh = ls.mesh();
        let cells = grad.map(|g| g.cell_values(mesh.triangle_count()));
        write_vtk(
            mesh,
            ls.phi(),
            &ls.density(self.cfg.ersatz),
            cells.as_deref(),
            dir.join(format!("shape_{iteration:04}.vtk")),
        )
        .map_err(|e| e.at_stage(iteration, "output"))
    }

    fn final_shape(&self, ls: &LevelSet, grad: &GradientDensity) -> Result<()> {
        let Some(dir) = &self.cfg.output_dir else {
            return Ok(());
        };
        let mesh = ls.mesh();
        write_vtk(
            mesh,
            ls.phi(),
            &ls.density(self.cfg.ersatz),
            Some(&grad.cell_values(mesh.triangle_count())),
            dir.join("shape_final.vtk"),
        )
    }

    fn history(&self, history: &OptimizationHistory) -> Result<()> {
        match &self.cfg.output_dir {
            Some(dir) => write_history(history, dir.join("history.csv")),
            None => Ok(()),
        }
    }
}

/// Runs the descent loop. The load factorization is computed once; each
/// iteration solves the ensemble, records `ℳ` and `Vol`, and moves the
/// interface with `V = −(𝒟 + λ + b (Vol − V_t))`, normalized to unit
/// maximum so that `dt` is a distance.
pub fn run_optimization(cfg: &OptimizationConfig) -> Result<OptimizationHistory> {
    cfg.validate()?;
    let s = &cfg.scenario;
    let out = Outputs { cfg };
    if let Some(dir) = &cfg.output_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let loads = factorize_loads(s, cfg.cholesky_epsilon, cfg.max_rank)
        .map_err(|e| e.at_stage(0, "factorize"))?;
    let rank = loads.loads.len();
    let mut ls =
        initialize_levelset(s.mesh.clone(), &s.holes).map_err(|e| e.at_stage(0, "initialize"))?;
    let h = s.mesh.h_min();
    let cap = cfg.cfl * h;
    let floor = 1e-6 * h;
    let area = s.mesh.total_area();

    let mut history = OptimizationHistory {
        records: Vec::with_capacity(cfg.iterations + 1),
        termination: Termination::Completed,
        final_phi: Vec::new(),
    };
    let mut lambda = cfg.lambda0;
    let mut ev = evaluate(cfg, &loads, &ls, 0)?;
    let mut penalty = cfg
        .penalty0
        .unwrap_or_else(|| (10.0 * ev.objective.abs() / area).max(1.0));
    let penalty_max = cfg.penalty_max_factor * penalty;
    let mut control = StepControl::new(cap, cap, floor);
    let lagrangian = |e: &Evaluation, lambda: f64, penalty: f64| {
        augmented_lagrangian_value(e.objective, e.volume, cfg.volume_target, lambda, penalty)
    };

    let result = (|| -> Result<()> {
        for it in 0..=cfg.iterations {
            log::debug!(
                "iteration {it}: objective {:.6e}, volume {:.6}, dt {:.3e}",
                ev.objective,
                ev.volume,
                control.dt
            );
            let mut record = IterationRecord {
                iteration: it,
                objective: ev.objective,
                volume: ev.volume,
                lambda,
                penalty,
                dt: 0.0,
                rank,
            };
            out.snapshot(it, &ls, Some(&ev.gradient))?;
            if it == cfg.iterations {
                history.records.push(record);
                break;
            }
            let shift = lambda + penalty * (ev.volume - cfg.volume_target);
            let density = ev.gradient.map(|d| -(d + shift));
            let mut v = extend_velocity(&density, &ls, cfg.smoothing)
                .map_err(|e| e.at_stage(it, "extend"))?;
            let vmax = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            if vmax > 0.0 {
                v.iter_mut().for_each(|x| *x /= vmax);
                let accepted = lagrangian(&ev, lambda, penalty);
                let redistance = cfg.redistance_every > 0 && (it + 1) % cfg.redistance_every == 0;
                loop {
                    let dt = control.dt;
                    let substeps = (dt / cap).ceil().max(1.0) as usize;
                    let trial = ls
                        .advect_with_cfl(&v, dt, substeps, cfg.cfl)
                        .map_err(|e| e.at_stage(it, "advect"))?;
                    let trial_ev = evaluate(cfg, &loads, &trial, it + 1)?;
                    match control.judge(accepted, lagrangian(&trial_ev, lambda, penalty)) {
                        StepOutcome::Accept => {
                            record.dt = dt;
                            if redistance {
                                ls = trial
                                    .redistance(Band::Full)
                                    .map_err(|e| e.at_stage(it, "redistance"))?;
                                ev = evaluate(cfg, &loads, &ls, it + 1)?;
                            } else {
                                ls = trial;
                                ev = trial_ev;
                            }
                            break;
                        }
                        StepOutcome::Retry => {
                            log::debug!("iteration {it}: step rejected, dt {:.3e}", control.dt);
                        }
                        StepOutcome::Collapse => {
                            history.termination = Termination::StepCollapse;
                            break;
                        }
                    }
                }
            }
            history.records.push(record);
            if history.termination == Termination::StepCollapse {
                break;
            }
            let growth = if (it + 1) % cfg.penalty_every == 0 {
                cfg.penalty_growth
            } else {
                1.0
            };
            (lambda, penalty) = multiplier_update(
                lambda,
                penalty,
                ev.volume,
                cfg.volume_target,
                growth,
                penalty_max,
            );
        }
        Ok(())
    })();
    history.final_phi = ls.phi().to_vec();
    out.history(&history)?;
    result?;
    out.final_shape(&ls, &ev.gradient)?;
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lagrangian_trivial_cases() {
        assert_eq!(augmented_lagrangian_value(3.0, 0.5, 0.5, 7.0, 9.0), 3.0);
        assert_eq!(augmented_lagrangian_value(3.0, 0.9, 0.5, 0.0, 0.0), 3.0);
        let up = augmented_lagrangian_value(1.0, 0.6, 0.5, 0.0, 4.0);
        let down = augmented_lagrangian_value(1.0, 0.4, 0.5, 0.0, 4.0);
        assert!((up - down).abs() < 1e-15);
    }

    #[test]
    fn multiplier_rules() {
        assert_eq!(
            multiplier_update(2.0, 5.0, 0.3, 0.3, 1.2, 100.0),
            (2.0, 6.0)
        );
        assert_eq!(multiplier_update(0.0, 5.0, 0.4, 0.3, 1.0, 100.0).1, 5.0);
        let v = 0.1;
        let (l1, b1) = multiplier_update(0.0, 2.0, 0.3 + v, 0.3, 1.5, 100.0);
        let (l2, _) = multiplier_update(l1, b1, 0.3 + v, 0.3, 1.5, 100.0);
        assert!((l1 - 2.0 * v).abs() < 1e-15);
        assert!((l2 - l1 - b1 * v).abs() < 1e-15);
        assert_eq!(multiplier_update(0.0, 90.0, 0.3, 0.3, 2.0, 100.0).1, 100.0);
    }

    #[test]
    fn step_grows_on_monotone_decrease_up_to_cap() {
        let mut c = StepControl::new(0.01, 0.05, 1e-8);
        for k in 0..60 {
            assert_eq!(
                c.judge(10.0 - k as f64, 9.5 - k as f64),
                StepOutcome::Accept
            );
            assert!(c.dt <= 0.05);
        }
        assert_eq!(c.dt, 0.05);
    }

    #[test]
    fn step_halves_on_each_increase_and_collapses_at_floor() {
        let mut c = StepControl::new(0.04, 0.05, 0.004);
        for k in 0..6 {
            let before = c.dt;
            if k % 2 == 0 {
                assert_eq!(c.judge(1.0, 2.0), StepOutcome::Retry);
                assert_eq!(c.dt, 0.5 * before);
            } else {
                assert_eq!(c.judge(2.0, 1.0), StepOutcome::Accept);
                assert_eq!(c.dt, before);
            }
        }
        assert_eq!(c.dt, 0.005);
        assert_eq!(c.judge(1.0, 2.0), StepOutcome::Collapse);
    }
}
