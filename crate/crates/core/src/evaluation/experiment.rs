use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{add_noise, nmae, ErrorReport, NoiseSpec, Snr};
use crate::dynamics::{
    ball_on_beam_game, ball_on_beam_lq_game, lq_game, BallOnBeamParams, LinearGameMatrices, SystemKind, DEFAULT_DT,
    DEFAULT_HORIZON,
};
use crate::error::{Error, Result};
use crate::estimators::{
    estimate_feedback_gains, identify_cooperative, identify_feedback, identify_open_loop, FixedWeight,
    IdentificationConfig, IdentificationResult,
};
use crate::forward::{
    solve_cooperative, solve_feedback_nash_lq, solve_open_loop_nash, solve_open_loop_nash_lq, Concept, FeedbackGains,
    FeedbackHorizon, SolverOptions, SolverReport,
};
use crate::game::{CostParameters, DemonstrationSet, GameDefinition, Trajectory};
use crate::likelihood::DVariant;
use crate::par::*;

/// Continuous-time LQ system `ẋ = A x + Σ B_i u_i` with regulation features
/// `-[x_1², …, x_n², u_i²]` per player (`u_i²` summed over channels).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LqDefinition {
    /// Row-major `n × n`.
    pub a: Vec<Vec<f64>>,
    /// One row-major `n × m_i` matrix per player.
    pub b: Vec<Vec<Vec<f64>>>,
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(Error::Config(format!("{what} must be a non-empty rectangular matrix")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

impl LqDefinition {
    pub fn matrices(&self, dt: f64) -> Result<LinearGameMatrices> {
        let a = matrix(&self.a, "A")?;
        let b = self
            .b
            .iter()
            .enumerate()
            .map(|(i, m)| matrix(m, &format!("B of player {}", i + 1)))
            .collect::<Result<Vec<_>>>()?;
        LinearGameMatrices::new(a, b, dt)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SystemSpec {
    Builtin(SystemKind),
    Lq(LqDefinition),
}

impl SystemSpec {
    pub fn is_linear(&self) -> bool {
        match self {
            SystemSpec::Builtin(kind) => kind.is_linear(),
            SystemSpec::Lq(_) => true,
        }
    }

    pub fn label(&self) -> String {
        match self {
            SystemSpec::Builtin(kind) => kind.to_string(),
            SystemSpec::Lq(_) => "custom-lq".into(),
        }
    }

    /// The discretized game and, for linear systems, its matrices.
    pub fn build(
        &self,
        params: &BallOnBeamParams,
        horizon: usize,
        dt: f64,
    ) -> Result<(GameDefinition, Option<LinearGameMatrices>)> {
        match self {
            SystemSpec::Builtin(SystemKind::BallOnBeam) => Ok((ball_on_beam_game(params, horizon, dt)?, None)),
            SystemSpec::Builtin(SystemKind::BallOnBeamLq) => {
                let (game, lin) = ball_on_beam_lq_game(params, horizon, dt)?;
                Ok((game, Some(lin)))
            }
            SystemSpec::Lq(def) => {
                let lin = def.matrices(dt)?;
                Ok((lq_game("custom-lq", &lin, horizon)?, Some(lin)))
            }
        }
    }
}

/// A demonstration generated under `concept` on `system`, then identified
/// with the matching estimator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pipeline {
    pub name: String,
    pub concept: Concept,
    pub system: SystemSpec,
}

impl Pipeline {
    pub fn new(name: &str, concept: Concept, system: SystemKind) -> Self {
        Self {
            name: name.into(),
            concept,
            system: SystemSpec::Builtin(system),
        }
    }

    /// CG and NOLN on the nonlinear ball-on-beam, LOLN and FB on its
    /// linearization.
    pub fn benchmark_set() -> Vec<Self> {
        vec![
            Self::new("CG", Concept::Cooperative, SystemKind::BallOnBeam),
            Self::new("NOLN", Concept::OpenLoopNash, SystemKind::BallOnBeam),
            Self::new("LOLN", Concept::OpenLoopNash, SystemKind::BallOnBeamLq),
            Self::new("FB", Concept::FeedbackNash, SystemKind::BallOnBeamLq),
        ]
    }
}

/// Inverse temperature used by the benchmark configuration.
pub const BENCHMARK_INVERSE_TEMPERATURE: f64 = 1000.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub pipelines: Vec<Pipeline>,
    pub params: BallOnBeamParams,
    /// Ground-truth weights per player.
    pub theta: Vec<Vec<f64>>,
    pub x1: Vec<f64>,
    pub dt: f64,
    pub horizon: usize,
    pub fixed: Vec<FixedWeight>,
    pub variant: DVariant,
    pub inverse_temperature: f64,
    pub snr: Vec<Snr>,
    pub seed: u64,
    /// Noise realizations per noisy cell; the grid reports their median.
    pub trials: usize,
    pub solver: SolverOptions,
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            pipelines: Pipeline::benchmark_set(),
            params: BallOnBeamParams::default(),
            theta: crate::dynamics::benchmark_parameters().theta,
            x1: crate::dynamics::benchmark_initial_state().iter().copied().collect(),
            dt: DEFAULT_DT,
            horizon: DEFAULT_HORIZON,
            fixed: vec![
                FixedWeight { player: 1, index: 5, value: 2.0 },
                FixedWeight { player: 2, index: 5, value: 1.0 },
            ],
            variant: DVariant::Plain,
            inverse_temperature: BENCHMARK_INVERSE_TEMPERATURE,
            snr: vec![Snr::Db(15.0), Snr::Db(20.0), Snr::Db(25.0), Snr::Db(30.0), Snr::Infinite],
            seed: 0,
            trials: 1,
            solver: SolverOptions::default(),
            tol: 1e-8,
            max_iterations: 500,
        }
    }
}

impl ExperimentConfig {
    pub fn identification(&self) -> IdentificationConfig {
        IdentificationConfig {
            fixed: self.fixed.clone(),
            variant: self.variant,
            tol: self.tol,
            max_iterations: self.max_iterations,
            inverse_temperature: self.inverse_temperature,
            ..IdentificationConfig::default()
        }
    }

    pub fn ground_truth(&self) -> CostParameters {
        CostParameters {
            theta: self.theta.clone(),
        }
    }

    pub fn initial_state(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.x1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.pipelines.is_empty() {
            return Err(Error::Config("no pipelines selected".into()));
        }
        if self.snr.is_empty() {
            return Err(Error::Config("no SNR levels selected".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        for p in &self.pipelines {
            if p.concept == Concept::FeedbackNash && !p.system.is_linear() {
                return Err(Error::Unsupported(format!(
                    "pipeline {}: feedback Nash synthesis is only available for linear-quadratic systems",
                    p.name
                )));
            }
            let (game, _) = p.system.build(&self.params, self.horizon, self.dt)?;
            self.ground_truth().check_against(&game)?;
            if self.x1.len() != game.state_dim() {
                return Err(Error::Dimension {
                    what: "initial state".into(),
                    expected: game.state_dim(),
                    actual: self.x1.len(),
                });
            }
        }
        Ok(())
    }
}

/// Forward solution and, for feedback Nash, its gains.
#[derive(Clone, Debug)]
pub struct Synthesis {
    pub trajectory: Trajectory,
    pub gains: Option<FeedbackGains>,
    pub report: SolverReport,
}

/// Solve the forward game under `concept`. Open-loop Nash uses the LQ
/// recursion when matrices are given. Feedback Nash requires them and uses
/// stationary gains, or the finite-horizon recursion when no stabilizing
/// stationary solution is found.
pub fn synthesize(
    game: &GameDefinition,
    lin: Option<&LinearGameMatrices>,
    concept: Concept,
    theta: &CostParameters,
    x1: &DVector<f64>,
    opts: &SolverOptions,
) -> Result<Synthesis> {
    let (trajectory, gains, report) = match (concept, lin) {
        (Concept::Cooperative, _) => {
            let (t, r) = solve_cooperative(game, theta, x1, opts)?;
            (t, None, r)
        }
        (Concept::OpenLoopNash, Some(lin)) => {
            let (t, r) = solve_open_loop_nash_lq(lin, theta, x1, game.horizon())?;
            (t, None, r)
        }
        (Concept::OpenLoopNash, None) => {
            let (t, r) = solve_open_loop_nash(game, theta, x1, opts)?;
            (t, None, r)
        }
        (Concept::FeedbackNash, Some(lin)) => {
            match solve_feedback_nash_lq(lin, theta, game.horizon(), FeedbackHorizon::Stationary, x1, opts) {
                Ok((g, t, r)) => (t, Some(g), r),
                Err(e @ (Error::RiccatiDivergence { .. } | Error::Unstable(_))) => {
                    let (g, t, mut r) =
                        solve_feedback_nash_lq(lin, theta, game.horizon(), FeedbackHorizon::Finite, x1, opts)?;
                    r.message = Some(format!("no stationary solution ({e}); used finite-horizon gains"));
                    (t, Some(g), r)
                }
                Err(e) => return Err(e),
            }
        }
        (Concept::FeedbackNash, None) => {
            return Err(Error::Unsupported(
                "feedback Nash synthesis is only available for linear-quadratic systems".into(),
            ))
        }
    };
    Ok(Synthesis {
        trajectory,
        gains,
        report,
    })
}

/// Identified weights for all players and the per-estimator results.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Identification {
    pub theta: Vec<Vec<f64>>,
    pub results: Vec<IdentificationResult>,
    /// Least-squares gains used for feedback identification.
    pub gains: Option<FeedbackGains>,
}

impl Identification {
    pub fn converged(&self) -> bool {
        self.results.iter().all(|r| r.trace.converged)
    }

    pub fn parameters(&self) -> CostParameters {
        CostParameters {
            theta: self.theta.clone(),
        }
    }
}

/// Run the estimator matching `concept` for every player.
pub fn identify(
    demos: &DemonstrationSet,
    game: &GameDefinition,
    concept: Concept,
    config: &IdentificationConfig,
) -> Result<Identification> {
    let players = 0..game.player_count();
    match concept {
        Concept::Cooperative => {
            let r = identify_cooperative(demos, game, config)?;
            Ok(Identification {
                theta: r.theta.clone(),
                results: vec![r],
                gains: None,
            })
        }
        Concept::OpenLoopNash => {
            let results = players
                .map(|i| identify_open_loop(demos, game, i, config))
                .collect::<Result<Vec<_>>>()?;
            Ok(Identification {
                theta: results.iter().map(|r| r.theta[0].clone()).collect(),
                results,
                gains: None,
            })
        }
        Concept::FeedbackNash => {
            let gains = estimate_feedback_gains(demos, game)?;
            let laws = gains.laws();
            let results = players
                .map(|i| identify_feedback(demos, game, i, &laws, config))
                .collect::<Result<Vec<_>>>()?;
            Ok(Identification {
                theta: results.iter().map(|r| r.theta[0].clone()).collect(),
                results,
                gains: Some(gains),
            })
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub pipeline: String,
    pub snr: Snr,
    pub trial: usize,
    pub seed: u64,
    pub identification: Option<Identification>,
    pub errors: Option<ErrorReport>,
    /// Stage failure; other cells are unaffected.
    pub failure: Option<String>,
    #[serde(skip)]
    pub estimate: Option<Trajectory>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridEntry {
    pub snr: Snr,
    /// Medians over all trials, a failed trial counting as infinite error.
    /// `None` when the median itself is infinite.
    pub e_x: Option<f64>,
    pub e_u: Option<f64>,
    pub trials: usize,
    pub failures: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub pipeline: String,
    pub entries: Vec<GridEntry>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DemonstrationRecord {
    pub pipeline: String,
    pub report: SolverReport,
    pub gains: Option<FeedbackGains>,
    #[serde(skip)]
    pub trajectory: Option<Trajectory>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentResults {
    pub config: ExperimentConfig,
    /// `single-seed` or `median-of-<n>`.
    pub mode: String,
    pub demonstrations: Vec<DemonstrationRecord>,
    pub cells: Vec<CellResult>,
    pub grid: Vec<GridRow>,
}

impl ExperimentResults {
    pub fn cell(&self, pipeline: &str, snr: Snr, trial: usize) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.pipeline == pipeline && c.snr == snr && c.trial == trial)
    }

    pub fn grid_entry(&self, pipeline: &str, snr: Snr) -> Option<&GridEntry> {
        self.grid
            .iter()
            .find(|r| r.pipeline == pipeline)
            .and_then(|r| r.entries.iter().find(|e| e.snr == snr))
    }
}

/// Seed of one cell, a function of the master seed and the cell's
/// coordinates only (FNV-1a).
pub fn cell_seed(master: u64, pipeline: &str, snr: Snr, trial: usize) -> u64 {
    let key = format!("{master}/{pipeline}/{snr}/{trial}");
    key.bytes()
        .fold(0xcbf2_9ce4_8422_2325_u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

struct Prepared {
    pipeline: Pipeline,
    game: GameDefinition,
    lin: Option<Arc<LinearGameMatrices>>,
    demo: std::result::Result<Synthesis, String>,
}

fn run_cell(
    prep: &Prepared,
    config: &ExperimentConfig,
    id_config: &IdentificationConfig,
    snr: Snr,
    trial: usize,
) -> CellResult {
    let seed = cell_seed(config.seed, &prep.pipeline.name, snr, trial);
    let mut cell = CellResult {
        pipeline: prep.pipeline.name.clone(),
        snr,
        trial,
        seed,
        identification: None,
        errors: None,
        failure: None,
        estimate: None,
    };
    let demo = match &prep.demo {
        Ok(d) => &d.trajectory,
        Err(e) => {
            cell.failure = Some(format!("demonstration: {e}"));
            return cell;
        }
    };
    let outcome = (|| -> Result<()> {
        let noisy = add_noise(demo, &NoiseSpec { snr, seed });
        let demos = DemonstrationSet::single(&prep.game, noisy)?;
        let id = identify(&demos, &prep.game, prep.pipeline.concept, id_config)?;
        cell.identification = Some(id.clone());
        let estimate = synthesize(
            &prep.game,
            prep.lin.as_deref(),
            prep.pipeline.concept,
            &id.parameters(),
            &config.initial_state(),
            &config.solver,
        )?;
        cell.errors = Some(nmae(&estimate.trajectory, demo)?);
        cell.estimate = Some(estimate.trajectory);
        Ok(())
    })();
    if let Err(e) = outcome {
        cell.failure = Some(e.to_string());
    }
    cell
}

/// Forward-solve each pipeline at the ground truth, then for every SNR level
/// and trial: add noise, identify, re-solve at the estimate, and compare with
/// the noiseless demonstration. Failures are recorded per cell.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResults> {
    config.validate()?;
    let truth = config.ground_truth();
    let x1 = config.initial_state();
    let prepared: Vec<Prepared> = config
        .pipelines
        .par_iter()
        .map(|p| -> Result<Prepared> {
            let (game, lin) = p.system.build(&config.params, config.horizon, config.dt)?;
            let demo = synthesize(&game, lin.as_ref(), p.concept, &truth, &x1, &config.solver).map_err(|e| e.to_string());
            Ok(Prepared {
                pipeline: p.clone(),
                game,
                lin: lin.map(Arc::new),
                demo,
            })
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<_>>()?;

    let id_config = config.identification();
    let mut coords = Vec::new();
    for (p, _) in prepared.iter().enumerate() {
        for &snr in &config.snr {
            let trials = if snr == Snr::Infinite { 1 } else { config.trials };
            for trial in 0..trials {
                coords.push((p, snr, trial));
            }
        }
    }
    let cells: Vec<CellResult> = coords
        .par_iter()
        .map(|&(p, snr, trial)| run_cell(&prepared[p], config, &id_config, snr, trial))
        .collect();

    let grid = prepared
        .iter()
        .map(|prep| GridRow {
            pipeline: prep.pipeline.name.clone(),
            entries: config
                .snr
                .iter()
                .map(|&snr| {
                    let mine: Vec<&CellResult> = cells
                        .iter()
                        .filter(|c| c.pipeline == prep.pipeline.name && c.snr == snr)
                        .collect();
                    // A failed cell counts as an infinite error.
                    let errors = |f: fn(&ErrorReport) -> f64| {
                        median(mine.iter().map(|c| c.errors.as_ref().map_or(f64::INFINITY, f)).collect())
                            .filter(|m| m.is_finite())
                    };
                    GridEntry {
                        snr,
                        e_x: errors(|e| e.e_x),
                        e_u: errors(|e| e.e_u),
                        trials: mine.len(),
                        failures: mine.iter().filter(|c| c.errors.is_none()).count(),
                    }
                })
                .collect(),
        })
        .collect();

    let demonstrations = prepared
        .iter()
        .filter_map(|p| {
            p.demo.as_ref().ok().map(|d| DemonstrationRecord {
                pipeline: p.pipeline.name.clone(),
                report: d.report.clone(),
                gains: d.gains.clone(),
                trajectory: Some(d.trajectory.clone()),
            })
        })
        .collect();

    Ok(ExperimentResults {
        config: config.clone(),
        mode: if config.trials == 1 {
            "single-seed".into()
        } else {
            format!("median-of-{}", config.trials)
        },
        demonstrations,
        cells,
        grid,
    })
}
