//! `invgame`: forward-solve, identify and evaluate dynamic games from the
//! command line, and run the ball-on-beam benchmark.
//!
//! Configuration precedence is flags, then the `--config` JSON file, then
//! built-in defaults. Exit codes: 0 success, 1 failed acceptance check,
//! 2 usage or input error, 3 numerical failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use invgame_core::error::Error;
use invgame_core::estimators::FixedWeight;
use invgame_core::evaluation::{
    add_noise, cell_seed, feature_matching_report, identify, nmae, run_experiment, summarize, synthesize,
    ExperimentConfig, MatchingOptions, NoiseSpec, Pipeline, Snr, SystemSpec,
};
use invgame_core::forward::Concept;
use invgame_core::game::{CostParameters, DemonstrationSet, GameDefinition};
use invgame_core::io;
use invgame_core::likelihood::{DVariant, Scope};

#[derive(Parser)]
#[command(name = "invgame", version, about = "Inverse maximum-entropy identification for dynamic games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the forward game at the configured weights and write the trajectory.
    Forward(ForwardArgs),
    /// Identify cost weights from demonstration CSVs.
    Identify(IdentifyArgs),
    /// Re-solve at identified weights and compare with a demonstration.
    Evaluate(EvaluateArgs),
    /// Run the four benchmark pipelines across the SNR grid and check the results.
    ReproducePaper(ReproduceArgs),
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "invgame-out")]
    out: PathBuf,
    /// Master seed for measurement noise.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated SNR levels in dB, or `inf`.
    #[arg(long, value_delimiter = ',')]
    snr: Option<Vec<Snr>>,
    /// Sensitivity matrix variant: plain or trapezoid.
    #[arg(long)]
    d_variant: Option<DVariant>,
    /// Weight held fixed during identification, e.g. `player=1,index=5,value=2.0`.
    /// Repeat once per player; replaces the configured list.
    #[arg(long = "fix-weight")]
    fix_weight: Vec<FixedWeight>,
    /// Inverse temperature of the demonstrator model.
    #[arg(long)]
    inverse_temperature: Option<f64>,
    /// Number of time steps.
    #[arg(long)]
    horizon: Option<usize>,
    /// Sampling interval in seconds.
    #[arg(long)]
    dt: Option<f64>,
}

#[derive(Args)]
struct Target {
    /// Built-in system: ball-on-beam or ball-on-beam-lq.
    #[arg(long)]
    system: Option<String>,
    /// Solution concept: cg, ol-nash or fb-nash.
    #[arg(long)]
    concept: Option<Concept>,
}

#[derive(Args)]
struct ForwardArgs {
    #[command(flatten)]
    target: Target,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct IdentifyArgs {
    #[command(flatten)]
    target: Target,
    /// Demonstration CSV; repeat for several demonstrations.
    #[arg(long = "demo", required = true)]
    demos: Vec<PathBuf>,
    /// Write results and exit 0 even if the optimizer did not converge.
    #[arg(long)]
    allow_nonconverged: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    target: Target,
    /// Reference demonstration CSV.
    #[arg(long)]
    demo: PathBuf,
    /// JSON file with a `theta` array (e.g. the output of `identify`).
    #[arg(long)]
    params: PathBuf,
    /// Samples for the feature-expectation check; 0 skips it.
    #[arg(long, default_value_t = 0)]
    samples: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ReproduceArgs {
    /// Comma-separated pipeline names (cg, noln, loln, fb).
    #[arg(long, value_delimiter = ',')]
    only: Option<Vec<String>>,
    /// Noise realizations per noisy cell; medians are reported when above 1.
    #[arg(long)]
    trials: Option<usize>,
    #[command(flatten)]
    common: Common,
}

enum Failure {
    Acceptance(String),
    Usage(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidGame(_)
            | Error::Dimension { .. }
            | Error::TrajectoryShape(_)
            | Error::UnknownMethod(_)
            | Error::UnknownSystem(_)
            | Error::Parse { .. }
            | Error::Config(_)
            | Error::Unsupported(_)
            | Error::Io(_)
            | Error::Json(_) => Failure::Usage(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

type Outcome = Result<(), Failure>;

fn resolve_config(common: &Common) -> Result<ExperimentConfig, Failure> {
    let mut config = match &common.config {
        Some(path) => io::read_config(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(snr) = &common.snr {
        config.snr = snr.clone();
    }
    if let Some(v) = common.d_variant {
        config.variant = v;
    }
    if !common.fix_weight.is_empty() {
        config.fixed = common.fix_weight.clone();
    }
    if let Some(b) = common.inverse_temperature {
        config.inverse_temperature = b;
    }
    if let Some(h) = common.horizon {
        config.horizon = h;
    }
    if let Some(dt) = common.dt {
        config.dt = dt;
    }
    Ok(config)
}

/// The single pipeline addressed by `--system`/`--concept`, falling back to
/// the configuration when it names exactly one.
fn resolve_pipeline(target: &Target, config: &mut ExperimentConfig) -> Result<Pipeline, Failure> {
    let configured = (config.pipelines.len() == 1).then(|| config.pipelines[0].clone());
    let system = match (&target.system, &configured) {
        (Some(name), _) => SystemSpec::Builtin(name.parse()?),
        (None, Some(p)) => p.system.clone(),
        (None, None) => return Err(Failure::Usage("missing --system (ball-on-beam or ball-on-beam-lq)".into())),
    };
    let concept = match (target.concept, &configured) {
        (Some(c), _) => c,
        (None, Some(p)) => p.concept,
        (None, None) => return Err(Failure::Usage("missing --concept (cg, ol-nash or fb-nash)".into())),
    };
    if concept == Concept::FeedbackNash && !system.is_linear() {
        return Err(Failure::Usage(format!(
            "fb-nash on {} is not supported: feedback Nash synthesis is only available for linear-quadratic systems",
            system.label()
        )));
    }
    let pipeline = Pipeline {
        name: concept.to_string(),
        concept,
        system,
    };
    config.pipelines = vec![pipeline.clone()];
    Ok(pipeline)
}

fn build(pipeline: &Pipeline, config: &ExperimentConfig, horizon: usize) -> Result<(GameDefinition, Option<invgame_core::dynamics::LinearGameMatrices>), Failure> {
    Ok(pipeline.system.build(&config.params, horizon, config.dt)?)
}

fn report_written(paths: &[PathBuf]) {
    for p in paths {
        eprintln!("wrote {}", p.display());
    }
}

fn forward(args: &ForwardArgs) -> Outcome {
    let mut config = resolve_config(&args.common)?;
    let pipeline = resolve_pipeline(&args.target, &mut config)?;
    config.validate()?;
    let (game, lin) = build(&pipeline, &config, config.horizon)?;
    let synthesis = synthesize(
        &game,
        lin.as_ref(),
        pipeline.concept,
        &config.ground_truth(),
        &config.initial_state(),
        &config.solver,
    )?;
    let out = &args.common.out;
    let mut written = vec![out.join("trajectory.csv"), out.join("forward.json")];
    io::write_trajectory(&written[0], &synthesis.trajectory, config.dt)?;
    io::write_json(
        &written[1],
        &json!({
            "pipeline": pipeline,
            "report": synthesis.report,
            "gains": synthesis.gains,
            "config": config,
        }),
    )?;
    // Noisy copies only when levels are requested on the command line.
    if args.common.snr.is_some() {
        for &snr in config.snr.iter().filter(|s| **s != Snr::Infinite) {
            let seed = cell_seed(config.seed, &pipeline.name, snr, 0);
            let noisy = add_noise(&synthesis.trajectory, &NoiseSpec { snr, seed });
            let path = out.join(format!("trajectory_snr{snr}.csv"));
            io::write_trajectory(&path, &noisy, config.dt)?;
            written.push(path);
        }
    }
    report_written(&written);
    if !synthesis.report.converged {
        return Err(Failure::Numerical(format!(
            "forward solver did not converge: {}",
            synthesis.report.message.unwrap_or_default()
        )));
    }
    Ok(())
}

fn read_demos(paths: &[PathBuf], pipeline: &Pipeline, config: &mut ExperimentConfig) -> Result<(GameDefinition, DemonstrationSet), Failure> {
    // Shapes do not depend on the horizon; the CSV row count sets it.
    let (shape, _) = build(pipeline, config, 2)?;
    let trajectories = paths
        .iter()
        .map(|p| {
            io::read_trajectory(p, shape.state_dim(), &shape.control_dims())
                .map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let horizon = trajectories[0].horizon();
    config.horizon = horizon;
    let (game, _) = build(pipeline, config, horizon)?;
    let demos = DemonstrationSet::new(&game, trajectories)?;
    Ok((game, demos))
}

fn identify_cmd(args: &IdentifyArgs) -> Outcome {
    let mut config = resolve_config(&args.common)?;
    let pipeline = resolve_pipeline(&args.target, &mut config)?;
    let (game, demos) = read_demos(&args.demos, &pipeline, &mut config)?;
    let id = identify(&demos, &game, pipeline.concept, &config.identification())?;

    let out = &args.common.out;
    let mut written = Vec::new();
    let stacked: Vec<f64> = id.theta.iter().flatten().copied().collect();
    let path = out.join("identification.json");
    io::write_json(
        &path,
        &json!({
            "pipeline": pipeline,
            "theta": id.theta,
            "stacked": stacked,
            "converged": id.converged(),
            "identification": id,
            "demonstrations": args.demos,
            "config": config,
        }),
    )?;
    written.push(path);
    for r in &id.results {
        let name = match r.players.as_slice() {
            [p] => format!("identification_player{p}.json"),
            _ => "identification_joint.json".into(),
        };
        let path = out.join(name);
        io::write_json(&path, &json!({ "result": r, "config": config }))?;
        written.push(path);
    }
    report_written(&written);
    for (i, theta) in id.theta.iter().enumerate() {
        println!("theta_{} = {theta:.6?}", i + 1);
    }
    if !id.converged() && !args.allow_nonconverged {
        let why: Vec<String> = id
            .results
            .iter()
            .filter(|r| !r.trace.converged)
            .map(|r| format!("players {:?}: {}", r.players, r.trace.message.clone().unwrap_or_default()))
            .collect();
        return Err(Failure::Numerical(format!(
            "identification did not converge ({}); rerun with --allow-nonconverged to accept",
            why.join("; ")
        )));
    }
    Ok(())
}

fn read_theta(path: &Path) -> Result<CostParameters, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(Error::from)?;
    let theta = value
        .get("theta")
        .cloned()
        .ok_or_else(|| Failure::Usage(format!("{}: no `theta` field", path.display())))?;
    let theta: Vec<Vec<f64>> = serde_json::from_value(theta).map_err(Error::from)?;
    Ok(CostParameters::new(theta)?)
}

fn evaluate(args: &EvaluateArgs) -> Outcome {
    let mut config = resolve_config(&args.common)?;
    let pipeline = resolve_pipeline(&args.target, &mut config)?;
    let (game, demos) = read_demos(std::slice::from_ref(&args.demo), &pipeline, &mut config)?;
    let theta = read_theta(&args.params)?;
    let (_, lin) = build(&pipeline, &config, config.horizon)?;
    let reference = &demos.trajectories()[0];
    let estimate = synthesize(
        &game,
        lin.as_ref(),
        pipeline.concept,
        &theta,
        &config.initial_state(),
        &config.solver,
    )?;
    let errors = nmae(&estimate.trajectory, reference)?;
    let matching = if args.samples > 0 {
        let scope = match pipeline.concept {
            Concept::Cooperative => Scope::Joint,
            _ => Scope::Player(game.player_count() - 1),
        };
        Some(feature_matching_report(
            &theta,
            &demos,
            &game,
            &MatchingOptions {
                scope,
                variant: config.variant,
                inverse_temperature: config.inverse_temperature,
                sample_count: args.samples,
                seed: config.seed,
            },
        )?)
    } else {
        None
    };
    let out = &args.common.out;
    let written = vec![out.join("estimate.csv"), out.join("evaluation.json")];
    io::write_trajectory(&written[0], &estimate.trajectory, config.dt)?;
    io::write_json(
        &written[1],
        &json!({
            "pipeline": pipeline,
            "theta": theta.theta,
            "errors": errors,
            "feature_matching": matching,
            "solver": estimate.report,
            "config": config,
        }),
    )?;
    report_written(&written);
    println!("e_x = {:.6}  e_u = {:.6}", errors.e_x, errors.e_u);
    Ok(())
}

fn reproduce(args: &ReproduceArgs) -> Outcome {
    let mut config = resolve_config(&args.common)?;
    if let Some(trials) = args.trials {
        config.trials = trials;
    }
    if let Some(only) = &args.only {
        let wanted: Vec<String> = only.iter().map(|s| s.to_lowercase()).collect();
        if let Some(unknown) = wanted
            .iter()
            .find(|w| !config.pipelines.iter().any(|p| p.name.to_lowercase() == **w))
        {
            return Err(Failure::Usage(format!("unknown pipeline `{unknown}`")));
        }
        config.pipelines.retain(|p| wanted.contains(&p.name.to_lowercase()));
    }
    let results = run_experiment(&config)?;
    let mut written = io::write_bundle(&results, &args.common.out)?;
    let summary = summarize(&results);
    let path = args.common.out.join("summary.json");
    io::write_json(&path, &json!({ "summary": summary, "config": config }))?;
    written.push(path);
    report_written(&written);

    println!("mode: {}", results.mode);
    for row in &results.grid {
        let cells: Vec<String> = row
            .entries
            .iter()
            .map(|e| {
                let f = |v: Option<f64>| v.map_or("fail".to_string(), |v| format!("{v:.3}"));
                format!("{}: {}/{}", e.snr, f(e.e_x), f(e.e_u))
            })
            .collect();
        println!("{:>5}  {}", row.pipeline, cells.join("  "));
    }
    for c in results.cells.iter().filter(|c| c.failure.is_some()) {
        eprintln!(
            "cell {} {} trial {} failed: {}",
            c.pipeline,
            c.snr,
            c.trial,
            c.failure.as_deref().unwrap_or_default()
        );
    }
    for c in &summary.checks {
        let status = match c.passed {
            Some(true) => "PASS",
            Some(false) => "FAIL",
            None => "SKIP",
        };
        println!("{status} {}: {}", c.name, c.detail);
    }
    if summary.passed() {
        Ok(())
    } else {
        Err(Failure::Acceptance("one or more acceptance checks failed".into()))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Forward(a) => forward(a),
        Command::Identify(a) => identify_cmd(a),
        Command::Evaluate(a) => evaluate(a),
        Command::ReproducePaper(a) => reproduce(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Acceptance(m)) => {
            eprintln!("invgame: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(m)) => {
            eprintln!("invgame: error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("invgame: numerical failure: {m}");
            ExitCode::from(3)
        }
    }
}
