use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use stablemap_core::io::{read_labelled_ply, render_report_table, Report, SessionManifest};
use stablemap_core::labelling::{label_to_distance, stability_label};
use stablemap_core::metrics::{auc, optimal_threshold_gmean, roc_curve};
use stablemap_core::pipeline::{
    run_pipeline, stage_evaluate, stage_label, stage_preprocess, stage_register, stage_tile, write_scene,
    OutputLayout,
};
use stablemap_core::synth::{generate_scene, SceneSpec};
use stablemap_core::{Error, Result};

/// Long-term stability labelling for multi-session point-cloud maps.
#[derive(Parser)]
#[command(name = "stablemap", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded multi-session scene with ground truth and a manifest.
    Synth(SynthArgs),
    /// Ground removal, outlier removal and normals for every session.
    Preprocess(StageArgs),
    /// Align every filtered session onto the reference session.
    Register(StageArgs),
    /// Label every registered session against all the others.
    Label(StageArgs),
    /// Cut the labelled reference map into submaps and write the batch file.
    Tile(StageArgs),
    /// Score labels (and optionally voted predictions) against ground truth.
    Evaluate(EvaluateArgs),
    /// Optimal g-mean threshold of a labelled map, or label/distance conversion.
    Threshold(ThresholdArgs),
    /// Run preprocess, register, label, tile and evaluate in order.
    Pipeline(EvaluateArgs),
}

#[derive(Args)]
struct StageArgs {
    /// Session manifest (TOML).
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory shared by all stages.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the manifest seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Manifest override, `section.key=value` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    stage: StageArgs,
    /// Predictions file to vote onto the reference map.
    #[arg(long)]
    predictions: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Directory for the session clouds, manifest.toml and scene.json.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Scene spec (TOML); flags below override its fields.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    sessions: Option<usize>,
    #[arg(long)]
    cars: Option<usize>,
    #[arg(long)]
    poles: Option<usize>,
    #[arg(long)]
    trees: Option<usize>,
    #[arg(long)]
    walls: Option<usize>,
    #[arg(long)]
    ghost_trails: Option<usize>,
    /// Sensor noise standard deviation, meters.
    #[arg(long)]
    noise: Option<f64>,
    /// Surface samples per square meter.
    #[arg(long)]
    density: Option<f64>,
}

#[derive(Args)]
struct ThresholdArgs {
    /// Labelled map with ground truth.
    #[arg(long, conflicts_with_all = ["label", "meters"])]
    labelled: Option<PathBuf>,
    /// Convert this label to a distance.
    #[arg(long, conflicts_with = "meters")]
    label: Option<f64>,
    /// Convert this distance to a label.
    #[arg(long)]
    meters: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
}

fn load_manifest(args: &StageArgs) -> Result<SessionManifest> {
    let mut overrides = args.overrides.clone();
    if let Some(seed) = args.seed {
        overrides.push(format!("seed={seed}"));
    }
    SessionManifest::load_with_overrides(&args.manifest, &overrides)
}

fn print_report(report: Option<Report>) {
    match report {
        Some(r) => print!("{}", render_report_table(&r)),
        None => println!("no ground truth to evaluate"),
    }
}

fn predictions_path(args: &EvaluateArgs, manifest: &SessionManifest) -> Option<PathBuf> {
    args.predictions
        .clone()
        .or_else(|| manifest.predictions.as_ref().map(|p| manifest.resolve(p)))
}

fn synth(args: &SynthArgs) -> Result<()> {
    let mut spec = match &args.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
            toml::from_str::<SceneSpec>(&text).map_err(|e| Error::Parse {
                path: path.clone(),
                line: 0,
                message: e.message().to_string(),
            })?
        }
        None => SceneSpec::default(),
    };
    spec.seed = args.seed;
    let set = |field: &mut usize, v: Option<usize>| {
        if let Some(v) = v {
            *field = v;
        }
    };
    set(&mut spec.sessions, args.sessions);
    set(&mut spec.cars, args.cars);
    set(&mut spec.poles, args.poles);
    set(&mut spec.trees, args.trees);
    set(&mut spec.walls, args.walls);
    set(&mut spec.ghost_trails, args.ghost_trails);
    if let Some(n) = args.noise {
        spec.sensor_noise_sigma = n;
    }
    if let Some(d) = args.density {
        spec.point_density = d;
    }
    let bundle = generate_scene(&spec)?;
    write_scene(&bundle, &args.out)?;
    println!(
        "wrote {} sessions ({} points) to {}",
        bundle.sessions.len(),
        bundle.sessions.iter().map(|s| s.cloud.len()).sum::<usize>(),
        args.out.display()
    );
    Ok(())
}

fn threshold(args: &ThresholdArgs) -> Result<()> {
    if let Some(l) = args.label {
        println!("label {l} = {} m", label_to_distance(l, args.lambda)?);
        return Ok(());
    }
    if let Some(d) = args.meters {
        println!("{d} m = label {}", stability_label(&[d], args.lambda)?);
        return Ok(());
    }
    let path = args
        .labelled
        .as_deref()
        .ok_or_else(|| Error::InvalidParam("give --labelled, --label or --meters".into()))?;
    let map = read_labelled_ply(path)?;
    let truth = map
        .ground_truth()
        .ok_or_else(|| Error::InvalidParam(format!("{} has no ground truth", path.display())))?;
    let curve = roc_curve(&map.labels, truth)?;
    let best = optimal_threshold_gmean(&curve);
    let meters = if best.threshold < 1.0 {
        format!("{}", label_to_distance(best.threshold.max(0.0), args.lambda)?)
    } else {
        "inf".into()
    };
    println!("auc {}", auc(&curve));
    println!("threshold {} ({meters} m), gmean {}", best.threshold, best.gmean);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(args) => synth(&args),
        Command::Preprocess(args) => stage_preprocess(&load_manifest(&args)?, &OutputLayout::new(&args.out)),
        Command::Register(args) => stage_register(&load_manifest(&args)?, &OutputLayout::new(&args.out)).map(drop),
        Command::Label(args) => stage_label(&load_manifest(&args)?, &OutputLayout::new(&args.out)).map(drop),
        Command::Tile(args) => stage_tile(&load_manifest(&args)?, &OutputLayout::new(&args.out)).map(drop),
        Command::Evaluate(args) => {
            let manifest = load_manifest(&args.stage)?;
            let predictions = predictions_path(&args, &manifest);
            let report = stage_evaluate(&manifest, &OutputLayout::new(&args.stage.out), predictions.as_deref())?;
            print_report(report);
            Ok(())
        }
        Command::Threshold(args) => threshold(&args),
        Command::Pipeline(args) => {
            let mut manifest = load_manifest(&args.stage)?;
            manifest.predictions = predictions_path(&args, &manifest);
            let out = run_pipeline(&manifest, &args.stage.out)?;
            print_report(out.report);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", chain(&e));
            ExitCode::FAILURE
        }
    }
}

/// The error and its sources; stage errors already name their cause.
fn chain(e: &Error) -> String {
    let mut text = e.to_string();
    let mut source = std::error::Error::source(e);
    while let Some(s) = source {
        let part = s.to_string();
        if !text.contains(&part) {
            text.push_str(": ");
            text.push_str(&part);
        }
        source = s.source();
    }
    text
}
