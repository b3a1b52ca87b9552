//! `selfprior` command-line front end: `synth` draws a test cloud from a
//! reference mesh, `reconstruct` runs the pipeline, `evaluate` prints the
//! metric table.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use selfprior::config::{Preset, RunConfig, RunManifest, SynthRecord};
use selfprior::io::{self, PlyFormat};
use selfprior::metrics::{EvalProtocol, MetricReport};
use selfprior::pipeline::{self, RunOptions};
use selfprior::Error;

#[derive(Debug, Parser)]
#[command(name = "selfprior", version, about = "Textured mesh reconstruction from colored point clouds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Reconstruct a textured mesh from a PLY point cloud.
    Reconstruct(ReconstructArgs),
    /// Sample a (noisy, colored) point cloud from a reference mesh.
    Synth(SynthArgs),
    /// Compare predicted meshes with references.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Default set the config file is layered onto.
    #[arg(long, value_parser = parse_preset)]
    preset: Option<Preset>,
}

#[derive(Debug, Args)]
struct ReconstructArgs {
    /// Input point cloud (PLY); overrides `input` in the config.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output directory; overrides `output` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    seed: Option<u64>,
    /// Checkpoint directory of an interrupted run to continue.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Reference mesh (OBJ with texture, or OBJ/PLY without).
    #[arg(long)]
    gt: PathBuf,
    /// Output PLY.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 25_000)]
    points: usize,
    /// Noise standard deviation as a fraction of each axis's extent.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write positions only.
    #[arg(long)]
    no_color: bool,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Predicted mesh; repeat together with --gt for several pairs.
    #[arg(long, required = true)]
    pred: Vec<PathBuf>,
    /// Reference mesh for the --pred at the same position.
    #[arg(long, required = true)]
    gt: Vec<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
    /// Surface samples per mesh.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write the table as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_preset(s: &str) -> Result<Preset, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Reconstruct(a) => cmd_reconstruct(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Evaluate(a) => cmd_evaluate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn cmd_reconstruct(args: ReconstructArgs) -> Result<(), Error> {
    let mut cfg = RunConfig::load(args.config.config.as_deref(), args.config.preset)?;
    if let Some(p) = args.input {
        cfg.input = Some(p);
    }
    if let Some(p) = args.out {
        cfg.output = Some(p);
    }
    if let Some(s) = args.seed {
        cfg.pipeline.seed = s;
    }
    let input = cfg
        .input
        .clone()
        .ok_or_else(|| Error::Config("no input cloud (use --input or `input` in the config)".into()))?;
    let out = cfg
        .output
        .clone()
        .ok_or_else(|| Error::Config("no output directory (use --out or `output` in the config)".into()))?;
    let resume = args.resume.is_some();
    if let Some(dir) = args.resume {
        cfg.pipeline.checkpoint_dir = Some(dir);
    }
    let checkpoints = cfg
        .pipeline
        .checkpoint_dir
        .get_or_insert_with(|| out.join("checkpoints"))
        .clone();
    let cloud = io::read_point_cloud(&input)?;
    if cfg.pipeline.texture && !cloud.has_colors() {
        eprintln!("note: {} has no colors; skipping the texture stage", input.display());
        cfg.pipeline.texture = false;
    }
    cfg.validate()?;

    let opts = RunOptions {
        resume,
        ..RunOptions::default()
    };
    let result = pipeline::reconstruct_with(&cloud, &cfg.pipeline, &opts)?;
    std::fs::create_dir_all(&out).map_err(|e| Error::Io {
        path: out.clone(),
        source: e,
    })?;
    pipeline::write_result(&out, &result)?;
    io::write_atomic(&out.join("config.toml"), cfg.to_toml()?.as_bytes())?;
    let manifest = RunManifest {
        config_hash: cfg.hash()?,
        pipeline_hash: cfg.pipeline.hash()?,
        seed: cfg.pipeline.seed,
        preset: cfg.preset,
        input: Some(input),
        checkpoint_dir: checkpoints,
        stages: result.manifest.stages.clone(),
    };
    io::write_atomic(&out.join("manifest.toml"), manifest.to_toml()?.as_bytes())?;
    for (name, secs) in &result.timings {
        println!("{name:<12} {secs:>9.1} s");
    }
    println!(
        "wrote {} ({} vertices, {} faces)",
        out.join("mesh.obj").display(),
        result.mesh.num_vertices(),
        result.mesh.num_faces()
    );
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<(), Error> {
    let gt = pipeline::read_ground_truth(&args.gt)?;
    let colors = !args.no_color;
    let cloud = pipeline::synthesize_input(&gt, args.points, args.noise, args.seed, colors).map_err(|e| match e {
        Error::InvalidData(m) if colors => Error::InvalidData(format!("{m} (pass --no-color for positions only)")),
        other => other,
    })?;
    io::write_point_cloud(&args.out, &cloud, PlyFormat::BinaryLittleEndian)?;
    let record = SynthRecord {
        source: args.gt.clone(),
        seed: args.seed,
        n_points: args.points,
        noise_std_fraction: args.noise,
        colors,
    };
    io::write_atomic(&provenance_path(&args.out), record.to_toml()?.as_bytes())?;
    println!("wrote {} ({} points)", args.out.display(), cloud.len());
    Ok(())
}

fn provenance_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".provenance.toml");
    out.with_file_name(name)
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<(), Error> {
    if args.pred.len() != args.gt.len() {
        return Err(Error::Config(format!(
            "{} --pred but {} --gt; give them in pairs",
            args.pred.len(),
            args.gt.len()
        )));
    }
    let cfg = RunConfig::load(args.config.config.as_deref(), args.config.preset)?;
    let mut protocol = cfg.evaluation;
    if let Some(n) = args.samples {
        protocol.samples = n;
    }
    if let Some(s) = args.seed {
        protocol.seed = s;
    }
    let mut rows = Vec::with_capacity(args.pred.len());
    for (p, g) in args.pred.iter().zip(&args.gt) {
        let pred = io::read_mesh(p)?;
        let gt = io::read_mesh(g)?;
        let report = pipeline::evaluate(&pred, &gt, &protocol)?;
        rows.push((row_name(p), report));
    }
    let mean = MetricReport::mean(&rows.iter().map(|r| r.1).collect::<Vec<_>>()).expect("at least one pair");
    print!("{}", format_table(&rows, &mean, &protocol));
    if let Some(path) = &args.out {
        io::write_atomic(path, format_csv(&rows, &mean, &protocol).as_bytes())?;
    }
    Ok(())
}

fn row_name(p: &Path) -> String {
    p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn format_table(rows: &[(String, MetricReport)], mean: &MetricReport, protocol: &EvalProtocol) -> String {
    let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max(4);
    let mut s = String::new();
    let _ = writeln!(
        s,
        "# samples={} threshold={} emd_points={} seed={}",
        protocol.samples, protocol.threshold, protocol.emd_points, protocol.seed
    );
    let _ = writeln!(s, "{:<width$}  {:>9}  {:>10}  {:>10}  {:>7}", "name", "F-score", "CD", "EMD", "NC");
    let mut line = |name: &str, r: &MetricReport| {
        let _ = writeln!(
            s,
            "{name:<width$}  {:>9.3}  {:>10.6}  {:>10.6}  {:>7.4}",
            r.f_score, r.chamfer, r.emd, r.normal_consistency
        );
    };
    for (name, r) in rows {
        line(name, r);
    }
    line("mean", mean);
    s
}

fn format_csv(rows: &[(String, MetricReport)], mean: &MetricReport, protocol: &EvalProtocol) -> String {
    let mut s = String::from("name,f_score,chamfer,emd,normal_consistency,samples,threshold,emd_points,seed\n");
    for (name, r) in rows.iter().map(|(n, r)| (n.as_str(), r)).chain([("mean", mean)]) {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            name.replace(',', "_"),
            r.f_score,
            r.chamfer,
            r.emd,
            r.normal_consistency,
            protocol.samples,
            protocol.threshold,
            protocol.emd_points,
            protocol.seed
        );
    }
    s
}
