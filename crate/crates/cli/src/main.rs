mod args;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use blobtrack::detect::{fit_distribution, normalize_values};
use blobtrack::io::results::{write_results, ResultFiles};
use blobtrack::io::{ContainerFile, Encoding, FrameSource, SynthSpec, Synthetic};
use blobtrack::mesh::restrict;
use blobtrack::pipeline::{run, Execution, RunConfig};
use blobtrack::scaling::{benchmark, ScalingMode};
use blobtrack::{Params, RegionOfInterest};
use clap::{ArgMatches, CommandFactory, FromArgMatches};

use args::{BenchArgs, Cli, Command, DetectArgs, EncodingArg, FitArgs, GenerateArgs, ModeArg, RoiArgs, RunArgs, SynthArgs};

enum Failure {
    /// Invalid flag values or combinations; exit status 2.
    Usage(String),
    /// Exit status 1.
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<blobtrack::Error> for Failure {
    fn from(e: blobtrack::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

type Outcome<T> = Result<T, Failure>;

fn usage<T>(message: impl Into<String>) -> Outcome<T> {
    Err(Failure::Usage(message.into()))
}

fn roi(args: &RoiArgs) -> Outcome<Option<RegionOfInterest>> {
    match (args.rmin, args.rmax, args.zmin, args.zmax) {
        (None, None, None, None) => Ok(None),
        (Some(a), Some(b), Some(c), Some(d)) => match RegionOfInterest::new(a, b, c, d) {
            Ok(r) => Ok(Some(r)),
            Err(e) => usage(e.to_string()),
        },
        _ => usage("--rmin, --rmax, --zmin and --zmax must be given together"),
    }
}

fn run_config(args: &RunArgs, matches: &ArgMatches) -> Outcome<RunConfig> {
    let mut params = match &args.params {
        Some(path) => Params::from_file(path).map_err(|e| Failure::Usage(e.to_string()))?,
        None => Params::default(),
    };
    args.overrides.apply(matches, &mut params);
    if let Err(e) = params.validate() {
        return usage(e.to_string());
    }
    if args.workers == 0 {
        return usage("--workers must be at least 1");
    }
    if args.t_start == 0 {
        return usage("--t-start must be at least 1");
    }
    if let Some(t_end) = args.t_end {
        if t_end < args.t_start {
            return usage(format!("--t-end {t_end} is before --t-start {}", args.t_start));
        }
    }
    Ok(RunConfig {
        roi: roi(&args.roi)?,
        t_start: args.t_start,
        t_end: args.t_end,
        workers: args.workers,
        params,
        refine_levels: args.refine,
        execution: if args.sequential { Execution::Sequential } else { Execution::Parallel },
    })
}

fn synth_spec(args: &SynthArgs) -> Outcome<SynthSpec> {
    let spec = SynthSpec {
        seed: args.seed,
        bumps: args.bumps,
        drift: args.drift,
        noise: args.noise,
        frames: args.frames,
        planes: args.planes,
        resolution: args.resolution,
        width: args.width,
        amplitude: args.amplitude,
        dt: args.dt,
        ..SynthSpec::default()
    };
    match spec.validate() {
        Ok(()) => Ok(spec),
        Err(e) => usage(e.to_string()),
    }
}

fn out_dir(dir: &Path) -> anyhow::Result<&Path> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
    Ok(dir)
}

fn detect(args: &DetectArgs, matches: &ArgMatches) -> Outcome<()> {
    let config = run_config(&args.run, matches)?;
    let source = ContainerFile::open(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    log::info!(
        "{}: {} vertices, {} time steps, {} planes",
        args.input.display(),
        source.mesh().vertex_count(),
        source.time_steps(),
        source.planes()
    );
    let output = run(&config, &source)?;
    let dir = out_dir(&args.out.out_dir)?;
    let prefix = dir.join(&args.prefix);
    let files: ResultFiles = write_results(&output.blobs(), &output.tracks, &prefix)?;
    let timing_csv = PathBuf::from(format!("{}timing.csv", prefix.display()));
    let timing_jsonl = PathBuf::from(format!("{}timing.jsonl", prefix.display()));
    fs::write(&timing_csv, output.timing.table()).context("writing timing table")?;
    fs::write(&timing_jsonl, output.timing.records()).context("writing timing records")?;

    let failed = output.failed_frames().count();
    println!(
        "{} time steps, {} blobs, {} tracks ({} pruned), {} failed frames, {} detection vertices",
        output.frames.len(),
        output.frames.iter().map(|f| f.blobs.len()).sum::<usize>(),
        output.tracks.len(),
        output.pruned,
        failed,
        output.detection_vertices
    );
    for path in [&files.blobs, &files.tracks, &files.centers, &timing_csv, &timing_jsonl] {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn generate(args: &GenerateArgs) -> Outcome<()> {
    let spec = synth_spec(&args.synth)?;
    let synthetic = Synthetic::new(spec)?;
    let dir = out_dir(&args.out.out_dir)?;
    let container = dir.join(format!("{}.fcf", args.name));
    let truth = dir.join(format!("{}.truth.json", args.name));
    let encoding = match args.encoding {
        EncodingArg::Binary => Encoding::Binary,
        EncodingArg::Text => Encoding::Text,
    };
    synthetic.to_container().write(&container, encoding)?;
    let text = serde_json::to_string_pretty(&synthetic.truth()).context("serializing ground truth")?;
    fs::write(&truth, text + "\n").with_context(|| format!("writing {}", truth.display()))?;
    println!("wrote {}", container.display());
    println!("wrote {}", truth.display());
    Ok(())
}

fn bench(args: &BenchArgs, matches: &ArgMatches) -> Outcome<()> {
    let config = run_config(&args.run, matches)?;
    if args.sweep.is_empty() || args.sweep.contains(&0) {
        return usage("--sweep needs positive worker counts");
    }
    let mode = match args.mode {
        ModeArg::Strong => ScalingMode::Strong,
        ModeArg::Weak if args.frames_per_worker == 0 => return usage("--frames-per-worker must be at least 1"),
        ModeArg::Weak => ScalingMode::Weak {
            frames_per_worker: args.frames_per_worker,
        },
    };
    let table = match &args.input {
        Some(path) => {
            let source = ContainerFile::open(path).with_context(|| format!("reading {}", path.display()))?;
            benchmark(&config, &source, &args.sweep, mode, args.repeats)?
        }
        None => {
            let source = Synthetic::new(synth_spec(&args.synth)?)?;
            benchmark(&config, &source, &args.sweep, mode, args.repeats)?
        }
    };
    let dir = out_dir(&args.out.out_dir)?;
    let name = match args.mode {
        ModeArg::Strong => "scaling-strong",
        ModeArg::Weak => "scaling-weak",
    };
    let csv = dir.join(format!("{name}.csv"));
    fs::write(&csv, table.csv()).with_context(|| format!("writing {}", csv.display()))?;
    print!("{}", table.csv());
    println!("wrote {}", csv.display());
    Ok(())
}

fn read_samples(path: &Path) -> anyhow::Result<Vec<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().with_context(|| format!("'{t}' is not a number")))
        .collect()
}

fn fitdist(args: &FitArgs) -> Outcome<()> {
    let samples = match (&args.values, &args.input) {
        (Some(path), _) => read_samples(path)?,
        (None, Some(path)) => {
            let source = ContainerFile::open(path).with_context(|| format!("reading {}", path.display()))?;
            let mut baseline = source.load(1, args.plane)?;
            let mut frame = source.load(args.time, args.plane)?;
            if let Some(roi) = roi(&args.roi)? {
                let r = restrict(source.mesh(), &roi)?;
                baseline = r.restrict_values(&baseline);
                frame = r.restrict_values(&frame);
            }
            normalize_values(&frame, &baseline)?
        }
        (None, None) => return usage("either --input or --values is required"),
    };
    let report = fit_distribution(&samples)?;
    println!("{}", serde_json::to_string_pretty(&report).context("serializing report")?);
    Ok(())
}

fn init_logging(cli: &Cli) {
    let level = if cli.quiet {
        "error"
    } else {
        match cli.verbose {
            0 => "warn",
            1 => "info",
            _ => "debug",
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
}

fn main() -> ExitCode {
    let matches = match Cli::command().try_get_matches() {
        Ok(m) => m,
        Err(e) => e.exit(),
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    init_logging(&cli);
    let sub = matches.subcommand().map(|(_, m)| m).expect("a subcommand is required");
    let outcome = match &cli.command {
        Command::Detect(a) => detect(a, sub),
        Command::Generate(a) => generate(a),
        Command::Bench(a) => bench(a, sub),
        Command::Fitdist(a) => fitdist(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
