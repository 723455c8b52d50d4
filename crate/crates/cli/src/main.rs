//! `cirsim`: stream generation, experiment runs, comparison tables and plots.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 run failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use cir_core::harness::{
    accuracy_curves_svg, compare, presence_heatmap_svg, read_records, run_experiment,
    ExperimentConfig, MetricsRecord, RunStatus, OUTPUT_DIR_ENV,
};
use cir_core::stream::{deserialize_stream, serialize_stream, stream_stats, Preset, Scale, Stream};
use cir_core::Error;

#[derive(Parser)]
#[command(name = "cirsim", version, about = "Class-incremental streams with repetition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScaleArg {
    Desk,
    Challenge,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a preset stream and write it as a `.cir` file.
    Generate {
        #[arg(long)]
        preset: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "desk")]
        scale: ScaleArg,
    },
    /// Run every (strategy, stream, seed) job of an experiment config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides both the config and $CIRSIM_OUTPUT_DIR.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate metrics files into a ranking table.
    Compare {
        #[arg(long)]
        glob: String,
        #[arg(long)]
        json: bool,
    },
    /// Draw a presence heatmap of a stream file, or accuracy curves from
    /// metrics files.
    Plot {
        #[arg(long, conflicts_with = "records")]
        stream: Option<PathBuf>,
        /// Glob of metrics files.
        #[arg(long, requires = "stream_id")]
        records: Option<String>,
        /// Stream id whose curves are drawn (with --records).
        #[arg(long)]
        stream_id: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print summary counts of a stream file.
    Stats {
        #[arg(long)]
        stream: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

enum Failure {
    Config(String),
    Run(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Parse { .. } => Failure::Config(e.to_string()),
            other => Failure::Run(other.to_string()),
        }
    }
}

type CliResult = Result<(), Failure>;

fn read_stream(path: &Path) -> Result<Stream, Failure> {
    let bytes =
        std::fs::read(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    Ok(deserialize_stream(&bytes)?)
}

fn default_out_dir() -> PathBuf {
    std::env::var_os(OUTPUT_DIR_ENV)
        .filter(|d| !d.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("results"))
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Run(e.to_string()))?;
    }
    std::fs::write(path, bytes).map_err(|e| Failure::Run(format!("{}: {e}", path.display())))
}

fn glob_records(pattern: &str) -> Result<Vec<MetricsRecord>, Failure> {
    let paths: Vec<PathBuf> = glob::glob(pattern)
        .map_err(|e| Failure::Config(format!("bad glob `{pattern}`: {e}")))?
        .filter_map(|p| p.ok())
        .collect();
    if paths.is_empty() {
        return Err(Failure::Config(format!("no files match `{pattern}`")));
    }
    let mut out = Vec::new();
    for p in paths {
        out.extend(read_records(&p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?);
    }
    Ok(out)
}

fn generate(preset: &str, seed: u64, out: &Path, scale: ScaleArg) -> CliResult {
    let scale = match scale {
        ScaleArg::Desk => Scale::Desk,
        ScaleArg::Challenge => Scale::Challenge,
    };
    let stream = Stream::generate(&Preset::parse(preset)?.config(scale, seed))?;
    write_file(out, &serialize_stream(&stream))?;
    eprintln!(
        "wrote {} ({} experiences, {} fix-ups)",
        out.display(),
        stream.len(),
        stream.schedule.fixups.len()
    );
    Ok(())
}

fn run(config: &Path, out: Option<PathBuf>) -> CliResult {
    let cfg = ExperimentConfig::load(config)?;
    let out_dir = out.unwrap_or_else(|| cfg.output_dir());
    let base = config.parent().unwrap_or(Path::new("."));
    let summary = run_experiment(&cfg, base, &out_dir)?;
    print!("{}", summary.table.render());
    let failed: Vec<&MetricsRecord> =
        summary.records.iter().filter(|r| r.status == RunStatus::Failed).collect();
    for r in &failed {
        eprintln!(
            "failed: {} on {} (seed {}): {}",
            r.strategy,
            r.stream,
            r.seed,
            r.error.as_deref().unwrap_or("unknown error")
        );
    }
    eprintln!("{} records written to {}", summary.records.len(), out_dir.display());
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Run(format!("{} of {} runs failed", failed.len(), summary.records.len())))
    }
}

fn plot(
    stream: Option<PathBuf>,
    records: Option<String>,
    stream_id: Option<String>,
    out: Option<PathBuf>,
) -> CliResult {
    let (svg, default_name) = match (stream, records, stream_id) {
        (Some(path), None, _) => {
            let s = read_stream(&path)?;
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("stream").to_string();
            (presence_heatmap_svg(&s, &stem), format!("presence_{stem}.svg"))
        }
        (None, Some(pattern), Some(id)) => {
            let recs = glob_records(&pattern)?;
            if !recs.iter().any(|r| r.stream == id) {
                return Err(Failure::Config(format!("no records for stream `{id}`")));
            }
            let name = format!("curves_{}.svg", cir_core::harness::cell_stem("all", &id));
            (accuracy_curves_svg(&recs, &id), name)
        }
        _ => return Err(Failure::Config("plot needs --stream or --records with --stream-id".into())),
    };
    let path = out.unwrap_or_else(|| default_out_dir().join(default_name));
    write_file(&path, svg.as_bytes())?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn dispatch(cli: Cli) -> CliResult {
    match cli.command {
        Command::Generate {
            preset,
            seed,
            out,
            scale,
        } => generate(&preset, seed, &out, scale),
        Command::Run { config, out } => run(&config, out),
        Command::Compare { glob, json } => {
            let table = compare(&glob_records(&glob)?);
            if json {
                println!("{}", serde_json::to_string_pretty(&table).expect("table serializes"));
            } else {
                print!("{}", table.render());
            }
            Ok(())
        }
        Command::Plot {
            stream,
            records,
            stream_id,
            out,
        } => plot(stream, records, stream_id, out),
        Command::Stats { stream, json } => {
            let stats = stream_stats(&read_stream(&stream)?);
            if json {
                println!("{}", serde_json::to_string_pretty(&stats).expect("stats serialize"));
            } else {
                print!("{}", stats.render());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
