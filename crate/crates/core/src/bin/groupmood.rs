use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use groupmood::compose::{generate_dataset, DatasetSink, DirectorySink, GenerationSummary, StreamSink};
use groupmood::evalmetrics::{evaluate, format_report, parse_predictions, Aggregation, ReportStyle};
use groupmood::ingest::load_catalog;
use groupmood::sample::{build_schedule, extract_frame, load_video_index, sample_frames, FrameDecoder};
use groupmood::{raster, Config, Error, GroupClass, Seed};

#[derive(Parser)]
#[command(name = "groupmood", version, about = "Synthetic group-emotion scenes, frame schedules and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset of composited scenes.
    Generate {
        /// Experiment config (TOML).
        config: PathBuf,
        /// Asset root holding the face and background directories [default: the config's directory].
        #[arg(long)]
        catalog: Option<PathBuf>,
        /// Output directory (images/ and manifest.jsonl).
        #[arg(long, required_unless_present = "stream")]
        out: Option<PathBuf>,
        #[arg(long)]
        count: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = default_workers())]
        workers: usize,
        /// Stream framed records to `-` (stdout) or `unix:<path>` instead of writing files.
        #[arg(long, conflicts_with = "out")]
        stream: Option<String>,
    },
    /// Sample frames uniformly from the pooled frames of indexed videos.
    SampleFrames {
        /// Video index CSV.
        index: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory (frames/ and frames.jsonl).
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = default_workers())]
        workers: usize,
    },
    /// Aggregate frame predictions per video and report metrics.
    Evaluate {
        /// Frame predictions (JSON lines).
        predictions: PathBuf,
        /// Video index CSV with ground-truth labels.
        index: PathBuf,
        #[arg(long, value_enum, default_value_t = AggArg::Average)]
        agg: AggArg,
        #[arg(long, value_enum, default_value_t = FormatArg::Table)]
        format: FormatArg,
    },
    /// Emit the epoch plans of the training schedule as JSON.
    Schedule {
        config: PathBuf,
        index: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the default config.
    DefaultConfig,
}

#[derive(Clone, Copy, ValueEnum)]
enum AggArg {
    Average,
    Vote,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Table,
    Json,
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[derive(Serialize)]
struct FrameRecord<'a> {
    video_id: &'a str,
    frame_index: u64,
    label: u8,
    label_name: &'static str,
    file: String,
}

fn print_summary(s: &GenerationSummary, out: &mut dyn Write) -> io::Result<()> {
    writeln!(out, "scenes:            {}", s.count)?;
    for c in GroupClass::ALL {
        let k = c.index();
        writeln!(
            out,
            "  {:<9} {:>8}  {:>6.2}%",
            c.name(),
            s.class_counts[k],
            100.0 * s.class_fractions[k]
        )?;
    }
    writeln!(out, "faces placed:      {}", s.faces_placed)?;
    writeln!(out, "retried scenes:    {}", s.retried_scenes)?;
    writeln!(out, "placement retries: {}", s.placement_retries)?;
    writeln!(out, "elapsed:           {:.2} s", s.elapsed_secs)?;
    writeln!(out, "throughput:        {:.1} images/s", s.images_per_sec)
}

fn generate(
    config: &Path,
    catalog_root: Option<PathBuf>,
    out: Option<PathBuf>,
    count: u64,
    seed: u64,
    workers: usize,
    stream: Option<String>,
) -> Result<(), Error> {
    let cfg = Config::load(config)?;
    let root = catalog_root.unwrap_or_else(|| match config.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    });
    let catalog = load_catalog(&root, &cfg.catalog, &cfg.chroma)?;
    let compose = cfg.compose();
    let seed = Seed::new(seed);
    let summary = match (stream.as_deref(), out) {
        (Some("-"), _) => {
            let mut sink = StreamSink::new(BufWriter::new(io::stdout().lock()));
            generate_dataset(&catalog, &compose, &seed, count, workers, &mut sink)?
        }
        (Some(target), _) => {
            let path = target
                .strip_prefix("unix:")
                .ok_or_else(|| Error::Config(format!("--stream expects - or unix:<path>, got {target}")))?;
            let mut sink = unix_stream_sink(Path::new(path))?;
            generate_dataset(&catalog, &compose, &seed, count, workers, &mut *sink)?
        }
        (None, Some(dir)) => {
            let mut sink = DirectorySink::new(&dir).map_err(|e| Error::io(&dir, e))?;
            generate_dataset(&catalog, &compose, &seed, count, workers, &mut sink)?
        }
        (None, None) => unreachable!("clap requires --out or --stream"),
    };
    let _ = print_summary(&summary, &mut io::stderr().lock());
    Ok(())
}

#[cfg(unix)]
fn unix_stream_sink(path: &Path) -> Result<Box<dyn DatasetSink>, Error> {
    let socket = std::os::unix::net::UnixStream::connect(path).map_err(|e| Error::io(path, e))?;
    Ok(Box::new(StreamSink::new(BufWriter::new(socket))))
}

#[cfg(not(unix))]
fn unix_stream_sink(_path: &Path) -> Result<Box<dyn DatasetSink>, Error> {
    Err(Error::Config("unix socket streaming is not supported on this platform".into()))
}

fn sample(index: &Path, k: usize, seed: u64, out: &Path, workers: usize) -> Result<(), Error> {
    let videos = load_video_index(index)?;
    let refs = sample_frames(&videos, k, &Seed::new(seed))?;
    let frames_dir = out.join("frames");
    fs::create_dir_all(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;
    let decoder = FrameDecoder::from_env();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<(), Error>> = pool.install(|| {
        refs.par_iter()
            .enumerate()
            .map(|(i, r)| {
                let video = videos.iter().find(|v| v.video_id == r.video_id).expect("sampled from index");
                let img = extract_frame(video, r.frame_index, &decoder)?;
                let path = frames_dir.join(format!("frame_{i:06}.png"));
                fs::write(&path, raster::encode_png(&img)?).map_err(|e| Error::io(&path, e))
            })
            .collect()
    });
    let mut failed = std::collections::BTreeSet::new();
    let mut errors = 0usize;
    for (r, res) in refs.iter().zip(&results) {
        if let Err(e) = res {
            errors += 1;
            if failed.insert(r.video_id.clone()) {
                eprintln!("error: {e}");
            }
        }
    }
    let list = out.join("frames.jsonl");
    let mut w = BufWriter::new(fs::File::create(&list).map_err(|e| Error::io(&list, e))?);
    for (i, (r, res)) in refs.iter().zip(&results).enumerate() {
        if res.is_err() {
            continue;
        }
        let label = videos.iter().find(|v| v.video_id == r.video_id).expect("sampled from index").label;
        let rec = FrameRecord {
            video_id: &r.video_id,
            frame_index: r.frame_index,
            label: label.index() as u8,
            label_name: label.name(),
            file: format!("frames/frame_{i:06}.png"),
        };
        serde_json::to_writer(&mut w, &rec)?;
        writeln!(w).map_err(|e| Error::io(&list, e))?;
    }
    w.flush().map_err(|e| Error::io(&list, e))?;
    if errors > 0 {
        return Err(Error::FrameDecode {
            video: failed.into_iter().collect::<Vec<_>>().join(", "),
            index: 0,
            reason: format!("{errors} of {} frames could not be extracted", refs.len()),
        });
    }
    eprintln!("wrote {} frames to {}", refs.len(), frames_dir.display());
    Ok(())
}

fn eval(predictions: &Path, index: &Path, agg: AggArg, format: FormatArg) -> Result<(), Error> {
    let text = fs::read_to_string(predictions).map_err(|e| Error::io(predictions, e))?;
    let series = parse_predictions(&text).map_err(|e| match e {
        Error::Predictions(m) => Error::Predictions(format!("{}: {m}", predictions.display())),
        other => other,
    })?;
    let videos = load_video_index(index)?;
    let agg = match agg {
        AggArg::Average => Aggregation::Average,
        AggArg::Vote => Aggregation::Vote,
    };
    let style = match format {
        FormatArg::Table => ReportStyle::Table,
        FormatArg::Json => ReportStyle::Json,
    };
    let report = evaluate(&series, &videos, agg)?;
    println!("{}", format_report(&report, style)?.trim_end());
    Ok(())
}

fn schedule(config: &Path, index: &Path, seed: u64) -> Result<(), Error> {
    let cfg = Config::load(config)?;
    let videos = load_video_index(index)?;
    let plans = build_schedule(&cfg.schedule, &videos, &Seed::new(seed))?;
    let mut out = BufWriter::new(io::stdout().lock());
    serde_json::to_writer(&mut out, &plans)?;
    let _ = writeln!(out);
    let _ = out.flush();
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate {
            config,
            catalog,
            out,
            count,
            seed,
            workers,
            stream,
        } => generate(&config, catalog, out, count, seed, workers, stream),
        Command::SampleFrames { index, k, seed, out, workers } => sample(&index, k, seed, &out, workers),
        Command::Evaluate {
            predictions,
            index,
            agg,
            format,
        } => eval(&predictions, &index, agg, format),
        Command::Schedule { config, index, seed } => schedule(&config, &index, seed),
        Command::DefaultConfig => {
            print!("{}", Config::default().to_toml());
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
