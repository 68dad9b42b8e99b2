use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use wavecast::data_io::{gen_corpus, ingest_station, read_cache, write_cache};
use wavecast::harness::report::{write_ranks, Manifest, MANIFEST_FILE, SUMMARY_FILE};
use wavecast::harness::{emit_reports, rank_models, read_summary, run_experiment, write_plotdata, Figure, PretrainConfig, RunConfig};
use wavecast::metrics::Metric;
use wavecast::model::ForecastModel;
use wavecast::series::{impute_forward_backward, split_chronological, SplitSpec};
use wavecast::{Error, Result, TimeSeries};

#[derive(Parser)]
#[command(name = "wavecast", version, about = "Tokenized probabilistic wave height forecasting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a station's buoy files into a cache CSV.
    Ingest {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        station: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic Gaussian-process corpus as cache CSVs.
    Synth {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        len: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the sequence model on every cache CSV in a directory.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        /// JSON with `model` and `tokenizer` sections; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Continue training a checkpoint on a station's train split.
    Finetune {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        station: PathBuf,
        #[arg(long)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full evaluation and write its reports.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute and print average ranks from a report directory.
    Rank {
        #[arg(long)]
        report: PathBuf,
    },
    /// Regenerate plot data for one figure.
    Plotdata {
        #[arg(long)]
        report: PathBuf,
        #[arg(long, value_enum)]
        figure: FigureArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FigureArg {
    Scatter,
    Overlay,
    Horizon,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn clean(series: &TimeSeries) -> Result<TimeSeries> {
    impute_forward_backward(series)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { input, station, out } => {
            let parsed = ingest_station(&input, &station)?;
            eprintln!(
                "{station}: {} data rows, {} present, {} sentinel, {} reduced, {} malformed, {} duplicate timestamps",
                parsed.data_rows,
                parsed.present,
                parsed.sentinel,
                parsed.reduced,
                parsed.errors.len(),
                parsed.duplicate_count()
            );
            for e in &parsed.errors {
                eprintln!("  line {}: {}", e.line, e.msg);
            }
            let series = parsed.into_series()?;
            write_cache(&out, &series)?;
            eprintln!("wrote {} hourly points ({} missing) to {}", series.len(), series.missing_count(), out.display());
        }
        Command::Synth { n, len, seed, out } => {
            fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            for s in gen_corpus(n, len, seed)? {
                write_cache(&out.join(format!("{}.csv", s.station_id())), &s)?;
            }
            eprintln!("wrote {n} series of length {len} to {}", out.display());
        }
        Command::Train { corpus, config, out } => {
            let cfg: PretrainConfig = match config {
                Some(p) => serde_json::from_str(&read_text(&p)?)?,
                None => PretrainConfig::default(),
            };
            let mut files: Vec<PathBuf> = fs::read_dir(&corpus)
                .map_err(|e| Error::io(&corpus, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "csv"))
                .collect();
            files.sort();
            if files.is_empty() {
                return Err(Error::EmptySeries);
            }
            let series = files.iter().map(|p| read_cache(p).and_then(|s| clean(&s))).collect::<Result<Vec<_>>>()?;
            let (model, stats) = ForecastModel::train(&series, cfg.model, cfg.tokenizer)?;
            model.save(&out)?;
            if let (Some(first), Some(last)) = (stats.losses.first(), stats.losses.last()) {
                eprintln!("trained {} steps in {:.1}s, loss {first:.4} -> {last:.4}", stats.losses.len(), stats.seconds);
            }
        }
        Command::Finetune { ckpt, station, steps, seed, out } => {
            let mut model = ForecastModel::load(&ckpt)?;
            let series = clean(&read_cache(&station)?)?;
            let (train, _, _) = split_chronological(&series, &SplitSpec::default())?;
            let stats = model.fine_tune(&[train], steps, seed)?;
            model.save(&out)?;
            if let (Some(first), Some(last)) = (stats.losses.first(), stats.losses.last()) {
                eprintln!("fine-tuned {steps} steps, loss {first:.4} -> {last:.4}");
            }
        }
        Command::Evaluate { config, out } => {
            let cfg = RunConfig::from_json(&read_text(&config)?)?;
            let dir = out.or_else(|| cfg.output_dir.clone()).ok_or_else(|| Error::Config("no output directory given".into()))?;
            let report = run_experiment(&cfg)?;
            emit_reports(&report, &cfg, &dir)?;
            for f in &report.failures {
                eprintln!("failed: {} {} horizon {:?}: {}", f.station, f.model, f.horizon, f.error);
            }
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            eprintln!("{} scored windows written to {}", report.rows.len(), dir.display());
        }
        Command::Rank { report } => {
            let negate = match read_text(&report.join(MANIFEST_FILE)) {
                Ok(text) => serde_json::from_str::<Manifest>(&text)?.config.negate_scores,
                Err(_) => false,
            };
            let ranking = rank_models(&read_summary(&report.join(SUMMARY_FILE))?);
            write_ranks(&report, &ranking, negate)?;
            let header: Vec<String> = Metric::RANK_ORDER.iter().map(|m| format!("{:>8}", m.header(negate))).collect();
            println!("{:<16}{}", "model", header.join(""));
            for (model, ranks) in &ranking.overall {
                let cells: Vec<String> = ranks.iter().map(|r| format!("{r:>8.3}")).collect();
                println!("{model:<16}{}", cells.join(""));
            }
        }
        Command::Plotdata { report, figure } => {
            let figure = match figure {
                FigureArg::Scatter => Figure::Scatter,
                FigureArg::Overlay => Figure::Overlay,
                FigureArg::Horizon => Figure::Horizon,
            };
            write_plotdata(&report, figure)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
