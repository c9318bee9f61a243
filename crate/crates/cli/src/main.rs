mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use flowsentry::autoencoder::ModelWeights;
use flowsentry::eval::{csv_table, markdown_table, MetricsReport, ReportFormat, RunMetadata};
use flowsentry::ingest::{load_dataset, write_file};
use flowsentry::pipeline::{
    calibrate_stage, detect_stage, evaluate_stage, gradcheck, preprocess, sweep, sweep_grid, train_stage,
};
use flowsentry::synth::{gen, write_csv};
use flowsentry::{Error, Result};

use config::{Overrides, RunConfig};

/// LSTM autoencoder anomaly detection for DDoS flow records.
///
/// Parameters resolve as: flag, then FLOWSENTRY_* environment variable, then
/// the JSON config file, then the built-in default.
#[derive(Debug, Parser)]
#[command(name = "flowsentry", version)]
struct Cli {
    /// JSON config file with any of the global parameters
    #[arg(long, global = true, env = "FLOWSENTRY_CONFIG")]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write seeded synthetic benign.csv and attack.csv
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
    /// Split benign rows, sample attacks, fit the scaler: train.csv, test.csv, scaler.json
    Preprocess {
        /// Raw flow CSVs
        #[arg(long, required = true, num_args = 1.., value_delimiter = ',')]
        input: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the autoencoder: model.json, scaler.json and train_report.json
    Train {
        /// Benign training CSV
        #[arg(long)]
        input: PathBuf,
        /// Reuse this scaler instead of fitting one on the input
        #[arg(long)]
        scaler: Option<PathBuf>,
        /// Benign CSV for per-epoch validation loss
        #[arg(long)]
        validation: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Set the threshold to the largest training score
    Calibrate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        scaler: PathBuf,
        /// The CSV the model was trained on
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a flow CSV and write per-row verdicts
    Detect {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        thresholds: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute metrics from a labelled verdicts file
    Evaluate {
        #[arg(long)]
        verdicts: PathBuf,
        /// Model whose hyperparameters go into the report
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value = "json")]
        format: String,
        #[arg(long)]
        out: PathBuf,
        /// Also write threshold,fpr,tpr points
        #[arg(long)]
        roc_points: Option<PathBuf>,
    },
    /// Train and evaluate every window × batch × learning-rate combination
    Sweep {
        /// Benign training CSV
        #[arg(long)]
        train: PathBuf,
        /// Labelled test CSV
        #[arg(long)]
        test: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "10,50,100")]
        windows: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "10,32,64")]
        batches: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "0.001,0.0001,0.00001")]
        lrs: Vec<f64>,
        #[arg(long, default_value = "csv")]
        format: String,
        #[arg(long)]
        out: PathBuf,
        /// Run cells on parallel threads
        #[arg(long)]
        parallel: bool,
    },
    /// Finite-difference check of the full model, dropout off
    Gradcheck {
        /// Parameters to sample
        #[arg(long, default_value_t = 400)]
        samples: usize,
        /// Random input windows in the batch
        #[arg(long, default_value_t = 8)]
        windows: usize,
        #[arg(long, default_value_t = 1e-5)]
        tolerance: f64,
    },
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let file = match &cli.config {
        Some(p) => Overrides::load(p)?,
        None => Overrides::default(),
    };
    RunConfig::resolve(&cli.overrides.over(&file))
}

fn run_metadata(rc: &RunConfig, model: Option<&Path>) -> Result<RunMetadata> {
    let m = match model {
        Some(p) => ModelWeights::load(p)?.config,
        None => rc.model_config(),
    };
    Ok(RunMetadata {
        window: Some(m.timesteps),
        batch: Some(m.batch_size),
        lr: Some(m.learning_rate),
        seed: Some(m.seed),
        epochs: Some(m.epochs),
        epoch_time_mean: None,
        epoch_time_std: None,
        config: Some(rc.to_value()),
    })
}

fn sweep_output(reports: &[MetricsReport], format: ReportFormat) -> Result<String> {
    Ok(match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(reports).map_err(Error::from)?;
            s.push('\n');
            s
        }
        ReportFormat::Csv => csv_table(reports),
        ReportFormat::Markdown => markdown_table(reports),
    })
}

fn run(cli: Cli) -> Result<()> {
    let rc = resolve(&cli)?;
    match cli.command {
        Command::Synth { out } => {
            let data = gen(&rc.synth_config())?;
            let (b, a) = write_csv(&data, &out)?;
            println!("wrote {} benign rows to {}", data.benign.len(), b.display());
            println!("wrote {} attack rows to {}", data.attack.len(), a.display());
        }
        Command::Preprocess { input, out } => {
            let cfg = rc.preprocess_config()?;
            let prep = preprocess(&input, &cfg)?;
            for w in &prep.warnings {
                eprintln!("warning: {w}");
            }
            let paths = prep.save(&out, &cfg.features)?;
            println!(
                "train {} rows -> {}, test {} rows -> {}, skipped {}",
                prep.train.len(),
                paths.train.display(),
                prep.test.len(),
                paths.test.display(),
                prep.skipped
            );
        }
        Command::Train { input, scaler, validation, out } => {
            let features = rc.feature_spec()?;
            let (model_out, scaler_out) = (out.join("model.json"), out.join("scaler.json"));
            let trained = train_stage(
                &input,
                &features,
                &rc.model_config(),
                scaler.as_deref(),
                validation.as_deref(),
                &model_out,
                &scaler_out,
            )?;
            let report = &trained.report;
            for (e, loss) in report.train_loss.iter().enumerate() {
                match report.val_loss.get(e) {
                    Some(v) => eprintln!("epoch {:>3} loss {loss:.6} val {v:.6}", e + 1),
                    None => eprintln!("epoch {:>3} loss {loss:.6}", e + 1),
                }
            }
            let body = serde_json::to_string_pretty(report).map_err(Error::from)? + "\n";
            write_file(out.join("train_report.json"), body.as_bytes())?;
            let (mean, std) = report.epoch_time_mean_std();
            println!(
                "trained {} parameters, final loss {:.6}, epoch time {mean:.3}±{std:.3}s -> {}",
                trained.weights.param_count(),
                report.train_loss.last().copied().unwrap_or(f64::NAN),
                model_out.display()
            );
        }
        Command::Calibrate { model, scaler, input, out } => {
            let (tm, scores) = calibrate_stage(&model, &scaler, &input, &rc.feature_spec()?, &out)?;
            println!("threshold {} from {} training rows -> {}", tm.threshold, scores.len(), out.display());
        }
        Command::Detect { model, thresholds, input, out } => {
            let d = detect_stage(&model, &thresholds, &input, &out)?;
            let flagged = d.verdicts.iter().filter(|&&v| v == 1).count();
            println!(
                "scored {} rows, flagged {flagged}, skipped {} -> {}",
                d.verdicts.len(),
                d.skipped,
                out.display()
            );
        }
        Command::Evaluate { verdicts, model, format, out, roc_points } => {
            let format: ReportFormat = format.parse()?;
            let run = run_metadata(&rc, model.as_deref())?;
            let r = evaluate_stage(&verdicts, run, format, &out, roc_points.as_deref())?;
            println!(
                "accuracy {:.4} precision {:.4} recall {:.4} f1 {:.4} -> {}",
                r.metrics.accuracy,
                r.metrics.precision,
                r.metrics.recall,
                r.metrics.f1,
                out.display()
            );
        }
        Command::Sweep { train, test, windows, batches, lrs, format, out, parallel } => {
            let format: ReportFormat = format.parse()?;
            let features = rc.feature_spec()?;
            let (train_ds, _) = load_dataset(&train, &features)?;
            let (test_ds, _) = load_dataset(&test, &features)?;
            let cells = sweep_grid(&windows, &batches, &lrs);
            let mut reports = sweep(&train_ds, &test_ds, &features, &rc.model_config(), &cells, parallel)?;
            for (r, cell) in reports.iter_mut().zip(&cells) {
                let cell_rc = RunConfig {
                    timesteps: cell.window,
                    batch_size: cell.batch,
                    learning_rate: cell.lr,
                    ..rc.clone()
                };
                r.run.config = Some(cell_rc.to_value());
            }
            write_file(&out, sweep_output(&reports, format)?.as_bytes())?;
            print!("{}", markdown_table(&reports));
        }
        Command::Gradcheck { samples, windows, tolerance } => {
            let report = gradcheck(&rc.model_config(), windows, samples, tolerance)?;
            println!(
                "max relative error {:.3e} over {} parameters (tolerance {tolerance:e})",
                report.max_rel_error, report.checked
            );
            if !report.passed() {
                return Err(Error::Numeric(format!(
                    "gradient check failed at parameter {:?}: analytic {:e}, numeric {:e}",
                    report.worst_index, report.worst_analytic, report.worst_numeric
                )));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
