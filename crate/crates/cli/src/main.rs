//! `floc` — the pipeline's single entry point.
//!
//! Machine-readable output is one JSON line on stdout; human logs go to
//! stderr. Exit codes: 0 success, 1 user error, 2 internal error.

use std::io::Write;
use std::net::TcpStream;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Duration;

use clap::{Parser, Subcommand};
use serde::Serialize;

use floc_core::dataset;
use floc_core::datamodel::WaterSample;
use floc_core::nn;
use floc_core::simulator::{FrameGen, Scenario, ScenarioKind};
use floc_service::config::ServiceConfig;
use floc_service::server::Service;

#[derive(Parser)]
#[command(name = "floc", version, about = "Biofloc water-quality pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a dissolved-oxygen classifier from a CSV dataset.
    Train {
        /// Training CSV (columns temp,do,ph,tds,floc; header optional).
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 150)]
        epochs: usize,
        #[arg(long, default_value_t = 32)]
        batch: usize,
        #[arg(long, default_value_t = 0.05)]
        lr: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Hidden layer widths, comma-separated.
        #[arg(long, value_delimiter = ',', default_value = "16,16,16,16,16")]
        hidden: Vec<usize>,
        /// Where to write the model file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a model file against a labeled CSV.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Classify a single reading.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        temp: f64,
        #[arg(long)]
        ph: f64,
        #[arg(long)]
        tds: f64,
        #[arg(long)]
        floc: f64,
    },
    /// Run the ingestion service until interrupted.
    Serve {
        /// Service config file (JSON); falls back to $FLOC_CONFIG.
        #[arg(long, env = "FLOC_CONFIG")]
        config: PathBuf,
    },
    /// Stream simulated device frames at a running service.
    Simulate {
        /// host:port of the service listener.
        #[arg(long)]
        target: String,
        /// normal | do-crash | ph-drift
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        devices: usize,
        /// Frames per second per device.
        #[arg(long)]
        rate: f64,
        /// Scenario duration in seconds.
        #[arg(long)]
        duration: f64,
        #[arg(long, default_value_t = 0.0)]
        corrupt_prob: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

struct CliError {
    message: String,
    code: u8,
}

fn user_err(message: impl Into<String>) -> CliError {
    CliError { message: message.into(), code: 1 }
}

fn internal_err(message: impl Into<String>) -> CliError {
    CliError { message: message.into(), code: 2 }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    ExitCode::SUCCESS
                }
                _ => {
                    eprint!("{e}");
                    ExitCode::from(1)
                }
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Train { data, epochs, batch, lr, seed, hidden, out } => {
            train(data, epochs, batch, lr, seed, hidden, out)
        }
        Command::Eval { model, data } => eval(model, data),
        Command::Predict { model, temp, ph, tds, floc } => predict(model, temp, ph, tds, floc),
        Command::Serve { config } => serve(config),
        Command::Simulate { target, scenario, devices, rate, duration, corrupt_prob, seed } => {
            simulate(target, scenario, devices, rate, duration, corrupt_prob, seed)
        }
    }
}

fn emit(value: &impl Serialize) -> Result<(), CliError> {
    let line = serde_json::to_string(value)
        .map_err(|e| internal_err(format!("serializing output: {e}")))?;
    println!("{line}");
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary {
    test_accuracy: f64,
    final_test_loss: f64,
    initial_train_loss: f64,
    final_train_loss: f64,
    train_rows: usize,
    test_rows: usize,
    epochs: usize,
    wall_time_secs: f64,
    model_path: String,
}

fn train(
    data: PathBuf,
    epochs: usize,
    batch: usize,
    lr: f64,
    seed: u64,
    hidden: Vec<usize>,
    out: PathBuf,
) -> Result<(), CliError> {
    let dataset = dataset::load_csv_auto(&data).map_err(|e| user_err(e.to_string()))?;
    let config = nn::TrainConfig {
        epochs,
        batch_size: batch,
        learning_rate: lr,
        momentum: 0.9,
        seed,
        hidden_dims: hidden,
    };
    let (params, report) = nn::train(&dataset, &config).map_err(|e| user_err(e.to_string()))?;
    nn::save_model(&params, &out).map_err(|e| user_err(e.to_string()))?;
    eprintln!(
        "trained on {} rows, tested on {} ({} epochs, batch {})",
        report.train_rows,
        report.test_rows,
        epochs,
        params.training.as_ref().map_or(batch, |t| t.batch_size)
    );
    emit(&TrainSummary {
        test_accuracy: report.test_accuracy,
        final_test_loss: report.final_test_loss,
        initial_train_loss: report.initial_train_loss,
        final_train_loss: report.final_train_loss,
        train_rows: report.train_rows,
        test_rows: report.test_rows,
        epochs,
        wall_time_secs: report.wall_time_secs,
        model_path: out.display().to_string(),
    })
}

#[derive(Serialize)]
struct EvalSummary {
    rows: usize,
    accuracy: f64,
    mean_loss: f64,
    confusion: [[u32; 4]; 4],
}

fn eval(model: PathBuf, data: PathBuf) -> Result<(), CliError> {
    let params = nn::load_model(&model).map_err(|e| user_err(e.to_string()))?;
    // Label with the edges the model was trained under.
    let has_header = peek_header(&data)?;
    let dataset = dataset::load_csv_with_edges(&data, has_header, params.bin_edges)
        .map_err(|e| user_err(e.to_string()))?;

    let mut confusion = [[0u32; 4]; 4];
    let mut correct = 0usize;
    let mut features = Vec::with_capacity(dataset.len());
    for (sample, label) in dataset.samples().iter().zip(dataset.labels()) {
        let (predicted, _) = nn::predict(&params, sample).map_err(|e| user_err(e.to_string()))?;
        confusion[label.index()][predicted.index()] += 1;
        if predicted == *label {
            correct += 1;
        }
        features.push(dataset::apply_norm(&params.norm_stats, sample));
    }
    let mean_loss = nn::batch_loss(&params, &features, dataset.labels());
    emit(&EvalSummary {
        rows: dataset.len(),
        accuracy: correct as f64 / dataset.len() as f64,
        mean_loss,
        confusion,
    })
}

fn peek_header(path: &PathBuf) -> Result<bool, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| user_err(format!("cannot read {}: {e}", path.display())))?;
    Ok(text
        .lines()
        .find(|l| !l.trim().is_empty())
        .is_some_and(|l| l.split(',').next().unwrap_or("").trim().parse::<f64>().is_err()))
}

#[derive(Serialize)]
struct PredictSummary {
    class: u8,
    label: String,
    probabilities: [f64; 4],
}

fn predict(model: PathBuf, temp: f64, ph: f64, tds: f64, floc: f64) -> Result<(), CliError> {
    let params = nn::load_model(&model).map_err(|e| user_err(e.to_string()))?;
    let sample = WaterSample::new(temp, ph, tds, floc);
    sample.validate().map_err(user_err)?;
    let (class, probs) = nn::predict(&params, &sample).map_err(|e| user_err(e.to_string()))?;
    emit(&PredictSummary {
        class: class.index() as u8,
        label: class.label().to_string(),
        probabilities: probs.0,
    })
}

static INTERRUPTED: AtomicBool = AtomicBool::new(false);

extern "C" fn on_signal(_: libc::c_int) {
    INTERRUPTED.store(true, Ordering::SeqCst);
}

fn serve(config_path: PathBuf) -> Result<(), CliError> {
    let config = ServiceConfig::load(&config_path).map_err(|e| user_err(e.to_string()))?;
    let service = Service::start(&config).map_err(|e| user_err(e.to_string()))?;
    eprintln!("listening on {} (store {})", service.local_addr(), config.store_path.display());

    // Standard async-signal-safe flag flip; the main thread polls it.
    unsafe {
        libc::signal(libc::SIGINT, on_signal as *const () as libc::sighandler_t);
        libc::signal(libc::SIGTERM, on_signal as *const () as libc::sighandler_t);
    }
    while !INTERRUPTED.load(Ordering::SeqCst) {
        std::thread::sleep(Duration::from_millis(100));
    }
    eprintln!("interrupt received, shutting down");
    let stats = service.shutdown();
    emit(&stats)
}

#[derive(Serialize)]
struct SimulateSummary {
    scenario: String,
    devices: usize,
    frames_per_device: u64,
    frames_sent: u64,
    send_errors: u64,
}

fn simulate(
    target: String,
    scenario: String,
    devices: usize,
    rate: f64,
    duration: f64,
    corrupt_prob: f64,
    seed: u64,
) -> Result<(), CliError> {
    let kind: ScenarioKind = scenario.parse().map_err(user_err)?;
    let spec = Scenario {
        kind,
        devices,
        rate,
        duration_secs: duration,
        corrupt_prob,
        seed,
        ..Scenario::new(kind, seed)
    };
    spec.validate().map_err(user_err)?;

    let pause = Duration::from_secs_f64(1.0 / rate);
    let mut handles = Vec::new();
    for device_index in 0..devices {
        let spec = spec.clone();
        let target = target.clone();
        handles.push(std::thread::spawn(move || -> Result<(u64, u64), String> {
            let mut gen = FrameGen::new(&spec, device_index);
            let mut stream = TcpStream::connect(&target)
                .map_err(|e| format!("cannot connect to {target}: {e}"))?;
            let (mut sent, mut errors) = (0u64, 0u64);
            while !gen.done() {
                let line = gen.next_frame();
                match stream.write_all(line.as_bytes()) {
                    Ok(()) => sent += 1,
                    Err(e) => {
                        errors += 1;
                        eprintln!("{}: send failed: {e}", gen.device_id());
                        break;
                    }
                }
                if !gen.done() {
                    std::thread::sleep(pause);
                }
            }
            let _ = stream.flush();
            Ok((sent, errors))
        }));
    }

    let (mut sent, mut errors) = (0u64, 0u64);
    let mut first_failure = None;
    for handle in handles {
        match handle.join().map_err(|_| internal_err("simulator thread panicked"))? {
            Ok((s, e)) => {
                sent += s;
                errors += e;
            }
            Err(message) => first_failure = Some(message),
        }
    }
    if let Some(message) = first_failure {
        return Err(user_err(message));
    }
    emit(&SimulateSummary {
        scenario,
        devices,
        frames_per_device: spec.frames_per_device(),
        frames_sent: sent,
        send_errors: errors,
    })
}
