use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use risloc::bcrb::position_bound;
use risloc::geometry::{noise_variance_for_snr, ChannelTruth, FieldMode, RisProfile, SignalParams};
use risloc::harness::{
    emit_plot, run_sweep, run_trial_traced, Algorithm, ExperimentSpec, SweepAxis, CONFIG_REFERENCE,
};
use risloc::Error;

#[derive(Parser)]
#[command(name = "risloc", version, about = "RIS-aided joint localization and channel estimation experiments")]
#[command(after_long_help = CONFIG_REFERENCE)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one trial and print the per-iteration JCLE trace.
    Simulate {
        #[command(flatten)]
        spec: SpecArgs,
        /// Sweep value of the trial [first configured value].
        #[arg(long)]
        value: Option<f64>,
        /// Trial index.
        #[arg(long, default_value_t = 0)]
        trial: u64,
    },
    /// Run the full experiment and write results.csv, summary.csv and timings.csv.
    Sweep {
        #[command(flatten)]
        spec: SpecArgs,
    },
    /// Print the position bound for the configured user position.
    Bcrb {
        #[command(flatten)]
        spec: SpecArgs,
    },
    /// Turn a summary.csv into an SVG figure and a gnuplot data file.
    Plot {
        /// summary.csv written by `sweep`.
        #[arg(long)]
        summary: PathBuf,
        /// rmse_m, median_m, failure_rate, support_rate, mean_delta_err or mean_iterations.
        #[arg(long, default_value = "rmse_m")]
        metric: String,
        /// Output SVG path; the data file gets the .dat extension.
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Args)]
struct SpecArgs {
    /// Experiment config file (TOML) [desk-scale defaults].
    #[arg(long)]
    config: Option<PathBuf>,
    /// SNR in dB; on an SNR sweep this replaces the sweep values.
    #[arg(long)]
    snr: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// far-field or near-field.
    #[arg(long)]
    field_mode: Option<String>,
    /// Snapshots T.
    #[arg(long)]
    snapshots: Option<usize>,
    /// RIS side M = N.
    #[arg(long)]
    ris_side: Option<usize>,
    /// Subcarriers L.
    #[arg(long)]
    subcarriers: Option<usize>,
    /// snr-db, snapshots or ris-elements.
    #[arg(long)]
    sweep_axis: Option<String>,
    /// Comma-separated sweep values.
    #[arg(long, value_delimiter = ',')]
    sweep_values: Option<Vec<f64>>,
    /// Comma-separated subset of JCLE, PSO, ML, BCRB.
    #[arg(long, value_delimiter = ',')]
    algorithms: Option<Vec<String>>,
    /// RIS-user distance, m.
    #[arg(long)]
    range: Option<f64>,
    /// Run trials one after another.
    #[arg(long)]
    serial: bool,
}

impl SpecArgs {
    fn resolve(&self) -> Result<ExperimentSpec, Error> {
        let mut spec = match &self.config {
            Some(path) => ExperimentSpec::load(path)?,
            None => ExperimentSpec::desk(),
        };
        let e = &mut spec.experiment;
        if let Some(axis) = &self.sweep_axis {
            e.sweep_axis = match axis.as_str() {
                "snr-db" => SweepAxis::SnrDb,
                "snapshots" => SweepAxis::Snapshots,
                "ris-elements" => SweepAxis::RisElements,
                other => return Err(Error::Usage(format!("unknown sweep axis '{other}'"))),
            };
        }
        if let Some(values) = &self.sweep_values {
            e.sweep_values = values.clone();
        }
        if let Some(snr) = self.snr {
            e.snr_db = Some(snr);
            if e.sweep_axis == SweepAxis::SnrDb {
                e.sweep_values = vec![snr];
            }
        }
        if let Some(n) = self.trials {
            e.trials = n;
        }
        if let Some(s) = self.seed {
            e.master_seed = s;
        }
        if let Some(o) = &self.output {
            e.output_dir = o.clone();
        }
        if let Some(list) = &self.algorithms {
            e.algorithms = list.iter().map(|s| Algorithm::parse(s)).collect::<Result<_, _>>()?;
        }
        if let Some(r) = self.range {
            e.user_range = Some(r);
        }
        if self.serial {
            e.parallel = false;
        }
        let s = &mut spec.scenario;
        if let Some(mode) = &self.field_mode {
            s.field_mode = match mode.as_str() {
                "far-field" => FieldMode::FarField,
                "near-field" => FieldMode::NearField,
                other => return Err(Error::Usage(format!("unknown field mode '{other}'"))),
            };
        }
        if let Some(t) = self.snapshots {
            s.t = t;
        }
        if let Some(side) = self.ris_side {
            s.m = side;
            s.n = side;
        }
        if let Some(l) = self.subcarriers {
            s.l = l;
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn simulate(spec: &ExperimentSpec, value: Option<f64>, trial: u64) -> Result<(), Error> {
    let value = value.unwrap_or(spec.experiment.sweep_values[0]);
    println!("trial {trial} at {} = {value}", spec.experiment.sweep_axis.label());
    let records = run_trial_traced(spec, value, trial, &mut |r| println!("  {r}"))?;
    println!("algo  pos_error_m  support  iterations  failed");
    for r in records {
        println!(
            "{:<5} {:<12.6} {:<8} {:<11} {}",
            r.algo.name(),
            r.pos_error_m,
            r.support_correct,
            r.iterations,
            r.failed
        );
    }
    Ok(())
}

fn sweep(spec: &ExperimentSpec) -> Result<(), Error> {
    let report = run_sweep(spec)?;
    println!("algo  value     rmse_m        median_m      failure_rate");
    for row in &report.summary {
        println!(
            "{:<5} {:<9} {:<13.6e} {:<13.6e} {:.3}",
            row.algo.name(),
            row.sweep_value,
            row.rmse_m,
            row.median_m,
            row.failure_rate
        );
    }
    println!("wrote {}", report.results_csv.display());
    println!("wrote {}", report.summary_csv.display());
    println!("wrote {}", report.timings_csv.display());
    Ok(())
}

fn bcrb(spec: &ExperimentSpec) -> Result<(), Error> {
    let mut cfg = spec.scenario.clone();
    let gains = (
        Complex64::new(spec.priors.mu_alpha_au[0], spec.priors.mu_alpha_au[1]),
        Complex64::new(spec.priors.mu_delta_slab[0], spec.priors.mu_delta_slab[1]),
    );
    let truth = ChannelTruth::from_geometry(&cfg, cfg.p_u_true, gains.0, gains.1)?;
    let profile = RisProfile::random(&cfg, &mut ChaCha8Rng::seed_from_u64(cfg.rng_seed));
    if let Some(snr) = spec.experiment.snr_db {
        let params = SignalParams::from_truth(&cfg, &truth, &profile);
        cfg.delta = noise_variance_for_snr(&cfg, &params, snr)?;
    }
    let report = position_bound(&cfg, &truth, &profile)?;
    println!("bcrb_m = {:.6e}", report.bound_m);
    println!("schur_bcrb_m = {:.6e}", report.schur_bound_m);
    println!("condition = {:.3e}", report.condition);
    if report.regularized {
        println!("regularized = true");
    }
    Ok(())
}

/// Config and flag problems are usage errors; everything after is a runtime error.
fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let resolved = match &cli.command {
        Command::Simulate { spec, .. } | Command::Sweep { spec } | Command::Bcrb { spec } => {
            spec.resolve().map(Some)
        }
        Command::Plot { .. } => Ok(None),
    };
    let spec = match resolved {
        Ok(spec) => spec,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let outcome = match (&cli.command, spec) {
        (Command::Simulate { value, trial, .. }, Some(spec)) => simulate(&spec, *value, *trial),
        (Command::Sweep { .. }, Some(spec)) => sweep(&spec),
        (Command::Bcrb { .. }, Some(spec)) => bcrb(&spec),
        (Command::Plot { summary, metric, output }, _) => plot(summary, metric, output),
        _ => unreachable!("spec resolved for every spec command"),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn plot(summary: &std::path::Path, metric: &str, output: &std::path::Path) -> Result<(), Error> {
    if !summary.exists() {
        return Err(Error::Usage(format!("summary file {} does not exist", summary.display())));
    }
    emit_plot(summary, metric, output).map(|files| {
        println!("wrote {} ({} series)", files.svg.display(), files.series);
        println!("wrote {}", files.dat.display());
    })
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Usage(_) => 1,
        _ => 2,
    }
}
