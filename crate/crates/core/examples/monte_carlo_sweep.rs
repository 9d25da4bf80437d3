//! Seeded SNR sweep written to a temporary directory, then plotted.

use risloc::harness::{emit_plot, run_sweep, Algorithm, ExperimentSpec};

fn main() -> risloc::Result<()> {
    let mut spec = ExperimentSpec::desk();
    let out = std::env::temp_dir().join("risloc-monte-carlo");
    spec.experiment.output_dir = out.clone();
    spec.experiment.trials = 20;
    spec.experiment.sweep_values = vec![0.0, 10.0, 20.0];
    spec.experiment.algorithms = vec![Algorithm::Jcle, Algorithm::Bcrb];

    let report = run_sweep(&spec)?;
    for row in &report.summary {
        println!(
            "{:<5} {:>5} dB  rmse {:.4e} m  median {:.4e} m  failures {:.2}",
            row.algo.name(),
            row.sweep_value,
            row.rmse_m,
            row.median_m,
            row.failure_rate
        );
    }
    let files = emit_plot(&report.summary_csv, "rmse_m", &out.join("rmse.svg"))?;
    println!("wrote {} and {}", files.svg.display(), files.dat.display());
    Ok(())
}
