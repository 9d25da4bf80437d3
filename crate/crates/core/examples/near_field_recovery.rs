//! Near-field trial from `configs/near.cfg`. The dictionary carries the range
//! in its steering columns and is refocused while the estimate moves.

use std::path::Path;

use risloc::harness::{prepare_trial, ExperimentSpec};
use risloc::vbi::run_jcle;

fn main() -> risloc::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/near.cfg");
    let spec = ExperimentSpec::load(&path)?;
    let snr = 25.0;
    for trial in 0..3 {
        let s = prepare_trial(&spec, snr, trial)?;
        let (_, est, report) = run_jcle(&s.cfg, &s.priors, &s.snap, &s.dict, s.p_init, &spec.jcle.options())?;
        let err = (est.p_u_hat - s.truth.position(&s.cfg)).norm();
        println!(
            "trial {trial}: range {:.3} m, focus {:.3} m, estimated range {:.4} m, error {:.3e} m, {} iterations",
            s.truth.rho,
            s.dict.focus_range.unwrap_or(f64::NAN),
            est.rho_hat,
            err,
            report.iterations_run
        );
    }
    Ok(())
}
