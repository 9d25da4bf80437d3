//! JCLE, PSO and ML on the same measurement at a few SNRs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use risloc::baselines::{ml_localize, pso_localize, PsoConfig};
use risloc::harness::{prepare_trial, ExperimentSpec};
use risloc::vbi::run_jcle;

fn main() -> risloc::Result<()> {
    let spec = ExperimentSpec::desk();
    println!("snr_db  trial  JCLE_m      PSO_m       ML_m");
    for snr in [10.0, 20.0, 30.0] {
        for trial in 0..3 {
            let s = prepare_trial(&spec, snr, trial)?;
            let p_true = s.truth.position(&s.cfg);
            let err = |failed: bool, p: risloc::geometry::Vec3| {
                if failed {
                    "failed".to_string()
                } else {
                    format!("{:.4e}", (p - p_true).norm())
                }
            };

            let (_, jcle, _) = run_jcle(&s.cfg, &s.priors, &s.snap, &s.dict, s.p_init, &spec.jcle.options())?;
            let pso_cfg = PsoConfig {
                particles: spec.pso.particles,
                iterations: spec.pso.iterations,
                ..PsoConfig::centered(s.p_init, spec.pso.box_half_width)
            };
            let gains = (s.priors.mu_alpha_au, s.priors.mu_delta_slab);
            let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
            let pso = pso_localize(&s.cfg, &s.snap, &s.dict, &pso_cfg, gains, &mut rng)?;
            let ml = ml_localize(&s.cfg, &s.snap, &s.dict)?;

            println!(
                "{snr:<7} {trial:<6} {:<11} {:<11} {}",
                err(jcle.failure_flag, jcle.p_u_hat),
                err(pso.failure_flag, pso.p_u_hat),
                err(ml.failure_flag, ml.p_u_hat)
            );
        }
    }
    Ok(())
}
