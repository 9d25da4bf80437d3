//! Position Cramér–Rao bound over SNR, with the full and Schur-complement
//! inversions side by side.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use risloc::bcrb::position_bound;
use risloc::geometry::{noise_variance_for_snr, ChannelTruth, RisProfile, ScenarioConfig, SignalParams};

fn main() -> risloc::Result<()> {
    let base = ScenarioConfig::desk();
    let truth = ChannelTruth::from_geometry(
        &base,
        base.p_u_true,
        Complex64::new(1.0, 0.0),
        Complex64::new(0.5, 0.2),
    )?;
    let profile = RisProfile::random(&base, &mut ChaCha8Rng::seed_from_u64(7));
    let params = SignalParams::from_truth(&base, &truth, &profile);

    println!("snr_db  delta        bound_m      schur_m      condition");
    for snr in [0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0] {
        let cfg = ScenarioConfig {
            delta: noise_variance_for_snr(&base, &params, snr)?,
            ..base.clone()
        };
        let b = position_bound(&cfg, &truth, &profile)?;
        println!(
            "{snr:<7} {:<12.4e} {:<12.4e} {:<12.4e} {:.2e}",
            cfg.delta, b.bound_m, b.schur_bound_m, b.condition
        );
    }
    Ok(())
}
