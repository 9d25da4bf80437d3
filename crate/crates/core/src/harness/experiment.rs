use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::PsoConfig;
use crate::error::{Error, Result};
use crate::geometry::{FieldMode, ScenarioConfig};
use crate::locate::DelayGrid;
use crate::vbi::{JcleOptions, PriorConfig, RangeReadout};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    SnrDb,
    Snapshots,
    RisElements,
}

impl SweepAxis {
    pub fn label(&self) -> &'static str {
        match self {
            SweepAxis::SnrDb => "SNR (dB)",
            SweepAxis::Snapshots => "snapshots T",
            SweepAxis::RisElements => "RIS side M=N",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Algorithm {
    Jcle,
    Pso,
    Ml,
    Bcrb,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Jcle, Algorithm::Pso, Algorithm::Ml, Algorithm::Bcrb];

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Jcle => "JCLE",
            Algorithm::Pso => "PSO",
            Algorithm::Ml => "ML",
            Algorithm::Bcrb => "BCRB",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Usage(format!("unknown algorithm '{s}' (expected JCLE, PSO, ML or BCRB)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub p: usize,
    pub q: usize,
    /// Keep only grid directions on the access-point side of the RIS.
    pub front_only: bool,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            p: 10,
            q: 10,
            front_only: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JcleSection {
    pub tol: f64,
    pub max_iter: usize,
    pub delay_oversample: usize,
    pub range_readout: RangeReadout,
    pub ridge_step: bool,
    pub greedy_init: bool,
}

impl Default for JcleSection {
    fn default() -> Self {
        let o = JcleOptions::default();
        Self {
            tol: o.tol,
            max_iter: o.max_iter,
            delay_oversample: o.delay_grid.oversample,
            range_readout: o.range_readout,
            ridge_step: o.ridge_step,
            greedy_init: o.greedy_init,
        }
    }
}

impl JcleSection {
    pub fn options(&self) -> JcleOptions {
        JcleOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            delay_grid: DelayGrid {
                oversample: self.delay_oversample,
            },
            range_readout: self.range_readout,
            ridge_step: self.ridge_step,
            greedy_init: self.greedy_init,
            ..JcleOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsoSection {
    pub particles: usize,
    pub iterations: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    /// Half-width of the search cube around the initial position.
    pub box_half_width: f64,
}

impl Default for PsoSection {
    fn default() -> Self {
        let p = PsoConfig::default();
        Self {
            particles: p.particles,
            iterations: p.iterations,
            inertia: p.inertia,
            cognitive: p.cognitive,
            social: p.social,
            box_half_width: 15.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub sweep_axis: SweepAxis,
    pub sweep_values: Vec<f64>,
    pub trials: usize,
    pub algorithms: Vec<Algorithm>,
    pub master_seed: u64,
    pub on_grid_truth: bool,
    pub output_dir: PathBuf,
    /// SNR for sweeps over other axes; when absent the scenario noise variance is used.
    pub snr_db: Option<f64>,
    /// Distance from the RIS to the drawn user; defaults to 20 m far field, 50 wavelengths near field.
    pub user_range: Option<f64>,
    /// Per-axis standard deviation of the initial position bias.
    pub init_bias_std: Option<f64>,
    pub parallel: bool,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            sweep_axis: SweepAxis::SnrDb,
            sweep_values: vec![5.0, 10.0, 15.0, 20.0, 25.0],
            trials: 50,
            algorithms: Algorithm::ALL.to_vec(),
            master_seed: 1,
            on_grid_truth: true,
            output_dir: PathBuf::from("out"),
            snr_db: Some(15.0),
            user_range: None,
            init_bias_std: None,
            parallel: true,
        }
    }
}

/// A full Monte Carlo experiment, as read from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub scenario: ScenarioConfig,
    pub grid: GridSection,
    pub priors: PriorConfig,
    pub jcle: JcleSection,
    pub pso: PsoSection,
    pub experiment: ExperimentSection,
}

impl ExperimentSpec {
    /// Desk-scale preset: `M = N = 10`, `L = 64`, `T = 40`, 50 trials.
    pub fn desk() -> Self {
        Self {
            scenario: ScenarioConfig::desk(),
            ..Self::default()
        }
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.priors.validate()?;
        let e = &self.experiment;
        if e.trials < 1 {
            return Err(Error::domain("trials must be at least 1"));
        }
        if e.sweep_values.is_empty() {
            return Err(Error::domain("sweep_values must not be empty"));
        }
        if e.algorithms.is_empty() {
            return Err(Error::domain("at least one algorithm is required"));
        }
        for &v in &e.sweep_values {
            let ok = match e.sweep_axis {
                SweepAxis::SnrDb => v.is_finite(),
                SweepAxis::Snapshots | SweepAxis::RisElements => v >= 1.0 && v.fract() == 0.0,
            };
            if !ok {
                return Err(Error::domain(format!("invalid sweep value {v} for {}", e.sweep_axis.label())));
            }
        }
        if self.grid.p == 0 || self.grid.q == 0 {
            return Err(Error::domain("grid sizes must be at least 1"));
        }
        if self.jcle.max_iter == 0 || !(self.jcle.tol > 0.0) {
            return Err(Error::domain("JCLE needs max_iter >= 1 and tol > 0"));
        }
        if self.pso.particles < 2 || self.pso.iterations < 1 || !(self.pso.box_half_width > 0.0) {
            return Err(Error::domain("PSO needs particles >= 2, iterations >= 1 and a positive box"));
        }
        if let Some(r) = e.user_range {
            if !(r > 0.0) {
                return Err(Error::domain("user_range must be positive"));
            }
        }
        if let Some(s) = e.init_bias_std {
            if !(s >= 0.0) {
                return Err(Error::domain("init_bias_std must be nonnegative"));
            }
        }
        Ok(())
    }

    pub fn user_range(&self) -> f64 {
        self.experiment.user_range.unwrap_or(match self.scenario.field_mode {
            FieldMode::FarField => 20.0,
            FieldMode::NearField => 50.0 * self.scenario.lambda,
        })
    }

    /// 5 m far field; a fifth of the user range in the near field.
    pub fn init_bias_std(&self) -> f64 {
        self.experiment.init_bias_std.unwrap_or(match self.scenario.field_mode {
            FieldMode::FarField => 5.0,
            FieldMode::NearField => 0.2 * self.user_range(),
        })
    }

    /// Scenario at one sweep value, before noise calibration.
    pub fn scenario_at(&self, value: f64) -> ScenarioConfig {
        let mut cfg = self.scenario.clone();
        match self.experiment.sweep_axis {
            SweepAxis::SnrDb => {}
            SweepAxis::Snapshots => cfg.t = value as usize,
            SweepAxis::RisElements => {
                cfg.m = value as usize;
                cfg.n = value as usize;
            }
        }
        cfg
    }

    pub fn snr_at(&self, value: f64) -> Option<f64> {
        match self.experiment.sweep_axis {
            SweepAxis::SnrDb => Some(value),
            _ => self.experiment.snr_db,
        }
    }
}

/// Config-file schema and CSV columns, as shown by `risloc --help`.
pub const CONFIG_REFERENCE: &str = "\
CONFIG FILE (TOML; every field optional, defaults in brackets)

[scenario]
  p_a = [x, y, z]        access point position, m        [100, 100, 30]
  p_r = [x, y, z]        RIS reference element, m       [10, 40, 10]
  p_u_true = [x, y, z]   user position for `bcrb`/`simulate` defaults
                         [p_r + 20 m towards psi=30 deg, phi=50 deg]
  m, n                   RIS elements along x and z     [20, 20]
  l                      OFDM subcarriers                [128]
  t                      snapshots (RIS profiles)        [80]
  delta_f                subcarrier spacing, Hz          [240e3] (assumed)
  lambda                 carrier wavelength, m           [c / 28 GHz] (assumed)
  d                      element spacing, m              [lambda / 2]
  p_w                    pilot power                     [1]
  delta                  noise variance per entry        [0.01]
  c                      speed of light, m/s             [2.9979e8]
  field_mode             \"far-field\" | \"near-field\"      [far-field]
  rng_seed               seed for `bcrb` RIS profiles    [0]

[grid]
  p, q                   azimuth / elevation grid points [10, 10]
  front_only             drop directions behind the RIS  [true]

[priors]
  mu_alpha_au = [re, im] direct-path gain prior mean     [0.2, 0.2]
  delta_alpha_au         direct-path gain prior variance [0.01]
  sigma_phase            phase-vector prior variance     [1e3]
  mu_delta_slab = [re, im] slab mean of the sparse vector [0.5, 0.5]
  a, b                   Gamma shape and scale of the precisions [1e5, 1e-3]

[jcle]
  tol                    stopping threshold              [1e-6]
  max_iter               iteration cap                   [50]
  delay_oversample       delay grid points per subcarrier [32]
  range_readout          \"weighted\" | \"constraint\"       [weighted]
  ridge_step             direct/reflected line search    [true]
  greedy_init            seed the strongest column as slab [true]

[pso]
  particles, iterations                                  [200, 100]
  inertia, cognitive, social                             [0.72, 1.49, 1.49]
  box_half_width         search cube around the initial position, m [15]

[experiment]
  sweep_axis             \"snr-db\" | \"snapshots\" | \"ris-elements\" [snr-db]
  sweep_values           list of axis values             [5, 10, 15, 20, 25]
  trials                 trials per sweep value          [50]
  algorithms             subset of JCLE, PSO, ML, BCRB   [all]
  master_seed            64-bit seed of the whole sweep  [1]
  on_grid_truth          draw user directions on the grid [true]
  output_dir             where CSV files go              [out]
  snr_db                 SNR when the axis is not SNR; absent = use delta [15]
  user_range             RIS-user distance, m  [20 far field, 50 lambda near field]
  init_bias_std          per-axis std of the initial position bias, m
                         [5 far field, user_range / 5 near field]
  parallel               run trials concurrently         [true]

results.csv columns
  run_id, algo, sweep_value, seed, pos_error_m (the bound for BCRB rows, NaN
  when failed), delta_err, support_correct, angle_err_psi, angle_err_phi
  (rad), iterations, converged, failed, snap_checksum
summary.csv columns
  axis, algo, sweep_value, trials, failures, failure_rate, rmse_m, median_m,
  support_rate, mean_delta_err, mean_iterations
timings.csv columns
  run_id, algo, wall_ms
";
