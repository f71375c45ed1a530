//! Experiment configuration loaded from a single TOML file.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

use crate::envelopes::{EnvelopeConfig, EnvelopeConstants};
use crate::error::{check_alpha, Error, Result};
use crate::profiles::{make_profile, PotentialProfile, ProfileKind, TabulatedProfile};
use crate::spectral::{DEFAULT_K, DEFAULT_L, DEFAULT_N};
use crate::stable_sim::{Potential, SimConfig};
use crate::thresholds::{
    fit_threshold_model_with, threshold_grid, ThresholdModel, ThresholdOptions, DEFAULT_CLASS_THRESHOLD,
    DEFAULT_T0_TOL,
};
use crate::verify::{FitOptions, RegimeThresholds, VerifyGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSection {
    /// `power`, `log` or `custom`.
    pub kind: String,
    pub p: Option<f64>,
    pub beta: Option<f64>,
    pub radii: Option<Vec<f64>>,
    pub values: Option<Vec<f64>>,
    #[serde(default = "one")]
    pub d: usize,
    /// Divide a tabulated profile by its value at the origin.
    #[serde(default)]
    pub normalize: bool,
}

fn one() -> usize {
    1
}

impl Default for ProfileSection {
    fn default() -> Self {
        Self {
            kind: "power".into(),
            p: Some(2.0),
            beta: None,
            radii: None,
            values: None,
            d: 1,
            normalize: false,
        }
    }
}

impl ProfileSection {
    pub fn build(&self) -> Result<PotentialProfile> {
        let missing = |key: &str| Error::Config(format!("profile kind '{}' requires '{key}'", self.kind));
        let kind = match self.kind.as_str() {
            "power" => ProfileKind::Power {
                p: self.p.ok_or_else(|| missing("p"))?,
            },
            "log" => ProfileKind::Log {
                beta: self.beta.ok_or_else(|| missing("beta"))?,
            },
            "custom" => {
                let radii = self.radii.clone().ok_or_else(|| missing("radii"))?;
                let mut values = self.values.clone().ok_or_else(|| missing("values"))?;
                if self.normalize {
                    if let Some(&v0) = values.first().filter(|v| **v > 0.0) {
                        values.iter_mut().for_each(|v| *v /= v0);
                    }
                }
                ProfileKind::Custom(TabulatedProfile::new(radii, values)?)
            }
            other => return Err(Error::Config(format!("unknown profile kind '{other}'"))),
        };
        make_profile(kind, self.d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdSection {
    pub r_max: f64,
    pub n_points: usize,
    pub tol: f64,
    pub class_threshold: f64,
}

impl Default for ThresholdSection {
    fn default() -> Self {
        Self {
            r_max: 1e3,
            n_points: 64,
            tol: DEFAULT_T0_TOL,
            class_threshold: DEFAULT_CLASS_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct EnvelopeSection {
    /// Ground-state eigenvalue; `None` takes it from the spectral oracle.
    pub lambda1: Option<f64>,
    pub constants: EnvelopeConstants,
}


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub delta: Option<f64>,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            n_paths: 100_000,
            n_steps: 100,
            seed: 0,
            delta: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralSection {
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    /// Binary model cache; rebuilt when absent or stale.
    pub cache: Option<PathBuf>,
}

impl Default for SpectralSection {
    fn default() -> Self {
        Self {
            l: DEFAULT_L,
            n: DEFAULT_N,
            k: DEFAULT_K,
            cache: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    pub grid: VerifyGrid,
    pub thresholds: RegimeThresholds,
    pub green_threshold: f64,
    pub fit: FitOptions,
    /// Spectral modes used in verification; `None` keeps all `N`.
    pub modes: Option<usize>,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            grid: VerifyGrid::default(),
            thresholds: RegimeThresholds::default(),
            green_threshold: 1e2,
            fit: FitOptions::default(),
            modes: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from(".") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub profile: ProfileSection,
    #[serde(default)]
    pub thresholds: ThresholdSection,
    #[serde(default)]
    pub envelope: EnvelopeSection,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub spectral: SpectralSection,
    #[serde(default)]
    pub verify: VerifySection,
    #[serde(default)]
    pub output: OutputSection,
}

fn default_alpha() -> f64 {
    1.0
}

fn range(ok: bool, what: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(what.into()))
    }
}

impl ExperimentConfig {
    /// Parses and validates. Syntax errors carry the TOML line and column.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        self.profile.build()?;
        let th = &self.thresholds;
        range(th.r_max > 1.0, "thresholds.r_max must exceed 1")?;
        range(th.n_points >= 32, "thresholds.n_points must be at least 32")?;
        range(th.tol > 0.0, "thresholds.tol must be positive")?;
        range(th.class_threshold >= 1.0, "thresholds.class_threshold must be at least 1")?;
        if let Some(l) = self.envelope.lambda1 {
            range(l > 0.0, "envelope.lambda1 must be positive")?;
        }
        self.envelope.constants.validate()?;
        let sim = &self.sim;
        range(sim.n_paths >= 2, "sim.n_paths must be at least 2")?;
        range(sim.n_steps >= 10, "sim.n_steps must be at least 10")?;
        if let Some(d) = sim.delta {
            range(d > 0.0, "sim.delta must be positive")?;
        }
        let sp = &self.spectral;
        range(sp.l > 0.0, "spectral.L must be positive")?;
        range(sp.n >= 8, "spectral.N must be at least 8")?;
        range(sp.k >= 1 && sp.k <= sp.n, "spectral.K must lie in [1, N]")?;
        let v = &self.verify;
        range(
            v.grid.t_min > 0.0 && v.grid.t_max > v.grid.t_min && v.grid.n_times >= 2,
            "verify.grid needs 0 < t_min < t_max and n_times >= 2",
        )?;
        range(
            v.grid.points.iter().all(|x| x.abs() < sp.l / 2.0),
            "verify.grid.points must lie inside the spectral box",
        )?;
        range(
            v.thresholds.small_time >= 1.0 && v.thresholds.large_time >= 1.0 && v.green_threshold >= 1.0,
            "verify thresholds must be at least 1",
        )?;
        range(
            !v.fit.c0_ladder.is_empty() && v.fit.c0_ladder.iter().all(|c| *c > 0.0),
            "verify.fit.c0_ladder must hold positive values",
        )?;
        range(v.fit.min_points >= 1, "verify.fit.min_points must be at least 1")?;
        range(v.fit.exponent_relaxation >= 1.0, "verify.fit.exponent_relaxation must be at least 1")?;
        if let Some(m) = v.modes {
            range(m >= 1 && m <= sp.n, "verify.modes must lie in [1, N]")?;
        }
        Ok(())
    }

    /// Hex SHA-256 of the parsed configuration.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn build_profile(&self) -> Result<PotentialProfile> {
        self.profile.build()
    }

    pub fn threshold_model(&self) -> Result<ThresholdModel> {
        let th = &self.thresholds;
        fit_threshold_model_with(
            &self.build_profile()?,
            self.alpha,
            &threshold_grid(th.r_max, th.n_points),
            ThresholdOptions {
                tol: th.tol,
                class_threshold: th.class_threshold,
            },
        )
    }

    /// Envelope configuration; `lambda1` overrides the configured value.
    pub fn envelope_config(&self, lambda1: Option<f64>) -> Result<EnvelopeConfig> {
        let lambda1 = lambda1.or(self.envelope.lambda1).ok_or_else(|| {
            Error::Config("envelope.lambda1 is unset and no spectral value was supplied".into())
        })?;
        EnvelopeConfig::with_constants(self.threshold_model()?, lambda1, self.envelope.constants)
    }

    pub fn sim_config(&self, potential: Potential) -> SimConfig {
        SimConfig {
            alpha: self.alpha,
            d: self.profile.d,
            n_paths: self.sim.n_paths,
            n_steps: self.sim.n_steps,
            seed: self.sim.seed,
            delta: self.sim.delta,
            potential,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_from_empty_file() {
        let c = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(c.alpha, 1.0);
        assert_eq!(c.spectral.n, 1024);
        assert_eq!(c.build_profile().unwrap().g(1.0), 4.0);
    }

    #[test]
    fn full_file() {
        let text = r#"
alpha = 1.5
[profile]
kind = "log"
beta = 2.0
[thresholds]
n_points = 40
[envelope]
lambda1 = 2.5
[envelope.constants]
c0 = 4.0
[sim]
seed = 7
delta = 0.01
[spectral]
L = 40.0
N = 256
K = 64
[verify.fit]
c0_ladder = [1.0, 3.0]
[verify.grid]
points = [0.0, 1.0]
"#;
        let c = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(c.spectral.l, 40.0);
        assert_eq!(c.envelope.constants.c0, 4.0);
        let env = c.envelope_config(None).unwrap();
        assert_eq!(env.lambda1, 2.5);
        assert_eq!(c.sim_config(Potential::ZERO).seed, 7);
    }

    #[test]
    fn rejections() {
        let bad = [
            "alpha = 2.0",
            "alpha = 1.0\nbogus = 3",
            "[profile]\nkind = \"power\"\np = 2.0\ncolour = 1",
            "[profile]\nkind = \"log\"",
            "[profile]\nkind = \"cubic\"",
            "[spectral]\nK = 5000",
            "[verify.grid]\npoints = [12.0]",
            "[envelope.constants]\nc9 = 2.0",
        ];
        for text in bad {
            assert!(ExperimentConfig::from_toml_str(text).is_err(), "{text}");
        }
    }

    #[test]
    fn syntax_error_names_the_line() {
        let err = ExperimentConfig::from_toml_str("alpha = 1.0\n[profile\nkind = 1").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn normalization_option() {
        let text = "[profile]\nkind = \"custom\"\nradii = [0.0, 1.0, 10.0]\nvalues = [0.5, 1.0, 20.0]\n";
        assert!(ExperimentConfig::from_toml_str(text).is_err());
        let c = ExperimentConfig::from_toml_str(&format!("{text}normalize = true\n")).unwrap();
        assert!((c.build_profile().unwrap().g(0.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fingerprint_tracks_content() {
        let a = ExperimentConfig::from_toml_str("alpha = 1.0").unwrap();
        let b = ExperimentConfig::from_toml_str("").unwrap();
        let c = ExperimentConfig::from_toml_str("alpha = 0.5").unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
        assert_eq!(a.fingerprint().len(), 64);
    }
}
