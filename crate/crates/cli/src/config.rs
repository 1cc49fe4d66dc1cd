use std::path::PathBuf;

use perlat::envelope::RankMeasure;
use perlat::estimators::Taper;
use perlat::field::{CovarianceKind, CovarianceModel};
use perlat::{BoxWindow, SeedSpec};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Simulate,
    Ktheory,
    Summarize,
    Diagnose,
    Fit,
    Envelope,
}

impl Command {
    pub fn is_randomized(self) -> bool {
        matches!(self, Command::Simulate | Command::Fit | Command::Envelope)
    }

    pub fn needs_input(self) -> bool {
        matches!(self, Command::Summarize | Command::Diagnose | Command::Fit | Command::Envelope)
    }
}

/// Uniform radius grid `start, start + step, ..., end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub start: f64,
    pub end: f64,
    pub step: f64,
}

impl GridSpec {
    pub fn values(&self) -> CliResult<Vec<f64>> {
        Ok(perlat::curve::uniform_grid(self.start, self.end, self.step)?)
    }
}

/// Null model of the envelope test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NullKind {
    /// The configured perturbed-lattice model.
    #[default]
    Model,
    Poisson,
}

/// Everything a run depends on. Missing fields take command defaults; the
/// effective config is echoed in the run manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    pub dim: usize,
    pub model: Option<CovarianceModel>,
    pub window: Option<BoxWindow>,
    pub input: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: Option<SeedSpec>,
    /// Radii for K, L, G and envelope curves.
    pub r_grid: Option<GridSpec>,
    /// Radii for the pair correlation function (must be positive).
    pub pcf_grid: Option<GridSpec>,
    pub bandwidth: Option<f64>,
    pub q: Option<f64>,
    pub replicates: usize,
    pub buffer: Option<f64>,
    pub rescale: bool,
    pub r1: f64,
    pub r2: f64,
    pub two_stage: bool,
    pub stage2_r1: f64,
    pub stage2_r2: f64,
    pub n_sims: Option<usize>,
    pub measure: RankMeasure,
    pub null: NullKind,
    pub alpha: f64,
    pub box_side: f64,
    pub box_gap: f64,
    pub k_cutoff: f64,
    pub k_max: f64,
    pub taper: Taper,
    pub angle_bins: usize,
    /// Radii of the theoretical number variance.
    pub variance_radii: Vec<f64>,
    pub gnuplot: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: Command::Summarize,
            dim: 3,
            model: None,
            window: None,
            input: None,
            out: PathBuf::from("out"),
            seed: None,
            r_grid: None,
            pcf_grid: None,
            bandwidth: None,
            q: None,
            replicates: 1,
            buffer: None,
            rescale: false,
            r1: 0.0,
            r2: 3.0,
            two_stage: false,
            stage2_r1: 0.2,
            stage2_r2: 2.0,
            n_sims: None,
            measure: RankMeasure::Erl,
            null: NullKind::Model,
            alpha: 0.05,
            box_side: 2.7,
            box_gap: 1.5,
            k_cutoff: 1.5,
            k_max: 1.5,
            taper: Taper::Sine,
            angle_bins: 36,
            variance_radii: vec![1.0, 2.0, 4.0, 8.0, 16.0],
            gnuplot: false,
        }
    }
}

impl RunConfig {
    /// Parses a config file, or the `config` member of a run manifest.
    pub fn from_json(text: &str) -> CliResult<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| CliError::config(format!("config JSON: {e}")))?;
        let value = match value.get("config") {
            Some(inner) if value.get("outputs").is_some() => inner.clone(),
            _ => value,
        };
        serde_json::from_value(value).map_err(|e| CliError::config(format!("config JSON: {e}")))
    }

    pub fn r_grid_values(&self) -> CliResult<Vec<f64>> {
        self.r_grid
            .unwrap_or(GridSpec {
                start: 0.0,
                end: 3.0,
                step: 0.02,
            })
            .values()
    }

    pub fn pcf_grid_values(&self) -> CliResult<Vec<f64>> {
        self.pcf_grid
            .unwrap_or(GridSpec {
                start: 0.05,
                end: 3.0,
                step: 0.05,
            })
            .values()
    }

    pub fn q_value(&self) -> f64 {
        self.q.unwrap_or_else(|| perlat::ktheory::default_truncation(self.dim))
    }

    pub fn require_model(&self) -> CliResult<CovarianceModel> {
        self.model
            .ok_or_else(|| CliError::config(format!("command {:?} needs a model", self.command)))
    }

    pub fn require_window(&self) -> CliResult<BoxWindow> {
        self.window
            .clone()
            .ok_or_else(|| CliError::config(format!("command {:?} needs a window", self.command)))
    }

    pub fn validate(&self) -> CliResult<()> {
        crate::io::coordinate_header(self.dim)?;
        if let Some(m) = &self.model {
            if m.dim != self.dim {
                return Err(CliError::config(format!("model dimension {} differs from dim {}", m.dim, self.dim)));
            }
            m.validate().map_err(|e| CliError::config(e.to_string()))?;
        }
        if let Some(w) = &self.window {
            w.validate().map_err(|e| CliError::config(e.to_string()))?;
            if w.dim() != self.dim {
                return Err(CliError::config(format!("window dimension {} differs from dim {}", w.dim(), self.dim)));
            }
        }
        if self.command.needs_input() && self.input.is_none() {
            return Err(CliError::config(format!("command {:?} needs an input CSV", self.command)));
        }
        match self.command {
            Command::Simulate => {
                self.require_model()?;
                self.require_window()?;
                if self.replicates == 0 {
                    return Err(CliError::config("replicates must be at least 1"));
                }
            }
            Command::Ktheory => {
                self.require_model()?;
            }
            Command::Fit => {
                let m = self.require_model()?;
                if m.kind == CovarianceKind::Stationarized {
                    return Err(CliError::config("fit needs an iid or powexp initial model"));
                }
            }
            Command::Envelope => {
                if self.null == NullKind::Model {
                    self.require_model()?;
                }
                if !(self.alpha > 0.0 && self.alpha < 1.0) {
                    return Err(CliError::config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
                }
            }
            Command::Summarize | Command::Diagnose => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let cfg = RunConfig {
            command: Command::Envelope,
            model: Some(CovarianceModel::powexp(3, 0.3, 2.5, 2.0).unwrap()),
            input: Some(PathBuf::from("data.csv")),
            seed: Some(SeedSpec::new(7, 2)),
            null: NullKind::Poisson,
            ..RunConfig::default()
        };
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), cfg);
        let manifest = format!(r#"{{"config": {text}, "outputs": {{}}}}"#);
        assert_eq!(RunConfig::from_json(&manifest).unwrap(), cfg);
    }

    #[test]
    fn partial_and_invalid_configs() {
        let cfg = RunConfig::from_json(r#"{"command": "ktheory", "model": {"kind": "stationarized", "dim": 3}}"#).unwrap();
        assert_eq!(cfg.alpha, 0.05);
        assert_eq!(cfg.q_value(), 15.0);
        cfg.validate().unwrap();
        assert!(RunConfig::from_json(r#"{"comand": "fit"}"#).is_err());
        let missing = RunConfig {
            command: Command::Fit,
            ..RunConfig::default()
        };
        assert!(matches!(missing.validate(), Err(CliError::Config(_))));
        let bad_alpha = RunConfig {
            command: Command::Envelope,
            input: Some(PathBuf::from("x.csv")),
            null: NullKind::Poisson,
            alpha: 1.5,
            ..RunConfig::default()
        };
        assert!(bad_alpha.validate().is_err());
    }

    #[test]
    fn default_grids() {
        let cfg = RunConfig::default();
        let r = cfg.r_grid_values().unwrap();
        assert_eq!((r.len(), r[0]), (151, 0.0));
        assert!((r[150] - 3.0).abs() < 1e-12);
        assert!(cfg.pcf_grid_values().unwrap()[0] > 0.0);
    }
}
