//! Typed experiment configuration resolved from a [`Document`].

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nfad_core::{NfadParams, Preset};

use crate::config::{parse_f64, Document};
use crate::error::CliError;
use crate::params;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExperimentKind {
    ClickCurve,
    ThresholdMap,
    Jitter,
    CountRateSweep,
    TableCurrents,
    GatedBlinding,
    Bb84,
    FastMonitor,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        ExperimentKind::ClickCurve,
        ExperimentKind::ThresholdMap,
        ExperimentKind::Jitter,
        ExperimentKind::CountRateSweep,
        ExperimentKind::TableCurrents,
        ExperimentKind::GatedBlinding,
        ExperimentKind::Bb84,
        ExperimentKind::FastMonitor,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::ClickCurve => "click_curve",
            ExperimentKind::ThresholdMap => "threshold_map",
            ExperimentKind::Jitter => "jitter",
            ExperimentKind::CountRateSweep => "count_rate_sweep",
            ExperimentKind::TableCurrents => "table_currents",
            ExperimentKind::GatedBlinding => "gated_blinding",
            ExperimentKind::Bb84 => "bb84",
            ExperimentKind::FastMonitor => "fast_monitor",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        Self::ALL.into_iter().find(|k| k.name() == norm).ok_or_else(|| {
            let names: Vec<_> = Self::ALL.iter().map(|k| k.name()).collect();
            CliError::Config(format!("unknown experiment `{s}` (expected one of {})", names.join(", ")))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectorChoice {
    Preset(Preset),
    /// Every parameter given explicitly in `[detector]`.
    Custom,
}

impl DetectorChoice {
    pub fn name(self) -> &'static str {
        match self {
            DetectorChoice::Preset(p) => p.name(),
            DetectorChoice::Custom => "custom",
        }
    }

    pub fn preset(self) -> Option<Preset> {
        match self {
            DetectorChoice::Preset(p) => Some(p),
            DetectorChoice::Custom => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub detector: DetectorChoice,
    /// Parameter overrides from `[detector]`, including `efficiency`.
    pub overrides: BTreeMap<String, f64>,
    /// Raw `[experiment]` settings; defaults are filled in when run.
    pub settings: BTreeMap<String, String>,
    pub seed: u64,
}

pub const DEFAULT_SEED: u64 = 1;

impl ExperimentConfig {
    /// Build from a parsed document. `experiment` and `seed` override the file.
    pub fn from_document(
        doc: &Document,
        experiment: Option<ExperimentKind>,
        seed: Option<u64>,
    ) -> Result<Self, CliError> {
        for name in doc.sections.keys() {
            if !["", "detector", "experiment"].contains(&name.as_str()) {
                return Err(CliError::Config(format!("unknown section [{name}]")));
            }
        }
        if let Some(root) = doc.section("") {
            if let Some(k) = root.keys().find(|k| !["experiment", "seed"].contains(&k.as_str())) {
                return Err(CliError::Config(format!("unknown top-level key `{k}`")));
            }
        }
        let experiment = match (experiment, doc.get("", "experiment")) {
            (Some(e), _) => e,
            (None, Some(s)) => s.parse()?,
            (None, None) => return Err(CliError::Config("no experiment selected".into())),
        };
        let seed = match (seed, doc.get("", "seed")) {
            (Some(s), _) => s,
            (None, Some(s)) => s
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("`seed`: expected an unsigned integer, got `{s}`")))?,
            (None, None) => DEFAULT_SEED,
        };
        let det = doc.section("detector").cloned().unwrap_or_default();
        let detector = match det.get("preset").map(|s| s.trim().to_ascii_lowercase()) {
            None => DetectorChoice::Preset(Preset::D2),
            Some(s) if s == "custom" => DetectorChoice::Custom,
            Some(s) => DetectorChoice::Preset(s.parse().map_err(|_| CliError::UnknownPreset(s.clone()))?),
        };
        let mut overrides = BTreeMap::new();
        for (k, v) in det.iter().filter(|(k, _)| k.as_str() != "preset") {
            if params::get(&nfad_core::Preset::D1.params(), k).is_none() {
                return Err(CliError::Config(format!("unknown detector parameter `{k}`")));
            }
            overrides.insert(k.clone(), parse_f64(k, v)?);
        }
        let settings = doc.section("experiment").cloned().unwrap_or_default();
        Ok(Self { experiment, detector, overrides, settings, seed })
    }

    /// Resolved and validated detector parameters.
    pub fn params(&self) -> Result<NfadParams, CliError> {
        let mut p = match self.detector {
            DetectorChoice::Preset(preset) => match self.overrides.get("efficiency") {
                Some(&eff) => preset.params_at(eff).unwrap_or_else(|_| preset.params()),
                None => preset.params(),
            },
            DetectorChoice::Custom => {
                let missing: Vec<_> = params::FIELDS.iter().filter(|f| !self.overrides.contains_key(**f)).collect();
                if !missing.is_empty() {
                    return Err(CliError::Config(format!(
                        "custom detector needs every parameter; missing {}",
                        missing.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(", ")
                    )));
                }
                Preset::D1.params()
            }
        };
        for (k, &v) in &self.overrides {
            params::set(&mut p, k, v);
        }
        p.validate().map_err(CliError::Invalid)?;
        Ok(p)
    }
}
