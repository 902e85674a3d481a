use std::path::Path;

use lsplan_core::cost_model::{RoundScheme, StaticContext};
use lsplan_core::distillation::{ProtocolCatalog, ProtocolSpec};
use lsplan_core::error_model::{FittedModelParams, DEFAULT_D_MAX};
use lsplan_core::montecarlo::SimConfig;
use lsplan_core::temporal::{LinkParams, SolverConfig, Strategy, DEFAULT_F_DISCARD};
use serde::{Deserialize, Serialize};

use crate::UsageError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Error-model settings shared by every command.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Model {
    pub params: FittedModelParams,
    /// Local gate error; also the physical error rate seen by the solver.
    pub p_local: f64,
    pub d_max: u32,
    pub scheme: RoundScheme,
}

impl Default for Model {
    fn default() -> Self {
        Self {
            params: FittedModelParams::default(),
            p_local: 1e-3,
            d_max: DEFAULT_D_MAX,
            scheme: RoundScheme::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub start: f64,
    pub end: f64,
    pub points: usize,
}

/// Either an evenly spaced range or an explicit list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Sweep {
    Range(Range),
    Values(Vec<f64>),
}

impl Default for Sweep {
    fn default() -> Self {
        Sweep::Range(Range {
            start: 0.90,
            end: 0.99,
            points: 901,
        })
    }
}

impl Sweep {
    /// Sorted, de-duplicated fidelities.
    pub fn points(&self) -> Result<Vec<f64>, UsageError> {
        let mut pts = match self {
            Sweep::Range(r) => {
                if r.points == 0 || r.start.partial_cmp(&r.end).is_none_or(|o| o.is_gt()) {
                    return Err(UsageError(format!(
                        "empty fidelity sweep: start {} end {} points {}",
                        r.start, r.end, r.points
                    )));
                }
                if r.points == 1 {
                    vec![r.start]
                } else {
                    let step = (r.end - r.start) / (r.points - 1) as f64;
                    (0..r.points)
                        .map(|i| ((r.start + step * i as f64) * 1e12).round() / 1e12)
                        .collect()
                }
            }
            Sweep::Values(v) => v.clone(),
        };
        if pts.is_empty() {
            return Err(UsageError("empty fidelity sweep".into()));
        }
        if let Some(bad) = pts.iter().find(|f| !(0.0..=1.0).contains(*f)) {
            return Err(UsageError(format!("fidelity {bad} outside [0, 1]")));
        }
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        Ok(pts)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Simulation {
    pub runs: usize,
    pub rounds: u32,
    pub distance: Option<u32>,
}

impl Default for Simulation {
    fn default() -> Self {
        Self {
            runs: 1000,
            rounds: 100,
            distance: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    pub schema_version: u32,
    pub description: String,
    pub model: Model,
    pub fidelities: Sweep,
    pub targets: Vec<f64>,
    /// Catalog names; empty selects the primary set.
    pub protocols: Vec<String>,
    pub link: LinkParams,
    pub strategy: Strategy,
    pub f_discard: f64,
    pub n_phy: u64,
    pub simulation: Simulation,
    pub seed: u64,
    pub format: Format,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            description: String::new(),
            model: Model::default(),
            fidelities: Sweep::default(),
            targets: vec![1e-3],
            protocols: Vec::new(),
            link: LinkParams::new(1000.0),
            strategy: Strategy::RoundByRound,
            f_discard: DEFAULT_F_DISCARD,
            n_phy: 3000,
            simulation: Simulation::default(),
            seed: 0,
            format: Format::Csv,
        }
    }
}

const PRESETS: &[(&str, &str)] = &[
    ("fig2a", include_str!("../presets/fig2a.json")),
    ("fig2b", include_str!("../presets/fig2b.json")),
    ("fig2c", include_str!("../presets/fig2c.json")),
    ("fig2d", include_str!("../presets/fig2d.json")),
    ("fig3a", include_str!("../presets/fig3a.json")),
    ("fig3b", include_str!("../presets/fig3b.json")),
    ("fig3c", include_str!("../presets/fig3c.json")),
    ("fig3d", include_str!("../presets/fig3d.json")),
    ("fig5a", include_str!("../presets/fig5a.json")),
    ("fig5b", include_str!("../presets/fig5b.json")),
    ("fig5c", include_str!("../presets/fig5c.json")),
    ("fig5d", include_str!("../presets/fig5d.json")),
    ("fig7", include_str!("../presets/fig7.json")),
    ("ion-trap", include_str!("../presets/ion-trap.json")),
    (
        "neutral-atom-projected",
        include_str!("../presets/neutral-atom-projected.json"),
    ),
];

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, UsageError> {
        let s: Scenario =
            serde_json::from_str(text).map_err(|e| UsageError(format!("invalid scenario: {e}")))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, UsageError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn preset(name: &str) -> Result<Self, UsageError> {
        let (_, text) = PRESETS.iter().find(|(n, _)| *n == name).ok_or_else(|| {
            UsageError(format!(
                "unknown preset {name}; available: {}",
                preset_names().collect::<Vec<_>>().join(", ")
            ))
        })?;
        Self::parse(text)
    }

    pub fn validate(&self) -> Result<(), UsageError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(UsageError(format!(
                "unsupported schema_version {}, expected {SCHEMA_VERSION}",
                self.schema_version
            )));
        }
        self.fidelities.points()?;
        if self.targets.is_empty() {
            return Err(UsageError("no target logical error rates".into()));
        }
        if let Some(t) = self.targets.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
            return Err(UsageError(format!("target {t} outside (0, 1)")));
        }
        self.link
            .validate()
            .map_err(|e| UsageError(e.to_string()))?;
        self.model
            .params
            .validate()
            .map_err(|e| UsageError(e.to_string()))?;
        self.protocols()?;
        Ok(())
    }

    pub fn protocols(&self) -> Result<Vec<ProtocolSpec>, UsageError> {
        ProtocolCatalog::builtin()
            .select(&self.protocols)
            .map_err(|e| UsageError(e.to_string()))
    }

    pub fn static_context(&self) -> StaticContext {
        StaticContext {
            params: self.model.params,
            p_local: self.model.p_local,
            d_max: self.model.d_max,
            scheme: self.model.scheme,
            tau_se: self.link.tau_se,
        }
    }

    pub fn solver_config(&self, target: f64) -> SolverConfig {
        SolverConfig {
            params: self.model.params,
            p_phys: self.model.p_local,
            p_l_target: target,
            d_max: self.model.d_max,
            f_discard: self.f_discard,
            scheme: self.model.scheme,
        }
    }

    pub fn sim_config(&self, protocol: Option<ProtocolSpec>, target: f64) -> SimConfig {
        let mut cfg = SimConfig::new(self.link, protocol, 0.0);
        cfg.strategy = self.strategy;
        cfg.p_phys = self.model.p_local;
        cfg.p_l_target = target;
        cfg.rounds = self.simulation.rounds;
        cfg.runs = self.simulation.runs;
        cfg.seed = self.seed;
        cfg.f_discard = self.f_discard;
        cfg.distance = self.simulation.distance;
        cfg.scheme = self.model.scheme;
        cfg.params = self.model.params;
        cfg.d_max = self.model.d_max;
        cfg
    }
}
