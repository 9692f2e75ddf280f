//! Fault effect models shared by the simulator and the diagnosis model.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectKind {
    StuckOn,
    StuckOff,
    DegradedDraw,
    SensorBias,
    SensorStale,
    BusTrip,
}

impl EffectKind {
    pub const ALL: [EffectKind; 6] = [
        EffectKind::StuckOn,
        EffectKind::StuckOff,
        EffectKind::DegradedDraw,
        EffectKind::SensorBias,
        EffectKind::SensorStale,
        EffectKind::BusTrip,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EffectKind::StuckOn => "stuck_on",
            EffectKind::StuckOff => "stuck_off",
            EffectKind::DegradedDraw => "degraded_draw",
            EffectKind::SensorBias => "sensor_bias",
            EffectKind::SensorStale => "sensor_stale",
            EffectKind::BusTrip => "bus_trip",
        }
    }

    /// Effects that act on a load.
    pub fn targets_load(self) -> bool {
        matches!(
            self,
            EffectKind::StuckOn | EffectKind::StuckOff | EffectKind::DegradedDraw
        )
    }

    pub fn targets_sensor(self) -> bool {
        matches!(self, EffectKind::SensorBias | EffectKind::SensorStale)
    }

    /// Whether the effect removes its component from service.
    pub fn is_loss(self) -> bool {
        matches!(self, EffectKind::StuckOff | EffectKind::BusTrip)
    }
}

impl fmt::Display for EffectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EffectKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EffectKind::ALL
            .iter()
            .copied()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown fault effect `{s}`"))
    }
}

/// One failure mode's effect on the simulated habitat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub id: String,
    /// Component the failure mode belongs to (graph node or sensor).
    pub component: String,
    pub effect: EffectKind,
    /// Load id, bus id or parameter id the effect acts on.
    pub target: String,
    /// Default effect parameters (`bias`, `multiplier`).
    pub params: BTreeMap<String, f64>,
}

impl FaultSpec {
    pub fn param(&self, key: &str, overrides: &BTreeMap<String, f64>) -> Option<f64> {
        overrides.get(key).or_else(|| self.params.get(key)).copied()
    }
}

/// All injectable failure modes of a scenario, keyed by mode id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FaultCatalog {
    pub modes: BTreeMap<String, FaultSpec>,
}

impl FaultCatalog {
    pub fn get(&self, id: &str) -> Option<&FaultSpec> {
        self.modes.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.modes.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn insert(&mut self, spec: FaultSpec) {
        self.modes.insert(spec.id.clone(), spec);
    }
}

/// A scheduled or immediate fault injection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultInjection {
    pub fault_mode_id: String,
    pub at_time_s: f64,
    #[serde(default)]
    pub parameters: BTreeMap<String, f64>,
}

impl FaultInjection {
    pub fn new(fault_mode_id: impl Into<String>, at_time_s: f64) -> Self {
        Self {
            fault_mode_id: fault_mode_id.into(),
            at_time_s,
            parameters: BTreeMap::new(),
        }
    }

    pub fn with_param(mut self, key: &str, value: f64) -> Self {
        self.parameters.insert(key.to_string(), value);
        self
    }
}
