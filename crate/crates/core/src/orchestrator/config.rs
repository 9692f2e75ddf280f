use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Orchestrator settings. Every field can be overridden from a scenario's
/// `[vsm]` section or the command line by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VsmConfig {
    pub replan_period_s: f64,
    pub fault_debounce_frames: u32,
    pub horizon_s: f64,
    pub slot_s: f64,
    pub solver_max_nodes: u64,
    /// Time a WAIT node allows the relay to confirm a command.
    pub verify_timeout_s: f64,
    /// Pending event replans auto-commit after this much sim time.
    pub approval_timeout_s: f64,
    pub max_fault_cardinality: usize,
    pub anomaly_enabled: bool,
    pub estimator_enabled: bool,
    pub estimator_cap: usize,
    pub estimator_fault_budget: usize,
    pub bus_budget: usize,
}

impl Default for VsmConfig {
    fn default() -> Self {
        Self {
            replan_period_s: 300.0,
            fault_debounce_frames: 3,
            horizon_s: 7200.0,
            slot_s: 60.0,
            solver_max_nodes: crate::scheduler::SolveBudget::default().max_nodes,
            verify_timeout_s: 30.0,
            approval_timeout_s: 60.0,
            max_fault_cardinality: 2,
            anomaly_enabled: true,
            estimator_enabled: true,
            estimator_cap: crate::estimator::DEFAULT_CAP,
            estimator_fault_budget: crate::estimator::DEFAULT_FAULT_BUDGET,
            bus_budget: crate::bus::DEFAULT_BUDGET,
        }
    }
}

impl VsmConfig {
    /// Sets one field from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let mut obj = serde_json::to_value(&*self).map_err(|e| e.to_string())?;
        let map = obj.as_object_mut().expect("config serializes as an object");
        let Some(slot) = map.get_mut(key) else {
            return Err(format!("unknown setting `{key}`"));
        };
        *slot = match slot {
            Value::Bool(_) => Value::Bool(
                value
                    .parse()
                    .map_err(|_| format!("`{key}` expects true or false"))?,
            ),
            Value::Number(_) => serde_json::from_str::<Value>(value)
                .ok()
                .filter(Value::is_number)
                .ok_or_else(|| format!("`{key}` expects a number, got `{value}`"))?,
            _ => return Err(format!("`{key}` cannot be set")),
        };
        *self = serde_json::from_value(obj).map_err(|e| format!("`{key}`: {e}"))?;
        Ok(())
    }

    /// Checks the settings against the frame period.
    pub fn validate(&self, dt_s: f64) -> Result<(), String> {
        let multiple = |x: f64| x > 0.0 && ((x / dt_s).round() * dt_s - x).abs() < 1e-9;
        if !multiple(self.replan_period_s) {
            return Err(format!(
                "replan_period_s must be a positive multiple of the frame period {dt_s} s"
            ));
        }
        if !(self.slot_s > 0.0 && self.horizon_s >= self.slot_s) {
            return Err("slot_s must be positive and no longer than horizon_s".into());
        }
        if self.estimator_cap == 0 {
            return Err("estimator_cap must be at least 1".into());
        }
        Ok(())
    }
}
