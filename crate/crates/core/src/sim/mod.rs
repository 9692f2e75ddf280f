//! Deterministic fixed-step simulation of the habitat power system.
//!
//! One [`SimState::step`] applies commands, then any injections whose time
//! has come, then integrates the battery as an ideal clamped integrator and
//! emits a complete [`SensorFrame`]. Measurement noise is the only use of
//! randomness and is drawn from a seeded ChaCha stream.

pub mod fault;
pub mod model;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

pub use fault::{EffectKind, FaultCatalog, FaultInjection, FaultSpec};
pub use model::{parse_injections, HabitatModel, ParamDef, ParamDict, Source};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum LoadMode {
    On,
    Off,
}

impl LoadMode {
    pub fn is_on(self) -> bool {
        self == LoadMode::On
    }

    pub fn from_on(on: bool) -> Self {
        if on {
            LoadMode::On
        } else {
            LoadMode::Off
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    On,
    Off,
    Open,
    Close,
}

impl Action {
    pub fn as_str(self) -> &'static str {
        match self {
            Action::On => "on",
            Action::Off => "off",
            Action::Open => "open",
            Action::Close => "close",
        }
    }

    pub fn parse(s: &str) -> Option<Action> {
        match s {
            "on" => Some(Action::On),
            "off" => Some(Action::Off),
            "open" => Some(Action::Open),
            "close" => Some(Action::Close),
            _ => None,
        }
    }
}

/// A switching command addressed to a load relay or a bus switch.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Command {
    pub target: String,
    pub action: Action,
}

impl Command {
    pub fn new(target: impl Into<String>, action: Action) -> Self {
        Self {
            target: target.into(),
            action,
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.target, self.action.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedCommand {
    pub command: Command,
    pub reason: String,
}

/// One cycle's snapshot of every monitored parameter.
#[derive(Debug, Clone)]
pub struct SensorFrame {
    pub cycle: u64,
    pub sim_time_s: f64,
    pub dict: Arc<ParamDict>,
    pub values: Vec<f64>,
    pub stale: Vec<bool>,
    pub rejected_commands: Vec<RejectedCommand>,
}

impl SensorFrame {
    pub fn get(&self, id: &str) -> Option<f64> {
        self.dict.index_of(id).map(|i| self.values[i])
    }

    /// Value of a fresh (non-stale) parameter.
    pub fn fresh(&self, id: &str) -> Option<f64> {
        self.dict
            .index_of(id)
            .filter(|&i| !self.stale[i])
            .map(|i| self.values[i])
    }

    pub fn is_stale(&self, id: &str) -> Option<bool> {
        self.dict.index_of(id).map(|i| self.stale[i])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64, bool)> {
        self.dict
            .ids()
            .zip(self.values.iter().copied())
            .zip(self.stale.iter().copied())
            .map(|((id, v), s)| (id, v, s))
    }
}

impl Serialize for SensorFrame {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        struct Values<'a>(&'a SensorFrame);
        impl Serialize for Values<'_> {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                let mut m = s.serialize_map(Some(self.0.len()))?;
                for (id, v, _) in self.0.iter() {
                    m.serialize_entry(id, &v)?;
                }
                m.end()
            }
        }
        struct Staleness<'a>(&'a SensorFrame);
        impl Serialize for Staleness<'_> {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                let mut m = s.serialize_map(Some(self.0.len()))?;
                for (id, _, st) in self.0.iter() {
                    m.serialize_entry(id, &st)?;
                }
                m.end()
            }
        }
        let mut m = serializer.serialize_map(Some(5))?;
        m.serialize_entry("cycle", &self.cycle)?;
        m.serialize_entry("sim_time_s", &self.sim_time_s)?;
        m.serialize_entry("values", &Values(self))?;
        m.serialize_entry("staleness", &Staleness(self))?;
        m.serialize_entry("rejected_commands", &self.rejected_commands)?;
        m.end()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSummary {
    pub generation_w: f64,
    pub total_load_w: f64,
    pub net_w: f64,
    pub soc_wh: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("time step must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("unknown fault mode `{0}`")]
    UnknownFault(String),
    #[error("fault `{mode}` targets unknown {what} `{target}`")]
    BadFaultTarget {
        mode: String,
        what: &'static str,
        target: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InjectOutcome {
    Scheduled,
    /// The mode is already active or pending; nothing changed.
    Duplicate,
}

/// Load health: nominal or the id of the fault mode affecting it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Health {
    Nominal,
    Faulted(String),
}

#[derive(Debug, Clone)]
struct LoadState {
    mode: LoadMode,
    on_time_s: f64,
    temp_c: f64,
}

#[derive(Debug, Clone)]
struct ActiveFault {
    spec: FaultSpec,
    params: BTreeMap<String, f64>,
}

/// Energy bookkeeping for the conservation check.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyAccount {
    /// Σ net power · dt over all steps.
    pub integrated_net_wh: f64,
    /// Σ (unclamped − clamped) state of charge.
    pub clamped_wh: f64,
}

#[derive(Debug, Clone)]
pub struct SimState {
    model: Arc<HabitatModel>,
    dict: Arc<ParamDict>,
    catalog: Arc<FaultCatalog>,
    cycle: u64,
    time_s: f64,
    loads: Vec<LoadState>,
    bus_closed: Vec<bool>,
    bus_temp_c: Vec<f64>,
    soc_wh: f64,
    battery_temp_c: f64,
    env: Vec<f64>,
    active: Vec<ActiveFault>,
    pending: Vec<FaultInjection>,
    last_values: Vec<f64>,
    rng: ChaCha8Rng,
    energy: EnergyAccount,
    warnings: Vec<String>,
}

const LOAD_TEMP_TAU_S: f64 = 600.0;
const BUS_TEMP_TAU_S: f64 = 900.0;
const BATTERY_TEMP_TAU_S: f64 = 1800.0;

fn lag(x: f64, target: f64, dt: f64, tau: f64) -> f64 {
    x + (target - x) * (1.0 - (-dt / tau).exp())
}

impl SimState {
    pub fn new(model: Arc<HabitatModel>, catalog: Arc<FaultCatalog>, seed: u64) -> Self {
        let dict = model.param_dict();
        let loads = model
            .loads
            .iter()
            .map(|l| LoadState {
                mode: l.mode,
                on_time_s: 0.0,
                temp_c: 20.0,
            })
            .collect();
        let bus_closed = model.buses.iter().map(|b| b.switch_closed).collect();
        let n = dict.len();
        let mut state = Self {
            soc_wh: model.power.battery_soc_wh,
            battery_temp_c: 18.0,
            env: model.sensors.iter().map(|s| s.nominal).collect(),
            bus_temp_c: vec![25.0; model.buses.len()],
            model,
            dict,
            catalog,
            cycle: 0,
            time_s: 0.0,
            loads,
            bus_closed,
            active: Vec::new(),
            pending: Vec::new(),
            last_values: vec![0.0; n],
            rng: ChaCha8Rng::seed_from_u64(seed),
            energy: EnergyAccount::default(),
            warnings: Vec::new(),
        };
        // start every lagged quantity at its steady state
        let drawing = state.drawing();
        for (l, load) in state.loads.iter_mut().enumerate() {
            load.temp_c = 20.0 + 8.0 * f64::from(u8::from(drawing[l].is_some()));
        }
        let bus_power = state.bus_powers(&drawing);
        for (b, t) in state.bus_temp_c.iter_mut().enumerate() {
            *t = 25.0 + 10.0 * bus_power[b] / state.model.buses[b].capacity_w;
        }
        for (e, spec) in state.model.sensors.iter().enumerate() {
            state.env[e] = env_target(spec, &state.model, &drawing);
        }
        let summary = state.power_balance();
        state.battery_temp_c = 18.0 + 0.004 * summary.net_w.abs();
        state
    }

    pub fn model(&self) -> &Arc<HabitatModel> {
        &self.model
    }

    pub fn dict(&self) -> &Arc<ParamDict> {
        &self.dict
    }

    pub fn catalog(&self) -> &Arc<FaultCatalog> {
        &self.catalog
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn time_s(&self) -> f64 {
        self.time_s
    }

    pub fn soc_wh(&self) -> f64 {
        self.soc_wh
    }

    pub fn energy(&self) -> EnergyAccount {
        self.energy
    }

    pub fn load_mode(&self, id: &str) -> Option<LoadMode> {
        self.model.load_index(id).map(|l| self.loads[l].mode)
    }

    /// Current relay positions (true state, after stuck faults).
    pub fn relay_states(&self) -> Vec<bool> {
        (0..self.loads.len()).map(|l| self.relay(l)).collect()
    }

    pub fn load_health(&self, id: &str) -> Option<Health> {
        let l = self.model.load_index(id)?;
        let target = &self.model.loads[l].id;
        Some(
            self.active
                .iter()
                .find(|f| f.spec.effect.targets_load() && &f.spec.target == target)
                .map(|f| Health::Faulted(f.spec.id.clone()))
                .unwrap_or(Health::Nominal),
        )
    }

    pub fn bus_closed(&self, id: &str) -> Option<bool> {
        self.model.bus_index(id).map(|b| self.bus_closed[b])
    }

    pub fn active_faults(&self) -> Vec<String> {
        self.active.iter().map(|f| f.spec.id.clone()).collect()
    }

    pub fn pending_injections(&self) -> &[FaultInjection] {
        &self.pending
    }

    /// Drains warnings accumulated since the last call.
    pub fn take_warnings(&mut self) -> Vec<String> {
        std::mem::take(&mut self.warnings)
    }

    pub fn in_eclipse(&self) -> bool {
        self.model.in_eclipse(self.time_s)
    }

    fn relay(&self, l: usize) -> bool {
        let id = &self.model.loads[l].id;
        let mut relay = self.loads[l].mode.is_on();
        for f in &self.active {
            if &f.spec.target == id {
                match f.spec.effect {
                    EffectKind::StuckOn => relay = true,
                    EffectKind::StuckOff => relay = false,
                    _ => {}
                }
            }
        }
        relay
    }

    fn draw_multiplier(&self, l: usize) -> f64 {
        let id = &self.model.loads[l].id;
        self.active
            .iter()
            .filter(|f| f.spec.effect == EffectKind::DegradedDraw && &f.spec.target == id)
            .map(|f| f.spec.param("multiplier", &f.params).unwrap_or(2.0))
            .product()
    }

    /// Bus currently feeding load `l`, if any.
    fn feed(&self, l: usize) -> Option<usize> {
        let spec = &self.model.loads[l];
        let primary = self.model.bus_index(&spec.bus_id)?;
        if self.bus_closed[primary] {
            return Some(primary);
        }
        spec.alt_bus_id
            .as_deref()
            .and_then(|alt| self.model.bus_index(alt))
            .filter(|&b| self.bus_closed[b])
    }

    /// Per load: `Some((bus, watts))` when drawing.
    fn drawing(&self) -> Vec<Option<(usize, f64)>> {
        (0..self.loads.len())
            .map(|l| {
                if !self.relay(l) {
                    return None;
                }
                self.feed(l).map(|b| {
                    (
                        b,
                        self.model.loads[l].power_draw_w * self.draw_multiplier(l),
                    )
                })
            })
            .collect()
    }

    fn bus_powers(&self, drawing: &[Option<(usize, f64)>]) -> Vec<f64> {
        let mut out = vec![0.0; self.model.buses.len()];
        for (b, w) in drawing.iter().flatten() {
            out[*b] += w;
        }
        out
    }

    fn solar_now(&self) -> f64 {
        if self.model.in_eclipse(self.time_s) {
            0.0
        } else {
            self.model.power.solar_output_w
        }
    }

    pub fn power_balance(&self) -> PowerSummary {
        let generation_w = self.solar_now();
        let total_load_w: f64 = self.drawing().iter().flatten().map(|(_, w)| w).sum();
        PowerSummary {
            generation_w,
            total_load_w,
            net_w: generation_w - total_load_w,
            soc_wh: self.soc_wh,
        }
    }

    /// Schedules a fault injection; it takes effect on the first step whose
    /// new time reaches `at_time_s`.
    pub fn inject_fault(&mut self, injection: FaultInjection) -> Result<InjectOutcome, SimError> {
        let spec = self
            .catalog
            .get(&injection.fault_mode_id)
            .ok_or_else(|| SimError::UnknownFault(injection.fault_mode_id.clone()))?;
        self.check_target(spec)?;
        let id = &injection.fault_mode_id;
        if self.active.iter().any(|f| &f.spec.id == id)
            || self.pending.iter().any(|p| &p.fault_mode_id == id)
        {
            let msg = format!("fault `{id}` is already active or pending; injection ignored");
            log::warn!("{msg}");
            self.warnings.push(msg);
            return Ok(InjectOutcome::Duplicate);
        }
        self.pending.push(injection);
        Ok(InjectOutcome::Scheduled)
    }

    fn check_target(&self, spec: &FaultSpec) -> Result<(), SimError> {
        let ok = match spec.effect {
            EffectKind::StuckOn | EffectKind::StuckOff | EffectKind::DegradedDraw => {
                self.model.load_index(&spec.target).is_some()
            }
            EffectKind::BusTrip => self.model.bus_index(&spec.target).is_some(),
            EffectKind::SensorBias | EffectKind::SensorStale => self
                .dict
                .index_of(&spec.target)
                .is_some_and(|i| !self.dict.params[i].source.is_derived()),
        };
        if ok {
            Ok(())
        } else {
            let what = if spec.effect.targets_sensor() {
                "raw sensor"
            } else if spec.effect == EffectKind::BusTrip {
                "bus"
            } else {
                "load"
            };
            Err(SimError::BadFaultTarget {
                mode: spec.id.clone(),
                what,
                target: spec.target.clone(),
            })
        }
    }

    fn apply_command(&mut self, cmd: &Command) -> Result<(), String> {
        if let Some(l) = self.model.load_index(&cmd.target) {
            return match cmd.action {
                Action::On | Action::Off => {
                    self.loads[l].mode = LoadMode::from_on(cmd.action == Action::On);
                    Ok(())
                }
                other => Err(format!(
                    "action `{}` does not apply to load `{}`",
                    other.as_str(),
                    cmd.target
                )),
            };
        }
        if let Some(b) = self.model.bus_index(&cmd.target) {
            return match cmd.action {
                Action::Open => {
                    self.bus_closed[b] = false;
                    Ok(())
                }
                Action::Close => {
                    let tripped = self.active.iter().any(|f| {
                        f.spec.effect == EffectKind::BusTrip && f.spec.target == cmd.target
                    });
                    if tripped {
                        Err(format!("bus `{}` is tripped; close ignored", cmd.target))
                    } else {
                        self.bus_closed[b] = true;
                        Ok(())
                    }
                }
                other => Err(format!(
                    "action `{}` does not apply to bus `{}`",
                    other.as_str(),
                    cmd.target
                )),
            };
        }
        Err(format!("unknown command target `{}`", cmd.target))
    }

    /// Advances the simulation by `dt` seconds.
    pub fn step(
        &mut self,
        dt: f64,
        commands: &[Command],
        injections: &[FaultInjection],
    ) -> Result<SensorFrame, SimError> {
        if !(dt > 0.0) {
            return Err(SimError::NonPositiveStep(dt));
        }
        for inj in injections {
            self.inject_fault(inj.clone())?;
        }
        self.time_s += dt;
        self.cycle += 1;

        let mut rejected_commands = Vec::new();
        for cmd in commands {
            if let Err(reason) = self.apply_command(cmd) {
                rejected_commands.push(RejectedCommand {
                    command: cmd.clone(),
                    reason,
                });
            }
        }

        let now = self.time_s;
        let (due, later): (Vec<_>, Vec<_>) = std::mem::take(&mut self.pending)
            .into_iter()
            .partition(|p| p.at_time_s <= now);
        self.pending = later;
        for inj in due {
            let spec = self
                .catalog
                .get(&inj.fault_mode_id)
                .cloned()
                .expect("validated at injection");
            if spec.effect == EffectKind::BusTrip {
                if let Some(b) = self.model.bus_index(&spec.target) {
                    self.bus_closed[b] = false;
                }
            }
            self.active.push(ActiveFault {
                spec,
                params: inj.parameters,
            });
        }

        // physics
        let drawing = self.drawing();
        let solar = self.solar_now();
        let total_load: f64 = drawing.iter().flatten().map(|(_, w)| w).sum();
        let net = solar - total_load;
        let delta_wh = net * dt / 3600.0;
        let unclamped = self.soc_wh + delta_wh;
        let clamped = unclamped.clamp(0.0, self.model.power.battery_capacity_wh);
        self.energy.integrated_net_wh += delta_wh;
        self.energy.clamped_wh += unclamped - clamped;
        self.soc_wh = clamped;

        for (l, load) in self.loads.iter_mut().enumerate() {
            let on = drawing[l].is_some();
            if on {
                load.on_time_s += dt;
            }
            load.temp_c = lag(
                load.temp_c,
                20.0 + 8.0 * f64::from(u8::from(on)),
                dt,
                LOAD_TEMP_TAU_S,
            );
        }
        let bus_power = self.bus_powers(&drawing);
        for (b, t) in self.bus_temp_c.iter_mut().enumerate() {
            let target = 25.0 + 10.0 * bus_power[b] / self.model.buses[b].capacity_w;
            *t = lag(*t, target, dt, BUS_TEMP_TAU_S);
        }
        self.battery_temp_c = lag(
            self.battery_temp_c,
            18.0 + 0.004 * net.abs(),
            dt,
            BATTERY_TEMP_TAU_S,
        );
        for (e, spec) in self.model.sensors.iter().enumerate() {
            let target = env_target(spec, &self.model, &drawing);
            self.env[e] = lag(self.env[e], target, dt, spec.tau_s);
        }

        let (values, stale) = self.measure(&drawing, &bus_power, solar, total_load, net);
        self.last_values.clone_from(&values);
        Ok(SensorFrame {
            cycle: self.cycle,
            sim_time_s: self.time_s,
            dict: self.dict.clone(),
            values,
            stale,
            rejected_commands,
        })
    }

    fn measure(
        &mut self,
        drawing: &[Option<(usize, f64)>],
        bus_power: &[f64],
        solar: f64,
        total_load: f64,
        net: f64,
    ) -> (Vec<f64>, Vec<bool>) {
        let dict = self.dict.clone();
        let model = self.model.clone();
        let v = model.power.bus_voltage_v;
        let n = dict.len();
        let mut bias = vec![0.0; n];
        let mut frozen = vec![false; n];
        for f in &self.active {
            if let Some(i) = dict.index_of(&f.spec.target) {
                match f.spec.effect {
                    EffectKind::SensorBias => {
                        bias[i] += f.spec.param("bias", &f.params).unwrap_or(0.0)
                    }
                    EffectKind::SensorStale => frozen[i] = true,
                    _ => {}
                }
            }
        }

        let mut values = vec![0.0; n];
        let mut stale = vec![false; n];
        // raw sensors first, in dictionary order so the noise stream is fixed
        for (i, p) in dict.params.iter().enumerate() {
            if p.source.is_derived() {
                continue;
            }
            let truth = match p.source {
                Source::SolarOutput => solar,
                Source::SolarCurrent => solar / v,
                Source::BatterySoc => self.soc_wh,
                Source::BatterySocPct => 100.0 * self.soc_wh / model.power.battery_capacity_wh,
                Source::BatteryVoltage => {
                    26.0 + 4.0 * self.soc_wh / model.power.battery_capacity_wh
                }
                Source::BatteryTemp => self.battery_temp_c,
                Source::BatteryNet => net,
                Source::PduTotal => total_load,
                Source::BusVoltage(b) => {
                    if self.bus_closed[b] {
                        v
                    } else {
                        0.0
                    }
                }
                Source::BusCurrent(b) => bus_power[b] / v,
                Source::BusPower(b) => bus_power[b],
                Source::BusSwitch(b) => f64::from(u8::from(self.bus_closed[b])),
                Source::BusMargin(b) => model.buses[b].capacity_w - bus_power[b],
                Source::BusTemp(b) => self.bus_temp_c[b],
                Source::LoadCmd(l) => f64::from(u8::from(self.loads[l].mode.is_on())),
                Source::LoadRelay(l) => f64::from(u8::from(self.relay(l))),
                Source::LoadPower(l) => drawing[l].map_or(0.0, |(_, w)| w),
                Source::LoadCurrent(l) => drawing[l].map_or(0.0, |(_, w)| w / v),
                Source::LoadTemp(l) => self.loads[l].temp_c,
                Source::LoadOnTime(l) => self.loads[l].on_time_s,
                Source::Env(e) => self.env[e],
                _ => unreachable!("derived sources handled below"),
            };
            // flow sensors read exactly zero when nothing flows
            let flow = matches!(
                p.source,
                Source::SolarOutput
                    | Source::SolarCurrent
                    | Source::PduTotal
                    | Source::BusCurrent(_)
                    | Source::BusPower(_)
                    | Source::LoadPower(_)
                    | Source::LoadCurrent(_)
            );
            let noise = if p.noise > 0.0 && !(flow && truth == 0.0) {
                Normal::new(0.0, p.noise)
                    .expect("finite sigma")
                    .sample(&mut self.rng)
            } else {
                0.0
            };
            if frozen[i] {
                values[i] = self.last_values[i];
                stale[i] = true;
            } else {
                values[i] = truth + noise + bias[i];
            }
        }

        let energized =
            |l: usize| drawing[l].is_some() || (self.relay(l) && self.feed(l).is_some());
        for (i, p) in dict.params.iter().enumerate() {
            let idx = |id: String| dict.index_of(&id).expect("dictionary built from model");
            let (value, is_stale) = match p.source {
                Source::SolarResidual => {
                    let o = idx("solar.output_w".into());
                    let expected = if model.in_eclipse(self.time_s) {
                        0.0
                    } else {
                        model.power.solar_output_w
                    };
                    (values[o] - expected, stale[o])
                }
                Source::LoadRelayResidual(l) => {
                    let id = &model.loads[l].id;
                    let r = idx(format!("{id}.relay"));
                    let c = idx(format!("{id}.cmd"));
                    (values[r] - values[c], stale[r] || stale[c])
                }
                Source::LoadPowerResidual(l) => {
                    let id = &model.loads[l].id;
                    let pw = idx(format!("{id}.power_w"));
                    let expected = if energized(l) {
                        model.loads[l].power_draw_w
                    } else {
                        0.0
                    };
                    (values[pw] - expected, stale[pw])
                }
                Source::LoadCurrentResidual(l) => {
                    let id = &model.loads[l].id;
                    let c = idx(format!("{id}.current_a"));
                    let expected = if energized(l) {
                        model.loads[l].power_draw_w / v
                    } else {
                        0.0
                    };
                    (values[c] - expected, stale[c])
                }
                Source::BusCurrentResidual(b) => {
                    let bc = idx(format!("{}.current_a", model.buses[b].id));
                    let mut sum = 0.0;
                    let mut any_stale = stale[bc];
                    for (l, load) in model.loads.iter().enumerate() {
                        if self.feed(l) == Some(b) {
                            let c = idx(format!("{}.current_a", load.id));
                            sum += values[c];
                            any_stale |= stale[c];
                        }
                    }
                    (values[bc] - sum, any_stale)
                }
                Source::DauStale(d) => {
                    let count = model.daus[d]
                        .channels
                        .iter()
                        .filter_map(|ch| dict.index_of(ch))
                        .filter(|&c| stale[c])
                        .count();
                    (count as f64, false)
                }
                _ => continue,
            };
            values[i] = value;
            stale[i] = is_stale;
        }
        (values, stale)
    }
}

fn env_target(
    spec: &model::EnvSensorSpec,
    model: &HabitatModel,
    drawing: &[Option<(usize, f64)>],
) -> f64 {
    spec.nominal
        + spec
            .drives
            .iter()
            .filter_map(|(load, gain)| model.load_index(load).map(|l| (l, gain)))
            .filter(|(l, _)| drawing[*l].is_some())
            .map(|(_, gain)| gain)
            .sum::<f64>()
}
