//! Static habitat configuration and the monitored-parameter dictionary.
//!
//! File sections: `[power]`, `[buses]`, `[loads]`, `[eclipse]`, `[sensors]`,
//! `[daus]`, `[noise]` and `[injections]`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::fault::FaultInjection;
use super::LoadMode;
use crate::sections::{Fields, ParseError, SectionedText};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadSpec {
    pub id: String,
    pub name: String,
    pub bus_id: String,
    /// Alternate feed used when the primary bus is open.
    pub alt_bus_id: Option<String>,
    pub power_draw_w: f64,
    pub mode: LoadMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusSpec {
    pub id: String,
    pub capacity_w: f64,
    pub switch_closed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSpec {
    /// Array output while sunlit.
    pub solar_output_w: f64,
    pub battery_capacity_wh: f64,
    pub battery_soc_wh: f64,
    pub battery_max_discharge_w: f64,
    pub battery_reserve_wh: f64,
    pub bus_voltage_v: f64,
}

/// Generic environmental sensor driven by a first-order lag towards
/// `nominal + Σ gain·(load drawing ? 1 : 0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSensorSpec {
    pub id: String,
    pub nominal: f64,
    pub noise: f64,
    pub tau_s: f64,
    pub drives: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DauSpec {
    pub id: String,
    pub channels: Vec<String>,
}

/// Measurement noise standard deviations by sensor class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub power_w: f64,
    pub current_a: f64,
    pub voltage_v: f64,
    pub temp_c: f64,
    pub soc_wh: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            power_w: 0.5,
            current_a: 0.004,
            voltage_v: 0.05,
            temp_c: 0.05,
            soc_wh: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HabitatModel {
    pub power: PowerSpec,
    pub buses: Vec<BusSpec>,
    pub loads: Vec<LoadSpec>,
    pub eclipse_windows: Vec<(f64, f64)>,
    pub sensors: Vec<EnvSensorSpec>,
    pub daus: Vec<DauSpec>,
    pub noise: NoiseSpec,
    pub injections: Vec<FaultInjection>,
}

/// Where a monitored parameter's value comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Source {
    SolarOutput,
    SolarCurrent,
    SolarResidual,
    BatterySoc,
    BatterySocPct,
    BatteryVoltage,
    BatteryTemp,
    BatteryNet,
    PduTotal,
    BusVoltage(usize),
    BusCurrent(usize),
    BusPower(usize),
    BusSwitch(usize),
    BusCurrentResidual(usize),
    BusMargin(usize),
    BusTemp(usize),
    LoadCmd(usize),
    LoadRelay(usize),
    LoadRelayResidual(usize),
    LoadPower(usize),
    LoadCurrent(usize),
    LoadPowerResidual(usize),
    LoadCurrentResidual(usize),
    LoadTemp(usize),
    LoadOnTime(usize),
    DauStale(usize),
    Env(usize),
}

impl Source {
    /// Derived parameters are computed from other measured parameters.
    pub fn is_derived(self) -> bool {
        matches!(
            self,
            Source::SolarResidual
                | Source::BusCurrentResidual(_)
                | Source::LoadRelayResidual(_)
                | Source::LoadPowerResidual(_)
                | Source::LoadCurrentResidual(_)
                | Source::DauStale(_)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDef {
    pub id: String,
    pub source: Source,
    pub noise: f64,
}

/// Ordered dictionary of every monitored parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamDict {
    pub params: Vec<ParamDef>,
    index: HashMap<String, usize>,
}

impl ParamDict {
    pub fn new(params: Vec<ParamDef>) -> Self {
        let index = params
            .iter()
            .enumerate()
            .map(|(i, p)| (p.id.clone(), i))
            .collect();
        Self { params, index }
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.params.iter().map(|p| p.id.as_str())
    }
}

impl HabitatModel {
    pub fn load_index(&self, id: &str) -> Option<usize> {
        self.loads.iter().position(|l| l.id == id)
    }

    pub fn bus_index(&self, id: &str) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn in_eclipse(&self, t: f64) -> bool {
        self.eclipse_windows.iter().any(|&(s, e)| t >= s && t < e)
    }

    /// Builds the parameter dictionary in its fixed emission order.
    pub fn param_dict(&self) -> Arc<ParamDict> {
        let n = &self.noise;
        let mut out = Vec::new();
        let mut push =
            |id: String, source: Source, noise: f64| out.push(ParamDef { id, source, noise });
        push("solar.output_w".into(), Source::SolarOutput, n.power_w);
        push("solar.current_a".into(), Source::SolarCurrent, n.current_a);
        push("solar.residual_w".into(), Source::SolarResidual, 0.0);
        push("battery.soc_wh".into(), Source::BatterySoc, n.soc_wh);
        push("battery.soc_pct".into(), Source::BatterySocPct, 0.0);
        push(
            "battery.voltage_v".into(),
            Source::BatteryVoltage,
            n.voltage_v / 10.0,
        );
        push("battery.temp_c".into(), Source::BatteryTemp, n.temp_c);
        push("battery.net_power_w".into(), Source::BatteryNet, n.power_w);
        push("pdu.total_load_w".into(), Source::PduTotal, n.power_w);
        for (b, bus) in self.buses.iter().enumerate() {
            let id = &bus.id;
            push(
                format!("{id}.voltage_v"),
                Source::BusVoltage(b),
                n.voltage_v,
            );
            push(
                format!("{id}.current_a"),
                Source::BusCurrent(b),
                n.current_a,
            );
            push(format!("{id}.power_w"), Source::BusPower(b), n.power_w);
            push(format!("{id}.switch"), Source::BusSwitch(b), 0.0);
            push(
                format!("{id}.current_residual_a"),
                Source::BusCurrentResidual(b),
                0.0,
            );
            push(format!("{id}.capacity_margin_w"), Source::BusMargin(b), 0.0);
            push(format!("{id}.temp_c"), Source::BusTemp(b), n.temp_c);
        }
        for (l, load) in self.loads.iter().enumerate() {
            let id = &load.id;
            push(format!("{id}.cmd"), Source::LoadCmd(l), 0.0);
            push(format!("{id}.relay"), Source::LoadRelay(l), 0.0);
            push(
                format!("{id}.relay_residual"),
                Source::LoadRelayResidual(l),
                0.0,
            );
            push(format!("{id}.power_w"), Source::LoadPower(l), n.power_w);
            push(
                format!("{id}.current_a"),
                Source::LoadCurrent(l),
                n.current_a,
            );
            push(
                format!("{id}.power_residual_w"),
                Source::LoadPowerResidual(l),
                0.0,
            );
            push(
                format!("{id}.current_residual_a"),
                Source::LoadCurrentResidual(l),
                0.0,
            );
            push(format!("{id}.temp_c"), Source::LoadTemp(l), n.temp_c);
            push(format!("{id}.on_time_s"), Source::LoadOnTime(l), 0.0);
        }
        for (d, dau) in self.daus.iter().enumerate() {
            push(format!("{}.stale_count", dau.id), Source::DauStale(d), 0.0);
        }
        for (e, sensor) in self.sensors.iter().enumerate() {
            push(sensor.id.clone(), Source::Env(e), sensor.noise);
        }
        Arc::new(ParamDict::new(out))
    }

    pub fn parse(file: &str, text: &str) -> Result<Self, ParseError> {
        let doc = SectionedText::parse(file, text)?;
        Self::from_doc(&doc)
    }

    pub fn from_doc(doc: &SectionedText) -> Result<Self, ParseError> {
        for required in ["power", "loads"] {
            if !doc.has(required) {
                return Err(doc.error(1, format!("missing required section [{required}]")));
            }
        }
        let kv = doc.key_values("power")?;
        let power_line = doc.all("power").next().map(|s| s.header_line).unwrap_or(1);
        let need = |key: &str| -> Result<f64, ParseError> {
            kv.f64(key)?
                .ok_or_else(|| doc.error(power_line, format!("[power] is missing `{key}`")))
        };
        let power = PowerSpec {
            solar_output_w: need("solar_output_w")?,
            battery_capacity_wh: need("battery_capacity_wh")?,
            battery_soc_wh: need("battery_soc_wh")?,
            battery_max_discharge_w: kv.f64("battery_max_discharge_w")?.unwrap_or(f64::INFINITY),
            battery_reserve_wh: kv.f64("battery_reserve_wh")?.unwrap_or(0.0),
            bus_voltage_v: kv.f64("bus_voltage_v")?.unwrap_or(120.0),
        };
        if power.battery_capacity_wh <= 0.0 {
            return Err(doc.error(
                kv.line_of("battery_capacity_wh"),
                "battery_capacity_wh must be positive",
            ));
        }
        if !(0.0..=power.battery_capacity_wh).contains(&power.battery_soc_wh) {
            return Err(doc.error(
                kv.line_of("battery_soc_wh"),
                "battery_soc_wh must lie in [0, battery_capacity_wh]",
            ));
        }
        if power.solar_output_w < 0.0 || power.bus_voltage_v <= 0.0 {
            return Err(doc.error(
                power_line,
                "solar_output_w must be ≥ 0 and bus_voltage_v > 0",
            ));
        }

        let mut buses = Vec::new();
        for line in doc.lines_of("buses") {
            let f = Fields::parse(&line.text);
            let [id] = f.words.as_slice() else {
                return Err(doc.error(line.number, "bus line must start with a single bus id"));
            };
            let capacity_w = f
                .attr_f64("capacity_w")
                .map_err(|m| doc.error(line.number, m))?
                .ok_or_else(|| {
                    doc.error(line.number, format!("bus `{id}` is missing capacity_w"))
                })?;
            if capacity_w <= 0.0 {
                return Err(doc.error(
                    line.number,
                    format!("bus `{id}` capacity_w must be positive"),
                ));
            }
            let switch_closed = match f.attr("switch_state").unwrap_or("CLOSED") {
                "CLOSED" | "closed" => true,
                "OPEN" | "open" => false,
                other => {
                    return Err(doc.error(line.number, format!("unknown switch_state `{other}`")))
                }
            };
            if buses.iter().any(|b: &BusSpec| &b.id == id) {
                return Err(doc.error(line.number, format!("duplicate bus `{id}`")));
            }
            buses.push(BusSpec {
                id: id.clone(),
                capacity_w,
                switch_closed,
            });
        }

        let mut loads: Vec<LoadSpec> = Vec::new();
        for line in doc.lines_of("loads") {
            let f = Fields::parse(&line.text);
            let [id] = f.words.as_slice() else {
                return Err(doc.error(line.number, "load line must start with a single load id"));
            };
            let bus_id = f
                .attr("bus_id")
                .ok_or_else(|| doc.error(line.number, format!("load `{id}` is missing bus_id")))?
                .to_string();
            if !buses.iter().any(|b| b.id == bus_id) {
                return Err(doc.error(
                    line.number,
                    format!("load `{id}` references unknown bus `{bus_id}`"),
                ));
            }
            let alt_bus_id = f.attr("alt_bus_id").map(str::to_string);
            if let Some(alt) = &alt_bus_id {
                if !buses.iter().any(|b| &b.id == alt) || *alt == bus_id {
                    return Err(doc.error(
                        line.number,
                        format!("load `{id}` has invalid alt_bus_id `{alt}`"),
                    ));
                }
            }
            let power_draw_w = f
                .attr_f64("power_draw_w")
                .map_err(|m| doc.error(line.number, m))?
                .ok_or_else(|| {
                    doc.error(line.number, format!("load `{id}` is missing power_draw_w"))
                })?;
            if power_draw_w <= 0.0 {
                return Err(doc.error(
                    line.number,
                    format!("load `{id}` power_draw_w must be positive"),
                ));
            }
            let mode = match f.attr("mode").unwrap_or("OFF") {
                "ON" | "on" => LoadMode::On,
                "OFF" | "off" => LoadMode::Off,
                other => return Err(doc.error(line.number, format!("unknown load mode `{other}`"))),
            };
            if loads.iter().any(|l| &l.id == id) {
                return Err(doc.error(line.number, format!("duplicate load `{id}`")));
            }
            loads.push(LoadSpec {
                id: id.clone(),
                name: f.attr("name").unwrap_or(id).to_string(),
                bus_id,
                alt_bus_id,
                power_draw_w,
                mode,
            });
        }

        let mut eclipse_windows = Vec::new();
        for line in doc.lines_of("eclipse") {
            let nums: Result<Vec<f64>, _> = line
                .text
                .split_whitespace()
                .map(str::parse::<f64>)
                .collect();
            match nums.as_deref() {
                Ok([s, e]) if s < e => eclipse_windows.push((*s, *e)),
                _ => {
                    return Err(doc.error(
                        line.number,
                        "eclipse line must be `start_s end_s` with start < end",
                    ))
                }
            }
        }
        for (i, w) in eclipse_windows.windows(2).enumerate() {
            if w[1].0 < w[0].1 {
                let line = doc.lines_of("eclipse")[i + 1].number;
                return Err(doc.error(line, "eclipse windows must be sorted and disjoint"));
            }
        }

        let load_ids: HashSet<&str> = loads.iter().map(|l| l.id.as_str()).collect();
        let mut sensors = Vec::new();
        for line in doc.lines_of("sensors") {
            let f = Fields::parse(&line.text);
            let [id] = f.words.as_slice() else {
                return Err(doc.error(
                    line.number,
                    "sensor line must start with a single parameter id",
                ));
            };
            let num = |k: &str, default: f64| -> Result<f64, ParseError> {
                Ok(f.attr_f64(k)
                    .map_err(|m| doc.error(line.number, m))?
                    .unwrap_or(default))
            };
            let mut drives = Vec::new();
            for d in f.attr_list("drive") {
                let Some((load, gain)) = d.split_once(':') else {
                    return Err(doc.error(
                        line.number,
                        format!("drive entry `{d}` must be `load:gain`"),
                    ));
                };
                if !load_ids.contains(load) {
                    return Err(doc.error(
                        line.number,
                        format!("drive references unknown load `{load}`"),
                    ));
                }
                let gain = gain
                    .parse::<f64>()
                    .map_err(|_| doc.error(line.number, format!("bad gain in `{d}`")))?;
                drives.push((load.to_string(), gain));
            }
            sensors.push(EnvSensorSpec {
                id: id.clone(),
                nominal: num("nominal", 0.0)?,
                noise: num("noise", 0.0)?,
                tau_s: num("tau_s", 300.0)?.max(1e-9),
                drives,
            });
        }

        let mut daus = Vec::new();
        for line in doc.lines_of("daus") {
            let f = Fields::parse(&line.text);
            let [id] = f.words.as_slice() else {
                return Err(doc.error(line.number, "dau line must start with a single id"));
            };
            daus.push(DauSpec {
                id: id.clone(),
                channels: f.attr_list("channels"),
            });
        }

        let mut noise = NoiseSpec::default();
        if doc.has("noise") {
            let kv = doc.key_values("noise")?;
            noise.power_w = kv.f64("power_w")?.unwrap_or(noise.power_w);
            noise.current_a = kv.f64("current_a")?.unwrap_or(noise.current_a);
            noise.voltage_v = kv.f64("voltage_v")?.unwrap_or(noise.voltage_v);
            noise.temp_c = kv.f64("temp_c")?.unwrap_or(noise.temp_c);
            noise.soc_wh = kv.f64("soc_wh")?.unwrap_or(noise.soc_wh);
        }

        let injections = parse_injections(doc)?;

        let model = HabitatModel {
            power,
            buses,
            loads,
            eclipse_windows,
            sensors,
            daus,
            noise,
            injections,
        };
        let dict = model.param_dict();
        if dict.len()
            != dict
                .params
                .iter()
                .map(|p| &p.id)
                .collect::<HashSet<_>>()
                .len()
        {
            return Err(doc.error(1, "duplicate monitored parameter id"));
        }
        for line in doc.lines_of("daus") {
            let f = Fields::parse(&line.text);
            for ch in f.attr_list("channels") {
                if !dict.contains(&ch) {
                    return Err(doc.error(
                        line.number,
                        format!("dau channel `{ch}` is not a monitored parameter"),
                    ));
                }
            }
        }
        Ok(model)
    }
}

/// `[injections]` lines: `<at_time_s> <fault_mode_id> [key=value ...]`.
pub fn parse_injections(doc: &SectionedText) -> Result<Vec<FaultInjection>, ParseError> {
    let mut out = Vec::new();
    for line in doc.lines_of("injections") {
        let f = Fields::parse(&line.text);
        let [time, id] = f.words.as_slice() else {
            return Err(doc.error(
                line.number,
                "injection line must be `<at_time_s> <fault_mode_id> [key=value..]`",
            ));
        };
        let at_time_s = time.parse::<f64>().map_err(|_| {
            doc.error(
                line.number,
                format!("injection time `{time}` is not a number"),
            )
        })?;
        let mut parameters = BTreeMap::new();
        for (k, v) in &f.attrs {
            let v = v.parse::<f64>().map_err(|_| {
                doc.error(
                    line.number,
                    format!("injection parameter `{k}` is not a number"),
                )
            })?;
            parameters.insert(k.clone(), v);
        }
        out.push(FaultInjection {
            fault_mode_id: id.clone(),
            at_time_s,
            parameters,
        });
    }
    Ok(out)
}
