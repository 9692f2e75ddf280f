//! Scheduling problems from the habitat model and its constraint section.

use std::collections::BTreeMap;

use crate::sections::{Fields, ParseError, SectionedText};
use crate::sim::HabitatModel;

use super::{
    BusCapacity, DutyConstraint, MaxOffConstraint, MinOnConstraint, PairConstraint,
    SchedulingProblem,
};

/// Constraints declared in a model's `[constraints]` section.
///
/// ```text
/// duty load1 min_on_s=600 period_s=1200 weight=3
/// sync load4 load5
/// mutex load6 load7
/// max_off load2 max_off_s=1800
/// min_on_after_on load3 min_on_s=600
/// bus_capacity bus1
/// peak
/// energy
/// ```
///
/// `bus_capacity` takes the bus rating from the model unless `capacity_w=`
/// is given. `peak` limits each slot to solar output plus battery discharge
/// (battery discharge alone for slots touching an eclipse). `energy` caps
/// total energy at usable battery charge plus the solar energy still to come.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConstraintSet {
    pub duty: Vec<(DutyConstraint, i64)>,
    pub sync: Vec<PairConstraint>,
    pub mutex: Vec<PairConstraint>,
    pub max_off: Vec<MaxOffConstraint>,
    pub min_on_after_on: Vec<MinOnConstraint>,
    pub bus_capacity: Vec<(String, Option<f64>)>,
    pub peak: bool,
    pub energy: bool,
}

impl ConstraintSet {
    pub fn from_doc(doc: &SectionedText, model: &HabitatModel) -> Result<Self, ParseError> {
        let mut set = Self::default();
        for line in doc.lines_of("constraints") {
            let f = Fields::parse(&line.text);
            let err = |m: String| doc.error(line.number, m);
            let num = |key: &str| -> Result<f64, ParseError> {
                f.attr_f64(key)
                    .map_err(err)?
                    .ok_or_else(|| doc.error(line.number, format!("missing `{key}=`")))
            };
            let load = |i: usize| -> Result<String, ParseError> {
                let id = f
                    .words
                    .get(i)
                    .ok_or_else(|| doc.error(line.number, "missing load id"))?;
                if model.load_index(id).is_none() {
                    return Err(doc.error(line.number, format!("unknown load `{id}`")));
                }
                Ok(id.clone())
            };
            match f.words.first().map(String::as_str) {
                Some("duty") => {
                    let weight = match f.attr("weight") {
                        Some(w) => w
                            .parse()
                            .map_err(|_| doc.error(line.number, format!("bad weight `{w}`")))?,
                        None => 1,
                    };
                    let d = DutyConstraint {
                        load: load(1)?,
                        min_on_s: num("min_on_s")?,
                        period_s: num("period_s")?,
                    };
                    set.duty.push((d, weight));
                }
                Some("sync") => set.sync.push(PairConstraint {
                    a: load(1)?,
                    b: load(2)?,
                }),
                Some("mutex") => set.mutex.push(PairConstraint {
                    a: load(1)?,
                    b: load(2)?,
                }),
                Some("max_off") => set.max_off.push(MaxOffConstraint {
                    load: load(1)?,
                    max_off_s: num("max_off_s")?,
                }),
                Some("min_on_after_on") => set.min_on_after_on.push(MinOnConstraint {
                    load: load(1)?,
                    min_on_s: num("min_on_s")?,
                }),
                Some("bus_capacity") => {
                    let bus = f
                        .words
                        .get(1)
                        .ok_or_else(|| doc.error(line.number, "missing bus id"))?;
                    if model.bus_index(bus).is_none() {
                        return Err(doc.error(line.number, format!("unknown bus `{bus}`")));
                    }
                    set.bus_capacity
                        .push((bus.clone(), f.attr_f64("capacity_w").map_err(err)?));
                }
                Some("peak") => set.peak = true,
                Some("energy") => set.energy = true,
                other => {
                    return Err(doc.error(
                        line.number,
                        format!("unknown constraint `{}`", other.unwrap_or("")),
                    ))
                }
            }
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.duty.len()
            + self.sync.len()
            + self.mutex.len()
            + self.max_off.len()
            + self.min_on_after_on.len()
            + self.bus_capacity.len()
            + usize::from(self.peak)
            + usize::from(self.energy)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Planning-time state of the habitat plus fault accommodations.
#[derive(Debug, Clone, PartialEq)]
pub struct NowState {
    pub horizon_start_s: f64,
    pub horizon_s: f64,
    pub slot_s: f64,
    pub soc_wh: f64,
    /// Mode of each load (model order) just before the horizon starts.
    pub initial_modes: Vec<bool>,
    pub frozen_slots: usize,
    /// Load × frozen-slot modes already executed.
    pub frozen_modes: Vec<Vec<bool>>,
    /// Loads pinned to one mode for every free slot; their duty, sync,
    /// max-off and min-on constraints are dropped.
    pub forced: BTreeMap<String, bool>,
    pub bus_capacity_w: BTreeMap<String, f64>,
    pub bus_of: BTreeMap<String, String>,
    pub draw_w: BTreeMap<String, f64>,
}

impl NowState {
    /// Fresh horizon starting now with no accommodations.
    pub fn fresh(start_s: f64, horizon_s: f64, slot_s: f64, soc_wh: f64, modes: Vec<bool>) -> Self {
        Self {
            horizon_start_s: start_s,
            horizon_s,
            slot_s,
            soc_wh,
            initial_modes: modes,
            frozen_slots: 0,
            frozen_modes: Vec::new(),
            forced: BTreeMap::new(),
            bus_capacity_w: BTreeMap::new(),
            bus_of: BTreeMap::new(),
            draw_w: BTreeMap::new(),
        }
    }
}

fn overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

pub fn build_problem(
    model: &HabitatModel,
    constraints: &ConstraintSet,
    now: &NowState,
) -> SchedulingProblem {
    let mut p = SchedulingProblem::empty(now.horizon_s, now.slot_s);
    let n = p.slots();
    let f = now.frozen_slots.min(n);
    let forced = |id: &str| now.forced.contains_key(id);

    for (l, load) in model.loads.iter().enumerate() {
        let weight = constraints
            .duty
            .iter()
            .filter(|(d, _)| d.load == load.id)
            .map(|(_, w)| *w)
            .max()
            .unwrap_or(1);
        let draw = now
            .draw_w
            .get(&load.id)
            .copied()
            .unwrap_or(load.power_draw_w);
        let bus = now.bus_of.get(&load.id).unwrap_or(&load.bus_id);
        p.add_load(
            &load.id,
            draw,
            Some(bus),
            weight,
            now.initial_modes.get(l).copied().unwrap_or(false),
        );
        for s in 0..f {
            p.fixed[l][s] = Some(
                now.frozen_modes
                    .get(l)
                    .and_then(|r| r.get(s))
                    .copied()
                    .unwrap_or(false),
            );
        }
        if let Some(&v) = now.forced.get(&load.id) {
            for s in f..n {
                p.fixed[l][s] = Some(v);
            }
        }
    }
    p.frozen_slots = f;

    p.duty_constraints = constraints
        .duty
        .iter()
        .filter(|(d, _)| !forced(&d.load))
        .map(|(d, _)| d.clone())
        .collect();
    p.sync_constraints = constraints
        .sync
        .iter()
        .filter(|c| !forced(&c.a) && !forced(&c.b))
        .cloned()
        .collect();
    p.mutex_constraints = constraints
        .mutex
        .iter()
        .filter(|c| !(forced(&c.a) && forced(&c.b)))
        .cloned()
        .collect();
    p.max_off_constraints = constraints
        .max_off
        .iter()
        .filter(|c| !forced(&c.load))
        .cloned()
        .collect();
    p.min_on_after_on = constraints
        .min_on_after_on
        .iter()
        .filter(|c| !forced(&c.load))
        .cloned()
        .collect();
    p.bus_capacities = constraints
        .bus_capacity
        .iter()
        .map(|(bus, cap)| {
            let rated = model
                .bus_index(bus)
                .map_or(0.0, |b| model.buses[b].capacity_w);
            let capacity_w = now
                .bus_capacity_w
                .get(bus)
                .copied()
                .or(*cap)
                .unwrap_or(rated);
            BusCapacity {
                bus_id: bus.clone(),
                capacity_w,
            }
        })
        .collect();

    let power = &model.power;
    let slot_window = |s: usize| {
        let t0 = now.horizon_start_s + s as f64 * now.slot_s;
        (t0, t0 + now.slot_s)
    };
    let eclipse_s = |s: usize| {
        let (t0, t1) = slot_window(s);
        model
            .eclipse_windows
            .iter()
            .map(|&(a, b)| overlap(t0, t1, a, b))
            .sum::<f64>()
    };
    if constraints.peak {
        p.peak_power_profile = Some(
            (0..n)
                .map(|s| {
                    let dark = eclipse_s(s) > 0.0;
                    power.battery_max_discharge_w + if dark { 0.0 } else { power.solar_output_w }
                })
                .collect(),
        );
    }
    if constraints.energy {
        let solar_wh: f64 = (f..n)
            .map(|s| (now.slot_s - eclipse_s(s)).max(0.0) * power.solar_output_w / 3600.0)
            .sum();
        p.energy_budget_wh = Some((now.soc_wh - power.battery_reserve_wh).max(0.0) + solar_wh);
    }
    p
}
