//! The reference desk-scale habitat: 4 buses, 13 loads, 208 monitored
//! parameters and 159 failure modes.
//!
//! Everything is derived from the tables below so the simulator model, the
//! D-matrix, the component graph and the estimator model cannot drift
//! apart. The shipped files under `scenarios/` are this module's output.

use std::fmt::Write as _;

struct Load {
    id: &'static str,
    name: &'static str,
    bus: &'static str,
    alt: Option<&'static str>,
    watts: f64,
    on: bool,
}

const BUSES: [(&str, f64); 4] = [
    ("bus1", 900.0),
    ("bus2", 1100.0),
    ("bus3", 1000.0),
    ("bus4", 700.0),
];

const LOADS: [Load; 13] = [
    Load {
        id: "load1",
        name: "cabin_fan_a",
        bus: "bus1",
        alt: None,
        watts: 150.0,
        on: true,
    },
    Load {
        id: "load2",
        name: "co2_scrubber",
        bus: "bus1",
        alt: None,
        watts: 300.0,
        on: true,
    },
    Load {
        id: "load3",
        name: "water_pump",
        bus: "bus1",
        alt: Some("bus2"),
        watts: 120.0,
        on: false,
    },
    Load {
        id: "load4",
        name: "heater_a",
        bus: "bus2",
        alt: None,
        watts: 400.0,
        on: false,
    },
    Load {
        id: "load5",
        name: "heater_b",
        bus: "bus2",
        alt: None,
        watts: 400.0,
        on: false,
    },
    Load {
        id: "load6",
        name: "lighting",
        bus: "bus2",
        alt: Some("bus3"),
        watts: 200.0,
        on: true,
    },
    Load {
        id: "load7",
        name: "galley",
        bus: "bus3",
        alt: None,
        watts: 500.0,
        on: false,
    },
    Load {
        id: "load8",
        name: "exercise",
        bus: "bus3",
        alt: None,
        watts: 350.0,
        on: false,
    },
    Load {
        id: "load9",
        name: "science_rack",
        bus: "bus3",
        alt: None,
        watts: 250.0,
        on: false,
    },
    Load {
        id: "load10",
        name: "comms",
        bus: "bus4",
        alt: Some("bus1"),
        watts: 100.0,
        on: true,
    },
    Load {
        id: "load11",
        name: "cabin_fan_b",
        bus: "bus4",
        alt: None,
        watts: 150.0,
        on: true,
    },
    Load {
        id: "load12",
        name: "dehumidifier",
        bus: "bus4",
        alt: None,
        watts: 200.0,
        on: false,
    },
    Load {
        id: "load13",
        name: "battery_heater",
        bus: "bus4",
        alt: None,
        watts: 80.0,
        on: false,
    },
];

/// (load, min_on_s, period_s, weight)
const DUTY: [(&str, u32, u32, u32); 13] = [
    ("load1", 300, 600, 4),
    ("load2", 300, 600, 5),
    ("load3", 120, 300, 2),
    ("load4", 300, 900, 3),
    ("load5", 300, 900, 3),
    ("load6", 300, 600, 2),
    ("load7", 600, 1800, 1),
    ("load8", 600, 1800, 1),
    ("load9", 300, 900, 2),
    ("load10", 300, 600, 5),
    ("load11", 300, 600, 4),
    ("load12", 120, 300, 3),
    ("load13", 120, 300, 4),
];

const ZONES: [&str; 7] = [
    "command", "galley", "lab", "sleep", "hygiene", "airlock", "storage",
];

pub const ECLIPSE: (f64, f64) = (3000.0, 6300.0);

struct Env {
    id: String,
    nominal: f64,
    noise: f64,
    tau_s: f64,
    drives: Vec<(&'static str, f64)>,
}

impl Env {
    /// Nominal envelope over every combination of driving loads.
    fn envelope(&self) -> (f64, f64) {
        let neg: f64 = self.drives.iter().map(|d| d.1.min(0.0)).sum();
        let pos: f64 = self.drives.iter().map(|d| d.1.max(0.0)).sum();
        (self.nominal + neg, self.nominal + pos)
    }

    fn test_bounds(&self) -> (f64, f64) {
        let (lo, hi) = self.envelope();
        let margin = 10.0 * self.noise + 0.05 * (hi - lo) + 0.5;
        (lo - margin, hi + margin)
    }

    fn bias(&self) -> f64 {
        let (lo, hi) = self.test_bounds();
        2.0 * (hi - lo)
    }
}

fn faultable_sensors() -> Vec<Env> {
    let mut out = Vec::new();
    for (z, zone) in ZONES.iter().enumerate() {
        let heater = if z % 2 == 0 { "load4" } else { "load5" };
        out.push(Env {
            id: format!("{zone}.temp_c"),
            nominal: 19.0 + z as f64 * 0.3,
            noise: 0.05,
            tau_s: 600.0,
            drives: vec![(heater, 2.0), ("load7", if z == 1 { 1.5 } else { 0.0 })]
                .into_iter()
                .filter(|d| d.1 != 0.0)
                .collect(),
        });
        out.push(Env {
            id: format!("{zone}.humidity_pct"),
            nominal: 55.0,
            noise: 0.2,
            tau_s: 900.0,
            drives: vec![("load12", -10.0), ("load8", 4.0)],
        });
        out.push(Env {
            id: format!("{zone}.co2_ppm"),
            nominal: 1200.0,
            noise: 5.0,
            tau_s: 450.0,
            drives: vec![("load2", -500.0), ("load1", -50.0), ("load11", -50.0)],
        });
        out.push(Env {
            id: format!("{zone}.pressure_kpa"),
            nominal: 101.3,
            noise: 0.05,
            tau_s: 300.0,
            drives: vec![],
        });
    }
    out
}

fn informational_sensors() -> Vec<Env> {
    let mut out = Vec::new();
    for zone in ZONES {
        out.push(Env {
            id: format!("{zone}.radiation_usv"),
            nominal: 0.4,
            noise: 0.02,
            tau_s: 300.0,
            drives: vec![],
        });
        out.push(Env {
            id: format!("{zone}.light_lux"),
            nominal: 20.0,
            noise: 2.0,
            tau_s: 5.0,
            drives: vec![("load6", 380.0)],
        });
    }
    out.push(Env {
        id: "tank_a.level_pct".into(),
        nominal: 80.0,
        noise: 0.1,
        tau_s: 600.0,
        drives: vec![("load3", -2.0)],
    });
    out.push(Env {
        id: "tank_b.level_pct".into(),
        nominal: 60.0,
        noise: 0.1,
        tau_s: 600.0,
        drives: vec![("load3", 2.0)],
    });
    out.push(Env {
        id: "galley.noise_db".into(),
        nominal: 40.0,
        noise: 0.5,
        tau_s: 10.0,
        drives: vec![("load7", 12.0)],
    });
    out.push(Env {
        id: "lab.noise_db".into(),
        nominal: 38.0,
        noise: 0.5,
        tau_s: 10.0,
        drives: vec![("load8", 15.0)],
    });
    out
}

/// Power-side sensors whose staleness is observable through DAU 8.
const POWER_STALE: [&str; 6] = [
    "bus1.temp_c",
    "bus2.temp_c",
    "bus3.temp_c",
    "bus4.temp_c",
    "battery.temp_c",
    "solar.current_a",
];

fn fmt_drives(drives: &[(&str, f64)]) -> String {
    drives
        .iter()
        .map(|(l, g)| format!("{l}:{g}"))
        .collect::<Vec<_>>()
        .join("|")
}

/// Anomaly-monitored parameters (38): electrical quantities that follow the
/// switch configuration and eclipse state without thermal lag.
pub fn anomaly_params() -> Vec<String> {
    let mut p = Vec::new();
    for l in &LOADS {
        p.push(format!("{}.power_w", l.id));
    }
    for l in &LOADS {
        p.push(format!("{}.current_a", l.id));
    }
    for (b, _) in BUSES {
        p.push(format!("{b}.current_a"));
    }
    for (b, _) in BUSES {
        p.push(format!("{b}.power_w"));
    }
    for id in [
        "solar.output_w",
        "solar.current_a",
        "pdu.total_load_w",
        "battery.net_power_w",
    ] {
        p.push(id.into());
    }
    p
}

/// Simulator model, scheduling constraints, estimator model and anomaly
/// settings.
pub fn model_text() -> String {
    let mut o = String::new();
    let w = &mut o;
    let _ = writeln!(
        w,
        "# Reference habitat. Generated by `cargo run -p vsm-core --example write_habitat`.\n"
    );
    let _ = writeln!(w, "[power]");
    let _ = writeln!(
        w,
        "solar_output_w = 2000\nbattery_capacity_wh = 4000\nbattery_soc_wh = 3000"
    );
    let _ = writeln!(
        w,
        "battery_max_discharge_w = 2000\nbattery_reserve_wh = 1200\nbus_voltage_v = 120\n"
    );
    let _ = writeln!(w, "[buses]");
    for (b, cap) in BUSES {
        let _ = writeln!(w, "{b} capacity_w={cap} switch_state=CLOSED");
    }
    let _ = writeln!(w, "\n[loads]");
    for l in &LOADS {
        let _ = write!(
            w,
            "{} name={} bus_id={} power_draw_w={} mode={}",
            l.id,
            l.name,
            l.bus,
            l.watts,
            if l.on { "ON" } else { "OFF" }
        );
        if let Some(alt) = l.alt {
            let _ = write!(w, " alt_bus_id={alt}");
        }
        let _ = writeln!(w);
    }
    let _ = writeln!(w, "\n[eclipse]\n{} {}\n", ECLIPSE.0, ECLIPSE.1);
    let _ = writeln!(
        w,
        "[noise]\npower_w = 0.5\ncurrent_a = 0.004\nvoltage_v = 0.05\ntemp_c = 0.05\nsoc_wh = 0\n"
    );
    let _ = writeln!(w, "[sensors]");
    for s in faultable_sensors()
        .iter()
        .chain(informational_sensors().iter())
    {
        let _ = write!(
            w,
            "{} nominal={} noise={} tau_s={}",
            s.id, s.nominal, s.noise, s.tau_s
        );
        if !s.drives.is_empty() {
            let _ = write!(w, " drive={}", fmt_drives(&s.drives));
        }
        let _ = writeln!(w);
    }
    let _ = writeln!(w, "\n[daus]");
    let faultable = faultable_sensors();
    for (d, chunk) in faultable.chunks(4).enumerate() {
        let ch: Vec<&str> = chunk.iter().map(|s| s.id.as_str()).collect();
        let _ = writeln!(w, "dau{} channels={}", d + 1, ch.join("|"));
    }
    let _ = writeln!(w, "dau8 channels={}", POWER_STALE.join("|"));

    let _ = writeln!(w, "\n[constraints]");
    for (load, min_on, period, weight) in DUTY {
        let _ = writeln!(
            w,
            "duty {load} min_on_s={min_on} period_s={period} weight={weight}"
        );
    }
    for (b, _) in BUSES {
        let _ = writeln!(w, "bus_capacity {b}");
    }
    let _ = writeln!(w, "peak\nenergy");
    let _ = writeln!(w, "sync load4 load5\nsync load1 load11");
    let _ = writeln!(
        w,
        "max_off load2 max_off_s=420\nmax_off load12 max_off_s=600"
    );
    let _ = writeln!(w, "min_on_after_on load7 min_on_s=600");
    let _ = writeln!(w, "mutex load7 load8");

    let _ = writeln!(w, "\n[anomaly]\nparams = {}\nepsilon = 4\nquantile = 0.99\nwarmup_s = 7200\nwarmup_episodes = 4", anomaly_params().join("|"));

    let _ = writeln!(w, "\n[modes]");
    for l in &LOADS {
        let _ = writeln!(
            w,
            "{} modes=on|off|stuck_on|stuck_off initial={}",
            l.id,
            if l.on { "on" } else { "off" }
        );
    }
    for (b, _) in BUSES {
        let _ = writeln!(w, "{b} modes=closed|tripped initial=closed");
    }
    let _ = writeln!(w, "\n[transitions]");
    for l in &LOADS {
        let _ = writeln!(w, "{0} off on -> on\n{0} on off -> off", l.id);
    }
    let _ = writeln!(w, "\n[faults]");
    for l in &LOADS {
        for from in ["on", "off"] {
            for to in ["stuck_on", "stuck_off"] {
                let _ = writeln!(w, "{} {from} -> {to}", l.id);
            }
        }
    }
    for (b, _) in BUSES {
        let _ = writeln!(w, "{b} closed -> tripped");
    }
    let _ = writeln!(w, "\n[observations]");
    for l in &LOADS {
        for (mode, v) in [("on", 1), ("off", 0), ("stuck_on", 1), ("stuck_off", 0)] {
            let _ = writeln!(w, "{0} {mode} : lookup({0}.relay) == {v}", l.id);
        }
    }
    for (b, _) in BUSES {
        let _ = writeln!(
            w,
            "{b} closed : lookup({b}.switch) == 1\n{b} tripped : lookup({b}.switch) == 0"
        );
    }
    o
}

struct ModeLine {
    id: String,
    component: String,
    effect: &'static str,
    target: String,
    params: String,
}

struct TestLine {
    id: String,
    parameter: String,
    lo: f64,
    hi: f64,
    covers: Vec<String>,
}

/// Failure modes, D-matrix tests and the component graph.
pub fn dmx_text() -> String {
    let mut modes: Vec<ModeLine> = Vec::new();
    let mut tests: Vec<TestLine> = Vec::new();
    let mode = |id: String, component: &str, effect: &'static str, target: &str, params: String| {
        ModeLine {
            id,
            component: component.into(),
            effect,
            target: target.into(),
            params,
        }
    };
    let mut bus_current_covers: Vec<Vec<String>> = vec![Vec::new(); BUSES.len()];

    for l in &LOADS {
        let id = l.id;
        let p = l.watts;
        let cur_bias = (0.5 * p / 120.0).max(2.0);
        modes.push(mode(
            format!("{id}.stuck_on"),
            id,
            "stuck_on",
            id,
            String::new(),
        ));
        modes.push(mode(
            format!("{id}.stuck_off"),
            id,
            "stuck_off",
            id,
            String::new(),
        ));
        modes.push(mode(
            format!("{id}.degraded_draw"),
            id,
            "degraded_draw",
            id,
            " multiplier=2".into(),
        ));
        let pw = format!("{id}.power_w");
        let cu = format!("{id}.current_a");
        let tc = format!("{id}.temp_c");
        modes.push(mode(
            format!("{pw}.bias"),
            &pw,
            "sensor_bias",
            &pw,
            format!(" bias={}", 0.5 * p),
        ));
        modes.push(mode(
            format!("{cu}.bias"),
            &cu,
            "sensor_bias",
            &cu,
            format!(" bias={cur_bias}"),
        ));
        modes.push(mode(
            format!("{tc}.bias"),
            &tc,
            "sensor_bias",
            &tc,
            " bias=25".into(),
        ));
        let t = |suffix: &str, parameter: String, lo: f64, hi: f64, covers: &[String]| TestLine {
            id: format!("t.{id}.{suffix}"),
            parameter,
            lo,
            hi,
            covers: covers.to_vec(),
        };
        tests.push(t(
            "relay_hi",
            format!("{id}.relay_residual"),
            -1.5,
            0.5,
            &[format!("{id}.stuck_on")],
        ));
        tests.push(t(
            "relay_lo",
            format!("{id}.relay_residual"),
            -0.5,
            1.5,
            &[format!("{id}.stuck_off")],
        ));
        tests.push(t(
            "power",
            format!("{id}.power_residual_w"),
            -0.1 * p,
            0.1 * p,
            &[format!("{id}.degraded_draw"), format!("{pw}.bias")],
        ));
        tests.push(t(
            "current",
            format!("{id}.current_residual_a"),
            -0.1 * p / 120.0,
            0.1 * p / 120.0,
            &[format!("{id}.degraded_draw"), format!("{cu}.bias")],
        ));
        tests.push(t("temp", tc.clone(), 10.0, 35.0, &[format!("{tc}.bias")]));
        let b = BUSES
            .iter()
            .position(|(bid, _)| *bid == l.bus)
            .expect("known bus");
        bus_current_covers[b].push(format!("{cu}.bias"));
    }

    for (b, (bid, _)) in BUSES.iter().enumerate() {
        let v = format!("{bid}.voltage_v");
        let c = format!("{bid}.current_a");
        let tc = format!("{bid}.temp_c");
        modes.push(mode(
            format!("{bid}.trip"),
            bid,
            "bus_trip",
            bid,
            String::new(),
        ));
        modes.push(mode(
            format!("{v}.bias"),
            &v,
            "sensor_bias",
            &v,
            " bias=30".into(),
        ));
        modes.push(mode(
            format!("{c}.bias"),
            &c,
            "sensor_bias",
            &c,
            " bias=5".into(),
        ));
        modes.push(mode(
            format!("{tc}.bias"),
            &tc,
            "sensor_bias",
            &tc,
            " bias=25".into(),
        ));
        tests.push(TestLine {
            id: format!("t.{bid}.voltage"),
            parameter: v.clone(),
            lo: 110.0,
            hi: 130.0,
            covers: vec![format!("{bid}.trip"), format!("{v}.bias")],
        });
        tests.push(TestLine {
            id: format!("t.{bid}.switch"),
            parameter: format!("{bid}.switch"),
            lo: 0.5,
            hi: 1.5,
            covers: vec![format!("{bid}.trip")],
        });
        let mut covers = vec![format!("{c}.bias")];
        covers.extend(bus_current_covers[b].iter().cloned());
        tests.push(TestLine {
            id: format!("t.{bid}.current"),
            parameter: format!("{bid}.current_residual_a"),
            lo: -0.5,
            hi: 0.5,
            covers,
        });
        tests.push(TestLine {
            id: format!("t.{bid}.temp"),
            parameter: tc.clone(),
            lo: 15.0,
            hi: 45.0,
            covers: vec![format!("{tc}.bias")],
        });
    }

    modes.push(mode(
        "solar.output_w.bias".into(),
        "solar.output_w",
        "sensor_bias",
        "solar.output_w",
        " bias=500".into(),
    ));
    modes.push(mode(
        "battery.voltage_v.bias".into(),
        "battery.voltage_v",
        "sensor_bias",
        "battery.voltage_v",
        " bias=30".into(),
    ));
    modes.push(mode(
        "battery.temp_c.bias".into(),
        "battery.temp_c",
        "sensor_bias",
        "battery.temp_c",
        " bias=25".into(),
    ));
    tests.push(TestLine {
        id: "t.solar.residual".into(),
        parameter: "solar.residual_w".into(),
        lo: -50.0,
        hi: 50.0,
        covers: vec!["solar.output_w.bias".into()],
    });
    tests.push(TestLine {
        id: "t.battery.voltage".into(),
        parameter: "battery.voltage_v".into(),
        lo: 25.0,
        hi: 31.0,
        covers: vec!["battery.voltage_v.bias".into()],
    });
    tests.push(TestLine {
        id: "t.battery.temp".into(),
        parameter: "battery.temp_c".into(),
        lo: 0.0,
        hi: 40.0,
        covers: vec!["battery.temp_c.bias".into()],
    });

    let faultable = faultable_sensors();
    for s in &faultable {
        modes.push(mode(
            format!("{}.bias", s.id),
            &s.id,
            "sensor_bias",
            &s.id,
            format!(" bias={}", s.bias()),
        ));
        modes.push(mode(
            format!("{}.stale", s.id),
            &s.id,
            "sensor_stale",
            &s.id,
            String::new(),
        ));
        let (lo, hi) = s.test_bounds();
        tests.push(TestLine {
            id: format!("t.{}", s.id),
            parameter: s.id.clone(),
            lo,
            hi,
            covers: vec![format!("{}.bias", s.id)],
        });
    }
    for p in POWER_STALE {
        modes.push(mode(
            format!("{p}.stale"),
            p,
            "sensor_stale",
            p,
            String::new(),
        ));
    }
    for (d, chunk) in faultable.chunks(4).enumerate() {
        tests.push(TestLine {
            id: format!("t.dau{}.stale", d + 1),
            parameter: format!("dau{}.stale_count", d + 1),
            lo: 0.0,
            hi: 0.5,
            covers: chunk.iter().map(|s| format!("{}.stale", s.id)).collect(),
        });
    }
    tests.push(TestLine {
        id: "t.dau8.stale".into(),
        parameter: "dau8.stale_count".into(),
        lo: 0.0,
        hi: 0.5,
        covers: POWER_STALE.iter().map(|p| format!("{p}.stale")).collect(),
    });

    let mut o = String::new();
    let w = &mut o;
    let _ = writeln!(w, "# Reference habitat diagnosis model. Generated by `cargo run -p vsm-core --example write_habitat`.\n");
    let _ = writeln!(w, "[modes]");
    for m in &modes {
        let _ = writeln!(
            w,
            "{} component={} effect={} target={}{}",
            m.id, m.component, m.effect, m.target, m.params
        );
    }
    let _ = writeln!(w, "\n[tests]");
    for t in &tests {
        let _ = writeln!(
            w,
            "{} parameter={} lo={} hi={} covers={}",
            t.id,
            t.parameter,
            t.lo,
            t.hi,
            t.covers.join("|")
        );
    }
    let _ = writeln!(w, "\n[graph]");
    for (b, _) in BUSES {
        let _ = writeln!(w, "edge solar_array -> {b}\nedge battery -> {b}");
    }
    for l in &LOADS {
        let _ = writeln!(w, "edge {} -> {}", l.bus, l.id);
        if let Some(alt) = l.alt {
            let _ = writeln!(w, "edge {alt} -> {}", l.id);
        }
    }
    let _ = writeln!(w, "source power @ solar_array\nsource power @ battery");
    for l in &LOADS {
        let _ = writeln!(w, "consumer power @ {}", l.id);
    }
    o
}

/// Nominal two-hour scenario; `injections` lines are appended verbatim.
pub fn scenario_text(seed: u64, injections: &[&str]) -> String {
    let mut o = String::new();
    let _ = writeln!(o, "[scenario]\nmodel = habitat.model\ndiagnosis = habitat.dmx\nduration_s = 7200\ndt_s = 1\nseed = {seed}");
    if !injections.is_empty() {
        let _ = writeln!(o, "\n[injections]");
        for i in injections {
            let _ = writeln!(o, "{i}");
        }
    }
    o
}

/// Shipped scenarios: file stem and injection lines.
pub const SCENARIOS: [(&str, &[&str]); 8] = [
    ("nominal", &[]),
    ("bus2_trip", &["1800 bus2.trip"]),
    ("heater_stuck_on", &["2400 load4.stuck_on"]),
    ("scrubber_stuck_off", &["1200 load2.stuck_off"]),
    ("galley_degraded", &["900 load7.degraded_draw"]),
    ("cabin_co2_bias", &["1500 command.co2_ppm.bias"]),
    ("lab_temp_stale", &["2000 lab.temp_c.stale"]),
    (
        "comms_then_bus3",
        &["1800 load10.stuck_off", "4000 bus3.trip"],
    ),
];

pub const SHIPPED_SEED: u64 = 7;

/// Every shipped file as `(file name, contents)`.
pub fn shipped_files() -> Vec<(String, String)> {
    let mut out = vec![
        ("habitat.model".to_string(), model_text()),
        ("habitat.dmx".to_string(), dmx_text()),
    ];
    for (stem, inj) in SCENARIOS {
        out.push((format!("{stem}.scn"), scenario_text(SHIPPED_SEED, inj)));
    }
    out
}
