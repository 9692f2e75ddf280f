mod common;

use common::anomaly_gen::{experiment, Generator};
use proptest::prelude::*;
use vsm_core::anomaly::{calibrate, score, train, ClusterSet, Verdict};

#[test]
fn calibrated_false_alarm_and_detection_rates() {
    for seed in 0..5 {
        let r = experiment(seed, 0.99, 5.0);
        assert!(
            (0.002..=0.03).contains(&r.false_alarm),
            "seed {seed}: {r:?}"
        );
        assert!(r.detection >= 0.95, "seed {seed}: {r:?}");
    }
}

/// The shipped monitor on a fresh episode with a different seed and load
/// policy than its warm-up: few false alarms, and one-dimension biases of
/// five training standard deviations are caught.
#[test]
fn habitat_monitor_on_fresh_nominal_frames() {
    use std::sync::Arc;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use vsm_core::anomaly::{score, Verdict};
    use vsm_core::habitat;
    use vsm_core::orchestrator::{AnomalySettings, Monitor};
    use vsm_core::sections::SectionedText;
    use vsm_core::sim::{Action, Command, FaultCatalog, HabitatModel, SimState};

    let text = habitat::model_text();
    let doc = SectionedText::parse("habitat.model", &text).unwrap();
    let model = Arc::new(HabitatModel::from_doc(&doc).unwrap());
    let settings = AnomalySettings::from_doc(&doc, &model.param_dict())
        .unwrap()
        .unwrap();
    let idx: Vec<usize> = settings
        .params
        .iter()
        .map(|p| model.param_dict().index_of(p).unwrap())
        .collect();
    let m = Monitor::train(&model, settings).unwrap();

    let mut sim = SimState::new(model.clone(), Arc::new(FaultCatalog::default()), 99);
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let mut on: Vec<bool> = model.loads.iter().map(|l| l.mode.is_on()).collect();
    let (mut alarms, mut detected, n) = (0, 0, 7200);
    for i in 0..n {
        let mut commands = Vec::new();
        if i % 600 == 0 {
            for (l, load) in model.loads.iter().enumerate() {
                if rng.random_bool(0.3) {
                    on[l] = !on[l];
                    commands.push(Command::new(
                        &load.id,
                        if on[l] { Action::On } else { Action::Off },
                    ));
                }
            }
        }
        let frame = sim.step(1.0, &commands, &[]).unwrap();
        let mut v: Vec<f64> = idx.iter().map(|&k| frame.values[k]).collect();
        alarms += usize::from(score(&m.clusters, &m.calibration, &v).verdict == Verdict::Anomaly);
        let d = i % v.len();
        v[d] += 5.0 * m.clusters.normalization.scale[d] * if i % 2 == 0 { 1.0 } else { -1.0 };
        detected += usize::from(score(&m.clusters, &m.calibration, &v).verdict == Verdict::Anomaly);
    }
    let (far, det) = (alarms as f64 / n as f64, detected as f64 / n as f64);
    assert!(far <= 0.01, "false-alarm rate {far}");
    assert!(det >= 0.95, "detection rate {det}");
}

proptest! {
    #[test]
    fn training_vectors_lie_inside_their_boxes(seed in any::<u64>(), eps in 0.1f64..3.0) {
        let mut g = Generator::new(seed, 4, 3);
        let data = g.samples(300);
        let cs = train(&data, eps).unwrap();
        prop_assert!(cs.clusters.len() <= data.len());
        for v in &data {
            prop_assert_eq!(cs.distance(v), 0.0);
        }
        let back = ClusterSet::from_json(&cs.to_json()).unwrap();
        prop_assert_eq!(back, cs);
    }

    #[test]
    fn higher_quantile_never_raises_the_alarm_rate(seed in any::<u64>()) {
        let mut g = Generator::new(seed, 4, 3);
        let cs = train(&g.samples(500), 0.3).unwrap();
        let held = g.samples(400);
        let fresh = g.samples(400);
        let rate = |q: f64| {
            let cal = calibrate(&cs, &held, q).unwrap();
            fresh.iter().filter(|v| score(&cs, &cal, v).verdict == Verdict::Anomaly).count()
        };
        prop_assert!(rate(0.99) <= rate(0.9));
        prop_assert!(rate(0.9) <= rate(0.5));
    }
}
