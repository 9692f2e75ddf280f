//! Anomaly monitor for the habitat: settings from the model's `[anomaly]`
//! section and training from a warm-up simulation.

use std::sync::{Arc, Mutex, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::anomaly::{self, AnomalyError, ClusterSet, MmsCalibration, Score};
use crate::sections::{ParseError, SectionedText};
use crate::sim::{Action, Command, FaultCatalog, HabitatModel, ParamDict, SensorFrame, SimState};

/// Fixed so training never depends on the scenario seed.
const WARMUP_SEED: u64 = 0x1AB5;

#[derive(Debug, Clone, PartialEq)]
pub struct AnomalySettings {
    pub params: Vec<String>,
    pub epsilon: f64,
    pub quantile: f64,
    pub warmup_s: f64,
    /// Warm-up episodes; the last one is held out for calibration.
    pub warmup_episodes: usize,
}

impl AnomalySettings {
    /// `None` when the model has no `[anomaly]` section.
    pub fn from_doc(doc: &SectionedText, dict: &ParamDict) -> Result<Option<Self>, ParseError> {
        if !doc.has("anomaly") {
            return Ok(None);
        }
        let kv = doc.key_values("anomaly")?;
        let line = kv.line_of("params");
        let params: Vec<String> = kv
            .get("params")
            .unwrap_or("")
            .split('|')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(String::from)
            .collect();
        if params.is_empty() {
            return Err(doc.error(line, "[anomaly] needs `params = a|b|...`"));
        }
        if let Some(p) = params.iter().find(|p| !dict.contains(p)) {
            return Err(doc.error(line, format!("anomaly parameter `{p}` is not monitored")));
        }
        let settings = Self {
            params,
            epsilon: kv.f64("epsilon")?.unwrap_or(0.35),
            quantile: kv.f64("quantile")?.unwrap_or(0.99),
            warmup_s: kv.f64("warmup_s")?.unwrap_or(7200.0),
            warmup_episodes: kv.f64("warmup_episodes")?.unwrap_or(4.0) as usize,
        };
        if settings.warmup_episodes < 2 {
            return Err(doc.error(
                kv.line_of("warmup_episodes"),
                "warmup_episodes must be at least 2",
            ));
        }
        if !(settings.quantile > 0.0 && settings.quantile < 1.0) {
            return Err(doc.error(kv.line_of("quantile"), "quantile must lie in (0, 1)"));
        }
        Ok(Some(settings))
    }
}

#[derive(Debug, Clone)]
pub struct Monitor {
    pub settings: AnomalySettings,
    indices: Vec<usize>,
    pub clusters: ClusterSet,
    pub calibration: MmsCalibration,
}

impl Monitor {
    /// Runs `warmup_episodes` fault-free episodes of `warmup_s` seconds in
    /// which every load holds each state for a random dwell of 1 to 30
    /// minutes. Trains on all but the last episode and calibrates on it.
    /// Training is deterministic, so results are memoized per model and
    /// settings for the life of the process.
    pub fn train(
        model: &Arc<HabitatModel>,
        settings: AnomalySettings,
    ) -> Result<Self, AnomalyError> {
        type Cache = Mutex<Vec<(Arc<HabitatModel>, Monitor)>>;
        static CACHE: OnceLock<Cache> = OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        let hit = |c: &[(Arc<HabitatModel>, Monitor)]| {
            c.iter()
                .find(|(m, mon)| mon.settings == settings && **m == **model)
                .map(|(_, mon)| mon.clone())
        };
        if let Some(m) = hit(&cache.lock().expect("monitor cache lock")) {
            return Ok(m);
        }
        let trained = Self::train_uncached(model, settings)?;
        cache
            .lock()
            .expect("monitor cache lock")
            .push((model.clone(), trained.clone()));
        Ok(trained)
    }

    fn train_uncached(
        model: &Arc<HabitatModel>,
        settings: AnomalySettings,
    ) -> Result<Self, AnomalyError> {
        let dict = model.param_dict();
        let indices: Vec<usize> = settings
            .params
            .iter()
            .filter_map(|p| dict.index_of(p))
            .collect();
        let episodes = settings.warmup_episodes.max(2);
        let (mut train, mut held_out) = (Vec::new(), Vec::new());
        for e in 0..episodes {
            let seed = WARMUP_SEED + e as u64;
            let frames = warmup_episode(model, seed, settings.warmup_s, &indices);
            if e + 1 == episodes {
                held_out = frames;
            } else {
                train.extend(frames);
            }
        }
        let clusters = anomaly::train(&train, settings.epsilon)?;
        let calibration = anomaly::calibrate(&clusters, &held_out, settings.quantile)?;
        Ok(Self {
            settings,
            indices,
            clusters,
            calibration,
        })
    }

    pub fn score(&self, frame: &SensorFrame) -> Score {
        let v: Vec<f64> = self.indices.iter().map(|&k| frame.values[k]).collect();
        anomaly::score(&self.clusters, &self.calibration, &v)
    }
}

fn warmup_episode(
    model: &Arc<HabitatModel>,
    seed: u64,
    duration_s: f64,
    indices: &[usize],
) -> Vec<Vec<f64>> {
    let mut sim = SimState::new(model.clone(), Arc::new(FaultCatalog::default()), seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED);
    let mut on: Vec<bool> = model.loads.iter().map(|l| l.mode.is_on()).collect();
    let mut next: Vec<usize> = on.iter().map(|_| rng.random_range(60..=1800)).collect();
    let steps = duration_s.max(0.0) as usize;
    let mut out = Vec::with_capacity(steps);
    for i in 0..steps {
        let mut commands = Vec::new();
        for (l, load) in model.loads.iter().enumerate() {
            if i == next[l] {
                on[l] = !on[l];
                next[l] = i + rng.random_range(60..=1800);
                commands.push(Command::new(
                    &load.id,
                    if on[l] { Action::On } else { Action::Off },
                ));
            }
        }
        let frame = sim.step(1.0, &commands, &[]).expect("positive step");
        out.push(indices.iter().map(|&k| frame.values[k]).collect());
    }
    out
}
