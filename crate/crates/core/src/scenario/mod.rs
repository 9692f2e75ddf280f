//! Scenario files, the run harness, and replay comparison.
//!
//! ```text
//! [scenario]
//! model = habitat.model        # relative to the scenario file
//! diagnosis = habitat.dmx
//! duration_s = 7200
//! dt_s = 1
//! seed = 7
//!
//! [vsm]
//! replan_period_s = 300
//!
//! [injections]
//! 1800 bus2.trip
//! ```

mod replay;
mod run;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use crate::diagnosis::DiagnosisModel;
use crate::estimator::TransitionModel;
use crate::orchestrator::{AnomalySettings, VsmConfig, VsmModels};
use crate::scheduler::ConstraintSet;
use crate::sections::{ParseError, SectionedText};
use crate::sim::{parse_injections, FaultInjection, HabitatModel};

pub use replay::{replay_check, replay_check_dirs, Replay};
pub use run::{
    fmt_sig9, ComponentTiming, ExitStatus, IsolationLatency, Metrics, Run, RunArtifacts, RunError,
    RunOptions, SolverStats, CYCLES_LOG, METRICS_FILE, TELEMETRY_LOG, TRANSITIONS_LOG,
};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("cannot read `{path}`: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{file}: {}", .problems.join("; "))]
    CrossReference { file: String, problems: Vec<String> },
}

#[derive(Clone)]
pub struct Scenario {
    pub name: String,
    pub model_file: String,
    pub diagnosis_file: String,
    pub duration_s: f64,
    pub dt_s: f64,
    pub seed: u64,
    pub injections: Vec<FaultInjection>,
    pub config: VsmConfig,
    pub models: VsmModels,
}

impl std::fmt::Debug for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Scenario")
            .field("name", &self.name)
            .field("duration_s", &self.duration_s)
            .field("seed", &self.seed)
            .field("injections", &self.injections)
            .finish_non_exhaustive()
    }
}

/// Reads and fully validates a scenario file and the files it references.
pub fn parse_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let read = |p: &Path| {
        std::fs::read_to_string(p).map_err(|source| ScenarioError::Io {
            path: p.display().to_string(),
            source,
        })
    };
    let text = read(path)?;
    Scenario::parse(&path.display().to_string(), &text, |rel| {
        let p: PathBuf = base.join(rel);
        read(&p).map(|t| (p.display().to_string(), t))
    })
}

impl Scenario {
    /// Parses scenario text; `load` resolves a referenced file name to
    /// `(label, contents)`.
    pub fn parse(
        label: &str,
        text: &str,
        mut load: impl FnMut(&str) -> Result<(String, String), ScenarioError>,
    ) -> Result<Self, ScenarioError> {
        let doc = SectionedText::parse(label, text)?;
        for s in &doc.sections {
            if !["scenario", "vsm", "injections"].contains(&s.name.as_str()) {
                return Err(doc
                    .error(s.header_line, format!("unknown section [{}]", s.name))
                    .into());
            }
        }
        let Some(header) = doc.all("scenario").next().map(|s| s.header_line) else {
            return Err(doc.error(1, "missing required section [scenario]").into());
        };
        let kv = doc.key_values("scenario")?;
        let file_of = |key: &str| {
            kv.get(key)
                .map(str::to_string)
                .ok_or_else(|| doc.error(header, format!("[scenario] is missing `{key}`")))
        };
        let model_file = file_of("model")?;
        let diagnosis_file = file_of("diagnosis")?;
        let duration_s = kv.require_f64("duration_s", "scenario")?;
        if !(duration_s > 0.0) {
            return Err(doc
                .error(kv.line_of("duration_s"), "duration_s must be positive")
                .into());
        }
        let dt_s = kv.f64("dt_s")?.unwrap_or(1.0);
        if !(dt_s > 0.0) {
            return Err(doc
                .error(kv.line_of("dt_s"), "dt_s must be positive")
                .into());
        }
        let seed = kv.u64("seed")?.unwrap_or(0);

        let mut config = VsmConfig::default();
        let vsm = doc.key_values("vsm")?;
        for key in vsm.keys() {
            config
                .set(key, vsm.get(key).unwrap_or_default())
                .map_err(|e| doc.error(vsm.line_of(key), e))?;
        }
        config
            .validate(dt_s)
            .map_err(|e| doc.error(doc.all("vsm").next().map_or(header, |s| s.header_line), e))?;

        let (model_label, model_text) = load(&model_file)?;
        let mdoc = SectionedText::parse(&model_label, &model_text)?;
        let habitat = Arc::new(HabitatModel::from_doc(&mdoc)?);
        let dict = habitat.param_dict();
        let constraints = ConstraintSet::from_doc(&mdoc, &habitat)?;
        let transitions = if mdoc.has("modes") {
            Some(TransitionModel::from_doc(&mdoc)?)
        } else {
            None
        };
        let anomaly = AnomalySettings::from_doc(&mdoc, &dict)?;

        let (dmx_label, dmx_text) = load(&diagnosis_file)?;
        let diagnosis = DiagnosisModel::parse(&dmx_label, &dmx_text)?;
        let problems = diagnosis.check_against(&habitat, &dict);
        if !problems.is_empty() {
            return Err(ScenarioError::CrossReference {
                file: dmx_label,
                problems,
            });
        }

        let injections = parse_injections(&doc)?;
        for (inj, line) in injections.iter().zip(doc.lines_of("injections")) {
            if !diagnosis.catalog.contains(&inj.fault_mode_id) {
                return Err(doc
                    .error(
                        line.number,
                        format!("unknown fault mode `{}`", inj.fault_mode_id),
                    )
                    .into());
            }
            if inj.at_time_s < 0.0 {
                return Err(doc
                    .error(line.number, "injection time must not be negative")
                    .into());
            }
        }

        let name = Path::new(label)
            .file_stem()
            .map_or_else(|| label.to_string(), |s| s.to_string_lossy().into_owned());
        Ok(Self {
            name,
            model_file,
            diagnosis_file,
            duration_s,
            dt_s,
            seed,
            injections,
            config,
            models: VsmModels {
                habitat,
                diagnosis: Arc::new(diagnosis),
                constraints,
                transitions,
                anomaly,
            },
        })
    }

    pub fn param_count(&self) -> usize {
        self.models.habitat.param_dict().len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MODEL: &str = "\
[power]
solar_output_w = 500
battery_capacity_wh = 1000
battery_soc_wh = 800
[buses]
b1 capacity_w=400 switch_state=CLOSED
[loads]
l1 name=fan bus_id=b1 power_draw_w=100 mode=ON
";
    const DMX: &str = "\
[modes]
l1.stuck_off component=l1 effect=stuck_off target=l1
[tests]
t1 parameter=l1.relay_residual lo=-0.5 hi=0.5 covers=l1.stuck_off
[graph]
edge b1 -> l1
source power @ b1
consumer power @ l1
";

    fn files(name: &str) -> Result<(String, String), ScenarioError> {
        match name {
            "m.model" => Ok((name.into(), MODEL.into())),
            "m.dmx" => Ok((name.into(), DMX.into())),
            _ => Err(ScenarioError::Io {
                path: name.into(),
                source: std::io::ErrorKind::NotFound.into(),
            }),
        }
    }

    fn scn(body: &str) -> String {
        format!("[scenario]\nmodel = m.model\ndiagnosis = m.dmx\n{body}")
    }

    #[test]
    fn minimal_scenario_parses() {
        let s = Scenario::parse(
            "x.scn",
            &scn("duration_s = 60\n[injections]\n10 l1.stuck_off\n"),
            files,
        )
        .unwrap();
        assert_eq!(s.name, "x");
        assert_eq!(s.dt_s, 1.0);
        assert_eq!(s.injections.len(), 1);
        assert!(s.models.transitions.is_none());
    }

    #[test]
    fn unknown_fault_names_id_and_line() {
        let err = Scenario::parse(
            "x.scn",
            &scn("duration_s = 60\n[injections]\n10 l9.stuck_on\n"),
            files,
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("l9.stuck_on") && msg.contains("x.scn:6"),
            "{msg}"
        );
    }

    #[test]
    fn zero_duration_rejected() {
        let err = Scenario::parse("x.scn", &scn("duration_s = 0\n"), files).unwrap_err();
        assert!(err.to_string().contains("duration_s must be positive"));
    }

    #[test]
    fn empty_file_is_structural_error() {
        assert!(matches!(
            Scenario::parse("x.scn", "", files),
            Err(ScenarioError::Parse(_))
        ));
    }

    #[test]
    fn vsm_overrides_apply_and_bad_keys_fail() {
        let s = Scenario::parse(
            "x.scn",
            &scn("duration_s = 60\n[vsm]\nreplan_period_s = 120\n"),
            files,
        )
        .unwrap();
        assert_eq!(s.config.replan_period_s, 120.0);
        let err = Scenario::parse("x.scn", &scn("duration_s = 60\n[vsm]\nbogus = 1\n"), files)
            .unwrap_err();
        assert!(err.to_string().contains("x.scn:6"), "{err}");
    }
}
