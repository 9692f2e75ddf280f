//! Diagnosis model files: failure modes, D-matrix tests and the component
//! graph.
//!
//! ```text
//! [modes]
//! load3.stuck_on component=load3 effect=stuck_on target=load3
//! bus2.voltage_v.bias component=bus2.voltage_v effect=sensor_bias target=bus2.voltage_v bias=30
//!
//! [tests]
//! t_load3_relay_hi parameter=load3.relay_residual lo=-1.5 hi=0.5 covers=load3.stuck_on
//!
//! [graph]
//! edge solar_array -> bus1
//! source power @ solar_array
//! consumer power @ load3
//! ```

use std::collections::BTreeMap;

use crate::impacts::ComponentGraph;
use crate::isolation::{DMatrix, DMatrixError, TestDef};
use crate::sections::{Fields, ParseError, SectionedText};
use crate::sim::{EffectKind, FaultCatalog, FaultSpec, HabitatModel, ParamDict};

#[derive(Debug, Clone)]
pub struct DiagnosisModel {
    pub catalog: FaultCatalog,
    pub dmatrix: DMatrix,
    pub graph: ComponentGraph,
}

impl DiagnosisModel {
    pub fn parse(file: &str, text: &str) -> Result<Self, ParseError> {
        Self::from_doc(&SectionedText::parse(file, text)?)
    }

    pub fn from_doc(doc: &SectionedText) -> Result<Self, ParseError> {
        for s in &doc.sections {
            if !["modes", "tests", "graph"].contains(&s.name.as_str()) {
                return Err(doc.error(s.header_line, format!("unknown section [{}]", s.name)));
            }
        }
        let mut catalog = FaultCatalog::default();
        let mut order = Vec::new();
        for line in doc.lines_of("modes") {
            let f = Fields::parse(&line.text);
            let [id] = f.words.as_slice() else {
                return Err(doc.error(
                    line.number,
                    "expected `<mode> component=<c> effect=<e> target=<t> [param=value]`",
                ));
            };
            let need = |k: &str| {
                f.attr(k)
                    .ok_or_else(|| doc.error(line.number, format!("mode `{id}` is missing `{k}=`")))
            };
            let effect: EffectKind = need("effect")?
                .parse()
                .map_err(|e: String| doc.error(line.number, e))?;
            let mut params = BTreeMap::new();
            for (k, v) in &f.attrs {
                if ["component", "effect", "target"].contains(&k.as_str()) {
                    continue;
                }
                let v: f64 = v.parse().map_err(|_| {
                    doc.error(line.number, format!("parameter `{k}` is not a number"))
                })?;
                params.insert(k.clone(), v);
            }
            if catalog.contains(id) {
                return Err(doc.error(line.number, format!("duplicate failure mode `{id}`")));
            }
            catalog.insert(FaultSpec {
                id: id.clone(),
                component: need("component")?.to_string(),
                effect,
                target: need("target")?.to_string(),
                params,
            });
            order.push(id.clone());
        }

        let mut tests = Vec::new();
        let mut test_lines = BTreeMap::new();
        for line in doc.lines_of("tests") {
            let f = Fields::parse(&line.text);
            let parsed = match f.words.as_slice() {
                [id] => Some(id),
                _ => None,
            };
            let (Some(id), Some(parameter), Ok(Some(lo)), Ok(Some(hi))) = (
                parsed,
                f.attr("parameter"),
                f.attr_f64("lo"),
                f.attr_f64("hi"),
            ) else {
                return Err(doc.error(
                    line.number,
                    "expected `<test> parameter=<p> lo=<x> hi=<y> covers=<m1|m2>`",
                ));
            };
            test_lines.insert(id.clone(), line.number);
            tests.push(TestDef {
                id: id.clone(),
                parameter: parameter.to_string(),
                lo,
                hi,
                covers: f.attr_list("covers"),
            });
        }
        let dmatrix = DMatrix::new(order, tests).map_err(|e| {
            let id = match &e {
                DMatrixError::InvertedBounds(t)
                | DMatrixError::EmptyCovers(t)
                | DMatrixError::Duplicate(t) => t.clone(),
                DMatrixError::UnknownMode { test, .. } => test.clone(),
                DMatrixError::NoSuchMode(m) => m.clone(),
            };
            doc.error(test_lines.get(&id).copied().unwrap_or(0), e.to_string())
        })?;
        let graph = ComponentGraph::from_doc(doc)?;
        Ok(Self {
            catalog,
            dmatrix,
            graph,
        })
    }

    /// Cross-reference problems against the habitat model and its
    /// parameter dictionary, one message per problem.
    pub fn check_against(&self, model: &HabitatModel, dict: &ParamDict) -> Vec<String> {
        let mut problems = Vec::new();
        for spec in self.catalog.modes.values() {
            let ok = match spec.effect {
                e if e.targets_load() => model.load_index(&spec.target).is_some(),
                EffectKind::BusTrip => model.bus_index(&spec.target).is_some(),
                _ => dict.contains(&spec.target),
            };
            if !ok {
                problems.push(format!(
                    "failure mode `{}` targets unknown `{}`",
                    spec.id, spec.target
                ));
            }
            if spec.effect.is_loss() && !self.graph.contains(&spec.component) {
                problems.push(format!(
                    "failure mode `{}` names component `{}` missing from the graph",
                    spec.id, spec.component
                ));
            }
        }
        for t in self.dmatrix.tests() {
            if !dict.contains(&t.parameter) {
                problems.push(format!(
                    "test `{}` reads unknown parameter `{}`",
                    t.id, t.parameter
                ));
            }
        }
        problems
    }

    /// Graph components taken out of service by loss-effect modes among
    /// `modes`.
    pub fn lost_components<'a>(&self, modes: impl IntoIterator<Item = &'a String>) -> Vec<String> {
        let mut out: Vec<String> = modes
            .into_iter()
            .filter_map(|m| self.catalog.get(m))
            .filter(|s| s.effect.is_loss())
            .map(|s| s.component.clone())
            .collect();
        out.sort();
        out.dedup();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "\
[modes]
l1.stuck_off component=l1 effect=stuck_off target=l1
l1.power_w.bias component=l1.power_w effect=sensor_bias target=l1.power_w bias=50

[tests]
t1 parameter=l1.relay_residual lo=-0.5 hi=1.5 covers=l1.stuck_off
t2 parameter=l1.power_residual_w lo=-10 hi=10 covers=l1.power_w.bias

[graph]
edge src -> l1
source power @ src
consumer power @ l1
";

    #[test]
    fn parses_all_sections() {
        let m = DiagnosisModel::parse("small.dmx", SMALL).unwrap();
        assert_eq!(m.catalog.len(), 2);
        assert_eq!(m.dmatrix.tests().len(), 2);
        assert_eq!(
            m.catalog.get("l1.power_w.bias").unwrap().params["bias"],
            50.0
        );
        assert_eq!(
            m.lost_components(&["l1.stuck_off".to_string(), "l1.power_w.bias".to_string()]),
            vec!["l1"]
        );
    }

    #[test]
    fn unknown_cover_points_at_test_line() {
        let bad = SMALL.replace("covers=l1.power_w.bias", "covers=nope");
        let err = DiagnosisModel::parse("small.dmx", &bad).unwrap_err();
        assert_eq!(err.location.line, 7);
        assert!(err.message.contains("nope"));
    }
}
