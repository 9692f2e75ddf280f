//! Failure impacts over a component interconnection graph.
//!
//! Functions (power, data, ...) originate at source nodes and flow along
//! directed edges. A component loses a function when every path from the
//! function's sources to it passes through a failed component. Redundancy is
//! the number of internally vertex-disjoint supply paths, computed as a
//! unit-vertex-capacity max-flow from the merged sources.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sections::{ParseError, SectionedText};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("unknown component `{0}`")]
    UnknownComponent(String),
    #[error("function `{0}` has no source")]
    NoSource(String),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ComponentGraph {
    nodes: Vec<String>,
    index: HashMap<String, usize>,
    succ: Vec<Vec<usize>>,
    sources: BTreeMap<String, Vec<usize>>,
    consumers: BTreeMap<String, Vec<usize>>,
}

/// Redundancy reported for a consumer that is itself a source.
pub const UNBOUNDED: usize = usize::MAX;

impl ComponentGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, name: &str) -> usize {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        self.nodes.push(name.to_string());
        self.succ.push(Vec::new());
        self.index.insert(name.to_string(), self.nodes.len() - 1);
        self.nodes.len() - 1
    }

    pub fn add_edge(&mut self, from: &str, to: &str) {
        let a = self.add_node(from);
        let b = self.add_node(to);
        if a != b && !self.succ[a].contains(&b) {
            self.succ[a].push(b);
        }
    }

    pub fn add_source(&mut self, function: &str, node: &str) {
        let n = self.add_node(node);
        let list = self.sources.entry(function.to_string()).or_default();
        if !list.contains(&n) {
            list.push(n);
        }
    }

    pub fn add_consumer(&mut self, function: &str, node: &str) {
        let n = self.add_node(node);
        let list = self.consumers.entry(function.to_string()).or_default();
        if !list.contains(&n) {
            list.push(n);
        }
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn contains(&self, node: &str) -> bool {
        self.index.contains_key(node)
    }

    pub fn functions(&self) -> impl Iterator<Item = &str> {
        self.sources.keys().map(String::as_str)
    }

    pub fn successors(&self, node: &str) -> Vec<&str> {
        self.index
            .get(node)
            .map(|&i| {
                self.succ[i]
                    .iter()
                    .map(|&j| self.nodes[j].as_str())
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn edges(&self) -> Vec<(&str, &str)> {
        let mut out = Vec::new();
        for (a, s) in self.succ.iter().enumerate() {
            for &b in s {
                out.push((self.nodes[a].as_str(), self.nodes[b].as_str()));
            }
        }
        out
    }

    pub fn sources_of(&self, function: &str) -> Vec<&str> {
        self.sources
            .get(function)
            .map(|v| v.iter().map(|&i| self.nodes[i].as_str()).collect())
            .unwrap_or_default()
    }

    /// Declared `(function, consumer)` pairs.
    pub fn consumer_pairs(&self) -> Vec<(&str, &str)> {
        let mut out = Vec::new();
        for (f, list) in &self.consumers {
            for &c in list {
                out.push((f.as_str(), self.nodes[c].as_str()));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        for f in self.consumers.keys() {
            if !self.sources.contains_key(f) {
                return Err(GraphError::NoSource(f.clone()));
            }
        }
        Ok(())
    }

    fn ids(&self, names: &[String]) -> Result<Vec<bool>, GraphError> {
        let mut mask = vec![false; self.nodes.len()];
        for n in names {
            let i = self
                .index
                .get(n)
                .ok_or_else(|| GraphError::UnknownComponent(n.clone()))?;
            mask[*i] = true;
        }
        Ok(mask)
    }

    fn reach(&self, sources: &[usize], removed: &[bool]) -> Vec<bool> {
        let mut seen = vec![false; self.nodes.len()];
        let mut queue = VecDeque::new();
        for &s in sources {
            if !removed[s] && !seen[s] {
                seen[s] = true;
                queue.push_back(s);
            }
        }
        while let Some(n) = queue.pop_front() {
            for &m in &self.succ[n] {
                if !removed[m] && !seen[m] {
                    seen[m] = true;
                    queue.push_back(m);
                }
            }
        }
        seen
    }

    /// `(component, function)` pairs supplied before the failures but not
    /// after. Failed components that were supplied are included.
    pub fn impact_set(&self, failed: &[String]) -> Result<BTreeSet<(String, String)>, GraphError> {
        let removed = self.ids(failed)?;
        let none = vec![false; self.nodes.len()];
        let mut lost = BTreeSet::new();
        for (f, sources) in &self.sources {
            let before = self.reach(sources, &none);
            let after = self.reach(sources, &removed);
            for (n, name) in self.nodes.iter().enumerate() {
                if before[n] && !after[n] {
                    lost.insert((name.clone(), f.clone()));
                }
            }
        }
        Ok(lost)
    }

    pub fn redundancy(&self, function: &str, consumer: &str) -> Result<usize, GraphError> {
        self.redundancy_without(function, consumer, &[])
    }

    /// Internally vertex-disjoint supply paths with `failed` removed.
    pub fn redundancy_without(
        &self,
        function: &str,
        consumer: &str,
        failed: &[String],
    ) -> Result<usize, GraphError> {
        let removed = self.ids(failed)?;
        let c = *self
            .index
            .get(consumer)
            .ok_or_else(|| GraphError::UnknownComponent(consumer.to_string()))?;
        let sources = self
            .sources
            .get(function)
            .ok_or_else(|| GraphError::NoSource(function.to_string()))?;
        Ok(self.max_disjoint(sources, c, &removed))
    }

    fn max_disjoint(&self, sources: &[usize], consumer: usize, removed: &[bool]) -> usize {
        if removed[consumer] {
            return 0;
        }
        let live: Vec<usize> = sources.iter().copied().filter(|&s| !removed[s]).collect();
        if live.contains(&consumer) {
            return UNBOUNDED;
        }
        if live.is_empty() {
            return 0;
        }
        // split every vertex v into v_in = 2v and v_out = 2v + 1; the
        // super-source is 2n and feeds the out-side of every live source
        let n = self.nodes.len();
        let source = 2 * n;
        let sink = 2 * consumer;
        let mut flow = FlowNet::new(2 * n + 1);
        for v in 0..n {
            if removed[v] {
                continue;
            }
            let is_source = live.contains(&v);
            if !is_source && v != consumer {
                flow.add_edge(2 * v, 2 * v + 1, 1);
            }
            for &w in &self.succ[v] {
                if !removed[w] && !live.contains(&w) {
                    flow.add_edge(2 * v + 1, 2 * w, 1);
                }
            }
        }
        for &s in &live {
            flow.add_edge(source, 2 * s + 1, usize::MAX / 4);
        }
        flow.max_flow(source, sink)
    }

    /// Pairs whose redundancy was ≥ 2 and is exactly 1 after the failures.
    pub fn zero_fault_tolerant(
        &self,
        failed: &[String],
    ) -> Result<BTreeSet<(String, String)>, GraphError> {
        let removed = self.ids(failed)?;
        let none = vec![false; self.nodes.len()];
        let mut out = BTreeSet::new();
        for (f, list) in &self.consumers {
            let sources = &self.sources[f];
            for &c in list {
                let before = self.max_disjoint(sources, c, &none);
                if before < 2 {
                    continue;
                }
                if self.max_disjoint(sources, c, &removed) == 1 {
                    out.insert((f.clone(), self.nodes[c].clone()));
                }
            }
        }
        Ok(out)
    }

    pub fn report(&self, failed: &[String]) -> Result<ImpactReport, GraphError> {
        let lost = self.impact_set(failed)?;
        let zft = self.zero_fault_tolerant(failed)?;
        let removed = self.ids(failed)?;
        let mut redundancy = BTreeMap::new();
        for (f, list) in &self.consumers {
            for &c in list {
                let r = self.max_disjoint(&self.sources[f], c, &removed);
                redundancy.insert(format!("{f}@{}", self.nodes[c]), r);
            }
        }
        let mut failed: Vec<String> = failed.to_vec();
        failed.sort();
        failed.dedup();
        Ok(ImpactReport {
            failed,
            lost: lost.into_iter().collect(),
            zft: zft.into_iter().collect(),
            redundancy,
        })
    }

    /// Reads `[graph]` lines: `node n`, `edge a -> b`, `source f @ n`,
    /// `consumer f @ n`.
    pub fn from_doc(doc: &SectionedText) -> Result<Self, ParseError> {
        let mut g = ComponentGraph::new();
        for line in doc.lines_of("graph") {
            let words: Vec<&str> = line.text.split_whitespace().collect();
            match words.as_slice() {
                ["node", n] => {
                    g.add_node(n);
                }
                ["edge", a, "->", b] => g.add_edge(a, b),
                ["source", f, "@", n] => g.add_source(f, n),
                ["consumer", f, "@", n] => g.add_consumer(f, n),
                _ => {
                    return Err(doc.error(
                        line.number,
                        format!("expected `edge a -> b`, `source f @ n`, `consumer f @ n` or `node n`, got `{}`", line.text),
                    ))
                }
            }
        }
        g.validate().map_err(|e| {
            doc.error(
                doc.all("graph").next().map_or(1, |s| s.header_line),
                e.to_string(),
            )
        })?;
        Ok(g)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImpactReport {
    pub failed: Vec<String>,
    /// `(component, function)` pairs no longer supplied.
    pub lost: Vec<(String, String)>,
    /// `(function, consumer)` pairs now one failure away from loss.
    pub zft: Vec<(String, String)>,
    /// `function@consumer` → remaining disjoint supply paths.
    pub redundancy: BTreeMap<String, usize>,
}

struct FlowNet {
    // (to, capacity, reverse edge index)
    adj: Vec<Vec<(usize, usize, usize)>>,
}

impl FlowNet {
    fn new(n: usize) -> Self {
        Self {
            adj: vec![Vec::new(); n],
        }
    }

    fn add_edge(&mut self, a: usize, b: usize, cap: usize) {
        let ra = self.adj[b].len();
        let rb = self.adj[a].len();
        self.adj[a].push((b, cap, ra));
        self.adj[b].push((a, 0, rb));
    }

    fn max_flow(&mut self, s: usize, t: usize) -> usize {
        let mut total = 0;
        loop {
            let mut prev: Vec<Option<(usize, usize)>> = vec![None; self.adj.len()];
            let mut queue = VecDeque::from([s]);
            let mut seen = vec![false; self.adj.len()];
            seen[s] = true;
            while let Some(u) = queue.pop_front() {
                if u == t {
                    break;
                }
                for (k, &(v, cap, _)) in self.adj[u].iter().enumerate() {
                    if cap > 0 && !seen[v] {
                        seen[v] = true;
                        prev[v] = Some((u, k));
                        queue.push_back(v);
                    }
                }
            }
            if !seen[t] {
                return total;
            }
            // every augmenting path carries one unit: all internal capacities are 1
            let mut v = t;
            while let Some((u, k)) = prev[v] {
                let (_, _, rev) = self.adj[u][k];
                self.adj[u][k].1 -= 1;
                self.adj[v][rev].1 += 1;
                v = u;
            }
            total += 1;
        }
    }
}
