//! Impact and redundancy oracles built on petgraph, plus a random
//! component-graph generator.

use std::collections::BTreeSet;

use petgraph::algo::ford_fulkerson;
use petgraph::graph::{DiGraph, NodeIndex};
use petgraph::visit::Bfs;
use rand::Rng;
use vsm_core::impacts::{ComponentGraph, UNBOUNDED};

#[derive(Debug, Clone)]
pub struct RandomGraph {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
    /// `(function, source nodes, consumer nodes)`.
    pub functions: Vec<(String, Vec<usize>, Vec<usize>)>,
    pub failed: Vec<usize>,
}

pub fn name(i: usize) -> String {
    format!("v{i}")
}

pub fn gen_graph<R: Rng>(rng: &mut R, max_nodes: usize) -> RandomGraph {
    let n = rng.random_range(2..=max_nodes);
    let density = rng.random_range(0.05..0.35);
    let mut edges = Vec::new();
    for a in 0..n {
        for b in 0..n {
            if a != b && rng.random_bool(density) {
                edges.push((a, b));
            }
        }
    }
    let functions = (0..rng.random_range(1..=2))
        .map(|f| {
            let sources: BTreeSet<usize> = (0..rng.random_range(1..=3))
                .map(|_| rng.random_range(0..n))
                .collect();
            let consumers: BTreeSet<usize> = (0..rng.random_range(1..=5))
                .map(|_| rng.random_range(0..n))
                .collect();
            (
                format!("f{f}"),
                sources.into_iter().collect(),
                consumers.into_iter().collect(),
            )
        })
        .collect();
    let failed: BTreeSet<usize> = (0..rng.random_range(0..=3))
        .map(|_| rng.random_range(0..n))
        .collect();
    RandomGraph {
        n,
        edges,
        functions,
        failed: failed.into_iter().collect(),
    }
}

impl RandomGraph {
    pub fn component_graph(&self) -> ComponentGraph {
        let mut g = ComponentGraph::new();
        for i in 0..self.n {
            g.add_node(&name(i));
        }
        for &(a, b) in &self.edges {
            g.add_edge(&name(a), &name(b));
        }
        for (f, s, c) in &self.functions {
            s.iter().for_each(|&v| g.add_source(f, &name(v)));
            c.iter().for_each(|&v| g.add_consumer(f, &name(v)));
        }
        g
    }

    pub fn failed_names(&self) -> Vec<String> {
        self.failed.iter().map(|&v| name(v)).collect()
    }

    fn reachable(&self, sources: &[usize], removed: &[usize]) -> BTreeSet<usize> {
        let mut g = DiGraph::<usize, ()>::new();
        let ids: Vec<NodeIndex> = (0..self.n).map(|i| g.add_node(i)).collect();
        for &(a, b) in &self.edges {
            if !removed.contains(&a) && !removed.contains(&b) {
                g.add_edge(ids[a], ids[b], ());
            }
        }
        let mut out = BTreeSet::new();
        for &s in sources.iter().filter(|s| !removed.contains(s)) {
            let mut bfs = Bfs::new(&g, ids[s]);
            while let Some(v) = bfs.next(&g) {
                out.insert(g[v]);
            }
        }
        out
    }

    /// Reachability-difference oracle: `(component, function)` pairs.
    pub fn impact_oracle(&self) -> BTreeSet<(String, String)> {
        let mut out = BTreeSet::new();
        for (f, sources, _) in &self.functions {
            let before = self.reachable(sources, &[]);
            let after = self.reachable(sources, &self.failed);
            for v in before.difference(&after) {
                out.insert((name(*v), f.clone()));
            }
        }
        out
    }

    /// Unit-vertex-capacity max-flow from the merged live sources.
    pub fn redundancy_oracle(
        &self,
        sources: &[usize],
        consumer: usize,
        removed: &[usize],
    ) -> usize {
        if removed.contains(&consumer) {
            return 0;
        }
        let live: Vec<usize> = sources
            .iter()
            .copied()
            .filter(|s| !removed.contains(s))
            .collect();
        if live.contains(&consumer) {
            return UNBOUNDED;
        }
        const INF: u64 = 1 << 40;
        let mut g = DiGraph::<(), u64>::new();
        let v_in: Vec<NodeIndex> = (0..self.n).map(|_| g.add_node(())).collect();
        let v_out: Vec<NodeIndex> = (0..self.n).map(|_| g.add_node(())).collect();
        let root = g.add_node(());
        for v in (0..self.n).filter(|v| !removed.contains(v)) {
            let cap = if live.contains(&v) { INF } else { 1 };
            g.add_edge(v_in[v], v_out[v], cap);
        }
        for &(a, b) in &self.edges {
            if !removed.contains(&a) && !removed.contains(&b) {
                g.add_edge(v_out[a], v_in[b], 1);
            }
        }
        for &s in &live {
            g.add_edge(root, v_in[s], INF);
        }
        let (flow, _) = ford_fulkerson(&g, root, v_in[consumer]);
        flow as usize
    }

    /// Menger check for small graphs: fewest interior vertices whose removal
    /// cuts every supply path, plus the direct source → consumer edges that
    /// no vertex removal can cut.
    pub fn min_cut_bruteforce(
        &self,
        sources: &[usize],
        consumer: usize,
        removed: &[usize],
    ) -> usize {
        let live: Vec<usize> = sources
            .iter()
            .copied()
            .filter(|s| !removed.contains(s))
            .collect();
        if removed.contains(&consumer) {
            return 0;
        }
        if live.contains(&consumer) {
            return UNBOUNDED;
        }
        let direct = live
            .iter()
            .filter(|&&s| self.edges.contains(&(s, consumer)))
            .count();
        let interior: Vec<usize> = (0..self.n)
            .filter(|v| !removed.contains(v) && !live.contains(v) && *v != consumer)
            .collect();
        let mut best = usize::MAX;
        for mask in 0u32..(1 << interior.len()) {
            let size = mask.count_ones() as usize;
            if size >= best {
                continue;
            }
            let mut cut: Vec<usize> = removed.to_vec();
            cut.extend(
                interior
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask >> i & 1 == 1)
                    .map(|(_, v)| *v),
            );
            // Paths that are a single direct edge do not count as cut here.
            let without_direct = RandomGraph {
                edges: self
                    .edges
                    .iter()
                    .copied()
                    .filter(|&(a, b)| !(b == consumer && live.contains(&a)))
                    .collect(),
                ..self.clone()
            };
            if !without_direct.reachable(&live, &cut).contains(&consumer) {
                best = size;
            }
        }
        best + direct
    }
}

/// Compares one random graph against the production graph; `Err`
/// describes the first mismatch.
pub fn compare_graph(rg: &RandomGraph) -> Result<(), String> {
    let g = rg.component_graph();
    let failed = rg.failed_names();
    let got = g.impact_set(&failed).map_err(|e| e.to_string())?;
    let want = rg.impact_oracle();
    if got != want {
        return Err(format!("impact set {got:?} != oracle {want:?} for {rg:?}"));
    }
    let mut zft = BTreeSet::new();
    for (f, sources, consumers) in &rg.functions {
        for &c in consumers {
            let got = g
                .redundancy_without(f, &name(c), &failed)
                .map_err(|e| e.to_string())?;
            let want = rg.redundancy_oracle(sources, c, &rg.failed);
            if got != want {
                return Err(format!(
                    "redundancy {f}@v{c}: {got} != oracle {want} for {rg:?}"
                ));
            }
            if rg.redundancy_oracle(sources, c, &[]) >= 2 && want == 1 {
                zft.insert((f.clone(), name(c)));
            }
        }
    }
    let got = g.zero_fault_tolerant(&failed).map_err(|e| e.to_string())?;
    if got != zft {
        return Err(format!(
            "zero-fault-tolerant {got:?} != oracle {zft:?} for {rg:?}"
        ));
    }
    Ok(())
}
