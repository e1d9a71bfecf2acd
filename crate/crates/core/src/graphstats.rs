//! Components, susceptibilities and distance statistics.

use std::collections::VecDeque;
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::graphgen::{Adjacency, Graph};
use crate::metricspace::MetricMeasureSpace;
use crate::rng::rng_from_seed;

struct DisjointSet {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect(), size: vec![1; n] }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
    }
}

/// Components sorted by size (descending), ties by smallest vertex label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentSummary {
    pub n: usize,
    /// Vertex lists, each sorted ascending.
    pub components: Vec<Vec<usize>>,
    pub sizes: Vec<usize>,
    pub edges: Vec<usize>,
    pub surplus: Vec<usize>,
    /// Component rank of each vertex.
    pub label: Vec<usize>,
}

impl ComponentSummary {
    pub fn count(&self) -> usize {
        self.components.len()
    }

    pub fn largest(&self) -> usize {
        self.sizes.first().copied().unwrap_or(0)
    }
}

pub fn components(g: &Graph) -> ComponentSummary {
    let n = g.n;
    let mut ds = DisjointSet::new(n);
    for &(a, b) in &g.edges {
        ds.union(a, b);
    }
    let mut root_index = vec![usize::MAX; n];
    let mut comps: Vec<Vec<usize>> = Vec::new();
    for v in 0..n {
        let r = ds.find(v);
        if root_index[r] == usize::MAX {
            root_index[r] = comps.len();
            comps.push(Vec::new());
        }
        comps[root_index[r]].push(v);
    }
    // vertices were visited in increasing order, so comps[k][0] is the minimum label
    comps.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
    let mut label = vec![0usize; n];
    for (k, c) in comps.iter().enumerate() {
        for &v in c {
            label[v] = k;
        }
    }
    let mut edges = vec![0usize; comps.len()];
    for &(a, _) in &g.edges {
        edges[label[a]] += 1;
    }
    let sizes: Vec<usize> = comps.iter().map(|c| c.len()).collect();
    let surplus = edges.iter().zip(&sizes).map(|(&e, &s)| e + 1 - s).collect();
    ComponentSummary { n, components: comps, sizes, edges, surplus, label }
}

/// `s_k = sum_C |C|^k / n`.
pub fn susceptibilities(summary: &ComponentSummary, ks: &[u32]) -> Vec<f64> {
    let n = summary.n as f64;
    ks.iter()
        .map(|&k| summary.sizes.iter().map(|&s| (s as f64).powi(k as i32)).sum::<f64>() / n)
        .collect()
}

/// BFS distances from `src`; `dist` must be filled with `usize::MAX` on entry for the vertices reached.
fn bfs(adj: &Adjacency, src: usize, dist: &mut [usize], queue: &mut VecDeque<usize>, visited: &mut Vec<usize>) {
    dist[src] = 0;
    queue.clear();
    queue.push_back(src);
    visited.push(src);
    while let Some(u) = queue.pop_front() {
        let du = dist[u];
        for &w in adj.neighbors(u) {
            if dist[w] == usize::MAX {
                dist[w] = du + 1;
                visited.push(w);
                queue.push_back(w);
            }
        }
    }
}

/// `(sum over ordered pairs of distances, max eccentricity)` from each source.
fn source_sweep(adj: &Adjacency, sources: &[usize], n: usize) -> Vec<(u64, usize)> {
    let work = |chunk: &[usize]| -> Vec<(u64, usize)> {
        let mut dist = vec![usize::MAX; n];
        let mut queue = VecDeque::new();
        let mut visited = Vec::new();
        chunk
            .iter()
            .map(|&s| {
                visited.clear();
                bfs(adj, s, &mut dist, &mut queue, &mut visited);
                let mut sum = 0u64;
                let mut ecc = 0usize;
                for &v in visited.iter() {
                    sum += dist[v] as u64;
                    ecc = ecc.max(dist[v]);
                    dist[v] = usize::MAX;
                }
                (sum, ecc)
            })
            .collect()
    };
    if sources.len() >= 256 {
        sources.par_chunks(64).flat_map_iter(|c| work(c)).collect()
    } else {
        work(sources)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceStats {
    /// `(1/n) sum_C sum_{i,j in C} d(i,j)`
    pub mean_distance_sum: f64,
    pub diameter: usize,
    /// Per component in `ComponentSummary` order: sum of distances over ordered pairs.
    pub component_sums: Vec<u64>,
    pub component_diameters: Vec<usize>,
}

pub fn distance_stats(g: &Graph) -> DistanceStats {
    let summary = components(g);
    distance_stats_with(g, &summary)
}

pub fn distance_stats_with(g: &Graph, summary: &ComponentSummary) -> DistanceStats {
    let adj = g.adjacency();
    let mut component_sums = Vec::with_capacity(summary.count());
    let mut component_diameters = Vec::with_capacity(summary.count());
    for c in &summary.components {
        if c.len() == 1 {
            component_sums.push(0);
            component_diameters.push(0);
            continue;
        }
        let res = source_sweep(&adj, c, g.n);
        component_sums.push(res.iter().map(|r| r.0).sum());
        component_diameters.push(res.iter().map(|r| r.1).max().unwrap_or(0));
    }
    let total: u64 = component_sums.iter().sum();
    DistanceStats {
        mean_distance_sum: total as f64 / g.n as f64,
        diameter: component_diameters.iter().copied().max().unwrap_or(0),
        component_sums,
        component_diameters,
    }
}

/// Estimate of `D` from BFS at uniformly sampled source vertices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledDistance {
    pub estimate: f64,
    pub standard_error: f64,
    pub sources: usize,
    /// Always true: this is a Monte Carlo estimate, not the exact statistic.
    pub approximate: bool,
}

pub fn sampled_distance_stats(g: &Graph, sources: usize, seed: u64) -> SampledDistance {
    let adj = g.adjacency();
    let mut rng = rng_from_seed(seed);
    let src: Vec<usize> = (0..sources).map(|_| rng.random_range(0..g.n)).collect();
    let vals: Vec<f64> = source_sweep(&adj, &src, g.n).into_iter().map(|(s, _)| s as f64).collect();
    let (mean, se) = crate::stats::mean_se(&vals);
    SampledDistance { estimate: mean, standard_error: se, sources, approximate: true }
}

#[derive(Debug, thiserror::Error)]
pub enum StatsError {
    #[error("component index {index} out of range ({count} components)")]
    IndexOutOfRange { index: usize, count: usize },
}

/// Component `index` (by rank) with graph distances and `mass_per_vertex` on each vertex.
pub fn component_metric(g: &Graph, index: usize, mass_per_vertex: f64) -> Result<MetricMeasureSpace, StatsError> {
    let summary = components(g);
    component_metric_with(g, &summary, index, mass_per_vertex)
}

pub fn component_metric_with(g: &Graph, summary: &ComponentSummary, index: usize, mass_per_vertex: f64) -> Result<MetricMeasureSpace, StatsError> {
    let comp = summary
        .components
        .get(index)
        .ok_or(StatsError::IndexOutOfRange { index, count: summary.count() })?;
    let adj = g.adjacency();
    let m = comp.len();
    let mut pos = vec![usize::MAX; g.n];
    for (k, &v) in comp.iter().enumerate() {
        pos[v] = k;
    }
    let mut dist = vec![0.0; m * m];
    let mut d = vec![usize::MAX; g.n];
    let mut queue = VecDeque::new();
    let mut visited = Vec::new();
    for (k, &s) in comp.iter().enumerate() {
        visited.clear();
        bfs(&adj, s, &mut d, &mut queue, &mut visited);
        for &v in &visited {
            dist[k * m + pos[v]] = d[v] as f64;
            d[v] = usize::MAX;
        }
    }
    Ok(MetricMeasureSpace { m, dist, mass: vec![mass_per_vertex; m] })
}

/// CSV `rank,size,surplus,diameter,sum_distances`, one row per component.
pub fn write_component_csv<W: Write>(mut w: W, summary: &ComponentSummary, dist: &DistanceStats) -> std::io::Result<()> {
    writeln!(w, "rank,size,surplus,diameter,sum_distances")?;
    for k in 0..summary.count() {
        writeln!(w, "{},{},{},{},{}", k + 1, summary.sizes[k], summary.surplus[k], dist.component_diameters[k], dist.component_sums[k])?;
    }
    Ok(())
}
