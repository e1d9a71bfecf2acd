//! Python bindings for `critgraph`.

use std::collections::BTreeMap;

use critgraph::experiment::{run_experiment as run_core_experiment, ExperimentConfig};
use critgraph::graphgen::{sample_graphon_graph, sample_p_tree as core_p_tree, sample_rank_one, EdgeRule, Graph as CoreGraph, RankOneMode};
use critgraph::graphstats::{component_metric, components, distance_stats, susceptibilities};
use critgraph::kernels::{build_weight_matrix, parse_key_values, z0 as core_z0, KernelSpec, WeightScheme};
use critgraph::limits::{default_horizon, sample_crit_space as core_crit_space, sample_limit_sizes, DEFAULT_EXCURSION_POOL};
use critgraph::metricspace::{distance_profile, gh_distance_exact, MetricMeasureSpace};
use critgraph::spectral::{discretize_kernel, leading_eigenpair as core_eigenpair, limit_constants as core_constants, Discretization};
use critgraph::stats::ks_two_sample as core_ks;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Graphon `c * f(x, y)` from a named family.
#[pyclass(name = "Kernel", module = "critgraph_py")]
struct Kernel {
    spec: KernelSpec,
}

#[pymethods]
impl Kernel {
    /// `family` is one of constant, min, max, sum-pow, max-neg-pow, abs-diff-neg-pow, eta-plus-max-pow.
    #[new]
    #[pyo3(signature = (family, c = 1.0, a = None, eta = None))]
    fn new(family: &str, c: f64, a: Option<f64>, eta: Option<f64>) -> PyResult<Self> {
        let mut map = BTreeMap::from([("family".to_string(), family.to_string()), ("c".to_string(), c.to_string())]);
        if let Some(a) = a {
            map.insert("a".into(), a.to_string());
        }
        if let Some(eta) = eta {
            map.insert("eta".into(), eta.to_string());
        }
        Ok(Self { spec: KernelSpec::from_map(&map).map_err(err)? })
    }

    /// Parses `key=value` lines (`family`, `c`, `a`, `eta`, ...).
    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        let map = parse_key_values(text).map_err(err)?;
        Ok(Self { spec: KernelSpec::from_map(&map).map_err(err)? })
    }

    fn eval(&self, x: f64, y: f64) -> PyResult<f64> {
        self.spec.eval(x, y).map_err(err)
    }

    fn scaled(&self, factor: f64) -> Self {
        Self { spec: self.spec.scaled(factor) }
    }

    fn to_text(&self) -> String {
        self.spec.to_text()
    }

    fn __repr__(&self) -> String {
        format!("Kernel({}, c={})", self.spec.family.name(), self.spec.c)
    }
}

#[pyclass(name = "Graph", module = "critgraph_py")]
struct Graph {
    inner: CoreGraph,
}

#[pymethods]
impl Graph {
    #[new]
    fn new(n: usize, edges: Vec<(usize, usize)>) -> PyResult<Self> {
        Ok(Self { inner: CoreGraph::new(n, edges).map_err(err)? })
    }

    #[staticmethod]
    fn from_csv(text: &str) -> PyResult<Self> {
        Ok(Self { inner: CoreGraph::read_csv(text).map_err(err)? })
    }

    fn to_csv(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        self.inner.write_csv(&mut buf).map_err(err)?;
        String::from_utf8(buf).map_err(err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[getter]
    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.edges.clone()
    }

    fn edge_count(&self) -> usize {
        self.inner.edge_count()
    }

    /// Vertex lists, largest component first.
    fn components(&self) -> Vec<Vec<usize>> {
        components(&self.inner).components
    }

    /// `(size, surplus)` per component, largest first.
    fn component_sizes(&self) -> Vec<(usize, usize)> {
        let cs = components(&self.inner);
        cs.sizes.into_iter().zip(cs.surplus).collect()
    }

    /// `s_k = sum |C|^k / n`.
    fn susceptibility(&self, k: u32) -> f64 {
        susceptibilities(&components(&self.inner), &[k])[0]
    }

    /// `(mean_distance_sum, diameter)`.
    fn distance_stats(&self) -> (f64, usize) {
        let d = distance_stats(&self.inner);
        (d.mean_distance_sum, d.diameter)
    }

    /// Graph distance on component `index` with mass `mass_per_vertex` at each vertex.
    #[pyo3(signature = (index = 0, mass_per_vertex = 1.0))]
    fn component_space(&self, index: usize, mass_per_vertex: f64) -> PyResult<MetricSpace> {
        Ok(MetricSpace { inner: component_metric(&self.inner, index, mass_per_vertex).map_err(err)? })
    }

    fn __repr__(&self) -> String {
        format!("Graph(n={}, edges={})", self.inner.n, self.inner.edge_count())
    }
}

#[pyclass(name = "MetricSpace", module = "critgraph_py")]
struct MetricSpace {
    inner: MetricMeasureSpace,
}

#[pymethods]
impl MetricSpace {
    #[new]
    fn new(dist: Vec<Vec<f64>>, mass: Vec<f64>) -> PyResult<Self> {
        let m = dist.len();
        if dist.iter().any(|r| r.len() != m) {
            return Err(PyValueError::new_err("distance matrix must be square"));
        }
        Ok(Self { inner: MetricMeasureSpace::new(m, dist.concat(), mass).map_err(err)? })
    }

    #[getter]
    fn size(&self) -> usize {
        self.inner.m
    }

    #[getter]
    fn mass(&self) -> Vec<f64> {
        self.inner.mass.clone()
    }

    fn d(&self, i: usize, j: usize) -> PyResult<f64> {
        if i >= self.inner.m || j >= self.inner.m {
            return Err(PyValueError::new_err("point index out of range"));
        }
        Ok(self.inner.d(i, j))
    }

    fn distance_matrix(&self) -> Vec<Vec<f64>> {
        self.inner.dist.chunks(self.inner.m.max(1)).map(|r| r.to_vec()).collect()
    }

    fn diameter(&self) -> f64 {
        self.inner.diameter()
    }

    fn total_mass(&self) -> f64 {
        self.inner.total_mass()
    }

    /// True when all metric axioms hold up to `tol`.
    #[pyo3(signature = (tol = 1e-9))]
    fn is_metric(&self, tol: f64) -> bool {
        self.inner.check_metric(tol).is_ok()
    }

    /// Exact Gromov-Hausdorff distance (both spaces at most 7 points).
    fn gh_distance(&self, other: PyRef<'_, MetricSpace>) -> PyResult<f64> {
        gh_distance_exact(&self.inner, &other.inner).map_err(err)
    }

    /// Sorted sample of `d(U, V)` with `U, V` drawn from the normalized measure.
    #[pyo3(signature = (samples, seed = 0))]
    fn distance_profile(&self, samples: usize, seed: u64) -> PyResult<Vec<f64>> {
        Ok(distance_profile(&self.inner, samples, seed).map_err(err)?.distances)
    }

    fn __repr__(&self) -> String {
        format!("MetricSpace(size={}, mass={})", self.inner.m, self.inner.total_mass())
    }
}

/// Graph on `n` vertices with edge weights from `w + n^{-1/3} lam * w`.
#[pyfunction]
#[pyo3(signature = (kernel, n, lam = None, scheme = "grid", rule = "capped", seed = 0))]
fn sample_graph(kernel: PyRef<'_, Kernel>, n: usize, lam: Option<f64>, scheme: &str, rule: &str, seed: u64) -> PyResult<Graph> {
    let scheme: WeightScheme = scheme.parse().map_err(err)?;
    let rule: EdgeRule = rule.parse().map_err(err)?;
    let h = lam.map(|l| kernel.spec.scaled(l));
    let wseed = (scheme == WeightScheme::UniformOrderStat).then_some(seed);
    let wm = build_weight_matrix(&kernel.spec, h.as_ref(), n, scheme, wseed).map_err(err)?;
    Ok(Graph { inner: sample_graphon_graph(&wm, rule, seed) })
}

/// `G(x, q)`: edge `{i, j}` present with probability `1 - exp(-q x_i x_j)`.
#[pyfunction]
#[pyo3(signature = (x, q, seed = 0, exploration = false))]
fn rank_one_graph(x: Vec<f64>, q: f64, seed: u64, exploration: bool) -> PyResult<Graph> {
    let mode = if exploration { RankOneMode::Exploration } else { RankOneMode::Direct };
    Ok(Graph { inner: sample_rank_one(&x, q, mode, seed).map_err(err)?.graph })
}

/// `(top_eigenvalue, psi)` of the midpoint discretization at `n` points.
#[pyfunction]
fn leading_eigenpair(kernel: PyRef<'_, Kernel>, n: usize) -> PyResult<(f64, Vec<f64>)> {
    let s = core_eigenpair(&discretize_kernel(&kernel.spec, n, Discretization::Midpoint)).map_err(err)?;
    Ok((s.top_eigenvalue, s.psi))
}

/// `{"alpha", "chi", "zeta"}` for `w` with optional perturbation `h`.
#[pyfunction]
#[pyo3(signature = (w, n = 2000, h = None))]
fn limit_constants(w: PyRef<'_, Kernel>, n: usize, h: Option<PyRef<'_, Kernel>>) -> PyResult<BTreeMap<&'static str, f64>> {
    let s = core_eigenpair(&discretize_kernel(&w.spec, n, Discretization::Midpoint)).map_err(err)?;
    let hm = h.map(|h| discretize_kernel(&h.spec, n, Discretization::Midpoint));
    let c = core_constants(&s, hm.as_ref()).map_err(err)?;
    Ok(BTreeMap::from([("alpha", c.alpha), ("chi", c.chi), ("zeta", c.zeta)]))
}

/// Root of `tanh(1/sqrt z) = sqrt z`.
#[pyfunction]
fn z0() -> f64 {
    core_z0()
}

/// Excursions `(length, area, marks)` of the reflected parabolic walk, longest first.
#[pyfunction]
#[pyo3(signature = (lam, seed = 0, horizon = None, dt = 1e-3))]
fn limit_excursions(lam: f64, seed: u64, horizon: Option<f64>, dt: f64) -> PyResult<Vec<(f64, f64, u64)>> {
    let s = sample_limit_sizes(lam, horizon.unwrap_or_else(|| default_horizon(lam)), dt, seed).map_err(err)?;
    Ok(s.excursions.iter().zip(&s.poisson_marks).map(|(e, &m)| (e.length, e.area, m)).collect())
}

/// Grid approximation of the limit space of mass `gamma`.
#[pyfunction]
#[pyo3(signature = (gamma, grid = 400, pool = DEFAULT_EXCURSION_POOL, seed = 0))]
fn sample_crit_space(gamma: f64, grid: usize, pool: usize, seed: u64) -> PyResult<MetricSpace> {
    Ok(MetricSpace { inner: core_crit_space(gamma, grid, pool, seed).map_err(err)?.space })
}

/// Ordered p-tree as `(root, children)`.
#[pyfunction]
#[pyo3(signature = (p, seed = 0))]
fn sample_p_tree(p: Vec<f64>, seed: u64) -> PyResult<(usize, Vec<Vec<usize>>)> {
    let t = core_p_tree(&p, seed).map_err(err)?;
    Ok((t.root, t.children))
}

/// `(statistic, p_value)` of the two-sample Kolmogorov-Smirnov test.
#[pyfunction]
fn ks_two_sample(a: Vec<f64>, b: Vec<f64>) -> (f64, f64) {
    let t = core_ks(&a, &b);
    (t.statistic, t.p_value)
}

/// Runs an experiment from `key=value` or JSON config text; returns the summary as JSON text.
#[pyfunction]
fn run_experiment(config: &str) -> PyResult<String> {
    let cfg = ExperimentConfig::parse(config).map_err(err)?;
    let out = run_core_experiment(&cfg).map_err(err)?;
    serde_json::to_string_pretty(&out.summary_json()).map_err(err)
}

#[pymodule]
fn critgraph_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Kernel>()?;
    m.add_class::<Graph>()?;
    m.add_class::<MetricSpace>()?;
    m.add_function(wrap_pyfunction!(sample_graph, m)?)?;
    m.add_function(wrap_pyfunction!(rank_one_graph, m)?)?;
    m.add_function(wrap_pyfunction!(leading_eigenpair, m)?)?;
    m.add_function(wrap_pyfunction!(limit_constants, m)?)?;
    m.add_function(wrap_pyfunction!(z0, m)?)?;
    m.add_function(wrap_pyfunction!(limit_excursions, m)?)?;
    m.add_function(wrap_pyfunction!(sample_crit_space, m)?)?;
    m.add_function(wrap_pyfunction!(sample_p_tree, m)?)?;
    m.add_function(wrap_pyfunction!(ks_two_sample, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
