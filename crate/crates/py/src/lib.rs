//! Python bindings: scenarios load and run in-process, results come back
//! as plain lists and JSON strings, and the graph-rewiring primitives are
//! exposed directly for experimentation from notebooks.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use formsim::graph::ControlGraph;
use formsim::sim::{
    self, compute_metrics, run_scenario, ScenarioConfig, SimError, DEFAULT_V_THRESHOLD,
};

fn sim_err(err: SimError) -> PyErr {
    match err {
        SimError::Config(e) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// A validated scenario configuration.
#[pyclass(module = "formsim_py", skip_from_py_object)]
#[derive(Clone)]
struct Scenario {
    cfg: ScenarioConfig,
}

#[pymethods]
impl Scenario {
    /// Load and validate a scenario JSON file.
    #[staticmethod]
    fn from_file(path: &str) -> PyResult<Self> {
        ScenarioConfig::load(path)
            .map(|cfg| Self { cfg })
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }

    /// Parse and validate a scenario from a JSON string.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        ScenarioConfig::from_json_str(text)
            .map(|cfg| Self { cfg })
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn to_json(&self) -> String {
        self.cfg.to_json_pretty()
    }

    /// Copy of this scenario with goal assignment disabled.
    fn without_assignment(&self) -> Self {
        Self {
            cfg: self.cfg.without_assignment(),
        }
    }

    #[getter]
    fn name(&self) -> String {
        self.cfg.name.clone()
    }

    #[getter]
    fn follower_count(&self) -> usize {
        self.cfg.n()
    }

    #[getter]
    fn dimension(&self) -> usize {
        self.cfg.dimension
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.cfg.dt
    }

    #[getter]
    fn t_end(&self) -> f64 {
        self.cfg.t_end
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(name={:?}, followers={}, dimension={}, t_end={})",
            self.cfg.name,
            self.cfg.n(),
            self.cfg.dimension,
            self.cfg.t_end
        )
    }
}

/// A finished run: logged time series, exchange events and metrics.
#[pyclass(module = "formsim_py")]
struct RunResult {
    log: sim::RunLog,
}

#[pymethods]
impl RunResult {
    /// Logged sample times.
    fn times(&self) -> Vec<f64> {
        self.log.steps.iter().map(|s| s.t).collect()
    }

    /// Lyapunov value at every logged step.
    fn lyapunov(&self) -> Vec<f64> {
        self.log.steps.iter().map(|s| s.v).collect()
    }

    /// Positions of one follower (1-based id) over the logged steps.
    fn positions(&self, follower: usize) -> PyResult<Vec<Vec<f64>>> {
        if follower == 0 || follower > self.log.n {
            return Err(PyValueError::new_err(format!(
                "follower id {follower} out of range 1..={}",
                self.log.n
            )));
        }
        Ok(self
            .log
            .steps
            .iter()
            .map(|s| s.states[follower - 1].p.iter().copied().collect())
            .collect())
    }

    /// Formation error magnitude per follower at the final step.
    fn final_delta_norms(&self) -> Vec<f64> {
        self.log
            .steps
            .last()
            .map(|s| s.delta.iter().map(|d| d.norm()).collect())
            .unwrap_or_default()
    }

    /// Every assignment proposal as a list of JSON strings.
    fn events_json(&self) -> Vec<String> {
        self.log
            .events
            .iter()
            .map(|e| serde_json::to_string(e).expect("events serialize"))
            .collect()
    }

    /// Number of accepted exchanges.
    fn accepted_exchanges(&self) -> usize {
        self.log.accepted_events().count()
    }

    /// Pre/post Lyapunov bookkeeping for each accepted exchange, as JSON.
    fn jump_checks_json(&self) -> String {
        serde_json::to_string(&self.log.jump_checks).expect("jump checks serialize")
    }

    /// Summary metrics as one JSON document.
    fn metrics_json(&self) -> String {
        let metrics = compute_metrics(&self.log, DEFAULT_V_THRESHOLD);
        serde_json::to_string_pretty(&metrics).expect("metrics serialize")
    }

    fn warnings(&self) -> Vec<String> {
        self.log.warnings.clone()
    }

    /// Write trajectory.csv, lyapunov.csv and events.jsonl into `dir`.
    fn write_outputs(&self, dir: &str) -> PyResult<()> {
        self.log
            .write_outputs(dir)
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!(
            "RunResult(steps={}, proposals={}, exchanges={})",
            self.log.steps.len(),
            self.log.events.len(),
            self.log.accepted_events().count()
        )
    }
}

/// Simulate a scenario. `assignment=False` runs the fixed-goal baseline.
#[pyfunction]
#[pyo3(signature = (scenario, assignment = true, log_every = None))]
fn run(scenario: &Scenario, assignment: bool, log_every: Option<usize>) -> PyResult<RunResult> {
    let mut cfg = scenario.cfg.clone();
    if !assignment {
        cfg.assignment = None;
    }
    if let Some(stride) = log_every {
        cfg.log_every = Some(stride);
    }
    run_scenario(&cfg)
        .map(|log| RunResult { log })
        .map_err(sim_err)
}

/// Stability analysis of a scenario as a JSON document: spanning-tree
/// verdict, estimator spectrum and abscissa, Lyapunov residual.
#[pyfunction]
fn analyze(scenario: &Scenario) -> PyResult<String> {
    let report = sim::analyze(&scenario.cfg).map_err(sim_err)?;
    Ok(serde_json::to_string_pretty(&report).expect("report serializes"))
}

fn build_graph(
    n: usize,
    edges: Vec<(usize, usize)>,
    leader_flags: Vec<bool>,
) -> PyResult<ControlGraph> {
    ControlGraph::from_edges(n, &edges, leader_flags)
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

/// True when every follower is reachable from the leader through the
/// flagged followers and the undirected edges.
#[pyfunction]
fn has_spanning_tree(
    n: usize,
    edges: Vec<(usize, usize)>,
    leader_flags: Vec<bool>,
) -> PyResult<bool> {
    Ok(formsim::graph::has_spanning_tree(&build_graph(
        n,
        edges,
        leader_flags,
    )?))
}

type EdgesAndFlags = (Vec<(usize, usize)>, Vec<bool>);

/// Rewire a control graph for a goal exchange between followers `alpha`
/// and `beta`; returns the new `(edges, leader_flags)`.
#[pyfunction]
fn exchange_neighbors(
    n: usize,
    edges: Vec<(usize, usize)>,
    leader_flags: Vec<bool>,
    alpha: usize,
    beta: usize,
) -> PyResult<EdgesAndFlags> {
    let ctrl = build_graph(n, edges, leader_flags)?;
    let swapped = formsim::graph::exchange_neighbors(&ctrl, alpha, beta)
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok((swapped.edges(), swapped.leader_flags().to_vec()))
}

#[pymodule]
fn formsim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Scenario>()?;
    m.add_class::<RunResult>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(has_spanning_tree, m)?)?;
    m.add_function(wrap_pyfunction!(exchange_neighbors, m)?)?;
    Ok(())
}
