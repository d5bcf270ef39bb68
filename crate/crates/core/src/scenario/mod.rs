//! TOML scenario files, the built-in example scenarios, and their conversion
//! into a validated [`Scenario`].
//!
//! ```toml
//! schema = 1
//! name = "demo"
//!
//! [graph]
//! nodes = 2
//! edges = [[1, 2, 1.0], [2, 1, 1.0]]   # [from, to, weight]
//!
//! [agents.1]
//! A = [[0.0]]
//! B = [[1.0]]
//! C = [[1.0]]
//! K = [[1.0]]                            # optional, synthesized if absent
//!
//! [costs.1]
//! expr = "(y - 1)^2"
//!
//! [controller]
//! mode = "state"
//! gamma1 = 8.0
//! gamma2 = 8.0
//!
//! [simulation]
//! horizon = 20.0
//! ```

mod builtin;

pub use builtin::{builtin, builtin_names, example1, example2, EXAMPLE2_PRESETS};

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{suggest_gains, AgentController, ControlMode, CouplingGains, GainCheckInputs};
use crate::costmodel::{CostFunction, DEFAULT_BOX, DEFAULT_SAMPLES};
use crate::plantmodel::{
    solve_regulation_equations, synthesize_observer_gain, synthesize_stabilizing_gain, validate_gains, AgentPlant,
    SolutionTriplet,
};
use crate::policy::NumericPolicy;
use crate::simulator::{InitialConditions, Scenario};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_HORIZON: f64 = 50.0;
pub const DEFAULT_STEP: f64 = 1e-3;
pub const DEFAULT_STRIDE: usize = 10;
pub const DEFAULT_TOLERANCE: f64 = 5e-3;
pub const DEFAULT_SETTLING_EPSILON: f64 = 1e-2;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{key}: {message}")]
    Validation { key: String, message: String },
}

fn invalid(key: impl Into<String>, message: impl ToString) -> ScenarioError {
    ScenarioError::Validation {
        key: key.into(),
        message: message.to_string(),
    }
}

type Matrix = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema: u32,
    pub name: String,
    /// Optimum printed alongside the source data, compared with the oracle.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_optimum: Option<Vec<f64>>,
    pub graph: GraphSection,
    pub agents: BTreeMap<String, AgentSection>,
    pub costs: BTreeMap<String, CostSection>,
    pub controller: ControllerSection,
    #[serde(default)]
    pub simulation: SimulationSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    pub nodes: usize,
    /// `[from, to, weight]`, 1-based.
    pub edges: Vec<(usize, usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TripletSection {
    #[serde(rename = "Upsilon")]
    pub upsilon: Matrix,
    #[serde(rename = "Phi")]
    pub phi: Matrix,
    #[serde(rename = "Psi")]
    pub psi: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSection {
    #[serde(rename = "A")]
    pub a: Matrix,
    #[serde(rename = "B")]
    pub b: Matrix,
    #[serde(rename = "C")]
    pub c: Matrix,
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    pub k: Option<Matrix>,
    #[serde(rename = "H", default, skip_serializing_if = "Option::is_none")]
    pub h: Option<Matrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub triplet: Option<TripletSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xhat0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticSection {
    #[serde(rename = "Q")]
    pub q: Matrix,
    pub b: Vec<f64>,
    #[serde(default)]
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct CostSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expr: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadratic: Option<QuadraticSection>,
    /// Sampling box for estimating convexity constants of `expr` costs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_box: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ModeName {
    #[default]
    State,
    Output,
}

impl From<ModeName> for ControlMode {
    fn from(m: ModeName) -> Self {
        match m {
            ModeName::State => ControlMode::State,
            ModeName::Output => ControlMode::Output,
        }
    }
}

impl From<ControlMode> for ModeName {
    fn from(m: ControlMode) -> Self {
        match m {
            ControlMode::State => ModeName::State,
            ControlMode::Output => ModeName::Output,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresetSection {
    pub gamma1: f64,
    pub gamma2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    #[serde(default)]
    pub mode: ModeName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma2: Option<f64>,
    /// Replace `gamma1`, `gamma2` by the closed-form suggestion.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub auto_gains: bool,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub presets: BTreeMap<String, PresetSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSection {
    pub horizon: f64,
    pub step: f64,
    pub stride: usize,
    pub seed: u64,
    pub tolerance: f64,
    pub settling_epsilon: f64,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            horizon: DEFAULT_HORIZON,
            step: DEFAULT_STEP,
            stride: DEFAULT_STRIDE,
            seed: 0,
            tolerance: DEFAULT_TOLERANCE,
            settling_epsilon: DEFAULT_SETTLING_EPSILON,
        }
    }
}

/// Command-line adjustments applied to a file before it is built.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub step: Option<f64>,
    pub horizon: Option<f64>,
    pub mode: Option<ControlMode>,
    pub preset: Option<String>,
    pub seed: Option<u64>,
    pub tolerance: Option<f64>,
}

/// A validated scenario plus the file-level extras the runner reports.
#[derive(Debug, Clone, PartialEq)]
pub struct BuiltScenario {
    pub scenario: Scenario,
    pub reference_optimum: Option<DVector<f64>>,
    pub settling_epsilon: f64,
    pub file: ScenarioFile,
}

/// A builtin name or a path to a TOML file.
pub fn load_scenario(spec: &str) -> Result<ScenarioFile, ScenarioError> {
    if let Some(file) = builtin(spec) {
        return Ok(file);
    }
    let path = Path::new(spec);
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: spec.to_string(),
        source,
    })?;
    ScenarioFile::from_toml(&text)
}

fn matrix(key: &str, rows: &Matrix) -> Result<DMatrix<f64>, ScenarioError> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(invalid(key, "must be a non-empty rectangular array of rows"));
    }
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        return Err(invalid(key, "entries must be finite"));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn vector(key: &str, v: &[f64], len: usize) -> Result<DVector<f64>, ScenarioError> {
    if v.len() != len {
        return Err(invalid(key, format!("expected {len} entries, got {}", v.len())));
    }
    Ok(DVector::from_column_slice(v))
}

/// Checks that the keys are exactly `"1"..="n"`.
fn check_indices<T>(section: &str, map: &BTreeMap<String, T>, n: usize) -> Result<(), ScenarioError> {
    let mut seen = vec![false; n];
    for key in map.keys() {
        match key.parse::<usize>() {
            Ok(i) if (1..=n).contains(&i) && key == &i.to_string() => seen[i - 1] = true,
            _ => return Err(invalid(format!("{section}.{key}"), format!("index must be in 1..={n}"))),
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(invalid(format!("{section}.{}", missing + 1), "missing"));
    }
    Ok(())
}

impl ScenarioFile {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let file: Self = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        if file.schema != SCHEMA_VERSION {
            return Err(invalid("schema", format!("unsupported version {}, expected {SCHEMA_VERSION}", file.schema)));
        }
        Ok(file)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario files always serialize")
    }

    fn agent(&self, i: usize) -> &AgentSection {
        &self.agents[&i.to_string()]
    }

    fn cost(&self, i: usize) -> &CostSection {
        &self.costs[&i.to_string()]
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), ScenarioError> {
        if let Some(h) = o.step {
            self.simulation.step = h;
        }
        if let Some(t) = o.horizon {
            self.simulation.horizon = t;
        }
        if let Some(m) = o.mode {
            self.controller.mode = m.into();
        }
        if let Some(s) = o.seed {
            self.simulation.seed = s;
        }
        if let Some(t) = o.tolerance {
            self.simulation.tolerance = t;
        }
        if let Some(name) = &o.preset {
            let p = self.controller.presets.get(name).ok_or_else(|| {
                let known: Vec<&str> = self.controller.presets.keys().map(String::as_str).collect();
                invalid("controller.presets", format!("no preset '{name}' (known: {})", known.join(", ")))
            })?;
            self.controller.gamma1 = Some(p.gamma1);
            self.controller.gamma2 = Some(p.gamma2);
            self.controller.auto_gains = false;
        }
        Ok(())
    }

    /// Validates every section and resolves derived data: triplets and
    /// gains not given are computed, unset initial values are drawn from
    /// the seed.
    pub fn build(&self, policy: &NumericPolicy) -> Result<BuiltScenario, ScenarioError> {
        if self.schema != SCHEMA_VERSION {
            return Err(invalid("schema", format!("unsupported version {}", self.schema)));
        }
        let n = self.graph.nodes;
        let graph = crate::netgraph::Digraph::from_edges(n, &self.graph.edges).map_err(|e| invalid("graph.edges", e))?;
        if !graph.is_strongly_connected() {
            return Err(invalid("graph.edges", "graph is not strongly connected"));
        }
        check_indices("agents", &self.agents, n)?;
        check_indices("costs", &self.costs, n)?;
        let mode: ControlMode = self.controller.mode.into();

        let mut plants = Vec::with_capacity(n);
        for i in 1..=n {
            let a = self.agent(i);
            let key = |k: &str| format!("agents.{i}.{k}");
            let plant = AgentPlant::new(matrix(&key("A"), &a.a)?, matrix(&key("B"), &a.b)?, matrix(&key("C"), &a.c)?)
                .map_err(|e| invalid(format!("agents.{i}"), e))?;
            plants.push(plant);
        }
        let q = plants[0].outputs();
        if let Some(i) = plants.iter().position(|p| p.outputs() != q) {
            return Err(invalid(format!("agents.{}.C", i + 1), format!("all agents must have {q} outputs")));
        }

        let mut costs = Vec::with_capacity(n);
        for i in 1..=n {
            costs.push(self.build_cost(i, q, policy)?);
        }

        let mut agents = Vec::with_capacity(n);
        for (idx, (plant, cost)) in plants.into_iter().zip(costs).enumerate() {
            let i = idx + 1;
            let a = self.agent(i);
            let key = |k: &str| format!("agents.{i}.{k}");
            let triplet = match &a.triplet {
                Some(t) => {
                    let t = SolutionTriplet::from_parts(
                        &plant,
                        matrix(&key("triplet.Upsilon"), &t.upsilon)?,
                        matrix(&key("triplet.Phi"), &t.phi)?,
                        matrix(&key("triplet.Psi"), &t.psi)?,
                    )
                    .map_err(|e| invalid(key("triplet"), e))?;
                    if t.residual > policy.triplet_residual_max {
                        return Err(invalid(key("triplet"), format!("residual {:e} is too large", t.residual)));
                    }
                    t
                }
                None => solve_regulation_equations(&plant, policy).map_err(|e| invalid(key("A"), e))?,
            };
            let k = match &a.k {
                Some(k) => matrix(&key("K"), k)?,
                None => synthesize_stabilizing_gain(plant.a(), plant.b(), policy).map_err(|e| invalid(key("K"), e))?,
            };
            let h = match (&a.h, mode) {
                (Some(h), _) => Some(matrix(&key("H"), h)?),
                (None, ControlMode::Output) => {
                    Some(synthesize_observer_gain(plant.a(), plant.c(), policy).map_err(|e| invalid(key("H"), e))?)
                }
                (None, ControlMode::State) => None,
            };
            let gains = validate_gains(&plant, k, h, policy).map_err(|e| invalid(key("K/H"), e))?;
            agents.push(AgentController {
                plant,
                triplet,
                gains,
                cost,
            });
        }

        let sim = &self.simulation;
        let dims: Vec<usize> = agents.iter().map(|a| a.plant.states()).collect();
        let mut initial = InitialConditions::random(sim.seed, &dims, q);
        for i in 1..=n {
            let a = self.agent(i);
            let key = |k: &str| format!("agents.{i}.{k}");
            if let Some(v0) = &a.v0 {
                if v0.len() != q || v0.iter().any(|x| *x != 0.0) {
                    return Err(invalid(key("v0"), "must be omitted or zero"));
                }
            }
            if let Some(x0) = &a.x0 {
                initial.x0[i - 1] = vector(&key("x0"), x0, dims[i - 1])?;
            }
            if let Some(xh) = &a.xhat0 {
                initial.xhat0[i - 1] = vector(&key("xhat0"), xh, dims[i - 1])?;
            }
            if let Some(r) = &a.rho0 {
                initial.rho0[i - 1] = vector(&key("rho0"), r, q)?;
            }
        }

        let gains = self.coupling_gains(&graph, &agents, mode, policy)?;

        if !(sim.step > 0.0 && sim.step.is_finite()) {
            return Err(invalid("simulation.step", "must be positive"));
        }
        if !(sim.horizon >= sim.step && sim.horizon.is_finite()) {
            return Err(invalid("simulation.horizon", "must be finite and at least one step"));
        }
        if sim.stride == 0 {
            return Err(invalid("simulation.stride", "must be at least 1"));
        }
        if !(sim.tolerance > 0.0) {
            return Err(invalid("simulation.tolerance", "must be positive"));
        }
        if !(sim.settling_epsilon > 0.0) {
            return Err(invalid("simulation.settling_epsilon", "must be positive"));
        }
        let reference_optimum = match &self.reference_optimum {
            Some(r) => Some(vector("reference_optimum", r, q)?),
            None => None,
        };

        let scenario = Scenario {
            name: self.name.clone(),
            graph,
            agents,
            gains,
            mode,
            horizon: sim.horizon,
            step: sim.step,
            stride: sim.stride,
            seed: sim.seed,
            tolerance: sim.tolerance,
            initial,
        };
        scenario.validate().map_err(|e| invalid("scenario", e))?;
        Ok(BuiltScenario {
            scenario,
            reference_optimum,
            settling_epsilon: sim.settling_epsilon,
            file: self.clone(),
        })
    }

    fn build_cost(&self, i: usize, q: usize, policy: &NumericPolicy) -> Result<CostFunction, ScenarioError> {
        let c = self.cost(i);
        let key = |k: &str| format!("costs.{i}.{k}");
        match (&c.expr, &c.quadratic) {
            (Some(expr), None) => {
                if q != 1 {
                    return Err(invalid(key("expr"), "expression costs need scalar outputs; use quadratic"));
                }
                let domain = c.domain_box.unwrap_or(DEFAULT_BOX);
                let samples = c.samples.unwrap_or(DEFAULT_SAMPLES);
                CostFunction::parse(expr, domain, samples, policy).map_err(|e| invalid(key("expr"), e))
            }
            (None, Some(quad)) => {
                let qm = matrix(&key("quadratic.Q"), &quad.q)?;
                let b = vector(&key("quadratic.b"), &quad.b, qm.nrows())?;
                if qm.nrows() != q {
                    return Err(invalid(key("quadratic.Q"), format!("must be {q}x{q}")));
                }
                CostFunction::quadratic(qm, b, quad.c).map_err(|e| invalid(key("quadratic"), e))
            }
            _ => Err(invalid(format!("costs.{i}"), "exactly one of expr or quadratic is required")),
        }
    }

    fn coupling_gains(
        &self,
        graph: &crate::netgraph::Digraph,
        agents: &[AgentController],
        mode: ControlMode,
        policy: &NumericPolicy,
    ) -> Result<CouplingGains, ScenarioError> {
        let ctl = &self.controller;
        if ctl.auto_gains {
            let inputs = gain_inputs(graph, agents, policy).map_err(|e| invalid("controller.auto_gains", e))?;
            if inputs.m < policy.m_floor {
                return Err(invalid(
                    "controller.auto_gains",
                    format!("needs strongly convex costs, estimated m = {:e}", inputs.m),
                ));
            }
            let s = suggest_gains(&inputs, mode).map_err(|e| invalid("controller.auto_gains", e))?;
            return CouplingGains::new(s.gamma1, s.gamma2).map_err(|e| invalid("controller.auto_gains", e));
        }
        let g1 = ctl.gamma1.ok_or_else(|| invalid("controller.gamma1", "missing (or set auto_gains = true)"))?;
        let g2 = ctl.gamma2.ok_or_else(|| invalid("controller.gamma2", "missing (or set auto_gains = true)"))?;
        CouplingGains::new(g1, g2).map_err(|e| invalid("controller", e))
    }
}

/// Worst-case constants over all agents: smallest `m`, largest `M`, and the
/// largest `σ_max(C_i)`, which is the 2-norm of the block-diagonal `C`.
pub fn gain_inputs(
    graph: &crate::netgraph::Digraph,
    agents: &[AgentController],
    policy: &NumericPolicy,
) -> Result<GainCheckInputs, crate::netgraph::GraphError> {
    let spectral = graph.spectral_info(policy)?;
    let m = agents.iter().map(|a| a.cost.constants().m).fold(f64::INFINITY, f64::min);
    let big_m = agents.iter().map(|a| a.cost.constants().big_m).fold(0.0, f64::max);
    let norm_c = agents.iter().map(|a| crate::linalg::norm2(a.plant.c())).fold(0.0, f64::max);
    Ok(GainCheckInputs {
        m,
        big_m,
        norm_c,
        r_min: spectral.r_min,
        lambda2: spectral.lambda2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
schema = 1
name = "pair"

[graph]
nodes = 2
edges = [[1, 2, 1.0], [2, 1, 2.0]]

[agents.1]
A = [[0.0]]
B = [[1.0]]
C = [[1.0]]

[agents.2]
A = [[0.0]]
B = [[1.0]]
C = [[1.0]]
K = [[2.0]]

[costs.1]
expr = "(y - 1)^2"

[costs.2]
quadratic = { Q = [[1.0]], b = [2.0], c = 0.0 }

[controller]
gamma1 = 4.0
gamma2 = 2.0

[simulation]
horizon = 5.0
"#;

    fn built(text: &str) -> Result<BuiltScenario, ScenarioError> {
        ScenarioFile::from_toml(text)?.build(&NumericPolicy::default())
    }

    fn key_of(err: ScenarioError) -> String {
        match err {
            ScenarioError::Validation { key, .. } => key,
            other => panic!("expected a validation error, got {other}"),
        }
    }

    #[test]
    fn small_file_builds() {
        let b = built(SMALL).unwrap();
        let s = &b.scenario;
        assert_eq!(s.agents.len(), 2);
        assert_eq!(s.mode, ControlMode::State);
        assert_eq!(s.step, DEFAULT_STEP);
        // K synthesized for agent 1 (A = 0, B = 1 gives K = 1)
        assert!((s.agents[0].gains.k[(0, 0)] - 1.0).abs() < 1e-8);
        assert_eq!(s.agents[1].gains.k[(0, 0)], 2.0);
        assert!(s.initial.x0.iter().flatten().all(|x| (-4.0..=6.0).contains(x)));
    }

    #[test]
    fn round_trip() {
        let f = ScenarioFile::from_toml(SMALL).unwrap();
        let text = f.to_toml();
        let g = ScenarioFile::from_toml(&text).unwrap();
        assert_eq!(f, g);
        let p = NumericPolicy::default();
        assert_eq!(f.build(&p).unwrap().scenario, g.build(&p).unwrap().scenario);
    }

    #[test]
    fn self_loop_names_edge() {
        let text = SMALL.replace("[[1, 2, 1.0], [2, 1, 2.0]]", "[[1, 2, 1.0], [2, 1, 2.0], [2, 2, 1.0]]");
        let err = built(&text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.starts_with("graph.edges"), "{msg}");
        assert!(msg.contains('2'), "{msg}");
    }

    #[test]
    fn unknown_key_rejected() {
        let text = SMALL.replace("horizon = 5.0", "horizon = 5.0\nhorizn = 3.0");
        let err = ScenarioFile::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("horizn"), "{err}");
    }

    #[test]
    fn nonzero_v0_rejected() {
        let text = SMALL.replace("K = [[2.0]]", "K = [[2.0]]\nv0 = [0.5]");
        assert_eq!(key_of(built(&text).unwrap_err()), "agents.2.v0");
        let ok = SMALL.replace("K = [[2.0]]", "K = [[2.0]]\nv0 = [0.0]");
        assert!(built(&ok).is_ok());
    }

    #[test]
    fn non_contiguous_indices() {
        let text = SMALL.replace("[costs.2]", "[costs.3]");
        assert_eq!(key_of(built(&text).unwrap_err()), "costs.3");
        let text = SMALL.replace("[agents.2]", "[agents.02]");
        assert_eq!(key_of(built(&text).unwrap_err()), "agents.02");
    }

    #[test]
    fn schema_version() {
        let text = SMALL.replace("schema = 1", "schema = 2");
        assert!(ScenarioFile::from_toml(&text).is_err());
    }

    #[test]
    fn both_cost_forms_rejected() {
        let text = SMALL.replace("expr = \"(y - 1)^2\"", "expr = \"(y - 1)^2\"\nquadratic = { Q = [[1.0]], b = [0.0] }");
        assert_eq!(key_of(built(&text).unwrap_err()), "costs.1");
    }

    #[test]
    fn unstable_given_gain_rejected() {
        let text = SMALL.replace("K = [[2.0]]", "K = [[-1.0]]");
        assert_eq!(key_of(built(&text).unwrap_err()), "agents.2.K/H");
    }

    #[test]
    fn bad_triplet_rejected() {
        let text = SMALL.replace(
            "K = [[2.0]]",
            "K = [[2.0]]\ntriplet = { Upsilon = [[2.0]], Phi = [[0.0]], Psi = [[1.0]] }",
        );
        assert_eq!(key_of(built(&text).unwrap_err()), "agents.2.triplet");
    }

    #[test]
    fn auto_gains() {
        let text = SMALL.replace("gamma1 = 4.0\ngamma2 = 2.0", "auto_gains = true");
        let b = built(&text).unwrap();
        assert!(b.scenario.gains.gamma1() > 0.0);
    }

    #[test]
    fn overrides() {
        let mut f = example2();
        f.apply(&Overrides {
            preset: Some("g20_8".into()),
            mode: Some(ControlMode::Output),
            seed: Some(9),
            ..Default::default()
        })
        .unwrap();
        assert_eq!((f.controller.gamma1, f.controller.gamma2), (Some(20.0), Some(8.0)));
        assert_eq!(f.controller.mode, ModeName::Output);
        assert!(f
            .apply(&Overrides {
                preset: Some("nope".into()),
                ..Default::default()
            })
            .is_err());
    }
}
