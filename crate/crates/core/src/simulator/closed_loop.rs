use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::integrate::{integrate, Trajectory};
use super::SimError;
use crate::controller::{
    output_feedback_derivatives, state_feedback_derivatives, AgentController, ControlMode, ControllerState,
    CouplingGains, NeighborMessage,
};
use crate::netgraph::{Digraph, SpectralInfo};
use crate::policy::NumericPolicy;

const INIT_LOW: f64 = -4.0;
const INIT_HIGH: f64 = 6.0;

/// Resolved initial values. `v(0) = 0` and `z_i(0) = e_i` are not
/// configurable and are applied at assembly.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialConditions {
    pub x0: Vec<DVector<f64>>,
    pub rho0: Vec<DVector<f64>>,
    /// Used only with output feedback.
    pub xhat0: Vec<DVector<f64>>,
}

impl InitialConditions {
    /// `x(0)`, `ρ(0)` uniform in `[-4, 6]`, `x̂(0) = 0`. Draws go agent by
    /// agent, states first, so fixing one agent's values in a file leaves the
    /// others unchanged.
    pub fn random(seed: u64, state_dims: &[usize], q: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x0 = Vec::with_capacity(state_dims.len());
        let mut rho0 = Vec::with_capacity(state_dims.len());
        for &n in state_dims {
            x0.push(DVector::from_fn(n, |_, _| rng.random_range(INIT_LOW..=INIT_HIGH)));
            rho0.push(DVector::from_fn(q, |_, _| rng.random_range(INIT_LOW..=INIT_HIGH)));
        }
        let xhat0 = state_dims.iter().map(|&n| DVector::zeros(n)).collect();
        Self { x0, rho0, xhat0 }
    }
}

/// Everything needed for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub graph: Digraph,
    pub agents: Vec<AgentController>,
    pub gains: CouplingGains,
    pub mode: ControlMode,
    pub horizon: f64,
    pub step: f64,
    pub stride: usize,
    pub seed: u64,
    /// Convergence threshold on the final output error.
    pub tolerance: f64,
    pub initial: InitialConditions,
}

impl Scenario {
    pub fn output_dim(&self) -> usize {
        self.agents.first().map_or(0, |a| a.plant.outputs())
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let n = self.graph.node_count();
        if self.agents.len() != n {
            return Err(SimError::Invalid(format!("{} agents for a graph of {n} nodes", self.agents.len())));
        }
        if !self.graph.is_strongly_connected() {
            return Err(SimError::Invalid("graph is not strongly connected".into()));
        }
        let q = self.output_dim();
        for (i, a) in self.agents.iter().enumerate() {
            let id = i + 1;
            if a.plant.outputs() != q {
                return Err(SimError::Invalid(format!(
                    "agent {id} has {} outputs, agent 1 has {q}",
                    a.plant.outputs()
                )));
            }
            if a.cost.dim() != q {
                return Err(SimError::Invalid(format!("cost {id} has dimension {}, expected {q}", a.cost.dim())));
            }
            if self.mode == ControlMode::Output && a.gains.h.is_none() {
                return Err(SimError::Invalid(format!("agent {id} has no observer gain H")));
            }
            let ns = a.plant.states();
            let dims_ok = self.initial.x0.get(i).is_some_and(|v| v.len() == ns)
                && self.initial.rho0.get(i).is_some_and(|v| v.len() == q)
                && (self.mode == ControlMode::State || self.initial.xhat0.get(i).is_some_and(|v| v.len() == ns));
            if !dims_ok {
                return Err(SimError::Invalid(format!("agent {id}: initial condition has the wrong length")));
            }
        }
        if !(self.tolerance > 0.0) {
            return Err(SimError::Invalid(format!("tolerance must be positive, got {}", self.tolerance)));
        }
        Ok(())
    }
}

/// Column offsets of the stacked state `(x, [x̂], ρ, v, z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub agents: usize,
    pub q: usize,
    pub x: Vec<(usize, usize)>,
    pub xhat: Option<Vec<(usize, usize)>>,
    pub rho: usize,
    pub v: usize,
    pub z: usize,
    pub dim: usize,
}

impl Layout {
    fn new(state_dims: &[usize], q: usize, mode: ControlMode) -> Self {
        let agents = state_dims.len();
        let mut offset = 0;
        let mut blocks = || {
            state_dims
                .iter()
                .map(|&n| {
                    let b = (offset, n);
                    offset += n;
                    b
                })
                .collect::<Vec<_>>()
        };
        let x = blocks();
        let xhat = (mode == ControlMode::Output).then(&mut blocks);
        let rho = offset;
        let v = rho + agents * q;
        let z = v + agents * q;
        let dim = z + agents * agents;
        Self { agents, q, x, xhat, rho, v, z, dim }
    }

    pub fn x<'a>(&self, state: &'a [f64], i: usize) -> &'a [f64] {
        let (o, n) = self.x[i];
        &state[o..o + n]
    }

    pub fn xhat<'a>(&self, state: &'a [f64], i: usize) -> Option<&'a [f64]> {
        self.xhat.as_ref().map(|b| &state[b[i].0..b[i].0 + b[i].1])
    }

    pub fn rho<'a>(&self, state: &'a [f64], i: usize) -> &'a [f64] {
        &state[self.rho + i * self.q..self.rho + (i + 1) * self.q]
    }

    pub fn v<'a>(&self, state: &'a [f64], i: usize) -> &'a [f64] {
        &state[self.v + i * self.q..self.v + (i + 1) * self.q]
    }

    pub fn z<'a>(&self, state: &'a [f64], i: usize) -> &'a [f64] {
        &state[self.z + i * self.agents..self.z + (i + 1) * self.agents]
    }
}

/// The assembled closed loop. Each agent's rates come from the controller
/// module with only its in-neighbors' outputs and `z` vectors.
#[derive(Debug, Clone)]
pub struct ClosedLoop<'a> {
    scenario: &'a Scenario,
    layout: Layout,
    neighbors: Vec<Vec<(usize, f64)>>,
    spectral: SpectralInfo,
    policy: NumericPolicy,
}

impl<'a> ClosedLoop<'a> {
    pub fn assemble(scenario: &'a Scenario, policy: &NumericPolicy) -> Result<Self, SimError> {
        scenario.validate()?;
        let spectral = scenario
            .graph
            .spectral_info(policy)
            .map_err(|e| SimError::Invalid(e.to_string()))?;
        let dims: Vec<usize> = scenario.agents.iter().map(|a| a.plant.states()).collect();
        let layout = Layout::new(&dims, scenario.output_dim(), scenario.mode);
        let neighbors = (0..layout.agents).map(|i| scenario.graph.in_neighbors(i)).collect();
        if scenario.step > 0.1 / scenario.gains.gamma1() {
            log::warn!(
                "step {} exceeds 0.1/gamma1 = {}; RK4 may lose accuracy",
                scenario.step,
                0.1 / scenario.gains.gamma1()
            );
        }
        Ok(Self {
            scenario,
            layout,
            neighbors,
            spectral,
            policy: policy.clone(),
        })
    }

    pub fn scenario(&self) -> &Scenario {
        self.scenario
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn dimension(&self) -> usize {
        self.layout.dim
    }

    pub fn spectral(&self) -> &SpectralInfo {
        &self.spectral
    }

    pub fn initial_state(&self) -> Vec<f64> {
        let l = &self.layout;
        let init = &self.scenario.initial;
        let mut s = vec![0.0; l.dim];
        for i in 0..l.agents {
            let (o, n) = l.x[i];
            s[o..o + n].copy_from_slice(init.x0[i].as_slice());
            if let Some(xh) = &l.xhat {
                let (o, n) = xh[i];
                s[o..o + n].copy_from_slice(init.xhat0[i].as_slice());
            }
            let r = l.rho + i * l.q;
            s[r..r + l.q].copy_from_slice(init.rho0[i].as_slice());
            s[l.z + i * l.agents + i] = 1.0;
        }
        s
    }

    /// Measured outputs `y_i = C_i x_i`.
    pub fn outputs(&self, state: &[f64]) -> Vec<DVector<f64>> {
        self.scenario
            .agents
            .iter()
            .enumerate()
            .map(|(i, a)| a.plant.c() * DVector::from_column_slice(self.layout.x(state, i)))
            .collect()
    }

    pub fn rhs(&self, t: f64, state: &[f64], out: &mut [f64]) -> Result<(), SimError> {
        let l = &self.layout;
        let outputs = self.outputs(state);
        let zs: Vec<DVector<f64>> = (0..l.agents).map(|i| DVector::from_column_slice(l.z(state, i))).collect();
        let gains = &self.scenario.gains;
        for (i, agent) in self.scenario.agents.iter().enumerate() {
            let msgs: Vec<NeighborMessage<'_>> = self.neighbors[i]
                .iter()
                .map(|&(j, w)| NeighborMessage {
                    weight: w,
                    output: &outputs[j],
                    z: &zs[j],
                })
                .collect();
            let x = DVector::from_column_slice(l.x(state, i));
            let cs = ControllerState {
                rho: DVector::from_column_slice(l.rho(state, i)),
                v: DVector::from_column_slice(l.v(state, i)),
                z: zs[i].clone(),
                xhat: l.xhat(state, i).map(DVector::from_column_slice),
            };
            let stamp = |source| SimError::Controller { time: t, source };
            let (u, drho, dv, dz) = match self.scenario.mode {
                ControlMode::State => {
                    let r = state_feedback_derivatives(i, agent, &x, &msgs, &cs, gains, &self.policy).map_err(stamp)?;
                    (r.u, r.drho, r.dv, r.dz)
                }
                ControlMode::Output => {
                    let r = output_feedback_derivatives(i, agent, &outputs[i], &msgs, &cs, gains, &self.policy)
                        .map_err(stamp)?;
                    let (o, n) = l.xhat.as_ref().expect("output layout")[i];
                    out[o..o + n].copy_from_slice(r.dxhat.as_slice());
                    (r.u, r.drho, r.dv, r.dz)
                }
            };
            // ρ̇ enters ẋ only through u, which already carries Υ ω
            let dx = agent.plant.a() * &x + agent.plant.b() * &u;
            let (o, n) = l.x[i];
            out[o..o + n].copy_from_slice(dx.as_slice());
            let r = l.rho + i * l.q;
            out[r..r + l.q].copy_from_slice(drho.as_slice());
            let v = l.v + i * l.q;
            out[v..v + l.q].copy_from_slice(dv.as_slice());
            let z = l.z + i * l.agents;
            out[z..z + l.agents].copy_from_slice(dz.as_slice());
        }
        Ok(())
    }

    /// Integrates from the scenario's initial conditions.
    pub fn simulate(&self) -> Result<Trajectory, SimError> {
        let s = self.scenario;
        integrate(|t, y, dy| self.rhs(t, y, dy), &self.initial_state(), s.step, s.horizon, s.stride)
    }
}
