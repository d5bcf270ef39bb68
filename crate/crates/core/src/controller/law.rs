use nalgebra::DVector;

use super::{ControlMode, ControllerError, ControllerState, CouplingGains};
use crate::costmodel::CostFunction;
use crate::plantmodel::{AgentPlant, GainSet, SolutionTriplet};
use crate::policy::NumericPolicy;

/// Everything agent `i` knows about itself.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentController {
    pub plant: AgentPlant,
    pub triplet: SolutionTriplet,
    pub gains: GainSet,
    pub cost: CostFunction,
}

/// What in-neighbor `j` transmits, tagged with the edge weight `a_ij`.
#[derive(Debug, Clone, Copy)]
pub struct NeighborMessage<'a> {
    pub weight: f64,
    pub output: &'a DVector<f64>,
    pub z: &'a DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateFeedbackRates {
    pub u: DVector<f64>,
    pub drho: DVector<f64>,
    pub dv: DVector<f64>,
    pub dz: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputFeedbackRates {
    pub u: DVector<f64>,
    pub dxhat: DVector<f64>,
    pub drho: DVector<f64>,
    pub dv: DVector<f64>,
    pub dz: DVector<f64>,
}

/// Configured initial values for one agent. `v0`, when given, must be zero.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AgentInit {
    pub rho0: Option<DVector<f64>>,
    pub v0: Option<DVector<f64>>,
    pub xhat0: Option<DVector<f64>>,
}

/// `v_i(0) = 0`, `z_i(0) = e_i`; `ρ_i(0)` and `x̂_i(0)` from `inits`
/// (zero when absent). `x̂` is only allocated in output mode.
pub fn init_controller_states(
    agents: usize,
    q: usize,
    agent_states: &[usize],
    mode: ControlMode,
    inits: &[AgentInit],
) -> Result<Vec<ControllerState>, ControllerError> {
    if agent_states.len() != agents || inits.len() > agents {
        return Err(ControllerError::Dimension(format!(
            "{agents} agents but {} state dimensions and {} initial records",
            agent_states.len(),
            inits.len()
        )));
    }
    let blank = AgentInit::default();
    (0..agents)
        .map(|i| {
            let init = inits.get(i).unwrap_or(&blank);
            if let Some(v0) = &init.v0 {
                if v0.iter().any(|x| *x != 0.0) {
                    return Err(ControllerError::ConfigOverridesV0 { agent: i + 1 });
                }
            }
            let rho = match &init.rho0 {
                Some(r) if r.len() != q => {
                    return Err(ControllerError::Dimension(format!(
                        "agent {}: rho0 has length {}, expected {q}",
                        i + 1,
                        r.len()
                    )))
                }
                Some(r) => r.clone(),
                None => DVector::zeros(q),
            };
            let xhat = match mode {
                ControlMode::State => None,
                ControlMode::Output => Some(match &init.xhat0 {
                    Some(x) if x.len() != agent_states[i] => {
                        return Err(ControllerError::Dimension(format!(
                            "agent {}: xhat0 has length {}, expected {}",
                            i + 1,
                            x.len(),
                            agent_states[i]
                        )))
                    }
                    Some(x) => x.clone(),
                    None => DVector::zeros(agent_states[i]),
                }),
            };
            let mut z = DVector::zeros(agents);
            z[i] = 1.0;
            Ok(ControllerState {
                rho,
                v: DVector::zeros(q),
                z,
                xhat,
            })
        })
        .collect()
}

struct ConsensusRates {
    omega: DVector<f64>,
    dv: DVector<f64>,
    dz: DVector<f64>,
}

fn consensus_rates(
    index: usize,
    agent: &AgentController,
    own_output: &DVector<f64>,
    neighbors: &[NeighborMessage<'_>],
    state: &ControllerState,
    gains: &CouplingGains,
    policy: &NumericPolicy,
) -> Result<ConsensusRates, ControllerError> {
    let z_own = state.z[index];
    if !(z_own > policy.z_guard) {
        return Err(ControllerError::ZGuardViolated {
            agent: index + 1,
            value: z_own,
        });
    }
    let mut disagreement = DVector::zeros(own_output.len());
    let mut dz = DVector::zeros(state.z.len());
    for msg in neighbors {
        disagreement += (own_output - msg.output) * msg.weight;
        dz -= (&state.z - msg.z) * msg.weight;
    }
    let grad = agent
        .cost
        .gradient(own_output)
        .map_err(|source| ControllerError::Cost {
            agent: index + 1,
            source,
        })?;
    let dv = &disagreement * gains.gamma1();
    let omega = -grad / z_own - &dv - &state.v * gains.gamma2();
    Ok(ConsensusRates { omega, dv, dz })
}

/// `u = −K x̃ + Υ ω − (Φ − K Ψ) ρ` with `x̃` the state or its estimate.
fn control_input(agent: &AgentController, x: &DVector<f64>, omega: &DVector<f64>, rho: &DVector<f64>) -> DVector<f64> {
    let k = &agent.gains.k;
    let t = &agent.triplet;
    -(k * x) + &t.upsilon * omega - (&t.phi - k * &t.psi) * rho
}

/// Rates of agent `index` (0-based) under state feedback.
pub fn state_feedback_derivatives(
    index: usize,
    agent: &AgentController,
    x: &DVector<f64>,
    neighbors: &[NeighborMessage<'_>],
    state: &ControllerState,
    gains: &CouplingGains,
    policy: &NumericPolicy,
) -> Result<StateFeedbackRates, ControllerError> {
    let y = agent.plant.c() * x;
    let c = consensus_rates(index, agent, &y, neighbors, state, gains, policy)?;
    let u = control_input(agent, x, &c.omega, &state.rho);
    Ok(StateFeedbackRates {
        u,
        drho: c.omega,
        dv: c.dv,
        dz: c.dz,
    })
}

/// Rates of agent `index` (0-based) under observer-based output feedback;
/// `own_output` is the measured `y_i = C_i x_i`.
pub fn output_feedback_derivatives(
    index: usize,
    agent: &AgentController,
    own_output: &DVector<f64>,
    neighbors: &[NeighborMessage<'_>],
    state: &ControllerState,
    gains: &CouplingGains,
    policy: &NumericPolicy,
) -> Result<OutputFeedbackRates, ControllerError> {
    let (Some(xhat), Some(h)) = (&state.xhat, &agent.gains.h) else {
        return Err(ControllerError::MissingObserver { agent: index + 1 });
    };
    let c = consensus_rates(index, agent, own_output, neighbors, state, gains, policy)?;
    let u = control_input(agent, xhat, &c.omega, &state.rho);
    let plant = &agent.plant;
    let dxhat = plant.a() * xhat + plant.b() * &u + h * (own_output - plant.c() * xhat);
    Ok(OutputFeedbackRates {
        u,
        dxhat,
        drho: c.omega,
        dv: c.dv,
        dz: c.dz,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costmodel::CostFunction;
    use crate::plantmodel::{solve_regulation_equations, validate_gains};
    use nalgebra::{dmatrix, dvector};

    fn integrator_agent(cost: CostFunction, h: Option<f64>) -> AgentController {
        let p = NumericPolicy::default();
        let plant = AgentPlant::new(dmatrix![0.0], dmatrix![1.0], dmatrix![1.0]).unwrap();
        let triplet = solve_regulation_equations(&plant, &p).unwrap();
        let gains = validate_gains(&plant, dmatrix![1.0], h.map(|h| dmatrix![h]), &p).unwrap();
        AgentController {
            plant,
            triplet,
            gains,
            cost,
        }
    }

    fn half_square() -> CostFunction {
        CostFunction::quadratic(dmatrix![0.5], dvector![0.0], 0.0).unwrap()
    }

    fn flat() -> CostFunction {
        // gradient 2·1e-300·y, zero to machine precision
        CostFunction::quadratic(dmatrix![1e-300], dvector![0.0], 0.0).unwrap()
    }

    #[test]
    fn init_states() {
        let s = init_controller_states(2, 1, &[1, 1], ControlMode::State, &[]).unwrap();
        assert_eq!(s[0].z, dvector![1.0, 0.0]);
        assert_eq!(s[1].z, dvector![0.0, 1.0]);
        assert!(s.iter().all(|c| c.v == dvector![0.0] && c.xhat.is_none()));

        let dims = [2, 2, 2, 2, 3, 3];
        let s = init_controller_states(6, 1, &dims, ControlMode::Output, &[]).unwrap();
        assert_eq!(s.len(), 6);
        assert!(s.iter().all(|c| c.v.iter().all(|x| *x == 0.0)));
        assert_eq!(s[4].xhat.as_ref().unwrap().len(), 3);

        let bad = AgentInit {
            v0: Some(dvector![0.3]),
            ..Default::default()
        };
        assert_eq!(
            init_controller_states(1, 1, &[1], ControlMode::State, &[bad]),
            Err(ControllerError::ConfigOverridesV0 { agent: 1 })
        );
        let zero_ok = AgentInit {
            v0: Some(dvector![0.0]),
            rho0: Some(dvector![2.5]),
            ..Default::default()
        };
        let s = init_controller_states(1, 1, &[1], ControlMode::State, &[zero_ok]).unwrap();
        assert_eq!(s[0].rho, dvector![2.5]);
    }

    #[test]
    fn equilibrium_has_zero_rates() {
        let agent = integrator_agent(flat(), None);
        let state = ControllerState {
            rho: dvector![0.0],
            v: dvector![0.0],
            z: dvector![0.5, 0.5],
            xhat: None,
        };
        let y_other = dvector![0.0];
        let z_other = dvector![0.5, 0.5];
        let msgs = [NeighborMessage {
            weight: 1.0,
            output: &y_other,
            z: &z_other,
        }];
        let gains = CouplingGains::new(3.0, 2.0).unwrap();
        let r = state_feedback_derivatives(0, &agent, &dvector![0.0], &msgs, &state, &gains, &NumericPolicy::default())
            .unwrap();
        assert_eq!(r.u, dvector![0.0]);
        assert_eq!(r.drho, dvector![0.0]);
        assert_eq!(r.dv, dvector![0.0]);
        assert_eq!(r.dz, dvector![0.0, 0.0]);
    }

    #[test]
    fn isolated_agent_substitution() {
        let agent = integrator_agent(half_square(), None);
        let state = ControllerState {
            rho: dvector![0.0],
            v: dvector![0.0],
            z: dvector![1.0],
            xhat: None,
        };
        let gains = CouplingGains::new(1.0, 1.0).unwrap();
        let r = state_feedback_derivatives(0, &agent, &dvector![1.0], &[], &state, &gains, &NumericPolicy::default())
            .unwrap();
        assert_eq!(r.drho, dvector![-1.0]);
        assert_eq!(r.dv, dvector![0.0]);
        assert_eq!(r.dz, dvector![0.0]);
    }

    #[test]
    fn symmetric_pair_disagreement() {
        let agent = integrator_agent(flat(), None);
        let gains = CouplingGains::new(1.0, 1.0).unwrap();
        let p = NumericPolicy::default();
        let (y1, y2) = (dvector![1.0], dvector![-1.0]);
        let (z1, z2) = (dvector![1.0, 0.0], dvector![0.0, 1.0]);
        let s1 = ControllerState { rho: dvector![0.0], v: dvector![0.0], z: z1.clone(), xhat: None };
        let s2 = ControllerState { rho: dvector![0.0], v: dvector![0.0], z: z2.clone(), xhat: None };
        let r1 = state_feedback_derivatives(
            0,
            &agent,
            &y1,
            &[NeighborMessage { weight: 1.0, output: &y2, z: &z2 }],
            &s1,
            &gains,
            &p,
        )
        .unwrap();
        let r2 = state_feedback_derivatives(
            1,
            &agent,
            &y2,
            &[NeighborMessage { weight: 1.0, output: &y1, z: &z1 }],
            &s2,
            &gains,
            &p,
        )
        .unwrap();
        assert_eq!(r1.dv, dvector![2.0]);
        assert_eq!(r2.dv, dvector![-2.0]);
        assert_eq!(r1.dz, dvector![-1.0, 1.0]);
    }

    #[test]
    fn z_guard() {
        let agent = integrator_agent(half_square(), None);
        let state = ControllerState { rho: dvector![0.0], v: dvector![0.0], z: dvector![0.0], xhat: None };
        let gains = CouplingGains::new(1.0, 1.0).unwrap();
        assert!(matches!(
            state_feedback_derivatives(0, &agent, &dvector![1.0], &[], &state, &gains, &NumericPolicy::default()),
            Err(ControllerError::ZGuardViolated { agent: 1, .. })
        ));
    }

    #[test]
    fn observer_matches_state_feedback_when_estimate_exact() {
        let agent = integrator_agent(half_square(), Some(2.0));
        let gains = CouplingGains::new(2.0, 1.5).unwrap();
        let p = NumericPolicy::default();
        let x = dvector![0.7];
        let state = ControllerState { rho: dvector![0.3], v: dvector![-0.2], z: dvector![0.8], xhat: Some(x.clone()) };
        let sf = state_feedback_derivatives(0, &agent, &x, &[], &state, &gains, &p).unwrap();
        let of = output_feedback_derivatives(0, &agent, &(agent.plant.c() * &x), &[], &state, &gains, &p).unwrap();
        assert_eq!(sf.u, of.u);
        assert_eq!(of.dxhat, agent.plant.a() * &x + agent.plant.b() * &sf.u);
        assert_eq!((sf.drho, sf.dv, sf.dz), (of.drho, of.dv, of.dz));
    }

    #[test]
    fn observer_innovation() {
        // A = 0, B = C = 1, H = 2, x = 1, x̂ = 0 and u = 0 (ω = 0, ρ = 0, K x̂ = 0)
        let agent = integrator_agent(flat(), Some(2.0));
        let gains = CouplingGains::new(1.0, 1.0).unwrap();
        let state = ControllerState { rho: dvector![0.0], v: dvector![0.0], z: dvector![1.0], xhat: Some(dvector![0.0]) };
        let r = output_feedback_derivatives(0, &agent, &dvector![1.0], &[], &state, &gains, &NumericPolicy::default())
            .unwrap();
        assert!(r.u[0].abs() < 1e-250);
        assert!((r.dxhat[0] - 2.0).abs() < 1e-250 + 1e-15);
    }

    #[test]
    fn missing_observer() {
        let agent = integrator_agent(flat(), None);
        let gains = CouplingGains::new(1.0, 1.0).unwrap();
        let state = ControllerState { rho: dvector![0.0], v: dvector![0.0], z: dvector![1.0], xhat: Some(dvector![0.0]) };
        assert_eq!(
            output_feedback_derivatives(0, &agent, &dvector![1.0], &[], &state, &gains, &NumericPolicy::default()),
            Err(ControllerError::MissingObserver { agent: 1 })
        );
    }

    #[test]
    fn gains_must_be_positive() {
        assert!(CouplingGains::new(0.0, 1.0).is_err());
        assert!(CouplingGains::new(1.0, -1.0).is_err());
    }
}
