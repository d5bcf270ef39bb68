//! The two example networks, generated from their published constants.

use std::collections::BTreeMap;

use super::{
    AgentSection, ControllerSection, CostSection, GraphSection, ModeName, PresetSection, QuadraticSection,
    ScenarioFile, SimulationSection, TripletSection, DEFAULT_SETTLING_EPSILON, DEFAULT_STEP, DEFAULT_STRIDE,
    SCHEMA_VERSION,
};

pub fn builtin_names() -> &'static [&'static str] {
    &["example1", "example2"]
}

pub fn builtin(name: &str) -> Option<ScenarioFile> {
    match name {
        "example1" => Some(example1()),
        "example2" => Some(example2()),
        _ => None,
    }
}

fn rows<const R: usize, const C: usize>(m: [[f64; C]; R]) -> Vec<Vec<f64>> {
    m.iter().map(|r| r.to_vec()).collect()
}

fn column<const R: usize>(v: [f64; R]) -> Vec<Vec<f64>> {
    v.iter().map(|x| vec![*x]).collect()
}

fn indexed<T>(items: Vec<T>) -> BTreeMap<String, T> {
    items.into_iter().enumerate().map(|(i, t)| ((i + 1).to_string(), t)).collect()
}

/// RLC circuit parameters `(R1, R2, L, C1, C2)` per agent.
const RLC: [(f64, f64, f64, f64, f64); 4] = [
    (2.0, 1.0, 3.0, 1.0, 2.0),
    (1.0, 2.0, 2.0, 3.0, 1.0),
    (0.5, 2.0, 1.0, 0.5, 3.0),
    (3.0, 0.5, 2.0, 1.0, 0.5),
];

/// Published feedback gains for the RLC agents. The first one does not
/// stabilize its circuit and is left out so that it gets synthesized.
const RLC_GAINS: [Option<[[f64; 3]; 2]>; 4] = [
    None,
    Some([[0.5, 2.0, -1.0], [-2.0, 0.0, 2.0]]),
    Some([[2.0, -1.0, -2.0], [0.0, -3.0, 3.0]]),
    Some([[-2.0, 1.0, 2.0], [0.0, -1.0, 2.0]]),
];

/// `(a, b, c)` of `a y² + b y + c`.
const RLC_COSTS: [(f64, f64, f64); 4] = [(0.2, -2.0, 1.0), (0.4, 1.0, 2.0), (0.6, -3.0, -1.0), (0.8, 1.0, 1.0)];

fn rlc_agent((r1, r2, l, c1, c2): (f64, f64, f64, f64, f64), k: Option<[[f64; 3]; 2]>) -> AgentSection {
    AgentSection {
        a: rows([
            [-1.0 / (c1 * r1), 0.0, -1.0 / c1],
            [0.0, 0.0, 1.0 / c2],
            [1.0 / l, -1.0 / l, -r2 / l],
        ]),
        b: rows([[1.0 / (c1 * r1), 1.0 / c1], [0.0, -1.0 / c2], [0.0, 1.0 / l]]),
        c: rows([[1.0, 0.0, 0.0]]),
        k: k.map(rows),
        h: None,
        triplet: None,
        x0: None,
        xhat0: None,
        rho0: None,
        v0: None,
    }
}

/// Four RLC circuits on a 4-node digraph with quadratic costs.
pub fn example1() -> ScenarioFile {
    ScenarioFile {
        schema: SCHEMA_VERSION,
        name: "example1".into(),
        reference_optimum: Some(vec![1.5]),
        graph: GraphSection {
            nodes: 4,
            edges: vec![(3, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 4, 1.0), (4, 2, 1.0)],
        },
        agents: indexed(RLC.iter().zip(RLC_GAINS).map(|(p, k)| rlc_agent(*p, k)).collect()),
        costs: indexed(
            RLC_COSTS
                .iter()
                .map(|&(a, b, c)| CostSection {
                    quadratic: Some(QuadraticSection {
                        q: vec![vec![a]],
                        b: vec![b],
                        c,
                    }),
                    ..Default::default()
                })
                .collect(),
        ),
        controller: ControllerSection {
            mode: ModeName::State,
            gamma1: Some(8.0),
            gamma2: Some(8.0),
            auto_gains: false,
            presets: BTreeMap::new(),
        },
        simulation: SimulationSection {
            horizon: 80.0,
            step: DEFAULT_STEP,
            stride: DEFAULT_STRIDE,
            seed: 1,
            tolerance: 1e-2,
            settling_epsilon: DEFAULT_SETTLING_EPSILON,
        },
    }
}

struct PairAgent {
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    k: Vec<Vec<f64>>,
    h: Vec<Vec<f64>>,
    upsilon: Vec<Vec<f64>>,
    phi: Vec<Vec<f64>>,
    psi: Vec<Vec<f64>>,
}

fn example2_types() -> [PairAgent; 3] {
    [
        PairAgent {
            a: rows([[0.0, 1.0], [0.0, 0.0]]),
            b: rows([[0.0, 1.0], [1.0, -2.0]]),
            c: rows([[1.0, 1.0]]),
            k: rows([[3.0, 5.0], [1.5, 1.0]]),
            h: column([1.0, 2.0]),
            upsilon: column([1.5, 0.5]),
            phi: column([1.0, 0.5]),
            psi: column([0.5, 0.5]),
        },
        PairAgent {
            a: rows([[0.0, -1.0], [1.0, -2.0]]),
            b: rows([[1.0, 0.0], [3.0, -1.0]]),
            c: rows([[-1.0, 1.0]]),
            k: rows([[0.75, -1.0], [1.25, -4.0]]),
            h: column([-2.0, -1.0]),
            upsilon: column([-0.5, -2.0]),
            phi: column([-0.5, 0.0]),
            psi: column([-0.5, 0.5]),
        },
        PairAgent {
            a: rows([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.5, 1.0, -2.0]]),
            b: rows([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]]),
            c: rows([[1.0, -1.0, 1.0]]),
            k: rows([[2.167, 1.0, 0.333], [0.0, 3.0, 1.0]]),
            h: column([4.0, 3.0, 2.0]),
            upsilon: column([0.0, -1.0]),
            phi: column([-1.0, 0.0]),
            psi: column([0.0, -1.0, 0.0]),
        },
    ]
}

const EXAMPLE2_COSTS: [&str; 6] = [
    "sin(0.2*y - pi/2)",
    "0.2*cos(ln(y^2 + 4) - 0.2)",
    "0.1*(y + 0.3)^2 + 0.2*(y - 2)^2",
    "0.4*y^2*ln(5 + y^2)",
    "0.2*y^2*(ln(y^2 + 1) + 1)",
    "0.3*y^2/sqrt(y^2 + 5)",
];

pub const EXAMPLE2_PRESETS: [(&str, f64, f64); 3] = [("g8_1", 8.0, 1.0), ("g8_8", 8.0, 8.0), ("g20_8", 20.0, 8.0)];

/// Six agents of three types (two of each) on an unbalanced 6-node digraph.
pub fn example2() -> ScenarioFile {
    let agents = example2_types()
        .into_iter()
        .flat_map(|t| {
            let section = AgentSection {
                a: t.a,
                b: t.b,
                c: t.c,
                k: Some(t.k),
                h: Some(t.h),
                triplet: Some(TripletSection {
                    upsilon: t.upsilon,
                    phi: t.phi,
                    psi: t.psi,
                }),
                x0: None,
                xhat0: None,
                rho0: None,
                v0: None,
            };
            [section.clone(), section]
        })
        .collect();
    ScenarioFile {
        schema: SCHEMA_VERSION,
        name: "example2".into(),
        reference_optimum: Some(vec![0.286]),
        graph: GraphSection {
            nodes: 6,
            edges: vec![
                (1, 3, 1.0),
                (2, 1, 1.0),
                (2, 4, 1.0),
                (3, 2, 1.0),
                (4, 5, 1.0),
                (5, 6, 1.0),
                (6, 3, 1.0),
            ],
        },
        agents: indexed(agents),
        costs: indexed(
            EXAMPLE2_COSTS
                .iter()
                .map(|e| CostSection {
                    expr: Some(e.to_string()),
                    ..Default::default()
                })
                .collect(),
        ),
        controller: ControllerSection {
            mode: ModeName::State,
            gamma1: Some(8.0),
            gamma2: Some(1.0),
            auto_gains: false,
            presets: EXAMPLE2_PRESETS
                .iter()
                .map(|&(n, g1, g2)| (n.to_string(), PresetSection { gamma1: g1, gamma2: g2 }))
                .collect(),
        },
        simulation: SimulationSection {
            horizon: 40.0,
            step: DEFAULT_STEP,
            stride: DEFAULT_STRIDE,
            seed: 1,
            tolerance: 5e-3,
            settling_epsilon: DEFAULT_SETTLING_EPSILON,
        },
    }
}
