//! Library side of the `oocsim` binary: running scenarios, writing the CSV
//! and reports, and the inspection subcommands.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::controller::{check_gain_conditions, suggest_gains, ControlMode, GainCheck};
use crate::costmodel::{centralized_minimizer, CostError, Provenance};
use crate::plantmodel::{check_regulation_rank, solve_regulation_equations};
use crate::policy::NumericPolicy;
use crate::scenario::{gain_inputs, BuiltScenario, Overrides, ScenarioError, ScenarioFile};
use crate::simulator::{compute_metrics, ClosedLoop, Metrics, Scenario, SimError, Trajectory};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("simulation failed: {0}")]
    Simulation(#[from] SimError),
    #[error("oracle failed: {0}")]
    Oracle(#[from] CostError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// A finished simulation with everything derived from it.
#[derive(Debug, Clone)]
pub struct Execution {
    pub trajectory: Trajectory,
    pub metrics: Metrics,
    pub y_star: DVector<f64>,
    pub gain_check: GainCheck,
    pub dimension: usize,
    pub outputs_per_sample: Vec<Vec<DVector<f64>>>,
    pub wall_clock: f64,
}

impl Execution {
    pub fn converged(&self, tolerance: f64) -> bool {
        self.metrics.final_output_error <= tolerance
    }
}

/// Gain conditions for the scenario's own `(γ₁, γ₂)`. Costs whose sampled
/// strong-convexity constant is below the floor make the check inapplicable.
pub fn scenario_gain_check(scenario: &Scenario, gamma1: f64, gamma2: f64, policy: &NumericPolicy) -> GainCheck {
    let inputs = match gain_inputs(&scenario.graph, &scenario.agents, policy) {
        Ok(i) => i,
        Err(e) => {
            return GainCheck {
                feasible: false,
                delta: None,
                margins: None,
                advisory: Some(e.to_string()),
            }
        }
    };
    if inputs.m < policy.m_floor {
        let weak: Vec<String> = scenario
            .agents
            .iter()
            .enumerate()
            .filter(|(_, a)| a.cost.constants().m < policy.m_floor)
            .map(|(i, _)| (i + 1).to_string())
            .collect();
        return GainCheck {
            feasible: false,
            delta: None,
            margins: None,
            advisory: Some(format!(
                "m = {:.4e} is below the floor {:e}: costs of agents {} are not strongly convex on their sampling box, so the sufficient conditions do not apply (simulation may still converge)",
                inputs.m,
                policy.m_floor,
                weak.join(",")
            )),
        };
    }
    check_gain_conditions(&inputs, gamma1, gamma2, scenario.mode)
}

pub fn execute(built: &BuiltScenario, policy: &NumericPolicy) -> Result<Execution, RunError> {
    let scenario = &built.scenario;
    let costs: Vec<_> = scenario.agents.iter().map(|a| a.cost.clone()).collect();
    let y_star = centralized_minimizer(&costs)?;
    let gain_check = scenario_gain_check(scenario, scenario.gains.gamma1(), scenario.gains.gamma2(), policy);
    let cl = ClosedLoop::assemble(scenario, policy)?;
    let start = Instant::now();
    let trajectory = cl.simulate()?;
    let wall_clock = start.elapsed().as_secs_f64();
    let metrics = compute_metrics(&cl, &trajectory, &y_star, built.settling_epsilon);
    let outputs_per_sample = trajectory.states.iter().map(|s| cl.outputs(s)).collect();
    Ok(Execution {
        dimension: cl.dimension(),
        trajectory,
        metrics,
        y_star,
        gain_check,
        outputs_per_sample,
        wall_clock,
    })
}

/// `t, y_<agent>_<component>..., err` with `err = ‖Y(t) − 1⊗y*‖`.
pub fn trajectory_csv(exec: &Execution) -> String {
    let agents = exec.outputs_per_sample.first().map_or(0, Vec::len);
    let q = exec.y_star.len();
    let mut out = String::from("t");
    for i in 1..=agents {
        for k in 1..=q {
            write!(out, ",y_{i}_{k}").unwrap();
        }
    }
    out.push_str(",err\n");
    for (t, ys) in exec.trajectory.times.iter().zip(&exec.outputs_per_sample) {
        write!(out, "{}", num(*t)).unwrap();
        let mut sq = 0.0;
        for y in ys {
            for (v, s) in y.iter().zip(exec.y_star.iter()) {
                write!(out, ",{}", num(*v)).unwrap();
                sq += (v - s).powi(2);
            }
        }
        writeln!(out, ",{}", num(sq.sqrt())).unwrap();
    }
    out
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub name: String,
    pub mode: ControlMode,
    pub gamma1: f64,
    pub gamma2: f64,
    pub horizon: f64,
    pub step: f64,
    pub stride: usize,
    pub seed: u64,
    pub tolerance: f64,
    pub dimension: usize,
    pub y_star: DVector<f64>,
    pub reference_optimum: Option<DVector<f64>>,
    pub reference_mismatch: Option<bool>,
    pub metrics: Metrics,
    pub gain_check: GainCheck,
    pub converged: bool,
    pub wall_clock: f64,
    pub config: String,
}

/// Shortest round-trip text; exponent form for very small or large values.
fn num(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || (1e-4..1e16).contains(&a) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn list(v: &DVector<f64>) -> String {
    v.iter().map(|x| num(*x)).collect::<Vec<_>>().join(",")
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(|| "none".to_string(), |x| x.to_string())
}

impl RunReport {
    pub fn new(built: &BuiltScenario, exec: &Execution) -> Self {
        let s = &built.scenario;
        let reference_mismatch = built
            .reference_optimum
            .as_ref()
            .map(|r| (r - &exec.y_star).norm() > s.tolerance);
        Self {
            name: s.name.clone(),
            mode: s.mode,
            gamma1: s.gains.gamma1(),
            gamma2: s.gains.gamma2(),
            horizon: s.horizon,
            step: s.step,
            stride: s.stride,
            seed: s.seed,
            tolerance: s.tolerance,
            dimension: exec.dimension,
            y_star: exec.y_star.clone(),
            reference_optimum: built.reference_optimum.clone(),
            reference_mismatch,
            metrics: exec.metrics.clone(),
            gain_check: exec.gain_check.clone(),
            converged: exec.converged(s.tolerance),
            wall_clock: exec.wall_clock,
            config: built.file.to_toml(),
        }
    }

    /// Flat `key = value` lines, one number per key.
    pub fn to_kv(&self) -> String {
        let m = &self.metrics;
        let g = &self.gain_check;
        let mut kv: Vec<(String, String)> = vec![
            ("name".into(), self.name.clone()),
            ("version".into(), VERSION.into()),
            ("mode".into(), self.mode.as_str().into()),
            ("gamma1".into(), self.gamma1.to_string()),
            ("gamma2".into(), self.gamma2.to_string()),
            ("horizon".into(), self.horizon.to_string()),
            ("step".into(), self.step.to_string()),
            ("stride".into(), self.stride.to_string()),
            ("seed".into(), self.seed.to_string()),
            ("tolerance".into(), self.tolerance.to_string()),
            ("state_dimension".into(), self.dimension.to_string()),
            ("y_star".into(), list(&self.y_star)),
            ("reference_optimum".into(), opt(self.reference_optimum.as_ref().map(list))),
            ("reference_mismatch".into(), opt(self.reference_mismatch)),
            ("converged".into(), self.converged.to_string()),
            ("final_output_error".into(), num(m.final_output_error)),
            ("settling_epsilon".into(), m.settling_epsilon.to_string()),
            ("settling_time".into(), opt(m.settling_time.map(num))),
            ("fitted_rate".into(), opt(m.output_fit.map(|f| num(f.slope)))),
            ("fit_r2".into(), opt(m.output_fit.map(|f| num(f.r2)))),
            ("fit_samples".into(), opt(m.output_fit.map(|f| f.samples))),
            ("rv_drift".into(), num(m.rv_drift)),
            ("rz_drift".into(), num(m.rz_drift)),
            ("z_positivity_min".into(), num(m.z_positivity_min)),
            ("z_eigvec_error".into(), num(m.z_eigvec_error)),
            ("z_fitted_rate".into(), opt(m.z_fit.map(|f| num(f.slope)))),
            ("z_fit_r2".into(), opt(m.z_fit.map(|f| num(f.r2)))),
            ("observer_error_final".into(), opt(m.observer_error_final.map(num))),
            ("optimality_residual".into(), num(m.optimality_residual)),
            ("gain_check_feasible".into(), g.feasible.to_string()),
            ("gain_check_delta".into(), opt(g.delta.map(num))),
            ("gain_margin_convexity".into(), opt(g.margins.map(|x| num(x.convexity)))),
            ("gain_margin_damping".into(), opt(g.margins.map(|x| num(x.damping)))),
            ("gain_margin_coupling".into(), opt(g.margins.map(|x| num(x.coupling)))),
            ("wall_clock_s".into(), format!("{:.3}", self.wall_clock)),
            ("config".into(), "scenario.toml".into()),
        ];
        if let Some(a) = &g.advisory {
            kv.push(("gain_check_advisory".into(), format!("{a:?}")));
        }
        kv.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn to_text(&self) -> String {
        let m = &self.metrics;
        let mut s = String::new();
        let _ = writeln!(s, "oocsim {} run report: {}", VERSION, self.name);
        let _ = writeln!(
            s,
            "  controller        {} feedback, gamma1 = {}, gamma2 = {}",
            self.mode.as_str(),
            self.gamma1,
            self.gamma2
        );
        let _ = writeln!(
            s,
            "  integration       RK4, h = {}, T = {}, stride {}, seed {}, {} states",
            self.step, self.horizon, self.stride, self.seed, self.dimension
        );
        let _ = writeln!(s, "  oracle y*         [{}]", list(&self.y_star));
        if let Some(r) = &self.reference_optimum {
            let flag = if self.reference_mismatch == Some(true) {
                "MISMATCH with oracle"
            } else {
                "agrees with oracle"
            };
            let _ = writeln!(s, "  reference y*      [{}] ({flag})", list(r));
        }
        let verdict = if self.converged { "converged" } else { "NOT converged" };
        let _ = writeln!(
            s,
            "  final error       {:.3e} ({verdict}, tolerance {:e})",
            m.final_output_error, self.tolerance
        );
        let _ = writeln!(
            s,
            "  settling time     {} (epsilon {:e})",
            m.settling_time.map_or("not reached".into(), |t| format!("{t:.2} s")),
            m.settling_epsilon
        );
        match m.output_fit {
            Some(f) => {
                let _ = writeln!(s, "  decay fit         rate {:.4} 1/s, R^2 {:.4} over {} samples", f.slope, f.r2, f.samples);
            }
            None => {
                let _ = writeln!(s, "  decay fit         window too short");
            }
        }
        let _ = writeln!(s, "  optimality        |sum grad f_i(y_i(T))| = {:.3e}", m.optimality_residual);
        let _ = writeln!(s, "  conservation      rv drift {:.3e}, rz drift {:.3e}", m.rv_drift, m.rz_drift);
        let _ = writeln!(
            s,
            "  eigenvector est.  |z(T) - 1 (x) r| = {:.3e}, min z_i^i = {:.4}",
            m.z_eigvec_error, m.z_positivity_min
        );
        if let Some(e) = m.observer_error_final {
            let _ = writeln!(s, "  observer error    {e:.3e}");
        }
        let g = &self.gain_check;
        let _ = writeln!(s, "  gain conditions   {}", if g.feasible { "satisfied" } else { "not certified" });
        if let (Some(d), Some(mg)) = (g.delta, g.margins) {
            let _ = writeln!(
                s,
                "                    delta {:.4}, margins {:.4} / {:.4} / {:.4}",
                d, mg.convexity, mg.damping, mg.coupling
            );
        }
        if let Some(a) = &g.advisory {
            let _ = writeln!(s, "                    {a}");
        }
        let _ = writeln!(s, "  wall clock        {:.2} s", self.wall_clock);
        let _ = writeln!(s, "\n# scenario\n{}", self.config);
        s
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), RunError> {
    std::fs::write(path, contents).map_err(|source| RunError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Simulates and writes `trajectory.csv`, `report.txt`, `report.kv` and
/// `scenario.toml` into `out_dir`. Nothing is written if the run fails.
pub fn run(built: &BuiltScenario, out_dir: &Path, policy: &NumericPolicy) -> Result<RunReport, RunError> {
    let exec = execute(built, policy)?;
    let report = RunReport::new(built, &exec);
    let csv = trajectory_csv(&exec);
    std::fs::create_dir_all(out_dir).map_err(|source| RunError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    write_file(&out_dir.join("trajectory.csv"), &csv)?;
    write_file(&out_dir.join("report.txt"), &report.to_text())?;
    write_file(&out_dir.join("report.kv"), &report.to_kv())?;
    write_file(&out_dir.join("scenario.toml"), &report.config)?;
    Ok(report)
}

fn fmt_matrix(m: &DMatrix<f64>) -> String {
    let rows: Vec<String> = (0..m.nrows())
        .map(|i| {
            let r: Vec<String> = m.row(i).iter().map(|x| format!("{:.6}", clean(*x))).collect();
            format!("[{}]", r.join(", "))
        })
        .collect();
    format!("[{}]", rows.join(", "))
}

fn clean(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        0.0
    } else {
        x
    }
}

pub fn graph_info(file: &ScenarioFile, policy: &NumericPolicy) -> Result<String, RunError> {
    let graph = crate::netgraph::Digraph::from_edges(file.graph.nodes, &file.graph.edges).map_err(|e| {
        ScenarioError::Validation {
            key: "graph.edges".into(),
            message: e.to_string(),
        }
    })?;
    let mut s = String::new();
    let _ = writeln!(s, "graph of {}: {} nodes, {} edges", file.name, graph.node_count(), graph.edges().len());
    for (src, dst, w) in graph.edges() {
        let _ = writeln!(s, "  {src} -> {dst}  weight {w}");
    }
    let _ = writeln!(s, "strongly connected: {}", graph.is_strongly_connected());
    let _ = writeln!(s, "laplacian: {}", fmt_matrix(&graph.laplacian()));
    match graph.spectral_info(policy) {
        Ok(info) => {
            let r: Vec<String> = info.r.iter().map(|x| format!("{x:.6}")).collect();
            let _ = writeln!(s, "left null vector r: [{}]", r.join(", "));
            let _ = writeln!(s, "r_min: {:.6}", info.r_min);
            let _ = writeln!(s, "lambda2: {:.6}", info.lambda2);
            let ev: Vec<String> = info.sym_eigenvalues.iter().map(|x| format!("{:.6}", clean(*x))).collect();
            let _ = writeln!(s, "symmetrized spectrum: [{}]", ev.join(", "));
        }
        Err(e) => {
            let _ = writeln!(s, "spectral data unavailable: {e}");
        }
    }
    Ok(s)
}

pub fn solve_triplets(built: &BuiltScenario, policy: &NumericPolicy) -> String {
    let mut s = String::new();
    for (i, a) in built.scenario.agents.iter().enumerate() {
        let rank = check_regulation_rank(&a.plant, policy);
        let _ = writeln!(
            s,
            "agent {}: rank {} of {} required ({})",
            i + 1,
            rank.rank,
            rank.required,
            if rank.ok { "solvable" } else { "rank deficient" }
        );
        let source = if built.file.agents[&(i + 1).to_string()].triplet.is_some() {
            "given"
        } else {
            "solved"
        };
        let t = &a.triplet;
        let _ = writeln!(s, "  Upsilon = {}", fmt_matrix(&t.upsilon));
        let _ = writeln!(s, "  Phi     = {}", fmt_matrix(&t.phi));
        let _ = writeln!(s, "  Psi     = {}", fmt_matrix(&t.psi));
        let r = t.residuals(&a.plant);
        let _ = writeln!(
            s,
            "  {source}; residuals C Psi - I {:.2e}, B Phi - A Psi {:.2e}, B Upsilon - Psi {:.2e}",
            r.output, r.drift, r.input
        );
        if source == "given" {
            if let Ok(own) = solve_regulation_equations(&a.plant, policy) {
                let _ = writeln!(s, "  minimum-norm solution Psi = {}", fmt_matrix(&own.psi));
            }
        }
    }
    s
}

pub fn check_gains(built: &BuiltScenario, policy: &NumericPolicy) -> Result<String, RunError> {
    let sc = &built.scenario;
    let inputs = gain_inputs(&sc.graph, &sc.agents, policy).map_err(|e| ScenarioError::Validation {
        key: "graph.edges".into(),
        message: e.to_string(),
    })?;
    let mut s = String::new();
    let _ = writeln!(s, "constants for {} ({} feedback)", sc.name, sc.mode.as_str());
    for (i, a) in sc.agents.iter().enumerate() {
        let c = a.cost.constants();
        let tag = match c.provenance {
            Provenance::Analytic => "analytic",
            Provenance::Estimated => "sampled",
            Provenance::NonConvex => "sampled, NOT convex on box",
        };
        let _ = writeln!(s, "  cost {}: m = {:.6}, M = {:.6} ({tag})", i + 1, c.m, c.big_m);
    }
    let _ = writeln!(
        s,
        "  m = {:.6}, M = {:.6}, |C| = {:.6}, r_min = {:.6}, lambda2 = {:.6}",
        inputs.m, inputs.big_m, inputs.norm_c, inputs.r_min, inputs.lambda2
    );
    let mut candidates = vec![("current".to_string(), sc.gains.gamma1(), sc.gains.gamma2())];
    for (name, p) in &built.file.controller.presets {
        candidates.push((name.clone(), p.gamma1, p.gamma2));
    }
    for (name, g1, g2) in candidates {
        let c = scenario_gain_check(sc, g1, g2, policy);
        let _ = write!(
            s,
            "{name}: gamma1 = {g1}, gamma2 = {g2}: {}",
            if c.feasible { "feasible" } else { "infeasible" }
        );
        if let (Some(d), Some(m)) = (c.delta, c.margins) {
            let _ = write!(
                s,
                " (delta {:.4}; margins {:.4}, {:.4}, {:.4})",
                d, m.convexity, m.damping, m.coupling
            );
        }
        let _ = writeln!(s);
        if let Some(a) = c.advisory {
            let _ = writeln!(s, "  {a}");
        }
    }
    if inputs.m >= policy.m_floor {
        if let Ok(g) = suggest_gains(&inputs, sc.mode) {
            let _ = writeln!(
                s,
                "suggested: delta = {:.6}, gamma1 = {:.6}, gamma2 = {:.6}",
                g.delta, g.gamma1, g.gamma2
            );
        }
    }
    Ok(s)
}

pub fn oracle(built: &BuiltScenario) -> Result<String, RunError> {
    let costs: Vec<_> = built.scenario.agents.iter().map(|a| a.cost.clone()).collect();
    let y = centralized_minimizer(&costs)?;
    let grad = costs.iter().try_fold(DVector::zeros(y.len()), |acc, c| c.gradient(&y).map(|g| acc + g))?;
    let mut s = String::new();
    let _ = writeln!(s, "y* = [{}]", list(&y));
    let _ = writeln!(s, "|sum grad f_i(y*)| = {:.3e}", grad.norm());
    if let Some(r) = &built.reference_optimum {
        let gap = (r - &y).norm();
        let _ = writeln!(
            s,
            "reference [{}]: gap {:.3e} ({})",
            list(r),
            gap,
            if gap > built.scenario.tolerance { "MISMATCH" } else { "agrees" }
        );
    }
    Ok(s)
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub preset: String,
    pub gamma1: f64,
    pub gamma2: f64,
    pub result: Result<(Metrics, bool), String>,
}

/// Runs every preset of the file in parallel.
pub fn sweep(file: &ScenarioFile, overrides: &Overrides, policy: &NumericPolicy) -> Result<Vec<SweepRow>, RunError> {
    if file.controller.presets.is_empty() {
        return Err(ScenarioError::Validation {
            key: "controller.presets".into(),
            message: "sweep needs at least one preset".into(),
        }
        .into());
    }
    let mut jobs = Vec::new();
    for (name, p) in &file.controller.presets {
        let mut f = file.clone();
        f.apply(&Overrides {
            preset: Some(name.clone()),
            ..overrides.clone()
        })?;
        jobs.push((name.clone(), p.gamma1, p.gamma2, f.build(policy)?));
    }
    // presets in increasing gain order
    jobs.sort_by(|a, b| (a.1, a.2).partial_cmp(&(b.1, b.2)).unwrap_or(std::cmp::Ordering::Equal));
    let rows = std::thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|(name, g1, g2, built)| {
                scope.spawn(move || SweepRow {
                    preset: name.clone(),
                    gamma1: *g1,
                    gamma2: *g2,
                    result: execute(built, policy)
                        .map(|e| {
                            let ok = e.converged(built.scenario.tolerance);
                            (e.metrics, ok)
                        })
                        .map_err(|e| e.to_string()),
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
    });
    Ok(rows)
}

pub fn sweep_table(rows: &[SweepRow]) -> String {
    let mut s = String::from("preset      gamma1  gamma2  settling_s  final_error  converged\n");
    for r in rows {
        match &r.result {
            Ok((m, ok)) => {
                let _ = writeln!(
                    s,
                    "{:<10}  {:>6}  {:>6}  {:>10}  {:>11.3e}  {}",
                    r.preset,
                    r.gamma1,
                    r.gamma2,
                    m.settling_time.map_or("-".into(), |t| format!("{t:.2}")),
                    m.final_output_error,
                    ok
                );
            }
            Err(e) => {
                let _ = writeln!(s, "{:<10}  {:>6}  {:>6}  error: {e}", r.preset, r.gamma1, r.gamma2);
            }
        }
    }
    s
}
