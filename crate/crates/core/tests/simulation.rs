//! Closed-loop behaviour: assembly, invariants, equilibria, locality,
//! mode consistency and the CLI contract.

use std::process::Command;

use nalgebra::DVector;

use oocsim::controller::ControlMode;
use oocsim::netgraph::Digraph;
use oocsim::scenario::{example1, example2, CostSection, Overrides, QuadraticSection, ScenarioFile};
use oocsim::simulator::{compute_metrics, integrate, ClosedLoop};
use oocsim::NumericPolicy;

fn policy() -> NumericPolicy {
    NumericPolicy::default()
}

#[test]
fn assembled_dimensions() {
    let p = policy();
    let e2 = example2().build(&p).unwrap();
    assert_eq!(ClosedLoop::assemble(&e2.scenario, &p).unwrap().dimension(), 62);
    let mut f = example2();
    f.apply(&Overrides { mode: Some(ControlMode::Output), ..Default::default() }).unwrap();
    let e2o = f.build(&p).unwrap();
    assert_eq!(ClosedLoop::assemble(&e2o.scenario, &p).unwrap().dimension(), 76);
    let e1 = example1().build(&p).unwrap();
    assert_eq!(ClosedLoop::assemble(&e1.scenario, &p).unwrap().dimension(), 36);
}

#[test]
fn z_flow_rows_approach_r() {
    // ż = −L z from each unit vector gives the rows of exp(−L t)
    let p = policy();
    let g = Digraph::from_edges(4, &[(3, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 4, 1.0), (4, 2, 1.0)]).unwrap();
    let l = g.laplacian();
    let r = g.spectral_info(&p).unwrap().r;
    for k in 0..4 {
        let mut e = vec![0.0; 4];
        e[k] = 1.0;
        // rows of exp(−Lt): integrate the transposed flow from e_k
        let lt = l.transpose();
        let tr = integrate(
            |_, z, dz| {
                let v = -(&lt * DVector::from_column_slice(z));
                dz.copy_from_slice(v.as_slice());
                Ok(())
            },
            &e,
            1e-2,
            50.0,
            100,
        )
        .unwrap();
        let row = DVector::from_column_slice(tr.last_state());
        assert!((row - &r).amax() <= 1e-6, "row {k}");
    }
}

/// Example-2 plants with costs `a_i (y − c)²`, all minimized at `c`.
fn shared_minimizer(c: f64) -> ScenarioFile {
    let mut f = example2();
    for (i, cost) in f.costs.values_mut().enumerate() {
        let a = 0.2 + 0.1 * i as f64;
        *cost = CostSection {
            quadratic: Some(QuadraticSection { q: vec![vec![a]], b: vec![-2.0 * a * c], c: a * c * c }),
            ..Default::default()
        };
    }
    f
}

#[test]
fn equilibrium_start_stays_put() {
    let p = policy();
    let ystar = 0.5;
    let mut f = shared_minimizer(ystar);
    f.simulation.horizon = 10.0;
    let probe = f.build(&p).unwrap();
    for (key, agent) in f.agents.iter_mut() {
        let idx: usize = key.parse().unwrap();
        let psi = &probe.scenario.agents[idx - 1].triplet.psi;
        agent.x0 = Some((psi * ystar).column(0).iter().copied().collect());
        agent.rho0 = Some(vec![ystar]);
    }
    let built = f.build(&p).unwrap();
    let cl = ClosedLoop::assemble(&built.scenario, &p).unwrap();
    let tr = cl.simulate().unwrap();
    let m = compute_metrics(&cl, &tr, &DVector::from_element(1, ystar), 1e-3);
    assert!(m.final_output_error <= 1e-8, "{}", m.final_output_error);
    assert_eq!(m.settling_time, Some(0.0));
}

#[test]
fn analytic_equilibrium_is_fixed_point() {
    // x = Ψ y*, ρ = y*, z_i = r, v_i = −∇f_i(y*)/(γ₂ r_i)
    let p = policy();
    for f in [example1(), example2()] {
        let built = f.build(&p).unwrap();
        let s = &built.scenario;
        let cl = ClosedLoop::assemble(s, &p).unwrap();
        let costs: Vec<_> = s.agents.iter().map(|a| a.cost.clone()).collect();
        let ystar = oocsim::costmodel::centralized_minimizer(&costs).unwrap();
        let r = cl.spectral().r.clone();
        let l = cl.layout().clone();
        let mut state = vec![0.0; l.dim];
        for (i, a) in s.agents.iter().enumerate() {
            let (o, n) = l.x[i];
            state[o..o + n].copy_from_slice((&a.triplet.psi * &ystar).as_slice());
            state[l.rho + i] = ystar[0];
            let g = a.cost.gradient(&ystar).unwrap();
            state[l.v + i] = -g[0] / (s.gains.gamma2() * r[i]);
            state[l.z + i * l.agents..l.z + (i + 1) * l.agents].copy_from_slice(r.as_slice());
        }
        let mut d = vec![0.0; l.dim];
        cl.rhs(0.0, &state, &mut d).unwrap();
        let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(norm <= 1e-8, "{}: {norm}", s.name);
    }
}

#[test]
fn locality_of_assembled_rhs() {
    // agent 1 of example 2 listens only to agent 2; perturbing agents 3..6
    // must leave its rates unchanged bit for bit
    let p = policy();
    let built = example2().build(&p).unwrap();
    let cl = ClosedLoop::assemble(&built.scenario, &p).unwrap();
    let l = cl.layout().clone();
    let base = cl.initial_state();
    let mut d0 = vec![0.0; l.dim];
    cl.rhs(0.0, &base, &mut d0).unwrap();

    let own = |d: &[f64]| -> Vec<f64> {
        let (o, n) = l.x[0];
        let mut v = d[o..o + n].to_vec();
        v.push(d[l.rho]);
        v.push(d[l.v]);
        v.extend_from_slice(&d[l.z..l.z + l.agents]);
        v
    };
    for j in 2..6 {
        let mut s = base.clone();
        let (o, n) = l.x[j];
        for x in &mut s[o..o + n] {
            *x += 3.7;
        }
        s[l.rho + j] -= 1.3;
        s[l.v + j] += 0.9;
        s[l.z + j * l.agents + 1] += 0.25;
        let mut d = vec![0.0; l.dim];
        cl.rhs(0.0, &s, &mut d).unwrap();
        assert_eq!(own(&d0), own(&d), "agent {} leaked into agent 1", j + 1);
    }
    // the in-neighbor does matter
    let mut s = base.clone();
    let (o, _) = l.x[1];
    s[o] += 1.0;
    let mut d = vec![0.0; l.dim];
    cl.rhs(0.0, &s, &mut d).unwrap();
    assert_ne!(own(&d0), own(&d));
}

#[test]
fn output_mode_with_exact_estimate_matches_state_mode() {
    let p = policy();
    let mut f = example2();
    f.simulation.horizon = 10.0;
    let sf = f.build(&p).unwrap();
    let mut g = f.clone();
    g.controller.mode = oocsim::scenario::ModeName::Output;
    for (key, agent) in g.agents.iter_mut() {
        let i: usize = key.parse().unwrap();
        agent.xhat0 = Some(sf.scenario.initial.x0[i - 1].iter().copied().collect());
    }
    let of = g.build(&p).unwrap();
    let cls = ClosedLoop::assemble(&sf.scenario, &p).unwrap();
    let clo = ClosedLoop::assemble(&of.scenario, &p).unwrap();
    let ts = cls.simulate().unwrap();
    let to = clo.simulate().unwrap();
    for (a, b) in ts.states.iter().zip(&to.states) {
        for (ya, yb) in cls.outputs(a).iter().zip(clo.outputs(b)) {
            assert!((ya - yb).amax() <= 1e-9);
        }
    }
}

#[test]
fn step_halving_during_transient() {
    let p = policy();
    let mut f = example2();
    f.simulation.horizon = 5.0;
    f.simulation.stride = 1;
    let a = f.build(&p).unwrap();
    f.simulation.step /= 2.0;
    let b = f.build(&p).unwrap();
    let ca = ClosedLoop::assemble(&a.scenario, &p).unwrap();
    let cb = ClosedLoop::assemble(&b.scenario, &p).unwrap();
    let ya = ca.outputs(ca.simulate().unwrap().last_state());
    let yb = cb.outputs(cb.simulate().unwrap().last_state());
    for (u, v) in ya.iter().zip(&yb) {
        assert!((u - v).amax() <= 1e-8, "{} vs {}", u, v);
    }
}

#[test]
fn invariants_along_example_run() {
    let p = policy();
    let mut f = example2();
    f.simulation.horizon = 15.0;
    let built = f.build(&p).unwrap();
    let cl = ClosedLoop::assemble(&built.scenario, &p).unwrap();
    let tr = cl.simulate().unwrap();
    let m = compute_metrics(&cl, &tr, &DVector::from_element(1, 0.2859875987), 1e-2);
    assert!(m.rv_drift <= 1e-6);
    assert!(m.rz_drift <= 1e-8);
    assert!(m.z_positivity_min > 0.0);
    assert_eq!(tr.len(), 15000 / 10 + 1);
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_oocsim"))
}

#[test]
fn cli_run_writes_csv_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a");
    let status = bin()
        .args(["run", "--scenario", "example2", "--preset", "g20_8", "--horizon", "20"])
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0), "{}", String::from_utf8_lossy(&status.stderr));
    let csv = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header.len(), 1 + 6 + 1);
    assert_eq!(header[0], "t");
    assert_eq!(header[7], "err");
    let times: Vec<f64> = lines.map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(times.len(), 20000 / 10 + 1);
    for w in times.windows(2) {
        assert!(w[1] > w[0] && (w[1] - w[0] - 0.01).abs() < 1e-9);
    }
    let kv = std::fs::read_to_string(out.join("report.kv")).unwrap();
    assert!(kv.contains("converged = true"));
    assert!(kv.contains("y_star = 0.28598"));
    assert!(out.join("report.txt").exists());

    // same seed, same bytes
    let out2 = dir.path().join("b");
    bin()
        .args(["run", "example2", "--preset", "g20_8", "--horizon", "20"])
        .arg("--out")
        .arg(&out2)
        .output()
        .unwrap();
    assert_eq!(csv, std::fs::read_to_string(out2.join("trajectory.csv")).unwrap());

    // reloading the echoed scenario reproduces the run
    let out3 = dir.path().join("c");
    bin()
        .args(["run", "--scenario"])
        .arg(out.join("scenario.toml"))
        .arg("--out")
        .arg(&out3)
        .output()
        .unwrap();
    assert_eq!(csv, std::fs::read_to_string(out3.join("trajectory.csv")).unwrap());
}

#[test]
fn cli_invalid_scenario_exits_one_without_csv() {
    let dir = tempfile::tempdir().unwrap();
    let mut f = example2();
    f.graph.edges.push((3, 3, 1.0));
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, f.to_toml()).unwrap();
    let out = dir.path().join("out");
    let res = bin().args(["run", "--scenario"]).arg(&path).arg("--out").arg(&out).output().unwrap();
    assert_eq!(res.status.code(), Some(1));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("graph.edges") && err.contains("3"), "{err}");
    assert!(!out.join("trajectory.csv").exists());
}

#[test]
fn cli_unconverged_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let res = bin()
        .args(["run", "example2", "--horizon", "1"])
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(2));
    assert!(dir.path().join("trajectory.csv").exists());
}

#[test]
fn cli_inspection_commands() {
    let run = |args: &[&str]| {
        let o = bin().args(args).output().unwrap();
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        String::from_utf8(o.stdout).unwrap()
    };
    let g = run(&["graph-info", "example2"]);
    assert!(g.contains("0.142857, 0.285714, 0.142857"));
    assert!(g.contains("lambda2: 0.071429"));
    let o = run(&["oracle", "example2"]);
    assert!(o.starts_with("y* = [0.2859"));
    let o1 = run(&["oracle", "example1"]);
    assert!(o1.contains("y* = [0.75]") && o1.contains("MISMATCH"));
    let t = run(&["solve-triplets", "example2"]);
    assert_eq!(t.matches("solvable").count(), 6);
    let c = run(&["check-gains", "example2"]);
    assert!(c.contains("g8_1") && c.contains("NOT convex"));
    let e = run(&["emit", "example1"]);
    assert_eq!(ScenarioFile::from_toml(&e).unwrap(), example1());
}

#[test]
fn scenario_round_trip_for_builtins() {
    let p = policy();
    for f in [example1(), example2()] {
        let again = ScenarioFile::from_toml(&f.to_toml()).unwrap();
        assert_eq!(f.build(&p).unwrap().scenario, again.build(&p).unwrap().scenario);
    }
}
