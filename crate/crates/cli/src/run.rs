//! Runs a scenario and writes the trajectory CSV, the run report and plots.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use iofp_sync::analysis::{
    eval_full_lyapunov, gain_monitor, GainReport, LyapunovTrace, MonotonicityReport, SyncMetrics,
};
use iofp_sync::controllers::Controller;
use iofp_sync::simulator::{simulate, SimError, Status, Trajectory};
use iofp_sync::Plant;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::plot;
use crate::scenario::{Built, Overrides, Scenario, ScenarioError};

/// Name of the seedable generator behind the initial conditions.
pub const RNG_NAME: &str = "ChaCha8Rng";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("simulation diverged at t = {t:.6}")]
    Diverged { t: f64 },
    #[error("simulation failed: {0}")]
    Simulation(String),
    #[error("cannot write {path}: {message}")]
    Io { path: String, message: String },
}

/// A finished (or tripped) integration with its derived metrics.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub scenario: Scenario,
    pub built: Built,
    pub trajectory: Trajectory,
    pub metrics: SyncMetrics,
    pub lyapunov: Option<LyapunovTrace>,
    pub gains: Option<GainReport>,
    pub wall_time: f64,
}

impl Outcome {
    pub fn diverged_at(&self) -> Option<f64> {
        match self.trajectory.status {
            Status::Diverged { t } => Some(t),
            Status::Completed => None,
        }
    }

    pub fn monotonicity(&self) -> Option<MonotonicityReport> {
        self.lyapunov.as_ref().map(LyapunovTrace::monotonicity)
    }
}

/// SHA-256 of the scenario as re-serialized after overrides.
pub fn digest(scenario: &Scenario) -> String {
    format!("{:x}", Sha256::digest(scenario.to_toml().as_bytes()))
}

/// Builds and integrates a scenario. Divergence is not an error here: the
/// trajectory up to the trip is returned with a diverged status.
pub fn simulate_scenario(scenario: &Scenario) -> Result<Outcome, RunError> {
    let built = scenario.build()?;
    let start = Instant::now();
    let lp = &built.closed_loop;
    let trajectory = match simulate(lp, built.z0.clone(), &built.sim) {
        Ok(t) => t,
        Err(SimError::Diverged { trajectory, .. }) => *trajectory,
        Err(e) => return Err(RunError::Simulation(e.to_string())),
    };
    let wall_time = start.elapsed().as_secs_f64();
    let out = &scenario.output;
    let metrics = SyncMetrics::from_trajectory(lp, &trajectory, out.sync_tolerance, out.settle_dwell);
    let lyapunov = eval_full_lyapunov(lp, &trajectory, None, None).ok();
    let gains = (lp.controller().gain_dim() > 0).then(|| gain_monitor(lp.layout(), &trajectory));
    Ok(Outcome {
        scenario: scenario.clone(),
        built,
        trajectory,
        metrics,
        lyapunov,
        gains,
        wall_time,
    })
}

fn col(prefix: &str, i: usize, k: usize, dim: usize) -> String {
    if dim == 1 {
        format!("{prefix}{}", i + 1)
    } else {
        format!("{prefix}{}_{}", i + 1, k + 1)
    }
}

fn block(names: &mut Vec<String>, prefix: &str, count: usize, dim: usize) {
    for i in 0..count {
        for k in 0..dim {
            names.push(col(prefix, i, k, dim));
        }
    }
}

/// CSV header; depends only on the scenario.
pub fn csv_header(built: &Built) -> Vec<String> {
    let lp = &built.closed_loop;
    let l = lp.layout();
    let (nn, ne, q) = (l.n_nodes, lp.ops().n_edges(), l.q);
    let c = lp.controller();
    let mut names = vec!["t".to_string()];
    block(&mut names, "x", nn, l.n);
    block(&mut names, "y", nn, q);
    block(&mut names, "u", nn, q);
    block(&mut names, "d", nn, q);
    if c.family().is_edge_placed() {
        block(&mut names, "varrho", ne, q);
    } else {
        block(&mut names, "rho", nn, q);
    }
    if c.eta_dim() > 0 {
        block(&mut names, "eta", ne, q);
    }
    let gain_prefix = if c.gains_on_nodes() { "k" } else { "kappa" };
    block(&mut names, gain_prefix, c.gain_dim(), 1);
    names.push("e".into());
    if has_lyapunov(c) {
        names.push("lyapunov".into());
    }
    names
}

fn has_lyapunov(c: &Controller) -> bool {
    c.family() != iofp_sync::ControllerFamily::StaticDiffusive
}

fn num(v: f64) -> String {
    format!("{:.12e}", v + 0.0)
}

/// Trajectory CSV, sampling every `csv_stride`-th step and always the last.
pub fn csv_string(outcome: &Outcome) -> Result<String, RunError> {
    let lp = &outcome.built.closed_loop;
    let l = lp.layout();
    let c = lp.controller();
    let traj = &outcome.trajectory;
    let stride = outcome.scenario.output.csv_stride;
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| RunError::Io {
        path: "trajectory.csv".into(),
        message: e.to_string(),
    };
    w.write_record(csv_header(&outcome.built)).map_err(io)?;
    let last = traj.len().saturating_sub(1);
    let mut row: Vec<String> = Vec::new();
    for k in (0..traj.len()).filter(|k| k % stride == 0 || *k == last) {
        let z = traj.state(k);
        let ch = lp.channels(z);
        row.clear();
        row.push(num(traj.times[k]));
        row.extend(z[l.x.clone()].iter().map(|v| num(*v)));
        row.extend(ch.y.iter().chain(&ch.u).chain(&ch.d).map(|v| num(*v)));
        let coupling = if c.family().is_edge_placed() {
            &ch.signals.varrho
        } else {
            &ch.signals.rho
        };
        row.extend(coupling.iter().map(|v| num(*v)));
        row.extend(z[l.eta.clone()].iter().chain(&z[l.gains.clone()]).map(|v| num(*v)));
        row.push(num(outcome.metrics.errors[k]));
        if has_lyapunov(c) {
            let v = outcome.lyapunov.as_ref().map_or(f64::NAN, |tr| tr.values[k]);
            row.push(num(v));
        }
        w.write_record(&row).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| RunError::Io {
        path: "trajectory.csv".into(),
        message: e.to_string(),
    })?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainSummary {
    pub finals: Vec<f64>,
    pub nondecreasing: bool,
    pub worst_decrease: f64,
    pub tail_relative_change: f64,
    pub plateaued: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSummary {
    pub gain_star: Option<f64>,
    pub epsilon: Option<f64>,
    pub initial: f64,
    #[serde(rename = "final")]
    pub last: f64,
    pub nonincreasing: bool,
    pub tolerance: String,
    pub worst_excess: f64,
    pub first_violation_time: Option<f64>,
}

/// Written for every run, including failed ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub digest: Option<String>,
    pub status: String,
    pub error: Option<String>,
    pub family: Option<String>,
    pub seed: u64,
    pub rng: String,
    pub init_range: [f64; 2],
    pub t_final: f64,
    pub h: f64,
    pub h_effective: Option<f64>,
    pub steps: Option<usize>,
    pub divergence_time: Option<f64>,
    pub lambda2: Option<f64>,
    pub sigma: Option<f64>,
    pub strong_coupling: Option<bool>,
    pub final_sync_error: Option<f64>,
    /// Largest `e(t)` over the final fifth of the horizon.
    pub tail_max_sync_error: Option<f64>,
    pub sync_tolerance: f64,
    pub settling_time: Option<f64>,
    pub settled: Option<bool>,
    pub gains: Option<GainSummary>,
    pub lyapunov: Option<LyapunovSummary>,
    pub wall_time_s: f64,
    pub files: Vec<String>,
}

impl RunReport {
    fn skeleton(s: &Scenario) -> Self {
        RunReport {
            scenario: s.name.clone(),
            digest: None,
            status: "error".into(),
            error: None,
            family: None,
            seed: s.sim.seed,
            rng: RNG_NAME.into(),
            init_range: s.sim.init_range,
            t_final: s.sim.t_final,
            h: s.sim.dt,
            h_effective: None,
            steps: None,
            divergence_time: None,
            lambda2: None,
            sigma: None,
            strong_coupling: None,
            final_sync_error: None,
            tail_max_sync_error: None,
            sync_tolerance: s.output.sync_tolerance,
            settling_time: None,
            settled: None,
            gains: None,
            lyapunov: None,
            wall_time_s: 0.0,
            files: Vec::new(),
        }
    }

    pub fn from_outcome(o: &Outcome) -> Self {
        let mut r = Self::skeleton(&o.scenario);
        let lp = &o.built.closed_loop;
        let traj = &o.trajectory;
        r.digest = Some(digest(&o.scenario));
        r.family = Some(o.built.family.to_string());
        r.divergence_time = o.diverged_at();
        r.status = if r.divergence_time.is_some() {
            "diverged"
        } else {
            "completed"
        }
        .into();
        r.h_effective = Some(traj.h);
        r.steps = Some(traj.len().saturating_sub(1));
        let lambda2 = lp.ops().lambda2;
        r.lambda2 = Some(lambda2);
        r.sigma = o.built.plant.sigma();
        r.strong_coupling = r.sigma.map(|s| lambda2 > s);
        let m = &o.metrics;
        r.final_sync_error = Some(m.final_error());
        let t_end = traj.times.last().copied().unwrap_or(0.0);
        let tail = m.max_on(0.8 * o.scenario.sim.t_final, t_end);
        r.tail_max_sync_error = tail.is_finite().then_some(tail);
        r.settling_time = m.settling_time;
        r.settled = Some(m.settled);
        r.gains = o.gains.as_ref().map(|g| GainSummary {
            finals: g.finals.clone(),
            nondecreasing: g.nondecreasing,
            worst_decrease: g.worst_decrease,
            tail_relative_change: g.tail_relative_change,
            plateaued: g.plateaued,
        });
        r.lyapunov = o.lyapunov.as_ref().map(|tr| {
            let mono = tr.monotonicity();
            LyapunovSummary {
                gain_star: tr.constants.gain_star,
                epsilon: tr.constants.epsilon,
                initial: tr.values.first().copied().unwrap_or(f64::NAN),
                last: tr.values.last().copied().unwrap_or(f64::NAN),
                nonincreasing: mono.pass,
                tolerance: "1e-8 * (1 + V)".into(),
                worst_excess: mono.worst_excess,
                first_violation_time: mono.first_violation.map(|k| traj.times[k]),
            }
        });
        r.wall_time_s = o.wall_time;
        r
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn write(path: &Path, contents: &[u8]) -> Result<(), RunError> {
    fs::write(path, contents).map_err(|e| RunError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Writes CSV, plots and report for an outcome into `dir`.
pub fn write_outputs(outcome: &Outcome, dir: &Path) -> Result<RunReport, RunError> {
    fs::create_dir_all(dir).map_err(|e| RunError::Io {
        path: dir.display().to_string(),
        message: e.to_string(),
    })?;
    let mut report = RunReport::from_outcome(outcome);
    let csv_path = dir.join("trajectory.csv");
    write(&csv_path, csv_string(outcome)?.as_bytes())?;
    report.files.push("trajectory.csv".into());
    if outcome.scenario.output.plots {
        for (name, svg) in plot::render_all(outcome) {
            write(&dir.join(&name), svg.as_bytes())?;
            report.files.push(name);
        }
    }
    report.files.push("report.json".into());
    write(&dir.join("report.json"), report.to_json().as_bytes())?;
    Ok(report)
}

/// Applies overrides, runs, and writes every artifact. The report is
/// written even when validation or integration fails; a diverged run
/// still writes the trajectory up to the trip.
pub fn run(base: &Scenario, ov: &Overrides) -> (RunReport, PathBuf, Result<(), RunError>) {
    let dir = PathBuf::from(ov.out.clone().unwrap_or_else(|| base.output_dir()));
    let failed = |mut report: RunReport, err: RunError| {
        report.error = Some(err.to_string());
        let _ = fs::create_dir_all(&dir);
        report.files = vec!["report.json".into()];
        let _ = fs::write(dir.join("report.json"), report.to_json());
        (report, dir.clone(), Err(err))
    };
    let scenario = match base.with_overrides(ov) {
        Ok(s) => s,
        Err(e) => return failed(RunReport::skeleton(base), e.into()),
    };
    let outcome = match simulate_scenario(&scenario) {
        Ok(o) => o,
        Err(e) => {
            let mut r = RunReport::skeleton(&scenario);
            r.digest = Some(digest(&scenario));
            return failed(r, e);
        }
    };
    match write_outputs(&outcome, &dir) {
        Ok(report) => {
            let res = match report.divergence_time {
                Some(t) => Err(RunError::Diverged { t }),
                None => Ok(()),
            };
            (report, dir, res)
        }
        Err(e) => failed(RunReport::from_outcome(&outcome), e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::preset;

    fn short(t: f64, dir: &std::path::Path) -> Overrides {
        Overrides {
            t_final: Some(t),
            out: Some(dir.display().to_string()),
            no_plots: true,
            ..Default::default()
        }
    }

    fn data_rows(csv: &str) -> usize {
        csv.lines().count() - 1
    }

    #[test]
    fn vdp_nodes_seed_1_emits_all_files() {
        let dir = tempfile::tempdir().unwrap();
        let ov = Overrides {
            out: Some(dir.path().display().to_string()),
            ..Default::default()
        };
        let (report, _, res) = run(&preset("vdp_nodes").unwrap(), &ov);
        res.unwrap();
        assert_eq!(report.status, "completed");
        assert_eq!(report.seed, 1);
        assert_eq!(report.rng, "ChaCha8Rng");
        for f in [
            "trajectory.csv",
            "report.json",
            "figure.svg",
            "gains.svg",
            "sync_error.svg",
        ] {
            let meta = fs::metadata(dir.path().join(f)).unwrap();
            assert!(meta.len() > 0, "{f}");
            assert!(report.files.iter().any(|x| x == f), "{f}");
        }
        let svg = fs::read_to_string(dir.path().join("figure.svg")).unwrap();
        assert!(svg.starts_with("<svg") && svg.contains("<polyline"));
        let json: RunReport =
            serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
        assert_eq!(json.digest, report.digest);
        assert_eq!(json.steps, Some(100_000));
        assert!(json.lyapunov.unwrap().nonincreasing);
        assert!(json.gains.unwrap().nondecreasing);
    }

    #[test]
    fn halving_dt_doubles_rows() {
        let dir = tempfile::tempdir().unwrap();
        let s = preset("vdp_nodes").unwrap();
        let (_, _, res) = run(&s, &short(2.0, &dir.path().join("a")));
        res.unwrap();
        let mut ov = short(2.0, &dir.path().join("b"));
        ov.dt = Some(5e-4);
        let (report, _, res) = run(&s, &ov);
        res.unwrap();
        assert_eq!(report.h_effective, Some(5e-4));
        let a = fs::read_to_string(dir.path().join("a/trajectory.csv")).unwrap();
        let b = fs::read_to_string(dir.path().join("b/trajectory.csv")).unwrap();
        // Stride 10 over 2000 and 4000 steps, plus the initial row.
        assert_eq!(data_rows(&a), 201);
        assert_eq!(data_rows(&b), 401);
        assert_eq!(data_rows(&b) - 1, 2 * (data_rows(&a) - 1));
    }

    #[test]
    fn csv_schema_depends_only_on_the_scenario() {
        for name in ["vdp_nodes", "vdp_edges", "vdp_dynedges_adaptive_im"] {
            let mut s = preset(name).unwrap();
            s.sim.t_final = 0.5;
            let a = simulate_scenario(&s).unwrap();
            s.sim.seed = 99;
            let b = simulate_scenario(&s).unwrap();
            let ha = csv_header(&a.built);
            assert_eq!(ha, csv_header(&b.built));
            let text = csv_string(&b).unwrap();
            let mut lines = text.lines();
            assert_eq!(lines.next().unwrap(), ha.join(","));
            assert!(lines.all(|l| l.split(',').count() == ha.len()));
        }
        let s = preset("vdp_dynedges_im").unwrap();
        let header = csv_header(&s.build().unwrap());
        for col in ["eta1", "eta6", "varrho6", "x4_2", "e", "lyapunov"] {
            assert!(header.iter().any(|h| h == col), "{col} missing from {header:?}");
        }
    }

    #[test]
    fn identical_runs_give_identical_csv_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let s = preset("vdp_edges").unwrap();
        for sub in ["a", "b"] {
            let (_, _, res) = run(&s, &short(5.0, &dir.path().join(sub)));
            res.unwrap();
        }
        let a = fs::read(dir.path().join("a/trajectory.csv")).unwrap();
        let b = fs::read(dir.path().join("b/trajectory.csv")).unwrap();
        assert_eq!(a, b);
        let mut ov = short(5.0, &dir.path().join("c"));
        ov.seed = Some(2);
        let (_, _, res) = run(&s, &ov);
        res.unwrap();
        assert_ne!(a, fs::read(dir.path().join("c/trajectory.csv")).unwrap());
    }

    #[test]
    fn report_is_written_for_failed_runs() {
        let dir = tempfile::tempdir().unwrap();
        let s = preset("vdp_dynedges_adaptive").unwrap();
        let mut ov = short(1.0, dir.path());
        ov.controller = Some("dynamic_edges".into());
        let (report, _, res) = run(&s, &ov);
        let err = res.unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert_eq!(report.status, "error");
        assert!(report.error.unwrap().contains("edge 1"));
        assert!(dir.path().join("report.json").exists());
        assert!(!dir.path().join("trajectory.csv").exists());
    }

    #[test]
    fn divergence_writes_partial_trajectory() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = preset("vdp_nodes").unwrap();
        // Trips after the first steps: the initial state norm is about 6.
        s.sim.divergence_threshold = 7.0;
        s.sim.t_final = 50.0;
        let (report, _, res) = run(&s, &short(50.0, dir.path()));
        assert!(matches!(res, Err(RunError::Diverged { .. })));
        assert_eq!(report.status, "diverged");
        let t = report.divergence_time.unwrap();
        assert!(t > 0.0 && t < 50.0);
        let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
        assert!(data_rows(&csv) >= 1);
    }

    #[test]
    fn static_diffusive_leaves_disturbances_unrejected() {
        let dir = tempfile::tempdir().unwrap();
        let ov = Overrides {
            controller: Some("static_diffusive".into()),
            out: Some(dir.path().display().to_string()),
            no_plots: true,
            ..Default::default()
        };
        let (report, _, res) = run(&preset("vdp_nodes").unwrap(), &ov);
        res.unwrap();
        assert_eq!(report.status, "completed");
        assert!(report.final_sync_error.unwrap() > report.sync_tolerance);
        assert!(report.lyapunov.is_none());
        let header = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
        assert!(!header.lines().next().unwrap().contains("lyapunov"));
    }
}
