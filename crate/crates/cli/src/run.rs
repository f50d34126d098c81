//! Mode runners. Each writes its artifacts and returns the report text.

use std::fmt;

use coalfrag::metrics::{dist_delta, run_suite};
use coalfrag::oracle::{
    compare_empirical, count_and_coalesced, enumerate_states_capped, export_text, master_equation_solve,
    observable_law,
};
use coalfrag::simulator::{
    compensator_check, count_bound, compensator_bound, coupling_constants, moment_bound, run_replicas,
    simulate_coupled, truncation_bound_line,
};
use coalfrag::stats::{mean_se, median};
use coalfrag::{io, Config, CoupledRun, SimOptions, Trajectory};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentSpec, Format, Mode};
use crate::report::{Outputs, Report};

/// Why a run did not succeed; maps to the process exit code.
#[derive(Debug)]
pub enum Failure {
    Validation(Vec<String>),
    Runtime(anyhow::Error),
    Verdict(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => 2,
            Self::Runtime(_) => 3,
            Self::Verdict(_) => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Validation(errs) => {
                writeln!(f, "invalid configuration ({} problem(s)):", errs.len())?;
                for e in errs {
                    writeln!(f, "  {e}")?;
                }
                Ok(())
            }
            Self::Runtime(e) => write!(f, "runtime failure: {e:#}"),
            Self::Verdict(v) => write!(f, "verification failed: {v}"),
        }
    }
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Self::Runtime(e.into())
    }
}

pub struct Finished {
    pub report: String,
    pub verdict: Result<(), String>,
}

pub fn run(spec: &ExperimentSpec) -> Result<Finished, Failure> {
    let out = Outputs::create(&spec.out_dir, spec.format)?;
    let mut report = Report::new(spec.mode.name(), &spec.normalized());
    let sim = || spec.sim.as_ref().expect("validated: mode needs sim");
    let verdict = match spec.mode {
        Mode::Simulate => simulate(sim(), spec, &out, &mut report)?,
        Mode::Couple => couple(sim(), spec, &out, &mut report)?,
        Mode::VerifyInequalities => verify(spec, &out, &mut report)?,
        Mode::OracleCompare => oracle(sim(), spec, &out, &mut report)?,
        Mode::BoundsReport => bounds(sim(), spec, &out, &mut report)?,
    };
    report.line(match &verdict {
        Ok(()) => "verdict: PASS".to_string(),
        Err(why) => format!("verdict: FAIL ({why})"),
    });
    let text = report.text();
    out.text("report.txt", &text)?;
    Ok(Finished { report: text, verdict })
}

fn options(spec: &ExperimentSpec) -> SimOptions {
    SimOptions { record_events: spec.events, audit_rates: false }
}

fn write_events<T: coalfrag::Scalar>(out: &Outputs, stem: &str, runs: &[Trajectory<T>]) -> anyhow::Result<String> {
    let path = out.events(stem, |w, format| match format {
        Format::Csv => io::write_events_csv(w, runs),
        Format::JsonLines => io::write_events_jsonl(w, runs),
    })?;
    Ok(path.display().to_string())
}

fn stat(xs: &[f64]) -> String {
    let (m, se) = mean_se(xs);
    format!("{m:.6} (se {se:.2e})")
}

#[derive(Serialize)]
struct ReplicaRow {
    replica: u64,
    end_time: f64,
    events: usize,
    coalescences: usize,
    fragmentations: usize,
    final_count: usize,
    final_mass: f64,
    sup_norm_lambda: f64,
    sup_count: usize,
    stopped: bool,
    absorbed: bool,
}

impl ReplicaRow {
    fn of(t: &Trajectory<f64>) -> Self {
        Self {
            replica: t.replica,
            end_time: t.end_time,
            events: t.event_count(),
            coalescences: t.coalescences,
            fragmentations: t.fragmentations,
            final_count: t.final_state.len(),
            final_mass: t.final_state.total_mass(),
            sup_norm_lambda: t.sup_norm_lambda,
            sup_count: t.sup_count,
            stopped: t.stopped,
            absorbed: t.absorbed,
        }
    }
}

fn simulate(cfg: &Config, spec: &ExperimentSpec, out: &Outputs, report: &mut Report) -> Result<Result<(), String>, Failure> {
    let runs = run_replicas(cfg, options(spec))?;
    let rows: Vec<ReplicaRow> = runs.iter().map(ReplicaRow::of).collect();
    let path = out.table("replicas", &rows)?;
    report.line(format!("replicas: {} -> {}", runs.len(), path.display()));
    if spec.events {
        report.line(format!("events -> {}", write_events(out, "events", &runs)?));
    }
    let col = |f: &dyn Fn(&ReplicaRow) -> f64| rows.iter().map(f).collect::<Vec<_>>();
    let sup_norm = col(&|r| r.sup_norm_lambda);
    let sup_count = col(&|r| r.sup_count as f64);
    report.line(format!("mean events: {}", stat(&col(&|r| r.events as f64))));
    report.line(format!("mean final count: {}", stat(&col(&|r| r.final_count as f64))));
    report.line(format!("mean final mass: {}", stat(&col(&|r| r.final_mass))));
    report.line(format!("stopped runs: {}", rows.iter().filter(|r| r.stopped).count()));

    let mb = moment_bound(cfg, cfg.horizon)?;
    let cb = count_bound(cfg, cfg.horizon)?;
    let (m_norm, se_norm) = mean_se(&sup_norm);
    let (m_count, se_count) = mean_se(&sup_count);
    report.line(format!("E sup |M|_lambda: {} vs bound {mb:.6}", stat(&sup_norm)));
    report.line(format!("E sup N: {} vs bound {cb:.6}", stat(&sup_count)));
    let mut failed = Vec::new();
    if m_norm + 3.0 * se_norm > mb {
        failed.push("moment bound");
    }
    if m_count - 3.0 * se_count > cb {
        failed.push("count bound");
    }
    Ok(if failed.is_empty() { Ok(()) } else { Err(failed.join(", ")) })
}

#[derive(Serialize)]
struct CoupledRow {
    replica: u64,
    sup_delta: f64,
    candidates: usize,
    first_events: usize,
    second_events: usize,
    end_time: f64,
    stopped: bool,
}

fn couple(cfg: &Config, spec: &ExperimentSpec, out: &Outputs, report: &mut Report) -> Result<Result<(), String>, Failure> {
    let c = spec.coupling.as_ref().expect("validated: couple mode has coupling");
    let (m, mt) = match (c.p, c.q) {
        (Some(p), Some(q)) => (cfg.initial.truncate(p), c.second.truncate(q)),
        _ => (cfg.initial.clone(), c.second.clone()),
    };
    let opts = options(spec);
    let runs: Vec<CoupledRun<f64>> = (0..cfg.replicas as u64)
        .into_par_iter()
        .map(|r| simulate_coupled(&m, &mt, c.p, c.q, cfg, r, opts))
        .collect::<coalfrag::Result<_>>()?;
    let rows: Vec<CoupledRow> = runs
        .iter()
        .map(|r| CoupledRow {
            replica: r.first.replica,
            sup_delta: r.sup_delta,
            candidates: r.candidates,
            first_events: r.first.event_count(),
            second_events: r.second.event_count(),
            end_time: r.first.end_time,
            stopped: r.first.stopped || r.second.stopped,
        })
        .collect();
    report.line(format!("coupled runs: {} -> {}", rows.len(), out.table("coupled", &rows)?.display()));
    if spec.events {
        let firsts: Vec<_> = runs.iter().map(|r| r.first.clone()).collect();
        let seconds: Vec<_> = runs.iter().map(|r| r.second.clone()).collect();
        report.line(format!("events (first member) -> {}", write_events(out, "events_first", &firsts)?));
        report.line(format!("events (second member) -> {}", write_events(out, "events_second", &seconds)?));
    }
    let sups: Vec<f64> = rows.iter().map(|r| r.sup_delta).collect();
    let delta0 = dist_delta(&m, &mt, cfg.lambda)?;
    let (mean, se) = mean_se(&sups);
    report.line(format!("delta_lambda(m, mt) = {delta0:.6e}"));
    report.line(format!("E sup delta_lambda: {}, median {:.6e}", stat(&sups), median(&sups)));
    if let (Some(p), Some(q)) = (c.p, c.q) {
        let line = truncation_bound_line(cfg, p, q, cfg.horizon)?;
        report.line(format!(
            "truncation bound line p={p} q={q}: gap {:.6e} + D {:.6e} * (A {:.6e} + B {:.6e}) = {:.6e}",
            line.initial_gap, line.d_hat, line.a, line.b, line.value
        ));
        return Ok(Ok(()));
    }
    let Some(x) = cfg.stop_norm else {
        report.line("no stop_norm: coupling bound not evaluated");
        return Ok(Ok(()));
    };
    let k = coupling_constants(&cfg.coag, &cfg.frag, &cfg.beta, cfg.lambda, &m, &mt, x)?;
    report.line(format!(
        "constants: a {:.6} kappa {:.6} mu {:.6} C_beta {:.6} F_bar {:.6} C_hat {:.6}",
        k.a, k.kappa, k.mu, k.c_beta, k.f_bar, k.c_hat
    ));
    if delta0 == 0.0 {
        let ok = sups.iter().all(|&s| s == 0.0);
        report.line(format!("identical starts: coupled paths {}", if ok { "agree" } else { "DIFFER" }));
        return Ok(if ok { Ok(()) } else { Err("identical starts diverged".into()) });
    }
    let log_bound = k.log_bound(delta0, cfg.horizon);
    let log_est = (mean + 3.0 * se).ln();
    report.line(format!("ln(E sup + 3 se) = {log_est:.6} vs ln bound {log_bound:.6}"));
    report.line(format!("ratio E sup / delta0 = {:.6}", mean / delta0));
    Ok(if log_est <= log_bound { Ok(()) } else { Err("coupling bound".into()) })
}

#[derive(Serialize)]
struct InequalityRow {
    name: String,
    min_relative_slack: f64,
    tight: usize,
}

#[derive(Serialize)]
struct DiagnosticRow {
    name: String,
    checks: usize,
    violations: usize,
}

fn verify(spec: &ExperimentSpec, out: &Outputs, report: &mut Report) -> Result<Result<(), String>, Failure> {
    let s = run_suite(spec.cases, spec.permutations, spec.seed)?;
    let rows: Vec<InequalityRow> = s
        .min_relative_slack
        .iter()
        .map(|(name, slack)| InequalityRow {
            name: name.clone(),
            min_relative_slack: *slack,
            tight: s.tight.iter().find(|t| &t.0 == name).map_or(0, |t| t.1),
        })
        .collect();
    out.table("inequalities", &rows)?;
    report.line(format!("{} cases, {} gated checks, {} failures", s.cases, s.checks, s.failures.len()));
    report.line(format!("{:<34} {:>12} {:>8}", "inequality", "min slack", "tight"));
    for r in &rows {
        report.line(format!("{:<34} {:>12.3e} {:>8}", r.name, r.min_relative_slack, r.tight));
    }
    let diags: Vec<DiagnosticRow> =
        s.diagnostics.iter().map(|(n, c, v)| DiagnosticRow { name: n.clone(), checks: *c, violations: *v }).collect();
    out.table("diagnostics", &diags)?;
    report.line("not gated (false in general, counterexamples in the metrics docs):");
    for d in &diags {
        report.line(format!("  {}: {} violations in {} checks", d.name, d.violations, d.checks));
    }
    for (case, check) in s.failures.iter().take(20) {
        report.line(format!("FAILED {case} {}: lhs {:e} rhs {:e}", check.name, check.lhs, check.rhs));
    }
    Ok(if s.passed() { Ok(()) } else { Err(format!("{} inequality checks failed", s.failures.len())) })
}

#[derive(Serialize)]
struct LawRow {
    count: usize,
    coalesced: bool,
    oracle: f64,
    empirical: f64,
}

fn oracle(cfg: &Config, spec: &ExperimentSpec, out: &Outputs, report: &mut Report) -> Result<Result<(), String>, Failure> {
    let graph = enumerate_states_capped(cfg, spec.depth, spec.max_states)?;
    let sol = master_equation_solve(&graph, cfg.horizon)?;
    out.text("oracle.txt", &export_text(&graph, &sol))?;
    let obs = count_and_coalesced(&cfg.initial);
    let law = observable_law(&graph, &sol, &obs);
    let samples: Vec<(usize, bool)> =
        coalfrag::simulator::map_replicas(cfg, SimOptions::default(), |t| obs(&t.final_state))?;
    let cmp = compare_empirical(&law, &samples, spec.tolerance)?;
    let n = samples.len() as f64;
    let rows: Vec<LawRow> = law
        .probabilities
        .iter()
        .map(|(&(count, coalesced), &p)| LawRow {
            count,
            coalesced,
            oracle: p,
            empirical: samples.iter().filter(|s| **s == (count, coalesced)).count() as f64 / n,
        })
        .collect();
    out.table("law", &rows)?;
    report.line(format!("states {} (depth {}), escaped mass {:.3e}", graph.states.len(), spec.depth, sol.escaped));
    report.line(format!("oracle error bound {:.3e}, Poisson tail {:.3e}", sol.error_bound, sol.poisson_tail));
    for r in &rows {
        report.line(format!("  N={} coalesced={}: oracle {:.6} sim {:.6}", r.count, r.coalesced, r.oracle, r.empirical));
    }
    report.line(format!(
        "TV {:.6} vs tolerance {} + oracle error {:.3e} + width {:.3e} over {} samples",
        cmp.tv_distance, cmp.tolerance, cmp.oracle_error, cmp.confidence_width, cmp.samples
    ));
    Ok(if cmp.pass { Ok(()) } else { Err(format!("TV {:.6} too large", cmp.tv_distance)) })
}

#[derive(Serialize)]
struct BoundRow {
    time: f64,
    moment: f64,
    count: f64,
    compensator: f64,
}

fn bounds(cfg: &Config, spec: &ExperimentSpec, out: &Outputs, report: &mut Report) -> Result<Result<(), String>, Failure> {
    let n = spec.bound_points;
    let mut rows = Vec::with_capacity(n);
    for k in 0..n {
        let t = cfg.horizon * k as f64 / (n - 1) as f64;
        rows.push(BoundRow {
            time: t,
            moment: moment_bound(cfg, t)?,
            count: count_bound(cfg, t)?,
            compensator: compensator_bound(cfg, t)?,
        });
    }
    report.line(format!("bound table ({n} points) -> {}", out.table("bounds", &rows)?.display()));
    for c in cfg.beta.check_bounds(cfg.lambda)? {
        report.line(format!("beta check {}: {:.6} <= {:.6} {}", c.name, c.lhs, c.rhs, if c.pass { "ok" } else { "FAIL" }));
    }
    if let Some(&q) = spec.levels.iter().max() {
        for &p in &spec.levels {
            let l = truncation_bound_line(cfg, p, q, cfg.horizon)?;
            report.line(format!("truncation line p={p} q={q}: {:.6e}", l.value));
        }
    }
    // pathwise compensator against its bound on the first replicas
    let checks: Vec<(f64, f64)> = (0..cfg.replicas.min(100) as u64)
        .into_par_iter()
        .map(|r| compensator_check(cfg, r))
        .collect::<coalfrag::Result<_>>()?;
    let bad = checks.iter().filter(|(v, b)| v > b).count();
    let worst = checks.iter().map(|(v, b)| v / b).fold(0.0, f64::max);
    report.line(format!("compensator check: {} replicas, {bad} above bound, largest ratio {worst:.4}", checks.len()));
    Ok(if bad == 0 { Ok(()) } else { Err("compensator bound".into()) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(Failure::Validation(vec![]).exit_code(), 2);
        assert_eq!(Failure::from(coalfrag::Error::Numeric("x".into())).exit_code(), 3);
        assert_eq!(Failure::Verdict("x".into()).exit_code(), 4);
    }
}
