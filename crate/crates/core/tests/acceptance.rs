//! Acceptance run: every criterion at its stated tolerance, one line each.
//!
//! Criteria run one after another inside a single test so that the
//! reported runtimes are not distorted by concurrently running tests.

use std::io::Write;
use std::time::{Duration, Instant};

use coalfrag::metrics::{check_inequalities, run_suite, PAIR_COALESCENCE_D, WEIGHTED_PERMUTATION};
use coalfrag::oracle::{compare_empirical, count_and_coalesced, enumerate_states, master_equation_solve, observable_law};
use coalfrag::simulator::{
    coupling_constants, map_replicas, martingale_residual, moment_bound, run_replicas, simulate_coupled,
    truncation_bound_line,
};
use coalfrag::stats::{bonferroni, chi_square_homogeneity, ks_two_sample, mean_se, median};
use coalfrag::{
    io, Atom, CoagKernel, Config, FragKernel, MassSeq, Measure, SimConfig, SimOptions,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn line(n: usize, name: &str, outcome: &Outcome, elapsed: Duration, limit: Duration) -> bool {
    let in_time = elapsed <= limit;
    let ok = outcome.pass && in_time;
    // straight to the handle so the line shows up even when output is captured
    let _ = writeln!(
        std::io::stderr().lock(),
        "criterion {n:>2} {:<4} {name}: {} [{:.2} s of {} s]",
        if ok { "PASS" } else { "FAIL" },
        outcome.detail,
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    ok
}

fn units(n: usize) -> MassSeq {
    MassSeq::uniform(n, 1.0).unwrap()
}

fn seq(v: &[f64]) -> MassSeq {
    MassSeq::reorder(v).unwrap()
}

/// K(x, y) = x + y, F = 1, binary_half, 8 unit particles.
fn mixed(horizon: f64, seed: u64) -> Config {
    SimConfig::new(
        units(8),
        CoagKernel::sum_power(1.0, 1.0).unwrap(),
        FragKernel::constant(),
        Measure::binary_half(),
        horizon,
        seed,
    )
}

fn perturbed(m: &MassSeq, eta: f64) -> MassSeq {
    let mut raw = m.masses().to_vec();
    raw[0] += eta;
    seq(&raw)
}

fn c1_mass_monotone() -> Outcome {
    let cfg = mixed(5.0, 101).with_replicas(1000);
    let runs = run_replicas(&cfg, SimOptions::recording()).unwrap();
    let mut events = 0;
    let mut worst = f64::NEG_INFINITY;
    for t in &runs {
        let mut mass = cfg.initial.total_mass();
        for e in &t.events {
            worst = worst.max((e.post_mass - mass) / mass);
            mass = e.post_mass;
            events += 1;
        }
        worst = worst.max((t.final_state.total_mass() - mass) / mass);
    }
    Outcome {
        pass: worst <= 1e-12,
        detail: format!("{events} events over 1000 runs, largest relative mass increase {worst:.3e}"),
    }
}

fn c2_moment_bound() -> Outcome {
    let horizon = 5.0;
    let cfg = mixed(horizon, 102).with_lambda(0.5).with_replicas(10_000);
    let sups = map_replicas(&cfg, SimOptions::default(), |t| t.sup_norm_lambda).unwrap();
    let (mean, se) = mean_se(&sups);
    // F_bar = 1, C_beta^{1/2} = (1/2)^{1/2} + (1/2)^{1/2}, |m|_{1/2} = 8
    let c_beta = 2.0 * 0.5f64.sqrt();
    let bound = 8.0 * (c_beta * horizon).exp();
    let lib = moment_bound(&cfg, horizon).unwrap();
    Outcome {
        pass: mean + 3.0 * se <= bound && (lib - bound).abs() <= 1e-9 * bound,
        detail: format!("E sup|M|_1/2 = {mean:.4} +- {se:.4}, bound {bound:.4}"),
    }
}

fn c3_count_bound() -> Outcome {
    let horizon = 5.0;
    let cfg = mixed(horizon, 103).with_replicas(10_000);
    let runs = run_replicas(&cfg, SimOptions::recording()).unwrap();
    let k = 2;
    let mut violations = 0;
    let mut sups = Vec::with_capacity(runs.len());
    for t in &runs {
        let mut frags = 0usize;
        let mut sup = t.initial_count;
        for e in &t.events {
            if e.kind.label() == "fragmentation" {
                frags += 1;
            }
            if e.post_count > t.initial_count + (k - 1) * frags {
                violations += 1;
            }
            sup = sup.max(e.post_count);
        }
        sups.push(sup as f64);
    }
    let (mean, se) = mean_se(&sups);
    let sigma = se / mean;
    // N_0 e^{(k - 1) F_bar beta(Theta) t}
    let bound = 8.0 * horizon.exp();
    Outcome {
        pass: violations == 0 && mean <= bound * (1.0 + 3.0 * sigma),
        detail: format!("{violations} pathwise violations, E sup N = {mean:.4} +- {se:.4}, bound {bound:.2}"),
    }
}

fn c4_kingman() -> Outcome {
    let cfg = SimConfig::new(units(5), CoagKernel::constant(), FragKernel::zero(), Measure::empty(), 10.0, 104)
        .with_replicas(100_000);
    let times = map_replicas(&cfg, SimOptions::default(), |t| t.first_event_time.unwrap_or(f64::INFINITY)).unwrap();
    let (mean, se) = mean_se(&times);
    let rel = (mean - 0.1).abs() / 0.1;
    Outcome {
        pass: rel <= 0.03,
        detail: format!("mean first jump {mean:.5} (se {se:.1e}), {:.2}% from 1/10", 100.0 * rel),
    }
}

fn c5_yule() -> Outcome {
    let cfg = SimConfig::new(seq(&[1.0]), CoagKernel::zero(), FragKernel::constant(), Measure::binary_half(), 2.0, 105)
        .with_replicas(100_000);
    let counts = map_replicas(&cfg, SimOptions::default(), |t| t.final_state.len() as f64).unwrap();
    let (mean, se) = mean_se(&counts);
    let e2 = 2f64.exp();
    let rel = (mean - e2).abs() / e2;
    Outcome {
        pass: rel <= 0.05,
        detail: format!("E N_2 = {mean:.4} (se {se:.3}) vs e^2 = {e2:.4}, {:.2}% off", 100.0 * rel),
    }
}

fn c6_oracle() -> Outcome {
    let two = |frag: FragKernel| SimConfig::new(units(2), CoagKernel::constant(), frag, Measure::binary_half(), 1.0, 106);
    let cfg = two(FragKernel::constant()).with_replicas(100_000);
    let graph = enumerate_states(&cfg, 8).unwrap();
    let sol = master_equation_solve(&graph, 1.0).unwrap();
    let obs = count_and_coalesced(&cfg.initial);
    let law = observable_law(&graph, &sol, &obs);
    let samples = map_replicas(&cfg, SimOptions::default(), |t| obs(&t.final_state)).unwrap();
    let cmp = compare_empirical(&law, &samples, 0.02).unwrap();
    let tv_ok = cmp.tv_distance <= 0.02 + sol.error_bound;

    // F = 0: coalescence by time 1 has probability 1 - e^-1
    let exact = 1.0 - (-1f64).exp();
    let pure = two(FragKernel::zero()).with_replicas(100_000);
    let g0 = enumerate_states(&pure, 8).unwrap();
    let s0 = master_equation_solve(&g0, 1.0).unwrap();
    let oracle_p = s0.probabilities[1];
    let hits = map_replicas(&pure, SimOptions::default(), |t| f64::from(u8::from(t.final_state.len() == 1))).unwrap();
    let (emp_p, se) = mean_se(&hits);
    let sub_ok = (oracle_p - exact).abs() <= 1e-10 && (emp_p - exact).abs() <= 3.0 * se;
    Outcome {
        pass: tv_ok && sub_ok,
        detail: format!(
            "TV {:.4} <= 0.02 + {:.4} ({} states); P(coalesced by 1): oracle {oracle_p:.6}, sim {emp_p:.4}, exact {exact:.6}",
            cmp.tv_distance,
            sol.error_bound,
            graph.states.len()
        ),
    }
}

fn c7_coupling() -> Outcome {
    let (lambda, horizon, x) = (0.5, 1.0, 24.0);
    let cfg = mixed(horizon, 107).with_lambda(lambda).with_stop_norm(x);
    let m = units(8);
    let mut ratios = Vec::new();
    let mut all_ok = true;
    let mut parts = Vec::new();
    for eta in [0.1, 0.01, 0.001] {
        let mt = perturbed(&m, eta);
        let delta0 = (1.0 + eta).sqrt() - 1.0;
        let sups: Vec<f64> = (0..1000u64)
            .map(|r| simulate_coupled(&m, &mt, None, None, &cfg, r, SimOptions::default()).unwrap().sup_delta)
            .collect();
        let (mean, se) = mean_se(&sups);
        // K = x + y: kappa at index 1/2 on (0, a] is 2 sqrt(a); F = 1 gives mu = 0
        let a = 8.0 + eta;
        let c_beta = 2.0 * 0.5f64.sqrt();
        let c_hat = 16.0 * a.sqrt() + c_beta;
        let log_bound = delta0.ln() + c_hat * (x + 1.0) * horizon;
        let lib = coupling_constants(&cfg.coag, &cfg.frag, &cfg.beta, lambda, &m, &mt, x).unwrap();
        let ok = (mean * (1.0 + 3.0 * se / mean)).ln() <= log_bound && (lib.c_hat - c_hat).abs() <= 1e-9 * c_hat;
        all_ok &= ok;
        ratios.push(mean / delta0);
        parts.push(format!("eta {eta}: E sup = {mean:.3e}, ratio {:.3}, log bound {log_bound:.1}", mean / delta0));
    }
    let spread = ratios.iter().copied().fold(0.0, f64::max) / ratios.iter().copied().fold(f64::INFINITY, f64::min);
    Outcome {
        pass: all_ok && spread <= 3.0,
        detail: format!("{}; ratio spread {spread:.3}", parts.join("; ")),
    }
}

fn c8_coupled_marginals() -> Outcome {
    let replicas = 10_000;
    let cfg = mixed(1.0, 108).with_lambda(0.5);
    let m = units(8);
    let mt = perturbed(&m, 0.1);
    let coupled: Vec<(f64, usize)> = (0..replicas as u64)
        .map(|r| {
            let run = simulate_coupled(&m, &mt, None, None, &cfg, r, SimOptions::default()).unwrap();
            (run.first.first_event_time.unwrap_or(f64::INFINITY), run.first.final_state.len())
        })
        .collect();
    let direct = map_replicas(&cfg.clone().with_seed(8008).with_replicas(replicas), SimOptions::default(), |t| {
        (t.first_event_time.unwrap_or(f64::INFINITY), t.final_state.len())
    })
    .unwrap();
    let times = |v: &[(f64, usize)]| v.iter().map(|p| p.0).collect::<Vec<_>>();
    let hist = |v: &[(f64, usize)]| {
        let mut h = vec![0u64; 64];
        for p in v {
            h[p.1.min(63)] += 1;
        }
        h
    };
    let ks = ks_two_sample(&times(&coupled), &times(&direct)).unwrap();
    let chi = chi_square_homogeneity(&hist(&coupled), &hist(&direct)).unwrap();
    let level = bonferroni(0.01, 2);
    Outcome {
        pass: ks.p_value >= level && chi.p_value >= level,
        detail: format!(
            "first-jump KS p = {:.3}, N_T chi-square p = {:.3}, per-test level {level}",
            ks.p_value, chi.p_value
        ),
    }
}

fn c9_truncation() -> Outcome {
    let beta = Measure::new(vec![
        Atom::new(vec![0.3, 0.25, 0.2, 0.1, 0.1, 0.05], 1.0).unwrap(),
        Atom::new(vec![0.45, 0.3, 0.15, 0.1], 0.5).unwrap(),
        Atom::new(vec![0.6, 0.2, 0.1, 0.05, 0.03, 0.02], 0.7).unwrap(),
        Atom::new(vec![0.7, 0.3], 0.3).unwrap(),
    ]);
    let initial = seq(&(0..8).map(|k| 0.5f64.powi(k)).collect::<Vec<_>>());
    // F(x) = x keeps the particle count moderate under six-way splits
    let cfg = SimConfig::new(initial.clone(), CoagKernel::sum_power(1.0, 1.0).unwrap(), FragKernel::power(1.0).unwrap(), beta, 1.0, 109)
        .with_lambda(0.5);
    let q = 6;
    let mq = initial.truncate(q);
    let mut medians = Vec::new();
    for p in [1, 2, 4] {
        let mp = initial.truncate(p);
        let sups: Vec<f64> = (0..200u64)
            .map(|r| simulate_coupled(&mp, &mq, Some(p), Some(q), &cfg, r, SimOptions::default()).unwrap().sup_delta)
            .collect();
        medians.push(median(&sups));
    }
    let lines: Vec<f64> = [1, 2, 4, 6].iter().map(|&p| truncation_bound_line(&cfg, p, q, 1.0).unwrap().value).collect();
    let medians_ok = medians.windows(2).all(|w| w[1] <= w[0]);
    let lines_ok = lines.windows(2).all(|w| w[1] < w[0]) && lines[3] == 0.0;
    Outcome {
        pass: medians_ok && lines_ok,
        detail: format!(
            "medians p=1,2,4: {:.4} {:.4} {:.4}; bound line p=1,2,4,6: {:.3} {:.3} {:.3} {:.3}",
            medians[0], medians[1], medians[2], lines[0], lines[1], lines[2], lines[3]
        ),
    }
}

/// Returns the criterion outcome and whether the gated part passed.
fn c10_inequalities() -> (Outcome, bool) {
    let s = run_suite(10_000, 4, 110).unwrap();
    let tight_c2 = s.tight.iter().find(|(n, _)| n == "C2_01").map_or(0, |t| t.1);
    let worst = s.min_relative_slack.iter().map(|(_, v)| *v).fold(f64::INFINITY, f64::min);

    // the delta_1 example m = (3, 2, 1): C2_01 holds with equality
    let m = seq(&[3.0, 2.0, 1.0]);
    let half = Atom::new(vec![0.5, 0.5], 1.0).unwrap();
    let rep = check_inequalities(&m, &m, 1, 2, &half, 1.0, 1, 2).unwrap();
    let example_tight = rep.checks.iter().any(|c| c.name == "C2_01" && c.slack == 0.0);

    // counterexamples to the two bounds that do not hold in general
    let ones = seq(&[1.0, 1.0, 1.0, 1.0]);
    let rep = check_inequalities(&ones, &ones, 3, 4, &half, 1.0, 1, 2).unwrap();
    let d1c_false = rep.checks.iter().any(|c| c.name == PAIR_COALESCENCE_D && !c.pass);
    let diag: Vec<String> = s.diagnostics.iter().map(|(n, k, v)| format!("{n} violated in {v} of {k}")).collect();
    let perm_false = s.diagnostics.iter().any(|(n, _, v)| n == WEIGHTED_PERMUTATION && *v > 0);

    let gated = s.passed() && worst >= -1e-9 && tight_c2 > 0 && example_tight && d1c_false && perm_false;
    let every = gated && s.diagnostics.iter().all(|(_, _, v)| *v == 0);
    (
        Outcome {
            pass: every,
            detail: format!(
                "{} gated checks over {} cases, {} failures, min slack {worst:.2e}, C2_01 tight {tight_c2}x; not provable as stated: {}",
                s.checks,
                s.cases,
                s.failures.len(),
                diag.join(", ")
            ),
        },
        gated,
    )
}

fn c11_martingale() -> Outcome {
    let cfg = SimConfig::new(units(3), CoagKernel::sum_power(1.0, 1.0).unwrap(), FragKernel::constant(), Measure::binary_half(), 1.0, 111)
        .with_lambda(0.5)
        .with_stop_norm(6.0);
    let phi = |s: &MassSeq| (-s.get(1)).exp();
    let r = martingale_residual(&phi, &cfg, 10_000).unwrap();
    Outcome {
        pass: r.mean.abs() <= 3.0 * r.std_error,
        detail: format!("mean residual {:.3e}, stderr {:.3e}", r.mean, r.std_error),
    }
}

fn c12_replay() -> Outcome {
    let cfg = mixed(5.0, 112).with_lambda(0.5).with_replicas(300);
    let csv = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let runs = pool.install(|| run_replicas(&cfg, SimOptions::recording())).unwrap();
        let mut buf = Vec::new();
        io::write_events_csv(&mut buf, &runs).unwrap();
        buf
    };
    let a = csv(1);
    let b = csv(4);
    let c = csv(4);
    Outcome {
        pass: a == b && b == c && a.len() > 1000,
        detail: format!("{} bytes, identical across 3 runs and 1 or 4 workers", a.len()),
    }
}

#[test]
fn acceptance() {
    let secs = Duration::from_secs;
    let mut failed = Vec::new();
    let mut run = |n: usize, name: &str, limit: u64, f: &dyn Fn() -> Outcome| {
        let t = Instant::now();
        let out = f();
        if !line(n, name, &out, t.elapsed(), secs(limit)) {
            failed.push(n);
        }
    };
    run(1, "mass monotonicity", 10, &c1_mass_monotone);
    run(2, "lambda-moment bound", 60, &c2_moment_bound);
    run(3, "particle-count bound", 30, &c3_count_bound);
    run(4, "Kingman first jump", 30, &c4_kingman);
    run(5, "Yule growth", 60, &c5_yule);
    run(6, "oracle equivalence", 120, &c6_oracle);
    run(7, "coupling contraction", 300, &c7_coupling);
    run(8, "coupled marginals", 120, &c8_coupled_marginals);
    run(9, "truncation Cauchy diagnostic", 180, &c9_truncation);

    let t = Instant::now();
    let (out10, gated10) = c10_inequalities();
    let in_time = line(10, "inequality suite", &out10, t.elapsed(), secs(30)) || t.elapsed() <= secs(30);

    run(11, "martingale residual", 120, &c11_martingale);
    run(12, "replay determinism", 10, &c12_replay);

    // Criterion 10 cannot pass as stated: two of the listed bounds are false
    // (see the counterexamples in the metrics module). Everything else in it
    // is gated here.
    assert!(gated10 && in_time, "criterion 10 gated checks failed");
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
