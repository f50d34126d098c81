use std::sync::Arc;

use super::*;
use crate::dislocation::{DislocationAtom, DislocationMeasure};
use crate::rng::ReplicaRng;
use crate::stats::{ks_two_sample, mean_se};

type Cfg = SimConfig<f64>;

fn seq(v: &[f64]) -> MassSequence<f64> {
    MassSequence::reorder(v).unwrap()
}

fn kingman(n: usize) -> Cfg {
    SimConfig::new(
        MassSequence::uniform(n, 1.0).unwrap(),
        CoagulationKernel::constant(),
        FragmentationKernel::zero(),
        DislocationMeasure::empty(),
        1.0,
        11,
    )
}

fn yule(horizon: f64) -> Cfg {
    SimConfig::new(
        seq(&[1.0]),
        CoagulationKernel::zero(),
        FragmentationKernel::constant(),
        DislocationMeasure::binary_half(),
        horizon,
        5,
    )
}

fn mixed() -> Cfg {
    SimConfig::new(
        MassSequence::uniform(8, 1.0).unwrap(),
        CoagulationKernel::sum_power(1.0, 1.0).unwrap(),
        FragmentationKernel::constant(),
        DislocationMeasure::binary_half(),
        5.0,
        3,
    )
    .with_lambda(0.5)
}

fn lossy_measure() -> DislocationMeasure<f64> {
    DislocationMeasure::new(vec![
        DislocationAtom::new(vec![0.5, 0.3, 0.1], 1.0).unwrap(),
        DislocationAtom::new(vec![0.4, 0.4, 0.2], 0.5).unwrap(),
        DislocationAtom::new(vec![0.8, 0.1], 0.25).unwrap(),
    ])
}

#[test]
fn total_rates_examples() {
    let k1 = CoagulationKernel::<f64>::constant();
    let f0 = FragmentationKernel::zero();
    let none = DislocationMeasure::empty();
    let (rc, rf) = total_rates(&MassSequence::uniform(4, 1.0).unwrap(), &k1, &f0, &none);
    assert_eq!((rc, rf), (6.0, 0.0));

    let sum = CoagulationKernel::sum_power(1.0, 1.0).unwrap();
    let (rc, _) = total_rates(&seq(&[3.0, 2.0, 1.0]), &sum, &f0, &none);
    assert_eq!(rc, 12.0);

    let two = DislocationMeasure::new(vec![
        DislocationAtom::new(vec![0.5, 0.5], 1.5).unwrap(),
        DislocationAtom::new(vec![0.6, 0.2], 0.5).unwrap(),
    ]);
    let (_, rf) = total_rates(&seq(&[1.0, 2.0, 3.0]), &CoagulationKernel::zero(), &FragmentationKernel::constant(), &two);
    assert_eq!(rf, 6.0);
}

#[test]
fn step_examples() {
    let mut rng = ReplicaRng::new(1, 0);
    let cfg = kingman(1);
    assert!(step(&seq(&[1.0]), 0.0, &mut rng, &cfg).unwrap().is_none());

    let cfg = kingman(2);
    let (rec, next) = step(&seq(&[1.0, 1.0]), 0.0, &mut rng, &cfg).unwrap().unwrap();
    assert_eq!(rec.kind, EventKind::Coalescence { i: 1, j: 2 });
    assert_eq!(next.masses(), &[2.0]);
    assert!(rec.time > 0.0);
    assert_eq!((rec.pre_count, rec.post_count), (2, 1));

    let cfg = yule(1.0);
    let (rec, next) = step(&seq(&[1.0]), 0.5, &mut rng, &cfg).unwrap().unwrap();
    assert_eq!(rec.kind, EventKind::Fragmentation { i: 1, atom: 0 });
    assert_eq!(next.masses(), &[0.5, 0.5]);
    assert!(rec.time > 0.5);
}

#[test]
fn zero_horizon_keeps_initial_state() {
    let cfg = mixed();
    let cfg = SimConfig { horizon: 0.0, ..cfg };
    let t = simulate(&cfg).unwrap();
    assert!(t.events.is_empty());
    assert_eq!(t.final_state, cfg.initial);
    assert_eq!(t.end_time, 0.0);
}

#[test]
fn absorbed_state_fast_forwards() {
    let cfg = SimConfig { horizon: 50.0, ..kingman(3) };
    let t = simulate(&cfg).unwrap();
    assert!(t.absorbed);
    assert_eq!(t.final_state.masses(), &[3.0]);
    assert_eq!(t.end_time, 50.0);
    assert_eq!(t.coalescences, 2);
}

#[test]
fn validation_rejects_bad_configs() {
    let cfg = mixed();
    assert!(SimConfig { horizon: -1.0, ..cfg.clone() }.validate().is_err());
    assert!(SimConfig { horizon: f64::NAN, ..cfg.clone() }.validate().is_err());
    assert!(cfg.clone().with_lambda(1.5).validate().is_err());
    assert!(cfg.clone().with_replicas(0).validate().is_err());
    // |m|_{1/2} = 8
    assert!(cfg.clone().with_stop_norm(8.0).validate().is_err());
    assert!(cfg.clone().with_stop_norm(8.5).validate().is_ok());
}

#[test]
fn fingerprint_tracks_every_field() {
    let a = mixed();
    assert_eq!(a.fingerprint(), mixed().fingerprint());
    assert_ne!(a.fingerprint(), a.clone().with_seed(4).fingerprint());
    assert_ne!(a.fingerprint(), a.clone().with_lambda(0.25).fingerprint());
    assert_ne!(a.fingerprint(), a.clone().with_stop_norm(20.0).fingerprint());
    assert_ne!(a.fingerprint(), SimConfig { beta: lossy_measure(), ..a.clone() }.fingerprint());
}

#[test]
fn kingman_first_event_is_exponential_rate_ten() {
    let cfg = SimConfig { horizon: 100.0, ..kingman(5) }.with_replicas(20_000);
    let times = map_replicas(&cfg, SimOptions::default(), |t| t.first_event_time.unwrap()).unwrap();
    let (mean, se) = mean_se(&times);
    assert!((mean - 0.1).abs() < 4.0 * se, "mean {mean} se {se}");
    let mut rng = ReplicaRng::new(99, 0);
    let reference: Vec<f64> = (0..20_000).map(|_| rng.exponential(10.0)).collect();
    assert!(ks_two_sample(&times, &reference).unwrap().p_value > 1e-3);
}

#[test]
fn yule_mean_count() {
    let cfg = yule(2.0).with_replicas(20_000);
    let counts = map_replicas(&cfg, SimOptions::default(), |t| t.final_state.len() as f64).unwrap();
    let (mean, se) = mean_se(&counts);
    let e2 = 2f64.exp();
    assert!((mean - e2).abs() < 4.0 * se, "mean {mean} se {se}");
}

#[test]
fn replay_is_bit_identical_and_pool_independent() {
    let cfg = SimConfig { beta: lossy_measure(), ..mixed() }.with_replicas(64);
    let opts = SimOptions::recording();
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a = one.install(|| run_replicas(&cfg, opts)).unwrap();
    let b = four.install(|| run_replicas(&cfg, opts)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a[0].events, a[1].events);
    assert!(a.iter().all(|t| t.config_hash == cfg.fingerprint()));
}

#[test]
fn event_records_are_consistent() {
    let cfg = SimConfig { beta: lossy_measure(), ..mixed() };
    let t = simulate(&cfg).unwrap();
    assert!(!t.events.is_empty());
    let mut prev_time = 0.0;
    let mut prev_count = cfg.initial.len();
    for e in &t.events {
        assert!(e.time > prev_time);
        assert_eq!(e.pre_count, prev_count);
        assert!(e.post_mass <= e.pre_mass * (1.0 + 1e-12));
        match e.kind {
            EventKind::Coalescence { i, j } => {
                assert!(i < j && j <= e.pre_count);
                assert_eq!(e.post_count + 1, e.pre_count);
            }
            EventKind::Fragmentation { i, atom } => {
                assert!(i <= e.pre_count && atom < cfg.beta.atoms().len());
            }
        }
        prev_time = e.time;
        prev_count = e.post_count;
    }
    assert_eq!(prev_count, t.final_state.len());
    assert_eq!(t.event_count(), t.events.len());
}

#[test]
fn incremental_rates_survive_audit() {
    let kernels = [
        CoagulationKernel::sum_power(1.0, 1.0).unwrap(),
        CoagulationKernel::cross_power(0.3, 0.4).unwrap(),
        CoagulationKernel::product_over_sum(0.9, 0.3).unwrap(),
        CoagulationKernel::exp_cutoff(0.7, 0.5, 0.2).unwrap(),
    ];
    for coag in kernels {
        let cfg = SimConfig {
            coag,
            frag: FragmentationKernel::power(0.5).unwrap(),
            beta: lossy_measure(),
            horizon: 3.0,
            ..mixed()
        };
        for r in 0..20 {
            let opts = SimOptions { record_events: false, audit_rates: true };
            simulate_replica(&cfg, r, opts).unwrap();
        }
    }
}

#[test]
fn stop_norm_censors_at_first_crossing() {
    let cfg = yule(20.0).with_lambda(0.5).with_stop_norm(3.0);
    let t = simulate(&cfg).unwrap();
    assert!(t.stopped);
    let last = t.events.last().unwrap();
    assert!(last.stopped && last.post_norm >= 3.0);
    assert_eq!(t.end_time, last.time);
    assert!(t.events[..t.events.len() - 1].iter().all(|e| e.post_norm < 3.0 && !e.stopped));
    assert_eq!(t.sup_norm_lambda, last.post_norm);
}

#[test]
fn count_invariant_with_multi_fragments() {
    let cfg = SimConfig { beta: lossy_measure(), frag: FragmentationKernel::constant(), ..mixed() }
        .with_replicas(200);
    let k = cfg.beta.max_fragments();
    for t in run_replicas(&cfg, SimOptions::default()).unwrap() {
        assert!(t.final_state.len() <= t.initial_count + (k - 1) * t.fragmentations);
        assert!(t.sup_count <= t.initial_count + (k - 1) * t.fragmentations);
    }
}

#[test]
fn coupled_identical_starts_stay_together() {
    let cfg = SimConfig { beta: lossy_measure(), ..mixed() };
    let m = cfg.initial.clone();
    for r in 0..10 {
        let run = simulate_coupled(&m, &m, None, None, &cfg, r, SimOptions::recording()).unwrap();
        assert_eq!(run.first.events, run.second.events);
        assert_eq!(run.first.final_state, run.second.final_state);
        assert_eq!(run.sup_delta, 0.0);
    }
}

#[test]
fn coupled_constant_kernel_hand_trace() {
    let eta = 0.25;
    let cfg = SimConfig { horizon: 100.0, ..kingman(2) };
    let run = simulate_coupled(&seq(&[1.0, 1.0]), &seq(&[1.0, 1.0 + eta]), None, None, &cfg, 0, SimOptions::recording())
        .unwrap();
    assert_eq!(run.first.events.len(), 1);
    assert_eq!(run.first.events[0].time, run.second.events[0].time);
    assert_eq!(run.first.final_state.masses(), &[2.0]);
    assert!((run.sup_delta - eta).abs() < 1e-15);
}

#[test]
fn coupled_marginal_matches_ssa() {
    let cfg = SimConfig { beta: lossy_measure(), horizon: 1.0, ..mixed() }.with_replicas(3000);
    let m = cfg.initial.clone();
    let mut mt_raw = m.masses().to_vec();
    mt_raw[0] = 1.5;
    let mt = seq(&mt_raw);
    let coupled: Vec<(f64, f64)> = (0..3000u64)
        .map(|r| {
            let run = simulate_coupled(&m, &mt, None, None, &cfg, r, SimOptions::default()).unwrap();
            (run.first.first_event_time.unwrap_or(f64::INFINITY), run.first.final_state.len() as f64)
        })
        .collect();
    let direct = map_replicas(&cfg.clone().with_seed(1234), SimOptions::default(), |t| {
        (t.first_event_time.unwrap_or(f64::INFINITY), t.final_state.len() as f64)
    })
    .unwrap();
    let split = |v: &[(f64, f64)]| -> (Vec<f64>, Vec<f64>) { v.iter().copied().unzip() };
    let (ct, cn) = split(&coupled);
    let (dt, dn) = split(&direct);
    assert!(ks_two_sample(&ct, &dt).unwrap().p_value > 1e-3);
    let (cm, cse) = mean_se(&cn);
    let (dm, dse) = mean_se(&dn);
    assert!((cm - dm).abs() < 4.0 * (cse * cse + dse * dse).sqrt());
}

#[test]
fn coupled_levels_apply_projection() {
    let beta = DislocationMeasure::new(vec![DislocationAtom::new(vec![0.5, 0.25, 0.25], 1.0).unwrap()]);
    let cfg = SimConfig { beta, ..yule(100.0) }.with_lambda(0.5).with_stop_norm(1.5);
    let m = seq(&[1.0]);
    let run = simulate_coupled(&m, &m, Some(2), Some(3), &cfg, 0, SimOptions::recording()).unwrap();
    let first = &run.first.events[0];
    let second = &run.second.events[0];
    assert_eq!(first.time, second.time);
    assert_eq!(first.post_count, 2);
    assert_eq!(second.post_count, 3);
    assert!(first.post_mass < second.post_mass);
    // level 1 admits no atom with theta_1 > 0
    let run = simulate_coupled(&m, &m, Some(1), Some(3), &cfg, 0, SimOptions::recording()).unwrap();
    assert!(run.first.events.is_empty());
    assert!(!run.second.events.is_empty());
    assert!(simulate_coupled(&m, &m, Some(3), Some(2), &cfg, 0, SimOptions::default()).is_err());
}

#[test]
fn coupled_needs_majorant() {
    let rate: crate::kernels::CoagFn<f64> = Arc::new(|x: f64, y: f64| (x * y).sqrt());
    let coag = CoagulationKernel::custom("geo", rate, 1.0, None, None).unwrap();
    let cfg = SimConfig { coag, ..mixed() };
    let m = cfg.initial.clone();
    assert!(simulate(&cfg).is_ok());
    let err = simulate_coupled(&m, &m, None, None, &cfg, 0, SimOptions::default()).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
}

#[test]
fn generator_examples() {
    let cfg = SimConfig { beta: DislocationMeasure::binary_half(), ..mixed() };
    let m = seq(&[3.0, 2.0, 1.0]);
    assert_eq!(generator_apply(&|_: &MassSequence<f64>| 7.0, &m, &cfg).unwrap(), 0.0);
    let mass = generator_apply(&|s: &MassSequence<f64>| s.total_mass(), &m, &cfg).unwrap();
    assert!(mass.abs() < 1e-12);
    let count = |s: &MassSequence<f64>| s.len() as f64;
    assert_eq!(generator_apply(&count, &seq(&[1.0, 1.0, 1.0]), &kingman(3)).unwrap(), -3.0);
}

#[test]
fn generator_respects_lemma_bound() {
    let cfg = SimConfig { beta: lossy_measure(), ..mixed() };
    let phi = |s: &MassSequence<f64>| (-s.get(1)).exp();
    let mut rng = ReplicaRng::new(8, 0);
    for _ in 0..200 {
        let n = 1 + rng.below(6) as usize;
        let raw: Vec<f64> = (0..n).map(|_| rng.uniform_open() * 2.0).collect();
        let m = seq(&raw);
        let c = m.norm(0.5).unwrap();
        let bound = generator_bound(&cfg.coag, &cfg.frag, &cfg.beta, 0.5, 2.0, c).unwrap();
        assert!(generator_apply(&phi, &m, &cfg).unwrap().abs() <= bound);
    }
}

#[test]
fn residual_trivial_cases() {
    let cfg = mixed().with_stop_norm(30.0);
    let r = martingale_residual(&|_: &MassSequence<f64>| 1.0, &cfg, 50).unwrap();
    assert_eq!((r.mean, r.std_error), (0.0, 0.0));
    let cfg0 = SimConfig { horizon: 0.0, ..cfg };
    let phi = |s: &MassSequence<f64>| (-s.get(1)).exp();
    let r = martingale_residual(&phi, &cfg0, 50).unwrap();
    assert_eq!(r.mean, 0.0);
}

#[test]
fn residual_is_centred() {
    let cfg = SimConfig {
        initial: seq(&[1.0, 0.5, 0.25]),
        beta: lossy_measure(),
        horizon: 1.0,
        ..mixed()
    }
    .with_stop_norm(6.0);
    let phi = |s: &MassSequence<f64>| (-s.get(1)).exp();
    let r = martingale_residual(&phi, &cfg, 4000).unwrap();
    assert!(r.within(4.0), "{r:?}");
    let bound = generator_bound(&cfg.coag, &cfg.frag, &cfg.beta, 0.5, 2.0, 6.0).unwrap();
    assert!(r.max_abs_generator <= bound);
}

#[test]
fn compensator_is_finite_and_bounded() {
    let cfg = SimConfig { beta: lossy_measure(), horizon: 2.0, ..mixed() };
    for r in 0..20 {
        let (value, bound) = compensator_check(&cfg, r).unwrap();
        assert!(value.is_finite() && value > 0.0);
        assert!(value <= bound, "{value} > {bound}");
    }
}

#[test]
fn bounds_closed_forms() {
    let cfg = mixed();
    // F = 1, C_beta^{1/2} = 2 (1/2)^{1/2} - 0 ... binary half: theta_2^l + (1 - theta_1)^l
    let c = 2.0 * 0.5f64.sqrt();
    assert!((moment_bound(&cfg, 2.0).unwrap() - 8.0 * (c * 2.0).exp()).abs() < 1e-9);
    assert!((count_bound(&cfg, 1.0).unwrap() - 8.0 * 1f64.exp()).abs() < 1e-9);

    let m = cfg.initial.clone();
    let mut raw = m.masses().to_vec();
    raw[0] += 0.1;
    let mt = seq(&raw);
    let cc = coupling_constants(&cfg.coag, &cfg.frag, &cfg.beta, 0.5, &m, &mt, 24.0).unwrap();
    // kappa at index 1/2 for K = x + y: 2 sqrt(a)
    assert!((cc.kappa - 2.0 * 8.1f64.sqrt()).abs() < 1e-12);
    assert_eq!(cc.mu, 0.0);
    assert!((cc.rate - (8.0 * cc.kappa * 24.0 + c)).abs() < 1e-9);
    assert!(cc.rate <= cc.c_hat * 25.0);
    assert!(cc.log_bound(0.1, 1.0) >= cc.log_rate_bound(0.1, 1.0));
}

#[test]
fn truncation_line_vanishes_at_stable_level() {
    let cfg = SimConfig { beta: lossy_measure(), ..mixed() };
    let q = cfg.beta.stable_level().max(8);
    let line = truncation_bound_line(&cfg, q, q, 1.0).unwrap();
    assert_eq!(line.value, 0.0);
    let line = truncation_bound_line(&cfg, 1, q, 1.0).unwrap();
    assert!(line.value > 0.0 && line.b > 0.0);
    assert!(truncation_bound_line(&cfg, 0, q, 1.0).is_err());
}

#[test]
fn single_precision_runs() {
    let cfg = SimConfig::<f32>::new(
        MassSequence::uniform(6, 1.0f32).unwrap(),
        CoagulationKernel::sum_power(1.0, 1.0).unwrap(),
        FragmentationKernel::constant(),
        DislocationMeasure::binary_half(),
        2.0,
        1,
    );
    let t = simulate(&cfg).unwrap();
    assert!(t.event_count() > 0);
    assert!(t.final_state.total_mass() <= 6.0 * (1.0 + 1e-6));
}
