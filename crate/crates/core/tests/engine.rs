use brlsvrg::aggregation::{AggregatorSpec, BaseRule};
use brlsvrg::analysis::{solve_reference, ReferenceSolution};
use brlsvrg::attacks::AttackSpec;
use brlsvrg::data_io::synthetic::gaussian;
use brlsvrg::engine::{run, worker_seed, Method, RunConfig, RunStatus, WorkerState};
use brlsvrg::objective::{FiniteSum, Objective, QuadraticSum};
use proptest::prelude::*;

fn problem() -> (Objective, ReferenceSolution) {
    let obj = Objective::with_default_l2(gaussian(60, 5, 3).unwrap()).unwrap();
    let sol = solve_reference(&obj, 1e-12, 200_000).unwrap();
    (obj, sol)
}

fn config(obj: &Objective, method: Method, attack: AttackSpec, seed: u64) -> RunConfig {
    RunConfig {
        method,
        gamma: 1.0 / (12.0 * obj.smoothness()),
        batch_size: 3,
        p: 0.05,
        workers: 8,
        byzantine_ids: vec![6, 7],
        aggregator: AggregatorSpec::bucketed(BaseRule::GeometricMedian, 2),
        attack,
        iterations: 300,
        master_seed: seed,
        eval_every: 25,
        lyapunov: Default::default(),
    }
}

const ATTACKS: [AttackSpec; 5] = [
    AttackSpec::None,
    AttackSpec::BitFlip,
    AttackSpec::LabelFlip,
    AttackSpec::Alie { z: 1.06 },
    AttackSpec::Ipm { eps: 0.1 },
];

fn csv(trace: &brlsvrg::engine::RunTrace) -> Vec<u8> {
    let mut out = Vec::new();
    trace.write_csv(&mut out, false).unwrap();
    out
}

#[test]
fn hand_computed_estimators_on_two_quadratics() {
    // f_1 = x², f_2 = (x − 1)² as (1/2)·2·(x − c)²
    let toy = QuadraticSum::scalar(&[2.0, 2.0], &[0.0, 1.0]).unwrap();
    let mut w = WorkerState::lsvrg(0, false, &toy, &[1.0], 0);
    assert_eq!(w.estimate_with_batch(&toy, &[0.0], &[0]), vec![-1.0]);
    let mut s = WorkerState::saga(0, false, &toy, &[1.0], 0);
    assert_eq!(s.estimate_with_batch(&toy, &[0.0], &[0]), vec![-1.0]);
    assert_eq!(s.saga_entry(0).unwrap(), &[0.0]);
}

#[test]
fn lsvrg_at_reference_is_the_full_gradient() {
    let (obj, _) = problem();
    let x = vec![0.3, -0.2, 0.1, 0.0, 0.5];
    let mut w = WorkerState::lsvrg(0, false, &obj, &x, 1);
    let full = obj.full_grad(&x).unwrap();
    for _ in 0..5 {
        let g = w.estimate(&obj, &x, 4);
        for (a, b) in g.iter().zip(&full) {
            assert!((a - b).abs() <= 1e-15 * (1.0 + b.abs()));
        }
    }
}

#[test]
fn switch_frequency_matches_probability() {
    let (obj, _) = problem();
    let x = vec![0.0; 5];
    let mut w = WorkerState::lsvrg(0, false, &obj, &x, worker_seed(77, 0));
    let hits = (0..100_000).filter(|_| w.maybe_switch_reference(&x, 0.01)).count();
    let freq = hits as f64 / 1e5;
    assert!((0.007..=0.013).contains(&freq), "frequency {freq}");
    assert!((0..100).all(|_| w.maybe_switch_reference(&x, 1.0)));
}

#[test]
fn runs_are_bit_identical_for_a_seed() {
    let (obj, sol) = problem();
    let x0 = vec![0.0; 5];
    for method in [Method::BrLsvrg, Method::ByrdSaga] {
        for attack in ATTACKS {
            let cfg = config(&obj, method, attack, 42);
            let a = run(&cfg, &obj, &x0, Some(&sol)).unwrap();
            let b = run(&cfg, &obj, &x0, Some(&sol)).unwrap();
            assert_eq!(csv(&a), csv(&b));
            assert_eq!(a.final_x, b.final_x);
            let c = run(&config(&obj, method, attack, 43), &obj, &x0, Some(&sol)).unwrap();
            assert_ne!(a.final_x, c.final_x);
        }
    }
}

#[test]
fn byzantine_vectors_never_reach_honest_workers() {
    let (obj, sol) = problem();
    let x0 = vec![0.0; 5];
    let baseline = run(
        &config(&obj, Method::BrLsvrg, AttackSpec::None, 9),
        &obj,
        &x0,
        Some(&sol),
    )
    .unwrap();
    for attack in ATTACKS {
        let t = run(&config(&obj, Method::BrLsvrg, attack, 9), &obj, &x0, Some(&sol)).unwrap();
        assert_eq!(t.honest_oracle_calls, baseline.honest_oracle_calls, "{attack:?}");
        assert_eq!(t.reference_switches, baseline.reference_switches, "{attack:?}");
        let calls: Vec<u64> = t.records.iter().map(|r| r.oracle_calls).collect();
        let base: Vec<u64> = baseline.records.iter().map(|r| r.oracle_calls).collect();
        assert_eq!(calls, base, "{attack:?}");
    }
}

#[test]
fn trace_invariants() {
    let (obj, sol) = problem();
    let t = run(
        &config(&obj, Method::ByrdSaga, AttackSpec::BitFlip, 1),
        &obj,
        &[0.0; 5],
        Some(&sol),
    )
    .unwrap();
    assert!(t
        .records
        .windows(2)
        .all(|w| w[0].k < w[1].k && w[0].oracle_calls <= w[1].oracle_calls));
    assert_eq!(t.last().k, 300);
    assert!(t.records.iter().all(|r| r.sigma_k2 >= 0.0 && r.dist2 >= 0.0));
}

#[test]
fn full_batch_every_round_contracts_monotonically() {
    let (obj, sol) = problem();
    let m = obj.num_components();
    let cfg = RunConfig {
        batch_size: m,
        p: 1.0,
        workers: 16,
        byzantine_ids: vec![],
        aggregator: AggregatorSpec::plain(BaseRule::Mean),
        attack: AttackSpec::None,
        iterations: 400,
        eval_every: 1,
        ..config(&obj, Method::BrLsvrg, AttackSpec::None, 5)
    };
    let t = run(&cfg, &obj, &[0.5; 5], Some(&sol)).unwrap();
    assert!(
        t.records.windows(2).all(|w| w[1].dist2 <= w[0].dist2),
        "distance to x* increased"
    );
    assert!(t.last().dist2 < 0.5 * t.records[0].dist2);
}

#[test]
fn half_byzantine_bit_flip_with_mean_stalls() {
    let (obj, sol) = problem();
    let cfg = RunConfig {
        workers: 4,
        byzantine_ids: vec![2, 3],
        aggregator: AggregatorSpec::plain(BaseRule::Mean),
        iterations: 2000,
        eval_every: 100,
        ..config(&obj, Method::BrLsvrg, AttackSpec::BitFlip, 2)
    };
    let t = run(&cfg, &obj, &[0.0; 5], Some(&sol)).unwrap();
    let diverged = matches!(t.status, RunStatus::Diverged { .. });
    assert!(diverged || t.last().subopt >= 0.5 * t.records[0].subopt);
}

#[test]
fn honest_cost_per_round_is_two_b_plus_pm() {
    let (obj, _) = problem();
    let cfg = RunConfig {
        byzantine_ids: vec![],
        attack: AttackSpec::None,
        aggregator: AggregatorSpec::plain(BaseRule::Mean),
        iterations: 5000,
        eval_every: 5000,
        ..config(&obj, Method::BrLsvrg, AttackSpec::None, 8)
    };
    let t = run(&cfg, &obj, &[0.0; 5], None).unwrap();
    let m = obj.num_components() as f64;
    let per_round = (t.honest_oracle_calls as f64 - 8.0 * m) / (8.0 * 5000.0);
    let expected = 2.0 * 3.0 + 0.05 * m;
    assert!(
        (per_round - expected).abs() <= 0.05 * expected,
        "{per_round} vs {expected}"
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn zero_rounds_leave_x_unchanged(seed in any::<u64>(), x in proptest::collection::vec(-1.0f64..1.0, 5)) {
        let (obj, sol) = problem();
        let cfg = RunConfig { iterations: 0, ..config(&obj, Method::BrLsvrg, AttackSpec::BitFlip, seed) };
        let t = run(&cfg, &obj, &x, Some(&sol)).unwrap();
        prop_assert_eq!(t.records.len(), 1);
        prop_assert_eq!(t.final_x, x);
    }
}
