mod common;

use dualot::dual_solver::{
    dual_objective, extract_support, project_feasible, sgd_epoch, SolverState,
};
use dualot::measures::{plan_cost, uniform_measure};
use dualot::morph::{sample_shape, ShapeSpec};
use dualot::{solve, solve_exact, CostOracle, DiscreteMeasure, SolverConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn uniform_pair(seed: u64, n: usize) -> (DiscreteMeasure, DiscreteMeasure) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = common::random_cloud(&mut rng, n, 2);
    let t = common::random_cloud(&mut rng, n, 2);
    (uniform_measure(s).unwrap(), uniform_measure(t).unwrap())
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs[xs.len() / 2]
}

#[test]
fn oracle_potentials_attain_the_oracle_objective() {
    for seed in 0..20 {
        let (mu_s, mu_t) = uniform_pair(seed, 4);
        let oracle = CostOracle::new(mu_s.cloud(), mu_t.cloud()).unwrap();
        let exact = solve_exact(&mu_s, &mu_t, &oracle).unwrap();
        let dual = dual_objective(&exact.potentials, &mu_s, &mu_t).unwrap();
        assert!((dual - exact.objective).abs() <= 1e-9, "seed {seed}");
    }
}

#[test]
fn every_projected_epoch_respects_weak_duality() {
    let cfg = SolverConfig::default();
    for seed in 0..30 {
        let (mu_s, mu_t) = common::small_instance(seed);
        let oracle = CostOracle::new(mu_s.cloud(), mu_t.cloud()).unwrap();
        let exact = solve_exact(&mu_s, &mu_t, &oracle).unwrap().objective;
        let mut state =
            SolverState::new(&mu_s, &mu_t, &oracle, &SolverConfig { seed, ..cfg }).unwrap();
        for epoch in 0..60 {
            let p = project_feasible(&state.potentials, &oracle);
            assert!(p.max_violation(&oracle) <= 1e-12);
            let v = dual_objective(&p, &mu_s, &mu_t).unwrap();
            assert!(
                v <= exact + 1e-9,
                "seed {seed} epoch {epoch}: {v} > {exact}"
            );
            sgd_epoch(&mut state, &mu_s, &mu_t, &oracle, &cfg);
        }
    }
}

#[test]
fn epoch_medians_across_seeds_do_not_decrease() {
    let (mu_s, mu_t) = uniform_pair(3, 8);
    let oracle = CostOracle::new(mu_s.cloud(), mu_t.cloud()).unwrap();
    let epochs = 64;
    let mut values = vec![Vec::new(); epochs + 1];
    for seed in 0..21 {
        let cfg = SolverConfig {
            seed,
            ..SolverConfig::default()
        };
        let mut state = SolverState::new(&mu_s, &mu_t, &oracle, &cfg).unwrap();
        for (epoch, slot) in values.iter_mut().enumerate() {
            if epoch > 0 {
                sgd_epoch(&mut state, &mu_s, &mu_t, &oracle, &cfg);
            }
            let p = project_feasible(&state.potentials, &oracle);
            slot.push(dual_objective(&p, &mu_s, &mu_t).unwrap());
        }
    }
    let medians: Vec<f64> = values.into_iter().map(median).collect();
    for w in medians.windows(2) {
        assert!(
            w[1] >= w[0] - 1e-12,
            "median fell from {} to {}",
            w[0],
            w[1]
        );
    }
    assert!(medians[epochs] > medians[0]);
}

#[test]
fn four_by_four_seed_seven_closes_the_gap_in_500_epochs() {
    let (mu_s, mu_t) = uniform_pair(7, 4);
    let oracle = CostOracle::new(mu_s.cloud(), mu_t.cloud()).unwrap();
    let exact = solve_exact(&mu_s, &mu_t, &oracle).unwrap().objective;
    let cfg = SolverConfig {
        seed: 7,
        ..SolverConfig::default()
    };
    let mut state = SolverState::new(&mu_s, &mu_t, &oracle, &cfg).unwrap();
    for _ in 0..500 {
        sgd_epoch(&mut state, &mu_s, &mu_t, &oracle, &cfg);
    }
    let p = project_feasible(&state.potentials, &oracle);
    let dual = dual_objective(&p, &mu_s, &mu_t).unwrap();
    let gap = (exact - dual) / exact;
    assert!((0.0..=1e-3).contains(&gap), "gap {gap}");
}

#[test]
fn support_covers_the_oracle_plan() {
    for seed in 0..40 {
        let (mu_s, mu_t) = common::small_instance(seed);
        let oracle = CostOracle::new(mu_s.cloud(), mu_t.cloud()).unwrap();
        let exact = solve_exact(&mu_s, &mu_t, &oracle).unwrap();
        let support = extract_support(&exact.potentials, &oracle, 1e-9).unwrap();
        for &(i, j, _) in exact.plan.entries() {
            assert!(
                support.binary_search(&(i, j)).is_ok(),
                "seed {seed} misses ({i},{j})"
            );
        }
        let all = extract_support(&exact.potentials, &oracle, f64::INFINITY).unwrap();
        assert_eq!(all.len(), mu_s.len() * mu_t.len());
    }
}

#[test]
fn eight_point_instances_match_the_exact_solver() {
    for seed in 0..100 {
        let (mu_s, mu_t) = uniform_pair(500 + seed, 8);
        let oracle = CostOracle::new(mu_s.cloud(), mu_t.cloud()).unwrap();
        let exact = solve_exact(&mu_s, &mu_t, &oracle).unwrap().objective;
        let cfg = SolverConfig {
            seed,
            ..SolverConfig::default()
        };
        let sol = solve(&mu_s, &mu_t, &oracle, &cfg).unwrap();
        assert!(
            (sol.primal_cost - exact).abs() <= 1e-6 * exact,
            "seed {seed}"
        );
    }
}

#[test]
fn solutions_are_feasible_sparse_and_consistent() {
    for seed in 0..40 {
        let (mu_s, mu_t) = common::small_instance(seed);
        let oracle = CostOracle::new(mu_s.cloud(), mu_t.cloud()).unwrap();
        let cfg = SolverConfig {
            seed,
            ..SolverConfig::default()
        };
        let sol = solve(&mu_s, &mu_t, &oracle, &cfg).unwrap();
        assert!(sol.plan.marginal_error(mu_s.masses(), mu_t.masses()) <= 1e-9);
        assert!(sol.plan.len() < mu_s.len() + mu_t.len());
        assert!(sol.relative_gap >= -1e-9, "seed {seed}");
        let cost = plan_cost(&sol.plan, &oracle).unwrap();
        assert_eq!(cost, sol.primal_cost);
        let expected_gap = (sol.primal_cost - sol.dual_value) / sol.primal_cost.max(1e-30);
        assert_eq!(sol.relative_gap, expected_gap);
        assert!(sol.potentials.max_violation(&oracle) <= 1e-12);
    }
}

#[test]
fn same_seed_gives_identical_serialization() {
    let (mu_s, mu_t) = uniform_pair(11, 40);
    let oracle = CostOracle::new(mu_s.cloud(), mu_t.cloud()).unwrap();
    let cfg = SolverConfig {
        seed: 5,
        ..SolverConfig::default()
    };
    let a = solve(&mu_s, &mu_t, &oracle, &cfg).unwrap();
    let b = solve(&mu_s, &mu_t, &oracle, &cfg).unwrap();
    assert_eq!(a.to_json(), b.to_json());
}

fn circle_square(n: usize) -> (DiscreteMeasure, DiscreteMeasure) {
    let s = sample_shape(&ShapeSpec::circle(n)).unwrap();
    let t = sample_shape(&ShapeSpec::square(n)).unwrap();
    (uniform_measure(s).unwrap(), uniform_measure(t).unwrap())
}

#[test]
fn state_bytes_grow_linearly_with_size() {
    // the byte count depends on the final exact plan, not on how far the
    // ascent got, so a short run measures the same thing
    let cfg = SolverConfig {
        max_epochs: 40,
        ..SolverConfig::default()
    };
    let bytes: Vec<u64> = [100, 1000, 10_000]
        .into_iter()
        .map(|n| {
            let (mu_s, mu_t) = circle_square(n);
            let oracle = CostOracle::new(mu_s.cloud(), mu_t.cloud()).unwrap();
            solve(&mu_s, &mu_t, &oracle, &cfg).unwrap().peak_state_bytes
        })
        .collect();
    for w in bytes.windows(2) {
        let ratio = w[1] as f64 / w[0] as f64;
        assert!(ratio <= 12.0, "bytes {bytes:?}");
    }
}
