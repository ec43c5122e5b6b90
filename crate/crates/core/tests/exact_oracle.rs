mod common;

use dualot::dual_solver::dual_objective;
use dualot::measures::{plan_cost, uniform_measure};
use dualot::{solve_exact, solve_restricted, CostOracle, DiscreteMeasure, PointCloud};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn integer_cloud(rng: &mut ChaCha8Rng, n: usize) -> PointCloud {
    let pts: Vec<Vec<f64>> = (0..n)
        .map(|_| vec![rng.gen_range(0..=9) as f64, rng.gen_range(0..=9) as f64])
        .collect();
    PointCloud::new(&pts).unwrap()
}

#[test]
fn four_by_four_integer_grid_matches_permutation_minimum() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = integer_cloud(&mut rng, 4);
        let t = integer_cloud(&mut rng, 4);
        let oracle = CostOracle::new(&s, &t).unwrap();
        let sol = solve_exact(
            &uniform_measure(s.clone()).unwrap(),
            &uniform_measure(t.clone()).unwrap(),
            &oracle,
        )
        .unwrap();
        let brute = common::brute_force_assignment(&oracle);
        assert!(
            (sol.objective - brute).abs() <= 1e-12 * brute.max(1.0),
            "seed {seed}"
        );
    }
}

#[test]
fn uniform_instances_up_to_five_match_brute_force() {
    for n in 1..=5 {
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 * n as u64 + seed);
            let s = common::random_cloud(&mut rng, n, 2);
            let t = common::random_cloud(&mut rng, n, 2);
            let oracle = CostOracle::new(&s, &t).unwrap();
            let sol = solve_exact(
                &uniform_measure(s.clone()).unwrap(),
                &uniform_measure(t.clone()).unwrap(),
                &oracle,
            )
            .unwrap();
            let brute = common::brute_force_assignment(&oracle);
            assert!(
                (sol.objective - brute).abs() <= 1e-9 * brute.max(1e-12),
                "n {n} seed {seed}"
            );
        }
    }
}

#[test]
fn weighted_instances_match_successive_shortest_paths() {
    for seed in 0..60 {
        let (mu_s, mu_t) = common::small_instance(seed);
        let oracle = CostOracle::new(mu_s.cloud(), mu_t.cloud()).unwrap();
        let sol = solve_exact(&mu_s, &mu_t, &oracle).unwrap();
        let reference = common::min_cost_flow(mu_s.masses(), mu_t.masses(), &oracle);
        assert!(
            (sol.objective - reference).abs() <= 1e-9 * reference.max(1e-12),
            "seed {seed}"
        );
    }
}

#[test]
fn solutions_carry_an_optimality_certificate() {
    for seed in 0..40 {
        let (mu_s, mu_t) = common::small_instance(seed);
        let oracle = CostOracle::new(mu_s.cloud(), mu_t.cloud()).unwrap();
        let sol = solve_exact(&mu_s, &mu_t, &oracle).unwrap();

        assert!(sol.plan.marginal_error(mu_s.masses(), mu_t.masses()) <= 1e-9);
        let cost = plan_cost(&sol.plan, &oracle).unwrap();
        assert!((cost - sol.objective).abs() <= 1e-9 * cost.max(1e-12));
        assert!(sol.is_basic);
        assert!(sol.plan.len() < mu_s.len() + mu_t.len());

        let p = &sol.potentials;
        let tol = 1e-12 * (1.0 + oracle.cost(0, 0));
        for i in 0..mu_s.len() {
            for j in 0..mu_t.len() {
                assert!(
                    p.phi[i] + p.psi[j] <= oracle.cost(i, j) + tol,
                    "seed {seed} ({i},{j})"
                );
            }
        }
        for &(i, j, _) in sol.plan.entries() {
            assert!(
                (oracle.cost(i, j) - p.phi[i] - p.psi[j]).abs() <= 1e-12,
                "slack on support"
            );
        }
        let dual = dual_objective(p, &mu_s, &mu_t).unwrap();
        assert!(
            (dual - sol.objective).abs() <= 1e-9 * sol.objective.max(1e-12),
            "seed {seed}"
        );
    }
}

#[test]
fn objective_is_symmetric() {
    for seed in 0..30 {
        let (mu_s, mu_t) = common::small_instance(seed);
        let oracle = CostOracle::new(mu_s.cloud(), mu_t.cloud()).unwrap();
        let forward = solve_exact(&mu_s, &mu_t, &oracle).unwrap().objective;
        let backward = solve_exact(&mu_t, &mu_s, &oracle.transposed())
            .unwrap()
            .objective;
        assert!(
            (forward - backward).abs() <= 1e-12 * forward.max(1.0),
            "seed {seed}"
        );
    }
}

#[test]
fn scaling_coordinates_scales_the_objective_quadratically() {
    for seed in 0..20 {
        let (mu_s, mu_t) = common::small_instance(seed);
        let oracle = CostOracle::new(mu_s.cloud(), mu_t.cloud()).unwrap();
        let base = solve_exact(&mu_s, &mu_t, &oracle).unwrap();
        for alpha in [0.5, 3.0] {
            let s =
                DiscreteMeasure::new(mu_s.cloud().scaled(alpha), mu_s.masses().to_vec()).unwrap();
            let t =
                DiscreteMeasure::new(mu_t.cloud().scaled(alpha), mu_t.masses().to_vec()).unwrap();
            let scaled_oracle = CostOracle::new(s.cloud(), t.cloud()).unwrap();
            let scaled = solve_exact(&s, &t, &scaled_oracle).unwrap();
            let ratio = scaled.objective / base.objective;
            assert!(
                (ratio - alpha * alpha).abs() <= 1e-9 * alpha * alpha,
                "seed {seed}"
            );
            let support = |p: &dualot::TransportPlan| {
                p.entries()
                    .iter()
                    .map(|&(i, j, _)| (i, j))
                    .collect::<Vec<_>>()
            };
            assert_eq!(
                support(&scaled.plan),
                support(&base.plan),
                "seed {seed} alpha {alpha}"
            );
        }
    }
}

#[test]
fn full_support_restriction_is_no_restriction() {
    for seed in 0..20 {
        let (mu_s, mu_t) = common::small_instance(seed);
        let oracle = CostOracle::new(mu_s.cloud(), mu_t.cloud()).unwrap();
        let all: Vec<(usize, usize)> = (0..mu_s.len())
            .flat_map(|i| (0..mu_t.len()).map(move |j| (i, j)))
            .collect();
        let restricted = solve_restricted(&mu_s, &mu_t, &oracle, &all)
            .unwrap()
            .solved()
            .unwrap();
        let full = solve_exact(&mu_s, &mu_t, &oracle).unwrap();
        assert_eq!(restricted.objective, full.objective);
    }
}

#[test]
fn solves_are_deterministic() {
    let (mu_s, mu_t) = common::small_instance(7);
    let oracle = CostOracle::new(mu_s.cloud(), mu_t.cloud()).unwrap();
    let a = solve_exact(&mu_s, &mu_t, &oracle).unwrap();
    let b = solve_exact(&mu_s, &mu_t, &oracle).unwrap();
    assert_eq!(a.plan.to_json(), b.plan.to_json());
}
