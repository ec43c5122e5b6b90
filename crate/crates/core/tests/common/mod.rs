//! Reference solvers that share no code with the crate's simplex.
#![allow(dead_code)]

use dualot::measures::{CostOracle, DiscreteMeasure, PointCloud};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Minimum over all permutations of `Σ C_{i,σ(i)} / N`.
pub fn brute_force_assignment(oracle: &CostOracle<'_>) -> f64 {
    let n = oracle.n_source();
    assert_eq!(n, oracle.n_target());
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    permute(&mut perm, 0, oracle, &mut best);
    best / n as f64
}

fn permute(perm: &mut Vec<usize>, k: usize, oracle: &CostOracle<'_>, best: &mut f64) {
    if k == perm.len() {
        let c: f64 = perm
            .iter()
            .enumerate()
            .map(|(i, &j)| oracle.cost(i, j))
            .sum();
        *best = best.min(c);
        return;
    }
    for m in k..perm.len() {
        perm.swap(k, m);
        permute(perm, k + 1, oracle, best);
        perm.swap(k, m);
    }
}

/// Successive shortest paths with Bellman-Ford on the residual graph.
pub fn min_cost_flow(a: &[f64], b: &[f64], oracle: &CostOracle<'_>) -> f64 {
    let (ns, nt) = (a.len(), b.len());
    let mut supply = a.to_vec();
    let mut demand = b.to_vec();
    let mut flow = vec![vec![0.0f64; nt]; ns];
    let tiny = 1e-13;
    loop {
        if supply.iter().all(|s| *s <= tiny) {
            break;
        }
        // nodes: sources 0..ns, sinks ns..ns+nt
        let n = ns + nt;
        let mut dist = vec![f64::INFINITY; n];
        let mut prev = vec![usize::MAX; n];
        for i in 0..ns {
            if supply[i] > tiny {
                dist[i] = 0.0;
            }
        }
        for _ in 0..n {
            let mut changed = false;
            for i in 0..ns {
                if dist[i].is_finite() {
                    for j in 0..nt {
                        let d = dist[i] + oracle.cost(i, j);
                        if d < dist[ns + j] - 1e-15 {
                            dist[ns + j] = d;
                            prev[ns + j] = i;
                            changed = true;
                        }
                    }
                }
            }
            for j in 0..nt {
                if dist[ns + j].is_finite() {
                    for i in 0..ns {
                        if flow[i][j] > tiny {
                            let d = dist[ns + j] - oracle.cost(i, j);
                            if d < dist[i] - 1e-15 {
                                dist[i] = d;
                                prev[i] = ns + j;
                                changed = true;
                            }
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let sink = (0..nt)
            .filter(|&j| demand[j] > tiny && dist[ns + j].is_finite())
            .min_by(|&x, &y| dist[ns + x].total_cmp(&dist[ns + y]))
            .expect("balanced instance always has an augmenting path");
        // walk back to find bottleneck
        let mut path = Vec::new();
        let mut v = ns + sink;
        while !(v < ns && prev[v] == usize::MAX) {
            path.push(v);
            v = prev[v];
        }
        path.push(v);
        path.reverse();
        let mut delta = supply[path[0]].min(demand[sink]);
        for w in path.windows(2) {
            if w[0] >= ns {
                delta = delta.min(flow[w[1]][w[0] - ns]);
            }
        }
        for w in path.windows(2) {
            if w[0] < ns {
                flow[w[0]][w[1] - ns] += delta;
            } else {
                flow[w[1]][w[0] - ns] -= delta;
            }
        }
        supply[path[0]] -= delta;
        demand[sink] -= delta;
    }
    let mut total = 0.0;
    for (i, row) in flow.iter().enumerate() {
        for (j, f) in row.iter().enumerate() {
            total += f * oracle.cost(i, j);
        }
    }
    total
}

pub fn random_cloud(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> PointCloud {
    let pts: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..dim).map(|_| rng.gen()).collect())
        .collect();
    PointCloud::new(&pts).unwrap()
}

pub fn random_measure(rng: &mut ChaCha8Rng, cloud: PointCloud, uniform: bool) -> DiscreteMeasure {
    if uniform {
        dualot::measures::uniform_measure(cloud).unwrap()
    } else {
        let w: Vec<f64> = (0..cloud.len()).map(|_| rng.gen_range(0.1..1.1)).collect();
        DiscreteMeasure::from_weights(cloud, w).unwrap()
    }
}

/// The seeded small-instance suite: sizes in 2..=8, every other instance uniform.
pub fn small_instance(seed: u64) -> (DiscreteMeasure, DiscreteMeasure) {
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
    let ns = rng.gen_range(2..=8);
    let nt = rng.gen_range(2..=8);
    let s = random_cloud(&mut rng, ns, 2);
    let t = random_cloud(&mut rng, nt, 2);
    let uniform = seed.is_multiple_of(2);
    let mu_s = random_measure(&mut rng, s, uniform);
    let mu_t = random_measure(&mut rng, t, uniform);
    (mu_s, mu_t)
}
