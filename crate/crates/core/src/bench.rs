//! Memory and time comparison between the dense exact solver and the dual path.
//!
//! Memory is counted from the algorithm state each method holds, not from the
//! process, so the numbers are the same on every machine. Wall time is the
//! median over repeats.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::dual_solver::{solve, SolverConfig};
use crate::error::{invalid, OtError, Result};
use crate::exact::{dense_solver_bytes, solve_exact};
use crate::measures::{uniform_measure, CostOracle, DiscreteMeasure, PointCloud};
use crate::morph::{sample_shape, ShapeSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchMethod {
    Dense,
    Dual,
}

impl BenchMethod {
    pub const ALL: [BenchMethod; 2] = [BenchMethod::Dense, BenchMethod::Dual];

    pub fn name(self) -> &'static str {
        match self {
            BenchMethod::Dense => "dense",
            BenchMethod::Dual => "dual",
        }
    }
}

impl fmt::Display for BenchMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchMethod {
    type Err = OtError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dense" | "exact" => Ok(BenchMethod::Dense),
            "dual" => Ok(BenchMethod::Dual),
            other => invalid(format!("unknown method '{other}', expected dense or dual")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub n: usize,
    pub method: BenchMethod,
    pub peak_bytes: Option<u64>,
    pub wall_ms: f64,
    pub cost: Option<f64>,
    /// `ok`, or the error that stopped this size.
    pub status: String,
}

/// Uniform circle and square clouds of `n` points each. Shapes need two
/// points, so `n = 1` keeps the first point of each two-point shape.
pub fn bench_instance(n: usize) -> Result<(DiscreteMeasure, DiscreteMeasure)> {
    let shape = |spec: ShapeSpec| -> Result<PointCloud> {
        let cloud = sample_shape(&spec)?;
        if n == 1 {
            PointCloud::new(&[cloud.point(0).to_vec()])
        } else {
            Ok(cloud)
        }
    };
    let source = shape(ShapeSpec::circle(n.max(2)))?;
    let target = shape(ShapeSpec::square(n.max(2)))?;
    Ok((uniform_measure(source)?, uniform_measure(target)?))
}

fn run_once(
    method: BenchMethod,
    mu_s: &DiscreteMeasure,
    mu_t: &DiscreteMeasure,
    seed: u64,
) -> Result<(u64, f64)> {
    let oracle = CostOracle::new(mu_s.cloud(), mu_t.cloud())?;
    match method {
        BenchMethod::Dense => {
            let sol = solve_exact(mu_s, mu_t, &oracle)?;
            Ok((dense_solver_bytes(mu_s.len(), mu_t.len()), sol.objective))
        }
        BenchMethod::Dual => {
            let cfg = SolverConfig {
                seed,
                ..SolverConfig::default()
            };
            let sol = solve(mu_s, mu_t, &oracle, &cfg)?;
            Ok((sol.peak_state_bytes, sol.primal_cost))
        }
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let k = xs.len();
    if k % 2 == 1 {
        xs[k / 2]
    } else {
        (xs[k / 2 - 1] + xs[k / 2]) / 2.0
    }
}

/// One row per size and method. Failures become rows rather than errors.
pub fn run_bench(
    sizes: &[usize],
    methods: &[BenchMethod],
    repeats: usize,
    seed: u64,
) -> Result<Vec<BenchRow>> {
    if repeats == 0 {
        return invalid("repeats must be positive");
    }
    if let Some(&bad) = sizes.iter().find(|&&n| n == 0) {
        return invalid(format!("size {bad} must be positive"));
    }
    let mut rows = Vec::new();
    for &n in sizes {
        let (mu_s, mu_t) = bench_instance(n)?;
        for &method in methods {
            let mut times = Vec::with_capacity(repeats);
            let mut outcome = Ok((0, 0.0));
            for _ in 0..repeats {
                let start = Instant::now();
                outcome = run_once(method, &mu_s, &mu_t, seed);
                times.push(start.elapsed().as_secs_f64() * 1e3);
                if outcome.is_err() {
                    break;
                }
            }
            let row = match outcome {
                Ok((peak, cost)) => BenchRow {
                    n,
                    method,
                    peak_bytes: Some(peak),
                    wall_ms: median(times),
                    cost: Some(cost),
                    status: "ok".into(),
                },
                Err(e) => BenchRow {
                    n,
                    method,
                    peak_bytes: None,
                    wall_ms: median(times),
                    cost: None,
                    status: e.to_string(),
                },
            };
            rows.push(row);
        }
    }
    Ok(rows)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("n,method,peak_bytes,wall_ms,cost,status\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{:.3},{},{}\n",
            r.n,
            r.method,
            r.peak_bytes.map(|b| b.to_string()).unwrap_or_default(),
            r.wall_ms,
            r.cost.map(|c| c.to_string()).unwrap_or_default(),
            csv_field(&r.status)
        ));
    }
    out
}
