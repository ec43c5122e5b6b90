use std::fs;
use std::path::Path;

use dualot::adapt::{run_benchmark, summary_csv, AdaptConfig, AdaptMode, GaussianTask};
use dualot::bench::{bench_csv, run_bench, BenchMethod};
use dualot::dual_solver::dual_objective;
use dualot::exact::dense_solver_bytes;
use dualot::measures::read_cloud_csv;
use dualot::morph::{morph_sequence, ShapeSpec};
use dualot::{
    solve as solve_dual, solve_exact, CostOracle, OTSolution, OtError, Result, SolverConfig,
};

use crate::Method;

pub fn exit_code(e: &OtError) -> u8 {
    match e {
        OtError::InvalidInput(_)
        | OtError::Index { .. }
        | OtError::Parse { .. }
        | OtError::Io(_)
        | OtError::Json(_) => 2,
        OtError::Capacity(_)
        | OtError::SupportEmpty { .. }
        | OtError::Diverged { .. }
        | OtError::Round { .. } => 3,
    }
}

/// Prefixes file-related errors with the file name, keeping them input errors.
fn with_path(path: &Path, e: OtError) -> OtError {
    match e {
        OtError::Parse { .. } | OtError::Io(_) => {
            OtError::InvalidInput(format!("{}: {e}", path.display()))
        }
        other => other,
    }
}

fn solver_config(config: Option<&Path>, seed: Option<u64>) -> Result<SolverConfig> {
    let mut cfg = match config {
        Some(path) => SolverConfig::from_file(path).map_err(|e| with_path(path, e))?,
        None => SolverConfig::default(),
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)
        .map_err(|e| OtError::InvalidInput(format!("cannot write {}: {e}", path.display())))
}

pub fn solve(
    source: &Path,
    target: &Path,
    method: Method,
    config: Option<&Path>,
    seed: Option<u64>,
    out: &Path,
) -> Result<String> {
    let cfg = solver_config(config, seed)?;
    let mu_s = read_cloud_csv(source).map_err(|e| with_path(source, e))?;
    let mu_t = read_cloud_csv(target).map_err(|e| with_path(target, e))?;
    let oracle = CostOracle::new(mu_s.cloud(), mu_t.cloud())?;
    let solution = match method {
        Method::Dual => solve_dual(&mu_s, &mu_t, &oracle, &cfg)?,
        Method::Exact => {
            let exact = solve_exact(&mu_s, &mu_t, &oracle)?;
            OTSolution {
                primal_cost: exact.objective,
                dual_value: dual_objective(&exact.potentials, &mu_s, &mu_t)?,
                relative_gap: 0.0,
                epochs_used: 0,
                peak_state_bytes: dense_solver_bytes(mu_s.len(), mu_t.len()),
                plan: exact.plan,
                potentials: exact.potentials,
            }
        }
    };
    write(out, &solution.to_json())?;
    Ok(format!(
        "{} x {} points, cost {}, {} plan entries, written to {}",
        mu_s.len(),
        mu_t.len(),
        solution.primal_cost,
        solution.plan.len(),
        out.display()
    ))
}

pub fn morph(
    source: &str,
    target: &str,
    frames: usize,
    config: Option<&Path>,
    seed: Option<u64>,
    out: &Path,
) -> Result<String> {
    let cfg = solver_config(config, seed)?;
    let src: ShapeSpec = source.parse()?;
    let tgt: ShapeSpec = target.parse()?;
    let morph = morph_sequence(&src, &tgt, frames, &cfg)?;
    fs::create_dir_all(out)
        .map_err(|e| OtError::InvalidInput(format!("cannot create {}: {e}", out.display())))?;
    let width = (frames - 1).to_string().len().max(3);
    for (k, frame) in morph.frames.iter().enumerate() {
        write(
            &out.join(format!("frame_{k:0width$}.csv")),
            &frame.to_csv()?,
        )?;
    }
    Ok(format!(
        "{source} -> {target}: cost {}, {} frames written to {}",
        morph.solution.primal_cost,
        morph.frames.len(),
        out.display()
    ))
}

fn parse_list<T>(text: &str, what: &str, item: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    let items: Vec<T> = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(item)
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(OtError::InvalidInput(format!("{what} list is empty")));
    }
    Ok(items)
}

fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let number = |s: &str| {
        s.trim()
            .parse::<u64>()
            .map_err(|_| OtError::InvalidInput(format!("bad seed {s:?}")))
    };
    if let Some((lo, hi)) = text.split_once("..") {
        let (lo, hi) = (number(lo)?, number(hi.trim_start_matches('='))?);
        if lo > hi {
            return Err(OtError::InvalidInput(format!("empty seed range {text:?}")));
        }
        return Ok((lo..=hi).collect());
    }
    parse_list(text, "seed", number)
}

pub fn adapt(modes: &str, seeds: &str, out: &Path) -> Result<String> {
    let modes = parse_list(modes, "mode", |s| s.parse::<AdaptMode>())?;
    let seeds = parse_seeds(seeds)?;
    let task = GaussianTask::default();
    let cfg = AdaptConfig::default();
    let mut rows = Vec::new();
    for &seed in &seeds {
        rows.extend(run_benchmark(&task, &modes, seed, &cfg)?);
    }
    write(out, &summary_csv(&rows))?;
    let mut summary = format!("{} runs written to {}", rows.len(), out.display());
    for mode in &modes {
        let accs: Vec<f64> = rows
            .iter()
            .filter(|r| r.mode == *mode)
            .map(|r| r.target_acc)
            .collect();
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        summary.push_str(&format!("\n  {mode}: mean target accuracy {mean:.4}"));
    }
    let base = rows.iter().map(|r| r.source_only_target_acc).sum::<f64>() / rows.len() as f64;
    summary.push_str(&format!("\n  source only: mean target accuracy {base:.4}"));
    Ok(summary)
}

pub fn bench(sizes: &str, repeats: usize, methods: &str, seed: u64, out: &Path) -> Result<String> {
    let sizes = parse_list(sizes, "size", |s| {
        s.parse::<usize>()
            .map_err(|_| OtError::InvalidInput(format!("bad size {s:?}")))
    })?;
    let methods = parse_list(methods, "method", |s| s.parse::<BenchMethod>())?;
    let rows = run_bench(&sizes, &methods, repeats, seed)?;
    write(out, &bench_csv(&rows))?;
    let mut summary = format!("{} rows written to {}", rows.len(), out.display());
    for r in &rows {
        let peak = r
            .peak_bytes
            .map(|b| b.to_string())
            .unwrap_or_else(|| "-".into());
        summary.push_str(&format!(
            "\n  n={} {}: peak {} bytes, {:.1} ms, {}",
            r.n, r.method, peak, r.wall_ms, r.status
        ));
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seeds("1..10").unwrap(), (1..=10).collect::<Vec<_>>());
        assert_eq!(parse_seeds("1..=3").unwrap(), vec![1, 2, 3]);
        assert_eq!(parse_seeds("4, 2,9").unwrap(), vec![4, 2, 9]);
        assert!(parse_seeds("5..1").is_err());
        assert!(parse_seeds("a").is_err());
        assert!(parse_seeds("").is_err());
    }

    #[test]
    fn error_classes() {
        assert_eq!(exit_code(&OtError::InvalidInput("x".into())), 2);
        assert_eq!(
            exit_code(&OtError::Parse {
                line: 3,
                message: "x".into()
            }),
            2
        );
        assert_eq!(exit_code(&OtError::Capacity("x".into())), 3);
        assert_eq!(exit_code(&OtError::Diverged { epoch: 1 }), 3);
    }
}
