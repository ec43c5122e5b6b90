//! Sparse optimal transport by stochastic ascent on the Kantorovich dual.
//!
//! The dual `max Σ φ_i a_i + Σ ψ_j b_j` subject to `φ_i + ψ_j ≤ C_ij` splits
//! into one term per target sample once each `ψ_j` is pinned to its tightest
//! feasible value `min_i (C_ij − φ_i)`. An epoch visits `N_s + N_t` random
//! target samples. Each visit projects `ψ_j` onto its halfspaces, which
//! selects the active source `i*`, and then moves `φ` along a SAGA-refined
//! ascent direction. The SAGA table keeps, per target, the active source seen
//! on its last visit; its running mean is the mass each source currently
//! ships. Both fit in `O(N_s + N_t)` memory.
//!
//! After the epochs, the pairs whose constraints are within `ε` of tight form
//! a candidate support. A network simplex restricted to that support gives a
//! basic plan, and reduced-cost pricing over all pairs confirms that no pair
//! outside the support could lower its cost.

use std::fmt;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{invalid, OtError, Result};
use crate::exact::{solve_restricted, ExactSolution, Restricted};
use crate::measures::{plan_cost, CostOracle, DiscreteMeasure, Metric, PlanEntry, TransportPlan};

/// Entries sampled when estimating the typical cost.
const SCALE_SAMPLE: usize = 1000;
const SCALE_SEED: u64 = 0x5eed_c057;
const MAX_SUPPORT_DOUBLINGS: usize = 20;
const MAX_PRICING_ROUNDS: usize = 10_000;
/// Reduced costs below `-PRICING_TOL * max C` send a pair back into the support.
const PRICING_TOL: f64 = 1e-10;

/// Kantorovich potentials: `phi` on the source side, `psi` on the target side.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualPotentials {
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
}

impl DualPotentials {
    pub fn new(phi: Vec<f64>, psi: Vec<f64>) -> Self {
        Self { phi, psi }
    }

    pub fn zeros(n_source: usize, n_target: usize) -> Self {
        Self::new(vec![0.0; n_source], vec![0.0; n_target])
    }

    /// `(φ + c, ψ − c)`, which leaves the dual objective unchanged.
    pub fn translated(&self, c: f64) -> Self {
        Self::new(
            self.phi.iter().map(|p| p + c).collect(),
            self.psi.iter().map(|p| p - c).collect(),
        )
    }

    /// Largest `φ_i + ψ_j − C_ij` over all pairs; `≤ 0` means feasible.
    pub fn max_violation(&self, oracle: &CostOracle<'_>) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for (i, p) in self.phi.iter().enumerate() {
            for (j, q) in self.psi.iter().enumerate() {
                worst = worst.max(p + q - oracle.cost(i, j));
            }
        }
        worst
    }

    pub fn is_finite(&self) -> bool {
        self.phi.iter().chain(&self.psi).all(|x| x.is_finite())
    }

    fn bytes(&self) -> u64 {
        ((self.phi.len() + self.psi.len()) * std::mem::size_of::<f64>()) as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepDecay {
    /// `λ_t = λ₀ / sqrt(1 + t / (N_s + N_t))`
    #[default]
    InverseSqrt,
    Constant,
}

impl fmt::Display for StepDecay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StepDecay::InverseSqrt => "inverse_sqrt",
            StepDecay::Constant => "constant",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub max_epochs: usize,
    /// Initial step `λ₀`. `None` derives it from the median sampled cost.
    pub base_step: Option<f64>,
    pub step_decay: StepDecay,
    /// Support threshold relative to the median sampled cost.
    pub support_tolerance_rel: f64,
    pub gap_tolerance_rel: f64,
    pub seed: u64,
    /// Epochs between feasibility restorations and gap checks.
    pub ctransform_period: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_epochs: 5000,
            base_step: None,
            step_decay: StepDecay::InverseSqrt,
            support_tolerance_rel: 1e-6,
            gap_tolerance_rel: 1e-4,
            seed: 0,
            ctransform_period: 10,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 {
            return invalid("max_epochs must be positive");
        }
        if self.ctransform_period == 0 {
            return invalid("ctransform_period must be positive");
        }
        if let Some(step) = self.base_step {
            if !(step.is_finite() && step > 0.0) {
                return invalid(format!("base_step must be positive, got {step}"));
            }
        }
        if !(self.support_tolerance_rel > 0.0 && self.support_tolerance_rel < 1.0) {
            return invalid("support_tolerance_rel must lie in (0, 1)");
        }
        if self.gap_tolerance_rel.is_nan() || self.gap_tolerance_rel <= 0.0 {
            return invalid("gap_tolerance_rel must be positive");
        }
        Ok(())
    }

    /// Reads `key = value` lines. Blank lines and `#` comments are ignored;
    /// missing keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let Some((key, value)) = body.split_once('=') else {
                return Err(OtError::Parse {
                    line,
                    message: format!("expected key=value, found {body:?}"),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            let bad = |what: &str| OtError::Parse {
                line,
                message: format!("{key}: cannot parse {value:?} as {what}"),
            };
            match key {
                "max_epochs" => cfg.max_epochs = value.parse().map_err(|_| bad("an integer"))?,
                "base_step" => {
                    cfg.base_step = if value.eq_ignore_ascii_case("auto") {
                        None
                    } else {
                        Some(value.parse().map_err(|_| bad("a number or auto"))?)
                    }
                }
                "step_decay" => {
                    cfg.step_decay = match value.to_ascii_lowercase().as_str() {
                        "inverse_sqrt" | "inversesqrt" => StepDecay::InverseSqrt,
                        "constant" => StepDecay::Constant,
                        _ => return Err(bad("inverse_sqrt or constant")),
                    }
                }
                "support_tolerance_rel" => {
                    cfg.support_tolerance_rel = value.parse().map_err(|_| bad("a number"))?
                }
                "gap_tolerance_rel" => {
                    cfg.gap_tolerance_rel = value.parse().map_err(|_| bad("a number"))?
                }
                "seed" => cfg.seed = value.parse().map_err(|_| bad("an integer"))?,
                "ctransform_period" => {
                    cfg.ctransform_period = value.parse().map_err(|_| bad("an integer"))?
                }
                _ => {
                    return Err(OtError::Parse {
                        line,
                        message: format!("unknown key {key:?}"),
                    })
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// The config as `key = value` lines accepted by [`SolverConfig::parse`].
    pub fn to_text(&self) -> String {
        let step = self
            .base_step
            .map_or_else(|| "auto".to_string(), |s| s.to_string());
        format!(
            "max_epochs = {}\nbase_step = {}\nstep_decay = {}\nsupport_tolerance_rel = {}\n\
             gap_tolerance_rel = {}\nseed = {}\nctransform_period = {}\n",
            self.max_epochs,
            step,
            self.step_decay,
            self.support_tolerance_rel,
            self.gap_tolerance_rel,
            self.seed,
            self.ctransform_period
        )
    }
}

/// SAGA memory for the target-sample terms of the dual.
#[derive(Debug, Clone, PartialEq)]
pub struct SvrState {
    /// Running mean of the stored gradients, as the mass each source ships
    /// under the last-seen assignment (length `N_s`).
    pub assigned_mass: Vec<f64>,
    /// Stored gradient per target sample, kept as the index of the source
    /// that was active on its last visit (length `N_t`).
    pub last_active: Vec<u32>,
    pub visit_counts: Vec<u32>,
    pub step_index: u64,
}

impl SvrState {
    fn bytes(&self) -> u64 {
        (self.assigned_mass.len() * std::mem::size_of::<f64>()
            + self.last_active.len() * std::mem::size_of::<u32>()
            + self.visit_counts.len() * std::mem::size_of::<u32>()) as u64
    }
}

#[derive(Debug, Clone)]
pub struct SolverState {
    pub potentials: DualPotentials,
    pub svr: SvrState,
    /// `λ₀` in cost units.
    pub base_step: f64,
    pub epoch: usize,
    pub diverged: bool,
    rng: ChaCha8Rng,
}

impl SolverState {
    /// `φ = 0`, `ψ` its c-transform, and the SAGA table filled from that point.
    pub fn new(
        mu_s: &DiscreteMeasure,
        mu_t: &DiscreteMeasure,
        oracle: &CostOracle<'_>,
        cfg: &SolverConfig,
    ) -> Result<Self> {
        check_shapes(mu_s.len(), mu_t.len(), oracle)?;
        let (ns, nt) = (mu_s.len(), mu_t.len());
        let base_step = cfg
            .base_step
            .unwrap_or_else(|| default_base_step(cost_scale(oracle), ns, nt));
        let phi = vec![0.0; ns];
        let mut psi = vec![0.0; nt];
        let mut last_active = vec![0u32; nt];
        for j in 0..nt {
            let (i, v) = tightest_source(&phi, oracle, j);
            psi[j] = v;
            last_active[j] = i as u32;
        }
        let mut svr = SvrState {
            assigned_mass: vec![0.0; ns],
            last_active,
            visit_counts: vec![0; nt],
            step_index: 0,
        };
        refresh_assigned_mass(&mut svr, mu_t.masses());
        Ok(Self {
            potentials: DualPotentials::new(phi, psi),
            svr,
            base_step,
            epoch: 0,
            diverged: false,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        })
    }

    fn bytes(&self) -> u64 {
        self.potentials.bytes() + self.svr.bytes()
    }
}

/// Outcome of [`solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct OTSolution {
    pub plan: TransportPlan,
    /// Best feasible potentials found by the stochastic ascent.
    pub potentials: DualPotentials,
    pub primal_cost: f64,
    pub dual_value: f64,
    pub relative_gap: f64,
    pub epochs_used: usize,
    /// Potentials, SAGA memory, the best-iterate copy and the sparse plan.
    pub peak_state_bytes: u64,
}

#[derive(Serialize)]
struct SolutionRecord<'a> {
    #[serde(flatten)]
    plan: &'a TransportPlan,
    primal_cost: f64,
    dual_value: f64,
    relative_gap: f64,
    epochs: usize,
    peak_state_bytes: u64,
}

impl OTSolution {
    pub fn to_json(&self) -> String {
        serde_json::to_string(&SolutionRecord {
            plan: &self.plan,
            primal_cost: self.primal_cost,
            dual_value: self.dual_value,
            relative_gap: self.relative_gap,
            epochs: self.epochs_used,
            peak_state_bytes: self.peak_state_bytes,
        })
        .expect("solution serialization is infallible")
    }
}

/// `Σ φ_i μ_s,i + Σ ψ_j μ_t,j`.
pub fn dual_objective(
    p: &DualPotentials,
    mu_s: &DiscreteMeasure,
    mu_t: &DiscreteMeasure,
) -> Result<f64> {
    if p.phi.len() != mu_s.len() || p.psi.len() != mu_t.len() {
        return invalid(format!(
            "potentials are {}+{} long, measures {}+{}",
            p.phi.len(),
            p.psi.len(),
            mu_s.len(),
            mu_t.len()
        ));
    }
    Ok(weighted_sum(p, mu_s.masses(), mu_t.masses()))
}

fn weighted_sum(p: &DualPotentials, a: &[f64], b: &[f64]) -> f64 {
    let s: f64 = p.phi.iter().zip(a).map(|(x, m)| x * m).sum();
    let t: f64 = p.psi.iter().zip(b).map(|(x, m)| x * m).sum();
    s + t
}

/// Median of the cost over a fixed sample of entries, falling back to the
/// sample maximum and then to one when the costs vanish.
pub fn cost_scale(oracle: &CostOracle<'_>) -> f64 {
    let (ns, nt) = (oracle.n_source(), oracle.n_target());
    let total = ns * nt;
    let mut values: Vec<f64> = if total <= SCALE_SAMPLE {
        (0..total).map(|k| oracle.cost(k / nt, k % nt)).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(SCALE_SEED);
        sample(&mut rng, total, SCALE_SAMPLE)
            .into_iter()
            .map(|k| oracle.cost(k / nt, k % nt))
            .collect()
    };
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    let median = if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    };
    let max = values.last().copied().unwrap_or(0.0);
    if median > 0.0 {
        median
    } else if max > 0.0 {
        max
    } else {
        1.0
    }
}

fn default_base_step(scale: f64, ns: usize, nt: usize) -> f64 {
    let n = ns.max(nt) as f64;
    scale / 10.0 / (n / 8.0).sqrt().max(1.0)
}

fn step_size(cfg: &SolverConfig, base: f64, step_index: u64, n: usize) -> f64 {
    match cfg.step_decay {
        StepDecay::Constant => base,
        StepDecay::InverseSqrt => base / (1.0 + step_index as f64 / n as f64).sqrt(),
    }
}

/// `(argmin_i (C_ij − φ_i), min)`, lowest index on ties.
#[inline]
fn tightest_source(phi: &[f64], oracle: &CostOracle<'_>, j: usize) -> (usize, f64) {
    if oracle.source().dim() == 2 && oracle.metric() == Metric::SquaredEuclidean {
        return tightest_source_planar(phi, oracle.source().as_flat(), oracle.target().point(j));
    }
    let mut best = (0, f64::INFINITY);
    for (i, (c, p)) in oracle.costs_to_target(j).zip(phi).enumerate() {
        let v = c - p;
        if v < best.1 {
            best = (i, v);
        }
    }
    best
}

/// Four interleaved running minima keep the loop free of a serial dependency.
fn tightest_source_planar(phi: &[f64], xs: &[f64], y: &[f64]) -> (usize, f64) {
    const LANES: usize = 4;
    let (y0, y1) = (y[0], y[1]);
    let mut val = [f64::INFINITY; LANES];
    let mut idx = [0usize; LANES];
    let chunks = phi.len() / LANES;
    for c in 0..chunks {
        let base = c * LANES;
        let p = &phi[base..base + LANES];
        let x = &xs[2 * base..2 * base + 2 * LANES];
        for l in 0..LANES {
            let d0 = x[2 * l] - y0;
            let d1 = x[2 * l + 1] - y1;
            let v = d0 * d0 + d1 * d1 - p[l];
            if v < val[l] {
                val[l] = v;
                idx[l] = base + l;
            }
        }
    }
    let mut best = (0, f64::INFINITY);
    for l in 0..LANES {
        if val[l] < best.1 || (val[l] == best.1 && idx[l] < best.0) {
            best = (idx[l], val[l]);
        }
    }
    for i in chunks * LANES..phi.len() {
        let d0 = xs[2 * i] - y0;
        let d1 = xs[2 * i + 1] - y1;
        let v = d0 * d0 + d1 * d1 - phi[i];
        if v < best.1 {
            best = (i, v);
        }
    }
    best
}

#[inline]
fn tightest_target(psi: &[f64], oracle: &CostOracle<'_>, i: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, (c, q)) in oracle.costs_from_source(i).zip(psi).enumerate() {
        let v = c - q;
        if v < best.1 {
            best = (j, v);
        }
    }
    best
}

fn refresh_assigned_mass(svr: &mut SvrState, b: &[f64]) {
    svr.assigned_mass.iter_mut().for_each(|m| *m = 0.0);
    for (j, &i) in svr.last_active.iter().enumerate() {
        svr.assigned_mass[i as usize] += b[j];
    }
}

/// One pass of `N_s + N_t` sampled updates.
///
/// Each update draws a target `j`, sets `ψ_j` to `min_i (C_ij − φ_i)` (the
/// projection onto its halfspaces, which names the active source `i*`) and
/// steps `φ` along the refined ascent direction
/// `(a − m) + N_t b_j (e_old − e_i*)`, where `m` is the stored mean and
/// `old` the source stored for `j`.
pub fn sgd_epoch(
    state: &mut SolverState,
    mu_s: &DiscreteMeasure,
    mu_t: &DiscreteMeasure,
    oracle: &CostOracle<'_>,
    cfg: &SolverConfig,
) {
    let (ns, nt) = (mu_s.len(), mu_t.len());
    let a = mu_s.masses();
    let b = mu_t.masses();
    let n = ns + nt;
    // rebuild the running mean exactly so float drift cannot accumulate
    refresh_assigned_mass(&mut state.svr, b);

    for _ in 0..n {
        let j = state.rng.gen_range(0..nt);
        let lam = step_size(cfg, state.base_step, state.svr.step_index, n);
        let (active, value) = tightest_source(&state.potentials.phi, oracle, j);
        state.potentials.psi[j] = value;

        let old = state.svr.last_active[j] as usize;
        if lam != 0.0 {
            let phi = &mut state.potentials.phi;
            for ((p, &ai), &mi) in phi.iter_mut().zip(a).zip(&state.svr.assigned_mass) {
                *p += lam * (ai - mi);
            }
            let kick = lam * nt as f64 * b[j];
            phi[old] += kick;
            phi[active] -= kick;
        }
        state.svr.assigned_mass[old] -= b[j];
        state.svr.assigned_mass[active] += b[j];
        state.svr.last_active[j] = active as u32;
        state.svr.visit_counts[j] += 1;
        state.svr.step_index += 1;
    }
    state.epoch += 1;
    if !state.potentials.is_finite() {
        state.diverged = true;
    }
}

/// Restores feasibility by replacing `ψ` with the c-transform of `φ`.
pub fn project_feasible(p: &DualPotentials, oracle: &CostOracle<'_>) -> DualPotentials {
    let psi = (0..oracle.n_target())
        .map(|j| tightest_source(&p.phi, oracle, j).1)
        .collect();
    DualPotentials::new(p.phi.clone(), psi)
}

/// Replaces `φ` with the c-transform of `ψ`. Feasible input stays feasible
/// and its dual objective cannot decrease.
pub fn tighten_source(p: &DualPotentials, oracle: &CostOracle<'_>) -> DualPotentials {
    let phi = (0..oracle.n_source())
        .map(|i| tightest_target(&p.psi, oracle, i).1)
        .collect();
    DualPotentials::new(phi, p.psi.clone())
}

/// Pairs whose constraint is within `eps_abs` of tight, sorted by `(i, j)`.
pub fn extract_support(
    p: &DualPotentials,
    oracle: &CostOracle<'_>,
    eps_abs: f64,
) -> Result<Vec<(usize, usize)>> {
    let mut support = Vec::new();
    for (i, phi) in p.phi.iter().enumerate() {
        for (j, (c, psi)) in oracle.costs_from_source(i).zip(&p.psi).enumerate() {
            if c - phi - psi <= eps_abs {
                support.push((i, j));
            }
        }
    }
    if support.is_empty() {
        return Err(OtError::SupportEmpty { eps_abs });
    }
    Ok(support)
}

fn check_shapes(ns: usize, nt: usize, oracle: &CostOracle<'_>) -> Result<()> {
    if ns != oracle.n_source() || nt != oracle.n_target() {
        return invalid(format!(
            "measures are {ns}x{nt} but the cost is {}x{}",
            oracle.n_source(),
            oracle.n_target()
        ));
    }
    Ok(())
}

fn relative_gap(primal: f64, dual: f64) -> f64 {
    (primal - dual) / primal.max(1e-30)
}

/// Best feasible point seen so far.
struct BestIterate {
    potentials: DualPotentials,
    value: f64,
}

fn feasible_candidate(
    state: &SolverState,
    mu_s: &DiscreteMeasure,
    mu_t: &DiscreteMeasure,
    oracle: &CostOracle<'_>,
) -> (DualPotentials, f64) {
    let p = tighten_source(&project_feasible(&state.potentials, oracle), oracle);
    let v = weighted_sum(&p, mu_s.masses(), mu_t.masses());
    (p, v)
}

/// Cheap upper bound on the optimal cost for the stopping test: one
/// restricted solve per call, with `ε` adapted across calls so the support
/// stays small and feasible.
struct GapProbe {
    eps: f64,
    max_support: usize,
}

impl GapProbe {
    fn primal_bound(
        &mut self,
        p: &DualPotentials,
        mu_s: &DiscreteMeasure,
        mu_t: &DiscreteMeasure,
        oracle: &CostOracle<'_>,
    ) -> Result<Option<f64>> {
        let mut support = Vec::new();
        'rows: for (i, phi) in p.phi.iter().enumerate() {
            for (j, (c, psi)) in oracle.costs_from_source(i).zip(&p.psi).enumerate() {
                if c - phi - psi <= self.eps {
                    support.push((i, j));
                    if support.len() > self.max_support {
                        break 'rows;
                    }
                }
            }
        }
        if support.len() > self.max_support {
            self.eps /= 2.0;
            return Ok(None);
        }
        if support.is_empty() {
            self.eps *= 2.0;
            return Ok(None);
        }
        match solve_restricted(mu_s, mu_t, oracle, &support)? {
            Restricted::Solved(sol) => Ok(Some(sol.objective)),
            Restricted::Infeasible => {
                self.eps *= 2.0;
                Ok(None)
            }
        }
    }
}

/// Solves on the `ε`-tight support, doubling `ε` while the support cannot
/// carry the marginals.
fn restricted_on_support(
    p: &DualPotentials,
    mu_s: &DiscreteMeasure,
    mu_t: &DiscreteMeasure,
    oracle: &CostOracle<'_>,
    eps_abs: f64,
) -> Result<(Vec<(usize, usize)>, ExactSolution)> {
    let mut eps = eps_abs;
    for _ in 0..=MAX_SUPPORT_DOUBLINGS {
        let support = extract_support(p, oracle, eps)?;
        if let Restricted::Solved(sol) = solve_restricted(mu_s, mu_t, oracle, &support)? {
            return Ok((support, sol));
        }
        eps *= 2.0;
    }
    // poor potentials can leave a column unreachable at any moderate eps;
    // a corner-rule staircase always carries the marginals, pricing does the rest
    let mut support = extract_support(p, oracle, eps)?;
    support.extend(corner_staircase(mu_s.masses(), mu_t.masses()));
    support.sort_unstable();
    support.dedup();
    match solve_restricted(mu_s, mu_t, oracle, &support)? {
        Restricted::Solved(sol) => Ok((support, sol)),
        Restricted::Infeasible => Err(OtError::Capacity(format!(
            "support stayed infeasible after {MAX_SUPPORT_DOUBLINGS} doublings of eps (last {eps:e})"
        ))),
    }
}

/// Pairs used by the north-west corner rule: a feasible plan with at most
/// `N_s + N_t - 1` entries.
fn corner_staircase(a: &[f64], b: &[f64]) -> Vec<(usize, usize)> {
    let (mut i, mut j) = (0, 0);
    let (mut left_a, mut left_b) = (a[0], b[0]);
    let mut pairs = vec![(0, 0)];
    while i + 1 < a.len() || j + 1 < b.len() {
        if j + 1 == b.len() || (i + 1 < a.len() && left_a <= left_b) {
            left_b -= left_a;
            i += 1;
            left_a = a[i];
        } else {
            left_a -= left_b;
            j += 1;
            left_b = b[j];
        }
        pairs.push((i, j));
    }
    pairs
}

/// Adds, for every source row, the most negative reduced cost pair outside
/// the support until none remains, then returns the certified plan.
fn price_out(
    mut support: Vec<(usize, usize)>,
    mut sol: ExactSolution,
    mu_s: &DiscreteMeasure,
    mu_t: &DiscreteMeasure,
    oracle: &CostOracle<'_>,
) -> Result<ExactSolution> {
    for _ in 0..MAX_PRICING_ROUNDS {
        let pot = &sol.potentials;
        let mut cost_max = 0.0f64;
        let mut candidates = Vec::new();
        for (i, phi) in pot.phi.iter().enumerate() {
            let mut best = (usize::MAX, 0.0);
            for (j, (c, psi)) in oracle.costs_from_source(i).zip(&pot.psi).enumerate() {
                cost_max = cost_max.max(c);
                let rc = c - phi - psi;
                if rc < best.1 {
                    best = (j, rc);
                }
            }
            if best.0 != usize::MAX {
                candidates.push((i, best.0, best.1));
            }
        }
        let tol = PRICING_TOL * cost_max.max(f64::MIN_POSITIVE);
        let fresh: Vec<(usize, usize)> = candidates
            .into_iter()
            .filter(|&(i, j, rc)| rc < -tol && support.binary_search(&(i, j)).is_err())
            .map(|(i, j, _)| (i, j))
            .collect();
        if fresh.is_empty() {
            return Ok(sol);
        }
        support.extend(fresh);
        support.sort_unstable();
        sol = solve_restricted(mu_s, mu_t, oracle, &support)?
            .solved()
            .expect("a superset of a feasible support stays feasible");
    }
    Err(OtError::Capacity(format!(
        "pricing did not settle within {MAX_PRICING_ROUNDS} rounds"
    )))
}

/// Runs the stochastic dual ascent, recovers the support, and returns the
/// optimal sparse plan.
pub fn solve(
    mu_s: &DiscreteMeasure,
    mu_t: &DiscreteMeasure,
    oracle: &CostOracle<'_>,
    cfg: &SolverConfig,
) -> Result<OTSolution> {
    cfg.validate()?;
    check_shapes(mu_s.len(), mu_t.len(), oracle)?;
    let eps_abs = cfg.support_tolerance_rel * cost_scale(oracle);

    let mut state = SolverState::new(mu_s, mu_t, oracle, cfg)?;
    let (p0, v0) = feasible_candidate(&state, mu_s, mu_t, oracle);
    let mut best = BestIterate {
        potentials: p0,
        value: v0,
    };
    let mut gap_probe = GapProbe {
        eps: eps_abs,
        max_support: 8 * (mu_s.len() + mu_t.len()),
    };

    // probes are spaced geometrically so their share of the work stays bounded
    let mut checks = 0usize;
    let mut next_probe = 1usize;
    let mut probed_value = f64::NEG_INFINITY;
    let mut probed_eps = f64::NAN;

    for epoch in 1..=cfg.max_epochs {
        sgd_epoch(&mut state, mu_s, mu_t, oracle, cfg);
        if state.diverged {
            return Err(OtError::Diverged { epoch });
        }
        if epoch % cfg.ctransform_period != 0 && epoch != cfg.max_epochs {
            continue;
        }
        state.potentials = project_feasible(&state.potentials, oracle);
        let (p, v) = feasible_candidate(&state, mu_s, mu_t, oracle);
        if v > best.value {
            best = BestIterate {
                potentials: p,
                value: v,
            };
        }
        checks += 1;
        let stale = best.value == probed_value && gap_probe.eps == probed_eps;
        if checks < next_probe || stale {
            continue;
        }
        next_probe = checks + (checks / 8).max(1);
        probed_value = best.value;
        probed_eps = gap_probe.eps;
        if let Some(primal) = gap_probe.primal_bound(&best.potentials, mu_s, mu_t, oracle)? {
            if relative_gap(primal, best.value) <= cfg.gap_tolerance_rel {
                break;
            }
        }
    }

    let (support, sol) = restricted_on_support(&best.potentials, mu_s, mu_t, oracle, eps_abs)?;
    let sol = price_out(support, sol, mu_s, mu_t, oracle)?;
    let primal_cost = plan_cost(&sol.plan, oracle)?;
    let peak_state_bytes = state.bytes()
        + best.potentials.bytes()
        + (sol.plan.len() * std::mem::size_of::<PlanEntry>()) as u64;

    Ok(OTSolution {
        plan: sol.plan,
        relative_gap: relative_gap(primal_cost, best.value),
        dual_value: best.value,
        potentials: best.potentials,
        primal_cost,
        epochs_used: state.epoch,
        peak_state_bytes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::solve_exact;
    use crate::measures::{uniform_measure, PointCloud};

    fn cloud(points: &[[f64; 2]]) -> PointCloud {
        PointCloud::new(&points.iter().map(|p| p.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> PointCloud {
        let pts: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen(), rng.gen()]).collect();
        PointCloud::new(&pts).unwrap()
    }

    #[test]
    fn dual_objective_examples() {
        let s = cloud(&[[0.0, 0.0], [1.0, 0.0]]);
        let t = cloud(&[[0.0, 1.0], [1.0, 1.0], [2.0, 2.0]]);
        let mu_s = DiscreteMeasure::new(s, vec![0.2, 0.8]).unwrap();
        let mu_t = DiscreteMeasure::new(t, vec![0.5, 0.25, 0.25]).unwrap();
        assert_eq!(
            dual_objective(&DualPotentials::zeros(2, 3), &mu_s, &mu_t).unwrap(),
            0.0
        );
        let p = DualPotentials::new(vec![3.5; 2], vec![-3.5; 3]);
        assert!(dual_objective(&p, &mu_s, &mu_t).unwrap().abs() < 1e-15);
        assert!(dual_objective(&DualPotentials::zeros(3, 3), &mu_s, &mu_t).is_err());
    }

    #[test]
    fn one_by_one_epoch_saturates() {
        let s = cloud(&[[0.0, 0.0]]);
        let t = cloud(&[[3.0, 4.0]]);
        let mu_s = uniform_measure(s.clone()).unwrap();
        let mu_t = uniform_measure(t.clone()).unwrap();
        let oracle = CostOracle::new(&s, &t).unwrap();
        let cfg = SolverConfig::default();
        let mut state = SolverState::new(&mu_s, &mu_t, &oracle, &cfg).unwrap();
        state.potentials = DualPotentials::zeros(1, 1);
        sgd_epoch(&mut state, &mu_s, &mu_t, &oracle, &cfg);
        let p = &state.potentials;
        assert_eq!(p.phi[0] + p.psi[0], 25.0);
    }

    #[test]
    fn zero_step_leaves_projected_potentials_alone() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = random_cloud(&mut rng, 5);
        let t = random_cloud(&mut rng, 4);
        let mu_s = uniform_measure(s.clone()).unwrap();
        let mu_t = uniform_measure(t.clone()).unwrap();
        let oracle = CostOracle::new(&s, &t).unwrap();
        let cfg = SolverConfig {
            base_step: Some(0.0),
            ..SolverConfig::default()
        };
        let mut state = SolverState::new(&mu_s, &mu_t, &oracle, &cfg).unwrap();
        let phi: Vec<f64> = (0..5).map(|_| rng.gen_range(-0.5..0.5)).collect();
        state.potentials = project_feasible(&DualPotentials::new(phi, vec![0.0; 4]), &oracle);
        let before = state.potentials.clone();
        for _ in 0..3 {
            sgd_epoch(&mut state, &mu_s, &mu_t, &oracle, &cfg);
        }
        assert_eq!(state.potentials, before);
        assert_eq!(state.svr.step_index, 27);
        assert!(state
            .svr
            .visit_counts
            .iter()
            .all(|&v| u64::from(v) <= state.svr.step_index));
    }

    #[test]
    fn projection_examples() {
        let s = cloud(&[[0.0, 0.0], [2.0, 0.0], [0.0, 3.0]]);
        let t = cloud(&[[1.0, 0.0], [0.0, 1.0], [4.0, 4.0]]);
        let oracle = CostOracle::new(&s, &t).unwrap();

        let p = project_feasible(&DualPotentials::zeros(3, 3), &oracle);
        for j in 0..3 {
            let m = (0..3)
                .map(|i| oracle.cost(i, j))
                .fold(f64::INFINITY, f64::min);
            assert_eq!(p.psi[j], m);
        }

        // slack potentials get raised to the c-transform
        let slack = DualPotentials::new(vec![0.0; 3], vec![-10.0; 3]);
        assert_eq!(project_feasible(&slack, &oracle), p);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let phi: Vec<f64> = (0..3).map(|_| rng.gen_range(-20.0..20.0)).collect();
            let psi: Vec<f64> = (0..3).map(|_| rng.gen_range(-20.0..20.0)).collect();
            let q = project_feasible(&DualPotentials::new(phi, psi), &oracle);
            for i in 0..3 {
                for j in 0..3 {
                    assert!(q.phi[i] + q.psi[j] <= oracle.cost(i, j) + 1e-12);
                }
            }
            assert_eq!(project_feasible(&q, &oracle), q);
        }
    }

    #[test]
    fn support_examples() {
        let s = cloud(&[[0.0, 0.0]]);
        let oracle = CostOracle::new(&s, &s).unwrap();
        let p = project_feasible(&DualPotentials::zeros(1, 1), &oracle);
        assert_eq!(extract_support(&p, &oracle, 0.0).unwrap(), vec![(0, 0)]);

        let s = cloud(&[[0.0, 0.0], [1.0, 1.0]]);
        let t = cloud(&[[0.5, 0.0], [1.0, 2.0], [3.0, 0.0]]);
        let oracle = CostOracle::new(&s, &t).unwrap();
        let p = project_feasible(&DualPotentials::zeros(2, 3), &oracle);
        assert_eq!(
            extract_support(&p, &oracle, f64::INFINITY).unwrap().len(),
            6
        );

        let far = DualPotentials::new(vec![-100.0; 2], vec![0.0; 3]);
        assert!(matches!(
            extract_support(&far, &oracle, 1e-9),
            Err(OtError::SupportEmpty { .. })
        ));
    }

    #[test]
    fn translation_leaves_support_and_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = random_cloud(&mut rng, 6);
        let t = random_cloud(&mut rng, 6);
        let mu_s = uniform_measure(s.clone()).unwrap();
        let mu_t = uniform_measure(t.clone()).unwrap();
        let oracle = CostOracle::new(&s, &t).unwrap();
        let exact = solve_exact(&mu_s, &mu_t, &oracle).unwrap();
        let p = exact.potentials;
        let q = p.translated(0.25);
        let (dp, dq) = (
            dual_objective(&p, &mu_s, &mu_t).unwrap(),
            dual_objective(&q, &mu_s, &mu_t).unwrap(),
        );
        assert!((dp - dq).abs() < 1e-12);
        assert_eq!(
            extract_support(&p, &oracle, 1e-6).unwrap(),
            extract_support(&q, &oracle, 1e-6).unwrap()
        );
    }

    #[test]
    fn config_round_trip_and_errors() {
        let cfg = SolverConfig {
            max_epochs: 77,
            base_step: Some(0.125),
            step_decay: StepDecay::Constant,
            seed: 9,
            ..SolverConfig::default()
        };
        assert_eq!(SolverConfig::parse(&cfg.to_text()).unwrap(), cfg);
        assert_eq!(
            SolverConfig::parse("# only comments\n\n").unwrap(),
            SolverConfig::default()
        );
        assert!(matches!(
            SolverConfig::parse("seed = 1\nbogus = 2\n"),
            Err(OtError::Parse { line: 2, .. })
        ));
        assert!(SolverConfig::parse("max_epochs = 0").is_err());
        assert!(SolverConfig::parse("support_tolerance_rel = 1.5").is_err());
        assert!(SolverConfig::parse("seed").is_err());
    }

    #[test]
    fn identical_clouds_give_zero_cost_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = random_cloud(&mut rng, 7);
        let mu = uniform_measure(c.clone()).unwrap();
        let oracle = CostOracle::new(&c, &c).unwrap();
        let sol = solve(&mu, &mu, &oracle, &SolverConfig::default()).unwrap();
        assert!(sol.primal_cost.abs() < 1e-12);
        let id = TransportPlan::identity(mu.masses()).unwrap();
        assert_eq!(sol.plan.len(), id.len());
        let dev: f64 = sol
            .plan
            .entries()
            .iter()
            .zip(id.entries())
            .map(|(a, b)| {
                assert_eq!((a.0, a.1), (b.0, b.1));
                (a.2 - b.2).abs()
            })
            .sum();
        assert!(dev < 1e-9);
    }

    #[test]
    fn diverging_steps_are_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = random_cloud(&mut rng, 3);
        let t = random_cloud(&mut rng, 4);
        let mu_s = DiscreteMeasure::new(s.clone(), vec![0.1, 0.1, 0.8]).unwrap();
        let mu_t = uniform_measure(t.clone()).unwrap();
        let oracle = CostOracle::new(&s, &t).unwrap();
        let cfg = SolverConfig {
            base_step: Some(f64::MAX),
            step_decay: StepDecay::Constant,
            ..SolverConfig::default()
        };
        assert!(matches!(
            solve(&mu_s, &mu_t, &oracle, &cfg),
            Err(OtError::Diverged { .. })
        ));
    }

    #[test]
    fn corner_staircase_carries_both_marginals() {
        let (a, b) = ([0.5, 0.3, 0.2], [0.2, 0.2, 0.6]);
        let pairs = corner_staircase(&a, &b);
        assert_eq!(pairs, vec![(0, 0), (0, 1), (0, 2), (1, 2), (2, 2)]);
        assert_eq!(corner_staircase(&[1.0], &[0.5, 0.5]), vec![(0, 0), (0, 1)]);
        assert_eq!(corner_staircase(&[0.5, 0.5], &[1.0]), vec![(0, 0), (1, 0)]);
    }
}
