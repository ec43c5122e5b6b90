//! Exact transport by network simplex, over the full bipartite graph or over
//! a prescribed support.

use crate::dual_solver::DualPotentials;
use crate::error::{invalid, OtError, Result};
use crate::measures::{weighted_cost, CostOracle, DiscreteMeasure, TransportPlan};
use crate::simplex::{self, FlowOutcome, NetworkSimplex};

/// Largest `n_source * n_target` a dense solve will accept by default.
pub const DEFAULT_DENSE_CAP: usize = 1_000_000;

/// Flows at or below this level are treated as structural zeros.
const ZERO_FLOW: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq)]
pub struct ExactSolution {
    pub plan: TransportPlan,
    pub objective: f64,
    /// The plan is a vertex of the transportation polytope.
    pub is_basic: bool,
    /// Optimality certificate read off the final spanning tree.
    pub potentials: DualPotentials,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Restricted {
    Solved(ExactSolution),
    /// The support graph cannot carry the marginals.
    Infeasible,
}

impl Restricted {
    pub fn solved(self) -> Option<ExactSolution> {
        match self {
            Restricted::Solved(s) => Some(s),
            Restricted::Infeasible => None,
        }
    }
}

/// Optimal basic plan over every pair, refusing instances above [`DEFAULT_DENSE_CAP`].
pub fn solve_exact(
    mu_s: &DiscreteMeasure,
    mu_t: &DiscreteMeasure,
    oracle: &CostOracle<'_>,
) -> Result<ExactSolution> {
    solve_exact_capped(mu_s, mu_t, oracle, DEFAULT_DENSE_CAP)
}

pub fn solve_exact_capped(
    mu_s: &DiscreteMeasure,
    mu_t: &DiscreteMeasure,
    oracle: &CostOracle<'_>,
    dense_cap: usize,
) -> Result<ExactSolution> {
    check_shapes(mu_s, mu_t, oracle)?;
    let (ns, nt) = (mu_s.len(), mu_t.len());
    let pairs = ns.saturating_mul(nt);
    if pairs > dense_cap {
        return Err(OtError::Capacity(format!(
            "dense problem has {pairs} entries, cap is {dense_cap}"
        )));
    }
    let support: Vec<(usize, usize)> = (0..ns).flat_map(|i| (0..nt).map(move |j| (i, j))).collect();
    match run(mu_s, mu_t, oracle, &support) {
        Restricted::Solved(s) => Ok(s),
        // every pair is available, so a balanced instance always has a plan
        Restricted::Infeasible => Err(OtError::InvalidInput(
            "marginals cannot be coupled; check that both measures sum to one".into(),
        )),
    }
}

/// Optimal plan with `γ_ij = 0` outside `support`.
pub fn solve_restricted(
    mu_s: &DiscreteMeasure,
    mu_t: &DiscreteMeasure,
    oracle: &CostOracle<'_>,
    support: &[(usize, usize)],
) -> Result<Restricted> {
    check_shapes(mu_s, mu_t, oracle)?;
    if support.is_empty() {
        return invalid("support must not be empty");
    }
    let mut arcs = support.to_vec();
    arcs.sort_unstable();
    arcs.dedup();
    if let Some(&(i, j)) = arcs
        .iter()
        .find(|&&(i, j)| i >= mu_s.len() || j >= mu_t.len())
    {
        return Err(OtError::Index {
            i,
            j,
            n_source: mu_s.len(),
            n_target: mu_t.len(),
        });
    }
    Ok(run(mu_s, mu_t, oracle, &arcs))
}

/// Bytes needed to hold a dense `n_source x n_target` plan of 8-byte reals.
pub fn dense_gamma_bytes(n_source: usize, n_target: usize) -> u64 {
    n_source as u64 * n_target as u64 * std::mem::size_of::<f64>() as u64
}

/// Dense plan plus the simplex working set over all `n_source * n_target` arcs.
pub fn dense_solver_bytes(n_source: usize, n_target: usize) -> u64 {
    dense_gamma_bytes(n_source, n_target)
        + simplex::working_set_bytes(n_source + n_target, n_source * n_target)
}

fn check_shapes(
    mu_s: &DiscreteMeasure,
    mu_t: &DiscreteMeasure,
    oracle: &CostOracle<'_>,
) -> Result<()> {
    if mu_s.len() != oracle.n_source() || mu_t.len() != oracle.n_target() {
        return invalid(format!(
            "measures are {}x{} but the cost is {}x{}",
            mu_s.len(),
            mu_t.len(),
            oracle.n_source(),
            oracle.n_target()
        ));
    }
    Ok(())
}

fn normalized(masses: &[f64]) -> Vec<f64> {
    let total: f64 = masses.iter().sum();
    masses.iter().map(|m| m / total).collect()
}

/// `arcs` must be sorted and unique.
fn run(
    mu_s: &DiscreteMeasure,
    mu_t: &DiscreteMeasure,
    oracle: &CostOracle<'_>,
    arcs: &[(usize, usize)],
) -> Restricted {
    let supply = normalized(mu_s.masses());
    let demand = normalized(mu_t.masses());
    let costs: Vec<f64> = arcs.iter().map(|&(i, j)| oracle.cost(i, j)).collect();
    match NetworkSimplex::new(&supply, &demand, arcs, &costs).run() {
        FlowOutcome::Infeasible => Restricted::Infeasible,
        FlowOutcome::Optimal { flow, phi, psi } => {
            let entries: Vec<_> = arcs
                .iter()
                .zip(&flow)
                .filter(|(_, &f)| f > ZERO_FLOW)
                .map(|(&(i, j), &f)| (i, j, f))
                .collect();
            let plan = TransportPlan::new(mu_s.len(), mu_t.len(), entries)
                .expect("simplex flows form a valid coupling");
            let objective = weighted_cost(plan.entries(), oracle);
            let is_basic = plan.len() < mu_s.len() + mu_t.len();
            Restricted::Solved(ExactSolution {
                plan,
                objective,
                is_basic,
                potentials: DualPotentials::new(phi, psi),
            })
        }
    }
}
