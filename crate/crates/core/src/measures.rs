//! Point clouds, discrete measures, on-demand transport costs and sparse plans.
//!
//! Plans use the row-sum convention throughout: summing a plan over target
//! indices gives the source measure, summing over source indices gives the
//! target measure.

use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, OtError, Result};

/// Absolute tolerance on total mass and on marginal agreement.
pub const MASS_TOLERANCE: f64 = 1e-9;

/// A non-empty set of points sharing one dimension, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    coords: Vec<f64>,
    dim: usize,
}

impl PointCloud {
    pub fn new(points: &[Vec<f64>]) -> Result<Self> {
        let Some(first) = points.first() else {
            return invalid("point cloud must contain at least one point");
        };
        let dim = first.len();
        let mut coords = Vec::with_capacity(points.len() * dim);
        for (k, p) in points.iter().enumerate() {
            if p.len() != dim {
                return invalid(format!(
                    "point {k} has dimension {} but point 0 has dimension {dim}",
                    p.len()
                ));
            }
            coords.extend_from_slice(p);
        }
        Self::from_flat(coords, dim)
    }

    pub fn from_flat(coords: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return invalid("point dimension must be at least 1");
        }
        if coords.is_empty() {
            return invalid("point cloud must contain at least one point");
        }
        if !coords.len().is_multiple_of(dim) {
            return invalid(format!(
                "{} coordinates do not split into points of dimension {dim}",
                coords.len()
            ));
        }
        if let Some(bad) = coords.iter().position(|c| !c.is_finite()) {
            return invalid(format!("coordinate {bad} is not finite"));
        }
        Ok(Self { coords, dim })
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.coords
    }

    /// Multiplies every coordinate by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            coords: self.coords.iter().map(|c| c * factor).collect(),
            dim: self.dim,
        }
    }
}

/// Weighted Dirac masses on a point cloud. Masses are nonnegative and sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    cloud: PointCloud,
    masses: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(cloud: PointCloud, masses: Vec<f64>) -> Result<Self> {
        if masses.len() != cloud.len() {
            return invalid(format!(
                "{} masses for {} points",
                masses.len(),
                cloud.len()
            ));
        }
        if let Some(k) = masses.iter().position(|m| !(m.is_finite() && *m >= 0.0)) {
            return invalid(format!("mass {k} is negative or not finite"));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return invalid(format!("masses sum to {total}, expected 1"));
        }
        Ok(Self { cloud, masses })
    }

    /// Builds a measure from arbitrary nonnegative weights by dividing by their sum.
    pub fn from_weights(cloud: PointCloud, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return invalid(format!(
                "weights must have a positive finite sum, got {total}"
            ));
        }
        Self::new(cloud, weights.iter().map(|w| w / total).collect())
    }

    pub fn cloud(&self) -> &PointCloud {
        &self.cloud
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Uniform empirical measure: every point receives mass `1/N`.
pub fn uniform_measure(cloud: PointCloud) -> Result<DiscreteMeasure> {
    let n = cloud.len();
    let mut masses = vec![1.0 / n as f64; n];
    // absorb the rounding residue so the sum is 1 to the last bit we can get
    let residue = 1.0 - masses.iter().sum::<f64>();
    masses[n - 1] += residue;
    DiscreteMeasure::new(cloud, masses)
}

/// Ground metric used to price a unit of mass moved between two points.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    #[default]
    SquaredEuclidean,
}

impl Metric {
    #[inline]
    pub fn eval(self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            Metric::SquaredEuclidean => {
                if let ([x0, x1], [y0, y1]) = (x, y) {
                    let (d0, d1) = (x0 - y0, x1 - y1);
                    return d0 * d0 + d1 * d1;
                }
                x.iter()
                    .zip(y)
                    .map(|(a, b)| {
                        let d = a - b;
                        d * d
                    })
                    .sum()
            }
        }
    }
}

/// Lazily evaluated cost between a source and a target cloud.
///
/// Entries are computed on each call; no matrix is ever stored.
#[derive(Debug, Clone, Copy)]
pub struct CostOracle<'a> {
    source: &'a PointCloud,
    target: &'a PointCloud,
    metric: Metric,
}

impl<'a> CostOracle<'a> {
    pub fn new(source: &'a PointCloud, target: &'a PointCloud) -> Result<Self> {
        Self::with_metric(source, target, Metric::SquaredEuclidean)
    }

    pub fn with_metric(
        source: &'a PointCloud,
        target: &'a PointCloud,
        metric: Metric,
    ) -> Result<Self> {
        if source.dim() != target.dim() {
            return invalid(format!(
                "source dimension {} differs from target dimension {}",
                source.dim(),
                target.dim()
            ));
        }
        Ok(Self {
            source,
            target,
            metric,
        })
    }

    pub fn n_source(&self) -> usize {
        self.source.len()
    }

    pub fn n_target(&self) -> usize {
        self.target.len()
    }

    pub fn source(&self) -> &'a PointCloud {
        self.source
    }

    pub fn target(&self) -> &'a PointCloud {
        self.target
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    /// Cost of moving mass from source `i` to target `j`. Panics when out of bounds.
    #[inline]
    pub fn cost(&self, i: usize, j: usize) -> f64 {
        self.metric.eval(self.source.point(i), self.target.point(j))
    }

    /// `C_ij` for every source `i`, in index order.
    #[inline]
    pub fn costs_to_target(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        let y = self.target.point(j);
        let metric = self.metric;
        self.source.points().map(move |x| metric.eval(x, y))
    }

    /// `C_ij` for every target `j`, in index order.
    #[inline]
    pub fn costs_from_source(&self, i: usize) -> impl Iterator<Item = f64> + '_ {
        let x = self.source.point(i);
        let metric = self.metric;
        self.target.points().map(move |y| metric.eval(x, y))
    }

    /// Bounds-checked cost entry.
    pub fn cost_entry(&self, i: usize, j: usize) -> Result<f64> {
        if i >= self.n_source() || j >= self.n_target() {
            return Err(OtError::Index {
                i,
                j,
                n_source: self.n_source(),
                n_target: self.n_target(),
            });
        }
        Ok(self.cost(i, j))
    }

    /// The same costs seen from the target side: `t.cost(j, i) == self.cost(i, j)`.
    pub fn transposed(&self) -> CostOracle<'a> {
        CostOracle {
            source: self.target,
            target: self.source,
            metric: self.metric,
        }
    }
}

/// One nonzero of a plan: `(source index, target index, mass)`.
pub type PlanEntry = (usize, usize, f64);

/// Sparse coupling in coordinate form, sorted by `(i, j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPlan")]
pub struct TransportPlan {
    n_source: usize,
    n_target: usize,
    entries: Vec<PlanEntry>,
}

#[derive(Deserialize)]
struct RawPlan {
    n_source: usize,
    n_target: usize,
    entries: Vec<PlanEntry>,
}

impl TryFrom<RawPlan> for TransportPlan {
    type Error = OtError;

    fn try_from(raw: RawPlan) -> Result<Self> {
        TransportPlan::new(raw.n_source, raw.n_target, raw.entries)
    }
}

impl TransportPlan {
    /// Validates and sorts the entries. Masses must be positive, pairs unique
    /// and in bounds, and the total mass one.
    pub fn new(n_source: usize, n_target: usize, mut entries: Vec<PlanEntry>) -> Result<Self> {
        if n_source == 0 || n_target == 0 {
            return invalid("plan dimensions must be positive");
        }
        if entries.is_empty() {
            return invalid("plan has no entries");
        }
        for &(i, j, m) in &entries {
            if i >= n_source || j >= n_target {
                return invalid(format!(
                    "entry ({i}, {j}) outside a {n_source}x{n_target} plan"
                ));
            }
            if !(m.is_finite() && m > 0.0) {
                return invalid(format!("entry ({i}, {j}) has non-positive mass {m}"));
            }
        }
        entries.sort_by_key(|e| (e.0, e.1));
        if let Some(w) = entries
            .windows(2)
            .find(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1))
        {
            return invalid(format!("duplicate entry ({}, {})", w[0].0, w[0].1));
        }
        let total: f64 = entries.iter().map(|e| e.2).sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return invalid(format!("plan mass sums to {total}, expected 1"));
        }
        Ok(Self {
            n_source,
            n_target,
            entries,
        })
    }

    /// Diagonal plan pairing point `k` with point `k` under the given masses.
    pub fn identity(masses: &[f64]) -> Result<Self> {
        let entries = masses
            .iter()
            .enumerate()
            .filter(|(_, m)| **m > 0.0)
            .map(|(k, m)| (k, k, *m))
            .collect();
        Self::new(masses.len(), masses.len(), entries)
    }

    pub fn n_source(&self) -> usize {
        self.n_source
    }

    pub fn n_target(&self) -> usize {
        self.n_target
    }

    pub fn entries(&self) -> &[PlanEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Row sums (source side) and column sums (target side).
    pub fn marginals(&self) -> (Vec<f64>, Vec<f64>) {
        let mut rows = vec![0.0; self.n_source];
        let mut cols = vec![0.0; self.n_target];
        for &(i, j, m) in &self.entries {
            rows[i] += m;
            cols[j] += m;
        }
        (rows, cols)
    }

    /// Swaps the roles of source and target.
    pub fn transposed(&self) -> Self {
        let mut entries: Vec<PlanEntry> = self.entries.iter().map(|&(i, j, m)| (j, i, m)).collect();
        entries.sort_by_key(|e| (e.0, e.1));
        Self {
            n_source: self.n_target,
            n_target: self.n_source,
            entries,
        }
    }

    /// Largest absolute deviation of the plan's marginals from the given measures.
    pub fn marginal_error(&self, mu_s: &[f64], mu_t: &[f64]) -> f64 {
        let (rows, cols) = self.marginals();
        rows.iter()
            .zip(mu_s)
            .chain(cols.iter().zip(mu_t))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plan serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// `Σ mass · C_ij` over raw entries, with no validation of the masses.
pub fn weighted_cost(entries: &[PlanEntry], oracle: &CostOracle<'_>) -> f64 {
    entries.iter().map(|&(i, j, m)| m * oracle.cost(i, j)).sum()
}

/// Transport cost `<C, γ>` of a plan.
pub fn plan_cost(plan: &TransportPlan, oracle: &CostOracle<'_>) -> Result<f64> {
    if plan.n_source() != oracle.n_source() || plan.n_target() != oracle.n_target() {
        return invalid(format!(
            "plan is {}x{} but the cost is {}x{}",
            plan.n_source(),
            plan.n_target(),
            oracle.n_source(),
            oracle.n_target()
        ));
    }
    Ok(weighted_cost(plan.entries(), oracle))
}

/// Row and column sums of a plan.
pub fn marginals(plan: &TransportPlan) -> (Vec<f64>, Vec<f64>) {
    plan.marginals()
}

/// Parses a point-cloud CSV.
///
/// One point per line, comma separated. A header line is optional; when its
/// last column is named `mass` the last column of every row holds the point's
/// weight. Without a `mass` column the measure is uniform. Weights are
/// normalized to sum to one. Blank lines are skipped.
pub fn parse_cloud_csv(text: &str) -> Result<DiscreteMeasure> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
        .peekable();

    let mut has_mass = false;
    if let Some((_, first)) = lines.peek() {
        let looks_like_header = first
            .split(',')
            .any(|tok| tok.trim().parse::<f64>().is_err());
        if looks_like_header {
            let names: Vec<&str> = first.split(',').map(str::trim).collect();
            has_mass = names.last().is_some_and(|n| n.eq_ignore_ascii_case("mass"));
            if has_mass && names.len() < 2 {
                return Err(OtError::Parse {
                    line: lines.peek().map(|(k, _)| *k).unwrap_or(1),
                    message: "header has a mass column but no coordinates".into(),
                });
            }
            lines.next();
        }
    }

    let mut coords = Vec::new();
    let mut weights = Vec::new();
    let mut width = None;
    for (line, row) in lines {
        let mut values = Vec::new();
        for tok in row.split(',') {
            let v: f64 = tok.trim().parse().map_err(|_| OtError::Parse {
                line,
                message: format!("cannot parse {:?} as a number", tok.trim()),
            })?;
            if !v.is_finite() {
                return Err(OtError::Parse {
                    line,
                    message: format!("non-finite value {v}"),
                });
            }
            values.push(v);
        }
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(OtError::Parse {
                    line,
                    message: format!("expected {w} columns, found {}", values.len()),
                })
            }
            _ => {}
        }
        if has_mass {
            let m = values.pop().expect("row is non-empty");
            if m < 0.0 {
                return Err(OtError::Parse {
                    line,
                    message: format!("negative mass {m}"),
                });
            }
            weights.push(m);
        }
        if values.is_empty() {
            return Err(OtError::Parse {
                line,
                message: "row has no coordinates".into(),
            });
        }
        coords.extend(values);
    }
    let Some(width) = width else {
        return Err(OtError::Parse {
            line: 1,
            message: "no points in file".into(),
        });
    };
    let dim = if has_mass { width - 1 } else { width };
    let cloud = PointCloud::from_flat(coords, dim)?;
    if has_mass {
        DiscreteMeasure::from_weights(cloud, weights)
    } else {
        uniform_measure(cloud)
    }
}

pub fn read_cloud_csv(path: &Path) -> Result<DiscreteMeasure> {
    let mut text = String::new();
    std::fs::File::open(path)?.read_to_string(&mut text)?;
    parse_cloud_csv(&text)
}

/// Writes a measure with a `x0,..,x{D-1},mass` header.
pub fn format_cloud_csv(measure: &DiscreteMeasure) -> String {
    let dim = measure.cloud().dim();
    let mut out = String::new();
    for d in 0..dim {
        let _ = write!(out, "x{d},");
    }
    out.push_str("mass\n");
    for (p, m) in measure.cloud().points().zip(measure.masses()) {
        for c in p {
            let _ = write!(out, "{c},");
        }
        let _ = writeln!(out, "{m}");
    }
    out
}
