//! Shape morphing by displacement interpolation along a transport plan.

use std::fmt::Write as _;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dual_solver::{solve, OTSolution, SolverConfig};
use crate::error::{invalid, OtError, Result};
use crate::measures::{uniform_measure, CostOracle, PointCloud, TransportPlan};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Circle {
        center: [f64; 2],
        radius: f64,
    },
    /// Axis-aligned square outline.
    Square {
        center: [f64; 2],
        side: f64,
    },
    TwoCircles {
        centers: [[f64; 2]; 2],
        radius: f64,
    },
}

/// Uniform perturbation of each sampled coordinate by up to `amplitude`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jitter {
    pub seed: u64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeSpec {
    pub shape: Shape,
    pub n_points: usize,
    pub jitter: Option<Jitter>,
}

impl ShapeSpec {
    /// Unit circle at the origin.
    pub fn circle(n_points: usize) -> Self {
        Self {
            shape: Shape::Circle {
                center: [0.0, 0.0],
                radius: 1.0,
            },
            n_points,
            jitter: None,
        }
    }

    /// Square of side 2 centred at the origin.
    pub fn square(n_points: usize) -> Self {
        Self {
            shape: Shape::Square {
                center: [0.0, 0.0],
                side: 2.0,
            },
            n_points,
            jitter: None,
        }
    }

    /// Circles of radius 0.5 at (-1, 0) and (1, 0).
    pub fn two_circles(n_points: usize) -> Self {
        Self {
            shape: Shape::TwoCircles {
                centers: [[-1.0, 0.0], [1.0, 0.0]],
                radius: 0.5,
            },
            n_points,
            jitter: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_points < 2 {
            return invalid(format!(
                "a shape needs at least 2 points, got {}",
                self.n_points
            ));
        }
        let positive = |x: f64, what: &str| {
            if x.is_finite() && x > 0.0 {
                Ok(())
            } else {
                invalid(format!("{what} must be positive, got {x}"))
            }
        };
        match self.shape {
            Shape::Circle { radius, .. } => positive(radius, "radius")?,
            Shape::Square { side, .. } => positive(side, "side")?,
            Shape::TwoCircles { centers, radius } => {
                positive(radius, "radius")?;
                if centers[0] == centers[1] {
                    return invalid("the two circles need distinct centers");
                }
            }
        }
        if let Some(j) = self.jitter {
            if !(j.amplitude.is_finite() && j.amplitude >= 0.0) {
                return invalid("jitter amplitude must be nonnegative");
            }
        }
        Ok(())
    }
}

/// Parses `circle`, `square` or `two-circles`, optionally followed by `:N`
/// for the number of points (default 64).
impl FromStr for ShapeSpec {
    type Err = OtError;

    fn from_str(s: &str) -> Result<Self> {
        let (name, count) = match s.split_once(':') {
            Some((name, n)) => (
                name,
                n.trim()
                    .parse()
                    .map_err(|_| OtError::InvalidInput(format!("bad point count in {s:?}")))?,
            ),
            None => (s, 64),
        };
        let spec = match name.trim().to_ascii_lowercase().as_str() {
            "circle" => Self::circle(count),
            "square" => Self::square(count),
            "two-circles" | "two_circles" | "twocircles" => Self::two_circles(count),
            other => return invalid(format!("unknown shape {other:?}")),
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn circle_points(center: [f64; 2], radius: f64, n: usize, out: &mut Vec<Vec<f64>>) {
    for k in 0..n {
        let theta = std::f64::consts::TAU * k as f64 / n as f64;
        out.push(vec![
            center[0] + radius * theta.cos(),
            center[1] + radius * theta.sin(),
        ]);
    }
}

/// Deterministic arc-length sampling of the shape outline.
///
/// Circles start at angle 0 and go counter-clockwise. The square starts at
/// its upper-right corner and goes counter-clockwise. Two circles split the
/// points evenly, with the odd point going to the first.
pub fn sample_shape(spec: &ShapeSpec) -> Result<PointCloud> {
    spec.validate()?;
    let n = spec.n_points;
    let mut points = Vec::with_capacity(n);
    match spec.shape {
        Shape::Circle { center, radius } => circle_points(center, radius, n, &mut points),
        Shape::Square { center, side } => {
            let h = side / 2.0;
            let corners = [[h, h], [-h, h], [-h, -h], [h, -h]];
            for k in 0..n {
                let s = 4.0 * k as f64 / n as f64;
                let edge = (s.floor() as usize).min(3);
                let u = s - edge as f64;
                let (p, q) = (corners[edge], corners[(edge + 1) % 4]);
                points.push(vec![
                    center[0] + p[0] + u * (q[0] - p[0]),
                    center[1] + p[1] + u * (q[1] - p[1]),
                ]);
            }
        }
        Shape::TwoCircles { centers, radius } => {
            let first = n.div_ceil(2);
            circle_points(centers[0], radius, first, &mut points);
            circle_points(centers[1], radius, n - first, &mut points);
        }
    }
    if let Some(j) = spec.jitter {
        let mut rng = ChaCha8Rng::seed_from_u64(j.seed);
        for p in &mut points {
            for c in p.iter_mut() {
                *c += rng.gen_range(-1.0..=1.0) * j.amplitude;
            }
        }
    }
    PointCloud::new(&points)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FramePoint {
    pub position: Vec<f64>,
    pub mass: f64,
    pub source: usize,
    pub target: usize,
}

/// Weighted point set at interpolation time `t`, one point per plan entry.
#[derive(Debug, Clone, PartialEq)]
pub struct MorphFrame {
    pub t: f64,
    pub points: Vec<FramePoint>,
}

impl MorphFrame {
    pub fn total_mass(&self) -> f64 {
        self.points.iter().map(|p| p.mass).sum()
    }

    /// Frame masses summed per source index.
    pub fn mass_by_source(&self, n_source: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_source];
        for p in &self.points {
            out[p.source] += p.mass;
        }
        out
    }

    /// Frame masses summed per target index.
    pub fn mass_by_target(&self, n_target: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_target];
        for p in &self.points {
            out[p.target] += p.mass;
        }
        out
    }

    /// `t,x,y,mass` rows for a 2-D frame.
    pub fn to_csv(&self) -> Result<String> {
        let mut out = String::from("t,x,y,mass\n");
        for p in &self.points {
            let [x, y] = p.position[..] else {
                return invalid(format!(
                    "frame points are {}-D, CSV needs 2-D",
                    p.position.len()
                ));
            };
            let _ = writeln!(out, "{},{x},{y},{}", self.t, p.mass);
        }
        Ok(out)
    }
}

/// Moves each plan entry's mass to `(1 − t)·x_i + t·y_j`.
pub fn interpolate(
    plan: &TransportPlan,
    source: &PointCloud,
    target: &PointCloud,
    t: f64,
) -> Result<MorphFrame> {
    if !(0.0..=1.0).contains(&t) {
        return invalid(format!("t = {t} is outside [0, 1]"));
    }
    if source.dim() != target.dim() {
        return invalid("source and target dimensions differ");
    }
    if plan.n_source() != source.len() || plan.n_target() != target.len() {
        return invalid(format!(
            "plan is {}x{} but the clouds hold {} and {} points",
            plan.n_source(),
            plan.n_target(),
            source.len(),
            target.len()
        ));
    }
    let points = plan
        .entries()
        .iter()
        .map(|&(i, j, mass)| {
            let position = source
                .point(i)
                .iter()
                .zip(target.point(j))
                .map(|(x, y)| (1.0 - t) * x + t * y)
                .collect();
            FramePoint {
                position,
                mass,
                source: i,
                target: j,
            }
        })
        .collect();
    Ok(MorphFrame { t, points })
}

#[derive(Debug, Clone)]
pub struct Morph {
    pub source: PointCloud,
    pub target: PointCloud,
    pub solution: OTSolution,
    pub frames: Vec<MorphFrame>,
}

/// Solves transport between two sampled shapes once and emits `n_frames`
/// frames at `t = k / (n_frames − 1)`.
pub fn morph_sequence(
    src: &ShapeSpec,
    tgt: &ShapeSpec,
    n_frames: usize,
    cfg: &SolverConfig,
) -> Result<Morph> {
    if n_frames < 2 {
        return invalid(format!("need at least 2 frames, got {n_frames}"));
    }
    let source = sample_shape(src)?;
    let target = sample_shape(tgt)?;
    let mu_s = uniform_measure(source.clone())?;
    let mu_t = uniform_measure(target.clone())?;
    let oracle = CostOracle::new(&source, &target)?;
    let solution = solve(&mu_s, &mu_t, &oracle, cfg)?;
    let frames = (0..n_frames)
        .map(|k| {
            let t = if k + 1 == n_frames {
                1.0
            } else {
                k as f64 / (n_frames - 1) as f64
            };
            interpolate(&solution.plan, &source, &target, t)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Morph {
        source,
        target,
        solution,
        frames,
    })
}
