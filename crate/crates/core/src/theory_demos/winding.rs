//! Gradient descent on a closed planar curve given by a trigonometric
//! polynomial, tracking its winding number around the origin and how close
//! it comes to the origin.

use std::fmt::Write as _;
use std::path::Path;

use super::DemoError;
use crate::geometry::{CircleAngle, TAU};
use crate::topology_metrics::{winding_number, EncodedPath, Winding, DEFAULT_STEP_TOLERANCE};

/// h(θ) = c + Σ_k A_k cos(kθ) + B_k sin(kθ), k = 1..=H.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarMap {
    pub constant: [f64; 2],
    pub cos: Vec<[f64; 2]>,
    pub sin: Vec<[f64; 2]>,
}

impl PlanarMap {
    /// r·(cos kθ, sin kθ) for k > 0, r·(cos |k|θ, −sin |k|θ) for k < 0.
    pub fn circle(degree: i32, radius: f64, harmonics: usize) -> Self {
        let h = harmonics.max(degree.unsigned_abs() as usize).max(1);
        let mut cos = vec![[0.0; 2]; h];
        let mut sin = vec![[0.0; 2]; h];
        if degree != 0 {
            let k = degree.unsigned_abs() as usize - 1;
            cos[k] = [radius, 0.0];
            sin[k] = [0.0, radius * f64::from(degree.signum())];
        }
        PlanarMap { constant: [0.0; 2], cos, sin }
    }

    pub fn harmonics(&self) -> usize {
        self.cos.len()
    }

    pub fn eval(&self, theta: f64) -> [f64; 2] {
        let mut p = self.constant;
        for (k, (a, b)) in self.cos.iter().zip(&self.sin).enumerate() {
            let (s, c) = ((k + 1) as f64 * theta).sin_cos();
            p[0] += a[0] * c + b[0] * s;
            p[1] += a[1] * c + b[1] * s;
        }
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindingStep {
    pub step: usize,
    pub winding: Winding,
    /// Smallest distance of the sampled curve to the origin.
    pub margin: f64,
    /// Largest pointwise movement of the curve during the following step.
    pub displacement: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindingTrace {
    pub steps: Vec<WindingStep>,
    pub final_map: PlanarMap,
}

fn winding_of(points: &[[f64; 2]]) -> Result<Winding, DemoError> {
    let n = points.len();
    let source: Vec<CircleAngle> = (0..n).map(|i| CircleAngle::new(TAU * i as f64 / n as f64)).collect();
    let encoded = points.iter().map(|p| CircleAngle::new(p[1].atan2(p[0]))).collect();
    Ok(winding_number(&EncodedPath::new(source, encoded, None)?, DEFAULT_STEP_TOLERANCE)?)
}

/// Gradient descent on mean_θ ‖h(θ) − g(θ)‖² over `grid` sample angles.
/// Every step records the winding of h around the origin. A step whose
/// pointwise movement reaches the current origin margin may carry the
/// curve through the origin; the first such step is reported as
/// `OriginCrossed` together with the complete trace. A winding change
/// without such a step is reported as `WindingChanged`.
pub fn winding_invariance_run(
    init: &PlanarMap,
    target: &PlanarMap,
    n_steps: usize,
    eta: f64,
    grid: usize,
) -> Result<WindingTrace, DemoError> {
    if init.harmonics() != target.harmonics() {
        return Err(DemoError::InvalidInput("init and target need the same number of harmonics".into()));
    }
    if grid < 16 || !(eta > 0.0) {
        return Err(DemoError::InvalidInput("need at least 16 grid points and a positive step".into()));
    }
    let thetas: Vec<f64> = (0..grid).map(|i| TAU * i as f64 / grid as f64).collect();
    let goal: Vec<[f64; 2]> = thetas.iter().map(|&t| target.eval(t)).collect();
    let mut h = init.clone();
    let mut pts: Vec<[f64; 2]> = thetas.iter().map(|&t| h.eval(t)).collect();
    let mut steps = Vec::with_capacity(n_steps + 1);
    let mut crossed: Option<(usize, f64)> = None;
    let n = grid as f64;

    for step in 0..=n_steps {
        let winding = winding_of(&pts)?;
        let margin = pts.iter().map(|p| p[0].hypot(p[1])).fold(f64::INFINITY, f64::min);
        let resid: Vec<[f64; 2]> = pts.iter().zip(&goal).map(|(p, g)| [p[0] - g[0], p[1] - g[1]]).collect();
        let loss = resid.iter().map(|r| r[0] * r[0] + r[1] * r[1]).sum::<f64>() / n;
        if let Some(prev) = steps.last().map(|s: &WindingStep| s.winding) {
            if prev != winding && crossed.is_none() {
                return Err(DemoError::WindingChanged(step));
            }
        }
        if step == n_steps {
            steps.push(WindingStep { step, winding, margin, displacement: 0.0, loss });
            break;
        }

        let mut next = h.clone();
        for d in 0..2 {
            next.constant[d] -= eta * 2.0 * resid.iter().map(|r| r[d]).sum::<f64>() / n;
        }
        for k in 0..h.harmonics() {
            let kf = (k + 1) as f64;
            for d in 0..2 {
                let (mut gc, mut gs) = (0.0, 0.0);
                for (r, &t) in resid.iter().zip(&thetas) {
                    let (s, c) = (kf * t).sin_cos();
                    gc += r[d] * c;
                    gs += r[d] * s;
                }
                next.cos[k][d] -= eta * 2.0 * gc / n;
                next.sin[k][d] -= eta * 2.0 * gs / n;
            }
        }
        let next_pts: Vec<[f64; 2]> = thetas.iter().map(|&t| next.eval(t)).collect();
        let displacement =
            pts.iter().zip(&next_pts).map(|(a, b)| (a[0] - b[0]).hypot(a[1] - b[1])).fold(0.0, f64::max);
        if crossed.is_none() && displacement >= margin {
            crossed = Some((step + 1, margin));
        }
        steps.push(WindingStep { step, winding, margin, displacement, loss });
        h = next;
        pts = next_pts;
    }
    let trace = WindingTrace { steps, final_map: h };
    match crossed {
        Some((step, margin)) => Err(DemoError::OriginCrossed { step, margin, trace }),
        None => Ok(trace),
    }
}

pub fn write_winding_trace(path: &Path, trace: &WindingTrace) -> Result<(), DemoError> {
    let mut s = String::from("step,winding,margin,displacement,loss\n");
    for st in &trace.steps {
        let _ = writeln!(s, "{},{},{},{},{}", st.step, st.winding, st.margin, st.displacement, st.loss);
    }
    std::fs::write(path, s)?;
    Ok(())
}

/// A degree-`degree` circle of radius 1.5 with a shifted centre and two
/// perturbed harmonics, well clear of the origin.
pub fn perturbed_circle(degree: i32) -> PlanarMap {
    let mut m = PlanarMap::circle(degree, 1.5, 3);
    m.constant = [0.1, -0.15];
    m.cos[2][0] += 0.1;
    m.sin[0][1] -= 0.12;
    m
}

fn value(w: Winding) -> f64 {
    match w {
        Winding::Value(k) => k as f64,
        Winding::Undefined => f64::NAN,
    }
}

/// Winding constancy under 2000 small steps for degrees 1 and 2, and the
/// single large step that drags a degree-1 curve through the origin. Traces
/// are written to `out_dir` when given.
pub fn run_winding_demos(out_dir: Option<&Path>) -> Result<Vec<super::DemoResult>, DemoError> {
    let mut out = Vec::new();
    for degree in [1, 2] {
        let trace = winding_invariance_run(&perturbed_circle(degree), &PlanarMap::circle(degree, 1.0, 3), 2000, 0.01, 256)?;
        let changes = trace.steps.windows(2).filter(|w| w[0].winding != w[1].winding).count();
        let last = trace.steps.last().map_or(f64::NAN, |s| value(s.winding));
        let mut r = super::DemoResult::new(
            &format!("degree {degree} kept over 2000 small steps"),
            vec![changes as f64, last],
            vec![0.0, degree as f64],
            0.0,
        );
        if let Some(dir) = out_dir {
            let p = dir.join(format!("winding_degree{degree}.csv"));
            write_winding_trace(&p, &trace)?;
            r.trace = Some(p);
        }
        out.push(r);
    }
    let (step, trace) = match winding_invariance_run(&PlanarMap::circle(1, 1.5, 2), &PlanarMap::circle(2, 1.0, 2), 5, 1.0, 256) {
        Err(DemoError::OriginCrossed { step, trace, .. }) => (step as f64, trace),
        Ok(trace) => (f64::NAN, trace),
        Err(e) => return Err(e),
    };
    let before = trace.steps.first().map_or(f64::NAN, |s| value(s.winding));
    let after = trace.steps.get(1).map_or(f64::NAN, |s| value(s.winding));
    let mut r = super::DemoResult::new("large step flagged at the origin", vec![step, before, after], vec![1.0, 1.0, 2.0], 0.0);
    if let Some(dir) = out_dir {
        let p = dir.join("winding_large_step.csv");
        write_winding_trace(&p, &trace)?;
        r.trace = Some(p);
    }
    out.push(r);
    Ok(out)
}
