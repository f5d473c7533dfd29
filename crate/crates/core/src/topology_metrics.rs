//! Diagnostics for encoders of a circle-shaped data manifold: winding number,
//! crossing number of the pre-projection trace, continuity score and
//! cyclic-order bookkeeping for tracked points.

use std::cmp::Ordering;
use std::fmt;

use robust::{orient2d, Coord};
use thiserror::Error;

use crate::geometry::{geodesic_distance, wrap_angle, CircleAngle, TorusPoint, TAU};

/// Continuity scores at or above this value are judged non-homeomorphic.
pub const HOMEOMORPHISM_THRESHOLD: f64 = 10.0;
pub const DEFAULT_STEP_TOLERANCE: f64 = 1e-3;
pub const DEFAULT_PERCENTILE: f64 = 90.0;
pub const MIN_POINT_SEPARATION: f64 = 1e-9;
/// Number of source angles used when a path is sampled for evaluation.
pub const DEFAULT_PATH_SAMPLES: usize = 360;

const MIN_WINDING_SAMPLES: usize = 16;
const MIN_POLYLINE_VERTICES: usize = 8;
const MIN_CONTINUITY_SAMPLES: usize = 32;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TopologyError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("polyline has a zero-length segment at vertex {0}")]
    DegenerateSegment(usize),
    #[error("source step {0} has zero length")]
    ZeroSourceStep(usize),
    #[error("points {0} and {1} coincide")]
    CoincidentPoints(usize, usize),
    #[error("length mismatch: {0} source angles, {1} encoded")]
    LengthMismatch(usize, usize),
    #[error("source angles must increase monotonically around one loop")]
    NotALoop,
    #[error("percentile must lie in [0, 100], got {0}")]
    BadPercentile(f64),
    #[error("labels must be {0} distinct values")]
    BadLabels(usize),
}

/// Encoder outputs along a closed walk around the source circle.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedPath {
    source: Vec<CircleAngle>,
    encoded: Vec<CircleAngle>,
    y_trace: Option<Vec<[f64; 2]>>,
}

impl EncodedPath {
    pub fn new(
        source: Vec<CircleAngle>,
        encoded: Vec<CircleAngle>,
        y_trace: Option<Vec<[f64; 2]>>,
    ) -> Result<Self, TopologyError> {
        if source.len() != encoded.len() {
            return Err(TopologyError::LengthMismatch(source.len(), encoded.len()));
        }
        if let Some(y) = &y_trace {
            if y.len() != source.len() {
                return Err(TopologyError::LengthMismatch(source.len(), y.len()));
            }
        }
        // Unwrapped forward steps must be positive and sum to one turn.
        let n = source.len();
        if n > 1 {
            let mut total = 0.0;
            for i in 0..n {
                let mut d = source[(i + 1) % n].radians() - source[i].radians();
                if d <= 0.0 {
                    d += TAU;
                }
                total += d;
            }
            if (total - TAU).abs() > 1e-6 {
                return Err(TopologyError::NotALoop);
            }
        }
        Ok(EncodedPath { source, encoded, y_trace })
    }

    /// `n` evenly spaced source angles starting at −π + 2π/n.
    pub fn uniform_source(n: usize) -> Vec<CircleAngle> {
        (1..=n).map(|i| CircleAngle::new(-std::f64::consts::PI + TAU * i as f64 / n as f64)).collect()
    }

    pub fn len(&self) -> usize {
        self.source.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source.is_empty()
    }

    pub fn source(&self) -> &[CircleAngle] {
        &self.source
    }

    pub fn encoded(&self) -> &[CircleAngle] {
        &self.encoded
    }

    pub fn y_trace(&self) -> Option<&[[f64; 2]]> {
        self.y_trace.as_deref()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Winding {
    Value(i64),
    Undefined,
}

impl fmt::Display for Winding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Winding::Value(v) => write!(f, "{v}"),
            Winding::Undefined => f.write_str("undefined"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Crossings {
    Count(usize),
    NotAvailable,
}

impl fmt::Display for Crossings {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Crossings::Count(c) => write!(f, "{c}"),
            Crossings::NotAvailable => f.write_str("--"),
        }
    }
}

/// Cyclic order of labelled points, canonicalised so the smallest label is
/// first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CyclicOrder {
    Order(Vec<usize>),
    NotApplicable,
}

impl fmt::Display for CyclicOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CyclicOrder::Order(o) => {
                let s: Vec<String> = o.iter().map(|l| l.to_string()).collect();
                write!(f, "({})", s.join(","))
            }
            CyclicOrder::NotApplicable => f.write_str("n/a"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopologyReport {
    pub winding: Winding,
    pub crossings: Crossings,
    pub continuity: f64,
    pub homeomorphic: bool,
    pub cyclic_order: CyclicOrder,
    pub diverged: bool,
}

impl TopologyReport {
    /// Evaluates every diagnostic on `path`. Crossings come from the y trace
    /// when present; the cyclic order is that of the two-arc split when the
    /// encoded path breaks into two pieces.
    pub fn evaluate(path: &EncodedPath, diverged: bool) -> Result<Self, TopologyError> {
        let winding = winding_number(path, DEFAULT_STEP_TOLERANCE)?;
        let crossings = match path.y_trace() {
            Some(y) => Crossings::Count(crossing_number(y)?),
            None => Crossings::NotAvailable,
        };
        let continuity = continuity_score(path, DEFAULT_PERCENTILE)?;
        let cyclic_order = match arc_endpoints(path) {
            Some(idx) => {
                let pts: Vec<CircleAngle> = idx.iter().map(|&i| path.encoded[i]).collect();
                match cyclic_order(&pts, &[1, 2, 3, 4]) {
                    Ok(o) => CyclicOrder::Order(canonical_class(&o)),
                    Err(_) => CyclicOrder::NotApplicable,
                }
            }
            None => CyclicOrder::NotApplicable,
        };
        Ok(TopologyReport {
            winding,
            crossings,
            continuity,
            homeomorphic: homeomorphism_verdict(continuity, diverged),
            cyclic_order,
            diverged,
        })
    }
}

/// Degree of the encoded loop from wrapped finite differences, including the
/// closing step. A step too close to π has no unambiguous lift.
pub fn winding_number(path: &EncodedPath, tol_step: f64) -> Result<Winding, TopologyError> {
    let n = path.len();
    if n < MIN_WINDING_SAMPLES {
        return Err(TopologyError::TooFewSamples { needed: MIN_WINDING_SAMPLES, got: n });
    }
    let limit = std::f64::consts::PI * (1.0 - tol_step);
    let mut total = 0.0;
    for i in 0..n {
        let step = wrap_angle(path.encoded[(i + 1) % n].radians() - path.encoded[i].radians());
        if step.abs() >= limit {
            return Ok(Winding::Undefined);
        }
        total += step;
    }
    Ok(Winding::Value((total / TAU).round() as i64))
}

fn coord(p: [f64; 2]) -> Coord<f64> {
    Coord { x: p[0], y: p[1] }
}

fn orientation(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> Ordering {
    orient2d(coord(a), coord(b), coord(c)).partial_cmp(&0.0).unwrap_or(Ordering::Equal)
}

/// Whether half-open segments [p, q) and [r, s) meet in exactly one point.
/// Collinear overlaps are not crossings.
fn half_open_segments_cross(p: [f64; 2], q: [f64; 2], r: [f64; 2], s: [f64; 2]) -> bool {
    let o1 = orientation(p, q, r);
    let o2 = orientation(p, q, s);
    let o3 = orientation(r, s, p);
    let o4 = orientation(r, s, q);
    let opposite = |a: Ordering, b: Ordering| a == Ordering::Equal || b == Ordering::Equal || a != b;
    if o1 == Ordering::Equal && o2 == Ordering::Equal {
        return false;
    }
    // Touching at an excluded end point does not count.
    opposite(o1, o2) && opposite(o3, o4) && o2 != Ordering::Equal && o4 != Ordering::Equal
}

/// Number of intersections between non-adjacent segments of the closed
/// polyline through `points`.
pub fn crossing_number(points: &[[f64; 2]]) -> Result<usize, TopologyError> {
    let n = points.len();
    if n < MIN_POLYLINE_VERTICES {
        return Err(TopologyError::TooFewSamples { needed: MIN_POLYLINE_VERTICES, got: n });
    }
    for i in 0..n {
        if points[i] == points[(i + 1) % n] {
            return Err(TopologyError::DegenerateSegment(i));
        }
    }
    let bbox = |i: usize| {
        let (a, b) = (points[i], points[(i + 1) % n]);
        [a[0].min(b[0]), a[0].max(b[0]), a[1].min(b[1]), a[1].max(b[1])]
    };
    let boxes: Vec<[f64; 4]> = (0..n).map(bbox).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| boxes[a][0].total_cmp(&boxes[b][0]));

    // Sweep in x; only segments whose x-ranges overlap are tested.
    let mut count = 0;
    let mut active: Vec<usize> = Vec::new();
    for &i in &order {
        let bi = boxes[i];
        active.retain(|&j| boxes[j][1] >= bi[0]);
        for &j in &active {
            let adjacent = (i + 1) % n == j || (j + 1) % n == i;
            let bj = boxes[j];
            if adjacent || bj[3] < bi[2] || bi[3] < bj[2] {
                continue;
            }
            if half_open_segments_cross(points[i], points[(i + 1) % n], points[j], points[(j + 1) % n]) {
                count += 1;
            }
        }
        active.push(i);
    }
    Ok(count)
}

/// Percentile with linear interpolation between order statistics at rank
/// α/100·(n − 1).
pub fn percentile(values: &[f64], alpha: f64) -> Result<f64, TopologyError> {
    if !(0.0..=100.0).contains(&alpha) {
        return Err(TopologyError::BadPercentile(alpha));
    }
    if values.is_empty() {
        return Err(TopologyError::TooFewSamples { needed: 1, got: 0 });
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = alpha / 100.0 * (v.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    Ok(v[lo] + (v[hi] - v[lo]) * (rank - lo as f64))
}

/// Ratio of the largest local stretch to its α-th percentile. A constant
/// encoder scores +∞.
pub fn continuity_score(path: &EncodedPath, alpha: f64) -> Result<f64, TopologyError> {
    let enc = &path.encoded;
    stretch_continuity(&path.source, |i, j| geodesic_distance(enc[i], enc[j]), alpha)
}

/// Continuity score of a path into the torus, with encoded steps measured by
/// the flat torus distance.
pub fn torus_continuity_score(
    source: &[CircleAngle],
    encoded: &[TorusPoint],
    alpha: f64,
) -> Result<f64, TopologyError> {
    if source.len() != encoded.len() {
        return Err(TopologyError::LengthMismatch(source.len(), encoded.len()));
    }
    stretch_continuity(source, |i, j| encoded[i].geodesic_distance(encoded[j]), alpha)
}

fn stretch_continuity(
    source: &[CircleAngle],
    encoded_step: impl Fn(usize, usize) -> f64,
    alpha: f64,
) -> Result<f64, TopologyError> {
    let n = source.len();
    if n < MIN_CONTINUITY_SAMPLES {
        return Err(TopologyError::TooFewSamples { needed: MIN_CONTINUITY_SAMPLES, got: n });
    }
    let mut q = Vec::with_capacity(n);
    for i in 0..n {
        let j = (i + 1) % n;
        let ds = geodesic_distance(source[i], source[j]);
        if ds == 0.0 {
            return Err(TopologyError::ZeroSourceStep(i));
        }
        q.push(encoded_step(i, j) / ds);
    }
    let max = q.iter().copied().fold(0.0, f64::max);
    let p = percentile(&q, alpha)?;
    Ok(if p > 0.0 { max / p } else { f64::INFINITY })
}

pub fn homeomorphism_verdict(continuity: f64, diverged: bool) -> bool {
    continuity < HOMEOMORPHISM_THRESHOLD && !diverged
}

/// Torus verdict from the continuity scores of the per-attribute paths.
pub fn torus_homeomorphism_verdict(continuities: &[f64], diverged: bool) -> bool {
    if continuities.is_empty() {
        return false;
    }
    let mean = continuities.iter().sum::<f64>() / continuities.len() as f64;
    homeomorphism_verdict(mean, diverged)
}

/// Labels sorted by angle, rotated so the smallest label comes first.
pub fn cyclic_order(points: &[CircleAngle], labels: &[usize]) -> Result<Vec<usize>, TopologyError> {
    if points.len() != labels.len() {
        return Err(TopologyError::LengthMismatch(points.len(), labels.len()));
    }
    let mut sorted = labels.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != labels.len() {
        return Err(TopologyError::BadLabels(labels.len()));
    }
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            if geodesic_distance(points[i], points[j]) <= MIN_POINT_SEPARATION {
                return Err(TopologyError::CoincidentPoints(i, j));
            }
        }
    }
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.sort_by(|&a, &b| points[a].radians().total_cmp(&points[b].radians()));
    let mut order: Vec<usize> = idx.into_iter().map(|i| labels[i]).collect();
    if let Some(first) = order.iter().enumerate().min_by_key(|(_, &l)| l).map(|(i, _)| i) {
        order.rotate_left(first);
    }
    Ok(order)
}

fn rotations(order: &[usize]) -> impl Iterator<Item = Vec<usize>> + '_ {
    (0..order.len()).map(move |k| {
        let mut o = order.to_vec();
        o.rotate_left(k);
        o
    })
}

/// Equality of cyclic sequences up to rotation, and optionally reversal.
pub fn same_cyclic_order(a: &[usize], b: &[usize], allow_reflection: bool) -> bool {
    if a.len() != b.len() {
        return false;
    }
    if a.is_empty() || rotations(b).any(|r| r == a) {
        return true;
    }
    if allow_reflection {
        let rev: Vec<usize> = b.iter().rev().copied().collect();
        return rotations(&rev).any(|r| r == a);
    }
    false
}

/// Lexicographically smallest representative under rotation and reversal.
pub fn canonical_class(order: &[usize]) -> Vec<usize> {
    let rev: Vec<usize> = order.iter().rev().copied().collect();
    rotations(order).chain(rotations(&rev)).min().unwrap_or_default()
}

/// Steps larger than this multiple of the median step belong to a swing.
pub const SWING_FACTOR: f64 = 5.0;

/// Sample indices of the four ends of the two arcs obtained by cutting the
/// encoded loop at its two largest swings: first arc start and end, then
/// second arc start and end, in source order. A swing is the largest
/// remaining step together with the adjacent steps that exceed
/// `SWING_FACTOR` times the median step, so a jump smeared over a few
/// samples is cut as a whole. `None` unless both swings exceed `min_jump`
/// radians.
pub fn arc_endpoints_with(path: &EncodedPath, min_jump: f64) -> Option<[usize; 4]> {
    let n = path.len();
    if n < 8 {
        return None;
    }
    let steps: Vec<f64> = (0..n).map(|i| geodesic_distance(path.encoded[i], path.encoded[(i + 1) % n])).collect();
    let mut sorted = steps.clone();
    sorted.sort_by(f64::total_cmp);
    let floor = SWING_FACTOR * sorted[n / 2];
    let max_len = n / 8;
    let mut taken = vec![false; n];
    let mut swings = Vec::with_capacity(2);
    for _ in 0..2 {
        let k = (0..n).filter(|&k| !taken[k]).max_by(|&a, &b| steps[a].total_cmp(&steps[b]).then(b.cmp(&a)))?;
        taken[k] = true;
        let (mut start, mut end, mut len, mut total) = (k, k, 1, steps[k]);
        loop {
            let before = (start + n - 1) % n;
            let after = (end + 1) % n;
            let grow_before = !taken[before] && steps[before] > floor;
            let grow_after = !taken[after] && steps[after] > floor;
            if len >= max_len || !(grow_before || grow_after) {
                break;
            }
            let next = if grow_before && (!grow_after || steps[before] >= steps[after]) { before } else { after };
            if next == before {
                start = before;
            } else {
                end = after;
            }
            taken[next] = true;
            total += steps[next];
            len += 1;
        }
        if total <= min_jump {
            return None;
        }
        swings.push((start, end));
    }
    // A swing over steps start..=end spans samples start..=end+1.
    swings.sort();
    let [(s1, e1), (s2, e2)] = [swings[0], swings[1]];
    Some([(e2 + 1) % n, s1, (e1 + 1) % n, s2])
}

pub fn arc_endpoints(path: &EncodedPath) -> Option<[usize; 4]> {
    arc_endpoints_with(path, 0.5)
}
