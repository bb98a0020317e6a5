//! Iterated pullbacks of the primary segments and the induced partition.
//!
//! The primary segment `PLS` is the part of `L★C` between `L★d` and its first
//! crossing with `EL★`; `PRS` is the mirror construction on `R`. A point `p`
//! on a half-plane `X` lies inside `E★` of `X` exactly when `P^{-1}(p)` lands
//! on the other half-plane, so an arc of `W^s(c)` meets `E★` precisely where
//! the side of its next backward image switches. Pullbacks are traced through
//! the seed angle of the collision family: generation `k` of a segment is the
//! `k`-th backward image of its points.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap};
use std::fmt;

use crate::error::{Error, Result};
use crate::flow::{Flow, SectionPoint, Side};
use crate::manifolds::{
    arcs_intersect, segment_intersection, Arc, ArcIntersection, BranchItinerary, EndpointLabel, ManifoldConfig,
    Manifolds, SeedKind, Terminal,
};

/// Number of pullbacks until the first crossing with `EL★` or `ER★`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PullbackCount {
    Exact(u32),
    /// No crossing within the budget.
    AboveBudget { above_budget: u32 },
}

impl PullbackCount {
    pub fn exact(self) -> Option<u32> {
        match self {
            PullbackCount::Exact(n) => Some(n),
            PullbackCount::AboveBudget { .. } => None,
        }
    }

    /// Smallest value consistent with the count.
    pub fn at_least(self) -> u32 {
        match self {
            PullbackCount::Exact(n) => n,
            PullbackCount::AboveBudget { above_budget } => above_budget + 1,
        }
    }
}

impl fmt::Display for PullbackCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PullbackCount::Exact(n) => write!(f, "{n}"),
            PullbackCount::AboveBudget { above_budget } => write!(f, ">{above_budget}"),
        }
    }
}

/// Per-generation record of a pullback chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSummary {
    pub k: u32,
    pub side: Side,
    pub samples: usize,
    /// `None` when the generation crosses `E★`.
    pub inside: Option<bool>,
    /// Family parameters at which the generation crosses `E★`.
    pub crossings: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub left_branch_word: String,
    pub right_branch_word: String,
    pub left_terminal: Terminal,
    pub right_terminal: Terminal,
    pub left_trace: Vec<GenerationSummary>,
    pub right_trace: Vec<GenerationSummary>,
}

/// The four integers that select the symbolic description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantities {
    pub l_c: u32,
    pub r_c: u32,
    pub l_cap: PullbackCount,
    pub r_cap: PullbackCount,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl Quantities {
    pub fn new(l_c: u32, r_c: u32, l_cap: PullbackCount, r_cap: PullbackCount) -> Result<Self> {
        let q = Self {
            l_c,
            r_c,
            l_cap,
            r_cap,
            provenance: None,
        };
        q.validate()?;
        Ok(q)
    }

    pub fn exact(l_c: u32, r_c: u32, l_cap: u32, r_cap: u32) -> Result<Self> {
        Self::new(l_c, r_c, PullbackCount::Exact(l_cap), PullbackCount::Exact(r_cap))
    }

    pub fn validate(&self) -> Result<()> {
        if self.l_c < 2 || self.r_c < 2 {
            return Err(Error::Inconsistent(format!("alternating lengths ({}, {}) below 2", self.l_c, self.r_c)));
        }
        if self.l_c.abs_diff(self.r_c) > 1 {
            return Err(Error::Inconsistent(format!(
                "alternating lengths ({}, {}) differ by more than 1",
                self.l_c, self.r_c
            )));
        }
        if self.l_cap.at_least() < 1 || self.r_cap.at_least() < 1 {
            return Err(Error::Inconsistent("pullback counts must be at least 1".into()));
        }
        Ok(())
    }

    pub fn count(&self, side: Side) -> PullbackCount {
        match side {
            Side::L => self.l_cap,
            Side::R => self.r_cap,
        }
    }

    pub fn alternating(&self, side: Side) -> u32 {
        match side {
            Side::L => self.l_c,
            Side::R => self.r_c,
        }
    }
}

impl fmt::Display for Quantities {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.l_c, self.r_c, self.l_cap, self.r_cap)
    }
}

/// A one-parameter family of orbits in `W^s(c)` with parameter `u` in `(0, 1)`.
pub trait BackwardFamily: Sync {
    /// Half-plane of generation 0.
    fn side(&self) -> Side;

    /// Section points of the orbit at `u`: element 0 lies on generation 0 and
    /// element `k` is its `k`-th backward image. Fewer than `count` points are
    /// returned when the orbit ends (ejection or escape).
    fn trace(&self, u: f64, count: usize) -> Result<Vec<SectionPoint>>;

    /// Limit of generation `k` as `u -> 0`.
    fn start_limit(&self, k: u32) -> Result<(EndpointLabel, SectionPoint)>;

    /// Limit of generation `k >= 1` as `u -> 1`.
    fn end_limit(&self, k: u32) -> Result<(EndpointLabel, SectionPoint)>;

    /// Polyline of `E★` on `side`, used to cross-check for narrow crossings
    /// that fall between samples.
    fn ejection_arc(&self, side: Side) -> Option<&Arc>;
}

/// The primary segment of `L★C` or `R★C`, parameterized so that both ends are
/// approached geometrically: the lower half of `(0, 1)` is log-spaced in the
/// seed angle and the upper half log-spaced in the distance to the first
/// `E★` crossing.
pub struct CollisionFamily<'m> {
    manifolds: &'m Manifolds<'m>,
    side: Side,
    sign: f64,
    alpha_min: f64,
    alpha_mid: f64,
    alpha_end: f64,
    depth_floor: f64,
    /// Crossings of the stable branches of `d` on M, indexed by first side.
    d_branches: [Vec<SectionPoint>; 2],
    ejection: [Arc; 2],
}

fn side_index(side: Side) -> usize {
    match side {
        Side::L => 0,
        Side::R => 1,
    }
}

impl<'m> CollisionFamily<'m> {
    /// Builds the family for the primary segment of `collision` (a seed arc
    /// `X★C`) given both ejection arcs. `hit` is the first crossing of
    /// `collision` with `E★` of its side.
    pub fn new(
        manifolds: &'m Manifolds<'m>,
        collision: &Arc,
        hit: &ArcIntersection,
        ejection: [Arc; 2],
        d_branches: [Vec<SectionPoint>; 2],
    ) -> Result<Self> {
        let side = collision.side;
        let (lo, hi) = (collision.params[hit.a_index], collision.params[hit.a_index + 1]);
        let (alpha_end, _) = manifolds.refine_inside_switch(side, lo, hi, 1e-13)?;
        let sign = manifolds.collision_sign(side)?;
        // keep the whole parameter range strictly inside E★
        let mut alpha_end = alpha_end;
        for _ in 0..60 {
            let (_, next) = manifolds.collision_probe(side, sign, alpha_end)?;
            if next == Some(side.other()) {
                break;
            }
            alpha_end -= (alpha_end * 1e-14).max(f64::EPSILON * alpha_end);
        }
        // statuses within the integration noise of the switch flicker; step
        // past the last outside probe
        let mut d = alpha_end * 1e-13;
        let mut last_outside = None;
        while d < alpha_end * 1e-8 {
            let (_, next) = manifolds.collision_probe(side, sign, alpha_end - d)?;
            if next != Some(side.other()) {
                last_outside = Some(d);
            }
            d *= 2.0;
        }
        if let Some(d) = last_outside {
            alpha_end -= 4.0 * d;
        }
        // first sampled angle of the arc (index 0 is the limit point)
        let alpha_min = collision.params[1];
        Ok(Self {
            manifolds,
            side,
            sign,
            alpha_min,
            alpha_mid: 0.5 * alpha_end,
            alpha_end,
            depth_floor: (alpha_end * 1e-13).max(4.0 * f64::EPSILON * alpha_end),
            d_branches,
            ejection,
        })
    }

    pub fn alpha_of(&self, u: f64) -> f64 {
        if u <= 0.5 {
            let (a, b) = (self.alpha_min.ln(), self.alpha_mid.ln());
            (a + (b - a) * 2.0 * u).exp()
        } else {
            let span = self.alpha_end - self.alpha_mid;
            self.alpha_end - span * (self.depth_floor / span).powf(2.0 * u - 1.0)
        }
    }

    pub fn alpha_end(&self) -> f64 {
        self.alpha_end
    }

    fn d_point(&self, of: Side, k: u32) -> Result<SectionPoint> {
        self.d_branches[side_index(of)]
            .get(k as usize)
            .copied()
            .ok_or_else(|| Error::NonTermination { crossings: k as usize })
    }
}

impl BackwardFamily for CollisionFamily<'_> {
    fn side(&self) -> Side {
        self.side
    }

    fn trace(&self, u: f64, count: usize) -> Result<Vec<SectionPoint>> {
        let alpha = self.alpha_of(u);
        let orbit = self
            .manifolds
            .manifold_orbit(SeedKind::Collision(self.side), self.sign, alpha, count)?;
        match orbit.crossings.first() {
            Some(c) if c.point.side == self.side => Ok(orbit.crossings.iter().map(|c| c.point).collect()),
            Some(_) => Err(Error::Inconsistent(format!("collision orbit at angle {alpha:.3e} starts on the wrong side"))),
            None => Err(orbit.termination.into_error()),
        }
    }

    fn start_limit(&self, k: u32) -> Result<(EndpointLabel, SectionPoint)> {
        let label = if k == 0 {
            EndpointLabel::StarD(self.side)
        } else {
            EndpointLabel::Pullback { of: self.side, k }
        };
        Ok((label, self.d_point(self.side, k)?))
    }

    fn end_limit(&self, k: u32) -> Result<(EndpointLabel, SectionPoint)> {
        if k == 0 {
            return Err(Error::Precondition("generation 0 ends at a free crossing".into()));
        }
        let of = self.side.other();
        let label = if k == 1 {
            EndpointLabel::StarD(of)
        } else {
            EndpointLabel::Pullback { of, k: k - 1 }
        };
        Ok((label, self.d_point(of, k - 1)?))
    }

    fn ejection_arc(&self, side: Side) -> Option<&Arc> {
        Some(&self.ejection[side_index(side)])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    /// Largest number of pullbacks attempted.
    pub budget: u32,
    pub max_gap: f64,
    pub max_turn_degrees: f64,
    /// Chords shorter than this are exempt from the turn test; integration
    /// noise dominates their direction.
    pub turn_floor: f64,
    pub initial_samples: usize,
    pub max_samples: usize,
    /// Halvings allowed when chasing a polyline crossing that shows no switch.
    pub refill_levels: u32,
    /// Extra crossings requested per orbit beyond the current generation.
    pub lookahead: usize,
    pub min_step: f64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            budget: 64,
            max_gap: 1e-3,
            max_turn_degrees: 15.0,
            turn_floor: 1e-6,
            initial_samples: 64,
            max_samples: 400_000,
            refill_levels: 20,
            lookahead: 6,
            min_step: 1e-13,
        }
    }
}

/// Samples of a family: parameters in increasing order with their traces.
#[derive(Debug, Clone, Default)]
struct Samples {
    us: Vec<f64>,
    traces: Vec<Vec<SectionPoint>>,
}

impl Samples {
    fn len(&self) -> usize {
        self.us.len()
    }

    fn point(&self, i: usize, k: usize) -> Option<&SectionPoint> {
        self.traces[i].get(k)
    }

    fn merge(&mut self, us: Vec<f64>, traces: Vec<Vec<SectionPoint>>) {
        let mut all: Vec<(f64, Vec<SectionPoint>)> = self.us.drain(..).zip(self.traces.drain(..)).collect();
        all.extend(us.into_iter().zip(traces));
        all.sort_by(|a, b| a.0.total_cmp(&b.0));
        all.dedup_by(|a, b| a.0 == b.0);
        for (u, t) in all {
            self.us.push(u);
            self.traces.push(t);
        }
    }
}

/// A pullback chain `X★C` primary segment and its images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainTrace {
    pub side: Side,
    pub count: PullbackCount,
    /// Generations `0 ..` before the first crossing, as arcs with labeled ends.
    pub generations: Vec<Arc>,
    /// Whether each generation lies inside `E★`.
    pub inside: Vec<bool>,
    /// Generation `count`, split where it crosses `E★`.
    pub crossing: Option<SegmentedArc>,
    pub summaries: Vec<GenerationSummary>,
}

struct ChainBuilder<'f, F: BackwardFamily> {
    family: &'f F,
    config: ChainConfig,
    samples: Samples,
    depth: usize,
}

/// Segments searched ahead for a self-intersection in [`untangle`].
const LOOP_WINDOW: usize = 64;

/// Cuts out small loops that integration noise leaves where samples pile up
/// near a limit point: when segment `i` meets a segment at most `window`
/// further on, the vertices between are replaced by the meeting point.
pub fn untangle(points: &mut Vec<SectionPoint>, params: &mut Vec<f64>, window: usize) {
    let mut i = 0;
    while i + 2 < points.len() {
        let (a0, a1) = ((points[i].u1, points[i].u2), (points[i + 1].u1, points[i + 1].u2));
        let last = (i + window).min(points.len() - 2);
        let hit = (i + 2..=last).find_map(|j| {
            let (b0, b1) = ((points[j].u1, points[j].u2), (points[j + 1].u1, points[j + 1].u2));
            segment_intersection(a0, a1, b0, b1).map(|(t, _)| (j, t))
        });
        match hit {
            Some((j, t)) => {
                let x = SectionPoint::new(points[i].side, a0.0 + t * (a1.0 - a0.0), a0.1 + t * (a1.1 - a0.1));
                let u = params[i] + t * (params[i + 1] - params[i]);
                points.splice(i + 1..=j, [x]);
                params.splice(i + 1..=j, [u]);
            }
            None => i += 1,
        }
    }
}

fn turn_angle(a: &SectionPoint, b: &SectionPoint, c: &SectionPoint) -> f64 {
    let (x1, y1) = (b.u1 - a.u1, b.u2 - a.u2);
    let (x2, y2) = (c.u1 - b.u1, c.u2 - b.u2);
    (x1 * y2 - y1 * x2).atan2(x1 * x2 + y1 * y2).abs()
}

impl<'f, F: BackwardFamily> ChainBuilder<'f, F> {
    fn eval(&self, us: &[f64], depth: usize) -> Vec<Result<Vec<SectionPoint>>> {
        us.par_iter().map(|&u| self.family.trace(u, depth)).collect()
    }

    fn insert(&mut self, us: Vec<f64>) -> Result<()> {
        if self.samples.len() + us.len() > self.config.max_samples {
            return Err(Error::Refinement {
                side: self.family.side(),
                index: self.samples.len(),
                gap: self.config.max_gap,
            });
        }
        let results = self.eval(&us, self.depth);
        let mut keep_u = Vec::with_capacity(us.len());
        let mut keep_t = Vec::with_capacity(us.len());
        for (u, r) in us.into_iter().zip(results) {
            keep_u.push(u);
            keep_t.push(r?);
        }
        self.samples.merge(keep_u, keep_t);
        Ok(())
    }

    fn ensure_depth(&mut self, depth: usize) -> Result<()> {
        if depth <= self.depth {
            return Ok(());
        }
        self.depth = depth + self.config.lookahead;
        let stale: Vec<usize> = (0..self.samples.len())
            .filter(|&i| self.samples.traces[i].len() < depth)
            .collect();
        let us: Vec<f64> = stale.iter().map(|&i| self.samples.us[i]).collect();
        let fresh = self.eval(&us, self.depth);
        for (i, r) in stale.into_iter().zip(fresh) {
            self.samples.traces[i] = r?;
        }
        Ok(())
    }

    /// Side of element `k` of sample `i`, or `None` if the orbit ended first.
    fn side_at(&self, i: usize, k: usize) -> Option<Side> {
        self.samples.point(i, k).map(|p| p.side)
    }

    /// Inserts midpoints until generation `k` meets the gap and turn budgets.
    fn refine_generation(&mut self, k: usize) -> Result<()> {
        let max_turn = self.config.max_turn_degrees.to_radians();
        let start = self.family.start_limit(k as u32).ok().map(|x| x.1);
        let end = if k == 0 { None } else { self.family.end_limit(k as u32).ok().map(|x| x.1) };
        loop {
            let s = &self.samples;
            let n = s.len();
            let mut mids = Vec::new();
            // chords to the limit points on M
            if let (Some(a), Some(p)) = (start, s.point(0, k)) {
                if a.distance(p) > self.config.max_gap && s.us[0] > self.config.min_step {
                    mids.push(0.5 * s.us[0]);
                }
            }
            if let (Some(b), Some(p)) = (end, s.point(n - 1, k)) {
                if b.distance(p) > self.config.max_gap && 1.0 - s.us[n - 1] > self.config.min_step {
                    mids.push(0.5 * (1.0 + s.us[n - 1]));
                }
            }
            for i in 0..n - 1 {
                if s.us[i + 1] - s.us[i] < self.config.min_step {
                    continue;
                }
                let (Some(p), Some(q)) = (s.point(i, k), s.point(i + 1, k)) else {
                    mids.push(0.5 * (s.us[i] + s.us[i + 1]));
                    continue;
                };
                if p.side != q.side {
                    mids.push(0.5 * (s.us[i] + s.us[i + 1]));
                    continue;
                }
                let floor = self.config.turn_floor;
                let chord = p.distance(q);
                let mut bad = chord > self.config.max_gap;
                if !bad && chord > floor && i > 0 {
                    if let Some(a) = s.point(i - 1, k) {
                        bad = a.side == p.side && a.distance(p) > floor && turn_angle(a, p, q) > max_turn;
                    }
                }
                if !bad && chord > floor && i + 2 < n {
                    if let Some(c) = s.point(i + 2, k) {
                        bad = c.side == q.side && q.distance(c) > floor && turn_angle(p, q, c) > max_turn;
                    }
                }
                if bad {
                    mids.push(0.5 * (s.us[i] + s.us[i + 1]));
                }
            }
            if mids.is_empty() {
                return Ok(());
            }
            self.insert(mids)?;
        }
    }

    /// Inside flag of generation `k` at sample `i`: the next image switches side.
    fn inside_at(&self, i: usize, k: usize) -> Option<bool> {
        Some(self.side_at(i, k + 1)? != self.side_at(i, k)?)
    }

    /// Bisects a status switch of generation `k` between samples `i, i + 1`.
    fn locate_switch(&mut self, i: usize, k: usize) -> Result<f64> {
        let (mut lo, mut hi) = (self.samples.us[i], self.samples.us[i + 1]);
        let lo_status = self.inside_at(i, k);
        while hi - lo > self.config.min_step {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let t = self.family.trace(mid, k + 2)?;
            let status = match (t.get(k), t.get(k + 1)) {
                (Some(a), Some(b)) => Some(a.side != b.side),
                _ => None,
            };
            if status == lo_status {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    fn generation_arc(&self, k: u32) -> Result<Arc> {
        let family = self.family;
        let kk = k as usize;
        let (start_label, start) = family.start_limit(k)?;
        let mut points = vec![start];
        let mut params = vec![0.0];
        for i in 0..self.samples.len() {
            if let Some(p) = self.samples.point(i, kk) {
                points.push(*p);
                params.push(self.samples.us[i]);
            }
        }
        let end_label = if k == 0 {
            EndpointLabel::Free
        } else {
            let (label, end) = family.end_limit(k)?;
            points.push(end);
            params.push(1.0);
            label
        };
        let side = points[1].side;
        untangle(&mut points, &mut params, LOOP_WINDOW);
        Ok(Arc {
            side,
            points,
            params,
            start_label,
            end_label,
            max_gap: self.config.max_gap,
            max_turn_degrees: self.config.max_turn_degrees,
        })
    }

    /// Looks for `E★` crossings of generation `k` hidden between samples that
    /// agree on their status. Returns true if a switch was uncovered.
    fn refill_near_polyline_hits(&mut self, k: usize) -> Result<bool> {
        let arc = self.generation_arc(k as u32)?;
        let Some(ejection) = self.family.ejection_arc(arc.side) else {
            return Ok(false);
        };
        let hits = arcs_intersect(&arc, ejection)?;
        for hit in hits {
            // polyline index 0 is the M limit, samples start at index 1
            let (a, b) = (arc.params[hit.a_index], arc.params[hit.a_index + 1]);
            let (mut lo, mut hi) = (a.max(1e-300), b.min(1.0 - 1e-16));
            for _ in 0..self.config.refill_levels {
                let mid = 0.5 * (lo + hi);
                let t = self.family.trace(mid, k + 2)?;
                let status = match (t.get(k), t.get(k + 1)) {
                    (Some(p), Some(q)) => Some(p.side != q.side),
                    _ => None,
                };
                let i = self.samples.us.partition_point(|&u| u < lo);
                let reference = if i < self.samples.len() { self.inside_at(i, k) } else { None };
                if status != reference {
                    self.insert(vec![mid])?;
                    return Ok(true);
                }
                // keep the half whose chord still crosses E★
                let Some(p) = t.get(k) else { break };
                let lo_pt = arc.points[hit.a_index];
                let crosses_lo = ejection
                    .points
                    .windows(2)
                    .any(|w| segment_intersection((lo_pt.u1, lo_pt.u2), (p.u1, p.u2), (w[0].u1, w[0].u2), (w[1].u1, w[1].u2)).is_some());
                if crosses_lo {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
        }
        Ok(false)
    }
}

/// Traces pullbacks of the primary segment of `family` until a generation
/// crosses `E★` or the budget runs out.
pub fn trace_chain<F: BackwardFamily>(family: &F, config: ChainConfig) -> Result<ChainTrace> {
    let n0 = config.initial_samples.max(4);
    let mut builder = ChainBuilder {
        family,
        config,
        samples: Samples::default(),
        depth: 2 + config.lookahead,
    };
    builder.insert((0..n0).map(|i| (i as f64 + 0.5) / n0 as f64).collect())?;
    let mut generations = Vec::new();
    let mut inside = Vec::new();
    let mut summaries = Vec::new();
    for k in 0..=config.budget as usize {
        builder.ensure_depth(k + 2)?;
        builder.refine_generation(k)?;
        let status_switch = |b: &ChainBuilder<F>| -> Result<Option<usize>> {
            let n = b.samples.len();
            let mut first = None;
            for i in 0..n {
                if b.samples.traces[i].len() < k + 2 {
                    return Err(Error::Obstruction { param: b.samples.us[i] });
                }
                if first.is_none() && i + 1 < n && b.inside_at(i, k) != b.inside_at(i + 1, k) {
                    first = Some(i);
                }
            }
            Ok(first)
        };
        let mut switch = status_switch(&builder)?;
        if switch.is_none() && builder.refill_near_polyline_hits(k)? {
            builder.refine_generation(k)?;
            switch = status_switch(&builder)?;
        }
        let side = builder.side_at(0, k).expect("depth ensured");
        if (0..builder.samples.len()).any(|i| builder.side_at(i, k) != Some(side)) {
            return Err(Error::Inconsistent(format!("generation {k} of the {side:?} chain splits across half-planes")));
        }
        if let (0, Some(i)) = (k, switch) {
            return Err(Error::Inconsistent(format!(
                "primary segment of the {side:?} chain leaves E★ before its end (u = {:.6e})",
                builder.samples.us[i]
            )));
        }
        if switch.is_some() {
            let n = builder.samples.len();
            let mut crossings = Vec::new();
            for i in 0..n - 1 {
                if builder.inside_at(i, k) != builder.inside_at(i + 1, k) {
                    crossings.push(builder.locate_switch(i, k)?);
                }
            }
            let arc = builder.generation_arc(k as u32)?;
            let segmented = SegmentedArc::from_switches(arc, &crossings);
            summaries.push(GenerationSummary {
                k: k as u32,
                side,
                samples: n,
                inside: None,
                crossings,
            });
            return Ok(ChainTrace {
                side: family.side(),
                count: PullbackCount::Exact(k as u32),
                generations,
                inside,
                crossing: Some(segmented),
                summaries,
            });
        }
        let status = builder.inside_at(0, k).expect("depth ensured");
        generations.push(builder.generation_arc(k as u32)?);
        inside.push(status);
        summaries.push(GenerationSummary {
            k: k as u32,
            side,
            samples: builder.samples.len(),
            inside: Some(status),
            crossings: Vec::new(),
        });
    }
    Ok(ChainTrace {
        side: family.side(),
        count: PullbackCount::AboveBudget {
            above_budget: config.budget,
        },
        generations,
        inside,
        crossing: None,
        summaries,
    })
}

/// How a segment pulls back, by where its ends lie.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SegmentCase {
    /// Both ends on M (a loop when they coincide).
    Case1,
    /// One end on M, one on `EL★` or `ER★`.
    Case2,
    /// Both ends on `EL★` or `ER★`.
    Case3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    /// Parameter range of the segment within the base arc.
    pub range: (f64, f64),
    pub case: SegmentCase,
    pub inside: Option<bool>,
}

/// An arc of `W^s(c)` split at its crossings with `EL★` or `ER★`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentedArc {
    pub base: Arc,
    pub splits: Vec<f64>,
    pub segments: Vec<Segment>,
}

impl SegmentedArc {
    /// Splits `base` at the given parameters. The ends of `base` are on M
    /// unless labeled free.
    pub fn from_switches(base: Arc, splits: &[f64]) -> Self {
        let mut cuts = vec![base.params[0]];
        cuts.extend(splits.iter().copied());
        cuts.push(*base.params.last().expect("nonempty arc"));
        let start_on_m = base.start_label.on_collision_manifold();
        let end_on_m = base.end_label.on_collision_manifold();
        let last = cuts.len() - 2;
        let segments = (0..=last)
            .map(|i| {
                let a = if i == 0 { start_on_m } else { false };
                let b = if i == last { end_on_m } else { false };
                let case = match (a, b) {
                    (true, true) => SegmentCase::Case1,
                    (true, false) | (false, true) => SegmentCase::Case2,
                    (false, false) => SegmentCase::Case3,
                };
                Segment {
                    range: (cuts[i], cuts[i + 1]),
                    case,
                    inside: None,
                }
            })
            .collect();
        Self {
            base,
            splits: splits.to_vec(),
            segments,
        }
    }
}

fn pulled_label(label: EndpointLabel) -> Option<EndpointLabel> {
    match label {
        EndpointLabel::StarD(of) => Some(EndpointLabel::Pullback { of, k: 1 }),
        EndpointLabel::Pullback { of, k } => Some(EndpointLabel::Pullback { of, k: k + 1 }),
        _ => None,
    }
}

/// Pulls back each segment of a generation of `family`.
///
/// Segment interiors are mapped pointwise; ends on M are relabeled by one more
/// pullback, and ends at an `E★` crossing become `L★d` or `R★d` according to
/// the half-plane the segment lands on.
pub fn pull_back_arc<F: BackwardFamily>(family: &F, arc: &SegmentedArc, generation: u32, config: &ChainConfig) -> Result<Vec<Arc>> {
    let k = generation as usize;
    let mut out = Vec::new();
    for seg in &arc.segments {
        let (a, b) = seg.range;
        let n = config.initial_samples.max(4);
        let mut us: Vec<f64> = (0..n).map(|i| a + (b - a) * (i as f64 + 0.5) / n as f64).collect();
        let mut pts: Vec<Result<Vec<SectionPoint>>> = us.par_iter().map(|&u| family.trace(u, k + 2)).collect();
        // near-crossing refill: halve toward the split ends
        for level in 1..=config.refill_levels {
            let h = (b - a) * 0.5f64.powi(level as i32) / n as f64;
            let mut extra = Vec::new();
            if seg.range.0 != arc.base.params[0] {
                extra.push(a + h);
            }
            if seg.range.1 != *arc.base.params.last().unwrap() {
                extra.push(b - h);
            }
            let more: Vec<_> = extra.par_iter().map(|&u| family.trace(u, k + 2)).collect();
            us.extend(extra);
            pts.extend(more);
        }
        let mut pairs: Vec<(f64, SectionPoint)> = Vec::with_capacity(us.len());
        for (u, t) in us.into_iter().zip(pts) {
            let t = t?;
            let p = t.get(k + 1).ok_or(Error::Obstruction { param: u })?;
            pairs.push((u, *p));
        }
        pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
        let side = pairs[0].1.side;
        if pairs.iter().any(|(_, p)| p.side != side) {
            return Err(Error::Inconsistent("segment interior pulls back to both half-planes".into()));
        }
        let start = if a == arc.base.params[0] {
            let label = pulled_label(arc.base.start_label).ok_or_else(|| Error::Precondition("start label".into()))?;
            let (_, p) = family.start_limit(generation + 1)?;
            (label, p)
        } else {
            (EndpointLabel::StarD(side), star_d(family, side)?)
        };
        let end = if b == *arc.base.params.last().unwrap() && arc.base.end_label.on_collision_manifold() {
            let label = pulled_label(arc.base.end_label).ok_or_else(|| Error::Precondition("end label".into()))?;
            let (_, p) = family.end_limit(generation + 1)?;
            (label, p)
        } else {
            (EndpointLabel::StarD(side), star_d(family, side)?)
        };
        let mut points = vec![start.1];
        let mut params = vec![a];
        for (u, p) in pairs {
            points.push(p);
            params.push(u);
        }
        points.push(end.1);
        params.push(b);
        out.push(Arc {
            side,
            points,
            params,
            start_label: start.0,
            end_label: end.0,
            max_gap: config.max_gap,
            max_turn_degrees: config.max_turn_degrees,
        });
    }
    Ok(out)
}

/// The point `X★d` of `side`.
fn star_d<F: BackwardFamily>(family: &F, side: Side) -> Result<SectionPoint> {
    let (_, p) = if family.side() == side {
        family.start_limit(0)?
    } else {
        family.end_limit(1)?
    };
    Ok(p)
}

/// Seed arcs with their first crossings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedArcs {
    pub lc: Arc,
    pub rc: Arc,
    pub el: Arc,
    pub er: Arc,
    pub left_hits: Vec<ArcIntersection>,
    pub right_hits: Vec<ArcIntersection>,
}

impl SeedArcs {
    pub fn collision(&self, side: Side) -> &Arc {
        match side {
            Side::L => &self.lc,
            Side::R => &self.rc,
        }
    }

    pub fn ejection(&self, side: Side) -> &Arc {
        match side {
            Side::L => &self.el,
            Side::R => &self.er,
        }
    }

    pub fn hits(&self, side: Side) -> &[ArcIntersection] {
        match side {
            Side::L => &self.left_hits,
            Side::R => &self.right_hits,
        }
    }

    pub fn compute(mf: &Manifolds) -> Result<Self> {
        let lc = mf.seed_arc(SeedKind::Collision(Side::L))?;
        let rc = mf.seed_arc(SeedKind::Collision(Side::R))?;
        let el = mf.seed_arc(SeedKind::Ejection(Side::L))?;
        let er = mf.seed_arc(SeedKind::Ejection(Side::R))?;
        let left_hits = mf.intersect_seed_arcs(&lc, &el)?;
        let right_hits = mf.intersect_seed_arcs(&rc, &er)?;
        for (side, hits) in [(Side::L, &left_hits), (Side::R, &right_hits)] {
            if hits.is_empty() {
                return Err(Error::Inconsistent(format!("{}★C misses E{}★", side.letter(), side.letter())));
            }
        }
        Ok(Self {
            lc,
            rc,
            el,
            er,
            left_hits,
            right_hits,
        })
    }
}

/// Everything computed on the way to the quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PullbackAnalysis {
    pub quantities: Quantities,
    pub seeds: SeedArcs,
    pub left: ChainTrace,
    pub right: ChainTrace,
    pub left_branch: BranchItinerary,
    pub right_branch: BranchItinerary,
}

impl PullbackAnalysis {
    pub fn chain(&self, side: Side) -> &ChainTrace {
        match side {
            Side::L => &self.left,
            Side::R => &self.right,
        }
    }
}

fn d_branch_points(mf: &Manifolds, side: Side, count: usize) -> Result<Vec<SectionPoint>> {
    use crate::manifolds::{Stability, Which};
    for sign in [1.0, -1.0] {
        let walk = mf.m_branch_walk(Which::D, Stability::Stable, sign, count)?;
        if walk.crossings.first().map(|c| c.point.side) == Some(side) {
            return Ok(walk.crossings.iter().map(|c| c.point).collect());
        }
    }
    Err(Error::Inconsistent(format!("no stable branch of d reaches {side:?} first")))
}

/// Runs manifolds and pullbacks for one flow.
pub fn analyze(flow: &Flow, manifold_config: ManifoldConfig, chain_config: ChainConfig) -> Result<PullbackAnalysis> {
    let mf = Manifolds::new(flow, manifold_config);
    let (l_c, r_c, left_branch, right_branch) = mf.compute_lc_rc()?;
    let seeds = SeedArcs::compute(&mf)?;
    let depth = chain_config.budget as usize + 3;
    let d_branches = [d_branch_points(&mf, Side::L, depth)?, d_branch_points(&mf, Side::R, depth)?];
    let chain = |side: Side| -> Result<ChainTrace> {
        let family = CollisionFamily::new(
            &mf,
            seeds.collision(side),
            &seeds.hits(side)[0],
            [seeds.el.clone(), seeds.er.clone()],
            d_branches.clone(),
        )?;
        trace_chain(&family, chain_config)
    };
    let (left, right) = rayon::join(|| chain(Side::L), || chain(Side::R));
    let (left, right) = (left?, right?);
    let mut quantities = Quantities::new(l_c as u32, r_c as u32, left.count, right.count)?;
    quantities.provenance = Some(Provenance {
        left_branch_word: left_branch.word.clone(),
        right_branch_word: right_branch.word.clone(),
        left_terminal: left_branch.terminal,
        right_terminal: right_branch.terminal,
        left_trace: left.summaries.clone(),
        right_trace: right.summaries.clone(),
    });
    Ok(PullbackAnalysis {
        quantities,
        seeds,
        left,
        right,
        left_branch,
        right_branch,
    })
}

/// `(ℓ_C, r_C, ℓ_∩, r_∩)` with provenance.
pub fn compute_intersection_counts(flow: &Flow, manifold_config: ManifoldConfig, chain_config: ChainConfig) -> Result<Quantities> {
    analyze(flow, manifold_config, chain_config).map(|a| a.quantities)
}

// ---------------------------------------------------------------------------
// Partition

/// Kind of a cell of the partition of one half-plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RegionKind {
    /// Outside `E★`, not under any chain arc.
    Outside,
    /// Inside `E★`, not under any chain arc and not beside the primary segment.
    Inside,
    /// Under generation `k` of the chain started on `of`. For `k = 0` this is
    /// the cell between the primary segment, `E★` and M.
    Chain { of: Side, k: u32 },
}

impl RegionKind {
    /// Region name shared by partition graphs and templates.
    pub fn id(self, side: Side) -> String {
        match self {
            RegionKind::Outside => format!("O_{}", side.letter()),
            RegionKind::Inside => format!("B_{}", side.letter()),
            RegionKind::Chain { of, k } => format!("P{}{}", of.letter(), k),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub id: String,
    pub side: Side,
    pub kind: RegionKind,
    pub inside: bool,
    pub boundary_arcs: Vec<String>,
    pub inside_points: Vec<EndpointLabel>,
    pub outside_points: Vec<EndpointLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryArc {
    pub name: String,
    pub arc: Arc,
}

/// Subdivision of both half-planes by `E★`, the primary segments and their
/// pullbacks before the first crossing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionPartition {
    pub quantities: Quantities,
    pub regions: Vec<Region>,
    pub arcs: Vec<BoundaryArc>,
    /// Cells per half-plane counted on the polyline arrangement.
    pub arrangement_faces: [usize; 2],
    #[serde(skip)]
    geometry: Option<Geometry>,
}

#[derive(Debug, Clone, PartialEq)]
struct Geometry {
    ejection: [Vec<(f64, f64)>; 2],
    under: [Vec<(f64, f64)>; 2],
    chains: Vec<(Side, RegionKind, Vec<(f64, f64)>)>,
}

/// Whether `x` is inside the closed polyline `poly` (even-odd rule).
pub fn point_in_polygon(x: (f64, f64), poly: &[(f64, f64)]) -> bool {
    let mut inside = false;
    let n = poly.len();
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a.1 > x.1) != (b.1 > x.1) {
            let t = a.0 + (x.1 - a.1) * (b.0 - a.0) / (b.1 - a.1);
            if x.0 < t {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn polyline(arc: &Arc) -> Vec<(f64, f64)> {
    arc.points.iter().map(|p| (p.u1, p.u2)).collect()
}

impl RegionPartition {
    pub fn regions_on(&self, side: Side) -> impl Iterator<Item = &Region> {
        self.regions.iter().filter(move |r| r.side == side)
    }

    pub fn region(&self, id: &str) -> Option<&Region> {
        self.regions.iter().find(|r| r.id == id)
    }

    /// Region containing `p`. Needs the geometry of a computed partition.
    pub fn locate(&self, p: &SectionPoint) -> Option<&Region> {
        let g = self.geometry.as_ref()?;
        let x = (p.u1, p.u2);
        let si = side_index(p.side);
        for (side, kind, poly) in &g.chains {
            if *side == p.side && point_in_polygon(x, poly) {
                return self.region(&kind.id(*side));
            }
        }
        let kind = if point_in_polygon(x, &g.ejection[si]) {
            if point_in_polygon(x, &g.under[si]) {
                RegionKind::Inside
            } else {
                RegionKind::Chain { of: p.side, k: 0 }
            }
        } else {
            RegionKind::Outside
        };
        self.region(&kind.id(p.side))
    }

    /// Distance from `p` to the nearest boundary arc on its half-plane.
    pub fn boundary_distance(&self, p: &SectionPoint) -> f64 {
        let mut best = p.u2.abs();
        for b in &self.arcs {
            if b.arc.side != p.side {
                continue;
            }
            for w in b.arc.points.windows(2) {
                best = best.min(point_segment_distance((p.u1, p.u2), (w[0].u1, w[0].u2), (w[1].u1, w[1].u2)));
            }
        }
        best
    }

    pub fn has_geometry(&self) -> bool {
        self.geometry.is_some()
    }
}

pub fn point_segment_distance(x: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((x.0 - a.0) * dx + (x.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (x.0 - a.0 - t * dx).hypot(x.1 - a.1 - t * dy)
}

/// Status of a labeled point of M: whether it lies between `cX★` and `dX★`.
/// `P^{-k}(X★d)` is inside exactly when its next image switches side, that
/// is for `k <= alternating length - 2`.
pub fn label_inside(label: EndpointLabel, q: &Quantities) -> Option<bool> {
    match label {
        EndpointLabel::StarD(of) => Some(q.alternating(of) >= 2),
        EndpointLabel::Pullback { of, k } => Some(k + 2 <= q.alternating(of)),
        _ => None,
    }
}

/// Number of faces of a polyline arrangement, by Euler's formula
/// `F = E - V + C + 1` (the unbounded face included). Vertices closer than
/// `snap` are merged.
pub fn arrangement_face_count(polylines: &[Vec<(f64, f64)>], snap: f64) -> usize {
    let segs: Vec<((f64, f64), (f64, f64))> = polylines
        .iter()
        .flat_map(|p| p.windows(2).map(|w| (w[0], w[1])))
        .filter(|(a, b)| a != b)
        .collect();
    // spatial hash of segment boxes
    let (mut lo, mut hi) = ((f64::INFINITY, f64::INFINITY), (f64::NEG_INFINITY, f64::NEG_INFINITY));
    for (a, b) in &segs {
        for p in [a, b] {
            lo = (lo.0.min(p.0), lo.1.min(p.1));
            hi = (hi.0.max(p.0), hi.1.max(p.1));
        }
    }
    let cells = (segs.len() as f64).sqrt().ceil().max(1.0) as i64;
    let cw = ((hi.0 - lo.0) / cells as f64).max(1e-12);
    let ch = ((hi.1 - lo.1) / cells as f64).max(1e-12);
    let cell = |p: (f64, f64)| (((p.0 - lo.0) / cw).floor() as i64, ((p.1 - lo.1) / ch).floor() as i64);
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, (a, b)) in segs.iter().enumerate() {
        let (c0, c1) = (cell((a.0.min(b.0) - snap, a.1.min(b.1) - snap)), cell((a.0.max(b.0) + snap, a.1.max(b.1) + snap)));
        for x in c0.0..=c1.0 {
            for y in c0.1..=c1.1 {
                grid.entry((x, y)).or_default().push(i);
            }
        }
    }
    let mut splits: Vec<Vec<f64>> = vec![vec![0.0, 1.0]; segs.len()];
    let mut pairs = BTreeSet::new();
    for list in grid.values() {
        for (n, &i) in list.iter().enumerate() {
            for &j in &list[n + 1..] {
                pairs.insert((i.min(j), i.max(j)));
            }
        }
    }
    let param_on = |x: (f64, f64), s: ((f64, f64), (f64, f64))| -> Option<f64> {
        let (a, b) = s;
        if point_segment_distance(x, a, b) > snap {
            return None;
        }
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        Some((((x.0 - a.0) * dx + (x.1 - a.1) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0))
    };
    for (i, j) in pairs {
        let (a, b) = (segs[i], segs[j]);
        if let Some((t, u)) = segment_intersection(a.0, a.1, b.0, b.1) {
            splits[i].push(t);
            splits[j].push(u);
        }
        for x in [b.0, b.1] {
            if let Some(t) = param_on(x, a) {
                splits[i].push(t);
            }
        }
        for x in [a.0, a.1] {
            if let Some(u) = param_on(x, b) {
                splits[j].push(u);
            }
        }
    }
    // snapped vertices
    let mut vid: HashMap<(i64, i64), usize> = HashMap::new();
    let mut verts: Vec<(f64, f64)> = Vec::new();
    let mut vertex = |p: (f64, f64)| -> usize {
        let key = ((p.0 / snap).round() as i64, (p.1 / snap).round() as i64);
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(&v) = vid.get(&(key.0 + dx, key.1 + dy)) {
                    let q = verts[v];
                    if (q.0 - p.0).hypot(q.1 - p.1) <= snap {
                        return v;
                    }
                }
            }
        }
        verts.push(p);
        vid.insert(key, verts.len() - 1);
        verts.len() - 1
    };
    let mut edges = BTreeSet::new();
    for (s, ts) in segs.iter().zip(splits.iter_mut()) {
        ts.sort_by(f64::total_cmp);
        let ids: Vec<usize> = ts
            .iter()
            .map(|&t| vertex((s.0 .0 + t * (s.1 .0 - s.0 .0), s.0 .1 + t * (s.1 .1 - s.0 .1))))
            .collect();
        for w in ids.windows(2) {
            if w[0] != w[1] {
                edges.insert((w[0].min(w[1]), w[0].max(w[1])));
            }
        }
    }
    let mut parent: Vec<usize> = (0..verts.len()).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        let mut y = x;
        while p[y] != r {
            let next = p[y];
            p[y] = r;
            y = next;
        }
        r
    }
    let mut used = BTreeSet::new();
    for &(a, b) in &edges {
        used.insert(a);
        used.insert(b);
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        parent[ra] = rb;
    }
    let components = used.iter().map(|&v| find(&mut parent, v)).collect::<BTreeSet<_>>().len();
    (edges.len() + components + 1).saturating_sub(used.len())
}

/// Cells of the half-plane cut out by `arcs`: the arcs together with the
/// boundary line and a bounding box, counted by Euler's formula.
pub fn half_plane_cells(arcs: &[Vec<(f64, f64)>], snap: f64) -> usize {
    let (mut vmin, mut vmax, mut rmax) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
    for p in arcs.iter().flatten() {
        vmin = vmin.min(p.0);
        vmax = vmax.max(p.0);
        rmax = rmax.max(p.1);
    }
    let (a, b, top) = (vmin - 1.0, vmax + 1.0, rmax + 1.0);
    let mut all = arcs.to_vec();
    all.push(vec![(a, 0.0), (b, 0.0), (b, top), (a, top), (a, 0.0)]);
    arrangement_face_count(&all, snap) - 1
}

/// Snap tolerance for arcs meeting at labeled points.
pub const SNAP: f64 = 1e-9;

/// Builds the partition from a completed analysis.
pub fn build_partition(analysis: &PullbackAnalysis) -> Result<RegionPartition> {
    let q = &analysis.quantities;
    let seeds = &analysis.seeds;
    let mut arcs = Vec::new();
    let mut chains = Vec::new();
    let mut ejection_polys: [Vec<(f64, f64)>; 2] = Default::default();
    let mut under_polys: [Vec<(f64, f64)>; 2] = Default::default();
    for side in [Side::L, Side::R] {
        // primary segment: the seed arc cut at its first polyline crossing
        // with E★; that point is also inserted into E★ so both share it
        let hit = seeds.hits(side)[0];
        let collision = seeds.collision(side);
        let mut primary = collision.clone();
        primary.points.truncate(hit.a_index + 1);
        primary.params.truncate(hit.a_index + 1);
        let x_geo = {
            let (p, q) = (collision.points[hit.a_index], collision.points[hit.a_index + 1]);
            SectionPoint::new(side, p.u1 + hit.a_t * (q.u1 - p.u1), p.u2 + hit.a_t * (q.u2 - p.u2))
        };
        let (pa, pb) = (collision.params[hit.a_index], collision.params[hit.a_index + 1]);
        primary.points.push(x_geo);
        primary.params.push(pa + hit.a_t * (pb - pa));
        primary.end_label = EndpointLabel::Free;
        let mut ejection = seeds.ejection(side).clone();
        ejection.points.insert(hit.b_index + 1, x_geo);
        let (ea, eb) = (ejection.params[hit.b_index], ejection.params[hit.b_index + 1]);
        ejection.params.insert(hit.b_index + 1, ea + hit.b_t * (eb - ea));
        ejection_polys[side_index(side)] = polyline(&ejection);
        under_polys[side_index(side)] = polyline(collision);
        arcs.push(BoundaryArc {
            name: format!("E{}★", side.letter()),
            arc: ejection,
        });
        arcs.push(BoundaryArc {
            name: format!("P{}S", side.letter()),
            arc: primary,
        });
    }
    for side in [Side::L, Side::R] {
        let chain = analysis.chain(side);
        for (k, arc) in chain.generations.iter().enumerate().skip(1) {
            let kind = RegionKind::Chain { of: side, k: k as u32 };
            chains.push((arc.side, kind, polyline(arc)));
            arcs.push(BoundaryArc {
                name: format!("P{}S^-{}", side.letter(), k),
                arc: arc.clone(),
            });
        }
    }
    let mut regions = Vec::new();
    for side in [Side::L, Side::R] {
        let e_labels = [EndpointLabel::CStar(side), EndpointLabel::DStar(side)];
        let mut push = |kind: RegionKind, inside: bool, boundary: Vec<String>, labels: Vec<EndpointLabel>| {
            let (mut ins, mut outs) = (Vec::new(), Vec::new());
            for l in labels {
                match label_inside(l, q) {
                    Some(true) => ins.push(l),
                    Some(false) => outs.push(l),
                    None => {
                        ins.push(l);
                        outs.push(l);
                    }
                }
            }
            regions.push(Region {
                id: kind.id(side),
                side,
                kind,
                inside,
                boundary_arcs: boundary,
                inside_points: ins,
                outside_points: outs,
            });
        };
        let e_name = format!("E{}★", side.letter());
        push(RegionKind::Outside, false, vec![e_name.clone(), "M".into()], e_labels.to_vec());
        push(
            RegionKind::Inside,
            true,
            vec![e_name.clone(), format!("P{}S", side.letter()), "M".into()],
            vec![EndpointLabel::CStar(side), EndpointLabel::StarD(side)],
        );
        push(
            RegionKind::Chain { of: side, k: 0 },
            true,
            vec![e_name.clone(), format!("P{}S", side.letter()), "M".into()],
            vec![EndpointLabel::StarD(side), EndpointLabel::DStar(side)],
        );
        for of in [Side::L, Side::R] {
            let chain = analysis.chain(of);
            for (k, arc) in chain.generations.iter().enumerate().skip(1) {
                if arc.side != side {
                    continue;
                }
                push(
                    RegionKind::Chain { of, k: k as u32 },
                    chain.inside[k],
                    vec![format!("P{}S^-{}", of.letter(), k), "M".into()],
                    vec![arc.start_label, arc.end_label],
                );
            }
        }
    }
    let mut faces = [0usize; 2];
    for side in [Side::L, Side::R] {
        let lines: Vec<Vec<(f64, f64)>> = arcs.iter().filter(|b| b.arc.side == side).map(|b| polyline(&b.arc)).collect();
        faces[side_index(side)] = half_plane_cells(&lines, SNAP);
        let expected = regions.iter().filter(|r| r.side == side).count();
        if faces[side_index(side)] != expected {
            let names: Vec<&str> = arcs.iter().filter(|b| b.arc.side == side).map(|b| b.name.as_str()).collect();
            let (first, second) = overlapping_pair(&arcs, side).unwrap_or((names[0].to_string(), names[names.len() - 1].to_string()));
            return Err(Error::NonManifold { first, second });
        }
    }
    Ok(RegionPartition {
        quantities: q.clone(),
        regions,
        arcs,
        arrangement_faces: faces,
        geometry: Some(Geometry {
            ejection: ejection_polys,
            under: under_polys,
            chains,
        }),
    })
}

/// First pair of boundary arcs on `side` whose polylines cross away from
/// shared endpoints.
fn overlapping_pair(arcs: &[BoundaryArc], side: Side) -> Option<(String, String)> {
    let on: Vec<&BoundaryArc> = arcs.iter().filter(|b| b.arc.side == side).collect();
    for i in 0..on.len() {
        for j in i + 1..on.len() {
            if let Ok(hits) = arcs_intersect(&on[i].arc, &on[j].arc) {
                let interior = hits.iter().any(|h| {
                    let p = (h.u1, h.u2);
                    let ends = [on[i].arc.start(), on[i].arc.end(), on[j].arc.start(), on[j].arc.end()];
                    ends.iter().all(|e| (e.u1 - p.0).hypot(e.u2 - p.1) > 1e-6)
                });
                if interior {
                    return Some((on[i].name.clone(), on[j].name.clone()));
                }
            }
        }
    }
    None
}

/// Schematic polylines for the partition arcs of a combinatorial
/// configuration: each arc is drawn as a half-circle over the M interval
/// between its endpoints. Used to count cells without computing dynamics.
pub fn schematic_arcs(q: &Quantities) -> [Vec<Vec<(f64, f64)>>; 2] {
    let model = crate::symbolic::ChainModel::new(q, false);
    let mut out: [Vec<Vec<(f64, f64)>>; 2] = Default::default();
    let bump = |a: f64, b: f64, h: f64| -> Vec<(f64, f64)> {
        let (c, r) = (0.5 * (a + b), 0.5 * (b - a).abs());
        (0..=64)
            .map(|i| {
                let t = std::f64::consts::PI * i as f64 / 64.0;
                (c - r * t.cos() * (b - a).signum(), h * r * t.sin())
            })
            .collect()
    };
    let pos = |side: Side, of: Side, k: u32| model.m_position(side, of, k);
    for side in [Side::L, Side::R] {
        let si = side_index(side);
        let (c_star, d_star) = model.ejection_base(side);
        out[si].push(bump(c_star, d_star, 1.0));
        // primary segment: from X★d up to a point on E★
        let x = pos(side, side, 0);
        let top = 0.5 * (c_star + d_star);
        let r = 0.5 * (d_star - c_star);
        let hit = (x, (r * r - (x - top).powi(2)).max(0.0).sqrt());
        out[si].push(vec![(x, 0.0), (x, 0.5 * hit.1), hit]);
        for of in [Side::L, Side::R] {
            for k in 1..model.chain_len(of) {
                if model.generation_side(of, k) != side {
                    continue;
                }
                let a = pos(side, of, k);
                let b = pos(side, of.other(), k - 1);
                out[si].push(bump(a, b, if model.generation_inside(of, k) { 0.5 } else { 0.9 }));
            }
        }
    }
    out
}
