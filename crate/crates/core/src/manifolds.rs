//! Invariant manifolds of the collision equilibria.
//!
//! On M the equilibria `c` (collision, `v < 0`) and `d` (ejection, `v > 0`)
//! are saddles, so each has one-dimensional stable and unstable branches on
//! M. Off M, `W^s(c)` and `W^u(d)` are two-dimensional: they are spanned by
//! the radial eigenvector (tangent to the homothetic orbit) and the M-stable
//! (resp. M-unstable) eigenvector. Their first traces on the section are the
//! seed arcs `L★C`, `R★C` and `EL★`, `ER★`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;
use std::fmt;

use crate::dynamics::{Equilibrium, McGeheeState};
use crate::error::{Error, Result};
use crate::flow::{word_of, CrossingRecord, Flow, SectionPoint, Side, Termination};

/// Symbolic name of a distinguished point of `M ∩ Γ` or of an arc end.
/// Serialized in its printed form, e.g. `"L★d"` or `"P^-2(R★d)"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum EndpointLabel {
    /// First backward crossing of the stable branch of `c` on M.
    StarC(Side),
    /// First backward crossing of the stable branch of `d` on M.
    StarD(Side),
    /// First forward crossing of the unstable branch of `c` on M.
    CStar(Side),
    /// First forward crossing of the unstable branch of `d` on M.
    DStar(Side),
    /// `P^{-k}` applied to `L★d` or `R★d`.
    Pullback { of: Side, k: u32 },
    Free,
}

impl EndpointLabel {
    pub fn on_collision_manifold(&self) -> bool {
        !matches!(self, EndpointLabel::Free)
    }
}

impl From<EndpointLabel> for String {
    fn from(label: EndpointLabel) -> String {
        label.to_string()
    }
}

impl TryFrom<String> for EndpointLabel {
    type Error = String;

    fn try_from(text: String) -> std::result::Result<Self, String> {
        let bad = || format!("unrecognized endpoint label {text:?}");
        if text == "free" {
            return Ok(EndpointLabel::Free);
        }
        if let Some(rest) = text.strip_prefix("P^-") {
            let (k, tail) = rest.split_once('(').ok_or_else(bad)?;
            let k: u32 = k.parse().map_err(|_| bad())?;
            let side = tail.chars().next().and_then(Side::from_letter).ok_or_else(bad)?;
            if &tail[1..] != "★d)" {
                return Err(bad());
            }
            return Ok(EndpointLabel::Pullback { of: side, k });
        }
        let chars: Vec<char> = text.chars().collect();
        if chars.len() != 3 {
            return Err(bad());
        }
        match (chars[0], chars[1], chars[2]) {
            (x, '★', 'c') => Side::from_letter(x).map(EndpointLabel::StarC),
            (x, '★', 'd') => Side::from_letter(x).map(EndpointLabel::StarD),
            ('c', x, '★') => Side::from_letter(x).map(EndpointLabel::CStar),
            ('d', x, '★') => Side::from_letter(x).map(EndpointLabel::DStar),
            _ => None,
        }
        .ok_or_else(bad)
    }
}

impl fmt::Display for EndpointLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EndpointLabel::StarC(s) => write!(f, "{}★c", s.letter()),
            EndpointLabel::StarD(s) => write!(f, "{}★d", s.letter()),
            EndpointLabel::CStar(s) => write!(f, "c{}★", s.letter()),
            EndpointLabel::DStar(s) => write!(f, "d{}★", s.letter()),
            EndpointLabel::Pullback { of, k } => write!(f, "P^-{k}({}★d)", of.letter()),
            EndpointLabel::Free => write!(f, "free"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Which {
    C,
    D,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stability {
    Stable,
    Unstable,
}

/// How a backward branch of `W^s(d)` on M ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Terminal {
    EndsAtD,
    EndsAtC { separation: f64 },
    /// Repeated crossings of one half-plane with `v -> -infinity`.
    DownLeg(Side),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchItinerary {
    /// Letters in forward-time order, ending just before the equilibrium.
    pub word: String,
    pub terminal: Terminal,
    pub alternating_length: usize,
    /// Crossings in the order they were met (backward for stable branches).
    pub crossings: Vec<CrossingRecord>,
}

impl BranchItinerary {
    /// Side of the crossing adjacent to the equilibrium.
    pub fn first_side(&self) -> Option<Side> {
        self.crossings.first().map(|c| c.point.side)
    }
}

/// Length of the alternating run at the start of `sides` (the run ends before
/// the first repeated letter).
pub fn alternating_prefix(sides: &[Side]) -> usize {
    if sides.is_empty() {
        return 0;
    }
    sides.windows(2).position(|w| w[0] == w[1]).map_or(sides.len(), |i| i + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManifoldConfig {
    /// Seeding distance along eigenvectors for the branches on M.
    pub epsilon: f64,
    /// Seeding distance on the local two-dimensional manifolds. Errors
    /// transverse to the manifold contract along the integration, so this can
    /// be much larger than `epsilon`; it must keep the offset along M well
    /// above the rounding floor of the equilibrium coordinates.
    pub arc_epsilon: f64,
    /// Separation below which a branch is declared to connect `c` and `d`.
    pub heteroclinic_tolerance: f64,
    /// Crossings allowed before a branch is declared non-terminating.
    pub max_crossings: usize,
    /// Extra same-side crossings required to confirm a leg descent.
    pub leg_confirmation: usize,
    pub max_gap: f64,
    pub max_turn_degrees: f64,
    /// Smallest seed angle (measured from the homothetic direction).
    pub min_angle: f64,
    pub initial_samples: usize,
    pub max_samples: usize,
}

impl Default for ManifoldConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-6,
            arc_epsilon: 1e-3,
            heteroclinic_tolerance: 1e-6,
            max_crossings: 200,
            leg_confirmation: 4,
            max_gap: 1e-3,
            max_turn_degrees: 15.0,
            min_angle: 1e-11,
            initial_samples: 64,
            max_samples: 20_000,
        }
    }
}

/// Manifold computations for one flow.
#[derive(Debug, Clone)]
pub struct Manifolds<'a> {
    pub flow: &'a Flow,
    pub config: ManifoldConfig,
}

fn equilibrium<'f>(flow: &'f Flow, which: Which) -> &'f Equilibrium {
    match which {
        Which::C => &flow.equilibria.c,
        Which::D => &flow.equilibria.d,
    }
}

impl<'a> Manifolds<'a> {
    pub fn new(flow: &'a Flow, config: ManifoldConfig) -> Self {
        Self { flow, config }
    }

    /// Seed on the M-branch of an equilibrium, projected to the energy surface.
    pub fn m_seed(&self, which: Which, stability: Stability, sign: f64, epsilon: f64) -> Result<McGeheeState> {
        let eq = equilibrium(self.flow, which);
        let e = match stability {
            Stability::Stable => eq.stable_on_m.vector,
            Stability::Unstable => eq.unstable_on_m.vector,
        };
        let x = eq.state;
        let s = x.s + sign * epsilon * e.s;
        let w = x.w + sign * epsilon * e.w;
        let v = self
            .flow
            .system
            .radial_velocity_for(0.0, s, w, x.v.signum())
            .ok_or_else(|| Error::Domain("M seed off the energy surface".into()))?;
        Ok(McGeheeState::new(0.0, v, s, w))
    }

    /// Walks an M-branch. Stable branches are followed backward and unstable
    /// ones forward.
    pub fn m_branch_walk(&self, which: Which, stability: Stability, sign: f64, crossings: usize) -> Result<crate::flow::OrbitWalk> {
        let seed = self.m_seed(which, stability, sign, self.config.epsilon)?;
        let direction = match stability {
            Stability::Stable => -1.0,
            Stability::Unstable => 1.0,
        };
        self.flow.walk(&seed, direction, crossings)
    }

    /// First section crossing of the M-branch that meets `side` first.
    pub fn labeled_point(&self, which: Which, stability: Stability, side: Side) -> Result<CrossingRecord> {
        for sign in [1.0, -1.0] {
            let walk = self.m_branch_walk(which, stability, sign, 1)?;
            if let Some(rec) = walk.crossings.first() {
                if rec.point.side == side {
                    return Ok(*rec);
                }
            }
        }
        Err(Error::Inconsistent(format!(
            "no {which:?} {stability:?} branch on M reaches {side:?} first"
        )))
    }

    /// Sign of the stable `d` branch whose first backward crossing is `side`.
    fn d_branch_sign(&self, side: Side) -> Result<f64> {
        for sign in [1.0, -1.0] {
            let walk = self.m_branch_walk(Which::D, Stability::Stable, sign, 1)?;
            if walk.crossings.first().map(|c| c.point.side) == Some(side) {
                return Ok(sign);
            }
        }
        Err(Error::Inconsistent(format!("no stable branch of d reaches {side:?} first")))
    }

    /// Backward itinerary on M of the stable branch of `d` that first meets `side`.
    pub fn branch_itinerary(&self, side: Side) -> Result<BranchItinerary> {
        let sign = self.d_branch_sign(side)?;
        self.branch_itinerary_signed(sign)
    }

    pub fn branch_itinerary_signed(&self, sign: f64) -> Result<BranchItinerary> {
        let cfg = &self.config;
        let walk = self.m_branch_walk(Which::D, Stability::Stable, sign, cfg.max_crossings)?;
        let sides: Vec<Side> = walk.crossings.iter().map(|c| c.point.side).collect();
        let n = alternating_prefix(&sides);
        let terminal = match walk.termination {
            Termination::Ejection { at_d: false, .. } => {
                let c = self.flow.equilibria.c.state;
                let f = walk.final_state;
                let separation = (f.v - c.v).abs() + (f.w - c.w).abs();
                Terminal::EndsAtC { separation }
            }
            _ if n < sides.len() => {
                let leg = sides[n];
                let tail = &sides[n..];
                let confirmed = tail.len() > cfg.leg_confirmation.min(sides.len() - n - 1)
                    && tail.iter().all(|s| *s == leg);
                if !confirmed && tail.iter().any(|s| *s != leg) {
                    return Err(Error::Inconsistent(format!(
                        "branch resumed alternating after a repeat: {}",
                        word_of(&walk.crossings)
                    )));
                }
                Terminal::DownLeg(leg)
            }
            Termination::Crossings => return Err(Error::NonTermination { crossings: sides.len() }),
            other => return Err(other.into_error()),
        };
        let mut crossings = walk.crossings;
        let keep = match terminal {
            Terminal::DownLeg(_) => (n + 1 + cfg.leg_confirmation).min(crossings.len()),
            _ => crossings.len(),
        };
        crossings.truncate(keep);
        let word: String = crossings.iter().rev().map(|c| c.point.side.letter()).collect();
        Ok(BranchItinerary {
            word,
            terminal,
            alternating_length: n,
            crossings,
        })
    }

    /// `(ℓ_C, r_C)` together with the two branch itineraries.
    pub fn compute_lc_rc(&self) -> Result<(usize, usize, BranchItinerary, BranchItinerary)> {
        let left = self.branch_itinerary(Side::L)?;
        let right = self.branch_itinerary(Side::R)?;
        for b in [&left, &right] {
            if let Terminal::EndsAtC { separation } = b.terminal {
                return Err(Error::Heteroclinic { separation });
            }
        }
        let (lc, rc) = (left.alternating_length, right.alternating_length);
        if lc < 2 || rc < 2 || lc.abs_diff(rc) > 1 {
            return Err(Error::Inconsistent(format!("branch lengths ({lc}, {rc}) violate the structural bounds")));
        }
        Ok((lc, rc, left, right))
    }

    /// `P^{-k}(X★d)` for `k >= 0`, following the stable branch of `d` on M.
    pub fn d_branch_pullback(&self, of: Side, k: usize) -> Result<CrossingRecord> {
        let sign = self.d_branch_sign(of)?;
        let walk = self.m_branch_walk(Which::D, Stability::Stable, sign, k + 1)?;
        walk.crossings
            .get(k)
            .copied()
            .ok_or_else(|| walk.termination.into_error())
    }
}

/// Ordered polyline on one half-plane with labeled ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arc {
    pub side: Side,
    pub points: Vec<SectionPoint>,
    /// Curve parameter of each point (seed angle for seed arcs).
    pub params: Vec<f64>,
    pub start_label: EndpointLabel,
    pub end_label: EndpointLabel,
    pub max_gap: f64,
    pub max_turn_degrees: f64,
}

impl Arc {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn start(&self) -> &SectionPoint {
        &self.points[0]
    }

    pub fn end(&self) -> &SectionPoint {
        &self.points[self.points.len() - 1]
    }

    pub fn xy(&self, i: usize) -> (f64, f64) {
        (self.points[i].u1, self.points[i].u2)
    }

    pub fn largest_gap(&self) -> f64 {
        self.points.windows(2).map(|w| w[0].distance(&w[1])).fold(0.0, f64::max)
    }

    pub fn reversed(&self) -> Arc {
        let mut a = self.clone();
        a.points.reverse();
        a.params.reverse();
        std::mem::swap(&mut a.start_label, &mut a.end_label);
        a
    }

    /// Number of pairwise crossings between non-adjacent segments.
    pub fn self_intersections(&self) -> usize {
        let n = self.points.len();
        let mut count = 0;
        for i in 0..n.saturating_sub(1) {
            for j in i + 2..n - 1 {
                if segment_intersection(self.xy(i), self.xy(i + 1), self.xy(j), self.xy(j + 1)).is_some() {
                    count += 1;
                }
            }
        }
        count
    }
}

/// Parameters `(t, u)` of the proper crossing of segments `a0 a1` and `b0 b1`.
pub fn segment_intersection(a0: (f64, f64), a1: (f64, f64), b0: (f64, f64), b1: (f64, f64)) -> Option<(f64, f64)> {
    let (dx, dy) = (a1.0 - a0.0, a1.1 - a0.1);
    let (ex, ey) = (b1.0 - b0.0, b1.1 - b0.1);
    let den = dx * ey - dy * ex;
    if den == 0.0 {
        return None;
    }
    let (fx, fy) = (b0.0 - a0.0, b0.1 - a0.1);
    let t = (fx * ey - fy * ex) / den;
    let u = (fx * dy - fy * dx) / den;
    ((0.0..1.0).contains(&t) && (0.0..1.0).contains(&u)).then_some((t, u))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SeedKind {
    /// Trace of the collision manifold `W^s(c)` on one side.
    Collision(Side),
    /// Trace of the ejection manifold `W^u(d)` on one side.
    Ejection(Side),
}

impl SeedKind {
    pub fn side(self) -> Side {
        match self {
            SeedKind::Collision(s) | SeedKind::Ejection(s) => s,
        }
    }

    pub fn name(self) -> String {
        match self {
            SeedKind::Collision(s) => format!("{}★C", s.letter()),
            SeedKind::Ejection(s) => format!("E{}★", s.letter()),
        }
    }
}

/// One orbit of a two-dimensional manifold, seeded at angle `alpha` from the
/// homothetic direction.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldOrbit {
    pub alpha: f64,
    pub crossings: Vec<CrossingRecord>,
    pub termination: Termination,
}

impl<'a> Manifolds<'a> {
    fn two_dim_basis(&self, kind: SeedKind) -> (&Equilibrium, McGeheeState, f64) {
        let eqs = &self.flow.equilibria;
        match kind {
            SeedKind::Collision(_) => (&eqs.c, eqs.c.stable_on_m.vector, -1.0),
            SeedKind::Ejection(_) => (&eqs.d, eqs.d.unstable_on_m.vector, 1.0),
        }
    }

    /// Sign of the M-branch direction that reaches `kind.side()` first.
    fn seed_sign(&self, kind: SeedKind) -> Result<f64> {
        let (which, stability) = match kind {
            SeedKind::Collision(_) => (Which::C, Stability::Stable),
            SeedKind::Ejection(_) => (Which::D, Stability::Unstable),
        };
        for sign in [1.0, -1.0] {
            let walk = self.m_branch_walk(which, stability, sign, 1)?;
            if walk.crossings.first().map(|c| c.point.side) == Some(kind.side()) {
                return Ok(sign);
            }
        }
        Err(Error::Inconsistent(format!("no M-branch for {}", kind.name())))
    }

    /// Seed state on the local two-dimensional manifold at angle `alpha` in
    /// `(0, pi/2]`, scaled by `epsilon`.
    pub fn seed_state(&self, kind: SeedKind, sign: f64, alpha: f64, epsilon: f64) -> Result<McGeheeState> {
        let (eq, m_vec, _) = self.two_dim_basis(kind);
        let x = eq.state;
        let e_r = eq.radial.vector;
        let (ca, sa) = (alpha.cos(), alpha.sin());
        let r = epsilon * ca * e_r.r;
        let s = x.s + epsilon * sign * sa * m_vec.s;
        let w = x.w + epsilon * sign * sa * m_vec.w;
        let v = self
            .flow
            .system
            .radial_velocity_for(r.max(0.0), s, w, x.v.signum())
            .ok_or_else(|| Error::Domain("seed off the energy surface".into()))?;
        Ok(McGeheeState::new(r.max(0.0), v, s, w))
    }

    /// Follows the manifold orbit at `alpha` through `crossings` crossings.
    pub fn manifold_orbit(&self, kind: SeedKind, sign: f64, alpha: f64, crossings: usize) -> Result<ManifoldOrbit> {
        let (_, _, direction) = self.two_dim_basis(kind);
        let seed = self.seed_state(kind, sign, alpha, self.config.arc_epsilon)?;
        let walk = self.flow.walk(&seed, direction, crossings)?;
        Ok(ManifoldOrbit {
            alpha,
            crossings: walk.crossings,
            termination: walk.termination,
        })
    }

    /// Labeled endpoints `(homothetic end, M-branch end)` of a seed arc.
    pub fn seed_endpoints(&self, kind: SeedKind) -> Result<(EndpointLabel, CrossingRecord, EndpointLabel, CrossingRecord)> {
        let side = kind.side();
        Ok(match kind {
            SeedKind::Collision(_) => (
                EndpointLabel::StarD(side),
                self.labeled_point(Which::D, Stability::Stable, side)?,
                EndpointLabel::StarC(side),
                self.labeled_point(Which::C, Stability::Stable, side)?,
            ),
            SeedKind::Ejection(_) => (
                EndpointLabel::CStar(side),
                self.labeled_point(Which::C, Stability::Unstable, side)?,
                EndpointLabel::DStar(side),
                self.labeled_point(Which::D, Stability::Unstable, side)?,
            ),
        })
    }

    fn first_crossing_at(&self, kind: SeedKind, sign: f64, alpha: f64) -> Result<SectionPoint> {
        let orbit = self.manifold_orbit(kind, sign, alpha, 1)?;
        match orbit.crossings.first() {
            Some(c) if c.point.side == kind.side() => Ok(c.point),
            Some(c) => Err(Error::Inconsistent(format!(
                "{} orbit at angle {alpha:.3e} first crosses {:?}",
                kind.name(),
                c.point.side
            ))),
            None => Err(orbit.termination.into_error()),
        }
    }

    /// Smallest seed angle whose orbit is resolved by the integrator.
    ///
    /// Below some angle the offset along M falls under the integration error
    /// accumulated near the homothetic orbit and the first crossing lands on
    /// an arbitrary side. Starting from `min_angle`, the angle is raised by
    /// decades until the crossing is on the right side, then by one more.
    pub fn angle_floor(&self, kind: SeedKind) -> Result<f64> {
        let sign = self.seed_sign(kind)?;
        let mut alpha = self.config.min_angle;
        let mut raised = false;
        while self.first_crossing_at(kind, sign, alpha).is_err() {
            alpha *= 10.0;
            raised = true;
            if alpha > 1e-3 {
                return Err(Error::Inconsistent(format!("{} has no resolved seed angle", kind.name())));
            }
        }
        Ok(if raised { alpha * 10.0 } else { alpha })
    }

    /// Seed arc ordered from the homothetic end to the M-branch end. The seed
    /// angle runs from [`Manifolds::angle_floor`] to `pi/2`, log-spaced near
    /// zero where the orbits linger near the opposite equilibrium.
    pub fn seed_arc(&self, kind: SeedKind) -> Result<Arc> {
        let cfg = &self.config;
        let sign = self.seed_sign(kind)?;
        let (start_label, start_rec, end_label, end_rec) = self.seed_endpoints(kind)?;
        let n = cfg.initial_samples.max(8);
        // x in [0, 1] maps to alpha = floor^(1 - x) * (pi/2)^x
        let lo = self.angle_floor(kind)?.ln();
        let hi = FRAC_PI_2.ln();
        let alpha_of = |x: f64| (lo + (hi - lo) * x).exp();
        let mut xs: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
        let eval = |xs: &[f64]| -> Vec<Result<SectionPoint>> {
            xs.par_iter().map(|&x| self.first_crossing_at(kind, sign, alpha_of(x))).collect()
        };
        let mut pts: Vec<SectionPoint> = eval(&xs).into_iter().collect::<Result<_>>()?;
        let max_turn = cfg.max_turn_degrees.to_radians();
        loop {
            let mut inserts = Vec::new();
            for i in 0..pts.len() - 1 {
                let gap = pts[i].distance(&pts[i + 1]);
                let turn = |a: &SectionPoint, b: &SectionPoint, c: &SectionPoint| {
                    let (x1, y1) = (b.u1 - a.u1, b.u2 - a.u2);
                    let (x2, y2) = (c.u1 - b.u1, c.u2 - b.u2);
                    (x1 * y2 - y1 * x2).atan2(x1 * x2 + y1 * y2).abs()
                };
                let bent = (i > 0 && turn(&pts[i - 1], &pts[i], &pts[i + 1]) > max_turn)
                    || (i + 2 < pts.len() && turn(&pts[i], &pts[i + 1], &pts[i + 2]) > max_turn);
                if (gap > cfg.max_gap || bent) && xs[i + 1] - xs[i] > 1e-12 {
                    inserts.push(i);
                }
            }
            if inserts.is_empty() {
                break;
            }
            if pts.len() + inserts.len() > cfg.max_samples {
                let i = inserts[0];
                return Err(Error::Refinement {
                    side: kind.side(),
                    index: i,
                    gap: pts[i].distance(&pts[i + 1]),
                });
            }
            let mids: Vec<f64> = inserts.iter().map(|&i| 0.5 * (xs[i] + xs[i + 1])).collect();
            let new_pts = eval(&mids);
            let mut nxs = Vec::with_capacity(xs.len() + mids.len());
            let mut npts = Vec::with_capacity(xs.len() + mids.len());
            let mut k = 0;
            for i in 0..xs.len() {
                nxs.push(xs[i]);
                npts.push(pts[i]);
                if k < inserts.len() && inserts[k] == i {
                    nxs.push(mids[k]);
                    npts.push(new_pts[k].clone()?);
                    k += 1;
                }
            }
            xs = nxs;
            pts = npts;
        }
        let mut points = Vec::with_capacity(pts.len() + 2);
        let mut params = Vec::with_capacity(pts.len() + 2);
        points.push(start_rec.point);
        params.push(0.0);
        points.extend(pts);
        params.extend(xs.iter().map(|&x| alpha_of(x)));
        points.push(end_rec.point);
        params.push(FRAC_PI_2);
        let mut arc = Arc {
            side: kind.side(),
            points,
            params,
            start_label,
            end_label,
            max_gap: cfg.max_gap,
            max_turn_degrees: cfg.max_turn_degrees,
        };
        // the sample at pi/2 is the M-branch itself; keep the exact endpoint
        let n = arc.points.len();
        arc.points.remove(n - 2);
        arc.params.remove(n - 2);
        Ok(arc)
    }
}

/// Crossing angles below this many degrees are flagged as tangential.
pub const TANGENCY_DEGREES: f64 = 1.0;

/// A transverse crossing of two polylines on one half-plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArcIntersection {
    /// Segment `a_index .. a_index + 1` of the first arc.
    pub a_index: usize,
    pub b_index: usize,
    /// Fractional positions along the two segments.
    pub a_t: f64,
    pub b_t: f64,
    pub u1: f64,
    pub u2: f64,
    pub angle_degrees: f64,
    pub tangential: bool,
    /// Set once the point has been polished on the underlying manifolds.
    pub refined: bool,
}

/// All proper crossings between the polylines `a` and `b`, ordered along `a`.
pub fn arcs_intersect(a: &Arc, b: &Arc) -> Result<Vec<ArcIntersection>> {
    if a.side != b.side {
        return Err(Error::Precondition(format!(
            "arcs lie on different half-planes ({:?}, {:?})",
            a.side, b.side
        )));
    }
    if a.points == b.points {
        return Err(Error::Precondition("an arc cannot be intersected with itself".into()));
    }
    let bbox = |arc: &Arc, i: usize| {
        let (p, q) = (arc.xy(i), arc.xy(i + 1));
        (p.0.min(q.0), p.0.max(q.0), p.1.min(q.1), p.1.max(q.1))
    };
    let mut out = Vec::new();
    for i in 0..a.len().saturating_sub(1) {
        let ba = bbox(a, i);
        for j in 0..b.len().saturating_sub(1) {
            let bb = bbox(b, j);
            if ba.1 < bb.0 || bb.1 < ba.0 || ba.3 < bb.2 || bb.3 < ba.2 {
                continue;
            }
            let (p0, p1, q0, q1) = (a.xy(i), a.xy(i + 1), b.xy(j), b.xy(j + 1));
            if let Some((t, u)) = segment_intersection(p0, p1, q0, q1) {
                let (dx, dy) = (p1.0 - p0.0, p1.1 - p0.1);
                let (ex, ey) = (q1.0 - q0.0, q1.1 - q0.1);
                let angle = (dx * ey - dy * ex).abs().atan2(dx * ex + dy * ey).to_degrees();
                let angle = angle.min(180.0 - angle);
                out.push(ArcIntersection {
                    a_index: i,
                    b_index: j,
                    a_t: t,
                    b_t: u,
                    u1: p0.0 + t * dx,
                    u2: p0.1 + t * dy,
                    angle_degrees: angle,
                    tangential: angle < TANGENCY_DEGREES,
                    refined: false,
                });
            }
        }
    }
    Ok(out)
}

impl<'a> Manifolds<'a> {
    /// Point on the collision arc of `side` at seed angle `alpha`, with the
    /// side of its next backward crossing. That side differs from `side`
    /// exactly when the point lies inside the ejection arc `E★` of `side`.
    pub fn collision_probe(&self, side: Side, sign: f64, alpha: f64) -> Result<(SectionPoint, Option<Side>)> {
        let orbit = self.manifold_orbit(SeedKind::Collision(side), sign, alpha, 2)?;
        let first = orbit
            .crossings
            .first()
            .ok_or_else(|| orbit.termination.clone().into_error())?;
        Ok((first.point, orbit.crossings.get(1).map(|c| c.point.side)))
    }

    /// Sign of the collision family whose first crossing is on `side`.
    pub fn collision_sign(&self, side: Side) -> Result<f64> {
        self.seed_sign(SeedKind::Collision(side))
    }

    /// Bisects the seed angle of the collision family of `side` between
    /// `lo` and `hi`, where the point switches between inside and outside of
    /// `E★`, until the bracketing points agree to `tol`.
    pub fn refine_inside_switch(&self, side: Side, lo: f64, hi: f64, tol: f64) -> Result<(f64, SectionPoint)> {
        let sign = self.collision_sign(side)?;
        let (mut lo, mut hi) = (lo.max(self.config.min_angle), hi.min(FRAC_PI_2));
        let (mut p_lo, s_lo) = self.collision_probe(side, sign, lo)?;
        let (mut p_hi, s_hi) = self.collision_probe(side, sign, hi)?;
        if s_lo == s_hi {
            return Err(Error::Precondition(format!(
                "no inside/outside switch between angles {lo:.6e} and {hi:.6e}"
            )));
        }
        for _ in 0..200 {
            if p_lo.distance(&p_hi) < tol {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let (p, s) = self.collision_probe(side, sign, mid)?;
            if s == s_lo {
                lo = mid;
                p_lo = p;
            } else {
                hi = mid;
                p_hi = p;
            }
        }
        let alpha = 0.5 * (lo + hi);
        let mut point = p_lo;
        point.u1 = 0.5 * (p_lo.u1 + p_hi.u1);
        point.u2 = 0.5 * (p_lo.u2 + p_hi.u2);
        point.v_value = point.u1;
        Ok((alpha, point))
    }

    /// Crossings of a collision arc with the ejection arc of the same side.
    /// Each polyline crossing whose bracketing samples switch between inside
    /// and outside is polished by bisection on the seed angle to `1e-10`.
    pub fn intersect_seed_arcs(&self, collision: &Arc, ejection: &Arc) -> Result<Vec<ArcIntersection>> {
        let mut hits = arcs_intersect(collision, ejection)?;
        let side = collision.side;
        for hit in &mut hits {
            let (lo, hi) = (collision.params[hit.a_index], collision.params[hit.a_index + 1]);
            if let Ok((_, p)) = self.refine_inside_switch(side, lo, hi, 1e-10) {
                hit.u1 = p.u1;
                hit.u2 = p.u2;
                hit.refined = true;
            }
        }
        Ok(hits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Collinear, MassTriple};
    use crate::flow::FlowConfig;

    fn line(side: Side, pts: &[(f64, f64)]) -> Arc {
        Arc {
            side,
            points: pts.iter().map(|&(v, r)| SectionPoint::new(side, v, r)).collect(),
            params: (0..pts.len()).map(|i| i as f64).collect(),
            start_label: EndpointLabel::Free,
            end_label: EndpointLabel::Free,
            max_gap: 1.0,
            max_turn_degrees: 90.0,
        }
    }

    #[test]
    fn synthetic_crossing_is_located() {
        let a = line(Side::L, &[(-1.0, 0.0), (0.0, 1.0), (1.0, 2.0)]);
        let b = line(Side::L, &[(-1.0, 2.0), (1.0, 0.0)]);
        let hits = arcs_intersect(&a, &b).unwrap();
        assert_eq!(hits.len(), 1);
        assert!((hits[0].u1 - 0.0).abs() < 1e-12 && (hits[0].u2 - 1.0).abs() < 1e-12);
        assert_eq!((hits[0].a_index, hits[0].b_index), (1, 0));
        assert!(!hits[0].tangential);
    }

    #[test]
    fn self_intersection_request_is_rejected() {
        let a = line(Side::R, &[(0.0, 0.0), (1.0, 1.0)]);
        assert!(matches!(arcs_intersect(&a, &a), Err(Error::Precondition(_))));
        let b = line(Side::L, &[(0.0, 1.0), (1.0, 0.0)]);
        assert!(matches!(arcs_intersect(&a, &b), Err(Error::Precondition(_))));
    }

    #[test]
    fn labels_round_trip_through_text() {
        let labels = [
            EndpointLabel::StarC(Side::L),
            EndpointLabel::StarD(Side::R),
            EndpointLabel::CStar(Side::R),
            EndpointLabel::DStar(Side::L),
            EndpointLabel::Pullback { of: Side::R, k: 3 },
            EndpointLabel::Free,
        ];
        for l in labels {
            let back = EndpointLabel::try_from(String::from(l)).unwrap();
            assert_eq!(back, l);
        }
        assert!(EndpointLabel::try_from("Q★c".to_string()).is_err());
    }

    #[test]
    fn alternating_prefix_counts() {
        use Side::*;
        assert_eq!(alternating_prefix(&[L, R, L, R, R, R]), 4);
        assert_eq!(alternating_prefix(&[L, L]), 1);
        assert_eq!(alternating_prefix(&[R, L, R]), 3);
        assert_eq!(alternating_prefix(&[]), 0);
    }

    #[test]
    fn switch_refinement_lands_on_the_ejection_arc() {
        let sys = Collinear::new(MassTriple::equal(), -1.0).unwrap();
        let flow = Flow::new(sys, FlowConfig::default()).unwrap();
        let mf = Manifolds::new(&flow, ManifoldConfig::default());
        let lc = mf.seed_arc(SeedKind::Collision(Side::L)).unwrap();
        let el = mf.seed_arc(SeedKind::Ejection(Side::L)).unwrap();
        let hits = mf.intersect_seed_arcs(&lc, &el).unwrap();
        assert!(!hits.is_empty());
        assert!(hits.iter().all(|h| h.refined));
        // the refined point sits on the polyline of EL★ up to its resolution
        let h = hits[0];
        let d = el
            .points
            .iter()
            .map(|p| ((p.u1 - h.u1).powi(2) + (p.u2 - h.u2).powi(2)).sqrt())
            .fold(f64::INFINITY, f64::min);
        assert!(d < el.max_gap, "distance {d}");
    }
}
