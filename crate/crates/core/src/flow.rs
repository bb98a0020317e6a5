//! Event-detecting integration of the regularized field and the Poincaré
//! maps on the binary-collision section.
//!
//! The section is `sin s = 0`: the half-plane `L` is `s = 0 (mod 2 pi)` and
//! `R` is `s = pi (mod 2 pi)`. On either half-plane the energy relation fixes
//! `|w|`, and the remaining coordinates `(v, r)` with `r >= 0` are free. The
//! intrinsic coordinates of a section point are therefore `u1 = v` and
//! `u2 = r`; the boundary line `u2 = 0` is the trace of the collision
//! manifold M.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;

use crate::dynamics::{Collinear, Equilibria, McGeheeState};
use crate::error::{Error, Result};
use crate::integrator::{brent, DenseStep, Dop853, OdeSystem, StepControl};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    L,
    R,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::L => Side::R,
            Side::R => Side::L,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Side::L => 'L',
            Side::R => 'R',
        }
    }

    pub fn from_letter(c: char) -> Option<Side> {
        match c {
            'L' => Some(Side::L),
            'R' => Some(Side::R),
            _ => None,
        }
    }

    /// Side of the lattice point `s = k pi`.
    fn of_lattice(k: i64) -> Side {
        if k.rem_euclid(2) == 0 {
            Side::L
        } else {
            Side::R
        }
    }

    fn angle(self) -> f64 {
        match self {
            Side::L => 0.0,
            Side::R => PI,
        }
    }
}

/// A point of the section. `u1` is the radial velocity and `u2 = r >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionPoint {
    pub side: Side,
    pub u1: f64,
    pub u2: f64,
    /// The `v` coordinate of the crossing.
    pub v_value: f64,
}

impl SectionPoint {
    pub fn new(side: Side, v: f64, r: f64) -> Self {
        Self {
            side,
            u1: v,
            u2: r,
            v_value: v,
        }
    }

    pub fn on_collision_manifold(&self) -> bool {
        self.u2 == 0.0
    }

    /// Image under the reflection exchanging the binaries (valid when `m1 = m3`).
    pub fn reflected(&self) -> Self {
        Self::new(self.side.other(), self.u1, self.u2)
    }

    /// Image under time reversal.
    pub fn reversed(&self) -> Self {
        Self::new(self.side, -self.u1, self.u2)
    }

    pub fn distance(&self, other: &SectionPoint) -> f64 {
        if self.side != other.side {
            return f64::INFINITY;
        }
        (self.u1 - other.u1).hypot(self.u2 - other.u2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossingRecord {
    pub point: SectionPoint,
    /// Regularized time of the crossing, measured from the start of the orbit.
    pub crossing_time: f64,
    /// 1, 2, 3, ... forward; -1, -2, ... backward.
    pub crossing_index: i64,
    /// Full state at the crossing, projected onto the section.
    pub state: McGeheeState,
    /// Derivative of the section function along the flow.
    pub transversality: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub tolerance: f64,
    pub escape_radius: f64,
    /// Distance to an equilibrium (in `v, s, w`) at which a small-`r` orbit is
    /// declared to have reached it.
    pub equilibrium_radius: f64,
    pub absorb_r: f64,
    pub transversality_floor: f64,
    /// Longest regularized time allowed between consecutive crossings.
    pub max_return_time: f64,
    pub event_tolerance: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-12,
            escape_radius: 1e3,
            equilibrium_radius: 1e-8,
            absorb_r: 1e-8,
            transversality_floor: 1e-6,
            max_return_time: 2e3,
            event_tolerance: 1e-12,
        }
    }
}

/// Why a walk along an orbit stopped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Termination {
    /// The requested number of crossings was recorded.
    Crossings,
    Escape { r: f64, t: f64 },
    /// Converged to `c` (forward) or to `d` (forward, on M only).
    Absorbed { t: f64, at_c: bool },
    /// Backward orbit converged to `d`, or to `c` on M.
    Ejection { t: f64, at_d: bool },
    NoReturn { t: f64 },
    Failed(StepFailure),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StepFailure {
    Underflow { t: f64 },
    Budget { t: f64 },
}

impl Termination {
    pub fn into_error(self) -> Error {
        match self {
            Termination::Crossings => Error::Inconsistent("orbit stopped without error".into()),
            Termination::Escape { r, t } => Error::Escape { r, t },
            Termination::Absorbed { t, .. } => Error::Absorbed { t },
            Termination::Ejection { t, .. } => Error::Ejection { t },
            Termination::NoReturn { t } => Error::NoReturn { t },
            Termination::Failed(StepFailure::Underflow { t }) => Error::StepUnderflow { t, state: [f64::NAN; 4] },
            Termination::Failed(StepFailure::Budget { t }) => Error::StepBudget { steps: 0, t },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrbitWalk {
    pub crossings: Vec<CrossingRecord>,
    pub termination: Termination,
    /// State at the point the walk stopped.
    pub final_state: McGeheeState,
    pub final_time: f64,
}

struct FullField<'a>(&'a Collinear);

impl OdeSystem<4> for FullField<'_> {
    fn rhs(&self, y: &[f64; 4]) -> [f64; 4] {
        self.0.rhs(y)
    }
}

struct ManifoldField<'a>(&'a Collinear);

impl OdeSystem<3> for ManifoldField<'_> {
    fn rhs(&self, y: &[f64; 3]) -> [f64; 3] {
        self.0.rhs_on_collision_manifold(y)
    }
}

trait Chart<const N: usize>: OdeSystem<N> {
    fn lift(y: &[f64; N]) -> McGeheeState;
    fn lower(x: &McGeheeState) -> [f64; N];
    const S_INDEX: usize;
}

impl Chart<4> for FullField<'_> {
    fn lift(y: &[f64; 4]) -> McGeheeState {
        McGeheeState::from_array(*y)
    }
    fn lower(x: &McGeheeState) -> [f64; 4] {
        x.to_array()
    }
    const S_INDEX: usize = 2;
}

impl Chart<3> for ManifoldField<'_> {
    fn lift(y: &[f64; 3]) -> McGeheeState {
        McGeheeState::new(0.0, y[0], y[1], y[2])
    }
    fn lower(x: &McGeheeState) -> [f64; 3] {
        [x.v, x.s, x.w]
    }
    const S_INDEX: usize = 1;
}

/// Dense trajectory produced by [`Flow::integrate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<DenseStep<4>>,
}

impl Trajectory {
    pub fn t_start(&self) -> f64 {
        self.steps.first().map_or(0.0, |d| d.t0)
    }

    pub fn t_end(&self) -> f64 {
        self.steps.last().map_or(0.0, |d| d.t1())
    }

    /// Interpolated state at time `t` within the integrated span.
    pub fn at(&self, t: f64) -> Option<McGeheeState> {
        self.steps
            .iter()
            .find(|d| d.contains(t))
            .map(|d| McGeheeState::from_array(d.eval(t)))
    }

    pub fn final_state(&self) -> Option<McGeheeState> {
        self.steps.last().map(|d| McGeheeState::from_array(d.end()))
    }

    /// Writes `t, r, v, s, w, energy_residual` rows at every step boundary.
    pub fn write_csv<W: Write>(&self, system: &Collinear, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,r,v,s,w,energy_residual")?;
        let mut rows: Vec<(f64, [f64; 4])> = Vec::with_capacity(self.steps.len() + 1);
        if let Some(first) = self.steps.first() {
            rows.push((first.t0, first.start()));
        }
        rows.extend(self.steps.iter().map(|d| (d.t1(), d.end())));
        for (t, y) in rows {
            let x = McGeheeState::from_array(y);
            writeln!(
                out,
                "{t:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.6e}",
                x.r,
                x.v,
                x.s,
                x.w,
                system.energy_residual(&x)
            )?;
        }
        Ok(())
    }
}

/// Numerical flow of one mass triple.
#[derive(Debug, Clone)]
pub struct Flow {
    pub system: Collinear,
    pub equilibria: Equilibria,
    pub config: FlowConfig,
    h_max: f64,
}

impl Flow {
    pub fn new(system: Collinear, config: FlowConfig) -> Result<Self> {
        if !(config.tolerance > 0.0 && config.tolerance < 1e-2) {
            return Err(Error::InvalidConfig(format!("tolerance {} out of range", config.tolerance)));
        }
        if !(config.escape_radius > 1.0) {
            return Err(Error::InvalidConfig("escape radius must exceed 1".into()));
        }
        let equilibria = system.find_equilibria()?;
        // Bound |ds/dsigma| by 2 sqrt(2 max V) / Theta and cap steps so the
        // shape angle moves by at most 0.25 per step.
        let vmax = (0..=256)
            .map(|i| system.potential.regularized(PI * i as f64 / 256.0).0)
            .fold(0.0, f64::max);
        let rate = 2.0 * (2.0 * vmax * 1.05).sqrt() / system.wedge();
        Ok(Self {
            system,
            equilibria,
            config,
            h_max: 0.25 / rate,
        })
    }

    pub fn with_defaults(system: Collinear) -> Result<Self> {
        Self::new(system, FlowConfig::default())
    }

    fn control(&self) -> StepControl {
        StepControl {
            rtol: self.config.tolerance,
            atol: self.config.tolerance,
            h_max: self.h_max,
            ..StepControl::default()
        }
    }

    /// State on the section for a section point, entering the open sheet
    /// `0 < s < pi` in forward time.
    pub fn embed(&self, p: &SectionPoint) -> Result<McGeheeState> {
        if !(p.u1.is_finite() && p.u2.is_finite()) || p.u2 < 0.0 {
            return Err(Error::Domain(format!("section point {p:?} outside the half-plane")));
        }
        let s = p.side.angle();
        let sign = match p.side {
            Side::L => 1.0,
            Side::R => -1.0,
        };
        let w = self
            .system
            .shape_velocity_for(p.u2, p.u1, s, sign)
            .ok_or_else(|| Error::Domain("energy relation has no solution".into()))?;
        Ok(McGeheeState::new(p.u2, p.u1, s, w))
    }

    /// Dense trajectory over `t_span` (either order).
    pub fn integrate(&self, state: &McGeheeState, t_span: (f64, f64), tolerance: f64) -> Result<Trajectory> {
        if !(tolerance > 0.0) {
            return Err(Error::InvalidConfig(format!("tolerance {tolerance} must be positive")));
        }
        self.system.vector_field(state)?;
        let field = FullField(&self.system);
        let (t0, t1) = t_span;
        let direction = if t1 >= t0 { 1.0 } else { -1.0 };
        let control = StepControl {
            rtol: tolerance,
            atol: tolerance,
            h_max: self.h_max,
            ..StepControl::default()
        };
        let mut stepper = Dop853::new(&field, t0, state.to_array(), direction, control);
        let mut steps = Vec::new();
        while (t1 - stepper.t) * direction > 0.0 {
            stepper.limit_step(t1);
            let dense = stepper.step().map_err(|e| match e {
                Error::StepUnderflow { t, .. } => Error::StepUnderflow { t, state: stepper.y },
                other => other,
            })?;
            steps.push(dense);
            let y = stepper.y;
            if y[0] < 0.0 || !y.iter().all(|x| x.is_finite()) {
                return Err(Error::Domain(format!("trajectory left the chart at t = {}", stepper.t)));
            }
        }
        Ok(Trajectory { steps })
    }

    /// Follows an orbit, recording up to `max_crossings` crossings of the
    /// section. When `state` lies on the section, that initial crossing is not
    /// recorded. Orbits with `r = 0` are integrated on the collision manifold.
    pub fn walk(&self, state: &McGeheeState, direction: f64, max_crossings: usize) -> Result<OrbitWalk> {
        self.walk_with(state, direction, max_crossings, |_| {})
    }

    /// [`Flow::walk`] with a callback receiving every accepted step, lifted to
    /// the full coordinates at the step end.
    pub fn walk_with(
        &self,
        state: &McGeheeState,
        direction: f64,
        max_crossings: usize,
        on_step: impl FnMut(&McGeheeState),
    ) -> Result<OrbitWalk> {
        if !state.is_finite() || state.r < 0.0 {
            return Err(Error::Domain(format!("invalid start {state:?}")));
        }
        if state.r == 0.0 {
            let field = ManifoldField(&self.system);
            Ok(self.walk_chart::<3, _>(&field, state, direction, max_crossings, on_step))
        } else {
            let field = FullField(&self.system);
            Ok(self.walk_chart::<4, _>(&field, state, direction, max_crossings, on_step))
        }
    }

    fn near_equilibrium(&self, x: &McGeheeState) -> Option<bool> {
        if x.r > self.config.absorb_r {
            return None;
        }
        let s = x.s.rem_euclid(2.0 * PI);
        for (is_c, eq) in [(true, &self.equilibria.c), (false, &self.equilibria.d)] {
            let e = eq.state;
            for (se, we) in [(e.s, e.w), (2.0 * PI - e.s, -e.w)] {
                let dist = (x.v - e.v).abs() + (s - se).abs() + (x.w - we).abs();
                if dist < self.config.equilibrium_radius {
                    return Some(is_c);
                }
            }
        }
        None
    }

    fn walk_chart<const N: usize, C: Chart<N>>(
        &self,
        field: &C,
        state: &McGeheeState,
        direction: f64,
        max_crossings: usize,
        mut on_step: impl FnMut(&McGeheeState),
    ) -> OrbitWalk {
        let si = C::S_INDEX;
        let direction = if direction < 0.0 { -1.0 } else { 1.0 };
        let y0 = C::lower(state);
        let start_lattice = {
            let k = (state.s / PI).round();
            (state.s - k * PI == 0.0).then_some(k as i64)
        };
        let mut stepper = Dop853::new(field, 0.0, y0, direction, self.control());
        let mut crossings = Vec::new();
        let mut last_cross_t = 0.0;
        let mut first_step = true;
        let sign_idx = direction as i64;
        let finish = |termination: Termination, crossings: Vec<CrossingRecord>, y: &[f64; N], t: f64| OrbitWalk {
            crossings,
            termination,
            final_state: C::lift(y),
            final_time: t,
        };
        if max_crossings == 0 {
            return finish(Termination::Crossings, crossings, &y0, 0.0);
        }
        loop {
            let dense = match stepper.step() {
                Ok(d) => d,
                Err(Error::StepUnderflow { t, .. }) => {
                    return finish(Termination::Failed(StepFailure::Underflow { t }), crossings, &stepper.y, t)
                }
                Err(_) => {
                    let t = stepper.t;
                    return finish(Termination::Failed(StepFailure::Budget { t }), crossings, &stepper.y, t);
                }
            };
            let sa = dense.start()[si];
            let sb = stepper.y[si];
            // lattice values k pi crossed during this step, in the order met
            let (lo, hi) = if sa <= sb { (sa, sb) } else { (sb, sa) };
            let k_lo = (lo / PI).ceil() as i64;
            let k_hi = (hi / PI).floor() as i64;
            let mut ks: Vec<i64> = (k_lo..=k_hi).collect();
            if sb < sa {
                ks.reverse();
            }
            for k in ks {
                let target = k as f64 * PI;
                if first_step && Some(k) == start_lattice && sa == target {
                    continue;
                }
                let g = |t: f64| dense.eval(t)[si] - target;
                let (ta, tb) = (dense.t0, dense.t1());
                let t_cross = if g(tb) == 0.0 {
                    tb
                } else {
                    match brent(g, ta, tb, 1e-16, 200) {
                        Some(t) => t,
                        None => continue,
                    }
                };
                let y = dense.eval(t_cross);
                let raw = C::lift(&y);
                let side = Side::of_lattice(k);
                let sign = if raw.w >= 0.0 { 1.0 } else { -1.0 };
                let w = self.system.shape_velocity_for(raw.r, raw.v, target, sign).unwrap_or(raw.w);
                let projected = McGeheeState::new(raw.r, raw.v, target, w);
                let transversality = 2.0 * w * target.cos() / self.system.wedge();
                let index = sign_idx * (crossings.len() as i64 + 1);
                crossings.push(CrossingRecord {
                    point: SectionPoint::new(side, raw.v, raw.r.max(0.0)),
                    crossing_time: t_cross,
                    crossing_index: index,
                    state: projected,
                    transversality,
                });
                last_cross_t = t_cross;
                if crossings.len() >= max_crossings {
                    return finish(Termination::Crossings, crossings, &y, t_cross);
                }
            }
            first_step = false;
            let x = C::lift(&stepper.y);
            on_step(&x);
            let t = stepper.t;
            if x.r > self.config.escape_radius {
                return finish(Termination::Escape { r: x.r, t }, crossings, &stepper.y, t);
            }
            if let Some(at_c) = self.near_equilibrium(&x) {
                let term = if direction > 0.0 {
                    Termination::Absorbed { t, at_c }
                } else {
                    Termination::Ejection { t, at_d: !at_c }
                };
                return finish(term, crossings, &stepper.y, t);
            }
            if (t - last_cross_t).abs() > self.config.max_return_time {
                return finish(Termination::NoReturn { t }, crossings, &stepper.y, t);
            }
        }
    }

    fn return_map(&self, p: &SectionPoint, direction: f64) -> Result<CrossingRecord> {
        let state = self.embed(p)?;
        let walk = self.walk(&state, direction, 1)?;
        match walk.termination {
            Termination::Crossings => {
                let rec = walk.crossings[0];
                if rec.transversality.abs() < self.config.transversality_floor {
                    return Err(Error::Tangency {
                        derivative: rec.transversality,
                    });
                }
                Ok(rec)
            }
            other => Err(other.into_error()),
        }
    }

    /// First-return map `P`.
    pub fn poincare_forward(&self, p: &SectionPoint) -> Result<CrossingRecord> {
        self.return_map(p, 1.0)
    }

    /// Inverse return map `P^{-1}`. The ejection obstruction surfaces as
    /// [`Error::Ejection`].
    pub fn poincare_backward(&self, p: &SectionPoint) -> Result<CrossingRecord> {
        self.return_map(p, -1.0)
    }

    /// Successive crossings of the orbit through `p` (not counting `p`).
    pub fn itinerary(&self, p: &SectionPoint, direction: f64, max_letters: usize) -> Result<OrbitWalk> {
        let state = self.embed(p)?;
        self.walk(&state, direction, max_letters)
    }
}

/// Letters of a list of crossings.
pub fn word_of(crossings: &[CrossingRecord]) -> String {
    crossings.iter().map(|c| c.point.side.letter()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::MassTriple;

    fn flow(m: [f64; 3]) -> Flow {
        let sys = Collinear::with_default_energy(MassTriple::new(m[0], m[1], m[2]).unwrap()).unwrap();
        Flow::with_defaults(sys).unwrap()
    }

    #[test]
    fn embedding_satisfies_energy() {
        let f = flow([0.2, 0.5, 0.3]);
        for side in [Side::L, Side::R] {
            let x = f.embed(&SectionPoint::new(side, -0.7, 0.4)).unwrap();
            assert_eq!(x.s.sin().abs() < 1e-15, true);
            assert!(f.system.energy_residual(&x).abs() < 1e-13);
        }
        assert!(f.embed(&SectionPoint::new(Side::L, 0.0, -1.0)).is_err());
    }

    #[test]
    fn equilibrium_is_fixed_by_integration() {
        let f = flow([1.0, 1.0, 1.0]);
        let c = f.equilibria.c.state;
        let traj = f.integrate(&c, (0.0, 5.0), 1e-12).unwrap();
        let end = traj.final_state().unwrap();
        for (a, b) in end.to_array().iter().zip(c.to_array()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_then_backward_returns_to_start() {
        let f = flow([0.3, 0.3, 0.4]);
        let x = f.embed(&SectionPoint::new(Side::L, 0.2, 0.5)).unwrap();
        let fwd = f.integrate(&x, (0.0, 1.5), 1e-13).unwrap();
        let mid = fwd.final_state().unwrap();
        let back = f.integrate(&mid, (1.5, 0.0), 1e-13).unwrap();
        let end = back.final_state().unwrap();
        for (a, b) in end.to_array().iter().zip(x.to_array()) {
            assert!((a - b).abs() < 1e-8, "{end:?} vs {x:?}");
        }
    }

    #[test]
    fn backward_crossing_indices_decrease() {
        let f = flow([1.0, 1.0, 1.0]);
        let walk = f.itinerary(&SectionPoint::new(Side::L, 0.1, 0.3), -1.0, 4).unwrap();
        let idx: Vec<i64> = walk.crossings.iter().map(|c| c.crossing_index).collect();
        assert!(idx.windows(2).all(|w| w[1] < w[0]), "{idx:?}");
        assert_eq!(idx.first(), Some(&-1));
    }

    #[test]
    fn trajectory_csv_has_header_and_rows() {
        let f = flow([1.0, 1.0, 1.0]);
        let x = f.embed(&SectionPoint::new(Side::R, 0.0, 0.2)).unwrap();
        let traj = f.integrate(&x, (0.0, 0.5), 1e-10).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&f.system, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,r,v,s,w,energy_residual\n"));
        assert_eq!(text.lines().count(), traj.steps.len() + 2);
    }
}
