//! Regularized McGehee vector field of the collinear three-body problem.
//!
//! Coordinates. With the centre of mass removed, the collinear configuration
//! space is a plane carrying the mass metric; Jacobi coordinates make that
//! metric Euclidean. Writing the configuration in polar form `(rho, theta)`
//! the ordered configurations `x1 < x2 < x3` form a wedge `0 < theta < Theta`,
//! with the left binary collision (bodies 1 and 2) on `theta = 0` and the
//! right binary collision (bodies 2 and 3) on `theta = Theta`.
//!
//! The blow-up uses `r = rho` (the square root of the moment of inertia), the
//! radial velocity `v = r^{1/2} dr/dt`, and McGehee time `d tau = r^{-3/2} dt`.
//! Both binary collisions are then regularized at once by the doubled shape
//! angle `s`, defined through `theta = Theta sin^2(s / 2)`, together with the
//! time change `d sigma = d tau / sin^2 s` and the shape velocity
//! `w = sin(s) r^{3/2} d theta / dt`. In these variables the system reads
//!
//! ```text
//! r' = sin^2(s) r v
//! v' = w^2 / 2 + sin^2(s) r h
//! s' = 2 w / Theta
//! w' = (2 / Theta) V'(s) + (2 / Theta) cos(s) sin(s) (2 r h - v^2) - sin^2(s) v w / 2
//! ```
//!
//! where `V(s) = sin^2(s) U(theta(s))` is the regularized shape potential,
//! which is smooth and positive on the whole circle. The energy integral is
//!
//! ```text
//! w^2 / 2 + sin^2(s) (v^2 / 2 - r h) - V(s) = 0
//! ```
//!
//! and it is an exact first integral of the field above. `s = 0 (mod 2 pi)` is
//! the left binary collision and `s = pi (mod 2 pi)` the right one; the map
//! `(s, w) -> (-s, -w)` is a symmetry of the field and identifies the two
//! sheets of the double cover, so a physical configuration appears twice.
//! The triple-collision manifold is `r = 0`, on which `v' = w^2 / 2 >= 0`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Default energy level. Scaling symmetry makes every negative level
/// equivalent; only the sign matters for the itineraries.
pub const DEFAULT_ENERGY: f64 = -1.0;

/// Positive masses normalized to unit total mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassTriple {
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
}

impl MassTriple {
    /// Normalizes three positive masses so that they sum to one.
    pub fn new(m1: f64, m2: f64, m3: f64) -> Result<Self> {
        for (name, m) in [("m1", m1), ("m2", m2), ("m3", m3)] {
            if !(m.is_finite() && m > 0.0) {
                return Err(Error::InvalidMasses(format!("{name} = {m} is not a positive finite number")));
            }
        }
        let total = m1 + m2 + m3;
        Ok(Self {
            m1: m1 / total,
            m2: m2 / total,
            m3: m3 / total,
        })
    }

    pub fn equal() -> Self {
        Self {
            m1: 1.0 / 3.0,
            m2: 1.0 / 3.0,
            m3: 1.0 / 3.0,
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.m1, self.m2, self.m3]
    }

    /// True when the outer masses agree, which makes the problem symmetric
    /// under exchange of the left and right binaries.
    pub fn is_mirror_symmetric(&self) -> bool {
        (self.m1 - self.m3).abs() <= 1e-14
    }

    pub fn validate(&self) -> Result<()> {
        let sum = self.m1 + self.m2 + self.m3;
        if self.as_array().iter().any(|m| !(m.is_finite() && *m > 0.0)) {
            return Err(Error::InvalidMasses(format!("{self:?} has a non-positive mass")));
        }
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidMasses(format!("masses sum to {sum}, expected 1")));
        }
        Ok(())
    }
}

/// A point of the regularized flow.
///
/// `r` is the size, `v` the radial velocity, `s` the doubled shape angle and
/// `w` the regularized shape velocity. The same struct is used for tangent
/// vectors (rates of change), in which case the fields hold derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McGeheeState {
    pub r: f64,
    pub v: f64,
    pub s: f64,
    pub w: f64,
}

impl McGeheeState {
    pub fn new(r: f64, v: f64, s: f64, w: f64) -> Self {
        Self { r, v, s, w }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.r, self.v, self.s, self.w]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    /// Time-reversal involution `(v, w) -> (-v, -w)`.
    pub fn reversed(self) -> Self {
        Self::new(self.r, -self.v, self.s, -self.w)
    }

    /// Exchange of the left and right binaries, `s -> pi - s`, `w -> -w`.
    /// A symmetry of the flow whenever `m1 = m3`.
    pub fn reflected(self) -> Self {
        Self::new(self.r, self.v, PI - self.s, -self.w)
    }

    /// Sheet exchange of the double cover, `(s, w) -> (-s, -w)`.
    pub fn sheet_swapped(self) -> Self {
        Self::new(self.r, self.v, -self.s, -self.w)
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }
}

/// Value and first two derivatives of `x / sin(k x)`, stable near `x = 0`.
fn x_over_sin(x: f64, k: f64) -> (f64, f64, f64) {
    let y = k * x;
    if y.abs() < 0.05 {
        let y2 = y * y;
        // y / sin y = 1 + y^2/6 + 7y^4/360 + 31y^6/15120 + 127y^8/604800
        let g = 1.0 + y2 * (1.0 / 6.0 + y2 * (7.0 / 360.0 + y2 * (31.0 / 15120.0 + y2 * 127.0 / 604800.0)));
        let g1 = y * (1.0 / 3.0 + y2 * (7.0 / 90.0 + y2 * (31.0 / 2520.0 + y2 * 127.0 / 75600.0)));
        let g2 = 1.0 / 3.0 + y2 * (7.0 / 30.0 + y2 * (31.0 / 504.0 + y2 * 127.0 / 10800.0));
        (g / k, g1, g2 * k)
    } else {
        let (sn, cs) = y.sin_cos();
        let g = y / sn;
        let g1 = (sn - y * cs) / (sn * sn);
        let g2 = (y * sn * sn - 2.0 * cs * (sn - y * cs)) / (sn * sn * sn);
        (g / k, g1, g2 * k)
    }
}

/// Mass-dependent geometry of the configuration wedge and the shape potential.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapePotential {
    /// Opening angle of the wedge of ordered configurations.
    pub wedge: f64,
    // U(theta) = left / sin(theta) + right / sin(wedge - theta) + outer / (p cos + q sin)
    left: f64,
    right: f64,
    outer: f64,
    p: f64,
    q: f64,
}

impl ShapePotential {
    pub fn new(masses: &MassTriple) -> Self {
        let MassTriple { m1, m2, m3 } = *masses;
        let mu1 = m1 * m2 / (m1 + m2);
        let mu2 = (m1 + m2) * m3 / (m1 + m2 + m3);
        let a_sin = 1.0 / mu2.sqrt();
        let a_cos = m1 / ((m1 + m2) * mu1.sqrt());
        let wedge = a_sin.atan2(a_cos);
        let a = a_sin.hypot(a_cos);
        Self {
            wedge,
            left: m1 * m2 * mu1.sqrt(),
            right: m2 * m3 / a,
            outer: m1 * m3,
            p: 1.0 / mu2.sqrt(),
            q: m2 / ((m1 + m2) * mu1.sqrt()),
        }
    }

    /// Unregularized potential on the unit circle with derivatives in theta.
    pub fn shape(&self, theta: f64) -> (f64, f64, f64) {
        let (s1, c1) = theta.sin_cos();
        let (s2, c2) = (self.wedge - theta).sin_cos();
        let d = self.p * c1 + self.q * s1;
        let dd = -self.p * s1 + self.q * c1;
        let u = self.left / s1 + self.right / s2 + self.outer / d;
        let du = -self.left * c1 / (s1 * s1) + self.right * c2 / (s2 * s2) - self.outer * dd / (d * d);
        let ddu = self.left * (1.0 + c1 * c1) / (s1 * s1 * s1)
            + self.right * (1.0 + c2 * c2) / (s2 * s2 * s2)
            + self.outer * (1.0 / d + 2.0 * dd * dd / (d * d * d));
        (u, du, ddu)
    }

    /// `F(t) = 4 t (1 - t) U(wedge t)` with two derivatives; smooth on `[0, 1]`.
    fn regularized_in_t(&self, t: f64) -> (f64, f64, f64) {
        let k = self.wedge;
        let (f, f1, f2) = x_over_sin(t, k);
        let u = 1.0 - t;
        let (g, g1, g2) = x_over_sin(u, k);
        let left = 4.0 * self.left;
        let right = 4.0 * self.right;
        let t1 = left * u * f;
        let t1d = left * (-f + u * f1);
        let t1dd = left * (-2.0 * f1 + u * f2);
        let t2 = right * t * g;
        let t2d = right * (g - t * g1);
        let t2dd = right * (-2.0 * g1 + t * g2);

        let theta = k * t;
        let (sn, cs) = theta.sin_cos();
        let d = self.p * cs + self.q * sn;
        let dd = -self.p * sn + self.q * cs;
        let inv = 1.0 / d;
        let inv_t = -k * dd * inv * inv;
        let inv_tt = k * k * (inv + 2.0 * dd * dd * inv * inv * inv);
        let quad = t * u;
        let outer = 4.0 * self.outer;
        let t3 = outer * quad * inv;
        let t3d = outer * ((1.0 - 2.0 * t) * inv + quad * inv_t);
        let t3dd = outer * (-2.0 * inv + 2.0 * (1.0 - 2.0 * t) * inv_t + quad * inv_tt);
        (t1 + t2 + t3, t1d + t2d + t3d, t1dd + t2dd + t3dd)
    }

    /// Regularized potential `V(s) = sin^2(s) U(theta(s))` and its first two
    /// derivatives in `s`.
    pub fn regularized(&self, s: f64) -> (f64, f64, f64) {
        let (sn, cs) = s.sin_cos();
        let t = 0.5 * (1.0 - cs);
        let (f, ft, ftt) = self.regularized_in_t(t);
        (f, 0.5 * ft * sn, 0.25 * ftt * sn * sn + 0.5 * ft * cs)
    }

    pub fn theta_of(&self, s: f64) -> f64 {
        self.wedge * 0.5 * (1.0 - s.cos())
    }

    /// Inverse of [`Self::theta_of`] on the sheet `s` in `[0, pi]`.
    pub fn s_of(&self, theta: f64) -> f64 {
        2.0 * (theta / self.wedge).clamp(0.0, 1.0).sqrt().asin()
    }
}

/// Linearization datum at an equilibrium: eigenvalue and unit eigenvector in
/// the tangent space of the energy surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenPair {
    pub value: f64,
    pub vector: McGeheeState,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub state: McGeheeState,
    /// Direction transverse to M; unstable at `d`, stable at `c`.
    pub radial: EigenPair,
    pub stable_on_m: EigenPair,
    pub unstable_on_m: EigenPair,
}

/// The collision equilibrium `c` (`v < 0`) and ejection equilibrium `d`
/// (`v > 0`) on the triple-collision manifold at the central configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Equilibria {
    pub c: Equilibrium,
    pub d: Equilibrium,
    /// Wedge angle of the central configuration.
    pub theta: f64,
    /// Minimum of the shape potential.
    pub potential: f64,
}

/// The collinear problem at fixed masses and energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Collinear {
    pub masses: MassTriple,
    pub energy: f64,
    pub potential: ShapePotential,
}

impl Collinear {
    pub fn new(masses: MassTriple, energy: f64) -> Result<Self> {
        masses.validate()?;
        if !(energy.is_finite() && energy < 0.0) {
            return Err(Error::InvalidConfig(format!("energy {energy} must be negative")));
        }
        Ok(Self {
            masses,
            energy,
            potential: ShapePotential::new(&masses),
        })
    }

    pub fn with_default_energy(masses: MassTriple) -> Result<Self> {
        Self::new(masses, DEFAULT_ENERGY)
    }

    pub fn wedge(&self) -> f64 {
        self.potential.wedge
    }

    /// Unchecked right-hand side of the full field, `[r, v, s, w]` order.
    #[inline]
    pub fn rhs(&self, y: &[f64; 4]) -> [f64; 4] {
        let [r, v, s, w] = *y;
        let (sn, cs) = s.sin_cos();
        let s2 = sn * sn;
        let h = self.energy;
        let k = 2.0 / self.potential.wedge;
        let (_, dv, _) = self.potential.regularized(s);
        [
            s2 * r * v,
            0.5 * w * w + s2 * r * h,
            k * w,
            k * dv + k * cs * sn * (2.0 * r * h - v * v) - 0.5 * s2 * v * w,
        ]
    }

    /// Unchecked right-hand side of the field restricted to `r = 0`,
    /// `[v, s, w]` order.
    #[inline]
    pub fn rhs_on_collision_manifold(&self, y: &[f64; 3]) -> [f64; 3] {
        let [v, s, w] = *y;
        let (sn, cs) = s.sin_cos();
        let k = 2.0 / self.potential.wedge;
        let (_, dv, _) = self.potential.regularized(s);
        [0.5 * w * w, k * w, k * dv - k * cs * sn * v * v - 0.5 * sn * sn * v * w]
    }

    /// Time derivative of each coordinate.
    pub fn vector_field(&self, state: &McGeheeState) -> Result<McGeheeState> {
        if !state.is_finite() {
            return Err(Error::Domain(format!("non-finite state {state:?}")));
        }
        if state.r < 0.0 {
            return Err(Error::Domain(format!("negative size r = {}", state.r)));
        }
        Ok(McGeheeState::from_array(self.rhs(&state.to_array())))
    }

    /// Zero exactly on the energy surface of level `energy`.
    pub fn energy_residual_at(&self, state: &McGeheeState, energy: f64) -> f64 {
        let sn = state.s.sin();
        let (pot, _, _) = self.potential.regularized(state.s);
        0.5 * state.w * state.w + sn * sn * (0.5 * state.v * state.v - state.r * energy) - pot
    }

    pub fn energy_residual(&self, state: &McGeheeState) -> f64 {
        self.energy_residual_at(state, self.energy)
    }

    /// Solves the energy relation for `w`, keeping the sign of `sign`.
    /// Returns `None` when the relation has no real solution.
    pub fn shape_velocity_for(&self, r: f64, v: f64, s: f64, sign: f64) -> Option<f64> {
        let sn = s.sin();
        let (pot, _, _) = self.potential.regularized(s);
        let w2 = 2.0 * (pot - sn * sn * (0.5 * v * v - r * self.energy));
        if w2 < 0.0 {
            return None;
        }
        Some(w2.sqrt().copysign(sign))
    }

    /// Solves the energy relation for `v`, keeping the sign of `sign`.
    pub fn radial_velocity_for(&self, r: f64, s: f64, w: f64, sign: f64) -> Option<f64> {
        let sn = s.sin();
        let (pot, _, _) = self.potential.regularized(s);
        let s2 = sn * sn;
        if s2 == 0.0 {
            return None;
        }
        let v2 = 2.0 * ((pot - 0.5 * w * w) / s2 + r * self.energy);
        if v2 < 0.0 {
            return None;
        }
        Some(v2.sqrt().copysign(sign))
    }

    /// Equilibria `c` and `d` with their linearizations.
    pub fn find_equilibria(&self) -> Result<Equilibria> {
        let theta = central_configuration(&self.masses)?;
        let (u, _, u2) = self.potential.shape(theta);
        let s = self.potential.s_of(theta);
        let vd = (2.0 * u).sqrt();
        let c = self.linearize(McGeheeState::new(0.0, -vd, s, 0.0), u2);
        let d = self.linearize(McGeheeState::new(0.0, vd, s, 0.0), u2);
        Ok(Equilibria { c, d, theta, potential: u })
    }

    fn linearize(&self, state: McGeheeState, shape_curvature: f64) -> Equilibrium {
        let k = 2.0 / self.potential.wedge;
        let sn = state.s.sin();
        let s2 = sn * sn;
        let v0 = state.v;
        // The energy surface slaves dv = h dr / v0; the (s, w) block decouples.
        let radial_value = s2 * v0;
        let radial = unit(McGeheeState::new(1.0, self.energy / v0, 0.0, 0.0));
        // d/ds of the shape force equals sin^2(s) U''(theta) (dtheta/ds)^2 at
        // a critical point of U.
        let dtheta = 0.5 * self.potential.wedge * state.s.sin();
        let a = k * s2 * shape_curvature * dtheta * dtheta;
        let b = 0.5 * s2 * v0;
        let disc = (b * b + 4.0 * k * a).sqrt();
        let lam_u = 0.5 * (-b + disc);
        let lam_s = 0.5 * (-b - disc);
        let vec_for = |lam: f64| unit(McGeheeState::new(0.0, 0.0, 1.0, lam / k));
        Equilibrium {
            state,
            radial: EigenPair { value: radial_value, vector: radial },
            stable_on_m: EigenPair { value: lam_s, vector: vec_for(lam_s) },
            unstable_on_m: EigenPair { value: lam_u, vector: vec_for(lam_u) },
        }
    }
}

fn unit(x: McGeheeState) -> McGeheeState {
    let n = x.to_array().iter().map(|c| c * c).sum::<f64>().sqrt();
    McGeheeState::from_array(x.to_array().map(|c| c / n))
}

/// Wedge angle of the collinear central configuration (the minimum of the
/// shape potential). Damped Newton, continued from the equal-mass
/// configuration along a straight path in mass space.
pub fn central_configuration(masses: &MassTriple) -> Result<f64> {
    let equal = MassTriple::equal();
    let stages = 8;
    // fraction of the wedge; the equal-mass central configuration is the midpoint
    let mut frac = 0.5;
    let mut last = (f64::NAN, 0.0);
    for stage in 1..=stages {
        let lam = stage as f64 / stages as f64;
        let m = MassTriple {
            m1: (1.0 - lam) * equal.m1 + lam * masses.m1,
            m2: (1.0 - lam) * equal.m2 + lam * masses.m2,
            m3: (1.0 - lam) * equal.m3 + lam * masses.m3,
        };
        let pot = ShapePotential::new(&m);
        let mut theta = frac * pot.wedge;
        let mut converged = false;
        for _ in 0..100 {
            let (_, g, gp) = pot.shape(theta);
            last = (g, theta);
            let step = if gp > 0.0 { g / gp } else { g.signum() * 0.1 * pot.wedge };
            let mut damping = 1.0;
            let mut next = theta - step;
            while !(next > 0.0 && next < pot.wedge) || pot.shape(next).1.abs() > g.abs() && damping > 1e-6 {
                damping *= 0.5;
                next = theta - damping * step;
            }
            theta = next;
            if step.abs() < 1e-15 * pot.wedge.max(1.0) || pot.shape(theta).1.abs() < 1e-13 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::RootFinder { residual: last.0.abs() });
        }
        frac = theta / pot.wedge;
    }
    let pot = ShapePotential::new(masses);
    let theta = frac * pot.wedge;
    let (_, g, _) = pot.shape(theta);
    if g.abs() > 1e-9 {
        return Err(Error::RootFinder { residual: g.abs() });
    }
    Ok(theta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn system(m: [f64; 3]) -> Collinear {
        Collinear::with_default_energy(MassTriple::new(m[0], m[1], m[2]).unwrap()).unwrap()
    }

    #[test]
    fn equal_mass_wedge_is_sixty_degrees() {
        let sys = system([1.0, 1.0, 1.0]);
        assert!((sys.wedge() - PI / 3.0).abs() < 1e-14);
    }

    #[test]
    fn mass_validation() {
        assert!(MassTriple::new(1.0, -1.0, 1.0).is_err());
        assert!(MassTriple::new(1.0, f64::NAN, 1.0).is_err());
        let m = MassTriple::new(2.0, 3.0, 5.0).unwrap();
        assert!((m.m1 + m.m2 + m.m3 - 1.0).abs() < 1e-15);
        assert!(MassTriple { m1: 0.5, m2: 0.5, m3: 0.5 }.validate().is_err());
    }

    #[test]
    fn regularized_potential_matches_shape_potential() {
        let sys = system([0.2, 0.5, 0.3]);
        let pot = sys.potential;
        for i in 1..40 {
            let s = PI * i as f64 / 40.0;
            let theta = pot.theta_of(s);
            let (u, _, _) = pot.shape(theta);
            let (v, _, _) = pot.regularized(s);
            let expect = s.sin().powi(2) * u;
            assert!((v - expect).abs() < 1e-12 * expect.abs().max(1.0), "s={s} {v} {expect}");
        }
    }

    #[test]
    fn regularized_derivatives_match_finite_differences() {
        let sys = system([0.6, 0.1, 0.3]);
        let pot = sys.potential;
        let h = 1e-5;
        for i in -20..=20 {
            let s = 0.157 * i as f64 + 0.01;
            let (_, d1, d2) = pot.regularized(s);
            let fd1 = (pot.regularized(s + h).0 - pot.regularized(s - h).0) / (2.0 * h);
            let fd2 = (pot.regularized(s + h).1 - pot.regularized(s - h).1) / (2.0 * h);
            assert!((d1 - fd1).abs() < 1e-7 * (1.0 + d1.abs()), "s={s}: {d1} vs {fd1}");
            assert!((d2 - fd2).abs() < 1e-7 * (1.0 + d2.abs()), "s={s}: {d2} vs {fd2}");
        }
    }

    #[test]
    fn regularized_potential_is_positive_at_collisions() {
        let sys = system([0.2, 0.5, 0.3]);
        let (vl, _, _) = sys.potential.regularized(0.0);
        let (vr, _, _) = sys.potential.regularized(PI);
        assert!(vl > 0.0 && vr > 0.0);
        // Smooth passage: the series branch and the closed form agree at the seam.
        let (a, _, _) = sys.potential.regularized(0.0999);
        let (b, _, _) = sys.potential.regularized(0.1001);
        assert!((a - b).abs() < 1e-3);
    }

    #[test]
    fn vector_field_rejects_negative_size() {
        let sys = system([1.0, 1.0, 1.0]);
        let err = sys.vector_field(&McGeheeState::new(-1e-3, 0.0, 1.0, 0.0));
        assert!(matches!(err, Err(Error::Domain(_))));
    }

    #[test]
    fn equilibria_vanish_and_straddle_zero() {
        for m in [[1.0, 1.0, 1.0], [0.2, 0.5, 0.3], [0.7, 0.05, 0.25]] {
            let sys = system(m);
            let eq = sys.find_equilibria().unwrap();
            for e in [eq.c, eq.d] {
                assert_eq!(e.state.r, 0.0);
                let f = sys.vector_field(&e.state).unwrap();
                assert!(f.to_array().iter().all(|x| x.abs() < 1e-10), "{f:?}");
                assert!(sys.energy_residual(&e.state).abs() < 1e-12);
            }
            assert!(eq.c.state.v < 0.0 && 0.0 < eq.d.state.v);
            assert!((eq.c.state.v + eq.d.state.v).abs() < 1e-10);
            assert_eq!(eq.c.state.reversed(), eq.d.state);
            assert!(eq.c.radial.value < 0.0 && eq.d.radial.value > 0.0);
            assert!(eq.c.stable_on_m.value < 0.0 && eq.c.unstable_on_m.value > 0.0);
        }
    }

    #[test]
    fn equal_masses_put_central_configuration_at_the_midpoint() {
        let sys = system([1.0, 1.0, 1.0]);
        let eq = sys.find_equilibria().unwrap();
        assert!((eq.theta - sys.wedge() / 2.0).abs() < 1e-12);
        assert!((eq.c.state.s - PI / 2.0).abs() < 1e-12);
        assert!((eq.c.state.reflected().s - eq.c.state.s).abs() < 1e-12);
    }

    #[test]
    fn eigenvectors_satisfy_the_linearization() {
        let sys = system([0.3, 0.3, 0.4]);
        let eq = sys.find_equilibria().unwrap();
        let h = 1e-7;
        for e in [eq.c, eq.d] {
            for pair in [e.radial, e.stable_on_m, e.unstable_on_m] {
                let x = e.state.to_array();
                let dx = pair.vector.to_array();
                let plus: [f64; 4] = std::array::from_fn(|i| x[i] + h * dx[i]);
                let minus: [f64; 4] = std::array::from_fn(|i| x[i] - h * dx[i]);
                let (fp, fm) = (sys.rhs(&plus), sys.rhs(&minus));
                for i in 0..4 {
                    let jv = (fp[i] - fm[i]) / (2.0 * h);
                    assert!((jv - pair.value * dx[i]).abs() < 1e-6, "component {i}: {jv} vs {}", pair.value * dx[i]);
                }
            }
        }
    }
}
