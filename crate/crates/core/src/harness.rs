//! Monte Carlo itineraries and word realization by shooting.
//!
//! Orbits start on the section at the fixed energy and are followed forward;
//! the word of an orbit is the half-plane of its initial point followed by
//! the half-planes of its subsequent crossings.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;

use crate::dynamics::MassTriple;
use crate::error::{Error, Result};
use crate::flow::{word_of, Flow, FlowConfig, SectionPoint, Side, Termination};
use crate::pullback::SeedArcs;
use crate::symbolic::SoficGraph;

/// Box of initial conditions, shared by both half-planes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleBox {
    pub v_min: f64,
    pub v_max: f64,
    pub r_max: f64,
}

impl SampleBox {
    /// Hull of the four seed arcs widened by `margin` of its extent.
    pub fn around(seeds: &SeedArcs, margin: f64) -> Self {
        let (mut lo, mut hi, mut top) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
        for arc in [&seeds.lc, &seeds.rc, &seeds.el, &seeds.er] {
            for p in &arc.points {
                lo = lo.min(p.u1);
                hi = hi.max(p.u1);
                top = top.max(p.u2);
            }
        }
        let w = hi - lo;
        Self {
            v_min: lo - margin * w,
            v_max: hi + margin * w,
            r_max: top * (1.0 + margin),
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> SectionPoint {
        let side = if rng.gen_bool(0.5) { Side::L } else { Side::R };
        let v = rng.gen_range(self.v_min..self.v_max);
        // r = 0 is the invariant manifold M; stay strictly off it
        let r = self.r_max * (1.0 - rng.gen::<f64>());
        SectionPoint::new(side, v, r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub n_orbits: usize,
    pub max_letters: usize,
    pub seed: u64,
    /// Relative widening of the seed-arc hull.
    pub margin: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            n_orbits: 10_000,
            max_letters: 12,
            seed: 1,
            margin: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrbitStatus {
    /// All requested letters recorded.
    Budget,
    Escape,
    Absorbed,
    Failed(String),
}

impl OrbitStatus {
    fn of(t: &Termination) -> Self {
        match t {
            Termination::Crossings => OrbitStatus::Budget,
            Termination::Escape { .. } => OrbitStatus::Escape,
            Termination::Absorbed { .. } => OrbitStatus::Absorbed,
            other => OrbitStatus::Failed(other.into_error().to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitSample {
    pub id: usize,
    pub initial: SectionPoint,
    pub word: String,
    pub status: OrbitStatus,
    /// Largest energy residual over the integration steps.
    pub energy_residual: f64,
    /// Acceptance by each named graph.
    pub accepted: BTreeMap<String, bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub orbit: usize,
    pub initial: SectionPoint,
    pub word: String,
    pub graph: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleReport {
    pub masses: MassTriple,
    pub config: SamplingConfig,
    pub sample_box: SampleBox,
    pub orbits: Vec<OrbitSample>,
    /// `graph -> (accepted, sampled)`.
    pub acceptance: BTreeMap<String, (usize, usize)>,
    pub counterexamples: Vec<Counterexample>,
}

impl SampleReport {
    pub fn acceptance_rate(&self, graph: &str) -> Option<f64> {
        self.acceptance.get(graph).map(|&(a, n)| if n == 0 { 1.0 } else { a as f64 / n as f64 })
    }

    /// Counterexamples as CSV: initial condition, word and rejecting graph.
    pub fn write_counterexamples_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "orbit,side,v,r,word,graph")?;
        for c in &self.counterexamples {
            writeln!(out, "{},{},{:.17e},{:.17e},{},{}", c.orbit, c.initial.side.letter(), c.initial.u1, c.initial.u2, c.word, c.graph)?;
        }
        Ok(())
    }
}

fn orbit_rng(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Word of the forward orbit of `p` with at most `letters` letters.
pub fn word_from(flow: &Flow, p: &SectionPoint, letters: usize) -> Result<(String, OrbitStatus, f64)> {
    if letters == 0 {
        return Ok((String::new(), OrbitStatus::Budget, 0.0));
    }
    let start = flow.embed(p)?;
    // crossing states are projected onto the energy surface; the residual is
    // taken on the raw integration steps instead
    let mut residual = flow.system.energy_residual(&start).abs();
    let walk = flow.walk_with(&start, 1.0, letters - 1, |x| {
        residual = residual.max(flow.system.energy_residual(x).abs());
    })?;
    let mut word = String::with_capacity(letters);
    word.push(p.side.letter());
    word.push_str(&word_of(&walk.crossings));
    Ok((word, OrbitStatus::of(&walk.termination), residual))
}

/// Samples `config.n_orbits` orbits from `sample_box` and checks every word
/// against `graphs`. Orbit failures are recorded, never fatal.
pub fn sample_itineraries(flow: &Flow, sample_box: SampleBox, graphs: &[(&str, &SoficGraph)], config: SamplingConfig) -> Result<SampleReport> {
    if config.n_orbits == 0 {
        return Err(Error::Precondition("at least one orbit is required".into()));
    }
    let mut orbits: Vec<OrbitSample> = (0..config.n_orbits)
        .into_par_iter()
        .map(|id| {
            let mut rng = orbit_rng(config.seed, id as u64);
            let mut initial = sample_box.draw(&mut rng);
            let mut outcome = word_from(flow, &initial, config.max_letters);
            // points off the energy surface are redrawn
            for _ in 0..16 {
                if !matches!(outcome, Err(Error::Domain(_))) {
                    break;
                }
                initial = sample_box.draw(&mut rng);
                outcome = word_from(flow, &initial, config.max_letters);
            }
            let (word, status, energy_residual) = match outcome {
                Ok(x) => x,
                Err(e) => (initial.side.letter().to_string(), OrbitStatus::Failed(e.to_string()), 0.0),
            };
            let accepted = graphs.iter().map(|(name, g)| (name.to_string(), g.accepts(&word))).collect();
            OrbitSample {
                id,
                initial,
                word,
                status,
                energy_residual,
                accepted,
            }
        })
        .collect();
    orbits.sort_by_key(|o| o.id);
    let mut acceptance = BTreeMap::new();
    let mut counterexamples = Vec::new();
    for (name, _) in graphs {
        let mut ok = 0;
        for o in &orbits {
            if o.accepted[*name] {
                ok += 1;
            } else {
                counterexamples.push(Counterexample {
                    orbit: o.id,
                    initial: o.initial,
                    word: o.word.clone(),
                    graph: name.to_string(),
                });
            }
        }
        acceptance.insert(name.to_string(), (ok, orbits.len()));
    }
    Ok(SampleReport {
        masses: flow.system.masses,
        config,
        sample_box,
        orbits,
        acceptance,
        counterexamples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootingConfig {
    /// Orbit evaluations allowed per word.
    pub budget: usize,
    pub pool: usize,
    pub keep: usize,
    pub seed: u64,
}

impl Default for ShootingConfig {
    fn default() -> Self {
        Self {
            budget: 20_000,
            pool: 400,
            keep: 20,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Realization {
    pub word: String,
    pub initial: Option<SectionPoint>,
    pub evaluations: usize,
    /// Longest prefix of `word` matched by any candidate.
    pub best_prefix: usize,
    /// Whether a re-simulation at tighter tolerance reproduced the word.
    pub verified: bool,
}

/// Finds an initial condition whose orbit spells `word`.
///
/// A random pool on the first half-plane is scored by the longest matching
/// prefix; the best candidates are perturbed with a shrinking radius until
/// one matches or the budget runs out. `upper` must accept the word.
pub fn realize_word(flow: &Flow, word: &str, upper: &SoficGraph, sample_box: SampleBox, config: ShootingConfig) -> Result<Realization> {
    if word.is_empty() || !upper.accepts(word) {
        return Err(Error::Precondition(format!("word {word:?} is not accepted by the upper graph")));
    }
    let first = Side::from_letter(word.chars().next().unwrap()).expect("accepted words use L and R");
    let n = word.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ fxhash(word));
    let score = |p: &SectionPoint| -> usize {
        match word_from(flow, p, n) {
            Ok((w, ..)) => w.bytes().zip(word.bytes()).take_while(|(a, b)| a == b).count(),
            Err(_) => 0,
        }
    };
    let mut evaluations = 0;
    let draw_pool = |rng: &mut ChaCha8Rng, count: usize| -> Vec<SectionPoint> {
        (0..count)
            .map(|_| {
                let mut p = sample_box.draw(rng);
                p.side = first;
                p
            })
            .collect()
    };
    let pool = draw_pool(&mut rng, config.pool.min(config.budget));
    evaluations += pool.len();
    let mut scored: Vec<(usize, SectionPoint)> = pool.par_iter().map(|p| (score(p), *p)).collect();
    let mut radius = 0.1 * (sample_box.v_max - sample_box.v_min).max(sample_box.r_max);
    loop {
        scored.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.u1.total_cmp(&b.1.u1)));
        scored.truncate(config.keep.max(1));
        let best = scored[0];
        if best.0 == n {
            let verified = verify(flow, &best.1, word);
            return Ok(Realization {
                word: word.to_string(),
                initial: Some(best.1),
                evaluations,
                best_prefix: n,
                verified,
            });
        }
        if evaluations >= config.budget {
            return Ok(Realization {
                word: word.to_string(),
                initial: None,
                evaluations,
                best_prefix: best.0,
                verified: false,
            });
        }
        let per = (config.pool / scored.len().max(1)).max(1);
        let mut children = Vec::new();
        for &(_, p) in &scored {
            for _ in 0..per {
                let q = SectionPoint::new(
                    first,
                    p.u1 + radius * rng.sample::<f64, _>(StandardNormal),
                    (p.u2 + radius * rng.sample::<f64, _>(StandardNormal)).abs().max(1e-12),
                );
                children.push(q);
            }
        }
        children.truncate(config.budget - evaluations);
        evaluations += children.len();
        let fresh: Vec<(usize, SectionPoint)> = children.par_iter().map(|p| (score(p), *p)).collect();
        let before = scored[0].0;
        scored.extend(fresh);
        scored.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.u1.total_cmp(&b.1.u1)));
        if scored[0].0 <= before {
            radius *= 0.6;
        }
        if radius < 1e-12 {
            // restart around fresh random points
            radius = 0.1 * (sample_box.v_max - sample_box.v_min).max(sample_box.r_max);
            let extra = draw_pool(&mut rng, config.pool.min(config.budget - evaluations));
            evaluations += extra.len();
            scored.extend(extra.par_iter().map(|p| (score(p), *p)).collect::<Vec<_>>());
        }
    }
}

/// Re-simulates `p` at a tighter integrator tolerance and compares words.
pub fn verify(flow: &Flow, p: &SectionPoint, word: &str) -> bool {
    let config = FlowConfig {
        tolerance: flow.config.tolerance * 0.01,
        ..flow.config
    };
    let Ok(tight) = Flow::new(flow.system.clone(), config) else {
        return false;
    };
    matches!(word_from(&tight, p, word.len()), Ok((w, ..)) if w == word)
}

fn fxhash(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x1000_0000_01b3))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boxes_stay_off_collision_manifold() {
        let b = SampleBox {
            v_min: -1.0,
            v_max: 1.0,
            r_max: 0.5,
        };
        let mut rng = orbit_rng(3, 9);
        for _ in 0..1000 {
            let p = b.draw(&mut rng);
            assert!(p.u2 > 0.0 && p.u2 <= 0.5);
            assert!((-1.0..1.0).contains(&p.u1));
        }
    }

    #[test]
    fn orbit_streams_are_independent_of_order() {
        let a: Vec<u64> = (0..4).map(|i| orbit_rng(11, i).gen()).collect();
        let b: Vec<u64> = (0..4).rev().map(|i| orbit_rng(11, i).gen()).collect();
        assert_eq!(a, b.into_iter().rev().collect::<Vec<_>>());
    }
}
