use collinear::harness::*;
use collinear::manifolds::{ManifoldConfig, Manifolds};
use collinear::pullback::{Quantities, SeedArcs};
use collinear::symbolic::{graph_template, SoficGraph};
use collinear::{Collinear, Error, Flow, MassTriple, SectionPoint, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::OnceLock;

fn equal() -> &'static (Flow, SampleBox) {
    static CELL: OnceLock<(Flow, SampleBox)> = OnceLock::new();
    CELL.get_or_init(|| {
        let flow = Flow::with_defaults(Collinear::with_default_energy(MassTriple::equal()).unwrap()).unwrap();
        let seeds = SeedArcs::compute(&Manifolds::new(&flow, ManifoldConfig::default())).unwrap();
        let b = SampleBox::around(&seeds, 0.2);
        (flow, b)
    })
}

fn exact_graph() -> SoficGraph {
    graph_template(&Quantities::exact(4, 4, 3, 3).unwrap()).unwrap().exact.unwrap()
}

fn swap_letters(w: &str) -> String {
    w.chars().map(|c| if c == 'L' { 'R' } else { 'L' }).collect()
}

#[test]
fn sampling_is_deterministic_in_the_seed() {
    let (flow, b) = equal();
    let g = exact_graph();
    let cfg = SamplingConfig {
        n_orbits: 60,
        max_letters: 8,
        ..SamplingConfig::default()
    };
    let a = sample_itineraries(flow, *b, &[("exact", &g)], cfg).unwrap();
    let again = sample_itineraries(flow, *b, &[("exact", &g)], cfg).unwrap();
    assert_eq!(a.orbits, again.orbits);
    let other = sample_itineraries(flow, *b, &[("exact", &g)], SamplingConfig { seed: 2, ..cfg }).unwrap();
    assert_ne!(a.orbits[0].initial, other.orbits[0].initial);
    assert_eq!(a.acceptance_rate("exact"), Some(1.0));
    assert!(a.orbits.iter().all(|o| o.energy_residual < 1e-9));
}

#[test]
fn reflected_orbits_spell_swapped_words() {
    let (flow, b) = equal();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut compared = 0;
    for _ in 0..40 {
        let p = SectionPoint::new(Side::L, rng.gen_range(b.v_min..b.v_max), rng.gen_range(1e-3..b.r_max));
        let (Ok((w, s, _)), Ok((wr, sr, _))) = (word_from(flow, &p, 8), word_from(flow, &p.reflected(), 8)) else {
            continue;
        };
        assert_eq!(wr, swap_letters(&w), "at {p:?}");
        assert_eq!(s, sr);
        compared += 1;
    }
    assert!(compared >= 30);
}

#[test]
fn realization_requires_an_accepted_word() {
    let (flow, b) = equal();
    let g = exact_graph();
    // repeats two letters apart break the gap rule
    for w in ["", "LLRRL", "LXR"] {
        let err = realize_word(flow, w, &g, *b, ShootingConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)), "{w}: {err}");
    }
}

#[test]
fn single_letter_words_are_realized() {
    let (flow, b) = equal();
    let g = exact_graph();
    for w in ["L", "R", "LR", "RL", "LL"] {
        let r = realize_word(flow, w, &g, *b, ShootingConfig::default()).unwrap();
        let p = r.initial.unwrap_or_else(|| panic!("{w} not realized"));
        assert!(r.verified);
        assert_eq!(word_from(flow, &p, w.len()).unwrap().0, w);
    }
}

#[test]
fn rejected_words_become_counterexamples() {
    let (flow, b) = equal();
    let mut only_l = SoficGraph::new();
    let v = only_l.add_vertex("l", Side::L);
    only_l.add_edge(v, v);
    let cfg = SamplingConfig {
        n_orbits: 20,
        max_letters: 4,
        ..SamplingConfig::default()
    };
    let report = sample_itineraries(flow, *b, &[("only_l", &only_l)], cfg).unwrap();
    assert!(!report.counterexamples.is_empty());
    assert!(report.counterexamples.iter().all(|c| c.word.contains('R')));
    let mut csv = Vec::new();
    report.write_counterexamples_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("orbit,side,v,r,word,graph"));
    assert_eq!(text.lines().count(), report.counterexamples.len() + 1);
}
