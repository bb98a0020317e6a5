//! Acceptance suite: one line per criterion, nonzero exit if any fails.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::time::Instant;

use collinear::harness::{realize_word, sample_itineraries, SampleBox, SampleReport, SamplingConfig, ShootingConfig};
use collinear::manifolds::{Arc, EndpointLabel, ManifoldConfig, Manifolds};
use collinear::pullback::{analyze, build_partition, ChainConfig, PullbackAnalysis, Quantities};
use collinear::symbolic::{contains, graph_from_partition, graph_template, same_language, GraphMode, RegionSampling, SoficGraph, TheoremCase};
use collinear::{Collinear, Flow, MassTriple, McGeheeState, SectionPoint, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = Result<String, String>;

struct Fixture {
    flow: Flow,
    analysis: PullbackAnalysis,
    sample_box: SampleBox,
}

impl Fixture {
    fn new(masses: MassTriple) -> Self {
        let flow = Flow::with_defaults(Collinear::with_default_energy(masses).unwrap()).unwrap();
        let analysis = analyze(&flow, ManifoldConfig::default(), ChainConfig::default()).unwrap();
        let sample_box = SampleBox::around(&analysis.seeds, SamplingConfig::default().margin);
        Self {
            flow,
            analysis,
            sample_box,
        }
    }

    fn checked_graph(&self) -> (&'static str, SoficGraph) {
        let b = graph_template(&self.analysis.quantities).unwrap();
        match b.exact {
            Some(g) => ("exact", g),
            None => ("upper", b.upper),
        }
    }
}

fn random_triples(n: usize) -> Vec<MassTriple> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    (0..n)
        .map(|_| MassTriple::new(rng.gen_range(0.1..1.0), rng.gen_range(0.1..1.0), rng.gen_range(0.1..1.0)).unwrap())
        .collect()
}

fn criterion_1(triples: &[MassTriple]) -> Verdict {
    let mut bad = Vec::new();
    for m in triples {
        let flow = Flow::with_defaults(Collinear::with_default_energy(*m).unwrap()).map_err(|e| e.to_string())?;
        let mf = Manifolds::new(&flow, ManifoldConfig::default());
        match mf.compute_lc_rc() {
            Ok((l, r, ..)) if l >= 2 && r >= 2 && l.abs_diff(r) <= 1 => {}
            Ok((l, r, ..)) => bad.push(format!("{m:?}: ({l}, {r})")),
            Err(e) => bad.push(format!("{m:?}: {e}")),
        }
    }
    if bad.is_empty() {
        Ok(format!("{} triples, no violations", triples.len()))
    } else {
        Err(bad.join("; "))
    }
}

fn endpoint(arc: &Arc, label: EndpointLabel) -> Option<f64> {
    if arc.start_label == label {
        Some(arc.start().u1)
    } else if arc.end_label == label {
        Some(arc.end().u1)
    } else {
        None
    }
}

fn criterion_2(triples: &[MassTriple]) -> Verdict {
    let tol = 1e-6;
    let mut bad = Vec::new();
    let mut hits = 0;
    for m in triples {
        let flow = Flow::with_defaults(Collinear::with_default_energy(*m).unwrap()).map_err(|e| e.to_string())?;
        let mf = Manifolds::new(&flow, ManifoldConfig::default());
        let seeds = match collinear::pullback::SeedArcs::compute(&mf) {
            Ok(s) => s,
            Err(e) => {
                bad.push(format!("{m:?}: {e}"));
                continue;
            }
        };
        let (vc, vd) = (flow.equilibria.c.state.v, flow.equilibria.d.state.v);
        for side in [Side::L, Side::R] {
            let transverse = seeds.hits(side).iter().filter(|h| !h.tangential).count();
            hits += transverse;
            if transverse == 0 {
                bad.push(format!("{m:?}: no transverse crossing on {side:?}"));
            }
            let (lc, el) = (seeds.collision(side), seeds.ejection(side));
            let chain = [
                endpoint(lc, EndpointLabel::StarC(side)),
                Some(vc),
                endpoint(el, EndpointLabel::CStar(side)),
                Some(0.0),
                endpoint(lc, EndpointLabel::StarD(side)),
                Some(vd),
                endpoint(el, EndpointLabel::DStar(side)),
            ];
            let Some(values) = chain.iter().copied().collect::<Option<Vec<f64>>>() else {
                bad.push(format!("{m:?}: missing endpoint label on {side:?}"));
                continue;
            };
            if values.windows(2).any(|w| w[0] > w[1] + tol) {
                bad.push(format!("{m:?} {side:?}: {values:?}"));
            }
        }
    }
    if bad.is_empty() {
        Ok(format!("{} triples, {hits} transverse crossings, ordering holds", triples.len()))
    } else {
        Err(bad.join("; "))
    }
}

fn distance_to_polyline(p: &SectionPoint, arc: &Arc) -> f64 {
    let (x, y) = (p.u1, p.u2);
    arc.points
        .windows(2)
        .map(|w| {
            let (ax, ay, bx, by) = (w[0].u1, w[0].u2, w[1].u1, w[1].u2);
            let (dx, dy) = (bx - ax, by - ay);
            let len2 = dx * dx + dy * dy;
            let t = if len2 > 0.0 { (((x - ax) * dx + (y - ay) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
            ((x - ax - t * dx).powi(2) + (y - ay - t * dy).powi(2)).sqrt()
        })
        .fold(f64::INFINITY, f64::min)
}

fn criterion_3(equal: &Fixture) -> Verdict {
    let q = &equal.analysis.quantities;
    if q.l_c != q.r_c || q.l_cap != q.r_cap {
        return Err(format!("quantities ({}, {}, {}, {})", q.l_c, q.r_c, q.l_cap, q.r_cap));
    }
    let s = &equal.analysis.seeds;
    let mut worst = 0.0f64;
    for (a, b) in [(&s.lc, &s.rc), (&s.rc, &s.lc), (&s.el, &s.er), (&s.er, &s.el)] {
        for p in &a.points {
            let r = p.reflected();
            if r.side != b.side {
                return Err("reflection maps to the wrong half-plane".into());
            }
            worst = worst.max(distance_to_polyline(&r, b));
        }
    }
    if worst <= 1e-6 {
        Ok(format!("quantities ({}, {}, {}, {}), seed arc mismatch {worst:.1e}", q.l_c, q.r_c, q.l_cap, q.r_cap))
    } else {
        Err(format!("seed arc mismatch {worst:.3e}"))
    }
}

fn criterion_4() -> Verdict {
    let g = graph_template(&Quantities::exact(2, 2, 1, 1).unwrap()).unwrap().exact.ok_or("no exact graph")?;
    let s = g.simplify();
    let labels: BTreeSet<char> = s.labels.iter().map(|l| l.letter()).collect();
    if s.len() == 2 && labels.len() == 2 && s.edge_count() == 4 {
        Ok(format!("{} vertices simplify to the 2-vertex full shift", g.len()))
    } else {
        Err(format!("simplified graph has {} vertices and {} edges", s.len(), s.edge_count()))
    }
}

fn criterion_5(equal: &Fixture) -> Verdict {
    let b = graph_template(&equal.analysis.quantities).map_err(|e| e.to_string())?;
    if b.case != TheoremCase::Main1 {
        return Err(format!("equal masses classified {}", b.case.name()));
    }
    let template = b.exact.unwrap();
    let partition = build_partition(&equal.analysis).map_err(|e| e.to_string())?;
    let g = graph_from_partition(&partition, &equal.flow, GraphMode::Exact, &RegionSampling::default()).map_err(|e| e.to_string())?;
    let n = 2 * template.len();
    if same_language(&template, &g, n) {
        Ok(format!("languages agree up to length {n}"))
    } else {
        Err(format!("languages differ below length {n}"))
    }
}

fn criterion_6(extra: &Quantities) -> Verdict {
    let mut tuples: Vec<Quantities> = [(5, 6, 2, 7), (3, 2, 5, 1), (2, 3, 1, 5), (4, 3, 7, 2), (4, 4, 2, 3), (3, 4, 2, 6)]
        .iter()
        .map(|t| Quantities::exact(t.0, t.1, t.2, t.3).unwrap())
        .collect();
    tuples.push(extra.clone());
    let mut bad = Vec::new();
    let mut checked = 0;
    for q in &tuples {
        let b = graph_template(q).map_err(|e| e.to_string())?;
        if b.case == TheoremCase::Main1 {
            continue;
        }
        checked += 1;
        let c = contains(&b.upper, &b.lower, 12).map_err(|e| e.to_string())?;
        if !c.holds {
            bad.push(format!("({}, {}, {}, {}): {:?}", q.l_c, q.r_c, q.l_cap, q.r_cap, c.counterexample));
        }
    }
    if bad.is_empty() && checked >= 5 {
        Ok(format!("{checked} bounded tuples nested"))
    } else {
        Err(bad.join("; "))
    }
}

fn criterion_7(fixtures: &[(&str, &Fixture)], reports: &mut Vec<SampleReport>) -> Verdict {
    let mut lines = Vec::new();
    let mut failed = false;
    for (name, f) in fixtures {
        let (graph_name, graph) = f.checked_graph();
        let cfg = SamplingConfig::default();
        let start = Instant::now();
        let report = sample_itineraries(&f.flow, f.sample_box, &[(graph_name, &graph)], cfg).map_err(|e| e.to_string())?;
        let (ok, total) = report.acceptance[graph_name];
        lines.push(format!("{name}: {ok}/{total} accepted by {graph_name} in {:.1?}", start.elapsed()));
        if !report.counterexamples.is_empty() {
            failed = true;
            let path = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(format!("counterexamples_{name}.csv"));
            let file = std::fs::File::create(&path).map_err(|e| e.to_string())?;
            report.write_counterexamples_csv(file).map_err(|e| e.to_string())?;
            lines.push(format!("written to {}", path.display()));
        }
        reports.push(report);
    }
    if failed {
        Err(lines.join("; "))
    } else {
        Ok(lines.join("; "))
    }
}

fn criterion_8(equal: &Fixture) -> Verdict {
    let (_, graph) = equal.checked_graph();
    let mut total = 0;
    let mut misses = Vec::new();
    let cfg = ShootingConfig::default();
    for n in 1..=6 {
        for w in graph.words(n) {
            total += 1;
            let r = realize_word(&equal.flow, &w, &graph, equal.sample_box, cfg).map_err(|e| e.to_string())?;
            if r.initial.is_none() || !r.verified {
                misses.push(format!("{w} (best prefix {}, {} evaluations)", r.best_prefix, r.evaluations));
            }
        }
    }
    let rate = misses.len() as f64 / total as f64;
    let text = format!("{}/{total} words realized, budget {} per word", total - misses.len(), cfg.budget);
    let text = if misses.is_empty() { text } else { format!("{text}; missed {}", misses.join(", ")) };
    if rate <= 0.05 {
        Ok(text)
    } else {
        Err(text)
    }
}

fn criterion_9(fixtures: &[(&str, &Fixture)], reports: &[SampleReport]) -> Verdict {
    let residual = reports.iter().flat_map(|r| &r.orbits).map(|o| o.energy_residual).fold(0.0, f64::max);
    let mut bad = Vec::new();
    if residual >= 1e-9 {
        bad.push(format!("energy residual {residual:.3e}"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut round_trip = 0.0f64;
    let mut tested = 0;
    let mut attempts = 0;
    while tested < 100 && attempts < 10_000 {
        attempts += 1;
        let f = fixtures[tested % fixtures.len()].1;
        let b = f.sample_box;
        let side = if rng.gen_bool(0.5) { Side::L } else { Side::R };
        let p = SectionPoint::new(side, rng.gen_range(b.v_min..b.v_max), rng.gen_range(1e-3..b.r_max));
        let Ok(back) = f.flow.poincare_backward(&p) else { continue };
        let Ok(fwd) = f.flow.poincare_forward(&back.point) else { continue };
        round_trip = round_trip.max(fwd.point.distance(&p));
        tested += 1;
    }
    if tested < 100 || round_trip > 1e-8 {
        bad.push(format!("P∘P⁻¹ on {tested} points, worst {round_trip:.3e}"));
    }

    // orbits on the collision manifold
    let mut drop = 0.0f64;
    let mut orbits = 0;
    for (_, f) in fixtures {
        let sys = &f.flow.system;
        let (vc, vd) = (f.flow.equilibria.c.state.v, f.flow.equilibria.d.state.v);
        let mut done = 0;
        while done < 40 {
            let s = rng.gen_range(0.05..std::f64::consts::PI - 0.05);
            let v = rng.gen_range(vc..vd);
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let Some(w) = sys.shape_velocity_for(0.0, v, s, sign) else { continue };
            let mut last = v;
            let walk = f.flow.walk_with(&McGeheeState::new(0.0, v, s, w), 1.0, 8, |x| {
                drop = drop.max(last - x.v);
                last = x.v;
            });
            if walk.is_ok() {
                done += 1;
            }
        }
        orbits += done;
    }
    if drop > 1e-10 {
        bad.push(format!("v decreased by {drop:.3e} on M"));
    }
    let summary = format!(
        "residual {residual:.1e} over {} orbits; P∘P⁻¹ worst {round_trip:.1e} on {tested} points; largest v drop on {orbits} M orbits {drop:.1e}",
        reports.iter().map(|r| r.orbits.len()).sum::<usize>()
    );
    if bad.is_empty() {
        Ok(summary)
    } else {
        Err(format!("{}; {summary}", bad.join("; ")))
    }
}

fn random_graph(rng: &mut ChaCha8Rng) -> SoficGraph {
    let n = rng.gen_range(1..=6);
    let mut g = SoficGraph::new();
    for i in 0..n {
        g.add_vertex(&format!("v{i}"), if rng.gen_bool(0.5) { Side::L } else { Side::R });
    }
    for a in 0..n {
        for b in 0..n {
            if rng.gen_bool(0.4) {
                g.add_edge(a, b);
            }
        }
    }
    g
}

/// Words of vertex paths of length `n`, optionally restricted to paths whose
/// ends extend `pad` steps backward and forward.
fn path_words(g: &SoficGraph, n: usize, pad: Option<usize>) -> BTreeSet<String> {
    let k = g.len();
    let reach = |forward: bool, steps: usize| -> Vec<bool> {
        // vertices with a walk of exactly `steps` edges leaving (or entering) them
        let mut ok = vec![true; k];
        for _ in 0..steps {
            ok = (0..k)
                .map(|v| {
                    (0..k).any(|u| {
                        let edge = if forward { g.has_edge(v, u) } else { g.has_edge(u, v) };
                        edge && ok[u]
                    })
                })
                .collect();
        }
        ok
    };
    let (fwd, bwd) = match pad {
        Some(p) => (reach(true, p), reach(false, p)),
        None => (vec![true; k], vec![true; k]),
    };
    let mut out = BTreeSet::new();
    let mut stack: Vec<(Vec<usize>, String)> = (0..k).filter(|&v| bwd[v]).map(|v| (vec![v], g.labels[v].letter().to_string())).collect();
    while let Some((path, word)) = stack.pop() {
        let last = *path.last().unwrap();
        if path.len() == n {
            if fwd[last] {
                out.insert(word);
            }
            continue;
        }
        for u in 0..k {
            if g.has_edge(last, u) {
                let mut p = path.clone();
                p.push(u);
                stack.push((p, format!("{word}{}", g.labels[u].letter())));
            }
        }
    }
    out
}

fn criterion_10() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut bad = Vec::new();
    for i in 0..50 {
        let g = random_graph(&mut rng);
        let s = g.simplify();
        for n in 1..=8 {
            let paths = path_words(&g, n, None);
            for bits in 0..1u32 << n {
                let w: String = (0..n).map(|j| if bits >> j & 1 == 1 { 'R' } else { 'L' }).collect();
                if g.accepts(&w) != paths.contains(&w) {
                    bad.push(format!("graph {i}: accepts({w})"));
                }
            }
            // simplification keeps exactly the words of bi-infinite paths
            if path_words(&s, n, None) != path_words(&g, n, Some(g.len())) {
                bad.push(format!("graph {i}: simplify at length {n}"));
            }
        }
    }
    if bad.is_empty() {
        Ok("50 graphs agree with enumeration".into())
    } else {
        bad.truncate(5);
        Err(bad.join("; "))
    }
}

fn main() {
    let start = Instant::now();
    let mut results: Vec<(usize, Verdict)> = Vec::new();
    let mut record = |n: usize, v: Verdict| {
        let (tag, text) = match &v {
            Ok(t) => ("PASS", t),
            Err(t) => ("FAIL", t),
        };
        println!("criterion {n:2}: {tag} {text} [{:.0?}]", start.elapsed());
        results.push((n, v));
    };

    let triples = random_triples(20);
    record(1, criterion_1(&triples));
    record(2, criterion_2(&triples));
    let equal = Fixture::new(MassTriple::equal());
    let unequal = Fixture::new(MassTriple::new(1.0, 2.0, 3.0).unwrap());
    record(3, criterion_3(&equal));
    record(4, criterion_4());
    record(5, criterion_5(&equal));
    record(6, criterion_6(&unequal.analysis.quantities));
    let fixtures = [("equal", &equal), ("1-2-3", &unequal)];
    let mut reports = Vec::new();
    record(7, criterion_7(&fixtures, &mut reports));
    record(8, criterion_8(&equal));
    record(9, criterion_9(&fixtures, &reports));
    record(10, criterion_10());

    let failed: Vec<usize> = results.iter().filter(|(_, v)| v.is_err()).map(|(n, _)| *n).collect();
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
    println!("all criteria passed");
}

