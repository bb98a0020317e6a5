use collinear::dynamics::{Collinear, MassTriple};
use collinear::manifolds::{Arc, EndpointLabel, ManifoldConfig};
use collinear::pullback::*;
use collinear::symbolic::{graph_from_transitions, graph_template, sample_transitions, GraphMode, RegionSampling};
use collinear::{Flow, Result, SectionPoint, Side};
use std::sync::OnceLock;

/// Generation `k` alternates sides up to `k = 3`; generation 4 stays on `R`
/// for `u >= 0.5`, so the third pullback meets `E★` at `u = 0.5`.
struct Scripted;

fn scripted_side(k: usize, u: f64) -> Side {
    match k {
        0 | 2 => Side::L,
        1 | 3 => Side::R,
        _ if u < 0.5 => Side::L,
        _ => Side::R,
    }
}

fn scripted_point(k: usize, u: f64) -> SectionPoint {
    SectionPoint::new(scripted_side(k, u), u - 0.5 + 0.1 * k as f64, 0.3 * u * (1.0 - u))
}

impl BackwardFamily for Scripted {
    fn side(&self) -> Side {
        Side::L
    }

    fn trace(&self, u: f64, count: usize) -> Result<Vec<SectionPoint>> {
        Ok((0..count).map(|k| scripted_point(k, u)).collect())
    }

    fn start_limit(&self, k: u32) -> Result<(EndpointLabel, SectionPoint)> {
        let label = if k == 0 {
            EndpointLabel::StarD(Side::L)
        } else {
            EndpointLabel::Pullback { of: Side::L, k }
        };
        Ok((label, scripted_point(k as usize, 0.0)))
    }

    fn end_limit(&self, k: u32) -> Result<(EndpointLabel, SectionPoint)> {
        let label = if k == 1 {
            EndpointLabel::StarD(Side::R)
        } else {
            EndpointLabel::Pullback { of: Side::R, k: k - 1 }
        };
        Ok((label, scripted_point(k as usize, 1.0)))
    }

    fn ejection_arc(&self, _side: Side) -> Option<&Arc> {
        None
    }
}

#[test]
fn scripted_chain_crosses_at_the_third_pullback() {
    let config = ChainConfig::default();
    let trace = trace_chain(&Scripted, config).unwrap();
    assert_eq!(trace.count, PullbackCount::Exact(3));
    assert_eq!(trace.generations.len(), 3);
    assert_eq!(trace.inside, vec![true; 3]);
    let crossing = trace.crossing.as_ref().unwrap();
    assert_eq!(crossing.splits.len(), 1);
    assert!((crossing.splits[0] - 0.5).abs() < 1e-9);
    assert!(crossing.segments.iter().all(|s| s.case == SegmentCase::Case2));
    for (k, g) in trace.generations.iter().enumerate() {
        assert_eq!(g.side, scripted_side(k, 0.3));
        assert!(g.largest_gap() <= config.max_gap + 1e-12);
    }

    let pulled = pull_back_arc(&Scripted, crossing, 3, &config).unwrap();
    assert_eq!(pulled.len(), 2);
    assert_eq!(pulled[0].side, Side::L);
    assert_eq!(pulled[0].start_label, EndpointLabel::Pullback { of: Side::L, k: 4 });
    assert_eq!(pulled[0].end_label, EndpointLabel::StarD(Side::L));
    assert_eq!(pulled[1].side, Side::R);
    assert_eq!(pulled[1].start_label, EndpointLabel::StarD(Side::R));
    assert_eq!(pulled[1].end_label, EndpointLabel::Pullback { of: Side::R, k: 3 });
}

#[test]
fn budget_exhaustion_is_reported_as_a_lower_bound() {
    let config = ChainConfig {
        budget: 2,
        ..ChainConfig::default()
    };
    let trace = trace_chain(&Scripted, config).unwrap();
    assert_eq!(trace.count, PullbackCount::AboveBudget { above_budget: 2 });
    assert_eq!(trace.count.at_least(), 3);
    assert_eq!(trace.count.to_string(), ">2");
}

#[test]
fn untangle_removes_noise_loops() {
    let pts = [(0.0, 0.0), (1.0, 0.0), (1.1, 0.1), (0.9, 0.1), (1.05, -0.05), (2.0, 0.0)];
    let mut points: Vec<SectionPoint> = pts.iter().map(|&(x, y)| SectionPoint::new(Side::L, x, y)).collect();
    let mut params: Vec<f64> = (0..points.len()).map(|i| i as f64).collect();
    untangle(&mut points, &mut params, 8);
    let arc = Arc {
        side: Side::L,
        points: points.clone(),
        params,
        start_label: EndpointLabel::Free,
        end_label: EndpointLabel::Free,
        max_gap: 1.0,
        max_turn_degrees: 90.0,
    };
    assert_eq!(arc.self_intersections(), 0);
    assert_eq!(points.first().unwrap().u1, 0.0);
    assert_eq!(points.last().unwrap().u1, 2.0);
}

#[test]
fn arrangement_counts_simple_figures() {
    // a half-disc over M and a smaller one inside it
    let bump = |a: f64, b: f64, h: f64| -> Vec<(f64, f64)> {
        (0..=32)
            .map(|i| {
                let t = std::f64::consts::PI * i as f64 / 32.0;
                (0.5 * (a + b) - 0.5 * (b - a) * t.cos(), h * t.sin())
            })
            .collect()
    };
    assert_eq!(half_plane_cells(&[bump(-1.0, 1.0, 1.0)], SNAP), 2);
    assert_eq!(half_plane_cells(&[bump(-1.0, 1.0, 1.0), bump(-0.5, 0.5, 0.5)], SNAP), 3);
    assert_eq!(half_plane_cells(&[bump(-1.0, 1.0, 1.0), bump(0.5, 1.5, 0.5)], SNAP), 4);
    // a dangling segment adds no cell
    assert_eq!(half_plane_cells(&[bump(-1.0, 1.0, 1.0), vec![(0.0, 0.0), (0.0, 0.5)]], SNAP), 2);
}

#[test]
fn labeled_point_status_follows_the_alternating_lengths() {
    let q = Quantities::exact(4, 3, 5, 2).unwrap();
    assert_eq!(label_inside(EndpointLabel::StarD(Side::L), &q), Some(true));
    assert_eq!(label_inside(EndpointLabel::Pullback { of: Side::L, k: 2 }, &q), Some(true));
    assert_eq!(label_inside(EndpointLabel::Pullback { of: Side::L, k: 3 }, &q), Some(false));
    assert_eq!(label_inside(EndpointLabel::Pullback { of: Side::R, k: 1 }, &q), Some(true));
    assert_eq!(label_inside(EndpointLabel::Pullback { of: Side::R, k: 2 }, &q), Some(false));
    assert_eq!(label_inside(EndpointLabel::Free, &q), None);
}

fn equal() -> &'static (Flow, PullbackAnalysis) {
    static CELL: OnceLock<(Flow, PullbackAnalysis)> = OnceLock::new();
    CELL.get_or_init(|| {
        let flow = Flow::with_defaults(Collinear::with_default_energy(MassTriple::equal()).unwrap()).unwrap();
        let analysis = analyze(&flow, ManifoldConfig::default(), ChainConfig::default()).unwrap();
        (flow, analysis)
    })
}

#[test]
fn equal_masses_give_three_pullbacks_each() {
    let (_, a) = equal();
    assert_eq!(a.quantities.l_cap, PullbackCount::Exact(3));
    assert_eq!(a.quantities.r_cap, PullbackCount::Exact(3));
    assert_eq!((a.quantities.l_c, a.quantities.r_c), (4, 4));
    let prov = a.quantities.provenance.as_ref().unwrap();
    assert_eq!(prov.left_trace.len(), 4);
}

#[test]
fn equal_mass_partition_has_five_cells_per_side() {
    let (flow, a) = equal();
    let p = build_partition(a).unwrap();
    assert_eq!(p.arrangement_faces, [5, 5]);
    assert_eq!(p.regions_on(Side::L).count(), 5);
    assert_eq!(p.regions_on(Side::R).count(), 5);
    // the apex of E★ lies outside every chain region
    let top = a.seeds.el.points.iter().fold(a.seeds.el.points[0], |m, q| if q.u2 > m.u2 { *q } else { m });
    let above = SectionPoint::new(Side::L, top.u1, top.u2 * 1.5);
    assert_eq!(p.locate(&above).unwrap().id, "O_L");
    let t = sample_transitions(&p, flow, &RegionSampling::default()).unwrap();
    let g = graph_from_transitions(&p, &t, GraphMode::Exact).unwrap();
    let template = graph_template(&a.quantities).unwrap().exact.unwrap();
    assert_eq!(g.len(), template.len());
    for (x, y) in template.edges() {
        let (gx, gy) = (g.vertex(&template.names[x]).unwrap(), g.vertex(&template.names[y]).unwrap());
        assert!(g.has_edge(gx, gy), "{} -> {}", template.names[x], template.names[y]);
    }
    assert_eq!(g.edge_count(), template.edge_count());
}

#[test]
fn crossing_pullbacks_end_at_the_d_branch_points() {
    let (_, a) = equal();
    let chain = &a.left;
    let crossing = chain.crossing.as_ref().unwrap();
    assert!(crossing.segments.iter().any(|s| s.case == SegmentCase::Case2));
    // the ends of generation k are the labeled points of M
    for g in &chain.generations[1..] {
        for (label, p) in [(g.start_label, g.start()), (g.end_label, g.end())] {
            assert!(label.on_collision_manifold());
            assert!(p.u2.abs() < 1e-6, "{label} at r = {}", p.u2);
        }
    }
    // the first samples converge to the limits
    for g in &chain.generations[1..] {
        assert!(g.points[0].distance(&g.points[1]) < 1e-2);
    }
}
