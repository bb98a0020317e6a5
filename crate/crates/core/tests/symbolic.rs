use collinear::pullback::{half_plane_cells, schematic_arcs, PullbackCount, Quantities, SNAP};
use collinear::symbolic::*;
use collinear::Side;
use proptest::prelude::*;
use std::collections::BTreeSet;

fn q(l_c: u32, r_c: u32, l: u32, r: u32) -> Quantities {
    Quantities::exact(l_c, r_c, l, r).unwrap()
}

/// Brute force: every path of `n` vertices, collected as label words.
fn path_words(g: &SoficGraph, n: usize) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    fn go(g: &SoficGraph, v: usize, left: usize, w: &mut String, out: &mut BTreeSet<String>) {
        w.push(g.labels[v].letter());
        if left == 1 {
            out.insert(w.clone());
        } else {
            for &x in &g.succ[v] {
                go(g, x, left - 1, w, out);
            }
        }
        w.pop();
    }
    for v in 0..g.len() {
        go(g, v, n, &mut String::new(), &mut out);
    }
    out
}

fn all_words(n: usize) -> Vec<String> {
    (0..1usize << n)
        .map(|bits| (0..n).map(|i| if bits >> i & 1 == 1 { 'R' } else { 'L' }).collect())
        .collect()
}

fn is_full_shift(g: &SoficGraph) -> bool {
    g.len() == 2 && g.labels.contains(&Side::L) && g.labels.contains(&Side::R) && g.edge_count() == 4
}

#[test]
fn smallest_markov_case_is_the_full_shift() {
    let b = graph_template(&q(2, 2, 1, 1)).unwrap();
    assert_eq!(b.case, TheoremCase::Main1);
    let exact = b.exact.unwrap();
    assert!(is_full_shift(&exact.simplify()));
    for n in 1..=8 {
        assert_eq!(exact.words(n).len(), 1 << n);
    }
}

#[test]
fn classification_examples() {
    assert_eq!(classify(&q(2, 2, 1, 1)).unwrap(), TheoremCase::Main1);
    assert_eq!(classify(&q(4, 4, 3, 3)).unwrap(), TheoremCase::Main1);
    assert_eq!(classify(&q(5, 6, 2, 7)).unwrap(), TheoremCase::Main3);
    assert_eq!(classify(&q(3, 2, 5, 1)).unwrap(), TheoremCase::Main2First);
    assert_eq!(classify(&q(2, 3, 1, 5)).unwrap(), TheoremCase::Main2Second);
    assert_eq!(classify(&q(4, 3, 3, 2)).unwrap(), TheoremCase::Main3);
    let above = Quantities::new(4, 3, PullbackCount::AboveBudget { above_budget: 64 }, PullbackCount::Exact(2)).unwrap();
    assert_eq!(classify(&above).unwrap(), TheoremCase::Main2First);
}

#[test]
fn inconsistent_quantities_are_rejected() {
    assert!(Quantities::exact(2, 4, 1, 1).is_err());
    assert!(Quantities::exact(1, 2, 1, 1).is_err());
    assert!(Quantities::exact(3, 3, 0, 2).is_err());
}

#[test]
fn markov_graphs_obey_the_repeat_gap_rule() {
    for n in 1..=4u32 {
        let g = graph_template(&q(n + 1, n + 1, n, n)).unwrap().exact.unwrap();
        for len in 1..=10 {
            let expected: Vec<String> = all_words(len).into_iter().filter(|w| main1_rule(w, n as usize)).collect();
            let mut got = g.words(len);
            got.sort();
            let mut want = expected;
            want.sort();
            assert_eq!(got, want, "n = {n}, length {len}");
        }
    }
}

#[test]
fn alternating_blocks() {
    assert_eq!(alternating_block(Side::L, 2), "LR");
    assert_eq!(alternating_block(Side::R, 3), "RLR");
    assert_eq!(alternating_block(Side::L, 0), "");
}

#[test]
fn template_pairs_are_nested() {
    for t in [(5, 6, 2, 7), (3, 2, 5, 1), (2, 3, 1, 5), (4, 4, 2, 3), (4, 3, 7, 2), (3, 3, 1, 2), (3, 4, 2, 6)] {
        let b = graph_template(&q(t.0, t.1, t.2, t.3)).unwrap();
        let c = contains(&b.upper, &b.lower, 12).unwrap();
        assert!(c.holds, "{t:?}: {:?}", c.counterexample);
        assert!(c.exact);
    }
}

#[test]
fn second_case_mirrors_the_first() {
    let first = graph_template(&q(4, 3, 6, 2)).unwrap();
    let second = graph_template(&q(3, 4, 2, 6)).unwrap();
    assert_eq!(second.case, TheoremCase::Main2Second);
    assert!(same_language(&first.upper.swapped(), &second.upper, 10));
    assert!(same_language(&first.lower.swapped(), &second.lower, 10));
}

#[test]
fn premature_case_has_thirteen_cells() {
    let arcs = schematic_arcs(&q(5, 6, 2, 7));
    let total: usize = arcs.iter().map(|a| half_plane_cells(a, SNAP)).sum();
    assert_eq!(total, 13);
    let model = ChainModel::new(&q(5, 6, 2, 7), false);
    assert!(model.is_consistent());
    let upper = graph_template(&q(5, 6, 2, 7)).unwrap().upper;
    assert_eq!(upper.len(), 13);
}

#[test]
fn schematic_cells_match_template_vertices() {
    for t in [(2, 2, 1, 1), (3, 3, 2, 2), (4, 4, 3, 3), (4, 3, 5, 2), (3, 4, 2, 5), (4, 4, 2, 3)] {
        let quant = q(t.0, t.1, t.2, t.3);
        let arcs = schematic_arcs(&quant);
        let total: usize = arcs.iter().map(|a| half_plane_cells(a, SNAP)).sum();
        assert_eq!(total, graph_template(&quant).unwrap().upper.len(), "{t:?}");
    }
}

#[test]
fn containment_basics() {
    let g = graph_template(&q(4, 4, 3, 3)).unwrap().exact.unwrap();
    assert!(contains(&g, &g, 5).unwrap().holds);
    assert!(contains(&SoficGraph::full_shift(), &g, 5).unwrap().holds);
    let c = contains(&g, &SoficGraph::full_shift(), 6).unwrap();
    assert!(!c.holds);
    let w = c.counterexample.unwrap();
    assert!(!g.accepts(&w));
    assert!(contains(&g, &g, 0).is_err());
}

#[test]
fn containment_falls_back_past_the_state_cap() {
    let g = graph_template(&q(4, 4, 3, 3)).unwrap().exact.unwrap();
    assert!(contains_exact(&g, &g, 1).is_none());
    let c = contains(&g, &g, 4).unwrap();
    assert!(c.exact && !c.fell_back);
}

#[test]
fn membership_examples() {
    let full = SoficGraph::full_shift();
    assert!(full.accepts("LRLLRRLR"));
    assert!(full.accepts(""));
    assert!(!SoficGraph::new().accepts(""));
    assert!(!full.accepts("LXR"));
}

#[test]
fn simplify_collapses_duplicated_full_shift() {
    let mut g = SoficGraph::new();
    let ids: Vec<usize> = ["a", "b", "c", "d", "e"]
        .iter()
        .enumerate()
        .map(|(i, n)| g.add_vertex(n, if i % 2 == 0 { Side::L } else { Side::R }))
        .collect();
    for &a in &ids {
        for &b in &ids {
            g.add_edge(a, b);
        }
    }
    let s = g.simplify();
    assert!(is_full_shift(&s));
    assert_eq!(s.simplify(), s);
}

#[test]
fn exports() {
    let g = SoficGraph::full_shift();
    let dot = g.to_dot("full");
    assert!(dot.starts_with("digraph") && dot.contains("->"));
    let json = g.to_json();
    assert_eq!(json["vertices"].as_array().unwrap().len(), 2);
    assert_eq!(g.to_edge_labeled().len(), 2 + 4);
    let back: SoficGraph = serde_json::from_str(&serde_json::to_string(&g).unwrap()).unwrap();
    assert_eq!(back, g);
}

fn random_graph() -> impl Strategy<Value = SoficGraph> {
    (1usize..=6).prop_flat_map(|n| {
        (proptest::collection::vec(any::<bool>(), n), proptest::collection::vec(any::<bool>(), n * n)).prop_map(move |(labels, adj)| {
            let mut g = SoficGraph::new();
            for (i, &l) in labels.iter().enumerate() {
                g.add_vertex(&format!("v{i}"), if l { Side::R } else { Side::L });
            }
            for a in 0..n {
                for b in 0..n {
                    if adj[a * n + b] {
                        g.add_edge(a, b);
                    }
                }
            }
            g
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn membership_matches_path_enumeration(g in random_graph()) {
        for n in 1..=8 {
            let paths = path_words(&g, n);
            for w in all_words(n) {
                prop_assert_eq!(g.accepts(&w), paths.contains(&w));
            }
        }
    }

    #[test]
    fn simplify_preserves_bi_infinite_language(g in random_graph()) {
        // trimming drops words that cannot be extended both ways; compare the
        // extendable words of the original graph
        let s = g.simplify();
        let t = g.trim();
        for n in 1..=8 {
            prop_assert_eq!(path_words(&s, n), path_words(&t, n));
        }
        prop_assert_eq!(s.simplify(), s.clone());
        prop_assert!(s.len() <= t.len());
    }

    #[test]
    fn exact_containment_matches_enumeration(a in random_graph(), b in random_graph()) {
        let c = contains(&a, &b, 8).unwrap();
        let brute = (1..=8).all(|n| path_words(&b, n).iter().all(|w| a.accepts(w)));
        if c.holds {
            prop_assert!(brute);
        } else {
            prop_assert!(!a.accepts(c.counterexample.as_deref().unwrap()));
            prop_assert!(b.accepts(c.counterexample.as_deref().unwrap()));
        }
    }

    #[test]
    fn accepting_is_monotone_under_edges(g in random_graph(), extra in (0usize..6, 0usize..6)) {
        let mut h = g.clone();
        let (a, b) = (extra.0 % g.len(), extra.1 % g.len());
        h.add_edge(a, b);
        for w in g.language(6) {
            prop_assert!(h.accepts(&w));
        }
    }
}
