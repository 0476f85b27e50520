// SPDX-License-Identifier: Apache-2.0

use proptest::prelude::*;

use super::*;
use ReportKind::*;

fn req(kinds: &[ReportKind]) -> BTreeSet<ReportKind> {
    kinds.iter().copied().collect()
}

fn plan_of(kinds: &[ReportKind]) -> RetrievalPlan {
    RetrievalPlan {
        task: "t".into(),
        steps: kinds.iter().map(|&kind| PlanStep { kind, goal: String::new(), inputs: vec![] }).collect(),
    }
}

fn mean_words<'a>(texts: impl Iterator<Item = &'a str>) -> f64 {
    let counts: Vec<usize> = texts.map(|t| t.split_whitespace().count()).collect();
    counts.iter().sum::<usize>() as f64 / counts.len() as f64
}

#[test]
fn proposed_graph_has_every_kind_and_is_well_formed() {
    let g = default_graph(Profile::Proposed);
    assert_eq!(g.nodes.len(), 8);
    assert!(g.check().is_empty(), "{:?}", g.check());
    for (a, b) in [(Max, Clk), (Clk, Max), (Max, Wire), (Wire, Max), (Max, XtalkMax), (XtalkMax, Max), (XtalkMax, Lc), (Lc, XtalkMax), (Wire, XtalkMax), (XtalkMax, Wire)] {
        assert!(g.edge(a, b).is_some(), "{a} -> {b}");
    }
    assert_eq!(g.edge(XtalkMax, Lc).unwrap().relation.split(" and flag").next().unwrap(), "find the logic constraints on the aggressor and victim nets");
}

#[test]
fn set1_has_no_information() {
    let g = default_graph(Profile::Set1);
    assert_eq!(g.nodes.len(), 8);
    assert!(g.nodes.iter().all(|n| n.description.is_empty()));
    assert!(g.edges.is_empty());
}

#[test]
fn description_budgets() {
    let lim = default_graph(Profile::Set4);
    let det = default_graph(Profile::Proposed);
    let checks = [
        (mean_words(lim.nodes.iter().map(|n| n.description.as_str())), 12.5),
        (mean_words(lim.edges.iter().map(|e| e.relation.as_str())), 8.0),
        (mean_words(det.nodes.iter().map(|n| n.description.as_str())), 42.5),
        (mean_words(det.edges.iter().map(|e| e.relation.as_str())), 20.0),
    ];
    for (got, want) in checks {
        assert!((got - want).abs() <= 2.0, "{got} vs {want}");
    }
}

#[test]
fn profiles_are_monotone() {
    let full = default_graph(Profile::Proposed);
    for p in Profile::ALL {
        let g = default_graph(p);
        for e in &g.edges {
            let f = full.edge(e.from, e.to).expect("edge kept under proposed");
            assert!(f.relation.split_whitespace().count() >= e.relation.split_whitespace().count());
        }
        for n in &g.nodes {
            if !n.description.is_empty() {
                assert!(!full.node(n.kind).unwrap().description.is_empty());
            }
        }
    }
}

#[test]
fn validate_plan_examples() {
    let m3 = req(&[Max, XtalkMax, Lc]);
    let p = plan_of(&[Max, XtalkMax, Lc]);
    assert_eq!(validate_plan(&p, &default_graph(Profile::Proposed), &m3), PlanVerdict::Valid);
    match validate_plan(&p, &default_graph(Profile::Set1), &m3) {
        PlanVerdict::Invalid { missing_edges, .. } => assert_eq!(missing_edges, vec![(Max, XtalkMax), (XtalkMax, Lc)]),
        v => panic!("{v:?}"),
    }
    match validate_plan(&plan_of(&[Max]), &default_graph(Profile::Proposed), &req(&[Max, Wire])) {
        PlanVerdict::Invalid { missing_kinds, missing_edges, .. } => {
            assert_eq!(missing_kinds, vec![Wire]);
            assert!(missing_edges.is_empty());
        }
        v => panic!("{v:?}"),
    }
    assert!(!validate_plan(&plan_of(&[]), &default_graph(Profile::Proposed), &req(&[])).is_valid());
}

#[test]
fn plan_route_examples() {
    let g = default_graph(Profile::Proposed);
    assert_eq!(plan_route(&req(&[Max, Clk]), "m1", &g).unwrap().kinds(), vec![Max, Clk]);
    assert_eq!(plan_route(&req(&[Max, Wire]), "m2", &g).unwrap().kinds(), vec![Max, Wire]);
    assert_eq!(plan_route(&req(&[Max, XtalkMax, Lc]), "m3", &g).unwrap().kinds(), vec![Max, XtalkMax, Lc]);
    let m4 = plan_route(&req(&[Max, Wire, XtalkMax, Lc]), "m4", &g).unwrap();
    assert_eq!(m4.kinds(), vec![Max, XtalkMax, Wire, Lc]);
    assert_eq!(m4.steps[2].inputs, vec![1]);
    assert_eq!(plan_route(&req(&[Max]), "m6", &g).unwrap().kinds(), vec![Max]);
    assert!(matches!(plan_route(&req(&[Max, Clk]), "m1", &default_graph(Profile::Set1)), Err(TdrgError::NoValidPlan { .. })));
}

#[test]
fn set1_plans_nothing_and_set2_only_single_kinds() {
    let kinds_sets: [&[ReportKind]; 6] =
        [&[Max], &[Max, Clk], &[Max, Wire], &[Max, XtalkMax, Lc], &[Max, Wire, XtalkMax, Lc], &[Wire]];
    for ks in kinds_sets {
        assert!(plan_route(&req(ks), "", &default_graph(Profile::Set1)).is_err());
        let set2 = plan_route(&req(ks), "", &default_graph(Profile::Set2));
        assert_eq!(set2.is_ok(), ks.len() == 1, "{ks:?}");
    }
}

/// Enumerates every walk of length `len` in lexicographic enum order.
fn walks(len: usize) -> impl Iterator<Item = Vec<ReportKind>> {
    let n = ReportKind::ALL.len();
    (0..n.pow(len as u32)).map(move |mut code| {
        let mut w = vec![Max; len];
        for slot in w.iter_mut().rev() {
            *slot = ReportKind::ALL[code % n];
            code /= n;
        }
        w
    })
}

fn brute_force_route(required: &BTreeSet<ReportKind>, g: &Tdrg) -> Option<Vec<ReportKind>> {
    for len in 1..=5 {
        for w in walks(len) {
            let start_ok = if required.contains(&Max) { w[0] == Max } else { required.contains(&w[0]) };
            if start_ok && validate_plan(&plan_of(&w), g, required).is_valid() {
                return Some(w);
            }
        }
    }
    None
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn planner_matches_exhaustive_search(mask in 1u8..=255, p in 0usize..7) {
        let required: BTreeSet<ReportKind> =
            ReportKind::ALL.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, k)| *k).collect();
        prop_assume!(required.len() <= 4);
        let g = default_graph(Profile::ALL[p]);
        let got = plan_route(&required, "", &g);
        if let Ok(plan) = &got {
            prop_assert!(validate_plan(plan, &g, &required).is_valid());
        }
        let want = brute_force_route(&required, &g);
        // Walks longer than five are out of the oracle's reach.
        if let Some(w) = want {
            prop_assert_eq!(got.map(|p| p.kinds()).ok(), Some(w));
        } else if let Ok(plan) = got {
            prop_assert!(plan.steps.len() > 5);
        }
    }
}

#[test]
fn graph_json_round_trips() {
    let g = default_graph(Profile::Set5);
    let text = serde_json::to_string(&g).unwrap();
    assert_eq!(serde_json::from_str::<Tdrg>(&text).unwrap(), g);
    assert!("SET3".parse::<Profile>().is_ok());
    assert!("set9".parse::<Profile>().is_err());
}
