use critgraph::graphgen::{sample_rank_one, Graph, RankOneMode};
use critgraph::graphstats::{component_metric, components, distance_stats, susceptibilities};
use critgraph::stats::quantile_sorted;
use proptest::prelude::*;

fn arb_graph() -> impl Strategy<Value = Graph> {
    (1usize..40).prop_flat_map(|n| {
        prop::collection::vec((0..n, 0..n), 0..(2 * n)).prop_map(move |raw| {
            let mut e: Vec<(usize, usize)> = raw.into_iter().filter(|(a, b)| a != b).map(|(a, b)| (a.min(b), a.max(b))).collect();
            e.sort_unstable();
            e.dedup();
            Graph::new(n, e).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn partition_and_surplus(g in arb_graph()) {
        let cs = components(&g);
        prop_assert_eq!(cs.sizes.iter().sum::<usize>(), g.n);
        prop_assert_eq!(cs.edges.iter().sum::<usize>(), g.edge_count());
        let mut seen = vec![false; g.n];
        for (c, comp) in cs.components.iter().enumerate() {
            prop_assert_eq!(comp.len(), cs.sizes[c]);
            for &v in comp {
                prop_assert!(!seen[v]);
                seen[v] = true;
                prop_assert_eq!(cs.label[v], c);
            }
            // surplus is usize, so nonnegativity is the identity below
            prop_assert_eq!(cs.surplus[c] + cs.sizes[c], cs.edges[c] + 1);
        }
        prop_assert!(seen.iter().all(|s| *s));
        for &(a, b) in &g.edges {
            prop_assert_eq!(cs.label[a], cs.label[b]);
        }
        prop_assert!(cs.sizes.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn susceptibility_inequalities(g in arb_graph()) {
        let cs = components(&g);
        let s = susceptibilities(&cs, &[1, 2, 3]);
        prop_assert!((s[0] - 1.0).abs() < 1e-12);
        prop_assert!(s[1] * s[1] <= s[0] * s[2] * (1.0 + 1e-12));
        let d = distance_stats(&g);
        prop_assert!(d.mean_distance_sum >= 0.0);
        prop_assert!(d.mean_distance_sum <= d.diameter as f64 * s[1] + 1e-9);
        prop_assert_eq!(d.diameter, d.component_diameters.iter().copied().max().unwrap_or(0));
    }

    #[test]
    fn component_spaces_are_metric(g in arb_graph()) {
        let cs = components(&g);
        let space = component_metric(&g, 0, 0.5).unwrap();
        prop_assert_eq!(space.m, cs.sizes[0]);
        prop_assert!(space.check_metric(1e-9).is_ok());
        prop_assert!((space.total_mass() - 0.5 * cs.sizes[0] as f64).abs() < 1e-12);
    }
}

#[test]
fn rank_one_critical_largest_component_median() {
    let n = 10_000usize;
    let nf = n as f64;
    let x = vec![nf.powf(-2.0 / 3.0); n];
    let q = nf.powf(1.0 / 3.0);
    let mut r: Vec<f64> = (0..500u64)
        .map(|s| {
            let g = sample_rank_one(&x, q, RankOneMode::Direct, s).unwrap().graph;
            components(&g).largest() as f64 / nf.powf(2.0 / 3.0)
        })
        .collect();
    r.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let med = quantile_sorted(&r, 0.5);
    assert!((0.5..=2.5).contains(&med), "median {med}");
}

#[test]
fn within_component_weight_ratio_concentrates() {
    // x_i = n^{-2/3} (1 + u_i), an inhomogeneous critical rank-one graph
    let n = 10_000usize;
    let nf = n as f64;
    let base = nf.powf(-2.0 / 3.0);
    let x: Vec<f64> = (0..n).map(|i| base * (1.0 + (i as f64 + 0.5) / nf)).collect();
    let s2: f64 = x.iter().map(|v| v * v).sum();
    let s3: f64 = x.iter().map(|v| v * v * v).sum();
    let q = 1.0 / s2;
    let mut r: Vec<f64> = (0..200u64)
        .map(|s| {
            let g = sample_rank_one(&x, q, RankOneMode::Direct, 1000 + s).unwrap().graph;
            let cs = components(&g);
            let c1 = &cs.components[0];
            let a: f64 = c1.iter().map(|&v| x[v] * x[v]).sum();
            let b: f64 = c1.iter().map(|&v| x[v]).sum();
            a / b * s2 / s3
        })
        .collect();
    r.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let med = quantile_sorted(&r, 0.5);
    assert!((0.8..=1.2).contains(&med), "median {med}");
}
