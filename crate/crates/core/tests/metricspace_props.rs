use critgraph::graphgen::Graph;
use critgraph::metricspace::{
    blob_statistics, distance_profile, glue_blobs, gh_distance_exact, scale, BlobSystem, Junctions, MetricMeasureSpace,
};
use critgraph::stats::mean_se;
use proptest::prelude::*;

/// Shortest-path closure of random positive weights: always a metric.
fn arb_space(max_m: usize, normalized: bool) -> impl Strategy<Value = MetricMeasureSpace> {
    (1..=max_m).prop_flat_map(move |m| {
        (prop::collection::vec(0.1f64..5.0, m * m), prop::collection::vec(0.05f64..1.0, m)).prop_map(move |(w, mass)| {
            let mut d = vec![0.0; m * m];
            for i in 0..m {
                for j in 0..m {
                    if i != j {
                        d[i * m + j] = w[i.min(j) * m + i.max(j)];
                    }
                }
            }
            for k in 0..m {
                for i in 0..m {
                    for j in 0..m {
                        let via = d[i * m + k] + d[k * m + j];
                        if via < d[i * m + j] {
                            d[i * m + j] = via;
                        }
                    }
                }
            }
            let total: f64 = mass.iter().sum();
            let mass = if normalized { mass.iter().map(|x| x / total).collect() } else { mass };
            MetricMeasureSpace::new(m, d, mass).unwrap()
        })
    })
}

fn arb_blob_system() -> impl Strategy<Value = BlobSystem> {
    (2usize..8).prop_flat_map(|m| {
        (
            prop::collection::vec(arb_space(4, true), m),
            prop::collection::vec(0.1f64..3.0, m),
            prop::collection::vec((0..m, 0..m), 0..m),
            any::<u64>(),
        )
            .prop_map(move |(blobs, weights, extra, seed)| {
                // a path keeps the superstructure connected
                let mut e: Vec<(usize, usize)> = (1..m).map(|i| (i - 1, i)).collect();
                e.extend(extra.into_iter().filter(|(a, b)| a != b).map(|(a, b)| (a.min(b), a.max(b))));
                e.sort_unstable();
                e.dedup();
                BlobSystem { superstructure: Graph::new(m, e).unwrap(), weights, blobs, junctions: Junctions::Sampled { seed } }
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn glued_space_is_metric_with_summed_mass(sys in arb_blob_system()) {
        let out = glue_blobs(&sys).unwrap();
        prop_assert_eq!(out.len(), 1);
        let s = &out[0].space;
        prop_assert!(s.check_metric(1e-9).is_ok());
        prop_assert_eq!(s.m, sys.blobs.iter().map(|b| b.m).sum::<usize>());
        let x: f64 = sys.weights.iter().sum();
        prop_assert!((s.total_mass() - x).abs() < 1e-9 * x);
        let st = blob_statistics(&sys);
        prop_assert!(st.tau >= 0.0);
        prop_assert!(st.diam_max >= 0.0);
    }

    #[test]
    fn adding_an_edge_never_lengthens(sys in arb_blob_system(), a in 0usize..8, b in 0usize..8) {
        let m = sys.superstructure.n;
        let (a, b) = (a % m, b % m);
        prop_assume!(a != b);
        let (a, b) = (a.min(b), a.max(b));
        prop_assume!(!sys.superstructure.edges.contains(&(a, b)));
        let before = glue_blobs(&sys).unwrap().remove(0).space;
        let mut more = sys.clone();
        let mut e = more.superstructure.edges.clone();
        e.push((a, b));
        more.superstructure = Graph::new(m, e).unwrap();
        let after = glue_blobs(&more).unwrap().remove(0).space;
        for i in 0..before.m {
            for j in 0..before.m {
                prop_assert!(after.d(i, j) <= before.d(i, j) + 1e-12);
            }
        }
    }

    #[test]
    fn gh_symmetric_and_zero_on_self(x in arb_space(5, false), y in arb_space(5, false)) {
        let dxy = gh_distance_exact(&x, &y).unwrap();
        let dyx = gh_distance_exact(&y, &x).unwrap();
        prop_assert!(dxy >= 0.0);
        prop_assert!((dxy - dyx).abs() < 1e-12);
        prop_assert!(gh_distance_exact(&x, &x).unwrap().abs() < 1e-12);
        // scaling both spaces scales the distance
        let d2 = gh_distance_exact(&scale(&x, 2.0, 1.0).unwrap(), &scale(&y, 2.0, 1.0).unwrap()).unwrap();
        prop_assert!((d2 - 2.0 * dxy).abs() < 1e-9);
    }

    #[test]
    fn gh_triangle_inequality(x in arb_space(4, false), y in arb_space(4, false), z in arb_space(4, false)) {
        let xy = gh_distance_exact(&x, &y).unwrap();
        let yz = gh_distance_exact(&y, &z).unwrap();
        let xz = gh_distance_exact(&x, &z).unwrap();
        prop_assert!(xz <= xy + yz + 1e-9);
    }

    #[test]
    fn gh_is_at_least_half_the_diameter_gap(x in arb_space(5, false), y in arb_space(5, false)) {
        let d = gh_distance_exact(&x, &y).unwrap();
        prop_assert!(d + 1e-12 >= 0.5 * (x.diameter() - y.diameter()).abs());
        prop_assert!(d <= 0.5 * x.diameter().max(y.diameter()) + 1e-12);
    }

    #[test]
    fn profile_scales_linearly(x in arb_space(5, false), a in 0.1f64..10.0, seed in any::<u64>()) {
        let p = distance_profile(&x, 200, seed).unwrap();
        let q = distance_profile(&scale(&x, a, 3.0).unwrap(), 200, seed).unwrap();
        for (u, v) in p.distances.iter().zip(&q.distances) {
            prop_assert!((v - a * u).abs() <= 1e-12 * (1.0 + v.abs()));
        }
        prop_assert!((q.total_mass - 3.0 * p.total_mass).abs() < 1e-9);
    }
}

#[test]
fn two_point_profile_is_bernoulli() {
    let s = MetricMeasureSpace::from_fn(2, |_, _| 1.0, vec![1.0, 1.0]).unwrap();
    let p = distance_profile(&s, 20_000, 5).unwrap();
    let (m, se) = mean_se(&p.distances);
    assert!((m - 0.5).abs() <= 4.0 * se, "mean {m} se {se}");
}
