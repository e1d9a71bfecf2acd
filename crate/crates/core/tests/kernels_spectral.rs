use critgraph::kernels::{build_weight_matrix, condition_diagnostics, KernelFamily, KernelSpec, WeightScheme};
use critgraph::linalg::SymMatrix;
use critgraph::spectral::{leading_eigenpair, resolvent_mean, resolvent_second_moment};
use critgraph::stats::mean_se;
use proptest::prelude::*;

fn arb_kernel() -> impl Strategy<Value = KernelSpec> {
    prop_oneof![
        (0.1f64..3.0).prop_map(KernelSpec::constant),
        (0.1f64..3.0).prop_map(KernelSpec::min),
        (0.1f64..3.0).prop_map(KernelSpec::max),
        (0.1f64..3.0, 0.5f64..2.0).prop_map(|(c, a)| KernelSpec { family: KernelFamily::SumPow { a }, c }),
        (0.1f64..3.0, 0.05f64..0.6).prop_map(|(c, a)| KernelSpec { family: KernelFamily::MaxNegPow { a }, c }),
        (0.1f64..3.0, 0.05f64..0.3).prop_map(|(c, a)| KernelSpec { family: KernelFamily::AbsDiffNegPow { a }, c }),
        (0.1f64..3.0, 0.1f64..1.0, 0.5f64..2.0).prop_map(|(c, eta, a)| KernelSpec { family: KernelFamily::EtaPlusMaxPow { eta, a }, c }),
    ]
}

fn arb_scheme() -> impl Strategy<Value = WeightScheme> {
    prop_oneof![Just(WeightScheme::Grid), Just(WeightScheme::UniformOrderStat), Just(WeightScheme::CellAverage)]
}

fn seed_for(s: WeightScheme, seed: u64) -> Option<u64> {
    (s == WeightScheme::UniformOrderStat).then_some(seed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn weights_are_symmetric_and_nonnegative(w in arb_kernel(), scheme in arb_scheme(), n in 2usize..40, seed in any::<u64>()) {
        let wm = build_weight_matrix(&w, Some(&w.scaled(-0.5)), n, scheme, seed_for(scheme, seed)).unwrap();
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(wm.get(i, j), wm.get(j, i));
                prop_assert!(wm.get(i, j) >= 0.0 && wm.get(i, j).is_finite());
            }
        }
    }

    #[test]
    fn larger_window_parameter_dominates(w in arb_kernel(), scheme in arb_scheme(), n in 2usize..40, seed in any::<u64>(),
                                          lo in -3.0f64..3.0, gap in 0.0f64..3.0) {
        let s = seed_for(scheme, seed);
        let a = build_weight_matrix(&w, Some(&w.scaled(lo)), n, scheme, s).unwrap();
        let b = build_weight_matrix(&w, Some(&w.scaled(lo + gap)), n, scheme, s).unwrap();
        for i in 0..n {
            for j in 0..n {
                prop_assert!(b.get(i, j) >= a.get(i, j));
            }
        }
    }

    #[test]
    fn perron_residual_and_gap(n in 5usize..120, shift in 0.05f64..2.0) {
        // bounded away from zero: shift + x ^ y
        let k = SymMatrix::from_fn(n, |i, j| shift + (i.min(j) as f64 + 0.5) / n as f64);
        let s = leading_eigenpair(&k).unwrap();
        prop_assert!(s.residual <= 1e-8 * s.top_eigenvalue);
        prop_assert!(s.second_abs_eigenvalue < s.top_eigenvalue);
        prop_assert!(s.psi.iter().all(|p| *p > 0.0));
        let norm = s.psi.iter().map(|p| p * p).sum::<f64>() / n as f64;
        prop_assert!((norm - 1.0).abs() < 1e-10);
    }
}

#[test]
fn constant_kernel_resolvent_moments() {
    let c = 0.4;
    let n = 500;
    let k = SymMatrix::from_fn(n, |_, _| c);
    let g = resolvent_mean(&k).unwrap();
    let g2 = resolvent_second_moment(&k, &g).unwrap();
    for i in 0..n {
        assert!((g[i] - 1.0 / (1.0 - c)).abs() < 1e-9);
        // continuum fixed point, up to the O(1/n) offspring-variance correction
        let cont = (2.0 * g[i] - 1.0 + c * c * g[i] * g[i]) / (1.0 - c);
        assert!((g2[i] - cont).abs() < 5.0 / n as f64 * cont, "{} vs {cont}", g2[i]);
        assert!(g2[i] >= g[i] * g[i]);
    }
}

#[test]
fn window_deviation_shrinks_with_n() {
    let w = KernelSpec::min(std::f64::consts::PI * std::f64::consts::PI / 4.0);
    let h = w.scaled(1.0);
    let reps = 16u64;
    let dev: Vec<(f64, f64)> = [250usize, 500, 1000, 2000]
        .iter()
        .map(|&n| {
            let d: Vec<f64> = (0..reps)
                .map(|s| {
                    let wm = build_weight_matrix(&w, Some(&h), n, WeightScheme::UniformOrderStat, Some(s)).unwrap();
                    condition_diagnostics(&wm, &w, Some(&h), 0.25, &[]).unwrap().norm_deviation
                })
                .collect();
            mean_se(&d)
        })
        .collect();
    for k in 1..dev.len() {
        let ((a, sa), (b, sb)) = (dev[k - 1], dev[k]);
        assert!(b <= a + 3.0 * (sa * sa + sb * sb).sqrt(), "{dev:?}");
    }
    assert!(dev[3].0 < dev[0].0, "{dev:?}");
    // the grid scheme has no position noise, so only the H term could survive, and it cancels
    let wm = build_weight_matrix(&w, Some(&h), 500, WeightScheme::Grid, None).unwrap();
    assert!(condition_diagnostics(&wm, &w, Some(&h), 0.25, &[]).unwrap().norm_deviation < 1e-9);
}
