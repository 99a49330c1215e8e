use loggrowth_core::estimators::{pair_weight, psi_naive, psi_paired, psi_plugin, weight_discrepancy};
use loggrowth_core::kde::build_kde;
use loggrowth_core::optim::{project, tail_average};
use loggrowth_core::pvcore::{pole, Interval};
use loggrowth_core::quad::{integrate, QuadConfig};
use loggrowth_core::{DensityId, NoiseDensity};
use proptest::prelude::*;

fn density() -> impl Strategy<Value = DensityId> {
    prop_oneof![
        Just(DensityId::D1),
        Just(DensityId::D2),
        Just(DensityId::D3),
        Just(DensityId::D4),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn projection_is_a_one_lipschitz_retraction(
        lo in -2.0f64..0.0, w in 0.0f64..1.0, x in -5.0f64..5.0, y in -5.0f64..5.0,
    ) {
        let basin = Interval::new(lo, lo + w).unwrap();
        let (px, py) = (project(x, basin), project(y, basin));
        prop_assert!((px - py).abs() <= (x - y).abs());
        prop_assert!(basin.contains(px));
        prop_assert_eq!(project(px, basin), px);
    }

    #[test]
    fn pairing_is_symmetric_under_reflection(
        id in density(), dk in -0.1f64..0.1, u in -1.0f64..1.0, e in -6.0f64..-1.0,
    ) {
        let d = NoiseDensity::builtin(id);
        let k = [-0.835, -0.928, -0.930, -0.969][id as usize] + dk;
        let p = pole(k);
        let r = (p - 0.5).min(1.5 - p);
        let b = p + u * r;
        let eps = 10f64.powf(e);
        let mirror = 2.0 * p - b;
        let a = psi_paired(b, k, eps, &d).unwrap();
        let m = psi_paired(mirror, k, eps, &d).unwrap();
        if (mirror - p).abs() == (b - p).abs() {
            // an exactly reflected pair gives the same bits
            prop_assert_eq!(a.to_bits(), m.to_bits());
        } else {
            // otherwise only the rounding of 2p - b separates them
            prop_assert!((a - m).abs() <= 1e-13 * a.abs().max(1.0), "{} vs {}", a, m);
        }
        let w = pair_weight(&d, b, k).unwrap() + pair_weight(&d, 2.0 * p - b, k).unwrap();
        prop_assert!((w - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn kde_weight_discrepancy_is_odd(seed in 0u64..1000, n in 200usize..3000, u in 0.0f64..1.0) {
        let d = NoiseDensity::builtin(DensityId::D2);
        let kde = build_kde(&d.sample(n, seed), 2, 1.0, (0.5, 1.5)).unwrap();
        let k = -0.928;
        let p = pole(k);
        let b = p + u * 0.2;
        let s = weight_discrepancy(&kde, &d, b, k).unwrap() + weight_discrepancy(&kde, &d, 2.0 * p - b, k).unwrap();
        prop_assert!(s.abs() <= 1e-14, "{}", s);
    }

    #[test]
    fn plugin_with_the_true_density_is_the_paired_estimator(
        u in -1.0f64..1.0, e in -5.0f64..-1.0,
    ) {
        // with ρ̂ = ρ and R = δ_K the two definitions coincide
        let d = NoiseDensity::builtin(DensityId::D3);
        let k = -0.93;
        let p = pole(k);
        let r = (p - 0.5).min(1.5 - p);
        let b = p + u * r;
        let eps = 10f64.powf(e);
        let a = psi_plugin(b, k, eps, &d, r).unwrap();
        let c = psi_paired(b, k, eps, &d).unwrap();
        prop_assert!((a - c).abs() <= 1e-12 * c.abs().max(1.0));
    }

    #[test]
    fn naive_estimator_is_odd_in_the_offset(b in 0.5f64..1.5, k in -1.5f64..-0.7, e in -6.0f64..0.0) {
        let eps = 10f64.powf(e);
        let v = psi_naive(b, k, eps);
        let p = pole(k);
        // b ψ is odd around the pole once the b factor is divided out
        let s = b - p;
        let mirror = psi_naive(p - s, k, eps) / (p - s);
        prop_assert!((v / b + mirror).abs() <= 1e-9 * (v / b).abs().max(1.0));
    }

    #[test]
    fn quadrature_is_exact_on_cubics(
        c in prop::array::uniform4(-3.0f64..3.0), a in -2.0f64..0.0, w in 0.1f64..3.0,
    ) {
        let b = a + w;
        let f = |x: f64| c[0] + x * (c[1] + x * (c[2] + x * c[3]));
        let anti = |x: f64| x * (c[0] + x * (c[1] / 2.0 + x * (c[2] / 3.0 + x * c[3] / 4.0)));
        let got = integrate(f, a, b, &[], &QuadConfig::default()).checked().unwrap();
        prop_assert!((got - (anti(b) - anti(a))).abs() <= 1e-12 * (1.0 + got.abs()));
    }

    #[test]
    fn tail_average_lies_within_the_window(v in prop::collection::vec(-2.0f64..2.0, 1..200)) {
        let t = tail_average(&v);
        let w = &v[v.len() / 2..];
        let lo = w.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(t >= lo - 1e-12 && t <= hi + 1e-12);
    }
}
