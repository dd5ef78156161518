use std::f64::consts::PI;

use landau::experiments::{parse_key_values, Experiment, ExperimentConfig};
use landau::lattice::{assemble, gauge_shift, rasterize_domain, BoundaryCondition, GridDomain, Shape};
use landau::spectra::{count_below, dense_spectrum, riesz_mean, SpectrumSlice};
use landau::symbol::{
    landau_level_count, lcl_constant, legendre_transform, magnetic_symbol_2d, symbol_ratio, sup_ratio_closed_form, ConvexTable,
    FieldStrength, MomentOrder,
};
use proptest::prelude::*;

fn g(x: f64) -> MomentOrder {
    MomentOrder::new(x).unwrap()
}

fn fb(x: f64) -> FieldStrength {
    FieldStrength::new(x).unwrap()
}

fn slice(eigenvalues: Vec<f64>, cutoff: f64) -> SpectrumSlice {
    SpectrumSlice {
        cutoff,
        count: eigenvalues.len(),
        residual_norms: vec![0.0; eigenvalues.len()],
        eigenvalues,
        complete: true,
        seed: 0,
        pivot_margin: 1.0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn symbol_is_nondecreasing_in_lambda(b in 0.1f64..5.0, l1 in 0.0f64..40.0, dl in 0.0f64..10.0, gamma in 0.0f64..3.0) {
        let lo = magnetic_symbol_2d(fb(b), l1, g(gamma)).value;
        let hi = magnetic_symbol_2d(fb(b), l1 + dl, g(gamma)).value;
        prop_assert!(hi >= lo * (1.0 - 1e-14));
    }

    #[test]
    fn symbol_ratio_stays_below_sharp_constant(b in 0.1f64..5.0, lambda in 0.01f64..60.0, gamma in 0.0f64..2.5) {
        let r = symbol_ratio(fb(b), lambda, g(gamma));
        prop_assert!(r <= sup_ratio_closed_form(g(gamma)) * (1.0 + 1e-12));
    }

    #[test]
    fn zero_moment_excludes_the_level_itself(b in 0.1f64..5.0, k in 0usize..20) {
        let level = b * (2 * k + 1) as f64;
        prop_assert_eq!(landau_level_count(fb(b), level, g(0.0)), k);
        let at = magnetic_symbol_2d(fb(b), level, g(0.0)).value;
        prop_assert!((at - b / (2.0 * PI) * k as f64).abs() <= 1e-12 * (1.0 + at));
    }

    #[test]
    fn weak_field_symbol_approaches_classical(lambda in 1.0f64..10.0, gamma in 0.5f64..2.0) {
        let b = 1e-3;
        let classical = lcl_constant(g(gamma), 2).unwrap() * lambda.powf(gamma + 1.0);
        let magnetic = magnetic_symbol_2d(fb(b), lambda, g(gamma)).value;
        prop_assert!((magnetic - classical).abs() <= 1e-2 * classical);
    }

    #[test]
    fn riesz_mean_is_monotone(mut eig in prop::collection::vec(0.0f64..20.0, 1..30), l1 in 0.0f64..20.0, dl in 0.0f64..5.0, gamma in 0.0f64..2.0) {
        eig.sort_by(f64::total_cmp);
        let s = slice(eig, 30.0);
        let lo = riesz_mean(&s, l1, g(gamma)).unwrap();
        let hi = riesz_mean(&s, l1 + dl, g(gamma)).unwrap();
        prop_assert!(hi >= lo);
    }

    #[test]
    fn legendre_of_quadratic_is_quadratic(a in 0.1f64..5.0, p in 0.0f64..20.0) {
        // f(λ) = aλ² has transform p²/(4a); the grid contains the maximizer
        let step = 1.0 / (8.0 * a);
        let knots: Vec<f64> = (0..=1000).map(|k| k as f64 * step).collect();
        let table = ConvexTable::from_fn(knots, |l| a * l * l).unwrap();
        let v = legendre_transform(&table, (p * 4.0).round() / 4.0).unwrap();
        let q = (p * 4.0).round() / 4.0;
        prop_assert!((v.value - q * q / (4.0 * a)).abs() <= 1e-9 * (1.0 + v.value));
    }

    #[test]
    fn config_round_trips_through_key_values(seed in 0u64..1000, b in 0.1f64..4.0, flux in 1u32..40) {
        let text = format!("# comment\nB = {b}\nflux={flux}\n\n");
        let kv = parse_key_values(&text).unwrap();
        prop_assert_eq!(kv.get("B").cloned(), Some(b.to_string()));
        let overrides: Vec<(String, String)> = kv.into_iter().collect();
        let cfg = ExperimentConfig::new(Experiment::TorusVerify, None, &overrides, Some(seed)).unwrap();
        prop_assert_eq!(cfg.seed, seed);
        prop_assert_eq!(cfg.f64("B").unwrap(), b);
        prop_assert_eq!(cfg.usize("flux").unwrap(), flux as usize);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn counts_are_monotone_and_hermitian(b in 0.0f64..4.0, h in 0.15f64..0.3, l1 in 0.0f64..10.0, dl in 0.0f64..5.0) {
        let d = rasterize_domain(&Shape::Disk { radius: 1.2 }, h).unwrap();
        for bc in [BoundaryCondition::Dirichlet, BoundaryCondition::Neumann] {
            let op = assemble(&d, b, bc).unwrap();
            for (p, q, w) in op.edges() {
                prop_assert_eq!(op.entry(q, p), Some(w.conj()));
            }
            let lo = count_below(&op, l1).unwrap().count;
            let hi = count_below(&op, l1 + dl).unwrap().count;
            prop_assert!(lo <= hi);
        }
    }

    #[test]
    fn gauge_shift_preserves_spectrum(b in 0.0f64..4.0, seed in 0u64..1000) {
        let d = GridDomain::square(2.0, 0.2).unwrap();
        let op = assemble(&d, b, BoundaryCondition::Dirichlet).unwrap();
        let chi: Vec<f64> = (0..op.dim()).map(|i| ((i as u64 * 2654435761 + seed) % 1000) as f64 * 0.01).collect();
        let shifted = gauge_shift(&op, &chi).unwrap();
        let (e0, e1) = (dense_spectrum(&op), dense_spectrum(&shifted));
        for (x, y) in e0.iter().zip(&e1) {
            prop_assert!((x - y).abs() <= 1e-10 * x.abs().max(1.0));
        }
    }

    #[test]
    fn dirichlet_counts_stay_below_neumann(b in 0.0f64..3.0, lambda in 0.0f64..12.0) {
        let d = rasterize_domain(&Shape::l_shape(1.0), 0.2).unwrap();
        let nd = count_below(&assemble(&d, b, BoundaryCondition::Dirichlet).unwrap(), lambda).unwrap().count;
        let nn = count_below(&assemble(&d, b, BoundaryCondition::Neumann).unwrap(), lambda).unwrap().count;
        prop_assert!(nd <= nn);
    }
}
