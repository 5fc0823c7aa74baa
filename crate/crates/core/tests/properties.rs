use egp::fitting::ExcessSample;
use egp::inference::return_level;
use egp::io::{GridSpec, RunConfig};
use egp::models::{ModelFamily, ModelParams};
use proptest::prelude::*;

fn family() -> impl Strategy<Value = ModelFamily> {
    prop::sample::select(ModelFamily::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn return_levels_increase_with_period(
        fam in family(), kappa in 0.3f64..4.0, sigma in 0.2f64..5.0, xi in -0.4f64..0.8,
        zeta in 0.05f64..1.0, u in -5.0f64..5.0, t in 25.0f64..1000.0,
    ) {
        let p = ModelParams::new(fam, if fam.has_kappa() { kappa } else { 1.0 }, sigma, xi).unwrap();
        let lo = return_level(&p, t, zeta, u).unwrap();
        let hi = return_level(&p, 2.0 * t, zeta, u).unwrap();
        prop_assert!(lo > u);
        prop_assert!(hi > lo);
    }

    #[test]
    fn excess_counts_partition_the_data(data in prop::collection::vec(-10.0f64..10.0, 1..200), u in -10.0f64..10.0) {
        match ExcessSample::from_data(&data, u) {
            Ok(s) => {
                prop_assert_eq!(s.n_u, data.iter().filter(|&&x| x > u).count());
                prop_assert_eq!(s.n_total, data.len());
                prop_assert!(s.excesses.iter().all(|&e| e > 0.0));
                prop_assert!((s.zeta_hat - s.n_u as f64 / s.n_total as f64).abs() < 1e-15);
            }
            Err(_) => prop_assert!(data.iter().all(|&x| x <= u)),
        }
    }

    #[test]
    fn flags_override_file_values(file_seed in any::<u64>(), cli_seed in prop::option::of(any::<u64>()), alpha in 0.01f64..0.5) {
        let file = RunConfig { seed: Some(file_seed), alpha: Some(alpha), ..RunConfig::default() };
        let cli = RunConfig { seed: cli_seed, ..RunConfig::default() };
        let merged = cli.overlay(file);
        prop_assert_eq!(merged.seed, Some(cli_seed.unwrap_or(file_seed)));
        prop_assert_eq!(merged.alpha, Some(alpha));
    }

    #[test]
    fn quantile_grids_are_increasing_and_inside_the_data(
        data in prop::collection::vec(0.0f64..100.0, 50..300), count in 2usize..12, lo in 0.0f64..0.4, width in 0.2f64..0.55,
    ) {
        let spec: GridSpec = format!("q:{count}:{lo}:{}", lo + width).parse().unwrap();
        if let Ok(grid) = spec.resolve(&data) {
            prop_assert_eq!(grid.len(), count);
            prop_assert!(grid.windows(2).all(|w| w[0] < w[1]));
            let (min, max) = data.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
            prop_assert!(grid[0] >= min && grid[count - 1] <= max);
        }
    }

    #[test]
    fn sampling_is_a_function_of_the_seed(fam in family(), seed in any::<u64>()) {
        let p = ModelParams::new(fam, if fam.has_kappa() { 1.7 } else { 1.0 }, 1.0, 0.1).unwrap();
        prop_assert_eq!(p.sample(50, seed), p.sample(50, seed));
    }
}
