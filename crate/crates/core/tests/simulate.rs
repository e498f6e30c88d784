use pnpmm::simulate::{sample_poisson, sample_poisson_gaussian, shifted_poisson_preprocess, CountScale, NoiseSpec};
use pnpmm::Measurement;
use proptest::prelude::*;

fn means() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..5.0, 5.0f64..500.0], 1..200)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn counts_are_nonnegative_integers(mean in means(), zeta in 0.5f64..60.0, seed in any::<u64>()) {
        let spec = NoiseSpec::poisson(zeta, seed).unwrap();
        let k = sample_poisson(&Measurement::new(mean.clone()).unwrap(), &spec, CountScale::Counts).unwrap();
        for (&c, &m) in k.bins().iter().zip(&mean) {
            prop_assert!(c >= 0.0 && c.fract() == 0.0);
            if m == 0.0 {
                prop_assert_eq!(c, 0.0);
            }
        }
    }

    #[test]
    fn sampling_is_reproducible(mean in means(), seed in any::<u64>(), sigma in 0.0f64..2.0) {
        let m = Measurement::new(mean).unwrap();
        let spec = NoiseSpec::new(5.0, sigma, seed).unwrap();
        prop_assert_eq!(sample_poisson_gaussian(&m, &spec).unwrap(), sample_poisson_gaussian(&m, &spec).unwrap());
        prop_assert_eq!(
            sample_poisson(&m, &spec, CountScale::Scaled).unwrap(),
            sample_poisson(&m, &spec, CountScale::Scaled).unwrap()
        );
    }

    #[test]
    fn preprocessed_data_is_nonnegative(z in prop::collection::vec(-10.0f64..10.0, 1..100), sigma in 0.0f64..3.0) {
        let out = shifted_poisson_preprocess(&Measurement::new(z.clone()).unwrap(), sigma);
        for (&o, &v) in out.bins().iter().zip(&z) {
            prop_assert!(o >= 0.0);
            prop_assert_eq!(o, (v + sigma * sigma).max(0.0));
        }
    }

    #[test]
    fn bin_draws_do_not_depend_on_neighbours(mean in means(), seed in any::<u64>()) {
        let spec = NoiseSpec::poisson(3.0, seed).unwrap();
        let full = sample_poisson(&Measurement::new(mean.clone()).unwrap(), &spec, CountScale::Counts).unwrap();
        let prefix = sample_poisson(&Measurement::new(mean[..1].to_vec()).unwrap(), &spec, CountScale::Counts).unwrap();
        prop_assert_eq!(full.bins()[0], prefix.bins()[0]);
    }
}
