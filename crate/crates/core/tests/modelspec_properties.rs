//! Structural properties of model specifications and their designs.

use edglm_core::modelspec::{harmonic_block, polynomial_block, regression_block, Block, Covariates, ModelSpec};
use edglm_core::Family;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn block_strategy() -> impl Strategy<Value = Block> {
    prop_oneof![
        (1usize..4, 0.8..1.0f64).prop_map(|(o, d)| polynomial_block(o).unwrap().with_discount(d)),
        (0.05..std::f64::consts::PI, 0.8..1.0f64).prop_map(|(w, d)| harmonic_block(w).unwrap().with_discount(d)),
        (1usize..3).prop_map(|l| regression_block(&["x"], l).unwrap()),
    ]
}

fn spec_strategy() -> impl Strategy<Value = ModelSpec> {
    (
        prop::collection::vec(block_strategy(), 1..4),
        prop::collection::vec(block_strategy(), 1..3),
    )
        .prop_map(|(m, p)| ModelSpec::new(Family::Beta, m, p).unwrap())
}

fn covariates() -> Covariates {
    Covariates::new().with_column("x", (0..40).map(|i| (i as f64 * 0.37).sin()).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn mean_and_precision_rows_are_separated(spec in spec_strategy(), t in 3usize..30) {
        let d = spec.design_at(t, &covariates()).unwrap();
        let p1 = spec.p1();
        for i in 0..spec.dim() {
            if i < p1 {
                prop_assert_eq!(d.f[(i, 1)], 0.0);
            } else {
                prop_assert_eq!(d.f[(i, 0)], 0.0);
            }
        }
        // G and W are block diagonal between the two predictors.
        for i in 0..p1 {
            for j in p1..spec.dim() {
                prop_assert_eq!(d.g[(i, j)], 0.0);
                prop_assert_eq!(d.g[(j, i)], 0.0);
            }
        }
    }

    #[test]
    fn design_is_pure(spec in spec_strategy(), t in 3usize..30) {
        let data = covariates();
        prop_assert_eq!(spec.design_at(t, &data).unwrap(), spec.design_at(t, &data).unwrap());
    }

    #[test]
    fn harmonic_evolution_is_orthogonal(omega in 1e-3..std::f64::consts::PI) {
        let g = harmonic_block(omega).unwrap().local_g();
        let err = (g.transpose() * &g - DMatrix::identity(2, 2)).abs().max();
        prop_assert!(err < 1e-14, "{err}");
    }
}
