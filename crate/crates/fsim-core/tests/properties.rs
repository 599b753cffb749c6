//! Cross-module property tests.

use fsim_core::features::{segment_patches, SAMPLE_RATE};
use fsim_core::matrix::Matrix;
use fsim_core::metrics::cohort_size;
use fsim_core::model::{forward, init_params, ModelSpec, ParameterVector, TensorInfo};
use fsim_core::optim::{adam_step, sgd_step, AdamHyper, AdamState};
use proptest::prelude::*;

fn flat_params(values: Vec<f64>) -> ParameterVector {
    let manifest = vec![TensorInfo::new("values", &[values.len()])];
    ParameterVector::new(manifest, values).unwrap()
}

proptest! {
    #[test]
    fn forward_is_deterministic_and_strictly_inside_unit_interval(
        seed in 0u64..500,
        rows in prop::collection::vec(prop::collection::vec(-60.0f64..60.0, 4), 1..6),
    ) {
        let spec = ModelSpec::mlp(4, 3, 2);
        let params = init_params(&spec, seed).unwrap();
        let inputs = Matrix::from_rows(&rows).unwrap();
        let a = forward(&spec, &params, &inputs).unwrap();
        let b = forward(&spec, &params, &inputs).unwrap();
        prop_assert_eq!(a.values(), b.values());
        for s in a.values() {
            prop_assert!(*s > 0.0 && *s < 1.0);
        }
    }

    #[test]
    fn optimizer_steps_stay_finite(
        params in prop::collection::vec(-1e6f64..1e6, 1..10),
        grads in prop::collection::vec(-1e6f64..1e6, 10),
        lr in 1e-6f64..10.0,
    ) {
        let n = params.len();
        let p = flat_params(params);
        let g = flat_params(grads[..n].to_vec());
        let stepped = sgd_step(&p, &g, lr).unwrap();
        prop_assert!(stepped.is_finite());
        let state = AdamState::new(n, AdamHyper::with_lr(lr));
        let (next, stepped) = adam_step(state, &p, &g).unwrap();
        prop_assert!(stepped.is_finite());
        prop_assert_eq!(next.step_count(), 1);
    }

    #[test]
    fn cohort_size_is_clamped_and_monotone(n in 1usize..5000, c in 0.001f64..1.0) {
        let m = cohort_size(n, c);
        prop_assert!(m >= 1 && m <= n);
        // monotone in c at fixed n
        let larger = (c + 0.2).min(1.0);
        prop_assert!(cohort_size(n, larger) >= m);
    }

    #[test]
    fn patch_count_formula_for_long_clips(extra in 0usize..200_000) {
        let n = SAMPLE_RATE + extra;
        let spans = segment_patches(n, SAMPLE_RATE);
        let hop = SAMPLE_RATE / 2;
        let expected = ((n - SAMPLE_RATE) as f64 / hop as f64).ceil() as usize + 1;
        prop_assert_eq!(spans.len(), expected);
        prop_assert_eq!(spans.last().unwrap().end, n);
        // consecutive spans overlap or touch: full coverage
        for pair in spans.windows(2) {
            prop_assert!(pair[1].start <= pair[0].end);
        }
    }
}
