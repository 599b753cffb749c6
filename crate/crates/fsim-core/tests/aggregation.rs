//! Independent oracle and properties for the weighted-mean aggregation.

use fsim_core::federation::{fedavg_aggregate, ClientUpdate};
use fsim_core::model::{ParameterVector, TensorInfo};
use fsim_core::rng::{next_unit_f64, stream_rng, Stream};
use proptest::prelude::*;
use rand_chacha::ChaCha8Rng;

fn flat_params(values: Vec<f64>) -> ParameterVector {
    let manifest = vec![TensorInfo::new("values", &[values.len()])];
    ParameterVector::new(manifest, values).unwrap()
}

/// Separately coded weighted mean: sum n_k * w_k first, divide by mu last,
/// walking updates in the order given rather than by client index.
fn oracle_weighted_mean(updates: &[ClientUpdate]) -> Vec<f64> {
    let mu: f64 = updates.iter().map(|u| u.n_k as f64).sum();
    let len = updates[0].params.len();
    let mut acc = vec![0.0; len];
    for u in updates {
        for (a, v) in acc.iter_mut().zip(u.params.values()) {
            *a += u.n_k as f64 * v;
        }
    }
    for a in &mut acc {
        *a /= mu;
    }
    acc
}

fn random_updates(rng: &mut ChaCha8Rng) -> Vec<ClientUpdate> {
    let clients = 1 + (next_unit_f64(rng) * 6.0) as usize;
    let len = 1 + (next_unit_f64(rng) * 12.0) as usize;
    (0..clients)
        .map(|k| ClientUpdate {
            client_index: k,
            params: flat_params(
                (0..len).map(|_| 20.0 * next_unit_f64(rng) - 10.0).collect(),
            ),
            n_k: 1 + (next_unit_f64(rng) * 999.0) as usize,
        })
        .collect()
}

#[test]
fn matches_independent_oracle_on_1000_random_update_sets() {
    let mut rng = stream_rng(555, Stream::Init, &[0xA6]);
    for case in 0..1000 {
        let updates = random_updates(&mut rng);
        let ours = fedavg_aggregate(&updates).unwrap();
        let oracle = oracle_weighted_mean(&updates);

        for (i, (a, b)) in ours.values().iter().zip(&oracle).enumerate() {
            assert!(
                (a - b).abs() < 1e-12,
                "case {case}, coordinate {i}: {a} vs oracle {b}"
            );
        }

        // convexity: every output coordinate within the per-coordinate
        // client envelope
        for (i, v) in ours.values().iter().enumerate() {
            let lo = updates
                .iter()
                .map(|u| u.params.values()[i])
                .fold(f64::INFINITY, f64::min);
            let hi = updates
                .iter()
                .map(|u| u.params.values()[i])
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(
                *v >= lo - 1e-12 && *v <= hi + 1e-12,
                "case {case}: coordinate {i} = {v} outside [{lo}, {hi}]"
            );
        }

        // weight-scale invariance: n_k -> 7 * n_k leaves the mean unchanged
        let scaled: Vec<ClientUpdate> = updates
            .iter()
            .map(|u| ClientUpdate { client_index: u.client_index, params: u.params.clone(), n_k: 7 * u.n_k })
            .collect();
        let scaled_mean = fedavg_aggregate(&scaled).unwrap();
        for (a, b) in ours.values().iter().zip(scaled_mean.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

proptest! {
    #[test]
    fn permuting_updates_gives_bit_identical_output(
        values in prop::collection::vec(
            prop::collection::vec(-100.0f64..100.0, 4),
            2..6,
        ),
        weights in prop::collection::vec(1usize..500, 6),
        seed in 0u64..1000,
    ) {
        let updates: Vec<ClientUpdate> = values
            .iter()
            .enumerate()
            .map(|(k, v)| ClientUpdate {
                client_index: k,
                params: flat_params(v.clone()),
                n_k: weights[k % weights.len()],
            })
            .collect();
        let baseline = fedavg_aggregate(&updates).unwrap();

        // rotate by a pseudo-random amount: fixed ascending-order summation
        // must make the result independent of input order
        let shift = (seed as usize) % updates.len();
        let mut rotated = updates.clone();
        rotated.rotate_left(shift);
        let rotated_mean = fedavg_aggregate(&rotated).unwrap();
        prop_assert_eq!(baseline.values(), rotated_mean.values());
    }

    #[test]
    fn single_update_aggregation_is_identity(
        values in prop::collection::vec(-50.0f64..50.0, 1..20),
        n_k in 1usize..10_000,
    ) {
        let update = ClientUpdate { client_index: 0, params: flat_params(values), n_k };
        let out = fedavg_aggregate(std::slice::from_ref(&update)).unwrap();
        prop_assert_eq!(out.values(), update.params.values());
    }
}
