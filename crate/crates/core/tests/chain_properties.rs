//! Property tests for the kernel algebra: Chapman-Kolmogorov composition,
//! row-stochasticity of cached powers, stationarity, and gridworld
//! geometry under long random walks.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use netgain_core::markov::{
    build_explicit, build_gridworld, GridworldSpec, MarkovSource, StateTag,
};

fn chain_from_weights(weights: Vec<Vec<f64>>) -> MarkovSource {
    let n = weights.len();
    let rows: Vec<Vec<f64>> = weights
        .into_iter()
        .map(|row| {
            let sum: f64 = row.iter().sum();
            row.into_iter().map(|w| w / sum).collect()
        })
        .collect();
    let states = (0..n).map(|i| format!("s{i}")).collect();
    let danger = (0..n)
        .map(|i| if i % 2 == 0 { "safe".into() } else { "dangerous".into() })
        .collect();
    build_explicit("random-chain", states, rows, danger, 0.9).expect("normalized rows")
}

fn arb_chain() -> impl Strategy<Value = MarkovSource> {
    (2usize..6)
        .prop_flat_map(|n| {
            proptest::collection::vec(proptest::collection::vec(0.01f64..1.0, n), n)
        })
        .prop_map(chain_from_weights)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn chapman_kolmogorov_composition(
        chain in arb_chain(),
        a in 0usize..8,
        b in 0usize..8,
        x_pick in 0usize..64,
    ) {
        let n = chain.n_states();
        let x = x_pick % n;
        let direct = chain.step_distribution(x, a + b).unwrap();
        let first = chain.step_distribution(x, a).unwrap();
        let mut composed = vec![0.0; n];
        for (k, &w) in first.probs().iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let second = chain.step_distribution(k, b).unwrap();
            for (c, &p) in composed.iter_mut().zip(second.probs()) {
                *c += w * p;
            }
        }
        for (d, c) in direct.probs().iter().zip(&composed) {
            prop_assert!((d - c).abs() <= 1e-10, "{d} vs {c}");
        }
    }

    #[test]
    fn powers_stay_row_stochastic(chain in arb_chain(), steps in 1usize..30) {
        for x in 0..chain.n_states() {
            let dist = chain.step_distribution(x, steps).unwrap();
            let sum: f64 = dist.probs().iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-10);
            prop_assert!(dist.probs().iter().all(|&p| p >= -1e-15));
        }
    }

    #[test]
    fn stationary_fixed_point(chain in arb_chain()) {
        let pi = chain.stationary_distribution().unwrap();
        let n = chain.n_states();
        let mut next = vec![0.0; n];
        for (k, &w) in pi.probs().iter().enumerate() {
            for (nx, &p) in next.iter_mut().zip(chain.transition_row(k)) {
                *nx += w * p;
            }
        }
        for (a, b) in pi.probs().iter().zip(&next) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
    }
}

#[test]
fn gridworld_powers_row_stochastic_to_depth_100() {
    let g = build_gridworld(&GridworldSpec::default()).unwrap();
    g.warm_powers(100);
    for steps in [1, 10, 50, 100] {
        for x in 0..g.n_states() {
            let sum: f64 = g.step_distribution(x, steps).unwrap().probs().iter().sum();
            assert!((sum - 1.0).abs() <= 1e-10, "steps {steps}, state {x}");
        }
    }
}

#[test]
fn gridworld_walk_stays_on_grid_and_moves_one_row_at_most() {
    let spec = GridworldSpec::default();
    let g = build_gridworld(&spec).unwrap();
    let mut rng = ChaCha12Rng::seed_from_u64(2024);
    let mut x = 0usize;
    let mut prev_row = match g.state_tag(x) {
        StateTag::Grid { row, .. } => *row,
        _ => unreachable!(),
    };
    for _ in 0..100_000 {
        x = g.sample_step(x, &mut rng);
        let StateTag::Grid { row, col, .. } = *g.state_tag(x) else {
            unreachable!()
        };
        assert!((1..=spec.rows).contains(&row));
        assert!((1..=spec.cols).contains(&col));
        assert!(row.abs_diff(prev_row) <= 1);
        prev_row = row;
    }
}
