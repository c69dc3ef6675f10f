mod common;

use common::*;
use pc_engine::analysis::{
    binomial_magnitude, jacobian_at_states, simulate_simplified_wavefront, DecayModel,
};
use pc_engine::dataio::idx::{encode_images, encode_labels, parse_images, parse_labels, IdxImages};
use pc_engine::dataio::Normalization;
use pc_engine::epc::{errors_to_states, states_to_errors};
use pc_engine::model::{serialize, Activation, Loss};
use pc_engine::numeric::{log_binomial, Rng};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed};
use std::path::Path;

fn config(cases: u32) -> Config {
    Config {
        cases,
        rng_seed: RngSeed::Fixed(0x9c0d),
        failure_persistence: None,
        ..Config::default()
    }
}

fn act() -> impl Strategy<Value = Activation> {
    (0..Activation::ALL.len()).prop_map(|i| Activation::ALL[i])
}

fn loss() -> impl Strategy<Value = Loss> {
    prop_oneof![Just(Loss::Mse), Just(Loss::CrossEntropy)]
}

proptest! {
    #![proptest_config(config(FD_CASES))]

    #[test]
    fn finite_difference_oracles(seed in any::<u64>(), layers in 2usize..5, a in act(), l in loss(), batch in 1usize..4) {
        let c = case(seed, layers, a, l, batch);
        for (name, err) in fd_checks(&c, seed) {
            prop_assert!(err <= FD_TOL, "{name}: rel err {err:e}");
        }
    }
}

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn bijection_and_energy(seed in any::<u64>(), layers in 2usize..7, a in act(), l in loss()) {
        let c = case(seed, layers, a, l, 3);
        let e = states_to_errors(&c.net, &c.x, &c.s).unwrap();
        let s2 = errors_to_states(&c.net, &c.x, &e).unwrap();
        prop_assert!(s2.max_abs_diff(&c.s).unwrap() <= 1e-12);
        let es = c.net.energy_spc(&c.x, &c.y, &c.s).unwrap().total;
        let ee = c.net.energy_epc(&c.x, &c.y, &e).unwrap().total;
        prop_assert!((es - ee).abs() <= 1e-10 * es.abs().max(1.0));
    }

    #[test]
    fn jacobian_is_unit_lower_triangular(seed in any::<u64>(), layers in 2usize..6, a in act()) {
        let c = case(seed, layers, a, Loss::Mse, 1);
        let j = jacobian_at_states(&c.net, &c.s, 64).unwrap();
        let dims = c.net.hidden_dims();
        let mut block = Vec::new();
        for (i, &d) in dims.iter().enumerate() {
            block.extend(std::iter::repeat_n(i, d));
        }
        for r in 0..j.rows() {
            for col in 0..j.cols() {
                let v = j[(r, col)];
                if r == col {
                    prop_assert_eq!(v, 1.0);
                } else if block[col] >= block[r] {
                    prop_assert_eq!(v, 0.0);
                }
            }
        }
    }

    #[test]
    fn binomial_matches_recursion(layers in 1usize..30, lr in 0.01f64..0.99, steps in 0usize..50) {
        let sim = simulate_simplified_wavefront(layers, lr, steps);
        let model = DecayModel::new(layers, lr).unwrap();
        for t in 0..=steps {
            for k in 0..=layers.min(t) {
                let f = binomial_magnitude(&model, t as u64, k as u64).exp();
                prop_assert!((f - sim[(t, k)]).abs() <= 1e-12, "t={t} k={k}");
            }
        }
    }

    #[test]
    fn log_binomial_symmetry(t in 0u64..5000, frac in 0.0f64..1.0) {
        let i = (frac * t as f64) as u64;
        let a = log_binomial(t, i).unwrap();
        let b = log_binomial(t, t - i).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn normalization_invertible(mean in -2.0f64..2.0, std in 0.01f64..5.0, v in -10.0f64..10.0) {
        let n = Normalization { mean, std };
        prop_assert!((n.denormalize(n.normalize(v)) - v).abs() <= 1e-12);
    }

    #[test]
    fn idx_roundtrip(count in 0usize..5, rows in 1usize..6, cols in 1usize..6, seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let pixels: Vec<u8> = (0..count * rows * cols).map(|_| rng.below(256) as u8).collect();
        let img = IdxImages { count, rows, cols, pixels: pixels.clone() };
        let back = parse_images(&encode_images(&img), Path::new("mem")).unwrap();
        prop_assert_eq!(back.pixels, pixels);
        let labels: Vec<u8> = (0..count).map(|_| rng.below(10) as u8).collect();
        prop_assert_eq!(parse_labels(&encode_labels(&labels), Path::new("mem")).unwrap(), labels);
    }

    #[test]
    fn pcn1_roundtrip_is_bitwise(seed in any::<u64>(), layers in 2usize..5, a in act(), l in loss()) {
        let c = case(seed, layers, a, l, 1);
        let bytes = serialize::to_bytes(&c.net);
        let back = serialize::from_bytes(&bytes, Path::new("mem")).unwrap();
        prop_assert_eq!(back, c.net);
    }
}
