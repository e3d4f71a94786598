use cmseq::io;
use cmseq::synth;
use cmseq::Direction;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn config() -> Config {
    Config {
        cases: 64,
        rng_seed: RngSeed::Fixed(53),
        ..Config::default()
    }
}

fn direction() -> impl Strategy<Value = Direction> {
    prop_oneof![Just(Direction::First), Just(Direction::Last)]
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn model_round_trip_is_bit_exact(seed in any::<u64>(), n in 1usize..7, d in 1usize..4, dir in direction()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = synth::random_cm_model(&mut rng, n, d, dir);
        let text = io::model_to_json(&m);
        let parsed = io::parse_model(&text).unwrap();
        prop_assert_eq!(&parsed, &m);
        prop_assert_eq!(io::model_to_json(&parsed), text);
        prop_assert_eq!(io::model_hash(&parsed), io::model_hash(&m));
    }

    #[test]
    fn covariance_round_trip_is_bit_exact(seed in any::<u64>(), n in 1usize..7, d in 1usize..4, dir in direction()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = synth::random_cm_model(&mut rng, n, d, dir).covariance_of();
        let text = io::covariance_to_json(&c);
        let parsed = io::parse_covariance(&text).unwrap();
        prop_assert_eq!(parsed.matrix(), c.matrix());
        prop_assert_eq!(io::covariance_to_json(&parsed), text);
    }

    #[test]
    fn trajectory_round_trip_is_bit_exact(seed in any::<u64>(), n in 1usize..5, d in 1usize..4, dir in direction(), count in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = synth::random_cm_model(&mut rng, n, d, dir);
        let paths = m.sample(count, seed).unwrap();
        let mut buf = Vec::new();
        io::write_trajectories(&paths, &mut buf).unwrap();
        let back = io::read_trajectories(buf.as_slice()).unwrap();
        prop_assert_eq!(back.horizon, n);
        prop_assert_eq!(back.dim, d);
        prop_assert_eq!(back.data(), paths.data());
    }
}
