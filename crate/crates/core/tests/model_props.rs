use cmseq::linalg::Matrix;
use cmseq::synth::{self, NoiseKind};
use cmseq::{CmModel, Direction};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn config() -> Config {
    Config {
        cases: 64,
        rng_seed: RngSeed::Fixed(23),
        ..Config::default()
    }
}

fn direction() -> impl Strategy<Value = Direction> {
    prop_oneof![Just(Direction::First), Just(Direction::Last)]
}

fn model(seed: u64, n: usize, d: usize, dir: Direction) -> CmModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    synth::random_cm_model(&mut rng, n, d, dir)
}

fn block_diag(blocks: &[&Matrix]) -> Matrix {
    let d = blocks[0].nrows();
    let mut out = Matrix::zeros(blocks.len() * d, blocks.len() * d);
    for (k, b) in blocks.iter().enumerate() {
        out.view_mut((k * d, k * d), (d, d)).copy_from(b);
    }
    out
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn g_inverse_inverts(seed in any::<u64>(), n in 1usize..9, d in 1usize..4, dir in direction()) {
        let m = model(seed, n, d, dir);
        let g = m.assemble_g();
        let t = m.g_inverse();
        let side = (n + 1) * d;
        prop_assert!((&g * &t - Matrix::identity(side, side)).amax() <= 1e-9 * (1.0 + t.amax()));
    }

    #[test]
    fn covariance_is_congruence_of_noise(seed in any::<u64>(), n in 1usize..9, d in 1usize..4, dir in direction()) {
        let m = model(seed, n, d, dir);
        let t = m.g_inverse();
        let noise: Vec<&Matrix> = (0..=n).map(|k| m.noise_cov(k).unwrap()).collect();
        let expected = &t * block_diag(&noise) * t.transpose();
        let c = m.covariance_of();
        prop_assert!((c.matrix() - &expected).amax() <= 1e-12 * (1.0 + expected.amax()));
        prop_assert_eq!(c.matrix(), &c.matrix().transpose());
    }

    #[test]
    fn zero_noise_step_is_exact(seed in any::<u64>(), n in 2usize..7, d in 1usize..4, dir in direction(), sample_seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let zero_at = 1 + (seed as usize) % n;
        let m = synth::random_cm_model_with(&mut rng, n, d, dir, |r, k| {
            if k == zero_at { NoiseKind::Zero } else { NoiseKind::random(r) }
        });
        let paths = m.sample(50, sample_seed).unwrap();
        let anchor = dir.anchor(n);
        for p in 0..paths.count() {
            let x = |k: usize| nalgebra::DVector::from_column_slice(paths.state(p, k));
            let mut predicted = nalgebra::DVector::zeros(d);
            if let Some(a) = m.transition(zero_at) {
                predicted += a * x(zero_at - 1);
            }
            if let Some(b) = m.coupling(zero_at) {
                predicted += b * x(anchor);
            }
            prop_assert!((x(zero_at) - predicted).amax() <= 1e-12 * (1.0 + x(zero_at).amax()));
        }
    }

    #[test]
    fn sampling_is_deterministic(seed in any::<u64>(), n in 1usize..6, d in 1usize..4, dir in direction(), sample_seed in any::<u64>()) {
        let m = model(seed, n, d, dir);
        let a = m.sample(20, sample_seed).unwrap();
        let b = m.sample(20, sample_seed).unwrap();
        prop_assert_eq!(a.data(), b.data());
        let prefix = m.sample(5, sample_seed).unwrap();
        prop_assert_eq!(prefix.data(), &a.data()[..prefix.data().len()]);
    }
}
