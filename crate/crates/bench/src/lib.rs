//! Fixed problem sets for the detector benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spheredec::{generate_instance, preprocess, Constellation, ConstellationKind, PreprocessedProblem, RadiusPolicy};

/// `count` preprocessed problems drawn from consecutive seeds.
pub fn problems(
    m: usize,
    kind: ConstellationKind,
    snr_db: f64,
    policy: RadiusPolicy,
    count: usize,
) -> Vec<PreprocessedProblem> {
    let constellation = Constellation::new(kind);
    (0..count as u64)
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let instance = generate_instance(m, m, &constellation, snr_db, &mut rng).expect("square system");
            preprocess(&instance, policy).expect("Gaussian channels are full rank")
        })
        .collect()
}
