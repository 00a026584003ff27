use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Every stochastic step draws from a seeded ChaCha stream so results are
/// stable across platforms and crate upgrades.
pub(crate) type Rng = ChaCha8Rng;

pub(crate) fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
