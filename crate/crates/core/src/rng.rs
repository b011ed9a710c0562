use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Seeded stream used by every sampling routine in the crate.
pub(crate) fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform draw on the open interval (0, 1) built from the top 53 bits.
pub(crate) fn open_unit(rng: &mut impl rand::RngCore) -> f64 {
    loop {
        let bits = rng.next_u64() >> 11;
        if bits != 0 {
            return bits as f64 * (1.0 / (1u64 << 53) as f64);
        }
    }
}
