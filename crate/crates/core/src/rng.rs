//! Reproducible random streams.
//!
//! Every draw comes from a ChaCha8 stream selected by the master seed and a
//! `(purpose, step, member)` triple, so results do not depend on the order in
//! which members are processed, and observation noise is identical across
//! filter kinds for paired comparisons.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Purpose {
    /// Initial conditions and parameters of member `member`.
    Ensemble = 1,
    /// Observation noise at assimilation step `step`.
    Observation = 2,
    /// Perturbed observations of member `member` at step `step`.
    Perturbation = 3,
}

/// Stream for `(purpose, step, member)`; `step` must fit in 24 bits.
pub fn stream(master: u64, purpose: Purpose, step: usize, member: usize) -> ChaCha8Rng {
    debug_assert!(step < 1 << 24 && member <= u32::MAX as usize);
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    let id = ((purpose as u64) << 56) | (((step as u64) & 0xFF_FFFF) << 32) | (member as u64 & 0xFFFF_FFFF);
    rng.set_stream(id);
    rng
}
