//! Counter-based random streams.
//!
//! Every random draw in the engine comes from a ChaCha8 stream keyed by
//! `(master seed, domain, step)` with a block index as the ChaCha stream id.
//! Walkers are grouped in fixed blocks of [`WALKERS_PER_STREAM`] consecutive
//! indices that consume their block's stream in index order, so every draw is
//! a function of `(seed, step, walker index)` alone and results never depend
//! on how blocks are scheduled across threads.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type WalkerRng = ChaCha8Rng;

/// Walkers sharing one stream. Amortizes stream setup and the 256-byte ChaCha
/// refill over many walkers.
pub const WALKERS_PER_STREAM: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    /// Initial draws use step key 0, the mutation into step `n + 1` uses key `n + 1`.
    Walker = 1,
    Selection = 2,
    Replicate = 3,
    Bootstrap = 4,
}

pub fn substream(master: u64, domain: Domain, step: u64, index: u64) -> WalkerRng {
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&master.to_le_bytes());
    seed[8..16].copy_from_slice(&(domain as u64).to_le_bytes());
    seed[16..24].copy_from_slice(&step.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(index);
    rng
}

/// Independent 64-bit seed for replicate `index` of an experiment.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    substream(master, Domain::Replicate, 0, index).next_u64()
}
