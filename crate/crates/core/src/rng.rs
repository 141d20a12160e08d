//! Seeded random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator seeded with
//! the 64-bit master seed. Independent consumers get independent ChaCha
//! streams: the 64-bit stream id packs
//!
//! ```text
//! bits 56..64  purpose tag
//! bits 16..56  replicate index (40 bits)
//! bits  0..16  sub-stream (chain or method index)
//! ```
//!
//! so a population draw, a design draw and an MCMC chain never share
//! keystream, and results do not depend on the order in which replicates are
//! scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Purpose {
    Population = 1,
    Design = 2,
    ControlDesign = 3,
    Mcmc = 4,
    Oracle = 5,
    Seeds = 6,
    Synthetic = 7,
}

pub fn stream_id(purpose: Purpose, replicate: u64, sub: u64) -> u64 {
    ((purpose as u64) << 56) | ((replicate & 0xFF_FFFF_FFFF) << 16) | (sub & 0xFFFF)
}

pub fn stream(master: u64, purpose: Purpose, replicate: u64, sub: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream_id(purpose, replicate, sub));
    rng
}

/// Derive a child master seed, e.g. the seed handed to one MCMC fit inside a
/// Monte Carlo replicate.
pub fn derive_seed(master: u64, replicate: u64, sub: u64) -> u64 {
    use rand::RngCore;
    stream(master, Purpose::Seeds, replicate, sub).next_u64()
}
