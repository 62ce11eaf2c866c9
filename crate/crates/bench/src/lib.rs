//! Fixtures shared by the criterion benchmarks.

use neyman_core::sequences::gen_stationary;
use neyman_core::{PotentialOutcomeSequence, RngStream, StationaryParams, SymmetricMatrix};

/// A stationary sequence of length `t` in dimension `d`, fixed by `seed`.
pub fn stationary(t: usize, d: usize, seed: u64) -> PotentialOutcomeSequence {
    gen_stationary(&StationaryParams::new(t, d), &mut RngStream::new(seed, 0)).expect("valid stationary parameters")
}

/// A well-conditioned ridge matrix `XᵀX + I` built from `n` draws.
pub fn ridge_matrix(d: usize, n: usize, seed: u64) -> SymmetricMatrix {
    let seq = stationary(n, d, seed);
    let mut m = seq.x.gram_prefix(n);
    m.add_diag(1.0);
    m
}
