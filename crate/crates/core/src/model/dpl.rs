//! Hashed weight sharing for the dynamic parameter layer.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::rng::{splitmix64, GOLDEN_GAMMA};
use crate::tensor::HashIndex;

/// Raw 64-bit hash of matrix entry `(i, j)`.
#[inline]
pub fn entry_hash(i: usize, j: usize) -> u64 {
    splitmix64(((i as u64) << 32) ^ j as u64 ^ GOLDEN_GAMMA)
}

/// Candidate slot of entry `(i, j)`.
pub fn entry_index(i: usize, j: usize, candidates: usize) -> usize {
    (entry_hash(i, j) % candidates as u64) as usize
}

/// `+1` when bit 62 of the hash is set, else `-1`.
pub fn entry_sign(i: usize, j: usize) -> i8 {
    if entry_hash(i, j) >> 62 & 1 == 1 {
        1
    } else {
        -1
    }
}

/// Index and sign tables of a `rows × cols` dynamic weight matrix.
pub fn hash_index(rows: usize, cols: usize, candidates: usize) -> Arc<HashIndex> {
    let mut index = Vec::with_capacity(rows * cols);
    let mut sign = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            index.push(entry_index(i, j, candidates) as u32);
            sign.push(entry_sign(i, j));
        }
    }
    Arc::new(HashIndex { rows, cols, index, sign })
}
