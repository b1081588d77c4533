//! Lexicographic enumeration of fixed-size index subsets.

use crate::error::{Error, Result};

/// Largest `n` accepted by exhaustive subset enumeration.
pub const MAX_ENUMERATION_N: usize = 25;
/// Largest number of subsets accepted by exhaustive enumeration.
pub const MAX_ENUMERATION_COUNT: u128 = 1_000_000;

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Rejects enumerations of `C(n, k)` subsets that exceed the guard.
pub fn check_enumerable(n: usize, k: usize) -> Result<()> {
    let count = binomial(n, k);
    if n > MAX_ENUMERATION_N || count > MAX_ENUMERATION_COUNT {
        return Err(Error::EnumerationTooLarge { n, k, count });
    }
    Ok(())
}

/// Calls `visit` on every size-`k` subset of `0..n` in lexicographic order.
pub fn for_each_combination(n: usize, k: usize, mut visit: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        visit(&idx);
        // rightmost position that can still advance
        let Some(pos) = (0..k).rev().find(|&p| idx[p] < n - k + p) else {
            return;
        };
        idx[pos] += 1;
        for p in pos + 1..k {
            idx[p] = idx[p - 1] + 1;
        }
    }
}
