//! Deterministic random streams and the parallel/sequential execution switch.
//!
//! Random draws are generated in fixed-size blocks. Block `b` of a run seeded
//! with `seed` is produced by `ChaCha8Rng::seed_from_u64(seed)` switched to
//! stream `b`, so the content of every block is a pure function of
//! `(seed, b)`. Work can then be split across threads block by block and the
//! output never depends on how many threads ran it. Partial sums are always
//! reduced in block order.
//!
//! Algorithm identifier: [`RNG_ALGORITHM`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator identifier recorded in run manifests.
pub const RNG_ALGORITHM: &str = "chacha8-rand_chacha-0.9/stream-per-block/block=16384";

/// Number of draws per independent stream block.
pub const BLOCK: usize = 1 << 14;

/// Stream ids at or above this value are reserved for non-block consumers
/// (simulation day loops, synthetic data generation).
pub const AUX_STREAM_BASE: u64 = 1 << 48;

/// How data-parallel loops are executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    /// Uses rayon when the `parallel` feature is enabled, otherwise falls back
    /// to sequential execution.
    #[default]
    Parallel,
}

impl Exec {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// Generator for block `block` of the run seeded with `seed`.
pub fn block_rng(seed: u64, block: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block);
    rng
}

/// Generator for an auxiliary consumer identified by `tag`.
pub fn aux_rng(seed: u64, tag: u64) -> ChaCha8Rng {
    block_rng(seed, AUX_STREAM_BASE + tag)
}

/// Fills `out` block by block; `fill(block_index, chunk)` must only depend on
/// its arguments.
pub fn fill_blocks<T, F>(exec: Exec, out: &mut [T], fill: F)
where
    T: Send,
    F: Fn(u64, &mut [T]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        out.par_chunks_mut(BLOCK)
            .enumerate()
            .for_each(|(b, chunk)| fill(b as u64, chunk));
        return;
    }
    let _ = exec;
    for (b, chunk) in out.chunks_mut(BLOCK).enumerate() {
        fill(b as u64, chunk);
    }
}

/// Maps every block of an `n`-draw run to a partial result, returned in
/// block order. `f(block_index, len)` gets the number of draws in the block.
pub fn map_blocks<R, F>(exec: Exec, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(u64, usize) -> R + Sync + Send,
{
    let n_blocks = n.div_ceil(BLOCK);
    let len_of = |b: usize| BLOCK.min(n - b * BLOCK);
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..n_blocks)
            .into_par_iter()
            .map(|b| f(b as u64, len_of(b)))
            .collect();
    }
    let _ = exec;
    (0..n_blocks).map(|b| f(b as u64, len_of(b))).collect()
}

/// Order-preserving map over independent jobs (seeds, instruments, policies).
pub fn map_jobs<T, R, F>(exec: Exec, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().map(&f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn blocks_are_independent_of_execution_mode() {
        let n = 3 * BLOCK + 17;
        let draw = |b: u64, chunk: &mut [u64]| {
            let mut rng = block_rng(99, b);
            for x in chunk.iter_mut() {
                *x = rng.random();
            }
        };
        let mut a = vec![0u64; n];
        let mut b = vec![0u64; n];
        fill_blocks(Exec::Sequential, &mut a, draw);
        fill_blocks(Exec::Parallel, &mut b, draw);
        assert_eq!(a, b);

        let lens = map_blocks(Exec::Parallel, n, |_, len| len);
        assert_eq!(lens, vec![BLOCK, BLOCK, BLOCK, 17]);
    }

    #[test]
    fn distinct_blocks_give_distinct_streams() {
        let x: u64 = block_rng(1, 0).random();
        let y: u64 = block_rng(1, 1).random();
        let z: u64 = block_rng(2, 0).random();
        assert_ne!(x, y);
        assert_ne!(x, z);
    }
}
