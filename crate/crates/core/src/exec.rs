//! Serial/parallel execution switch shared by the particle and grid kernels.
//!
//! Every kernel splits its work into fixed-size chunks whose boundaries do not
//! depend on the thread count, and reduces partial results in chunk order.
//! Serial and parallel execution therefore produce bitwise-identical output.

use std::ops::Range;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Particles per chunk for scatter/gather/push style kernels.
pub const PARTICLE_CHUNK: usize = 1 << 15;

/// Entries per chunk for vector reductions.
pub const REDUCE_CHUNK: usize = 1 << 12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Execution {
    Serial,
    #[default]
    Parallel,
}

impl Execution {
    /// `Parallel` only takes effect when the crate is built with the
    /// `parallel` feature.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

pub(crate) fn chunk_ranges(len: usize, chunk: usize) -> Vec<Range<usize>> {
    (0..len.div_ceil(chunk))
        .map(|c| c * chunk..((c + 1) * chunk).min(len))
        .collect()
}

/// Maps `f` over fixed chunks of `0..len`; results come back in chunk order.
pub(crate) fn map_chunks<R, F>(exec: Execution, len: usize, chunk: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(Range<usize>) -> R + Sync + Send,
{
    let ranges = chunk_ranges(len, chunk);
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return ranges.into_par_iter().map(f).collect();
    }
    let _ = exec;
    ranges.into_iter().map(f).collect()
}

/// Runs `f(offset, chunk)` over disjoint mutable chunks of `data`.
pub(crate) fn for_each_chunk_mut<T, F>(exec: Execution, data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        data.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(c, s)| f(c * chunk, s));
        return;
    }
    let _ = exec;
    data.chunks_mut(chunk)
        .enumerate()
        .for_each(|(c, s)| f(c * chunk, s));
}

pub(crate) fn dot(exec: Execution, a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    map_chunks(exec, a.len(), REDUCE_CHUNK, |r| {
        a[r.clone()].iter().zip(&b[r]).map(|(x, y)| x * y).sum::<f64>()
    })
    .into_iter()
    .sum()
}

pub(crate) fn sum(exec: Execution, a: &[f64]) -> f64 {
    map_chunks(exec, a.len(), REDUCE_CHUNK, |r| a[r].iter().sum::<f64>())
        .into_iter()
        .sum()
}
