//! Deterministic chunked map-reduce.
//!
//! Work is split into fixed-size index chunks that do not depend on the
//! number of worker threads; partial results are combined sequentially in
//! chunk order, so floating-point sums are bit-identical across runs.

use rayon::prelude::*;
use std::ops::Range;

pub(crate) const CHUNK: usize = 256;

pub(crate) fn map_reduce<T, M, R>(len: usize, map: M, reduce: R) -> Option<T>
where
    T: Send,
    M: Fn(Range<usize>) -> T + Sync,
    R: Fn(T, T) -> T,
{
    if len == 0 {
        return None;
    }
    let n_chunks = len.div_ceil(CHUNK);
    let parts: Vec<T> = if n_chunks == 1 {
        vec![map(0..len)]
    } else {
        (0..n_chunks).into_par_iter().map(|c| map(c * CHUNK..((c + 1) * CHUNK).min(len))).collect()
    };
    parts.into_iter().reduce(reduce)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sums_are_thread_count_independent() {
        let xs: Vec<f64> = (0..10_000).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let sum = |r: Range<usize>| xs[r].iter().sum::<f64>();
        let a = map_reduce(xs.len(), sum, |a, b| a + b).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| map_reduce(xs.len(), sum, |a, b| a + b).unwrap());
        assert_eq!(a.to_bits(), b.to_bits());
        assert!(map_reduce(0, sum, |a, b| a + b).is_none());
    }
}
