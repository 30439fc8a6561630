//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) [`Execution::Parallel`] runs on the
//! current rayon pool. Without it, every call is sequential. Results never
//! depend on the execution mode.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

pub fn map_slice<T, U, F>(items: &[T], exec: Execution, f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

pub fn map_range<U, F>(n: usize, exec: Execution, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Calls `f(index, chunk)` for each `chunk_len`-sized chunk of `data`.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk_len: usize, exec: Execution, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        data.par_chunks_mut(chunk_len).enumerate().for_each(|(i, c)| f(i, c));
        return;
    }
    let _ = exec;
    data.chunks_mut(chunk_len).enumerate().for_each(|(i, c)| f(i, c));
}

/// Folds fixed-size chunks into accumulators and merges them left to right.
///
/// Chunk boundaries depend only on `chunk_len`, never on the thread count, so
/// any merge that is associative gives the same answer in both modes.
pub fn chunked_fold<T, A, I, F, M>(items: &[T], chunk_len: usize, exec: Execution, init: I, fold: F, merge: M) -> A
where
    T: Sync,
    A: Send,
    I: Fn() -> A + Sync + Send,
    F: Fn(A, &T) -> A + Sync + Send,
    M: Fn(A, A) -> A + Sync + Send,
{
    let chunk_len = chunk_len.max(1);
    let partials: Vec<A> = {
        #[cfg(feature = "parallel")]
        {
            if exec.is_parallel() {
                items.par_chunks(chunk_len).map(|c| c.iter().fold(init(), &fold)).collect()
            } else {
                items.chunks(chunk_len).map(|c| c.iter().fold(init(), &fold)).collect()
            }
        }
        #[cfg(not(feature = "parallel"))]
        {
            let _ = exec;
            items.chunks(chunk_len).map(|c| c.iter().fold(init(), &fold)).collect()
        }
    };
    partials.into_iter().fold(init(), merge)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let xs: Vec<f64> = (0..10_000).map(|i| (i as f64).sin()).collect();
        let a = map_slice(&xs, Execution::Sequential, |x| x * 2.0);
        let b = map_slice(&xs, Execution::Parallel, |x| x * 2.0);
        assert_eq!(a, b);
        let sum = |e| chunked_fold(&xs, 1000, e, || 0.0, |a, x| a + x, |a, b| a + b);
        assert_eq!(sum(Execution::Sequential).to_bits(), sum(Execution::Parallel).to_bits());
    }
}
