//! Data-parallel map with a sequential fallback.
//!
//! With the `parallel` feature the work is spread over rayon's pool; without
//! it, or with [`Exec::Sequential`], items are processed in order. Results
//! are always returned in input order, so reductions over them are
//! bit-identical in both modes.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

impl Exec {
    pub fn map_range<R, F>(self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => (0..n).into_par_iter().map(f).collect(),
            _ => (0..n).map(f).collect(),
        }
    }

    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => items.par_iter().map(f).collect(),
            _ => items.iter().map(f).collect(),
        }
    }

    /// Splits `0..n` into contiguous chunks, maps each chunk, and returns the
    /// per-chunk results in order. Useful when each worker needs expensive
    /// private state (a recorded tape, say).
    pub fn map_chunks<R, F>(self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(std::ops::Range<usize>) -> R + Sync + Send,
    {
        let workers = match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => rayon::current_num_threads().max(1),
            _ => 1,
        };
        let chunk = n.div_ceil(workers).max(1);
        let ranges: Vec<_> = (0..n).step_by(chunk).map(|s| s..(s + chunk).min(n)).collect();
        self.map(&ranges, |r| f(r.clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let f = |i: usize| (i as f64).sqrt();
        assert_eq!(Exec::Sequential.map_range(100, f), Exec::Parallel.map_range(100, f));
        let chunks = Exec::Parallel.map_chunks(10, |r| r.len());
        assert_eq!(chunks.iter().sum::<usize>(), 10);
        assert!(Exec::Sequential.map_chunks(0, |r| r.len()).is_empty());
    }
}
