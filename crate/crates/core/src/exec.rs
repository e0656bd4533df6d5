//! Data-parallel helpers with a sequential fallback.
//!
//! Every parallel loop in the crate funnels through [`map`] / [`map_range`], so the
//! `parallel` feature is the single switch between rayon and plain iterators.
//! Results are always returned in input order, which keeps reductions performed by
//! the caller deterministic regardless of the thread count.
//!
//! The [`seq`] and [`par`] submodules expose both variants explicitly so benches can
//! compare them in one binary.

/// Sequential implementations.
pub mod seq {
    pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        items.iter().map(f).collect()
    }

    pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}

/// Rayon implementations; identical to [`seq`] when the `parallel` feature is off.
pub mod par {
    #[cfg(feature = "parallel")]
    use rayon::prelude::*;

    pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        {
            items.par_iter().map(f).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            super::seq::map(items, f)
        }
    }

    pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        {
            (0..n).into_par_iter().map(f).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            super::seq::map_range(n, f)
        }
    }
}

pub use par::{map, map_range};

/// Number of worker threads the parallel helpers will use.
pub fn threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn par_and_seq_agree_in_order() {
        let items: Vec<u64> = (0..1000).collect();
        let a = par::map(&items, |x| x * x + 1);
        let b = seq::map(&items, |x| x * x + 1);
        assert_eq!(a, b);
        assert_eq!(map_range(10, |i| i * 2), (0..10).map(|i| i * 2).collect::<Vec<_>>());
    }
}
