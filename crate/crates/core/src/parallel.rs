//! Map helpers for scan drivers.
//!
//! With the `parallel` feature (default), [`map_collect`] fans out over a
//! rayon thread pool; without it, both helpers run sequentially. Every scan
//! point must be a pure function of its input so the two paths produce
//! identical results.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `items`, in parallel when the `parallel` feature is enabled.
pub fn map_collect<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Sequential reference path, always available (used by the benches to
/// compare against the parallel path).
pub fn map_collect_seq<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree() {
        let xs: Vec<u64> = (0..1000).collect();
        let a = map_collect(&xs, |x| x * x + 1);
        let b = map_collect_seq(&xs, |x| x * x + 1);
        assert_eq!(a, b);
    }
}
