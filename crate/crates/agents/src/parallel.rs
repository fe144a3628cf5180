//! Independent runs fanned out over a rayon pool, or run in order when the
//! `parallel` feature is off. Results always come back in input order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// `items.map(f)`, in parallel when enabled.
pub fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
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
        items.iter().map(f).collect()
    }
}

/// Sequential `items.map(f)`, the baseline for [`par_map`].
pub fn seq_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

/// Caps the global pool at `threads` workers. Only the first call takes
/// effect; later calls and builds without the `parallel` feature are no-ops.
pub fn configure_threads(threads: usize) {
    #[cfg(feature = "parallel")]
    {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
    }
}

/// Reads a positive thread count from `var`.
pub fn threads_from_env(var: &str) -> Option<usize> {
    std::env::var(var).ok()?.trim().parse().ok().filter(|&n| n > 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_order() {
        let v: Vec<u64> = (0..100).collect();
        assert_eq!(par_map(&v, |x| x * x), seq_map(&v, |x| x * x));
    }
}
