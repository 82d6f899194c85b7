//! Order-preserving data-parallel map with a sequential fallback.
//!
//! With the `parallel` feature (default) [`par_map`] fans out over the rayon
//! pool; without it, it runs in the calling thread. Results are always
//! returned in input order, so any reduction done afterwards is independent
//! of scheduling.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Environment variable that caps the worker thread count.
pub const THREADS_ENV: &str = "LATENTFM_THREADS";

pub fn par_map<I, R, F>(items: &[I], f: F) -> Vec<R>
where
    I: Sync,
    R: Send,
    F: Fn(&I) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        seq_map(items, f)
    }
}

pub fn seq_map<I, R, F>(items: &[I], f: F) -> Vec<R>
where
    F: Fn(&I) -> R,
{
    items.iter().map(f).collect()
}

/// Applies the thread-count override from [`THREADS_ENV`], if set. Safe to
/// call more than once; only the first successful call configures the pool.
pub fn init_threads_from_env() {
    #[cfg(feature = "parallel")]
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

pub fn parallel_enabled() -> bool {
    cfg!(feature = "parallel")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_matches_sequential_order() {
        let xs: Vec<u64> = (0..1000).collect();
        let f = |x: &u64| x.wrapping_mul(0x9e37_79b9_7f4a_7c15) >> 7;
        assert_eq!(par_map(&xs, f), seq_map(&xs, f));
    }
}
