//! Data-parallel map with a sequential fallback.
//!
//! Results are always returned in input order, and callers reduce them
//! sequentially, so floating-point sums are identical under either mode.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Executor {
    Sequential,
    #[cfg(feature = "parallel")]
    Parallel,
}

impl Default for Executor {
    fn default() -> Self {
        #[cfg(feature = "parallel")]
        {
            Executor::Parallel
        }
        #[cfg(not(feature = "parallel"))]
        {
            Executor::Sequential
        }
    }
}

impl Executor {
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            Executor::Sequential => items.iter().map(f).collect(),
            #[cfg(feature = "parallel")]
            Executor::Parallel => {
                use rayon::prelude::*;
                items.par_iter().map(f).collect()
            }
        }
    }
}

/// Runs `f` with at most `jobs` worker threads. `None` or `0` uses the rayon default.
pub fn with_jobs<R: Send>(jobs: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        if let Some(n) = jobs.filter(|&n| n > 0) {
            if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(n).build() {
                return pool.install(f);
            }
        }
        f()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = jobs;
        f()
    }
}
