//! Order-preserving batch evaluation, parallel when the `parallel` feature is on.

#[cfg(feature = "parallel")]
use crate::error::Error;
use crate::error::Result;

/// Runs independent jobs over a slice and returns results in input order.
///
/// With `jobs == 1`, or without the `parallel` feature, everything runs on
/// the calling thread. `jobs == 0` means one worker per available core.
pub struct Executor {
    jobs: usize,
    #[cfg(feature = "parallel")]
    pool: Option<rayon::ThreadPool>,
}

impl Executor {
    pub fn new(jobs: usize) -> Result<Self> {
        #[cfg(feature = "parallel")]
        {
            let pool = if jobs == 1 {
                None
            } else {
                Some(
                    rayon::ThreadPoolBuilder::new()
                        .num_threads(jobs)
                        .build()
                        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?,
                )
            };
            let jobs = pool.as_ref().map_or(1, |p| p.current_num_threads());
            Ok(Executor { jobs, pool })
        }
        #[cfg(not(feature = "parallel"))]
        {
            let _ = jobs;
            Ok(Executor { jobs: 1 })
        }
    }

    pub fn sequential() -> Self {
        Executor {
            jobs: 1,
            #[cfg(feature = "parallel")]
            pool: None,
        }
    }

    /// Effective number of worker threads.
    pub fn jobs(&self) -> usize {
        self.jobs
    }

    pub fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            use rayon::prelude::*;
            return pool.install(|| items.par_iter().map(&f).collect());
        }
        items.iter().map(f).collect()
    }
}

impl Default for Executor {
    fn default() -> Self {
        Executor::sequential()
    }
}
