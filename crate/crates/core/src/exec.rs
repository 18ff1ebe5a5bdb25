//! Indexed map over `0..len`, on a rayon pool or on the calling thread.
//!
//! Results are always written back in index order, so output never depends
//! on the scheduling or on the number of workers.

#[cfg(feature = "parallel")]
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExecError {
    #[error("thread count must be at least 1")]
    ZeroThreads,
    #[error("could not build worker pool: {0}")]
    Pool(String),
}

#[derive(Clone, Default)]
pub struct Executor {
    #[cfg(feature = "parallel")]
    pool: Option<Arc<rayon::ThreadPool>>,
}

impl std::fmt::Debug for Executor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Executor").field("parallel", &self.is_parallel()).finish()
    }
}

impl Executor {
    pub fn sequential() -> Self {
        Executor {
            #[cfg(feature = "parallel")]
            pool: None,
        }
    }

    /// A worker pool capped at `threads` (all cores when `None`). Without the
    /// `parallel` feature this is the sequential executor.
    pub fn parallel(threads: Option<usize>) -> Result<Self, ExecError> {
        if threads == Some(0) {
            return Err(ExecError::ZeroThreads);
        }
        #[cfg(feature = "parallel")]
        {
            let mut builder = rayon::ThreadPoolBuilder::new();
            if let Some(t) = threads {
                builder = builder.num_threads(t);
            }
            let pool = builder.build().map_err(|e| ExecError::Pool(e.to_string()))?;
            Ok(Executor { pool: Some(Arc::new(pool)) })
        }
        #[cfg(not(feature = "parallel"))]
        {
            Ok(Executor::sequential())
        }
    }

    pub fn is_parallel(&self) -> bool {
        #[cfg(feature = "parallel")]
        {
            self.pool.is_some()
        }
        #[cfg(not(feature = "parallel"))]
        {
            false
        }
    }

    pub fn map_indexed<T, F>(&self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            use rayon::prelude::*;
            return pool.install(|| (0..len).into_par_iter().map(&f).collect());
        }
        (0..len).map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let seq = Executor::sequential().map_indexed(1000, |i| i * i);
        let par = Executor::parallel(Some(4)).unwrap().map_indexed(1000, |i| i * i);
        assert_eq!(seq, par);
        assert_eq!(seq[999], 999 * 999);
    }

    #[test]
    fn zero_threads_rejected() {
        assert_eq!(Executor::parallel(Some(0)).unwrap_err(), ExecError::ZeroThreads);
    }
}
