//! Index-parallel map with a sequential fallback.
//!
//! With the `parallel` feature, work fans out over rayon. `workers == 1`
//! always runs inline, `workers == 0` uses the global pool, and any other
//! value gets a dedicated pool of that size. Output order is always index
//! order, so results never depend on the worker count.

pub fn map_indexed<T, F>(n: usize, workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if workers == 1 || n <= 1 {
        return (0..n).map(f).collect();
    }
    imp::map_indexed(n, workers, f)
}

pub fn available_workers() -> usize {
    imp::available_workers()
}

#[cfg(feature = "parallel")]
mod imp {
    use rayon::prelude::*;

    pub fn map_indexed<T, F>(n: usize, workers: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        if workers == 0 {
            return (0..n).into_par_iter().map(f).collect();
        }
        match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
            Ok(pool) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
            Err(err) => {
                log::warn!("falling back to sequential execution: {err}");
                (0..n).map(f).collect()
            }
        }
    }

    pub fn available_workers() -> usize {
        rayon::current_num_threads()
    }
}

#[cfg(not(feature = "parallel"))]
mod imp {
    pub fn map_indexed<T, F>(n: usize, _workers: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(f).collect()
    }

    pub fn available_workers() -> usize {
        1
    }
}
