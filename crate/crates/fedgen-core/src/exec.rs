//! Client job execution. Simulated hospitals are independent work units;
//! results are always collected in client order, so the outcome is identical
//! whether jobs run sequentially or on a thread pool.

use alloc::vec::Vec;

/// How per-client jobs are executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parallelism {
    #[default]
    Sequential,
    /// Run jobs on up to the given number of OS threads (at least 1).
    #[cfg(feature = "std")]
    Threads(usize),
}

/// Runs the jobs and returns their results in input order.
pub fn run_jobs<T, F>(par: Parallelism, jobs: Vec<F>) -> Vec<T>
where
    T: Send,
    F: FnOnce() -> T + Send,
{
    match par {
        Parallelism::Sequential => jobs.into_iter().map(|job| job()).collect(),
        #[cfg(feature = "std")]
        Parallelism::Threads(n) => run_threaded(n.max(1), jobs),
    }
}

#[cfg(feature = "std")]
fn run_threaded<T, F>(threads: usize, jobs: Vec<F>) -> Vec<T>
where
    T: Send,
    F: FnOnce() -> T + Send,
{
    if threads == 1 || jobs.len() <= 1 {
        return jobs.into_iter().map(|job| job()).collect();
    }
    let n_jobs = jobs.len();
    let chunk = n_jobs.div_ceil(threads);
    let mut slots: Vec<Option<T>> = Vec::with_capacity(n_jobs);
    slots.resize_with(n_jobs, || None);
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        let mut remaining = jobs;
        let mut start = 0usize;
        while !remaining.is_empty() {
            let take = chunk.min(remaining.len());
            let batch: Vec<F> = remaining.drain(..take).collect();
            handles.push((
                start,
                scope.spawn(move || batch.into_iter().map(|job| job()).collect::<Vec<T>>()),
            ));
            start += take;
        }
        for (offset, handle) in handles {
            let results = handle.join().expect("client job panicked");
            for (i, r) in results.into_iter().enumerate() {
                slots[offset + i] = Some(r);
            }
        }
    });
    slots.into_iter().map(|s| s.expect("missing job result")).collect()
}

/// Milliseconds elapsed since an arbitrary epoch start; zero without `std`.
#[derive(Debug, Clone, Copy)]
pub struct Stopwatch {
    #[cfg(feature = "std")]
    start: std::time::Instant,
}

impl Stopwatch {
    pub fn start() -> Self {
        Stopwatch {
            #[cfg(feature = "std")]
            start: std::time::Instant::now(),
        }
    }

    pub fn elapsed_ms(&self) -> u64 {
        #[cfg(feature = "std")]
        {
            self.start.elapsed().as_millis() as u64
        }
        #[cfg(not(feature = "std"))]
        {
            0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequential_and_threaded_agree() {
        let make_jobs = || -> Vec<Box<dyn FnOnce() -> u64 + Send>> {
            (0..7u64)
                .map(|i| {
                    let f: Box<dyn FnOnce() -> u64 + Send> = Box::new(move || i * i + 1);
                    f
                })
                .collect()
        };
        let seq = run_jobs(Parallelism::Sequential, make_jobs());
        let par = run_jobs(Parallelism::Threads(3), make_jobs());
        assert_eq!(seq, par);
        assert_eq!(seq, alloc::vec![1, 2, 5, 10, 17, 26, 37]);
    }
}
