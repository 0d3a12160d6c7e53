//! Order-preserving map over documents, on a bounded worker pool when the
//! `parallel` feature is on.

pub fn map_sequential<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn map_parallel<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    match rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        Err(_) => map_sequential(items, f),
    }
}

/// Results come back in input order regardless of worker count.
pub fn map_documents<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if workers > 1 {
        return map_parallel(items, workers, f);
    }
    let _ = workers;
    map_sequential(items, f)
}

/// Counting gate bounding how many callers hold a permit at once.
pub struct Gate {
    limit: usize,
    held: std::sync::Mutex<usize>,
    freed: std::sync::Condvar,
}

pub struct Permit<'a>(&'a Gate);

impl Gate {
    pub fn new(limit: usize) -> Self {
        Gate {
            limit: limit.max(1),
            held: std::sync::Mutex::new(0),
            freed: std::sync::Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut held = self.held.lock().unwrap_or_else(|e| e.into_inner());
        while *held >= self.limit {
            held = self.freed.wait(held).unwrap_or_else(|e| e.into_inner());
        }
        *held += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut held = self.0.held.lock().unwrap_or_else(|e| e.into_inner());
        *held -= 1;
        self.0.freed.notify_one();
    }
}
