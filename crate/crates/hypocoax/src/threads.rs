//! Shared rayon pool. `HYPOCOAX_THREADS` caps the worker count; results are
//! always reduced in a fixed order so parallel runs stay bit-reproducible.

use std::sync::OnceLock;

static POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();

pub fn pool() -> &'static rayon::ThreadPool {
    POOL.get_or_init(|| {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(k) = std::env::var("HYPOCOAX_THREADS")
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
            .filter(|&k| k >= 1)
        {
            builder = builder.num_threads(k);
        }
        builder.build().expect("failed to build worker pool")
    })
}
