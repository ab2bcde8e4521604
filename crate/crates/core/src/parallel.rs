//! Worker pool shared by batch loss evaluation and metrics.

use std::sync::OnceLock;

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "STAGECAST_THREADS";

static POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();

/// Worker count: `STAGECAST_THREADS` when set to a positive integer,
/// otherwise the available parallelism.
pub fn worker_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs `f` inside the shared pool.
pub fn install<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    POOL.get_or_init(|| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(worker_count())
            .thread_name(|i| format!("stagecast-{i}"))
            .build()
            .expect("thread pool")
    })
    .install(f)
}
