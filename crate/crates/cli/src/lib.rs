//! File formats, experiment scripts and laboratory drivers behind the
//! `bundlesight` command.

pub mod io;
pub mod lab;
pub mod repro;

/// Environment variable capping the number of worker threads.
pub const THREADS_VAR: &str = "BUNDLESIGHT_THREADS";

/// Sizes the global worker pool from `BUNDLESIGHT_THREADS` when set.
pub fn configure_threads() -> anyhow::Result<()> {
    let Ok(v) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| anyhow::anyhow!("{THREADS_VAR}: expected a positive integer, found {v:?}"))?;
    if n == 0 {
        anyhow::bail!("{THREADS_VAR}: must be at least 1");
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}
