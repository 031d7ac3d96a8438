//! File formats, the results ledger, dataset manifests and a local runner
//! for `kare-core`.

pub mod dataset;
pub mod io;
pub mod ledger;
pub mod runner;

use std::path::PathBuf;

/// Environment variable naming the results-store root.
pub const RESULTS_ENV: &str = "KARE_RESULTS";

/// `$KARE_RESULTS`, or `./results` when unset.
pub fn results_root() -> PathBuf {
    std::env::var_os(RESULTS_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("results"))
}

/// Logger honouring `RUST_LOG`, defaulting to `info`.
pub fn init_logging() {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).try_init();
}
