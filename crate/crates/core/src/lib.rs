//! Physics-informed neural networks with exact nested derivatives.
//!
//! Small multilayer perceptrons are trained so that PDE residuals, boundary
//! and interface conditions and observation data vanish at collocation
//! points. The crate covers the full pipeline: jets and parameter gradients
//! ([`autodiff`]), networks ([`network`]), collocation sets ([`sampling`]),
//! residual operators ([`physics`]), composite losses ([`loss`]), ADAM and
//! quasi-Newton training ([`optim`]), scenario builders ([`cases`]), metrics
//! ([`eval`]) and the operator surface ([`cli`]).

pub mod autodiff;
pub mod cases;
pub mod cli;
pub mod error;
pub mod eval;
pub mod loss;
pub mod network;
pub mod optim;
pub mod physics;
pub mod sampling;

pub use error::{Error, Result};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "PINN_FORGE_THREADS";

/// Sizes the global worker pool from `PINN_FORGE_THREADS` the first time it
/// is called. Later calls (and a pool built elsewhere) are left alone.
pub fn init_threads() {
    static ONCE: std::sync::Once = std::sync::Once::new();
    ONCE.call_once(|| {
        if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()) {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
        }
    });
}
