//! HTTP API and command-line front end for the budgeter.

pub mod api;
pub mod cli;
pub mod view;

use budgeter_core::RandomSource;

/// Noise source used at finalize.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseMode {
    #[default]
    Secure,
    #[cfg(feature = "test-hooks")]
    Seeded(u64),
    #[cfg(feature = "test-hooks")]
    ZeroNoise,
}

impl NoiseMode {
    pub fn source(self) -> RandomSource {
        match self {
            NoiseMode::Secure => RandomSource::secure(),
            #[cfg(feature = "test-hooks")]
            NoiseMode::Seeded(seed) => RandomSource::seeded(seed),
            #[cfg(feature = "test-hooks")]
            NoiseMode::ZeroNoise => RandomSource::zero_noise(),
        }
    }
}
