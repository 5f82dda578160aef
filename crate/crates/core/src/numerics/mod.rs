//! Numerical kernels shared by the analysis and simulation modules.

pub mod gain;
pub mod linalg;
pub mod ode;
pub mod random;

pub use gain::{frequency_sweep_peak, is_hurwitz, l2_gain, sigma_max_at, GainQuery, SweepPeak};
pub use linalg::{abs_matrix, eigenvalues, spectral_norm};
pub use ode::{rk4_step, Rk4};
pub use random::{sample_bernoulli, sample_exponential, sample_uniform_node, stream_rng};
