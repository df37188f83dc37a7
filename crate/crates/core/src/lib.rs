//! Opportunistic downlink interference alignment (ODIA) for K-cell MIMO
//! downlink networks.
//!
//! The numeric modules are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below pin them to double precision, which is what the harness and
//! the CLI use.

pub mod baselines;
pub mod channel;
pub mod error;
pub mod feedback;
pub mod harness;
pub mod matlin;
pub mod metrics;
pub mod odia;
pub mod scalar;
pub mod seodia;

pub use channel::{derive_seed, generate_drop, validate_config, NetworkConfig};
pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Complex64 = num_complex::Complex<f64>;

pub type CMatrix = matlin::CMat<f64>;
pub type OrthonormalBasis = matlin::OrthonormalBasis<f64>;
pub type ChannelDrop = channel::ChannelDrop<f64>;
pub type UserDecision = odia::UserDecision<f64>;
pub type CellPrecoder = odia::CellPrecoder<f64>;
pub type ScheduleOutcome = odia::ScheduleOutcome<f64>;
pub type Codebook = feedback::Codebook<f64>;
pub type QuantizedFeedback = feedback::QuantizedFeedback<f64>;
pub type SeOdiaParams = seodia::SeOdiaParams<f64>;
pub type SeOdiaOutcome = seodia::SeOdiaOutcome<f64>;
pub type StreamMetricTable = baselines::StreamMetricTable<f64>;
pub type RateReport = metrics::RateReport<f64>;

pub type CMatrix32 = matlin::CMat<f32>;
pub type ChannelDrop32 = channel::ChannelDrop<f32>;
pub type Codebook32 = feedback::Codebook<f32>;
