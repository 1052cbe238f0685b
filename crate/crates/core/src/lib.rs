//! Test-campaign toolkit for radio-connected LVDC microgrids: IEC 61850
//! style message codecs, CEI telemetry records, TCP/UDP transports, a
//! deterministic network emulator, loss/RTT/throughput measurement and an
//! LTE link-budget model.
//!
//! Numeric code is generic over the float type; the aliases below pin it
//! to `f64` for ordinary use.

pub mod campaign;
pub mod iec;
pub mod measure;
pub mod netem;
pub mod radio;
pub mod seed;
pub mod telemetry;
pub mod transport;
mod wire;

/// Scalar used by the concrete aliases.
pub type Real = f64;

pub type RadioNode = radio::RadioNode<Real>;
pub type PropagationParams = radio::PropagationParams<Real>;
pub type LinkBudget = radio::LinkBudget<Real>;
pub type CoverageThresholds = radio::CoverageThresholds<Real>;
pub type RasterSpec = radio::RasterSpec<Real>;
pub type CoverageRaster = radio::CoverageRaster<Real>;
pub type CpePoint = radio::CpePoint<Real>;
pub type RadioMetricSample = radio::RadioMetricSample<Real>;
