//! Deployment pre-analysis: a log-distance link budget with a height-gain
//! correction, SINR, coverage classes and the raster behind a coverage map,
//! plus consistency checks for measured RSSI/RSRP/RSRQ series.
//!
//! Everything is generic over the float type; [`crate::Real`] is the
//! default instantiation.

mod coverage;
mod metrics;

use num_traits::Float;
use serde::{Deserialize, Serialize};

pub use coverage::{
    coverage_grid, cpe_points, write_points_csv, write_raster_csv, CoverageRaster, CpePoint, RasterCell,
    RasterSpec,
};
pub use metrics::{
    read_metric_csv, validate_metric_series, MetricViolation, RadioMetricSample, ViolationKind,
    DEFAULT_N_PRB, RSRQ_TOLERANCE_DB,
};

#[derive(Debug, thiserror::Error)]
pub enum RadioError {
    #[error("distance {distance_m} m is below the reference distance {ref_m} m")]
    DistanceBelowReference { distance_m: f64, ref_m: f64 },
    #[error("transmitter and receiver share a position")]
    CoincidentNodes,
    #[error("coverage extent is empty")]
    EmptyExtent,
    #[error("raster resolution must be positive")]
    InvalidResolution,
    #[error("invalid radio node: {0}")]
    InvalidNode(String),
    #[error("invalid propagation parameters: {0}")]
    InvalidParams(String),
    #[error("metric file: {0}")]
    MetricFile(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn c<F: Float>(v: f64) -> F {
    F::from(v).expect("constant representable in the float type")
}

fn to_f64<F: Float>(v: F) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

pub fn db_to_linear<F: Float>(db: F) -> F {
    c::<F>(10.0).powf(db / c(10.0))
}

pub fn linear_to_db<F: Float>(lin: F) -> F {
    c::<F>(10.0) * lin.log10()
}

/// Free-space path loss with distance in km and frequency in MHz.
pub fn fspl_db<F: Float>(d_km: F, f_mhz: F) -> F {
    c::<F>(32.45) + c::<F>(20.0) * f_mhz.log10() + c::<F>(20.0) * d_km.log10()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeRole {
    BaseStation,
    Cpe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadioNode<F> {
    pub name: String,
    pub x_m: F,
    pub y_m: F,
    pub antenna_height_m: F,
    pub tx_power_dbm: F,
    pub antenna_gain_dbi: F,
    pub role: NodeRole,
}

impl<F: Float> RadioNode<F> {
    pub fn new(
        name: impl Into<String>,
        (x_m, y_m): (F, F),
        antenna_height_m: F,
        tx_power_dbm: F,
        antenna_gain_dbi: F,
        role: NodeRole,
    ) -> Result<Self, RadioError> {
        let node = Self {
            name: name.into(),
            x_m,
            y_m,
            antenna_height_m,
            tx_power_dbm,
            antenna_gain_dbi,
            role,
        };
        node.validate()?;
        Ok(node)
    }

    pub fn validate(&self) -> Result<(), RadioError> {
        if !(self.antenna_height_m > F::zero()) || !self.antenna_height_m.is_finite() {
            return Err(RadioError::InvalidNode(format!(
                "{}: antenna height must be positive",
                self.name
            )));
        }
        let finite = [self.x_m, self.y_m, self.tx_power_dbm, self.antenna_gain_dbi];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(RadioError::InvalidNode(format!(
                "{}: position, power and gain must be finite",
                self.name
            )));
        }
        Ok(())
    }

    /// Ground distance to `other`.
    pub fn distance_to(&self, other: &Self) -> F {
        (self.x_m - other.x_m).hypot(self.y_m - other.y_m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagationParams<F> {
    pub freq_mhz: F,
    pub ref_distance_m: F,
    pub pathloss_exponent: F,
    /// dB per decade of `h_tx * h_rx / h_ref^2`.
    pub height_gain_coeff: F,
    pub ref_height_m: F,
}

impl<F: Float> Default for PropagationParams<F> {
    fn default() -> Self {
        Self {
            freq_mhz: c(2350.0),
            ref_distance_m: c(1.0),
            pathloss_exponent: c(3.2),
            height_gain_coeff: c(20.0),
            ref_height_m: c(10.0),
        }
    }
}

impl<F: Float> PropagationParams<F> {
    /// Pure free-space propagation: exponent 2, no height term.
    pub fn free_space(freq_mhz: F) -> Self {
        Self {
            freq_mhz,
            pathloss_exponent: c(2.0),
            height_gain_coeff: F::zero(),
            ..Self::default()
        }
    }

    /// `band40` additionally pins the carrier to 2300..=2400 MHz.
    pub fn validate(&self, band40: bool) -> Result<(), RadioError> {
        let bad = |m: &str| Err(RadioError::InvalidParams(m.to_owned()));
        if !(self.freq_mhz > F::zero()) {
            return bad("frequency must be positive");
        }
        if band40 && !(self.freq_mhz >= c(2300.0) && self.freq_mhz <= c(2400.0)) {
            return bad("frequency outside band 40 (2300-2400 MHz)");
        }
        if !(self.ref_distance_m > F::zero()) || !(self.ref_height_m > F::zero()) {
            return bad("reference distance and height must be positive");
        }
        if !(self.pathloss_exponent >= c(2.0)) {
            return bad("path loss exponent must be at least 2");
        }
        if !self.height_gain_coeff.is_finite() {
            return bad("height gain coefficient must be finite");
        }
        Ok(())
    }

    fn height_term(&self, h_tx: F, h_rx: F) -> F {
        let ratio = h_tx * h_rx / (self.ref_height_m * self.ref_height_m);
        self.height_gain_coeff * ratio.log10()
    }
}

/// Log-distance path loss between antennas at heights `h_tx` and `h_rx`.
pub fn path_loss<F: Float>(
    params: &PropagationParams<F>,
    distance_m: F,
    h_tx: F,
    h_rx: F,
) -> Result<F, RadioError> {
    if !(distance_m >= params.ref_distance_m) {
        return Err(RadioError::DistanceBelowReference {
            distance_m: to_f64(distance_m),
            ref_m: to_f64(params.ref_distance_m),
        });
    }
    let d0_km = params.ref_distance_m / c(1000.0);
    let spread = c::<F>(10.0) * params.pathloss_exponent * (distance_m / params.ref_distance_m).log10();
    Ok(fspl_db(d0_km, params.freq_mhz) + spread - params.height_term(h_tx, h_rx))
}

/// `tx_power + tx_gain + rx_gain - path_loss`.
pub fn received_power<F: Float>(
    tx: &RadioNode<F>,
    rx: &RadioNode<F>,
    params: &PropagationParams<F>,
) -> Result<F, RadioError> {
    let d = tx.distance_to(rx);
    if d == F::zero() {
        return Err(RadioError::CoincidentNodes);
    }
    let pl = path_loss(params, d, tx.antenna_height_m, rx.antenna_height_m)?;
    Ok(tx.tx_power_dbm + tx.antenna_gain_dbi + rx.antenna_gain_dbi - pl)
}

/// Thermal noise in dBm over `bandwidth_hz` with the receiver noise figure.
pub fn noise_floor<F: Float>(bandwidth_hz: F, noise_figure_db: F) -> F {
    c::<F>(-174.0) + linear_to_db(bandwidth_hz) + noise_figure_db
}

/// SINR in dB; an empty interference list gives the SNR.
pub fn sinr<F: Float>(prx_dbm: F, noise_dbm: F, interference_dbm: &[F]) -> F {
    let denom = interference_dbm
        .iter()
        .fold(db_to_linear(noise_dbm), |acc, &i| acc + db_to_linear(i));
    prx_dbm - linear_to_db(denom)
}

/// Coverage map colours: blue edge, green medium, red high.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoverageClass {
    Edge,
    Medium,
    High,
}

impl CoverageClass {
    pub fn as_str(self) -> &'static str {
        match self {
            CoverageClass::Edge => "edge",
            CoverageClass::Medium => "medium",
            CoverageClass::High => "high",
        }
    }

    pub fn color(self) -> &'static str {
        match self {
            CoverageClass::Edge => "blue",
            CoverageClass::Medium => "green",
            CoverageClass::High => "red",
        }
    }
}

/// Class boundaries in dB: below `edge_db` is Edge, at or above `high_db`
/// is High.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageThresholds<F> {
    pub edge_db: F,
    pub high_db: F,
}

impl<F: Float> Default for CoverageThresholds<F> {
    fn default() -> Self {
        Self {
            edge_db: F::zero(),
            high_db: c(13.0),
        }
    }
}

impl<F: Float> CoverageThresholds<F> {
    pub fn classify(&self, sinr_db: F) -> CoverageClass {
        if sinr_db < self.edge_db {
            CoverageClass::Edge
        } else if sinr_db < self.high_db {
            CoverageClass::Medium
        } else {
            CoverageClass::High
        }
    }
}

pub fn coverage_class<F: Float>(sinr_db: F) -> CoverageClass {
    CoverageThresholds::default().classify(sinr_db)
}

/// Receiver-side budget terms shared by every point of a map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget<F> {
    pub params: PropagationParams<F>,
    pub bandwidth_hz: F,
    pub noise_figure_db: F,
    pub interference_dbm: Vec<F>,
    pub thresholds: CoverageThresholds<F>,
}

impl<F: Float> Default for LinkBudget<F> {
    fn default() -> Self {
        Self {
            params: PropagationParams::default(),
            bandwidth_hz: c(20e6),
            noise_figure_db: c(7.0),
            interference_dbm: Vec::new(),
            thresholds: CoverageThresholds::default(),
        }
    }
}

impl<F: Float> LinkBudget<F> {
    pub fn noise_dbm(&self) -> F {
        noise_floor(self.bandwidth_hz, self.noise_figure_db)
    }

    pub fn sinr_for(&self, prx_dbm: F) -> F {
        sinr(prx_dbm, self.noise_dbm(), &self.interference_dbm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(x: f64, h: f64, p: f64, g: f64, role: NodeRole) -> RadioNode<f64> {
        RadioNode::new("n", (x, 0.0), h, p, g, role).unwrap()
    }

    #[test]
    fn fspl_anchor_points() {
        let p = PropagationParams {
            height_gain_coeff: 0.0,
            ..PropagationParams::default()
        };
        let oracle = 32.45 + 20.0 * 2350f64.log10() - 60.0;
        assert!((path_loss(&p, 1.0, 10.0, 10.0).unwrap() - oracle).abs() < 1e-12);
        assert!((oracle - 39.87).abs() < 0.01);
        let fs = PropagationParams::free_space(2350.0);
        let at_1km = path_loss(&fs, 1000.0, 10.0, 10.0).unwrap();
        assert!((at_1km - (32.45 + 20.0 * 2350f64.log10())).abs() < 1e-9);
        assert!((at_1km - 99.87).abs() < 0.01);
    }

    #[test]
    fn doubling_distance() {
        let p = PropagationParams::<f64>::default();
        let a = path_loss(&p, 300.0, 25.0, 3.0).unwrap();
        let b = path_loss(&p, 600.0, 25.0, 3.0).unwrap();
        assert!((b - a - 32.0 * 2f64.log10()).abs() < 1e-9);
    }

    #[test]
    fn below_reference_rejected() {
        let p = PropagationParams::<f64>::default();
        assert!(matches!(
            path_loss(&p, 0.5, 1.0, 1.0),
            Err(RadioError::DistanceBelowReference { .. })
        ));
    }

    #[test]
    fn heights_lower_loss() {
        let p = PropagationParams::<f64>::default();
        let low = path_loss(&p, 500.0, 10.0, 3.0).unwrap();
        let high = path_loss(&p, 500.0, 25.0, 3.0).unwrap();
        assert!(high < low);
    }

    #[test]
    fn link_budget_example() {
        let bs = node(0.0, 10.0, 35.0, 4.0, NodeRole::BaseStation);
        let cpe = node(1000.0, 10.0, 23.0, 12.5, NodeRole::Cpe);
        let prx = received_power(&bs, &cpe, &PropagationParams::free_space(2350.0)).unwrap();
        let oracle = 35.0 + 4.0 + 12.5 - (32.45 + 20.0 * 2350f64.log10());
        assert!((prx - oracle).abs() < 1e-9);
        assert!((prx + 48.4).abs() < 0.05);
        assert!(matches!(
            received_power(&bs, &bs, &PropagationParams::default()),
            Err(RadioError::CoincidentNodes)
        ));
    }

    #[test]
    fn reciprocity() {
        let a = node(0.0, 25.0, 30.0, 4.0, NodeRole::BaseStation);
        let b = node(700.0, 3.0, 30.0, 4.0, NodeRole::Cpe);
        let p = PropagationParams::default();
        assert_eq!(received_power(&a, &b, &p).unwrap(), received_power(&b, &a, &p).unwrap());
    }

    #[test]
    fn thermal_noise() {
        assert!((noise_floor(20e6_f64, 7.0) + 93.99).abs() < 0.01);
        assert_eq!(noise_floor(1.0_f64, 0.0), -174.0);
        let d = noise_floor(40e6_f64, 7.0) - noise_floor(20e6, 7.0);
        assert!((d - 3.0103).abs() < 1e-4);
    }

    #[test]
    fn sinr_examples() {
        assert!((sinr(-74.0_f64, -94.0, &[]) - 20.0).abs() < 1e-12);
        let s = sinr(-74.0_f64, -94.0, &[-94.0]);
        assert!((s - 16.99).abs() < 0.01);
        assert!(sinr(-94.0_f64, -94.0, &[]).abs() < 1e-12);
    }

    #[test]
    fn classes() {
        assert_eq!(coverage_class(-5.0), CoverageClass::Edge);
        assert_eq!(coverage_class(-0.001), CoverageClass::Edge);
        assert_eq!(coverage_class(0.0), CoverageClass::Medium);
        assert_eq!(coverage_class(5.0_f32), CoverageClass::Medium);
        assert_eq!(coverage_class(13.0), CoverageClass::High);
        assert_eq!(coverage_class(20.0), CoverageClass::High);
    }

    #[test]
    fn db_roundtrip() {
        for db in [-174.0, -93.99, 0.0, 12.5, 60.0] {
            assert!((linear_to_db(db_to_linear(db)) - db).abs() < 1e-9);
        }
    }

    #[test]
    fn node_validation() {
        assert!(RadioNode::new("x", (0.0, 0.0), 0.0, 1.0, 1.0, NodeRole::Cpe).is_err());
        assert!(RadioNode::new("x", (0.0, 0.0), 3.0, f64::INFINITY, 1.0, NodeRole::Cpe).is_err());
        let mut p = PropagationParams::<f64>::default();
        assert!(p.validate(true).is_ok());
        p.freq_mhz = 1800.0;
        assert!(p.validate(true).is_err());
        assert!(p.validate(false).is_ok());
        p.pathloss_exponent = 1.5;
        assert!(p.validate(false).is_err());
    }
}
