use std::io::Read;

use num_traits::Float;
use serde::Serialize;

use super::{c, linear_to_db, RadioError};

/// Resource blocks in a 20 MHz carrier.
pub const DEFAULT_N_PRB: u32 = 100;
pub const RSRQ_TOLERANCE_DB: f64 = 0.5;

/// One row of a drive-test style metric log; any metric may be missing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RadioMetricSample<F> {
    pub t_s: F,
    pub rssi_dbm: Option<F>,
    pub rsrp_dbm: Option<F>,
    pub rsrq_db: Option<F>,
    pub sinr_db: Option<F>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ViolationKind {
    RsrpAboveRssi { excess_db: f64 },
    RsrqIdentity { deviation_db: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricViolation {
    pub index: usize,
    pub t_s: f64,
    pub kind: ViolationKind,
}

/// Flags samples with RSRP above RSSI, or whose RSRQ deviates from
/// `10 log10(n_prb) + RSRP - RSSI` by more than half a dB.
pub fn validate_metric_series<F: Float>(samples: &[RadioMetricSample<F>], n_prb: u32) -> Vec<MetricViolation> {
    let prb_db = linear_to_db(c::<F>(f64::from(n_prb.max(1))));
    let tol = c::<F>(RSRQ_TOLERANCE_DB);
    let mut out = Vec::new();
    for (index, s) in samples.iter().enumerate() {
        let t_s = s.t_s.to_f64().unwrap_or(f64::NAN);
        if let (Some(rssi), Some(rsrp)) = (s.rssi_dbm, s.rsrp_dbm) {
            if rsrp > rssi {
                out.push(MetricViolation {
                    index,
                    t_s,
                    kind: ViolationKind::RsrpAboveRssi {
                        excess_db: (rsrp - rssi).to_f64().unwrap_or(f64::NAN),
                    },
                });
            }
            if let Some(rsrq) = s.rsrq_db {
                let deviation = rsrq - (prb_db + rsrp - rssi);
                if deviation.abs() > tol {
                    out.push(MetricViolation {
                        index,
                        t_s,
                        kind: ViolationKind::RsrqIdentity {
                            deviation_db: deviation.to_f64().unwrap_or(f64::NAN),
                        },
                    });
                }
            }
        }
    }
    out
}

const METRIC_COLUMNS: [&str; 5] = ["t_s", "rssi_dbm", "rsrp_dbm", "rsrq_db", "sinr_db"];

/// Reads `t_s,rssi_dbm,rsrp_dbm,rsrq_db,sinr_db` rows; empty cells are
/// missing metrics. Column order is free, extra columns are rejected.
pub fn read_metric_csv<R: Read>(input: R) -> Result<Vec<RadioMetricSample<f64>>, RadioError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = rdr.headers()?.clone();
    let mut index = [usize::MAX; 5];
    for (i, h) in headers.iter().enumerate() {
        match METRIC_COLUMNS.iter().position(|c| *c == h) {
            Some(k) => index[k] = i,
            None => return Err(RadioError::MetricFile(format!("unknown column {h:?}"))),
        }
    }
    if index[0] == usize::MAX {
        return Err(RadioError::MetricFile("missing column \"t_s\"".to_owned()));
    }
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = row + 2;
        let cell = |k: usize| -> Result<Option<f64>, RadioError> {
            if index[k] == usize::MAX {
                return Ok(None);
            }
            match rec.get(index[k]).unwrap_or("") {
                "" => Ok(None),
                v => v.parse::<f64>().map(Some).map_err(|_| {
                    RadioError::MetricFile(format!("line {line}: {} is not a number: {v:?}", METRIC_COLUMNS[k]))
                }),
            }
        };
        let t_s = cell(0)?
            .ok_or_else(|| RadioError::MetricFile(format!("line {line}: missing t_s")))?;
        out.push(RadioMetricSample {
            t_s,
            rssi_dbm: cell(1)?,
            rsrp_dbm: cell(2)?,
            rsrq_db: cell(3)?,
            sinr_db: cell(4)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(rssi: f64, rsrp: f64, rsrq: f64) -> RadioMetricSample<f64> {
        RadioMetricSample {
            t_s: 0.0,
            rssi_dbm: Some(rssi),
            rsrp_dbm: Some(rsrp),
            rsrq_db: Some(rsrq),
            sinr_db: None,
        }
    }

    #[test]
    fn consistent_series_is_clean() {
        let s: Vec<_> = (0..50)
            .map(|i| {
                let rssi = -60.0 - i as f64 * 0.3;
                let rsrp = rssi - 28.0;
                sample(rssi, rsrp, 20.0 + rsrp - rssi)
            })
            .collect();
        assert!(validate_metric_series(&s, DEFAULT_N_PRB).is_empty());
    }

    #[test]
    fn rsrp_above_rssi() {
        let v = validate_metric_series(&[sample(-70.0, -69.0, 21.0)], 100);
        assert!(v
            .iter()
            .any(|m| matches!(m.kind, ViolationKind::RsrpAboveRssi { excess_db } if excess_db == 1.0)));
    }

    #[test]
    fn rsrq_off_by_one() {
        let v = validate_metric_series(&[sample(-60.0, -90.0, -9.0)], 100);
        assert_eq!(v.len(), 1);
        let ViolationKind::RsrqIdentity { deviation_db } = v[0].kind else {
            panic!()
        };
        assert!((deviation_db - 1.0).abs() < 1e-9);
        // within tolerance
        assert!(validate_metric_series(&[sample(-60.0, -90.0, -9.6)], 100).is_empty());
    }

    #[test]
    fn partial_rows_skip_identity() {
        let mut s = sample(-60.0, -90.0, 0.0);
        s.rsrq_db = None;
        assert!(validate_metric_series(&[s], 100).is_empty());
    }

    #[test]
    fn csv_reading() {
        let text = "t_s,rssi_dbm,rsrp_dbm,rsrq_db,sinr_db\n0,-60,-90,-10,12\n1,,-91,,\n";
        let rows = read_metric_csv(text.as_bytes()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].rssi_dbm, None);
        assert_eq!(rows[1].rsrp_dbm, Some(-91.0));
        assert!(read_metric_csv("t_s,foo\n".as_bytes()).is_err());
        assert!(read_metric_csv("t_s,rssi_dbm\n0,abc\n".as_bytes()).is_err());
    }
}
