use std::io::Write;

use num_traits::Float;
use serde::Serialize;

use super::{c, path_loss, received_power, CoverageClass, LinkBudget, RadioError, RadioNode};

/// Area and receiver template for a coverage raster. Cells are squares of
/// `resolution_m` evaluated at their centres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RasterSpec<F> {
    pub x_min_m: F,
    pub y_min_m: F,
    pub width_m: F,
    pub height_m: F,
    pub resolution_m: F,
    pub rx_height_m: F,
    pub rx_gain_dbi: F,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RasterCell<F> {
    pub x_m: F,
    pub y_m: F,
    pub sinr_db: F,
    pub class: CoverageClass,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CpePoint<F> {
    pub name: String,
    pub x_m: F,
    pub y_m: F,
    pub distance_m: F,
    pub prx_dbm: F,
    pub sinr_db: F,
    pub class: CoverageClass,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageRaster<F> {
    pub columns: usize,
    pub rows: usize,
    /// Row-major, south to north, west to east.
    pub cells: Vec<RasterCell<F>>,
    pub points: Vec<CpePoint<F>>,
}

fn cells_along<F: Float>(extent: F, res: F) -> usize {
    (extent / res).ceil().to_usize().unwrap_or(0)
}

/// Downlink SINR from `bs` over the raster and at every CPE. Raster points
/// closer than the reference distance are evaluated at the reference
/// distance.
pub fn coverage_grid<F: Float>(
    bs: &RadioNode<F>,
    cpes: &[RadioNode<F>],
    budget: &LinkBudget<F>,
    spec: &RasterSpec<F>,
) -> Result<CoverageRaster<F>, RadioError> {
    if !(spec.resolution_m > F::zero()) {
        return Err(RadioError::InvalidResolution);
    }
    if !(spec.width_m > F::zero()) || !(spec.height_m > F::zero()) {
        return Err(RadioError::EmptyExtent);
    }
    let params = &budget.params;
    let columns = cells_along(spec.width_m, spec.resolution_m);
    let rows = cells_along(spec.height_m, spec.resolution_m);
    let half = spec.resolution_m / c(2.0);
    let eirp = bs.tx_power_dbm + bs.antenna_gain_dbi + spec.rx_gain_dbi;
    let mut cells = Vec::with_capacity(columns * rows);
    for row in 0..rows {
        let y = spec.y_min_m + c::<F>(row as f64) * spec.resolution_m + half;
        for col in 0..columns {
            let x = spec.x_min_m + c::<F>(col as f64) * spec.resolution_m + half;
            let d = (x - bs.x_m).hypot(y - bs.y_m).max(params.ref_distance_m);
            let pl = path_loss(params, d, bs.antenna_height_m, spec.rx_height_m)?;
            let sinr_db = budget.sinr_for(eirp - pl);
            cells.push(RasterCell {
                x_m: x,
                y_m: y,
                sinr_db,
                class: budget.thresholds.classify(sinr_db),
            });
        }
    }
    let points = cpe_points(bs, cpes, budget)?;
    Ok(CoverageRaster {
        columns,
        rows,
        cells,
        points,
    })
}

/// Link budget at each installed CPE.
pub fn cpe_points<F: Float>(
    bs: &RadioNode<F>,
    cpes: &[RadioNode<F>],
    budget: &LinkBudget<F>,
) -> Result<Vec<CpePoint<F>>, RadioError> {
    cpes.iter()
        .map(|cpe| {
            let prx_dbm = received_power(bs, cpe, &budget.params)?;
            let sinr_db = budget.sinr_for(prx_dbm);
            Ok(CpePoint {
                name: cpe.name.clone(),
                x_m: cpe.x_m,
                y_m: cpe.y_m,
                distance_m: bs.distance_to(cpe),
                prx_dbm,
                sinr_db,
                class: budget.thresholds.classify(sinr_db),
            })
        })
        .collect()
}

fn fmt<F: Float>(v: F, decimals: usize) -> String {
    format!("{:.decimals$}", v.to_f64().unwrap_or(f64::NAN))
}

/// `x_m,y_m,sinr_db,class`.
pub fn write_raster_csv<F: Float, W: Write>(out: W, raster: &CoverageRaster<F>) -> Result<(), RadioError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x_m", "y_m", "sinr_db", "class"])?;
    for cell in &raster.cells {
        w.write_record([
            fmt(cell.x_m, 3),
            fmt(cell.y_m, 3),
            fmt(cell.sinr_db, 4),
            cell.class.as_str().to_owned(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `name,x_m,y_m,distance_m,prx_dbm,sinr_db,class`.
pub fn write_points_csv<F: Float, W: Write>(out: W, points: &[CpePoint<F>]) -> Result<(), RadioError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["name", "x_m", "y_m", "distance_m", "prx_dbm", "sinr_db", "class"])?;
    for p in points {
        w.write_record([
            p.name.clone(),
            fmt(p.x_m, 3),
            fmt(p.y_m, 3),
            fmt(p.distance_m, 3),
            fmt(p.prx_dbm, 4),
            fmt(p.sinr_db, 4),
            p.class.as_str().to_owned(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::{NodeRole, PropagationParams};
    use super::*;

    fn bs() -> RadioNode<f64> {
        RadioNode::new("PC0", (130.0, 70.0), 25.0, 35.0, 4.0, NodeRole::BaseStation).unwrap()
    }

    fn spec(w: f64, h: f64, res: f64) -> RasterSpec<f64> {
        RasterSpec {
            x_min_m: 0.0,
            y_min_m: 0.0,
            width_m: w,
            height_m: h,
            resolution_m: res,
            rx_height_m: 3.0,
            rx_gain_dbi: 12.5,
        }
    }

    #[test]
    fn row_count() {
        let r = coverage_grid(&bs(), &[], &LinkBudget::default(), &spec(1005.0, 333.0, 10.0)).unwrap();
        assert_eq!(r.cells.len(), 101 * 34);
        assert_eq!((r.columns, r.rows), (101, 34));
    }

    #[test]
    fn bs_cell_is_maximum() {
        let r = coverage_grid(&bs(), &[], &LinkBudget::default(), &spec(400.0, 300.0, 20.0)).unwrap();
        let best = r
            .cells
            .iter()
            .max_by(|a, b| a.sinr_db.total_cmp(&b.sinr_db))
            .unwrap();
        assert!((best.x_m - 130.0).abs() <= 10.0 && (best.y_m - 70.0).abs() <= 10.0);
    }

    #[test]
    fn cpe_at_reference_is_high() {
        let cpe = RadioNode::new("near", (131.0, 70.0), 3.0, 23.0, 12.5, NodeRole::Cpe).unwrap();
        let r = coverage_grid(&bs(), &[cpe], &LinkBudget::default(), &spec(10.0, 10.0, 5.0)).unwrap();
        assert_eq!(r.points[0].class, CoverageClass::High);
        assert_eq!(r.points[0].distance_m, 1.0);
    }

    #[test]
    fn tx_power_shift_is_linear() {
        let budget = LinkBudget::default();
        let a = coverage_grid(&bs(), &[], &budget, &spec(500.0, 500.0, 25.0)).unwrap();
        let mut louder = bs();
        louder.tx_power_dbm += 6.0;
        let b = coverage_grid(&louder, &[], &budget, &spec(500.0, 500.0, 25.0)).unwrap();
        for (x, y) in a.cells.iter().zip(&b.cells) {
            assert!((y.sinr_db - x.sinr_db - 6.0).abs() < 1e-9);
        }
    }

    #[test]
    fn empty_extent_and_resolution() {
        let b = LinkBudget::default();
        assert!(matches!(
            coverage_grid(&bs(), &[], &b, &spec(0.0, 10.0, 1.0)),
            Err(RadioError::EmptyExtent)
        ));
        assert!(matches!(
            coverage_grid(&bs(), &[], &b, &spec(10.0, 10.0, 0.0)),
            Err(RadioError::InvalidResolution)
        ));
    }

    #[test]
    fn csv_shape() {
        let mut budget = LinkBudget::default();
        budget.params = PropagationParams::free_space(2350.0);
        let r = coverage_grid(&bs(), &[], &budget, &spec(30.0, 20.0, 10.0)).unwrap();
        let mut out = Vec::new();
        write_raster_csv(&mut out, &r).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 1 + 6);
        assert!(text.starts_with("x_m,y_m,sinr_db,class\n5.000,5.000,"));
    }
}
