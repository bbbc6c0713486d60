//! Gridded consistency error between a reference survey and a GP map.
//!
//! Reference beams are binned into square cells; each valid cell's error is
//! the absolute difference between the mean reference depth and the map's
//! posterior mean depth at the cell center. The RMSE is taken over valid
//! cells.

use rbpf_svgp::svgp::{PosteriorCache, SvgpModel};
use rbpf_svgp::types::Rect;

use crate::error::{Error, Result};
use crate::grid::GridMap;

/// Query batch for dense posterior evaluation.
pub const QUERY_BATCH: usize = 2048;

/// Mean reference depth per cell, ready to be compared against any number
/// of maps.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceGrid {
    pub depths: GridMap,
}

impl ReferenceGrid {
    /// Bins map-frame `[x, y, z]` beams over their bounding box.
    ///
    /// Depths inside a cell are summed in sorted order, so the grid does not
    /// depend on the order of the beams.
    pub fn new(beams: &[[f64; 3]], cell_size: f64) -> Result<Self> {
        if beams.is_empty() {
            return Err(Error::InvalidInput("consistency needs at least one beam".into()));
        }
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(Error::InvalidInput(format!("cell size {cell_size}")));
        }
        if beams.iter().any(|b| !b.iter().all(|v| v.is_finite())) {
            return Err(Error::InvalidInput("reference beams must be finite".into()));
        }
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for b in beams {
            for k in 0..2 {
                lo[k] = lo[k].min(b[k]);
                hi[k] = hi[k].max(b[k]);
            }
        }
        Self::within(beams, &Rect::new(lo, hi), cell_size)
    }

    /// Bins the beams falling inside `area`; the rest are ignored.
    pub fn within(beams: &[[f64; 3]], area: &Rect<f64>, cell_size: f64) -> Result<Self> {
        let mut grid = GridMap::covering(area, cell_size)?;
        let mut keyed: Vec<(usize, f64)> = beams
            .iter()
            .filter_map(|b| {
                let (c, r) = grid.cell_of([b[0], b[1]])?;
                Some((r * grid.ncols + c, b[2]))
            })
            .collect();
        keyed.sort_unstable_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let mut i = 0;
        while i < keyed.len() {
            let cell = keyed[i].0;
            let mut sum = 0.0;
            let mut n = 0usize;
            while i < keyed.len() && keyed[i].0 == cell {
                sum += keyed[i].1;
                n += 1;
                i += 1;
            }
            grid.set(cell % grid.ncols, cell / grid.ncols, sum / n as f64);
        }
        if grid.valid_count() == 0 {
            return Err(Error::NoValidCells);
        }
        Ok(Self { depths: grid })
    }

    /// Per-cell absolute error against `model` and its RMSE.
    pub fn evaluate(&self, model: &SvgpModel<f64>) -> Result<(GridMap, f64)> {
        let cells: Vec<(usize, usize, f64)> = self.depths.valid_cells().collect();
        let centers: Vec<[f64; 2]> = cells.iter().map(|&(c, r, _)| self.depths.center(c, r)).collect();
        let mean = map_depth(model, &centers)?;
        let mut errors = GridMap::new(
            self.depths.bounds.min,
            self.depths.cell_size,
            self.depths.ncols,
            self.depths.nrows,
        )?;
        for (&(c, r, reference), m) in cells.iter().zip(mean) {
            errors.set(c, r, (reference - m).abs());
        }
        let rmse = errors.rms().ok_or(Error::NoValidCells)?;
        Ok((errors, rmse))
    }
}

/// Posterior mean depth (offset restored) at `points`, evaluated in batches.
pub fn map_depth(model: &SvgpModel<f64>, points: &[[f64; 2]]) -> Result<Vec<f64>> {
    let cache = PosteriorCache::new(model)?;
    let mut out = Vec::with_capacity(points.len());
    for chunk in points.chunks(QUERY_BATCH) {
        let (mean, _) = cache.predict_raw(chunk);
        out.extend(mean.into_iter().map(|m| m + model.depth_offset));
    }
    Ok(out)
}

/// Consistency error of `model` against map-frame reference beams.
pub fn consistency_error(
    reference: &[[f64; 3]],
    model: &SvgpModel<f64>,
    cell_size: f64,
) -> Result<(GridMap, f64)> {
    ReferenceGrid::new(reference, cell_size)?.evaluate(model)
}
