use rbpf_svgp::svgp::{PosteriorCache, SvgpModel};
use rbpf_svgp::types::Rect;

use crate::consistency::QUERY_BATCH;
use crate::error::Result;
use crate::grid::GridMap;

/// Dense posterior over a grid plus the inducing locations.
#[derive(Clone, Debug, PartialEq)]
pub struct MapExport {
    /// Posterior mean depth (offset restored).
    pub mean: GridMap,
    /// Marginal variance of the latent surface.
    pub variance: GridMap,
    pub inducing: Vec<[f64; 2]>,
}

pub fn export_map_grid(model: &SvgpModel<f64>, bounds: &Rect<f64>, cell_size: f64) -> Result<MapExport> {
    let mut mean = GridMap::covering(bounds, cell_size)?;
    let mut variance = mean.clone();
    let cells: Vec<(usize, usize)> = (0..mean.nrows)
        .flat_map(|r| (0..mean.ncols).map(move |c| (c, r)))
        .collect();
    let centers: Vec<[f64; 2]> = cells.iter().map(|&(c, r)| mean.center(c, r)).collect();
    let cache = PosteriorCache::new(model)?;
    for (cells, pts) in cells.chunks(QUERY_BATCH).zip(centers.chunks(QUERY_BATCH)) {
        let pred = cache.predict(pts);
        for ((&(c, r), m), v) in cells.iter().zip(pred.mean).zip(pred.variance) {
            mean.set(c, r, m + model.depth_offset);
            variance.set(c, r, v);
        }
    }
    Ok(MapExport {
        mean,
        variance,
        inducing: model.inducing.points.clone(),
    })
}
