//! Pad-and-crop so arbitrary image sizes meet the solver's divisibility
//! requirement. Dense grids and images pad by edge replication; sparse
//! observations pad with invalid pixels so no synthetic measurements appear.

use depthfill_core::{DepthGrid, GridError, RgbImage, SparseObservation};

pub fn padded_extent(n: usize, factor: usize) -> usize {
    n.div_ceil(factor) * factor
}

pub fn pad_sparse(obs: &SparseObservation, factor: usize) -> Result<SparseObservation, GridError> {
    let (height, width) = obs.shape();
    let (ph, pw) = (padded_extent(height, factor), padded_extent(width, factor));
    if (ph, pw) == (height, width) {
        return Ok(obs.clone());
    }
    let mut values = vec![0.0; ph * pw];
    let mut mask = vec![false; ph * pw];
    let mut confidence = vec![0.0; ph * pw];
    for row in 0..height {
        for col in 0..width {
            let src = row * width + col;
            let dst = row * pw + col;
            values[dst] = obs.values()[src];
            mask[dst] = obs.mask()[src];
            confidence[dst] = obs.confidence()[src];
        }
    }
    SparseObservation::with_confidence(ph, pw, values, mask, confidence)
}

pub fn pad_depth(grid: &DepthGrid, factor: usize) -> Result<DepthGrid, GridError> {
    let (height, width) = grid.shape();
    let (ph, pw) = (padded_extent(height, factor), padded_extent(width, factor));
    if (ph, pw) == (height, width) {
        return Ok(grid.clone());
    }
    let mut values = vec![0.0; ph * pw];
    let mut valid = vec![false; ph * pw];
    for row in 0..ph {
        for col in 0..pw {
            let src = row.min(height - 1) * width + col.min(width - 1);
            values[row * pw + col] = grid.values()[src];
            valid[row * pw + col] = grid.valid()[src];
        }
    }
    DepthGrid::new(ph, pw, values, valid, grid.space())
}

pub fn pad_image(image: &RgbImage, factor: usize) -> Result<RgbImage, GridError> {
    let (height, width) = (image.height(), image.width());
    let (ph, pw) = (padded_extent(height, factor), padded_extent(width, factor));
    let mut data = Vec::with_capacity(ph * pw);
    for row in 0..ph {
        for col in 0..pw {
            data.push(image.pixel(row.min(height - 1), col.min(width - 1)));
        }
    }
    RgbImage::new(ph, pw, data)
}

pub fn crop_depth(grid: &DepthGrid, height: usize, width: usize) -> Result<DepthGrid, GridError> {
    if grid.shape() == (height, width) {
        return Ok(grid.clone());
    }
    let mut values = vec![0.0; height * width];
    let mut valid = vec![false; height * width];
    for row in 0..height {
        for col in 0..width {
            let src = row * grid.width() + col;
            values[row * width + col] = grid.values()[src];
            valid[row * width + col] = grid.valid()[src];
        }
    }
    DepthGrid::new(height, width, values, valid, grid.space())
}
