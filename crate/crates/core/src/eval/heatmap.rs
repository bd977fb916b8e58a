use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::models::Detector;
use crate::nn::BatchMatrix;

pub const DEFAULT_RESOLUTION: usize = 200;
pub const DEFAULT_MARGIN: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
}

impl BoundingBox {
    pub fn new(xmin: f64, xmax: f64, ymin: f64, ymax: f64) -> Result<Self> {
        let ok = [xmin, xmax, ymin, ymax].iter().all(|v| v.is_finite()) && xmin < xmax && ymin < ymax;
        if !ok {
            return Err(Error::Config(format!(
                "invalid bounding box x [{xmin}, {xmax}], y [{ymin}, {ymax}]"
            )));
        }
        Ok(Self { xmin, xmax, ymin, ymax })
    }

    /// Bounding box of a 2-d dataset, widened by `margin` times its extent on
    /// every side. A flat side is widened by `margin` instead.
    pub fn around(data: &Dataset, margin: f64) -> Result<Self> {
        if data.dim() != 2 {
            return Err(Error::Config(format!(
                "heatmaps need 2-d data, got dimension {}",
                data.dim()
            )));
        }
        let bounds = data
            .bounds()
            .ok_or_else(|| Error::Config("cannot take the bounding box of an empty dataset".into()))?;
        let widen = |(lo, hi): (f64, f64)| {
            let pad = if hi > lo { (hi - lo) * margin } else { margin.max(f64::EPSILON) };
            (lo - pad, hi + pad)
        };
        let (xmin, xmax) = widen(bounds[0]);
        let (ymin, ymax) = widen(bounds[1]);
        Self::new(xmin, xmax, ymin, ymax)
    }
}

/// Scores on a regular grid. `values[j * nx + i]` belongs to the centre of
/// column `i` in row `j`; rows run along increasing y.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapGrid {
    pub bbox: BoundingBox,
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<f64>,
}

impl HeatmapGrid {
    pub fn x(&self, i: usize) -> f64 {
        cell_center(self.bbox.xmin, self.bbox.xmax, self.nx, i)
    }

    pub fn y(&self, j: usize) -> f64 {
        cell_center(self.bbox.ymin, self.bbox.ymax, self.ny, j)
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i]
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "y", "score"])?;
        for j in 0..self.ny {
            for i in 0..self.nx {
                w.write_record([
                    self.x(i).to_string(),
                    self.y(j).to_string(),
                    self.value(i, j).to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io(Path::new("<heatmap>"), e))
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

fn cell_center(lo: f64, hi: f64, n: usize, k: usize) -> f64 {
    lo + (k as f64 + 0.5) * (hi - lo) / n as f64
}

/// Grid geometry for [`heatmap`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub bbox: BoundingBox,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    pub fn new(bbox: BoundingBox, nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::Config(format!("heatmap resolution must be positive, got {nx}x{ny}")));
        }
        Ok(Self { bbox, nx, ny })
    }
}

/// Evaluates a detector's anomaly score at every grid-cell centre. Rows are
/// scored independently under `exec`.
pub fn heatmap(detector: &Detector, grid: GridSpec, exec: Execution) -> Result<HeatmapGrid> {
    if detector.input_dim() != 2 {
        return Err(Error::Config(format!(
            "heatmaps need a 2-d model, got input dimension {}",
            detector.input_dim()
        )));
    }
    let GridSpec { bbox, nx, ny } = GridSpec::new(grid.bbox, grid.nx, grid.ny)?;
    let xs: Vec<f64> = (0..nx).map(|i| cell_center(bbox.xmin, bbox.xmax, nx, i)).collect();
    let rows = exec.map_range(ny, |j| {
        let y = cell_center(bbox.ymin, bbox.ymax, ny, j);
        let mut data = Vec::with_capacity(2 * nx);
        data.extend_from_slice(&xs);
        data.extend(std::iter::repeat_n(y, nx));
        detector.score_batch(BatchMatrix::from_raw(2, nx, data)?)
    });
    let mut values = Vec::with_capacity(nx * ny);
    for row in rows {
        values.extend(row?);
    }
    if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!(
            "non-finite heatmap score at cell ({}, {})",
            bad % nx,
            bad / nx
        )));
    }
    Ok(HeatmapGrid { bbox, nx, ny, values })
}
