//! Default anchor pyramid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::scalar::Scalar;

/// One pyramid level: grid stride, anchor widths, and a width/height ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorLevelConfig<T> {
    pub stride: u32,
    pub widths: Vec<T>,
    pub aspect_ratio: T,
}

impl<T: Scalar> AnchorLevelConfig<T> {
    pub fn new(stride: u32, widths: Vec<T>, aspect_ratio: T) -> Result<Self> {
        let cfg = Self {
            stride,
            widths,
            aspect_ratio,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 {
            return Err(Error::InvalidArgument("anchor stride must be >= 1".into()));
        }
        if self.widths.is_empty() {
            return Err(Error::InvalidArgument("anchor level has no widths".into()));
        }
        if let Some(w) = self.widths.iter().find(|w| !(**w > T::zero() && w.is_finite())) {
            return Err(Error::InvalidArgument(format!("anchor width must be positive, got {w}")));
        }
        if !(self.aspect_ratio > T::zero() && self.aspect_ratio.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "aspect ratio must be positive, got {}",
                self.aspect_ratio
            )));
        }
        Ok(())
    }

    /// Anchor height for a given width (`aspect_ratio` is width / height).
    pub fn height_for(&self, width: T) -> T {
        width / self.aspect_ratio
    }

    /// The four-level pedestrian configuration: strides 8..64, two widths
    /// per level, aspect ratio 0.41.
    pub fn pedestrian_default() -> Vec<Self> {
        [(8, [16.0, 24.0]), (16, [32.0, 48.0]), (32, [64.0, 96.0]), (64, [128.0, 160.0])]
            .into_iter()
            .map(|(stride, widths)| Self {
                stride,
                widths: widths.iter().map(|w| T::lit(*w)).collect(),
                aspect_ratio: T::lit(0.41),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct Anchor<T> {
    pub bbox: BBox<T>,
    pub level_index: usize,
    pub grid_row: u32,
    pub grid_col: u32,
    pub width_index: usize,
}

/// Number of grid cells along one image dimension.
pub fn feature_map_size(image_dim: u32, stride: u32) -> Result<u32> {
    if image_dim == 0 || stride == 0 {
        return Err(Error::InvalidArgument(format!(
            "feature map size needs positive inputs, got dim {image_dim} stride {stride}"
        )));
    }
    Ok(image_dim.div_ceil(stride))
}

/// Anchors for every level in `(level, row, col, width_index)` order.
///
/// Centers sit at `((col + 0.5) * stride, (row + 0.5) * stride)` and boxes
/// are not clipped to the image.
pub fn generate_anchors<T: Scalar>(
    image_w: u32,
    image_h: u32,
    configs: &[AnchorLevelConfig<T>],
) -> Result<Vec<Anchor<T>>> {
    if configs.is_empty() {
        return Err(Error::InvalidArgument("no anchor levels configured".into()));
    }
    let mut total = 0usize;
    for cfg in configs {
        cfg.validate()?;
        let cols = feature_map_size(image_w, cfg.stride)? as usize;
        let rows = feature_map_size(image_h, cfg.stride)? as usize;
        total += rows * cols * cfg.widths.len();
    }

    let mut out = Vec::with_capacity(total);
    for (level_index, cfg) in configs.iter().enumerate() {
        let cols = feature_map_size(image_w, cfg.stride)?;
        let rows = feature_map_size(image_h, cfg.stride)?;
        let stride = T::lit(f64::from(cfg.stride));
        for row in 0..rows {
            let cy = (T::lit(f64::from(row)) + T::half()) * stride;
            for col in 0..cols {
                let cx = (T::lit(f64::from(col)) + T::half()) * stride;
                for (width_index, &w) in cfg.widths.iter().enumerate() {
                    out.push(Anchor {
                        bbox: BBox::from_center(cx, cy, w, cfg.height_for(w))?,
                        level_index,
                        grid_row: row,
                        grid_col: col,
                        width_index,
                    });
                }
            }
        }
    }
    Ok(out)
}
