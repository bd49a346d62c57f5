//! Run configuration file (TOML). Every section is optional and defaults to
//! the detector's published settings.
//!
//! ```toml
//! [[anchors]]
//! stride = 8
//! widths = [16.0, 24.0]
//! aspect_ratio = 0.41
//!
//! [assignment]
//! steps = [{ t_neg = 0.4, t_pos = 0.5, t_vis = 0.5 }]
//!
//! [loss]
//! sigma = 0.5
//!
//! [nms]
//! variant = "cosine"
//! nt = 0.3
//!
//! [eval]
//! iou_thresh = 0.5
//! subset = "reasonable"
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::anchors::AnchorLevelConfig;
use crate::assignment::Thresholds;
use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::losses::LossConfig;
use crate::nms::{NmsVariant, PostprocessConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssignmentConfig {
    /// Threshold set per refinement step.
    pub steps: Vec<Thresholds<f64>>,
    pub histogram_bins: usize,
}

impl Default for AssignmentConfig {
    fn default() -> Self {
        Self {
            steps: vec![Thresholds::step1(), Thresholds::step2()],
            histogram_bins: 10,
        }
    }
}

/// NMS and postprocess settings; `nt` feeds greedy/linear/cosine and
/// `sigma` the gaussian variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NmsConfig {
    pub variant: String,
    pub nt: f64,
    pub sigma: f64,
    pub conf_thresh: f64,
    pub pre_top_k: usize,
    pub final_top_k: usize,
}

impl Default for NmsConfig {
    fn default() -> Self {
        let p = PostprocessConfig::<f64>::default();
        Self {
            variant: p.variant.name().to_string(),
            nt: 0.3,
            sigma: 0.5,
            conf_thresh: p.conf_thresh,
            pre_top_k: p.pre_top_k,
            final_top_k: p.final_top_k,
        }
    }
}

impl NmsConfig {
    pub fn variant(&self) -> Result<NmsVariant<f64>> {
        NmsVariant::from_name(&self.variant, self.nt, self.sigma)
    }

    pub fn postprocess(&self) -> Result<PostprocessConfig<f64>> {
        Ok(PostprocessConfig {
            conf_thresh: self.conf_thresh,
            pre_top_k: self.pre_top_k,
            variant: self.variant()?,
            final_top_k: self.final_top_k,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub anchors: Vec<AnchorLevelConfig<f64>>,
    pub assignment: AssignmentConfig,
    pub loss: LossConfig<f64>,
    pub nms: NmsConfig,
    pub eval: EvalConfig<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            anchors: AnchorLevelConfig::pedestrian_default(),
            assignment: AssignmentConfig::default(),
            loss: LossConfig::default(),
            nms: NmsConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.anchors.is_empty() {
            return Err(Error::Config("at least one anchor level is required".into()));
        }
        for level in &self.anchors {
            level.validate()?;
        }
        if self.assignment.steps.is_empty() {
            return Err(Error::Config("at least one threshold step is required".into()));
        }
        for t in &self.assignment.steps {
            t.validate()?;
        }
        if self.assignment.histogram_bins == 0 {
            return Err(Error::Config("histogram_bins must be >= 1".into()));
        }
        self.loss.validate()?;
        self.nms.variant()?;
        self.eval.validate()?;
        Ok(())
    }

    /// Thresholds of the first refinement step.
    pub fn thresholds(&self) -> Thresholds<f64> {
        self.assignment.steps[0]
    }
}
