//! Reduce voxel-level single-trial betas to one response vector per ROI.

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::hrf_glm::BetaMap;
use crate::tensorio::{Hemisphere, RoiMaskSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregator {
    #[default]
    Mean,
    Median,
}

impl FromStr for Aggregator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Aggregator::Mean),
            "median" => Ok(Aggregator::Median),
            other => Err(Error::Config(format!("unknown aggregator {other:?}"))),
        }
    }
}

impl Aggregator {
    pub fn as_str(self) -> &'static str {
        match self {
            Aggregator::Mean => "mean",
            Aggregator::Median => "median",
        }
    }

    fn apply(self, values: &mut [f64]) -> f64 {
        match self {
            Aggregator::Mean => values.iter().sum::<f64>() / values.len() as f64,
            Aggregator::Median => {
                values.sort_by(f64::total_cmp);
                let n = values.len();
                if n % 2 == 1 {
                    values[n / 2]
                } else {
                    0.5 * (values[n / 2 - 1] + values[n / 2])
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoiResponse {
    pub subject_id: String,
    pub roi_name: String,
    pub hemisphere: Hemisphere,
    /// One value per sentence/trial.
    pub values: Vec<f64>,
}

impl RoiResponse {
    /// File name used for the per-(subject, ROI) NAT1 vector.
    pub fn file_name(&self) -> String {
        format!("{}_{}.nat", self.subject_id, self.roi_name)
    }
}

/// Splits a `<subject>_<roi>.nat` file stem; subject ids never contain `_`.
pub fn parse_response_stem(stem: &str) -> Option<(&str, &str)> {
    stem.split_once('_')
}

pub fn extract_roi_responses(
    betas: &BetaMap,
    masks: &RoiMaskSet,
    aggregator: Aggregator,
    subject_id: &str,
) -> Result<Vec<RoiResponse>> {
    masks.validate(Some(betas.n_voxels()))?;
    let mut out = Vec::with_capacity(masks.masks.len());
    for mask in &masks.masks {
        if mask.voxel_indices.is_empty() {
            return Err(Error::Validation(format!("mask {:?} is empty", mask.name)));
        }
        // fixed summation order regardless of how the mask lists its voxels
        let mut idx = mask.voxel_indices.clone();
        idx.sort_unstable();
        let mut buf = vec![0.0; idx.len()];
        let values: Vec<f64> = (0..betas.n_trials())
            .map(|i| {
                for (slot, &v) in buf.iter_mut().zip(&idx) {
                    *slot = betas.values[(i, v)];
                }
                aggregator.apply(&mut buf)
            })
            .collect();
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "ROI {:?} has a non-finite response at trial {i}",
                mask.name
            )));
        }
        out.push(RoiResponse {
            subject_id: subject_id.to_string(),
            roi_name: mask.name.clone(),
            hemisphere: mask.hemisphere,
            values,
        });
    }
    Ok(out)
}
