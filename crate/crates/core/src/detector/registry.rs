use std::path::Path;

use super::{DetectorAdapter, DetectorFamily, ToyDetector};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DetectorInfo {
    pub name: &'static str,
    pub family: DetectorFamily,
    /// Whether this build can run the detector.
    pub available: bool,
}

pub const KNOWN_DETECTORS: [DetectorInfo; 5] = [
    DetectorInfo {
        name: "toy",
        family: DetectorFamily::OneStage,
        available: true,
    },
    DetectorInfo {
        name: "yolov2",
        family: DetectorFamily::OneStage,
        available: false,
    },
    DetectorInfo {
        name: "yolov3",
        family: DetectorFamily::OneStage,
        available: false,
    },
    DetectorInfo {
        name: "faster-rcnn",
        family: DetectorFamily::TwoStage,
        available: false,
    },
    DetectorInfo {
        name: "mask-rcnn",
        family: DetectorFamily::TwoStage,
        available: false,
    },
];

pub fn detector_info(name: &str) -> Result<DetectorInfo> {
    KNOWN_DETECTORS.iter().find(|d| d.name == name).copied().ok_or_else(|| {
        let names: Vec<_> = KNOWN_DETECTORS.iter().map(|d| d.name).collect();
        Error::Config(format!("unknown detector {name:?}; known: {}", names.join(", ")))
    })
}

/// Instantiates a detector by registry name. `weights` overrides the
/// bundled toy weights.
pub fn load_detector(name: &str, weights: Option<&Path>) -> Result<Box<dyn DetectorAdapter>> {
    let info = detector_info(name)?;
    match info.name {
        "toy" => Ok(Box::new(match weights {
            Some(p) => ToyDetector::load(p)?,
            None => ToyDetector::bundled()?,
        })),
        other => Err(Error::Capability(format!(
            "{other} needs externally converted COCO weights and an adapter plug-in, which this build does not include"
        ))),
    }
}
