//! Anomaly identification from the forward log-likelihood gradient and anomaly
//! classification over a bank of per-class sequence models.

mod classify;
mod identify;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

pub use classify::{
    class_windows, extract_window, mean_class_tpr, reactivity_sweep, train_classifier, ClassifierModel, LabeledWindow, ReactivityGrid,
    DEFAULT_WINDOW,
};
pub use identify::{calibrate, detect_all, Detector, IdentificationModel, DEFAULT_DEBOUNCE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AnomalyClass {
    #[serde(rename = "HC")]
    HumanCollision,
    #[serde(rename = "TC")]
    ToolCollision,
    #[serde(rename = "OS")]
    ObjectSlip,
    #[serde(rename = "NO")]
    NoObject,
    #[serde(rename = "WC")]
    WallCollision,
}

impl AnomalyClass {
    pub const ALL: [AnomalyClass; 5] = [
        AnomalyClass::HumanCollision,
        AnomalyClass::ToolCollision,
        AnomalyClass::ObjectSlip,
        AnomalyClass::NoObject,
        AnomalyClass::WallCollision,
    ];

    pub fn code(self) -> &'static str {
        match self {
            AnomalyClass::HumanCollision => "HC",
            AnomalyClass::ToolCollision => "TC",
            AnomalyClass::ObjectSlip => "OS",
            AnomalyClass::NoObject => "NO",
            AnomalyClass::WallCollision => "WC",
        }
    }

    pub fn long_name(self) -> &'static str {
        match self {
            AnomalyClass::HumanCollision => "human_collision",
            AnomalyClass::ToolCollision => "tool_collision",
            AnomalyClass::ObjectSlip => "object_slip",
            AnomalyClass::NoObject => "no_object",
            AnomalyClass::WallCollision => "wall_collision",
        }
    }

    /// Whether the anomaly leaves the robot without its object.
    pub fn loses_object(self) -> bool {
        matches!(self, AnomalyClass::ObjectSlip | AnomalyClass::NoObject)
    }
}

impl fmt::Display for AnomalyClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for AnomalyClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        AnomalyClass::ALL
            .into_iter()
            .find(|c| c.code().eq_ignore_ascii_case(s) || c.long_name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown anomaly class '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyFlag {
    pub t: f64,
    pub node_id: String,
    pub gradient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyLabel {
    pub class: AnomalyClass,
    /// Cumulative window log-likelihood per class, in classifier label order.
    pub log_likelihoods: Vec<(AnomalyClass, f64)>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_codes_parse_both_ways() {
        for c in AnomalyClass::ALL {
            assert_eq!(c.code().parse::<AnomalyClass>().unwrap(), c);
            assert_eq!(c.long_name().parse::<AnomalyClass>().unwrap(), c);
        }
        assert!("XX".parse::<AnomalyClass>().is_err());
    }
}
