use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Label carried by a figure record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FigureLabel {
    Equation,
    Diagram,
    Photo,
    Plot,
    Table,
    Multichart,
    Unclassified,
}

impl FigureLabel {
    /// The five singleton classes, in class-probability order.
    pub const SINGLETON: [FigureLabel; 5] = [
        FigureLabel::Equation,
        FigureLabel::Diagram,
        FigureLabel::Photo,
        FigureLabel::Plot,
        FigureLabel::Table,
    ];

    /// Types that count towards figure densities (equations are excluded).
    pub const DENSITY_TYPES: [FigureLabel; 4] = [
        FigureLabel::Diagram,
        FigureLabel::Photo,
        FigureLabel::Plot,
        FigureLabel::Table,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            FigureLabel::Equation => "equation",
            FigureLabel::Diagram => "diagram",
            FigureLabel::Photo => "photo",
            FigureLabel::Plot => "plot",
            FigureLabel::Table => "table",
            FigureLabel::Multichart => "multichart",
            FigureLabel::Unclassified => "unclassified",
        }
    }

    pub fn is_singleton(&self) -> bool {
        self.class_index().is_some()
    }

    /// Position in [`FigureLabel::SINGLETON`].
    pub fn class_index(&self) -> Option<usize> {
        FigureLabel::SINGLETON.iter().position(|l| l == self)
    }

    /// Labels a user may propose through the verification endpoint.
    pub fn is_verifiable(&self) -> bool {
        *self != FigureLabel::Unclassified
    }
}

impl fmt::Display for FigureLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown figure label `{0}`")]
pub struct UnknownLabel(pub String);

impl FromStr for FigureLabel {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "equation" => FigureLabel::Equation,
            "diagram" => FigureLabel::Diagram,
            "photo" => FigureLabel::Photo,
            // legacy alias
            "plot" | "visualization" => FigureLabel::Plot,
            "table" => FigureLabel::Table,
            "multichart" | "multi-chart" => FigureLabel::Multichart,
            "unclassified" => FigureLabel::Unclassified,
            _ => return Err(UnknownLabel(s.to_string())),
        })
    }
}
