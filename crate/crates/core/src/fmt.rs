//! Float formatting for CSV output.

use serde::{Deserialize, Serialize};

/// How floats are written to CSV.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FloatFormat {
    /// Scientific notation with 17 significant digits.
    #[default]
    Sci17,
    /// Shortest decimal that round-trips.
    Shortest,
}

impl FloatFormat {
    pub fn format(self, x: f64) -> String {
        match self {
            FloatFormat::Sci17 => fmt_f64(x),
            FloatFormat::Shortest => format!("{x}"),
        }
    }
}

/// 17 significant digits, scientific notation; round-trips exactly.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}
