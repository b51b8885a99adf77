//! Scheme names and the common result record.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::rates::{Allocation, RateReport};
use crate::solver::Status;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    UbsbIdeal,
    LbsbIdeal,
    BlockExhaustiveIdeal,
    BlockDecentralizedIdeal,
    UbsbFinite,
    LbsbFinite,
    Ubbb,
    Lbbb,
    Decentralized,
    Direct,
    DirectEqualPower,
}

impl Scheme {
    pub const ALL: [Scheme; 11] = [
        Scheme::UbsbIdeal,
        Scheme::LbsbIdeal,
        Scheme::BlockExhaustiveIdeal,
        Scheme::BlockDecentralizedIdeal,
        Scheme::UbsbFinite,
        Scheme::LbsbFinite,
        Scheme::Ubbb,
        Scheme::Lbbb,
        Scheme::Decentralized,
        Scheme::Direct,
        Scheme::DirectEqualPower,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::UbsbIdeal => "ubsb_ideal",
            Scheme::LbsbIdeal => "lbsb_ideal",
            Scheme::BlockExhaustiveIdeal => "block_exhaustive_ideal",
            Scheme::BlockDecentralizedIdeal => "block_decentralized_ideal",
            Scheme::UbsbFinite => "ubsb_finite",
            Scheme::LbsbFinite => "lbsb_finite",
            Scheme::Ubbb => "ubbb",
            Scheme::Lbbb => "lbbb",
            Scheme::Decentralized => "decentralized",
            Scheme::Direct => "direct",
            Scheme::DirectEqualPower => "direct_equal_power",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scheme::ALL
            .into_iter()
            .find(|sc| sc.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown scheme `{s}`")))
    }
}

/// Multipliers of the relaxed programs, mapped back to network indices.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DualInfo {
    /// Rate-constraint multipliers, one per source.
    pub gamma: Vec<f64>,
    /// Relay-power multipliers, one per relay.
    pub mu: Vec<f64>,
    /// Relay-power nonnegativity multipliers `[j][k][n]`.
    pub lambda: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub status: Status,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub gap: f64,
    pub fallback_used: bool,
    /// Waterfilling problems solved.
    pub waterfillings: usize,
    /// Subcarriers helped by two or more relays, per source.
    pub violation_count: Option<Vec<usize>>,
}

impl Diagnostics {
    /// Closed-form schemes.
    pub fn closed_form(waterfillings: usize) -> Self {
        Self {
            status: Status::Converged,
            iterations: 0,
            kkt_residual: 0.0,
            gap: 0.0,
            fallback_used: false,
            waterfillings,
            violation_count: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub scheme: Scheme,
    pub min_rate: f64,
    pub per_source: Vec<f64>,
    pub allocation: Allocation,
    pub report: RateReport,
    pub diagnostics: Diagnostics,
    pub duals: Option<DualInfo>,
}

impl SolveResult {
    pub fn from_report(
        scheme: Scheme,
        allocation: Allocation,
        report: RateReport,
        diagnostics: Diagnostics,
    ) -> Self {
        Self {
            scheme,
            min_rate: report.min_rate,
            per_source: report.per_source.clone(),
            allocation,
            report,
            diagnostics,
            duals: None,
        }
    }
}
