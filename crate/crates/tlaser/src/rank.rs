//! Rank policies: energy-threshold selection, fixed rank-ratio selection,
//! and per-layer allocation driven by selection flags.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensorize::WeightKind;

/// How the truncation rank of a layer is chosen from its spectrum.
///
/// The two energy modes exist because cumulative energy can be measured on
/// squared or unsquared tube norms; squared is the default. `task_loss` is
/// recognized in configuration files but rejected: it requires running the
/// model, which this library does not do.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum RankPolicy {
    /// Smallest rank whose squared tube norms reach fraction `tau` of the
    /// total squared spectrum energy.
    EnergySquared { tau: f64 },
    /// Same with unsquared tube norms.
    EnergyUnsquared { tau: f64 },
    /// `max(1, floor(rho * r_max))` where `r_max` is the spectrum length.
    FixedRatio { rho: f64 },
    /// A fixed rank, clamped to the spectrum length.
    FixedRank { r: usize },
    /// Placeholder for task-loss-driven selection; always rejected.
    TaskLoss,
}

impl RankPolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            RankPolicy::EnergySquared { tau } | RankPolicy::EnergyUnsquared { tau } => {
                if !(tau > 0.0 && tau <= 1.0) {
                    return Err(Error::invalid(format!(
                        "energy threshold tau must be in (0, 1], got {tau}"
                    )));
                }
            }
            RankPolicy::FixedRatio { rho } => {
                if !(rho > 0.0 && rho <= 1.0) {
                    return Err(Error::invalid(format!(
                        "rank ratio rho must be in (0, 1], got {rho}"
                    )));
                }
            }
            RankPolicy::FixedRank { r } => {
                if r == 0 {
                    return Err(Error::invalid("fixed rank must be positive"));
                }
            }
            RankPolicy::TaskLoss => {
                return Err(Error::invalid(
                    "task_loss rank selection requires model inference and is not supported",
                ));
            }
        }
        Ok(())
    }

    /// Apply the policy to a non-increasing spectrum of tube norms.
    pub fn select(&self, tube_norms: &[f64]) -> Result<usize> {
        self.validate()?;
        match *self {
            RankPolicy::EnergySquared { tau } => energy_rank(tube_norms, tau, true),
            RankPolicy::EnergyUnsquared { tau } => energy_rank(tube_norms, tau, false),
            RankPolicy::FixedRatio { rho } => Ok(ratio_rank(tube_norms.len(), rho)),
            RankPolicy::FixedRank { r } => Ok(r.min(tube_norms.len()).max(1)),
            RankPolicy::TaskLoss => unreachable!("rejected by validate"),
        }
    }
}

/// Smallest `r` such that the leading `r` entries carry at least fraction
/// `tau` of the spectrum's energy. With `squared` the energy of an entry is
/// its square, otherwise the entry itself.
pub fn energy_rank(tube_norms: &[f64], tau: f64, squared: bool) -> Result<usize> {
    if tube_norms.is_empty() {
        return Err(Error::invalid("empty spectrum"));
    }
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::invalid(format!(
            "energy threshold tau must be in (0, 1], got {tau}"
        )));
    }
    let weight = |x: f64| if squared { x * x } else { x };
    let total: f64 = tube_norms.iter().map(|&x| weight(x)).sum();
    if total == 0.0 {
        return Err(Error::DegenerateInput(
            "all-zero spectrum has no energy rank".into(),
        ));
    }
    // Accumulating in the same order as `total` makes the final cumulative
    // sum equal `total` exactly, so tau = 1.0 always resolves.
    let mut cumulative = 0.0;
    for (i, &x) in tube_norms.iter().enumerate() {
        cumulative += weight(x);
        if cumulative >= tau * total {
            return Ok(i + 1);
        }
    }
    Ok(tube_norms.len())
}

/// `max(1, floor(rho * r_max))`: the fraction of the maximum rank retained.
pub fn ratio_rank(r_max: usize, rho: f64) -> usize {
    ((rho * r_max as f64).floor() as usize).clamp(1, r_max.max(1))
}

/// Per-layer selection: whether the layer is compressed and, if so, how its
/// rank is chosen.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerSelection {
    pub layer_name: String,
    /// The binary selection flag; unselected layers pass through unchanged.
    pub delta: bool,
    pub policy: RankPolicy,
    pub weight_kind: WeightKind,
}

/// Resolve the rank of every selected layer from its spectrum.
///
/// Unselected layers are absent from the result. Every selected layer must
/// have a spectrum in `spectra` (ratio and fixed policies only use its
/// length).
pub fn allocate_ranks(
    selections: &[LayerSelection],
    spectra: &BTreeMap<String, Vec<f64>>,
) -> Result<BTreeMap<String, usize>> {
    let mut out = BTreeMap::new();
    for sel in selections {
        if !sel.delta {
            continue;
        }
        let spectrum = spectra.get(&sel.layer_name).ok_or_else(|| {
            Error::Config(format!(
                "no spectrum available for selected layer '{}'",
                sel.layer_name
            ))
        })?;
        let r = sel.policy.select(spectrum).map_err(|e| {
            Error::Config(format!("layer '{}': {}", sel.layer_name, e))
        })?;
        out.insert(sel.layer_name.clone(), r);
    }
    Ok(out)
}
