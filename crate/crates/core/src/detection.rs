//! Balanced pair of gated InGaAs APDs.
//!
//! Each APD clicks in a gate with probability `1 - (1 - p_dark) e^{-η μ}`
//! (Poisson photon number, independent dark events). The two detectors are
//! sampled independently and the discriminators report which one fired.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_fraction, ensure_non_negative, ensure_positive, invalid, Result};
use crate::optics::{Port, TimeBinState};

/// What the quoted dark-count probability refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DarkCountScope {
    /// Probability per APD per gate.
    #[default]
    PerApd,
    /// Probability that either APD of the balanced pair fires in a dark gate.
    PerPair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApdParams {
    pub quantum_efficiency: f64,
    pub dark_prob_per_gate: f64,
    pub dark_count_scope: DarkCountScope,
    pub gate_width_ps: f64,
    /// Informational.
    pub operating_temp_c: f64,
    /// Probability that a click re-triggers in the following gate. Folded in
    /// as a stationary excess click probability; 0 disables it.
    pub afterpulse_prob: f64,
}

impl Default for ApdParams {
    fn default() -> Self {
        Self {
            quantum_efficiency: 0.10,
            dark_prob_per_gate: 2.1e-7,
            dark_count_scope: DarkCountScope::PerApd,
            gate_width_ps: 750.0,
            operating_temp_c: -108.0,
            afterpulse_prob: 0.0,
        }
    }
}

impl ApdParams {
    pub fn validate(&self) -> Result<()> {
        ensure_fraction("quantum_efficiency", self.quantum_efficiency)?;
        ensure_fraction("dark_prob_per_gate", self.dark_prob_per_gate)?;
        if self.dark_prob_per_gate >= 1.0 {
            return Err(invalid("dark_prob_per_gate", "must be < 1"));
        }
        ensure_positive("gate_width_ps", self.gate_width_ps)?;
        ensure_fraction("afterpulse_prob", self.afterpulse_prob)?;
        Ok(())
    }

    /// Dark-count probability of a single APD in one gate.
    pub fn dark_prob_single(&self) -> f64 {
        match self.dark_count_scope {
            DarkCountScope::PerApd => self.dark_prob_per_gate,
            DarkCountScope::PerPair => -(0.5 * (-self.dark_prob_per_gate).ln_1p()).exp_m1(),
        }
    }
}

/// Gate timing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClockParams {
    pub rep_rate_hz: f64,
    /// Slot the gate is aligned to; `None` picks the middle slot.
    pub target_slot: Option<usize>,
}

impl Default for ClockParams {
    fn default() -> Self {
        Self {
            rep_rate_hz: 1e6,
            target_slot: None,
        }
    }
}

/// Rate above which afterpulsing is expected to matter.
pub const AFTERPULSE_SAFE_RATE_HZ: f64 = 1e6;

impl ClockParams {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("rep_rate_hz", self.rep_rate_hz)
    }

    /// Gated slot for a state with `n_slots` slots.
    pub fn resolve_slot(&self, n_slots: usize) -> Result<usize> {
        let slot = self.target_slot.unwrap_or((n_slots.max(1) - 1) / 2);
        if slot >= n_slots {
            return Err(invalid(
                "target_slot",
                format!("slot {slot} outside 0..{n_slots}"),
            ));
        }
        Ok(slot)
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.rep_rate_hz > AFTERPULSE_SAFE_RATE_HZ {
            out.push(format!(
                "repetition rate {} Hz exceeds 1 MHz; afterpulsing is not modeled beyond the \
                 stationary afterpulse_prob term",
                self.rep_rate_hz
            ));
        }
        out
    }
}

/// Joint result of one gate on the balanced pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClickOutcome {
    None,
    ApdA,
    ApdB,
    Both,
}

impl ClickOutcome {
    pub fn from_clicks(a: bool, b: bool) -> Self {
        match (a, b) {
            (false, false) => Self::None,
            (true, false) => Self::ApdA,
            (false, true) => Self::ApdB,
            (true, true) => Self::Both,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Self::None => 0,
            Self::ApdA => 1,
            Self::ApdB => 2,
            Self::Both => 3,
        }
    }

    pub fn clicked(self, port: Port) -> bool {
        matches!(
            (self, port),
            (Self::ApdA | Self::Both, Port::A) | (Self::ApdB | Self::Both, Port::B)
        )
    }
}

/// How a gate in which both APDs fired is resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BothClickPolicy {
    #[default]
    DiscardBoth,
    RandomBoth,
}

/// Click probability of one APD receiving `mean_photons` on average.
pub fn click_probability(mean_photons: f64, apd: &ApdParams) -> Result<f64> {
    ensure_non_negative("mean_photons", mean_photons)?;
    let dark = apd.dark_prob_single();
    // 1 - (1 - d) e^{-x} written so that x = 0 returns d exactly
    let p = dark - (1.0 - dark) * (-apd.quantum_efficiency * mean_photons).exp_m1();
    Ok(p + apd.afterpulse_prob * p * (1.0 - p))
}

/// Samples one gate with identical detectors.
pub fn gated_detect<R: Rng + ?Sized>(
    mu_a: f64,
    mu_b: f64,
    apd: &ApdParams,
    rng: &mut R,
) -> Result<ClickOutcome> {
    gated_detect_pair(mu_a, mu_b, apd, apd, rng)
}

/// Samples one gate; draws one uniform for APD A, then one for APD B.
pub fn gated_detect_pair<R: Rng + ?Sized>(
    mu_a: f64,
    mu_b: f64,
    apd_a: &ApdParams,
    apd_b: &ApdParams,
    rng: &mut R,
) -> Result<ClickOutcome> {
    let pa = click_probability(mu_a, apd_a)?;
    let pb = click_probability(mu_b, apd_b)?;
    Ok(sample_clicks(pa, pb, rng))
}

pub(crate) fn sample_clicks<R: Rng + ?Sized>(pa: f64, pb: f64, rng: &mut R) -> ClickOutcome {
    let a = rng.random::<f64>() < pa;
    let b = rng.random::<f64>() < pb;
    ClickOutcome::from_clicks(a, b)
}

/// Maps a gate outcome to a detector bit: APD A is 0, APD B is 1.
///
/// A uniform is drawn only for a double click under `RandomBoth`.
pub fn balanced_discriminate<R: Rng + ?Sized>(
    outcome: ClickOutcome,
    policy: BothClickPolicy,
    rng: &mut R,
) -> Option<bool> {
    match outcome {
        ClickOutcome::None => None,
        ClickOutcome::ApdA => Some(false),
        ClickOutcome::ApdB => Some(true),
        ClickOutcome::Both => match policy {
            BothClickPolicy::DiscardBoth => None,
            BothClickPolicy::RandomBoth => Some(rng.random::<bool>()),
        },
    }
}

/// Mean photon numbers `(μ_A, μ_B)` inside the gate.
pub fn apd_inputs_from_state(
    state: &TimeBinState,
    clock: &ClockParams,
    capture: f64,
) -> Result<(f64, f64)> {
    ensure_fraction("capture", capture)?;
    let slot = clock.resolve_slot(state.n_slots())?;
    Ok((
        state.slot_mean_photons(slot, Port::A) * capture,
        state.slot_mean_photons(slot, Port::B) * capture,
    ))
}
