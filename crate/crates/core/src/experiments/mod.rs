//! Scenario runners: counting probability versus distance, temperature
//! fringe scans, visibility estimation, phase drift and BB84 sessions.
//!
//! Every Monte Carlo gate draws from its own counter-based stream keyed by
//! `(master_seed, experiment point, gate index)`, and counts are combined
//! with an integer sum, so results do not depend on the worker count.

pub mod analytic;
pub mod bb84;
pub mod calibrate;
pub mod drift;
pub mod engine;
pub mod fit;
pub mod fringe;
pub mod sweep;

use serde::{Deserialize, Serialize};

use crate::channel::FiberParams;
use crate::detection::{ApdParams, BothClickPolicy, ClockParams};
use crate::error::{ensure_non_negative, invalid, Result};
use crate::optics::{AmzParams, SourceParams};
use crate::protocol::LinkConfig;

pub use analytic::{
    analytic_click_probability, analytic_click_probability_at, averaged_click_probability,
    predicted_visibility, visibility_ceiling,
};
pub use bb84::{run_bb84_session, Bb84Session};
pub use calibrate::{calibrate_jitter, calibrate_visibility};
pub use drift::phase_drift_sample;
pub use fringe::{estimate_visibility, run_fringe_scan, FringeResult, VisibilityEstimate};
pub use sweep::{run_distance_sweep, DistanceSweep, SweepRow};

/// Phase noise on Bob's interferometer.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftParams {
    /// Standard deviation of the independent per-gate phase jitter.
    pub phase_jitter_sigma_rad: f64,
    /// Phase error right after a temperature step.
    pub settle_drift_rad: f64,
    /// Decay constant of the settling transient, in gates.
    pub settle_tau_gates: f64,
}

impl DriftParams {
    pub fn validate(&self) -> Result<()> {
        ensure_non_negative("phase_jitter_sigma_rad", self.phase_jitter_sigma_rad)?;
        ensure_non_negative("settle_drift_rad", self.settle_drift_rad)?;
        ensure_non_negative("settle_tau_gates", self.settle_tau_gates)?;
        Ok(())
    }
}

/// How gate outcomes are sampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    /// One Bernoulli trial per detector per gate.
    #[default]
    PerGate,
    /// Per-gate trials while the settling transient is non-negligible, then
    /// multinomial counts over blocks of gates with the jitter integrated out.
    /// Same count distribution as `PerGate` because jitter is independent
    /// between gates.
    Aggregated,
}

/// Everything needed to run an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub source: SourceParams,
    pub alice: AmzParams,
    pub bob: AmzParams,
    pub fiber: FiberParams,
    pub apd: ApdParams,
    /// Overrides for APD B; `None` means identical to `apd`.
    pub apd_b: Option<ApdParams>,
    pub clock: ClockParams,
    pub drift: DriftParams,
    pub both_policy: BothClickPolicy,
    pub bob_modulator_loss_db: f64,
    /// Gates per experiment point.
    pub n_gates: u64,
    pub master_seed: u64,
    pub engine: Engine,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            source: SourceParams::default(),
            alice: AmzParams::default(),
            bob: AmzParams::default(),
            fiber: FiberParams::default(),
            apd: ApdParams::default(),
            apd_b: None,
            clock: ClockParams::default(),
            drift: DriftParams::default(),
            both_policy: BothClickPolicy::default(),
            bob_modulator_loss_db: 0.0,
            n_gates: 10_000_000,
            master_seed: 1,
            engine: Engine::default(),
            workers: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_gates == 0 {
            return Err(invalid("n_gates", "must be >= 1"));
        }
        self.drift.validate()?;
        self.link().validate()
    }

    pub fn apd_b(&self) -> &ApdParams {
        self.apd_b.as_ref().unwrap_or(&self.apd)
    }

    pub fn link(&self) -> LinkConfig {
        LinkConfig {
            source: self.source.clone(),
            alice: self.alice.clone(),
            fiber: self.fiber.clone(),
            bob: self.bob.clone(),
            apd_a: self.apd.clone(),
            apd_b: self.apd_b().clone(),
            clock: self.clock.clone(),
            both_policy: self.both_policy,
            bob_modulator_loss_db: self.bob_modulator_loss_db,
        }
    }

    /// Configuration warnings that do not prevent a run.
    pub fn warnings(&self) -> Vec<String> {
        self.clock.warnings()
    }

    /// Runs `f` on a pool with `self.workers` threads.
    pub fn install<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| invalid("workers", e.to_string()))?;
        Ok(pool.install(f))
    }
}
