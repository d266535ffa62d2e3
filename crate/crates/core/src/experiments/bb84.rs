//! End-to-end BB84 sessions.

use rayon::prelude::*;
use serde::Serialize;

use super::analytic::analytic_click_probability_at;
use super::drift::phase_drift_sample;
use super::engine::{domain, gaussian_average, GateStreams, CHUNK_GATES};
use super::{predicted_visibility, ScenarioConfig};
use crate::detection::ClickOutcome;
use crate::error::{Error, Result};
use crate::protocol::{
    alice_encode, bob_basis_phase, estimate_qber, qber_from_visibility, sift, AliceChoice, Basis,
    GateTally, PreparedLink, QberReport, TrialRecord,
};

/// Whether the session produced a QBER.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum QberStatus {
    Ok(QberReport),
    /// No sifted bits, so the error rate is undefined.
    Undefined,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bb84Session {
    pub tally: GateTally,
    pub qber: QberStatus,
    /// Expected probability of at least one click per gate.
    pub analytic_raw_rate: f64,
    /// Mean of the predicted visibilities of the two APDs.
    pub analytic_visibility: f64,
    pub qber_from_visibility: f64,
    /// Sifted records in gate order.
    #[serde(skip)]
    pub sifted: Vec<TrialRecord>,
}

impl Bb84Session {
    pub fn report(&self) -> Option<&QberReport> {
        match &self.qber {
            QberStatus::Ok(r) => Some(r),
            QberStatus::Undefined => None,
        }
    }

    /// Alice's sifted key bits.
    pub fn alice_key(&self) -> impl Iterator<Item = bool> + '_ {
        self.sifted.iter().map(|r| r.alice_bit)
    }

    /// Bob's sifted key bits.
    pub fn bob_key(&self) -> impl Iterator<Item = bool> + '_ {
        self.sifted.iter().filter_map(|r| r.inferred_bit)
    }
}

/// Expected any-click probability per gate, averaged over Alice's four
/// states, Bob's two bases and the phase jitter.
pub fn analytic_raw_rate(config: &ScenarioConfig) -> Result<f64> {
    analytic_click_probability_at(config, 0.0)?;
    let offset = config.alice.phase_rad - config.bob.phase_rad;
    let mut total = 0.0;
    for choice in AliceChoice::ALL {
        for basis in [Basis::Z, Basis::X] {
            let delta = offset + alice_encode(choice.bit, choice.basis) - bob_basis_phase(basis);
            let [any] = gaussian_average(config.drift.phase_jitter_sigma_rad, |d| {
                let [pa, pb] =
                    analytic_click_probability_at(config, delta - d).unwrap_or([f64::NAN; 2]);
                [1.0 - (1.0 - pa) * (1.0 - pb)]
            });
            total += any;
        }
    }
    Ok(total / 8.0)
}

/// Runs `n_gates` gates with random bits and bases on both sides.
///
/// Per-gate draws, in order: Alice's bit and basis, Bob's basis, the phase
/// drift, the two detectors and a possible double-click tie-break. The
/// settling transient starts at gate 0.
pub fn run_bb84_session(config: &ScenarioConfig, n_gates: u64) -> Result<Bb84Session> {
    config.validate()?;
    let prepared = PreparedLink::new(&config.link())?;
    let streams = GateStreams::new(config.master_seed, domain::point(domain::BB84, 0));
    let drift = &config.drift;

    let chunks = n_gates.div_ceil(CHUNK_GATES);
    let records: Vec<TrialRecord> = config.install(|| {
        (0..chunks)
            .into_par_iter()
            .map(|c| {
                let end = ((c + 1) * CHUNK_GATES).min(n_gates);
                let mut out = Vec::new();
                for g in c * CHUNK_GATES..end {
                    let mut rng = streams.gate(g);
                    let choice = AliceChoice::random(&mut rng);
                    let bob_basis = Basis::random(&mut rng);
                    let delta = phase_drift_sample(drift, g, &mut rng);
                    let r = prepared.trial(g, choice, bob_basis, delta, &mut rng);
                    if r.outcome != ClickOutcome::None {
                        out.push(r);
                    }
                }
                out
            })
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect()
    })?;

    let tally = GateTally::from_records(n_gates, &records);
    let sifted = sift(&records);
    let qber = match estimate_qber(&sifted, tally) {
        Ok(r) => QberStatus::Ok(r),
        Err(Error::UndefinedQber) => QberStatus::Undefined,
        Err(e) => return Err(e),
    };
    let [va, vb] = predicted_visibility(config)?;
    let analytic_visibility = ((va + vb) / 2.0).clamp(0.0, 1.0);
    Ok(Bb84Session {
        tally,
        qber,
        analytic_raw_rate: analytic_raw_rate(config)?,
        analytic_visibility,
        qber_from_visibility: qber_from_visibility(analytic_visibility)?,
        sifted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::FiberParams;
    use crate::detection::ApdParams;

    fn ideal() -> ScenarioConfig {
        ScenarioConfig {
            apd: ApdParams {
                dark_prob_per_gate: 0.0,
                ..ApdParams::default()
            },
            fiber: FiberParams::default().with_length(0.0),
            workers: 1,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn ideal_link_is_error_free() {
        let s = run_bb84_session(&ideal(), 200_000).unwrap();
        let r = s.report().unwrap();
        assert_eq!(r.error_count, 0);
        assert_eq!(r.qber, 0.0);
        assert!(r.sifted_count > 100);
        assert!(s.alice_key().eq(s.bob_key()));
        assert_eq!(s.qber_from_visibility, 0.0);
    }

    #[test]
    fn empty_session_is_undefined() {
        let mut c = ideal();
        c.source.mean_photons_mu = 0.0;
        let s = run_bb84_session(&c, 1000).unwrap();
        assert_eq!(s.qber, QberStatus::Undefined);
        let json = serde_json::to_string(&s).unwrap();
        assert!(json.contains("\"status\":\"undefined\""));
    }

    #[test]
    fn raw_rate_matches_prediction() {
        let c = ideal();
        let n = 300_000;
        let s = run_bb84_session(&c, n).unwrap();
        let p = s.analytic_raw_rate;
        let sigma = crate::stats::binomial_sigma(p, n);
        let rate = s.tally.clicks as f64 / n as f64;
        assert!((rate - p).abs() < 4.0 * sigma, "{rate} vs {p}");
    }
}
