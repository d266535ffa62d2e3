//! BB84 phase coding on the double pulse.
//!
//! Alice imprints her phase on the late pulse of the pair, Bob adds his basis
//! phase to the long arm of his interferometer, and the middle-slot detector
//! that fires gives his bit (APD A is 0, APD B is 1).

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{arrival_time_sigma, fiber_transmit, window_capture_fraction, FiberParams};
use crate::detection::{
    apd_inputs_from_state, balanced_discriminate, gated_detect_pair, sample_clicks, ApdParams,
    BothClickPolicy, ClickOutcome, ClockParams,
};
use crate::error::{ensure_non_negative, invalid, Error, Result};
use crate::optics::{
    apply_amz, source_pulse_pair, transmission_from_db, AmzParams, PhaseResponse, SourceParams,
};
use crate::stats::{wilson_95, Interval};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    Z,
    X,
}

impl Basis {
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        if rng.random::<bool>() {
            Basis::X
        } else {
            Basis::Z
        }
    }
}

/// Alice's phase for `bit` in `basis`: Z → {0, π}, X → {π/2, 3π/2}.
pub fn alice_encode(bit: bool, basis: Basis) -> f64 {
    let base = match basis {
        Basis::Z => 0.0,
        Basis::X => FRAC_PI_2,
    };
    if bit {
        base + PI
    } else {
        base
    }
}

/// Bob's analysis phase: Z → 0, X → π/2.
pub fn bob_basis_phase(basis: Basis) -> f64 {
    match basis {
        Basis::Z => 0.0,
        Basis::X => FRAC_PI_2,
    }
}

/// Bit and basis chosen by Alice for one gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AliceChoice {
    pub bit: bool,
    pub basis: Basis,
}

impl AliceChoice {
    pub const ALL: [AliceChoice; 4] = [
        AliceChoice { bit: false, basis: Basis::Z },
        AliceChoice { bit: true, basis: Basis::Z },
        AliceChoice { bit: false, basis: Basis::X },
        AliceChoice { bit: true, basis: Basis::X },
    ];

    /// Draws the bit, then the basis.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let bit = rng.random::<bool>();
        let basis = Basis::random(rng);
        Self { bit, basis }
    }

    fn index(self) -> usize {
        match (self.basis, self.bit) {
            (Basis::Z, false) => 0,
            (Basis::Z, true) => 1,
            (Basis::X, false) => 2,
            (Basis::X, true) => 3,
        }
    }
}

/// Complete optical and electronic description of the link.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkConfig {
    pub source: SourceParams,
    pub alice: AmzParams,
    pub fiber: FiberParams,
    pub bob: AmzParams,
    pub apd_a: ApdParams,
    pub apd_b: ApdParams,
    pub clock: ClockParams,
    pub both_policy: BothClickPolicy,
    /// Insertion loss of Bob's phase modulator.
    pub bob_modulator_loss_db: f64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            source: SourceParams::default(),
            alice: AmzParams::default(),
            fiber: FiberParams::default(),
            bob: AmzParams::default(),
            apd_a: ApdParams::default(),
            apd_b: ApdParams::default(),
            clock: ClockParams::default(),
            both_policy: BothClickPolicy::default(),
            bob_modulator_loss_db: 0.0,
        }
    }
}

impl LinkConfig {
    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        self.alice.validate()?;
        self.fiber.validate()?;
        self.bob.validate()?;
        self.apd_a.validate()?;
        self.apd_b.validate()?;
        self.clock.validate()?;
        ensure_non_negative("bob_modulator_loss_db", self.bob_modulator_loss_db)?;
        let separation_s = self.alice.delay_ns * 1e-9;
        if self.fiber.pol_drift_time_s <= separation_s {
            return Err(invalid(
                "pol_drift_time_s",
                "polarization must be stable over the pulse separation",
            ));
        }
        Ok(())
    }

    /// Fraction of the arriving pulse inside Bob's gate.
    pub fn capture(&self) -> Result<f64> {
        window_capture_fraction(
            arrival_time_sigma(&self.fiber, &self.source),
            self.apd_a.gate_width_ps,
        )
    }
}

/// Outcome of one gate of the protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub gate_index: u64,
    pub alice_bit: bool,
    pub alice_basis: Basis,
    pub bob_basis: Basis,
    pub outcome: ClickOutcome,
    /// Bob's bit when exactly one detector is credited.
    pub inferred_bit: Option<bool>,
}

/// Runs one gate through the full optical chain.
///
/// `phase_offset_rad` is added to Bob's long-arm phase (drift). Random draws:
/// two uniforms for the detectors, then a tie-break for a double click under
/// [`BothClickPolicy::RandomBoth`].
pub fn run_trial<R: Rng + ?Sized>(
    link: &LinkConfig,
    gate_index: u64,
    alice_choice: AliceChoice,
    bob_basis: Basis,
    phase_offset_rad: f64,
    rng: &mut R,
) -> Result<TrialRecord> {
    let alice = link
        .alice
        .with_phase_offset(alice_encode(alice_choice.bit, alice_choice.basis));
    let pair = source_pulse_pair(&link.source, &alice)?;
    let mut received = fiber_transmit(&pair, &link.fiber)?;
    received.attenuate(transmission_from_db(link.bob_modulator_loss_db));
    let bob = link
        .bob
        .with_phase_offset(bob_basis_phase(bob_basis) + phase_offset_rad);
    let out = apply_amz(&received, &bob)?;
    let (mu_a, mu_b) = apd_inputs_from_state(&out, &link.clock, link.capture()?)?;
    let outcome = gated_detect_pair(mu_a, mu_b, &link.apd_a, &link.apd_b, rng)?;
    let inferred_bit = balanced_discriminate(outcome, link.both_policy, rng);
    Ok(TrialRecord {
        gate_index,
        alice_bit: alice_choice.bit,
        alice_basis: alice_choice.basis,
        bob_basis,
        outcome,
        inferred_bit,
    })
}

/// The link with Bob's interferometer output precomputed for each of
/// Alice's four phases; equivalent to [`run_trial`] but without
/// re-propagating the state every gate.
#[derive(Debug, Clone)]
pub struct PreparedLink {
    link: LinkConfig,
    responses: [PhaseResponse; 4],
    gain: f64,
}

impl PreparedLink {
    pub fn new(link: &LinkConfig) -> Result<Self> {
        link.validate()?;
        let mut responses = Vec::with_capacity(4);
        for choice in AliceChoice::ALL {
            let alice = link.alice.with_phase_offset(alice_encode(choice.bit, choice.basis));
            let pair = source_pulse_pair(&link.source, &alice)?;
            let received = fiber_transmit(&pair, &link.fiber)?;
            let slot = link.clock.resolve_slot(received.n_slots() + link.bob.delay_slots)?;
            responses.push(PhaseResponse::new(&received, &link.bob, slot)?);
        }
        let gain = transmission_from_db(link.bob_modulator_loss_db) * link.capture()?;
        Ok(Self {
            link: link.clone(),
            responses: responses.try_into().expect("four responses"),
            gain,
        })
    }

    pub fn link(&self) -> &LinkConfig {
        &self.link
    }

    /// Mean photon numbers `(A, B)` inside the gate.
    pub fn apd_inputs(&self, choice: AliceChoice, bob_phase_offset_rad: f64) -> [f64; 2] {
        let phase = self.link.bob.phase_rad + bob_phase_offset_rad;
        self.responses[choice.index()]
            .mean_photons(phase)
            .map(|mu| mu * self.gain)
    }

    /// Click probabilities `(A, B)`.
    pub fn click_probabilities(&self, choice: AliceChoice, bob_phase_offset_rad: f64) -> [f64; 2] {
        let [mu_a, mu_b] = self.apd_inputs(choice, bob_phase_offset_rad);
        // inputs are non-negative by construction
        [
            crate::detection::click_probability(mu_a, &self.link.apd_a).unwrap_or(f64::NAN),
            crate::detection::click_probability(mu_b, &self.link.apd_b).unwrap_or(f64::NAN),
        ]
    }

    /// Same contract and random draws as [`run_trial`].
    pub fn trial<R: Rng + ?Sized>(
        &self,
        gate_index: u64,
        alice_choice: AliceChoice,
        bob_basis: Basis,
        phase_offset_rad: f64,
        rng: &mut R,
    ) -> TrialRecord {
        let [pa, pb] =
            self.click_probabilities(alice_choice, bob_basis_phase(bob_basis) + phase_offset_rad);
        let outcome = sample_clicks(pa, pb, rng);
        let inferred_bit = balanced_discriminate(outcome, self.link.both_policy, rng);
        TrialRecord {
            gate_index,
            alice_bit: alice_choice.bit,
            alice_basis: alice_choice.basis,
            bob_basis,
            outcome,
            inferred_bit,
        }
    }
}

/// Keeps records with matching bases and a resolved bit, in order.
pub fn sift(records: &[TrialRecord]) -> Vec<TrialRecord> {
    records
        .iter()
        .filter(|r| r.alice_basis == r.bob_basis && r.inferred_bit.is_some())
        .copied()
        .collect()
}

/// Gate-level totals of a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GateTally {
    pub gates: u64,
    /// Gates with at least one click.
    pub clicks: u64,
    /// Gates credited with a bit.
    pub resolved: u64,
}

impl GateTally {
    pub fn from_records(gates: u64, records: &[TrialRecord]) -> Self {
        Self {
            gates,
            clicks: records
                .iter()
                .filter(|r| r.outcome != ClickOutcome::None)
                .count() as u64,
            resolved: records.iter().filter(|r| r.inferred_bit.is_some()).count() as u64,
        }
    }

    pub fn merge(self, other: Self) -> Self {
        Self {
            gates: self.gates + other.gates,
            clicks: self.clicks + other.clicks,
            resolved: self.resolved + other.resolved,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QberReport {
    pub sifted_count: u64,
    pub error_count: u64,
    pub qber: f64,
    /// Wilson 95% interval on `qber`.
    pub qber_ci: Interval,
    /// Gates with any click per gate.
    pub raw_rate_per_gate: f64,
    /// Sifted bits per resolved gate.
    pub sift_fraction: f64,
}

/// Error rate of the sifted key. An empty key is reported as
/// [`Error::UndefinedQber`] rather than 0.
pub fn estimate_qber(sifted: &[TrialRecord], tally: GateTally) -> Result<QberReport> {
    let sifted_count = sifted.len() as u64;
    if sifted_count == 0 {
        return Err(Error::UndefinedQber);
    }
    let error_count = sifted
        .iter()
        .filter(|r| r.inferred_bit != Some(r.alice_bit))
        .count() as u64;
    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    Ok(QberReport {
        sifted_count,
        error_count,
        qber: error_count as f64 / sifted_count as f64,
        qber_ci: wilson_95(error_count, sifted_count),
        raw_rate_per_gate: ratio(tally.clicks, tally.gates),
        sift_fraction: ratio(sifted_count, tally.resolved),
    })
}

/// `(1 - V) / 2`.
pub fn qber_from_visibility(visibility: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&visibility) {
        return Err(invalid(
            "visibility",
            format!("must lie in [0, 1], got {visibility}"),
        ));
    }
    Ok((1.0 - visibility) / 2.0)
}
