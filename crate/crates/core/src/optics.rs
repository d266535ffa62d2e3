//! Faint-pulse source and asymmetric Mach-Zehnder interferometer (AMZ).
//!
//! A [`TimeBinState`] stores one complex amplitude per (time slot, port,
//! polarization mode). Amplitudes carry the pulse shape and
//! `mean_photons_total` carries the intensity, so the mean photon number of a
//! slot is `mean_photons_total * |amplitude|^2` summed over polarization.
//!
//! Coupler convention: a coupler with cross-coupled power fraction `k` acts on
//! the two rails as `[[t, i r], [i r, t]]` with `t = sqrt(1 - k)` and
//! `r = sqrt(k)`. The short arm is the bar path from port A, the long arm the
//! cross path. Output ports are labeled so that, in a cascade of two AMZs
//! with equal relative phases, the interfering middle slot leaves from port A.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{
    ensure_finite, ensure_fraction, ensure_non_negative, ensure_positive, invalid, Error, Result,
};

/// Upper bound on the number of time slots a state may grow to.
pub const DEFAULT_MAX_SLOTS: usize = 8;

/// Tolerance on `sum |amplitude|^2 <= 1`.
pub const NORM_TOLERANCE: f64 = 1e-12;

const SPEED_OF_LIGHT_UM_PER_NS: f64 = 299_792.458;

/// Output (or input) port of an interferometer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Port {
    A,
    B,
}

impl Port {
    pub const BOTH: [Port; 2] = [Port::A, Port::B];

    pub fn index(self) -> usize {
        match self {
            Port::A => 0,
            Port::B => 1,
        }
    }
}

/// Polarization eigenmode of the waveguide (one of the two optic axes).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Polarization {
    #[default]
    H,
    V,
}

impl Polarization {
    pub fn index(self) -> usize {
        match self {
            Polarization::H => 0,
            Polarization::V => 1,
        }
    }

    /// Jones vector `(H, V)` of this eigenmode.
    pub fn jones(self) -> Jones {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        match self {
            Polarization::H => [one, zero],
            Polarization::V => [zero, one],
        }
    }
}

/// Polarization amplitudes `(H, V)`.
pub type Jones = [Complex64; 2];

const ZERO_JONES: Jones = [Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)];

/// Power transmission of a loss given in dB.
pub fn transmission_from_db(loss_db: f64) -> f64 {
    10f64.powf(-loss_db / 10.0)
}

fn amplitude_from_db(loss_db: f64) -> f64 {
    transmission_from_db(loss_db).sqrt()
}

/// Time-bin signal: amplitudes over (slot, port, polarization) plus the
/// weak-coherent intensity scale.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeBinState {
    // [slot][port] -> (H, V)
    amplitudes: Vec<[Jones; 2]>,
    slot_duration_ns: f64,
    mean_photons_total: f64,
}

impl TimeBinState {
    /// All-zero amplitudes over `n_slots` slots.
    pub fn vacuum(n_slots: usize, slot_duration_ns: f64, mean_photons_total: f64) -> Result<Self> {
        if n_slots == 0 {
            return Err(invalid("n_slots", "a state needs at least one slot"));
        }
        ensure_positive("slot_duration_ns", slot_duration_ns)?;
        ensure_non_negative("mean_photons_total", mean_photons_total)?;
        Ok(Self {
            amplitudes: vec![[ZERO_JONES; 2]; n_slots],
            slot_duration_ns,
            mean_photons_total,
        })
    }

    /// A single normalized pulse in slot 0 on `port` with polarization `jones`.
    pub fn single_pulse(
        port: Port,
        jones: Jones,
        slot_duration_ns: f64,
        mean_photons_total: f64,
    ) -> Result<Self> {
        let norm = (jones[0].norm_sqr() + jones[1].norm_sqr()).sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(invalid("jones", "polarization vector must be non-zero"));
        }
        let mut state = Self::vacuum(1, slot_duration_ns, mean_photons_total)?;
        state.amplitudes[0][port.index()] = [jones[0] / norm, jones[1] / norm];
        Ok(state)
    }

    pub fn n_slots(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn slot_duration_ns(&self) -> f64 {
        self.slot_duration_ns
    }

    pub fn mean_photons_total(&self) -> f64 {
        self.mean_photons_total
    }

    pub fn amplitude(&self, slot: usize, port: Port, pol: Polarization) -> Complex64 {
        self.amplitudes[slot][port.index()][pol.index()]
    }

    pub fn jones(&self, slot: usize, port: Port) -> Jones {
        self.amplitudes[slot][port.index()]
    }

    pub fn set_jones(&mut self, slot: usize, port: Port, jones: Jones) {
        self.amplitudes[slot][port.index()] = jones;
    }

    /// Probability of finding the photon in `(slot, port)`, summed over polarization.
    pub fn slot_probability(&self, slot: usize, port: Port) -> f64 {
        let [h, v] = self.amplitudes[slot][port.index()];
        h.norm_sqr() + v.norm_sqr()
    }

    /// Mean photon number in `(slot, port)`.
    pub fn slot_mean_photons(&self, slot: usize, port: Port) -> f64 {
        self.mean_photons_total * self.slot_probability(slot, port)
    }

    pub fn total_probability(&self) -> f64 {
        (0..self.n_slots())
            .flat_map(|s| Port::BOTH.map(|p| self.slot_probability(s, p)))
            .sum()
    }

    /// Multiplies the intensity scale by a power transmission factor.
    pub fn attenuate(&mut self, transmission: f64) {
        self.mean_photons_total *= transmission;
    }

    /// Applies `f` to the polarization vector of every (slot, port).
    pub fn map_polarization(&mut self, mut f: impl FnMut(Jones) -> Jones) {
        for slot in &mut self.amplitudes {
            for jones in slot.iter_mut() {
                *jones = f(*jones);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.amplitudes.is_empty() {
            return Err(invalid("n_slots", "a state needs at least one slot"));
        }
        ensure_positive("slot_duration_ns", self.slot_duration_ns)?;
        ensure_non_negative("mean_photons_total", self.mean_photons_total)?;
        let total = self.total_probability();
        if !total.is_finite() || total > 1.0 + NORM_TOLERANCE {
            return Err(invalid(
                "amplitudes",
                format!("total probability {total} exceeds 1"),
            ));
        }
        Ok(())
    }
}

/// Geometry and optics of one asymmetric Mach-Zehnder interferometer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AmzParams {
    /// Long-arm delay in units of the state's slot duration.
    pub delay_slots: usize,
    /// Long-arm delay in ns.
    pub delay_ns: f64,
    /// Relative phase of the long arm.
    pub phase_rad: f64,
    /// Device temperature at which `phase_rad` holds.
    pub temperature_c: f64,
    /// Thermal coefficient of the path length difference.
    pub temp_coeff_um_per_c: f64,
    pub wavelength_um: f64,
    pub refractive_index: f64,
    /// Modal birefringence `n_H - n_V` of the waveguide.
    pub modal_birefringence: f64,
    /// Path length difference between the arms.
    pub path_length_diff_um: f64,
    /// Power fraction cross-coupled at the input coupler (port A into the long arm).
    /// `None` picks the value that equalizes the two arm amplitudes at the output coupler.
    pub coupler_in_split: Option<f64>,
    /// Power fraction cross-coupled at the output coupler.
    pub coupler_out_split: f64,
    pub arm_loss_short_db: f64,
    pub arm_loss_long_db: f64,
    /// Excess device loss common to both arms.
    pub insertion_loss_db: f64,
    /// Extra loss of the V mode relative to H.
    pub pdl_db: f64,
}

impl Default for AmzParams {
    fn default() -> Self {
        let wavelength_um = 1.55;
        let refractive_index = 1.5;
        let modal_birefringence = 0.01 * refractive_index;
        let delay_ns = 5.0;
        Self {
            delay_slots: 1,
            delay_ns,
            phase_rad: 0.0,
            temperature_c: 25.0,
            temp_coeff_um_per_c: 5.0,
            wavelength_um,
            refractive_index,
            modal_birefringence,
            path_length_diff_um: balanced_path_length_um(
                delay_ns,
                refractive_index,
                wavelength_um,
                modal_birefringence,
            ),
            coupler_in_split: None,
            coupler_out_split: 0.5,
            arm_loss_short_db: 0.0,
            arm_loss_long_db: 0.0,
            insertion_loss_db: 2.0,
            pdl_db: 0.0,
        }
    }
}

/// Integer number of beat lengths closest to the arm-length difference that
/// produces `delay_ns` of delay in a waveguide of index `refractive_index`.
pub fn balanced_path_length_um(
    delay_ns: f64,
    refractive_index: f64,
    wavelength_um: f64,
    modal_birefringence: f64,
) -> f64 {
    let geometric = SPEED_OF_LIGHT_UM_PER_NS * delay_ns / refractive_index;
    if modal_birefringence <= 0.0 {
        return geometric;
    }
    let beat = wavelength_um / modal_birefringence;
    (geometric / beat).round().max(1.0) * beat
}

impl AmzParams {
    /// Same device with every loss set to zero and 50/50 couplers.
    pub fn lossless() -> Self {
        Self {
            coupler_in_split: Some(0.5),
            insertion_loss_db: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.delay_slots == 0 {
            return Err(invalid("delay_slots", "must be >= 1"));
        }
        ensure_positive("delay_ns", self.delay_ns)?;
        ensure_finite("phase_rad", self.phase_rad)?;
        ensure_finite("temperature_c", self.temperature_c)?;
        ensure_finite("temp_coeff_um_per_c", self.temp_coeff_um_per_c)?;
        ensure_positive("wavelength_um", self.wavelength_um)?;
        ensure_positive("refractive_index", self.refractive_index)?;
        ensure_non_negative("modal_birefringence", self.modal_birefringence)?;
        ensure_positive("path_length_diff_um", self.path_length_diff_um)?;
        if let Some(split) = self.coupler_in_split {
            ensure_fraction("coupler_in_split", split)?;
        }
        ensure_fraction("coupler_out_split", self.coupler_out_split)?;
        ensure_non_negative("arm_loss_short_db", self.arm_loss_short_db)?;
        ensure_non_negative("arm_loss_long_db", self.arm_loss_long_db)?;
        ensure_non_negative("insertion_loss_db", self.insertion_loss_db)?;
        ensure_non_negative("pdl_db", self.pdl_db)?;
        Ok(())
    }

    pub fn slot_duration_ns(&self) -> f64 {
        self.delay_ns / self.delay_slots as f64
    }

    /// Beat length `lambda / delta_n`, or `None` without birefringence.
    pub fn beat_length_um(&self) -> Option<f64> {
        (self.modal_birefringence > 0.0).then(|| self.wavelength_um / self.modal_birefringence)
    }

    /// Input-coupler cross fraction actually used.
    pub fn input_split(&self) -> f64 {
        self.coupler_in_split.unwrap_or_else(|| {
            let short = transmission_from_db(self.arm_loss_short_db);
            let long = transmission_from_db(self.arm_loss_long_db);
            short / (short + long)
        })
    }

    /// Device temperature change that advances the relative phase by 2π.
    pub fn fringe_period_c(&self) -> f64 {
        self.wavelength_um / (self.refractive_index * self.temp_coeff_um_per_c)
    }

    /// The device retuned to `temperature_c`; the long-arm phase follows the
    /// thermal path-length change.
    pub fn at_temperature(&self, temperature_c: f64) -> Self {
        let delta = temperature_c - self.temperature_c;
        Self {
            phase_rad: self.phase_rad + phase_from_temperature(self, delta),
            temperature_c,
            ..self.clone()
        }
    }

    /// The device with `delta_rad` added to the long-arm phase.
    pub fn with_phase_offset(&self, delta_rad: f64) -> Self {
        Self {
            phase_rad: self.phase_rad + delta_rad,
            ..self.clone()
        }
    }
}

/// Long-arm phase change produced by a device temperature change `delta_t_c`:
/// `2π n κ ΔT / λ`.
pub fn phase_from_temperature(params: &AmzParams, delta_t_c: f64) -> f64 {
    TAU * params.refractive_index * params.temp_coeff_um_per_c * delta_t_c / params.wavelength_um
}

/// Relative H/V phase accumulated by the long arm, `2π ΔL / ΔL_B`, reduced to
/// `(-π, π]`. Zero when the waveguide has no birefringence.
pub fn birefringence_imbalance(params: &AmzParams) -> Result<f64> {
    ensure_non_negative("modal_birefringence", params.modal_birefringence)?;
    let Some(beat) = params.beat_length_um() else {
        return Ok(0.0);
    };
    let cycles = params.path_length_diff_um / beat;
    let frac = cycles - cycles.round();
    let phase = TAU * frac;
    // frac in [-0.5, 0.5]; map -π onto π
    Ok(if phase <= -PI { phase + TAU } else { phase })
}

/// Whether both polarization modes see the same interferometer phase to within `tolerance_rad`.
pub fn is_balanced(params: &AmzParams, tolerance_rad: f64) -> Result<bool> {
    Ok(birefringence_imbalance(params)?.abs() <= tolerance_rad)
}

/// Laser and attenuator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceParams {
    pub wavelength_um: f64,
    pub pulse_fwhm_ps: f64,
    pub spectral_width_nm: f64,
    /// Mean photon number of the pulse pair at Alice's output.
    pub mean_photons_mu: f64,
    pub input_pol: Polarization,
}

impl Default for SourceParams {
    fn default() -> Self {
        Self {
            wavelength_um: 1.55,
            pulse_fwhm_ps: 200.0,
            spectral_width_nm: 0.5,
            mean_photons_mu: 0.2,
            input_pol: Polarization::H,
        }
    }
}

impl SourceParams {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("wavelength_um", self.wavelength_um)?;
        ensure_positive("pulse_fwhm_ps", self.pulse_fwhm_ps)?;
        ensure_non_negative("spectral_width_nm", self.spectral_width_nm)?;
        ensure_non_negative("mean_photons_mu", self.mean_photons_mu)?;
        Ok(())
    }
}

/// Double pulse leaving Alice's interferometer: amplitudes `1/√2` (early)
/// and `e^{iφ_A}/√2` (late, `delay_slots` later) on port A.
///
/// `mean_photons_mu` is referenced to Alice's output, so her device losses
/// are not applied. A fixed birefringent phase of Alice's device is part of
/// the calibrated `phase_rad` because the source is launched on one axis.
pub fn source_pulse_pair(src: &SourceParams, alice: &AmzParams) -> Result<TimeBinState> {
    src.validate()?;
    alice.validate()?;
    let n_slots = alice.delay_slots + 1;
    let mut state = TimeBinState::vacuum(n_slots, alice.slot_duration_ns(), src.mean_photons_mu)?;
    let amp = std::f64::consts::FRAC_1_SQRT_2;
    let pol = src.input_pol.jones();
    let late = Complex64::from_polar(amp, alice.phase_rad);
    state.set_jones(0, Port::A, pol.map(|c| c * amp));
    state.set_jones(alice.delay_slots, Port::A, pol.map(|c| c * late));
    Ok(state)
}

/// Propagates `state` through an AMZ with the default slot capacity.
pub fn apply_amz(state: &TimeBinState, params: &AmzParams) -> Result<TimeBinState> {
    apply_amz_with_capacity(state, params, DEFAULT_MAX_SLOTS)
}

/// Propagates `state` through an AMZ; the output grows by `delay_slots` slots.
pub fn apply_amz_with_capacity(
    state: &TimeBinState,
    params: &AmzParams,
    max_slots: usize,
) -> Result<TimeBinState> {
    state.validate()?;
    params.validate()?;
    let slot_ns = params.slot_duration_ns();
    if (slot_ns - state.slot_duration_ns).abs() > 1e-9 * state.slot_duration_ns {
        return Err(invalid(
            "delay_ns",
            format!(
                "delay of {} ns over {} slots does not match the state's {} ns slots",
                params.delay_ns, params.delay_slots, state.slot_duration_ns
            ),
        ));
    }
    let delay = params.delay_slots;
    let n_out = state.n_slots() + delay;
    if n_out > max_slots {
        return Err(Error::Capacity {
            needed: n_out,
            max: max_slots,
        });
    }

    let i = Complex64::i();
    let k_in = params.input_split();
    let (t1, r1) = ((1.0 - k_in).sqrt(), k_in.sqrt());
    let k_out = params.coupler_out_split;
    let (t2, r2) = ((1.0 - k_out).sqrt(), k_out.sqrt());

    let short_amp = amplitude_from_db(params.arm_loss_short_db);
    let long_amp = amplitude_from_db(params.arm_loss_long_db);
    let pol_phase = birefringence_imbalance(params)?;
    let long_factor = [
        Complex64::from_polar(long_amp, params.phase_rad + pol_phase / 2.0),
        Complex64::from_polar(long_amp, params.phase_rad - pol_phase / 2.0),
    ];
    let common = amplitude_from_db(params.insertion_loss_db);
    let out_factor = [common, common * amplitude_from_db(params.pdl_db)];

    let mut out = TimeBinState::vacuum(n_out, state.slot_duration_ns, state.mean_photons_total)?;
    for (slot, ports) in state.amplitudes.iter().enumerate() {
        for pol in 0..2 {
            let a = ports[Port::A.index()][pol];
            let b = ports[Port::B.index()][pol];
            if a == Complex64::new(0.0, 0.0) && b == Complex64::new(0.0, 0.0) {
                continue;
            }
            let short = (t1 * a + i * r1 * b) * short_amp * out_factor[pol];
            let long = (i * r1 * a + t1 * b) * long_factor[pol] * out_factor[pol];
            // rail 1 of the output coupler is port A, rail 0 is port B
            let early = &mut out.amplitudes[slot];
            early[Port::A.index()][pol] += i * r2 * short;
            early[Port::B.index()][pol] += t2 * short;
            let late = &mut out.amplitudes[slot + delay];
            late[Port::A.index()][pol] += t2 * long;
            late[Port::B.index()][pol] += i * r2 * long;
        }
    }
    Ok(out)
}

/// Probability table over (slot, port).
#[derive(Debug, Clone, PartialEq)]
pub struct SlotProbabilities {
    probs: Vec<[f64; 2]>,
}

impl SlotProbabilities {
    pub fn get(&self, slot: usize, port: Port) -> f64 {
        self.probs[slot][port.index()]
    }

    pub fn n_slots(&self) -> usize {
        self.probs.len()
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().flatten().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, Port), f64)> + '_ {
        self.probs
            .iter()
            .enumerate()
            .flat_map(|(s, row)| Port::BOTH.map(|p| ((s, p), row[p.index()])))
    }
}

pub fn slot_probabilities(state: &TimeBinState) -> SlotProbabilities {
    SlotProbabilities {
        probs: (0..state.n_slots())
            .map(|s| Port::BOTH.map(|p| state.slot_probability(s, p)))
            .collect(),
    }
}

/// Output of one slot of Bob's interferometer as an affine function of his
/// long-arm phase: `fixed + rotating * e^{iφ}` per port and polarization.
///
/// Built from two exact propagations through [`apply_amz`], so evaluating it
/// at any phase reproduces the full propagation.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseResponse {
    slot: usize,
    fixed: [Jones; 2],
    rotating: [Jones; 2],
    mean_photons_total: f64,
}

impl PhaseResponse {
    pub fn new(state: &TimeBinState, bob: &AmzParams, slot: usize) -> Result<Self> {
        let at_zero = apply_amz(state, &AmzParams { phase_rad: 0.0, ..bob.clone() })?;
        let at_pi = apply_amz(state, &AmzParams { phase_rad: PI, ..bob.clone() })?;
        if slot >= at_zero.n_slots() {
            return Err(invalid(
                "target_slot",
                format!("slot {slot} outside 0..{}", at_zero.n_slots()),
            ));
        }
        let mut fixed = [ZERO_JONES; 2];
        let mut rotating = [ZERO_JONES; 2];
        for port in Port::BOTH {
            let z = at_zero.jones(slot, port);
            let p = at_pi.jones(slot, port);
            for pol in 0..2 {
                fixed[port.index()][pol] = (z[pol] + p[pol]) / 2.0;
                rotating[port.index()][pol] = (z[pol] - p[pol]) / 2.0;
            }
        }
        Ok(Self {
            slot,
            fixed,
            rotating,
            mean_photons_total: at_zero.mean_photons_total(),
        })
    }

    pub fn slot(&self) -> usize {
        self.slot
    }

    pub fn mean_photons_total(&self) -> f64 {
        self.mean_photons_total
    }

    /// Slot probabilities `(A, B)` at Bob phase `phase_rad`.
    pub fn probabilities(&self, phase_rad: f64) -> [f64; 2] {
        let rot = Complex64::from_polar(1.0, phase_rad);
        Port::BOTH.map(|port| {
            let k = port.index();
            (0..2)
                .map(|pol| (self.fixed[k][pol] + self.rotating[k][pol] * rot).norm_sqr())
                .sum()
        })
    }

    /// Mean photon numbers `(A, B)` in the slot at Bob phase `phase_rad`.
    pub fn mean_photons(&self, phase_rad: f64) -> [f64; 2] {
        self.probabilities(phase_rad)
            .map(|p| p * self.mean_photons_total)
    }

    /// Fringe contrast `(max - min) / (max + min)` of the slot probability
    /// at `port` as Bob's phase is swept.
    pub fn visibility(&self, port: Port) -> f64 {
        let k = port.index();
        let mut cross = Complex64::new(0.0, 0.0);
        let mut mean = 0.0;
        for pol in 0..2 {
            let f = self.fixed[k][pol];
            let r = self.rotating[k][pol];
            cross += f.conj() * r;
            mean += f.norm_sqr() + r.norm_sqr();
        }
        if mean == 0.0 {
            0.0
        } else {
            2.0 * cross.norm() / mean
        }
    }
}
