//! Fiber link: attenuation, a polarization rotation shared by both time
//! bins, and chromatic broadening of the arrival time against the gate.

use libm::erf;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_non_negative, ensure_positive, invalid, Result};
use crate::optics::{transmission_from_db, Jones, SourceParams, TimeBinState};

/// Gaussian FWHM to standard deviation.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

const UNITARY_TOLERANCE: f64 = 1e-10;

/// 2×2 complex Jones matrix, row major.
///
/// Serialized as `[[[re, im], [re, im]], [[re, im], [re, im]]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[[[f64; 2]; 2]; 2]", into = "[[[f64; 2]; 2]; 2]")]
pub struct JonesMatrix(pub [[Complex64; 2]; 2]);

impl From<[[[f64; 2]; 2]; 2]> for JonesMatrix {
    fn from(m: [[[f64; 2]; 2]; 2]) -> Self {
        Self(m.map(|row| row.map(|[re, im]| Complex64::new(re, im))))
    }
}

impl From<JonesMatrix> for [[[f64; 2]; 2]; 2] {
    fn from(m: JonesMatrix) -> Self {
        m.0.map(|row| row.map(|c| [c.re, c.im]))
    }
}

impl Default for JonesMatrix {
    fn default() -> Self {
        Self::identity()
    }
}

impl JonesMatrix {
    pub fn identity() -> Self {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        Self([[one, zero], [zero, one]])
    }

    /// Haar-random element of U(2).
    pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut z = [0.0f64; 4];
        for x in &mut z {
            *x = rng.sample(StandardNormal);
        }
        let norm = z.iter().map(|x| x * x).sum::<f64>().sqrt();
        let alpha = Complex64::new(z[0], z[1]) / norm;
        let beta = Complex64::new(z[2], z[3]) / norm;
        let global = Complex64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU));
        Self([
            [global * alpha, -global * beta.conj()],
            [global * beta, global * alpha.conj()],
        ])
    }

    pub fn apply(&self, v: Jones) -> Jones {
        let m = &self.0;
        [
            m[0][0] * v[0] + m[0][1] * v[1],
            m[1][0] * v[0] + m[1][1] * v[1],
        ]
    }

    /// Largest entry of `|U†U - I|`.
    pub fn unitarity_error(&self) -> f64 {
        let m = &self.0;
        let mut worst = 0.0f64;
        for i in 0..2 {
            for j in 0..2 {
                let dot = m[0][i].conj() * m[0][j] + m[1][i].conj() * m[1][j];
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).norm());
            }
        }
        worst
    }
}

/// Transmission fiber.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FiberParams {
    pub length_km: f64,
    pub atten_db_per_km: f64,
    pub dispersion_ps_nm_km: f64,
    /// Dispersion-compensating fiber in the link.
    pub dcf_enabled: bool,
    /// Polarization transformation, identical for both pulses of a pair.
    pub pol_unitary: JonesMatrix,
    /// Time scale of polarization fluctuations (informational).
    pub pol_drift_time_s: f64,
}

impl Default for FiberParams {
    fn default() -> Self {
        Self {
            length_km: 150.0,
            atten_db_per_km: 0.22,
            dispersion_ps_nm_km: 17.0,
            dcf_enabled: true,
            pol_unitary: JonesMatrix::identity(),
            pol_drift_time_s: 1.0,
        }
    }
}

impl FiberParams {
    pub fn validate(&self) -> Result<()> {
        ensure_non_negative("length_km", self.length_km)?;
        ensure_non_negative("atten_db_per_km", self.atten_db_per_km)?;
        if !self.dispersion_ps_nm_km.is_finite() {
            return Err(invalid("dispersion_ps_nm_km", "must be finite"));
        }
        ensure_positive("pol_drift_time_s", self.pol_drift_time_s)?;
        let err = self.pol_unitary.unitarity_error();
        if !(err <= UNITARY_TOLERANCE) {
            return Err(invalid(
                "pol_unitary",
                format!("not unitary (|U†U - I| = {err:e})"),
            ));
        }
        Ok(())
    }

    /// Power transmission `10^(-αL/10)`.
    pub fn transmission(&self) -> f64 {
        transmission_from_db(self.atten_db_per_km * self.length_km)
    }

    pub fn with_length(&self, length_km: f64) -> Self {
        Self {
            length_km,
            ..self.clone()
        }
    }
}

/// Attenuates the intensity and rotates every slot's polarization by the same unitary.
pub fn fiber_transmit(state: &TimeBinState, fiber: &FiberParams) -> Result<TimeBinState> {
    fiber.validate()?;
    state.validate()?;
    let mut out = state.clone();
    out.attenuate(fiber.transmission());
    let u = fiber.pol_unitary;
    out.map_polarization(|v| u.apply(v));
    Ok(out)
}

/// RMS arrival-time spread at the receiver in ps.
pub fn arrival_time_sigma(fiber: &FiberParams, src: &SourceParams) -> f64 {
    let sigma_in = src.pulse_fwhm_ps / FWHM_PER_SIGMA;
    let d_eff = if fiber.dcf_enabled {
        0.0
    } else {
        fiber.dispersion_ps_nm_km
    };
    let spread = d_eff * fiber.length_km * src.spectral_width_nm;
    sigma_in.hypot(spread)
}

/// Fraction of a centered Gaussian arrival-time distribution of width
/// `sigma_ps` that falls inside a rectangular gate of `gate_width_ps`.
pub fn window_capture_fraction(sigma_ps: f64, gate_width_ps: f64) -> Result<f64> {
    ensure_non_negative("sigma_ps", sigma_ps)?;
    ensure_positive("gate_width_ps", gate_width_ps)?;
    if sigma_ps == 0.0 {
        return Ok(1.0);
    }
    let half = gate_width_ps / 2.0;
    Ok(erf(half / (sigma_ps * std::f64::consts::SQRT_2)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::{source_pulse_pair, AmzParams, Polarization, Port};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pair() -> TimeBinState {
        source_pulse_pair(&SourceParams::default(), &AmzParams::default()).unwrap()
    }

    #[test]
    fn zero_length_is_identity() {
        let state = pair();
        let out = fiber_transmit(&state, &FiberParams::default().with_length(0.0)).unwrap();
        assert_eq!(out, state);
    }

    #[test]
    fn attenuation_examples() {
        let f150 = FiberParams::default();
        assert!((f150.transmission() - 10f64.powf(-3.3)).abs() < 1e-18);
        assert!((f150.transmission() - 5.012e-4).abs() < 1e-7);
        let f100 = f150.with_length(100.0);
        assert!((f100.transmission() - 6.310e-3).abs() < 1e-6);
        let out = fiber_transmit(&pair(), &f150).unwrap();
        assert!((out.mean_photons_total() - 0.2 * 10f64.powf(-3.3)).abs() < 1e-16);
    }

    #[test]
    fn same_rotation_for_every_slot() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let fiber = FiberParams {
            pol_unitary: JonesMatrix::random_unitary(&mut rng),
            ..FiberParams::default()
        };
        let state = pair();
        let out = fiber_transmit(&state, &fiber).unwrap();
        for slot in 0..2 {
            let expect = fiber.pol_unitary.apply(state.jones(slot, Port::A));
            let got = out.jones(slot, Port::A);
            assert!((expect[0] - got[0]).norm() < 1e-15);
            assert!((expect[1] - got[1]).norm() < 1e-15);
        }
        // relative phase between the two bins survives
        let h0 = out.amplitude(0, Port::A, Polarization::H);
        let h1 = out.amplitude(1, Port::A, Polarization::H);
        let v0 = out.amplitude(0, Port::A, Polarization::V);
        let v1 = out.amplitude(1, Port::A, Polarization::V);
        assert!((h1 * h0.conj() + v1 * v0.conj() - Complex64::new(0.5, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn rejects_non_unitary() {
        let mut fiber = FiberParams::default();
        fiber.pol_unitary.0[0][0] = Complex64::new(1.1, 0.0);
        assert!(fiber.validate().is_err());
        assert!(fiber_transmit(&pair(), &fiber).is_err());
    }

    #[test]
    fn random_unitaries_are_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            assert!(JonesMatrix::random_unitary(&mut rng).unitarity_error() < 1e-12);
        }
    }

    #[test]
    fn arrival_sigma_examples() {
        let src = SourceParams::default();
        let sigma_in = 200.0 / FWHM_PER_SIGMA;
        let compensated = FiberParams::default();
        assert_eq!(arrival_time_sigma(&compensated, &src), sigma_in);
        let flat = FiberParams {
            dcf_enabled: false,
            dispersion_ps_nm_km: 0.0,
            ..FiberParams::default()
        };
        assert_eq!(arrival_time_sigma(&flat, &src), sigma_in);

        let src85 = SourceParams {
            pulse_fwhm_ps: 85.0 * FWHM_PER_SIGMA,
            ..src
        };
        let bare = FiberParams {
            dcf_enabled: false,
            ..FiberParams::default()
        };
        let sigma = arrival_time_sigma(&bare, &src85);
        assert!((sigma - (85.0f64.powi(2) + 1275.0f64.powi(2)).sqrt()).abs() < 1e-9);
        assert!((sigma - 1277.83).abs() < 0.01);
    }

    #[test]
    fn capture_fraction_examples() {
        assert_eq!(window_capture_fraction(0.0, 750.0).unwrap(), 1.0);
        let one_sigma = window_capture_fraction(375.0, 750.0).unwrap();
        assert!((one_sigma - 0.682_689_492_137_086).abs() < 1e-12);
        let three_sigma = window_capture_fraction(125.0, 750.0).unwrap();
        assert!((three_sigma - 0.997_300_203_936_740).abs() < 1e-12);
        assert!(window_capture_fraction(-1.0, 750.0).is_err());
        assert!(window_capture_fraction(1.0, 0.0).is_err());
    }

    #[test]
    fn capture_fraction_decreases_with_sigma() {
        let mut last = 1.0;
        for k in 5..200 {
            let f = window_capture_fraction(k as f64 * 10.0, 750.0).unwrap();
            assert!(f < last);
            assert!(f > 0.0);
            last = f;
        }
    }
}
