//! Closed-form click probabilities used as the oracle for the Monte Carlo
//! engine.
//!
//! The middle slot at Bob is written directly as the two-path interference
//! of the early pulse through his long arm and the late pulse through his
//! short arm, per polarization eigenmode, without propagating a state.

use std::f64::consts::PI;

use super::engine::gaussian_average;
use super::ScenarioConfig;
use crate::detection::ApdParams;
use crate::error::Result;
use crate::optics::{birefringence_imbalance, transmission_from_db, AmzParams};

/// Middle-slot probabilities `(A, B)` at Bob for a normalized double pulse
/// with power `pol_weights` in the H and V modes.
fn middle_slot_probabilities(bob: &AmzParams, pol_weights: [f64; 2], delta_phi: f64) -> Result<[f64; 2]> {
    let t_short = transmission_from_db(bob.arm_loss_short_db);
    let t_long = transmission_from_db(bob.arm_loss_long_db);
    let k_in = bob.input_split();
    let k_out = bob.coupler_out_split;
    let short_a = (1.0 - k_in) * k_out * t_short;
    let long_a = k_in * (1.0 - k_out) * t_long;
    let short_b = (1.0 - k_in) * (1.0 - k_out) * t_short;
    let long_b = k_in * k_out * t_long;
    let pol_phase = birefringence_imbalance(bob)?;
    let mode_transmission = [1.0, transmission_from_db(bob.pdl_db)];
    let signs = [1.0, -1.0];

    let mut p = [0.0, 0.0];
    for m in 0..2 {
        let w = pol_weights[m] * mode_transmission[m];
        let c = (delta_phi - signs[m] * pol_phase / 2.0).cos();
        // each pulse of the pair carries half the power
        p[0] += w * 0.5 * (short_a + long_a + 2.0 * (short_a * long_a).sqrt() * c);
        p[1] += w * 0.5 * (short_b + long_b - 2.0 * (short_b * long_b).sqrt() * c);
    }
    let insertion = transmission_from_db(bob.insertion_loss_db);
    Ok(p.map(|x| x * insertion))
}

fn click(mean_photons: f64, apd: &ApdParams) -> f64 {
    let dark = apd.dark_prob_single();
    let p = dark - (1.0 - dark) * (-apd.quantum_efficiency * mean_photons).exp_m1();
    p + apd.afterpulse_prob * p * (1.0 - p)
}

/// Click probabilities `(P_A, P_B)` per gate with relative phase
/// `delta_phi = φ_Alice − φ_Bob` and no drift.
pub fn analytic_click_probability_at(config: &ScenarioConfig, delta_phi: f64) -> Result<[f64; 2]> {
    config.validate()?;
    let link = config.link();
    let launched = config.source.input_pol.jones();
    let rotated = config.fiber.pol_unitary.apply(launched);
    let weights = [rotated[0].norm_sqr(), rotated[1].norm_sqr()];
    let slot = middle_slot_probabilities(&config.bob, weights, delta_phi)?;
    let photons = config.source.mean_photons_mu
        * config.fiber.transmission()
        * transmission_from_db(config.bob_modulator_loss_db)
        * link.capture()?;
    Ok([
        click(photons * slot[0], &link.apd_a),
        click(photons * slot[1], &link.apd_b),
    ])
}

/// Click probabilities at the configured phases of Alice and Bob.
pub fn analytic_click_probability(config: &ScenarioConfig) -> Result<[f64; 2]> {
    analytic_click_probability_at(config, config.alice.phase_rad - config.bob.phase_rad)
}

/// Click probabilities averaged over the per-gate phase jitter.
pub fn averaged_click_probability(config: &ScenarioConfig, delta_phi: f64) -> Result<[f64; 2]> {
    // validation errors surface from the unjittered point
    analytic_click_probability_at(config, delta_phi)?;
    Ok(gaussian_average(config.drift.phase_jitter_sigma_rad, |d| {
        analytic_click_probability_at(config, delta_phi - d).unwrap_or([f64::NAN; 2])
    }))
}

fn contrast(max: f64, min: f64) -> f64 {
    if max + min > 0.0 {
        (max - min) / (max + min)
    } else {
        0.0
    }
}

/// Fringe visibility per APD without drift: `s / (s + 2d)` for signal `s`
/// on dark floor `d`.
pub fn visibility_ceiling(config: &ScenarioConfig) -> Result<[f64; 2]> {
    let peak = analytic_click_probability_at(config, 0.0)?;
    let trough = analytic_click_probability_at(config, PI)?;
    Ok([contrast(peak[0], trough[0]), contrast(trough[1], peak[1])])
}

/// Fringe visibility per APD with the configured jitter.
pub fn predicted_visibility(config: &ScenarioConfig) -> Result<[f64; 2]> {
    let peak = averaged_click_probability(config, 0.0)?;
    let trough = averaged_click_probability(config, PI)?;
    Ok([contrast(peak[0], trough[0]), contrast(trough[1], peak[1])])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::ApdParams;
    use crate::experiments::drift::jitter_washout;
    use crate::experiments::DriftParams;
    use crate::channel::FiberParams;

    fn no_dark() -> ApdParams {
        ApdParams {
            dark_prob_per_gate: 0.0,
            ..ApdParams::default()
        }
    }

    #[test]
    fn reference_point_at_150_km() {
        let config = ScenarioConfig {
            apd: no_dark(),
            ..ScenarioConfig::default()
        };
        let [pa, pb] = analytic_click_probability(&config).unwrap();
        // 0.2 · 10^-3.3 · 10^-0.2 · 0.5 · 0.1, times a gate capture of 1 - 1e-5
        let expect = 0.2 * 10f64.powf(-3.3) * 10f64.powf(-0.2) * 0.5 * 0.1;
        assert!((expect - 3.162e-6).abs() < 1e-9);
        assert!((pa - expect).abs() / expect < 2e-5);
        assert!(pb < 1e-15);
    }

    #[test]
    fn lossless_zero_length() {
        let config = ScenarioConfig {
            apd: no_dark(),
            bob: AmzParams::lossless(),
            fiber: FiberParams::default().with_length(0.0),
            source: crate::optics::SourceParams {
                pulse_fwhm_ps: 1e-3,
                ..Default::default()
            },
            ..ScenarioConfig::default()
        };
        let [pa, _] = analytic_click_probability(&config).unwrap();
        let expect = 1.0 - (-0.2f64 * 0.5 * 0.1).exp();
        assert!((expect - 9.95e-3).abs() < 1e-5);
        assert!((pa - expect).abs() < 1e-15);
    }

    #[test]
    fn vacuum_gives_dark_floor() {
        let config = ScenarioConfig {
            source: crate::optics::SourceParams {
                mean_photons_mu: 0.0,
                ..Default::default()
            },
            ..ScenarioConfig::default()
        };
        assert_eq!(analytic_click_probability(&config).unwrap(), [2.1e-7, 2.1e-7]);
    }

    #[test]
    fn ceiling_matches_signal_over_dark() {
        let config = ScenarioConfig::default();
        let [ceil_a, ceil_b] = visibility_ceiling(&config).unwrap();
        let s = analytic_click_probability_at(
            &ScenarioConfig {
                apd: no_dark(),
                ..config.clone()
            },
            0.0,
        )
        .unwrap()[0];
        let d = 2.1e-7;
        // first order in s and d
        assert!((ceil_a - s / (s + 2.0 * d)).abs() < 1e-5);
        assert!((ceil_a - ceil_b).abs() < 1e-12);
        assert!((ceil_a - 0.883).abs() < 1e-3);
    }

    #[test]
    fn jitter_scales_visibility() {
        let base = ScenarioConfig {
            apd: no_dark(),
            fiber: FiberParams::default(),
            ..ScenarioConfig::default()
        };
        let sigma = 0.63;
        let jittered = ScenarioConfig {
            drift: DriftParams {
                phase_jitter_sigma_rad: sigma,
                ..DriftParams::default()
            },
            ..base.clone()
        };
        let [v, _] = predicted_visibility(&jittered).unwrap();
        assert!((v - jitter_washout(sigma)).abs() < 1e-6, "{v} {}", jitter_washout(sigma));
        assert!((visibility_ceiling(&base).unwrap()[0] - 1.0).abs() < 1e-12);
    }
}
