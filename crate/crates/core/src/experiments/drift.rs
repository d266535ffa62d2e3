//! Phase drift of Bob's interferometer: independent Gaussian jitter per
//! gate plus an exponentially settling offset after each temperature step.

use rand::Rng;
use rand_distr::StandardNormal;

use super::DriftParams;

/// Deterministic settling offset `settle_drift · exp(-t/τ)` at `t` gates
/// after a step. Zero when `τ = 0`.
pub fn settle_term(drift: &DriftParams, gates_since_step: u64) -> f64 {
    if drift.settle_drift_rad == 0.0 || drift.settle_tau_gates == 0.0 {
        return 0.0;
    }
    drift.settle_drift_rad * (-(gates_since_step as f64) / drift.settle_tau_gates).exp()
}

/// First gate index after which the settling offset stays below `tolerance_rad`.
pub fn settle_horizon(drift: &DriftParams, tolerance_rad: f64) -> u64 {
    if drift.settle_drift_rad <= tolerance_rad || drift.settle_tau_gates == 0.0 {
        return 0;
    }
    let t = drift.settle_tau_gates * (drift.settle_drift_rad / tolerance_rad).ln();
    t.ceil() as u64
}

/// Phase offset for one gate. Draws one standard normal when jitter is enabled.
pub fn phase_drift_sample<R: Rng + ?Sized>(
    drift: &DriftParams,
    gates_since_step: u64,
    rng: &mut R,
) -> f64 {
    let jitter = if drift.phase_jitter_sigma_rad > 0.0 {
        drift.phase_jitter_sigma_rad * rng.sample::<f64, _>(StandardNormal)
    } else {
        0.0
    };
    jitter + settle_term(drift, gates_since_step)
}

/// Contrast multiplier of Gaussian phase jitter, `exp(-σ²/2)`.
pub fn jitter_washout(sigma_rad: f64) -> f64 {
    (-sigma_rad * sigma_rad / 2.0).exp()
}

/// Jitter that reduces fringe contrast by `factor`.
pub fn jitter_for_washout(factor: f64) -> f64 {
    (-2.0 * factor.ln()).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_params_give_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let drift = DriftParams::default();
        for t in 0..1000 {
            assert_eq!(phase_drift_sample(&drift, t, &mut rng), 0.0);
        }
    }

    #[test]
    fn settling_decays() {
        let drift = DriftParams {
            settle_drift_rad: 0.5,
            settle_tau_gates: 100.0,
            ..DriftParams::default()
        };
        assert_eq!(settle_term(&drift, 0), 0.5);
        assert!(settle_term(&drift, 1500) < 1e-6 * 0.5);
        let h = settle_horizon(&drift, 1e-12);
        assert!(settle_term(&drift, h) <= 1e-12);
        assert!(settle_term(&drift, h - 1) > 1e-12);
    }

    #[test]
    fn washout_identity() {
        let w = jitter_washout(0.63);
        assert!((w - 0.82).abs() < 2e-3);
        assert!((jitter_for_washout(w) - 0.63).abs() < 1e-12);
    }

    #[test]
    fn jitter_has_requested_spread() {
        let drift = DriftParams {
            phase_jitter_sigma_rad: 0.4,
            ..DriftParams::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 200_000;
        let samples: Vec<f64> = (0..n).map(|_| phase_drift_sample(&drift, 0, &mut rng)).collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 3.0 * 0.4 / (n as f64).sqrt());
        assert!((var.sqrt() - 0.4).abs() < 0.005);
    }
}
