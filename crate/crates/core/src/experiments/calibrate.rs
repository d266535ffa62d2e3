//! Tuning the drift model to observed visibilities.

use super::analytic::{predicted_visibility, visibility_ceiling};
use super::drift::jitter_for_washout;
use super::ScenarioConfig;
use crate::detection::ApdParams;
use crate::error::{invalid, Result};

fn bisect(mut lo: f64, mut hi: f64, increasing: bool, target: f64, f: impl Fn(f64) -> Result<f64>) -> Result<f64> {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let above = f(mid)? > target;
        if above == increasing {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-15 * hi.abs().max(1e-300) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Returns `config` with the phase jitter chosen so APD A's predicted
/// visibility equals `target`.
pub fn calibrate_jitter(config: &ScenarioConfig, target: f64) -> Result<ScenarioConfig> {
    let mut out = config.clone();
    out.drift.phase_jitter_sigma_rad = 0.0;
    let [ceil_a, _] = visibility_ceiling(&out)?;
    if !(target > 0.0 && target <= ceil_a) {
        return Err(invalid(
            "target visibility A",
            format!("{target} not in (0, {ceil_a}]"),
        ));
    }
    let guess = jitter_for_washout(target / ceil_a);
    let sigma = bisect(0.0, 2.0 * guess + 1.0, false, target, |s| {
        let mut c = out.clone();
        c.drift.phase_jitter_sigma_rad = s;
        Ok(predicted_visibility(&c)?[0])
    })?;
    out.drift.phase_jitter_sigma_rad = sigma;
    Ok(out)
}

/// Returns `config` with the phase jitter chosen so APD A's predicted
/// visibility equals `targets[0]`, then APD B's quantum efficiency chosen so
/// its visibility equals `targets[1]`.
///
/// Both APDs share the jitter, so a different visibility on B is attributed
/// to a different signal-to-dark ratio on that detector.
pub fn calibrate_visibility(config: &ScenarioConfig, targets: [f64; 2]) -> Result<ScenarioConfig> {
    let mut out = calibrate_jitter(config, targets[0])?;
    let apd_b = out.apd_b().clone();
    let with_eta = |eta: f64| ApdParams {
        quantum_efficiency: eta,
        ..apd_b.clone()
    };
    let v_b = |eta: f64| -> Result<f64> {
        let mut c = out.clone();
        c.apd_b = Some(with_eta(eta));
        Ok(predicted_visibility(&c)?[1])
    };
    let (lo, hi) = (1e-9, 1.0);
    if !(v_b(lo)? <= targets[1] && targets[1] <= v_b(hi)?) {
        return Err(invalid(
            "target visibility B",
            format!("{} unreachable by tuning APD B efficiency", targets[1]),
        ));
    }
    let eta = bisect(lo, hi, true, targets[1], v_b)?;
    out.apd_b = Some(with_eta(eta));
    Ok(out)
}
