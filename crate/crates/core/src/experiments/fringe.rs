//! Temperature fringe scans and visibility estimation.

use serde::{Deserialize, Serialize};

use super::engine::{domain, GateStreams, PointSpec};
use super::fit::{fit_sinusoid, SinusoidFit};
use super::ScenarioConfig;
use crate::error::{ensure_finite, Error, Result};
use crate::optics::Port;
use crate::protocol::{AliceChoice, Basis, PreparedLink};

/// Counts at one device temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FringePoint {
    pub temperature_c: f64,
    /// Bob's long-arm phase at this temperature, before drift.
    pub phase_rad: f64,
    /// Gates in which APD A fired.
    pub counts_a: u64,
    /// Gates in which APD B fired.
    pub counts_b: u64,
    pub gates: u64,
}

/// Result of fitting one APD's count rate against temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum FitOutcome {
    Ok(SinusoidFit),
    Failed { reason: String },
}

impl FitOutcome {
    pub fn fit(&self) -> Option<&SinusoidFit> {
        match self {
            FitOutcome::Ok(f) => Some(f),
            FitOutcome::Failed { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FringeResult {
    pub points: Vec<FringePoint>,
    /// Fits of the click rate for APD A and APD B.
    pub fits: [FitOutcome; 2],
    pub warnings: Vec<String>,
}

impl FringeResult {
    fn rates(&self, port: Port) -> Vec<f64> {
        self.points
            .iter()
            .map(|p| {
                let c = match port {
                    Port::A => p.counts_a,
                    Port::B => p.counts_b,
                };
                c as f64 / p.gates as f64
            })
            .collect()
    }

    /// `(max − min) / (max + min)` of the measured rates.
    pub fn raw_visibility(&self, port: Port) -> f64 {
        let r = self.rates(port);
        let max = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = r.iter().copied().fold(f64::INFINITY, f64::min);
        if max + min > 0.0 {
            (max - min) / (max + min)
        } else {
            0.0
        }
    }
}

/// Fits the click rates of both APDs against temperature.
pub fn fit_fringe(points: &[FringePoint], period_hint: Option<f64>) -> [FitOutcome; 2] {
    let x: Vec<f64> = points.iter().map(|p| p.temperature_c).collect();
    Port::BOTH.map(|port| {
        let y: Vec<f64> = points
            .iter()
            .map(|p| {
                let c = match port {
                    Port::A => p.counts_a,
                    Port::B => p.counts_b,
                };
                c as f64 / p.gates as f64
            })
            .collect();
        match fit_sinusoid(&x, &y, period_hint) {
            Ok(f) => FitOutcome::Ok(f),
            Err(Error::FitFailure(reason)) => FitOutcome::Failed { reason },
            Err(e) => FitOutcome::Failed { reason: e.to_string() },
        }
    })
}

/// Steps Bob's device through `temperatures_c`, running `config.n_gates`
/// gates at each. The drift settling transient restarts at every step.
pub fn run_fringe_scan(config: &ScenarioConfig, temperatures_c: &[f64]) -> Result<FringeResult> {
    config.validate()?;
    for &t in temperatures_c {
        ensure_finite("temperature_c", t)?;
    }
    let mut warnings = config.warnings();
    let period = config.bob.fringe_period_c();
    let (lo, hi) = temperatures_c
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &t| (a.min(t), b.max(t)));
    if temperatures_c.is_empty() || hi - lo < period {
        warnings.push(format!(
            "temperature span {:.4} C is shorter than one fringe period ({period:.4} C)",
            (hi - lo).max(0.0)
        ));
    }

    let choice = AliceChoice { bit: false, basis: Basis::Z };
    let mut points = Vec::with_capacity(temperatures_c.len());
    for (i, &temperature_c) in temperatures_c.iter().enumerate() {
        let mut point = config.clone();
        point.bob = config.bob.at_temperature(temperature_c);
        let prepared = PreparedLink::new(&point.link())?;
        let spec = PointSpec {
            prepared: &prepared,
            choice,
            bob_offset_rad: 0.0,
            drift: &config.drift,
        };
        let streams = GateStreams::new(config.master_seed, domain::point(domain::FRINGE, i as u64));
        let counts = config.install(|| spec.simulate(&streams, config.n_gates, config.engine))?;
        points.push(FringePoint {
            temperature_c,
            phase_rad: point.bob.phase_rad,
            counts_a: counts.clicks(Port::A),
            counts_b: counts.clicks(Port::B),
            gates: counts.gates(),
        });
    }
    let fits = fit_fringe(&points, None);
    Ok(FringeResult { points, fits, warnings })
}

/// Visibility of one APD from its fitted fringe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisibilityEstimate {
    pub visibility: f64,
    pub stderr: f64,
    /// Set when the fitted value fell outside `[0, 1]`.
    pub clamped: bool,
    /// `(max − min) / (max + min)` of the raw rates.
    pub raw_max_min: f64,
}

/// Fitted visibility per APD `(A, B)`.
pub fn estimate_visibility(fringe: &FringeResult) -> Result<[VisibilityEstimate; 2]> {
    let mut out = Vec::with_capacity(2);
    for port in Port::BOTH {
        let fit = match &fringe.fits[port.index()] {
            FitOutcome::Ok(f) => f,
            FitOutcome::Failed { reason } => return Err(Error::FitFailure(reason.clone())),
        };
        if fit.offset <= 0.0 {
            return Err(Error::InvalidFringe(format!(
                "fitted offset {} is not positive",
                fit.offset
            )));
        }
        let v = fit.visibility;
        out.push(VisibilityEstimate {
            visibility: v.clamp(0.0, 1.0),
            stderr: fit.visibility_stderr,
            clamped: !(0.0..=1.0).contains(&v),
            raw_max_min: fringe.raw_visibility(port),
        });
    }
    Ok([out[0], out[1]])
}

/// `n` evenly spaced temperatures from `lo` to `hi` inclusive.
pub fn temperature_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn synthetic(f: impl Fn(f64) -> (f64, f64)) -> FringeResult {
        let points: Vec<FringePoint> = (0..50)
            .map(|i| {
                let phi = i as f64 * TAU / 25.0;
                let (a, b) = f(phi);
                FringePoint {
                    temperature_c: phi,
                    phase_rad: phi,
                    counts_a: (a * 1e9).round() as u64,
                    counts_b: (b * 1e9).round() as u64,
                    gates: 1_000_000_000,
                }
            })
            .collect();
        let fits = fit_fringe(&points, Some(TAU));
        FringeResult { points, fits, warnings: vec![] }
    }

    #[test]
    fn ideal_fringe_has_unit_visibility() {
        let r = synthetic(|p| ((1.0 + p.cos()) / 4.0, (1.0 - p.cos()) / 4.0));
        let [a, b] = estimate_visibility(&r).unwrap();
        assert!((a.visibility - 1.0).abs() < 1e-6);
        assert!((b.visibility - 1.0).abs() < 1e-6);
        assert!(a.raw_max_min > 0.98);
        let pa = r.fits[0].fit().unwrap().phase_rad;
        let pb = r.fits[1].fit().unwrap().phase_rad;
        let diff = (pa - pb).rem_euclid(TAU);
        assert!((diff - std::f64::consts::PI).abs() < 1e-6);
    }

    #[test]
    fn dark_floor_limits_visibility() {
        let (s, d) = (3.16e-3, 2.1e-4);
        let r = synthetic(|p| (d + s * (1.0 + p.cos()) / 2.0, d + s * (1.0 - p.cos()) / 2.0));
        let [a, _] = estimate_visibility(&r).unwrap();
        assert!((a.visibility - s / (s + 2.0 * d)).abs() < 1e-5);
        assert!(!a.clamped);
    }

    #[test]
    fn failed_fit_is_reported() {
        let points: Vec<FringePoint> = (0..10)
            .map(|i| FringePoint {
                temperature_c: i as f64,
                phase_rad: 0.0,
                counts_a: 0,
                counts_b: 0,
                gates: 10,
            })
            .collect();
        let fits = fit_fringe(&points, None);
        assert!(matches!(fits[0], FitOutcome::Failed { .. }));
        let json = serde_json::to_string(&fits[0]).unwrap();
        assert!(json.contains("\"status\":\"failed\""));
        let r = FringeResult { points, fits, warnings: vec![] };
        assert!(matches!(estimate_visibility(&r), Err(Error::FitFailure(_))));
    }

    #[test]
    fn negative_offset_is_invalid() {
        let r = synthetic(|p| ((1.0 + p.cos()) / 4.0, (1.0 - p.cos()) / 4.0));
        let mut fits = r.fits.clone();
        if let FitOutcome::Ok(f) = &mut fits[0] {
            f.offset = -1.0;
        }
        let bad = FringeResult { fits, ..r };
        assert!(matches!(estimate_visibility(&bad), Err(Error::InvalidFringe(_))));
    }

    #[test]
    fn short_scan_warns() {
        let config = ScenarioConfig {
            n_gates: 1000,
            workers: 1,
            ..ScenarioConfig::default()
        };
        let r = run_fringe_scan(&config, &temperature_grid(25.0, 25.1, 6)).unwrap();
        assert!(r.warnings.iter().any(|w| w.contains("fringe period")));
        assert_eq!(r.points.len(), 6);
        assert!(r.points.iter().all(|p| p.counts_a <= p.gates && p.counts_b <= p.gates));
    }
}
