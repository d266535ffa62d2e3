//! Click probability versus fiber length at the fringe peak.

use serde::{Deserialize, Serialize};

use super::analytic::averaged_click_probability;
use super::engine::{domain, GateStreams, PointSpec};
use super::ScenarioConfig;
use crate::error::{ensure_non_negative, Result};
use crate::optics::Port;
use crate::protocol::{AliceChoice, PreparedLink};
use crate::stats::wilson_95;

/// Expected click count at the longest distance below which a warning is issued.
pub const MIN_EXPECTED_COUNTS: f64 = 100.0;

/// One distance point, for the APD on port A.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub length_km: f64,
    pub p_analytic: f64,
    pub p_mc: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub dark_floor: f64,
    pub clicks: u64,
    pub gates: u64,
}

impl SweepRow {
    /// Deviation of the Monte Carlo estimate from the analytic value in
    /// binomial standard deviations of the analytic value.
    pub fn z_score(&self) -> f64 {
        let sigma = crate::stats::binomial_sigma(self.p_analytic, self.gates);
        (self.p_mc - self.p_analytic) / sigma
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceSweep {
    pub rows: Vec<SweepRow>,
    pub warnings: Vec<String>,
}

impl DistanceSweep {
    /// Slope of `log10(P − p_dark)` per km over rows where the signal is at
    /// least ten times the dark floor. Uses the analytic column when
    /// `analytic`, otherwise the Monte Carlo column weighted by counts.
    pub fn log_slope(&self, analytic: bool) -> Option<f64> {
        let pts: Vec<(f64, f64, f64)> = self
            .rows
            .iter()
            .filter_map(|r| {
                let p = if analytic { r.p_analytic } else { r.p_mc };
                let s = p - r.dark_floor;
                if s < 10.0 * r.dark_floor || s <= 0.0 {
                    return None;
                }
                // variance of log10(s) is roughly 1 / (counts · ln(10)²)
                let w = if analytic { 1.0 } else { r.clicks as f64 };
                Some((r.length_km, s.log10(), w))
            })
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let sw: f64 = pts.iter().map(|p| p.2).sum();
        let mx = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
        let my = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
        let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - mx).powi(2)).sum();
        (sxx > 0.0).then(|| sxy / sxx)
    }
}

/// Runs `config.n_gates` gates at every distance with Bob tuned to the
/// fringe peak of port A.
pub fn run_distance_sweep(config: &ScenarioConfig, distances_km: &[f64]) -> Result<DistanceSweep> {
    config.validate()?;
    for &d in distances_km {
        ensure_non_negative("distance_km", d)?;
    }
    let mut base = config.clone();
    base.bob.phase_rad = base.alice.phase_rad;
    let dark_floor = base.apd.dark_prob_single();
    let choice = AliceChoice { bit: false, basis: crate::protocol::Basis::Z };

    let mut warnings = config.warnings();
    let mut rows = Vec::with_capacity(distances_km.len());
    for (i, &length_km) in distances_km.iter().enumerate() {
        let mut point = base.clone();
        point.fiber = base.fiber.with_length(length_km);
        let p_analytic = averaged_click_probability(&point, 0.0)?[0];
        let prepared = PreparedLink::new(&point.link())?;
        let spec = PointSpec {
            prepared: &prepared,
            choice,
            bob_offset_rad: 0.0,
            drift: &point.drift,
        };
        let streams = GateStreams::new(config.master_seed, domain::point(domain::SWEEP, i as u64));
        let counts = config.install(|| spec.simulate(&streams, config.n_gates, config.engine))?;
        let clicks = counts.clicks(Port::A);
        let ci = wilson_95(clicks, counts.gates());
        rows.push(SweepRow {
            length_km,
            p_analytic,
            p_mc: clicks as f64 / counts.gates() as f64,
            ci_low: ci.low,
            ci_high: ci.high,
            dark_floor,
            clicks,
            gates: counts.gates(),
        });
    }
    if let Some(last) = rows.iter().min_by(|a, b| a.p_analytic.total_cmp(&b.p_analytic)) {
        let expected = last.p_analytic * config.n_gates as f64;
        if expected < MIN_EXPECTED_COUNTS {
            warnings.push(format!(
                "only {expected:.1} clicks expected at {} km; increase n_gates",
                last.length_km
            ));
        }
    }
    Ok(DistanceSweep { rows, warnings })
}
