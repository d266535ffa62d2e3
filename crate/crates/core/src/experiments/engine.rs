//! Counter-based random streams and gate-outcome counting.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::drift::{phase_drift_sample, settle_horizon};
use super::{DriftParams, Engine};
use crate::detection::{sample_clicks, ClickOutcome};
use crate::optics::Port;
use crate::protocol::{AliceChoice, PreparedLink};

/// Gates handled by one unit of parallel work.
pub const CHUNK_GATES: u64 = 1 << 16;

/// Gates per multinomial draw in the aggregated engine.
pub const BLOCK_GATES: u64 = 1 << 24;

/// Settling offsets below this are treated as zero by the aggregated engine.
pub const SETTLE_TOLERANCE_RAD: f64 = 1e-12;

const BLOCK_STREAM_FLAG: u64 = 1 << 63;

/// Stream-key namespaces for the experiment kinds.
pub mod domain {
    pub const SWEEP: u64 = 1;
    pub const FRINGE: u64 = 2;
    pub const BB84: u64 = 3;
    pub const ORACLE: u64 = 4;

    /// Key of point `index` within experiment `kind`.
    pub fn point(kind: u64, index: u64) -> u64 {
        (kind << 40) | index
    }
}

/// Independent ChaCha8 streams keyed by `(master_seed, domain, gate)`.
#[derive(Debug, Clone)]
pub struct GateStreams {
    base: ChaCha8Rng,
}

impl GateStreams {
    pub fn new(master_seed: u64, domain: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&master_seed.to_le_bytes());
        key[8..16].copy_from_slice(&domain.to_le_bytes());
        Self {
            base: ChaCha8Rng::from_seed(key),
        }
    }

    /// Random stream of gate `index`; the same index always yields the same stream.
    pub fn gate(&self, index: u64) -> ChaCha8Rng {
        let mut rng = self.base.clone();
        rng.set_stream(index);
        rng
    }

    fn block(&self, index: u64) -> ChaCha8Rng {
        self.gate(BLOCK_STREAM_FLAG | index)
    }
}

/// Tally of joint outcomes over a run of gates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OutcomeCounts {
    /// Indexed by [`ClickOutcome::index`].
    pub by_outcome: [u64; 4],
}

impl OutcomeCounts {
    pub fn record(&mut self, outcome: ClickOutcome) {
        self.by_outcome[outcome.index()] += 1;
    }

    pub fn merge(mut self, other: Self) -> Self {
        for (a, b) in self.by_outcome.iter_mut().zip(other.by_outcome) {
            *a += b;
        }
        self
    }

    pub fn gates(&self) -> u64 {
        self.by_outcome.iter().sum()
    }

    pub fn get(&self, outcome: ClickOutcome) -> u64 {
        self.by_outcome[outcome.index()]
    }

    /// Gates in which the APD on `port` fired, alone or together with the other.
    pub fn clicks(&self, port: Port) -> u64 {
        let single = match port {
            Port::A => ClickOutcome::ApdA,
            Port::B => ClickOutcome::ApdB,
        };
        self.get(single) + self.get(ClickOutcome::Both)
    }
}

/// Counts outcomes of gates `0..n_gates` in parallel chunks.
pub fn count_gates(n_gates: u64, gate: impl Fn(u64) -> ClickOutcome + Sync) -> OutcomeCounts {
    let n_chunks = n_gates.div_ceil(CHUNK_GATES);
    (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = OutcomeCounts::default();
            let end = ((c + 1) * CHUNK_GATES).min(n_gates);
            for g in c * CHUNK_GATES..end {
                acc.record(gate(g));
            }
            acc
        })
        .reduce(OutcomeCounts::default, OutcomeCounts::merge)
}

/// Weighted mean of `f` over a zero-mean Gaussian of width `sigma`.
///
/// Trapezoid rule over ±12σ with 24 nodes per σ; for the smooth integrands
/// used here the error is far below double precision.
pub fn gaussian_average<const K: usize>(sigma: f64, f: impl Fn(f64) -> [f64; K]) -> [f64; K] {
    if sigma == 0.0 {
        return f(0.0);
    }
    const PER_SIGMA: i32 = 24;
    const HALF_WIDTH: i32 = 12 * PER_SIGMA;
    let mut acc = [0.0; K];
    let mut total = 0.0;
    for k in -HALF_WIDTH..=HALF_WIDTH {
        let z = k as f64 / PER_SIGMA as f64;
        let w = (-0.5 * z * z).exp();
        total += w;
        let v = f(z * sigma);
        for (a, x) in acc.iter_mut().zip(v) {
            *a += w * x;
        }
    }
    acc.map(|a| a / total)
}

/// Per-gate joint outcome probabilities `(None, A, B, Both)` from the
/// single-detector probabilities.
pub fn joint_from_singles([pa, pb]: [f64; 2]) -> [f64; 4] {
    [
        (1.0 - pa) * (1.0 - pb),
        pa * (1.0 - pb),
        (1.0 - pa) * pb,
        pa * pb,
    ]
}

fn sample_multinomial<R: rand::Rng + ?Sized>(n: u64, probs: [f64; 4], rng: &mut R) -> [u64; 4] {
    let mut out = [0u64; 4];
    let mut remaining = n;
    let mut rest = 1.0;
    for idx in [3, 1, 2] {
        if remaining == 0 {
            break;
        }
        let q = if rest > 0.0 {
            (probs[idx] / rest).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let k = Binomial::new(remaining, q)
            .expect("probability clamped to [0, 1]")
            .sample(rng);
        out[idx] = k;
        remaining -= k;
        rest -= probs[idx];
    }
    out[0] = remaining;
    out
}

/// One experiment point: a fixed Alice choice and Bob offset, with drift.
#[derive(Debug, Clone, Copy)]
pub struct PointSpec<'a> {
    pub prepared: &'a PreparedLink,
    pub choice: AliceChoice,
    /// Offset added to Bob's configured long-arm phase.
    pub bob_offset_rad: f64,
    pub drift: &'a DriftParams,
}

impl PointSpec<'_> {
    fn gate_outcome(&self, streams: &GateStreams, gate: u64) -> ClickOutcome {
        let mut rng = streams.gate(gate);
        let delta = phase_drift_sample(self.drift, gate, &mut rng);
        let [pa, pb] = self
            .prepared
            .click_probabilities(self.choice, self.bob_offset_rad + delta);
        sample_clicks(pa, pb, &mut rng)
    }

    /// Joint outcome probabilities once settling is over, jitter integrated out.
    pub fn stationary_joint(&self) -> [f64; 4] {
        let [_, a, b, both] = gaussian_average(self.drift.phase_jitter_sigma_rad, |delta| {
            let p = self
                .prepared
                .click_probabilities(self.choice, self.bob_offset_rad + delta);
            let [none, a, b, both] = joint_from_singles(p);
            [none, a, b, both]
        });
        [1.0 - a - b - both, a, b, both]
    }

    /// Samples `n_gates` gates, the gate counter starting at the temperature step.
    pub fn simulate(&self, streams: &GateStreams, n_gates: u64, engine: Engine) -> OutcomeCounts {
        match engine {
            Engine::PerGate => count_gates(n_gates, |g| self.gate_outcome(streams, g)),
            Engine::Aggregated => {
                let horizon = settle_horizon(self.drift, SETTLE_TOLERANCE_RAD).min(n_gates);
                let transient = count_gates(horizon, |g| self.gate_outcome(streams, g));
                let rest = n_gates - horizon;
                let joint = self.stationary_joint();
                let n_blocks = rest.div_ceil(BLOCK_GATES);
                let steady = (0..n_blocks)
                    .into_par_iter()
                    .map(|b| {
                        let len = (rest - b * BLOCK_GATES).min(BLOCK_GATES);
                        let mut rng = streams.block(b);
                        OutcomeCounts {
                            by_outcome: sample_multinomial(len, joint, &mut rng),
                        }
                    })
                    .reduce(OutcomeCounts::default, OutcomeCounts::merge);
                transient.merge(steady)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let s = GateStreams::new(42, domain::point(domain::SWEEP, 0));
        let a: u64 = s.gate(7).random();
        let b: u64 = s.gate(7).random();
        let c: u64 = s.gate(8).random();
        let other: u64 = GateStreams::new(43, domain::point(domain::SWEEP, 0))
            .gate(7)
            .random();
        let other_point: u64 = GateStreams::new(42, domain::point(domain::SWEEP, 1))
            .gate(7)
            .random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, other);
        assert_ne!(a, other_point);
    }

    #[test]
    fn counting_is_independent_of_thread_count() {
        let streams = GateStreams::new(5, 0);
        let gate = |g: u64| {
            let mut rng = streams.gate(g);
            sample_clicks(0.3, 0.6, &mut rng)
        };
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| count_gates(300_001, gate))
        };
        let one = run(1);
        assert_eq!(one, run(3));
        assert_eq!(one.gates(), 300_001);
    }

    #[test]
    fn gaussian_average_moments() {
        let [m0, m2, c] = gaussian_average(0.7, |x| [1.0, x * x, x.cos()]);
        assert!((m0 - 1.0).abs() < 1e-15);
        assert!((m2 - 0.49).abs() < 1e-13);
        assert!((c - (-0.49f64 / 2.0).exp()).abs() < 1e-14);
    }

    #[test]
    fn multinomial_preserves_total() {
        let mut rng = GateStreams::new(1, 1).gate(0);
        let p = joint_from_singles([1e-3, 2e-3]);
        let mut sums = [0u64; 4];
        for _ in 0..200 {
            let k = sample_multinomial(1_000_000, p, &mut rng);
            assert_eq!(k.iter().sum::<u64>(), 1_000_000);
            for (s, x) in sums.iter_mut().zip(k) {
                *s += x;
            }
        }
        let n = 2e8;
        for idx in 1..4 {
            let expect = p[idx] * n;
            assert!((sums[idx] as f64 - expect).abs() < 4.0 * expect.sqrt() + 1.0);
        }
    }
}
