//! Least-squares fit of `offset + amplitude·cos(2π(x − x_ref)/period + phase)`
//! with a free period.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, Matrix3, Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fitted sinusoid with one-sigma standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinusoidFit {
    pub offset: f64,
    pub offset_stderr: f64,
    pub amplitude: f64,
    pub amplitude_stderr: f64,
    /// Phase at `x_ref`, in `(-π, π]`.
    pub phase_rad: f64,
    pub phase_stderr: f64,
    pub period: f64,
    pub period_stderr: f64,
    /// Abscissa the phase is referred to (midpoint of the data range).
    pub x_ref: f64,
    /// `amplitude / offset`.
    pub visibility: f64,
    pub visibility_stderr: f64,
    pub residual_rms: f64,
}

impl SinusoidFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.offset
            + self.amplitude * (TAU * (x - self.x_ref) / self.period + self.phase_rad).cos()
    }
}

struct Linear {
    coef: Vector3<f64>,
    rss: f64,
}

/// Offset and quadrature amplitudes at fixed frequency.
fn linear_solve(x: &[f64], y: &[f64], x_ref: f64, freq: f64) -> Option<Linear> {
    let mut normal = Matrix3::zeros();
    let mut rhs = Vector3::zeros();
    for (&xi, &yi) in x.iter().zip(y) {
        let t = TAU * freq * (xi - x_ref);
        let row = Vector3::new(1.0, t.cos(), t.sin());
        normal += row * row.transpose();
        rhs += row * yi;
    }
    let coef = normal.cholesky()?.solve(&rhs);
    let rss = x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| {
            let t = TAU * freq * (xi - x_ref);
            let r = yi - (coef[0] + coef[1] * t.cos() + coef[2] * t.sin());
            r * r
        })
        .sum();
    Some(Linear { coef, rss })
}

fn rss_at(x: &[f64], y: &[f64], x_ref: f64, freq: f64) -> f64 {
    linear_solve(x, y, x_ref, freq).map_or(f64::INFINITY, |l| l.rss)
}

fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - ratio * (hi - lo);
    let mut d = lo + ratio * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (hi - lo).abs() <= 1e-15 * hi.abs().max(1.0) {
            break;
        }
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - ratio * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + ratio * (hi - lo);
            fd = f(d);
        }
    }
    (lo + hi) / 2.0
}

/// Fits a sinusoid of unknown period to `(x, y)`.
///
/// The period is searched between two data spans and twice the median
/// spacing, then refined; `period_hint` narrows the search to ±50% around it.
pub fn fit_sinusoid(x: &[f64], y: &[f64], period_hint: Option<f64>) -> Result<SinusoidFit> {
    let n = x.len();
    if n != y.len() {
        return Err(Error::FitFailure(format!("{} abscissae but {} values", n, y.len())));
    }
    if n < 5 {
        return Err(Error::FitFailure(format!("need at least 5 points, got {n}")));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::FitFailure("non-finite data".into()));
    }
    let (x_min, x_max) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = x_max - x_min;
    if span <= 0.0 {
        return Err(Error::FitFailure("all abscissae equal".into()));
    }
    let mean = y.iter().sum::<f64>() / n as f64;
    if y.iter().all(|&v| v == mean) {
        return Err(Error::FitFailure("constant data".into()));
    }
    let x_ref = (x_min + x_max) / 2.0;

    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut gaps: Vec<f64> = sorted.windows(2).map(|w| w[1] - w[0]).filter(|g| *g > 0.0).collect();
    gaps.sort_by(f64::total_cmp);
    let spacing = gaps[gaps.len() / 2];

    let (f_lo, f_hi) = match period_hint {
        Some(p) if p > 0.0 => (1.0 / (1.5 * p), 1.0 / (0.5 * p)),
        _ => (0.5 / span, 0.5 / spacing),
    };
    let steps = (((f_hi - f_lo) * span * 16.0).ceil() as usize).clamp(32, 200_000);
    let df = (f_hi - f_lo) / steps as f64;
    let best = (0..=steps)
        .map(|k| f_lo + k as f64 * df)
        .map(|f| (f, rss_at(x, y, x_ref, f)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty grid")
        .0;
    let freq = golden_min(
        |f| rss_at(x, y, x_ref, f),
        (best - df).max(f_lo * 0.5),
        best + df,
    );
    let lin = linear_solve(x, y, x_ref, freq)
        .ok_or_else(|| Error::FitFailure("singular design matrix".into()))?;
    let [c, a, b] = [lin.coef[0], lin.coef[1], lin.coef[2]];
    let amplitude = a.hypot(b);
    if amplitude == 0.0 {
        return Err(Error::FitFailure("zero fitted amplitude".into()));
    }

    // Covariance of (c, a, b, f) from the Jacobian at the optimum.
    let mut jac = DMatrix::zeros(n, 4);
    for (i, &xi) in x.iter().enumerate() {
        let u = xi - x_ref;
        let t = TAU * freq * u;
        let (s, co) = t.sin_cos();
        jac[(i, 0)] = 1.0;
        jac[(i, 1)] = co;
        jac[(i, 2)] = s;
        jac[(i, 3)] = TAU * u * (-a * s + b * co);
    }
    let dof = (n - 4).max(1) as f64;
    let sigma2 = lin.rss / dof;
    let jtj = Matrix4::from_iterator((jac.transpose() * &jac).iter().copied());
    let cov = jtj
        .try_inverse()
        .ok_or_else(|| Error::FitFailure("singular covariance".into()))?
        * sigma2;

    let var = |g: [f64; 4]| {
        let g = Vector4::from(g);
        (g.transpose() * cov * g)[0].max(0.0).sqrt()
    };
    let a2 = amplitude * amplitude;
    let visibility = amplitude / c;
    Ok(SinusoidFit {
        offset: c,
        offset_stderr: var([1.0, 0.0, 0.0, 0.0]),
        amplitude,
        amplitude_stderr: var([0.0, a / amplitude, b / amplitude, 0.0]),
        phase_rad: (-b).atan2(a),
        phase_stderr: var([0.0, b / a2, -a / a2, 0.0]),
        period: 1.0 / freq,
        period_stderr: var([0.0, 0.0, 0.0, -1.0 / (freq * freq)]),
        x_ref,
        visibility,
        visibility_stderr: var([
            -amplitude / (c * c),
            a / (amplitude * c),
            b / (amplitude * c),
            0.0,
        ]),
        residual_rms: (lin.rss / n as f64).sqrt(),
    })
}
