//! The three experiment commands.

use serde::Serialize;
use timebin_qkd::experiments::fringe::{temperature_grid, FitOutcome, FringeResult};
use timebin_qkd::experiments::{
    estimate_visibility, run_bb84_session, run_distance_sweep, run_fringe_scan, Bb84Session,
    ScenarioConfig,
};
use timebin_qkd::protocol::QberReport;

use crate::config;
use crate::error::CliError;
use crate::output::{OutputDir, RunManifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    fn ext(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// Temperature scan `LO:HI:STEPS`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TempRange {
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

impl std::str::FromStr for TempRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [lo, hi, steps] = parts.as_slice() else {
            return Err(format!("expected LO:HI:STEPS, got {s:?}"));
        };
        let num = |x: &str| {
            x.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("{x:?} is not a number"))
        };
        let steps: usize = steps
            .trim()
            .parse()
            .map_err(|_| format!("{steps:?} is not a step count"))?;
        if steps < 2 {
            return Err("STEPS must be at least 2".into());
        }
        let (lo, hi) = (num(lo)?, num(hi)?);
        if hi <= lo {
            return Err("HI must exceed LO".into());
        }
        Ok(Self { lo, hi, steps })
    }
}

/// Comma-separated fiber lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct Distances(pub Vec<f64>);

impl std::str::FromStr for Distances {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        parse_distances(s).map(Distances)
    }
}

pub fn parse_distances(s: &str) -> Result<Vec<f64>, String> {
    let out: Vec<f64> = s
        .split(',')
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite() && *v >= 0.0)
                .ok_or_else(|| format!("{:?} is not a distance >= 0", x.trim()))
        })
        .collect::<Result<_, _>>()?;
    if out.is_empty() {
        return Err("no distances given".into());
    }
    Ok(out)
}

fn warn_all(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn finish<A: Serialize>(
    out: &mut OutputDir,
    command: &'static str,
    config: &ScenarioConfig,
    arguments: A,
    warnings: &[String],
) -> Result<(), CliError> {
    out.write(&format!("{command}_config.toml"), config::render(config)?.as_bytes())?;
    let mut manifest = RunManifest::new(command, config, arguments, warnings)?;
    manifest.outputs = out.written().to_vec();
    out.write_json(&format!("{command}_manifest.json"), &manifest)
}

#[derive(Serialize)]
struct SweepCsvRow {
    length_km: f64,
    p_analytic: f64,
    p_mc: f64,
    ci_low: f64,
    ci_high: f64,
    dark_floor: f64,
}

#[derive(Serialize)]
struct SweepArgs<'a> {
    distances_km: &'a [f64],
    format: Format,
}

pub fn sweep(
    config: &ScenarioConfig,
    distances: &[f64],
    format: Format,
    out: &mut OutputDir,
) -> Result<(), CliError> {
    let sweep = run_distance_sweep(config, distances)?;
    warn_all(&sweep.warnings);
    let name = format!("sweep.{}", format.ext());
    match format {
        Format::Csv => {
            let rows: Vec<SweepCsvRow> = sweep
                .rows
                .iter()
                .map(|r| SweepCsvRow {
                    length_km: r.length_km,
                    p_analytic: r.p_analytic,
                    p_mc: r.p_mc,
                    ci_low: r.ci_low,
                    ci_high: r.ci_high,
                    dark_floor: r.dark_floor,
                })
                .collect();
            out.write_csv(&name, &rows)?;
        }
        Format::Json => out.write_json(
            &name,
            &serde_json::json!({
                "schema": "tbqkd.sweep/1",
                "manifest": "sweep_manifest.json",
                "log10_slope_per_km": {
                    "analytic": sweep.log_slope(true),
                    "monte_carlo": sweep.log_slope(false),
                },
                "rows": sweep.rows,
            }),
        )?,
    }
    let args = SweepArgs {
        distances_km: distances,
        format,
    };
    finish(out, "sweep", config, args, &sweep.warnings)
}

#[derive(Serialize)]
struct FringeCsvRow {
    #[serde(rename = "temperature_C")]
    temperature_c: f64,
    phase_rad: f64,
    #[serde(rename = "counts_A")]
    counts_a: u64,
    #[serde(rename = "counts_B")]
    counts_b: u64,
    gates: u64,
}

#[derive(Serialize)]
struct ApdFit<'a> {
    apd: &'static str,
    #[serde(flatten)]
    fit: &'a FitOutcome,
    raw_visibility: f64,
}

#[derive(Serialize)]
struct FringeFitFile<'a> {
    schema: &'static str,
    manifest: &'static str,
    expected_period_c: f64,
    fits: Vec<ApdFit<'a>>,
    /// Visibility estimate per APD, or the reason none is available.
    visibility: serde_json::Value,
    warnings: &'a [String],
}

fn fringe_fit_file<'a>(config: &ScenarioConfig, result: &'a FringeResult) -> FringeFitFile<'a> {
    use timebin_qkd::optics::Port;
    let fits = Port::BOTH
        .iter()
        .zip(["A", "B"])
        .map(|(&port, apd)| ApdFit {
            apd,
            fit: &result.fits[port.index()],
            raw_visibility: result.raw_visibility(port),
        })
        .collect();
    let visibility = match estimate_visibility(result) {
        Ok([a, b]) => serde_json::json!({ "status": "ok", "A": a, "B": b }),
        Err(e) => serde_json::json!({ "status": "failed", "reason": e.to_string() }),
    };
    FringeFitFile {
        schema: "tbqkd.fringe_fit/1",
        manifest: "fringe_manifest.json",
        expected_period_c: config.bob.fringe_period_c(),
        fits,
        visibility,
        warnings: &result.warnings,
    }
}

pub fn default_temp_range(config: &ScenarioConfig) -> TempRange {
    let period = config.bob.fringe_period_c();
    let t0 = config.bob.temperature_c;
    TempRange {
        lo: t0 - period,
        hi: t0 + period,
        steps: 41,
    }
}

pub fn fringe(
    config: &ScenarioConfig,
    range: TempRange,
    format: Format,
    out: &mut OutputDir,
) -> Result<(), CliError> {
    let temps = temperature_grid(range.lo, range.hi, range.steps);
    let result = run_fringe_scan(config, &temps)?;
    warn_all(&result.warnings);
    for (fit, apd) in result.fits.iter().zip(["A", "B"]) {
        if let FitOutcome::Failed { reason } = fit {
            eprintln!("warning: fringe fit for APD {apd} failed: {reason}");
        }
    }
    let name = format!("fringe.{}", format.ext());
    match format {
        Format::Csv => {
            let rows: Vec<FringeCsvRow> = result
                .points
                .iter()
                .map(|p| FringeCsvRow {
                    temperature_c: p.temperature_c,
                    phase_rad: p.phase_rad,
                    counts_a: p.counts_a,
                    counts_b: p.counts_b,
                    gates: p.gates,
                })
                .collect();
            out.write_csv(&name, &rows)?;
        }
        Format::Json => out.write_json(
            &name,
            &serde_json::json!({
                "schema": "tbqkd.fringe/1",
                "manifest": "fringe_manifest.json",
                "points": result.points,
            }),
        )?,
    }
    out.write_json("fringe_fit.json", &fringe_fit_file(config, &result))?;
    finish(out, "fringe", config, serde_json::json!({ "temp_range": range, "format": format }), &result.warnings)
}

/// Number of key bits echoed into the session file.
pub const KEY_SAMPLE_BITS: usize = 64;

#[derive(Serialize)]
struct Bb84File {
    schema: &'static str,
    manifest: &'static str,
    gates: u64,
    gates_with_click: u64,
    gates_resolved: u64,
    raw_rate_per_gate: f64,
    analytic_raw_rate: f64,
    sift_fraction: Option<f64>,
    /// `"ok"` or `"undefined"` when nothing was sifted.
    qber_status: &'static str,
    qber: Option<f64>,
    qber_ci: Option<[f64; 2]>,
    qber_from_visibility: f64,
    analytic_visibility: f64,
    sifted_bits: u64,
    bit_errors: Option<u64>,
    key_sample_alice: String,
    key_sample_bob: String,
}

fn bits(it: impl Iterator<Item = bool>) -> String {
    it.take(KEY_SAMPLE_BITS).map(|b| if b { '1' } else { '0' }).collect()
}

fn bb84_file(s: &Bb84Session) -> Bb84File {
    let report: Option<&QberReport> = s.report();
    let gates = s.tally.gates;
    Bb84File {
        schema: "tbqkd.bb84/1",
        manifest: "bb84_manifest.json",
        gates,
        gates_with_click: s.tally.clicks,
        gates_resolved: s.tally.resolved,
        raw_rate_per_gate: if gates == 0 { 0.0 } else { s.tally.clicks as f64 / gates as f64 },
        analytic_raw_rate: s.analytic_raw_rate,
        sift_fraction: report.map(|r| r.sift_fraction),
        qber_status: if report.is_some() { "ok" } else { "undefined" },
        qber: report.map(|r| r.qber),
        qber_ci: report.map(|r| [r.qber_ci.low, r.qber_ci.high]),
        qber_from_visibility: s.qber_from_visibility,
        analytic_visibility: s.analytic_visibility,
        sifted_bits: s.sifted.len() as u64,
        bit_errors: report.map(|r| r.error_count),
        key_sample_alice: bits(s.alice_key()),
        key_sample_bob: bits(s.bob_key()),
    }
}

pub fn bb84(config: &ScenarioConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let session = run_bb84_session(config, config.n_gates)?;
    let warnings = config.warnings();
    warn_all(&warnings);
    if session.report().is_none() {
        eprintln!("warning: no sifted bits; QBER is undefined");
    }
    out.write_json("bb84.json", &bb84_file(&session))?;
    finish(out, "bb84", config, serde_json::json!({ "gates": config.n_gates }), &warnings)
}
