//! Deterministic text output: every float is printed with 12 significant
//! digits in scientific notation so reruns produce byte-identical files.

use std::fmt::Write as _;

use crate::admm::ResidualRecord;
use crate::bcd::Trace;
use crate::config::watts_to_dbm;

/// 12-significant-digit scientific form, e.g. `1.23456789012e3`.
pub fn fmt_sig(x: f64) -> String {
    format!("{x:.11e}")
}

pub const TRACE_COLUMNS: &str = "iter,objective,sum_rate_bps_hz,per_subcarrier_rate,\
admm_iterations,power_excess,spectral_excess,clipping_excess,in_band_power_dbm,oob_power_dbm";

/// Trace CSV: one row per outer iteration; emission powers in dBm.
pub fn trace_to_csv(trace: &Trace) -> String {
    let mut out = String::from(TRACE_COLUMNS);
    out.push('\n');
    for r in &trace.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.iter,
            fmt_sig(r.objective),
            fmt_sig(r.sum_rate_bps_hz),
            fmt_sig(r.per_subcarrier_rate),
            r.admm_iterations,
            fmt_sig(r.power_excess),
            fmt_sig(r.spectral_excess),
            fmt_sig(r.clipping_excess),
            fmt_sig(watts_to_dbm(r.in_band_power_w)),
            fmt_sig(watts_to_dbm(r.oob_power_w)),
        );
    }
    out
}

pub fn trace_to_json(trace: &Trace) -> serde_json::Result<String> {
    serde_json::to_string_pretty(trace)
}

/// ADMM residual history CSV.
pub fn residuals_to_csv(records: &[ResidualRecord]) -> String {
    let mut out = String::from("iter,primal_res,dual_res,rho,objective\n");
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.iter,
            fmt_sig(r.primal),
            fmt_sig(r.dual),
            fmt_sig(r.rho),
            fmt_sig(r.objective)
        );
    }
    out
}

/// PSD CSV with the documented `frequency_hz,psd_dbm` column contract.
/// `psd` carries the per-symbol spectra in watts-equivalent linear units;
/// values are floored at 1e-300 before the dB conversion.
pub fn psd_to_csv(freqs: &[f64], psd: &[f64]) -> String {
    let mut out = String::from("frequency_hz,psd_dbm\n");
    for (f, p) in freqs.iter().zip(psd.iter()) {
        let _ = writeln!(out, "{},{}", fmt_sig(*f), fmt_sig(watts_to_dbm(p.max(1e-300))));
    }
    out
}
