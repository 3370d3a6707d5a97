//! Outer Gauss-Seidel loop cycling through the five variable blocks, plus
//! the baselines used for comparison runs and the phase-noise evaluation
//! harness.
//!
//! Block order per cycle: digital combiners U_k^s, weights W_k^s, digital
//! precoders {V_k^s} via ADMM, transmit PS vector, per-user RF combiners.
//! Every block is a descent step on the weighted-MSE objective, so the
//! objective trace is nonincreasing (up to solver tolerances).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::admm::{admm_solve, AdmmOptions, ConstraintSlacks};
use crate::analog::{build_rx_workspace, build_tx_workspace, AnalogOpts, PhaseErrorMoments};
use crate::config::SystemConfig;
use crate::error::Result;
use crate::model::{gen_channel, ChannelSet};
use crate::ofdm::{band_power_w, SpectralPlan};
use crate::state::{init_state, HybridState};
use crate::strategy::AnalogMethod;
use crate::wmmse::{sum_rate, update_digital_combiner, update_weight, wmmse_objective};

/// Comparison baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// Full algorithm.
    #[default]
    None,
    /// Weights pinned at identity (hybrid MMSE).
    MmseIdentityWeights,
    /// PS stages left at their random initialization.
    RandomPs,
}

#[derive(Debug, Clone)]
pub struct BcdOptions {
    pub max_outer_iters: usize,
    /// Stop when the relative objective change falls below this.
    pub outer_tol: f64,
    pub analog_method: AnalogMethod,
    /// Use the phase-error-averaged PS updates with the config's sigma_e.
    pub robust: bool,
    pub baseline: Baseline,
    pub admm: AdmmOptions,
    pub analog: AnalogOpts,
    /// Notch frequencies defining the spectral plan of the run.
    pub notch_freqs: Vec<f64>,
}

impl Default for BcdOptions {
    fn default() -> Self {
        Self {
            max_outer_iters: 30,
            outer_tol: 1e-5,
            analog_method: AnalogMethod::CoordinateDescent,
            robust: false,
            baseline: Baseline::None,
            admm: AdmmOptions::default(),
            analog: AnalogOpts::default(),
            notch_freqs: Vec::new(),
        }
    }
}

/// One outer-iteration record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub objective: f64,
    pub sum_rate_bps_hz: f64,
    pub per_subcarrier_rate: f64,
    pub admm_iterations: usize,
    pub power_excess: f64,
    pub spectral_excess: f64,
    pub clipping_excess: f64,
    pub in_band_power_w: f64,
    pub oob_power_w: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
}

impl Trace {
    pub fn final_rate(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.sum_rate_bps_hz)
    }

    pub fn final_objective(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.objective)
    }
}

pub struct RunOutput {
    pub state: HybridState,
    pub channels: ChannelSet,
    pub plan: SpectralPlan,
    pub trace: Trace,
    pub warnings: Vec<String>,
}

fn emission_powers(state: &HybridState, plan: &SpectralPlan, cfg: &SystemConfig) -> (f64, f64) {
    let half = cfg.bandwidth_hz / 2.0;
    let in_band = band_power_w(state, plan, -half, half, 256);
    let (lo, hi) = match (
        plan.notch_freqs.iter().cloned().filter(|f| *f > 0.0).reduce(f64::min),
        plan.notch_freqs.iter().cloned().reduce(f64::max),
    ) {
        (Some(lo), Some(hi)) if hi > lo => (lo, hi),
        _ => (0.55 * cfg.bandwidth_hz, 1.45 * cfg.bandwidth_hz),
    };
    let oob = band_power_w(state, plan, lo, hi, 256) + band_power_w(state, plan, -hi, -lo, 256);
    (in_band, oob)
}

/// One full BCD cycle; returns the trace row recorded after the cycle.
/// `admm_warm` carries dual/penalty state between cycles so the digital
/// precoder solve does not rebuild its constraint pressure from scratch;
/// pass a fresh `None` at the start of a run.
pub fn bcd_iterate(
    state: &mut HybridState,
    channels: &ChannelSet,
    plan: &SpectralPlan,
    cfg: &SystemConfig,
    opts: &BcdOptions,
    iter: usize,
    warnings: &mut Vec<String>,
    admm_warm: &mut Option<crate::admm::AdmmState>,
) -> Result<TraceRow> {
    let moments = if opts.robust {
        Some(PhaseErrorMoments::gaussian(cfg.phase_error_std))
    } else {
        None
    };
    let strategy = opts.analog_method.build();

    for k in 0..state.num_users() {
        for s_idx in 0..state.num_subcarriers() {
            state.u_digital[k][s_idx] = update_digital_combiner(state, channels, k, s_idx)?;
        }
    }
    if opts.baseline != Baseline::MmseIdentityWeights {
        for k in 0..state.num_users() {
            for s_idx in 0..state.num_subcarriers() {
                state.weights[k][s_idx] = update_weight(state, channels, k, s_idx)?;
            }
        }
    }

    let admm_out = admm_solve(state, channels, plan, cfg, &opts.admm, admm_warm.as_ref())?;
    if !admm_out.converged {
        warnings.push(format!("iteration {iter}: ADMM hit the iteration cap"));
    }
    state.v_digital = admm_out.v;
    let admm_iterations = admm_out.iterations;
    *admm_warm = Some(admm_out.state);

    if opts.baseline != Baseline::RandomPs {
        let tx_ws = build_tx_workspace(state, channels);
        strategy.optimize_tx(&tx_ws, &mut state.v_rf_phases, moments, &opts.analog);
        for k in 0..state.num_users() {
            let rx_ws = build_rx_workspace(state, channels, k);
            let mut u_rf = state.u_rf[k].clone();
            strategy.optimize_rx(&rx_ws, &mut u_rf, moments, &opts.analog);
            state.u_rf[k] = u_rf;
        }
    }

    let slacks = ConstraintSlacks::measure(&state.v_digital, cfg, plan);
    let (in_band, oob) = emission_powers(state, plan, cfg);
    let objective = wmmse_objective(state, channels)?;
    let rate = sum_rate(state, channels)?;
    Ok(TraceRow {
        iter,
        objective,
        sum_rate_bps_hz: rate,
        per_subcarrier_rate: rate / state.num_subcarriers() as f64,
        admm_iterations,
        power_excess: slacks.power_excess,
        spectral_excess: slacks.spectral_excess,
        clipping_excess: slacks.clipping_excess,
        in_band_power_w: in_band,
        oob_power_w: oob,
    })
}

/// End-to-end run: channel draw, feasible initialization, BCD cycles until
/// the relative objective change drops below `outer_tol`.
pub fn run(cfg: &SystemConfig, seed: u64, opts: &BcdOptions) -> Result<RunOutput> {
    cfg.validate()?;
    let channels = gen_channel(cfg, seed)?;
    let plan = SpectralPlan::from_config(cfg, &opts.notch_freqs);
    let mut state = init_state(cfg, &channels, &plan, seed)?;
    let mut trace = Trace::default();
    let mut warnings = Vec::new();
    let mut admm_warm = None;
    let mut prev_obj = f64::INFINITY;
    for iter in 0..opts.max_outer_iters {
        let row =
            bcd_iterate(&mut state, &channels, &plan, cfg, opts, iter, &mut warnings, &mut admm_warm)?;
        let obj = row.objective;
        trace.rows.push(row);
        if prev_obj.is_finite() {
            let change = (prev_obj - obj).abs() / prev_obj.abs().max(1e-12);
            if change < opts.outer_tol {
                break;
            }
        }
        prev_obj = obj;
    }
    Ok(RunOutput { state, channels, plan, trace, warnings })
}

/// Average sum-rate under i.i.d. Gaussian PS phase errors, redrawn for
/// every evaluation event. Deterministic in `seed`, so two states of the
/// same geometry see paired error draws.
pub fn evaluate_under_ps_noise(
    state: &HybridState,
    channels: &ChannelSet,
    sigma_e: f64,
    num_draws: usize,
    seed: u64,
) -> Result<f64> {
    if sigma_e == 0.0 {
        return sum_rate(state, channels);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = 0.0;
    for _ in 0..num_draws {
        let noisy = state.with_phase_errors(sigma_e, &mut rng);
        acc += sum_rate(&noisy, channels)?;
    }
    Ok(acc / num_draws as f64)
}
