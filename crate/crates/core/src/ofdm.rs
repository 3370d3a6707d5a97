//! Oversampled OFDM synthesis, pulse spectra, spectral notching, PAPR and
//! clipping machinery, and the probabilistic bound arithmetic used by the
//! digital precoder constraints.
//!
//! The subcarrier pulse is the rectangular worst case over [-T_g, T_sym),
//! so its spectrum is a modulated sinc. The notching matrix A (one row per
//! notch frequency) is never materialized: every consumer only needs the
//! diagonal of L = A^H A, which is accumulated as a streaming sum over
//! frequencies so grids with hundreds of thousands of notches stay cheap.

use std::f64::consts::{PI, TAU};

use rand::Rng;

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::linalg::{cx, phasor, CMat, CVec, C64};
use crate::state::HybridState;

/// sinc(x) = sin(x)/x with sinc(0) = 1.
#[inline]
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        x.sin() / x
    }
}

/// Notch grid, pulse timing, and the diagonal of L = A^H A.
#[derive(Debug, Clone)]
pub struct SpectralPlan {
    pub notch_freqs: Vec<f64>,
    pub symbol_time_s: f64,
    pub guard_time_s: f64,
    pub total_time_s: f64,
    /// Signed subcarrier indices in ascending order.
    pub subcarriers: Vec<i32>,
    /// l_diag[s_idx] = sum_j |o^s(f_j)|^2.
    pub l_diag: Vec<f64>,
    pub oversampling: usize,
}

impl SpectralPlan {
    pub fn from_config(cfg: &SystemConfig, notch_freqs: &[f64]) -> Self {
        let subcarriers = cfg.subcarriers();
        let mut plan = Self {
            notch_freqs: notch_freqs.to_vec(),
            symbol_time_s: cfg.symbol_time_s,
            guard_time_s: cfg.guard_time_s,
            total_time_s: cfg.total_symbol_time_s(),
            subcarriers,
            l_diag: Vec::new(),
            oversampling: cfg.oversampling,
        };
        plan.l_diag = notch_diag(notch_freqs, &plan);
        plan
    }

    pub fn num_subcarriers(&self) -> usize {
        self.subcarriers.len()
    }

    /// Oversampled synthesis length l*S.
    pub fn num_samples(&self) -> usize {
        self.oversampling * self.num_subcarriers()
    }

    /// Synthesis operator F^{-1}: entry (n, s_idx) = exp(j 2 pi s n / (l S))
    /// for n = 0..lS-1. F^{-1}/sqrt(lS) is left-unitary.
    pub fn synthesis_matrix(&self) -> CMat {
        let rows = self.num_samples();
        let ls = rows as f64;
        CMat::from_fn(rows, self.num_subcarriers(), |n, idx| {
            phasor(TAU * self.subcarriers[idx] as f64 * n as f64 / ls)
        })
    }
}

/// Fourier transform of the rectangular subcarrier pulse:
/// o^s(f) = T_t exp(-j pi (T_sym - T_g)(f - s/T_sym)) sinc(pi T_t (f - s/T_sym)).
pub fn pulse_spectrum(f_hz: f64, subcarrier: i32, plan: &SpectralPlan) -> C64 {
    let offset = f_hz - subcarrier as f64 / plan.symbol_time_s;
    let t_t = plan.total_time_s;
    let phase = -PI * (plan.symbol_time_s - plan.guard_time_s) * offset;
    phasor(phase) * cx(t_t * sinc(PI * t_t * offset), 0.0)
}

/// diag(A^H A) as a streaming sum over the notch grid.
pub fn notch_diag(freqs: &[f64], plan: &SpectralPlan) -> Vec<f64> {
    plan.subcarriers
        .iter()
        .map(|&s| freqs.iter().map(|&f| pulse_spectrum(f, s, plan).norm_sqr()).sum())
        .collect()
}

/// Paper-style notch grid hugging both band edges: `per_side` frequencies
/// from 1.01x to 2.9x the half-bandwidth on each side.
pub fn edge_notch_freqs(bandwidth_hz: f64, per_side: usize) -> Vec<f64> {
    let half = bandwidth_hz / 2.0;
    let (lo, hi) = (1.01 * half, 2.9 * half);
    let mut freqs = Vec::with_capacity(2 * per_side);
    for i in 0..per_side {
        let f = lo + (hi - lo) * i as f64 / (per_side.max(2) - 1) as f64;
        freqs.push(-f);
        freqs.push(f);
    }
    freqs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    freqs
}

/// Per-RF-chain symbol vector w^a for antenna `a`:
/// w^a[s] = V_RF[a, m_a] * sum_k V_k^s[m_a, :] omega_k^s.
pub fn chain_symbols(
    state: &HybridState,
    symbols: &[Vec<CVec>],
    antenna: usize,
    plan: &SpectralPlan,
) -> Result<CVec> {
    let s_count = plan.num_subcarriers();
    if symbols.len() != state.num_users() {
        return Err(Error::DimensionMismatch {
            context: "chain_symbols",
            expected: format!("{} users", state.num_users()),
            actual: format!("{} users", symbols.len()),
        });
    }
    let m = state.tx_chain_map[antenna];
    let mut w = CVec::zeros(s_count);
    for (k, user_syms) in symbols.iter().enumerate() {
        if user_syms.len() != s_count {
            return Err(Error::DimensionMismatch {
                context: "chain_symbols",
                expected: format!("{s_count} subcarriers"),
                actual: format!("{} subcarriers", user_syms.len()),
            });
        }
        for (s_idx, omega) in user_syms.iter().enumerate() {
            let v = &state.v_digital[k][s_idx];
            if omega.len() != v.ncols() {
                return Err(Error::DimensionMismatch {
                    context: "chain_symbols",
                    expected: format!("{} streams", v.ncols()),
                    actual: format!("{} streams", omega.len()),
                });
            }
            let mut acc = C64::new(0.0, 0.0);
            for c in 0..v.ncols() {
                acc += v[(m, c)] * omega[c];
            }
            w[s_idx] += acc;
        }
    }
    Ok(w * state.v_rf_phases[antenna])
}

/// Oversampled time-domain OFDM symbol x^a = F^{-1} w^a.
pub fn time_signal(
    state: &HybridState,
    symbols: &[Vec<CVec>],
    antenna: usize,
    plan: &SpectralPlan,
) -> Result<CVec> {
    let w = chain_symbols(state, symbols, antenna, plan)?;
    let ls = plan.num_samples();
    let mut x = CVec::zeros(ls);
    for n in 0..ls {
        let mut acc = C64::new(0.0, 0.0);
        for (idx, &s) in plan.subcarriers.iter().enumerate() {
            acc += phasor(TAU * s as f64 * n as f64 / ls as f64) * w[idx];
        }
        x[n] = acc;
    }
    Ok(x)
}

/// Analytic E||x^a||_2^2 = l S * sum_s sum_k ||V_k^s[m_a, :]||^2.
pub fn expected_symbol_energy(state: &HybridState, antenna: usize, plan: &SpectralPlan) -> f64 {
    let m = state.tx_chain_map[antenna];
    let per_s: f64 = (0..state.num_subcarriers())
        .map(|s_idx| {
            state
                .v_digital
                .iter()
                .map(|vk| vk[s_idx].row(m).iter().map(|z| z.norm_sqr()).sum::<f64>())
                .sum::<f64>()
        })
        .sum();
    plan.num_samples() as f64 * per_s
}

/// PAPR in both conventions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PaprValue {
    /// Peak power over total expected symbol energy E||x||_2^2.
    pub paper: f64,
    /// Peak power over per-sample mean power (paper value times l*S).
    pub conventional: f64,
}

/// PAPR of a time-domain vector. `expected_energy` substitutes the analytic
/// E||x||_2^2 in the denominator; when absent the empirical ||x||_2^2 is used.
pub fn papr(x: &CVec, expected_energy: Option<f64>) -> Result<PaprValue> {
    let peak = x.iter().map(|z| z.norm_sqr()).fold(0.0_f64, f64::max);
    let energy = expected_energy.unwrap_or_else(|| x.iter().map(|z| z.norm_sqr()).sum());
    if !(energy > 0.0) || x.is_empty() {
        return Err(Error::DegenerateInput("papr of zero signal"));
    }
    let paper = peak / energy;
    Ok(PaprValue { paper, conventional: paper * x.len() as f64 })
}

/// Amplitude clipping: samples above `chi` keep their phase at radius `chi`.
pub fn clip(x: &CVec, chi: f64) -> CVec {
    CVec::from_fn(x.len(), |n, _| {
        let z = x[n];
        let r = z.norm();
        if r > chi {
            z * (chi / r)
        } else {
            z
        }
    })
}

/// Expected power spectrum of one OFDM symbol summed over antennas:
/// PSD(f) = sum_a sum_s |o^s(f)|^2 sum_k ||(V_RF V_k^s)[a, :]||^2.
/// Unit-modulus RF entries make the antenna sum a per-chain sum scaled by
/// the subarray size.
pub fn psd_analytic(state: &HybridState, freq_grid_hz: &[f64], plan: &SpectralPlan) -> Vec<f64> {
    let sigma_sq = per_subcarrier_signal_power(state);
    freq_grid_hz
        .iter()
        .map(|&f| {
            plan.subcarriers
                .iter()
                .enumerate()
                .map(|(idx, &s)| pulse_spectrum(f, s, plan).norm_sqr() * sigma_sq[idx])
                .sum()
        })
        .collect()
}

/// sigma_s^2 summed over antennas: sum_a sum_k ||V_k^s[m_a, :]||^2.
fn per_subcarrier_signal_power(state: &HybridState) -> Vec<f64> {
    let subarray = state.tx_chain_map.len() as f64 / state.num_tx_chains() as f64;
    (0..state.num_subcarriers())
        .map(|s_idx| {
            subarray
                * state
                    .v_digital
                    .iter()
                    .map(|vk| vk[s_idx].iter().map(|z| z.norm_sqr()).sum::<f64>())
                    .sum::<f64>()
        })
        .collect()
}

/// Default frequency grid for PSD reporting: 2048 points over +-1.5x bandwidth.
pub fn default_psd_grid(bandwidth_hz: f64) -> Vec<f64> {
    let span = 1.5 * bandwidth_hz;
    let n = 2048;
    (0..n).map(|i| -span + 2.0 * span * i as f64 / (n - 1) as f64).collect()
}

/// Mean one-symbol PSD over [f_lo, f_hi] divided by T_t, in watts/Hz;
/// multiplied by the band width this approximates the band power.
pub fn band_power_w(state: &HybridState, plan: &SpectralPlan, f_lo: f64, f_hi: f64, points: usize) -> f64 {
    let n = points.max(2);
    let grid: Vec<f64> =
        (0..n).map(|i| f_lo + (f_hi - f_lo) * i as f64 / (n - 1) as f64).collect();
    let psd = psd_analytic(state, &grid, plan);
    let mean = psd.iter().sum::<f64>() / n as f64;
    mean / plan.total_time_s * (f_hi - f_lo)
}

/// Violation-probability bound of the oversampled PAPR constraint:
/// exp(-l S PAPR_max / 2).
pub fn papr_prob_bound(oversampling: usize, num_subcarriers: usize, papr_max: f64) -> f64 {
    (-(oversampling as f64) * num_subcarriers as f64 * papr_max / 2.0).exp()
}

/// Left-hand side of the clipping bound for RF chain `m`:
/// sqrt(-2 ln(eps) sum_k sum_s ||V_k^s[m, :]||^2). Feasible iff <= chi.
pub fn clipping_bound_lhs(v_digital: &[Vec<CMat>], eps: f64, chain: usize) -> f64 {
    let total: f64 = v_digital
        .iter()
        .flat_map(|vk| vk.iter())
        .map(|v| v.row(chain).iter().map(|z| z.norm_sqr()).sum::<f64>())
        .sum();
    (-2.0 * eps.ln() * total).sqrt()
}

/// Left-hand side of the spectral-shaping bound for RF chain `m`:
/// sqrt(sum_s L[s,s] sum_k ||V_k^s[m, :]||^2). Feasible iff <= sqrt(eps').
pub fn spectral_bound_lhs(v_digital: &[Vec<CMat>], l_diag: &[f64], chain: usize) -> f64 {
    let mut acc = 0.0;
    for vk in v_digital {
        for (s_idx, v) in vk.iter().enumerate() {
            acc += l_diag[s_idx] * v.row(chain).iter().map(|z| z.norm_sqr()).sum::<f64>();
        }
    }
    acc.sqrt()
}

/// Draw one i.i.d. CN(0, I) symbol set for every (user, subcarrier).
pub fn random_symbols<R: Rng + ?Sized>(
    rng: &mut R,
    num_users: usize,
    num_subcarriers: usize,
    num_streams: usize,
) -> Vec<Vec<CVec>> {
    (0..num_users)
        .map(|_| (0..num_subcarriers).map(|_| crate::linalg::random_cvec(rng, num_streams)).collect())
        .collect()
}
