//! Rate and MSE algebra: per-user MSE matrices, achievable rates, the
//! closed-form MMSE digital combiner, and the weight update W = E^{-1}.
//!
//! Internally the objective uses natural logs; rates are reported in
//! log2 (bits/s/Hz). The two differ by a factor ln(2).

use crate::error::Result;
use crate::linalg::{
    frob_sq, hermitize, hpd_inverse, hpd_solve, logdet_hpd, trace_product_re, CMat,
};
use crate::model::ChannelSet;
use crate::state::HybridState;

/// Full receive chain for (k, s): B = U_k^H U_RF^H H_k^s V_RF, n_k x N_RF.
fn rx_chain(state: &HybridState, channels: &ChannelSet, k: usize, s_idx: usize) -> CMat {
    let v_rf = state.v_rf_matrix();
    state.u_digital[k][s_idx].adjoint() * state.u_rf[k].adjoint() * channels.h(k, s_idx) * v_rf
}

/// MSE matrix E_k^s of the estimated symbol vector: signal mismatch,
/// inter-user interference, and combined noise terms.
pub fn mse_matrix(state: &HybridState, channels: &ChannelSet, k: usize, s_idx: usize) -> CMat {
    let n_k = state.v_digital[k][s_idx].ncols();
    let b = rx_chain(state, channels, k, s_idx);
    let signal = CMat::identity(n_k, n_k) - &b * &state.v_digital[k][s_idx];
    let mut e = &signal * signal.adjoint();
    for j in 0..state.num_users() {
        if j != k {
            let t = &b * &state.v_digital[j][s_idx];
            e += &t * t.adjoint();
        }
    }
    let ru = &state.u_rf[k] * &state.u_digital[k][s_idx];
    e += (ru.adjoint() * &ru).scale(channels.noise_variance_w);
    e
}

/// Achievable rate of user k on subcarrier s in bits/s/Hz, computed as
/// log2 det(J + D) - log2 det(J) with D the desired-signal covariance and
/// J the interference-plus-noise covariance (both Hermitian PSD).
///
/// The rate is invariant under right-multiplication of the combined
/// receive matrix U_RF U by any invertible matrix, so the computation
/// replaces it with an orthonormal basis of its range (dropping numerically
/// dead directions). In that gauge J = C_int + sigma^2 I is well
/// conditioned even when the MMSE combiner itself is nearly singular.
pub fn rate(state: &HybridState, channels: &ChannelSet, k: usize, s_idx: usize) -> Result<f64> {
    let ru = &state.u_rf[k] * &state.u_digital[k][s_idx]; // N_r x n_k
    let svd = ru.clone().svd(true, false);
    let sigma_max = svd.singular_values.iter().fold(0.0_f64, |m, &s| m.max(s));
    if sigma_max <= 0.0 {
        return Ok(0.0);
    }
    let rank = svd.singular_values.iter().filter(|&&s| s > 1e-12 * sigma_max).count();
    if rank == 0 {
        return Ok(0.0);
    }
    let u_basis = svd.u.expect("requested left singular vectors");
    let q = u_basis.columns(0, rank).into_owned(); // N_r x r, orthonormal
    let hq = q.adjoint() * channels.h(k, s_idx) * state.v_rf_matrix(); // r x N_RF

    let t_k = &hq * &state.v_digital[k][s_idx];
    let d = &t_k * t_k.adjoint();
    if frob_sq(&d) == 0.0 {
        return Ok(0.0);
    }
    let mut j_mat = CMat::identity(rank, rank).scale(channels.noise_variance_w);
    for j in 0..state.num_users() {
        if j != k {
            let t = &hq * &state.v_digital[j][s_idx];
            j_mat += &t * t.adjoint();
        }
    }
    let num = logdet_hpd(&(&j_mat + &d), "rate numerator")?;
    let den = logdet_hpd(&j_mat, "rate interference covariance")?;
    Ok((num - den) / std::f64::consts::LN_2)
}

/// Sum of user rates across all subcarriers.
pub fn sum_rate(state: &HybridState, channels: &ChannelSet) -> Result<f64> {
    let mut total = 0.0;
    for k in 0..state.num_users() {
        for s_idx in 0..state.num_subcarriers() {
            total += rate(state, channels, k, s_idx)?;
        }
    }
    Ok(total)
}

/// MMSE digital combiner:
/// U = (U_RF^H (H V_RF (sum_j V_j V_j^H) V_RF^H H^H + sigma^2 I) U_RF)^{-1}
///     U_RF^H H V_RF V_k.
pub fn update_digital_combiner(
    state: &HybridState,
    channels: &ChannelSet,
    k: usize,
    s_idx: usize,
) -> Result<CMat> {
    let v_rf = state.v_rf_matrix();
    let hv = channels.h(k, s_idx) * &v_rf; // N_r x N_RF
    let n_r = hv.nrows();
    let mut cov = CMat::zeros(n_r, n_r);
    for j in 0..state.num_users() {
        let t = &hv * &state.v_digital[j][s_idx];
        cov += &t * t.adjoint();
    }
    for i in 0..n_r {
        cov[(i, i)] += crate::linalg::cx(channels.noise_variance_w, 0.0);
    }
    let u_rf = &state.u_rf[k];
    let a = u_rf.adjoint() * &cov * u_rf;
    let rhs = u_rf.adjoint() * &hv * &state.v_digital[k][s_idx];
    hpd_solve(&a, &rhs, "digital combiner")
}

/// Weight update W = E^{-1} using the reduced MSE
/// E = I - U^H U_RF^H H V_RF V_k, valid right after the combiner update.
pub fn update_weight(
    state: &HybridState,
    channels: &ChannelSet,
    k: usize,
    s_idx: usize,
) -> Result<CMat> {
    let n_k = state.v_digital[k][s_idx].ncols();
    let b = rx_chain(state, channels, k, s_idx);
    let e = CMat::identity(n_k, n_k) - &b * &state.v_digital[k][s_idx];
    let w = hpd_inverse(&hermitize(&e), "weight update")?;
    Ok(hermitize(&w))
}

/// Weighted-MSE objective sum_k sum_s tr(W E) - ln det(W) (natural log).
pub fn wmmse_objective(state: &HybridState, channels: &ChannelSet) -> Result<f64> {
    let mut total = 0.0;
    for k in 0..state.num_users() {
        for s_idx in 0..state.num_subcarriers() {
            let e = mse_matrix(state, channels, k, s_idx);
            let w = &state.weights[k][s_idx];
            total += trace_product_re(w, &e) - logdet_hpd(w, "objective weight")?;
        }
    }
    Ok(total)
}
