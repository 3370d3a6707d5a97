//! Shared helpers for the oracle and acceptance suites: instance builders
//! and an independent projected-gradient solver (with Dykstra projections)
//! for the constrained digital-precoder program. The solver shares no code
//! with the ADMM path it cross-checks.

#![allow(dead_code)]

use hybrid_precoding::config::SystemConfig;
use hybrid_precoding::linalg::{cx, frob_sq, hermitize, random_cmat, CMat};
use hybrid_precoding::model::ChannelSet;
use hybrid_precoding::ofdm::SpectralPlan;
use hybrid_precoding::state::{random_state, HybridState};
use hybrid_precoding::wmmse::{mse_matrix, update_digital_combiner, update_weight};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Precoders = Vec<Vec<CMat>>; // [user][subcarrier]

/// Random O(1)-scale channels with the given noise floor.
pub fn synthetic_channels(cfg: &SystemConfig, seed: u64, noise: f64) -> ChannelSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ChannelSet {
        channels: (0..cfg.num_users)
            .map(|_| {
                (0..cfg.subcarriers().len())
                    .map(|_| random_cmat(&mut rng, cfg.num_rx_antennas, cfg.num_tx_antennas))
                    .collect()
            })
            .collect(),
        geometry: Vec::new(),
        noise_variance_w: noise,
    }
}

/// Random state with freshly updated digital combiners and weights, so the
/// V subproblem has generic positive-definite data.
pub fn prepared_state(cfg: &SystemConfig, channels: &ChannelSet, seed: u64) -> HybridState {
    let mut st = random_state(cfg, seed);
    for k in 0..cfg.num_users {
        for s in 0..st.num_subcarriers() {
            st.u_digital[k][s] = update_digital_combiner(&st, channels, k, s).unwrap();
            st.weights[k][s] = update_weight(&st, channels, k, s).unwrap();
        }
    }
    st
}

/// Quadratic data of the digital-precoder objective:
/// per subcarrier M = sum_j B_j^H W_j B_j and per (s, k) linear term
/// C = B_k^H W_k, with B the full receive chain.
pub fn quadratic_data(state: &HybridState, channels: &ChannelSet) -> (Vec<CMat>, Vec<Vec<CMat>>) {
    let v_rf = state.v_rf_matrix();
    let n_rf = state.num_tx_chains();
    let s_count = state.num_subcarriers();
    let mut m_mats = Vec::with_capacity(s_count);
    let mut c_mats = Vec::with_capacity(s_count);
    for s_idx in 0..s_count {
        let mut m = CMat::zeros(n_rf, n_rf);
        let mut c_s = Vec::with_capacity(state.num_users());
        for j in 0..state.num_users() {
            let b = state.u_digital[j][s_idx].adjoint()
                * state.u_rf[j].adjoint()
                * channels.h(j, s_idx)
                * &v_rf;
            let w = hermitize(&state.weights[j][s_idx]);
            m += b.adjoint() * &w * &b;
            c_s.push(b.adjoint() * &w);
        }
        m_mats.push(hermitize(&m));
        c_mats.push(c_s);
    }
    (m_mats, c_mats)
}

/// sum_k sum_s tr(W_k^s E_k^s) evaluated at candidate precoders.
pub fn weighted_mse_at(state: &HybridState, channels: &ChannelSet, v: &Precoders) -> f64 {
    let mut probe = state.clone();
    probe.v_digital = v.clone();
    let mut acc = 0.0;
    for k in 0..state.num_users() {
        for s in 0..state.num_subcarriers() {
            let e = mse_matrix(&probe, channels, k, s);
            acc += hybrid_precoding::linalg::trace_product_re(&probe.weights[k][s], &e);
        }
    }
    acc
}

fn clone_shape(v: &Precoders) -> Precoders {
    v.iter()
        .map(|vk| vk.iter().map(|m| CMat::zeros(m.nrows(), m.ncols())).collect())
        .collect()
}

fn axpy(dst: &mut Precoders, a: f64, src: &Precoders) {
    for (dk, sk) in dst.iter_mut().zip(src.iter()) {
        for (dm, sm) in dk.iter_mut().zip(sk.iter()) {
            *dm += sm.scale(a);
        }
    }
}

fn total_norm(v: &Precoders) -> f64 {
    v.iter().flatten().map(frob_sq).sum::<f64>().sqrt()
}

fn diff_norm(a: &Precoders, b: &Precoders) -> f64 {
    let mut acc = 0.0;
    for (ak, bk) in a.iter().zip(b.iter()) {
        for (am, bm) in ak.iter().zip(bk.iter()) {
            acc += frob_sq(&(am - bm));
        }
    }
    acc.sqrt()
}

/// Exact Euclidean projection onto the per-subcarrier power balls.
fn project_power(v: &mut Precoders, rf_gain: f64, budget: f64) {
    let s_count = v[0].len();
    for s_idx in 0..s_count {
        let power: f64 = rf_gain * v.iter().map(|vk| frob_sq(&vk[s_idx])).sum::<f64>();
        if power > budget {
            let scale = (budget / power).sqrt();
            for vk in v.iter_mut() {
                vk[s_idx] *= cx(scale, 0.0);
            }
        }
    }
}

/// Exact Euclidean projection onto one chain's weighted ball
/// { sum_s w_s sum_k ||V_k^s[m,:]||^2 <= radius_sq }: rows scale by
/// 1/(1 + mu w_s) with mu from a scalar bisection.
fn project_weighted_chain(v: &mut Precoders, weights: &[f64], radius_sq: f64, chain: usize) {
    let value = |mu: f64| -> f64 {
        let mut acc = 0.0;
        for vk in v.iter() {
            for (s_idx, mat) in vk.iter().enumerate() {
                let row_sq: f64 = mat.row(chain).iter().map(|z| z.norm_sqr()).sum();
                let d = 1.0 + mu * weights[s_idx];
                acc += weights[s_idx] * row_sq / (d * d);
            }
        }
        acc
    };
    if value(0.0) <= radius_sq {
        return;
    }
    let mut hi = 1.0;
    while value(hi) > radius_sq {
        hi *= 2.0;
        assert!(hi < 1e300, "weighted projection failed to bracket");
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if value(mid) > radius_sq {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mu = hi;
    for vk in v.iter_mut() {
        for (s_idx, mat) in vk.iter_mut().enumerate() {
            let scale = cx(1.0 / (1.0 + mu * weights[s_idx]), 0.0);
            for c in 0..mat.ncols() {
                mat[(chain, c)] *= scale;
            }
        }
    }
}

/// Exact Euclidean projection onto one chain's plain ball of given radius.
fn project_plain_chain(v: &mut Precoders, radius: f64, chain: usize) {
    let norm: f64 = v
        .iter()
        .flat_map(|vk| vk.iter())
        .map(|m| m.row(chain).iter().map(|z| z.norm_sqr()).sum::<f64>())
        .sum::<f64>()
        .sqrt();
    if norm > radius {
        let scale = cx(radius / norm, 0.0);
        for vk in v.iter_mut() {
            for mat in vk.iter_mut() {
                for c in 0..mat.ncols() {
                    mat[(chain, c)] *= scale;
                }
            }
        }
    }
}

/// Dykstra's alternating projections onto the intersection of the three
/// constraint families. Exact per-set projections make the limit the true
/// Euclidean projection of `x`.
pub fn project_feasible(x: &Precoders, cfg: &SystemConfig, plan: &SpectralPlan) -> Precoders {
    let rf_gain = cfg.num_tx_antennas as f64 / cfg.num_tx_rf_chains as f64;
    let clip_radius = cfg.clip_level / (-2.0 * cfg.clip_prob.ln()).sqrt();
    let spectral_radius_sq = cfg.spectral_rhs * cfg.spectral_rhs;
    let mut current = x.clone();
    let mut p = clone_shape(x);
    let mut q = clone_shape(x);
    let mut r = clone_shape(x);
    for _ in 0..500 {
        let before = current.clone();

        let mut y = current.clone();
        axpy(&mut y, 1.0, &p);
        let mut y_proj = y.clone();
        project_power(&mut y_proj, rf_gain, cfg.power_budget_w);
        p = y;
        axpy(&mut p, -1.0, &y_proj);

        let mut z = y_proj.clone();
        axpy(&mut z, 1.0, &q);
        let mut z_proj = z.clone();
        for m in 0..cfg.num_tx_rf_chains {
            project_weighted_chain(&mut z_proj, &plan.l_diag, spectral_radius_sq, m);
        }
        q = z;
        axpy(&mut q, -1.0, &z_proj);

        let mut w = z_proj.clone();
        axpy(&mut w, 1.0, &r);
        let mut w_proj = w.clone();
        for m in 0..cfg.num_tx_rf_chains {
            project_plain_chain(&mut w_proj, clip_radius, m);
        }
        r = w;
        axpy(&mut r, -1.0, &w_proj);

        current = w_proj;
        if diff_norm(&current, &before) < 1e-13 * total_norm(&current).max(1.0) {
            break;
        }
    }
    current
}

/// Projected gradient on the digital-precoder program. `extra_grad` lets
/// callers add proximal terms (used by the V-step oracle); pass `None` for
/// the plain constrained WMMSE objective.
pub struct PgOracle<'a> {
    pub m_mats: &'a [CMat],
    pub c_mats: &'a [Vec<CMat>],
    pub cfg: &'a SystemConfig,
    pub plan: &'a SpectralPlan,
}

impl PgOracle<'_> {
    /// Quadratic objective sum tr(V^H M V) - 2 Re tr(C^H V) (constant-free).
    pub fn objective(&self, v: &Precoders) -> f64 {
        let mut acc = 0.0;
        for (s_idx, m) in self.m_mats.iter().enumerate() {
            for (k, c) in self.c_mats[s_idx].iter().enumerate() {
                let vm = &v[k][s_idx];
                acc += hybrid_precoding::linalg::frob_inner_re(&(m * vm), vm);
                acc -= 2.0 * hybrid_precoding::linalg::frob_inner_re(c, vm);
            }
        }
        acc
    }

    fn gradient(&self, v: &Precoders) -> Precoders {
        let mut g = clone_shape(v);
        for (s_idx, m) in self.m_mats.iter().enumerate() {
            for (k, c) in self.c_mats[s_idx].iter().enumerate() {
                g[k][s_idx] = m * &v[k][s_idx] - c;
            }
        }
        g
    }

    fn max_eig(&self) -> f64 {
        self.m_mats
            .iter()
            .map(|m| {
                nalgebra::SymmetricEigen::new(m.clone())
                    .eigenvalues
                    .iter()
                    .fold(0.0_f64, |a, &b| a.max(b))
            })
            .fold(0.0_f64, f64::max)
    }

    /// Run projected gradient to high precision from `start`.
    pub fn solve(&self, start: &Precoders, max_iters: usize) -> Precoders {
        let step = 0.9 / self.max_eig().max(1e-12);
        let mut v = project_feasible(start, self.cfg, self.plan);
        for _ in 0..max_iters {
            let g = self.gradient(&v);
            let mut trial = v.clone();
            axpy(&mut trial, -step, &g);
            let next = project_feasible(&trial, self.cfg, self.plan);
            let moved = diff_norm(&next, &v);
            v = next;
            if moved < 1e-12 * total_norm(&v).max(1.0) {
                break;
            }
        }
        v
    }
}

/// Worst constraint excess of a precoder set (same contract as the library
/// slack audit but computed locally).
pub fn worst_violation(v: &Precoders, cfg: &SystemConfig, plan: &SpectralPlan) -> f64 {
    use hybrid_precoding::ofdm::{clipping_bound_lhs, spectral_bound_lhs};
    let rf_gain = cfg.num_tx_antennas as f64 / cfg.num_tx_rf_chains as f64;
    let s_count = v[0].len();
    let mut worst = f64::NEG_INFINITY;
    for s_idx in 0..s_count {
        let power: f64 = rf_gain * v.iter().map(|vk| frob_sq(&vk[s_idx])).sum::<f64>();
        worst = worst.max(power - cfg.power_budget_w);
    }
    for m in 0..cfg.num_tx_rf_chains {
        worst = worst.max(spectral_bound_lhs(v, &plan.l_diag, m) - cfg.spectral_rhs);
        worst = worst.max(clipping_bound_lhs(v, cfg.clip_prob, m) - cfg.clip_level);
    }
    worst
}
