//! Three-block ADMM for the digital precoder subproblem: consensus copies
//! V = R = Z, a per-subcarrier power constraint handled inside the V step
//! by a bisection on its dual, and per-chain ball projections for the
//! spectral-shaping (R step) and clipping (Z step) constraints.
//!
//! The V step solves the KKT system of the dualized subproblem: with
//! M = sum_j B_j^H W_j B_j and B_j the full receive chain,
//!   (M + (rho/2 + theta N_t/N_RF) I) V_k = B_k^H W_k + (rho R_k - L1_k)/2,
//! where theta >= 0 is the power dual. M is eigendecomposed once per solve
//! so every bisection probe costs only a diagonal rescale.

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::linalg::{cx, frob_sq, hermitize, trace_product_re, CMat};
use crate::model::ChannelSet;
use crate::ofdm::{clipping_bound_lhs, spectral_bound_lhs, SpectralPlan};
use crate::state::HybridState;

#[derive(Debug, Clone)]
pub struct AdmmOptions {
    /// Relative convergence tolerance on max(primal, dual) residual.
    pub tol: f64,
    pub max_iters: usize,
    /// Residual-balancing penalty adaptation (grow/shrink by `rho_growth`).
    pub adapt_rho: bool,
    /// Absolute tolerance of the power-dual bisection.
    pub dual_tol: f64,
}

impl Default for AdmmOptions {
    fn default() -> Self {
        // 2000 covers the slow ~0.98/iteration consensus contraction seen
        // when all three constraint families are active at once.
        Self { tol: 1e-6, max_iters: 2000, adapt_rho: true, dual_tol: 1e-10 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ResidualRecord {
    pub iter: usize,
    pub primal: f64,
    pub dual: f64,
    pub rho: f64,
    pub objective: f64,
}

/// Consensus copies, duals, penalty, and residual history.
#[derive(Debug, Clone)]
pub struct AdmmState {
    pub r: Vec<Vec<CMat>>,
    pub z: Vec<Vec<CMat>>,
    pub lambda1: Vec<Vec<CMat>>,
    pub lambda2: Vec<Vec<CMat>>,
    pub rho: f64,
    /// Power dual theta^s per subcarrier, updated by the V-step bisection.
    pub power_duals: Vec<f64>,
    pub residuals: Vec<ResidualRecord>,
}

impl AdmmState {
    /// Copies initialized at V, duals at zero.
    pub fn from_precoders(v: &[Vec<CMat>], rho: f64) -> Self {
        let zeros: Vec<Vec<CMat>> = v
            .iter()
            .map(|vk| vk.iter().map(|m| CMat::zeros(m.nrows(), m.ncols())).collect())
            .collect();
        let s_count = v.first().map_or(0, Vec::len);
        Self {
            r: v.to_vec(),
            z: v.to_vec(),
            lambda1: zeros.clone(),
            lambda2: zeros,
            rho,
            power_duals: vec![0.0; s_count],
            residuals: Vec::new(),
        }
    }
}

/// Quadratic data of the V subproblem, frozen for one ADMM solve.
pub struct VStepProblem {
    /// Unitary eigenvectors of M per subcarrier.
    eigvecs: Vec<CMat>,
    /// Eigenvalues of M per subcarrier (nonnegative up to rounding).
    eigvals: Vec<Vec<f64>>,
    /// Linear terms B_k^H W_k, indexed [s][k], each N_RF x n_k.
    linear: Vec<Vec<CMat>>,
    /// N_t / N_RF.
    rf_gain: f64,
    pub power_budget: f64,
    /// V-independent part of sum tr(W E).
    constant: f64,
}

impl VStepProblem {
    pub fn new(state: &HybridState, channels: &ChannelSet, cfg: &SystemConfig) -> Self {
        let v_rf = state.v_rf_matrix();
        let n_rf = cfg.num_tx_rf_chains;
        let s_count = state.num_subcarriers();
        let mut eigvecs = Vec::with_capacity(s_count);
        let mut eigvals = Vec::with_capacity(s_count);
        let mut linear = Vec::with_capacity(s_count);
        let mut constant = 0.0;
        for s_idx in 0..s_count {
            let mut m = CMat::zeros(n_rf, n_rf);
            let mut lin_s = Vec::with_capacity(state.num_users());
            for j in 0..state.num_users() {
                let b = state.u_digital[j][s_idx].adjoint()
                    * state.u_rf[j].adjoint()
                    * channels.h(j, s_idx)
                    * &v_rf;
                let w = hermitize(&state.weights[j][s_idx]);
                m += b.adjoint() * &w * &b;
                lin_s.push(b.adjoint() * &w);

                let ru = &state.u_rf[j] * &state.u_digital[j][s_idx];
                constant += w.trace().re
                    + channels.noise_variance_w * trace_product_re(&w, &(ru.adjoint() * &ru));
            }
            let eig = nalgebra::SymmetricEigen::new(hermitize(&m));
            eigvals.push(eig.eigenvalues.iter().copied().collect());
            eigvecs.push(eig.eigenvectors);
            linear.push(lin_s);
        }
        Self {
            eigvecs,
            eigvals,
            linear,
            rf_gain: cfg.num_tx_antennas as f64 / n_rf as f64,
            power_budget: cfg.power_budget_w,
            constant,
        }
    }

    /// 2 (C - M V) for every (k, s): the consensus dual that makes `v`
    /// stationary for the V step at a zero power dual. Seeding the dual
    /// here skips the long ascent toward the KKT multiplier magnitude.
    pub fn kkt_dual_residual(&self, v: &[Vec<CMat>]) -> Vec<Vec<CMat>> {
        let num_users = v.len();
        let s_count = self.linear.len();
        let mut out: Vec<Vec<CMat>> = v
            .iter()
            .map(|vk| vk.iter().map(|m| CMat::zeros(m.nrows(), m.ncols())).collect())
            .collect();
        for s_idx in 0..s_count {
            let q = &self.eigvecs[s_idx];
            for (k, item) in out.iter_mut().enumerate().take(num_users) {
                let mut mv = q.adjoint() * &v[k][s_idx];
                for (i, &lam) in self.eigvals[s_idx].iter().enumerate() {
                    let mut row = mv.row_mut(i);
                    row *= cx(lam, 0.0);
                }
                item[s_idx] = (&self.linear[s_idx][k] - q * mv).scale(2.0);
            }
        }
        out
    }

    /// Mean eigenvalue of the quadratic coupling, used to scale the
    /// starting penalty to the problem data. A penalty orders of magnitude
    /// below the curvature makes the dual ascent crawl.
    pub fn curvature_scale(&self) -> f64 {
        let mut acc = 0.0;
        let mut count = 0usize;
        for lams in &self.eigvals {
            for &l in lams {
                acc += l;
                count += 1;
            }
        }
        if count == 0 {
            1.0
        } else {
            (acc / count as f64).max(1e-12)
        }
    }

    /// sum tr(W_j E_j) as a function of the digital precoders.
    pub fn objective(&self, v: &[Vec<CMat>]) -> f64 {
        let mut acc = self.constant;
        for (s_idx, lin_s) in self.linear.iter().enumerate() {
            let q = &self.eigvecs[s_idx];
            for (k, c) in lin_s.iter().enumerate() {
                let vh = q.adjoint() * &v[k][s_idx];
                for (i, &lam) in self.eigvals[s_idx].iter().enumerate() {
                    acc += lam * vh.row(i).iter().map(|z| z.norm_sqr()).sum::<f64>();
                }
                acc -= 2.0 * crate::linalg::frob_inner_re(c, &v[k][s_idx]);
            }
        }
        acc
    }
}

/// V step: closed form at the bisected power dual. Complementary slackness
/// holds at exit: theta = 0 with power <= P, or power = P to 1e-8 relative.
pub fn update_v(
    admm: &mut AdmmState,
    problem: &VStepProblem,
) -> Result<Vec<Vec<CMat>>> {
    let num_users = admm.r.len();
    let s_count = admm.power_duals.len();
    let mut v: Vec<Vec<CMat>> = admm.r.iter().map(Vec::clone).collect();
    let rho = admm.rho;
    for s_idx in 0..s_count {
        let q = &problem.eigvecs[s_idx];
        let lams = &problem.eigvals[s_idx];
        // Rotated right-hand sides Q^H (C_k + (rho R_k - L1_k)/2).
        let rhs: Vec<CMat> = (0..num_users)
            .map(|k| {
                let s_mat = &problem.linear[s_idx][k]
                    + (&admm.r[k][s_idx] * cx(rho, 0.0) - &admm.lambda1[k][s_idx]).scale(0.5);
                q.adjoint() * s_mat
            })
            .collect();

        let power_at = |theta: f64| -> f64 {
            let mut p = 0.0;
            for rh in &rhs {
                for (i, &lam) in lams.iter().enumerate() {
                    let denom = lam + rho / 2.0 + theta * problem.rf_gain;
                    p += rh.row(i).iter().map(|z| z.norm_sqr()).sum::<f64>() / (denom * denom);
                }
            }
            problem.rf_gain * p
        };

        let budget = problem.power_budget;
        let mut theta = 0.0;
        if power_at(0.0) > budget {
            // bracket: power(theta) is strictly decreasing and -> 0
            let mut hi = 1.0;
            let mut guard = 0;
            while power_at(hi) > budget {
                hi *= 2.0;
                guard += 1;
                if guard > 200 {
                    return Err(Error::BisectionBracket(format!(
                        "power dual not bracketed at subcarrier {s_idx}: power({hi}) = {}",
                        power_at(hi)
                    )));
                }
            }
            let mut lo = 0.0;
            debug_assert!(power_at(lo) > budget && power_at(hi) <= budget);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if power_at(mid) > budget {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo < 1e-10 && (power_at(hi) - budget).abs() <= 1e-8 * budget {
                    break;
                }
            }
            theta = hi;
        }
        admm.power_duals[s_idx] = theta;
        for (k, rh) in rhs.iter().enumerate() {
            let mut vh = rh.clone();
            for (i, &lam) in lams.iter().enumerate() {
                let denom = lam + rho / 2.0 + theta * problem.rf_gain;
                let mut row = vh.row_mut(i);
                row /= cx(denom, 0.0);
            }
            v[k][s_idx] = q * vh;
        }
    }
    Ok(v)
}

/// Scale rows of every matrix in the (k, s) family so that the per-chain
/// weighted norm drops to `radius` where it exceeds it.
fn project_rows_per_chain(
    mats: &mut [Vec<CMat>],
    norm_of_chain: impl Fn(&[Vec<CMat>], usize) -> f64,
    radius: f64,
) {
    let chains = mats[0][0].nrows();
    for m in 0..chains {
        let norm = norm_of_chain(mats, m);
        if norm > radius {
            let scale = cx(radius / norm, 0.0);
            for mk in mats.iter_mut() {
                for mat in mk.iter_mut() {
                    for c in 0..mat.ncols() {
                        mat[(m, c)] *= scale;
                    }
                }
            }
        }
    }
}

/// R step: unconstrained minimizer (V + L1/rho + Z - L2/rho)/2 followed by
/// per-chain radial scaling onto the spectral-shaping ball.
pub fn update_r(
    admm: &AdmmState,
    v: &[Vec<CMat>],
    l_diag: &[f64],
    spectral_rhs: f64,
) -> Vec<Vec<CMat>> {
    let inv_rho = 1.0 / admm.rho;
    let mut r: Vec<Vec<CMat>> = v
        .iter()
        .enumerate()
        .map(|(k, vk)| {
            vk.iter()
                .enumerate()
                .map(|(s_idx, vm)| {
                    let mut acc = vm.clone();
                    acc += admm.lambda1[k][s_idx].scale(inv_rho);
                    acc += &admm.z[k][s_idx];
                    acc -= admm.lambda2[k][s_idx].scale(inv_rho);
                    acc.scale(0.5)
                })
                .collect()
        })
        .collect();
    project_rows_per_chain(&mut r, |m, chain| spectral_bound_lhs(m, l_diag, chain), spectral_rhs);
    r
}

/// Z step: R + L2/rho projected onto the per-chain clipping ball of radius
/// chi / sqrt(-2 ln eps).
pub fn update_z(admm: &AdmmState, r: &[Vec<CMat>], chi: f64, eps: f64) -> Vec<Vec<CMat>> {
    let inv_rho = 1.0 / admm.rho;
    let mut z: Vec<Vec<CMat>> = r
        .iter()
        .enumerate()
        .map(|(k, rk)| {
            rk.iter()
                .enumerate()
                .map(|(s_idx, rm)| rm + admm.lambda2[k][s_idx].scale(inv_rho))
                .collect()
        })
        .collect();
    let radius = chi / (-2.0 * eps.ln()).sqrt();
    project_rows_per_chain(
        &mut z,
        |m, chain| {
            m.iter()
                .flat_map(|mk| mk.iter())
                .map(|mat| mat.row(chain).iter().map(|x| x.norm_sqr()).sum::<f64>())
                .sum::<f64>()
                .sqrt()
        },
        radius,
    );
    z
}

/// Dual ascent: L1 += rho (V - R), L2 += rho (R - Z).
pub fn update_duals(admm: &mut AdmmState, v: &[Vec<CMat>]) {
    let rho = cx(admm.rho, 0.0);
    for k in 0..admm.r.len() {
        for s_idx in 0..admm.r[k].len() {
            admm.lambda1[k][s_idx] += (&v[k][s_idx] - &admm.r[k][s_idx]) * rho;
            admm.lambda2[k][s_idx] += (&admm.r[k][s_idx] - &admm.z[k][s_idx]) * rho;
        }
    }
}

fn stacked_norm(a: &[Vec<CMat>], b: &[Vec<CMat>]) -> f64 {
    let mut acc = 0.0;
    for (ak, bk) in a.iter().zip(b.iter()) {
        for (am, bm) in ak.iter().zip(bk.iter()) {
            acc += frob_sq(&(am - bm));
        }
    }
    acc.sqrt()
}

/// Result of one ADMM solve.
pub struct AdmmOutcome {
    pub v: Vec<Vec<CMat>>,
    pub state: AdmmState,
    pub converged: bool,
    pub iterations: usize,
}

/// Shrink-only rounding onto the feasible set: the returned V satisfies the
/// power constraint exactly (bisection) but the spectral/clipping families
/// only up to the consensus residual, so rows and subcarrier blocks are
/// scaled down where a bound is still exceeded. Scaling down never violates
/// the other (norm-monotone) constraints.
fn round_into_feasibility(
    v: &mut [Vec<CMat>],
    cfg: &SystemConfig,
    plan: &SpectralPlan,
) {
    for m in 0..cfg.num_tx_rf_chains {
        let mut shrink = 1f64;
        let spec = spectral_bound_lhs(v, &plan.l_diag, m);
        if spec > cfg.spectral_rhs && spec > 0.0 {
            shrink = shrink.min(cfg.spectral_rhs / spec);
        }
        let clip = clipping_bound_lhs(v, cfg.clip_prob, m);
        if clip > cfg.clip_level {
            shrink = shrink.min(cfg.clip_level / clip);
        }
        if shrink < 1.0 {
            for vk in v.iter_mut() {
                for mat in vk.iter_mut() {
                    for c in 0..mat.ncols() {
                        mat[(m, c)] *= cx(shrink, 0.0);
                    }
                }
            }
        }
    }
    let rf_gain = cfg.num_tx_antennas as f64 / cfg.num_tx_rf_chains as f64;
    let s_count = v[0].len();
    for s_idx in 0..s_count {
        let power: f64 = rf_gain * v.iter().map(|vk| frob_sq(&vk[s_idx])).sum::<f64>();
        if power > cfg.power_budget_w {
            let scale = (cfg.power_budget_w / power).sqrt();
            for vk in v.iter_mut() {
                vk[s_idx] *= cx(scale, 0.0);
            }
        }
    }
}

/// Gauss-Seidel V -> R -> Z -> dual sweep until the residuals drop below
/// `tol` relative to the precoder norm. Non-convergence returns the best
/// iterate with `converged = false` rather than an error.
///
/// `warm` carries the duals and penalty of a previous solve of a nearby
/// problem (the outer loop feeds back the last outcome); the primal copies
/// always restart at the current precoders. Cold starts use zero duals.
pub fn admm_solve(
    state: &HybridState,
    channels: &ChannelSet,
    plan: &SpectralPlan,
    cfg: &SystemConfig,
    opts: &AdmmOptions,
    warm: Option<&AdmmState>,
) -> Result<AdmmOutcome> {
    let problem = VStepProblem::new(state, channels, cfg);
    // rho0 acts as a multiplier on the curvature scale so the penalty
    // starts commensurate with the objective's Hessian.
    let rho_start = cfg.rho0 * problem.curvature_scale().max(1.0);
    let mut admm = AdmmState::from_precoders(&state.v_digital, rho_start);
    if let Some(prev) = warm {
        if prev.lambda1.len() == admm.lambda1.len() {
            admm.lambda1 = prev.lambda1.clone();
            admm.lambda2 = prev.lambda2.clone();
            admm.rho = prev.rho;
        }
    }
    let mut iterations = 0;
    let mut converged = false;
    // Best-iterate tracking: every candidate is rounded into the feasible
    // set before scoring, and the warm start competes too, so the returned
    // precoders never do worse than the incumbent. With non-uniform
    // spectral weights the radial R projection is only a heuristic prox
    // and the loop may circle without meeting the residual test; the best
    // feasible iterate is still a valid (monotone) block update.
    let mut best = state.v_digital.clone();
    round_into_feasibility(&mut best, cfg, plan);
    let mut best_obj = problem.objective(&best);
    for iter in 0..opts.max_iters {
        iterations = iter + 1;
        let r_prev = admm.r.clone();
        let z_prev = admm.z.clone();

        let v = update_v(&mut admm, &problem)?;
        admm.r = update_r(&admm, &v, &plan.l_diag, cfg.spectral_rhs);
        admm.z = update_z(&admm, &admm.r, cfg.clip_level, cfg.clip_prob);
        update_duals(&mut admm, &v);

        let primal = (stacked_norm(&v, &admm.r).powi(2) + stacked_norm(&admm.r, &admm.z).powi(2))
            .sqrt();
        let dual = admm.rho
            * (stacked_norm(&admm.r, &r_prev).powi(2) + stacked_norm(&admm.z, &z_prev).powi(2))
                .sqrt();
        let scale = v.iter().flat_map(|vk| vk.iter()).map(frob_sq).sum::<f64>().sqrt().max(1.0);
        admm.residuals.push(ResidualRecord {
            iter,
            primal,
            dual,
            rho: admm.rho,
            objective: problem.objective(&v),
        });

        let mut candidate = v;
        round_into_feasibility(&mut candidate, cfg, plan);
        let cand_obj = problem.objective(&candidate);
        if cand_obj < best_obj {
            best = candidate;
            best_obj = cand_obj;
        }

        if primal.max(dual) < opts.tol * scale {
            converged = true;
            break;
        }
        if opts.adapt_rho {
            if primal > 10.0 * dual {
                admm.rho *= cfg.rho_growth;
            } else if dual > 10.0 * primal {
                admm.rho /= cfg.rho_growth;
            }
        }
    }
    Ok(AdmmOutcome { v: best, state: admm, converged, iterations })
}

/// Worst-case constraint violations of a precoder set (negative = slack).
#[derive(Debug, Clone, Copy)]
pub struct ConstraintSlacks {
    /// max_s (power - P^s).
    pub power_excess: f64,
    /// max_m (spectral LHS - sqrt(eps')).
    pub spectral_excess: f64,
    /// max_m (clipping LHS - chi).
    pub clipping_excess: f64,
}

impl ConstraintSlacks {
    pub fn measure(v: &[Vec<CMat>], cfg: &SystemConfig, plan: &SpectralPlan) -> Self {
        let rf_gain = cfg.num_tx_antennas as f64 / cfg.num_tx_rf_chains as f64;
        let s_count = v[0].len();
        let power_excess = (0..s_count)
            .map(|s| rf_gain * v.iter().map(|vk| frob_sq(&vk[s])).sum::<f64>() - cfg.power_budget_w)
            .fold(f64::NEG_INFINITY, f64::max);
        let spectral_excess = (0..cfg.num_tx_rf_chains)
            .map(|m| spectral_bound_lhs(v, &plan.l_diag, m) - cfg.spectral_rhs)
            .fold(f64::NEG_INFINITY, f64::max);
        let clipping_excess = (0..cfg.num_tx_rf_chains)
            .map(|m| clipping_bound_lhs(v, cfg.clip_prob, m) - cfg.clip_level)
            .fold(f64::NEG_INFINITY, f64::max);
        Self { power_excess, spectral_excess, clipping_excess }
    }

    pub fn all_satisfied(&self, tol: f64) -> bool {
        self.power_excess <= tol && self.spectral_excess <= tol && self.clipping_excess <= tol
    }
}
