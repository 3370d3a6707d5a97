//! Riemannian conjugate gradient on the product of unit circles, used as a
//! cross-check alternative to coordinate descent for both PS subproblems.
//!
//! Points are flattened vectors of the active (unit-modulus) entries; the
//! partially-connected combiner manifold simply packs its connected entries.
//! Gradients follow the Wirtinger convention g = df/dv*: for a real f the
//! real-coordinate derivatives are (df/dRe v_i, df/dIm v_i) = (2 Re g_i,
//! 2 Im g_i), which is what the finite-difference oracles check.

use crate::analog::{PhaseErrorMoments, RxCombinerWorkspace, TxPhaseWorkspace};
use crate::error::{Error, Result};
use crate::linalg::{cx, CMat, CVec, C64};

/// Objective with a Euclidean (Wirtinger) gradient over flattened entries.
pub trait ManifoldObjective {
    fn value(&self, x: &CVec) -> f64;
    fn euclid_grad(&self, x: &CVec) -> CVec;
}

/// Re <a, b> with the Hermitian inner product.
pub fn inner_re(a: &CVec, b: &CVec) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

/// Orthogonal projection of a Euclidean gradient onto the tangent space of
/// the unit-modulus torus: zeta = g - Re(g o p*) o p.
pub fn riemannian_grad(point: &CVec, euclid: &CVec) -> CVec {
    CVec::from_fn(point.len(), |i, _| {
        let radial = (euclid[i] * point[i].conj()).re;
        euclid[i] - point[i] * radial
    })
}

/// Elementwise retraction (p + alpha eta) / |p + alpha eta|.
pub fn retract(point: &CVec, eta: &CVec, alpha: f64) -> Result<CVec> {
    let mut out = CVec::zeros(point.len());
    for i in 0..point.len() {
        let z = point[i] + eta[i] * alpha;
        let r = z.norm();
        if r < 1e-300 {
            return Err(Error::DegenerateInput("retraction hit the origin"));
        }
        out[i] = z / r;
    }
    Ok(out)
}

/// Vector transport: project onto the tangent space at the new point.
pub fn transport(eta: &CVec, new_point: &CVec) -> CVec {
    riemannian_grad(new_point, eta)
}

/// Armijo backtracking: the largest alpha = beta^i satisfying
/// f(p) - f(retract(p, eta, alpha)) >= -c alpha Re<zeta, eta>.
/// Returns 0 when 60 halvings fail (stagnation).
pub fn armijo_step(
    obj: &dyn ManifoldObjective,
    point: &CVec,
    eta: &CVec,
    zeta: &CVec,
    beta: f64,
    c: f64,
) -> f64 {
    let f0 = obj.value(point);
    let slope = inner_re(zeta, eta);
    let mut alpha = 1.0;
    for _ in 0..=60 {
        if let Ok(candidate) = retract(point, eta, alpha) {
            if f0 - obj.value(&candidate) >= -c * alpha * slope {
                return alpha;
            }
        }
        alpha *= beta;
    }
    0.0
}

#[derive(Debug, Clone)]
pub struct RcgOptions {
    pub tol: f64,
    pub max_iters: usize,
    pub beta: f64,
    pub c: f64,
}

impl Default for RcgOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_iters: 500, beta: 0.5, c: 1e-4 }
    }
}

#[derive(Debug, Clone)]
pub struct RcgOutcome {
    pub point: CVec,
    /// Objective value after each accepted step, starting with f(x0).
    pub f_trace: Vec<f64>,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub stagnated: bool,
}

/// Polak-Ribiere RCG with Armijo line search, negative-coefficient restart,
/// retraction, and vector transport.
pub fn rcg_optimize(obj: &dyn ManifoldObjective, x0: &CVec, opts: &RcgOptions) -> RcgOutcome {
    let mut x = x0.clone();
    let mut zeta = riemannian_grad(&x, &obj.euclid_grad(&x));
    let mut eta = -zeta.clone();
    let mut f_trace = vec![obj.value(&x)];
    let mut iterations = 0;
    let mut stagnated = false;
    let mut converged = inner_re(&zeta, &zeta).sqrt() < opts.tol;
    while !converged && iterations < opts.max_iters {
        if inner_re(&zeta, &eta) >= 0.0 {
            // not a descent direction; restart at steepest descent
            eta = -zeta.clone();
        }
        let alpha = armijo_step(obj, &x, &eta, &zeta, opts.beta, opts.c);
        if alpha == 0.0 {
            stagnated = true;
            break;
        }
        let x_new = retract(&x, &eta, alpha).expect("armijo verified this retraction");
        let zeta_new = riemannian_grad(&x_new, &obj.euclid_grad(&x_new));
        // Polak-Ribiere coefficient, clipped below at zero.
        let denom = inner_re(&zeta, &zeta);
        let mut pr = 0.0;
        if denom > 0.0 {
            let diff = &zeta_new - &zeta;
            pr = (inner_re(&zeta_new, &diff) / denom).max(0.0);
        }
        eta = -&zeta_new + transport(&eta, &x_new).scale(pr);
        x = x_new;
        zeta = zeta_new;
        iterations += 1;
        f_trace.push(obj.value(&x));
        converged = inner_re(&zeta, &zeta).sqrt() < opts.tol;
    }
    RcgOutcome {
        grad_norm: inner_re(&zeta, &zeta).sqrt(),
        point: x,
        f_trace,
        iterations,
        converged,
        stagnated,
    }
}

// ---------------------------------------------------------------------------
// Objective adapters for the two PS subproblems
// ---------------------------------------------------------------------------

/// Euclidean gradient of the transmit PS objective: Q v - u.
pub fn euclidean_grad_tx(ws: &TxPhaseWorkspace, v: &CVec) -> CVec {
    &ws.q * v - ws.linear_term()
}

/// Transmit PS objective on the torus; robust variants damp the workspace.
pub struct TxRcgObjective {
    ws: TxPhaseWorkspace,
}

impl TxRcgObjective {
    pub fn new(ws: &TxPhaseWorkspace, moments: Option<PhaseErrorMoments>) -> Self {
        let ws = match moments {
            Some(m) => ws.robust(m),
            None => ws.clone(),
        };
        Self { ws }
    }
}

impl ManifoldObjective for TxRcgObjective {
    fn value(&self, x: &CVec) -> f64 {
        self.ws.objective(x)
    }

    fn euclid_grad(&self, x: &CVec) -> CVec {
        euclidean_grad_tx(&self.ws, x)
    }
}

/// Euclidean gradient of the combiner objective, zeroed outside the mask:
/// sum_s O U_RF (U W U^H) - H V_RF V_k W U^H.
pub fn euclidean_grad_rx(ws: &RxCombinerWorkspace, u_rf: &CMat) -> CMat {
    let mut grad = CMat::zeros(u_rf.nrows(), u_rf.ncols());
    for s_idx in 0..ws.o_mats.len() {
        let g = &ws.u_dig[s_idx] * &ws.w[s_idx] * ws.u_dig[s_idx].adjoint();
        grad += &ws.o_mats[s_idx] * u_rf * g;
        grad -= &ws.hv[s_idx] * &ws.w[s_idx] * ws.u_dig[s_idx].adjoint();
    }
    mask_matrix(ws, grad)
}

fn mask_matrix(ws: &RxCombinerWorkspace, mut m: CMat) -> CMat {
    let mut keep = vec![false; m.nrows() * m.ncols()];
    for &(a, c) in &ws.entries {
        keep[a * m.ncols() + c] = true;
    }
    for a in 0..m.nrows() {
        for c in 0..m.ncols() {
            if !keep[a * m.ncols() + c] {
                m[(a, c)] = C64::new(0.0, 0.0);
            }
        }
    }
    m
}

/// Combiner objective over the flattened connected entries. The robust form
/// is the exact expectation: pair-damped coupling, per-entry self terms
/// weighted by (1 - pair), single-damped linear term.
pub struct RxRcgObjective<'a> {
    ws: &'a RxCombinerWorkspace,
    shape: (usize, usize),
    moments: Option<PhaseErrorMoments>,
    /// Self-coupling coefficients sum_s O[a,a] G[m,m] per entry.
    self_coeffs: Vec<f64>,
}

impl<'a> RxRcgObjective<'a> {
    pub fn new(
        ws: &'a RxCombinerWorkspace,
        shape: (usize, usize),
        moments: Option<PhaseErrorMoments>,
    ) -> Self {
        let self_coeffs = ws
            .entries
            .iter()
            .map(|&(a, m)| {
                (0..ws.o_mats.len())
                    .map(|s| (ws.o_mats[s][(a, a)] * ws.g_vecs[s][m][m]).re)
                    .sum()
            })
            .collect();
        Self { ws, shape, moments, self_coeffs }
    }

    pub fn pack(&self, m: &CMat) -> CVec {
        CVec::from_fn(self.ws.entries.len(), |i, _| {
            let (a, c) = self.ws.entries[i];
            m[(a, c)]
        })
    }

    pub fn unpack(&self, x: &CVec) -> CMat {
        let mut m = CMat::zeros(self.shape.0, self.shape.1);
        for (i, &(a, c)) in self.ws.entries.iter().enumerate() {
            m[(a, c)] = x[i];
        }
        m
    }

    fn split_objective(&self, u_rf: &CMat) -> (f64, f64, f64) {
        // (quadratic, linear, self-diagonal) pieces of the objective
        let mut quad = 0.0;
        let mut lin = 0.0;
        for s_idx in 0..self.ws.o_mats.len() {
            let g = &self.ws.u_dig[s_idx] * &self.ws.w[s_idx] * self.ws.u_dig[s_idx].adjoint();
            let t = u_rf.adjoint() * &self.ws.o_mats[s_idx] * u_rf;
            quad += crate::linalg::trace_product_re(&t, &g);
            let l = u_rf.adjoint() * &self.ws.hv[s_idx];
            let wl = &self.ws.w[s_idx] * self.ws.u_dig[s_idx].adjoint();
            lin += crate::linalg::trace_product_re(&wl, &l);
        }
        let selfdiag: f64 = self
            .ws
            .entries
            .iter()
            .zip(self.self_coeffs.iter())
            .map(|(&(a, m), &k)| k * u_rf[(a, m)].norm_sqr())
            .sum();
        (quad, lin, selfdiag)
    }
}

impl ManifoldObjective for RxRcgObjective<'_> {
    fn value(&self, x: &CVec) -> f64 {
        let u_rf = self.unpack(x);
        match self.moments {
            None => self.ws.objective(&u_rf),
            Some(m) => {
                let (quad, lin, selfdiag) = self.split_objective(&u_rf);
                m.pair * (quad - selfdiag) + selfdiag - 2.0 * m.single * lin
            }
        }
    }

    fn euclid_grad(&self, x: &CVec) -> CVec {
        let u_rf = self.unpack(x);
        let grad = match self.moments {
            None => euclidean_grad_rx(self.ws, &u_rf),
            Some(mom) => {
                let mut g = CMat::zeros(self.shape.0, self.shape.1);
                for s_idx in 0..self.ws.o_mats.len() {
                    let gm = &self.ws.u_dig[s_idx]
                        * &self.ws.w[s_idx]
                        * self.ws.u_dig[s_idx].adjoint();
                    g += (&self.ws.o_mats[s_idx] * &u_rf * gm).scale(mom.pair);
                    g -= (&self.ws.hv[s_idx]
                        * &self.ws.w[s_idx]
                        * self.ws.u_dig[s_idx].adjoint())
                    .scale(mom.single);
                }
                for (i, &(a, m)) in self.ws.entries.iter().enumerate() {
                    g[(a, m)] += u_rf[(a, m)] * cx((1.0 - mom.pair) * self.self_coeffs[i], 0.0);
                }
                mask_matrix(self.ws, g)
            }
        };
        self.pack(&grad)
    }
}
