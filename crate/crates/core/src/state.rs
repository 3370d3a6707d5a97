//! Optimization variables for the hybrid transceiver.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::linalg::{phasor, random_phases, CMat, CVec, ZERO};
use crate::model::ChannelSet;
use crate::ofdm::{clipping_bound_lhs, spectral_bound_lhs, SpectralPlan};

/// Which receive antenna feeds which receive RF chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectivityMask {
    pub num_antennas: usize,
    pub num_chains: usize,
    connected: Vec<bool>, // row-major (antenna, chain)
}

impl ConnectivityMask {
    pub fn fully_connected(num_antennas: usize, num_chains: usize) -> Self {
        Self { num_antennas, num_chains, connected: vec![true; num_antennas * num_chains] }
    }

    /// Contiguous equal subarrays, one chain per antenna.
    pub fn partially_connected(num_antennas: usize, num_chains: usize) -> Self {
        let per = num_antennas / num_chains;
        let mut connected = vec![false; num_antennas * num_chains];
        for a in 0..num_antennas {
            connected[a * num_chains + a / per] = true;
        }
        Self { num_antennas, num_chains, connected }
    }

    #[inline]
    pub fn is_connected(&self, antenna: usize, chain: usize) -> bool {
        self.connected[antenna * self.num_chains + chain]
    }

    /// Connected (antenna, chain) pairs in row-major order.
    pub fn entries(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for a in 0..self.num_antennas {
            for m in 0..self.num_chains {
                if self.is_connected(a, m) {
                    out.push((a, m));
                }
            }
        }
        out
    }
}

/// All optimization variables: per-subcarrier digital precoders V_k^s,
/// the transmit PS phase vector (one unit-modulus entry per antenna),
/// per-user RF combiners, digital combiners U_k^s, and MSE weights W_k^s.
#[derive(Debug, Clone)]
pub struct HybridState {
    /// `v_digital[k][s_idx]`: N_RF x n_k.
    pub v_digital: Vec<Vec<CMat>>,
    /// Unit-modulus phase per transmit antenna; antenna `a` feeds chain
    /// `tx_chain_map[a]`.
    pub v_rf_phases: CVec,
    pub tx_chain_map: Vec<usize>,
    /// `u_rf[k]`: N_r x N_RF_rx with zeros outside `rx_mask`.
    pub u_rf: Vec<CMat>,
    pub rx_mask: ConnectivityMask,
    /// `u_digital[k][s_idx]`: N_RF_rx x n_k.
    pub u_digital: Vec<Vec<CMat>>,
    /// `weights[k][s_idx]`: n_k x n_k Hermitian PSD.
    pub weights: Vec<Vec<CMat>>,
}

impl HybridState {
    pub fn num_users(&self) -> usize {
        self.v_digital.len()
    }

    pub fn num_subcarriers(&self) -> usize {
        self.v_digital.first().map_or(0, Vec::len)
    }

    pub fn num_tx_chains(&self) -> usize {
        self.v_digital[0][0].nrows()
    }

    /// Materialize V_RF (N_t x N_RF, one nonzero per row).
    pub fn v_rf_matrix(&self) -> CMat {
        let n_t = self.v_rf_phases.len();
        let n_rf = self.num_tx_chains();
        let mut m = CMat::zeros(n_t, n_rf);
        for a in 0..n_t {
            m[(a, self.tx_chain_map[a])] = self.v_rf_phases[a];
        }
        m
    }

    /// Transmit power on subcarrier `s_idx` including the RF stage:
    /// (N_t/N_RF) * sum_k tr(V_k^H V_k).
    pub fn tx_power(&self, s_idx: usize) -> f64 {
        let gain = self.tx_chain_map.len() as f64 / self.num_tx_chains() as f64;
        gain * self.v_digital.iter().map(|vk| crate::linalg::frob_sq(&vk[s_idx])).sum::<f64>()
    }

    /// Apply i.i.d. Gaussian phase errors to every transmit and receive PS.
    pub fn with_phase_errors<R: Rng + ?Sized>(&self, sigma_e: f64, rng: &mut R) -> HybridState {
        let mut out = self.clone();
        for a in 0..out.v_rf_phases.len() {
            let d: f64 = rng.sample(StandardNormal);
            out.v_rf_phases[a] *= phasor(sigma_e * d);
        }
        for u in &mut out.u_rf {
            for z in u.iter_mut() {
                if *z != ZERO {
                    let d: f64 = rng.sample(StandardNormal);
                    *z *= phasor(sigma_e * d);
                }
            }
        }
        out
    }
}

/// Random-phase PS stages plus truncated-SVD digital precoders of the
/// effective channel, scaled to the power budget, then shrunk (if needed)
/// inside the clipping and spectral-shaping balls so the starting point is
/// feasible for every constraint family.
pub fn init_state(
    cfg: &SystemConfig,
    channels: &ChannelSet,
    plan: &SpectralPlan,
    seed: u64,
) -> Result<HybridState> {
    cfg.validate()?;
    if channels.num_users() != cfg.num_users {
        return Err(Error::DimensionMismatch {
            context: "init_state",
            expected: format!("{} users", cfg.num_users),
            actual: format!("{} users", channels.num_users()),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let n_rf = cfg.num_tx_rf_chains;
    let n_k = cfg.num_streams;
    let s_count = cfg.subcarriers().len();

    let tx_chain_map: Vec<usize> =
        (0..cfg.num_tx_antennas).map(|a| cfg.tx_chain_of_antenna(a)).collect();
    let v_rf_phases = random_phases(&mut rng, cfg.num_tx_antennas);

    let rx_mask = if cfg.rx_fully_connected {
        ConnectivityMask::fully_connected(cfg.num_rx_antennas, cfg.num_rx_rf_chains)
    } else {
        ConnectivityMask::partially_connected(cfg.num_rx_antennas, cfg.num_rx_rf_chains)
    };
    let u_rf: Vec<CMat> = (0..cfg.num_users)
        .map(|_| {
            CMat::from_fn(cfg.num_rx_antennas, cfg.num_rx_rf_chains, |a, m| {
                if rx_mask.is_connected(a, m) {
                    phasor(rng.random::<f64>() * std::f64::consts::TAU)
                } else {
                    ZERO
                }
            })
        })
        .collect();

    let mut state = HybridState {
        v_digital: vec![vec![CMat::zeros(n_rf, n_k); s_count]; cfg.num_users],
        v_rf_phases,
        tx_chain_map,
        u_rf,
        rx_mask,
        u_digital: vec![vec![CMat::zeros(cfg.num_rx_rf_chains, n_k); s_count]; cfg.num_users],
        weights: vec![vec![CMat::identity(n_k, n_k); s_count]; cfg.num_users],
    };

    let v_rf = state.v_rf_matrix();
    let rf_gain = cfg.num_tx_antennas as f64 / n_rf as f64;
    for s_idx in 0..s_count {
        for k in 0..cfg.num_users {
            let h_eff = channels.h(k, s_idx) * &v_rf; // N_r x N_RF
            let svd = h_eff.svd(false, true);
            let v_t = svd.v_t.expect("requested right singular vectors");
            let take = n_k.min(v_t.nrows());
            let mut v = CMat::zeros(n_rf, n_k);
            v.columns_mut(0, take).copy_from(&v_t.rows(0, take).adjoint());
            state.v_digital[k][s_idx] = v;
        }
        // Meet the per-subcarrier budget with equality.
        let power: f64 =
            (0..cfg.num_users).map(|k| crate::linalg::frob_sq(&state.v_digital[k][s_idx])).sum();
        if power > 0.0 {
            let scale = (cfg.power_budget_w / (rf_gain * power)).sqrt();
            for k in 0..cfg.num_users {
                state.v_digital[k][s_idx] *= crate::linalg::cx(scale, 0.0);
            }
        }
    }

    // One global shrink keeps the per-subcarrier power shape while pulling
    // the start inside the clipping and spectral balls.
    let mut worst = 1f64;
    for m in 0..n_rf {
        let clip = clipping_bound_lhs(&state.v_digital, cfg.clip_prob, m);
        worst = worst.max(clip / cfg.clip_level);
        let spec = spectral_bound_lhs(&state.v_digital, &plan.l_diag, m);
        if cfg.spectral_rhs > 0.0 {
            worst = worst.max(spec / cfg.spectral_rhs);
        }
    }
    if worst > 1.0 {
        let shrink = crate::linalg::cx(1.0 / worst, 0.0);
        for vk in &mut state.v_digital {
            for v in vk.iter_mut() {
                *v *= shrink;
            }
        }
    }
    Ok(state)
}

/// A state with CN(0,1) digital blocks and uniform random phases. Handy as
/// a generic operand for Monte-Carlo property checks; not power-scaled.
pub fn random_state(cfg: &SystemConfig, seed: u64) -> HybridState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s_count = cfg.subcarriers().len();
    let rx_mask = if cfg.rx_fully_connected {
        ConnectivityMask::fully_connected(cfg.num_rx_antennas, cfg.num_rx_rf_chains)
    } else {
        ConnectivityMask::partially_connected(cfg.num_rx_antennas, cfg.num_rx_rf_chains)
    };
    HybridState {
        v_digital: (0..cfg.num_users)
            .map(|_| {
                (0..s_count)
                    .map(|_| crate::linalg::random_cmat(&mut rng, cfg.num_tx_rf_chains, cfg.num_streams))
                    .collect()
            })
            .collect(),
        v_rf_phases: random_phases(&mut rng, cfg.num_tx_antennas),
        tx_chain_map: (0..cfg.num_tx_antennas).map(|a| cfg.tx_chain_of_antenna(a)).collect(),
        u_rf: (0..cfg.num_users)
            .map(|_| {
                CMat::from_fn(cfg.num_rx_antennas, cfg.num_rx_rf_chains, |a, m| {
                    if rx_mask.is_connected(a, m) {
                        phasor(rng.random::<f64>() * std::f64::consts::TAU)
                    } else {
                        ZERO
                    }
                })
            })
            .collect(),
        rx_mask,
        u_digital: (0..cfg.num_users)
            .map(|_| {
                (0..s_count)
                    .map(|_| crate::linalg::random_cmat(&mut rng, cfg.num_rx_rf_chains, cfg.num_streams))
                    .collect()
            })
            .collect(),
        weights: vec![vec![CMat::identity(cfg.num_streams, cfg.num_streams); s_count]; cfg.num_users],
    }
}
