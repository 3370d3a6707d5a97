//! Frequency-selective Rician MIMO-OFDM channel generation.
//!
//! Users are dropped uniformly in a 4 m disc centered 373 m from the
//! transmitter. Each user gets one LOS path plus `num_taps - 1` NLOS taps
//! whose angles are Gaussian offsets of the LOS angles. Path gains follow
//! the 3GPP urban model 22 log10(d) + 28 + 20 log10(f_GHz) with log-normal
//! shadowing (5.8 dB LOS / 8.7 dB NLOS).
//!
//! Gain conventions: the LOS gain is a power gain g = 10^(-PL/10). NLOS tap
//! gains default to the amplitude form g = 10^(-PL/20) ("channel gain
//! amplitude"); set `nlos_power_scaling` to use 10^(-PL/10) for both. The
//! asymmetric default makes NLOS taps several orders of magnitude stronger
//! than a power-scaled reading would.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::f64::consts::TAU;

use crate::config::{dbm_to_watts, SystemConfig};
use crate::error::{Error, Result};
use crate::linalg::{phasor, sample_cn, CMat, CVec, C64};

/// Disc radius for user drops, meters.
const USER_DISC_RADIUS_M: f64 = 4.0;
/// Distance from transmitter to the disc center, meters.
const USER_DISC_DISTANCE_M: f64 = 373.0;

/// Per-user drop geometry and per-realization gains.
#[derive(Debug, Clone)]
pub struct UserGeometry {
    /// Transmitter-to-user distance, meters.
    pub distance_m: f64,
    /// LOS angle of departure, radians.
    pub aod_rad: f64,
    /// LOS angle of arrival, radians.
    pub aoa_rad: f64,
    /// LOS power gain g_k (shadowing folded in).
    pub los_gain: f64,
    /// Per-tap NLOS gains g_{k,l}, length `num_taps - 1`.
    pub nlos_gains: Vec<f64>,
    /// Per-tap NLOS departure/arrival angles.
    pub nlos_aod_rad: Vec<f64>,
    pub nlos_aoa_rad: Vec<f64>,
    /// Unit-variance complex tap coefficients h_{k,l}.
    pub tap_coeffs: Vec<C64>,
}

/// All per-user, per-subcarrier channel matrices plus drop metadata.
#[derive(Debug, Clone)]
pub struct ChannelSet {
    /// `channels[k][s_idx]` is the N_r x N_t matrix H_k^s; `s_idx` indexes
    /// `SystemConfig::subcarriers()` in ascending order.
    pub channels: Vec<Vec<CMat>>,
    pub geometry: Vec<UserGeometry>,
    /// Per-subcarrier per-rx-antenna noise variance, watts (common to users).
    pub noise_variance_w: f64,
}

impl ChannelSet {
    pub fn num_users(&self) -> usize {
        self.channels.len()
    }

    pub fn num_subcarriers(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    /// H_k^s by user index and subcarrier position.
    pub fn h(&self, user: usize, s_idx: usize) -> &CMat {
        &self.channels[user][s_idx]
    }
}

/// ULA response vector: entry i = exp(j*i*psi), psi = 2*pi*d*sin(theta)/lambda.
pub fn ula_steering(n: usize, theta_rad: f64, spacing_m: f64, wavelength_m: f64) -> Result<CVec> {
    if n == 0 {
        return Err(Error::InvalidConfig("steering vector length must be >= 1".into()));
    }
    if !(wavelength_m > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "wavelength must be positive, got {wavelength_m}"
        )));
    }
    let psi = TAU * spacing_m * theta_rad.sin() / wavelength_m;
    Ok(CVec::from_fn(n, |i, _| phasor(i as f64 * psi)))
}

/// 3GPP path loss in dB: 22 log10(d) + 28 + 20 log10(f_GHz) + shadowing.
pub fn path_loss_db(distance_m: f64, carrier_ghz: f64, shadowing_db: f64) -> Result<f64> {
    if !(distance_m > 0.0) || !(carrier_ghz > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "path loss needs positive distance/carrier, got d={distance_m}, f={carrier_ghz}"
        )));
    }
    Ok(22.0 * distance_m.log10() + 28.0 + 20.0 * carrier_ghz.log10() + shadowing_db)
}

/// Per-subcarrier per-antenna noise variance in watts:
/// noise_psd + 10 log10(bandwidth/S) + noise figure, converted from dBm.
pub fn noise_variance(cfg: &SystemConfig) -> f64 {
    let dbm = cfg.noise_psd_dbm_hz
        + 10.0 * (cfg.bandwidth_hz / cfg.num_subcarriers as f64).log10()
        + cfg.noise_figure_db;
    dbm_to_watts(dbm)
}

/// Draw a channel realization. Deterministic in (cfg, seed).
pub fn gen_channel(cfg: &SystemConfig, seed: u64) -> Result<ChannelSet> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let wavelength = cfg.wavelength_m();
    let subcarriers = cfg.subcarriers();
    let nlos_exp_div = if cfg.nlos_power_scaling { 10.0 } else { 20.0 };

    let mut geometry = Vec::with_capacity(cfg.num_users);
    let mut channels = Vec::with_capacity(cfg.num_users);

    for _ in 0..cfg.num_users {
        // Uniform drop in the disc; sqrt for uniform area density.
        let r = USER_DISC_RADIUS_M * rng.random::<f64>().sqrt();
        let phi = TAU * rng.random::<f64>();
        let x = USER_DISC_DISTANCE_M + r * phi.cos();
        let y = r * phi.sin();
        let distance = (x * x + y * y).sqrt();
        let aod = y.atan2(x);
        // User array orientation is unspecified; draw the arrival angle
        // uniformly over the ULA's unambiguous range.
        let aoa = (rng.random::<f64>() - 0.5) * std::f64::consts::PI;

        let shadow_los: f64 = rng.sample::<f64, _>(StandardNormal) * cfg.shadowing_std_los_db;
        let los_gain = 10f64.powf(-path_loss_db(distance, cfg.carrier_freq_ghz, shadow_los)? / 10.0);

        let ntaps = cfg.num_taps - 1;
        let mut nlos_gains = Vec::with_capacity(ntaps);
        let mut nlos_aod = Vec::with_capacity(ntaps);
        let mut nlos_aoa = Vec::with_capacity(ntaps);
        let mut tap_coeffs = Vec::with_capacity(ntaps);
        for _ in 0..ntaps {
            let shadow: f64 = rng.sample::<f64, _>(StandardNormal) * cfg.shadowing_std_nlos_db;
            let pl = path_loss_db(distance, cfg.carrier_freq_ghz, shadow)?;
            nlos_gains.push(10f64.powf(-pl / nlos_exp_div));
            nlos_aod.push(aod + rng.sample::<f64, _>(StandardNormal) * cfg.angular_spread);
            nlos_aoa.push(aoa + rng.sample::<f64, _>(StandardNormal) * cfg.angular_spread);
            tap_coeffs.push(sample_cn(&mut rng));
        }

        geometry.push(UserGeometry {
            distance_m: distance,
            aod_rad: aod,
            aoa_rad: aoa,
            los_gain,
            nlos_gains,
            nlos_aod_rad: nlos_aod,
            nlos_aoa_rad: nlos_aoa,
            tap_coeffs,
        });
    }

    let kappa = cfg.rician_kappa;
    for g in &geometry {
        let a_t_los = ula_steering(cfg.num_tx_antennas, g.aod_rad, cfg.element_spacing_tx_m, wavelength)?;
        let a_r_los = ula_steering(cfg.num_rx_antennas, g.aoa_rad, cfg.element_spacing_rx_m, wavelength)?;
        let los = (&a_r_los * a_t_los.adjoint())
            .scale((kappa / (kappa + 1.0)).sqrt() * g.los_gain.sqrt());

        // NLOS outer products are subcarrier-independent; only the tap delay
        // phase e^{-j 2 pi l s / S} varies with s.
        let mut nlos_terms = Vec::with_capacity(g.nlos_gains.len());
        for (l, &gain) in g.nlos_gains.iter().enumerate() {
            let a_t = ula_steering(cfg.num_tx_antennas, g.nlos_aod_rad[l], cfg.element_spacing_tx_m, wavelength)?;
            let a_r = ula_steering(cfg.num_rx_antennas, g.nlos_aoa_rad[l], cfg.element_spacing_rx_m, wavelength)?;
            let scale = (1.0 / (kappa + 1.0)).sqrt() * gain.sqrt();
            nlos_terms.push((&a_r * a_t.adjoint()).scale(scale) * g.tap_coeffs[l]);
        }

        let mut per_s = Vec::with_capacity(subcarriers.len());
        for &s in &subcarriers {
            let mut h = los.clone();
            for (l, term) in nlos_terms.iter().enumerate() {
                let delay = -TAU * (l + 1) as f64 * s as f64 / cfg.num_subcarriers as f64;
                h += term * phasor(delay);
            }
            per_s.push(h);
        }
        channels.push(per_s);
    }

    Ok(ChannelSet {
        channels,
        geometry,
        noise_variance_w: noise_variance(cfg),
    })
}
