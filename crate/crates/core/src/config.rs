//! Problem configuration and unit conversions.
//!
//! All scalar problem parameters live in [`SystemConfig`], which is the
//! JSON-facing schema of the experiment runner. Field-by-field units are
//! documented on the struct; the README repeats the schema for CLI users.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// dBm -> watts.
#[inline]
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// watts -> dBm.
#[inline]
pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

/// Scalar system parameters.
///
/// Serialized as flat JSON with exactly these field names. Unknown fields
/// are rejected so that typos in experiment specs surface as errors.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    /// Transmit antennas N_t.
    pub num_tx_antennas: usize,
    /// Receive antennas per user N_r.
    pub num_rx_antennas: usize,
    /// Users K.
    pub num_users: usize,
    /// Subcarriers S (positive even; the subcarrier set is {-S/2..-1, 1..S/2}).
    pub num_subcarriers: usize,
    /// Transmit RF chains N_RF; must divide N_t (equal disjoint subarrays).
    pub num_tx_rf_chains: usize,
    /// Receive RF chains per user.
    pub num_rx_rf_chains: usize,
    /// Data streams per user n_k (<= num_rx_rf_chains).
    pub num_streams: usize,
    /// Time-domain oversampling factor l.
    pub oversampling: usize,
    /// Carrier frequency, GHz.
    pub carrier_freq_ghz: f64,
    /// Total bandwidth, Hz.
    pub bandwidth_hz: f64,
    /// OFDM symbol duration T_sym, seconds.
    pub symbol_time_s: f64,
    /// Guard interval T_g, seconds.
    pub guard_time_s: f64,
    /// Per-subcarrier transmit power budget P^s, watts.
    pub power_budget_w: f64,
    /// Noise power spectral density, dBm/Hz.
    pub noise_psd_dbm_hz: f64,
    /// Receiver noise figure, dB.
    pub noise_figure_db: f64,
    /// PAPR ceiling in the peak-over-total-expected-energy convention
    /// (multiply by l*S for the conventional per-sample-mean PAPR).
    pub papr_max: f64,
    /// Clipping amplitude chi.
    pub clip_level: f64,
    /// Clipping violation probability epsilon, in (0,1).
    pub clip_prob: f64,
    /// Spectral-shaping right-hand side sqrt(eps'); equals eps1*sqrt(eps2)
    /// of the Chebyshev bound under the identification eps' = (eps1*sqrt(eps2))^2.
    pub spectral_rhs: f64,
    /// Initial ADMM penalty rho_0.
    pub rho0: f64,
    /// Penalty growth factor q (>= 1) used by residual balancing.
    pub rho_growth: f64,
    /// Phase-shifter error standard deviation sigma_e, radians.
    pub phase_error_std: f64,
    /// Channel taps T (T = 1 is flat fading).
    pub num_taps: usize,
    /// Rician K-factor, linear.
    pub rician_kappa: f64,
    /// NLOS angular spread sigma_theta, radians.
    pub angular_spread: f64,
    /// Transmit element spacing d_t, meters.
    pub element_spacing_tx_m: f64,
    /// Receive element spacing d_r, meters.
    pub element_spacing_rx_m: f64,
    /// LOS shadowing standard deviation, dB.
    pub shadowing_std_los_db: f64,
    /// NLOS shadowing standard deviation, dB.
    pub shadowing_std_nlos_db: f64,
    /// NLOS tap gains: `false` keeps the literal amplitude convention
    /// g = 10^(-PL/20); `true` switches to power scaling 10^(-PL/10) like
    /// the LOS term. The two conventions differ by ~56 dB at the default
    /// geometry, so mind this flag when comparing absolute rates.
    pub nlos_power_scaling: bool,
    /// Receiver combiner connectivity: fully connected when `true`,
    /// one-antenna-per-chain subarrays when `false`.
    pub rx_fully_connected: bool,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self::desk_scale()
    }
}

impl SystemConfig {
    /// Small instance used by tests and CI experiments: N_t = 16, N_RF = 4,
    /// K = 2, S = 8, 20 MHz at 28 GHz, 5 dBm per subcarrier.
    pub fn desk_scale() -> Self {
        let bandwidth_hz = 20e6;
        let num_subcarriers = 8;
        let symbol_time_s = num_subcarriers as f64 / bandwidth_hz;
        let spacing = Self::half_wavelength(28.0);
        Self {
            num_tx_antennas: 16,
            num_rx_antennas: 4,
            num_users: 2,
            num_subcarriers,
            num_tx_rf_chains: 4,
            num_rx_rf_chains: 2,
            num_streams: 2,
            oversampling: 4,
            carrier_freq_ghz: 28.0,
            bandwidth_hz,
            symbol_time_s,
            guard_time_s: symbol_time_s / 8.0,
            power_budget_w: dbm_to_watts(5.0),
            noise_psd_dbm_hz: -174.0,
            noise_figure_db: 8.0,
            papr_max: 0.3,
            clip_level: 8.2,
            clip_prob: 0.3,
            spectral_rhs: 1.0,
            rho0: 1.0,
            rho_growth: 2.0,
            phase_error_std: 0.0,
            num_taps: 4,
            rician_kappa: 10.0,
            angular_spread: 10f64.to_radians(),
            element_spacing_tx_m: spacing,
            element_spacing_rx_m: spacing,
            shadowing_std_los_db: 5.8,
            shadowing_std_nlos_db: 8.7,
            nlos_power_scaling: false,
            rx_fully_connected: true,
        }
    }

    /// Reference scenario scale: N_t = 64, S = 32, K = 4 users.
    pub fn paper_scale() -> Self {
        let bandwidth_hz = 20e6;
        let num_subcarriers = 32;
        let symbol_time_s = num_subcarriers as f64 / bandwidth_hz;
        Self {
            num_tx_antennas: 64,
            num_rx_antennas: 4,
            num_users: 4,
            num_subcarriers,
            num_tx_rf_chains: 8,
            symbol_time_s,
            guard_time_s: symbol_time_s / 8.0,
            ..Self::desk_scale()
        }
    }

    pub fn half_wavelength(carrier_freq_ghz: f64) -> f64 {
        SPEED_OF_LIGHT / (carrier_freq_ghz * 1e9) / 2.0
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / (self.carrier_freq_ghz * 1e9)
    }

    /// Total symbol duration T_t = T_sym + T_g.
    pub fn total_symbol_time_s(&self) -> f64 {
        self.symbol_time_s + self.guard_time_s
    }

    /// Antennas per transmit RF chain (subarray size).
    pub fn tx_subarray_size(&self) -> usize {
        self.num_tx_antennas / self.num_tx_rf_chains
    }

    /// Signed subcarrier set {-S/2, .., -1, 1, .., S/2} in ascending order.
    pub fn subcarriers(&self) -> Vec<i32> {
        let half = (self.num_subcarriers / 2) as i32;
        (-half..=half).filter(|&s| s != 0).collect()
    }

    /// Transmit chain feeding antenna `a` under the contiguous-subarray split.
    pub fn tx_chain_of_antenna(&self, antenna: usize) -> usize {
        antenna / self.tx_subarray_size()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.num_tx_antennas == 0
            || self.num_rx_antennas == 0
            || self.num_users == 0
            || self.num_tx_rf_chains == 0
            || self.num_rx_rf_chains == 0
            || self.num_streams == 0
            || self.oversampling == 0
            || self.num_taps == 0
        {
            return fail("all counts must be positive".into());
        }
        if self.num_subcarriers == 0 || self.num_subcarriers % 2 != 0 {
            return fail(format!(
                "num_subcarriers must be positive and even, got {}",
                self.num_subcarriers
            ));
        }
        if self.num_tx_antennas % self.num_tx_rf_chains != 0 {
            return fail(format!(
                "num_tx_rf_chains ({}) must divide num_tx_antennas ({})",
                self.num_tx_rf_chains, self.num_tx_antennas
            ));
        }
        if !self.rx_fully_connected && self.num_rx_antennas % self.num_rx_rf_chains != 0 {
            return fail(format!(
                "partially-connected receiver needs num_rx_rf_chains ({}) dividing num_rx_antennas ({})",
                self.num_rx_rf_chains, self.num_rx_antennas
            ));
        }
        if self.num_streams > self.num_rx_rf_chains {
            return fail(format!(
                "num_streams ({}) must not exceed num_rx_rf_chains ({})",
                self.num_streams, self.num_rx_rf_chains
            ));
        }
        if !(self.symbol_time_s > 0.0 && self.guard_time_s >= 0.0) {
            return fail("symbol/guard times must satisfy T_sym > 0, T_g >= 0".into());
        }
        if !(self.clip_prob > 0.0 && self.clip_prob < 1.0) {
            return fail(format!("clip_prob must be in (0,1), got {}", self.clip_prob));
        }
        for (name, v) in [
            ("bandwidth_hz", self.bandwidth_hz),
            ("carrier_freq_ghz", self.carrier_freq_ghz),
            ("power_budget_w", self.power_budget_w),
            ("clip_level", self.clip_level),
            ("rho0", self.rho0),
            ("rician_kappa", self.rician_kappa),
            ("element_spacing_tx_m", self.element_spacing_tx_m),
            ("element_spacing_rx_m", self.element_spacing_rx_m),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return fail(format!("{name} must be positive and finite, got {v}"));
            }
        }
        for (name, v) in [
            ("papr_max", self.papr_max),
            ("spectral_rhs", self.spectral_rhs),
            ("phase_error_std", self.phase_error_std),
            ("angular_spread", self.angular_spread),
            ("shadowing_std_los_db", self.shadowing_std_los_db),
            ("shadowing_std_nlos_db", self.shadowing_std_nlos_db),
        ] {
            if v < 0.0 || !v.is_finite() {
                return fail(format!("{name} must be nonnegative and finite, got {v}"));
            }
        }
        if self.rho_growth < 1.0 {
            return fail(format!("rho_growth must be >= 1, got {}", self.rho_growth));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SystemConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}
