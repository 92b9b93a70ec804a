//! Downlink pilot-training simulation.
//!
//! The transmitter sweeps M_T beams taken from the columns of an N_T-point
//! DFT matrix while the receiver combines with M_R DFT columns, so the
//! combined observation per subcarrier is Y[m] = Wbar^H H[m] Fbar Sbar +
//! Wbar^H Nbar[m] with Sbar = sqrt(P_T) I.

use crate::channel::{ChannelTensor, SystemConfig};
use crate::error::{Error, Result};
use crate::linalg::{dft_matrix, mean_entry_power, CMat};
use crate::rng::{complex_gaussian, rng_from_seed};
use serde::{Deserialize, Serialize};

/// Pilot-training protocol parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotConfig {
    /// Number of transmit pilot beams M_T (need not reach N_T).
    pub m_tx: usize,
    /// Number of receive combining vectors M_R.
    pub m_rx: usize,
    /// Pilot transmit power P_T (linear).
    pub tx_power: f64,
    /// Training-stage pilot SNR in dB (infinite = noiseless).
    pub snr_pilot_db: f64,
    /// Prediction-stage pilot SNR in dB.
    pub pilot_snr_test_db: f64,
    /// Optional corruption of the pilot symbol matrix itself, in dB.
    pub pilot_symbol_snr_db: Option<f64>,
}

impl PilotConfig {
    pub fn validate(&self, cfg: &SystemConfig) -> Result<()> {
        if self.m_tx == 0 || self.m_tx > cfg.n_tx {
            return Err(Error::invalid(format!(
                "m_tx must be in 1..={}, got {}",
                cfg.n_tx, self.m_tx
            )));
        }
        if self.m_rx == 0 || self.m_rx > cfg.n_rx {
            return Err(Error::invalid(format!(
                "m_rx must be in 1..={}, got {}",
                cfg.n_rx, self.m_rx
            )));
        }
        if self.tx_power <= 0.0 {
            return Err(Error::invalid("tx_power must be positive"));
        }
        Ok(())
    }

    /// Channel uses needed to sweep all combiners, ceil(M_R / N_RF).
    /// Bookkeeping only; nothing is simulated per use.
    pub fn channel_uses(&self, cfg: &SystemConfig) -> usize {
        self.m_rx.div_ceil(cfg.n_rf)
    }

    /// Copy with the prediction-stage SNR moved into the active slot.
    pub fn for_test_stage(&self) -> PilotConfig {
        PilotConfig {
            snr_pilot_db: self.pilot_snr_test_db,
            ..self.clone()
        }
    }
}

/// The combined pilot observations {Y[m]}, each M_R x M_T.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedPilot {
    pub per_subcarrier: Vec<CMat>,
}

impl ReceivedPilot {
    pub fn n_subcarriers(&self) -> usize {
        self.per_subcarrier.len()
    }
}

/// Subcarrier-independent training beamformers: the first M_T columns of
/// the N_T-point DFT matrix and the first M_R columns of the N_R-point one.
pub fn training_beamformers(cfg: &SystemConfig, pcfg: &PilotConfig) -> Result<(CMat, CMat)> {
    pcfg.validate(cfg)?;
    let f = dft_matrix(cfg.n_tx).columns(0, pcfg.m_tx).into_owned();
    let w = dft_matrix(cfg.n_rx).columns(0, pcfg.m_rx).into_owned();
    Ok((f, w))
}

/// Simulates one pilot sweep. The antenna-domain noise variance is derived
/// from `pcfg.snr_pilot_db` against the mean entry power of H Fbar Sbar.
pub fn receive_pilots(
    h: &ChannelTensor,
    cfg: &SystemConfig,
    pcfg: &PilotConfig,
    seed: u64,
) -> Result<ReceivedPilot> {
    let (f_bar, _) = training_beamformers(cfg, pcfg)?;
    let noise_var = if pcfg.snr_pilot_db == f64::INFINITY {
        0.0
    } else {
        let signal: Vec<CMat> = h
            .per_subcarrier
            .iter()
            .map(|hm| (hm * &f_bar).scale(pcfg.tx_power.sqrt()))
            .collect();
        mean_entry_power(&signal) * 10f64.powf(-pcfg.snr_pilot_db / 10.0)
    };
    receive_pilots_with_noise(h, cfg, pcfg, noise_var, seed)
}

/// As [`receive_pilots`] but with the antenna-domain noise variance given
/// directly (per complex entry of Nbar).
pub fn receive_pilots_with_noise(
    h: &ChannelTensor,
    cfg: &SystemConfig,
    pcfg: &PilotConfig,
    noise_var: f64,
    seed: u64,
) -> Result<ReceivedPilot> {
    pcfg.validate(cfg)?;
    h.validate(cfg)?;
    let (f_bar, w_bar) = training_beamformers(cfg, pcfg)?;
    let w_h = w_bar.adjoint();
    let sqrt_p = pcfg.tx_power.sqrt();
    let symbol_noise_var = pcfg
        .pilot_symbol_snr_db
        .map(|snr| pcfg.tx_power * 10f64.powf(-snr / 10.0));

    let mut rng = rng_from_seed(seed);
    let per_subcarrier = h
        .per_subcarrier
        .iter()
        .map(|hm| {
            let s_bar = match symbol_noise_var {
                None => CMat::identity(pcfg.m_tx, pcfg.m_tx).scale(sqrt_p),
                Some(var) => {
                    let mut s = CMat::identity(pcfg.m_tx, pcfg.m_tx).scale(sqrt_p);
                    s.apply(|z| *z += complex_gaussian(&mut rng, var));
                    s
                }
            };
            let mut y = &w_h * hm * &f_bar * s_bar;
            if noise_var > 0.0 {
                let n_bar =
                    CMat::from_fn(cfg.n_rx, pcfg.m_tx, |_, _| complex_gaussian(&mut rng, noise_var));
                y += &w_h * n_bar;
            }
            y
        })
        .collect();
    Ok(ReceivedPilot { per_subcarrier })
}
