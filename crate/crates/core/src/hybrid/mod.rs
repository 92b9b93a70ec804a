//! Hybrid analog/digital beamformer design and spectral-efficiency
//! evaluation.
//!
//! The unconstrained per-subcarrier optimum comes from the channel SVD
//! (precoder) and the linear MMSE estimator (combiner). Hybrid factorization
//! approximates their concatenations across subcarriers with a shared
//! unit-modulus analog stage times per-subcarrier baseband stages, solved by
//! the alternating manifold optimizer in [`manifold`], or by one-shot phase
//! extraction as a cheap baseline.

mod manifold;

pub use manifold::{AnalogInit, MoFactorization, MoOptions};

use crate::channel::ChannelTensor;
use crate::error::{Error, Result};
use crate::linalg::{
    align_column_phases, frob_norm_sq, hcat, hsplit, is_unit_modulus, svd_jacobi, CMat, C64,
};
use crate::rng::derive_seed;
use manifold::{altmin, AltminProblem};
use nalgebra::Cholesky;

/// Hybrid beamformer pair: a shared unit-modulus analog stage per side and
/// one baseband matrix per subcarrier.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridBeamformer {
    /// N_T x N_RF analog precoder.
    pub f_rf: CMat,
    /// Per-subcarrier N_RF x N_S baseband precoders.
    pub f_bb: Vec<CMat>,
    /// N_R x N_RF analog combiner.
    pub w_rf: CMat,
    /// Per-subcarrier N_RF x N_S baseband combiners.
    pub w_bb: Vec<CMat>,
}

impl HybridBeamformer {
    pub fn n_subcarriers(&self) -> usize {
        self.f_bb.len()
    }

    /// Effective precoder F_RF F_BB[m].
    pub fn precoder_at(&self, m: usize) -> CMat {
        &self.f_rf * &self.f_bb[m]
    }

    /// Effective combiner W_RF W_BB[m].
    pub fn combiner_at(&self, m: usize) -> CMat {
        &self.w_rf * &self.w_bb[m]
    }

    /// Total transmit power sum_m ||F_RF F_BB[m]||_F^2.
    pub fn precoder_power(&self) -> f64 {
        (0..self.f_bb.len())
            .map(|m| frob_norm_sq(&self.precoder_at(m)))
            .sum()
    }

    /// Rescales the baseband precoders so the power constraint
    /// sum_m ||F_RF F_BB[m]||^2 = M N_S holds exactly.
    pub fn normalize_precoder_power(&mut self) {
        let target = (self.f_bb.len() * self.f_bb[0].ncols()) as f64;
        let power = self.precoder_power();
        if power > 0.0 {
            let gamma = (target / power).sqrt();
            for b in &mut self.f_bb {
                *b *= C64::new(gamma, 0.0);
            }
        }
    }

    /// Checks the unit-modulus and power invariants.
    pub fn check_invariants(&self, tol: f64) -> Result<()> {
        if !is_unit_modulus(&self.f_rf, tol) || !is_unit_modulus(&self.w_rf, tol) {
            return Err(Error::Degenerate(
                "analog beamformer entries are not unit modulus".into(),
            ));
        }
        let target = (self.f_bb.len() * self.f_bb[0].ncols()) as f64;
        let power = self.precoder_power();
        if (power - target).abs() > tol * target {
            return Err(Error::Degenerate(format!(
                "precoder power {power} violates constraint {target}"
            )));
        }
        Ok(())
    }
}

/// Per-subcarrier unconstrained optima: SVD precoders, MMSE combiners, and
/// the channel singular values.
#[derive(Debug, Clone)]
pub struct UnconstrainedBeamformers {
    /// Per-subcarrier N_T x N_S optimal precoders (top right-singular
    /// vectors, column phases aligned).
    pub f_opt: Vec<CMat>,
    /// Per-subcarrier N_R x N_S MMSE combiners.
    pub w_mmse: Vec<CMat>,
    /// Per-subcarrier singular values of H[m], descending.
    pub singulars: Vec<Vec<f64>>,
}

impl UnconstrainedBeamformers {
    pub fn compute(h: &ChannelTensor, n_streams: usize, rho: f64, noise_var: f64) -> Result<Self> {
        let (f_opt, singulars) = svd_precoders(h, n_streams)?;
        let w_mmse = mmse_combiners(h, &f_opt, rho, noise_var)?;
        Ok(UnconstrainedBeamformers {
            f_opt,
            w_mmse,
            singulars,
        })
    }
}

/// Top-N_S right singular vectors of every H[m], with singular values in
/// descending order. Column phases are aligned (largest entry real positive)
/// so that nearby channels give nearby precoders.
pub fn svd_precoders(h: &ChannelTensor, n_streams: usize) -> Result<(Vec<CMat>, Vec<Vec<f64>>)> {
    if n_streams == 0 {
        return Err(Error::invalid("n_streams must be >= 1"));
    }
    let mut f_opt = Vec::with_capacity(h.per_subcarrier.len());
    let mut singulars = Vec::with_capacity(h.per_subcarrier.len());
    for (m, hm) in h.per_subcarrier.iter().enumerate() {
        if n_streams > hm.nrows().min(hm.ncols()) {
            return Err(Error::invalid(format!(
                "n_streams {} exceeds channel dimensions {}x{}",
                n_streams,
                hm.nrows(),
                hm.ncols()
            )));
        }
        let svd = svd_jacobi(hm);
        let sv = svd.singulars;
        let top = sv[0];
        if sv[n_streams - 1] <= 1e-12 * top.max(1e-300) {
            return Err(Error::Degenerate(format!(
                "H[{m}] has rank below n_streams = {n_streams}"
            )));
        }
        let mut f = svd.v.columns(0, n_streams).into_owned();
        align_column_phases(&mut f);
        f_opt.push(f);
        singulars.push(sv);
    }
    Ok((f_opt, singulars))
}

/// Per-subcarrier MMSE combiner for the given unconstrained precoders:
/// W^H[m] = (1/rho) (F^H H^H H F + (N_S sigma^2 / rho) I)^-1 F^H H^H.
pub fn mmse_combiners(
    h: &ChannelTensor,
    f_opt: &[CMat],
    rho: f64,
    noise_var: f64,
) -> Result<Vec<CMat>> {
    if rho <= 0.0 {
        return Err(Error::invalid("rho must be positive"));
    }
    if noise_var < 0.0 {
        return Err(Error::invalid("noise variance must be >= 0"));
    }
    if f_opt.len() != h.per_subcarrier.len() {
        return Err(Error::dims("precoder count differs from subcarrier count"));
    }
    h.per_subcarrier
        .iter()
        .zip(f_opt)
        .enumerate()
        .map(|(m, (hm, f))| {
            let n_s = f.ncols();
            let hf = hm * f;
            let mut inner = hf.adjoint() * &hf;
            let reg = n_s as f64 * noise_var / rho;
            for i in 0..n_s {
                inner[(i, i)] += C64::new(reg, 0.0);
            }
            let chol = Cholesky::new(inner).ok_or_else(|| Error::Degenerate(format!(
                "MMSE inner matrix singular at subcarrier {m}"
            )))?;
            // W^H = (1/rho) inner^-1 F^H H^H = (1/rho) inner^-1 (H F)^H
            let w_h = chol.solve(&hf.adjoint()).scale(1.0 / rho);
            Ok(w_h.adjoint())
        })
        .collect()
}

/// Manifold-optimized precoder factorization across all subcarriers. The
/// returned baseband stages are rescaled to meet the total power constraint;
/// `trace`/`residual` report the factorization objective before rescaling.
pub fn mo_altmin_precoder(
    f_opt: &[CMat],
    n_rf: usize,
    opts: &MoOptions,
) -> Result<MoFactorization> {
    let problem = AltminProblem {
        targets: f_opt,
        weights: None,
        n_rf,
    };
    let mut out = altmin(&problem, opts)?;
    normalize_power(&out.analog, &mut out.baseband);
    Ok(out)
}

/// Manifold-optimized combiner factorization. When `weights` carries the
/// per-subcarrier output covariances Lambda_y[m], both the baseband step and
/// the logged objective use the weighted norm; `None` is plain least squares.
pub fn mo_altmin_combiner(
    w_mmse: &[CMat],
    n_rf: usize,
    weights: Option<&[CMat]>,
    opts: &MoOptions,
) -> Result<MoFactorization> {
    if let Some(w) = weights {
        if w.len() != w_mmse.len() {
            return Err(Error::dims("weight count differs from subcarrier count"));
        }
    }
    let problem = AltminProblem {
        targets: w_mmse,
        weights,
        n_rf,
    };
    altmin(&problem, opts)
}

/// Output covariance Lambda_y[m] = rho H F F^H H^H + sigma^2 I for the
/// designed hybrid precoders.
pub fn output_covariances(
    h: &ChannelTensor,
    f_rf: &CMat,
    f_bb: &[CMat],
    rho: f64,
    noise_var: f64,
) -> Vec<CMat> {
    h.per_subcarrier
        .iter()
        .zip(f_bb)
        .map(|(hm, bb)| {
            let eff = hm * f_rf * bb;
            let mut cov = (&eff * eff.adjoint()).scale(rho);
            for i in 0..cov.nrows() {
                cov[(i, i)] += C64::new(noise_var, 0.0);
            }
            cov
        })
        .collect()
}

/// Phase-extraction baseline: analog phases copied from the top-N_RF left
/// singular vectors of the concatenated target, baseband by least squares,
/// precoder power normalized.
pub fn pe_precoder(f_opt: &[CMat], n_rf: usize) -> Result<MoFactorization> {
    let mut out = pe_factorization(f_opt, n_rf)?;
    normalize_power(&out.analog, &mut out.baseband);
    Ok(out)
}

/// Phase-extraction factorization of the combiner targets (no power
/// constraint on the combine side).
pub fn pe_combiner(w_mmse: &[CMat], n_rf: usize) -> Result<MoFactorization> {
    pe_factorization(w_mmse, n_rf)
}

fn pe_factorization(targets: &[CMat], n_rf: usize) -> Result<MoFactorization> {
    if targets.is_empty() {
        return Err(Error::invalid("need at least one target block"));
    }
    let n = targets[0].nrows();
    if n_rf == 0 || n_rf > n {
        return Err(Error::invalid(format!("n_rf must be in 1..={n}")));
    }
    let concat = hcat(targets);
    let svd = svd_jacobi(&concat);
    let u = svd.u;
    let cols = n_rf.min(u.ncols());
    // exp(j angle(u)) entry-wise over the leading left singular vectors;
    // pad with all-ones columns if the target rank falls short of n_rf.
    let mut analog = CMat::from_element(n, n_rf, C64::new(1.0, 0.0));
    for j in 0..cols {
        for i in 0..n {
            let z = u[(i, j)];
            analog[(i, j)] = if z.norm() == 0.0 {
                C64::new(1.0, 0.0)
            } else {
                z / z.norm()
            };
        }
    }
    let gram = analog.adjoint() * &analog;
    let chol = Cholesky::new(gram)
        .ok_or_else(|| Error::Degenerate("phase-extracted analog stage is rank deficient".into()))?;
    let baseband: Vec<CMat> = targets
        .iter()
        .map(|t| chol.solve(&(analog.adjoint() * t)))
        .collect();
    let residual = targets
        .iter()
        .zip(&baseband)
        .map(|(t, b)| frob_norm_sq(&(t - &analog * b)))
        .sum::<f64>()
        .sqrt();
    Ok(MoFactorization {
        analog,
        baseband,
        trace: vec![residual * residual],
        residual,
    })
}

fn normalize_power(analog: &CMat, baseband: &mut [CMat]) {
    let target = (baseband.len() * baseband[0].ncols()) as f64;
    let power: f64 = baseband.iter().map(|b| frob_norm_sq(&(analog * b))).sum();
    if power > 0.0 {
        let gamma = (target / power).sqrt();
        for b in baseband.iter_mut() {
            *b *= C64::new(gamma, 0.0);
        }
    }
}

/// Average spectral efficiency over subcarriers for arbitrary effective
/// precoders/combiners:
/// R[m] = log2 |I + (rho / N_S) Lambda_n^-1 W^H H F F^H H^H W| with
/// Lambda_n = sigma^2 W^H W, computed as a difference of Cholesky
/// log-determinants.
pub fn spectral_efficiency(
    h: &ChannelTensor,
    precoders: &[CMat],
    combiners: &[CMat],
    rho: f64,
    noise_var: f64,
) -> Result<f64> {
    if noise_var <= 0.0 {
        return Err(Error::invalid("noise variance must be positive"));
    }
    if precoders.len() != h.per_subcarrier.len() || combiners.len() != h.per_subcarrier.len() {
        return Err(Error::dims("beamformer count differs from subcarrier count"));
    }
    let mut total = 0.0;
    for ((hm, f), w) in h.per_subcarrier.iter().zip(precoders).zip(combiners) {
        let n_s = f.ncols();
        let lambda_n = (w.adjoint() * w).scale(noise_var);
        let wh_hf = w.adjoint() * hm * f;
        let signal = (&wh_hf * wh_hf.adjoint()).scale(rho / n_s as f64);
        let noise_logdet = cholesky_log2_det(&lambda_n).ok_or_else(|| Error::Degenerate(
            "combiner noise covariance is singular".into(),
        ))?;
        let total_logdet = cholesky_log2_det(&(lambda_n + signal)).ok_or_else(|| {
            Error::Degenerate("signal-plus-noise covariance is singular".into())
        })?;
        total += total_logdet - noise_logdet;
    }
    Ok(total / h.per_subcarrier.len() as f64)
}

fn cholesky_log2_det(m: &CMat) -> Option<f64> {
    let chol = Cholesky::new(m.clone())?;
    let mut acc = 0.0;
    for d in chol.l().diagonal().iter() {
        if d.re <= 0.0 {
            return None;
        }
        acc += d.re.log2();
    }
    Some(2.0 * acc)
}

/// Rate achieved by a hybrid beamformer pair.
pub fn rate_hybrid(
    h: &ChannelTensor,
    hb: &HybridBeamformer,
    rho: f64,
    noise_var: f64,
) -> Result<f64> {
    let precoders: Vec<CMat> = (0..hb.n_subcarriers()).map(|m| hb.precoder_at(m)).collect();
    let combiners: Vec<CMat> = (0..hb.n_subcarriers()).map(|m| hb.combiner_at(m)).collect();
    spectral_efficiency(h, &precoders, &combiners, rho, noise_var)
}

/// Rate achieved by the fully digital pair (SVD precoder, MMSE combiner).
pub fn rate_digital(
    h: &ChannelTensor,
    u: &UnconstrainedBeamformers,
    rho: f64,
    noise_var: f64,
) -> Result<f64> {
    spectral_efficiency(h, &u.f_opt, &u.w_mmse, rho, noise_var)
}

/// Full manifold-optimization design: SVD precoders, MO precoder
/// factorization, MMSE combiners, covariance-weighted MO combiner
/// factorization.
pub fn design_hybrid_mo(
    h: &ChannelTensor,
    n_streams: usize,
    n_rf: usize,
    rho: f64,
    noise_var: f64,
    seed: u64,
) -> Result<(HybridBeamformer, UnconstrainedBeamformers)> {
    let u = UnconstrainedBeamformers::compute(h, n_streams, rho, noise_var)?;
    let prec = mo_altmin_precoder(&u.f_opt, n_rf, &MoOptions::seeded(derive_seed(seed, &[1])))?;
    let lambda_y = output_covariances(h, &prec.analog, &prec.baseband, rho, noise_var);
    let comb = mo_altmin_combiner(
        &u.w_mmse,
        n_rf,
        Some(&lambda_y),
        &MoOptions::seeded(derive_seed(seed, &[2])),
    )?;
    let hb = HybridBeamformer {
        f_rf: prec.analog,
        f_bb: prec.baseband,
        w_rf: comb.analog,
        w_bb: comb.baseband,
    };
    Ok((hb, u))
}

/// Full phase-extraction design (the cheap analytical baseline).
pub fn design_hybrid_pe(
    h: &ChannelTensor,
    n_streams: usize,
    n_rf: usize,
    rho: f64,
    noise_var: f64,
) -> Result<(HybridBeamformer, UnconstrainedBeamformers)> {
    let u = UnconstrainedBeamformers::compute(h, n_streams, rho, noise_var)?;
    let prec = pe_precoder(&u.f_opt, n_rf)?;
    let comb = pe_combiner(&u.w_mmse, n_rf)?;
    let hb = HybridBeamformer {
        f_rf: prec.analog,
        f_bb: prec.baseband,
        w_rf: comb.analog,
        w_bb: comb.baseband,
    };
    Ok((hb, u))
}

/// Splits a concatenated factorization back into per-subcarrier blocks.
pub fn split_blocks(concat: &CMat, m: usize) -> Vec<CMat> {
    hsplit(concat, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{frequency_channel, random_scenario, SystemConfig};
    use crate::linalg::{frob_norm, mean_entry_power, real_inner};
    use crate::rng::{rng_from_seed, standard_complex};

    fn desk_cfg() -> SystemConfig {
        SystemConfig {
            n_tx: 16,
            n_rx: 4,
            n_rf: 2,
            n_streams: 2,
            n_subcarriers: 4,
            carrier_hz: 60e9,
            bandwidth_hz: 2e9,
            spacing_wavelengths: 0.5,
            cp_len: 4,
            symbol_period_s: 0.5e-9,
        }
    }

    fn desk_channel(seed: u64) -> ChannelTensor {
        let cfg = desk_cfg();
        let scen = random_scenario(&cfg, 3, 2, seed).unwrap();
        frequency_channel(&cfg, &scen).unwrap()
    }

    #[test]
    fn svd_precoder_of_identity_is_identity_columns() {
        let h = ChannelTensor {
            per_subcarrier: vec![CMat::identity(4, 4); 2],
        };
        let (f_opt, sv) = svd_precoders(&h, 2).unwrap();
        for f in &f_opt {
            // Orthonormal columns spanning a 2-dim coordinate subspace of
            // the identity's singular space; check F^H F = I and that H F
            // has unit-norm columns.
            let gram = f.adjoint() * f;
            assert!(frob_norm(&(gram - CMat::identity(2, 2))) <= 1e-9);
        }
        assert!(sv[0].iter().all(|&s| (s - 1.0).abs() <= 1e-12));
    }

    #[test]
    fn rank_one_channel_gives_matched_precoder() {
        let cfg = desk_cfg();
        let scen = crate::channel::ChannelScenario {
            clusters: vec![crate::channel::Cluster {
                delay_s: 0.0,
                aoa_rad: 0.4,
                aod_rad: -0.9,
                rays: vec![crate::channel::Ray {
                    delay_offset_s: 0.0,
                    aoa_shift_rad: 0.0,
                    aod_shift_rad: 0.0,
                    gain: C64::new(0.8, 0.5),
                }],
            }],
        };
        let h = frequency_channel(&cfg, &scen).unwrap();
        let (f_opt, _) = svd_precoders(&h, 1).unwrap();
        let steer = crate::channel::steering_vector(cfg.n_tx, -0.9, 0.5).unwrap();
        let steer = CMat::from_column_slice(cfg.n_tx, 1, &steer) / C64::new((cfg.n_tx as f64).sqrt(), 0.0);
        for f in &f_opt {
            let ip = (steer.adjoint() * f)[(0, 0)].norm();
            assert!(ip >= 1.0 - 1e-9, "alignment {ip}");
        }
    }

    #[test]
    fn svd_precoder_energy_matches_eigen_oracle() {
        let h = desk_channel(3);
        let (f_opt, _) = svd_precoders(&h, 2).unwrap();
        for (hm, f) in h.per_subcarrier.iter().zip(&f_opt) {
            let captured = frob_norm_sq(&(hm * f));
            // Independent route: eigenvalues of H^H H, top two.
            let gram = hm.adjoint() * hm;
            let mut eigs = gram.symmetric_eigenvalues().iter().copied().collect::<Vec<_>>();
            eigs.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let expect: f64 = eigs[..2].iter().sum();
            assert!(
                (captured - expect).abs() <= 1e-9 * expect.max(1.0),
                "{captured} vs {expect}"
            );
        }
    }

    #[test]
    fn svd_rejects_rank_deficient_channel() {
        let mut h = desk_channel(4);
        // Rank-1 per subcarrier by keeping only the first row's outer part.
        for m in &mut h.per_subcarrier {
            let col = m.column(0).into_owned();
            let row = m.row(0).into_owned();
            *m = col * row / m[(0, 0)];
        }
        assert!(svd_precoders(&h, 2).is_err());
    }

    #[test]
    fn mmse_combiner_identity_channel_closed_form() {
        let n = 4;
        let n_s = 2;
        let h = ChannelTensor {
            per_subcarrier: vec![CMat::identity(n, n); 1],
        };
        let f = CMat::identity(n, n).columns(0, n_s).into_owned();
        let noise_var = 0.3;
        let w = mmse_combiners(&h, &[f.clone()], 1.0, noise_var).unwrap();
        // W^H = (I + N_S sigma^2 I)^-1 [I 0] row block.
        let scale = 1.0 / (1.0 + n_s as f64 * noise_var);
        let w_h = w[0].adjoint();
        for i in 0..n_s {
            for j in 0..n {
                let want = if i == j { scale } else { 0.0 };
                assert!(
                    (w_h[(i, j)] - C64::new(want, 0.0)).norm() <= 1e-10,
                    "entry ({i},{j}) = {}",
                    w_h[(i, j)]
                );
            }
        }
    }

    #[test]
    fn mmse_combiner_matches_covariance_oracle() {
        // Defining estimator (E{s y^H} E{y y^H}^-1)^H for the signal model
        // y = rho H F s + n with E{s s^H} = I / (rho N_S), E{n n^H} =
        // sigma^2 I, assembled directly and inverted.
        let h = desk_channel(5);
        let rho = 2.0;
        let noise_var = 0.4;
        let (f_opt, _) = svd_precoders(&h, 2).unwrap();
        let ours = mmse_combiners(&h, &f_opt, rho, noise_var).unwrap();
        for (m, hm) in h.per_subcarrier.iter().enumerate() {
            let f = &f_opt[m];
            let n_s = f.ncols() as f64;
            let q = 1.0 / (rho * n_s);
            let hf = hm * f;
            let c_sy = (hf.adjoint()).scale(rho * q);
            let mut c_yy = (&hf * hf.adjoint()).scale(rho * rho * q);
            for i in 0..c_yy.nrows() {
                c_yy[(i, i)] += C64::new(noise_var, 0.0);
            }
            let w_h_oracle = c_sy * c_yy.try_inverse().unwrap();
            let diff = frob_norm(&(ours[m].adjoint() - w_h_oracle));
            assert!(diff <= 1e-8, "subcarrier {m}: {diff}");
        }
    }

    #[test]
    fn mmse_combiner_vanishes_with_infinite_noise() {
        let h = desk_channel(6);
        let (f_opt, _) = svd_precoders(&h, 2).unwrap();
        let w = mmse_combiners(&h, &f_opt, 1.0, 1e12).unwrap();
        for wm in &w {
            assert!(frob_norm(wm) <= 1e-6);
        }
    }

    #[test]
    fn mo_precoder_beats_pe_on_desk_trials() {
        let cfg = desk_cfg();
        for trial in 0..20u64 {
            let h = desk_channel(1000 + trial);
            let (f_opt, _) = svd_precoders(&h, cfg.n_streams).unwrap();
            let mo = mo_altmin_precoder(&f_opt, cfg.n_rf, &MoOptions::seeded(trial)).unwrap();
            let pe = pe_precoder(&f_opt, cfg.n_rf).unwrap();
            assert!(
                mo.residual <= pe.residual + 1e-9,
                "trial {trial}: mo {} vs pe {}",
                mo.residual,
                pe.residual
            );
        }
    }

    #[test]
    fn pe_rank_one_equals_mo_up_to_phase() {
        // Rank-1 target with one RF chain: phase extraction is optimal, so
        // both methods reach the same residual.
        let cfg = desk_cfg();
        let mut rng = rng_from_seed(8);
        let col = CMat::from_fn(cfg.n_tx, 1, |_, _| standard_complex(&mut rng));
        let f_opt = vec![&col / C64::new(frob_norm(&col), 0.0)];
        let mo = mo_altmin_precoder(&f_opt, 1, &MoOptions::seeded(2)).unwrap();
        let pe = pe_precoder(&f_opt, 1).unwrap();
        assert!(
            (mo.residual - pe.residual).abs() <= 1e-6,
            "mo {} pe {}",
            mo.residual,
            pe.residual
        );
        assert!(is_unit_modulus(&pe.analog, 1e-12));
    }

    #[test]
    fn combiner_identity_weighting_matches_unweighted() {
        let h = desk_channel(9);
        let u = UnconstrainedBeamformers::compute(&h, 2, 1.0, 0.1).unwrap();
        let eye = vec![CMat::identity(h.n_rx(), h.n_rx()); h.n_subcarriers()];
        let a = mo_altmin_combiner(&u.w_mmse, 2, None, &MoOptions::seeded(5)).unwrap();
        let b = mo_altmin_combiner(&u.w_mmse, 2, Some(&eye), &MoOptions::seeded(5)).unwrap();
        assert!((a.residual - b.residual).abs() <= 1e-10 * a.residual.max(1.0));
    }

    #[test]
    fn weighted_combiner_trace_is_monotone() {
        let h = desk_channel(10);
        let (hb, u) = design_hybrid_mo(&h, 2, 2, 1.0, 0.2, 77).unwrap();
        let lambda = output_covariances(&h, &hb.f_rf, &hb.f_bb, 1.0, 0.2);
        let comb = mo_altmin_combiner(&u.w_mmse, 2, Some(&lambda), &MoOptions::seeded(78)).unwrap();
        for w in comb.trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "weighted trace increased {w:?}");
        }
    }

    #[test]
    fn designed_hybrid_satisfies_invariants() {
        let h = desk_channel(11);
        let (mut hb, _) = design_hybrid_mo(&h, 2, 2, 1.0, 0.5, 3).unwrap();
        hb.normalize_precoder_power();
        hb.check_invariants(1e-9).unwrap();
    }

    #[test]
    fn zero_channel_rate_is_zero() {
        let cfg = desk_cfg();
        let zero = ChannelTensor {
            per_subcarrier: vec![CMat::zeros(cfg.n_rx, cfg.n_tx); 2],
        };
        let f = vec![CMat::identity(cfg.n_tx, 2); 2];
        let w = vec![CMat::identity(cfg.n_rx, 2); 2];
        let r = spectral_efficiency(&zero, &f, &w, 1.0, 0.1).unwrap();
        assert!(r.abs() <= 1e-12);
    }

    #[test]
    fn diagonal_channel_rate_matches_scalar_oracle() {
        // H diagonal, identity precoder/combiner blocks: the rate is
        // sum_i log2(1 + rho s_i^2 / (N_S sigma^2)).
        let n = 4;
        let n_s = 2;
        let sing = [1.7, 0.9];
        let mut hm = CMat::zeros(n, n);
        for (i, s) in sing.iter().enumerate() {
            hm[(i, i)] = C64::new(*s, 0.0);
        }
        let h = ChannelTensor {
            per_subcarrier: vec![hm],
        };
        let f = vec![CMat::identity(n, n_s); 1];
        let w = vec![CMat::identity(n, n_s); 1];
        let rho = 1.3;
        let noise_var = 0.21;
        let rate = spectral_efficiency(&h, &f, &w, rho, noise_var).unwrap();
        let oracle: f64 = sing
            .iter()
            .map(|s| (1.0 + rho * s * s / (n_s as f64 * noise_var)).log2())
            .sum();
        assert!((rate - oracle).abs() <= 1e-10, "{rate} vs {oracle}");
    }

    #[test]
    fn hybrid_rate_bounded_by_digital_rate() {
        let cfg = desk_cfg();
        for trial in 0..25u64 {
            let h = desk_channel(2000 + trial);
            let rho = 1.0;
            let noise_var = mean_entry_power(&h.per_subcarrier); // SNR ~ 0 dB
            let (mut hb, u) = design_hybrid_mo(&h, cfg.n_streams, cfg.n_rf, rho, noise_var, trial).unwrap();
            hb.normalize_precoder_power();
            let r_h = rate_hybrid(&h, &hb, rho, noise_var).unwrap();
            let r_d = rate_digital(&h, &u, rho, noise_var).unwrap();
            assert!(r_h <= r_d + 1e-9, "trial {trial}: hybrid {r_h} > digital {r_d}");
        }
    }

    #[test]
    fn rate_invariant_to_unitary_baseband_rotation() {
        let h = desk_channel(14);
        let (mut hb, _) = design_hybrid_mo(&h, 2, 2, 1.0, 0.3, 5).unwrap();
        hb.normalize_precoder_power();
        let before = rate_hybrid(&h, &hb, 1.0, 0.3).unwrap();
        // Random 2x2 unitary from QR.
        let mut rng = rng_from_seed(15);
        let q = CMat::from_fn(2, 2, |_, _| standard_complex(&mut rng)).qr().q();
        let mut rotated = hb.clone();
        for b in &mut rotated.f_bb {
            *b = &*b * &q;
        }
        let after = rate_hybrid(&h, &rotated, 1.0, 0.3).unwrap();
        assert!((before - after).abs() <= 1e-9, "{before} vs {after}");
    }

    #[test]
    fn full_rf_hybrid_matches_digital_rate() {
        // With N_RF = N_T = N_R the factorization is exact and the hybrid
        // rate equals the fully digital one.
        let cfg = SystemConfig {
            n_tx: 6,
            n_rx: 6,
            n_rf: 6,
            n_streams: 2,
            ..desk_cfg()
        };
        let scen = random_scenario(&cfg, 3, 2, 21).unwrap();
        let h = frequency_channel(&cfg, &scen).unwrap();
        let rho = 1.0;
        let noise_var = 0.4;
        let u = UnconstrainedBeamformers::compute(&h, 2, rho, noise_var).unwrap();
        let prec = mo_altmin_precoder(
            &u.f_opt,
            6,
            &MoOptions {
                init: AnalogInit::Dft,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(prec.residual <= 1e-8, "precoder residual {}", prec.residual);
        let comb = mo_altmin_combiner(
            &u.w_mmse,
            6,
            None,
            &MoOptions {
                init: AnalogInit::Dft,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(comb.residual <= 1e-8, "combiner residual {}", comb.residual);
        let hb = HybridBeamformer {
            f_rf: prec.analog,
            f_bb: prec.baseband,
            w_rf: comb.analog,
            w_bb: comb.baseband,
        };
        let r_h = rate_hybrid(&h, &hb, rho, noise_var).unwrap();
        let r_d = rate_digital(&h, &u, rho, noise_var).unwrap();
        assert!((r_h - r_d).abs() <= 1e-6, "hybrid {r_h} vs digital {r_d}");
    }

    #[test]
    fn gradient_projection_is_tangent() {
        let h = desk_channel(16);
        let (f_opt, _) = svd_precoders(&h, 2).unwrap();
        let problem = AltminProblem {
            targets: &f_opt,
            weights: None,
            n_rf: 2,
        };
        let x = crate::linalg::unit_modulus_projection(&CMat::from_fn(16, 2, |i, j| {
            C64::from_polar(1.0, (i * 3 + j) as f64)
        }));
        let b = vec![CMat::identity(2, 2); f_opt.len()];
        let g = manifold::project_tangent(&x, &problem.euclidean_grad(&x, &b));
        // Tangency: Re(g .* conj(x)) = 0 entry-wise.
        for (gv, xv) in g.iter().zip(x.iter()) {
            assert!((gv * xv.conj()).re.abs() <= 1e-12);
        }
        let _ = real_inner(&g, &g);
    }
}
