//! Classical channel-estimation baselines and the NMSE metric.
//!
//! LS inverts the pilot Grams directly (needs full pilots), LMMSE is its
//! Tikhonov-regularized variant, and the angle-domain estimator recovers a
//! sparse set of steering-dictionary atoms per subcarrier by orthogonal
//! matching pursuit.

use crate::channel::{steering_vector, ChannelTensor, SystemConfig};
use crate::error::{Error, Result};
use crate::linalg::{frob_norm, CMat, C64};
use crate::pilot::ReceivedPilot;
use nalgebra::{Cholesky, DVector};

/// Steering-dictionary grid for the angle-domain estimator.
#[derive(Debug, Clone)]
pub struct AngleGrid {
    /// Candidate AOD angles (radians) at the transmit side.
    pub grid_tx: Vec<f64>,
    /// Candidate AOA angles (radians) at the receive side.
    pub grid_rx: Vec<f64>,
    /// Maximum number of recovered paths K (0 = zero estimate).
    pub sparsity: usize,
}

impl AngleGrid {
    /// Grid uniform in sin-angle with the requested point counts.
    pub fn uniform_sin(g_tx: usize, g_rx: usize, sparsity: usize) -> Self {
        let make = |g: usize| -> Vec<f64> {
            (0..g)
                .map(|i| (-1.0 + 2.0 * i as f64 / g as f64).asin())
                .collect()
        };
        AngleGrid {
            grid_tx: make(g_tx),
            grid_rx: make(g_rx),
            sparsity,
        }
    }

    /// Default sizing: twice the array dimensions, K = min(L * N_sc, 2L).
    pub fn default_for(cfg: &SystemConfig, l: usize, n_sc: usize) -> Self {
        Self::uniform_sin(2 * cfg.n_tx, 2 * cfg.n_rx, (l * n_sc).min(2 * l).max(1))
    }
}

fn gram_cholesky(b: &CMat, reg: f64, what: &str) -> Result<Cholesky<C64, nalgebra::Dyn>> {
    let n = b.nrows();
    let mut gram = b * b.adjoint();
    for i in 0..n {
        gram[(i, i)] += C64::new(reg, 0.0);
    }
    Cholesky::new(gram).ok_or_else(|| {
        Error::IllPosed(format!(
            "{what} Gram matrix is singular ({n}x{n} from {} columns)",
            b.ncols()
        ))
    })
}

/// Least-squares estimate per subcarrier:
/// (Wbar Wbar^H)^-1 Wbar Y[m] Fbar^H (Fbar Fbar^H)^-1 / sqrt(P_T).
///
/// Needs M_T >= N_T and M_R >= N_R; otherwise the Grams are singular and
/// an ill-posed error names the offending side.
pub fn ls_estimate(y: &ReceivedPilot, f_bar: &CMat, w_bar: &CMat, p_t: f64) -> Result<ChannelTensor> {
    regularized_ls(y, f_bar, w_bar, p_t, 0.0)
}

/// LMMSE: Tikhonov-regularized LS with lambda = noise_var / prior power on
/// each Gram inverse. Reduces to [`ls_estimate`] at noise_var = 0.
pub fn lmmse_estimate(
    y: &ReceivedPilot,
    f_bar: &CMat,
    w_bar: &CMat,
    p_t: f64,
    channel_prior_power: f64,
    noise_var: f64,
) -> Result<ChannelTensor> {
    if noise_var < 0.0 {
        return Err(Error::invalid("noise variance must be >= 0"));
    }
    if channel_prior_power <= 0.0 {
        return Err(Error::invalid("channel prior power must be > 0"));
    }
    regularized_ls(y, f_bar, w_bar, p_t, noise_var / channel_prior_power)
}

fn regularized_ls(
    y: &ReceivedPilot,
    f_bar: &CMat,
    w_bar: &CMat,
    p_t: f64,
    lambda: f64,
) -> Result<ChannelTensor> {
    if p_t <= 0.0 {
        return Err(Error::invalid("pilot power must be positive"));
    }
    if lambda == 0.0 {
        if f_bar.ncols() < f_bar.nrows() {
            return Err(Error::IllPosed(format!(
                "LS needs M_T >= N_T, got M_T = {} < N_T = {}",
                f_bar.ncols(),
                f_bar.nrows()
            )));
        }
        if w_bar.ncols() < w_bar.nrows() {
            return Err(Error::IllPosed(format!(
                "LS needs M_R >= N_R, got M_R = {} < N_R = {}",
                w_bar.ncols(),
                w_bar.nrows()
            )));
        }
    }
    let chol_w = gram_cholesky(w_bar, lambda, "combiner")?;
    let chol_f = gram_cholesky(f_bar, lambda, "precoder")?;
    // F^H (G_F + lI)^-1, shared across subcarriers.
    let right = chol_f.solve(f_bar).adjoint();
    let scale = 1.0 / p_t.sqrt();
    let per_subcarrier = y
        .per_subcarrier
        .iter()
        .map(|ym| {
            if ym.nrows() != w_bar.ncols() || ym.ncols() != f_bar.ncols() {
                return Err(Error::dims(format!(
                    "Y is {}x{}, beamformers give {}x{}",
                    ym.nrows(),
                    ym.ncols(),
                    w_bar.ncols(),
                    f_bar.ncols()
                )));
            }
            // (G_W + lI)^-1 W Y F^H (G_F + lI)^-1
            let left = chol_w.solve(&(w_bar * ym));
            Ok((left * &right).scale(scale))
        })
        .collect::<Result<_>>()?;
    Ok(ChannelTensor { per_subcarrier })
}

/// Minimum-norm LS via pseudo-inverses; well defined for any pilot counts.
/// With full pilots this coincides with [`ls_estimate`]. Under-determined
/// sweeps (M_T < N_T) lose the unobserved subspace instead of erroring.
pub fn ls_pinv_estimate(
    y: &ReceivedPilot,
    f_bar: &CMat,
    w_bar: &CMat,
    p_t: f64,
) -> Result<ChannelTensor> {
    if p_t <= 0.0 {
        return Err(Error::invalid("pilot power must be positive"));
    }
    let w_h_pinv = crate::linalg::pinv(&w_bar.adjoint(), 1e-12);
    let f_pinv = crate::linalg::pinv(f_bar, 1e-12);
    let scale = 1.0 / p_t.sqrt();
    let per_subcarrier = y
        .per_subcarrier
        .iter()
        .map(|ym| (&w_h_pinv * ym * &f_pinv).scale(scale))
        .collect();
    Ok(ChannelTensor { per_subcarrier })
}

/// Per-subcarrier support and gains selected by OMP.
#[derive(Debug, Clone)]
pub struct OmpReport {
    /// Selected (rx-grid, tx-grid) index pairs, in selection order.
    pub support: Vec<(usize, usize)>,
    /// Final residual Frobenius norm.
    pub residual: f64,
}

/// Angle-domain estimate: per subcarrier, greedily match steering-dictionary
/// atoms to Y[m] and rebuild H[m] = A_R G A_T^H from the K recovered gains.
pub fn adce_estimate(
    y: &ReceivedPilot,
    f_bar: &CMat,
    w_bar: &CMat,
    grid: &AngleGrid,
) -> Result<ChannelTensor> {
    Ok(adce_estimate_detailed(y, f_bar, w_bar, grid)?.0)
}

pub fn adce_estimate_detailed(
    y: &ReceivedPilot,
    f_bar: &CMat,
    w_bar: &CMat,
    grid: &AngleGrid,
) -> Result<(ChannelTensor, Vec<OmpReport>)> {
    if grid.grid_tx.is_empty() || grid.grid_rx.is_empty() {
        return Err(Error::invalid("angle grid must be non-empty"));
    }
    let n_tx = f_bar.nrows();
    let n_rx = w_bar.nrows();
    let (m_t, m_r) = (f_bar.ncols(), w_bar.ncols());
    let k = grid.sparsity;
    if k > (m_t * m_r).min(grid.grid_tx.len() * grid.grid_rx.len()) {
        return Err(Error::invalid(
            "sparsity exceeds measurement or dictionary budget",
        ));
    }

    // Steering dictionaries and their pilot-domain images.
    let a_t = steering_dictionary(n_tx, &grid.grid_tx)?;
    let a_r = steering_dictionary(n_rx, &grid.grid_rx)?;
    let b_t = f_bar.transpose() * a_t.map(|z| z.conj()); // M_T x G_T
    let b_r = w_bar.adjoint() * &a_r; // M_R x G_R
    let bt_norms: Vec<f64> = b_t.column_iter().map(|c| c.norm()).collect();
    let br_norms: Vec<f64> = b_r.column_iter().map(|c| c.norm()).collect();

    let mut reports = Vec::with_capacity(y.per_subcarrier.len());
    let per_subcarrier = y
        .per_subcarrier
        .iter()
        .map(|ym| {
            let (h, report) = omp_single(ym, &a_t, &a_r, &b_t, &b_r, &bt_norms, &br_norms, k)?;
            reports.push(report);
            Ok(h)
        })
        .collect::<Result<_>>()?;
    Ok((ChannelTensor { per_subcarrier }, reports))
}

fn steering_dictionary(n: usize, angles: &[f64]) -> Result<CMat> {
    let mut dict = CMat::zeros(n, angles.len());
    for (j, &ang) in angles.iter().enumerate() {
        let col = steering_vector(n, ang, 0.5)?;
        for (i, z) in col.into_iter().enumerate() {
            dict[(i, j)] = z;
        }
    }
    Ok(dict)
}

#[allow(clippy::too_many_arguments)]
fn omp_single(
    ym: &CMat,
    a_t: &CMat,
    a_r: &CMat,
    b_t: &CMat,
    b_r: &CMat,
    bt_norms: &[f64],
    br_norms: &[f64],
    k: usize,
) -> Result<(CMat, OmpReport)> {
    let n_rx = a_r.nrows();
    let n_tx = a_t.nrows();
    let mut residual = ym.clone();
    let mut support: Vec<(usize, usize)> = Vec::new();
    let mut gains = DVector::<C64>::zeros(0);

    for _ in 0..k {
        // Inner products of every atom kron(b_t, b_r) with the residual:
        // <atom, R> = b_r^H R conj(b_t).
        let corr = b_r.adjoint() * &residual * b_t.map(|z| z.conj());
        let mut best = None;
        let mut best_score = -1.0;
        for r in 0..corr.nrows() {
            for t in 0..corr.ncols() {
                if support.contains(&(r, t)) {
                    continue;
                }
                let norm = br_norms[r] * bt_norms[t];
                if norm <= 1e-14 {
                    continue;
                }
                let score = corr[(r, t)].norm() / norm;
                if score > best_score {
                    best_score = score;
                    best = Some((r, t));
                }
            }
        }
        let Some(pick) = best else { break };
        support.push(pick);

        // Re-solve the gains on the enlarged support (classic OMP step).
        let atoms = support_matrix(b_t, b_r, &support);
        let rhs = vectorize(ym);
        let gram = atoms.adjoint() * &atoms;
        let chol = Cholesky::new(gram).ok_or_else(|| {
            Error::Degenerate("OMP selected linearly dependent atoms".to_string())
        })?;
        gains = chol.solve(&(atoms.adjoint() * &rhs));
        let fitted = &atoms * &gains;
        residual = ym - devectorize(&fitted, ym.nrows(), ym.ncols());
        if frob_norm(&residual) <= 1e-13 * frob_norm(ym).max(1.0) {
            break;
        }
    }

    let mut h = CMat::zeros(n_rx, n_tx);
    for (idx, &(r, t)) in support.iter().enumerate() {
        let ar = a_r.column(r);
        let at = a_t.column(t);
        let g = gains[idx];
        for i in 0..n_rx {
            for j in 0..n_tx {
                h[(i, j)] += g * ar[i] * at[j].conj();
            }
        }
    }
    let report = OmpReport {
        support,
        residual: frob_norm(&residual),
    };
    Ok((h, report))
}

fn support_matrix(b_t: &CMat, b_r: &CMat, support: &[(usize, usize)]) -> CMat {
    let m_r = b_r.nrows();
    let m_t = b_t.nrows();
    let mut atoms = CMat::zeros(m_r * m_t, support.len());
    for (col, &(r, t)) in support.iter().enumerate() {
        for jt in 0..m_t {
            for ir in 0..m_r {
                atoms[(jt * m_r + ir, col)] = b_t[(jt, t)] * b_r[(ir, r)];
            }
        }
    }
    atoms
}

fn vectorize(m: &CMat) -> DVector<C64> {
    DVector::from_iterator(m.len(), m.iter().copied())
}

fn devectorize(v: &DVector<C64>, rows: usize, cols: usize) -> CMat {
    CMat::from_iterator(rows, cols, v.iter().copied())
}

/// NMSE over J_T trial estimates of one true tensor, in the unsquared
/// ratio-of-norms form:
/// (1 / (M J_T)) sum_m sum_i ||H[m] - Hhat_i[m]||_F / ||H[m]||_F.
pub fn nmse(h_true: &ChannelTensor, estimates: &[ChannelTensor]) -> Result<f64> {
    if estimates.is_empty() {
        return Err(Error::invalid("need at least one estimate"));
    }
    let m_count = h_true.per_subcarrier.len();
    let mut acc = 0.0;
    for est in estimates {
        if est.per_subcarrier.len() != m_count {
            return Err(Error::dims("estimate subcarrier count differs"));
        }
        for (hm, em) in h_true.per_subcarrier.iter().zip(&est.per_subcarrier) {
            if hm.shape() != em.shape() {
                return Err(Error::dims("estimate matrix shape differs"));
            }
            let denom = frob_norm(hm);
            if denom == 0.0 {
                return Err(Error::Degenerate(
                    "true channel has a zero-norm subcarrier".into(),
                ));
            }
            acc += frob_norm(&(hm - em)) / denom;
        }
    }
    Ok(acc / (m_count as f64 * estimates.len() as f64))
}
