//! Small complex linear-algebra helpers shared across modules.

use nalgebra::DMatrix;
use num_complex::Complex64;
use std::f64::consts::PI;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;

/// Unnormalized N x N DFT matrix, entry (k, n) = exp(-j 2 pi k n / N).
/// Entries are unit modulus; columns are orthogonal with squared norm N.
pub fn dft_matrix(n: usize) -> CMat {
    CMat::from_fn(n, n, |k, c| {
        let phase = -2.0 * PI * (k as f64) * (c as f64) / (n as f64);
        C64::from_polar(1.0, phase)
    })
}

pub fn frob_norm(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn frob_norm_sq(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>()
}

/// Mean squared modulus over all entries of a stack of matrices.
pub fn mean_entry_power(mats: &[CMat]) -> f64 {
    let total: f64 = mats.iter().map(frob_norm_sq).sum();
    let count: usize = mats.iter().map(|m| m.len()).sum();
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

/// Real inner product Re{tr(a^H b)} used as the Riemannian metric on
/// complex matrix spaces.
pub fn real_inner(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

/// Horizontal concatenation [m_1 m_2 ... m_k].
pub fn hcat(mats: &[CMat]) -> CMat {
    assert!(!mats.is_empty());
    let rows = mats[0].nrows();
    let cols: usize = mats.iter().map(|m| m.ncols()).sum();
    let mut out = CMat::zeros(rows, cols);
    let mut at = 0;
    for m in mats {
        assert_eq!(m.nrows(), rows);
        out.view_mut((0, at), (rows, m.ncols())).copy_from(m);
        at += m.ncols();
    }
    out
}

/// Splits a concatenated matrix back into `k` equal-width blocks.
pub fn hsplit(m: &CMat, k: usize) -> Vec<CMat> {
    assert!(k >= 1 && m.ncols() % k == 0);
    let w = m.ncols() / k;
    (0..k)
        .map(|i| m.view((0, i * w), (m.nrows(), w)).into_owned())
        .collect()
}

/// True when every entry has |z| within `tol` of one.
pub fn is_unit_modulus(m: &CMat, tol: f64) -> bool {
    m.iter().all(|z| (z.norm() - 1.0).abs() <= tol)
}

/// Entry-wise projection onto the unit-modulus set; zero entries map to 1.
pub fn unit_modulus_projection(m: &CMat) -> CMat {
    m.map(|z| {
        let r = z.norm();
        if r == 0.0 {
            C64::new(1.0, 0.0)
        } else {
            z / r
        }
    })
}

/// Rotates each column by a unit scalar so its largest-modulus entry is
/// real and positive. Removes the per-column phase ambiguity of singular
/// vectors so that nearby inputs give nearby outputs.
pub fn align_column_phases(m: &mut CMat) {
    for mut col in m.column_iter_mut() {
        let mut best = 0usize;
        let mut best_mag = -1.0;
        for (i, z) in col.iter().enumerate() {
            let mag = z.norm();
            if mag > best_mag {
                best_mag = mag;
                best = i;
            }
        }
        if best_mag <= 0.0 {
            continue;
        }
        let rot = col[best].conj() / best_mag;
        for z in col.iter_mut() {
            *z *= rot;
        }
    }
}

/// Thin singular value decomposition a = u * diag(singulars) * v^H with
/// singular values sorted descending.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: CMat,
    pub singulars: Vec<f64>,
    pub v: CMat,
}

/// One-sided Jacobi SVD. Slower than a bidiagonalization approach but
/// accurate on rank-deficient inputs and repeated singular values, which
/// steering-vector outer products and partial DFT matrices produce all the
/// time.
pub fn svd_jacobi(a: &CMat) -> Svd {
    if a.nrows() < a.ncols() {
        let t = svd_jacobi(&a.adjoint());
        return Svd {
            u: t.v,
            singulars: t.singulars,
            v: t.u,
        };
    }
    let n = a.ncols();
    let mut w = a.clone();
    let mut v = CMat::identity(n, n);
    let tol = 1e-14;
    let max_sweeps = 60;

    for _ in 0..max_sweeps {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let wp = w.column(p);
                let wq = w.column(q);
                let app: f64 = wp.iter().map(|z| z.norm_sqr()).sum();
                let aqq: f64 = wq.iter().map(|z| z.norm_sqr()).sum();
                let apq: C64 = wp.iter().zip(wq.iter()).map(|(x, y)| x.conj() * y).sum();
                let mag = apq.norm();
                if mag <= tol * (app * aqq).sqrt().max(f64::MIN_POSITIVE) {
                    continue;
                }
                rotated = true;
                // Phase-align so the 2x2 Gram is real, then a classic
                // symmetric Jacobi rotation.
                let phase = apq / mag;
                let tau = (aqq - app) / (2.0 * mag);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let cs = C64::new(c, 0.0);
                let sp = phase * s;
                for i in 0..w.nrows() {
                    let xp = w[(i, p)];
                    let xq = w[(i, q)];
                    w[(i, p)] = xp * cs - xq * sp.conj();
                    w[(i, q)] = xp * sp + xq * cs;
                }
                for i in 0..n {
                    let xp = v[(i, p)];
                    let xq = v[(i, q)];
                    v[(i, p)] = xp * cs - xq * sp.conj();
                    v[(i, q)] = xp * sp + xq * cs;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = (0..n).map(|j| w.column(j).norm()).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap());

    let mut u = CMat::zeros(a.nrows(), n);
    let mut v_sorted = CMat::zeros(n, n);
    let mut singulars = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        let sigma = norms[src];
        singulars.push(sigma);
        if sigma > 0.0 {
            let col = w.column(src) / C64::new(sigma, 0.0);
            u.set_column(dst, &col);
        }
        v_sorted.set_column(dst, &v.column(src));
    }
    Svd {
        u,
        singulars,
        v: v_sorted,
    }
}

/// Moore-Penrose pseudo-inverse with a relative singular-value cutoff.
pub fn pinv(a: &CMat, rtol: f64) -> CMat {
    let svd = svd_jacobi(a);
    let cutoff = rtol * svd.singulars.first().copied().unwrap_or(0.0);
    let mut out = CMat::zeros(a.ncols(), a.nrows());
    for (j, &sigma) in svd.singulars.iter().enumerate() {
        if sigma > cutoff && sigma > 0.0 {
            let term = (svd.v.column(j) * svd.u.column(j).adjoint()) / C64::new(sigma, 0.0);
            out += term;
        }
    }
    out
}

/// Column-major vectorization.
pub fn vec_of(m: &CMat) -> Vec<C64> {
    m.iter().copied().collect()
}

/// Inverse of [`vec_of`] given the target shape.
pub fn unvec(v: &[C64], rows: usize, cols: usize) -> CMat {
    assert_eq!(v.len(), rows * cols);
    CMat::from_column_slice(rows, cols, v)
}
