//! Alternating minimization with a Riemannian conjugate-gradient analog step.
//!
//! Factorizes a concatenated target T = [T_1 ... T_M] as X * [B_1 ... B_M]
//! where every entry of X lies on the complex unit circle. The baseband step
//! is an exact (optionally weighted) least-squares solve; the analog step
//! descends the same objective over the product manifold of unit-modulus
//! entries using projected gradients, Polak-Ribiere conjugate directions,
//! and an entry-wise normalization retraction.

use crate::error::{Error, Result};
use crate::linalg::{dft_matrix, real_inner, unit_modulus_projection, CMat, C64};
use crate::rng::rng_from_seed;
use nalgebra::Cholesky;
use rand::Rng;
use std::f64::consts::PI;

/// How the analog stage is initialized.
#[derive(Debug, Clone)]
pub enum AnalogInit {
    /// Unit-modulus entries with i.i.d. uniform phases.
    RandomPhases { seed: u64 },
    /// First n_rf columns of the DFT matrix.
    Dft,
    /// Caller-provided matrix (projected entry-wise onto the unit circle).
    Matrix(CMat),
}

#[derive(Debug, Clone)]
pub struct MoOptions {
    /// Outer alternations between baseband and analog steps.
    pub max_outer: usize,
    /// Conjugate-gradient steps per analog stage.
    pub cg_steps: usize,
    /// Stop when the relative objective decrease falls below this.
    pub tol: f64,
    pub init: AnalogInit,
}

impl Default for MoOptions {
    fn default() -> Self {
        MoOptions {
            max_outer: 50,
            cg_steps: 40,
            tol: 1e-6,
            init: AnalogInit::RandomPhases { seed: 0 },
        }
    }
}

impl MoOptions {
    pub fn seeded(seed: u64) -> Self {
        MoOptions {
            init: AnalogInit::RandomPhases { seed },
            ..Default::default()
        }
    }
}

/// Result of one factorization run.
#[derive(Debug, Clone)]
pub struct MoFactorization {
    /// Unit-modulus analog stage, n x n_rf.
    pub analog: CMat,
    /// Per-block baseband matrices, n_rf x k each.
    pub baseband: Vec<CMat>,
    /// Objective value after every outer iteration (the weighted objective
    /// when weights are given); nonincreasing.
    pub trace: Vec<f64>,
    /// Final unweighted residual ||T - X B||_F.
    pub residual: f64,
}

pub(crate) struct AltminProblem<'a> {
    /// Target blocks T_m, each n x k.
    pub targets: &'a [CMat],
    /// Optional Hermitian PSD weights, one n x n matrix per block.
    pub weights: Option<&'a [CMat]>,
    pub n_rf: usize,
}

impl AltminProblem<'_> {
    fn n(&self) -> usize {
        self.targets[0].nrows()
    }

    fn objective(&self, x: &CMat, baseband: &[CMat]) -> f64 {
        let mut acc = 0.0;
        for (i, t) in self.targets.iter().enumerate() {
            let r = t - x * &baseband[i];
            match self.weights {
                None => acc += r.iter().map(|z| z.norm_sqr()).sum::<f64>(),
                Some(w) => {
                    let wr = &w[i] * &r;
                    acc += r
                        .iter()
                        .zip(wr.iter())
                        .map(|(a, b)| (a.conj() * b).re)
                        .sum::<f64>();
                }
            }
        }
        acc
    }

    /// Euclidean gradient of the objective with respect to the analog stage
    /// at fixed baseband: -2 sum_m W_m (T_m - X B_m) B_m^H.
    pub(crate) fn euclidean_grad(&self, x: &CMat, baseband: &[CMat]) -> CMat {
        let mut g = CMat::zeros(x.nrows(), x.ncols());
        for (i, t) in self.targets.iter().enumerate() {
            let r = t - x * &baseband[i];
            match self.weights {
                None => g += r * baseband[i].adjoint(),
                Some(w) => g += &w[i] * r * baseband[i].adjoint(),
            }
        }
        g.scale(-2.0)
    }

    /// Exact weighted least-squares baseband update for a fixed analog stage.
    fn baseband_step(&self, x: &CMat) -> Result<Vec<CMat>> {
        match self.weights {
            None => {
                let gram = x.adjoint() * x;
                let chol = Cholesky::new(gram).ok_or_else(|| Error::Degenerate(
                    "analog stage lost column rank during baseband solve".into(),
                ))?;
                self.targets
                    .iter()
                    .map(|t| Ok(chol.solve(&(x.adjoint() * t))))
                    .collect()
            }
            Some(weights) => self
                .targets
                .iter()
                .zip(weights)
                .map(|(t, w)| {
                    let gram = x.adjoint() * w * x;
                    let chol = Cholesky::new(gram).ok_or_else(|| Error::Degenerate(
                        "weighted baseband Gram is singular".into(),
                    ))?;
                    Ok(chol.solve(&(x.adjoint() * w * t)))
                })
                .collect(),
        }
    }

    /// Curvature term sum_m <d B_m, W_m d B_m> used for the exact initial
    /// step length of the quadratic line search.
    fn direction_curvature(&self, d: &CMat, baseband: &[CMat]) -> f64 {
        let mut acc = 0.0;
        for (i, b) in baseband.iter().enumerate() {
            let db = d * b;
            match self.weights {
                None => acc += db.iter().map(|z| z.norm_sqr()).sum::<f64>(),
                Some(w) => {
                    let wdb = &w[i] * &db;
                    acc += db
                        .iter()
                        .zip(wdb.iter())
                        .map(|(a, x)| (a.conj() * x).re)
                        .sum::<f64>();
                }
            }
        }
        acc
    }
}

/// Projects an ambient gradient onto the tangent space of the unit-modulus
/// product manifold at x: g - Re(g .* conj(x)) .* x entry-wise.
pub(crate) fn project_tangent(x: &CMat, g: &CMat) -> CMat {
    CMat::from_fn(x.nrows(), x.ncols(), |i, j| {
        let xv = x[(i, j)];
        let gv = g[(i, j)];
        gv - xv * (gv * xv.conj()).re
    })
}

/// Entry-wise retraction back onto the manifold.
fn retract(x: &CMat) -> CMat {
    unit_modulus_projection(x)
}

fn initial_analog(init: &AnalogInit, n: usize, n_rf: usize) -> CMat {
    match init {
        AnalogInit::RandomPhases { seed } => {
            let mut rng = rng_from_seed(*seed);
            CMat::from_fn(n, n_rf, |_, _| {
                C64::from_polar(1.0, (rng.random::<f64>() * 2.0 - 1.0) * PI)
            })
        }
        AnalogInit::Dft => dft_matrix(n).columns(0, n_rf).into_owned(),
        AnalogInit::Matrix(m) => unit_modulus_projection(m),
    }
}

const ARMIJO_C: f64 = 1e-4;
const ARMIJO_SHRINK: f64 = 0.5;
const ARMIJO_MAX_BACKTRACKS: usize = 30;

/// Riemannian CG descent of the objective over the analog stage at fixed
/// baseband. Returns the new point; the objective never increases.
fn analog_step(problem: &AltminProblem, x0: &CMat, baseband: &[CMat], cg_steps: usize) -> Result<CMat> {
    let mut x = x0.clone();
    let mut f = problem.objective(&x, baseband);
    let mut grad = project_tangent(&x, &problem.euclidean_grad(&x, baseband));
    let mut dir = -&grad;
    let grad_floor = 1e-14 * (1.0 + f);

    for it in 0..cg_steps {
        let g_norm_sq = real_inner(&grad, &grad);
        if g_norm_sq.sqrt() <= grad_floor {
            break;
        }
        let mut slope = real_inner(&grad, &dir);
        if slope >= 0.0 {
            // Conjugacy went stale; restart with steepest descent.
            dir = -&grad;
            slope = -g_norm_sq;
        }

        // Exact minimizer of the quadratic along the ambient ray seeds the
        // backtracking search.
        let curvature = problem.direction_curvature(&dir, baseband);
        let mut alpha = if curvature > 0.0 {
            (-slope / 2.0) / curvature
        } else {
            1.0
        };
        let mut accepted = false;
        for _ in 0..ARMIJO_MAX_BACKTRACKS {
            let candidate = retract(&(&x + dir.scale(alpha)));
            let f_new = problem.objective(&candidate, baseband);
            if !f_new.is_finite() {
                return Err(Error::NumericalFailure {
                    what: "non-finite objective in analog line search".into(),
                    iteration: it,
                });
            }
            if f_new <= f + ARMIJO_C * alpha * slope {
                x = candidate;
                f = f_new;
                accepted = true;
                break;
            }
            alpha *= ARMIJO_SHRINK;
        }
        if !accepted {
            break;
        }

        let grad_new = project_tangent(&x, &problem.euclidean_grad(&x, baseband));
        // Polak-Ribiere with the previous gradient transported by projection.
        let grad_old_moved = project_tangent(&x, &grad);
        let beta = (real_inner(&grad_new, &(&grad_new - &grad_old_moved)) / g_norm_sq).max(0.0);
        dir = -&grad_new + project_tangent(&x, &dir).scale(beta);
        grad = grad_new;
    }
    Ok(x)
}

/// Runs the full alternation. The returned trace holds the objective after
/// each outer iteration and is monotone nonincreasing.
pub(crate) fn altmin(problem: &AltminProblem, opts: &MoOptions) -> Result<MoFactorization> {
    if problem.targets.is_empty() {
        return Err(Error::invalid("need at least one target block"));
    }
    if opts.max_outer == 0 || opts.tol <= 0.0 {
        return Err(Error::invalid("max_outer >= 1 and tol > 0 required"));
    }
    let n = problem.n();
    if problem.n_rf == 0 || problem.n_rf > n {
        return Err(Error::invalid(format!(
            "n_rf must be in 1..={n}, got {}",
            problem.n_rf
        )));
    }

    let mut x = initial_analog(&opts.init, n, problem.n_rf);
    let mut baseband = problem.baseband_step(&x)?;
    let mut trace = vec![problem.objective(&x, &baseband)];

    for outer in 0..opts.max_outer {
        x = analog_step(problem, &x, &baseband, opts.cg_steps)?;
        baseband = problem.baseband_step(&x)?;
        let f = problem.objective(&x, &baseband);
        if !f.is_finite() {
            return Err(Error::NumericalFailure {
                what: "non-finite objective after alternation".into(),
                iteration: outer,
            });
        }
        let prev = *trace.last().unwrap();
        trace.push(f);
        if (prev - f).abs() <= opts.tol * prev.max(1e-300) {
            break;
        }
    }

    let residual = problem
        .targets
        .iter()
        .zip(&baseband)
        .map(|(t, b)| {
            let r = t - &x * b;
            r.iter().map(|z| z.norm_sqr()).sum::<f64>()
        })
        .sum::<f64>()
        .sqrt();
    Ok(MoFactorization {
        analog: x,
        baseband,
        trace,
        residual,
    })
}
