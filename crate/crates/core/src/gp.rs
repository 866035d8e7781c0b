//! Exact Gaussian-process regression from contact wrenches to misalignment.
//!
//! Sum kernel of an anisotropic RBF and white noise over standardized
//! 6-channel wrench inputs. Hyperparameters maximize the log marginal
//! likelihood by multi-start gradient ascent with analytic gradients; the
//! posterior is exact through a cached Cholesky factor.
//!
//! Sign classification ("which side of the hole is the peg on") is GP
//! regression on ±1 labels thresholded at zero — for symmetric noise the
//! decision boundary coincides with a latent-classifier one, and the
//! regression route stays exact and directly testable.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{derive_seed, rng_from_seed};
use crate::types::Wrench;

/// Wrench channels per input row.
pub const INPUT_DIM: usize = 6;
/// Raw hyperparameters in optimizer order: six lengthscales, RBF variance,
/// white variance.
pub const N_HYPER: usize = INPUT_DIM + 2;

#[derive(Debug, Error)]
pub enum GpError {
    #[error("need at least 2 training rows, got {0}")]
    TooFewRows(usize),
    #[error("inputs and targets must be finite")]
    NonFinite,
    #[error("kernel matrix is not positive definite even at maximum jitter")]
    NotPositiveDefinite,
    #[error("kernel hyperparameters must be strictly positive")]
    BadHyperparameters,
    #[error("marginal likelihood became non-finite during optimization")]
    DivergedLikelihood,
}

/// Sum-kernel hyperparameters. Lengthscales act on standardized inputs
/// (zero mean, unit variance per wrench channel).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub rbf_lengthscales: [f64; INPUT_DIM],
    pub rbf_variance: f64,
    pub white_variance: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            rbf_lengthscales: [1.0; INPUT_DIM],
            rbf_variance: 1.0,
            white_variance: 0.1,
        }
    }
}

impl KernelParams {
    pub fn validate(&self) -> Result<(), GpError> {
        let ok = self
            .rbf_lengthscales
            .iter()
            .all(|l| *l > 0.0 && l.is_finite())
            && self.rbf_variance > 0.0
            && self.rbf_variance.is_finite()
            && self.white_variance > 0.0
            && self.white_variance.is_finite();
        if ok {
            Ok(())
        } else {
            Err(GpError::BadHyperparameters)
        }
    }

    fn to_raw(&self) -> [f64; N_HYPER] {
        let mut raw = [0.0; N_HYPER];
        raw[..INPUT_DIM].copy_from_slice(&self.rbf_lengthscales);
        raw[INPUT_DIM] = self.rbf_variance;
        raw[INPUT_DIM + 1] = self.white_variance;
        raw
    }

    fn from_raw(raw: &[f64; N_HYPER]) -> Self {
        let mut ls = [0.0; INPUT_DIM];
        ls.copy_from_slice(&raw[..INPUT_DIM]);
        Self {
            rbf_lengthscales: ls,
            rbf_variance: raw[INPUT_DIM],
            white_variance: raw[INPUT_DIM + 1],
        }
    }

    fn rbf(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut s = 0.0;
        for d in 0..INPUT_DIM {
            let z = (a[d] - b[d]) / self.rbf_lengthscales[d];
            s += z * z;
        }
        self.rbf_variance * (-0.5 * s).exp()
    }
}

/// Per-channel standardization fitted on the training inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputNormalizer {
    pub means: [f64; INPUT_DIM],
    pub scales: [f64; INPUT_DIM],
}

impl InputNormalizer {
    pub fn fit(rows: &[[f64; INPUT_DIM]]) -> Self {
        let n = rows.len() as f64;
        let mut means = [0.0; INPUT_DIM];
        for row in rows {
            for d in 0..INPUT_DIM {
                means[d] += row[d];
            }
        }
        for m in &mut means {
            *m /= n;
        }
        let mut scales = [0.0; INPUT_DIM];
        for row in rows {
            for d in 0..INPUT_DIM {
                let c = row[d] - means[d];
                scales[d] += c * c;
            }
        }
        for s in &mut scales {
            *s = (*s / n).sqrt();
            // constant channels carry no information; leave them unscaled
            if *s < 1e-12 {
                *s = 1.0;
            }
        }
        Self { means, scales }
    }

    pub fn apply(&self, row: &[f64; INPUT_DIM]) -> [f64; INPUT_DIM] {
        let mut out = [0.0; INPUT_DIM];
        for d in 0..INPUT_DIM {
            out[d] = (row[d] - self.means[d]) / self.scales[d];
        }
        out
    }
}

fn kernel_matrix(x: &[[f64; INPUT_DIM]], kp: &KernelParams) -> DMatrix<f64> {
    let n = x.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = kp.rbf(&x[i], &x[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    for i in 0..n {
        k[(i, i)] += kp.white_variance;
    }
    k
}

/// Precomputed per-pair squared coordinate differences, packed over the
/// lower triangle in column-major scan order (`j, i >= j`). The training
/// inputs are fixed across optimizer iterations, so this is the only pass
/// that ever touches them.
struct PairWorkspace {
    n: usize,
    sqdiff: Vec<[f64; INPUT_DIM]>,
}

impl PairWorkspace {
    fn new(x: &[[f64; INPUT_DIM]]) -> Self {
        let n = x.len();
        let mut sqdiff = Vec::with_capacity(n * (n + 1) / 2);
        for j in 0..n {
            for i in j..n {
                let mut sq = [0.0; INPUT_DIM];
                for d in 0..INPUT_DIM {
                    let diff = x[i][d] - x[j][d];
                    sq[d] = diff * diff;
                }
                sqdiff.push(sq);
            }
        }
        Self { n, sqdiff }
    }

    /// Kernel matrix with only the lower triangle filled: the whole hot
    /// path (blocked factorization, triangular solves, the gradient
    /// contraction) reads the lower triangle exclusively.
    fn kernel_matrix_lower(&self, kp: &KernelParams) -> DMatrix<f64> {
        let n = self.n;
        let mut inv_l2 = [0.0; INPUT_DIM];
        for d in 0..INPUT_DIM {
            inv_l2[d] = 1.0 / (kp.rbf_lengthscales[d] * kp.rbf_lengthscales[d]);
        }
        let mut k = DMatrix::zeros(n, n);
        let data = k.as_mut_slice();
        let mut idx = 0;
        for j in 0..n {
            let col = j * n;
            for i in j..n {
                let sq = &self.sqdiff[idx];
                idx += 1;
                let mut s = 0.0;
                for d in 0..INPUT_DIM {
                    s += sq[d] * inv_l2[d];
                }
                data[col + i] = kp.rbf_variance * (-0.5 * s).exp();
            }
            data[col + j] += kp.white_variance;
        }
        k
    }

    /// Likelihood and gradient sharing the cached pair distances; the
    /// contraction runs over the lower triangle with doubled off-diagonal
    /// weight.
    fn lml_with_gradient(
        &self,
        y: &DVector<f64>,
        kp: &KernelParams,
    ) -> Result<(f64, [f64; N_HYPER]), GpError> {
        kp.validate()?;
        let n = self.n;
        let k = self.kernel_matrix_lower(kp);
        let l = jittered_blocked_cholesky(&k)?;
        let mut alpha = y.clone();
        l.solve_lower_triangular_mut(&mut alpha);
        l.tr_solve_lower_triangular_mut(&mut alpha);
        let ln_det = (0..n).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0;
        let lml = -0.5 * y.dot(&alpha)
            - 0.5 * ln_det
            - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
        if !lml.is_finite() {
            return Err(GpError::DivergedLikelihood);
        }

        let linv = invert_lower_triangular(&l);
        let kinv = linv.transpose() * &linv;

        let mut inv_l3 = [0.0; INPUT_DIM];
        for d in 0..INPUT_DIM {
            let l = kp.rbf_lengthscales[d];
            inv_l3[d] = 1.0 / (l * l * l);
        }
        let inv_sf = 1.0 / kp.rbf_variance;
        let kinv_data = kinv.as_slice();
        let k_data = k.as_slice();
        let mut grad = [0.0; N_HYPER];
        let mut idx = 0;
        for j in 0..n {
            let col = j * n;
            let a_j = alpha[j];
            // diagonal element first (i == j)
            {
                let a_ij = alpha[j] * a_j - kinv_data[col + j];
                let k_rbf = k_data[col + j] - kp.white_variance;
                let w = a_ij * k_rbf;
                // squared self-distance is zero: lengthscale terms vanish
                grad[INPUT_DIM] += w * inv_sf;
                grad[INPUT_DIM + 1] += a_ij;
                idx += 1;
            }
            for i in j + 1..n {
                let a_ij = alpha[i] * a_j - kinv_data[col + i];
                let k_rbf = k_data[col + i];
                let w = 2.0 * a_ij * k_rbf;
                let sq = &self.sqdiff[idx];
                idx += 1;
                for d in 0..INPUT_DIM {
                    grad[d] += w * sq[d] * inv_l3[d];
                }
                grad[INPUT_DIM] += w * inv_sf;
            }
        }
        for g in &mut grad {
            *g *= 0.5;
        }
        Ok((lml, grad))
    }
}

/// Cholesky with escalating relative jitter (1e-10 up to 1e-4 of the mean
/// diagonal) when the matrix is numerically indefinite.
fn jittered_cholesky(k: &DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64), GpError> {
    if let Some(c) = k.clone().cholesky() {
        return Ok((c, 0.0));
    }
    let scale = k.diagonal().mean();
    let mut jitter = 1e-10 * scale;
    let max_jitter = 1e-4 * scale;
    while jitter <= max_jitter {
        let mut kj = k.clone();
        for i in 0..k.nrows() {
            kj[(i, i)] += jitter;
        }
        if let Some(c) = kj.cholesky() {
            return Ok((c, jitter));
        }
        jitter *= 100.0;
    }
    Err(GpError::NotPositiveDefinite)
}

/// Same escalation schedule for the blocked factorization used in the
/// optimizer's hot path.
fn jittered_blocked_cholesky(k: &DMatrix<f64>) -> Result<DMatrix<f64>, GpError> {
    let mut work = k.clone();
    if blocked_cholesky_in_place(&mut work) {
        return Ok(work);
    }
    let scale = k.diagonal().mean();
    let mut jitter = 1e-10 * scale;
    let max_jitter = 1e-4 * scale;
    while jitter <= max_jitter {
        work.copy_from(k);
        for i in 0..k.nrows() {
            work[(i, i)] += jitter;
        }
        if blocked_cholesky_in_place(&mut work) {
            return Ok(work);
        }
        jitter *= 100.0;
    }
    Err(GpError::NotPositiveDefinite)
}

/// Right-looking blocked Cholesky, factor stored in the lower triangle.
/// The trailing update is a gemm, which carries nearly all of the flops;
/// entries above the diagonal are left untouched. Returns false when the
/// matrix is not positive definite.
fn blocked_cholesky_in_place(a: &mut DMatrix<f64>) -> bool {
    const BLOCK: usize = 96;
    let n = a.nrows();
    let mut k = 0;
    while k < n {
        let nb = BLOCK.min(n - k);
        let diag = a.view((k, k), (nb, nb)).into_owned();
        let Some(chol) = diag.cholesky() else {
            return false;
        };
        let l_kk = chol.l();
        a.view_mut((k, k), (nb, nb)).copy_from(&l_kk);
        let m = n - k - nb;
        if m > 0 {
            // panel solve L21 = A21 L_kk^{-T} through the small inverse
            let linv_kk = invert_lower_triangular(&l_kk);
            let a21 = a.view((k + nb, k), (m, nb)).into_owned();
            let l21 = &a21 * linv_kk.transpose();
            a.view_mut((k + nb, k), (m, nb)).copy_from(&l21);
            let update = &l21 * l21.transpose();
            let mut a22 = a.view_mut((k + nb, k + nb), (m, m));
            a22 -= &update;
        }
        k += nb;
    }
    true
}

/// Blocked inversion of a lower-triangular matrix; the bulk of the work
/// lands in gemm, which is far faster than element-wise substitution at
/// the sizes used here.
fn invert_lower_triangular(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    if n <= 64 {
        let mut inv = DMatrix::identity(n, n);
        let ok = l.solve_lower_triangular_mut(&mut inv);
        debug_assert!(ok, "triangular factor must be nonsingular");
        return inv;
    }
    let h = n / 2;
    let a = l.view((0, 0), (h, h)).into_owned();
    let b = l.view((h, 0), (n - h, h)).into_owned();
    let c = l.view((h, h), (n - h, n - h)).into_owned();
    let ai = invert_lower_triangular(&a);
    let ci = invert_lower_triangular(&c);
    let corner = -(&ci * (&b * &ai));
    let mut out = DMatrix::zeros(n, n);
    out.view_mut((0, 0), (h, h)).copy_from(&ai);
    out.view_mut((h, 0), (n - h, h)).copy_from(&corner);
    out.view_mut((h, h), (n - h, n - h)).copy_from(&ci);
    out
}

fn ln_det_from_chol(chol: &Cholesky<f64, Dyn>) -> f64 {
    let l = chol.l_dirty();
    (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0
}

/// Log marginal likelihood of targets `y` under the kernel; inputs are
/// expected already standardized.
pub fn log_marginal_likelihood(
    x: &[[f64; INPUT_DIM]],
    y: &DVector<f64>,
    kp: &KernelParams,
) -> Result<f64, GpError> {
    kp.validate()?;
    let n = x.len();
    let k = kernel_matrix(x, kp);
    let (chol, _) = jittered_cholesky(&k)?;
    let alpha = chol.solve(y);
    let lml = -0.5 * y.dot(&alpha)
        - 0.5 * ln_det_from_chol(&chol)
        - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
    if lml.is_finite() {
        Ok(lml)
    } else {
        Err(GpError::DivergedLikelihood)
    }
}

/// Log marginal likelihood together with its gradient with respect to the
/// raw hyperparameters `[l_1..l_6, rbf_variance, white_variance]`.
pub fn lml_with_gradient(
    x: &[[f64; INPUT_DIM]],
    y: &DVector<f64>,
    kp: &KernelParams,
) -> Result<(f64, [f64; N_HYPER]), GpError> {
    PairWorkspace::new(x).lml_with_gradient(y, kp)
}

/// Optimizer settings for [`GprModel::fit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Number of optimizer starts; the first uses the initial kernel as
    /// given, the rest perturb it.
    pub restarts: usize,
    /// Total ascent-iteration budget per model, shared between screening
    /// and the continuation of the winning start.
    pub max_iters: usize,
    /// Convergence tolerance on the log marginal likelihood.
    pub tol: f64,
    /// Screening budget per start; the best start after screening spends
    /// the remaining budget. Zero runs every start to the full budget and
    /// keeps the best.
    pub screen_iters: usize,
    /// Seed for restart perturbations.
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            restarts: 4,
            max_iters: 200,
            tol: 1e-6,
            screen_iters: 25,
            seed: 0,
        }
    }
}

// Log-space clamps keeping the ascent away from degenerate kernels.
fn log_bounds(idx: usize) -> (f64, f64) {
    if idx < INPUT_DIM {
        (-6.9, 6.9) // lengthscales ~1e-3 .. 1e3
    } else if idx == INPUT_DIM {
        (-13.8, 13.8) // rbf variance
    } else {
        (-20.7, 6.9) // white variance ~1e-9 .. 1e3
    }
}

/// Adam ascent on log-hyperparameters from one start; returns the best
/// parameters seen and their likelihood.
fn ascend(
    ws: &PairWorkspace,
    y: &DVector<f64>,
    start: &KernelParams,
    max_iters: usize,
    opts: &FitOptions,
) -> Result<(KernelParams, f64), GpError> {
    let mut theta: Vec<f64> = start.to_raw().iter().map(|v| v.ln()).collect();
    for (i, t) in theta.iter_mut().enumerate() {
        let (lo, hi) = log_bounds(i);
        *t = t.clamp(lo, hi);
    }
    let (mut m, mut v) = (vec![0.0; N_HYPER], vec![0.0; N_HYPER]);
    let (beta1, beta2, eps) = (0.9, 0.999, 1e-8);
    let lr0 = 0.08;

    let params_of = |theta: &[f64]| {
        let mut raw = [0.0; N_HYPER];
        for (r, t) in raw.iter_mut().zip(theta) {
            *r = t.exp();
        }
        KernelParams::from_raw(&raw)
    };

    let mut best = params_of(&theta);
    let (mut best_lml, mut grad) = ws.lml_with_gradient(y, &best)?;
    let mut stale = 0;

    for t in 1..=max_iters {
        let lr = lr0 / (1.0 + t as f64 / 25.0);
        for i in 0..N_HYPER {
            // chain rule into log space
            let g = grad[i] * theta[i].exp();
            m[i] = beta1 * m[i] + (1.0 - beta1) * g;
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
            let mh = m[i] / (1.0 - beta1.powi(t as i32));
            let vh = v[i] / (1.0 - beta2.powi(t as i32));
            let (lo, hi) = log_bounds(i);
            theta[i] = (theta[i] + lr * mh / (vh.sqrt() + eps)).clamp(lo, hi);
        }
        let params = params_of(&theta);
        let (new_lml, new_grad) = match ws.lml_with_gradient(y, &params) {
            Ok(r) => r,
            // a step into an indefinite corner ends this start
            Err(GpError::NotPositiveDefinite | GpError::DivergedLikelihood) => break,
            Err(e) => return Err(e),
        };
        // converged once the likelihood stops improving beyond tolerance
        if new_lml > best_lml + opts.tol {
            best_lml = new_lml;
            best = params;
            stale = 0;
        } else {
            if new_lml > best_lml {
                best_lml = new_lml;
                best = params;
            }
            stale += 1;
            if stale >= 8 {
                break;
            }
        }
        grad = new_grad;
    }
    Ok((best, best_lml))
}

/// Fitted exact-GP model: training data, standardizer, kernel, and the
/// cached Cholesky factor of the training covariance.
#[derive(Debug, Clone)]
pub struct GprModel {
    raw_inputs: Vec<[f64; INPUT_DIM]>,
    targets: Vec<f64>,
    normalizer: InputNormalizer,
    kernel: KernelParams,
    x_norm: Vec<[f64; INPUT_DIM]>,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    log_marginal: f64,
}

impl GprModel {
    /// Fit hyperparameters by multi-start gradient ascent on the marginal
    /// likelihood, then cache the posterior factorization.
    pub fn fit(
        inputs: &[[f64; INPUT_DIM]],
        targets: &[f64],
        init: &KernelParams,
        opts: &FitOptions,
    ) -> Result<Self, GpError> {
        if inputs.len() < 2 || inputs.len() != targets.len() {
            return Err(GpError::TooFewRows(inputs.len().min(targets.len())));
        }
        if inputs.iter().flatten().any(|v| !v.is_finite())
            || targets.iter().any(|v| !v.is_finite())
        {
            return Err(GpError::NonFinite);
        }
        init.validate()?;

        let normalizer = InputNormalizer::fit(inputs);
        let x_norm: Vec<[f64; INPUT_DIM]> = inputs.iter().map(|r| normalizer.apply(r)).collect();
        let y = DVector::from_column_slice(targets);
        let ws = PairWorkspace::new(&x_norm);

        let starts: Vec<KernelParams> = (0..opts.restarts.max(1))
            .map(|r| {
                if r == 0 {
                    init.clone()
                } else {
                    let mut rng = rng_from_seed(derive_seed(opts.seed, r as u64));
                    let mut raw = init.to_raw();
                    for v in &mut raw {
                        // log-uniform perturbation within a factor of 3
                        let u: f64 = rng.random_range(-1.0..1.0);
                        *v *= (u * 3.0f64.ln()).exp();
                    }
                    KernelParams::from_raw(&raw)
                }
            })
            .collect();

        // screen every start briefly (in parallel), then spend the full
        // budget on the most promising one; the argmax is index-ordered,
        // so the outcome is independent of scheduling
        let screen = if opts.screen_iters == 0 {
            opts.max_iters
        } else {
            opts.screen_iters.min(opts.max_iters)
        };
        let screened: Vec<(KernelParams, f64)> = starts
            .par_iter()
            .map(|start| ascend(&ws, &y, start, screen, opts))
            .collect::<Result<_, _>>()?;
        let (mut kernel, mut log_marginal) = screened
            .into_iter()
            .reduce(|a, b| if b.1 > a.1 { b } else { a })
            .expect("at least one start");
        if screen < opts.max_iters {
            let remaining = opts
                .max_iters
                .saturating_sub(screen * opts.restarts.max(1))
                .max(screen);
            let (params, lml) = ascend(&ws, &y, &kernel, remaining, opts)?;
            if lml > log_marginal {
                kernel = params;
                log_marginal = lml;
            }
        }

        Self::assemble(
            inputs.to_vec(),
            targets.to_vec(),
            normalizer,
            kernel,
            log_marginal,
        )
    }

    /// Rebuild the posterior factors from stored training data and
    /// hyperparameters (used when loading a persisted model).
    pub fn from_parts(
        inputs: Vec<[f64; INPUT_DIM]>,
        targets: Vec<f64>,
        normalizer: InputNormalizer,
        kernel: KernelParams,
    ) -> Result<Self, GpError> {
        if inputs.len() < 2 || inputs.len() != targets.len() {
            return Err(GpError::TooFewRows(inputs.len().min(targets.len())));
        }
        kernel.validate()?;
        let x_norm: Vec<[f64; INPUT_DIM]> = inputs.iter().map(|r| normalizer.apply(r)).collect();
        let y = DVector::from_column_slice(&targets);
        let lml = log_marginal_likelihood(&x_norm, &y, &kernel)?;
        Self::assemble(inputs, targets, normalizer, kernel, lml)
    }

    fn assemble(
        raw_inputs: Vec<[f64; INPUT_DIM]>,
        targets: Vec<f64>,
        normalizer: InputNormalizer,
        kernel: KernelParams,
        log_marginal: f64,
    ) -> Result<Self, GpError> {
        let x_norm: Vec<[f64; INPUT_DIM]> =
            raw_inputs.iter().map(|r| normalizer.apply(r)).collect();
        let k = kernel_matrix(&x_norm, &kernel);
        let (chol, _) = jittered_cholesky(&k)?;
        let alpha = chol.solve(&DVector::from_column_slice(&targets));
        Ok(Self {
            raw_inputs,
            targets,
            normalizer,
            kernel,
            x_norm,
            chol,
            alpha,
            log_marginal,
        })
    }

    pub fn kernel(&self) -> &KernelParams {
        &self.kernel
    }

    pub fn normalizer(&self) -> &InputNormalizer {
        &self.normalizer
    }

    pub fn training_inputs(&self) -> &[[f64; INPUT_DIM]] {
        &self.raw_inputs
    }

    pub fn training_targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn log_marginal(&self) -> f64 {
        self.log_marginal
    }

    /// Posterior mean and predictive variance (observation noise included)
    /// at one wrench.
    pub fn predict(&self, input: &[f64; INPUT_DIM]) -> Result<(f64, f64), GpError> {
        if input.iter().any(|v| !v.is_finite()) {
            return Err(GpError::NonFinite);
        }
        let xs = self.normalizer.apply(input);
        let n = self.x_norm.len();
        let kstar = DVector::from_fn(n, |i, _| self.kernel.rbf(&self.x_norm[i], &xs));
        let mean = kstar.dot(&self.alpha);
        let kinv_kstar = self.chol.solve(&kstar);
        let var = self.kernel.rbf_variance + self.kernel.white_variance - kstar.dot(&kinv_kstar);
        Ok((mean, var.max(0.0)))
    }

    pub fn predict_wrench(&self, w: &Wrench) -> Result<(f64, f64), GpError> {
        self.predict(&w.channels())
    }

    /// Sign of the posterior mean for a model trained on ±1 labels. A zero
    /// mean classifies as +1; means within 1e-12 of zero (cancellation
    /// dust, far below any label signal) count as zero.
    pub fn classify(&self, input: &[f64; INPUT_DIM]) -> Result<i8, GpError> {
        let (mean, _) = self.predict(input)?;
        Ok(if mean < -1e-12 { -1 } else { 1 })
    }
}

/// Per-axis direction estimate from the pair of sign models.
pub fn classify_sign(
    model_x: &GprModel,
    model_y: &GprModel,
    w: &Wrench,
) -> Result<(i8, i8), GpError> {
    let c = w.channels();
    Ok((model_x.classify(&c)?, model_y.classify(&c)?))
}
