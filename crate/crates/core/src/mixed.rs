//! REML fitting of the variance-component mixed model, restricted likelihood
//! evaluation, and the Henderson / first-order-system solvers used to check
//! the smoothing-spline duality.
//!
//! The model is y ~ N(mu 1, V) with V = sigma2 I + tau1 K1 + tau2 K2 + tau3 K3.
//! Fitting works on the structured form K = U Uᵀ + diag(d) carried by
//! `KernelMatrix`, so one iteration costs O(n r²) instead of O(n³).

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::kernel::{KernelMatrix, LowRank};

/// The variance components (sigma2, tau1, tau2, tau3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceComponents {
    pub sigma2: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub tau3: f64,
}

impl VarianceComponents {
    pub fn new(sigma2: f64, tau1: f64, tau2: f64, tau3: f64) -> Result<Self> {
        let vc = Self {
            sigma2,
            tau1,
            tau2,
            tau3,
        };
        for v in vc.as_array() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "variance components must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(vc)
    }

    pub fn zero() -> Self {
        Self {
            sigma2: 0.0,
            tau1: 0.0,
            tau2: 0.0,
            tau3: 0.0,
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.sigma2, self.tau1, self.tau2, self.tau3]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self {
            sigma2: a[0],
            tau1: a[1],
            tau2: a[2],
            tau3: a[3],
        }
    }

    pub fn taus(&self) -> [f64; 3] {
        [self.tau1, self.tau2, self.tau3]
    }

    /// Total genetic variance tau1 + tau2 + tau3.
    pub fn genetic_variance(&self) -> f64 {
        self.tau1 + self.tau2 + self.tau3
    }
}

/// Fitted null model: components, profiled intercept, restricted
/// log-likelihood and a factorization of V sufficient to apply V⁻¹.
#[derive(Debug, Clone)]
pub struct NullFit {
    pub components: VarianceComponents,
    pub mu_hat: f64,
    pub reml_loglik: f64,
    pub(crate) v: FactoredCov,
}

impl NullFit {
    pub fn n(&self) -> usize {
        self.v.n()
    }

    pub fn v_inv_apply(&self, x: &DVector<f64>) -> DVector<f64> {
        self.v.solve_vec(x)
    }
}

/// Predicted random effects from Henderson's normal equation.
#[derive(Debug, Clone)]
pub struct BlupEstimates {
    pub mu: f64,
    pub m1: DVector<f64>,
    pub m2: DVector<f64>,
    pub m12: DVector<f64>,
}

// ---------------------------------------------------------------------------
// Structured covariance V = E + W Wᵀ with E diagonal.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub(crate) struct FactoredCov {
    e: DVector<f64>,
    z: DMatrix<f64>,
    bchol: Option<Cholesky<f64, Dyn>>,
    ldet: f64,
}

impl FactoredCov {
    /// Assemble from components and the structured kernels. Blocks with a
    /// zero component are dropped; their diagonal slack vanishes with tau.
    pub(crate) fn build(vc: &VarianceComponents, kernels: &[LowRank; 3]) -> Result<Self> {
        if vc.sigma2 <= 0.0 {
            return Err(Error::NotPositiveDefinite);
        }
        let n = kernels[0].u.nrows();
        let mut e = DVector::from_element(n, vc.sigma2);
        let mut blocks: Vec<DMatrix<f64>> = Vec::new();
        for (lr, tau) in kernels.iter().zip(vc.taus()) {
            if tau > 0.0 {
                e += tau * &lr.d;
                blocks.push(tau.sqrt() * &lr.u);
            }
        }
        let r: usize = blocks.iter().map(|b| b.ncols()).sum();
        let mut w = DMatrix::zeros(n, r);
        let mut col = 0;
        for b in &blocks {
            w.view_mut((0, col), (n, b.ncols())).copy_from(b);
            col += b.ncols();
        }
        let z = DMatrix::from_fn(n, r, |i, j| w[(i, j)] / e[i]);
        let ldet_e: f64 = e.iter().map(|&v| v.ln()).sum();
        if r == 0 {
            return Ok(Self {
                e,
                z,
                bchol: None,
                ldet: ldet_e,
            });
        }
        let mut b = w.transpose() * &z;
        for i in 0..r {
            b[(i, i)] += 1.0;
        }
        let bchol = Cholesky::new(b).ok_or(Error::NotPositiveDefinite)?;
        let ldet_b: f64 = (0..r).map(|i| 2.0 * bchol.l_dirty()[(i, i)].ln()).sum();
        Ok(Self {
            e,
            z,
            bchol: Some(bchol),
            ldet: ldet_e + ldet_b,
        })
    }

    pub(crate) fn n(&self) -> usize {
        self.e.len()
    }

    pub(crate) fn ldet(&self) -> f64 {
        self.ldet
    }

    /// V⁻¹ x via the Woodbury identity.
    pub(crate) fn solve_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::from_fn(self.n(), |i, _| x[i] / self.e[i]);
        if let Some(chol) = &self.bchol {
            let t = chol.solve(&(self.z.transpose() * x));
            out -= &self.z * t;
        }
        out
    }

    /// V⁻¹ X columnwise.
    pub(crate) fn solve_mat(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] / self.e[i]);
        if let Some(chol) = &self.bchol {
            let t = chol.solve(&(self.z.transpose() * x));
            out -= &self.z * t;
        }
        out
    }

    /// Diagonal of V⁻¹.
    pub(crate) fn diag_inv(&self) -> DVector<f64> {
        let mut out = DVector::from_fn(self.n(), |i, _| 1.0 / self.e[i]);
        if let Some(chol) = &self.bchol {
            // (Z B⁻¹ Zᵀ)_ii = || L⁻¹ z_i ||²
            let t = chol
                .l_dirty()
                .solve_lower_triangular(&self.z.transpose())
                .expect("triangular solve");
            for i in 0..self.n() {
                out[i] -= t.column(i).norm_squared();
            }
        }
        out
    }
}

fn lowranks(kernels: &[&KernelMatrix; 3]) -> [LowRank; 3] {
    [
        kernels[0].lowrank_or_eig(),
        kernels[1].lowrank_or_eig(),
        kernels[2].lowrank_or_eig(),
    ]
}

fn assemble_v(kernels: &[&KernelMatrix; 3], vc: &VarianceComponents) -> DMatrix<f64> {
    let n = kernels[0].n();
    let mut v = DMatrix::identity(n, n) * vc.sigma2;
    for (k, tau) in kernels.iter().zip(vc.taus()) {
        if tau != 0.0 {
            v += tau * k.values();
        }
    }
    v
}

// ---------------------------------------------------------------------------
// Restricted likelihood and its gradient (dense reference path).
// ---------------------------------------------------------------------------

/// Restricted log-likelihood with the intercept profiled out, up to an
/// additive constant:
/// -1/2 ln|V| - 1/2 ln(1ᵀV⁻¹1) - 1/2 (y - mu 1)ᵀ V⁻¹ (y - mu 1).
pub fn restricted_loglik(
    y: &DVector<f64>,
    kernels: &[&KernelMatrix; 3],
    vc: &VarianceComponents,
) -> Result<f64> {
    let n = y.len();
    check_dims(y, kernels)?;
    let v = assemble_v(kernels, vc);
    let chol = Cholesky::new(v).ok_or(Error::NotPositiveDefinite)?;
    let ldet: f64 = (0..n).map(|i| 2.0 * chol.l_dirty()[(i, i)].ln()).sum();
    let ones = DVector::from_element(n, 1.0);
    let vi1 = chol.solve(&ones);
    let viy = chol.solve(y);
    let s = ones.dot(&vi1);
    let uy = ones.dot(&viy);
    let quad = y.dot(&viy) - uy * uy / s;
    Ok(-0.5 * ldet - 0.5 * s.ln() - 0.5 * quad)
}

/// Gradient of the restricted log-likelihood with respect to
/// (sigma2, tau1, tau2, tau3), with V_1 = I and V_{1+l} = K_l.
pub fn reml_score(
    y: &DVector<f64>,
    kernels: &[&KernelMatrix; 3],
    vc: &VarianceComponents,
) -> Result<[f64; 4]> {
    let n = y.len();
    check_dims(y, kernels)?;
    let v = assemble_v(kernels, vc);
    let chol = Cholesky::new(v).ok_or(Error::NotPositiveDefinite)?;
    let vinv = chol.inverse();
    let ones = DVector::from_element(n, 1.0);
    let u = &vinv * &ones;
    let s = ones.dot(&u);
    let viy = &vinv * y;
    let mu = ones.dot(&viy) / s;
    let vr = &viy - mu * &u;

    let mut grad = [0.0; 4];
    // sigma2 entry: V_i = I
    let tr_r = vinv.trace() - u.norm_squared() / s;
    grad[0] = -0.5 * tr_r + 0.5 * vr.norm_squared();
    for (l, k) in kernels.iter().enumerate() {
        let kv = k.values();
        let tr_vk: f64 = vinv.iter().zip(kv.iter()).map(|(a, b)| a * b).sum();
        let uku = u.dot(&(kv * &u));
        let quad = vr.dot(&(kv * &vr));
        grad[1 + l] = -0.5 * (tr_vk - uku / s) + 0.5 * quad;
    }
    Ok(grad)
}

fn check_dims(y: &DVector<f64>, kernels: &[&KernelMatrix; 3]) -> Result<()> {
    let n = y.len();
    for k in kernels {
        if k.n() != n {
            return Err(Error::DimensionMismatch {
                context: format!("kernel is {} x {} but y has length {}", k.n(), k.n(), n),
            });
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// REML fitting (structured fast path).
// ---------------------------------------------------------------------------

const REML_MAX_ITER: usize = 500;
const REML_LL_TOL: f64 = 1e-8;
const REML_GRAD_TOL: f64 = 1e-6;
const BOUNDARY_SNAP: f64 = 1e-8;

struct RemlEval {
    loglik: f64,
    grad: [f64; 4],
}

fn reml_eval(
    y: &DVector<f64>,
    lrs: &[LowRank; 3],
    vc: &VarianceComponents,
    free: &[usize],
) -> Result<RemlEval> {
    let n = y.len();
    let cov = FactoredCov::build(vc, lrs)?;
    let ones = DVector::from_element(n, 1.0);
    let u = cov.solve_vec(&ones);
    let s = ones.dot(&u);
    let viy = cov.solve_vec(y);
    let uy = ones.dot(&viy);
    let mu = uy / s;
    let quad = y.dot(&viy) - uy * mu;
    let loglik = -0.5 * cov.ldet() - 0.5 * s.ln() - 0.5 * quad;
    let vr = &viy - mu * &u;

    let mut grad = [0.0; 4];
    let di = cov.diag_inv();
    if free.contains(&0) {
        let tr_r = di.sum() - u.norm_squared() / s;
        grad[0] = -0.5 * tr_r + 0.5 * vr.norm_squared();
    }
    for l in 0..3 {
        if !free.contains(&(1 + l)) {
            continue;
        }
        let lr = &lrs[l];
        let t = cov.solve_mat(&lr.u);
        let mut tr_vk: f64 = lr.u.iter().zip(t.iter()).map(|(a, b)| a * b).sum();
        tr_vk += lr.d.iter().zip(di.iter()).map(|(a, b)| a * b).sum::<f64>();
        let ut = lr.u.transpose() * &u;
        let mut uku = ut.norm_squared();
        uku += lr
            .d
            .iter()
            .zip(u.iter())
            .map(|(d, ui)| d * ui * ui)
            .sum::<f64>();
        let vt = lr.u.transpose() * &vr;
        let mut vkv = vt.norm_squared();
        vkv += lr
            .d
            .iter()
            .zip(vr.iter())
            .map(|(d, vi)| d * vi * vi)
            .sum::<f64>();
        grad[1 + l] = -0.5 * (tr_vk - uku / s) + 0.5 * vkv;
    }
    Ok(RemlEval { loglik, grad })
}

/// Maximize the restricted log-likelihood over the non-negative orthant,
/// restricted to the components flagged free in `free_mask`. The residual
/// variance (index 0) must always be free; masked-out components are pinned
/// at zero. Free components are log-parameterized and optimized by BFGS
/// ascent with a boundary snap at convergence.
pub fn reml_fit(
    y: &DVector<f64>,
    kernels: &[&KernelMatrix; 3],
    free_mask: [bool; 4],
) -> Result<NullFit> {
    if !free_mask[0] {
        return Err(Error::InvalidInput(
            "the residual variance component must be free".into(),
        ));
    }
    check_dims(y, kernels)?;
    let n = y.len();
    let lrs = lowranks(kernels);
    let mean = y.sum() / n as f64;
    let var_y = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    if var_y <= 0.0 {
        return Err(Error::DegenerateTrait);
    }

    let free: Vec<usize> = (0..4).filter(|&i| free_mask[i]).collect();
    let n_free_taus = free.iter().filter(|&&i| i > 0).count();
    let mut beta = [0.0; 4];
    beta[0] = var_y / 2.0;
    for &i in &free {
        if i > 0 {
            beta[i] = var_y / (2.0 * n_free_taus as f64);
        }
    }

    let zeta_lo = var_y.ln() - 30.0;
    let zeta_hi = var_y.ln() + 10.0;
    let k = free.len();
    let mut zeta: Vec<f64> = free.iter().map(|&i| beta[i].ln()).collect();

    let project = |z: &mut Vec<f64>| {
        for v in z.iter_mut() {
            *v = v.clamp(zeta_lo, zeta_hi);
        }
    };
    let to_vc = |z: &[f64]| {
        let mut b = [0.0; 4];
        for (j, &i) in free.iter().enumerate() {
            b[i] = z[j].exp();
        }
        VarianceComponents::from_array(b)
    };
    // Gradient in log-space, with bound-active coordinates projected out.
    let zgrad = |z: &[f64], ev: &RemlEval| -> DVector<f64> {
        DVector::from_fn(k, |j, _| {
            let g = z[j].exp() * ev.grad[free[j]];
            if (z[j] <= zeta_lo && g < 0.0) || (z[j] >= zeta_hi && g > 0.0) {
                0.0
            } else {
                g
            }
        })
    };

    project(&mut zeta);
    let mut ev = reml_eval(y, &lrs, &to_vc(&zeta), &free)?;
    let mut grad = zgrad(&zeta, &ev);
    let mut hinv = DMatrix::<f64>::identity(k, k);
    let mut converged = false;
    let mut iterations = 0;

    for iter in 0..REML_MAX_ITER {
        iterations = iter + 1;
        if grad.amax() < REML_GRAD_TOL {
            converged = true;
            break;
        }
        let mut dir = &hinv * &grad;
        if dir.dot(&grad) <= 0.0 {
            hinv = DMatrix::identity(k, k);
            dir = grad.clone();
        }
        // Backtracking line search (Armijo).
        let g0 = ev.loglik;
        let slope = dir.dot(&grad);
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let mut trial: Vec<f64> = (0..k).map(|j| zeta[j] + alpha * dir[j]).collect();
            project(&mut trial);
            if let Ok(trial_ev) = reml_eval(y, &lrs, &to_vc(&trial), &free) {
                if trial_ev.loglik >= g0 + 1e-4 * alpha * slope {
                    accepted = Some((trial, trial_ev));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((new_zeta, new_ev)) = accepted else {
            converged = true;
            break;
        };
        let new_grad = zgrad(&new_zeta, &new_ev);
        // BFGS inverse-Hessian update (on the negated objective).
        let step = DVector::from_fn(k, |j, _| new_zeta[j] - zeta[j]);
        let dg = &grad - &new_grad;
        let sy = step.dot(&dg);
        if sy > 1e-12 {
            let rho = 1.0 / sy;
            let hy = &hinv * &dg;
            let yhy = dg.dot(&hy);
            hinv = &hinv - rho * (&hy * step.transpose() + &step * hy.transpose())
                + (rho * rho * yhy + rho) * (&step * step.transpose());
        }
        let rel_change = (new_ev.loglik - ev.loglik).abs() / (1.0 + ev.loglik.abs());
        zeta = new_zeta;
        ev = new_ev;
        grad = new_grad;
        if rel_change < REML_LL_TOL {
            converged = true;
            break;
        }
    }

    let mut final_vc = to_vc(&zeta);
    if !converged && grad.amax() >= REML_GRAD_TOL {
        return Err(Error::NoConvergence {
            iterations,
            last: final_vc.as_array(),
        });
    }

    // Boundary snap: tiny components are genuine zeros under H0.
    let snap = BOUNDARY_SNAP * var_y;
    if final_vc.tau1 < snap {
        final_vc.tau1 = 0.0;
    }
    if final_vc.tau2 < snap {
        final_vc.tau2 = 0.0;
    }
    if final_vc.tau3 < snap {
        final_vc.tau3 = 0.0;
    }
    final_vc.sigma2 = final_vc.sigma2.max(1e-12 * var_y);

    let cov = FactoredCov::build(&final_vc, &lrs)?;
    let ones = DVector::from_element(n, 1.0);
    let u = cov.solve_vec(&ones);
    let s = ones.dot(&u);
    let viy = cov.solve_vec(y);
    let uy = ones.dot(&viy);
    let mu_hat = uy / s;
    let quad = y.dot(&viy) - uy * mu_hat;
    let reml_loglik = -0.5 * cov.ldet() - 0.5 * s.ln() - 0.5 * quad;

    Ok(NullFit {
        components: final_vc,
        mu_hat,
        reml_loglik,
        v: cov,
    })
}

// ---------------------------------------------------------------------------
// Henderson normal equation and the smoothing-spline first-order system.
// ---------------------------------------------------------------------------

fn kernel_inverse(k: &KernelMatrix) -> Result<DMatrix<f64>> {
    let n = k.n();
    if let Some(chol) = Cholesky::new(k.values().clone()) {
        return Ok(chol.inverse());
    }
    // AM kernels are frequently rank-deficient; lift by a trace-scaled ridge.
    let ridge = 1e-8 * k.values().trace() / n as f64;
    let mut m = k.values().clone();
    for i in 0..n {
        m[(i, i)] += ridge;
    }
    Cholesky::new(m)
        .map(|c| c.inverse())
        .ok_or(Error::SingularSystem)
}

/// Solve Henderson's normal equation for (mu, m1, m2, m12).
pub fn henderson_blup(
    y: &DVector<f64>,
    kernels: &[&KernelMatrix; 3],
    vc: &VarianceComponents,
) -> Result<BlupEstimates> {
    check_dims(y, kernels)?;
    if vc.sigma2 <= 0.0 || vc.taus().iter().any(|&t| t <= 0.0) {
        return Err(Error::InvalidInput(
            "Henderson's equation requires positive sigma2 and tau components".into(),
        ));
    }
    let n = y.len();
    let dim = 1 + 3 * n;
    let mut a = DMatrix::zeros(dim, dim);
    let mut rhs = DVector::zeros(dim);
    a[(0, 0)] = n as f64;
    rhs[0] = y.sum();
    for l in 0..3 {
        let off = 1 + l * n;
        let kinv = kernel_inverse(kernels[l])?;
        let lambda = vc.sigma2 / vc.taus()[l];
        for i in 0..n {
            a[(0, off + i)] = 1.0;
            a[(off + i, 0)] = 1.0;
            rhs[off + i] = y[i];
            for m in 0..3 {
                let off2 = 1 + m * n;
                a[(off + i, off2 + i)] += 1.0;
            }
            for j in 0..n {
                a[(off + i, off + j)] += lambda * kinv[(i, j)];
            }
        }
    }
    let sol = a.lu().solve(&rhs).ok_or(Error::SingularSystem)?;
    Ok(BlupEstimates {
        mu: sol[0],
        m1: sol.rows(1, n).into_owned(),
        m2: sol.rows(1 + n, n).into_owned(),
        m12: sol.rows(1 + 2 * n, n).into_owned(),
    })
}

/// Solve the first-order system of the penalized criterion for
/// (mu, C1, C2, C3) at the given smoothing parameters.
#[allow(clippy::type_complexity)]
pub fn ss_first_order_solve(
    y: &DVector<f64>,
    kernels: &[&KernelMatrix; 3],
    lambdas: [f64; 3],
) -> Result<(f64, DVector<f64>, DVector<f64>, DVector<f64>)> {
    check_dims(y, kernels)?;
    if lambdas.iter().any(|&l| !l.is_finite() || l < 0.0) {
        return Err(Error::InvalidInput(
            "smoothing parameters must be finite and non-negative".into(),
        ));
    }
    let n = y.len();
    let dim = 1 + 3 * n;
    let ones = DVector::from_element(n, 1.0);
    let mut a = DMatrix::zeros(dim, dim);
    let mut rhs = DVector::zeros(dim);
    a[(0, 0)] = n as f64;
    rhs[0] = y.sum();
    for m in 0..3 {
        let col = 1 + m * n;
        let k1m = kernels[m].values().transpose() * &ones;
        for j in 0..n {
            a[(0, col + j)] = k1m[j];
        }
    }
    for l in 0..3 {
        let row = 1 + l * n;
        let kl = kernels[l].values();
        let kl1 = kl * &ones;
        let kly = kl * y;
        for i in 0..n {
            a[(row + i, 0)] = kl1[i];
            rhs[row + i] = kly[i];
        }
        for m in 0..3 {
            let col = 1 + m * n;
            let mut block = kl * kernels[m].values();
            if l == m {
                block += lambdas[l] * kl;
            }
            a.view_mut((row, col), (n, n)).copy_from(&block);
        }
    }
    let solve = |m: &DMatrix<f64>| m.clone().lu().solve(&rhs);
    let sol = match solve(&a) {
        Some(s) => s,
        None => {
            let jitter = 1e-10 * (1.0 + a.diagonal().amax());
            let mut aj = a.clone();
            for i in 0..dim {
                aj[(i, i)] += jitter;
            }
            solve(&aj).ok_or(Error::SingularSystem)?
        }
    };
    Ok((
        sol[0],
        sol.rows(1, n).into_owned(),
        sol.rows(1 + n, n).into_owned(),
        sol.rows(1 + 2 * n, n).into_owned(),
    ))
}
