//! Recency-weighted estimating equations for the Weibull regression model.
//!
//! Each case i of t gets the geometric weight
//! w_i = t·λ·(1−λ)^{t−i} / (1 − (1−λ)^t), which sums to t and grows by a
//! factor 1/(1−λ) per case, so recent surgeries dominate the fit. The
//! estimator solves the weighted score system Q(γ, η, β) = 0; its robust
//! covariance is the sandwich Σ = Γ⁻¹ Ω Γ⁻¹ built from the expected Hessian
//! Γ and the information matrix Ω.
//!
//! Γ and Ω come from closed-form conditional moments rather than simulation.
//! The key device: V = θY^η is unit exponential, so with
//! a = 1 − c − ln θ (c the Euler constant) every needed expectation reduces
//! to exponential log-moments. The per-case matrix E[q qᵀ] has entries
//!
//! ```text
//! (γ,γ) 1/γ²       (γ,η) a/(γη)        (γ,βj) x_j/γ
//!                  (η,η) (a²+π²/6)/η²  (η,βj) x_j·a/η
//!                                      (βj,βk) x_j·x_k
//! ```
//!
//! and Γ = −Σ w_i E[q_i q_iᵀ], Ω = Σ w_i² E[q_i q_iᵀ]. With unit weights
//! Ω = −Γ exactly (the information identity).

use crate::error::{Error, Result};
use crate::model::{CaseRecord, WeibullRegParams};
use nalgebra::{DMatrix, DVector};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Geometric case weights for one fitting window.
#[derive(Debug, Clone)]
pub struct WeightVector {
    w: Vec<f64>,
    lambda: f64,
}

impl WeightVector {
    /// Weight of case i (1-based), so `get(t)` is the most recent case.
    pub fn get(&self, i: usize) -> f64 {
        self.w[i - 1]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
}

/// Builds the weight vector for t cases at smoothing constant λ ∈ (0, 1].
///
/// λ = 1 degenerates to all mass on the last case (w_t = t). The
/// denominator 1 − (1−λ)^t is evaluated via expm1 so tiny λ stays exact;
/// λ → 0 recovers the unweighted limit w_i → 1.
pub fn weights(t: usize, lambda: f64) -> Result<WeightVector> {
    if t < 1 {
        return Err(Error::Domain("weights require t >= 1".into()));
    }
    if !lambda.is_finite() || lambda <= 0.0 || lambda > 1.0 {
        return Err(Error::Domain(format!(
            "smoothing constant must lie in (0, 1], got {lambda}"
        )));
    }
    let tf = t as f64;
    let mut w = vec![0.0; t];
    if lambda == 1.0 {
        w[t - 1] = tf;
    } else {
        let denom = -f64::exp_m1(tf * f64::ln_1p(-lambda));
        let scale = tf * lambda / denom;
        for (k, wk) in w.iter_mut().enumerate() {
            // k is 0-based, case i = k + 1
            *wk = scale * (1.0 - lambda).powi((t - 1 - k) as i32);
        }
    }
    Ok(WeightVector { w, lambda })
}

/// Per-case pieces shared by the likelihood, score, and Hessian.
/// `a` is y^η e^{β'x}, so θ·y^η = γ·a.
struct CaseTerms {
    ln_y: f64,
    bx: f64,
    a: f64,
}

fn case_terms(params: &WeibullRegParams, case: &CaseRecord) -> Result<CaseTerms> {
    let bx = params.linear_predictor(case.x())?;
    let ln_y = case.y().ln();
    let a = (params.eta() * ln_y + bx).exp();
    Ok(CaseTerms { ln_y, bx, a })
}

fn check_alignment(data: &[CaseRecord], w: &WeightVector) -> Result<()> {
    if data.len() != w.len() {
        return Err(Error::Dimension(format!(
            "{} cases but {} weights",
            data.len(),
            w.len()
        )));
    }
    Ok(())
}

/// Weighted log-likelihood Σ w_i [ln γ + ln η + (η−1)ln y_i + β'x_i − γ y_i^η e^{β'x_i}].
pub fn weighted_loglik(
    params: &WeibullRegParams,
    data: &[CaseRecord],
    w: &WeightVector,
) -> Result<f64> {
    check_alignment(data, w)?;
    let ll = loglik_raw(params, data, w)?;
    if !ll.is_finite() {
        return Err(Error::Numerical(format!(
            "weighted log-likelihood is not finite ({ll})"
        )));
    }
    Ok(ll)
}

/// Like `weighted_loglik` but lets −∞ through; the line search treats an
/// overflowing trial step as an ordinary rejection.
fn loglik_raw(params: &WeibullRegParams, data: &[CaseRecord], w: &WeightVector) -> Result<f64> {
    let base = params.gamma().ln() + params.eta().ln();
    let mut ll = 0.0;
    for (case, &wi) in data.iter().zip(w.as_slice()) {
        let t = case_terms(params, case)?;
        ll += wi * (base + (params.eta() - 1.0) * t.ln_y + t.bx - params.gamma() * t.a);
    }
    Ok(ll)
}

/// Weighted score Q = ∇ of the weighted log-likelihood, ordered (γ, η, β₁..β_d):
///
/// Q_γ = Σ w_i (1/γ − y_i^η e^{β'x_i})
/// Q_η = Σ w_i (1/η + ln y_i (1 − γ y_i^η e^{β'x_i}))
/// Q_βj = Σ w_i x_ij (1 − γ y_i^η e^{β'x_i})
pub fn score(
    params: &WeibullRegParams,
    data: &[CaseRecord],
    w: &WeightVector,
) -> Result<DVector<f64>> {
    check_alignment(data, w)?;
    let d = params.dim();
    let mut q = DVector::zeros(d + 2);
    for (case, &wi) in data.iter().zip(w.as_slice()) {
        let t = case_terms(params, case)?;
        let resid = 1.0 - params.gamma() * t.a;
        q[0] += wi * (1.0 / params.gamma() - t.a);
        q[1] += wi * (1.0 / params.eta() + t.ln_y * resid);
        for (j, xj) in case.x().iter().enumerate() {
            q[2 + j] += wi * xj * resid;
        }
    }
    if q.iter().any(|v: &f64| !v.is_finite()) {
        return Err(Error::Numerical("score has non-finite entries".into()));
    }
    Ok(q)
}

/// Observed Hessian ∂Q/∂(γ, η, β) of the weighted log-likelihood. Symmetric.
pub fn observed_hessian(
    params: &WeibullRegParams,
    data: &[CaseRecord],
    w: &WeightVector,
) -> Result<DMatrix<f64>> {
    check_alignment(data, w)?;
    let d = params.dim();
    let n = d + 2;
    let gamma = params.gamma();
    let eta = params.eta();
    let mut h = DMatrix::zeros(n, n);
    let mut w_total = 0.0;
    for (case, &wi) in data.iter().zip(w.as_slice()) {
        let t = case_terms(params, case)?;
        w_total += wi;
        let ga = gamma * t.a;
        h[(0, 1)] += wi * (-t.a * t.ln_y);
        h[(1, 1)] += wi * (-ga * t.ln_y * t.ln_y);
        for (j, xj) in case.x().iter().enumerate() {
            h[(0, 2 + j)] += wi * (-xj * t.a);
            h[(1, 2 + j)] += wi * (-xj * ga * t.ln_y);
            for (k, xk) in case.x().iter().enumerate().skip(j) {
                h[(2 + j, 2 + k)] += wi * (-xj * xk * ga);
            }
        }
    }
    h[(0, 0)] = -w_total / (gamma * gamma);
    h[(1, 1)] -= w_total / (eta * eta);
    for r in 0..n {
        for c in (r + 1)..n {
            h[(c, r)] = h[(r, c)];
        }
    }
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("Hessian has non-finite entries".into()));
    }
    Ok(h)
}

/// Closed-form conditional score moments at one covariate vector.
///
/// All are exact consequences of V = θY^η ~ Exponential(1), written with
/// a = 1 − c − ln θ and ψ'(2) = π²/6 − 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpectedMoments {
    /// E(Y^η) = 1/θ
    pub y_eta: f64,
    /// E(Y^η ln Y) = a / (ηθ)
    pub y_eta_ln: f64,
    /// E(Y^η ln² Y) = (a² + ψ'(2)) / (η²θ)
    pub y_eta_ln2: f64,
    /// E(q_γ²) = 1/γ²
    pub q_gamma_sq: f64,
    /// E(q_γ q_η) = a / (γη)
    pub q_gamma_eta: f64,
    /// E(q_η²) = (a² + π²/6) / η²
    pub q_eta_sq: f64,
}

/// Evaluates the closed-form moment set at (params, x).
pub fn expected_moments(params: &WeibullRegParams, x: &[f64]) -> Result<ExpectedMoments> {
    let theta = params.rate(x)?;
    let eta = params.eta();
    let gamma = params.gamma();
    let a = 1.0 - EULER_GAMMA - theta.ln();
    let pi2_6 = std::f64::consts::PI * std::f64::consts::PI / 6.0;
    Ok(ExpectedMoments {
        y_eta: 1.0 / theta,
        y_eta_ln: a / (eta * theta),
        y_eta_ln2: (a * a + pi2_6 - 1.0) / (eta * eta * theta),
        q_gamma_sq: 1.0 / (gamma * gamma),
        q_gamma_eta: a / (gamma * eta),
        q_eta_sq: (a * a + pi2_6) / (eta * eta),
    })
}

/// Per-case information E[q qᵀ] at one covariate vector: the building block
/// of both Γ and Ω. Equals −E[observed Hessian] for a correctly specified
/// model, hence "information".
pub fn case_information(params: &WeibullRegParams, x: &[f64]) -> Result<DMatrix<f64>> {
    let m = expected_moments(params, x)?;
    let d = params.dim();
    let n = d + 2;
    let gamma = params.gamma();
    let eta = params.eta();
    let a = m.q_gamma_eta * gamma * eta; // recover a = 1 − c − ln θ
    let mut u = DMatrix::zeros(n, n);
    u[(0, 0)] = m.q_gamma_sq;
    u[(0, 1)] = m.q_gamma_eta;
    u[(1, 1)] = m.q_eta_sq;
    for (j, xj) in x.iter().enumerate() {
        u[(0, 2 + j)] = xj / gamma;
        u[(1, 2 + j)] = xj * a / eta;
        for (k, xk) in x.iter().enumerate().skip(j) {
            u[(2 + j, 2 + k)] = xj * xk;
        }
    }
    for r in 0..n {
        for c in (r + 1)..n {
            u[(c, r)] = u[(r, c)];
        }
    }
    Ok(u)
}

/// Expected Hessian Γ = −Σ w_i E[q_i q_iᵀ], evaluated at `params`.
pub fn expected_hessian(
    params: &WeibullRegParams,
    data: &[CaseRecord],
    w: &WeightVector,
) -> Result<DMatrix<f64>> {
    check_alignment(data, w)?;
    let n = params.dim() + 2;
    let mut g = DMatrix::zeros(n, n);
    for (case, &wi) in data.iter().zip(w.as_slice()) {
        g += case_information(params, case.x())?.scale(-wi);
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("expected Hessian has non-finite entries".into()));
    }
    Ok(g)
}

/// Information matrix Ω = Σ w_i² E[q_i q_iᵀ], evaluated at `params`.
pub fn information_matrix(
    params: &WeibullRegParams,
    data: &[CaseRecord],
    w: &WeightVector,
) -> Result<DMatrix<f64>> {
    check_alignment(data, w)?;
    let n = params.dim() + 2;
    let mut om = DMatrix::zeros(n, n);
    for (case, &wi) in data.iter().zip(w.as_slice()) {
        om += case_information(params, case.x())?.scale(wi * wi);
    }
    if om.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("information matrix has non-finite entries".into()));
    }
    Ok(om)
}

/// Sandwich covariance Σ = Γ⁻¹ Ω Γ⁻¹, symmetrized as (Σ + Σᵀ)/2.
///
/// Refuses a Γ whose condition number exceeds 1e12; the message carries the
/// condition estimate so callers can tell a rank-deficient design from a
/// bug.
pub fn sandwich_cov(gamma_mat: &DMatrix<f64>, omega_mat: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = gamma_mat.nrows();
    if gamma_mat.ncols() != n || omega_mat.nrows() != n || omega_mat.ncols() != n {
        return Err(Error::Dimension("sandwich factors must be square and same size".into()));
    }
    let sym = (gamma_mat + gamma_mat.transpose()).scale(0.5);
    let eig = sym.symmetric_eigen();
    let max_abs = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min_abs = eig.eigenvalues.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if !(max_abs.is_finite()) || min_abs <= 0.0 || max_abs / min_abs > 1e12 {
        return Err(Error::Numerical(format!(
            "expected Hessian is singular or ill-conditioned (cond ~ {:.3e})",
            if min_abs > 0.0 { max_abs / min_abs } else { f64::INFINITY }
        )));
    }
    let v = &eig.eigenvectors;
    let inv_diag = DMatrix::from_diagonal(&eig.eigenvalues.map(|e| 1.0 / e));
    let g_inv = v * inv_diag * v.transpose();
    let sigma = &g_inv * omega_mat * g_inv;
    Ok((&sigma + sigma.transpose()).scale(0.5))
}

/// Knobs for the Newton solver. The defaults fit every use in this crate;
/// they are exposed for stress tests and unusual data.
#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Convergence threshold on ‖Q‖∞ (natural scale).
    pub tol: f64,
    /// Iteration cap; exceeding it yields converged = false, not an error.
    pub max_iter: usize,
    /// Cap on step halvings per iteration.
    pub max_halvings: usize,
    /// Condition-number threshold that triggers diagonal regularization.
    pub cond_limit: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200,
            max_halvings: 50,
            cond_limit: 1e12,
        }
    }
}

/// A fitted model: point estimates, sandwich covariance, and solver
/// diagnostics.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: WeibullRegParams,
    /// Sandwich covariance on the natural (γ, η, β) scale.
    pub sigma: DMatrix<f64>,
    /// ‖Q‖∞ at the returned estimates.
    pub score_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    pub n_cases: usize,
    pub lambda: f64,
}

impl FitResult {
    /// Asymptotic standard errors: square roots of the Σ diagonal,
    /// ordered (γ, η, β₁..β_d).
    pub fn ases(&self) -> Vec<f64> {
        self.sigma.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect()
    }
}

fn validate_fit_data(data: &[CaseRecord]) -> Result<usize> {
    let d = match data.first() {
        Some(c) => c.x().len(),
        None => return Err(Error::InsufficientData("no cases".into())),
    };
    let mut prev = 0usize;
    for c in data {
        if c.x().len() != d {
            return Err(Error::Dimension(format!(
                "case {} has {} covariates, expected {}",
                c.index(),
                c.x().len(),
                d
            )));
        }
        if c.index() <= prev {
            return Err(Error::InvalidData(format!(
                "case indices must be strictly increasing (saw {} after {})",
                c.index(),
                prev
            )));
        }
        prev = c.index();
    }
    Ok(d)
}

/// Solves the weighted score system for (γ, η, β) by Newton iteration.
///
/// The iteration runs in (ln γ, ln η, β) so no step can leave the
/// positivity domain; convergence is judged on the natural-scale score.
/// Steps are halved until the weighted log-likelihood does not decrease,
/// and the Newton system gets a diagonal (Levenberg-style) shift whenever
/// the reparameterized Hessian is indefinite or its condition estimate
/// exceeds `opts.cond_limit`.
///
/// Requires t ≥ d + 3 cases. Without `init`, starts from the
/// exponential-model method of moments: η = 1, β = 0,
/// γ = 1/weighted-mean(y). Sequential callers should warm-start from the
/// previous fit.
pub fn fit_wee(
    data: &[CaseRecord],
    lambda: f64,
    init: Option<&WeibullRegParams>,
    opts: &SolverOptions,
) -> Result<FitResult> {
    let d = validate_fit_data(data)?;
    let t = data.len();
    let n_min = d + 3;
    if t < n_min {
        return Err(Error::InsufficientData(format!(
            "need at least {n_min} cases for {d} covariates, got {t}"
        )));
    }
    let w = weights(t, lambda)?;
    let n = d + 2;

    let start = match init {
        Some(p) => {
            if p.dim() != d {
                return Err(Error::Dimension(format!(
                    "initial parameters have {} covariates, data has {d}",
                    p.dim()
                )));
            }
            p.clone()
        }
        None => {
            let wsum: f64 = w.as_slice().iter().sum();
            let wy: f64 = data.iter().zip(w.as_slice()).map(|(c, &wi)| wi * c.y()).sum();
            WeibullRegParams::new(wsum / wy, 1.0, vec![0.0; d])?
        }
    };

    // iterate z = (ln γ, ln η, β)
    let mut z = DVector::zeros(n);
    z[0] = start.gamma().ln();
    z[1] = start.eta().ln();
    for j in 0..d {
        z[2 + j] = start.beta()[j];
    }

    let params_at = |z: &DVector<f64>| -> Result<WeibullRegParams> {
        WeibullRegParams::new(z[0].exp(), z[1].exp(), z.as_slice()[2..].to_vec())
    };

    let mut params = params_at(&z)?;
    let mut ll = loglik_raw(&params, data, &w)?;
    if !ll.is_finite() {
        return Err(Error::Numerical("log-likelihood not finite at the start".into()));
    }
    let mut q = score(&params, data, &w)?;
    let mut iterations = 0;
    let mut converged = q.amax() <= opts.tol;

    while !converged && iterations < opts.max_iter {
        iterations += 1;
        let h = observed_hessian(&params, data, &w)?;

        // chain rule to the log scale: J = diag(γ, η, 1, ..)
        let gamma = params.gamma();
        let eta = params.eta();
        let mut scale = DVector::from_element(n, 1.0);
        scale[0] = gamma;
        scale[1] = eta;
        let mut hz = DMatrix::zeros(n, n);
        for r in 0..n {
            for c in 0..n {
                hz[(r, c)] = h[(r, c)] * scale[r] * scale[c];
            }
        }
        hz[(0, 0)] += gamma * q[0];
        hz[(1, 1)] += eta * q[1];
        let qz = {
            let mut v = q.clone();
            v[0] *= gamma;
            v[1] *= eta;
            v
        };

        // Newton direction, with a diagonal shift when hz is indefinite or
        // near-singular. hz must be negative definite for an ascent step.
        let eig = hz.symmetric_eigen();
        let max_abs = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if max_abs == 0.0 || !max_abs.is_finite() {
            return Err(Error::Numerical("degenerate Hessian in Newton step".into()));
        }
        let floor = max_abs / opts.cond_limit;
        let lam_max = eig.eigenvalues.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let tau = if lam_max > -floor { lam_max + floor } else { 0.0 };
        let step = {
            let v = &eig.eigenvectors;
            let inv = DMatrix::from_diagonal(&eig.eigenvalues.map(|e| 1.0 / (e - tau)));
            -(v * inv * v.transpose()) * &qz
        };

        // halve until the weighted log-likelihood does not decrease; the
        // relative slack keeps rounding noise from rejecting the tiny final
        // Newton steps, whose true likelihood change is below one ulp
        let slack = 1e-12 * (1.0 + ll.abs());
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            let z_trial = &z + step.scale(alpha);
            if let Ok(trial) = params_at(&z_trial) {
                if let Ok(ll_trial) = loglik_raw(&trial, data, &w) {
                    if ll_trial.is_finite() && ll_trial >= ll - slack {
                        z = z_trial;
                        params = trial;
                        ll = ll_trial;
                        accepted = true;
                        break;
                    }
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            // numerically stationary; converged iff the score already says so
            break;
        }
        q = score(&params, data, &w)?;
        converged = q.amax() <= opts.tol;
    }

    let gam = expected_hessian(&params, data, &w)?;
    let om = information_matrix(&params, data, &w)?;
    let sigma = sandwich_cov(&gam, &om)?;

    Ok(FitResult {
        params,
        sigma,
        score_norm: q.amax(),
        converged,
        iterations,
        n_cases: t,
        lambda,
    })
}
