//! Comparative probability metrics for relative performance.
//!
//! The relative risk R(x) = μ_N(x)/μ_S(x) compares a trainee's mean
//! operative time against a standard. Treating R̂ as normal with delta-method
//! standard error σ_R, the comparative probability metric is
//!
//! ```text
//! CPM = Φ((δ_U − R̂)/σ_R) − Φ((δ_L − R̂)/σ_R)
//! ```
//!
//! the probability mass the estimate places on the clinically acceptable
//! band (δ_L, δ_U). Two stock bands: practical adequacy (PA) uses
//! δ_L = 1/(1+ε), δ_U = 1+ε; practical noninferiority (PN) uses δ_L = 0
//! with the same upper bound.
//!
//! Confidence intervals for μ and R are linear ACIs; the CPM interval is
//! built on the ln(−ln·) scale and back-transformed so it stays inside
//! (0, 1).

use crate::error::{Error, Result};
use crate::model::WeibullRegParams;
use crate::specialmath::{digamma, std_normal_cdf, std_normal_quantile};
use crate::wee::FitResult;
use nalgebra::{DMatrix, DVector};

/// Which stock band produced a [`CpmConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CpmKind {
    Pa,
    Pn,
    Custom,
}

/// Acceptance band and decision settings for the CPM.
#[derive(Debug, Clone)]
pub struct CpmConfig {
    delta_l: f64,
    delta_u: f64,
    epsilon: Option<f64>,
    kind: CpmKind,
    cutoff: f64,
    alpha: f64,
}

impl CpmConfig {
    /// Practical adequacy: δ_L = 1/(1+ε), δ_U = 1+ε.
    pub fn pa(epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        Ok(Self {
            delta_l: 1.0 / (1.0 + epsilon),
            delta_u: 1.0 + epsilon,
            epsilon: Some(epsilon),
            kind: CpmKind::Pa,
            cutoff: 0.95,
            alpha: 0.05,
        })
    }

    /// Practical noninferiority: δ_L = 0, δ_U = 1+ε.
    pub fn pn(epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        Ok(Self {
            delta_l: 0.0,
            delta_u: 1.0 + epsilon,
            epsilon: Some(epsilon),
            kind: CpmKind::Pn,
            cutoff: 0.95,
            alpha: 0.05,
        })
    }

    /// Arbitrary band 0 ≤ δ_L < δ_U (δ_U = +∞ admitted for one-sided
    /// lower metrics).
    pub fn custom(delta_l: f64, delta_u: f64) -> Result<Self> {
        if delta_l.is_nan() || delta_l < 0.0 {
            return Err(Error::Domain(format!("delta_l must be >= 0, got {delta_l}")));
        }
        if delta_u.is_nan() || delta_u <= delta_l {
            return Err(Error::Domain(format!(
                "need delta_l < delta_u, got [{delta_l}, {delta_u}]"
            )));
        }
        Ok(Self {
            delta_l,
            delta_u,
            epsilon: None,
            kind: CpmKind::Custom,
            cutoff: 0.95,
            alpha: 0.05,
        })
    }

    pub fn with_cutoff(mut self, cutoff: f64) -> Result<Self> {
        if !(cutoff > 0.0 && cutoff < 1.0) {
            return Err(Error::Domain(format!("cutoff must lie in (0,1), got {cutoff}")));
        }
        self.cutoff = cutoff;
        Ok(self)
    }

    pub fn with_alpha(mut self, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Domain(format!("alpha must lie in (0,1), got {alpha}")));
        }
        self.alpha = alpha;
        Ok(self)
    }

    pub fn delta_l(&self) -> f64 {
        self.delta_l
    }

    pub fn delta_u(&self) -> f64 {
        self.delta_u
    }

    /// The clinical margin for PA/PN bands; `None` for custom bands.
    pub fn epsilon(&self) -> Option<f64> {
        self.epsilon
    }

    pub fn kind(&self) -> CpmKind {
        self.kind
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::Domain(format!(
            "clinical margin must be a positive real, got {epsilon}"
        )));
    }
    Ok(())
}

/// A point estimate with a two-sided confidence interval at `level`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalEstimate {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
}

/// CPM interval plus the clamp diagnostic: `clamped` means the point
/// estimate sat outside [1e-12, 1−1e-12] and was pulled in before the
/// ln(−ln·) transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CpmInterval {
    pub interval: IntervalEstimate,
    pub clamped: bool,
}

/// The comparison standard: either fixed parameters or a fitted cohort
/// whose estimation uncertainty should propagate into R and CPM.
#[derive(Debug, Clone, Copy)]
pub enum Standard<'a> {
    Known(&'a WeibullRegParams),
    Estimated(&'a FitResult),
}

impl<'a> Standard<'a> {
    pub fn params(&self) -> &'a WeibullRegParams {
        match self {
            Standard::Known(p) => p,
            Standard::Estimated(f) => &f.params,
        }
    }
}

/// CPM point value Φ((δ_U − r̂)/σ_R) − Φ((δ_L − r̂)/σ_R).
pub fn cpm_point(r_hat: f64, sigma_r: f64, cfg: &CpmConfig) -> Result<f64> {
    if !(r_hat.is_finite() && r_hat > 0.0) {
        return Err(Error::Domain(format!("relative risk must be positive, got {r_hat}")));
    }
    if !(sigma_r.is_finite() && sigma_r > 0.0) {
        return Err(Error::Domain(format!("sigma_r must be positive, got {sigma_r}")));
    }
    let hi = std_normal_cdf((cfg.delta_u - r_hat) / sigma_r)?;
    let lo = std_normal_cdf((cfg.delta_l - r_hat) / sigma_r)?;
    Ok((hi - lo).clamp(0.0, 1.0))
}

/// Gradient of μ(x) with respect to (γ, η, β), returned with μ itself:
/// ∂μ/∂γ = −μ/(ηγ), ∂μ/∂η = μ(ln γ + β'x − ψ(1+1/η))/η², ∂μ/∂β_k = −x_k μ/η.
pub fn rmot_gradient(params: &WeibullRegParams, x: &[f64]) -> Result<(f64, DVector<f64>)> {
    let mu = params.rmot(x)?;
    let gamma = params.gamma();
    let eta = params.eta();
    let bx = params.linear_predictor(x)?;
    let d = params.dim();
    let mut g = DVector::zeros(d + 2);
    g[0] = -mu / (eta * gamma);
    g[1] = mu * (gamma.ln() + bx - digamma(1.0 + 1.0 / eta)?) / (eta * eta);
    for (k, xk) in x.iter().enumerate() {
        g[2 + k] = -xk * mu / eta;
    }
    Ok((mu, g))
}

/// sqrt of the delta-method quadratic form, with the spec'd tolerance for
/// tiny negative values from rounding.
fn quad_form_se(g: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<f64> {
    if sigma.nrows() != g.len() || sigma.ncols() != g.len() {
        return Err(Error::Dimension(format!(
            "gradient has {} entries but covariance is {}x{}",
            g.len(),
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    let v = (g.transpose() * sigma * g)[(0, 0)];
    if v < -1e-10 {
        return Err(Error::Numerical(format!(
            "covariance quadratic form is negative ({v:.3e})"
        )));
    }
    Ok(v.max(0.0).sqrt())
}

fn require_converged(fit: &FitResult, which: &str) -> Result<()> {
    if !fit.converged {
        return Err(Error::Domain(format!(
            "{which} fit has not converged; refusing delta-method standard errors"
        )));
    }
    Ok(())
}

/// Delta-method standard error of μ̂(x) from a fitted model.
pub fn sigma_mu(fit: &FitResult, x: &[f64]) -> Result<f64> {
    require_converged(fit, "the")?;
    let (_, g) = rmot_gradient(&fit.params, x)?;
    quad_form_se(&g, &fit.sigma)
}

/// Delta-method standard error of R̂(x) with the standard's parameters
/// treated as fixed.
pub fn sigma_r(fit: &FitResult, standard: &WeibullRegParams, x: &[f64]) -> Result<f64> {
    require_converged(fit, "the")?;
    if fit.params.dim() != standard.dim() {
        return Err(Error::Dimension(format!(
            "trainee model has {} covariates, standard has {}",
            fit.params.dim(),
            standard.dim()
        )));
    }
    let mu_s = standard.rmot(x)?;
    let (_, g_n) = rmot_gradient(&fit.params, x)?;
    quad_form_se(&g_n.scale(1.0 / mu_s), &fit.sigma)
}

/// Delta-method standard error of R̂(x) when the standard is itself a fit:
/// the gradient stacks (trainee, standard) blocks and the covariance is
/// block-diagonal diag(Σ_N, Σ_S).
pub fn sigma_r_joint(fit_n: &FitResult, fit_s: &FitResult, x: &[f64]) -> Result<f64> {
    require_converged(fit_n, "the trainee")?;
    require_converged(fit_s, "the standard")?;
    let d = fit_n.params.dim();
    if fit_s.params.dim() != d {
        return Err(Error::Dimension(format!(
            "trainee model has {d} covariates, standard has {}",
            fit_s.params.dim()
        )));
    }
    let n = d + 2;
    let (mu_n, g_n) = rmot_gradient(&fit_n.params, x)?;
    let (mu_s, g_s) = rmot_gradient(&fit_s.params, x)?;
    let mut g = DVector::zeros(2 * n);
    for k in 0..n {
        g[k] = g_n[k] / mu_s;
        g[n + k] = -mu_n / (mu_s * mu_s) * g_s[k];
    }
    let mut sigma = DMatrix::zeros(2 * n, 2 * n);
    sigma.view_mut((0, 0), (n, n)).copy_from(&fit_n.sigma);
    sigma.view_mut((n, n), (n, n)).copy_from(&fit_s.sigma);
    quad_form_se(&g, &sigma)
}

/// Two-sided linear ACI: point ± z_{1−α/2}·σ.
pub fn aci_linear(point: f64, sigma: f64, alpha: f64) -> Result<IntervalEstimate> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::Domain(format!("sigma must be nonnegative, got {sigma}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha must lie in (0,1), got {alpha}")));
    }
    let z = std_normal_quantile(1.0 - alpha / 2.0)?;
    Ok(IntervalEstimate {
        point,
        lower: point - z * sigma,
        upper: point + z * sigma,
        level: 1.0 - alpha,
    })
}

const CPM_CLAMP: f64 = 1e-12;

/// CPM interval on the ln(−ln·) scale, back-transformed.
///
/// Ψ = ln(−ln CPM) is treated as normal; its standard error comes from the
/// delta method, with ∂Ψ/∂parameter computed by central finite differences
/// of the whole map parameters → R → σ_R → CPM → Ψ while Σ stays fixed at
/// the fitted value. Because the transform is decreasing, the back-transform
/// swaps the limits: L = exp(−exp(Ψ_hi)), U = exp(−exp(Ψ_lo)).
///
/// A point estimate outside [1e-12, 1−1e-12] is clamped before the
/// transform and the result is flagged.
pub fn cpm_aci(
    fit: &FitResult,
    standard: Standard<'_>,
    x: &[f64],
    cfg: &CpmConfig,
) -> Result<CpmInterval> {
    require_converged(fit, "the trainee")?;
    if let Standard::Estimated(fs) = standard {
        require_converged(fs, "the standard")?;
    }
    let d = fit.params.dim();
    if standard.params().dim() != d {
        return Err(Error::Dimension(format!(
            "trainee model has {d} covariates, standard has {}",
            standard.params().dim()
        )));
    }
    let n = d + 2;

    // free parameter vector: trainee (γ, η, β), then the standard's block
    // when it is estimated
    let pack = |p: &WeibullRegParams, out: &mut Vec<f64>| {
        out.push(p.gamma());
        out.push(p.eta());
        out.extend_from_slice(p.beta());
    };
    let mut theta = Vec::with_capacity(2 * n);
    pack(&fit.params, &mut theta);
    let joint = matches!(standard, Standard::Estimated(_));
    if joint {
        pack(standard.params(), &mut theta);
    }

    let sigma_full = if joint {
        let fs = match standard {
            Standard::Estimated(f) => f,
            Standard::Known(_) => unreachable!(),
        };
        let mut s = DMatrix::zeros(2 * n, 2 * n);
        s.view_mut((0, 0), (n, n)).copy_from(&fit.sigma);
        s.view_mut((n, n), (n, n)).copy_from(&fs.sigma);
        s
    } else {
        fit.sigma.clone()
    };

    let unpack = |v: &[f64]| -> Result<(WeibullRegParams, WeibullRegParams)> {
        let p_n = WeibullRegParams::new(v[0], v[1], v[2..n].to_vec())?;
        let p_s = if joint {
            WeibullRegParams::new(v[n], v[n + 1], v[n + 2..2 * n].to_vec())?
        } else {
            standard.params().clone()
        };
        Ok((p_n, p_s))
    };

    // the full map at a parameter vector; Σ stays at the fitted value
    let eval_cpm = |v: &[f64]| -> Result<f64> {
        let (p_n, p_s) = unpack(v)?;
        let r = p_n.relative_risk(&p_s, x)?;
        let (mu_n, g_n) = rmot_gradient(&p_n, x)?;
        let mu_s = p_s.rmot(x)?;
        let se = if joint {
            let (_, g_s) = rmot_gradient(&p_s, x)?;
            let mut g = DVector::zeros(2 * n);
            for k in 0..n {
                g[k] = g_n[k] / mu_s;
                g[n + k] = -mu_n / (mu_s * mu_s) * g_s[k];
            }
            quad_form_se(&g, &sigma_full)?
        } else {
            quad_form_se(&g_n.scale(1.0 / mu_s), &sigma_full)?
        };
        if se == 0.0 {
            // degenerate covariance: CPM is the exact indicator
            return Ok(if cfg.delta_l < r && r < cfg.delta_u { 1.0 } else { 0.0 });
        }
        cpm_point(r, se, cfg)
    };
    let psi_of = |c: f64| (-(c.clamp(CPM_CLAMP, 1.0 - CPM_CLAMP)).ln()).ln();

    let cpm_raw = eval_cpm(&theta)?;
    let clamped = !(CPM_CLAMP..=1.0 - CPM_CLAMP).contains(&cpm_raw);
    let cpm_hat = cpm_raw.clamp(CPM_CLAMP, 1.0 - CPM_CLAMP);
    let psi_hat = psi_of(cpm_hat);

    // ∂Ψ/∂θ_k by central differences, one-sided at a positivity boundary
    let n_free = theta.len();
    let mut g_psi = DVector::zeros(n_free);
    for k in 0..n_free {
        let h = 1e-5 * theta[k].abs().max(1.0);
        let mut up = theta.clone();
        up[k] += h;
        let mut dn = theta.clone();
        dn[k] -= h;
        let f_up = eval_cpm(&up).map(psi_of);
        let f_dn = eval_cpm(&dn).map(psi_of);
        g_psi[k] = match (f_up, f_dn) {
            (Ok(a), Ok(b)) => (a - b) / (2.0 * h),
            (Ok(a), Err(_)) => (a - psi_hat) / h,
            (Err(_), Ok(b)) => (psi_hat - b) / h,
            (Err(e), Err(_)) => return Err(e),
        };
    }
    let sigma_psi = quad_form_se(&g_psi, &sigma_full)?;

    let z = std_normal_quantile(1.0 - cfg.alpha / 2.0)?;
    let psi_lo = psi_hat - z * sigma_psi;
    let psi_hi = psi_hat + z * sigma_psi;
    // exp(−exp(ψ)) lies strictly inside (0, 1) for finite ψ; the clamp only
    // repairs f64 under/overflow at extreme ψ and keeps the point inside
    let lower = (-(psi_hi.exp())).exp().clamp(CPM_CLAMP, cpm_hat);
    let upper = (-(psi_lo.exp())).exp().clamp(cpm_hat, 1.0 - CPM_CLAMP);

    Ok(CpmInterval {
        interval: IntervalEstimate {
            point: cpm_hat,
            lower,
            upper,
            level: 1.0 - cfg.alpha,
        },
        clamped,
    })
}
