//! The risk-adjusted Weibull outcome model.
//!
//! Operative time Y given a risk-factor vector x follows a Weibull law with
//! shape η and rate θ = γ·exp(β'x), so the density is
//! θ η y^{η−1} exp(−θ y^η). The mean under this model,
//! μ(x) = Γ(1/η + 1) · γ^{−1/η} · exp(−β'x / η), is the risk-adjusted mean
//! operative time; the ratio of two such means is the relative risk used to
//! compare a trainee against a performance standard.
//!
//! There is no implicit intercept: β'x is exactly the dot product over the
//! supplied covariates, and γ carries the baseline. An intercept column
//! would be confounded with γ.

use crate::error::{Error, Result};
use crate::specialmath::ln_gamma;

/// Parameter triple (γ, η, β) of the risk-adjusted Weibull model.
///
/// Immutable after construction; `new` rejects non-positive γ or η and
/// non-finite coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct WeibullRegParams {
    gamma: f64,
    eta: f64,
    beta: Vec<f64>,
}

impl WeibullRegParams {
    pub fn new(gamma: f64, eta: f64, beta: Vec<f64>) -> Result<Self> {
        if !gamma.is_finite() || gamma <= 0.0 {
            return Err(Error::Domain(format!("gamma must be positive, got {gamma}")));
        }
        if !eta.is_finite() || eta <= 0.0 {
            return Err(Error::Domain(format!("eta must be positive, got {eta}")));
        }
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::Domain("beta entries must be finite".into()));
        }
        Ok(Self { gamma, eta, beta })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    /// Number of covariates d. Zero means no risk adjustment (β'x ≡ 0).
    pub fn dim(&self) -> usize {
        self.beta.len()
    }

    /// Linear predictor β'x.
    pub fn linear_predictor(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.beta.len() {
            return Err(Error::Dimension(format!(
                "covariate vector has length {}, model expects {}",
                x.len(),
                self.beta.len()
            )));
        }
        Ok(self.beta.iter().zip(x).map(|(b, v)| b * v).sum())
    }

    /// Rate parameter θ = γ·exp(β'x).
    pub fn rate(&self, x: &[f64]) -> Result<f64> {
        Ok(self.gamma * self.linear_predictor(x)?.exp())
    }

    /// Conditional density of Y given x.
    pub fn pdf(&self, y: f64, x: &[f64]) -> Result<f64> {
        if !y.is_finite() || y <= 0.0 {
            return Err(Error::Domain(format!("pdf requires y > 0, got {y}")));
        }
        let theta = self.rate(x)?;
        Ok(theta * self.eta * y.powf(self.eta - 1.0) * (-theta * y.powf(self.eta)).exp())
    }

    /// Risk-adjusted mean operative time μ(x) = Γ(1/η + 1)·γ^{−1/η}·e^{−β'x/η}.
    ///
    /// Evaluated on the log scale so large |β'x| cannot overflow the
    /// intermediate powers.
    pub fn rmot(&self, x: &[f64]) -> Result<f64> {
        let bx = self.linear_predictor(x)?;
        let lg = ln_gamma(1.0 / self.eta + 1.0)?;
        Ok((lg - (self.gamma.ln() + bx) / self.eta).exp())
    }

    /// Standard deviation of Y given x:
    /// sqrt(Γ(2/η + 1)/θ^{2/η} − μ(x)²).
    pub fn sd(&self, x: &[f64]) -> Result<f64> {
        let theta = self.rate(x)?;
        let mu = self.rmot(x)?;
        let m2 = (ln_gamma(2.0 / self.eta + 1.0)? - 2.0 / self.eta * theta.ln()).exp();
        let var = m2 - mu * mu;
        if var <= 0.0 {
            return Err(Error::Numerical(format!(
                "variance evaluated non-positive ({var}); parameters too extreme for f64"
            )));
        }
        Ok(var.sqrt())
    }

    /// Inverse-CDF draw: y = (−ln u / θ)^{1/η} for u uniform on the open (0, 1).
    pub fn sample(&self, x: &[f64], u: f64) -> Result<f64> {
        if !u.is_finite() || u <= 0.0 || u >= 1.0 {
            return Err(Error::Domain(format!("sample requires u in (0, 1), got {u}")));
        }
        let theta = self.rate(x)?;
        Ok((-u.ln() / theta).powf(1.0 / self.eta))
    }

    /// Relative risk R(x): this model's mean over the standard's mean at x.
    /// One means equal expected performance; above one means slower.
    pub fn relative_risk(&self, standard: &Self, x: &[f64]) -> Result<f64> {
        if self.dim() != standard.dim() {
            return Err(Error::Dimension(format!(
                "parameter sets disagree on covariate count: {} vs {}",
                self.dim(),
                standard.dim()
            )));
        }
        Ok(self.rmot(x)? / standard.rmot(x)?)
    }
}

/// One surgery: the case number (a proxy for accumulated experience), the
/// operative time in hours, and the patient's risk factors.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseRecord {
    index: usize,
    y: f64,
    x: Vec<f64>,
}

impl CaseRecord {
    pub fn new(index: usize, y: f64, x: Vec<f64>) -> Result<Self> {
        if index == 0 {
            return Err(Error::Domain("case index must be positive".into()));
        }
        if !y.is_finite() || y <= 0.0 {
            return Err(Error::Domain(format!("case {index}: y must be positive, got {y}")));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("case {index}: covariates must be finite")));
        }
        Ok(Self { index, y, x })
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }
}
