//! Sequential learning-curve assessment.
//!
//! After each new case i the model is refit on cases 1..i with weights(i, λ)
//! and three quantities are reported at a reference covariate vector: the
//! mean operative time μ̂_i(x), the relative risk R̂_i(x) against the
//! standard, and the CPM with its transformed interval. Expertise is called
//! the first time the CPM point estimate holds at or above the cutoff.
//!
//! Early cases cannot support a d+2 parameter fit; points before the
//! warm-up n0 are reported as not evaluable rather than extrapolated.

use crate::cpm::{aci_linear, cpm_aci, sigma_mu, sigma_r, sigma_r_joint, CpmConfig, IntervalEstimate, Standard};
use crate::error::{Error, Result};
use crate::model::{CaseRecord, WeibullRegParams};
use crate::wee::{fit_wee, SolverOptions};

/// One case's worth of assessment output. The intervals are present
/// exactly when `fit_ok` is true.
#[derive(Debug, Clone)]
pub struct SlcaPoint {
    pub index: usize,
    pub fit_ok: bool,
    /// Mean operative time at x_eval, in the data's time unit.
    pub mu: Option<IntervalEstimate>,
    /// Relative risk against the standard.
    pub r: Option<IntervalEstimate>,
    /// CPM with its log-log-transformed interval.
    pub cpm: Option<IntervalEstimate>,
    /// True when the CPM point estimate was clamped before transforming.
    pub clamped: bool,
}

/// The full assessment series for one trainee at one covariate vector.
#[derive(Debug, Clone)]
pub struct SlcaSeries {
    pub x_eval: Vec<f64>,
    pub lambda: f64,
    pub cfg: CpmConfig,
    /// One point per case, ordered by index.
    pub points: Vec<SlcaPoint>,
    /// First index where the CPM point estimate reached the cutoff
    /// (persistence 1); `None` if it never did.
    pub expertise_time: Option<usize>,
    /// True when the fit at the final case failed or did not converge.
    pub last_fit_failed: bool,
}

/// Runs the sequential assessment over a case stream.
///
/// For every i ≥ n0 the model is refit on the first i cases, warm-started
/// from the last successful fit. A fit that fails or does not converge
/// marks that point `fit_ok = false` and the series continues; if that
/// happens at the final case the series carries `last_fit_failed = true`.
///
/// When the standard is [`Standard::Estimated`], the R and CPM standard
/// errors include the standard cohort's estimation uncertainty through the
/// block-diagonal joint covariance; μ_S(x) itself uses the standard's point
/// estimates.
pub fn run_slca(
    cases: &[CaseRecord],
    standard: Standard<'_>,
    lambda: f64,
    cfg: &CpmConfig,
    x_eval: &[f64],
    n0: usize,
) -> Result<SlcaSeries> {
    let d = match cases.first() {
        Some(c) => c.x().len(),
        None => return Err(Error::InsufficientData("no cases".into())),
    };
    if n0 < d + 3 {
        return Err(Error::Domain(format!(
            "warm-up n0 must be at least d + 3 = {}, got {n0}",
            d + 3
        )));
    }
    if standard.params().dim() != d {
        return Err(Error::Dimension(format!(
            "standard model has {} covariates, data has {d}",
            standard.params().dim()
        )));
    }
    if x_eval.len() != d {
        return Err(Error::Dimension(format!(
            "x_eval has {} entries, data has {d} covariates",
            x_eval.len()
        )));
    }

    let opts = SolverOptions::default();
    let mut warm: Option<WeibullRegParams> = None;
    let mut points = Vec::with_capacity(cases.len());
    let mut last_fit_failed = false;

    for i in 1..=cases.len() {
        let index = cases[i - 1].index();
        if i < n0 {
            points.push(SlcaPoint {
                index,
                fit_ok: false,
                mu: None,
                r: None,
                cpm: None,
                clamped: false,
            });
            continue;
        }
        let evaluated = fit_wee(&cases[..i], lambda, warm.as_ref(), &opts)
            .ok()
            .filter(|f| f.converged)
            .and_then(|fit| {
                let metrics = (|| -> Result<SlcaPoint> {
                    let mu_hat = fit.params.rmot(x_eval)?;
                    let mu = aci_linear(mu_hat, sigma_mu(&fit, x_eval)?, cfg.alpha())?;
                    let r_hat = fit.params.relative_risk(standard.params(), x_eval)?;
                    let se_r = match standard {
                        Standard::Known(p) => sigma_r(&fit, p, x_eval)?,
                        Standard::Estimated(fs) => sigma_r_joint(&fit, fs, x_eval)?,
                    };
                    let r = aci_linear(r_hat, se_r, cfg.alpha())?;
                    let c = cpm_aci(&fit, standard, x_eval, cfg)?;
                    Ok(SlcaPoint {
                        index,
                        fit_ok: true,
                        mu: Some(mu),
                        r: Some(r),
                        cpm: Some(c.interval),
                        clamped: c.clamped,
                    })
                })();
                metrics.ok().map(|p| (fit.params.clone(), p))
            });
        match evaluated {
            Some((params, point)) => {
                warm = Some(params);
                points.push(point);
            }
            None => {
                if i == cases.len() {
                    last_fit_failed = true;
                }
                points.push(SlcaPoint {
                    index,
                    fit_ok: false,
                    mu: None,
                    r: None,
                    cpm: None,
                    clamped: false,
                });
            }
        }
    }

    let expertise = expertise_time(&points, cfg.cutoff(), 1);
    Ok(SlcaSeries {
        x_eval: x_eval.to_vec(),
        lambda,
        cfg: cfg.clone(),
        points,
        expertise_time: expertise,
        last_fit_failed,
    })
}

/// First index whose CPM point estimate reaches `cutoff` and holds there
/// for `persistence` consecutive evaluated points. Points that were not
/// evaluable are skipped, not counted as interruptions. A persistence of 0
/// is treated as 1.
pub fn expertise_time(points: &[SlcaPoint], cutoff: f64, persistence: usize) -> Option<usize> {
    let persistence = persistence.max(1);
    let mut run_start: Option<usize> = None;
    let mut run_len = 0usize;
    for p in points.iter().filter(|p| p.fit_ok) {
        let c = match &p.cpm {
            Some(iv) => iv.point,
            None => continue,
        };
        if c >= cutoff {
            if run_start.is_none() {
                run_start = Some(p.index);
            }
            run_len += 1;
            if run_len >= persistence {
                return run_start;
            }
        } else {
            run_start = None;
            run_len = 0;
        }
    }
    None
}
