//! Risk-adjusted LC-CUSUM for detecting attained competence.
//!
//! Against a standard model, each case yields a standardized residual
//!
//! ```text
//! v_i = (y_i − μ_S(x)(1 + ε/2)) / SD(Y_S | x)
//! ```
//!
//! centered at the midpoint between adequate and marginally inadequate
//! performance. The monitoring statistic accumulates only unfavorable
//! evidence downward, s_i = min{0, s_{i−1} + v_i}, and competence is
//! signaled when |s_i| exceeds the barrier h. The statistic standardizes
//! every case against the fixed reference covariate x, exactly as the
//! adapted form is stated.

use crate::error::{Error, Result};
use crate::model::{CaseRecord, WeibullRegParams};

/// A completed LC-CUSUM run. `s[0]` is the starting value 0, so `s[i]` is
/// the statistic after case i.
#[derive(Debug, Clone)]
pub struct CusumTrace {
    pub s: Vec<f64>,
    /// Index of the first case with |s_i| > h; `None` if the barrier was
    /// never crossed. The trace continues past the signal.
    pub signal_index: Option<usize>,
    pub h: f64,
    pub epsilon: f64,
    pub x_eval: Vec<f64>,
}

/// Standardized residual of one outcome against the standard model at x.
pub fn residual(y: f64, standard: &WeibullRegParams, x: &[f64], epsilon: f64) -> Result<f64> {
    if !(y.is_finite() && y > 0.0) {
        return Err(Error::Domain(format!("operative time must be positive, got {y}")));
    }
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::Domain(format!(
            "clinical margin must be a positive real, got {epsilon}"
        )));
    }
    let mu = standard.rmot(x)?;
    let sd = standard.sd(x)?;
    Ok((y - mu * (1.0 + epsilon / 2.0)) / sd)
}

/// Runs the min-barrier recursion over a case stream.
///
/// Residuals are evaluated at the monitoring covariate `x_eval`; the cases
/// contribute their outcomes in order. The trace records every s_i and the
/// first barrier crossing.
pub fn run_lc_cusum(
    cases: &[CaseRecord],
    standard: &WeibullRegParams,
    epsilon: f64,
    h: f64,
    x_eval: &[f64],
) -> Result<CusumTrace> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::Domain(format!("barrier h must be positive, got {h}")));
    }
    // residual() revalidates per case; compute the reference level once
    let mu = standard.rmot(x_eval)?;
    let sd = standard.sd(x_eval)?;
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::Domain(format!(
            "clinical margin must be a positive real, got {epsilon}"
        )));
    }
    let center = mu * (1.0 + epsilon / 2.0);

    let mut s = Vec::with_capacity(cases.len() + 1);
    s.push(0.0);
    let mut signal_index = None;
    let mut cur = 0.0;
    for case in cases {
        let v = (case.y() - center) / sd;
        cur = (cur + v).min(0.0);
        s.push(cur);
        if signal_index.is_none() && cur.abs() > h {
            signal_index = Some(case.index());
        }
    }
    Ok(CusumTrace {
        s,
        signal_index,
        h,
        epsilon,
        x_eval: x_eval.to_vec(),
    })
}
