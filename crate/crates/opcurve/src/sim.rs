//! Monte-Carlo operating characteristics for the two detectors.
//!
//! A scenario fixes the standard model, the trainee's shape and
//! coefficients, a rate trajectory γ_N(i), and a covariate law. Streams are
//! simulated case by case; the detectors (sequential CPM assessment, or the
//! LC-CUSUM) watch each stream and the engine tallies the probability of a
//! false alarm under inadequate performance (PFA) and the probability of
//! successful detection within a window after performance becomes
//! noninferior (PSD).
//!
//! Replication r of a run seeded with `seed` always uses the stream derived
//! from `seed ^ r`, so results are identical at any parallelism level and
//! common random numbers make the empirical PFA exactly monotone in the
//! detection threshold, which the calibration bisection relies on.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cpm::{cpm_point, rmot_gradient, CpmConfig};
use crate::error::{Error, Result};
use crate::lccusum::run_lc_cusum;
use crate::model::{CaseRecord, WeibullRegParams};
use crate::specialmath::std_normal_quantile;
use crate::wee::{expected_hessian, fit_wee, weights, FitResult, SolverOptions};

/// Cases before this warm-up cannot signal in the sequential assessment;
/// matches the runner's default.
const SLCA_WARMUP: usize = 10;

/// The benchmark learning trajectory: γ_N starts at 0.05 and climbs by
/// 0.003 per case until it reaches the standard's 0.2 at case 51.
pub fn gamma_learning(i: usize) -> f64 {
    assert!(i >= 1, "case index starts at 1");
    if i >= 51 {
        0.2
    } else {
        0.05 + 0.003 * (i - 1) as f64
    }
}

/// Rate trajectory for the simulated trainee.
#[derive(Debug, Clone)]
pub enum GammaTrajectory {
    /// γ_N(i) ≡ value.
    Constant(f64),
    /// The benchmark learning path; see [`gamma_learning`].
    BenchmarkLearning,
}

impl GammaTrajectory {
    pub fn value(&self, i: usize) -> f64 {
        match self {
            GammaTrajectory::Constant(c) => *c,
            GammaTrajectory::BenchmarkLearning => gamma_learning(i),
        }
    }
}

/// A 1000-row empirical covariate pool matching the benchmark BMI
/// distribution: lower quartile 23, median 27, and a right-skewed upper
/// tail, realized as a shifted lognormal rounded to whole units and clamped
/// to the supported grid {13, …, 56}. Streams drawn from it reproduce the
/// benchmark operating characteristics; the uniform default does not, since
/// real casemix concentrates near the median.
pub fn bmi_reference_pool() -> Vec<Vec<f64>> {
    const SHIFT: f64 = 16.0;
    let mu = (27.0 - SHIFT).ln();
    // 0.6745 = standard normal upper quartile; anchors the 25th percentile
    let sigma = (mu - (23.0 - SHIFT).ln()) / 0.6745;
    (0..1000)
        .map(|k| {
            let p = (k as f64 + 0.5) / 1000.0;
            let z = std_normal_quantile(p).expect("p strictly inside (0,1)");
            vec![(SHIFT + (mu + sigma * z).exp()).round().clamp(13.0, 56.0)]
        })
        .collect()
}

/// Covariate law for simulated patients.
#[derive(Debug, Clone)]
pub enum CovariateSampler {
    /// One covariate drawn uniformly from the integer grid {lo, …, hi}.
    UniformInt { lo: i64, hi: i64 },
    /// Rows resampled with replacement from an empirical pool.
    Empirical(Vec<Vec<f64>>),
    /// The same covariates for every case.
    Constant(Vec<f64>),
}

impl CovariateSampler {
    pub fn dim(&self) -> usize {
        match self {
            CovariateSampler::UniformInt { .. } => 1,
            CovariateSampler::Empirical(rows) => rows.first().map_or(0, |r| r.len()),
            CovariateSampler::Constant(x) => x.len(),
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match self {
            CovariateSampler::UniformInt { lo, hi } => {
                vec![rng.random_range(*lo..=*hi) as f64]
            }
            CovariateSampler::Empirical(rows) => rows[rng.random_range(0..rows.len())].clone(),
            CovariateSampler::Constant(x) => x.clone(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            CovariateSampler::UniformInt { lo, hi } => {
                if lo > hi {
                    return Err(Error::Domain(format!("empty covariate grid {lo}..{hi}")));
                }
            }
            CovariateSampler::Empirical(rows) => {
                if rows.is_empty() {
                    return Err(Error::Domain("empirical covariate pool is empty".into()));
                }
                let d = rows[0].len();
                if rows.iter().any(|r| r.len() != d) {
                    return Err(Error::Dimension("ragged empirical covariate pool".into()));
                }
                if rows.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidData("non-finite covariate in pool".into()));
                }
            }
            CovariateSampler::Constant(x) => {
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidData("non-finite constant covariate".into()));
                }
            }
        }
        Ok(())
    }
}

/// Which performance regime a stream simulates. Inadequate mode freezes
/// γ_N at the trajectory's starting value; learning mode follows the
/// trajectory case by case.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Inadequate,
    Learning,
}

/// One complete simulation setting.
#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    /// Horizon: number of cases per stream.
    pub t: usize,
    pub standard: WeibullRegParams,
    /// Trainee shape; shared with the standard in the benchmark setup.
    pub eta_n: f64,
    pub beta_n: Vec<f64>,
    pub gamma_trajectory: GammaTrajectory,
    pub covariate_sampler: CovariateSampler,
    /// Covariate vector at which the detectors evaluate.
    pub x_eval: Vec<f64>,
    pub lambda: f64,
    pub epsilon: f64,
    /// Last case of the inadequate phase; detection windows start after it.
    pub change_index: usize,
}

impl ScenarioSpec {
    /// The benchmark simulation setting: t = 100, standard
    /// (γ=0.2, η=2, β=−0.05), shared trainee shape, learning trajectory,
    /// BMI drawn uniformly from {13, …, 56}, evaluation at x = 27,
    /// λ = 0.05, ε = 0.2, change after case 30.
    pub fn benchmark() -> Self {
        ScenarioSpec {
            t: 100,
            standard: WeibullRegParams::new(0.2, 2.0, vec![-0.05]).expect("valid constants"),
            eta_n: 2.0,
            beta_n: vec![-0.05],
            gamma_trajectory: GammaTrajectory::BenchmarkLearning,
            covariate_sampler: CovariateSampler::UniformInt { lo: 13, hi: 56 },
            x_eval: vec![27.0],
            lambda: 0.05,
            epsilon: 0.2,
            change_index: 30,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.t < 1 {
            return Err(Error::Domain("horizon t must be at least 1".into()));
        }
        if self.change_index > self.t {
            return Err(Error::Domain(format!(
                "change index {} exceeds horizon {}",
                self.change_index, self.t
            )));
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::Domain(format!(
                "smoothing constant must lie in (0, 1], got {}",
                self.lambda
            )));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::Domain(format!(
                "clinical margin must be positive, got {}",
                self.epsilon
            )));
        }
        if !(self.eta_n.is_finite() && self.eta_n > 0.0) {
            return Err(Error::Domain(format!(
                "trainee shape must be positive, got {}",
                self.eta_n
            )));
        }
        let d = self.standard.dim();
        if self.beta_n.len() != d
            || self.x_eval.len() != d
            || self.covariate_sampler.dim() != d
        {
            return Err(Error::Dimension(format!(
                "inconsistent covariate dimensions: standard {d}, trainee {}, x_eval {}, sampler {}",
                self.beta_n.len(),
                self.x_eval.len(),
                self.covariate_sampler.dim()
            )));
        }
        self.covariate_sampler.validate()?;
        for i in 1..=self.t {
            let g = self.gamma_trajectory.value(i);
            if !(g.is_finite() && g > 0.0) {
                return Err(Error::Domain(format!(
                    "trajectory gives nonpositive rate {g} at case {i}"
                )));
            }
        }
        Ok(())
    }

    fn gamma_at(&self, i: usize, mode: Mode) -> f64 {
        match mode {
            Mode::Inadequate => self.gamma_trajectory.value(1),
            Mode::Learning => self.gamma_trajectory.value(i),
        }
    }
}

fn draw_open_unit(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Simulates one case stream. Per case the covariates are drawn first,
/// then the outcome, so a fixed seed reproduces the stream exactly.
pub fn simulate_stream(spec: &ScenarioSpec, mode: Mode, seed: u64) -> Result<Vec<CaseRecord>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::with_capacity(spec.t);
    for i in 1..=spec.t {
        let x = spec.covariate_sampler.draw(&mut rng);
        let u = draw_open_unit(&mut rng);
        let params = WeibullRegParams::new(spec.gamma_at(i, mode), spec.eta_n, spec.beta_n.clone())?;
        let y = params.sample(&x, u)?;
        cases.push(CaseRecord::new(i, y, x)?);
    }
    Ok(cases)
}

/// Which monitoring procedure a run exercises. The threshold h means the
/// CPM cutoff for the sequential assessment and the barrier for the
/// LC-CUSUM.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Detector {
    Slca,
    LcCusum,
}

/// A Monte-Carlo probability with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OcEstimate {
    pub p: f64,
    pub se: f64,
    /// Denominator of the estimate.
    pub reps_effective: usize,
}

impl OcEstimate {
    fn from_counts(hits: usize, n: usize) -> Self {
        let p = hits as f64 / n as f64;
        OcEstimate {
            p,
            se: (p * (1.0 - p) / n as f64).sqrt(),
            reps_effective: n,
        }
    }
}

/// PSD estimates per window, with the early-signal bookkeeping.
///
/// Each window's probability is the fraction of all replications whose
/// first signal lands inside the window with a clean inadequate phase, so
/// the benchmark flat ceilings (windows past which nothing more is caught)
/// appear directly. The conditional version given a clean inadequate phase
/// is `p * reps / qualifying`.
#[derive(Debug, Clone)]
pub struct PsdEstimate {
    pub windows: BTreeMap<usize, OcEstimate>,
    /// Replications with no signal during the inadequate phase.
    pub qualifying: usize,
    /// Replications whose first signal came early; they can never count as
    /// a successful detection.
    pub excluded: usize,
}

/// Combined operating characteristics of one detector at one threshold.
#[derive(Debug, Clone)]
pub struct OcResult {
    pub detector: Detector,
    pub h: f64,
    pub reps: usize,
    pub pfa: OcEstimate,
    pub psd: PsdEstimate,
}

/// Running-chart standard error of R̂: delta method on the inverse of the
/// weighted expected information at the current fit. The chart tracks a
/// moving target, where this plain-information scale reproduces the
/// benchmark operating characteristics; the sandwich stays the reported
/// covariance of the estimator itself.
fn chart_sigma_r(
    fit: &FitResult,
    cases: &[CaseRecord],
    spec: &ScenarioSpec,
) -> Option<f64> {
    let w = weights(cases.len(), spec.lambda).ok()?;
    let neg_info = expected_hessian(&fit.params, cases, &w).ok()?;
    let var = (-neg_info).try_inverse()?;
    let (_, g) = rmot_gradient(&fit.params, &spec.x_eval).ok()?;
    let v = (g.transpose() * var * g)[(0, 0)];
    if v < -1e-10 {
        return None;
    }
    let mu_s = spec.standard.rmot(&spec.x_eval).ok()?;
    Some(v.max(0.0).sqrt() / mu_s)
}

/// First signal index of the chosen detector on one stream, or `None`.
fn first_signal(detector: Detector, spec: &ScenarioSpec, h: f64, cases: &[CaseRecord]) -> Option<usize> {
    match detector {
        Detector::LcCusum => run_lc_cusum(cases, &spec.standard, spec.epsilon, h, &spec.x_eval)
            .ok()
            .and_then(|trace| trace.signal_index),
        Detector::Slca => {
            let cfg = CpmConfig::pn(spec.epsilon).ok()?;
            let opts = SolverOptions::default();
            let mut warm: Option<WeibullRegParams> = None;
            for i in SLCA_WARMUP..=cases.len() {
                let Ok(fit) = fit_wee(&cases[..i], spec.lambda, warm.as_ref(), &opts) else {
                    continue;
                };
                if !fit.converged {
                    continue;
                }
                let point = fit
                    .params
                    .relative_risk(&spec.standard, &spec.x_eval)
                    .ok()
                    .and_then(|r| {
                        let se = chart_sigma_r(&fit, &cases[..i], spec)?;
                        if se > 0.0 {
                            cpm_point(r, se, &cfg).ok()
                        } else {
                            Some(if r < cfg.delta_u() { 1.0 } else { 0.0 })
                        }
                    });
                warm = Some(fit.params);
                match point {
                    Some(c) if c >= h => return Some(cases[i - 1].index()),
                    _ => {}
                }
            }
            None
        }
    }
}

fn check_threshold(h: f64) -> Result<()> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::Domain(format!("threshold h must be positive, got {h}")));
    }
    Ok(())
}

/// Signal index per replication, simulated in parallel. Replication r uses
/// the stream seeded with `seed ^ r`.
fn signals_per_rep(
    detector: Detector,
    spec: &ScenarioSpec,
    mode: Mode,
    h: f64,
    reps: usize,
    seed: u64,
) -> Result<Vec<Option<usize>>> {
    spec.validate()?;
    check_threshold(h)?;
    if reps < 1 {
        return Err(Error::Domain("need at least one replication".into()));
    }
    (0..reps)
        .into_par_iter()
        .map(|r| {
            let cases = simulate_stream(spec, mode, seed ^ r as u64)?;
            Ok(first_signal(detector, spec, h, &cases))
        })
        .collect()
}

/// Probability of a false alarm: the detector signals anywhere in an
/// inadequate-performance stream.
pub fn estimate_pfa(
    detector: Detector,
    spec: &ScenarioSpec,
    h: f64,
    reps: usize,
    seed: u64,
) -> Result<OcEstimate> {
    let signals = signals_per_rep(detector, spec, Mode::Inadequate, h, reps, seed)?;
    let hits = signals.iter().filter(|s| s.is_some()).count();
    Ok(OcEstimate::from_counts(hits, reps))
}

/// Probability of successful detection: the detector stays quiet through
/// the inadequate phase and then signals within the window after the
/// change. Replications that signal early can never detect successfully;
/// every window probability is a fraction of all replications.
pub fn estimate_psd(
    detector: Detector,
    spec: &ScenarioSpec,
    h: f64,
    reps: usize,
    windows: &[usize],
    seed: u64,
) -> Result<PsdEstimate> {
    for &w in windows {
        if spec.change_index + w > spec.t {
            return Err(Error::Domain(format!(
                "window {w} after change index {} exceeds horizon {}",
                spec.change_index, spec.t
            )));
        }
    }
    let signals = signals_per_rep(detector, spec, Mode::Learning, h, reps, seed)?;
    let excluded = signals
        .iter()
        .filter(|s| s.is_some_and(|i| i <= spec.change_index))
        .count();
    let qualifying = reps - excluded;
    if qualifying == 0 {
        return Err(Error::InsufficientData(format!(
            "all {excluded} replications signaled during the inadequate phase; nothing qualifies for PSD"
        )));
    }
    let mut map = BTreeMap::new();
    for &w in windows {
        let hits = signals
            .iter()
            .filter(|s| s.is_some_and(|i| i > spec.change_index && i <= spec.change_index + w))
            .count();
        map.insert(w, OcEstimate::from_counts(hits, reps));
    }
    Ok(PsdEstimate {
        windows: map,
        qualifying,
        excluded,
    })
}

/// PFA and PSD at one threshold, bundled for reporting.
pub fn run_oc(
    detector: Detector,
    spec: &ScenarioSpec,
    h: f64,
    reps: usize,
    windows: &[usize],
    seed: u64,
) -> Result<OcResult> {
    let pfa = estimate_pfa(detector, spec, h, reps, seed)?;
    let psd = estimate_psd(detector, spec, h, reps, windows, seed)?;
    Ok(OcResult {
        detector,
        h,
        reps,
        pfa,
        psd,
    })
}

/// Search range and budget for threshold calibration.
#[derive(Debug, Clone)]
pub struct CalibrationOptions {
    pub h_lo: f64,
    pub h_hi: f64,
    pub max_steps: usize,
}

impl CalibrationOptions {
    /// Sensible brackets per detector: the CUSUM barrier lives on (0, 30];
    /// the CPM cutoff lives inside (0, 1).
    pub fn default_for(detector: Detector) -> Self {
        match detector {
            Detector::LcCusum => CalibrationOptions {
                h_lo: 0.1,
                h_hi: 30.0,
                max_steps: 60,
            },
            Detector::Slca => CalibrationOptions {
                h_lo: 0.05,
                h_hi: 1.0 - 1e-9,
                max_steps: 60,
            },
        }
    }
}

/// A calibrated threshold with the PFA evidence that selected it.
#[derive(Debug, Clone)]
pub struct CalibrationResult {
    pub h: f64,
    pub pfa: OcEstimate,
    /// Every (h, PFA) evaluation in search order.
    pub trace: Vec<(f64, OcEstimate)>,
}

/// Bisects for a threshold whose PFA lands in `target` = (lo, hi).
///
/// Every evaluation reuses the same master seed, so the empirical PFA is a
/// deterministic nonincreasing step function of h and bisection is exact.
pub fn calibrate_h(
    detector: Detector,
    spec: &ScenarioSpec,
    target: (f64, f64),
    reps: usize,
    opts: &CalibrationOptions,
    seed: u64,
) -> Result<CalibrationResult> {
    let (t_lo, t_hi) = target;
    if !(0.0 < t_lo && t_lo < t_hi && t_hi < 1.0) {
        return Err(Error::Domain(format!(
            "target PFA range must satisfy 0 < lo < hi < 1, got ({t_lo}, {t_hi})"
        )));
    }
    if !(opts.h_lo > 0.0 && opts.h_lo < opts.h_hi) {
        return Err(Error::Domain(format!(
            "search bracket must satisfy 0 < h_lo < h_hi, got [{}, {}]",
            opts.h_lo, opts.h_hi
        )));
    }
    let mut trace = Vec::new();
    let eval = |h: f64, trace: &mut Vec<(f64, OcEstimate)>| -> Result<OcEstimate> {
        let e = estimate_pfa(detector, spec, h, reps, seed)?;
        trace.push((h, e));
        Ok(e)
    };

    let mut lo = opts.h_lo;
    let mut hi = opts.h_hi;
    let p_lo = eval(lo, &mut trace)?;
    if (t_lo..=t_hi).contains(&p_lo.p) {
        return Ok(CalibrationResult { h: lo, pfa: p_lo, trace });
    }
    if p_lo.p < t_lo {
        return Err(Error::Numerical(format!(
            "PFA at the loosest threshold h={lo} is already {:.4}, below the target ({t_lo}, {t_hi})",
            p_lo.p
        )));
    }
    let p_hi = eval(hi, &mut trace)?;
    if (t_lo..=t_hi).contains(&p_hi.p) {
        return Ok(CalibrationResult { h: hi, pfa: p_hi, trace });
    }
    if p_hi.p > t_hi {
        return Err(Error::Numerical(format!(
            "PFA at the strictest threshold h={hi} is still {:.4}, above the target ({t_lo}, {t_hi})",
            p_hi.p
        )));
    }
    for _ in 0..opts.max_steps {
        let mid = 0.5 * (lo + hi);
        let p = eval(mid, &mut trace)?;
        if (t_lo..=t_hi).contains(&p.p) {
            return Ok(CalibrationResult { h: mid, pfa: p, trace });
        }
        if p.p > t_hi {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let last = trace.last().map(|(h, e)| (*h, e.p)).unwrap_or((f64::NAN, f64::NAN));
    Err(Error::Numerical(format!(
        "calibration did not land in ({t_lo}, {t_hi}) within {} steps; bracket [{lo}, {hi}], last evaluation h={:.6} PFA={:.4}",
        opts.max_steps, last.0, last.1
    )))
}
