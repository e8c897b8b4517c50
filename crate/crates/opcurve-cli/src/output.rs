//! Result serialization: JSON reports, CSV series, and SVG plots.
//!
//! Every renderer is a pure function of its inputs with fixed-precision
//! or shortest-round-trip number formatting, so emitted files are
//! byte-identical across runs and platforms.

use std::fmt::Write as _;

use anyhow::Result;
use opcurve::cpm::{aci_linear, IntervalEstimate};
use opcurve::lccusum::{residual, CusumTrace};
use opcurve::model::{CaseRecord, WeibullRegParams};
use opcurve::sim::{CalibrationResult, Detector, GammaTrajectory, OcResult, ScenarioSpec};
use opcurve::slca::SlcaSeries;
use opcurve::wee::FitResult;
use serde::Serialize;

/// Pretty JSON with a trailing newline. Field order follows struct
/// declaration, so output is stable.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

// ---------------------------------------------------------------- fit JSON

#[derive(Debug, Serialize)]
pub struct ParamReport {
    pub name: String,
    pub estimate: f64,
    pub ase: f64,
    pub aci: [f64; 2],
}

#[derive(Debug, Serialize)]
pub struct FitReport {
    pub converged: bool,
    pub iterations: usize,
    pub score_norm: f64,
    pub lambda: f64,
    pub n_cases: usize,
    pub level: f64,
    pub parameters: Vec<ParamReport>,
}

/// Point estimates with standard errors and linear confidence intervals,
/// one entry per parameter in (γ, η, β₁..β_d) order.
pub fn fit_report(fit: &FitResult, alpha: f64) -> Result<FitReport> {
    let mut names = vec!["gamma".to_string(), "eta".to_string()];
    for j in 1..=fit.params.beta().len() {
        names.push(format!("beta{j}"));
    }
    let mut estimates = vec![fit.params.gamma(), fit.params.eta()];
    estimates.extend_from_slice(fit.params.beta());
    let ases = fit.ases();

    let mut parameters = Vec::with_capacity(names.len());
    for ((name, est), ase) in names.into_iter().zip(estimates).zip(ases) {
        let aci = aci_linear(est, ase, alpha)?;
        parameters.push(ParamReport {
            name,
            estimate: est,
            ase,
            aci: [aci.lower, aci.upper],
        });
    }
    Ok(FitReport {
        converged: fit.converged,
        iterations: fit.iterations,
        score_norm: fit.score_norm,
        lambda: fit.lambda,
        n_cases: fit.n_cases,
        level: 1.0 - alpha,
        parameters,
    })
}

/// Diagnostics document written when a fit errors or fails to converge.
#[derive(Debug, Serialize)]
pub struct FailureReport {
    pub converged: bool,
    pub error: String,
}

// --------------------------------------------------------------- track CSV

/// Assessment series as CSV: `i,mu,mu_lo,mu_hi,r,r_lo,r_hi,cpm,cpm_lo,
/// cpm_hi,fit_ok`. Cells are empty where no fit is available.
pub fn render_track_csv(series: &SlcaSeries) -> String {
    let mut out = String::from("i,mu,mu_lo,mu_hi,r,r_lo,r_hi,cpm,cpm_lo,cpm_hi,fit_ok\n");
    let cell = |e: &Option<IntervalEstimate>| match e {
        Some(e) => format!("{:.6},{:.6},{:.6}", e.point, e.lower, e.upper),
        None => ",,".to_string(),
    };
    for p in &series.points {
        writeln!(
            out,
            "{},{},{},{},{}",
            p.index,
            cell(&p.mu),
            cell(&p.r),
            cell(&p.cpm),
            p.fit_ok
        )
        .unwrap();
    }
    out
}

// --------------------------------------------------------------- cusum CSV

#[derive(Debug, Clone, Copy)]
pub struct CusumRow {
    pub index: usize,
    pub v: f64,
    pub s: f64,
    /// Whether |s| exceeds the barrier at this case.
    pub signaled: bool,
}

/// Reconstructs per-case residuals alongside the recorded statistic.
/// The residual call matches the one inside the runner, so v and s are
/// mutually consistent: s_i = min{0, s_{i−1} + v_i}.
pub fn cusum_rows(
    cases: &[CaseRecord],
    standard: &WeibullRegParams,
    trace: &CusumTrace,
) -> Result<Vec<CusumRow>> {
    let mut rows = Vec::with_capacity(cases.len());
    for (k, c) in cases.iter().enumerate() {
        let v = residual(c.y(), standard, &trace.x_eval, trace.epsilon)?;
        let s = trace.s[k + 1];
        rows.push(CusumRow {
            index: c.index(),
            v,
            s,
            signaled: s.abs() > trace.h,
        });
    }
    Ok(rows)
}

/// Monitoring series as CSV: `i,v,s,signaled`.
pub fn render_cusum_csv(rows: &[CusumRow]) -> String {
    let mut out = String::from("i,v,s,signaled\n");
    for r in rows {
        writeln!(out, "{},{:.6},{:.6},{}", r.index, r.v, r.s, r.signaled).unwrap();
    }
    out
}

// ------------------------------------------------------- simulation JSON

#[derive(Debug, Serialize)]
pub struct OcEstimateReport {
    pub p: f64,
    pub se: f64,
    pub reps_effective: usize,
}

#[derive(Debug, Serialize)]
pub struct PsdWindowReport {
    pub window: usize,
    pub p: f64,
    pub se: f64,
}

#[derive(Debug, Serialize)]
pub struct ScenarioEcho {
    pub t: usize,
    pub lambda: f64,
    pub epsilon: f64,
    pub x_eval: Vec<f64>,
    pub change_index: usize,
    pub standard_gamma: f64,
    pub standard_eta: f64,
    pub standard_beta: Vec<f64>,
    pub eta_n: f64,
    pub beta_n: Vec<f64>,
    pub gamma_trajectory: String,
}

#[derive(Debug, Serialize)]
pub struct OcReport {
    pub detector: String,
    pub h: f64,
    pub reps: usize,
    pub seed: u64,
    pub pfa: OcEstimateReport,
    pub psd_qualifying: usize,
    pub psd_excluded: usize,
    pub psd: Vec<PsdWindowReport>,
    pub scenario: ScenarioEcho,
}

pub fn detector_name(d: Detector) -> &'static str {
    match d {
        Detector::Slca => "slca",
        Detector::LcCusum => "lccusum",
    }
}

fn scenario_echo(spec: &ScenarioSpec) -> ScenarioEcho {
    ScenarioEcho {
        t: spec.t,
        lambda: spec.lambda,
        epsilon: spec.epsilon,
        x_eval: spec.x_eval.clone(),
        change_index: spec.change_index,
        standard_gamma: spec.standard.gamma(),
        standard_eta: spec.standard.eta(),
        standard_beta: spec.standard.beta().to_vec(),
        eta_n: spec.eta_n,
        beta_n: spec.beta_n.clone(),
        gamma_trajectory: match spec.gamma_trajectory {
            GammaTrajectory::Constant(v) => format!("constant({v})"),
            GammaTrajectory::BenchmarkLearning => "learning".to_string(),
        },
    }
}

/// Operating-characteristic results with the scenario echoed back, so a
/// report is self-describing and rerunnable.
pub fn oc_report(result: &OcResult, spec: &ScenarioSpec, seed: u64) -> OcReport {
    OcReport {
        detector: detector_name(result.detector).to_string(),
        h: result.h,
        reps: result.reps,
        seed,
        pfa: OcEstimateReport {
            p: result.pfa.p,
            se: result.pfa.se,
            reps_effective: result.pfa.reps_effective,
        },
        psd_qualifying: result.psd.qualifying,
        psd_excluded: result.psd.excluded,
        psd: result
            .psd
            .windows
            .iter()
            .map(|(w, e)| PsdWindowReport {
                window: *w,
                p: e.p,
                se: e.se,
            })
            .collect(),
        scenario: scenario_echo(spec),
    }
}

#[derive(Debug, Serialize)]
pub struct CalibrationTraceEntry {
    pub h: f64,
    pub pfa: f64,
    pub se: f64,
}

#[derive(Debug, Serialize)]
pub struct CalibrationReport {
    pub detector: String,
    pub target: [f64; 2],
    pub reps: usize,
    pub seed: u64,
    pub h: f64,
    pub pfa: OcEstimateReport,
    pub trace: Vec<CalibrationTraceEntry>,
    pub scenario: ScenarioEcho,
}

pub fn calibration_report(
    result: &CalibrationResult,
    detector: Detector,
    target: (f64, f64),
    reps: usize,
    spec: &ScenarioSpec,
    seed: u64,
) -> CalibrationReport {
    CalibrationReport {
        detector: detector_name(detector).to_string(),
        target: [target.0, target.1],
        reps,
        seed,
        h: result.h,
        pfa: OcEstimateReport {
            p: result.pfa.p,
            se: result.pfa.se,
            reps_effective: result.pfa.reps_effective,
        },
        trace: result
            .trace
            .iter()
            .map(|(h, e)| CalibrationTraceEntry {
                h: *h,
                pfa: e.p,
                se: e.se,
            })
            .collect(),
        scenario: scenario_echo(spec),
    }
}

// -------------------------------------------------------------------- SVG

const SVG_W: f64 = 840.0;
const SVG_H: f64 = 880.0;
const PLOT_LEFT: f64 = 70.0;
const PLOT_RIGHT: f64 = 810.0;
const PANEL_H: f64 = 230.0;
const PANEL_TOPS: [f64; 3] = [40.0, 330.0, 620.0];

struct Panel {
    top: f64,
    ymin: f64,
    ymax: f64,
    imin: f64,
    imax: f64,
}

impl Panel {
    fn sx(&self, i: f64) -> f64 {
        let span = (self.imax - self.imin).max(1.0);
        PLOT_LEFT + (i - self.imin) / span * (PLOT_RIGHT - PLOT_LEFT)
    }

    fn sy(&self, v: f64) -> f64 {
        let span = self.ymax - self.ymin;
        self.top + PANEL_H - (v - self.ymin) / span * PANEL_H
    }
}

fn panel_range(values: &[f64], refs: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values.iter().chain(refs) {
        if v.is_finite() {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.08).max(1e-6 + lo.abs() * 1e-9);
    (lo - pad, hi + pad)
}

fn frame(out: &mut String, p: &Panel, title: &str) {
    writeln!(
        out,
        r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#444" stroke-width="1"/>"##,
        PLOT_LEFT,
        p.top,
        PLOT_RIGHT - PLOT_LEFT,
        PANEL_H
    )
    .unwrap();
    writeln!(
        out,
        r##"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="14" fill="#222">{title}</text>"##,
        PLOT_LEFT,
        p.top - 10.0
    )
    .unwrap();
    // y ticks
    for k in 0..=3 {
        let v = p.ymin + (p.ymax - p.ymin) * k as f64 / 3.0;
        let y = p.sy(v);
        writeln!(
            out,
            r##"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#bbb" stroke-width="0.5"/>"##,
            PLOT_LEFT,
            PLOT_RIGHT
        )
        .unwrap();
        writeln!(
            out,
            r##"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" fill="#444" text-anchor="end">{v:.2}</text>"##,
            PLOT_LEFT - 6.0,
            y + 4.0
        )
        .unwrap();
    }
    // x ticks
    for k in 0..=5 {
        let i = p.imin + (p.imax - p.imin) * k as f64 / 5.0;
        let x = p.sx(i);
        writeln!(
            out,
            r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#444" stroke-width="1"/>"##,
            p.top + PANEL_H,
            p.top + PANEL_H + 4.0
        )
        .unwrap();
        writeln!(
            out,
            r##"<text x="{x:.2}" y="{:.2}" font-family="sans-serif" font-size="11" fill="#444" text-anchor="middle">{:.0}</text>"##,
            p.top + PANEL_H + 17.0,
            i
        )
        .unwrap();
    }
}

fn band_and_line(out: &mut String, p: &Panel, pts: &[(usize, IntervalEstimate)], fill: &str, stroke: &str) {
    if pts.is_empty() {
        return;
    }
    let mut path = String::new();
    for (k, (i, e)) in pts.iter().enumerate() {
        let cmd = if k == 0 { 'M' } else { 'L' };
        write!(path, "{cmd}{:.2},{:.2} ", p.sx(*i as f64), p.sy(e.upper)).unwrap();
    }
    for (i, e) in pts.iter().rev() {
        write!(path, "L{:.2},{:.2} ", p.sx(*i as f64), p.sy(e.lower)).unwrap();
    }
    path.push('Z');
    writeln!(out, r##"<path d="{path}" fill="{fill}" fill-opacity="0.35" stroke="none"/>"##).unwrap();

    let mut line = String::new();
    for (i, e) in pts {
        write!(line, "{:.2},{:.2} ", p.sx(*i as f64), p.sy(e.point)).unwrap();
    }
    writeln!(
        out,
        r##"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="1.5"/>"##,
        line.trim_end()
    )
    .unwrap();
}

fn ref_line(out: &mut String, p: &Panel, value: f64, label: &str, class: &str) {
    if !value.is_finite() || value < p.ymin || value > p.ymax {
        return;
    }
    let y = p.sy(value);
    writeln!(
        out,
        r##"<line class="{class}" data-value="{value}" x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#c01c28" stroke-width="1.2" stroke-dasharray="6,4"/>"##,
        PLOT_LEFT,
        PLOT_RIGHT
    )
    .unwrap();
    writeln!(
        out,
        r##"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" fill="#c01c28">{label}</text>"##,
        PLOT_LEFT + 6.0,
        y - 5.0
    )
    .unwrap();
}

/// Three stacked panels: mean operative time, relative risk, and the
/// comparative probability, each with its interval band and reference
/// lines (standard mean, indifference bounds, decision cutoff).
pub fn render_track_svg(series: &SlcaSeries, mu_s: f64) -> String {
    let points = &series.points;
    let imin = points.first().map_or(1.0, |p| p.index as f64);
    let imax = points.last().map_or(1.0, |p| p.index as f64);

    let collect = |get: fn(&opcurve::slca::SlcaPoint) -> &Option<IntervalEstimate>| {
        points
            .iter()
            .filter_map(|p| get(p).as_ref().map(|e| (p.index, *e)))
            .collect::<Vec<_>>()
    };
    let mu_pts = collect(|p| &p.mu);
    let r_pts = collect(|p| &p.r);
    let cpm_pts = collect(|p| &p.cpm);

    let span = |pts: &[(usize, IntervalEstimate)]| {
        pts.iter()
            .flat_map(|(_, e)| [e.lower, e.upper, e.point])
            .collect::<Vec<_>>()
    };

    let delta_l = series.cfg.delta_l();
    let delta_u = series.cfg.delta_u();
    let cutoff = series.cfg.cutoff();

    let (mu_lo, mu_hi) = panel_range(&span(&mu_pts), &[mu_s]);
    let mut r_refs = vec![1.0];
    if delta_l > 0.0 {
        r_refs.push(delta_l);
    }
    if delta_u.is_finite() {
        r_refs.push(delta_u);
    }
    let (r_lo, r_hi) = panel_range(&span(&r_pts), &r_refs);
    let (c_lo, c_hi) = panel_range(&span(&cpm_pts), &[cutoff, 0.0, 1.0]);

    let panels = [
        Panel { top: PANEL_TOPS[0], ymin: mu_lo, ymax: mu_hi, imin, imax },
        Panel { top: PANEL_TOPS[1], ymin: r_lo, ymax: r_hi, imin, imax },
        Panel { top: PANEL_TOPS[2], ymin: c_lo, ymax: c_hi, imin, imax },
    ];

    let mut out = String::new();
    writeln!(
        out,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_W:.0}" height="{SVG_H:.0}" viewBox="0 0 {SVG_W:.0} {SVG_H:.0}">"##
    )
    .unwrap();
    writeln!(out, r##"<rect width="{SVG_W:.0}" height="{SVG_H:.0}" fill="#ffffff"/>"##).unwrap();

    frame(&mut out, &panels[0], "Mean operative time");
    band_and_line(&mut out, &panels[0], &mu_pts, "#9ecbff", "#1a5fb4");
    ref_line(&mut out, &panels[0], mu_s, &format!("standard {mu_s:.3}"), "standard-mean");

    frame(&mut out, &panels[1], "Relative risk");
    band_and_line(&mut out, &panels[1], &r_pts, "#f8b0b5", "#a51d2d");
    if delta_l > 0.0 {
        ref_line(&mut out, &panels[1], delta_l, &format!("lower bound {delta_l:.3}"), "delta-lower");
    }
    ref_line(&mut out, &panels[1], delta_u, &format!("upper bound {delta_u:.3}"), "delta-upper");

    frame(&mut out, &panels[2], "Comparative probability");
    band_and_line(&mut out, &panels[2], &cpm_pts, "#a8d8a0", "#26632d");
    ref_line(&mut out, &panels[2], cutoff, &format!("cutoff {cutoff:.2}"), "cutoff");

    writeln!(out, "</svg>").unwrap();
    out
}
