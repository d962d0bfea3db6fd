//! Evaluation of a resolved spec into result rows.

use mpqkd_core::model::key_rate;
use mpqkd_core::optimizer::{adding_fiber_rate, optimize_intensities, plob_bound, OptimizationProblem};
use mpqkd_core::{KeyRateBreakdown, PairingInterval, SystemParams};
use rayon::prelude::*;

use crate::error::SimError;
use crate::spec::{Layout, Method, Mode, ResolvedSpec};

/// One evaluated grid point. Fields a method does not depend on are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub mode: Mode,
    pub method: Method,
    pub l_a: Option<f64>,
    pub l_b: Option<f64>,
    pub total_distance: f64,
    pub delta: Option<f64>,
    pub lambda: Option<PairingInterval>,
    pub e_d: Option<f64>,
    pub mu_a: Option<f64>,
    pub mu_b: Option<f64>,
    pub rate: f64,
    pub converged: Option<bool>,
    pub breakdown: Option<KeyRateBreakdown>,
}

#[derive(Debug, Clone, Copy)]
struct Task {
    curve: usize,
    method: Method,
    l_a: Option<f64>,
    total: f64,
    delta: Option<f64>,
    lambda: Option<PairingInterval>,
    e_d: Option<f64>,
}

fn tasks(spec: &ResolvedSpec) -> Vec<Task> {
    let mut out = Vec::new();
    let mut curve = 0;
    let protocols: Vec<Method> = spec.methods.iter().copied().filter(|m| *m != Method::Plob).collect();
    let with_plob = spec.methods.contains(&Method::Plob);
    match &spec.layout {
        Layout::Points { l_a } => {
            for &e_d in &spec.e_d {
                for &lambda in &spec.lambdas {
                    for &delta in &spec.deltas {
                        for &method in &protocols {
                            out.push(Task {
                                curve,
                                method,
                                l_a: Some(*l_a),
                                total: 2.0 * l_a + delta,
                                delta: Some(delta),
                                lambda: Some(lambda),
                                e_d: Some(e_d),
                            });
                        }
                    }
                }
            }
            if with_plob {
                for &delta in &spec.deltas {
                    out.push(Task {
                        curve,
                        method: Method::Plob,
                        l_a: Some(*l_a),
                        total: 2.0 * l_a + delta,
                        delta: Some(delta),
                        lambda: None,
                        e_d: None,
                    });
                }
            }
        }
        Layout::Sweep { totals } => {
            for &e_d in &spec.e_d {
                for &lambda in &spec.lambdas {
                    for &delta in &spec.deltas {
                        for &method in &protocols {
                            for &total in totals.iter().filter(|t| **t >= delta) {
                                out.push(Task {
                                    curve,
                                    method,
                                    l_a: Some((total - delta) / 2.0),
                                    total,
                                    delta: Some(delta),
                                    lambda: Some(lambda),
                                    e_d: Some(e_d),
                                });
                            }
                            curve += 1;
                        }
                    }
                }
            }
            if with_plob {
                for &total in totals {
                    out.push(Task {
                        curve,
                        method: Method::Plob,
                        l_a: None,
                        total,
                        delta: None,
                        lambda: None,
                        e_d: None,
                    });
                }
            }
        }
    }
    out
}

fn evaluate(task: &Task, spec: &ResolvedSpec) -> Result<ResultRow, SimError> {
    let mut row = ResultRow {
        mode: spec.mode,
        method: task.method,
        l_a: task.l_a,
        l_b: task.l_a.zip(task.delta).map(|(l, d)| l + d),
        total_distance: task.total,
        delta: task.delta,
        lambda: task.lambda,
        e_d: task.e_d,
        mu_a: None,
        mu_b: None,
        rate: 0.0,
        converged: None,
        breakdown: None,
    };
    if task.method == Method::Plob {
        row.rate = plob_bound(task.total, &spec.params, spec.plob_convention)?;
        return Ok(row);
    }
    let (Some(l_a), Some(l_b), Some(lambda), Some(e_d)) = (row.l_a, row.l_b, task.lambda, task.e_d) else {
        unreachable!("protocol tasks carry full geometry")
    };
    let params = SystemParams { e_d, ..spec.params };
    let problem = OptimizationProblem::from_distances(l_a, l_b, lambda, params)?;
    let (mu_a, mu_b, scenario) = match task.method {
        Method::OptimalIntensity => {
            let report = optimize_intensities(&problem)?;
            row.converged = Some(report.converged);
            (report.mu_a, report.mu_b, problem.scenario(report.mu_a, report.mu_b)?)
        }
        Method::AddingFiber => {
            let report = adding_fiber_rate(&problem)?;
            row.converged = Some(report.converged);
            let padded = OptimizationProblem::from_distances(l_b, l_b, lambda, params)?;
            (report.mu_a, report.mu_b, padded.scenario(report.mu_a, report.mu_b)?)
        }
        Method::FixedIntensity => {
            let (a, b) = spec.fixed_intensities.expect("validated");
            (a, b, problem.scenario(a, b)?)
        }
        Method::Plob => unreachable!(),
    };
    let breakdown = key_rate(&scenario)?;
    row.mu_a = Some(mu_a);
    row.mu_b = Some(mu_b);
    row.rate = if row.converged == Some(false) {
        0.0
    } else {
        breakdown.rate
    };
    row.breakdown = Some(breakdown);
    Ok(row)
}

/// Evaluates every grid point of `spec` on `workers` threads (all cores when
/// `None`). Row order depends only on the spec.
///
/// In sweep layouts each curve ends at the first distance whose rate drops
/// below the spec's cutoff.
pub fn run_sweep(spec: &ResolvedSpec, workers: Option<usize>) -> Result<Vec<ResultRow>, SimError> {
    let tasks = tasks(spec);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| SimError::Validation(format!("workers: {e}")))?;
    let rows: Vec<ResultRow> =
        pool.install(|| tasks.par_iter().map(|t| evaluate(t, spec)).collect::<Result<_, _>>())?;
    if !matches!(spec.layout, Layout::Sweep { .. }) {
        return Ok(rows);
    }
    let mut kept = Vec::with_capacity(rows.len());
    let mut stopped = None;
    for (task, row) in tasks.iter().zip(rows) {
        if stopped == Some(task.curve) {
            continue;
        }
        if row.rate < spec.cutoff {
            stopped = Some(task.curve);
            continue;
        }
        kept.push(row);
    }
    Ok(kept)
}
