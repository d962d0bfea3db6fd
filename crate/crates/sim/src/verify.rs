//! Cross-checks of the analytic model against Monte Carlo runs and of the
//! decoy bounds against the simulated channel.

use mpqkd_core::decoy::{estimate_key_rate, Basis, DecoyConfig, PhotonYields};
use mpqkd_core::mc::{run_protocol_parallel, Estimate, PairRecord, SourceModel};
use mpqkd_core::model::key_rate;
use mpqkd_core::optimizer::{optimize_intensities, OptimizationProblem};
use mpqkd_core::{Scenario, SystemParams};

use crate::error::SimError;
use crate::spec::{Layout, ResolvedSpec};

/// Allowed deviation of a Monte Carlo frequency, in standard errors, on top
/// of a one-count continuity margin.
pub const SIGMAS: f64 = 3.0;
/// Alice's arm for verification points of distance sweeps, km.
const SWEEP_L_A: f64 = 100.0;
const MAX_POINTS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub expected: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
    /// Sifted pairs of the first verification point.
    pub trace: Vec<PairRecord>,
}

impl VerifyReport {
    pub fn failures(&self) -> usize {
        self.checks.iter().filter(|c| !c.passed).count()
    }
}

fn frequency(name: String, est: &Estimate, expected: f64) -> Check {
    let measured = est.value().unwrap_or(f64::NAN);
    let se = est.std_error_at(expected).unwrap_or(f64::NAN);
    Check {
        name,
        passed: (measured - expected).abs() <= SIGMAS * se + 1.0 / est.trials as f64,
        measured,
        expected,
    }
}

fn bound(name: String, measured: f64, expected: f64, lower: bool) -> Check {
    let slack = 1e-9 * expected.abs();
    let passed = if lower {
        measured <= expected + slack
    } else {
        measured >= expected - slack
    };
    Check {
        name,
        passed,
        measured,
        expected,
    }
}

fn points(spec: &ResolvedSpec) -> Vec<(f64, f64)> {
    let l_a = match spec.layout {
        Layout::Points { l_a } => l_a,
        Layout::Sweep { .. } => SWEEP_L_A,
    };
    spec.deltas.iter().take(MAX_POINTS).map(|d| (l_a, l_a + d)).collect()
}

fn optimal_scenario(l_a: f64, l_b: f64, spec: &ResolvedSpec, params: SystemParams) -> Result<Scenario, SimError> {
    let problem = OptimizationProblem::from_distances(l_a, l_b, spec.lambdas[0], params)?;
    let report = optimize_intensities(&problem)?;
    let (mu_a, mu_b) = if report.converged {
        (report.mu_a, report.mu_b)
    } else {
        (0.5, 0.5)
    };
    Ok(problem.scenario(mu_a, mu_b)?)
}

/// Runs every check for the spec's first few geometries at its first
/// pairing interval and misalignment.
pub fn verify_oracles(spec: &ResolvedSpec, workers: Option<usize>) -> Result<VerifyReport, SimError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| SimError::Validation(format!("workers: {e}")))?;
    pool.install(|| verify_on_pool(spec))
}

fn verify_on_pool(spec: &ResolvedSpec) -> Result<VerifyReport, SimError> {
    let params = spec.params.with_misalignment(spec.e_d[0]);
    let mut report = VerifyReport::default();
    for (k, (l_a, l_b)) in points(spec).into_iter().enumerate() {
        let tag = format!("l_a={l_a} l_b={l_b}");
        let s = optimal_scenario(l_a, l_b, spec, params)?;
        let model = key_rate(&s)?;
        let run = run_protocol_parallel(
            &s,
            SourceModel::Signal,
            spec.mc_rounds,
            spec.seed.wrapping_add(k as u64),
        )?;
        let st = &run.stats;
        report.checks.extend([
            frequency(format!("{tag} click probability"), &st.p, model.p),
            frequency(format!("{tag} pairing rate"), &st.r_p, model.r_p),
            frequency(format!("{tag} Z-pair fraction"), &st.r_s, model.r_s),
            frequency(format!("{tag} Z error rate"), &st.e_z, model.e_z),
            frequency(format!("{tag} single-photon fraction"), &st.q_bar, model.q_bar_11),
        ]);
        if k == 0 {
            report.trace = run.pairs;
        }

        let nu = spec.decoy.nu_fraction;
        let ds = s.with_decoys(nu * s.mu_a, nu * s.mu_b)?;
        let rest = (1.0 - spec.decoy.s_nu) / 2.0;
        let config = DecoyConfig::new(rest, spec.decoy.s_nu, rest)?;
        let est = estimate_key_rate(&ds, &config)?;
        let yields = PhotonYields::new(&ds, 2)?;
        for (basis, b) in [(Basis::Z, est.bounds.z), (Basis::X, est.bounds.x)] {
            let (m, e) = yields.get(basis, (1, 1));
            report.checks.push(bound(
                format!("{tag} decoy {basis:?} yield lower bound"),
                b.m11_lower,
                m,
                true,
            ));
            report.checks.push(bound(
                format!("{tag} decoy {basis:?} error upper bound"),
                b.e11_upper,
                e,
                false,
            ));
        }
        let ceiling = key_rate(&ds)?.rate;
        report
            .checks
            .push(bound(format!("{tag} decoy rate below model"), est.rate, ceiling, true));
    }

    let (l_a, l_b) = points(spec)[0];
    let dark_free = params.with_dark_count(0.0);
    let s = optimal_scenario(l_a, l_b, spec, dark_free)?;
    let run = run_protocol_parallel(
        &s,
        SourceModel::Signal,
        spec.mc_rounds,
        spec.seed.wrapping_add(MAX_POINTS as u64),
    )?;
    report.checks.push(Check {
        name: format!("l_a={l_a} l_b={l_b} Z errors without dark counts"),
        passed: run.stats.e_z.successes == 0 && run.stats.z_pairs > 0,
        measured: run.stats.e_z.value().unwrap_or(f64::NAN),
        expected: 0.0,
    });
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::SweepSpec;

    #[test]
    fn small_run_passes() {
        let spec = SweepSpec::from_json(
            r#"{"mode": "custom", "l_a": 30, "deltas": [0, 20], "lambdas": [100], "methods": ["OI"], "mc_rounds": 1000000}"#,
        )
        .unwrap()
        .resolve(None)
        .unwrap();
        let report = verify_oracles(&spec, Some(1)).unwrap();
        assert_eq!(report.checks.len(), 2 * 10 + 1);
        assert_eq!(report.failures(), 0, "{:#?}", report.checks);
        assert!(!report.trace.is_empty());
    }
}
