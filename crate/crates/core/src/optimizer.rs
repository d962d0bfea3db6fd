//! Optimal signal intensities, closed-form limits and the two baselines
//! (adding-fiber symmetrization and the repeaterless capacity bound).

use crate::error::{Error, Result};
use crate::math;
use crate::model::key_rate;
use crate::params::{distance_from_transmittance, ClickModel, Link, PairingInterval, Scenario, SystemParams};

/// Grid points per axis in the coarse search.
pub const GRID_RESOLUTION: usize = 64;
/// Lower clamp on intensities during refinement.
pub const MIN_INTENSITY: f64 = 1e-6;

const TIE_TOLERANCE: f64 = 1e-15;
const SIMPLEX_TOLERANCE: f64 = 1e-10;
const MAX_ITERATIONS: usize = 1000;
const MAX_RESTARTS: usize = 4;

/// Maximize the key rate over `(mu_a, mu_b)` for a fixed pair of arms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizationProblem {
    /// Alice's (shorter) arm, km.
    pub l_a: f64,
    /// `eta_a / eta_b >= 1`.
    pub delta: f64,
    pub lambda: PairingInterval,
    pub params: SystemParams,
    pub click_model: ClickModel,
}

impl OptimizationProblem {
    pub fn new(l_a: f64, delta: f64, lambda: PairingInterval, params: SystemParams) -> Result<Self> {
        let problem = OptimizationProblem {
            l_a,
            delta,
            lambda,
            params,
            click_model: ClickModel::Exact,
        };
        problem.validate()?;
        Ok(problem)
    }

    /// Problem for arm lengths `l_a <= l_b`.
    pub fn from_distances(l_a: f64, l_b: f64, lambda: PairingInterval, params: SystemParams) -> Result<Self> {
        if !(l_b >= l_a) {
            return Err(Error::domain("l_b", l_b, "l_b >= l_a"));
        }
        let delta = math::powf(10.0, params.alpha * (l_b - l_a) / 10.0);
        Self::new(l_a, delta, lambda, params)
    }

    pub fn with_click_model(mut self, model: ClickModel) -> Self {
        self.click_model = model;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.lambda.validate()?;
        if !(self.l_a >= 0.0 && self.l_a.is_finite()) {
            return Err(Error::domain("l_a", self.l_a, "finite l_a >= 0"));
        }
        if !(self.delta >= 1.0 && self.delta.is_finite()) {
            return Err(Error::domain("delta", self.delta, "delta >= 1"));
        }
        Ok(())
    }

    pub fn link_a(&self) -> Result<Link> {
        Link::from_distance(self.l_a, &self.params)
    }

    pub fn link_b(&self) -> Result<Link> {
        let eta_b = self.link_a()?.eta() / self.delta;
        let l_b = distance_from_transmittance(eta_b, &self.params)?;
        // Keep the arm order exact even when the round trip loses a few ulps.
        Link::from_distance(l_b.max(self.l_a), &self.params)
    }

    /// Length difference `l_b - l_a` in km.
    pub fn length_difference(&self) -> f64 {
        10.0 * math::log10(self.delta) / self.params.alpha
    }

    pub fn scenario(&self, mu_a: f64, mu_b: f64) -> Result<Scenario> {
        let link_b = Link::from_transmittance(self.link_a()?.eta() / self.delta, &self.params)?;
        let scenario = Scenario {
            link_a: self.link_a()?,
            link_b,
            mu_a,
            mu_b,
            nu_a: 0.0,
            nu_b: 0.0,
            lambda: self.lambda,
            params: self.params,
            click_model: self.click_model,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    /// Unclamped key rate; `-inf` where the model is degenerate.
    fn objective(&self, link_a: Link, link_b: Link, mu_a: f64, mu_b: f64) -> f64 {
        let scenario = Scenario {
            link_a,
            link_b,
            mu_a,
            mu_b,
            nu_a: 0.0,
            nu_b: 0.0,
            lambda: self.lambda,
            params: self.params,
            click_model: self.click_model,
        };
        key_rate(&scenario).map_or(f64::NEG_INFINITY, |b| b.raw_rate)
    }
}

/// Result of [`optimize_intensities`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimumReport {
    pub mu_a: f64,
    pub mu_b: f64,
    /// Maximal key rate, `>= 0`.
    pub rate: f64,
    /// Simplex iterations across all restarts.
    pub iterations: usize,
    /// False when no intensity pair gives a positive rate.
    pub converged: bool,
    pub grid_resolution: usize,
}

impl OptimumReport {
    pub fn ratio(&self) -> f64 {
        self.mu_b / self.mu_a
    }
}

/// Global maximizer of the key rate over `(0, 1]^2`.
///
/// A uniform grid locates the basin; a bounded Nelder-Mead simplex then
/// refines it until the simplex collapses.
pub fn optimize_intensities(problem: &OptimizationProblem) -> Result<OptimumReport> {
    problem.validate()?;
    let link_a = problem.link_a()?;
    let link_b = Link::from_transmittance(link_a.eta() / problem.delta, &problem.params)?;
    let f = |x: [f64; 2]| -problem.objective(link_a, link_b, x[0], x[1]);

    let n = GRID_RESOLUTION;
    let mut best = [1.0 / n as f64; 2];
    let mut best_rate = f64::NEG_INFINITY;
    for i in 0..n {
        let mu_a = (i + 1) as f64 / n as f64;
        for j in 0..n {
            let mu_b = (j + 1) as f64 / n as f64;
            let r = -f([mu_a, mu_b]);
            if best_rate == f64::NEG_INFINITY || r > best_rate + TIE_TOLERANCE * best_rate.abs() {
                best_rate = r;
                best = [mu_a, mu_b];
            }
        }
    }

    if !(best_rate > 0.0) {
        return Ok(OptimumReport {
            mu_a: best[0],
            mu_b: best[1],
            rate: 0.0,
            iterations: 0,
            converged: false,
            grid_resolution: n,
        });
    }

    let mut iterations = 0;
    let mut step = 1.0 / n as f64;
    let mut value = -best_rate;
    for _ in 0..MAX_RESTARTS {
        let (x, fx, it) = nelder_mead(&f, best, step);
        iterations += it;
        let improved = fx < value;
        if improved {
            best = x;
            value = fx;
        }
        if !improved || it < 5 {
            break;
        }
        step = 1e-3;
    }

    Ok(OptimumReport {
        mu_a: best[0],
        mu_b: best[1],
        rate: (-value).max(0.0),
        iterations,
        converged: true,
        grid_resolution: n,
    })
}

fn project(x: [f64; 2]) -> [f64; 2] {
    x.map(|v| v.clamp(MIN_INTENSITY, 1.0))
}

/// Bounded Nelder-Mead minimization from `start`.
fn nelder_mead<F: Fn([f64; 2]) -> f64>(f: &F, start: [f64; 2], step: f64) -> ([f64; 2], f64, usize) {
    let mut simplex = [start, [start[0] - step, start[1]], [start[0], start[1] - step]].map(project);
    // A vertex pushed onto the clamp may coincide with the start point.
    for (k, v) in simplex.iter_mut().enumerate().skip(1) {
        if *v == start {
            v[k - 1] = (start[k - 1] + step).min(1.0);
        }
    }
    let mut values = simplex.map(f);
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        let mut order = [0, 1, 2];
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.map(|k| simplex[k]);
        values = order.map(|k| values[k]);

        let diameter = (1..3)
            .map(|k| math::abs(simplex[k][0] - simplex[0][0]).max(math::abs(simplex[k][1] - simplex[0][1])))
            .fold(0.0, f64::max);
        if diameter < SIMPLEX_TOLERANCE {
            break;
        }
        iterations += 1;

        let centroid = [
            (simplex[0][0] + simplex[1][0]) / 2.0,
            (simplex[0][1] + simplex[1][1]) / 2.0,
        ];
        let along = |t: f64| {
            project([
                centroid[0] + t * (simplex[2][0] - centroid[0]),
                centroid[1] + t * (simplex[2][1] - centroid[1]),
            ])
        };

        let reflected = along(-1.0);
        let fr = f(reflected);
        if fr < values[0] {
            let expanded = along(-2.0);
            let fe = f(expanded);
            if fe < fr {
                simplex[2] = expanded;
                values[2] = fe;
            } else {
                simplex[2] = reflected;
                values[2] = fr;
            }
            continue;
        }
        if fr < values[1] {
            simplex[2] = reflected;
            values[2] = fr;
            continue;
        }
        let (contracted, fc) = if fr < values[2] {
            let c = along(-0.5);
            (c, f(c))
        } else {
            let c = along(0.5);
            (c, f(c))
        };
        if fc < values[2].min(fr) {
            simplex[2] = contracted;
            values[2] = fc;
            continue;
        }
        for k in 1..3 {
            simplex[k] = project([
                (simplex[0][0] + simplex[k][0]) / 2.0,
                (simplex[0][1] + simplex[k][1]) / 2.0,
            ]);
            values[k] = f(simplex[k]);
        }
    }

    let best = (0..3).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);
    (simplex[best], values[best], iterations)
}

/// Pairing regime for the closed-form optimum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// `lambda -> infinity`.
    InfiniteInterval,
    /// `lambda = 1`, weak clicks.
    SingleRound,
}

/// Optimal intensities of the linearized model without dark counts.
pub fn closed_form_asymptotic(delta: f64, regime: Regime) -> Result<(f64, f64)> {
    if !(delta >= 1.0 && delta.is_finite()) {
        return Err(Error::domain("delta", delta, "delta >= 1"));
    }
    Ok(match regime {
        Regime::SingleRound => (1.0, 1.0),
        Regime::InfiniteInterval if delta == 1.0 => (0.5, 0.5),
        Regime::InfiniteInterval => {
            let root = math::sqrt(delta);
            ((root - 1.0) / (delta - 1.0), (delta - root) / (delta - 1.0))
        }
    })
}

/// Which transmittance enters the capacity bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlobConvention {
    /// Fiber only: `10^(-alpha L / 10)`.
    ChannelOnly,
    /// Fiber times detector efficiency, matching the protocol's own `eta`.
    #[default]
    WithDetector,
}

/// Repeaterless secret-key capacity `-log2(1 - eta)` over `total_distance` km.
///
/// A lossless channel gives `f64::INFINITY`.
pub fn plob_bound(total_distance: f64, params: &SystemParams, convention: PlobConvention) -> Result<f64> {
    if !(total_distance >= 0.0) {
        return Err(Error::domain("total_distance", total_distance, "total_distance >= 0"));
    }
    let fiber = math::powf(10.0, -params.alpha * total_distance / 10.0);
    let eta = match convention {
        PlobConvention::ChannelOnly => fiber,
        PlobConvention::WithDetector => params.eta_d * fiber,
    };
    if eta >= 1.0 {
        return Ok(f64::INFINITY);
    }
    Ok(-math::ln_1p(-eta) / core::f64::consts::LN_2)
}

/// Key rate after padding Alice's arm to Bob's length and optimizing the
/// resulting symmetric link.
pub fn adding_fiber_rate(problem: &OptimizationProblem) -> Result<OptimumReport> {
    problem.validate()?;
    let symmetric = OptimizationProblem {
        l_a: problem.l_a + problem.length_difference(),
        delta: 1.0,
        ..*problem
    };
    optimize_intensities(&symmetric)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table_i(l_a: f64, delta: f64, lambda: PairingInterval) -> OptimizationProblem {
        OptimizationProblem::new(l_a, delta, lambda, SystemParams::standard()).unwrap()
    }

    #[test]
    fn closed_forms() {
        assert_eq!(
            closed_form_asymptotic(1.0, Regime::InfiniteInterval).unwrap(),
            (0.5, 0.5)
        );
        let (a, b) = closed_form_asymptotic(4.0, Regime::InfiniteInterval).unwrap();
        assert!((a - 1.0 / 3.0).abs() < 1e-15 && (b - 2.0 / 3.0).abs() < 1e-15);
        let (a, b) = closed_form_asymptotic(100.0, Regime::InfiniteInterval).unwrap();
        assert!((a - 1.0 / 11.0).abs() < 1e-15 && (b - 10.0 / 11.0).abs() < 1e-15);
        assert_eq!(closed_form_asymptotic(7.0, Regime::SingleRound).unwrap(), (1.0, 1.0));
        assert!(closed_form_asymptotic(0.5, Regime::InfiniteInterval).is_err());
    }

    #[test]
    fn plob_values() {
        let p = SystemParams::standard();
        assert_eq!(plob_bound(0.0, &p, PlobConvention::ChannelOnly).unwrap(), f64::INFINITY);
        let b = plob_bound(300.0, &p, PlobConvention::ChannelOnly).unwrap();
        assert!((b - 1.4426957e-6).abs() < 1e-12);
        let d = plob_bound(300.0, &p, PlobConvention::WithDetector).unwrap();
        assert!((d / b - 0.2).abs() < 1e-6);
        let far = plob_bound(1000.0, &p, PlobConvention::ChannelOnly).unwrap();
        assert!((far / (1e-20 / core::f64::consts::LN_2) - 1.0).abs() < 1e-12);
        assert!(plob_bound(-1.0, &p, PlobConvention::ChannelOnly).is_err());
    }

    #[test]
    fn problem_validation() {
        let p = SystemParams::standard();
        assert!(OptimizationProblem::new(100.0, 0.5, PairingInterval::Infinite, p).is_err());
        assert!(OptimizationProblem::new(-1.0, 2.0, PairingInterval::Infinite, p).is_err());
        assert!(OptimizationProblem::new(100.0, 2.0, PairingInterval::Rounds(0), p).is_err());
        let q = OptimizationProblem::from_distances(100.0, 150.0, PairingInterval::Infinite, p).unwrap();
        assert!((q.delta - 10.0).abs() < 1e-12);
        assert!((q.length_difference() - 50.0).abs() < 1e-9);
        assert!((q.link_b().unwrap().distance_km() - 150.0).abs() < 1e-9);
    }

    #[test]
    fn symmetric_optimum() {
        let r = optimize_intensities(&table_i(100.0, 1.0, PairingInterval::Rounds(1_000_000))).unwrap();
        assert!(r.converged);
        assert!((r.mu_a - 0.4998).abs() < 5e-3 && (r.mu_b - 0.4998).abs() < 5e-3);
        assert!((r.mu_a - r.mu_b).abs() < 1e-6);
    }

    #[test]
    fn no_key_beyond_cutoff() {
        let r = optimize_intensities(&table_i(400.0, 100.0, PairingInterval::Rounds(1))).unwrap();
        assert!(!r.converged);
        assert_eq!(r.rate, 0.0);
    }

    #[test]
    fn optimum_is_stationary() {
        let problem = table_i(100.0, 10.0, PairingInterval::Rounds(1_000_000));
        let r = optimize_intensities(&problem).unwrap();
        let rate = |a: f64, b: f64| key_rate(&problem.scenario(a, b).unwrap()).unwrap().rate;
        let h = 1e-5;
        let da = (rate(r.mu_a + h, r.mu_b) - rate(r.mu_a - h, r.mu_b)) / (2.0 * h);
        let db = (rate(r.mu_a, r.mu_b + h) - rate(r.mu_a, r.mu_b - h)) / (2.0 * h);
        assert!(da.abs() < 1e-6 * r.rate, "d/dmu_a = {da}");
        assert!(db.abs() < 1e-6 * r.rate, "d/dmu_b = {db}");
    }

    #[test]
    fn adding_fiber_without_difference_is_plain_optimum() {
        let problem = table_i(100.0, 1.0, PairingInterval::Infinite);
        let af = adding_fiber_rate(&problem).unwrap();
        let oi = optimize_intensities(&problem).unwrap();
        assert_eq!(af, oi);
    }

    #[test]
    fn adding_fiber_matches_padded_symmetric_link() {
        let lambda = PairingInterval::Rounds(1_000_000);
        let problem = OptimizationProblem::from_distances(100.0, 150.0, lambda, SystemParams::standard()).unwrap();
        let af = adding_fiber_rate(&problem).unwrap();
        let padded = optimize_intensities(&table_i(150.0, 1.0, lambda)).unwrap();
        assert!((af.rate / padded.rate - 1.0).abs() < 1e-9);
        assert!(optimize_intensities(&problem).unwrap().rate >= af.rate);
    }
}
