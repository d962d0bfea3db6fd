//! Three-intensity decoy-state estimation.
//!
//! Each party picks vacuum, decoy `nu` or signal `mu` per round. A pair of
//! rounds is labelled by the per-party intensity sums, the pair intensity
//! vector. Observed gains and errors per vector are Poisson mixtures of the
//! photon-number yields `m_k` and `e_k`; linear programs over those mixtures
//! bound the single-photon yield `m_(1,1)` from below and its error `e_(1,1)`
//! from above.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{self, click_prob_for_photons, entropy, poisson, x_gain_and_phase_error_for};
use crate::params::{Scenario, SystemParams};

/// Per-round intensity choice of one party.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Level {
    Vacuum,
    Decoy,
    Signal,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::Vacuum, Level::Decoy, Level::Signal];

    pub fn intensity(self, nu: f64, mu: f64) -> f64 {
        match self {
            Level::Vacuum => 0.0,
            Level::Decoy => nu,
            Level::Signal => mu,
        }
    }
}

/// Sum of one party's intensities over the two rounds of a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PairSum {
    Zero,
    Nu,
    Mu,
    TwoNu,
    NuMu,
    TwoMu,
}

impl PairSum {
    pub const ALL: [PairSum; 6] = [
        PairSum::Zero,
        PairSum::Nu,
        PairSum::Mu,
        PairSum::TwoNu,
        PairSum::NuMu,
        PairSum::TwoMu,
    ];

    pub fn of(first: Level, second: Level) -> PairSum {
        use Level::*;
        match (first.min(second), first.max(second)) {
            (Vacuum, Vacuum) => PairSum::Zero,
            (Vacuum, Decoy) => PairSum::Nu,
            (Vacuum, Signal) => PairSum::Mu,
            (Decoy, Decoy) => PairSum::TwoNu,
            (Decoy, Signal) => PairSum::NuMu,
            _ => PairSum::TwoMu,
        }
    }

    pub fn value(self, nu: f64, mu: f64) -> f64 {
        match self {
            PairSum::Zero => 0.0,
            PairSum::Nu => nu,
            PairSum::Mu => mu,
            PairSum::TwoNu => 2.0 * nu,
            PairSum::NuMu => nu + mu,
            PairSum::TwoMu => 2.0 * mu,
        }
    }

    /// Probability that two independent rounds produce this sum.
    fn weight(self, c: &DecoyConfig) -> f64 {
        match self {
            PairSum::Zero => c.s_0 * c.s_0,
            PairSum::Nu => 2.0 * c.s_0 * c.s_nu,
            PairSum::Mu => 2.0 * c.s_0 * c.s_mu,
            PairSum::TwoNu => c.s_nu * c.s_nu,
            PairSum::NuMu => 2.0 * c.s_nu * c.s_mu,
            PairSum::TwoMu => c.s_mu * c.s_mu,
        }
    }

    /// Sums a Z-basis party can hold: at most one round carries light.
    fn z_type(self) -> bool {
        matches!(self, PairSum::Zero | PairSum::Nu | PairSum::Mu)
    }

    /// Sums an X-basis party can hold: both rounds at the same level.
    fn x_type(self) -> bool {
        matches!(self, PairSum::Zero | PairSum::TwoNu | PairSum::TwoMu)
    }
}

/// The intensity vector of a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PairIntensityVector {
    pub a: PairSum,
    pub b: PairSum,
}

impl PairIntensityVector {
    pub const SIGNAL_Z: PairIntensityVector = PairIntensityVector {
        a: PairSum::Mu,
        b: PairSum::Mu,
    };

    pub const fn new(a: PairSum, b: PairSum) -> Self {
        PairIntensityVector { a, b }
    }

    pub fn all() -> impl Iterator<Item = PairIntensityVector> {
        PairSum::ALL
            .into_iter()
            .flat_map(|a| PairSum::ALL.into_iter().map(move |b| PairIntensityVector { a, b }))
    }

    /// Numeric sums `(sum_a, sum_b)` for the scenario's intensities.
    pub fn sums(&self, scenario: &Scenario) -> (f64, f64) {
        (
            self.a.value(scenario.nu_a, scenario.mu_a),
            self.b.value(scenario.nu_b, scenario.mu_b),
        )
    }

    pub fn is_z_type(&self) -> bool {
        self.a.z_type() && self.b.z_type()
    }

    pub fn is_x_type(&self) -> bool {
        self.a.x_type() && self.b.x_type()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basis {
    Z,
    X,
}

/// Intensity selection probabilities (shared by both parties) and photon
/// cutoffs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoyConfig {
    pub s_0: f64,
    pub s_nu: f64,
    pub s_mu: f64,
    /// Photon cutoff per arm in the bound programs.
    pub k_max: usize,
    /// Photon cutoff per arm when generating expected observables.
    pub forward_k_max: usize,
}

impl DecoyConfig {
    pub const DEFAULT_DECOY_PROBABILITY: f64 = 1e-3;
    pub const TAIL_TOLERANCE: f64 = 1e-12;

    pub fn new(s_0: f64, s_nu: f64, s_mu: f64) -> Result<Self> {
        let config = DecoyConfig {
            s_0,
            s_nu,
            s_mu,
            k_max: 19,
            forward_k_max: 30,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_cutoffs(mut self, k_max: usize, forward_k_max: usize) -> Result<Self> {
        self.k_max = k_max;
        self.forward_k_max = forward_k_max;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, s) in [("s_0", self.s_0), ("s_nu", self.s_nu), ("s_mu", self.s_mu)] {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::domain(name, s, "0 <= s <= 1"));
            }
        }
        let total = self.s_0 + self.s_nu + self.s_mu;
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::domain("s_0 + s_nu + s_mu", total, "probabilities summing to 1"));
        }
        if self.k_max < 2 {
            return Err(Error::domain("k_max", self.k_max as f64, "k_max >= 2"));
        }
        if self.forward_k_max < self.k_max {
            return Err(Error::domain(
                "forward_k_max",
                self.forward_k_max as f64,
                "forward_k_max >= k_max",
            ));
        }
        Ok(())
    }

    pub fn level_probability(&self, level: Level) -> f64 {
        match level {
            Level::Vacuum => self.s_0,
            Level::Decoy => self.s_nu,
            Level::Signal => self.s_mu,
        }
    }
}

impl Default for DecoyConfig {
    /// Decoy chosen rarely; vacuum and signal share the rest evenly.
    fn default() -> Self {
        let s_nu = Self::DEFAULT_DECOY_PROBABILITY;
        DecoyConfig {
            s_0: (1.0 - s_nu) / 2.0,
            s_nu,
            s_mu: (1.0 - s_nu) / 2.0,
            k_max: 19,
            forward_k_max: 30,
        }
    }
}

/// Prior probability of every pair intensity vector.
pub fn pair_intensity_prior(config: &DecoyConfig) -> Vec<(PairIntensityVector, f64)> {
    PairIntensityVector::all()
        .map(|v| (v, v.a.weight(config) * v.b.weight(config)))
        .collect()
}

/// `Pr(k | mu_vec)`: independent Poisson photon numbers per party.
pub fn poisson_pair_prob(k: (u32, u32), sums: (f64, f64)) -> f64 {
    poisson(k.0, sums.0) * poisson(k.1, sums.1)
}

/// `Pr(mu_vec | k)` over all pair intensity vectors.
pub fn posterior_intensity_given_photons(
    k: (u32, u32),
    scenario: &Scenario,
    config: &DecoyConfig,
) -> Result<Vec<(PairIntensityVector, f64)>> {
    let joint: Vec<_> = pair_intensity_prior(config)
        .into_iter()
        .map(|(v, q)| (v, q * poisson_pair_prob(k, v.sums(scenario))))
        .collect();
    let total: f64 = joint.iter().map(|(_, w)| w).sum();
    if !(total > 0.0) {
        return Err(Error::domain("photon pair", total, "reachable photon numbers"));
    }
    Ok(joint.into_iter().map(|(v, w)| (v, w / total)).collect())
}

/// Ground-truth photon-number yields of a channel.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonYields {
    k_max: usize,
    z_gain: Vec<f64>,
    z_error: Vec<f64>,
    x_gain: Vec<f64>,
    x_error: Vec<f64>,
}

impl PhotonYields {
    /// Yields for photon numbers up to `k_max` per party.
    pub fn new(scenario: &Scenario, k_max: usize) -> Result<Self> {
        let (eta_a, eta_b, p_d) = (scenario.link_a.eta(), scenario.link_b.eta(), scenario.params.p_d);
        // A channel that never delivers single photons has no phase error to speak of.
        let e_11 =
            x_gain_and_phase_error_for(eta_a, eta_b, &scenario.params).map_or(SystemParams::VACUUM_ERROR, |(_, e)| e);
        let n = k_max + 1;
        let click = |a: usize, b: usize| click_prob_for_photons(a as u32, b as u32, eta_a, eta_b, p_d);
        let clicks: Vec<f64> = (0..n * n).map(|i| click(i / n, i % n)).collect();
        let both = |a_i: usize, b_i: usize, a_j: usize, b_j: usize| clicks[a_i * n + b_i] * clicks[a_j * n + b_j];

        let mut yields = PhotonYields {
            k_max,
            z_gain: Vec::with_capacity(n * n),
            z_error: Vec::with_capacity(n * n),
            x_gain: Vec::with_capacity(n * n),
            x_error: Vec::with_capacity(n * n),
        };
        for ka in 0..n {
            for kb in 0..n {
                // Z: each party's photons sit in one of the two rounds.
                let same = both(ka, kb, 0, 0) + both(0, 0, ka, kb);
                let crossed = both(ka, 0, 0, kb) + both(0, kb, ka, 0);
                yields.z_gain.push((same + crossed) / 4.0);
                yields.z_error.push(same / 4.0);

                // X: photons split binomially over the two rounds.
                let mut gain = 0.0;
                for a in 0..=ka {
                    let wa = binomial_half(ka, a);
                    for b in 0..=kb {
                        gain += wa * binomial_half(kb, b) * both(a, b, ka - a, kb - b);
                    }
                }
                let error_rate = if (ka, kb) == (1, 1) {
                    e_11
                } else {
                    SystemParams::VACUUM_ERROR
                };
                yields.x_gain.push(gain);
                yields.x_error.push(error_rate * gain);
            }
        }
        Ok(yields)
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    /// `(m_k, e_k)` in the given basis.
    pub fn get(&self, basis: Basis, k: (usize, usize)) -> (f64, f64) {
        let i = k.0 * (self.k_max + 1) + k.1;
        match basis {
            Basis::Z => (self.z_gain[i], self.z_error[i]),
            Basis::X => (self.x_gain[i], self.x_error[i]),
        }
    }
}

fn binomial_half(n: usize, k: usize) -> f64 {
    let (n, k) = (n as u32, k as u32);
    crate::math::factorial(n)
        / (crate::math::factorial(k) * crate::math::factorial(n - k))
        / crate::math::powf(2.0, n as f64)
}

/// Expected gain and error ratio of one pair intensity vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub vector: PairIntensityVector,
    pub sums: (f64, f64),
    pub prior: f64,
    /// `E[m']`: fraction of pairs with this vector that are detected pairs of the basis.
    pub gain: f64,
    /// `E[e']`: fraction that are erroneous.
    pub error: f64,
}

impl Observation {
    pub fn error_rate(&self) -> f64 {
        if self.gain > 0.0 {
            self.error / self.gain
        } else {
            0.0
        }
    }
}

/// Observables for every vector with positive prior, per basis.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoyObservables {
    pub z: Vec<Observation>,
    pub x: Vec<Observation>,
}

impl DecoyObservables {
    pub fn find(&self, basis: Basis, vector: PairIntensityVector) -> Option<&Observation> {
        let list = match basis {
            Basis::Z => &self.z,
            Basis::X => &self.x,
        };
        list.iter().find(|o| o.vector == vector)
    }
}

/// Noise-free observables a real experiment would report for this channel.
pub fn expected_observables(scenario: &Scenario, config: &DecoyConfig) -> Result<DecoyObservables> {
    scenario.validate()?;
    config.validate()?;
    let k_max = config.forward_k_max;
    let yields = PhotonYields::new(scenario, k_max)?;
    let mut observables = DecoyObservables {
        z: Vec::new(),
        x: Vec::new(),
    };
    for (vector, prior) in pair_intensity_prior(config) {
        if prior <= 0.0 {
            continue;
        }
        let sums = vector.sums(scenario);
        for (basis, wanted) in [(Basis::Z, vector.is_z_type()), (Basis::X, vector.is_x_type())] {
            if !wanted {
                continue;
            }
            let mut mass = 0.0;
            let mut gain = 0.0;
            let mut error = 0.0;
            for ka in 0..=k_max {
                for kb in 0..=k_max {
                    let w = poisson_pair_prob((ka as u32, kb as u32), sums);
                    let (m, e) = yields.get(basis, (ka, kb));
                    mass += w;
                    gain += w * m;
                    error += w * e;
                }
            }
            let tail = 1.0 - mass;
            if tail > DecoyConfig::TAIL_TOLERANCE {
                return Err(Error::Truncation { k_max, tail });
            }
            let observation = Observation {
                vector,
                sums,
                prior,
                gain,
                error,
            };
            match basis {
                Basis::Z => observables.z.push(observation),
                Basis::X => observables.x.push(observation),
            }
        }
    }
    Ok(observables)
}

/// Single-photon bounds of one basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisBounds {
    pub m11_lower: f64,
    pub e11_upper: f64,
}

/// Projected bounds for one pair intensity vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VectorBounds {
    pub vector: PairIntensityVector,
    /// `Pr((1,1) | vector) * m11_lower`
    pub m11_lower: f64,
    /// `Pr((1,1) | vector) * e11_upper`
    pub e11_upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoyBounds {
    pub z: BasisBounds,
    pub x: BasisBounds,
    pub z_per_vector: Vec<VectorBounds>,
}

impl DecoyBounds {
    pub fn z_vector(&self, vector: PairIntensityVector) -> Option<&VectorBounds> {
        self.z_per_vector.iter().find(|b| b.vector == vector)
    }
}

/// Bounds `m_(1,1)` and `e_(1,1)` in both bases by linear programming.
#[cfg(feature = "std")]
pub fn bound_single_photon(observables: &DecoyObservables, config: &DecoyConfig) -> Result<DecoyBounds> {
    config.validate()?;
    let z = lp::bound_basis(&observables.z, config.k_max)?;
    let x = lp::bound_basis(&observables.x, config.k_max)?;
    let z_per_vector = observables
        .z
        .iter()
        .map(|o| {
            let w = poisson_pair_prob((1, 1), o.sums);
            VectorBounds {
                vector: o.vector,
                m11_lower: w * z.m11_lower,
                e11_upper: w * z.e11_upper,
            }
        })
        .collect();
    Ok(DecoyBounds { z, x, z_per_vector })
}

#[cfg(feature = "std")]
mod lp {
    use alloc::format;
    use alloc::vec::Vec;

    use microlp::{ComparisonOp, OptimizationDirection, Problem, Variable};

    use super::{poisson_pair_prob, BasisBounds, Observation};
    use crate::error::{Error, Result};

    /// Equality slack in units of the largest observed gain, and the
    /// relative weight below which a column entry is moved into the tail
    /// slack. Later pairs are retried when the simplex hits a singular
    /// basis; each only enlarges the feasible set, so the bounds stay valid.
    const SETTINGS: [(f64, f64); 4] = [(1e-10, 1e-12), (1e-9, 1e-12), (1e-10, 1e-11), (1e-8, 1e-10)];

    #[derive(Clone, Copy)]
    enum Target {
        MinGain,
        MaxError,
    }

    /// Poisson weights of every observation, column-normalized.
    struct Design {
        /// Largest weight of each photon pair across observations.
        column: Vec<f64>,
        /// Per observation: kept `(index, weight / column)` entries and the
        /// probability mass left out of them.
        rows: Vec<(Vec<(usize, f64)>, f64)>,
    }

    impl Design {
        fn new(observations: &[Observation], k_max: usize, negligible: f64) -> Self {
            let side = k_max + 1;
            let weights: Vec<Vec<f64>> = observations
                .iter()
                .map(|o| {
                    (0..side * side)
                        .map(|i| poisson_pair_prob(((i / side) as u32, (i % side) as u32), o.sums))
                        .collect()
                })
                .collect();
            let column: Vec<f64> = (0..side * side)
                .map(|i| {
                    let c = weights.iter().map(|w| w[i]).fold(0.0, f64::max);
                    if c > 0.0 {
                        c
                    } else {
                        1.0
                    }
                })
                .collect();
            let rows = weights
                .iter()
                .map(|w| {
                    let kept: Vec<(usize, f64)> = w
                        .iter()
                        .enumerate()
                        .filter(|&(i, &x)| x > negligible * column[i])
                        .map(|(i, &x)| (i, x / column[i]))
                        .collect();
                    let mass: f64 = kept.iter().map(|&(i, x)| x * column[i]).sum();
                    (kept, (1.0 - mass).max(0.0))
                })
                .collect();
            Design { column, rows }
        }
    }

    pub(super) fn bound_basis(observations: &[Observation], k_max: usize) -> Result<BasisBounds> {
        let largest = observations.iter().map(|o| o.gain).fold(0.0, f64::max);
        let scale = if largest > 0.0 { largest } else { 1.0 };
        let single = (k_max + 1) + 1;
        let mut last = Error::Solver(String::new());
        for (tolerance, negligible) in SETTINGS {
            let design = Design::new(observations, k_max, negligible);
            let attempt = solve(observations, &design, scale, tolerance, Target::MinGain, single).and_then(|m| {
                let e = solve(observations, &design, scale, tolerance, Target::MaxError, single)?;
                Ok((m, e))
            });
            match attempt {
                Ok((m_lower, e_upper)) => {
                    return Ok(BasisBounds {
                        m11_lower: m_lower.clamp(0.0, 1.0),
                        e11_upper: e_upper.clamp(0.0, 1.0),
                    })
                }
                Err(Error::Solver(msg)) => last = Error::Solver(msg),
                Err(other) => return Err(other),
            }
        }
        Err(last)
    }

    /// Variables are `m_k * column_k / scale` (and likewise for `e_k`), so
    /// every constraint coefficient lies in (0, 1].
    fn solve(
        observations: &[Observation],
        design: &Design,
        scale: f64,
        tolerance: f64,
        target: Target,
        single: usize,
    ) -> Result<f64> {
        let n = design.column.len();
        let direction = match target {
            Target::MinGain => OptimizationDirection::Minimize,
            Target::MaxError => OptimizationDirection::Maximize,
        };
        let mut problem = Problem::new(direction);
        let mut m: Vec<Variable> = Vec::with_capacity(n);
        let mut e: Vec<Variable> = Vec::with_capacity(n);
        for (i, &c) in design.column.iter().enumerate() {
            let upper = c / scale;
            let (cm, ce) = match target {
                Target::MinGain if i == single => (1.0, 0.0),
                Target::MaxError if i == single => (0.0, 1.0),
                _ => (0.0, 0.0),
            };
            m.push(problem.add_var(cm, (0.0, upper)));
            e.push(problem.add_var(ce, (0.0, upper)));
        }
        for i in 0..n {
            problem.add_constraint([(e[i], 1.0), (m[i], -1.0)], ComparisonOp::Le, 0.0);
        }
        for (o, (kept, tail)) in observations.iter().zip(&design.rows) {
            for (vars, observed) in [(&m, o.gain), (&e, o.error)] {
                let terms: Vec<(Variable, f64)> = kept.iter().map(|&(i, w)| (vars[i], w)).collect();
                problem.add_constraint(&terms, ComparisonOp::Le, observed / scale + tolerance);
                // Photon pairs left out contribute at most their mass times 1.
                problem.add_constraint(&terms, ComparisonOp::Ge, (observed - tail) / scale - tolerance);
            }
        }
        let outcome = problem.solve().map_err(|e| match e {
            microlp::Error::Infeasible => Error::Inconsistent,
            other => Error::Solver(format!("{other}")),
        })?;
        let solution = outcome
            .into_solution()
            .map_err(|_| Error::Solver("solve interrupted".into()))?;
        Ok(solution.objective() * scale / design.column[single])
    }
}

/// Key rate built from decoy bounds, per detected-pair normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoyRate {
    /// `max(raw_rate, 0)`.
    pub rate: f64,
    pub raw_rate: f64,
    /// Phase-error estimate `e^{X,U}_(1,1) / m^{X,L}_(1,1)`, capped at 1/2.
    pub phase_error: f64,
    /// True when the X-basis lower bound vanished; the rate is then 0.
    pub degenerate: bool,
}

/// Key rate per pair of rounds from the signal vector's bounds and its
/// observed Z gain and error rate.
pub fn decoy_key_rate(
    bounds: &DecoyBounds,
    observed_m_z: f64,
    observed_e_z: f64,
    params: &SystemParams,
) -> Result<DecoyRate> {
    if !(0.0..=1.0).contains(&observed_m_z) {
        return Err(Error::domain("observed_m_z", observed_m_z, "0 <= m <= 1"));
    }
    if !(0.0..=1.0).contains(&observed_e_z) {
        return Err(Error::domain("observed_e_z", observed_e_z, "0 <= e <= 1"));
    }
    let signal = bounds
        .z_vector(PairIntensityVector::SIGNAL_Z)
        .ok_or(Error::Degenerate("no bounds for the signal vector"))?;
    if !(bounds.x.m11_lower > 0.0) {
        return Ok(DecoyRate {
            rate: 0.0,
            raw_rate: 0.0,
            phase_error: SystemParams::VACUUM_ERROR,
            degenerate: true,
        });
    }
    let phase_error = (bounds.x.e11_upper / bounds.x.m11_lower).min(SystemParams::VACUUM_ERROR);
    let raw_rate = signal.m11_lower * (1.0 - entropy(phase_error)) - params.f * observed_m_z * entropy(observed_e_z);
    Ok(DecoyRate {
        rate: raw_rate.max(0.0),
        raw_rate,
        phase_error,
        degenerate: false,
    })
}

/// Converts a per-pair rate to a per-round rate for the scenario:
/// multiplies by `r_p / (4 p^2)`.
pub fn pairs_to_rounds(pair_rate: f64, scenario: &Scenario) -> Result<f64> {
    let p = model::round_click_prob(scenario);
    if !(p > 0.0) {
        return Err(Error::Degenerate("click probability is zero"));
    }
    Ok(pair_rate * model::pairing_rate(p.min(1.0), scenario.lambda)? / (4.0 * p * p))
}

/// Full decoy pipeline on noise-free observables of the scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoyEstimate {
    pub observables: DecoyObservables,
    pub bounds: DecoyBounds,
    pub pair_rate: DecoyRate,
    /// Key rate per round, comparable with [`crate::model::key_rate`].
    pub rate: f64,
}

#[cfg(feature = "std")]
pub fn estimate_key_rate(scenario: &Scenario, config: &DecoyConfig) -> Result<DecoyEstimate> {
    let observables = expected_observables(scenario, config)?;
    let bounds = bound_single_photon(&observables, config)?;
    let signal = observables
        .find(Basis::Z, PairIntensityVector::SIGNAL_Z)
        .ok_or(Error::Degenerate("signal vector has zero prior"))?;
    let pair_rate = decoy_key_rate(&bounds, signal.gain, signal.error_rate(), &scenario.params)?;
    let rate = pairs_to_rounds(pair_rate.rate, scenario)?;
    Ok(DecoyEstimate {
        observables,
        bounds,
        pair_rate,
        rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::PairingInterval;

    fn scenario(l_a: f64, l_b: f64, mu: (f64, f64), nu: (f64, f64)) -> Scenario {
        Scenario::from_distances(
            l_a,
            l_b,
            mu.0,
            mu.1,
            PairingInterval::Infinite,
            SystemParams::standard(),
        )
        .unwrap()
        .with_decoys(nu.0, nu.1)
        .unwrap()
    }

    #[test]
    fn pair_sums_from_levels() {
        use Level::*;
        assert_eq!(PairSum::of(Vacuum, Vacuum), PairSum::Zero);
        assert_eq!(PairSum::of(Signal, Vacuum), PairSum::Mu);
        assert_eq!(PairSum::of(Decoy, Signal), PairSum::NuMu);
        assert_eq!(PairSum::of(Signal, Signal), PairSum::TwoMu);
        assert_eq!(PairSum::NuMu.value(0.1, 0.5), 0.6);
    }

    #[test]
    fn priors() {
        let all_vacuum = DecoyConfig::new(1.0, 0.0, 0.0).unwrap();
        for (v, q) in pair_intensity_prior(&all_vacuum) {
            let expect = if v == PairIntensityVector::new(PairSum::Zero, PairSum::Zero) {
                1.0
            } else {
                0.0
            };
            assert_eq!(q, expect);
        }
        let c = DecoyConfig::new(0.25, 0.25, 0.5).unwrap();
        let prior = pair_intensity_prior(&c);
        let total: f64 = prior.iter().map(|(_, q)| q).sum();
        assert!((total - 1.0).abs() < 1e-15);
        let q = |a, b| {
            prior
                .iter()
                .find(|(v, _)| *v == PairIntensityVector::new(a, b))
                .unwrap()
                .1
        };
        assert!((q(PairSum::TwoMu, PairSum::TwoMu) - 0.0625).abs() < 1e-15);
        let third = DecoyConfig::new(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0).unwrap();
        let prior = pair_intensity_prior(&third);
        let q = |a, b| {
            prior
                .iter()
                .find(|(v, _)| *v == PairIntensityVector::new(a, b))
                .unwrap()
                .1
        };
        assert!((q(PairSum::NuMu, PairSum::Zero) / q(PairSum::TwoMu, PairSum::Zero) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(DecoyConfig::new(0.5, 0.2, 0.2).is_err());
        assert!(DecoyConfig::new(-0.1, 0.6, 0.5).is_err());
        assert!(DecoyConfig::default().with_cutoffs(1, 24).is_err());
        assert!(DecoyConfig::default().with_cutoffs(10, 5).is_err());
        DecoyConfig::default().validate().unwrap();
    }

    #[test]
    fn poisson_pairs() {
        assert_eq!(poisson_pair_prob((0, 0), (0.0, 0.0)), 1.0);
        assert_eq!(poisson_pair_prob((1, 0), (0.0, 0.0)), 0.0);
        assert!((poisson_pair_prob((1, 1), (0.1, 0.1)) - 8.187307530779819e-3).abs() < 1e-17);
    }

    #[test]
    fn posteriors() {
        let s = scenario(100.0, 150.0, (0.24, 0.76), (0.05, 0.05));
        let vac = DecoyConfig::new(1.0, 0.0, 0.0).unwrap();
        let post = posterior_intensity_given_photons((0, 0), &s, &vac).unwrap();
        let zero = PairIntensityVector::new(PairSum::Zero, PairSum::Zero);
        assert_eq!(post.iter().find(|(v, _)| *v == zero).unwrap().1, 1.0);
        assert!(posterior_intensity_given_photons((1, 0), &s, &vac).is_err());

        let third = DecoyConfig::new(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0).unwrap();
        for k in [(0, 0), (1, 1), (3, 2)] {
            let post = posterior_intensity_given_photons(k, &s, &third).unwrap();
            let total: f64 = post.iter().map(|(_, p)| p).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
        let post = posterior_intensity_given_photons((1, 1), &s, &third).unwrap();
        for (v, p) in post {
            if v.a == PairSum::Zero || v.b == PairSum::Zero {
                assert_eq!(p, 0.0);
            }
        }
    }

    #[test]
    fn blackout_channel_observes_nothing() {
        let params = SystemParams::standard().with_dark_count(0.0);
        let s = Scenario::from_distances(100.0, 100.0, 0.5, 0.5, PairingInterval::Infinite, params)
            .unwrap()
            .with_decoys(0.1, 0.1)
            .unwrap();
        let mut blind = s;
        blind.link_a = crate::params::Link::from_transmittance(f64::MIN_POSITIVE, &params).unwrap();
        blind.link_b = blind.link_a;
        let obs = expected_observables(&blind, &DecoyConfig::default()).unwrap();
        for o in obs.z.iter().chain(&obs.x) {
            assert!(o.gain < 1e-300 && o.error <= o.gain);
        }
    }

    #[test]
    fn observables_cover_both_bases() {
        let s = scenario(100.0, 150.0, (0.24, 0.76), (0.05, 0.05));
        let obs = expected_observables(&s, &DecoyConfig::default()).unwrap();
        assert_eq!(obs.z.len(), 9);
        assert_eq!(obs.x.len(), 9);
        for o in obs.z.iter().chain(&obs.x) {
            assert!(0.0 <= o.error && o.error <= o.gain && o.gain <= 1.0);
        }
    }

    #[test]
    fn forward_cutoff_too_small_is_reported() {
        let s = scenario(100.0, 150.0, (0.9, 0.9), (0.05, 0.05));
        let config = DecoyConfig::default().with_cutoffs(4, 6).unwrap();
        assert!(matches!(
            expected_observables(&s, &config),
            Err(Error::Truncation { .. })
        ));
    }

    #[test]
    fn signal_observable_matches_model() {
        let s = scenario(100.0, 150.0, (0.24, 0.76), (0.05, 0.05));
        let obs = expected_observables(&s, &DecoyConfig::default()).unwrap();
        let signal = obs.find(Basis::Z, PairIntensityVector::SIGNAL_Z).unwrap();
        let k = model::key_rate(&s).unwrap();
        let p2 = k.p * k.p;
        assert!((signal.gain / (4.0 * k.r_s * p2) - 1.0).abs() < 1e-10);
        assert!((signal.error_rate() / k.e_z - 1.0).abs() < 1e-9);
        let single = poisson_pair_prob((1, 1), signal.sums) * PhotonYields::new(&s, 2).unwrap().get(Basis::Z, (1, 1)).0;
        assert!((single / (4.0 * k.q_bar_11 * k.r_s * p2) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn zero_phase_information_gives_no_key() {
        let bounds = DecoyBounds {
            z: BasisBounds {
                m11_lower: 1e-7,
                e11_upper: 1e-8,
            },
            x: BasisBounds {
                m11_lower: 1e-7,
                e11_upper: 0.5e-7,
            },
            z_per_vector: alloc::vec![VectorBounds {
                vector: PairIntensityVector::SIGNAL_Z,
                m11_lower: 1e-8,
                e11_upper: 1e-9,
            }],
        };
        let params = SystemParams::standard();
        let r = decoy_key_rate(&bounds, 1e-7, 0.0, &params).unwrap();
        assert_eq!(r.rate, 0.0);
        assert_eq!(r.phase_error, 0.5);

        let mut good = bounds.clone();
        good.x.e11_upper = 0.04e-7;
        let r = decoy_key_rate(&good, 1e-7, 0.0, &params).unwrap();
        assert!((r.rate - 1e-8 * (1.0 - entropy(0.04))).abs() < 1e-20);

        good.x.m11_lower = 0.0;
        let r = decoy_key_rate(&good, 1e-7, 0.0, &params).unwrap();
        assert!(r.degenerate && r.rate == 0.0);
    }
}
