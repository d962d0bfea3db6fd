//! Asymptotic key-rate model.
//!
//! Every round, Alice and Bob independently send vacuum or their signal
//! intensity with probability 1/2 each. Two clicked rounds `i < j` form a
//! pair; the pair is a Z pair when `z_i xor z_j = 11`. The key rate per
//! round is
//!
//! ```text
//! R = r_p(p, lambda) * r_s * { q11 * [1 - H(e11)] - f * H(e_z) }
//! ```
//!
//! with `p` the click probability per round, `r_p` the pairing rate, `r_s`
//! the fraction of pairs that are Z pairs, `q11` the single-photon fraction
//! among Z pairs, `e11` the single-photon phase error and `e_z` the Z-pair
//! bit error rate.

use crate::error::{Error, Result};
use crate::math;
use crate::params::{ClickModel, IntensityBits, PairingInterval, Scenario, SystemParams};

/// Click probability for a round with mean arrival photon number `x`.
fn click_from_mean(x: f64, p_d: f64, model: ClickModel) -> f64 {
    match model {
        // 1 - (1 - 2p_d) e^{-x}, written to keep precision when x and p_d are tiny.
        ClickModel::Exact => -math::expm1(-x) + 2.0 * p_d * math::exp(-x),
        ClickModel::Linearized => 2.0 * p_d + (1.0 - 2.0 * p_d) * x,
    }
}

/// `Pr(C = 1 | z)` for the intensity selector `z`.
pub fn click_prob_given_intensity(z: IntensityBits, scenario: &Scenario) -> f64 {
    let x = arrival_mean(z, scenario);
    click_from_mean(x, scenario.params.p_d, scenario.click_model)
}

fn arrival_mean(z: IntensityBits, s: &Scenario) -> f64 {
    let a = if z.a { s.link_a.eta() * s.mu_a } else { 0.0 };
    let b = if z.b { s.link_b.eta() * s.mu_b } else { 0.0 };
    a + b
}

/// `Pr(C = 1 | n_a, n_b)` for Fock-state inputs.
pub fn click_prob_given_photons(n_a: u32, n_b: u32, scenario: &Scenario) -> f64 {
    click_prob_for_photons(
        n_a,
        n_b,
        scenario.link_a.eta(),
        scenario.link_b.eta(),
        scenario.params.p_d,
    )
}

pub(crate) fn click_prob_for_photons(n_a: u32, n_b: u32, eta_a: f64, eta_b: f64, p_d: f64) -> f64 {
    // log of (1-eta_a)^n_a (1-eta_b)^n_b; eta = 1 sends it to -inf, which exp handles.
    let log_miss = n_a as f64 * math::ln_1p(-eta_a) + n_b as f64 * math::ln_1p(-eta_b);
    let log_miss = if log_miss.is_nan() { f64::NEG_INFINITY } else { log_miss };
    -math::expm1(log_miss) + 2.0 * p_d * math::exp(log_miss)
}

/// Probability that a round produces a single-detector click.
pub fn round_click_prob(scenario: &Scenario) -> f64 {
    IntensityBits::ALL
        .iter()
        .map(|&z| click_prob_given_intensity(z, scenario))
        .sum::<f64>()
        / 4.0
}

/// Expected pairs formed per round for click probability `p`.
///
/// The `p = 0` limit is 0.
pub fn pairing_rate(p: f64, lambda: PairingInterval) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain("p", p, "0 <= p <= 1"));
    }
    lambda.validate()?;
    if p == 0.0 {
        return Ok(0.0);
    }
    let rate = match lambda {
        PairingInterval::Infinite => p / 2.0,
        PairingInterval::Rounds(n) => {
            // 1 - (1-p)^lambda
            let reach = if p == 1.0 {
                1.0
            } else {
                -math::expm1(n as f64 * math::ln_1p(-p))
            };
            1.0 / (1.0 / (p * reach) + 1.0 / p)
        }
    };
    Ok(rate)
}

/// Binary entropy in bits, with `H(0) = H(1) = 0`.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::domain("x", x, "0 <= x <= 1"));
    }
    Ok(entropy(x))
}

pub(crate) fn entropy(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        0.0
    } else {
        -x * math::log2(x) - (1.0 - x) * math::log2(1.0 - x)
    }
}

/// Click probabilities shared by the Z-pair quantities.
struct ZPairSums {
    p: f64,
    /// `sum_{z_i xor z_j = 11} Pr(C|z_i) Pr(C|z_j)`
    effective: f64,
    /// Same sum restricted to `[00,11]` and `[11,00]`.
    erroneous: f64,
    /// Same sum with Fock inputs `n = z`.
    single_photon: f64,
}

impl ZPairSums {
    fn new(s: &Scenario) -> Self {
        let by_z = IntensityBits::ALL.map(|z| click_prob_given_intensity(z, s));
        let by_n = IntensityBits::ALL.map(|z| click_prob_given_photons(z.a as u32, z.b as u32, s));
        let p = by_z.iter().sum::<f64>() / 4.0;
        let mut effective = 0.0;
        let mut erroneous = 0.0;
        let mut single_photon = 0.0;
        for z in IntensityBits::ALL {
            let w = z.complement();
            let term = by_z[z.index()] * by_z[w.index()];
            effective += term;
            if z.a == z.b {
                erroneous += term;
            }
            single_photon += by_n[z.index()] * by_n[w.index()];
        }
        ZPairSums {
            p,
            effective,
            erroneous,
            single_photon,
        }
    }

    fn r_s(&self) -> Result<f64> {
        if self.p <= 0.0 {
            return Err(Error::Degenerate("click probability is zero"));
        }
        Ok(self.effective / (16.0 * self.p * self.p))
    }

    fn check_effective(&self) -> Result<()> {
        if self.effective <= 0.0 {
            return Err(Error::Degenerate("Z-pair ratio is zero"));
        }
        Ok(())
    }

    fn e_z(&self) -> Result<f64> {
        self.check_effective()?;
        Ok(self.erroneous / self.effective)
    }

    fn q11(&self, s: &Scenario) -> Result<f64> {
        self.check_effective()?;
        let weight = poisson(1, s.mu_a) * poisson(1, s.mu_b);
        Ok(weight * self.single_photon / self.effective)
    }
}

pub(crate) fn poisson(k: u32, mean: f64) -> f64 {
    if mean == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    math::exp(-mean + k as f64 * math::ln(mean)) / math::factorial(k)
}

/// Fraction of clicked pairs that are Z pairs.
pub fn z_pair_ratio(scenario: &Scenario) -> Result<f64> {
    ZPairSums::new(scenario).r_s()
}

/// Expected bit error rate of Z pairs.
pub fn z_bit_error(scenario: &Scenario) -> Result<f64> {
    let sums = ZPairSums::new(scenario);
    sums.r_s()?;
    sums.e_z()
}

/// Fraction of Z pairs in which each party emitted exactly one photon.
pub fn single_photon_ratio(scenario: &Scenario) -> Result<f64> {
    let sums = ZPairSums::new(scenario);
    sums.r_s()?;
    sums.q11(scenario)
}

/// Single-photon X-pair gain `Y11` and phase error `e11`.
pub fn x_gain_and_phase_error(scenario: &Scenario) -> Result<(f64, f64)> {
    x_gain_and_phase_error_for(scenario.link_a.eta(), scenario.link_b.eta(), &scenario.params)
}

pub(crate) fn x_gain_and_phase_error_for(eta_a: f64, eta_b: f64, params: &SystemParams) -> Result<(f64, f64)> {
    let p_d = params.p_d;
    let e0 = SystemParams::VACUUM_ERROR;
    let coincidence = eta_a * eta_b / 2.0;
    let keep = (1.0 - p_d) * (1.0 - p_d);
    let gain = keep
        * (coincidence
            + (2.0 * eta_a + 2.0 * eta_b - 3.0 * eta_a * eta_b) * p_d
            + 4.0 * (1.0 - eta_a) * (1.0 - eta_b) * p_d * p_d);
    if gain <= 0.0 {
        return Err(Error::Degenerate("single-photon X gain is zero"));
    }
    let error = (e0 * gain - (e0 - params.e_d) * (1.0 - p_d * p_d) * coincidence) / gain;
    Ok((gain, error))
}

/// All intermediate quantities of the key-rate formula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyRateBreakdown {
    pub p: f64,
    pub r_p: f64,
    pub r_s: f64,
    pub q_bar_11: f64,
    pub e_z: f64,
    pub y_11: f64,
    pub e_11: f64,
    /// Key rate before clamping; negative when error correction costs more
    /// than privacy amplification leaves.
    pub raw_rate: f64,
    /// `max(raw_rate, 0)`.
    pub rate: f64,
}

/// Asymptotic secret-key rate per round.
pub fn key_rate(scenario: &Scenario) -> Result<KeyRateBreakdown> {
    let sums = ZPairSums::new(scenario);
    let r_s = sums.r_s()?;
    let e_z = sums.e_z()?;
    let q_bar_11 = sums.q11(scenario)?;
    let r_p = pairing_rate(sums.p.min(1.0), scenario.lambda)?;
    let (y_11, e_11) = x_gain_and_phase_error(scenario)?;
    let f = scenario.params.f;
    let raw_rate = r_p * r_s * (q_bar_11 * (1.0 - entropy(e_11)) - f * entropy(e_z));
    Ok(KeyRateBreakdown {
        p: sums.p,
        r_p,
        r_s,
        q_bar_11,
        e_z,
        y_11,
        e_11,
        raw_rate,
        rate: raw_rate.max(0.0),
    })
}
