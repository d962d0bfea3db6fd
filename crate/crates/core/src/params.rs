//! Device constants, fiber links and protocol scenarios.

use core::fmt;

use crate::error::{Error, Result};
use crate::math;

/// Detector, fiber and post-processing constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    /// Detector efficiency, in (0, 1].
    pub eta_d: f64,
    /// Fiber attenuation in dB/km.
    pub alpha: f64,
    /// Dark-count probability per detector per round.
    pub p_d: f64,
    /// Error-correction inefficiency, >= 1.
    pub f: f64,
    /// Misalignment error probability, in [0, 0.5).
    pub e_d: f64,
}

impl SystemParams {
    /// Error rate of a vacuum contribution.
    pub const VACUUM_ERROR: f64 = 0.5;

    /// The reference device: 20% detectors, 0.2 dB/km fiber, 1.2e-8 dark
    /// counts, f = 1.15 and 4% misalignment.
    pub const fn standard() -> Self {
        SystemParams {
            eta_d: 0.2,
            alpha: 0.2,
            p_d: 1.2e-8,
            f: 1.15,
            e_d: 0.04,
        }
    }

    pub fn with_dark_count(mut self, p_d: f64) -> Self {
        self.p_d = p_d;
        self
    }

    pub fn with_misalignment(mut self, e_d: f64) -> Self {
        self.e_d = e_d;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta_d > 0.0 && self.eta_d <= 1.0) {
            return Err(Error::domain("eta_d", self.eta_d, "0 < eta_d <= 1"));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::domain("alpha", self.alpha, "alpha > 0"));
        }
        if !(0.0..1.0).contains(&self.p_d) {
            return Err(Error::domain("p_d", self.p_d, "0 <= p_d < 1"));
        }
        if !(self.f >= 1.0 && self.f.is_finite()) {
            return Err(Error::domain("f", self.f, "f >= 1"));
        }
        if !(0.0..0.5).contains(&self.e_d) {
            return Err(Error::domain("e_d", self.e_d, "0 <= e_d < 0.5"));
        }
        Ok(())
    }
}

impl Default for SystemParams {
    fn default() -> Self {
        Self::standard()
    }
}

/// Transmittance of a fiber arm of length `distance_km`, detector included.
pub fn transmittance_from_distance(distance_km: f64, params: &SystemParams) -> Result<f64> {
    if !(distance_km >= 0.0) || !distance_km.is_finite() {
        return Err(Error::domain("distance_km", distance_km, "finite distance >= 0"));
    }
    Ok(params.eta_d * math::powf(10.0, -params.alpha * distance_km / 10.0))
}

/// Inverse of [`transmittance_from_distance`].
pub fn distance_from_transmittance(eta: f64, params: &SystemParams) -> Result<f64> {
    if !(eta > 0.0 && eta <= params.eta_d) {
        return Err(Error::domain("eta", eta, "0 < eta <= eta_d"));
    }
    Ok(10.0 * math::log10(params.eta_d / eta) / params.alpha)
}

/// One fiber arm. Distance and transmittance are kept consistent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    distance_km: f64,
    eta: f64,
}

impl Link {
    pub fn from_distance(distance_km: f64, params: &SystemParams) -> Result<Self> {
        let eta = transmittance_from_distance(distance_km, params)?;
        Ok(Link { distance_km, eta })
    }

    pub fn from_transmittance(eta: f64, params: &SystemParams) -> Result<Self> {
        let distance_km = distance_from_transmittance(eta, params)?;
        Ok(Link { distance_km, eta })
    }

    pub fn distance_km(&self) -> f64 {
        self.distance_km
    }

    /// Total arm transmittance, detector efficiency included.
    pub fn eta(&self) -> f64 {
        self.eta
    }
}

/// Maximal number of rounds between two paired clicks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PairingInterval {
    Rounds(u64),
    Infinite,
}

impl PairingInterval {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PairingInterval::Rounds(0) => Err(Error::domain("lambda", 0.0, "lambda >= 1")),
            _ => Ok(()),
        }
    }

    /// Whether two clicks `gap` rounds apart may be paired.
    pub fn admits(&self, gap: u64) -> bool {
        match *self {
            PairingInterval::Rounds(max) => gap <= max,
            PairingInterval::Infinite => true,
        }
    }
}

impl fmt::Display for PairingInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PairingInterval::Rounds(n) => write!(f, "{n}"),
            PairingInterval::Infinite => f.write_str("inf"),
        }
    }
}

impl core::str::FromStr for PairingInterval {
    type Err = Error;

    /// Accepts `inf`/`infinite`, plain integers and integral floats such as `1e6`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("infinite") {
            return Ok(PairingInterval::Infinite);
        }
        if let Ok(n) = s.parse::<u64>() {
            let lambda = PairingInterval::Rounds(n);
            lambda.validate()?;
            return Ok(lambda);
        }
        match s.parse::<f64>() {
            Ok(x) if (1.0..1.8e19).contains(&x) && (x as u64) as f64 == x => Ok(PairingInterval::Rounds(x as u64)),
            Ok(x) => Err(Error::domain("lambda", x, "integer >= 1 or inf")),
            Err(_) => Err(Error::domain("lambda", f64::NAN, "integer >= 1 or inf")),
        }
    }
}

/// Per-round intensity selector `[z_a, z_b]`: `true` means the signal
/// intensity was sent, `false` vacuum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IntensityBits {
    pub a: bool,
    pub b: bool,
}

impl IntensityBits {
    pub const ALL: [IntensityBits; 4] = [
        IntensityBits::new(false, false),
        IntensityBits::new(false, true),
        IntensityBits::new(true, false),
        IntensityBits::new(true, true),
    ];

    pub const fn new(a: bool, b: bool) -> Self {
        IntensityBits { a, b }
    }

    /// The selector `z_j` with `z_i xor z_j = 11`.
    pub const fn complement(self) -> Self {
        IntensityBits::new(!self.a, !self.b)
    }

    /// Position in [`IntensityBits::ALL`].
    pub const fn index(self) -> usize {
        (self.a as usize) << 1 | self.b as usize
    }
}

/// How the click probability depends on the mean photon number arriving at
/// the measurement node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClickModel {
    /// `1 - (1 - 2 p_d) exp(-x)`.
    #[default]
    Exact,
    /// First-order expansion `2 p_d + (1 - 2 p_d) x`, which reduces to `x`
    /// without dark counts. Used for the closed-form checks.
    Linearized,
}

/// A complete operating point: both arms, intensities, pairing interval and
/// device constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    pub link_a: Link,
    pub link_b: Link,
    /// Signal intensities, photons per pulse.
    pub mu_a: f64,
    pub mu_b: f64,
    /// Decoy intensities; only the decoy module reads them.
    pub nu_a: f64,
    pub nu_b: f64,
    pub lambda: PairingInterval,
    pub params: SystemParams,
    pub click_model: ClickModel,
}

impl Scenario {
    /// Builds a canonical scenario (Alice's arm no longer than Bob's) with
    /// no decoys and an infinite pairing interval.
    pub fn new(link_a: Link, link_b: Link, mu_a: f64, mu_b: f64, params: SystemParams) -> Result<Self> {
        let scenario = Scenario {
            link_a,
            link_b,
            mu_a,
            mu_b,
            nu_a: 0.0,
            nu_b: 0.0,
            lambda: PairingInterval::Infinite,
            params,
            click_model: ClickModel::Exact,
        };
        scenario.validate()?;
        scenario.check_canonical()?;
        Ok(scenario)
    }

    pub fn from_distances(
        l_a: f64,
        l_b: f64,
        mu_a: f64,
        mu_b: f64,
        lambda: PairingInterval,
        params: SystemParams,
    ) -> Result<Self> {
        params.validate()?;
        let link_a = Link::from_distance(l_a, &params)?;
        let link_b = Link::from_distance(l_b, &params)?;
        Scenario::new(link_a, link_b, mu_a, mu_b, params)?.with_interval(lambda)
    }

    pub fn with_interval(mut self, lambda: PairingInterval) -> Result<Self> {
        lambda.validate()?;
        self.lambda = lambda;
        Ok(self)
    }

    pub fn with_decoys(mut self, nu_a: f64, nu_b: f64) -> Result<Self> {
        self.nu_a = nu_a;
        self.nu_b = nu_b;
        self.validate()?;
        Ok(self)
    }

    pub fn with_click_model(mut self, model: ClickModel) -> Self {
        self.click_model = model;
        self
    }

    pub fn with_intensities(mut self, mu_a: f64, mu_b: f64) -> Result<Self> {
        self.mu_a = mu_a;
        self.mu_b = mu_b;
        self.validate()?;
        Ok(self)
    }

    /// Exchanges the roles of Alice and Bob. The result is generally not
    /// canonical; every model function accepts it.
    pub fn swap_arms(&self) -> Self {
        Scenario {
            link_a: self.link_b,
            link_b: self.link_a,
            mu_a: self.mu_b,
            mu_b: self.mu_a,
            nu_a: self.nu_b,
            nu_b: self.nu_a,
            ..*self
        }
    }

    /// `eta_a / eta_b`.
    pub fn transmittance_ratio(&self) -> f64 {
        self.link_a.eta() / self.link_b.eta()
    }

    /// Checks everything except the arm-ordering convention.
    ///
    /// Intensities may be 0 (vacuum-only sources are useful edge cases);
    /// the optimizer itself searches (0, 1].
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.lambda.validate()?;
        for (name, mu) in [("mu_a", self.mu_a), ("mu_b", self.mu_b)] {
            if !(0.0..=1.0).contains(&mu) {
                return Err(Error::domain(name, mu, "0 <= mu <= 1"));
            }
        }
        for (name, nu, mu) in [("nu_a", self.nu_a, self.mu_a), ("nu_b", self.nu_b, self.mu_b)] {
            if !(nu >= 0.0 && (nu < mu || nu == 0.0)) {
                return Err(Error::domain(name, nu, "0 <= nu < mu"));
            }
        }
        Ok(())
    }

    /// Alice sits on the shorter arm, so `eta_a / eta_b >= 1`.
    pub fn check_canonical(&self) -> Result<()> {
        if self.link_a.distance_km() > self.link_b.distance_km() {
            return Err(Error::domain(
                "l_a",
                self.link_a.distance_km(),
                "l_a <= l_b (Alice on the shorter arm)",
            ));
        }
        Ok(())
    }
}
