//! Sweep configuration: the JSON document, its presets and validation.

use std::path::PathBuf;

use mpqkd_core::optimizer::PlobConvention;
use mpqkd_core::{PairingInterval, SystemParams};
use serde::Deserialize;

use crate::error::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Table2,
    Table3,
    Table4,
    Table5,
    Fig3,
    Fig4,
    Fig5,
    Fig6,
    Fig7,
    Custom,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Table2 => "table2",
            Mode::Table3 => "table3",
            Mode::Table4 => "table4",
            Mode::Table5 => "table5",
            Mode::Fig3 => "fig3",
            Mode::Fig4 => "fig4",
            Mode::Fig5 => "fig5",
            Mode::Fig6 => "fig6",
            Mode::Fig7 => "fig7",
            Mode::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Deserialize)]
pub enum Method {
    /// Optimal intensities.
    #[serde(rename = "OI")]
    OptimalIntensity,
    /// Adding fiber to the shorter arm.
    #[serde(rename = "AF")]
    AddingFiber,
    #[serde(rename = "PLOB")]
    Plob,
    #[serde(rename = "fixed")]
    FixedIntensity,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::OptimalIntensity => "OI",
            Method::AddingFiber => "AF",
            Method::Plob => "PLOB",
            Method::FixedIntensity => "fixed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlobConventionName {
    ChannelOnly,
    WithDetector,
}

impl From<PlobConventionName> for PlobConvention {
    fn from(c: PlobConventionName) -> Self {
        match c {
            PlobConventionName::ChannelOnly => PlobConvention::ChannelOnly,
            PlobConventionName::WithDetector => PlobConvention::WithDetector,
        }
    }
}

/// `start..=stop` in steps of `step`, km.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistanceGrid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl DistanceGrid {
    pub fn points(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|i| self.start + i as f64 * self.step).collect()
    }

    fn check(&self, field: &str, errors: &mut Vec<String>) {
        if !(self.step > 0.0 && self.step.is_finite()) {
            errors.push(format!("{field}.step must be > 0"));
        }
        if !(self.start >= 0.0 && self.stop >= self.start && self.stop.is_finite()) {
            errors.push(format!("{field} needs 0 <= start <= stop"));
        }
    }
}

/// A pairing interval written as a number or `"inf"`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum LambdaValue {
    Number(f64),
    Text(String),
}

impl LambdaValue {
    fn resolve(&self) -> Result<PairingInterval, String> {
        match self {
            LambdaValue::Number(x) => x.to_string().parse(),
            LambdaValue::Text(s) => s.parse(),
        }
        .map_err(|_| format!("lambdas: {self:?} is not a positive integer or \"inf\""))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsOverride {
    pub eta_d: Option<f64>,
    pub alpha: Option<f64>,
    pub p_d: Option<f64>,
    pub f: Option<f64>,
    pub e_d: Option<f64>,
}

/// Decoy settings for the verification pass.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoySpec {
    /// Decoy selection probability per party.
    pub s_nu: f64,
    /// Decoy intensity as a fraction of the signal.
    pub nu_fraction: f64,
}

/// The configuration document. Omitted fields take the mode's preset.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub mode: Mode,
    /// Alice's arm for point modes, km.
    pub l_a: Option<f64>,
    /// Total-distance grid for sweep modes, km.
    pub distance: Option<DistanceGrid>,
    /// Arm length differences `l_b - l_a`, km.
    pub deltas: Option<Vec<f64>>,
    pub lambdas: Option<Vec<LambdaValue>>,
    pub e_d: Option<Vec<f64>>,
    pub methods: Option<Vec<Method>>,
    pub fixed_intensities: Option<[f64; 2]>,
    pub output: Option<PathBuf>,
    pub seed: Option<u64>,
    /// Rounds per Monte Carlo verification point.
    pub mc_rounds: Option<u64>,
    pub params: Option<ParamsOverride>,
    pub plob_convention: Option<PlobConventionName>,
    /// Sweep curves stop once the rate falls below this.
    pub cutoff: Option<f64>,
    pub decoy: Option<DecoySpec>,
}

impl SweepSpec {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        serde_json::from_str(text).map_err(|e| SimError::Validation(format!("config: {e}")))
    }
}

/// Where the grid points come from.
#[derive(Debug, Clone, PartialEq)]
pub enum Layout {
    /// Fixed Alice arm; one point per difference.
    Points { l_a: f64 },
    /// Total distances `l_a + l_b`, with `l_a = (total - delta) / 2`.
    Sweep { totals: Vec<f64> },
}

/// A validated spec with every preset filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedSpec {
    pub mode: Mode,
    pub layout: Layout,
    pub deltas: Vec<f64>,
    pub lambdas: Vec<PairingInterval>,
    pub e_d: Vec<f64>,
    pub methods: Vec<Method>,
    pub fixed_intensities: Option<(f64, f64)>,
    pub output: Option<PathBuf>,
    pub seed: u64,
    pub mc_rounds: u64,
    pub params: SystemParams,
    pub plob_convention: PlobConvention,
    pub cutoff: f64,
    pub decoy: DecoySpec,
}

const DEFAULT_SEED: u64 = 20_240_601;
const DEFAULT_MC_ROUNDS: u64 = 10_000_000;
const CURVE_CUTOFF: f64 = 1e-12;
const REFERENCE_L_A: f64 = 100.0;
const FIGURE_GRID: DistanceGrid = DistanceGrid {
    start: 0.0,
    stop: 600.0,
    step: 5.0,
};

fn decades(up_to: u32) -> Vec<PairingInterval> {
    (0..=up_to).map(|k| PairingInterval::Rounds(10u64.pow(k))).collect()
}

struct Preset {
    sweep: bool,
    deltas: Vec<f64>,
    lambdas: Vec<PairingInterval>,
    e_d: Vec<f64>,
    methods: Vec<Method>,
}

fn preset(mode: Mode) -> Option<Preset> {
    use Method::*;
    let long = PairingInterval::Rounds(1_000_000);
    let e_d = vec![SystemParams::standard().e_d];
    let table = |deltas: Vec<f64>, lambdas| Preset {
        sweep: false,
        deltas,
        lambdas,
        e_d: e_d.clone(),
        methods: vec![OptimalIntensity],
    };
    let figure = |deltas: Vec<f64>, lambdas, e_d, methods| Preset {
        sweep: true,
        deltas,
        lambdas,
        e_d,
        methods,
    };
    Some(match mode {
        Mode::Table2 => table(vec![0.0, 50.0, 100.0], vec![long]),
        Mode::Table3 => table(vec![0.0, 50.0, 100.0], vec![PairingInterval::Rounds(1)]),
        Mode::Table4 => table(vec![50.0], decades(6)),
        Mode::Table5 => table(vec![0.0], decades(6)),
        Mode::Fig3 => table(
            (0..=30).map(|i| 5.0 * i as f64).collect(),
            vec![long, PairingInterval::Rounds(1)],
        ),
        Mode::Fig4 => figure(
            vec![0.0, 50.0, 100.0, 150.0],
            vec![long],
            e_d.clone(),
            vec![OptimalIntensity, AddingFiber, Plob],
        ),
        Mode::Fig5 => figure(
            vec![0.0, 50.0, 100.0, 150.0],
            vec![PairingInterval::Rounds(1)],
            e_d.clone(),
            vec![OptimalIntensity, AddingFiber, Plob],
        ),
        Mode::Fig6 => figure(vec![50.0], decades(6), e_d.clone(), vec![OptimalIntensity, Plob]),
        Mode::Fig7 => figure(
            vec![0.0, 50.0, 100.0],
            vec![long],
            vec![0.04, 0.1, 0.2],
            vec![OptimalIntensity, Plob],
        ),
        Mode::Custom => return None,
    })
}

impl SweepSpec {
    /// Fills presets, applies the seed override and validates; every
    /// offending field is listed in the error.
    pub fn resolve(&self, seed_override: Option<u64>) -> Result<ResolvedSpec, SimError> {
        let mut errors = Vec::new();
        let preset = preset(self.mode);

        let sweep = match &preset {
            Some(p) => p.sweep,
            None => self.distance.is_some(),
        };
        let layout = if sweep {
            if self.l_a.is_some() {
                errors.push(format!(
                    "l_a is not used by {} (it sweeps total distance)",
                    self.mode.name()
                ));
            }
            let grid = self.distance.unwrap_or(FIGURE_GRID);
            let before = errors.len();
            grid.check("distance", &mut errors);
            let totals = if errors.len() == before {
                grid.points()
            } else {
                Vec::new()
            };
            Layout::Sweep { totals }
        } else {
            if self.distance.is_some() {
                errors.push(format!("distance is not used by {} (it fixes l_a)", self.mode.name()));
            }
            let l_a = match (self.l_a, &preset) {
                (Some(l), _) => l,
                (None, Some(_)) => REFERENCE_L_A,
                (None, None) => {
                    errors.push("custom mode needs either l_a or distance".into());
                    REFERENCE_L_A
                }
            };
            if !(l_a >= 0.0 && l_a.is_finite()) {
                errors.push(format!("l_a = {l_a} must be a finite distance >= 0"));
            }
            Layout::Points { l_a }
        };

        let deltas = pick(
            self.deltas.clone(),
            preset.as_ref().map(|p| p.deltas.clone()),
            "deltas",
            &mut errors,
        );
        if deltas.iter().any(|d| !(*d >= 0.0 && d.is_finite())) {
            errors.push("deltas must be finite and >= 0".into());
        }

        let lambdas = match &self.lambdas {
            Some(list) => list
                .iter()
                .filter_map(|l| l.resolve().map_err(|e| errors.push(e)).ok())
                .collect(),
            None => preset.as_ref().map(|p| p.lambdas.clone()).unwrap_or_default(),
        };
        if lambdas.is_empty() {
            errors.push("lambdas must be a nonempty list".into());
        }

        let mut params = SystemParams::standard();
        if let Some(o) = self.params {
            params.eta_d = o.eta_d.unwrap_or(params.eta_d);
            params.alpha = o.alpha.unwrap_or(params.alpha);
            params.p_d = o.p_d.unwrap_or(params.p_d);
            params.f = o.f.unwrap_or(params.f);
            params.e_d = o.e_d.unwrap_or(params.e_d);
        }
        if let Err(e) = params.validate() {
            errors.push(format!("params: {e}"));
        }

        let e_d = match (&self.e_d, &preset) {
            (Some(list), _) => list.clone(),
            (None, Some(p)) if self.params.and_then(|o| o.e_d).is_none() => p.e_d.clone(),
            _ => vec![params.e_d],
        };
        if e_d.is_empty() {
            errors.push("e_d must be a nonempty list".into());
        }
        for &e in &e_d {
            if let Err(err) = params.with_misalignment(e).validate() {
                errors.push(format!("e_d: {err}"));
            }
        }

        let methods = pick(
            self.methods.clone(),
            preset.as_ref().map(|p| p.methods.clone()),
            "methods",
            &mut errors,
        );
        let fixed_intensities = self.fixed_intensities.map(|[a, b]| (a, b));
        if methods.contains(&Method::FixedIntensity) {
            match fixed_intensities {
                None => errors.push("method \"fixed\" needs fixed_intensities".into()),
                Some((a, b)) if !(a > 0.0 && a <= 1.0 && b > 0.0 && b <= 1.0) => {
                    errors.push("fixed_intensities must lie in (0, 1]".into())
                }
                _ => {}
            }
        }

        let cutoff = self.cutoff.unwrap_or(CURVE_CUTOFF);
        if !(cutoff >= 0.0) {
            errors.push("cutoff must be >= 0".into());
        }
        let mc_rounds = self.mc_rounds.unwrap_or(DEFAULT_MC_ROUNDS);
        if mc_rounds == 0 {
            errors.push("mc_rounds must be >= 1".into());
        }
        let decoy = self.decoy.unwrap_or(DecoySpec {
            s_nu: 1e-3,
            nu_fraction: 0.1,
        });
        if !(decoy.s_nu > 0.0 && decoy.s_nu < 1.0) {
            errors.push("decoy.s_nu must lie in (0, 1)".into());
        }
        if !(decoy.nu_fraction > 0.0 && decoy.nu_fraction < 1.0) {
            errors.push("decoy.nu_fraction must lie in (0, 1)".into());
        }

        if !errors.is_empty() {
            return Err(SimError::Validation(errors.join("; ")));
        }
        Ok(ResolvedSpec {
            mode: self.mode,
            layout,
            deltas,
            lambdas,
            e_d,
            methods,
            fixed_intensities,
            output: self.output.clone(),
            seed: seed_override.or(self.seed).unwrap_or(DEFAULT_SEED),
            mc_rounds,
            params,
            plob_convention: self.plob_convention.map_or(PlobConvention::WithDetector, Into::into),
            cutoff,
            decoy,
        })
    }
}

fn pick<T>(given: Option<Vec<T>>, preset: Option<Vec<T>>, field: &str, errors: &mut Vec<String>) -> Vec<T> {
    let list = given.or(preset).unwrap_or_default();
    if list.is_empty() {
        errors.push(format!("{field} must be a nonempty list"));
    }
    list
}
