//! Protocol-level Monte Carlo: round sampling, click detection, pairing
//! within the maximal interval, basis sifting and key mapping.
//!
//! Rounds are generated in fixed-size chunks; chunk `c` draws from a
//! ChaCha8 stream seeded by the run seed with stream index `c`. Results are
//! therefore identical however the chunks are scheduled.

use alloc::vec::Vec;
use core::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Poisson};

use crate::decoy::{DecoyConfig, Level, PairIntensityVector, PairSum};
use crate::error::{Error, Result};
use crate::math;
use crate::params::{IntensityBits, PairingInterval, Scenario, SystemParams};

/// Rounds per RNG stream.
pub const CHUNK_ROUNDS: u64 = 1 << 16;
/// Phase slices for the X-pair alignment check.
pub const PHASE_SLICES: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Detector {
    Left,
    Right,
}

/// How each party picks its intensity level per round.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum SourceModel {
    /// Vacuum or signal with probability 1/2 each.
    #[default]
    Signal,
    /// Vacuum, decoy or signal with the configured probabilities.
    Decoy(DecoyConfig),
}

impl SourceModel {
    fn draw(&self, rng: &mut ChaCha8Rng) -> Level {
        match self {
            SourceModel::Signal => {
                if rng.random_bool(0.5) {
                    Level::Signal
                } else {
                    Level::Vacuum
                }
            }
            SourceModel::Decoy(c) => {
                let u: f64 = rng.random();
                if u < c.s_0 {
                    Level::Vacuum
                } else if u < c.s_0 + c.s_nu {
                    Level::Decoy
                } else {
                    Level::Signal
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            SourceModel::Signal => Ok(()),
            SourceModel::Decoy(c) => c.validate(),
        }
    }
}

/// One simulated round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundRecord {
    pub index: u64,
    pub level_a: Level,
    pub level_b: Level,
    /// Photons emitted by each party.
    pub photons: (u32, u32),
    /// The detector that clicked, when exactly one did.
    pub detector: Option<Detector>,
    /// Global phases of the two pulses, in `[0, 2 pi)`.
    pub phases: (f64, f64),
    /// Uniform draw deciding misalignment errors of X pairs closed here.
    pub misalignment: f64,
}

impl RoundRecord {
    pub fn clicked(&self) -> bool {
        self.detector.is_some()
    }

    /// Intensity selector bits (`true` for any nonvacuum level).
    pub fn bits(&self) -> IntensityBits {
        IntensityBits::new(self.level_a != Level::Vacuum, self.level_b != Level::Vacuum)
    }
}

/// Clicked rounds of a run, in index order.
#[derive(Debug, Clone, PartialEq)]
pub struct ClickLog {
    pub n_rounds: u64,
    pub clicks: Vec<RoundRecord>,
}

struct RoundSampler<'a> {
    scenario: &'a Scenario,
    source: SourceModel,
    poisson: [Option<Poisson<f64>>; 6],
}

impl<'a> RoundSampler<'a> {
    fn new(scenario: &'a Scenario, source: SourceModel) -> Result<Self> {
        scenario.validate()?;
        source.validate()?;
        let s = scenario;
        let means = [0.0, s.nu_a, s.mu_a, 0.0, s.nu_b, s.mu_b];
        let poisson = means.map(|m| if m > 0.0 { Poisson::new(m).ok() } else { None });
        Ok(RoundSampler {
            scenario,
            source,
            poisson,
        })
    }

    fn photons(&self, rng: &mut ChaCha8Rng, party: usize, level: Level) -> u32 {
        let slot = party * 3 + level as usize;
        match &self.poisson[slot] {
            Some(d) => d.sample(rng) as u32,
            None => 0,
        }
    }

    fn round(&self, rng: &mut ChaCha8Rng, index: u64) -> RoundRecord {
        let level_a = self.source.draw(rng);
        let level_b = self.source.draw(rng);
        let n_a = self.photons(rng, 0, level_a);
        let n_b = self.photons(rng, 1, level_b);
        let arrived = survivors(rng, n_a, self.scenario.link_a.eta()) + survivors(rng, n_b, self.scenario.link_b.eta());
        let left = survivors(rng, arrived, 0.5);
        let right = arrived - left;
        let p_d = self.scenario.params.p_d;
        let fire_left = left > 0 || rng.random_bool(p_d);
        let fire_right = right > 0 || rng.random_bool(p_d);
        let detector = match (fire_left, fire_right) {
            (true, false) => Some(Detector::Left),
            (false, true) => Some(Detector::Right),
            _ => None,
        };
        let phases = (rng.random::<f64>() * TAU, rng.random::<f64>() * TAU);
        RoundRecord {
            index,
            level_a,
            level_b,
            photons: (n_a, n_b),
            detector,
            phases,
            misalignment: rng.random(),
        }
    }

    fn chunk(&self, seed: u64, chunk: u64, n_rounds: u64, keep_all: bool) -> Vec<RoundRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(chunk);
        let start = chunk * CHUNK_ROUNDS;
        let end = (start + CHUNK_ROUNDS).min(n_rounds);
        (start..end)
            .map(|i| self.round(&mut rng, i))
            .filter(|r| keep_all || r.clicked())
            .collect()
    }
}

fn survivors(rng: &mut ChaCha8Rng, n: u32, p: f64) -> u32 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n as u64, p).map_or(0, |d| d.sample(rng) as u32)
}

fn chunk_count(n_rounds: u64) -> u64 {
    n_rounds.div_ceil(CHUNK_ROUNDS)
}

fn check_rounds(n_rounds: u64) -> Result<()> {
    if n_rounds == 0 {
        return Err(Error::domain("n_rounds", 0.0, "n_rounds >= 1"));
    }
    Ok(())
}

/// Every round of a run with the signal-only source.
pub fn simulate_rounds(scenario: &Scenario, n_rounds: u64, seed: u64) -> Result<Vec<RoundRecord>> {
    check_rounds(n_rounds)?;
    let sampler = RoundSampler::new(scenario, SourceModel::Signal)?;
    Ok((0..chunk_count(n_rounds))
        .flat_map(|c| sampler.chunk(seed, c, n_rounds, true))
        .collect())
}

/// Clicked rounds only, for runs too long to keep every round.
pub fn simulate_clicks(scenario: &Scenario, source: SourceModel, n_rounds: u64, seed: u64) -> Result<ClickLog> {
    check_rounds(n_rounds)?;
    let sampler = RoundSampler::new(scenario, source)?;
    let clicks = (0..chunk_count(n_rounds))
        .flat_map(|c| sampler.chunk(seed, c, n_rounds, false))
        .collect();
    Ok(ClickLog { n_rounds, clicks })
}

/// [`simulate_clicks`] with chunks spread over the rayon pool; the output
/// is identical.
#[cfg(feature = "std")]
pub fn simulate_clicks_parallel(
    scenario: &Scenario,
    source: SourceModel,
    n_rounds: u64,
    seed: u64,
) -> Result<ClickLog> {
    use rayon::prelude::*;

    check_rounds(n_rounds)?;
    let sampler = RoundSampler::new(scenario, source)?;
    let chunks: Vec<Vec<RoundRecord>> = (0..chunk_count(n_rounds))
        .into_par_iter()
        .map(|c| sampler.chunk(seed, c, n_rounds, false))
        .collect();
    Ok(ClickLog {
        n_rounds,
        clicks: chunks.into_iter().flatten().collect(),
    })
}

/// Two clicked rounds grouped together, `first.index < second.index`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClickPair {
    pub first: RoundRecord,
    pub second: RoundRecord,
}

/// Greedy pairing: a pending click pairs with the next click if it comes
/// within `lambda` rounds, and is dropped otherwise. Unclicked records are
/// skipped.
pub fn pair_clicks(records: &[RoundRecord], lambda: PairingInterval) -> Vec<ClickPair> {
    let mut pairs = Vec::new();
    let mut pending: Option<RoundRecord> = None;
    for r in records.iter().filter(|r| r.clicked()) {
        pending = match pending {
            Some(first) if lambda.admits(r.index - first.index) => {
                pairs.push(ClickPair { first, second: *r });
                None
            }
            _ => Some(*r),
        };
    }
    pairs
}

/// One party's announcement for a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PartyBasis {
    Z,
    X,
    Zero,
    /// Decoy in one round and signal in the other.
    Mixed,
}

impl PartyBasis {
    fn of(first: Level, second: Level) -> Self {
        match (first, second) {
            (Level::Vacuum, Level::Vacuum) => PartyBasis::Zero,
            (Level::Vacuum, _) | (_, Level::Vacuum) => PartyBasis::Z,
            (a, b) if a == b => PartyBasis::X,
            _ => PartyBasis::Mixed,
        }
    }
}

/// Sifting outcome of a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PairBasis {
    Z,
    X,
    Zero,
    Discard,
}

impl PairBasis {
    pub fn label(self) -> &'static str {
        match self {
            PairBasis::Z => "Z",
            PairBasis::X => "X",
            PairBasis::Zero => "0",
            PairBasis::Discard => "discard",
        }
    }
}

/// A sifted pair with its key bits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairRecord {
    pub i: u64,
    pub j: u64,
    pub levels_a: (Level, Level),
    pub levels_b: (Level, Level),
    pub basis: PairBasis,
    /// Key bits, for Z and kept X pairs.
    pub kappa_a: Option<bool>,
    pub kappa_b: Option<bool>,
    /// `kappa_a != kappa_b`; false when no bits are defined.
    pub error: bool,
    /// Photons each party emitted over the two rounds.
    pub photon_tag: (u32, u32),
}

impl PairRecord {
    pub fn party_bases(&self) -> (PartyBasis, PartyBasis) {
        (
            PartyBasis::of(self.levels_a.0, self.levels_a.1),
            PartyBasis::of(self.levels_b.0, self.levels_b.1),
        )
    }

    pub fn intensity_vector(&self) -> PairIntensityVector {
        PairIntensityVector::new(
            PairSum::of(self.levels_a.0, self.levels_a.1),
            PairSum::of(self.levels_b.0, self.levels_b.1),
        )
    }
}

fn phase_slice(theta: f64) -> u32 {
    ((theta / TAU * PHASE_SLICES as f64) as u32).min(PHASE_SLICES - 1)
}

fn relative_phase(first: f64, second: f64) -> f64 {
    let d = second - first;
    if d < 0.0 {
        d + TAU
    } else {
        d
    }
}

/// Labels each pair, keeps matching bases and assigns key bits.
///
/// Z pairs: Alice's bit is 0 for (vacuum, light) and 1 for (light, vacuum);
/// Bob's is the reverse. X pairs survive only when both parties' relative
/// phases fall in the same slice; Bob flips his bit when the two clicks hit
/// different detectors, and a misalignment error with probability `e_d`
/// flips it again.
pub fn sift_and_map(pairs: &[ClickPair], params: &SystemParams) -> Vec<PairRecord> {
    pairs.iter().map(|p| sift_pair(p, params)).collect()
}

fn sift_pair(pair: &ClickPair, params: &SystemParams) -> PairRecord {
    let (f, s) = (&pair.first, &pair.second);
    let mut record = PairRecord {
        i: f.index,
        j: s.index,
        levels_a: (f.level_a, s.level_a),
        levels_b: (f.level_b, s.level_b),
        basis: PairBasis::Discard,
        kappa_a: None,
        kappa_b: None,
        error: false,
        photon_tag: (f.photons.0 + s.photons.0, f.photons.1 + s.photons.1),
    };
    let (basis_a, basis_b) = record.party_bases();
    let (kappa_a, kappa_b) = match (basis_a, basis_b) {
        (PartyBasis::Z, PartyBasis::Z) => {
            record.basis = PairBasis::Z;
            (f.level_a != Level::Vacuum, s.level_b != Level::Vacuum)
        }
        (PartyBasis::X, PartyBasis::X) => {
            let theta_a = relative_phase(f.phases.0, s.phases.0);
            let theta_b = relative_phase(f.phases.1, s.phases.1);
            if phase_slice(theta_a) != phase_slice(theta_b) {
                return record;
            }
            record.basis = PairBasis::X;
            let kappa_a = phase_slice(theta_a) >= PHASE_SLICES / 2;
            let flip = f.detector != s.detector;
            let misaligned = s.misalignment < params.e_d;
            let raw_b = kappa_a ^ misaligned ^ flip;
            (kappa_a, raw_b ^ flip)
        }
        (PartyBasis::Zero, PartyBasis::Zero) => {
            record.basis = PairBasis::Zero;
            return record;
        }
        _ => return record,
    };
    record.kappa_a = Some(kappa_a);
    record.kappa_b = Some(kappa_b);
    record.error = kappa_a != kappa_b;
    record
}

/// A frequency estimate with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub successes: u64,
    pub trials: u64,
}

impl Estimate {
    pub fn new(successes: u64, trials: u64) -> Self {
        Estimate { successes, trials }
    }

    /// `None` when there were no trials.
    pub fn value(&self) -> Option<f64> {
        (self.trials > 0).then(|| self.successes as f64 / self.trials as f64)
    }

    pub fn std_error(&self) -> Option<f64> {
        self.value().map(|v| math::sqrt(v * (1.0 - v) / self.trials as f64))
    }

    /// Standard error under a hypothesised success probability.
    pub fn std_error_at(&self, expected: f64) -> Option<f64> {
        (self.trials > 0).then(|| math::sqrt(expected * (1.0 - expected) / self.trials as f64))
    }
}

/// Empirical counterparts of the model quantities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmpiricalStats {
    pub rounds: u64,
    pub clicks: u64,
    pub pairs: u64,
    pub z_pairs: u64,
    pub x_pairs: u64,
    pub zero_pairs: u64,
    pub discarded: u64,
    /// Clicks per round.
    pub p: Estimate,
    /// Pairs per round.
    pub r_p: Estimate,
    /// Z pairs per pair.
    pub r_s: Estimate,
    /// Errors per Z pair.
    pub e_z: Estimate,
    /// Single-photon Z pairs per Z pair.
    pub q_bar: Estimate,
    /// Errors per kept X pair.
    pub e_x: Estimate,
}

pub fn estimate_statistics(pairs: &[PairRecord], n_rounds: u64, n_clicks: u64) -> EmpiricalStats {
    let count = |basis| pairs.iter().filter(|p| p.basis == basis).count() as u64;
    let (z_pairs, x_pairs, zero_pairs, discarded) = (
        count(PairBasis::Z),
        count(PairBasis::X),
        count(PairBasis::Zero),
        count(PairBasis::Discard),
    );
    let z_errors = pairs.iter().filter(|p| p.basis == PairBasis::Z && p.error).count() as u64;
    let x_errors = pairs.iter().filter(|p| p.basis == PairBasis::X && p.error).count() as u64;
    let single = pairs
        .iter()
        .filter(|p| p.basis == PairBasis::Z && p.photon_tag == (1, 1))
        .count() as u64;
    let total = pairs.len() as u64;
    EmpiricalStats {
        rounds: n_rounds,
        clicks: n_clicks,
        pairs: total,
        z_pairs,
        x_pairs,
        zero_pairs,
        discarded,
        p: Estimate::new(n_clicks, n_rounds),
        r_p: Estimate::new(total, n_rounds),
        r_s: Estimate::new(z_pairs, total),
        e_z: Estimate::new(z_errors, z_pairs),
        q_bar: Estimate::new(single, z_pairs),
        e_x: Estimate::new(x_errors, x_pairs),
    }
}

/// Everything a full protocol run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolRun {
    pub pairs: Vec<PairRecord>,
    pub stats: EmpiricalStats,
}

fn finish_run(scenario: &Scenario, log: ClickLog) -> ProtocolRun {
    let paired = pair_clicks(&log.clicks, scenario.lambda);
    let pairs = sift_and_map(&paired, &scenario.params);
    let stats = estimate_statistics(&pairs, log.n_rounds, log.clicks.len() as u64);
    ProtocolRun { pairs, stats }
}

/// Simulates, pairs and sifts `n_rounds` rounds.
pub fn run_protocol(scenario: &Scenario, source: SourceModel, n_rounds: u64, seed: u64) -> Result<ProtocolRun> {
    let log = simulate_clicks(scenario, source, n_rounds, seed)?;
    Ok(finish_run(scenario, log))
}

#[cfg(feature = "std")]
pub fn run_protocol_parallel(
    scenario: &Scenario,
    source: SourceModel,
    n_rounds: u64,
    seed: u64,
) -> Result<ProtocolRun> {
    let log = simulate_clicks_parallel(scenario, source, n_rounds, seed)?;
    Ok(finish_run(scenario, log))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(l: f64, mu: f64, p_d: f64) -> Scenario {
        Scenario::from_distances(
            l,
            l,
            mu,
            mu,
            PairingInterval::Infinite,
            SystemParams::standard().with_dark_count(p_d),
        )
        .unwrap()
    }

    fn clicked_at(indices: &[u64]) -> Vec<RoundRecord> {
        indices
            .iter()
            .map(|&index| RoundRecord {
                index,
                level_a: Level::Vacuum,
                level_b: Level::Signal,
                photons: (0, 1),
                detector: Some(Detector::Left),
                phases: (0.0, 0.0),
                misalignment: 1.0,
            })
            .collect()
    }

    fn pair_of(a: (Level, Level), b: (Level, Level)) -> ClickPair {
        let mut rounds = clicked_at(&[0, 1]);
        rounds[0].level_a = a.0;
        rounds[1].level_a = a.1;
        rounds[0].level_b = b.0;
        rounds[1].level_b = b.1;
        ClickPair {
            first: rounds[0],
            second: rounds[1],
        }
    }

    #[test]
    fn no_light_no_clicks() {
        let rounds = simulate_rounds(&scenario(10.0, 0.0, 0.0), 10_000, 3).unwrap();
        assert_eq!(rounds.len(), 10_000);
        assert!(rounds.iter().all(|r| !r.clicked()));
    }

    #[test]
    fn runs_are_reproducible() {
        let s = scenario(10.0, 0.5, 1e-3);
        let a = simulate_rounds(&s, 200_000, 42).unwrap();
        let b = simulate_rounds(&s, 200_000, 42).unwrap();
        assert_eq!(a, b);
        let c = simulate_rounds(&s, 200_000, 43).unwrap();
        assert_ne!(a, c);
        let clicks = simulate_clicks(&s, SourceModel::Signal, 200_000, 42).unwrap();
        let filtered: Vec<_> = a.into_iter().filter(|r| r.clicked()).collect();
        assert_eq!(clicks.clicks, filtered);
    }

    #[test]
    fn parallel_matches_sequential() {
        let s = scenario(20.0, 0.5, 1e-4);
        let seq = simulate_clicks(&s, SourceModel::Signal, 300_001, 9).unwrap();
        let par = simulate_clicks_parallel(&s, SourceModel::Signal, 300_001, 9).unwrap();
        assert_eq!(seq, par);
    }

    #[test]
    fn zero_rounds_rejected() {
        assert!(simulate_rounds(&scenario(10.0, 0.5, 0.0), 0, 1).is_err());
    }

    #[test]
    fn greedy_pairing() {
        let pairs = pair_clicks(&clicked_at(&[1, 2]), PairingInterval::Rounds(1));
        assert_eq!(pairs.len(), 1);
        assert_eq!((pairs[0].first.index, pairs[0].second.index), (1, 2));

        let pairs = pair_clicks(&clicked_at(&[1, 2, 5, 9]), PairingInterval::Rounds(3));
        let idx: Vec<_> = pairs.iter().map(|p| (p.first.index, p.second.index)).collect();
        assert_eq!(idx, [(1, 2)]);

        let pairs = pair_clicks(&clicked_at(&[1, 4, 5, 9]), PairingInterval::Rounds(3));
        let idx: Vec<_> = pairs.iter().map(|p| (p.first.index, p.second.index)).collect();
        assert_eq!(idx, [(1, 4)]);

        let pairs = pair_clicks(&clicked_at(&[1, 1000, 5000]), PairingInterval::Infinite);
        assert_eq!(pairs.len(), 1);
    }

    #[test]
    fn z_key_mapping() {
        use Level::*;
        let p = SystemParams::standard();
        let r = sift_and_map(&[pair_of((Vacuum, Signal), (Signal, Vacuum))], &p)[0];
        assert_eq!(r.basis, PairBasis::Z);
        assert_eq!((r.kappa_a, r.kappa_b, r.error), (Some(false), Some(false), false));
        let r = sift_and_map(&[pair_of((Signal, Vacuum), (Vacuum, Signal))], &p)[0];
        assert_eq!((r.kappa_a, r.kappa_b, r.error), (Some(true), Some(true), false));
        let r = sift_and_map(&[pair_of((Signal, Vacuum), (Signal, Vacuum))], &p)[0];
        assert!(r.error);
    }

    #[test]
    fn sifting_labels() {
        use Level::*;
        let p = SystemParams::standard();
        let r = sift_and_map(&[pair_of((Vacuum, Vacuum), (Vacuum, Vacuum))], &p)[0];
        assert_eq!((r.basis, r.kappa_a), (PairBasis::Zero, None));
        let r = sift_and_map(&[pair_of((Signal, Signal), (Vacuum, Signal))], &p)[0];
        assert_eq!(r.basis, PairBasis::Discard);
        let r = sift_and_map(&[pair_of((Decoy, Signal), (Decoy, Signal))], &p)[0];
        assert_eq!(r.basis, PairBasis::Discard);
        let x = pair_of((Signal, Signal), (Signal, Signal));
        assert_eq!(sift_and_map(&[x], &p)[0].basis, PairBasis::X);
        let mut off = x;
        off.second.phases.1 = 1.0;
        assert_eq!(sift_and_map(&[off], &p)[0].basis, PairBasis::Discard);
    }

    #[test]
    fn x_pair_bits_follow_detectors_and_misalignment() {
        let p = SystemParams::standard();
        let mut x = pair_of((Level::Signal, Level::Signal), (Level::Signal, Level::Signal));
        x.second.detector = Some(Detector::Right);
        let r = sift_and_map(&[x], &p)[0];
        assert!(!r.error);
        x.second.misalignment = 0.01;
        assert!(sift_and_map(&[x], &p)[0].error);
    }

    #[test]
    fn empty_statistics_are_undefined() {
        let stats = estimate_statistics(&[], 1000, 0);
        assert_eq!(stats.p.value(), Some(0.0));
        assert_eq!(stats.r_s.value(), None);
        assert_eq!(stats.e_z.std_error(), None);
        assert_eq!(stats.q_bar.value(), None);
    }

    #[test]
    fn sifting_conserves_pairs() {
        let s = scenario(10.0, 0.5, 1e-3);
        let config = DecoyConfig::new(0.4, 0.2, 0.4).unwrap();
        let run = run_protocol(
            &s.with_decoys(0.1, 0.1).unwrap(),
            SourceModel::Decoy(config),
            200_000,
            5,
        )
        .unwrap();
        let st = run.stats;
        assert_eq!(st.z_pairs + st.x_pairs + st.zero_pairs + st.discarded, st.pairs);
        assert!(2 * st.pairs <= st.clicks);
        assert!(st.z_pairs > 0 && st.x_pairs > 0);
    }
}
