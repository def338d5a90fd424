//! Poisson detector counts for the three correlator measurements, and the
//! count-ratio estimators with their counting-statistics uncertainties.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{check_range, Error, Result};
use crate::optics::{detection_probabilities, propagate, Path, TwoPathState};
use crate::protocol::{CorrelatorSet, Estimate, ProtocolConfig};

pub const RUN_INTERFEROGRAM: &str = "interferogram";
pub const RUN_TRANSVERSAL: &str = "transversal";
pub const RUN_BLOCKER: &str = "blocker";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementTimes {
    pub interferogram_s: f64,
    pub transversal_s: f64,
    pub blocker_s: f64,
}

impl Default for MeasurementTimes {
    fn default() -> Self {
        Self {
            interferogram_s: 180.0,
            transversal_s: 300.0,
            blocker_s: 600.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamConfig {
    /// Detected neutrons per second at full transmission.
    pub flux_rate: f64,
    pub times: MeasurementTimes,
    pub detector_efficiency: f64,
    pub seed: u64,
}

impl Default for BeamConfig {
    fn default() -> Self {
        Self {
            flux_rate: 30.0,
            times: MeasurementTimes::default(),
            detector_efficiency: 1.0,
            seed: 0,
        }
    }
}

impl BeamConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::OutOfRange {
                    name,
                    value: v,
                    range: "(0, ∞)",
                })
            }
        };
        positive("flux_rate", self.flux_rate)?;
        positive("interferogram_s", self.times.interferogram_s)?;
        positive("transversal_s", self.times.transversal_s)?;
        positive("blocker_s", self.times.blocker_s)?;
        positive("detector_efficiency", self.detector_efficiency)?;
        check_range("detector_efficiency", self.detector_efficiency, 0.0, 1.0, "(0, 1]")
    }

    fn rate_scale(&self) -> f64 {
        self.flux_rate * self.detector_efficiency
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Detector {
    O,
    H,
    #[serde(rename = "mobile")]
    Mobile,
}

impl Detector {
    fn stream_index(self) -> u64 {
        match self {
            Detector::O => 0,
            Detector::H => 1,
            Detector::Mobile => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BlockerState {
    #[serde(rename = "none")]
    None,
    #[serde(rename = "2+")]
    Plus,
    #[serde(rename = "2-")]
    Minus,
}

impl BlockerState {
    pub fn path(self) -> Option<Path> {
        match self {
            BlockerState::None => None,
            BlockerState::Plus => Some(Path::Plus),
            BlockerState::Minus => Some(Path::Minus),
        }
    }

    fn stream_index(self) -> u64 {
        match self {
            BlockerState::None => 0,
            BlockerState::Plus => 1,
            BlockerState::Minus => 2,
        }
    }
}

impl From<Path> for BlockerState {
    fn from(path: Path) -> Self {
        match path {
            Path::Plus => BlockerState::Plus,
            Path::Minus => BlockerState::Minus,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScanVar {
    #[serde(rename = "chi_rad")]
    ChiRad,
    #[serde(rename = "pos_mm")]
    PosMm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountRecord {
    pub run: String,
    pub detector: Detector,
    pub blocker: BlockerState,
    pub scan_var: ScanVar,
    pub scan_value: f64,
    pub duration_s: f64,
    pub counts: u64,
}

/// Random stream for one `(run, detector, scan point)` cell.
///
/// Every cell draws from the ChaCha8 generator keyed by the master seed,
/// on its own stream number
/// `run << 48 | detector << 40 | blocker << 32 | point`, so the counts of a
/// cell never depend on how many other cells were generated before it.
pub fn substream(seed: u64, run: u64, detector: Detector, blocker: BlockerState, point: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(
        (run << 48)
            | (detector.stream_index() << 40)
            | (blocker.stream_index() << 32)
            | u64::from(point),
    );
    rng
}

fn run_index(run: &str) -> u64 {
    match run {
        RUN_INTERFEROGRAM => 1,
        RUN_TRANSVERSAL => 2,
        RUN_BLOCKER => 3,
        _ => 0,
    }
}

pub fn sample_poisson(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
    if mean.is_nan() || mean <= 0.0 {
        return 0;
    }
    match Poisson::new(mean) {
        Ok(dist) => dist.sample(rng) as u64,
        Err(_) => 0,
    }
}

/// Rates at the output detectors (per second) for a given protocol config.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputRates {
    pub o: f64,
    pub h: f64,
}

/// O sits at port `3−` and H at `3+`; the H offset is added on top.
pub fn output_rates(protocol: &ProtocolConfig, beam: &BeamConfig, blocker: Option<Path>) -> Result<OutputRates> {
    let out = propagate(&TwoPathState::plus(), &protocol.chain(blocker)?)?;
    let (p_plus, p_minus) = detection_probabilities(&out);
    let scale = beam.rate_scale();
    Ok(OutputRates {
        o: scale * p_minus,
        h: scale * (p_plus + protocol.h_offset),
    })
}

fn draw(beam: &BeamConfig, run: &'static str, detector: Detector, blocker: BlockerState, point: u32, mean: f64) -> u64 {
    let mut rng = substream(beam.seed, run_index(run), detector, blocker, point);
    sample_poisson(&mut rng, mean)
}

/// O and H counts at every phase setting, one pair of records per `χ`.
pub fn simulate_interferogram(protocol: &ProtocolConfig, beam: &BeamConfig, chi_list: &[f64]) -> Result<Vec<CountRecord>> {
    protocol.validate()?;
    beam.validate()?;
    if chi_list.is_empty() {
        return Err(Error::EmptyGrid("chi"));
    }
    let t = beam.times.interferogram_s;
    let mut records = Vec::with_capacity(2 * chi_list.len());
    for (i, &chi) in chi_list.iter().enumerate() {
        let rates = output_rates(&protocol.with_chi(chi), beam, None)?;
        for (detector, rate) in [(Detector::O, rates.o), (Detector::H, rates.h)] {
            records.push(CountRecord {
                run: RUN_INTERFEROGRAM.into(),
                detector,
                blocker: BlockerState::None,
                scan_var: ScanVar::ChiRad,
                scan_value: chi,
                duration_s: t,
                counts: draw(beam, RUN_INTERFEROGRAM, detector, BlockerState::None, i as u32, rate * t),
            });
        }
    }
    Ok(records)
}

/// Transverse intensity profile of the two region-2 paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamProfile {
    pub center_plus_mm: f64,
    pub center_minus_mm: f64,
    pub width_mm: f64,
}

impl Default for BeamProfile {
    fn default() -> Self {
        Self {
            center_plus_mm: 5.0,
            center_minus_mm: -5.0,
            width_mm: 1.0,
        }
    }
}

impl BeamProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.width_mm > 0.0 && self.width_mm.is_finite()) {
            return Err(Error::OutOfRange {
                name: "beam_width_mm",
                value: self.width_mm,
                range: "(0, ∞)",
            });
        }
        if self.center_plus_mm == self.center_minus_mm {
            return Err(Error::OutOfRange {
                name: "center_plus_mm",
                value: self.center_plus_mm,
                range: "values distinct from center_minus_mm",
            });
        }
        Ok(())
    }

    pub fn overlapping(&self) -> bool {
        (self.center_plus_mm - self.center_minus_mm).abs() < 4.0 * self.width_mm
    }

    pub fn center(&self, path: Path) -> f64 {
        match path {
            Path::Plus => self.center_plus_mm,
            Path::Minus => self.center_minus_mm,
        }
    }

    /// Unit-peak Gaussian of the given path at `x`.
    pub fn shape(&self, path: Path, x: f64) -> f64 {
        let z = (x - self.center(path)) / self.width_mm;
        (-0.5 * z * z).exp()
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.center_plus_mm + self.center_minus_mm)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransversalScan {
    pub records: Vec<CountRecord>,
    pub warnings: Vec<String>,
}

/// Expected mobile-detector rate at transverse position `x`.
pub fn transversal_rate(protocol: &ProtocolConfig, beam: &BeamConfig, profile: &BeamProfile, x: f64) -> Result<f64> {
    let state = propagate(&TwoPathState::plus(), &protocol.region1_chain()?)?;
    let (p_plus, p_minus) = detection_probabilities(&state);
    Ok(beam.rate_scale() * (p_plus * profile.shape(Path::Plus, x) + p_minus * profile.shape(Path::Minus, x)))
}

pub fn simulate_transversal_scan(
    protocol: &ProtocolConfig,
    beam: &BeamConfig,
    positions: &[f64],
    profile: &BeamProfile,
) -> Result<TransversalScan> {
    protocol.validate()?;
    beam.validate()?;
    profile.validate()?;
    if positions.is_empty() {
        return Err(Error::EmptyGrid("positions"));
    }
    let mut warnings = Vec::new();
    if profile.overlapping() {
        warnings.push(format!(
            "path profiles overlap: separation {:.3} mm < 4 × width {:.3} mm",
            (profile.center_plus_mm - profile.center_minus_mm).abs(),
            profile.width_mm
        ));
    }
    let t = beam.times.transversal_s;
    let records = positions
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let rate = transversal_rate(protocol, beam, profile, x)?;
            Ok(CountRecord {
                run: RUN_TRANSVERSAL.into(),
                detector: Detector::Mobile,
                blocker: BlockerState::None,
                scan_var: ScanVar::PosMm,
                scan_value: x,
                duration_s: t,
                counts: draw(beam, RUN_TRANSVERSAL, Detector::Mobile, BlockerState::None, i as u32, rate * t),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TransversalScan { records, warnings })
}

/// O and H counts with each region-2 path blocked in turn.
pub fn simulate_blocker_runs(protocol: &ProtocolConfig, beam: &BeamConfig) -> Result<Vec<CountRecord>> {
    protocol.validate()?;
    beam.validate()?;
    let t = beam.times.blocker_s;
    let mut records = Vec::with_capacity(4);
    for path in [Path::Minus, Path::Plus] {
        let blocker = BlockerState::from(path);
        let rates = output_rates(protocol, beam, Some(path))?;
        for (detector, rate) in [(Detector::O, rates.o), (Detector::H, rates.h)] {
            records.push(CountRecord {
                run: RUN_BLOCKER.into(),
                detector,
                blocker,
                scan_var: ScanVar::ChiRad,
                scan_value: protocol.chi,
                duration_s: t,
                counts: draw(beam, RUN_BLOCKER, detector, blocker, 0, rate * t),
            });
        }
    }
    Ok(records)
}

/// A count-ratio correlator with its counting-statistics standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatedCorrelator {
    pub value: f64,
    pub sigma: f64,
    pub counts: Vec<f64>,
    /// Set when one side of the ratio is empty, which makes `sigma` vanish.
    pub degenerate: bool,
}

impl From<&EstimatedCorrelator> for Estimate {
    fn from(e: &EstimatedCorrelator) -> Self {
        Estimate::with_sigma(e.value, e.sigma)
    }
}

/// `(S₊ − S₋)/(S₊ + S₋)` with Poisson sums `S±`; `σ = 2·√(S₊S₋/S³)`.
fn poisson_ratio(plus: f64, minus: f64, counts: Vec<f64>, what: &'static str) -> Result<EstimatedCorrelator> {
    let total = plus + minus;
    if total.is_nan() || total <= 0.0 {
        return Err(Error::ZeroTotal(what));
    }
    Ok(EstimatedCorrelator {
        value: (plus - minus) / total,
        sigma: 2.0 * (plus * minus / total.powi(3)).sqrt(),
        counts,
        degenerate: plus == 0.0 || minus == 0.0,
    })
}

/// `C31 = (N₃₊ − N₃₋)/(N₃₊ + N₃₋)`.
pub fn estimate_c31(n_plus: u64, n_minus: u64) -> Result<EstimatedCorrelator> {
    let (p, m) = (n_plus as f64, n_minus as f64);
    poisson_ratio(p, m, vec![p, m], "C31")
}

/// Fitted peak height with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakCounts {
    pub value: f64,
    pub sigma: f64,
}

/// `C21` from the fitted peak counts of the two region-2 paths.
pub fn estimate_c21(peak_plus: PeakCounts, peak_minus: PeakCounts) -> Result<EstimatedCorrelator> {
    if peak_plus.value.is_nan() || peak_plus.value <= 0.0 {
        return Err(Error::NonPositivePeak("path 2+"));
    }
    if peak_minus.value.is_nan() || peak_minus.value <= 0.0 {
        return Err(Error::NonPositivePeak("path 2-"));
    }
    let (p, m) = (peak_plus.value, peak_minus.value);
    let total = p + m;
    let dp = 2.0 * m / (total * total);
    let dm = -2.0 * p / (total * total);
    let sigma = ((dp * peak_plus.sigma).powi(2) + (dm * peak_minus.sigma).powi(2)).sqrt();
    Ok(EstimatedCorrelator {
        value: (p - m) / total,
        sigma,
        counts: vec![p, m],
        degenerate: false,
    })
}

/// Blocked-path counts `N_{3q₃,2q₂}`: detector `3q₃`, blocker on `2q₂`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockedCounts {
    pub n_3p_2m: u64,
    pub n_3m_2p: u64,
    pub n_3p_2p: u64,
    pub n_3m_2m: u64,
}

/// `C32 = (N₃₊₂₋ + N₃₋₂₊ − N₃₊₂₊ − N₃₋₂₋)/ΣN`.
pub fn estimate_c32(counts: BlockedCounts) -> Result<EstimatedCorrelator> {
    let BlockedCounts {
        n_3p_2m,
        n_3m_2p,
        n_3p_2p,
        n_3m_2m,
    } = counts;
    let agree = (n_3p_2m + n_3m_2p) as f64;
    let disagree = (n_3p_2p + n_3m_2m) as f64;
    // First-order propagation over the four independent Poisson counts
    // collapses to the same closed form as the two-count ratio.
    poisson_ratio(
        agree,
        disagree,
        vec![n_3p_2m as f64, n_3m_2p as f64, n_3p_2p as f64, n_3m_2m as f64],
        "C32",
    )
}

/// `K` and its uncertainty from three independently measured correlators.
pub fn combine_k(c21: &EstimatedCorrelator, c32: &EstimatedCorrelator, c31: &EstimatedCorrelator) -> CorrelatorSet {
    CorrelatorSet::new(c21.into(), c32.into(), c31.into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, SQRT_2};

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    fn bootstrap_sigma(means: &[f64], estimator: impl Fn(&[u64]) -> f64, resamples: usize) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let draws: Vec<f64> = (0..resamples)
            .map(|_| {
                let counts: Vec<u64> = means.iter().map(|&m| sample_poisson(&mut rng, m)).collect();
                estimator(&counts)
            })
            .collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        (draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64).sqrt()
    }

    #[test]
    fn c31_examples() {
        let degenerate = estimate_c31(500, 0).unwrap();
        assert_eq!(degenerate.value, 1.0);
        assert_eq!(degenerate.sigma, 0.0);
        assert!(degenerate.degenerate);

        let e = estimate_c31(900, 100).unwrap();
        assert_close(e.value, 0.8, 1e-15);
        assert_close(e.sigma, 0.018973665961010275, 1e-15);
        let boot = bootstrap_sigma(&[900.0, 100.0], |c| estimate_c31(c[0], c[1]).unwrap().value, 10_000);
        assert!((boot / e.sigma - 1.0).abs() < 0.05, "bootstrap {boot}");

        assert_eq!(estimate_c31(321, 321).unwrap().value, 0.0);
        assert!(matches!(estimate_c31(0, 0), Err(Error::ZeroTotal(_))));
    }

    #[test]
    fn c21_examples() {
        let peak = |v, s| PeakCounts { value: v, sigma: s };
        assert_eq!(estimate_c21(peak(500.0, 5.0), peak(500.0, 5.0)).unwrap().value, 0.0);
        let measured = estimate_c21(peak(1903.0, 10.0), peak(97.0, 3.0)).unwrap();
        assert_close(measured.value, 0.903, 1e-12);
        let doubled = estimate_c21(peak(1903.0, 20.0), peak(97.0, 6.0)).unwrap();
        assert_close(doubled.sigma, 2.0 * measured.sigma, 1e-15);
        assert!(estimate_c21(peak(0.0, 1.0), peak(10.0, 1.0)).is_err());
        assert!(estimate_c21(peak(10.0, 1.0), peak(-1.0, 1.0)).is_err());
    }

    #[test]
    fn c21_sigma_matches_finite_difference_propagation() {
        let (p, m, sp, sm) = (1200.0, 300.0, 14.0, 9.0);
        let f = |p: f64, m: f64| (p - m) / (p + m);
        let h = 1e-4;
        let dp = (f(p + h, m) - f(p - h, m)) / (2.0 * h);
        let dm = (f(p, m + h) - f(p, m - h)) / (2.0 * h);
        let expected = ((dp * sp).powi(2) + (dm * sm).powi(2)).sqrt();
        let e = estimate_c21(PeakCounts { value: p, sigma: sp }, PeakCounts { value: m, sigma: sm }).unwrap();
        assert_close(e.sigma, expected, 1e-9);
    }

    #[test]
    fn c32_examples() {
        let all = |n| BlockedCounts { n_3p_2m: n, n_3m_2p: n, n_3p_2p: n, n_3m_2m: n };
        assert_eq!(estimate_c32(all(250)).unwrap().value, 0.0);
        let perfect = BlockedCounts { n_3p_2m: 40, n_3m_2p: 40, n_3p_2p: 0, n_3m_2m: 0 };
        assert_eq!(estimate_c32(perfect).unwrap().value, 1.0);
        assert!(estimate_c32(all(0)).is_err());

        // Totals of 10⁵ split to give 0.343.
        let means = [33_575.0, 33_575.0, 16_425.0, 16_425.0];
        let counts = BlockedCounts { n_3p_2m: 33_575, n_3m_2p: 33_575, n_3p_2p: 16_425, n_3m_2m: 16_425 };
        let e = estimate_c32(counts).unwrap();
        assert_close(e.value, 0.343, 1e-12);
        assert!((0.002..=0.003).contains(&e.sigma), "{}", e.sigma);

        // Four-partial propagation written out term by term.
        let s: f64 = means.iter().sum();
        let (sp, sm) = (means[0] + means[1], means[2] + means[3]);
        let partials = [2.0 * sm / (s * s), 2.0 * sm / (s * s), -2.0 * sp / (s * s), -2.0 * sp / (s * s)];
        let by_partials = partials.iter().zip(means).map(|(d, n)| d * d * n).sum::<f64>().sqrt();
        assert_close(e.sigma, by_partials, 1e-15);

        let boot = bootstrap_sigma(
            &means,
            |c| {
                estimate_c32(BlockedCounts { n_3p_2m: c[0], n_3m_2p: c[1], n_3p_2p: c[2], n_3m_2m: c[3] })
                    .unwrap()
                    .value
            },
            10_000,
        );
        assert!((boot / e.sigma - 1.0).abs() < 0.05, "bootstrap {boot} vs {}", e.sigma);
    }

    #[test]
    fn combine_k_table_values() {
        let est = |v, s| EstimatedCorrelator { value: v, sigma: s, counts: vec![], degenerate: false };
        let set = combine_k(&est(0.903, 0.002), &est(0.343, 0.002), &est(0.126, 0.006));
        assert_close(set.k, 1.120, 1e-12);
        let sigma = set.sigma_k.unwrap();
        assert_close(sigma, 44e-6f64.sqrt(), 1e-15);
        assert_eq!(format!("{sigma:.3}"), "0.007");
        assert_close(set.n_sigma.unwrap(), 0.12 / 44e-6f64.sqrt(), 1e-9);

        let zero = combine_k(&est(0.5, 0.0), &est(0.2, 0.0), &est(0.1, 0.0));
        assert_eq!(zero.sigma_k, Some(0.0));

        let a = combine_k(&est(0.1, 0.003), &est(0.1, 0.004), &est(0.1, 0.012)).sigma_k.unwrap();
        let b = combine_k(&est(0.1, 0.012), &est(0.1, 0.003), &est(0.1, 0.004)).sigma_k.unwrap();
        assert_close(a, b, 1e-16);
    }

    #[test]
    fn interferogram_expectations() {
        let beam = BeamConfig::default();
        let ideal = ProtocolConfig::ideal(FRAC_PI_4, FRAC_PI_2, 0.0);
        let r = output_rates(&ideal, &beam, None).unwrap();
        assert_close(r.o / (r.o + r.h), (1.0 + SQRT_2 / 2.0) / 2.0, 1e-14);

        let flat = ProtocolConfig { visibility: 0.0, ..ideal.clone() };
        let a = output_rates(&flat.with_chi(0.0), &beam, None).unwrap();
        let b = output_rates(&flat.with_chi(2.0), &beam, None).unwrap();
        assert_close(a.o, b.o, 1e-12);
        assert_close(a.h, b.h, 1e-12);

        let records = simulate_interferogram(&ideal, &beam, &[0.0, 1.0]).unwrap();
        assert_eq!(records.len(), 4);
        assert!(simulate_interferogram(&ideal, &beam, &[]).is_err());
    }

    #[test]
    fn interferogram_monte_carlo_converges() {
        let protocol = ProtocolConfig::ideal(FRAC_PI_4, FRAC_PI_2, 0.0);
        let values: Vec<f64> = (0..100)
            .map(|seed| {
                let beam = BeamConfig { seed, ..BeamConfig::default() };
                let r = simulate_interferogram(&protocol, &beam, &[0.0]).unwrap();
                estimate_c31(r[1].counts, r[0].counts).unwrap().value
            })
            .collect();
        let mean = values.iter().sum::<f64>() / 100.0;
        let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 99.0).sqrt();
        assert!((mean + SQRT_2 / 2.0).abs() < 3.0 * sd / 10.0, "mean {mean}");
    }

    #[test]
    fn transversal_expectations() {
        let beam = BeamConfig::default();
        let profile = BeamProfile::default();
        let ideal = ProtocolConfig::ideal(FRAC_PI_2, FRAC_PI_2, 0.0);
        let far = transversal_rate(&ideal, &beam, &profile, 40.0).unwrap();
        assert!(far < 1e-100);
        let at_center = transversal_rate(&ideal, &beam, &profile, profile.center_plus_mm).unwrap();
        let cross = profile.shape(Path::Minus, profile.center_plus_mm);
        assert!(cross < 1e-20);
        assert_close(at_center, beam.flux_rate * 0.5 * (1.0 + cross), 1e-12);

        let scan = simulate_transversal_scan(&ideal, &beam, &[0.0, 1.0], &profile).unwrap();
        assert!(scan.warnings.is_empty());
        let tight = BeamProfile { width_mm: 3.0, ..profile };
        let scan = simulate_transversal_scan(&ideal, &beam, &[0.0], &tight).unwrap();
        assert_eq!(scan.warnings.len(), 1);
        let bad = BeamProfile { center_minus_mm: 5.0, ..profile };
        assert!(simulate_transversal_scan(&ideal, &beam, &[0.0], &bad).is_err());
    }

    #[test]
    fn blocker_expectations() {
        let beam = BeamConfig::default();
        let config = ProtocolConfig::ideal(FRAC_PI_4, FRAC_PI_2, 0.7);
        let blocked_minus = output_rates(&config, &beam, Some(Path::Minus)).unwrap();
        assert_close(blocked_minus.o, blocked_minus.h, 1e-12);
        let other_chi = output_rates(&config.with_chi(-2.0), &beam, Some(Path::Minus)).unwrap();
        assert_close(blocked_minus.o, other_chi.o, 1e-12);

        let sym = ProtocolConfig { visibility: 0.3, ..ProtocolConfig::ideal(FRAC_PI_2, FRAC_PI_2, 0.0) };
        let rates: Vec<f64> = [Path::Plus, Path::Minus]
            .iter()
            .flat_map(|&p| {
                let r = output_rates(&sym, &beam, Some(p)).unwrap();
                [r.o, r.h]
            })
            .collect();
        for r in &rates {
            assert_close(*r, rates[0], 1e-12);
        }

        let offset = ProtocolConfig { h_offset: 0.1, ..config };
        let r = output_rates(&offset, &beam, Some(Path::Plus)).unwrap();
        let t = beam.times.blocker_s;
        assert_close((r.h - r.o) * t, 0.1 * beam.flux_rate * t, 1e-9);

        let records = simulate_blocker_runs(&offset, &beam).unwrap();
        assert_eq!(records.len(), 4);
        assert!(records.iter().all(|r| r.duration_s == 600.0));
    }

    #[test]
    fn substreams_are_deterministic_and_distinct() {
        let mut a = substream(42, 1, Detector::O, BlockerState::None, 3);
        let mut b = substream(42, 1, Detector::O, BlockerState::None, 3);
        assert_eq!(a.next_u64(), b.next_u64());
        let mut c = substream(42, 1, Detector::H, BlockerState::None, 3);
        let mut d = substream(42, 1, Detector::O, BlockerState::None, 4);
        let mut e = substream(43, 1, Detector::O, BlockerState::None, 3);
        let x = substream(42, 1, Detector::O, BlockerState::None, 3).next_u64();
        assert_ne!(x, c.next_u64());
        assert_ne!(x, d.next_u64());
        assert_ne!(x, e.next_u64());
    }

    #[test]
    fn zero_mean_draws_zero() {
        let mut rng = substream(1, 1, Detector::O, BlockerState::None, 0);
        assert_eq!(sample_poisson(&mut rng, 0.0), 0);
    }
}
