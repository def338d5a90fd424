//! Leggett–Garg correlators, in closed form and through the blocked-path
//! (ideal negative measurement) protocol.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{check_range, Error, Result};
use crate::optics::{
    detection_probabilities, propagate, Element, ElementChain, Path, TwoPathState,
};

/// Macrorealist upper bound on `K`.
pub const MACROREALIST_BOUND: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbsorberSpec {
    pub transmission: f64,
    pub path: Path,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub theta_a: f64,
    pub theta_b: f64,
    pub chi: f64,
    pub absorber: Option<AbsorberSpec>,
    pub visibility: f64,
    /// Phase-independent additive rate at detector H, as a fraction of flux.
    pub h_offset: f64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            theta_a: FRAC_PI_2,
            theta_b: FRAC_PI_2,
            chi: 0.0,
            absorber: None,
            visibility: 1.0,
            h_offset: 0.0,
        }
    }
}

impl ProtocolConfig {
    pub fn ideal(theta_a: f64, theta_b: f64, chi: f64) -> Self {
        Self {
            theta_a,
            theta_b,
            chi,
            ..Self::default()
        }
    }

    pub fn with_chi(&self, chi: f64) -> Self {
        Self { chi, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        check_range("theta_A", self.theta_a, 0.0, std::f64::consts::PI, "[0, π]")?;
        check_range("theta_B", self.theta_b, 0.0, std::f64::consts::PI, "[0, π]")?;
        if !self.chi.is_finite() {
            return Err(Error::OutOfRange {
                name: "chi",
                value: self.chi,
                range: "finite values",
            });
        }
        if let Some(abs) = &self.absorber {
            check_range("absorber_T", abs.transmission, 0.0, 1.0, "[0, 1]")?;
        }
        check_range("visibility", self.visibility, 0.0, 1.0, "[0, 1]")?;
        check_range("h_offset", self.h_offset, 0.0, f64::MAX, "[0, ∞)")?;
        Ok(())
    }

    fn region1(&self) -> Vec<Element> {
        let mut elements = vec![Element::Beamsplitter { theta: self.theta_a }];
        if let Some(abs) = self.absorber {
            elements.push(Element::Absorber {
                transmission: abs.transmission,
                path: abs.path,
            });
        }
        elements
    }

    /// Full interferometer, optionally with a blocker in region 2.
    pub fn chain(&self, blocker: Option<Path>) -> Result<ElementChain> {
        let mut elements = self.region1();
        if let Some(path) = blocker {
            elements.push(Element::Blocker { path });
        }
        elements.push(Element::PhaseShifter { chi: self.chi });
        elements.push(Element::Dephaser {
            visibility: self.visibility,
        });
        elements.push(Element::Beamsplitter { theta: self.theta_b });
        ElementChain::full_lgi(elements)
    }

    /// Elements up to the region-2 detector plane (before the phase shifter).
    pub fn region1_chain(&self) -> Result<ElementChain> {
        ElementChain::new(self.region1())
    }
}

/// Detection probabilities used by the correlator estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointProbabilityTable {
    /// `P_{2q,1+}(1,1)` indexed by `q`; equal to the marginals `P_{2q}(1)`
    /// since the neutron always enters through `1+`.
    pub region2: [f64; 2],
    /// `P_{3q}(1)` from the unblocked interferometer, indexed by `q`.
    pub region3: [f64; 2],
    /// `P_{3q₃,2q₂}(1,0)` indexed `[q₂][q₃]`: detection at `3q₃` with a
    /// blocker on path `2q₂`.
    pub blocked: [[f64; 2]; 2],
}

impl JointProbabilityTable {
    pub fn region2(&self, path: Path) -> f64 {
        self.region2[path.index()]
    }

    pub fn region3(&self, path: Path) -> f64 {
        self.region3[path.index()]
    }

    pub fn blocked(&self, blocked_path: Path, outcome: Path) -> f64 {
        self.blocked[blocked_path.index()][outcome.index()]
    }

    /// Survival probability through region 1.
    pub fn survival(&self) -> f64 {
        self.region2[0] + self.region2[1]
    }

    /// Every entry divided by the region-1 survival probability.
    pub fn renormalized(&self) -> Result<Self> {
        let s = self.survival();
        if s <= 0.0 {
            return Err(Error::ZeroTotal("region-1 survival"));
        }
        let scale = |v: [f64; 2]| [v[0] / s, v[1] / s];
        Ok(Self {
            region2: scale(self.region2),
            region3: scale(self.region3),
            blocked: [scale(self.blocked[0]), scale(self.blocked[1])],
        })
    }
}

/// Correlator value with an optional standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub sigma: Option<f64>,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { value, sigma: None }
    }

    pub fn with_sigma(value: f64, sigma: f64) -> Self {
        Self {
            value,
            sigma: Some(sigma),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelatorSet {
    pub c21: Estimate,
    pub c32: Estimate,
    pub c31: Estimate,
    pub k: f64,
    pub sigma_k: Option<f64>,
    /// `(K − 1)/σ_K`, present only for `K > 1` with nonzero `σ_K`.
    pub n_sigma: Option<f64>,
}

impl CorrelatorSet {
    /// Assembles `K = C21 + C32 − C31`; `σ_K` is the quadrature sum when all
    /// three inputs carry an uncertainty.
    pub fn new(c21: Estimate, c32: Estimate, c31: Estimate) -> Self {
        let k = c21.value + c32.value - c31.value;
        let sigma_k = match (c21.sigma, c32.sigma, c31.sigma) {
            (Some(a), Some(b), Some(c)) => Some((a * a + b * b + c * c).sqrt()),
            _ => None,
        };
        let n_sigma = sigma_k
            .filter(|&s| s > 0.0 && k > MACROREALIST_BOUND)
            .map(|s| (k - MACROREALIST_BOUND) / s);
        Self {
            c21,
            c32,
            c31,
            k,
            sigma_k,
            n_sigma,
        }
    }

    pub fn violates(&self) -> bool {
        self.k > MACROREALIST_BOUND
    }
}

/// Closed-form correlators for an ideal interferometer.
pub fn correlators_analytic(theta_a: f64, theta_b: f64, chi: f64) -> CorrelatorSet {
    let c21 = theta_a.cos();
    let c32 = theta_b.cos();
    let c31 = theta_a.cos() * theta_b.cos() - chi.cos() * theta_a.sin() * theta_b.sin();
    CorrelatorSet::new(Estimate::exact(c21), Estimate::exact(c32), Estimate::exact(c31))
}

/// `K` for a balanced second plate.
pub fn k_reduced(theta_a: f64, chi: f64) -> f64 {
    theta_a.cos() + chi.cos() * theta_a.sin()
}

/// Builds the probability table by propagating `|1+⟩` through the
/// interferometer, once per blocker setting.
pub fn protocol_probabilities(config: &ProtocolConfig) -> Result<JointProbabilityTable> {
    config.validate()?;
    let input = TwoPathState::plus();

    let region2 = propagate(&input, &config.region1_chain()?)?;
    let (p2p, p2m) = detection_probabilities(&region2);

    let open = propagate(&input, &config.chain(None)?)?;
    let (p3p, p3m) = detection_probabilities(&open);

    let mut blocked = [[0.0; 2]; 2];
    for path in Path::BOTH {
        let out = propagate(&input, &config.chain(Some(path))?)?;
        let (p, m) = detection_probabilities(&out);
        blocked[path.index()] = [p, m];
    }

    Ok(JointProbabilityTable {
        region2: [p2p, p2m],
        region3: [p3p, p3m],
        blocked,
    })
}

/// Totals below this are rounding residue of a fully absorbed beam.
const PROBABILITY_FLOOR: f64 = 1e-14;

fn normalized_difference(plus: f64, minus: f64, what: &'static str) -> Result<f64> {
    let total = plus + minus;
    if total <= PROBABILITY_FLOOR {
        return Err(Error::ZeroTotal(what));
    }
    Ok((plus - minus) / total)
}

/// Correlators from a probability table, each normalized by its own total so
/// that absorption loss drops out the same way it does in count ratios.
pub fn correlators_from_probabilities(table: &JointProbabilityTable) -> Result<CorrelatorSet> {
    let c21 = normalized_difference(table.region2[0], table.region2[1], "C21")?;
    let c31 = normalized_difference(table.region3[0], table.region3[1], "C31")?;

    // C32 = −Σ q₂ q₃ P_{3q₃,2q₂}(1,0)
    let mut signed = 0.0;
    let mut total = 0.0;
    for blocked in Path::BOTH {
        for outcome in Path::BOTH {
            let p = table.blocked(blocked, outcome);
            signed -= blocked.sign() * outcome.sign() * p;
            total += p;
        }
    }
    if total <= PROBABILITY_FLOOR {
        return Err(Error::ZeroTotal("C32"));
    }
    let c32 = signed / total;

    Ok(CorrelatorSet::new(
        Estimate::exact(c21),
        Estimate::exact(c32),
        Estimate::exact(c31),
    ))
}

pub fn correlators_protocol(config: &ProtocolConfig) -> Result<CorrelatorSet> {
    correlators_from_probabilities(&protocol_probabilities(config)?)
}

/// Inclusive, evenly spaced points.
pub fn linspace(start: f64, stop: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![start],
        n => {
            let step = (stop - start) / (n - 1) as f64;
            (0..n)
                .map(|i| if i == n - 1 { stop } else { start + step * i as f64 })
                .collect()
        }
    }
}

/// `K` over a `(θ_A, χ)` grid. Values are row-major with `θ_A` outer.
#[derive(Debug, Clone, PartialEq)]
pub struct KGrid {
    pub theta_a: Vec<f64>,
    pub chi: Vec<f64>,
    pub theta_b: f64,
    pub values: Vec<f64>,
}

impl KGrid {
    pub fn get(&self, i_theta: usize, i_chi: usize) -> f64 {
        self.values[i_theta * self.chi.len() + i_chi]
    }

    /// `(θ_A, χ, K)` in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.theta_a.iter().enumerate().flat_map(move |(i, &t)| {
            self.chi
                .iter()
                .enumerate()
                .map(move |(j, &c)| (t, c, self.get(i, j)))
        })
    }
}

pub fn sweep_k(theta_a_grid: &[f64], chi_grid: &[f64], theta_b: f64) -> Result<KGrid> {
    if theta_a_grid.is_empty() {
        return Err(Error::EmptyGrid("theta_A"));
    }
    if chi_grid.is_empty() {
        return Err(Error::EmptyGrid("chi"));
    }
    let values = theta_a_grid
        .iter()
        .flat_map(|&t| chi_grid.iter().map(move |&c| correlators_analytic(t, theta_b, c).k))
        .collect();
    Ok(KGrid {
        theta_a: theta_a_grid.to_vec(),
        chi: chi_grid.to_vec(),
        theta_b,
        values,
    })
}

/// Largest `|χ|` with `K ≥ 1` for a balanced second plate, or `None` when
/// no phase setting violates the bound.
pub fn violation_boundary(theta_a: f64) -> Option<f64> {
    if !(theta_a > 0.0 && theta_a < std::f64::consts::PI) {
        return None;
    }
    let t = (0.5 * theta_a).tan();
    (t <= 1.0).then(|| t.acos())
}

/// Instrument parameters that reproduce a set of measured correlators with
/// the imperfections this simulator models: an unbalanced second plate,
/// reduced contrast, and a phase-independent offset at H.
///
/// Inputs are the target `C21`, `C32`, `C31` at the fringe point where O is
/// maximal (`χ = 0`), and `C31` at the opposite fringe point (`χ = π`).
/// The returned config uses a tunable first plate without an absorber, so
/// the region-1 survival probability is 1.
pub fn calibrate_instrument(
    c21: f64,
    c32: f64,
    c31_at_zero: f64,
    c31_at_pi: f64,
) -> Result<ProtocolConfig> {
    check_range("C21", c21, -1.0, 1.0, "[-1, 1]")?;
    let mean = 0.5 * (c31_at_zero + c31_at_pi);
    let half_swing = 0.5 * (c31_at_pi - c31_at_zero);

    // With offset h at H (unit survival):
    //   C31(χ) = (cosA cosB − V sinA sinB cosχ + h) / (1 + h)
    //   C32    = cosB / (1 + 2h)
    let denom = 1.0 + 2.0 * c21 * c32 - mean;
    if denom == 0.0 {
        return Err(Error::Calibration("singular offset equation".into()));
    }
    let h = (mean - c21 * c32) / denom;
    if h.is_nan() || h < 0.0 {
        return Err(Error::Calibration(format!("negative H offset {h}")));
    }
    let cos_b = c32 * (1.0 + 2.0 * h);
    if !(-1.0..=1.0).contains(&cos_b) {
        return Err(Error::Calibration(format!("cos θ_B = {cos_b} outside [-1, 1]")));
    }
    let theta_a = c21.acos();
    let theta_b = cos_b.acos();
    let contrast = theta_a.sin() * theta_b.sin();
    if contrast <= 0.0 {
        return Err(Error::Calibration("no interference contrast available".into()));
    }
    let visibility = half_swing * (1.0 + h) / contrast;
    if !(0.0..=1.0).contains(&visibility) {
        return Err(Error::Calibration(format!("visibility {visibility} outside [0, 1]")));
    }
    Ok(ProtocolConfig {
        theta_a,
        theta_b,
        chi: 0.0,
        absorber: None,
        visibility,
        h_offset: h,
    })
}
