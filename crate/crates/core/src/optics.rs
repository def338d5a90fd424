//! Two-path density operators and the interferometer elements acting on them.
//!
//! The path basis is ordered `(+, −)`. A state's trace is its survival
//! probability: it starts at 1 and only absorbers and blockers reduce it.
//! Nothing here renormalizes; conditioning on detection happens in the ratio
//! estimators downstream.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{check_range, Error, Result};

type Mat2 = [[Complex64; 2]; 2];

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// One of the two interferometer paths within a region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Path {
    Plus,
    Minus,
}

impl Path {
    pub const BOTH: [Path; 2] = [Path::Plus, Path::Minus];

    pub fn index(self) -> usize {
        match self {
            Path::Plus => 0,
            Path::Minus => 1,
        }
    }

    pub fn other(self) -> Path {
        match self {
            Path::Plus => Path::Minus,
            Path::Minus => Path::Plus,
        }
    }

    /// Dichotomic outcome `q = ±1` associated with the path.
    pub fn sign(self) -> f64 {
        match self {
            Path::Plus => 1.0,
            Path::Minus => -1.0,
        }
    }
}

/// 2×2 density operator over the path basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoPathState {
    rho: Mat2,
}

impl TwoPathState {
    /// Neutron entering through the `+` port.
    pub fn plus() -> Self {
        Self::pure(Complex64::new(1.0, 0.0), ZERO)
    }

    pub fn minus() -> Self {
        Self::pure(ZERO, Complex64::new(1.0, 0.0))
    }

    /// `|ψ⟩⟨ψ|` for amplitudes `(a₊, a₋)`; not normalized.
    pub fn pure(plus: Complex64, minus: Complex64) -> Self {
        let amp = [plus, minus];
        let mut rho = [[ZERO; 2]; 2];
        for (i, row) in rho.iter_mut().enumerate() {
            for (j, entry) in row.iter_mut().enumerate() {
                *entry = amp[i] * amp[j].conj();
            }
        }
        Self { rho }
    }

    /// Equal superposition `(|+⟩ + |−⟩)/√2`.
    pub fn equal_superposition() -> Self {
        let a = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        Self::pure(a, a)
    }

    /// Builds a state from raw matrix entries, checking the state invariants.
    pub fn from_matrix(rho: Mat2) -> Result<Self> {
        let state = Self { rho };
        state.validate()?;
        Ok(state)
    }

    pub fn matrix(&self) -> &Mat2 {
        &self.rho
    }

    pub fn population(&self, path: Path) -> f64 {
        let i = path.index();
        self.rho[i][i].re
    }

    /// `ρ₊₋`
    pub fn coherence(&self) -> Complex64 {
        self.rho[0][1]
    }

    pub fn trace(&self) -> f64 {
        self.rho[0][0].re + self.rho[1][1].re
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> [f64; 2] {
        let a = self.rho[0][0].re;
        let d = self.rho[1][1].re;
        let b = self.rho[0][1].norm();
        let half_gap = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        let mid = 0.5 * (a + d);
        [mid - half_gap, mid + half_gap]
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        (0..2).all(|i| (0..2).all(|j| (self.rho[i][j] - self.rho[j][i].conj()).norm() <= tol))
    }

    pub fn validate(&self) -> Result<()> {
        if !self.is_hermitian(1e-12) {
            return Err(Error::InvalidChain("density operator is not Hermitian".into()));
        }
        let [lo, _] = self.eigenvalues();
        if lo < -1e-12 {
            return Err(Error::InvalidChain(format!(
                "density operator has negative eigenvalue {lo}"
            )));
        }
        let tr = self.trace();
        if !(-1e-12..=1.0 + 1e-12).contains(&tr) {
            return Err(Error::InvalidChain(format!("trace {tr} outside [0, 1]")));
        }
        Ok(())
    }

    #[allow(clippy::needless_range_loop)]
    fn conjugate_by(&self, u: &Mat2) -> Self {
        let mut tmp = [[ZERO; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                tmp[i][j] = u[i][0] * self.rho[0][j] + u[i][1] * self.rho[1][j];
            }
        }
        let mut rho = [[ZERO; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                rho[i][j] = tmp[i][0] * u[j][0].conj() + tmp[i][1] * u[j][1].conj();
            }
        }
        Self { rho }
    }
}

/// Unitary of a tunable beamsplitter plate with mixing angle `theta`.
pub fn beamsplitter_matrix(theta: f64) -> Mat2 {
    let c = Complex64::new((0.5 * theta).cos(), 0.0);
    let s = Complex64::new(0.0, (0.5 * theta).sin());
    [[c, s], [s, c]]
}

/// `ρ ← U ρ U†` with `U = [[cos θ/2, i sin θ/2], [i sin θ/2, cos θ/2]]`.
pub fn apply_beamsplitter(state: &TwoPathState, theta: f64) -> Result<TwoPathState> {
    check_range("theta", theta, 0.0, PI, "[0, π]")?;
    Ok(state.conjugate_by(&beamsplitter_matrix(theta)))
}

/// Phase `e^{iχ}` on the `−` amplitude.
pub fn apply_phase(state: &TwoPathState, chi: f64) -> TwoPathState {
    let phase = Complex64::from_polar(1.0, -chi);
    let mut rho = state.rho;
    rho[0][1] *= phase;
    rho[1][0] *= phase.conj();
    TwoPathState { rho }
}

/// Coherent amplitude attenuation `√T` on one path.
pub fn apply_absorber(state: &TwoPathState, transmission: f64, path: Path) -> Result<TwoPathState> {
    check_range("absorber transmission", transmission, 0.0, 1.0, "[0, 1]")?;
    let p = path.index();
    let q = path.other().index();
    let amp = transmission.sqrt();
    let mut rho = state.rho;
    rho[p][p] *= transmission;
    rho[p][q] *= amp;
    rho[q][p] *= amp;
    Ok(TwoPathState { rho })
}

/// Projects out the blocked path.
pub fn apply_blocker(state: &TwoPathState, path: Path) -> TwoPathState {
    let p = path.index();
    let mut rho = state.rho;
    rho[p] = [ZERO; 2];
    for row in &mut rho {
        row[p] = ZERO;
    }
    TwoPathState { rho }
}

/// Scales the path coherence by the visibility `V`.
pub fn apply_dephasing(state: &TwoPathState, visibility: f64) -> Result<TwoPathState> {
    check_range("visibility", visibility, 0.0, 1.0, "[0, 1]")?;
    let mut rho = state.rho;
    rho[0][1] *= visibility;
    rho[1][0] *= visibility;
    Ok(TwoPathState { rho })
}

/// Returns `(ρ₊₊, ρ₋₋)`. Their sum is the survival probability.
pub fn detection_probabilities(state: &TwoPathState) -> (f64, f64) {
    (state.population(Path::Plus), state.population(Path::Minus))
}

/// Mixing angle of the tunable plate equivalent to a 50:50 plate followed by
/// an absorber of intensity transmission `T` on the `−` path, conditioned on
/// survival.
pub fn effective_theta(transmission: f64) -> Result<f64> {
    check_range("absorber transmission", transmission, 0.0, 1.0, "[0, 1]")?;
    Ok(((1.0 - transmission) / (1.0 + transmission)).acos())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Element {
    Beamsplitter { theta: f64 },
    PhaseShifter { chi: f64 },
    Absorber { transmission: f64, path: Path },
    Blocker { path: Path },
    Dephaser { visibility: f64 },
}

impl Element {
    pub fn apply(&self, state: &TwoPathState) -> Result<TwoPathState> {
        match *self {
            Element::Beamsplitter { theta } => apply_beamsplitter(state, theta),
            Element::PhaseShifter { chi } => Ok(apply_phase(state, chi)),
            Element::Absorber { transmission, path } => apply_absorber(state, transmission, path),
            Element::Blocker { path } => Ok(apply_blocker(state, path)),
            Element::Dephaser { visibility } => apply_dephasing(state, visibility),
        }
    }

    pub fn is_beamsplitter(&self) -> bool {
        matches!(self, Element::Beamsplitter { .. })
    }
}

/// Ordered interferometer elements.
///
/// Regions are implicit: region 1 ends with the first plate and any absorber
/// directly behind it, region 2 holds everything up to the second plate, and
/// region 3 begins after it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementChain {
    elements: Vec<Element>,
}

impl ElementChain {
    pub fn new(elements: Vec<Element>) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::InvalidChain("chain is empty".into()));
        }
        Ok(Self { elements })
    }

    /// Like [`ElementChain::new`], additionally requiring exactly two plates.
    pub fn full_lgi(elements: Vec<Element>) -> Result<Self> {
        let chain = Self::new(elements)?;
        let plates = chain.elements.iter().filter(|e| e.is_beamsplitter()).count();
        if plates != 2 {
            return Err(Error::InvalidChain(format!(
                "full interferometer needs exactly two beamsplitters, found {plates}"
            )));
        }
        Ok(chain)
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn push(&mut self, element: Element) {
        self.elements.push(element);
    }
}

pub fn propagate(state: &TwoPathState, chain: &ElementChain) -> Result<TwoPathState> {
    chain
        .elements
        .iter()
        .try_fold(*state, |acc, element| element.apply(&acc))
}
