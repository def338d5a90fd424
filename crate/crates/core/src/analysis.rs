//! From count records to correlators, `K` and its significance.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::counting::{
    combine_k, estimate_c21, estimate_c31, estimate_c32, BeamProfile, BlockedCounts, BlockerState,
    CountRecord, Detector, EstimatedCorrelator, PeakCounts, ScanVar,
};
use crate::error::{Error, Result};
use crate::fitting::{fit_cosine, fit_gaussian, FitFlag, FitResult};
use crate::optics::Path;
use crate::protocol::{CorrelatorSet, Estimate};

/// How the `C31` phase setting is chosen.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChiMode {
    /// Scan point closest to the fitted maximum of the `3−` detector.
    #[default]
    NearestFit,
    /// Fitted interferogram curves evaluated at that maximum, with
    /// fit-covariance uncertainties.
    FitModel,
    /// Scan point with the largest `K`.
    MaxK,
}

impl std::str::FromStr for ChiMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "nearest-fit" => Ok(ChiMode::NearestFit),
            "fit-model" => Ok(ChiMode::FitModel),
            "max-k" => Ok(ChiMode::MaxK),
            other => Err(format!(
                "unknown chi mode `{other}` (expected nearest-fit, fit-model or max-k)"
            )),
        }
    }
}

impl std::fmt::Display for ChiMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ChiMode::NearestFit => "nearest-fit",
            ChiMode::FitModel => "fit-model",
            ChiMode::MaxK => "max-k",
        })
    }
}

/// Which output detector carries the `3+` label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignAssignment {
    pub plus: Detector,
}

impl SignAssignment {
    /// H is `3+`, O is `3−`.
    pub const STANDARD: Self = Self { plus: Detector::H };
    pub const RELABELED: Self = Self { plus: Detector::O };

    pub fn new(relabel: bool) -> Self {
        if relabel {
            Self::RELABELED
        } else {
            Self::STANDARD
        }
    }

    pub fn detector(&self, outcome: Path) -> Detector {
        let minus = if self.plus == Detector::H { Detector::O } else { Detector::H };
        match outcome {
            Path::Plus => self.plus,
            Path::Minus => minus,
        }
    }
}

/// O and H counts at one phase setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterferogramPoint {
    pub chi: f64,
    pub o: u64,
    pub h: u64,
}

impl InterferogramPoint {
    pub fn counts(&self, detector: Detector) -> u64 {
        match detector {
            Detector::H => self.h,
            _ => self.o,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KPoint {
    pub chi: f64,
    pub k: f64,
    pub sigma_k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterferogramFits {
    pub o: FitResult,
    pub h: FitResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransversalFits {
    pub path_plus: FitResult,
    pub path_minus: FitResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub correlators: CorrelatorSet,
    pub operating_chi: f64,
    pub chi_mode: ChiMode,
    pub relabeled: bool,
    pub c21: EstimatedCorrelator,
    pub c32: EstimatedCorrelator,
    /// `C31` at the operating point from raw counts.
    pub c31_counts: EstimatedCorrelator,
    /// `C31` from the fitted interferogram curves at the fitted maximum.
    pub c31_fit: Estimate,
    pub interferogram_fits: InterferogramFits,
    pub transversal_fits: TransversalFits,
    pub k_curve: Vec<KPoint>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisOptions {
    pub relabel: bool,
    pub chi_mode: ChiMode,
    pub profile: BeamProfile,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            relabel: false,
            chi_mode: ChiMode::NearestFit,
            profile: BeamProfile::default(),
        }
    }
}

/// Pairs O and H records by phase setting, preserving scan order.
pub fn interferogram_points(records: &[CountRecord]) -> Result<Vec<InterferogramPoint>> {
    let mut points: Vec<(f64, Option<u64>, Option<u64>)> = Vec::new();
    for r in records {
        if r.scan_var != ScanVar::ChiRad || r.blocker != BlockerState::None {
            return Err(Error::IncompleteRecords(format!(
                "interferogram record at {} is not an unblocked phase scan",
                r.scan_value
            )));
        }
        let slot = match points.iter().position(|p| p.0 == r.scan_value) {
            Some(i) => i,
            None => {
                points.push((r.scan_value, None, None));
                points.len() - 1
            }
        };
        let entry = &mut points[slot];
        let target = match r.detector {
            Detector::O => &mut entry.1,
            Detector::H => &mut entry.2,
            Detector::Mobile => {
                return Err(Error::IncompleteRecords(
                    "mobile detector record in interferogram run".into(),
                ))
            }
        };
        if target.replace(r.counts).is_some() {
            return Err(Error::IncompleteRecords(format!(
                "duplicate {:?} record at chi = {}",
                r.detector, r.scan_value
            )));
        }
    }
    if points.is_empty() {
        return Err(Error::IncompleteRecords("interferogram run has no records".into()));
    }
    points
        .into_iter()
        .map(|(chi, o, h)| match (o, h) {
            (Some(o), Some(h)) => Ok(InterferogramPoint { chi, o, h }),
            _ => Err(Error::IncompleteRecords(format!(
                "interferogram point chi = {chi} lacks an O or H record"
            ))),
        })
        .collect()
}

/// Blocked-path counts under the given sign assignment.
pub fn blocked_counts(records: &[CountRecord], signs: SignAssignment) -> Result<BlockedCounts> {
    let find = |outcome: Path, blocked: Path| -> Result<u64> {
        let detector = signs.detector(outcome);
        let blocker = BlockerState::from(blocked);
        let mut hits = records
            .iter()
            .filter(|r| r.detector == detector && r.blocker == blocker);
        match (hits.next(), hits.next()) {
            (Some(r), None) => Ok(r.counts),
            (None, _) => Err(Error::IncompleteRecords(format!(
                "blocker run lacks {detector:?} counts with path {} blocked",
                if blocked == Path::Plus { "2+" } else { "2-" }
            ))),
            (Some(_), Some(_)) => Err(Error::IncompleteRecords(format!(
                "duplicate {detector:?} blocker record"
            ))),
        }
    };
    Ok(BlockedCounts {
        n_3p_2m: find(Path::Plus, Path::Minus)?,
        n_3m_2p: find(Path::Minus, Path::Plus)?,
        n_3p_2p: find(Path::Plus, Path::Plus)?,
        n_3m_2m: find(Path::Minus, Path::Minus)?,
    })
}

/// `C21` from Gaussian fits to the two halves of a transversal scan, split
/// at the midpoint between the nominal path centers.
pub fn c21_from_scan(records: &[CountRecord], profile: &BeamProfile) -> Result<(EstimatedCorrelator, TransversalFits)> {
    profile.validate()?;
    if records.iter().any(|r| r.scan_var != ScanVar::PosMm) {
        return Err(Error::IncompleteRecords(
            "transversal run must be scanned in pos_mm".into(),
        ));
    }
    let mid = profile.midpoint();
    let plus_side = profile.center_plus_mm > mid;
    let side = |want_plus: bool| -> Vec<(f64, f64)> {
        records
            .iter()
            .filter(|r| (r.scan_value > mid) == (want_plus == plus_side))
            .map(|r| (r.scan_value, r.counts as f64))
            .collect()
    };
    let fit_plus = fit_gaussian(&side(true))?;
    let fit_minus = fit_gaussian(&side(false))?;
    let peak = |f: &FitResult| PeakCounts {
        value: f.params[0],
        sigma: f.std_errors[0],
    };
    let c21 = estimate_c21(peak(&fit_plus), peak(&fit_minus))?;
    Ok((
        c21,
        TransversalFits {
            path_plus: fit_plus,
            path_minus: fit_minus,
        },
    ))
}

fn circular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

fn c31_at(point: &InterferogramPoint, signs: SignAssignment) -> Result<EstimatedCorrelator> {
    estimate_c31(
        point.counts(signs.detector(Path::Plus)),
        point.counts(signs.detector(Path::Minus)),
    )
}

fn fit_interferograms(points: &[InterferogramPoint]) -> Result<InterferogramFits> {
    let series = |d: Detector| -> Vec<(f64, f64)> {
        points.iter().map(|p| (p.chi, p.counts(d) as f64)).collect()
    };
    Ok(InterferogramFits {
        o: fit_cosine(&series(Detector::O))?,
        h: fit_cosine(&series(Detector::H))?,
    })
}

fn fit_for(fits: &InterferogramFits, detector: Detector) -> &FitResult {
    match detector {
        Detector::H => &fits.h,
        _ => &fits.o,
    }
}

fn c31_from_fits(fits: &InterferogramFits, signs: SignAssignment, chi: f64) -> Estimate {
    let plus = fit_for(fits, signs.detector(Path::Plus));
    let minus = fit_for(fits, signs.detector(Path::Minus));
    let (p, m) = (plus.value_at(chi), minus.value_at(chi));
    let s = p + m;
    let value = (p - m) / s;
    let var = (2.0 * m / (s * s)).powi(2) * plus.value_variance_at(chi)
        + (2.0 * p / (s * s)).powi(2) * minus.value_variance_at(chi);
    Estimate::with_sigma(value, var.sqrt())
}

fn k_curve(
    points: &[InterferogramPoint],
    signs: SignAssignment,
    c21: &EstimatedCorrelator,
    c32: &EstimatedCorrelator,
) -> Result<Vec<KPoint>> {
    points
        .iter()
        .map(|p| {
            let set = combine_k(c21, c32, &c31_at(p, signs)?);
            Ok(KPoint {
                chi: p.chi,
                k: set.k,
                sigma_k: set.sigma_k.unwrap_or(f64::NAN),
            })
        })
        .collect()
}

struct Region3 {
    c32: EstimatedCorrelator,
    c31_counts: EstimatedCorrelator,
    c31_fit: Estimate,
    c31_used: Estimate,
    operating_chi: f64,
    fits: InterferogramFits,
    curve: Vec<KPoint>,
    warnings: Vec<String>,
}

fn region3(
    c21: &EstimatedCorrelator,
    interferogram: &[CountRecord],
    blocker: &[CountRecord],
    signs: SignAssignment,
    mode: ChiMode,
) -> Result<Region3> {
    let points = interferogram_points(interferogram)?;
    let c32 = estimate_c32(blocked_counts(blocker, signs)?)?;
    let curve = k_curve(&points, signs, c21, &c32)?;
    let fits = fit_interferograms(&points)?;
    let mut warnings = Vec::new();

    let minus_fit = fit_for(&fits, signs.detector(Path::Minus));
    if minus_fit.has_flag(FitFlag::FlatData) || !minus_fit.converged {
        warnings.push(format!(
            "interferogram fit for {:?} is unreliable ({:?}); fitted fringe position is arbitrary",
            signs.detector(Path::Minus),
            minus_fit.flags
        ));
    }
    let fitted_max = minus_fit.params[2];
    let nearest = points
        .iter()
        .enumerate()
        .min_by(|a, b| {
            circular_distance(a.1.chi, fitted_max).total_cmp(&circular_distance(b.1.chi, fitted_max))
        })
        .map(|(i, _)| i)
        .expect("points are non-empty");
    let index = match mode {
        ChiMode::MaxK => curve
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.k.total_cmp(&b.1.k))
            .map(|(i, _)| i)
            .expect("points are non-empty"),
        _ => nearest,
    };
    let c31_counts = c31_at(&points[index], signs)?;
    let c31_fit = c31_from_fits(&fits, signs, fitted_max);
    let (c31_used, operating_chi) = match mode {
        ChiMode::FitModel => (c31_fit, fitted_max),
        _ => (Estimate::from(&c31_counts), points[index].chi),
    };
    Ok(Region3 {
        c32,
        c31_counts,
        c31_fit,
        c31_used,
        operating_chi,
        fits,
        curve,
        warnings,
    })
}

/// Recomputes `C31` and `C32` with O taking the `3+` label (C21 unchanged).
pub fn relabel_detectors(
    c21: &EstimatedCorrelator,
    interferogram: &[CountRecord],
    blocker: &[CountRecord],
    mode: ChiMode,
) -> Result<CorrelatorSet> {
    let r = region3(c21, interferogram, blocker, SignAssignment::RELABELED, mode)?;
    Ok(CorrelatorSet::new(c21.into(), (&r.c32).into(), r.c31_used))
}

pub fn analyze(
    interferogram: &[CountRecord],
    transversal: &[CountRecord],
    blocker: &[CountRecord],
    options: &AnalysisOptions,
) -> Result<AnalysisReport> {
    let (c21, transversal_fits) = c21_from_scan(transversal, &options.profile)?;
    let signs = SignAssignment::new(options.relabel);
    let r = region3(&c21, interferogram, blocker, signs, options.chi_mode)?;
    let correlators = CorrelatorSet::new((&c21).into(), (&r.c32).into(), r.c31_used);
    let mut warnings = r.warnings;
    for (name, fit) in [("2+", &transversal_fits.path_plus), ("2-", &transversal_fits.path_minus)] {
        if !fit.flags.is_empty() {
            warnings.push(format!("transversal fit for path {name}: {:?}", fit.flags));
        }
    }
    Ok(AnalysisReport {
        correlators,
        operating_chi: r.operating_chi,
        chi_mode: options.chi_mode,
        relabeled: options.relabel,
        c21,
        c32: r.c32,
        c31_counts: r.c31_counts,
        c31_fit: r.c31_fit,
        interferogram_fits: r.fits,
        transversal_fits,
        k_curve: r.curve,
        warnings,
    })
}
