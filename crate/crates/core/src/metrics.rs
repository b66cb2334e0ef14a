//! Glycemic outcome metrics: time-in-range partition, LBGI/HBGI risk
//! indices, summary statistics and CVGA zone classification.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Euglycemic band boundaries (mg/dl).
pub const HYPO_THRESHOLD: f64 = 70.0;
pub const HYPER_THRESHOLD: f64 = 180.0;
pub const SEVERE_HYPO_THRESHOLD: f64 = 50.0;

// Symmetrizing risk transform constants (standard BG risk quantification).
const RISK_SCALE: f64 = 1.509;
const RISK_EXPONENT: f64 = 1.084;
const RISK_OFFSET: f64 = 5.381;

/// CVGA zones ordered from best (A) to worst (E).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CvgaZone {
    A,
    LowerB,
    UpperB,
    B,
    LowerC,
    UpperC,
    LowerD,
    UpperD,
    E,
}

impl CvgaZone {
    pub fn label(&self) -> &'static str {
        match self {
            CvgaZone::A => "A",
            CvgaZone::LowerB => "Lower B",
            CvgaZone::UpperB => "Upper B",
            CvgaZone::B => "B",
            CvgaZone::LowerC => "Lower C",
            CvgaZone::UpperC => "Upper C",
            CvgaZone::LowerD => "Lower D",
            CvgaZone::UpperD => "Upper D",
            CvgaZone::E => "E",
        }
    }

    /// Grid cell as (column from min BG, row from max BG); (0,0) is A.
    pub fn grid_indices(&self) -> (usize, usize) {
        match self {
            CvgaZone::A => (0, 0),
            CvgaZone::LowerB => (1, 0),
            CvgaZone::LowerC => (2, 0),
            CvgaZone::UpperB => (0, 1),
            CvgaZone::B => (1, 1),
            CvgaZone::LowerD => (2, 1),
            CvgaZone::UpperC => (0, 2),
            CvgaZone::UpperD => (1, 2),
            CvgaZone::E => (2, 2),
        }
    }
}

/// Per-trial glycemic outcome summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlycemicReport {
    /// % of time with x1 in [70, 180] mg/dl.
    pub pct_eu: f64,
    /// % of time with x1 > 180 mg/dl.
    pub pct_hyper: f64,
    /// % of time with x1 < 70 mg/dl.
    pub pct_hypo: f64,
    /// % of time with x1 < 50 mg/dl (sub-band of hypo, reported separately).
    pub pct_severe_hypo: f64,
    pub lbgi: f64,
    pub hbgi: f64,
    pub mean_bg: f64,
    /// Population standard deviation over mean (fraction, not %).
    pub cov: f64,
    pub hba1c: f64,
    pub cvga: CvgaZone,
    pub min_bg: f64,
    pub max_bg: f64,
}

/// Sample-counting percentages against the 70/180/50 thresholds.
pub fn time_in_ranges(bg: &[f64]) -> Result<(f64, f64, f64, f64)> {
    if bg.is_empty() {
        return Err(Error::Domain("time_in_ranges needs a nonempty series".into()));
    }
    let n = bg.len() as f64;
    let mut eu = 0usize;
    let mut hyper = 0usize;
    let mut hypo = 0usize;
    let mut severe = 0usize;
    for &g in bg {
        if g < HYPO_THRESHOLD {
            hypo += 1;
            if g < SEVERE_HYPO_THRESHOLD {
                severe += 1;
            }
        } else if g > HYPER_THRESHOLD {
            hyper += 1;
        } else {
            eu += 1;
        }
    }
    Ok((
        100.0 * eu as f64 / n,
        100.0 * hyper as f64 / n,
        100.0 * hypo as f64 / n,
        100.0 * severe as f64 / n,
    ))
}

fn risk_transform(bg: f64) -> f64 {
    RISK_SCALE * (bg.ln().powf(RISK_EXPONENT) - RISK_OFFSET)
}

/// Low/high blood glucose risk indices: mean of 10*f(bg)^2 over samples
/// with f below (resp. above) the risk root.
pub fn risk_indices(bg: &[f64]) -> Result<(f64, f64)> {
    if bg.is_empty() {
        return Err(Error::Domain("risk_indices needs a nonempty series".into()));
    }
    if bg.iter().any(|g| *g <= 0.0 || !g.is_finite()) {
        return Err(Error::Domain("risk_indices requires strictly positive glucose".into()));
    }
    let n = bg.len() as f64;
    let mut low = 0.0;
    let mut high = 0.0;
    for &g in bg {
        let f = risk_transform(g);
        let risk = 10.0 * f * f;
        if f < 0.0 {
            low += risk;
        } else {
            high += risk;
        }
    }
    Ok((low / n, high / n))
}

/// Mean, coefficient of variation (population std / mean) and estimated
/// HbA1c via the linear mean-glucose relation (mean + 46.7) / 28.7.
pub fn summary_stats(bg: &[f64]) -> Result<(f64, f64, f64)> {
    if bg.is_empty() {
        return Err(Error::Domain("summary_stats needs a nonempty series".into()));
    }
    let n = bg.len() as f64;
    let mean = bg.iter().sum::<f64>() / n;
    let var = bg.iter().map(|g| (g - mean) * (g - mean)).sum::<f64>() / n;
    let cov = var.sqrt() / mean;
    Ok((mean, cov, hba1c_from_mean(mean)))
}

pub fn hba1c_from_mean(mean_bg: f64) -> f64 {
    (mean_bg + 46.7) / 28.7
}

/// CVGA 3x3 grid classification from per-trial glucose extremes.
///
/// Columns by min BG: >90 | [70, 90] | <70. Rows by max BG: <180 | [180, 300]
/// | >300.
pub fn cvga_zone(min_bg: f64, max_bg: f64) -> Result<CvgaZone> {
    if min_bg.is_nan() || max_bg.is_nan() || min_bg > max_bg {
        return Err(Error::Domain(format!("cvga_zone: min {min_bg} > max {max_bg}")));
    }
    let col = if min_bg > 90.0 {
        0
    } else if min_bg >= 70.0 {
        1
    } else {
        2
    };
    let row = if max_bg < 180.0 {
        0
    } else if max_bg <= 300.0 {
        1
    } else {
        2
    };
    Ok(match (col, row) {
        (0, 0) => CvgaZone::A,
        (1, 0) => CvgaZone::LowerB,
        (2, 0) => CvgaZone::LowerC,
        (0, 1) => CvgaZone::UpperB,
        (1, 1) => CvgaZone::B,
        (2, 1) => CvgaZone::LowerD,
        (0, 2) => CvgaZone::UpperC,
        (1, 2) => CvgaZone::UpperD,
        _ => CvgaZone::E,
    })
}

/// Full per-trial report from a recorded glucose series.
pub fn glycemic_report(bg: &[f64]) -> Result<GlycemicReport> {
    let (pct_eu, pct_hyper, pct_hypo, pct_severe_hypo) = time_in_ranges(bg)?;
    let (lbgi, hbgi) = risk_indices(bg)?;
    let (mean_bg, cov, hba1c) = summary_stats(bg)?;
    let min_bg = bg.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_bg = bg.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(GlycemicReport {
        pct_eu,
        pct_hyper,
        pct_hypo,
        pct_severe_hypo,
        lbgi,
        hbgi,
        mean_bg,
        cov,
        hba1c,
        cvga: cvga_zone(min_bg, max_bg)?,
        min_bg,
        max_bg,
    })
}
