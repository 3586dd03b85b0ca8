use nalgebra::{Matrix2, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::C64;

/// Largest tolerated population-bound violation.
pub const PCA_WORST_CASE: f64 = 0.15;

/// Single-shot IQ samples recorded at one drive setting.
#[derive(Debug, Clone, PartialEq)]
pub struct IqCloud {
    pub setting: f64,
    pub samples: Vec<C64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationTrace {
    pub settings: Vec<f64>,
    pub p: Vec<f64>,
    /// Ground-state anchor (mean of the zero-drive cloud).
    pub i_g: C64,
    /// Excited-state anchor on the principal axis.
    pub i_e: C64,
    /// Worst violation of `0 ≤ p ≤ 1` (or of reaching p = 1) at the chosen anchor.
    pub worst_violation: f64,
    /// Set when `worst_violation` exceeds [`PCA_WORST_CASE`].
    pub flagged: bool,
}

/// Projects cloud means on their principal axis and maps them linearly to
/// excited-state populations.
///
/// The ground anchor is the zero-drive mean. The excited anchor is the
/// point on the axis minimizing the worst of: population above 1, below 0,
/// and the shortfall of the largest population from 1. The sweep is assumed
/// to reach full inversion at some setting.
pub fn pca_populations(clouds: &[IqCloud], zero_drive: f64) -> Result<PopulationTrace> {
    if clouds.len() < 2 {
        return Err(Error::invalid("need at least two settings"));
    }
    let means: Vec<C64> = clouds
        .iter()
        .map(|c| {
            if c.samples.is_empty() {
                Err(Error::invalid(format!("no samples at setting {}", c.setting)))
            } else {
                Ok(c.samples.iter().sum::<C64>() / c.samples.len() as f64)
            }
        })
        .collect::<Result<_>>()?;
    let g = clouds
        .iter()
        .position(|c| c.setting == zero_drive)
        .ok_or_else(|| Error::invalid(format!("zero-drive setting {zero_drive} not present")))?;

    let center = means.iter().sum::<C64>() / means.len() as f64;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for m in &means {
        let d = m - center;
        sxx += d.re * d.re;
        sxy += d.re * d.im;
        syy += d.im * d.im;
    }
    let eig = SymmetricEigen::new(Matrix2::new(sxx, sxy, sxy, syy));
    let k = if eig.eigenvalues[0] >= eig.eigenvalues[1] { 0 } else { 1 };
    let lmax = eig.eigenvalues[k];
    let magnitude: f64 = means.iter().map(|m| m.norm_sqr()).sum::<f64>().max(f64::MIN_POSITIVE);
    if !(lmax > 1e-20 * magnitude) {
        return Err(Error::invalid(
            "settings are indistinguishable: no variance between cloud means",
        ));
    }
    let axis = C64::new(eig.eigenvectors[(0, k)], eig.eigenvectors[(1, k)]);

    // Signed distance from the ground anchor along the axis.
    let proj = |z: C64| ((z - means[g]) * axis.conj()).re;
    let mut y: Vec<f64> = means.iter().map(|&m| proj(m)).collect();
    let far = y
        .iter()
        .copied()
        .fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
    let sign = if far < 0.0 { -1.0 } else { 1.0 };
    let ymax = far.abs();
    for v in &mut y {
        *v *= sign / ymax;
    }

    // Excited anchor at distance `s` (units of ymax), golden-section search.
    let hi_y = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo_y = y.iter().copied().fold(f64::INFINITY, f64::min);
    let worst = |s: f64| {
        let over = hi_y / s - 1.0;
        let under = -lo_y / s;
        let short = 1.0 - hi_y / s;
        over.max(under).max(short).max(0.0)
    };
    let (mut a, mut b) = (0.5, 2.0);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let c = b - phi * (b - a);
        let d = a + phi * (b - a);
        if worst(c) <= worst(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let s = 0.5 * (a + b);
    let worst_violation = worst(s);
    let p: Vec<f64> = y.iter().map(|v| v / s).collect();
    let flagged = worst_violation > PCA_WORST_CASE;
    if flagged {
        log::warn!("population decomposition violates bounds by {worst_violation:.3}");
    }
    Ok(PopulationTrace {
        settings: clouds.iter().map(|c| c.setting).collect(),
        p,
        i_g: means[g],
        i_e: means[g] + axis * (sign * s * ymax),
        worst_violation,
        flagged,
    })
}
