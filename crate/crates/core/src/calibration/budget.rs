use serde::{Deserialize, Serialize};

use super::CircleFitResult;
use crate::error::{Error, Result};

/// Relative spread allowed between the two loaded-rate estimates.
pub const KAPPA_L_UNCERTAINTY: f64 = 0.10;

/// Balance of loaded linewidths against the waveguide couplings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBudget {
    pub kappa_l_aa: f64,
    pub kappa_l_bb: f64,
    pub kappa_l_mean: f64,
    /// Absolute uncertainty on `kappa_l_mean` (10 %).
    pub uncertainty: f64,
    /// Intrinsic loss `κ_L,mean − 2Γ_A − 2Γ_B`.
    pub kappa_i: f64,
    /// `κ_i` is negative beyond the uncertainty: couplings larger than the
    /// loaded width allows.
    pub over_coupled: bool,
}

pub fn loss_budget(aa: &CircleFitResult, bb: &CircleFitResult, gamma_a: f64, gamma_b: f64) -> Result<LossBudget> {
    loss_budget_from_rates(aa.kappa_loaded, bb.kappa_loaded, gamma_a, gamma_b)
}

/// Same as [`loss_budget`] from bare loaded rates (rad/s).
pub fn loss_budget_from_rates(kappa_l_aa: f64, kappa_l_bb: f64, gamma_a: f64, gamma_b: f64) -> Result<LossBudget> {
    if !(kappa_l_aa > 0.0 && kappa_l_bb > 0.0) {
        return Err(Error::invalid("loaded rates must be positive"));
    }
    if !(gamma_a > 0.0 && gamma_b > 0.0) {
        return Err(Error::invalid("couplings must be positive"));
    }
    let mean = 0.5 * (kappa_l_aa + kappa_l_bb);
    let uncertainty = KAPPA_L_UNCERTAINTY * mean;
    let kappa_i = mean - 2.0 * gamma_a - 2.0 * gamma_b;
    let over_coupled = kappa_i < -uncertainty;
    if over_coupled {
        log::warn!("intrinsic loss {kappa_i:.4e} rad/s is negative beyond the {uncertainty:.4e} rad/s uncertainty");
    }
    Ok(LossBudget {
        kappa_l_aa,
        kappa_l_bb,
        kappa_l_mean: mean,
        uncertainty,
        kappa_i,
        over_coupled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::MHZ;

    #[test]
    fn reference_budget() {
        let b = loss_budget_from_rates(9.33 * MHZ, 8.48 * MHZ, 1.82 * MHZ, 2.31 * MHZ).unwrap();
        assert!((b.kappa_l_mean / MHZ - 8.905).abs() < 1e-12);
        assert!((b.uncertainty / MHZ - 0.8905).abs() < 1e-12);
        assert!((b.kappa_i / MHZ - 0.645).abs() < 1e-9);
        assert!(!b.over_coupled);
    }

    #[test]
    fn lossless_and_linear() {
        let b = loss_budget_from_rates(8.26 * MHZ, 8.26 * MHZ, 1.82 * MHZ, 2.31 * MHZ).unwrap();
        assert!(b.kappa_i.abs() < 1e-9 * MHZ);
        let s = 3.7;
        let base = loss_budget_from_rates(9.33, 8.48, 1.82, 2.31).unwrap();
        let scaled = loss_budget_from_rates(9.33 * s, 8.48 * s, 1.82 * s, 2.31 * s).unwrap();
        assert!((scaled.kappa_i - s * base.kappa_i).abs() < 1e-12);
    }

    #[test]
    fn over_coupled_is_flagged_not_fatal() {
        let b = loss_budget_from_rates(6.0, 6.0, 1.82, 2.31).unwrap();
        assert!(b.over_coupled);
        assert!(loss_budget_from_rates(-1.0, 6.0, 1.0, 1.0).is_err());
    }
}
