//! Embedding the 4-port cell between input and output line two-ports.
//!
//! Each waveguide has an input line `S_x` (port 1 external, port 2 facing
//! the cell) and an output line `G_x` (port 1 facing the cell, port 2
//! external). The eight line waves are regrouped into external and
//! internal halves by a fixed permutation; the internal half is then
//! eliminated against the cell matrix:
//!
//! ```text
//! S_meas = S11 + S12 (S⁻¹ − S22)⁻¹ S21
//!        = S11 + S12 S Σ_k (S22 S)^k S21        (when ρ(S·S22) < 1)
//! ```
//!
//! External ports come out in the same order as the cell ports:
//! (A-in, A-out, B-in, B-out).
//!
//! The direct A↔B isolation leak is not part of the 8-wave network; it is
//! added to the cross channels separately ([`simplified_forward`],
//! [`exact_forward`]).

mod matrix;

pub use matrix::PortMatrix;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{port, CellCoefficients};
use crate::C64;

use matrix::{condition_number, max_entry, spectral_radius};

/// Cells with a smallest singular value below this are regularized by `+εI`.
pub const SINGULAR_CELL_EPS: f64 = 1e-12;
/// `(S⁻¹ − S22)` with a larger condition number is reported as singular.
pub const MAX_CONDITION: f64 = 1e13;

/// Input/output line two-ports for both waveguides plus the isolation leak.
#[derive(Debug, Clone, PartialEq)]
pub struct LineModel {
    pub s_in_a: PortMatrix,
    pub s_out_a: PortMatrix,
    pub s_in_b: PortMatrix,
    pub s_out_b: PortMatrix,
    pub isolation: C64,
}

impl LineModel {
    /// Reflectionless unit-transmission lines with no isolation leak.
    pub fn ideal() -> Self {
        Self::attenuators(C64::new(1.0, 0.0), C64::new(0.0, 0.0))
    }

    /// All four lines are matched attenuators with transmission `tau`.
    pub fn attenuators(tau: C64, isolation: C64) -> Self {
        let zero = C64::new(0.0, 0.0);
        let line = PortMatrix::two_port(zero, tau, tau, zero);
        Self {
            s_in_a: line.clone(),
            s_out_a: line.clone(),
            s_in_b: line.clone(),
            s_out_b: line,
            isolation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, m) in self.lines() {
            if m.dim() != 2 {
                return Err(Error::invalid(format!("{name} must be a two-port")));
            }
        }
        if !self.isolation.re.is_finite() || !self.isolation.im.is_finite() {
            return Err(Error::invalid("isolation is not finite"));
        }
        Ok(())
    }

    /// True when every line is passive within `tol`.
    pub fn is_passive(&self, tol: f64) -> bool {
        self.lines().iter().all(|(_, m)| m.is_passive(tol))
    }

    /// Largest reflection magnitude over all line ports.
    pub fn max_reflection(&self) -> f64 {
        self.lines()
            .iter()
            .flat_map(|(_, m)| [m[(0, 0)].norm(), m[(1, 1)].norm()])
            .fold(0.0, f64::max)
    }

    fn lines(&self) -> [(&'static str, &PortMatrix); 4] {
        [
            ("s_in_a", &self.s_in_a),
            ("s_out_a", &self.s_out_a),
            ("s_in_b", &self.s_in_b),
            ("s_out_b", &self.s_out_b),
        ]
    }

    /// Forward transmissions `(S_A²¹, G_A²¹, S_B²¹, G_B²¹)`.
    pub fn transmissions(&self) -> (C64, C64, C64, C64) {
        (
            self.s_in_a[(1, 0)],
            self.s_out_a[(1, 0)],
            self.s_in_b[(1, 0)],
            self.s_out_b[(1, 0)],
        )
    }
}

/// 8×8 permutation taking natural wave order
/// `(a_1A, a_2A, a_1GA, a_2GA, a_1B, a_2B, a_1GB, a_2GB)` to
/// `(a_ext, a_int)` with
/// `a_ext = (a_1A, a_2GA, a_1B, a_2GB)` and `a_int = (a_2A, a_1GA, a_2B, a_1GB)`.
pub fn permutation_matrix() -> PortMatrix {
    const TARGET: [usize; 8] = [0, 3, 4, 7, 1, 2, 5, 6];
    let mut p = PortMatrix::zeros(8);
    for (row, &col) in TARGET.iter().enumerate() {
        p[(row, col)] = C64::new(1.0, 0.0);
    }
    p
}

/// Diagonal 4×4 blocks of the permuted line matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplementaryBlocks {
    /// External → external (line reflections seen from outside).
    pub s11: PortMatrix,
    /// Internal → external.
    pub s12: PortMatrix,
    /// External → internal.
    pub s21: PortMatrix,
    /// Internal → internal (line reflections seen from the cell).
    pub s22: PortMatrix,
}

/// Blocks of `P·diag(S_A, G_A, S_B, G_B)·Pᵀ`.
///
/// Input lines face outward with port 1, output lines with port 2, so the
/// output-line entries appear index-swapped: slot `G` of `S11` holds
/// `G²²`, of `S12` holds `G²¹`, of `S21` holds `G¹²`, of `S22` holds `G¹¹`.
pub fn complementary_blocks(lines: &LineModel) -> ComplementaryBlocks {
    let slots: [(&PortMatrix, (usize, usize)); 4] = [
        (&lines.s_in_a, (0, 1)),
        (&lines.s_out_a, (1, 0)),
        (&lines.s_in_b, (0, 1)),
        (&lines.s_out_b, (1, 0)),
    ];
    let pick = |f: &dyn Fn(&PortMatrix, usize, usize) -> C64| {
        let diag: Vec<C64> = slots.iter().map(|(m, (e, i))| f(m, *e, *i)).collect();
        PortMatrix::from_diagonal(&diag)
    };
    ComplementaryBlocks {
        s11: pick(&|m, e, _| m[(e, e)]),
        s12: pick(&|m, e, i| m[(e, i)]),
        s21: pick(&|m, e, i| m[(i, e)]),
        s22: pick(&|m, _, i| m[(i, i)]),
    }
}

/// Outcome of a network composition.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositionResult {
    pub s_meas: PortMatrix,
    /// Neumann order used; `None` for exact elimination.
    pub order: Option<usize>,
    /// Largest entry deviation from the exact result (0 for exact).
    pub truncation_error: f64,
    /// The cell was singular and `SINGULAR_CELL_EPS·I` was added before inversion.
    pub regularized: bool,
    /// ρ(S·S22) for Neumann compositions.
    pub spectral_radius: Option<f64>,
}

fn check_cell(cell: &PortMatrix, lines: &LineModel) -> Result<()> {
    if cell.dim() != 4 {
        return Err(Error::invalid("cell matrix must be 4x4"));
    }
    lines.validate()
}

/// Exact elimination `S_meas = S11 + S12 (S⁻¹ − S22)⁻¹ S21`.
pub fn compose_exact(cell: &PortMatrix, lines: &LineModel) -> Result<CompositionResult> {
    check_cell(cell, lines)?;
    let b = complementary_blocks(lines);
    let s = cell.matrix();
    let min_sv = cell.singular_values().into_iter().fold(f64::INFINITY, f64::min);
    let regularized = min_sv < SINGULAR_CELL_EPS;
    let s_used = if regularized {
        s + DMatrix::<C64>::identity(4, 4) * C64::new(SINGULAR_CELL_EPS, 0.0)
    } else {
        s.clone()
    };
    let s_inv = s_used.try_inverse().ok_or(Error::SingularNetwork {
        condition: f64::INFINITY,
    })?;
    let k = s_inv - b.s22.matrix();
    let condition = condition_number(&k);
    if !(condition < MAX_CONDITION) {
        return Err(Error::SingularNetwork { condition });
    }
    let k_inv = k.try_inverse().ok_or(Error::SingularNetwork { condition })?;
    let s_meas = b.s11.matrix() + b.s12.matrix() * k_inv * b.s21.matrix();
    Ok(CompositionResult {
        s_meas: PortMatrix::new(s_meas)?,
        order: None,
        truncation_error: 0.0,
        regularized,
        spectral_radius: None,
    })
}

/// Neumann partial sum `S11 + S12 Σ_{k<order} (S·S22)^k S S21`.
///
/// `order = 0` returns `S11`; `order = 1` is the single-pass form
/// `S11 + S12 S S21`.
pub fn compose_neumann(cell: &PortMatrix, lines: &LineModel, order: usize) -> Result<CompositionResult> {
    check_cell(cell, lines)?;
    let b = complementary_blocks(lines);
    let s = cell.matrix();
    let x = s * b.s22.matrix();
    let rho = spectral_radius(&x);
    if !(rho < 1.0) {
        return Err(Error::Divergent { spectral_radius: rho });
    }
    let mut term = s.clone();
    let mut sum = DMatrix::<C64>::zeros(4, 4);
    for _ in 0..order {
        sum += &term;
        term = &x * term;
    }
    let s_meas = b.s11.matrix() + b.s12.matrix() * sum * b.s21.matrix();
    let exact = compose_exact(cell, lines)?;
    let truncation_error = max_entry(&(exact.s_meas.matrix() - &s_meas));
    Ok(CompositionResult {
        s_meas: PortMatrix::new(s_meas)?,
        order: Some(order),
        truncation_error,
        regularized: exact.regularized,
        spectral_radius: Some(rho),
    })
}

/// Reflection-free forward model of the measured coefficients:
///
/// ```text
/// AA: S_A²¹ t_AA G_A²¹          AB: S_A²¹ (t_AB + I) G_B²¹
/// BB: S_B²¹ t_BB G_B²¹          BA: S_B²¹ (t_BA + I) G_A²¹
/// ```
pub fn simplified_forward(cell: &CellCoefficients, lines: &LineModel) -> CellCoefficients {
    let (sa, ga, sb, gb) = lines.transmissions();
    let iso = lines.isolation;
    CellCoefficients {
        t_aa: sa * cell.t_aa * ga,
        t_bb: sb * cell.t_bb * gb,
        t_ab: sa * (cell.t_ab + iso) * gb,
        t_ba: sb * (cell.t_ba + iso) * ga,
    }
}

/// Measured coefficients from the exact 8-wave elimination, with the
/// isolation leak added to the cross channels as in [`simplified_forward`].
pub fn exact_forward(cell: &PortMatrix, lines: &LineModel) -> Result<CellCoefficients> {
    let r = compose_exact(cell, lines)?;
    Ok(measured_channels(&r.s_meas, lines))
}

/// Reads the four channels out of an external 4×4 matrix and adds isolation.
pub fn measured_channels(s_meas: &PortMatrix, lines: &LineModel) -> CellCoefficients {
    use port::*;
    let (sa, ga, sb, gb) = lines.transmissions();
    CellCoefficients {
        t_aa: s_meas[(A_OUT, A_IN)],
        t_bb: s_meas[(B_OUT, B_IN)],
        t_ab: s_meas[(B_OUT, A_IN)] + sa * lines.isolation * gb,
        t_ba: s_meas[(A_OUT, B_IN)] + sb * lines.isolation * ga,
    }
}

/// 4×4 cell matrix of a decoupled emitter: unit through transmission,
/// nothing else.
pub fn transparent_cell() -> PortMatrix {
    use port::*;
    let one = C64::new(1.0, 0.0);
    let mut s = PortMatrix::zeros(4);
    s[(A_OUT, A_IN)] = one;
    s[(A_IN, A_OUT)] = one;
    s[(B_OUT, B_IN)] = one;
    s[(B_IN, B_OUT)] = one;
    s
}

/// Isolation from high-drive references, `√(t_AB·t_BA / (t_AA·t_BB))`.
///
/// Principal branch: the result is `±I`, returned with non-negative real part.
pub fn isolation_from_hd(hd: &CellCoefficients) -> Result<C64> {
    if hd.t_aa == C64::new(0.0, 0.0) || hd.t_bb == C64::new(0.0, 0.0) {
        return Err(Error::invalid("through high-drive reference is zero"));
    }
    Ok((hd.t_ab * hd.t_ba / (hd.t_aa * hd.t_bb)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{cell_smatrix, coefficients, CellParams};
    use crate::units::MHZ;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn cell() -> (CellParams, PortMatrix) {
        let p = CellParams::reference_device();
        let s = cell_smatrix(p.omega_ge + 1.3 * MHZ, &p).unwrap();
        (p, s)
    }

    fn reflective_lines(r: f64) -> LineModel {
        let t = (1.0 - r * r).sqrt() * 0.9;
        LineModel {
            s_in_a: PortMatrix::two_port(c(r, 0.0), c(t, 0.1), c(t, 0.1), c(0.0, r)),
            s_out_a: PortMatrix::two_port(c(-r, 0.0), c(0.8, -0.2), c(0.8, -0.2), c(r * 0.6, r * 0.8)),
            s_in_b: PortMatrix::two_port(c(0.0, -r), c(0.7, 0.3), c(0.7, 0.3), c(-r, 0.0)),
            s_out_b: PortMatrix::two_port(c(r * 0.8, -r * 0.6), c(0.85, 0.0), c(0.85, 0.0), c(0.0, r)),
            isolation: c(0.0, 0.0),
        }
    }

    #[test]
    fn permutation_is_orthogonal() {
        let p = permutation_matrix();
        let m = p.matrix();
        let prod = m * m.transpose();
        assert_eq!(prod, DMatrix::<C64>::identity(8, 8));
        // one entry per row and column, so |det| = 1
        let det = m.determinant();
        assert!((det.norm() - 1.0).abs() < 1e-15);
        assert_eq!(det.im, 0.0);
    }

    #[test]
    fn permutation_groups_external_waves_first() {
        let p = permutation_matrix();
        // natural order labels 0..8 mapped through P
        let natural = DMatrix::<C64>::from_fn(8, 1, |r, _| c(r as f64, 0.0));
        let grouped = p.matrix() * natural;
        let order: Vec<usize> = grouped.iter().map(|z| z.re as usize).collect();
        assert_eq!(order, vec![0, 3, 4, 7, 1, 2, 5, 6]);
    }

    #[test]
    fn ideal_lines_give_trivial_blocks() {
        let b = complementary_blocks(&LineModel::ideal());
        assert_eq!(b.s11, PortMatrix::zeros(4));
        assert_eq!(b.s22, PortMatrix::zeros(4));
        assert_eq!(b.s12, PortMatrix::identity(4));
        assert_eq!(b.s21, PortMatrix::identity(4));
    }

    #[test]
    fn uniform_reflection_fills_s11() {
        let r = c(0.03, -0.01);
        let line = PortMatrix::two_port(r, c(0.9, 0.0), c(0.9, 0.0), r);
        let lines = LineModel {
            s_in_a: line.clone(),
            s_out_a: line.clone(),
            s_in_b: line.clone(),
            s_out_b: line,
            isolation: c(0.0, 0.0),
        };
        let b = complementary_blocks(&lines);
        assert_eq!(b.s11, PortMatrix::identity(4).scale(r));
    }

    #[test]
    fn blocks_match_permuted_block_product() {
        let lines = reflective_lines(0.07);
        // oracle: P · blockdiag(S_A, G_A, S_B, G_B) · Pᵀ
        let mut full = DMatrix::<C64>::zeros(8, 8);
        for (k, m) in [&lines.s_in_a, &lines.s_out_a, &lines.s_in_b, &lines.s_out_b]
            .into_iter()
            .enumerate()
        {
            full.view_mut((2 * k, 2 * k), (2, 2)).copy_from(m.matrix());
        }
        let p = permutation_matrix();
        let comp = p.matrix() * full * p.matrix().transpose();
        let b = complementary_blocks(&lines);
        let oracle = |r0: usize, c0: usize| comp.view((r0, c0), (4, 4)).into_owned();
        assert_eq!(&oracle(0, 0), b.s11.matrix());
        assert_eq!(&oracle(0, 4), b.s12.matrix());
        assert_eq!(&oracle(4, 0), b.s21.matrix());
        assert_eq!(&oracle(4, 4), b.s22.matrix());
        // A and B transmissions land in distinct slots
        assert_eq!(b.s21[(0, 0)], lines.s_in_a[(1, 0)]);
        assert_eq!(b.s21[(2, 2)], lines.s_in_b[(1, 0)]);
        assert_ne!(b.s21[(0, 0)], b.s21[(2, 2)]);
    }

    #[test]
    fn exact_with_ideal_lines_is_identity_map() {
        let (_, s) = cell();
        let r = compose_exact(&s, &LineModel::ideal()).unwrap();
        assert!(r.s_meas.max_abs_diff(&s) < 1e-12);
        assert!(!r.regularized);
        assert_eq!(r.truncation_error, 0.0);
    }

    #[test]
    fn exact_with_attenuators_scales_through_by_tau_squared() {
        let tau = c(0.3, 0.4);
        let s = transparent_cell();
        let r = compose_exact(&s, &LineModel::attenuators(tau, c(0.0, 0.0))).unwrap();
        assert!((r.s_meas[(1, 0)] - tau * tau).norm() < 1e-14);
        assert!((r.s_meas[(3, 2)] - tau * tau).norm() < 1e-14);
        assert!(r.s_meas[(0, 0)].norm() < 1e-14);
    }

    #[test]
    fn zero_cell_is_regularized_to_zero() {
        let r = compose_exact(&PortMatrix::zeros(4), &LineModel::ideal()).unwrap();
        assert!(r.regularized);
        assert!(r.s_meas.max_abs_diff(&PortMatrix::zeros(4)) < 1e-11);
    }

    #[test]
    fn singular_network_is_reported() {
        // Cell and line reflections forming a perfect closed loop: S = I and
        // S22 = I make S⁻¹ − S22 vanish.
        let one = c(1.0, 0.0);
        let zero = c(0.0, 0.0);
        let mirror = PortMatrix::two_port(one, zero, zero, one);
        let lines = LineModel {
            s_in_a: mirror.clone(),
            s_out_a: mirror.clone(),
            s_in_b: mirror.clone(),
            s_out_b: mirror,
            isolation: zero,
        };
        let err = compose_exact(&PortMatrix::identity(4), &lines).unwrap_err();
        assert!(matches!(err, Error::SingularNetwork { .. }), "{err}");
        let err = compose_neumann(&PortMatrix::identity(4), &lines, 3).unwrap_err();
        assert!(matches!(err, Error::Divergent { .. }), "{err}");
    }

    #[test]
    fn neumann_order_zero_and_one() {
        let (_, s) = cell();
        let lines = reflective_lines(0.1);
        let r0 = compose_neumann(&s, &lines, 0).unwrap();
        assert_eq!(r0.s_meas, complementary_blocks(&lines).s11);
        // reflection-free lines: order 1 is already exact
        let r1 = compose_neumann(&s, &LineModel::attenuators(c(0.5, 0.1), c(0.0, 0.0)), 1).unwrap();
        assert!(r1.truncation_error < 1e-14);
    }

    #[test]
    fn neumann_error_decays_geometrically() {
        let (_, s) = cell();
        let lines = reflective_lines(0.1);
        let errs: Vec<f64> = (1..=6)
            .map(|k| compose_neumann(&s, &lines, k).unwrap().truncation_error)
            .collect();
        let rho = compose_neumann(&s, &lines, 1).unwrap().spectral_radius.unwrap();
        assert!(rho > 0.0 && rho < 0.2);
        for w in errs.windows(2) {
            assert!(w[1] <= w[0]);
        }
        // asymptotic ratio approaches the spectral radius
        let ratio = errs[5] / errs[4];
        assert!((ratio - rho).abs() < 0.25 * rho, "ratio {ratio} rho {rho}");
    }

    #[test]
    fn simplified_forward_ideal_and_high_drive() {
        let p = CellParams::reference_device();
        let cc = coefficients(p.omega_ge, &p).unwrap();
        assert_eq!(simplified_forward(&cc, &LineModel::ideal()), cc);

        let lines = reflective_lines(0.0);
        let lines = LineModel {
            isolation: c(0.08, 0.06),
            ..lines
        };
        let (sa, ga, sb, gb) = lines.transmissions();
        let hd = simplified_forward(&CellCoefficients::transparent(), &lines);
        assert_eq!(hd.t_aa, sa * ga);
        assert_eq!(hd.t_bb, sb * gb);
        assert_eq!(hd.t_ab, sa * lines.isolation * gb);
        assert_eq!(hd.t_ba, sb * lines.isolation * ga);
    }

    #[test]
    fn isolation_recovered_from_hd() {
        let lines = LineModel {
            isolation: c(0.1, 0.0),
            ..reflective_lines(0.02)
        };
        let hd = simplified_forward(&CellCoefficients::transparent(), &lines);
        let iso = isolation_from_hd(&hd).unwrap();
        assert!((iso - c(0.1, 0.0)).norm() < 1e-15);
        assert!((crate::units::amplitude_db(iso.norm()) + 20.0).abs() < 1e-12);

        let lines = LineModel {
            isolation: c(0.0, 0.0),
            ..lines
        };
        let hd = simplified_forward(&CellCoefficients::transparent(), &lines);
        assert_eq!(isolation_from_hd(&hd).unwrap(), c(0.0, 0.0));

        let zero = CellCoefficients {
            t_aa: c(0.0, 0.0),
            ..hd
        };
        assert!(isolation_from_hd(&zero).is_err());
    }
}
