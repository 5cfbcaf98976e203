//! Ideal-measurement algebra and the violation taxonomy.
//!
//! An ideal measurement maps |±z⟩|ready⟩ to |u⟩, |d⟩ with
//! ⟨u|J|u⟩ = (0, 0, ½) and ⟨d|J|d⟩ = (0, 0, −½). Conservation of ⟨J⟩ for
//! every superposition a|+z⟩ + b|−z⟩ then forces the values of the
//! cross-brackets ⟨u|J|d⟩. The classifier sorts branch bookkeeping into
//! no violation, Type I (branch values differ, cross-terms vanish) and
//! Type II (conservation needs cross-terms between branches).

use serde::Serialize;

use crate::kernel::{c64, C64, ZERO};
use crate::numerics::tolerances;
use crate::spin::{bloch_vector, check_spinor};
use crate::{CVec3, Error, Result, Vec3};

/// Forced brackets of the ideal measurement (ħ = 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdealBrackets {
    /// ⟨u|J_k|d⟩ for k = x, y, z.
    pub cross: CVec3,
    /// ⟨u|J|u⟩.
    pub diag_u: Vec3,
    /// ⟨d|J|d⟩.
    pub diag_d: Vec3,
}

pub const IDEAL_DIAG_U: Vec3 = [0.0, 0.0, 0.5];
pub const IDEAL_DIAG_D: Vec3 = [0.0, 0.0, -0.5];

/// Value the branch brackets must supply for component `k`:
/// ½ u_s,k − |a|²⟨u|J_k|u⟩ − |b|²⟨d|J_k|d⟩.
fn required_cross_value(a: C64, b: C64, k: usize) -> Result<f64> {
    let u = bloch_vector(a, b)?.as_array();
    Ok(0.5 * u[k] - a.norm_sqr() * IDEAL_DIAG_U[k] - b.norm_sqr() * IDEAL_DIAG_D[k])
}

/// Residual of the k-th conservation equation
/// ½u_s,k = |a|²⟨u|J_k|u⟩ + 2Re[a*b⟨u|J_k|d⟩] + |b|²⟨d|J_k|d⟩.
pub fn component_residuals(a: C64, b: C64, brackets: &IdealBrackets) -> Result<Vec3> {
    let u = bloch_vector(a, b)?.as_array();
    let ab = a.conj() * b;
    let mut out = [0.0; 3];
    for k in 0..3 {
        let rhs = a.norm_sqr() * brackets.diag_u[k]
            + 2.0 * (ab * brackets.cross[k]).re
            + b.norm_sqr() * brackets.diag_d[k];
        out[k] = 0.5 * u[k] - rhs;
    }
    Ok(out)
}

/// Solves the conservation equations for ⟨u|J|d⟩ by matching coefficients.
///
/// Each component gives one real equation 2Re[a*b X] = r(a, b) for the
/// complex unknown X. The equation must hold for every spinor, so it is
/// paired with the spinor (a, ib), which has the same weights but rotates
/// a*b by 90°; the resulting 2×2 system has determinant −4|a*b|² and is
/// solvable exactly when both coefficients are present.
pub fn ideal_forced_cross_terms(a: C64, b: C64) -> Result<IdealBrackets> {
    check_spinor(a, b)?;
    let tol = tolerances().state;
    if a.norm() <= tol {
        return Err(Error::Underdetermined("a = 0: no a*b term to match"));
    }
    if b.norm() <= tol {
        return Err(Error::Underdetermined("b = 0: no a*b term to match"));
    }
    let b_rot = b * c64(0.0, 1.0);
    let z1 = a.conj() * b;
    let z2 = a.conj() * b_rot;
    let det = 4.0 * (-z1.re * z2.im + z1.im * z2.re);

    let mut cross = [ZERO; 3];
    for (k, slot) in cross.iter_mut().enumerate() {
        let r1 = required_cross_value(a, b, k)?;
        let r2 = required_cross_value(a, b_rot, k)?;
        // [2Re z1, −2Im z1; 2Re z2, −2Im z2] · (Re X, Im X) = (r1, r2)
        let re = (-2.0 * z2.im * r1 + 2.0 * z1.im * r2) / det;
        let im = (-2.0 * z2.re * r1 + 2.0 * z1.re * r2) / det;
        *slot = c64(re, im);
    }
    let brackets = IdealBrackets {
        cross,
        diag_u: IDEAL_DIAG_U,
        diag_d: IDEAL_DIAG_D,
    };
    let residuals = component_residuals(a, b, &brackets)?;
    if residuals.iter().any(|r| r.abs() > tol) {
        return Err(Error::InvariantViolation(format!(
            "forced brackets leave residuals {residuals:?}"
        )));
    }
    Ok(brackets)
}

/// One branch of a decomposed final state: its coefficient c_i and ⟨i|F|i⟩.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchValue {
    pub label: String,
    pub coefficient: C64,
    pub value: Vec3,
}

impl BranchValue {
    pub fn new(label: impl Into<String>, coefficient: C64, value: Vec3) -> Self {
        BranchValue {
            label: label.into(),
            coefficient,
            value,
        }
    }
}

/// Σ_i |c_i|² ⟨i|F|i⟩.
pub fn weighted_branch_average(branches: &[BranchValue]) -> Result<Vec3> {
    let total: f64 = branches.iter().map(|b| b.coefficient.norm_sqr()).sum();
    if (total - 1.0).abs() > tolerances().operator {
        return Err(Error::NotNormalized { norm_sqr: total });
    }
    let mut avg = [0.0; 3];
    for b in branches {
        let w = b.coefficient.norm_sqr();
        for k in 0..3 {
            avg[k] += w * b.value[k];
        }
    }
    Ok(avg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ViolationKind {
    NoViolation,
    TypeI,
    TypeII,
}

impl std::fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ViolationKind::NoViolation => "NoViolation",
            ViolationKind::TypeI => "TypeI",
            ViolationKind::TypeII => "TypeII",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViolationReport {
    pub kind: ViolationKind,
    pub conserved_initial: Vec3,
    pub weighted_branch_average: Vec3,
    /// Σ_{i<j} c_i* c_j ⟨i|F|j⟩; the final expectation is the weighted
    /// average plus twice its real part.
    pub required_cross_term_contribution: CVec3,
    pub per_branch_values: Vec<(String, Vec3)>,
}

/// Audit tolerance for initial = average + 2Re(cross).
pub const AUDIT_TOLERANCE: f64 = 1e-8;

/// Classifies branch bookkeeping of a conserved quantity.
///
/// Fails with [`Error::InconsistentBookkeeping`] when the weighted average
/// plus cross-terms does not reproduce `initial`; such input describes no
/// unitary, conserving process.
pub fn classify_violation(
    initial: Vec3,
    branches: &[BranchValue],
    cross_contribution: CVec3,
    tolerance: f64,
) -> Result<ViolationReport> {
    if !(tolerance > 0.0 && tolerance.is_finite()) {
        return Err(Error::invalid("tolerance", "must be positive and finite"));
    }
    let finite = initial.iter().all(|x| x.is_finite())
        && branches.iter().all(|b| {
            b.value.iter().all(|x| x.is_finite())
                && b.coefficient.re.is_finite()
                && b.coefficient.im.is_finite()
        })
        && cross_contribution
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite());
    if !finite {
        return Err(Error::NonFinite("classifier input"));
    }
    if branches.is_empty() {
        return Err(Error::invalid("branches", "at least one branch is required"));
    }
    let average = weighted_branch_average(branches)?;
    for k in 0..3 {
        let reconstructed = average[k] + 2.0 * cross_contribution[k].re;
        if (reconstructed - initial[k]).abs() > AUDIT_TOLERANCE {
            return Err(Error::InconsistentBookkeeping(format!(
                "component {k}: branch average {:.6e} + cross {:.6e} != initial {:.6e}",
                average[k],
                2.0 * cross_contribution[k].re,
                initial[k]
            )));
        }
    }

    let cross_norm = cross_contribution
        .iter()
        .map(|z| z.norm_sqr())
        .sum::<f64>()
        .sqrt();
    let first = branches[0].value;
    let all_equal = branches
        .iter()
        .all(|b| (0..3).all(|k| (b.value[k] - first[k]).abs() <= tolerance));

    let kind = if cross_norm > tolerance {
        ViolationKind::TypeII
    } else if all_equal {
        ViolationKind::NoViolation
    } else {
        ViolationKind::TypeI
    };
    Ok(ViolationReport {
        kind,
        conserved_initial: initial,
        weighted_branch_average: average,
        required_cross_term_contribution: cross_contribution,
        per_branch_values: branches
            .iter()
            .map(|b| (b.label.clone(), b.value))
            .collect(),
    })
}

/// Single-component bookkeeping of the ideal model for observable J_k:
/// branch values from `IDEAL_DIAG_*` and cross-contribution a*b⟨u|J_k|d⟩.
pub fn ideal_model_bookkeeping(
    a: C64,
    b: C64,
    brackets: &IdealBrackets,
    component: usize,
) -> Result<(Vec3, Vec<BranchValue>, CVec3)> {
    if component > 2 {
        return Err(Error::invalid("component", "must be 0, 1 or 2"));
    }
    let u = bloch_vector(a, b)?.as_array();
    let mut initial = [0.0; 3];
    initial[component] = 0.5 * u[component];
    let pick = |v: Vec3| {
        let mut out = [0.0; 3];
        out[component] = v[component];
        out
    };
    let branches = vec![
        BranchValue::new("up", a, pick(brackets.diag_u)),
        BranchValue::new("dn", b, pick(brackets.diag_d)),
    ];
    let mut cross = [ZERO; 3];
    cross[component] = a.conj() * b * brackets.cross[component];
    Ok((initial, branches, cross))
}
