//! Index arithmetic for operators and projections on a subset of subsystems.
//!
//! These routines act on raw amplitude vectors so that large registers never
//! require a full-space operator matrix.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::operator::Operator;
use crate::{Error, Result};

fn strides(dims: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * dims[i + 1];
    }
    strides
}

/// Offsets of every joint configuration of `targets`, first target slowest,
/// together with the base offsets of every configuration of the remaining
/// subsystems.
fn layout(dims: &[usize], targets: &[usize]) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut seen = vec![false; dims.len()];
    for &t in targets {
        if t >= dims.len() || seen[t] {
            return Err(Error::invalid(
                "targets",
                format!("{targets:?} is not a set of distinct subsystems of {dims:?}"),
            ));
        }
        seen[t] = true;
    }
    let st = strides(dims);

    let mut target_offsets = vec![0usize];
    for &t in targets {
        let mut next = Vec::with_capacity(target_offsets.len() * dims[t]);
        for &base in &target_offsets {
            for v in 0..dims[t] {
                next.push(base + v * st[t]);
            }
        }
        target_offsets = next;
    }

    let mut rest_offsets = vec![0usize];
    for (i, &d) in dims.iter().enumerate() {
        if seen[i] {
            continue;
        }
        let mut next = Vec::with_capacity(rest_offsets.len() * d);
        for &base in &rest_offsets {
            for v in 0..d {
                next.push(base + v * st[i]);
            }
        }
        rest_offsets = next;
    }
    Ok((target_offsets, rest_offsets))
}

fn check_len(dims: &[usize], amps: &DVector<Complex64>) -> Result<()> {
    let total: usize = dims.iter().product();
    if total != amps.len() {
        return Err(Error::DimensionMismatch {
            expected: total,
            found: amps.len(),
        });
    }
    Ok(())
}

/// Applies `op` to the subsystems `targets` (in that order) and the identity elsewhere.
pub fn apply_local(
    dims: &[usize],
    amps: &DVector<Complex64>,
    op: &Operator,
    targets: &[usize],
) -> Result<DVector<Complex64>> {
    apply_local_matrix(dims, amps, op.matrix(), targets)
}

pub(crate) fn apply_local_matrix(
    dims: &[usize],
    amps: &DVector<Complex64>,
    op: &DMatrix<Complex64>,
    targets: &[usize],
) -> Result<DVector<Complex64>> {
    check_len(dims, amps)?;
    let (toff, roff) = layout(dims, targets)?;
    if op.nrows() != toff.len() || op.ncols() != toff.len() {
        return Err(Error::DimensionMismatch {
            expected: toff.len(),
            found: op.nrows(),
        });
    }
    let m = toff.len();
    let mut out = DVector::zeros(amps.len());
    let mut gathered = DVector::zeros(m);
    for &base in &roff {
        for (k, &o) in toff.iter().enumerate() {
            gathered[k] = amps[base + o];
        }
        let mapped = op * &gathered;
        for (k, &o) in toff.iter().enumerate() {
            out[base + o] = mapped[k];
        }
    }
    Ok(out)
}

/// Applies an isometry `iso` (out_dim × d_sub) to subsystem `sub`, replacing
/// it by the subsystems `out_dims` in place. Returns the new dimension list
/// and amplitudes.
pub fn apply_isometry(
    dims: &[usize],
    amps: &DVector<Complex64>,
    iso: &DMatrix<Complex64>,
    sub: usize,
    out_dims: &[usize],
) -> Result<(Vec<usize>, DVector<Complex64>)> {
    check_len(dims, amps)?;
    if sub >= dims.len() {
        return Err(Error::invalid("sub", format!("no subsystem {sub} in {dims:?}")));
    }
    let out_dim: usize = out_dims.iter().product();
    if iso.ncols() != dims[sub] || iso.nrows() != out_dim {
        return Err(Error::DimensionMismatch {
            expected: dims[sub],
            found: iso.ncols(),
        });
    }
    let mut new_dims = dims[..sub].to_vec();
    new_dims.extend_from_slice(out_dims);
    new_dims.extend_from_slice(&dims[sub + 1..]);
    crate::numerics::total_dim(&new_dims)?;

    // Outer index runs over subsystems before `sub`, inner over those after.
    let outer: usize = dims[..sub].iter().product();
    let inner: usize = dims[sub + 1..].iter().product();
    let d_in = dims[sub];
    let mut out = DVector::zeros(outer * out_dim * inner);
    for o in 0..outer {
        for i in 0..inner {
            for r in 0..out_dim {
                let mut acc = Complex64::new(0.0, 0.0);
                for c in 0..d_in {
                    acc += iso[(r, c)] * amps[(o * d_in + c) * inner + i];
                }
                out[(o * out_dim + r) * inner + i] = acc;
            }
        }
    }
    Ok((new_dims, out))
}

/// Component of `amps` with subsystem `sub` fixed to `value`, that subsystem
/// removed. Not renormalized.
pub fn project_out(
    dims: &[usize],
    amps: &DVector<Complex64>,
    sub: usize,
    value: usize,
) -> Result<(Vec<usize>, DVector<Complex64>)> {
    check_len(dims, amps)?;
    if sub >= dims.len() || value >= dims[sub] {
        return Err(Error::invalid(
            "value",
            format!("subsystem {sub} value {value} outside {dims:?}"),
        ));
    }
    let outer: usize = dims[..sub].iter().product();
    let inner: usize = dims[sub + 1..].iter().product();
    let d = dims[sub];
    let mut out = DVector::zeros(outer * inner);
    for o in 0..outer {
        for i in 0..inner {
            out[o * inner + i] = amps[(o * d + value) * inner + i];
        }
    }
    let mut new_dims = dims.to_vec();
    new_dims.remove(sub);
    if new_dims.is_empty() {
        new_dims.push(1);
    }
    Ok((new_dims, out))
}

/// Inverse of [`project_out`]: reinserts a subsystem of dimension `d` fixed to `value`.
pub fn embed(
    dims: &[usize],
    amps: &DVector<Complex64>,
    sub: usize,
    d: usize,
    value: usize,
) -> Result<(Vec<usize>, DVector<Complex64>)> {
    check_len(dims, amps)?;
    if sub > dims.len() || value >= d {
        return Err(Error::invalid("value", format!("cannot embed value {value} of {d} at {sub}")));
    }
    let outer: usize = dims[..sub].iter().product();
    let inner: usize = dims[sub..].iter().product();
    let mut out = DVector::zeros(outer * d * inner);
    for o in 0..outer {
        for i in 0..inner {
            out[(o * d + value) * inner + i] = amps[o * inner + i];
        }
    }
    let mut new_dims = dims.to_vec();
    new_dims.insert(sub, d);
    Ok((new_dims, out))
}

/// Reduced density matrix on `keep` (in that order), tracing out the rest.
pub fn reduced_density(
    dims: &[usize],
    amps: &DVector<Complex64>,
    keep: &[usize],
) -> Result<DMatrix<Complex64>> {
    check_len(dims, amps)?;
    let (toff, roff) = layout(dims, keep)?;
    let m = toff.len();
    let mut rho = DMatrix::zeros(m, m);
    for &base in &roff {
        for (k, &ok) in toff.iter().enumerate() {
            let ak = amps[base + ok];
            if ak == Complex64::new(0.0, 0.0) {
                continue;
            }
            for (l, &ol) in toff.iter().enumerate() {
                rho[(k, l)] += ak * amps[base + ol].conj();
            }
        }
    }
    Ok(rho)
}

/// `<amps| A_targets |amps>` for an operator acting on a subset of subsystems.
pub fn local_expectation(
    dims: &[usize],
    amps: &DVector<Complex64>,
    op: &Operator,
    targets: &[usize],
) -> Result<Complex64> {
    let applied = apply_local(dims, amps, op, targets)?;
    Ok(amps.dotc(&applied))
}
