//! Matrix exponential.
//!
//! Symmetric inputs go through the eigendecomposition; everything else uses
//! scaling and squaring with a degree-13 Padé approximant.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{dimension, Error, Result};
use crate::network::symmetry_defect;

/// Inputs with `‖A − Aᵀ‖∞` below this take the spectral path.
pub const SYMMETRY_TOL: f64 = 1e-12;

const THETA_13: f64 = 5.371_920_351_148_152;

const PADE_13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

fn check_input(a: &DMatrix<f64>) -> Result<()> {
    if !a.is_square() {
        return dimension(format!(
            "matrix exponential needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        ));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("matrix has non-finite entries".into()));
    }
    Ok(())
}

fn check_output(e: DMatrix<f64>) -> Result<DMatrix<f64>> {
    if e.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("matrix exponential overflowed".into()));
    }
    Ok(e)
}

/// `e^A`.
pub fn matrix_exponential(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_input(a)?;
    if a.nrows() == 0 {
        return Ok(a.clone());
    }
    if symmetry_defect(a) < SYMMETRY_TOL {
        expm_symmetric(a)
    } else {
        expm_pade(a)
    }
}

fn expm_symmetric(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(a.clone());
    let v = &eig.eigenvectors;
    let mut scaled = v.clone();
    for (j, lambda) in eig.eigenvalues.iter().enumerate() {
        let e = lambda.exp();
        if !e.is_finite() {
            return Err(Error::Numerical(format!(
                "exp of eigenvalue {lambda} overflows"
            )));
        }
        scaled.column_mut(j).scale_mut(e);
    }
    check_output(scaled * v.transpose())
}

fn one_norm(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn expm_pade(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let norm = one_norm(a);
    let s = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil() as i32
    } else {
        0
    };
    if s > 1000 {
        return Err(Error::Numerical(format!(
            "norm {norm} too large for scaling and squaring"
        )));
    }
    let a = a * 2f64.powi(-s);
    let b = &PADE_13;
    let id = DMatrix::<f64>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;

    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9])
        + &a6 * b[7]
        + &a4 * b[5]
        + &a2 * b[3]
        + &id * b[1];
    let u = &a * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8])
        + &a6 * b[6]
        + &a4 * b[4]
        + &a2 * b[2]
        + &id * b[0];

    let lu = (&v - &u).lu();
    let mut r = lu
        .solve(&(&v + &u))
        .ok_or_else(|| Error::Numerical("singular Padé denominator".into()))?;
    for _ in 0..s {
        r = &r * &r;
    }
    check_output(r)
}

/// `e^A v` without forming `e^A`, by a scaled truncated Taylor series.
pub fn expm_action(a: &DMatrix<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
    check_input(a)?;
    if v.len() != a.ncols() {
        return dimension(format!(
            "vector of length {} for a {}x{} matrix",
            v.len(),
            a.nrows(),
            a.ncols()
        ));
    }
    let norm = one_norm(a);
    let steps = norm.ceil().max(1.0);
    if steps > 1e6 {
        return Err(Error::Numerical(format!("norm {norm} too large for expm_action")));
    }
    let steps = steps as usize;
    let scaled = a / steps as f64;
    let mut out = v.clone();
    for _ in 0..steps {
        let mut term = out.clone();
        let mut sum = out.clone();
        let mut small_in_a_row = 0;
        for k in 1..=80 {
            term = &scaled * term / k as f64;
            sum += &term;
            if term.amax() <= f64::EPSILON * 0.5 * sum.amax() {
                small_in_a_row += 1;
                if small_in_a_row == 2 {
                    break;
                }
            } else {
                small_in_a_row = 0;
            }
        }
        out = sum;
        if out.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("expm_action overflowed".into()));
        }
    }
    Ok(out)
}
