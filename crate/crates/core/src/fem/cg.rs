//! Jacobi-preconditioned conjugate gradients for SPD (and Neumann-singular
//! PSD) systems.

use super::sparse::CsrMatrix;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    /// Relative residual target `‖b − Ax‖ / ‖b‖`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 10_000,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn remove_mean(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
}

/// Solve `A x = b` for symmetric positive definite `A`.
///
/// `x0` is an optional warm start. The returned residual is relative to `‖b‖`;
/// a zero right-hand side yields the zero vector.
pub fn solve_spd(a: &CsrMatrix, b: &[f64], x0: Option<&[f64]>, opts: SolverOptions) -> Result<(Vec<f64>, SolveStats)> {
    pcg(a, b, x0, opts, false)
}

/// Solve a consistent singular system whose kernel is the constant vector
/// (pure Neumann or periodic problems). The constant mode is projected out
/// of the right-hand side, the preconditioned residuals and the iterate, so
/// the result has zero arithmetic mean.
pub fn solve_spd_singular(a: &CsrMatrix, b: &[f64], opts: SolverOptions) -> Result<(Vec<f64>, SolveStats)> {
    let mut rhs = b.to_vec();
    remove_mean(&mut rhs);
    pcg(a, &rhs, None, opts, true)
}

fn pcg(
    a: &CsrMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    opts: SolverOptions,
    project: bool,
) -> Result<(Vec<f64>, SolveStats)> {
    let n = a.dim();
    assert_eq!(b.len(), n, "rhs length does not match matrix");
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], SolveStats::default()));
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .into_iter()
        .map(|d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let mut x = match x0 {
        Some(x0) => x0.to_vec(),
        None => vec![0.0; n],
    };
    if project {
        remove_mean(&mut x);
    }
    let mut ap = vec![0.0; n];
    a.mul_vec_into(&x, &mut ap);
    let mut r: Vec<f64> = b.iter().zip(&ap).map(|(bi, ai)| bi - ai).collect();
    if project {
        remove_mean(&mut r);
    }
    let mut res = dot(&r, &r).sqrt() / bnorm;
    if res <= opts.tol {
        return Ok((
            x,
            SolveStats {
                iterations: 0,
                relative_residual: res,
            },
        ));
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    if project {
        remove_mean(&mut z);
    }
    let mut p = z.clone();
    let mut rz = dot(&r, &z);

    for it in 1..=opts.max_iter {
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return Err(Error::Solver {
                iterations: it,
                residual: res,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if project {
            remove_mean(&mut r);
        }
        res = dot(&r, &r).sqrt() / bnorm;
        if res <= opts.tol {
            if project {
                remove_mean(&mut x);
            }
            return Ok((
                x,
                SolveStats {
                    iterations: it,
                    relative_residual: res,
                },
            ));
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        if project {
            remove_mean(&mut z);
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::Solver {
        iterations: opts.max_iter,
        residual: res,
    })
}
