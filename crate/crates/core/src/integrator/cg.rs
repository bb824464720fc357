//! Preconditioned conjugate gradient on grid-shaped vectors.
//!
//! The operator is supplied as a closure so the caller never materializes a
//! matrix. Iterations are strictly sequential and allocation order is fixed,
//! so results are bit-reproducible for identical inputs.

use crate::grid::Grid;

pub struct CgOutcome {
    pub x: Grid,
    pub iterations: usize,
    pub rel_residual: f64,
    pub converged: bool,
}

/// Solves `A x = b` for symmetric positive-definite `A`, starting from `x0`,
/// stopping when `||b - A x|| <= tol * ||b||` or after `max_iters` steps.
/// `inv_diag`, when given, is the inverse diagonal used as a Jacobi
/// preconditioner. A zero right-hand side returns the zero solution at once.
pub fn pcg(
    apply: impl Fn(&Grid) -> Grid,
    b: &Grid,
    x0: Grid,
    inv_diag: Option<&Grid>,
    tol: f64,
    max_iters: usize,
) -> CgOutcome {
    debug_assert!(b.same_shape(&x0));
    let b_norm = b.dot(b).sqrt();
    if b_norm == 0.0 {
        return CgOutcome {
            x: Grid::zeros(b.height(), b.width()),
            iterations: 0,
            rel_residual: 0.0,
            converged: true,
        };
    }

    let mut x = x0;
    let ax = apply(&x);
    let mut r = b.clone();
    sub_assign(&mut r, &ax);
    let mut res_norm = r.dot(&r).sqrt();
    if res_norm <= tol * b_norm {
        return CgOutcome {
            x,
            iterations: 0,
            rel_residual: res_norm / b_norm,
            converged: true,
        };
    }

    let precondition = |r: &Grid| -> Grid {
        match inv_diag {
            Some(d) => {
                let mut z = r.clone();
                for (zi, di) in z.as_mut_slice().iter_mut().zip(d.as_slice()) {
                    *zi *= di;
                }
                z
            }
            None => r.clone(),
        }
    };

    let mut z = precondition(&r);
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    let mut iterations = 0;

    while iterations < max_iters {
        let ap = apply(&p);
        let pap = p.dot(&ap);
        if pap <= 0.0 || !pap.is_finite() {
            // Numerical breakdown; the current iterate is the best we have.
            break;
        }
        let step = rz / pap;
        axpy(&mut x, step, &p);
        axpy(&mut r, -step, &ap);
        iterations += 1;
        res_norm = r.dot(&r).sqrt();
        if res_norm <= tol * b_norm {
            return CgOutcome {
                x,
                iterations,
                rel_residual: res_norm / b_norm,
                converged: true,
            };
        }
        z = precondition(&r);
        let rz_next = r.dot(&z);
        let beta = rz_next / rz;
        rz = rz_next;
        scale_then_add(&mut p, beta, &z);
    }

    CgOutcome {
        x,
        iterations,
        rel_residual: res_norm / b_norm,
        converged: false,
    }
}

fn axpy(y: &mut Grid, a: f64, x: &Grid) {
    for (yi, xi) in y.as_mut_slice().iter_mut().zip(x.as_slice()) {
        *yi += a * xi;
    }
}

fn sub_assign(y: &mut Grid, x: &Grid) {
    for (yi, xi) in y.as_mut_slice().iter_mut().zip(x.as_slice()) {
        *yi -= xi;
    }
}

/// `p = z + beta * p`
fn scale_then_add(p: &mut Grid, beta: f64, z: &Grid) {
    for (pi, zi) in p.as_mut_slice().iter_mut().zip(z.as_slice()) {
        *pi = zi + beta * *pi;
    }
}
