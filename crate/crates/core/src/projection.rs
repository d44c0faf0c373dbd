//! Euclidean projection onto `{z >= 0, A z <= b}` by the dual active-set
//! method of Goldfarb and Idnani, specialised to an identity Hessian.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DEPENDENT_TOL: f64 = 1e-10;
const FEAS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KktResiduals {
    /// Largest constraint violation.
    pub primal: f64,
    /// Most negative multiplier, as a positive number.
    pub dual: f64,
    /// Largest `|multiplier * slack|`.
    pub complementarity: f64,
    /// Infinity norm of the Lagrangian gradient.
    pub stationarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.primal
            .max(self.dual)
            .max(self.complementarity)
            .max(self.stationarity)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub z: DVector<f64>,
    /// Multipliers of the rows of `A`, then of `z >= 0`.
    pub multipliers: DVector<f64>,
    /// Residuals on unit-normalized constraints.
    pub kkt: KktResiduals,
    pub iterations: usize,
}

/// Unit-norm constraint `n^T x >= c`.
struct Constraint {
    n: DVector<f64>,
    c: f64,
    /// Index into the caller's multiplier vector and the scale to undo.
    origin: usize,
    scale: f64,
}

fn constraints(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<Vec<Constraint>> {
    let dim = a.ncols();
    let mut out = Vec::with_capacity(a.nrows() + dim);
    for r in 0..a.nrows() {
        let row = a.row(r).transpose();
        let norm = row.norm();
        if norm == 0.0 {
            if b[r] < 0.0 {
                return Err(Error::InfeasiblePolytope(format!(
                    "row {r} reads 0 <= {}",
                    b[r]
                )));
            }
            continue;
        }
        out.push(Constraint {
            n: -row / norm,
            c: -b[r] / norm,
            origin: r,
            scale: norm,
        });
    }
    for i in 0..dim {
        out.push(Constraint {
            n: DVector::from_fn(dim, |k, _| if k == i { 1.0 } else { 0.0 }),
            c: 0.0,
            origin: a.nrows() + i,
            scale: 1.0,
        });
    }
    Ok(out)
}

fn slack(k: &Constraint, x: &DVector<f64>) -> f64 {
    k.n.dot(x) - k.c
}

/// Null-space direction and multiplier change for adding `np` to the
/// active normals.
fn step_directions(
    cons: &[Constraint],
    active: &[usize],
    np: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    if active.is_empty() {
        return (np.clone(), DVector::zeros(0));
    }
    let dim = np.len();
    let n = DMatrix::from_fn(dim, active.len(), |r, c| cons[active[c]].n[r]);
    let qr = n.qr();
    let q = qr.q();
    let rmat = qr.r();
    let qtn = q.transpose() * np;
    let z = np - &q * &qtn;
    let r = rmat
        .solve_upper_triangular(&qtn)
        .unwrap_or_else(|| DVector::from_element(active.len(), f64::NAN));
    (z, r)
}

/// Exact projection onto the affine set of the active constraints, used to
/// clean up rounding accumulated during the dual iterations.
fn polish(
    cons: &[Constraint],
    active: &[usize],
    v: &DVector<f64>,
) -> Option<(DVector<f64>, DVector<f64>)> {
    let dim = v.len();
    if active.is_empty() {
        return Some((v.clone(), DVector::zeros(0)));
    }
    let n = DMatrix::from_fn(dim, active.len(), |r, c| cons[active[c]].n[r]);
    let rhs = DVector::from_fn(active.len(), |k, _| cons[active[k]].c) - n.transpose() * v;
    let gram = n.transpose() * &n;
    let u = gram.cholesky()?.solve(&rhs);
    Some((v + &n * &u, u))
}

pub fn project_onto_polytope(
    v: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
) -> Result<Projection> {
    assert_eq!(a.ncols(), v.len());
    assert_eq!(a.nrows(), b.len());
    let cons = constraints(a, b)?;
    let max_iters = 20 * (cons.len() + 1) * (cons.len() + 1);
    let mut x = v.clone();
    let mut active: Vec<usize> = Vec::new();
    let mut u: Vec<f64> = Vec::new();
    let mut iterations = 0;
    let tol = FEAS_TOL * (1.0 + v.amax());
    loop {
        let mut worst: Option<(usize, f64)> = None;
        for (k, c) in cons.iter().enumerate() {
            if active.contains(&k) {
                continue;
            }
            let s = slack(c, &x);
            if s < -tol && worst.is_none_or(|(_, w)| s < w) {
                worst = Some((k, s));
            }
        }
        let Some((p, _)) = worst else { break };
        let mut up = 0.0;
        loop {
            iterations += 1;
            if iterations > max_iters {
                return Err(Error::NoConvergence(max_iters));
            }
            let (zdir, r) = step_directions(&cons, &active, &cons[p].n);
            let mut t1 = f64::INFINITY;
            let mut drop = None;
            for (j, &rj) in r.iter().enumerate() {
                if rj > 0.0 {
                    let t = u[j] / rj;
                    if t < t1 {
                        t1 = t;
                        drop = Some(j);
                    }
                }
            }
            let zz = zdir.norm_squared();
            let t2 = if zz.sqrt() > DEPENDENT_TOL {
                -slack(&cons[p], &x) / zz
            } else {
                f64::INFINITY
            };
            if t1.is_infinite() && t2.is_infinite() {
                return Err(Error::InfeasiblePolytope(format!(
                    "constraint {} cannot be satisfied together with the active set",
                    cons[p].origin
                )));
            }
            let t = t1.min(t2);
            if t2.is_finite() {
                x += &zdir * t;
            }
            for (uj, rj) in u.iter_mut().zip(r.iter()) {
                *uj -= t * rj;
            }
            up += t;
            if t2 <= t1 {
                active.push(p);
                u.push(up);
                break;
            }
            let k = drop.expect("partial step has a blocking constraint");
            active.remove(k);
            u.remove(k);
        }
    }
    if let Some((xp, up)) = polish(&cons, &active, v) {
        if up.iter().all(|&m| m >= -1e-12) && cons.iter().all(|c| slack(c, &xp) >= -tol) {
            x = xp;
            u = up.iter().map(|m| m.max(0.0)).collect();
        }
    }
    let dim = v.len();
    let mut mult = DVector::zeros(a.nrows() + dim);
    let mut kkt = KktResiduals::default();
    let mut grad = &x - v;
    for (k, &m) in active.iter().zip(&u) {
        grad -= &cons[*k].n * m;
        mult[cons[*k].origin] = m / cons[*k].scale;
        kkt.dual = kkt.dual.max(-m);
        kkt.complementarity = kkt.complementarity.max((m * slack(&cons[*k], &x)).abs());
    }
    for c in &cons {
        kkt.primal = kkt.primal.max(-slack(c, &x));
    }
    kkt.stationarity = grad.amax();
    Ok(Projection {
        z: x,
        multipliers: mult,
        kkt,
        iterations,
    })
}
