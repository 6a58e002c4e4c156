//! Linear solvers: Jacobi-preconditioned CG, sparse direct factorizations and
//! the pressure-Schur saddle-point solver.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::ldlt::factor::LdltRegularization;
use faer::prelude::Solve;
use faer::sparse::linalg::cholesky::{factorize_symbolic_cholesky, LdltRef, SymbolicCholesky, SymmetricOrdering};
use faer::sparse::linalg::solvers::Llt;
use faer::{Conj, Mat, Par, Side};

use super::constraints::{ConstraintSet, DofMap};
use super::sparse::{axpy, dot, norm, CsrMatrix};
use crate::error::{Error, Result};

/// Default relative residual for SPD solves.
pub const SPD_TOL: f64 = 1e-10;
/// Required relative residual of a coupled step.
pub const SADDLE_TOL: f64 = 1e-9;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CgStats {
    pub iterations: usize,
    pub residual: f64,
    pub history: Vec<f64>,
}

/// Jacobi-preconditioned conjugate gradients on `A x = b`.
///
/// Stops when `‖r‖ ≤ tol ‖b‖`; a zero right-hand side returns zero.
pub fn pcg(a: &CsrMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<(Vec<f64>, CgStats)> {
    let n = b.len();
    assert_eq!(a.nrows, n);
    let inv_diag: Vec<f64> = a.diagonal().iter().map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 }).collect();
    pcg_with(|x, y| a.mul_vec_into(x, y), |r, z| {
        for i in 0..r.len() {
            z[i] = inv_diag[i] * r[i];
        }
    }, b, tol, max_iter)
}

/// Preconditioned CG with operator and preconditioner given as closures.
pub fn pcg_with(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    mut precond: impl FnMut(&[f64], &mut [f64]),
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, CgStats)> {
    let n = b.len();
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    let mut stats = CgStats::default();
    if bnorm == 0.0 {
        return Ok((x, stats));
    }
    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    for it in 1..=max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::SingularSchur(format!(
                "operator is not positive definite along a search direction (pᵀAp = {pap:.3e}) at iteration {it}"
            )));
        }
        let alpha = rz / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        let rel = norm(&r) / bnorm;
        stats.history.push(rel);
        stats.iterations = it;
        stats.residual = rel;
        if rel <= tol {
            return Ok((x, stats));
        }
        precond(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NotConverged { iterations: stats.iterations, residual: stats.residual, history: stats.history })
}

fn max_iter_for(n: usize) -> usize {
    (10 * n).max(1000)
}

/// Solve `A x = f` under the constraints; returns the full vector.
pub fn solve_spd(a: &CsrMatrix, f: &[f64], constraints: &ConstraintSet, tol: f64) -> Result<Vec<f64>> {
    let map = DofMap::new(a.nrows, constraints)?;
    let ar = map.reduce_matrix(a);
    let rhs = map.reduce_rhs(a, f);
    let (x, _) = pcg(&ar, &rhs, tol, max_iter_for(ar.nrows))?;
    Ok(map.expand(&x))
}

/// Solver for a fixed SPD operator on an unconstrained space.
pub trait SpdSolve: Send + Sync {
    fn dim(&self) -> usize;
    fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>>;
    /// Apply the operator itself.
    fn apply(&self, x: &[f64]) -> Vec<f64>;
}

pub struct PcgSolver {
    pub matrix: CsrMatrix,
    pub tol: f64,
    pub max_iter: usize,
}

impl PcgSolver {
    pub fn new(matrix: CsrMatrix, tol: f64) -> Self {
        let max_iter = max_iter_for(matrix.nrows);
        Self { matrix, tol, max_iter }
    }
}

impl SpdSolve for PcgSolver {
    fn dim(&self) -> usize {
        self.matrix.nrows
    }
    fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        pcg(&self.matrix, rhs, self.tol, self.max_iter).map(|r| r.0)
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.matrix.mul_vec(x)
    }
}

/// Sparse Cholesky factorization of an SPD matrix.
pub struct CholeskySolver {
    matrix: CsrMatrix,
    factor: Llt<usize, f64>,
}

impl CholeskySolver {
    pub fn new(matrix: CsrMatrix) -> Result<Self> {
        if matrix.nrows != matrix.ncols {
            return Err(Error::Mismatch("Cholesky needs a square matrix".into()));
        }
        let factor = matrix
            .to_faer()
            .sp_cholesky(Side::Lower)
            .map_err(|e| Error::Factorization(format!("sparse Cholesky failed: {e:?}")))?;
        Ok(Self { matrix, factor })
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    /// Solve for several right-hand sides at once (columns of `rhs`).
    pub fn solve_many(&self, rhs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = self.matrix.nrows;
        let mut b = Mat::<f64>::zeros(n, rhs.len());
        for (j, col) in rhs.iter().enumerate() {
            for i in 0..n {
                b[(i, j)] = col[i];
            }
        }
        let x = self.factor.solve(&b);
        (0..rhs.len()).map(|j| (0..n).map(|i| x[(i, j)]).collect()).collect()
    }
}

impl SpdSolve for CholeskySolver {
    fn dim(&self) -> usize {
        self.matrix.nrows
    }
    fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        assert_eq!(rhs.len(), self.matrix.nrows);
        let b = Mat::<f64>::from_fn(rhs.len(), 1, |i, _| rhs[i]);
        let x = self.factor.solve(&b);
        let out: Vec<f64> = (0..rhs.len()).map(|i| x[(i, 0)]).collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Factorization("non-finite Cholesky solution".into()));
        }
        Ok(out)
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.matrix.mul_vec(x)
    }
}

/// Sparse LDLᵀ factorization of a symmetric (possibly indefinite) matrix.
///
/// Intended for symmetric quasi-definite block systems, for which a
/// fill-reducing symmetric ordering admits a stable LDLᵀ without pivoting.
pub struct LdltSolver {
    matrix: CsrMatrix,
    symbolic: SymbolicCholesky<usize>,
    values: Vec<f64>,
}

impl LdltSolver {
    pub fn new(matrix: CsrMatrix) -> Result<Self> {
        if matrix.nrows != matrix.ncols {
            return Err(Error::Mismatch("LDLᵀ needs a square matrix".into()));
        }
        let a = matrix.to_faer();
        let symbolic = factorize_symbolic_cholesky(a.symbolic(), Side::Lower, SymmetricOrdering::Amd, Default::default())
            .map_err(|e| Error::Factorization(format!("symbolic analysis failed: {e:?}")))?;
        let mut values = vec![0.0; symbolic.len_val()];
        let mut mem = MemBuffer::try_new(symbolic.factorize_numeric_ldlt_scratch::<f64>(Par::Seq, Default::default()))
            .map_err(|e| Error::Factorization(format!("workspace allocation failed: {e:?}")))?;
        symbolic
            .factorize_numeric_ldlt(
                &mut values,
                a.as_ref(),
                Side::Lower,
                LdltRegularization::default(),
                Par::Seq,
                MemStack::new(&mut mem),
                Default::default(),
            )
            .map_err(|e| Error::Factorization(format!("LDLᵀ failed: {e:?}")))?;
        Ok(Self { matrix, symbolic, values })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.matrix.nrows;
        assert_eq!(rhs.len(), n);
        let mut x = Mat::<f64>::from_fn(n, 1, |i, _| rhs[i]);
        let mut mem = MemBuffer::try_new(self.symbolic.solve_in_place_scratch::<f64>(1, Par::Seq))
            .map_err(|e| Error::Factorization(format!("workspace allocation failed: {e:?}")))?;
        LdltRef::new(&self.symbolic, &self.values).solve_in_place_with_conj(
            Conj::No,
            x.as_mut(),
            Par::Seq,
            MemStack::new(&mut mem),
        );
        let out: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Factorization("non-finite LDLᵀ solution".into()));
        }
        Ok(out)
    }

    /// Solve and apply one step of iterative refinement.
    pub fn solve_refined(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let mut x = self.solve(rhs)?;
        let ax = self.matrix.mul_vec(&x);
        let r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let dx = self.solve(&r)?;
        axpy(1.0, &dx, &mut x);
        Ok(x)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SaddleOptions {
    /// Relative residual of the outer pressure iteration.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SaddleOptions {
    fn default() -> Self {
        Self { tol: 1e-12, max_iter: 10_000 }
    }
}

#[derive(Clone, Debug)]
pub struct SaddleSolution {
    pub displacement: Vec<f64>,
    pub pressure: Vec<f64>,
    pub outer_iterations: usize,
    /// `‖residual‖ / ‖rhs‖` of the full block system.
    pub residual: f64,
}

/// Solve `K u − Cᵀ p = f`, `C u + S p = g` by CG on the pressure Schur
/// complement `S + C K⁻¹ Cᵀ`, with inner solves through `k`.
pub fn solve_saddle(
    k: &dyn SpdSolve,
    c: &CsrMatrix,
    s: &CsrMatrix,
    f: &[f64],
    g: &[f64],
    opts: &SaddleOptions,
) -> Result<SaddleSolution> {
    let nu = k.dim();
    let np = s.nrows;
    if c.nrows != np || c.ncols != nu || f.len() != nu || g.len() != np || s.ncols != np {
        return Err(Error::Mismatch("saddle block dimensions are inconsistent".into()));
    }
    let kf = k.solve(f)?;
    let ckf = c.mul_vec(&kf);
    let rhs: Vec<f64> = g.iter().zip(&ckf).map(|(a, b)| a - b).collect();
    let diag = s.diagonal();
    let use_diag = diag.iter().all(|&d| d > 0.0);
    let mut inner_error: Option<Error> = None;
    let apply = |p: &[f64], out: &mut [f64]| {
        let ctp = c.mul_transpose_vec(p);
        let v = match k.solve(&ctp) {
            Ok(v) => v,
            Err(e) => {
                inner_error.get_or_insert(e);
                vec![0.0; nu]
            }
        };
        let cv = c.mul_vec(&v);
        s.mul_vec_into(p, out);
        for i in 0..np {
            out[i] += cv[i];
        }
    };
    let precond = |r: &[f64], z: &mut [f64]| {
        for i in 0..r.len() {
            z[i] = if use_diag { r[i] / diag[i] } else { r[i] };
        }
    };
    let result = pcg_with(apply, precond, &rhs, opts.tol, opts.max_iter);
    if let Some(e) = inner_error {
        return Err(e);
    }
    let (p, stats) = result.map_err(|e| match e {
        Error::SingularSchur(msg) => Error::SingularSchur(msg),
        other => other,
    })?;
    let mut load = f.to_vec();
    axpy(1.0, &c.mul_transpose_vec(&p), &mut load);
    let u = k.solve(&load)?;

    let ku = k.apply(&u);
    let ctp = c.mul_transpose_vec(&p);
    let cu = c.mul_vec(&u);
    let sp = s.mul_vec(&p);
    let mut res2 = 0.0;
    for i in 0..nu {
        res2 += (ku[i] - ctp[i] - f[i]).powi(2);
    }
    for i in 0..np {
        res2 += (cu[i] + sp[i] - g[i]).powi(2);
    }
    let scale = (dot(f, f) + dot(g, g)).sqrt();
    let residual = if scale > 0.0 { res2.sqrt() / scale } else { res2.sqrt() };
    Ok(SaddleSolution { displacement: u, pressure: p, outer_iterations: stats.iterations, residual })
}
