//! Linear solves for the lattice Laplacian with a killed (Dirichlet) set.
//!
//! The operator is `(A u)_i = deg(i) u_i - Σ_{j~i, j free} u_j` on the free sites,
//! i.e. `-Δ` with the killed sites clamped to zero. It is symmetric positive
//! definite whenever every connected component meets the killed set.

use crate::error::{Error, Result};
use crate::lattice::{SquareDomain, Topology};
use crate::scalar::Scalar;

/// Largest band storage (entries) for which the direct factorization is used.
const BAND_LIMIT: usize = 4_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Backend {
    /// Pick banded Cholesky when the band fits in memory, else CG.
    Auto,
    BandedCholesky,
    ConjugateGradient,
}

#[derive(Debug)]
enum Factor<T> {
    /// Row `i` holds `L[i][i-bw..=i]`.
    Band { bw: usize, rows: Vec<T> },
    Cg,
}

#[derive(Debug)]
pub struct DirichletSolver<T> {
    domain: SquareDomain,
    /// Site index -> unknown index.
    slot: Vec<Option<usize>>,
    /// Unknown index -> site index.
    site: Vec<usize>,
    factor: Factor<T>,
}

impl<T: Scalar> DirichletSolver<T> {
    pub fn new(domain: &SquareDomain, killed: &[bool], backend: Backend) -> Result<Self> {
        assert_eq!(killed.len(), domain.len());
        if killed.iter().all(|&k| !k) {
            return Err(Error::InvalidArgument("killed set is empty".into()));
        }
        let mut slot = vec![None; domain.len()];
        let mut site = Vec::new();
        for i in 0..domain.len() {
            if !killed[i] {
                slot[i] = Some(site.len());
                site.push(i);
            }
        }
        let mut bw = 0usize;
        for (u, &i) in site.iter().enumerate() {
            for &j in domain.neighbors(i) {
                if let Some(v) = slot[j as usize] {
                    bw = bw.max(u.abs_diff(v));
                }
            }
        }
        let n = site.len();
        let band_ok = n.saturating_mul(bw + 1) <= BAND_LIMIT;
        let use_band = match backend {
            Backend::Auto => band_ok && !matches!(domain.topology(), Topology::PeriodicPinned(_)),
            Backend::BandedCholesky => true,
            Backend::ConjugateGradient => false,
        };
        let mut solver = Self { domain: domain.clone(), slot, site, factor: Factor::Cg };
        if use_band && n > 0 {
            solver.factor = solver.factorize(bw)?;
        }
        Ok(solver)
    }

    pub fn unknowns(&self) -> usize {
        self.site.len()
    }

    pub fn slot(&self, site: usize) -> Option<usize> {
        self.slot[site]
    }

    pub fn site(&self, unknown: usize) -> usize {
        self.site[unknown]
    }

    pub fn domain(&self) -> &SquareDomain {
        &self.domain
    }

    /// Matrix entry `A[u][v]` (unknown indices).
    fn entry(&self, u: usize, v: usize) -> T {
        let i = self.site[u];
        if u == v {
            return T::of(self.domain.degree(i) as f64);
        }
        let j = self.site[v];
        let count = self.domain.neighbors(i).iter().filter(|&&k| k as usize == j).count();
        -T::of(count as f64)
    }

    fn apply(&self, x: &[T], out: &mut [T]) {
        for (u, &i) in self.site.iter().enumerate() {
            let mut acc = T::of(self.domain.degree(i) as f64) * x[u];
            for &j in self.domain.neighbors(i) {
                if let Some(v) = self.slot[j as usize] {
                    acc -= x[v];
                }
            }
            out[u] = acc;
        }
    }

    fn factorize(&self, bw: usize) -> Result<Factor<T>> {
        let n = self.site.len();
        let w = bw + 1;
        let mut rows = vec![T::zero(); n * w];
        // rows[i*w + (j + bw - i)] = L[i][j] for i-bw <= j <= i
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let mut s = self.entry(i, j);
                let klo = lo.max(j.saturating_sub(bw));
                for k in klo..j {
                    s -= rows[i * w + (k + bw - i)] * rows[j * w + (k + bw - j)];
                }
                if j == i {
                    if s <= T::zero() {
                        return Err(Error::Internal("Laplacian block is not positive definite".into()));
                    }
                    rows[i * w + bw] = s.sqrt();
                } else {
                    rows[i * w + (j + bw - i)] = s / rows[j * w + bw];
                }
            }
        }
        Ok(Factor::Band { bw, rows })
    }

    fn cg_tolerance() -> T {
        T::of(1e-12).max(T::epsilon() * T::of(64.0))
    }

    /// Solves `A x = b` in unknown coordinates.
    pub fn solve_unknowns(&self, b: &[T]) -> Result<Vec<T>> {
        let n = self.site.len();
        assert_eq!(b.len(), n);
        match &self.factor {
            Factor::Band { bw, rows } => {
                let (bw, w) = (*bw, *bw + 1);
                let mut y = b.to_vec();
                for i in 0..n {
                    let mut s = y[i];
                    for k in i.saturating_sub(bw)..i {
                        s -= rows[i * w + (k + bw - i)] * y[k];
                    }
                    y[i] = s / rows[i * w + bw];
                }
                for i in (0..n).rev() {
                    let mut s = y[i];
                    for k in i + 1..n.min(i + bw + 1) {
                        s -= rows[k * w + (i + bw - k)] * y[k];
                    }
                    y[i] = s / rows[i * w + bw];
                }
                Ok(y)
            }
            Factor::Cg => self.conjugate_gradient(b),
        }
    }

    /// Solves `Lᵀ x = z` for the Cholesky factor `A = L Lᵀ`. With `z` standard
    /// normal, `x` has covariance `A⁻¹`.
    pub fn solve_factor_transpose(&self, z: &[T]) -> Result<Vec<T>> {
        let Factor::Band { bw, rows } = &self.factor else {
            return Err(Error::Internal("no Cholesky factor (iterative backend)".into()));
        };
        let (n, bw, w) = (self.site.len(), *bw, *bw + 1);
        assert_eq!(z.len(), n);
        let mut y = z.to_vec();
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n.min(i + bw + 1) {
                s -= rows[k * w + (i + bw - k)] * y[k];
            }
            y[i] = s / rows[i * w + bw];
        }
        Ok(y)
    }

    fn conjugate_gradient(&self, b: &[T]) -> Result<Vec<T>> {
        let n = b.len();
        let bnorm = b.iter().map(|&v| v * v).sum::<T>().sqrt();
        let mut x = vec![T::zero(); n];
        if bnorm == T::zero() {
            return Ok(x);
        }
        let tol = Self::cg_tolerance() * bnorm;
        let mut r = b.to_vec();
        let mut p = r.clone();
        let mut ap = vec![T::zero(); n];
        let mut rr: T = r.iter().map(|&v| v * v).sum();
        let max_iter = 20 * n + 100;
        for _ in 0..max_iter {
            if rr.sqrt() <= tol {
                break;
            }
            self.apply(&p, &mut ap);
            let pap: T = p.iter().zip(&ap).map(|(&a, &b)| a * b).sum();
            let alpha = rr / pap;
            for u in 0..n {
                x[u] += alpha * p[u];
                r[u] -= alpha * ap[u];
            }
            let rr_new: T = r.iter().map(|&v| v * v).sum();
            let beta = rr_new / rr;
            rr = rr_new;
            for u in 0..n {
                p[u] = r[u] + beta * p[u];
            }
        }
        // recompute the true residual; the recursive one drifts
        self.apply(&x, &mut ap);
        let res = b.iter().zip(&ap).map(|(&a, &c)| (a - c) * (a - c)).sum::<T>().sqrt();
        if res > tol * T::of(100.0) {
            return Err(Error::Internal(format!(
                "conjugate gradient stalled at relative residual {:e}",
                (res / bnorm).to_f64_lossy()
            )));
        }
        Ok(x)
    }

    /// Solves `A x = b` for a right-hand side given on all sites (killed entries ignored);
    /// the result is a full-domain vector vanishing on the killed set.
    pub fn solve_sites(&self, b: &[T]) -> Result<Vec<T>> {
        let rhs: Vec<T> = self.site.iter().map(|&i| b[i]).collect();
        let x = self.solve_unknowns(&rhs)?;
        let mut out = vec![T::zero(); self.domain.len()];
        for (u, &i) in self.site.iter().enumerate() {
            out[i] = x[u];
        }
        Ok(out)
    }
}
