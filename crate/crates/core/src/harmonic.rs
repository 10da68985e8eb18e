//! Dirichlet Green's functions, harmonic measure and harmonic extension.

use std::io::Write;
use std::sync::OnceLock;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::{RealField, SquareDomain, SubDomain, Topology, Vertex};
use crate::scalar::Scalar;
use crate::solver::{Backend, DirichletSolver};

/// Largest side for which [`GreensTable::fill`] materializes every column.
pub const FULL_TABLE_MAX_SIDE: usize = 65;

/// Relative tolerance for membership in the orthogonal complement of harmonic functions.
const ORTHOGONALITY_TOL: f64 = 1e-9;

/// Green's function of the walk killed on a set (by default the outer ring).
///
/// Columns are solved on first access and cached.
#[derive(Debug)]
pub struct GreensTable<T> {
    solver: DirichletSolver<T>,
    killed: Vec<bool>,
    columns: Vec<OnceLock<RealField<T>>>,
}

impl<T: Scalar> GreensTable<T> {
    /// Green's function of a zero-boundary domain, killed on `∂Λ`.
    pub fn new(domain: &SquareDomain) -> Result<Self> {
        if domain.topology() != Topology::ZeroBoundary {
            return Err(Error::InvalidArgument(
                "Dirichlet Green's function needs a zero-boundary domain; use killed_on".into(),
            ));
        }
        let killed: Vec<bool> = (0..domain.len()).map(|i| domain.is_boundary_index(i)).collect();
        Self::killed_on(domain, killed, Backend::Auto)
    }

    /// Green's function of a box treated as its own zero-boundary domain (local coordinates).
    pub fn for_subdomain(sub: &SubDomain) -> Result<Self> {
        Self::new(&sub.as_domain()?)
    }

    /// Green's function of the walk on `domain`'s graph killed on `killed`.
    pub fn killed_on(domain: &SquareDomain, killed: Vec<bool>, backend: Backend) -> Result<Self> {
        if killed.iter().all(|&k| k) {
            return Err(Error::InvalidArgument("domain has no free sites".into()));
        }
        let solver = DirichletSolver::new(domain, &killed, backend)?;
        let columns = (0..domain.len()).map(|_| OnceLock::new()).collect();
        Ok(Self { solver, killed, columns })
    }

    pub fn domain(&self) -> &SquareDomain {
        self.solver.domain()
    }

    pub fn is_killed(&self, v: Vertex) -> bool {
        self.killed[self.domain().index(v)]
    }

    pub fn killed_mask(&self) -> &[bool] {
        &self.killed
    }

    /// `σ^l = G(·, l)`, the solution of `-Δσ = δ_l` vanishing on the killed set.
    pub fn column(&self, l: Vertex) -> Result<&RealField<T>> {
        let dom = self.domain();
        if !dom.contains(l) {
            return Err(Error::InvalidArgument(format!("vertex {l:?} outside domain")));
        }
        let li = dom.index(l);
        if let Some(c) = self.columns[li].get() {
            return Ok(c);
        }
        let col = if self.killed[li] {
            RealField::zeros(dom.side())
        } else {
            let mut rhs = vec![T::zero(); dom.len()];
            rhs[li] = T::one();
            RealField::from_values(dom.side(), self.solver.solve_sites(&rhs)?)
        };
        Ok(self.columns[li].get_or_init(|| col))
    }

    /// `G(j, l)`.
    pub fn get(&self, j: Vertex, l: Vertex) -> Result<T> {
        Ok(self.column(l)?[j])
    }

    /// Solves every column. Only allowed up to [`FULL_TABLE_MAX_SIDE`].
    pub fn fill(&self) -> Result<()> {
        let dom = self.domain();
        if dom.side() > FULL_TABLE_MAX_SIDE {
            return Err(Error::TooLarge(format!(
                "full Green table for side {} (limit {FULL_TABLE_MAX_SIDE})",
                dom.side()
            )));
        }
        (0..dom.len()).into_par_iter().try_for_each(|i| self.column(dom.vertex(i)).map(|_| ()))
    }

    /// Harmonic measure `Hm(l, ·)` seen from a free site `l`, supported on the killed set.
    pub fn harmonic_measure(&self, l: Vertex) -> Result<RealField<T>> {
        let dom = self.domain();
        if !dom.contains(l) || self.is_killed(l) {
            return Err(Error::InvalidArgument(format!("harmonic measure needs an interior start, got {l:?}")));
        }
        let col = self.column(l)?;
        let mut out = RealField::zeros(dom.side());
        for j in 0..dom.len() {
            if self.killed[j] {
                let s: T = dom.neighbors(j).iter().map(|&k| col.values[k as usize]).sum();
                out.values[j] = s;
            }
        }
        Ok(out)
    }

    /// Harmonic extension of the values of `h` on the killed set.
    ///
    /// Solved as the Dirichlet problem `Δh̃ = 0` off the killed set; equals
    /// `Σ_l Hm(j, l) h_l` (checked in tests against the harmonic-measure sum).
    pub fn harmonic_extension(&self, h: &RealField<T>) -> Result<RealField<T>> {
        let dom = self.domain();
        let mut rhs = vec![T::zero(); dom.len()];
        for i in 0..dom.len() {
            if !self.killed[i] {
                for &j in dom.neighbors(i) {
                    if self.killed[j as usize] {
                        rhs[i] += h.values[j as usize];
                    }
                }
            }
        }
        let mut out = self.solver.solve_sites(&rhs)?;
        for i in 0..dom.len() {
            if self.killed[i] {
                out[i] = h.values[i];
            }
        }
        Ok(RealField::from_values(dom.side(), out))
    }

    /// `σ = Σ_l G(·, l) f_l` over free sites, without the orthogonality check.
    pub fn green_potential(&self, f: &RealField<T>) -> Result<RealField<T>> {
        let out = self.solver.solve_sites(&f.values)?;
        Ok(RealField::from_values(self.domain().side(), out))
    }

    /// Pairings `⟨f, H_b⟩` of `f` with the harmonic extension `H_b` of every
    /// killed-site indicator, given `σ = Gf`.
    fn harmonic_pairings(&self, f: &RealField<T>, sigma: &RealField<T>) -> Vec<(usize, T)> {
        let dom = self.domain();
        (0..dom.len())
            .filter(|&b| self.killed[b])
            .map(|b| {
                let inner: T = dom.neighbors(b).iter().map(|&k| sigma.values[k as usize]).sum();
                (b, f.values[b] + inner)
            })
            .collect()
    }

    /// The unique `σ` vanishing on the killed set with `-Δσ = f` off it,
    /// for `f` orthogonal to every harmonic function.
    pub fn inverse_laplacian(&self, f: &RealField<T>) -> Result<RealField<T>> {
        let sigma = self.green_potential(f)?;
        let fnorm = f.norm();
        let tol = T::of(ORTHOGONALITY_TOL).max(T::epsilon() * T::of(1e3)) * fnorm;
        // ‖H_b‖₂ >= 1, so comparing against ‖f‖ alone is the stricter test.
        let worst = self
            .harmonic_pairings(f, &sigma)
            .into_iter()
            .fold(T::zero(), |m, (_, r)| m.max(r.abs()));
        if worst > tol {
            return Err(Error::NotOrthogonal { residual: worst.to_f64_lossy(), tolerance: tol.to_f64_lossy() });
        }
        Ok(sigma)
    }

    /// Dual basis vector `f^l`: 1 at `l`, `-Hm(l, ·)` on the killed set.
    pub fn dual_basis(&self, l: Vertex) -> Result<RealField<T>> {
        let mut f = self.harmonic_measure(l)?.scaled(-T::one());
        f[l] = T::one();
        Ok(f)
    }

    /// Writes the requested columns as `jx,jy,lx,ly,value`.
    pub fn write_csv<W: Write>(&self, columns: &[Vertex], mut out: W) -> Result<()> {
        let io = |e: std::io::Error| Error::Internal(e.to_string());
        writeln!(out, "jx,jy,lx,ly,value").map_err(io)?;
        for &l in columns {
            let col = self.column(l)?;
            for j in self.domain().vertices() {
                writeln!(out, "{},{},{},{},{:.16e}", j.x, j.y, l.x, l.y, col[j].to_f64_lossy()).map_err(io)?;
            }
        }
        Ok(())
    }
}

/// Probe density of a box pair: 1 at the common center, `-Hm_{Π′}(j*, ·)` on `∂Π′`.
#[derive(Clone, Debug)]
pub struct ProbeDensity<T> {
    pub outer: SubDomain,
    pub inner: SubDomain,
    pub center: Vertex,
    /// Field in the parent's coordinates.
    pub field: RealField<T>,
    /// The same field on the inner box in its local coordinates.
    pub local: RealField<T>,
}

/// Builds the probe density for an outer box `Π` of side `R >= 10` inside a
/// parent of side `parent_side`, with inner box of side `floor(R/2)` sharing its center.
pub fn probe_density<T: Scalar>(
    parent_side: usize,
    outer: SubDomain,
    inner: SubDomain,
    center: Vertex,
) -> Result<ProbeDensity<T>> {
    let geo = |m: String| Err(Error::InvalidGeometry(m));
    if !outer.fits_in(parent_side) {
        return geo(format!("outer box {outer:?} not inside parent of side {parent_side}"));
    }
    if outer.side < 10 {
        return geo(format!("outer side {} below 10", outer.side));
    }
    if outer.center() != center || inner.center() != center {
        return geo(format!("boxes are not centered at {center:?}"));
    }
    if inner.side != outer.side / 2 {
        return geo(format!("inner side {} is not floor({}/2)", inner.side, outer.side));
    }
    if !outer.contains_sub(&inner) {
        return geo("inner box not contained in outer box".into());
    }
    let gap = inner.origin.x - outer.origin.x;
    if 8 * gap < outer.side {
        return geo(format!("inner box only {gap} away from the outer boundary"));
    }
    let table = GreensTable::<T>::for_subdomain(&inner)?;
    let local = table.dual_basis(inner.to_local(center))?;
    let mut field = RealField::zeros(parent_side);
    for v in inner.vertices() {
        field[v] = local[inner.to_local(v)];
    }
    Ok(ProbeDensity { outer, inner, center, field, local })
}

/// Builds the standard probe for an outer box of side `r` centered at `center`.
pub fn standard_probe<T: Scalar>(parent_side: usize, center: Vertex, r: usize) -> Result<ProbeDensity<T>> {
    let outer = SubDomain::centered(center, r)
        .ok_or_else(|| Error::InvalidGeometry(format!("box of side {r} at {center:?} leaves the lattice")))?;
    let inner = SubDomain::centered(center, r / 2)
        .ok_or_else(|| Error::InvalidGeometry("inner box leaves the lattice".into()))?;
    probe_density(parent_side, outer, inner, center)
}

/// `G_{Λ∖A}(j, j)`: diagonal Green's function of the walk killed on `a`.
pub fn green_diag_killed<T: Scalar>(domain: &SquareDomain, a: &[crate::lattice::Vertex], j: Vertex) -> Result<T> {
    if a.is_empty() {
        return Err(Error::InvalidArgument("killing set is empty".into()));
    }
    if a.contains(&j) {
        return Err(Error::InvalidArgument(format!("{j:?} lies in the killing set")));
    }
    let mut killed = vec![false; domain.len()];
    for &v in a {
        if !domain.contains(v) {
            return Err(Error::InvalidArgument(format!("vertex {v:?} outside domain")));
        }
        killed[domain.index(v)] = true;
    }
    let solver = DirichletSolver::<T>::new(domain, &killed, Backend::Auto)?;
    let mut rhs = vec![T::zero(); domain.len()];
    rhs[domain.index(j)] = T::one();
    Ok(solver.solve_sites(&rhs)?[domain.index(j)])
}
