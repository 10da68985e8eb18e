//! Charge densities, ensembles, dyadic square covers and the activity `A(ρ)`.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{RealField, Vertex};

/// Scale parameters `(α, M)` of the expansion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RenormParams {
    pub alpha: f64,
    pub m: f64,
}

impl RenormParams {
    pub const DEFAULT_M: f64 = 65536.0;
    pub const DEFAULT_ALPHA: f64 = 1.75;

    pub fn new(alpha: f64, m: f64) -> Result<Self> {
        if !(alpha > 1.5 && alpha < 2.0) {
            return Err(Error::InvalidParameter(format!("alpha = {alpha} outside (3/2, 2)")));
        }
        if !(m >= 2.0) || !m.is_finite() {
            return Err(Error::InvalidParameter(format!("M = {m} must be at least 2")));
        }
        Ok(Self { alpha, m })
    }

    /// `M d^α`.
    pub fn separation(&self, d: usize) -> f64 {
        self.m * (d as f64).powf(self.alpha)
    }
}

impl Default for RenormParams {
    fn default() -> Self {
        Self { alpha: Self::DEFAULT_ALPHA, m: Self::DEFAULT_M }
    }
}

/// Integer charge density on the interior of a zero-boundary box of side `side`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChargeDensity {
    side: usize,
    /// Nonzero values only.
    entries: BTreeMap<Vertex, i64>,
}

/// Statistics of a density; `center` is the vertex `j` defining `D(ρ)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DensityStats {
    pub charge: i64,
    pub diameter: usize,
    pub d_lambda: usize,
    pub center: Vertex,
    pub norm2sq: i64,
}

fn boundary_distance(side: usize, v: Vertex) -> usize {
    let l = side - 1;
    v.x.min(v.y).min(l - v.x).min(l - v.y)
}

impl ChargeDensity {
    /// Builds a density from `(vertex, value)` pairs; zero values are dropped,
    /// repeated vertices are summed.
    pub fn new(side: usize, values: impl IntoIterator<Item = (Vertex, i64)>) -> Result<Self> {
        if side <= 2 {
            return Err(Error::InvalidSize(format!("side {side} must exceed 2")));
        }
        let mut entries = BTreeMap::new();
        for (v, q) in values {
            if v.x >= side || v.y >= side {
                return Err(Error::InvalidDensity(format!("vertex {v:?} outside box of side {side}")));
            }
            *entries.entry(v).or_insert(0) += q;
        }
        entries.retain(|_, q| *q != 0);
        if entries.is_empty() {
            return Err(Error::InvalidDensity("empty support".into()));
        }
        if let Some(v) = entries.keys().find(|&&v| boundary_distance(side, v) == 0) {
            return Err(Error::InvalidDensity(format!("support meets the boundary at {v:?}")));
        }
        Ok(Self { side, entries })
    }

    pub fn point(side: usize, v: Vertex, q: i64) -> Result<Self> {
        Self::new(side, [(v, q)])
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn get(&self, v: Vertex) -> i64 {
        self.entries.get(&v).copied().unwrap_or(0)
    }

    /// `(vertex, value)` in lexicographic vertex order.
    pub fn iter(&self) -> impl Iterator<Item = (Vertex, i64)> + '_ {
        self.entries.iter().map(|(&v, &q)| (v, q))
    }

    pub fn support(&self) -> Vec<Vertex> {
        self.entries.keys().copied().collect()
    }

    pub fn support_len(&self) -> usize {
        self.entries.len()
    }

    pub fn charge(&self) -> i64 {
        self.entries.values().sum()
    }

    pub fn norm2sq(&self) -> i64 {
        self.entries.values().map(|q| q * q).sum()
    }

    pub fn norm1(&self) -> i64 {
        self.entries.values().map(|q| q.abs()).sum()
    }

    /// `d(ρ)`: largest distance between two support points.
    pub fn diameter(&self) -> usize {
        let s = self.support();
        let mut d = 0;
        for (i, a) in s.iter().enumerate() {
            for b in &s[i + 1..] {
                d = d.max(a.manhattan(*b));
            }
        }
        d
    }

    pub fn dist_to_boundary(&self) -> usize {
        self.entries.keys().map(|&v| boundary_distance(self.side, v)).min().unwrap_or(0)
    }

    /// `d_Λ(ρ)`.
    pub fn d_lambda(&self) -> usize {
        let d = self.diameter();
        if self.charge() != 0 {
            d.max(self.dist_to_boundary())
        } else {
            d
        }
    }

    pub fn dist_to_vertex(&self, v: Vertex) -> usize {
        self.entries.keys().map(|u| u.manhattan(v)).min().unwrap_or(usize::MAX)
    }

    pub fn distance(&self, other: &ChargeDensity) -> usize {
        other.entries.keys().map(|&v| self.dist_to_vertex(v)).min().unwrap_or(usize::MAX)
    }

    pub fn is_disjoint(&self, other: &ChargeDensity) -> bool {
        self.entries.keys().all(|v| !other.entries.contains_key(v))
    }

    /// `Σ_j ρ_j ψ_j`.
    pub fn pair(&self, psi: &RealField<f64>) -> f64 {
        self.iter().map(|(v, q)| q as f64 * psi[v]).sum()
    }

    pub fn to_field(&self) -> RealField<f64> {
        let mut f = RealField::zeros(self.side);
        for (v, q) in self.iter() {
            f[v] = q as f64;
        }
        f
    }

    /// `self + sign * other` for densities with disjoint supports.
    pub fn merged(&self, other: &ChargeDensity, sign: i64) -> Result<Self> {
        if !self.is_disjoint(other) || self.side != other.side {
            return Err(Error::InvalidArgument("merging overlapping densities".into()));
        }
        Self::new(self.side, self.iter().chain(other.iter().map(|(v, q)| (v, sign * q))))
    }

    /// Restriction to the given support points (a constituent).
    pub fn restricted(&self, vertices: &[Vertex]) -> Result<Self> {
        Self::new(self.side, vertices.iter().map(|&v| (v, self.get(v))))
    }

    /// Statistics. The center is the admissible vertex of largest `|ρ_j|`,
    /// lexicographically smallest among ties.
    pub fn stats(&self) -> DensityStats {
        let charge = self.charge();
        let diameter = self.diameter();
        let d_lambda = self.d_lambda();
        let s = self.support();
        let admissible: Vec<Vertex> = if d_lambda == diameter {
            s.iter().copied().filter(|&j| s.iter().any(|&l| j.manhattan(l) == diameter)).collect()
        } else {
            s.iter().copied().filter(|&j| boundary_distance(self.side, j) == d_lambda).collect()
        };
        let top = admissible.iter().map(|&j| self.get(j).abs()).max().expect("nonempty support");
        let center = *admissible.iter().find(|&&j| self.get(j).abs() == top).expect("maximum attained");
        DensityStats { charge, diameter, d_lambda, center, norm2sq: self.norm2sq() }
    }

    /// `D(ρ) = {l : dist(j, l) < 2 d_Λ(ρ)}`.
    pub fn d_disc(&self) -> Vec<Vertex> {
        let st = self.stats();
        self.ball(st.center, 2 * st.d_lambda - 1)
    }

    /// `D⁺(ρ) = {l : dist(l, D(ρ)) <= 1}`, which on a box is the radius-`2d_Λ` ball.
    pub fn d_disc_plus(&self) -> Vec<Vertex> {
        let st = self.stats();
        self.ball(st.center, 2 * st.d_lambda)
    }

    pub fn in_d_disc(&self, v: Vertex) -> bool {
        let st = self.stats();
        v.manhattan(st.center) < 2 * st.d_lambda
    }

    fn ball(&self, c: Vertex, r: usize) -> Vec<Vertex> {
        let mut out = Vec::new();
        for x in c.x.saturating_sub(r)..=(c.x + r).min(self.side - 1) {
            let rem = r - x.abs_diff(c.x);
            for y in c.y.saturating_sub(rem)..=(c.y + rem).min(self.side - 1) {
                out.push(Vertex::new(x, y));
            }
        }
        out
    }
}

/// Collection of densities with pairwise disjoint supports.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Ensemble {
    pub densities: Vec<ChargeDensity>,
}

impl Ensemble {
    pub fn new(densities: Vec<ChargeDensity>) -> Result<Self> {
        for (i, a) in densities.iter().enumerate() {
            for b in &densities[i + 1..] {
                if !a.is_disjoint(b) {
                    return Err(Error::InvalidArgument("ensemble supports overlap".into()));
                }
            }
        }
        Ok(Self { densities })
    }

    pub fn len(&self) -> usize {
        self.densities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.densities.is_empty()
    }

    /// True when distinct members are more than `2^k` apart (`k >= -1`).
    pub fn is_k_ensemble(&self, k: i32) -> bool {
        let r = if k < 0 { 0.5 } else { 2f64.powi(k) };
        let d = &self.densities;
        (0..d.len()).all(|i| (i + 1..d.len()).all(|j| d[i].distance(&d[j]) as f64 > r))
    }
}

/// Coefficients `ε(ρ₁, ρ) ∈ {-1, 0, 1}` with `ρ₁ = Σ ε ρ`, or `None` if `ρ₁` is not compatible.
pub fn compatibility(rho1: &ChargeDensity, ensemble: &Ensemble) -> Option<Vec<i8>> {
    let mut eps = Vec::with_capacity(ensemble.len());
    let mut covered = 0usize;
    for rho in &ensemble.densities {
        let overlap = rho.iter().filter(|&(v, _)| rho1.get(v) != 0).count();
        if overlap == 0 {
            eps.push(0);
            continue;
        }
        let sign = rho.iter().map(|(v, q)| (rho1.get(v), q)).try_fold(0i64, |s, (a, q)| {
            let e = if a == q {
                1
            } else if a == -q {
                -1
            } else {
                return None;
            };
            (s == 0 || s == e).then_some(e)
        })?;
        covered += rho.support_len();
        eps.push(sign as i8);
    }
    (covered == rho1.support_len()).then_some(eps)
}

/// Axis-aligned `2^k × 2^k` square clipped to the box (the whole box once `2^k >= L`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Square {
    pub origin: Vertex,
    pub k: u32,
    /// Actual side after clipping, `min(2^k, L)`.
    pub side: usize,
}

impl Square {
    pub fn contains(&self, v: Vertex) -> bool {
        v.x >= self.origin.x
            && v.y >= self.origin.y
            && v.x < self.origin.x + self.side
            && v.y < self.origin.y + self.side
    }

    /// Graph distance from `v` to the square.
    pub fn dist_to_vertex(&self, v: Vertex) -> usize {
        let gap = |p: usize, lo: usize, len: usize| {
            if p < lo {
                lo - p
            } else if p >= lo + len {
                p - (lo + len - 1)
            } else {
                0
            }
        };
        gap(v.x, self.origin.x, self.side) + gap(v.y, self.origin.y, self.side)
    }

    pub fn distance(&self, other: &Square) -> usize {
        let gap = |a: usize, la: usize, b: usize, lb: usize| {
            if a + la <= b {
                b - (a + la - 1)
            } else if b + lb <= a {
                a - (b + lb - 1)
            } else {
                0
            }
        };
        gap(self.origin.x, self.side, other.origin.x, other.side)
            + gap(self.origin.y, self.side, other.origin.y, other.side)
    }

    pub fn vertices(&self) -> impl Iterator<Item = Vertex> + '_ {
        (self.origin.x..self.origin.x + self.side)
            .flat_map(move |x| (self.origin.y..self.origin.y + self.side).map(move |y| Vertex::new(x, y)))
    }
}

/// Minimal cover of a point set by `2^k` squares at scale `k`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SquareCover {
    pub k: u32,
    pub squares: Vec<Square>,
}

fn scale_side(side: usize, k: u32) -> usize {
    if k >= usize::BITS - 1 {
        side
    } else {
        (1usize << k).min(side)
    }
}

/// Branch-and-bound search; the lexicographically first uncovered point is
/// covered by a square with its left edge on that point's column and its
/// bottom edge on the lowest point it takes.
fn cover_search(
    points: &[Vertex],
    covered: &mut Vec<bool>,
    w: usize,
    side: usize,
    current: &mut Vec<Square>,
    best: &mut Option<Vec<Square>>,
    k: u32,
) {
    if best.as_ref().is_some_and(|b| current.len() >= b.len()) {
        return;
    }
    let Some(first) = (0..points.len()).find(|&i| !covered[i]) else {
        *best = Some(current.clone());
        return;
    };
    let p = points[first];
    let ax = p.x.min(side - w);
    let mut bys: Vec<usize> = points
        .iter()
        .enumerate()
        .filter(|&(i, q)| !covered[i] && q.y <= p.y && p.y - q.y < w && q.x >= ax && q.x < ax + w)
        .map(|(_, q)| q.y.min(side - w))
        .collect();
    bys.sort_unstable();
    bys.dedup();
    for by in bys {
        let sq = Square { origin: Vertex::new(ax, by), k, side: w };
        let newly: Vec<usize> = (0..points.len()).filter(|&i| !covered[i] && sq.contains(points[i])).collect();
        for &i in &newly {
            covered[i] = true;
        }
        current.push(sq);
        cover_search(points, covered, w, side, current, best, k);
        current.pop();
        for &i in &newly {
            covered[i] = false;
        }
    }
}

/// Minimal cover of `supp(ρ)` at scale `k`. Each square is then moved to the
/// lexicographically smallest origin still covering the points assigned to it.
pub fn minimal_cover(rho: &ChargeDensity, k: u32) -> SquareCover {
    let side = rho.side();
    let w = scale_side(side, k);
    let points = rho.support();
    if w == side {
        return SquareCover { k, squares: vec![Square { origin: Vertex::new(0, 0), k, side }] };
    }
    let mut best = None;
    cover_search(&points, &mut vec![false; points.len()], w, side, &mut Vec::new(), &mut best, k);
    let raw = best.expect("a cover always exists");
    let mut taken = vec![false; points.len()];
    let mut squares: Vec<Square> = raw
        .iter()
        .map(|sq| {
            let mut mine = Vec::new();
            for i in 0..points.len() {
                if !taken[i] && sq.contains(points[i]) {
                    taken[i] = true;
                    mine.push(points[i]);
                }
            }
            let mx = mine.iter().map(|v| v.x).max().unwrap_or(sq.origin.x);
            let my = mine.iter().map(|v| v.y).max().unwrap_or(sq.origin.y);
            Square { origin: Vertex::new((mx + 1).saturating_sub(w), (my + 1).saturating_sub(w)), k, side: w }
        })
        .collect();
    squares.sort();
    SquareCover { k, squares }
}

/// `𝒮_k^sep(ρ)` for `k >= 1`.
pub fn separated_squares(rho: &ChargeDensity, k: u32, params: &RenormParams) -> Vec<Square> {
    let cover = minimal_cover(rho, k);
    if cover.squares.len() > 1 {
        let thr = 2.0 * params.m * 2f64.powf(params.alpha * (k as f64 + 1.0));
        return cover
            .squares
            .iter()
            .filter(|s| cover.squares.iter().all(|t| t == *s || t.distance(s) as f64 >= thr))
            .copied()
            .collect();
    }
    if rho.charge() == 0 {
        return Vec::new();
    }
    let reach = 2f64.powi(k as i32 + 1);
    if rho.dist_to_boundary() as f64 >= reach {
        cover.squares
    } else {
        Vec::new()
    }
}

/// `n(ρ) = ⌈log₂(M d_Λ(ρ)^α)⌉`.
pub fn scale_count(rho: &ChargeDensity, params: &RenormParams) -> u32 {
    let x = params.m.log2() + params.alpha * (rho.d_lambda() as f64).log2();
    (x - 1e-12).ceil().max(0.0) as u32
}

/// `(n(ρ), A(ρ))`, checking `log₂(d_Λ(ρ) + 1) <= A(ρ)`.
pub fn activity(rho: &ChargeDensity, params: &RenormParams) -> Result<(u32, usize)> {
    RenormParams::new(params.alpha, params.m)?;
    let n = scale_count(rho, params);
    let a: usize = (0..=n).map(|k| minimal_cover(rho, k).squares.len()).sum();
    if ((rho.d_lambda() + 1) as f64).log2() > a as f64 {
        return Err(Error::Internal(format!("activity {a} below log2(d_Λ + 1) for d_Λ = {}", rho.d_lambda())));
    }
    Ok((n, a))
}
