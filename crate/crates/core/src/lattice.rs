//! Square domains, sub-domains, lattice fields and the graph Laplacian.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Lattice site. Ordering is lexicographic in `(x, y)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Vertex {
    pub x: usize,
    pub y: usize,
}

impl Vertex {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }

    /// Manhattan distance, which is the graph distance on a square box.
    pub fn manhattan(self, other: Vertex) -> usize {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Topology {
    /// Values on the outer ring of the box are prescribed.
    ZeroBoundary,
    /// Open box; the field is pinned to zero at one vertex.
    FreePinned(Vertex),
    /// Torus (even side); the field is pinned to zero at one vertex.
    PeriodicPinned(Vertex),
}

impl Topology {
    pub fn name(&self) -> &'static str {
        match self {
            Topology::ZeroBoundary => "zero",
            Topology::FreePinned(_) => "free",
            Topology::PeriodicPinned(_) => "periodic",
        }
    }
}

/// Square box `{0..L-1}^2` with nearest-neighbour adjacency.
#[derive(Clone, Debug)]
pub struct SquareDomain {
    side: usize,
    topology: Topology,
    neighbors: Vec<[u32; 4]>,
    degree: Vec<u8>,
    boundary: Vec<bool>,
}

impl SquareDomain {
    pub fn new(side: usize, topology: Topology) -> Result<Self> {
        if side <= 2 {
            return Err(Error::InvalidSize(format!("side length {side} must exceed 2")));
        }
        let periodic = matches!(topology, Topology::PeriodicPinned(_));
        if periodic && side % 2 == 1 {
            return Err(Error::InvalidParity(format!("periodic domain needs even side, got {side}")));
        }
        if let Topology::FreePinned(v) | Topology::PeriodicPinned(v) = topology {
            if v.x >= side || v.y >= side {
                return Err(Error::InvalidArgument(format!("pin vertex {v:?} outside domain")));
            }
        }
        let n = side * side;
        let mut neighbors = vec![[u32::MAX; 4]; n];
        let mut degree = vec![0u8; n];
        let mut boundary = vec![false; n];
        for y in 0..side {
            for x in 0..side {
                let i = y * side + x;
                boundary[i] = !periodic && (x == 0 || y == 0 || x == side - 1 || y == side - 1);
                let mut push = |nx: usize, ny: usize| {
                    neighbors[i][degree[i] as usize] = (ny * side + nx) as u32;
                    degree[i] += 1;
                };
                if periodic {
                    push((x + side - 1) % side, y);
                    push((x + 1) % side, y);
                    push(x, (y + side - 1) % side);
                    push(x, (y + 1) % side);
                } else {
                    if x > 0 {
                        push(x - 1, y);
                    }
                    if x + 1 < side {
                        push(x + 1, y);
                    }
                    if y > 0 {
                        push(x, y - 1);
                    }
                    if y + 1 < side {
                        push(x, y + 1);
                    }
                }
            }
        }
        Ok(Self { side, topology, neighbors, degree, boundary })
    }

    pub fn zero_boundary(side: usize) -> Result<Self> {
        Self::new(side, Topology::ZeroBoundary)
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn len(&self) -> usize {
        self.side * self.side
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, v: Vertex) -> usize {
        debug_assert!(self.contains(v));
        v.y * self.side + v.x
    }

    pub fn vertex(&self, i: usize) -> Vertex {
        Vertex::new(i % self.side, i / self.side)
    }

    pub fn contains(&self, v: Vertex) -> bool {
        v.x < self.side && v.y < self.side
    }

    pub fn vertices(&self) -> impl Iterator<Item = Vertex> + '_ {
        (0..self.len()).map(move |i| self.vertex(i))
    }

    /// Neighbour indices of site `i`.
    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.neighbors[i][..self.degree[i] as usize]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.degree[i] as usize
    }

    /// Outer ring of the box (empty on the torus).
    pub fn is_boundary(&self, v: Vertex) -> bool {
        self.boundary[self.index(v)]
    }

    pub fn is_boundary_index(&self, i: usize) -> bool {
        self.boundary[i]
    }

    pub fn boundary(&self) -> Vec<Vertex> {
        self.vertices().filter(|&v| self.is_boundary(v)).collect()
    }

    pub fn interior(&self) -> Vec<Vertex> {
        self.vertices().filter(|&v| !self.is_boundary(v)).collect()
    }

    /// Pinned vertex for free and periodic topologies.
    pub fn pin(&self) -> Option<Vertex> {
        match self.topology {
            Topology::ZeroBoundary => None,
            Topology::FreePinned(v) | Topology::PeriodicPinned(v) => Some(v),
        }
    }

    /// Sites whose height is held fixed by the boundary condition.
    pub fn is_fixed_index(&self, i: usize) -> bool {
        match self.topology {
            Topology::ZeroBoundary => self.boundary[i],
            Topology::FreePinned(v) | Topology::PeriodicPinned(v) => i == self.index(v),
        }
    }

    /// Undirected edges `(i, j)` with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(2 * self.len());
        for i in 0..self.len() {
            for &j in self.neighbors(i) {
                if (i as u32) < j {
                    out.push((i, j as usize));
                }
            }
        }
        out
    }

    /// Graph distance between two vertices.
    pub fn distance(&self, a: Vertex, b: Vertex) -> usize {
        match self.topology {
            Topology::PeriodicPinned(_) => {
                let dx = a.x.abs_diff(b.x);
                let dy = a.y.abs_diff(b.y);
                dx.min(self.side - dx) + dy.min(self.side - dy)
            }
            _ => a.manhattan(b),
        }
    }

    /// Distance from every site to the nearest source, by multi-source BFS.
    pub fn distance_map(&self, sources: &[Vertex]) -> Result<Vec<usize>> {
        if sources.is_empty() {
            return Err(Error::InvalidArgument("distance to an empty set".into()));
        }
        let mut dist = vec![usize::MAX; self.len()];
        let mut queue = VecDeque::new();
        for &s in sources {
            if !self.contains(s) {
                return Err(Error::InvalidArgument(format!("vertex {s:?} outside domain")));
            }
            let i = self.index(s);
            if dist[i] != 0 {
                dist[i] = 0;
                queue.push_back(i);
            }
        }
        while let Some(i) = queue.pop_front() {
            for &j in self.neighbors(i) {
                let j = j as usize;
                if dist[j] == usize::MAX {
                    dist[j] = dist[i] + 1;
                    queue.push_back(j);
                }
            }
        }
        Ok(dist)
    }

    /// Set-to-set graph distance `min_{a in A, b in B} dist(a, b)`.
    pub fn set_distance(&self, a: &[Vertex], b: &[Vertex]) -> Result<usize> {
        if b.is_empty() {
            return Err(Error::InvalidArgument("distance to an empty set".into()));
        }
        let map = self.distance_map(a)?;
        Ok(b.iter().map(|&v| map[self.index(v)]).min().unwrap_or(usize::MAX))
    }

    /// Distance from `v` to the outer ring.
    pub fn distance_to_boundary(&self, v: Vertex) -> usize {
        let l = self.side - 1;
        v.x.min(v.y).min(l - v.x).min(l - v.y)
    }

    /// `(Δf)_j = Σ_{l~j} (f_l - f_j)` at every site.
    pub fn laplacian<T: Scalar>(&self, f: &RealField<T>) -> RealField<T> {
        assert_eq!(f.side(), self.side, "field does not match domain");
        let mut out = RealField::zeros(self.side);
        for i in 0..self.len() {
            let fi = f.values[i];
            let mut acc = T::zero();
            for &j in self.neighbors(i) {
                acc += f.values[j as usize] - fi;
            }
            out.values[i] = acc;
        }
        out
    }

    /// `Σ_{j~l} (g_j - g_l)^2` over undirected edges.
    pub fn dirichlet_energy<T: Scalar>(&self, g: &RealField<T>) -> T {
        self.edges()
            .into_iter()
            .map(|(i, j)| {
                let d = g.values[i] - g.values[j];
                d * d
            })
            .sum()
    }

    /// Disjoint side-`r` boxes `Π_{0,0} + r(x, y)` for `0 <= x, y < floor(L/r)`.
    pub fn grid_partition(&self, r: usize) -> Result<Vec<SubDomain>> {
        if r == 0 || r > self.side {
            return Err(Error::InvalidSize(format!("box side {r} not in 1..={}", self.side)));
        }
        let m = self.side / r;
        let mut out = Vec::with_capacity(m * m);
        for by in 0..m {
            for bx in 0..m {
                out.push(SubDomain::new(Vertex::new(bx * r, by * r), r));
            }
        }
        Ok(out)
    }
}

/// Axis-aligned square `origin + {0..side-1}^2` inside a parent box.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SubDomain {
    pub origin: Vertex,
    pub side: usize,
}

impl SubDomain {
    pub const fn new(origin: Vertex, side: usize) -> Self {
        Self { origin, side }
    }

    /// Box of side `side` whose center (per [`SubDomain::center`]) is `center`.
    pub fn centered(center: Vertex, side: usize) -> Option<Self> {
        let off = side.saturating_sub(1) / 2;
        Some(Self::new(
            Vertex::new(center.x.checked_sub(off)?, center.y.checked_sub(off)?),
            side,
        ))
    }

    /// Center `c` with `c - origin = floor((side - 1) / 2)` in both coordinates.
    pub fn center(&self) -> Vertex {
        let off = (self.side - 1) / 2;
        Vertex::new(self.origin.x + off, self.origin.y + off)
    }

    pub fn fits_in(&self, side: usize) -> bool {
        self.side >= 1 && self.origin.x + self.side <= side && self.origin.y + self.side <= side
    }

    pub fn contains(&self, v: Vertex) -> bool {
        v.x >= self.origin.x
            && v.y >= self.origin.y
            && v.x < self.origin.x + self.side
            && v.y < self.origin.y + self.side
    }

    pub fn contains_sub(&self, other: &SubDomain) -> bool {
        other.side >= 1
            && self.contains(other.origin)
            && self.contains(Vertex::new(other.origin.x + other.side - 1, other.origin.y + other.side - 1))
    }

    pub fn is_boundary(&self, v: Vertex) -> bool {
        self.contains(v) && {
            let l = self.to_local(v);
            l.x == 0 || l.y == 0 || l.x == self.side - 1 || l.y == self.side - 1
        }
    }

    pub fn is_interior(&self, v: Vertex) -> bool {
        self.contains(v) && !self.is_boundary(v)
    }

    pub fn to_local(&self, v: Vertex) -> Vertex {
        Vertex::new(v.x - self.origin.x, v.y - self.origin.y)
    }

    pub fn to_global(&self, v: Vertex) -> Vertex {
        Vertex::new(v.x + self.origin.x, v.y + self.origin.y)
    }

    pub fn vertices(&self) -> impl Iterator<Item = Vertex> + '_ {
        (0..self.side * self.side)
            .map(move |i| Vertex::new(self.origin.x + i % self.side, self.origin.y + i / self.side))
    }

    pub fn boundary(&self) -> Vec<Vertex> {
        self.vertices().filter(|&v| self.is_boundary(v)).collect()
    }

    pub fn interior(&self) -> Vec<Vertex> {
        self.vertices().filter(|&v| self.is_interior(v)).collect()
    }

    /// Distance from `v` (inside) to the box's own boundary ring.
    pub fn distance_to_boundary(&self, v: Vertex) -> usize {
        let l = self.to_local(v);
        let m = self.side - 1;
        l.x.min(l.y).min(m - l.x).min(m - l.y)
    }

    /// The box as a stand-alone zero-boundary domain in local coordinates.
    pub fn as_domain(&self) -> Result<SquareDomain> {
        SquareDomain::zero_boundary(self.side)
    }
}

/// Real-valued field on a square box, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct RealField<T> {
    side: usize,
    pub values: Vec<T>,
}

impl<T: Scalar> RealField<T> {
    pub fn zeros(side: usize) -> Self {
        Self { side, values: vec![T::zero(); side * side] }
    }

    pub fn constant(side: usize, c: T) -> Self {
        Self { side, values: vec![c; side * side] }
    }

    pub fn from_values(side: usize, values: Vec<T>) -> Self {
        assert_eq!(values.len(), side * side);
        Self { side, values }
    }

    pub fn from_fn(side: usize, mut f: impl FnMut(Vertex) -> T) -> Self {
        let values = (0..side * side).map(|i| f(Vertex::new(i % side, i / side))).collect();
        Self { side, values }
    }

    pub fn delta(side: usize, v: Vertex) -> Self {
        let mut out = Self::zeros(side);
        out[v] = T::one();
        out
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn dot(&self, other: &Self) -> T {
        self.values.iter().zip(&other.values).map(|(&a, &b)| a * b).sum()
    }

    pub fn norm(&self) -> T {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
    }

    pub fn scaled(&self, c: T) -> Self {
        Self { side: self.side, values: self.values.iter().map(|&v| v * c).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            side: self.side,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            side: self.side,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| a - b).collect(),
        }
    }

    pub fn sum(&self) -> T {
        self.values.iter().copied().sum()
    }
}

impl<T> std::ops::Index<Vertex> for RealField<T> {
    type Output = T;
    fn index(&self, v: Vertex) -> &T {
        &self.values[v.y * self.side + v.x]
    }
}

impl<T> std::ops::IndexMut<Vertex> for RealField<T> {
    fn index_mut(&mut self, v: Vertex) -> &mut T {
        &mut self.values[v.y * self.side + v.x]
    }
}

/// Integer-valued field on a square box, row-major.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct IntField {
    side: usize,
    pub values: Vec<i64>,
}

impl IntField {
    pub fn zeros(side: usize) -> Self {
        Self { side, values: vec![0; side * side] }
    }

    pub fn constant(side: usize, c: i64) -> Self {
        Self { side, values: vec![c; side * side] }
    }

    pub fn from_fn(side: usize, mut f: impl FnMut(Vertex) -> i64) -> Self {
        let values = (0..side * side).map(|i| f(Vertex::new(i % side, i / side))).collect();
        Self { side, values }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn negated(&self) -> Self {
        Self { side: self.side, values: self.values.iter().map(|v| -v).collect() }
    }

    pub fn to_real<T: Scalar>(&self) -> RealField<T> {
        RealField::from_values(self.side, self.values.iter().map(|&v| T::of(v as f64)).collect())
    }

    /// Pointwise `self <= other`.
    pub fn le(&self, other: &Self) -> bool {
        self.values.iter().zip(&other.values).all(|(a, b)| a <= b)
    }
}

impl std::ops::Index<Vertex> for IntField {
    type Output = i64;
    fn index(&self, v: Vertex) -> &i64 {
        &self.values[v.y * self.side + v.x]
    }
}

impl std::ops::IndexMut<Vertex> for IntField {
    fn index_mut(&mut self, v: Vertex) -> &mut i64 {
        &mut self.values[v.y * self.side + v.x]
    }
}

/// One layer of the nested-annulus schedule.
#[derive(Clone, Debug)]
pub struct AnnulusLayer {
    /// `A_k`: sites of `Λ_k` within `width` of `∂Λ_k`.
    pub annulus: Vec<Vertex>,
    /// `Λ_k`.
    pub region: SubDomain,
    /// Integer annulus width `max(1, floor(L^{δ_k}))`.
    pub width: usize,
    pub delta: f64,
    pub b: f64,
}

/// Exponents `δ_k = 9 (δ/9)^{2^{N-k}}` for `k = 1..=N`.
pub fn delta_sequence(n: usize, delta: f64) -> Vec<f64> {
    (1..=n).map(|k| 9.0 * (delta / 9.0).powf(2f64.powi((n - k) as i32))).collect()
}

/// Nested boxes `Λ_1 = Λ ⊇ Λ_2 ⊇ ...` peeled by annuli of width `L^{δ_k}`.
pub fn annulus_schedule(side: usize, n: usize, delta: f64) -> Result<Vec<AnnulusLayer>> {
    if n < 1 {
        return Err(Error::InvalidParameter("layer count must be at least 1".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!("delta {delta} not in (0,1)")));
    }
    let deltas = delta_sequence(n, delta);
    let mut region = SubDomain::new(Vertex::new(0, 0), side);
    let mut b = 0.0;
    let mut out = Vec::with_capacity(n);
    for (k, &dk) in deltas.iter().enumerate() {
        if k > 0 {
            b += 2.0 * deltas[k - 1].sqrt();
        }
        if region.side < 3 {
            return Err(Error::DomainTooSmall(format!(
                "layer {} has side {} for L={side}, N={n}, delta={delta}",
                k + 1,
                region.side
            )));
        }
        let width = ((side as f64).powf(dk).floor() as usize).max(1);
        let annulus = region.vertices().filter(|&v| region.distance_to_boundary(v) <= width).collect();
        out.push(AnnulusLayer { annulus, region, width, delta: dk, b });
        let shrink = width + 1;
        region = SubDomain::new(
            Vertex::new(region.origin.x + shrink, region.origin.y + shrink),
            region.side.saturating_sub(2 * shrink),
        );
    }
    Ok(out)
}
