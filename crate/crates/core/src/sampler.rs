//! Exact Gaussian sampling, heat-bath Gibbs sampling of the integer-valued
//! field, monotone coupling and exact enumeration on tiny boxes.

use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::harmonic::GreensTable;
use crate::lattice::{IntField, RealField, SquareDomain, Topology, Vertex};
use crate::solver::{Backend, DirichletSolver};

/// Largest configuration count accepted by [`TruncatedMeasure::enumerate`].
pub const ENUMERATION_LIMIT: usize = 10_000_000;

/// Independent random stream for replica `replica` of a run seeded with `seed`.
pub fn replica_rng(seed: u64, replica: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

/// Law of `a ∈ ℤ` with weight `exp(-(βd/2)(a - μ)²)`, stored relative to `floor(μ)`.
///
/// Sampling is by inverse CDF: a table over the window `μ ± ⌈8/√(βd)⌉` and an
/// explicit walk through the tails, so a shared uniform yields a monotone coupling.
#[derive(Clone, Debug)]
pub struct SiteLaw {
    lo: i64,
    cdf: Vec<f64>,
    left_tail: f64,
    half_prec: f64,
    shift: f64,
    log_z: f64,
}

impl SiteLaw {
    /// Law for `d` neighbours whose heights sum to `s`.
    pub fn new(beta: f64, d: usize, s: i64) -> Self {
        let d_i = d as i64;
        let r = s.rem_euclid(d_i);
        Self::with_shift(beta, d, r as f64 / d as f64)
    }

    fn with_shift(beta: f64, d: usize, shift: f64) -> Self {
        let prec = beta * d as f64;
        let half_prec = 0.5 * prec;
        let w = (8.0 / prec.sqrt()).ceil() as i64;
        let raw = |a: i64| (-half_prec * (a as f64 - shift).powi(2)).exp();
        let window: Vec<f64> = (-w..=w + 1).map(raw).collect();
        let tail = |start: i64, step: i64| {
            let mut acc = 0.0;
            let mut a = start;
            loop {
                let t = raw(a);
                acc += t;
                if t == 0.0 || t < 1e-25 * acc.max(1e-300) {
                    break acc;
                }
                a += step;
            }
        };
        let left = tail(-w - 1, -1);
        let right = tail(w + 2, 1);
        let z = left + window.iter().sum::<f64>() + right;
        let mut cdf = Vec::with_capacity(window.len());
        let mut acc = left / z;
        for p in &window {
            acc += p / z;
            cdf.push(acc);
        }
        Self { lo: -w, cdf, left_tail: left / z, half_prec, shift, log_z: z.ln() }
    }

    /// Probability of offset `a` from `floor(μ)`.
    pub fn prob(&self, a: i64) -> f64 {
        (-self.half_prec * (a as f64 - self.shift).powi(2) - self.log_z).exp()
    }

    /// Smallest offset `a` with `P(X <= a) > u`.
    pub fn inverse_cdf(&self, u: f64) -> i64 {
        if u < self.left_tail {
            let mut a = self.lo - 1;
            let mut f = self.left_tail;
            loop {
                let p = self.prob(a);
                if p == 0.0 || f - p <= u {
                    return a;
                }
                f -= p;
                a -= 1;
            }
        }
        let k = self.cdf.partition_point(|&c| c <= u);
        if k < self.cdf.len() {
            return self.lo + k as i64;
        }
        let mut a = self.lo + self.cdf.len() as i64;
        let mut f = *self.cdf.last().expect("nonempty window");
        loop {
            let p = self.prob(a);
            f += p;
            if p == 0.0 || f > u {
                return a;
            }
            a += 1;
        }
    }
}

/// Site laws for every degree `1..=4` and residue of the neighbour sum.
#[derive(Clone, Debug)]
pub struct ConditionalTable {
    beta: f64,
    laws: Vec<Vec<SiteLaw>>,
}

impl ConditionalTable {
    pub fn new(beta: f64) -> Result<Self> {
        check_beta(beta)?;
        let laws = (0..=4usize)
            .map(|d| (0..d).map(|r| SiteLaw::new(beta, d, r as i64)).collect())
            .collect();
        Ok(Self { beta, laws })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Height drawn with uniform `u` for a site with `d` neighbours summing to `s`.
    #[inline]
    pub fn sample(&self, d: usize, s: i64, u: f64) -> i64 {
        let d_i = d as i64;
        s.div_euclid(d_i) + self.laws[d][s.rem_euclid(d_i) as usize].inverse_cdf(u)
    }

    /// Conditional probability of height `a` given `d` neighbours summing to `s`.
    pub fn prob(&self, d: usize, s: i64, a: i64) -> f64 {
        let d_i = d as i64;
        self.laws[d][s.rem_euclid(d_i) as usize].prob(a - s.div_euclid(d_i))
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidParameter(format!("inverse temperature {beta} must be positive")));
    }
    Ok(())
}

/// Exact draw from the single-site conditional given the neighbour heights.
pub fn site_conditional_sample<R: Rng + ?Sized>(neighbors: &[i64], beta: f64, rng: &mut R) -> Result<i64> {
    check_beta(beta)?;
    let d = neighbors.len();
    if !(1..=4).contains(&d) {
        return Err(Error::InvalidArgument(format!("site degree {d} not in 1..=4")));
    }
    let s: i64 = neighbors.iter().sum();
    let law = SiteLaw::new(beta, d, s);
    Ok(s.div_euclid(d as i64) + law.inverse_cdf(rng.gen::<f64>()))
}

/// Exact sampler for the real-valued field with boundary data `h`.
#[derive(Debug)]
pub struct GaussianSampler {
    solver: DirichletSolver<f64>,
    mean: RealField<f64>,
    scale: f64,
}

impl GaussianSampler {
    /// Field on a zero-boundary domain with mean `h̃` and covariance `G/β` off the boundary.
    pub fn new(domain: &SquareDomain, beta: f64, h: &RealField<f64>) -> Result<Self> {
        check_beta(beta)?;
        let killed: Vec<bool> = (0..domain.len()).map(|i| domain.is_fixed_index(i)).collect();
        let table = GreensTable::<f64>::killed_on(domain, killed.clone(), Backend::Auto)?;
        let mut mean = table.harmonic_extension(h)?;
        if domain.topology() != Topology::ZeroBoundary {
            for i in 0..domain.len() {
                if killed[i] {
                    mean.values[i] = 0.0;
                }
            }
        }
        let solver = DirichletSolver::new(domain, &killed, Backend::BandedCholesky)?;
        Ok(Self { solver, mean, scale: 1.0 / beta.sqrt() })
    }

    pub fn mean(&self) -> &RealField<f64> {
        &self.mean
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> RealField<f64> {
        let z: Vec<f64> = (0..self.solver.unknowns()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let x = self.solver.solve_factor_transpose(&z).expect("factor present");
        let mut out = self.mean.clone();
        for (u, xu) in x.into_iter().enumerate() {
            out.values[self.solver.site(u)] += self.scale * xu;
        }
        out
    }
}

/// One exact sample of the real-valued field (see [`GaussianSampler`]).
pub fn gff_sample_exact<R: Rng + ?Sized>(
    domain: &SquareDomain,
    beta: f64,
    h: &RealField<f64>,
    rng: &mut R,
) -> Result<RealField<f64>> {
    Ok(GaussianSampler::new(domain, beta, h)?.sample(rng))
}

/// Heat-bath Markov chain for the integer-valued field.
#[derive(Clone, Debug)]
pub struct ChainState {
    domain: Arc<SquareDomain>,
    table: Arc<ConditionalTable>,
    heights: IntField,
    colors: [Vec<u32>; 2],
    sweeps: u64,
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

#[derive(Serialize)]
struct ChainMetadata<'a> {
    seed: u64,
    stream: u64,
    beta: f64,
    sweeps: u64,
    side: usize,
    topology: &'a str,
    pin: Option<[usize; 2]>,
}

impl ChainState {
    /// Chain started from zero off the fixed sites. `boundary` supplies the fixed
    /// heights on `∂Λ` for zero-boundary domains; pinned topologies fix the pin to 0.
    pub fn new(domain: Arc<SquareDomain>, beta: f64, boundary: &IntField, seed: u64, stream: u64) -> Result<Self> {
        let table = Arc::new(ConditionalTable::new(beta)?);
        Self::with_table(domain, table, boundary, seed, stream)
    }

    /// As [`ChainState::new`], sharing a precomputed conditional table.
    pub fn with_table(
        domain: Arc<SquareDomain>,
        table: Arc<ConditionalTable>,
        boundary: &IntField,
        seed: u64,
        stream: u64,
    ) -> Result<Self> {
        if boundary.side() != domain.side() {
            return Err(Error::InvalidArgument("boundary field does not match domain".into()));
        }
        let mut heights = IntField::zeros(domain.side());
        let mut colors = [Vec::new(), Vec::new()];
        for i in 0..domain.len() {
            if domain.is_fixed_index(i) {
                heights.values[i] = if domain.topology() == Topology::ZeroBoundary { boundary.values[i] } else { 0 };
            } else {
                let v = domain.vertex(i);
                colors[(v.x + v.y) % 2].push(i as u32);
            }
        }
        Ok(Self { domain, table, heights, colors, sweeps: 0, seed, stream, rng: replica_rng(seed, stream) })
    }

    pub fn domain(&self) -> &SquareDomain {
        &self.domain
    }

    pub fn beta(&self) -> f64 {
        self.table.beta()
    }

    pub fn heights(&self) -> &IntField {
        &self.heights
    }

    pub fn sweep_count(&self) -> u64 {
        self.sweeps
    }

    /// Replaces the free heights; fixed sites must keep their values.
    pub fn set_heights(&mut self, heights: IntField) -> Result<()> {
        if heights.side() != self.domain.side() {
            return Err(Error::InvalidArgument("height field does not match domain".into()));
        }
        for i in 0..self.domain.len() {
            if self.domain.is_fixed_index(i) && heights.values[i] != self.heights.values[i] {
                return Err(Error::InvalidArgument(format!(
                    "height at fixed site {:?} would change",
                    self.domain.vertex(i)
                )));
            }
        }
        self.heights = heights;
        Ok(())
    }

    #[inline]
    fn neighbor_sum(&self, i: usize) -> (usize, i64) {
        let nb = self.domain.neighbors(i);
        (nb.len(), nb.iter().map(|&j| self.heights.values[j as usize]).sum())
    }

    /// One systematic checkerboard sweep.
    pub fn sweep(&mut self) {
        for c in 0..2 {
            for k in 0..self.colors[c].len() {
                let i = self.colors[c][k] as usize;
                let (d, s) = self.neighbor_sum(i);
                let u = self.rng.gen::<f64>();
                self.heights.values[i] = self.table.sample(d, s, u);
            }
        }
        self.sweeps += 1;
    }

    /// Applies `sweeps` sweeps.
    pub fn run(&mut self, sweeps: u64) {
        for _ in 0..sweeps {
            self.sweep();
        }
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Writes `x,y,height` for every site.
    pub fn write_snapshot<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e: std::io::Error| Error::Internal(e.to_string());
        writeln!(out, "x,y,height").map_err(io)?;
        for v in self.domain.vertices() {
            writeln!(out, "{},{},{}", v.x, v.y, self.heights[v]).map_err(io)?;
        }
        Ok(())
    }

    /// Seed, stream, beta, sweep count and topology as JSON.
    pub fn metadata_json(&self) -> String {
        let meta = ChainMetadata {
            seed: self.seed,
            stream: self.stream,
            beta: self.beta(),
            sweeps: self.sweeps,
            side: self.domain.side(),
            topology: self.domain.topology().name(),
            pin: self.domain.pin().map(|v| [v.x, v.y]),
        };
        serde_json::to_string(&meta).expect("metadata serializes")
    }
}

/// Applies `sweeps` sweeps to `state`.
pub fn run_chain(mut state: ChainState, sweeps: u64) -> ChainState {
    state.run(sweeps);
    state
}

/// Returns `field` or its negation with probability 1/2 each.
pub fn symmetrize<R: Rng + ?Sized>(field: &IntField, rng: &mut R) -> IntField {
    if rng.gen::<bool>() {
        field.clone()
    } else {
        field.negated()
    }
}

/// One coupled sweep: both chains update the same site with the same uniform.
///
/// The uniforms come from `lo`'s generator; `hi`'s generator is synchronized to it
/// afterwards. Pointwise order `lo <= hi` is preserved and re-verified.
pub fn coupled_step(lo: &mut ChainState, hi: &mut ChainState) -> Result<()> {
    let same = lo.domain.side() == hi.domain.side()
        && lo.domain.topology() == hi.domain.topology()
        && lo.beta() == hi.beta();
    if !same {
        return Err(Error::InvalidCoupling("chains differ in domain or beta".into()));
    }
    if !lo.heights.le(&hi.heights) {
        return Err(Error::InvalidCoupling("input heights are not ordered".into()));
    }
    for c in 0..2 {
        for k in 0..lo.colors[c].len() {
            let i = lo.colors[c][k] as usize;
            let u = lo.rng.gen::<f64>();
            let (d, s_lo) = lo.neighbor_sum(i);
            let (_, s_hi) = hi.neighbor_sum(i);
            lo.heights.values[i] = lo.table.sample(d, s_lo, u);
            hi.heights.values[i] = hi.table.sample(d, s_hi, u);
        }
    }
    lo.sweeps += 1;
    hi.sweeps += 1;
    hi.rng = lo.rng.clone();
    if !lo.heights.le(&hi.heights) {
        return Err(Error::InvalidCoupling(format!("order lost at sweep {}", lo.sweeps)));
    }
    Ok(())
}

/// Exact law of the field on a tiny box restricted to heights in `[-H, H]`.
#[derive(Clone, Debug)]
pub struct TruncatedMeasure {
    side: usize,
    topology: Topology,
    beta: f64,
    cap: i64,
    boundary: IntField,
    free: Vec<usize>,
    probs: Vec<f64>,
    trunc_bound: f64,
    dmin: usize,
    hmax: i64,
}

impl TruncatedMeasure {
    /// Enumerates every configuration of the free sites in `{-H..H}`.
    pub fn enumerate(domain: &SquareDomain, beta: f64, boundary: &IntField, cap: i64) -> Result<Self> {
        check_beta(beta)?;
        if cap < 1 {
            return Err(Error::InvalidParameter(format!("height cap {cap} must be at least 1")));
        }
        let free: Vec<usize> = (0..domain.len()).filter(|&i| !domain.is_fixed_index(i)).collect();
        let base = (2 * cap + 1) as usize;
        let count = (0..free.len()).try_fold(1usize, |acc, _| acc.checked_mul(base).filter(|&c| c <= ENUMERATION_LIMIT));
        let Some(count) = count else {
            return Err(Error::TooLarge(format!(
                "{base}^{} configurations exceed {ENUMERATION_LIMIT}",
                free.len()
            )));
        };
        let mut fixed = IntField::zeros(domain.side());
        for i in 0..domain.len() {
            if domain.is_fixed_index(i) && domain.topology() == Topology::ZeroBoundary {
                fixed.values[i] = boundary.values[i];
            }
        }
        let edges = domain.edges();
        let mut heights = fixed.clone();
        let mut logw = Vec::with_capacity(count);
        for idx in 0..count {
            decode(idx, cap, &free, &mut heights.values);
            let e: i64 = edges.iter().map(|&(a, b)| (heights.values[a] - heights.values[b]).pow(2)).sum();
            logw.push(-0.5 * beta * e as f64);
        }
        let m = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut probs: Vec<f64> = logw.iter().map(|&l| (l - m).exp()).collect();
        let z: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= z);

        let hmax = free
            .iter()
            .flat_map(|&i| domain.neighbors(i).iter())
            .filter(|&&j| domain.is_fixed_index(j as usize))
            .map(|&j| fixed.values[j as usize].abs())
            .max()
            .unwrap_or(0);
        let dmin = free.iter().map(|&i| domain.degree(i)).min().unwrap_or(4);
        let trunc_bound = free.len() as f64 * tail_mass(beta, dmin, cap - hmax, 0.0);
        Ok(Self {
            side: domain.side(),
            topology: domain.topology(),
            beta,
            cap,
            boundary: fixed,
            free,
            probs,
            trunc_bound,
            dmin,
            hmax,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn cap(&self) -> i64 {
        self.cap
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn free_sites(&self) -> &[usize] {
        &self.free
    }

    /// Envelope estimate of the probability mass outside the height window.
    pub fn trunc_bound(&self) -> f64 {
        self.trunc_bound
    }

    /// Envelope estimate of the window error for an expectation of `e^{⟨m,f⟩}`
    /// with `‖f‖₁ = tilt`: excluded heights weighted by `e^{tilt (|a| + max|h|)}`.
    pub fn mgf_trunc_bound(&self, tilt: f64) -> f64 {
        let scale = (tilt * self.hmax as f64).exp();
        self.free.len() as f64 * scale * tail_mass(self.beta, self.dmin, self.cap - self.hmax, tilt)
    }

    /// Full height field of configuration `idx`.
    pub fn configuration(&self, idx: usize) -> IntField {
        let mut h = self.boundary.clone();
        decode(idx, self.cap, &self.free, &mut h.values);
        h
    }

    /// `Σ_m P(m) F(m)`.
    pub fn expectation(&self, mut f: impl FnMut(&IntField) -> f64) -> f64 {
        let mut h = self.boundary.clone();
        let mut acc = 0.0;
        for (idx, &p) in self.probs.iter().enumerate() {
            decode(idx, self.cap, &self.free, &mut h.values);
            acc += p * f(&h);
        }
        acc
    }

    /// Marginal of site `v`, indexed by height `a + H`.
    pub fn marginal(&self, v: Vertex) -> Result<Vec<f64>> {
        let i = v.y * self.side + v.x;
        let pos = self
            .free
            .iter()
            .position(|&s| s == i)
            .ok_or_else(|| Error::InvalidArgument(format!("{v:?} is not a free site")))?;
        let base = (2 * self.cap + 1) as usize;
        let stride = base.pow(pos as u32);
        let mut out = vec![0.0; base];
        for (idx, &p) in self.probs.iter().enumerate() {
            out[(idx / stride) % base] += p;
        }
        Ok(out)
    }

    fn same_space(&self, other: &Self) -> bool {
        self.side == other.side && self.topology == other.topology && self.cap == other.cap && self.free == other.free
    }

    /// Copy with configuration `idx` reweighted by `factor` and renormalized.
    pub fn reweighted(&self, idx: usize, factor: f64) -> Self {
        let mut out = self.clone();
        out.probs[idx] *= factor;
        let z: f64 = out.probs.iter().sum();
        out.probs.iter_mut().for_each(|p| *p /= z);
        out
    }

    /// Index of a free-site configuration given as a full field.
    pub fn index_of(&self, h: &IntField) -> Option<usize> {
        let base = 2 * self.cap + 1;
        let mut idx = 0i64;
        for &i in self.free.iter().rev() {
            let a = h.values[i];
            if a.abs() > self.cap {
                return None;
            }
            idx = idx * base + (a + self.cap);
        }
        Some(idx as usize)
    }
}

fn decode(mut idx: usize, cap: i64, free: &[usize], out: &mut [i64]) {
    let base = (2 * cap + 1) as usize;
    for &i in free {
        out[i] = (idx % base) as i64 - cap;
        idx /= base;
    }
}

/// `E[e^{tilt |X|}; |X| > t]` for `X` with weights `exp(-(βd/2)a²)` on ℤ.
fn tail_mass(beta: f64, d: usize, t: i64, tilt: f64) -> f64 {
    let t = t.max(0);
    let law = SiteLaw::with_shift(beta, d, 0.0);
    let mut acc = 0.0;
    let mut a = t + 1;
    loop {
        let p = (law.prob(a).ln() + tilt * a as f64).exp();
        acc += 2.0 * p;
        if p == 0.0 || p < 1e-25 * acc {
            break acc;
        }
        a += 1;
    }
}

/// Holley's lattice condition `μ₁(m ∧ m′) μ₂(m ∨ m′) >= μ₁(m) μ₂(m′)` over all pairs,
/// with relative slack `1e-12`.
pub fn holley_check(mu1: &TruncatedMeasure, mu2: &TruncatedMeasure) -> Result<bool> {
    if !mu1.same_space(mu2) {
        return Err(Error::InvalidArgument("measures live on different configuration spaces".into()));
    }
    let n = mu1.len();
    if n.checked_mul(n).map_or(true, |p| p > 4_000_000_000) {
        return Err(Error::TooLarge(format!("{n}^2 configuration pairs")));
    }
    let base = (2 * mu1.cap + 1) as usize;
    let sites = mu1.free.len();
    let digits = |mut idx: usize| {
        let mut d = Vec::with_capacity(sites);
        for _ in 0..sites {
            d.push(idx % base);
            idx /= base;
        }
        d
    };
    let all: Vec<Vec<usize>> = (0..n).map(digits).collect();
    let encode = |d: &mut dyn Iterator<Item = usize>| {
        let v: Vec<usize> = d.collect();
        v.iter().rev().fold(0usize, |acc, &x| acc * base + x)
    };
    for a in 0..n {
        for b in 0..n {
            let meet = encode(&mut all[a].iter().zip(&all[b]).map(|(x, y)| *x.min(y)));
            let join = encode(&mut all[a].iter().zip(&all[b]).map(|(x, y)| *x.max(y)));
            let lhs = mu1.probs[meet] * mu2.probs[join];
            let rhs = mu1.probs[a] * mu2.probs[b];
            if lhs < rhs * (1.0 - 1e-12) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}
