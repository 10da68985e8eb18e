//! Spin waves, the change-of-contour identity and coefficient modification.

use std::collections::BTreeMap;

use serde::Serialize;

use super::density::{separated_squares, scale_count, ChargeDensity, Ensemble, RenormParams, Square};
use super::expansion::{check_constituents, check_separation, ConvexExpansion, CosFactor, ExpansionTerm};
use crate::error::{Error, Result};
use crate::harmonic::GreensTable;
use crate::lattice::{RealField, SquareDomain, Vertex};

/// Largest ensemble for which the Gaussian identity is expanded over all sign patterns.
const IDENTITY_MAX_FACTORS: usize = 12;

/// `Σ_{j~l} (a_j - a_l)²` over nearest-neighbour pairs of the box.
fn dirichlet(a: &RealField<f64>) -> f64 {
    let l = a.side();
    let mut s = 0.0;
    for x in 0..l {
        for y in 0..l {
            let v = a[Vertex::new(x, y)];
            if x + 1 < l {
                let d = v - a[Vertex::new(x + 1, y)];
                s += d * d;
            }
            if y + 1 < l {
                let d = v - a[Vertex::new(x, y + 1)];
                s += d * d;
            }
        }
    }
    s
}

/// Whether an edge of the box carries a nonzero gradient of `a`.
fn gradient_edges(a: &RealField<f64>) -> Vec<(Vertex, Vertex)> {
    let l = a.side();
    let mut out = Vec::new();
    for x in 0..l {
        for y in 0..l {
            let v = Vertex::new(x, y);
            for w in [Vertex::new(x + 1, y), Vertex::new(x, y + 1)] {
                if w.x < l && w.y < l && a[v] != a[w] {
                    out.push((v, w));
                }
            }
        }
    }
    out
}

/// `E_β(a, ρ) = ⟨a, ρ⟩ - (β/2) Σ_{j~l}(a_j - a_l)²`.
pub fn energy(a: &RealField<f64>, rho: &ChargeDensity, beta: f64) -> f64 {
    rho.pair(a) - 0.5 * beta * dirichlet(a)
}

/// Same as [`energy`] with a real field in place of the density.
pub fn energy_field(a: &RealField<f64>, tau: &RealField<f64>, beta: f64) -> f64 {
    a.dot(tau) - 0.5 * beta * dirichlet(a)
}

/// `a₀ = ρ/(4β)` on the parity class carrying at least half of `‖ρ‖₂²`
/// (the class of the center when `d_Λ = 1`).
pub fn initial_spin_wave(rho: &ChargeDensity, beta: f64) -> Result<RealField<f64>> {
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter(format!("beta {beta} must be positive")));
    }
    let st = rho.stats();
    let parity = |v: Vertex| (v.x + v.y) % 2;
    let class = if st.d_lambda == 1 {
        parity(st.center)
    } else {
        let even: i64 = rho.iter().filter(|&(v, _)| parity(v) == 0).map(|(_, q)| q * q).sum();
        if 2 * even >= rho.norm2sq() {
            0
        } else {
            1
        }
    };
    let mut a = RealField::zeros(rho.side());
    for (v, q) in rho.iter() {
        if parity(v) == class {
            a[v] = q as f64 / (4.0 * beta);
        }
    }
    Ok(a)
}

/// Plateau and outer radii `(A_k, B_k)` of the square profile: 1 up to distance
/// `A_k`, logarithmic decay to 0 at `B_k`. Consecutive scales have disjoint
/// gradient shells (`A_{k+1} = B_k`).
pub fn profile_radii(k: u32) -> (usize, usize) {
    if k <= 1 {
        (1, 2)
    } else {
        ((1 << (k - 2)) + 1, (1 << (k - 1)) + 1)
    }
}

fn profile(d: usize, k: u32) -> f64 {
    let (a, b) = profile_radii(k);
    if d <= a {
        1.0
    } else if d >= b {
        0.0
    } else {
        (b as f64 / d as f64).ln() / (b as f64 / a as f64).ln()
    }
}

/// `𝒩(ρ) ∖ {ρ}`: other members with `d_Λ(ρ') <= 2 d_Λ(ρ)`.
fn smaller_members<'a>(rho: &ChargeDensity, ens: &'a Ensemble) -> Vec<&'a ChargeDensity> {
    let d = rho.d_lambda();
    ens.densities.iter().filter(|r| *r != rho && r.d_lambda() <= 2 * d).collect()
}

/// Property flags of a square spin wave.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SquareWaveReport {
    pub k: u32,
    pub support_near_square: bool,
    pub plateau: bool,
    pub constant_on_discs: bool,
    /// `β E_β(a_s, ρ)`.
    pub scaled_energy: f64,
}

fn constant_on(a: &RealField<f64>, set: &[Vertex]) -> bool {
    set.first().map_or(true, |&v0| set.iter().all(|&v| a[v] == a[v0]))
}

/// Spin wave attached to a separated square `s` at scale `k`.
///
/// The unit profile is flattened on `D⁺(ρ')` for the smaller members of `ens`
/// (larger `d_Λ` first, each disc set to the profile value at its center), then
/// scaled by `sign(Q(s∩ρ))/β` and the amplitude maximizing `E_β`.
pub fn square_spin_wave(
    rho: &ChargeDensity,
    s: &Square,
    k: u32,
    beta: f64,
    ens: &Ensemble,
    params: &RenormParams,
) -> Result<(RealField<f64>, SquareWaveReport)> {
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter(format!("beta {beta} must be positive")));
    }
    if k == 0 || !separated_squares(rho, k, params).contains(s) {
        return Err(Error::InvalidSquare(format!("{s:?} is not a separated square of scale {k}")));
    }
    let q: i64 = rho.iter().filter(|&(v, _)| s.contains(v)).map(|(_, q)| q).sum();
    if q == 0 {
        return Err(Error::InvalidSquare(format!("{s:?} carries no net charge")));
    }
    let side = rho.side();
    let mut u = RealField::from_fn(side, |v| profile(s.dist_to_vertex(v), k));
    let mut others = smaller_members(rho, ens);
    others.sort_by(|a, b| b.d_lambda().cmp(&a.d_lambda()).then_with(|| a.cmp(b)));
    let discs: Vec<Vec<Vertex>> = others.iter().map(|r| r.d_disc_plus()).collect();
    for (r, disc) in others.iter().zip(&discs) {
        let val = u[r.stats().center];
        for &v in disc {
            u[v] = val;
        }
    }
    let d = dirichlet(&u);
    let p = q.signum() as f64 * rho.pair(&u);
    let amp = if d > 0.0 { p / d } else { 0.0 };
    let a = u.scaled(q.signum() as f64 * amp / beta);

    let outer = 1usize << (k - 1);
    let inner = 1usize << k.saturating_sub(3);
    let mut support_near_square = true;
    let mut plateau_vals = Vec::new();
    for v in (0..side).flat_map(|x| (0..side).map(move |y| Vertex::new(x, y))) {
        let dist = s.dist_to_vertex(v);
        if a[v] != 0.0 && dist > outer {
            support_near_square = false;
        }
        if dist <= inner {
            plateau_vals.push(v);
        }
    }
    let report = SquareWaveReport {
        k,
        support_near_square,
        plateau: constant_on(&a, &plateau_vals),
        constant_on_discs: discs.iter().all(|d| constant_on(&a, d)),
        scaled_energy: beta * energy(&a, rho, beta),
    };
    Ok((a, report))
}

/// Property flags of an assembled spin wave.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpinWaveReport {
    pub constant_on_discs: bool,
    pub support_in_disc_interior: bool,
    pub avoids_charged: bool,
    pub laplacian_in_disc: bool,
    /// No edge carries the gradient of two different pieces.
    pub edge_disjoint: bool,
    pub initial_energy_bound: bool,
    pub squares: Vec<SquareWaveReport>,
}

impl SpinWaveReport {
    /// Properties 1–4 of the construction.
    pub fn all_pass(&self) -> bool {
        self.constant_on_discs && self.support_in_disc_interior && self.avoids_charged && self.laplacian_in_disc
    }
}

/// `a_ρ = a₀ + Σ_k Σ_{s ∈ 𝒮_k^sep} a_s` together with its pieces.
#[derive(Clone, Debug)]
pub struct SpinWave {
    pub field: RealField<f64>,
    pub initial: RealField<f64>,
    pub pieces: Vec<(Square, RealField<f64>)>,
    pub report: SpinWaveReport,
}

impl SpinWave {
    pub fn energy(&self, rho: &ChargeDensity, beta: f64) -> f64 {
        energy(&self.field, rho, beta)
    }

    /// `E(a₀, ρ) + Σ_s E(a_s, ρ)`.
    pub fn piecewise_energy(&self, rho: &ChargeDensity, beta: f64) -> f64 {
        energy(&self.initial, rho, beta) + self.pieces.iter().map(|(_, a)| energy(a, rho, beta)).sum::<f64>()
    }

    /// `Σ_k |𝒮_k^sep(ρ)|`.
    pub fn separated_count(&self) -> usize {
        self.pieces.len()
    }
}

/// Validates properties (a) and (b) of an ensemble, naming the first failure.
pub fn check_admissible(ens: &Ensemble, params: &RenormParams) -> Result<()> {
    if !check_separation(ens, params) {
        return Err(Error::InvalidArgument("ensemble violates property (a): members too close".into()));
    }
    if check_constituents(ens, params) == Some(false) {
        return Err(Error::InvalidArgument(
            "ensemble violates property (b): a split-off constituent is neutral or too far from the boundary".into(),
        ));
    }
    Ok(())
}

/// Spin wave of `rho` within the ensemble `ens`.
pub fn assemble_spin_wave(rho: &ChargeDensity, ens: &Ensemble, beta: f64, params: &RenormParams) -> Result<SpinWave> {
    if !ens.densities.contains(rho) {
        return Err(Error::InvalidArgument("density is not a member of the ensemble".into()));
    }
    check_admissible(ens, params)?;
    assemble_unchecked(rho, ens, beta, params)
}

fn assemble_unchecked(rho: &ChargeDensity, ens: &Ensemble, beta: f64, params: &RenormParams) -> Result<SpinWave> {
    let initial = initial_spin_wave(rho, beta)?;
    let mut field = initial.clone();
    let mut pieces = Vec::new();
    let mut squares = Vec::new();
    for k in 1..=scale_count(rho, params) {
        for s in separated_squares(rho, k, params) {
            let (a, rep) = square_spin_wave(rho, &s, k, beta, ens, params)?;
            field = field.add(&a);
            pieces.push((s, a));
            squares.push(rep);
        }
    }
    let side = rho.side();
    let others = smaller_members(rho, ens);
    let constant_on_discs = others.iter().all(|r| constant_on(&field, &r.d_disc_plus()));
    let support_in_disc_interior = (0..side).flat_map(|x| (0..side).map(move |y| Vertex::new(x, y))).all(|v| {
        field[v] == 0.0 || (rho.in_d_disc(v) && v.x > 0 && v.y > 0 && v.x < side - 1 && v.y < side - 1)
    });
    let avoids_charged = ens
        .densities
        .iter()
        .filter(|r| *r != rho && r.charge() != 0)
        .all(|r| r.iter().all(|(v, _)| field[v] == 0.0));
    let lap = SquareDomain::zero_boundary(side)?.laplacian(&field);
    let laplacian_in_disc =
        (0..side).flat_map(|x| (0..side).map(move |y| Vertex::new(x, y))).all(|v| lap[v] == 0.0 || rho.in_d_disc(v));
    let mut seen = std::collections::HashSet::new();
    let mut edge_disjoint = true;
    for a in std::iter::once(&initial).chain(pieces.iter().map(|(_, a)| a)) {
        for e in gradient_edges(a) {
            edge_disjoint &= seen.insert(e);
        }
    }
    // equality is attained when both parity classes carry half of the mass
    let bound = rho.norm2sq() as f64 / (16.0 * beta);
    let initial_energy_bound = energy(&initial, rho, beta) >= bound * (1.0 - 8.0 * f64::EPSILON);
    let report = SpinWaveReport {
        constant_on_discs,
        support_in_disc_interior,
        avoids_charged,
        laplacian_in_disc,
        edge_disjoint,
        initial_energy_bound,
        squares,
    };
    Ok(SpinWave { field, initial, pieces, report })
}

/// Result of [`coefficient_modify`]: the modified expansion and one report per factor.
#[derive(Clone, Debug)]
pub struct ModifiedExpansion {
    pub expansion: ConvexExpansion,
    pub reports: Vec<SpinWaveReport>,
}

/// Replaces every `K(ρ)` by `z = K(ρ) e^{-E_β(a_ρ, ρ)}` and attaches the spin wave `a_ρ`.
///
/// Ensembles failing the spin-wave properties are kept; their reports record the failure.
pub fn coefficient_modify(exp: &ConvexExpansion, beta: f64, params: &RenormParams) -> Result<ModifiedExpansion> {
    let mut terms = Vec::with_capacity(exp.terms.len());
    let mut reports = Vec::new();
    for t in &exp.terms {
        let ens = t.ensemble();
        check_admissible(&ens, params)?;
        let mut factors = Vec::with_capacity(t.factors.len());
        for f in &t.factors {
            let wave = assemble_unchecked(&f.density, &ens, beta, params)?;
            let e = wave.energy(&f.density, beta);
            factors.push(CosFactor {
                density: f.density.clone(),
                coefficient: f.bare * (-e).exp(),
                bare: f.bare,
                shift: Some(wave.field),
            });
            reports.push(wave.report);
        }
        terms.push(ExpansionTerm { weight: t.weight, factors });
    }
    Ok(ModifiedExpansion { expansion: ConvexExpansion { terms, k_star: exp.k_star }, reports })
}

/// `|E e^{i⟨φ,τ⟩} - e^{-E_β(a,τ)} E e^{i⟨φ,τ+βΔa⟩}|` under the zero-boundary GFF,
/// using `E e^{i⟨φ,q⟩} = e^{-⟨q,Gq⟩/(2β)}`.
pub fn change_of_contour_check(
    greens: &GreensTable<f64>,
    tau: &RealField<f64>,
    a: &RealField<f64>,
    beta: f64,
) -> Result<f64> {
    let dom = greens.domain();
    if let Some(v) = dom.boundary().into_iter().find(|&v| a[v] != 0.0) {
        return Err(Error::InvalidSupport(format!("shift is nonzero on the boundary at {v:?}")));
    }
    let char_fn = |q: &RealField<f64>| -> Result<f64> { Ok((-q.dot(&greens.green_potential(q)?) / (2.0 * beta)).exp()) };
    let shifted = tau.add(&dom.laplacian(a).scaled(beta));
    let lhs = char_fn(tau)?;
    let rhs = (-energy_field(a, tau, beta)).exp() * char_fn(&shifted)?;
    Ok((lhs - rhs).abs())
}

/// Both sides of the coefficient-modification identity for one term:
/// `∫Π[1 + K cos(⟨φ,ρ⟩ + ⟨g,ρ⟩)]dP` and `∫Π[1 + z cos(⟨φ,ρ + βΔa_ρ⟩ + ⟨g,ρ⟩)]dP`.
pub fn modified_term_integrals(
    greens: &GreensTable<f64>,
    term: &ExpansionTerm,
    beta: f64,
    g: &RealField<f64>,
) -> Result<(f64, f64)> {
    let n = term.factors.len();
    if n > IDENTITY_MAX_FACTORS {
        return Err(Error::TooLarge(format!("{n} factors (limit {IDENTITY_MAX_FACTORS})")));
    }
    let dom = greens.domain();
    let bare: Vec<RealField<f64>> = term.factors.iter().map(|f| f.density.to_field()).collect();
    let shifted: Vec<RealField<f64>> = term
        .factors
        .iter()
        .zip(&bare)
        .map(|(f, r)| match &f.shift {
            Some(a) => r.add(&dom.laplacian(a).scaled(beta)),
            None => r.clone(),
        })
        .collect();
    let gram = |vs: &[RealField<f64>]| -> Result<Vec<Vec<f64>>> {
        let pots: Vec<RealField<f64>> = vs.iter().map(|v| greens.green_potential(v)).collect::<Result<_>>()?;
        Ok(vs.iter().map(|a| pots.iter().map(|p| a.dot(p)).collect()).collect())
    };
    let (gb, gs) = (gram(&bare)?, gram(&shifted)?);
    let phase: Vec<f64> = bare.iter().map(|r| r.dot(g)).collect();
    // sum over sign patterns ε ∈ {-1, 0, 1}^n, each nonzero entry weighted by coef/2
    let expand = |coef: &dyn Fn(usize) -> f64, gm: &[Vec<f64>]| {
        let mut total = 0.0;
        for code in 0..3usize.pow(n as u32) {
            let eps: Vec<i32> = (0..n).map(|i| (code / 3usize.pow(i as u32) % 3) as i32 - 1).collect();
            let w: f64 = (0..n).filter(|&i| eps[i] != 0).map(|i| coef(i) / 2.0).product();
            if w == 0.0 {
                continue;
            }
            let ph: f64 = (0..n).map(|i| eps[i] as f64 * phase[i]).sum();
            let quad: f64 = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| (eps[i] * eps[j]) as f64 * gm[i][j]).sum();
            total += w * ph.cos() * (-quad / (2.0 * beta)).exp();
        }
        total
    };
    let lhs = expand(&|i| term.factors[i].bare, &gb);
    let rhs = expand(&|i| term.factors[i].coefficient, &gs);
    Ok((lhs, rhs))
}

/// Largest `c₂` with `|z| <= exp[-(c₂/β)(‖ρ‖₂² + log₂(d_Λ+1))]` for every modified factor.
pub fn measured_c2(exp: &ConvexExpansion, beta: f64) -> f64 {
    exp.terms
        .iter()
        .flat_map(|t| &t.factors)
        .map(|f| {
            let scale = f.density.norm2sq() as f64 + ((f.density.d_lambda() + 1) as f64).log2();
            if f.coefficient == 0.0 {
                f64::INFINITY
            } else {
                -beta * f.coefficient.abs().ln() / scale
            }
        })
        .fold(f64::INFINITY, f64::min)
}

/// Integer flow `c_e` on edges `(j, l)` with `j < l` such that
/// `⟨ρ, σ⟩ = Σ_e c_e (σ_j - σ_l)` for every `σ`. Positive and negative unit
/// charges are paired in lexicographic order and joined by x-then-y paths.
pub fn neutral_flow_decomposition(rho: &ChargeDensity) -> Result<BTreeMap<(Vertex, Vertex), i64>> {
    let q = rho.charge();
    if q != 0 {
        return Err(Error::NotNeutral(q));
    }
    let units = |sign: i64| -> Vec<Vertex> {
        rho.iter().filter(|&(_, c)| c.signum() == sign).flat_map(|(v, c)| std::iter::repeat(v).take(c.unsigned_abs() as usize)).collect()
    };
    let mut flow: BTreeMap<(Vertex, Vertex), i64> = BTreeMap::new();
    for (u, v) in units(1).into_iter().zip(units(-1)) {
        let mut w = u;
        while w != v {
            let next = if w.x != v.x {
                Vertex::new(if w.x < v.x { w.x + 1 } else { w.x - 1 }, w.y)
            } else {
                Vertex::new(w.x, if w.y < v.y { w.y + 1 } else { w.y - 1 })
            };
            if w < next {
                *flow.entry((w, next)).or_insert(0) += 1;
            } else {
                *flow.entry((next, w)).or_insert(0) -= 1;
            }
            w = next;
        }
    }
    flow.retain(|_, c| *c != 0);
    Ok(flow)
}

#[derive(Serialize)]
struct DensityDump {
    support: Vec<[f64; 3]>,
    #[serde(rename = "K")]
    k: f64,
    z: f64,
    spinwave: Vec<[f64; 3]>,
}

#[derive(Serialize)]
struct TermDump {
    weight: f64,
    densities: Vec<DensityDump>,
}

/// JSON dump: per term `{weight, densities: [{support, K, z, spinwave}]}`, with
/// `[x, y, value]` triples.
pub fn expansion_json(exp: &ConvexExpansion) -> serde_json::Value {
    let terms: Vec<TermDump> = exp
        .terms
        .iter()
        .map(|t| TermDump {
            weight: t.weight,
            densities: t
                .factors
                .iter()
                .map(|f| DensityDump {
                    support: f.density.iter().map(|(v, q)| [v.x as f64, v.y as f64, q as f64]).collect(),
                    k: f.bare,
                    z: f.coefficient,
                    spinwave: f
                        .shift
                        .as_ref()
                        .map(|a| {
                            let l = a.side();
                            (0..l)
                                .flat_map(|x| (0..l).map(move |y| Vertex::new(x, y)))
                                .filter(|&v| a[v] != 0.0)
                                .map(|v| [v.x as f64, v.y as f64, a[v]])
                                .collect()
                        })
                        .unwrap_or_default(),
                })
                .collect(),
        })
        .collect();
    serde_json::to_value(terms).expect("plain data serializes")
}
