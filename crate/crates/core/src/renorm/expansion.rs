//! Exact convex expansion of `Π_j λ_j(ψ_j)` into products of cosine factors.

use rand::Rng;
use serde::Serialize;

use super::density::{activity, ChargeDensity, Ensemble, RenormParams};
use crate::error::{Error, Result};
use crate::lattice::{RealField, SubDomain, Vertex};
use crate::trig::TrigPolynomial;

/// Largest number of terms a materialized expansion may hold.
pub const MAX_TERMS: usize = 1_000_000;

/// Largest support for which every constituent is enumerated in property checks.
const CONSTITUENT_LIMIT: usize = 16;

/// `1 + coefficient · cos(⟨ψ, ρ + βΔa⟩ + ⟨g, ρ⟩)`; `shift` is `a` (absent means zero).
#[derive(Clone, Debug, PartialEq)]
pub struct CosFactor {
    pub density: ChargeDensity,
    pub coefficient: f64,
    /// `K(ρ)` before any spin-wave modification.
    pub bare: f64,
    pub shift: Option<RealField<f64>>,
}

impl CosFactor {
    pub fn new(density: ChargeDensity, coefficient: f64) -> Self {
        Self { density, coefficient, bare: coefficient, shift: None }
    }

    pub fn eval(&self, psi: &RealField<f64>) -> f64 {
        1.0 + self.coefficient * self.density.pair(psi).cos()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExpansionTerm {
    pub weight: f64,
    pub factors: Vec<CosFactor>,
}

impl ExpansionTerm {
    pub fn ensemble(&self) -> Ensemble {
        Ensemble { densities: self.factors.iter().map(|f| f.density.clone()).collect() }
    }

    /// `Π_ρ [1 + K(ρ) cos⟨ψ, ρ⟩]`.
    pub fn eval(&self, psi: &RealField<f64>) -> f64 {
        self.factors.iter().map(|f| f.eval(psi)).product()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConvexExpansion {
    pub terms: Vec<ExpansionTerm>,
    /// Last refinement scale used by any branch (`-1` when none was needed).
    pub k_star: i32,
}

impl ConvexExpansion {
    pub fn weight_sum(&self) -> f64 {
        self.terms.iter().map(|t| t.weight).sum()
    }

    /// `Σ_𝒩 c_𝒩 Π_ρ [1 + K(ρ) cos⟨ψ, ρ⟩]`.
    pub fn eval(&self, psi: &RealField<f64>) -> f64 {
        self.terms.iter().map(|t| t.weight * t.eval(psi)).sum()
    }
}

type Live = Vec<CosFactor>;

fn sort_live(live: &mut Live) {
    live.sort_by(|a, b| a.density.cmp(&b.density));
}

/// One pairwise step: the first pair within `2^k` is replaced by
/// `(1+a cos x)(1+b cos y) = ⅓[1+3a cos x] + ⅓[1+3b cos y] + ⅙[1+3ab cos(x+y)] + ⅙[1+3ab cos(x-y)]`.
/// Returns `None` once `live` is a `k`-ensemble.
fn split_step(live: &Live, k: i32) -> Option<Vec<(f64, Live)>> {
    let reach = if k < 0 { 0 } else { 1usize << k.min(62) };
    let (i, j) = (0..live.len())
        .flat_map(|i| (i + 1..live.len()).map(move |j| (i, j)))
        .find(|&(i, j)| live[i].density.distance(&live[j].density) <= reach)?;
    let (a, b) = (&live[i], &live[j]);
    let rest: Live = live.iter().enumerate().filter(|&(t, _)| t != i && t != j).map(|(_, f)| f.clone()).collect();
    let with = |extra: CosFactor| {
        let mut v = rest.clone();
        if extra.coefficient != 0.0 {
            v.push(extra);
        }
        sort_live(&mut v);
        v
    };
    let ab = 3.0 * a.coefficient * b.coefficient;
    let plus = a.density.merged(&b.density, 1).expect("disjoint supports");
    let minus = a.density.merged(&b.density, -1).expect("disjoint supports");
    Some(vec![
        (1.0 / 3.0, with(CosFactor::new(a.density.clone(), 3.0 * a.coefficient))),
        (1.0 / 3.0, with(CosFactor::new(b.density.clone(), 3.0 * b.coefficient))),
        (1.0 / 6.0, with(CosFactor::new(plus, ab))),
        (1.0 / 6.0, with(CosFactor::new(minus, ab))),
    ])
}

fn refine_all(live: Live, weight: f64, k: i32, out: &mut Vec<(f64, Live)>, cap: usize) -> Result<()> {
    match split_step(&live, k) {
        None => {
            if out.len() >= cap {
                return Err(Error::TooLarge(format!("expansion exceeds {cap} terms")));
            }
            out.push((weight, live));
            Ok(())
        }
        Some(branches) => {
            for (p, next) in branches {
                refine_all(next, weight * p, k, out, cap)?;
            }
            Ok(())
        }
    }
}

fn refine_sample<R: Rng + ?Sized>(mut live: Live, k: i32, rng: &mut R) -> (f64, Live) {
    let mut weight = 1.0;
    while let Some(branches) = split_step(&live, k) {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut pick = branches.len() - 1;
        for (t, (p, _)) in branches.iter().enumerate() {
            acc += p;
            if u < acc {
                pick = t;
                break;
            }
        }
        let (p, next) = branches.into_iter().nth(pick).expect("branch exists");
        weight *= p;
        live = next;
    }
    (weight, live)
}

/// Rewrites `Π_{ρ∈E}[1 + K(ρ)cos⟨ψ,ρ⟩]` as a convex combination of products over `k`-ensembles.
pub fn ensemble_refine(ensemble: &Ensemble, coefficients: &[f64], k: i32) -> Result<ConvexExpansion> {
    if coefficients.len() != ensemble.len() {
        return Err(Error::InvalidArgument("one coefficient per density required".into()));
    }
    if coefficients.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidArgument("coefficients must be finite".into()));
    }
    Ensemble::new(ensemble.densities.clone())?;
    let mut live: Live = ensemble
        .densities
        .iter()
        .zip(coefficients)
        .filter(|(_, &c)| c != 0.0)
        .map(|(d, &c)| CosFactor::new(d.clone(), c))
        .collect();
    sort_live(&mut live);
    let mut out = Vec::new();
    refine_all(live, 1.0, k, &mut out, MAX_TERMS)?;
    Ok(ConvexExpansion {
        terms: out.into_iter().map(|(weight, factors)| ExpansionTerm { weight, factors }).collect(),
        k_star: k,
    })
}

/// `C(N) = Σ_{q=1}^N e^{-q²}`.
pub fn c_of(n: usize) -> f64 {
    (1..=n).map(|q| (-((q * q) as f64)).exp()).sum()
}

/// Per-site data of the first decomposition step.
struct SiteExpansion {
    site: Vertex,
    /// `(ξ_j(q), z_j(q), q)` for `1 <= q <= N_j`.
    options: Vec<(f64, f64, i64)>,
}

fn site_expansions(side: usize, lambdas: &[TrigPolynomial]) -> Result<Vec<SiteExpansion>> {
    let interior: Vec<Vertex> =
        (1..side - 1).flat_map(|x| (1..side - 1).map(move |y| Vertex::new(x, y))).collect();
    if lambdas.len() != interior.len() {
        return Err(Error::InvalidArgument(format!(
            "{} polynomials for {} interior sites",
            lambdas.len(),
            interior.len()
        )));
    }
    let mut out = Vec::new();
    for (v, lam) in interior.into_iter().zip(lambdas) {
        let n = lam.degree();
        if n == 0 {
            continue;
        }
        let c = c_of(n);
        let options = (1..=n)
            .map(|q| {
                let qq = (q * q) as f64;
                ((-qq).exp() / c, 2.0 * c * qq.exp() * lam.coeff(q as i64), q as i64)
            })
            .collect();
        out.push(SiteExpansion { site: v, options });
    }
    Ok(out)
}

/// One branch state of the driver: frozen factors `𝒢` and live factors `ℰ`.
#[derive(Clone)]
struct Stage {
    frozen: Live,
    live: Live,
}

/// Freezing pass: live densities in ascending `d_Λ` (then lexicographic) order
/// join `𝒢` once they are `M d_Λ^α` away from everything not yet frozen.
fn freeze(stage: &mut Stage, params: &RenormParams) {
    let mut order: Vec<(usize, CosFactor)> = stage.live.drain(..).map(|f| (f.density.d_lambda(), f)).collect();
    order.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.density.cmp(&b.1.density)));
    let mut frozen_now = vec![false; order.len()];
    for n in 0..order.len() {
        let thr = params.separation(order[n].0);
        let ok = (0..order.len())
            .filter(|&t| t != n && !frozen_now[t])
            .all(|t| order[t].1.density.distance(&order[n].1.density) as f64 >= thr);
        if ok {
            frozen_now[n] = true;
        }
    }
    for (t, (_, f)) in order.into_iter().enumerate() {
        if frozen_now[t] {
            stage.frozen.push(f);
        } else {
            stage.live.push(f);
        }
    }
    sort_live(&mut stage.frozen);
    sort_live(&mut stage.live);
}

fn finish(stage: Stage, weight: f64) -> ExpansionTerm {
    let mut factors = stage.frozen;
    factors.extend(stage.live);
    sort_live(&mut factors);
    ExpansionTerm { weight, factors }
}

fn drive_all(
    stage: Stage,
    weight: f64,
    k: i32,
    params: &RenormParams,
    out: &mut Vec<ExpansionTerm>,
    k_star: &mut i32,
) -> Result<()> {
    if stage.live.len() <= 1 {
        if out.len() >= MAX_TERMS {
            return Err(Error::TooLarge(format!("expansion exceeds {MAX_TERMS} terms")));
        }
        out.push(finish(stage, weight));
        return Ok(());
    }
    *k_star = (*k_star).max(k);
    let mut branches = Vec::new();
    refine_all(stage.live.clone(), 1.0, k, &mut branches, MAX_TERMS)?;
    for (p, live) in branches {
        let mut next = Stage { frozen: stage.frozen.clone(), live };
        freeze(&mut next, params);
        drive_all(next, weight * p, k + 1, params, out, k_star)?;
    }
    Ok(())
}

fn initial_stages(sites: &[SiteExpansion], side: usize) -> Result<Vec<(f64, Stage)>> {
    let mut stages = vec![(1.0, Vec::new())];
    for s in sites {
        let mut next = Vec::with_capacity(stages.len() * s.options.len());
        for (w, live) in &stages {
            for &(xi, z, q) in &s.options {
                let mut l: Live = live.clone();
                if z != 0.0 {
                    l.push(CosFactor::new(ChargeDensity::point(side, s.site, q)?, z));
                }
                next.push((w * xi, l));
            }
        }
        if next.len() > MAX_TERMS {
            return Err(Error::TooLarge(format!("more than {MAX_TERMS} charge vectors")));
        }
        stages = next;
    }
    Ok(stages
        .into_iter()
        .map(|(w, mut live)| {
            sort_live(&mut live);
            (w, Stage { frozen: Vec::new(), live })
        })
        .collect())
}

/// Full expansion of `Π_{j∈Λ°} λ_j(ψ_j)` on a zero-boundary box of side `side`.
/// `lambdas` lists one polynomial per interior site in lexicographic order.
pub fn convex_expansion(side: usize, lambdas: &[TrigPolynomial], params: &RenormParams) -> Result<ConvexExpansion> {
    RenormParams::new(params.alpha, params.m)?;
    let sites = site_expansions(side, lambdas)?;
    let mut terms = Vec::new();
    let mut k_star = -1;
    for (w, stage) in initial_stages(&sites, side)? {
        drive_all(stage, w, 0, params, &mut terms, &mut k_star)?;
    }
    Ok(ConvexExpansion { terms, k_star })
}

/// Draws one ensemble with probability `c_𝒩` without materializing the family.
/// The returned weight is `c_𝒩` of the drawn term.
pub fn sample_expansion_term<R: Rng + ?Sized>(
    side: usize,
    lambdas: &[TrigPolynomial],
    params: &RenormParams,
    rng: &mut R,
) -> Result<ExpansionTerm> {
    RenormParams::new(params.alpha, params.m)?;
    let sites = site_expansions(side, lambdas)?;
    let mut weight = 1.0;
    let mut live: Live = Vec::new();
    for s in &sites {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut pick = s.options.len() - 1;
        for (t, o) in s.options.iter().enumerate() {
            acc += o.0;
            if u < acc {
                pick = t;
                break;
            }
        }
        let (xi, z, q) = s.options[pick];
        weight *= xi;
        if z != 0.0 {
            live.push(CosFactor::new(ChargeDensity::point(side, s.site, q)?, z));
        }
    }
    sort_live(&mut live);
    let mut stage = Stage { frozen: Vec::new(), live };
    let mut k = 0;
    while stage.live.len() > 1 {
        let (p, live) = refine_sample(std::mem::take(&mut stage.live), k, rng);
        weight *= p;
        stage.live = live;
        freeze(&mut stage, params);
        k += 1;
    }
    Ok(finish(stage, weight))
}

/// Distinct members are at least `M min(d_Λ)^α` apart.
pub fn check_separation(ens: &Ensemble, params: &RenormParams) -> bool {
    let d = &ens.densities;
    (0..d.len()).all(|i| {
        (i + 1..d.len()).all(|j| {
            let m = d[i].d_lambda().min(d[j].d_lambda());
            d[i].distance(&d[j]) as f64 >= params.separation(m)
        })
    })
}

/// Every proper constituent split off by at least `2M d(ρ₁)^α` is charged and
/// closer to the boundary than `(dist/2M)^{1/α}`. `None` if a support is too
/// large to enumerate.
pub fn check_constituents(ens: &Ensemble, params: &RenormParams) -> Option<bool> {
    for rho in &ens.densities {
        let s = rho.support();
        if s.len() > CONSTITUENT_LIMIT {
            return None;
        }
        for mask in 1u32..(1u32 << s.len()) - 1 {
            let (inner, outer): (Vec<Vertex>, Vec<Vertex>) =
                s.iter().enumerate().fold((vec![], vec![]), |(mut a, mut b), (t, &v)| {
                    if mask & (1 << t) != 0 {
                        a.push(v);
                    } else {
                        b.push(v);
                    }
                    (a, b)
                });
            let r1 = rho.restricted(&inner).expect("nonempty constituent");
            let rest = rho.restricted(&outer).expect("nonempty remainder");
            let gap = r1.distance(&rest) as f64;
            if gap >= 2.0 * params.separation(r1.diameter()) {
                let ok = r1.charge() != 0 && 2.0 * params.separation(r1.dist_to_boundary()) > gap;
                if !ok {
                    return Some(false);
                }
            }
        }
    }
    Some(true)
}

/// Largest `D₄` needed for `|K(ρ)| <= e^{D₄ A(ρ)} Π_j e^{ρ_j²}|λ̂_{j,|ρ_j|}|` over the expansion.
pub fn measured_d4(exp: &ConvexExpansion, lambdas: &[TrigPolynomial], params: &RenormParams) -> Result<f64> {
    let Some(first) = exp.terms.iter().flat_map(|t| &t.factors).next() else {
        return Ok(0.0);
    };
    let side = first.density.side();
    let lam = |v: Vertex| &lambdas[(v.x - 1) * (side - 2) + (v.y - 1)];
    let mut d4 = 0f64;
    for f in exp.terms.iter().flat_map(|t| &t.factors) {
        let (_, a) = activity(&f.density, params)?;
        let mut log_rhs = 0.0;
        for (v, q) in f.density.iter() {
            let c = lam(v).coeff(q.abs());
            if c == 0.0 {
                return Ok(f64::INFINITY);
            }
            log_rhs += (q * q) as f64 + c.abs().ln();
        }
        d4 = d4.max((f.coefficient.abs().ln() - log_rhs) / a as f64);
    }
    Ok(d4)
}

/// Dyadic class `k >= 1` with `2^k - 1 <= d <= 2^{k+1} - 2`.
pub fn dyadic_class(d: usize) -> u32 {
    (d + 1).ilog2()
}

/// Members of the same dyadic `d_Λ` class have disjoint discs `D(ρ)`.
pub fn check_disc_disjoint(ens: &Ensemble) -> bool {
    let d = &ens.densities;
    (0..d.len()).all(|i| {
        (i + 1..d.len()).all(|j| {
            if dyadic_class(d[i].d_lambda()) != dyadic_class(d[j].d_lambda()) {
                return true;
            }
            let (si, sj) = (d[i].stats(), d[j].stats());
            // two radius-(2d-1) balls meet iff the centers are close enough, but
            // clipping to the box can separate them, so intersect explicitly
            si.center.manhattan(sj.center) >= 2 * si.d_lambda + 2 * sj.d_lambda - 1 || {
                let other: std::collections::HashSet<Vertex> = d[j].d_disc().into_iter().collect();
                !d[i].d_disc().iter().any(|v| other.contains(v))
            }
        })
    })
}

/// At most one charged member meets `sub`.
pub fn check_single_charged(ens: &Ensemble, sub: &SubDomain) -> bool {
    ens.densities.iter().filter(|r| r.charge() != 0 && r.iter().any(|(v, _)| sub.contains(v))).count() <= 1
}

/// The largest sub-box at distance at least `L/8` from the outer ring; every
/// admissible sub-domain lies inside it.
pub fn central_box(side: usize) -> Option<SubDomain> {
    let margin = side.div_ceil(8).max(1);
    (side > 2 * margin).then(|| SubDomain::new(Vertex::new(margin, margin), side - 2 * margin))
}

/// Summary of the structural checks on an expansion.
#[derive(Clone, Debug, Serialize)]
pub struct ExpansionChecks {
    pub terms: usize,
    pub k_star: i32,
    pub weight_sum: f64,
    pub min_weight: f64,
    pub separation: bool,
    pub constituents: Option<bool>,
    pub d4: f64,
    pub disc_disjoint: bool,
    pub single_charged: bool,
    /// Terms failing the disc or single-charge checks.
    pub disc_failures: usize,
    pub charged_failures: usize,
}

impl ExpansionChecks {
    pub fn run(
        exp: &ConvexExpansion,
        lambdas: &[TrigPolynomial],
        params: &RenormParams,
        sub: Option<&SubDomain>,
    ) -> Result<Self> {
        let mut separation = true;
        let mut constituents = Some(true);
        let mut disc_failures = 0;
        let mut charged_failures = 0;
        for t in &exp.terms {
            let ens = t.ensemble();
            separation &= check_separation(&ens, params);
            constituents = match (constituents, check_constituents(&ens, params)) {
                (Some(a), Some(b)) => Some(a && b),
                _ => None,
            };
            if !check_disc_disjoint(&ens) {
                disc_failures += 1;
            }
            if let Some(s) = sub {
                if !check_single_charged(&ens, s) {
                    charged_failures += 1;
                }
            }
        }
        Ok(Self {
            terms: exp.terms.len(),
            k_star: exp.k_star,
            weight_sum: exp.weight_sum(),
            min_weight: exp.terms.iter().map(|t| t.weight).fold(f64::INFINITY, f64::min),
            separation,
            constituents,
            d4: measured_d4(exp, lambdas, params)?,
            disc_disjoint: disc_failures == 0,
            single_charged: charged_failures == 0,
            disc_failures,
            charged_failures,
        })
    }
}
