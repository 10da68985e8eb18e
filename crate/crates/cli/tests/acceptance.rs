//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_FAILURES` are reported as FAIL without failing the
//! run; any other failure, or a listed criterion that starts passing, exits nonzero.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use ivgff::renorm::*;
use ivgff::sampler::{coupled_step, holley_check, ChainState, TruncatedMeasure};
use ivgff::trig::*;
use ivgff::{GreensTable64, IntField, RealField64, SquareDomain, Vertex};
use ivgff_cli::config::{Command, ExperimentConfig, Flags};
use ivgff_cli::experiments::*;
use ivgff_cli::output::{linear_fit, mean};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 20_240_601;

// criterion 1
const GREEN_SIDES: [usize; 5] = [17, 33, 65, 129, 257];
const GREEN_SLOPE_REL_TOL: f64 = 0.10;
const GREEN_INTERCEPT_WINDOW: f64 = 0.1;
// criterion 2
const IDENTITY_TOL: f64 = 1e-10;
const QUADRATURE_TOL: f64 = 1e-9;
// criterion 3
const MGF_SIDES: [usize; 2] = [3, 4];
const MGF_CAP: i64 = 8;
const MGF_T: [f64; 3] = [0.5, 1.0, 2.0];
const MGF_BETA: [f64; 3] = [0.25, 0.5, 1.0];
const MGF_LOWER_SCAN: [f64; 10] = [0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.4, 0.5, 0.75, 1.0];
const MGF_MIN_THRESHOLD: f64 = 0.05;
// criterion 4
const FEJER_N: [usize; 3] = [4, 16, 64];
const FEJER_FINAL_TOL: f64 = 1e-2;
const FEJER_CAP: i64 = 12;
// criterion 5
const RENORM_ALPHA: f64 = 1.75;
const RENORM_M: f64 = 2.0;
const RENORM_BETAS: [f64; 5] = [0.01, 0.02, 0.03, 0.04, 0.05];
const RENORM_IDENTITY_TOL: f64 = 1e-8;
const RENORM_WEIGHT_TOL: f64 = 1e-12;
// criterion 6
const SPIN_SIDES: [usize; 3] = [33, 65, 129];
const SPIN_CORPUS: usize = 50;
const SPIN_ADDITIVITY_TOL: f64 = 1e-9;
const SPIN_D5_RATIO: f64 = 2.0;
// the k = 1 and k = 2 pieces sit exactly at the ratio bound
const SPIN_RATIO_ROUNDING: f64 = 1e-12;
// criterion 7
const HOLLEY_BETAS: [f64; 2] = [0.3, 0.7];
const HOLLEY_CAP: i64 = 4;
const COUPLED_SWEEPS: u64 = 10_000;
// criterion 8
const SCALING_SIDES: [usize; 4] = [16, 32, 64, 128];
const SCALING_BETA: f64 = 0.2;
const SCALING_REPLICAS: usize = 64;
const SCALING_R2: f64 = 0.95;
const SCALING_BETAS: [f64; 3] = [0.1, 0.2, 0.4];
const SCALING_SLOPE_REL: f64 = 0.30;
// criterion 9
const GIBBS_SWEEPS: u64 = 1_000_000;
const GIBBS_TV: f64 = 0.01;
const GIBBS_BETA: f64 = 0.5;
const GIBBS_CAP: i64 = 10;

/// Criteria that cannot be met by a faithful implementation; see the README.
const KNOWN_FAILURES: [u32; 1] = [5];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn criterion_1() -> Outcome {
    let rows: Vec<GreenRow> = GREEN_SIDES.iter().map(|&s| green_diagonal(s).unwrap()).collect();
    let x: Vec<f64> = rows.iter().map(|r| (r.dist as f64).ln()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.green_diag).collect();
    let (slope, _, _) = linear_fit(&x, &y);
    let reference = 1.0 / (2.0 * PI);
    let slope_ok = (slope / reference - 1.0).abs() <= GREEN_SLOPE_REL_TOL;
    let resid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| b - reference * a).collect();
    let step = resid.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
    outcome(
        slope_ok && step <= GREEN_INTERCEPT_WINDOW,
        format!("slope {slope:.6} vs 1/2pi {reference:.6}; largest successive intercept change {step:.2e}"),
    )
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let dom = SquareDomain::zero_boundary(17).unwrap();
    let g = GreensTable64::new(&dom).unwrap();
    let mut lap_res = 0f64;
    let mut sym = 0f64;
    let cols: Vec<Vertex> = (0..8).map(|_| Vertex::new(rng.gen_range(1..16), rng.gen_range(1..16))).collect();
    for &l in &cols {
        let col = g.column(l).unwrap().clone();
        let lap = dom.laplacian(&col);
        for v in dom.interior() {
            let target = if v == l { 1.0 } else { 0.0 };
            lap_res = lap_res.max((-lap[v] - target).abs());
        }
        for &j in &cols {
            sym = sym.max((g.get(j, l).unwrap() - g.get(l, j).unwrap()).abs());
        }
    }
    let h = RealField64::from_fn(17, |v| if dom.is_boundary(v) { rng.gen_range(-3.0..3.0) } else { 0.0 });
    let ext = g.harmonic_extension(&h).unwrap();
    let lap = dom.laplacian(&ext);
    let mut harm = dom.interior().iter().map(|&v| lap[v].abs()).fold(0.0, f64::max);
    harm = harm.max(dom.boundary().iter().map(|&v| (ext[v] - h[v]).abs()).fold(0.0, f64::max));
    let gg = RealField64::from_fn(17, |v| if dom.is_boundary(v) { 0.0 } else { rng.gen_range(-1.0..1.0) });
    let dir = (gg.dot(&dom.laplacian(&gg).scaled(-1.0)) - dom.dirichlet_energy(&gg)).abs();

    let d5 = SquareDomain::zero_boundary(5).unwrap();
    let g5 = GreensTable64::new(&d5).unwrap();
    let mut contour = 0f64;
    for _ in 0..20 {
        let tau = RealField64::from_fn(5, |_| rng.gen_range(-1.0..1.0));
        let a = RealField64::from_fn(5, |v| if d5.is_boundary(v) { 0.0 } else { rng.gen_range(-1.0..1.0) });
        contour = contour.max(change_of_contour_check(&g5, &tau, &a, 0.8).unwrap());
    }

    let d3 = SquareDomain::zero_boundary(3).unwrap();
    let mut quad = 0f64;
    for (beta, lam) in [
        (0.4, TrigPolynomial::new(vec![0.3, -0.1, 0.05])),
        (1.0, fejer_kernel(3).unwrap()),
        (0.15, fejer_kernel(2).unwrap()),
    ] {
        let hb = RealField64::from_fn(3, |v| if d3.is_boundary(v) { rng.gen_range(-1.0..1.0) } else { 0.0 });
        let gi = RealField64::from_fn(3, |v| if d3.is_boundary(v) { 0.0 } else { rng.gen_range(-1.0..1.0) });
        let a = tilted_partition(&d3, beta, &[lam.clone()], &hb, &gi).unwrap();
        let b = tilted_partition_quadrature(&d3, beta, &[lam], &hb, &gi).unwrap();
        quad = quad.max((a - b).abs());
    }
    let worst = lap_res.max(sym).max(harm).max(dir).max(contour);
    outcome(
        worst <= IDENTITY_TOL && quad <= QUADRATURE_TOL,
        format!(
            "laplacian {lap_res:.1e}, symmetry {sym:.1e}, harmonic {harm:.1e}, dirichlet {dir:.1e}, \
             contour {contour:.1e}, quadrature {quad:.1e}"
        ),
    )
}

fn criterion_3() -> Outcome {
    let mut upper_ok = true;
    let mut thresholds = Vec::new();
    for side in MGF_SIDES {
        let grid = mgf_rows(side, &MGF_BETA, &MGF_T, MGF_CAP).unwrap();
        upper_ok &= grid.iter().all(MgfRow::upper_holds);
        let scan = mgf_rows(side, &MGF_LOWER_SCAN, &MGF_T, MGF_CAP).unwrap();
        thresholds.push(lower_threshold(&scan));
    }
    let lower_ok = thresholds.iter().all(|t| t.is_some_and(|b| b >= MGF_MIN_THRESHOLD));
    outcome(
        upper_ok && lower_ok,
        format!("upper bound on grid: {upper_ok}; lower-bound threshold beta per L {MGF_SIDES:?}: {thresholds:?}"),
    )
}

fn criterion_4() -> Outcome {
    let d = SquareDomain::zero_boundary(3).unwrap();
    let f = GreensTable64::new(&d).unwrap().dual_basis(Vertex::new(1, 1)).unwrap();
    let rows = weak_convergence_scan(&d, 1.0, &IntField::zeros(3), &f, &FEJER_N, FEJER_CAP).unwrap();
    let decreasing = rows.windows(2).all(|w| w[1].abs_error < w[0].abs_error);
    let last = rows.last().unwrap();
    let errs: Vec<String> = rows.iter().map(|r| format!("{:.2e}", r.abs_error)).collect();
    outcome(
        decreasing && last.abs_error <= FEJER_FINAL_TOL + last.trunc_bound,
        format!("errors {errs:?}, truncation bound {:.1e}", last.trunc_bound),
    )
}

/// Largest beta with every modified coefficient below one, by bisection
/// (each |z| = |K| e^{-E} with E proportional to 1/beta).
fn z_threshold(exp: &ConvexExpansion, params: &RenormParams) -> f64 {
    let max_z = |b: f64| {
        coefficient_modify(exp, b, params)
            .unwrap()
            .expansion
            .terms
            .iter()
            .flat_map(|t| &t.factors)
            .map(|f| f.coefficient.abs())
            .fold(0.0, f64::max)
    };
    let (mut lo, mut hi) = (1e-3, 1.0);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if max_z(mid) < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

fn criterion_5() -> Outcome {
    let params = RenormParams::new(RENORM_ALPHA, RENORM_M).unwrap();
    let runs: Vec<_> = RENORM_BETAS.iter().map(|&b| run_renorm(4, 2, b, &params, SEED).unwrap()).collect();
    let r = &runs[0];
    let c = &r.checks;
    let identity = r.identity_max_error <= RENORM_IDENTITY_TOL
        && runs.iter().all(|x| x.modified_max_error <= RENORM_IDENTITY_TOL);
    let weights = (c.weight_sum - 1.0).abs() <= RENORM_WEIGHT_TOL && c.min_weight > 0.0;
    let props_abc = c.separation && c.constituents == Some(true) && c.d4.is_finite();
    let prop1: Vec<f64> = runs.iter().map(|x| x.c2).collect();
    let prop1_ok = prop1.iter().all(|&c2| c2 > 0.0);
    let z_ok = runs.iter().all(|x| x.max_abs_z < 1.0);
    let beta_hat = z_threshold(&r.expansion, &params);
    let pass = identity && weights && props_abc && prop1_ok && c.disc_disjoint && c.single_charged && z_ok;
    outcome(
        pass,
        format!(
            "identity {:.1e} ({} terms, k* {}); weights {weights}; (a)-(c) {props_abc} (D4 {:.3}); \
             property 1 c2 by beta {prop1:.4?}; property 2 {} ({} ensembles fail); property 3 {} ({} fail); \
             max|z| at beta 0.05 = {:.3}; |z| < 1 only for beta < {beta_hat:.4}",
            r.identity_max_error,
            c.terms,
            c.k_star,
            c.d4,
            c.disc_disjoint,
            c.disc_failures,
            c.single_charged,
            c.charged_failures,
            runs.last().unwrap().max_abs_z,
        ),
    )
}

/// Random density of 1 to 3 sites around `center` within `spread`.
fn random_density(side: usize, center: Vertex, spread: usize, rng: &mut ChaCha8Rng) -> Option<ChargeDensity> {
    let n = rng.gen_range(1..=3);
    let pts = (0..n).map(|_| {
        let dx = rng.gen_range(0..=2 * spread) as i64 - spread as i64;
        let dy = rng.gen_range(0..=2 * spread) as i64 - spread as i64;
        let x = (center.x as i64 + dx).clamp(1, side as i64 - 2) as usize;
        let y = (center.y as i64 + dy).clamp(1, side as i64 - 2) as usize;
        let q = if rng.gen_bool(0.5) { rng.gen_range(1..=2) } else { -rng.gen_range(1..=2) };
        (Vertex::new(x, y), q)
    });
    ChargeDensity::new(side, pts).ok()
}

fn spin_corpus(params: &RenormParams, rng: &mut ChaCha8Rng) -> Vec<(ChargeDensity, Ensemble)> {
    let mut out = Vec::new();
    while out.len() < SPIN_CORPUS {
        let side = SPIN_SIDES[out.len() % SPIN_SIDES.len()];
        let mid = Vertex::new(rng.gen_range(side / 4..3 * side / 4), rng.gen_range(side / 4..3 * side / 4));
        let Some(rho) = random_density(side, mid, 2, rng) else { continue };
        let mut members = vec![rho.clone()];
        for _ in 0..rng.gen_range(0..=2) {
            let at = Vertex::new(rng.gen_range(2..side - 2), rng.gen_range(2..side - 2));
            if let Some(r) = random_density(side, at, 1, rng) {
                members.push(r);
            }
        }
        let Ok(ens) = Ensemble::new(members) else { continue };
        if check_admissible(&ens, params).is_ok() {
            out.push((rho, ens));
        }
    }
    out
}

fn criterion_6() -> Outcome {
    let params = RenormParams::new(RENORM_ALPHA, RENORM_M).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 6);
    let corpus = spin_corpus(&params, &mut rng);
    let mut props = 0;
    let mut initial = 0;
    let mut additivity = 0f64;
    let mut d5 = f64::INFINITY;
    let mut worst_ratio = 1f64;
    let mut multi_scale = 0;
    let mut with_others = 0;
    for (rho, ens) in &corpus {
        let beta = rng.gen_range(0.1..1.0);
        let w = assemble_spin_wave(rho, ens, beta, &params).unwrap();
        props += w.report.all_pass() as usize;
        initial += w.report.initial_energy_bound as usize;
        with_others += (ens.len() > 1) as usize;
        additivity = additivity.max((w.energy(rho, beta) - w.piecewise_energy(rho, beta)).abs());
        let e: Vec<f64> = w.report.squares.iter().map(|s| s.scaled_energy).collect();
        if let (Some(lo), Some(hi)) = (e.iter().copied().reduce(f64::min), e.iter().copied().reduce(f64::max)) {
            d5 = d5.min(lo);
            if e.len() > 1 {
                multi_scale += 1;
                worst_ratio = worst_ratio.max(hi / lo);
            }
        }
    }
    let n = corpus.len();
    let pass = props == n
        && initial == n
        && additivity <= SPIN_ADDITIVITY_TOL
        && d5 > 0.0
        && d5.is_finite()
        && worst_ratio <= SPIN_D5_RATIO * (1.0 + SPIN_RATIO_ROUNDING);
    outcome(
        pass,
        format!(
            "{n} instances ({with_others} with other members): properties 1-4 {props}/{n}, initial bound {initial}/{n}, \
             additivity {additivity:.1e}, D5 {d5:.4}, worst scale ratio {worst_ratio:.3} over {multi_scale} multi-scale waves"
        ),
    )
}

fn criterion_7() -> Outcome {
    let d3 = SquareDomain::zero_boundary(3).unwrap();
    let mut holley = true;
    for beta in HOLLEY_BETAS {
        let lo = TruncatedMeasure::enumerate(&d3, beta, &IntField::zeros(3), HOLLEY_CAP).unwrap();
        let hi = TruncatedMeasure::enumerate(&d3, beta, &IntField::constant(3, 1), HOLLEY_CAP).unwrap();
        holley &= holley_check(&lo, &hi).unwrap();
    }
    let d5 = Arc::new(SquareDomain::zero_boundary(5).unwrap());
    let mut lo = ChainState::new(d5.clone(), 0.7, &IntField::zeros(5), SEED, 0).unwrap();
    let mut hi = ChainState::new(d5, 0.7, &IntField::constant(5, 1), SEED, 1).unwrap();
    let mut violations = 0;
    for _ in 0..COUPLED_SWEEPS {
        if coupled_step(&mut lo, &mut hi).is_err() {
            violations += 1;
            break;
        }
        violations += !lo.heights().le(hi.heights()) as usize;
    }
    outcome(holley && violations == 0, format!("Holley check {holley}; {violations} order violations in {COUPLED_SWEEPS} coupled sweeps"))
}

fn scaling_means(sides: &[usize], betas: &[f64]) -> Vec<(f64, Vec<f64>)> {
    let flags = Flags {
        l: Some(sides.to_vec()),
        beta: Some(betas.to_vec()),
        seed: Some(SEED),
        replicas: Some(SCALING_REPLICAS),
        ..Flags::default()
    };
    let out = ivgff_cli::run(&ExperimentConfig::resolve(Command::Scaling, flags).unwrap()).unwrap();
    for w in &out.warnings {
        println!("  warning: {w}");
    }
    betas
        .iter()
        .map(|&b| {
            let means = out.json["summaries"]
                .as_array()
                .unwrap()
                .iter()
                .filter(|s| s["beta"].as_f64() == Some(b))
                .map(|s| s["mean_max_abs_m"].as_f64().unwrap())
                .collect();
            (b, means)
        })
        .collect()
}

fn criterion_8() -> Outcome {
    let main = scaling_means(&SCALING_SIDES, &[SCALING_BETA]);
    let means = &main[0].1;
    let logs: Vec<f64> = SCALING_SIDES.iter().map(|&s| (s as f64).ln()).collect();
    let increasing = means.windows(2).all(|w| w[1] > w[0]);
    let (_, _, r2) = linear_fit(&logs, means);

    // per-beta slopes fitted on the sides up to 64
    let small: Vec<usize> = SCALING_SIDES.iter().copied().filter(|&s| s <= 64).collect();
    let small_logs: Vec<f64> = small.iter().map(|&s| (s as f64).ln()).collect();
    let others: Vec<f64> = SCALING_BETAS.iter().copied().filter(|&b| b != SCALING_BETA).collect();
    let mut per_beta = scaling_means(&small, &others);
    per_beta.push((SCALING_BETA, means[..small.len()].to_vec()));
    per_beta.sort_by(|a, b| a.0.total_cmp(&b.0));
    let scaled: Vec<f64> = per_beta.iter().map(|(b, m)| linear_fit(&small_logs, m).0 * b.sqrt()).collect();
    let centre = mean(&scaled);
    let stable = scaled.iter().all(|s| (s / centre - 1.0).abs() <= SCALING_SLOPE_REL);
    outcome(
        increasing && r2 >= SCALING_R2 && stable,
        format!(
            "mean max|m| {means:.3?} (increasing {increasing}, R2 {r2:.4}); slope*sqrt(beta) at beta {SCALING_BETAS:?}: {scaled:.3?}"
        ),
    )
}

fn criterion_9() -> Outcome {
    let mut worst = 0f64;
    for side in [3usize, 4] {
        let dom = SquareDomain::zero_boundary(side).unwrap();
        let zero = IntField::zeros(side);
        let mu = TruncatedMeasure::enumerate(&dom, GIBBS_BETA, &zero, GIBBS_CAP).unwrap();
        let mut chain = ChainState::new(Arc::new(dom.clone()), GIBBS_BETA, &zero, SEED, 9).unwrap();
        chain.run(1000);
        let sites = dom.interior();
        let width = (2 * GIBBS_CAP + 1) as usize;
        let mut counts = vec![vec![0u64; width]; sites.len()];
        let mut outside = vec![0u64; sites.len()];
        for _ in 0..GIBBS_SWEEPS {
            chain.sweep();
            for (k, &v) in sites.iter().enumerate() {
                let h = chain.heights()[v];
                if h.abs() <= GIBBS_CAP {
                    counts[k][(h + GIBBS_CAP) as usize] += 1;
                } else {
                    outside[k] += 1;
                }
            }
        }
        for (k, &v) in sites.iter().enumerate() {
            let exact = mu.marginal(v).unwrap();
            let n = GIBBS_SWEEPS as f64;
            let tv = 0.5
                * (exact.iter().zip(&counts[k]).map(|(p, &c)| (p - c as f64 / n).abs()).sum::<f64>()
                    + outside[k] as f64 / n);
            worst = worst.max(tv);
        }
    }
    outcome(worst <= GIBBS_TV, format!("largest single-site total variation {worst:.2e} after {GIBBS_SWEEPS} sweeps"))
}

fn main() {
    let criteria: [(u32, fn() -> Outcome); 9] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
    ];
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut unexpected = Vec::new();
    for (id, f) in criteria {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let o = f();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        let known = KNOWN_FAILURES.contains(&id);
        let note = if known && !o.pass { " [documented as unattainable]" } else { "" };
        println!("criterion {id}: {tag} ({:.1}s) {}{note}", start.elapsed().as_secs_f64(), o.detail);
        if o.pass == known {
            unexpected.push(id);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected outcome for criteria {unexpected:?}");
        std::process::exit(1);
    }
}
