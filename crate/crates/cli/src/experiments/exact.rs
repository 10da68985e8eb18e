//! Deterministic commands: `green`, `mgf` and `renorm-check`.

use anyhow::Result;
use ivgff::harmonic::GreensTable;
use ivgff::renorm::*;
use ivgff::sampler::replica_rng;
use ivgff::trig::{fejer_kernel, gaussian_mgf_bound, gaussian_mgf_lower_bound, iv_sym_mgf};
use ivgff::{GreensTable64, IntField, RealField64, SquareDomain, SubDomain, Vertex};
use rand::Rng;
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::output::{linear_fit, real, Output, Table};

/// Center `((L-1)/2, (L-1)/2)` of a side-`L` box.
pub fn box_center(side: usize) -> Vertex {
    SubDomain::new(Vertex::new(0, 0), side).center()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GreenRow {
    pub side: usize,
    pub dist: usize,
    pub green_diag: f64,
}

pub fn green_diagonal(side: usize) -> Result<GreenRow> {
    let dom = SquareDomain::zero_boundary(side)?;
    let j = box_center(side);
    let g = GreensTable::<f64>::new(&dom)?.get(j, j)?;
    Ok(GreenRow { side, dist: dom.distance_to_boundary(j), green_diag: g })
}

/// `G(j*, j*)` at the center against `log dist(j*, boundary)` with a least-squares line.
pub fn cmd_green(cfg: &ExperimentConfig) -> Result<Output> {
    let rows: Vec<GreenRow> = cfg.l.iter().map(|&s| green_diagonal(s)).collect::<Result<_>>()?;
    let mut table = Table::new(&["L", "dist", "log_dist", "green_diag"]);
    for r in &rows {
        table.push(vec![r.side.to_string(), r.dist.to_string(), real((r.dist as f64).ln()), real(r.green_diag)]);
    }
    let mut json = json!({"config": cfg.metadata(), "reference_slope": 1.0 / (2.0 * std::f64::consts::PI)});
    if rows.len() >= 2 {
        let x: Vec<f64> = rows.iter().map(|r| (r.dist as f64).ln()).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.green_diag).collect();
        let (slope, intercept, r2) = linear_fit(&x, &y);
        json["slope"] = json!(slope);
        json["intercept"] = json!(intercept);
        json["r2"] = json!(r2);
    }
    Ok(Output { table: Some(table), json, warnings: Vec::new(), failed: false })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MgfRow {
    pub side: usize,
    pub t: f64,
    pub beta: f64,
    pub exact: f64,
    pub upper: f64,
    pub lower: f64,
    pub trunc_bound: f64,
}

impl MgfRow {
    /// `upper - exact`; negative values within `trunc_bound` are attributable to the height cap.
    pub fn upper_slack(&self) -> f64 {
        self.upper - self.exact
    }

    pub fn lower_slack(&self) -> f64 {
        self.exact - self.lower
    }

    pub fn upper_holds(&self) -> bool {
        self.upper_slack() >= -(self.trunc_bound + 1e-9)
    }

    pub fn lower_holds(&self) -> bool {
        self.lower_slack() >= -(self.trunc_bound + 1e-9)
    }
}

/// Enumerated `E e^{t<m, f*>}` with `f*` the center's dual basis vector, and the
/// Gaussian upper bound `exp(<sigma,f>/2beta)` and lower bound `exp(<sigma,f>/4beta)`.
pub fn mgf_rows(side: usize, betas: &[f64], ts: &[f64], cap: i64) -> Result<Vec<MgfRow>> {
    let dom = SquareDomain::zero_boundary(side)?;
    let g = GreensTable64::new(&dom)?;
    let fstar = g.dual_basis(box_center(side))?;
    let zero = IntField::zeros(side);
    let mut rows = Vec::new();
    for &beta in betas {
        for &t in ts {
            let f = fstar.scaled(t);
            let sigma = g.inverse_laplacian(&f)?;
            let (exact, trunc_bound) = iv_sym_mgf(&dom, beta, &zero, &f, cap)?;
            rows.push(MgfRow {
                side,
                t,
                beta,
                exact,
                upper: gaussian_mgf_bound(&sigma, &f, beta),
                lower: gaussian_mgf_lower_bound(&sigma, &f, beta, 1.0),
                trunc_bound,
            });
        }
    }
    Ok(rows)
}

/// Largest `beta` of the scan such that the lower bound holds at every scanned `beta' <= beta`.
pub fn lower_threshold(rows: &[MgfRow]) -> Option<f64> {
    let mut betas: Vec<f64> = rows.iter().map(|r| r.beta).collect();
    betas.sort_by(f64::total_cmp);
    betas.dedup();
    let mut best = None;
    for b in betas {
        if rows.iter().filter(|r| r.beta == b).all(MgfRow::lower_holds) {
            best = Some(b);
        } else {
            break;
        }
    }
    best
}

pub fn cmd_mgf(cfg: &ExperimentConfig) -> Result<Output> {
    let mut table = Table::new(&[
        "L",
        "t",
        "beta",
        "exact",
        "upper",
        "lower",
        "trunc_bound",
        "upper_slack",
        "lower_slack",
    ]);
    let mut thresholds = Vec::new();
    for &side in &cfg.l {
        let rows = mgf_rows(side, &cfg.beta, &cfg.t, cfg.h)?;
        for r in &rows {
            table.push(vec![
                side.to_string(),
                real(r.t),
                real(r.beta),
                real(r.exact),
                real(r.upper),
                real(r.lower),
                real(r.trunc_bound),
                real(r.upper_slack()),
                real(r.lower_slack()),
            ]);
        }
        thresholds.push(json!({
            "L": side,
            "upper_holds": rows.iter().all(MgfRow::upper_holds),
            "lower_threshold_beta": lower_threshold(&rows),
        }));
    }
    let json = json!({"config": cfg.metadata(), "bounds": thresholds});
    Ok(Output { table: Some(table), json, warnings: Vec::new(), failed: false })
}

/// Everything `renorm-check` measures on one tiny box.
#[derive(Clone, Debug)]
pub struct RenormRun {
    pub expansion: ConvexExpansion,
    pub modified: ModifiedExpansion,
    pub checks: ExpansionChecks,
    pub identity_max_error: f64,
    /// `psi` at the worst identity sample.
    pub worst_psi: RealField64,
    pub modified_max_error: f64,
    pub worst_modified_term: Option<usize>,
    pub max_abs_z: f64,
    pub spin_wave_pass: usize,
    pub spin_wave_total: usize,
    pub d5: Option<f64>,
    pub c2: f64,
}

pub const IDENTITY_TOL: f64 = 1e-8;
pub const IDENTITY_SAMPLES: usize = 200;

/// `lambda_j = F_N` on every interior site of a side-`L` box.
pub fn run_renorm(side: usize, fejer: usize, beta: f64, params: &RenormParams, seed: u64) -> Result<RenormRun> {
    let lambdas = vec![fejer_kernel(fejer)?; (side - 2) * (side - 2)];
    let expansion = convex_expansion(side, &lambdas, params)?;
    let checks = ExpansionChecks::run(&expansion, &lambdas, params, central_box(side).as_ref())?;
    let mut rng = replica_rng(seed, 0);
    let tau = 2.0 * std::f64::consts::PI;
    let interior: Vec<Vertex> = SquareDomain::zero_boundary(side)?.interior();
    let mut identity_max_error = 0.0;
    let mut worst_psi = RealField64::zeros(side);
    for _ in 0..IDENTITY_SAMPLES {
        let psi = RealField64::from_fn(side, |_| rng.gen_range(-tau..tau));
        let direct: f64 = interior.iter().zip(&lambdas).map(|(&v, l)| l.eval(psi[v])).product();
        let err = (direct - expansion.eval(&psi)).abs();
        if err >= identity_max_error {
            identity_max_error = err;
            worst_psi = psi;
        }
    }
    let modified = coefficient_modify(&expansion, beta, params)?;
    let greens = GreensTable64::new(&SquareDomain::zero_boundary(side)?)?;
    let mut modified_max_error = 0.0;
    let mut worst_modified_term = None;
    for (i, t) in modified.expansion.terms.iter().enumerate() {
        let g = RealField64::from_fn(side, |_| rng.gen_range(-tau..tau));
        let (lhs, rhs) = modified_term_integrals(&greens, t, beta, &g)?;
        let err = (lhs - rhs).abs();
        if err > modified_max_error {
            modified_max_error = err;
            worst_modified_term = Some(i);
        }
    }
    let max_abs_z = modified
        .expansion
        .terms
        .iter()
        .flat_map(|t| &t.factors)
        .map(|f| f.coefficient.abs())
        .fold(0.0, f64::max);
    let spin_wave_pass = modified.reports.iter().filter(|r| r.all_pass()).count();
    let d5 = modified
        .reports
        .iter()
        .flat_map(|r| &r.squares)
        .map(|s| s.scaled_energy)
        .reduce(f64::min);
    let c2 = measured_c2(&modified.expansion, beta);
    Ok(RenormRun {
        spin_wave_total: modified.reports.len(),
        expansion,
        modified,
        checks,
        identity_max_error,
        worst_psi,
        modified_max_error,
        worst_modified_term,
        max_abs_z,
        spin_wave_pass,
        d5,
        c2,
    })
}

impl RenormRun {
    pub fn identity_ok(&self) -> bool {
        self.identity_max_error <= IDENTITY_TOL
            && self.modified_max_error <= IDENTITY_TOL
            && (self.checks.weight_sum - 1.0).abs() <= 1e-12
            && self.checks.min_weight > 0.0
    }

    pub fn properties_ok(&self) -> bool {
        self.checks.separation
            && self.checks.constituents != Some(false)
            && self.checks.disc_disjoint
            && self.checks.single_charged
            && self.spin_wave_pass == self.spin_wave_total
    }
}

pub fn cmd_renorm_check(cfg: &ExperimentConfig) -> Result<Output> {
    let (side, beta) = (cfg.l[0], cfg.beta[0]);
    let run = run_renorm(side, cfg.n, beta, &cfg.renorm, cfg.seed)?;
    let c = &run.checks;
    let identity_ok = run.identity_ok();
    let z_below_one = run.max_abs_z < 1.0;
    let mut json = json!({
        "config": cfg.metadata(),
        "terms": c.terms,
        "k_star": c.k_star,
        "weight_sum": c.weight_sum,
        "min_weight": c.min_weight,
        "identity": {
            "samples": IDENTITY_SAMPLES,
            "max_error": run.identity_max_error,
            "modified_max_error": run.modified_max_error,
            "tolerance": IDENTITY_TOL,
            "pass": identity_ok,
        },
        "properties": {
            "separation": c.separation,
            "constituents": c.constituents,
            "disc_disjoint": c.disc_disjoint,
            "single_charged": c.single_charged,
            "disc_failures": c.disc_failures,
            "charged_failures": c.charged_failures,
            "spin_wave_pass": run.spin_wave_pass,
            "spin_wave_total": run.spin_wave_total,
        },
        "max_abs_z": run.max_abs_z,
        "z_below_one": z_below_one,
        "D4": c.d4,
        "D5": run.d5,
        "c2": run.c2,
        "all_pass": identity_ok && run.properties_ok() && z_below_one,
    });
    if !identity_ok {
        json["offending_psi"] = json!(run.worst_psi.values);
        if let Some(i) = run.worst_modified_term {
            let single = ConvexExpansion { terms: vec![run.modified.expansion.terms[i].clone()], k_star: c.k_star };
            json["offending_term"] = expansion_json(&single);
        }
    }
    if run.expansion.terms.len() <= 1000 {
        json["expansion"] = expansion_json(&run.modified.expansion);
    }
    let failed = !identity_ok;
    let mut warnings = Vec::new();
    if failed {
        warnings.push("expansion identity failed; offending data serialized in the report".into());
    }
    Ok(Output { table: None, json, warnings, failed })
}
