//! Monte Carlo commands: `scaling`, `decompose` and `layered`.

use std::sync::Arc;

use anyhow::Result;
use ivgff::lattice::annulus_schedule;
use ivgff::sampler::{coupled_step, ChainState, ConditionalTable};
use ivgff::{IntField, SquareDomain, Vertex};
use rayon::prelude::*;
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::output::{linear_fit, mean, quantile, real, std_dev, Output, Table};

/// Seed of the chains for one value of beta, so streams do not depend on the list order.
fn seed_for(seed: u64, beta: f64) -> u64 {
    seed ^ beta.to_bits().rotate_left(17)
}

fn max_heights(h: &IntField) -> (i64, i64) {
    h.values.iter().fold((i64::MIN, 0), |(mx, ma), &x| (mx.max(x), ma.max(x.abs())))
}

#[derive(Clone, Copy, Debug)]
struct ReplicaMax {
    max_m: i64,
    max_abs: i64,
    first_half: f64,
    second_half: f64,
}

fn scaling_replica(
    domain: Arc<SquareDomain>,
    table: Arc<ConditionalTable>,
    burn_in: u64,
    sweeps: u64,
    seed: u64,
    stream: u64,
) -> Result<ReplicaMax> {
    let zero = IntField::zeros(domain.side());
    let mut chain = ChainState::with_table(domain, table, &zero, seed, stream)?;
    chain.run(burn_in);
    let mut series = Vec::with_capacity(sweeps as usize);
    for _ in 0..sweeps {
        chain.sweep();
        series.push(max_heights(chain.heights()).1 as f64);
    }
    let (max_m, max_abs) = max_heights(chain.heights());
    let half = series.len() / 2;
    let (first_half, second_half) =
        if half == 0 { (0.0, 0.0) } else { (mean(&series[..half]), mean(&series[series.len() - half..])) };
    Ok(ReplicaMax { max_m, max_abs, first_half, second_half })
}

/// z-score of the mean split-half drift of max|m| across replicas.
pub fn drift_score(first: &[f64], second: &[f64]) -> Option<f64> {
    if first.len() < 2 {
        return None;
    }
    let d: Vec<f64> = first.iter().zip(second).map(|(a, b)| b - a).collect();
    let m = mean(&d);
    let se = std_dev(&d) / (d.len() as f64).sqrt();
    if se == 0.0 {
        return Some(if m == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Some(m / se)
}

pub const SCALING_HEADER: &[&str] = &[
    "kind",
    "L",
    "beta",
    "replica",
    "max_m",
    "max_abs_m",
    "mean_max_m",
    "mean_max_abs_m",
    "stderr_max_abs_m",
    "q10_max_abs_m",
    "q50_max_abs_m",
    "q90_max_abs_m",
    "slope",
    "intercept",
    "r2",
];

fn scaling_row(kind: &str, fill: &[(usize, String)]) -> Vec<String> {
    let mut row = vec![String::new(); SCALING_HEADER.len()];
    row[0] = kind.to_string();
    for (i, s) in fill {
        row[*i] = s.clone();
    }
    row
}

/// Per replica the final max m and max |m|; per (L, beta) a summary row; per beta
/// the least-squares slope of mean max|m| against log L.
pub fn cmd_scaling(cfg: &ExperimentConfig) -> Result<Output> {
    let mut table = Table::new(SCALING_HEADER);
    let mut summaries = Vec::new();
    let mut slopes = Vec::new();
    let mut warnings = Vec::new();
    for &beta in &cfg.beta {
        let cond = Arc::new(ConditionalTable::new(beta)?);
        let seed = seed_for(cfg.seed, beta);
        let mut logs = Vec::new();
        let mut means = Vec::new();
        for &side in &cfg.l {
            let domain = Arc::new(SquareDomain::new(side, cfg.topology.topology())?);
            let burn = cfg.burn_in_for(side);
            let reps: Vec<ReplicaMax> = (0..cfg.replicas as u64)
                .into_par_iter()
                .map(|r| scaling_replica(domain.clone(), cond.clone(), burn, cfg.sweeps, seed, ((side as u64) << 32) | r))
                .collect::<Result<_>>()?;
            for (r, x) in reps.iter().enumerate() {
                table.push(scaling_row(
                    "replica",
                    &[
                        (1, side.to_string()),
                        (2, real(beta)),
                        (3, r.to_string()),
                        (4, x.max_m.to_string()),
                        (5, x.max_abs.to_string()),
                    ],
                ));
            }
            let abs: Vec<f64> = reps.iter().map(|x| x.max_abs as f64).collect();
            let mx: Vec<f64> = reps.iter().map(|x| x.max_m as f64).collect();
            let (m_abs, m_max) = (mean(&abs), mean(&mx));
            let stderr = std_dev(&abs) / (abs.len() as f64).sqrt();
            let qs = [0.1, 0.5, 0.9].map(|p| quantile(&abs, p));
            table.push(scaling_row(
                "summary",
                &[
                    (1, side.to_string()),
                    (2, real(beta)),
                    (6, real(m_max)),
                    (7, real(m_abs)),
                    (8, real(stderr)),
                    (9, real(qs[0])),
                    (10, real(qs[1])),
                    (11, real(qs[2])),
                ],
            ));
            let first: Vec<f64> = reps.iter().map(|x| x.first_half).collect();
            let second: Vec<f64> = reps.iter().map(|x| x.second_half).collect();
            let drift = drift_score(&first, &second);
            if let Some(z) = drift.filter(|z| z.abs() > 3.0) {
                warnings.push(format!(
                    "L={side} beta={beta}: max|m| drifts by {z:.2} standard errors between measurement halves; \
                     chains may not be equilibrated"
                ));
            }
            summaries.push(json!({
                "L": side, "beta": beta, "burn_in": burn, "mean_max_abs_m": m_abs,
                "stderr_max_abs_m": stderr, "drift_z": drift,
            }));
            logs.push((side as f64).ln());
            means.push(m_abs);
        }
        if logs.len() >= 2 {
            let (slope, intercept, r2) = linear_fit(&logs, &means);
            table.push(scaling_row("slope", &[(2, real(beta)), (12, real(slope)), (13, real(intercept)), (14, real(r2))]));
            slopes.push(json!({"beta": beta, "slope": slope, "intercept": intercept, "r2": r2,
                               "slope_sqrt_beta": slope * beta.sqrt()}));
        }
    }
    let json = json!({"config": cfg.metadata(), "summaries": summaries, "slopes": slopes, "warnings": warnings});
    Ok(Output { table: Some(table), json, warnings, failed: false })
}

fn restrict(h: &IntField, origin: Vertex, side: usize) -> IntField {
    IntField::from_fn(side, |v| h[Vertex::new(v.x + origin.x, v.y + origin.y)])
}

/// Freezes one sampled configuration on the box boundaries of a side-`R` grid and
/// re-samples every box interior to estimate `U = P(max_box |m| >= log R / sqrt(beta) | boundary)`.
pub fn cmd_decompose(cfg: &ExperimentConfig) -> Result<Output> {
    let (side, beta) = (cfg.l[0], cfg.beta[0]);
    let r = cfg.r.unwrap_or(side);
    let seed = seed_for(cfg.seed, beta);
    let threshold = (r as f64).ln() / beta.sqrt();
    let cond = Arc::new(ConditionalTable::new(beta)?);
    let domain = Arc::new(SquareDomain::zero_boundary(side)?);
    let zero = IntField::zeros(side);
    let burn = cfg.burn_in_for(side);

    let mut base = ChainState::with_table(domain.clone(), cond.clone(), &zero, seed, 0)?;
    base.run(burn);
    let frozen = base.heights().clone();
    let boxes = domain.grid_partition(r)?;
    let box_domain = Arc::new(SquareDomain::zero_boundary(r)?);
    let resample_burn = cfg.sweeps;

    let jobs: Vec<(usize, u64)> =
        (0..boxes.len()).flat_map(|b| (0..cfg.replicas as u64).map(move |k| (b, k))).collect();
    let hits: Vec<bool> = jobs
        .par_iter()
        .map(|&(b, k)| -> Result<bool> {
            let local = restrict(&frozen, boxes[b].origin, r);
            let stream = (1u64 << 62) | ((b as u64) << 24) | k;
            let mut chain = ChainState::with_table(box_domain.clone(), cond.clone(), &local, seed, stream)?;
            chain.set_heights(local)?;
            chain.run(resample_burn);
            Ok(max_heights(chain.heights()).1 as f64 >= threshold)
        })
        .collect::<Result<_>>()?;

    let mut table = Table::new(&["box", "origin_x", "origin_y", "U", "exceed", "samples"]);
    let mut us = Vec::with_capacity(boxes.len());
    for (b, sd) in boxes.iter().enumerate() {
        let exceed = hits[b * cfg.replicas..(b + 1) * cfg.replicas].iter().filter(|&&x| x).count();
        let u = exceed as f64 / cfg.replicas as f64;
        us.push(u);
        table.push(vec![
            b.to_string(),
            sd.origin.x.to_string(),
            sd.origin.y.to_string(),
            real(u),
            exceed.to_string(),
            cfg.replicas.to_string(),
        ]);
    }

    let covered: Vec<Vertex> = boxes.iter().flat_map(|b| b.vertices()).collect();
    let small: Vec<bool> = (0..cfg.replicas as u64)
        .into_par_iter()
        .map(|k| -> Result<bool> {
            let mut c = ChainState::with_table(domain.clone(), cond.clone(), &zero, seed, (2u64 << 61) | k)?;
            c.run(burn);
            Ok(covered.iter().all(|&v| (c.heights()[v].abs() as f64) < threshold))
        })
        .collect::<Result<_>>()?;
    let observed_small = small.iter().filter(|&&x| x).count() as f64 / small.len() as f64;
    let min_u = us.iter().copied().fold(f64::INFINITY, f64::min);
    let product_bound = (1.0 - min_u).powi(boxes.len() as i32);
    let below: Vec<_> = [0.5, 1.0, 2.0]
        .iter()
        .map(|&w| {
            let cut = (r as f64).powf(-w);
            json!({"w": w, "fraction_below": us.iter().filter(|&&u| u < cut).count() as f64 / us.len() as f64})
        })
        .collect();
    let json = json!({
        "config": cfg.metadata(), "threshold": threshold, "boxes": boxes.len(), "min_U": min_u,
        "product_bound": product_bound, "observed_small_max_frequency": observed_small,
        "below_R_pow_minus_w": below, "resample_sweeps": resample_burn,
    });
    Ok(Output { table: Some(table), json, warnings: Vec::new(), failed: false })
}

/// Conditional frequencies of the layer events
/// `E_{k,1} = {max_{A_k} m >= (delta_k - b_k) log L / sqrt(beta)}` and
/// `E_{k,2} = {min_{boundary of Lambda_k} m >= -b_k log L / sqrt(beta)}`, plus a
/// coupled-chain comparison of the exceedance under lowered and zero boundary data.
pub fn cmd_layered(cfg: &ExperimentConfig) -> Result<Output> {
    let (side, beta) = (cfg.l[0], cfg.beta[0]);
    let seed = seed_for(cfg.seed, beta);
    let layers = annulus_schedule(side, cfg.n, cfg.delta)?;
    let scale = (side as f64).ln() / beta.sqrt();
    let cond = Arc::new(ConditionalTable::new(beta)?);
    let domain = Arc::new(SquareDomain::zero_boundary(side)?);
    let zero = IntField::zeros(side);
    let burn = cfg.burn_in_for(side);
    let boundaries: Vec<Vec<Vertex>> = layers.iter().map(|l| l.region.boundary()).collect();

    let events: Vec<Vec<(bool, bool)>> = (0..cfg.replicas as u64)
        .into_par_iter()
        .map(|k| -> Result<Vec<(bool, bool)>> {
            let mut c = ChainState::with_table(domain.clone(), cond.clone(), &zero, seed, k)?;
            c.run(burn);
            let h = c.heights();
            Ok(layers
                .iter()
                .zip(&boundaries)
                .map(|(l, bd)| {
                    let top = l.annulus.iter().map(|&v| h[v]).max().unwrap_or(i64::MIN) as f64;
                    let low = bd.iter().map(|&v| h[v]).min().unwrap_or(0) as f64;
                    (top >= (l.delta - l.b) * scale, low >= -l.b * scale)
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    let mut table = Table::new(&[
        "k",
        "delta_k",
        "b_k",
        "width",
        "e2",
        "e1_and_e2",
        "p_e1_given_e2",
        "next_e2c_and_e2",
        "p_next_e2c_given_e2",
        "mono_low_exceed",
        "mono_high_exceed",
        "mono_pairs",
    ]);
    for (k, l) in layers.iter().enumerate() {
        let e2 = events.iter().filter(|e| e[k].1).count();
        let e12 = events.iter().filter(|e| e[k].0 && e[k].1).count();
        let next = if k + 1 < layers.len() {
            Some(events.iter().filter(|e| e[k].1 && !e[k + 1].1).count())
        } else {
            None
        };
        let ratio = |a: usize| if e2 == 0 { f64::NAN } else { a as f64 / e2 as f64 };
        let (lo, hi) = monotone_pair_exceedance(cfg, l, scale, seed, k as u64)?;
        table.push(vec![
            (k + 1).to_string(),
            real(l.delta),
            real(l.b),
            l.width.to_string(),
            e2.to_string(),
            e12.to_string(),
            real(ratio(e12)),
            next.map(|n| n.to_string()).unwrap_or_default(),
            next.map(|n| real(ratio(n))).unwrap_or_default(),
            lo.to_string(),
            hi.to_string(),
            cfg.replicas.to_string(),
        ]);
    }
    let json = json!({"config": cfg.metadata(), "layers": layers.len(), "log_scale": scale});
    Ok(Output { table: Some(table), json, warnings: Vec::new(), failed: false })
}

/// Coupled chains on `Lambda_k` with boundary `floor(-b_k log L / sqrt(beta))` and `0`:
/// counts of `E_{k,1}` for each. The coupling keeps the lower chain below the upper one.
fn monotone_pair_exceedance(
    cfg: &ExperimentConfig,
    layer: &ivgff::lattice::AnnulusLayer,
    scale: f64,
    seed: u64,
    k: u64,
) -> Result<(usize, usize)> {
    let sub = layer.region;
    let dom = Arc::new(sub.as_domain()?);
    let low_value = (-layer.b * scale).floor() as i64;
    let low_bd = IntField::from_fn(sub.side, |v| if dom.is_boundary(v) { low_value } else { 0 });
    let zero = IntField::zeros(sub.side);
    let cond = Arc::new(ConditionalTable::new(cfg.beta[0])?);
    let annulus: Vec<Vertex> = layer.annulus.iter().map(|&v| sub.to_local(v)).collect();
    let target = (layer.delta - layer.b) * scale;
    let burn = cfg.burn_in_for(sub.side);
    let pairs: Vec<(bool, bool)> = (0..cfg.replicas as u64)
        .into_par_iter()
        .map(|r| -> Result<(bool, bool)> {
            let stream = (3u64 << 60) | (k << 32) | r;
            let mut lo = ChainState::with_table(dom.clone(), cond.clone(), &low_bd, seed, stream)?;
            let mut hi = ChainState::with_table(dom.clone(), cond.clone(), &zero, seed, stream)?;
            for _ in 0..burn {
                coupled_step(&mut lo, &mut hi)?;
            }
            let top = |c: &ChainState| annulus.iter().map(|&v| c.heights()[v]).max().unwrap_or(i64::MIN) as f64;
            Ok((top(&lo) >= target, top(&hi) >= target))
        })
        .collect::<Result<_>>()?;
    Ok((pairs.iter().filter(|p| p.0).count(), pairs.iter().filter(|p| p.1).count()))
}
