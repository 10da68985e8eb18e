//! Trigonometric weights, Fejér kernels, moment-generating-function bounds and
//! the Gaussian expectations of products of trigonometric polynomials.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::harmonic::GreensTable;
use crate::lattice::{IntField, RealField, SquareDomain, Vertex};
use crate::sampler::TruncatedMeasure;

/// Largest interior size accepted by the Gaussian trigonometric integrals.
pub const MAX_TILTED_SITES: usize = 3;

/// `λ(x) = 1 + 2 Σ_{q=1}^N λ̂_q cos(qx)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrigPolynomial {
    coeffs: Vec<f64>,
}

impl TrigPolynomial {
    /// From `λ̂_1, …, λ̂_N`.
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    /// The constant polynomial 1.
    pub fn one() -> Self {
        Self { coeffs: Vec::new() }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len()
    }

    /// `λ̂_q`, with `λ̂_0 = 1` and `λ̂_q = 0` beyond the degree.
    pub fn coeff(&self, q: i64) -> f64 {
        let q = q.unsigned_abs() as usize;
        match q {
            0 => 1.0,
            _ => self.coeffs.get(q - 1).copied().unwrap_or(0.0),
        }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn eval(&self, x: f64) -> f64 {
        1.0 + 2.0 * self.coeffs.iter().enumerate().map(|(k, c)| c * ((k + 1) as f64 * x).cos()).sum::<f64>()
    }
}

/// `F_N(x) = 1 + Σ_{q=1}^{N-1} 2(1 - q/N) cos(qx)`.
pub fn fejer_kernel(n: usize) -> Result<TrigPolynomial> {
    if n < 1 {
        return Err(Error::InvalidParameter("Fejér kernel order must be at least 1".into()));
    }
    Ok(TrigPolynomial::new((1..n).map(|q| 1.0 - q as f64 / n as f64).collect()))
}

/// Parameters of the bound `|λ̂_q| <= Γ exp((η + θ/β) q²)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SubGaussParams {
    pub gamma: f64,
    pub eta: f64,
    pub theta: f64,
}

impl SubGaussParams {
    pub fn new(gamma: f64, eta: f64, theta: f64) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(Error::InvalidParameter(format!("gamma {gamma} must be positive")));
        }
        if !(0.0..1.0 / 16.0).contains(&theta) {
            return Err(Error::InvalidParameter(format!("theta {theta} not in [0, 1/16)")));
        }
        Ok(Self { gamma, eta, theta })
    }
}

/// Whether every coefficient of `p` satisfies the sub-Gaussian bound at `beta`.
pub fn sub_gaussian_check(p: &TrigPolynomial, params: &SubGaussParams, beta: f64) -> Result<bool> {
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter(format!("beta {beta} must be positive")));
    }
    Ok(p.coeffs.iter().enumerate().all(|(k, &c)| {
        let q = (k + 1) as f64;
        c.abs() <= params.gamma * ((params.eta + params.theta / beta) * q * q).exp()
    }))
}

/// Upper bound `exp(⟨σ, f⟩ / 2β)` on the integer-valued field's MGF.
pub fn gaussian_mgf_bound(sigma: &RealField<f64>, f: &RealField<f64>, beta: f64) -> f64 {
    (sigma.dot(f) / (2.0 * beta)).exp()
}

/// Lower bound `exp(⟨σ, f⟩ / (2(1+ε)β))` on the symmetrized field's MGF.
pub fn gaussian_mgf_lower_bound(sigma: &RealField<f64>, f: &RealField<f64>, beta: f64, epsilon: f64) -> f64 {
    (sigma.dot(f) / (2.0 * (1.0 + epsilon) * beta)).exp()
}

/// `s_β = 32π√β`.
pub fn s_beta(beta: f64) -> f64 {
    32.0 * PI * beta.sqrt()
}

/// Exponent `p² s_β² G / 2β - p x` of the Markov bound at moment `p`.
pub fn chernoff_exponent(p: f64, x: f64, g_diag: f64, beta: f64) -> f64 {
    p * p * s_beta(beta).powi(2) * g_diag / (2.0 * beta) - p * x
}

/// `exp(-βx² / (2 s_β² G))`, the optimized Markov bound, valid when the optimal
/// moment `p = xβ / (s_β² G)` is at least 1.
pub fn chernoff_tail(x: f64, g_diag: f64, beta: f64) -> Result<f64> {
    chernoff_log_tail(x, g_diag, beta).map(f64::exp)
}

/// Logarithm of [`chernoff_tail`]; the tail itself underflows for moderate `G`.
pub fn chernoff_log_tail(x: f64, g_diag: f64, beta: f64) -> Result<f64> {
    let s2 = s_beta(beta).powi(2);
    let threshold = s2 / beta * g_diag;
    if x < threshold {
        return Err(Error::BelowThreshold(format!("x = {x} below s_β²G/β = {threshold}")));
    }
    Ok(-beta * x * x / (2.0 * s2 * g_diag))
}

/// Gaussian law of the interior values of the real field with boundary data `h`:
/// mean `h̃`, covariance `G/β`.
#[derive(Clone, Debug)]
pub struct InteriorGaussian {
    pub sites: Vec<Vertex>,
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    /// `⟨h̃, f⟩` contributions from the boundary are added by the caller.
    pub extension: RealField<f64>,
}

impl InteriorGaussian {
    pub fn new(domain: &SquareDomain, table: &GreensTable<f64>, beta: f64, h: &RealField<f64>) -> Result<Self> {
        if !(beta > 0.0) {
            return Err(Error::InvalidParameter(format!("beta {beta} must be positive")));
        }
        let sites = domain.interior();
        let extension = table.harmonic_extension(h)?;
        let mean = sites.iter().map(|&v| extension[v]).collect();
        let mut cov = vec![vec![0.0; sites.len()]; sites.len()];
        for (a, &u) in sites.iter().enumerate() {
            for (b, &w) in sites.iter().enumerate() {
                cov[a][b] = table.get(u, w)? / beta;
            }
        }
        Ok(Self { sites, mean, cov, extension })
    }

    fn quad(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut acc = 0.0;
        for a in 0..x.len() {
            for b in 0..y.len() {
                acc += x[a] * self.cov[a][b] * y[b];
            }
        }
        acc
    }

    fn cholesky(&self) -> Vec<Vec<f64>> {
        let n = self.sites.len();
        let mut l = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..=i {
                let s: f64 = self.cov[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
                l[i][j] = if i == j { s.sqrt() } else { s / l[j][j] };
            }
        }
        l
    }
}

fn check_sites(domain: &SquareDomain, lambdas: &[TrigPolynomial]) -> Result<usize> {
    let n = domain.interior().len();
    if n > MAX_TILTED_SITES {
        return Err(Error::TooLarge(format!("{n} interior sites (limit {MAX_TILTED_SITES})")));
    }
    if lambdas.len() != n {
        return Err(Error::InvalidArgument(format!("{} polynomials for {n} interior sites", lambdas.len())));
    }
    Ok(n)
}

/// `E^{GFF}_{β,Λ,h}[e^{⟨φ,f⟩} Π_j λ_j(φ_j + g_j)]` in closed form.
///
/// Each product is expanded into characters `e^{i⟨q,φ⟩}` and integrated with
/// `E e^{⟨φ, f + iq⟩} = exp(⟨h̃, f + iq⟩ + ½⟨f + iq, C(f + iq)⟩)`.
pub fn gaussian_trig_expectation(
    domain: &SquareDomain,
    beta: f64,
    lambdas: &[TrigPolynomial],
    h: &RealField<f64>,
    g: &RealField<f64>,
    f: &RealField<f64>,
) -> Result<f64> {
    let n = check_sites(domain, lambdas)?;
    let table = GreensTable::<f64>::new(domain)?;
    let law = InteriorGaussian::new(domain, &table, beta, h)?;
    let fi: Vec<f64> = law.sites.iter().map(|&v| f[v]).collect();
    let cf: Vec<f64> = (0..n).map(|a| (0..n).map(|b| law.cov[a][b] * fi[b]).sum()).collect();
    let prefactor = law.extension.dot(f) + 0.5 * law.quad(&fi, &fi);
    let phase: Vec<f64> = (0..n).map(|a| law.mean[a] + cf[a] + g[law.sites[a]]).collect();
    let degs: Vec<i64> = lambdas.iter().map(|p| p.degree() as i64).collect();
    let mut q = vec![0i64; n];
    let mut sum = 0.0;
    for_each_multi_index(&degs, &mut q, &mut |q| {
        let c: f64 = q.iter().zip(lambdas).map(|(&qj, p)| p.coeff(qj)).product();
        if c == 0.0 {
            return;
        }
        let qf: Vec<f64> = q.iter().map(|&x| x as f64).collect();
        let arg: f64 = qf.iter().zip(&phase).map(|(a, b)| a * b).sum();
        sum += c * arg.cos() * (-0.5 * law.quad(&qf, &qf)).exp();
    });
    Ok(prefactor.exp() * sum)
}

fn for_each_multi_index(degs: &[i64], q: &mut Vec<i64>, f: &mut dyn FnMut(&[i64])) {
    fn rec(k: usize, degs: &[i64], q: &mut Vec<i64>, f: &mut dyn FnMut(&[i64])) {
        if k == degs.len() {
            f(q);
            return;
        }
        for v in -degs[k]..=degs[k] {
            q[k] = v;
            rec(k + 1, degs, q, f);
        }
    }
    rec(0, degs, q, f)
}

/// The same expectation by tensor trapezoid quadrature in whitened coordinates.
/// Independent of the character expansion; used as a cross-check.
pub fn gaussian_trig_expectation_quadrature(
    domain: &SquareDomain,
    beta: f64,
    lambdas: &[TrigPolynomial],
    h: &RealField<f64>,
    g: &RealField<f64>,
    f: &RealField<f64>,
) -> Result<f64> {
    let n = check_sites(domain, lambdas)?;
    let table = GreensTable::<f64>::new(domain)?;
    let law = InteriorGaussian::new(domain, &table, beta, h)?;
    let l = law.cholesky();
    let fi: Vec<f64> = law.sites.iter().map(|&v| f[v]).collect();
    // tilt in whitened coordinates: ⟨φ_I, f_I⟩ = ⟨m, f_I⟩ + ⟨Lᵀ f_I, z⟩
    let b: Vec<f64> = (0..n).map(|k| (0..n).map(|a| l[a][k] * fi[a]).sum()).collect();
    let boundary: f64 = domain
        .vertices()
        .filter(|&v| domain.is_boundary(v))
        .map(|v| h[v] * f[v])
        .sum::<f64>()
        + law.mean.iter().zip(&fi).map(|(m, x)| m * x).sum::<f64>();
    let lmax = l.iter().flatten().fold(0.0f64, |m, &x| m.max(x.abs()));
    let deg = lambdas.iter().map(|p| p.degree()).max().unwrap_or(0) as f64;
    let omega = deg * lmax * n as f64;
    let step = 2.0 * PI / (omega + 14.0);
    let ranges: Vec<(f64, usize)> = b
        .iter()
        .map(|&bk| {
            let lo = bk.min(0.0) - 11.0;
            let hi = bk.max(0.0) + 11.0;
            (lo, ((hi - lo) / step).ceil() as usize + 1)
        })
        .collect();
    let weight = (step / (2.0 * PI).sqrt()).powi(n as i32);
    let mut idx = vec![0usize; n];
    let mut z = vec![0.0; n];
    let mut total = 0.0;
    loop {
        for k in 0..n {
            z[k] = ranges[k].0 + idx[k] as f64 * step;
        }
        let mut expo = -0.5 * z.iter().map(|x| x * x).sum::<f64>();
        expo += b.iter().zip(&z).map(|(x, y)| x * y).sum::<f64>();
        let mut prod = 1.0;
        for a in 0..n {
            let phi = law.mean[a] + (0..=a).map(|k| l[a][k] * z[k]).sum::<f64>();
            prod *= lambdas[a].eval(phi + g[law.sites[a]]);
        }
        total += expo.exp() * prod;
        let mut k = 0;
        loop {
            if k == n {
                return Ok(weight * total * boundary.exp());
            }
            idx[k] += 1;
            if idx[k] < ranges[k].1 {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// `Z(g) = E^{GFF-Sym}_{β,Λ,h}[Π_j λ_j(φ_j + g_j)]`, averaging the boundary data `±h`.
pub fn tilted_partition(
    domain: &SquareDomain,
    beta: f64,
    lambdas: &[TrigPolynomial],
    h: &RealField<f64>,
    g: &RealField<f64>,
) -> Result<f64> {
    let zero = RealField::zeros(domain.side());
    let plus = gaussian_trig_expectation(domain, beta, lambdas, h, g, &zero)?;
    let minus = gaussian_trig_expectation(domain, beta, lambdas, &h.scaled(-1.0), g, &zero)?;
    Ok(0.5 * (plus + minus))
}

/// Quadrature counterpart of [`tilted_partition`].
pub fn tilted_partition_quadrature(
    domain: &SquareDomain,
    beta: f64,
    lambdas: &[TrigPolynomial],
    h: &RealField<f64>,
    g: &RealField<f64>,
) -> Result<f64> {
    let zero = RealField::zeros(domain.side());
    let plus = gaussian_trig_expectation_quadrature(domain, beta, lambdas, h, g, &zero)?;
    let minus = gaussian_trig_expectation_quadrature(domain, beta, lambdas, &h.scaled(-1.0), g, &zero)?;
    Ok(0.5 * (plus + minus))
}

/// `E_{β/(2π)², Λ, F_N, 2πh}[e^{⟨φ, f/2π⟩}] = (E⁺(f) + E⁻(f)) / (E⁺(0) + E⁻(0))`.
pub fn fejer_tilted_mgf(domain: &SquareDomain, beta: f64, n: usize, h: &IntField, f: &RealField<f64>) -> Result<f64> {
    let fejer = fejer_kernel(n)?;
    let lambdas = vec![fejer; domain.interior().len()];
    let b = beta / (2.0 * PI).powi(2);
    let h2: RealField<f64> = h.to_real::<f64>().scaled(2.0 * PI);
    let f2 = f.scaled(1.0 / (2.0 * PI));
    let zero = RealField::zeros(domain.side());
    let e = |hh: &RealField<f64>, ff: &RealField<f64>| gaussian_trig_expectation(domain, b, &lambdas, hh, &zero, ff);
    let num = e(&h2, &f2)? + e(&h2.scaled(-1.0), &f2)?;
    let den = e(&h2, &zero)? + e(&h2.scaled(-1.0), &zero)?;
    Ok(num / den)
}

/// Truncated-enumeration value of `E^{IV-Sym}_{β,Λ,h}[e^{⟨m,f⟩}]` and an envelope
/// estimate of the error caused by the height window.
pub fn iv_sym_mgf(domain: &SquareDomain, beta: f64, h: &IntField, f: &RealField<f64>, cap: i64) -> Result<(f64, f64)> {
    let pair = |hh: &IntField| -> Result<(f64, f64)> {
        let mu = TruncatedMeasure::enumerate(domain, beta, hh, cap)?;
        let v = mu.expectation(|m| m.values.iter().zip(&f.values).map(|(&a, &b)| a as f64 * b).sum::<f64>().exp());
        let tilt = f.values.iter().map(|x| x.abs()).sum::<f64>();
        Ok((v, mu.mgf_trunc_bound(tilt)))
    };
    let (a, ta) = pair(h)?;
    let (b, tb) = pair(&h.negated())?;
    Ok((0.5 * (a + b), 0.5 * (ta + tb)))
}

/// One row of [`weak_convergence_scan`].
#[derive(Clone, Debug, Serialize)]
pub struct ScanRow {
    pub n: usize,
    pub tilted_value: f64,
    pub target_value: f64,
    pub abs_error: f64,
    pub trunc_bound: f64,
}

/// Fejér-weighted Gaussian MGFs against the enumerated integer-valued target.
pub fn weak_convergence_scan(
    domain: &SquareDomain,
    beta: f64,
    h: &IntField,
    f: &RealField<f64>,
    n_list: &[usize],
    cap: i64,
) -> Result<Vec<ScanRow>> {
    let (target, trunc) = iv_sym_mgf(domain, beta, h, f, cap)?;
    n_list
        .iter()
        .map(|&n| {
            let v = fejer_tilted_mgf(domain, beta, n, h, f)?;
            Ok(ScanRow { n, tilted_value: v, target_value: target, abs_error: (v - target).abs(), trunc_bound: trunc })
        })
        .collect()
}

/// Writes scan rows as `N,tilted_value,target_value,abs_error,trunc_bound`.
pub fn write_scan_csv<W: std::io::Write>(rows: &[ScanRow], mut out: W) -> Result<()> {
    let io = |e: std::io::Error| Error::Internal(e.to_string());
    writeln!(out, "N,tilted_value,target_value,abs_error,trunc_bound").map_err(io)?;
    for r in rows {
        writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.n, r.tilted_value, r.target_value, r.abs_error, r.trunc_bound
        )
        .map_err(io)?;
    }
    Ok(())
}

fn check_z(z: f64) -> Result<()> {
    if !(z != 0.0 && z.abs() < 0.125) {
        return Err(Error::OutOfRange(format!("|z| = {} must lie in (0, 1/8)", z.abs())));
    }
    Ok(())
}

/// Whether `1 + z cos(x+y) >= exp(-z sin x sin y / (1 + z cos x) - D₂|z|y²)(1 + z cos x)`.
pub fn cos_taylor_check(x: f64, y: f64, z: f64, d2: f64) -> Result<bool> {
    check_z(z)?;
    let lhs = 1.0 + z * (x + y).cos();
    let base = 1.0 + z * x.cos();
    let rhs = (-z * x.sin() * y.sin() / base - d2 * z.abs() * y * y).exp() * base;
    Ok(lhs >= rhs * (1.0 - 1e-14))
}

/// Smallest `D₂` making [`cos_taylor_check`] hold on a uniform `n × n` grid of
/// `[-π, π]²` (points with `y = 0` hold with equality for any `D₂`).
pub fn cos_taylor_min_d2(z: f64, n: usize) -> Result<f64> {
    check_z(z)?;
    let mut worst = 0.0f64;
    for a in 0..n {
        let x = -PI + 2.0 * PI * a as f64 / (n - 1) as f64;
        for b in 0..n {
            let y = -PI + 2.0 * PI * b as f64 / (n - 1) as f64;
            if y == 0.0 {
                continue;
            }
            let base = 1.0 + z * x.cos();
            let need = (-z * x.sin() * y.sin() / base + base.ln() - (1.0 + z * (x + y).cos()).ln()) / (z.abs() * y * y);
            worst = worst.max(need);
        }
    }
    Ok(worst)
}
