//! Product-trapezoid quadrature on the unit torus and bi-torus, and the
//! specific integrals built on it.
//!
//! Everything here is deterministic: nodes are evaluated in parallel, but
//! the reduction is a fixed pairwise tree over the index-ordered values, so
//! results are bit-identical across thread counts.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::g2_structure::LogPoint;
use crate::integrand::{phi, ParameterSet, QuasiThetaFn};
use crate::special_functions::{euler_prefactor, gamma_prod, qpoch_inf, theta, Nome};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Grid ladder policy. Periodic analytic integrands converge geometrically
/// in N, so the estimated error of the N-point rule is the difference from
/// the next rung.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadSpec {
    pub n_start: usize,
    pub n_max: usize,
    pub rel_tol: f64,
    pub doubling: bool,
}

impl Default for QuadSpec {
    fn default() -> Self {
        QuadSpec { n_start: 32, n_max: 512, rel_tol: 1e-9, doubling: true }
    }
}

impl QuadSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_start < 2 || !self.n_start.is_power_of_two() {
            return Err(Error::domain(format!(
                "n_start = {} must be a power of two >= 2",
                self.n_start
            )));
        }
        if !self.n_max.is_power_of_two() || self.n_max < self.n_start {
            return Err(Error::domain(format!(
                "n_max = {} must be a power of two >= n_start",
                self.n_max
            )));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::domain("rel_tol must be positive"));
        }
        Ok(())
    }

    pub fn with_n_max(mut self, n_max: usize) -> Self {
        self.n_max = n_max;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegralResult {
    pub value: Complex64,
    /// |I_{2N} - I_N| at the accepted rung; infinite when no refinement
    /// comparison was available.
    pub est_error: f64,
    pub n_used: usize,
    pub warnings: Vec<String>,
}

/// Fixed-shape pairwise reduction; single-threaded on purpose.
fn pairwise_sum(v: &[Complex64]) -> Complex64 {
    if v.len() <= 8 {
        let mut acc = ZERO;
        for x in v {
            acc += x;
        }
        return acc;
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

/// Mean of f over the n x n grid zeta = (i/n, j/n). For integrands analytic
/// in a strip around the real bi-torus this is the full trapezoid rule and
/// converges geometrically.
pub fn grid_average_2d(
    f: &(impl Fn(LogPoint) -> Result<Complex64> + Sync),
    n: usize,
) -> Result<Complex64> {
    let vals: Result<Vec<Complex64>> = (0..n * n)
        .into_par_iter()
        .map(|idx| {
            let i = idx / n;
            let j = idx % n;
            f(LogPoint::real(i as f64 / n as f64, j as f64 / n as f64))
        })
        .collect();
    let vals = vals?;
    Ok(pairwise_sum(&vals) / (n * n) as f64)
}

/// Mean of f over theta = i/n, i = 0..n-1.
pub fn grid_average_1d(
    f: &(impl Fn(f64) -> Result<Complex64> + Sync),
    n: usize,
) -> Result<Complex64> {
    let vals: Result<Vec<Complex64>> =
        (0..n).into_par_iter().map(|i| f(i as f64 / n as f64)).collect();
    let vals = vals?;
    Ok(pairwise_sum(&vals) / n as f64)
}

fn ladder(eval: impl Fn(usize) -> Result<Complex64>, spec: &QuadSpec) -> Result<IntegralResult> {
    spec.validate()?;
    let mut n = spec.n_start;
    let mut prev = eval(n)?;
    if !spec.doubling || n == spec.n_max {
        let mut warnings = Vec::new();
        if spec.doubling {
            warnings.push(format!("n_start == n_max == {n}: no refinement comparison"));
        } else {
            warnings.push("grid refinement disabled; no error estimate".to_owned());
        }
        return Ok(IntegralResult { value: prev, est_error: f64::INFINITY, n_used: n, warnings });
    }
    loop {
        n *= 2;
        let cur = eval(n)?;
        let diff = (cur - prev).norm();
        if diff <= spec.rel_tol * cur.norm().max(1.0) {
            return Ok(IntegralResult { value: cur, est_error: diff, n_used: n, warnings: vec![] });
        }
        if n >= spec.n_max {
            return Ok(IntegralResult {
                value: cur,
                est_error: diff,
                n_used: n,
                warnings: vec![format!(
                    "grid ladder hit n_max = {} with |I_2N - I_N| = {diff:.3e} above rel_tol = {:.1e}",
                    spec.n_max, spec.rel_tol
                )],
            });
        }
        prev = cur;
    }
}

/// Trapezoid ladder over the bi-torus: doubles n until
/// |I_{2N} - I_N| <= rel_tol * max(1, |I_{2N}|) or n_max is hit.
pub fn torus_integral_2d(
    f: &(impl Fn(LogPoint) -> Result<Complex64> + Sync),
    spec: &QuadSpec,
) -> Result<IntegralResult> {
    ladder(|n| grid_average_2d(f, n), spec)
}

/// Same ladder over a single torus.
pub fn torus_integral_1d(
    f: &(impl Fn(f64) -> Result<Complex64> + Sync),
    spec: &QuadSpec,
) -> Result<IntegralResult> {
    ladder(|n| grid_average_1d(f, n), spec)
}

/// Ratio max|Phi| / median|Phi| on a coarse scan grid above which a warning
/// is attached: a sharp peak means the grid may be undersampling.
const PEAK_RATIO_LIMIT: f64 = 1e6;
const SCAN_N: usize = 16;

fn peak_scan(
    f: &(impl Fn(LogPoint) -> Result<Complex64> + Sync),
    warnings: &mut Vec<String>,
) -> Result<()> {
    let vals: Result<Vec<Complex64>> = (0..SCAN_N * SCAN_N)
        .into_par_iter()
        .map(|idx| {
            let i = idx / SCAN_N;
            let j = idx % SCAN_N;
            f(LogPoint::real(i as f64 / SCAN_N as f64, j as f64 / SCAN_N as f64))
        })
        .collect();
    let mut mags: Vec<f64> = vals?.iter().map(|v| v.norm()).collect();
    mags.sort_by(|a, b| a.total_cmp(b));
    let max = mags[mags.len() - 1];
    let median = mags[mags.len() / 2];
    if max > PEAK_RATIO_LIMIT * median.max(1e-300) {
        warnings.push(format!(
            "integrand peak ratio max/median = {:.3e} on the {SCAN_N}x{SCAN_N} scan grid; \
             the quadrature grid may undersample",
            max / median.max(1e-300)
        ));
    }
    Ok(())
}

/// The raw double-torus mean of Phi (no Euler prefactor, no 1/12): the
/// quantity the evaluation identity multiplies by ((p;p)(q;q))^2 / 12.
/// Requires all |a_k| < 1 so the contour is the standard bi-torus.
pub fn i_of_a(aset: &ParameterSet, nome: &Nome, spec: &QuadSpec) -> Result<IntegralResult> {
    if !aset.torus_safe() {
        return Err(Error::domain(format!(
            "i_of_a needs all |a_k| < 1; moduli are {:?}",
            aset.a.map(|x| x.norm())
        )));
    }
    i_of_a_unchecked(aset, nome, spec)
}

/// i_of_a without the |a_k| < 1 precondition. The grid still lives on the
/// unit bi-torus, so for parameters outside the disc this computes the
/// unshifted-contour integral, which is the analytic continuation probe
/// (deviation trends, not equalities). Poles crossing the torus surface as
/// PoleProximity errors rather than numbers.
pub fn i_of_a_unchecked(
    aset: &ParameterSet,
    nome: &Nome,
    spec: &QuadSpec,
) -> Result<IntegralResult> {
    let f = |zeta: LogPoint| phi(aset, zeta, nome);
    let mut warnings = Vec::new();
    peak_scan(&f, &mut warnings)?;
    let mut out = torus_integral_2d(&f, spec)?;
    warnings.append(&mut out.warnings);
    out.warnings = warnings;
    Ok(out)
}

/// <g> = double-torus mean of g * Phi, through the fused evaluator when the
/// wrapper carries one (the nabla images need it: pointwise they have torus
/// poles that cancel only inside the product).
pub fn bracket(
    g: &QuasiThetaFn,
    aset: &ParameterSet,
    nome: &Nome,
    spec: &QuadSpec,
) -> Result<IntegralResult> {
    if g.has_times_phi() {
        let f = |zeta: LogPoint| g.eval_times_phi(zeta).expect("checked has_times_phi");
        torus_integral_2d(&f, spec)
    } else {
        let f = |zeta: LogPoint| Ok(g.eval(zeta)? * phi(aset, zeta, nome)?);
        torus_integral_2d(&f, spec)
    }
}

fn pairwise_sum_f64(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum_f64(&v[..mid]) + pairwise_sum_f64(&v[mid..])
}

/// Mean of g * Phi and mean of |g * Phi| on one n x n grid, from a single
/// evaluation pass. The second component is the natural scale against which
/// a vanishing bracket is judged.
pub fn bracket_with_scale(
    g: &QuasiThetaFn,
    aset: &ParameterSet,
    nome: &Nome,
    n: usize,
) -> Result<(Complex64, f64)> {
    let eval = |zeta: LogPoint| -> Result<Complex64> {
        if g.has_times_phi() {
            g.eval_times_phi(zeta).expect("checked has_times_phi")
        } else {
            Ok(g.eval(zeta)? * phi(aset, zeta, nome)?)
        }
    };
    let vals: Result<Vec<Complex64>> = (0..n * n)
        .into_par_iter()
        .map(|idx| {
            let i = idx / n;
            let j = idx % n;
            eval(LogPoint::real(i as f64 / n as f64, j as f64 / n as f64))
        })
        .collect();
    let vals = vals?;
    let mags: Vec<f64> = vals.iter().map(|v| v.norm()).collect();
    let count = (n * n) as f64;
    Ok((pairwise_sum(&vals) / count, pairwise_sum_f64(&mags) / count))
}

/// Mean of |g * Phi| on a single n x n grid: the natural scale against
/// which a vanishing bracket is judged.
pub fn bracket_abs_scale(
    g: &QuasiThetaFn,
    aset: &ParameterSet,
    nome: &Nome,
    n: usize,
) -> Result<f64> {
    if g.has_times_phi() {
        let f = |zeta: LogPoint| {
            let v = g.eval_times_phi(zeta).expect("checked has_times_phi")?;
            Ok(Complex64::new(v.norm(), 0.0))
        };
        Ok(grid_average_2d(&f, n)?.re)
    } else {
        let f = |zeta: LogPoint| {
            let v = g.eval(zeta)? * phi(aset, zeta, nome)?;
            Ok(Complex64::new(v.norm(), 0.0))
        };
        Ok(grid_average_2d(&f, n)?.re)
    }
}

/// One-torus integral with six parameters t_k, prefactor (p;p)(q;q)/2:
/// the rank-one evaluation identity's left side. Preconditions: |t_k| < 1
/// and t1..t6 multiplying to pq (relative residual 1e-12).
pub fn bc1_integral_result(
    t: [Complex64; 6],
    nome: &Nome,
    spec: &QuadSpec,
) -> Result<IntegralResult> {
    if t.iter().any(|x| !(x.norm() < 1.0)) {
        return Err(Error::domain(format!(
            "bc1 needs all |t_k| < 1; moduli are {:?}",
            t.map(|x| x.norm())
        )));
    }
    let prod: Complex64 = t.iter().product();
    let residual = (prod - nome.pq()).norm() / nome.pq().norm().max(1e-300);
    if residual > 1e-12 {
        return Err(Error::domain(format!(
            "bc1 needs t1..t6 = pq; relative residual {residual:.3e}"
        )));
    }
    let pref = euler_prefactor(nome)? / 2.0;
    let nome = *nome;
    let f = |th: f64| {
        let x = (Complex64::new(0.0, std::f64::consts::TAU) * th).exp();
        let x2 = x * x;
        // 1 / Gamma(x^2, x^-2) = -theta(x^2; p) theta(x^2; q) / x^2:
        // holomorphic, zeros at x = ±1, so grid points may land there.
        let mut v = -theta(x2, nome.p)? * theta(x2, nome.q)? / x2;
        for &tk in &t {
            v *= elliptic_gamma_pair(tk, x, &nome)?;
        }
        Ok(v)
    };
    let mut out = torus_integral_1d(&f, spec)?;
    out.value *= pref;
    Ok(out)
}

fn elliptic_gamma_pair(tk: Complex64, x: Complex64, nome: &Nome) -> Result<Complex64> {
    gamma_prod(&[tk * x, tk / x], nome)
}

pub fn bc1_integral(t: [Complex64; 6], nome: &Nome, spec: &QuadSpec) -> Result<Complex64> {
    Ok(bc1_integral_result(t, nome, spec)?.value)
}

/// The single-base double-torus integral with four parameters and prefactor
/// (q;q)^2 / 12, integrated directly in the x coordinates
/// (x1, x2, x3 = 1/(x1 x2)). a_k = 0 is allowed; otherwise |a_k| < 1.
pub fn gustafson_result(
    a: [Complex64; 4],
    q: Complex64,
    spec: &QuadSpec,
) -> Result<IntegralResult> {
    if !(q.norm() < 1.0) {
        return Err(Error::domain(format!("|q| = {} must be < 1", q.norm())));
    }
    if a.iter().any(|x| !(x.norm() < 1.0)) {
        return Err(Error::domain(format!(
            "gustafson needs all |a_k| < 1; moduli are {:?}",
            a.map(|x| x.norm())
        )));
    }
    let e = qpoch_inf(q, q, crate::special_functions::DEFAULT_TRUNC_TOL)?;
    let pref = e * e / 12.0;
    let tol = crate::special_functions::DEFAULT_TRUNC_TOL;
    let f = |lp: LogPoint| {
        // lp carries plain torus angles here: x1 = e^{2 pi i theta1} etc.
        let x1 = lp.z1();
        let x2 = lp.z2();
        let x = [x1, x2, 1.0 / (x1 * x2)];
        let mut v = Complex64::new(1.0, 0.0);
        for i in 0..3 {
            for j in (i + 1)..3 {
                for u in [x[i] * x[j], x[j] / x[i], x[i] / x[j], 1.0 / (x[i] * x[j])] {
                    v *= qpoch_inf(u, q, tol)?;
                }
            }
        }
        for &xi in &x {
            for &ak in &a {
                v /= qpoch_inf(ak * xi, q, tol)? * qpoch_inf(ak / xi, q, tol)?;
            }
        }
        Ok(v)
    };
    let mut out = torus_integral_2d(&f, spec)?;
    out.value *= pref;
    Ok(out)
}

pub fn gustafson_q_integral(
    a: [Complex64; 4],
    q: Complex64,
    spec: &QuadSpec,
) -> Result<Complex64> {
    Ok(gustafson_result(a, q, spec)?.value)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn rel(a: Complex64, b: Complex64) -> f64 {
        (a - b).norm() / a.norm().max(b.norm()).max(1e-300)
    }

    #[test]
    fn spec_validation() {
        assert!(QuadSpec::default().validate().is_ok());
        assert!(QuadSpec { n_start: 3, ..Default::default() }.validate().is_err());
        assert!(QuadSpec { n_max: 16, ..Default::default() }.validate().is_err());
        assert!(QuadSpec { rel_tol: 0.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn grid_average_integrates_monomials_exactly() {
        // The n-point trapezoid rule annihilates e^{2 pi i k theta} for
        // 0 < |k| < n and returns 1 for k = 0.
        let f = |lp: LogPoint| Ok(lp.z1().powi(3) * lp.z2().powi(-2));
        let v = grid_average_2d(&f, 8).unwrap();
        assert!(v.norm() < 1e-14);
        let g = |_: LogPoint| Ok(c(2.5, -1.0));
        assert!(rel(grid_average_2d(&g, 8).unwrap(), c(2.5, -1.0)) < 1e-15);
    }

    #[test]
    fn ladder_converges_and_reports_failure() {
        // Analytic periodic integrand with known mean 1.
        let f = |th: f64| {
            let x = (Complex64::new(0.0, std::f64::consts::TAU) * th).exp();
            Ok(1.0 / (1.0 - c(0.5, 0.0) * x))
        };
        let spec = QuadSpec { n_start: 4, n_max: 256, rel_tol: 1e-12, doubling: true };
        let out = torus_integral_1d(&f, &spec).unwrap();
        assert!(out.warnings.is_empty());
        assert!(rel(out.value, c(1.0, 0.0)) < 1e-12);

        let tight = QuadSpec { n_start: 4, n_max: 8, rel_tol: 1e-15, doubling: true };
        let out = torus_integral_1d(&f, &tight).unwrap();
        assert_eq!(out.n_used, 8);
        assert!(!out.warnings.is_empty());
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let f = |lp: LogPoint| {
            let z = lp.z1() * lp.z2();
            Ok(1.0 / (2.0 - z) + (lp.z1() - lp.z2()).powi(7) * 1e-3)
        };
        let pool1 = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let pool4 = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = pool1.install(|| grid_average_2d(&f, 64).unwrap());
        let b = pool4.install(|| grid_average_2d(&f, 64).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn bc1_rejects_unbalanced_and_large_parameters() {
        let nome = Nome::real(0.1, 0.2).unwrap();
        let t = [c(0.5, 0.0); 6];
        assert!(bc1_integral(t, &nome, &QuadSpec::default()).is_err());
        let mut t2 = t;
        t2[5] = c(1.2, 0.0);
        assert!(bc1_integral(t2, &nome, &QuadSpec::default()).is_err());
    }
}
