//! q-series building blocks: infinite Pochhammer products, theta functions,
//! the elliptic gamma function and the theta-pair kernel e(u,v).
//!
//! Everything is computed by truncating absolutely convergent products. The
//! truncation rule is part of each function's contract, not an internal
//! detail, so that results are reproducible bit for bit.

use num_complex::Complex64;

use crate::error::{Error, Result};

pub const DEFAULT_TRUNC_TOL: f64 = 1e-17;
pub const DEFAULT_MAX_TERMS: usize = 10_000;

/// Denominator factors of the elliptic gamma function closer to zero than
/// this are treated as pole hits rather than numbers.
pub const POLE_GUARD: f64 = 1e-13;

const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Base pair (p, q) together with the truncation policy used by every
/// double product built on it.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Nome {
    pub p: Complex64,
    pub q: Complex64,
    pub trunc_tol: f64,
    pub max_terms: usize,
}

impl Nome {
    pub fn new(p: Complex64, q: Complex64) -> Result<Self> {
        Self::with_policy(p, q, DEFAULT_TRUNC_TOL, DEFAULT_MAX_TERMS)
    }

    pub fn with_policy(p: Complex64, q: Complex64, trunc_tol: f64, max_terms: usize) -> Result<Self> {
        if !(p.norm() < 1.0) {
            return Err(Error::domain(format!("|p| = {} must be < 1", p.norm())));
        }
        if !(q.norm() < 1.0) {
            return Err(Error::domain(format!("|q| = {} must be < 1", q.norm())));
        }
        if !(trunc_tol > 0.0) {
            return Err(Error::domain("trunc_tol must be positive"));
        }
        if max_terms == 0 {
            return Err(Error::domain("max_terms must be at least 1"));
        }
        Ok(Nome { p, q, trunc_tol, max_terms })
    }

    pub fn real(p: f64, q: f64) -> Result<Self> {
        Self::new(Complex64::new(p, 0.0), Complex64::new(q, 0.0))
    }

    pub fn pq(&self) -> Complex64 {
        self.p * self.q
    }

    /// Principal square root of p.
    pub fn p_sqrt(&self) -> Complex64 {
        self.p.sqrt()
    }

    /// Principal square root of q.
    pub fn q_sqrt(&self) -> Complex64 {
        self.q.sqrt()
    }
}

/// (u; q)_inf = prod_{v >= 0} (1 - q^v u), truncated at the smallest N with
/// |q^N u| < tol and |q^N| < tol; the factor at N is included.
pub fn qpoch_inf(u: Complex64, q: Complex64, tol: f64) -> Result<Complex64> {
    if !(q.norm() < 1.0) {
        return Err(Error::domain(format!("|q| = {} must be < 1", q.norm())));
    }
    if !(tol > 0.0) {
        return Err(Error::domain("tol must be positive"));
    }
    let t2 = tol * tol;
    let mut prod = ONE;
    let mut qe = ONE; // q^v
    for _ in 0..=DEFAULT_MAX_TERMS {
        let cu = qe * u;
        prod *= ONE - cu;
        if cu.norm_sqr() < t2 && qe.norm_sqr() < t2 {
            return Ok(prod);
        }
        qe *= q;
    }
    Err(Error::NonConvergence { max_terms: DEFAULT_MAX_TERMS })
}

fn dpoch_impl<const GUARDED: bool>(u: Complex64, nome: &Nome) -> Result<Complex64> {
    let tol2 = nome.trunc_tol * nome.trunc_tol;
    let guard2 = POLE_GUARD * POLE_GUARD;
    let mut prod = ONE;
    let mut pm = ONE; // p^mu
    let mut mu = 0usize;
    // Retain exactly the lattice points with |p^mu q^nu| >= trunc_tol.
    while pm.norm_sqr() >= tol2 {
        if mu > nome.max_terms {
            return Err(Error::NonConvergence { max_terms: nome.max_terms });
        }
        let mut c = pm; // p^mu q^nu
        let mut nu = 0usize;
        while c.norm_sqr() >= tol2 {
            if nu > nome.max_terms {
                return Err(Error::NonConvergence { max_terms: nome.max_terms });
            }
            let f = ONE - c * u;
            if GUARDED && f.norm_sqr() < guard2 {
                return Err(Error::PoleProximity {
                    u,
                    mu: mu as u32,
                    nu: nu as u32,
                    residual: f.norm(),
                });
            }
            prod *= f;
            c *= nome.q;
            nu += 1;
        }
        pm *= nome.p;
        mu += 1;
    }
    Ok(prod)
}

/// (u; p, q)_inf = prod_{mu, nu >= 0} (1 - p^mu q^nu u); the double product
/// keeps every lattice point with |p^mu q^nu| >= nome.trunc_tol.
pub fn qpoch_double_inf(u: Complex64, nome: &Nome) -> Result<Complex64> {
    dpoch_impl::<false>(u, nome)
}

/// theta(u; p) = (u; p)_inf (p/u; p)_inf. Requires u != 0; p = 0 collapses
/// to 1 - u.
pub fn theta(u: Complex64, p: Complex64) -> Result<Complex64> {
    if u == Complex64::new(0.0, 0.0) {
        return Err(Error::domain("theta(u; p) requires u != 0"));
    }
    let a = qpoch_inf(u, p, DEFAULT_TRUNC_TOL)?;
    let b = qpoch_inf(p / u, p, DEFAULT_TRUNC_TOL)?;
    Ok(a * b)
}

/// Product of theta values at one base, prod_i theta(args[i]; p).
pub fn theta_prod(args: &[Complex64], p: Complex64) -> Result<Complex64> {
    let mut out = ONE;
    for &u in args {
        out *= theta(u, p)?;
    }
    Ok(out)
}

/// Gamma(u; p, q) = (pq/u; p, q)_inf / (u; p, q)_inf. Denominator factors
/// within POLE_GUARD of zero raise PoleProximity instead of amplifying
/// rounding noise into a huge finite number.
pub fn elliptic_gamma(u: Complex64, nome: &Nome) -> Result<Complex64> {
    if u == Complex64::new(0.0, 0.0) {
        return Err(Error::domain("elliptic_gamma(u) requires u != 0"));
    }
    let den = dpoch_impl::<true>(u, nome)?;
    let num = qpoch_double_inf(nome.pq() / u, nome)?;
    Ok(num / den)
}

/// Product of elliptic gamma values, prod_i Gamma(args[i]; p, q).
pub fn gamma_prod(args: &[Complex64], nome: &Nome) -> Result<Complex64> {
    let mut out = ONE;
    for &u in args {
        out *= elliptic_gamma(u, nome)?;
    }
    Ok(out)
}

/// e(u, v; p) = u^{-1} theta(uv; p) theta(u/v; p). Antisymmetric in (u, v)
/// and the kernel of every interpolation argument downstream.
pub fn e_pair(u: Complex64, v: Complex64, p: Complex64) -> Result<Complex64> {
    if u == Complex64::new(0.0, 0.0) || v == Complex64::new(0.0, 0.0) {
        return Err(Error::domain("e_pair(u, v; p) requires u, v != 0"));
    }
    Ok(theta(u * v, p)? * theta(u / v, p)? / u)
}

/// (p; p)_inf (q; q)_inf, the Euler-product prefactor. Not squared; callers
/// square it where the measure wants the square.
pub fn euler_prefactor(nome: &Nome) -> Result<Complex64> {
    let a = qpoch_inf(nome.p, nome.p, nome.trunc_tol)?;
    let b = qpoch_inf(nome.q, nome.q, nome.trunc_tol)?;
    Ok(a * b)
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
    fn qpoch_at_zero_argument_is_one() {
        let v = qpoch_inf(c(0.0, 0.0), c(0.3, 0.0), 1e-17).unwrap();
        assert_eq!(v, c(1.0, 0.0));
    }

    #[test]
    fn qpoch_at_unit_argument_is_zero() {
        let v = qpoch_inf(c(1.0, 0.0), c(0.3, 0.0), 1e-17).unwrap();
        assert_eq!(v, c(0.0, 0.0));
    }

    #[test]
    fn qpoch_half_half() {
        let v = qpoch_inf(c(0.5, 0.0), c(0.5, 0.0), 1e-17).unwrap();
        assert!(rel(v, c(0.28878809508660241, 0.0)) < 1e-15);
    }

    #[test]
    fn qpoch_rejects_bad_base() {
        assert!(qpoch_inf(c(0.5, 0.0), c(1.0, 0.0), 1e-17).is_err());
        assert!(qpoch_inf(c(0.5, 0.0), c(0.5, 0.0), 0.0).is_err());
    }

    #[test]
    fn double_pochhammer_frozen_value() {
        let nome = Nome::real(0.1, 0.2).unwrap();
        let v = qpoch_double_inf(c(0.3, 0.0), &nome).unwrap();
        assert!(rel(v, c(0.62140304950936076, 0.0)) < 1e-15);
    }

    #[test]
    fn double_pochhammer_with_p_zero_is_single() {
        let nome = Nome::real(0.0, 0.37).unwrap();
        let v = qpoch_double_inf(c(0.41, 0.13), &nome).unwrap();
        let w = qpoch_inf(c(0.41, 0.13), c(0.37, 0.0), nome.trunc_tol).unwrap();
        assert!(rel(v, w) < 1e-15);
    }

    #[test]
    fn theta_frozen_value_and_p_zero() {
        let v = theta(c(0.3, 0.0), c(0.1, 0.0)).unwrap();
        assert!(rel(v, c(0.43450491313098588, 0.0)) < 1e-15);
        let w = theta(c(0.4, 0.0), c(0.0, 0.0)).unwrap();
        assert!(rel(w, c(0.6, 0.0)) < 1e-15);
        assert!(theta(c(0.0, 0.0), c(0.1, 0.0)).is_err());
    }

    #[test]
    fn theta_inversion_and_quasi_periodicity() {
        // theta(p u) = -theta(u)/u and theta(1/u) = theta(p u) hold exactly
        // as series identities; check at a generic complex point.
        let p = c(0.13, 0.04);
        let u = c(0.52, -0.33);
        let t = theta(u, p).unwrap();
        let tp = theta(p * u, p).unwrap();
        assert!(rel(tp, -t / u) < 1e-14);
        let tinv = theta(1.0 / u, p).unwrap();
        assert!(rel(tinv, -t / u) < 1e-14);
    }

    #[test]
    fn gamma_frozen_value_and_fixed_point() {
        let nome = Nome::real(0.1, 0.2).unwrap();
        let v = elliptic_gamma(c(0.5, 0.0), &nome).unwrap();
        assert!(rel(v, c(2.3119761109532475, 0.0)) < 1e-15);

        // Gamma(sqrt(pq)) = 1: the numerator and denominator products match.
        let nome2 = Nome::real(0.04, 0.09).unwrap();
        let w = elliptic_gamma(c(0.06, 0.0), &nome2).unwrap();
        assert!(rel(w, c(1.0, 0.0)) < 1e-15);
    }

    #[test]
    fn gamma_reflection() {
        let nome = Nome::real(0.15, 0.23).unwrap();
        let u = c(0.7, 0.2);
        let a = elliptic_gamma(u, &nome).unwrap();
        let b = elliptic_gamma(nome.pq() / u, &nome).unwrap();
        assert!(rel(a * b, c(1.0, 0.0)) < 1e-14);
    }

    #[test]
    fn gamma_pole_guard_fires() {
        let nome = Nome::real(0.1, 0.2).unwrap();
        let err = elliptic_gamma(c(1.0, 0.0), &nome).unwrap_err();
        match err {
            Error::PoleProximity { mu, nu, .. } => {
                assert_eq!((mu, nu), (0, 0));
            }
            other => panic!("expected PoleProximity, got {other:?}"),
        }
    }

    #[test]
    fn e_pair_frozen_value_and_antisymmetry() {
        let p = c(0.1, 0.0);
        let v = e_pair(c(0.4, 0.0), c(0.6, 0.0), p).unwrap();
        assert!(rel(v, c(0.26563332221977193, 0.0)) < 1e-15);

        let u = c(0.45, 0.21);
        let w = c(0.81, -0.17);
        let a = e_pair(u, w, p).unwrap();
        let b = e_pair(w, u, p).unwrap();
        assert!(rel(a, -b) < 1e-14);
    }

    #[test]
    fn euler_prefactor_values() {
        let z = Nome::real(0.0, 0.0).unwrap();
        assert_eq!(euler_prefactor(&z).unwrap(), c(1.0, 0.0));

        let h = Nome::real(0.5, 0.0).unwrap();
        let v = euler_prefactor(&h).unwrap();
        assert!(rel(v, c(0.28878809508660241, 0.0)) < 1e-10);

        let n = Nome::real(0.1, 0.2).unwrap();
        let v2 = euler_prefactor(&n).unwrap();
        assert!(rel(v2, c(0.67670386768587409, 0.0)) < 1e-15);
    }

    #[test]
    fn nome_construction_guards() {
        assert!(Nome::real(1.0, 0.2).is_err());
        assert!(Nome::real(0.2, 1.0).is_err());
        assert!(Nome::with_policy(c(0.1, 0.0), c(0.2, 0.0), -1.0, 100).is_err());
        assert!(Nome::with_policy(c(0.1, 0.0), c(0.2, 0.0), 1e-17, 0).is_err());
    }
}
