//! The weight function Phi of the double-torus integral, its difference
//! operators, the F/G interpolation family, the phi generators the
//! coboundary argument runs on, and the closed-form coefficient and product
//! identities tying them together.
//!
//! Parameter convention: five nonzero a_k plus a sign epsilon. Two balancing
//! regimes occur. The evaluation identity lives on (a1...a5)^2 = pq; the
//! difference-operator lemmas live on the shifted lattice (a1...a5)^2 q = p.
//! Both are represented by the same ParameterSet; `balanced` records whether
//! the first regime was enforced at construction.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::g2_structure::{
    act_log, shift_log, weyl_denominator, weyl_elements, Axis, LogPoint, MonomialExp,
};
use crate::special_functions::{e_pair, elliptic_gamma, theta, theta_prod, Nome};

const ONE: Complex64 = Complex64::new(1.0, 0.0);

const M01: MonomialExp = MonomialExp { two_lam1: 0, two_lam2: 2 };
const M11: MonomialExp = MonomialExp { two_lam1: 2, two_lam2: 2 };
const M12: MonomialExp = MonomialExp { two_lam1: 2, two_lam2: 4 };

/// Relative residual used when a constructor or identity demands one of the
/// two balancing conditions.
const BALANCE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParameterSet {
    pub a: [Complex64; 5],
    pub epsilon: i32,
    /// True when a5 was derived from (a1...a5)^2 = pq at construction.
    pub balanced: bool,
}

impl ParameterSet {
    /// a5 = epsilon sqrt(p) sqrt(q) / (a1 a2 a3 a4), so (a1...a5)^2 = pq.
    pub fn make_balanced(a: [Complex64; 4], epsilon: i32, nome: &Nome) -> Result<Self> {
        let a5 = Self::derived_a5(a, epsilon, nome.p_sqrt() * nome.q_sqrt())?;
        Ok(ParameterSet { a: [a[0], a[1], a[2], a[3], a5], epsilon, balanced: true })
    }

    /// a5 = epsilon sqrt(p) / (sqrt(q) a1 a2 a3 a4), so (a1...a5)^2 q = p.
    pub fn make_shift_balanced(a: [Complex64; 4], epsilon: i32, nome: &Nome) -> Result<Self> {
        if nome.q == Complex64::new(0.0, 0.0) {
            return Err(Error::domain("shifted balancing requires q != 0"));
        }
        let a5 = Self::derived_a5(a, epsilon, nome.p_sqrt() / nome.q_sqrt())?;
        Ok(ParameterSet { a: [a[0], a[1], a[2], a[3], a5], epsilon, balanced: false })
    }

    fn derived_a5(a: [Complex64; 4], epsilon: i32, scale: Complex64) -> Result<Complex64> {
        if epsilon != 1 && epsilon != -1 {
            return Err(Error::domain("epsilon must be +1 or -1"));
        }
        if a.iter().any(|x| *x == Complex64::new(0.0, 0.0)) {
            return Err(Error::domain("parameters a1..a4 must be nonzero"));
        }
        if scale == Complex64::new(0.0, 0.0) {
            return Err(Error::domain("balancing requires p, q != 0"));
        }
        Ok(epsilon as f64 * scale / (a[0] * a[1] * a[2] * a[3]))
    }

    /// Direct construction for derived sets (q-shifted parameters and the
    /// like); `balanced` must reflect whether (a1...a5)^2 = pq still holds.
    pub fn from_parts(a: [Complex64; 5], epsilon: i32, balanced: bool) -> Result<Self> {
        if epsilon != 1 && epsilon != -1 {
            return Err(Error::domain("epsilon must be +1 or -1"));
        }
        if a.iter().any(|x| *x == Complex64::new(0.0, 0.0)) {
            return Err(Error::domain("all parameters must be nonzero"));
        }
        Ok(ParameterSet { a, epsilon, balanced })
    }

    pub fn prod_a(&self) -> Complex64 {
        self.a.iter().product()
    }

    pub fn torus_safe(&self) -> bool {
        self.a.iter().all(|x| x.norm() < 1.0)
    }

    pub fn balancing_residual(&self, nome: &Nome) -> f64 {
        let lhs = self.prod_a().powi(2);
        let rhs = nome.pq();
        (lhs - rhs).norm() / rhs.norm().max(1e-300)
    }

    pub fn shifted_balancing_residual(&self, nome: &Nome) -> f64 {
        let lhs = self.prod_a().powi(2) * nome.q;
        let rhs = nome.p;
        (lhs - rhs).norm() / rhs.norm().max(1e-300)
    }

    pub fn require_balanced(&self, nome: &Nome) -> Result<()> {
        let r = self.balancing_residual(nome);
        if r > BALANCE_TOL {
            return Err(Error::domain(format!(
                "needs (a1..a5)^2 = pq; relative residual {r:.3e}"
            )));
        }
        Ok(())
    }

    pub fn require_shift_balanced(&self, nome: &Nome) -> Result<()> {
        let r = self.shifted_balancing_residual(nome);
        if r > BALANCE_TOL {
            return Err(Error::domain(format!(
                "needs (a1..a5)^2 q = p; relative residual {r:.3e}"
            )));
        }
        Ok(())
    }

    /// Copy with a_k replaced by factor * a_k (1-based k).
    pub fn scaled(&self, k: usize, factor: Complex64) -> Result<Self> {
        if !(1..=5).contains(&k) {
            return Err(Error::domain(format!("parameter index {k} out of 1..=5")));
        }
        let mut a = self.a;
        a[k - 1] *= factor;
        ParameterSet::from_parts(a, self.epsilon, false)
    }
}

fn check_pair_indices(i: usize, j: usize) -> Result<()> {
    if !(1..=5).contains(&i) || !(1..=5).contains(&j) {
        return Err(Error::domain(format!("indices ({i},{j}) out of 1..=5")));
    }
    if i >= j {
        return Err(Error::domain(format!("indices must satisfy i < j, got ({i},{j})")));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// The weight Phi in its equivalent shapes.
// ---------------------------------------------------------------------------

/// prod_k Gamma(a_k z2^{±1}, a_k (z1 z2)^{±1}, a_k (z1 z2^2)^{±1}): the
/// Gamma part shared by every shape of Phi.
fn gamma_core(aset: &ParameterSet, zeta: LogPoint, nome: &Nome) -> Result<Complex64> {
    let mut out = ONE;
    for m in [M01, M11, M12] {
        let zm = zeta.eval(m);
        for &ak in &aset.a {
            out *= elliptic_gamma(ak * zm, nome)?;
            out *= elliptic_gamma(ak / zm, nome)?;
        }
    }
    Ok(out)
}

/// The weight of the double integral, in the shape that is holomorphic on
/// the whole torus: Phi = Delta(z;p) Delta(z;q) * (Gamma product). The
/// reciprocal-Gamma denominator of the textbook shape equals exactly this
/// theta pair, with genuine zeros (not poles) on the root hyperplanes, so
/// quadrature grids may touch those points.
pub fn phi(aset: &ParameterSet, zeta: LogPoint, nome: &Nome) -> Result<Complex64> {
    let dp = weyl_denominator(zeta, nome.p)?;
    let dq = weyl_denominator(zeta, nome.q)?;
    Ok(dp * dq * gamma_core(aset, zeta, nome)?)
}

/// Same function as a ratio of Gamma values over the x coordinates
/// (x1, x2, x3) with x1 x2 x3 = 1. Meromorphic shape: valid away from the
/// zeros of the denominator's reciprocal.
pub fn phi_alt(aset: &ParameterSet, zeta: LogPoint, nome: &Nome) -> Result<Complex64> {
    let x = zeta.x_coords();
    let mut num = ONE;
    for &xi in &x {
        for &ak in &aset.a {
            num *= elliptic_gamma(ak * xi, nome)?;
            num *= elliptic_gamma(ak / xi, nome)?;
        }
    }
    let mut den = ONE;
    for i in 0..3 {
        for j in (i + 1)..3 {
            den *= elliptic_gamma(x[i] * x[j], nome)?;
            den *= elliptic_gamma(x[j] / x[i], nome)?;
            den *= elliptic_gamma(x[i] / x[j], nome)?;
            den *= elliptic_gamma(1.0 / (x[i] * x[j]), nome)?;
        }
    }
    Ok(num / den)
}

/// The short/long regrouping of phi_alt: per-coordinate Gamma blocks times
/// cross ratios, using x1 x2 x3 = 1 to fold the long roots.
pub fn phi_short_long(aset: &ParameterSet, zeta: LogPoint, nome: &Nome) -> Result<Complex64> {
    let x = zeta.x_coords();
    let mut out = ONE;
    for &xi in &x {
        let mut block = ONE;
        for &ak in &aset.a {
            block *= elliptic_gamma(ak * xi, nome)?;
            block *= elliptic_gamma(ak / xi, nome)?;
        }
        block /= elliptic_gamma(xi, nome)? * elliptic_gamma(1.0 / xi, nome)?;
        out *= block;
    }
    for i in 0..3 {
        for j in (i + 1)..3 {
            out /= elliptic_gamma(x[i] / x[j], nome)? * elliptic_gamma(x[j] / x[i], nome)?;
        }
    }
    Ok(out)
}

/// Half weight: Phi(z) = phi_plus(zeta) * phi_plus(-zeta).
pub fn phi_plus(aset: &ParameterSet, zeta: LogPoint, nome: &Nome) -> Result<Complex64> {
    let mut num = ONE;
    for m in [M01, M11, M12] {
        let zm = zeta.eval(m);
        for &ak in &aset.a {
            num *= elliptic_gamma(ak * zm, nome)?;
        }
    }
    let mut den = ONE;
    for m in crate::g2_structure::positive_root_monomials() {
        den *= elliptic_gamma(zeta.eval(m), nome)?;
    }
    Ok(num / den)
}

// ---------------------------------------------------------------------------
// Difference kernels f± and the interpolation family F_k, G, F3'.
// ---------------------------------------------------------------------------

/// f+(zeta) = z1^{-1} z2^{-3/2} prod_k theta(a_k z1 z2, a_k z1 z2^2; p)
///            / theta(z1 z2, z1 z2^2, z1, z1 z2^3, z1^2 z2^3; p).
/// Note the denominator omits theta(z2; p).
pub fn f_plus(aset: &ParameterSet, zeta: LogPoint, p: Complex64) -> Result<Complex64> {
    let m11 = zeta.eval(M11);
    let m12 = zeta.eval(M12);
    let mut num = ONE;
    for &ak in &aset.a {
        num *= theta(ak * m11, p)? * theta(ak * m12, p)?;
    }
    let den = theta_prod(
        &[
            m11,
            m12,
            zeta.eval(MonomialExp::int(1, 0)),
            zeta.eval(MonomialExp::int(1, 3)),
            zeta.eval(MonomialExp::int(2, 3)),
        ],
        p,
    )?;
    Ok(zeta.eval(MonomialExp::half(-2, -3)) * num / den)
}

pub fn f_minus(aset: &ParameterSet, zeta: LogPoint, p: Complex64) -> Result<Complex64> {
    f_plus(aset, zeta.neg(), p)
}

/// f+(zeta) * Delta(zeta; p), multiplied out so every theta zero of the
/// denominator cancels: z1^{-4} z2^{-13/2} theta(z2; p)
/// prod_k theta(a_k z1 z2, a_k z1 z2^2; p). Holomorphic; this is the shape
/// the bracket integrand uses on the grid.
pub fn f_delta_p(aset: &ParameterSet, zeta: LogPoint, p: Complex64) -> Result<Complex64> {
    let m11 = zeta.eval(M11);
    let m12 = zeta.eval(M12);
    let mut prod = theta(zeta.eval(M01), p)?;
    for &ak in &aset.a {
        prod *= theta(ak * m11, p)? * theta(ak * m12, p)?;
    }
    Ok(zeta.eval(MonomialExp::half(-8, -13)) * prod)
}

/// F_k(z) = e(a_k, z2; p) e(a_k, z1 z2; p) e(a_k, z1 z2^2; p), 1-based k.
pub fn big_f(aset: &ParameterSet, k: usize, zeta: LogPoint, p: Complex64) -> Result<Complex64> {
    if !(1..=5).contains(&k) {
        return Err(Error::domain(format!("F_k index {k} out of 1..=5")));
    }
    let ak = aset.a[k - 1];
    Ok(e_pair(ak, zeta.eval(M01), p)?
        * e_pair(ak, zeta.eval(M11), p)?
        * e_pair(ak, zeta.eval(M12), p)?)
}

/// The node p_ij: z2 = a_j, z1 z2 = a_i (so z1 z2^2 = a_i a_j). Log branches
/// taken from the principal logs of a_i, a_j so half powers stay coherent.
pub fn point_pij(aset: &ParameterSet, i: usize, j: usize) -> Result<LogPoint> {
    check_pair_indices(i, j)?;
    let li = log_over_2pii(aset.a[i - 1]);
    let lj = log_over_2pii(aset.a[j - 1]);
    Ok(LogPoint::new(li - lj, lj))
}

/// The companion node p*_ij: z2 = a_j/a_i, z1 z2 = a_i (so z1 z2^2 = a_j).
pub fn point_pij_star(aset: &ParameterSet, i: usize, j: usize) -> Result<LogPoint> {
    check_pair_indices(i, j)?;
    let li = log_over_2pii(aset.a[i - 1]);
    let lj = log_over_2pii(aset.a[j - 1]);
    Ok(LogPoint::new(2.0 * li - lj, lj - li))
}

fn log_over_2pii(u: Complex64) -> Complex64 {
    u.ln() / Complex64::new(0.0, std::f64::consts::TAU)
}

/// Interpolation denominators below this absolute size (relative to the
/// paired numerator) are refused rather than divided by.
const DEGENERACY_GUARD: f64 = 1e-12;

fn guarded_div(num: Complex64, den: Complex64, what: &str) -> Result<Complex64> {
    if den.norm() < DEGENERACY_GUARD * num.norm().max(1.0) {
        return Err(Error::degenerate(format!("{what} has modulus {:.3e}", den.norm())));
    }
    Ok(num / den)
}

struct GCoefficients {
    // divisors F_4(p_..)/F_k(p_..) for k = 1, 2, 3 and the overall e-product.
    ratios: [Complex64; 3],
    e_prod: Complex64,
}

fn g_coefficients(aset: &ParameterSet, p: Complex64) -> Result<GCoefficients> {
    let pairs = [(2usize, 3usize), (1, 3), (1, 2)]; // nodes for F1, F2, F3
    let mut ratios = [ONE; 3];
    for (k, &(i, j)) in pairs.iter().enumerate() {
        let node = point_pij(aset, i, j)?;
        let num = big_f(aset, 4, node, p)?;
        let den = big_f(aset, k + 1, node, p)?;
        ratios[k] = guarded_div(num, den, &format!("F_{}(p_{}{})", k + 1, i, j))?;
    }
    let mut e_prod = ONE;
    for i in 0..3 {
        e_prod *= e_pair(aset.a[3], aset.a[i], p)?;
    }
    if e_prod.norm() < DEGENERACY_GUARD {
        return Err(Error::degenerate(format!(
            "prod_i e(a4, a_i) has modulus {:.3e}",
            e_prod.norm()
        )));
    }
    Ok(GCoefficients { ratios, e_prod })
}

/// G(z): the combination of F4 with F1, F2, F3 that vanishes at p23, p13,
/// p12, normalized by prod_{i<=3} e(a4, a_i; p). Independent of a4.
pub fn big_g(aset: &ParameterSet, zeta: LogPoint, p: Complex64) -> Result<Complex64> {
    let co = g_coefficients(aset, p)?;
    big_g_with(aset, zeta, p, &co)
}

/// G(z) together with the pre-cancellation term scale (|F4| + sum |c_k F_k|)
/// / |e-product|. The four-term sum can cancel by several orders, so closed
/// forms are only comparable to it relative to this scale.
pub fn big_g_scaled(
    aset: &ParameterSet,
    zeta: LogPoint,
    p: Complex64,
) -> Result<(Complex64, f64)> {
    let co = g_coefficients(aset, p)?;
    let mut acc = big_f(aset, 4, zeta, p)?;
    let mut scale = acc.norm();
    for k in 0..3 {
        let term = co.ratios[k] * big_f(aset, k + 1, zeta, p)?;
        scale += term.norm();
        acc -= term;
    }
    Ok((acc / co.e_prod, scale / co.e_prod.norm()))
}

fn big_g_with(
    aset: &ParameterSet,
    zeta: LogPoint,
    p: Complex64,
    co: &GCoefficients,
) -> Result<Complex64> {
    let mut acc = big_f(aset, 4, zeta, p)?;
    for k in 0..3 {
        acc -= co.ratios[k] * big_f(aset, k + 1, zeta, p)?;
    }
    Ok(acc / co.e_prod)
}

/// F3'(z) = F3(z) - (F3(p*12)/G(p*12)) G(z); vanishes at p*12 while keeping
/// F3's value at p12.
pub fn big_f3_prime(aset: &ParameterSet, zeta: LogPoint, p: Complex64) -> Result<Complex64> {
    let co = g_coefficients(aset, p)?;
    let star = point_pij_star(aset, 1, 2)?;
    let f3_star = big_f(aset, 3, star, p)?;
    let g_star = big_g_with(aset, star, p, &co)?;
    let c = guarded_div(f3_star, g_star, "G(p*_12)")?;
    Ok(big_f(aset, 3, zeta, p)? - c * big_g_with(aset, zeta, p, &co)?)
}

/// Closed form of G on the curve z = (a_k/x, x), independent of a4;
/// {i, j, k} = {1, 2, 3}.
pub fn big_g_closed_form(
    aset: &ParameterSet,
    k: usize,
    x: Complex64,
    p: Complex64,
) -> Result<Complex64> {
    if !(1..=3).contains(&k) {
        return Err(Error::domain(format!("closed form index {k} out of 1..=3")));
    }
    let (i, j) = match k {
        1 => (2, 3),
        2 => (1, 3),
        _ => (1, 2),
    };
    let ak = aset.a[k - 1];
    let ai = aset.a[i - 1];
    let aj = aset.a[j - 1];
    let num = theta_prod(&[ak * ak, ak * ai * x, ai / x, ak * aj * x, aj / x], p)?;
    let den = theta_prod(&[ak, ai * aj, ai * aj * ak, ai * ak / aj, aj * ak / ai], p)?;
    Ok(num / den)
}

/// Closed form of G at p*_12: theta(a1^2, a2^2) / theta(a1 a2 a3, a1 a2/a3).
pub fn big_g_at_star12_closed_form(aset: &ParameterSet, p: Complex64) -> Result<Complex64> {
    let [a1, a2, a3, ..] = aset.a;
    let num = theta_prod(&[a1 * a1, a2 * a2], p)?;
    let den = theta_prod(&[a1 * a2 * a3, a1 * a2 / a3], p)?;
    Ok(num / den)
}

// ---------------------------------------------------------------------------
// The phi generators and the difference operator nabla.
// ---------------------------------------------------------------------------

/// phi_ij = z2^{-1/2} theta(-z2, -eps p^{1/2} z1 z2, -eps p^{1/2} z1 z2^2; p)
///          e(a_i, z2; p) e(a_j, z2; p).
pub fn phi_ij(
    aset: &ParameterSet,
    i: usize,
    j: usize,
    zeta: LogPoint,
    nome: &Nome,
) -> Result<Complex64> {
    check_pair_indices(i, j)?;
    let eps = aset.epsilon as f64;
    let ps = nome.p_sqrt();
    let z2 = zeta.eval(M01);
    let m11 = zeta.eval(M11);
    let m12 = zeta.eval(M12);
    let t = theta_prod(&[-z2, -eps * ps * m11, -eps * ps * m12], nome.p)?;
    let e = e_pair(aset.a[i - 1], z2, nome.p)? * e_pair(aset.a[j - 1], z2, nome.p)?;
    Ok(zeta.eval(MonomialExp::half(0, -1)) * t * e)
}

/// phi'_ij = z1^{-1} z2^{-3/2} theta(-eps p^{1/2} z2, -z1 z2, -z1 z2^2; p)
///           e(a_i, z2; p) e(a_j, z2; p).
pub fn phi_prime_ij(
    aset: &ParameterSet,
    i: usize,
    j: usize,
    zeta: LogPoint,
    nome: &Nome,
) -> Result<Complex64> {
    check_pair_indices(i, j)?;
    let eps = aset.epsilon as f64;
    let ps = nome.p_sqrt();
    let z2 = zeta.eval(M01);
    let m11 = zeta.eval(M11);
    let m12 = zeta.eval(M12);
    let t = theta_prod(&[-eps * ps * z2, -m11, -m12], nome.p)?;
    let e = e_pair(aset.a[i - 1], z2, nome.p)? * e_pair(aset.a[j - 1], z2, nome.p)?;
    Ok(zeta.eval(MonomialExp::half(-2, -3)) * t * e)
}

/// nabla phi = f+ . (half q-shift up in z1 of phi) + f- . (half shift down).
pub fn nabla(
    phi_fn: &QuasiThetaFn,
    aset: &ParameterSet,
    zeta: LogPoint,
    nome: &Nome,
) -> Result<Complex64> {
    let up = shift_log(zeta, Axis::Z1, nome.q, 0.5)?;
    let down = shift_log(zeta, Axis::Z1, nome.q, -0.5)?;
    Ok(f_plus(aset, zeta, nome.p)? * phi_fn.eval(up)?
        + f_minus(aset, zeta, nome.p)? * phi_fn.eval(down)?)
}

/// Sum of nabla phi over the twelve Weyl images of zeta, in the fixed group
/// enumeration order.
pub fn nabla_sym(
    phi_fn: &QuasiThetaFn,
    aset: &ParameterSet,
    zeta: LogPoint,
    nome: &Nome,
) -> Result<Complex64> {
    let mut acc = Complex64::new(0.0, 0.0);
    for w in weyl_elements() {
        acc += nabla(phi_fn, aset, act_log(w, zeta), nome)?;
    }
    Ok(acc)
}

/// Rotation-subgroup collapse of nabla_sym: 4 sum_{k=0}^{5} f+(B^k zeta)
/// phi(B^k zeta + half shift), with B the zeta-action of s1 s2.
pub fn nabla_sym_six_term(
    phi_fn: &QuasiThetaFn,
    aset: &ParameterSet,
    zeta: LogPoint,
    nome: &Nome,
) -> Result<Complex64> {
    let rotations = &weyl_elements()[..6];
    let mut acc = Complex64::new(0.0, 0.0);
    for w in rotations {
        let img = act_log(w, zeta);
        let up = shift_log(img, Axis::Z1, nome.q, 0.5)?;
        acc += f_plus(aset, img, nome.p)? * phi_fn.eval(up)?;
    }
    Ok(4.0 * acc)
}

// ---------------------------------------------------------------------------
// Opaque evaluator wrapper.
// ---------------------------------------------------------------------------

pub type PointFn = dyn Fn(LogPoint) -> Result<Complex64> + Send + Sync;

/// A labeled pointwise evaluator, optionally carrying a fused (self * Phi)
/// evaluator for use under the integral sign. The fused form exists so that
/// functions with torus poles (the nabla images, whose f± factors blow up on
/// root hyperplanes) can be integrated through their pole-free product with
/// Phi.
#[derive(Clone)]
pub struct QuasiThetaFn {
    label: String,
    eval_fn: Arc<PointFn>,
    times_phi: Option<Arc<PointFn>>,
}

impl fmt::Debug for QuasiThetaFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("QuasiThetaFn")
            .field("label", &self.label)
            .field("fused", &self.times_phi.is_some())
            .finish()
    }
}

impl QuasiThetaFn {
    pub fn new(
        label: impl Into<String>,
        f: impl Fn(LogPoint) -> Result<Complex64> + Send + Sync + 'static,
    ) -> Self {
        QuasiThetaFn { label: label.into(), eval_fn: Arc::new(f), times_phi: None }
    }

    pub fn with_times_phi(
        mut self,
        f: impl Fn(LogPoint) -> Result<Complex64> + Send + Sync + 'static,
    ) -> Self {
        self.times_phi = Some(Arc::new(f));
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn eval(&self, zeta: LogPoint) -> Result<Complex64> {
        (self.eval_fn)(zeta)
    }

    pub fn has_times_phi(&self) -> bool {
        self.times_phi.is_some()
    }

    /// Fused (self * Phi)(zeta) when a fused evaluator was attached.
    pub fn eval_times_phi(&self, zeta: LogPoint) -> Option<Result<Complex64>> {
        self.times_phi.as_ref().map(|f| f(zeta))
    }
}

/// The constant function 1 (so that bracket(1) is the plain integral).
pub fn qtf_one() -> QuasiThetaFn {
    QuasiThetaFn::new("1", |_| Ok(ONE))
}

pub fn qtf_big_f(aset: &ParameterSet, k: usize, nome: &Nome) -> Result<QuasiThetaFn> {
    if !(1..=5).contains(&k) {
        return Err(Error::domain(format!("F_k index {k} out of 1..=5")));
    }
    let aset = *aset;
    let p = nome.p;
    Ok(QuasiThetaFn::new(format!("F{k}"), move |zeta| big_f(&aset, k, zeta, p)))
}

pub fn qtf_big_g(aset: &ParameterSet, nome: &Nome) -> Result<QuasiThetaFn> {
    let co = g_coefficients(aset, nome.p)?;
    let aset = *aset;
    let p = nome.p;
    Ok(QuasiThetaFn::new("G", move |zeta| big_g_with(&aset, zeta, p, &co)))
}

pub fn qtf_big_f3_prime(aset: &ParameterSet, nome: &Nome) -> Result<QuasiThetaFn> {
    let co = g_coefficients(aset, nome.p)?;
    let star = point_pij_star(aset, 1, 2)?;
    let f3_star = big_f(aset, 3, star, nome.p)?;
    let g_star = big_g_with(aset, star, nome.p, &co)?;
    let c = guarded_div(f3_star, g_star, "G(p*_12)")?;
    let aset = *aset;
    let p = nome.p;
    Ok(QuasiThetaFn::new("F3'", move |zeta| {
        Ok(big_f(&aset, 3, zeta, p)? - c * big_g_with(&aset, zeta, p, &co)?)
    }))
}

pub fn qtf_phi_ij(aset: &ParameterSet, i: usize, j: usize, nome: &Nome) -> Result<QuasiThetaFn> {
    check_pair_indices(i, j)?;
    let aset = *aset;
    let nome = *nome;
    Ok(QuasiThetaFn::new(format!("phi({i},{j})"), move |zeta| phi_ij(&aset, i, j, zeta, &nome)))
}

pub fn qtf_phi_prime_ij(
    aset: &ParameterSet,
    i: usize,
    j: usize,
    nome: &Nome,
) -> Result<QuasiThetaFn> {
    check_pair_indices(i, j)?;
    let aset = *aset;
    let nome = *nome;
    Ok(QuasiThetaFn::new(format!("phi'({i},{j})"), move |zeta| {
        phi_prime_ij(&aset, i, j, zeta, &nome)
    }))
}

/// nabla of a generator, as an evaluator pair: pointwise nabla, and the
/// fused (nabla phi) * Phi built from f± * Delta(·;p), which is holomorphic
/// on the torus and hence grid-safe.
pub fn qtf_nabla(inner: &QuasiThetaFn, aset: &ParameterSet, nome: &Nome) -> QuasiThetaFn {
    let label = format!("nabla[{}]", inner.label());
    let point_inner = inner.clone();
    let point_aset = *aset;
    let point_nome = *nome;
    let fused_inner = inner.clone();
    let fused_aset = *aset;
    let fused_nome = *nome;
    QuasiThetaFn::new(label, move |zeta| nabla(&point_inner, &point_aset, zeta, &point_nome))
        .with_times_phi(move |zeta| {
            let up = shift_log(zeta, Axis::Z1, fused_nome.q, 0.5)?;
            let down = shift_log(zeta, Axis::Z1, fused_nome.q, -0.5)?;
            let core = f_delta_p(&fused_aset, zeta, fused_nome.p)? * fused_inner.eval(up)?
                + f_delta_p(&fused_aset, zeta.neg(), fused_nome.p)? * fused_inner.eval(down)?;
            Ok(core
                * weyl_denominator(zeta, fused_nome.q)?
                * gamma_core(&fused_aset, zeta, &fused_nome)?)
        })
}

// ---------------------------------------------------------------------------
// Quasi-periodicity residuals.
// ---------------------------------------------------------------------------

/// Which quasi-periodicity law to test a function against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpClass {
    /// The Weyl-invariant space the F_k and G live in.
    InvariantSpace,
    /// The half-integral space of the phi generators (epsilon-dependent law).
    EpsilonSpace,
    FPlus,
    FMinus,
}

/// Max relative residual of the two p-shift laws of the given class at zeta.
pub fn quasi_periodicity_residual(
    f: &QuasiThetaFn,
    which: QpClass,
    zeta: LogPoint,
    aset: &ParameterSet,
    nome: &Nome,
) -> Result<f64> {
    let p = nome.p;
    let ps = nome.p_sqrt();
    let z1 = zeta.eval(MonomialExp::int(1, 0));
    let z2 = zeta.eval(M01);
    let cap_a = aset.prod_a();
    let eps = aset.epsilon as f64;

    let base = f.eval(zeta)?;
    let up1 = f.eval(shift_log(zeta, Axis::Z1, p, 1.0)?)?;
    let up2 = f.eval(shift_log(zeta, Axis::Z2, p, 1.0)?)?;

    let t1 = p * z1 * z1 * z2.powi(3);
    let t2 = p.powi(3) * z1.powi(3) * z2.powi(6);
    let (m1, m2) = match which {
        QpClass::InvariantSpace => (t1.powi(-2), t2.powi(-2)),
        QpClass::EpsilonSpace => {
            let extra = p * p * z2.powi(4);
            (1.0 / t1, eps / (t2 * extra))
        }
        QpClass::FPlus => (
            p / (cap_a * cap_a) * (ps * z1).powi(-2) * z2.powi(-3),
            ps.powi(3) / cap_a.powi(3) * z1.powi(-3) * (ps * z2).powi(-2),
        ),
        QpClass::FMinus => (
            cap_a * cap_a / p * (ps * z1).powi(-2) * z2.powi(-3),
            cap_a.powi(3) / ps.powi(3) * z1.powi(-3) * (ps * z2).powi(-2),
        ),
    };

    let r1 = rel_dev(up1, base * m1);
    let r2 = rel_dev(up2, base * m2);
    Ok(r1.max(r2))
}

fn rel_dev(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1e-300)
}

// ---------------------------------------------------------------------------
// Coefficient identities.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lemma67Coeffs {
    pub c1: Complex64,
    pub c2: Complex64,
    pub c12: Complex64,
    pub c1_prime: Complex64,
    pub c2_prime: Complex64,
    pub c12_prime: Complex64,
}

/// Coefficients of the expansions nabla_sym(phi_12)/4 = c1 F1 + c2 F2 + c12 G
/// and nabla_sym(phi'_12)/4 = c1' F1 + c2' F2 + c12' G.
/// Requires the shifted balancing (a1..a5)^2 q = p.
pub fn coeffs_lemma67(aset: &ParameterSet, nome: &Nome) -> Result<Lemma67Coeffs> {
    aset.require_shift_balanced(nome)?;
    let p = nome.p;
    let ps = nome.p_sqrt();
    let qs = nome.q_sqrt();
    let eps = aset.epsilon as f64;
    let [a1, a2, a3, a4, a5] = aset.a;

    let mid = |x: Complex64, y: Complex64| -> Result<Complex64> {
        // mid(a1, a2) is mid_c1; mid(a2, a1) is mid_c2.
        let num = theta_prod(&[y * y, y * a3 * a4, y * a3 * a5], p)?;
        let den = theta_prod(&[y, y / x, y * a3 / x], p)?;
        let tail = theta_prod(&[y * a3, y * a4, y * a5], p)?;
        Ok(num / den * tail)
    };
    let mid_c1 = mid(a1, a2)?;
    let mid_c2 = mid(a2, a1)?;
    let mid_c12 = theta_prod(&[a1 * a2 * a3, a1 * a2 / a3, a1 * a2], p)?
        / (a1 * a1 * a2 * a2)
        * theta_prod(&[a1 * a3, a2 * a3, a1 * a4, a2 * a4, a1 * a5, a2 * a5], p)?;

    let epq = eps * ps * qs;
    let c1 = theta_prod(&[-a3, -epq * a2, -epq * a2 * a3], p)? * mid_c1;
    let c2 = theta_prod(&[-a3, -epq * a1, -epq * a1 * a3], p)? * mid_c2;
    let c12 = a2 * theta_prod(&[-a1 / a2, -epq * a1, -epq * a2], p)? * mid_c12;
    let c1_prime =
        theta_prod(&[-eps * ps * a3, -qs * a2, -qs * a2 * a3], p)? * mid_c1 / (qs * a2);
    let c2_prime =
        theta_prod(&[-eps * ps * a3, -qs * a1, -qs * a1 * a3], p)? * mid_c2 / (qs * a1);
    let c12_prime =
        theta_prod(&[-eps * ps * a1 / a2, -qs * a1, -qs * a2], p)? * mid_c12 / qs;

    Ok(Lemma67Coeffs { c1, c2, c12, c1_prime, c2_prime, c12_prime })
}

/// The proportionality constant C_k in F_k = C_k G on the shifted-balancing
/// subvariety, for k = 1, 2, 3 ({i, j, k} = {1, 2, 3}).
pub fn big_c(aset: &ParameterSet, k: usize, nome: &Nome) -> Result<Complex64> {
    if !(1..=3).contains(&k) {
        return Err(Error::domain(format!("C_k index {k} out of 1..=3")));
    }
    aset.require_shift_balanced(nome)?;
    let p = nome.p;
    let q = nome.q;
    let (i, j) = match k {
        1 => (2, 3),
        2 => (1, 3),
        _ => (1, 2),
    };
    let ak = aset.a[k - 1];
    let ai = aset.a[i - 1];
    let aj = aset.a[j - 1];
    let [a1, a2, a3, a4, a5] = aset.a;
    let num = theta_prod(
        &[
            q * ak * ak,
            ai,
            aj,
            ak * ai * aj,
            ak * a4 * a5,
            ai * aj / ak,
            ak * aj / ai,
            ak * ai / aj,
        ],
        p,
    )?;
    let den = theta_prod(
        &[q * a1 * a2 * a3, ai * ai, aj * aj, ai * aj * a4, ai * aj * a5, ai * aj * a4 * a5],
        p,
    )?;
    let mut tail = ONE;
    for (l, &al) in aset.a.iter().enumerate() {
        if l != k - 1 {
            tail *= theta(ak * al, p)?;
        }
    }
    Ok(num / den / ak.powi(3) * tail)
}

/// Closed theta-quotient for the bracket ratio <F1>/<F2> on the shifted
/// balancing subvariety. Equals big_c(1)/big_c(2).
pub fn shifted_bracket_ratio_12(aset: &ParameterSet, nome: &Nome) -> Result<Complex64> {
    aset.require_shift_balanced(nome)?;
    let p = nome.p;
    let q = nome.q;
    let [a1, a2, _, _, _] = aset.a;
    let num = theta_prod(
        &[a1 * a1, q * a1 * a1, a2, a1 * aset.a[2] * aset.a[3] * aset.a[4]],
        p,
    )?;
    let den = theta_prod(
        &[a2 * a2, q * a2 * a2, a1, a2 * aset.a[2] * aset.a[3] * aset.a[4]],
        p,
    )?;
    let mut out = (a2 / a1).powi(3) * num / den;
    for i in 2..5 {
        out *= theta(a1 * aset.a[i], p)? / theta(a2 * aset.a[i], p)?;
    }
    for i in 2..5 {
        for j in (i + 1)..5 {
            out *= theta(a1 * aset.a[i] * aset.a[j], p)?
                / theta(a2 * aset.a[i] * aset.a[j], p)?;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NdValues {
    pub n_sum: Complex64,
    pub n_factored: Complex64,
    pub d_sum: Complex64,
    pub d_factored: Complex64,
    /// |term1| + |term2| of the N sum: the scale against which the
    /// cancellation in n_sum is meaningful.
    pub n_scale: f64,
    pub d_scale: f64,
}

/// The two-term theta sums N and D behind the C_k derivation together with
/// their closed factorizations. Free parameters: no balancing involved.
pub fn nd_values(
    a1: Complex64,
    a2: Complex64,
    a3: Complex64,
    epsilon: i32,
    nome: &Nome,
) -> Result<NdValues> {
    if epsilon != 1 && epsilon != -1 {
        return Err(Error::domain("epsilon must be +1 or -1"));
    }
    let p = nome.p;
    let q = nome.q;
    let ps = nome.p_sqrt();
    let qs = nome.q_sqrt();
    let eps = epsilon as f64;

    let n1 = a2 * theta_prod(&[-a1 / a2, -eps * ps * qs * a2, -eps * ps * a3, -qs * a1 * a3], p)?;
    let n2 = a1 * theta_prod(&[-eps * ps * a1 / a2, -qs * a2, -a3, -eps * ps * qs * a1 * a3], p)?;
    let n_sum = n1 - n2;
    let n_factored =
        a2 * theta_prod(&[eps * ps, eps * ps * qs * a2 * a3, qs * a1, a1 * a3 / a2], p)?;
    let d1 = a2
        * theta_prod(&[-eps * ps * qs * a2, -eps * ps * qs * a2 * a3, -qs * a1, -qs * a1 * a3], p)?;
    let d2 = a1
        * theta_prod(&[-qs * a2, -qs * a2 * a3, -eps * ps * qs * a1, -eps * ps * qs * a1 * a3], p)?;
    let d_sum = d1 - d2;
    let d_factored = a2 * theta_prod(&[eps * ps, eps * ps * a3, a1 / a2, q * a1 * a2 * a3], p)?;

    Ok(NdValues {
        n_sum,
        n_factored,
        d_sum,
        d_factored,
        n_scale: n1.norm() + n2.norm(),
        d_scale: d1.norm() + d2.norm(),
    })
}

// ---------------------------------------------------------------------------
// The evaluation side: J(a).
// ---------------------------------------------------------------------------

/// J(a) = prod_i Gamma(a_i^2)/Gamma(a_i) . prod_{i<j} Gamma(a_i a_j)
///        . prod_{i<j<k} Gamma(a_i a_j a_k) . prod_{i<j<k<l} Gamma(a_i a_j a_k a_l).
/// A plain Gamma product: globally meromorphic, no balancing assumed here.
pub fn j_product(aset: &ParameterSet, nome: &Nome) -> Result<Complex64> {
    let a = &aset.a;
    let mut out = ONE;
    for i in 0..5 {
        out *= elliptic_gamma(a[i] * a[i], nome)? / elliptic_gamma(a[i], nome)?;
    }
    for i in 0..5 {
        for j in (i + 1)..5 {
            out *= elliptic_gamma(a[i] * a[j], nome)?;
        }
    }
    for i in 0..5 {
        for j in (i + 1)..5 {
            for k in (j + 1)..5 {
                out *= elliptic_gamma(a[i] * a[j] * a[k], nome)?;
            }
        }
    }
    for i in 0..5 {
        for j in (i + 1)..5 {
            for k in (j + 1)..5 {
                for l in (k + 1)..5 {
                    out *= elliptic_gamma(a[i] * a[j] * a[k] * a[l], nome)?;
                }
            }
        }
    }
    Ok(out)
}

/// Alternative shape of J valid under (a1..a5)^2 = pq: the singles block
/// rewritten through six Gamma factors per parameter.
pub fn j_product_remark2(aset: &ParameterSet, nome: &Nome) -> Result<Complex64> {
    aset.require_balanced(nome)?;
    let ps = nome.p_sqrt();
    let qs = nome.q_sqrt();
    let eps = aset.epsilon as f64;
    let a = &aset.a;
    let mut out = ONE;
    for &ai in a {
        for u in [-ai, ps * ai, -ps * ai, qs * ai, -qs * ai, -eps * ps * qs * ai] {
            out *= elliptic_gamma(u, nome)?;
        }
    }
    for i in 0..5 {
        for j in (i + 1)..5 {
            out *= elliptic_gamma(a[i] * a[j], nome)?;
        }
    }
    for i in 0..5 {
        for j in (i + 1)..5 {
            for k in (j + 1)..5 {
                out *= elliptic_gamma(a[i] * a[j] * a[k], nome)?;
            }
        }
    }
    Ok(out)
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

    fn canonical() -> (ParameterSet, Nome) {
        let nome = Nome::real(0.08, 0.22).unwrap();
        let aset = ParameterSet::make_balanced(
            [c(0.70, 0.0), c(0.72, 0.0), c(0.68, 0.0), c(0.66, 0.0)],
            1,
            &nome,
        )
        .unwrap();
        (aset, nome)
    }

    fn coboundary() -> (ParameterSet, Nome) {
        let nome = Nome::real(0.04, 0.64).unwrap();
        let aset = ParameterSet::make_shift_balanced(
            [c(0.79, 0.0), c(0.76, 0.0), c(0.77, 0.0), c(0.74, 0.0)],
            1,
            &nome,
        )
        .unwrap();
        (aset, nome)
    }

    #[test]
    fn balanced_construction_frozen_a5() {
        let (aset, nome) = canonical();
        assert!((aset.a[4].norm() - 0.58650666156583331).abs() < 1e-15);
        assert!(aset.balancing_residual(&nome) < 1e-14);
        assert!(aset.balanced);

        let neg = ParameterSet::make_balanced(
            [c(0.70, 0.0), c(0.72, 0.0), c(0.68, 0.0), c(0.66, 0.0)],
            -1,
            &nome,
        )
        .unwrap();
        assert_eq!(neg.a[4], -aset.a[4]);
    }

    #[test]
    fn shift_balanced_construction() {
        let (aset, nome) = coboundary();
        assert!(aset.shifted_balancing_residual(&nome) < 1e-14);
        assert!(!aset.balanced);
        assert!(aset.torus_safe());
        assert!(aset.require_balanced(&nome).is_err());
    }

    #[test]
    fn constructor_rejections() {
        let nome = Nome::real(0.08, 0.22).unwrap();
        let a4 = [c(0.7, 0.0), c(0.72, 0.0), c(0.68, 0.0), c(0.66, 0.0)];
        assert!(ParameterSet::make_balanced(a4, 2, &nome).is_err());
        let with_zero = [c(0.7, 0.0), c(0.0, 0.0), c(0.68, 0.0), c(0.66, 0.0)];
        assert!(ParameterSet::make_balanced(with_zero, 1, &nome).is_err());
    }

    #[test]
    fn phi_shapes_agree() {
        let (aset, nome) = canonical();
        let zeta = LogPoint::new(c(0.21, 0.013), c(0.58, -0.024));
        let a = phi(&aset, zeta, &nome).unwrap();
        let b = phi_alt(&aset, zeta, &nome).unwrap();
        let d = phi_short_long(&aset, zeta, &nome).unwrap();
        let e = phi_plus(&aset, zeta, &nome).unwrap() * phi_plus(&aset, zeta.neg(), &nome).unwrap();
        assert!(rel(a, b) < 1e-12);
        assert!(rel(a, d) < 1e-12);
        assert!(rel(a, e) < 1e-12);
    }

    #[test]
    fn phi_vanishes_on_root_hyperplanes() {
        let (aset, nome) = canonical();
        // zeta = (0, 0) has z1 = z2 = 1: every positive-root theta vanishes.
        let v = phi(&aset, LogPoint::real(0.0, 0.0), &nome).unwrap();
        assert_eq!(v, c(0.0, 0.0));
    }

    #[test]
    fn j_product_frozen_value_and_symmetry() {
        let (aset, nome) = canonical();
        let j = j_product(&aset, &nome).unwrap();
        assert!(rel(j, c(7120.8369988156828, 0.0)) < 1e-12, "J = {j}");

        let mut swapped = aset;
        swapped.a.swap(0, 3);
        swapped.a.swap(1, 4);
        let j2 = j_product(&swapped, &nome).unwrap();
        assert!(rel(j, j2) < 1e-13);

        let j3 = j_product_remark2(&aset, &nome).unwrap();
        assert!(rel(j, j3) < 1e-11);
    }

    #[test]
    fn interpolation_nodes_carry_the_right_coordinates() {
        let (aset, _) = canonical();
        let node = point_pij(&aset, 2, 4).unwrap();
        assert!(rel(node.eval(M01), aset.a[3]) < 1e-14);
        assert!(rel(node.eval(M11), aset.a[1]) < 1e-14);
        assert!(rel(node.eval(M12), aset.a[1] * aset.a[3]) < 1e-14);

        let star = point_pij_star(&aset, 1, 2).unwrap();
        assert!(rel(star.eval(M01), aset.a[1] / aset.a[0]) < 1e-14);
        assert!(rel(star.eval(M11), aset.a[0]) < 1e-14);
        assert!(rel(star.eval(M12), aset.a[1]) < 1e-14);

        assert!(point_pij(&aset, 3, 3).is_err());
        assert!(point_pij(&aset, 4, 2).is_err());
        assert!(point_pij(&aset, 0, 2).is_err());
    }

    #[test]
    fn f_minus_matches_independent_expansion() {
        let (aset, nome) = canonical();
        let p = nome.p;
        let zeta = LogPoint::new(c(0.17, 0.021), c(0.43, -0.011));
        let direct = f_minus(&aset, zeta, p).unwrap();

        // Independent evaluation from the reflected formula.
        let m11 = zeta.eval(M11);
        let m12 = zeta.eval(M12);
        let mut num = ONE;
        for &ak in &aset.a {
            num *= theta(ak / m11, p).unwrap() * theta(ak / m12, p).unwrap();
        }
        let den = theta_prod(
            &[
                1.0 / m11,
                1.0 / m12,
                1.0 / zeta.eval(MonomialExp::int(1, 0)),
                1.0 / zeta.eval(MonomialExp::int(1, 3)),
                1.0 / zeta.eval(MonomialExp::int(2, 3)),
            ],
            p,
        )
        .unwrap();
        let expanded = zeta.eval(MonomialExp::half(2, 3)) * num / den;
        assert!(rel(direct, expanded) < 1e-13);
    }

    #[test]
    fn fused_f_delta_matches_product() {
        let (aset, nome) = coboundary();
        let zeta = LogPoint::new(c(0.31, 0.017), c(0.09, 0.008));
        let fused = f_delta_p(&aset, zeta, nome.p).unwrap();
        let product = f_plus(&aset, zeta, nome.p).unwrap()
            * weyl_denominator(zeta, nome.p).unwrap();
        assert!(rel(fused, product) < 1e-13);
    }

    #[test]
    fn nd_factorizations_at_a_point() {
        let nome = Nome::real(0.04, 0.64).unwrap();
        for eps in [1, -1] {
            let v = nd_values(c(0.79, 0.0), c(0.76, 0.0), c(0.77, 0.0), eps, &nome).unwrap();
            assert!(rel(v.n_sum, v.n_factored) < 1e-12, "N mismatch at eps = {eps}");
            assert!(rel(v.d_sum, v.d_factored) < 1e-12, "D mismatch at eps = {eps}");
        }
        // a1 = q^{-1/2} kills the N side through the theta(q^{1/2} a1) factor.
        let qs_inv = 1.0 / nome.q_sqrt();
        let v = nd_values(qs_inv, c(0.76, 0.0), c(0.77, 0.0), 1, &nome).unwrap();
        let scale = v.d_sum.norm().max(1.0);
        assert!(v.n_sum.norm() < 1e-13 * scale, "N_sum = {:?}", v.n_sum);
        assert!(v.n_factored.norm() < 1e-13 * scale);
    }

    #[test]
    fn big_f_rejects_bad_index() {
        let (aset, nome) = canonical();
        let zeta = LogPoint::real(0.3, 0.4);
        assert!(big_f(&aset, 0, zeta, nome.p).is_err());
        assert!(big_f(&aset, 6, zeta, nome.p).is_err());
        assert!(big_c(&aset, 4, &nome).is_err());
    }
}
