//! Coordinates and Weyl combinatorics for the G2 double torus.
//!
//! Everything downstream evaluates functions of (z1, z2) through the
//! logarithmic chart z_i = exp(2 pi i zeta_i). The formulas of the theory
//! carry half powers like z2^{1/2} and z1 z2^{3/2}; on the z-side those are
//! multivalued, in zeta they are plain linear forms. The Weyl action is an
//! integer matrix action on zeta, so all twelve images of a point share one
//! coherent branch of every half power by construction.

use std::f64::consts::TAU;
use std::sync::OnceLock;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::special_functions::{theta, theta_prod};

const TWO_PI_I: Complex64 = Complex64::new(0.0, TAU);

/// Point on (a complex neighborhood of) the double torus in log coordinates:
/// z_i = exp(2 pi i zeta_i).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogPoint {
    pub zeta1: Complex64,
    pub zeta2: Complex64,
}

impl LogPoint {
    pub fn new(zeta1: Complex64, zeta2: Complex64) -> Self {
        LogPoint { zeta1, zeta2 }
    }

    pub fn real(zeta1: f64, zeta2: f64) -> Self {
        LogPoint::new(Complex64::new(zeta1, 0.0), Complex64::new(zeta2, 0.0))
    }

    /// Principal-branch representative of (z1, z2); any other branch gives
    /// the same point mod Z^2.
    pub fn from_z(z1: Complex64, z2: Complex64) -> Result<Self> {
        if z1 == Complex64::new(0.0, 0.0) || z2 == Complex64::new(0.0, 0.0) {
            return Err(Error::domain("from_z requires z1, z2 != 0"));
        }
        Ok(LogPoint::new(z1.ln() / TWO_PI_I, z2.ln() / TWO_PI_I))
    }

    pub fn z1(&self) -> Complex64 {
        (TWO_PI_I * self.zeta1).exp()
    }

    pub fn z2(&self) -> Complex64 {
        (TWO_PI_I * self.zeta2).exp()
    }

    /// (x1, x2, x3) with x1 = z1 z2, x2 = z2, x3 = (x1 x2)^{-1}.
    pub fn x_coords(&self) -> [Complex64; 3] {
        let x1 = self.eval(MonomialExp::int(1, 1));
        let x2 = self.eval(MonomialExp::int(0, 1));
        [x1, x2, 1.0 / (x1 * x2)]
    }

    pub fn neg(&self) -> Self {
        LogPoint::new(-self.zeta1, -self.zeta2)
    }

    /// Shorthand for eval_monomial(lam, self).
    pub fn eval(&self, lam: MonomialExp) -> Complex64 {
        eval_monomial(lam, *self)
    }
}

/// Exponent pair (lam1, lam2) of a monomial z1^lam1 z2^lam2 with half-integer
/// entries, stored doubled so the Weyl action stays in exact integers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MonomialExp {
    pub two_lam1: i32,
    pub two_lam2: i32,
}

impl MonomialExp {
    pub fn int(lam1: i32, lam2: i32) -> Self {
        MonomialExp { two_lam1: 2 * lam1, two_lam2: 2 * lam2 }
    }

    /// Construct from doubled entries, so half(1, 3) is z1^{1/2} z2^{3/2}.
    pub fn half(two_lam1: i32, two_lam2: i32) -> Self {
        MonomialExp { two_lam1, two_lam2 }
    }

    pub fn lam1(&self) -> f64 {
        self.two_lam1 as f64 / 2.0
    }

    pub fn lam2(&self) -> f64 {
        self.two_lam2 as f64 / 2.0
    }

    pub fn neg(&self) -> Self {
        MonomialExp { two_lam1: -self.two_lam1, two_lam2: -self.two_lam2 }
    }
}

/// z^lam = exp(2 pi i (lam1 zeta1 + lam2 zeta2)); single-valued in zeta, which
/// is the whole point of keeping half-integer exponents linear.
pub fn eval_monomial(lam: MonomialExp, zeta: LogPoint) -> Complex64 {
    let expo = lam.lam1() * zeta.zeta1 + lam.lam2() * zeta.zeta2;
    (TWO_PI_I * expo).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gen {
    S1,
    S2,
}

/// Weyl group element. `matrix` is the action on exponent vectors lambda in
/// the alpha-basis (columns are the images of alpha1, alpha2); the action on
/// zeta is the transpose, so that z^{w.lam} at zeta equals z^lam at w.zeta.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeylElement {
    pub matrix: [[i32; 2]; 2],
    pub sign: i32,
    pub word: Vec<Gen>,
}

const M_S1: [[i32; 2]; 2] = [[-1, 1], [0, 1]];
const M_S2: [[i32; 2]; 2] = [[1, 0], [3, -1]];

fn mat_mul(a: [[i32; 2]; 2], b: [[i32; 2]; 2]) -> [[i32; 2]; 2] {
    let mut out = [[0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

fn det(m: [[i32; 2]; 2]) -> i32 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

/// The twelve elements: rotations (s1 s2)^k for k = 0..5 first, then the
/// reflections (s1 s2)^k s2. Element 0 is the identity.
pub fn weyl_elements() -> &'static [WeylElement] {
    static CELL: OnceLock<Vec<WeylElement>> = OnceLock::new();
    CELL.get_or_init(|| {
        let b = mat_mul(M_S1, M_S2);
        let mut rot = [[1, 0], [0, 1]];
        let mut rotations = Vec::new();
        let mut reflections = Vec::new();
        for k in 0..6 {
            let mut word = Vec::new();
            for _ in 0..k {
                word.push(Gen::S1);
                word.push(Gen::S2);
            }
            rotations.push(WeylElement { matrix: rot, sign: det(rot), word: word.clone() });
            let refl = mat_mul(rot, M_S2);
            let mut rword = word;
            rword.push(Gen::S2);
            reflections.push(WeylElement { matrix: refl, sign: det(refl), word: rword });
            rot = mat_mul(rot, b);
        }
        rotations.extend(reflections);
        rotations
    })
}

/// zeta-side action: zeta -> matrix^T zeta. Composing with to_z realizes
/// s1.(z1, z2) = (z1^{-1}, z1 z2) and s2.(z1, z2) = (z1 z2^3, z2^{-1}).
pub fn act_log(w: &WeylElement, zeta: LogPoint) -> LogPoint {
    let m = &w.matrix;
    LogPoint::new(
        m[0][0] as f64 * zeta.zeta1 + m[1][0] as f64 * zeta.zeta2,
        m[0][1] as f64 * zeta.zeta1 + m[1][1] as f64 * zeta.zeta2,
    )
}

/// Exponent-side action, exact in integers: lam -> matrix * lam.
pub fn act_monomial(w: &WeylElement, lam: MonomialExp) -> MonomialExp {
    let m = &w.matrix;
    MonomialExp {
        two_lam1: m[0][0] * lam.two_lam1 + m[0][1] * lam.two_lam2,
        two_lam2: m[1][0] * lam.two_lam1 + m[1][1] * lam.two_lam2,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Z1,
    Z2,
}

/// Translate zeta along one axis by fraction * ln(base)/(2 pi i), so that
/// z_axis picks up the factor base^fraction. fraction must be a half-integer;
/// two half shifts add up to one full shift because halving ln(base) is exact.
pub fn shift_log(zeta: LogPoint, axis: Axis, base: Complex64, fraction: f64) -> Result<LogPoint> {
    if base == Complex64::new(0.0, 0.0) {
        return Err(Error::domain("shift_log requires base != 0"));
    }
    if (2.0 * fraction).fract() != 0.0 {
        return Err(Error::domain(format!("fraction {fraction} is not a half-integer")));
    }
    let h = fraction * (base.ln() / TWO_PI_I);
    match axis {
        Axis::Z1 => Ok(LogPoint::new(zeta.zeta1 + h, zeta.zeta2)),
        Axis::Z2 => Ok(LogPoint::new(zeta.zeta1, zeta.zeta2 + h)),
    }
}

/// The six monomials z^alpha over the positive roots:
/// z2, z1 z2, z1 z2^2, z1, z1 z2^3, z1^2 z2^3.
pub fn positive_root_monomials() -> [MonomialExp; 6] {
    [
        MonomialExp::int(0, 1),
        MonomialExp::int(1, 1),
        MonomialExp::int(1, 2),
        MonomialExp::int(1, 0),
        MonomialExp::int(1, 3),
        MonomialExp::int(2, 3),
    ]
}

/// Weyl denominator Delta(z; p) = z1^{-3} z2^{-5} prod_{alpha > 0} theta(z^alpha; p).
/// Antisymmetric: Delta(w.z; p) = sign(w) Delta(z; p).
pub fn weyl_denominator(zeta: LogPoint, p: Complex64) -> Result<Complex64> {
    let mut args = [Complex64::new(0.0, 0.0); 6];
    for (slot, m) in args.iter_mut().zip(positive_root_monomials()) {
        *slot = zeta.eval(m);
    }
    let head = zeta.eval(MonomialExp::int(-3, -5));
    Ok(head * theta_prod(&args, p)?)
}

/// Fundamental weights in the alpha-basis: varpi1 = 2a1 + 3a2, varpi2 = a1 + 2a2.
pub const VARPI1: (i32, i32) = (2, 3);
pub const VARPI2: (i32, i32) = (1, 2);

/// Quasi-periodicity lattice generators: omega1 = varpi1, omega2 = 3 varpi2.
pub const OMEGA1: (i32, i32) = (2, 3);
pub const OMEGA2: (i32, i32) = (3, 6);

/// Simple coroots in the alpha-basis: alpha1^v = alpha1, alpha2^v = 3 alpha2.
pub const COROOT1: (i32, i32) = (1, 0);
pub const COROOT2: (i32, i32) = (0, 3);

/// Three times the invariant Gram matrix in the alpha-basis; the factor 3
/// clears denominators so the pairing stays in integers.
pub const GRAM_X3: [[i32; 2]; 2] = [[6, -3], [-3, 2]];

/// u^T (3 Gram) v; with coroots against fundamental weights this equals
/// 3 delta_ij exactly.
pub fn pairing_x3(u: (i32, i32), v: (i32, i32)) -> i32 {
    let gu = (GRAM_X3[0][0] * v.0 + GRAM_X3[0][1] * v.1, GRAM_X3[1][0] * v.0 + GRAM_X3[1][1] * v.1);
    u.0 * gu.0 + u.1 * gu.1
}

/// theta(z^lam; p) helper used all over the integrand module.
pub fn theta_of_monomial(lam: MonomialExp, zeta: LogPoint, p: Complex64) -> Result<Complex64> {
    theta(zeta.eval(lam), p)
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
    fn monomial_halves_square_to_the_monomial() {
        let zeta = LogPoint::new(c(0.0, 0.0), c(0.1, 0.05));
        let half = eval_monomial(MonomialExp::half(0, 1), zeta);
        let full = eval_monomial(MonomialExp::int(0, 1), zeta);
        assert!(rel(half * half, full) < 1e-14);
        assert!(rel(full, zeta.z2()) < 1e-14);
    }

    #[test]
    fn twelve_distinct_elements_identity_first() {
        let w = weyl_elements();
        assert_eq!(w.len(), 12);
        assert_eq!(w[0].matrix, [[1, 0], [0, 1]]);
        assert_eq!(w[0].sign, 1);
        for i in 0..12 {
            for j in (i + 1)..12 {
                assert_ne!(w[i].matrix, w[j].matrix, "elements {i} and {j} coincide");
            }
        }
        // Rotations first (det +1), then reflections (det -1).
        for k in 0..6 {
            assert_eq!(w[k].sign, 1);
            assert_eq!(w[6 + k].sign, -1);
        }
        // w0 = (s1 s2)^3 = -id on exponents.
        assert_eq!(w[3].matrix, [[-1, 0], [0, -1]]);
    }

    #[test]
    fn group_closure_and_generator_order() {
        let w = weyl_elements();
        let all: Vec<_> = w.iter().map(|e| e.matrix).collect();
        for a in w {
            for b in w {
                let prod = mat_mul(a.matrix, b.matrix);
                assert!(all.contains(&prod), "product left the set");
            }
        }
        // order of s1 s2 is 6
        let b = mat_mul(M_S1, M_S2);
        let mut acc = b;
        let mut order = 1;
        while acc != [[1, 0], [0, 1]] {
            acc = mat_mul(acc, b);
            order += 1;
            assert!(order <= 12);
        }
        assert_eq!(order, 6);
    }

    #[test]
    fn pinned_simple_reflection_images() {
        // z = (0.5, 0.4): s1 sends it to (2.0, 0.2), w0 to (2.0, 2.5).
        let zeta = LogPoint::from_z(c(0.5, 0.0), c(0.4, 0.0)).unwrap();
        let w = weyl_elements();

        let s1 = w.iter().find(|e| e.matrix == M_S1).unwrap();
        let im = act_log(s1, zeta);
        assert!(rel(im.z1(), c(2.0, 0.0)) < 1e-13);
        assert!(rel(im.z2(), c(0.2, 0.0)) < 1e-13);

        let w0 = &w[3];
        let im0 = act_log(w0, zeta);
        assert!(rel(im0.z1(), c(2.0, 0.0)) < 1e-13);
        assert!(rel(im0.z2(), c(2.5, 0.0)) < 1e-13);

        let s2 = &w[6]; // (s1 s2)^0 s2
        assert_eq!(s2.matrix, M_S2);
        let im2 = act_log(s2, zeta);
        // s2.(z1, z2) = (z1 z2^3, 1/z2)
        assert!(rel(im2.z1(), c(0.5 * 0.4 * 0.4 * 0.4, 0.0)) < 1e-13);
        assert!(rel(im2.z2(), c(2.5, 0.0)) < 1e-13);
    }

    #[test]
    fn branch_consistency_across_the_group() {
        let zeta = LogPoint::new(c(0.31, 0.021), c(-0.17, 0.013));
        let lams = [MonomialExp::int(1, 2), MonomialExp::half(1, 3), MonomialExp::half(-1, 1)];
        for w in weyl_elements() {
            for lam in lams {
                let a = eval_monomial(act_monomial(w, lam), zeta);
                let b = eval_monomial(lam, act_log(w, zeta));
                assert!(rel(a, b) < 1e-14, "branch mismatch for {:?}", w.word);
            }
        }
    }

    #[test]
    fn round_trip_mod_lattice() {
        let z1 = c(-0.3, 0.75);
        let z2 = c(0.9, -0.21);
        let p = LogPoint::from_z(z1, z2).unwrap();
        assert!(rel(p.z1(), z1) < 1e-14);
        assert!(rel(p.z2(), z2) < 1e-14);
        // A different branch of the same z lands on the same torus point.
        let q = LogPoint::new(p.zeta1 + 1.0, p.zeta2 - 2.0);
        assert!(rel(q.z1(), z1) < 1e-13);
        assert!(rel(q.z2(), z2) < 1e-13);
    }

    #[test]
    fn shift_log_scales_monomials_by_base_powers() {
        let zeta = LogPoint::new(c(0.23, 0.011), c(0.41, -0.007));
        let q = c(0.22, 0.0);
        let lam = MonomialExp::int(2, 1);
        let before = eval_monomial(lam, zeta);
        let after = eval_monomial(lam, shift_log(zeta, Axis::Z1, q, 0.5).unwrap());
        // axis 1 exponent is lam1 = 2, so one half shift contributes q^{1/2*2} = q.
        assert!(rel(after, q * before) < 1e-14);

        let after2 = eval_monomial(lam, shift_log(zeta, Axis::Z2, q, -1.5).unwrap());
        assert!(rel(after2, before * q.powf(-1.5)) < 1e-13);
    }

    #[test]
    fn two_half_shifts_equal_one_full_shift() {
        let q = c(0.22, 0.0);
        // On the real grid points used by quadrature the composition is exact.
        let zeta = LogPoint::real(0.375, 0.8125);
        let twice = shift_log(shift_log(zeta, Axis::Z1, q, 0.5).unwrap(), Axis::Z1, q, 0.5).unwrap();
        let once = shift_log(zeta, Axis::Z1, q, 1.0).unwrap();
        assert_eq!(twice, once);

        // At a generic complex point the two differ by at most double rounding.
        let g = LogPoint::new(c(0.331, 0.0213), c(-0.12, 0.04));
        let t2 = shift_log(shift_log(g, Axis::Z2, q, 0.5).unwrap(), Axis::Z2, q, 0.5).unwrap();
        let t1 = shift_log(g, Axis::Z2, q, 1.0).unwrap();
        assert!((t2.zeta2 - t1.zeta2).norm() < 1e-15);
        assert!(shift_log(g, Axis::Z1, q, 0.3).is_err());
    }

    #[test]
    fn weyl_denominator_antisymmetry() {
        let p = c(0.08, 0.0);
        let zeta = LogPoint::new(c(0.19, 0.012), c(0.37, -0.02));
        let base = weyl_denominator(zeta, p).unwrap();
        for w in weyl_elements() {
            let img = weyl_denominator(act_log(w, zeta), p).unwrap();
            assert!(rel(img, w.sign as f64 * base) < 1e-12, "failed for {:?}", w.word);
        }
    }

    #[test]
    fn pairing_of_coroots_and_weights() {
        assert_eq!(pairing_x3(COROOT1, VARPI1), 3);
        assert_eq!(pairing_x3(COROOT1, VARPI2), 0);
        assert_eq!(pairing_x3(COROOT2, VARPI1), 0);
        assert_eq!(pairing_x3(COROOT2, VARPI2), 3);
        // alpha1 = 2 varpi1 - 3 varpi2 and alpha2 = -varpi1 + 2 varpi2 close the loop.
        assert_eq!(pairing_x3((1, 0), (1, 0)), 6); // |alpha1|^2 * 3/... stays integral
    }
}
