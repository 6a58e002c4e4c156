//! Two-phase Hooke tensor, Biot parameters and ε-scaled loads.
//!
//! Tensors are stored as 6×6 Voigt matrices acting on engineering strains
//! `[e11, e22, e33, 2e23, 2e13, 2e12]`. Coercivity is measured on the Mandel
//! form `D C D` with `D = diag(1,1,1,√2,√2,√2)`, which is the matrix of
//! `S ↦ S:A:S` in an orthonormal basis of symmetric tensors.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Matrix6};

use crate::error::{Error, Result};
use crate::geometry::Phase;

pub type Voigt = Matrix6<f64>;

/// Smallest admissible coercivity and permeability constants.
pub const ADMISSIBLE_MIN: f64 = 1e-12;

/// Lamé constants `(λ, μ)` from Young's modulus and Poisson ratio.
pub fn lame(e: f64, nu: f64) -> (f64, f64) {
    (e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu)), e / (2.0 * (1.0 + nu)))
}

/// Isotropic Voigt matrix.
pub fn isotropic(e: f64, nu: f64) -> Result<Voigt> {
    if !(e > 0.0) {
        return Err(Error::Material(format!("Young's modulus must be positive, got {e}")));
    }
    if !(nu > -1.0 && nu < 0.5) {
        return Err(Error::Material(format!("Poisson ratio must lie in (-1, 1/2), got {nu}")));
    }
    let (lam, mu) = lame(e, nu);
    Ok(from_lame(lam, mu))
}

pub fn from_lame(lam: f64, mu: f64) -> Voigt {
    let mut c = Voigt::zeros();
    for i in 0..3 {
        for j in 0..3 {
            c[(i, j)] = lam;
        }
        c[(i, i)] += 2.0 * mu;
        c[(i + 3, i + 3)] = mu;
    }
    c
}

/// Plane-stress membrane tensor `[[Q1111, Q1122, 0], [Q1122, Q2222, 0], [0, 0, Q1212]]`.
pub fn plane_stress(e: f64, nu: f64) -> nalgebra::Matrix3<f64> {
    let q = e / (1.0 - nu * nu);
    let mu = e / (2.0 * (1.0 + nu));
    nalgebra::Matrix3::new(q, q * nu, 0.0, q * nu, q, 0.0, 0.0, 0.0, mu)
}

/// Mandel scaling `D C D`.
pub fn mandel(c: &Voigt) -> Voigt {
    let s = std::f64::consts::SQRT_2;
    let d = Voigt::from_diagonal(&nalgebra::Vector6::new(1.0, 1.0, 1.0, s, s, s));
    d * c * d
}

/// Coercivity constant of one phase tensor; fails on asymmetric input.
pub fn coercivity(c: &Voigt) -> Result<f64> {
    let scale = c.abs().max();
    if (c - c.transpose()).abs().max() > 1e-12 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::Material("Voigt matrix is not symmetric".into()));
    }
    Ok(mandel(c).symmetric_eigenvalues().min())
}

/// Phase-wise elasticity tensor `A = 1_fiber A^f + 1_gel A^g`.
#[derive(Clone, Debug, PartialEq)]
pub struct HookeTensor {
    pub fiber: Voigt,
    pub gel: Voigt,
}

impl HookeTensor {
    pub fn new(fiber: Voigt, gel: Voigt) -> Self {
        Self { fiber, gel }
    }

    pub fn homogeneous(c: Voigt) -> Self {
        Self { fiber: c, gel: c }
    }

    pub fn isotropic(fiber: (f64, f64), gel: (f64, f64)) -> Result<Self> {
        Ok(Self { fiber: isotropic(fiber.0, fiber.1)?, gel: isotropic(gel.0, gel.1)? })
    }

    pub fn phase(&self, p: Phase) -> &Voigt {
        match p {
            Phase::Fiber => &self.fiber,
            Phase::Gel => &self.gel,
        }
    }

    /// Minimum coercivity over both phases; errors if not admissible.
    pub fn check_coercive(&self) -> Result<f64> {
        let c0 = coercivity(&self.fiber)?.min(coercivity(&self.gel)?);
        if c0 <= ADMISSIBLE_MIN {
            return Err(Error::Material(format!("tensor is not coercive (c0 = {c0:.3e})")));
        }
        Ok(c0)
    }
}

impl Default for HookeTensor {
    fn default() -> Self {
        Self::isotropic((10.0, 0.3), (1.0, 0.35)).expect("default moduli are admissible")
    }
}

/// Biot modulus `c`, Biot–Willis coefficient `α` and permeability `K`.
#[derive(Clone, Debug, PartialEq)]
pub struct BiotParams {
    pub c: f64,
    pub alpha: f64,
    pub k: Matrix3<f64>,
}

impl Default for BiotParams {
    fn default() -> Self {
        Self { c: 1.0, alpha: 1.0, k: Matrix3::identity() }
    }
}

impl BiotParams {
    /// Smallest eigenvalue of `K`; errors if `K` is not SPD.
    pub fn permeability_constant(&self) -> Result<f64> {
        if (self.k - self.k.transpose()).abs().max() > 1e-12 * self.k.abs().max().max(f64::MIN_POSITIVE) {
            return Err(Error::Material("permeability is not symmetric".into()));
        }
        if self.k.cholesky().is_none() {
            return Err(Error::Material("permeability is not positive definite".into()));
        }
        let ck = self.k.symmetric_eigenvalues().min();
        if ck <= ADMISSIBLE_MIN {
            return Err(Error::Material(format!("permeability is not positive definite (c_K = {ck:.3e})")));
        }
        Ok(ck)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Admissibility {
    pub c0: f64,
    pub c_k: f64,
}

/// Coercivity of the tensor and ellipticity of the permeability.
pub fn check_admissible(tensor: &HookeTensor, biot: &BiotParams) -> Result<Admissibility> {
    let c0 = tensor.check_coercive()?;
    let c_k = biot.permeability_constant()?;
    if !(biot.c > 0.0) {
        return Err(Error::Material(format!("Biot modulus must be positive, got {}", biot.c)));
    }
    if !(biot.alpha >= 0.0) {
        return Err(Error::Material(format!("Biot-Willis coefficient must be non-negative, got {}", biot.alpha)));
    }
    Ok(Admissibility { c0, c_k })
}

/// One monomial `coef · x1^a · x2^b · t^c`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Monomial {
    pub coef: f64,
    pub px: u32,
    pub py: u32,
    pub pt: u32,
}

/// Polynomial in `(x1, x2, t)`.
///
/// Text form: comma-separated terms `coef:a:b:c`; the empty string and `0`
/// denote the zero polynomial.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Polynomial {
    pub terms: Vec<Monomial>,
}

impl Polynomial {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        if c == 0.0 {
            return Self::zero();
        }
        Self { terms: vec![Monomial { coef: c, px: 0, py: 0, pt: 0 }] }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|m| m.coef == 0.0)
    }

    pub fn eval(&self, x: f64, y: f64, t: f64) -> f64 {
        self.terms
            .iter()
            .map(|m| m.coef * x.powi(m.px as i32) * y.powi(m.py as i32) * t.powi(m.pt as i32))
            .sum()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { terms: self.terms.iter().map(|m| Monomial { coef: m.coef * s, ..*m }).collect() }
    }
}

impl FromStr for Polynomial {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s == "0" {
            return Ok(Self::zero());
        }
        let mut terms = Vec::new();
        for term in s.split(',') {
            let parts: Vec<&str> = term.trim().split(':').collect();
            let bad = || Error::InvalidArgument(format!("bad polynomial term '{}' (expected coef:a:b:c)", term.trim()));
            if parts.is_empty() || parts.len() > 4 {
                return Err(bad());
            }
            let coef: f64 = parts[0].trim().parse().map_err(|_| bad())?;
            let mut p = [0u32; 3];
            for (i, part) in parts.iter().skip(1).enumerate() {
                p[i] = part.trim().parse().map_err(|_| bad())?;
            }
            terms.push(Monomial { coef, px: p[0], py: p[1], pt: p[2] });
        }
        Ok(Self { terms })
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self.terms.iter().map(|m| format!("{}:{}:{}:{}", m.coef, m.px, m.py, m.pt)).collect();
        write!(f, "{}", parts.join(","))
    }
}

/// Body force `f` and gel source `h` on `ω`, constant through the thickness.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LoadSpec {
    pub f: [Polynomial; 3],
    pub h: Polynomial,
    /// Loads vanish for `t > switch_off`.
    pub switch_off: Option<f64>,
    /// Declared bound on the load norms.
    pub k1: Option<f64>,
}

impl LoadSpec {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(f: [f64; 3], h: f64) -> Self {
        Self { f: f.map(Polynomial::constant), h: Polynomial::constant(h), switch_off: None, k1: None }
    }

    pub fn is_zero(&self) -> bool {
        self.f.iter().all(Polynomial::is_zero) && self.h.is_zero()
    }

    fn active(&self, t: f64) -> bool {
        self.switch_off.is_none_or(|off| t <= off + 1e-12)
    }

    /// Unscaled `(f, h)` at `(x', t)`.
    pub fn eval(&self, x: [f64; 2], t: f64) -> ([f64; 3], f64) {
        if !self.active(t) {
            return ([0.0; 3], 0.0);
        }
        (self.f.clone().map(|p| p.eval(x[0], x[1], t)), self.h.eval(x[0], x[1], t))
    }

    pub fn f_at(&self, x: [f64; 2], t: f64) -> [f64; 3] {
        if !self.active(t) {
            return [0.0; 3];
        }
        [self.f[0].eval(x[0], x[1], t), self.f[1].eval(x[0], x[1], t), self.f[2].eval(x[0], x[1], t)]
    }

    pub fn h_at(&self, x: [f64; 2], t: f64) -> f64 {
        if !self.active(t) {
            return 0.0;
        }
        self.h.eval(x[0], x[1], t)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            f: self.f.clone().map(|p| p.scaled(s)),
            h: self.h.scaled(s),
            switch_off: self.switch_off,
            k1: self.k1.map(|k| k * s),
        }
    }

    /// Warn if the declared bound `K1` is exceeded by sampled load values.
    pub fn check_bound(&self, omega: &crate::geometry::Rect, t_end: f64) {
        let Some(k1) = self.k1 else { return };
        let mut worst = 0.0f64;
        for i in 0..=4 {
            for j in 0..=4 {
                for k in 0..=4 {
                    let x = [
                        omega.lo[0] + omega.width() * i as f64 / 4.0,
                        omega.lo[1] + omega.height() * j as f64 / 4.0,
                    ];
                    let (f, h) = self.eval(x, t_end * k as f64 / 4.0);
                    worst = worst.max(f.iter().map(|v| v * v).sum::<f64>().sqrt() + h.abs());
                }
            }
        }
        if worst > k1 {
            log::warn!("sampled load magnitude {worst:.3e} exceeds the declared bound K1 = {k1:.3e}");
        }
    }
}

/// Loads at one time scaled for the ε-problem: `f_ε = (εf1, εf2, ε²f3)`, `h_ε = εh`.
#[derive(Clone, Debug)]
pub struct ScaledLoads<'a> {
    pub spec: &'a LoadSpec,
    pub eps: f64,
    pub t: f64,
}

pub fn scale_loads(spec: &LoadSpec, eps: f64, t: f64) -> ScaledLoads<'_> {
    ScaledLoads { spec, eps, t }
}

impl ScaledLoads<'_> {
    pub fn f_eps(&self, x: [f64; 3]) -> [f64; 3] {
        let f = self.spec.f_at([x[0], x[1]], self.t);
        [self.eps * f[0], self.eps * f[1], self.eps * self.eps * f[2]]
    }

    pub fn h_eps(&self, x: [f64; 3]) -> f64 {
        self.eps * self.spec.h_at([x[0], x[1]], self.t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn isotropic_lame_values() {
        let (lam, mu) = lame(1.0, 0.3);
        assert!((lam - 0.576923).abs() < 1e-6);
        assert!((mu - 0.384615).abs() < 1e-6);
        let c = isotropic(1.0, 0.0).unwrap();
        assert_eq!(c[(0, 0)], 1.0);
        assert_eq!(c[(3, 3)], 0.5);
        assert_eq!(c[(0, 1)], 0.0);
        assert!(isotropic(1.0, 0.5).is_err());
    }

    #[test]
    fn coercivity_is_twice_shear_modulus() {
        let c0 = coercivity(&isotropic(1.0, 0.3).unwrap()).unwrap();
        assert!((c0 - 2.0 / 2.6).abs() < 1e-12);
        assert!((c0 - 0.769).abs() < 1e-3);
    }

    #[test]
    fn admissibility_checks() {
        let biot = BiotParams { c: 1.0, alpha: 1.0, k: Matrix3::from_diagonal(&nalgebra::Vector3::new(1.0, 2.0, 3.0)) };
        let rep = check_admissible(&HookeTensor::default(), &biot).unwrap();
        assert!((rep.c_k - 1.0).abs() < 1e-14);
        let zero = HookeTensor::homogeneous(Voigt::zeros());
        assert!(check_admissible(&zero, &biot).is_err());
        let mut skew = isotropic(1.0, 0.3).unwrap();
        skew[(0, 1)] += 0.1;
        assert!(coercivity(&skew).is_err());
    }

    #[test]
    fn load_scaling() {
        let spec = LoadSpec::constant([1.0, 0.0, 0.0], 0.0);
        assert_eq!(scale_loads(&spec, 0.25, 0.0).f_eps([0.0; 3]), [0.25, 0.0, 0.0]);
        let spec = LoadSpec::constant([0.0, 0.0, 1.0], 1.0);
        assert_eq!(scale_loads(&spec, 0.25, 0.0).f_eps([0.0; 3]), [0.0, 0.0, 1.0 / 16.0]);
        assert_eq!(scale_loads(&spec, 0.125, 0.0).h_eps([0.0; 3]), 0.125);
    }

    #[test]
    fn polynomial_parse_and_eval() {
        let p: Polynomial = "2:1:0:0, -1:0:2:1".parse().unwrap();
        assert!((p.eval(3.0, 2.0, 0.5) - (6.0 - 2.0)).abs() < 1e-15);
        assert_eq!(p.to_string().parse::<Polynomial>().unwrap(), p);
        assert!("1:x".parse::<Polynomial>().is_err());
        assert!("0".parse::<Polynomial>().unwrap().is_zero());
    }

    #[test]
    fn switch_off() {
        let spec = LoadSpec { switch_off: Some(0.5), ..LoadSpec::constant([1.0, 1.0, 1.0], 1.0) };
        assert_eq!(spec.h_at([0.0, 0.0], 0.5), 1.0);
        assert_eq!(spec.h_at([0.0, 0.0], 0.6), 0.0);
    }

    proptest! {
        #[test]
        fn coercivity_bounds_quadratic_form(
            e in 0.1f64..10.0, nu in -0.9f64..0.49,
            s in proptest::collection::vec(-1.0f64..1.0, 6),
        ) {
            let c = isotropic(e, nu).unwrap();
            let c0 = coercivity(&c).unwrap();
            // S symmetric, engineering strain vector has doubled shears
            let v = nalgebra::Vector6::new(s[0], s[1], s[2], 2.0 * s[3], 2.0 * s[4], 2.0 * s[5]);
            let form = (v.transpose() * c * v)[(0, 0)];
            let frob = s[0] * s[0] + s[1] * s[1] + s[2] * s[2] + 2.0 * (s[3] * s[3] + s[4] * s[4] + s[5] * s[5]);
            prop_assert!(form >= c0 * frob - 1e-10 * frob.max(1.0));
        }
    }
}
