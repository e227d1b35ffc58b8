//! Hyperelliptic curve models `y^2 = f(x)` with all punctures at infinity.
//!
//! Two models are supported: `deg f = 2g+1` (one puncture, `x = z^-2`) and
//! `deg f = 2g+2` with square leading coefficient (two punctures, `x = z^-1`
//! at each). The ring of functions regular away from the punctures is then
//! the polynomial ring in `(x, y)` reduced by the curve equation, so bases
//! filtered by pole order come from Weierstrass monomials directly, and
//! expansions at the punctures are exact series computations.

use crate::jetring::{q_sqrt, LaurentBlock, SeriesError};
use num::{BigRational, One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CurveError {
    #[error("f is not squarefree")]
    NotSquarefree,
    #[error("deg f = {0} does not give a supported model")]
    BadDegree(usize),
    #[error("leading coefficient must be a rational square for puncture expansions")]
    LeadingNotSquare,
    #[error("genus {0} < 2 is not supported")]
    GenusTooSmall(usize),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    Odd,
    Even,
}

mod qpoly {
    use num::{BigRational, Zero};

    pub fn trim(mut p: Vec<BigRational>) -> Vec<BigRational> {
        while p.last().map(|c| c.is_zero()).unwrap_or(false) {
            p.pop();
        }
        p
    }

    pub fn deg(p: &[BigRational]) -> Option<usize> {
        if p.is_empty() {
            None
        } else {
            Some(p.len() - 1)
        }
    }

    pub fn derivative(p: &[BigRational]) -> Vec<BigRational> {
        if p.len() <= 1 {
            return Vec::new();
        }
        p.iter()
            .enumerate()
            .skip(1)
            .map(|(i, c)| c * BigRational::from_integer(i.into()))
            .collect()
    }

    pub fn mul(a: &[BigRational], b: &[BigRational]) -> Vec<BigRational> {
        if a.is_empty() || b.is_empty() {
            return Vec::new();
        }
        let mut out = vec![BigRational::zero(); a.len() + b.len() - 1];
        for (i, ca) in a.iter().enumerate() {
            if ca.is_zero() {
                continue;
            }
            for (j, cb) in b.iter().enumerate() {
                let v = &out[i + j] + ca * cb;
                out[i + j] = v;
            }
        }
        trim(out)
    }

    pub fn add(a: &[BigRational], b: &[BigRational]) -> Vec<BigRational> {
        let n = a.len().max(b.len());
        let mut out = vec![BigRational::zero(); n];
        for (i, o) in out.iter_mut().enumerate() {
            *o = a.get(i).cloned().unwrap_or_else(BigRational::zero)
                + b.get(i).cloned().unwrap_or_else(BigRational::zero);
        }
        trim(out)
    }

    pub fn rem(a: &[BigRational], b: &[BigRational]) -> Vec<BigRational> {
        let mut r = a.to_vec();
        let db = deg(b).expect("division by zero polynomial");
        let lead = b[db].clone();
        while let Some(dr) = deg(&r) {
            if dr < db {
                break;
            }
            let factor = &r[dr] / &lead;
            let shift = dr - db;
            for i in 0..=db {
                let v = &r[i + shift] - &factor * &b[i];
                r[i + shift] = v;
            }
            r = trim(r);
        }
        r
    }

    pub fn gcd(a: &[BigRational], b: &[BigRational]) -> Vec<BigRational> {
        let mut a = trim(a.to_vec());
        let mut b = trim(b.to_vec());
        while !b.is_empty() {
            let r = rem(&a, &b);
            a = b;
            b = r;
        }
        a
    }
}

/// A hyperelliptic curve with its puncture expansion data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveModel {
    #[serde(with = "crate::jetring::qvec_serde")]
    f: Vec<BigRational>,
    genus: usize,
    model: ModelKind,
    punctures: usize,
    #[serde(with = "crate::jetring::qserde")]
    lead_sqrt: BigRational,
}

impl CurveModel {
    /// Build a curve from the coefficients of `f` (constant term first).
    pub fn build(f_coeffs: &[BigRational]) -> Result<Self, CurveError> {
        let f = qpoly::trim(f_coeffs.to_vec());
        let deg = qpoly::deg(&f).ok_or(CurveError::BadDegree(0))?;
        if deg < 5 {
            if deg >= 3 {
                return Err(CurveError::GenusTooSmall((deg - 1) / 2));
            }
            return Err(CurveError::BadDegree(deg));
        }
        let (model, genus) = if deg % 2 == 1 {
            (ModelKind::Odd, (deg - 1) / 2)
        } else {
            (ModelKind::Even, (deg - 2) / 2)
        };
        if genus < 2 {
            return Err(CurveError::GenusTooSmall(genus));
        }
        let g = qpoly::gcd(&f, &qpoly::derivative(&f));
        if qpoly::deg(&g) != Some(0) {
            return Err(CurveError::NotSquarefree);
        }
        let lead_sqrt = q_sqrt(&f[deg]).ok_or(CurveError::LeadingNotSquare)?;
        let punctures = match model {
            ModelKind::Odd => 1,
            ModelKind::Even => 2,
        };
        Ok(CurveModel {
            f,
            genus,
            model,
            punctures,
            lead_sqrt,
        })
    }

    pub fn f(&self) -> &[BigRational] {
        &self.f
    }

    pub fn genus(&self) -> usize {
        self.genus
    }

    pub fn model(&self) -> ModelKind {
        self.model
    }

    pub fn punctures(&self) -> usize {
        self.punctures
    }

    /// Valuation of `x` at a puncture.
    pub fn x_val(&self) -> i64 {
        match self.model {
            ModelKind::Odd => -2,
            ModelKind::Even => -1,
        }
    }

    /// Valuation of `y` at a puncture.
    pub fn y_val(&self) -> i64 {
        match self.model {
            ModelKind::Odd => -(2 * self.genus as i64 + 1),
            ModelKind::Even => -(self.genus as i64 + 1),
        }
    }

    /// Valuation of the form `dx/y` at a puncture.
    pub fn dx_over_y_val(&self) -> i64 {
        match self.model {
            ModelKind::Odd => 2 * self.genus as i64 - 2,
            ModelKind::Even => self.genus as i64 - 1,
        }
    }

    /// Exact expansion of `x` at puncture `punct`.
    pub fn expand_x(&self, punct: usize) -> LaurentBlock {
        LaurentBlock::monomial_q(punct, self.x_val(), BigRational::one(), 0)
    }

    /// Exact expansion of `dx` (form weight 1).
    pub fn expand_dx(&self, punct: usize) -> LaurentBlock {
        self.expand_x(punct).dz()
    }

    /// Expansion of `y`, certified to degree `cert`.
    pub fn expand_y(&self, punct: usize, cert: i64) -> Result<LaurentBlock, CurveError> {
        let x = self.expand_x(punct);
        let mut fx = LaurentBlock::zero(punct, 1, 1, 0);
        let mut xp = LaurentBlock::monomial_q(punct, 0, BigRational::one(), 0);
        for c in &self.f {
            if !c.is_zero() {
                fx = fx.add(&xp.scale_q(c))?;
            }
            xp = xp.mul(&x)?;
        }
        let w = self.y_val();
        let y = fx.truncate(cert + w).sqrt()?;
        Ok(if punct == 1 { y.neg() } else { y })
    }

    /// Expansion of `1/y`, certified to `cert`.
    pub fn expand_inv_y(&self, punct: usize, cert: i64) -> Result<LaurentBlock, CurveError> {
        let v = self.y_val();
        let y = self.expand_y(punct, cert + 2 * v)?;
        Ok(y.invert()?)
    }

    /// Expansion of the form `dx/y`, certified to `cert`.
    pub fn expand_dx_over_y(&self, punct: usize, cert: i64) -> Result<LaurentBlock, CurveError> {
        let dx = self.expand_dx(punct);
        let inv_y = self.expand_inv_y(punct, cert - dx.lo)?;
        Ok(dx.mul(&inv_y)?)
    }

    /// Basis of functions regular off the punctures with pole order at most
    /// `max_pole` everywhere, ordered by (pole order, y-degree, x-degree).
    pub fn outer_function_basis(&self, max_pole: i64) -> Vec<OuterFunction> {
        let mut out = Vec::new();
        for ydeg in 0..=1usize {
            let mut i = 0usize;
            loop {
                let mono = OuterFunction::monomial(i, ydeg == 1);
                if mono.pole_order_bound(self) > max_pole {
                    break;
                }
                out.push(mono);
                i += 1;
            }
        }
        out.sort_by_key(|m| m.sort_key(self));
        out
    }

    /// Basis of global forms `φ · dx/y` with pole order at most `max_pole`
    /// at every puncture, same ordering contract.
    pub fn outer_form_basis(&self, max_pole: i64) -> Vec<OuterForm> {
        self.outer_function_basis(max_pole + self.dx_over_y_val())
            .into_iter()
            .map(|func| OuterForm { func })
            .collect()
    }

    /// Sum of the residues of a global form over all punctures; exactly zero
    /// by the residue theorem.
    pub fn residue_theorem_check(
        &self,
        form: &OuterForm,
        cert: i64,
    ) -> Result<BigRational, CurveError> {
        let mut total = BigRational::zero();
        for p in 0..self.punctures {
            let exp = form.expansion(self, p, cert)?;
            let r = exp.residue()?;
            total += r.at(0, 0).at_base();
        }
        Ok(total)
    }
}

/// An element of the outer function ring: `q0(x) + q1(x)·y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterFunction {
    #[serde(with = "crate::jetring::qvec_serde")]
    pub q0: Vec<BigRational>,
    #[serde(with = "crate::jetring::qvec_serde")]
    pub q1: Vec<BigRational>,
}

impl OuterFunction {
    pub fn zero() -> Self {
        OuterFunction {
            q0: Vec::new(),
            q1: Vec::new(),
        }
    }

    pub fn one() -> Self {
        OuterFunction {
            q0: vec![BigRational::one()],
            q1: Vec::new(),
        }
    }

    /// `x^i` or `x^i y`.
    pub fn monomial(x_pow: usize, with_y: bool) -> Self {
        let mut q = vec![BigRational::zero(); x_pow + 1];
        q[x_pow] = BigRational::one();
        if with_y {
            OuterFunction {
                q0: Vec::new(),
                q1: q,
            }
        } else {
            OuterFunction {
                q0: q,
                q1: Vec::new(),
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.q0.iter().all(|c| c.is_zero()) && self.q1.iter().all(|c| c.is_zero())
    }

    pub fn add(&self, other: &Self) -> Self {
        OuterFunction {
            q0: qpoly::add(&self.q0, &other.q0),
            q1: qpoly::add(&self.q1, &other.q1),
        }
    }

    pub fn scale(&self, q: &BigRational) -> Self {
        OuterFunction {
            q0: qpoly::trim(self.q0.iter().map(|c| c * q).collect()),
            q1: qpoly::trim(self.q1.iter().map(|c| c * q).collect()),
        }
    }

    /// Product, reduced via `y^2 = f(x)`.
    pub fn mul(&self, other: &Self, curve: &CurveModel) -> Self {
        let yy = qpoly::mul(&qpoly::mul(&self.q1, &other.q1), curve.f());
        OuterFunction {
            q0: qpoly::add(&qpoly::mul(&self.q0, &other.q0), &yy),
            q1: qpoly::add(
                &qpoly::mul(&self.q0, &other.q1),
                &qpoly::mul(&self.q1, &other.q0),
            ),
        }
    }

    /// Largest pole order over the punctures (no cancellation assumed).
    pub fn pole_order_bound(&self, curve: &CurveModel) -> i64 {
        let mut pole = i64::MIN;
        let x_pole = -curve.x_val();
        let y_pole = -curve.y_val();
        for (i, c) in self.q0.iter().enumerate() {
            if !c.is_zero() {
                pole = pole.max(x_pole * i as i64);
            }
        }
        for (i, c) in self.q1.iter().enumerate() {
            if !c.is_zero() {
                pole = pole.max(x_pole * i as i64 + y_pole);
            }
        }
        if pole == i64::MIN {
            0
        } else {
            pole
        }
    }

    fn sort_key(&self, curve: &CurveModel) -> (i64, usize, usize) {
        let ydeg = if self.q1.iter().any(|c| !c.is_zero()) { 1 } else { 0 };
        let xdeg = if ydeg == 1 {
            self.q1.len().saturating_sub(1)
        } else {
            self.q0.len().saturating_sub(1)
        };
        (self.pole_order_bound(curve), ydeg, xdeg)
    }

    /// Expansion at puncture `punct`, certified to `cert`.
    pub fn expansion(
        &self,
        curve: &CurveModel,
        punct: usize,
        cert: i64,
    ) -> Result<LaurentBlock, CurveError> {
        let x = curve.expand_x(punct);
        let mut acc = LaurentBlock::zero(punct, 1, 1, 0);
        let mut xp = LaurentBlock::monomial_q(punct, 0, BigRational::one(), 0);
        for c in &self.q0 {
            if !c.is_zero() {
                acc = acc.add(&xp.scale_q(c))?;
            }
            xp = xp.mul(&x)?;
        }
        if self.q1.iter().any(|c| !c.is_zero()) {
            let mut acc1 = LaurentBlock::zero(punct, 1, 1, 0);
            let mut xp = LaurentBlock::monomial_q(punct, 0, BigRational::one(), 0);
            for c in &self.q1 {
                if !c.is_zero() {
                    acc1 = acc1.add(&xp.scale_q(c))?;
                }
                xp = xp.mul(&x)?;
            }
            let y = curve.expand_y(punct, cert - acc1.lo)?;
            acc = acc.add(&acc1.mul(&y)?)?;
        }
        Ok(acc.truncate(cert))
    }
}

/// A global form `φ · dx/y` for an outer function `φ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterForm {
    pub func: OuterFunction,
}

impl OuterForm {
    pub fn pole_order_bound(&self, curve: &CurveModel) -> i64 {
        self.func.pole_order_bound(curve) - curve.dx_over_y_val()
    }

    pub fn scale(&self, q: &BigRational) -> Self {
        OuterForm {
            func: self.func.scale(q),
        }
    }

    pub fn expansion(
        &self,
        curve: &CurveModel,
        punct: usize,
        cert: i64,
    ) -> Result<LaurentBlock, CurveError> {
        let f = self
            .func
            .expansion(curve, punct, cert - curve.dx_over_y_val())?;
        let carrier = curve.expand_dx_over_y(punct, cert - f.lo)?;
        Ok(f.mul(&carrier)?.truncate(cert))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jetring::JET_EXACT;
    use num::BigInt;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    pub(crate) fn d1() -> CurveModel {
        // y^2 = x^5 - 1
        CurveModel::build(&[q(-1, 1), q(0, 1), q(0, 1), q(0, 1), q(0, 1), q(1, 1)]).unwrap()
    }

    pub(crate) fn d2() -> CurveModel {
        // y^2 = x^6 + x + 1
        CurveModel::build(&[
            q(1, 1),
            q(1, 1),
            q(0, 1),
            q(0, 1),
            q(0, 1),
            q(0, 1),
            q(1, 1),
        ])
        .unwrap()
    }

    #[test]
    fn model_detection() {
        let c1 = d1();
        assert_eq!(c1.model(), ModelKind::Odd);
        assert_eq!(c1.genus(), 2);
        assert_eq!(c1.punctures(), 1);
        let c2 = d2();
        assert_eq!(c2.model(), ModelKind::Even);
        assert_eq!(c2.genus(), 2);
        assert_eq!(c2.punctures(), 2);
    }

    #[test]
    fn build_errors() {
        // (x-1)^2 (x^3+2) = x^5 - 2x^4 + x^3 + 2x^2 - 4x + 2 is not squarefree
        let err = CurveModel::build(&[
            q(2, 1),
            q(-4, 1),
            q(2, 1),
            q(1, 1),
            q(-2, 1),
            q(1, 1),
        ])
        .unwrap_err();
        assert_eq!(err, CurveError::NotSquarefree);
        let err = CurveModel::build(&[q(1, 1), q(0, 1), q(0, 1), q(1, 1)]).unwrap_err();
        assert!(matches!(err, CurveError::GenusTooSmall(1)));
        let err = CurveModel::build(&[
            q(1, 1),
            q(1, 1),
            q(0, 1),
            q(0, 1),
            q(0, 1),
            q(0, 1),
            q(3, 1),
        ])
        .unwrap_err();
        assert_eq!(err, CurveError::LeadingNotSquare);
    }

    #[test]
    fn d1_y_expansion() {
        // y = z^-5 (1 - z^10/2 - z^20/8 - ...); oracle: y^2 == f(x(z))
        let c = d1();
        let y = c.expand_y(0, 20).unwrap();
        assert_eq!(y.lo, -5);
        assert_eq!(y.coeff(-5).at(0, 0).at_base(), q(1, 1));
        assert_eq!(y.coeff(5).at(0, 0).at_base(), q(-1, 2));
        assert_eq!(y.coeff(15).at(0, 0).at_base(), q(-1, 8));
        let y2 = y.mul(&y).unwrap();
        let x = c.expand_x(0);
        let x5 = x
            .mul(&x)
            .unwrap()
            .mul(&x)
            .unwrap()
            .mul(&x)
            .unwrap()
            .mul(&x)
            .unwrap();
        let fx = x5
            .sub(&LaurentBlock::monomial_q(0, 0, q(1, 1), 0))
            .unwrap();
        assert!(y2.eq_on_window(&fx, JET_EXACT));
    }

    #[test]
    fn d2_y_expansions_are_opposite_branches() {
        let c = d2();
        let yp = c.expand_y(0, 10).unwrap();
        let ym = c.expand_y(1, 10).unwrap();
        assert_eq!(yp.lo, -3);
        assert!(yp.eq_on_window(&ym.neg(), JET_EXACT));
        for p in 0..2 {
            let y = c.expand_y(p, 12).unwrap();
            let y2 = y.mul(&y).unwrap();
            let x = c.expand_x(p);
            let mut fx = LaurentBlock::zero(p, 1, 1, 0);
            let mut xp = LaurentBlock::monomial_q(p, 0, q(1, 1), 0);
            for cf in c.f() {
                fx = fx.add(&xp.scale_q(cf)).unwrap();
                xp = xp.mul(&x).unwrap();
            }
            assert!(y2.eq_on_window(&fx, JET_EXACT));
        }
    }

    #[test]
    fn d1_function_basis_pole_orders() {
        let c = d1();
        let basis = c.outer_function_basis(7);
        let poles: Vec<i64> = basis.iter().map(|b| b.pole_order_bound(&c)).collect();
        assert_eq!(poles, vec![0, 2, 4, 5, 6, 7]);
        assert_eq!(basis.len(), 6); // 7 - g + 1
    }

    #[test]
    fn d2_function_basis_counts() {
        let c = d2();
        for p in 2..8i64 {
            let n = c.outer_function_basis(p).len() as i64;
            assert_eq!(n, 2 * p - 1, "max pole {p}");
        }
    }

    #[test]
    fn d1_holomorphic_forms() {
        let c = d1();
        let basis = c.outer_form_basis(0);
        assert_eq!(basis.len(), 2); // genus many holomorphic differentials
        let poles: Vec<i64> = basis.iter().map(|b| b.pole_order_bound(&c)).collect();
        assert_eq!(poles, vec![-2, 0]);
    }

    #[test]
    fn riemann_roch_dimension() {
        let c1 = d1();
        for p in 3..12i64 {
            assert_eq!(c1.outer_function_basis(p).len() as i64, p - 2 + 1);
        }
        let c2 = d2();
        for p in 2..8i64 {
            assert_eq!(c2.outer_function_basis(p).len() as i64, 2 * p - 2 + 1);
        }
    }

    #[test]
    fn weierstrass_gaps_odd_model() {
        let c = d1();
        let realized: Vec<i64> = c
            .outer_function_basis(9)
            .iter()
            .map(|b| b.pole_order_bound(&c))
            .collect();
        for k in 0..=9i64 {
            let is_gap = k == 1 || k == 3;
            assert_eq!(realized.contains(&k), !is_gap, "pole order {k}");
        }
    }

    #[test]
    fn expansion_valuation_matches_pole_order() {
        let c = d1();
        for b in c.outer_function_basis(9) {
            let pole = b.pole_order_bound(&c);
            let exp = b.expansion(&c, 0, pole + 5).unwrap();
            assert_eq!(exp.lo, -pole);
            assert!(!exp.coeff(-pole).is_zero());
        }
        let c = d2();
        for b in c.outer_function_basis(6) {
            let pole = b.pole_order_bound(&c);
            for p in 0..2 {
                let exp = b.expansion(&c, p, pole + 5).unwrap();
                assert_eq!(exp.lo, -pole);
            }
        }
    }

    #[test]
    fn residue_theorem() {
        let c1 = d1();
        // d(x) is exact: residue 0
        assert!(c1.expand_dx(0).residue().unwrap().is_zero());
        // x^2 dx/y at the single puncture
        let form = OuterForm {
            func: OuterFunction::monomial(2, false),
        };
        assert!(c1.residue_theorem_check(&form, 6).unwrap().is_zero());
        // D2: x dx/y cancels across the two punctures
        let c2 = d2();
        let form = OuterForm {
            func: OuterFunction::monomial(1, false),
        };
        let r0 = form.expansion(&c2, 0, 4).unwrap().residue().unwrap();
        let r1 = form.expansion(&c2, 1, 4).unwrap().residue().unwrap();
        assert_eq!(r0.at(0, 0).at_base(), -r1.at(0, 0).at_base());
        assert!(c2.residue_theorem_check(&form, 6).unwrap().is_zero());
        let form = OuterForm {
            func: OuterFunction::monomial(3, false),
        };
        assert!(c2.residue_theorem_check(&form, 8).unwrap().is_zero());
    }

    #[test]
    fn outer_multiplication_reduces_y() {
        let c = d1();
        let y = OuterFunction::monomial(0, true);
        let yy = y.mul(&y, &c);
        // y·y = f(x)
        assert!(yy.q1.iter().all(|x| x.is_zero()));
        assert_eq!(yy.q0, c.f().to_vec());
        let e = yy.expansion(&c, 0, 5).unwrap();
        let ey = y.expansion(&c, 0, 10).unwrap();
        assert!(ey.mul(&ey).unwrap().eq_on_window(&e, JET_EXACT));
    }
}
