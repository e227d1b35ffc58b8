//! The exact scalar tower: rationals, nilpotent jets in the moduli
//! variables `u_1..u_m`, and truncated matrix Laurent series per puncture
//! with a certified coefficient window.
//!
//! A [`JetScalar`] is a polynomial in the `u` variables truncated at a
//! certified total degree. A [`LaurentBlock`] is a Laurent series in the
//! local coordinate of one puncture whose coefficients are matrices of jets;
//! its `cert` field records the highest degree that is guaranteed to agree
//! with the represented exact object (`None` means the block is an exact
//! Laurent polynomial). Window bookkeeping follows the usual convolution
//! calculus and is exercised by the precision-raising oracle tests.

use num::{BigInt, BigRational, One, Signed, Zero};
use serde::de::Error as DeError;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

/// Sentinel jet order for values that are exact polynomials in `u`.
pub const JET_EXACT: u32 = u32::MAX;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SeriesError {
    #[error("puncture mismatch: {0} vs {1}")]
    PunctureMismatch(usize, usize),
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimMismatch(usize, usize, usize, usize),
    #[error("leading coefficient is not a unit")]
    NotAUnit,
    #[error("leading coefficient has no rational square root or odd valuation")]
    NotASquare,
    #[error("window too small: need degree {need} certified, have {have:?}")]
    WindowTooSmall { need: i64, have: Option<i64> },
    #[error("bracket of two form-valued arguments")]
    BothForms,
    #[error("jet order too low: need {need}, have {have}")]
    JetOrderTooLow { need: u32, have: u32 },
}

pub(crate) fn q_to_str(q: &BigRational) -> String {
    format!("{}/{}", q.numer(), q.denom())
}

pub(crate) fn q_from_str(s: &str) -> Option<BigRational> {
    let (n, d) = match s.split_once('/') {
        Some((n, d)) => (n, d),
        None => (s, "1"),
    };
    let n: BigInt = n.parse().ok()?;
    let d: BigInt = d.parse().ok()?;
    if d.is_zero() {
        return None;
    }
    Some(BigRational::new(n, d))
}

/// Serde adapter: one rational as a "p/q" string.
pub mod qserde {
    use super::*;

    pub fn serialize<S: Serializer>(q: &BigRational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&q_to_str(q))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigRational, D::Error> {
        let s = String::deserialize(d)?;
        q_from_str(&s).ok_or_else(|| D::Error::custom("bad rational"))
    }
}

/// Serde adapter: a vector of rationals as "p/q" strings.
pub mod qvec_serde {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[BigRational], s: S) -> Result<S::Ok, S::Error> {
        let strs: Vec<String> = v.iter().map(q_to_str).collect();
        strs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<BigRational>, D::Error> {
        let strs: Vec<String> = Deserialize::deserialize(d)?;
        strs.iter()
            .map(|t| q_from_str(t).ok_or_else(|| D::Error::custom("bad rational")))
            .collect()
    }
}

/// Rational square root, if it exists.
pub fn q_sqrt(q: &BigRational) -> Option<BigRational> {
    if q.is_negative() {
        return None;
    }
    let n = q.numer().sqrt();
    let d = q.denom().sqrt();
    if &(&n * &n) == q.numer() && &(&d * &d) == q.denom() {
        Some(BigRational::new(n, d))
    } else {
        None
    }
}

fn trim_exp(mut e: Vec<u8>) -> Vec<u8> {
    while e.last() == Some(&0) {
        e.pop();
    }
    e
}

fn exp_degree(e: &[u8]) -> u32 {
    e.iter().map(|&x| x as u32).sum()
}

fn exp_add(a: &[u8], b: &[u8]) -> Vec<u8> {
    let n = a.len().max(b.len());
    let mut out = vec![0u8; n];
    for (i, o) in out.iter_mut().enumerate() {
        *o = a.get(i).copied().unwrap_or(0) + b.get(i).copied().unwrap_or(0);
    }
    out
}

/// Exact rational polynomial in the moduli variables, truncated at a
/// certified total degree.
#[derive(Clone, PartialEq, Eq)]
pub struct JetScalar {
    order: u32,
    terms: BTreeMap<Vec<u8>, BigRational>,
}

impl fmt::Debug for JetScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Jet[ord {}; ", self.order)?;
        for (e, q) in &self.terms {
            write!(f, "{:?}:{} ", e, q)?;
        }
        write!(f, "]")
    }
}

impl JetScalar {
    pub fn zero() -> Self {
        JetScalar {
            order: JET_EXACT,
            terms: BTreeMap::new(),
        }
    }

    pub fn one() -> Self {
        Self::from_q(BigRational::one())
    }

    pub fn from_q(q: BigRational) -> Self {
        let mut terms = BTreeMap::new();
        if !q.is_zero() {
            terms.insert(Vec::new(), q);
        }
        JetScalar {
            order: JET_EXACT,
            terms,
        }
    }

    pub fn from_i64(n: i64) -> Self {
        Self::from_q(BigRational::from_integer(BigInt::from(n)))
    }

    /// The variable `u_alpha` (0-based), certified at `order`.
    pub fn var(alpha: usize, order: u32) -> Self {
        let mut e = vec![0u8; alpha + 1];
        e[alpha] = 1;
        let mut terms = BTreeMap::new();
        if order >= 1 {
            terms.insert(e, BigRational::one());
        }
        JetScalar { order, terms }
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_constant(&self) -> bool {
        self.terms.keys().all(|e| e.is_empty())
    }

    /// Evaluation at `u = 0`; a ring morphism (the augmentation).
    pub fn at_base(&self) -> BigRational {
        self.terms.get(&Vec::new()).cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn coefficient(&self, exp: &[u8]) -> BigRational {
        let key = trim_exp(exp.to_vec());
        self.terms.get(&key).cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u8>, &BigRational)> {
        self.terms.iter()
    }

    fn normalized(order: u32, terms: BTreeMap<Vec<u8>, BigRational>) -> Self {
        let terms = terms
            .into_iter()
            .filter(|(e, q)| exp_degree(e) <= order && !q.is_zero())
            .collect();
        JetScalar { order, terms }
    }

    /// Drop the certification to `order`, truncating stored terms.
    pub fn reduce_order(&self, order: u32) -> Self {
        Self::normalized(order.min(self.order), self.terms.clone())
    }

    pub fn add(&self, other: &Self) -> Self {
        let order = self.order.min(other.order);
        let mut terms = self.terms.clone();
        for (e, q) in &other.terms {
            let entry = terms.entry(e.clone()).or_insert_with(BigRational::zero);
            *entry += q;
        }
        Self::normalized(order, terms)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        JetScalar {
            order: self.order,
            terms: self.terms.iter().map(|(e, q)| (e.clone(), -q.clone())).collect(),
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        let order = self.order.min(other.order);
        let mut terms: BTreeMap<Vec<u8>, BigRational> = BTreeMap::new();
        for (ea, qa) in &self.terms {
            for (eb, qb) in &other.terms {
                let e = exp_add(ea, eb);
                if exp_degree(&e) > order {
                    continue;
                }
                let entry = terms.entry(trim_exp(e)).or_insert_with(BigRational::zero);
                *entry += qa * qb;
            }
        }
        Self::normalized(order, terms)
    }

    pub fn mul_q(&self, q: &BigRational) -> Self {
        if q.is_zero() {
            return JetScalar {
                order: self.order,
                terms: BTreeMap::new(),
            };
        }
        JetScalar {
            order: self.order,
            terms: self.terms.iter().map(|(e, c)| (e.clone(), c * q)).collect(),
        }
    }

    /// Formal partial derivative in `u_alpha`. The certified order drops by
    /// one, except for exact polynomials.
    pub fn derive(&self, alpha: usize) -> Self {
        let order = if self.order == JET_EXACT {
            JET_EXACT
        } else {
            self.order.saturating_sub(1)
        };
        let mut terms = BTreeMap::new();
        for (e, q) in &self.terms {
            let k = e.get(alpha).copied().unwrap_or(0);
            if k == 0 {
                continue;
            }
            let mut e2 = e.clone();
            e2[alpha] = k - 1;
            terms.insert(trim_exp(e2), q * BigRational::from_integer(BigInt::from(k)));
        }
        Self::normalized(order, terms)
    }

    /// Multiplicative inverse. The constant term must be nonzero, and the
    /// value must carry a finite order unless it is a plain rational.
    pub fn invert(&self) -> Result<JetScalar, SeriesError> {
        let c = self.at_base();
        if c.is_zero() {
            return Err(SeriesError::NotAUnit);
        }
        let c_inv = Self::from_q(c.recip());
        let nilpotent = self.sub(&Self::from_q(c));
        if nilpotent.is_zero() {
            let mut out = c_inv;
            out.order = self.order;
            return Ok(out);
        }
        if self.order == JET_EXACT {
            return Err(SeriesError::NotAUnit);
        }
        // geometric series in the nilpotent part
        let e = nilpotent.mul(&c_inv);
        let mut acc = Self::one().reduce_order(self.order);
        let mut pow = Self::one().reduce_order(self.order);
        for j in 1..=self.order {
            pow = pow.mul(&e);
            if pow.is_zero() {
                break;
            }
            if j % 2 == 1 {
                acc = acc.sub(&pow);
            } else {
                acc = acc.add(&pow);
            }
        }
        Ok(acc.mul(&c_inv))
    }

    /// Exact equality of all coefficients up to total degree `ord`.
    pub fn eq_to_order(&self, other: &Self, ord: u32) -> bool {
        let mut keys: Vec<&Vec<u8>> = self.terms.keys().chain(other.terms.keys()).collect();
        keys.sort();
        keys.dedup();
        for e in keys {
            if exp_degree(e) > ord {
                continue;
            }
            if self.coefficient(e) != other.coefficient(e) {
                return false;
            }
        }
        true
    }
}

impl Serialize for JetScalar {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let order = if self.order == JET_EXACT {
            "exact".to_string()
        } else {
            self.order.to_string()
        };
        let terms: BTreeMap<String, String> = self
            .terms
            .iter()
            .map(|(e, q)| {
                let key = e.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(":");
                (key, q_to_str(q))
            })
            .collect();
        (order, terms).serialize(s)
    }
}

impl<'de> Deserialize<'de> for JetScalar {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let (order, terms): (String, BTreeMap<String, String>) = Deserialize::deserialize(d)?;
        let order = if order == "exact" {
            JET_EXACT
        } else {
            order.parse().map_err(|_| D::Error::custom("bad jet order"))?
        };
        let mut out = BTreeMap::new();
        for (k, v) in terms {
            let exp: Vec<u8> = if k.is_empty() {
                Vec::new()
            } else {
                k.split(':')
                    .map(|x| x.parse().map_err(|_| D::Error::custom("bad exponent")))
                    .collect::<Result<_, _>>()?
            };
            let q = q_from_str(&v).ok_or_else(|| D::Error::custom("bad rational"))?;
            out.insert(trim_exp(exp), q);
        }
        Ok(JetScalar::normalized(order, out))
    }
}

/// Dense matrix of jet scalars.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JetMatrix {
    pub rows: usize,
    pub cols: usize,
    data: Vec<JetScalar>,
}

impl fmt::Debug for JetMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "JetMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            write!(f, "  ")?;
            for c in 0..self.cols {
                write!(f, "{:?} ", self.at(r, c))?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl JetMatrix {
    pub fn zero(rows: usize, cols: usize) -> Self {
        JetMatrix {
            rows,
            cols,
            data: vec![JetScalar::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zero(n, n);
        for i in 0..n {
            *m.at_mut(i, i) = JetScalar::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> JetScalar) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        JetMatrix { rows, cols, data }
    }

    pub fn from_q_entries(rows: usize, cols: usize, entries: &[BigRational]) -> Self {
        assert_eq!(entries.len(), rows * cols);
        JetMatrix {
            rows,
            cols,
            data: entries.iter().cloned().map(JetScalar::from_q).collect(),
        }
    }

    pub fn at(&self, r: usize, c: usize) -> &JetScalar {
        &self.data[r * self.cols + c]
    }

    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut JetScalar {
        &mut self.data[r * self.cols + c]
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|x| x.is_zero())
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        JetMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a.add(b))
                .collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        JetMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|a| a.neg()).collect(),
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows);
        let mut out = Self::zero(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.at(r, k);
                if a.is_zero() {
                    continue;
                }
                for c in 0..other.cols {
                    let b = other.at(k, c);
                    if b.is_zero() {
                        continue;
                    }
                    let v = out.at(r, c).add(&a.mul(b));
                    *out.at_mut(r, c) = v;
                }
            }
        }
        out
    }

    pub fn scale(&self, s: &JetScalar) -> Self {
        JetMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|a| a.mul(s)).collect(),
        }
    }

    pub fn scale_q(&self, q: &BigRational) -> Self {
        JetMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|a| a.mul_q(q)).collect(),
        }
    }

    pub fn trace(&self) -> JetScalar {
        assert_eq!(self.rows, self.cols);
        let mut t = JetScalar::zero();
        for i in 0..self.rows {
            t = t.add(self.at(i, i));
        }
        t
    }

    /// tr(self · other) without forming the product.
    pub fn trace_product(&self, other: &Self) -> JetScalar {
        assert_eq!(self.cols, other.rows);
        assert_eq!(other.cols, self.rows);
        let mut t = JetScalar::zero();
        for r in 0..self.rows {
            for c in 0..self.cols {
                let a = self.at(r, c);
                let b = other.at(c, r);
                if a.is_zero() || b.is_zero() {
                    continue;
                }
                t = t.add(&a.mul(b));
            }
        }
        t
    }

    pub fn commutator(&self, other: &Self) -> Self {
        self.mul(other).sub(&other.mul(self))
    }

    pub fn derive(&self, alpha: usize) -> Self {
        JetMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|a| a.derive(alpha)).collect(),
        }
    }

    pub fn min_order(&self) -> u32 {
        self.data.iter().map(|a| a.order()).min().unwrap_or(JET_EXACT)
    }

    pub fn eq_to_order(&self, other: &Self, ord: u32) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.eq_to_order(b, ord))
    }
}

fn cert_min(a: Option<i64>, b: Option<i64>) -> Option<i64> {
    match (a, b) {
        (None, x) => x,
        (x, None) => x,
        (Some(x), Some(y)) => Some(x.min(y)),
    }
}

fn cert_add(c: Option<i64>, k: i64) -> Option<i64> {
    c.map(|x| x + k)
}

/// Truncated matrix Laurent series at one puncture with a certified window.
///
/// Degrees below `lo` are provably absent; stored degrees never exceed
/// `cert`. A missing degree inside the window is an exact zero.
#[derive(Clone, PartialEq, Debug)]
pub struct LaurentBlock {
    pub puncture: usize,
    pub rows: usize,
    pub cols: usize,
    pub form_weight: i64,
    pub lo: i64,
    pub cert: Option<i64>,
    coeffs: BTreeMap<i64, JetMatrix>,
}

impl LaurentBlock {
    pub fn zero(puncture: usize, rows: usize, cols: usize, form_weight: i64) -> Self {
        LaurentBlock {
            puncture,
            rows,
            cols,
            form_weight,
            lo: 0,
            cert: None,
            coeffs: BTreeMap::new(),
        }
    }

    pub fn from_coeffs(
        puncture: usize,
        form_weight: i64,
        lo: i64,
        cert: Option<i64>,
        rows: usize,
        cols: usize,
        coeffs: BTreeMap<i64, JetMatrix>,
    ) -> Self {
        let mut out = LaurentBlock {
            puncture,
            rows,
            cols,
            form_weight,
            lo,
            cert,
            coeffs: BTreeMap::new(),
        };
        for (d, m) in coeffs {
            assert!(d >= lo, "stored degree below valuation bound");
            assert_eq!((m.rows, m.cols), (rows, cols));
            if cert.map(|c| d <= c).unwrap_or(true) && !m.is_zero() {
                out.coeffs.insert(d, m);
            }
        }
        out.tighten();
        out
    }

    /// Scalar (1x1) monomial `q · z^deg`.
    pub fn monomial_q(puncture: usize, deg: i64, q: BigRational, form_weight: i64) -> Self {
        let mut coeffs = BTreeMap::new();
        coeffs.insert(deg, JetMatrix::from_q_entries(1, 1, &[q]));
        Self::from_coeffs(puncture, form_weight, deg, None, 1, 1, coeffs)
    }

    /// Matrix monomial `M · z^deg`.
    pub fn monomial(puncture: usize, deg: i64, m: JetMatrix, form_weight: i64) -> Self {
        let rows = m.rows;
        let cols = m.cols;
        let mut coeffs = BTreeMap::new();
        coeffs.insert(deg, m);
        Self::from_coeffs(puncture, form_weight, deg, None, rows, cols, coeffs)
    }

    fn tighten(&mut self) {
        // lo may exceed cert for an empty block: the whole window is then a
        // certified zero and the valuation bound keeps its extra knowledge.
        if let Some(&d) = self.coeffs.keys().next() {
            if d > self.lo {
                self.lo = d;
            }
        } else if let Some(c) = self.cert {
            self.lo = self.lo.max(c + 1);
        }
    }

    pub fn coeffs(&self) -> &BTreeMap<i64, JetMatrix> {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// True if the window certifies no coefficient at all.
    pub fn window_empty(&self) -> bool {
        self.cert.map(|c| c < self.lo).unwrap_or(false)
    }

    pub fn coeff(&self, deg: i64) -> JetMatrix {
        self.coeffs
            .get(&deg)
            .cloned()
            .unwrap_or_else(|| JetMatrix::zero(self.rows, self.cols))
    }

    /// Coefficient access that fails when `deg` is outside the certified window.
    pub fn coeff_certified(&self, deg: i64) -> Result<JetMatrix, SeriesError> {
        if let Some(c) = self.cert {
            if deg > c {
                return Err(SeriesError::WindowTooSmall {
                    need: deg,
                    have: self.cert,
                });
            }
        }
        Ok(self.coeff(deg))
    }

    pub fn add(&self, other: &Self) -> Result<Self, SeriesError> {
        if self.puncture != other.puncture {
            return Err(SeriesError::PunctureMismatch(self.puncture, other.puncture));
        }
        if (self.rows, self.cols) != (other.rows, other.cols) {
            return Err(SeriesError::DimMismatch(
                self.rows, self.cols, other.rows, other.cols,
            ));
        }
        debug_assert_eq!(self.form_weight, other.form_weight);
        let mut coeffs = self.coeffs.clone();
        for (d, m) in &other.coeffs {
            let entry = coeffs
                .entry(*d)
                .or_insert_with(|| JetMatrix::zero(self.rows, self.cols));
            *entry = entry.add(m);
        }
        Ok(Self::from_coeffs(
            self.puncture,
            self.form_weight,
            self.lo.min(other.lo),
            cert_min(self.cert, other.cert),
            self.rows,
            self.cols,
            coeffs,
        ))
    }

    pub fn sub(&self, other: &Self) -> Result<Self, SeriesError> {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        LaurentBlock {
            coeffs: self.coeffs.iter().map(|(d, m)| (*d, m.neg())).collect(),
            ..self.clone()
        }
    }

    /// Series product with the window calculus
    /// `lo = lo_a + lo_b`, `cert = min(cert_a + lo_b, cert_b + lo_a)`.
    /// A 1x1 factor acts as a scalar on the other side.
    pub fn mul(&self, other: &Self) -> Result<Self, SeriesError> {
        if self.puncture != other.puncture {
            return Err(SeriesError::PunctureMismatch(self.puncture, other.puncture));
        }
        let scalar_left = self.rows == 1 && self.cols == 1;
        let scalar_right = other.rows == 1 && other.cols == 1;
        if !scalar_left && !scalar_right && self.cols != other.rows {
            return Err(SeriesError::DimMismatch(
                self.rows, self.cols, other.rows, other.cols,
            ));
        }
        let (rows, cols) = if scalar_left && !scalar_right {
            (other.rows, other.cols)
        } else if scalar_right && !scalar_left {
            (self.rows, self.cols)
        } else {
            (self.rows, other.cols)
        };
        let lo = self.lo + other.lo;
        let cert = cert_min(cert_add(self.cert, other.lo), cert_add(other.cert, self.lo));
        let mut coeffs: BTreeMap<i64, JetMatrix> = BTreeMap::new();
        for (da, ma) in &self.coeffs {
            for (db, mb) in &other.coeffs {
                let d = da + db;
                if cert.map(|c| d > c).unwrap_or(false) {
                    continue;
                }
                let prod = if scalar_left && !scalar_right {
                    mb.scale(ma.at(0, 0))
                } else if scalar_right && !scalar_left {
                    ma.scale(mb.at(0, 0))
                } else {
                    ma.mul(mb)
                };
                let entry = coeffs.entry(d).or_insert_with(|| JetMatrix::zero(rows, cols));
                *entry = entry.add(&prod);
            }
        }
        Ok(Self::from_coeffs(
            self.puncture,
            self.form_weight + other.form_weight,
            lo,
            cert,
            rows,
            cols,
            coeffs,
        ))
    }

    pub fn commutator(&self, other: &Self) -> Result<Self, SeriesError> {
        let ab = self.mul(other)?;
        let ba = other.mul(self)?;
        ab.sub(&ba)
    }

    pub fn scale_jet(&self, s: &JetScalar) -> Self {
        LaurentBlock {
            coeffs: self.coeffs.iter().map(|(d, m)| (*d, m.scale(s))).collect(),
            ..self.clone()
        }
    }

    pub fn scale_q(&self, q: &BigRational) -> Self {
        LaurentBlock {
            coeffs: self
                .coeffs
                .iter()
                .map(|(d, m)| (*d, m.scale_q(q)))
                .collect(),
            ..self.clone()
        }
    }

    /// Multiply by `z^k`.
    pub fn shift_z(&self, k: i64) -> Self {
        LaurentBlock {
            lo: self.lo + k,
            cert: cert_add(self.cert, k),
            coeffs: self.coeffs.iter().map(|(d, m)| (d + k, m.clone())).collect(),
            ..self.clone()
        }
    }

    /// Jet derivative in `u_alpha`, coefficientwise.
    pub fn derive_u(&self, alpha: usize) -> Self {
        let coeffs: BTreeMap<i64, JetMatrix> = self
            .coeffs
            .iter()
            .map(|(d, m)| (*d, m.derive(alpha)))
            .filter(|(_, m)| !m.is_zero())
            .collect();
        let mut out = LaurentBlock {
            coeffs,
            ..self.clone()
        };
        out.tighten();
        out
    }

    /// d/dz; raises the form weight by one.
    pub fn dz(&self) -> Self {
        let coeffs: BTreeMap<i64, JetMatrix> = self
            .coeffs
            .iter()
            .filter(|(d, _)| **d != 0)
            .map(|(d, m)| (d - 1, m.scale_q(&BigRational::from_integer(BigInt::from(*d)))))
            .collect();
        Self::from_coeffs(
            self.puncture,
            self.form_weight + 1,
            self.lo - 1,
            cert_add(self.cert, -1),
            self.rows,
            self.cols,
            coeffs,
        )
    }

    /// Coefficient of degree -1. Requires form weight 1 and the window to
    /// certify degree -1.
    pub fn residue(&self) -> Result<JetMatrix, SeriesError> {
        debug_assert_eq!(self.form_weight, 1);
        if let Some(c) = self.cert {
            if c < -1 {
                return Err(SeriesError::WindowTooSmall { need: -1, have: self.cert });
            }
        }
        Ok(self.coeff(-1))
    }

    pub fn truncate(&self, new_cert: i64) -> Self {
        let cert = cert_min(self.cert, Some(new_cert));
        let coeffs = self
            .coeffs
            .iter()
            .filter(|(d, _)| **d <= new_cert)
            .map(|(d, m)| (*d, m.clone()))
            .collect();
        let mut out = LaurentBlock {
            cert,
            coeffs,
            ..self.clone()
        };
        out.tighten();
        out
    }

    /// Inverse of a scalar (1x1) series. The coefficient at `lo` must be a
    /// unit in the jet ring; the result is certified to `cert - 2·lo`.
    pub fn invert(&self) -> Result<Self, SeriesError> {
        if self.rows != 1 || self.cols != 1 {
            return Err(SeriesError::DimMismatch(self.rows, self.cols, 1, 1));
        }
        let v = self.lo;
        let lead = self.coeff(v);
        let lead_inv = lead.at(0, 0).invert()?;
        // u = 1 + e with val(e) >= 1
        let unit = self.shift_z(-v).scale_jet(&lead_inv);
        let rel = match unit.cert {
            None => unit
                .coeffs
                .keys()
                .next_back()
                .copied()
                .unwrap_or(0),
            Some(c) => c,
        };
        let e = unit.sub(&LaurentBlock::monomial_q(
            self.puncture,
            0,
            BigRational::one(),
            0,
        ))?;
        if e.lo < 1 && !e.is_zero() {
            return Err(SeriesError::NotAUnit);
        }
        let mut acc = LaurentBlock::monomial_q(self.puncture, 0, BigRational::one(), 0);
        let mut pow = acc.clone();
        let mut j = 1i64;
        while j <= rel.max(0) {
            pow = pow.mul(&e)?.truncate(rel);
            if pow.is_zero() {
                break;
            }
            acc = if j % 2 == 1 { acc.sub(&pow)? } else { acc.add(&pow)? };
            j += 1;
        }
        let mut out = acc
            .truncate(rel)
            .shift_z(-v)
            .scale_jet(&lead_inv);
        out.cert = cert_add(self.cert, -2 * v);
        out.form_weight = -self.form_weight;
        out.lo = -v;
        Ok(out)
    }

    /// Square root of a scalar (1x1) series of even valuation whose leading
    /// coefficient has a rational square root. Newton iteration, saturating
    /// the certified window; the result squared reproduces the input there.
    pub fn sqrt(&self) -> Result<Self, SeriesError> {
        if self.rows != 1 || self.cols != 1 {
            return Err(SeriesError::DimMismatch(self.rows, self.cols, 1, 1));
        }
        if self.is_zero() {
            return Ok(self.clone());
        }
        let v = self.lo;
        if v % 2 != 0 {
            return Err(SeriesError::NotASquare);
        }
        let w = v / 2;
        let lead = self.coeff(v).at(0, 0).clone();
        let c0 = q_sqrt(&lead.at_base()).ok_or(SeriesError::NotASquare)?;
        if c0.is_zero() {
            return Err(SeriesError::NotASquare);
        }
        let b = self.shift_z(-v); // val 0, constant term a unit
        let rel = match b.cert {
            None => b.coeffs.keys().next_back().copied().unwrap_or(0),
            Some(c) => c,
        };
        let order = b
            .coeffs
            .values()
            .map(|m| m.min_order())
            .min()
            .unwrap_or(JET_EXACT);
        let half = BigRational::new(BigInt::from(1), BigInt::from(2));
        let mut x = LaurentBlock::monomial_q(self.puncture, 0, c0, 0);
        let max_iter = 3 + (64 - (rel.max(1) as u64).leading_zeros()) as usize
            + if order == JET_EXACT { 2 } else { order as usize + 2 };
        for _ in 0..max_iter {
            let x_inv = x.invert()?;
            let next = x.add(&b.mul(&x_inv)?)?.scale_q(&half).truncate(rel);
            if next == x {
                break;
            }
            x = next;
        }
        // verify on the window
        let sq = x.mul(&x)?.truncate(rel);
        let diff = sq.sub(&b.truncate(rel))?;
        if !diff.is_zero() {
            return Err(SeriesError::NotASquare);
        }
        let mut out = x.shift_z(w);
        out.cert = cert_add(self.cert, -w);
        out.form_weight = self.form_weight;
        Ok(out)
    }

    /// Smallest certified jet order among stored coefficients.
    pub fn min_jet_order(&self) -> u32 {
        self.coeffs
            .values()
            .map(|m| m.min_order())
            .min()
            .unwrap_or(JET_EXACT)
    }

    /// Equality of all coefficients on the common certified window, through
    /// jet order `ord`.
    pub fn eq_on_window(&self, other: &Self, ord: u32) -> bool {
        let cert = cert_min(self.cert, other.cert);
        let degrees: Vec<i64> = self
            .coeffs
            .keys()
            .chain(other.coeffs.keys())
            .copied()
            .filter(|d| cert.map(|c| *d <= c).unwrap_or(true))
            .collect();
        degrees
            .iter()
            .all(|d| self.coeff(*d).eq_to_order(&other.coeff(*d), ord))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn jet_derive_monomial_rule() {
        // u1*u2 -> d/du1 = u2
        let u1 = JetScalar::var(0, 2);
        let u2 = JetScalar::var(1, 2);
        let p = u1.mul(&u2);
        let d = p.derive(0);
        assert!(d.eq_to_order(&u2.reduce_order(1), 1));
        // constants
        assert!(JetScalar::one().derive(0).is_zero());
    }

    #[test]
    fn jet_derive_difference_quotient() {
        // 3/2 u1^2 at jet order 2 -> 3 u1; oracle: difference quotient of the
        // plain polynomial at rational points.
        let u1 = JetScalar::var(0, 2);
        let p = u1.mul(&u1).mul_q(&q(3, 2));
        let d = p.derive(0);
        let expected = u1.mul_q(&q(3, 1)).reduce_order(1);
        assert!(d.eq_to_order(&expected, 1));
        // oracle at u1 = a: p(a+h) - p(a) / h = 3/2 (2a + h)
        let a = q(5, 7);
        let h = q(1, 11);
        let poly = |x: &BigRational| q(3, 2) * x * x;
        let quot = (poly(&(&a + &h)) - poly(&a)) / &h;
        let exact_deriv = q(3, 1) * &a;
        assert_eq!(quot, &exact_deriv + q(3, 2) * &h);
    }

    #[test]
    fn jet_invert_roundtrip() {
        let u1 = JetScalar::var(0, 3);
        let a = JetScalar::from_q(q(2, 3)).add(&u1.mul_q(&q(7, 1)));
        let inv = a.invert().unwrap();
        assert!(a.mul(&inv).eq_to_order(&JetScalar::one(), 3));
        assert!(JetScalar::zero().invert().is_err());
    }

    #[test]
    fn laurent_mul_window_calculus() {
        // a certified to 5 with lo 0, b certified to 3 with lo -2 -> cert 3
        let mut ca = BTreeMap::new();
        ca.insert(0, JetMatrix::identity(1));
        let a = LaurentBlock::from_coeffs(0, 0, 0, Some(5), 1, 1, ca);
        let mut cb = BTreeMap::new();
        cb.insert(-2, JetMatrix::identity(1));
        let b = LaurentBlock::from_coeffs(0, 0, -2, Some(3), 1, 1, cb);
        let p = a.mul(&b).unwrap();
        assert_eq!(p.cert, Some(3));
        assert_eq!(p.lo, -2);
    }

    #[test]
    fn laurent_mul_monomials() {
        let a = LaurentBlock::monomial_q(0, -1, q(1, 1), 0);
        let b = LaurentBlock::monomial_q(0, 1, q(1, 1), 0);
        let p = a.mul(&b).unwrap();
        assert_eq!(p.lo, 0);
        assert_eq!(p.coeff(0).at(0, 0), &JetScalar::one());
    }

    #[test]
    fn mismatch_is_rejected() {
        let a = LaurentBlock::monomial_q(0, 0, q(1, 1), 0);
        let b = LaurentBlock::monomial_q(1, 0, q(1, 1), 0);
        assert!(matches!(
            a.mul(&b),
            Err(SeriesError::PunctureMismatch(0, 1))
        ));
    }

    #[test]
    fn invert_geometric_series() {
        // (1 - z)^{-1} = 1 + z + z^2 + ...
        let one = LaurentBlock::monomial_q(0, 0, q(1, 1), 0);
        let z = LaurentBlock::monomial_q(0, 1, q(1, 1), 0);
        let a = one.sub(&z).unwrap().truncate(6);
        let inv = a.invert().unwrap();
        assert_eq!(inv.cert, Some(6));
        for k in 0..=6 {
            assert_eq!(inv.coeff(k).at(0, 0), &JetScalar::one(), "degree {k}");
        }
    }

    #[test]
    fn sqrt_of_one_minus_z10() {
        // sqrt(1 - z^10) = 1 - z^10/2 - z^20/8 - ...; oracle: square it back.
        let one = LaurentBlock::monomial_q(0, 0, q(1, 1), 0);
        let z10 = LaurentBlock::monomial_q(0, 10, q(1, 1), 0);
        let a = one.sub(&z10).unwrap().truncate(25);
        let s = a.sqrt().unwrap();
        assert_eq!(s.coeff(10).at(0, 0), &JetScalar::from_q(q(-1, 2)));
        assert_eq!(s.coeff(20).at(0, 0), &JetScalar::from_q(q(-1, 8)));
        let sq = s.mul(&s).unwrap();
        assert!(sq.eq_on_window(&a, JET_EXACT));
        assert_eq!(
            LaurentBlock::monomial_q(0, 0, q(1, 1), 0)
                .sqrt()
                .unwrap()
                .coeff(0)
                .at(0, 0),
            &JetScalar::one()
        );
    }

    #[test]
    fn sqrt_rejects_nonsquares() {
        let two = LaurentBlock::monomial_q(0, 0, q(2, 1), 0);
        assert!(matches!(two.sqrt(), Err(SeriesError::NotASquare)));
        let z = LaurentBlock::monomial_q(0, 1, q(1, 1), 0);
        assert!(matches!(z.sqrt(), Err(SeriesError::NotASquare)));
    }

    #[test]
    fn residue_basics() {
        let a = LaurentBlock::monomial_q(0, -1, q(1, 1), 1);
        assert_eq!(a.residue().unwrap().at(0, 0), &JetScalar::one());
        let b = LaurentBlock::monomial_q(0, 0, q(1, 1), 1);
        assert!(b.residue().unwrap().is_zero());
        // window too small
        let c = LaurentBlock::from_coeffs(0, 1, -3, Some(-2), 1, 1, BTreeMap::new());
        assert!(matches!(
            c.residue(),
            Err(SeriesError::WindowTooSmall { .. })
        ));
    }

    #[test]
    fn residue_of_derivative_vanishes() {
        let mut cs = BTreeMap::new();
        cs.insert(-3, JetMatrix::from_q_entries(1, 1, &[q(5, 2)]));
        cs.insert(0, JetMatrix::from_q_entries(1, 1, &[q(1, 3)]));
        cs.insert(4, JetMatrix::from_q_entries(1, 1, &[q(-7, 1)]));
        let g = LaurentBlock::from_coeffs(0, 0, -3, Some(8), 1, 1, cs);
        assert!(g.dz().residue().unwrap().is_zero());
    }

    #[test]
    fn leibniz_rule() {
        let u1 = JetScalar::var(0, 2);
        let a = LaurentBlock::monomial_q(0, -1, q(2, 1), 0).scale_jet(&u1);
        let b = LaurentBlock::monomial_q(0, 2, q(3, 1), 0)
            .scale_jet(&u1.add(&JetScalar::one()));
        let lhs = a.mul(&b).unwrap().derive_u(0);
        let rhs = a
            .derive_u(0)
            .mul(&b)
            .unwrap()
            .add(&a.mul(&b.derive_u(0)).unwrap())
            .unwrap();
        assert!(lhs.eq_on_window(&rhs, 1));
    }

    #[test]
    fn serde_jet_roundtrip() {
        let u1 = JetScalar::var(0, 2);
        let u2 = JetScalar::var(1, 2);
        let a = u1.mul(&u2).mul_q(&q(-3, 7)).add(&JetScalar::from_q(q(22, 5)));
        let s = serde_json::to_string(&a).unwrap();
        let b: JetScalar = serde_json::from_str(&s).unwrap();
        assert_eq!(a, b);
    }
}
