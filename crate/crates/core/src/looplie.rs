//! The Lie-theoretic layer: `sl_n` structure data over the rationals, loop
//! and form elements valued in the Lie algebra, the residue pairing `B`,
//! adjoint conjugation, and brackets.
//!
//! The invariant form is the trace form of the defining representation.
//! Instead of an orthonormal basis (which would need irrational entries
//! already for `sl_2`) we carry the basis `{I_a}` together with its
//! κ-dual `{I^a}`; the Casimir is `γ = Σ_a I_a ⊗ I^a` and every identity
//! downstream is basis independent.

use crate::jetring::{JetMatrix, JetScalar, LaurentBlock, SeriesError};
use crate::linalg::invert_q;
use num::{BigInt, BigRational, One, Zero};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LoopError {
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error("bracket of two form-valued elements")]
    BothForms,
    #[error("element is not nilpotent within {0} powers")]
    NotNilpotent(usize),
    #[error("puncture count mismatch: {0} vs {1}")]
    PunctureCount(usize, usize),
}

fn q(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Structure data for `sl_n`: basis, κ-dual basis, Casimir coordinates, and
/// structure constants.
#[derive(Debug, Clone)]
pub struct LieData {
    pub n: usize,
    pub d: usize,
    basis: Vec<JetMatrix>,
    dual: Vec<JetMatrix>,
    gamma: Vec<Vec<BigRational>>,
    structure: Vec<Vec<Vec<(usize, BigRational)>>>,
}

impl LieData {
    pub fn new(n: usize) -> Self {
        assert!(n >= 2);
        let d = n * n - 1;
        let mut basis = Vec::with_capacity(d);
        // off-diagonal E_ij, row-major, then h_k = E_kk - E_{k+1,k+1}
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let mut m = JetMatrix::zero(n, n);
                    *m.at_mut(i, j) = JetScalar::one();
                    basis.push(m);
                }
            }
        }
        for k in 0..n - 1 {
            let mut m = JetMatrix::zero(n, n);
            *m.at_mut(k, k) = JetScalar::one();
            *m.at_mut(k + 1, k + 1) = JetScalar::from_q(q(-1, 1));
            basis.push(m);
        }
        // Gram matrix of the trace form and its inverse
        let gram: Vec<Vec<BigRational>> = (0..d)
            .map(|a| {
                (0..d)
                    .map(|b| basis[a].trace_product(&basis[b]).at_base())
                    .collect()
            })
            .collect();
        let gram_inv = invert_q(&gram).expect("trace form is nondegenerate on sl_n");
        let dual: Vec<JetMatrix> = (0..d)
            .map(|a| {
                let mut m = JetMatrix::zero(n, n);
                for b in 0..d {
                    m = m.add(&basis[b].scale_q(&gram_inv[a][b]));
                }
                m
            })
            .collect();
        // [I_a, I_b] expanded in the basis
        let mut structure = vec![vec![Vec::new(); d]; d];
        for a in 0..d {
            for b in 0..d {
                let comm = basis[a].commutator(&basis[b]);
                let mut entry = Vec::new();
                for c in 0..d {
                    let coef = comm.trace_product(&dual[c]).at_base();
                    if !coef.is_zero() {
                        entry.push((c, coef));
                    }
                }
                structure[a][b] = entry;
            }
        }
        LieData {
            n,
            d,
            basis,
            dual,
            gamma: gram_inv,
            structure,
        }
    }

    pub fn basis(&self, a: usize) -> &JetMatrix {
        &self.basis[a]
    }

    pub fn dual(&self, a: usize) -> &JetMatrix {
        &self.dual[a]
    }

    /// Casimir coordinates: `γ = Σ_{a,b} γ[a][b] I_a ⊗ I_b`.
    pub fn gamma(&self) -> &Vec<Vec<BigRational>> {
        &self.gamma
    }

    /// `[I_a, I_b]` as sparse basis coordinates.
    pub fn bracket_structure(&self, a: usize, b: usize) -> &[(usize, BigRational)] {
        &self.structure[a][b]
    }

    /// κ(X, Y) = tr(XY).
    pub fn kappa(&self, x: &JetMatrix, y: &JetMatrix) -> JetScalar {
        x.trace_product(y)
    }

    /// Coordinates of a (traceless) matrix against `{I_a}`: `X^{(a)} = κ(X, I^a)`.
    pub fn coords(&self, x: &JetMatrix) -> Vec<JetScalar> {
        (0..self.d).map(|a| x.trace_product(&self.dual[a])).collect()
    }

    pub fn from_coords(&self, coords: &[JetScalar]) -> JetMatrix {
        let mut m = JetMatrix::zero(self.n, self.n);
        for (a, c) in coords.iter().enumerate() {
            if !c.is_zero() {
                m = m.add(&self.basis[a].scale(c));
            }
        }
        m
    }
}

fn check_punctures(a: &[LaurentBlock], b: &[LaurentBlock]) -> Result<(), LoopError> {
    if a.len() != b.len() {
        return Err(LoopError::PunctureCount(a.len(), b.len()));
    }
    Ok(())
}

fn zip_blocks(
    a: &[LaurentBlock],
    b: &[LaurentBlock],
    f: impl Fn(&LaurentBlock, &LaurentBlock) -> Result<LaurentBlock, SeriesError>,
) -> Result<Vec<LaurentBlock>, LoopError> {
    check_punctures(a, b)?;
    a.iter()
        .zip(b)
        .map(|(x, y)| f(x, y).map_err(LoopError::from))
        .collect()
}

macro_rules! elementwise {
    ($name:ident) => {
        /// Per-puncture Lie-algebra-valued Laurent data.
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name {
            pub blocks: Vec<LaurentBlock>,
        }

        impl $name {
            pub fn from_blocks(blocks: Vec<LaurentBlock>) -> Self {
                $name { blocks }
            }

            pub fn zero(ell: usize, n: usize, form_weight: i64) -> Self {
                $name {
                    blocks: (0..ell)
                        .map(|p| LaurentBlock::zero(p, n, n, form_weight))
                        .collect(),
                }
            }

            pub fn ell(&self) -> usize {
                self.blocks.len()
            }

            pub fn add(&self, other: &Self) -> Result<Self, LoopError> {
                Ok($name {
                    blocks: zip_blocks(&self.blocks, &other.blocks, |a, b| a.add(b))?,
                })
            }

            pub fn sub(&self, other: &Self) -> Result<Self, LoopError> {
                Ok($name {
                    blocks: zip_blocks(&self.blocks, &other.blocks, |a, b| a.sub(b))?,
                })
            }

            pub fn neg(&self) -> Self {
                $name {
                    blocks: self.blocks.iter().map(|b| b.neg()).collect(),
                }
            }

            pub fn scale_jet(&self, s: &JetScalar) -> Self {
                $name {
                    blocks: self.blocks.iter().map(|b| b.scale_jet(s)).collect(),
                }
            }

            pub fn scale_q(&self, s: &BigRational) -> Self {
                $name {
                    blocks: self.blocks.iter().map(|b| b.scale_q(s)).collect(),
                }
            }

            pub fn derive_u(&self, alpha: usize) -> Self {
                $name {
                    blocks: self.blocks.iter().map(|b| b.derive_u(alpha)).collect(),
                }
            }

            pub fn truncate(&self, cert: i64) -> Self {
                $name {
                    blocks: self.blocks.iter().map(|b| b.truncate(cert)).collect(),
                }
            }

            pub fn is_zero(&self) -> bool {
                self.blocks.iter().all(|b| b.is_zero())
            }

            pub fn eq_on_window(&self, other: &Self, ord: u32) -> bool {
                self.blocks.len() == other.blocks.len()
                    && self
                        .blocks
                        .iter()
                        .zip(&other.blocks)
                        .all(|(a, b)| a.eq_on_window(b, ord))
            }

            pub fn min_jet_order(&self) -> u32 {
                self.blocks
                    .iter()
                    .map(|b| b.min_jet_order())
                    .min()
                    .unwrap_or(crate::jetring::JET_EXACT)
            }

            pub fn is_traceless(&self) -> bool {
                self.blocks
                    .iter()
                    .all(|b| b.coeffs().values().all(|m| m.trace().is_zero()))
            }
        }
    };
}

elementwise!(LoopElement);
elementwise!(FormElement);

impl LoopElement {
    /// `I_a z_i^k` supported at one puncture.
    pub fn basis_mode(lie: &LieData, ell: usize, punct: usize, a: usize, k: i64) -> Self {
        let mut blocks: Vec<LaurentBlock> = (0..ell)
            .map(|p| LaurentBlock::zero(p, lie.n, lie.n, 0))
            .collect();
        blocks[punct] = LaurentBlock::monomial(punct, k, lie.basis(a).clone(), 0);
        LoopElement { blocks }
    }

    /// Pointwise commutator of loop elements.
    pub fn bracket(&self, other: &Self) -> Result<Self, LoopError> {
        Ok(LoopElement {
            blocks: zip_blocks(&self.blocks, &other.blocks, |a, b| a.commutator(b))?,
        })
    }

    /// Commutator against a form-valued element, producing a form.
    pub fn bracket_form(&self, other: &FormElement) -> Result<FormElement, LoopError> {
        Ok(FormElement {
            blocks: zip_blocks(&self.blocks, &other.blocks, |a, b| a.commutator(b))?,
        })
    }
}

impl FormElement {
    /// `I_a z_i^k dz_i` supported at one puncture.
    pub fn basis_mode(lie: &LieData, ell: usize, punct: usize, a: usize, k: i64) -> Self {
        let mut blocks: Vec<LaurentBlock> = (0..ell)
            .map(|p| LaurentBlock::zero(p, lie.n, lie.n, 1))
            .collect();
        blocks[punct] = LaurentBlock::monomial(punct, k, lie.basis(a).clone(), 1);
        FormElement { blocks }
    }
}

/// The residue pairing `B(a, ω) = Σ_i res κ(a, ω)` over all punctures.
pub fn pair_b(a: &LoopElement, w: &FormElement) -> Result<JetScalar, LoopError> {
    check_punctures(&a.blocks, &w.blocks)?;
    let mut total = JetScalar::zero();
    for (x, y) in a.blocks.iter().zip(&w.blocks) {
        let prod = x.mul(y)?;
        let r = prod.residue()?;
        total = total.add(&r.trace());
    }
    Ok(total)
}

/// A group-valued loop with a cached exact inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupElement {
    pub blocks: Vec<LaurentBlock>,
    pub inv_blocks: Vec<LaurentBlock>,
}

impl GroupElement {
    pub fn identity(ell: usize, n: usize) -> Self {
        let blocks: Vec<LaurentBlock> = (0..ell)
            .map(|p| LaurentBlock::monomial(p, 0, JetMatrix::identity(n), 0))
            .collect();
        GroupElement {
            inv_blocks: blocks.clone(),
            blocks,
        }
    }

    pub fn ell(&self) -> usize {
        self.blocks.len()
    }

    /// Unipotent elementary factor `1 + c z^k E_{rc}` at one puncture,
    /// identity at the others; the inverse is `1 - c z^k E_{rc}`.
    pub fn elementary(
        ell: usize,
        n: usize,
        punct: usize,
        c: &BigRational,
        k: i64,
        row: usize,
        col: usize,
    ) -> Self {
        assert_ne!(row, col);
        let mut g = Self::identity(ell, n);
        let mut e = JetMatrix::zero(n, n);
        *e.at_mut(row, col) = JetScalar::from_q(c.clone());
        let mono = LaurentBlock::monomial(punct, k, e, 0);
        g.blocks[punct] = g.blocks[punct].add(&mono).unwrap();
        g.inv_blocks[punct] = g.inv_blocks[punct].sub(&mono).unwrap();
        g
    }

    pub fn mul(&self, other: &Self) -> Result<Self, LoopError> {
        Ok(GroupElement {
            blocks: zip_blocks(&self.blocks, &other.blocks, |a, b| a.mul(b))?,
            inv_blocks: zip_blocks(&other.inv_blocks, &self.inv_blocks, |a, b| a.mul(b))?,
        })
    }

    pub fn inverse(&self) -> Self {
        GroupElement {
            blocks: self.inv_blocks.clone(),
            inv_blocks: self.blocks.clone(),
        }
    }

    /// `exp(X)` for a nilpotent argument; the power series must terminate
    /// within `max_pow` steps.
    pub fn exp_nilpotent(x: &LoopElement, max_pow: usize) -> Result<Self, LoopError> {
        let ell = x.ell();
        let n = x.blocks.first().map(|b| b.rows).unwrap_or(0);
        let mut blocks = Vec::new();
        let mut inv_blocks = Vec::new();
        for p in 0..ell {
            let one = LaurentBlock::monomial(p, 0, JetMatrix::identity(n), 0);
            let mut acc = one.clone();
            let mut acc_inv = one.clone();
            let mut pow = one.clone();
            let mut factorial = BigRational::one();
            let mut terminated = false;
            for j in 1..=max_pow {
                pow = pow.mul(&x.blocks[p])?;
                if pow.is_zero() {
                    terminated = true;
                    break;
                }
                factorial *= q(j as i64, 1);
                let term = pow.scale_q(&factorial.recip());
                acc = acc.add(&term)?;
                if j % 2 == 1 {
                    acc_inv = acc_inv.sub(&term)?;
                } else {
                    acc_inv = acc_inv.add(&term)?;
                }
            }
            if !terminated {
                return Err(LoopError::NotNilpotent(max_pow));
            }
            blocks.push(acc);
            inv_blocks.push(acc_inv);
        }
        Ok(GroupElement { blocks, inv_blocks })
    }

    /// Determinant minus one, per puncture; all-zero when det = 1 holds on
    /// the certified windows.
    pub fn det_minus_one(&self) -> Result<Vec<LaurentBlock>, LoopError> {
        self.blocks
            .iter()
            .map(|b| {
                let n = b.rows;
                let det = det_block(b, n)?;
                let one = LaurentBlock::monomial_q(b.puncture, 0, q(1, 1), 0);
                det.sub(&one).map_err(LoopError::from)
            })
            .collect()
    }

    /// Largest pole order among entries of the loop and its inverse.
    pub fn pole_bound(&self) -> i64 {
        self.blocks
            .iter()
            .chain(&self.inv_blocks)
            .map(|b| (-b.lo).max(0))
            .max()
            .unwrap_or(0)
    }
}

fn det_block(b: &LaurentBlock, n: usize) -> Result<LaurentBlock, SeriesError> {
    // Leibniz expansion; n is small
    fn perms(n: usize) -> Vec<(Vec<usize>, i64)> {
        if n == 1 {
            return vec![(vec![0], 1)];
        }
        let mut out = Vec::new();
        for (p, sign) in perms(n - 1) {
            for pos in 0..n {
                let mut q: Vec<usize> =
                    p.iter().map(|&x| if x >= pos { x + 1 } else { x }).collect();
                q.push(pos);
                let s = if (n - 1 - pos) % 2 == 0 { sign } else { -sign };
                out.push((q, s));
            }
        }
        out
    }
    let mut det = LaurentBlock::zero(b.puncture, 1, 1, 0);
    for (perm, sign) in perms(n) {
        let mut term = LaurentBlock::monomial_q(b.puncture, 0, q(sign, 1), 0);
        for (r, &c) in perm.iter().enumerate() {
            // extract entry (r, c) as a scalar series
            let mut entry_coeffs = std::collections::BTreeMap::new();
            for (deg, m) in b.coeffs() {
                let e = m.at(r, c);
                if !e.is_zero() {
                    entry_coeffs.insert(*deg, JetMatrix::from_fn(1, 1, |_, _| e.clone()));
                }
            }
            let entry = LaurentBlock::from_coeffs(b.puncture, 0, b.lo, b.cert, 1, 1, entry_coeffs);
            term = term.mul(&entry)?;
        }
        det = det.add(&term)?;
    }
    Ok(det)
}

/// `Ad(σ) a = σ a σ^{-1}`, preserving the form weight.
pub fn ad_conjugate_blocks(
    sigma: &GroupElement,
    blocks: &[LaurentBlock],
) -> Result<Vec<LaurentBlock>, LoopError> {
    check_punctures(&sigma.blocks, blocks)?;
    blocks
        .iter()
        .enumerate()
        .map(|(p, b)| {
            sigma.blocks[p]
                .mul(b)?
                .mul(&sigma.inv_blocks[p])
                .map_err(LoopError::from)
        })
        .collect()
}

pub fn ad_loop(sigma: &GroupElement, a: &LoopElement) -> Result<LoopElement, LoopError> {
    Ok(LoopElement {
        blocks: ad_conjugate_blocks(sigma, &a.blocks)?,
    })
}

pub fn ad_form(sigma: &GroupElement, w: &FormElement) -> Result<FormElement, LoopError> {
    Ok(FormElement {
        blocks: ad_conjugate_blocks(sigma, &w.blocks)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jetring::JET_EXACT;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn sl2_structure() {
        let lie = LieData::new(2);
        assert_eq!(lie.d, 3);
        // basis order: e = E_01, f = E_10, h
        let e = lie.basis(0);
        let f = lie.basis(1);
        let h = lie.basis(2);
        assert_eq!(lie.kappa(e, f).at_base(), q(1, 1));
        assert_eq!(lie.kappa(h, h).at_base(), q(2, 1));
        // dual basis pairing: κ(I_a, I^b) = δ_a^b
        for a in 0..3 {
            for b in 0..3 {
                let v = lie.kappa(lie.basis(a), lie.dual(b)).at_base();
                assert_eq!(v, if a == b { q(1, 1) } else { q(0, 1) });
            }
        }
        // γ = e⊗f + f⊗e + ½ h⊗h, frozen from the 3x3 dual-basis solve
        let g = lie.gamma();
        assert_eq!(g[0][1], q(1, 1));
        assert_eq!(g[1][0], q(1, 1));
        assert_eq!(g[2][2], q(1, 2));
        assert_eq!(g[0][0], q(0, 1));
        assert_eq!(g[0][2], q(0, 1));
        // [e, f] = h
        assert_eq!(lie.bracket_structure(0, 1), &[(2, q(1, 1))]);
    }

    #[test]
    fn dual_pairing_sl3() {
        let lie = LieData::new(3);
        assert_eq!(lie.d, 8);
        for a in 0..8 {
            for b in 0..8 {
                let v = lie.kappa(lie.basis(a), lie.dual(b)).at_base();
                assert_eq!(v, if a == b { q(1, 1) } else { q(0, 1) });
            }
        }
    }

    #[test]
    fn gamma_is_symmetric_and_ad_invariant() {
        for n in 2..=3usize {
            let lie = LieData::new(n);
            let g = lie.gamma();
            for a in 0..lie.d {
                for b in 0..lie.d {
                    assert_eq!(g[a][b], g[b][a]);
                }
            }
            // [x ⊗ 1 + 1 ⊗ x, γ] = 0 for all basis x, expanded in coordinates:
            // Σ_ab γ[a][b] ([x, I_a] ⊗ I_b + I_a ⊗ [x, I_b]) = 0
            for x in 0..lie.d {
                let mut resid = vec![vec![q(0, 1); lie.d]; lie.d];
                for a in 0..lie.d {
                    for b in 0..lie.d {
                        if g[a][b].is_zero() {
                            continue;
                        }
                        for &(c, ref s) in lie.bracket_structure(x, a) {
                            let v = &resid[c][b] + &g[a][b] * s;
                            resid[c][b] = v;
                        }
                        for &(c, ref s) in lie.bracket_structure(x, b) {
                            let v = &resid[a][c] + &g[a][b] * s;
                            resid[a][c] = v;
                        }
                    }
                }
                assert!(resid.iter().all(|row| row.iter().all(|v| v.is_zero())));
            }
        }
    }

    #[test]
    fn kappa_invariance_on_basis() {
        let lie = LieData::new(2);
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    let xy = lie.basis(a).commutator(lie.basis(b));
                    let lhs = lie.kappa(&xy, lie.basis(c));
                    let yw = lie.basis(b).commutator(lie.basis(c));
                    let rhs = lie.kappa(lie.basis(a), &yw);
                    assert!(lhs.sub(&rhs).is_zero().eq(&true));
                }
            }
        }
    }

    #[test]
    fn pair_b_coordinate_formula() {
        let lie = LieData::new(2);
        // a = E12 z^2, ω = E21 z^-3 dz → tr(E12 E21) = 1
        let a = LoopElement::basis_mode(&lie, 1, 0, 0, 2);
        let w = FormElement::basis_mode(&lie, 1, 0, 1, -3);
        assert_eq!(pair_b(&a, &w).unwrap().at_base(), q(1, 1));
        // no degree -1 term
        let w2 = FormElement::basis_mode(&lie, 1, 0, 1, -2);
        assert!(pair_b(&a, &w2).unwrap().is_zero());
    }

    #[test]
    fn ad_conjugation_diag() {
        let lie = LieData::new(2);
        // σ = diag(t, t^-1) constant: Ad(σ) E12 = t^2 E12
        let t = q(3, 1);
        let mut m = JetMatrix::zero(2, 2);
        *m.at_mut(0, 0) = JetScalar::from_q(t.clone());
        *m.at_mut(1, 1) = JetScalar::from_q(t.recip());
        let mut mi = JetMatrix::zero(2, 2);
        *mi.at_mut(0, 0) = JetScalar::from_q(t.recip());
        *mi.at_mut(1, 1) = JetScalar::from_q(t.clone());
        let sigma = GroupElement {
            blocks: vec![LaurentBlock::monomial(0, 0, m, 0)],
            inv_blocks: vec![LaurentBlock::monomial(0, 0, mi, 0)],
        };
        let a = LoopElement::basis_mode(&lie, 1, 0, 0, 0);
        let out = ad_loop(&sigma, &a).unwrap();
        let expected = a.scale_q(&(&t * &t));
        assert!(out.eq_on_window(&expected, JET_EXACT));
        // identity fixes everything
        let id = GroupElement::identity(1, 2);
        assert!(ad_loop(&id, &a).unwrap().eq_on_window(&a, JET_EXACT));
    }

    #[test]
    fn b_is_ad_invariant() {
        let lie = LieData::new(2);
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let sigma = GroupElement::elementary(1, 2, 0, &q(2, 1), -1, 0, 1)
            .mul(&GroupElement::elementary(1, 2, 0, &q(-1, 2), 1, 1, 0))
            .unwrap();
        for _ in 0..10 {
            let mut a = LoopElement::zero(1, 2, 0);
            let mut w = FormElement::zero(1, 2, 1);
            for _ in 0..4 {
                let ai = rng.gen_range(0..3);
                let k = rng.gen_range(-3..4);
                let c = q(rng.gen_range(-5..6), 1 + rng.gen_range(0..3));
                a = a
                    .add(&LoopElement::basis_mode(&lie, 1, 0, ai, k).scale_q(&c))
                    .unwrap();
                let wi = rng.gen_range(0..3);
                let kw = rng.gen_range(-3..4);
                w = w
                    .add(&FormElement::basis_mode(&lie, 1, 0, wi, kw).scale_q(&c))
                    .unwrap();
            }
            let lhs = pair_b(&ad_loop(&sigma, &a).unwrap(), &ad_form(&sigma, &w).unwrap()).unwrap();
            let rhs = pair_b(&a, &w).unwrap();
            assert!(lhs.sub(&rhs).is_zero());
        }
    }

    #[test]
    fn bracket_axioms() {
        let lie = LieData::new(2);
        let e = LoopElement::basis_mode(&lie, 1, 0, 0, -1);
        let f = LoopElement::basis_mode(&lie, 1, 0, 1, 2);
        let h = LoopElement::basis_mode(&lie, 1, 0, 2, 0);
        // [E12, E21] = E11 - E22 pointwise
        let ef = e.bracket(&f).unwrap();
        let expected = LoopElement::basis_mode(&lie, 1, 0, 2, 1);
        assert!(ef.eq_on_window(&expected, JET_EXACT));
        // [a, a] = 0
        assert!(e.bracket(&e).unwrap().is_zero());
        // Jacobi on random triples
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        for _ in 0..5 {
            let pick = |rng: &mut ChaCha20Rng| {
                let mut acc = LoopElement::zero(1, 2, 0);
                for _ in 0..3 {
                    let a = rng.gen_range(0..3);
                    let k = rng.gen_range(-2..3);
                    let c = q(rng.gen_range(-4..5), 1);
                    acc = acc
                        .add(&LoopElement::basis_mode(&lie, 1, 0, a, k).scale_q(&c))
                        .unwrap();
                }
                acc
            };
            let a = pick(&mut rng);
            let b = pick(&mut rng);
            let c = pick(&mut rng);
            let j = a
                .bracket(&b.bracket(&c).unwrap())
                .unwrap()
                .add(&b.bracket(&c.bracket(&a).unwrap()).unwrap())
                .unwrap()
                .add(&c.bracket(&a.bracket(&b).unwrap()).unwrap())
                .unwrap();
            assert!(j.is_zero());
        }
        let _ = h;
    }

    #[test]
    fn group_element_algebra() {
        let g1 = GroupElement::elementary(1, 2, 0, &q(3, 1), -2, 0, 1);
        let g2 = GroupElement::elementary(1, 2, 0, &q(-1, 3), 1, 1, 0);
        let g = g1.mul(&g2).unwrap();
        // g · g^{-1} = 1 on the window
        let prod = zip_blocks(&g.blocks, &g.inv_blocks, |a, b| a.mul(b)).unwrap();
        let one = LaurentBlock::monomial(0, 0, JetMatrix::identity(2), 0);
        assert!(prod[0].eq_on_window(&one, JET_EXACT));
        // det = 1
        for d in g.det_minus_one().unwrap() {
            assert!(d.is_zero());
        }
        assert_eq!(g.pole_bound(), 2);
    }

    #[test]
    fn exp_nilpotent_terminates() {
        let lie = LieData::new(2);
        let u0 = JetScalar::var(0, 2);
        // X = u_1 e z^{-1}: nilpotent in jets
        let x = LoopElement::basis_mode(&lie, 1, 0, 0, -1).scale_jet(&u0);
        let g = GroupElement::exp_nilpotent(&x, 8).unwrap();
        let prod = g.blocks[0].mul(&g.inv_blocks[0]).unwrap();
        let one = LaurentBlock::monomial(0, 0, JetMatrix::identity(2), 0);
        assert!(prod.eq_on_window(&one, 2));
        // a non-nilpotent argument errors out
        let h = LoopElement::basis_mode(&lie, 1, 0, 2, 0);
        assert!(matches!(
            GroupElement::exp_nilpotent(&h, 8),
            Err(LoopError::NotNilpotent(8))
        ));
    }
}
