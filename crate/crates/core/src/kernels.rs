//! Dynamical r-matrix columns and assembled kernels.
//!
//! A column `r_{j,k,a}` is stored exactly in its global representation: a
//! finite combination of outer forms `G` with `r_col = Ad(σ^{-1}) G`. The
//! combination is solved once over the jet ring; expansions at any demanded
//! precision are then exact, so no truncation error lives in the object
//! itself.

use crate::chart::{BundleChart, ChartError};
use crate::curve::CurveModel;
use crate::jetring::{JetScalar, LaurentBlock, SeriesError};
use crate::linalg::LinalgError;
use crate::looplie::{FormElement, LieData, LoopError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("transversality failed while solving a column: {0}")]
    SingularSystem(String),
    #[error("no solution within pole bound {0}; raise the slack")]
    PoleBoundTooSmall(i64),
    #[error("element pole depth {need} exceeds available columns (K = {have})")]
    DepthExceeded { need: i64, have: i64 },
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Loop(#[from] LoopError),
    #[error(transparent)]
    Chart(#[from] ChartError),
    #[error(transparent)]
    Curve(#[from] crate::curve::CurveError),
    #[error("linear solve failed: {0}")]
    Linalg(#[from] LinalgError),
}

/// A global Lie-algebra-valued form: jet coefficients against the canonical
/// outer form basis up to a pole bound. Expansion at punctures commutes with
/// the linear structure and is exact to any demanded precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalFormVector {
    pub max_pole: i64,
    /// `coeffs[j][a]` multiplies basis form `j` tensored with `I_a`.
    pub coeffs: Vec<Vec<JetScalar>>,
}

impl GlobalFormVector {
    pub fn zero(curve: &CurveModel, lie: &LieData, max_pole: i64) -> Self {
        let count = curve.outer_form_basis(max_pole).len();
        GlobalFormVector {
            max_pole,
            coeffs: vec![vec![JetScalar::zero(); lie.d]; count],
        }
    }

    pub fn from_coeffs(max_pole: i64, coeffs: Vec<Vec<JetScalar>>) -> Self {
        GlobalFormVector { max_pole, coeffs }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|cs| cs.iter().all(|c| c.is_zero()))
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.max_pole, other.max_pole);
        assert_eq!(self.coeffs.len(), other.coeffs.len());
        GlobalFormVector {
            max_pole: self.max_pole,
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(x, y)| x.iter().zip(y).map(|(a, b)| a.add(b)).collect())
                .collect(),
        }
    }

    pub fn scale_jet(&self, s: &JetScalar) -> Self {
        GlobalFormVector {
            max_pole: self.max_pole,
            coeffs: self
                .coeffs
                .iter()
                .map(|cs| cs.iter().map(|c| c.mul(s)).collect())
                .collect(),
        }
    }

    /// Expansion of the bare global form (no conjugation) at `punct`.
    pub fn expansion(
        &self,
        curve: &CurveModel,
        lie: &LieData,
        punct: usize,
        cert: i64,
    ) -> Result<LaurentBlock, KernelError> {
        let basis = curve.outer_form_basis(self.max_pole);
        assert_eq!(basis.len(), self.coeffs.len());
        let mut acc = LaurentBlock::zero(punct, lie.n, lie.n, 1);
        for (form, cs) in basis.iter().zip(&self.coeffs) {
            if cs.iter().all(|c| c.is_zero()) {
                continue;
            }
            let scalar = form.expansion(curve, punct, cert)?;
            let mat = lie.from_coords(cs);
            let lifted = scalar.mul(&LaurentBlock::monomial(punct, 0, mat, 0))?;
            acc = acc.add(&lifted)?;
        }
        Ok(acc.truncate(cert))
    }

    /// Expansion of `Ad(σ^{-1}) G` at every puncture.
    pub fn conjugated_form(
        &self,
        chart: &BundleChart,
        cert: i64,
    ) -> Result<FormElement, KernelError> {
        let mut blocks = Vec::new();
        let shift = 2 * chart.p_sigma;
        for p in 0..chart.ell() {
            let raw = self.expansion(&chart.curve, &chart.lie, p, cert + shift)?;
            let conj = chart.sigma.inv_blocks[p]
                .mul(&raw)?
                .mul(&chart.sigma.blocks[p])?;
            blocks.push(conj.truncate(cert));
        }
        Ok(FormElement::from_blocks(blocks))
    }
}
