//! Bundle charts: a base loop `σ0` (product of unipotent elementary
//! factors), moduli modes `η_α`, the jet family `σ(u) = σ0 · exp(Σ u_α η_α)`,
//! the frame `ξ_α = σ^{-1} ∂_α σ`, the dual global forms `ω_α`, and a
//! transversality certificate of exact rank computations standing in for an
//! étale quasi-section.
//!
//! Everything here is an exact Laurent polynomial in the local coordinates
//! with jet coefficients, so chart data carries no truncation: only objects
//! sourced from the curve expansions (the `ω` solve and everything
//! downstream) have certified windows.

use crate::curve::{CurveError, CurveModel, OuterFunction};
use crate::jetring::{JetMatrix, JetScalar, LaurentBlock, SeriesError};
use crate::kernels::GlobalFormVector;
use crate::linalg::{nullspace, rank_q, solve_unique, JetMat, LinalgError};
use crate::looplie::{pair_b, FormElement, GroupElement, LieData, LoopElement, LoopError};
use crate::par;
use num::{BigInt, BigRational, One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ChartError {
    #[error("chart is not transversal: {0}")]
    NotTransversal(String),
    #[error("duality solve failed: {0}")]
    DualityFailure(String),
    #[error("no passing chart within {0} attempts")]
    SearchExhausted(usize),
    #[error("eta spec has {0} modes, expected m = {1}")]
    BadEtaCount(usize, usize),
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Loop(#[from] LoopError),
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error("linear algebra: {0}")]
    Linalg(#[from] LinalgError),
}

/// One unipotent factor `1 + c z^k E_{row,col}` at a puncture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementaryFactor {
    pub punct: usize,
    #[serde(with = "crate::jetring::qserde")]
    pub c: BigRational,
    pub k: i64,
    pub row: usize,
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Sigma0Spec {
    pub factors: Vec<ElementaryFactor>,
}

/// One Laurent mode `c · I_a z_i^k` of an `η`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaTerm {
    pub punct: usize,
    pub lie_index: usize,
    pub k: i64,
    #[serde(with = "crate::jetring::qserde")]
    pub coeff: BigRational,
}

pub type EtaSpec = Vec<EtaTerm>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartSpec {
    pub sigma0: Sigma0Spec,
    pub eta: Vec<EtaSpec>,
    pub jet_order: u32,
    pub depth: i64,
    pub slack: i64,
}

/// Exact rank data certifying the direct-sum decomposition at the base point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub depth: i64,
    pub pole_bound: i64,
    /// Kernel dimension of the outer-section window map (H^0 proxy); 0 passes.
    pub h0_deficiency: usize,
    /// Shallow window classes modulo outer images; must equal m.
    pub complement_dim: usize,
    /// Same computed with the pole bound raised (stabilization witness).
    pub complement_dim_deeper: usize,
    pub eta_rank_ok: bool,
    pub coverage_ok: bool,
    pub m: usize,
}

impl Certificate {
    pub fn passes(&self) -> bool {
        self.h0_deficiency == 0
            && self.complement_dim == self.m
            && self.complement_dim_deeper == self.m
            && self.eta_rank_ok
            && self.coverage_ok
    }
}

/// A certified chart with its derived frame and dual forms.
#[derive(Debug, Clone)]
pub struct BundleChart {
    pub curve: Arc<CurveModel>,
    pub lie: Arc<LieData>,
    pub spec: ChartSpec,
    pub m: usize,
    pub jet_order: u32,
    pub sigma0: GroupElement,
    pub sigma: GroupElement,
    pub eta: Vec<LoopElement>,
    pub xi: Vec<LoopElement>,
    pub omega: Vec<GlobalFormVector>,
    pub certificate: Certificate,
    /// Pole bound of σ(u) and σ(u)^{-1} entries.
    pub p_sigma: i64,
    /// Pole bound of σ0 and σ0^{-1} entries.
    pub p_sigma0: i64,
}

fn build_sigma0(
    spec: &Sigma0Spec,
    ell: usize,
    n: usize,
) -> GroupElement {
    let mut g = GroupElement::identity(ell, n);
    for f in &spec.factors {
        let e = GroupElement::elementary(ell, n, f.punct, &f.c, f.k, f.row, f.col);
        g = g.mul(&e).expect("same puncture layout");
    }
    g
}

fn build_eta(spec: &[EtaSpec], lie: &LieData, ell: usize) -> Vec<LoopElement> {
    spec.iter()
        .map(|terms| {
            let mut acc = LoopElement::zero(ell, lie.n, 0);
            for t in terms {
                let mode = LoopElement::basis_mode(lie, ell, t.punct, t.lie_index, t.k)
                    .scale_q(&t.coeff);
                acc = acc.add(&mode).expect("same layout");
            }
            acc
        })
        .collect()
}

/// `ξ_α = exp(-N) ∂_α exp(N) = Σ_j (-ad_N)^j (η_α) / (j+1)!` truncated at the
/// jet order; exact as the image of the analytic series in the jet ring, so
/// the frame keeps the full certified order.
fn xi_from_eta(eta: &[LoopElement], jet_order: u32) -> Result<Vec<LoopElement>, ChartError> {
    let m = eta.len();
    let ell = eta.first().map(|e| e.ell()).unwrap_or(0);
    let n = eta
        .first()
        .and_then(|e| e.blocks.first())
        .map(|b| b.rows)
        .unwrap_or(0);
    let mut big_n = LoopElement::zero(ell, n, 0);
    for (alpha, e) in eta.iter().enumerate() {
        big_n = big_n.add(&e.scale_jet(&JetScalar::var(alpha, jet_order)))?;
    }
    let mut out = Vec::with_capacity(m);
    for e in eta {
        let mut term = e.clone();
        let mut acc = term.clone();
        let mut fact = BigRational::one();
        for j in 1..=jet_order as i64 {
            term = big_n.bracket(&term)?.neg();
            if term.is_zero() {
                break;
            }
            fact *= BigRational::from_integer(BigInt::from(j + 1));
            acc = acc.add(&term.scale_q(&fact.recip()))?;
        }
        out.push(acc);
    }
    Ok(out)
}

struct WindowIndex {
    ell: usize,
    d: usize,
    lo: i64,
}

impl WindowIndex {
    fn rows(&self) -> usize {
        self.ell * self.d * (-self.lo) as usize
    }

    fn index(&self, punct: usize, deg: i64, coord: usize) -> usize {
        debug_assert!(deg >= self.lo && deg < 0);
        let per_punct = self.d * (-self.lo) as usize;
        punct * per_punct + ((deg - self.lo) as usize) * self.d + coord
    }
}

/// Negative-window coordinates (at `u = 0`) of each expansion block list.
fn negative_window_column(
    blocks: &[LaurentBlock],
    lie: &LieData,
    w: &WindowIndex,
) -> Vec<BigRational> {
    let mut col = vec![BigRational::zero(); w.rows()];
    for (p, b) in blocks.iter().enumerate() {
        for (deg, mat) in b.coeffs() {
            if *deg >= 0 {
                continue;
            }
            assert!(*deg >= w.lo, "expansion deeper than the window");
            let coords = lie.coords(mat);
            for (a, c) in coords.iter().enumerate() {
                let v = c.at_base();
                if !v.is_zero() {
                    col[w.index(p, *deg, a)] = v;
                }
            }
        }
    }
    col
}

fn outer_section_blocks_base(
    curve: &CurveModel,
    lie: &LieData,
    sigma0: &GroupElement,
    a: usize,
    phi: &OuterFunction,
    cert: i64,
) -> Result<Vec<LaurentBlock>, ChartError> {
    let mut blocks = Vec::new();
    for p in 0..curve.punctures() {
        let shift = sigma0.blocks[p].lo + sigma0.inv_blocks[p].lo;
        let scalar = phi.expansion(curve, p, cert - shift)?;
        let mat = LaurentBlock::monomial(p, 0, lie.basis(a).clone(), 0);
        let section = sigma0.inv_blocks[p]
            .mul(&mat)?
            .mul(&scalar)?
            .mul(&sigma0.blocks[p])?;
        blocks.push(section.truncate(cert));
    }
    Ok(blocks)
}

fn certify_inner(
    curve: &CurveModel,
    lie: &LieData,
    sigma0: &GroupElement,
    eta: &[LoopElement],
    depth: i64,
    m: usize,
) -> Result<Certificate, ChartError> {
    let ell = curve.punctures();
    let d = lie.d;
    let p0 = sigma0.pole_bound();

    let complement_at = |pole_bound: i64| -> Result<(usize, usize, bool, bool), ChartError> {
        let w = WindowIndex {
            ell,
            d,
            lo: -(pole_bound + 2 * p0),
        };
        let mut a_cols: Vec<Vec<BigRational>> = Vec::new();
        for phi in curve.outer_function_basis(pole_bound) {
            for a in 0..d {
                let blocks =
                    outer_section_blocks_base(curve, lie, sigma0, a, &phi, 2 * p0 + 2)?;
                a_cols.push(negative_window_column(&blocks, lie, &w));
            }
        }
        let n_a = a_cols.len();
        // transpose into rows for rank computations
        let as_rows = |cols: &[Vec<BigRational>]| -> Vec<Vec<BigRational>> {
            (0..w.rows())
                .map(|r| cols.iter().map(|c| c[r].clone()).collect())
                .collect()
        };
        let rank_a = rank_q(as_rows(&a_cols));
        let h0_def = n_a - rank_a;

        let mut ae_cols = a_cols.clone();
        for e in eta {
            ae_cols.push(negative_window_column(&e.blocks, lie, &w));
        }
        let rank_ae = rank_q(as_rows(&ae_cols));
        let eta_ok = rank_ae == rank_a + m;

        // shallow unit vectors: degrees [-depth, -1]
        let mut shallow: Vec<Vec<BigRational>> = Vec::new();
        for p in 0..ell {
            for deg in -depth..0 {
                for a in 0..d {
                    let mut v = vec![BigRational::zero(); w.rows()];
                    v[w.index(p, deg, a)] = BigRational::one();
                    shallow.push(v);
                }
            }
        }
        let mut as_cols = a_cols.clone();
        as_cols.extend(shallow.iter().cloned());
        let rank_as = rank_q(as_rows(&as_cols));
        let complement = rank_as - rank_a;

        let mut aes_cols = ae_cols.clone();
        aes_cols.extend(shallow);
        let rank_aes = rank_q(as_rows(&aes_cols));
        let coverage = rank_aes == rank_ae;

        if h0_def > 0 {
            return Ok((h0_def, complement, eta_ok, coverage));
        }
        Ok((0, complement, eta_ok, coverage))
    };

    let pole_bound = depth + 2 * p0;
    let (h0_deficiency, complement_dim, eta_rank_ok, coverage_ok) = complement_at(pole_bound)?;
    let (_, complement_dim_deeper, _, _) = complement_at(pole_bound + 2)?;

    Ok(Certificate {
        depth,
        pole_bound,
        h0_deficiency,
        complement_dim,
        complement_dim_deeper,
        eta_rank_ok,
        coverage_ok,
        m,
    })
}

/// Pick η modes from a pool so that their classes complete the complement of
/// the outer images in the negative window: greedy on rank growth, hence
/// deterministic. Returns `None` when the pool cannot reach rank `m`.
pub fn select_eta_greedy(
    curve: &CurveModel,
    lie: &LieData,
    sigma0_spec: &Sigma0Spec,
    depth: i64,
    m: usize,
) -> Result<Option<Vec<EtaSpec>>, ChartError> {
    let ell = curve.punctures();
    let d = lie.d;
    let sigma0 = build_sigma0(sigma0_spec, ell, lie.n);
    let p0 = sigma0.pole_bound();
    let pole_bound = depth + 2 * p0;
    let w = WindowIndex {
        ell,
        d,
        lo: -(pole_bound + 2 * p0),
    };
    let mut a_cols: Vec<Vec<BigRational>> = Vec::new();
    for phi in curve.outer_function_basis(pole_bound) {
        for a in 0..d {
            let blocks = outer_section_blocks_base(curve, lie, &sigma0, a, &phi, 2 * p0 + 2)?;
            a_cols.push(negative_window_column(&blocks, lie, &w));
        }
    }
    let as_rows = |cols: &[Vec<BigRational>]| -> Vec<Vec<BigRational>> {
        (0..w.rows())
            .map(|r| cols.iter().map(|c| c[r].clone()).collect())
            .collect()
    };
    let rank_a = rank_q(as_rows(&a_cols));
    if rank_a != a_cols.len() {
        return Ok(None);
    }
    let mut chosen: Vec<EtaSpec> = Vec::new();
    let mut cols = a_cols;
    let mut rank = rank_a;
    'outer: for k in 1..=2i64 {
        for punct in 0..ell {
            for a in 0..d {
                if chosen.len() == m {
                    break 'outer;
                }
                let mode = LoopElement::basis_mode(lie, ell, punct, a, -k);
                let col = negative_window_column(&mode.blocks, lie, &w);
                let mut trial = cols.clone();
                trial.push(col.clone());
                let r = rank_q(as_rows(&trial));
                if r > rank {
                    rank = r;
                    cols = trial;
                    chosen.push(vec![EtaTerm {
                        punct,
                        lie_index: a,
                        k: -k,
                        coeff: BigRational::one(),
                    }]);
                }
            }
        }
    }
    if chosen.len() == m {
        Ok(Some(chosen))
    } else {
        Ok(None)
    }
}

fn solve_global_forms_inner(
    curve: &CurveModel,
    lie: &LieData,
    sigma: &GroupElement,
    xi: &[LoopElement],
    p_sigma: i64,
    slack: i64,
    m: usize,
) -> Result<Vec<GlobalFormVector>, ChartError> {
    let ell = curve.punctures();
    let d = lie.d;
    let max_pole = 2 * p_sigma + slack;
    let basis = curve.outer_form_basis(max_pole);
    let n_unknowns = basis.len() * d;
    let w = WindowIndex {
        ell,
        d,
        lo: -(max_pole + 2 * p_sigma),
    };

    // expansion of Ad(σ^{-1})(ψ_j ⊗ I_a) per unknown
    let p_eta = xi
        .iter()
        .flat_map(|x| x.blocks.iter())
        .map(|b| (-b.lo).max(0))
        .max()
        .unwrap_or(0);
    let cert = p_eta + 1;
    let mut images: Vec<Vec<LaurentBlock>> = Vec::with_capacity(n_unknowns);
    for psi in &basis {
        for a in 0..d {
            let mut blocks = Vec::new();
            for p in 0..ell {
                let shift = sigma.blocks[p].lo + sigma.inv_blocks[p].lo;
                let scalar = psi.expansion(curve, p, cert - shift)?;
                let mat = LaurentBlock::monomial(p, 0, lie.basis(a).clone(), 0);
                let img = sigma.inv_blocks[p]
                    .mul(&mat)?
                    .mul(&scalar)?
                    .mul(&sigma.blocks[p])?;
                blocks.push(img.truncate(cert));
            }
            images.push(blocks);
        }
    }

    // holomorphy conditions: negative window coefficients vanish (jets)
    let mut rows: Vec<Vec<JetScalar>> = vec![vec![JetScalar::zero(); n_unknowns]; w.rows()];
    for (col, blocks) in images.iter().enumerate() {
        for (p, b) in blocks.iter().enumerate() {
            for (deg, mat) in b.coeffs() {
                if *deg >= 0 {
                    continue;
                }
                assert!(*deg >= w.lo);
                let coords = lie.coords(mat);
                for (a, c) in coords.iter().enumerate() {
                    if !c.is_zero() {
                        rows[w.index(p, *deg, a)][col] = c.clone();
                    }
                }
            }
        }
    }
    let ns = nullspace(&JetMat::from_rows(rows))
        .map_err(|e| ChartError::DualityFailure(format!("holomorphy nullspace: {e}")))?;
    if ns.len() != m {
        return Err(ChartError::NotTransversal(format!(
            "solution space of holomorphic forms has dimension {} != m = {}",
            ns.len(),
            m
        )));
    }

    // Gram matrix B(ξ_α, Ad(σ^{-1}) N_β) and its inversion
    let candidates: Vec<GlobalFormVector> = ns
        .iter()
        .map(|v| {
            let coeffs: Vec<Vec<JetScalar>> = v.chunks(d).map(|c| c.to_vec()).collect();
            GlobalFormVector::from_coeffs(max_pole, coeffs)
        })
        .collect();
    let cand_forms: Vec<FormElement> = candidates
        .iter()
        .zip(&images)
        .map(|(c, _)| -> Result<FormElement, ChartError> {
            // reuse the image expansions linearly instead of re-expanding
            let mut blocks: Vec<Option<LaurentBlock>> = vec![None; ell];
            for (j, cs) in c.coeffs.iter().enumerate() {
                for (a, s) in cs.iter().enumerate() {
                    if s.is_zero() {
                        continue;
                    }
                    let img = &images[j * d + a];
                    for p in 0..ell {
                        let scaled = img[p].scale_jet(s);
                        blocks[p] = Some(match blocks[p].take() {
                            None => scaled,
                            Some(acc) => acc.add(&scaled)?,
                        });
                    }
                }
            }
            Ok(FormElement::from_blocks(
                blocks
                    .into_iter()
                    .enumerate()
                    .map(|(p, b)| b.unwrap_or_else(|| LaurentBlock::zero(p, lie.n, lie.n, 1)))
                    .collect(),
            ))
        })
        .collect::<Result<_, _>>()?;
    let mut gram: Vec<Vec<JetScalar>> = Vec::with_capacity(m);
    for x in xi {
        let row: Vec<JetScalar> = cand_forms
            .iter()
            .map(|f| pair_b(x, f).map_err(ChartError::from))
            .collect::<Result<_, _>>()?;
        gram.push(row);
    }
    // ω_β = Σ_γ X[γ] N_γ with Gram · X = e_β
    let gram_mat = JetMat::from_rows(gram);
    let mut omegas = Vec::with_capacity(m);
    for beta in 0..m {
        let mut rhs = vec![JetScalar::zero(); m];
        rhs[beta] = JetScalar::one();
        let x = solve_unique(&gram_mat, &rhs)
            .map_err(|e| ChartError::DualityFailure(format!("Gram solve: {e}")))?;
        let mut acc = GlobalFormVector::zero(curve, lie, max_pole);
        for (gamma, coef) in x.iter().enumerate() {
            acc = acc.add(&candidates[gamma].scale_jet(coef));
        }
        omegas.push(acc);
    }
    Ok(omegas)
}

impl BundleChart {
    pub fn ell(&self) -> usize {
        self.curve.punctures()
    }

    pub fn n(&self) -> usize {
        self.lie.n
    }

    pub fn d(&self) -> usize {
        self.lie.d
    }

    /// Build and fully verify a chart from its spec.
    pub fn build(
        curve: Arc<CurveModel>,
        lie: Arc<LieData>,
        spec: ChartSpec,
    ) -> Result<Self, ChartError> {
        let ell = curve.punctures();
        let n = lie.n;
        let m = (curve.genus() - 1) * lie.d;
        if spec.eta.len() != m {
            return Err(ChartError::BadEtaCount(spec.eta.len(), m));
        }
        let sigma0 = build_sigma0(&spec.sigma0, ell, n);
        let eta = build_eta(&spec.eta, &lie, ell);
        let certificate = certify_inner(&curve, &lie, &sigma0, &eta, spec.depth, m)?;
        if certificate.h0_deficiency > 0 {
            return Err(ChartError::NotTransversal(format!(
                "H0 rank deficiency {} detected",
                certificate.h0_deficiency
            )));
        }
        if !certificate.passes() {
            return Err(ChartError::NotTransversal(format!(
                "certificate failed: {certificate:?}"
            )));
        }

        // σ(u) = σ0 · exp(Σ u_α η_α)
        let mut big_n = LoopElement::zero(ell, n, 0);
        for (alpha, e) in eta.iter().enumerate() {
            big_n = big_n.add(&e.scale_jet(&JetScalar::var(alpha, spec.jet_order)))?;
        }
        let exp = GroupElement::exp_nilpotent(&big_n, spec.jet_order as usize + 2)?;
        let sigma = sigma0.mul(&exp)?;
        let xi = xi_from_eta(&eta, spec.jet_order)?;

        let p_sigma = sigma.pole_bound();
        let p_sigma0 = sigma0.pole_bound();
        let omega =
            solve_global_forms_inner(&curve, &lie, &sigma, &xi, p_sigma, spec.slack, m)?;

        let chart = BundleChart {
            curve,
            lie,
            spec,
            m,
            jet_order: 0,
            sigma0,
            sigma,
            eta,
            xi,
            omega,
            certificate,
            p_sigma,
            p_sigma0,
        };
        let chart = BundleChart {
            jet_order: chart.spec.jet_order,
            ..chart
        };
        // duality is part of the chart contract
        if !chart.check_duality()? {
            return Err(ChartError::DualityFailure(
                "Gram matrix is not the identity".into(),
            ));
        }
        Ok(chart)
    }

    /// Re-run the certificate at another depth.
    pub fn certify_at(&self, depth: i64) -> Result<Certificate, ChartError> {
        certify_inner(
            &self.curve,
            &self.lie,
            &self.sigma0,
            &self.eta,
            depth,
            self.m,
        )
    }

    /// `Ad(σ(u)^{-1})(I_a φ)` expanded at all punctures.
    pub fn outer_section(
        &self,
        a: usize,
        phi: &OuterFunction,
        cert: i64,
    ) -> Result<LoopElement, ChartError> {
        let mut blocks = Vec::new();
        for p in 0..self.ell() {
            let shift = self.sigma.blocks[p].lo + self.sigma.inv_blocks[p].lo;
            let scalar = phi.expansion(&self.curve, p, cert - shift)?;
            let mat = LaurentBlock::monomial(p, 0, self.lie.basis(a).clone(), 0);
            let img = self.sigma.inv_blocks[p]
                .mul(&mat)?
                .mul(&scalar)?
                .mul(&self.sigma.blocks[p])?;
            blocks.push(img.truncate(cert));
        }
        Ok(LoopElement::from_blocks(blocks))
    }

    /// The dual form `ω_α = Ad(σ^{-1}) G_α` expanded to `cert`.
    pub fn omega_form(&self, alpha: usize, cert: i64) -> Result<FormElement, ChartError> {
        self.omega[alpha]
            .conjugated_form(self, cert)
            .map_err(|e| ChartError::DualityFailure(format!("omega expansion: {e}")))
    }

    /// `B(ξ_α, ω_β) = δ_{αβ}`, exactly in jets.
    pub fn check_duality(&self) -> Result<bool, ChartError> {
        let p_eta = self.eta_pole_bound();
        for alpha in 0..self.m {
            for beta in 0..self.m {
                let w = self.omega_form(beta, p_eta + 1)?;
                let v = pair_b(&self.xi[alpha], &w)?;
                let expect = if alpha == beta {
                    JetScalar::one()
                } else {
                    JetScalar::zero()
                };
                if !v.eq_to_order(&expect, self.jet_order) {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    /// `∂_α ξ_β - ∂_β ξ_α + [ξ_α, ξ_β] = 0` to jet order `jet_order - 1`.
    pub fn check_flatness(&self) -> Result<bool, ChartError> {
        let ord = self.jet_order.saturating_sub(1);
        for alpha in 0..self.m {
            for beta in 0..self.m {
                let r = self.xi[beta]
                    .derive_u(alpha)
                    .sub(&self.xi[alpha].derive_u(beta))?
                    .add(&self.xi[alpha].bracket(&self.xi[beta])?)?;
                for b in &r.blocks {
                    for mat in b.coeffs().values() {
                        if !mat.eq_to_order(&JetMatrix::zero(self.n(), self.n()), ord) {
                            return Ok(false);
                        }
                    }
                }
            }
        }
        Ok(true)
    }

    /// `(∂_α + ad ξ_α)(Ad(σ^{-1})(I_a φ)) = 0` to jet order `jet_order - 1`.
    pub fn check_nabla_stability(
        &self,
        a: usize,
        phi: &OuterFunction,
        cert: i64,
    ) -> Result<bool, ChartError> {
        let ord = self.jet_order.saturating_sub(1);
        let s = self.outer_section(a, phi, cert)?;
        for alpha in 0..self.m {
            let r = s.derive_u(alpha).add(&self.xi[alpha].bracket(&s)?)?;
            let zero = LoopElement::zero(self.ell(), self.n(), 0);
            if !r.truncate(cert - self.eta_pole_bound()).eq_on_window(
                &zero.truncate(cert - self.eta_pole_bound()),
                ord,
            ) {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn eta_pole_bound(&self) -> i64 {
        self.eta
            .iter()
            .flat_map(|e| e.blocks.iter())
            .map(|b| (-b.lo).max(0))
            .max()
            .unwrap_or(0)
    }

    /// Pole bound of ξ entries (same modes as η, nested brackets keep it).
    pub fn xi_pole_bound(&self) -> i64 {
        self.xi
            .iter()
            .flat_map(|e| e.blocks.iter())
            .map(|b| (-b.lo).max(0))
            .max()
            .unwrap_or(0)
    }
}

/// Search outcome log entry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchEntry {
    pub index: usize,
    pub sigma0: Sigma0Spec,
    pub outcome: String,
}

#[derive(Debug)]
pub struct SearchResult {
    pub chart: BundleChart,
    pub log: Vec<SearchEntry>,
}

/// Default η modes: `I_a z_i^{-1}` cycling through the basis and punctures.
pub fn default_eta_spec(lie: &LieData, ell: usize, m: usize) -> Vec<EtaSpec> {
    (0..m)
        .map(|alpha| {
            vec![EtaTerm {
                punct: (alpha / lie.d) % ell,
                lie_index: alpha % lie.d,
                k: -1,
                coeff: BigRational::one(),
            }]
        })
        .collect()
}

fn random_eta_spec(rng: &mut ChaCha20Rng, lie: &LieData, ell: usize, m: usize) -> Vec<EtaSpec> {
    (0..m)
        .map(|_| {
            vec![EtaTerm {
                punct: rng.gen_range(0..ell),
                lie_index: rng.gen_range(0..lie.d),
                k: -(rng.gen_range(1..=2) as i64),
                coeff: BigRational::from_integer(BigInt::from(*[1i64, -1, 2].iter().nth(rng.gen_range(0..3)).unwrap())),
            }]
        })
        .collect()
}

fn random_sigma0_spec(rng: &mut ChaCha20Rng, ell: usize, n: usize) -> Sigma0Spec {
    let coeffs: [(i64, i64); 8] = [
        (1, 1),
        (-1, 1),
        (2, 1),
        (-2, 1),
        (1, 2),
        (-1, 2),
        (3, 1),
        (-3, 1),
    ];
    let n_factors = rng.gen_range(2..=3);
    let factors = (0..n_factors)
        .map(|i| {
            let (num, den) = coeffs[rng.gen_range(0..coeffs.len())];
            let row = rng.gen_range(0..n);
            let col = (row + 1 + rng.gen_range(0..n - 1)) % n;
            ElementaryFactor {
                punct: rng.gen_range(0..ell),
                c: BigRational::new(BigInt::from(num), BigInt::from(den)),
                // alternate upper/lower tendency comes from the random pair
                k: rng.gen_range(-2..=2),
                row: if i % 2 == 0 { row.min(col) } else { row.max(col) },
                col: if i % 2 == 0 { row.max(col) } else { row.min(col) },
            }
        })
        .collect();
    Sigma0Spec { factors }
}

/// Randomized search for a certificate-passing chart. Candidates are
/// generated sequentially from the seed, evaluated independently (in
/// parallel when enabled), and the lowest passing index wins, so the result
/// is deterministic for a given seed.
pub fn search_chart(
    curve: Arc<CurveModel>,
    lie: Arc<LieData>,
    seed: u64,
    attempts: usize,
    jet_order: u32,
    depth: i64,
    slack: i64,
) -> Result<SearchResult, ChartError> {
    let ell = curve.punctures();
    let n = lie.n;
    let m = (curve.genus() - 1) * lie.d;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let default_eta = default_eta_spec(&lie, ell, m);
    let candidates: Vec<(Sigma0Spec, Vec<Vec<EtaSpec>>)> = (0..attempts)
        .map(|_| {
            let s = random_sigma0_spec(&mut rng, ell, n);
            let fallback = random_eta_spec(&mut rng, &lie, ell, m);
            (s, vec![default_eta.clone(), fallback])
        })
        .collect();

    let outcomes = par::map_collect(
        candidates.into_iter().enumerate().collect::<Vec<_>>(),
        |(index, (sigma0, etas))| {
            let mut last_err = String::new();
            for eta in etas {
                let spec = ChartSpec {
                    sigma0: sigma0.clone(),
                    eta,
                    jet_order,
                    depth,
                    slack,
                };
                match BundleChart::build(curve.clone(), lie.clone(), spec) {
                    Ok(chart) => {
                        return (
                            index,
                            sigma0.clone(),
                            "pass".to_string(),
                            Some(Box::new(chart)),
                        )
                    }
                    Err(e) => last_err = e.to_string(),
                }
            }
            (index, sigma0, last_err, None)
        },
    );

    let mut log = Vec::new();
    let mut found: Option<BundleChart> = None;
    for (index, sigma0, outcome, chart) in outcomes {
        log.push(SearchEntry {
            index,
            sigma0,
            outcome,
        });
        if found.is_none() {
            if let Some(c) = chart {
                found = Some(*c);
            }
        }
    }
    match found {
        Some(chart) => Ok(SearchResult { chart, log }),
        None => Err(ChartError::SearchExhausted(attempts)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jetring::JET_EXACT;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    fn d1_curve() -> Arc<CurveModel> {
        Arc::new(
            CurveModel::build(&[q(-1, 1), q(0, 1), q(0, 1), q(0, 1), q(0, 1), q(1, 1)]).unwrap(),
        )
    }

    fn d2_curve() -> Arc<CurveModel> {
        Arc::new(
            CurveModel::build(&[
                q(1, 1),
                q(1, 1),
                q(0, 1),
                q(0, 1),
                q(0, 1),
                q(0, 1),
                q(1, 1),
            ])
            .unwrap(),
        )
    }

    #[test]
    fn trivial_sigma0_fails_with_h0_deficiency() {
        let curve = d1_curve();
        let lie = Arc::new(LieData::new(2));
        let spec = ChartSpec {
            sigma0: Sigma0Spec::default(),
            eta: default_eta_spec(&lie, 1, 3),
            jet_order: 2,
            depth: 4,
            slack: 2,
        };
        let err = BundleChart::build(curve, lie, spec).unwrap_err();
        match err {
            ChartError::NotTransversal(msg) => {
                assert!(msg.contains("H0 rank deficiency 3"), "{msg}");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn xi_matches_direct_log_derivative() {
        // ξ_α from the dexp series vs E^{-1} ∂_α E on jets
        let lie = Arc::new(LieData::new(2));
        let eta = build_eta(&default_eta_spec(&lie, 1, 3), &lie, 1);
        let jet_order = 2;
        let xi = xi_from_eta(&eta, jet_order).unwrap();
        let mut big_n = LoopElement::zero(1, 2, 0);
        for (alpha, e) in eta.iter().enumerate() {
            big_n = big_n
                .add(&e.scale_jet(&JetScalar::var(alpha, jet_order)))
                .unwrap();
        }
        let exp = GroupElement::exp_nilpotent(&big_n, 4).unwrap();
        for alpha in 0..3 {
            let de = LoopElement::from_blocks(
                exp.blocks.iter().map(|b| b.derive_u(alpha)).collect(),
            );
            let direct = LoopElement::from_blocks(
                exp.inv_blocks
                    .iter()
                    .zip(&de.blocks)
                    .map(|(i, d)| i.mul(d).unwrap())
                    .collect(),
            );
            assert!(xi[alpha].eq_on_window(&direct, jet_order - 1));
            // base point: ξ_α(0) = η_α
            assert!(xi[alpha].eq_on_window(&eta[alpha], 0));
        }
    }

    #[test]
    fn exp_sum_term_count_is_nilpotency_bounded() {
        // jet order 2: exp(Σ u_α η_α) = 1 + N + N²/2 exactly
        let lie = Arc::new(LieData::new(2));
        let eta = build_eta(&default_eta_spec(&lie, 1, 3), &lie, 1);
        let mut big_n = LoopElement::zero(1, 2, 0);
        for (alpha, e) in eta.iter().enumerate() {
            big_n = big_n
                .add(&e.scale_jet(&JetScalar::var(alpha, 2)))
                .unwrap();
        }
        let exp = GroupElement::exp_nilpotent(&big_n, 8).unwrap();
        let one = LaurentBlock::monomial(0, 0, JetMatrix::identity(2), 0);
        let n2 = big_n.blocks[0].mul(&big_n.blocks[0]).unwrap();
        let expected = one
            .add(&big_n.blocks[0])
            .unwrap()
            .add(&n2.scale_q(&q(1, 2)))
            .unwrap();
        assert!(exp.blocks[0].eq_on_window(&expected, JET_EXACT));
    }

    // The full chart searches for D1/D2 are exercised by the integration
    // tests (they are shared fixtures there); here we only check the
    // deterministic candidate generation.
    #[test]
    fn candidate_generation_is_deterministic() {
        let mut r1 = ChaCha20Rng::seed_from_u64(42);
        let mut r2 = ChaCha20Rng::seed_from_u64(42);
        for _ in 0..10 {
            let a = random_sigma0_spec(&mut r1, 2, 2);
            let b = random_sigma0_spec(&mut r2, 2, 2);
            assert_eq!(a, b);
        }
    }
}
