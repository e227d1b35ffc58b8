//! Exact linear algebra over the jet ring and over the rationals.
//!
//! The jet ring is local: an element is a unit iff its constant term is
//! nonzero. Gauss-Jordan elimination with unit pivots therefore solves any
//! system whose reduction at `u = 0` has full structural rank; rows left
//! over with purely nilpotent entries mean the system does not split and
//! are reported as an error rather than guessed at.

use crate::jetring::JetScalar;
use num::{BigRational, Zero};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LinalgError {
    #[error("inconsistent linear system")]
    Inconsistent,
    #[error("linear system is underdetermined (nullity {0})")]
    Underdetermined(usize),
    #[error("elimination left a row with only nilpotent entries")]
    NotFlat,
}

/// Dense row-major matrix of jet scalars.
pub struct JetMat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Vec<JetScalar>>,
}

impl JetMat {
    pub fn new(rows: usize, cols: usize) -> Self {
        JetMat {
            rows,
            cols,
            data: vec![vec![JetScalar::zero(); cols]; rows],
        }
    }

    pub fn from_rows(data: Vec<Vec<JetScalar>>) -> Self {
        let rows = data.len();
        let cols = data.first().map(|r| r.len()).unwrap_or(0);
        assert!(data.iter().all(|r| r.len() == cols));
        JetMat { rows, cols, data }
    }
}

struct Reduced {
    data: Vec<Vec<JetScalar>>,
    pivots: Vec<(usize, usize)>, // (row, col) in elimination order
    pivot_of_col: Vec<Option<usize>>,
}

/// Gauss-Jordan with unit pivots over the first `cols` columns (the rest of
/// each row rides along, e.g. an augmented right-hand side).
fn reduce(mut data: Vec<Vec<JetScalar>>, cols: usize) -> Result<Reduced, LinalgError> {
    let rows = data.len();
    let mut pivots = Vec::new();
    let mut pivot_of_col = vec![None; cols];
    let mut next_row = 0usize;
    for c in 0..cols {
        let mut pivot_row = None;
        for r in next_row..rows {
            if !data[r][c].at_base().is_zero() {
                pivot_row = Some(r);
                break;
            }
        }
        let Some(pr) = pivot_row else { continue };
        data.swap(next_row, pr);
        let inv = data[next_row][c]
            .invert()
            .expect("pivot with nonzero constant term is a unit");
        let width = data[next_row].len();
        for j in 0..width {
            data[next_row][j] = data[next_row][j].mul(&inv);
        }
        for r in 0..rows {
            if r == next_row || data[r][c].is_zero() {
                continue;
            }
            let factor = data[r][c].clone();
            for j in 0..width {
                let sub = factor.mul(&data[next_row][j]);
                data[r][j] = data[r][j].sub(&sub);
            }
        }
        pivots.push((next_row, c));
        pivot_of_col[c] = Some(next_row);
        next_row += 1;
    }
    // non-pivot rows must carry no nilpotent leftovers in the system columns
    for r in next_row..rows {
        if data[r][..cols].iter().any(|x| !x.is_zero()) {
            return Err(LinalgError::NotFlat);
        }
    }
    Ok(Reduced {
        data,
        pivots,
        pivot_of_col,
    })
}

/// Solve `A x = b` requiring a unique solution. The system may be
/// overdetermined; it must be consistent and have full column rank.
pub fn solve_unique(a: &JetMat, b: &[JetScalar]) -> Result<Vec<JetScalar>, LinalgError> {
    assert_eq!(a.rows, b.len());
    let mut aug = a.data.clone();
    for (row, rhs) in aug.iter_mut().zip(b) {
        row.push(rhs.clone());
    }
    let red = reduce(aug, a.cols)?;
    if red.pivots.len() < a.cols {
        return Err(LinalgError::Underdetermined(a.cols - red.pivots.len()));
    }
    for (r, row) in red.data.iter().enumerate() {
        let is_pivot_row = red.pivots.iter().any(|&(pr, _)| pr == r);
        if !is_pivot_row && !row[a.cols].is_zero() {
            return Err(LinalgError::Inconsistent);
        }
    }
    let mut x = vec![JetScalar::zero(); a.cols];
    for &(r, c) in &red.pivots {
        x[c] = red.data[r][a.cols].clone();
    }
    Ok(x)
}

/// Basis of the solution module of `A x = 0`. The module is free over the
/// jet ring when elimination succeeds with unit pivots; one generator per
/// non-pivot column.
pub fn nullspace(a: &JetMat) -> Result<Vec<Vec<JetScalar>>, LinalgError> {
    let red = reduce(a.data.clone(), a.cols)?;
    let mut basis = Vec::new();
    for free in 0..a.cols {
        if red.pivot_of_col[free].is_some() {
            continue;
        }
        let mut v = vec![JetScalar::zero(); a.cols];
        v[free] = JetScalar::one();
        for &(r, c) in &red.pivots {
            v[c] = red.data[r][free].neg();
        }
        basis.push(v);
    }
    Ok(basis)
}

/// Affine solve: a particular solution together with a nullspace basis.
pub fn solve_affine(
    a: &JetMat,
    b: &[JetScalar],
) -> Result<(Vec<JetScalar>, Vec<Vec<JetScalar>>), LinalgError> {
    assert_eq!(a.rows, b.len());
    let mut aug = a.data.clone();
    for (row, rhs) in aug.iter_mut().zip(b) {
        row.push(rhs.clone());
    }
    let red = reduce(aug, a.cols)?;
    for (r, row) in red.data.iter().enumerate() {
        let is_pivot_row = red.pivots.iter().any(|&(pr, _)| pr == r);
        if !is_pivot_row && !row[a.cols].is_zero() {
            return Err(LinalgError::Inconsistent);
        }
    }
    let mut x = vec![JetScalar::zero(); a.cols];
    for &(r, c) in &red.pivots {
        x[c] = red.data[r][a.cols].clone();
    }
    let mut basis = Vec::new();
    for free in 0..a.cols {
        if red.pivot_of_col[free].is_some() {
            continue;
        }
        let mut v = vec![JetScalar::zero(); a.cols];
        v[free] = JetScalar::one();
        for &(r, c) in &red.pivots {
            v[c] = red.data[r][free].neg();
        }
        basis.push(v);
    }
    Ok((x, basis))
}

/// Rank of a rational matrix, exact.
pub fn rank_q(mut data: Vec<Vec<BigRational>>) -> usize {
    let rows = data.len();
    if rows == 0 {
        return 0;
    }
    let cols = data[0].len();
    let mut rank = 0usize;
    for c in 0..cols {
        let mut pivot_row = None;
        for r in rank..rows {
            if !data[r][c].is_zero() {
                pivot_row = Some(r);
                break;
            }
        }
        let Some(pr) = pivot_row else { continue };
        data.swap(rank, pr);
        let inv = data[rank][c].recip();
        for j in c..cols {
            let v = &data[rank][j] * &inv;
            data[rank][j] = v;
        }
        for r in 0..rows {
            if r == rank || data[r][c].is_zero() {
                continue;
            }
            let factor = data[r][c].clone();
            for j in c..cols {
                let v = &data[r][j] - &factor * &data[rank][j];
                data[r][j] = v;
            }
        }
        rank += 1;
        if rank == rows {
            break;
        }
    }
    rank
}

/// Exact inverse of a rational matrix, if it exists.
pub fn invert_q(m: &[Vec<BigRational>]) -> Option<Vec<Vec<BigRational>>> {
    let n = m.len();
    let mut aug: Vec<Vec<BigRational>> = m
        .iter()
        .enumerate()
        .map(|(i, row)| {
            assert_eq!(row.len(), n);
            let mut r = row.clone();
            for j in 0..n {
                r.push(if i == j {
                    BigRational::from_integer(1.into())
                } else {
                    BigRational::zero()
                });
            }
            r
        })
        .collect();
    for c in 0..n {
        let pr = (c..n).find(|&r| !aug[r][c].is_zero())?;
        aug.swap(c, pr);
        let inv = aug[c][c].recip();
        for j in 0..2 * n {
            let v = &aug[c][j] * &inv;
            aug[c][j] = v;
        }
        for r in 0..n {
            if r == c || aug[r][c].is_zero() {
                continue;
            }
            let factor = aug[r][c].clone();
            for j in 0..2 * n {
                let v = &aug[r][j] - &factor * &aug[c][j];
                aug[r][j] = v;
            }
        }
    }
    Some(aug.into_iter().map(|row| row[n..].to_vec()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use num::BigInt;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    fn jq(n: i64, d: i64) -> JetScalar {
        JetScalar::from_q(q(n, d))
    }

    #[test]
    fn solve_square_system() {
        // 2x + y = 5, x - y = 1  => x = 2, y = 1
        let a = JetMat::from_rows(vec![
            vec![jq(2, 1), jq(1, 1)],
            vec![jq(1, 1), jq(-1, 1)],
        ]);
        let x = solve_unique(&a, &[jq(5, 1), jq(1, 1)]).unwrap();
        assert_eq!(x[0], jq(2, 1));
        assert_eq!(x[1], jq(1, 1));
    }

    #[test]
    fn solve_with_jets() {
        // (1 + u) x = 1 + u^2 at jet order 2 => x = 1 - u + 2u^2
        let u = JetScalar::var(0, 2);
        let a = JetMat::from_rows(vec![vec![JetScalar::one().reduce_order(2).add(&u)]]);
        let rhs = JetScalar::one().add(&u.mul(&u)).reduce_order(2);
        let x = solve_unique(&a, &[rhs.clone()]).unwrap();
        let back = x[0].mul(&JetScalar::one().add(&u));
        assert!(back.eq_to_order(&rhs, 2));
    }

    #[test]
    fn overdetermined_consistent_and_inconsistent() {
        let a = JetMat::from_rows(vec![
            vec![jq(1, 1)],
            vec![jq(2, 1)],
        ]);
        assert_eq!(
            solve_unique(&a, &[jq(3, 1), jq(6, 1)]).unwrap(),
            vec![jq(3, 1)]
        );
        assert_eq!(
            solve_unique(&a, &[jq(3, 1), jq(7, 1)]),
            Err(LinalgError::Inconsistent)
        );
    }

    #[test]
    fn nullspace_of_rank_one() {
        // x + 2y = 0 has nullspace spanned by (-2, 1)
        let a = JetMat::from_rows(vec![vec![jq(1, 1), jq(2, 1)]]);
        let ns = nullspace(&a).unwrap();
        assert_eq!(ns.len(), 1);
        assert_eq!(ns[0][0], jq(-2, 1));
        assert_eq!(ns[0][1], jq(1, 1));
    }

    #[test]
    fn nilpotent_leftover_is_reported() {
        // u x = 0 admits no unit pivot
        let u = JetScalar::var(0, 2);
        let a = JetMat::from_rows(vec![vec![u]]);
        assert_eq!(nullspace(&a), Err(LinalgError::NotFlat));
    }

    #[test]
    fn rank_and_inverse() {
        let m = vec![
            vec![q(1, 1), q(2, 1)],
            vec![q(3, 1), q(4, 1)],
        ];
        assert_eq!(rank_q(m.clone()), 2);
        let inv = invert_q(&m).unwrap();
        assert_eq!(inv[0][0], q(-2, 1));
        assert_eq!(inv[0][1], q(1, 1));
        assert_eq!(inv[1][0], q(3, 2));
        assert_eq!(inv[1][1], q(-1, 2));
        let singular = vec![
            vec![q(1, 1), q(2, 1)],
            vec![q(2, 1), q(4, 1)],
        ];
        assert_eq!(rank_q(singular.clone()), 1);
        assert!(invert_q(&singular).is_none());
    }
}
