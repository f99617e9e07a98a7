//! Exact-arithmetic oracles and generators shared by the integration tests.
#![allow(dead_code)]

use nalgebra::DVector;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use horizon_pmp::qualification::FunctionalFamily;

pub type Q = BigRational;

pub fn q(v: i64) -> Q {
    Q::from_integer(BigInt::from(v))
}

/// Unique solution of `m x = b` when `m` has full column rank and the system
/// is consistent.
fn solve_unique(mut m: Vec<Vec<Q>>, mut b: Vec<Q>) -> Option<Vec<Q>> {
    let rows = m.len();
    let cols = m.first().map_or(0, |r| r.len());
    let mut r = 0;
    for c in 0..cols {
        let piv = (r..rows).find(|&i| !m[i][c].is_zero())?;
        m.swap(r, piv);
        b.swap(r, piv);
        for i in 0..rows {
            if i != r && !m[i][c].is_zero() {
                let f = &m[i][c] / &m[r][c];
                for j in c..cols {
                    let d = &f * &m[r][j];
                    m[i][j] -= d;
                }
                let d = &f * &b[r];
                b[i] -= d;
            }
        }
        r += 1;
    }
    if b[cols..].iter().any(|v| !v.is_zero()) {
        return None;
    }
    Some((0..cols).map(|i| &b[i] / &m[i][i]).collect())
}

fn subsets(m: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn rec(start: usize, m: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..m {
            cur.push(i);
            rec(i + 1, m, k, cur, out);
            cur.pop();
        }
    }
    rec(0, m, k, &mut cur, &mut out);
    out
}

/// Whether `0` lies in the convex hull of `points`, by enumerating affinely
/// independent subsets of at most `dim + 1` points.
pub fn zero_in_hull(points: &[Vec<Q>]) -> bool {
    let Some(dim) = points.first().map(|p| p.len()) else {
        return false;
    };
    for k in 1..=points.len().min(dim + 1) {
        for s in subsets(points.len(), k) {
            let mut m: Vec<Vec<Q>> = (0..dim).map(|i| s.iter().map(|&j| points[j][i].clone()).collect()).collect();
            m.push(vec![q(1); k]);
            let mut b = vec![q(0); dim];
            b.push(q(1));
            if let Some(alpha) = solve_unique(m, b) {
                if alpha.iter().all(|a| !a.is_negative()) {
                    return true;
                }
            }
        }
    }
    false
}

/// Removes the `psi` component from every point.
pub fn project_out(points: &[Vec<Q>], psi: &[Q]) -> Vec<Vec<Q>> {
    let pp: Q = psi.iter().map(|v| v * v).sum();
    points
        .iter()
        .map(|p| {
            let c: Q = p.iter().zip(psi).map(|(a, b)| a * b).sum::<Q>() / &pp;
            p.iter().zip(psi).map(|(a, b)| a - &c * b).collect()
        })
        .collect()
}

pub fn rational_rows(rows: &[Vec<i64>]) -> Vec<Vec<Q>> {
    rows.iter().map(|r| r.iter().map(|v| q(*v)).collect()).collect()
}

pub fn random_rows(rng: &mut ChaCha8Rng, count: usize, dim: usize, range: i64) -> Vec<Vec<i64>> {
    (0..count)
        .map(|_| (0..dim).map(|_| rng.gen_range(-range..=range)).collect())
        .collect()
}

pub fn family(rows: &[Vec<i64>]) -> FunctionalFamily {
    FunctionalFamily::new(rows.iter().map(|r| DVector::from_iterator(r.len(), r.iter().map(|v| *v as f64))).collect())
        .unwrap()
}
