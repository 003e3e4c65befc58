//! Independent reference computations used by the integration tests. Nothing
//! here calls into the library under test.

#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub fn q(v: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}

/// Average ranks (1-based) by direct counting: rank = 1 + #smaller + (#equal - 1) / 2.
pub fn brute_ranks(values: &[i64]) -> Vec<BigRational> {
    values
        .iter()
        .map(|v| {
            let smaller = values.iter().filter(|w| *w < v).count() as i64;
            let equal = values.iter().filter(|w| *w == v).count() as i64;
            q(1 + smaller) + (q(equal) - q(1)) / q(2)
        })
        .collect()
}

/// Pearson correlation of exact ranks; `None` when either side has no variance.
pub fn brute_spearman(x: &[i64], y: &[i64]) -> Option<f64> {
    let rx = brute_ranks(x);
    let ry = brute_ranks(y);
    let n = q(x.len() as i64);
    let mx = rx.iter().fold(BigRational::zero(), |a, b| a + b) / &n;
    let my = ry.iter().fold(BigRational::zero(), |a, b| a + b) / &n;
    let mut sxy = BigRational::zero();
    let mut sxx = BigRational::zero();
    let mut syy = BigRational::zero();
    for (a, b) in rx.iter().zip(&ry) {
        let dx = a - &mx;
        let dy = b - &my;
        sxy += &dx * &dy;
        sxx += &dx * &dx;
        syy += &dy * &dy;
    }
    if sxx.is_zero() || syy.is_zero() {
        return None;
    }
    // rho^2 is exact; take the root once at the end
    let rho2 = (&sxy * &sxy) / (sxx * syy);
    let rho = rho2.to_f64()?.sqrt();
    Some(if sxy.is_negative() { -rho } else { rho })
}

/// Two-sided permutation p-value by lexicographic enumeration of all
/// orderings of `y`, using a plain f64 Pearson on ranks.
pub fn enumerated_permutation_p(x: &[i64], y: &[i64]) -> f64 {
    let rank = |v: &[i64]| -> Vec<f64> { brute_ranks(v).iter().map(|r| r.to_f64().unwrap()).collect() };
    let pearson = |a: &[f64], b: &[f64]| -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
        for (u, v) in a.iter().zip(b) {
            sab += (u - ma) * (v - mb);
            saa += (u - ma) * (u - ma);
            sbb += (v - mb) * (v - mb);
        }
        sab / (saa * sbb).sqrt()
    };
    let rx = rank(x);
    let ry = rank(y);
    let observed = pearson(&rx, &ry).abs() - 1e-12;
    let mut idx: Vec<usize> = (0..y.len()).collect();
    let (mut hits, mut total) = (0u64, 0u64);
    loop {
        let permuted: Vec<f64> = idx.iter().map(|&i| ry[i]).collect();
        total += 1;
        if pearson(&rx, &permuted).abs() >= observed {
            hits += 1;
        }
        // next lexicographic permutation
        let Some(k) = (0..idx.len() - 1).rev().find(|&k| idx[k] < idx[k + 1]) else {
            break;
        };
        let l = (k + 1..idx.len()).rev().find(|&l| idx[k] < idx[l]).unwrap();
        idx.swap(k, l);
        idx[k + 1..].reverse();
    }
    hits as f64 / total as f64
}

/// Solves the normal equations (X'X) b = X'y exactly, with an intercept
/// column prepended. Returns `None` for a singular system.
pub fn normal_equations(columns: &[Vec<i64>], y: &[i64]) -> Option<Vec<BigRational>> {
    let n = y.len();
    let k = columns.len() + 1;
    let x = |i: usize, j: usize| if j == 0 { q(1) } else { q(columns[j - 1][i]) };
    let mut a: Vec<Vec<BigRational>> = (0..k)
        .map(|r| {
            let mut row: Vec<BigRational> = (0..k)
                .map(|c| (0..n).fold(BigRational::zero(), |s, i| s + x(i, r) * x(i, c)))
                .collect();
            row.push((0..n).fold(BigRational::zero(), |s, i| s + x(i, r) * q(y[i])));
            row
        })
        .collect();
    for col in 0..k {
        let pivot = (col..k).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, pivot);
        let inv = BigRational::one() / &a[col][col];
        for c in col..=k {
            a[col][c] = &a[col][c] * &inv;
        }
        for r in 0..k {
            if r != col && !a[r][col].is_zero() {
                let factor = a[r][col].clone();
                for c in col..=k {
                    let sub = &factor * &a[col][c];
                    a[r][c] -= sub;
                }
            }
        }
    }
    Some(a.into_iter().map(|row| row[k].clone()).collect())
}

/// Exact residual sum of squares of coefficients `beta` (intercept first).
pub fn exact_rss(columns: &[Vec<i64>], y: &[i64], beta: &[BigRational]) -> BigRational {
    (0..y.len()).fold(BigRational::zero(), |s, i| {
        let fitted = columns
            .iter()
            .zip(&beta[1..])
            .fold(beta[0].clone(), |f, (col, b)| f + b * q(col[i]));
        let r = q(y[i]) - fitted;
        s + &r * &r
    })
}

pub fn to_f64(v: &BigRational) -> f64 {
    v.to_f64().unwrap()
}

pub fn as_f64(v: &[i64]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}
