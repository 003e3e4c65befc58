//! Rank correlation and least squares.
//!
//! Regression inputs are standardized internally and coefficients are
//! reported in original units. Categorical labels enter as drop-first dummy
//! columns, which stand in for random intercepts in a mixed model.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor, StudentsT};
use thiserror::Error;

pub const INTERCEPT: &str = "(intercept)";

/// Largest n for which exact permutation p-values are computed.
pub const MAX_PERMUTATION_N: usize = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("need at least {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("non-finite value in `{0}`")]
    NonFinite(String),
    #[error("design is rank deficient: `{column}` is collinear with [{}]", .collinear_with.join(", "))]
    RankDeficient {
        column: String,
        collinear_with: Vec<String>,
    },
    #[error("duplicate predictor name `{0}`")]
    DuplicateName(String),
    #[error("fits are not nested: {0}")]
    NotNested(String),
    #[error("exact permutation p-values need n <= {MAX_PERMUTATION_N}, got {0}")]
    PermutationTooLarge(usize),
}

/// Ranks starting at 1; tied values share the mean of their ranks.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i..j hold ranks i+1..=j
        let rank = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        i = j;
    }
    ranks
}

/// Pearson correlation, or `None` when either side has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMethod {
    /// Student t with n - 2 degrees of freedom.
    #[default]
    TApprox,
    /// Exact enumeration of all n! pairings.
    Permutation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpearmanResult {
    pub rho: f64,
    pub p_value: f64,
    /// Zero rank variance on either side; rho is reported as 0.
    pub degenerate: bool,
    pub n: usize,
}

fn check_pair(x: &[f64], y: &[f64], min: usize) -> Result<(), StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < min {
        return Err(StatsError::InsufficientData {
            needed: min,
            got: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite("x".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite("y".into()));
    }
    Ok(())
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<SpearmanResult, StatsError> {
    spearman_with(x, y, PValueMethod::TApprox)
}

pub fn spearman_with(x: &[f64], y: &[f64], method: PValueMethod) -> Result<SpearmanResult, StatsError> {
    check_pair(x, y, 3)?;
    let n = x.len();
    if method == PValueMethod::Permutation && n > MAX_PERMUTATION_N {
        return Err(StatsError::PermutationTooLarge(n));
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let Some(rho) = pearson(&rx, &ry) else {
        return Ok(SpearmanResult {
            rho: 0.0,
            p_value: 1.0,
            degenerate: true,
            n,
        });
    };
    let p_value = match method {
        PValueMethod::TApprox => t_approx_p(rho, n),
        PValueMethod::Permutation => permutation_p(&rx, &ry, rho),
    };
    Ok(SpearmanResult {
        rho,
        p_value,
        degenerate: false,
        n,
    })
}

fn t_approx_p(rho: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    let denom = 1.0 - rho * rho;
    if denom <= 0.0 {
        return 0.0;
    }
    let t = rho * (df / denom).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df >= 1");
    (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0)
}

fn permutation_p(rx: &[f64], ry: &[f64], rho: f64) -> f64 {
    let n = ry.len();
    let mut perm = ry.to_vec();
    let mut counters = vec![0usize; n];
    let threshold = rho.abs() - 1e-12;
    let mut hits = 0u64;
    let mut total = 0u64;
    let mut visit = |p: &[f64]| {
        total += 1;
        if pearson(rx, p).is_some_and(|r| r.abs() >= threshold) {
            hits += 1;
        }
    };
    // Heap's algorithm
    visit(&perm);
    let mut i = 0;
    while i < n {
        if counters[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(counters[i], i);
            }
            visit(&perm);
            counters[i] += 1;
            i = 0;
        } else {
            counters[i] = 0;
            i += 1;
        }
    }
    hits as f64 / total as f64
}

/// Named numeric columns of a regression design (the intercept is implicit).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Design {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    n: Option<usize>,
}

impl Design {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, name: String, values: Vec<f64>) -> Result<(), StatsError> {
        if let Some(n) = self.n {
            if n != values.len() {
                return Err(StatsError::LengthMismatch(n, values.len()));
            }
        }
        if self.names.contains(&name) {
            return Err(StatsError::DuplicateName(name));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite(name));
        }
        self.n = Some(values.len());
        self.names.push(name);
        self.columns.push(values);
        Ok(())
    }

    pub fn numeric(mut self, name: &str, values: &[f64]) -> Result<Self, StatsError> {
        self.push(name.to_string(), values.to_vec())?;
        Ok(self)
    }

    /// Adds drop-first dummy columns `name[level]` for every level after the
    /// first in sorted order.
    pub fn categorical<S: AsRef<str>>(mut self, name: &str, labels: &[S]) -> Result<Self, StatsError> {
        let mut levels: Vec<&str> = labels.iter().map(AsRef::as_ref).collect();
        levels.sort_unstable();
        levels.dedup();
        for level in levels.iter().skip(1) {
            let col = labels
                .iter()
                .map(|l| if l.as_ref() == *level { 1.0 } else { 0.0 })
                .collect();
            self.push(format!("{name}[{level}]"), col)?;
        }
        if self.n.is_none() {
            self.n = Some(labels.len());
        }
        Ok(self)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn n_predictors(&self) -> usize {
        self.names.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    /// Intercept first, then predictors in design order.
    pub coefficients: Vec<(String, f64)>,
    pub r_squared: f64,
    pub residual_ss: f64,
    pub total_ss: f64,
    pub n: usize,
    /// Number of predictors, excluding the intercept.
    pub p: usize,
    /// `y` has zero variance; R² is reported as 0.
    pub degenerate: bool,
    pub residuals: Vec<f64>,
    #[serde(skip)]
    y: Vec<f64>,
}

impl RegressionFit {
    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.coefficients.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn predictor_names(&self) -> impl Iterator<Item = &str> {
        self.coefficients.iter().skip(1).map(|(n, _)| n.as_str())
    }

    pub fn residual_df(&self) -> usize {
        self.n - self.p - 1
    }
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Least squares with intercept via Householder QR on standardized columns.
pub fn ols(design: &Design, y: &[f64]) -> Result<RegressionFit, StatsError> {
    let n = y.len();
    let p = design.n_predictors();
    if let Some(dn) = design.n {
        if dn != n {
            return Err(StatsError::LengthMismatch(dn, n));
        }
    }
    if n < p + 2 {
        return Err(StatsError::InsufficientData { needed: p + 2, got: n });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite("y".into()));
    }

    let mut moments = Vec::with_capacity(p);
    for (name, col) in design.names.iter().zip(&design.columns) {
        let (mean, sd) = mean_sd(col);
        if sd <= 1e-12 * mean.abs().max(1.0) {
            return Err(StatsError::RankDeficient {
                column: name.clone(),
                collinear_with: vec![INTERCEPT.to_string()],
            });
        }
        moments.push((mean, sd));
    }
    let (y_mean, y_sd) = mean_sd(y);

    let mut slopes = vec![0.0; p];
    if p > 0 {
        let z = DMatrix::from_fn(n, p, |i, j| (design.columns[j][i] - moments[j].0) / moments[j].1);
        let qr = z.qr();
        let r = qr.r();
        let tol = 1e-8 * (n as f64).sqrt();
        for j in 0..p {
            if r[(j, j)].abs() < tol {
                return Err(StatsError::RankDeficient {
                    column: design.names[j].clone(),
                    collinear_with: collinear_partners(&r, j, &design.names),
                });
            }
        }
        if y_sd > 0.0 {
            let ys = DVector::from_fn(n, |i, _| (y[i] - y_mean) / y_sd);
            let qty = qr.q().transpose() * ys;
            let beta = r.solve_upper_triangular(&qty).expect("diagonal checked non-zero");
            for j in 0..p {
                slopes[j] = beta[j] * y_sd / moments[j].1;
            }
        }
    }

    let intercept = y_mean - slopes.iter().zip(&moments).map(|(b, (m, _))| b * m).sum::<f64>();
    let residuals: Vec<f64> = (0..n)
        .map(|i| {
            let fitted = intercept
                + slopes
                    .iter()
                    .zip(&design.columns)
                    .map(|(b, col)| b * col[i])
                    .sum::<f64>();
            y[i] - fitted
        })
        .collect();
    let residual_ss: f64 = residuals.iter().map(|r| r * r).sum();
    let total_ss: f64 = y.iter().map(|v| (v - y_mean) * (v - y_mean)).sum();
    let degenerate = total_ss == 0.0;
    let r_squared = if degenerate {
        0.0
    } else {
        (1.0 - residual_ss / total_ss).clamp(0.0, 1.0)
    };

    let mut coefficients = Vec::with_capacity(p + 1);
    coefficients.push((INTERCEPT.to_string(), intercept));
    coefficients.extend(design.names.iter().cloned().zip(slopes));
    Ok(RegressionFit {
        coefficients,
        r_squared,
        residual_ss,
        total_ss,
        n,
        p,
        degenerate,
        residuals,
        y: y.to_vec(),
    })
}

fn collinear_partners(r: &DMatrix<f64>, j: usize, names: &[String]) -> Vec<String> {
    if j == 0 {
        return vec![INTERCEPT.to_string()];
    }
    let head = r.view((0, 0), (j, j)).into_owned();
    let rhs = r.view((0, j), (j, 1)).into_owned();
    let coeffs = head.solve_upper_triangular(&rhs);
    match coeffs {
        Some(c) => names[..j]
            .iter()
            .zip(c.iter())
            .filter(|(_, v)| v.abs() > 1e-8)
            .map(|(n, _)| n.clone())
            .collect(),
        None => names[..j].to_vec(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FTest {
    pub f: f64,
    pub p_value: f64,
    pub df_num: usize,
    pub df_den: usize,
}

/// F test of a larger fit against a nested smaller one on the same response.
pub fn nested_f_test(small: &RegressionFit, big: &RegressionFit) -> Result<FTest, StatsError> {
    if small.y != big.y {
        return Err(StatsError::NotNested("fits use different responses".into()));
    }
    if big.p <= small.p {
        return Err(StatsError::NotNested(format!(
            "larger fit has {} predictors, smaller has {}",
            big.p, small.p
        )));
    }
    let big_names: Vec<&str> = big.predictor_names().collect();
    if let Some(missing) = small.predictor_names().find(|n| !big_names.contains(n)) {
        return Err(StatsError::NotNested(format!(
            "`{missing}` is absent from the larger fit"
        )));
    }
    let df_num = big.p - small.p;
    let df_den = big.residual_df();
    if df_den == 0 {
        return Err(StatsError::InsufficientData {
            needed: big.p + 2,
            got: big.n,
        });
    }
    let gain = (small.residual_ss - big.residual_ss).max(0.0);
    // an exact fit leaves only rounding noise in the residuals
    let exact = big.residual_ss <= 1e-20 * small.total_ss.max(f64::MIN_POSITIVE);
    let (f, p_value) = if exact && gain > 0.0 {
        (f64::INFINITY, 0.0)
    } else if gain == 0.0 {
        (0.0, 1.0)
    } else {
        let f = (gain / df_num as f64) / (big.residual_ss / df_den as f64);
        let dist = FisherSnedecor::new(df_num as f64, df_den as f64).expect("positive df");
        (f, dist.sf(f).clamp(0.0, 1.0))
    };
    Ok(FTest {
        f,
        p_value,
        df_num,
        df_den,
    })
}
