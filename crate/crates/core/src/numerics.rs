//! Statistical primitives shared by every other module: moments,
//! correlation, ranking, least squares and aggregation. All arithmetic is
//! `f64` and deterministic for a given build.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::par;

/// Ordinary least squares fit with an intercept term.
#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    /// One slope per regressor column, in column order.
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub r_squared: f64,
    pub residuals: Vec<f64>,
}

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample variance (denominator n − 1), two-pass.
pub fn variance(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64
}

/// Z-scores using the sample standard deviation. `None` for a constant or
/// too-short column.
pub fn standardize(x: &[f64]) -> Option<Vec<f64>> {
    let sd = variance(x).sqrt();
    if x.len() < 2 || !(sd > 0.0) || !sd.is_finite() {
        return None;
    }
    let m = mean(x);
    let z: Vec<f64> = x.iter().map(|v| (v - m) / sd).collect();
    // A column whose spread is pure rounding noise standardizes to garbage;
    // refuse it the same way as an exactly constant one.
    let scale = x.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if sd <= scale * 1e-13 {
        return None;
    }
    Some(z)
}

fn check_lengths(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(Error::InsufficientObservations {
            needed: 3,
            got: x.len(),
        });
    }
    Ok(())
}

/// Pearson product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_lengths(x, y)?;
    let mx = mean(x);
    let my = mean(y);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if !(sxx > 0.0) || !(syy > 0.0) {
        return Err(Error::DegenerateCorrelation);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based fractional ranks; tied values share the mean of their ranks.
pub fn fractional_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && x[order[end]] == x[order[start]] {
            end += 1;
        }
        // positions start..end (0-based) hold ranks start+1..=end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = avg;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation: Pearson correlation of mid-ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check_lengths(x, y)?;
    pearson(&fractional_ranks(x), &fractional_ranks(y))
}

/// Pairwise Pearson correlations of the columns of `m`. The diagonal is
/// exactly 1 and the result is exactly symmetric.
pub fn correlation_matrix(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, p) = m.shape();
    if n < 3 {
        return Err(Error::InsufficientObservations { needed: 3, got: n });
    }
    let cols: Vec<Vec<f64>> = (0..p).map(|j| m.column(j).iter().copied().collect()).collect();
    let rows: Vec<Result<Vec<f64>>> = par::map_indices(p, |i| {
        (i + 1..p).map(|j| pearson(&cols[i], &cols[j])).collect()
    });
    let mut out = DMatrix::identity(p, p);
    for (i, row) in rows.into_iter().enumerate() {
        for (k, r) in row?.into_iter().enumerate() {
            let j = i + 1 + k;
            out[(i, j)] = r;
            out[(j, i)] = r;
        }
    }
    // a constant column with no partner still has to be rejected
    if p == 1 && variance(&cols[0]) <= 0.0 {
        return Err(Error::DegenerateCorrelation);
    }
    Ok(out)
}

/// Least squares of `response` on the columns of `regressors` plus an
/// intercept, solved by Householder QR on the column-equilibrated design.
/// A numerically rank-deficient design is an error.
pub fn ols(regressors: &DMatrix<f64>, response: &[f64]) -> Result<OlsFit> {
    let (n, p) = regressors.shape();
    if n != response.len() {
        return Err(Error::LengthMismatch(n, response.len()));
    }
    if n < p + 2 {
        return Err(Error::InsufficientObservations {
            needed: p + 2,
            got: n,
        });
    }
    let y_mean = mean(response);
    let sst: f64 = response.iter().map(|v| (v - y_mean) * (v - y_mean)).sum();

    if p == 0 {
        let residuals: Vec<f64> = response.iter().map(|v| v - y_mean).collect();
        return Ok(OlsFit {
            coefficients: Vec::new(),
            intercept: y_mean,
            r_squared: 0.0,
            residuals,
        });
    }

    let mut design = DMatrix::zeros(n, p + 1);
    let mut scale = vec![0.0; p + 1];
    for j in 0..=p {
        let norm = if j < p {
            regressors.column(j).norm()
        } else {
            (n as f64).sqrt()
        };
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::SingularDesign);
        }
        scale[j] = norm;
        for i in 0..n {
            let v = if j < p { regressors[(i, j)] } else { 1.0 };
            design[(i, j)] = v / norm;
        }
    }

    let qr = design.clone().qr();
    let r = qr.r();
    if (0..=p).any(|k| r[(k, k)].abs() < 1e-10) {
        return Err(Error::SingularDesign);
    }
    let y = DVector::from_column_slice(response);
    let qty = qr.q().transpose() * &y;
    let beta = r.solve_upper_triangular(&qty).ok_or(Error::SingularDesign)?;

    let fitted = &design * &beta;
    let residuals: Vec<f64> = response.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect();
    let sse: f64 = residuals.iter().map(|e| e * e).sum();
    let r_squared = if sst > 0.0 {
        (1.0 - sse / sst).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let coefficients = (0..p).map(|j| beta[j] / scale[j]).collect();
    Ok(OlsFit {
        coefficients,
        intercept: beta[p] / scale[p],
        r_squared,
        residuals,
    })
}

/// exp(mean(ln v)).
pub fn geometric_mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::DomainError("geometric mean of an empty list".into()));
    }
    if let Some(v) = values.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::DomainError(format!("nonpositive value {v}")));
    }
    let log_mean = values.iter().map(|v| v.ln()).sum::<f64>() / values.len() as f64;
    Ok(log_mean.exp())
}
