use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear scorer over standardized features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearWeights {
    pub intercept: f64,
    pub coef: Vec<f64>,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl LinearWeights {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept
            + x.iter()
                .zip(&self.coef)
                .zip(self.means.iter().zip(&self.scales))
                .map(|((v, c), (m, s))| c * (v - m) / s)
                .sum::<f64>()
    }
}

fn standardize(x: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let n = x.len() as f64;
    let p = x[0].len();
    let mut means = vec![0.0; p];
    for row in x {
        for (m, v) in means.iter_mut().zip(row) {
            *m += v / n;
        }
    }
    let mut scales = vec![0.0; p];
    for row in x {
        for j in 0..p {
            scales[j] += (row[j] - means[j]).powi(2) / n;
        }
    }
    for s in &mut scales {
        *s = if *s > 0.0 { s.sqrt() } else { 1.0 };
    }
    let z = x
        .iter()
        .map(|row| (0..p).map(|j| (row[j] - means[j]) / scales[j]).collect())
        .collect();
    (z, means, scales)
}

fn check(x: &[Vec<f64>], y: &[f64]) -> Result<()> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::InsufficientData("training data is empty".into()));
    }
    Ok(())
}

/// Least squares with a vanishing ridge term for rank-deficient designs.
pub fn fit_ols(x: &[Vec<f64>], y: &[f64]) -> Result<LinearWeights> {
    check(x, y)?;
    let (z, means, scales) = standardize(x);
    let p = means.len();
    let n = y.len() as f64;
    let ybar = y.iter().sum::<f64>() / n;
    // Normal equations on centered data: (ZᵀZ + εI) β = Zᵀ(y − ȳ).
    let mut a = vec![vec![0.0; p + 1]; p];
    for (row, &yi) in z.iter().zip(y) {
        for i in 0..p {
            for j in 0..p {
                a[i][j] += row[i] * row[j];
            }
            a[i][p] += row[i] * (yi - ybar);
        }
    }
    for (i, r) in a.iter_mut().enumerate() {
        r[i] += 1e-8 * n;
    }
    let coef = solve(a)?;
    Ok(LinearWeights { intercept: ybar, coef, means, scales })
}

/// Gaussian elimination with partial pivoting on an augmented matrix.
fn solve(mut a: Vec<Vec<f64>>) -> Result<Vec<f64>> {
    let p = a.len();
    for c in 0..p {
        let piv = (c..p)
            .max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))
            .unwrap_or(c);
        if a[piv][c].abs() < 1e-300 {
            return Err(Error::InsufficientData("singular design matrix".into()));
        }
        a.swap(c, piv);
        for r in 0..p {
            if r != c {
                let f = a[r][c] / a[c][c];
                if f != 0.0 {
                    for k in c..=p {
                        a[r][k] -= f * a[c][k];
                    }
                }
            }
        }
    }
    Ok((0..p).map(|i| a[i][p] / a[i][i]).collect())
}

fn soft_threshold(x: f64, l: f64) -> f64 {
    if x > l {
        x - l
    } else if x < -l {
        x + l
    } else {
        0.0
    }
}

/// Lasso by cyclic coordinate descent on standardized features, minimizing
/// `(1/2n)‖y − Zβ‖² + λ‖β‖₁`.
pub fn fit_lasso(x: &[Vec<f64>], y: &[f64], lambda: f64) -> Result<LinearWeights> {
    check(x, y)?;
    if !(lambda >= 0.0) {
        return Err(Error::InvalidParameter(format!("lambda must be nonnegative, got {lambda}")));
    }
    let (z, means, scales) = standardize(x);
    let p = means.len();
    let n = y.len() as f64;
    let ybar = y.iter().sum::<f64>() / n;
    let mut resid: Vec<f64> = y.iter().map(|v| v - ybar).collect();
    let mut beta = vec![0.0; p];
    let col_sq: Vec<f64> = (0..p).map(|j| z.iter().map(|r| r[j] * r[j]).sum::<f64>() / n).collect();
    for _ in 0..1000 {
        let mut max_change: f64 = 0.0;
        for j in 0..p {
            if col_sq[j] == 0.0 {
                continue;
            }
            let rho = z.iter().zip(&resid).map(|(r, e)| r[j] * e).sum::<f64>() / n + col_sq[j] * beta[j];
            let new = soft_threshold(rho, lambda) / col_sq[j];
            let d = new - beta[j];
            if d != 0.0 {
                for (r, e) in z.iter().zip(resid.iter_mut()) {
                    *e -= d * r[j];
                }
                beta[j] = new;
                max_change = max_change.max(d.abs());
            }
        }
        if max_change < 1e-10 {
            break;
        }
    }
    Ok(LinearWeights { intercept: ybar, coef: beta, means, scales })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data() -> (Vec<Vec<f64>>, Vec<f64>) {
        let x: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let a = i as f64 * 0.1;
                let b = ((i * 7) % 11) as f64;
                vec![a, b]
            })
            .collect();
        let y = x.iter().map(|r| 3.0 + 2.0 * r[0] - 0.5 * r[1]).collect();
        (x, y)
    }

    #[test]
    fn ols_recovers_exact_fit() {
        let (x, y) = data();
        let m = fit_ols(&x, &y).unwrap();
        for (r, t) in x.iter().zip(&y) {
            assert!((m.predict(r) - t).abs() < 1e-6);
        }
    }

    #[test]
    fn lasso_shrinks() {
        let (x, y) = data();
        let free = fit_lasso(&x, &y, 0.0).unwrap();
        for (r, t) in x.iter().zip(&y) {
            assert!((free.predict(r) - t).abs() < 1e-6);
        }
        let heavy = fit_lasso(&x, &y, 1e6).unwrap();
        assert!(heavy.coef.iter().all(|&c| c == 0.0));
        assert!(fit_lasso(&x, &y, -1.0).is_err());
    }
}
