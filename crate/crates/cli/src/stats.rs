//! Small regression helpers for the complexity-shape checks.

use statrs::distribution::{ContinuousCDF, FisherSnedecor};

#[derive(Debug, Clone, PartialEq)]
pub struct Fit {
    /// Polynomial coefficients, constant term first.
    pub coef: Vec<f64>,
    pub rss: f64,
    pub r2: f64,
}

impl Fit {
    pub fn predict(&self, x: f64) -> f64 {
        self.coef.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }
}

/// Least-squares polynomial fit of the given degree via the normal
/// equations (degrees here are 1 or 2, so conditioning is fine after
/// centering and scaling x).
pub fn polyfit(x: &[f64], y: &[f64], degree: usize) -> Option<Fit> {
    let n = x.len();
    let cols = degree + 1;
    if n != y.len() || n < cols {
        return None;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let scale = x
        .iter()
        .map(|v| (v - mean).abs())
        .fold(0.0, f64::max)
        .max(1e-300);
    let z: Vec<f64> = x.iter().map(|v| (v - mean) / scale).collect();
    let mut ata = vec![vec![0.0; cols + 1]; cols];
    for (zi, yi) in z.iter().zip(y) {
        let pows: Vec<f64> = (0..cols).map(|p| zi.powi(p as i32)).collect();
        for r in 0..cols {
            for c in 0..cols {
                ata[r][c] += pows[r] * pows[c];
            }
            ata[r][cols] += pows[r] * yi;
        }
    }
    let beta = solve(ata)?;
    // undo the substitution z = (x - mean)/scale
    let mut coef = vec![0.0; cols];
    for (p, b) in beta.iter().enumerate() {
        let b = b / scale.powi(p as i32);
        for j in 0..=p {
            coef[j] += b * binomial(p, j) as f64 * (-mean).powi((p - j) as i32);
        }
    }
    let fitted: Vec<f64> = z
        .iter()
        .map(|zi| beta.iter().rev().fold(0.0, |acc, c| acc * zi + c))
        .collect();
    let rss: f64 = fitted.iter().zip(y).map(|(f, yi)| (yi - f).powi(2)).sum();
    let ybar = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|yi| (yi - ybar).powi(2)).sum();
    let r2 = if tss > 0.0 { 1.0 - rss / tss } else { 1.0 };
    Some(Fit { coef, rss, r2 })
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

fn solve(mut a: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    let n = a.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        for row in 0..n {
            if row != col {
                let f = a[row][col] / a[col][col];
                for c in col..=n {
                    a[row][c] -= f * a[col][c];
                }
            }
        }
    }
    Some((0..n).map(|i| a[i][n] / a[i][i]).collect())
}

/// Nested-model F-test of a quadratic against a linear fit. Returns
/// `(F, p)`; small `p` means the quadratic term is needed.
pub fn quadratic_vs_linear(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let lin = polyfit(x, y, 1)?;
    let quad = polyfit(x, y, 2)?;
    let dof = x.len().checked_sub(3).filter(|&d| d > 0)? as f64;
    if quad.rss <= 0.0 {
        return Some((f64::INFINITY, 0.0));
    }
    let f = (lin.rss - quad.rss).max(0.0) / (quad.rss / dof);
    let dist = FisherSnedecor::new(1.0, dof).ok()?;
    Some((f, 1.0 - dist.cdf(f)))
}

pub fn median(values: &[f64]) -> f64 {
    percentile(values, 50.0)
}

/// Linear interpolation between closest ranks; NaN for empty input.
pub fn percentile(values: &[f64], pct: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = pct / 100.0 * (v.len() - 1) as f64;
    let (lo, hi) = (rank.floor() as usize, rank.ceil() as usize);
    v[lo] + (v[hi] - v[lo]) * (rank - lo as f64)
}
