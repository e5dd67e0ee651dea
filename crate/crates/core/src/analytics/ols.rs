use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("no observations to fit")]
pub struct RankDeficientError;

/// Row-major design matrix. Column 0 is the intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub names: Vec<String>,
    pub rows: usize,
    pub data: Vec<f64>,
}

impl Design {
    pub fn new(names: Vec<String>) -> Design {
        Design { names, rows: 0, data: Vec::new() }
    }

    pub fn cols(&self) -> usize {
        self.names.len()
    }

    pub fn push_row(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.cols(), "row width");
        self.data.extend_from_slice(row);
        self.rows += 1;
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols() + c]
    }

    fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnStatus {
    Estimated,
    /// Constant column (other than the intercept); dropped.
    ZeroVariance,
    /// Linear combination of earlier retained columns; dropped.
    Collinear,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OlsFit {
    pub n: usize,
    /// Number of estimated coefficients.
    pub rank: usize,
    pub status: Vec<ColumnStatus>,
    /// Indexed like the design's columns; `None` for dropped columns.
    pub coefficients: Vec<Option<f64>>,
    pub std_errors: Vec<Option<f64>>,
    pub t_values: Vec<Option<f64>>,
    pub p_values: Vec<Option<f64>>,
    pub df_resid: usize,
    pub rss: f64,
    /// `rss / df_resid`; `None` when there are no residual degrees of freedom.
    pub residual_variance: Option<f64>,
    pub r_squared: Option<f64>,
    pub residuals: Vec<f64>,
}

const COLLINEAR_TOL: f64 = 1e-10;

/// Least squares by Householder QR with column dropping. Constant non-intercept
/// columns are dropped as zero-variance; a column whose component orthogonal
/// to the retained columns is negligible relative to its norm is dropped as
/// collinear. Standard errors come from `s² (RᵀR)⁻¹`, p-values from Student's t
/// with `n - rank` degrees of freedom.
pub fn ols_fit(x: &Design, y: &[f64]) -> Result<OlsFit, RankDeficientError> {
    assert_eq!(x.rows, y.len(), "design rows must match response length");
    let n = x.rows;
    if n == 0 {
        return Err(RankDeficientError);
    }
    let p = x.cols();
    let mut status = vec![ColumnStatus::Estimated; p];
    // Householder vectors, each acting on rows k.. for the k-th retained column.
    let mut reflectors: Vec<Vec<f64>> = Vec::new();
    let mut retained: Vec<usize> = Vec::new();
    // Columns of R for retained columns (length = number retained at the time).
    let mut r_cols: Vec<Vec<f64>> = Vec::new();

    #[allow(clippy::needless_range_loop)]
    for j in 0..p {
        let mut col = x.column(j);
        if j > 0 && col.iter().all(|&v| v == col[0]) {
            status[j] = ColumnStatus::ZeroVariance;
            continue;
        }
        let col_norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        for (k, v) in reflectors.iter().enumerate() {
            apply_reflector(v, &mut col[k..]);
        }
        let k = reflectors.len();
        let tail_norm = col[k..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if k >= n || col_norm == 0.0 || tail_norm <= COLLINEAR_TOL * col_norm {
            status[j] = ColumnStatus::Collinear;
            continue;
        }
        let alpha = if col[k] > 0.0 { -tail_norm } else { tail_norm };
        let mut v = col[k..].to_vec();
        v[0] -= alpha;
        let v_norm = v.iter().map(|e| e * e).sum::<f64>().sqrt();
        for e in &mut v {
            *e /= v_norm;
        }
        let mut r = col[..k].to_vec();
        r.push(alpha);
        r_cols.push(r);
        reflectors.push(v);
        retained.push(j);
    }

    let q = retained.len();
    let mut qty = y.to_vec();
    for (k, v) in reflectors.iter().enumerate() {
        apply_reflector(v, &mut qty[k..]);
    }
    // Back substitution R b = (Qᵀy)[..q].
    let mut beta = vec![0.0; q];
    for i in (0..q).rev() {
        let mut s = qty[i];
        for (j, b) in beta.iter().enumerate().skip(i + 1) {
            s -= r_cols[j][i] * b;
        }
        beta[i] = s / r_cols[i][i];
    }

    let residuals: Vec<f64> = (0..n)
        .map(|r| y[r] - retained.iter().zip(&beta).map(|(&c, b)| x.get(r, c) * b).sum::<f64>())
        .collect();
    let rss: f64 = residuals.iter().map(|e| e * e).sum();
    let df_resid = n.saturating_sub(q);
    let residual_variance = (df_resid > 0).then(|| rss / df_resid as f64);

    // R⁻¹ (upper triangular), column by column.
    let mut rinv = vec![vec![0.0; q]; q];
    for c in 0..q {
        for i in (0..=c).rev() {
            let mut s = if i == c { 1.0 } else { 0.0 };
            for (j, row) in rinv.iter().enumerate().take(c + 1).skip(i + 1) {
                s -= r_cols[j][i] * row[c];
            }
            rinv[i][c] = s / r_cols[i][i];
        }
    }

    let t_dist = (df_resid > 0).then(|| StudentsT::new(0.0, 1.0, df_resid as f64).expect("positive df"));
    let mut coefficients = vec![None; p];
    let mut std_errors = vec![None; p];
    let mut t_values = vec![None; p];
    let mut p_values = vec![None; p];
    for (i, &c) in retained.iter().enumerate() {
        coefficients[c] = Some(beta[i]);
        if let Some(s2) = residual_variance {
            let var = s2 * rinv[i].iter().map(|v| v * v).sum::<f64>();
            let se = var.sqrt();
            std_errors[c] = Some(se);
            if se > 0.0 {
                let t = beta[i] / se;
                t_values[c] = Some(t);
                p_values[c] = t_dist.as_ref().map(|d| (2.0 * d.sf(t.abs())).clamp(0.0, 1.0));
            }
        }
    }

    let y_mean = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - y_mean).powi(2)).sum();
    let r_squared = (tss > 0.0).then(|| 1.0 - rss / tss);

    Ok(OlsFit {
        n,
        rank: q,
        status,
        coefficients,
        std_errors,
        t_values,
        p_values,
        df_resid,
        rss,
        residual_variance,
        r_squared,
        residuals,
    })
}

/// Applies `I - 2vvᵀ` (with unit `v`) to `x` in place.
fn apply_reflector(v: &[f64], x: &mut [f64]) {
    let dot: f64 = v.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
    for (xi, vi) in x.iter_mut().zip(v) {
        *xi -= 2.0 * dot * vi;
    }
}
