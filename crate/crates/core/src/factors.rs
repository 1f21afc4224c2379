//! Statistical common factors: principal-component factoring of the
//! correlation matrix, Kaiser retention, varimax rotation and
//! regression-method factor scores.

use std::io::{Read, Write};

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::format::sig;
use crate::ingest::{parse_date, ReturnPanel};
use crate::network::correlation_matrix;
use crate::numerics::{eigh, mean, solve_spd, standardize_columns, EigenDecomposition, Matrix};
use crate::stats::column_correlations;

/// Eigenvalues this close below 1 still count as "1 or higher" so that
/// analytically unit eigenvalues survive rounding.
const KAISER_SLACK: f64 = 1e-10;

const VARIMAX_TOL: f64 = 1e-10;
const VARIMAX_MAX_SWEEPS: usize = 100;

/// Number of eigenvalues at or above 1 (at least 1).
pub fn kaiser_count(eigenvalues: &[f64]) -> usize {
    eigenvalues
        .iter()
        .filter(|&&l| l >= 1.0 - KAISER_SLACK)
        .count()
        .max(1)
}

/// Principal-component loadings: column j is `v_j · sqrt(λ_j)`.
pub fn initial_loadings(eig: &EigenDecomposition, k: usize) -> Result<Matrix> {
    let n = eig.dim();
    if k == 0 || k > n {
        return Err(Error::DimensionMismatch(format!(
            "cannot retain {k} of {n} factors"
        )));
    }
    let mut l = Matrix::zeros(n, k);
    for j in 0..k {
        let lambda = eig.eigenvalues[j];
        if !(lambda > 0.0) {
            return Err(Error::NonPositiveEigenvalue {
                index: j,
                value: lambda,
            });
        }
        let s = lambda.sqrt();
        for i in 0..n {
            l[(i, j)] = eig.eigenvectors[(i, j)] * s;
        }
    }
    Ok(l)
}

/// Row sums of squared loadings.
pub fn communalities(loadings: &Matrix) -> Vec<f64> {
    (0..loadings.rows())
        .map(|i| loadings.row(i).iter().map(|v| v * v).sum())
        .collect()
}

/// Scales each row to unit length; zero rows stay zero.
pub fn kaiser_normalize(loadings: &Matrix) -> Matrix {
    let mut h = loadings.clone();
    for (i, c) in communalities(loadings).into_iter().enumerate() {
        if c > 0.0 {
            let s = c.sqrt();
            for j in 0..h.cols() {
                h[(i, j)] /= s;
            }
        }
    }
    h
}

/// Raw varimax criterion: Σ_k [ mean(x⁴) − mean(x²)² ] over the columns of `m`.
pub fn varimax_criterion(m: &Matrix) -> f64 {
    let n = m.rows() as f64;
    (0..m.cols())
        .map(|j| {
            let sq: Vec<f64> = m.column(j).iter().map(|v| v * v).collect();
            let m2 = sq.iter().sum::<f64>() / n;
            let m4 = sq.iter().map(|v| v * v).sum::<f64>() / n;
            m4 - m2 * m2
        })
        .sum()
}

/// Varimax criterion evaluated on Kaiser-normalized rows.
pub fn normalized_varimax_criterion(loadings: &Matrix) -> f64 {
    varimax_criterion(&kaiser_normalize(loadings))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Varimax {
    pub rotated: Matrix,
    pub rotation: Matrix,
    /// Normalized criterion before rotation and after each sweep.
    pub criterion_trace: Vec<f64>,
    pub sweeps: usize,
}

/// Orthogonal varimax rotation by pairwise planar rotations on
/// Kaiser-normalized loadings. `rotated = loadings · rotation`.
pub fn varimax(loadings: &Matrix) -> Result<Varimax> {
    let k = loadings.cols();
    if k == 0 {
        return Err(Error::DimensionMismatch(
            "varimax needs at least one factor".into(),
        ));
    }
    let mut h = kaiser_normalize(loadings);
    let mut rotation = Matrix::identity(k);
    let mut trace = vec![varimax_criterion(&h)];
    if k == 1 {
        return Ok(Varimax {
            rotated: loadings.clone(),
            rotation,
            criterion_trace: trace,
            sweeps: 0,
        });
    }

    let n = h.rows() as f64;
    let mut sweeps = 0;
    loop {
        for p in 0..k {
            for q in (p + 1)..k {
                let (mut a, mut b, mut c, mut d) = (0.0, 0.0, 0.0, 0.0);
                for i in 0..h.rows() {
                    let (x, y) = (h[(i, p)], h[(i, q)]);
                    let u = x * x - y * y;
                    let v = 2.0 * x * y;
                    a += u;
                    b += v;
                    c += u * u - v * v;
                    d += 2.0 * u * v;
                }
                let num = d - 2.0 * a * b / n;
                let den = c - (a * a - b * b) / n;
                let phi = num.atan2(den) / 4.0;
                if phi == 0.0 {
                    continue;
                }
                let (s, co) = phi.sin_cos();
                rotate_columns(&mut h, p, q, co, s);
                rotate_columns(&mut rotation, p, q, co, s);
            }
        }
        sweeps += 1;
        let current = varimax_criterion(&h);
        let delta = current - trace[trace.len() - 1];
        trace.push(current);
        if delta.abs() < VARIMAX_TOL {
            break;
        }
        if sweeps >= VARIMAX_MAX_SWEEPS {
            return Err(Error::NoConvergence {
                routine: "varimax",
                iterations: sweeps,
                residual: delta,
            });
        }
    }
    Ok(Varimax {
        rotated: loadings.matmul(&rotation)?,
        rotation,
        criterion_trace: trace,
        sweeps,
    })
}

fn rotate_columns(m: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    for i in 0..m.rows() {
        let (x, y) = (m[(i, p)], m[(i, q)]);
        m[(i, p)] = c * x + s * y;
        m[(i, q)] = -s * x + c * y;
    }
}

/// Regression-method scores `F = Z·Λ·(ΛᵗΛ)⁻¹`.
pub fn factor_scores(standardized: &Matrix, loadings: &Matrix) -> Result<Matrix> {
    if standardized.cols() != loadings.rows() {
        return Err(Error::DimensionMismatch(format!(
            "{} series but {} loading rows",
            standardized.cols(),
            loadings.rows()
        )));
    }
    let cross = loadings.gram();
    let weights = match solve_spd(&cross, &loadings.transpose()) {
        Ok(w) => w.transpose(),
        Err(Error::NotPositiveDefinite { .. }) => return Err(Error::DegenerateLoadings),
        Err(e) => return Err(e),
    };
    standardized.matmul(&weights)
}

/// Pairwise correlations among factor scores.
#[derive(Debug, Clone, PartialEq)]
pub enum MulticollinearityReport {
    /// Fewer than two factors: nothing to compare.
    Empty,
    Pairwise {
        correlations: Matrix,
        mean_abs_offdiag: f64,
    },
}

impl MulticollinearityReport {
    pub fn mean_abs_offdiag(&self) -> Option<f64> {
        match self {
            Self::Empty => None,
            Self::Pairwise {
                mean_abs_offdiag, ..
            } => Some(*mean_abs_offdiag),
        }
    }
}

pub fn multicollinearity_report(scores: &Matrix) -> Result<MulticollinearityReport> {
    let k = scores.cols();
    if k < 2 {
        return Ok(MulticollinearityReport::Empty);
    }
    if scores.rows() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} score rows, need at least 3",
            scores.rows()
        )));
    }
    let correlations = column_correlations(scores)?;
    let mut total = 0.0;
    for i in 0..k {
        for j in (i + 1)..k {
            total += correlations[(i, j)].abs();
        }
    }
    let mean_abs_offdiag = total / (k * (k - 1) / 2) as f64;
    Ok(MulticollinearityReport::Pairwise {
        correlations,
        mean_abs_offdiag,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FactorOptions {
    /// Retain exactly this many factors instead of applying the Kaiser rule.
    pub factors: Option<usize>,
    pub rotate: bool,
}

impl Default for FactorOptions {
    fn default() -> Self {
        Self {
            factors: None,
            rotate: true,
        }
    }
}

/// Extracted common factors for one return panel.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    pub k: usize,
    /// Kaiser count, reported even when `k` was overridden.
    pub kaiser_k: usize,
    pub eigenvalues: Vec<f64>,
    /// N×K rotated loadings, columns ordered by explained variance.
    pub loadings: Matrix,
    /// T×K factor scores.
    pub scores: Matrix,
    /// K×K orthogonal matrix with `loadings = initial · rotation`.
    pub rotation: Matrix,
    pub varimax_sweeps: usize,
}

impl FactorModel {
    pub fn explained_variance(&self) -> Vec<f64> {
        column_sum_squares(&self.loadings)
    }
}

fn column_sum_squares(m: &Matrix) -> Vec<f64> {
    (0..m.cols())
        .map(|j| m.column(j).iter().map(|v| v * v).sum())
        .collect()
}

/// Full extraction: correlation → eigenvalues → Kaiser count → PC loadings →
/// varimax → regression scores.
///
/// After rotation, factors are reordered by descending sum of squared
/// loadings and each column is signed so its loadings sum to a non-negative
/// value. Both steps are a signed permutation, so the rotation stays orthogonal.
pub fn extract_factors(returns: &ReturnPanel, options: FactorOptions) -> Result<FactorModel> {
    let corr = correlation_matrix(returns)?;
    let eig = eigh(corr.as_matrix())?;
    let n = eig.dim();
    let kaiser_k = kaiser_count(&eig.eigenvalues);
    let k = options.factors.unwrap_or(kaiser_k);
    if k == 0 || k > n {
        return Err(Error::DimensionMismatch(format!(
            "requested {k} factors for {n} series"
        )));
    }
    let initial = initial_loadings(&eig, k)?;
    let (rotated, rotation, sweeps) = if options.rotate {
        let v = varimax(&initial)?;
        (v.rotated, v.rotation, v.sweeps)
    } else {
        (initial.clone(), Matrix::identity(k), 0)
    };

    let variance = column_sum_squares(&rotated);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| variance[b].total_cmp(&variance[a]));
    let mut loadings = Matrix::zeros(n, k);
    let mut signed_rotation = Matrix::zeros(k, k);
    for (dst, &src) in order.iter().enumerate() {
        let col = rotated.column(src);
        let sign = if col.iter().sum::<f64>() < 0.0 {
            -1.0
        } else {
            1.0
        };
        for i in 0..n {
            loadings[(i, dst)] = sign * col[i];
        }
        for i in 0..k {
            signed_rotation[(i, dst)] = sign * rotation[(i, src)];
        }
    }

    let z = standardize_columns(returns.returns())?;
    let scores = factor_scores(&z, &loadings)?;
    Ok(FactorModel {
        k,
        kaiser_k,
        eigenvalues: eig.eigenvalues,
        loadings,
        scores,
        rotation: signed_rotation,
        varimax_sweeps: sweeps,
    })
}

fn factor_header(first: &str, k: usize) -> Vec<String> {
    let mut h = vec![first.to_string()];
    h.extend((1..=k).map(|j| format!("factor_{j}")));
    h
}

/// `ticker,factor_1..factor_K`.
pub fn write_loadings<W: Write>(sink: W, tickers: &[String], loadings: &Matrix) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(factor_header("ticker", loadings.cols()))?;
    for (i, t) in tickers.iter().enumerate() {
        let mut rec = vec![t.clone()];
        rec.extend(loadings.row(i).iter().map(|v| sig(*v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// `date,factor_1..factor_K` with round-trip exact values, since the scores
/// feed the regression stage.
pub fn write_scores<W: Write>(sink: W, dates: &[NaiveDate], scores: &Matrix) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(factor_header("date", scores.cols()))?;
    for (i, d) in dates.iter().enumerate() {
        let mut rec = vec![d.to_string()];
        rec.extend(scores.row(i).iter().map(|v| format!("{v:?}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_scores<R: Read>(source: R) -> Result<(Vec<NaiveDate>, Matrix)> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(source);
    let header = rdr.headers()?.clone();
    let factor_columns = header
        .iter()
        .skip(1)
        .enumerate()
        .all(|(j, h)| h == format!("factor_{}", j + 1));
    if header.get(0) != Some("date") || header.len() < 2 || !factor_columns {
        return Err(Error::Malformed(
            "scores file must have columns date,factor_1..factor_K".into(),
        ));
    }
    let k = header.len() - 1;
    let mut dates = Vec::new();
    let mut data = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        dates.push(parse_date(&rec[0], line)?);
        for (j, cell) in rec.iter().skip(1).enumerate() {
            let v: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| Error::MalformedNumber {
                    line,
                    column: header[j + 1].to_string(),
                    value: cell.to_string(),
                })?;
            data.push(v);
        }
    }
    let t = dates.len();
    Ok((dates, Matrix::new(t, k, data)?))
}

/// Scree table: `component,eigenvalue,proportion,cumulative_proportion,retained`.
pub fn write_scree<W: Write>(sink: W, eigenvalues: &[f64], k: usize) -> Result<()> {
    let total: f64 = eigenvalues.iter().sum();
    let mut w = csv::Writer::from_writer(sink);
    w.write_record([
        "component",
        "eigenvalue",
        "proportion",
        "cumulative_proportion",
        "retained",
    ])?;
    let mut cumulative = 0.0;
    for (i, &l) in eigenvalues.iter().enumerate() {
        cumulative += l;
        w.write_record([
            (i + 1).to_string(),
            sig(l),
            sig(l / total),
            sig(cumulative / total),
            (i < k).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// K×K score correlation table; nothing but the header when K < 2.
pub fn write_score_correlations<W: Write>(
    sink: W,
    report: &MulticollinearityReport,
    k: usize,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(factor_header("factor", k))?;
    if let MulticollinearityReport::Pairwise { correlations, .. } = report {
        for i in 0..k {
            let mut rec = vec![format!("factor_{}", i + 1)];
            rec.extend(correlations.row(i).iter().map(|v| sig(*v)));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn score_column_means(scores: &Matrix) -> Vec<f64> {
    scores.columns().iter().map(|c| mean(c)).collect()
}
