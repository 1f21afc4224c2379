//! Per-stock multi-factor regressions `R_j(t) = α_j + Σ_k β_jk F_k(t) + ε_j(t)`.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::format::{percent, sig};
use crate::ingest::ReturnPanel;
use crate::numerics::{mean, solve_spd, Matrix};
use crate::stats::column_correlations;

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionResult {
    pub ticker: String,
    pub alpha: f64,
    pub betas: Vec<f64>,
    /// Coefficient of determination as a fraction in [0, 1].
    pub r_squared: f64,
    pub residuals: Vec<f64>,
}

/// OLS of `y` on an intercept plus the score columns, via the normal equations.
pub fn fit_multifactor(ticker: &str, y: &[f64], scores: &Matrix) -> Result<RegressionResult> {
    let t = y.len();
    let k = scores.cols();
    if scores.rows() != t {
        return Err(Error::DimensionMismatch(format!(
            "{t} observations but {} score rows",
            scores.rows()
        )));
    }
    if t <= k + 1 {
        return Err(Error::InsufficientObservations {
            observations: t,
            factors: k,
        });
    }

    let p = k + 1;
    let mut xtx = Matrix::zeros(p, p);
    let mut xty = Matrix::zeros(p, 1);
    let mut row = vec![1.0; p];
    for (i, &yi) in y.iter().enumerate() {
        row[1..].copy_from_slice(scores.row(i));
        for a in 0..p {
            xty[(a, 0)] += row[a] * yi;
            for b in a..p {
                xtx[(a, b)] += row[a] * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            xtx[(a, b)] = xtx[(b, a)];
        }
    }
    let coef = match solve_spd(&xtx, &xty) {
        Ok(c) => c.column(0),
        Err(Error::NotPositiveDefinite { .. }) => return Err(Error::CollinearFactors),
        Err(e) => return Err(e),
    };

    let residuals: Vec<f64> = y
        .iter()
        .enumerate()
        .map(|(i, &yi)| {
            let fitted = coef[0]
                + scores
                    .row(i)
                    .iter()
                    .zip(&coef[1..])
                    .map(|(f, b)| f * b)
                    .sum::<f64>();
            yi - fitted
        })
        .collect();
    let y_mean = mean(y);
    let sst: f64 = y.iter().map(|v| (v - y_mean) * (v - y_mean)).sum();
    if !(sst > 0.0) {
        return Err(Error::ZeroVariance(format!("dependent series {ticker}")));
    }
    let ssr: f64 = residuals.iter().map(|e| e * e).sum();
    Ok(RegressionResult {
        ticker: ticker.to_string(),
        alpha: coef[0],
        betas: coef[1..].to_vec(),
        r_squared: (1.0 - ssr / sst).clamp(0.0, 1.0),
        residuals,
    })
}

/// One regression per ticker, in panel order.
pub fn fit_panel(returns: &ReturnPanel, scores: &Matrix) -> Result<Vec<RegressionResult>> {
    if returns.n_dates() != scores.rows() {
        return Err(Error::DimensionMismatch(format!(
            "{} return rows but {} score rows",
            returns.n_dates(),
            scores.rows()
        )));
    }
    returns
        .tickers()
        .iter()
        .enumerate()
        .map(|(j, ticker)| {
            fit_multifactor(ticker, &returns.column(j), scores).map_err(|e| Error::Ticker {
                ticker: ticker.clone(),
                source: Box::new(e),
            })
        })
        .collect()
}

/// Mean absolute pairwise correlation of residuals across stocks. Reported
/// only; the model assumes it is small but OLS does not enforce it.
pub fn residual_cross_correlation(fits: &[RegressionResult]) -> Result<Option<f64>> {
    let n = fits.len();
    if n < 2 {
        return Ok(None);
    }
    let cols: Vec<Vec<f64>> = fits.iter().map(|f| f.residuals.clone()).collect();
    let m = Matrix::from_columns(&cols)?;
    // perfectly fitted stocks have no residual variance to correlate
    let live: Vec<usize> = (0..n)
        .filter(|&j| crate::numerics::population_variance(&m.column(j)) > 1e-24)
        .collect();
    if live.len() < 2 {
        return Ok(None);
    }
    let sub = Matrix::from_columns(&live.iter().map(|&j| cols[j].clone()).collect::<Vec<_>>())?;
    let c = column_correlations(&sub)?;
    let l = live.len();
    let mut total = 0.0;
    for i in 0..l {
        for j in (i + 1)..l {
            total += c[(i, j)].abs();
        }
    }
    Ok(Some(total / (l * (l - 1) / 2) as f64))
}

/// `ticker,alpha,beta_1..beta_K,r_squared_percent`.
pub fn write_regression<W: Write>(sink: W, fits: &[RegressionResult]) -> Result<()> {
    let k = fits.first().map_or(0, |f| f.betas.len());
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec!["ticker".to_string(), "alpha".to_string()];
    header.extend((1..=k).map(|j| format!("beta_{j}")));
    header.push("r_squared_percent".to_string());
    w.write_record(&header)?;
    for f in fits {
        let mut rec = vec![f.ticker.clone(), sig(f.alpha)];
        rec.extend(f.betas.iter().map(|b| sig(*b)));
        rec.push(percent(f.r_squared));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads (ticker, R² fraction) pairs from a regression CSV.
pub fn read_r_squared<R: Read>(source: R) -> Result<Vec<(String, f64)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(source);
    let header = rdr.headers()?.clone();
    let pos = header
        .iter()
        .position(|h| h == "r_squared_percent")
        .filter(|_| header.get(0) == Some("ticker"))
        .ok_or_else(|| {
            Error::Malformed("regression file needs ticker and r_squared_percent columns".into())
        })?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let v: f64 = rec[pos]
            .parse()
            .ok()
            .filter(|v: &f64| (0.0..=100.0).contains(v))
            .ok_or_else(|| Error::MalformedNumber {
                line,
                column: "r_squared_percent".into(),
                value: rec[pos].to_string(),
            })?;
        out.push((rec[0].to_string(), v / 100.0));
    }
    Ok(out)
}
