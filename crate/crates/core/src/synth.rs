//! Seeded synthetic markets with a known factor structure.
//!
//! Returns follow `R_j(t) = Σ_k β_jk F_k(t) + ε_j(t)` with independent
//! standard-normal factors and noise of standard deviation `noise_sigma`.
//! Each stock's loading vector is `scale_j · w_j` where `w_j` is a unit
//! direction dominated by the factor its industry is aligned with, so the
//! population R² of stock j is `scale_j² / (scale_j² + σ²)`.

use std::io::Write;

use chrono::{Datelike, Days, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::format::sig;
use crate::ingest::{PricePanel, ReturnPanel};
use crate::numerics::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_stocks: usize,
    pub n_days: usize,
    pub k_factors: usize,
    /// Per-stock loading scale is drawn uniformly from this range.
    pub loading_min: f64,
    pub loading_max: f64,
    /// Contiguous industry blocks; block b is aligned with factor `b % k_factors`.
    pub n_industries: usize,
    /// Standard deviation of the random weight on non-aligned factors, before
    /// the direction is normalized.
    pub cross_loading: f64,
    pub noise_sigma: f64,
    /// Members of each industry that receive `loading_max` outright.
    pub hubs_per_industry: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_stocks: 100,
            n_days: 2000,
            k_factors: 5,
            loading_min: 0.5,
            loading_max: 2.0,
            n_industries: 5,
            cross_loading: 0.25,
            noise_sigma: 1.0,
            hubs_per_industry: 0,
            seed: 1,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.n_stocks < 2 {
            return bad(format!("n_stocks = {} (need at least 2)", self.n_stocks));
        }
        if self.k_factors < 1 {
            return bad("k_factors must be at least 1".into());
        }
        if self.n_days <= self.k_factors + 1 {
            return bad(format!(
                "n_days = {} must exceed k_factors + 1 = {}",
                self.n_days,
                self.k_factors + 1
            ));
        }
        if !(self.loading_min > 0.0
            && self.loading_min <= self.loading_max
            && self.loading_max.is_finite())
        {
            return bad(format!(
                "loading range [{}, {}] must be positive and ordered",
                self.loading_min, self.loading_max
            ));
        }
        if self.n_industries < 1 || self.n_industries > self.n_stocks {
            return bad(format!("n_industries = {} out of range", self.n_industries));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!(
                "noise_sigma = {} must be non-negative",
                self.noise_sigma
            ));
        }
        if !(self.cross_loading >= 0.0 && self.cross_loading.is_finite()) {
            return bad(format!(
                "cross_loading = {} must be non-negative",
                self.cross_loading
            ));
        }
        let smallest = self.n_stocks / self.n_industries;
        if self.hubs_per_industry > smallest {
            return bad(format!(
                "hubs_per_industry = {} exceeds smallest industry size {smallest}",
                self.hubs_per_industry
            ));
        }
        Ok(())
    }

    pub fn industry_of(&self, stock: usize) -> usize {
        stock * self.n_industries / self.n_stocks
    }
}

/// Box–Muller normal deviates over a seeded ChaCha stream.
pub struct NormalStream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl NormalStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - self.rng.gen::<f64>();
        let u2 = self.rng.gen::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        self.spare = Some(r * s);
        r * c
    }

    pub fn index(&mut self, upper: usize) -> usize {
        self.rng.gen_range(0..upper)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticMarket {
    pub returns: ReturnPanel,
    /// N×K true β.
    pub true_loadings: Matrix,
    /// T×K true factor realizations.
    pub true_scores: Matrix,
    /// Industry id of every stock, in ticker order.
    pub industries: Vec<String>,
    pub loading_scale: Vec<f64>,
    pub population_r2: Vec<f64>,
}

/// Weekdays starting 2000-01-03.
pub fn business_days(count: usize) -> Vec<NaiveDate> {
    let mut d = NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date");
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d + Days::new(1);
    }
    out
}

pub fn ticker_name(j: usize, n: usize) -> String {
    let width = n.to_string().len().max(3);
    format!("S{:0width$}", j + 1)
}

pub fn industry_name(b: usize, n: usize) -> String {
    let width = n.to_string().len().max(2);
    format!("IND{:0width$}", b + 1)
}

pub fn generate(spec: &SynthSpec) -> Result<SyntheticMarket> {
    spec.validate()?;
    let (n, t, k) = (spec.n_stocks, spec.n_days, spec.k_factors);
    let mut rng = NormalStream::new(spec.seed);

    let mut scores = Matrix::zeros(t, k);
    for i in 0..t {
        for j in 0..k {
            scores[(i, j)] = rng.next_normal();
        }
    }

    let mut scale: Vec<f64> = (0..n)
        .map(|_| spec.loading_min + (spec.loading_max - spec.loading_min) * rng.uniform())
        .collect();
    for b in 0..spec.n_industries {
        let mut members: Vec<usize> = (0..n).filter(|&j| spec.industry_of(j) == b).collect();
        for _ in 0..spec.hubs_per_industry {
            let pick = members.swap_remove(rng.index(members.len()));
            scale[pick] = spec.loading_max;
        }
    }

    let mut loadings = Matrix::zeros(n, k);
    for j in 0..n {
        let aligned = spec.industry_of(j) % k;
        let mut w: Vec<f64> = (0..k)
            .map(|f| {
                let z = rng.next_normal();
                if f == aligned {
                    1.0
                } else {
                    spec.cross_loading * z
                }
            })
            .collect();
        let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        w.iter_mut().for_each(|v| *v *= scale[j] / norm);
        for (f, v) in w.into_iter().enumerate() {
            loadings[(j, f)] = v;
        }
    }

    let mut returns = scores.matmul(&loadings.transpose())?;
    for i in 0..t {
        for j in 0..n {
            returns[(i, j)] += spec.noise_sigma * rng.next_normal();
        }
    }

    let tickers: Vec<String> = (0..n).map(|j| ticker_name(j, n)).collect();
    let dates = business_days(t + 1)[1..].to_vec();
    let sigma2 = spec.noise_sigma * spec.noise_sigma;
    Ok(SyntheticMarket {
        returns: ReturnPanel::new(tickers, dates, returns)?,
        true_loadings: loadings,
        true_scores: scores,
        industries: (0..n)
            .map(|j| industry_name(spec.industry_of(j), spec.n_industries))
            .collect(),
        population_r2: scale.iter().map(|s| s * s / (s * s + sigma2)).collect(),
        loading_scale: scale,
    })
}

/// Cumulates `scale · R` from `start` into a price panel whose first row is
/// dated one business day before the first return.
pub fn prices_from_returns(returns: &ReturnPanel, start: f64, scale: f64) -> Result<PricePanel> {
    let t = returns.n_dates();
    let n = returns.n_tickers();
    let first = returns.dates()[0];
    let mut prev = first - Days::new(1);
    while matches!(prev.weekday(), Weekday::Sat | Weekday::Sun) {
        prev = prev - Days::new(1);
    }
    let mut dates = vec![prev];
    dates.extend_from_slice(returns.dates());
    let mut p = Matrix::zeros(t + 1, n);
    for j in 0..n {
        p[(0, j)] = start;
        for i in 0..t {
            p[(i + 1, j)] = p[(i, j)] * (scale * returns.returns()[(i, j)]).exp();
        }
    }
    PricePanel::new(returns.tickers().to_vec(), dates, p)
}

/// `ticker,industry_id,loading_scale,population_r2_percent`.
pub fn write_truth<W: Write>(sink: W, market: &SyntheticMarket) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record([
        "ticker",
        "industry_id",
        "loading_scale",
        "population_r2_percent",
    ])?;
    for (j, t) in market.returns.tickers().iter().enumerate() {
        w.write_record([
            t.clone(),
            market.industries[j].clone(),
            sig(market.loading_scale[j]),
            sig(100.0 * market.population_r2[j]),
        ])?;
    }
    w.flush()?;
    Ok(())
}
