//! Industry average indexes, factor/industry correlation tables and the
//! degree versus R² profile.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::format::{percent, sig};
use crate::ingest::ReturnPanel;
use crate::network::{normalize_degree, SpanningTree};
use crate::numerics::{pearson, Matrix};
use crate::regression::RegressionResult;
use crate::stats::spearman;

/// Industries with four or fewer members get no index.
pub const MIN_INDUSTRY_MEMBERS: usize = 5;

pub type Membership = HashMap<String, String>;

/// Reads a `ticker,industry_id` CSV.
pub fn read_membership<R: Read>(source: R) -> Result<Membership> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(source);
    let header = rdr.headers()?.clone();
    if header.get(0) != Some("ticker") || header.get(1) != Some("industry_id") {
        return Err(Error::Malformed(
            "membership file must have columns ticker,industry_id".into(),
        ));
    }
    let mut out = Membership::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() < 2 || rec[0].is_empty() || rec[1].is_empty() {
            return Err(Error::Malformed(format!(
                "line {line}: empty membership field"
            )));
        }
        if out.insert(rec[0].to_string(), rec[1].to_string()).is_some() {
            return Err(Error::DuplicateTicker(rec[0].to_string()));
        }
    }
    Ok(out)
}

pub fn write_membership<W: Write>(
    sink: W,
    tickers: &[String],
    industries: &[String],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["ticker", "industry_id"])?;
    for (t, i) in tickers.iter().zip(industries) {
        w.write_record([t, i])?;
    }
    w.flush()?;
    Ok(())
}

/// Equal-weighted average return of one industry.
#[derive(Debug, Clone, PartialEq)]
pub struct IndustryIndex {
    pub industry_id: String,
    pub member_count: usize,
    pub series: Vec<f64>,
}

/// One index per industry with at least [`MIN_INDUSTRY_MEMBERS`] members,
/// sorted by industry id.
pub fn industry_indexes(
    returns: &ReturnPanel,
    membership: &Membership,
) -> Result<Vec<IndustryIndex>> {
    let unmapped: Vec<String> = returns
        .tickers()
        .iter()
        .filter(|t| !membership.contains_key(*t))
        .cloned()
        .collect();
    if !unmapped.is_empty() {
        return Err(Error::UnmappedTickers(unmapped));
    }
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (j, t) in returns.tickers().iter().enumerate() {
        groups.entry(membership[t].as_str()).or_default().push(j);
    }
    let m = returns.returns();
    let indexes: Vec<IndustryIndex> = groups
        .into_iter()
        .filter(|(_, members)| members.len() >= MIN_INDUSTRY_MEMBERS)
        .map(|(id, members)| {
            // shifted mean: exact when all members agree
            let series = (0..m.rows())
                .map(|i| {
                    let base = m[(i, members[0])];
                    let spread: f64 = members.iter().map(|&j| m[(i, j)] - base).sum();
                    base + spread / members.len() as f64
                })
                .collect();
            IndustryIndex {
                industry_id: id.to_string(),
                member_count: members.len(),
                series,
            }
        })
        .collect();
    if indexes.is_empty() {
        return Err(Error::NoQualifyingIndustries(MIN_INDUSTRY_MEMBERS));
    }
    Ok(indexes)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorIndustryRow {
    /// 1-based factor number.
    pub factor: usize,
    pub max_abs: f64,
    pub mean_abs: f64,
    pub min_abs: f64,
    pub argmax_industry: String,
}

/// Absolute correlations of each factor score series with every industry index.
pub fn factor_industry_correlations(
    scores: &Matrix,
    indexes: &[IndustryIndex],
) -> Result<Vec<FactorIndustryRow>> {
    if indexes.is_empty() {
        return Err(Error::InsufficientData("no industry indexes".into()));
    }
    if let Some(bad) = indexes.iter().find(|ix| ix.series.len() != scores.rows()) {
        return Err(Error::DimensionMismatch(format!(
            "industry {} has {} observations, scores have {}",
            bad.industry_id,
            bad.series.len(),
            scores.rows()
        )));
    }
    (0..scores.cols())
        .map(|k| {
            let f = scores.column(k);
            let corrs = indexes
                .iter()
                .map(|ix| {
                    pearson(&f, &ix.series).map(f64::abs).ok_or_else(|| {
                        Error::ZeroVariance(format!(
                            "factor {} or industry {}",
                            k + 1,
                            ix.industry_id
                        ))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            let mut arg = 0;
            for (i, c) in corrs.iter().enumerate() {
                if *c > corrs[arg] {
                    arg = i;
                }
            }
            Ok(FactorIndustryRow {
                factor: k + 1,
                max_abs: corrs[arg],
                mean_abs: corrs.iter().sum::<f64>() / corrs.len() as f64,
                min_abs: corrs.iter().copied().fold(f64::INFINITY, f64::min),
                argmax_industry: indexes[arg].industry_id.clone(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegreeBucket {
    pub degree: usize,
    /// Normalized degree; `None` when every stock has the same degree.
    pub l_star: Option<f64>,
    pub count: usize,
    pub mean_r2: f64,
    pub min_r2: f64,
    pub max_r2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegreeR2Profile {
    pub buckets: Vec<DegreeBucket>,
}

impl DegreeR2Profile {
    /// Rank correlation between bucket degree and bucket mean R².
    pub fn degree_spearman(&self) -> Option<f64> {
        let k: Vec<f64> = self.buckets.iter().map(|b| b.degree as f64).collect();
        let r: Vec<f64> = self.buckets.iter().map(|b| b.mean_r2).collect();
        spearman(&k, &r)
    }
}

pub fn degree_r2_profile(
    tree: &SpanningTree,
    fits: &[RegressionResult],
) -> Result<DegreeR2Profile> {
    if fits.len() != tree.n() {
        return Err(Error::DimensionMismatch(format!(
            "{} regressions for {} tree nodes",
            fits.len(),
            tree.n()
        )));
    }
    let r2: Vec<f64> = fits.iter().map(|f| f.r_squared).collect();
    profile_from_degrees(tree.degree(), &r2)
}

/// Groups stocks by exact degree; `degrees[i]` and `r_squared[i]` describe the same stock.
pub fn profile_from_degrees(degrees: &[usize], r_squared: &[f64]) -> Result<DegreeR2Profile> {
    if degrees.len() != r_squared.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} degrees for {} R² values",
            degrees.len(),
            r_squared.len()
        )));
    }
    if degrees.is_empty() {
        return Err(Error::InsufficientData("no stocks".into()));
    }
    let min = *degrees.iter().min().unwrap();
    let max = *degrees.iter().max().unwrap();
    let mut groups: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for (&k, &r) in degrees.iter().zip(r_squared) {
        groups.entry(k).or_default().push(r);
    }
    let buckets = groups
        .into_iter()
        .map(|(degree, rs)| DegreeBucket {
            degree,
            l_star: (max > min).then(|| normalize_degree(degree, min, max)),
            count: rs.len(),
            mean_r2: rs.iter().sum::<f64>() / rs.len() as f64,
            min_r2: rs.iter().copied().fold(f64::INFINITY, f64::min),
            max_r2: rs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
        .collect();
    Ok(DegreeR2Profile { buckets })
}

/// `date,<industry_id>...` with 10 significant digits.
pub fn write_industry_indexes<W: Write>(
    sink: W,
    dates: &[NaiveDate],
    indexes: &[IndustryIndex],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec!["date".to_string()];
    header.extend(indexes.iter().map(|ix| ix.industry_id.clone()));
    w.write_record(&header)?;
    for (i, d) in dates.iter().enumerate() {
        let mut rec = vec![d.to_string()];
        rec.extend(indexes.iter().map(|ix| sig(ix.series[i])));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// `factor,max,mean,min,argmax_industry`.
pub fn write_factor_industry<W: Write>(sink: W, rows: &[FactorIndustryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["factor", "max", "mean", "min", "argmax_industry"])?;
    for r in rows {
        w.write_record([
            r.factor.to_string(),
            sig(r.max_abs),
            sig(r.mean_abs),
            sig(r.min_abs),
            r.argmax_industry.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `degree,l_star,count,mean_r2_percent,min_r2_percent,max_r2_percent`.
pub fn write_profile<W: Write>(sink: W, profile: &DegreeR2Profile) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record([
        "degree",
        "l_star",
        "count",
        "mean_r2_percent",
        "min_r2_percent",
        "max_r2_percent",
    ])?;
    for b in &profile.buckets {
        w.write_record([
            b.degree.to_string(),
            b.l_star.map(sig).unwrap_or_default(),
            b.count.to_string(),
            percent(b.mean_r2),
            percent(b.min_r2),
            percent(b.max_r2),
        ])?;
    }
    w.flush()?;
    Ok(())
}
