//! Price panel loading and log-return conversion.

use std::collections::HashSet;
use std::io::{Read, Write};

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::numerics::{population_variance, Matrix};

/// How missing price cells are handled once blank calendar rows are dropped.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum GapPolicy {
    #[default]
    Reject,
    /// Interior and trailing gaps take the last observed price. Leading gaps still abort.
    ForwardFill,
}

/// Dense T×N panel of strictly positive prices on a strictly increasing calendar.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel {
    tickers: Vec<String>,
    dates: Vec<NaiveDate>,
    prices: Matrix,
}

impl PricePanel {
    pub fn new(tickers: Vec<String>, dates: Vec<NaiveDate>, prices: Matrix) -> Result<Self> {
        check_labels(&tickers, &dates, &prices)?;
        for i in 0..prices.rows() {
            for (j, &p) in prices.row(i).iter().enumerate() {
                if !(p > 0.0) {
                    return Err(Error::NonPositivePrice {
                        line: i + 2,
                        column: tickers[j].clone(),
                        value: p,
                    });
                }
            }
        }
        Ok(Self {
            tickers,
            dates,
            prices,
        })
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn prices(&self) -> &Matrix {
        &self.prices
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn n_tickers(&self) -> usize {
        self.tickers.len()
    }
}

/// (T−1)×N log returns; every column has nonzero variance.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    tickers: Vec<String>,
    dates: Vec<NaiveDate>,
    returns: Matrix,
}

impl ReturnPanel {
    pub fn new(tickers: Vec<String>, dates: Vec<NaiveDate>, returns: Matrix) -> Result<Self> {
        check_labels(&tickers, &dates, &returns)?;
        if returns.rows() < 2 {
            return Err(Error::InsufficientData(format!(
                "{} return rows, need at least 2",
                returns.rows()
            )));
        }
        for (j, t) in tickers.iter().enumerate() {
            if !(population_variance(&returns.column(j)) > 0.0) {
                return Err(Error::ZeroVariance(t.clone()));
            }
        }
        Ok(Self {
            tickers,
            dates,
            returns,
        })
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn returns(&self) -> &Matrix {
        &self.returns
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.returns.column(j)
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn n_tickers(&self) -> usize {
        self.tickers.len()
    }
}

fn check_labels(tickers: &[String], dates: &[NaiveDate], m: &Matrix) -> Result<()> {
    if m.rows() != dates.len() || m.cols() != tickers.len() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} values for {} dates and {} tickers",
            m.rows(),
            m.cols(),
            dates.len(),
            tickers.len()
        )));
    }
    let mut seen = HashSet::new();
    for t in tickers {
        if !seen.insert(t.as_str()) {
            return Err(Error::DuplicateTicker(t.clone()));
        }
    }
    for (i, w) in dates.windows(2).enumerate() {
        if w[1] <= w[0] {
            return Err(Error::NonIncreasingDates {
                line: i + 3,
                date: w[1].to_string(),
                previous: w[0].to_string(),
            });
        }
    }
    Ok(())
}

pub(crate) fn parse_date(s: &str, line: usize) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|_| Error::MalformedDate {
        line,
        value: s.to_string(),
    })
}

struct RawTable {
    tickers: Vec<String>,
    lines: Vec<usize>,
    dates: Vec<NaiveDate>,
    cells: Vec<Vec<Option<f64>>>,
}

/// Reads a wide `date,<ticker>...` CSV. Empty cells become `None`.
fn read_wide<R: Read>(source: R) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let header = rdr.headers()?.clone();
    if header.get(0) != Some("date") {
        return Err(Error::Malformed(
            "line 1: first column must be named \"date\"".into(),
        ));
    }
    let tickers: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut seen = HashSet::new();
    for t in &tickers {
        if t.is_empty() {
            return Err(Error::Malformed("line 1: empty ticker name".into()));
        }
        if !seen.insert(t.as_str()) {
            return Err(Error::DuplicateTicker(t.clone()));
        }
    }

    let mut table = RawTable {
        tickers,
        lines: Vec::new(),
        dates: Vec::new(),
        cells: Vec::new(),
    };
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let date = parse_date(&record[0], line)?;
        if let Some(prev) = table.dates.last() {
            if date <= *prev {
                return Err(Error::NonIncreasingDates {
                    line,
                    date: date.to_string(),
                    previous: prev.to_string(),
                });
            }
        }
        let mut row = Vec::with_capacity(table.tickers.len());
        for (j, cell) in record.iter().skip(1).enumerate() {
            if cell.is_empty() {
                row.push(None);
                continue;
            }
            let v: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| Error::MalformedNumber {
                    line,
                    column: table.tickers[j].clone(),
                    value: cell.to_string(),
                })?;
            row.push(Some(v));
        }
        table.lines.push(line);
        table.dates.push(date);
        table.cells.push(row);
    }
    Ok(table)
}

/// Loads a price panel from the wide CSV format.
///
/// Rows where no ticker has a price are not part of the common calendar and
/// are dropped before the gap policy is applied.
pub fn load_prices<R: Read>(source: R, policy: GapPolicy) -> Result<PricePanel> {
    let mut raw = read_wide(source)?;

    let keep: Vec<bool> = raw
        .cells
        .iter()
        .map(|r| r.iter().any(Option::is_some))
        .collect();
    let mut k = keep.iter();
    raw.lines.retain(|_| *k.next().unwrap());
    let mut k = keep.iter();
    raw.dates.retain(|_| *k.next().unwrap());
    let mut k = keep.iter();
    raw.cells.retain(|_| *k.next().unwrap());

    let n = raw.tickers.len();
    let t = raw.dates.len();
    if n < 2 || t < 2 {
        return Err(Error::InsufficientData(format!(
            "price panel has {t} dates and {n} tickers, need at least 2 of each"
        )));
    }

    let mut data = vec![0.0; t * n];
    for j in 0..n {
        let mut last: Option<f64> = None;
        for i in 0..t {
            let line = raw.lines[i];
            let column = &raw.tickers[j];
            let v = match (raw.cells[i][j], policy, last) {
                (Some(v), _, _) => {
                    if !(v > 0.0) {
                        return Err(Error::NonPositivePrice {
                            line,
                            column: column.clone(),
                            value: v,
                        });
                    }
                    v
                }
                (None, GapPolicy::Reject, _) => {
                    return Err(Error::MissingValue {
                        line,
                        column: column.clone(),
                    })
                }
                (None, GapPolicy::ForwardFill, Some(prev)) => prev,
                (None, GapPolicy::ForwardFill, None) => {
                    return Err(Error::LeadingGap {
                        line,
                        column: column.clone(),
                    })
                }
            };
            last = Some(v);
            data[i * n + j] = v;
        }
    }
    PricePanel::new(raw.tickers, raw.dates, Matrix::new(t, n, data)?)
}

/// `R(t) = ln P(t) − ln P(t−1)`, dated at the later day.
pub fn to_returns(panel: &PricePanel) -> Result<ReturnPanel> {
    let t = panel.n_dates();
    let n = panel.n_tickers();
    if t < 3 {
        return Err(Error::InsufficientData(format!(
            "{t} price rows give fewer than 2 returns"
        )));
    }
    let p = panel.prices();
    let mut out = Matrix::zeros(t - 1, n);
    for i in 0..t - 1 {
        for j in 0..n {
            out[(i, j)] = p[(i + 1, j)].ln() - p[(i, j)].ln();
        }
    }
    ReturnPanel::new(panel.tickers.clone(), panel.dates[1..].to_vec(), out)
}

/// Reads a return panel stored in the same wide layout; no gaps allowed.
pub fn load_returns<R: Read>(source: R) -> Result<ReturnPanel> {
    let raw = read_wide(source)?;
    let n = raw.tickers.len();
    let t = raw.dates.len();
    let mut data = Vec::with_capacity(t * n);
    for (i, row) in raw.cells.iter().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            data.push(cell.ok_or_else(|| Error::MissingValue {
                line: raw.lines[i],
                column: raw.tickers[j].clone(),
            })?);
        }
    }
    if n < 1 {
        return Err(Error::InsufficientData("return file has no tickers".into()));
    }
    ReturnPanel::new(raw.tickers, raw.dates, Matrix::new(t, n, data)?)
}

/// Writes a wide `date,<ticker>...` table using shortest round-trip float
/// formatting, so reading it back reproduces the values bit for bit.
pub fn write_wide<W: Write>(
    sink: W,
    tickers: &[String],
    dates: &[NaiveDate],
    values: &Matrix,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec!["date".to_string()];
    header.extend(tickers.iter().cloned());
    w.write_record(&header)?;
    for (i, d) in dates.iter().enumerate() {
        let mut rec = vec![d.to_string()];
        rec.extend(values.row(i).iter().map(|v| format!("{v:?}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_returns<W: Write>(sink: W, panel: &ReturnPanel) -> Result<()> {
    write_wide(sink, &panel.tickers, &panel.dates, &panel.returns)
}

pub fn write_prices<W: Write>(sink: W, panel: &PricePanel) -> Result<()> {
    write_wide(sink, &panel.tickers, &panel.dates, &panel.prices)
}
