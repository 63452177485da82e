//! Loading daily closing prices and sector metadata, and aligning price
//! series onto a shared trading-day grid.
//!
//! Price files are long-format CSV (`date,ticker,close`), one observation per
//! row. Missing quotes are never filled: the aligned panel stores them as
//! absent so that downstream sign assignment can leave those days unassigned.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_MIN_COVERAGE: f64 = 0.6;

/// Supported price-file layouts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriceFormat {
    /// `date,ticker,close` rows, ISO-8601 dates, optional header.
    #[default]
    DateTickerClose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    pub ticker: String,
    /// Strictly increasing dates, positive prices.
    pub observations: Vec<(NaiveDate, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorEntry {
    pub name: String,
    pub sector: String,
    pub remarks: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SectorTable {
    pub entries: BTreeMap<String, SectorEntry>,
}

impl SectorTable {
    pub fn sector(&self, ticker: &str) -> Option<&str> {
        self.entries.get(ticker).map(|e| e.sector.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Prices of N stocks on T+1 shared trading days. Row order follows `tickers`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketPanel {
    tickers: Vec<String>,
    dates: Vec<NaiveDate>,
    prices: Vec<Option<f64>>,
    sectors: BTreeMap<String, String>,
}

/// A series removed by [`align_panel`] for insufficient coverage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedSeries {
    pub ticker: String,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub panel: MarketPanel,
    pub dropped: Vec<DroppedSeries>,
}

impl MarketPanel {
    pub fn n_stocks(&self) -> usize {
        self.tickers.len()
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn sectors(&self) -> &BTreeMap<String, String> {
        &self.sectors
    }

    pub fn price(&self, stock: usize, day: usize) -> Option<f64> {
        self.prices[stock * self.dates.len() + day]
    }

    pub fn row(&self, stock: usize) -> &[Option<f64>] {
        let t = self.dates.len();
        &self.prices[stock * t..(stock + 1) * t]
    }

    /// Attach sector labels for the tickers present in `table`.
    pub fn with_sectors(mut self, table: &SectorTable) -> Self {
        self.sectors = self
            .tickers
            .iter()
            .filter_map(|t| table.sector(t).map(|s| (t.clone(), s.to_string())))
            .collect();
        self
    }

    /// The present observations of every row, as series.
    pub fn series(&self) -> Vec<PriceSeries> {
        (0..self.n_stocks())
            .map(|i| PriceSeries {
                ticker: self.tickers[i].clone(),
                observations: self
                    .row(i)
                    .iter()
                    .zip(&self.dates)
                    .filter_map(|(p, d)| p.map(|p| (*d, p)))
                    .collect(),
            })
            .collect()
    }
}

fn csv_reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input)
}

fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

fn csv_error(err: csv::Error) -> Error {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    Error::parse(line, err.to_string())
}

pub fn load_prices(path: impl AsRef<Path>, format: PriceFormat) -> Result<Vec<PriceSeries>> {
    let file = std::fs::File::open(path)?;
    read_prices(file, format)
}

pub fn read_prices<R: Read>(input: R, format: PriceFormat) -> Result<Vec<PriceSeries>> {
    let PriceFormat::DateTickerClose = format;
    let mut by_ticker: BTreeMap<String, BTreeMap<NaiveDate, f64>> = BTreeMap::new();
    let mut first = true;
    for record in csv_reader(input).records() {
        let record = record.map_err(csv_error)?;
        let line = record_line(&record);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != 3 {
            return Err(Error::parse(
                line,
                format!("expected 3 fields (date,ticker,close), found {}", record.len()),
            ));
        }
        let is_header = first && record[0].eq_ignore_ascii_case("date");
        first = false;
        if is_header {
            continue;
        }
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d")
            .map_err(|e| Error::parse(line, format!("bad date {:?}: {e}", &record[0])))?;
        let ticker = record[1].to_string();
        if ticker.is_empty() {
            return Err(Error::parse(line, "empty ticker"));
        }
        let price: f64 = record[2]
            .parse()
            .map_err(|e| Error::parse(line, format!("bad price {:?}: {e}", &record[2])))?;
        if !price.is_finite() {
            return Err(Error::parse(line, format!("non-finite price {:?}", &record[2])));
        }
        if price <= 0.0 {
            return Err(Error::NonPositivePrice {
                ticker,
                date: date.to_string(),
                price,
            });
        }
        let rows = by_ticker.entry(ticker.clone()).or_default();
        if rows.insert(date, price).is_some() {
            return Err(Error::DuplicateObservation {
                ticker,
                date: date.to_string(),
            });
        }
    }
    Ok(by_ticker
        .into_iter()
        .map(|(ticker, rows)| PriceSeries {
            ticker,
            observations: rows.into_iter().collect(),
        })
        .collect())
}

/// Place `series` on the union of their dates.
///
/// Coverage is measured against the union of all input dates; after dropping
/// under-covered series the grid is rebuilt from the survivors only, which
/// makes re-alignment of a panel's own series a no-op.
pub fn align_panel(series: &[PriceSeries], min_coverage: f64) -> Result<Alignment> {
    if !(min_coverage > 0.0 && min_coverage <= 1.0) {
        return Err(Error::Precondition(format!(
            "min_coverage must be in (0,1], got {min_coverage}"
        )));
    }
    if series.len() < 2 {
        return Err(Error::TooFewSeries(series.len()));
    }
    let mut seen = BTreeSet::new();
    for s in series {
        if !seen.insert(s.ticker.as_str()) {
            return Err(Error::Precondition(format!("ticker {} appears twice", s.ticker)));
        }
        if s.observations.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::Precondition(format!(
                "dates of {} are not strictly increasing",
                s.ticker
            )));
        }
    }

    let all_dates: BTreeSet<NaiveDate> = series
        .iter()
        .flat_map(|s| s.observations.iter().map(|(d, _)| *d))
        .collect();
    let total = all_dates.len().max(1) as f64;

    let mut kept: Vec<&PriceSeries> = Vec::new();
    let mut dropped = Vec::new();
    for s in series {
        let coverage = s.observations.len() as f64 / total;
        if coverage >= min_coverage {
            kept.push(s);
        } else {
            dropped.push(DroppedSeries {
                ticker: s.ticker.clone(),
                coverage,
            });
        }
    }
    if kept.len() < 2 {
        return Err(Error::TooFewSeries(kept.len()));
    }
    kept.sort_by(|a, b| a.ticker.cmp(&b.ticker));
    dropped.sort_by(|a, b| a.ticker.cmp(&b.ticker));

    let dates: Vec<NaiveDate> = kept
        .iter()
        .flat_map(|s| s.observations.iter().map(|(d, _)| *d))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if dates.len() < 2 {
        return Err(Error::TooFewDates(dates.len()));
    }
    let position: BTreeMap<NaiveDate, usize> =
        dates.iter().enumerate().map(|(i, d)| (*d, i)).collect();

    let t = dates.len();
    let mut prices = vec![None; kept.len() * t];
    for (row, s) in kept.iter().enumerate() {
        for (d, p) in &s.observations {
            prices[row * t + position[d]] = Some(*p);
        }
    }

    Ok(Alignment {
        panel: MarketPanel {
            tickers: kept.iter().map(|s| s.ticker.clone()).collect(),
            dates,
            prices,
            sectors: BTreeMap::new(),
        },
        dropped,
    })
}

pub fn load_sectors(path: impl AsRef<Path>) -> Result<SectorTable> {
    let file = std::fs::File::open(path)?;
    read_sectors(file)
}

pub fn read_sectors<R: Read>(input: R) -> Result<SectorTable> {
    let mut entries = BTreeMap::new();
    let mut first = true;
    for record in csv_reader(input).records() {
        let record = record.map_err(csv_error)?;
        let line = record_line(&record);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if !(3..=4).contains(&record.len()) {
            return Err(Error::parse(
                line,
                format!(
                    "expected ticker,name,sector[,remarks], found {} fields",
                    record.len()
                ),
            ));
        }
        let is_header = first && record[0].eq_ignore_ascii_case("ticker");
        first = false;
        if is_header {
            continue;
        }
        let ticker = record[0].to_string();
        if ticker.is_empty() {
            return Err(Error::parse(line, "empty ticker"));
        }
        if record[2].is_empty() {
            return Err(Error::parse(line, format!("empty sector for {ticker}")));
        }
        let remarks = record
            .get(3)
            .filter(|r| !r.is_empty())
            .map(str::to_string);
        let entry = SectorEntry {
            name: record[1].to_string(),
            sector: record[2].to_string(),
            remarks,
        };
        if entries.insert(ticker.clone(), entry).is_some() {
            return Err(Error::parse(line, format!("duplicate ticker {ticker}")));
        }
    }
    Ok(SectorTable { entries })
}
