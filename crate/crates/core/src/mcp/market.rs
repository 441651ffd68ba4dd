//! Daily OHLCV market snapshots and their deterministic generator.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{Datelike, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::McpError;

pub const DEFAULT_MARKET_SEED: u64 = 2024;
pub const DEFAULT_PRICE_DATE: &str = "2024-01-15";

/// Symbols with the close each walk is anchored to on the default date.
pub const SYMBOL_ANCHORS: [(&str, f64); 10] = [
    ("AAPL", 150.25),
    ("MSFT", 390.00),
    ("GOOGL", 142.50),
    ("AMZN", 153.75),
    ("TSLA", 218.90),
    ("META", 370.10),
    ("NVDA", 547.10),
    ("JPM", 171.20),
    ("V", 268.40),
    ("JNJ", 158.30),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceRecord {
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: u64,
    /// Quote time reported alongside the price.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

impl PriceRecord {
    pub fn is_consistent(&self) -> bool {
        let positive = self.open > 0.0 && self.high > 0.0 && self.low > 0.0 && self.close > 0.0;
        positive && self.low <= self.open && self.low <= self.close && self.open <= self.high && self.close <= self.high
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MarketSnapshot {
    /// symbol -> ISO date -> record.
    pub prices: BTreeMap<String, BTreeMap<String, PriceRecord>>,
}

impl MarketSnapshot {
    pub fn symbols(&self) -> impl Iterator<Item = &str> {
        self.prices.keys().map(String::as_str)
    }

    pub fn record(&self, symbol: &str, date: &str) -> Option<&PriceRecord> {
        self.prices.get(symbol)?.get(date)
    }

    pub fn validate(&self) -> Result<(), McpError> {
        for (sym, days) in &self.prices {
            for (date, rec) in days {
                NaiveDate::parse_from_str(date, "%Y-%m-%d")
                    .map_err(|e| McpError::Config(format!("{sym}: bad date {date:?}: {e}")))?;
                if !rec.is_consistent() {
                    return Err(McpError::Config(format!("{sym} {date}: inconsistent OHLC record")));
                }
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, McpError> {
        let snap: MarketSnapshot = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        snap.validate()?;
        Ok(snap)
    }

    pub fn save(&self, path: &Path) -> Result<(), McpError> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }
}

/// January 2024 weekdays, skipping the New Year holiday.
pub fn trading_days() -> Vec<NaiveDate> {
    let start = NaiveDate::from_ymd_opt(2024, 1, 2).expect("valid date");
    start
        .iter_days()
        .take_while(|d| d.month() == 1)
        .filter(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun))
        .collect()
}

fn cents(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Bounded random walk around the anchored close, rounded to cents.
pub fn generate_snapshot(seed: u64) -> MarketSnapshot {
    let days = trading_days();
    let anchor_date = NaiveDate::parse_from_str(DEFAULT_PRICE_DATE, "%Y-%m-%d").expect("valid date");
    let anchor_idx = days
        .iter()
        .position(|d| *d == anchor_date)
        .expect("anchor is a trading day");
    let mut prices = BTreeMap::new();
    for (stream, (symbol, anchor)) in SYMBOL_ANCHORS.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream as u64);
        let mut closes = vec![0.0; days.len()];
        closes[anchor_idx] = *anchor;
        for i in anchor_idx + 1..days.len() {
            closes[i] = cents(closes[i - 1] * (1.0 + rng.random_range(-0.02..0.02)));
        }
        for i in (0..anchor_idx).rev() {
            closes[i] = cents(closes[i + 1] / (1.0 + rng.random_range(-0.02..0.02)));
        }
        let mut series = BTreeMap::new();
        for (day, &close) in days.iter().zip(&closes) {
            let open = cents(close * (1.0 + rng.random_range(-0.01..0.01)));
            let high = cents(open.max(close) * (1.0 + rng.random_range(0.0..0.01))).max(open.max(close));
            let low = cents(open.min(close) * (1.0 - rng.random_range(0.0..0.01))).min(open.min(close));
            let date = day.format("%Y-%m-%d").to_string();
            series.insert(
                date.clone(),
                PriceRecord {
                    open,
                    high,
                    low,
                    close,
                    volume: rng.random_range(1_000_000..50_000_000u64),
                    timestamp: Some(format!("{date}T16:00:00-05:00")),
                },
            );
        }
        prices.insert((*symbol).to_owned(), series);
    }
    MarketSnapshot { prices }
}
