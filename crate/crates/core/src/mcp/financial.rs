//! Price lookup and trend tools over a market snapshot.

use std::sync::Arc;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::market::{MarketSnapshot, PriceRecord, DEFAULT_PRICE_DATE};
use super::protocol::RpcError;
use super::registry::{ParamKind, ParamSpec, Tool, ToolOutput};

/// Fixed confidence attached to snapshot-backed answers.
pub const FINANCIAL_UNCERTAINTY: f64 = 0.01;
pub const DEFAULT_TREND_DAYS: u64 = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendRecord {
    pub symbol: String,
    pub trend: String,
    pub change_pct: f64,
}

/// Trend over a sequence of closes: "up" only if the last is strictly above
/// the first.
pub fn trend_of(symbol: &str, closes: &[f64]) -> Option<TrendRecord> {
    let (&first, &last) = (closes.first()?, closes.last()?);
    if closes.len() < 2 || first <= 0.0 {
        return None;
    }
    Some(TrendRecord {
        symbol: symbol.to_owned(),
        trend: if last > first { "up" } else { "down" }.to_owned(),
        change_pct: 100.0 * (last - first) / first,
    })
}

#[derive(Debug, Clone)]
pub struct FinancialData {
    snapshot: Arc<MarketSnapshot>,
}

fn parse_date(s: &str) -> Result<NaiveDate, RpcError> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map_err(|_| RpcError::invalid_params(format!("date {s:?} is not YYYY-MM-DD")))
}

impl FinancialData {
    pub fn new(snapshot: Arc<MarketSnapshot>) -> Self {
        Self { snapshot }
    }

    pub fn snapshot(&self) -> &MarketSnapshot {
        &self.snapshot
    }

    fn series(&self, symbol: &str) -> Result<&std::collections::BTreeMap<String, PriceRecord>, RpcError> {
        self.snapshot.prices.get(symbol).ok_or_else(|| {
            RpcError::invalid_params(format!("unknown symbol {symbol:?}"))
                .with_data(json!({ "missing": "symbol", "symbol": symbol }))
        })
    }

    pub fn get_price(&self, symbol: &str, date: &str) -> Result<&PriceRecord, RpcError> {
        self.series(symbol)?.get(date).ok_or_else(|| {
            RpcError::invalid_params(format!("no {symbol} record for date {date:?}"))
                .with_data(json!({ "missing": "date", "symbol": symbol, "date": date }))
        })
    }

    /// Trend over the `days` calendar days ending at `end` (default: the
    /// symbol's last date), inclusive.
    pub fn get_trend(&self, symbol: &str, days: u64, end: Option<&str>) -> Result<TrendRecord, RpcError> {
        let series = self.series(symbol)?;
        let end = match end {
            Some(e) => parse_date(e)?,
            None => match series.keys().next_back() {
                Some(last) => parse_date(last)?,
                None => return Err(RpcError::invalid_params(format!("{symbol} has no records"))),
            },
        };
        let span = i64::try_from(days).unwrap_or(i64::MAX / 2).min(100_000);
        let start = end - Duration::days(span - 1);
        let mut closes = Vec::new();
        for (date, rec) in series {
            let d = parse_date(date)?;
            if d >= start && d <= end {
                closes.push(rec.close);
            }
        }
        trend_of(symbol, &closes).ok_or_else(|| {
            RpcError::invalid_params(format!(
                "{symbol} has {} trading dates in the {days}-day window ending {end}; need 2",
                closes.len()
            ))
            .with_data(json!({ "symbol": symbol, "available": closes.len() }))
        })
    }

    fn symbol_enum(&self) -> Vec<Value> {
        self.snapshot.symbols().map(|s| json!(s)).collect()
    }
}

/// `get_stock_price(symbol, date = "2024-01-15")` returning `{price, timestamp}`.
pub struct StockPriceTool {
    data: FinancialData,
    params: Vec<ParamSpec>,
}

impl StockPriceTool {
    pub const NAME: &'static str = "get_stock_price";

    pub fn new(data: FinancialData) -> Self {
        let params = vec![
            ParamSpec::required("symbol", ParamKind::String).one_of(data.symbol_enum()),
            ParamSpec::optional("date", ParamKind::String, json!(DEFAULT_PRICE_DATE)),
        ];
        Self { data, params }
    }
}

impl Tool for StockPriceTool {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn params(&self) -> &[ParamSpec] {
        &self.params
    }

    fn call(&self, params: &Map<String, Value>) -> Result<ToolOutput, RpcError> {
        let symbol = params["symbol"].as_str().unwrap_or_default();
        let date = params["date"].as_str().unwrap_or(DEFAULT_PRICE_DATE);
        let rec = self.data.get_price(symbol, date)?;
        let mut result = Map::new();
        result.insert("price".into(), json!(rec.close));
        if let Some(ts) = &rec.timestamp {
            result.insert("timestamp".into(), json!(ts));
        }
        Ok(ToolOutput {
            result: Value::Object(result),
            uncertainty: Some(FINANCIAL_UNCERTAINTY),
        })
    }
}

/// `get_trend(symbol, days = 30, end?)`.
pub struct TrendTool {
    data: FinancialData,
    params: Vec<ParamSpec>,
}

impl TrendTool {
    pub const NAME: &'static str = "get_trend";

    pub fn new(data: FinancialData) -> Self {
        let params = vec![
            ParamSpec::required("symbol", ParamKind::String).one_of(data.symbol_enum()),
            ParamSpec::optional("days", ParamKind::Integer, json!(DEFAULT_TREND_DAYS)).at_least(1.0),
            ParamSpec {
                required: false,
                ..ParamSpec::required("end", ParamKind::String)
            },
        ];
        Self { data, params }
    }
}

impl Tool for TrendTool {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn params(&self) -> &[ParamSpec] {
        &self.params
    }

    fn call(&self, params: &Map<String, Value>) -> Result<ToolOutput, RpcError> {
        let symbol = params["symbol"].as_str().unwrap_or_default();
        let days = params["days"].as_u64().unwrap_or(DEFAULT_TREND_DAYS);
        let end = params.get("end").and_then(Value::as_str);
        let t = self.data.get_trend(symbol, days, end)?;
        Ok(ToolOutput {
            result: serde_json::to_value(t).map_err(|e| RpcError::internal(e.to_string()))?,
            uncertainty: Some(FINANCIAL_UNCERTAINTY),
        })
    }
}
