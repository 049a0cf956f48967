//! Event-record and market-data ingestion: streaming CSV parsing with
//! row-level error reporting, monthly sign-split aggregation into the
//! two-layer panel, log returns, realized volatility, and design assembly.

use std::collections::BTreeMap;
use std::fmt;
use std::io;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DesignTable, RegressionDesign};
use crate::networks::MultilayerPanel;

/// Layer index of conflictual interactions (absolute negative intensities).
pub const CONFLICTUAL_LAYER: usize = 0;
/// Layer index of cooperative interactions (positive intensities).
pub const COOPERATIVE_LAYER: usize = 1;

/// Fraction of malformed rows beyond which parsing aborts.
const MALFORMED_ABORT_FRACTION: f64 = 0.10;

/// A calendar month, ordered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MonthKey {
    pub year: i32,
    pub month: u32,
}

impl MonthKey {
    pub fn from_date(d: NaiveDate) -> Self {
        Self {
            year: d.year(),
            month: d.month(),
        }
    }

    fn linear(&self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    pub fn offset_from(&self, start: MonthKey) -> i64 {
        self.linear() - start.linear()
    }

    pub fn plus(&self, months: i64) -> MonthKey {
        let lin = self.linear() + months;
        MonthKey {
            year: lin.div_euclid(12) as i32,
            month: (lin.rem_euclid(12) + 1) as u32,
        }
    }
}

impl fmt::Display for MonthKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for MonthKey {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (y, m) = s
            .split_once('-')
            .ok_or_else(|| Error::Config(format!("bad month '{s}', expected YYYY-MM")))?;
        Ok(MonthKey {
            year: y
                .parse()
                .map_err(|e| Error::Config(format!("bad year in '{s}': {e}")))?,
            month: m
                .parse()
                .map_err(|e| Error::Config(format!("bad month in '{s}': {e}")))?,
        })
    }
}

impl Serialize for MonthKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for MonthKey {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Dates are civil dates; the format is explicit, never guessed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DateFormat {
    /// `dd-mm-yyyy`
    DayFirst,
    /// `yyyy-mm-dd`
    Iso,
}

impl DateFormat {
    fn parse(&self, raw: &str) -> Option<NaiveDate> {
        match self {
            DateFormat::DayFirst => NaiveDate::parse_from_str(raw.trim(), "%d-%m-%Y").ok(),
            DateFormat::Iso => NaiveDate::parse_from_str(raw.trim(), "%Y-%m-%d").ok(),
        }
    }
}

/// Column names and conventions of an event CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EventSchema {
    pub date_column: String,
    pub cameo_column: String,
    pub intensity_column: String,
    pub source_column: String,
    pub target_column: String,
    pub date_format: DateFormat,
    /// Country-name aliases mapped to codes; unmapped names pass through
    /// verbatim (membership is enforced at aggregation time).
    pub country_aliases: BTreeMap<String, String>,
}

impl EventSchema {
    pub fn default_columns(date_format: DateFormat) -> Self {
        Self {
            date_column: "date".into(),
            cameo_column: "cameo".into(),
            intensity_column: "intensity".into(),
            source_column: "source".into(),
            target_column: "target".into(),
            date_format,
            country_aliases: g7_aliases(),
        }
    }

    fn resolve_country(&self, raw: &str) -> String {
        let trimmed = raw.trim();
        self.country_aliases
            .get(trimmed)
            .cloned()
            .unwrap_or_else(|| trimmed.to_string())
    }
}

pub fn g7_aliases() -> BTreeMap<String, String> {
    [
        ("Canada", "CA"),
        ("France", "FR"),
        ("Germany", "DE"),
        ("Italy", "IT"),
        ("Japan", "JP"),
        ("United Kingdom", "UK"),
        ("Great Britain", "UK"),
        ("United States", "US"),
        ("United States of America", "US"),
    ]
    .into_iter()
    .map(|(a, b)| (a.to_string(), b.to_string()))
    .collect()
}

pub fn g7_country_order() -> Vec<String> {
    ["CA", "FR", "DE", "IT", "JP", "UK", "US"]
        .into_iter()
        .map(str::to_string)
        .collect()
}

/// One validated event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub date: NaiveDate,
    pub cameo_code: u32,
    pub intensity: f64,
    pub source: String,
    pub target: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RowError {
    /// 1-based line number in the file (header is line 1).
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct ParseOutcome {
    pub records: Vec<EventRecord>,
    pub errors: Vec<RowError>,
}

/// Streaming parse of an event CSV. Malformed rows are collected, not
/// fatal, unless they exceed 10% of the data rows.
pub fn parse_events(reader: impl io::Read, schema: &EventSchema) -> Result<ParseOutcome> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Config(format!("event CSV is missing a '{name}' column")))
    };
    let date_idx = col(&schema.date_column)?;
    let cameo_idx = col(&schema.cameo_column)?;
    let intensity_idx = col(&schema.intensity_column)?;
    let source_idx = col(&schema.source_column)?;
    let target_idx = col(&schema.target_column)?;

    let mut records = Vec::new();
    let mut errors = Vec::new();
    let mut total_rows = 0usize;
    for (i, row) in rdr.records().enumerate() {
        total_rows += 1;
        let line = i + 2;
        let fail = |message: String, errors: &mut Vec<RowError>| {
            errors.push(RowError { line, message });
        };
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                fail(format!("unreadable row: {e}"), &mut errors);
                continue;
            }
        };
        let field = |idx: usize| row.get(idx).unwrap_or_default();
        let Some(date) = schema.date_format.parse(field(date_idx)) else {
            fail(
                format!("unparseable date '{}'", field(date_idx)),
                &mut errors,
            );
            continue;
        };
        let cameo_code = match field(cameo_idx).parse::<u32>() {
            Ok(c) => c,
            Err(e) => {
                fail(format!("bad CAMEO code '{}': {e}", field(cameo_idx)), &mut errors);
                continue;
            }
        };
        let intensity = match field(intensity_idx).parse::<f64>() {
            Ok(v) => v,
            Err(e) => {
                fail(
                    format!("bad intensity '{}': {e}", field(intensity_idx)),
                    &mut errors,
                );
                continue;
            }
        };
        if !(-10.0..=10.0).contains(&intensity) {
            fail(format!("intensity {intensity} outside [-10, 10]"), &mut errors);
            continue;
        }
        records.push(EventRecord {
            date,
            cameo_code,
            intensity,
            source: schema.resolve_country(field(source_idx)),
            target: schema.resolve_country(field(target_idx)),
        });
    }
    if total_rows > 0 && errors.len() as f64 > MALFORMED_ABORT_FRACTION * total_rows as f64 {
        return Err(Error::TooManyMalformedRows {
            context: "event CSV".into(),
            count: errors.len(),
            total: total_rows,
        });
    }
    Ok(ParseOutcome { records, errors })
}

/// Write records in the schema's column layout; `parse_events` reads them
/// back identically.
pub fn serialize_events(
    writer: impl io::Write,
    records: &[EventRecord],
    schema: &EventSchema,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record([
        schema.date_column.as_str(),
        schema.cameo_column.as_str(),
        schema.intensity_column.as_str(),
        schema.source_column.as_str(),
        schema.target_column.as_str(),
    ])?;
    for r in records {
        let date = match schema.date_format {
            DateFormat::DayFirst => r.date.format("%d-%m-%Y").to_string(),
            DateFormat::Iso => r.date.format("%Y-%m-%d").to_string(),
        };
        wtr.write_record([
            date,
            r.cameo_code.to_string(),
            format!("{}", r.intensity),
            r.source.clone(),
            r.target.clone(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    #[default]
    StandardRow,
    MaxRow,
    None,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregationConfig {
    /// Row/column order of the panel matrices.
    pub country_order: Vec<String>,
    pub normalization: Normalization,
    /// Inclusive month range; defaults to the span of retained events.
    pub start_month: Option<MonthKey>,
    pub end_month: Option<MonthKey>,
}

impl AggregationConfig {
    pub fn new(country_order: Vec<String>) -> Self {
        Self {
            country_order,
            normalization: Normalization::StandardRow,
            start_month: None,
            end_month: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AggregationReport {
    pub events_total: usize,
    pub events_domestic_dropped: usize,
    pub events_unknown_country: usize,
    pub events_out_of_range: usize,
    pub events_zero_intensity: usize,
    pub events_retained: usize,
    pub per_month_counts: Vec<(String, usize)>,
}

/// Monthly sign-split aggregation: positive intensities accumulate into the
/// cooperative layer, absolute negative intensities into the conflictual
/// layer (keeping both layers non-negative as the model requires). Domestic
/// events (source equals target) are excluded. Months without events yield
/// zero matrices and surface downstream as A1 violations.
pub fn aggregate_to_layers(
    events: &[EventRecord],
    config: &AggregationConfig,
) -> Result<(MultilayerPanel, AggregationReport)> {
    let n = config.country_order.len();
    if n == 0 {
        return Err(Error::Config("aggregation needs a non-empty country order".into()));
    }
    let mut seen = std::collections::BTreeSet::new();
    for c in &config.country_order {
        if !seen.insert(c) {
            return Err(Error::Config(format!("duplicate country code '{c}'")));
        }
    }
    let index: BTreeMap<&str, usize> = config
        .country_order
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();

    let mut report = AggregationReport {
        events_total: events.len(),
        events_domestic_dropped: 0,
        events_unknown_country: 0,
        events_out_of_range: 0,
        events_zero_intensity: 0,
        events_retained: 0,
        per_month_counts: Vec::new(),
    };

    // pass 1: classify and find the month span
    let mut classified: Vec<(usize, usize, MonthKey, f64)> = Vec::new();
    let mut min_month: Option<MonthKey> = None;
    let mut max_month: Option<MonthKey> = None;
    for e in events {
        if e.source == e.target {
            report.events_domestic_dropped += 1;
            continue;
        }
        let (Some(&si), Some(&ti)) = (index.get(e.source.as_str()), index.get(e.target.as_str()))
        else {
            report.events_unknown_country += 1;
            continue;
        };
        let month = MonthKey::from_date(e.date);
        if let Some(start) = config.start_month {
            if month < start {
                report.events_out_of_range += 1;
                continue;
            }
        }
        if let Some(end) = config.end_month {
            if month > end {
                report.events_out_of_range += 1;
                continue;
            }
        }
        if e.intensity == 0.0 {
            report.events_zero_intensity += 1;
            continue;
        }
        min_month = Some(min_month.map_or(month, |m| m.min(month)));
        max_month = Some(max_month.map_or(month, |m| m.max(month)));
        classified.push((si, ti, month, e.intensity));
    }

    let start = config.start_month.or(min_month).ok_or_else(|| {
        Error::Config("no retained events and no explicit start month".into())
    })?;
    let end = config.end_month.or(max_month).ok_or_else(|| {
        Error::Config("no retained events and no explicit end month".into())
    })?;
    if end < start {
        return Err(Error::Config(format!("month range {start}..{end} is empty")));
    }
    let t_len = (end.offset_from(start) + 1) as usize;

    let mut conflictual = vec![DMatrix::zeros(n, n); t_len];
    let mut cooperative = vec![DMatrix::zeros(n, n); t_len];
    let mut month_counts = vec![0usize; t_len];
    for (si, ti, month, intensity) in classified {
        let t = month.offset_from(start) as usize;
        month_counts[t] += 1;
        report.events_retained += 1;
        if intensity > 0.0 {
            cooperative[t][(si, ti)] += intensity;
        } else {
            conflictual[t][(si, ti)] += -intensity;
        }
    }
    report.per_month_counts = month_counts
        .iter()
        .enumerate()
        .map(|(t, &c)| (start.plus(t as i64).to_string(), c))
        .collect();

    let panel = MultilayerPanel::from_matrices(vec![conflictual, cooperative])?;
    let panel = match config.normalization {
        Normalization::StandardRow => panel.standard_row_normalized(),
        Normalization::MaxRow => panel.max_row_normalized(),
        Normalization::None => panel,
    };
    Ok((panel, report))
}

/// `r_t = ln p_t - ln p_{t-1}` per series; input has `T + 1` price rows.
pub fn compute_log_returns(prices: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if prices.nrows() < 2 {
        return Err(Error::ShapeMismatch("log returns need at least two price rows".into()));
    }
    for r in 0..prices.nrows() {
        for c in 0..prices.ncols() {
            if !(prices[(r, c)] > 0.0) {
                return Err(Error::constraint(format!(
                    "non-positive price {} at row {r}, column {c}",
                    prices[(r, c)]
                )));
            }
        }
    }
    Ok(DMatrix::from_fn(prices.nrows() - 1, prices.ncols(), |t, j| {
        prices[(t + 1, j)].ln() - prices[(t, j)].ln()
    }))
}

/// Monthly realized volatility: the sum of squared daily returns within each
/// month. `months[t]` holds that month's daily returns (days x n).
pub fn compute_realized_volatility(months: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    if months.is_empty() {
        return Err(Error::ShapeMismatch("realized volatility needs at least one month".into()));
    }
    let n = months[0].ncols();
    let mut rv = DMatrix::zeros(months.len(), n);
    for (t, m) in months.iter().enumerate() {
        if m.nrows() == 0 {
            return Err(Error::Config(format!("month {t} has no daily returns")));
        }
        if m.ncols() != n {
            return Err(Error::ShapeMismatch(format!(
                "month {t} has {} series, expected {n}",
                m.ncols()
            )));
        }
        for j in 0..n {
            rv[(t, j)] = m.column(j).iter().map(|r| r * r).sum();
        }
    }
    Ok(rv)
}

/// A labeled block of monthly columns on a contiguous calendar.
#[derive(Debug, Clone)]
pub struct MonthlySeries {
    pub months: Vec<MonthKey>,
    pub values: DMatrix<f64>,
    pub names: Vec<String>,
}

impl MonthlySeries {
    fn check(&self, what: &str) -> Result<()> {
        if self.months.len() != self.values.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "{what}: {} month labels for {} rows",
                self.months.len(),
                self.values.nrows()
            )));
        }
        if self.names.len() != self.values.ncols() {
            return Err(Error::ShapeMismatch(format!(
                "{what}: {} names for {} columns",
                self.names.len(),
                self.values.ncols()
            )));
        }
        let mut gaps = Vec::new();
        for i in 1..self.months.len() {
            let expected = self.months[i - 1].plus(1);
            if self.months[i] != expected {
                let mut cursor = expected;
                while cursor < self.months[i] {
                    gaps.push(cursor.to_string());
                    cursor = cursor.plus(1);
                }
            }
        }
        if !gaps.is_empty() {
            return Err(Error::CalendarGaps(gaps));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AlignmentReport {
    pub rows_dropped_head: usize,
    pub start: String,
    pub end: String,
}

/// Join responses with (lagged) controls on the monthly calendar, trimming
/// the head by the maximum lag. The design row for month `t` carries each
/// control's value from `t - lag`.
pub fn assemble_design(
    responses: &MonthlySeries,
    controls: &MonthlySeries,
    lags: &BTreeMap<String, usize>,
    includes_intercept: bool,
) -> Result<(DesignTable, AlignmentReport)> {
    responses.check("responses")?;
    controls.check("controls")?;
    if responses.months != controls.months {
        let missing: Vec<String> = responses
            .months
            .iter()
            .filter(|m| !controls.months.contains(m))
            .map(|m| m.to_string())
            .chain(
                controls
                    .months
                    .iter()
                    .filter(|m| !responses.months.contains(m))
                    .map(|m| m.to_string()),
            )
            .collect();
        return Err(Error::CalendarGaps(missing));
    }
    for name in lags.keys() {
        if !controls.names.contains(name) {
            return Err(Error::Config(format!("lag specified for unknown control '{name}'")));
        }
    }
    let max_lag = controls
        .names
        .iter()
        .map(|n| lags.get(n).copied().unwrap_or(0))
        .max()
        .unwrap_or(0);
    let raw_t = responses.months.len();
    if raw_t <= max_lag + 1 {
        return Err(Error::ShapeMismatch(format!(
            "{raw_t} months cannot support a maximum lag of {max_lag}"
        )));
    }
    let t_len = raw_t - max_lag;
    let k = controls.names.len();
    let factors = DMatrix::from_fn(t_len, k, |t, m| {
        let lag = lags.get(&controls.names[m]).copied().unwrap_or(0);
        controls.values[(t + max_lag - lag, m)]
    });
    let resp = DMatrix::from_fn(t_len, responses.names.len(), |t, j| {
        responses.values[(t + max_lag, j)]
    });
    let design = RegressionDesign::new(factors, resp, includes_intercept)?;
    let months: Vec<MonthKey> = responses.months[max_lag..].to_vec();
    let table = DesignTable {
        design,
        period_labels: months.iter().map(|m| m.to_string()).collect(),
        factor_names: controls.names.clone(),
        response_names: responses.names.clone(),
    };
    let report = AlignmentReport {
        rows_dropped_head: max_lag,
        start: months[0].to_string(),
        end: months[months.len() - 1].to_string(),
    };
    Ok((table, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLE1_CSV: &str = "\
date,cameo,event,intensity,source,target
04-01-1998,111,Sign formal agreement,8,Japan,United States
05-01-1998,172,Impose administrative sanctions,-5,France,United Kingdom
";

    fn schema() -> EventSchema {
        EventSchema::default_columns(DateFormat::DayFirst)
    }

    #[test]
    fn parses_the_two_reference_events() {
        let out = parse_events(TABLE1_CSV.as_bytes(), &schema()).unwrap();
        assert!(out.errors.is_empty());
        assert_eq!(out.records.len(), 2);
        let first = &out.records[0];
        assert_eq!(first.date, NaiveDate::from_ymd_opt(1998, 1, 4).unwrap());
        assert_eq!(first.cameo_code, 111);
        assert_eq!(first.intensity, 8.0);
        assert_eq!(first.source, "JP");
        assert_eq!(first.target, "US");
        let second = &out.records[1];
        assert_eq!(second.intensity, -5.0);
        assert_eq!(second.source, "FR");
        assert_eq!(second.target, "UK");
    }

    #[test]
    fn intensity_out_of_range_is_a_row_error() {
        let csv = "date,cameo,intensity,source,target\n04-01-1998,111,11,Japan,United States\n\
                   05-01-1998,111,3,Japan,United States\n05-01-1998,111,2,Japan,Canada\n\
                   06-01-1998,111,1,Japan,Italy\n07-01-1998,111,1,Japan,France\n\
                   08-01-1998,111,1,Japan,Germany\n09-01-1998,111,1,Japan,Canada\n\
                   10-01-1998,111,1,Japan,Italy\n11-01-1998,111,1,Japan,France\n\
                   12-01-1998,111,1,Japan,Germany\n13-01-1998,111,1,Japan,Canada\n";
        let out = parse_events(csv.as_bytes(), &schema()).unwrap();
        assert_eq!(out.errors.len(), 1);
        assert_eq!(out.errors[0].line, 2);
        assert!(out.errors[0].message.contains("outside"));
        assert_eq!(out.records.len(), 10);
    }

    #[test]
    fn excessive_malformed_rows_abort() {
        let csv = "date,cameo,intensity,source,target\nbad,111,1,Japan,Canada\nalso-bad,1,1,a,b\n\
                   04-01-1998,111,1,Japan,Canada\n";
        let err = parse_events(csv.as_bytes(), &schema()).unwrap_err();
        assert!(matches!(err, Error::TooManyMalformedRows { count: 2, total: 3, .. }));
    }

    #[test]
    fn iso_dates_when_configured() {
        let csv = "date,cameo,intensity,source,target\n1998-01-04,111,8,Japan,United States\n";
        let mut iso = schema();
        iso.date_format = DateFormat::Iso;
        let out = parse_events(csv.as_bytes(), &iso).unwrap();
        assert_eq!(out.records[0].date, NaiveDate::from_ymd_opt(1998, 1, 4).unwrap());
        // same text under day-first is a row error, not silently guessed
        let day_first = parse_events(csv.as_bytes(), &schema()).unwrap_err();
        assert!(matches!(day_first, Error::TooManyMalformedRows { .. }));
    }

    #[test]
    fn serialize_then_parse_is_identity() {
        let out = parse_events(TABLE1_CSV.as_bytes(), &schema()).unwrap();
        let mut buf = Vec::new();
        serialize_events(&mut buf, &out.records, &schema()).unwrap();
        let back = parse_events(buf.as_slice(), &schema()).unwrap();
        assert_eq!(out.records, back.records);
    }

    fn raw_config() -> AggregationConfig {
        AggregationConfig {
            country_order: g7_country_order(),
            normalization: Normalization::None,
            start_month: None,
            end_month: None,
        }
    }

    #[test]
    fn table1_fixture_aggregation() {
        let out = parse_events(TABLE1_CSV.as_bytes(), &schema()).unwrap();
        let (panel, report) = aggregate_to_layers(&out.records, &raw_config()).unwrap();
        assert_eq!(panel.layers(), 2);
        assert_eq!(panel.periods(), 1);
        let order = g7_country_order();
        let jp = order.iter().position(|c| c == "JP").unwrap();
        let us = order.iter().position(|c| c == "US").unwrap();
        let fr = order.iter().position(|c| c == "FR").unwrap();
        let uk = order.iter().position(|c| c == "UK").unwrap();
        let coop = &panel.snapshot(COOPERATIVE_LAYER, 0).weights;
        let conf = &panel.snapshot(CONFLICTUAL_LAYER, 0).weights;
        assert_eq!(coop[(jp, us)], 8.0);
        assert_eq!(conf[(fr, uk)], 5.0);
        assert_eq!(coop.iter().filter(|&&v| v != 0.0).count(), 1);
        assert_eq!(conf.iter().filter(|&&v| v != 0.0).count(), 1);
        assert_eq!(report.events_retained, 2);
        assert_eq!(report.per_month_counts, vec![("1998-01".to_string(), 2)]);
    }

    #[test]
    fn domestic_events_excluded() {
        let mut records = parse_events(TABLE1_CSV.as_bytes(), &schema()).unwrap().records;
        records.push(EventRecord {
            date: NaiveDate::from_ymd_opt(1998, 1, 10).unwrap(),
            cameo_code: 42,
            intensity: 5.0,
            source: "US".into(),
            target: "US".into(),
        });
        let (panel, report) = aggregate_to_layers(&records, &raw_config()).unwrap();
        assert_eq!(report.events_domestic_dropped, 1);
        assert_eq!(report.events_retained, 2);
        let coop = &panel.snapshot(COOPERATIVE_LAYER, 0).weights;
        let us = g7_country_order().iter().position(|c| c == "US").unwrap();
        assert_eq!(coop[(us, us)], 0.0);
    }

    #[test]
    fn repeated_dyad_events_sum() {
        let jan = NaiveDate::from_ymd_opt(1998, 1, 15).unwrap();
        let mk = |intensity: f64| EventRecord {
            date: jan,
            cameo_code: 1,
            intensity,
            source: "JP".into(),
            target: "US".into(),
        };
        let (panel, _) = aggregate_to_layers(&[mk(3.0), mk(4.0)], &raw_config()).unwrap();
        let order = g7_country_order();
        let jp = order.iter().position(|c| c == "JP").unwrap();
        let us = order.iter().position(|c| c == "US").unwrap();
        assert_eq!(panel.snapshot(COOPERATIVE_LAYER, 0).weights[(jp, us)], 7.0);
    }

    #[test]
    fn unknown_and_out_of_range_counted() {
        let jan98 = NaiveDate::from_ymd_opt(1998, 1, 4).unwrap();
        let records = vec![
            EventRecord {
                date: jan98,
                cameo_code: 1,
                intensity: 2.0,
                source: "JP".into(),
                target: "US".into(),
            },
            EventRecord {
                date: jan98,
                cameo_code: 1,
                intensity: 2.0,
                source: "Narnia".into(),
                target: "US".into(),
            },
            EventRecord {
                date: NaiveDate::from_ymd_opt(2001, 5, 1).unwrap(),
                cameo_code: 1,
                intensity: 2.0,
                source: "JP".into(),
                target: "CA".into(),
            },
        ];
        let mut config = raw_config();
        config.start_month = Some("1998-01".parse().unwrap());
        config.end_month = Some("1998-02".parse().unwrap());
        let (panel, report) = aggregate_to_layers(&records, &config).unwrap();
        assert_eq!(report.events_unknown_country, 1);
        assert_eq!(report.events_out_of_range, 1);
        assert_eq!(panel.periods(), 2);
        // empty month yields a zero matrix (an A1 violation downstream)
        assert!(panel.snapshot(COOPERATIVE_LAYER, 1).is_zero());
        assert!(!panel.validate_assumptions(None).passed());
    }

    #[test]
    fn aggregation_conservation_and_permutation_invariance() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let order = g7_country_order();
        let mut records = Vec::new();
        for _ in 0..200 {
            let s = order[rng.random_range(0..order.len())].clone();
            let t = order[rng.random_range(0..order.len())].clone();
            let day = 1 + rng.random_range(0..28) as u32;
            let month = 1 + rng.random_range(0..3) as u32;
            records.push(EventRecord {
                date: NaiveDate::from_ymd_opt(1998, month, day).unwrap(),
                cameo_code: 100,
                intensity: (rng.random::<f64>() - 0.5) * 20.0,
                source: s,
                target: t,
            });
        }
        let (panel, report) = aggregate_to_layers(&records, &raw_config()).unwrap();

        // conservation: coop minus confl equals the net retained intensity
        let net_panel: f64 = (0..panel.periods())
            .map(|t| {
                panel.snapshot(COOPERATIVE_LAYER, t).weights.sum()
                    - panel.snapshot(CONFLICTUAL_LAYER, t).weights.sum()
            })
            .sum();
        let net_events: f64 = records
            .iter()
            .filter(|e| e.source != e.target)
            .map(|e| e.intensity)
            .sum();
        assert!((net_panel - net_events).abs() < 1e-9);
        assert_eq!(
            report.events_retained + report.events_domestic_dropped,
            records.len()
        );

        let mut shuffled = records.clone();
        shuffled.shuffle(&mut rng);
        let (panel2, _) = aggregate_to_layers(&shuffled, &raw_config()).unwrap();
        for l in 0..2 {
            for t in 0..panel.periods() {
                let diff = (&panel.snapshot(l, t).weights - &panel2.snapshot(l, t).weights)
                    .abs()
                    .max();
                assert!(diff < 1e-12);
            }
        }
    }

    #[test]
    fn log_returns_examples() {
        let prices = DMatrix::from_column_slice(3, 1, &[100.0, 100.0, 110.0]);
        let r = compute_log_returns(&prices).unwrap();
        assert_eq!(r[(0, 0)], 0.0);
        assert!((r[(1, 0)] - 1.1f64.ln()).abs() < 1e-12);

        // exp-cumsum reconstructs prices up to the initial level
        let prices = DMatrix::from_column_slice(4, 1, &[50.0, 55.0, 52.0, 60.0]);
        let r = compute_log_returns(&prices).unwrap();
        let mut level = 50.0f64;
        for t in 0..3 {
            level *= r[(t, 0)].exp();
            assert!((level - prices[(t + 1, 0)]).abs() < 1e-9);
        }

        let bad = DMatrix::from_column_slice(2, 1, &[100.0, 0.0]);
        assert!(compute_log_returns(&bad).is_err());
    }

    #[test]
    fn realized_volatility_examples() {
        let month = DMatrix::from_column_slice(2, 1, &[0.01, -0.02]);
        let rv = compute_realized_volatility(&[month]).unwrap();
        assert!((rv[(0, 0)] - 0.0005).abs() < 1e-15);

        let zeros = DMatrix::zeros(5, 1);
        let rv = compute_realized_volatility(&[zeros]).unwrap();
        assert_eq!(rv[(0, 0)], 0.0);

        // doubling daily returns quadruples the monthly value
        let month = DMatrix::from_column_slice(3, 1, &[0.01, 0.02, -0.01]);
        let rv1 = compute_realized_volatility(std::slice::from_ref(&month)).unwrap();
        let rv2 = compute_realized_volatility(&[&month * 2.0]).unwrap();
        assert!((rv2[(0, 0)] - 4.0 * rv1[(0, 0)]).abs() < 1e-15);

        assert!(compute_realized_volatility(&[DMatrix::zeros(0, 1)]).is_err());
    }

    fn months_from(start: &str, count: usize) -> Vec<MonthKey> {
        let start: MonthKey = start.parse().unwrap();
        (0..count).map(|i| start.plus(i as i64)).collect()
    }

    #[test]
    fn assemble_design_lag_semantics() {
        let months = months_from("2000-01", 5);
        let responses = MonthlySeries {
            months: months.clone(),
            values: DMatrix::from_column_slice(5, 1, &[1.0, 2.0, 3.0, 4.0, 5.0]),
            names: vec!["idx".into()],
        };
        let controls = MonthlySeries {
            months,
            values: DMatrix::from_column_slice(5, 1, &[10.0, 20.0, 30.0, 40.0, 50.0]),
            names: vec!["bci".into()],
        };
        let lags: BTreeMap<String, usize> = [("bci".to_string(), 1)].into_iter().collect();
        let (table, report) = assemble_design(&responses, &controls, &lags, true).unwrap();
        assert_eq!(report.rows_dropped_head, 1);
        assert_eq!(table.design.t_len(), 4);
        // design row for month t carries the control from t-1
        assert_eq!(table.design.factors()[(0, 0)], 10.0);
        assert_eq!(table.design.responses()[(0, 0)], 2.0);
        assert_eq!(table.period_labels[0], "2000-02");

        // lag 0 preserves rows
        let (table, report) = assemble_design(&responses, &controls, &BTreeMap::new(), true).unwrap();
        assert_eq!(report.rows_dropped_head, 0);
        assert_eq!(table.design.t_len(), 5);
    }

    #[test]
    fn assemble_design_detects_gaps() {
        let mut months = months_from("2000-01", 4);
        months[2] = "2000-05".parse().unwrap();
        months[3] = "2000-06".parse().unwrap();
        let series = MonthlySeries {
            months,
            values: DMatrix::zeros(4, 1),
            names: vec!["x".into()],
        };
        let err = series.check("test").unwrap_err();
        match err {
            Error::CalendarGaps(gaps) => {
                assert_eq!(gaps, vec!["2000-03".to_string(), "2000-04".to_string()])
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn month_key_arithmetic() {
        let m: MonthKey = "1999-11".parse().unwrap();
        assert_eq!(m.plus(1).to_string(), "1999-12");
        assert_eq!(m.plus(2).to_string(), "2000-01");
        assert_eq!(m.plus(14).offset_from(m), 14);
        assert_eq!(m.plus(-11).to_string(), "1998-12");
    }
}
