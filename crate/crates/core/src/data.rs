//! OHLCV ingestion, min-max scaling, sliding windows and fold generation.

use std::fmt;
use std::ops::Range;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Rng};

pub const CSV_HEADER: &str = "Date,Open,High,Low,Close,Adj Close,Volume";

/// One daily bar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OhlcvRecord {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub adj_close: f64,
    pub volume: f64,
}

impl OhlcvRecord {
    fn validate(&self) -> std::result::Result<(), String> {
        let prices = [self.open, self.high, self.low, self.close, self.adj_close];
        if prices.iter().any(|p| !p.is_finite() || *p <= 0.0) {
            return Err("prices must be finite and positive".into());
        }
        if !self.volume.is_finite() || self.volume < 0.0 {
            return Err("volume must be finite and non-negative".into());
        }
        if self.low > self.open.min(self.close) || self.high < self.open.max(self.close) {
            return Err(format!(
                "bar violates low <= min(open, close) <= max(open, close) <= high (o={} h={} l={} c={})",
                self.open, self.high, self.low, self.close
            ));
        }
        Ok(())
    }

    pub fn value(&self, feature: Feature) -> f64 {
        match feature {
            Feature::Open => self.open,
            Feature::High => self.high,
            Feature::Low => self.low,
            Feature::Close => self.close,
            Feature::AdjClose => self.adj_close,
            Feature::Volume => self.volume,
        }
    }
}

/// Non-empty series with strictly increasing dates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    records: Vec<OhlcvRecord>,
}

impl PriceSeries {
    pub fn new(records: Vec<OhlcvRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyData("price series".into()));
        }
        if let Some(w) = records.windows(2).find(|w| w[0].date >= w[1].date) {
            return Err(Error::Format(format!(
                "dates must be strictly increasing: {} then {}",
                w[0].date, w[1].date
            )));
        }
        Ok(Self { records })
    }

    /// Flat bars (open = high = low = close = adj close) on consecutive days.
    pub fn from_closes(start: NaiveDate, closes: &[f64]) -> Result<Self> {
        let records = closes
            .iter()
            .zip(start.iter_days())
            .map(|(&c, date)| OhlcvRecord {
                date,
                open: c,
                high: c,
                low: c,
                close: c,
                adj_close: c,
                volume: 0.0,
            })
            .collect();
        Self::new(records)
    }

    pub fn records(&self) -> &[OhlcvRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn first_date(&self) -> NaiveDate {
        self.records[0].date
    }

    pub fn last_date(&self) -> NaiveDate {
        self.records[self.records.len() - 1].date
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    Open,
    High,
    Low,
    Close,
    AdjClose,
    Volume,
}

impl Feature {
    pub const ALL: [Feature; 6] = [
        Feature::Open,
        Feature::High,
        Feature::Low,
        Feature::Close,
        Feature::AdjClose,
        Feature::Volume,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Feature::Open => "open",
            Feature::High => "high",
            Feature::Low => "low",
            Feature::Close => "close",
            Feature::AdjClose => "adj_close",
            Feature::Volume => "volume",
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Model inputs. Both sets contain `close`, which is also the target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSet {
    #[default]
    Close,
    All,
}

impl FeatureSet {
    pub fn features(self) -> &'static [Feature] {
        match self {
            FeatureSet::Close => &[Feature::Close],
            FeatureSet::All => &Feature::ALL,
        }
    }

    pub fn len(self) -> usize {
        self.features().len()
    }

    pub fn is_empty(self) -> bool {
        false
    }

    pub fn close_index(self) -> usize {
        self.features()
            .iter()
            .position(|&f| f == Feature::Close)
            .expect("every feature set contains close")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRange {
    pub feature: Feature,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadReport {
    pub source: String,
    pub rows: usize,
    pub dropped_rows: usize,
    pub first_date: NaiveDate,
    pub last_date: NaiveDate,
    pub features: Vec<FeatureRange>,
}

fn parse_field(field: &str, line: usize, name: &str) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| Error::Row {
        line,
        message: format!("cannot parse {name} `{field}`"),
    })
}

/// Parses CSV text. `source` names the input in the report.
pub fn parse_csv(text: &str, source: &str) -> Result<(PriceSeries, LoadReport)> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut lines = text.lines().enumerate();
    let header = lines.next().map(|(_, l)| l.trim_end_matches('\r')).unwrap_or("");
    if header != CSV_HEADER {
        return Err(Error::Format(format!(
            "{source}: expected header `{CSV_HEADER}`, found `{header}`"
        )));
    }

    let mut records = Vec::new();
    let mut dropped = 0;
    for (idx, raw) in lines {
        let line = idx + 1;
        let raw = raw.trim_end_matches('\r');
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::Row {
                line,
                message: format!("expected 7 fields, found {}", fields.len()),
            });
        }
        if fields.iter().any(|f| {
            let f = f.trim();
            f.is_empty() || f.eq_ignore_ascii_case("null")
        }) {
            dropped += 1;
            continue;
        }
        let date = NaiveDate::parse_from_str(fields[0].trim(), "%Y-%m-%d").map_err(|_| Error::Row {
            line,
            message: format!("cannot parse date `{}`", fields[0]),
        })?;
        let record = OhlcvRecord {
            date,
            open: parse_field(fields[1], line, "Open")?,
            high: parse_field(fields[2], line, "High")?,
            low: parse_field(fields[3], line, "Low")?,
            close: parse_field(fields[4], line, "Close")?,
            adj_close: parse_field(fields[5], line, "Adj Close")?,
            volume: parse_field(fields[6], line, "Volume")?,
        };
        record.validate().map_err(|message| Error::Row { line, message })?;
        records.push((line, record));
    }
    if records.is_empty() {
        return Err(Error::EmptyData(source.to_string()));
    }
    records.sort_by_key(|(_, r)| r.date);
    if let Some(w) = records.windows(2).find(|w| w[0].1.date == w[1].1.date) {
        return Err(Error::Row {
            line: w[1].0,
            message: format!("duplicate date {}", w[1].1.date),
        });
    }
    let series = PriceSeries::new(records.into_iter().map(|(_, r)| r).collect())?;

    let features = Feature::ALL
        .iter()
        .map(|&feature| {
            let values = series.records().iter().map(|r| r.value(feature));
            FeatureRange {
                feature,
                min: values.clone().fold(f64::INFINITY, f64::min),
                max: values.fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect();
    let report = LoadReport {
        source: source.to_string(),
        rows: series.len(),
        dropped_rows: dropped,
        first_date: series.first_date(),
        last_date: series.last_date(),
        features,
    };
    Ok((series, report))
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<(PriceSeries, LoadReport)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, &path.display().to_string())
}

/// Per-feature min-max scaler to `[0, 1]`.
///
/// `fit_ranges` records the half-open day-index ranges the statistics came
/// from, so callers can audit that no validation data leaked into a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub feature_set: FeatureSet,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub fit_ranges: Vec<Range<usize>>,
}

impl Scaler {
    fn from_stats(feature_set: FeatureSet, min: Vec<f64>, max: Vec<f64>, fit_ranges: Vec<Range<usize>>) -> Result<Self> {
        for (k, f) in feature_set.features().iter().enumerate() {
            if max[k] <= min[k] {
                return Err(Error::DegenerateFeature(f.name().into()));
            }
        }
        Ok(Self {
            feature_set,
            min,
            max,
            fit_ranges,
        })
    }

    /// Fits on the raw values carried by `samples`: every input row plus the
    /// target close. Records the merged day span of the samples.
    pub fn fit_samples<'a>(feature_set: FeatureSet, samples: impl IntoIterator<Item = &'a WindowSample>) -> Result<Self> {
        let n = feature_set.len();
        let close = feature_set.close_index();
        let mut min = vec![f64::INFINITY; n];
        let mut max = vec![f64::NEG_INFINITY; n];
        let mut spans = Vec::new();
        for s in samples {
            if s.inputs.iter().any(|row| row.len() != n) {
                return Err(Error::Compatibility(format!(
                    "sample rows do not match the {n}-feature set"
                )));
            }
            for row in &s.inputs {
                for k in 0..n {
                    min[k] = min[k].min(row[k]);
                    max[k] = max[k].max(row[k]);
                }
            }
            min[close] = min[close].min(s.target);
            max[close] = max[close].max(s.target);
            spans.push(s.start_day..s.target_day + 1);
        }
        if spans.is_empty() {
            return Err(Error::EmptyInput("cannot fit a scaler on zero samples".into()));
        }
        Self::from_stats(feature_set, min, max, merge_ranges(spans))
    }

    pub fn len(&self) -> usize {
        self.min.len()
    }

    pub fn is_empty(&self) -> bool {
        self.min.is_empty()
    }

    pub fn transform(&self, feature_index: usize, value: f64) -> f64 {
        (value - self.min[feature_index]) / (self.max[feature_index] - self.min[feature_index])
    }

    pub fn inverse_transform(&self, feature_index: usize, value: f64) -> f64 {
        value * (self.max[feature_index] - self.min[feature_index]) + self.min[feature_index]
    }

    /// Width of the close-price range, i.e. the USD value of one normalized unit.
    pub fn close_span(&self) -> f64 {
        let k = self.feature_set.close_index();
        self.max[k] - self.min[k]
    }

    pub fn transform_close(&self, value: f64) -> f64 {
        self.transform(self.feature_set.close_index(), value)
    }

    pub fn inverse_close(&self, value: f64) -> f64 {
        self.inverse_transform(self.feature_set.close_index(), value)
    }

    pub fn transform_sample(&self, raw: &WindowSample) -> Result<WindowSample> {
        let n = self.len();
        let inputs = raw
            .inputs
            .iter()
            .map(|row| {
                if row.len() != n {
                    return Err(Error::Compatibility(format!(
                        "sample has {} features, scaler has {n}",
                        row.len()
                    )));
                }
                Ok(row.iter().enumerate().map(|(k, &v)| self.transform(k, v)).collect())
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;
        Ok(WindowSample {
            inputs,
            target: self.transform_close(raw.target),
            ..raw.clone()
        })
    }

    pub fn transform_samples(&self, raw: &[WindowSample]) -> Result<Vec<WindowSample>> {
        raw.iter().map(|s| self.transform_sample(s)).collect()
    }
}

fn merge_ranges(mut spans: Vec<Range<usize>>) -> Vec<Range<usize>> {
    spans.sort_by_key(|r| (r.start, r.end));
    let mut merged: Vec<Range<usize>> = Vec::new();
    for r in spans {
        match merged.last_mut() {
            Some(last) if r.start <= last.end => last.end = last.end.max(r.end),
            _ => merged.push(r),
        }
    }
    merged
}

/// Fits per-feature min/max over days `range` of `series` only.
pub fn fit_scaler(series: &PriceSeries, feature_set: FeatureSet, range: Range<usize>) -> Result<Scaler> {
    if range.is_empty() || range.end > series.len() {
        return Err(Error::Argument(format!(
            "fit range {range:?} is empty or exceeds series length {}",
            series.len()
        )));
    }
    let feats = feature_set.features();
    let mut min = vec![f64::INFINITY; feats.len()];
    let mut max = vec![f64::NEG_INFINITY; feats.len()];
    for r in &series.records()[range.clone()] {
        for (k, &f) in feats.iter().enumerate() {
            min[k] = min[k].min(r.value(f));
            max[k] = max[k].max(r.value(f));
        }
    }
    Scaler::from_stats(feature_set, min, max, vec![range])
}

/// One supervised example.
///
/// `inputs` holds `T` rows of feature values (raw or normalized depending on
/// how the sample was built); `target` is the close `horizon` days after the
/// last input row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSample {
    pub inputs: Vec<Vec<f64>>,
    pub target: f64,
    pub start_day: usize,
    pub target_day: usize,
    pub target_date: NaiveDate,
}

impl WindowSample {
    pub fn window_len(&self) -> usize {
        self.inputs.len()
    }

    pub fn input_matrices(&self) -> Vec<Matrix> {
        self.inputs.iter().map(|row| Matrix::column(row)).collect()
    }
}

/// Unscaled windows: sample `i` covers days `i..i+T` and targets the close of
/// day `i + T + horizon - 1`.
pub fn make_raw_windows(
    series: &PriceSeries,
    feature_set: FeatureSet,
    window_len: usize,
    horizon: usize,
) -> Result<Vec<WindowSample>> {
    if window_len == 0 || horizon == 0 {
        return Err(Error::Argument("window length and horizon must be positive".into()));
    }
    let n = series.len();
    if n < window_len + horizon {
        return Err(Error::InsufficientData(format!(
            "series of {n} days cannot fill a window of {window_len} plus horizon {horizon}"
        )));
    }
    let recs = series.records();
    let feats = feature_set.features();
    Ok((0..=n - window_len - horizon)
        .map(|i| {
            let target_day = i + window_len + horizon - 1;
            WindowSample {
                inputs: recs[i..i + window_len]
                    .iter()
                    .map(|r| feats.iter().map(|&f| r.value(f)).collect())
                    .collect(),
                target: recs[target_day].close,
                start_day: i,
                target_day,
                target_date: recs[target_day].date,
            }
        })
        .collect())
}

/// Input-only window for forecasting past the end of a series.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastWindow {
    pub inputs: Vec<Vec<f64>>,
    pub start_day: usize,
    /// Date of the day after the window: the next record's date, or the last
    /// date plus one day for the final window.
    pub forecast_date: NaiveDate,
}

/// Every window of `window_len` consecutive days, including the final one
/// that has no target yet. Count is `len - T + 1`.
pub fn make_forecast_windows(
    series: &PriceSeries,
    feature_set: FeatureSet,
    window_len: usize,
) -> Result<Vec<ForecastWindow>> {
    if window_len == 0 {
        return Err(Error::Argument("window length must be positive".into()));
    }
    let n = series.len();
    if n < window_len {
        return Err(Error::InsufficientData(format!(
            "series of {n} days is shorter than the window of {window_len}"
        )));
    }
    let recs = series.records();
    let feats = feature_set.features();
    Ok((0..=n - window_len)
        .map(|i| {
            let next = i + window_len;
            let forecast_date = match recs.get(next) {
                Some(r) => r.date,
                None => recs[n - 1].date + chrono::Days::new(1),
            };
            ForecastWindow {
                inputs: recs[i..next]
                    .iter()
                    .map(|r| feats.iter().map(|&f| r.value(f)).collect())
                    .collect(),
                start_day: i,
                forecast_date,
            }
        })
        .collect())
}

/// Normalized windows using `scaler`.
pub fn make_windows(
    series: &PriceSeries,
    scaler: &Scaler,
    window_len: usize,
    horizon: usize,
) -> Result<Vec<WindowSample>> {
    scaler.transform_samples(&make_raw_windows(series, scaler.feature_set, window_len, horizon)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FoldScheme {
    #[default]
    Contiguous,
    Shuffled,
}

impl fmt::Display for FoldScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FoldScheme::Contiguous => "contiguous",
            FoldScheme::Shuffled => "shuffled",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub fold_index: usize,
    pub train_indices: Vec<usize>,
    pub validation_indices: Vec<usize>,
}

/// Splits `0..n_samples` into `k` validation blocks.
///
/// Block sizes are `n / k`, with the remainder going one each to the earliest
/// blocks. `Shuffled` applies a seeded permutation before blocking. Index
/// lists inside each split are sorted.
pub fn kfold_split(n_samples: usize, k: usize, scheme: FoldScheme, seed: u64) -> Result<Vec<FoldSplit>> {
    if k < 2 {
        return Err(Error::Fold(format!("need at least 2 folds, got {k}")));
    }
    if n_samples < k {
        return Err(Error::Fold(format!("{n_samples} samples cannot fill {k} folds")));
    }
    let mut order: Vec<usize> = (0..n_samples).collect();
    if scheme == FoldScheme::Shuffled {
        Rng::new(seed).shuffle(&mut order);
    }
    let base = n_samples / k;
    let extra = n_samples % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for fold_index in 0..k {
        let size = base + usize::from(fold_index < extra);
        let mut validation_indices = order[start..start + size].to_vec();
        validation_indices.sort_unstable();
        let mut in_val = vec![false; n_samples];
        validation_indices.iter().for_each(|&i| in_val[i] = true);
        let train_indices = (0..n_samples).filter(|&i| !in_val[i]).collect();
        folds.push(FoldSplit {
            fold_index,
            train_indices,
            validation_indices,
        });
        start += size;
    }
    Ok(folds)
}

/// Reserves the most recent `test_fraction` of samples as a holdout test set.
pub fn holdout_test_split<T: Clone>(samples: &[T], test_fraction: f64) -> Result<(Vec<T>, Vec<T>)> {
    if !(test_fraction > 0.0 && test_fraction < 0.5) {
        return Err(Error::Argument(format!("test fraction {test_fraction} outside (0, 0.5)")));
    }
    let n_test = (samples.len() as f64 * test_fraction).round() as usize;
    if n_test == 0 || n_test >= samples.len() {
        return Err(Error::InsufficientData(format!(
            "{} samples leave no room for a {test_fraction} holdout",
            samples.len()
        )));
    }
    let cut = samples.len() - n_test;
    Ok((samples[..cut].to_vec(), samples[cut..].to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const THREE_ROWS: &str = "Date,Open,High,Low,Close,Adj Close,Volume
2020-01-01,10,12,9,10,10,100
2020-01-02,10,21,10,20,20,200
2020-01-03,20,31,19,30,30,300
";

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    #[test]
    fn parses_well_formed_rows() {
        let (series, report) = parse_csv(THREE_ROWS, "mem").unwrap();
        assert_eq!(series.len(), 3);
        assert_eq!(report.dropped_rows, 0);
        assert_eq!(report.first_date, d("2020-01-01"));
        assert_eq!(report.last_date, d("2020-01-03"));
        let close = report.features.iter().find(|f| f.feature == Feature::Close).unwrap();
        assert_eq!((close.min, close.max), (10.0, 30.0));
    }

    #[test]
    fn null_rows_are_dropped_and_counted() {
        let text = THREE_ROWS.replace("20,20,200", "20,20,null");
        let (series, report) = parse_csv(&text, "mem").unwrap();
        assert_eq!(series.len(), 2);
        assert_eq!(report.dropped_rows, 1);
    }

    #[test]
    fn unsorted_rows_are_sorted() {
        let text = "Date,Open,High,Low,Close,Adj Close,Volume
2020-01-03,20,31,19,30,30,300
2020-01-01,10,12,9,10,10,100
";
        let (series, _) = parse_csv(text, "mem").unwrap();
        assert_eq!(series.first_date(), d("2020-01-01"));
    }

    #[test]
    fn format_and_row_errors() {
        assert!(matches!(parse_csv("Date,Close\n", "mem"), Err(Error::Format(_))));
        let bad = THREE_ROWS.replace("2020-01-02", "2020-13-02");
        match parse_csv(&bad, "mem") {
            Err(Error::Row { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let bad = THREE_ROWS.replace("10,21,10,20,20", "10,21,10,abc,20");
        assert!(matches!(parse_csv(&bad, "mem"), Err(Error::Row { line: 3, .. })));
        let only_nulls = "Date,Open,High,Low,Close,Adj Close,Volume\n2020-01-01,null,null,null,null,null,null\n";
        assert!(matches!(parse_csv(only_nulls, "mem"), Err(Error::EmptyData(_))));
        let dup = THREE_ROWS.replace("2020-01-03", "2020-01-02");
        assert!(matches!(parse_csv(&dup, "mem"), Err(Error::Row { .. })));
        let inverted = THREE_ROWS.replace("10,12,9,10", "10,8,9,10");
        assert!(matches!(parse_csv(&inverted, "mem"), Err(Error::Row { line: 2, .. })));
    }

    #[test]
    fn scaler_hand_values() {
        let (series, _) = parse_csv(THREE_ROWS, "mem").unwrap();
        let s = fit_scaler(&series, FeatureSet::Close, 0..3).unwrap();
        assert_eq!((s.min[0], s.max[0]), (10.0, 30.0));
        assert_eq!(s.transform(0, 20.0), 0.5);

        // days 2..3 only
        let s = fit_scaler(&series, FeatureSet::All, 1..3).unwrap();
        assert_eq!(s.min, vec![10.0, 21.0, 10.0, 20.0, 20.0, 200.0]);
        assert_eq!(s.max, vec![20.0, 31.0, 19.0, 30.0, 30.0, 300.0]);
        assert_eq!(s.fit_ranges, vec![1..3]);
    }

    #[test]
    fn constant_feature_is_rejected() {
        let (series, _) = parse_csv(THREE_ROWS, "mem").unwrap();
        // open is 10 on both of the first two days
        assert!(matches!(
            fit_scaler(&series, FeatureSet::All, 0..2),
            Err(Error::DegenerateFeature(f)) if f == "open"
        ));
        assert!(fit_scaler(&series, FeatureSet::Close, 0..0).is_err());
    }

    #[test]
    fn window_counts_and_targets() {
        let closes: Vec<f64> = (1..=10).map(|v| v as f64).collect();
        let series = PriceSeries::from_closes(d("2021-01-01"), &closes).unwrap();
        let w = make_raw_windows(&series, FeatureSet::Close, 7, 1).unwrap();
        assert_eq!(w.len(), 3);
        assert_eq!(w[0].target, 8.0);
        assert_eq!(w[0].target_date, d("2021-01-08"));
        assert!(matches!(
            make_raw_windows(&series, FeatureSet::Close, 10, 1),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn forecast_windows_extend_past_the_last_target() {
        let closes: Vec<f64> = (1..=10).map(|v| v as f64).collect();
        let series = PriceSeries::from_closes(d("2021-01-01"), &closes).unwrap();
        let f = make_forecast_windows(&series, FeatureSet::Close, 7).unwrap();
        let w = make_raw_windows(&series, FeatureSet::Close, 7, 1).unwrap();
        assert_eq!(f.len(), 4);
        for (a, b) in f.iter().zip(&w) {
            assert_eq!(a.inputs, b.inputs);
            assert_eq!(a.forecast_date, b.target_date);
        }
        assert_eq!(f[3].forecast_date, d("2021-01-11"));
        assert!(make_forecast_windows(&series, FeatureSet::Close, 11).is_err());
    }

    #[test]
    fn windows_over_three_rows_match_hand_normalization() {
        let (series, _) = parse_csv(THREE_ROWS, "mem").unwrap();
        let scaler = fit_scaler(&series, FeatureSet::Close, 0..3).unwrap();
        let w = make_windows(&series, &scaler, 2, 1).unwrap();
        assert_eq!(w.len(), 1);
        // closes 10, 20 -> 0, 0.5; target 30 -> 1
        assert_eq!(w[0].inputs, vec![vec![0.0], vec![0.5]]);
        assert_eq!(w[0].target, 1.0);
    }

    #[test]
    fn fit_samples_records_span() {
        let closes: Vec<f64> = (1..=20).map(|v| v as f64).collect();
        let series = PriceSeries::from_closes(d("2021-01-01"), &closes).unwrap();
        let w = make_raw_windows(&series, FeatureSet::Close, 3, 1).unwrap();
        let s = Scaler::fit_samples(FeatureSet::Close, w[0..4].iter().chain(&w[10..12])).unwrap();
        assert_eq!(s.fit_ranges, vec![0..7, 10..15]);
        assert_eq!((s.min[0], s.max[0]), (1.0, 15.0));
    }

    #[test]
    fn kfold_examples() {
        let folds = kfold_split(10, 5, FoldScheme::Contiguous, 0).unwrap();
        let blocks: Vec<Vec<usize>> = folds.iter().map(|f| f.validation_indices.clone()).collect();
        assert_eq!(blocks, vec![vec![0, 1], vec![2, 3], vec![4, 5], vec![6, 7], vec![8, 9]]);

        let sizes: Vec<usize> = kfold_split(11, 5, FoldScheme::Contiguous, 0)
            .unwrap()
            .iter()
            .map(|f| f.validation_indices.len())
            .collect();
        assert_eq!(sizes, vec![3, 2, 2, 2, 2]);

        assert!(matches!(kfold_split(4, 5, FoldScheme::Contiguous, 0), Err(Error::Fold(_))));
    }

    #[test]
    fn holdout_takes_the_tail() {
        let items: Vec<usize> = (0..100).collect();
        let (cv, test) = holdout_test_split(&items, 0.1).unwrap();
        assert_eq!(test, (90..100).collect::<Vec<_>>());
        assert_eq!(cv.len(), 90);
        assert!(cv.iter().max() < test.iter().min());
        assert!(holdout_test_split(&items[..3], 0.1).is_err());
        assert!(holdout_test_split(&items, 0.5).is_err());
    }

    proptest! {
        #[test]
        fn folds_partition(n in 5usize..200, shuffled in any::<bool>(), seed in any::<u64>()) {
            let scheme = if shuffled { FoldScheme::Shuffled } else { FoldScheme::Contiguous };
            let folds = kfold_split(n, 5, scheme, seed).unwrap();
            let mut all: Vec<usize> = folds.iter().flat_map(|f| f.validation_indices.clone()).collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            let sizes: Vec<usize> = folds.iter().map(|f| f.validation_indices.len()).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            for f in &folds {
                prop_assert_eq!(f.train_indices.len() + f.validation_indices.len(), n);
                prop_assert!(f.train_indices.iter().all(|i| f.validation_indices.binary_search(i).is_err()));
            }
        }

        #[test]
        fn scaler_round_trip(values in prop::collection::vec(1.0f64..1e5, 3..40)) {
            let start = d("2020-01-01");
            let series = PriceSeries::from_closes(start, &values).unwrap();
            prop_assume!(values.iter().cloned().fold(f64::MIN, f64::max) > values.iter().cloned().fold(f64::MAX, f64::min));
            let s = fit_scaler(&series, FeatureSet::Close, 0..values.len()).unwrap();
            for &v in &values {
                let back = s.inverse_transform(0, s.transform(0, v));
                prop_assert!((back - v).abs() <= 1e-12 * v.abs().max(1.0));
            }
        }
    }
}
