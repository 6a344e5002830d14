//! Ingestion of cumulative case-count CSVs (JHU CSSE layout) and the
//! forward/inverse preprocessing transforms.
//!
//! The expected layout is a header row `Province/State, Country/Region,
//! Lat, Long` followed by one column per day in `M/D/YY` format, and one
//! data row per province or country. Cumulative counts are converted to
//! daily new cases by first differencing (reporting corrections, i.e.
//! negative differences, are clamped to zero and counted), provinces are
//! summed into country totals, and the requested countries and case types
//! are assembled into a panel ordered case-type-major then country.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use chrono::NaiveDate;
use ndarray::Array2;

use crate::tensor::{SeriesLabel, TimeSeriesPanel};
use crate::{Error, Result};

/// Kind of count carried by one source file.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum CaseType {
    /// Daily reported confirmed cases.
    Confirmed,
    /// Daily reported deaths.
    Deaths,
    /// Daily reported recoveries.
    Recovered,
}

impl CaseType {
    /// Lowercase name used in labels and file output.
    pub fn as_str(&self) -> &'static str {
        match self {
            CaseType::Confirmed => "confirmed",
            CaseType::Deaths => "deaths",
            CaseType::Recovered => "recovered",
        }
    }
}

impl std::fmt::Display for CaseType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One parsed row of a case CSV.
#[derive(Debug, Clone)]
pub struct CaseRow {
    /// Province or state, when the country is subdivided.
    pub province: Option<String>,
    /// Country or region name, matched exactly.
    pub country: String,
    /// Cumulative counts, one per date column.
    pub counts: Vec<u64>,
}

/// A parsed cumulative case table: contiguous daily dates plus one row per
/// province or country.
#[derive(Debug, Clone)]
pub struct RawCaseTable {
    /// Kind of count in this table.
    pub case_type: CaseType,
    /// Date of each column; strictly increasing, daily resolution.
    pub dates: Vec<NaiveDate>,
    /// Data rows.
    pub rows: Vec<CaseRow>,
}

impl RawCaseTable {
    /// Sum province rows into per-country cumulative series.
    pub fn country_totals(&self) -> BTreeMap<String, Vec<u64>> {
        let mut totals: BTreeMap<String, Vec<u64>> = BTreeMap::new();
        for row in &self.rows {
            let entry =
                totals.entry(row.country.clone()).or_insert_with(|| vec![0; self.dates.len()]);
            for (total, &count) in entry.iter_mut().zip(row.counts.iter()) {
                *total = total.saturating_add(count);
            }
        }
        totals
    }
}

/// Load and parse a case CSV from disk.
pub fn load_case_csv(path: &Path, case_type: CaseType) -> Result<RawCaseTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_case_csv(BufReader::new(file), case_type)
}

/// Parse a case CSV from any reader. See the module docs for the layout.
pub fn parse_case_csv(reader: impl Read, case_type: CaseType) -> Result<RawCaseTable> {
    // Flexible mode: ragged rows reach the explicit length check below,
    // which reports the exact row and field.
    let mut csv_reader =
        csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);

    let headers = csv_reader
        .headers()
        .map_err(|e| csv_error_to_parse(&e))?
        .clone();
    let dates = parse_header(&headers)?;

    let mut rows = Vec::new();
    for (idx, record) in csv_reader.records().enumerate() {
        let line = idx + 2; // 1-based, after the header
        let record = record.map_err(|e| csv_error_to_parse(&e))?;
        if record.len() != headers.len() {
            return Err(Error::CsvParse {
                line,
                column: record.len().min(headers.len()) + 1,
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        let province = record.get(0).map(str::trim).filter(|s| !s.is_empty()).map(String::from);
        let country = record.get(1).map(str::trim).unwrap_or_default().to_string();
        if country.is_empty() {
            return Err(Error::CsvParse {
                line,
                column: 2,
                message: "country field is empty".into(),
            });
        }
        let mut counts = Vec::with_capacity(dates.len());
        for (j, field) in record.iter().enumerate().skip(FIXED_COLUMNS) {
            let trimmed = field.trim();
            let value: u64 = trimmed.parse().map_err(|_| Error::CsvParse {
                line,
                column: j + 1,
                message: format!("cumulative count {trimmed:?} is not a nonnegative integer"),
            })?;
            counts.push(value);
        }
        rows.push(CaseRow { province, country, counts });
    }
    if rows.is_empty() {
        return Err(Error::EmptyTable);
    }
    Ok(RawCaseTable { case_type, dates, rows })
}

const FIXED_COLUMNS: usize = 4; // Province/State, Country/Region, Lat, Long

fn parse_header(headers: &csv::StringRecord) -> Result<Vec<NaiveDate>> {
    let expect = |idx: usize, want: &str| -> Result<()> {
        let got = headers.get(idx).unwrap_or("").trim_start_matches('\u{feff}').trim();
        if got.eq_ignore_ascii_case(want) {
            Ok(())
        } else {
            Err(Error::CsvParse {
                line: 1,
                column: idx + 1,
                message: format!("expected header {want:?}, found {got:?}"),
            })
        }
    };
    expect(0, "Province/State")?;
    expect(1, "Country/Region")?;
    expect(2, "Lat")?;
    expect(3, "Long")?;
    if headers.len() <= FIXED_COLUMNS {
        return Err(Error::CsvParse {
            line: 1,
            column: headers.len(),
            message: "no date columns after the fixed header".into(),
        });
    }

    let mut dates = Vec::with_capacity(headers.len() - FIXED_COLUMNS);
    for (j, field) in headers.iter().enumerate().skip(FIXED_COLUMNS) {
        let trimmed = field.trim();
        let date = NaiveDate::parse_from_str(trimmed, "%m/%d/%y").map_err(|_| Error::CsvParse {
            line: 1,
            column: j + 1,
            message: format!("date column {trimmed:?} is not M/D/YY"),
        })?;
        if let Some(&prev) = dates.last() {
            if date != prev + chrono::Days::new(1) {
                return Err(Error::CsvParse {
                    line: 1,
                    column: j + 1,
                    message: format!(
                        "date column {trimmed:?} does not follow {prev} at daily resolution"
                    ),
                });
            }
        }
        dates.push(date);
    }
    Ok(dates)
}

fn csv_error_to_parse(e: &csv::Error) -> Error {
    let line = e
        .position()
        .map(|p| p.line() as usize)
        .unwrap_or(0);
    Error::CsvParse { line, column: 0, message: e.to_string() }
}

/// How many cells a daily-new conversion clamped, and how much count mass
/// the clamping added relative to the telescoped cumulative total.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ClampStats {
    /// Number of negative daily differences clamped to zero.
    pub clamped_cells: usize,
    /// Total absolute mass of the clamped differences.
    pub clamped_mass: f64,
}

impl ClampStats {
    fn merge(&mut self, other: ClampStats) {
        self.clamped_cells += other.clamped_cells;
        self.clamped_mass += other.clamped_mass;
    }
}

/// First-difference a cumulative series into daily new counts.
///
/// Day 0 keeps the day-0 cumulative count; negative differences (reporting
/// corrections) are clamped to zero and reported in the stats. Without
/// clamping the output telescopes back to the final cumulative count.
pub fn daily_from_cumulative(cumulative: &[u64]) -> (Vec<f64>, ClampStats) {
    let mut out = Vec::with_capacity(cumulative.len());
    let mut stats = ClampStats::default();
    for (t, &value) in cumulative.iter().enumerate() {
        if t == 0 {
            out.push(value as f64);
            continue;
        }
        let diff = value as i128 - cumulative[t - 1] as i128;
        if diff < 0 {
            stats.clamped_cells += 1;
            stats.clamped_mass += (-diff) as f64;
            out.push(0.0);
        } else {
            out.push(diff as f64);
        }
    }
    (out, stats)
}

/// Convert a whole table to per-country daily-new series (provinces summed
/// first). Clamp counts are merged across countries and logged by callers.
pub fn to_daily_new(table: &RawCaseTable) -> (BTreeMap<String, Vec<f64>>, ClampStats) {
    let mut stats = ClampStats::default();
    let mut series = BTreeMap::new();
    for (country, cumulative) in table.country_totals() {
        let (daily, s) = daily_from_cumulative(&cumulative);
        stats.merge(s);
        series.insert(country, daily);
    }
    (series, stats)
}

/// Assemble per-(case type, country) series into a panel with rows ordered
/// case-type-major then country.
///
/// All series must share one length; the resulting row labels echo the
/// requested ordering.
pub fn assemble_panel(
    series: &BTreeMap<(CaseType, String), Vec<f64>>,
    countries: &[String],
    case_types: &[CaseType],
    t0: NaiveDate,
) -> Result<TimeSeriesPanel> {
    if countries.is_empty() || case_types.is_empty() {
        return Err(Error::EmptyPanel("no countries or case types requested"));
    }
    let mut len = None;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for case_type in case_types {
        for country in countries {
            let key = (*case_type, country.clone());
            let s = series.get(&key).ok_or_else(|| Error::MissingCountry(country.clone()))?;
            match len {
                None => len = Some(s.len()),
                Some(l) if l != s.len() => {
                    return Err(Error::DateRangeMismatch(format!(
                        "series ({case_type}, {country}) has {} days, expected {l}",
                        s.len()
                    )));
                }
                _ => {}
            }
            values.extend_from_slice(s);
            labels.push(SeriesLabel::new(country.clone(), case_type.as_str()));
        }
    }
    let t_len = len.unwrap_or(0);
    if t_len == 0 {
        return Err(Error::EmptyPanel("series have no days"));
    }
    let d = labels.len();
    let matrix = Array2::from_shape_vec((d, t_len), values)
        .map_err(|_| Error::dims("assemble_panel", "rectangular series", "ragged input"))?;
    TimeSeriesPanel::new(matrix, labels, t0)
}

/// Alignment of the moving average window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MovingAverage {
    /// Causal window ending at the current day (default).
    Trailing,
    /// Window centered on the current day, truncated at the boundaries.
    Centered,
}

/// Preprocessing parameters: moving-average smoothing followed by an
/// entrywise log transform.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransformSpec {
    /// Moving-average window in days.
    pub smoothing_window: usize,
    /// Offset of the log transform `x -> log(x + offset)`.
    pub log_offset: f64,
    /// Window alignment.
    pub alignment: MovingAverage,
}

impl Default for TransformSpec {
    fn default() -> Self {
        Self { smoothing_window: 5, log_offset: 1.0, alignment: MovingAverage::Trailing }
    }
}

impl TransformSpec {
    /// Check the invariants, reporting the offending field.
    pub fn validate(&self) -> Result<()> {
        if self.smoothing_window == 0 {
            return Err(Error::config("transform.smoothing_window", "must be at least 1"));
        }
        // Offsets below 1 would map small counts to negative values, which
        // the nonnegative factorization cannot represent.
        if !(self.log_offset >= 1.0) {
            return Err(Error::config("transform.log_offset", "must be at least 1"));
        }
        Ok(())
    }
}

/// Moving average of each row; output length equals input length.
///
/// Trailing alignment averages `input[max(0, t - w + 1) ..= t]`; centered
/// alignment averages a window of up to `w` days around `t`, truncated at
/// the boundaries.
pub fn smooth_moving_average(
    panel: &TimeSeriesPanel,
    window: usize,
    alignment: MovingAverage,
) -> Result<TimeSeriesPanel> {
    if window == 0 {
        return Err(Error::config("transform.smoothing_window", "must be at least 1"));
    }
    let values = panel.values();
    let t_len = panel.num_days();
    let smoothed = Array2::from_shape_fn(values.dim(), |(i, t)| {
        let (lo, hi) = match alignment {
            MovingAverage::Trailing => (t.saturating_sub(window - 1), t),
            MovingAverage::Centered => {
                (t.saturating_sub((window - 1) / 2), (t + window / 2).min(t_len - 1))
            }
        };
        let mut sum = 0.0;
        for s in lo..=hi {
            sum += values[(i, s)];
        }
        sum / (hi - lo + 1) as f64
    });
    panel.with_values(smoothed)
}

/// Entrywise `x -> log(x + offset)`.
pub fn log_transform(panel: &TimeSeriesPanel, offset: f64) -> Result<TimeSeriesPanel> {
    panel.with_values(panel.values().mapv(|x| (x + offset).ln()))
}

/// Entrywise inverse `y -> exp(y) - offset` on a raw matrix (panel values or
/// predicted curves), clamped at zero against rounding dust so the result
/// stays a valid count.
pub fn inverse_log_values(values: &Array2<f64>, offset: f64) -> Array2<f64> {
    values.mapv(|y| (y.exp() - offset).max(0.0))
}

/// Entrywise inverse transform of a panel.
pub fn inverse_log_transform(panel: &TimeSeriesPanel, offset: f64) -> Result<TimeSeriesPanel> {
    panel.with_values(inverse_log_values(&panel.values().to_owned(), offset))
}

/// Smooth then log-transform a panel.
pub fn preprocess(panel: &TimeSeriesPanel, spec: &TransformSpec) -> Result<TimeSeriesPanel> {
    spec.validate()?;
    let smoothed = smooth_moving_average(panel, spec.smoothing_window, spec.alignment)?;
    log_transform(&smoothed, spec.log_offset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    const HEADER: &str = "Province/State,Country/Region,Lat,Long,1/22/20,1/23/20,1/24/20";

    fn table(case_type: CaseType, body: &str) -> Result<RawCaseTable> {
        parse_case_csv(format!("{HEADER}\n{body}").as_bytes(), case_type)
    }

    #[test]
    fn provinces_sum_into_country_totals() {
        let t = table(
            CaseType::Confirmed,
            "Hubei,China,30.9,112.2,1,2,4\nGuangdong,China,23.3,113.4,3,4,5",
        )
        .unwrap();
        let totals = t.country_totals();
        assert_eq!(totals["China"], vec![4, 6, 9]);
    }

    #[test]
    fn empty_data_section_is_an_error() {
        let err = parse_case_csv(HEADER.as_bytes(), CaseType::Deaths).unwrap_err();
        assert!(matches!(err, Error::EmptyTable));
    }

    #[test]
    fn out_of_order_dates_name_the_column() {
        let bad = "Province/State,Country/Region,Lat,Long,1/22/20,1/24/20\n,X,0,0,1,2";
        match parse_case_csv(bad.as_bytes(), CaseType::Confirmed).unwrap_err() {
            Error::CsvParse { line: 1, column: 6, message } => {
                assert!(message.contains("1/24/20"), "{message}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn malformed_header_and_numbers_are_located() {
        let bad_header = "Region,Country/Region,Lat,Long,1/22/20\n,X,0,0,1";
        assert!(matches!(
            parse_case_csv(bad_header.as_bytes(), CaseType::Confirmed).unwrap_err(),
            Error::CsvParse { line: 1, column: 1, .. }
        ));

        let bad_number = format!("{HEADER}\n,France,46,2,1,x,3");
        match parse_case_csv(bad_number.as_bytes(), CaseType::Confirmed).unwrap_err() {
            Error::CsvParse { line: 2, column: 6, .. } => {}
            other => panic!("unexpected error {other:?}"),
        }

        let negative = format!("{HEADER}\n,France,46,2,1,-2,3");
        assert!(parse_case_csv(negative.as_bytes(), CaseType::Confirmed).is_err());

        let ragged = format!("{HEADER}\n,France,46,2,1,2");
        match parse_case_csv(ragged.as_bytes(), CaseType::Confirmed).unwrap_err() {
            Error::CsvParse { line: 2, .. } => {}
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn quoted_country_names_parse() {
        let t = table(CaseType::Confirmed, ",\"Korea, South\",36,128,1,2,3").unwrap();
        assert_eq!(t.rows[0].country, "Korea, South");
        assert!(t.rows[0].province.is_none());
    }

    #[test]
    fn daily_differencing_clamps_corrections() {
        let (daily, stats) = daily_from_cumulative(&[0, 1, 3, 3, 2]);
        assert_eq!(daily, vec![0.0, 1.0, 2.0, 0.0, 0.0]);
        assert_eq!(stats.clamped_cells, 1);
        assert_eq!(stats.clamped_mass, 1.0);
        // Telescoping: clamped sum minus clamped mass is the final total.
        assert_abs_diff_eq!(daily.iter().sum::<f64>() - stats.clamped_mass, 2.0);

        let (constant, stats) = daily_from_cumulative(&[7, 7, 7]);
        assert_eq!(constant, vec![7.0, 0.0, 0.0]);
        assert_eq!(stats.clamped_cells, 0);

        let (two, _) = daily_from_cumulative(&[5, 7]);
        assert_eq!(two, vec![5.0, 2.0]);
    }

    #[test]
    fn panel_assembly_orders_case_type_major() {
        let mut series = BTreeMap::new();
        series.insert((CaseType::Confirmed, "A".to_string()), vec![1.0, 2.0]);
        series.insert((CaseType::Confirmed, "B".to_string()), vec![3.0, 4.0]);
        series.insert((CaseType::Deaths, "A".to_string()), vec![5.0, 6.0]);
        series.insert((CaseType::Deaths, "B".to_string()), vec![7.0, 8.0]);
        let t0 = NaiveDate::from_ymd_opt(2020, 1, 22).unwrap();
        let panel = assemble_panel(
            &series,
            &["A".to_string(), "B".to_string()],
            &[CaseType::Confirmed, CaseType::Deaths],
            t0,
        )
        .unwrap();
        assert_eq!(panel.num_series(), 4);
        assert_eq!(panel.values().row(0).to_vec(), vec![1.0, 2.0]);
        assert_eq!(panel.values().row(2).to_vec(), vec![5.0, 6.0]);
        assert_eq!(panel.row_labels()[0], SeriesLabel::new("A", "confirmed"));
        assert_eq!(panel.row_labels()[2], SeriesLabel::new("A", "deaths"));
        // Labels form a bijection onto the requested set.
        let mut seen: Vec<_> =
            panel.row_labels().iter().map(|l| (l.case_type.clone(), l.entity.clone())).collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 4);
    }

    #[test]
    fn panel_assembly_rejects_mismatched_lengths_and_missing() {
        let mut series = BTreeMap::new();
        series.insert((CaseType::Confirmed, "A".to_string()), vec![1.0, 2.0]);
        series.insert((CaseType::Confirmed, "B".to_string()), vec![3.0]);
        let t0 = NaiveDate::from_ymd_opt(2020, 1, 22).unwrap();
        assert!(matches!(
            assemble_panel(
                &series,
                &["A".to_string(), "B".to_string()],
                &[CaseType::Confirmed],
                t0
            ),
            Err(Error::DateRangeMismatch(_))
        ));
        assert!(matches!(
            assemble_panel(&series, &["C".to_string()], &[CaseType::Confirmed], t0),
            Err(Error::MissingCountry(_))
        ));

        let single = assemble_panel(
            &series,
            &["A".to_string()],
            &[CaseType::Confirmed],
            t0,
        )
        .unwrap();
        assert_eq!(single.num_series(), 1);
        assert_eq!(single.values().row(0).to_vec(), vec![1.0, 2.0]);
    }

    #[test]
    fn trailing_average_examples() {
        let panel = TimeSeriesPanel::synthetic(array![[0.0, 0.0, 5.0, 0.0, 0.0]]).unwrap();
        let identity = smooth_moving_average(&panel, 1, MovingAverage::Trailing).unwrap();
        assert_eq!(identity.values(), panel.values());

        let smoothed = smooth_moving_average(&panel, 5, MovingAverage::Trailing).unwrap();
        assert_abs_diff_eq!(smoothed.values()[(0, 4)], 1.0, epsilon = 1e-15);
        // Causal: day 1 must not see the day-2 spike.
        assert_abs_diff_eq!(smoothed.values()[(0, 1)], 0.0, epsilon = 1e-15);

        let constant = TimeSeriesPanel::synthetic(array![[2.0, 2.0, 2.0, 2.0]]).unwrap();
        let unchanged = smooth_moving_average(&constant, 3, MovingAverage::Trailing).unwrap();
        assert_abs_diff_eq!(unchanged.values().to_owned(), constant.values().to_owned(), epsilon = 1e-15);
    }

    #[test]
    fn centered_average_sees_both_sides() {
        let panel = TimeSeriesPanel::synthetic(array![[0.0, 0.0, 6.0, 0.0, 0.0]]).unwrap();
        let smoothed = smooth_moving_average(&panel, 3, MovingAverage::Centered).unwrap();
        assert_abs_diff_eq!(smoothed.values()[(0, 1)], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(smoothed.values()[(0, 2)], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(smoothed.values()[(0, 3)], 2.0, epsilon = 1e-15);
    }

    #[test]
    fn smoothing_preserves_nonnegativity_and_mass_approximately() {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(3);
        let values =
            Array2::from_shape_fn((3, 50), |_| rand::Rng::gen_range(&mut rng, 0.0..10.0));
        let panel = TimeSeriesPanel::synthetic(values).unwrap();
        let window = 5;
        let smoothed = smooth_moving_average(&panel, window, MovingAverage::Trailing).unwrap();
        assert!(smoothed.values().iter().all(|&v| v >= 0.0));
        let t_len = panel.num_days() as f64;
        for i in 0..3 {
            let mean_in = panel.values().row(i).sum() / t_len;
            let mean_out = smoothed.values().row(i).sum() / t_len;
            let max = panel.values().row(i).iter().cloned().fold(0.0, f64::max);
            assert!((mean_in - mean_out).abs() <= window as f64 * max / t_len);
        }
    }

    #[test]
    fn log_transform_fixed_points_and_roundtrip() {
        let panel = TimeSeriesPanel::synthetic(array![[0.0, std::f64::consts::E - 1.0]]).unwrap();
        let logged = log_transform(&panel, 1.0).unwrap();
        assert_abs_diff_eq!(logged.values()[(0, 0)], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(logged.values()[(0, 1)], 1.0, epsilon = 1e-15);

        let back = inverse_log_transform(&logged, 1.0).unwrap();
        assert_abs_diff_eq!(back.values()[(0, 1)], std::f64::consts::E - 1.0, epsilon = 1e-10);

        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(5);
        let values =
            Array2::from_shape_fn((2, 20), |_| rand::Rng::gen_range(&mut rng, 0.0..1e5));
        let panel = TimeSeriesPanel::synthetic(values).unwrap();
        let round = inverse_log_transform(&log_transform(&panel, 1.0).unwrap(), 1.0).unwrap();
        for (a, b) in panel.values().iter().zip(round.values().iter()) {
            assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
        }
    }
}
