//! Long-format panel ingestion, validation and differencing.
//!
//! A [`Panel`] holds a balanced unit × period design in which every unit is
//! untreated before the treatment period `F` and keeps a constant dose from
//! `F` onwards. [`difference`] turns it into the estimation-ready
//! [`DifferencedSample`] for any pair of periods.

use std::collections::{BTreeSet, HashMap};
use std::io::{Read, Write};

use serde::Serialize;

use crate::error::{HadError, Result};
use crate::stats;

/// Column mapping for delimited input.
#[derive(Debug, Clone)]
pub struct Schema {
    pub unit: String,
    pub time: String,
    pub outcome: String,
    pub dose: String,
    pub covariates: Vec<String>,
    pub delimiter: u8,
    /// Overrides the inferred first treatment period.
    pub treatment_period: Option<i64>,
}

impl Default for Schema {
    fn default() -> Self {
        Self {
            unit: "unit".into(),
            time: "time".into(),
            outcome: "outcome".into(),
            dose: "dose".into(),
            covariates: Vec::new(),
            delimiter: b',',
            treatment_period: None,
        }
    }
}

/// One (unit, period) observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub unit: String,
    pub period: i64,
    pub outcome: f64,
    pub dose: f64,
    pub covariates: Vec<f64>,
}

/// A validated balanced panel.
#[derive(Debug, Clone)]
pub struct Panel {
    units: Vec<String>,
    periods: Vec<i64>,
    // [unit][period]
    outcomes: Vec<Vec<f64>>,
    doses: Vec<Vec<f64>>,
    covariate_names: Vec<String>,
    // [unit][period][covariate]
    covariates: Vec<Vec<Vec<f64>>>,
    treatment_period: i64,
}

impl Panel {
    /// Validates records into a panel. `treatment_period` overrides the
    /// inferred first period with a nonzero dose.
    pub fn from_records(
        records: Vec<Record>,
        covariate_names: Vec<String>,
        treatment_period: Option<i64>,
    ) -> Result<Self> {
        let periods: Vec<i64> = records.iter().map(|r| r.period).collect::<BTreeSet<_>>().into_iter().collect();
        let mut unit_index: HashMap<String, usize> = HashMap::new();
        let mut units = Vec::new();
        for r in &records {
            if !unit_index.contains_key(&r.unit) {
                unit_index.insert(r.unit.clone(), units.len());
                units.push(r.unit.clone());
            }
        }
        if periods.len() < 2 {
            return Err(HadError::InsufficientData(format!(
                "at least 2 periods are required, found {}",
                periods.len()
            )));
        }
        if units.len() < 3 {
            return Err(HadError::InsufficientData(format!(
                "at least 3 units are required, found {}",
                units.len()
            )));
        }
        let period_index: HashMap<i64, usize> = periods.iter().enumerate().map(|(i, p)| (*p, i)).collect();
        let n_cov = covariate_names.len();
        let (nu, nt) = (units.len(), periods.len());
        let mut outcomes = vec![vec![f64::NAN; nt]; nu];
        let mut doses = vec![vec![f64::NAN; nt]; nu];
        let mut covariates = vec![vec![Vec::new(); nt]; nu];
        let mut seen = vec![vec![false; nt]; nu];
        for r in records {
            let u = unit_index[&r.unit];
            let t = period_index[&r.period];
            if seen[u][t] {
                return Err(HadError::DuplicateRecord { unit: r.unit, period: r.period });
            }
            if r.dose < 0.0 {
                return Err(HadError::InvalidArgument(format!(
                    "negative dose {} for unit `{}` in period {}",
                    r.dose, r.unit, r.period
                )));
            }
            if r.covariates.len() != n_cov {
                return Err(HadError::InvalidArgument(format!(
                    "expected {n_cov} covariates for unit `{}`, found {}",
                    r.unit,
                    r.covariates.len()
                )));
            }
            seen[u][t] = true;
            outcomes[u][t] = r.outcome;
            doses[u][t] = r.dose;
            covariates[u][t] = r.covariates;
        }
        for (u, row) in seen.iter().enumerate() {
            if let Some(t) = row.iter().position(|s| !s) {
                return Err(HadError::Unbalanced(format!(
                    "unit `{}` has no record for period {}",
                    units[u], periods[t]
                )));
            }
        }

        let treatment_period = match treatment_period {
            Some(f) => {
                if !period_index.contains_key(&f) {
                    return Err(HadError::UnknownPeriod(f));
                }
                f
            }
            None => {
                let first = (0..nt).find(|&t| doses.iter().any(|row| row[t] != 0.0));
                match first {
                    Some(t) => periods[t],
                    None => {
                        return Err(HadError::InsufficientData("no unit ever receives a nonzero dose".into()))
                    }
                }
            }
        };
        let f_idx = period_index[&treatment_period];
        if f_idx == 0 {
            return Err(HadError::InsufficientData(
                "the treatment period is the first period: no pre-treatment period".into(),
            ));
        }
        for (u, row) in doses.iter().enumerate() {
            for t in 0..f_idx {
                if row[t] != 0.0 {
                    return Err(HadError::DoseBeforeTreatment { unit: units[u].clone(), period: periods[t] });
                }
            }
            if row[f_idx..].iter().any(|&v| v != row[f_idx]) {
                return Err(HadError::DoseVaries { unit: units[u].clone() });
            }
        }

        Ok(Self { units, periods, outcomes, doses, covariate_names, covariates, treatment_period })
    }

    pub fn units(&self) -> &[String] {
        &self.units
    }

    pub fn periods(&self) -> &[i64] {
        &self.periods
    }

    pub fn n_units(&self) -> usize {
        self.units.len()
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    /// First period with nonzero doses (`F`).
    pub fn treatment_period(&self) -> i64 {
        self.treatment_period
    }

    /// The last untreated period (`F - 1` in the ordered period labels).
    pub fn reference_period(&self) -> i64 {
        let f = self.period_idx(self.treatment_period).expect("treatment period in panel");
        self.periods[f - 1]
    }

    pub fn pre_periods(&self) -> impl Iterator<Item = i64> + '_ {
        self.periods.iter().copied().filter(move |&p| p < self.treatment_period)
    }

    pub fn post_periods(&self) -> impl Iterator<Item = i64> + '_ {
        self.periods.iter().copied().filter(move |&p| p >= self.treatment_period)
    }

    /// The period label immediately before `period`, if any.
    pub fn previous_period(&self, period: i64) -> Option<i64> {
        let i = self.period_idx(period).ok()?;
        (i > 0).then(|| self.periods[i - 1])
    }

    fn period_idx(&self, period: i64) -> Result<usize> {
        self.periods.binary_search(&period).map_err(|_| HadError::UnknownPeriod(period))
    }

    /// Outcome column for one period, in unit order.
    pub fn outcomes_at(&self, period: i64) -> Result<Vec<f64>> {
        let t = self.period_idx(period)?;
        Ok(self.outcomes.iter().map(|row| row[t]).collect())
    }

    /// Unit-level post-treatment dose.
    pub fn unit_doses(&self) -> Vec<f64> {
        let f = self.period_idx(self.treatment_period).expect("treatment period in panel");
        self.doses.iter().map(|row| row[f]).collect()
    }

    /// Covariate rows observed in `period`, or `None` when the panel has no covariates.
    pub fn covariates_at(&self, period: i64) -> Result<Option<Vec<Vec<f64>>>> {
        if self.covariate_names.is_empty() {
            return Ok(None);
        }
        let t = self.period_idx(period)?;
        Ok(Some(self.covariates.iter().map(|row| row[t].clone()).collect()))
    }

    /// Records in unit-major, period-minor order.
    pub fn records(&self) -> impl Iterator<Item = Record> + '_ {
        self.units.iter().enumerate().flat_map(move |(u, unit)| {
            self.periods.iter().enumerate().map(move |(t, &period)| Record {
                unit: unit.clone(),
                period,
                outcome: self.outcomes[u][t],
                dose: self.doses[u][t],
                covariates: self.covariates[u][t].clone(),
            })
        })
    }

    /// Writes the panel as delimited text readable by [`load_panel`] with the same schema.
    pub fn write_csv<W: Write>(&self, writer: W, schema: &Schema) -> Result<()> {
        let mut w = csv::WriterBuilder::new().delimiter(schema.delimiter).from_writer(writer);
        let mut header = vec![schema.unit.clone(), schema.time.clone(), schema.outcome.clone(), schema.dose.clone()];
        header.extend(self.covariate_names.iter().cloned());
        w.write_record(&header)?;
        for r in self.records() {
            let mut row = vec![r.unit, r.period.to_string(), r.outcome.to_string(), r.dose.to_string()];
            row.extend(r.covariates.iter().map(|c| c.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn parse_number(field: &str, line: u64, column: &str) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| HadError::Parse {
        line,
        column: column.to_string(),
        message: format!("`{field}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(HadError::Parse { line, column: column.to_string(), message: format!("`{field}` is not finite") });
    }
    Ok(v)
}

/// Reads and validates a long-format panel from delimited text with a header row.
pub fn load_panel<R: Read>(source: R, schema: &Schema) -> Result<Panel> {
    let mut reader = csv::ReaderBuilder::new().delimiter(schema.delimiter).trim(csv::Trim::All).from_reader(source);
    let headers = reader.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h == name).ok_or_else(|| HadError::MissingColumn(name.to_string()))
    };
    let i_unit = col(&schema.unit)?;
    let i_time = col(&schema.time)?;
    let i_outcome = col(&schema.outcome)?;
    let i_dose = col(&schema.dose)?;
    let i_cov: Vec<usize> = schema.covariates.iter().map(|c| col(c)).collect::<Result<_>>()?;

    let mut records = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let period_field = &row[i_time];
        let period: i64 = period_field.trim().parse().map_err(|_| HadError::Parse {
            line,
            column: schema.time.clone(),
            message: format!("`{period_field}` is not an integer period"),
        })?;
        let covariates = i_cov
            .iter()
            .zip(&schema.covariates)
            .map(|(&i, name)| {
                if row[i].trim().is_empty() {
                    Err(HadError::Parse { line, column: name.clone(), message: "missing covariate value".into() })
                } else {
                    parse_number(&row[i], line, name)
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        records.push(Record {
            unit: row[i_unit].to_string(),
            period,
            outcome: parse_number(&row[i_outcome], line, &schema.outcome)?,
            dose: parse_number(&row[i_dose], line, &schema.dose)?,
            covariates,
        });
    }
    Panel::from_records(records, schema.covariates.clone(), schema.treatment_period)
}

/// Per-unit outcome changes paired with the unit's post-treatment dose.
#[derive(Debug, Clone, Serialize)]
pub struct DifferencedSample {
    pub dy: Vec<f64>,
    pub d: Vec<f64>,
    #[serde(skip)]
    pub x: Option<Vec<Vec<f64>>>,
    pub base_period: Option<i64>,
    pub target_period: Option<i64>,
    /// Zero-dose units removed by [`drop_untreated`].
    pub removed_untreated: usize,
}

impl DifferencedSample {
    /// Builds a sample from raw vectors, enforcing equal lengths, at least
    /// three units, finite values and a non-degenerate dose.
    pub fn new(dy: Vec<f64>, d: Vec<f64>) -> Result<Self> {
        let s = Self { dy, d, x: None, base_period: None, target_period: None, removed_untreated: 0 };
        s.validate()?;
        Ok(s)
    }

    pub fn with_covariates(mut self, x: Vec<Vec<f64>>) -> Result<Self> {
        if x.len() != self.d.len() {
            return Err(HadError::InvalidArgument(format!(
                "{} covariate rows for {} units",
                x.len(),
                self.d.len()
            )));
        }
        self.x = Some(x);
        Ok(self)
    }

    pub fn g_count(&self) -> usize {
        self.d.len()
    }

    fn validate(&self) -> Result<()> {
        if self.dy.len() != self.d.len() {
            return Err(HadError::InvalidArgument(format!(
                "outcome changes ({}) and doses ({}) differ in length",
                self.dy.len(),
                self.d.len()
            )));
        }
        if self.d.len() < 3 {
            return Err(HadError::InsufficientData(format!("at least 3 units are required, found {}", self.d.len())));
        }
        if self.dy.iter().chain(&self.d).any(|v| !v.is_finite()) {
            return Err(HadError::InvalidArgument("non-finite value in sample".into()));
        }
        if stats::variance(&self.d) <= 0.0 {
            return Err(HadError::DegenerateDose);
        }
        Ok(())
    }
}

/// `Y_target - Y_base` for every unit, regressed later against the unit's
/// post-treatment dose (also for pre-treatment pairs).
pub fn difference(panel: &Panel, base: i64, target: i64) -> Result<DifferencedSample> {
    if base == target {
        return Err(HadError::InvalidArgument(format!("base and target are the same period ({base})")));
    }
    let y_base = panel.outcomes_at(base)?;
    let y_target = panel.outcomes_at(target)?;
    let dy = y_target.iter().zip(&y_base).map(|(t, b)| t - b).collect();
    let mut sample = DifferencedSample::new(dy, panel.unit_doses())?;
    sample.base_period = Some(base);
    sample.target_period = Some(target);
    sample.x = panel.covariates_at(base)?;
    Ok(sample)
}

/// How a period's outcome is turned into the dependent variable of a test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutcomeTransform {
    /// `Y_t - Y_base`; `base` defaults to the last untreated period.
    Difference { base: Option<i64> },
    /// Deviation from a unit-specific linear trend through `base` and
    /// `anchor`: `Y_t - Y_base - (t - base) (Y_base - Y_anchor) / (base - anchor)`.
    /// `base` defaults to the last untreated period and `anchor` to the period before it.
    LinearTrend { base: Option<i64>, anchor: Option<i64> },
}

/// Applies `transform` to the outcomes of period `target`.
pub fn transformed_outcome(panel: &Panel, transform: OutcomeTransform, target: i64) -> Result<Vec<f64>> {
    match transform {
        OutcomeTransform::Difference { base } => {
            let base = base.unwrap_or_else(|| panel.reference_period());
            Ok(difference(panel, base, target)?.dy)
        }
        OutcomeTransform::LinearTrend { base, anchor } => {
            let base = base.unwrap_or_else(|| panel.reference_period());
            let anchor = match anchor {
                Some(a) => a,
                None => panel.previous_period(base).ok_or_else(|| {
                    HadError::InsufficientData(format!("no period before {base} to fit a linear trend"))
                })?,
            };
            if anchor == base {
                return Err(HadError::InvalidArgument("trend anchor equals the base period".into()));
            }
            let yb = panel.outcomes_at(base)?;
            let ya = panel.outcomes_at(anchor)?;
            let yt = panel.outcomes_at(target)?;
            let step = (target - base) as f64 / (base - anchor) as f64;
            Ok((0..yb.len()).map(|i| yt[i] - yb[i] - step * (yb[i] - ya[i])).collect())
        }
    }
}

/// Removes zero-dose units.
pub fn drop_untreated(sample: &DifferencedSample) -> Result<DifferencedSample> {
    let keep: Vec<usize> = (0..sample.g_count()).filter(|&i| sample.d[i] != 0.0).collect();
    if keep.is_empty() {
        return Err(HadError::InsufficientData("every unit has a zero dose".into()));
    }
    let removed = sample.g_count() - keep.len();
    let mut out = DifferencedSample::new(
        keep.iter().map(|&i| sample.dy[i]).collect(),
        keep.iter().map(|&i| sample.d[i]).collect(),
    )?;
    out.x = sample.x.as_ref().map(|x| keep.iter().map(|&i| x[i].clone()).collect());
    out.base_period = sample.base_period;
    out.target_period = sample.target_period;
    out.removed_untreated = sample.removed_untreated + removed;
    Ok(out)
}
