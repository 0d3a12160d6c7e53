//! Gold-aligned scoring: slot-level precision/recall/F1, structured-field
//! accuracy, completeness, geocoding rates, repair statistics, runtimes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::schema::{resolve_path, validate, CaseRecord, GeocodeMethod, IsoTimestamp, SchemaDefinition, ValueKind};

/// Free-prose fields left out of scoring.
pub const UNSCORED_PROSE: [&str; 2] = [
    "narrative_osint.clothing_description",
    "narrative_osint.distinctive_features",
];

pub const DEFAULT_KEY_FIELDS: [&str; 4] = [
    "demographic.name",
    "demographic.age_years",
    "spatial.last_seen_location",
    "temporal.last_seen_ts",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparator {
    ExactCanonical,
    NumericEq,
    TimestampEq,
    SetEq,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchRule {
    pub field_path: String,
    pub comparator: Comparator,
}

/// One rule per scored leaf: every schema leaf outside provenance and the
/// unscored prose fields.
pub fn default_rules(schema: &SchemaDefinition) -> Vec<MatchRule> {
    schema
        .entries()
        .iter()
        .filter(|e| !matches!(e.value_kind, ValueKind::Section | ValueKind::Map))
        .filter(|e| !e.field_path.starts_with("provenance") && !UNSCORED_PROSE.contains(&e.field_path.as_str()))
        .map(|e| MatchRule {
            field_path: e.field_path.clone(),
            comparator: match e.value_kind {
                ValueKind::Integer | ValueKind::Decimal => Comparator::NumericEq,
                ValueKind::Timestamp => Comparator::TimestampEq,
                ValueKind::List => Comparator::SetEq,
                _ => Comparator::ExactCanonical,
            },
        })
        .collect()
}

pub fn structured_paths(rules: &[MatchRule]) -> Vec<String> {
    rules
        .iter()
        .map(|r| r.field_path.clone())
        .filter(|p| p != "narrative_osint.circumstances")
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AlignmentError {
    #[error("duplicate case_id {0:?} in parsed records")]
    DuplicateParsed(String),
    #[error("duplicate case_id {0:?} in gold records")]
    DuplicateGold(String),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AlignmentResult {
    /// (parsed, gold), ordered by case id.
    pub pairs: Vec<(CaseRecord, CaseRecord)>,
    pub unmatched_parsed: Vec<CaseRecord>,
    pub unmatched_gold: Vec<CaseRecord>,
}

impl AlignmentResult {
    pub fn unmatched_parsed_ids(&self) -> Vec<&str> {
        self.unmatched_parsed.iter().map(|r| r.case_id.as_str()).collect()
    }

    pub fn unmatched_gold_ids(&self) -> Vec<&str> {
        self.unmatched_gold.iter().map(|r| r.case_id.as_str()).collect()
    }
}

fn index(records: &[CaseRecord], dup: fn(String) -> AlignmentError) -> Result<BTreeMap<&str, &CaseRecord>, AlignmentError> {
    let mut out = BTreeMap::new();
    for r in records {
        if out.insert(r.case_id.as_str(), r).is_some() {
            return Err(dup(r.case_id.clone()));
        }
    }
    Ok(out)
}

/// Exact case-id join.
pub fn align(parsed: &[CaseRecord], gold: &[CaseRecord]) -> Result<AlignmentResult, AlignmentError> {
    let p = index(parsed, AlignmentError::DuplicateParsed)?;
    let g = index(gold, AlignmentError::DuplicateGold)?;
    let mut out = AlignmentResult::default();
    for (id, rec) in &p {
        match g.get(id) {
            Some(gr) => out.pairs.push(((*rec).clone(), (*gr).clone())),
            None => out.unmatched_parsed.push((*rec).clone()),
        }
    }
    out.unmatched_gold = g.iter().filter(|(id, _)| !p.contains_key(*id)).map(|(_, r)| (*r).clone()).collect();
    Ok(out)
}

/// Null, blank strings, and empty lists all count as absent.
pub fn slot_value(record: &Value, path: &str) -> Option<Value> {
    match resolve_path(record, path).ok().flatten()? {
        Value::Null => None,
        Value::String(s) if s.trim().is_empty() => None,
        Value::Array(a) if a.is_empty() => None,
        v => Some(v.clone()),
    }
}

fn canonical(v: &Value) -> String {
    let s = match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    };
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

pub fn values_match(comparator: Comparator, predicted: &Value, gold: &Value) -> bool {
    match comparator {
        Comparator::ExactCanonical => canonical(predicted) == canonical(gold),
        Comparator::NumericEq => match (predicted.as_f64(), gold.as_f64()) {
            (Some(a), Some(b)) => a == b,
            _ => false,
        },
        Comparator::TimestampEq => {
            let parse = |v: &Value| v.as_str().and_then(IsoTimestamp::parse);
            match (parse(predicted), parse(gold)) {
                (Some(p), Some(g)) if g.is_date_only() => p.date() == g.date(),
                (Some(p), Some(g)) => p.compare_full(&g) == Some(std::cmp::Ordering::Equal),
                _ => canonical(predicted) == canonical(gold),
            }
        }
        Comparator::SetEq => {
            let set = |v: &Value| -> BTreeSet<String> {
                match v {
                    Value::Array(a) => a.iter().map(canonical).collect(),
                    other => BTreeSet::from([canonical(other)]),
                }
            };
            set(predicted) == set(gold)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SlotCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl SlotCounts {
    fn add(&mut self, predicted: Option<&Value>, gold: Option<&Value>, comparator: Comparator) {
        match (predicted, gold) {
            (Some(p), Some(g)) if values_match(comparator, p, g) => self.tp += 1,
            (Some(_), Some(_)) => {
                self.fp += 1;
                self.fn_ += 1;
            }
            (Some(_), None) => self.fp += 1,
            (None, Some(_)) => self.fn_ += 1,
            (None, None) => {}
        }
    }

    pub fn prf(&self) -> (f64, f64, f64) {
        let ratio = |a: u64, b: u64| if a + b == 0 { 0.0 } else { a as f64 / (a + b) as f64 };
        let p = ratio(self.tp, self.fp);
        let r = ratio(self.tp, self.fn_);
        let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        (p, r, f1)
    }
}

/// Micro-averaged slot counts over every aligned pair and every unmatched
/// record on either side.
pub fn slot_counts(alignment: &AlignmentResult, rules: &[MatchRule]) -> SlotCounts {
    let mut c = SlotCounts::default();
    for (p, g) in &alignment.pairs {
        let (pv, gv) = (p.to_value(), g.to_value());
        for r in rules {
            c.add(slot_value(&pv, &r.field_path).as_ref(), slot_value(&gv, &r.field_path).as_ref(), r.comparator);
        }
    }
    for p in &alignment.unmatched_parsed {
        let pv = p.to_value();
        for r in rules {
            c.add(slot_value(&pv, &r.field_path).as_ref(), None, r.comparator);
        }
    }
    for g in &alignment.unmatched_gold {
        let gv = g.to_value();
        for r in rules {
            c.add(None, slot_value(&gv, &r.field_path).as_ref(), r.comparator);
        }
    }
    c
}

pub fn field_prf(alignment: &AlignmentResult, rules: &[MatchRule]) -> (f64, f64, f64) {
    slot_counts(alignment, rules).prf()
}

/// Matches over structured slots where gold is non-null. `None` when there
/// are no such slots.
pub fn structured_field_accuracy(alignment: &AlignmentResult, rules: &[MatchRule], structured: &[String]) -> Option<f64> {
    let (mut hit, mut total) = (0u64, 0u64);
    for (p, g) in &alignment.pairs {
        let (pv, gv) = (p.to_value(), g.to_value());
        for r in rules.iter().filter(|r| structured.contains(&r.field_path)) {
            let Some(gold) = slot_value(&gv, &r.field_path) else {
                continue;
            };
            total += 1;
            if slot_value(&pv, &r.field_path).is_some_and(|v| values_match(r.comparator, &v, &gold)) {
                hit += 1;
            }
        }
    }
    (total > 0).then(|| hit as f64 / total as f64)
}

/// Fraction of populated (record, key field) slots, overall and per field.
/// `None` for an empty record list.
pub fn completeness(records: &[CaseRecord], key_fields: &[&str]) -> Option<(f64, BTreeMap<String, f64>)> {
    if records.is_empty() || key_fields.is_empty() {
        return None;
    }
    let values: Vec<Value> = records.iter().map(CaseRecord::to_value).collect();
    let mut by_field = BTreeMap::new();
    let mut filled = 0usize;
    for f in key_fields {
        let n = values.iter().filter(|v| slot_value(v, f).is_some()).count();
        filled += n;
        by_field.insert(f.to_string(), n as f64 / records.len() as f64);
    }
    Some((filled as f64 / (records.len() * key_fields.len()) as f64, by_field))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeocodeRates {
    /// 1.0 when no record needed geocoding.
    pub success: f64,
    /// `None` when no record has coordinates.
    pub plausible: Option<f64>,
}

pub fn geocode_rates(records: &[CaseRecord]) -> GeocodeRates {
    fn has_coords(r: &&CaseRecord) -> bool {
        r.spatial.lat.is_some() && r.spatial.lon.is_some()
    }
    let needing: Vec<&CaseRecord> = records
        .iter()
        .filter(|r| r.spatial.geocode_method != GeocodeMethod::SourceProvided)
        .collect();
    let success = if needing.is_empty() {
        1.0
    } else {
        needing.iter().filter(|r| has_coords(r)).count() as f64 / needing.len() as f64
    };
    let with: Vec<&CaseRecord> = records.iter().filter(has_coords).collect();
    let plausible = (!with.is_empty())
        .then(|| with.iter().filter(|r| r.spatial.geocode_plausible == Some(true)).count() as f64 / with.len() as f64);
    GeocodeRates { success, plausible }
}

/// One LLM-path candidate's validation history.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairLogEntry {
    pub document_id: String,
    pub segment_index: usize,
    pub case_id: String,
    pub pre_valid: bool,
    pub passed: bool,
    pub attempts: u32,
    #[serde(default)]
    pub reverted_paths: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepairStats {
    pub pre_pass_rate: f64,
    pub post_pass_rate: f64,
    pub repair_rate: f64,
}

/// `None` for an empty log.
pub fn repair_stats(log: &[RepairLogEntry]) -> Option<RepairStats> {
    if log.is_empty() {
        return None;
    }
    let n = log.len() as f64;
    let frac = |f: fn(&RepairLogEntry) -> bool| log.iter().filter(|e| f(e)).count() as f64 / n;
    Some(RepairStats {
        pre_pass_rate: frac(|e| e.pre_valid),
        post_pass_rate: frac(|e| e.passed),
        repair_rate: frac(|e| e.attempts >= 1),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("runtime statistics need at least one sample")]
pub struct EmptySample;

/// Mean and nearest-rank 95th percentile.
pub fn runtime_stats(samples: &[f64]) -> Result<(f64, f64), EmptySample> {
    if samples.is_empty() {
        return Err(EmptySample);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let base = sorted[0];
    let mean = base + sorted.iter().map(|x| x - base).sum::<f64>() / sorted.len() as f64;
    let rank = ((0.95 * sorted.len() as f64).ceil() as usize).max(1);
    Ok((mean, sorted[rank - 1]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub path: String,
    pub record_count: usize,
    pub gold_count: usize,
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub structured_field_accuracy: f64,
    pub completeness_overall: f64,
    pub completeness_by_field: BTreeMap<String, f64>,
    pub geocode_success_rate: f64,
    pub geocode_plausible_rate: f64,
    pub pre_pass_rate: f64,
    pub post_pass_rate: f64,
    pub repair_rate: f64,
    pub runtime_mean_s: f64,
    pub runtime_p95_s: f64,
    pub config_digest: String,
    /// Degenerate denominators that were defined as 0.
    pub notes: Vec<String>,
}

pub struct EvalInput<'a> {
    pub path: &'a str,
    pub parsed: &'a [CaseRecord],
    pub gold: &'a [CaseRecord],
    /// LLM-path candidate history. Without it, pass rates come from
    /// validating the emitted records.
    pub repair_log: Option<&'a [RepairLogEntry]>,
    pub runtimes_s: &'a [f64],
    pub schema: &'a SchemaDefinition,
    pub key_fields: &'a [&'a str],
    pub config_digest: String,
}

pub fn evaluate(input: &EvalInput) -> Result<MetricsReport, AlignmentError> {
    let rules = default_rules(input.schema);
    let alignment = align(input.parsed, input.gold)?;
    let counts = slot_counts(&alignment, &rules);
    let (precision, recall, f1) = counts.prf();
    let mut notes = Vec::new();
    let mut or_zero = |v: Option<f64>, what: &str| {
        v.unwrap_or_else(|| {
            notes.push(format!("{what}: empty denominator, reported as 0"));
            0.0
        })
    };
    let sfa = or_zero(structured_field_accuracy(&alignment, &rules, &structured_paths(&rules)), "structured_field_accuracy");
    let (comp, by_field) = match completeness(input.parsed, input.key_fields) {
        Some((c, b)) => (c, b),
        None => (or_zero(None, "completeness"), BTreeMap::new()),
    };
    let geo = geocode_rates(input.parsed);
    let plausible = or_zero(geo.plausible, "geocode_plausible_rate");
    let stats = match input.repair_log {
        Some(log) => repair_stats(log),
        None if input.parsed.is_empty() => None,
        None => {
            let valid = input.parsed.iter().filter(|r| validate(&r.to_value(), input.schema).valid).count() as f64
                / input.parsed.len() as f64;
            Some(RepairStats {
                pre_pass_rate: valid,
                post_pass_rate: valid,
                repair_rate: 0.0,
            })
        }
    };
    let stats = stats.unwrap_or_else(|| {
        notes.push("repair_stats: no candidates, reported as 0".into());
        RepairStats {
            pre_pass_rate: 0.0,
            post_pass_rate: 0.0,
            repair_rate: 0.0,
        }
    });
    let (mean, p95) = runtime_stats(input.runtimes_s).unwrap_or_else(|_| {
        notes.push("runtime: no samples, reported as 0".into());
        (0.0, 0.0)
    });
    Ok(MetricsReport {
        path: input.path.to_string(),
        record_count: input.parsed.len(),
        gold_count: input.gold.len(),
        tp: counts.tp,
        fp: counts.fp,
        fn_: counts.fn_,
        precision,
        recall,
        f1,
        structured_field_accuracy: sfa,
        completeness_overall: comp,
        completeness_by_field: by_field,
        geocode_success_rate: geo.success,
        geocode_plausible_rate: plausible,
        pre_pass_rate: stats.pre_pass_rate,
        post_pass_rate: stats.post_pass_rate,
        repair_rate: stats.repair_rate,
        runtime_mean_s: mean,
        runtime_p95_s: p95,
        config_digest: input.config_digest.clone(),
        notes,
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        write!(s, "{b:02x}").expect("write to string");
        s
    })
}

type Cell = Box<dyn Fn(&MetricsReport) -> String>;

/// Side-by-side metric table, one column per report.
pub fn comparison_table(reports: &[MetricsReport]) -> String {
    let rows: Vec<(&str, Cell)> = vec![
        ("records", Box::new(|r| r.record_count.to_string())),
        ("precision", Box::new(|r| format!("{:.4}", r.precision))),
        ("recall", Box::new(|r| format!("{:.4}", r.recall))),
        ("f1", Box::new(|r| format!("{:.4}", r.f1))),
        ("structured_acc", Box::new(|r| format!("{:.4}", r.structured_field_accuracy))),
        ("completeness", Box::new(|r| format!("{:.4}", r.completeness_overall))),
        ("geocode_success", Box::new(|r| format!("{:.4}", r.geocode_success_rate))),
        ("geocode_plausible", Box::new(|r| format!("{:.4}", r.geocode_plausible_rate))),
        ("pre_pass", Box::new(|r| format!("{:.4}", r.pre_pass_rate))),
        ("post_pass", Box::new(|r| format!("{:.4}", r.post_pass_rate))),
        ("repair_rate", Box::new(|r| format!("{:.4}", r.repair_rate))),
        ("runtime_mean_s", Box::new(|r| format!("{:.4}", r.runtime_mean_s))),
        ("runtime_p95_s", Box::new(|r| format!("{:.4}", r.runtime_p95_s))),
    ];
    let label_w = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0).max("metric".len());
    let col_w = reports.iter().map(|r| r.path.len()).max().unwrap_or(0).max(10);
    let mut out = format!("{:<label_w$}", "metric");
    for r in reports {
        write!(out, "  {:>col_w$}", r.path).expect("write to string");
    }
    out.push('\n');
    for (label, f) in &rows {
        write!(out, "{label:<label_w$}").expect("write to string");
        for r in reports {
            write!(out, "  {:>col_w$}", f(r)).expect("write to string");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::default_schema;
    use serde_json::json;

    fn rec(id: &str) -> CaseRecord {
        CaseRecord::empty(id)
    }

    #[test]
    fn alignment_join() {
        let a = align(&[rec("A"), rec("B")], &[rec("B"), rec("C")]).unwrap();
        assert_eq!(a.pairs.len(), 1);
        assert_eq!(a.unmatched_parsed_ids(), ["A"]);
        assert_eq!(a.unmatched_gold_ids(), ["C"]);
        assert_eq!(
            align(&[rec("A"), rec("A")], &[]),
            Err(AlignmentError::DuplicateParsed("A".into()))
        );
    }

    #[test]
    fn worked_example_half() {
        let rules: Vec<MatchRule> = ["demographic.name", "demographic.race_ethnicity", "spatial.city", "spatial.state", "spatial.county", "spatial.postal_code"]
            .iter()
            .map(|p| MatchRule {
                field_path: p.to_string(),
                comparator: Comparator::ExactCanonical,
            })
            .collect();
        let mut p = rec("X");
        let mut g = rec("X");
        p.demographic.name = Some("Ann  Lee".into());
        g.demographic.name = Some("ann lee".into());
        p.demographic.race_ethnicity = Some("White".into());
        g.demographic.race_ethnicity = Some("White".into());
        p.spatial.city = Some("Luray".into());
        g.spatial.city = Some("Orange".into());
        p.spatial.state = Some("Virginia".into());
        g.spatial.county = Some("Page County".into());
        let a = align(&[p], &[g]).unwrap();
        let c = slot_counts(&a, &rules);
        assert_eq!((c.tp, c.fp, c.fn_), (2, 2, 2));
        assert_eq!(c.prf(), (0.5, 0.5, 0.5));
    }

    #[test]
    fn degenerate_prf() {
        let rules = default_rules(&default_schema());
        let mut g = rec("X");
        g.demographic.name = Some("A".into());
        let mut p = rec("X");
        p.outcome.status = crate::schema::CaseStatus::Missing;
        p.demographic.sex = crate::schema::Sex::Unknown;
        let a = align(&[p.clone()], &[g.clone()]).unwrap();
        let c = slot_counts(&a, &rules);
        assert_eq!(c.fn_, 1);
        let identical = align(&[g.clone()], &[g]).unwrap();
        assert_eq!(field_prf(&identical, &rules), (1.0, 1.0, 1.0));
        let none = SlotCounts { tp: 0, fp: 0, fn_: 3 };
        assert_eq!(none.prf(), (0.0, 0.0, 0.0));
    }

    #[test]
    fn comparators() {
        assert!(values_match(Comparator::TimestampEq, &json!("2023-07-01T10:00:00"), &json!("2023-07-01")));
        assert!(!values_match(Comparator::TimestampEq, &json!("2023-07-01"), &json!("2023-07-01T10:00:00")));
        assert!(values_match(Comparator::SetEq, &json!(["Luray", "orange"]), &json!(["Orange", "Luray"])));
        assert!(values_match(Comparator::NumericEq, &json!(38), &json!(38.0)));
        assert!(!values_match(Comparator::NumericEq, &json!(38), &json!("38")));
    }

    #[test]
    fn scored_set() {
        let rules = default_rules(&default_schema());
        let paths: Vec<&str> = rules.iter().map(|r| r.field_path.as_str()).collect();
        assert!(paths.contains(&"narrative_osint.circumstances"));
        assert!(paths.contains(&"spatial.lat"));
        assert!(!paths.iter().any(|p| p.starts_with("provenance")));
        assert!(!paths.contains(&"narrative_osint.clothing_description"));
        assert!(!structured_paths(&rules).contains(&"narrative_osint.circumstances".to_string()));
    }

    #[test]
    fn completeness_and_geocode() {
        let mut rs = vec![rec("A"), rec("B"), rec("C")];
        for r in &mut rs {
            r.demographic.name = Some("n".into());
        }
        rs[0].temporal.last_seen_ts = Some("2023-01-01".into());
        rs[1].temporal.last_seen_ts = Some("2023-01-01".into());
        let (overall, by) = completeness(&rs, &["demographic.name", "temporal.last_seen_ts"]).unwrap();
        assert!((overall - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(by["demographic.name"], 1.0);
        assert!(completeness(&[], &["demographic.name"]).is_none());

        let mut geo: Vec<CaseRecord> = (0..10).map(|i| rec(&i.to_string())).collect();
        for (i, r) in geo.iter_mut().enumerate() {
            r.spatial.lat = Some(38.0);
            r.spatial.lon = Some(-78.0);
            r.spatial.geocode_method = GeocodeMethod::Gazetteer;
            r.spatial.geocode_plausible = Some(i != 0);
        }
        assert_eq!(geocode_rates(&geo), GeocodeRates { success: 1.0, plausible: Some(0.9) });
        let empty = geocode_rates(&[rec("A")]);
        assert_eq!((empty.success, empty.plausible), (0.0, None));
        assert_eq!(geocode_rates(&[]).success, 1.0);
    }

    #[test]
    fn repair_and_runtime() {
        let entry = |pre, passed, attempts| RepairLogEntry {
            document_id: "d".into(),
            segment_index: 0,
            case_id: "c".into(),
            pre_valid: pre,
            passed,
            attempts,
            reverted_paths: vec![],
        };
        let mut log: Vec<RepairLogEntry> = (0..8).map(|_| entry(true, true, 0)).collect();
        log.push(entry(false, true, 1));
        log.push(entry(false, true, 1));
        let s = repair_stats(&log).unwrap();
        assert_eq!((s.pre_pass_rate, s.post_pass_rate, s.repair_rate), (0.8, 1.0, 0.2));
        log[9] = entry(false, false, 2);
        assert_eq!(repair_stats(&log).unwrap().post_pass_rate, 0.9);

        let (mean, _) = runtime_stats(&[0.01, 0.05]).unwrap();
        assert!((mean - 0.03).abs() < 1e-15);
        assert_eq!(runtime_stats(&[]), Err(EmptySample));
        assert_eq!(runtime_stats(&[0.2; 100]).unwrap(), (0.2, 0.2));
        let ramp: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(runtime_stats(&ramp).unwrap().1, 19.0);
    }

    #[test]
    fn table_has_all_columns() {
        let schema = default_schema();
        let gold = [rec("A")];
        let input = EvalInput {
            path: "rule",
            parsed: &gold,
            gold: &gold,
            repair_log: None,
            runtimes_s: &[0.1],
            schema: &schema,
            key_fields: &DEFAULT_KEY_FIELDS,
            config_digest: sha256_hex(b""),
        };
        let r = evaluate(&input).unwrap();
        assert_eq!(r.config_digest, "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
        let t = comparison_table(&[r.clone(), MetricsReport { path: "llm".into(), ..r }]);
        assert!(t.lines().next().unwrap().contains("rule"));
        assert!(t.contains("f1"));
    }
}
