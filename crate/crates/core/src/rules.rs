//! Deterministic label-rule extraction per source family.
//!
//! Rule scopes:
//! - `line`: the pattern is tried against each line on its own.
//! - `section`: the pattern runs once over the whole segment in multi-line
//!   mode, so captures may span lines (titled blocks).
//! - `document`: like `section`, but every match is used; with `list`, each
//!   match is split into items.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::config::{read_json_lines, read_to_string, ConfigError};
use crate::detect::DetectionResult;
use crate::schema::SourceFamily;
use crate::text::CaseSegment;
use crate::warning::{codes, Stage, Warning};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleScope {
    Line,
    Section,
    Document,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelRule {
    pub pattern_id: String,
    pub field_path: String,
    pub pattern: String,
    pub scope: RuleScope,
    /// Split each capture into list items at `,`, ` or `, ` and `.
    #[serde(default)]
    pub list: bool,
    /// Captured values equal (case-insensitively) to one of these are ignored.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reject: Vec<String>,
}

#[derive(Debug, Clone)]
struct CompiledRule {
    rule: LabelRule,
    regex: Regex,
}

#[derive(Debug, Clone, Default)]
pub struct RuleSet {
    rules: Vec<CompiledRule>,
}

impl RuleSet {
    pub fn new(rules: Vec<LabelRule>) -> Result<Self, ConfigError> {
        let rules = rules
            .into_iter()
            .map(|rule| {
                let source = match rule.scope {
                    RuleScope::Line => rule.pattern.clone(),
                    _ => format!("(?m){}", rule.pattern),
                };
                let regex = Regex::new(&source).map_err(|e| {
                    ConfigError::Invalid(format!("rule {}: bad pattern: {e}", rule.pattern_id))
                })?;
                if regex.captures_len() != 2 {
                    return Err(ConfigError::Invalid(format!(
                        "rule {}: pattern must have exactly one capture group",
                        rule.pattern_id
                    )));
                }
                Ok(CompiledRule { rule, regex })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(RuleSet { rules })
    }

    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        RuleSet::new(read_json_lines(text, "rules")?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        RuleSet::from_text(&read_to_string(path)?)
    }

    pub fn rules(&self) -> impl Iterator<Item = &LabelRule> {
        self.rules.iter().map(|r| &r.rule)
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }
}

/// One rule set per known family.
#[derive(Debug, Clone, Default)]
pub struct RuleSets {
    pub registry_form: RuleSet,
    pub bulletin: RuleSet,
    pub narrative_profile: RuleSet,
}

impl RuleSets {
    pub fn builtin() -> Self {
        use crate::config::defaults;
        RuleSets {
            registry_form: RuleSet::from_text(defaults::RULES_REGISTRY_FORM).expect("bundled rules"),
            bulletin: RuleSet::from_text(defaults::RULES_BULLETIN).expect("bundled rules"),
            narrative_profile: RuleSet::from_text(defaults::RULES_NARRATIVE_PROFILE)
                .expect("bundled rules"),
        }
    }

    /// Loads `<family>.jsonl` for each family from `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, ConfigError> {
        let load = |f: SourceFamily| RuleSet::load(&dir.join(format!("{}.jsonl", f.as_str())));
        Ok(RuleSets {
            registry_form: load(SourceFamily::RegistryForm)?,
            bulletin: load(SourceFamily::Bulletin)?,
            narrative_profile: load(SourceFamily::NarrativeProfile)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldCandidate {
    pub field_path: String,
    pub raw_value: String,
    pub char_start: usize,
    pub char_end: usize,
    pub pattern_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DraftRecord {
    pub candidates: BTreeMap<String, FieldCandidate>,
    pub source_label: String,
    pub segment_index: usize,
    pub warnings: Vec<Warning>,
}

/// Maps byte offsets to char offsets for one text.
struct CharIndex {
    starts: Vec<usize>,
    len_bytes: usize,
}

impl CharIndex {
    fn new(text: &str) -> Self {
        CharIndex {
            starts: text.char_indices().map(|(b, _)| b).collect(),
            len_bytes: text.len(),
        }
    }

    fn char_at(&self, byte: usize) -> usize {
        if byte >= self.len_bytes {
            return self.starts.len();
        }
        self.starts.partition_point(|&b| b < byte)
    }
}

/// Byte span of `s[start..end]` with surrounding whitespace removed.
fn trim_span(text: &str, start: usize, end: usize) -> (usize, usize) {
    let slice = &text[start..end];
    let lead = slice.len() - slice.trim_start().len();
    let trail = slice.len() - slice.trim_end().len();
    if lead == slice.len() {
        return (start, start);
    }
    (start + lead, end - trail)
}

fn split_items(text: &str, start: usize, end: usize) -> Vec<(usize, usize)> {
    static SEP: OnceLock<Regex> = OnceLock::new();
    let sep = SEP.get_or_init(|| {
        Regex::new(r",\s*(?:or|and)\s+|,\s*|\s+or\s+|\s+and\s+").expect("static pattern")
    });
    let mut out = Vec::new();
    let mut cursor = start;
    for m in sep.find_iter(&text[start..end]) {
        out.push((cursor, start + m.start()));
        cursor = start + m.end();
    }
    out.push((cursor, end));
    out.into_iter()
        .map(|(s, e)| trim_span(text, s, e))
        .filter(|(s, e)| e > s)
        .collect()
}

struct Collector<'a> {
    text: &'a str,
    index: CharIndex,
    draft: DraftRecord,
    list_counts: BTreeMap<String, usize>,
}

impl<'a> Collector<'a> {
    fn offer(&mut self, rule: &LabelRule, start: usize, end: usize) -> bool {
        let (s, e) = trim_span(self.text, start, end);
        if e == s {
            return false;
        }
        let value = &self.text[s..e];
        if rule.reject.iter().any(|r| r.eq_ignore_ascii_case(value)) {
            return false;
        }
        if rule.list {
            for (is, ie) in split_items(self.text, s, e) {
                let item = &self.text[is..ie];
                let existing = self
                    .draft
                    .candidates
                    .range(format!("{}.", rule.field_path)..)
                    .take_while(|(k, _)| k.starts_with(&format!("{}.", rule.field_path)))
                    .any(|(_, c)| c.raw_value.eq_ignore_ascii_case(item));
                if existing {
                    continue;
                }
                let n = self.list_counts.entry(rule.field_path.clone()).or_insert(0);
                let path = format!("{}.{}", rule.field_path, n);
                *n += 1;
                self.insert(path, rule, is, ie);
            }
            return true;
        }
        if let Some(prev) = self.draft.candidates.get(&rule.field_path) {
            if prev.raw_value != value {
                self.draft.warnings.push(Warning::warn(
                    Stage::Parse,
                    codes::DUPLICATE_MATCH,
                    format!(
                        "{}: later match {:?} from {} dropped; kept {:?} from {}",
                        rule.field_path, value, rule.pattern_id, prev.raw_value, prev.pattern_id
                    ),
                ));
            }
            return true;
        }
        self.insert(rule.field_path.clone(), rule, s, e);
        true
    }

    fn insert(&mut self, path: String, rule: &LabelRule, s: usize, e: usize) {
        let candidate = FieldCandidate {
            field_path: path.clone(),
            raw_value: self.text[s..e].to_string(),
            char_start: self.index.char_at(s),
            char_end: self.index.char_at(e),
            pattern_id: rule.pattern_id.clone(),
        };
        self.draft.candidates.insert(path, candidate);
    }
}

fn apply_rules(segment: &CaseSegment, rules: &RuleSet, source_label: &str) -> DraftRecord {
    let text = segment.text.as_str();
    let mut c = Collector {
        text,
        index: CharIndex::new(text),
        draft: DraftRecord {
            source_label: source_label.to_string(),
            segment_index: segment.segment_index,
            ..Default::default()
        },
        list_counts: BTreeMap::new(),
    };
    for compiled in &rules.rules {
        let rule = &compiled.rule;
        match rule.scope {
            RuleScope::Line => {
                let mut offset = 0;
                for line in text.split('\n') {
                    if let Some(g) = compiled.regex.captures(line).and_then(|caps| caps.get(1)) {
                        c.offer(rule, offset + g.start(), offset + g.end());
                    }
                    offset += line.len() + 1;
                }
            }
            RuleScope::Section => {
                for caps in compiled.regex.captures_iter(text) {
                    let g = caps.get(1).expect("one group");
                    c.offer(rule, g.start(), g.end());
                }
            }
            RuleScope::Document => {
                for caps in compiled.regex.captures_iter(text) {
                    let g = caps.get(1).expect("one group");
                    c.offer(rule, g.start(), g.end());
                }
            }
        }
    }
    c.draft
}

pub fn parse_registry_form(segment: &CaseSegment, rules: &RuleSet, source_label: &str) -> DraftRecord {
    apply_rules(segment, rules, source_label)
}

pub fn parse_bulletin(segment: &CaseSegment, rules: &RuleSet, source_label: &str) -> DraftRecord {
    apply_rules(segment, rules, source_label)
}

const CIRCUMSTANCES: &str = "narrative_osint.circumstances";
const PROSE_MIN_CHARS: usize = 60;

/// Label rules, then the longest label-free paragraph as circumstances when
/// no rule captured them.
pub fn parse_narrative_profile(
    segment: &CaseSegment,
    rules: &RuleSet,
    source_label: &str,
) -> DraftRecord {
    let mut draft = apply_rules(segment, rules, source_label);
    if draft.candidates.contains_key(CIRCUMSTANCES) {
        return draft;
    }
    if let Some((s, e)) = longest_prose_block(&segment.text) {
        let index = CharIndex::new(&segment.text);
        draft.candidates.insert(
            CIRCUMSTANCES.to_string(),
            FieldCandidate {
                field_path: CIRCUMSTANCES.to_string(),
                raw_value: segment.text[s..e].to_string(),
                char_start: index.char_at(s),
                char_end: index.char_at(e),
                pattern_id: "prose_block".to_string(),
            },
        );
    }
    draft
}

fn longest_prose_block(text: &str) -> Option<(usize, usize)> {
    static LABEL: OnceLock<Regex> = OnceLock::new();
    let label = LABEL
        .get_or_init(|| Regex::new(r"^[A-Za-z][A-Za-z0-9 /&#'()-]{0,40}:").expect("static pattern"));
    let mut best: Option<(usize, usize)> = None;
    let mut block_start: Option<usize> = None;
    let mut has_label = false;
    let mut offset = 0;
    let close = |start: Option<usize>, end: usize, has_label: bool, best: &mut Option<(usize, usize)>| {
        if let Some(s) = start {
            let (s, e) = trim_span(text, s, end);
            let chars = text[s..e].chars().count();
            let longer = best.is_none_or(|(bs, be)| chars > text[bs..be].chars().count());
            if !has_label && chars >= PROSE_MIN_CHARS && longer {
                *best = Some((s, e));
            }
        }
    };
    for line in text.split('\n') {
        let end = offset + line.len();
        if line.trim().is_empty() {
            close(block_start.take(), offset, has_label, &mut best);
            has_label = false;
        } else {
            if block_start.is_none() {
                block_start = Some(offset);
            }
            has_label |= label.is_match(line);
        }
        offset = end + 1;
    }
    close(block_start, text.len(), has_label, &mut best);
    best
}

/// Routes a segment to its family parser. Unknown sources use the registry
/// rules and carry a routing warning.
pub fn dispatch(detection: &DetectionResult, segment: &CaseSegment, rulesets: &RuleSets) -> DraftRecord {
    let label = detection.source_label.as_str();
    match detection.family {
        SourceFamily::RegistryForm => parse_registry_form(segment, &rulesets.registry_form, label),
        SourceFamily::Bulletin => parse_bulletin(segment, &rulesets.bulletin, label),
        SourceFamily::NarrativeProfile => {
            parse_narrative_profile(segment, &rulesets.narrative_profile, label)
        }
        SourceFamily::Unknown => {
            let mut draft = parse_registry_form(segment, &rulesets.registry_form, label);
            draft.warnings.insert(
                0,
                Warning::warn(
                    Stage::Parse,
                    codes::GENERIC_FALLBACK,
                    "unknown source family; parsed with registry-form rules",
                ),
            );
            draft
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seg(text: &str) -> CaseSegment {
        CaseSegment::whole(text)
    }

    fn value<'a>(d: &'a DraftRecord, path: &str) -> Option<&'a str> {
        d.candidates.get(path).map(|c| c.raw_value.as_str())
    }

    fn assert_spans(d: &DraftRecord, text: &str) {
        let chars: Vec<char> = text.chars().collect();
        for c in d.candidates.values() {
            let span: String = chars[c.char_start..c.char_end].iter().collect();
            assert_eq!(span.trim(), c.raw_value, "{}", c.field_path);
        }
    }

    const REGISTRY: &str = "NamUs MP900001\nCase Information\nCase Number: MP900001\n\
Date of Last Contact: July 1, 2023\nSubject Identification\nName: Ada Example\nBiological Sex: Female\n\
Last Known Location\nCulpeper, Virginia 22701\nCulpeper County\n\nCircumstances of Disappearance\n\
She left on foot and is believed to be en route to Maryland or Delaware.\n\nPhysical Description\n\
Clothing: gray hooded sweatshirt";

    #[test]
    fn registry_labels_and_blocks() {
        let d = parse_registry_form(&seg(REGISTRY), &RuleSets::builtin().registry_form, "reg");
        assert_eq!(value(&d, "spatial.city"), Some("Culpeper"));
        assert_eq!(value(&d, "spatial.state"), Some("Virginia"));
        assert_eq!(value(&d, "spatial.postal_code"), Some("22701"));
        assert_eq!(value(&d, "spatial.county"), Some("Culpeper County"));
        assert_eq!(value(&d, "spatial.last_seen_location"), Some("Culpeper, Virginia 22701"));
        assert_eq!(value(&d, "temporal.last_seen_ts"), Some("July 1, 2023"));
        assert_eq!(value(&d, "case_id"), Some("MP900001"));
        assert_eq!(
            value(&d, "narrative_osint.circumstances"),
            Some("She left on foot and is believed to be en route to Maryland or Delaware.")
        );
        assert_eq!(value(&d, "narrative_osint.movement_cues.0"), Some("Maryland"));
        assert_eq!(value(&d, "narrative_osint.movement_cues.1"), Some("Delaware"));
        assert_eq!(value(&d, "narrative_osint.clothing_description"), Some("gray hooded sweatshirt"));
        assert!(d.warnings.is_empty());
        assert_spans(&d, REGISTRY);
    }

    #[test]
    fn no_labels_no_candidates() {
        let d = parse_registry_form(&seg("nothing to see here"), &RuleSets::builtin().registry_form, "r");
        assert!(d.candidates.is_empty());
    }

    #[test]
    fn bulletin_terse_labels() {
        let text = "STATE POLICE MISSING PERSON BULLETIN\nMISSING: JANE DOE\nLAST SEEN: 07/01/2023\nSEX: F";
        let d = parse_bulletin(&seg(text), &RuleSets::builtin().bulletin, "b");
        assert_eq!(value(&d, "demographic.name"), Some("JANE DOE"));
        assert_eq!(value(&d, "temporal.last_seen_ts"), Some("07/01/2023"));
        assert_eq!(value(&d, "demographic.sex"), Some("F"));
        assert_spans(&d, text);
        assert!(parse_bulletin(&seg(""), &RuleSets::builtin().bulletin, "b").candidates.is_empty());
    }

    #[test]
    fn narrative_name_header_and_prose() {
        let text = "Ada Example\n\nShe was last seen walking along the river path near her home after dinner that evening.";
        let d = parse_narrative_profile(&seg(text), &RuleSets::builtin().narrative_profile, "n");
        let keys: Vec<&str> = d.candidates.keys().map(String::as_str).collect();
        assert_eq!(keys, ["demographic.name", "narrative_osint.circumstances"]);
        assert_eq!(value(&d, "demographic.name"), Some("Ada Example"));
        assert_spans(&d, text);
    }

    #[test]
    fn narrative_rejects_section_title_as_name() {
        let text = "Vital Statistics\nSex: Female";
        let d = parse_narrative_profile(&seg(text), &RuleSets::builtin().narrative_profile, "n");
        assert_eq!(value(&d, "demographic.name"), None);
        assert_eq!(value(&d, "demographic.sex"), Some("Female"));
    }

    #[test]
    fn narrative_cues_only_from_explicit_patterns() {
        let rules = RuleSets::builtin().narrative_profile;
        let with = "Ada\n\nShe is believed to be en route to Maryland or Delaware.";
        let d = parse_narrative_profile(&seg(with), &rules, "n");
        assert_eq!(value(&d, "narrative_osint.movement_cues.0"), Some("Maryland"));
        assert_eq!(value(&d, "narrative_osint.movement_cues.1"), Some("Delaware"));
        assert_spans(&d, with);
        let without = "Ada\n\nShe likes Maryland and went to the store.";
        let d = parse_narrative_profile(&seg(without), &rules, "n");
        assert!(!d.candidates.keys().any(|k| k.contains("movement_cues")));
    }

    #[test]
    fn duplicate_match_first_wins_with_warning() {
        let text = "Name: First Person\nName: Second Person";
        let d = parse_registry_form(&seg(text), &RuleSets::builtin().registry_form, "r");
        assert_eq!(value(&d, "demographic.name"), Some("First Person"));
        assert_eq!(d.warnings.len(), 1);
        assert_eq!(d.warnings[0].code, codes::DUPLICATE_MATCH);
    }

    #[test]
    fn dispatch_routes_by_family() {
        let sets = RuleSets::builtin();
        let s = seg("MISSING: JANE DOE\nName: Jane Roe");
        let mut det = DetectionResult::unknown();
        det.family = SourceFamily::Bulletin;
        det.source_label = "b".into();
        assert_eq!(value(&dispatch(&det, &s, &sets), "demographic.name"), Some("JANE DOE"));
        det.family = SourceFamily::RegistryForm;
        assert_eq!(value(&dispatch(&det, &s, &sets), "demographic.name"), Some("Jane Roe"));
        let d = dispatch(&DetectionResult::unknown(), &s, &sets);
        assert_eq!(value(&d, "demographic.name"), Some("Jane Roe"));
        assert_eq!(d.warnings[0].code, codes::GENERIC_FALLBACK);
        assert_eq!(d.source_label, "unknown");
    }

    #[test]
    fn rule_validation() {
        let two = r#"{"pattern_id":"x","field_path":"a","pattern":"(a)(b)","scope":"line"}"#;
        assert!(RuleSet::from_text(two).is_err());
        let none = r#"{"pattern_id":"x","field_path":"a","pattern":"ab","scope":"line"}"#;
        assert!(RuleSet::from_text(none).is_err());
        let bad = r#"{"pattern_id":"x","field_path":"a","pattern":"(","scope":"line"}"#;
        assert!(RuleSet::from_text(bad).is_err());
    }

    #[test]
    fn offsets_count_chars_not_bytes() {
        let text = "Name: Zoë Ñandú\nSex: Female";
        let d = parse_registry_form(&seg(text), &RuleSets::builtin().registry_form, "r");
        let c = &d.candidates["demographic.sex"];
        assert_eq!((c.char_start, c.char_end), (21, 27));
        assert_spans(&d, text);
    }

    proptest! {
        #[test]
        fn spans_always_cite_raw_values(
            lines in proptest::collection::vec("[A-Za-z :,0-9é]{0,30}", 0..12),
            pick in proptest::collection::vec(0usize..6, 0..12),
        ) {
            let labels = ["Name: ", "Height: ", "Case Number: ", "Last Known Location\n", "", "Circumstances of Disappearance\n"];
            let text: String = lines.iter().zip(pick.iter().chain(std::iter::repeat(&4)))
                .map(|(l, p)| format!("{}{}\n", labels[*p], l)).collect();
            let sets = RuleSets::builtin();
            for family in [&sets.registry_form, &sets.bulletin, &sets.narrative_profile] {
                let a = parse_narrative_profile(&seg(&text), family, "x");
                let b = parse_narrative_profile(&seg(&text), family, "x");
                prop_assert_eq!(&a, &b);
                assert_spans(&a, &text);
            }
        }
    }
}
