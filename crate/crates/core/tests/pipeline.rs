use std::path::Path;
use std::sync::Arc;

use casepipe::emit;
use casepipe::eval;
use casepipe::llm::doubles::{strip_derived, Scripted};
use casepipe::llm::BackendError;
use casepipe::pipeline::{self, BackendKind, PathsEnabled, Resources, RunConfig, RunError};
use casepipe::schema::{default_schema, SourceFamily};
use casepipe::synth::{synthesize, write_corpus, SynthesisSpec};
use serde_json::Value;

fn warnings(out: &Path) -> Vec<Value> {
    std::fs::read_to_string(out.join("warnings.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn codes(out: &Path) -> Vec<String> {
    warnings(out).iter().map(|w| w["code"].as_str().unwrap().to_string()).collect()
}

#[test]
fn zero_dropout_rule_path_is_exact_for_every_family() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthesisSpec::uniform(11, 12);
    write_corpus(&dir.path().join("in"), &synthesize(&spec), &spec).unwrap();
    let mut cfg = RunConfig::new(dir.path().join("in"), dir.path().join("out"));
    cfg.paths_enabled = PathsEnabled::Rule;
    pipeline::run(&cfg).unwrap();
    let parsed = emit::read_jsonl(&cfg.output_dir.join("cases_rule.jsonl")).unwrap();
    let gold = emit::read_jsonl(&dir.path().join("in/gold.jsonl")).unwrap();
    let rules = eval::default_rules(&default_schema());
    for family in SourceFamily::KNOWN {
        let pick = |rs: &[casepipe::schema::CaseRecord]| -> Vec<_> {
            rs.iter().filter(|r| r.provenance.source_family == family).cloned().collect()
        };
        let a = eval::align(&pick(&parsed), &pick(&gold)).unwrap();
        assert_eq!(a.pairs.len(), 12, "{family:?}");
        let (p, r, f1) = eval::field_prf(&a, &rules);
        assert_eq!((p, r, f1), (1.0, 1.0, 1.0), "{family:?}");
    }
}

#[test]
fn fixture_rule_record_matches_its_gold() {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/registry");
    let out = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::new(&fixtures, out.path());
    cfg.paths_enabled = PathsEnabled::Rule;
    pipeline::run(&cfg).unwrap();
    let rule = emit::read_jsonl(&out.path().join("cases_rule.jsonl")).unwrap();
    let raw = std::fs::read_to_string(fixtures.join("registry_culpeper.txt")).unwrap();
    let gold = casepipe::synth::parse_oracle_markers(&raw);
    let strip = |r: &casepipe::schema::CaseRecord| {
        let mut v = r.to_value();
        v.as_object_mut().unwrap().remove("provenance");
        v
    };
    assert_eq!(strip(&rule[0]), strip(&gold[0]));
    assert!(codes(out.path()).is_empty());
}

#[test]
fn parallel_llm_path_matches_sequential() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = SynthesisSpec::uniform(12, 6);
    spec.label_dropout_rate = 0.3;
    write_corpus(&dir.path().join("in"), &synthesize(&spec), &spec).unwrap();
    let mut bytes = Vec::new();
    for workers in [1, 4] {
        let mut cfg = RunConfig::new(dir.path().join("in"), dir.path().join(format!("out{workers}")));
        cfg.backend = BackendKind::DropoutOracle;
        cfg.seed = Some(5);
        cfg.workers = workers;
        cfg.max_in_flight = 2;
        pipeline::run(&cfg).unwrap();
        bytes.push((
            std::fs::read(cfg.output_dir.join("cases_llm.jsonl")).unwrap(),
            std::fs::read(cfg.output_dir.join("repair_log.jsonl")).unwrap(),
        ));
    }
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn backend_failures_are_logged_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthesisSpec::uniform(13, 1);
    write_corpus(&dir.path().join("in"), &synthesize(&spec), &spec).unwrap();
    let mut cfg = RunConfig::new(dir.path().join("in"), dir.path().join("out"));
    cfg.retry_base_ms = 0;
    let backend = Scripted::new(vec![
        Err(BackendError::Timeout),
        Ok("not json at all".into()),
        Ok("still not json".into()),
        Ok("{}".into()),
    ]);
    let s = pipeline::run_with(&cfg, &Resources::builtin(), Some(Arc::new(backend))).unwrap();
    assert_eq!(s.records_out_rule, 3);
    assert_eq!(s.records_out_llm, 1);
    let c = codes(&cfg.output_dir);
    assert!(c.contains(&"backend_error".to_string()), "{c:?}");
    assert!(c.contains(&"candidate_parse_failed".to_string()), "{c:?}");
    assert!(c.contains(&"empty_candidate".to_string()), "{c:?}");
    assert!(c.contains(&"case_id_fallback".to_string()), "{c:?}");
}

#[test]
fn odd_documents_degrade_with_warnings() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    std::fs::create_dir_all(&input).unwrap();
    std::fs::write(input.join("a_memo.txt"), "Quarterly budget memo.\nNothing about any case here at all, just numbers 1 2 3.\n").unwrap();
    std::fs::write(input.join("b_tiny.txt"), "x\n").unwrap();
    std::fs::write(input.join("c_ignored.md"), "NamUs MP1\n").unwrap();
    let mut cfg = RunConfig::new(&input, dir.path().join("out"));
    cfg.paths_enabled = PathsEnabled::Rule;
    let s = pipeline::run(&cfg).unwrap();
    assert_eq!(s.documents_in, 2);
    let c = codes(&cfg.output_dir);
    for expected in ["unknown_source", "low_quality_text", "case_id_fallback"] {
        assert!(c.contains(&expected.to_string()), "{expected} not in {c:?}");
    }
    let records = emit::read_jsonl(&cfg.output_dir.join("cases_rule.jsonl")).unwrap();
    assert!(records.iter().any(|r| r.case_id == "a_memo-0"));
}

#[test]
fn duplicate_case_ids_keep_the_first() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    let spec = SynthesisSpec::uniform(14, 1);
    let cases = synthesize(&spec);
    write_corpus(&input, &cases, &spec).unwrap();
    std::fs::copy(
        input.join(format!("{}.txt", cases[0].document_id)),
        input.join("zz_copy.txt"),
    )
    .unwrap();
    let mut cfg = RunConfig::new(&input, dir.path().join("out"));
    cfg.paths_enabled = PathsEnabled::Rule;
    let s = pipeline::run(&cfg).unwrap();
    assert_eq!(s.records_out_rule, 3);
    let records = emit::read_jsonl(&cfg.output_dir.join("cases_rule.jsonl")).unwrap();
    let kept = records.iter().find(|r| r.case_id == cases[0].gold.case_id).unwrap();
    assert_eq!(kept.provenance.document_id, cases[0].document_id);
    assert!(codes(&cfg.output_dir).contains(&"duplicate_case_id".to_string()));
}

#[test]
fn oracle_candidates_carry_no_derived_fields() {
    let gold = &synthesize(&SynthesisSpec::uniform(15, 1))[0].gold;
    let v = strip_derived(gold);
    assert!(v["spatial"]["lat"].is_null());
    assert!(v.get("provenance").is_none() || v["provenance"].is_null());
}

#[test]
fn startup_errors() {
    let dir = tempfile::tempdir().unwrap();
    let missing = RunConfig::new(dir.path().join("nope"), dir.path().join("out"));
    assert!(matches!(pipeline::run(&missing), Err(RunError::Invalid(_))));

    let mut bad_schema = RunConfig::new(dir.path(), dir.path().join("out"));
    bad_schema.schema_path = Some(dir.path().join("schema.txt"));
    assert!(pipeline::run(&bad_schema).is_err());

    let mut wire = RunConfig::new(dir.path(), dir.path().join("out"));
    wire.backend = BackendKind::Wire;
    if std::env::var_os(casepipe::llm::wire::ENV_EXTRACT_ENDPOINT).is_none() {
        assert!(matches!(pipeline::run(&wire), Err(RunError::Invalid(_))));
    }

    let mut no_gold = RunConfig::new(dir.path(), dir.path().join("out"));
    no_gold.gold_path = None;
    assert!(pipeline::evaluate(&no_gold, &default_schema()).is_err());
}

#[test]
fn summary_and_artifacts_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthesisSpec::uniform(16, 2);
    write_corpus(&dir.path().join("in"), &synthesize(&spec), &spec).unwrap();
    let mut cfg = RunConfig::new(dir.path().join("in"), dir.path().join("out"));
    cfg.gold_path = Some(dir.path().join("in/gold.jsonl"));
    let s = pipeline::run(&cfg).unwrap();
    assert_eq!((s.documents_in, s.segments, s.backend_calls), (6, 6, 6));
    for f in [
        "cases_rule.jsonl",
        "cases_rule.csv",
        "cases_llm.jsonl",
        "cases_llm.csv",
        "warnings.jsonl",
        "engine_calls.jsonl",
        "repair_log.jsonl",
        "runtimes.jsonl",
        "run_summary.json",
    ] {
        assert!(cfg.output_dir.join(f).exists(), "{f}");
    }
    let reports = pipeline::evaluate(&cfg, &default_schema()).unwrap();
    assert_eq!(reports.len(), 2);
    assert!(reports.iter().all(|r| r.config_digest == cfg.digest()));
    assert!(cfg.output_dir.join("comparison.txt").exists());
    assert!(cfg.output_dir.join("eval_llm.json").exists());
}

#[test]
fn unknown_documents_route_to_the_model_when_enabled() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    std::fs::create_dir_all(&input).unwrap();
    std::fs::write(input.join("memo.txt"), "Quarterly budget memo.\nNothing about any case here at all, just numbers 1 2 3.\n").unwrap();
    let mut cfg = RunConfig::new(&input, dir.path().join("out"));
    let s = pipeline::run(&cfg).unwrap();
    assert_eq!((s.records_out_rule, s.records_out_llm, s.backend_calls), (0, 1, 1));
    cfg.paths_enabled = PathsEnabled::Rule;
    cfg.output_dir = dir.path().join("out_rule");
    let s = pipeline::run(&cfg).unwrap();
    assert_eq!((s.records_out_rule, s.backend_calls), (1, 0));
    assert!(codes(&cfg.output_dir).contains(&"generic_fallback".to_string()));
}

#[test]
fn both_paths_emit_the_same_case_ids_and_rule_only_never_calls_the_backend() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthesisSpec::uniform(17, 4);
    write_corpus(&dir.path().join("in"), &synthesize(&spec), &spec).unwrap();
    let cfg = RunConfig::new(dir.path().join("in"), dir.path().join("both"));
    pipeline::run(&cfg).unwrap();
    let ids = |f: &str| -> Vec<String> {
        emit::read_jsonl(&cfg.output_dir.join(f)).unwrap().into_iter().map(|r| r.case_id).collect()
    };
    assert_eq!(ids("cases_rule.jsonl"), ids("cases_llm.jsonl"));
    for r in emit::read_jsonl(&cfg.output_dir.join("cases_rule.jsonl")).unwrap() {
        assert_eq!(r.provenance.extraction_path, casepipe::schema::ExtractionPath::Rule);
        assert_eq!(r.provenance.repair_count, 0);
    }

    let mut rule_only = cfg.clone();
    rule_only.paths_enabled = PathsEnabled::Rule;
    rule_only.output_dir = dir.path().join("rule");
    let s = pipeline::run(&rule_only).unwrap();
    assert_eq!(s.backend_calls, 0);
    assert!(!rule_only.output_dir.join("cases_llm.jsonl").exists());
    assert_eq!(s.warnings_by_severity.get("error").copied().unwrap_or(0), 0);
}
