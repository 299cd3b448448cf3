//! Acceptance suite: one test per criterion, each printing a PASS line.
//!
//! Criteria:
//!  1. oracle closure — perfect answers give micro F1 = 1.0 for all four
//!     formulations on a 200-example synthetic dataset, in under 10 s;
//!  2. metric equivalence against an independent brute-force scorer;
//!  3. byte-exact golden prompts for a pinned example, with anchor strings;
//!  4. type-constraint behavior (no org: options for PERSON heads; 19
//!     options A–S for every SemEval example);
//!  5. the 0.5 entailment threshold rule, flipping exactly at the threshold;
//!  6. option-letter parsing round-trips and garbage never crashes;
//!  7. cold-vs-warm cache determinism with zero warm network calls;
//!  8. the few-shot protocol (k-cap, type-matched demos, {1,2,5} search on
//!     100 dev examples);
//!  9. optional live smoke test, enabled by RELEVAL_SMOKE_* variables.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use releval::backend::testing::OracleBackend;
use releval::backend::{CachedBackend, HttpBackend, HttpConfig, ResponseCache, WireProtocol};
use releval::candidates::{build_candidates, option_letter, retained_relations};
use releval::corpus::{load_tacred_family, parse_semeval_text, sample_kshot, sample_test, Split};
use releval::evaluate::confusion;
use releval::formulate::{build_nli, build_qa4re, build_vanilla, build_vanilla_temp, Formulation};
use releval::infer::{aggregate_nli, parse_qa4re, ParseStatus};
use releval::runner::{
    populate_oracle_for_examples, run_experiment_with_backend, search_n_demos, select_demos,
    BackendSpec, ExperimentConfig, NDemos, RelaxationLevel, RunnerError,
};
use releval::schema::{load_schema, schema_from_strs, DatasetId, RelationSchema, TemplateSet};
use releval::testing::{synthetic_examples, synthetic_schema, write_synthetic_data_dir};

fn repo_data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn tacred_schema_and_templates() -> (RelationSchema, TemplateSet) {
    let data = repo_data_dir();
    let template_path = data.join("templates/tacred_sure.json");
    let loaded = load_schema(
        DatasetId::Tacred,
        &template_path,
        Some(&data.join("constraints/tacred_constraints.json")),
    )
    .expect("shipped tacred schema loads");
    let ts = releval::schema::load_template_set("sure", &loaded.schema, &template_path)
        .expect("shipped template set loads");
    (loaded.schema, ts)
}

fn synthetic_config(data_dir: &Path, out_dir: &Path, formulation: Formulation) -> ExperimentConfig {
    ExperimentConfig {
        dataset: DatasetId::Tacred,
        formulation,
        template_set: "sure".to_string(),
        data_dir: data_dir.to_path_buf(),
        sample_size: 200,
        seed: 11,
        backend: BackendSpec {
            model: "oracle-model".to_string(),
            ..BackendSpec::default()
        },
        out_dir: out_dir.to_path_buf(),
        cache_path: out_dir.join("cache.jsonl"),
        run_id: Some("acceptance".to_string()),
        ..ExperimentConfig::default()
    }
}

/// Criterion 1: with the oracle backend, every formulation closes the loop
/// at micro F1 = 1.0 exactly on 200 synthetic examples, within 10 seconds.
#[test]
fn criterion_1_oracle_closure() {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let schema = synthetic_schema();
    write_synthetic_data_dir(dir.path(), &schema, 300, 150, 250, 7).unwrap();
    let ts = TemplateSet::from_schema(&schema, "sure");

    let test_pool = load_tacred_family(
        &dir.path().join("tacred/test.json"),
        &schema,
        Split::Test,
    )
    .unwrap();

    for formulation in [
        Formulation::Vanilla,
        Formulation::VanillaTemp,
        Formulation::Qa4re,
        Formulation::Nli4re,
    ] {
        let out = tempfile::tempdir().unwrap();
        let config = synthetic_config(dir.path(), out.path(), formulation);
        let oracle = OracleBackend::new();
        populate_oracle_for_examples(
            &oracle, &schema, &ts, formulation, &test_pool, None, &[], config.seed, None, 0.9, 0.1,
        )
        .unwrap();
        let artifacts = run_experiment_with_backend(&config, &oracle).unwrap();
        assert_eq!(
            artifacts.metrics.micro_f1_excl_nota, 1.0,
            "{formulation} did not close at F1 = 1.0"
        );
        assert_eq!(artifacts.metrics.n_examples, 200);
        assert_eq!(artifacts.metrics.fallback_rate, 0.0);
    }

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}, budget 10 s");
    println!("criterion 1 PASS: oracle closure at micro F1 = 1.0 for all four formulations ({elapsed:?})");
}

/// Independent scorer for criterion 2: per-class tabulation over the label
/// list, micro/macro/P-vs-N all recomputed from scratch.
#[allow(clippy::type_complexity)]
fn brute_force_metrics(
    golds: &[String],
    preds: &[String],
    labels: &[String],
    nota: &str,
) -> (f64, f64, f64, f64, f64, f64) {
    let f1_of = |tp: usize, fp: usize, fn_: usize| -> f64 {
        if 2 * tp + fp + fn_ == 0 {
            0.0
        } else {
            2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
        }
    };

    // Per-class exact-match confusion.
    let mut tp_sum_pos = 0usize;
    let mut fp_sum_pos = 0usize;
    let mut fn_sum_pos = 0usize;
    let mut class_f1 = Vec::new();
    for label in labels {
        let tp = golds
            .iter()
            .zip(preds)
            .filter(|(g, p)| *g == label && *p == label)
            .count();
        let fp = golds
            .iter()
            .zip(preds)
            .filter(|(g, p)| *g != label && *p == label)
            .count();
        let fn_ = golds
            .iter()
            .zip(preds)
            .filter(|(g, p)| *g == label && *p != label)
            .count();
        if label != nota {
            tp_sum_pos += tp;
            fp_sum_pos += fp;
            fn_sum_pos += fn_;
        }
        if tp + fp + fn_ > 0 {
            class_f1.push(f1_of(tp, fp, fn_));
        }
    }

    // Micro over positive classes only. A positive prediction with a NoTA
    // gold is an FP of its class, so the sums reproduce the standard
    // predicted-positive / gold-positive denominators.
    let precision = if tp_sum_pos + fp_sum_pos == 0 {
        0.0
    } else {
        tp_sum_pos as f64 / (tp_sum_pos + fp_sum_pos) as f64
    };
    let recall = if tp_sum_pos + fn_sum_pos == 0 {
        0.0
    } else {
        tp_sum_pos as f64 / (tp_sum_pos + fn_sum_pos) as f64
    };
    let micro = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };

    let macro_incl = if class_f1.is_empty() {
        0.0
    } else {
        class_f1.iter().sum::<f64>() / class_f1.len() as f64
    };

    // Binary collapse.
    let b = |s: &String| if s == nota { "N" } else { "P" };
    let bg: Vec<&str> = golds.iter().map(b).collect();
    let bp: Vec<&str> = preds.iter().map(b).collect();
    let mut pvn_class_f1 = Vec::new();
    let mut correct = 0usize;
    for class in ["P", "N"] {
        let tp = bg.iter().zip(&bp).filter(|(g, p)| **g == class && **p == class).count();
        let fp = bg.iter().zip(&bp).filter(|(g, p)| **g != class && **p == class).count();
        let fn_ = bg.iter().zip(&bp).filter(|(g, p)| **g == class && **p != class).count();
        correct += tp;
        if tp + fp + fn_ > 0 {
            pvn_class_f1.push(f1_of(tp, fp, fn_));
        }
    }
    let pvn_micro = if golds.is_empty() {
        0.0
    } else {
        correct as f64 / golds.len() as f64
    };
    let pvn_macro = if pvn_class_f1.is_empty() {
        0.0
    } else {
        pvn_class_f1.iter().sum::<f64>() / pvn_class_f1.len() as f64
    };

    (precision, recall, micro, macro_incl, pvn_micro, pvn_macro)
}

/// Criterion 2: the metric suite matches the brute-force scorer to 1e-12 on
/// randomized vectors over a 10-label schema, and reproduces the worked
/// four-example case.
#[test]
fn criterion_2_metric_oracle_equivalence() {
    let mut templates = String::from("{\"no_relation\": \"{E_h} has no known relations to {E_t}\"");
    for i in 1..=9 {
        templates.push_str(&format!(", \"per:r{i}\": \"{{E_h}} r{i} {{E_t}}\""));
    }
    templates.push('}');
    let schema = schema_from_strs(DatasetId::Tacred, &templates, None)
        .unwrap()
        .schema;
    let labels: Vec<String> = schema.labels().map(str::to_string).collect();
    let nota = schema.nota_label.clone();

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut total_pairs = 0;
    let mut vectors = 0;
    while total_pairs < 1000 {
        let len = rng.gen_range(1..=120);
        // Skew some vectors heavily toward NoTA to stress the degenerate
        // denominators.
        let nota_weight = rng.gen_range(1..=8);
        let pick = |rng: &mut ChaCha8Rng| -> String {
            if rng.gen_range(0..10) < nota_weight {
                nota.clone()
            } else {
                labels[rng.gen_range(1..labels.len())].clone()
            }
        };
        let golds: Vec<String> = (0..len).map(|_| pick(&mut rng)).collect();
        let preds: Vec<String> = (0..len).map(|_| pick(&mut rng)).collect();
        total_pairs += len;
        vectors += 1;

        let counts = confusion(&golds, &preds, &schema).unwrap();
        let (p, r, micro) = counts.micro_f1_excl_nota();
        let macro_incl = counts.macro_f1_incl_nota();
        let (pvn_micro, pvn_macro) = counts.pvn_f1();
        let (bp, br, bmicro, bmacro, bpvn_micro, bpvn_macro) =
            brute_force_metrics(&golds, &preds, &labels, &nota);
        for (ours, brute, name) in [
            (p, bp, "precision"),
            (r, br, "recall"),
            (micro, bmicro, "micro"),
            (macro_incl, bmacro, "macro"),
            (pvn_micro, bpvn_micro, "pvn micro"),
            (pvn_macro, bpvn_macro, "pvn macro"),
        ] {
            assert!(
                (ours - brute).abs() <= 1e-12,
                "{name} diverged: {ours} vs {brute}"
            );
        }
    }

    // The worked case: golds [r1, r1, NoTA, r2], preds [r1, NoTA, r1, r2].
    let golds: Vec<String> = ["per:r1", "per:r1", "no_relation", "per:r2"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let preds: Vec<String> = ["per:r1", "no_relation", "per:r1", "per:r2"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let counts = confusion(&golds, &preds, &schema).unwrap();
    let (p, r, f1) = counts.micro_f1_excl_nota();
    assert!((p - 2.0 / 3.0).abs() <= 1e-12);
    assert!((r - 2.0 / 3.0).abs() <= 1e-12);
    assert!((f1 - 2.0 / 3.0).abs() <= 1e-12);

    println!("criterion 2 PASS: metrics match brute force on {vectors} vectors / {total_pairs} pairs and the worked case");
}

/// Criterion 3: the four formulations render byte-identically to the golden
/// files for the pinned example, and each carries its anchor string.
#[test]
fn criterion_3_golden_prompts() {
    let (schema, ts) = tacred_schema_and_templates();
    let samples = load_tacred_family(
        &repo_data_dir().join("samples/tacred_sample.json"),
        &schema,
        Split::Test,
    )
    .unwrap();
    let pinned = samples.iter().find(|e| e.id == "sample-0001").unwrap();
    let candidates = build_candidates(&schema, &ts, pinned).unwrap();

    let golden_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let golden = |name: &str| std::fs::read_to_string(golden_dir.join(name)).unwrap();

    let vanilla = build_vanilla(pinned, &candidates, &[]);
    assert_eq!(vanilla.text, golden("tacred_vanilla.txt"), "vanilla golden");
    assert!(vanilla
        .text
        .contains("classify the relationship between the two entities"));

    let vanilla_temp = build_vanilla_temp(pinned, &candidates, &[], &ts);
    assert_eq!(
        vanilla_temp.text,
        golden("tacred_vanilla_temp.txt"),
        "vanilla-temp golden"
    );
    assert!(vanilla_temp.text.contains("listed below with explanations"));

    let qa4re = build_qa4re(pinned, &candidates, &[]);
    assert_eq!(qa4re.text, golden("tacred_qa4re.txt"), "qa4re golden");
    assert!(qa4re
        .text
        .contains("Determine which option can be inferred from the given Sentence."));

    let nli = build_nli(pinned, &candidates).unwrap();
    assert_eq!(nli.len(), 3);
    for (i, prompt) in nli.iter().enumerate() {
        assert_eq!(
            prompt.text,
            golden(&format!("tacred_nli4re_{i}.txt")),
            "nli golden {i}"
        );
        assert!(prompt
            .text
            .contains("entails (implies), contradicts (opposes), or is neutral"));
    }

    println!("criterion 3 PASS: all golden prompts byte-identical with anchor strings present");
}

/// Criterion 4: PERSON-headed examples keep no org: options; every SemEval
/// example yields exactly the full 19-option set lettered A-S.
#[test]
fn criterion_4_type_constraints() {
    let (schema, ts) = tacred_schema_and_templates();
    let samples = load_tacred_family(
        &repo_data_dir().join("samples/tacred_sample.json"),
        &schema,
        Split::Test,
    )
    .unwrap();
    let person_headed = samples.iter().find(|e| e.id == "sample-0002").unwrap();
    assert_eq!(person_headed.head.entity_type.as_deref(), Some("PERSON"));
    let set = build_candidates(&schema, &ts, person_headed).unwrap();
    assert!(
        set.options.iter().all(|o| !o.relation.starts_with("org:")),
        "org: option leaked into a PERSON-headed candidate set"
    );
    assert!(set.contains_relation("per:city_of_birth"));

    let data = repo_data_dir();
    let semeval_template_path = data.join("templates/semeval_sure.json");
    let semeval = load_schema(DatasetId::Semeval, &semeval_template_path, None)
        .unwrap()
        .schema;
    let semeval_ts =
        releval::schema::load_template_set("sure", &semeval, &semeval_template_path).unwrap();
    let text = std::fs::read_to_string(data.join("samples/semeval_sample.txt")).unwrap();
    let examples = parse_semeval_text(&text, &semeval, Split::Test).unwrap();
    assert!(!examples.is_empty());
    for example in &examples {
        let set = build_candidates(&semeval, &semeval_ts, example).unwrap();
        assert_eq!(set.options.len(), 19, "{} is not a 19-choice set", example.id);
        let letters: Vec<char> = set.options.iter().map(|o| o.letter).collect();
        let expected: Vec<char> = (0..19).map(|i| option_letter(i).unwrap()).collect();
        assert_eq!(letters, expected);
        assert_eq!(*letters.last().unwrap(), 'S');
        assert_eq!(set.nota_label(), "Other");
        assert_eq!(set.nota_index, 18);
    }

    println!("criterion 4 PASS: type constraints drop org: for PERSON heads; SemEval sets are 19 options A-S");
}

/// Criterion 5: the entailment threshold rule, including the exact flip at
/// 0.5.
#[test]
fn criterion_5_nli_threshold() {
    let below = vec![("r1".to_string(), 0.45), ("r2".to_string(), 0.30)];
    let decision = aggregate_nli(&below, 0.5, "no_relation", "x").unwrap();
    assert_eq!(decision.relation, "no_relation");

    let above = vec![("r1".to_string(), 0.7), ("r2".to_string(), 0.4)];
    let decision = aggregate_nli(&above, 0.5, "no_relation", "x").unwrap();
    assert_eq!(decision.relation, "r1");

    // Sweep the max probability across the threshold; the decision must
    // flip exactly at 0.5 (below -> NoTA, at or above -> the relation).
    let mut last_was_nota = true;
    let mut flips = 0;
    for step in 0..=1_000_000 {
        let p = step as f64 / 1_000_000.0;
        let probs = vec![("r1".to_string(), p)];
        let decision = aggregate_nli(&probs, 0.5, "no_relation", "x").unwrap();
        let is_nota = decision.relation == "no_relation";
        assert_eq!(is_nota, p < 0.5, "wrong side of threshold at p = {p}");
        if is_nota != last_was_nota {
            flips += 1;
            assert_eq!(p, 0.5, "flip happened at {p}, not at the threshold");
        }
        last_was_nota = is_nota;
    }
    assert_eq!(flips, 1);

    println!("criterion 5 PASS: threshold rule flips exactly at 0.5");
}

/// Criterion 6: for every option letter the parser recovers that option's
/// relation, and garbage input always falls back to NoTA without crashing.
#[test]
fn criterion_6_parser_round_trip() {
    let (schema, ts) = tacred_schema_and_templates();
    let syn_schema = synthetic_schema();
    let syn_ts = TemplateSet::from_schema(&syn_schema, "sure");

    let mut sets = Vec::new();
    for example in load_tacred_family(
        &repo_data_dir().join("samples/tacred_sample.json"),
        &schema,
        Split::Test,
    )
    .unwrap()
    {
        sets.push(build_candidates(&schema, &ts, &example).unwrap());
    }
    for example in synthetic_examples(&syn_schema, 40, 3, Split::Test) {
        sets.push(build_candidates(&syn_schema, &syn_ts, &example).unwrap());
    }

    for set in &sets {
        assert!(set.options.len() <= 26);
        for option in &set.options {
            let prediction = parse_qa4re(&option.letter.to_string(), set, "x");
            assert_eq!(prediction.relation, option.relation);
            assert_eq!(prediction.parse_status, ParseStatus::Constrained);
        }
    }

    // Fuzzed garbage: strings that cannot be read as an option letter must
    // come back as NoTA fallbacks, and nothing may panic.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let symbols = ['#', '?', '!', '0', '7', '~', '^', 'é', '語', ' ', '\t'];
    for set in &sets {
        for _ in 0..200 {
            let len = rng.gen_range(0..12);
            let garbage: String = (0..len)
                .map(|_| symbols[rng.gen_range(0..symbols.len())])
                .collect();
            let prediction = parse_qa4re(&garbage, set, "x");
            assert_eq!(prediction.relation, set.nota_label(), "input {garbage:?}");
            assert_eq!(prediction.parse_status, ParseStatus::FallbackNota);
        }
        // Arbitrary text (which may legitimately start with a letter) must
        // still always produce some prediction.
        for _ in 0..100 {
            let len = rng.gen_range(0..20);
            let text: String = (0..len)
                .map(|_| rng.gen_range(b' '..=b'~') as char)
                .collect();
            let prediction = parse_qa4re(&text, set, "x");
            assert!(schema.contains(&prediction.relation) || syn_schema.contains(&prediction.relation));
        }
    }

    println!("criterion 6 PASS: letter round-trip over {} candidate sets; garbage is total and NoTA-safe", sets.len());
}

/// Minimal HTTP server answering every completion request with a fixed
/// text, counting requests.
fn spawn_canned_server(canned_text: &'static str) -> (String, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let counter = Arc::new(AtomicUsize::new(0));
    let server_counter = counter.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let counter = server_counter.clone();
            std::thread::spawn(move || {
                let mut buffer = Vec::new();
                let mut chunk = [0u8; 4096];
                // Read headers, then the declared body length.
                let body_start = loop {
                    match stream.read(&mut chunk) {
                        Ok(0) => return,
                        Ok(n) => buffer.extend_from_slice(&chunk[..n]),
                        Err(_) => return,
                    }
                    if let Some(pos) = buffer.windows(4).position(|w| w == b"\r\n\r\n") {
                        break pos + 4;
                    }
                };
                let headers = String::from_utf8_lossy(&buffer[..body_start]).to_string();
                let content_length: usize = headers
                    .lines()
                    .find_map(|l| {
                        let (name, value) = l.split_once(':')?;
                        name.eq_ignore_ascii_case("content-length")
                            .then(|| value.trim().parse().ok())?
                    })
                    .unwrap_or(0);
                while buffer.len() < body_start + content_length {
                    match stream.read(&mut chunk) {
                        Ok(0) => break,
                        Ok(n) => buffer.extend_from_slice(&chunk[..n]),
                        Err(_) => return,
                    }
                }
                counter.fetch_add(1, Ordering::SeqCst);
                let body = format!("{{\"choices\":[{{\"text\":\"{canned_text}\"}}]}}");
                let response = format!(
                    "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                    body.len(),
                    body
                );
                let _ = stream.write_all(response.as_bytes());
            });
        }
    });
    (format!("http://{addr}"), counter)
}

/// Criterion 7: two runs of the same config, cold then warm, produce
/// byte-identical predictions files and the warm run makes zero network
/// calls.
#[test]
fn criterion_7_cache_determinism() {
    let (endpoint, requests) = spawn_canned_server("A");

    let dir = tempfile::tempdir().unwrap();
    let schema = synthetic_schema();
    write_synthetic_data_dir(dir.path(), &schema, 100, 50, 80, 3).unwrap();
    let out = tempfile::tempdir().unwrap();
    let cache_path = out.path().join("cache.jsonl");

    let run = |run_id: &str| -> releval::runner::RunArtifacts {
        let config = ExperimentConfig {
            dataset: DatasetId::Tacred,
            formulation: Formulation::Qa4re,
            data_dir: dir.path().to_path_buf(),
            sample_size: 50,
            seed: 5,
            backend: BackendSpec {
                endpoint: endpoint.clone(),
                model: "canned".to_string(),
                parallel: 4,
                ..BackendSpec::default()
            },
            out_dir: out.path().join("runs"),
            cache_path: cache_path.clone(),
            run_id: Some(run_id.to_string()),
            ..ExperimentConfig::default()
        };
        let backend = CachedBackend::new(
            Arc::new(
                HttpBackend::new(HttpConfig {
                    endpoint: endpoint.clone(),
                    ..HttpConfig::default()
                })
                .unwrap(),
            ),
            Arc::new(ResponseCache::open(&cache_path).unwrap()),
        );
        run_experiment_with_backend(&config, &backend).unwrap()
    };

    let cold = run("cold");
    let cold_requests = requests.load(Ordering::SeqCst);
    assert!(cold_requests > 0, "cold run must hit the network");
    assert_eq!(cold.manifest.transport_calls, Some(cold_requests as u64));

    let warm = run("warm");
    let warm_requests = requests.load(Ordering::SeqCst) - cold_requests;
    assert_eq!(warm_requests, 0, "warm run must be served from cache");
    assert_eq!(warm.manifest.transport_calls, Some(0));

    let cold_bytes = std::fs::read(&cold.predictions_path).unwrap();
    let warm_bytes = std::fs::read(&warm.predictions_path).unwrap();
    assert!(!cold_bytes.is_empty());
    assert_eq!(cold_bytes, warm_bytes, "predictions differ between cold and warm runs");

    let cold_metrics = std::fs::read(cold.run_dir.join("metrics.json")).unwrap();
    let warm_metrics = std::fs::read(warm.run_dir.join("metrics.json")).unwrap();
    assert_eq!(cold_metrics, warm_metrics);

    println!(
        "criterion 7 PASS: {} cold requests, 0 warm requests, byte-identical predictions",
        cold_requests
    );
}

/// Criterion 8: k-shot sampling caps at k per relation; demo selection is
/// type-matched when possible and relaxes visibly when not; the demo-count
/// search evaluates exactly {1, 2, 5} on exactly 100 dev examples.
#[test]
fn criterion_8_few_shot_protocol() {
    let schema = synthetic_schema();
    let train = synthetic_examples(&schema, 400, 21, Split::Train);

    // k-cap.
    let support = sample_kshot(&train, 4, 1, &schema);
    for relation in schema.labels() {
        let count = support
            .examples
            .iter()
            .filter(|e| e.gold == relation)
            .count();
        assert!(count <= 4, "{relation} exceeded the 4-shot cap with {count}");
    }

    // Type-matched selection: with a large pool every demo shares the test
    // example's retained relation set.
    let test_example = &synthetic_examples(&schema, 10, 22, Split::Test)[0];
    let selection = select_demos(&train, test_example, 5, &schema, 9).unwrap();
    assert_eq!(selection.examples.len(), 5);
    assert_eq!(selection.relaxation, RelaxationLevel::Strict);
    let target: BTreeSet<String> = retained_relations(&schema, test_example)
        .iter()
        .map(|r| r.label.clone())
        .collect();
    for demo in &selection.examples {
        let demo_set: BTreeSet<String> = retained_relations(&schema, demo)
            .iter()
            .map(|r| r.label.clone())
            .collect();
        assert_eq!(demo_set, target, "demo {} is not type-matched", demo.id);
        assert_eq!(demo.head.entity_type, test_example.head.entity_type);
    }

    // Relaxation: a pool with only 3 matching examples yields 3 strict plus
    // 2 relaxed demos, and reports the relaxation.
    let matching: Vec<_> = train
        .iter()
        .filter(|e| {
            let set: BTreeSet<String> = retained_relations(&schema, e)
                .iter()
                .map(|r| r.label.clone())
                .collect();
            set == target
        })
        .take(3)
        .cloned()
        .collect();
    let mismatched: Vec<_> = train
        .iter()
        .filter(|e| e.head.entity_type != test_example.head.entity_type)
        .take(6)
        .cloned()
        .collect();
    assert_eq!(matching.len(), 3);
    assert_eq!(mismatched.len(), 6);
    let small_pool: Vec<_> = matching.iter().chain(&mismatched).cloned().collect();
    let selection = select_demos(&small_pool, test_example, 5, &schema, 9).unwrap();
    assert_eq!(selection.examples.len(), 5);
    assert_eq!(selection.relaxation, RelaxationLevel::Unrestricted);
    let strict_chosen = selection
        .examples
        .iter()
        .filter(|d| matching.iter().any(|m| m.id == d.id))
        .count();
    assert_eq!(strict_chosen, 3, "all strict candidates must be used first");

    // Demo-count search with the oracle: exactly {1, 2, 5} on exactly 100
    // dev examples; all perfect, so the tie-break picks 1.
    let dir = tempfile::tempdir().unwrap();
    write_synthetic_data_dir(dir.path(), &schema, 400, 150, 150, 31).unwrap();
    let config = ExperimentConfig {
        dataset: DatasetId::Tacred,
        formulation: Formulation::Qa4re,
        data_dir: dir.path().to_path_buf(),
        sample_size: 100,
        seed: 13,
        k_shot: 4,
        n_demos: Some(NDemos::Search),
        backend: BackendSpec {
            model: "oracle-model".to_string(),
            ..BackendSpec::default()
        },
        ..ExperimentConfig::default()
    };

    let file_schema = load_schema(
        DatasetId::Tacred,
        &config.resolved_template_path(),
        config.resolved_constraint_path().as_deref(),
    )
    .unwrap()
    .schema;
    let file_ts = releval::schema::load_template_set(
        "sure",
        &file_schema,
        &config.resolved_template_path(),
    )
    .unwrap();
    let train_pool =
        load_tacred_family(&dir.path().join("tacred/train.json"), &file_schema, Split::Train)
            .unwrap();
    let oracle_support = sample_kshot(&train_pool, 4, config.seed, &file_schema);
    let dev_pool =
        load_tacred_family(&dir.path().join("tacred/dev.json"), &file_schema, Split::Dev).unwrap();
    let dev_subset = sample_test(&dev_pool, 100, config.seed).unwrap();

    let oracle = OracleBackend::new();
    populate_oracle_for_examples(
        &oracle,
        &file_schema,
        &file_ts,
        Formulation::Qa4re,
        &dev_subset,
        Some(&oracle_support),
        &[1, 2, 5],
        config.seed,
        None,
        0.9,
        0.1,
    )
    .unwrap();

    let outcome = search_n_demos(&config, &oracle).unwrap();
    let evaluated: Vec<usize> = outcome.scores.iter().map(|s| s.n_demos).collect();
    assert_eq!(evaluated, vec![1, 2, 5]);
    for score in &outcome.scores {
        assert_eq!(score.dev_examples, 100);
        assert_eq!(score.micro_f1, 1.0);
    }
    assert_eq!(outcome.chosen, 1, "perfect ties must pick the smallest n");

    println!("criterion 8 PASS: k-cap, type-matched demos, relaxation, and the {{1,2,5}}x100 search all hold");
}

/// Criterion 9 (optional, live): QA4RE against a real endpoint on 50
/// examples with a fallback-parse rate under 10%. Enabled by setting
/// RELEVAL_SMOKE_ENDPOINT, RELEVAL_SMOKE_MODEL, and RELEVAL_SMOKE_DATA_DIR
/// (a data dir containing tacred/test.json); RELEVAL_SMOKE_PROTOCOL and
/// RELEVAL_SMOKE_CREDENTIAL_ENV are optional.
#[test]
fn criterion_9_live_smoke() {
    let (Ok(endpoint), Ok(model), Ok(data_dir)) = (
        std::env::var("RELEVAL_SMOKE_ENDPOINT"),
        std::env::var("RELEVAL_SMOKE_MODEL"),
        std::env::var("RELEVAL_SMOKE_DATA_DIR"),
    ) else {
        println!("criterion 9 SKIP: RELEVAL_SMOKE_ENDPOINT/MODEL/DATA_DIR not set");
        return;
    };
    let protocol = match std::env::var("RELEVAL_SMOKE_PROTOCOL").as_deref() {
        Ok("chat") => WireProtocol::Chat,
        _ => WireProtocol::Completion,
    };
    let out = tempfile::tempdir().unwrap();
    let config = ExperimentConfig {
        dataset: DatasetId::Tacred,
        formulation: Formulation::Qa4re,
        data_dir: PathBuf::from(data_dir),
        template_path: Some(repo_data_dir().join("templates/tacred_sure.json")),
        constraint_path: Some(repo_data_dir().join("constraints/tacred_constraints.json")),
        sample_size: 50,
        seed: 0,
        backend: BackendSpec {
            endpoint,
            model,
            protocol,
            credential_env: std::env::var("RELEVAL_SMOKE_CREDENTIAL_ENV").ok(),
            ..BackendSpec::default()
        },
        out_dir: out.path().to_path_buf(),
        cache_path: out.path().join("cache.jsonl"),
        run_id: Some("smoke".to_string()),
        ..ExperimentConfig::default()
    };
    let artifacts = match releval::runner::run_experiment(&config) {
        Ok(artifacts) => artifacts,
        Err(RunnerError::Backend(e)) => panic!("criterion 9 FAIL: transport error: {e}"),
        Err(e) => panic!("criterion 9 FAIL: {e}"),
    };
    assert!(
        artifacts.metrics.fallback_rate < 0.10,
        "fallback-parse rate {} is not under 10%",
        artifacts.metrics.fallback_rate
    );
    println!(
        "criterion 9 PASS: live smoke, fallback rate {:.3}, micro F1 {:.3} (not asserted)",
        artifacts.metrics.fallback_rate, artifacts.metrics.micro_f1_excl_nota
    );
}
