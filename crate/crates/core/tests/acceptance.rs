//! Acceptance criteria. Each prints one `PASS`/`FAIL` line; the process
//! exits non-zero if any fails. Positional arguments filter by name.
//!
//! The training-based criteria share one sweep (5 sizes x 3 seeds), built
//! on first use.

use std::collections::{BTreeMap, HashMap};
use std::panic::catch_unwind;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::OnceLock;

use nile_core::anonymizer::{anonymize, deanonymize, placeholder, AnonymizeError};
use nile_core::datasetgen::{concrete_bindings, generate, GenSpec};
use nile_core::deployer::{compile, throughput_exceeds, Endpoint, Ipv4Pool, Link, NetworkModel, VnfImage};
use nile_core::experiment::{evaluate, feedback_experiment, FeedbackMode};
use nile_core::extractor::{Entity, EntityKind, EntitySet};
use nile_core::nile::*;
use nile_core::pipeline::Pipeline;
use nile_core::translator::{
    detokenize, r_squared, train, EncodedExample, MetricError, Network, Seq2SeqModel, TrainConfig, TrainingExample,
    Vocabulary,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

static VERDICTS: AtomicUsize = AtomicUsize::new(0);

fn verdict(name: &str, ok: bool, detail: &str) {
    VERDICTS.fetch_add(1, Ordering::SeqCst);
    println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
}

const SIZES: [usize; 5] = [100, 500, 1000, 2000, 5000];
const SEEDS: [u64; 3] = [1, 2, 3];

struct Run {
    size: usize,
    mean_r2: f64,
    seconds: f64,
}

struct Sweep {
    runs: Vec<Run>,
    /// Seed-1 model and its dataset for each size.
    models: HashMap<usize, (Seq2SeqModel, Vec<TrainingExample>)>,
}

fn sweep() -> &'static Sweep {
    static SWEEP: OnceLock<Sweep> = OnceLock::new();
    SWEEP.get_or_init(|| {
        let mut runs = Vec::new();
        let mut models = HashMap::new();
        for &size in &SIZES {
            for &seed in &SEEDS {
                let data = generate(&GenSpec::new(size, seed)).unwrap();
                let test = generate(&GenSpec::new(size / 5, seed + 1000)).unwrap();
                let config = TrainConfig {
                    seed,
                    ..TrainConfig::default()
                };
                let (model, report) = train(&data, &config).unwrap();
                let eval = evaluate(&model, &test);
                eprintln!(
                    "size {size} seed {seed}: mean R2 {:.4} +- {:.4}, exact {:.3}, {:.1}s",
                    eval.summary.mean, eval.summary.ci95, eval.exact_rate, report.total_seconds
                );
                runs.push(Run {
                    size,
                    mean_r2: eval.summary.mean,
                    seconds: report.total_seconds,
                });
                if seed == SEEDS[0] {
                    models.insert(size, (model, data));
                }
            }
        }
        Sweep { runs, models }
    })
}

fn per_size(f: impl Fn(&Run) -> f64) -> Vec<f64> {
    let s = sweep();
    SIZES
        .iter()
        .map(|&size| {
            let vals: Vec<f64> = s.runs.iter().filter(|r| r.size == size).map(&f).collect();
            vals.iter().sum::<f64>() / vals.len() as f64
        })
        .collect()
}

fn translation_accuracy_vs_dataset_size() {
    let r2 = per_size(|r| r.mean_r2);
    let secs = per_size(|r| r.seconds);
    let non_decreasing = r2.windows(2).all(|w| w[1] >= w[0]);
    let time_grows = secs.windows(2).all(|w| w[1] > w[0]);
    let top = r2[4] >= 0.95;
    let detail = SIZES
        .iter()
        .zip(r2.iter().zip(&secs))
        .map(|(n, (r, t))| format!("{n}:{r:.4}/{t:.0}s"))
        .collect::<Vec<_>>()
        .join(" ");
    let ok = non_decreasing && time_grows && top;
    verdict(
        "translation accuracy vs dataset size (mean R2 non-decreasing, R2@5000 >= 0.95, time increasing)",
        ok,
        &detail,
    );
    assert!(ok);
}

fn feedback_improvement() {
    let s = sweep();
    let cases = generate(&GenSpec::new(30, 4242)).unwrap();
    let checkpoints = [0, 10, 20, 30];
    let mut means = BTreeMap::new();
    for size in [500, 2000] {
        let (model, data) = &s.models[&size];
        let (mut model, mut data) = (model.clone(), data.clone());
        let report = feedback_experiment(&mut model, &mut data, &cases, &checkpoints, FeedbackMode::FineTune).unwrap();
        assert_eq!(data.len(), size + 30);
        means.insert(size, (report.mean_at(0).unwrap(), report.mean_at(30).unwrap()));
    }
    let reference = evaluate(&s.models[&5000].0, &cases).summary.mean;
    let improves = means.values().all(|(before, after)| after > before);
    let gap = (means[&2000].1 - reference).abs();
    let ok = improves && gap <= 0.03;
    verdict(
        "feedback improvement (ckpt30 > ckpt0 for 500 and 2000; 2000@30 within 0.03 of 5000@0)",
        ok,
        &format!(
            "500: {:.4}->{:.4}, 2000: {:.4}->{:.4}, 5000@0: {reference:.4}, gap {gap:.4}",
            means[&500].0, means[&500].1, means[&2000].0, means[&2000].1
        ),
    );
    assert!(ok);
}

const GOLDEN_INTENT: &str = "define intent testIntent:
    from endpoint('iperf client')
    to endpoint('iperf server')
    add middlebox('firewall'),
        middlebox('ids')";

const GOLDEN_COMMANDS: &str = r#"# deploy vnfs
vim-emu compute start -d vnfs_dc -n fw \
  -i genic-vnf -c "./start_firewall.sh &" \
  --net"(id=in,ip=10.0.0.20/24),(id=out,ip=10.0.0.21/24)"
vim-emu compute start -d vnfs_dc -n ids \
  -i genic-vnf -c "./start_snort.sh &" \
  --net"(id=in,ip=10.0.0.30/24),(id=out,ip=10.0.0.31/24)"
# chain vnfs
vim-emu network add -b -src iperf-c:c-eth0 -dst fw:in
vim-emu network add -b -src fw:out -dst ids:in
vim-emu network add -b -src ids:out -dst iperf-s:s-eth0"#;

/// Joins backslash continuations and normalizes whitespace per command.
fn command_lines(script: &str) -> Vec<String> {
    let joined = script.replace("\\ \n", " ").replace("\\\n", " ");
    joined
        .lines()
        .map(|l| l.split_whitespace().collect::<Vec<_>>().join(" "))
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect()
}

fn end_to_end_golden_case() {
    let model = &sweep().models[&5000].0;
    let candidate = Pipeline::default()
        .refine("Please add a firewall and an IDS from Iperf client to server", model)
        .unwrap();
    let nile_ok = whitespace_equal(&candidate.nile_text, GOLDEN_INTENT);
    let compiled = compile(&candidate.intent, &NetworkModel::iperf_fixture()).unwrap();
    let ours = command_lines(&compiled.script());
    let theirs = command_lines(GOLDEN_COMMANDS);
    let computes = ours.iter().filter(|l| l.contains("compute start")).count();
    let adds = ours.iter().filter(|l| l.contains("network add")).count();
    let ok = nile_ok && ours == theirs && computes == 2 && adds == 3 && compiled.deployable();
    verdict(
        "end-to-end golden case (Nile text and vim-emu commands match the golden text)",
        ok,
        &format!("nile match {nile_ok}, {computes} compute + {adds} network lines, commands equal {}", ours == theirs),
    );
    assert!(ok, "{}\n{}", candidate.nile_text, compiled.script());
}

fn random_id(rng: &mut ChaCha8Rng) -> String {
    const WORDS: &[&str] = &["web", "server", "gateway", "b", "db1", "edge_2", "lab", "x.y"];
    let n = rng.gen_range(1..=3);
    (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

fn random_traffic(rng: &mut ChaCha8Rng) -> TrafficSpec {
    if rng.gen_bool(0.5) {
        return TrafficSpec::Named(random_id(rng));
    }
    let mut keys = FiveTupleKey::ALL.to_vec();
    keys.shuffle(rng);
    keys.truncate(rng.gen_range(1..=5));
    keys.sort();
    TrafficSpec::Flow(
        keys.into_iter()
            .map(|key| FiveTupleField {
                key,
                value: match key {
                    FiveTupleKey::Protocol => ["tcp", "udp", "icmp"].choose(rng).unwrap().to_string(),
                    FiveTupleKey::SrcPort | FiveTupleKey::DestPort => rng.gen_range(0..=65535u32).to_string(),
                    FiveTupleKey::SrcIp | FiveTupleKey::DestIp => {
                        format!("{}.{}.{}.{}", rng.gen::<u8>(), rng.gen::<u8>(), rng.gen::<u8>(), rng.gen::<u8>())
                    }
                },
            })
            .collect(),
    )
}

fn random_time(rng: &mut ChaCha8Rng) -> DateTimeSpec {
    let kind = *[DateTimeKind::Hour, DateTimeKind::Date, DateTimeKind::Datetime].choose(rng).unwrap();
    let hour = format!("{:02}:{:02}", rng.gen_range(0..24), rng.gen_range(0..60));
    let date = format!("20{:02}-{:02}-{:02}", rng.gen_range(0..100), rng.gen_range(1..=12), rng.gen_range(1..=28));
    let value = match kind {
        DateTimeKind::Hour => hour,
        DateTimeKind::Date => date,
        DateTimeKind::Datetime => format!("{date}T{hour}"),
    };
    DateTimeSpec { kind, value }
}

/// Random intent over the whole grammar, commands in canonical order.
fn random_intent(rng: &mut ChaCha8Rng) -> NileIntent {
    let mut commands = Vec::new();
    if rng.gen_bool(0.5) {
        commands.push(Command::Locations {
            origin: EndpointRef(random_id(rng)),
            destination: EndpointRef(random_id(rng)),
        });
    }
    if rng.gen_bool(0.5) {
        let targets = (0..rng.gen_range(1..=3))
            .map(|_| {
                if rng.gen_bool(0.5) {
                    Target::Client(random_id(rng))
                } else {
                    Target::Traffic(random_traffic(rng))
                }
            })
            .collect();
        commands.push(Command::Targets(targets));
    }
    loop {
        if rng.gen_bool(0.5) {
            let boxes = (0..rng.gen_range(1..=3)).map(|_| MiddleboxRef(random_id(rng))).collect();
            commands.push(Command::Middleboxes(boxes));
        }
        if rng.gen_bool(0.5) {
            let metrics = (0..rng.gen_range(1..=4))
                .map(|_| {
                    let id = *MetricId::ALL.choose(rng).unwrap();
                    if rng.gen_bool(0.2) {
                        Metric {
                            id,
                            constraint: Constraint::None,
                            value: None,
                        }
                    } else {
                        let unit = ["ms", "s", "mbps", "gbps", "%"].choose(rng).unwrap();
                        Metric {
                            id,
                            constraint: *Constraint::VALUED.choose(rng).unwrap(),
                            value: Some(format!("{}{unit}", rng.gen_range(0..1000))),
                        }
                    }
                })
                .collect();
            commands.push(Command::Qos(metrics));
        }
        for _ in 0..rng.gen_range(0..=2) {
            commands.push(Command::Rule {
                action: if rng.gen_bool(0.5) { RuleAction::Allow } else { RuleAction::Block },
                traffic: random_traffic(rng),
            });
        }
        if commands.iter().any(|c| matches!(c, Command::Middleboxes(_) | Command::Qos(_) | Command::Rule { .. })) {
            break;
        }
    }
    if rng.gen_bool(0.5) {
        commands.push(Command::Interval {
            start: random_time(rng),
            end: random_time(rng),
        });
    }
    commands.sort_by_key(Command::canonical_rank);
    let name = format!("{}{}", ["i", "qos", "Test"].choose(rng).unwrap(), rng.gen_range(0..100));
    NileIntent { name, commands }
}

fn parser_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut failures = 0;
    for _ in 0..10_000 {
        let intent = random_intent(&mut rng);
        if parse_nile(&render_nile(&intent)).as_ref() != Ok(&intent) {
            failures += 1;
        }
    }
    let generated = generate(&GenSpec::new(10_000, 99)).unwrap();
    let mut bind_rng = ChaCha8Rng::seed_from_u64(5);
    let mut unparsed = 0;
    for example in &generated {
        let map = concrete_bindings(example, &mut bind_rng);
        let text = deanonymize(&detokenize(&example.output), &map).unwrap();
        match parse_nile(&text) {
            Ok(intent) if parse_nile(&render_nile(&intent)).as_ref() == Ok(&intent) => {}
            _ => unparsed += 1,
        }
    }
    let ok = failures == 0 && unparsed == 0;
    verdict(
        "parser round-trip (10000 random intents; all generated Nile sides parse)",
        ok,
        &format!("{failures} round-trip failures, {unparsed}/10000 generated programs rejected"),
    );
    assert!(ok);
}

fn anonymization_inverse() {
    let examples = generate(&GenSpec::new(1000, 77)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut broken = 0;
    let mut unbound_missed = 0;
    for example in &examples {
        let bindings = concrete_bindings(example, &mut rng);
        let entities = EntitySet(
            example
                .input
                .iter()
                .enumerate()
                .map(|(i, tok)| {
                    let kind: EntityKind = tok[1..].split('#').next().unwrap().parse().unwrap();
                    let value = bindings.get(tok).unwrap().to_string();
                    Entity {
                        kind,
                        surface: value.clone(),
                        value,
                        position: i,
                    }
                })
                .collect(),
        );
        let (tokens, mut map) = anonymize(&entities).unwrap();
        let name = bindings.get("@intent_name").unwrap();
        map.bind("@intent_name", name);
        let template = detokenize(&example.output);
        let restored = deanonymize(&template, &map).unwrap();

        // Oracle: substitute each placeholder occurrence by scanning tokens.
        let expected: Vec<String> = example
            .output
            .iter()
            .map(|t| if t.starts_with('@') { bindings.get(t).unwrap().to_string() } else { t.clone() })
            .collect();
        let values_ok = entities.iter().all(|e| restored.contains(&e.value));
        if tokens != example.input || !values_ok || restored != detokenize(&expected) {
            broken += 1;
        }

        let kind = entities.0[0].kind;
        let unseen = placeholder(kind, entities.iter().filter(|e| e.kind == kind).count() + 1);
        let probe = format!("{template}\n  add middlebox('{unseen}')");
        if deanonymize(&probe, &map) != Err(AnonymizeError::UnboundToken(unseen)) {
            unbound_missed += 1;
        }
    }
    let ok = broken == 0 && unbound_missed == 0;
    verdict(
        "anonymization inverse (1000 pairs restore all values; unseen tokens raise UnboundToken)",
        ok,
        &format!("{broken} restore failures, {unbound_missed} unbound tokens accepted"),
    );
    assert!(ok);
}

fn gradient_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut net: Network<f64> = Network::init(9, 4, 5, &mut rng);
    let data = [
        EncodedExample::new(vec![4, 5, 6], vec![7, 8, 4]),
        EncodedExample::new(vec![6], vec![5, 5, 7, 8, 3]),
    ];
    let batch: Vec<&EncodedExample> = data.iter().collect();
    let grads = net.run_batch(&batch, true).grads.unwrap();
    let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|(_, t)| t.to_vec()).collect();
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for (ti, grad) in analytic.iter().enumerate() {
        for (k, &a) in grad.iter().enumerate() {
            let original = net.params.tensors()[ti].1[k];
            net.params.tensors_mut()[ti].1[k] = original + eps;
            let plus = net.run_batch(&batch, false).loss;
            net.params.tensors_mut()[ti].1[k] = original - eps;
            let minus = net.run_batch(&batch, false).loss;
            net.params.tensors_mut()[ti].1[k] = original;
            let numeric = (plus - minus) / (2.0 * eps);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
            checked += 1;
        }
    }
    let ok = worst < 1e-4;
    verdict(
        "gradient check (E=4, H=5, 2 examples, relative error < 1e-4)",
        ok,
        &format!("{checked} parameters, worst relative error {worst:.2e}"),
    );
    assert!(ok);
}

/// Straight-line R2: sums accumulated with the textbook expansion.
fn oracle_r2(pred: &[usize], exp: &[usize]) -> Option<f64> {
    let n = pred.len().max(exp.len());
    let at = |v: &[usize], i: usize| v.get(i).copied().unwrap_or(0) as f64;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut ss_res = 0.0;
    for i in 0..n {
        let y = at(exp, i);
        sum += y;
        sum_sq += y * y;
        ss_res += (at(pred, i) - y) * (at(pred, i) - y);
    }
    let ss_tot = sum_sq - sum * sum / n as f64;
    (ss_tot.abs() > 1e-12).then(|| 1.0 - ss_res / ss_tot)
}

fn r_squared_oracle_equivalence() {
    let vocab = Vocabulary::standard();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut mismatches = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let len_p = rng.gen_range(0..=10);
        let len_e = rng.gen_range(1..=10);
        let pred: Vec<usize> = (0..len_p).map(|_| rng.gen_range(0..vocab.len())).collect();
        let exp: Vec<usize> = (0..len_e).map(|_| rng.gen_range(0..vocab.len())).collect();
        let words = |v: &[usize]| v.iter().map(|&i| vocab.word(i).unwrap().to_string()).collect::<Vec<_>>();
        let ours = r_squared(&words(&pred), &words(&exp), &vocab);
        match (ours, oracle_r2(&pred, &exp)) {
            (Ok(a), Some(b)) => {
                worst = worst.max((a - b).abs());
                if (a - b).abs() > 1e-9 {
                    mismatches += 1;
                }
            }
            (Err(MetricError::DegenerateExpected), None) => {}
            _ => mismatches += 1,
        }
    }
    let ok = mismatches == 0;
    verdict(
        "R2 oracle equivalence (200 pairs, tolerance 1e-9)",
        ok,
        &format!("{mismatches} mismatches, max abs difference {worst:.2e}"),
    );
    assert!(ok);
}

/// Every simple path between two nodes, by depth-first enumeration.
fn all_paths(links: &[Link], from: &str, to: &str) -> Vec<Vec<f64>> {
    fn walk(links: &[Link], at: &str, to: &str, seen: &mut Vec<String>, caps: &mut Vec<f64>, out: &mut Vec<Vec<f64>>) {
        if at == to {
            out.push(caps.clone());
            return;
        }
        for l in links {
            let next = if l.a == at {
                &l.b
            } else if l.b == at {
                &l.a
            } else {
                continue;
            };
            if seen.contains(next) {
                continue;
            }
            seen.push(next.clone());
            caps.push(l.capacity_mbps);
            walk(links, next, to, seen, caps, out);
            caps.pop();
            seen.pop();
        }
    }
    let mut out = Vec::new();
    walk(links, from, to, &mut vec![from.to_string()], &mut Vec::new(), &mut out);
    out
}

fn conflict_assertion_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut disagreements = 0;
    let mut conflicts = 0;
    for case in 0..50 {
        // Random tree: node i > 0 hangs off a random earlier node.
        let n = rng.gen_range(4..12);
        let names: Vec<String> = (0..n).map(|i| format!("n{i}")).collect();
        let links: Vec<Link> = (1..n)
            .map(|i| Link {
                a: names[rng.gen_range(0..i)].clone(),
                b: names[i].clone(),
                capacity_mbps: [10.0, 50.0, 100.0, 200.0, 1000.0][rng.gen_range(0..5)],
            })
            .collect();
        let picks: Vec<&String> = names.choose_multiple(&mut rng, 3).collect();
        let (origin, destination, dc) = (picks[0].clone(), picks[1].clone(), picks[2].clone());
        let net = NetworkModel {
            datacenter: dc.clone(),
            endpoints: [&origin, &destination]
                .iter()
                .map(|id| Endpoint {
                    id: id.to_string(),
                    attach: format!("{id}:eth0"),
                })
                .collect(),
            links: links.clone(),
            vnf_images: BTreeMap::from([(
                "firewall".to_string(),
                VnfImage {
                    image: "img".into(),
                    command: "run".into(),
                },
            )]),
            ip_pool: "10.0.0.0/24".parse::<Ipv4Pool>().unwrap(),
        };
        let with_box = case % 2 == 0;
        let constraint = *[Constraint::More, Constraint::MoreOrEqual, Constraint::Equal, Constraint::Less]
            .choose(&mut rng)
            .unwrap();
        let demand = [5.0, 50.0, 100.0, 150.0, 500.0][rng.gen_range(0..5)];
        let mut commands = vec![Command::Locations {
            origin: EndpointRef(origin.clone()),
            destination: EndpointRef(destination.clone()),
        }];
        if with_box {
            commands.push(Command::Middleboxes(vec![MiddleboxRef("firewall".into())]));
        }
        commands.push(Command::Qos(vec![Metric {
            id: MetricId::Throughput,
            constraint,
            value: Some(format!("{demand}mbps")),
        }]));
        let intent = NileIntent {
            name: "c".into(),
            commands,
        };
        let flagged = compile(&intent, &net)
            .unwrap()
            .report
            .errors()
            .any(|c| c.message.contains("bandwidth exceeds path capacity"));

        let legs = if with_box {
            vec![(origin.as_str(), dc.as_str()), (dc.as_str(), destination.as_str())]
        } else {
            vec![(origin.as_str(), destination.as_str())]
        };
        let min_cap = legs
            .iter()
            .flat_map(|(a, b)| {
                let paths = all_paths(&links, a, b);
                assert_eq!(paths.len(), 1, "tree has one path");
                paths.into_iter().next().unwrap()
            })
            .fold(f64::INFINITY, f64::min);
        let expected = throughput_exceeds(constraint, demand, min_cap);
        conflicts += usize::from(expected);
        if flagged != expected {
            disagreements += 1;
        }
    }
    let ok = disagreements == 0 && conflicts > 0 && conflicts < 50;
    verdict(
        "conflict assertion (50 random intents and tree networks vs brute-force min capacity)",
        ok,
        &format!("{disagreements} disagreements, {conflicts} conflicts expected"),
    );
    assert!(ok);
}

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(&str, fn()); 8] = [
        ("gradient_check", gradient_check),
        ("r_squared_oracle_equivalence", r_squared_oracle_equivalence),
        ("conflict_assertion_matches_oracle", conflict_assertion_matches_oracle),
        ("parser_round_trip", parser_round_trip),
        ("anonymization_inverse", anonymization_inverse),
        ("translation_accuracy_vs_dataset_size", translation_accuracy_vs_dataset_size),
        ("feedback_improvement", feedback_improvement),
        ("end_to_end_golden_case", end_to_end_golden_case),
    ];
    let (mut passed, mut failed) = (0, 0);
    for (name, run) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let before = VERDICTS.load(Ordering::SeqCst);
        match catch_unwind(run) {
            Ok(()) => passed += 1,
            Err(_) => {
                if VERDICTS.load(Ordering::SeqCst) == before {
                    println!("FAIL {name}: aborted before reaching a verdict");
                }
                failed += 1;
            }
        }
    }
    println!("acceptance: {passed} passed, {failed} failed");
    if failed > 0 {
        std::process::exit(1);
    }
}
