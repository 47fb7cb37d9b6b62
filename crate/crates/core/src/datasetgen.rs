//! Random (entity tokens, Nile program) training pairs.
//!
//! Each example is a shuffled list of entity groups (a middlebox list, an
//! origin/destination pair, a metric with its constraint and value, ...).
//! The program side is derived from the token sequence alone by
//! [`program_for`], so equal inputs always carry equal outputs.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::anonymizer::{placeholder, AnonymizationMap, TokenSequence};
use crate::extractor::EntityKind;
use crate::nile::DateTimeKind;
use crate::translator::{tokenize_program, TrainingExample, INTENT_NAME_TOKEN};

/// Inclusion probabilities. The first six select intent features; `flow`
/// renders traffic as a five-tuple and `date`/`datetime` pick the interval
/// literal kind (hour otherwise).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureWeights {
    pub middleboxes: f64,
    pub locations: f64,
    pub targets: f64,
    pub qos: f64,
    pub rules: f64,
    pub interval: f64,
    pub flow: f64,
    pub date: f64,
    pub datetime: f64,
}

impl Default for FeatureWeights {
    fn default() -> Self {
        Self {
            middleboxes: 0.5,
            locations: 0.5,
            targets: 0.5,
            qos: 0.5,
            rules: 0.5,
            interval: 0.5,
            flow: 0.0,
            date: 0.05,
            datetime: 0.05,
        }
    }
}

impl FeatureWeights {
    /// Only middleboxes enabled.
    pub fn zero() -> Self {
        Self {
            middleboxes: 0.0,
            locations: 0.0,
            targets: 0.0,
            qos: 0.0,
            rules: 0.0,
            interval: 0.0,
            flow: 0.0,
            date: 0.0,
            datetime: 0.0,
        }
    }

    fn all(&self) -> [f64; 9] {
        [
            self.middleboxes,
            self.locations,
            self.targets,
            self.qos,
            self.rules,
            self.interval,
            self.flow,
            self.date,
            self.datetime,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub size: usize,
    pub seed: u64,
    pub weights: FeatureWeights,
    pub max_middleboxes: usize,
    pub max_metrics: usize,
    pub max_rules: usize,
    pub max_targets: usize,
}

impl GenSpec {
    pub fn new(size: usize, seed: u64) -> Self {
        Self {
            size,
            seed,
            weights: FeatureWeights::default(),
            max_middleboxes: 3,
            max_metrics: 2,
            max_rules: 2,
            max_targets: 2,
        }
    }

    fn check(&self) -> Result<(), GenSpecError> {
        if self.size == 0 {
            return Err(GenSpecError::EmptySize);
        }
        let w = self.weights;
        if w.all().iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(GenSpecError::Probability);
        }
        if w.middleboxes + w.qos + w.rules <= 0.0 {
            return Err(GenSpecError::NoCommand);
        }
        if w.date + w.datetime > 1.0 {
            return Err(GenSpecError::Probability);
        }
        let caps = [self.max_middleboxes, self.max_metrics, self.max_rules, self.max_targets];
        if caps.iter().any(|&c| c == 0 || c > crate::anonymizer::MAX_REPEATS) {
            return Err(GenSpecError::Count);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GenSpecError {
    #[error("dataset size must be at least 1")]
    EmptySize,
    #[error("feature probabilities must lie in [0, 1]")]
    Probability,
    #[error("at least one of middleboxes, qos or rules needs a positive weight")]
    NoCommand,
    #[error("per-feature counts must be between 1 and {}", crate::anonymizer::MAX_REPEATS)]
    Count,
}

/// Layout choices that the entity sequence does not determine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ProgramStyle {
    pub interval: Option<DateTimeKind>,
    pub traffic_as_flow: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("entity `{token}` at position {position} does not fit any clause")]
pub struct LayoutError {
    pub token: String,
    pub position: usize,
}

fn kind_of(token: &str) -> Option<EntityKind> {
    let name = token.strip_prefix('@')?.split('#').next()?;
    name.parse().ok()
}

/// Builds the anonymized program for an entity token sequence.
///
/// Grouping is greedy left to right: a metric takes an immediately
/// following constraint and value; a constraint/value pair (either order)
/// followed by a metric belongs to that metric; a rule action takes the
/// next traffic; any other traffic, client or target becomes a `for` item.
pub fn program_for<S: AsRef<str>>(tokens: &[S], style: ProgramStyle) -> Result<TokenSequence, LayoutError> {
    let tokens: Vec<&str> = tokens.iter().map(AsRef::as_ref).collect();
    let kinds: Vec<Option<EntityKind>> = tokens.iter().map(|t| kind_of(t)).collect();
    let at = |i: usize| kinds.get(i).copied().flatten();
    let fail = |i: usize| LayoutError {
        token: tokens[i].to_string(),
        position: i,
    };
    let traffic = |tok: &str| {
        if style.traffic_as_flow {
            format!("flow(protocol: '{tok}')")
        } else {
            format!("traffic('{tok}')")
        }
    };

    let (mut origin, mut destination, mut start, mut end) = (None, None, None, None);
    let mut targets = Vec::new();
    let mut middleboxes = Vec::new();
    let mut metrics = Vec::new();
    let mut rules = Vec::new();

    let mut i = 0;
    while i < tokens.len() {
        use EntityKind::*;
        let tok = tokens[i];
        match at(i) {
            Some(Metric) if at(i + 1) == Some(Constraint) && at(i + 2) == Some(Value) => {
                metrics.push(format!("{tok}('{}', '{}')", tokens[i + 1], tokens[i + 2]));
                i += 3;
            }
            Some(Metric) => {
                metrics.push(format!("{tok}(none)"));
                i += 1;
            }
            Some(Constraint) if at(i + 1) == Some(Value) && at(i + 2) == Some(Metric) => {
                metrics.push(format!("{}('{tok}', '{}')", tokens[i + 2], tokens[i + 1]));
                i += 3;
            }
            Some(Value) if at(i + 1) == Some(Constraint) && at(i + 2) == Some(Metric) => {
                metrics.push(format!("{}('{}', '{tok}')", tokens[i + 2], tokens[i + 1]));
                i += 3;
            }
            Some(RuleAction) if at(i + 1) == Some(Traffic) => {
                rules.push(format!("{tok} {}", traffic(tokens[i + 1])));
                i += 2;
            }
            Some(Traffic) => {
                targets.push(traffic(tok));
                i += 1;
            }
            Some(Client) | Some(Target) => {
                targets.push(format!("client('{tok}')"));
                i += 1;
            }
            Some(Middlebox) => {
                middleboxes.push(format!("middlebox('{tok}')"));
                i += 1;
            }
            Some(Origin) if origin.is_none() => {
                origin = Some(tok);
                i += 1;
            }
            Some(Destination) if destination.is_none() => {
                destination = Some(tok);
                i += 1;
            }
            Some(StartTime) if start.is_none() => {
                start = Some(tok);
                i += 1;
            }
            Some(EndTime) if end.is_none() => {
                end = Some(tok);
                i += 1;
            }
            _ => return Err(fail(i)),
        }
    }

    let position = |kind: EntityKind| kinds.iter().position(|k| *k == Some(kind)).unwrap();
    if origin.is_some() != destination.is_some() {
        return Err(fail(position(if origin.is_some() {
            EntityKind::Origin
        } else {
            EntityKind::Destination
        })));
    }
    if start.is_some() != end.is_some() {
        return Err(fail(position(if start.is_some() {
            EntityKind::StartTime
        } else {
            EntityKind::EndTime
        })));
    }
    if middleboxes.is_empty() && metrics.is_empty() && rules.is_empty() {
        let culprit = if tokens.is_empty() { String::new() } else { tokens[0].to_string() };
        return Err(LayoutError {
            token: culprit,
            position: 0,
        });
    }

    let mut text = format!("define intent {INTENT_NAME_TOKEN}:");
    if let (Some(o), Some(d)) = (origin, destination) {
        text.push_str(&format!("\n  from endpoint('{o}')\n  to endpoint('{d}')"));
    }
    for (keyword, items) in [("for", &targets), ("add", &middleboxes), ("with", &metrics)] {
        if !items.is_empty() {
            text.push_str(&format!("\n  {keyword} {}", items.join(", ")));
        }
    }
    for rule in &rules {
        text.push_str(&format!("\n  {rule}"));
    }
    if let (Some(s), Some(e)) = (start, end) {
        let kind = style.interval.unwrap_or(DateTimeKind::Hour).as_str();
        text.push_str(&format!("\n  start {kind}('{s}')\n  end {kind}('{e}')"));
    }
    Ok(tokenize_program(&text))
}

fn metric_group(rng: &mut ChaCha8Rng) -> Vec<EntityKind> {
    use EntityKind::{Constraint, Metric, Value};
    match rng.gen_range(0..5) {
        0 => vec![Metric],
        1 | 2 => vec![Metric, Constraint, Value],
        3 => vec![Constraint, Value, Metric],
        _ => vec![Value, Constraint, Metric],
    }
}

fn sample_example(spec: &GenSpec, rng: &mut ChaCha8Rng) -> TrainingExample {
    use EntityKind::*;
    let w = &spec.weights;
    let mut include = [w.middleboxes, w.locations, w.targets, w.qos, w.rules, w.interval].map(|p| rng.gen_bool(p));
    if !(include[0] || include[3] || include[4]) {
        let options = [(0, w.middleboxes), (3, w.qos), (4, w.rules)];
        let (slot, _) = options
            .choose_weighted(rng, |(_, p)| *p)
            .expect("checked: some command weight is positive");
        include[*slot] = true;
    }

    let mut groups: Vec<Vec<EntityKind>> = Vec::new();
    if include[0] {
        groups.push(vec![Middlebox; rng.gen_range(1..=spec.max_middleboxes)]);
    }
    if include[1] {
        groups.push(vec![Origin, Destination]);
    }
    if include[2] {
        for _ in 0..rng.gen_range(1..=spec.max_targets) {
            groups.push(vec![*[Client, Target, Traffic].choose(rng).unwrap()]);
        }
    }
    if include[3] {
        for _ in 0..rng.gen_range(1..=spec.max_metrics) {
            groups.push(metric_group(rng));
        }
    }
    if include[4] {
        for _ in 0..rng.gen_range(1..=spec.max_rules) {
            groups.push(vec![RuleAction, Traffic]);
        }
    }
    if include[5] {
        groups.push(vec![StartTime, EndTime]);
    }
    groups.shuffle(rng);

    let mut counts: HashMap<EntityKind, usize> = HashMap::new();
    let input: TokenSequence = groups
        .into_iter()
        .flatten()
        .map(|kind| {
            let n = counts.entry(kind).or_default();
            *n += 1;
            placeholder(kind, *n)
        })
        .collect();

    let roll: f64 = rng.gen();
    let style = ProgramStyle {
        interval: Some(if roll < w.date {
            DateTimeKind::Date
        } else if roll < w.date + w.datetime {
            DateTimeKind::Datetime
        } else {
            DateTimeKind::Hour
        }),
        traffic_as_flow: rng.gen_bool(w.flow),
    };
    let output = program_for(&input, style).expect("generated groups always lay out");
    TrainingExample::new(input, output)
}

/// Generates `spec.size` pairs; example `i` uses its own stream of the
/// seeded generator, so any prefix is stable across sizes.
pub fn generate(spec: &GenSpec) -> Result<Vec<TrainingExample>, GenSpecError> {
    spec.check()?;
    Ok((0..spec.size)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(i as u64);
            sample_example(spec, &mut rng)
        })
        .collect())
}

/// Shuffles and splits off `round(fraction * n)` examples as a test set,
/// keeping both sides non-empty when `n >= 2`.
pub fn split_test<T: Clone>(dataset: &[T], fraction: f64, seed: u64) -> (Vec<T>, Vec<T>) {
    assert!(fraction > 0.0 && fraction < 1.0, "fraction must be in (0, 1)");
    let n = dataset.len();
    let mut k = (fraction * n as f64).round() as usize;
    if n >= 2 {
        k = k.clamp(1, n - 1);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = order[..k].iter().map(|&i| dataset[i].clone()).collect();
    let mut rest = order[k..].to_vec();
    rest.sort_unstable();
    let train = rest.into_iter().map(|i| dataset[i].clone()).collect();
    (train, test)
}

const MIDDLEBOXES: &[&str] = &["firewall", "ids", "load balancer", "nat", "dpi", "proxy", "cache"];
const ENDPOINTS: &[&str] = &["gateway", "backend", "database", "internet", "web server", "iperf client", "iperf server"];
const CLIENTS: &[&str] = &["B", "A", "students", "guests", "professors"];
const TRAFFIC: &[&str] = &["https", "http", "ssh", "ftp", "udp", "video"];
const VALUES: &[&str] = &["10ms", "5ms", "2s", "100mbps", "1gbps", "50mbps", "0.1%"];
const METRICS: [&str; 4] = ["latency", "jitter", "loss", "throughput"];
const CONSTRAINTS: [&str; 6] = ["less", "less or equal", "more", "more or equal", "equal", "different"];

fn pick_distinct<'a>(pool: &[&'a str], n: usize, rng: &mut ChaCha8Rng) -> Vec<&'a str> {
    if n <= pool.len() {
        pool.choose_multiple(rng, n).copied().collect()
    } else {
        (0..n).map(|_| *pool.choose(rng).unwrap()).collect()
    }
}

fn times(kind: DateTimeKind, rng: &mut ChaCha8Rng) -> (String, String) {
    let a = rng.gen_range(0..23);
    let b = rng.gen_range(a + 1..24);
    let (da, db) = (rng.gen_range(1..15), rng.gen_range(15..29));
    match kind {
        DateTimeKind::Hour => (format!("{a:02}:00"), format!("{b:02}:30")),
        DateTimeKind::Date => (format!("2024-03-{da:02}"), format!("2024-03-{db:02}")),
        DateTimeKind::Datetime => (format!("2024-03-{da:02}T{a:02}:00"), format!("2024-03-{db:02}T{b:02}:30")),
    }
}

/// Draws concrete values for every placeholder of `example` from small
/// fixture pools, plus a name for `@intent_name`.
pub fn concrete_bindings(example: &TrainingExample, rng: &mut ChaCha8Rng) -> AnonymizationMap {
    let mut by_kind: HashMap<EntityKind, Vec<&str>> = HashMap::new();
    for tok in &example.input {
        if let Some(kind) = kind_of(tok) {
            by_kind.entry(kind).or_default().push(tok);
        }
    }
    let interval = if example.output.iter().any(|t| t == "datetime") {
        DateTimeKind::Datetime
    } else if example.output.iter().any(|t| t == "date") {
        DateTimeKind::Date
    } else {
        DateTimeKind::Hour
    };
    let (start, end) = times(interval, rng);
    let endpoints = pick_distinct(ENDPOINTS, 3, rng);

    let mut map = AnonymizationMap::default();
    map.bind(INTENT_NAME_TOKEN, format!("intent{}", rng.gen_range(0..1000)));
    for kind in EntityKind::ALL {
        let Some(tokens) = by_kind.get(&kind) else { continue };
        let n = tokens.len();
        let values: Vec<String> = match kind {
            EntityKind::Middlebox => pick_distinct(MIDDLEBOXES, n, rng).into_iter().map(String::from).collect(),
            EntityKind::Origin => vec![endpoints[0].into()],
            EntityKind::Destination => vec![endpoints[1].into()],
            EntityKind::Target => pick_distinct(ENDPOINTS, n, rng).into_iter().map(String::from).collect(),
            EntityKind::Client => pick_distinct(CLIENTS, n, rng).into_iter().map(String::from).collect(),
            EntityKind::Metric => pick_distinct(&METRICS, n, rng).into_iter().map(String::from).collect(),
            EntityKind::Constraint => (0..n).map(|_| CONSTRAINTS.choose(rng).unwrap().to_string()).collect(),
            EntityKind::Value => (0..n).map(|_| VALUES.choose(rng).unwrap().to_string()).collect(),
            EntityKind::Traffic => pick_distinct(TRAFFIC, n, rng).into_iter().map(String::from).collect(),
            EntityKind::RuleAction => (0..n).map(|_| ["allow", "block"].choose(rng).unwrap().to_string()).collect(),
            EntityKind::StartTime => vec![start.clone()],
            EntityKind::EndTime => vec![end.clone()],
        };
        for (tok, value) in tokens.iter().zip(values) {
            map.bind(*tok, value);
        }
    }
    map
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anonymizer::deanonymize;
    use crate::nile::{parse_nile, Command};
    use crate::translator::detokenize;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn iperf_layout() {
        let out = program_for(&toks("@middlebox @middlebox#2 @origin @destination"), ProgramStyle::default()).unwrap();
        assert_eq!(
            out.join(" "),
            "define intent @intent_name : from endpoint ( ' @origin ' ) to endpoint ( ' @destination ' ) add middlebox ( ' @middlebox ' ) , middlebox ( ' @middlebox#2 ' )"
        );
    }

    #[test]
    fn metric_groupings() {
        let out = program_for(&toks("@metric @constraint @value @metric#2"), ProgramStyle::default()).unwrap();
        assert!(out.join(" ").contains("with @metric ( ' @constraint ' , ' @value ' ) , @metric#2 ( none )"));
        let out = program_for(&toks("@value @constraint @metric"), ProgramStyle::default()).unwrap();
        assert!(out.join(" ").contains("with @metric ( ' @constraint ' , ' @value ' )"));
    }

    #[test]
    fn rule_takes_next_traffic() {
        let out = program_for(&toks("@traffic @rule_action @traffic#2"), ProgramStyle::default()).unwrap();
        let text = out.join(" ");
        assert!(text.contains("for traffic ( ' @traffic ' )"));
        assert!(text.contains("@rule_action traffic ( ' @traffic#2 ' )"));
    }

    #[test]
    fn layout_errors() {
        assert!(program_for(&toks("@origin"), ProgramStyle::default()).is_err());
        assert!(program_for(&toks("@middlebox @constraint"), ProgramStyle::default()).is_err());
        assert!(program_for(&toks("@client"), ProgramStyle::default()).is_err());
    }

    #[test]
    fn single_middlebox_spec() {
        let spec = GenSpec {
            weights: FeatureWeights {
                middleboxes: 1.0,
                ..FeatureWeights::zero()
            },
            max_middleboxes: 1,
            ..GenSpec::new(1, 9)
        };
        let data = generate(&spec).unwrap();
        assert_eq!(data.len(), 1);
        assert_eq!(data[0].input, vec!["@middlebox"]);
        assert_eq!(data[0].program_text(), "define intent @intent_name:\n  add middlebox('@middlebox')");
    }

    #[test]
    fn deterministic_and_prefix_stable() {
        let a = generate(&GenSpec::new(50, 4)).unwrap();
        let b = generate(&GenSpec::new(50, 4)).unwrap();
        let c = generate(&GenSpec::new(20, 4)).unwrap();
        assert_eq!(a, b);
        assert_eq!(&a[..20], &c[..]);
        assert_ne!(a, generate(&GenSpec::new(50, 5)).unwrap());
    }

    #[test]
    fn invalid_specs() {
        assert_eq!(generate(&GenSpec::new(0, 1)), Err(GenSpecError::EmptySize));
        let mut spec = GenSpec::new(1, 1);
        spec.weights.qos = 1.5;
        assert_eq!(generate(&spec), Err(GenSpecError::Probability));
        spec.weights = FeatureWeights {
            locations: 1.0,
            ..FeatureWeights::zero()
        };
        assert_eq!(generate(&spec), Err(GenSpecError::NoCommand));
    }

    #[test]
    fn concrete_programs_parse() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for example in generate(&GenSpec::new(500, 11)).unwrap() {
            let map = concrete_bindings(&example, &mut rng);
            let text = deanonymize(&detokenize(&example.output), &map).unwrap();
            let intent = parse_nile(&text).unwrap_or_else(|e| panic!("{e}\n{text}"));
            assert!(intent.commands.iter().any(|c| matches!(
                c,
                Command::Middleboxes(_) | Command::Qos(_) | Command::Rule { .. }
            )));
        }
    }

    #[test]
    fn split_sizes() {
        let data: Vec<usize> = (0..5000).collect();
        let (train, test) = split_test(&data, 0.2, 1);
        assert_eq!((train.len(), test.len()), (4000, 1000));
        let (train, test) = split_test(&data[..100], 0.2, 1);
        assert_eq!((train.len(), test.len()), (80, 20));
        let (train, test) = split_test(&data[..2], 0.999, 1);
        assert_eq!((train.len(), test.len()), (1, 1));
        let mut all: Vec<usize> = train.into_iter().chain(test).collect();
        all.sort();
        assert_eq!(all, vec![0, 1]);
    }
}
