//! Compiles Nile intents into `vim-emu` service-chain command lines and
//! checks them against a [`NetworkModel`] before deployment.

mod network;

use std::fmt::Write;

use serde::Serialize;

use crate::nile::{validate_intent, Command, Constraint, Metric, MetricId, NileIntent, ValidationReport};

pub use network::{Endpoint, Ipv4Pool, Link, ModelError, NetworkModel, VnfImage};

/// First host offset handed out from the pool, and the spacing between
/// consecutive middleboxes.
const IP_BASE: u32 = 20;
const IP_STRIDE: u32 = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "verb", rename_all = "kebab-case")]
pub enum VnfCommand {
    ComputeStart {
        datacenter: String,
        name: String,
        image: String,
        command: String,
        /// `(interface id, address with prefix)`
        interfaces: Vec<(String, String)>,
    },
    NetworkAdd { src: String, dst: String },
}

impl VnfCommand {
    pub fn render(&self) -> String {
        match self {
            VnfCommand::ComputeStart {
                datacenter,
                name,
                image,
                command,
                interfaces,
            } => {
                let nets: Vec<String> = interfaces.iter().map(|(id, ip)| format!("(id={id},ip={ip})")).collect();
                format!(
                    "vim-emu compute start -d {datacenter} -n {name} -i {image} -c \"{command}\" --net\"{}\"",
                    nets.join(",")
                )
            }
            VnfCommand::NetworkAdd { src, dst } => format!("vim-emu network add -b -src {src} -dst {dst}"),
        }
    }
}

/// Script text: compute commands under `# deploy vnfs`, then chain
/// commands under `# chain vnfs`. Empty input gives empty text.
pub fn render_commands(cmds: &[VnfCommand]) -> String {
    let (compute, chain): (Vec<_>, Vec<_>) = cmds.iter().partition(|c| matches!(c, VnfCommand::ComputeStart { .. }));
    let mut out = String::new();
    for (header, section) in [("# deploy vnfs", compute), ("# chain vnfs", chain)] {
        if section.is_empty() {
            continue;
        }
        writeln!(out, "{header}").unwrap();
        for cmd in section {
            writeln!(out, "{}", cmd.render()).unwrap();
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warn,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Conflict {
    pub severity: Severity,
    pub message: String,
    /// Index into `NileIntent::commands`, if the conflict concerns one clause.
    pub clause: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ConflictReport {
    pub conflicts: Vec<Conflict>,
}

impl ConflictReport {
    pub fn has_errors(&self) -> bool {
        self.conflicts.iter().any(|c| c.severity == Severity::Error)
    }

    pub fn errors(&self) -> impl Iterator<Item = &Conflict> {
        self.conflicts.iter().filter(|c| c.severity == Severity::Error)
    }

    fn push(&mut self, severity: Severity, clause: Option<usize>, message: impl Into<String>) {
        self.conflicts.push(Conflict {
            severity,
            message: message.into(),
            clause,
        });
    }
}

impl std::fmt::Display for ConflictReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for c in &self.conflicts {
            let level = match c.severity {
                Severity::Warn => "warning",
                Severity::Error => "error",
            };
            match c.clause {
                Some(i) => writeln!(f, "{level} (clause {}): {}", i + 1, c.message)?,
                None => writeln!(f, "{level}: {}", c.message)?,
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Compilation {
    pub commands: Vec<VnfCommand>,
    pub report: ConflictReport,
}

impl Compilation {
    /// Commands can be handed to the emulator only without error-level conflicts.
    pub fn deployable(&self) -> bool {
        !self.report.has_errors()
    }

    pub fn script(&self) -> String {
        render_commands(&self.commands)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CompileError {
    #[error("`{0}` is not defined in the network model")]
    UnresolvedId(String),
    #[error("intent has semantic violations: {}", .0.violations.iter().map(|v| v.message.as_str()).collect::<Vec<_>>().join("; "))]
    Invalid(ValidationReport),
    #[error("ip pool {pool} cannot hold addresses for {vnfs} middleboxes")]
    PoolExhausted { pool: String, vnfs: usize },
}

/// Middlebox names used for containers.
fn short_name(id: &str) -> String {
    match id {
        "firewall" => "fw".into(),
        "intrusion detection" | "ids" => "ids".into(),
        "load balancer" => "lb".into(),
        "deep packet inspection" => "dpi".into(),
        other => other.split_whitespace().collect::<Vec<_>>().join("-"),
    }
}

/// Parses a rate literal such as `100mbps` into megabits per second.
pub fn parse_rate_mbps(value: &str) -> Option<f64> {
    let value = value.to_ascii_lowercase();
    let split = value.find(|c: char| !(c.is_ascii_digit() || c == '.'))?;
    let (number, unit) = value.split_at(split);
    let number: f64 = number.parse().ok()?;
    let scale = match unit {
        "bps" => 1e-6,
        "kbps" => 1e-3,
        "mbps" => 1.0,
        "gbps" => 1e3,
        "tbps" => 1e6,
        _ => return None,
    };
    Some(number * scale)
}

/// Whether a throughput requirement cannot be met over a path whose
/// narrowest link carries `capacity` Mbps.
pub fn throughput_exceeds(constraint: Constraint, demand: f64, capacity: f64) -> bool {
    match constraint {
        Constraint::More => demand >= capacity,
        Constraint::MoreOrEqual | Constraint::Equal => demand > capacity,
        Constraint::Less | Constraint::LessOrEqual | Constraint::Different | Constraint::None => false,
    }
}

struct Scope<'a> {
    origin: Option<&'a str>,
    destination: Option<&'a str>,
    middleboxes: Vec<&'a str>,
}

fn scope(intent: &NileIntent) -> Scope<'_> {
    let mut s = Scope {
        origin: None,
        destination: None,
        middleboxes: Vec::new(),
    };
    for command in &intent.commands {
        match command {
            Command::Locations { origin, destination } => {
                s.origin = Some(&origin.0);
                s.destination = Some(&destination.0);
            }
            Command::Middleboxes(boxes) => s.middleboxes.extend(boxes.iter().map(|m| m.0.as_str())),
            _ => {}
        }
    }
    s
}

/// Narrowest link on the route traffic takes: through the datacenter when
/// middleboxes are chained, directly otherwise.
fn path_capacity(net: &NetworkModel, scope: &Scope) -> Result<Option<f64>, String> {
    let (Some(origin), Some(destination)) = (scope.origin, scope.destination) else {
        return Ok(None);
    };
    let legs = if scope.middleboxes.is_empty() {
        vec![(origin, destination)]
    } else {
        vec![(origin, net.datacenter.as_str()), (net.datacenter.as_str(), destination)]
    };
    let mut min = f64::INFINITY;
    for (a, b) in legs {
        let (_, caps) = net.shortest_path(a, b).ok_or_else(|| format!("no path from {a} to {b}"))?;
        min = caps.into_iter().fold(min, f64::min);
    }
    Ok(Some(min))
}

fn check_metric(metric: &Metric, clause: usize, capacity: Option<f64>, report: &mut ConflictReport) {
    if metric.id != MetricId::Throughput {
        report.push(
            Severity::Warn,
            Some(clause),
            format!("{} requirement cannot be verified at compile time", metric.id.as_str()),
        );
        return;
    }
    let Some(value) = &metric.value else {
        return;
    };
    let Some(demand) = parse_rate_mbps(value) else {
        report.push(Severity::Warn, Some(clause), format!("unrecognized throughput value `{value}`"));
        return;
    };
    match capacity {
        None => report.push(
            Severity::Warn,
            Some(clause),
            "throughput requirement has no from/to path to check against",
        ),
        Some(cap) if throughput_exceeds(metric.constraint, demand, cap) => report.push(
            Severity::Error,
            Some(clause),
            format!("bandwidth exceeds path capacity: requested {value} but the path carries at most {cap} Mbps"),
        ),
        Some(_) => {}
    }
}

/// Compiles `intent` against `net`. Commands are produced even when the
/// report holds errors, so they can be previewed.
pub fn compile(intent: &NileIntent, net: &NetworkModel) -> Result<Compilation, CompileError> {
    let violations = validate_intent(intent);
    if !violations.is_empty() {
        return Err(CompileError::Invalid(violations));
    }
    let scope = scope(intent);
    for id in scope.origin.iter().chain(&scope.destination) {
        if net.endpoint(id).is_none() {
            return Err(CompileError::UnresolvedId(id.to_string()));
        }
    }
    let mut commands = Vec::new();
    let mut names = Vec::new();
    for (i, id) in scope.middleboxes.iter().enumerate() {
        let image = net.vnf_images.get(*id).ok_or_else(|| CompileError::UnresolvedId(id.to_string()))?;
        let offset = IP_BASE + IP_STRIDE * i as u32;
        let (Some(ip_in), Some(ip_out)) = (net.ip_pool.host(offset), net.ip_pool.host(offset + 1)) else {
            return Err(CompileError::PoolExhausted {
                pool: net.ip_pool.to_string(),
                vnfs: scope.middleboxes.len(),
            });
        };
        let name = short_name(id);
        let prefix = net.ip_pool.prefix;
        commands.push(VnfCommand::ComputeStart {
            datacenter: net.datacenter.clone(),
            name: name.clone(),
            image: image.image.clone(),
            command: image.command.clone(),
            interfaces: vec![("in".into(), format!("{ip_in}/{prefix}")), ("out".into(), format!("{ip_out}/{prefix}"))],
        });
        names.push(name);
    }

    let mut report = ConflictReport::default();
    if let (Some(origin), Some(destination)) = (scope.origin, scope.destination) {
        let mut hops = vec![net.endpoint(origin).unwrap().attach.clone()];
        for name in &names {
            hops.push(format!("{name}:in"));
            hops.push(format!("{name}:out"));
        }
        hops.push(net.endpoint(destination).unwrap().attach.clone());
        for pair in hops.chunks(2) {
            commands.push(VnfCommand::NetworkAdd {
                src: pair[0].clone(),
                dst: pair[1].clone(),
            });
        }
    } else if !names.is_empty() {
        report.push(
            Severity::Error,
            None,
            "middleboxes need a from/to clause to be chained into the traffic path",
        );
    }

    let capacity = match path_capacity(net, &scope) {
        Ok(cap) => cap,
        Err(message) => {
            report.push(Severity::Error, None, message);
            None
        }
    };
    for (clause, command) in intent.commands.iter().enumerate() {
        match command {
            Command::Qos(metrics) => {
                if scope.middleboxes.is_empty() {
                    report.push(
                        Severity::Warn,
                        Some(clause),
                        "no middleboxes to deploy; qos requirements are checked as assertions only",
                    );
                }
                for metric in metrics {
                    check_metric(metric, clause, capacity, &mut report);
                }
            }
            Command::Targets(_) => report.push(
                Severity::Warn,
                Some(clause),
                "client identification is not implemented yet; the for clause is ignored",
            ),
            Command::Rule { .. } => report.push(
                Severity::Warn,
                Some(clause),
                "traffic rules are not implemented yet; the rule is ignored",
            ),
            Command::Interval { .. } => report.push(
                Severity::Warn,
                Some(clause),
                "time restrictions are not implemented yet; the interval is ignored",
            ),
            Command::Middleboxes(_) | Command::Locations { .. } => {}
        }
    }
    Ok(Compilation { commands, report })
}
