use std::fmt::Write;

use super::ast::*;

const INDENT: &str = "  ";

/// Canonical text form: one clause per line in canonical clause order,
/// list continuations aligned under the first item.
pub fn render_nile(intent: &NileIntent) -> String {
    let mut commands: Vec<&Command> = intent.commands.iter().collect();
    commands.sort_by_key(|c| c.canonical_rank());

    let mut out = format!("define intent {}:", intent.name);
    for command in commands {
        out.push('\n');
        out.push_str(INDENT);
        match command {
            Command::Locations { origin, destination } => {
                write!(out, "from endpoint('{}')", origin.0).unwrap();
                write!(out, "\n{INDENT}to endpoint('{}')", destination.0).unwrap();
            }
            Command::Targets(targets) => {
                let items: Vec<String> = targets.iter().map(render_target).collect();
                push_list(&mut out, "for", &items);
            }
            Command::Middleboxes(boxes) => {
                let items: Vec<String> = boxes.iter().map(|m| format!("middlebox('{}')", m.0)).collect();
                push_list(&mut out, "add", &items);
            }
            Command::Qos(metrics) => {
                let items: Vec<String> = metrics.iter().map(render_metric).collect();
                push_list(&mut out, "with", &items);
            }
            Command::Rule { action, traffic } => {
                write!(out, "{} {}", action.as_str(), render_traffic(traffic)).unwrap();
            }
            Command::Interval { start, end } => {
                write!(out, "start {}", render_date_time(start)).unwrap();
                write!(out, "\n{INDENT}end {}", render_date_time(end)).unwrap();
            }
        }
    }
    out
}

fn push_list(out: &mut String, keyword: &str, items: &[String]) {
    let continuation = " ".repeat(INDENT.len() + keyword.len() + 1);
    out.push_str(keyword);
    out.push(' ');
    out.push_str(&items.join(&format!(",\n{continuation}")));
}

fn render_metric(metric: &Metric) -> String {
    match (&metric.constraint, &metric.value) {
        (Constraint::None, _) | (_, None) => format!("{}(none)", metric.id.as_str()),
        (constraint, Some(value)) => {
            format!("{}('{}', '{}')", metric.id.as_str(), constraint.as_str(), value)
        }
    }
}

pub(crate) fn render_traffic(traffic: &TrafficSpec) -> String {
    match traffic {
        TrafficSpec::Named(id) => format!("traffic('{id}')"),
        TrafficSpec::Flow(fields) => {
            let parts: Vec<String> = fields
                .iter()
                .map(|f| format!("{}: '{}'", f.key.as_str(), f.value))
                .collect();
            format!("flow({})", parts.join(", "))
        }
    }
}

fn render_target(target: &Target) -> String {
    match target {
        Target::Client(id) => format!("client('{id}')"),
        Target::Traffic(t) => render_traffic(t),
    }
}

fn render_date_time(dt: &DateTimeSpec) -> String {
    format!("{}('{}')", dt.kind.as_str(), dt.value)
}
