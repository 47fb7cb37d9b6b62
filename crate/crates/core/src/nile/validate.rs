use std::collections::HashSet;

use serde::Serialize;

use super::ast::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    DuplicateMetric,
    IntervalOrder,
    ContradictoryRules,
    DuplicateMiddlebox,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Index into `NileIntent::commands` of the offending clause.
    pub clause: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, kind: ViolationKind) -> usize {
        self.violations.iter().filter(|v| v.kind == kind).count()
    }
}

fn minutes_of_day(hour: &str) -> Option<u32> {
    let (h, m) = hour.split_once(':')?;
    Some(h.parse::<u32>().ok()? * 60 + m.parse::<u32>().ok()?)
}

/// Semantic checks that the grammar alone cannot express.
pub fn validate_intent(intent: &NileIntent) -> ValidationReport {
    let mut violations = Vec::new();
    let mut middleboxes = HashSet::new();
    let mut rules: Vec<(usize, RuleAction, &TrafficSpec)> = Vec::new();

    for (idx, command) in intent.commands.iter().enumerate() {
        match command {
            Command::Qos(metrics) => {
                let mut seen = HashSet::new();
                for metric in metrics {
                    if !seen.insert(metric.id) {
                        violations.push(Violation {
                            kind: ViolationKind::DuplicateMetric,
                            clause: idx,
                            message: format!("metric `{}` constrained more than once", metric.id.as_str()),
                        });
                    }
                }
            }
            Command::Interval { start, end }
                if start.kind == DateTimeKind::Hour && end.kind == DateTimeKind::Hour =>
            {
                if let (Some(s), Some(e)) = (minutes_of_day(&start.value), minutes_of_day(&end.value)) {
                    if s >= e {
                        violations.push(Violation {
                            kind: ViolationKind::IntervalOrder,
                            clause: idx,
                            message: format!("interval starts at {} but ends at {}", start.value, end.value),
                        });
                    }
                }
            }
            Command::Rule { action, traffic } => {
                if let Some(&(_, other, _)) = rules
                    .iter()
                    .find(|(_, a, t)| a != action && *t == traffic)
                {
                    violations.push(Violation {
                        kind: ViolationKind::ContradictoryRules,
                        clause: idx,
                        message: format!(
                            "{} {} contradicts an earlier {} of the same traffic",
                            action.as_str(),
                            super::render::render_traffic(traffic),
                            other.as_str()
                        ),
                    });
                }
                rules.push((idx, *action, traffic));
            }
            Command::Middleboxes(boxes) => {
                for mb in boxes {
                    if !middleboxes.insert(mb.0.as_str()) {
                        violations.push(Violation {
                            kind: ViolationKind::DuplicateMiddlebox,
                            clause: idx,
                            message: format!("middlebox `{}` added more than once", mb.0),
                        });
                    }
                }
            }
            _ => {}
        }
    }

    ValidationReport { violations }
}
