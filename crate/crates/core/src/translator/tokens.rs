//! Token-level view of Nile programs used on the decoder side.
//!
//! Programs are split on whitespace with `( ) ' , :` as standalone tokens,
//! e.g. `add middlebox('@middlebox')` becomes
//! `add middlebox ( ' @middlebox ' )`.

use crate::anonymizer::AnonymizationMap;

use super::vocab::INTENT_NAME_TOKEN;

const PUNCT: [char; 4] = ['(', ')', ',', ':'];
const CLAUSE_STARTS: [&str; 9] = ["from", "to", "for", "add", "with", "allow", "block", "start", "end"];

fn flush(current: &mut String, out: &mut Vec<String>) {
    if !current.is_empty() {
        out.push(std::mem::take(current));
    }
}

/// Splits program text into decoder tokens.
pub fn tokenize_program(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut in_quote = false;
    for ch in text.chars() {
        match ch {
            '\'' => {
                flush(&mut current, &mut out);
                out.push("'".into());
                in_quote = !in_quote;
            }
            c if c.is_whitespace() => flush(&mut current, &mut out),
            c if !in_quote && PUNCT.contains(&c) => {
                flush(&mut current, &mut out);
                out.push(c.to_string());
            }
            c => current.push(c),
        }
    }
    flush(&mut current, &mut out);
    out
}

fn starts_clause(token: &str) -> bool {
    CLAUSE_STARTS.contains(&token) || token.starts_with("@rule_action")
}

/// Re-joins decoder tokens into program text, one clause per line.
pub fn detokenize(tokens: &[impl AsRef<str>]) -> String {
    let mut out = String::new();
    let mut in_quote = false;
    let mut quote_just_opened = false;
    let mut glue_next = false;
    for (idx, token) in tokens.iter().enumerate() {
        let token = token.as_ref();
        if in_quote {
            if token == "'" {
                out.push('\'');
                in_quote = false;
                glue_next = false;
            } else {
                if !quote_just_opened {
                    out.push(' ');
                }
                out.push_str(token);
                quote_just_opened = false;
            }
            continue;
        }
        match token {
            "(" => {
                out.push('(');
                glue_next = true;
            }
            ")" | "," | ":" => {
                out.push_str(token);
                glue_next = false;
            }
            "'" => {
                if !glue_next && !out.is_empty() {
                    out.push(' ');
                }
                out.push('\'');
                in_quote = true;
                quote_just_opened = true;
                glue_next = false;
            }
            word => {
                if idx > 0 && starts_clause(word) {
                    out.push_str("\n  ");
                } else if !glue_next && !out.is_empty() {
                    out.push(' ');
                }
                out.push_str(word);
                glue_next = false;
            }
        }
    }
    out
}

/// Replaces concrete values in a canonical program with the placeholders
/// bound in `map`, producing decoder tokens. Quoted ids, metric names and
/// rule actions are candidates; the intent name always becomes
/// `@intent_name`. Values not bound in `map` are kept as literal words.
pub fn anonymize_program(text: &str, map: &AnonymizationMap) -> Vec<String> {
    const BARE_VALUES: [&str; 6] = ["latency", "jitter", "loss", "throughput", "allow", "block"];
    let mut reverse = map.reverse();
    let mut out: Vec<String> = Vec::new();
    let mut chars = text.chars().peekable();
    let mut current = String::new();

    let emit_word = |word: String, out: &mut Vec<String>, reverse: &mut crate::anonymizer::ReverseLookup| {
        let n = out.len();
        if n >= 2 && out[n - 2] == "define" && out[n - 1] == "intent" {
            out.push(INTENT_NAME_TOKEN.into());
        } else if BARE_VALUES.contains(&word.as_str()) {
            match reverse.take(&word) {
                Some(tok) => out.push(tok.to_string()),
                None => out.push(word),
            }
        } else {
            out.push(word);
        }
    };

    while let Some(ch) = chars.next() {
        match ch {
            '\'' => {
                if !current.is_empty() {
                    emit_word(std::mem::take(&mut current), &mut out, &mut reverse);
                }
                let mut quoted = String::new();
                for c in chars.by_ref() {
                    if c == '\'' {
                        break;
                    }
                    quoted.push(c);
                }
                out.push("'".into());
                match reverse.take(quoted.trim()) {
                    Some(tok) => out.push(tok.to_string()),
                    None => out.extend(quoted.split_whitespace().map(str::to_string)),
                }
                out.push("'".into());
            }
            c if c.is_whitespace() || PUNCT.contains(&c) => {
                if !current.is_empty() {
                    emit_word(std::mem::take(&mut current), &mut out, &mut reverse);
                }
                if !c.is_whitespace() {
                    out.push(c.to_string());
                }
            }
            c => current.push(c),
        }
    }
    if !current.is_empty() {
        emit_word(current, &mut out, &mut reverse);
    }
    out
}
