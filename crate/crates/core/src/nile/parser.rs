//! Recursive-descent parser for Nile.
//!
//! Clauses may appear in any order; the resulting command list is stably
//! sorted into canonical order so that rendering and re-parsing is the
//! identity on every parsed program.

use std::collections::HashSet;

use super::ast::*;
use super::lexer::{tokenize, Token, TokenKind};
use super::ParseError;

const CLAUSE_KEYWORDS: [&str; 8] = ["from", "for", "add", "with", "allow", "block", "start", "end"];

pub fn parse_nile(source: &str) -> Result<NileIntent, ParseError> {
    let tokens = tokenize(source)?;
    Parser { tokens, pos: 0 }.intent()
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn advance(&mut self) -> Token {
        let tok = self.tokens[self.pos].clone();
        if tok.kind != TokenKind::Eof {
            self.pos += 1;
        }
        tok
    }

    fn error_here<S: Into<String> + Clone>(&self, expected: &[S]) -> ParseError {
        let tok = self.peek();
        ParseError::new(
            tok.line,
            tok.column,
            expected.iter().cloned().map(Into::into).collect(),
            tok.kind.describe(),
        )
    }

    fn error_at(tok: &Token, expected: &str) -> ParseError {
        ParseError::new(tok.line, tok.column, vec![expected.to_string()], tok.kind.describe())
    }

    fn skip_newlines(&mut self) -> usize {
        let mut n = 0;
        while self.peek().kind == TokenKind::Newline {
            self.advance();
            n += 1;
        }
        n
    }

    fn keyword(&mut self, word: &str) -> Result<Token, ParseError> {
        match &self.peek().kind {
            TokenKind::Word(w) if w == word => Ok(self.advance()),
            _ => Err(self.error_here(&[format!("`{word}`")])),
        }
    }

    fn punct(&mut self, kind: TokenKind) -> Result<(), ParseError> {
        if self.peek().kind == kind {
            self.advance();
            Ok(())
        } else {
            Err(self.error_here(&[kind.describe()]))
        }
    }

    fn peek_word(&self) -> Option<&str> {
        match &self.peek().kind {
            TokenKind::Word(w) => Some(w),
            _ => None,
        }
    }

    fn intent(mut self) -> Result<NileIntent, ParseError> {
        self.skip_newlines();
        self.keyword("define")?;
        self.keyword("intent")?;
        let name_tok = self.advance();
        let name = match &name_tok.kind {
            TokenKind::Word(w) if is_identifier(w) => w.clone(),
            _ => return Err(Self::error_at(&name_tok, "intent name")),
        };
        self.punct(TokenKind::Colon)?;
        self.skip_newlines();

        let mut commands = Vec::new();
        let mut seen_scopes = HashSet::new();
        loop {
            let start = self.peek().clone();
            let command = self.command()?;
            if matches!(
                command,
                Command::Locations { .. } | Command::Targets(_) | Command::Interval { .. }
            ) && !seen_scopes.insert(command.canonical_rank())
            {
                return Err(ParseError::new(
                    start.line,
                    start.column,
                    vec![format!("at most one `{}` clause per intent", command.label())],
                    start.kind.describe(),
                ));
            }
            commands.push(command);

            match self.peek().kind {
                TokenKind::Eof => break,
                TokenKind::Newline => {
                    self.skip_newlines();
                    if self.peek().kind == TokenKind::Eof {
                        break;
                    }
                }
                _ => return Err(self.error_here(&["end of line"])),
            }
        }

        if !commands.iter().any(|c| {
            matches!(c, Command::Middleboxes(_) | Command::Qos(_) | Command::Rule { .. })
        }) {
            return Err(self.error_here(&["`add`", "`with`", "`allow`", "`block`"]));
        }

        commands.sort_by_key(Command::canonical_rank);
        Ok(NileIntent { name, commands })
    }

    fn command(&mut self) -> Result<Command, ParseError> {
        let Some(word) = self.peek_word().map(str::to_owned) else {
            return Err(self.error_here(&CLAUSE_KEYWORDS.map(|k| format!("`{k}`"))));
        };
        match word.as_str() {
            "add" => {
                self.advance();
                let items = self.list(Self::middlebox)?;
                Ok(Command::Middleboxes(items))
            }
            "with" => {
                self.advance();
                let items = self.list(Self::metric)?;
                Ok(Command::Qos(items))
            }
            "allow" | "block" => {
                self.advance();
                let action = RuleAction::from_keyword(&word).expect("matched above");
                let traffic = self.traffic()?;
                Ok(Command::Rule { action, traffic })
            }
            "for" => {
                self.advance();
                let items = self.list(Self::target)?;
                Ok(Command::Targets(items))
            }
            "from" => {
                self.advance();
                let origin = self.endpoint()?;
                self.skip_newlines();
                self.keyword("to")?;
                let destination = self.endpoint()?;
                Ok(Command::Locations { origin, destination })
            }
            "start" => {
                self.advance();
                let start = self.date_time()?;
                if self.skip_newlines() == 0 {
                    return Err(self.error_here(&["end of line"]));
                }
                self.keyword("end")?;
                let end = self.date_time()?;
                Ok(Command::Interval { start, end })
            }
            _ => Err(self.error_here(&CLAUSE_KEYWORDS.map(|k| format!("`{k}`")))),
        }
    }

    /// `item { (',' | ',\n') item }`
    fn list<T>(&mut self, item: fn(&mut Self) -> Result<T, ParseError>) -> Result<Vec<T>, ParseError> {
        let mut items = vec![item(self)?];
        while self.peek().kind == TokenKind::Comma {
            self.advance();
            self.skip_newlines();
            items.push(item(self)?);
        }
        Ok(items)
    }

    /// `'(' id ')'` where the id is quoted or a bare word.
    fn parenthesized_id(&mut self, what: &str) -> Result<String, ParseError> {
        self.punct(TokenKind::LParen)?;
        let value = self.id_value(what)?;
        self.punct(TokenKind::RParen)?;
        Ok(value)
    }

    fn id_value(&mut self, what: &str) -> Result<String, ParseError> {
        let tok = self.advance();
        match tok.kind {
            TokenKind::Str(s) | TokenKind::Word(s) if !s.trim().is_empty() => Ok(s),
            _ => Err(Self::error_at(&tok, what)),
        }
    }

    fn middlebox(&mut self) -> Result<MiddleboxRef, ParseError> {
        self.keyword("middlebox")?;
        Ok(MiddleboxRef(self.parenthesized_id("middlebox id")?))
    }

    fn endpoint(&mut self) -> Result<EndpointRef, ParseError> {
        self.keyword("endpoint")?;
        Ok(EndpointRef(self.parenthesized_id("endpoint id")?))
    }

    fn metric(&mut self) -> Result<Metric, ParseError> {
        let tok = self.advance();
        let id = match &tok.kind {
            TokenKind::Word(w) => MetricId::from_keyword(w),
            _ => None,
        }
        .ok_or_else(|| {
            ParseError::new(
                tok.line,
                tok.column,
                MetricId::ALL.iter().map(|m| format!("`{}`", m.as_str())).collect(),
                tok.kind.describe(),
            )
        })?;
        self.punct(TokenKind::LParen)?;
        let constraint = self.constraint()?;
        let value = if constraint == Constraint::None {
            None
        } else {
            self.punct(TokenKind::Comma)?;
            let tok = self.advance();
            match tok.kind {
                TokenKind::Str(s) | TokenKind::Word(s) if is_unit_literal(&s) => Some(s),
                _ => return Err(Self::error_at(&tok, "value literal such as '10ms'")),
            }
        };
        self.punct(TokenKind::RParen)?;
        Ok(Metric { id, constraint, value })
    }

    fn constraint(&mut self) -> Result<Constraint, ParseError> {
        let tok = self.peek().clone();
        let expected = || {
            let mut all: Vec<String> = Constraint::VALUED
                .iter()
                .map(|c| format!("'{}'", c.as_str()))
                .collect();
            all.push("`none`".into());
            ParseError::new(tok.line, tok.column, all, tok.kind.describe())
        };
        match &tok.kind {
            TokenKind::Str(s) => {
                self.advance();
                Constraint::from_text(s).ok_or_else(expected)
            }
            TokenKind::Word(_) => {
                let mut words = Vec::new();
                while let Some(w) = self.peek_word() {
                    words.push(w.to_owned());
                    self.advance();
                }
                Constraint::from_text(&words.join(" ")).ok_or_else(expected)
            }
            _ => Err(expected()),
        }
    }

    fn traffic(&mut self) -> Result<TrafficSpec, ParseError> {
        match self.peek_word() {
            Some("traffic") => {
                self.advance();
                Ok(TrafficSpec::Named(self.parenthesized_id("traffic id")?))
            }
            Some("flow") => {
                self.advance();
                self.punct(TokenKind::LParen)?;
                let mut fields: Vec<FiveTupleField> = Vec::new();
                loop {
                    let key_tok = self.advance();
                    let key = match &key_tok.kind {
                        TokenKind::Word(w) => FiveTupleKey::from_keyword(w),
                        _ => None,
                    }
                    .ok_or_else(|| {
                        ParseError::new(
                            key_tok.line,
                            key_tok.column,
                            FiveTupleKey::ALL.iter().map(|k| format!("`{}:`", k.as_str())).collect(),
                            key_tok.kind.describe(),
                        )
                    })?;
                    if fields.iter().any(|f| f.key == key) {
                        return Err(Self::error_at(&key_tok, "each five-tuple key at most once"));
                    }
                    self.punct(TokenKind::Colon)?;
                    let value_tok = self.peek().clone();
                    let value = self.id_value("five-tuple value")?;
                    if !five_tuple_value_ok(key, &value) {
                        let what = match key {
                            FiveTupleKey::SrcPort | FiveTupleKey::DestPort => "port number 0-65535",
                            FiveTupleKey::SrcIp | FiveTupleKey::DestIp => "dotted-quad IPv4 address",
                            FiveTupleKey::Protocol => "protocol name",
                        };
                        return Err(Self::error_at(&value_tok, what));
                    }
                    fields.push(FiveTupleField { key, value });
                    if self.peek().kind == TokenKind::Comma {
                        self.advance();
                    }
                    if self.peek().kind == TokenKind::RParen {
                        self.advance();
                        break;
                    }
                }
                Ok(TrafficSpec::Flow(fields))
            }
            _ => Err(self.error_here(&["`traffic`", "`flow`"])),
        }
    }

    fn target(&mut self) -> Result<Target, ParseError> {
        if self.peek_word() == Some("client") {
            self.advance();
            return Ok(Target::Client(self.parenthesized_id("client id")?));
        }
        match self.traffic() {
            Ok(t) => Ok(Target::Traffic(t)),
            Err(_) => Err(self.error_here(&["`client`", "`traffic`", "`flow`"])),
        }
    }

    fn date_time(&mut self) -> Result<DateTimeSpec, ParseError> {
        let kind = self
            .peek_word()
            .and_then(DateTimeKind::from_keyword)
            .ok_or_else(|| self.error_here(&["`datetime`", "`date`", "`hour`"]))?;
        self.advance();
        self.punct(TokenKind::LParen)?;
        let tok = self.peek().clone();
        let value = self.id_value("date/time literal")?;
        if !date_time_ok(kind, &value) {
            let what = match kind {
                DateTimeKind::Hour => "hour as HH:MM",
                DateTimeKind::Date => "date as YYYY-MM-DD",
                DateTimeKind::Datetime => "datetime as YYYY-MM-DDTHH:MM",
            };
            return Err(Self::error_at(&tok, what));
        }
        self.punct(TokenKind::RParen)?;
        Ok(DateTimeSpec { kind, value })
    }
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// `<number><unit>` such as `10ms`, `100mbps`, `0.5%`.
pub(crate) fn is_unit_literal(s: &str) -> bool {
    let digits_end = s.find(|c: char| !(c.is_ascii_digit() || c == '.')).unwrap_or(s.len());
    let (number, unit) = s.split_at(digits_end);
    number.parse::<f64>().is_ok()
        && !number.starts_with('.')
        && !number.ends_with('.')
        && unit.chars().all(|c| c.is_ascii_alphabetic() || c == '%')
}

fn five_tuple_value_ok(key: FiveTupleKey, value: &str) -> bool {
    match key {
        FiveTupleKey::SrcPort | FiveTupleKey::DestPort => {
            !value.is_empty() && value.chars().all(|c| c.is_ascii_digit()) && value.parse::<u16>().is_ok()
        }
        FiveTupleKey::SrcIp | FiveTupleKey::DestIp => {
            let parts: Vec<_> = value.split('.').collect();
            parts.len() == 4
                && parts.iter().all(|p| {
                    !p.is_empty() && p.len() <= 3 && p.chars().all(|c| c.is_ascii_digit()) && p.parse::<u8>().is_ok()
                })
        }
        FiveTupleKey::Protocol => !value.trim().is_empty(),
    }
}

fn fixed_digits(s: &str, pattern: &str) -> bool {
    s.len() == pattern.len()
        && s.chars().zip(pattern.chars()).all(|(c, p)| match p {
            'd' => c.is_ascii_digit(),
            other => c == other,
        })
}

fn hour_ok(s: &str) -> bool {
    fixed_digits(s, "dd:dd") && s[..2].parse::<u8>().unwrap() < 24 && s[3..].parse::<u8>().unwrap() < 60
}

fn date_ok(s: &str) -> bool {
    if !fixed_digits(s, "dddd-dd-dd") {
        return false;
    }
    let month: u8 = s[5..7].parse().unwrap();
    let day: u8 = s[8..].parse().unwrap();
    (1..=12).contains(&month) && (1..=31).contains(&day)
}

pub(crate) fn date_time_ok(kind: DateTimeKind, value: &str) -> bool {
    match kind {
        DateTimeKind::Hour => hour_ok(value),
        DateTimeKind::Date => date_ok(value),
        DateTimeKind::Datetime => value
            .split_once('T')
            .is_some_and(|(d, h)| date_ok(d) && hour_ok(h)),
    }
}
