use std::sync::OnceLock;

use regex::Regex;
use thiserror::Error;

use crate::env::Action;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("no action found in response")]
    NoActionFound,
    #[error("action {found} is not in the valid list {valid:?}")]
    ActionOutOfRange { found: String, valid: Vec<usize> },
}

fn action_object() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r#"\{\s*["']action["']\s*:\s*["']?\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*["']?\s*\}"#)
            .expect("valid regex")
    })
}

fn number() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[-+]?(?:\d+(?:\.\d+)?|\.\d+)(?:[eE][-+]?\d+)?").expect("valid regex"))
}

fn word_char(c: Option<char>) -> bool {
    c.is_some_and(|c| c.is_alphanumeric() || c == '_')
}

/// Numbers in `text` that are not glued to letters, as (literal, value).
fn standalone_numbers(text: &str) -> Vec<(&str, f64)> {
    number()
        .find_iter(text)
        .filter(|m| {
            let before = text[..m.start()].chars().next_back();
            let after = text[m.end()..].chars().next();
            !word_char(before) && !word_char(after) && before != Some('.')
        })
        .filter_map(|m| m.as_str().parse::<f64>().ok().map(|v| (m.as_str(), v)))
        .collect()
}

fn is_integer_literal(s: &str) -> bool {
    let s = s.strip_prefix(['-', '+']).unwrap_or(s);
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())
}

/// Extract a discrete action from free text. `valid` holds the 1-based indices
/// shown to the model; the result is 0-based.
///
/// The last `{"action": n}` object wins; without one, the last standalone
/// integer that appears in `valid` is used.
pub fn parse_discrete_action(text: &str, valid: &[usize]) -> Result<Action, ParseError> {
    if let Some(caps) = action_object().captures_iter(text).last() {
        let literal = caps[1].to_string();
        let value: f64 = literal.parse().map_err(|_| ParseError::NoActionFound)?;
        let out_of_range = || ParseError::ActionOutOfRange {
            found: literal.clone(),
            valid: valid.to_vec(),
        };
        if value.fract() != 0.0 || value < 1.0 {
            return Err(out_of_range());
        }
        let n = value as usize;
        return if valid.contains(&n) {
            Ok(Action::Discrete(n - 1))
        } else {
            Err(out_of_range())
        };
    }
    standalone_numbers(text)
        .into_iter()
        .rev()
        .filter(|(lit, _)| is_integer_literal(lit) && !lit.starts_with(['-', '+']))
        .filter_map(|(lit, _)| lit.parse::<usize>().ok())
        .find(|n| valid.contains(n))
        .map(|n| Action::Discrete(n - 1))
        .ok_or(ParseError::NoActionFound)
}

/// Extract a continuous action, clamped to `[lo, hi]`.
pub fn parse_continuous_action(text: &str, lo: f64, hi: f64) -> Result<Action, ParseError> {
    let value = match action_object().captures_iter(text).last() {
        Some(caps) => caps[1].parse::<f64>().ok(),
        None => standalone_numbers(text).last().map(|&(_, v)| v),
    };
    match value {
        Some(v) if v.is_finite() => Ok(Action::Continuous(v.clamp(lo, hi))),
        _ => Err(ParseError::NoActionFound),
    }
}
