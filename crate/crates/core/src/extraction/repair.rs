//! Repair of malformed model output before JSON parsing.
//!
//! Models wrap JSON in code fences, prepend prose, drop closing brackets, or
//! leave trailing commas. `repair_output` strips and balances what it can and
//! then parses; a failure is a value, never a panic.

use serde_json::Value;

/// Why no structure could be recovered from a raw response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepairFailure {
    pub reason: String,
}

impl std::fmt::Display for RepairFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "unrepairable output: {}", self.reason)
    }
}

impl std::error::Error for RepairFailure {}

/// Recover a JSON value from raw model output.
///
/// Pipeline: strip code fences → drop prose before the first `{`/`[` and
/// after the matching close → balance brackets → remove trailing commas →
/// parse.
pub fn repair_output(raw: &str) -> Result<Value, RepairFailure> {
    let defenced = strip_fences(raw);
    let Some(start) = defenced.find(['{', '[']) else {
        return Err(RepairFailure { reason: "no JSON object or array found".into() });
    };
    let body = truncate_balanced(&defenced[start..]);
    let balanced = balance_brackets(&body);
    let cleaned = strip_trailing_commas(&balanced);
    serde_json::from_str(&cleaned).map_err(|e| RepairFailure { reason: e.to_string() })
}

// Keep only the content of the first fenced block when fences are present.
// A fence only counts if it opens before any structural character, so
// backticks inside JSON strings are left alone.
fn strip_fences(raw: &str) -> String {
    let trimmed = raw.trim();
    let Some(open) = trimmed.find("```") else {
        return trimmed.to_string();
    };
    if let Some(structural) = trimmed.find(['{', '[']) {
        if structural < open {
            return trimmed.to_string();
        }
    }
    let after_open = &trimmed[open + 3..];
    // Skip an optional language tag up to the end of that line.
    let content_start = after_open.find('\n').map(|i| i + 1).unwrap_or(0);
    let content = &after_open[content_start..];
    match content.find("```") {
        Some(close) => content[..close].trim().to_string(),
        None => content.trim().to_string(),
    }
}

// Walk the text string-aware; cut everything after the bracket stack first
// empties (trailing prose). If the stack never empties, return the whole text.
fn truncate_balanced(text: &str) -> String {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, c) in text.char_indices() {
        if in_string {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_string = false;
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            '{' | '[' => depth += 1,
            '}' | ']' => {
                depth = depth.saturating_sub(1);
                if depth == 0 {
                    return text[..i + c.len_utf8()].to_string();
                }
            }
            _ => {}
        }
    }
    text.to_string()
}

// Append whatever closers the open-bracket stack still needs. An unterminated
// string gets its quote first.
fn balance_brackets(text: &str) -> String {
    let mut stack: Vec<char> = Vec::new();
    let mut in_string = false;
    let mut escaped = false;
    for c in text.chars() {
        if in_string {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_string = false;
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            '{' => stack.push('}'),
            '[' => stack.push(']'),
            '}' | ']' if stack.last() == Some(&c) => {
                stack.pop();
            }
            _ => {}
        }
    }
    let mut out = text.to_string();
    if in_string {
        out.push('"');
    }
    while let Some(closer) = stack.pop() {
        out.push(closer);
    }
    out
}

// Drop commas that directly precede a closing bracket (whitespace allowed),
// outside strings.
fn strip_trailing_commas(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut in_string = false;
    let mut escaped = false;
    for (i, &c) in chars.iter().enumerate() {
        if in_string {
            out.push(c);
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_string = false;
            }
            continue;
        }
        if c == '"' {
            in_string = true;
            out.push(c);
            continue;
        }
        if c == ',' {
            let next_significant = chars[i + 1..].iter().find(|ch| !ch.is_whitespace());
            if matches!(next_significant, Some('}') | Some(']')) {
                continue;
            }
        }
        out.push(c);
    }
    out
}
