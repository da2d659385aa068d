//! Extraction of code, directions and tests from raw model text.

use std::collections::HashSet;

use crate::types::{TestCase, TextualDirection};

/// Contents of the first fenced code block, or the whole response trimmed
/// when there is none. An unterminated fence runs to the end of the text.
pub fn extract_code(response: &str) -> String {
    let Some(start) = response.find("```") else {
        return response.trim().to_string();
    };
    let after = &response[start + 3..];
    // skip the info string (e.g. `python`) up to the end of the fence line
    let body = match after.find('\n') {
        Some(nl) => &after[nl + 1..],
        None => "",
    };
    let body = match body.find("```") {
        Some(end) => &body[..end],
        None => body,
    };
    body.trim_matches('\n').trim_end().to_string()
}

fn numbered_item(line: &str) -> Option<&str> {
    let line = line.trim_start();
    let digits = line.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits == 0 {
        return None;
    }
    let rest = &line[digits..];
    let rest = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')'))?;
    if !rest.starts_with(char::is_whitespace) {
        return None;
    }
    Some(rest.trim()).filter(|s| !s.is_empty())
}

fn bulleted_item(line: &str) -> Option<&str> {
    let line = line.trim_start();
    let rest = line
        .strip_prefix('-')
        .or_else(|| line.strip_prefix('*'))
        .or_else(|| line.strip_prefix('•'))?;
    if !rest.starts_with(char::is_whitespace) {
        return None;
    }
    Some(rest.trim()).filter(|s| !s.is_empty())
}

/// Parses up to `m` directions, preferring numbered lists, then bulleted
/// lists, then one direction per line (lines without any alphabetic
/// content are skipped).
pub fn parse_directions(response: &str, m: usize) -> Vec<TextualDirection> {
    let numbered: Vec<&str> = response.lines().filter_map(numbered_item).collect();
    let items = if !numbered.is_empty() {
        numbered
    } else {
        let bulleted: Vec<&str> = response.lines().filter_map(bulleted_item).collect();
        if !bulleted.is_empty() {
            bulleted
        } else {
            response
                .lines()
                .map(str::trim)
                .filter(|l| l.chars().any(char::is_alphabetic) && !l.starts_with("```"))
                .collect()
        }
    };
    items.into_iter().take(m).map(TextualDirection::new).collect()
}

/// Prefix given to model-generated test ids; hidden tests never use it.
pub const VALIDATION_ID_PREFIX: &str = "val-";

/// Collects distinct `assert` lines, keeping the first `count`.
pub fn parse_tests(response: &str, count: usize) -> Vec<TestCase> {
    let mut seen = HashSet::new();
    response
        .lines()
        .map(str::trim)
        .filter(|l| l.starts_with("assert ") || l.starts_with("assert("))
        .filter(|l| seen.insert(l.to_string()))
        .take(count)
        .enumerate()
        .map(|(i, l)| TestCase::assertion(format!("{VALIDATION_ID_PREFIX}{}", i + 1), l))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extract_plain_fence() {
        assert_eq!(extract_code("```\nx=1\n```"), "x=1");
    }

    #[test]
    fn extract_without_fence() {
        assert_eq!(extract_code("  def f(): return 1 \n"), "def f(): return 1");
    }

    #[test]
    fn extract_first_of_two_blocks() {
        let fixture = "Here:\n```python\ndef f():\n    return 1\n```\nand also\n```python\ndef g(): pass\n```\n";
        // oracle: text between the first "```python\n" and the next "```"
        let start = fixture.find("```python\n").unwrap() + "```python\n".len();
        let end = start + fixture[start..].find("```").unwrap();
        assert_eq!(extract_code(fixture), fixture[start..end].trim_end());
        assert_eq!(extract_code(fixture), "def f():\n    return 1");
    }

    #[test]
    fn extract_unterminated_fence() {
        assert_eq!(extract_code("```py\nprint(1)\n"), "print(1)");
    }

    #[test]
    fn numbered_directions() {
        let d = parse_directions("1. handle empty input\n2. fix off-by-one", 2);
        assert_eq!(d.len(), 2);
        assert_eq!(d[0].text, "handle empty input");
        assert_eq!(d[1].text, "fix off-by-one");
        assert!(!d[0].used);
        let d = parse_directions("1. handle empty input\n2. fix off-by-one", 1);
        assert_eq!(d.len(), 1);
    }

    #[test]
    fn five_items_truncated_to_three() {
        let fixture = "Ideas:\n1) a\n2) b\n3) c\n4) d\n5) e\n";
        let oracle: Vec<String> = fixture
            .lines()
            .filter(|l| l.len() > 2 && l.as_bytes()[0].is_ascii_digit())
            .map(|l| l[3..].to_string())
            .take(3)
            .collect();
        let got: Vec<String> = parse_directions(fixture, 3).into_iter().map(|d| d.text).collect();
        assert_eq!(got, oracle);
    }

    #[test]
    fn direction_priority() {
        let mixed = "- bullet one\n1. numbered\n* bullet two";
        let d = parse_directions(mixed, 5);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].text, "numbered");
        let bullets = parse_directions("Try:\n- a\n* b\n• c", 5);
        assert_eq!(bullets.iter().map(|d| d.text.as_str()).collect::<Vec<_>>(), ["a", "b", "c"]);
        let lines = parse_directions("check bounds\n\nuse a set", 5);
        assert_eq!(lines.len(), 2);
        assert!(parse_directions("  \n ", 3).is_empty());
    }

    #[test]
    fn tests_are_deduplicated_and_capped() {
        let t = parse_tests("assert f(1)==1\nassert f(1)==1\nassert f(2)==4\n", 6);
        assert_eq!(t.len(), 2);
        assert_eq!(t[0].test_id, "val-1");

        let fixture: String = (1..=8).map(|i| format!("assert f({i}) == {}\n", i * i)).collect();
        let t = parse_tests(&format!("```python\n{fixture}```"), 6);
        assert_eq!(t.len(), 6);
        assert_eq!(t[5].payload, "assert f(6) == 36");
    }
}
