//! Token estimation and truncation helpers shared by ingestion and prompt
//! rendering.

/// Marker appended to any text shortened by this module.
pub const TRUNCATION_MARKER: &str = "[truncated]";

/// Characters assumed per token.
pub const CHARS_PER_TOKEN: usize = 4;

/// Backend-independent token estimate: `ceil(chars / 4)`.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(CHARS_PER_TOKEN)
}

/// Shortens `text` so that its estimate fits `budget_tokens`, cutting on the
/// nearest whitespace at or before the character limit and appending
/// `" [truncated]"`. Text already within budget is returned unchanged.
pub fn truncate_to_budget(text: &str, budget_tokens: usize) -> String {
    let budget_tokens = budget_tokens.max(1);
    if estimate_tokens(text) <= budget_tokens {
        return text.to_string();
    }
    truncate_chars(text, budget_tokens * CHARS_PER_TOKEN)
}

/// Character-limit variant of [`truncate_to_budget`]. The kept prefix has at
/// most `max_chars` characters.
pub fn truncate_chars(text: &str, max_chars: usize) -> String {
    if text.chars().count() <= max_chars {
        return text.to_string();
    }
    let chars: Vec<char> = text.chars().collect();
    // chars[max_chars] exists because the text is longer than the limit.
    let cut = if chars[max_chars].is_whitespace() {
        max_chars
    } else {
        chars[..max_chars]
            .iter()
            .rposition(|c| c.is_whitespace())
            .unwrap_or(max_chars)
    };
    let prefix: String = chars[..cut].iter().collect();
    let prefix = prefix.trim_end();
    if prefix.is_empty() {
        TRUNCATION_MARKER.to_string()
    } else {
        format!("{prefix} {TRUNCATION_MARKER}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimate_is_ceiling_of_quarter() {
        assert_eq!(estimate_tokens(""), 0);
        assert_eq!(estimate_tokens("abc"), 1);
        assert_eq!(estimate_tokens("abcd"), 1);
        assert_eq!(estimate_tokens("abcde"), 2);
        assert_eq!(estimate_tokens(&"x".repeat(40)), 10);
    }

    #[test]
    fn empty_text_is_unchanged() {
        assert_eq!(truncate_to_budget("", 1), "");
        assert_eq!(truncate_to_budget("", 500), "");
    }

    #[test]
    fn text_at_budget_is_unchanged() {
        let text = "a".repeat(40);
        assert_eq!(truncate_to_budget(&text, 10), text);
    }

    #[test]
    fn over_budget_cuts_on_whitespace() {
        // 50 chars: five 9-letter words separated by single spaces.
        let text = "alphabeta gammadelt epsilonze etathetai otakappal";
        assert_eq!(text.chars().count(), 49);
        let text = format!("{text}x");
        assert_eq!(text.chars().count(), 50);
        let out = truncate_to_budget(&text, 10);
        // chars[40] = 'o' of the last word, nearest preceding whitespace is
        // index 39, so the prefix is the first four words (39 chars).
        assert_eq!(out, "alphabeta gammadelt epsilonze etathetai [truncated]");
        let prefix = out.strip_suffix(" [truncated]").unwrap();
        assert!(prefix.chars().count() <= 40);
        assert!(text.starts_with(prefix));
    }

    #[test]
    fn no_whitespace_falls_back_to_hard_cut() {
        let text = "y".repeat(50);
        let out = truncate_to_budget(&text, 10);
        assert_eq!(out, format!("{} [truncated]", "y".repeat(40)));
    }

    #[test]
    fn multibyte_text_counts_chars() {
        let text = "é".repeat(12);
        assert_eq!(estimate_tokens(&text), 3);
        let out = truncate_chars(&text, 8);
        assert!(out.starts_with(&"é".repeat(8)));
    }
}
