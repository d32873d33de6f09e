fn is_url(token: &str) -> bool {
    let t = token.to_ascii_lowercase();
    t.contains("://") || t.starts_with("www.")
}

/// Lowercases and tokenizes tweet-like text.
///
/// URLs and `@mentions` are removed, hashtags keep their word, and every
/// character other than letters, digits and apostrophes is deleted. Tokens
/// left without any letter or digit are dropped.
pub fn normalize_text(raw: &str) -> Vec<String> {
    raw.split_whitespace()
        .filter(|t| !is_url(t) && !t.starts_with('@'))
        .filter_map(|t| {
            let cleaned: String = t
                .chars()
                .flat_map(char::to_lowercase)
                .filter(|c| (c.is_alphanumeric() && !c.is_uppercase()) || *c == '\'')
                .collect();
            cleaned
                .chars()
                .any(char::is_alphanumeric)
                .then_some(cleaned)
        })
        .collect()
}
