//! Word-level text normalization shared by world statistics and the agent vocabulary.

/// Lowercases, turns every non-alphanumeric character into a separator and
/// splits on whitespace.
pub fn words(text: &str) -> Vec<String> {
    let normalized: String = text
        .chars()
        .map(|c| if c.is_alphanumeric() { c.to_ascii_lowercase() } else { ' ' })
        .collect();
    normalized.split_whitespace().map(str::to_owned).collect()
}
