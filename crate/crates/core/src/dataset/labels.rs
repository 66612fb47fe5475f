use super::{DatasetError, Label, Source};

/// Recognized PolitiFact verdicts (normalized form).
pub const POLITIFACT_LABELS: [&str; 8] = [
    "true",
    "mostly-true",
    "half-true",
    "mostly-false",
    "barely-true",
    "false",
    "pants-on-fire",
    "full-flop",
];

/// Recognized Snopes verdicts (normalized form).
pub const SNOPES_LABELS: [&str; 12] = [
    "true",
    "mostly-true",
    "half-true",
    "mixture",
    "mostly-false",
    "false",
    "unproven",
    "unfounded",
    "outdated",
    "miscaptioned",
    "misattributed",
    "labeled-satire",
];

const POLITIFACT_TRUE: [&str; 3] = ["mostly-true", "half-true", "true"];
const SNOPES_TRUE: [&str; 2] = ["mostly-true", "true"];

/// Lowercases and joins words with hyphens: `"Pants on Fire"` -> `"pants-on-fire"`.
pub fn normalize_label(raw: &str) -> String {
    raw.trim()
        .to_lowercase()
        .split(|c: char| c.is_whitespace() || c == '_' || c == '-')
        .filter(|w| !w.is_empty())
        .collect::<Vec<_>>()
        .join("-")
}

/// Collapses a fact-checker verdict to the binary label. Unknown verdicts
/// are an error rather than a silent `Fake`.
pub fn map_label(source: Source, raw_label: &str) -> Result<Label, DatasetError> {
    let (known, true_side): (&[&str], &[&str]) = match source {
        Source::Politifact => (&POLITIFACT_LABELS, &POLITIFACT_TRUE),
        Source::Snopes => (&SNOPES_LABELS, &SNOPES_TRUE),
    };
    if !known.contains(&raw_label) {
        return Err(DatasetError::UnknownLabel {
            origin: source,
            label: raw_label.to_string(),
        });
    }
    Ok(if true_side.contains(&raw_label) {
        Label::True
    } else {
        Label::Fake
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documented_examples() {
        assert_eq!(map_label(Source::Politifact, "half-true").unwrap(), Label::True);
        assert_eq!(map_label(Source::Snopes, "half-true").unwrap(), Label::Fake);
        assert_eq!(map_label(Source::Politifact, "pants-on-fire").unwrap(), Label::Fake);
    }

    #[test]
    fn unknown_label_is_error() {
        let err = map_label(Source::Snopes, "spicy").unwrap_err();
        assert!(err.to_string().contains("\"spicy\""));
        assert!(map_label(Source::Politifact, "mixture").is_err());
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_label("  Pants on Fire "), "pants-on-fire");
        assert_eq!(normalize_label("Mostly_True"), "mostly-true");
        assert_eq!(normalize_label("half--true"), "half-true");
        assert_eq!("PolitiFact".parse::<Source>().unwrap(), Source::Politifact);
        assert!("reuters".parse::<Source>().is_err());
    }
}
