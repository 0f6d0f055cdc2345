use std::sync::OnceLock;

use serde::Deserialize;

/// Template banks for the synthetic tasks. Versioned so results can be tied
/// to the exact bank contents.
#[derive(Debug, Clone, Deserialize)]
pub struct Banks {
    pub version: String,
    pub names: Vec<String>,
    pub places: Vec<String>,
    pub objects: Vec<String>,
    /// Use `{S}` (subject, repeated), `{IO}` (indirect object), `{PLACE}`, `{OBJECT}`.
    pub ioi_templates: Vec<String>,
    pub greater_nouns: Vec<String>,
    /// Uses `{NOUN}`, `{CENTURY}` and `{START}`.
    pub greater_template: String,
    pub greater_century: String,
}

const BANKS_V1: &str = include_str!("../../data/banks_v1.json");

/// The bundled bank set.
pub fn banks() -> &'static Banks {
    static BANKS: OnceLock<Banks> = OnceLock::new();
    BANKS.get_or_init(|| serde_json::from_str(BANKS_V1).expect("bundled banks parse"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_banks_are_well_formed() {
        let b = banks();
        assert_eq!(b.version, "banks-v1");
        assert!(b.names.len() >= 100);
        assert!(b
            .ioi_templates
            .iter()
            .all(|t| t.contains("{S}") && t.contains("{IO}")));
        assert!(b.greater_template.contains("{START}"));
        let mut names = b.names.clone();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), b.names.len());
    }
}
