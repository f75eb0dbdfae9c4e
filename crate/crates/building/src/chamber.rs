use crate::error::{BuildingError, Result};
use std::fmt;

/// A chamber of a graph-product building: a group element of the graph
/// product of cyclic groups, as a list of syllables `(color, exponent)` in
/// shuffled normal form. Exponents run in `1..q_color`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Chamber {
    syllables: Vec<(u8, u32)>,
}

impl Chamber {
    pub fn identity() -> Chamber {
        Chamber {
            syllables: Vec::new(),
        }
    }

    pub(crate) fn from_canonical(syllables: Vec<(u8, u32)>) -> Chamber {
        Chamber { syllables }
    }

    pub fn syllables(&self) -> &[(u8, u32)] {
        &self.syllables
    }

    pub fn syllable_length(&self) -> usize {
        self.syllables.len()
    }

    pub fn is_identity(&self) -> bool {
        self.syllables.is_empty()
    }

    /// Color word: the underlying Weyl group letters.
    pub fn colors(&self) -> Vec<u8> {
        self.syllables.iter().map(|&(c, _)| c).collect()
    }
}

impl fmt::Display for Chamber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.syllables.is_empty() {
            return write!(f, "e");
        }
        let parts: Vec<String> = self
            .syllables
            .iter()
            .map(|&(c, e)| format!("#{c}^{e}"))
            .collect();
        write!(f, "{}", parts.join("."))
    }
}

/// Formats a chamber with generator labels, e.g. `a1.b2`.
pub fn format_chamber(labels: &[String], c: &Chamber) -> String {
    if c.is_identity() {
        return "e".to_string();
    }
    c.syllables()
        .iter()
        .map(|&(color, e)| format!("{}{}", labels[color as usize], e))
        .collect::<Vec<_>>()
        .join(".")
}

/// Parses `a1.b2` by longest-label match followed by a decimal exponent.
pub fn parse_chamber(labels: &[String], text: &str) -> Result<Vec<(u8, u32)>> {
    let text = text.trim();
    if text.is_empty() || text == "e" {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for token in text.split('.') {
        let token = token.trim();
        let mut best: Option<usize> = None;
        for (i, label) in labels.iter().enumerate() {
            if token.starts_with(label.as_str())
                && best.map_or(true, |b: usize| labels[b].len() < label.len())
            {
                best = Some(i);
            }
        }
        let Some(color) = best else {
            return Err(BuildingError::BadSyllable(format!(
                "token {token:?} matches no generator label"
            )));
        };
        let rest = &token[labels[color].len()..];
        let exponent: u32 = rest
            .parse()
            .map_err(|_| BuildingError::BadSyllable(format!("bad exponent in {token:?}")))?;
        out.push((color as u8, exponent));
    }
    Ok(out)
}
