use crate::error::{CoxeterError, Result};
use crate::word::Element;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;

/// Order of a product of two generators: the entry `m_ij` of the Coxeter
/// matrix. `Infinite` means the pair satisfies no relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CoxeterOrder {
    Finite(u32),
    Infinite,
}

impl CoxeterOrder {
    pub fn is_finite(self) -> bool {
        matches!(self, CoxeterOrder::Finite(_))
    }
}

impl Serialize for CoxeterOrder {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            CoxeterOrder::Finite(m) => s.serialize_u32(*m),
            CoxeterOrder::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for CoxeterOrder {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(u32),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(m) => Ok(CoxeterOrder::Finite(m)),
            Raw::Text(t) if t == "inf" || t == "infinity" || t == "∞" => Ok(CoxeterOrder::Infinite),
            Raw::Text(t) => Err(D::Error::custom(format!("bad order entry {t:?}"))),
        }
    }
}

/// A Coxeter system `(W, S)`: a symmetric matrix of orders `m_ij` with
/// `m_ii = 1` and off-diagonal entries at least 2, plus one label per
/// generator. All word arithmetic in the crate goes through this type.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CoxeterSystem {
    labels: Vec<String>,
    orders: Vec<Vec<CoxeterOrder>>,
    #[serde(skip)]
    right_angled: bool,
}

/// On-disk form: `{"labels": [...], "orders": [[1,"inf"],["inf",1]]}`.
#[derive(Deserialize)]
struct SystemFile {
    labels: Vec<String>,
    orders: Vec<Vec<CoxeterOrder>>,
}

impl CoxeterSystem {
    pub fn new(labels: Vec<String>, orders: Vec<Vec<CoxeterOrder>>) -> Result<Self> {
        let rank = labels.len();
        if rank == 0 {
            return Err(CoxeterError::InvalidMatrix("rank must be positive".into()));
        }
        if rank > u8::MAX as usize {
            return Err(CoxeterError::InvalidMatrix("rank exceeds 255".into()));
        }
        if orders.len() != rank || orders.iter().any(|row| row.len() != rank) {
            return Err(CoxeterError::InvalidMatrix(format!(
                "orders must be a {rank}x{rank} matrix"
            )));
        }
        for i in 0..rank {
            if orders[i][i] != CoxeterOrder::Finite(1) {
                return Err(CoxeterError::InvalidMatrix(format!(
                    "diagonal entry ({i},{i}) must be 1"
                )));
            }
            for j in 0..rank {
                if orders[i][j] != orders[j][i] {
                    return Err(CoxeterError::InvalidMatrix(format!(
                        "matrix not symmetric at ({i},{j})"
                    )));
                }
                if i != j {
                    if let CoxeterOrder::Finite(m) = orders[i][j] {
                        if m < 2 {
                            return Err(CoxeterError::InvalidMatrix(format!(
                                "off-diagonal entry ({i},{j}) must be at least 2"
                            )));
                        }
                    }
                }
            }
        }
        let right_angled = (0..rank).all(|i| {
            (0..rank).all(|j| {
                i == j
                    || matches!(
                        orders[i][j],
                        CoxeterOrder::Finite(2) | CoxeterOrder::Infinite
                    )
            })
        });
        Ok(CoxeterSystem {
            labels,
            orders,
            right_angled,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: SystemFile =
            serde_json::from_str(text).map_err(|e| CoxeterError::Parse(e.to_string()))?;
        CoxeterSystem::new(raw.labels, raw.orders)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("system serializes")
    }

    pub fn rank(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn order(&self, i: usize, j: usize) -> CoxeterOrder {
        self.orders[i][j]
    }

    pub fn commutes(&self, i: usize, j: usize) -> bool {
        self.orders[i][j] == CoxeterOrder::Finite(2)
    }

    /// Every off-diagonal entry is 2 or infinity.
    pub fn is_right_angled(&self) -> bool {
        self.right_angled
    }

    pub fn check_index(&self, i: usize) -> Result<()> {
        if i < self.rank() {
            Ok(())
        } else {
            Err(CoxeterError::IndexOutOfRange {
                index: i,
                rank: self.rank(),
            })
        }
    }

    pub fn generator(&self, i: usize) -> Result<Element> {
        self.check_index(i)?;
        Ok(Element::from_canonical(vec![i as u8]))
    }

    /// Generator index for a label.
    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| CoxeterError::Parse(format!("unknown generator label {label:?}")))
    }

    /// Parses a whitespace-separated word of generator labels; empty string is
    /// the identity.
    pub fn parse_word(&self, text: &str) -> Result<Element> {
        let mut word = Vec::new();
        for tok in text.split_whitespace() {
            word.push(self.index_of(tok)? as u8);
        }
        Ok(self.reduce_indices(&word))
    }

    pub fn format_word(&self, e: &Element) -> String {
        if e.is_identity() {
            return "e".to_string();
        }
        e.word()
            .iter()
            .map(|&i| self.labels[i as usize].as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn display<'a>(&'a self, e: &'a Element) -> DisplayWord<'a> {
        DisplayWord { sys: self, e }
    }
}

pub struct DisplayWord<'a> {
    sys: &'a CoxeterSystem,
    e: &'a Element,
}

impl fmt::Display for DisplayWord<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.sys.format_word(self.e))
    }
}

/// Convenience constructors used all over the test suites and the catalog.
impl CoxeterSystem {
    /// Rank-2 system with a single order `m_st`.
    pub fn dihedral(m: CoxeterOrder) -> CoxeterSystem {
        CoxeterSystem::new(
            vec!["s".into(), "t".into()],
            vec![
                vec![CoxeterOrder::Finite(1), m],
                vec![m, CoxeterOrder::Finite(1)],
            ],
        )
        .expect("valid dihedral matrix")
    }

    /// The infinite dihedral group; its complex is the line.
    pub fn infinite_dihedral() -> CoxeterSystem {
        CoxeterSystem::dihedral(CoxeterOrder::Infinite)
    }

    /// Free product of `rank` copies of Z/2; its complex is the regular tree
    /// of that valency.
    pub fn free_product(rank: usize) -> CoxeterSystem {
        let labels = (0..rank).map(|i| format!("s{}", i + 1)).collect();
        let orders = (0..rank)
            .map(|i| {
                (0..rank)
                    .map(|j| {
                        if i == j {
                            CoxeterOrder::Finite(1)
                        } else {
                            CoxeterOrder::Infinite
                        }
                    })
                    .collect()
            })
            .collect();
        CoxeterSystem::new(labels, orders).expect("valid free product matrix")
    }

    /// Right-angled system on an n-cycle: consecutive generators commute,
    /// all other pairs are unrelated. `cycle(5)` is the pentagon group.
    pub fn right_angled_cycle(n: usize) -> CoxeterSystem {
        assert!(n >= 4, "cycle nerve needs at least 4 vertices");
        let labels = (0..n).map(|i| format!("s{}", i + 1)).collect();
        let orders = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        if i == j {
                            CoxeterOrder::Finite(1)
                        } else if (i + 1) % n == j || (j + 1) % n == i {
                            CoxeterOrder::Finite(2)
                        } else {
                            CoxeterOrder::Infinite
                        }
                    })
                    .collect()
            })
            .collect();
        CoxeterSystem::new(labels, orders).expect("valid cycle matrix")
    }

    /// Direct product: block-diagonal orders, entries 2 across blocks.
    pub fn product(a: &CoxeterSystem, b: &CoxeterSystem) -> CoxeterSystem {
        let rank = a.rank() + b.rank();
        let mut labels = Vec::with_capacity(rank);
        for l in &a.labels {
            labels.push(format!("a.{l}"));
        }
        for l in &b.labels {
            labels.push(format!("b.{l}"));
        }
        let mut orders = vec![vec![CoxeterOrder::Finite(2); rank]; rank];
        for i in 0..a.rank() {
            for j in 0..a.rank() {
                orders[i][j] = a.orders[i][j];
            }
        }
        for i in 0..b.rank() {
            for j in 0..b.rank() {
                orders[a.rank() + i][a.rank() + j] = b.orders[i][j];
            }
        }
        CoxeterSystem::new(labels, orders).expect("valid product matrix")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_matrices() {
        let bad = CoxeterSystem::new(
            vec!["s".into(), "t".into()],
            vec![
                vec![CoxeterOrder::Finite(1), CoxeterOrder::Finite(1)],
                vec![CoxeterOrder::Finite(1), CoxeterOrder::Finite(1)],
            ],
        );
        assert!(bad.is_err());
        let asym = CoxeterSystem::new(
            vec!["s".into(), "t".into()],
            vec![
                vec![CoxeterOrder::Finite(1), CoxeterOrder::Finite(3)],
                vec![CoxeterOrder::Finite(4), CoxeterOrder::Finite(1)],
            ],
        );
        assert!(asym.is_err());
    }

    #[test]
    fn right_angled_flag() {
        assert!(CoxeterSystem::infinite_dihedral().is_right_angled());
        assert!(CoxeterSystem::free_product(3).is_right_angled());
        assert!(CoxeterSystem::right_angled_cycle(5).is_right_angled());
        assert!(!CoxeterSystem::dihedral(CoxeterOrder::Finite(3)).is_right_angled());
    }

    #[test]
    fn file_round_trip() {
        let text = r#"{"labels": ["s", "t"], "orders": [[1, "inf"], ["inf", 1]]}"#;
        let sys = CoxeterSystem::from_json(text).unwrap();
        assert_eq!(sys.rank(), 2);
        assert_eq!(sys.order(0, 1), CoxeterOrder::Infinite);
        let again = CoxeterSystem::from_json(&sys.to_json()).unwrap();
        assert_eq!(sys, again);
    }
}
