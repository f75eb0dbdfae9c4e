use crate::error::{CoxeterError, Result};
use crate::system::CoxeterSystem;
use crate::word::Element;
use std::collections::BTreeSet;

/// Cap for enumerating the standard parabolic W_J when testing sphericity.
/// Exceeding it classifies the type set as non-spherical.
pub const PARABOLIC_CAP: usize = 10_000;

/// A spherical residue: the chamber set `base · W_J` for a finite standard
/// parabolic `W_J`. Canonical form keeps the ShortLex-least chamber of the
/// coset as `base`, so equality of values is equality of chamber sets.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SphericalResidue {
    base: Element,
    types: Vec<u8>,
}

impl SphericalResidue {
    /// Builds the residue of type `types` through `chamber`, verifying that
    /// `W_J` is finite by enumeration.
    pub fn new(sys: &CoxeterSystem, chamber: &Element, types: &[usize]) -> Result<Self> {
        let mut set = BTreeSet::new();
        for &j in types {
            sys.check_index(j)?;
            set.insert(j as u8);
        }
        let types: Vec<u8> = set.into_iter().collect();
        parabolic_elements(sys, &types)?;
        let base = minimal_coset_representative(sys, chamber, &types);
        Ok(SphericalResidue { base, types })
    }

    /// A single chamber seen as the residue of empty type.
    pub fn chamber(c: Element) -> SphericalResidue {
        SphericalResidue {
            base: c,
            types: Vec::new(),
        }
    }

    /// The panel of type `s` through `chamber`.
    pub fn panel(sys: &CoxeterSystem, chamber: &Element, s: usize) -> Result<Self> {
        SphericalResidue::new(sys, chamber, &[s])
    }

    pub fn base(&self) -> &Element {
        &self.base
    }

    pub fn types(&self) -> impl Iterator<Item = usize> + '_ {
        self.types.iter().map(|&j| j as usize)
    }

    pub fn type_set(&self) -> &[u8] {
        &self.types
    }

    pub fn is_chamber(&self) -> bool {
        self.types.is_empty()
    }

    /// All chambers of the residue, ShortLex sorted.
    pub fn chambers(&self, sys: &CoxeterSystem) -> Vec<Element> {
        let par = parabolic_elements(sys, &self.types).expect("validated at construction");
        let mut out: Vec<Element> = par.iter().map(|u| sys.multiply(&self.base, u)).collect();
        out.sort();
        out
    }

    pub fn contains_chamber(&self, sys: &CoxeterSystem, c: &Element) -> bool {
        let delta = sys.weyl_distance(&self.base, c);
        delta.indices().all(|i| self.types.contains(&(i as u8)))
            && parabolic_elements(sys, &self.types)
                .map(|par| par.contains(&delta))
                .unwrap_or(false)
    }

    /// Left translation by a group element.
    pub fn translate(&self, sys: &CoxeterSystem, w: &Element) -> SphericalResidue {
        let moved = sys.multiply(w, &self.base);
        let base = minimal_coset_representative(sys, &moved, &self.types);
        SphericalResidue {
            base,
            types: self.types.clone(),
        }
    }

    /// Gallery distance from a chamber to the residue's nearest chamber.
    pub fn gallery_distance_to(&self, sys: &CoxeterSystem, c: &Element) -> usize {
        self.chambers(sys)
            .iter()
            .map(|x| sys.gallery_distance(c, x))
            .min()
            .expect("residue nonempty")
    }

    /// Reflections whose wall crosses the residue (separates two of its
    /// chambers). These are the walls "containing" the residue.
    pub fn crossing_walls(&self, sys: &CoxeterSystem) -> Vec<Element> {
        let chambers = self.chambers(sys);
        let mut out = BTreeSet::new();
        for (i, c) in chambers.iter().enumerate() {
            for d in &chambers[i + 1..] {
                for t in crate::ball::separating_walls(sys, c, d) {
                    out.insert(t);
                }
            }
        }
        out.into_iter().collect()
    }

    /// Serialized form: `{"base": "s t", "J": ["s"]}`.
    pub fn to_json(&self, sys: &CoxeterSystem) -> serde_json::Value {
        serde_json::json!({
            "base": if self.base.is_identity() { String::new() } else { sys.format_word(&self.base) },
            "J": self.types().map(|j| sys.label(j).to_string()).collect::<Vec<_>>(),
        })
    }

    pub fn from_json(sys: &CoxeterSystem, v: &serde_json::Value) -> Result<Self> {
        let base_text = v
            .get("base")
            .and_then(|b| b.as_str())
            .ok_or_else(|| CoxeterError::Parse("residue missing \"base\"".into()))?;
        let base = sys.parse_word(base_text)?;
        let mut types = Vec::new();
        for j in v
            .get("J")
            .and_then(|j| j.as_array())
            .ok_or_else(|| CoxeterError::Parse("residue missing \"J\"".into()))?
        {
            let label = j
                .as_str()
                .ok_or_else(|| CoxeterError::Parse("type entry must be a label".into()))?;
            types.push(sys.index_of(label)?);
        }
        SphericalResidue::new(sys, &base, &types)
    }

    pub fn describe(&self, sys: &CoxeterSystem) -> String {
        let types: Vec<&str> = self.types().map(|j| sys.label(j)).collect();
        format!("[{} | {{{}}}]", sys.format_word(&self.base), types.join(","))
    }
}

/// Elements of the standard parabolic `W_J`, or an error if enumeration
/// exceeds the cap (the honest desk-scale sphericity test).
pub fn parabolic_elements(sys: &CoxeterSystem, types: &[u8]) -> Result<Vec<Element>> {
    let mut seen: BTreeSet<Element> = BTreeSet::new();
    seen.insert(Element::identity());
    let mut frontier = vec![Element::identity()];
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for w in &frontier {
            for &j in types {
                let wj = sys.right_mul(w, j as usize).expect("validated index");
                if seen.insert(wj.clone()) {
                    if seen.len() > PARABOLIC_CAP {
                        return Err(CoxeterError::NotSpherical(
                            types.iter().map(|&j| j as usize).collect(),
                        ));
                    }
                    next.push(wj);
                }
            }
        }
        frontier = next;
    }
    Ok(seen.into_iter().collect())
}

/// The unique minimal-length element of the coset `w W_J`, found by greedy
/// descent on the right.
fn minimal_coset_representative(sys: &CoxeterSystem, w: &Element, types: &[u8]) -> Element {
    let mut cur = w.clone();
    loop {
        let mut descended = false;
        for &j in types {
            let next = sys.right_mul(&cur, j as usize).expect("validated index");
            if next.length() < cur.length() {
                cur = next;
                descended = true;
                break;
            }
        }
        if !descended {
            return cur;
        }
    }
}
