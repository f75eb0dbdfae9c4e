use crate::ball::is_reflection;
use crate::error::{CoxeterError, Result};
use crate::residue::SphericalResidue;
use crate::system::CoxeterSystem;
use crate::word::Element;

/// A half-space of the Coxeter complex, determined by the reflection of its
/// wall and a side. The positive side is the one containing the identity
/// chamber: `{ c : l(t c) > l(c) }`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Root {
    reflection: Element,
    positive: bool,
}

impl Root {
    pub fn new(sys: &CoxeterSystem, reflection: Element, positive: bool) -> Result<Root> {
        if !is_reflection(sys, &reflection) {
            return Err(CoxeterError::NotAReflection(
                reflection.indices().collect(),
            ));
        }
        Ok(Root {
            reflection,
            positive,
        })
    }

    /// Skips the reflection check; for internal callers that already hold a
    /// wall element.
    pub(crate) fn from_wall(reflection: Element, positive: bool) -> Root {
        Root {
            reflection,
            positive,
        }
    }

    /// Positive root of a single generator: `alpha_s = { w : l(sw) > l(w) }`.
    pub fn simple(sys: &CoxeterSystem, s: usize) -> Result<Root> {
        Ok(Root {
            reflection: sys.generator(s)?,
            positive: true,
        })
    }

    pub fn reflection(&self) -> &Element {
        &self.reflection
    }

    pub fn is_positive_side(&self) -> bool {
        self.positive
    }

    pub fn opposite(&self) -> Root {
        Root {
            reflection: self.reflection.clone(),
            positive: !self.positive,
        }
    }

    /// Membership of a chamber. Exactly one of `r`, `r.opposite()` contains
    /// any given chamber; `l(tc)` never equals `l(c)`.
    pub fn contains_chamber(&self, sys: &CoxeterSystem, c: &Element) -> bool {
        let tc = sys.multiply(&self.reflection, c);
        (tc.length() > c.length()) == self.positive
    }

    /// A root contains a residue when it contains at least one of its
    /// chambers.
    pub fn weakly_contains(&self, sys: &CoxeterSystem, r: &SphericalResidue) -> bool {
        r.chambers(sys)
            .iter()
            .any(|c| self.contains_chamber(sys, c))
    }

    /// Full containment of the chamber set.
    pub fn strongly_contains(&self, sys: &CoxeterSystem, r: &SphericalResidue) -> bool {
        r.chambers(sys)
            .iter()
            .all(|c| self.contains_chamber(sys, c))
    }

    /// Image under left translation: `w · (t, side)` has wall `w t w^{-1}`,
    /// with the side carried along so that chamber membership is equivariant.
    pub fn translate(&self, sys: &CoxeterSystem, w: &Element) -> Root {
        let wtw = sys.multiply(&sys.multiply(w, &self.reflection), &sys.inverse(w));
        // The translated root contains w·1 = w iff self contains identity.
        let contains_w = self.positive;
        let positive_side_has_w = {
            let tw = sys.multiply(&wtw, w);
            tw.length() > w.length()
        };
        Root {
            reflection: wtw,
            positive: contains_w == positive_side_has_w,
        }
    }
}

/// Both sides of every wall in the list.
pub fn roots_of_walls(walls: &[Element]) -> Vec<Root> {
    let mut out = Vec::with_capacity(2 * walls.len());
    for t in walls {
        out.push(Root::from_wall(t.clone(), true));
        out.push(Root::from_wall(t.clone(), false));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::CoxeterOrder;

    #[test]
    fn simple_root_membership() {
        let sys = CoxeterSystem::dihedral(CoxeterOrder::Finite(3));
        let alpha = Root::simple(&sys, 0).unwrap();
        // l(s) > 0, so the identity is inside.
        assert!(alpha.contains_chamber(&sys, &Element::identity()));
        // l(ss) = 0 < 1, so s is outside.
        let s = sys.parse_word("s").unwrap();
        assert!(!alpha.contains_chamber(&sys, &s));
        // l(s·ts) = l(sts) = 3 > 2.
        let ts = sys.parse_word("t s").unwrap();
        assert!(alpha.contains_chamber(&sys, &ts));
    }

    #[test]
    fn bipartition() {
        let sys = CoxeterSystem::dihedral(CoxeterOrder::Finite(3));
        let walls = crate::ball::reflections_in_ball(&sys, 3).unwrap();
        let chambers = crate::ball::ball(&sys, 3).unwrap();
        for t in &walls {
            let pos = Root::from_wall(t.clone(), true);
            let neg = pos.opposite();
            for c in &chambers {
                assert!(pos.contains_chamber(&sys, c) ^ neg.contains_chamber(&sys, c));
            }
        }
    }

    #[test]
    fn translate_preserves_membership() {
        let sys = CoxeterSystem::infinite_dihedral();
        let alpha = Root::simple(&sys, 0).unwrap();
        let w = sys.parse_word("t s t").unwrap();
        let walpha = alpha.translate(&sys, &w);
        for c in crate::ball::ball(&sys, 4).unwrap() {
            let wc = sys.multiply(&w, &c);
            assert_eq!(
                alpha.contains_chamber(&sys, &c),
                walpha.contains_chamber(&sys, &wc)
            );
        }
    }

    #[test]
    fn non_reflection_rejected() {
        let sys = CoxeterSystem::infinite_dihedral();
        let st = sys.parse_word("s t").unwrap();
        assert!(Root::new(&sys, st, true).is_err());
    }
}
