use crate::error::{CoxeterError, Result};
use crate::system::CoxeterSystem;
use crate::word::Element;
use std::collections::BTreeSet;

/// Default hard cap on enumerated chambers.
pub const DEFAULT_BALL_CAP: usize = 2_000_000;

#[derive(Debug, Clone, Copy)]
pub struct BallOptions {
    pub cap: usize,
}

impl Default for BallOptions {
    fn default() -> Self {
        BallOptions {
            cap: DEFAULT_BALL_CAP,
        }
    }
}

/// All elements of length at most `radius`, each exactly once, sorted
/// ShortLex. The Cayley graph restricted to this set is the working
/// truncation of the Coxeter complex.
pub fn ball(sys: &CoxeterSystem, radius: usize) -> Result<Vec<Element>> {
    ball_with(sys, radius, BallOptions::default())
}

pub fn ball_with(sys: &CoxeterSystem, radius: usize, opts: BallOptions) -> Result<Vec<Element>> {
    let mut seen: BTreeSet<Element> = BTreeSet::new();
    seen.insert(Element::identity());
    let mut frontier = vec![Element::identity()];
    for _ in 0..radius {
        let mut next = Vec::new();
        for w in &frontier {
            for s in 0..sys.rank() {
                let ws = sys.right_mul(w, s)?;
                if ws.length() > w.length() && seen.insert(ws.clone()) {
                    if seen.len() > opts.cap {
                        return Err(CoxeterError::CapExceeded {
                            what: "ball enumeration",
                            cap: opts.cap,
                        });
                    }
                    next.push(ws);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    Ok(seen.into_iter().collect())
}

/// All reflections (conjugates of generators) of length at most `radius`.
/// These index the walls of the complex crossing the ball.
///
/// Every reflection appears among the prefix-palindromes
/// `s_{i1} … s_{ij} … s_{i1}` of its own normal form, so scanning the
/// palindromes of all ball elements is complete.
pub fn reflections_in_ball(sys: &CoxeterSystem, radius: usize) -> Result<Vec<Element>> {
    reflections_in_ball_with(sys, radius, BallOptions::default())
}

pub fn reflections_in_ball_with(
    sys: &CoxeterSystem,
    radius: usize,
    opts: BallOptions,
) -> Result<Vec<Element>> {
    let chambers = ball_with(sys, radius, opts)?;
    let mut out: BTreeSet<Element> = BTreeSet::new();
    for w in &chambers {
        for t in prefix_palindromes(sys, w) {
            if t.length() <= radius {
                out.insert(t);
            }
        }
    }
    Ok(out.into_iter().collect())
}

/// The reflections crossed by the minimal gallery spelled by `w`'s normal
/// form: `t_j = s_{i1} … s_{ij} … s_{i1}`. These are exactly the walls
/// separating the identity chamber from `w`.
pub fn prefix_palindromes(sys: &CoxeterSystem, w: &Element) -> Vec<Element> {
    let word = w.word();
    let mut out = Vec::with_capacity(word.len());
    for j in 0..word.len() {
        let mut pal = Vec::with_capacity(2 * j + 1);
        pal.extend_from_slice(&word[..=j]);
        pal.extend(word[..j].iter().rev());
        out.push(sys.reduce_indices(&pal));
    }
    out
}

/// Walls separating chamber `c` from chamber `d`: conjugate the crossing
/// walls of `delta(c, d)` by `c`.
pub fn separating_walls(sys: &CoxeterSystem, c: &Element, d: &Element) -> Vec<Element> {
    let delta = sys.weyl_distance(c, d);
    let c_inv = sys.inverse(c);
    prefix_palindromes(sys, &delta)
        .into_iter()
        .map(|t| sys.multiply(&sys.multiply(c, &t), &c_inv))
        .collect()
}

/// True when `t` is a reflection: an involution equal to one of its own
/// prefix-palindromes.
pub fn is_reflection(sys: &CoxeterSystem, t: &Element) -> bool {
    if t.is_identity() || !sys.multiply(t, t).is_identity() {
        return false;
    }
    prefix_palindromes(sys, t).iter().any(|p| p == t)
}
