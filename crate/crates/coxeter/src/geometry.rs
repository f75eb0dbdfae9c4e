use crate::ball::separating_walls;
use crate::error::{CoxeterError, Result};
use crate::residue::SphericalResidue;
use crate::root::Root;
use crate::system::CoxeterSystem;
use crate::word::Element;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// Root-distance between residues: half the number of separating roots,
/// counted in both directions. A nonnegative half-integer, stored doubled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RootDistance {
    half_steps: u64,
}

impl RootDistance {
    pub fn from_half_steps(half_steps: u64) -> RootDistance {
        RootDistance { half_steps }
    }

    pub fn zero() -> RootDistance {
        RootDistance { half_steps: 0 }
    }

    /// Twice the distance, always an integer.
    pub fn half_steps(self) -> u64 {
        self.half_steps
    }

    pub fn is_integer(self) -> bool {
        self.half_steps % 2 == 0
    }

    pub fn as_f64(self) -> f64 {
        self.half_steps as f64 / 2.0
    }

    pub fn ceil(self) -> u64 {
        self.half_steps.div_ceil(2)
    }
}

impl fmt::Display for RootDistance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.half_steps % 2 == 0 {
            write!(f, "{}", self.half_steps / 2)
        } else {
            write!(f, "{}/2", self.half_steps)
        }
    }
}

/// The pair `(Phi(R,S), Phi(S,R))`: roots containing `R` but not `S`, and the
/// reverse. Containment of a residue is the weak convention (the root holds
/// at least one of its chambers).
///
/// Candidate walls come from the crossing sets of minimal galleries between
/// chamber pairs of the two residues, which is exact: any root holding a
/// chamber of `R` and no chamber of `S` has its wall crossed by every gallery
/// from that chamber into `S`.
pub fn separating_roots(
    sys: &CoxeterSystem,
    r: &SphericalResidue,
    s: &SphericalResidue,
    radius: usize,
) -> Result<(Vec<Root>, Vec<Root>)> {
    let r_chambers = r.chambers(sys);
    let s_chambers = s.chambers(sys);
    for c in r_chambers.iter().chain(s_chambers.iter()) {
        if c.length() + 1 > radius {
            return Err(CoxeterError::BallTooSmall {
                radius,
                reason: format!(
                    "residue chamber {} at length {} leaves ball({})",
                    sys.format_word(c),
                    c.length(),
                    radius.saturating_sub(1)
                ),
            });
        }
    }
    let mut walls: BTreeSet<Element> = BTreeSet::new();
    for c in &r_chambers {
        for d in &s_chambers {
            for t in separating_walls(sys, c, d) {
                walls.insert(t);
            }
        }
    }
    let mut phi_rs = Vec::new();
    let mut phi_sr = Vec::new();
    for t in walls {
        for side in [true, false] {
            let alpha = Root::from_wall(t.clone(), side);
            let holds_r = alpha.weakly_contains(sys, r);
            let holds_s = alpha.weakly_contains(sys, s);
            if holds_r && !holds_s {
                phi_rs.push(alpha);
            } else if holds_s && !holds_r {
                phi_sr.push(alpha);
            }
        }
    }
    Ok((phi_rs, phi_sr))
}

/// `d(R,S) = (|Phi(R,S)| + |Phi(S,R)|) / 2`.
pub fn root_distance(
    sys: &CoxeterSystem,
    r: &SphericalResidue,
    s: &SphericalResidue,
    radius: usize,
) -> Result<RootDistance> {
    let (phi_rs, phi_sr) = separating_roots(sys, r, s, radius)?;
    Ok(RootDistance::from_half_steps(
        (phi_rs.len() + phi_sr.len()) as u64,
    ))
}

/// The unique chamber of `R` at minimal gallery distance from `C`. A tie
/// would falsify the building axioms, so it is a hard error.
pub fn project(sys: &CoxeterSystem, r: &SphericalResidue, c: &Element) -> Result<Element> {
    let mut best: Option<(usize, Element)> = None;
    let mut tie = false;
    for x in r.chambers(sys) {
        let d = sys.gallery_distance(c, &x);
        match &best {
            Some((bd, _)) if d > *bd => {}
            Some((bd, _)) if d == *bd => tie = true,
            _ => {
                best = Some((d, x));
                tie = false;
            }
        }
    }
    if tie {
        return Err(CoxeterError::NonUniqueProjection);
    }
    Ok(best.expect("residue nonempty").1)
}

/// `proj_R(S)`: the chamberwise projection of `S` onto `R`, verified to be a
/// residue of `R` (a coset of a sub-parabolic of the type set of `R`).
pub fn project_residue(
    sys: &CoxeterSystem,
    r: &SphericalResidue,
    s: &SphericalResidue,
) -> Result<SphericalResidue> {
    let mut image: BTreeSet<Element> = BTreeSet::new();
    for c in s.chambers(sys) {
        image.insert(project(sys, r, &c)?);
    }
    let base = image.iter().next().expect("projection nonempty").clone();
    let mut sub_types: Vec<usize> = Vec::new();
    for j in r.types() {
        let next = sys.right_mul(&base, j)?;
        if image.contains(&next) {
            sub_types.push(j);
        }
    }
    let candidate = SphericalResidue::new(sys, &base, &sub_types)?;
    let candidate_chambers: BTreeSet<Element> = candidate.chambers(sys).into_iter().collect();
    if candidate_chambers != image {
        return Err(CoxeterError::NotAResidue);
    }
    Ok(candidate)
}

/// All spherical residues whose chambers lie inside `ball(radius)`.
pub fn residues_in_ball(sys: &CoxeterSystem, radius: usize) -> Result<Vec<SphericalResidue>> {
    let chambers = crate::ball::ball(sys, radius)?;
    let chamber_set: BTreeSet<Element> = chambers.iter().cloned().collect();
    let mut out: BTreeSet<SphericalResidue> = BTreeSet::new();
    let rank = sys.rank();
    let type_sets = subsets(rank);
    for c in &chambers {
        'sets: for types in &type_sets {
            match SphericalResidue::new(sys, c, types) {
                Ok(res) => {
                    for x in res.chambers(sys) {
                        if !chamber_set.contains(&x) {
                            continue 'sets;
                        }
                    }
                    out.insert(res);
                }
                Err(CoxeterError::NotSpherical(_)) => continue,
                Err(e) => return Err(e),
            }
        }
    }
    Ok(out.into_iter().collect())
}

fn subsets(rank: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(1 << rank);
    for mask in 0u32..(1 << rank) {
        out.push((0..rank).filter(|&i| mask >> i & 1 == 1).collect());
    }
    out
}

/// The combinatorial convex hull of two residues: all residues of the ball
/// whose chamber set lies inside every root that fully contains the chambers
/// of `x` and of `y`.
pub fn convex_hull(
    sys: &CoxeterSystem,
    x: &SphericalResidue,
    y: &SphericalResidue,
    radius: usize,
) -> Result<Vec<SphericalResidue>> {
    let support = convex_hull_chambers(sys, x, y, radius)?;
    collect_residues_in(sys, &support, radius)
}

/// Chamber support of the hull: the intersection of all roots containing
/// both chamber sets, cut to the ball.
pub fn convex_hull_chambers(
    sys: &CoxeterSystem,
    x: &SphericalResidue,
    y: &SphericalResidue,
    radius: usize,
) -> Result<BTreeSet<Element>> {
    let ball = crate::ball::ball(sys, radius)?;
    let mut fixed: Vec<Element> = x.chambers(sys);
    fixed.extend(y.chambers(sys));
    for c in &fixed {
        if c.length() > radius {
            return Err(CoxeterError::BallTooSmall {
                radius,
                reason: "hull endpoint outside ball".into(),
            });
        }
    }
    // Only walls separating some pair of ball chambers can cut the hull.
    let walls = crate::ball::reflections_in_ball(sys, 2 * radius + 1)?;
    let mut support: BTreeSet<Element> = ball.into_iter().collect();
    for t in &walls {
        for side in [true, false] {
            let alpha = Root::from_wall(t.clone(), side);
            if fixed.iter().all(|c| alpha.contains_chamber(sys, c)) {
                support.retain(|c| alpha.contains_chamber(sys, c));
            }
        }
    }
    Ok(support)
}

/// Residues of the ball fully supported on a chamber set.
pub fn collect_residues_in(
    sys: &CoxeterSystem,
    support: &BTreeSet<Element>,
    radius: usize,
) -> Result<Vec<SphericalResidue>> {
    let mut out = Vec::new();
    for res in residues_in_ball(sys, radius)? {
        if res.chambers(sys).iter().all(|c| support.contains(c)) {
            out.push(res);
        }
    }
    Ok(out)
}

/// Gate property check helper: distances from a chamber to every chamber of
/// a residue, via the projection.
pub fn gate_decomposition_holds(
    sys: &CoxeterSystem,
    r: &SphericalResidue,
    c: &Element,
) -> Result<bool> {
    let gate = project(sys, r, c)?;
    let to_gate = sys.gallery_distance(c, &gate);
    for x in r.chambers(sys) {
        let direct = sys.gallery_distance(c, &x);
        let through = to_gate + sys.gallery_distance(&gate, &x);
        if direct != through {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Canonical key for a residue, used when comparing residue sets produced by
/// different routes.
pub fn residue_key(sys: &CoxeterSystem, r: &SphericalResidue) -> (Element, Vec<u8>) {
    let _ = sys;
    (r.base().clone(), r.type_set().to_vec())
}

#[allow(dead_code)]
pub(crate) fn index_residues(
    sys: &CoxeterSystem,
    list: &[SphericalResidue],
) -> BTreeMap<(Element, Vec<u8>), usize> {
    list.iter()
        .enumerate()
        .map(|(i, r)| (residue_key(sys, r), i))
        .collect()
}
