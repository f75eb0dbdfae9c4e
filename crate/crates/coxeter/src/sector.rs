use crate::ball::{ball, reflections_in_ball, separating_walls};
use crate::bordification::{suffix_constant_from, BoundaryDirection, STABILITY_MARGIN};
use crate::error::{CoxeterError, Result};
use crate::geometry::{collect_residues_in, convex_hull_chambers};
use crate::residue::SphericalResidue;
use crate::root::Root;
use crate::system::CoxeterSystem;
use crate::word::Element;
use std::collections::BTreeSet;

/// A combinatorial sector `Q(x, xi)` truncated to a ball: the residues of the
/// ball carried by the direction, together with their chamber support.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sector {
    pub base: SphericalResidue,
    pub residues: Vec<SphericalResidue>,
    pub chamber_support: BTreeSet<Element>,
    pub stabilized: bool,
}

impl Sector {
    pub fn contains(&self, r: &SphericalResidue) -> bool {
        self.residues.binary_search(r).is_ok()
    }
}

/// Chamber support of the one-step directional hull from `x` toward `y`: the
/// intersection of every root meeting both residues, cut to the ball. Unlike
/// the symmetric convex hull this uses weak containment on both endpoints,
/// which is what makes sector supports taper to half-lines in trees.
fn directional_support(
    sys: &CoxeterSystem,
    walls: &[Element],
    ball_chambers: &[Element],
    x: &SphericalResidue,
    y: &SphericalResidue,
) -> BTreeSet<Element> {
    let mut support: BTreeSet<Element> = ball_chambers.iter().cloned().collect();
    for t in walls {
        for side in [true, false] {
            let alpha = Root::from_wall(t.clone(), side);
            if alpha.weakly_contains(sys, x) && alpha.weakly_contains(sys, y) {
                support.retain(|c| alpha.contains_chamber(sys, c));
            }
        }
    }
    support
}

fn residues_on_support(
    sys: &CoxeterSystem,
    support: &BTreeSet<Element>,
    radius: usize,
    base: &SphericalResidue,
) -> Result<Vec<SphericalResidue>> {
    let mut residues = collect_residues_in(sys, support, radius)?;
    if !residues.contains(base) {
        residues.push(base.clone());
        residues.sort();
    }
    Ok(residues)
}

/// `Q(x, xi)` as the eventual value of the tail intersections of directional
/// hulls `H(x, x_k)` inside the ball. The per-step hulls must hold a constant
/// value on the trailing stability window of the horizon, otherwise the
/// sector is returned flagged as not stabilized.
///
/// An interior direction short-circuits to the convex hull of the two
/// residues, matching the constant sequence.
pub fn sector(
    sys: &CoxeterSystem,
    x: &SphericalResidue,
    xi: &BoundaryDirection,
    radius: usize,
    horizon: usize,
) -> Result<Sector> {
    if let BoundaryDirection::Interior(y) = xi {
        let support = convex_hull_chambers(sys, x, y, radius)?;
        let residues = collect_residues_in(sys, &support, radius)?;
        return Ok(Sector {
            base: x.clone(),
            residues,
            chamber_support: support,
            stabilized: true,
        });
    }
    let seq = xi.sequence(sys, horizon)?;
    let walls = reflections_in_ball(sys, 2 * radius + 1)?;
    let chambers = ball(sys, radius)?;
    let supports: Vec<BTreeSet<Element>> = seq
        .iter()
        .map(|xk| directional_support(sys, &walls, &chambers, x, xk))
        .collect();
    let stable_from = suffix_constant_from(&supports, STABILITY_MARGIN);
    let stabilized = stable_from.is_some();
    let support = match stable_from {
        Some(i) => supports[i].clone(),
        // Not stabilized: report the deepest tail intersection anyway.
        None => {
            let mut acc = supports.last().cloned().unwrap_or_default();
            for s in supports.iter().rev().skip(1).take(STABILITY_MARGIN) {
                acc = acc.intersection(s).cloned().collect();
            }
            acc
        }
    };
    let residues = residues_on_support(sys, &support, radius, x)?;
    Ok(Sector {
        base: x.clone(),
        residues,
        chamber_support: support,
        stabilized,
    })
}

/// `Q(x, xi)` computed from the root-set: the intersection of the roots that
/// carry the direction and meet `x`. Must agree with `sector` on every
/// stabilized instance; the two routes are independent.
pub fn sector_by_roots(
    sys: &CoxeterSystem,
    x: &SphericalResidue,
    xi: &BoundaryDirection,
    radius: usize,
    horizon: usize,
) -> Result<Sector> {
    if let BoundaryDirection::Interior(y) = xi {
        let support = convex_hull_chambers(sys, x, y, radius)?;
        let residues = collect_residues_in(sys, &support, radius)?;
        return Ok(Sector {
            base: x.clone(),
            residues,
            chamber_support: support,
            stabilized: true,
        });
    }
    let root_set = crate::bordification::phi_of(sys, xi, 2 * radius + 1, horizon)?;
    let undetermined = root_set.undetermined_walls();
    if let Some(wall) = undetermined.first() {
        return Err(CoxeterError::UndeterminedRoot {
            wall: sys.format_word(wall),
        });
    }
    let mut support: BTreeSet<Element> = ball(sys, radius)?.into_iter().collect();
    for (root, _) in root_set.decided() {
        if root.weakly_contains(sys, x) {
            support.retain(|c| root.contains_chamber(sys, c));
        }
    }
    let residues = residues_on_support(sys, &support, radius, x)?;
    Ok(Sector {
        base: x.clone(),
        residues,
        chamber_support: support,
        stabilized: true,
    })
}

/// True when the chamber support is closed under intersecting the roots that
/// fully contain it (root convexity of the support).
pub fn support_is_root_convex(sys: &CoxeterSystem, sector: &Sector, radius: usize) -> Result<bool> {
    if sector.chamber_support.is_empty() {
        return Ok(true);
    }
    let walls = reflections_in_ball(sys, 2 * radius + 1)?;
    let mut closure: BTreeSet<Element> = ball(sys, radius)?.into_iter().collect();
    for t in &walls {
        for side in [true, false] {
            let alpha = Root::from_wall(t.clone(), side);
            if sector
                .chamber_support
                .iter()
                .all(|c| alpha.contains_chamber(sys, c))
            {
                closure.retain(|c| alpha.contains_chamber(sys, c));
            }
        }
    }
    Ok(closure == sector.chamber_support)
}

/// Gallery convexity of the support: every minimal gallery between support
/// chambers stays inside it.
pub fn support_is_gallery_convex(sys: &CoxeterSystem, sector: &Sector) -> bool {
    let support = &sector.chamber_support;
    for c in support {
        for d in support {
            if c >= d {
                continue;
            }
            // Walk one minimal gallery; roots make all of them equivalent here.
            let delta = sys.weyl_distance(c, d);
            let mut cur = c.clone();
            for s in delta.indices() {
                cur = sys.right_mul(&cur, s).expect("valid index");
                if !support.contains(&cur) {
                    return false;
                }
            }
        }
    }
    true
}

/// Every wall crossed on the way from `x` into the sector, used to order
/// supports for diagnostics.
#[allow(dead_code)]
pub(crate) fn walls_crossed(
    sys: &CoxeterSystem,
    from: &Element,
    support: &BTreeSet<Element>,
) -> BTreeSet<Element> {
    let mut out = BTreeSet::new();
    for c in support {
        for t in separating_walls(sys, from, c) {
            out.insert(t);
        }
    }
    out
}
