use crate::chamber::{format_chamber, parse_chamber, Chamber};
use crate::error::{BuildingError, Result};
use coxeter::{CoxeterSystem, Element, SphericalResidue};
use std::collections::BTreeSet;

/// Default cap on enumerated chambers.
pub const DEFAULT_CHAMBER_CAP: usize = 2_000_000;

/// A thick right-angled building of type `(W, S)`: chambers are the elements
/// of the graph product of cyclic groups `Z/q_s`, with commutation exactly
/// where `m_st = 2`. The Weyl distance of two chambers is the color word of
/// the normal form of `C^{-1} D`.
#[derive(Debug, Clone)]
pub struct GraphProductBuilding {
    coxeter: CoxeterSystem,
    thickness: Vec<u32>,
}

impl GraphProductBuilding {
    pub fn new(coxeter: CoxeterSystem, thickness: Vec<u32>) -> Result<Self> {
        if !coxeter.is_right_angled() {
            return Err(BuildingError::NotRightAngled);
        }
        if thickness.len() != coxeter.rank() || thickness.iter().any(|&q| q < 2) {
            return Err(BuildingError::BadThickness);
        }
        Ok(GraphProductBuilding { coxeter, thickness })
    }

    /// The thin building: every panel has exactly two chambers, so the
    /// building is the Coxeter complex itself.
    pub fn thin(coxeter: CoxeterSystem) -> Result<Self> {
        let rank = coxeter.rank();
        GraphProductBuilding::new(coxeter, vec![2; rank])
    }

    pub fn coxeter(&self) -> &CoxeterSystem {
        &self.coxeter
    }

    pub fn thickness(&self, color: usize) -> u32 {
        self.thickness[color]
    }

    pub fn is_thin(&self) -> bool {
        self.thickness.iter().all(|&q| q == 2)
    }

    /// On-disk form: `{"coxeter": {...}, "thickness": {"s": 3, ...}}`.
    pub fn from_json(text: &str) -> Result<Self> {
        let v: serde_json::Value =
            serde_json::from_str(text).map_err(|e| BuildingError::Parse(e.to_string()))?;
        let coxeter = CoxeterSystem::from_json(
            &v.get("coxeter")
                .ok_or_else(|| BuildingError::Parse("missing \"coxeter\"".into()))?
                .to_string(),
        )?;
        let table = v
            .get("thickness")
            .and_then(|t| t.as_object())
            .ok_or_else(|| BuildingError::Parse("missing \"thickness\"".into()))?;
        let mut thickness = Vec::with_capacity(coxeter.rank());
        for label in coxeter.labels() {
            let q = table
                .get(label)
                .and_then(|q| q.as_u64())
                .ok_or_else(|| BuildingError::Parse(format!("missing thickness for {label}")))?;
            thickness.push(q as u32);
        }
        GraphProductBuilding::new(coxeter, thickness)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut table = serde_json::Map::new();
        for (label, &q) in self.coxeter.labels().iter().zip(&self.thickness) {
            table.insert(label.clone(), q.into());
        }
        serde_json::json!({
            "coxeter": serde_json::from_str::<serde_json::Value>(&self.coxeter.to_json()).unwrap(),
            "thickness": serde_json::Value::Object(table),
        })
    }

    /// Normal form of a syllable word: merge same colors through commuting
    /// blocks, drop trivial exponents, then shuffle to the least color order.
    pub fn normal_form(&self, word: &[(u8, u32)]) -> Result<Chamber> {
        let mut stack: Vec<(u8, u32)> = Vec::with_capacity(word.len());
        for &(color, exponent) in word {
            if color as usize >= self.coxeter.rank() {
                return Err(BuildingError::BadSyllable(format!(
                    "color {color} out of range"
                )));
            }
            self.push_syllable(&mut stack, color, exponent)?;
        }
        Ok(Chamber::from_canonical(self.shuffle_min(stack)))
    }

    fn push_syllable(&self, stack: &mut Vec<(u8, u32)>, color: u8, exponent: u32) -> Result<()> {
        let q = self.thickness[color as usize];
        let exponent = exponent % q;
        if exponent == 0 {
            return Ok(());
        }
        let mut i = stack.len();
        while i > 0 {
            let (c, e) = stack[i - 1];
            if c == color {
                let merged = (e + exponent) % q;
                // Re-push everything above the merge point: the removal can
                // expose new merges.
                let tail: Vec<(u8, u32)> = stack.drain(i..).collect();
                stack.pop();
                if merged != 0 {
                    self.push_syllable(stack, color, merged)?;
                }
                for (tc, te) in tail {
                    self.push_syllable(stack, tc, te)?;
                }
                return Ok(());
            }
            if self.coxeter.commutes(color as usize, c as usize) {
                i -= 1;
                continue;
            }
            break;
        }
        stack.push((color, exponent));
        Ok(())
    }

    /// Least word in the commutation class: repeatedly move the smallest
    /// front-available syllable to the front.
    fn shuffle_min(&self, mut word: Vec<(u8, u32)>) -> Vec<(u8, u32)> {
        let mut out = Vec::with_capacity(word.len());
        while !word.is_empty() {
            let mut best: Option<usize> = None;
            'pos: for (p, &(c, _)) in word.iter().enumerate() {
                for &(d, _) in &word[..p] {
                    if !self.coxeter.commutes(c as usize, d as usize) {
                        continue 'pos;
                    }
                }
                if best.map_or(true, |b| word[p].0 < word[b].0) {
                    best = Some(p);
                }
            }
            let p = best.expect("nonempty word has a movable syllable");
            out.push(word.remove(p));
        }
        out
    }

    pub fn multiply(&self, a: &Chamber, b: &Chamber) -> Chamber {
        let mut word = Vec::with_capacity(a.syllable_length() + b.syllable_length());
        word.extend_from_slice(a.syllables());
        word.extend_from_slice(b.syllables());
        self.normal_form(&word).expect("canonical syllables are valid")
    }

    pub fn inverse(&self, a: &Chamber) -> Chamber {
        let word: Vec<(u8, u32)> = a
            .syllables()
            .iter()
            .rev()
            .map(|&(c, e)| (c, self.thickness[c as usize] - e))
            .collect();
        self.normal_form(&word).expect("canonical syllables are valid")
    }

    /// Weyl distance `delta(C, D)`: the color word of `C^{-1} D` as a Weyl
    /// group element.
    pub fn weyl_distance(&self, c: &Chamber, d: &Chamber) -> Element {
        let diff = self.multiply(&self.inverse(c), d);
        let word: Vec<usize> = diff.colors().iter().map(|&x| x as usize).collect();
        self.coxeter
            .reduce_word(&word)
            .expect("colors are valid generators")
    }

    pub fn gallery_distance(&self, c: &Chamber, d: &Chamber) -> usize {
        self.weyl_distance(c, d).length()
    }

    /// The chambers of the panel of type `s` through `c` (including `c`).
    pub fn panel(&self, c: &Chamber, s: usize) -> Result<Vec<Chamber>> {
        self.coxeter.check_index(s).map_err(BuildingError::from)?;
        let mut out = vec![c.clone()];
        for e in 1..self.thickness[s] {
            let step = Chamber::from_canonical(vec![(s as u8, e)]);
            out.push(self.multiply(c, &step));
        }
        out.sort();
        Ok(out)
    }

    /// Chambers within gallery distance `radius` of the identity.
    pub fn ball(&self, radius: usize) -> Result<Vec<Chamber>> {
        self.ball_with_cap(radius, DEFAULT_CHAMBER_CAP)
    }

    pub fn ball_with_cap(&self, radius: usize, cap: usize) -> Result<Vec<Chamber>> {
        let mut seen: BTreeSet<Chamber> = BTreeSet::new();
        seen.insert(Chamber::identity());
        let mut frontier = vec![Chamber::identity()];
        for _ in 0..radius {
            let mut next = Vec::new();
            for c in &frontier {
                for s in 0..self.coxeter.rank() {
                    for e in 1..self.thickness[s] {
                        let step = Chamber::from_canonical(vec![(s as u8, e)]);
                        let cs = self.multiply(c, &step);
                        if cs.syllable_length() > c.syllable_length() && seen.insert(cs.clone()) {
                            if seen.len() > cap {
                                return Err(BuildingError::CapExceeded {
                                    what: "chamber ball",
                                    cap,
                                });
                            }
                            next.push(cs);
                        }
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

    pub fn format(&self, c: &Chamber) -> String {
        format_chamber(self.coxeter.labels(), c)
    }

    pub fn parse(&self, text: &str) -> Result<Chamber> {
        let sylls = parse_chamber(self.coxeter.labels(), text)?;
        self.normal_form(&sylls)
    }

    /// Left action on chambers by a group element.
    pub fn translate(&self, g: &Chamber, c: &Chamber) -> Chamber {
        self.multiply(g, c)
    }
}

/// A spherical residue of the building: the chamber set `base · G_J` for the
/// syllable subgroup on a spherical type set.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BuildingResidue {
    base: Chamber,
    types: Vec<u8>,
}

impl BuildingResidue {
    pub fn new(b: &GraphProductBuilding, chamber: &Chamber, types: &[usize]) -> Result<Self> {
        // Sphericity is a Weyl-group condition.
        SphericalResidue::new(b.coxeter(), &Element::identity(), types)?;
        let mut set: BTreeSet<u8> = BTreeSet::new();
        for &j in types {
            set.insert(j as u8);
        }
        let types: Vec<u8> = set.into_iter().collect();
        let base = Self::canonical_base(b, chamber, &types);
        Ok(BuildingResidue { base, types })
    }

    pub fn chamber(c: Chamber) -> BuildingResidue {
        BuildingResidue {
            base: c,
            types: Vec::new(),
        }
    }

    fn canonical_base(b: &GraphProductBuilding, chamber: &Chamber, types: &[u8]) -> Chamber {
        // Least chamber of the residue: strip trailing syllables of the type
        // set greedily by direct enumeration of the small residue group.
        let mut best = chamber.clone();
        let mut frontier = vec![chamber.clone()];
        let mut seen: BTreeSet<Chamber> = frontier.iter().cloned().collect();
        while let Some(c) = frontier.pop() {
            for &j in types {
                for e in 1..b.thickness(j as usize) {
                    let step = Chamber::from_canonical(vec![(j, e)]);
                    let next = b.multiply(&c, &step);
                    if seen.insert(next.clone()) {
                        frontier.push(next.clone());
                    }
                    if next < best {
                        best = next;
                    }
                }
            }
        }
        best
    }

    pub fn base(&self) -> &Chamber {
        &self.base
    }

    pub fn type_set(&self) -> &[u8] {
        &self.types
    }

    pub fn types(&self) -> impl Iterator<Item = usize> + '_ {
        self.types.iter().map(|&j| j as usize)
    }

    pub fn chambers(&self, b: &GraphProductBuilding) -> Vec<Chamber> {
        let mut out: BTreeSet<Chamber> = BTreeSet::new();
        out.insert(self.base.clone());
        let mut frontier = vec![self.base.clone()];
        while let Some(c) = frontier.pop() {
            for &j in &self.types {
                for e in 1..b.thickness(j as usize) {
                    let step = Chamber::from_canonical(vec![(j, e)]);
                    let next = b.multiply(&c, &step);
                    if out.insert(next.clone()) {
                        frontier.push(next);
                    }
                }
            }
        }
        out.into_iter().collect()
    }

    pub fn translate(&self, b: &GraphProductBuilding, g: &Chamber) -> BuildingResidue {
        let moved = b.multiply(g, &self.base);
        let base = Self::canonical_base(b, &moved, &self.types);
        BuildingResidue {
            base,
            types: self.types.clone(),
        }
    }

    /// The unique chamber of the residue nearest to `c`.
    pub fn project(&self, b: &GraphProductBuilding, c: &Chamber) -> Result<Chamber> {
        let mut best: Option<(usize, Chamber)> = None;
        let mut tie = false;
        for x in self.chambers(b) {
            let d = b.gallery_distance(c, &x);
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
            return Err(BuildingError::AxiomViolated(
                "projection onto a residue is not unique".into(),
            ));
        }
        Ok(best.expect("residue nonempty").1)
    }

    pub fn describe(&self, b: &GraphProductBuilding) -> String {
        let types: Vec<&str> = self.types().map(|j| b.coxeter().label(j)).collect();
        format!("[{} | {{{}}}]", b.format(&self.base), types.join(","))
    }
}
