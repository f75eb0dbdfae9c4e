use crate::ball::separating_walls;
use crate::bordification::{BoundaryDirection, DirectionOracle};
use crate::error::{CoxeterError, Result};
use crate::geometry::RootDistance;
use crate::residue::{parabolic_elements, SphericalResidue};
use crate::root::Root;
use crate::system::CoxeterSystem;
use crate::trees::{coset_representatives, WallClassifier, WallClasses};
use crate::word::Element;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use std::collections::{BTreeMap, BTreeSet, HashMap};

pub type Weight = BigRational;

pub fn ratio(num: i64, den: i64) -> Weight {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// A finitely supported probability measure with exact rational weights.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResidueMeasure<K: Ord + Clone> {
    weights: BTreeMap<K, Weight>,
}

impl<K: Ord + Clone> ResidueMeasure<K> {
    pub fn from_entries(entries: impl IntoIterator<Item = (K, Weight)>) -> Result<Self> {
        let mut weights: BTreeMap<K, Weight> = BTreeMap::new();
        for (k, w) in entries {
            if w.is_negative() {
                return Err(CoxeterError::Parse("negative weight".into()));
            }
            if !w.is_zero() {
                *weights.entry(k).or_insert_with(Weight::zero) += w;
            }
        }
        let total: Weight = weights.values().cloned().sum();
        if !total.is_one() {
            return Err(CoxeterError::Parse(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(ResidueMeasure { weights })
    }

    pub fn point_mass(k: K) -> Self {
        let mut weights = BTreeMap::new();
        weights.insert(k, Weight::one());
        ResidueMeasure { weights }
    }

    pub fn uniform(keys: impl IntoIterator<Item = K>) -> Result<Self> {
        let keys: Vec<K> = keys.into_iter().collect();
        if keys.is_empty() {
            return Err(CoxeterError::Parse("uniform measure on empty set".into()));
        }
        let w = BigRational::new(BigInt::one(), BigInt::from(keys.len()));
        ResidueMeasure::from_entries(keys.into_iter().map(|k| (k, w.clone())))
    }

    pub fn weight(&self, k: &K) -> Weight {
        self.weights.get(k).cloned().unwrap_or_else(Weight::zero)
    }

    pub fn support(&self) -> impl Iterator<Item = &K> {
        self.weights.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&K, &Weight)> {
        self.weights.iter()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total(&self) -> Weight {
        self.weights.values().cloned().sum()
    }

    /// Pushforward along a key map; a non-injective map merges weights.
    pub fn map_keys<L: Ord + Clone>(&self, f: impl Fn(&K) -> L) -> ResidueMeasure<L> {
        let mut weights: BTreeMap<L, Weight> = BTreeMap::new();
        for (k, w) in &self.weights {
            *weights.entry(f(k)).or_insert_with(Weight::zero) += w.clone();
        }
        ResidueMeasure { weights }
    }

    pub fn try_map_keys<L: Ord + Clone>(
        &self,
        mut f: impl FnMut(&K) -> Result<L>,
    ) -> Result<ResidueMeasure<L>> {
        let mut weights: BTreeMap<L, Weight> = BTreeMap::new();
        for (k, w) in &self.weights {
            *weights.entry(f(k)?).or_insert_with(Weight::zero) += w.clone();
        }
        Ok(ResidueMeasure { weights })
    }

    /// Convex combination accumulator.
    pub fn accumulate(acc: &mut BTreeMap<K, Weight>, m: &ResidueMeasure<K>, scale: &Weight) {
        for (k, w) in &m.weights {
            *acc.entry(k.clone()).or_insert_with(Weight::zero) += w.clone() * scale.clone();
        }
    }

    pub fn from_raw(weights: BTreeMap<K, Weight>) -> Self {
        ResidueMeasure {
            weights: weights.into_iter().filter(|(_, w)| !w.is_zero()).collect(),
        }
    }
}

/// Total-variation style l1 distance: the sum of absolute weight differences.
/// At most 2 for probability measures.
pub fn l1_distance<K: Ord + Clone>(a: &ResidueMeasure<K>, b: &ResidueMeasure<K>) -> Weight {
    let mut keys: BTreeSet<&K> = a.weights.keys().collect();
    keys.extend(b.weights.keys());
    let mut total = Weight::zero();
    for k in keys {
        let d = a.weight(k) - b.weight(k);
        total += d.abs();
    }
    total
}

/// How a chain toward a direction terminates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainEnd {
    /// Truncation of an infinite geodesic; entries beyond the list exist but
    /// are not materialized.
    Ray,
    /// The last entry is the interior target itself.
    Interior,
}

/// A geodesic of residues toward a direction: entry `i` sits at root-distance
/// `i/2` from entry `0`, alternating between vertex-like and panel-like
/// residues.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chain<K: Ord + Clone> {
    pub entries: Vec<K>,
    pub end: ChainEnd,
}

impl<K: Ord + Clone> Chain<K> {
    pub fn new(entries: Vec<K>, end: ChainEnd) -> Result<Self> {
        if entries.is_empty() {
            return Err(CoxeterError::Parse("empty chain".into()));
        }
        Ok(Chain { entries, end })
    }

    /// Index of the last entry, in half-steps.
    pub fn depth(&self) -> usize {
        self.entries.len() - 1
    }

    pub fn spec(&self) -> ChainSpec {
        match self.end {
            ChainEnd::Ray => ChainSpec::Ray {
                available_hs: self.depth(),
            },
            ChainEnd::Interior => ChainSpec::Interior {
                d_hs: self.depth(),
            },
        }
    }
}

/// Shape of a chain without its entries; enough to compute annulus sizes and
/// Cesàro weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainSpec {
    Ray { available_hs: usize },
    Interior { d_hs: usize },
}

impl ChainSpec {
    pub fn is_interior(&self) -> bool {
        matches!(self, ChainSpec::Interior { .. })
    }
}

/// The annulus `Z(x, xi, n, k)` as a set of chain indices (half-steps).
///
/// For a direction at infinity this is the window `n-k <= d <= n+k` cut at
/// the chain origin. For an interior target at distance `d(x, xi)` the
/// endpoint always joins the set, and once the whole window lies beyond the
/// target (`k <= n - d`) the set collapses to the endpoint alone.
pub fn z_indices(spec: ChainSpec, n: usize, k: usize) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(CoxeterError::Parse("annulus width k must be positive".into()));
    }
    let lo_hs = 2 * n.saturating_sub(k);
    let hi_hs = 2 * (n + k);
    match spec {
        ChainSpec::Ray { available_hs } => {
            if available_hs < hi_hs {
                return Err(CoxeterError::ChainTooShallow {
                    need: hi_hs,
                    have: available_hs,
                });
            }
            Ok((lo_hs..=hi_hs).collect())
        }
        ChainSpec::Interior { d_hs } => {
            if 2 * k + d_hs <= 2 * n {
                return Ok(vec![d_hs]);
            }
            let mut out: Vec<usize> = (lo_hs..=hi_hs.min(d_hs)).collect();
            if out.last() != Some(&d_hs) {
                out.push(d_hs);
            }
            Ok(out)
        }
    }
}

/// `Z(x, xi, n, k)` with actual residues.
pub fn z_set<K: Ord + Clone>(chain: &Chain<K>, n: usize, k: usize) -> Result<Vec<K>> {
    let idx = z_indices(chain.spec(), n, k)?;
    idx.into_iter()
        .map(|i| {
            chain.entries.get(i).cloned().ok_or(CoxeterError::ChainTooShallow {
                need: i,
                have: chain.depth(),
            })
        })
        .collect()
}

/// Cesàro average of uniform annulus measures, as a dense array of weights
/// over chain indices: `lambda_n = (1/n) sum_k m_{Z(n,k)}`.
pub fn lambda_index_weights(spec: ChainSpec, n: usize) -> Result<Vec<Weight>> {
    if n == 0 {
        return Err(CoxeterError::Parse("lambda needs n >= 1".into()));
    }
    let max_index = match spec {
        ChainSpec::Ray { .. } => 2 * (n + n),
        ChainSpec::Interior { d_hs } => d_hs,
    };
    let mut weights = vec![Weight::zero(); max_index + 1];
    let one_over_n = BigRational::new(BigInt::one(), BigInt::from(n));
    for k in 1..=n {
        let z = z_indices(spec, n, k)?;
        let share = one_over_n.clone() * BigRational::new(BigInt::one(), BigInt::from(z.len()));
        for i in z {
            weights[i] += share.clone();
        }
    }
    Ok(weights)
}

/// `lambda_n(x, xi)` on a materialized chain.
pub fn tree_lambda<K: Ord + Clone>(chain: &Chain<K>, n: usize) -> Result<ResidueMeasure<K>> {
    let weights = lambda_index_weights(chain.spec(), n)?;
    ResidueMeasure::from_entries(
        weights
            .into_iter()
            .enumerate()
            .filter(|(_, w)| !w.is_zero())
            .map(|(i, w)| {
                (
                    chain
                        .entries
                        .get(i)
                        .cloned()
                        .expect("lambda support within chain"),
                    w,
                )
            }),
    )
}

/// Tensor product of per-tree chain measures, keyed by index tuples.
pub fn product_lambda<K: Ord + Clone>(
    chains: &[Chain<K>],
    n: usize,
) -> Result<ResidueMeasure<Vec<K>>> {
    if chains.is_empty() {
        return Err(CoxeterError::Parse("empty chain family".into()));
    }
    let factors: Vec<ResidueMeasure<K>> = chains
        .iter()
        .map(|c| tree_lambda(c, n))
        .collect::<Result<_>>()?;
    let mut acc: Vec<(Vec<K>, Weight)> = vec![(Vec::new(), Weight::one())];
    for f in &factors {
        let mut next = Vec::with_capacity(acc.len() * f.len());
        for (prefix, w) in &acc {
            for (k, fw) in f.iter() {
                let mut key = prefix.clone();
                key.push(k.clone());
                next.push((key, w.clone() * fw.clone()));
            }
        }
        acc = next;
    }
    ResidueMeasure::from_entries(acc)
}

/// Upper bound on the l1 distance of two Cesàro averages of tau-sandwiched
/// sets: `2 tau / n + 4 (n - tau)/n · [1 - (|Z_1|/|Z_{n+tau}|)^{2 tau/(n-tau)}]`.
/// Rounded upward so the returned float over-approximates the exact value.
pub fn sandwich_bound(n: usize, tau: usize, z1: usize, zntau: usize) -> Result<f64> {
    if n <= tau {
        return Err(CoxeterError::Parse(format!(
            "sandwich bound needs n > tau, got n={n} tau={tau}"
        )));
    }
    if z1 == 0 || zntau < z1 {
        return Err(CoxeterError::Parse(
            "sandwich bound needs 1 <= |Z_1| <= |Z_{n+tau}|".into(),
        ));
    }
    if tau == 0 {
        return Ok(0.0);
    }
    let nf = n as f64;
    let tf = tau as f64;
    let ratio = z1 as f64 / zntau as f64;
    let exponent = 2.0 * tf / (nf - tf);
    let bracket = 1.0 - ratio.powf(exponent);
    let value = 2.0 * tf / nf + 4.0 * (nf - tf) / nf * bracket.max(0.0);
    // Directed rounding: a few ulps of headroom over the powf error.
    Ok((value * (1.0 + 16.0 * f64::EPSILON)).next_up())
}

/// Annulus size for a chain shape, used when assembling bounds.
pub fn z_size(spec: ChainSpec, n: usize, k: usize) -> Result<usize> {
    Ok(z_indices(spec, n, k)?.len())
}

// ---------------------------------------------------------------------------
// The push operator S_Y.
// ---------------------------------------------------------------------------

/// A convex set of lattice points inside a product of chains, the target of
/// the push operator. Points are index vectors in half-steps.
#[derive(Debug, Clone)]
pub struct PushDomain {
    pub points: BTreeSet<Vec<usize>>,
    pub dims: usize,
}

impl PushDomain {
    pub fn new(points: impl IntoIterator<Item = Vec<usize>>) -> Result<PushDomain> {
        let points: BTreeSet<Vec<usize>> = points.into_iter().collect();
        let Some(first) = points.iter().next() else {
            return Err(CoxeterError::BadPushDomain("empty domain".into()));
        };
        let dims = first.len();
        if points.iter().any(|p| p.len() != dims) {
            return Err(CoxeterError::BadPushDomain("mixed dimensions".into()));
        }
        let d = PushDomain { points, dims };
        d.check_convex()?;
        Ok(d)
    }

    /// Fiberwise convexity: the first coordinate fills an interval and every
    /// fiber is itself convex. This is the shape the recursion consumes.
    fn check_convex(&self) -> Result<()> {
        if self.dims == 0 {
            return Ok(());
        }
        let lo = self.points.iter().map(|p| p[0]).min().unwrap();
        let hi = self.points.iter().map(|p| p[0]).max().unwrap();
        for k in lo..=hi {
            let fiber: Vec<Vec<usize>> = self
                .points
                .iter()
                .filter(|p| p[0] == k)
                .map(|p| p[1..].to_vec())
                .collect();
            if fiber.is_empty() {
                return Err(CoxeterError::BadPushDomain(format!(
                    "first coordinate skips {k}"
                )));
            }
            if self.dims > 1 {
                PushDomain::new(fiber)?;
            }
        }
        Ok(())
    }
}

/// `S_Y`: pushes a measure on the coordinate hull onto `Y` itself. The first
/// coordinate absorbs all mass below the low end at the low end and all mass
/// above the high end at the high end (closed interval reading), copies the
/// interior, then recurses on each fiber.
pub fn push_operator(
    domain: &PushDomain,
    f: &ResidueMeasure<Vec<usize>>,
) -> Result<ResidueMeasure<Vec<usize>>> {
    for key in f.support() {
        if key.len() != domain.dims {
            return Err(CoxeterError::BadPushDomain(
                "measure dimension differs from domain".into(),
            ));
        }
    }
    let entries = push_rec(
        &domain.points.iter().cloned().collect::<Vec<_>>(),
        &f.iter()
            .map(|(k, w)| (k.clone(), w.clone()))
            .collect::<Vec<_>>(),
    )?;
    ResidueMeasure::from_entries(entries)
}

fn push_rec(
    points: &[Vec<usize>],
    f: &[(Vec<usize>, Weight)],
) -> Result<Vec<(Vec<usize>, Weight)>> {
    if points.is_empty() {
        return Err(CoxeterError::BadPushDomain("empty fiber".into()));
    }
    let dims = points[0].len();
    if dims == 0 {
        let total: Weight = f.iter().map(|(_, w)| w.clone()).sum();
        return Ok(vec![(Vec::new(), total)]);
    }
    let lo = points.iter().map(|p| p[0]).min().unwrap();
    let hi = points.iter().map(|p| p[0]).max().unwrap();
    let mut out = Vec::new();
    for k in lo..=hi {
        // R on the first coordinate: clamp mass into [lo, hi] at column k.
        let slice: Vec<(Vec<usize>, Weight)> = f
            .iter()
            .filter(|(key, _)| {
                let j = key[0];
                if lo == hi {
                    true
                } else if k == lo {
                    j <= lo
                } else if k == hi {
                    j >= hi
                } else {
                    j == k
                }
            })
            .map(|(key, w)| (key[1..].to_vec(), w.clone()))
            .collect();
        let fiber: Vec<Vec<usize>> = points
            .iter()
            .filter(|p| p[0] == k)
            .map(|p| p[1..].to_vec())
            .collect();
        for (tail, w) in push_rec(&fiber, &slice)? {
            let mut key = Vec::with_capacity(dims);
            key.push(k);
            key.extend(tail);
            out.push((key, w));
        }
    }
    Ok(out)
}

/// Product-measure fast path: pushes a tensor of per-coordinate weight arrays
/// onto a staircase-shaped point set without materializing the tensor.
/// `payload` carries the caller's identity for every point.
pub fn push_product_factors<T: Clone>(
    points: &[(Vec<usize>, T)],
    factors: &[Vec<Weight>],
) -> Result<Vec<(T, Weight)>> {
    if points.is_empty() {
        return Err(CoxeterError::BadPushDomain("empty domain".into()));
    }
    let dims = factors.len();
    if points.iter().any(|(p, _)| p.len() != dims) {
        return Err(CoxeterError::BadPushDomain("mixed dimensions".into()));
    }
    let mut out = Vec::with_capacity(points.len());
    push_product_rec(points, factors, 0, Weight::one(), &mut out)?;
    Ok(out)
}

fn push_product_rec<T: Clone>(
    points: &[(Vec<usize>, T)],
    factors: &[Vec<Weight>],
    level: usize,
    scale: Weight,
    out: &mut Vec<(T, Weight)>,
) -> Result<()> {
    if scale.is_zero() {
        return Ok(());
    }
    if level == factors.len() {
        if points.len() != 1 {
            return Err(CoxeterError::BadPushDomain(format!(
                "fiber resolves to {} points, expected 1",
                points.len()
            )));
        }
        out.push((points[0].1.clone(), scale));
        return Ok(());
    }
    let coord = |p: &(Vec<usize>, T)| p.0[level];
    let lo = points.iter().map(coord).min().unwrap();
    let hi = points.iter().map(coord).max().unwrap();
    let weights = &factors[level];
    for k in lo..=hi {
        let fiber: Vec<(Vec<usize>, T)> = points
            .iter()
            .filter(|p| coord(p) == k)
            .cloned()
            .collect();
        if fiber.is_empty() {
            return Err(CoxeterError::BadPushDomain(format!(
                "coordinate {level} skips {k}"
            )));
        }
        let w: Weight = if lo == hi {
            weights.iter().cloned().sum()
        } else if k == lo {
            weights.iter().take(lo + 1).cloned().sum()
        } else if k == hi {
            weights.iter().skip(hi).cloned().sum()
        } else {
            weights.get(k).cloned().unwrap_or_else(Weight::zero)
        };
        push_product_rec(&fiber, factors, level + 1, scale.clone() * w, out)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// The sector engine: supports, positions and measures without ball
// enumeration. Works directly from wall classes and the direction oracle.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SectorGeometry {
    /// Sector chambers with their per-tree chain indices (half-steps).
    pub chambers: Vec<(Element, Vec<usize>)>,
    /// Sector residues with their per-tree chain indices.
    pub residues: Vec<(SphericalResidue, Vec<usize>)>,
    /// Shape of the chain in every tree.
    pub chain_specs: Vec<ChainSpec>,
}

impl SectorGeometry {
    pub fn residue_points(&self) -> Vec<(Vec<usize>, SphericalResidue)> {
        self.residues
            .iter()
            .map(|(r, p)| (p.clone(), r.clone()))
            .collect()
    }
}

/// Options shared by the measure computations.
#[derive(Debug, Clone, Copy)]
pub struct MuOptions {
    /// Length of the defining sequence used to certify directions and to
    /// march chains; must be deep enough for the requested n.
    pub horizon: usize,
    /// Extra half-steps of sector support beyond what lambda needs.
    pub depth_slack: usize,
}

impl Default for MuOptions {
    fn default() -> Self {
        MuOptions {
            horizon: 48,
            depth_slack: 4,
        }
    }
}

/// Explores the sector `Q(x, xi)` chamber by chamber, cut at `cut_hs`
/// half-steps per tree, assigning every chamber its chain index vector.
pub fn sector_geometry(
    sys: &CoxeterSystem,
    classifier: &WallClassifier,
    x: &SphericalResidue,
    xi: &BoundaryDirection,
    cut_hs: usize,
    opts: &MuOptions,
) -> Result<SectorGeometry> {
    let oracle = DirectionOracle::new(sys, xi, opts.horizon)?;
    let tree_count = classifier.class_count;
    let x_chambers = x.chambers(sys);
    // Walls crossing the base residue, by tree.
    let crossing = x.crossing_walls(sys);
    let mut straddled_class: Vec<Option<Element>> = vec![None; tree_count];
    for t in &crossing {
        let class = classifier.class_of(sys, t)?;
        if straddled_class[class].is_some() {
            return Err(CoxeterError::AmbiguousWallCoordinate(2));
        }
        straddled_class[class] = Some(t.clone());
    }
    // Participation cache: wall -> whether the side containing a given
    // chamber bounds the sector.
    let mut phi_cache: HashMap<Element, Option<bool>> = HashMap::new();
    let mut weak_x_cache: HashMap<Element, (bool, bool)> = HashMap::new();
    let mut side_in_phi = |wall: &Element, positive: bool| -> Result<Option<bool>> {
        // None encodes "wall straddled by the tail"; neither side decided.
        if let Some(v) = phi_cache.get(wall) {
            return Ok(v.map(|pos_in| pos_in == positive));
        }
        let status = oracle.status(wall);
        let v = match status {
            crate::bordification::RootStatus::In { .. } => Some(true),
            crate::bordification::RootStatus::Out { .. } => Some(false),
            crate::bordification::RootStatus::Straddled { .. } => None,
            crate::bordification::RootStatus::Undetermined => {
                return Err(CoxeterError::UndeterminedRoot {
                    wall: sys.format_word(wall),
                })
            }
        };
        phi_cache.insert(wall.clone(), v);
        Ok(v.map(|pos_in| pos_in == positive))
    };
    let mut weak_x = |wall: &Element, positive: bool, chambers: &[Element], sys: &CoxeterSystem| {
        let entry = weak_x_cache.entry(wall.clone()).or_insert_with(|| {
            let pos = Root::from_wall(wall.clone(), true);
            let neg = pos.opposite();
            (
                chambers.iter().any(|c| pos.contains_chamber(sys, c)),
                chambers.iter().any(|c| neg.contains_chamber(sys, c)),
            )
        });
        if positive {
            entry.0
        } else {
            entry.1
        }
    };
    // Seed chambers: members of x on the decided side of every straddled wall.
    let mut seeds: Vec<Element> = Vec::new();
    'chambers: for c in &x_chambers {
        for t in &crossing {
            let pos = Root::from_wall(t.clone(), true);
            let c_positive = pos.contains_chamber(sys, c);
            match side_in_phi(t, c_positive)? {
                Some(false) => continue 'chambers,
                _ => {}
            }
        }
        seeds.push(c.clone());
    }
    if seeds.is_empty() {
        return Err(CoxeterError::OutsideSector(x.describe(sys)));
    }
    let gate = seeds[0].clone();
    let seed_offset: Vec<usize> = (0..tree_count)
        .map(|i| usize::from(straddled_class[i].is_some()))
        .collect();
    // Chain shapes per tree from the tail of the defining sequence, before
    // exploring: interior targets push the exploration cut out to their own
    // depth, and ray verdicts are only trusted when the sequence itself has
    // marched past the cut.
    let tail = oracle.sequence();
    let margin = crate::bordification::STABILITY_MARGIN;
    let mut chain_specs: Vec<ChainSpec> = Vec::with_capacity(tree_count);
    let mut cuts: Vec<usize> = Vec::with_capacity(tree_count);
    for i in 0..tree_count {
        if xi.is_interior() {
            let target = oracle.tail_residue();
            let d = tree_coordinate_depth(sys, classifier, i, &gate, seed_offset[i], target)?;
            chain_specs.push(ChainSpec::Interior { d_hs: d });
            cuts.push(d + 1);
            continue;
        }
        let window = margin + 1;
        let from = tail.len().saturating_sub(window);
        let depths: Vec<usize> = tail[from..]
            .iter()
            .map(|r| tree_coordinate_depth(sys, classifier, i, &gate, seed_offset[i], r))
            .collect::<Result<_>>()?;
        let constant = depths.windows(2).all(|w| w[0] == w[1]);
        if constant {
            chain_specs.push(ChainSpec::Interior { d_hs: depths[0] });
            cuts.push(depths[0] + 1);
        } else {
            // Still marching: a ray. Wall verdicts inside the cut are only
            // sound once the sequence has passed it.
            let deepest = *depths.last().unwrap();
            if deepest < cut_hs {
                return Err(CoxeterError::ChainTooShallow {
                    need: cut_hs,
                    have: deepest,
                });
            }
            chain_specs.push(ChainSpec::Ray { available_hs: 0 });
            cuts.push(cut_hs);
        }
    }
    // BFS over sector chambers.
    let mut index: HashMap<Element, Vec<usize>> = HashMap::new();
    let mut queue: std::collections::VecDeque<Element> = Default::default();
    for s in &seeds {
        index.insert(s.clone(), seed_offset.clone());
        queue.push_back(s.clone());
    }
    while let Some(c) = queue.pop_front() {
        let positions = index[&c].clone();
        for s in 0..sys.rank() {
            let cs = sys.right_mul(&c, s)?;
            if index.contains_key(&cs) {
                continue;
            }
            let wall = sys.multiply(&sys.multiply(&c, &sys.generator(s)?), &sys.inverse(&c));
            let c_positive = Root::from_wall(wall.clone(), true).contains_chamber(sys, &c);
            // Leaving a root that carries both the direction and the base
            // leaves the sector.
            let carries_direction = side_in_phi(&wall, c_positive)?;
            if carries_direction == Some(true) && weak_x(&wall, c_positive, &x_chambers, sys) {
                continue;
            }
            let class = classifier.class_of(sys, &wall)?;
            let gate_positive = Root::from_wall(wall.clone(), true).contains_chamber(sys, &gate);
            let mut next_positions = positions.clone();
            if gate_positive == c_positive {
                // Crossing away from the base.
                next_positions[class] += 2;
            } else {
                if next_positions[class] < 2 {
                    return Err(CoxeterError::BadPushDomain(
                        "sector walk stepped behind its base".into(),
                    ));
                }
                next_positions[class] -= 2;
            }
            if next_positions[class] > cuts[class] {
                continue;
            }
            index.insert(cs.clone(), next_positions);
            queue.push_back(cs);
        }
    }
    let chamber_set: BTreeSet<Element> = index.keys().cloned().collect();
    // Rays record the depth the support actually reached.
    for (i, spec) in chain_specs.iter_mut().enumerate() {
        if let ChainSpec::Ray { available_hs } = spec {
            *available_hs = index
                .values()
                .map(|p| p[i])
                .max()
                .unwrap_or(seed_offset[i]);
        }
    }
    // Residues supported on the sector, with positions.
    let mut residues: BTreeMap<SphericalResidue, Vec<usize>> = BTreeMap::new();
    let type_sets = spherical_type_sets(sys)?;
    for c in &chamber_set {
        'sets: for types in &type_sets {
            let Ok(res) = SphericalResidue::new(sys, c, types) else {
                continue;
            };
            if residues.contains_key(&res) {
                continue;
            }
            let members = res.chambers(sys);
            let mut per_tree: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); tree_count];
            for m in &members {
                let Some(p) = index.get(m) else { continue 'sets };
                for i in 0..tree_count {
                    per_tree[i].insert(p[i]);
                }
            }
            let mut pos = Vec::with_capacity(tree_count);
            for set in per_tree {
                match set.len() {
                    1 => pos.push(*set.iter().next().unwrap()),
                    2 => {
                        let lo = *set.iter().next().unwrap();
                        let hi = *set.iter().last().unwrap();
                        if hi != lo + 2 {
                            return Err(CoxeterError::BadPushDomain(
                                "residue members straddle non-adjacent positions".into(),
                            ));
                        }
                        pos.push(lo + 1);
                    }
                    _ => {
                        return Err(CoxeterError::BadPushDomain(
                            "residue spreads over three positions in one tree".into(),
                        ))
                    }
                }
            }
            residues.insert(res, pos);
        }
    }
    // The base residue belongs to its own sector even when some member
    // chambers were cut (its coordinates are the chain origins).
    residues
        .entry(x.clone())
        .or_insert_with(|| vec![0; tree_count]);
    let chambers = index.into_iter().collect();
    Ok(SectorGeometry {
        chambers,
        residues: residues.into_iter().collect(),
        chain_specs,
    })
}

/// Chain index of the coordinate of `target` in tree `class`, measured from
/// the gate chamber: twice the number of class walls separating them, plus
/// one when the target rides a class wall.
fn tree_coordinate_depth(
    sys: &CoxeterSystem,
    classifier: &WallClassifier,
    class: usize,
    gate: &Element,
    seed_offset: usize,
    target: &SphericalResidue,
) -> Result<usize> {
    let target_gate = crate::geometry::project(sys, target, gate)?;
    let mut crossings = 0usize;
    for t in separating_walls(sys, gate, &target_gate) {
        if classifier.class_of(sys, &t)? == class {
            crossings += 1;
        }
    }
    let mut rides = false;
    for t in target.crossing_walls(sys) {
        if classifier.class_of(sys, &t)? == class {
            rides = true;
        }
    }
    Ok(seed_offset + 2 * crossings + usize::from(rides))
}

fn spherical_type_sets(sys: &CoxeterSystem) -> Result<Vec<Vec<usize>>> {
    let rank = sys.rank();
    let mut out = Vec::new();
    for mask in 0u32..(1 << rank) {
        let types: Vec<usize> = (0..rank).filter(|&i| mask >> i & 1 == 1).collect();
        if parabolic_elements(sys, &types.iter().map(|&i| i as u8).collect::<Vec<_>>()).is_ok() {
            out.push(types);
        }
    }
    Ok(out)
}

/// `lambda_n` on the sector of one (x, xi) pair: the product of per-tree
/// Cesàro measures pushed onto the sector by `S_Q`.
pub fn sector_lambda(
    sys: &CoxeterSystem,
    classifier: &WallClassifier,
    x: &SphericalResidue,
    xi: &BoundaryDirection,
    n: usize,
    opts: &MuOptions,
) -> Result<ResidueMeasure<SphericalResidue>> {
    let cut = 4 * n + opts.depth_slack;
    let geom = sector_geometry(sys, classifier, x, xi, cut, opts)?;
    let mut factors = Vec::with_capacity(geom.chain_specs.len());
    for spec in &geom.chain_specs {
        if let ChainSpec::Ray { available_hs } = spec {
            if *available_hs < 4 * n + 1 {
                return Err(CoxeterError::ChainTooShallow {
                    need: 4 * n + 1,
                    have: *available_hs,
                });
            }
        }
        factors.push(lambda_index_weights(*spec, n)?);
    }
    let points = geom.residue_points();
    let pushed = push_product_factors(&points, &factors)?;
    ResidueMeasure::from_entries(pushed)
}

/// The group-averaged measure: `mu_n(x, xi) = (1/[W:W0]) sum_w w·lambda_n(w^{-1}x, w^{-1}xi)`.
/// Exactly equivariant under the whole group by construction.
pub fn coxeter_mu(
    sys: &CoxeterSystem,
    classes: &WallClasses,
    x: &SphericalResidue,
    xi: &BoundaryDirection,
    n: usize,
    opts: &MuOptions,
) -> Result<ResidueMeasure<SphericalResidue>> {
    let classifier = WallClassifier::new(sys, classes, 0)?;
    let reps: Vec<Element> = match classes {
        WallClasses::Orbits(w0) => coset_representatives(sys, w0)?,
        WallClasses::FreeFactors => vec![Element::identity()],
    };
    let scale = BigRational::new(BigInt::one(), BigInt::from(reps.len()));
    let mut acc: BTreeMap<SphericalResidue, Weight> = BTreeMap::new();
    for w in &reps {
        let w_inv = sys.inverse(w);
        let xw = x.translate(sys, &w_inv);
        let xiw = xi.translate(sys, &w_inv);
        let lam = sector_lambda(sys, &classifier, &xw, &xiw, n, opts)?;
        let translated = lam.map_keys(|r| r.translate(sys, w));
        ResidueMeasure::accumulate(&mut acc, &translated, &scale);
    }
    let mu = ResidueMeasure::from_raw(acc);
    if !mu.total().is_one() {
        return Err(CoxeterError::Parse("coset average lost mass".into()));
    }
    // Support must land back inside Q(x, xi).
    let cut = 4 * n + opts.depth_slack;
    let geom = sector_geometry(sys, &classifier, x, xi, cut, opts)?;
    let support: BTreeSet<&SphericalResidue> = geom.residues.iter().map(|(r, _)| r).collect();
    for key in mu.support() {
        if !support.contains(key) {
            return Err(CoxeterError::OutsideSector(key.describe(sys)));
        }
    }
    Ok(mu)
}

/// Per-tree ceiled distances between the tree coordinates of two residues;
/// the tau vector of the sandwich argument. Derived from the class split of
/// the separating roots.
pub fn tree_tau(
    sys: &CoxeterSystem,
    classifier: &WallClassifier,
    x: &SphericalResidue,
    y: &SphericalResidue,
) -> Result<Vec<u64>> {
    let (phi_xy, phi_yx) = crate::geometry::separating_roots(
        sys,
        x,
        y,
        x.base().length().max(y.base().length()) + 8,
    )?;
    let mut half_steps = vec![0u64; classifier.class_count];
    for root in phi_xy.iter().chain(phi_yx.iter()) {
        let class = classifier.class_of(sys, root.reflection())?;
        half_steps[class] += 1;
    }
    Ok(half_steps
        .into_iter()
        .map(|hs| RootDistance::from_half_steps(hs).ceil())
        .collect())
}

/// Analytic bound for `|lambda_n(x, xi) - lambda_n(y, xi)|`, summed over the
/// trees: each tree contributes its sandwich bound at its own tau.
pub fn lambda_bound(
    chain_specs: &[ChainSpec],
    taus: &[u64],
    n: usize,
) -> Result<f64> {
    let mut total = 0.0;
    for (spec, &tau) in chain_specs.iter().zip(taus) {
        if tau == 0 {
            continue;
        }
        let tau = tau as usize;
        if n <= tau {
            total += 2.0;
            continue;
        }
        let z1 = match spec {
            // Saturated window; truncation of the support is an artifact.
            ChainSpec::Ray { .. } => z_size(ChainSpec::Ray { available_hs: 2 * (n + 1) }, n, 1)?,
            ChainSpec::Interior { .. } => z_size(*spec, n, 1)?,
        };
        let zntau = match spec {
            ChainSpec::Ray { .. } => 2 * (2 * n + tau) + 1,
            ChainSpec::Interior { .. } => z_size(*spec, n, n + tau)?,
        };
        total += sandwich_bound(n, tau, z1, zntau.max(z1))?;
    }
    Ok((total * (1.0 + 16.0 * f64::EPSILON)).next_up())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trees::TorsionFreeSubgroup;

    fn w(num: i64, den: i64) -> Weight {
        ratio(num, den)
    }

    #[test]
    fn z_indices_on_a_ray() {
        // Half-line from a vertex, n=2, k=1: distances 1..3 in half-steps
        // 2..6, five residues, the saturated 4k+1 case.
        let spec = ChainSpec::Ray { available_hs: 40 };
        let z = z_indices(spec, 2, 1).unwrap();
        assert_eq!(z, vec![2, 3, 4, 5, 6]);
        assert_eq!(z.len(), 4 * 1 + 1);
        // k = n: initial segment up to distance 2n.
        let z = z_indices(spec, 2, 2).unwrap();
        assert_eq!(z, (0..=8).collect::<Vec<_>>());
    }

    #[test]
    fn z_indices_interior_collapses_to_endpoint() {
        // d(x, xi) = 1, n = 5, k = 2 <= n - d: the annulus is past the
        // target, so Z is the endpoint alone.
        let spec = ChainSpec::Interior { d_hs: 2 };
        let z = z_indices(spec, 5, 2).unwrap();
        assert_eq!(z, vec![2]);
        // Larger k reaches back onto the segment; the endpoint stays in.
        let z = z_indices(spec, 5, 5).unwrap();
        assert_eq!(z, vec![0, 1, 2]);
    }

    #[test]
    fn z_set_cardinality_bound_on_rays() {
        let spec = ChainSpec::Ray { available_hs: 200 };
        for n in 1..=12 {
            for k in 1..=n {
                let z = z_indices(spec, n, k).unwrap();
                assert!(z.len() <= 4 * k + 1);
                if 2 * (n - k) > 0 {
                    assert_eq!(z.len(), 4 * k + 1, "full windows saturate");
                }
            }
        }
    }

    #[test]
    fn lambda_n1_is_uniform_on_first_annulus() {
        let spec = ChainSpec::Ray { available_hs: 30 };
        let weights = lambda_index_weights(spec, 1).unwrap();
        // Z(1,1) = indices 0..=4, uniform.
        for i in 0..=4 {
            assert_eq!(weights[i], w(1, 5));
        }
        assert!(weights[5..].iter().all(|x| x.is_zero()));
    }

    #[test]
    fn lambda_point_mass_when_target_is_base() {
        // Interior target at distance 0: every Z is the endpoint.
        let spec = ChainSpec::Interior { d_hs: 0 };
        let weights = lambda_index_weights(spec, 7).unwrap();
        assert_eq!(weights, vec![Weight::one()]);
    }

    #[test]
    fn lambda_n2_exact_weights_on_a_ray() {
        // n=2: (1/2) uniform on [2..6] + (1/2) uniform on [0..8].
        let spec = ChainSpec::Ray { available_hs: 30 };
        let weights = lambda_index_weights(spec, 2).unwrap();
        for i in 0..=8usize {
            let expect = if (2..=6).contains(&i) {
                w(1, 10) + w(1, 18)
            } else {
                w(1, 18)
            };
            assert_eq!(weights[i], expect, "index {i}");
        }
    }

    #[test]
    fn sandwich_bound_reference_values() {
        assert_eq!(sandwich_bound(10, 0, 5, 45).unwrap(), 0.0);
        let v = sandwich_bound(10, 1, 5, 45).unwrap();
        assert!((v - 1.591).abs() < 2e-3, "got {v}");
        // z1 = zntau: the bracket vanishes.
        let v = sandwich_bound(10, 3, 7, 7).unwrap();
        assert!((v - 0.6).abs() < 1e-12, "got {v}");
        assert!(v >= 0.6, "rounded upward");
        assert!(sandwich_bound(3, 3, 1, 5).is_err());
    }

    #[test]
    fn push_point_mass_to_interval() {
        // Point mass at 0 pushed onto {1,2,3}: lands at 1.
        let domain = PushDomain::new([vec![1], vec![2], vec![3]]).unwrap();
        let f = ResidueMeasure::point_mass(vec![0usize]);
        let out = push_operator(&domain, &f).unwrap();
        assert_eq!(out.weight(&vec![1]), Weight::one());
    }

    #[test]
    fn push_uniform_absorbs_at_both_ends() {
        // Uniform on {0..5} onto {1,2,3}: weights 2/6, 1/6, 3/6.
        let domain = PushDomain::new([vec![1], vec![2], vec![3]]).unwrap();
        let f = ResidueMeasure::uniform((0..=5usize).map(|i| vec![i])).unwrap();
        let out = push_operator(&domain, &f).unwrap();
        assert_eq!(out.weight(&vec![1]), w(2, 6));
        assert_eq!(out.weight(&vec![2]), w(1, 6));
        assert_eq!(out.weight(&vec![3]), w(3, 6));
    }

    #[test]
    fn push_identity_when_domain_is_hull() {
        let keys: Vec<Vec<usize>> = (0..4).flat_map(|a| (0..3).map(move |b| vec![a, b])).collect();
        let domain = PushDomain::new(keys.clone()).unwrap();
        let f = ResidueMeasure::uniform(keys).unwrap();
        let out = push_operator(&domain, &f).unwrap();
        assert_eq!(out, f);
    }

    #[test]
    fn push_restriction_property() {
        // S_Z equals S_Y restricted to measures supported on the hull of Z.
        let y: Vec<Vec<usize>> = (0..6).map(|a| vec![a]).collect();
        let z: Vec<Vec<usize>> = (2..5).map(|a| vec![a]).collect();
        let dy = PushDomain::new(y).unwrap();
        let dz = PushDomain::new(z).unwrap();
        let f = ResidueMeasure::from_entries([
            (vec![2usize], w(1, 2)),
            (vec![3], w(1, 4)),
            (vec![4], w(1, 4)),
        ])
        .unwrap();
        assert_eq!(push_operator(&dy, &f).unwrap(), push_operator(&dz, &f).unwrap());
    }

    #[test]
    fn push_two_dimensional_staircase() {
        // Staircase domain in two coordinates; mass below each step absorbs
        // at the step's own fiber ends.
        let y = PushDomain::new([vec![0, 0], vec![0, 1], vec![1, 1], vec![1, 2]]).unwrap();
        let f = ResidueMeasure::uniform([
            vec![0usize, 0],
            vec![0, 1],
            vec![0, 2],
            vec![1, 0],
            vec![1, 1],
            vec![1, 2],
        ])
        .unwrap();
        let out = push_operator(&y, &f).unwrap();
        assert_eq!(out.total(), Weight::one());
        // Column 0 keeps its 1/2 mass: fiber {0,1} absorbs z=2 at z=1.
        assert_eq!(out.weight(&vec![0, 0]), w(1, 6));
        assert_eq!(out.weight(&vec![0, 1]), w(2, 6));
        // Column 1: fiber {1,2} absorbs z=0 at z=1.
        assert_eq!(out.weight(&vec![1, 1]), w(2, 6));
        assert_eq!(out.weight(&vec![1, 2]), w(1, 6));
    }

    #[test]
    fn product_fast_path_matches_general_push() {
        let points: Vec<(Vec<usize>, Vec<usize>)> = [
            vec![0, 0],
            vec![0, 1],
            vec![1, 1],
            vec![1, 2],
            vec![2, 2],
        ]
        .into_iter()
        .map(|p| (p.clone(), p))
        .collect();
        let factors = vec![
            vec![w(1, 4), w(1, 2), w(1, 8), w(1, 8)],
            vec![w(1, 3), w(1, 3), w(1, 6), w(1, 6)],
        ];
        let fast = push_product_factors(&points, &factors).unwrap();
        let fast = ResidueMeasure::from_entries(fast).unwrap();
        // Materialize the tensor and push with the general operator.
        let mut tensor = Vec::new();
        for (a, wa) in factors[0].iter().enumerate() {
            for (b, wb) in factors[1].iter().enumerate() {
                if !(wa.clone() * wb.clone()).is_zero() {
                    tensor.push((vec![a, b], wa.clone() * wb.clone()));
                }
            }
        }
        let f = ResidueMeasure::from_entries(tensor).unwrap();
        let domain = PushDomain::new(points.iter().map(|(p, _)| p.clone())).unwrap();
        let slow = push_operator(&domain, &f).unwrap();
        assert_eq!(fast, slow);
    }

    fn line_setup() -> (
        CoxeterSystem,
        WallClasses,
        SphericalResidue,
        BoundaryDirection,
    ) {
        let sys = CoxeterSystem::infinite_dihedral();
        let x = SphericalResidue::chamber(Element::identity());
        let xi = BoundaryDirection::driven(&sys, x.clone(), sys.parse_word("s t").unwrap()).unwrap();
        (
            sys,
            WallClasses::Orbits(TorsionFreeSubgroup::RacgKernel),
            x,
            xi,
        )
    }

    #[test]
    fn line_sector_geometry_is_a_staircase() {
        let (sys, classes, x, xi) = line_setup();
        let classifier = WallClassifier::new(&sys, &classes, 0).unwrap();
        let opts = MuOptions {
            horizon: 40,
            depth_slack: 4,
        };
        let geom = sector_geometry(&sys, &classifier, &x, &xi, 12, &opts).unwrap();
        assert_eq!(geom.chain_specs.len(), 4);
        for spec in &geom.chain_specs {
            assert!(matches!(spec, ChainSpec::Ray { .. }));
        }
        // Chambers march forward: each chamber's positions sum to twice its
        // length along the ray.
        for (c, pos) in &geom.chambers {
            let total: usize = pos.iter().sum();
            assert_eq!(total, 2 * c.length(), "chamber {}", sys.format_word(c));
        }
        // Residues include the panels between consecutive ray chambers.
        assert!(geom.residues.len() > geom.chambers.len());
    }

    #[test]
    fn line_mu_is_supported_on_the_ray_and_sums_to_one() {
        let (sys, classes, x, xi) = line_setup();
        let opts = MuOptions {
            horizon: 64,
            depth_slack: 4,
        };
        let mu = coxeter_mu(&sys, &classes, &x, &xi, 2, &opts).unwrap();
        assert_eq!(mu.total(), Weight::one());
        for r in mu.support() {
            // Every supported residue lies on the forward ray: its base is a
            // forward word.
            for (k, i) in r.base().indices().enumerate() {
                assert_eq!(i, k % 2, "support residue {}", r.describe(&sys));
            }
        }
    }

    #[test]
    fn line_mu_is_exactly_equivariant() {
        let (sys, classes, x, xi) = line_setup();
        let opts = MuOptions {
            horizon: 64,
            depth_slack: 4,
        };
        let n = 3;
        let mu = coxeter_mu(&sys, &classes, &x, &xi, n, &opts).unwrap();
        for g_text in ["s", "t s", "s t s"] {
            let g = sys.parse_word(g_text).unwrap();
            let gx = x.translate(&sys, &g);
            let gxi = xi.translate(&sys, &g);
            let mu_g = coxeter_mu(&sys, &classes, &gx, &gxi, n, &opts).unwrap();
            let translated = mu.map_keys(|r| r.translate(&sys, &g));
            assert_eq!(mu_g, translated, "g = {g_text}");
        }
    }

    #[test]
    fn interior_direction_mu_reaches_the_target() {
        let (sys, classes, x, _) = line_setup();
        let y = SphericalResidue::chamber(sys.parse_word("s t s").unwrap());
        let xi = BoundaryDirection::Interior(y.clone());
        let opts = MuOptions::default();
        let mu = coxeter_mu(&sys, &classes, &x, &xi, 6, &opts).unwrap();
        assert!(mu.weight(&y) > Weight::zero());
        assert_eq!(mu.total(), Weight::one());
    }

    #[test]
    fn free_factor_classes_give_plain_tree_lambda() {
        // A single free factor: mu = lambda on the chain, no averaging.
        let sys = CoxeterSystem::free_product(3);
        let x = SphericalResidue::chamber(Element::identity());
        let xi = BoundaryDirection::driven(&sys, x.clone(), sys.parse_word("s1 s2").unwrap())
            .unwrap();
        let opts = MuOptions {
            horizon: 40,
            depth_slack: 4,
        };
        let n = 2;
        let mu = coxeter_mu(&sys, &WallClasses::FreeFactors, &x, &xi, n, &opts).unwrap();
        // Independent route: walk the ray of residues and apply the Cesàro
        // weights directly.
        let classifier = WallClassifier::new(&sys, &WallClasses::FreeFactors, 0).unwrap();
        let geom = sector_geometry(&sys, &classifier, &x, &xi, 4 * n + 4, &opts).unwrap();
        let weights = lambda_index_weights(ChainSpec::Ray { available_hs: 4 * n + 4 }, n).unwrap();
        let mut expect: BTreeMap<SphericalResidue, Weight> = BTreeMap::new();
        for (r, pos) in &geom.residues {
            let w = weights.get(pos[0]).cloned().unwrap_or_else(Weight::zero);
            if !w.is_zero() {
                expect.insert(r.clone(), w);
            }
        }
        assert_eq!(mu, ResidueMeasure::from_raw(expect));
    }

    #[test]
    fn tau_sandwich_inequality_measured_on_the_line() {
        // |lambda_n(x) - lambda_n(x')| <= bound, x' adjacent, across n.
        let (sys, classes, x, xi) = line_setup();
        let classifier = WallClassifier::new(&sys, &classes, 0).unwrap();
        let y = SphericalResidue::chamber(sys.parse_word("s").unwrap());
        let opts = MuOptions {
            horizon: 80,
            depth_slack: 4,
        };
        for n in [2usize, 4, 8] {
            let a = sector_lambda(&sys, &classifier, &x, &xi, n, &opts).unwrap();
            let b = sector_lambda(&sys, &classifier, &y, &xi, n, &opts).unwrap();
            let dist = l1_distance(&a, &b);
            let taus = tree_tau(&sys, &classifier, &x, &y).unwrap();
            let geom = sector_geometry(&sys, &classifier, &x, &xi, 4 * n + 4, &opts).unwrap();
            let bound = lambda_bound(&geom.chain_specs, &taus, n).unwrap();
            let bound_rational = BigRational::from_float(bound).unwrap();
            assert!(
                dist <= bound_rational,
                "n={n}: distance {dist} exceeds bound {bound}"
            );
        }
    }
}
