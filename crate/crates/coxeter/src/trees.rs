use crate::ball::{ball, is_reflection, reflections_in_ball};
use crate::bordification::{BoundaryDirection, DirectionOracle, RootStatus};
use crate::error::{CoxeterError, Result};
use crate::geometry::RootDistance;
use crate::residue::SphericalResidue;
use crate::root::Root;
use crate::system::CoxeterSystem;
use crate::word::Element;
use std::collections::{BTreeMap, BTreeSet, HashMap};

/// The finite-index torsion-free subgroup used to split walls into orbit
/// classes. For right-angled systems the kernel of the generator-parity map
/// is available automatically; anything else must be supplied and is only
/// validated, never proven torsion-free.
#[derive(Debug, Clone)]
pub enum TorsionFreeSubgroup {
    RacgKernel,
    UserSupplied {
        generators: Vec<Element>,
        /// Index of the subgroup in the whole group, as declared.
        index: usize,
        /// Extra word length allowed when searching for membership.
        search_slack: usize,
    },
}

impl TorsionFreeSubgroup {
    pub fn user_supplied(generators: Vec<Element>, index: usize) -> TorsionFreeSubgroup {
        TorsionFreeSubgroup::UserSupplied {
            generators,
            index,
            search_slack: 4,
        }
    }
}

/// Generator-parity vector of a word, valued in (Z/2)^rank.
pub fn parity_vector(sys: &CoxeterSystem, w: &Element) -> u64 {
    let mut v = 0u64;
    for i in w.indices() {
        v ^= 1 << i;
    }
    let _ = sys;
    v
}

/// Membership in the subgroup. For the right-angled kernel this is exact:
/// every generator must occur an even number of times. For a user-supplied
/// subgroup membership is a bounded search over products of the given
/// generators and may miss far-out elements; the wall-disjointness validator
/// is the real gate for those.
pub fn w0_membership(sys: &CoxeterSystem, w: &Element, w0: &TorsionFreeSubgroup) -> Result<bool> {
    match w0 {
        TorsionFreeSubgroup::RacgKernel => {
            if !sys.is_right_angled() {
                return Err(CoxeterError::NotRightAngled);
            }
            Ok(parity_vector(sys, w) == 0)
        }
        TorsionFreeSubgroup::UserSupplied {
            generators,
            search_slack,
            ..
        } => {
            let bound = w.length() + search_slack;
            let mut gens: Vec<Element> = generators.clone();
            for g in generators {
                gens.push(sys.inverse(g));
            }
            let mut seen: BTreeSet<Element> = BTreeSet::new();
            seen.insert(Element::identity());
            let mut frontier = vec![Element::identity()];
            while !frontier.is_empty() {
                let mut next = Vec::new();
                for u in &frontier {
                    if u == w {
                        return Ok(true);
                    }
                    for g in &gens {
                        let ug = sys.multiply(u, g);
                        if ug.length() <= bound && seen.insert(ug.clone()) {
                            next.push(ug);
                        }
                    }
                }
                frontier = next;
            }
            Ok(seen.contains(w))
        }
    }
}

/// Coset representatives of W / W0. For the right-angled kernel these are the
/// square-free increasing words, one per parity class, so the index is
/// 2^rank.
pub fn coset_representatives(
    sys: &CoxeterSystem,
    w0: &TorsionFreeSubgroup,
) -> Result<Vec<Element>> {
    match w0 {
        TorsionFreeSubgroup::RacgKernel => {
            if !sys.is_right_angled() {
                return Err(CoxeterError::NotRightAngled);
            }
            let rank = sys.rank();
            let mut out = Vec::with_capacity(1 << rank);
            for mask in 0u64..(1 << rank) {
                let word: Vec<usize> = (0..rank).filter(|&i| mask >> i & 1 == 1).collect();
                out.push(sys.reduce_word(&word)?);
            }
            Ok(out)
        }
        TorsionFreeSubgroup::UserSupplied { index, .. } => {
            // Greedy transversal over a ball large enough to see every coset.
            let mut reps: Vec<Element> = Vec::new();
            for radius in 0.. {
                reps.clear();
                for w in ball(sys, radius)? {
                    let mut fresh = true;
                    for r in &reps {
                        let diff = sys.multiply(&sys.inverse(r), &w);
                        if w0_membership(sys, &diff, w0)? {
                            fresh = false;
                            break;
                        }
                    }
                    if fresh {
                        reps.push(w);
                    }
                }
                if reps.len() == *index {
                    return Ok(reps);
                }
                if radius > 12 {
                    break;
                }
            }
            Err(CoxeterError::OrbitNotClosed { radius: 12 })
        }
    }
}

/// Decomposition of a reflection as `u s u^{-1}` with a generator in the
/// middle, read off a prefix palindrome of the normal form.
pub fn reflection_decomposition(sys: &CoxeterSystem, t: &Element) -> Result<(Element, usize)> {
    if !is_reflection(sys, t) {
        return Err(CoxeterError::NotAReflection(t.indices().collect()));
    }
    let word = t.word();
    for j in 0..word.len() {
        let mut pal = Vec::with_capacity(2 * j + 1);
        pal.extend_from_slice(&word[..=j]);
        pal.extend(word[..j].iter().rev());
        if sys.words_equal(&pal, word) {
            let u = sys.reduce_indices(&word[..j]);
            return Ok((u, word[j] as usize));
        }
    }
    unreachable!("reflections match one of their prefix palindromes")
}

/// Generators commuting with `s`, including `s` itself. The centralizer of a
/// generator in a right-angled system is the parabolic on this star.
fn star_mask(sys: &CoxeterSystem, s: usize) -> u64 {
    let mut mask = 1u64 << s;
    for j in 0..sys.rank() {
        if j != s && sys.commutes(s, j) {
            mask |= 1 << j;
        }
    }
    mask
}

/// Orbit label of a wall under conjugation by the parity kernel: the
/// generator class together with the conjugator's parity vector modulo the
/// parities of the centralizer (the star coordinates). Exact, no enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WallLabel {
    pub generator: usize,
    pub masked_parity: u64,
}

pub fn racg_wall_label(sys: &CoxeterSystem, t: &Element) -> Result<WallLabel> {
    if !sys.is_right_angled() {
        return Err(CoxeterError::NotRightAngled);
    }
    let (u, s) = reflection_decomposition(sys, t)?;
    let masked = parity_vector(sys, &u) & !star_mask(sys, s);
    Ok(WallLabel {
        generator: s,
        masked_parity: masked,
    })
}

/// How walls are grouped into the classes that define one tree each.
#[derive(Debug, Clone)]
pub enum WallClasses {
    /// Conjugation orbits of the subgroup.
    Orbits(TorsionFreeSubgroup),
    /// One class per free factor of a product of free Coxeter systems; the
    /// tautological choice for products of trees.
    FreeFactors,
}

/// Stateless classifier mapping any wall to its tree index. Built once per
/// system; valid for walls of any length.
#[derive(Debug, Clone)]
pub struct WallClassifier {
    classes: WallClassesIndex,
    pub class_count: usize,
}

#[derive(Debug, Clone)]
enum WallClassesIndex {
    Racg {
        labels: BTreeMap<WallLabel, usize>,
    },
    Factors {
        factor_of_generator: Vec<usize>,
    },
    Enumerated {
        orbit_of_wall: BTreeMap<Element, usize>,
    },
}

impl WallClassifier {
    pub fn new(sys: &CoxeterSystem, classes: &WallClasses, radius: usize) -> Result<WallClassifier> {
        match classes {
            WallClasses::Orbits(TorsionFreeSubgroup::RacgKernel) => {
                if !sys.is_right_angled() {
                    return Err(CoxeterError::NotRightAngled);
                }
                let mut labels = BTreeMap::new();
                for s in 0..sys.rank() {
                    let free = !star_mask(sys, s) & ((1u64 << sys.rank()) - 1);
                    // Enumerate all parity classes on the free coordinates.
                    let coords: Vec<usize> =
                        (0..sys.rank()).filter(|&i| free >> i & 1 == 1).collect();
                    for mask in 0u64..(1 << coords.len()) {
                        let mut parity = 0u64;
                        for (k, &c) in coords.iter().enumerate() {
                            if mask >> k & 1 == 1 {
                                parity |= 1 << c;
                            }
                        }
                        let label = WallLabel {
                            generator: s,
                            masked_parity: parity,
                        };
                        let next = labels.len();
                        labels.entry(label).or_insert(next);
                    }
                }
                let class_count = labels.len();
                Ok(WallClassifier {
                    classes: WallClassesIndex::Racg { labels },
                    class_count,
                })
            }
            WallClasses::Orbits(user @ TorsionFreeSubgroup::UserSupplied { .. }) => {
                let orbit_of_wall = enumerate_orbits(sys, user, radius)?;
                let class_count = orbit_of_wall.values().copied().max().map_or(0, |m| m + 1);
                Ok(WallClassifier {
                    classes: WallClassesIndex::Enumerated { orbit_of_wall },
                    class_count,
                })
            }
            WallClasses::FreeFactors => {
                // Factors = connected components of the non-commuting graph.
                // Valid as tree classes only when every factor is a free
                // product (all internal orders infinite), which keeps the
                // factor's walls pairwise disjoint.
                let rank = sys.rank();
                let mut comp: Vec<usize> = (0..rank).collect();
                loop {
                    let mut changed = false;
                    for i in 0..rank {
                        for j in 0..rank {
                            if i != j
                                && !sys.commutes(i, j)
                                && comp[i.min(j)] < comp[i.max(j)]
                            {
                                let target = comp[i.min(j)];
                                let from = comp[i.max(j)];
                                for c in comp.iter_mut() {
                                    if *c == from {
                                        *c = target;
                                        changed = true;
                                    }
                                }
                            }
                        }
                    }
                    if !changed {
                        break;
                    }
                }
                for i in 0..rank {
                    for j in 0..rank {
                        if i != j && comp[i] == comp[j] && sys.order(i, j).is_finite() {
                            return Err(CoxeterError::InvalidMatrix(
                                "free-factor classes need free factors (infinite internal orders)"
                                    .into(),
                            ));
                        }
                    }
                }
                let mut relabel: BTreeMap<usize, usize> = BTreeMap::new();
                for c in &comp {
                    let next = relabel.len();
                    relabel.entry(*c).or_insert(next);
                }
                let factor_of_generator: Vec<usize> =
                    comp.iter().map(|c| relabel[c]).collect();
                let class_count = relabel.len();
                Ok(WallClassifier {
                    classes: WallClassesIndex::Factors {
                        factor_of_generator,
                    },
                    class_count,
                })
            }
        }
    }

    pub fn class_of(&self, sys: &CoxeterSystem, wall: &Element) -> Result<usize> {
        match &self.classes {
            WallClassesIndex::Racg { labels } => {
                let label = racg_wall_label(sys, wall)?;
                labels
                    .get(&label)
                    .copied()
                    .ok_or(CoxeterError::OrbitNotClosed { radius: 0 })
            }
            WallClassesIndex::Factors {
                factor_of_generator,
            } => {
                let (_, s) = reflection_decomposition(sys, wall)?;
                Ok(factor_of_generator[s])
            }
            WallClassesIndex::Enumerated { orbit_of_wall } => orbit_of_wall
                .get(wall)
                .copied()
                .ok_or(CoxeterError::OrbitNotClosed { radius: 0 }),
        }
    }
}

/// Conjugation-closure orbit enumeration for user-supplied subgroups: walls
/// of the ball are merged under conjugation by short subgroup elements.
/// Flagged as unclosed if any conjugate of a ball wall cannot be classified.
fn enumerate_orbits(
    sys: &CoxeterSystem,
    w0: &TorsionFreeSubgroup,
    radius: usize,
) -> Result<BTreeMap<Element, usize>> {
    let walls = reflections_in_ball(sys, 2 * radius + 1)?;
    let conj_bound = radius + 4;
    let mut conjugators = Vec::new();
    for g in ball(sys, conj_bound)? {
        if !g.is_identity() && w0_membership(sys, &g, w0)? {
            conjugators.push(g);
        }
    }
    // Union-find over the wall list.
    let index: BTreeMap<Element, usize> = walls
        .iter()
        .cloned()
        .enumerate()
        .map(|(i, w)| (w, i))
        .collect();
    let mut parent: Vec<usize> = (0..walls.len()).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let r = find(parent, parent[i]);
            parent[i] = r;
        }
        parent[i]
    }
    for (i, t) in walls.iter().enumerate() {
        for g in &conjugators {
            let conj = sys.multiply(&sys.multiply(g, t), &sys.inverse(g));
            if let Some(&j) = index.get(&conj) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a] = b;
                }
            }
        }
    }
    let mut label: BTreeMap<usize, usize> = BTreeMap::new();
    let mut out = BTreeMap::new();
    for (i, t) in walls.iter().enumerate() {
        let root = find(&mut parent, i);
        let next = label.len();
        let class = *label.entry(root).or_insert(next);
        out.insert(t.clone(), class);
    }
    Ok(out)
}

/// A coordinate of a residue inside one wall-class tree: a component of the
/// ball after deleting that class's walls, or one of those walls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TreeResidue {
    Vertex(usize),
    Edge(usize),
}

/// One wall-class tree over the ball: vertices are components of the chamber
/// graph with the class's panels deleted, edges are the class's walls.
#[derive(Debug, Clone)]
pub struct Tree {
    pub vertex_count: usize,
    pub edges: Vec<TreeEdge>,
    /// Component id per ball chamber (indices into the ball).
    pub component: Vec<usize>,
    /// Components touching the rim of the ball; their extent is uncertain.
    pub rim: Vec<bool>,
    pub wall_to_edge: BTreeMap<Element, usize>,
    adjacency: Vec<Vec<(usize, usize)>>,
}

#[derive(Debug, Clone)]
pub struct TreeEdge {
    pub wall: Element,
    pub a: usize,
    pub b: usize,
    /// A panel chamber on side `a`, kept for orienting roots.
    pub rep_a: Element,
}

impl Tree {
    /// Graph distance in half-steps between two coordinates: vertices sit at
    /// even distance, a vertex and an incident edge at one half-step.
    pub fn root_distance(&self, x: TreeResidue, y: TreeResidue) -> Result<RootDistance> {
        // BFS on the barycentric graph (vertices + edge midpoints).
        let total = self.vertex_count + self.edges.len();
        let code = |r: TreeResidue| match r {
            TreeResidue::Vertex(v) => v,
            TreeResidue::Edge(e) => self.vertex_count + e,
        };
        let start = code(x);
        let goal = code(y);
        let mut dist = vec![usize::MAX; total];
        dist[start] = 0;
        let mut queue = std::collections::VecDeque::new();
        queue.push_back(start);
        while let Some(n) = queue.pop_front() {
            if n == goal {
                return Ok(RootDistance::from_half_steps(dist[n] as u64));
            }
            let neighbors: Vec<usize> = if n < self.vertex_count {
                self.adjacency[n]
                    .iter()
                    .map(|&(e, _)| self.vertex_count + e)
                    .collect()
            } else {
                let e = &self.edges[n - self.vertex_count];
                vec![e.a, e.b]
            };
            for m in neighbors {
                if dist[m] == usize::MAX {
                    dist[m] = dist[n] + 1;
                    queue.push_back(m);
                }
            }
        }
        Err(CoxeterError::BallTooSmall {
            radius: 0,
            reason: "tree coordinates in different components".into(),
        })
    }

    pub fn neighbors(&self, v: usize) -> &[(usize, usize)] {
        &self.adjacency[v]
    }
}

/// A boundary coordinate in one tree: either a residue of the tree or an end
/// recorded as the chosen side of every decided edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TreeDirection {
    Interior(TreeResidue),
    End { toward: BTreeMap<usize, usize> },
}

/// The wall-class trees of a ball, with the maps into them.
#[derive(Debug)]
pub struct TreeSystem {
    pub sys: CoxeterSystem,
    pub radius: usize,
    pub classifier: WallClassifier,
    pub ball: Vec<Element>,
    pub ball_index: HashMap<Element, usize>,
    pub trees: Vec<Tree>,
    /// Wall of every ball edge, keyed by (chamber index, generator).
    pub edge_walls: BTreeMap<(usize, usize), Element>,
}

/// Orbit classes only: the partition of the ball's walls.
pub fn wall_orbits(
    sys: &CoxeterSystem,
    w0: &TorsionFreeSubgroup,
    radius: usize,
) -> Result<Vec<Vec<Element>>> {
    let classifier = WallClassifier::new(sys, &WallClasses::Orbits(w0.clone()), radius)?;
    let walls = reflections_in_ball(sys, radius)?;
    let mut seen: BTreeMap<usize, Vec<Element>> = BTreeMap::new();
    for t in walls {
        let class = classifier.class_of(sys, &t)?;
        seen.entry(class).or_default().push(t);
    }
    Ok(seen.into_values().collect())
}

/// Builds the full tree system on a ball using subgroup orbits.
pub fn build_trees(
    sys: &CoxeterSystem,
    w0: &TorsionFreeSubgroup,
    radius: usize,
) -> Result<TreeSystem> {
    build_tree_system(sys, &WallClasses::Orbits(w0.clone()), radius)
}

/// Builds the tautological factor trees of a product of free Coxeter systems.
pub fn build_factor_trees(sys: &CoxeterSystem, radius: usize) -> Result<TreeSystem> {
    build_tree_system(sys, &WallClasses::FreeFactors, radius)
}

pub fn build_tree_system(
    sys: &CoxeterSystem,
    classes: &WallClasses,
    radius: usize,
) -> Result<TreeSystem> {
    let classifier = WallClassifier::new(sys, classes, radius)?;
    let chambers = ball(sys, radius)?;
    let ball_index: HashMap<Element, usize> = chambers
        .iter()
        .cloned()
        .enumerate()
        .map(|(i, c)| (c, i))
        .collect();
    // Every edge of the ball, its wall, and the wall's class.
    let mut edge_walls: BTreeMap<(usize, usize), Element> = BTreeMap::new();
    let mut edges: Vec<(usize, usize, Element, usize)> = Vec::new();
    for (ci, c) in chambers.iter().enumerate() {
        for s in 0..sys.rank() {
            let cs = sys.right_mul(c, s)?;
            if let Some(&di) = ball_index.get(&cs) {
                if ci < di {
                    let wall =
                        sys.multiply(&sys.multiply(c, &sys.generator(s)?), &sys.inverse(c));
                    let class = classifier.class_of(sys, &wall)?;
                    edge_walls.insert((ci, s), wall.clone());
                    edge_walls.insert((di, s), wall.clone());
                    edges.push((ci, di, wall, class));
                }
            }
        }
    }
    let mut trees = Vec::with_capacity(classifier.class_count);
    for class in 0..classifier.class_count {
        trees.push(build_one_tree(
            sys, &chambers, &edges, class, radius,
        )?);
    }
    Ok(TreeSystem {
        sys: sys.clone(),
        radius,
        classifier,
        ball: chambers,
        ball_index,
        trees,
        edge_walls,
    })
}

fn build_one_tree(
    sys: &CoxeterSystem,
    chambers: &[Element],
    edges: &[(usize, usize, Element, usize)],
    class: usize,
    radius: usize,
) -> Result<Tree> {
    // Union-find over chambers, skipping the class's own edges.
    let mut parent: Vec<usize> = (0..chambers.len()).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let r = find(parent, parent[i]);
            parent[i] = r;
        }
        parent[i]
    }
    for (a, b, _, c) in edges {
        if *c != class {
            let (ra, rb) = (find(&mut parent, *a), find(&mut parent, *b));
            if ra != rb {
                parent[ra] = rb;
            }
        }
    }
    let mut component_id: BTreeMap<usize, usize> = BTreeMap::new();
    let mut component = vec![0usize; chambers.len()];
    for i in 0..chambers.len() {
        let root = find(&mut parent, i);
        let next = component_id.len();
        component[i] = *component_id.entry(root).or_insert(next);
    }
    let vertex_count = component_id.len();
    let mut rim = vec![false; vertex_count];
    for (i, c) in chambers.iter().enumerate() {
        if c.length() == radius {
            rim[component[i]] = true;
        }
    }
    // One tree edge per wall of this class; all panels of a wall must join
    // the same component pair.
    let mut wall_to_edge: BTreeMap<Element, usize> = BTreeMap::new();
    let mut tree_edges: Vec<TreeEdge> = Vec::new();
    for (a, b, wall, c) in edges {
        if *c != class {
            continue;
        }
        let (va, vb) = (component[*a], component[*b]);
        if va == vb {
            return Err(CoxeterError::TreeCycle);
        }
        match wall_to_edge.get(wall) {
            None => {
                wall_to_edge.insert(wall.clone(), tree_edges.len());
                tree_edges.push(TreeEdge {
                    wall: wall.clone(),
                    a: va,
                    b: vb,
                    rep_a: chambers[*a].clone(),
                });
            }
            Some(&e) => {
                let edge = &tree_edges[e];
                let joins = (edge.a == va && edge.b == vb) || (edge.a == vb && edge.b == va);
                if !joins {
                    return Err(CoxeterError::BallTooSmall {
                        radius,
                        reason: format!(
                            "wall {} has panels joining different component pairs",
                            sys.format_word(wall)
                        ),
                    });
                }
            }
        }
    }
    // Tree check: connected and acyclic.
    if vertex_count != tree_edges.len() + 1 {
        return Err(CoxeterError::TreeCycle);
    }
    let mut adjacency = vec![Vec::new(); vertex_count];
    for (e, edge) in tree_edges.iter().enumerate() {
        adjacency[edge.a].push((e, edge.b));
        adjacency[edge.b].push((e, edge.a));
    }
    let mut seen = vec![false; vertex_count];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut visited = 1;
    while let Some(v) = stack.pop() {
        for &(_, w) in &adjacency[v] {
            if !seen[w] {
                seen[w] = true;
                visited += 1;
                stack.push(w);
            }
        }
    }
    if visited != vertex_count {
        return Err(CoxeterError::TreeCycle);
    }
    Ok(Tree {
        vertex_count,
        edges: tree_edges,
        component,
        rim,
        wall_to_edge,
        adjacency,
    })
}

impl TreeSystem {
    pub fn tree_count(&self) -> usize {
        self.trees.len()
    }

    fn chamber_index(&self, c: &Element) -> Result<usize> {
        self.ball_index.get(c).copied().ok_or(CoxeterError::BallTooSmall {
            radius: self.radius,
            reason: format!("chamber {} outside ball", self.sys.format_word(c)),
        })
    }

    /// The tree coordinates of a residue: the component holding it, or the
    /// unique class wall it straddles.
    pub fn psi(&self, r: &SphericalResidue) -> Result<Vec<TreeResidue>> {
        let chambers = r.chambers(&self.sys);
        let indices: Vec<usize> = chambers
            .iter()
            .map(|c| self.chamber_index(c))
            .collect::<Result<_>>()?;
        let crossing = r.crossing_walls(&self.sys);
        let mut crossing_by_class: Vec<Vec<&Element>> = vec![Vec::new(); self.trees.len()];
        for t in &crossing {
            let class = self.classifier.class_of(&self.sys, t)?;
            crossing_by_class[class].push(t);
        }
        let mut out = Vec::with_capacity(self.trees.len());
        for (i, tree) in self.trees.iter().enumerate() {
            match crossing_by_class[i].len() {
                0 => {
                    let comp = tree.component[indices[0]];
                    for &ci in &indices {
                        if tree.component[ci] != comp {
                            return Err(CoxeterError::AmbiguousWallCoordinate(0));
                        }
                    }
                    out.push(TreeResidue::Vertex(comp));
                }
                1 => {
                    let wall = crossing_by_class[i][0];
                    let e = tree.wall_to_edge.get(wall).ok_or(CoxeterError::BallTooSmall {
                        radius: self.radius,
                        reason: "straddled wall has no panel in the ball".into(),
                    })?;
                    out.push(TreeResidue::Edge(*e));
                }
                n => return Err(CoxeterError::AmbiguousWallCoordinate(n)),
            }
        }
        Ok(out)
    }

    /// The image of a root: the index of its wall's tree and the half-tree on
    /// the same side.
    pub fn psi_root(&self, alpha: &Root) -> Result<(usize, usize, usize)> {
        let wall = alpha.reflection();
        let class = self.classifier.class_of(&self.sys, wall)?;
        let tree = &self.trees[class];
        let e = *tree
            .wall_to_edge
            .get(wall)
            .ok_or(CoxeterError::BallTooSmall {
                radius: self.radius,
                reason: "root wall has no panel in the ball".into(),
            })?;
        let edge = &tree.edges[e];
        let rep_index = self.chamber_index(&edge.rep_a)?;
        let toward = if alpha.contains_chamber(&self.sys, &edge.rep_a) {
            tree.component[rep_index]
        } else {
            let other = if tree.component[rep_index] == edge.a {
                edge.b
            } else {
                edge.a
            };
            other
        };
        Ok((class, e, toward))
    }

    /// Inverse of `psi_root`.
    pub fn root_from_tree(&self, class: usize, edge: usize, toward: usize) -> Result<Root> {
        let tree = &self.trees[class];
        let e = &tree.edges[edge];
        let rep_index = self.chamber_index(&e.rep_a)?;
        let rep_side = tree.component[rep_index];
        let rep_in_root = rep_side == toward;
        // Choose the sign so membership of the representative matches.
        let positive = Root::from_wall(e.wall.clone(), true);
        let rep_in_positive = positive.contains_chamber(&self.sys, &e.rep_a);
        Ok(Root::from_wall(e.wall.clone(), rep_in_root == rep_in_positive))
    }

    /// Vertices of a half-tree: everything on the `toward` side of an edge.
    pub fn half_tree_vertices(&self, class: usize, edge: usize, toward: usize) -> BTreeSet<usize> {
        let tree = &self.trees[class];
        let e = &tree.edges[edge];
        let blocked = edge;
        let start = toward;
        debug_assert!(start == e.a || start == e.b);
        let mut seen = BTreeSet::new();
        seen.insert(start);
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            for &(f, w) in tree.neighbors(v) {
                if f != blocked && !seen.contains(&w) {
                    seen.insert(w);
                    stack.push(w);
                }
            }
        }
        seen
    }

    /// The boundary coordinates of a direction: per tree, either a residue or
    /// an end described by the chosen side of every decided edge.
    pub fn phi_direction(
        &self,
        xi: &BoundaryDirection,
        horizon: usize,
    ) -> Result<Vec<TreeDirection>> {
        if let BoundaryDirection::Interior(r) = xi {
            return Ok(self.psi(r)?.into_iter().map(TreeDirection::Interior).collect());
        }
        let oracle = DirectionOracle::new(&self.sys, xi, horizon)?;
        let mut out = Vec::with_capacity(self.trees.len());
        for (i, tree) in self.trees.iter().enumerate() {
            let mut toward: BTreeMap<usize, usize> = BTreeMap::new();
            let mut straddled: Option<usize> = None;
            let mut undetermined = Vec::new();
            for (wall, &e) in &tree.wall_to_edge {
                match oracle.status(wall) {
                    RootStatus::In { .. } | RootStatus::Out { .. } => {
                        let root_in = match oracle.status(wall) {
                            RootStatus::In { .. } => Root::from_wall(wall.clone(), true),
                            _ => Root::from_wall(wall.clone(), false),
                        };
                        let (_, _, side) = self.psi_root(&root_in)?;
                        toward.insert(e, side);
                    }
                    RootStatus::Straddled { .. } => straddled = Some(e),
                    RootStatus::Undetermined => undetermined.push(wall.clone()),
                }
            }
            if let Some(wall) = undetermined.first() {
                return Err(CoxeterError::UndeterminedRoot {
                    wall: self.sys.format_word(wall),
                });
            }
            if let Some(e) = straddled {
                out.push(TreeDirection::Interior(TreeResidue::Edge(e)));
                continue;
            }
            // Intersect the chosen half-trees; a nonempty core is an interior
            // vertex, an empty one is an end.
            let mut alive: Option<BTreeSet<usize>> = None;
            for (&e, &side) in &toward {
                let half = self.half_tree_vertices(i, e, side);
                alive = Some(match alive {
                    None => half,
                    Some(a) => a.intersection(&half).cloned().collect(),
                });
            }
            match alive {
                None => {
                    // No decided edge in this tree: the coordinate never
                    // moves, so it is the component of the tail residue.
                    let coords = self.psi(oracle.tail_residue())?;
                    out.push(TreeDirection::Interior(coords[i]));
                }
                Some(a) if a.is_empty() => out.push(TreeDirection::End { toward }),
                Some(a) if a.len() == 1 => out.push(TreeDirection::Interior(TreeResidue::Vertex(
                    *a.iter().next().unwrap(),
                ))),
                Some(a) => {
                    // Larger core: direction not pinned by walls of the ball;
                    // fall back to the tail coordinate if it lies in the core.
                    let coords = self.psi(oracle.tail_residue())?;
                    match coords[i] {
                        TreeResidue::Vertex(v) if a.contains(&v) => {
                            out.push(TreeDirection::Interior(TreeResidue::Vertex(v)))
                        }
                        other => out.push(TreeDirection::Interior(other)),
                    }
                }
            }
        }
        Ok(out)
    }

    /// The chain from a tree residue toward a direction, listed residue by
    /// residue in half-steps: vertex, edge, vertex, … Stops at the interior
    /// target or at the rim of the ball.
    pub fn tree_chain(
        &self,
        class: usize,
        from: TreeResidue,
        dir: &TreeDirection,
        max_half_steps: usize,
    ) -> Result<Vec<TreeResidue>> {
        let tree = &self.trees[class];
        let mut chain = vec![from];
        loop {
            if chain.len() > max_half_steps {
                break;
            }
            let current = *chain.last().unwrap();
            let done = match dir {
                TreeDirection::Interior(target) => current == *target,
                TreeDirection::End { .. } => false,
            };
            if done {
                break;
            }
            let next = match current {
                TreeResidue::Vertex(v) => {
                    let candidates: Vec<usize> = tree
                        .neighbors(v)
                        .iter()
                        .filter(|&&(e, w)| match dir {
                            TreeDirection::Interior(target) => {
                                let half = self.half_tree_vertices(class, e, w);
                                match target {
                                    TreeResidue::Vertex(u) => half.contains(u),
                                    TreeResidue::Edge(f) => {
                                        let te = &tree.edges[*f];
                                        *f == e || half.contains(&te.a) && half.contains(&te.b)
                                    }
                                }
                            }
                            TreeDirection::End { toward } => {
                                toward.get(&e).map_or(false, |&side| side == w)
                            }
                        })
                        .map(|&(e, _)| e)
                        .collect();
                    match candidates.len() {
                        0 => break,
                        1 => TreeResidue::Edge(candidates[0]),
                        _ => return Err(CoxeterError::AmbiguousWallCoordinate(candidates.len())),
                    }
                }
                TreeResidue::Edge(e) => {
                    let edge = &tree.edges[e];
                    let pick = match dir {
                        TreeDirection::Interior(target) => {
                            let ha = self.half_tree_vertices(class, e, edge.a);
                            match target {
                                TreeResidue::Vertex(u) => {
                                    if ha.contains(u) {
                                        edge.a
                                    } else {
                                        edge.b
                                    }
                                }
                                TreeResidue::Edge(f) => {
                                    let te = &tree.edges[*f];
                                    if ha.contains(&te.a) && ha.contains(&te.b) {
                                        edge.a
                                    } else {
                                        edge.b
                                    }
                                }
                            }
                        }
                        TreeDirection::End { toward } => match toward.get(&e) {
                            Some(&side) => side,
                            None => break,
                        },
                    };
                    // Never step back onto the previous vertex.
                    if chain.len() >= 2 && chain[chain.len() - 2] == TreeResidue::Vertex(pick) {
                        break;
                    }
                    TreeResidue::Vertex(pick)
                }
            };
            chain.push(next);
        }
        Ok(chain)
    }
}

/// Position of `y` toward `(x, xi)`: the tuple of tree distances from the
/// coordinates of `x` to those of `y`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PositionVector(pub Vec<RootDistance>);

pub fn position_of(
    ts: &TreeSystem,
    x: &SphericalResidue,
    sector: &crate::sector::Sector,
    y: &SphericalResidue,
) -> Result<PositionVector> {
    if !sector.contains(y) {
        return Err(CoxeterError::OutsideSector(y.describe(&ts.sys)));
    }
    let xi_coords = ts.psi(x)?;
    let y_coords = ts.psi(y)?;
    let mut out = Vec::with_capacity(ts.trees.len());
    for (i, tree) in ts.trees.iter().enumerate() {
        out.push(tree.root_distance(xi_coords[i], y_coords[i])?);
    }
    Ok(PositionVector(out))
}

/// Wall-disjointness validator: for sampled subgroup elements and ball walls,
/// `gH` equals `H` or is disjoint from it (no crossing), and equality forces
/// the reflections to commute.
pub fn validate_wall_disjointness(
    sys: &CoxeterSystem,
    w0: &TorsionFreeSubgroup,
    radius: usize,
    sample_radius: usize,
) -> Result<()> {
    let walls = reflections_in_ball(sys, radius)?;
    let chambers = ball(sys, radius + 2)?;
    let mut subgroup = Vec::new();
    for g in ball(sys, sample_radius)? {
        if !g.is_identity() && w0_membership(sys, &g, w0)? {
            subgroup.push(g);
        }
    }
    for t in &walls {
        for g in &subgroup {
            let conj = sys.multiply(&sys.multiply(g, t), &sys.inverse(g));
            if &conj == t {
                let gt = sys.multiply(g, t);
                let tg = sys.multiply(t, g);
                if gt != tg {
                    return Err(CoxeterError::InvalidMatrix(format!(
                        "subgroup element {} fixes wall {} without commuting",
                        sys.format_word(g),
                        sys.format_word(t)
                    )));
                }
                continue;
            }
            // Walls cross iff all four side combinations are inhabited.
            let a = Root::from_wall(t.clone(), true);
            let b = Root::from_wall(conj.clone(), true);
            let mut quadrant = [false; 4];
            for c in &chambers {
                let ia = a.contains_chamber(sys, c) as usize;
                let ib = b.contains_chamber(sys, c) as usize;
                quadrant[ia * 2 + ib] = true;
            }
            if quadrant.iter().all(|&q| q) {
                return Err(CoxeterError::InvalidMatrix(format!(
                    "walls {} and its {}-conjugate cross",
                    sys.format_word(t),
                    sys.format_word(g)
                )));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dinf() -> CoxeterSystem {
        CoxeterSystem::infinite_dihedral()
    }

    #[test]
    fn parity_membership_on_the_line() {
        let sys = dinf();
        let w0 = TorsionFreeSubgroup::RacgKernel;
        assert!(w0_membership(&sys, &Element::identity(), &w0).unwrap());
        let s = sys.parse_word("s").unwrap();
        assert!(!w0_membership(&sys, &s, &w0).unwrap());
        let st = sys.parse_word("s t").unwrap();
        assert!(!w0_membership(&sys, &st, &w0).unwrap());
        let stst = sys.parse_word("s t s t").unwrap();
        assert!(w0_membership(&sys, &stst, &w0).unwrap());
    }

    #[test]
    fn racg_kernel_rejected_off_right_angled() {
        let sys = CoxeterSystem::dihedral(crate::system::CoxeterOrder::Finite(3));
        let err = w0_membership(&sys, &Element::identity(), &TorsionFreeSubgroup::RacgKernel);
        assert!(matches!(err, Err(CoxeterError::NotRightAngled)));
    }

    #[test]
    fn line_wall_orbits_are_four_classes_spaced_four_apart() {
        let sys = dinf();
        let orbits = wall_orbits(&sys, &TorsionFreeSubgroup::RacgKernel, 8).unwrap();
        assert_eq!(orbits.len(), 4);
        // Walls of the line at positions ...,-1,0,1,2,...: each class takes
        // every fourth position, so within radius 8 each has 2 members and
        // conjugating by (st)^2 moves a wall 4 steps.
        let g = sys.parse_word("s t s t").unwrap();
        for orbit in &orbits {
            for t in orbit {
                let conj = sys.multiply(&sys.multiply(&g, t), &sys.inverse(&g));
                if conj.length() <= 8 {
                    assert!(orbit.contains(&conj), "conjugate must stay in the orbit");
                }
            }
        }
    }

    #[test]
    fn rank_one_single_orbit() {
        let sys = CoxeterSystem::free_product(1);
        let orbits = wall_orbits(&sys, &TorsionFreeSubgroup::RacgKernel, 4).unwrap();
        assert_eq!(orbits.len(), 1);
    }

    #[test]
    fn free_coxeter_orbit_count_by_enumeration() {
        // (Z/2)*3 with the parity kernel: each generator class splits into
        // 2^(rank-1) = 4 orbits, 12 in total; verify against brute-force
        // conjugation by kernel elements.
        let sys = CoxeterSystem::free_product(3);
        let orbits = wall_orbits(&sys, &TorsionFreeSubgroup::RacgKernel, 5).unwrap();
        // Brute force: conjugate every wall by every kernel element of the
        // ball and confirm the partition is exactly the computed one.
        let walls = reflections_in_ball(&sys, 5).unwrap();
        let kernel: Vec<Element> = ball(&sys, 8)
            .unwrap()
            .into_iter()
            .filter(|g| parity_vector(&sys, g) == 0)
            .collect();
        for t in &walls {
            let my_orbit = orbits.iter().position(|o| o.contains(t)).unwrap();
            for g in &kernel {
                let conj = sys.multiply(&sys.multiply(g, t), &sys.inverse(g));
                if conj.length() <= 5 {
                    assert!(orbits[my_orbit].contains(&conj));
                }
            }
        }
        assert_eq!(orbits.len(), 12);
    }

    #[test]
    fn trees_on_the_line_are_paths() {
        let sys = dinf();
        let ts = build_trees(&sys, &TorsionFreeSubgroup::RacgKernel, 8).unwrap();
        assert_eq!(ts.tree_count(), 4);
        for tree in &ts.trees {
            assert_eq!(tree.vertex_count, tree.edges.len() + 1);
            // Path: every vertex has at most two neighbors.
            for v in 0..tree.vertex_count {
                assert!(tree.neighbors(v).len() <= 2);
            }
        }
    }

    #[test]
    fn every_ball_wall_is_an_edge_of_exactly_one_tree() {
        let sys = CoxeterSystem::free_product(3);
        let ts = build_trees(&sys, &TorsionFreeSubgroup::RacgKernel, 4).unwrap();
        let mut seen: BTreeMap<Element, usize> = BTreeMap::new();
        for tree in &ts.trees {
            for (wall, _) in &tree.wall_to_edge {
                *seen.entry(wall.clone()).or_insert(0) += 1;
            }
        }
        for (_, count) in seen {
            assert_eq!(count, 1);
        }
    }

    #[test]
    fn psi_is_injective_on_ball_residues() {
        let sys = dinf();
        let ts = build_trees(&sys, &TorsionFreeSubgroup::RacgKernel, 6).unwrap();
        let residues = crate::geometry::residues_in_ball(&sys, 4).unwrap();
        let mut seen = BTreeSet::new();
        for r in &residues {
            let coords = ts.psi(r).unwrap();
            assert!(seen.insert(coords.clone()), "psi collision at {:?}", r);
        }
    }

    #[test]
    fn psi_of_chamber_is_all_vertices_and_panel_has_one_edge() {
        let sys = dinf();
        let ts = build_trees(&sys, &TorsionFreeSubgroup::RacgKernel, 6).unwrap();
        let c = SphericalResidue::chamber(sys.parse_word("s t").unwrap());
        for coord in ts.psi(&c).unwrap() {
            assert!(matches!(coord, TreeResidue::Vertex(_)));
        }
        let p = SphericalResidue::panel(&sys, &Element::identity(), 0).unwrap();
        let coords = ts.psi(&p).unwrap();
        let edge_count = coords
            .iter()
            .filter(|c| matches!(c, TreeResidue::Edge(_)))
            .count();
        assert_eq!(edge_count, 1);
    }

    #[test]
    fn root_map_is_a_bijection_on_ball_walls() {
        let sys = CoxeterSystem::free_product(3);
        let ts = build_trees(&sys, &TorsionFreeSubgroup::RacgKernel, 4).unwrap();
        let walls = reflections_in_ball(&sys, 4 * 2 + 1)
            .unwrap()
            .into_iter()
            .filter(|t| {
                // Only walls with a panel in the ball appear as tree edges.
                ts.trees.iter().any(|tr| tr.wall_to_edge.contains_key(t))
            })
            .collect::<Vec<_>>();
        for t in &walls {
            for side in [true, false] {
                let alpha = Root::from_wall(t.clone(), side);
                let (class, e, toward) = ts.psi_root(&alpha).unwrap();
                let back = ts.root_from_tree(class, e, toward).unwrap();
                assert_eq!(back, alpha);
                let opp = ts.psi_root(&alpha.opposite()).unwrap();
                assert_eq!(opp.0, class);
                assert_eq!(opp.1, e);
                assert_ne!(opp.2, toward);
            }
        }
    }

    #[test]
    fn psi_root_equivariance_spot_check() {
        let sys = dinf();
        let ts = build_trees(&sys, &TorsionFreeSubgroup::RacgKernel, 8).unwrap();
        let alpha = Root::simple(&sys, 0).unwrap();
        for w_text in ["s t s t", "t s t s"] {
            // Kernel elements keep each tree, so the class is unchanged.
            let w = sys.parse_word(w_text).unwrap();
            let walpha = alpha.translate(&sys, &w);
            let (c0, _, _) = ts.psi_root(&alpha).unwrap();
            let (c1, _, _) = ts.psi_root(&walpha).unwrap();
            assert_eq!(c0, c1);
        }
        // A non-kernel element permutes the classes.
        let w = sys.parse_word("s").unwrap();
        let walpha = alpha.translate(&sys, &w);
        let (c0, _, _) = ts.psi_root(&alpha).unwrap();
        let (c1, _, _) = ts.psi_root(&walpha).unwrap();
        assert_ne!(c0, c1);
    }

    #[test]
    fn phi_extends_psi_on_interior_directions() {
        let sys = dinf();
        let ts = build_trees(&sys, &TorsionFreeSubgroup::RacgKernel, 6).unwrap();
        let r = SphericalResidue::panel(&sys, &sys.parse_word("s").unwrap(), 1).unwrap();
        let xi = BoundaryDirection::Interior(r.clone());
        let phi = ts.phi_direction(&xi, 8).unwrap();
        let psi = ts.psi(&r).unwrap();
        for (a, b) in phi.iter().zip(psi.iter()) {
            assert_eq!(a, &TreeDirection::Interior(*b));
        }
    }

    #[test]
    fn line_end_maps_to_four_ends() {
        let sys = dinf();
        let ts = build_trees(&sys, &TorsionFreeSubgroup::RacgKernel, 8).unwrap();
        let xi = BoundaryDirection::driven(
            &sys,
            SphericalResidue::chamber(Element::identity()),
            sys.parse_word("s t").unwrap(),
        )
        .unwrap();
        let phi = ts.phi_direction(&xi, 24).unwrap();
        assert_eq!(phi.len(), 4);
        for dir in &phi {
            assert!(matches!(dir, TreeDirection::End { .. }));
        }
    }

    #[test]
    fn chains_march_along_the_line_trees() {
        let sys = dinf();
        let ts = build_trees(&sys, &TorsionFreeSubgroup::RacgKernel, 12).unwrap();
        let x = SphericalResidue::chamber(Element::identity());
        let xi = BoundaryDirection::driven(
            &sys,
            x.clone(),
            sys.parse_word("s t").unwrap(),
        )
        .unwrap();
        let dirs = ts.phi_direction(&xi, 30).unwrap();
        let coords = ts.psi(&x).unwrap();
        for (i, dir) in dirs.iter().enumerate() {
            let chain = ts.tree_chain(i, coords[i], dir, 6).unwrap();
            // Alternating vertex/edge along the path.
            for (k, entry) in chain.iter().enumerate() {
                match entry {
                    TreeResidue::Vertex(_) => assert_eq!(k % 2, 0),
                    TreeResidue::Edge(_) => assert_eq!(k % 2, 1),
                }
            }
            assert!(chain.len() >= 4, "tree {i} chain too short: {chain:?}");
        }
    }

    #[test]
    fn positions_along_a_line_sector() {
        let sys = dinf();
        let ts = build_trees(&sys, &TorsionFreeSubgroup::RacgKernel, 10).unwrap();
        let x = SphericalResidue::chamber(Element::identity());
        let xi = BoundaryDirection::driven(
            &sys,
            x.clone(),
            sys.parse_word("s t").unwrap(),
        )
        .unwrap();
        let q = crate::sector::sector(&sys, &x, &xi, 8, 24).unwrap();
        // y = x has the zero position.
        let p0 = position_of(&ts, &x, &q, &x).unwrap();
        assert!(p0.0.iter().all(|d| d.half_steps() == 0));
        // Chamber four steps out: it crossed one wall of each class.
        let y = SphericalResidue::chamber(sys.parse_word("s t s t").unwrap());
        let p = position_of(&ts, &x, &q, &y).unwrap();
        let mut steps: Vec<u64> = p.0.iter().map(|d| d.half_steps()).collect();
        steps.sort();
        assert_eq!(steps, vec![2, 2, 2, 2]);
        // A residue outside the sector errors.
        let z = SphericalResidue::chamber(sys.parse_word("t").unwrap());
        assert!(position_of(&ts, &x, &q, &z).is_err());
    }

    #[test]
    fn wall_disjointness_validates_on_catalog() {
        for sys in [
            dinf(),
            CoxeterSystem::free_product(3),
            CoxeterSystem::right_angled_cycle(5),
        ] {
            validate_wall_disjointness(&sys, &TorsionFreeSubgroup::RacgKernel, 3, 4).unwrap();
        }
    }

    #[test]
    fn factor_trees_of_a_single_tree_are_tautological() {
        let sys = CoxeterSystem::free_product(3);
        let ts = build_factor_trees(&sys, 3).unwrap();
        assert_eq!(ts.tree_count(), 1);
        // Deleting every wall isolates each chamber: components = chambers.
        assert_eq!(ts.trees[0].vertex_count, ball(&sys, 3).unwrap().len());
    }

    #[test]
    fn factor_trees_of_a_product_split_by_factor() {
        let line = dinf();
        let sys = CoxeterSystem::product(&line, &line);
        let ts = build_factor_trees(&sys, 4).unwrap();
        assert_eq!(ts.tree_count(), 2);
    }

    #[test]
    fn user_supplied_subgroup_on_the_line() {
        let sys = dinf();
        let stst = sys.parse_word("s t s t").unwrap();
        let w0 = TorsionFreeSubgroup::user_supplied(vec![stst], 4);
        let reps = coset_representatives(&sys, &w0).unwrap();
        assert_eq!(reps.len(), 4);
        let orbits = wall_orbits(&sys, &w0, 6).unwrap();
        assert_eq!(orbits.len(), 4);
    }
}
