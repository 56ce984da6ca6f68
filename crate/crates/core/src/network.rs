//! Signed co-occurrence networks.
//!
//! Two characters are linked when they appear in the same narrative unit. The
//! edge sign comes from the mean of the logits of all units they share:
//! positive when `sigmoid(mean) >= 0.5`, which is `mean >= 0`.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::annotation::NarrativeUnit;
use crate::names::{normalize_surface, CharacterIdentity, Gender, NameLexicons, ParsedName};

pub const DEFAULT_MIN_NODES: usize = 10;
pub const DEFAULT_MIN_DENSITY: f64 = 0.1;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("graph line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sign {
    Negative,
    Positive,
}

impl Sign {
    /// Sign of an edge whose shared units have these logits. A mean of exactly
    /// zero counts as positive.
    pub fn from_logits(logits: &[f64]) -> Sign {
        debug_assert!(!logits.is_empty());
        let mean = logits.iter().sum::<f64>() / logits.len() as f64;
        if mean >= 0.0 {
            Sign::Positive
        } else {
            Sign::Negative
        }
    }

    pub fn weight(self) -> f64 {
        match self {
            Sign::Positive => 1.0,
            Sign::Negative => -1.0,
        }
    }

    pub fn flip(self) -> Sign {
        match self {
            Sign::Positive => Sign::Negative,
            Sign::Negative => Sign::Positive,
        }
    }
}

impl Serialize for Sign {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_i8(match self {
            Sign::Positive => 1,
            Sign::Negative => -1,
        })
    }
}

impl<'de> Deserialize<'de> for Sign {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match i8::deserialize(d)? {
            1 => Ok(Sign::Positive),
            -1 => Ok(Sign::Negative),
            other => Err(serde::de::Error::custom(format!("edge weight must be 1 or -1, got {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignedEdge {
    /// Vertex indices with `source < target`.
    pub source: usize,
    pub target: usize,
    pub sign: Sign,
    pub logits: Vec<f64>,
    pub unit_indices: Vec<usize>,
}

/// Undirected signed network of one story. Edges are sorted by endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedNetwork {
    pub story_id: String,
    pub writer: String,
    pub vertices: Vec<CharacterIdentity>,
    pub edges: Vec<SignedEdge>,
}

impl SignedNetwork {
    pub fn node_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Neighbor lists with the sign of each incident edge.
    pub fn adjacency(&self) -> Vec<Vec<(usize, Sign)>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for e in &self.edges {
            adj[e.source].push((e.target, e.sign));
            adj[e.target].push((e.source, e.sign));
        }
        adj
    }
}

/// One identity per distinct normalized surface, ordered by normalized key.
///
/// The canonical surface is the most frequent spelling (ties go to the
/// lexicographically smaller one). Surfaces that do not parse as a name, such
/// as a bare title, are skipped.
pub fn resolve_characters(units: &[NarrativeUnit], names: &NameLexicons) -> Vec<CharacterIdentity> {
    let mut groups: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    for mention in units.iter().flat_map(|u| &u.mentions) {
        let key = normalize_surface(&mention.surface);
        if key.is_empty() {
            continue;
        }
        *groups
            .entry(key)
            .or_default()
            .entry(mention.surface.split_whitespace().collect::<Vec<_>>().join(" "))
            .or_default() += 1;
    }
    groups
        .into_values()
        .filter_map(|spellings| {
            let total = spellings.values().sum();
            let (canonical, _) = spellings
                .iter()
                .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))?;
            let mut identity = CharacterIdentity::from_surface(canonical, total, names).ok()?;
            identity.surfaces.extend(spellings.keys().cloned());
            Some(identity)
        })
        .collect()
}

fn titles_compatible(a: &CharacterIdentity, b: &CharacterIdentity) -> bool {
    match (a.title(), b.title()) {
        (Some(x), Some(y)) => normalize_surface(x) == normalize_surface(y),
        _ => true,
    }
}

/// Whether `source` may be contracted into `target`.
///
/// Genders must not conflict, titles must agree when both are present, and
/// the source name must be one of the target's referents.
pub fn can_merge_into(source: &CharacterIdentity, target: &CharacterIdentity) -> bool {
    !source.gender.conflicts_with(target.gender)
        && titles_compatible(source, target)
        && {
            let key = normalize_surface(&source.canonical);
            target.referents.iter().any(|r| normalize_surface(r) == key)
        }
}

/// Merges identities that denote the same character until no eligible pair
/// remains.
///
/// When a name is a referent of several candidates it goes to the one with
/// the most mentions, ties broken by the smaller canonical name. Merges are
/// applied one at a time, highest-count target first, then highest-count
/// source, so the outcome does not depend on input order.
pub fn contract(identities: Vec<CharacterIdentity>) -> Vec<CharacterIdentity> {
    let mut ids = identities;
    ids.sort_by(|a, b| a.canonical.cmp(&b.canonical));
    let mut keys: Vec<String> = ids.iter().map(|i| normalize_surface(&i.canonical)).collect();
    let mut refs: Vec<HashSet<String>> = ids.iter().map(normalized_referents).collect();
    loop {
        let mut holders: HashMap<&str, Vec<usize>> = HashMap::new();
        for (t, set) in refs.iter().enumerate() {
            for r in set {
                holders.entry(r.as_str()).or_default().push(t);
            }
        }
        let mut best: Option<(usize, usize)> = None;
        for s in 0..ids.len() {
            let Some(candidates) = holders.get(keys[s].as_str()) else {
                continue;
            };
            let target = candidates
                .iter()
                .copied()
                .filter(|&t| {
                    t != s
                        && !ids[s].gender.conflicts_with(ids[t].gender)
                        && titles_compatible(&ids[s], &ids[t])
                })
                .min_by(|&x, &y| rank(&ids[x], &ids[y]));
            let Some(t) = target else { continue };
            let better = match best {
                None => true,
                Some((bs, bt)) => rank(&ids[t], &ids[bt])
                    .then_with(|| rank(&ids[s], &ids[bs]))
                    .is_lt(),
            };
            if better {
                best = Some((s, t));
            }
        }
        drop(holders);
        let Some((s, t)) = best else { break };
        let source = ids.remove(s);
        keys.remove(s);
        refs.remove(s);
        let t = if t > s { t - 1 } else { t };
        absorb(&mut ids[t], source);
        refs[t] = normalized_referents(&ids[t]);
    }
    ids
}

fn normalized_referents(id: &CharacterIdentity) -> HashSet<String> {
    id.referents.iter().map(|r| normalize_surface(r)).collect()
}

/// Orders merge targets: more mentions first, then smaller canonical name.
fn rank(a: &CharacterIdentity, b: &CharacterIdentity) -> std::cmp::Ordering {
    b.mention_count
        .cmp(&a.mention_count)
        .then_with(|| a.canonical.cmp(&b.canonical))
}

fn absorb(target: &mut CharacterIdentity, source: CharacterIdentity) {
    target.gender = target.gender.merge(source.gender);
    if target.parsed.title.is_none() {
        target.parsed.title = source.parsed.title;
    }
    target.mention_count += source.mention_count;
    target.referents.extend(source.referents);
    target.referents.insert(source.canonical);
    let own = normalize_surface(&target.canonical);
    target.referents.retain(|r| normalize_surface(r) != own);
    target.surfaces.extend(source.surfaces);
}

/// Maps normalized mention surfaces to identities: observed surfaces first,
/// then canonical names, then referents.
struct MentionIndex {
    exact: HashMap<String, usize>,
    referent: HashMap<String, usize>,
}

impl MentionIndex {
    fn new(ids: &[CharacterIdentity]) -> Self {
        let mut order: Vec<usize> = (0..ids.len()).collect();
        order.sort_by(|&a, &b| rank(&ids[a], &ids[b]));
        let mut exact = HashMap::new();
        let mut referent = HashMap::new();
        for &i in &order {
            for s in ids[i].surfaces.iter().chain(std::iter::once(&ids[i].canonical)) {
                exact.entry(normalize_surface(s)).or_insert(i);
            }
            for r in &ids[i].referents {
                referent.entry(normalize_surface(r)).or_insert(i);
            }
        }
        Self { exact, referent }
    }

    fn lookup(&self, surface: &str) -> Option<usize> {
        let key = normalize_surface(surface);
        self.exact.get(&key).or_else(|| self.referent.get(&key)).copied()
    }
}

/// Builds the signed network of a story from its annotated units and the
/// contracted identities. Units where two mentions map to the same identity
/// add no self-loop.
pub fn build_network(
    story_id: &str,
    writer: &str,
    units: &[NarrativeUnit],
    identities: Vec<CharacterIdentity>,
) -> SignedNetwork {
    let index = MentionIndex::new(&identities);
    let mut pairs: BTreeMap<(usize, usize), (Vec<f64>, Vec<usize>)> = BTreeMap::new();
    let mut dropped = 0usize;
    for unit in units {
        let present: BTreeSet<usize> = unit
            .mentions
            .iter()
            .filter_map(|m| {
                let hit = index.lookup(&m.surface);
                dropped += usize::from(hit.is_none());
                hit
            })
            .collect();
        let present: Vec<usize> = present.into_iter().collect();
        for (a, &i) in present.iter().enumerate() {
            for &j in &present[a + 1..] {
                let entry = pairs.entry((i, j)).or_default();
                entry.0.push(unit.logit);
                entry.1.push(unit.unit_index);
            }
        }
    }
    if dropped > 0 {
        log::warn!("story {story_id}: {dropped} mention(s) matched no character and were dropped");
    }
    let edges = pairs
        .into_iter()
        .map(|((source, target), (logits, unit_indices))| SignedEdge {
            source,
            target,
            sign: Sign::from_logits(&logits),
            logits,
            unit_indices,
        })
        .collect();
    SignedNetwork {
        story_id: story_id.to_string(),
        writer: writer.to_string(),
        vertices: identities,
        edges,
    }
}

/// Resolves, contracts and links the characters of one annotated story.
pub fn extract_network(
    story_id: &str,
    writer: &str,
    units: &[NarrativeUnit],
    names: &NameLexicons,
) -> SignedNetwork {
    let identities = contract(resolve_characters(units, names));
    build_network(story_id, writer, units, identities)
}

pub fn density_of(node_count: usize, edge_count: usize) -> Option<f64> {
    (node_count >= 2)
        .then(|| 2.0 * edge_count as f64 / (node_count as f64 * (node_count as f64 - 1.0)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterThresholds {
    pub min_nodes: usize,
    pub min_density: f64,
}

impl Default for FilterThresholds {
    fn default() -> Self {
        Self {
            min_nodes: DEFAULT_MIN_NODES,
            min_density: DEFAULT_MIN_DENSITY,
        }
    }
}

impl FilterThresholds {
    /// Excludes networks with fewer than `min_nodes` vertices or a density
    /// below `min_density`; values on the boundary are retained.
    pub fn check(&self, node_count: usize, density: Option<f64>) -> Result<(), String> {
        if node_count < self.min_nodes {
            return Err(format!("node count {node_count} < {}", self.min_nodes));
        }
        match density {
            Some(d) if d >= self.min_density => Ok(()),
            Some(d) => Err(format!("density {d} < {}", self.min_density)),
            None => Err("density undefined".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkFilterReport {
    pub story_id: String,
    pub retained: bool,
    pub node_count: usize,
    pub density: Option<f64>,
    pub reason: Option<String>,
}

pub fn exclusion_filter(net: &SignedNetwork, thresholds: &FilterThresholds) -> NetworkFilterReport {
    let density = density_of(net.node_count(), net.edge_count());
    let verdict = thresholds.check(net.node_count(), density);
    NetworkFilterReport {
        story_id: net.story_id.clone(),
        retained: verdict.is_ok(),
        node_count: net.node_count(),
        density,
        reason: verdict.err(),
    }
}

/// Edge-induced subgraph of one sign: the edges with that sign and the
/// vertices touching at least one of them, in original order.
pub fn sign_subgraph(net: &SignedNetwork, sign: Sign) -> SignedNetwork {
    let mut keep = vec![false; net.vertices.len()];
    for e in net.edges.iter().filter(|e| e.sign == sign) {
        keep[e.source] = true;
        keep[e.target] = true;
    }
    let mut remap = vec![usize::MAX; net.vertices.len()];
    let mut vertices = Vec::new();
    for (i, v) in net.vertices.iter().enumerate() {
        if keep[i] {
            remap[i] = vertices.len();
            vertices.push(v.clone());
        }
    }
    let edges = net
        .edges
        .iter()
        .filter(|e| e.sign == sign)
        .map(|e| SignedEdge {
            source: remap[e.source],
            target: remap[e.target],
            ..e.clone()
        })
        .collect();
    SignedNetwork {
        story_id: net.story_id.clone(),
        writer: net.writer.clone(),
        vertices,
        edges,
    }
}

#[derive(Serialize, Deserialize)]
struct VertexRecord {
    canonical: String,
    gender: Gender,
    mention_count: usize,
    parsed: ParsedName,
    referents: BTreeSet<String>,
    surfaces: BTreeSet<String>,
}

#[derive(Serialize, Deserialize)]
struct EdgeRecord {
    source: String,
    target: String,
    weight: Sign,
    logits: Vec<f64>,
    unit_indices: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct GraphRecord {
    story_id: String,
    writer: String,
    vertices: Vec<VertexRecord>,
    edges: Vec<EdgeRecord>,
}

/// Writes one graph per line. Edge endpoints are referenced by canonical name.
pub fn write_graph<W: Write>(mut out: W, net: &SignedNetwork) -> Result<(), GraphError> {
    let record = GraphRecord {
        story_id: net.story_id.clone(),
        writer: net.writer.clone(),
        vertices: net
            .vertices
            .iter()
            .map(|v| VertexRecord {
                canonical: v.canonical.clone(),
                gender: v.gender,
                mention_count: v.mention_count,
                parsed: v.parsed.clone(),
                referents: v.referents.clone(),
                surfaces: v.surfaces.clone(),
            })
            .collect(),
        edges: net
            .edges
            .iter()
            .map(|e| EdgeRecord {
                source: net.vertices[e.source].canonical.clone(),
                target: net.vertices[e.target].canonical.clone(),
                weight: e.sign,
                logits: e.logits.clone(),
                unit_indices: e.unit_indices.clone(),
            })
            .collect(),
    };
    serde_json::to_writer(&mut out, &record).map_err(io::Error::from)?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn parse_graph(line: &str) -> Result<SignedNetwork, String> {
    let record: GraphRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let mut by_name = HashMap::new();
    for (i, v) in record.vertices.iter().enumerate() {
        if by_name.insert(v.canonical.clone(), i).is_some() {
            return Err(format!("duplicate vertex {:?}", v.canonical));
        }
    }
    let mut edges = Vec::with_capacity(record.edges.len());
    for e in record.edges {
        let find = |name: &str| {
            by_name
                .get(name)
                .copied()
                .ok_or_else(|| format!("edge endpoint {name:?} is not a vertex"))
        };
        let (a, b) = (find(&e.source)?, find(&e.target)?);
        if a == b {
            return Err(format!("self-loop on {:?}", e.source));
        }
        if e.logits.is_empty() || e.logits.len() != e.unit_indices.len() {
            return Err(format!("edge {:?}-{:?} has inconsistent logits", e.source, e.target));
        }
        if Sign::from_logits(&e.logits) != e.weight {
            return Err(format!("edge {:?}-{:?} weight disagrees with its logits", e.source, e.target));
        }
        edges.push(SignedEdge {
            source: a.min(b),
            target: a.max(b),
            sign: e.weight,
            logits: e.logits,
            unit_indices: e.unit_indices,
        });
    }
    edges.sort_by_key(|e| (e.source, e.target));
    if edges.windows(2).any(|w| (w[0].source, w[0].target) == (w[1].source, w[1].target)) {
        return Err("duplicate edge".into());
    }
    Ok(SignedNetwork {
        story_id: record.story_id,
        writer: record.writer,
        vertices: record
            .vertices
            .into_iter()
            .map(|v| CharacterIdentity {
                canonical: v.canonical,
                parsed: v.parsed,
                gender: v.gender,
                referents: v.referents,
                mention_count: v.mention_count,
                surfaces: v.surfaces,
            })
            .collect(),
        edges,
    })
}

pub fn read_graphs<R: BufRead>(reader: R) -> Result<Vec<SignedNetwork>, GraphError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_graph(&line).map_err(|reason| GraphError::Malformed {
            line: idx + 1,
            reason,
        })?);
    }
    Ok(out)
}
