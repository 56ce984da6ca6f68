//! Connectivity measures of a signed network.
//!
//! Clustering treats the network as a plain simple graph. Assortativity is the
//! Pearson correlation, over both orientations of every edge, of the modified
//! weighted average neighbor degree
//!
//! ```text
//! avg_nd(i) = (1 / k_i) * sum_{j in N(i)} w_ij * s_j
//! ```
//!
//! where `k_i` is the unweighted degree and `s_j` the signed weighted degree.
//! Undefined values are `None` and stay missing downstream.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::network::{density_of, sign_subgraph, Sign, SignedNetwork};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    Original,
    Positive,
    Negative,
}

impl Scope {
    pub const ALL: [Scope; 3] = [Scope::Original, Scope::Positive, Scope::Negative];

    pub fn as_str(self) -> &'static str {
        match self {
            Scope::Original => "original",
            Scope::Positive => "positive",
            Scope::Negative => "negative",
        }
    }
}

impl std::str::FromStr for Scope {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Scope::ALL
            .into_iter()
            .find(|scope| scope.as_str() == s)
            .ok_or_else(|| format!("unknown scope {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Density,
    AvgEdgeWeight,
    AvgClustering,
    Assortativity,
}

impl Metric {
    pub const ALL: [Metric; 4] = [
        Metric::Density,
        Metric::AvgEdgeWeight,
        Metric::AvgClustering,
        Metric::Assortativity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Density => "density",
            Metric::AvgEdgeWeight => "avg_edge_weight",
            Metric::AvgClustering => "avg_clustering",
            Metric::Assortativity => "assortativity",
        }
    }
}

/// `2m / (n (n - 1))`; undefined below two vertices.
pub fn density(net: &SignedNetwork) -> Option<f64> {
    density_of(net.node_count(), net.edge_count())
}

/// Mean edge weight; undefined without edges.
pub fn avg_edge_weight(net: &SignedNetwork) -> Option<f64> {
    if net.edges.is_empty() {
        return None;
    }
    let sum: f64 = net.edges.iter().map(|e| e.sign.weight()).sum();
    Some(sum / net.edge_count() as f64)
}

/// Local clustering per vertex; 0 for degree below two.
pub fn local_clustering(net: &SignedNetwork) -> Vec<f64> {
    let n = net.node_count();
    let mut adjacent = vec![vec![false; n]; n];
    for e in &net.edges {
        adjacent[e.source][e.target] = true;
        adjacent[e.target][e.source] = true;
    }
    net.adjacency()
        .iter()
        .map(|nbrs| {
            let k = nbrs.len();
            if k < 2 {
                return 0.0;
            }
            let mut links = 0usize;
            for (a, &(u, _)) in nbrs.iter().enumerate() {
                links += nbrs[a + 1..].iter().filter(|&&(v, _)| adjacent[u][v]).count();
            }
            2.0 * links as f64 / (k * (k - 1)) as f64
        })
        .collect()
}

/// Mean local clustering over all vertices; undefined for an empty graph.
pub fn avg_clustering(net: &SignedNetwork) -> Option<f64> {
    let local = local_clustering(net);
    if local.is_empty() {
        return None;
    }
    Some(local.iter().sum::<f64>() / local.len() as f64)
}

/// Sum of the signed weights of each vertex's incident edges.
pub fn weighted_degrees(net: &SignedNetwork) -> Vec<f64> {
    let mut s = vec![0.0; net.node_count()];
    for e in &net.edges {
        s[e.source] += e.sign.weight();
        s[e.target] += e.sign.weight();
    }
    s
}

/// Modified weighted average neighbor degree of every vertex; `None` for
/// isolated vertices.
pub fn weighted_avg_neighbor_degrees(net: &SignedNetwork) -> Vec<Option<f64>> {
    let s = weighted_degrees(net);
    net.adjacency()
        .iter()
        .map(|nbrs| {
            if nbrs.is_empty() {
                return None;
            }
            let sum: f64 = nbrs.iter().map(|&(j, sign)| sign.weight() * s[j]).sum();
            Some(sum / nbrs.len() as f64)
        })
        .collect()
}

pub fn weighted_avg_neighbor_degree(net: &SignedNetwork, vertex: usize) -> Option<f64> {
    weighted_avg_neighbor_degrees(net).get(vertex).copied().flatten()
}

/// Assortativity over the modified weighted average neighbor degree.
///
/// Undefined with fewer than two edges or when every endpoint carries the same
/// value.
pub fn assortativity(net: &SignedNetwork) -> Option<f64> {
    if net.edge_count() < 2 {
        return None;
    }
    let attr = weighted_avg_neighbor_degrees(net);
    let mut xs = Vec::with_capacity(2 * net.edge_count());
    let mut ys = Vec::with_capacity(2 * net.edge_count());
    for e in &net.edges {
        let (a, b) = (attr[e.source]?, attr[e.target]?);
        xs.extend([a, b]);
        ys.extend([b, a]);
    }
    pearson(&xs, &ys)
}

/// Two-pass Pearson correlation; `None` when either side is constant.
fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let constant = |v: &[f64]| v.iter().all(|&x| x == v[0]);
    if xs.is_empty() || constant(xs) || constant(ys) {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub story_id: String,
    pub writer: String,
    pub scope: Scope,
    pub node_count: usize,
    pub edge_count: usize,
    pub density: Option<f64>,
    pub avg_edge_weight: Option<f64>,
    pub avg_clustering: Option<f64>,
    pub assortativity: Option<f64>,
}

impl MetricsRecord {
    pub fn value(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::Density => self.density,
            Metric::AvgEdgeWeight => self.avg_edge_weight,
            Metric::AvgClustering => self.avg_clustering,
            Metric::Assortativity => self.assortativity,
        }
    }
}

pub fn compute_metrics(net: &SignedNetwork, scope: Scope) -> MetricsRecord {
    MetricsRecord {
        story_id: net.story_id.clone(),
        writer: net.writer.clone(),
        scope,
        node_count: net.node_count(),
        edge_count: net.edge_count(),
        density: density(net),
        avg_edge_weight: avg_edge_weight(net),
        avg_clustering: avg_clustering(net),
        assortativity: assortativity(net),
    }
}

/// Metrics of the original network and of its positive and negative subgraphs.
pub fn network_metrics(net: &SignedNetwork) -> [MetricsRecord; 3] {
    [
        compute_metrics(net, Scope::Original),
        compute_metrics(&sign_subgraph(net, Sign::Positive), Scope::Positive),
        compute_metrics(&sign_subgraph(net, Sign::Negative), Scope::Negative),
    ]
}

pub const METRICS_HEADER: [&str; 9] = [
    "story_id",
    "writer",
    "scope",
    "node_count",
    "edge_count",
    "density",
    "avg_edge_weight",
    "avg_clustering",
    "assortativity",
];

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// CSV with one row per record; missing values are empty cells.
pub fn write_metrics_csv<W: Write>(out: W, records: &[MetricsRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRICS_HEADER)?;
    for r in records {
        w.write_record([
            r.story_id.clone(),
            r.writer.clone(),
            r.scope.as_str().to_string(),
            r.node_count.to_string(),
            r.edge_count.to_string(),
            cell(r.density),
            cell(r.avg_edge_weight),
            cell(r.avg_clustering),
            cell(r.assortativity),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics_csv<R: std::io::Read>(input: R) -> Result<Vec<MetricsRecord>, String> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers().map_err(|e| e.to_string())?.clone();
    if header.iter().collect::<Vec<_>>() != METRICS_HEADER {
        return Err(format!("unexpected metrics header {:?}", header));
    }
    let opt = |s: &str, line: u64| -> Result<Option<f64>, String> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|e| format!("row {line}: {e}"))
        }
    };
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| e.to_string())?;
        let line = row.position().map_or(0, |p| p.line());
        let int = |s: &str| s.parse::<usize>().map_err(|e| format!("row {line}: {e}"));
        out.push(MetricsRecord {
            story_id: row[0].to_string(),
            writer: row[1].to_string(),
            scope: row[2].parse()?,
            node_count: int(&row[3])?,
            edge_count: int(&row[4])?,
            density: opt(&row[5], line)?,
            avg_edge_weight: opt(&row[6], line)?,
            avg_clustering: opt(&row[7], line)?,
            assortativity: opt(&row[8], line)?,
        });
    }
    Ok(out)
}
