//! Correlation network: correlation matrix, metric distance, Kruskal MST,
//! degree statistics and the log-log power-law fit of the degree distribution.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::format::sig;
use crate::ingest::ReturnPanel;
use crate::numerics::Matrix;
use crate::stats::column_correlations;

/// Symmetric N×N matrix of correlations with unit diagonal, entries in [−1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    rho: Matrix,
}

impl CorrelationMatrix {
    /// Wraps a precomputed matrix after checking the invariants. Entries
    /// within 1e-12 of the unit interval are clamped into it.
    pub fn from_matrix(mut rho: Matrix) -> Result<Self> {
        if !rho.is_square() {
            return Err(Error::DimensionMismatch(
                "correlation matrix must be square".into(),
            ));
        }
        if rho.asymmetry() > 1e-12 {
            return Err(Error::NotSymmetric(rho.asymmetry()));
        }
        let n = rho.rows();
        for i in 0..n {
            for j in 0..n {
                let v = rho[(i, j)];
                if i == j && v != 1.0 {
                    return Err(Error::Invariant(format!("correlation diagonal {i} is {v}")));
                }
                if v.abs() > 1.0 + 1e-12 {
                    return Err(Error::Invariant(format!("correlation ({i},{j}) = {v}")));
                }
                rho[(i, j)] = v.clamp(-1.0, 1.0);
            }
        }
        Ok(Self { rho })
    }

    pub fn n(&self) -> usize {
        self.rho.rows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rho[(i, j)]
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.rho
    }
}

/// Symmetric N×N matrix of `sqrt(2(1−ρ))`, zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    d: Matrix,
}

impl DistanceMatrix {
    /// Arbitrary symmetric non-negative weights with zero diagonal. Used for
    /// graphs that do not come from correlations.
    pub fn from_matrix(d: Matrix) -> Result<Self> {
        if !d.is_square() || d.asymmetry() != 0.0 {
            return Err(Error::Invariant(
                "distance matrix must be square and symmetric".into(),
            ));
        }
        for i in 0..d.rows() {
            if d[(i, i)] != 0.0 {
                return Err(Error::Invariant(format!(
                    "distance diagonal {i} is nonzero"
                )));
            }
        }
        Ok(Self { d })
    }

    pub fn n(&self) -> usize {
        self.d.rows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[(i, j)]
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.d
    }
}

pub fn correlation_matrix(returns: &ReturnPanel) -> Result<CorrelationMatrix> {
    CorrelationMatrix::from_matrix(column_correlations(returns.returns())?)
}

/// Correlation distance `d = sqrt(2(1 − ρ))`.
pub fn correlation_distance(rho: f64) -> f64 {
    (2.0 * (1.0 - rho)).max(0.0).sqrt()
}

pub fn distance_matrix(c: &CorrelationMatrix) -> DistanceMatrix {
    let n = c.n();
    let mut d = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = correlation_distance(c.get(i, j));
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    DistanceMatrix { d }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

/// Spanning tree over `n` nodes with per-node degree (number of links).
#[derive(Debug, Clone, PartialEq)]
pub struct SpanningTree {
    n: usize,
    edges: Vec<Edge>,
    degree: Vec<usize>,
}

impl SpanningTree {
    /// Builds a tree from an edge list and checks it spans `n` nodes without cycles.
    pub fn from_edges(n: usize, edges: Vec<Edge>) -> Result<Self> {
        let mut degree = vec![0; n];
        for e in &edges {
            if e.i >= e.j || e.j >= n {
                return Err(Error::Invariant(format!("bad edge ({}, {})", e.i, e.j)));
            }
            degree[e.i] += 1;
            degree[e.j] += 1;
        }
        let tree = Self { n, edges, degree };
        tree.validate()?;
        Ok(tree)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn degree(&self) -> &[usize] {
        &self.degree
    }

    pub fn total_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.weight).sum()
    }

    pub fn min_degree(&self) -> usize {
        self.degree.iter().copied().min().unwrap_or(0)
    }

    pub fn max_degree(&self) -> usize {
        self.degree.iter().copied().max().unwrap_or(0)
    }

    /// Checks n−1 edges, connectivity and acyclicity with a fresh union-find.
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.edges.len() != self.n - 1 {
            return Err(Error::Invariant(format!(
                "{} edges for {} nodes",
                self.edges.len(),
                self.n
            )));
        }
        let mut sets = DisjointSet::new(self.n);
        for e in &self.edges {
            if !sets.union(e.i, e.j) {
                return Err(Error::Invariant(format!(
                    "edge ({}, {}) closes a cycle",
                    e.i, e.j
                )));
            }
        }
        if self.degree.iter().sum::<usize>() != 2 * (self.n - 1) || self.min_degree() == 0 {
            return Err(Error::Invariant(
                "degree sequence inconsistent with tree".into(),
            ));
        }
        Ok(())
    }
}

/// Union-find with path halving and union by size.
#[derive(Debug)]
pub struct DisjointSet {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl DisjointSet {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Merges the sets of `a` and `b`; false if they were already joined.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }
}

/// Kruskal's algorithm on the complete graph. Edges are scanned in
/// `(weight, i, j)` order, so equal weights resolve to the smallest pair.
pub fn kruskal_mst(d: &DistanceMatrix) -> Result<SpanningTree> {
    let n = d.n();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "{n} nodes, need at least 2"
        )));
    }
    let mut candidates = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            candidates.push(Edge {
                i,
                j,
                weight: d.get(i, j),
            });
        }
    }
    candidates.sort_by(|a, b| {
        a.weight
            .total_cmp(&b.weight)
            .then(a.i.cmp(&b.i))
            .then(a.j.cmp(&b.j))
    });

    let mut sets = DisjointSet::new(n);
    let mut edges = Vec::with_capacity(n - 1);
    for e in candidates {
        if sets.union(e.i, e.j) {
            edges.push(e);
            if edges.len() == n - 1 {
                break;
            }
        }
    }
    SpanningTree::from_edges(n, edges)
}

/// `L* = 2·(L − L_min)/(L_max − L_min) − 1`, mapping the degree range onto [−1, 1].
pub fn normalize_degree(degree: usize, min: usize, max: usize) -> f64 {
    let span = (max - min) as f64;
    2.0 * (degree - min) as f64 / span - 1.0
}

/// Normalized degree for every node, in node order.
pub fn normalize_degrees(tree: &SpanningTree) -> Result<Vec<(usize, f64)>> {
    let (min, max) = (tree.min_degree(), tree.max_degree());
    if min == max {
        return Err(Error::DegenerateDegreeRange(min));
    }
    Ok(tree
        .degree()
        .iter()
        .enumerate()
        .map(|(node, &l)| (node, normalize_degree(l, min, max)))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegreeBin {
    pub degree: usize,
    pub count: usize,
    pub probability: f64,
}

/// Empirical distribution over observed degrees, ascending.
pub fn degree_distribution(tree: &SpanningTree) -> Vec<DegreeBin> {
    degree_histogram(tree.degree())
}

pub fn degree_histogram(degrees: &[usize]) -> Vec<DegreeBin> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &k in degrees {
        *counts.entry(k).or_default() += 1;
    }
    let total = degrees.len() as f64;
    counts
        .into_iter()
        .map(|(degree, count)| DegreeBin {
            degree,
            count,
            probability: count as f64 / total,
        })
        .collect()
}

/// Log-log least-squares fit `ln p(k) = intercept + gamma·ln k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawFit {
    pub gamma: f64,
    pub intercept: f64,
    pub r2_loglog: f64,
    pub bins_used: usize,
}

pub fn fit_power_law(dist: &[DegreeBin]) -> Result<PowerLawFit> {
    let points: Vec<(f64, f64)> = dist
        .iter()
        .filter(|b| b.degree > 0 && b.probability > 0.0)
        .map(|b| ((b.degree as f64).ln(), b.probability.ln()))
        .collect();
    if points.len() < 3 {
        return Err(Error::InsufficientSupport(points.len()));
    }
    let m = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / m;
    let my = points.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let gamma = sxy / sxx;
    let intercept = my - gamma * mx;
    let ssr: f64 = points
        .iter()
        .map(|p| (p.1 - intercept - gamma * p.0).powi(2))
        .sum();
    let r2_loglog = if syy > 0.0 {
        (1.0 - ssr / syy).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(PowerLawFit {
        gamma,
        intercept,
        r2_loglog,
        bins_used: points.len(),
    })
}

/// Edge list CSV: `i,j,ticker_i,ticker_j,distance`.
pub fn write_edges<W: Write>(sink: W, tree: &SpanningTree, tickers: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["i", "j", "ticker_i", "ticker_j", "distance"])?;
    for e in tree.edges() {
        w.write_record([
            e.i.to_string(),
            e.j.to_string(),
            tickers[e.i].clone(),
            tickers[e.j].clone(),
            sig(e.weight),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Undirected DOT graph with the distance as edge label.
pub fn write_dot<W: Write>(mut sink: W, tree: &SpanningTree, tickers: &[String]) -> Result<()> {
    writeln!(sink, "graph mst {{")?;
    for (i, t) in tickers.iter().enumerate() {
        writeln!(sink, "  n{i} [label=\"{}\"];", t.replace('"', "\\\""))?;
    }
    for e in tree.edges() {
        writeln!(
            sink,
            "  n{} -- n{} [label=\"{}\"];",
            e.i,
            e.j,
            sig(e.weight)
        )?;
    }
    writeln!(sink, "}}")?;
    Ok(())
}

/// Per-node degrees: `node,ticker,degree,l_star`. `l_star` is left empty
/// when every node has the same degree.
pub fn write_degrees<W: Write>(sink: W, tree: &SpanningTree, tickers: &[String]) -> Result<()> {
    let normalized = normalize_degrees(tree).ok();
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["node", "ticker", "degree", "l_star"])?;
    for (node, &k) in tree.degree().iter().enumerate() {
        let l_star = normalized
            .as_ref()
            .map_or(String::new(), |v| sig(v[node].1));
        w.write_record([
            node.to_string(),
            tickers[node].clone(),
            k.to_string(),
            l_star,
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `node,ticker,degree[,l_star]` back into (tickers, degrees).
pub fn read_degrees<R: Read>(source: R) -> Result<(Vec<String>, Vec<usize>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(source);
    let header = rdr.headers()?.clone();
    if header.get(1) != Some("ticker") || header.get(2) != Some("degree") {
        return Err(Error::Malformed(
            "degree file must have columns node,ticker,degree".into(),
        ));
    }
    let mut tickers = Vec::new();
    let mut degrees = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let k = rec[2].parse().map_err(|_| Error::MalformedNumber {
            line,
            column: "degree".into(),
            value: rec[2].to_string(),
        })?;
        tickers.push(rec[1].to_string());
        degrees.push(k);
    }
    if degrees.is_empty() {
        return Err(Error::Malformed("degree file has no rows".into()));
    }
    Ok((tickers, degrees))
}

pub fn write_degree_distribution<W: Write>(sink: W, dist: &[DegreeBin]) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["degree", "count", "probability"])?;
    for b in dist {
        w.write_record([
            b.degree.to_string(),
            b.count.to_string(),
            sig(b.probability),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Matrix;
    use chrono::NaiveDate;

    fn panel(columns: &[Vec<f64>]) -> ReturnPanel {
        let t = columns[0].len();
        let start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        let dates = (0..t)
            .map(|i| start + chrono::Days::new(i as u64))
            .collect();
        let tickers = (0..columns.len()).map(|j| format!("S{j}")).collect();
        ReturnPanel::new(tickers, dates, Matrix::from_columns(columns).unwrap()).unwrap()
    }

    fn dist(rows: &[Vec<f64>]) -> DistanceMatrix {
        DistanceMatrix::from_matrix(Matrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn correlation_examples() {
        let a = vec![0.1, -0.2, 0.05, 0.3];
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        let c = correlation_matrix(&panel(&[a.clone(), a.clone(), neg])).unwrap();
        assert_eq!(c.get(0, 1), 1.0);
        assert_eq!(c.get(0, 2), -1.0);

        let c = correlation_matrix(&panel(&[vec![1.0, 2.0, 3.0], vec![1.0, 3.0, 2.0]])).unwrap();
        assert!((c.get(0, 1) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn distance_endpoints() {
        assert_eq!(correlation_distance(1.0), 0.0);
        assert_eq!(correlation_distance(-1.0), 2.0);
        assert!((correlation_distance(0.0) - 1.414_213_6).abs() < 1e-7);
        let mut prev = f64::INFINITY;
        for k in 0..=200 {
            let d = correlation_distance(-1.0 + k as f64 / 100.0);
            assert!(d <= prev);
            prev = d;
        }
    }

    #[test]
    fn two_node_tree() {
        let t = kruskal_mst(&dist(&[vec![0.0, 0.7], vec![0.7, 0.0]])).unwrap();
        assert_eq!(t.edges().len(), 1);
        assert_eq!(t.degree(), &[1, 1]);
        assert!(matches!(
            normalize_degrees(&t),
            Err(Error::DegenerateDegreeRange(1))
        ));
    }

    #[test]
    fn ties_resolve_to_smallest_pair() {
        let rows = vec![
            vec![0.0, 1.0, 1.0, 1.0],
            vec![1.0, 0.0, 1.0, 1.0],
            vec![1.0, 1.0, 0.0, 1.0],
            vec![1.0, 1.0, 1.0, 0.0],
        ];
        let t = kruskal_mst(&dist(&rows)).unwrap();
        let pairs: Vec<_> = t.edges().iter().map(|e| (e.i, e.j)).collect();
        assert_eq!(pairs, vec![(0, 1), (0, 2), (0, 3)]);
    }

    fn tree_from_pairs(n: usize, pairs: &[(usize, usize)]) -> SpanningTree {
        let edges = pairs
            .iter()
            .map(|&(i, j)| Edge { i, j, weight: 1.0 })
            .collect();
        SpanningTree::from_edges(n, edges).unwrap()
    }

    #[test]
    fn distributions_of_star_and_path() {
        let star = tree_from_pairs(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]);
        let d = degree_distribution(&star);
        assert_eq!(
            d.iter().map(|b| (b.degree, b.count)).collect::<Vec<_>>(),
            vec![(1, 4), (4, 1)]
        );
        let path = tree_from_pairs(4, &[(0, 1), (1, 2), (2, 3)]);
        let d = degree_distribution(&path);
        assert_eq!(
            d.iter().map(|b| (b.degree, b.count)).collect::<Vec<_>>(),
            vec![(1, 2), (2, 2)]
        );
        assert!((d.iter().map(|b| b.probability).sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(d.iter().map(|b| b.degree * b.count).sum::<usize>(), 6);
    }

    #[test]
    fn normalization_endpoints() {
        let star = tree_from_pairs(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]);
        let l = normalize_degrees(&star).unwrap();
        assert_eq!(l[0], (0, 1.0));
        assert_eq!(l[1], (1, -1.0));
        assert_eq!(normalize_degree(3, 1, 5), 0.0);
    }

    #[test]
    fn from_edges_rejects_cycles() {
        let edges = vec![
            Edge {
                i: 0,
                j: 1,
                weight: 1.0,
            },
            Edge {
                i: 1,
                j: 2,
                weight: 1.0,
            },
            Edge {
                i: 0,
                j: 2,
                weight: 1.0,
            },
        ];
        assert!(SpanningTree::from_edges(4, edges).is_err());
    }

    fn tabulated(exponent: f64, kmax: usize) -> Vec<DegreeBin> {
        let z: f64 = (1..=kmax).map(|k| (k as f64).powf(exponent)).sum();
        (1..=kmax)
            .map(|k| DegreeBin {
                degree: k,
                count: 0,
                probability: (k as f64).powf(exponent) / z,
            })
            .collect()
    }

    #[test]
    fn power_law_exact_inputs() {
        let fit = fit_power_law(&tabulated(-2.36, 10)).unwrap();
        assert!((fit.gamma + 2.36).abs() < 1e-9);
        assert!((fit.r2_loglog - 1.0).abs() < 1e-12);
        assert_eq!(fit.bins_used, 10);
        let fit = fit_power_law(&tabulated(-1.0, 10)).unwrap();
        assert!((fit.gamma + 1.0).abs() < 1e-9);
    }

    #[test]
    fn power_law_needs_three_bins() {
        let two = &tabulated(-2.0, 2);
        assert!(matches!(
            fit_power_law(two),
            Err(Error::InsufficientSupport(2))
        ));
    }

    #[test]
    fn exports() {
        let star = tree_from_pairs(3, &[(0, 1), (0, 2)]);
        let tickers = vec!["A".to_string(), "B".to_string(), "C".to_string()];
        let mut buf = Vec::new();
        write_edges(&mut buf, &star, &tickers).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "i,j,ticker_i,ticker_j,distance\n0,1,A,B,1\n0,2,A,C,1\n"
        );
        let mut buf = Vec::new();
        write_dot(&mut buf, &star, &tickers).unwrap();
        let dot = String::from_utf8(buf).unwrap();
        assert!(dot.starts_with("graph mst {"));
        assert!(dot.contains("n0 -- n2 [label=\"1\"];"));

        let mut buf = Vec::new();
        write_degrees(&mut buf, &star, &tickers).unwrap();
        let (t, d) = read_degrees(buf.as_slice()).unwrap();
        assert_eq!(t, tickers);
        assert_eq!(d, vec![2, 1, 1]);
    }
}
