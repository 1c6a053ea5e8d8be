//! Cluster matrices, cluster extraction and recovery metrics.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm_model::SeparationReport;

/// 1-based cluster labels in which every label `1..=K` is used.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Labeling(Vec<usize>);

impl Labeling {
    pub fn new(labels: Vec<usize>) -> Result<Self> {
        let k = labels.iter().copied().max().unwrap_or(0);
        let mut seen = vec![false; k + 1];
        for &l in &labels {
            if l == 0 {
                return Err(Error::Validation("labels are 1-based; found 0".into()));
            }
            seen[l] = true;
        }
        if let Some(missing) = (1..=k).find(|&l| !seen[l]) {
            return Err(Error::Validation(format!(
                "label {missing} is unused (labels must cover 1..={k})"
            )));
        }
        Ok(Self(labels))
    }

    /// Renumbers arbitrary group ids so that groups are numbered 1, 2, … in
    /// order of their smallest member.
    pub fn canonical(ids: &[usize]) -> Self {
        let mut map = std::collections::HashMap::new();
        let labels = ids
            .iter()
            .map(|id| {
                let next = map.len() + 1;
                *map.entry(*id).or_insert(next)
            })
            .collect();
        Self(labels)
    }

    pub fn labels(&self) -> &[usize] {
        &self.0
    }

    pub fn n(&self) -> usize {
        self.0.len()
    }

    pub fn k(&self) -> usize {
        self.0.iter().copied().max().unwrap_or(0)
    }

    /// Sizes `n_1, …, n_K`.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k()];
        for &l in &self.0 {
            sizes[l - 1] += 1;
        }
        sizes
    }

    /// `λ₀ = Σ n_k²`, the number of ones in the cluster matrix.
    pub fn lambda0(&self) -> f64 {
        self.sizes().iter().map(|&s| (s * s) as f64).sum()
    }

    /// Same partition up to renumbering.
    pub fn same_partition(&self, other: &Labeling) -> bool {
        self.n() == other.n() && Labeling::canonical(&self.0) == Labeling::canonical(&other.0)
    }
}

impl TryFrom<Vec<usize>> for Labeling {
    type Error = Error;

    fn try_from(v: Vec<usize>) -> Result<Self> {
        Labeling::new(v)
    }
}

impl From<Labeling> for Vec<usize> {
    fn from(l: Labeling) -> Self {
        l.0
    }
}

/// The 0/1 matrix with a one at `(i, j)` iff samples `i` and `j` share a
/// cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterMatrix {
    entries: Array2<f64>,
}

impl ClusterMatrix {
    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }
}

pub fn cluster_matrix(labels: &Labeling) -> ClusterMatrix {
    let l = labels.labels();
    let n = l.len();
    ClusterMatrix {
        entries: Array2::from_shape_fn((n, n), |(i, j)| f64::from(u8::from(l[i] == l[j]))),
    }
}

struct DisjointSet(Vec<usize>);

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self((0..n).collect())
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.0[i] != i {
            self.0[i] = self.0[self.0[i]];
            i = self.0[i];
        }
        i
    }

    /// Keeps the smaller root so roots are smallest members.
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.0[hi] = lo;
    }

    fn labeling(mut self) -> Labeling {
        let roots: Vec<usize> = (0..self.0.len()).map(|i| self.find(i)).collect();
        Labeling::canonical(&roots)
    }
}

fn check_square(m: ArrayView2<'_, f64>) -> Result<usize> {
    let (r, c) = m.dim();
    if r != c {
        return Err(Error::Shape {
            expected: "square matrix".into(),
            got: format!("{r}×{c}"),
        });
    }
    Ok(r)
}

/// Connected components of the graph with an edge wherever `Ẑ_ij > 1/2`
/// (`i ≠ j`), numbered by smallest member.
pub fn threshold_graph_clusters(z_hat: ArrayView2<'_, f64>) -> Result<Labeling> {
    let n = check_square(z_hat)?;
    let mut ds = DisjointSet::new(n);
    for i in 0..n {
        for j in i + 1..n {
            if z_hat[[i, j]] > 0.5 || z_hat[[j, i]] > 0.5 {
                ds.union(i, j);
            }
        }
    }
    Ok(ds.labeling())
}

/// Euclidean minimum spanning tree (Prim, O(n²)) as `(i, j, length)` with
/// `i < j`.
pub fn minimum_spanning_tree(points: ArrayView2<'_, f64>) -> Vec<(usize, usize, f64)> {
    let n = points.nrows();
    let dist = |i: usize, j: usize| {
        points
            .row(i)
            .iter()
            .zip(points.row(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    };
    let mut in_tree = vec![false; n];
    let mut best = vec![(f64::INFINITY, 0usize); n];
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    if n == 0 {
        return edges;
    }
    in_tree[0] = true;
    for j in 1..n {
        best[j] = (dist(0, j), 0);
    }
    for _ in 1..n {
        let mut next = usize::MAX;
        for j in 0..n {
            if !in_tree[j] && (next == usize::MAX || best[j].0 < best[next].0) {
                next = j;
            }
        }
        let (w, from) = best[next];
        in_tree[next] = true;
        edges.push((from.min(next), from.max(next), w));
        for j in 0..n {
            if !in_tree[j] {
                let d = dist(next, j);
                if d < best[j].0 {
                    best[j] = (d, next);
                }
            }
        }
    }
    edges
}

/// Cuts the `k − 1` longest edges of the Euclidean MST of the rows of
/// `points` (ties: lexicographically smaller endpoint pair first) and returns
/// the components, numbered by smallest member.
pub fn mst_clusters(points: ArrayView2<'_, f64>, k: usize) -> Result<Labeling> {
    let n = points.nrows();
    if k == 0 || k > n {
        return Err(Error::Range { index: k, len: n });
    }
    let mut edges = minimum_spanning_tree(points);
    edges.sort_by(|a, b| b.2.total_cmp(&a.2).then((a.0, a.1).cmp(&(b.0, b.1))));
    let mut ds = DisjointSet::new(n);
    for &(i, j, _) in &edges[k - 1..] {
        ds.union(i, j);
    }
    Ok(ds.labeling())
}

fn check_same_shape(z_hat: ArrayView2<'_, f64>, z_bar: &ClusterMatrix) -> Result<usize> {
    let n = check_square(z_hat)?;
    if n != z_bar.n() {
        return Err(Error::Shape {
            expected: format!("{0}×{0}", z_bar.n()),
            got: format!("{n}×{n}"),
        });
    }
    Ok(n)
}

/// `π_n`: fraction of the `n(n−1)/2` pairs whose predicted edge
/// `1{Ẑ_ij > 1/2}` disagrees with `Z̄`. Zero when `n < 2`.
pub fn edge_error_rate(z_hat: ArrayView2<'_, f64>, z_bar: &ClusterMatrix) -> Result<f64> {
    let n = check_same_shape(z_hat, z_bar)?;
    if n < 2 {
        return Ok(0.0);
    }
    let zb = z_bar.entries();
    let mut wrong = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            if (z_hat[[i, j]] > 0.5) != (zb[[i, j]] == 1.0) {
                wrong += 1;
            }
        }
    }
    Ok(2.0 * wrong as f64 / (n * (n - 1)) as f64)
}

/// `n⁻² ‖Ẑ − Z̄‖₁` (entrywise).
pub fn l1_error_normalized(z_hat: ArrayView2<'_, f64>, z_bar: &ClusterMatrix) -> Result<f64> {
    let n = check_same_shape(z_hat, z_bar)?;
    if n == 0 {
        return Ok(0.0);
    }
    let s: f64 = z_hat
        .iter()
        .zip(z_bar.entries())
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok(s / (n * n) as f64)
}

/// `min(1, 2 exp(−((t − t₀)/c)² n))`, the probability bound for
/// `‖Ẑ − Z̄‖₁ > n² t`.
pub fn theorem1_bound(report: &SeparationReport, t: f64, n: usize) -> Result<f64> {
    if !report.separated {
        return Err(Error::Domain("the bound needs p > q".into()));
    }
    if !(t > report.t0) {
        return Err(Error::Domain(format!(
            "the bound is vacuous for t ≤ t0 = {} (got {t})",
            report.t0
        )));
    }
    let r = (t - report.t0) / report.c;
    Ok((2.0 * (-r * r * n as f64).exp()).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use proptest::prelude::*;

    fn lab(v: &[usize]) -> Labeling {
        Labeling::new(v.to_vec()).unwrap()
    }

    fn report(t0: f64, c: f64) -> SeparationReport {
        SeparationReport {
            p: 0.9,
            q: 0.1,
            sigma: 1.0,
            ell: 1.0,
            kg: 1.8,
            t0,
            c,
            separated: true,
        }
    }

    #[test]
    fn labeling_validation() {
        assert!(Labeling::new(vec![1, 3]).is_err());
        assert!(Labeling::new(vec![0, 1]).is_err());
        assert_eq!(lab(&[2, 1, 2]).sizes(), vec![1, 2]);
        assert_eq!(Labeling::canonical(&[7, 7, 3, 9, 3]).labels(), &[1, 1, 2, 3, 2]);
        assert!(lab(&[2, 2, 1]).same_partition(&lab(&[1, 1, 2])));
        let json = serde_json::to_string(&lab(&[1, 2])).unwrap();
        assert_eq!(json, "[1,2]");
        assert!(serde_json::from_str::<Labeling>("[2,2]").is_err());
    }

    #[test]
    fn cluster_matrix_examples() {
        let z = cluster_matrix(&lab(&[1, 1, 2]));
        assert_eq!(z.entries(), &array![[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        assert_eq!(cluster_matrix(&lab(&[1; 4])).entries(), &Array2::<f64>::ones((4, 4)));
        let l = lab(&[1, 1, 2, 2, 2]);
        assert_eq!(l.lambda0(), 13.0);
        assert_eq!(cluster_matrix(&l).entries().sum(), 13.0);
    }

    #[test]
    fn threshold_examples() {
        let zbar = cluster_matrix(&lab(&[1, 1, 2, 2, 2]));
        assert_eq!(threshold_graph_clusters(zbar.entries().view()).unwrap(), lab(&[1, 1, 2, 2, 2]));
        let mut z = Array2::from_elem((4, 4), 0.4);
        z.diag_mut().fill(1.0);
        assert_eq!(threshold_graph_clusters(z.view()).unwrap(), lab(&[1, 2, 3, 4]));
        // exactly 1/2 is not an edge
        z.fill(0.5);
        assert_eq!(threshold_graph_clusters(z.view()).unwrap().k(), 4);
        let mut bridged = zbar.entries().clone();
        bridged[[1, 2]] = 0.6;
        bridged[[2, 1]] = 0.6;
        assert_eq!(threshold_graph_clusters(bridged.view()).unwrap(), lab(&[1; 5]));
        assert!(threshold_graph_clusters(Array2::zeros((2, 3)).view()).is_err());
    }

    #[test]
    fn mst_examples() {
        let p = array![[0.0], [1.0], [10.0], [11.0]];
        assert_eq!(mst_clusters(p.view(), 2).unwrap(), lab(&[1, 1, 2, 2]));
        assert_eq!(mst_clusters(p.view(), 1).unwrap(), lab(&[1; 4]));
        assert_eq!(mst_clusters(p.view(), 4).unwrap(), lab(&[1, 2, 3, 4]));
        assert!(matches!(mst_clusters(p.view(), 5), Err(Error::Range { .. })));
        assert!(mst_clusters(p.view(), 0).is_err());
        // equal gaps: the lexicographically first longest edge (0,1) is cut
        let eq = array![[0.0], [1.0], [2.0]];
        assert_eq!(mst_clusters(eq.view(), 2).unwrap(), lab(&[1, 2, 2]));
        let mst = minimum_spanning_tree(p.view());
        let total: f64 = mst.iter().map(|e| e.2).sum();
        assert_eq!(total, 11.0);
    }

    #[test]
    fn error_metric_examples() {
        let l = lab(&[1, 1, 2, 2, 2]);
        let zbar = cluster_matrix(&l);
        let z = zbar.entries().clone();
        assert_eq!(edge_error_rate(z.view(), &zbar).unwrap(), 0.0);
        assert_eq!(l1_error_normalized(z.view(), &zbar).unwrap(), 0.0);
        let mut flip = z.clone();
        flip[[0, 4]] = 1.0;
        flip[[4, 0]] = 1.0;
        assert!((edge_error_rate(flip.view(), &zbar).unwrap() - 0.1).abs() < 1e-15);
        let mut inv = z.mapv(|x| 1.0 - x);
        inv.diag_mut().fill(1.0);
        assert_eq!(edge_error_rate(inv.view(), &zbar).unwrap(), 1.0);
        let zero = Array2::zeros((5, 5));
        let ones = cluster_matrix(&lab(&[1; 5]));
        assert_eq!(l1_error_normalized(zero.view(), &ones).unwrap(), 1.0);
        let noisy = z.mapv(|x| if x == 0.0 { 0.1 } else { x });
        let want = 0.1 * (25.0 - 13.0) / 25.0;
        assert!((l1_error_normalized(noisy.view(), &zbar).unwrap() - want).abs() < 1e-15);
        assert!(edge_error_rate(Array2::zeros((4, 4)).view(), &zbar).is_err());
    }

    #[test]
    fn theorem1_bound_examples() {
        let r = report(0.2, 0.5);
        assert_eq!(theorem1_bound(&r, 0.2 + 1e-9, 50).unwrap(), 1.0);
        let n = 7;
        let at_c = theorem1_bound(&r, 0.2 + 0.5, n).unwrap();
        assert!((at_c - 2.0 * (-(n as f64)).exp()).abs() < 1e-15);
        let t = 1.4;
        let b1 = theorem1_bound(&r, t, 10).unwrap();
        let b2 = theorem1_bound(&r, t, 20).unwrap();
        assert!((b2 - b1 * b1 / 2.0).abs() <= 1e-12 * b2);
        assert!(theorem1_bound(&r, 0.2, 10).is_err());
        assert!(theorem1_bound(&r, 0.1, 10).is_err());
        let mut nosep = r;
        nosep.separated = false;
        assert!(theorem1_bound(&nosep, 1.0, 10).is_err());
    }

    fn labeling() -> impl Strategy<Value = Labeling> {
        (1usize..=5, 1usize..=25).prop_flat_map(|(k, n)| {
            proptest::collection::vec(1..=k, n).prop_map(|v| Labeling::canonical(&v))
        })
    }

    proptest! {
        #[test]
        fn threshold_recovers_labeling(l in labeling()) {
            let z = cluster_matrix(&l);
            let back = threshold_graph_clusters(z.entries().view()).unwrap();
            prop_assert!(back.same_partition(&l));
            let e = z.entries();
            for i in 0..l.n() {
                prop_assert_eq!(e[[i, i]], 1.0);
                for j in 0..l.n() {
                    prop_assert_eq!(e[[i, j]], e[[j, i]]);
                    for m in 0..l.n() {
                        if e[[i, j]] == 1.0 && e[[j, m]] == 1.0 {
                            prop_assert_eq!(e[[i, m]], 1.0);
                        }
                    }
                }
            }
        }

        #[test]
        fn pi_bounded_by_l1(l in labeling(), noise in proptest::collection::vec(0.0f64..1.0, 625)) {
            let n = l.n();
            prop_assume!(n >= 2);
            let zbar = cluster_matrix(&l);
            let mut z = Array2::from_shape_fn((n, n), |(i, j)| noise[i.min(j) * 25 + i.max(j)]);
            z.diag_mut().fill(1.0);
            let pi = edge_error_rate(z.view(), &zbar).unwrap();
            let l1 = l1_error_normalized(z.view(), &zbar).unwrap();
            prop_assert!((0.0..=1.0).contains(&pi));
            prop_assert!(pi <= 2.0 * l1 * n as f64 / (n - 1) as f64 + 1e-12);
        }

        #[test]
        fn mst_isometry_invariant(
            pts in proptest::collection::vec(-10.0f64..10.0, 2..=40),
            angle in 0.0f64..std::f64::consts::TAU,
            shift in (-50.0f64..50.0, -50.0f64..50.0),
            k in 1usize..=6,
        ) {
            let n = pts.len() / 2;
            prop_assume!(n >= 1);
            let k = k.min(n);
            let p = Array2::from_shape_fn((n, 2), |(i, j)| pts[2 * i + j]);
            let (c, s) = (angle.cos(), angle.sin());
            let q = Array2::from_shape_fn((n, 2), |(i, j)| {
                let (x, y) = (p[[i, 0]], p[[i, 1]]);
                if j == 0 { c * x - s * y + shift.0 } else { s * x + c * y + shift.1 }
            });
            // skip near-ties, where rounding may reorder the cut edges
            let mut w: Vec<f64> = minimum_spanning_tree(p.view()).iter().map(|e| e.2).collect();
            w.sort_by(|a, b| b.total_cmp(a));
            prop_assume!(w.windows(2).all(|x| x[0] - x[1] > 1e-9));
            prop_assert_eq!(mst_clusters(p.view(), k).unwrap(), mst_clusters(q.view(), k).unwrap());
        }
    }
}
