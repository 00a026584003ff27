//! Ward's agglomerative clustering of feature vectors.
//!
//! Clusters are identified the usual way for linkage matrices: leaves are
//! `0..n`, and merge `m` creates cluster `n + m`. A merge's height is the
//! increase in error sum of squares (ESS) it causes.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::features::{FeatureMatrix, UnitRef};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    /// Smaller of the two merged cluster ids.
    pub left: usize,
    pub right: usize,
    /// ΔESS of the merge.
    pub height: f64,
    /// Number of leaves in the merged cluster.
    pub size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    leaves: Vec<UnitRef>,
    merges: Vec<Merge>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn centroid(members: &[usize], rows: &[Vec<f64>]) -> Vec<f64> {
    let mut c = vec![0.0; rows[members[0]].len()];
    for &k in members {
        for (c, v) in c.iter_mut().zip(&rows[k]) {
            *c += v;
        }
    }
    let n = members.len() as f64;
    c.iter_mut().for_each(|v| *v /= n);
    c
}

/// Error sum of squares of a collection of disjoint clusters (row indices).
///
/// The clusters need not cover every row.
pub fn ess(clusters: &[Vec<usize>], rows: &[Vec<f64>]) -> Result<f64> {
    let mut seen = vec![false; rows.len()];
    let mut total = 0.0;
    for cluster in clusters {
        if cluster.is_empty() {
            return Err(Error::EmptyCluster);
        }
        let dim = rows[cluster[0]].len();
        let mut sum = vec![0.0; dim];
        let mut sq = 0.0;
        for &k in cluster {
            if std::mem::replace(&mut seen[k], true) {
                return Err(Error::Overlap(k));
            }
            for (s, v) in sum.iter_mut().zip(&rows[k]) {
                *s += v;
                sq += v * v;
            }
        }
        total += sq - sum.iter().map(|s| s * s).sum::<f64>() / cluster.len() as f64;
    }
    Ok(total.max(0.0))
}

/// Increase in ESS caused by merging clusters `a` and `b`:
/// `|a||b|/(|a|+|b|) · ‖mean(a) − mean(b)‖²`.
pub fn delta_ess(a: &[usize], b: &[usize], rows: &[Vec<f64>]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyCluster);
    }
    if let Some(&k) = a.iter().find(|k| b.contains(k)) {
        return Err(Error::Overlap(k));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    Ok(na * nb / (na + nb) * sq_dist(&centroid(a, rows), &centroid(b, rows)))
}

/// Ward clustering of a feature matrix's rows.
pub fn ward_cluster(fm: &FeatureMatrix) -> Result<Dendrogram> {
    let merges = ward_linkage(fm.rows())?;
    Ok(Dendrogram {
        leaves: fm.units().to_vec(),
        merges,
    })
}

/// Greedy Ward merging over raw rows.
///
/// Every step merges the pair of current clusters with the smallest ΔESS;
/// equal values go to the lexicographically smallest `(lower id, higher id)`.
/// Pairwise ΔESS values are carried forward with the Lance–Williams update.
pub fn ward_linkage(rows: &[Vec<f64>]) -> Result<Vec<Merge>> {
    let n = rows.len();
    if n < 2 {
        return Err(Error::param(format!("Ward clustering needs at least 2 rows, got {n}")));
    }
    // Slot s holds the cluster that started as leaf s, or a merge result.
    let mut id: Vec<usize> = (0..n).collect();
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    let mut dist = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = 0.5 * sq_dist(&rows[i], &rows[j]);
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }

    let mut merges = Vec::with_capacity(n - 1);
    for m in 0..n - 1 {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for i in (0..n).filter(|&i| active[i]) {
            for j in (i + 1..n).filter(|&j| active[j]) {
                let d = dist[i][j];
                let (lo, hi) = (id[i].min(id[j]), id[i].max(id[j]));
                let better = match best {
                    None => true,
                    Some((bd, blo, bhi, _, _)) => d < bd || (d == bd && (lo, hi) < (blo, bhi)),
                };
                if better {
                    best = Some((d, lo, hi, i, j));
                }
            }
        }
        let (height, left, right, a, b) = best.expect("at least two active clusters");
        let (na, nb) = (size[a] as f64, size[b] as f64);
        for k in (0..n).filter(|&k| active[k] && k != a && k != b) {
            let nk = size[k] as f64;
            let d = ((na + nk) * dist[k][a] + (nb + nk) * dist[k][b] - nk * height) / (na + nb + nk);
            let d = d.max(0.0);
            dist[k][a] = d;
            dist[a][k] = d;
        }
        active[b] = false;
        size[a] += size[b];
        id[a] = n + m;
        merges.push(Merge {
            left,
            right,
            height,
            size: size[a],
        });
    }
    Ok(merges)
}

impl Dendrogram {
    /// Rebuilds a dendrogram from a merge list, checking the id, size and
    /// ordering invariants.
    pub fn new(leaves: Vec<UnitRef>, merges: Vec<Merge>) -> Result<Self> {
        let n = leaves.len();
        if n < 2 || merges.len() != n - 1 {
            return Err(Error::Format(format!(
                "{n} leaves need {} merges, got {}",
                n.saturating_sub(1),
                merges.len()
            )));
        }
        let mut sizes = vec![1usize; n];
        let mut used = vec![false; 2 * n - 1];
        for (m, merge) in merges.iter().enumerate() {
            let new_id = n + m;
            if merge.left >= merge.right || merge.right >= new_id {
                return Err(Error::Format(format!("merge {m} references ids out of order")));
            }
            for c in [merge.left, merge.right] {
                if std::mem::replace(&mut used[c], true) {
                    return Err(Error::Format(format!("cluster {c} merged twice")));
                }
            }
            let size = sizes[merge.left] + sizes[merge.right];
            if size != merge.size {
                return Err(Error::Format(format!("merge {m} has size {} but should be {size}", merge.size)));
            }
            sizes.push(size);
        }
        Ok(Dendrogram { leaves, merges })
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves.len()
    }

    pub fn leaves(&self) -> &[UnitRef] {
        &self.leaves
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    pub fn heights(&self) -> impl Iterator<Item = f64> + '_ {
        self.merges.iter().map(|m| m.height)
    }

    pub fn heights_non_decreasing(&self) -> bool {
        self.merges.windows(2).all(|w| w[0].height <= w[1].height)
    }

    /// Leaf ids in drawing order: a depth-first walk from the root, left
    /// child first.
    pub fn leaf_order(&self) -> Vec<usize> {
        let n = self.n_leaves();
        let mut order = Vec::with_capacity(n);
        let mut stack = vec![2 * n - 2];
        while let Some(c) = stack.pop() {
            if c < n {
                order.push(c);
            } else {
                let m = &self.merges[c - n];
                stack.push(m.right);
                stack.push(m.left);
            }
        }
        order
    }

    /// Cluster label per leaf after undoing the last `c − 1` merges. Labels
    /// are numbered by each cluster's smallest leaf id.
    pub fn partition(&self, c: usize) -> Result<Vec<usize>> {
        let n = self.n_leaves();
        if c == 0 || c > n {
            return Err(Error::ClusterCount { c, max: n });
        }
        let mut members: Vec<Vec<usize>> = (0..n).map(|k| vec![k]).collect();
        let mut active = vec![true; n];
        for merge in &self.merges[..n - c] {
            let mut joined = std::mem::take(&mut members[merge.left]);
            joined.append(&mut members[merge.right]);
            active[merge.left] = false;
            active[merge.right] = false;
            members.push(joined);
            active.push(true);
        }
        let mut clusters: Vec<&Vec<usize>> = members
            .iter()
            .zip(&active)
            .filter(|(_, &a)| a)
            .map(|(m, _)| m)
            .collect();
        clusters.sort_by_key(|m| m.iter().min().copied());
        let mut labels = vec![0; n];
        for (label, cluster) in clusters.iter().enumerate() {
            for &k in cluster.iter() {
                labels[k] = label;
            }
        }
        Ok(labels)
    }

    /// Newick text with leaves named `L<layer>_<position>` and branch lengths
    /// equal to the height difference between a node and its parent.
    pub fn to_newick(&self) -> String {
        let n = self.n_leaves();
        let height = |c: usize| if c < n { 0.0 } else { self.merges[c - n].height };
        fn node(d: &Dendrogram, c: usize, parent: f64, height: &dyn Fn(usize) -> f64, out: &mut String) {
            let n = d.n_leaves();
            if c < n {
                let u = d.leaves[c];
                out.push_str(&format!("L{}_{}", u.layer, u.position));
            } else {
                let m = &d.merges[c - n];
                out.push('(');
                node(d, m.left, m.height, height, out);
                out.push(',');
                node(d, m.right, m.height, height, out);
                out.push(')');
            }
            out.push_str(&format!(":{}", parent - height(c)));
        }
        let root = 2 * n - 2;
        let m = &self.merges[root - n];
        let mut out = String::from("(");
        node(self, m.left, m.height, &height, &mut out);
        out.push(',');
        node(self, m.right, m.height, &height, &mut out);
        out.push_str(");\n");
        out
    }
}

/// A partition at resolution `c` with per-cluster role vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub c: usize,
    pub n_inputs: usize,
    pub units: Vec<UnitRef>,
    /// Cluster label per unit, in `0..c`.
    pub assignment: Vec<usize>,
    pub sizes: Vec<usize>,
    /// Mean feature vector of each cluster.
    pub centroids: Vec<Vec<f64>>,
}

impl ClusterReport {
    /// Builds a report from any labelling, averaging the given rows.
    pub fn from_assignment(fm: &FeatureMatrix, assignment: Vec<usize>, c: usize) -> Result<Self> {
        if assignment.len() != fm.len() {
            return Err(Error::DimensionMismatch {
                what: "assignment",
                expected: fm.len(),
                actual: assignment.len(),
            });
        }
        if let Some(&bad) = assignment.iter().find(|&&l| l >= c) {
            return Err(Error::ClusterCount { c: bad + 1, max: c });
        }
        let mut sizes = vec![0usize; c];
        let mut centroids = vec![vec![0.0; fm.dim()]; c];
        for (row, &label) in fm.rows().iter().zip(&assignment) {
            sizes[label] += 1;
            for (s, v) in centroids[label].iter_mut().zip(row) {
                *s += v;
            }
        }
        for (centroid, &size) in centroids.iter_mut().zip(&sizes) {
            if size > 0 {
                centroid.iter_mut().for_each(|v| *v /= size as f64);
            }
        }
        Ok(ClusterReport {
            c,
            n_inputs: fm.n_inputs(),
            units: fm.units().to_vec(),
            assignment,
            sizes,
            centroids,
        })
    }

    /// Members of each cluster, by unit index.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.c];
        for (k, &label) in self.assignment.iter().enumerate() {
            out[label].push(k);
        }
        out
    }

    /// `unit,layer,position,cluster` rows.
    pub fn write_assignment_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["unit", "layer", "position", "cluster"])?;
        for (k, (unit, label)) in self.units.iter().zip(&self.assignment).enumerate() {
            w.write_record([
                k.to_string(),
                unit.layer.to_string(),
                unit.position.to_string(),
                label.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    /// `cluster,size,in_1..,out_1..` rows.
    pub fn write_roles_csv<W: Write>(&self, writer: W) -> Result<()> {
        let dim = self.centroids.first().map_or(self.n_inputs, Vec::len);
        let mut w = csv::Writer::from_writer(writer);
        let header = ["cluster".to_string(), "size".to_string()]
            .into_iter()
            .chain((1..=self.n_inputs).map(|i| format!("in_{i}")))
            .chain((1..=dim - self.n_inputs).map(|j| format!("out_{j}")));
        w.write_record(header)?;
        for (m, (centroid, size)) in self.centroids.iter().zip(&self.sizes).enumerate() {
            w.write_record(
                [m.to_string(), size.to_string()]
                    .into_iter()
                    .chain(centroid.iter().map(f64::to_string)),
            )?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

/// Cuts the dendrogram into `c` clusters and computes centroids over the
/// rows of `fm`, which should be the matrix the dendrogram was built from.
pub fn cut(dendrogram: &Dendrogram, fm: &FeatureMatrix, c: usize) -> Result<ClusterReport> {
    if fm.len() != dendrogram.n_leaves() {
        return Err(Error::DimensionMismatch {
            what: "feature rows",
            expected: dendrogram.n_leaves(),
            actual: fm.len(),
        });
    }
    let assignment = dendrogram.partition(c)?;
    ClusterReport::from_assignment(fm, assignment, c)
}

/// Cluster centroids split into their input-side and output-side parts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoleMatrix {
    pub inputs: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
}

impl RoleMatrix {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn role(&self, m: usize) -> Vec<f64> {
        [self.inputs[m].as_slice(), self.outputs[m].as_slice()].concat()
    }
}

pub fn cluster_roles(report: &ClusterReport) -> RoleMatrix {
    let (inputs, outputs) = report
        .centroids
        .iter()
        .map(|c| (c[..report.n_inputs].to_vec(), c[report.n_inputs..].to_vec()))
        .unzip();
    RoleMatrix { inputs, outputs }
}

/// `true` when every cluster of `fine` lies inside a single cluster of `coarse`.
pub fn is_refinement(fine: &[usize], coarse: &[usize]) -> bool {
    if fine.len() != coarse.len() {
        return false;
    }
    let mut parent = std::collections::HashMap::new();
    fine.iter()
        .zip(coarse)
        .all(|(f, c)| *parent.entry(*f).or_insert(*c) == *c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn fm(rows: &[&[f64]]) -> FeatureMatrix {
        FeatureMatrix::from_rows(rows.iter().map(|r| r.to_vec()).collect(), 0).unwrap()
    }

    #[test]
    fn refinement_check() {
        assert!(is_refinement(&[0, 1, 2, 2], &[0, 0, 1, 1]));
        assert!(!is_refinement(&[0, 0, 1], &[0, 1, 1]));
        assert!(!is_refinement(&[0], &[0, 0]));
    }

    #[test]
    fn ess_hand_cases() {
        let rows = vec![vec![0.0, 0.0], vec![2.0, 0.0], vec![4.0, 0.0]];
        assert_eq!(ess(&[vec![0], vec![1], vec![2]], &rows).unwrap(), 0.0);
        assert_abs_diff_eq!(ess(&[vec![0, 1]], &rows).unwrap(), 2.0, epsilon = 1e-12);
        assert!(matches!(ess(&[vec![]], &rows), Err(Error::EmptyCluster)));
        assert!(matches!(ess(&[vec![0, 1], vec![1]], &rows), Err(Error::Overlap(1))));
    }

    #[test]
    fn delta_ess_hand_cases() {
        let rows = vec![vec![0.0, 0.0], vec![2.0, 0.0], vec![4.0, 0.0], vec![1.0, 0.0]];
        assert_abs_diff_eq!(delta_ess(&[0], &[1], &rows).unwrap(), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(delta_ess(&[0, 1], &[2], &rows).unwrap(), 6.0, epsilon = 1e-12);
        assert_eq!(delta_ess(&[0, 1], &[3], &rows).unwrap(), 0.0);
        assert!(matches!(delta_ess(&[0, 1], &[1], &rows), Err(Error::Overlap(1))));
    }

    #[test]
    fn hand_ward_trace() {
        let d = ward_cluster(&fm(&[&[0.0], &[1.0], &[5.0]])).unwrap();
        let m = d.merges();
        assert_eq!((m[0].left, m[0].right, m[0].size), (0, 1, 2));
        assert_abs_diff_eq!(m[0].height, 0.5, epsilon = 1e-12);
        assert_eq!((m[1].left, m[1].right, m[1].size), (2, 3, 3));
        assert_abs_diff_eq!(m[1].height, 13.5, epsilon = 1e-12);
        assert_eq!(d.partition(2).unwrap(), vec![0, 0, 1]);
        assert_eq!(d.leaf_order(), vec![2, 0, 1]);
    }

    #[test]
    fn duplicates_merge_first_at_zero() {
        let d = ward_cluster(&fm(&[&[3.0, 1.0], &[0.0, 0.0], &[3.0, 1.0]])).unwrap();
        assert_eq!(d.merges()[0].height, 0.0);
        assert_eq!((d.merges()[0].left, d.merges()[0].right), (0, 2));
    }

    #[test]
    fn ties_break_on_lowest_ids() {
        // Four corners of a unit square: all four edges tie.
        let d = ward_cluster(&fm(&[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]])).unwrap();
        let m = d.merges();
        assert_eq!((m[0].left, m[0].right), (0, 1));
        assert_eq!((m[1].left, m[1].right), (2, 3));
    }

    #[test]
    fn needs_two_rows() {
        assert!(ward_cluster(&fm(&[&[1.0]])).is_err());
    }

    #[test]
    fn cut_extremes() {
        let f = fm(&[&[0.0, 1.0], &[1.0, 3.0], &[5.0, -1.0], &[2.0, 2.0]]);
        let d = ward_cluster(&f).unwrap();
        let all = cut(&d, &f, 4).unwrap();
        assert_eq!(all.assignment, vec![0, 1, 2, 3]);
        assert_eq!(all.centroids, f.rows().to_vec());
        let one = cut(&d, &f, 1).unwrap();
        assert_eq!(one.sizes, vec![4]);
        assert_abs_diff_eq!(one.centroids[0][0], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(one.centroids[0][1], 1.25, epsilon = 1e-15);
        assert!(matches!(cut(&d, &f, 0), Err(Error::ClusterCount { .. })));
        assert!(matches!(cut(&d, &f, 5), Err(Error::ClusterCount { .. })));
    }

    #[test]
    fn roles_split_centroids() {
        let f = FeatureMatrix::from_rows(vec![vec![0.5, -0.5, 1.0], vec![0.5, -0.5, 1.0], vec![-1.0, 1.0, 0.0]], 2)
            .unwrap();
        let d = ward_cluster(&f).unwrap();
        let report = cut(&d, &f, 2).unwrap();
        let roles = cluster_roles(&report);
        assert_eq!(roles.inputs[0], vec![0.5, -0.5]);
        assert_eq!(roles.outputs[0], vec![1.0]);
        assert_eq!(roles.role(1), vec![-1.0, 1.0, 0.0]);
    }

    #[test]
    fn newick_output() {
        let d = ward_cluster(&fm(&[&[0.0], &[1.0], &[5.0]])).unwrap();
        assert_eq!(d.to_newick(), "(L1_2:13.5,(L1_0:0.5,L1_1:0.5):13);\n");
    }

    #[test]
    fn dendrogram_validation() {
        let leaves: Vec<UnitRef> = (0..3).map(|position| UnitRef { layer: 1, position }).collect();
        let good = vec![
            Merge { left: 0, right: 1, height: 0.5, size: 2 },
            Merge { left: 2, right: 3, height: 1.0, size: 3 },
        ];
        assert!(Dendrogram::new(leaves.clone(), good.clone()).is_ok());
        let mut bad = good.clone();
        bad[1].size = 4;
        assert!(Dendrogram::new(leaves.clone(), bad).is_err());
        let mut bad = good;
        bad[1].right = 4;
        assert!(Dendrogram::new(leaves, bad).is_err());
    }

    #[test]
    fn report_csvs() {
        let f = FeatureMatrix::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]], 1).unwrap();
        let report = ClusterReport::from_assignment(&f, vec![0, 1], 2).unwrap();
        let mut buf = Vec::new();
        report.write_assignment_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "unit,layer,position,cluster\n0,1,0,0\n1,1,1,1\n");
        let mut buf = Vec::new();
        report.write_roles_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "cluster,size,in_1,out_1\n0,1,1,0\n1,1,0,1\n");
    }
}
