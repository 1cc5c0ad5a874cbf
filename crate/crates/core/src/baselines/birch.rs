/// Clustering feature: count, linear sum and sum of squared norms.
#[derive(Debug, Clone)]
struct Feature {
    n: f64,
    ls: Vec<f64>,
    ss: f64,
    child: Option<Box<Node>>,
}

#[derive(Debug, Clone, Default)]
struct Node {
    entries: Vec<Feature>,
}

impl Feature {
    fn point(x: &[f64]) -> Self {
        Feature {
            n: 1.0,
            ls: x.to_vec(),
            ss: x.iter().map(|v| v * v).sum(),
            child: None,
        }
    }

    fn centroid(&self) -> Vec<f64> {
        self.ls.iter().map(|v| v / self.n).collect()
    }

    fn absorb_stats(&mut self, other: &Feature) {
        self.n += other.n;
        self.ss += other.ss;
        self.ls.iter_mut().zip(&other.ls).for_each(|(a, b)| *a += b);
    }

    /// Merges when the combined radius stays within `threshold`.
    fn try_merge(&mut self, other: &Feature, threshold: f64) -> bool {
        let n = self.n + other.n;
        let ss = self.ss + other.ss;
        let c2: f64 = self.ls.iter().zip(&other.ls).map(|(a, b)| ((a + b) / n).powi(2)).sum();
        if ss / n - c2 <= threshold * threshold {
            self.absorb_stats(other);
            true
        } else {
            false
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn closest(entries: &[Feature], x: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, e) in entries.iter().enumerate() {
        let d = sq_dist(&e.centroid(), x);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

impl Node {
    /// Inserts a point feature; returns true when the node overflowed.
    fn insert(&mut self, f: Feature, threshold: f64, branching: usize) -> bool {
        if self.entries.is_empty() {
            self.entries.push(f);
            return false;
        }
        let i = closest(&self.entries, &f.centroid());
        if let Some(child) = self.entries[i].child.as_mut() {
            let split = child.insert(f.clone(), threshold, branching);
            if !split {
                self.entries[i].absorb_stats(&f);
                return false;
            }
            let child = *self.entries[i].child.take().unwrap();
            let (a, b) = split_node(child);
            self.entries[i] = a;
            self.entries.insert(i + 1, b);
            return self.entries.len() > branching;
        }
        if self.entries[i].try_merge(&f, threshold) {
            return false;
        }
        self.entries.push(f);
        self.entries.len() > branching
    }

    fn count_leaves(&self) -> usize {
        self.entries
            .iter()
            .map(|e| e.child.as_ref().map_or(1, |c| c.count_leaves()))
            .sum()
    }
}

fn summary(node: Node) -> Feature {
    let dim = node.entries[0].ls.len();
    let mut f = Feature {
        n: 0.0,
        ls: vec![0.0; dim],
        ss: 0.0,
        child: None,
    };
    for e in &node.entries {
        f.absorb_stats(e);
    }
    f.child = Some(Box::new(node));
    f
}

/// Splits around the farthest pair of entry centroids.
fn split_node(node: Node) -> (Feature, Feature) {
    let cents: Vec<Vec<f64>> = node.entries.iter().map(Feature::centroid).collect();
    let (mut fa, mut fb, mut worst) = (0, 0, -1.0);
    for i in 0..cents.len() {
        for j in i + 1..cents.len() {
            let d = sq_dist(&cents[i], &cents[j]);
            if d > worst {
                (fa, fb, worst) = (i, j, d);
            }
        }
    }
    let (mut a, mut b) = (Node::default(), Node::default());
    for (i, e) in node.entries.into_iter().enumerate() {
        let to_a = i == fa || (i != fb && sq_dist(&cents[i], &cents[fa]) <= sq_dist(&cents[i], &cents[fb]));
        if to_a {
            a.entries.push(e);
        } else {
            b.entries.push(e);
        }
    }
    (summary(a), summary(b))
}

/// Number of leaf subclusters of a CF tree built by inserting the points in
/// order.
pub fn birch_count(points: &[Vec<f64>], branching: usize, threshold: f64) -> usize {
    let mut root = Node::default();
    for p in points {
        if root.insert(Feature::point(p), threshold, branching) {
            let (a, b) = split_node(std::mem::take(&mut root));
            root.entries = vec![a, b];
        }
    }
    root.count_leaves()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_points_single_cluster() {
        let pts = vec![vec![1.0, 2.0]; 20];
        assert_eq!(birch_count(&pts, 50, 0.5), 1);
    }

    #[test]
    fn spaced_points_with_small_branching_split_tree() {
        let pts: Vec<Vec<f64>> = (0..40).map(|i| vec![10.0 * i as f64]).collect();
        // every point is its own subcluster even after many node splits
        assert_eq!(birch_count(&pts, 3, 1.0), 40);
        assert_eq!(birch_count(&pts, 50, 1.0), 40);
    }

    #[test]
    fn radius_threshold_controls_merging() {
        let pts = vec![vec![0.0], vec![2.0]];
        // merged radius is 1
        assert_eq!(birch_count(&pts, 50, 1.0), 1);
        assert_eq!(birch_count(&pts, 50, 0.99), 2);
    }
}
