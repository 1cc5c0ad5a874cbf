use super::{distance_matrix, Labels};

/// DBSCAN labels; a point is core when at least `min_pts` points (itself
/// included) lie within `eps`. Border points join the first core cluster that
/// reaches them; the rest stay noise.
pub fn dbscan(points: &[Vec<f64>], eps: f64, min_pts: usize) -> Labels {
    let n = points.len();
    let dist = distance_matrix(points);
    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| dist[i * n + j] <= eps).collect())
        .collect();
    let core: Vec<bool> = neighbors.iter().map(|nb| nb.len() >= min_pts).collect();
    let mut labels: Labels = vec![None; n];
    let mut next = 0;
    for start in 0..n {
        if !core[start] || labels[start].is_some() {
            continue;
        }
        labels[start] = Some(next);
        let mut stack = vec![start];
        while let Some(p) = stack.pop() {
            for &q in &neighbors[p] {
                if labels[q].is_none() {
                    labels[q] = Some(next);
                    if core[q] {
                        stack.push(q);
                    }
                }
            }
        }
        next += 1;
    }
    labels
}
