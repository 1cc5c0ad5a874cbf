use super::{distance_matrix, Labels};

/// OPTICS ordering with unbounded radius followed by xi-steep cluster
/// extraction (with predecessor correction); minimum cluster size equals
/// `min_pts`. Points not covered by any extracted leaf cluster are noise.
pub fn optics_xi(points: &[Vec<f64>], min_pts: usize, xi: f64) -> Labels {
    let n = points.len();
    if n == 0 {
        return Vec::new();
    }
    let dist = distance_matrix(points);
    let (ordering, reach, pred) = optics_order(&dist, n, min_pts);
    let mut plot: Vec<f64> = ordering.iter().map(|&p| reach[p]).collect();
    plot.push(f64::INFINITY);
    let pred_plot: Vec<Option<usize>> = ordering.iter().map(|&p| pred[p]).collect();
    let clusters = xi_clusters(&plot, &pred_plot, &ordering, xi, min_pts, min_pts);

    let mut by_position: Labels = vec![None; n];
    let mut next = 0;
    for (s, e) in clusters {
        if by_position[s..=e].iter().all(Option::is_none) {
            by_position[s..=e].iter_mut().for_each(|l| *l = Some(next));
            next += 1;
        }
    }
    let mut labels = vec![None; n];
    for (pos, &p) in ordering.iter().enumerate() {
        labels[p] = by_position[pos];
    }
    labels
}

/// Returns (ordering, reachability, predecessor) per point.
fn optics_order(dist: &[f64], n: usize, min_pts: usize) -> (Vec<usize>, Vec<f64>, Vec<Option<usize>>) {
    let core: Vec<f64> = (0..n)
        .map(|i| {
            let mut row: Vec<f64> = dist[i * n..(i + 1) * n].to_vec();
            row.sort_by(f64::total_cmp);
            row.get(min_pts.max(1) - 1).copied().unwrap_or(f64::INFINITY)
        })
        .collect();
    let mut reach = vec![f64::INFINITY; n];
    let mut pred = vec![None; n];
    let mut processed = vec![false; n];
    let mut ordering = Vec::with_capacity(n);
    for _ in 0..n {
        // lowest reachability among unprocessed points, ties to the lowest index
        let mut point = usize::MAX;
        for i in 0..n {
            if !processed[i] && (point == usize::MAX || reach[i] < reach[point]) {
                point = i;
            }
        }
        processed[point] = true;
        ordering.push(point);
        if core[point].is_finite() {
            for q in 0..n {
                if processed[q] {
                    continue;
                }
                let r = dist[point * n + q].max(core[point]);
                if r < reach[q] {
                    reach[q] = r;
                    pred[q] = Some(point);
                }
            }
        }
    }
    (ordering, reach, pred)
}

struct SteepDown {
    start: usize,
    end: usize,
    mib: f64,
}

fn filter_sdas(sdas: Vec<SteepDown>, mib: f64, xi_c: f64, plot: &[f64]) -> Vec<SteepDown> {
    if mib.is_infinite() {
        return Vec::new();
    }
    sdas.into_iter()
        .filter(|d| mib <= plot[d.start] * xi_c)
        .map(|mut d| {
            d.mib = d.mib.max(mib);
            d
        })
        .collect()
}

/// Extends a steep region while it stays steep, tolerating at most `min_pts`
/// consecutive non-steep points that do not turn the opposite way.
fn extend_region(steep: &[bool], opposite: &[bool], start: usize, min_pts: usize) -> usize {
    let mut non_steep = 0;
    let mut end = start;
    for i in start..steep.len() {
        if steep[i] {
            non_steep = 0;
            end = i;
        } else if !opposite[i] {
            non_steep += 1;
            if non_steep > min_pts {
                break;
            }
        } else {
            return end;
        }
    }
    end
}

fn correct_predecessor(
    plot: &[f64],
    pred_plot: &[Option<usize>],
    ordering: &[usize],
    s: usize,
    mut e: usize,
) -> Option<(usize, usize)> {
    while s < e {
        if plot[s] > plot[e] {
            return Some((s, e));
        }
        if let Some(p) = pred_plot[e] {
            if ordering[s..e].contains(&p) {
                return Some((s, e));
            }
        }
        e -= 1;
    }
    None
}

/// Cluster intervals (positions in the ordering), smaller clusters first.
fn xi_clusters(
    plot: &[f64],
    pred_plot: &[Option<usize>],
    ordering: &[usize],
    xi: f64,
    min_pts: usize,
    min_cluster_size: usize,
) -> Vec<(usize, usize)> {
    let n = plot.len() - 1;
    let xi_c = 1.0 - xi;
    let ratio: Vec<f64> = (0..n).map(|i| plot[i] / plot[i + 1]).collect();
    let steep_up: Vec<bool> = ratio.iter().map(|&r| r <= xi_c).collect();
    let steep_down: Vec<bool> = ratio.iter().map(|&r| r >= 1.0 / xi_c).collect();
    let down: Vec<bool> = ratio.iter().map(|&r| r > 1.0).collect();
    let up: Vec<bool> = ratio.iter().map(|&r| r < 1.0).collect();

    let mut sdas: Vec<SteepDown> = Vec::new();
    let mut clusters = Vec::new();
    let mut index = 0;
    let mut mib: f64 = 0.0;
    for steep_index in 0..n {
        if !(steep_up[steep_index] || steep_down[steep_index]) || steep_index < index {
            continue;
        }
        mib = plot[index..=steep_index].iter().fold(mib, |m, &v| m.max(v));
        sdas = filter_sdas(sdas, mib, xi_c, plot);
        if steep_down[steep_index] {
            let end = extend_region(&steep_down, &up, steep_index, min_pts);
            sdas.push(SteepDown {
                start: steep_index,
                end,
                mib: 0.0,
            });
            index = end + 1;
            mib = plot[index];
        } else {
            let u_start = steep_index;
            let u_end = extend_region(&steep_up, &down, u_start, min_pts);
            index = u_end + 1;
            mib = plot[index];
            let mut found = Vec::new();
            for d in &sdas {
                let mut c_start = d.start;
                let mut c_end = u_end;
                if plot[c_end + 1] * xi_c < d.mib {
                    continue;
                }
                let d_max = plot[d.start];
                if d_max * xi_c >= plot[c_end + 1] {
                    while plot[c_start + 1] > plot[c_end + 1] && c_start < d.end {
                        c_start += 1;
                    }
                } else if plot[c_end + 1] * xi_c >= d_max {
                    while plot[c_end - 1] > d_max && c_end > u_start {
                        c_end -= 1;
                    }
                }
                let Some((s, e)) = correct_predecessor(plot, pred_plot, ordering, c_start, c_end) else {
                    continue;
                };
                if e - s + 1 < min_cluster_size || s > d.end || e < u_start {
                    continue;
                }
                found.push((s, e));
            }
            found.reverse();
            clusters.extend(found);
        }
    }
    clusters
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::count_with_singletons;

    fn blob(center: f64, n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|i| vec![center + 0.1 * i as f64, center - 0.05 * i as f64]).collect()
    }

    #[test]
    fn ordering_visits_every_point_once() {
        let pts = [blob(0.0, 5), blob(50.0, 4)].concat();
        let d = distance_matrix(&pts);
        let (ord, reach, _) = optics_order(&d, pts.len(), 2);
        let mut sorted = ord.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..pts.len()).collect::<Vec<_>>());
        assert!(reach[ord[0]].is_infinite());
    }

    #[test]
    fn separates_distant_blobs() {
        let pts = [blob(0.0, 6), blob(40.0, 6), blob(-40.0, 6)].concat();
        let labels = optics_xi(&pts, 2, 0.05);
        assert_eq!(count_with_singletons(&labels), 3);
        assert!(labels[..6].iter().all(|l| *l == labels[0] && l.is_some()));
    }
}
