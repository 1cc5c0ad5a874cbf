//! Helpers shared by the integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use spoofgraph_core::gnn::GnnModel;
use spoofgraph_core::neural::{DenseLayer, Parameterized};
use spoofgraph_core::survey::{generate_survey, write_survey_csv, SurveyConfig};

/// Writes the default synthetic survey into `dir` and returns its path.
pub fn write_survey(dir: &Path) -> PathBuf {
    let rows = generate_survey(&SurveyConfig::default()).unwrap();
    let path = dir.join("survey.csv");
    let file = std::fs::File::create(&path).unwrap();
    write_survey_csv(&rows, std::io::BufWriter::new(file)).unwrap();
    path
}

#[allow(clippy::needless_range_loop)]
fn dense_relu(layer: &DenseLayer, x: &[f64]) -> Vec<f64> {
    assert_eq!(x.len(), layer.in_dim);
    (0..layer.out_dim)
        .map(|o| {
            let mut z = layer.bias[o];
            for i in 0..layer.in_dim {
                z += layer.weights[o * layer.in_dim + i] * x[i];
            }
            z.max(0.0)
        })
        .collect()
}

/// Literal transcription of the message-passing update, one node and one
/// edge at a time, with node features `v / (k - 1)`.
pub fn reference_gnn_forward(model: &GnnModel, k: usize, edges: &[(usize, usize)]) -> f64 {
    let mut h: Vec<Vec<f64>> = (0..k).map(|v| vec![v as f64 / (k - 1) as f64]).collect();
    for layer in &model.layers {
        let g1 = &layer.g1.layers()[0];
        let g2 = &layer.g2.layers()[0];
        let mut next = Vec::new();
        for v in 0..k {
            let mut agg = vec![0.0; g2.out_dim];
            for &(a, b) in edges {
                let u = if a == v {
                    b
                } else if b == v {
                    a
                } else {
                    continue;
                };
                let input: Vec<f64> = h[v].iter().chain(&h[u]).copied().collect();
                for (s, m) in agg.iter_mut().zip(dense_relu(g2, &input)) {
                    *s += m;
                }
            }
            let input: Vec<f64> = h[v].iter().chain(&agg).copied().collect();
            next.push(dense_relu(g1, &input));
        }
        h = next;
    }
    let r = &model.readout.layers()[0];
    let mut out = r.bias[0];
    for j in 0..r.in_dim {
        let mean: f64 = h.iter().map(|row| row[j]).sum::<f64>() / k as f64;
        out += r.weights[j] * mean;
    }
    out
}

/// Relative error `|a - n| / max(|a|, |n|, floor)`.
pub fn rel_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Largest relative error between `analytic` and central differences of `f`
/// with step `h`, over every parameter selected by `pick(slice, index)`.
pub fn max_fd_error<M, F, P>(model: &M, analytic: &[Vec<f64>], h: f64, floor: f64, mut f: F, mut pick: P) -> (f64, usize)
where
    M: Parameterized + Clone,
    F: FnMut(&M) -> f64,
    P: FnMut(usize, usize) -> bool,
{
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for (si, grad) in analytic.iter().enumerate() {
        for (pi, &a) in grad.iter().enumerate() {
            if !pick(si, pi) {
                continue;
            }
            let orig = probe.param_slices()[si][pi];
            probe.param_slices_mut()[si][pi] = orig + h;
            let up = f(&probe);
            probe.param_slices_mut()[si][pi] = orig - h;
            let down = f(&probe);
            probe.param_slices_mut()[si][pi] = orig;
            worst = worst.max(rel_error(a, (up - down) / (2.0 * h), floor));
            checked += 1;
        }
    }
    (worst, checked)
}
