//! Layer-set comparisons: similarity grids, the corresponding-layer sanity
//! check with jackknife errors, and the eigenvector action report.

use std::collections::BTreeMap;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::index::SimilarityIndex;
use crate::reprdata::{
    center_columns, check_same_n, require_centered, spectrum, ActivationMatrix, DEFAULT_RANK_TOL,
};

/// Grid entries within `DEFAULT_TIE_TOL * max(1, |best|)` of the row maximum count as ties.
pub const DEFAULT_TIE_TOL: f64 = 1e-10;

/// Scores of every layer in `a` against every layer in `b`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimilarityMatrixReport {
    pub index: String,
    pub params: SimilarityIndex,
    pub labels_a: Vec<String>,
    pub labels_b: Vec<String>,
    pub rows: usize,
    pub cols: usize,
    /// Row-major, `rows * cols` entries.
    pub scores: Vec<f64>,
    pub symmetrized: bool,
    pub normalized: bool,
    pub metadata: BTreeMap<String, String>,
}

impl SimilarityMatrixReport {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.scores[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.scores[i * self.cols..(i + 1) * self.cols]
    }

    /// Comma-separated grid with a header of column labels and a leading row label.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer");
        for l in &self.labels_b {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for (i, label) in self.labels_a.iter().enumerate() {
            out.push_str(label);
            for v in self.row(i) {
                out.push_str(&format!(",{v:.16e}"));
            }
            out.push('\n');
        }
        out
    }
}

pub fn index_metadata(index: &SimilarityIndex) -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    m.insert("centering".into(), "columns centered before evaluation".into());
    if let Some(k) = index.kernel() {
        let desc = match k {
            crate::kernels::KernelSpec::Linear => "linear".to_string(),
            crate::kernels::KernelSpec::Rbf { bandwidth_fraction } => format!(
                "rbf, sigma = {bandwidth_fraction} x median distance between centered examples"
            ),
        };
        m.insert("kernel".into(), desc);
    }
    if let Some(d) = index.direction_note() {
        m.insert("direction".into(), d.into());
    }
    m.insert("symmetric_index".into(), index.is_symmetric().to_string());
    m
}

fn default_labels(count: usize) -> Vec<String> {
    (0..count).map(|i| format!("layer{i}")).collect()
}

/// Evaluates `index` on every pair; cells are computed in parallel and
/// assembled in row-major order, so the result is schedule independent.
pub fn similarity_matrix(
    layers_a: &[ActivationMatrix],
    layers_b: &[ActivationMatrix],
    index: &SimilarityIndex,
) -> Result<SimilarityMatrixReport> {
    similarity_matrix_labeled(
        layers_a,
        layers_b,
        index,
        default_labels(layers_a.len()),
        default_labels(layers_b.len()),
    )
}

pub fn similarity_matrix_labeled(
    layers_a: &[ActivationMatrix],
    layers_b: &[ActivationMatrix],
    index: &SimilarityIndex,
    labels_a: Vec<String>,
    labels_b: Vec<String>,
) -> Result<SimilarityMatrixReport> {
    similarity_matrix_with_tol(layers_a, layers_b, index, labels_a, labels_b, DEFAULT_RANK_TOL)
}

pub fn similarity_matrix_with_tol(
    layers_a: &[ActivationMatrix],
    layers_b: &[ActivationMatrix],
    index: &SimilarityIndex,
    labels_a: Vec<String>,
    labels_b: Vec<String>,
    rank_tol: f64,
) -> Result<SimilarityMatrixReport> {
    if layers_a.is_empty() || layers_b.is_empty() {
        return Err(Error::validation("layer lists must be non-empty"));
    }
    if labels_a.len() != layers_a.len() || labels_b.len() != layers_b.len() {
        return Err(Error::validation("label count does not match layer count"));
    }
    index.validate()?;
    let first = &layers_a[0];
    for l in layers_a.iter().chain(layers_b) {
        check_same_n(first, l)?;
    }
    let a: Vec<ActivationMatrix> = layers_a.iter().map(center_columns).collect();
    let b: Vec<ActivationMatrix> = layers_b.iter().map(center_columns).collect();
    let (rows, cols) = (a.len(), b.len());
    let scores = (0..rows * cols)
        .into_par_iter()
        .map(|cell| index.evaluate_with_tol(&a[cell / cols], &b[cell % cols], rank_tol).map(|s| s.value))
        .collect::<Result<Vec<f64>>>()?;
    Ok(SimilarityMatrixReport {
        index: index.name().to_string(),
        params: *index,
        labels_a,
        labels_b,
        rows,
        cols,
        scores,
        symmetrized: false,
        normalized: index.is_normalized(),
        metadata: index_metadata(index),
    })
}

/// `S + S^T` for a square grid.
pub fn symmetrize(report: &SimilarityMatrixReport) -> Result<SimilarityMatrixReport> {
    if report.rows != report.cols {
        return Err(Error::validation(format!(
            "cannot symmetrize a {}x{} grid",
            report.rows, report.cols
        )));
    }
    let n = report.rows;
    let mut out = report.clone();
    for i in 0..n {
        for j in 0..n {
            out.scores[i * n + j] = report.get(i, j) + report.get(j, i);
        }
    }
    out.symmetrized = true;
    out.normalized = false;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrespondenceReport {
    /// Fraction of included rows whose best match is the same position.
    pub accuracy: f64,
    pub matches: usize,
    pub included: usize,
    /// Per included row, the argmax position among included columns.
    pub per_layer_argmax: Vec<usize>,
    pub excluded_layers: Vec<String>,
    /// Present when accuracies from several network pairs were aggregated.
    pub jackknife_se: Option<f64>,
}

/// Lowest `j` among entries within the tie tolerance of the row maximum.
pub fn argmax_with_ties(row: &[f64], tie_tol: f64) -> usize {
    let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let slack = tie_tol * best.abs().max(1.0);
    row.iter()
        .position(|&v| v >= best - slack)
        .expect("non-empty row")
}

pub fn correspondence_accuracy(
    report: &SimilarityMatrixReport,
    exclude_labels: &[String],
) -> Result<CorrespondenceReport> {
    correspondence_accuracy_with_tol(report, exclude_labels, DEFAULT_TIE_TOL)
}

/// For each row not excluded, finds the best column (ties to the lowest
/// index) and counts a match when it is the row's own position.
pub fn correspondence_accuracy_with_tol(
    report: &SimilarityMatrixReport,
    exclude_labels: &[String],
    tie_tol: f64,
) -> Result<CorrespondenceReport> {
    if report.rows != report.cols {
        return Err(Error::validation(format!(
            "correspondence needs a square grid, got {}x{}",
            report.rows, report.cols
        )));
    }
    let keep_rows: Vec<usize> = (0..report.rows)
        .filter(|&i| !exclude_labels.contains(&report.labels_a[i]))
        .collect();
    let keep_cols: Vec<usize> = (0..report.cols)
        .filter(|&j| !exclude_labels.contains(&report.labels_b[j]))
        .collect();
    if keep_rows.is_empty() {
        return Err(Error::validation("all layers excluded"));
    }
    if keep_rows.len() != keep_cols.len() {
        return Err(Error::validation(
            "exclusions leave a non-square grid; layer orderings do not match",
        ));
    }
    let mut per_layer_argmax = Vec::with_capacity(keep_rows.len());
    let mut matches = 0;
    for (pos, &i) in keep_rows.iter().enumerate() {
        let row: Vec<f64> = keep_cols.iter().map(|&j| report.get(i, j)).collect();
        let best = argmax_with_ties(&row, tie_tol);
        if best == pos {
            matches += 1;
        }
        per_layer_argmax.push(best);
    }
    let mut excluded: Vec<String> = report
        .labels_a
        .iter()
        .chain(&report.labels_b)
        .filter(|l| exclude_labels.contains(l))
        .cloned()
        .collect();
    excluded.sort();
    excluded.dedup();
    Ok(CorrespondenceReport {
        accuracy: matches as f64 / keep_rows.len() as f64,
        matches,
        included: keep_rows.len(),
        per_layer_argmax,
        excluded_layers: excluded,
        jackknife_se: None,
    })
}

/// Jackknife standard error of the mean from `m >= 2` values.
pub fn jackknife_se(values: &[f64]) -> Result<f64> {
    let m = values.len();
    if m < 2 {
        return Err(Error::validation(format!("jackknife needs at least 2 values, got {m}")));
    }
    let total: f64 = values.iter().sum();
    let loo: Vec<f64> = values.iter().map(|v| (total - v) / (m - 1) as f64).collect();
    Ok(jackknife_se_from_loo(&loo))
}

/// `sqrt((m-1)/m * sum (theta_(-i) - mean theta_(-i))^2)` for leave-one-out estimates.
pub fn jackknife_se_from_loo(loo: &[f64]) -> f64 {
    let m = loo.len() as f64;
    let mean = loo.iter().sum::<f64>() / m;
    ((m - 1.0) / m * loo.iter().map(|t| (t - mean).powi(2)).sum::<f64>()).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZTest {
    pub z: f64,
    pub p_two_sided: f64,
}

/// Compares two accuracies with jackknife errors: `(a - b) / sqrt(se_a^2 + se_b^2)`.
pub fn jackknife_z_test(a: f64, se_a: f64, b: f64, se_b: f64) -> ZTest {
    let denom = (se_a * se_a + se_b * se_b).sqrt();
    let diff = a - b;
    let z = if denom > 0.0 {
        diff / denom
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    };
    let normal = Normal::standard();
    let p = if z.is_infinite() {
        0.0
    } else {
        2.0 * normal.sf(z.abs())
    };
    ZTest { z, p_two_sided: p }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairAccuracy {
    pub network_a: usize,
    pub network_b: usize,
    pub accuracy: f64,
    pub per_layer_argmax: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SanityCheckReport {
    pub index: String,
    pub params: SimilarityIndex,
    /// Mean accuracy over unordered network pairs.
    pub accuracy: f64,
    pub pairs: Vec<PairAccuracy>,
    /// Leave-one-network-out jackknife; needs at least 3 networks.
    pub jackknife_se: Option<f64>,
    pub networks: usize,
    pub layers: usize,
    pub excluded_layers: Vec<String>,
    /// Asymmetric indexes are scored as `s(a_i, b_j) + s(b_j, a_i)`.
    pub symmetrized: bool,
    pub metadata: BTreeMap<String, String>,
}

/// Cross-network grid for the sanity check, symmetrized for asymmetric indexes.
pub fn network_pair_grid(
    a: &[ActivationMatrix],
    b: &[ActivationMatrix],
    labels: &[String],
    index: &SimilarityIndex,
    rank_tol: f64,
) -> Result<SimilarityMatrixReport> {
    let grid = |p: &[ActivationMatrix], q: &[ActivationMatrix]| {
        similarity_matrix_with_tol(p, q, index, labels.to_vec(), labels.to_vec(), rank_tol)
    };
    let mut ab = grid(a, b)?;
    if !index.is_symmetric() {
        let ba = grid(b, a)?;
        let n = ab.rows;
        for i in 0..n {
            for j in 0..n {
                ab.scores[i * n + j] += ba.get(j, i);
            }
        }
        ab.symmetrized = true;
        ab.normalized = false;
    }
    Ok(ab)
}

/// For every unordered pair of networks, how often each layer's most similar
/// layer in the other network is the architecturally corresponding one.
pub fn sanity_check(
    networks: &[Vec<ActivationMatrix>],
    labels: &[String],
    index: &SimilarityIndex,
    exclude_labels: &[String],
) -> Result<SanityCheckReport> {
    sanity_check_with_tol(networks, labels, index, exclude_labels, DEFAULT_RANK_TOL)
}

pub fn sanity_check_with_tol(
    networks: &[Vec<ActivationMatrix>],
    labels: &[String],
    index: &SimilarityIndex,
    exclude_labels: &[String],
    rank_tol: f64,
) -> Result<SanityCheckReport> {
    let m = networks.len();
    if m < 2 {
        return Err(Error::validation(format!("sanity check needs at least 2 networks, got {m}")));
    }
    let layers = networks[0].len();
    if let Some(bad) = networks.iter().position(|n| n.len() != layers) {
        return Err(Error::validation(format!(
            "layer-count mismatch: network 0 has {layers}, network {bad} has {}",
            networks[bad].len()
        )));
    }
    if labels.len() != layers {
        return Err(Error::validation("label count does not match layer count"));
    }
    let pair_list: Vec<(usize, usize)> = (0..m)
        .flat_map(|a| ((a + 1)..m).map(move |b| (a, b)))
        .collect();
    let mut pairs = Vec::with_capacity(pair_list.len());
    let mut excluded = Vec::new();
    for &(a, b) in &pair_list {
        let grid = network_pair_grid(&networks[a], &networks[b], labels, index, rank_tol)?;
        let corr = correspondence_accuracy(&grid, exclude_labels)?;
        excluded = corr.excluded_layers;
        pairs.push(PairAccuracy {
            network_a: a,
            network_b: b,
            accuracy: corr.accuracy,
            per_layer_argmax: corr.per_layer_argmax,
        });
    }
    let accuracy = pairs.iter().map(|p| p.accuracy).sum::<f64>() / pairs.len() as f64;
    let jackknife_se = (m >= 3).then(|| {
        let loo: Vec<f64> = (0..m)
            .map(|left_out| {
                let kept: Vec<f64> = pairs
                    .iter()
                    .filter(|p| p.network_a != left_out && p.network_b != left_out)
                    .map(|p| p.accuracy)
                    .collect();
                kept.iter().sum::<f64>() / kept.len() as f64
            })
            .collect();
        jackknife_se_from_loo(&loo)
    });
    let mut metadata = index_metadata(index);
    metadata.insert("pair_aggregation".into(), "mean over unordered network pairs".into());
    metadata.insert("jackknife".into(), "leave one network (all its pairs) out".into());
    Ok(SanityCheckReport {
        index: index.name().to_string(),
        params: *index,
        accuracy,
        pairs,
        jackknife_se,
        networks: m,
        layers,
        excluded_layers: excluded,
        symmetrized: !index.is_symmetric(),
        metadata,
    })
}

/// How `YY^T` acts on the leading eigenvectors of `XX^T`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumReport {
    /// `||XX^T u_i|| = lambda_i`, descending.
    pub own_scaling: Vec<f64>,
    /// `||YY^T u_i||`.
    pub cross_scaling: Vec<f64>,
    /// Cosine between `u_i` and `YY^T u_i` (0 when `YY^T u_i` vanishes).
    pub cosine: Vec<f64>,
    /// Largest `|1 - cos(u_i, XX^T u_i)|`; zero up to round-off since `u_i` is an eigenvector.
    pub self_consistency: f64,
}

pub fn shared_subspace_spectrum(
    x: &ActivationMatrix,
    y: &ActivationMatrix,
    max_components: usize,
) -> Result<SpectrumReport> {
    check_same_n(x, y)?;
    require_centered(x, "X")?;
    require_centered(y, "Y")?;
    let sp = spectrum(x, max_components);
    if sp.is_empty() {
        return Err(Error::degenerate("X has an empty spectrum"));
    }
    let act = |m: &ActivationMatrix, u: &DVector<f64>| -> DVector<f64> {
        m.data() * (m.data().transpose() * u)
    };
    let mut report = SpectrumReport {
        own_scaling: Vec::with_capacity(sp.len()),
        cross_scaling: Vec::with_capacity(sp.len()),
        cosine: Vec::with_capacity(sp.len()),
        self_consistency: 0.0,
    };
    for (i, lambda) in sp.eigenvalues.iter().enumerate() {
        let u = sp.eigenvectors.column(i).into_owned();
        let own = act(x, &u);
        let own_norm = own.norm();
        if own_norm > 0.0 {
            let c = u.dot(&own) / own_norm;
            report.self_consistency = report.self_consistency.max((1.0 - c).abs());
        }
        let cross = act(y, &u);
        let cross_norm = cross.norm();
        report.own_scaling.push(*lambda);
        report.cross_scaling.push(cross_norm);
        report
            .cosine
            .push(if cross_norm > 0.0 { u.dot(&cross) / cross_norm } else { 0.0 });
    }
    Ok(report)
}
