//! Off-line phase: weighted k-means over micro-cluster centroids.
//!
//! The criterion is `sum_k n_k * d(centroid_k, macro_centroid(k))` with `d`
//! the boxplot distance. Macro-centroids are component-wise weighted means of
//! their members. The weighted mean is not the minimizer of a sum of
//! unsquared L2 distances, so a reallocation followed by a mean update can
//! raise the criterion, and a partition where no reallocation helps can
//! still be improved by small local changes (moving or swapping inputs,
//! reseeding a group). Iteration therefore alternates nearest-centroid
//! reallocation with such changes, and
//! only ever accepts a partition whose criterion is lower than the current
//! one.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fboxplot::BoxplotCurves;
use crate::snapshot::{SlotSummary, SnapshotCatalog};
use crate::stream::fbp_distance;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacroConfig {
    pub clusters: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Relative decrease of the criterion below which iteration stops.
    pub tol: f64,
}

impl MacroConfig {
    pub fn new(clusters: usize, seed: u64) -> Self {
        Self {
            clusters,
            seed,
            max_iter: 100,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacroSummary {
    pub macro_centroids: Vec<BoxplotCurves>,
    /// Macro index of each input, in input order.
    pub labels: Vec<usize>,
    /// Micro-cluster id of each input, when known.
    pub input_ids: Vec<u64>,
    /// Total input weight of each macro-cluster.
    pub macro_weights: Vec<f64>,
    pub delta: f64,
    pub iterations: usize,
    /// Criterion after initialization and after every accepted iteration.
    pub delta_trace: Vec<f64>,
}

impl MacroSummary {
    fn empty() -> Self {
        Self {
            macro_centroids: Vec::new(),
            labels: Vec::new(),
            input_ids: Vec::new(),
            macro_weights: Vec::new(),
            delta: 0.0,
            iterations: 0,
            delta_trace: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.macro_centroids.is_empty()
    }
}

/// The heterogeneity criterion of a labelled partition.
pub fn heterogeneity(
    points: &[BoxplotCurves],
    weights: &[f64],
    labels: &[usize],
    centroids: &[BoxplotCurves],
) -> Result<f64> {
    points
        .iter()
        .zip(weights)
        .zip(labels)
        .map(|((p, w), &l)| Ok(w * fbp_distance(p, &centroids[l])?))
        .sum()
}

/// Weighted means of each group; every group must be nonempty.
pub fn group_means(
    points: &[BoxplotCurves],
    weights: &[f64],
    labels: &[usize],
    clusters: usize,
) -> Result<Vec<BoxplotCurves>> {
    (0..clusters)
        .map(|c| {
            BoxplotCurves::weighted_mean(
                points
                    .iter()
                    .zip(weights)
                    .zip(labels)
                    .filter(|(_, &l)| l == c)
                    .map(|((p, w), _)| (p, *w)),
            )
        })
        .collect()
}

fn nearest(point: &BoxplotCurves, centroids: &[BoxplotCurves]) -> Result<(usize, f64)> {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = fbp_distance(point, centroid)?;
        if d < best.1 {
            best = (c, d);
        }
    }
    Ok(best)
}

/// Index drawn with probability proportional to `scores`, or `None` when
/// every score is zero.
fn draw(rng: &mut ChaCha8Rng, scores: &[f64]) -> Option<usize> {
    let total: f64 = scores.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let u = rng.gen::<f64>() * total;
    let mut cum = 0.0;
    for (i, s) in scores.iter().enumerate() {
        cum += s;
        if u < cum && *s > 0.0 {
            return Some(i);
        }
    }
    scores.iter().rposition(|&s| s > 0.0)
}

/// Randomized weighted farthest-first traversal: the first seed is drawn
/// with probability proportional to weight, each further seed with
/// probability proportional to `weight * distance to the nearest chosen
/// seed`. Inputs at distance zero from every seed are only drawn once all
/// others are exhausted.
fn farthest_first(points: &[BoxplotCurves], weights: &[f64], clusters: usize, seed: u64) -> Result<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = draw(&mut rng, weights).expect("positive weights");
    let mut chosen = vec![first];
    let mut gap: Vec<f64> = points
        .iter()
        .map(|p| fbp_distance(p, &points[first]))
        .collect::<Result<_>>()?;
    while chosen.len() < clusters {
        let scores: Vec<f64> = gap
            .iter()
            .zip(weights)
            .enumerate()
            .map(|(i, (g, w))| if chosen.contains(&i) { 0.0 } else { g * w })
            .collect();
        let next = match draw(&mut rng, &scores) {
            Some(i) => i,
            None => {
                let rest: Vec<f64> = weights
                    .iter()
                    .enumerate()
                    .map(|(i, w)| if chosen.contains(&i) { 0.0 } else { *w })
                    .collect();
                draw(&mut rng, &rest).expect("fewer seeds than points")
            }
        };
        chosen.push(next);
        for (g, p) in gap.iter_mut().zip(points) {
            *g = g.min(fbp_distance(p, &points[next])?);
        }
    }
    Ok(chosen)
}

/// Moves, into every empty group, the input with the largest weighted
/// distance to its own centroid among inputs whose group has other members.
fn repair_empty(
    points: &[BoxplotCurves],
    weights: &[f64],
    labels: &mut [usize],
    centroids: &[BoxplotCurves],
) -> Result<()> {
    let clusters = centroids.len();
    loop {
        let mut sizes = vec![0usize; clusters];
        for &l in labels.iter() {
            sizes[l] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return Ok(());
        };
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in points.iter().enumerate() {
            if sizes[labels[i]] < 2 {
                continue;
            }
            let score = weights[i] * fbp_distance(p, &centroids[labels[i]])?;
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((i, score));
            }
        }
        let (donor, _) = best.expect("more inputs than groups");
        labels[donor] = empty;
    }
}

fn assign(points: &[BoxplotCurves], weights: &[f64], centroids: &[BoxplotCurves]) -> Result<Vec<usize>> {
    let mut labels = points
        .iter()
        .map(|p| nearest(p, centroids).map(|(c, _)| c))
        .collect::<Result<Vec<_>>>()?;
    repair_empty(points, weights, &mut labels, centroids)?;
    Ok(labels)
}

/// The local change lowering the criterion the most, by at least a relative
/// `tol`: moving one input to another group (groups stay nonempty),
/// swapping two inputs of different groups, or reseeding a group at a
/// single input. Returns the new labels, means and criterion.
fn best_local_move(
    points: &[BoxplotCurves],
    weights: &[f64],
    labels: &[usize],
    clusters: usize,
    delta: f64,
    tol: f64,
) -> Result<Option<(Vec<usize>, Vec<BoxplotCurves>, f64)>> {
    if delta == 0.0 || clusters < 2 {
        return Ok(None);
    }
    let n = points.len();
    // cost of group `g` after removing `out` and adding `inn`
    let cost = |g: usize, out: Option<usize>, inn: Option<usize>| -> Result<f64> {
        let members: Vec<(&BoxplotCurves, f64)> = (0..n)
            .filter(|&i| (labels[i] == g && Some(i) != out) || Some(i) == inn)
            .map(|i| (&points[i], weights[i]))
            .collect();
        let centre = BoxplotCurves::weighted_mean(members.iter().copied())?;
        members.iter().map(|(p, w)| Ok(w * fbp_distance(p, &centre)?)).sum()
    };
    let costs: Vec<f64> = (0..clusters).map(|g| cost(g, None, None)).collect::<Result<_>>()?;
    let mut sizes = vec![0usize; clusters];
    for &l in labels {
        sizes[l] += 1;
    }

    let mut best: Option<(usize, usize, Option<usize>, f64)> = None;
    let mut consider = |i: usize, to: usize, swap: Option<usize>, gain: f64| {
        if gain > tol * delta && best.is_none_or(|(_, _, _, g)| gain > g) {
            best = Some((i, to, swap, gain));
        }
    };
    for i in 0..n {
        let from = labels[i];
        if sizes[from] >= 2 {
            let from_cost = cost(from, Some(i), None)?;
            for to in (0..clusters).filter(|&g| g != from) {
                let gain = costs[from] + costs[to] - from_cost - cost(to, None, Some(i))?;
                consider(i, to, None, gain);
            }
        }
        for j in (i + 1)..n {
            let to = labels[j];
            if to == from {
                continue;
            }
            let gain = costs[from] + costs[to] - cost(from, Some(i), Some(j))? - cost(to, Some(j), Some(i))?;
            consider(i, to, Some(j), gain);
        }
    }
    let mut next = labels.to_vec();
    let mut best_gain = 0.0;
    if let Some((i, to, swap, gain)) = best {
        if let Some(j) = swap {
            next[j] = labels[i];
        }
        next[i] = to;
        best_gain = gain;
    }

    // reseeding: input `i` alone becomes group `g`, whose other members go
    // to their nearest remaining centroid
    let centroids = group_means(points, weights, labels, clusters)?;
    let dist: Vec<Vec<f64>> = points
        .iter()
        .map(|p| centroids.iter().map(|c| fbp_distance(p, c)).collect::<Result<_>>())
        .collect::<Result<_>>()?;
    for i in 0..n {
        for g in 0..clusters {
            if labels[i] == g && sizes[g] == 1 {
                continue;
            }
            let mut cand = labels.to_vec();
            cand[i] = g;
            for j in (0..n).filter(|&j| j != i && labels[j] == g) {
                cand[j] = (0..clusters)
                    .filter(|&h| h != g)
                    .min_by(|&a, &b| dist[j][a].total_cmp(&dist[j][b]))
                    .expect("at least two groups");
            }
            let mut cand_sizes = vec![0usize; clusters];
            for &l in &cand {
                cand_sizes[l] += 1;
            }
            if cand_sizes.contains(&0) {
                continue;
            }
            let cand_delta = heterogeneity(points, weights, &cand, &group_means(points, weights, &cand, clusters)?)?;
            let gain = delta - cand_delta;
            if gain > tol * delta && gain > best_gain {
                best_gain = gain;
                next = cand;
            }
        }
    }
    if best_gain == 0.0 {
        return Ok(None);
    }
    let centroids = group_means(points, weights, &next, clusters)?;
    let next_delta = heterogeneity(points, weights, &next, &centroids)?;
    Ok((next_delta < delta).then_some((next, centroids, next_delta)))
}

/// Weighted k-means on boxplot centroids.
pub fn weighted_kmeans(points: &[BoxplotCurves], weights: &[f64], cfg: MacroConfig) -> Result<MacroSummary> {
    let k = cfg.clusters;
    if k == 0 {
        return Err(Error::Argument("the number of macro-clusters must be positive".into()));
    }
    if points.len() != weights.len() {
        return Err(Error::Argument(format!(
            "{} inputs but {} weights",
            points.len(),
            weights.len()
        )));
    }
    if k > points.len() {
        return Err(Error::Argument(format!(
            "cannot form {k} macro-clusters from {} inputs",
            points.len()
        )));
    }
    if let Some(w) = weights.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
        return Err(Error::Argument(format!("weights must be positive, got {w}")));
    }

    // working on weights that sum to one makes the run independent of an
    // exact common scaling of the weights
    let original = weights;
    let total: f64 = original.iter().sum();
    let unit: Vec<f64> = original.iter().map(|w| w / total).collect();
    let weights = unit.as_slice();

    let seeds = farthest_first(points, weights, k, cfg.seed)?;
    let seed_centroids: Vec<BoxplotCurves> = seeds.iter().map(|&i| points[i].clone()).collect();
    let mut labels = assign(points, weights, &seed_centroids)?;
    let mut centroids = group_means(points, weights, &labels, k)?;
    let mut delta = heterogeneity(points, weights, &labels, &centroids)?;
    let mut trace = vec![delta];
    let mut iterations = 0;

    loop {
        while iterations < cfg.max_iter {
            let next_labels = assign(points, weights, &centroids)?;
            if next_labels == labels {
                break;
            }
            let next_centroids = group_means(points, weights, &next_labels, k)?;
            let next_delta = heterogeneity(points, weights, &next_labels, &next_centroids)?;
            if next_delta > delta {
                break;
            }
            iterations += 1;
            let previous = delta;
            labels = next_labels;
            centroids = next_centroids;
            delta = next_delta;
            trace.push(delta);
            if previous == 0.0 || (previous - delta) / previous < cfg.tol {
                break;
            }
        }
        if iterations >= cfg.max_iter {
            break;
        }
        match best_local_move(points, weights, &labels, k, delta, cfg.tol)? {
            Some((next_labels, next_centroids, next_delta)) => {
                iterations += 1;
                labels = next_labels;
                centroids = next_centroids;
                delta = next_delta;
                trace.push(delta);
            }
            None => break,
        }
    }

    let mut macro_weights = vec![0.0; k];
    for (&l, w) in labels.iter().zip(original) {
        macro_weights[l] += w;
    }
    Ok(MacroSummary {
        macro_centroids: centroids,
        labels,
        input_ids: Vec::new(),
        macro_weights,
        delta: delta * total,
        iterations,
        delta_trace: trace.into_iter().map(|d| d * total).collect(),
    })
}

/// Clusters the active micro-clusters of a slot.
pub fn macro_cluster(inputs: &SlotSummary, cfg: MacroConfig) -> Result<MacroSummary> {
    if inputs.is_empty() {
        return Ok(MacroSummary::empty());
    }
    let points: Vec<BoxplotCurves> = inputs.entries.iter().map(|e| e.centroid.clone()).collect();
    let weights: Vec<f64> = inputs.entries.iter().map(|e| e.weight as f64).collect();
    let mut summary = weighted_kmeans(&points, &weights, cfg)?;
    summary.input_ids = inputs.entries.iter().map(|e| e.id).collect();
    Ok(summary)
}

/// Recovers a slot from the catalog and summarizes it. A slot without
/// activity yields an empty summary.
pub fn summarize_slot(catalog: &SnapshotCatalog, t_lo: u64, t_hi: u64, cfg: MacroConfig) -> Result<MacroSummary> {
    let slot = catalog.recover(t_lo, t_hi)?;
    macro_cluster(&slot, cfg)
}
