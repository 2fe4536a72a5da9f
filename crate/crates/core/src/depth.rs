//! Band depth and modified band depth with bands formed by pairs of curves.
//!
//! Pairs that contain the candidate curve itself are counted, and containment
//! is the closed test `min <= c <= max` with no tolerance.

use crate::domain::Curve;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DepthKind {
    /// Modified band depth.
    #[default]
    Modified,
    /// Band depth (containment over the whole domain).
    Band,
}

impl std::str::FromStr for DepthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mbd" => Ok(DepthKind::Modified),
            "bd" => Ok(DepthKind::Band),
            other => Err(Error::Config(format!("unknown depth '{other}', expected mbd or bd"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthResult {
    /// Depth of each input curve, in input order.
    pub scores: Vec<f64>,
    /// Input indices from deepest to most outlying. Equal scores keep
    /// ascending input order.
    pub ranking: Vec<usize>,
}

impl DepthResult {
    pub fn from_scores(scores: Vec<f64>) -> Self {
        let mut ranking: Vec<usize> = (0..scores.len()).collect();
        // stable sort keeps ascending index among ties
        ranking.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
        Self { scores, ranking }
    }

    pub fn deepest(&self) -> usize {
        self.ranking[0]
    }
}

pub fn depth(curves: &[Curve], kind: DepthKind) -> Result<DepthResult> {
    match kind {
        DepthKind::Modified => modified_band_depth(curves),
        DepthKind::Band => band_depth(curves),
    }
}

fn validate(curves: &[Curve], min: usize) -> Result<()> {
    if curves.len() < min {
        return Err(Error::Argument(format!(
            "depth needs at least {min} curve(s), got {}",
            curves.len()
        )));
    }
    let grid = curves[0].grid();
    if let Some(i) = curves.iter().position(|c| c.grid() != grid) {
        return Err(Error::Data(format!(
            "curve {i} has {} points, curve 0 has {}",
            curves[i].len(),
            grid.len()
        )));
    }
    Ok(())
}

fn choose2(k: u64) -> u64 {
    k * k.saturating_sub(1) / 2
}

/// Modified band depth.
///
/// At each grid point the number of pairs whose band contains curve `i` is
/// `C(n,2) - C(above,2) - C(below,2)`, where `above`/`below` count the curves
/// strictly above/below `i`. Counts are exact integers, so the result is
/// independent of summation order.
pub fn modified_band_depth(curves: &[Curve]) -> Result<DepthResult> {
    validate(curves, 1)?;
    let n = curves.len();
    if n == 1 {
        return Ok(DepthResult::from_scores(vec![1.0]));
    }
    let w = curves[0].len();
    let pairs = choose2(n as u64);
    let mut contained = vec![0u64; n];
    let mut column: Vec<(f64, usize)> = Vec::with_capacity(n);
    for t in 0..w {
        column.clear();
        column.extend(curves.iter().enumerate().map(|(i, c)| (c.values()[t], i)));
        column.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut start = 0;
        while start < n {
            let mut end = start + 1;
            while end < n && column[end].0 == column[start].0 {
                end += 1;
            }
            let below = start as u64;
            let above = (n - end) as u64;
            let count = pairs - choose2(above) - choose2(below);
            for &(_, i) in &column[start..end] {
                contained[i] += count;
            }
            start = end;
        }
    }
    let denom = (pairs * w as u64) as f64;
    Ok(DepthResult::from_scores(
        contained.into_iter().map(|c| c as f64 / denom).collect(),
    ))
}

/// Band depth: fraction of pairs whose band contains the curve at every
/// grid point.
pub fn band_depth(curves: &[Curve]) -> Result<DepthResult> {
    validate(curves, 2)?;
    let n = curves.len();
    let mut contained = vec![0u64; n];
    for p in 0..n {
        for q in (p + 1)..n {
            let (a, b) = (curves[p].values(), curves[q].values());
            for (i, c) in curves.iter().enumerate() {
                if i == p || i == q {
                    contained[i] += 1;
                    continue;
                }
                let inside = c
                    .values()
                    .iter()
                    .zip(a.iter().zip(b))
                    .all(|(&v, (&x, &y))| x.min(y) <= v && v <= x.max(y));
                if inside {
                    contained[i] += 1;
                }
            }
        }
    }
    let pairs = choose2(n as u64) as f64;
    Ok(DepthResult::from_scores(
        contained.into_iter().map(|c| c as f64 / pairs).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::TimeGrid;
    use proptest::prelude::*;

    fn constants(levels: &[f64], w: usize) -> Vec<Curve> {
        let grid = TimeGrid::new(w).unwrap();
        levels
            .iter()
            .map(|&v| Curve::constant(grid, v).unwrap())
            .collect()
    }

    fn curves_from(rows: &[Vec<f64>]) -> Vec<Curve> {
        let grid = TimeGrid::new(rows[0].len()).unwrap();
        rows.iter()
            .map(|r| Curve::new(grid, r.clone()).unwrap())
            .collect()
    }

    #[test]
    fn two_curves_have_full_depth() {
        let c = curves_from(&[vec![0.0, 3.0, 1.0], vec![2.0, -1.0, 1.5]]);
        assert_eq!(modified_band_depth(&c).unwrap().scores, vec![1.0, 1.0]);
        assert_eq!(band_depth(&c).unwrap().scores, vec![1.0, 1.0]);
    }

    #[test]
    fn three_constants() {
        let c = constants(&[0.0, 1.0, 2.0], 4);
        let mbd = modified_band_depth(&c).unwrap();
        assert_eq!(mbd.scores, vec![2.0 / 3.0, 1.0, 2.0 / 3.0]);
        assert_eq!(mbd.ranking, vec![1, 0, 2]);
        let bd = band_depth(&c).unwrap();
        assert_eq!(bd.scores, vec![2.0 / 3.0, 1.0, 2.0 / 3.0]);
        assert_eq!(bd.ranking, vec![1, 0, 2]);
    }

    #[test]
    fn single_curve() {
        let c = constants(&[4.0], 3);
        assert_eq!(modified_band_depth(&c).unwrap().ranking, vec![0]);
        assert!(matches!(band_depth(&c), Err(Error::Argument(_))));
    }

    #[test]
    fn errors() {
        assert!(matches!(modified_band_depth(&[]), Err(Error::Argument(_))));
        let mut c = constants(&[0.0, 1.0], 3);
        c.push(Curve::constant(TimeGrid::new(4).unwrap(), 0.5).unwrap());
        assert!(matches!(modified_band_depth(&c), Err(Error::Data(_))));
        assert!(matches!(band_depth(&c), Err(Error::Data(_))));
    }

    #[test]
    fn nested_family_peaks_in_the_middle() {
        let c = curves_from(&[
            vec![0.0, 0.0, 0.0, 0.0],
            vec![1.0, 2.0, 1.0, 0.5],
            vec![2.0, 3.0, 4.0, 1.0],
            vec![3.0, 3.5, 5.0, 2.0],
            vec![9.0, 9.0, 9.0, 9.0],
        ]);
        let mbd = modified_band_depth(&c).unwrap();
        assert_eq!(mbd.deepest(), 2);
    }

    fn matrix(n: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<Vec<f64>>> {
        (n, 2usize..12).prop_flat_map(|(n, w)| {
            prop::collection::vec(prop::collection::vec(-20i32..20, w), n)
                .prop_map(|m| m.into_iter().map(|r| r.into_iter().map(f64::from).collect()).collect())
        })
    }

    proptest! {
        #[test]
        fn ranking_is_affine_invariant(rows in matrix(2..=7), alpha in 0.1f64..10.0, beta in -50.0f64..50.0) {
            // integer-valued inputs and a positive map keep order and ties
            let c = curves_from(&rows);
            let moved: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| alpha * v + beta).collect()).collect();
            let d = curves_from(&moved);
            prop_assert_eq!(modified_band_depth(&c).unwrap(), modified_band_depth(&d).unwrap());
            prop_assert_eq!(band_depth(&c).unwrap(), band_depth(&d).unwrap());
        }

        #[test]
        fn duplicating_the_deepest_keeps_it_on_top(rows in matrix(1..=7)) {
            let c = curves_from(&rows);
            let first = modified_band_depth(&c).unwrap();
            let mut dup = c.clone();
            dup.push(c[first.deepest()].clone());
            let second = modified_band_depth(&dup).unwrap();
            let pos = second.ranking.iter().position(|&i| i == first.deepest()).unwrap();
            prop_assert!(pos <= 1);
        }

        #[test]
        fn scores_are_probabilities(rows in matrix(2..=7)) {
            let c = curves_from(&rows);
            for r in [modified_band_depth(&c).unwrap(), band_depth(&c).unwrap()] {
                prop_assert!(r.scores.iter().all(|s| (0.0..=1.0).contains(s)));
                for pair in r.ranking.windows(2) {
                    let (a, b) = (r.scores[pair[0]], r.scores[pair[1]]);
                    prop_assert!(a > b || (a == b && pair[0] < pair[1]));
                }
            }
        }
    }
}
