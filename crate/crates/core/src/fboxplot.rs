//! Functional boxplots: the five-curve summary of the curves of one window.

use crate::depth::{depth, DepthKind, DepthResult};
use crate::domain::{Curve, TimeGrid, Window};
use crate::error::{Error, Result};

/// Names of the five components in their fixed serialization order.
pub const COMPONENT_NAMES: [&str; 5] = [
    "envelope_min",
    "box_lower",
    "median",
    "box_upper",
    "envelope_max",
];

/// The five component curves of a functional boxplot.
///
/// Pointwise `envelope_min <= box_lower <= median <= box_upper <= envelope_max`
/// for every boxplot built from data and for every weighted mean of such
/// boxplots.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxplotCurves {
    pub envelope_min: Curve,
    pub box_lower: Curve,
    pub median: Curve,
    pub box_upper: Curve,
    pub envelope_max: Curve,
}

impl BoxplotCurves {
    pub fn new(components: [Curve; 5]) -> Result<Self> {
        let [envelope_min, box_lower, median, box_upper, envelope_max] = components;
        let grid = envelope_min.grid();
        for c in [&box_lower, &median, &box_upper, &envelope_max] {
            if c.grid() != grid {
                return Err(Error::Data(format!(
                    "boxplot components on different grids ({} vs {} points)",
                    grid.len(),
                    c.len()
                )));
            }
        }
        Ok(Self {
            envelope_min,
            box_lower,
            median,
            box_upper,
            envelope_max,
        })
    }

    /// All five components equal to one curve.
    pub fn degenerate(curve: Curve) -> Self {
        Self {
            envelope_min: curve.clone(),
            box_lower: curve.clone(),
            median: curve.clone(),
            box_upper: curve.clone(),
            envelope_max: curve,
        }
    }

    pub fn grid(&self) -> TimeGrid {
        self.median.grid()
    }

    /// Components in serialization order.
    pub fn components(&self) -> [&Curve; 5] {
        [
            &self.envelope_min,
            &self.box_lower,
            &self.median,
            &self.box_upper,
            &self.envelope_max,
        ]
    }

    pub fn into_components(self) -> [Curve; 5] {
        [
            self.envelope_min,
            self.box_lower,
            self.median,
            self.box_upper,
            self.envelope_max,
        ]
    }

    pub fn map(&self, mut f: impl FnMut(&Curve) -> Curve) -> Self {
        Self {
            envelope_min: f(&self.envelope_min),
            box_lower: f(&self.box_lower),
            median: f(&self.median),
            box_upper: f(&self.box_upper),
            envelope_max: f(&self.envelope_max),
        }
    }

    /// Component-wise weighted pointwise mean.
    pub fn weighted_mean<'a, I>(items: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a BoxplotCurves, f64)>,
    {
        let items: Vec<(&BoxplotCurves, f64)> = items.into_iter().collect();
        if items.is_empty() {
            return Err(Error::Argument("mean of no boxplots".into()));
        }
        if let Some((_, w)) = items.iter().find(|(_, w)| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::Argument(format!("weights must be positive, got {w}")));
        }
        let grid = items[0].0.grid();
        if let Some((b, _)) = items.iter().find(|(b, _)| b.grid() != grid) {
            return Err(Error::Data(format!(
                "cannot average boxplots on {} and {} point grids",
                grid.len(),
                b.grid().len()
            )));
        }
        let mut out = Vec::with_capacity(5);
        for k in 0..5 {
            out.push(Curve::weighted_mean(
                items.iter().map(|(b, w)| (b.components()[k], *w)),
            )?);
        }
        let components: [Curve; 5] = out.try_into().expect("five components");
        Self::new(components)
    }

    /// First grid index where the component ordering is violated, if any.
    pub fn ordering_violation(&self) -> Option<usize> {
        let c = self.components();
        (0..self.grid().len()).find(|&t| c.windows(2).any(|p| p[0].values()[t] > p[1].values()[t]))
    }
}

/// Functional boxplot of one window's curves.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalBoxplot {
    pub curves: BoxplotCurves,
    pub window: Window,
    pub n_source_curves: usize,
}

impl FunctionalBoxplot {
    pub fn grid(&self) -> TimeGrid {
        self.curves.grid()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FenceConfig {
    /// Multiple of the pointwise box height added beyond each box bound.
    pub fence_factor: f64,
    /// When false the envelopes are the pointwise extremes of all curves.
    pub outlier_removal: bool,
}

impl Default for FenceConfig {
    fn default() -> Self {
        Self {
            fence_factor: 1.5,
            outlier_removal: true,
        }
    }
}

impl FenceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fence_factor >= 0.0) {
            return Err(Error::Config(format!(
                "fence factor must be nonnegative, got {}",
                self.fence_factor
            )));
        }
        Ok(())
    }
}

/// Number of curves in the central region, `ceil(n / 2)`.
pub fn central_count(n: usize) -> usize {
    n.div_ceil(2)
}

/// Bounds of the 50% central region: pointwise min and max over the
/// `ceil(n/2)` deepest curves.
pub fn central_region(curves: &[Curve], depth: &DepthResult) -> Result<(Curve, Curve)> {
    if curves.is_empty() {
        return Err(Error::Argument("central region of no curves".into()));
    }
    if depth.ranking.len() != curves.len() {
        return Err(Error::Argument(format!(
            "depth ranks {} curves but {} were given",
            depth.ranking.len(),
            curves.len()
        )));
    }
    let deepest = &depth.ranking[..central_count(curves.len())];
    let lower = Curve::pointwise_min(deepest.iter().map(|&i| &curves[i]))?;
    let upper = Curve::pointwise_max(deepest.iter().map(|&i| &curves[i]))?;
    Ok((lower, upper))
}

/// Indices of curves that leave the fence `[lower - f*h, upper + f*h]` at any
/// grid point, `h` being the pointwise box height.
pub fn flag_outliers(curves: &[Curve], lower: &Curve, upper: &Curve, fence_factor: f64) -> Vec<usize> {
    let (lo, hi) = (lower.values(), upper.values());
    curves
        .iter()
        .enumerate()
        .filter(|(_, c)| {
            c.values().iter().enumerate().any(|(t, &v)| {
                let h = hi[t] - lo[t];
                v > hi[t] + fence_factor * h || v < lo[t] - fence_factor * h
            })
        })
        .map(|(i, _)| i)
        .collect()
}

/// Builds the functional boxplot of one window.
pub fn build_fbp(
    curves: &[Curve],
    window: Window,
    depth_kind: DepthKind,
    fence: FenceConfig,
) -> Result<FunctionalBoxplot> {
    if curves.is_empty() {
        return Err(Error::Argument("cannot build a boxplot from no curves".into()));
    }
    fence.validate()?;
    // band depth is undefined for one curve; the single curve is its own median
    let ranks = if curves.len() == 1 {
        DepthResult::from_scores(vec![1.0])
    } else {
        depth(curves, depth_kind)?
    };
    let (box_lower, box_upper) = central_region(curves, &ranks)?;
    let median = curves[ranks.deepest()].clone();

    let (envelope_min, envelope_max) = if fence.outlier_removal {
        let outliers = flag_outliers(curves, &box_lower, &box_upper, fence.fence_factor);
        let kept: Vec<&Curve> = curves
            .iter()
            .enumerate()
            .filter(|(i, _)| outliers.binary_search(i).is_err())
            .map(|(_, c)| c)
            .collect();
        if kept.is_empty() {
            (box_lower.clone(), box_upper.clone())
        } else {
            (
                Curve::pointwise_min(kept.iter().copied())?,
                Curve::pointwise_max(kept.iter().copied())?,
            )
        }
    } else {
        (Curve::pointwise_min(curves)?, Curve::pointwise_max(curves)?)
    };

    Ok(FunctionalBoxplot {
        curves: BoxplotCurves {
            envelope_min,
            box_lower,
            median,
            box_upper,
            envelope_max,
        },
        window,
        n_source_curves: curves.len(),
    })
}

/// Weighted component-wise mean of boxplots.
///
/// The result takes the window of the last input and the weighted mean of the
/// source-curve counts, rounded.
pub fn mean_fbp(fbps: &[FunctionalBoxplot], weights: &[f64]) -> Result<FunctionalBoxplot> {
    if fbps.is_empty() {
        return Err(Error::Argument("mean of no boxplots".into()));
    }
    if fbps.len() != weights.len() {
        return Err(Error::Argument(format!(
            "{} boxplots but {} weights",
            fbps.len(),
            weights.len()
        )));
    }
    let curves = BoxplotCurves::weighted_mean(fbps.iter().map(|f| &f.curves).zip(weights.iter().copied()))?;
    let total: f64 = weights.iter().sum();
    let n = fbps
        .iter()
        .zip(weights)
        .map(|(f, w)| f.n_source_curves as f64 * w)
        .sum::<f64>()
        / total;
    Ok(FunctionalBoxplot {
        curves,
        window: fbps[fbps.len() - 1].window,
        n_source_curves: (n.round() as usize).max(1),
    })
}
