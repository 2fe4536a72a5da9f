//! Grids, curves, windows and stream batches shared by every stage of the
//! pipeline.
//!
//! Every window of size `w` is re-indexed onto the canonical domain
//! `{0, 1, ..., w-1}`. Two windows of equal size therefore share one grid and
//! a pair of curves from different windows can be compared pointwise without
//! any further alignment.

use crate::error::{Error, Result};

/// Canonical sampling grid `{0, 1, ..., w-1}` with unit step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TimeGrid {
    size: usize,
}

impl TimeGrid {
    pub fn new(size: usize) -> Result<Self> {
        if size <= 1 {
            return Err(Error::Config(format!(
                "window size must be greater than 1, got {size}"
            )));
        }
        Ok(Self { size })
    }

    /// Number of grid points, i.e. the window size `w`.
    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    /// Length of the domain, `w - 1`.
    pub fn span(&self) -> f64 {
        (self.size - 1) as f64
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        (0..self.size).map(|i| i as f64)
    }
}

/// Maps a window onto the canonical grid.
///
/// The shift `a = -start_time` is fully determined for equal-size windows, so
/// alignment reduces to re-basing the sample index.
pub fn canonicalize(window: &Window) -> Result<TimeGrid> {
    TimeGrid::new(window.size)
}

/// A real-valued function sampled on a [`TimeGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl Curve {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Data(format!(
                "curve has {} values but the grid has {} points",
                values.len(),
                grid.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite value {} at grid point {pos}",
                values[pos]
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: TimeGrid, value: f64) -> Result<Self> {
        Self::new(grid, vec![value; grid.len()])
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub(crate) fn from_parts_unchecked(grid: TimeGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(grid.len(), values.len());
        Self { grid, values }
    }

    fn check_grid(&self, other: &Curve) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::Data(format!(
                "curves live on different grids ({} vs {} points)",
                self.grid.len(),
                other.grid.len()
            )));
        }
        Ok(())
    }

    /// Pointwise sum.
    pub fn add(&self, other: &Curve) -> Result<Curve> {
        self.check_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Curve::from_parts_unchecked(self.grid, values))
    }

    pub fn scale(&self, factor: f64) -> Curve {
        let values = self.values.iter().map(|v| v * factor).collect();
        Curve::from_parts_unchecked(self.grid, values)
    }

    /// Pointwise weighted mean `sum((w_i / W) * c_i)` with `W = sum(w_i)`.
    /// A single curve, or copies of one curve, come back unchanged.
    pub fn weighted_mean<'a, I>(items: I) -> Result<Curve>
    where
        I: IntoIterator<Item = (&'a Curve, f64)>,
    {
        let items: Vec<(&Curve, f64)> = items.into_iter().collect();
        let Some(&(first, _)) = items.first() else {
            return Err(Error::Argument("weighted mean of no curves".into()));
        };
        let total: f64 = items.iter().map(|(_, w)| w).sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::Argument(format!(
                "weights must have a positive finite sum, got {total}"
            )));
        }
        let mut acc = vec![0.0; first.len()];
        for (curve, w) in &items {
            first.check_grid(curve)?;
            let share = w / total;
            for (a, v) in acc.iter_mut().zip(&curve.values) {
                *a += share * v;
            }
        }
        Ok(Curve::from_parts_unchecked(first.grid, acc))
    }

    /// Pointwise minimum over a nonempty set of curves.
    pub fn pointwise_min<'a, I: IntoIterator<Item = &'a Curve>>(curves: I) -> Result<Curve> {
        Self::pointwise_fold(curves, f64::min)
    }

    /// Pointwise maximum over a nonempty set of curves.
    pub fn pointwise_max<'a, I: IntoIterator<Item = &'a Curve>>(curves: I) -> Result<Curve> {
        Self::pointwise_fold(curves, f64::max)
    }

    fn pointwise_fold<'a, I, F>(curves: I, f: F) -> Result<Curve>
    where
        I: IntoIterator<Item = &'a Curve>,
        F: Fn(f64, f64) -> f64,
    {
        let mut iter = curves.into_iter();
        let first = iter
            .next()
            .ok_or_else(|| Error::Argument("pointwise envelope of no curves".into()))?;
        let mut acc = first.values.clone();
        for curve in iter {
            first.check_grid(curve)?;
            for (a, v) in acc.iter_mut().zip(&curve.values) {
                *a = f(*a, *v);
            }
        }
        Ok(Curve::from_parts_unchecked(first.grid, acc))
    }
}

/// Window `W_j`: samples `[index * size, (index + 1) * size)` of every stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Window {
    pub index: u64,
    pub start_time: u64,
    pub size: usize,
}

impl Window {
    pub fn new(index: u64, size: usize) -> Self {
        Self {
            index,
            start_time: index * size as u64,
            size,
        }
    }
}

/// The raw subsequences of all `n` streams inside one window.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamBatch {
    window: Window,
    raw: Vec<Vec<f64>>,
}

impl StreamBatch {
    pub fn new(window: Window, raw: Vec<Vec<f64>>) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::Data("a batch needs at least one stream".into()));
        }
        for (i, row) in raw.iter().enumerate() {
            if row.len() != window.size {
                return Err(Error::Data(format!(
                    "stream {i} has {} samples in window {}, expected {}",
                    row.len(),
                    window.index,
                    window.size
                )));
            }
            if let Some(t) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::Data(format!(
                    "stream {i} has a non-finite value at offset {t} of window {}",
                    window.index
                )));
            }
        }
        Ok(Self { window, raw })
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn raw(&self) -> &[Vec<f64>] {
        &self.raw
    }

    pub fn n_streams(&self) -> usize {
        self.raw.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_grid_of_three() {
        let grid = canonicalize(&Window::new(0, 3)).unwrap();
        assert_eq!(grid.points().collect::<Vec<_>>(), vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn equal_size_windows_share_a_grid() {
        let a = canonicalize(&Window::new(0, 30)).unwrap();
        let b = canonicalize(&Window::new(5, 30)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 30);
        assert_eq!(a.points().last(), Some(29.0));
        assert_eq!(a.span(), 29.0);
    }

    #[test]
    fn degenerate_window_is_rejected() {
        assert!(matches!(
            canonicalize(&Window::new(0, 1)),
            Err(Error::Config(_))
        ));
        assert!(matches!(TimeGrid::new(0), Err(Error::Config(_))));
    }

    #[test]
    fn windows_do_not_overlap() {
        let w = Window::new(7, 30);
        assert_eq!(w.start_time, 210);
        assert_eq!(Window::new(8, 30).start_time, w.start_time + 30);
    }

    #[test]
    fn curve_rejects_nan_and_bad_length() {
        let grid = TimeGrid::new(3).unwrap();
        assert!(Curve::new(grid, vec![0.0, f64::NAN, 1.0]).is_err());
        assert!(Curve::new(grid, vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn curve_arithmetic() {
        let grid = TimeGrid::new(3).unwrap();
        let a = Curve::new(grid, vec![1.0, 2.0, 3.0]).unwrap();
        let b = Curve::new(grid, vec![0.5, 0.5, 0.5]).unwrap();
        assert_eq!(a.add(&b).unwrap().values(), &[1.5, 2.5, 3.5]);
        assert_eq!(a.scale(2.0).values(), &[2.0, 4.0, 6.0]);
        let m = Curve::weighted_mean([(&a, 1.0), (&b, 1.0)]).unwrap();
        assert_eq!(m.values(), &[0.75, 1.25, 1.75]);
        let other = Curve::constant(TimeGrid::new(4).unwrap(), 0.0).unwrap();
        assert!(matches!(a.add(&other), Err(Error::Data(_))));
    }

    #[test]
    fn envelopes() {
        let grid = TimeGrid::new(2).unwrap();
        let a = Curve::new(grid, vec![0.0, 5.0]).unwrap();
        let b = Curve::new(grid, vec![3.0, 1.0]).unwrap();
        assert_eq!(Curve::pointwise_min([&a, &b]).unwrap().values(), &[0.0, 1.0]);
        assert_eq!(Curve::pointwise_max([&a, &b]).unwrap().values(), &[3.0, 5.0]);
    }

    #[test]
    fn batch_validation() {
        let w = Window::new(0, 2);
        assert!(StreamBatch::new(w, vec![vec![1.0, 2.0], vec![3.0]]).is_err());
        assert!(StreamBatch::new(w, vec![vec![1.0, f64::INFINITY]]).is_err());
        assert!(StreamBatch::new(w, vec![]).is_err());
        let b = StreamBatch::new(w, vec![vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(b.n_streams(), 2);
    }
}
