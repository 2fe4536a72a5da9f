//! Least-squares spline smoothing of raw window subsequences.
//!
//! Each raw subsequence `y(t)` is modelled as a smooth function plus zero-mean
//! noise. The smooth part is fitted in a clamped B-spline basis with equally
//! spaced knots over the canonical grid, optionally with a second-difference
//! penalty on the coefficients (a P-spline). Because every window shares the
//! same grid, the fit is a fixed linear map `y -> S y` which [`Smoother`]
//! precomputes once.

use nalgebra::DMatrix;

use crate::domain::{Curve, StreamBatch, TimeGrid};
use crate::error::{Error, Result};

const MAX_DEGREE: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingConfig {
    /// Number of B-spline basis functions.
    pub basis_size: usize,
    /// Weight of the squared second-difference penalty on the coefficients.
    pub penalty_lambda: f64,
    /// When false, raw values pass through unchanged.
    pub enabled: bool,
}

impl SmoothingConfig {
    /// Defaults for a window of `w` samples: `min(10, w - 2)` basis functions,
    /// no penalty.
    pub fn for_window(w: usize) -> Self {
        Self {
            basis_size: 10.min(w.saturating_sub(2)).max(1),
            penalty_lambda: 0.0,
            enabled: true,
        }
    }

    pub fn disabled(w: usize) -> Self {
        Self {
            enabled: false,
            ..Self::for_window(w)
        }
    }

    pub fn validate(&self, grid: TimeGrid) -> Result<()> {
        if self.basis_size == 0 || self.basis_size > grid.len() {
            return Err(Error::Config(format!(
                "basis size must lie in 1..={}, got {}",
                grid.len(),
                self.basis_size
            )));
        }
        if !(self.penalty_lambda >= 0.0) || !self.penalty_lambda.is_finite() {
            return Err(Error::Config(format!(
                "penalty lambda must be a nonnegative finite number, got {}",
                self.penalty_lambda
            )));
        }
        Ok(())
    }
}

/// Clamped B-spline basis with equally spaced knots on `[lo, hi]`.
///
/// The degree is `min(3, basis_size - 1)`, so small bases degrade to
/// polynomials: one function spans the constants, two the lines, three the
/// quadratics.
#[derive(Debug, Clone)]
pub struct SplineBasis {
    degree: usize,
    knots: Vec<f64>,
    size: usize,
}

impl SplineBasis {
    pub fn new(size: usize, lo: f64, hi: f64) -> Result<Self> {
        if size == 0 {
            return Err(Error::Config("basis size must be positive".into()));
        }
        if !(hi > lo) {
            return Err(Error::Config(format!("empty basis domain [{lo}, {hi}]")));
        }
        let degree = MAX_DEGREE.min(size - 1);
        let interior = size - degree - 1;
        let mut knots = Vec::with_capacity(size + degree + 1);
        knots.extend(std::iter::repeat_n(lo, degree + 1));
        for k in 1..=interior {
            knots.push(lo + (hi - lo) * k as f64 / (interior + 1) as f64);
        }
        knots.extend(std::iter::repeat_n(hi, degree + 1));
        Ok(Self {
            degree,
            knots,
            size,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    fn span_index(&self, x: f64) -> usize {
        let p = self.degree;
        let n = self.size - 1;
        if x >= self.knots[n + 1] {
            return n;
        }
        if x <= self.knots[p] {
            return p;
        }
        // knots[p..=n+1] is nondecreasing; find the last i with knots[i] <= x
        let mut lo = p;
        let mut hi = n + 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if x < self.knots[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    }

    /// Values of all basis functions at `x`.
    pub fn evaluate(&self, x: f64) -> Vec<f64> {
        let p = self.degree;
        let span = self.span_index(x);
        let mut local = vec![0.0; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        local[0] = 1.0;
        for j in 1..=p {
            left[j] = x - self.knots[span + 1 - j];
            right[j] = self.knots[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let temp = if denom == 0.0 { 0.0 } else { local[r] / denom };
                local[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            local[j] = saved;
        }
        let mut out = vec![0.0; self.size];
        for (r, v) in local.into_iter().enumerate() {
            out[span - p + r] = v;
        }
        out
    }

    /// Design matrix with one row per grid point.
    pub fn design_matrix(&self, grid: TimeGrid) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(grid.len(), self.size);
        for (i, x) in grid.points().enumerate() {
            for (j, v) in self.evaluate(x).into_iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        m
    }
}

/// Precomputed linear smoother for one grid and configuration.
#[derive(Debug, Clone)]
pub struct Smoother {
    grid: TimeGrid,
    cfg: SmoothingConfig,
    hat: Option<DMatrix<f64>>,
}

impl Smoother {
    pub fn new(grid: TimeGrid, cfg: SmoothingConfig) -> Result<Self> {
        cfg.validate(grid)?;
        if !cfg.enabled {
            return Ok(Self {
                grid,
                cfg,
                hat: None,
            });
        }
        let basis = SplineBasis::new(cfg.basis_size, 0.0, grid.span())?;
        let design = basis.design_matrix(grid);
        let w = grid.len();
        let m = basis.len();

        // Penalized least squares as an augmented ordinary problem:
        // minimize |B c - y|^2 + lambda |D c|^2 = |[B; sqrt(lambda) D] c - [y; 0]|^2
        let n_pen = if cfg.penalty_lambda > 0.0 && m >= 3 { m - 2 } else { 0 };
        let mut augmented = DMatrix::zeros(w + n_pen, m);
        augmented.view_mut((0, 0), (w, m)).copy_from(&design);
        let root = cfg.penalty_lambda.sqrt();
        for r in 0..n_pen {
            augmented[(w + r, r)] = root;
            augmented[(w + r, r + 1)] = -2.0 * root;
            augmented[(w + r, r + 2)] = root;
        }
        let svd = augmented.svd(true, true);
        let tol = svd.singular_values.max() * 1e-12 * (w + n_pen).max(m) as f64;
        let pinv = svd
            .pseudo_inverse(tol)
            .map_err(|e| Error::Config(format!("smoothing system is degenerate: {e}")))?;
        let coef_map = pinv.columns(0, w).into_owned();
        let hat = design * coef_map;
        Ok(Self {
            grid,
            cfg,
            hat: Some(hat),
        })
    }

    pub fn config(&self) -> SmoothingConfig {
        self.cfg
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn fit(&self, raw: &[f64]) -> Result<Curve> {
        if raw.len() != self.grid.len() {
            return Err(Error::Data(format!(
                "subsequence has {} samples, expected {}",
                raw.len(),
                self.grid.len()
            )));
        }
        if let Some(t) = raw.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite sample at offset {t}")));
        }
        let Some(hat) = &self.hat else {
            return Curve::new(self.grid, raw.to_vec());
        };
        let fitted = (0..raw.len())
            .map(|i| hat.row(i).iter().zip(raw).map(|(h, y)| h * y).sum())
            .collect();
        Curve::new(self.grid, fitted)
    }

    pub fn fit_batch(&self, batch: &StreamBatch) -> Result<Vec<Curve>> {
        batch
            .raw()
            .iter()
            .enumerate()
            .map(|(i, row)| {
                self.fit(row).map_err(|e| match e {
                    Error::Data(msg) => Error::Data(format!(
                        "stream {i}, window {}: {msg}",
                        batch.window().index
                    )),
                    other => other,
                })
            })
            .collect()
    }
}

/// Fits the functional subsequence of one raw window subsequence.
pub fn smooth_subsequence(raw: &[f64], grid: TimeGrid, cfg: SmoothingConfig) -> Result<Curve> {
    Smoother::new(grid, cfg)?.fit(raw)
}

/// Fits every stream of a batch; output order follows stream order.
pub fn smooth_batch(batch: &StreamBatch, cfg: SmoothingConfig) -> Result<Vec<Curve>> {
    let grid = TimeGrid::new(batch.window().size)?;
    Smoother::new(grid, cfg)?.fit_batch(batch)
}
