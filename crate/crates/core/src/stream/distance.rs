use crate::domain::Curve;
use crate::error::{Error, Result};
use crate::fboxplot::BoxplotCurves;

/// Composite trapezoidal rule for samples on a unit-step grid.
pub fn trapezoid_unit(values: &[f64]) -> f64 {
    match values {
        [] | [_] => 0.0,
        [first, inner @ .., last] => inner.iter().sum::<f64>() + 0.5 * (first + last),
    }
}

/// L2 distance `sqrt(int (f - h)^2 dt)` between two curves on the same grid.
pub fn l2_distance(f: &Curve, h: &Curve) -> Result<f64> {
    if f.grid() != h.grid() {
        return Err(Error::Data(format!(
            "cannot compare curves on {} and {} point grids",
            f.len(),
            h.len()
        )));
    }
    let sq: Vec<f64> = f
        .values()
        .iter()
        .zip(h.values())
        .map(|(a, b)| (a - b) * (a - b))
        .collect();
    Ok(trapezoid_unit(&sq).sqrt())
}

/// Distance between two functional boxplots: the sum of the L2 distances of
/// the five corresponding components after aligning both windows on the
/// canonical grid.
pub fn fbp_distance(a: &BoxplotCurves, b: &BoxplotCurves) -> Result<f64> {
    a.components()
        .iter()
        .zip(b.components())
        .map(|(f, h)| l2_distance(f, h))
        .sum()
}
