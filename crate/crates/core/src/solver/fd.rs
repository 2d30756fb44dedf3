//! Central finite differences, for tests and diagnostics.

use crate::error::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct FdGradient {
    pub gradient: Vec<f64>,
    /// Coordinates where a bound forced a one-sided difference.
    pub one_sided: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FdStencil {
    /// `(f(x+h) - f(x-h)) / 2h`.
    Central2,
    /// `(8(f(x+h) - f(x-h)) - (f(x+2h) - f(x-2h))) / 12h`.
    Central4,
}

/// Differentiates `f` at `point`, staying inside `[lower, upper]` when given.
pub fn gradient_fd<F>(f: F, point: &[f64], h: f64, bounds: Option<(&[f64], &[f64])>) -> Result<FdGradient>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    gradient_fd_stencil(f, point, h, bounds, FdStencil::Central2)
}

/// As [`gradient_fd`] with a chosen central stencil. Coordinates too close to
/// a bound for the wide stencil fall back to the narrower one.
pub fn gradient_fd_stencil<F>(
    f: F,
    point: &[f64],
    h: f64,
    bounds: Option<(&[f64], &[f64])>,
    stencil: FdStencil,
) -> Result<FdGradient>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let mut x = point.to_vec();
    let mut gradient = Vec::with_capacity(point.len());
    let mut one_sided = Vec::new();
    let f0 = if bounds.is_some() { Some(f(point)?) } else { None };
    for j in 0..point.len() {
        let (lo, hi) = bounds.map_or((f64::NEG_INFINITY, f64::INFINITY), |(l, u)| (l[j], u[j]));
        let up = point[j] + h <= hi;
        let down = point[j] - h >= lo;
        let wide = stencil == FdStencil::Central4 && point[j] + 2.0 * h <= hi && point[j] - 2.0 * h >= lo;
        let g = match (up, down) {
            (true, true) if wide => {
                let mut at = |d: f64| {
                    x[j] = point[j] + d;
                    f(&x)
                };
                let near = at(h)? - at(-h)?;
                let far = at(2.0 * h)? - at(-2.0 * h)?;
                (8.0 * near - far) / (12.0 * h)
            }
            (true, true) => {
                x[j] = point[j] + h;
                let fp = f(&x)?;
                x[j] = point[j] - h;
                let fm = f(&x)?;
                (fp - fm) / (2.0 * h)
            }
            (true, false) => {
                one_sided.push(j);
                x[j] = point[j] + h;
                (f(&x)? - f0.unwrap_or_default()) / h
            }
            (false, true) => {
                one_sided.push(j);
                x[j] = point[j] - h;
                (f0.unwrap_or_default() - f(&x)?) / h
            }
            (false, false) => {
                one_sided.push(j);
                0.0
            }
        };
        x[j] = point[j];
        gradient.push(g);
    }
    Ok(FdGradient { gradient, one_sided })
}
