//! Background-region error metrics and the per-run report.

use crate::error::{Error, Result};
use crate::phantom::Image;
use crate::Real;
use ndarray::Array2;

/// Mean absolute difference over masked pixels.
pub fn mae<T: Real>(image: &Image<T>, reference: &Image<T>, mask: &Array2<bool>) -> Result<T> {
    masked_reduce(image, reference, mask, |d| d.abs())
}

/// Mean squared difference over masked pixels.
pub fn mse<T: Real>(image: &Image<T>, reference: &Image<T>, mask: &Array2<bool>) -> Result<T> {
    masked_reduce(image, reference, mask, |d| d * d)
}

fn masked_reduce<T: Real>(
    image: &Image<T>,
    reference: &Image<T>,
    mask: &Array2<bool>,
    f: impl Fn(T) -> T,
) -> Result<T> {
    if image.values.dim() != reference.values.dim() || image.values.dim() != mask.dim() {
        return Err(Error::Shape(
            "image, reference, and mask dimensions differ".into(),
        ));
    }
    let mut acc = T::zero();
    let mut n = 0usize;
    for ((a, b), m) in image
        .values
        .iter()
        .zip(reference.values.iter())
        .zip(mask.iter())
    {
        if *m {
            acc += f(*a - *b);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(acc / T::from_usize(n).unwrap())
}

/// Per-method summary row.
#[derive(Debug, Clone)]
pub struct MethodMetrics {
    pub method: String,
    pub background_mae: f64,
    pub background_mse: f64,
    pub runtime_seconds: f64,
}

/// Metrics over one run; all methods share the same background mask.
#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub entries: Vec<MethodMetrics>,
    pub background_mask_sha256: String,
    /// Suppress runtimes in serialized output (deterministic mode).
    pub hide_runtimes: bool,
}

impl MetricsReport {
    pub fn get(&self, method: &str) -> Option<&MethodMetrics> {
        self.entries.iter().find(|e| e.method == method)
    }

    pub fn to_csv(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        writeln!(s, "# background_mask_sha256={}", self.background_mask_sha256).unwrap();
        writeln!(s, "method,background_mae,background_mse,runtime_seconds").unwrap();
        for e in &self.entries {
            if self.hide_runtimes {
                writeln!(s, "{},{},{},-", e.method, e.background_mae, e.background_mse).unwrap();
            } else {
                writeln!(
                    s,
                    "{},{},{},{:.3}",
                    e.method, e.background_mae, e.background_mse, e.runtime_seconds
                )
                .unwrap();
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GridSpec;
    use crate::phantom::ImageKind;

    fn pair() -> (Image<f64>, Image<f64>, Array2<bool>) {
        let grid = GridSpec::centered(8, 8, 1.0).unwrap();
        let a = Image::zeros(grid, ImageKind::Mu);
        let b = Image::zeros(grid, ImageKind::Mu);
        let mask = Array2::from_elem((8, 8), true);
        (a, b, mask)
    }

    #[test]
    fn identical_images_zero_error() {
        let (a, b, mask) = pair();
        assert_eq!(mae(&a, &b, &mask).unwrap(), 0.0);
        assert_eq!(mse(&a, &b, &mask).unwrap(), 0.0);
    }

    #[test]
    fn constant_offset() {
        let (mut a, b, mask) = pair();
        a.values.fill(-0.25);
        assert!((mae(&a, &b, &mask).unwrap() - 0.25).abs() < 1e-15);
        assert!((mse(&a, &b, &mask).unwrap() - 0.0625).abs() < 1e-15);
    }

    #[test]
    fn metrics_ignore_unmasked_pixels() {
        let (mut a, b, mut mask) = pair();
        a.values[[0, 0]] = 100.0;
        a.values[[3, 3]] = 0.5;
        mask.fill(false);
        mask[[3, 3]] = true;
        assert_eq!(mae(&a, &b, &mask).unwrap(), 0.5);
    }

    #[test]
    fn empty_mask_rejected() {
        let (a, b, mut mask) = pair();
        mask.fill(false);
        assert!(matches!(mae(&a, &b, &mask), Err(Error::EmptyMask)));
    }
}
