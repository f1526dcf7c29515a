//! Metal beam-hardening correction baseline.
//!
//! Segments metal by thresholding a reconstruction, forward-projects the
//! metal mask, maps the metal path lengths through ln(sinh(k q)/(k q)), and
//! subtracts the backprojected corrector from the uncorrected image.

use crate::error::{Error, Result};
use crate::fbp::fbp;
use crate::geometry::{GridSpec, ScanGeometry};
use crate::math::lnsinhc;
use crate::phantom::{Image, ImageKind};
use crate::projector::{project_image, Sinogram};
use crate::Real;
use ndarray::Array2;

/// Boolean metal support on a grid.
#[derive(Debug, Clone)]
pub struct MetalMask<T> {
    pub grid: GridSpec<T>,
    pub mask: Array2<bool>,
}

impl<T: Real> MetalMask<T> {
    pub fn count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|m| *m)
    }

    /// Indicator image chi_D.
    pub fn to_image(&self) -> Image<T> {
        let mut img = Image::zeros(self.grid, ImageKind::Mask);
        for (v, m) in img.values.iter_mut().zip(self.mask.iter()) {
            *v = if *m { T::one() } else { T::zero() };
        }
        img
    }
}

/// Threshold segmentation: mask = (value > threshold).
pub fn segment_metal<T: Real>(image: &Image<T>, threshold: T) -> MetalMask<T> {
    let mask = image.values.mapv(|v| v > threshold);
    MetalMask {
        grid: image.grid,
        mask,
    }
}

/// Default threshold pick: midpoint between the two strongest histogram
/// modes above `floor` (bone-level attenuation). Falls back to 2*floor
/// when fewer than two modes exist.
pub fn auto_threshold<T: Real>(image: &Image<T>, floor: T) -> T {
    let vals: Vec<T> = image
        .values
        .iter()
        .copied()
        .filter(|v| *v > floor)
        .collect();
    if vals.len() < 4 {
        return floor * T::c(2.0);
    }
    let max = vals.iter().copied().fold(T::neg_infinity(), T::max);
    if max <= floor {
        return floor * T::c(2.0);
    }
    const NBINS: usize = 64;
    let width = (max - floor) / T::c(NBINS as f64);
    let mut hist = [0usize; NBINS];
    for v in &vals {
        let idx = ((*v - floor) / width).to_usize().unwrap_or(0).min(NBINS - 1);
        hist[idx] += 1;
    }
    // local maxima of the histogram, strongest two
    let mut modes: Vec<(usize, usize)> = Vec::new();
    for i in 0..NBINS {
        let left = if i == 0 { 0 } else { hist[i - 1] };
        let right = if i + 1 == NBINS { 0 } else { hist[i + 1] };
        if hist[i] > 0 && hist[i] >= left && hist[i] >= right {
            modes.push((hist[i], i));
        }
    }
    modes.sort_unstable_by(|a, b| b.cmp(a));
    if modes.len() < 2 {
        return floor * T::c(2.0);
    }
    let (i, j) = (modes[0].1, modes[1].1);
    let center = |idx: usize| floor + width * (T::c(idx as f64) + T::c(0.5));
    (center(i) + center(j)) / T::c(2.0)
}

/// Beam-hardening corrector image for a metal mask:
/// -R^{-1}[ln(sinh(k R chi_D)/(k R chi_D))].
pub fn bh_corrector<T: Real>(
    mask: &MetalMask<T>,
    kappa: T,
    geometry: &ScanGeometry<T>,
) -> Image<T> {
    let chi = mask.to_image();
    let q = project_image(&chi, geometry);
    let mut corr = Sinogram::zeros(geometry.clone());
    for (c, qv) in corr.values.iter_mut().zip(q.values.iter()) {
        *c = lnsinhc(kappa * *qv);
    }
    let mut img = fbp(&corr, &mask.grid);
    for v in img.values.iter_mut() {
        *v = -*v;
    }
    img
}

/// FBP followed by metal segmentation and corrector subtraction.
///
/// The uncorrected image decomposes as mu plus the corrector term, so the
/// corrector is removed by subtraction.
pub fn mbhc_reconstruct<T: Real>(
    sino: &Sinogram<T>,
    grid: &GridSpec<T>,
    threshold: T,
    kappa: T,
) -> Image<T> {
    let base = fbp(sino, grid);
    let mask = segment_metal(&base, threshold);
    if mask.is_empty() {
        return base;
    }
    let corr = bh_corrector(&mask, kappa, &sino.geometry);
    let mut out = base;
    out.values = &out.values - &corr.values;
    out
}

/// As [`mbhc_reconstruct`] but with a caller-provided mask.
pub fn mbhc_reconstruct_with_mask<T: Real>(
    sino: &Sinogram<T>,
    grid: &GridSpec<T>,
    mask: &MetalMask<T>,
    kappa: T,
) -> Result<Image<T>> {
    if mask.grid.nx != grid.nx || mask.grid.ny != grid.ny {
        return Err(Error::Shape("metal mask and grid differ".into()));
    }
    let base = fbp(sino, grid);
    if mask.is_empty() {
        return Ok(base);
    }
    let corr = bh_corrector(mask, kappa, &sino.geometry);
    let mut out = base;
    out.values = &out.values - &corr.values;
    Ok(out)
}
