//! Forward models: monochromatic and polychromatic line integrals over
//! analytic phantoms, image-driven projection with its adjoint, detector
//! noise, and ray-subset masks.

use crate::error::Result;
use crate::geometry::{clip_to_grid, ray_for_bin, GridSpec, Ray, ScanGeometry, Vec2};
use crate::phantom::{Image, ImageKind, PhantomSpec};
use crate::physics::Spectrum;
use crate::rng;
use crate::Real;
use ndarray::Array2;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;

/// Projection values, -ln transmission, shape (n_views, n_bins).
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram<T> {
    pub geometry: ScanGeometry<T>,
    pub values: Array2<T>,
}

impl<T: Real> Sinogram<T> {
    pub fn zeros(geometry: ScanGeometry<T>) -> Self {
        let values = Array2::zeros((geometry.n_views, geometry.n_bins));
        Self { geometry, values }
    }

    pub fn l2_norm(&self) -> T {
        self.values.iter().map(|v| *v * *v).sum::<T>().sqrt()
    }
}

/// Boolean ray subset over a scan geometry.
#[derive(Debug, Clone)]
pub struct RayMask<T> {
    pub geometry: ScanGeometry<T>,
    pub included: Array2<bool>,
}

impl<T: Real> RayMask<T> {
    pub fn full(geometry: ScanGeometry<T>) -> Self {
        let included = Array2::from_elem((geometry.n_views, geometry.n_bins), true);
        Self { geometry, included }
    }

    pub fn count_included(&self) -> usize {
        self.included.iter().filter(|b| **b).count()
    }

    /// (view, bin) pairs of included rays in row-major order.
    pub fn included_rays(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for v in 0..self.geometry.n_views {
            for b in 0..self.geometry.n_bins {
                if self.included[[v, b]] {
                    out.push((v, b));
                }
            }
        }
        out
    }
}

impl<T: Real> Sinogram<T> {
    pub fn cast<U: Real>(&self) -> Sinogram<U> {
        Sinogram {
            geometry: self.geometry.cast(),
            values: self.values.mapv(|v| U::c(v.to_f64().unwrap())),
        }
    }
}

impl<T: Real> RayMask<T> {
    pub fn cast<U: Real>(&self) -> RayMask<U> {
        RayMask {
            geometry: self.geometry.cast(),
            included: self.included.clone(),
        }
    }
}

/// Per-ray scratch buffers for the layered chord computation.
struct ChordScratch<T> {
    per_prim: Vec<Vec<(T, T)>>,
    cuts: Vec<T>,
    lengths: Vec<T>,
}

impl<T: Real> ChordScratch<T> {
    fn new(n_prims: usize) -> Self {
        Self {
            per_prim: (0..n_prims).map(|_| Vec::with_capacity(2)).collect(),
            cuts: Vec::new(),
            lengths: vec![T::zero(); n_prims],
        }
    }

    /// Effective in-material length per primitive along `ray`, with later
    /// primitives hiding earlier ones wherever their intervals overlap.
    fn layered_lengths(&mut self, phantom: &PhantomSpec<T>, ray: &Ray<T>) -> &[T] {
        let n = phantom.primitives.len();
        self.cuts.clear();
        for (i, prim) in phantom.primitives.iter().enumerate() {
            prim.shape.ray_intervals(ray, &mut self.per_prim[i]);
            for &(a, b) in &self.per_prim[i] {
                self.cuts.push(a);
                self.cuts.push(b);
            }
        }
        for l in &mut self.lengths {
            *l = T::zero();
        }
        if self.cuts.is_empty() {
            return &self.lengths;
        }
        self.cuts
            .sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        self.cuts.dedup();
        for w in 0..self.cuts.len() - 1 {
            let (a, b) = (self.cuts[w], self.cuts[w + 1]);
            if b <= a {
                continue;
            }
            let mid = (a + b) / T::c(2.0);
            // last primitive covering the midpoint owns the segment
            for i in (0..n).rev() {
                if self.per_prim[i].iter().any(|&(s, e)| mid >= s && mid <= e) {
                    self.lengths[i] = self.lengths[i] + (b - a);
                    break;
                }
            }
        }
        &self.lengths
    }

    /// Total length of the union of all primitive intervals.
    fn union_length(&mut self, phantom: &PhantomSpec<T>, ray: &Ray<T>) -> T {
        let lens = self.layered_lengths(phantom, ray);
        lens.iter().copied().sum()
    }
}

fn map_views<T: Real, F>(geometry: &ScanGeometry<T>, f: F) -> Array2<T>
where
    F: Fn(usize, &mut [T]) + Sync,
{
    let n_bins = geometry.n_bins;
    let rows: Vec<Vec<T>> = (0..geometry.n_views)
        .into_par_iter()
        .map(|v| {
            let mut row = vec![T::zero(); n_bins];
            f(v, &mut row);
            row
        })
        .collect();
    let mut values = Array2::zeros((geometry.n_views, n_bins));
    for (v, row) in rows.into_iter().enumerate() {
        for (b, val) in row.into_iter().enumerate() {
            values[[v, b]] = val;
        }
    }
    values
}

/// Monochromatic line integrals with closed-form chords.
pub fn project_analytic_mono<T: Real>(
    phantom: &PhantomSpec<T>,
    geometry: &ScanGeometry<T>,
    e: T,
) -> Result<Sinogram<T>> {
    let mu: Vec<T> = phantom
        .primitives
        .iter()
        .map(|p| p.material.attenuation_at(e))
        .collect::<Result<_>>()?;
    let values = map_views(geometry, |v, row| {
        let mut scratch = ChordScratch::new(phantom.primitives.len());
        for (b, out) in row.iter_mut().enumerate() {
            let ray = ray_for_bin(geometry, v, b).unwrap();
            let lens = scratch.layered_lengths(phantom, &ray);
            *out = lens
                .iter()
                .zip(mu.iter())
                .map(|(l, m)| *l * *m)
                .sum();
        }
    });
    Ok(Sinogram {
        geometry: geometry.clone(),
        values,
    })
}

/// Polychromatic projection: -ln of the spectrum-weighted transmission,
/// with exact chord geometry.
pub fn project_poly<T: Real>(
    phantom: &PhantomSpec<T>,
    geometry: &ScanGeometry<T>,
    spectrum: &Spectrum<T>,
) -> Result<Sinogram<T>> {
    let n_prims = phantom.primitives.len();
    let n_e = spectrum.len();
    // per-primitive attenuation at each spectral line
    let mut mu = vec![T::zero(); n_prims * n_e];
    for (i, prim) in phantom.primitives.iter().enumerate() {
        for (k, e) in spectrum.energies().iter().enumerate() {
            mu[i * n_e + k] = prim.material.attenuation_at(*e)?;
        }
    }
    let weights = spectrum.weights().to_vec();
    let values = map_views(geometry, |v, row| {
        let mut scratch = ChordScratch::new(n_prims);
        let mut integrals = vec![T::zero(); n_e];
        for (b, out) in row.iter_mut().enumerate() {
            let ray = ray_for_bin(geometry, v, b).unwrap();
            let lens = scratch.layered_lengths(phantom, &ray);
            for intg in integrals.iter_mut() {
                *intg = T::zero();
            }
            for (i, len) in lens.iter().enumerate() {
                if *len == T::zero() {
                    continue;
                }
                for k in 0..n_e {
                    integrals[k] = integrals[k] + *len * mu[i * n_e + k];
                }
            }
            *out = neg_log_mean_transmission(&weights, &integrals);
        }
    });
    Ok(Sinogram {
        geometry: geometry.clone(),
        values,
    })
}

/// -ln(sum_k w_k exp(-I_k)), shifted so the largest transmission term is
/// exp(0); safe for very large line integrals.
fn neg_log_mean_transmission<T: Real>(weights: &[T], integrals: &[T]) -> T {
    let m = integrals
        .iter()
        .copied()
        .fold(T::infinity(), |a, b| a.min(b));
    if !m.is_finite() {
        return T::zero();
    }
    let s: T = weights
        .iter()
        .zip(integrals.iter())
        .map(|(w, i)| *w * (-(*i - m)).exp())
        .sum();
    m - s.ln()
}

/// Traversal step used by the image-driven projector, in pixels.
const IMAGE_STEP_FRACTION: f64 = 0.5;

fn image_ray_samples<T: Real>(ray: &Ray<T>, grid: &GridSpec<T>) -> Option<(Ray<T>, usize, T)> {
    let clipped = clip_to_grid(ray, grid);
    let len = clipped.length();
    if len <= T::zero() {
        return None;
    }
    let step = grid.pixel_mm * T::c(IMAGE_STEP_FRACTION);
    let n = (len / step).ceil().to_usize().unwrap_or(1).max(1);
    let dt = len / T::from_usize(n).unwrap();
    Some((clipped, n, dt))
}

/// Line integrals of a pixel image via bilinear interpolating traversal.
pub fn project_image<T: Real>(image: &Image<T>, geometry: &ScanGeometry<T>) -> Sinogram<T> {
    let grid = image.grid;
    let values = map_views(geometry, |v, row| {
        for (b, out) in row.iter_mut().enumerate() {
            let ray = ray_for_bin(geometry, v, b).unwrap();
            let Some((clipped, n, dt)) = image_ray_samples(&ray, &grid) else {
                continue;
            };
            let mut acc = T::zero();
            for i in 0..n {
                let t = clipped.t_range.0 + (T::from_usize(i).unwrap() + T::c(0.5)) * dt;
                acc = acc + image.sample_bilinear(clipped.point_at(t));
            }
            *out = acc * dt;
        }
    });
    Sinogram {
        geometry: geometry.clone(),
        values,
    }
}

/// Exact adjoint of [`project_image`]: scatters sinogram values back
/// along rays with the same traversal and bilinear weights.
pub fn backproject_image<T: Real>(sino: &Sinogram<T>, grid: &GridSpec<T>) -> Image<T> {
    let grid = *grid;
    let geometry = &sino.geometry;
    let n_chunks = 16.min(geometry.n_views).max(1);
    let chunk = geometry.n_views.div_ceil(n_chunks);
    let partials: Vec<Array2<T>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = Array2::<T>::zeros((grid.ny, grid.nx));
            let v_lo = c * chunk;
            let v_hi = ((c + 1) * chunk).min(geometry.n_views);
            for v in v_lo..v_hi {
                for b in 0..geometry.n_bins {
                    let y = sino.values[[v, b]];
                    if y == T::zero() {
                        continue;
                    }
                    let ray = ray_for_bin(geometry, v, b).unwrap();
                    let Some((clipped, n, dt)) = image_ray_samples(&ray, &grid) else {
                        continue;
                    };
                    let w = y * dt;
                    for i in 0..n {
                        let t = clipped.t_range.0 + (T::from_usize(i).unwrap() + T::c(0.5)) * dt;
                        scatter_bilinear(&mut acc, &grid, clipped.point_at(t), w);
                    }
                }
            }
            acc
        })
        .collect();
    let mut values = Array2::<T>::zeros((grid.ny, grid.nx));
    for p in partials {
        values = values + p;
    }
    Image {
        grid,
        values,
        kind: ImageKind::Mu,
    }
}

fn scatter_bilinear<T: Real>(acc: &mut Array2<T>, grid: &GridSpec<T>, p: Vec2<T>, w: T) {
    let (fx, fy) = grid.world_to_pixel(p);
    let x0 = fx.floor();
    let y0 = fy.floor();
    let wx = fx - x0;
    let wy = fy - y0;
    for (dy, wyv) in [(0i64, T::one() - wy), (1, wy)] {
        for (dx, wxv) in [(0i64, T::one() - wx), (1, wx)] {
            let ix = x0.to_f64().unwrap() as i64 + dx;
            let iy = y0.to_f64().unwrap() as i64 + dy;
            if ix >= 0 && iy >= 0 && (ix as usize) < grid.nx && (iy as usize) < grid.ny {
                acc[[iy as usize, ix as usize]] =
                    acc[[iy as usize, ix as usize]] + w * wxv * wyv;
            }
        }
    }
}

/// Photon-counting noise: Poisson counts at N0 exp(-P) plus Gaussian
/// electronic noise, clamped to one photon before the log.
///
/// Each bin draws from its own (seed, view, bin) stream, so the result is
/// independent of evaluation order.
pub fn apply_noise<T: Real>(
    sino: &Sinogram<T>,
    photons_per_ray: f64,
    electronic_sd: f64,
    seed: u64,
) -> Sinogram<T> {
    assert!(photons_per_ray > 0.0, "photons_per_ray must be positive");
    let geometry = sino.geometry.clone();
    let values = map_views(&geometry, |v, row| {
        for (b, out) in row.iter_mut().enumerate() {
            let p = sino.values[[v, b]].to_f64().unwrap();
            let lambda = photons_per_ray * (-p).exp();
            let mut rng = rng::stream_rng(seed, &[v as u64, b as u64]);
            let mut counts = if lambda > 1e-12 {
                Poisson::new(lambda).unwrap().sample(&mut rng)
            } else {
                0.0
            };
            if electronic_sd > 0.0 {
                counts += Normal::new(0.0, electronic_sd).unwrap().sample(&mut rng);
            }
            let counts = counts.max(1.0);
            *out = T::c(-(counts / photons_per_ray).ln());
        }
    });
    Sinogram { geometry, values }
}

/// Rays whose total chord through `metal_subset` stays within `threshold`.
pub fn rays_through_mask<T: Real>(
    metal_subset: &PhantomSpec<T>,
    geometry: &ScanGeometry<T>,
    threshold: T,
) -> RayMask<T> {
    let mut included = Array2::from_elem((geometry.n_views, geometry.n_bins), true);
    if metal_subset.is_empty() {
        return RayMask {
            geometry: geometry.clone(),
            included,
        };
    }
    let rows: Vec<Vec<bool>> = (0..geometry.n_views)
        .into_par_iter()
        .map(|v| {
            let mut scratch = ChordScratch::new(metal_subset.primitives.len());
            (0..geometry.n_bins)
                .map(|b| {
                    let ray = ray_for_bin(geometry, v, b).unwrap();
                    scratch.union_length(metal_subset, &ray) <= threshold
                })
                .collect()
        })
        .collect();
    for (v, row) in rows.into_iter().enumerate() {
        for (b, inc) in row.into_iter().enumerate() {
            included[[v, b]] = inc;
        }
    }
    RayMask {
        geometry: geometry.clone(),
        included,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbp::moment0;
    use crate::math::lnsinhc;
    use crate::phantom::{rasterize, two_disk_band_separation, two_disk_phantom, Shape};
    use crate::physics::{self, make_bichromatic, make_uniform, Material};
    use std::sync::Arc;

    fn const_material(value: f64) -> Arc<Material<f64>> {
        Arc::new(Material::new("const", vec![(20.0, value), (120.0, value)]).unwrap())
    }

    fn single_disk(value: f64, radius: f64) -> PhantomSpec<f64> {
        let mut spec = PhantomSpec::new();
        spec.push(
            Shape::Disk {
                center: Vec2::zero(),
                radius,
            },
            const_material(value),
        );
        spec
    }

    fn parallel_geom(n_views: usize, n_bins: usize, spacing: f64) -> ScanGeometry<f64> {
        ScanGeometry::parallel(n_views, (0.0, std::f64::consts::PI), n_bins, spacing).unwrap()
    }

    #[test]
    fn central_chord_is_diameter() {
        let spec = single_disk(0.5, 10.0);
        let geom = parallel_geom(4, 41, 1.0);
        let sino = project_analytic_mono(&spec, &geom, 70.0).unwrap();
        // central bin of each view crosses the full diameter
        for v in 0..4 {
            assert!((sino.values[[v, 20]] - 2.0 * 10.0 * 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn offset_chord_formula() {
        let spec = single_disk(1.25, 10.0);
        let geom = parallel_geom(1, 41, 1.0);
        let sino = project_analytic_mono(&spec, &geom, 70.0).unwrap();
        for b in 0..41 {
            let u = geom.bin_u(b);
            let expect = if u.abs() < 10.0 {
                2.0 * 1.25 * (100.0 - u * u).sqrt()
            } else {
                0.0
            };
            assert!(
                (sino.values[[0, b]] - expect).abs() < 1e-10,
                "bin {b}: {} vs {expect}",
                sino.values[[0, b]]
            );
        }
    }

    #[test]
    fn empty_phantom_projects_zero() {
        let spec = PhantomSpec::<f64>::new();
        let geom = parallel_geom(8, 16, 1.0);
        let sino = project_analytic_mono(&spec, &geom, 70.0).unwrap();
        assert!(sino.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn layered_chords_respect_priority() {
        // big disk of material a, smaller disk of material b on top
        let mut spec = single_disk(1.0, 10.0);
        spec.push(
            Shape::Disk {
                center: Vec2::zero(),
                radius: 5.0,
            },
            const_material(3.0),
        );
        let geom = parallel_geom(1, 1, 50.0);
        let sino = project_analytic_mono(&spec, &geom, 70.0).unwrap();
        // central ray: 10 mm in the outer shell at 1.0, 10 mm inner at 3.0
        assert!((sino.values[[0, 0]] - (10.0 * 1.0 + 10.0 * 3.0)).abs() < 1e-10);
    }

    #[test]
    fn toy_bichromatic_values() {
        // unit-diameter metal disk so the central chord is exactly 1 and 2
        let metal = Arc::new(physics::toy_metal::<f64>());
        let mut one = PhantomSpec::new();
        one.push(
            Shape::Disk {
                center: Vec2::zero(),
                radius: 0.5,
            },
            metal.clone(),
        );
        let spectrum = make_bichromatic(64.0, 80.0, 0.5).unwrap();
        let geom = parallel_geom(1, 1, 10.0);
        let sino = project_poly(&one, &geom, &spectrum).unwrap();
        let expect1 = -(0.5 * (-64.0_f64).exp() + 0.5 * (-5.0_f64).exp()).ln();
        assert!((sino.values[[0, 0]] - expect1).abs() < 1e-12);
        assert!((sino.values[[0, 0]] - 5.7).abs() < 0.05);

        let mut two = PhantomSpec::new();
        two.push(
            Shape::Disk {
                center: Vec2::zero(),
                radius: 1.0,
            },
            metal,
        );
        let sino = project_poly(&two, &geom, &spectrum).unwrap();
        let expect2 = -(0.5 * (-128.0_f64).exp() + 0.5 * (-10.0_f64).exp()).ln();
        assert!((sino.values[[0, 0]] - expect2).abs() < 1e-12);
        assert!((sino.values[[0, 0]] - 10.7).abs() < 0.05);
    }

    #[test]
    fn mono_spectrum_matches_analytic() {
        let spec = single_disk(0.02, 30.0);
        let geom = parallel_geom(16, 65, 1.2);
        // effectively monochromatic: all weight on one line
        let s = physics::Spectrum::new(vec![60.0, 80.0], vec![1.0, 0.0]);
        assert!(s.is_err() || s.unwrap().weights()[1] == 0.0);
        let spectrum = make_bichromatic(70.0, 80.0, 1.0).unwrap();
        let poly = project_poly(&spec, &geom, &spectrum).unwrap();
        let mono = project_analytic_mono(&spec, &geom, 70.0).unwrap();
        for (a, b) in poly.values.iter().zip(mono.values.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    /// Material whose attenuation is exactly linear in E across the
    /// spectrum lines (knots placed on the lines).
    fn linear_material(mu0: f64, sigma0: f64, e0: f64, energies: &[f64]) -> Arc<Material<f64>> {
        let knots = energies
            .iter()
            .map(|e| (*e, mu0 + (*e - e0) * sigma0))
            .collect();
        Arc::new(Material::new("linear", knots).unwrap())
    }

    #[test]
    fn sinh_identity_oracle() {
        let e0 = 70.0;
        let half_width = 10.0;
        let spectrum = make_uniform(e0, half_width, 2001).unwrap();
        let mat = linear_material(0.05, -3e-4, e0, spectrum.energies());
        let mut spec = PhantomSpec::new();
        spec.push(
            Shape::Disk {
                center: Vec2::new(3.0, -2.0),
                radius: 10.0,
            },
            mat,
        );
        let geom = parallel_geom(12, 33, 2.0);
        let poly = project_poly(&spec, &geom, &spectrum).unwrap();
        let mut scratch = ChordScratch::new(1);
        for v in 0..geom.n_views {
            for b in 0..geom.n_bins {
                let ray = ray_for_bin(&geom, v, b).unwrap();
                let chord = scratch.layered_lengths(&spec, &ray)[0];
                let i_mu = 0.05 * chord;
                let i_sigma = -3e-4 * chord;
                let expect = i_mu - lnsinhc(half_width * i_sigma);
                let got = poly.values[[v, b]];
                let tol = (1e-6 * expect.abs()).max(1e-12);
                assert!(
                    (got - expect).abs() < tol,
                    "({v},{b}): got {got}, expect {expect}"
                );
            }
        }
    }

    #[test]
    fn jensen_bounds_for_decreasing_mu() {
        let ti = Arc::new(physics::builtin_material::<f64>("titanium").unwrap());
        let mut spec = PhantomSpec::new();
        spec.push(
            Shape::Disk {
                center: Vec2::zero(),
                radius: 5.0,
            },
            ti,
        );
        let spectrum = physics::builtin_spectrum_100kvp::<f64>().unwrap();
        let geom = parallel_geom(8, 33, 0.8);
        let poly = project_poly(&spec, &geom, &spectrum).unwrap();
        let lo = project_analytic_mono(&spec, &geom, spectrum.min_energy()).unwrap();
        let hi = project_analytic_mono(&spec, &geom, spectrum.max_energy()).unwrap();
        for ((p, l), h) in poly
            .values
            .iter()
            .zip(lo.values.iter())
            .zip(hi.values.iter())
        {
            assert!(*l >= *p - 1e-9, "mono(Emin) {l} < poly {p}");
            assert!(*p >= *h - 1e-9, "poly {p} < mono(Emax) {h}");
        }
    }

    #[test]
    fn project_image_zero_and_linearity() {
        let grid = GridSpec::centered(32, 32, 1.0).unwrap();
        let geom = parallel_geom(8, 48, 1.0);
        let zero = Image::zeros(grid, ImageKind::Mu);
        let sino = project_image(&zero, &geom);
        assert!(sino.values.iter().all(|v| *v == 0.0));

        let mut x = Image::zeros(grid, ImageKind::Mu);
        let mut y = Image::zeros(grid, ImageKind::Mu);
        for iy in 0..32 {
            for ix in 0..32 {
                x.values[[iy, ix]] = ((ix * 7 + iy * 3) % 11) as f64 / 11.0;
                y.values[[iy, ix]] = ((ix * 5 + iy * 13) % 7) as f64 / 7.0;
            }
        }
        let (a, b) = (0.7, -1.3);
        let mut combo = Image::zeros(grid, ImageKind::Mu);
        combo.values = &x.values * a + &y.values * b;
        let ps = project_image(&combo, &geom);
        let px = project_image(&x, &geom);
        let py = project_image(&y, &geom);
        for ((s, xv), yv) in ps.values.iter().zip(px.values.iter()).zip(py.values.iter()) {
            assert!((s - (a * xv + b * yv)).abs() < 1e-10);
        }
    }

    #[test]
    fn project_image_close_to_analytic() {
        let value = 0.04;
        let spec = single_disk(value, 12.0);
        let grid = GridSpec::centered(128, 128, 0.5).unwrap();
        let img = rasterize(&spec, &grid, 70.0).unwrap();
        let geom = parallel_geom(16, 150, 0.5);
        let from_img = project_image(&img, &geom);
        let analytic = project_analytic_mono(&spec, &geom, 70.0).unwrap();
        let tol = 2.0 * value * grid.pixel_mm * 2.0_f64.sqrt();
        for (a, b) in from_img.values.iter().zip(analytic.values.iter()) {
            assert!((a - b).abs() < tol, "{a} vs {b}");
        }
    }

    #[test]
    fn backprojection_is_adjoint() {
        let grid = GridSpec::centered(24, 20, 1.0).unwrap();
        let geom = parallel_geom(12, 36, 1.1);
        let mut x = Image::zeros(grid, ImageKind::Mu);
        let mut k = 0u64;
        for v in x.values.iter_mut() {
            k = k.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            *v = (k >> 40) as f64 / (1u64 << 24) as f64 - 0.5;
        }
        let mut y = Sinogram::zeros(geom.clone());
        for v in y.values.iter_mut() {
            k = k.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            *v = (k >> 40) as f64 / (1u64 << 24) as f64 - 0.5;
        }
        let tx = project_image(&x, &geom);
        let bty = backproject_image(&y, &grid);
        let lhs: f64 = tx.values.iter().zip(y.values.iter()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.values.iter().zip(bty.values.iter()).map(|(a, b)| a * b).sum();
        assert!(
            (lhs - rhs).abs() <= 1e-6 * lhs.abs().max(rhs.abs()),
            "<Tx,y>={lhs} <x,Tty>={rhs}"
        );
    }

    #[test]
    fn noise_high_dose_limit() {
        let spec = single_disk(0.02, 30.0);
        let geom = parallel_geom(12, 65, 1.2);
        let sino = project_analytic_mono(&spec, &geom, 70.0).unwrap();
        let noisy = apply_noise(&sino, 1e9, 0.0, 7);
        for (a, b) in noisy.values.iter().zip(sino.values.iter()) {
            assert!((a - b).abs() < 0.01, "{a} vs {b}");
        }
    }

    #[test]
    fn noise_deterministic_per_seed() {
        let spec = single_disk(0.05, 20.0);
        let geom = parallel_geom(6, 33, 1.5);
        let sino = project_analytic_mono(&spec, &geom, 70.0).unwrap();
        let a = apply_noise(&sino, 1e5, 10.0, 99);
        let b = apply_noise(&sino, 1e5, 10.0, 99);
        assert_eq!(a.values, b.values);
        let c = apply_noise(&sino, 1e5, 10.0, 100);
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn noise_mean_close_to_clean() {
        let geom = ScanGeometry::parallel(1, (0.0, 1.0), 1, 1.0).unwrap();
        let mut sino = Sinogram::zeros(geom);
        let p_true = 1.0;
        sino.values[[0, 0]] = p_true;
        let n = 10_000;
        let samples: Vec<f64> = (0..n)
            .map(|s| apply_noise(&sino, 1e5, 0.0, s as u64).values[[0, 0]])
            .collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!(
            (mean - p_true).abs() < 3.0 * se + 1e-4,
            "mean {mean}, se {se}"
        );
    }

    #[test]
    fn mask_no_metal_includes_all() {
        let empty = PhantomSpec::<f64>::new();
        let geom = parallel_geom(10, 20, 1.0);
        let mask = rays_through_mask(&empty, &geom, 0.0);
        assert_eq!(mask.count_included(), 200);
    }

    #[test]
    fn mask_infinite_threshold_includes_all() {
        let spec = single_disk(1.0, 10.0);
        let geom = parallel_geom(10, 20, 2.0);
        let mask = rays_through_mask(&spec, &geom, f64::INFINITY);
        assert_eq!(mask.count_included(), 200);
    }

    #[test]
    fn mask_two_disk_band_overlap() {
        let radius = 5.0;
        let sep = two_disk_band_separation(radius);
        let spec = two_disk_phantom(radius, sep, const_material(1.0)).unwrap();
        let n_views = 180;
        let geom = parallel_geom(n_views, 160, 0.6);
        let mask = rays_through_mask(&spec, &geom, 0.0);
        // per view: does any excluded ray cross both disks?
        let mut scratch_l = ChordScratch::new(1);
        let mut scratch_r = ChordScratch::new(1);
        let mut left = PhantomSpec::new();
        left.primitives.push(spec.primitives[0].clone());
        let mut right = PhantomSpec::new();
        right.primitives.push(spec.primitives[1].clone());
        for v in 0..n_views {
            let phi = geom.view_angle(v);
            let mut both = false;
            for b in 0..geom.n_bins {
                if mask.included[[v, b]] {
                    continue;
                }
                let ray = ray_for_bin(&geom, v, b).unwrap();
                if scratch_l.union_length(&left, &ray) > 0.0
                    && scratch_r.union_length(&right, &ray) > 0.0
                {
                    both = true;
                    break;
                }
            }
            // near the band edges the projection overlap is tangential and
            // thinner than a detector bin, so test with a small margin
            let lo = 4.0 * std::f64::consts::PI / 9.0;
            let hi = 5.0 * std::f64::consts::PI / 9.0;
            let margin = 0.05;
            if phi > lo + margin && phi < hi - margin {
                assert!(both, "view {v} (phi={phi:.4}): expected a both-disk ray");
            } else if phi < lo - margin || phi > hi + margin {
                assert!(!both, "view {v} (phi={phi:.4}): unexpected both-disk ray");
            }
        }
    }

    #[test]
    fn moment0_constant_for_mono() {
        let spec = single_disk(0.02, 25.0);
        let geom = parallel_geom(90, 160, 0.6);
        let sino = project_analytic_mono(&spec, &geom, 70.0).unwrap();
        let m = moment0(&sino);
        let max = m.iter().cloned().fold(f64::MIN, f64::max);
        let min = m.iter().cloned().fold(f64::MAX, f64::min);
        let mean = m.iter().sum::<f64>() / m.len() as f64;
        assert!((max - min) / mean < 0.01, "spread {}", (max - min) / mean);
    }

    #[test]
    fn moment0_violated_for_poly_two_disk() {
        let radius = 5.0;
        let sep = two_disk_band_separation(radius);
        let ti = Arc::new(physics::builtin_material::<f64>("titanium").unwrap());
        let spec = two_disk_phantom(radius, sep, ti).unwrap();
        let spectrum = physics::builtin_spectrum_100kvp::<f64>().unwrap();
        let geom = parallel_geom(180, 160, 0.6);
        let sino = project_poly(&spec, &geom, &spectrum).unwrap();
        let m = moment0(&sino);
        let mean = m.iter().sum::<f64>() / m.len() as f64;
        let max = m.iter().cloned().fold(f64::MIN, f64::max);
        let min = m.iter().cloned().fold(f64::MAX, f64::min);
        assert!((max - min) / mean > 0.01, "spread {}", (max - min) / mean);
        // largest deviation from the mean occurs at a both-disk view
        let (argmax, _) = m
            .iter()
            .enumerate()
            .map(|(i, v)| (i, (v - mean).abs()))
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        let phi = geom.view_angle(argmax);
        assert!(
            (4.0 * std::f64::consts::PI / 9.0..=5.0 * std::f64::consts::PI / 9.0).contains(&phi),
            "argmax deviation at phi={phi}"
        );
    }

    #[test]
    fn moment0_zero_sinogram() {
        let geom = parallel_geom(5, 7, 1.0);
        let sino = Sinogram::zeros(geom);
        assert!(moment0(&sino).iter().all(|m| *m == 0.0));
    }
}
