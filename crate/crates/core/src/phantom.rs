//! Analytic phantoms and their rasterization.
//!
//! A phantom is an ordered list of material-filled primitives; later
//! primitives overwrite earlier ones wherever they overlap. Primitives are
//! disks, annuli, and elliptical bands, all of which have closed-form
//! ray intersections, so projections never depend on the raster.

use crate::error::{Error, Result};
use crate::geometry::{GridSpec, Ray, Vec2};
use crate::physics::{builtin_material, EnergyPair, MaterialRef};
use crate::Real;
use ndarray::Array2;
use rayon::prelude::*;
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq)]
pub enum Shape<T> {
    Disk {
        center: Vec2<T>,
        radius: T,
    },
    Annulus {
        center: Vec2<T>,
        r_inner: T,
        r_outer: T,
    },
    /// Region between two concentric axis-aligned ellipses.
    EllipseBand {
        center: Vec2<T>,
        outer: (T, T),
        inner: (T, T),
    },
}

/// Solve |q + t r|^2 = 1 for t; returns the entry/exit pair if any.
fn unit_circle_hits<T: Real>(q: Vec2<T>, r: Vec2<T>) -> Option<(T, T)> {
    let a = r.dot(r);
    let b = q.dot(r);
    let c = q.dot(q) - T::one();
    let disc = b * b - a * c;
    if disc <= T::zero() || a == T::zero() {
        return None;
    }
    let sq = disc.sqrt();
    Some(((-b - sq) / a, (-b + sq) / a))
}

fn ellipse_hits<T: Real>(ray: &Ray<T>, center: Vec2<T>, semi: (T, T)) -> Option<(T, T)> {
    let q = Vec2::new(
        (ray.origin.x - center.x) / semi.0,
        (ray.origin.y - center.y) / semi.1,
    );
    let r = Vec2::new(ray.direction.x / semi.0, ray.direction.y / semi.1);
    unit_circle_hits(q, r)
}

fn clamp_interval<T: Real>(iv: (T, T), range: (T, T)) -> Option<(T, T)> {
    let lo = iv.0.max(range.0);
    let hi = iv.1.min(range.1);
    if hi > lo {
        Some((lo, hi))
    } else {
        None
    }
}

/// Subtract interval `cut` from `iv`, appending the remains.
fn subtract_interval<T: Real>(iv: (T, T), cut: Option<(T, T)>, out: &mut Vec<(T, T)>) {
    match cut {
        None => out.push(iv),
        Some((c0, c1)) => {
            if c1 <= iv.0 || c0 >= iv.1 {
                out.push(iv);
                return;
            }
            if c0 > iv.0 {
                out.push((iv.0, c0));
            }
            if c1 < iv.1 {
                out.push((c1, iv.1));
            }
        }
    }
}

impl<T: Real> Shape<T> {
    pub fn contains(&self, p: Vec2<T>) -> bool {
        match *self {
            Shape::Disk { center, radius } => {
                let d = p.sub(center);
                d.dot(d) <= radius * radius
            }
            Shape::Annulus {
                center,
                r_inner,
                r_outer,
            } => {
                let d = p.sub(center);
                let r2 = d.dot(d);
                r2 <= r_outer * r_outer && r2 >= r_inner * r_inner
            }
            Shape::EllipseBand {
                center,
                outer,
                inner,
            } => {
                let e = |semi: (T, T)| {
                    let dx = (p.x - center.x) / semi.0;
                    let dy = (p.y - center.y) / semi.1;
                    dx * dx + dy * dy
                };
                e(outer) <= T::one() && e(inner) >= T::one()
            }
        }
    }

    /// Parameter intervals where the ray lies inside the shape,
    /// clipped to the ray's own t-range. At most two intervals.
    pub fn ray_intervals(&self, ray: &Ray<T>, out: &mut Vec<(T, T)>) {
        out.clear();
        let range = ray.t_range;
        match *self {
            Shape::Disk { center, radius } => {
                if let Some(iv) = ellipse_hits(ray, center, (radius, radius)) {
                    if let Some(iv) = clamp_interval(iv, range) {
                        out.push(iv);
                    }
                }
            }
            Shape::Annulus {
                center,
                r_inner,
                r_outer,
            } => {
                if let Some(outer) = ellipse_hits(ray, center, (r_outer, r_outer)) {
                    let inner = ellipse_hits(ray, center, (r_inner, r_inner));
                    let mut parts = Vec::with_capacity(2);
                    subtract_interval(outer, inner, &mut parts);
                    for iv in parts {
                        if let Some(iv) = clamp_interval(iv, range) {
                            out.push(iv);
                        }
                    }
                }
            }
            Shape::EllipseBand {
                center,
                outer,
                inner,
            } => {
                if let Some(o) = ellipse_hits(ray, center, outer) {
                    let i = ellipse_hits(ray, center, inner);
                    let mut parts = Vec::with_capacity(2);
                    subtract_interval(o, i, &mut parts);
                    for iv in parts {
                        if let Some(iv) = clamp_interval(iv, range) {
                            out.push(iv);
                        }
                    }
                }
            }
        }
    }

    /// Loose bounding radius about a point, for placement checks.
    pub fn max_extent_from(&self, p: Vec2<T>) -> T {
        match *self {
            Shape::Disk { center, radius } => center.sub(p).norm() + radius,
            Shape::Annulus {
                center, r_outer, ..
            } => center.sub(p).norm() + r_outer,
            Shape::EllipseBand { center, outer, .. } => {
                center.sub(p).norm() + outer.0.max(outer.1)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Primitive<T> {
    pub shape: Shape<T>,
    pub material: MaterialRef<T>,
}

/// Ordered primitive list; later entries overwrite earlier ones.
#[derive(Debug, Clone, Default)]
pub struct PhantomSpec<T> {
    pub primitives: Vec<Primitive<T>>,
}

impl<T: Real> PhantomSpec<T> {
    pub fn new() -> Self {
        Self {
            primitives: Vec::new(),
        }
    }

    pub fn push(&mut self, shape: Shape<T>, material: MaterialRef<T>) {
        self.primitives.push(Primitive { shape, material });
    }

    /// Primitives filled with the named material, preserving order.
    pub fn subset_by_material(&self, name: &str) -> PhantomSpec<T> {
        PhantomSpec {
            primitives: self
                .primitives
                .iter()
                .filter(|p| p.material.name == name)
                .cloned()
                .collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageKind {
    Mu,
    Sigma,
    Mask,
}

impl ImageKind {
    pub fn name(self) -> &'static str {
        match self {
            ImageKind::Mu => "mu",
            ImageKind::Sigma => "sigma",
            ImageKind::Mask => "mask",
        }
    }
}

/// Per-pixel scalar field on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    pub grid: GridSpec<T>,
    /// Shape (ny, nx), indexed [[iy, ix]].
    pub values: Array2<T>,
    pub kind: ImageKind,
}

impl<T: Real> Image<T> {
    pub fn zeros(grid: GridSpec<T>, kind: ImageKind) -> Self {
        Self {
            grid,
            values: Array2::zeros((grid.ny, grid.nx)),
            kind,
        }
    }

    pub fn cast<U: Real>(&self) -> Image<U> {
        Image {
            grid: self.grid.cast(),
            values: self.values.mapv(|v| U::c(v.to_f64().unwrap())),
            kind: self.kind,
        }
    }

    /// Bilinear sample at a world point; zero outside the pixel lattice.
    pub fn sample_bilinear(&self, p: Vec2<T>) -> T {
        let (fx, fy) = self.grid.world_to_pixel(p);
        let x0 = fx.floor();
        let y0 = fy.floor();
        let wx = fx - x0;
        let wy = fy - y0;
        let mut acc = T::zero();
        for (dy, wyv) in [(0i64, T::one() - wy), (1, wy)] {
            for (dx, wxv) in [(0i64, T::one() - wx), (1, wx)] {
                let ix = x0.to_f64().unwrap() as i64 + dx;
                let iy = y0.to_f64().unwrap() as i64 + dy;
                if ix >= 0 && iy >= 0 && (ix as usize) < self.grid.nx && (iy as usize) < self.grid.ny
                {
                    acc = acc + self.values[[iy as usize, ix as usize]] * wxv * wyv;
                }
            }
        }
        acc
    }
}

/// Two equal disks placed symmetrically about the grid center on the x axis.
pub fn two_disk_phantom<T: Real>(
    radius: T,
    separation: T,
    material: MaterialRef<T>,
) -> Result<PhantomSpec<T>> {
    if separation <= T::c(2.0) * radius {
        return Err(Error::Geometry(
            "two_disk_phantom: disks overlap (separation <= 2 radius)".into(),
        ));
    }
    let half = separation / T::c(2.0);
    let mut spec = PhantomSpec::new();
    spec.push(
        Shape::Disk {
            center: Vec2::new(-half, T::zero()),
            radius,
        },
        material.clone(),
    );
    spec.push(
        Shape::Disk {
            center: Vec2::new(half, T::zero()),
            radius,
        },
        material,
    );
    Ok(spec)
}

/// Disk separation that makes both-disk rays appear exactly for view
/// angles in [4pi/9, 5pi/9].
pub fn two_disk_band_separation<T: Real>(radius: T) -> T {
    T::c(2.0) * radius / T::c((4.0 * std::f64::consts::PI / 9.0).cos())
}

/// Procedural dental scene plus the layout needed for per-tooth analysis.
#[derive(Debug, Clone)]
pub struct DentalPhantom<T> {
    pub spec: PhantomSpec<T>,
    pub tooth_centers: Vec<Vec2<T>>,
    pub tooth_radius: T,
    pub crown_indices: Vec<usize>,
}

impl<T: Real> DentalPhantom<T> {
    /// Tooth indices adjacent (cyclically) to any crown, crowns excluded.
    pub fn crown_adjacent_teeth(&self) -> Vec<usize> {
        let n = self.tooth_centers.len();
        let mut out = Vec::new();
        for i in 0..n {
            if self.crown_indices.contains(&i) {
                continue;
            }
            let prev = (i + n - 1) % n;
            let next = (i + 1) % n;
            if self.crown_indices.contains(&prev) || self.crown_indices.contains(&next) {
                out.push(i);
            }
        }
        out
    }
}

/// Jaw-arch phantom: an elliptical bone band with enamel teeth along its
/// midline and titanium crown shells at the given tooth positions.
pub fn dental_phantom<T: Real>(
    n_teeth: usize,
    crown_indices: &[usize],
    grid: &GridSpec<T>,
) -> Result<DentalPhantom<T>> {
    if n_teeth == 0 {
        return Err(Error::Geometry("need at least one tooth".into()));
    }
    for &c in crown_indices {
        if c >= n_teeth {
            return Err(Error::OutOfBounds {
                what: "crown index",
                index: c,
                len: n_teeth,
            });
        }
    }
    let bone = Arc::new(builtin_material::<T>("bone")?);
    let enamel = Arc::new(builtin_material::<T>("enamel")?);
    let titanium = Arc::new(builtin_material::<T>("titanium")?);

    let h = grid.width().min(grid.height()) / T::c(2.0);
    let a = h * T::c(0.70);
    let b = h * T::c(0.54);
    let band = h * T::c(0.12);
    let tooth_r = h * T::c(0.086);
    let wall = T::c(0.8).min(tooth_r * T::c(0.4));
    let center = grid.center;

    let mut spec = PhantomSpec::new();
    spec.push(
        Shape::EllipseBand {
            center,
            outer: (a, b),
            inner: (a - band, b - band),
        },
        bone,
    );

    let mid = (a - band / T::c(2.0), b - band / T::c(2.0));
    let mut tooth_centers = Vec::with_capacity(n_teeth);
    for k in 0..n_teeth {
        let theta = T::c(2.0 * std::f64::consts::PI) * T::from_usize(k).unwrap()
            / T::from_usize(n_teeth).unwrap();
        let c = Vec2::new(
            center.x + mid.0 * theta.cos(),
            center.y + mid.1 * theta.sin(),
        );
        tooth_centers.push(c);
        spec.push(
            Shape::Disk {
                center: c,
                radius: tooth_r,
            },
            enamel.clone(),
        );
    }
    for &k in crown_indices {
        spec.push(
            Shape::Annulus {
                center: tooth_centers[k],
                r_inner: tooth_r - wall,
                r_outer: tooth_r,
            },
            titanium.clone(),
        );
    }
    Ok(DentalPhantom {
        spec,
        tooth_centers,
        tooth_radius: tooth_r,
        crown_indices: crown_indices.to_vec(),
    })
}

fn last_covering<'a, T: Real>(
    phantom: &'a PhantomSpec<T>,
    p: Vec2<T>,
) -> Option<&'a Primitive<T>> {
    phantom.primitives.iter().rev().find(|pr| pr.shape.contains(p))
}

/// Rasterize attenuation at a single energy; air (zero) background.
pub fn rasterize<T: Real>(
    phantom: &PhantomSpec<T>,
    grid: &GridSpec<T>,
    e: T,
) -> Result<Image<T>> {
    // fail fast on energies outside any referenced table
    for pr in &phantom.primitives {
        pr.material.attenuation_at(e)?;
    }
    let rows: Vec<Vec<T>> = (0..grid.ny)
        .into_par_iter()
        .map(|iy| {
            (0..grid.nx)
                .map(|ix| {
                    let p = grid.pixel_center(ix, iy);
                    last_covering(phantom, p)
                        .map(|pr| pr.material.attenuation_at(e).unwrap())
                        .unwrap_or_else(T::zero)
                })
                .collect()
        })
        .collect();
    let mut img = Image::zeros(*grid, ImageKind::Mu);
    for (iy, row) in rows.into_iter().enumerate() {
        for (ix, v) in row.into_iter().enumerate() {
            img.values[[iy, ix]] = v;
        }
    }
    Ok(img)
}

/// Rasterize (mu0, sigma0) reference images about E0.
pub fn rasterize_pair<T: Real>(
    phantom: &PhantomSpec<T>,
    grid: &GridSpec<T>,
    e0: T,
    de: T,
) -> Result<(Image<T>, Image<T>)> {
    for pr in &phantom.primitives {
        pr.material.effective_pair(e0, de)?;
    }
    let rows: Vec<Vec<EnergyPair<T>>> = (0..grid.ny)
        .into_par_iter()
        .map(|iy| {
            (0..grid.nx)
                .map(|ix| {
                    let p = grid.pixel_center(ix, iy);
                    last_covering(phantom, p)
                        .map(|pr| pr.material.effective_pair(e0, de).unwrap())
                        .unwrap_or(EnergyPair {
                            mu0: T::zero(),
                            sigma0: T::zero(),
                        })
                })
                .collect()
        })
        .collect();
    let mut mu = Image::zeros(*grid, ImageKind::Mu);
    let mut sigma = Image::zeros(*grid, ImageKind::Sigma);
    for (iy, row) in rows.into_iter().enumerate() {
        for (ix, pair) in row.into_iter().enumerate() {
            mu.values[[iy, ix]] = pair.mu0;
            sigma.values[[iy, ix]] = pair.sigma0;
        }
    }
    Ok((mu, sigma))
}

/// Binary occupancy of the phantom (1 inside any primitive).
pub fn rasterize_mask<T: Real>(phantom: &PhantomSpec<T>, grid: &GridSpec<T>) -> Image<T> {
    let mut img = Image::zeros(*grid, ImageKind::Mask);
    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            let p = grid.pixel_center(ix, iy);
            if last_covering(phantom, p).is_some() {
                img.values[[iy, ix]] = T::one();
            }
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::{self, Material};

    fn const_material(name: &str, value: f64) -> MaterialRef<f64> {
        Arc::new(Material::new(name, vec![(20.0, value), (120.0, value)]).unwrap())
    }

    #[test]
    fn two_disk_placement() {
        let m = const_material("m", 1.0);
        let spec = two_disk_phantom(5.0, 40.0, m).unwrap();
        match spec.primitives[0].shape {
            Shape::Disk { center, radius } => {
                assert_eq!(center, Vec2::new(-20.0, 0.0));
                assert_eq!(radius, 5.0);
            }
            _ => panic!("expected disk"),
        }
        match spec.primitives[1].shape {
            Shape::Disk { center, .. } => assert_eq!(center, Vec2::new(20.0, 0.0)),
            _ => panic!("expected disk"),
        }
    }

    #[test]
    fn two_disk_overlap_rejected() {
        let m = const_material("m", 1.0);
        assert!(two_disk_phantom(5.0, 9.9, m).is_err());
    }

    #[test]
    fn rasterized_disk_area() {
        let m = const_material("m", 1.0);
        let spec = two_disk_phantom(5.0, 40.0, m).unwrap();
        let grid = GridSpec::centered(160, 80, 0.4).unwrap();
        let mask = rasterize_mask(&spec, &grid);
        let count = mask.values.iter().filter(|v| **v > 0.5).count();
        let analytic = 2.0 * std::f64::consts::PI * 25.0 / (0.4 * 0.4);
        assert!(
            (count as f64 - analytic).abs() < 0.02 * analytic,
            "count {count} vs {analytic}"
        );
    }

    #[test]
    fn disjoint_union_mask() {
        let m = const_material("m", 1.0);
        let grid = GridSpec::centered(128, 128, 0.5).unwrap();
        let both = two_disk_phantom(5.0, 40.0, m.clone()).unwrap();
        let mut left = PhantomSpec::new();
        left.primitives.push(both.primitives[0].clone());
        let mut right = PhantomSpec::new();
        right.primitives.push(both.primitives[1].clone());
        let mb = rasterize_mask(&both, &grid);
        let ml = rasterize_mask(&left, &grid);
        let mr = rasterize_mask(&right, &grid);
        assert_eq!(&mb.values, &(&ml.values + &mr.values));
    }

    #[test]
    fn empty_phantom_rasterizes_to_zero() {
        let spec = PhantomSpec::<f64>::new();
        let grid = GridSpec::centered(16, 16, 1.0).unwrap();
        let img = rasterize(&spec, &grid, 70.0).unwrap();
        assert!(img.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn constant_disk_value() {
        let m = const_material("m", 0.75);
        let mut spec = PhantomSpec::new();
        spec.push(
            Shape::Disk {
                center: Vec2::zero(),
                radius: 10.0,
            },
            m,
        );
        let grid = GridSpec::centered(64, 64, 0.5).unwrap();
        let img = rasterize(&spec, &grid, 60.0).unwrap();
        assert_eq!(img.values[[32, 32]], 0.75);
        assert_eq!(img.values[[0, 0]], 0.0);
    }

    #[test]
    fn toy_metal_disk_at_64() {
        let m = Arc::new(physics::toy_metal::<f64>());
        let mut spec = PhantomSpec::new();
        spec.push(
            Shape::Disk {
                center: Vec2::zero(),
                radius: 8.0,
            },
            m,
        );
        let grid = GridSpec::centered(32, 32, 1.0).unwrap();
        let img = rasterize(&spec, &grid, 64.0).unwrap();
        assert_eq!(img.values[[16, 16]], 64.0);
    }

    #[test]
    fn layering_last_wins() {
        let a = const_material("a", 1.0);
        let b = const_material("b", 2.0);
        let mut spec = PhantomSpec::new();
        spec.push(
            Shape::Disk {
                center: Vec2::zero(),
                radius: 10.0,
            },
            a,
        );
        spec.push(
            Shape::Disk {
                center: Vec2::new(5.0, 0.0),
                radius: 10.0,
            },
            b,
        );
        let grid = GridSpec::centered(64, 64, 0.5).unwrap();
        let img = rasterize(&spec, &grid, 70.0).unwrap();
        // contested pixel near the origin is covered by both disks
        assert_eq!(img.values[[32, 32]], 2.0);
        // pixel only in the first disk
        let (fx, fy) = grid.world_to_pixel(Vec2::new(-7.0, 0.0));
        assert_eq!(img.values[[fy as usize, fx as usize]], 1.0);
    }

    #[test]
    fn rasterize_pair_air_and_signs() {
        let grid = GridSpec::<f64>::centered(96, 96, 0.5).unwrap();
        let dental = dental_phantom(14, &[3, 5, 10], &grid).unwrap();
        let (mu, sigma) = rasterize_pair(&dental.spec, &grid, 70.0, 1.0).unwrap();
        // air corner
        assert_eq!(mu.values[[0, 0]], 0.0);
        assert_eq!(sigma.values[[0, 0]], 0.0);
        // crown wall pixel: titanium slope is negative
        let crown = dental.tooth_centers[3];
        let edge = Vec2::new(
            crown.x + dental.tooth_radius - 0.2,
            crown.y,
        );
        let (fx, fy) = grid.world_to_pixel(edge);
        let s = sigma.values[[fy.round() as usize, fx.round() as usize]];
        assert!(s < 0.0, "expected negative titanium slope, got {s}");
    }

    #[test]
    fn flat_material_sigma_zero() {
        let m = const_material("flat", 0.3);
        let mut spec = PhantomSpec::new();
        spec.push(
            Shape::Disk {
                center: Vec2::zero(),
                radius: 6.0,
            },
            m,
        );
        let grid = GridSpec::centered(32, 32, 0.6).unwrap();
        let (_, sigma) = rasterize_pair(&spec, &grid, 70.0, 1.0).unwrap();
        assert!(sigma.values.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn dental_counts_and_bounds() {
        let grid = GridSpec::centered(128, 128, 0.4).unwrap();
        let dental = dental_phantom(14, &[3, 4, 10], &grid).unwrap();
        let titanium = dental
            .spec
            .primitives
            .iter()
            .filter(|p| p.material.name == "titanium")
            .count();
        assert_eq!(titanium, 3);
        assert_eq!(dental.spec.primitives.len(), 1 + 14 + 3);
        let r = grid.circumradius();
        for pr in &dental.spec.primitives {
            assert!(pr.shape.max_extent_from(grid.center) <= r);
        }
        // also inside the bounding box, not just the circumcircle
        let (lo, hi) = grid.bounds();
        for pr in &dental.spec.primitives {
            let ext = pr.shape.max_extent_from(grid.center);
            assert!(grid.center.x - ext >= lo.x && grid.center.x + ext <= hi.x);
            assert!(grid.center.y - ext >= lo.y && grid.center.y + ext <= hi.y);
        }
    }

    #[test]
    fn dental_sigma_bounded_without_crowns() {
        let grid = GridSpec::<f64>::centered(96, 96, 0.5).unwrap();
        let dental = dental_phantom(14, &[], &grid).unwrap();
        let (_, sigma) = rasterize_pair(&dental.spec, &grid, 70.0, 1.0).unwrap();
        let bone = builtin_material::<f64>("bone").unwrap();
        let enamel = builtin_material::<f64>("enamel").unwrap();
        let bound = bone
            .effective_pair(70.0, 1.0)
            .unwrap()
            .sigma0
            .abs()
            .max(enamel.effective_pair(70.0, 1.0).unwrap().sigma0.abs());
        assert!(sigma.values.iter().all(|v| v.abs() <= bound + 1e-12));
    }

    #[test]
    fn rasterize_loglog_consistency() {
        let ti = Arc::new(builtin_material::<f64>("titanium").unwrap());
        let mut spec = PhantomSpec::new();
        spec.push(
            Shape::Disk {
                center: Vec2::zero(),
                radius: 8.0,
            },
            ti,
        );
        let grid = GridSpec::centered(48, 48, 0.5).unwrap();
        // 67 keV sits between the 65 and 70 keV knots
        let (ea, eb, e) = (65.0_f64, 70.0, 67.0);
        let ia = rasterize(&spec, &grid, ea).unwrap();
        let ib = rasterize(&spec, &grid, eb).unwrap();
        let ie = rasterize(&spec, &grid, e).unwrap();
        let t = (e.ln() - ea.ln()) / (eb.ln() - ea.ln());
        for ((a, b), v) in ia.values.iter().zip(ib.values.iter()).zip(ie.values.iter()) {
            if *a > 0.0 && *b > 0.0 {
                let expect = (a.ln() + (b.ln() - a.ln()) * t).exp();
                assert!((v - expect).abs() < 1e-10);
            } else {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn annulus_intervals() {
        let shape = Shape::Annulus {
            center: Vec2::zero(),
            r_inner: 3.0,
            r_outer: 5.0,
        };
        let ray = Ray::new(Vec2::new(-10.0, 0.0), Vec2::new(1.0, 0.0), (0.0, 20.0));
        let mut iv = Vec::new();
        shape.ray_intervals(&ray, &mut iv);
        assert_eq!(iv.len(), 2);
        let total: f64 = iv.iter().map(|(a, b)| b - a).sum();
        assert!((total - 4.0).abs() < 1e-12);
        // tangent-ish ray through the hole only
        let ray = Ray::new(Vec2::new(-10.0, 4.0), Vec2::new(1.0, 0.0), (0.0, 20.0));
        shape.ray_intervals(&ray, &mut iv);
        assert_eq!(iv.len(), 1);
        let chord = 2.0 * (25.0_f64 - 16.0).sqrt();
        assert!((iv[0].1 - iv[0].0 - chord).abs() < 1e-12);
    }
}
