//! Scan geometry: view/bin to world-space rays, grid clipping, and
//! quadrature sample points along rays.
//!
//! Conventions: the rotation axis is the world origin. For view angle phi the
//! ray direction is (sin phi, -cos phi) and the detector coordinate u runs
//! along (cos phi, sin phi). Detector coordinates are scaled to the rotation
//! axis, so fan-beam bins are equiangular with fan angle gamma = u / sad.

use crate::error::{Error, Result};
use crate::rng;
use crate::Real;
use rand::Rng;

/// 2D point / vector in millimetres.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Real> Vec2<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero())
    }

    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 2D cross product.
    pub fn cross(self, o: Self) -> T {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> T {
        self.dot(self).sqrt()
    }

    pub fn scale(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s)
    }

    pub fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y)
    }

    pub fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanMode {
    Parallel,
    Fan,
}

impl ScanMode {
    pub fn name(self) -> &'static str {
        match self {
            ScanMode::Parallel => "parallel",
            ScanMode::Fan => "fan",
        }
    }
}

/// Acquisition description: view sampling and detector layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanGeometry<T> {
    pub mode: ScanMode,
    pub n_views: usize,
    /// View angles cover [start, end) uniformly.
    pub angular_range: (T, T),
    pub n_bins: usize,
    /// Detector bin pitch in mm, measured at the rotation axis.
    pub bin_spacing: T,
    /// Source to rotation-axis distance in mm; fan mode only.
    pub source_axis_distance: T,
    pub detector_u_offset: T,
    /// Out-of-plane direction slope; fixed to 0 in this 2D code.
    pub out_of_plane_slope: T,
}

impl<T: Real> ScanGeometry<T> {
    pub fn parallel(n_views: usize, angular_range: (T, T), n_bins: usize, bin_spacing: T) -> Result<Self> {
        Self::new(
            ScanMode::Parallel,
            n_views,
            angular_range,
            n_bins,
            bin_spacing,
            T::zero(),
            T::zero(),
        )
    }

    pub fn fan(
        n_views: usize,
        angular_range: (T, T),
        n_bins: usize,
        bin_spacing: T,
        source_axis_distance: T,
    ) -> Result<Self> {
        Self::new(
            ScanMode::Fan,
            n_views,
            angular_range,
            n_bins,
            bin_spacing,
            source_axis_distance,
            T::zero(),
        )
    }

    pub fn new(
        mode: ScanMode,
        n_views: usize,
        angular_range: (T, T),
        n_bins: usize,
        bin_spacing: T,
        source_axis_distance: T,
        detector_u_offset: T,
    ) -> Result<Self> {
        if n_views < 1 || n_bins < 1 {
            return Err(Error::Geometry("n_views and n_bins must be >= 1".into()));
        }
        if bin_spacing <= T::zero() {
            return Err(Error::Geometry("bin_spacing must be positive".into()));
        }
        if mode == ScanMode::Fan && source_axis_distance <= T::zero() {
            return Err(Error::Geometry(
                "fan mode requires a positive source_axis_distance".into(),
            ));
        }
        Ok(Self {
            mode,
            n_views,
            angular_range,
            n_bins,
            bin_spacing,
            source_axis_distance,
            detector_u_offset,
            out_of_plane_slope: T::zero(),
        })
    }

    /// Default simulation geometry: parallel beam, views uniform over
    /// [0, pi), detector spanning the grid diagonal plus a 4-bin margin.
    pub fn default_parallel_for_grid(grid: &GridSpec<T>, n_views: usize, n_bins: usize) -> Result<Self> {
        if n_bins <= 4 {
            return Err(Error::Geometry("need more than 4 bins".into()));
        }
        let diag = grid.circumradius() * T::c(2.0);
        let spacing = diag / T::from_usize(n_bins - 4).unwrap();
        Self::parallel(n_views, (T::zero(), T::c(std::f64::consts::PI)), n_bins, spacing)
    }

    /// Default fan geometry over a full rotation with the same detector rule.
    pub fn default_fan_for_grid(
        grid: &GridSpec<T>,
        n_views: usize,
        n_bins: usize,
        source_axis_distance: T,
    ) -> Result<Self> {
        if n_bins <= 4 {
            return Err(Error::Geometry("need more than 4 bins".into()));
        }
        if source_axis_distance <= grid.circumradius() {
            return Err(Error::Geometry(
                "source_axis_distance must exceed the grid circumradius".into(),
            ));
        }
        let diag = grid.circumradius() * T::c(2.0);
        let spacing = diag / T::from_usize(n_bins - 4).unwrap();
        Self::fan(
            n_views,
            (T::zero(), T::c(2.0 * std::f64::consts::PI)),
            n_bins,
            spacing,
            source_axis_distance,
        )
    }

    pub fn view_angle(&self, view: usize) -> T {
        let (a, b) = self.angular_range;
        a + (b - a) * T::from_usize(view).unwrap() / T::from_usize(self.n_views).unwrap()
    }

    /// Signed detector coordinate of a bin, mm at the rotation axis.
    pub fn bin_u(&self, bin: usize) -> T {
        let half = T::from_usize(self.n_bins - 1).unwrap() / T::c(2.0);
        (T::from_usize(bin).unwrap() - half) * self.bin_spacing + self.detector_u_offset
    }

    /// Radius of the disk guaranteed to be covered by every view.
    pub fn support_radius(&self) -> T {
        T::from_usize(self.n_bins).unwrap() * self.bin_spacing / T::c(2.0)
            + self.detector_u_offset.abs()
    }

    /// Fractional bin index for a detector coordinate u.
    pub fn u_to_bin(&self, u: T) -> T {
        let half = T::from_usize(self.n_bins - 1).unwrap() / T::c(2.0);
        (u - self.detector_u_offset) / self.bin_spacing + half
    }

    pub fn check_indices(&self, view: usize, bin: usize) -> Result<()> {
        if view >= self.n_views {
            return Err(Error::OutOfBounds {
                what: "view",
                index: view,
                len: self.n_views,
            });
        }
        if bin >= self.n_bins {
            return Err(Error::OutOfBounds {
                what: "bin",
                index: bin,
                len: self.n_bins,
            });
        }
        Ok(())
    }
}

/// A single X-ray path o + t d for t in [t0, t1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray<T> {
    pub origin: Vec2<T>,
    pub direction: Vec2<T>,
    pub t_range: (T, T),
}

impl<T: Real> Ray<T> {
    pub fn new(origin: Vec2<T>, direction: Vec2<T>, t_range: (T, T)) -> Self {
        let n = direction.norm();
        Self {
            origin,
            direction: direction.scale(n.recip()),
            t_range,
        }
    }

    pub fn length(&self) -> T {
        self.t_range.1 - self.t_range.0
    }

    pub fn point_at(&self, t: T) -> Vec2<T> {
        self.origin.add(self.direction.scale(t))
    }

    /// Unsigned distance from a point to the infinite ray line.
    pub fn distance_to_line(&self, p: Vec2<T>) -> T {
        self.direction.cross(p.sub(self.origin)).abs()
    }
}

/// Reconstruction pixel lattice. `values[[iy, ix]]` layout is used by images.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec<T> {
    pub nx: usize,
    pub ny: usize,
    pub pixel_mm: T,
    pub center: Vec2<T>,
}

impl<T: Real> GridSpec<T> {
    pub fn new(nx: usize, ny: usize, pixel_mm: T, center: Vec2<T>) -> Result<Self> {
        if pixel_mm <= T::zero() {
            return Err(Error::Geometry("pixel_mm must be positive".into()));
        }
        if nx == 0 || ny == 0 {
            return Err(Error::Geometry("grid must have at least one pixel".into()));
        }
        Ok(Self {
            nx,
            ny,
            pixel_mm,
            center,
        })
    }

    pub fn centered(nx: usize, ny: usize, pixel_mm: T) -> Result<Self> {
        Self::new(nx, ny, pixel_mm, Vec2::zero())
    }

    pub fn width(&self) -> T {
        T::from_usize(self.nx).unwrap() * self.pixel_mm
    }

    pub fn height(&self) -> T {
        T::from_usize(self.ny).unwrap() * self.pixel_mm
    }

    /// Bounding box (min corner, max corner).
    pub fn bounds(&self) -> (Vec2<T>, Vec2<T>) {
        let hw = self.width() / T::c(2.0);
        let hh = self.height() / T::c(2.0);
        (
            Vec2::new(self.center.x - hw, self.center.y - hh),
            Vec2::new(self.center.x + hw, self.center.y + hh),
        )
    }

    pub fn circumradius(&self) -> T {
        let hw = self.width() / T::c(2.0);
        let hh = self.height() / T::c(2.0);
        (hw * hw + hh * hh).sqrt()
    }

    pub fn pixel_center(&self, ix: usize, iy: usize) -> Vec2<T> {
        let half_x = T::from_usize(self.nx - 1).unwrap() / T::c(2.0);
        let half_y = T::from_usize(self.ny - 1).unwrap() / T::c(2.0);
        Vec2::new(
            self.center.x + (T::from_usize(ix).unwrap() - half_x) * self.pixel_mm,
            self.center.y + (T::from_usize(iy).unwrap() - half_y) * self.pixel_mm,
        )
    }

    /// Continuous pixel coordinates of a world point (pixel centers at
    /// integer coordinates).
    pub fn world_to_pixel(&self, p: Vec2<T>) -> (T, T) {
        let half_x = T::from_usize(self.nx - 1).unwrap() / T::c(2.0);
        let half_y = T::from_usize(self.ny - 1).unwrap() / T::c(2.0);
        (
            (p.x - self.center.x) / self.pixel_mm + half_x,
            (p.y - self.center.y) / self.pixel_mm + half_y,
        )
    }

    pub fn coord_map(&self) -> CoordMap<T> {
        CoordMap {
            center: self.center,
            half_extent: self.width().max(self.height()) / T::c(2.0),
        }
    }
}

/// Affine map from world mm to network coordinates in [-1, 1]^2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoordMap<T> {
    pub center: Vec2<T>,
    pub half_extent: T,
}

impl<T: Real> CoordMap<T> {
    pub fn normalize(&self, p: Vec2<T>) -> Vec2<T> {
        p.sub(self.center).scale(self.half_extent.recip())
    }
}

impl<T: Real> ScanGeometry<T> {
    /// Convert the scalar type, e.g. to run a reconstruction in f32.
    pub fn cast<U: Real>(&self) -> ScanGeometry<U> {
        let c = |v: T| U::c(v.to_f64().unwrap());
        ScanGeometry {
            mode: self.mode,
            n_views: self.n_views,
            angular_range: (c(self.angular_range.0), c(self.angular_range.1)),
            n_bins: self.n_bins,
            bin_spacing: c(self.bin_spacing),
            source_axis_distance: c(self.source_axis_distance),
            detector_u_offset: c(self.detector_u_offset),
            out_of_plane_slope: c(self.out_of_plane_slope),
        }
    }
}

impl<T: Real> GridSpec<T> {
    pub fn cast<U: Real>(&self) -> GridSpec<U> {
        let c = |v: T| U::c(v.to_f64().unwrap());
        GridSpec {
            nx: self.nx,
            ny: self.ny,
            pixel_mm: c(self.pixel_mm),
            center: Vec2::new(c(self.center.x), c(self.center.y)),
        }
    }
}

/// Unit direction (sin phi, -cos phi) of a view.
pub fn view_direction<T: Real>(phi: T) -> Vec2<T> {
    Vec2::new(phi.sin(), -phi.cos())
}

/// Detector axis (cos phi, sin phi) of a view.
pub fn detector_axis<T: Real>(phi: T) -> Vec2<T> {
    Vec2::new(phi.cos(), phi.sin())
}

/// World-space ray of a sinogram bin.
pub fn ray_for_bin<T: Real>(geometry: &ScanGeometry<T>, view: usize, bin: usize) -> Result<Ray<T>> {
    geometry.check_indices(view, bin)?;
    let phi = geometry.view_angle(view);
    let d = view_direction(phi);
    let e_u = detector_axis(phi);
    let u = geometry.bin_u(bin);
    let r = geometry.support_radius();
    match geometry.mode {
        ScanMode::Parallel => {
            let origin = e_u.scale(u).sub(d.scale(r));
            Ok(Ray::new(origin, d, (T::zero(), T::c(2.0) * r)))
        }
        ScanMode::Fan => {
            let sad = geometry.source_axis_distance;
            let origin = d.scale(sad).scale(-T::one());
            let gamma = u / sad;
            let dir = d.scale(gamma.cos()).add(e_u.scale(gamma.sin()));
            Ok(Ray::new(origin, dir, (T::zero(), sad + r)))
        }
    }
}

/// Restrict a ray's parameter range to the grid bounding box.
///
/// Rays that miss the box come back with a degenerate (t0, t0) range.
pub fn clip_to_grid<T: Real>(ray: &Ray<T>, grid: &GridSpec<T>) -> Ray<T> {
    let (lo, hi) = grid.bounds();
    let mut t0 = ray.t_range.0;
    let mut t1 = ray.t_range.1;
    for (o, d, a, b) in [
        (ray.origin.x, ray.direction.x, lo.x, hi.x),
        (ray.origin.y, ray.direction.y, lo.y, hi.y),
    ] {
        if d.abs() < T::c(1e-300) {
            if o < a || o > b {
                t1 = t0;
            }
            continue;
        }
        let inv = d.recip();
        let (ta, tb) = ((a - o) * inv, (b - o) * inv);
        let (ta, tb) = if ta <= tb { (ta, tb) } else { (tb, ta) };
        t0 = t0.max(ta);
        t1 = t1.min(tb);
    }
    if t1 < t0 {
        t1 = t0;
    }
    Ray {
        origin: ray.origin,
        direction: ray.direction,
        t_range: (t0, t1),
    }
}

/// Midpoint-rule sample points along a clipped ray.
///
/// With jitter enabled each point is drawn uniformly inside its
/// sub-interval, reproducibly for a given seed.
pub fn sample_points<T: Real>(
    ray: &Ray<T>,
    n_samples: usize,
    jitter: bool,
    rng_seed: u64,
) -> Result<(Vec<Vec2<T>>, T)> {
    let length = ray.length();
    if n_samples < 1 {
        return Err(Error::Geometry("n_samples must be >= 1".into()));
    }
    if length <= T::zero() {
        return Err(Error::EmptyRay);
    }
    let dt = length / T::from_usize(n_samples).unwrap();
    let mut points = Vec::with_capacity(n_samples);
    if jitter {
        let mut rng = rng::stream_rng(rng_seed, &[n_samples as u64]);
        for i in 0..n_samples {
            let frac = T::c(rng.gen::<f64>());
            let t = ray.t_range.0 + (T::from_usize(i).unwrap() + frac) * dt;
            points.push(ray.point_at(t));
        }
    } else {
        for i in 0..n_samples {
            let t = ray.t_range.0 + (T::from_usize(i).unwrap() + T::c(0.5)) * dt;
            points.push(ray.point_at(t));
        }
    }
    Ok((points, dt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid100() -> GridSpec<f64> {
        GridSpec::centered(100, 100, 1.0).unwrap()
    }

    #[test]
    fn parallel_axis_aligned_ray() {
        let g = ScanGeometry::parallel(360, (0.0, std::f64::consts::PI), 601, 0.5).unwrap();
        let ray = ray_for_bin(&g, 0, 300).unwrap();
        assert!((ray.direction.x - 0.0).abs() < 1e-12);
        assert!((ray.direction.y + 1.0).abs() < 1e-12);
        // passes through the rotation axis
        assert!(ray.distance_to_line(Vec2::zero()) < 1e-12);
    }

    #[test]
    fn parallel_rays_are_parallel() {
        let g = ScanGeometry::parallel(12, (0.0, std::f64::consts::PI), 64, 1.0).unwrap();
        for view in 0..g.n_views {
            let d0 = ray_for_bin(&g, view, 0).unwrap().direction;
            for bin in 1..g.n_bins {
                let d = ray_for_bin(&g, view, bin).unwrap().direction;
                assert!(d0.cross(d).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fan_central_ray_hits_axis() {
        let g = ScanGeometry::fan(
            90,
            (0.0, 2.0 * std::f64::consts::PI),
            601,
            0.5,
            500.0,
        )
        .unwrap();
        for view in [0, 13, 47] {
            let ray = ray_for_bin(&g, view, 300).unwrap();
            assert!(ray.distance_to_line(Vec2::zero()) < 1e-9);
        }
    }

    #[test]
    fn unit_norm_directions() {
        let g = ScanGeometry::fan(37, (0.0, 2.0 * std::f64::consts::PI), 33, 2.0, 400.0).unwrap();
        for v in 0..g.n_views {
            for b in 0..g.n_bins {
                let r = ray_for_bin(&g, v, b).unwrap();
                assert!((r.direction.norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn index_bounds_error() {
        let g = ScanGeometry::parallel(4, (0.0, 3.14), 8, 1.0).unwrap();
        assert!(matches!(
            ray_for_bin(&g, 4, 0),
            Err(Error::OutOfBounds { what: "view", .. })
        ));
        assert!(matches!(
            ray_for_bin(&g, 0, 8),
            Err(Error::OutOfBounds { what: "bin", .. })
        ));
    }

    #[test]
    fn clip_horizontal_through_center() {
        let ray = Ray::new(Vec2::new(-200.0, 0.0), Vec2::new(1.0, 0.0), (0.0, 400.0));
        let clipped = clip_to_grid(&ray, &grid100());
        assert!((clipped.length() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn clip_miss_is_degenerate() {
        let ray = Ray::new(Vec2::new(-200.0, 80.0), Vec2::new(1.0, 0.0), (0.0, 400.0));
        let clipped = clip_to_grid(&ray, &grid100());
        assert_eq!(clipped.length(), 0.0);
    }

    #[test]
    fn clip_diagonal_through_corners() {
        let g = grid100();
        let dir = Vec2::new(1.0, 1.0);
        let ray = Ray::new(Vec2::new(-120.0, -120.0), dir, (0.0, 500.0));
        let clipped = clip_to_grid(&ray, &g);
        assert!((clipped.length() - 100.0 * 2.0_f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn midpoint_samples() {
        let ray = Ray::<f64>::new(Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), (0.0, 10.0));
        let (pts, dt) = sample_points(&ray, 5, false, 0).unwrap();
        assert_eq!(dt, 2.0);
        let expect = [1.0, 3.0, 5.0, 7.0, 9.0];
        for (p, e) in pts.iter().zip(expect) {
            assert!((p.x - e).abs() < 1e-12);
        }
    }

    #[test]
    fn jitter_is_deterministic() {
        let ray = Ray::new(Vec2::new(0.0, 0.0), Vec2::new(0.6, 0.8), (0.0, 25.0));
        let (a, _) = sample_points(&ray, 16, true, 42).unwrap();
        let (b, _) = sample_points(&ray, 16, true, 42).unwrap();
        assert_eq!(a, b);
        let (c, _) = sample_points(&ray, 16, true, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn empty_ray_errors() {
        let ray = Ray::new(Vec2::zero(), Vec2::new(1.0, 0.0), (5.0, 5.0));
        assert!(matches!(
            sample_points(&ray, 4, false, 0),
            Err(Error::EmptyRay)
        ));
    }

    #[test]
    fn opposite_views_share_lines() {
        let g = ScanGeometry::parallel(360, (0.0, 2.0 * std::f64::consts::PI), 64, 1.0).unwrap();
        for (view, bin) in [(0usize, 5usize), (17, 40), (90, 0)] {
            let a = ray_for_bin(&g, view, bin).unwrap();
            let b = ray_for_bin(&g, view + 180, g.n_bins - 1 - bin).unwrap();
            // same line, opposite direction
            assert!(a.direction.add(b.direction).norm() < 1e-12);
            assert!(b.distance_to_line(a.origin) < 1e-9);
            assert!(a.distance_to_line(b.origin) < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn quadrature_exact_for_affine(
            n in 1usize..200,
            a in -5.0_f64..5.0,
            b in -5.0_f64..5.0,
            len in 0.1_f64..300.0,
        ) {
            let ray = Ray::new(Vec2::zero(), Vec2::new(1.0, 0.0), (0.0, len));
            let (pts, dt) = sample_points(&ray, n, false, 0).unwrap();
            // integrand f(t) = a + b t, integral over [0, len]
            let quad: f64 = pts.iter().map(|p| a + b * p.x).sum::<f64>() * dt;
            let exact = a * len + b * len * len / 2.0;
            prop_assert!((quad - exact).abs() <= 1e-12 * exact.abs().max(1.0));
        }

        #[test]
        fn constant_integrand_total_length(n in 1usize..300, len in 0.01_f64..500.0) {
            let ray = Ray::new(Vec2::zero(), Vec2::new(0.0, 1.0), (0.0, len));
            let (pts, dt) = sample_points(&ray, n, false, 0).unwrap();
            prop_assert!((dt * pts.len() as f64 - len).abs() < 1e-12 * len.max(1.0));
        }
    }
}
