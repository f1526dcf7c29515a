//! Energy-dependent attenuation tables and X-ray spectra.
//!
//! Materials carry (keV, mm^-1) knot tables interpolated log-log between
//! knots. Spectra are discrete line sets normalized to unit total weight.
//! A handful of representative tables ship with the crate.

use crate::error::{Error, Result};
use crate::Real;
use std::path::Path;
use std::sync::Arc;

/// Central-difference step (keV) used when extracting attenuation slopes.
pub const DEFAULT_SLOPE_DE: f64 = 1.0;

/// Discrete X-ray spectrum: fractional energy per line, summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum<T> {
    energies: Vec<T>,
    weights: Vec<T>,
}

impl<T: Real> Spectrum<T> {
    /// Build a spectrum from raw lines; weights are normalized here.
    pub fn new(energies: Vec<T>, weights: Vec<T>) -> Result<Self> {
        if energies.is_empty() || energies.len() != weights.len() {
            return Err(Error::Shape(
                "spectrum needs equal, nonzero numbers of energies and weights".into(),
            ));
        }
        for pair in energies.windows(2) {
            if pair[1] <= pair[0] {
                return Err(Error::Config(
                    "spectrum energies must be strictly increasing".into(),
                ));
            }
        }
        if weights.iter().any(|w| *w < T::zero() || !w.is_finite()) {
            return Err(Error::Config("spectrum weights must be nonnegative".into()));
        }
        let total: T = weights.iter().copied().sum();
        if total <= T::zero() {
            return Err(Error::Config("spectrum has zero total weight".into()));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self { energies, weights })
    }

    pub fn energies(&self) -> &[T] {
        &self.energies
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn lines(&self) -> impl Iterator<Item = (T, T)> + '_ {
        self.energies
            .iter()
            .copied()
            .zip(self.weights.iter().copied())
    }

    pub fn min_energy(&self) -> T {
        self.energies[0]
    }

    pub fn max_energy(&self) -> T {
        *self.energies.last().unwrap()
    }

    pub fn mean_energy(&self) -> T {
        self.lines().map(|(e, w)| e * w).sum()
    }
}

/// Two-line spectrum with weights (w1, 1 - w1).
pub fn make_bichromatic<T: Real>(e1: T, e2: T, w1: T) -> Result<Spectrum<T>> {
    if e1 >= e2 {
        return Err(Error::Config("bichromatic requires e1 < e2".into()));
    }
    if w1 < T::zero() || w1 > T::one() {
        return Err(Error::Config("w1 must lie in [0, 1]".into()));
    }
    // keep both lines so the support stays [e1, e2]; degenerate weights allowed
    let eps = T::c(f64::MIN_POSITIVE);
    let w2 = (T::one() - w1).max(eps);
    let w1 = w1.max(eps);
    Spectrum::new(vec![e1, e2], vec![w1, w2])
}

/// n equally spaced lines on [e0 - half_width, e0 + half_width], equal weights.
pub fn make_uniform<T: Real>(e0: T, half_width: T, n_lines: usize) -> Result<Spectrum<T>> {
    if n_lines < 2 {
        return Err(Error::Config("uniform spectrum needs n_lines >= 2".into()));
    }
    if half_width <= T::zero() {
        return Err(Error::Config("half_width must be positive".into()));
    }
    let lo = e0 - half_width;
    let step = T::c(2.0) * half_width / T::from_usize(n_lines - 1).unwrap();
    let energies: Vec<T> = (0..n_lines)
        .map(|i| lo + step * T::from_usize(i).unwrap())
        .collect();
    let w = T::one() / T::from_usize(n_lines).unwrap();
    Spectrum::new(energies, vec![w; n_lines])
}

/// Attenuation values at a reference energy: mu0 = mu(E0), sigma0 = dmu/dE at E0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyPair<T> {
    pub mu0: T,
    pub sigma0: T,
}

/// Material attenuation table, (keV, mm^-1) knots with strictly
/// increasing energies.
#[derive(Debug, Clone, PartialEq)]
pub struct Material<T> {
    pub name: String,
    mu_table: Vec<(T, T)>,
}

impl<T: Real> Material<T> {
    pub fn new(name: impl Into<String>, mu_table: Vec<(T, T)>) -> Result<Self> {
        if mu_table.is_empty() {
            return Err(Error::Config("material table is empty".into()));
        }
        for pair in mu_table.windows(2) {
            if pair[1].0 <= pair[0].0 {
                return Err(Error::Config(
                    "material energies must be strictly increasing".into(),
                ));
            }
        }
        if mu_table.iter().any(|(_, m)| *m < T::zero() || !m.is_finite()) {
            return Err(Error::Config("attenuation values must be nonnegative".into()));
        }
        Ok(Self {
            name: name.into(),
            mu_table,
        })
    }

    pub fn table(&self) -> &[(T, T)] {
        &self.mu_table
    }

    pub fn energy_range(&self) -> (T, T) {
        (self.mu_table[0].0, self.mu_table.last().unwrap().0)
    }

    fn range_error(&self, e: T) -> Error {
        let (lo, hi) = self.energy_range();
        Error::EnergyRange {
            material: self.name.clone(),
            energy: e.to_f64().unwrap_or(f64::NAN),
            min: lo.to_f64().unwrap_or(f64::NAN),
            max: hi.to_f64().unwrap_or(f64::NAN),
        }
    }

    /// Attenuation at energy `e`, log-log interpolated between knots.
    ///
    /// Falls back to linear interpolation when a bracketing value is zero.
    pub fn attenuation_at(&self, e: T) -> Result<T> {
        let (lo, hi) = self.energy_range();
        if e < lo || e > hi {
            return Err(self.range_error(e));
        }
        let idx = match self
            .mu_table
            .binary_search_by(|(ek, _)| ek.partial_cmp(&e).unwrap())
        {
            Ok(i) => return Ok(self.mu_table[i].1),
            Err(i) => i,
        };
        let (ea, va) = self.mu_table[idx - 1];
        let (eb, vb) = self.mu_table[idx];
        if va <= T::zero() || vb <= T::zero() {
            let t = (e - ea) / (eb - ea);
            return Ok(va + (vb - va) * t);
        }
        let t = (e.ln() - ea.ln()) / (eb.ln() - ea.ln());
        Ok((va.ln() + (vb.ln() - va.ln()) * t).exp())
    }

    /// First-order description about E0: value and central-difference slope.
    pub fn effective_pair(&self, e0: T, de: T) -> Result<EnergyPair<T>> {
        let mu0 = self.attenuation_at(e0)?;
        let hi = self.attenuation_at(e0 + de)?;
        let lo = self.attenuation_at(e0 - de)?;
        Ok(EnergyPair {
            mu0,
            sigma0: (hi - lo) / (T::c(2.0) * de),
        })
    }
}

/// Shared handle used by phantoms so primitives can reference one table.
pub type MaterialRef<T> = Arc<Material<T>>;

fn parse_two_columns(path_label: &str, text: &str) -> Result<Vec<(f64, f64)>> {
    let mut rows = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut cols = line.split_whitespace();
        let parse = |s: Option<&str>, what: &str| -> Result<f64> {
            s.ok_or_else(|| Error::Parse {
                path: path_label.to_string(),
                line: lineno + 1,
                msg: format!("missing {what} column"),
            })?
            .parse::<f64>()
            .map_err(|e| Error::Parse {
                path: path_label.to_string(),
                line: lineno + 1,
                msg: format!("bad {what}: {e}"),
            })
        };
        let e = parse(cols.next(), "energy")?;
        let v = parse(cols.next(), "value")?;
        if cols.next().is_some() {
            return Err(Error::Parse {
                path: path_label.to_string(),
                line: lineno + 1,
                msg: "expected exactly two columns".into(),
            });
        }
        rows.push((e, v));
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            path: path_label.to_string(),
            line: 0,
            msg: "no data rows".into(),
        });
    }
    Ok(rows)
}

fn spectrum_from_rows<T: Real>(label: &str, rows: &[(f64, f64)]) -> Result<Spectrum<T>> {
    for (i, (_, w)) in rows.iter().enumerate() {
        if *w < 0.0 {
            return Err(Error::Parse {
                path: label.to_string(),
                line: i + 1,
                msg: format!("negative weight {w}"),
            });
        }
    }
    Spectrum::new(
        rows.iter().map(|(e, _)| T::c(*e)).collect(),
        rows.iter().map(|(_, w)| T::c(*w)).collect(),
    )
}

/// Load a two-column (keV, weight) spectrum file and normalize it.
pub fn load_spectrum<T: Real>(path: impl AsRef<Path>) -> Result<Spectrum<T>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let label = path.display().to_string();
    let rows = parse_two_columns(&label, &text)?;
    spectrum_from_rows(&label, &rows)
}

/// Load a two-column (keV, mm^-1) material table.
pub fn load_material<T: Real>(name: impl Into<String>, path: impl AsRef<Path>) -> Result<Material<T>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let rows = parse_two_columns(&path.display().to_string(), &text)?;
    Material::new(name, rows.iter().map(|(e, v)| (T::c(*e), T::c(*v))).collect())
}

const WATER_TXT: &str = include_str!("../data/materials/water.txt");
const BONE_TXT: &str = include_str!("../data/materials/bone.txt");
const ENAMEL_TXT: &str = include_str!("../data/materials/enamel.txt");
const TITANIUM_TXT: &str = include_str!("../data/materials/titanium.txt");
const SPECTRUM_100KVP_TXT: &str = include_str!("../data/spectra/spectrum_100kvp.txt");

/// Bundled material table by name: water, bone, enamel, titanium.
pub fn builtin_material<T: Real>(name: &str) -> Result<Material<T>> {
    let text = match name {
        "water" => WATER_TXT,
        "bone" => BONE_TXT,
        "enamel" => ENAMEL_TXT,
        "titanium" => TITANIUM_TXT,
        _ => {
            return Err(Error::Config(format!(
                "unknown builtin material '{name}' (water, bone, enamel, titanium)"
            )))
        }
    };
    let rows = parse_two_columns(&format!("builtin:{name}"), text)?;
    Material::new(name, rows.iter().map(|(e, v)| (T::c(*e), T::c(*v))).collect())
}

/// Bundled 100 kVp-like tube spectrum.
pub fn builtin_spectrum_100kvp<T: Real>() -> Result<Spectrum<T>> {
    let rows = parse_two_columns("builtin:spectrum_100kvp", SPECTRUM_100KVP_TXT)?;
    spectrum_from_rows("builtin:spectrum_100kvp", &rows)
}

/// The two-knot metal table of the bichromatic toy problem.
pub fn toy_metal<T: Real>() -> Material<T> {
    Material::new("toy-metal", vec![(T::c(64.0), T::c(64.0)), (T::c(80.0), T::c(5.0))]).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn interpolation_exact_at_knots() {
        let m = toy_metal::<f64>();
        assert_eq!(m.attenuation_at(64.0).unwrap(), 64.0);
        assert_eq!(m.attenuation_at(80.0).unwrap(), 5.0);
    }

    #[test]
    fn loglog_geometric_mean_midpoint() {
        let m = Material::new("w", vec![(40.0_f64, 0.04), (90.0, 0.01)]).unwrap();
        let e = (40.0_f64 * 90.0).sqrt();
        let v = m.attenuation_at(e).unwrap();
        assert!((v - (0.04_f64 * 0.01).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_energy() {
        let m = toy_metal::<f64>();
        assert!(matches!(
            m.attenuation_at(63.9),
            Err(Error::EnergyRange { .. })
        ));
        assert!(matches!(
            m.attenuation_at(80.1),
            Err(Error::EnergyRange { .. })
        ));
    }

    #[test]
    fn effective_pair_flat_table() {
        let m = Material::new("flat", vec![(20.0_f64, 0.5), (120.0, 0.5)]).unwrap();
        let p = m.effective_pair(70.0, 1.0).unwrap();
        assert_eq!(p.mu0, 0.5);
        assert!(p.sigma0.abs() < 1e-15);
    }

    #[test]
    fn effective_pair_toy_metal() {
        let m = toy_metal::<f64>();
        let p = m.effective_pair(72.0, 8.0).unwrap();
        assert!((p.sigma0 - (5.0 - 64.0) / 16.0).abs() < 1e-12);
        // mu0 is the log-log interpolated value between the knots
        let t = (72.0_f64.ln() - 64.0_f64.ln()) / (80.0_f64.ln() - 64.0_f64.ln());
        let expect = (64.0_f64.ln() + (5.0_f64.ln() - 64.0_f64.ln()) * t).exp();
        assert!((p.mu0 - expect).abs() < 1e-12);
    }

    #[test]
    fn slope_converges_quadratically_for_power_law() {
        // mu(E) = c E^-3 is exactly log-log linear, so interpolation is exact
        // and the central difference error is O(dE^2).
        let c = 5.0e4_f64;
        let knots: Vec<(f64, f64)> = (2..=12).map(|i| {
            let e = 10.0 * i as f64;
            (e, c * e.powi(-3))
        }).collect();
        let m = Material::new("p3", knots).unwrap();
        let e0 = 65.0_f64;
        let truth = -3.0 * c * e0.powi(-4);
        let err = |de: f64| (m.effective_pair(e0, de).unwrap().sigma0 - truth).abs();
        let (e1, e2) = (err(8.0), err(4.0));
        let ratio = e1 / e2;
        assert!((ratio - 4.0).abs() < 0.8, "ratio {ratio}");
    }

    #[test]
    fn bichromatic_lines() {
        let s = make_bichromatic(64.0_f64, 80.0, 0.5).unwrap();
        assert_eq!(s.energies(), &[64.0, 80.0]);
        assert!((s.weights()[0] - 0.5).abs() < 1e-15);
        assert!((s.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // degenerate: all weight at e1
        let s = make_bichromatic(64.0_f64, 80.0, 1.0).unwrap();
        assert!(s.weights()[1] < 1e-290);
    }

    #[test]
    fn uniform_two_lines() {
        let s = make_uniform(70.0_f64, 10.0, 2).unwrap();
        assert_eq!(s.energies(), &[60.0, 80.0]);
        assert_eq!(s.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn uniform_mean_is_center() {
        for n in [2usize, 7, 100, 2001] {
            let s = make_uniform(70.0_f64, 10.0, n).unwrap();
            assert!((s.mean_energy() - 70.0).abs() < 1e-12);
        }
    }

    #[test]
    fn builtin_tables_load() {
        for name in ["water", "bone", "enamel", "titanium"] {
            let m = builtin_material::<f64>(name).unwrap();
            let (lo, hi) = m.energy_range();
            assert!(lo <= 20.0 && hi >= 120.0);
            assert!(m.table().len() >= 20);
        }
        let s = builtin_spectrum_100kvp::<f64>().unwrap();
        assert!((s.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(s.max_energy(), 100.0);
    }

    #[test]
    fn titanium_slope_is_negative() {
        let ti = builtin_material::<f64>("titanium").unwrap();
        let p = ti.effective_pair(70.0, 1.0).unwrap();
        assert!(p.sigma0 < 0.0);
    }

    #[test]
    fn negative_weight_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        std::fs::write(&path, "# spectrum\n20 0.5\n30 -0.1\n").unwrap();
        match load_spectrum::<f64>(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_file_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        std::fs::write(&path, "20 0.5\nnot-a-number 1\n").unwrap();
        match load_spectrum::<f64>(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn interpolation_monotone_between_knots(
            va in 1e-4_f64..10.0,
            vb in 1e-4_f64..10.0,
            t in 0.0_f64..1.0,
        ) {
            let m = Material::new("m", vec![(20.0, va), (120.0, vb)]).unwrap();
            let e = 20.0 + 100.0 * t;
            let v = m.attenuation_at(e).unwrap();
            let (lo, hi) = (va.min(vb), va.max(vb));
            prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
        }

        #[test]
        fn spectra_normalized(
            n in 2usize..50,
            scale in 0.1_f64..100.0,
        ) {
            let energies: Vec<f64> = (0..n).map(|i| 20.0 + i as f64).collect();
            let weights: Vec<f64> = (0..n).map(|i| scale * (1.0 + (i % 5) as f64)).collect();
            let s = Spectrum::new(energies, weights).unwrap();
            prop_assert!((s.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
