//! File formats: binary sinograms with a text geometry sidecar, 16-bit
//! PGM image export with linear windowing, full-precision CSV images,
//! network checkpoints, and loss curves.

use crate::error::{Error, Result};
use crate::geometry::{GridSpec, ScanGeometry, ScanMode, Vec2};
use crate::inr::{DenseLayer, MlpParams};
use crate::phantom::{Image, ImageKind};
use crate::projector::Sinogram;
use ndarray::Array2;
use std::io::{Read, Write};
use std::path::Path;

const SINO_MAGIC: &[u8; 8] = b"PTSINO01";
const CKPT_MAGIC: &[u8; 8] = b"PTCKPT01";

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    Ok(std::io::BufWriter::new(std::fs::File::create(path)?))
}

/// Write a sinogram: 32-byte header (magic, n_views, n_bins, bin_spacing)
/// followed by row-major little-endian f64 values, plus a `.geom` text
/// sidecar carrying the full geometry.
pub fn write_sinogram(path: impl AsRef<Path>, sino: &Sinogram<f64>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    w.write_all(SINO_MAGIC)?;
    w.write_all(&(sino.geometry.n_views as u32).to_le_bytes())?;
    w.write_all(&(sino.geometry.n_bins as u32).to_le_bytes())?;
    w.write_all(&sino.geometry.bin_spacing.to_le_bytes())?;
    w.write_all(&[0u8; 8])?;
    for v in sino.values.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;

    let g = &sino.geometry;
    let sidecar = format!(
        "mode = {}\nn_views = {}\nn_bins = {}\nbin_spacing = {}\n\
         angular_start = {}\nangular_end = {}\nsource_axis_distance = {}\n\
         detector_u_offset = {}\nout_of_plane_slope = {}\n",
        g.mode.name(),
        g.n_views,
        g.n_bins,
        g.bin_spacing,
        g.angular_range.0,
        g.angular_range.1,
        g.source_axis_distance,
        g.detector_u_offset,
        g.out_of_plane_slope
    );
    std::fs::write(sidecar_path(path), sidecar)?;
    Ok(())
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".geom");
    std::path::PathBuf::from(p)
}

fn parse_sidecar(path: &Path) -> Result<ScanGeometry<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut kv = std::collections::HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: path.display().to_string(),
            line: lineno + 1,
            msg: "expected key = value".into(),
        })?;
        kv.insert(k.trim().to_string(), v.trim().to_string());
    }
    let get = |k: &str| {
        kv.get(k).ok_or_else(|| Error::Parse {
            path: path.display().to_string(),
            line: 0,
            msg: format!("missing key {k}"),
        })
    };
    let num = |k: &str| -> Result<f64> {
        get(k)?.parse::<f64>().map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: 0,
            msg: format!("bad {k}: {e}"),
        })
    };
    let mode = match get("mode")?.as_str() {
        "parallel" => ScanMode::Parallel,
        "fan" => ScanMode::Fan,
        other => {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: 0,
                msg: format!("unknown mode {other}"),
            })
        }
    };
    ScanGeometry::new(
        mode,
        num("n_views")? as usize,
        (num("angular_start")?, num("angular_end")?),
        num("n_bins")? as usize,
        num("bin_spacing")?,
        num("source_axis_distance")?,
        num("detector_u_offset")?,
    )
}

/// Read a sinogram written by [`write_sinogram`].
pub fn read_sinogram(path: impl AsRef<Path>) -> Result<Sinogram<f64>> {
    let path = path.as_ref();
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut header = [0u8; 32];
    f.read_exact(&mut header)?;
    if &header[..8] != SINO_MAGIC {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line: 0,
            msg: "bad magic".into(),
        });
    }
    let n_views = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let n_bins = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
    let bin_spacing = f64::from_le_bytes(header[16..24].try_into().unwrap());
    let geometry = parse_sidecar(&sidecar_path(path))?;
    if geometry.n_views != n_views || geometry.n_bins != n_bins {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line: 0,
            msg: "header and sidecar disagree".into(),
        });
    }
    if (geometry.bin_spacing - bin_spacing).abs() > 1e-12 {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line: 0,
            msg: "header and sidecar bin_spacing disagree".into(),
        });
    }
    let mut buf = vec![0u8; n_views * n_bins * 8];
    f.read_exact(&mut buf)?;
    let mut values = Array2::zeros((n_views, n_bins));
    for (i, chunk) in buf.chunks_exact(8).enumerate() {
        values[[i / n_bins, i % n_bins]] = f64::from_le_bytes(chunk.try_into().unwrap());
    }
    Ok(Sinogram { geometry, values })
}

/// CSV dump of a sinogram (one row per view), full precision.
pub fn write_sinogram_csv(path: impl AsRef<Path>, sino: &Sinogram<f64>) -> Result<()> {
    let mut w = create(path.as_ref())?;
    for v in 0..sino.geometry.n_views {
        let row: Vec<String> = sino.values.row(v).iter().map(|x| format!("{x}")).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// 16-bit binary PGM with linear windowing: lo maps to 0, hi to 65535,
/// values outside clamp.
pub fn write_image_pgm(
    path: impl AsRef<Path>,
    image: &Image<f64>,
    window: (f64, f64),
) -> Result<()> {
    let (lo, hi) = window;
    if !(lo < hi) {
        return Err(Error::Config("window requires lo < hi".into()));
    }
    let mut w = create(path.as_ref())?;
    let (ny, nx) = image.values.dim();
    write!(w, "P5\n{nx} {ny}\n65535\n")?;
    // top row of the file is the largest y
    for iy in (0..ny).rev() {
        for ix in 0..nx {
            let v = image.values[[iy, ix]];
            let t = ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
            let g = (t * 65535.0).round() as u16;
            w.write_all(&g.to_be_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Full-precision CSV image with a metadata comment line; round-trips
/// exactly through [`read_image_csv`].
pub fn write_image_csv(path: impl AsRef<Path>, image: &Image<f64>) -> Result<()> {
    let mut w = create(path.as_ref())?;
    let g = &image.grid;
    writeln!(
        w,
        "# nx={} ny={} pixel_mm={} cx={} cy={} kind={}",
        g.nx,
        g.ny,
        g.pixel_mm,
        g.center.x,
        g.center.y,
        image.kind.name()
    )?;
    for iy in 0..g.ny {
        let row: Vec<String> = image.values.row(iy).iter().map(|x| format!("{x}")).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_image_csv(path: impl AsRef<Path>) -> Result<Image<f64>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Parse {
        path: path.display().to_string(),
        line: 0,
        msg: "empty file".into(),
    })?;
    let mut meta = std::collections::HashMap::new();
    for tok in header.trim_start_matches('#').split_whitespace() {
        if let Some((k, v)) = tok.split_once('=') {
            meta.insert(k.to_string(), v.to_string());
        }
    }
    let get = |k: &str| -> Result<f64> {
        meta.get(k)
            .ok_or_else(|| Error::Parse {
                path: path.display().to_string(),
                line: 1,
                msg: format!("missing {k}"),
            })?
            .parse::<f64>()
            .map_err(|e| Error::Parse {
                path: path.display().to_string(),
                line: 1,
                msg: format!("bad {k}: {e}"),
            })
    };
    let nx = get("nx")? as usize;
    let ny = get("ny")? as usize;
    let grid = GridSpec::new(
        nx,
        ny,
        get("pixel_mm")?,
        Vec2::new(get("cx")?, get("cy")?),
    )?;
    let kind = match meta.get("kind").map(String::as_str) {
        Some("sigma") => ImageKind::Sigma,
        Some("mask") => ImageKind::Mask,
        _ => ImageKind::Mu,
    };
    let mut values = Array2::zeros((ny, nx));
    for (iy, line) in lines.enumerate() {
        for (ix, tok) in line.split(',').enumerate() {
            if ix >= nx || iy >= ny {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line: iy + 2,
                    msg: "too many values".into(),
                });
            }
            values[[iy, ix]] = tok.trim().parse::<f64>().map_err(|e| Error::Parse {
                path: path.display().to_string(),
                line: iy + 2,
                msg: format!("bad value: {e}"),
            })?;
        }
    }
    Ok(Image { grid, values, kind })
}

/// Checkpoint: architecture header plus little-endian f64 weight blob.
pub fn write_checkpoint(path: impl AsRef<Path>, params: &MlpParams<f64>, step: u64) -> Result<()> {
    let mut w = create(path.as_ref())?;
    w.write_all(CKPT_MAGIC)?;
    w.write_all(&(params.layers.len() as u32).to_le_bytes())?;
    for layer in &params.layers {
        w.write_all(&(layer.weight.nrows() as u32).to_le_bytes())?;
        w.write_all(&(layer.weight.ncols() as u32).to_le_bytes())?;
    }
    w.write_all(&params.w0.to_le_bytes())?;
    w.write_all(&step.to_le_bytes())?;
    for layer in &params.layers {
        for v in layer.weight.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in layer.bias.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<(MlpParams<f64>, u64)> {
    let path = path.as_ref();
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let bad = |msg: &str| Error::Parse {
        path: path.display().to_string(),
        line: 0,
        msg: msg.into(),
    };
    let mut magic = [0u8; 8];
    f.read_exact(&mut magic)?;
    if &magic != CKPT_MAGIC {
        return Err(bad("bad magic"));
    }
    let mut b4 = [0u8; 4];
    f.read_exact(&mut b4)?;
    let n_layers = u32::from_le_bytes(b4) as usize;
    let mut dims = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        f.read_exact(&mut b4)?;
        let out = u32::from_le_bytes(b4) as usize;
        f.read_exact(&mut b4)?;
        let inp = u32::from_le_bytes(b4) as usize;
        dims.push((out, inp));
    }
    let mut b8 = [0u8; 8];
    f.read_exact(&mut b8)?;
    let w0 = f64::from_le_bytes(b8);
    f.read_exact(&mut b8)?;
    let step = u64::from_le_bytes(b8);
    let mut layers = Vec::with_capacity(n_layers);
    for (out, inp) in dims {
        let mut layer = DenseLayer::<f64>::zeros(out, inp);
        for v in layer.weight.iter_mut() {
            f.read_exact(&mut b8)?;
            *v = f64::from_le_bytes(b8);
        }
        for v in layer.bias.iter_mut() {
            f.read_exact(&mut b8)?;
            *v = f64::from_le_bytes(b8);
        }
        layers.push(layer);
    }
    let params = MlpParams { layers, w0 };
    params.validate()?;
    Ok((params, step))
}

/// Loss history as a two-column CSV.
pub fn write_loss_csv(path: impl AsRef<Path>, losses: &[f64]) -> Result<()> {
    let mut w = create(path.as_ref())?;
    writeln!(w, "step,loss")?;
    for (i, l) in losses.iter().enumerate() {
        writeln!(w, "{},{}", i + 1, l)?;
    }
    w.flush()?;
    Ok(())
}

/// Hex SHA-256 of arbitrary bytes.
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let out = hasher.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}
