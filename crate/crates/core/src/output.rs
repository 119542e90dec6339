//! CSV and PPM writers.
//!
//! Column orders and the image normalization rule are fixed; see
//! `docs/output-format.md`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::abm::{AbmRun, Occupancy};
use crate::domain::{ByClass, Class, MesoField, SpatialGrid, TimeSeries, TimeSeriesRow};
use crate::error::{Error, Result};
use crate::sirs::SirsSample;

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Time series as CSV text: `t,S,I,R` followed by the norm columns.
pub fn timeseries_csv(series: &TimeSeries) -> String {
    let mut s = String::from("t,S,I,R");
    for n in &series.norm_names {
        s.push(',');
        s.push_str(n);
    }
    s.push('\n');
    for row in &series.rows {
        let _ = write!(s, "{},{},{},{}", row.t, row.totals[0], row.totals[1], row.totals[2]);
        for x in &row.norms {
            let _ = write!(s, ",{x}");
        }
        s.push('\n');
    }
    s
}

pub fn write_timeseries(path: &Path, series: &TimeSeries) -> Result<()> {
    write_text(path, &timeseries_csv(series))
}

pub fn sirs_series(samples: &[SirsSample]) -> TimeSeries {
    let mut series = TimeSeries::new(Vec::new());
    series.rows = samples
        .iter()
        .map(|x| TimeSeriesRow {
            t: x.t,
            totals: [x.s, x.i, x.r],
            norms: Vec::new(),
        })
        .collect();
    series
}

/// Agent counts per step, with the mean distance of I agents from the
/// center as the only norm column (empty when no agent is infectious).
pub fn abm_csv(run: &AbmRun) -> String {
    let mut s = String::from("step,S,I,R,i_mean_radius\n");
    for (k, (c, r)) in run.counts.iter().zip(&run.i_mean_radius).enumerate() {
        let _ = write!(s, "{k},{},{},{},", c[0], c[1], c[2]);
        if let Some(r) = r {
            let _ = write!(s, "{r}");
        }
        s.push('\n');
    }
    s
}

/// Row-major grid values under a `# shape nx ny` comment line.
pub fn grid_csv(values: &[f64], cells: [usize; 2]) -> Result<String> {
    let [nx, ny] = cells;
    if values.len() != nx * ny {
        return Err(Error::Shape(format!("{} values for a {nx}x{ny} grid", values.len())));
    }
    let mut s = format!("# shape {nx} {ny}\n");
    for row in values.chunks(nx) {
        let cells: Vec<String> = row.iter().map(|x| x.to_string()).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    Ok(s)
}

pub fn write_grid_csv(path: &Path, values: &[f64], cells: [usize; 2]) -> Result<()> {
    write_text(path, &grid_csv(values, cells)?)
}

/// Channel order of the image: S is blue, I is red, R is green.
fn channel(class: Class) -> usize {
    match class {
        Class::I => 0,
        Class::R => 1,
        Class::S => 2,
    }
}

/// Encodes a P6 image with one pixel per cell. Each present class is divided
/// by its own maximum (1 when the field is zero), clamped to `[0, 1]` and
/// scaled to 255. Returns the bytes and the per-class normalization.
pub fn ppm_bytes(fields: &ByClass<Option<&[f64]>>, cells: [usize; 2]) -> Result<(Vec<u8>, [Option<f64>; 3])> {
    let [nx, ny] = cells;
    let mut norms = [None; 3];
    for (class, f) in fields.iter() {
        if let Some(f) = f {
            if f.len() != nx * ny {
                return Err(Error::Shape(format!("{} values for a {nx}x{ny} image", f.len())));
            }
            let max = f.iter().fold(0.0f64, |m, x| m.max(*x));
            norms[class.index()] = Some(if max > 0.0 { max } else { 1.0 });
        }
    }
    let mut out = format!("P6\n{nx} {ny}\n255\n").into_bytes();
    out.reserve(3 * nx * ny);
    for c in 0..nx * ny {
        let mut px = [0u8; 3];
        for class in Class::ALL {
            if let (Some(f), Some(n)) = (fields[class], norms[class.index()]) {
                px[channel(class)] = (255.0 * (f[c] / n).clamp(0.0, 1.0)).round() as u8;
            }
        }
        out.extend_from_slice(&px);
    }
    Ok((out, norms))
}

/// Path of the normalization sidecar written next to an image.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".norm.txt");
    PathBuf::from(p)
}

/// Writes the image and its `.norm.txt` sidecar.
pub fn render_ppm(path: &Path, fields: &ByClass<Option<&[f64]>>, cells: [usize; 2]) -> Result<[Option<f64>; 3]> {
    let (bytes, norms) = ppm_bytes(fields, cells)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let mut side = String::from("# pixel = round(255 * clamp(value / norm, 0, 1))\n");
    for class in Class::ALL {
        if let Some(n) = norms[class.index()] {
            let color = ["blue", "red", "green"][class.index()];
            let _ = writeln!(side, "{} {color} {n}", class.name());
        }
    }
    write_text(&sidecar_path(path), &side)?;
    Ok(norms)
}

/// Per-class panels `<prefix>_{S,I,R}.ppm` plus `<prefix>_composite.ppm`.
pub fn render_panels(dir: &Path, prefix: &str, fields: &ByClass<Vec<f64>>, cells: [usize; 2]) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for class in Class::ALL {
        let mut only: ByClass<Option<&[f64]>> = ByClass([None; 3]);
        only[class] = Some(fields[class].as_slice());
        let p = dir.join(format!("{prefix}_{}.ppm", class.name()));
        render_ppm(&p, &only, cells)?;
        paths.push(p);
    }
    let all = ByClass::from_fn(|c| Some(fields[c].as_slice()));
    let p = dir.join(format!("{prefix}_composite.ppm"));
    render_ppm(&p, &all, cells)?;
    paths.push(p);
    Ok(paths)
}

pub fn occupancy_fields(occ: &Occupancy) -> ByClass<Vec<f64>> {
    occ.counts.map(|v| v.iter().map(|x| *x as f64).collect())
}

/// Grid CSVs `<prefix>_{S,I,R}.csv` and image panels for a density field.
pub fn write_meso_snapshot(dir: &Path, prefix: &str, rho: &MesoField, grid: &SpatialGrid) -> Result<()> {
    let cells = grid.cells();
    for class in Class::ALL {
        write_grid_csv(&dir.join(format!("{prefix}_{}.csv", class.name())), rho.class(class), cells)?;
    }
    render_panels(dir, prefix, rho.classes(), cells)?;
    Ok(())
}

/// Same as [`write_meso_snapshot`] for agent occupancy.
pub fn write_occupancy_snapshot(dir: &Path, prefix: &str, occ: &Occupancy) -> Result<()> {
    let fields = occupancy_fields(occ);
    let cells = [occ.side, occ.side];
    for class in Class::ALL {
        write_grid_csv(&dir.join(format!("{prefix}_{}.csv", class.name())), &fields[class], cells)?;
    }
    render_panels(dir, prefix, &fields, cells)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_series_is_header_only() {
        let s = TimeSeries::new(vec!["l2_I".into()]);
        assert_eq!(timeseries_csv(&s), "t,S,I,R,l2_I\n");
    }

    #[test]
    fn series_rows_round_trip_values() {
        let mut s = TimeSeries::new(vec!["n".into()]);
        s.rows.push(TimeSeriesRow {
            t: 0.1,
            totals: [1.0, 0.25, 1e-20],
            norms: vec![3.5],
        });
        let text = timeseries_csv(&s);
        let row: Vec<f64> = text.lines().nth(1).unwrap().split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(row, vec![0.1, 1.0, 0.25, 1e-20, 3.5]);
    }

    #[test]
    fn grid_csv_has_shape_header() {
        let text = grid_csv(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], [3, 2]).unwrap();
        assert_eq!(text, "# shape 3 2\n1,2,3\n4,5,6\n");
        assert!(grid_csv(&[1.0], [3, 2]).is_err());
    }

    #[test]
    fn saturated_s_field_is_pure_blue() {
        let s = vec![1.0; 4];
        let fields = ByClass([Some(s.as_slice()), None, None]);
        let (bytes, norms) = ppm_bytes(&fields, [2, 2]).unwrap();
        let header = b"P6\n2 2\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        for px in bytes[header.len()..].chunks(3) {
            assert_eq!(px, [0, 0, 255]);
        }
        assert_eq!(norms, [Some(1.0), None, None]);
    }

    #[test]
    fn channels_follow_color_convention() {
        let s = [0.0, 2.0];
        let i = [4.0, 0.0];
        let r = [0.0, 0.5];
        let fields = ByClass([Some(&s[..]), Some(&i[..]), Some(&r[..])]);
        let (bytes, norms) = ppm_bytes(&fields, [2, 1]).unwrap();
        let px = &bytes[bytes.len() - 6..];
        assert_eq!(px, [255, 0, 0, 0, 255, 255]);
        assert_eq!(norms, [Some(2.0), Some(4.0), Some(0.5)]);
    }

    #[test]
    fn panels_and_sidecars_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let fields = ByClass([vec![1.0, 0.0], vec![0.0, 0.0], vec![0.5, 0.5]]);
        let paths = render_panels(dir.path(), "step3", &fields, [2, 1]).unwrap();
        assert_eq!(paths.len(), 4);
        for p in &paths {
            assert!(p.exists());
            assert!(sidecar_path(p).exists());
        }
        let side = fs::read_to_string(sidecar_path(&paths[1])).unwrap();
        assert!(side.contains("I red 1"), "{side}");
    }

    #[test]
    fn io_errors_carry_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let err = write_grid_csv(&blocker.join("sub/grid.csv"), &[1.0], [1, 1]).unwrap_err();
        assert!(err.to_string().contains("file"), "{err}");
    }

    #[test]
    fn abm_csv_lists_every_step() {
        let run = AbmRun {
            counts: vec![[3, 1, 0], [2, 1, 1]],
            i_mean_radius: vec![Some(0.5), None],
            snapshots: Vec::new(),
        };
        assert_eq!(abm_csv(&run), "step,S,I,R,i_mean_radius\n0,3,1,0,0.5\n1,2,1,1,\n");
    }
}
