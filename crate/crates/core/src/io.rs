//! CSV and JSON readers and writers for datasets and data products. Units are ksi and
//! inches throughout.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bayes::{Chain, SurvivalBand};
use crate::calibrate::{ConvergenceRow, ProfileLikelihood, PARAM_NAMES};
use crate::error::{Error, Result};
use crate::fem::UnitStressField;
use crate::mesh::TriMesh;
use crate::poisson::Experiment;
use crate::stress::effective_stress;

pub const DATASET_HEADER: [&str; 5] = ["specimen_id", "s_max_ksi", "ratio_r", "cycles", "failed"];

#[derive(Debug, Serialize, Deserialize)]
struct DatasetRow {
    specimen_id: String,
    s_max_ksi: f64,
    ratio_r: f64,
    cycles: f64,
    failed: u8,
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| Error::Read {
        path: path.to_path_buf(),
        source,
    })
}

fn create(path: &Path) -> Result<File> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    Ok(File::create(path)?)
}

/// Parses a dataset; the header must match [`DATASET_HEADER`] exactly.
pub fn read_dataset_from<R: Read>(reader: R) -> Result<Vec<Experiment>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != DATASET_HEADER {
        return Err(Error::Dataset(format!(
            "expected header '{}', found '{}'",
            DATASET_HEADER.join(","),
            header.join(",")
        )));
    }
    let mut out = Vec::new();
    for (k, row) in rdr.deserialize::<DatasetRow>().enumerate() {
        let row = row.map_err(|e| Error::Dataset(format!("row {}: {e}", k + 1)))?;
        let failed = match row.failed {
            0 => false,
            1 => true,
            v => return Err(Error::Dataset(format!("row {}: failed must be 0 or 1, got {v}", k + 1))),
        };
        let e = Experiment {
            specimen_id: row.specimen_id,
            s_max: row.s_max_ksi,
            ratio: row.ratio_r,
            cycles: row.cycles,
            failed,
        };
        e.validate()?;
        out.push(e);
    }
    Ok(out)
}

pub fn read_dataset(path: &Path) -> Result<Vec<Experiment>> {
    read_dataset_from(open(path)?)
}

pub fn write_dataset_to<W: Write>(writer: W, data: &[Experiment]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    if data.is_empty() {
        w.write_record(DATASET_HEADER)?;
    }
    for e in data {
        w.serialize(DatasetRow {
            specimen_id: e.specimen_id.clone(),
            s_max_ksi: e.s_max,
            ratio_r: e.ratio,
            cycles: e.cycles,
            failed: e.failed as u8,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_dataset(path: &Path, data: &[Experiment]) -> Result<()> {
    write_dataset_to(create(path)?, data)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(std::io::BufReader::new(open(path)?))?)
}

fn write_rows<W: Write>(writer: W, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

fn num(v: f64) -> String {
    format!("{v}")
}

/// `node,x,y` and `triangle,n0,n1,n2` files.
pub fn write_mesh(nodes_path: &Path, triangles_path: &Path, mesh: &TriMesh) -> Result<()> {
    write_rows(
        create(nodes_path)?,
        &["node", "x_in", "y_in"],
        mesh.nodes
            .iter()
            .enumerate()
            .map(|(k, p)| vec![k.to_string(), num(p[0]), num(p[1])]),
    )?;
    write_rows(
        create(triangles_path)?,
        &["triangle", "n0", "n1", "n2"],
        mesh.triangles.iter().enumerate().map(|(k, t)| {
            vec![k.to_string(), t[0].to_string(), t[1].to_string(), t[2].to_string()]
        }),
    )
}

pub const FIELD_HEADER: [&str; 7] = ["node", "x_in", "y_in", "sigma_x", "sigma_y", "tau_xy", "sigma_eff"];

/// Nodal unit-traction stresses.
pub fn write_field<W: Write>(writer: W, mesh: &TriMesh, field: &UnitStressField) -> Result<()> {
    write_rows(
        writer,
        &FIELD_HEADER,
        mesh.nodes.iter().zip(&field.stress).enumerate().map(|(k, (p, s))| {
            vec![
                k.to_string(),
                num(p[0]),
                num(p[1]),
                num(s[0]),
                num(s[1]),
                num(s[2]),
                num(effective_stress(s[0], s[1], s[2])),
            ]
        }),
    )
}

pub fn write_field_csv(path: &Path, mesh: &TriMesh, field: &UnitStressField) -> Result<()> {
    write_field(create(path)?, mesh, field)
}

/// Reads back `(x, y, sigma_x, sigma_y, tau_xy, sigma_eff)` rows.
pub fn read_field_csv(path: &Path) -> Result<Vec<[f64; 6]>> {
    read_numeric(path, &FIELD_HEADER, |r| [r[1], r[2], r[3], r[4], r[5], r[6]])
}

pub const SITES_HEADER: [&str; 5] = ["x_in", "y_in", "weight_in2", "sigma_eff", "sigma_eff_averaged"];

/// Surface quadrature sites with pointwise and averaged unit effective stress.
pub fn write_sites_csv(path: &Path, rows: &[[f64; 5]]) -> Result<()> {
    write_rows(
        create(path)?,
        &SITES_HEADER,
        rows.iter().map(|r| r.iter().map(|&v| num(v)).collect()),
    )
}

pub fn read_sites_csv(path: &Path) -> Result<Vec<[f64; 5]>> {
    read_numeric(path, &SITES_HEADER, |r| [r[0], r[1], r[2], r[3], r[4]])
}

pub const PROFILE_HEADER: [&str; 2] = ["delta_in", "loglik"];

pub fn write_profile_csv(path: &Path, profile: &ProfileLikelihood) -> Result<()> {
    write_rows(
        create(path)?,
        &PROFILE_HEADER,
        profile.points.iter().map(|p| vec![num(p.delta), num(p.loglik)]),
    )
}

pub fn read_profile_csv(path: &Path) -> Result<Vec<(f64, f64)>> {
    read_numeric(path, &PROFILE_HEADER, |r| (r[0], r[1]))
}

fn chain_header(chain: &Chain) -> Vec<String> {
    let mut h = chain.names.clone();
    h.push("log_post".into());
    h
}

/// Retained samples, one row each.
pub fn write_chain_csv(path: &Path, chain: &Chain) -> Result<()> {
    let header = chain_header(chain);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_rows(
        create(path)?,
        &header,
        chain
            .retained()
            .iter()
            .zip(chain.retained_log_post())
            .map(|(r, lp)| r.iter().chain(std::iter::once(lp)).map(|&v| num(v)).collect()),
    )
}

/// Rows of parameters followed by `log_post`, with the parameter names.
pub fn read_chain_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut rdr = csv::Reader::from_reader(open(path)?);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.last().map(String::as_str) != Some("log_post") {
        return Err(Error::Dataset(format!("{}: last column must be log_post", path.display())));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        rows.push(parse_record(&rec?)?);
    }
    Ok((header[..header.len() - 1].to_vec(), rows))
}

pub const BAND_HEADER: [&str; 3] = ["n_cycles", "curve_id", "survival"];

/// Band curves numbered from 0, plus an optional `reference` curve.
pub fn write_band_csv(path: &Path, band: &SurvivalBand, reference: Option<&[f64]>) -> Result<()> {
    let mut rows = Vec::new();
    for (id, c) in band.curves.iter().enumerate() {
        for (n, s) in band.n_grid.iter().zip(c) {
            rows.push(vec![num(*n), id.to_string(), num(*s)]);
        }
    }
    if let Some(c) = reference {
        for (n, s) in band.n_grid.iter().zip(c) {
            rows.push(vec![num(*n), "reference".into(), num(*s)]);
        }
    }
    write_rows(create(path)?, &BAND_HEADER, rows)
}

pub const SURVIVAL_HEADER: [&str; 3] = ["s_max_ksi", "n_cycles", "survival"];

/// Survival over an `(S_max, n)` grid, one row per cell.
pub fn write_survival_grid_csv(path: &Path, rows: &[[f64; 3]]) -> Result<()> {
    write_rows(
        create(path)?,
        &SURVIVAL_HEADER,
        rows.iter().map(|r| r.iter().map(|&v| num(v)).collect()),
    )
}

pub fn read_survival_grid_csv(path: &Path) -> Result<Vec<[f64; 3]>> {
    read_numeric(path, &SURVIVAL_HEADER, |r| [r[0], r[1], r[2]])
}

pub fn write_convergence_csv(path: &Path, rows: &[ConvergenceRow]) -> Result<()> {
    let mut header = vec!["level", "n_triangles"];
    header.extend(PARAM_NAMES);
    header.push("loglik");
    write_rows(
        create(path)?,
        &header,
        rows.iter().map(|r| {
            let mut v = vec![r.level.to_string(), r.n_triangles.to_string()];
            v.extend(r.estimates.iter().map(|&x| num(x)));
            v.push(num(r.loglik));
            v
        }),
    )
}

fn parse_record(rec: &csv::StringRecord) -> Result<Vec<f64>> {
    rec.iter()
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Dataset(format!("not a number: '{s}'")))
        })
        .collect()
}

fn read_numeric<T>(path: &Path, header: &[&str], f: impl Fn(&[f64]) -> T) -> Result<Vec<T>> {
    let mut rdr = csv::Reader::from_reader(open(path)?);
    let found: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if found != header {
        return Err(Error::Dataset(format!(
            "{}: expected header '{}'",
            path.display(),
            header.join(",")
        )));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        out.push(f(&parse_record(&rec?)?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_round_trips() {
        let data = vec![
            Experiment {
                specimen_id: "s2".into(),
                s_max: 41.25,
                ratio: -1.0,
                cycles: 123456.789,
                failed: true,
            },
            Experiment {
                specimen_id: "s1".into(),
                s_max: 30.0,
                ratio: 0.5,
                cycles: 1e7,
                failed: false,
            },
        ];
        let mut buf = Vec::new();
        write_dataset_to(&mut buf, &data).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("specimen_id,s_max_ksi,ratio_r,cycles,failed\n"));
        assert_eq!(read_dataset_from(buf.as_slice()).unwrap(), data);
    }

    #[test]
    fn rejects_wrong_header_and_flags() {
        let bad = "id,s_max_ksi,ratio_r,cycles,failed\ns2,40,0,1000,1\n";
        assert!(matches!(read_dataset_from(bad.as_bytes()), Err(Error::Dataset(_))));
        let bad = "specimen_id,s_max_ksi,ratio_r,cycles,failed\ns2,40,0,1000,2\n";
        assert!(matches!(read_dataset_from(bad.as_bytes()), Err(Error::Dataset(_))));
        let bad = "specimen_id,s_max_ksi,ratio_r,cycles,failed\ns2,40,0,-5,1\n";
        assert!(matches!(read_dataset_from(bad.as_bytes()), Err(Error::Dataset(_))));
    }
}
