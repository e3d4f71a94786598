//! File formats.
//!
//! * Model JSON: `{"N", "d", "c": "first"|"last", "transition", "coupling",
//!   "noise_cov"}` where the last three map time indices to row-major `d*d`
//!   arrays. Missing gains are zero; every noise block is required. An
//!   optional `"boundary": "origin"` reads `coupling["0"]` as `G_{N,0}` of the
//!   origin-first boundary and converts it on load.
//! * Covariance JSON: `{"n", "d", "data"}` with `data` the row-major
//!   `(N+1)d x (N+1)d` matrix.
//! * Trajectory CSV: header `path_id,k,x_1,...,x_d`, one row per (path, time).
//!
//! Numbers are written with shortest round-trip formatting, so writing a
//! parsed canonical file reproduces it byte for byte.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::covariance::BlockCovariance;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{CmModel, Direction};
use crate::trajectory::TrajectoryEnsemble;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum BoundaryForm {
    Destination,
    Origin,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    #[serde(rename = "N")]
    horizon: usize,
    d: usize,
    c: Direction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    boundary: Option<BoundaryForm>,
    #[serde(default)]
    transition: BTreeMap<usize, Vec<f64>>,
    #[serde(default)]
    coupling: BTreeMap<usize, Vec<f64>>,
    noise_cov: BTreeMap<usize, Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CovarianceFile {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

fn row_major(m: &Matrix) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

fn block_from(values: &[f64], d: usize, what: &str, k: usize) -> Result<Matrix> {
    if values.len() != d * d {
        return Err(Error::shape(format!(
            "{what}[{k}] has {} entries, expected {}",
            values.len(),
            d * d
        )));
    }
    Ok(Matrix::from_row_slice(d, d, values))
}

fn parse_error(e: serde_json::Error) -> Error {
    Error::Parse(e.to_string())
}

pub fn parse_model(text: &str) -> Result<CmModel> {
    let file: ModelFile = serde_json::from_str(text).map_err(parse_error)?;
    let d = file.d;
    let mut model = CmModel::zeros(file.horizon, d, file.c)?;
    let origin = file.boundary == Some(BoundaryForm::Origin);
    if origin && file.c != Direction::Last {
        return Err(Error::Parse("\"boundary\": \"origin\" requires \"c\": \"last\"".into()));
    }
    for (&k, v) in &file.transition {
        model.set_transition(k, &block_from(v, d, "transition", k)?)?;
    }
    for (&k, v) in &file.coupling {
        if origin && k == 0 {
            continue;
        }
        model.set_coupling(k, &block_from(v, d, "coupling", k)?)?;
    }
    for k in 0..=file.horizon {
        if !file.noise_cov.contains_key(&k) {
            return Err(Error::Parse(format!("noise_cov[{k}] missing")));
        }
    }
    if let Some(k) = file.noise_cov.keys().find(|&&k| k > file.horizon) {
        return Err(Error::Parse(format!("noise_cov[{k}] beyond horizon {}", file.horizon)));
    }
    for (&k, v) in &file.noise_cov {
        model.set_noise_cov(k, &block_from(v, d, "noise_cov", k)?)?;
    }
    if origin {
        let n = file.horizon;
        let gain = match file.coupling.get(&0) {
            Some(v) => block_from(v, d, "coupling", 0)?,
            None => Matrix::zeros(d, d),
        };
        let q0 = model.noise_cov(0).cloned().expect("noise 0");
        let qn = model.noise_cov(n).cloned().expect("noise N");
        model.set_origin_boundary(&gain, &q0, &qn)?;
    }
    Ok(model)
}

/// Canonical JSON form of a model (always the destination-first boundary).
pub fn model_to_json(model: &CmModel) -> String {
    let file = ModelFile {
        horizon: model.horizon(),
        d: model.dim(),
        c: model.direction(),
        boundary: None,
        transition: model
            .transition_times()
            .map(|k| (k, row_major(model.transition(k).expect("valid time"))))
            .collect(),
        coupling: model
            .coupling_times()
            .map(|k| (k, row_major(model.coupling(k).expect("valid time"))))
            .collect(),
        noise_cov: (0..=model.horizon())
            .map(|k| (k, row_major(model.noise_cov(k).expect("valid time"))))
            .collect(),
    };
    let mut s = serde_json::to_string(&file).expect("model serializes");
    s.push('\n');
    s
}

/// Hex SHA-256 of [`model_to_json`].
pub fn model_hash(model: &CmModel) -> String {
    Sha256::digest(model_to_json(model).as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn parse_covariance(text: &str) -> Result<BlockCovariance> {
    let file: CovarianceFile = serde_json::from_str(text).map_err(parse_error)?;
    let side = (file.n + 1) * file.d;
    if file.data.len() != side * side {
        return Err(Error::shape(format!(
            "covariance data has {} entries, expected {} for n={}, d={}",
            file.data.len(),
            side * side,
            file.n,
            file.d
        )));
    }
    BlockCovariance::new(file.n, file.d, Matrix::from_row_slice(side, side, &file.data))
}

pub fn covariance_to_json(c: &BlockCovariance) -> String {
    let file = CovarianceFile {
        n: c.horizon(),
        d: c.dim(),
        data: row_major(c.matrix()),
    };
    let mut s = serde_json::to_string(&file).expect("covariance serializes");
    s.push('\n');
    s
}

fn fmt_f64(v: f64) -> String {
    // Debug is shortest round-trip and switches to exponent form for
    // very large or small magnitudes
    format!("{v:?}")
}

pub fn write_trajectories<W: Write>(ensemble: &TrajectoryEnsemble, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["path_id".to_string(), "k".to_string()];
    header.extend((1..=ensemble.dim).map(|i| format!("x_{i}")));
    w.write_record(&header).map_err(csv_error)?;
    let mut row: Vec<String> = Vec::with_capacity(ensemble.dim + 2);
    for p in 0..ensemble.count() {
        for k in 0..=ensemble.horizon {
            row.clear();
            row.push(p.to_string());
            row.push(k.to_string());
            row.extend(ensemble.state(p, k).iter().map(|&v| fmt_f64(v)));
            w.write_record(&row).map_err(csv_error)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            _ => unreachable!(),
        }
    } else {
        Error::Parse(e.to_string())
    }
}

/// Reads a trajectory CSV written by [`write_trajectories`]. Rows must be
/// grouped by path with `k = 0..N` in order.
pub fn read_trajectories<R: Read>(input: R) -> Result<TrajectoryEnsemble> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let dim = headers.len().saturating_sub(2);
    let expected: Vec<String> = ["path_id".to_string(), "k".to_string()]
        .into_iter()
        .chain((1..=dim).map(|i| format!("x_{i}")))
        .collect();
    if dim == 0 || headers.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::Parse(format!(
            "line 1: expected header path_id,k,x_1..x_d, got {:?}",
            headers.iter().collect::<Vec<_>>()
        )));
    }
    let mut data = Vec::new();
    // path 0 fixes the horizon; afterwards row r must be (r / (N+1), r % (N+1))
    let mut horizon: Option<usize> = None;
    let mut rows = 0usize;
    for (idx, rec) in rdr.records().enumerate() {
        let line = idx + 2;
        let rec = rec.map_err(csv_error)?;
        let field = |i: usize| rec.get(i).unwrap_or("").trim();
        let p: usize = field(0)
            .parse()
            .map_err(|_| Error::Parse(format!("line {line}: bad path_id {:?}", field(0))))?;
        let k: usize = field(1)
            .parse()
            .map_err(|_| Error::Parse(format!("line {line}: bad k {:?}", field(1))))?;
        if horizon.is_none() && p == 1 && k == 0 && rows > 0 {
            horizon = Some(rows - 1);
        }
        let expected = match horizon {
            Some(h) => (rows / (h + 1), rows % (h + 1)),
            None => (0, rows),
        };
        if (p, k) != expected {
            return Err(Error::Parse(format!(
                "line {line}: expected path {} k {}, got path {p} k {k}",
                expected.0, expected.1
            )));
        }
        for i in 0..dim {
            let v: f64 = field(i + 2).parse().map_err(|_| {
                Error::Parse(format!("line {line}: bad value {:?} in x_{}", field(i + 2), i + 1))
            })?;
            if !v.is_finite() {
                return Err(Error::Parse(format!("line {line}: non-finite value in x_{}", i + 1)));
            }
            data.push(v);
        }
        rows += 1;
    }
    let horizon = match horizon {
        Some(h) if !rows.is_multiple_of(h + 1) => {
            return Err(Error::Parse(format!(
                "last path is incomplete: {} rows, expected {}",
                rows % (h + 1),
                h + 1
            )))
        }
        Some(h) => h,
        None if rows > 0 => rows - 1,
        None => return Err(Error::Parse("no trajectory rows".into())),
    };
    TrajectoryEnsemble::from_data(horizon, dim, 0, String::new(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MODEL: &str = r#"{"N":2,"d":1,"c":"last","transition":{"1":[0.5]},"coupling":{"0":[0.25],"1":[-1.5]},"noise_cov":{"0":[1.0],"1":[0.1],"2":[0.0]}}
"#;

    #[test]
    fn model_round_trip_is_bit_exact() {
        let m = parse_model(MODEL).unwrap();
        assert_eq!(model_to_json(&m), MODEL);
        assert_eq!(m.coupling(1).unwrap()[(0, 0)], -1.5);
    }

    #[test]
    fn missing_gains_default_to_zero() {
        let text = r#"{"N":2,"d":1,"c":"first","noise_cov":{"0":[1],"1":[1],"2":[1]}}"#;
        let m = parse_model(text).unwrap();
        assert_eq!(m.transition(2).unwrap()[(0, 0)], 0.0);
        let canon = model_to_json(&m);
        assert_eq!(model_to_json(&parse_model(&canon).unwrap()), canon);
    }

    #[test]
    fn parse_errors_carry_positions() {
        let err = parse_model("{\"N\": 2,\n \"d\": oops}").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        let err = parse_model(r#"{"N":2,"d":1,"c":"last","noise_cov":{"0":[1],"1":[1]}}"#).unwrap_err();
        assert!(err.to_string().contains("noise_cov[2] missing"), "{err}");
        let err = parse_model(r#"{"N":2,"d":1,"c":"last","transition":{"2":[1]},"noise_cov":{"0":[1],"1":[1],"2":[1]}}"#)
            .unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
        let err = parse_model(r#"{"N":1,"d":1,"c":"last","noise_cov":{"0":[-1],"1":[1]}}"#).unwrap_err();
        assert!(matches!(err, Error::Indefinite { .. }));
    }

    #[test]
    fn origin_boundary_is_converted() {
        let text = r#"{"N":2,"d":1,"c":"last","boundary":"origin","coupling":{"0":[2.0]},"noise_cov":{"0":[1.0],"1":[1.0],"2":[1.0]}}"#;
        let m = parse_model(text).unwrap();
        let c = m.covariance_of();
        assert!((c.block(2, 2)[(0, 0)] - 5.0).abs() < 1e-14);
        assert!((c.block(0, 2)[(0, 0)] - 2.0).abs() < 1e-14);
        assert!((c.block(0, 0)[(0, 0)] - 1.0).abs() < 1e-14);
        assert!(!model_to_json(&m).contains("boundary"));
    }

    #[test]
    fn covariance_round_trip() {
        let text = "{\"n\":1,\"d\":1,\"data\":[1.0,0.1,0.1,0.30000000000000004]}\n";
        let c = parse_covariance(text).unwrap();
        assert_eq!(covariance_to_json(&c), text);
        assert!(parse_covariance(r#"{"n":1,"d":1,"data":[1,2,3]}"#).is_err());
        assert!(matches!(
            parse_covariance(r#"{"n":1,"d":1,"data":[1,2,2,1]}"#),
            Err(Error::Indefinite { .. })
        ));
    }

    #[test]
    fn trajectory_csv_round_trip() {
        let data = vec![0.0, 1.5, -2.0, 1e-300, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 0.1];
        let e = TrajectoryEnsemble::from_data(2, 2, 0, String::new(), data).unwrap();
        let mut buf = Vec::new();
        write_trajectories(&e, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("path_id,k,x_1,x_2\n0,0,0.0,1.5\n"));
        let back = read_trajectories(&buf[..]).unwrap();
        assert_eq!(back.data(), e.data());
        assert_eq!(back.horizon, 2);
        assert_eq!(back.count(), 2);
    }

    #[test]
    fn trajectory_csv_diagnostics() {
        let bad = "path_id,k,x_1\n0,0,1.0\n0,1,abc\n";
        let err = read_trajectories(bad.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        let gap = "path_id,k,x_1\n0,0,1.0\n0,1,1.0\n1,0,1.0\n";
        assert!(read_trajectories(gap.as_bytes()).is_err());
        assert!(read_trajectories("a,b\n".as_bytes()).is_err());
    }
}
