//! Bit-stable serialization: solution CSVs, JSON documents and atomic
//! file writes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::grid::{RadialField, RadialGrid};
use crate::model::ModelEnd;
use crate::solver::Solution;

pub const CSV_HEADER: &str = "t,u,h,lambda_base,lambda_fiber,laplacian_u";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("serialization failed: {0}")]
    Json(#[from] serde_json::Error),
}

impl IoError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn format(path: &Path, message: impl Into<String>) -> Self {
        IoError::Format {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }
}

/// Formats `v` with 17 significant digits, trailing zeros removed.
///
/// Plain notation for decimal exponents in `[-5, 17)`, scientific
/// otherwise, so `0 -> "0"`, `1 -> "1"`, `0.1 -> "0.10000000000000001"`.
pub fn format_f64(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return if v.is_nan() {
            "NaN".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{:.16e}", v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let (sign, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => ("-", m),
        None => ("", mantissa),
    };
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    let digits = digits.trim_end_matches('0');
    if !(-5..17).contains(&exp) {
        let (head, tail) = digits.split_at(1);
        return if tail.is_empty() {
            format!("{sign}{head}e{exp}")
        } else {
            format!("{sign}{head}.{tail}e{exp}")
        };
    }
    if exp < 0 {
        let zeros = "0".repeat((-exp - 1) as usize);
        return format!("{sign}0.{zeros}{digits}");
    }
    let int_len = exp as usize + 1;
    if digits.len() <= int_len {
        format!("{sign}{digits}{}", "0".repeat(int_len - digits.len()))
    } else {
        format!("{sign}{}.{}", &digits[..int_len], &digits[int_len..])
    }
}

/// Writes `bytes` to a temporary file next to `path` and renames it into
/// place, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    let mut tmp = tempfile::Builder::new()
        .prefix(".partial-")
        .tempfile_in(dir)
        .map_err(|e| IoError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| IoError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| IoError::io(path, e))?;
    tmp.persist(path).map_err(|e| IoError::io(path, e.error))?;
    Ok(())
}

/// The CSV document for `sol`, one row per node.
pub fn solution_csv(model: &ModelEnd, sol: &Solution) -> String {
    let laplacian = sol.laplacian(model.dim());
    let columns = [
        sol.grid().nodes(),
        sol.u().values(),
        sol.h().values(),
        sol.lambda_base().values(),
        sol.lambda_fiber().values(),
        laplacian.values(),
    ];
    let mut out = String::with_capacity(sol.grid().len() * 6 * 24);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for i in 0..sol.grid().len() {
        let row: Vec<String> = columns.iter().map(|c| format_f64(c[i])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn emit_csv(model: &ModelEnd, sol: &Solution, path: &Path) -> Result<(), IoError> {
    write_atomic(path, solution_csv(model, sol).as_bytes())
}

/// Columns of a solution CSV read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionTable {
    pub t: Vec<f64>,
    pub u: Vec<f64>,
    pub h: Vec<f64>,
    pub lambda_base: Vec<f64>,
    pub lambda_fiber: Vec<f64>,
    pub laplacian_u: Vec<f64>,
}

impl SolutionTable {
    pub fn grid(&self) -> Result<Arc<RadialGrid>, crate::grid::GridError> {
        RadialGrid::from_nodes(self.t.clone()).map(Arc::new)
    }

    /// Named fields of the table on its own grid; the eigenvalue columns
    /// are returned as deviations `lambda - 1`.
    pub fn fields(&self) -> Result<Vec<(&'static str, RadialField)>, crate::grid::GridError> {
        let grid = self.grid()?;
        let field = |v: Vec<f64>| RadialField::new(Arc::clone(&grid), v);
        Ok(vec![
            ("u", field(self.u.clone())?),
            (
                "h_minus_t",
                field(self.h.iter().zip(&self.t).map(|(h, t)| h - t).collect())?,
            ),
            (
                "lambda_base_minus_1",
                field(self.lambda_base.iter().map(|l| l - 1.0).collect())?,
            ),
            (
                "lambda_fiber_minus_1",
                field(self.lambda_fiber.iter().map(|l| l - 1.0).collect())?,
            ),
            ("laplacian_u", field(self.laplacian_u.clone())?),
        ])
    }
}

pub fn read_csv(path: &Path) -> Result<SolutionTable, IoError> {
    let mut reader =
        csv::Reader::from_path(path).map_err(|e| IoError::format(path, e.to_string()))?;
    let header = reader
        .headers()
        .map_err(|e| IoError::format(path, e.to_string()))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if header != CSV_HEADER {
        return Err(IoError::format(
            path,
            format!("expected header `{CSV_HEADER}`, got `{header}`"),
        ));
    }
    let mut cols: [Vec<f64>; 6] = Default::default();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| IoError::format(path, e.to_string()))?;
        for (col, field) in cols.iter_mut().zip(record.iter()) {
            let v = field.parse::<f64>().map_err(|_| {
                IoError::format(path, format!("row {}: `{field}` is not a number", row + 2))
            })?;
            col.push(v);
        }
    }
    let [t, u, h, lambda_base, lambda_fiber, laplacian_u] = cols;
    Ok(SolutionTable {
        t,
        u,
        h,
        lambda_base,
        lambda_fiber,
        laplacian_u,
    })
}

/// Pretty JSON with object keys sorted and shortest round-trip floats.
pub fn to_sorted_json<T: Serialize>(value: &T) -> Result<String, IoError> {
    // `Value` objects are BTreeMaps, which sorts every level.
    let value = serde_json::to_value(value)?;
    let mut text = serde_json::to_string_pretty(&value)?;
    text.push('\n');
    Ok(text)
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), IoError> {
    write_atomic(path, to_sorted_json(value)?.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        let cases = [
            (0.0, "0"),
            (-0.0, "0"),
            (1.0, "1"),
            (-2.5, "-2.5"),
            (2000.0, "2000"),
            (0.1, "0.10000000000000001"),
            (1e-5, "0.000010000000000000001"),
            (1e-6, "9.9999999999999995e-7"),
            (1.5e-4, "0.00014999999999999999"),
            (1e17, "1e17"),
            (123456.0, "123456"),
            (-3.0e-20, "-3.0000000000000003e-20"),
        ];
        for (v, s) in cases {
            assert_eq!(format_f64(v), s, "{v:e}");
        }
        for v in [
            std::f64::consts::PI,
            1.0 / 3.0,
            6.02e23,
            -1e-300,
            f64::MAX,
            f64::MIN_POSITIVE,
            5e-324,
        ] {
            assert_eq!(format_f64(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn sorted_json_orders_nested_keys() {
        #[derive(Serialize)]
        struct Inner {
            z: f64,
            a: u32,
        }
        #[derive(Serialize)]
        struct Outer {
            beta: Inner,
            alpha: Vec<f64>,
        }
        let text = to_sorted_json(&Outer {
            beta: Inner { z: 0.1, a: 1 },
            alpha: vec![1.0, 2.5e-7],
        })
        .unwrap();
        assert_eq!(
            text,
            "{\n  \"alpha\": [\n    1.0,\n    2.5e-7\n  ],\n  \"beta\": {\n    \"a\": 1,\n    \"z\": 0.1\n  }\n}\n"
        );
    }

    #[test]
    fn atomic_write_leaves_no_temp_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/file.txt");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "two");
        let names: Vec<_> = fs::read_dir(path.parent().unwrap())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        assert_eq!(names.len(), 1);
    }
}
