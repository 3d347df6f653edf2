use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::INPUT_CHANNELS;
use crate::nn::{Mts, DEFAULT_FRAME_RATE_HZ};

/// Reads a kinematics file: one frame per line, 76 whitespace-separated
/// decimals. Blank lines are skipped.
pub fn parse_kinematics(path: impl AsRef<Path>) -> Result<Mts<f32>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_kinematics_str(&text, path)
}

/// Same as [`parse_kinematics`] on in-memory text; `source` names the origin
/// in diagnostics.
pub fn parse_kinematics_str(text: &str, source: impl AsRef<Path>) -> Result<Mts<f32>> {
    let source = source.as_ref();
    let parse_err = |line: usize, message: String| Error::Parse {
        path: source.to_path_buf(),
        line,
        message,
    };

    let mut rows: Vec<[f32; INPUT_CHANNELS]> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut row = [0f32; INPUT_CHANNELS];
        let mut count = 0;
        for token in line.split_whitespace() {
            if count < INPUT_CHANNELS {
                let v: f32 = token.parse().map_err(|_| {
                    parse_err(
                        line_no,
                        format!("column {}: '{token}' is not a number", count + 1),
                    )
                })?;
                if !v.is_finite() {
                    return Err(parse_err(
                        line_no,
                        format!("column {}: non-finite value '{token}'", count + 1),
                    ));
                }
                row[count] = v;
            }
            count += 1;
        }
        if count != INPUT_CHANNELS {
            return Err(parse_err(
                line_no,
                format!("expected {INPUT_CHANNELS} columns, found {count}"),
            ));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput(format!(
            "{}: no frames in kinematics file",
            source.display()
        )));
    }

    let len = rows.len();
    let mut values = vec![0f32; INPUT_CHANNELS * len];
    for (t, row) in rows.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            values[c * len + t] = v;
        }
    }
    Ok(Mts::new(INPUT_CHANNELS, len, values)?.with_frame_rate(DEFAULT_FRAME_RATE_HZ))
}

/// Renders a series in the kinematics text format. Values use the shortest
/// representation that parses back to the same `f32`.
pub fn format_kinematics(series: &Mts<f32>) -> String {
    let mut out = String::with_capacity(series.len() * series.channels() * 12);
    for t in 0..series.len() {
        for c in 0..series.channels() {
            if c > 0 {
                out.push_str("    ");
            }
            let _ = write!(out, "{}", series.get(c, t));
        }
        out.push('\n');
    }
    out
}

pub fn write_kinematics(path: impl AsRef<Path>, series: &Mts<f32>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_kinematics(series)).map_err(|e| Error::io(path, e))
}
