//! RGMCKPT1: a checksummed text snapshot of [`QNetParams`].
//!
//! Layout:
//!
//! ```text
//! RGMCKPT1 <d> <t>
//! h4 <per-edge|row-sum>
//! <theta1 .. theta8, b1, b2, b3: doubles, one line per tensor>
//! CRC <8 hex digits>
//! ```
//!
//! Doubles use the shortest round-trip decimal form, so loading a saved
//! checkpoint reproduces the weights bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::textio::{tokens_with_offsets, verify_crc_trailer};

use super::{H4Variant, QNetParams};

/// Serialize parameters to `path`.
pub fn write_checkpoint(path: &Path, params: &QNetParams) -> Result<()> {
    std::fs::write(path, render_checkpoint(params))?;
    Ok(())
}

pub fn render_checkpoint(params: &QNetParams) -> String {
    let mut body = String::new();
    let _ = writeln!(body, "RGMCKPT1 {} {}", params.d, params.t);
    let _ = writeln!(body, "h4 {}", params.h4_variant.as_str());
    for tensor in tensor_fields(params) {
        let mut line = String::new();
        for (idx, v) in tensor.iter().enumerate() {
            if idx > 0 {
                line.push(' ');
            }
            let _ = write!(line, "{v}");
        }
        body.push_str(&line);
        body.push('\n');
    }
    let _ = writeln!(body, "{}", params.b2);
    let _ = writeln!(body, "{}", params.b3);
    let crc = crc32fast::hash(body.as_bytes());
    let _ = writeln!(body, "CRC {crc:08x}");
    body
}

/// Load parameters written by [`write_checkpoint`], verifying the checksum.
pub fn read_checkpoint(path: &Path) -> Result<QNetParams> {
    let text = std::fs::read_to_string(path)?;
    parse_checkpoint(&text)
}

pub fn parse_checkpoint(text: &str) -> Result<QNetParams> {
    let body = verify_crc_trailer(text)?;

    let mut lines = body.splitn(3, '\n');
    let header = lines.next().unwrap_or("");
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 3 || fields[0] != "RGMCKPT1" {
        return Err(Error::MalformedHeader(format!(
            "expected \"RGMCKPT1 <d> <t>\", got {header:?}"
        )));
    }
    let d: usize = fields[1]
        .parse()
        .map_err(|_| Error::MalformedHeader(format!("bad width {:?}", fields[1])))?;
    let t: usize = fields[2]
        .parse()
        .map_err(|_| Error::MalformedHeader(format!("bad round count {:?}", fields[2])))?;
    if d == 0 {
        return Err(Error::MalformedHeader("width must be positive".into()));
    }

    let h4_line = lines.next().unwrap_or("");
    let h4_fields: Vec<&str> = h4_line.split_whitespace().collect();
    if h4_fields.len() != 2 || h4_fields[0] != "h4" {
        return Err(Error::MalformedHeader(format!(
            "expected \"h4 <variant>\", got {h4_line:?}"
        )));
    }
    let h4_variant = H4Variant::parse(h4_fields[1]).ok_or_else(|| {
        Error::MalformedHeader(format!("unknown edge-lift variant {:?}", h4_fields[1]))
    })?;

    let rest = lines.next().unwrap_or("");
    let base = rest.as_ptr() as usize - body.as_ptr() as usize;
    let mut values = Vec::new();
    for (off, tok) in tokens_with_offsets(rest) {
        let v: f64 = tok.parse().map_err(|_| Error::Parse {
            offset: base + off,
            msg: format!("weight {} {tok:?} is not a number", values.len()),
        })?;
        values.push(v);
    }
    let want = 6 * d + 3 * d * d + 2;
    if values.len() != want {
        return Err(Error::DimensionMismatch(format!(
            "header promises {want} weights for width {d}, found {}",
            values.len()
        )));
    }

    let mut cursor = 0usize;
    let mut take = |len: usize| -> Vec<f64> {
        let slice = values[cursor..cursor + len].to_vec();
        cursor += len;
        slice
    };
    let params = QNetParams {
        d,
        t,
        h4_variant,
        theta1: take(d),
        theta2: take(d * d),
        theta3: take(d),
        theta4: take(d * d),
        theta5: take(d),
        theta6: take(d * d),
        theta7: take(d),
        theta8: take(d),
        b1: take(d),
        b2: values[cursor],
        b3: values[cursor + 1],
    };
    Ok(params)
}

fn tensor_fields(params: &QNetParams) -> [&[f64]; 9] {
    [
        &params.theta1,
        &params.theta2,
        &params.theta3,
        &params.theta4,
        &params.theta5,
        &params.theta6,
        &params.theta7,
        &params.theta8,
        &params.b1,
    ]
}
