//! AFF1: a checksummed text format for affinity matrices.
//!
//! Layout:
//!
//! ```text
//! AFF1 <n1> <n2> <has_gt> <sense>
//! <(n1*n2)^2 doubles, row-major, whitespace-separated>
//! <if has_gt = 1: one "i a" line per ground-truth pair>
//! CRC <8 hex digits>
//! ```
//!
//! Doubles are written in Rust's shortest round-trip decimal form, so a
//! write/read cycle reproduces every bit. The CRC-32 is taken over the raw
//! bytes of everything before the CRC line.

use std::fmt::Write as _;
use std::path::Path;

use crate::affinity::{AffinityMatrix, Sense};
use crate::error::{Error, Result};
use crate::solution::{vertex_unindex, PartialSolution};
use crate::textio::{tokens_with_offsets, verify_crc_trailer};

/// Serialize a matrix (and optional ground truth) to `path`.
pub fn write_affinity(
    path: &Path,
    k: &AffinityMatrix,
    gt: Option<&PartialSolution>,
) -> Result<()> {
    std::fs::write(path, render_affinity(k, gt))?;
    Ok(())
}

/// The exact bytes `write_affinity` produces.
pub fn render_affinity(k: &AffinityMatrix, gt: Option<&PartialSolution>) -> String {
    let dim = k.dim();
    let mut body = String::new();
    let _ = writeln!(
        body,
        "AFF1 {} {} {} {}",
        k.n1(),
        k.n2(),
        gt.is_some() as u8,
        k.sense().as_str()
    );
    for p in 0..dim {
        for q in 0..dim {
            if q > 0 {
                body.push(' ');
            }
            let _ = write!(body, "{}", k.at(p, q));
        }
        body.push('\n');
    }
    if let Some(gt) = gt {
        for p in gt.sorted_vertices() {
            let (i, a) = vertex_unindex(p, k.n2());
            let _ = writeln!(body, "{i} {a}");
        }
    }
    let crc = crc32fast::hash(body.as_bytes());
    let _ = writeln!(body, "CRC {crc:08x}");
    body
}

/// Load a matrix written by [`write_affinity`], verifying the checksum.
pub fn read_affinity(path: &Path) -> Result<(AffinityMatrix, Option<PartialSolution>)> {
    let text = std::fs::read_to_string(path)?;
    parse_affinity(&text)
}

pub fn parse_affinity(text: &str) -> Result<(AffinityMatrix, Option<PartialSolution>)> {
    let body = verify_crc_trailer(text)?;

    let header_end = body.find('\n').ok_or_else(|| {
        Error::MalformedHeader("file has no content after the header".into())
    })?;
    let header = &body[..header_end];
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 5 || fields[0] != "AFF1" {
        return Err(Error::MalformedHeader(format!(
            "expected \"AFF1 <n1> <n2> <has_gt> <sense>\", got {header:?}"
        )));
    }
    let n1: usize = fields[1]
        .parse()
        .map_err(|_| Error::MalformedHeader(format!("bad n1 {:?}", fields[1])))?;
    let n2: usize = fields[2]
        .parse()
        .map_err(|_| Error::MalformedHeader(format!("bad n2 {:?}", fields[2])))?;
    let has_gt = match fields[3] {
        "0" => false,
        "1" => true,
        other => {
            return Err(Error::MalformedHeader(format!(
                "has_gt must be 0 or 1, got {other:?}"
            )))
        }
    };
    let sense = Sense::parse(fields[4])
        .map_err(|_| Error::MalformedHeader(format!("bad sense {:?}", fields[4])))?;
    if n1 == 0 || n2 == 0 {
        return Err(Error::InvalidInstance("graph sizes must be positive".into()));
    }

    let dim = n1 * n2;
    let want = dim * dim;
    let rest = &body[header_end + 1..];
    let base = header_end + 1;
    let mut data = Vec::with_capacity(want);
    let mut tail_tokens: Vec<(usize, &str)> = Vec::new();
    for (off, tok) in tokens_with_offsets(rest) {
        if data.len() < want {
            let v: f64 = tok.parse().map_err(|_| Error::Parse {
                offset: base + off,
                msg: format!("matrix entry {} {tok:?} is not a number", data.len()),
            })?;
            data.push(v);
        } else {
            tail_tokens.push((base + off, tok));
        }
    }
    if data.len() < want {
        return Err(Error::DimensionMismatch(format!(
            "header promises {want} matrix entries, found {}",
            data.len()
        )));
    }
    let gt = if has_gt {
        if tail_tokens.len() % 2 != 0 {
            return Err(Error::DimensionMismatch(format!(
                "ground-truth section has {} tokens, expected pairs",
                tail_tokens.len()
            )));
        }
        let mut pairs = Vec::with_capacity(tail_tokens.len() / 2);
        for chunk in tail_tokens.chunks(2) {
            let mut pair = [0usize; 2];
            for (slot, &(off, tok)) in chunk.iter().enumerate() {
                pair[slot] = tok.parse().map_err(|_| Error::Parse {
                    offset: off,
                    msg: format!("ground-truth index {tok:?} is not an integer"),
                })?;
            }
            pairs.push((pair[0], pair[1]));
        }
        Some(PartialSolution::from_pairs(n1, n2, &pairs)?)
    } else {
        if let Some(&(off, tok)) = tail_tokens.first() {
            return Err(Error::DimensionMismatch(format!(
                "unexpected token {tok:?} at byte {off} after {want} matrix entries"
            )));
        }
        None
    };
    Ok((AffinityMatrix::new(n1, n2, data, sense)?, gt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{gen_synthetic, SyntheticSpec};

    fn sample() -> (AffinityMatrix, PartialSolution) {
        let inst = gen_synthetic(&SyntheticSpec {
            n_inliers: 3,
            n_outliers2: 1,
            delta_s: 0.3,
            rng_seed: 5,
            ..Default::default()
        })
        .unwrap();
        (inst.affinity, inst.gt)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let (k, gt) = sample();
        let text = render_affinity(&k, Some(&gt));
        let (k2, gt2) = parse_affinity(&text).unwrap();
        assert_eq!(k.n1(), k2.n1());
        assert_eq!(k.n2(), k2.n2());
        assert_eq!(k.sense(), k2.sense());
        let bits = |m: &AffinityMatrix| -> Vec<u64> {
            m.data().iter().map(|v| v.to_bits()).collect()
        };
        assert_eq!(bits(&k), bits(&k2));
        assert_eq!(gt.sorted_vertices(), gt2.unwrap().sorted_vertices());
        // Writing again reproduces the same bytes.
        assert_eq!(text, render_affinity(&k2, Some(&gt)));
    }

    #[test]
    fn negative_zero_and_extremes_survive() {
        let mut k = AffinityMatrix::zeros(1, 2, Sense::Minimize);
        k.set(0, 1, -0.0);
        k.set(0, 0, 1.0e-300);
        k.set(1, 1, -12345.6789e10);
        let text = render_affinity(&k, None);
        let (k2, _) = parse_affinity(&text).unwrap();
        for (a, b) in k.data().iter().zip(k2.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn corruption_is_detected() {
        let (k, gt) = sample();
        let text = render_affinity(&k, Some(&gt));
        let corrupted = text.replacen("0.", "1.", 1);
        assert!(matches!(
            parse_affinity(&corrupted),
            Err(Error::ChecksumMismatch { .. })
        ));
    }

    #[test]
    fn header_and_shape_errors() {
        let (k, _) = sample();
        let good = render_affinity(&k, None);

        let bad_header = good.replacen("AFF1", "AFF9", 1);
        // The checksum still matches what we recompute only if we rewrite it;
        // corrupting the magic first trips the checksum, which is fine, so
        // instead build a coherent file with a bad header.
        let rebuilt = rebuild_crc(&bad_header);
        assert!(matches!(
            parse_affinity(&rebuilt),
            Err(Error::MalformedHeader(_))
        ));

        // Drop the last matrix entry and repair the checksum: dimension error.
        let body_end = good.rfind("CRC").unwrap();
        let body = &good[..body_end];
        let shorter = body.trim_end().rsplitn(2, ' ').nth(1).unwrap();
        let rebuilt = rebuild_crc(&format!("{shorter}\n"));
        assert!(matches!(
            parse_affinity(&rebuilt),
            Err(Error::DimensionMismatch(_))
        ));

        assert!(matches!(
            parse_affinity("AFF1 1 1 0 max\n0\n"),
            Err(Error::Parse { .. })
        ));
    }

    fn rebuild_crc(content: &str) -> String {
        let body_end = content.rfind("CRC").unwrap_or(content.len());
        let body = &content[..body_end];
        format!("{body}CRC {:08x}\n", crc32fast::hash(body.as_bytes()))
    }

    #[test]
    fn non_numeric_entry_offset() {
        let text = "AFF1 1 1 0 max\nabc\n";
        let rebuilt = rebuild_crc(text);
        match parse_affinity(&rebuilt) {
            Err(Error::Parse { offset, .. }) => {
                assert_eq!(&rebuilt[offset..offset + 3], "abc");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
