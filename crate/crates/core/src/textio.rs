//! Shared plumbing for the line-oriented text formats: a whitespace
//! tokenizer that remembers byte offsets (for error messages) and the
//! CRC-32 trailer check both formats end with.

use crate::error::{Error, Result};

/// Whitespace tokens paired with their byte offset in `text`.
pub(crate) fn tokens_with_offsets(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.split_whitespace().map(move |tok| {
        // split_whitespace yields subslices of `text`, so pointer math
        // recovers the byte offset.
        let off = tok.as_ptr() as usize - text.as_ptr() as usize;
        (off, tok)
    })
}

/// Validate the final `CRC <8 hex digits>` line and hand back the body it
/// covers. The trailer must start a line and the checksum is over every
/// byte before it.
pub(crate) fn verify_crc_trailer(text: &str) -> Result<&str> {
    let crc_start = text.rfind("CRC ").ok_or_else(|| Error::Parse {
        offset: text.len(),
        msg: "missing CRC trailer".into(),
    })?;
    if crc_start == 0 || text.as_bytes()[crc_start - 1] != b'\n' {
        return Err(Error::Parse {
            offset: crc_start,
            msg: "CRC trailer must start a line".into(),
        });
    }
    let body = &text[..crc_start];
    let stored = text[crc_start + 4..].trim().trim_start_matches("0x");
    let stored = u32::from_str_radix(stored, 16).map_err(|_| Error::Parse {
        offset: crc_start,
        msg: "CRC value is not hexadecimal".into(),
    })?;
    let computed = crc32fast::hash(body.as_bytes());
    if stored != computed {
        return Err(Error::ChecksumMismatch { stored, computed });
    }
    Ok(body)
}
