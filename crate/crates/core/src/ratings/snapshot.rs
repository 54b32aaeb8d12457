//! Binary snapshot: `u32` user, item and entry counts, then `(u32, u32, u8)`
//! triples, then the original user and item ids (`u32` each) and the
//! rating ceiling as one byte. Everything little-endian.

use std::io::{Read, Write};

use super::{RatingMatrix, RatingsError};

pub fn write_snapshot<W: Write>(matrix: &RatingMatrix, mut out: W) -> std::io::Result<()> {
    out.write_all(&matrix.num_users().to_le_bytes())?;
    out.write_all(&matrix.num_items().to_le_bytes())?;
    out.write_all(&(matrix.len() as u32).to_le_bytes())?;
    for r in matrix.entries() {
        out.write_all(&r.user.to_le_bytes())?;
        out.write_all(&r.item.to_le_bytes())?;
        out.write_all(&[r.value])?;
    }
    for id in matrix.user_ids().iter().chain(matrix.item_ids()) {
        out.write_all(&id.to_le_bytes())?;
    }
    out.write_all(&[matrix.r_max()])
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32, RatingsError> {
    let mut b = [0u8; 4];
    input
        .read_exact(&mut b)
        .map_err(|e| RatingsError::Snapshot(format!("truncated: {e}")))?;
    Ok(u32::from_le_bytes(b))
}

fn read_u8<R: Read>(input: &mut R) -> Result<u8, RatingsError> {
    let mut b = [0u8; 1];
    input
        .read_exact(&mut b)
        .map_err(|e| RatingsError::Snapshot(format!("truncated: {e}")))?;
    Ok(b[0])
}

pub fn read_snapshot<R: Read>(mut input: R) -> Result<RatingMatrix, RatingsError> {
    let num_users = read_u32(&mut input)?;
    let num_items = read_u32(&mut input)?;
    let count = read_u32(&mut input)?;
    let mut triples = Vec::with_capacity(count.min(1 << 24) as usize);
    for _ in 0..count {
        let u = read_u32(&mut input)?;
        let j = read_u32(&mut input)?;
        let r = read_u8(&mut input)?;
        triples.push((u, j, r));
    }
    let user_ids = (0..num_users)
        .map(|_| read_u32(&mut input))
        .collect::<Result<Vec<_>, _>>()?;
    let item_ids = (0..num_items)
        .map(|_| read_u32(&mut input))
        .collect::<Result<Vec<_>, _>>()?;
    let r_max = read_u8(&mut input)?;
    RatingMatrix::with_ids(user_ids, item_ids, r_max, triples)
}
