//! Versioned binary model snapshot: magic `EXPM`, `u32` version, `u32`
//! `k`, items and experts, two `f64` scalars (μ and the average expert
//! star bias), the row-major `f64` arrays, then the expert rating matrix in
//! the ratings snapshot format. Little-endian throughout.

use std::io::{Read, Write};

use super::{ExpertError, ExpertModel};
use crate::ratings::{read_snapshot, write_snapshot};

const MAGIC: &[u8; 4] = b"EXPM";
const VERSION: u32 = 1;

pub fn write_model<W: Write>(model: &ExpertModel, mut out: W) -> Result<(), ExpertError> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(model.k as u32).to_le_bytes())?;
    out.write_all(&(model.num_items() as u32).to_le_bytes())?;
    out.write_all(&(model.num_experts() as u32).to_le_bytes())?;
    out.write_all(&model.global_mean.to_le_bytes())?;
    out.write_all(&model.avg_user_bias_star.to_le_bytes())?;
    for arr in [
        &model.a,
        &model.q,
        &model.user_bias_star,
        &model.item_bias_star,
        &model.user_bias,
        &model.item_bias,
    ] {
        for x in arr.iter() {
            out.write_all(&x.to_le_bytes())?;
        }
    }
    write_snapshot(&model.experts, &mut out)?;
    Ok(())
}

fn read_bytes<R: Read, const N: usize>(input: &mut R) -> Result<[u8; N], ExpertError> {
    let mut b = [0u8; N];
    input
        .read_exact(&mut b)
        .map_err(|e| ExpertError::Snapshot(format!("truncated: {e}")))?;
    Ok(b)
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32, ExpertError> {
    read_bytes::<R, 4>(input).map(u32::from_le_bytes)
}

fn read_f64s<R: Read>(input: &mut R, n: usize) -> Result<Vec<f64>, ExpertError> {
    (0..n)
        .map(|_| read_bytes::<R, 8>(input).map(f64::from_le_bytes))
        .collect()
}

pub fn read_model<R: Read>(mut input: R) -> Result<ExpertModel, ExpertError> {
    if &read_bytes::<R, 4>(&mut input)? != MAGIC {
        return Err(ExpertError::Snapshot("bad magic".into()));
    }
    let version = read_u32(&mut input)?;
    if version != VERSION {
        return Err(ExpertError::Snapshot(format!("unsupported version {version}")));
    }
    let k = read_u32(&mut input)? as usize;
    let m = read_u32(&mut input)? as usize;
    let n = read_u32(&mut input)? as usize;
    if k == 0 || k.checked_mul(m).map_or(true, |x| x > 1 << 28) || n > 1 << 28 {
        return Err(ExpertError::Snapshot("implausible dimensions".into()));
    }
    let global_mean = f64::from_le_bytes(read_bytes(&mut input)?);
    let avg_user_bias_star = f64::from_le_bytes(read_bytes(&mut input)?);
    let a = read_f64s(&mut input, m * k)?;
    let q = read_f64s(&mut input, m * k)?;
    let user_bias_star = read_f64s(&mut input, n)?;
    let item_bias_star = read_f64s(&mut input, m)?;
    let user_bias = read_f64s(&mut input, n)?;
    let item_bias = read_f64s(&mut input, m)?;
    let experts = read_snapshot(&mut input)?;
    if experts.num_items() as usize != m || experts.num_users() as usize != n {
        return Err(ExpertError::Snapshot("expert matrix does not match dimensions".into()));
    }
    let all = [&a, &q, &user_bias_star, &item_bias_star, &user_bias, &item_bias];
    if !global_mean.is_finite() || all.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
        return Err(ExpertError::Snapshot("non-finite parameter".into()));
    }
    Ok(ExpertModel {
        k,
        a,
        q,
        user_bias_star,
        item_bias_star,
        global_mean,
        user_bias,
        item_bias,
        avg_user_bias_star,
        experts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expert::{train, TrainConfig};
    use crate::ratings::{RatingMatrix, RobDetVerdict};

    #[test]
    fn round_trip() {
        let m = RatingMatrix::from_entries(2, 3, 5, [(0, 0, 4), (0, 2, 1), (1, 1, 5)]).unwrap();
        let cfg = TrainConfig {
            k: 3,
            epochs: 3,
            ..Default::default()
        };
        let model = train(&m, &RobDetVerdict::accept_all(2), &cfg).unwrap();
        let mut buf = Vec::new();
        write_model(&model, &mut buf).unwrap();
        assert_eq!(read_model(&buf[..]).unwrap(), model);
        buf[0] = b'X';
        assert!(read_model(&buf[..]).is_err());
        let mut short = Vec::new();
        write_model(&model, &mut short).unwrap();
        short.truncate(40);
        assert!(read_model(&short[..]).is_err());
    }
}
