//! Checkpoint byte format.
//!
//! ```text
//! magic        6 bytes   "STCAE1"
//! name_len     u32
//! name         name_len bytes, UTF-8 variant name
//! layer_count  u32
//! per layer:
//!   index      u32       layer position in the model spec
//!   tensors    u32       always 2: weights, then bias
//!   per tensor:
//!     rank     u32
//!     dims     rank x u32
//!     values   prod(dims) x f32
//! ```
//!
//! All integers and floats are little-endian. Floats are stored by bit
//! pattern, so a round trip is exact.

use alloc::string::String;
use alloc::vec::Vec;

use crate::arch::{LayerParams, ModelParams};
use crate::{Error, Result, Tensor};

pub const MAGIC: &[u8; 6] = b"STCAE1";

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_tensor(out: &mut Vec<u8>, t: &Tensor) {
    put_u32(out, t.rank());
    for &d in t.shape() {
        put_u32(out, d);
    }
    for &v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serialises `params` under the variant name `variant`.
pub fn encode(variant: &str, params: &ModelParams) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, variant.len());
    out.extend_from_slice(variant.as_bytes());
    put_u32(&mut out, params.len());
    for (index, p) in params.iter() {
        put_u32(&mut out, index);
        put_u32(&mut out, 2);
        put_tensor(&mut out, &p.weights);
        put_tensor(&mut out, &p.bias);
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(alloc::format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn tensor(&mut self) -> Result<Tensor> {
        let rank = self.u32()?;
        if rank == 0 || rank > 8 {
            return Err(Error::Checkpoint(alloc::format!("implausible tensor rank {rank}")));
        }
        let dims = (0..rank).map(|_| self.u32()).collect::<Result<Vec<_>>>()?;
        let len = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&l| l.checked_mul(4).is_some_and(|b| b <= self.bytes.len() - self.pos))
            .ok_or_else(|| Error::Checkpoint(alloc::format!("tensor {dims:?} exceeds remaining bytes")))?;
        let raw = self.take(len * 4)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Tensor::from_vec(&dims, data).map_err(|e| Error::Checkpoint(alloc::format!("{e}")))
    }
}

/// Parses a checkpoint into its variant name and parameters.
pub fn decode(bytes: &[u8]) -> Result<(String, ModelParams)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let name_len = r.u32()?;
    let name = core::str::from_utf8(r.take(name_len)?)
        .map_err(|_| Error::Checkpoint("variant name is not UTF-8".into()))?
        .into();
    let count = r.u32()?;
    let mut params = ModelParams::default();
    for _ in 0..count {
        let index = r.u32()?;
        let tensors = r.u32()?;
        if tensors != 2 {
            return Err(Error::Checkpoint(alloc::format!(
                "layer {index} has {tensors} tensors, expected 2"
            )));
        }
        let weights = r.tensor()?;
        let bias = r.tensor()?;
        params.insert(index, LayerParams { weights, bias });
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(alloc::format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    Ok((name, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{build_model, Variant};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let spec = build_model(Variant::CaeDeconv);
        let mut params = ModelParams::init(&spec, &mut ChaCha8Rng::seed_from_u64(5));
        // Include values whose bit patterns matter.
        params.get_mut(0).unwrap().bias.data_mut()[0] = -0.0;
        params.get_mut(0).unwrap().bias.data_mut()[1] = f32::MIN_POSITIVE / 2.0;
        let bytes = encode(Variant::CaeDeconv.slug(), &params);
        assert_eq!(&bytes[..6], MAGIC);
        let (name, back) = decode(&bytes).unwrap();
        assert_eq!(name, "cae-deconv");
        for ((_, a), (_, b)) in params.iter().zip(back.iter()) {
            let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.weights), bits(&b.weights));
            assert_eq!(bits(&a.bias), bits(&b.bias));
        }
        assert_eq!(encode("cae-deconv", &back), bytes);
    }

    #[test]
    fn rejects_corruption() {
        let spec = build_model(Variant::Dae);
        let bytes = encode("dae", &ModelParams::zeros(&spec));
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(decode(&extra).is_err());
    }
}
