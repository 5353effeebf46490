//! Flat little-endian binary format for [`LyapunovNet`].
//!
//! ```text
//! offset  size      field
//! 0       4         magic "RFLN"
//! 4       4         u32 format version (1)
//! 8       4         u32 activation code (0 tanh, 1 leaky_relu, 2 linear)
//! 12      4         u32 k, number of layer widths including the input
//! 16      4k        u32 layer widths d0..d(k-1)
//! 16+4k   8         f64 epsilon
//! 24+4k   8         u64 parameter count p
//! 32+4k   8p        f64 parameters, per layer G then H, row-major
//! ```

use alloc::format;
use alloc::vec::Vec;

use super::{param_count, Activation, LyapunovNet};
use crate::{Error, Result};

pub const MAGIC: [u8; 4] = *b"RFLN";
pub const VERSION: u32 = 1;

pub fn encode(net: &LyapunovNet) -> Vec<u8> {
    let dims = net.dims();
    let params = net.params();
    let mut out = Vec::with_capacity(32 + 4 * dims.len() + 8 * params.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&net.activation().code().to_le_bytes());
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&net.epsilon().to_le_bytes());
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for p in params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Decode(format!("truncated at {what} (offset {})", self.pos))),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<LyapunovNet> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Decode("bad magic".into()));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Decode(format!("unsupported version {version}")));
    }
    let code = r.u32("activation")?;
    let activation =
        Activation::from_code(code).ok_or_else(|| Error::Decode(format!("unknown activation code {code}")))?;
    let k = r.u32("layer count")? as usize;
    if !(2..=64).contains(&k) {
        return Err(Error::Decode(format!("implausible layer count {k}")));
    }
    let mut dims = Vec::with_capacity(k);
    for _ in 0..k {
        dims.push(r.u32("layer width")? as usize);
    }
    let epsilon = r.f64("epsilon")?;
    let count = r.u64("parameter count")?;
    if dims.windows(2).any(|w| w[1] < w[0]) || dims[0] == 0 {
        return Err(Error::Decode(format!("invalid layer widths {dims:?}")));
    }
    if count != param_count(&dims) as u64 {
        return Err(Error::Decode(format!(
            "parameter count {count} does not match widths {dims:?}"
        )));
    }
    let mut params = Vec::with_capacity(count as usize);
    for _ in 0..count {
        params.push(r.f64("parameters")?);
    }
    if r.pos != bytes.len() {
        return Err(Error::Decode(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    LyapunovNet::from_params(&dims, epsilon, activation, params).map_err(|e| Error::Decode(format!("{e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn round_trip_is_bit_exact() {
        let net = LyapunovNet::init(&[3, 5, 8], 1e-2, Activation::LeakyRelu, 42).unwrap();
        let bytes = encode(&net);
        assert_eq!(bytes.len(), 32 + 4 * 3 + 8 * net.params().len());
        assert_eq!(&bytes[..4], b"RFLN");
        let back = decode(&bytes).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn header_layout() {
        let net = LyapunovNet::from_params(&[1, 2], 0.5, Activation::Tanh, vec![1.0, 2.0]).unwrap();
        let b = encode(&net);
        assert_eq!(&b[4..8], &1u32.to_le_bytes());
        assert_eq!(&b[8..12], &0u32.to_le_bytes());
        assert_eq!(&b[12..16], &2u32.to_le_bytes());
        assert_eq!(&b[16..20], &1u32.to_le_bytes());
        assert_eq!(&b[20..24], &2u32.to_le_bytes());
        assert_eq!(&b[24..32], &0.5f64.to_le_bytes());
        assert_eq!(&b[32..40], &2u64.to_le_bytes());
        assert_eq!(&b[40..48], &1.0f64.to_le_bytes());
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let net = LyapunovNet::init(&[2, 4], 1e-2, Activation::Tanh, 1).unwrap();
        let good = encode(&net);
        assert!(decode(&good[..good.len() - 1]).is_err());
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
        let mut bad = good.clone();
        bad[8] = 9;
        assert!(decode(&bad).is_err());
        let mut extra = good;
        extra.push(0);
        assert!(decode(&extra).is_err());
    }
}
