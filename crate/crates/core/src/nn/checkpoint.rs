//! Binary network checkpoints.
//!
//! Layout (little-endian):
//!
//! | bytes | field |
//! |-------|-------|
//! | 4     | magic `CIRN` |
//! | 4     | version (u32, currently 1) |
//! | 1     | activation (0 = relu, 1 = tanh) |
//! | 4     | number of layer dims `L` (u32) |
//! | 4·L   | layer dims (u32 each) |
//! | 4     | head outputs (u32) |
//! | 4     | projection outputs (u32, 0 = none) |
//! | 8     | parameter count `P` (u64) |
//! | 8·P   | parameters (f64) |

use super::mlp::{Activation, MlpNetwork, NetSpec};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"CIRN";
const VERSION: u32 = 1;

pub fn encode_network(net: &MlpNetwork) -> Vec<u8> {
    let spec = net.spec();
    let mut out = Vec::with_capacity(32 + 8 * net.n_params());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(spec.activation.code());
    out.extend_from_slice(&(spec.layer_dims.len() as u32).to_le_bytes());
    for &d in &spec.layer_dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&(spec.n_outputs as u32).to_le_bytes());
    out.extend_from_slice(&(spec.projection_dim.unwrap_or(0) as u32).to_le_bytes());
    out.extend_from_slice(&(net.n_params() as u64).to_le_bytes());
    for p in net.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let end = self.pos + N;
        let slice = self.bytes.get(self.pos..end).ok_or_else(|| Error::Parse {
            offset: self.pos,
            message: format!("checkpoint truncated while reading {what}"),
        })?;
        self.pos = end;
        Ok(slice.try_into().expect("length checked"))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(what)?))
    }
}

pub fn decode_network(bytes: &[u8]) -> Result<MlpNetwork> {
    let mut r = Reader { bytes, pos: 0 };
    if &r.take::<4>("magic")? != MAGIC {
        return Err(Error::Parse {
            offset: 0,
            message: "not a network checkpoint".into(),
        });
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Parse {
            offset: 4,
            message: format!("unsupported checkpoint version {version}"),
        });
    }
    let act_pos = r.pos;
    let activation = Activation::from_code(r.take::<1>("activation")?[0]).ok_or(Error::Parse {
        offset: act_pos,
        message: "unknown activation".into(),
    })?;
    let n_dims = r.u32("dimension count")? as usize;
    let layer_dims = (0..n_dims)
        .map(|_| r.u32("layer dims").map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let n_outputs = r.u32("head outputs")? as usize;
    let projection = r.u32("projection outputs")? as usize;
    let count_pos = r.pos;
    let n_params = u64::from_le_bytes(r.take("parameter count")?) as usize;
    let spec = NetSpec {
        layer_dims,
        activation,
        n_outputs,
        projection_dim: (projection > 0).then_some(projection),
    };
    let expected = MlpNetwork::zeros(spec.clone())
        .map_err(|e| Error::Parse {
            offset: 8,
            message: e.to_string(),
        })?
        .n_params();
    if n_params != expected {
        return Err(Error::Parse {
            offset: count_pos,
            message: format!("parameter count {n_params} does not match the layout ({expected})"),
        });
    }
    let params = (0..n_params)
        .map(|_| r.take::<8>("parameters").map(f64::from_le_bytes))
        .collect::<Result<Vec<_>>>()?;
    if r.pos != bytes.len() {
        return Err(Error::Parse {
            offset: r.pos,
            message: "trailing bytes after checkpoint".into(),
        });
    }
    MlpNetwork::from_params(spec, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn checkpoint_round_trip() {
        let spec = NetSpec::new(vec![5, 7, 3], 4).with_projection(2);
        let net = MlpNetwork::init(spec, &mut substream(8, &[])).unwrap();
        let bytes = encode_network(&net);
        assert_eq!(decode_network(&bytes).unwrap(), net);
        let cut = &bytes[..bytes.len() - 3];
        assert!(matches!(decode_network(cut), Err(Error::Parse { .. })));
    }
}
