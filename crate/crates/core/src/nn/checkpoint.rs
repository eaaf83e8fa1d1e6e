//! Versioned binary checkpoint container.
//!
//! ```text
//! b"MALVCKPT"            magic
//! u32 LE                 format version
//! u64 LE                 header length
//! header                 JSON: nets with input shape, layer specs, tensor shapes
//! f64 LE ...             every state tensor of every net, in header order
//! ```

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::layers::LayerSpec;
use crate::nn::model::Sequential;

const MAGIC: &[u8; 8] = b"MALVCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct NetHeader {
    name: String,
    input_shape: Vec<usize>,
    layers: Vec<LayerSpec>,
    tensors: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    nets: Vec<NetHeader>,
}

pub fn to_bytes(nets: &[(&str, &Sequential)]) -> Result<Vec<u8>> {
    let header = Header {
        nets: nets
            .iter()
            .map(|(name, net)| NetHeader {
                name: name.to_string(),
                input_shape: net.input_shape().to_vec(),
                layers: net.specs(),
                tensors: net.state().iter().map(|t| t.shape().to_vec()).collect(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, net) in nets {
        for t in net.state() {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn from_bytes(data: &[u8]) -> Result<Vec<(String, Sequential)>> {
    let bad = |m: &str| Error::Checkpoint(m.to_string());
    if data.len() < 20 || &data[..8] != MAGIC {
        return Err(bad("missing magic"));
    }
    let version = u32::from_le_bytes(data[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let header_len = u64::from_le_bytes(data[12..20].try_into().expect("8 bytes")) as usize;
    let header_end = 20usize
        .checked_add(header_len)
        .filter(|&e| e <= data.len())
        .ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(&data[20..header_end])?;
    let mut cursor = header_end;
    let mut out = Vec::with_capacity(header.nets.len());
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for net_header in header.nets {
        let mut net = Sequential::new(net_header.input_shape, &net_header.layers, &mut rng)?;
        let mut state = net.state_mut();
        if state.len() != net_header.tensors.len() {
            return Err(bad("tensor count does not match the layer specs"));
        }
        for (t, shape) in state.iter_mut().zip(&net_header.tensors) {
            if t.shape() != shape.as_slice() {
                return Err(bad("tensor shape does not match the layer specs"));
            }
            let bytes = t.len() * 8;
            let chunk = data
                .get(cursor..cursor + bytes)
                .ok_or_else(|| bad("truncated tensor data"))?;
            for (v, b) in t.data_mut().iter_mut().zip(chunk.chunks_exact(8)) {
                *v = f64::from_le_bytes(b.try_into().expect("8 bytes"));
            }
            cursor += bytes;
        }
        out.push((net_header.name, net));
    }
    if cursor != data.len() {
        return Err(bad("trailing bytes"));
    }
    Ok(out)
}

pub fn write_checkpoint(path: impl AsRef<Path>, nets: &[(&str, &Sequential)]) -> Result<()> {
    fs::write(path, to_bytes(nets)?)?;
    Ok(())
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Vec<(String, Sequential)>> {
    let path = path.as_ref();
    let data = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    from_bytes(&data)
}

/// Pulls the net called `name` out of a loaded checkpoint.
pub fn take_net(nets: &mut Vec<(String, Sequential)>, name: &str) -> Result<Sequential> {
    let pos = nets
        .iter()
        .position(|(n, _)| n == name)
        .ok_or_else(|| Error::Checkpoint(format!("no net named {name:?}")))?;
    Ok(nets.remove(pos).1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Mode, Tensor};

    #[test]
    fn round_trip_preserves_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let specs = [
            LayerSpec::Dense { units: 5 },
            LayerSpec::LeakyRelu { slope: 0.2 },
            LayerSpec::batch_norm(),
            LayerSpec::Dense { units: 2 },
            LayerSpec::Softmax,
        ];
        let mut net = Sequential::new(vec![4], &specs, &mut rng).unwrap();
        let x = Tensor::new(vec![3, 4], (0..12).map(|i| i as f64 * 0.1).collect()).unwrap();
        net.forward(&x, Mode::Train).unwrap();
        let bytes = to_bytes(&[("net", &net)]).unwrap();
        let mut loaded = from_bytes(&bytes).unwrap();
        let mut back = take_net(&mut loaded, "net").unwrap();
        assert_eq!(
            net.forward(&x, Mode::Eval).unwrap().data(),
            back.forward(&x, Mode::Eval).unwrap().data()
        );
        assert_eq!(to_bytes(&[("net", &back)]).unwrap(), bytes);
    }

    #[test]
    fn corrupt_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Sequential::new(vec![2], &[LayerSpec::Dense { units: 1 }], &mut rng).unwrap();
        let bytes = to_bytes(&[("a", &net)]).unwrap();
        assert!(from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(from_bytes(b"NOTACKPT").is_err());
        let mut v2 = bytes.clone();
        v2[8] = 9;
        assert!(from_bytes(&v2).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(from_bytes(&extra).is_err());
    }
}
