use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{NumericsError, Result};

/// Bumped whenever a serialized layout changes.
pub const CHECKPOINT_VERSION: u32 = 1;

const MAGIC: &[u8; 8] = b"TOCCKPT\0";

#[derive(Serialize, Deserialize)]
struct Header {
    kind: String,
    version: u32,
}

fn codec_err(e: bincode::Error) -> NumericsError {
    NumericsError::Checkpoint(e.to_string())
}

/// Writes `magic | header | payload`; floats are stored as raw bits so a
/// read-back is bit-exact.
pub fn write_checkpoint<T: Serialize, W: Write>(mut w: W, kind: &str, value: &T) -> Result<()> {
    w.write_all(MAGIC)?;
    let header = Header {
        kind: kind.to_string(),
        version: CHECKPOINT_VERSION,
    };
    bincode::serialize_into(&mut w, &header).map_err(codec_err)?;
    bincode::serialize_into(&mut w, value).map_err(codec_err)?;
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<T: DeserializeOwned, R: Read>(mut r: R, kind: &str) -> Result<T> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(NumericsError::Checkpoint("not a checkpoint file".into()));
    }
    let header: Header = bincode::deserialize_from(&mut r).map_err(codec_err)?;
    if header.version != CHECKPOINT_VERSION {
        return Err(NumericsError::Checkpoint(format!(
            "unsupported version {} (expected {CHECKPOINT_VERSION})",
            header.version
        )));
    }
    if header.kind != kind {
        return Err(NumericsError::Checkpoint(format!(
            "holds `{}`, expected `{kind}`",
            header.kind
        )));
    }
    bincode::deserialize_from(&mut r).map_err(codec_err)
}

pub fn save_checkpoint<T: Serialize>(path: impl AsRef<Path>, kind: &str, value: &T) -> Result<()> {
    write_checkpoint(BufWriter::new(File::create(path)?), kind, value)
}

pub fn load_checkpoint<T: DeserializeOwned>(path: impl AsRef<Path>, kind: &str) -> Result<T> {
    read_checkpoint(BufReader::new(File::open(path)?), kind)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Activation, AdamConfig, AdamState, Network, NetworkSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn network_and_optimizer_round_trip_bit_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = Network::new(NetworkSpec::mlp(3, &[5], 2, Activation::Identity), &mut rng).unwrap();
        let mut adam = AdamState::new(net.params(), AdamConfig::default());
        adam.step = 17;
        adam.m.arrays[0].data[1] = -0.0;
        adam.v.arrays[0].data[2] = 1e-300;
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, "net", &(&net, &adam)).unwrap();
        let (net2, adam2): (Network, AdamState) = read_checkpoint(buf.as_slice(), "net").unwrap();
        assert_eq!(net, net2);
        assert_eq!(adam2.step, 17);
        assert!(adam.m.bit_eq(&adam2.m) && adam.v.bit_eq(&adam2.v));
    }

    #[test]
    fn wrong_kind_or_magic_is_rejected() {
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, "a", &1u32).unwrap();
        assert!(read_checkpoint::<u32, _>(buf.as_slice(), "b").is_err());
        buf[0] = b'X';
        assert!(read_checkpoint::<u32, _>(buf.as_slice(), "a").is_err());
    }
}
