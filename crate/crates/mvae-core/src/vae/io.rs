//! Checkpoint serialization. The file self-describes the architecture, the
//! hierarchy content hash, and the seed; loading against a different
//! hierarchy is refused.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::{ArchSpec, VaeError, VaeParams};

pub const CKPT_MAGIC: &[u8; 9] = b"MVAE-CKPT";
pub const CKPT_VERSION: u32 = 1;

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn save_params(path: &Path, params: &VaeParams) -> Result<(), VaeError> {
    let io_err = |source| VaeError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(CKPT_MAGIC);
    buf.extend_from_slice(&CKPT_VERSION.to_le_bytes());
    let arch = &params.arch;
    buf.extend_from_slice(&(arch.layers.len() as u32).to_le_bytes());
    buf.extend_from_slice(arch.layers.as_bytes());
    buf.extend_from_slice(&(arch.latent as u32).to_le_bytes());
    buf.extend_from_slice(&(arch.order as u32).to_le_bytes());
    buf.extend_from_slice(&(arch.width as u32).to_le_bytes());
    buf.extend_from_slice(&(arch.condition as u32).to_le_bytes());
    buf.extend_from_slice(&params.hierarchy_hash);
    buf.extend_from_slice(&params.seed.to_le_bytes());
    let tensors = params.tensor_list();
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        buf.extend_from_slice(&(t.nrows() as u32).to_le_bytes());
        buf.extend_from_slice(&(t.ncols() as u32).to_le_bytes());
        for &x in t.iter() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    let mut file = fs::File::create(path).map_err(io_err)?;
    file.write_all(&buf).map_err(io_err)?;
    Ok(())
}

/// Loads a checkpoint. When `expected_hash` is given, a mismatch against the
/// stored hierarchy hash is an error showing both hashes.
pub fn load_params(path: &Path, expected_hash: Option<[u8; 32]>) -> Result<VaeParams, VaeError> {
    let io_err = |source| VaeError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut bytes = Vec::new();
    fs::File::open(path)
        .map_err(io_err)?
        .read_to_end(&mut bytes)
        .map_err(io_err)?;
    let p = path.display().to_string();
    let truncated = || VaeError::Truncated { path: p.clone() };
    let mut cursor = 0usize;
    let mut take = |n: usize| -> Result<&[u8], VaeError> {
        if cursor + n > bytes.len() {
            return Err(truncated());
        }
        let s = &bytes[cursor..cursor + n];
        cursor += n;
        Ok(s)
    };
    if take(9)? != CKPT_MAGIC {
        return Err(VaeError::BadMagic { path: p.clone() });
    }
    let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
    if version != CKPT_VERSION {
        return Err(VaeError::BadVersion {
            path: p.clone(),
            version,
        });
    }
    let layers_len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let layers = String::from_utf8(take(layers_len)?.to_vec())
        .map_err(|_| VaeError::Truncated { path: p.clone() })?;
    let latent = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let order = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let width = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let condition = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let arch = ArchSpec {
        layers,
        width,
        latent,
        order,
        condition,
    };
    arch.validate()?;
    let mut hash = [0u8; 32];
    hash.copy_from_slice(take(32)?);
    if let Some(expected) = expected_hash {
        if expected != hash {
            return Err(VaeError::HierarchyMismatch {
                checkpoint: hex(&hash),
                current: hex(&expected),
            });
        }
    }
    let seed = u64::from_le_bytes(take(8)?.try_into().unwrap());
    let tensor_count = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let conv_count = arch.conv_count();
    let expected_tensors =
        2 * conv_count * arch.order + 2 + if arch.condition > 0 { 1 } else { 0 };
    if tensor_count != expected_tensors {
        return Err(truncated());
    }
    let mut tensors = Vec::with_capacity(tensor_count);
    for _ in 0..tensor_count {
        let rows = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            data.push(f64::from_le_bytes(take(8)?.try_into().unwrap()));
        }
        tensors.push(
            Array2::from_shape_vec((rows, cols), data)
                .map_err(|_| VaeError::Truncated { path: p.clone() })?,
        );
    }
    if cursor != bytes.len() {
        return Err(truncated());
    }
    let mut iter = tensors.into_iter();
    let mut enc_convs = Vec::with_capacity(conv_count);
    for _ in 0..conv_count {
        enc_convs.push((&mut iter).take(arch.order).collect::<Vec<_>>());
    }
    let fc_mean = iter.next().expect("counted");
    let fc_dev = iter.next().expect("counted");
    let mut dec_convs = Vec::with_capacity(conv_count);
    for _ in 0..conv_count {
        dec_convs.push((&mut iter).take(arch.order).collect::<Vec<_>>());
    }
    let cond_decoder = if arch.condition > 0 { iter.next() } else { None };
    Ok(VaeParams {
        arch,
        seed,
        hierarchy_hash: hash,
        enc_convs,
        fc_mean,
        fc_dev,
        dec_convs,
        cond_decoder,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::build_hierarchy;
    use crate::synth;
    use crate::vae::{build_model, ModelContext};

    fn toy_params() -> VaeParams {
        let mesh = synth::icosphere(1);
        let h = build_hierarchy(&mesh, 1, 0.001).unwrap();
        let arch = ArchSpec {
            latent: 5,
            ..ArchSpec::default()
        };
        let ctx = ModelContext::from_hierarchy(&h, &arch).unwrap();
        build_model(&ctx, &arch, 99).unwrap()
    }

    #[test]
    fn round_trip_bit_exact() {
        let params = toy_params();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.bin");
        save_params(&path, &params).unwrap();
        let loaded = load_params(&path, Some(params.hierarchy_hash)).unwrap();
        assert_eq!(loaded, params);
    }

    #[test]
    fn truncated_checkpoint_rejected() {
        let params = toy_params();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.bin");
        save_params(&path, &params).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(
            load_params(&path, None),
            Err(VaeError::Truncated { .. })
        ));
    }

    #[test]
    fn hierarchy_hash_mismatch_refused() {
        let params = toy_params();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.bin");
        save_params(&path, &params).unwrap();
        let err = load_params(&path, Some([0xAB; 32])).unwrap_err();
        match err {
            VaeError::HierarchyMismatch {
                checkpoint,
                current,
            } => {
                assert_eq!(current, "ab".repeat(32));
                assert_eq!(checkpoint, hex(&params.hierarchy_hash));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.bin");
        std::fs::write(&path, b"WRONGMAGI\x01\x00\x00\x00rest").unwrap();
        assert!(matches!(
            load_params(&path, None),
            Err(VaeError::BadMagic { .. })
        ));
    }
}
