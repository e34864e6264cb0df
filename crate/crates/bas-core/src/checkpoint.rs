//! Binary checkpoint serialization.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "BASCKPT" + version byte '1'
//! u8  precision flag: 0 = f32 values, 1 = f64 values
//! u32 tensor count
//! per tensor:
//!   u16 name length, UTF-8 name bytes
//!   u8  rank, then rank x u32 dimension sizes
//!   raw IEEE-754 values at the header precision
//! ```
//!
//! Saving and reloading at the same precision round-trips bit-exactly; a
//! checkpoint written at the other precision is converted on load.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{BasModel, ModelConfig};
use crate::tensor::{Scalar, Tensor};

const MAGIC: &[u8; 7] = b"BASCKPT";
const VERSION: u8 = b'1';

pub fn write_tensors<F: Scalar>(
    mut out: impl Write,
    tensors: &[(String, Tensor<F>)],
) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.push(VERSION);
    buf.push(F::PRECISION_FLAG);
    let count = u32::try_from(tensors.len())
        .map_err(|_| Error::data("too many tensors for a checkpoint"))?;
    buf.extend_from_slice(&count.to_le_bytes());
    for (name, tensor) in tensors {
        let name_bytes = name.as_bytes();
        let name_len = u16::try_from(name_bytes.len())
            .map_err(|_| Error::data(format!("tensor name '{name}' too long")))?;
        buf.extend_from_slice(&name_len.to_le_bytes());
        buf.extend_from_slice(name_bytes);
        let rank = u8::try_from(tensor.rank())
            .map_err(|_| Error::data(format!("tensor '{name}' rank too large")))?;
        buf.push(rank);
        for &dim in tensor.shape() {
            let dim = u32::try_from(dim)
                .map_err(|_| Error::data(format!("tensor '{name}' dimension too large")))?;
            buf.extend_from_slice(&dim.to_le_bytes());
        }
        for &value in tensor.data() {
            value.write_le(&mut buf);
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    /// Reads exactly `n` bytes; a short read becomes a truncation error
    /// naming whatever is currently being parsed.
    fn exact(&mut self, n: usize, context: &str) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| Error::CheckpointTruncated {
                name: context.to_string(),
            })?;
        Ok(buf)
    }

    fn u16_le(&mut self, context: &str) -> Result<u16> {
        let b = self.exact(2, context)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32_le(&mut self, context: &str) -> Result<u32> {
        let b = self.exact(4, context)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn read_tensors<F: Scalar>(input: impl Read) -> Result<Vec<(String, Tensor<F>)>> {
    let mut reader = Reader { inner: input };

    let mut magic = [0u8; 8];
    if reader.inner.read_exact(&mut magic).is_err() || &magic[..7] != MAGIC {
        return Err(Error::CheckpointMagic);
    }
    if magic[7] != VERSION {
        return Err(Error::CheckpointVersion {
            found: magic[7],
            expected: VERSION,
        });
    }
    let precision = reader.exact(1, "(header)")?[0];
    if precision > 1 {
        return Err(Error::CheckpointShape {
            name: "(header)".to_string(),
            message: format!("unknown precision flag {precision}"),
        });
    }
    let count = reader.u32_le("(header)")? as usize;

    let mut tensors = Vec::with_capacity(count);
    for i in 0..count {
        let placeholder = format!("(tensor {i})");
        let name_len = reader.u16_le(&placeholder)? as usize;
        let name_bytes = reader.exact(name_len, &placeholder)?;
        let name = String::from_utf8(name_bytes).map_err(|_| Error::CheckpointShape {
            name: placeholder.clone(),
            message: "name is not UTF-8".to_string(),
        })?;
        let rank = reader.exact(1, &name)?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(reader.u32_le(&name)? as usize);
        }
        let len = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::CheckpointShape {
                name: name.clone(),
                message: "dimension overflow".to_string(),
            })?;
        let width = if precision == 1 { 8 } else { 4 };
        let raw = reader.exact(len * width, &name)?;
        let data: Vec<F> = raw
            .chunks_exact(width)
            .map(|chunk| {
                if precision == F::PRECISION_FLAG {
                    F::read_le(chunk)
                } else if precision == 1 {
                    F::from_f64(f64::read_le(chunk))
                } else {
                    F::from_f64(f32::read_le(chunk).as_f64())
                }
            })
            .collect();
        let tensor = Tensor::new(shape, data).map_err(|e| Error::CheckpointShape {
            name: name.clone(),
            message: e.to_string(),
        })?;
        tensors.push((name, tensor));
    }

    let mut trailer = [0u8; 1];
    match reader.inner.read_exact(&mut trailer) {
        Ok(()) => Err(Error::CheckpointShape {
            name: "(trailer)".to_string(),
            message: "unexpected bytes after the last tensor".to_string(),
        }),
        Err(_) => Ok(tensors),
    }
}

/// Writes every model parameter under its canonical name.
pub fn save_model<F: Scalar>(model: &BasModel<F>, path: impl AsRef<Path>) -> Result<()> {
    let mut named: Vec<(String, Tensor<F>)> = Vec::new();
    model.for_each_param(&mut |info, tensor| named.push((info.name, tensor.clone())));
    let file = std::fs::File::create(path)?;
    write_tensors(std::io::BufWriter::new(file), &named)
}

/// Rebuilds a model for `config` from a checkpoint. Every expected parameter
/// must be present with its exact shape; unknown extras are rejected.
pub fn load_model<F: Scalar>(path: impl AsRef<Path>, config: &ModelConfig) -> Result<BasModel<F>> {
    let file = std::fs::File::open(path)?;
    let tensors = read_tensors::<F>(std::io::BufReader::new(file))?;
    let mut by_name: std::collections::HashMap<String, Tensor<F>> = tensors.into_iter().collect();

    let mut model = BasModel::init(config.clone(), 0)?;
    let mut failure: Option<Error> = None;
    model.for_each_param_mut(&mut |info, tensor| {
        if failure.is_some() {
            return;
        }
        match by_name.remove(&info.name) {
            Some(loaded) if loaded.shape() == tensor.shape() => *tensor = loaded,
            Some(loaded) => {
                failure = Some(Error::CheckpointShape {
                    name: info.name.clone(),
                    message: format!(
                        "shape {:?} does not match expected {:?}",
                        loaded.shape(),
                        tensor.shape()
                    ),
                });
            }
            None => {
                failure = Some(Error::CheckpointShape {
                    name: info.name.clone(),
                    message: "missing from checkpoint".to_string(),
                });
            }
        }
    });
    if let Some(err) = failure {
        return Err(err);
    }
    if let Some(extra) = by_name.keys().next() {
        return Err(Error::CheckpointShape {
            name: extra.clone(),
            message: "not a parameter of this configuration".to_string(),
        });
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::EncoderConfig;
    use crate::heads::{HeadConfig, HeadKind};

    fn toy_config(kind: HeadKind) -> ModelConfig {
        ModelConfig {
            encoder: EncoderConfig {
                layers: 1,
                hidden: 4,
                heads: 2,
                vocab_size: 9,
                max_len: 8,
                dropout: 0.0,
                bert_compat: false,
            },
            head: HeadConfig {
                kind,
                fc_hidden: 5,
                cnn_filters: 3,
                cnn_window: 3,
            },
            init_std: 0.02,
        }
    }

    fn checkpoint_bytes(model: &BasModel<f64>) -> Vec<u8> {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_model(model, &path).unwrap();
        std::fs::read(&path).unwrap()
    }

    #[test]
    fn model_round_trip_is_bit_exact() {
        for kind in HeadKind::ALL {
            let model = BasModel::<f64>::init(toy_config(kind), 12).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("model.ckpt");
            save_model(&model, &path).unwrap();
            let loaded = load_model::<f64>(&path, &toy_config(kind)).unwrap();
            let (a, b) = (model.param_tensors(), loaded.param_tensors());
            assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                assert_eq!(x.data(), y.data(), "{kind:?}");
                assert_eq!(x.shape(), y.shape());
            }
        }
    }

    #[test]
    fn arbitrary_rank_tensors_round_trip() {
        let rank1 = Tensor::<f64>::new(vec![5], vec![1.0, -2.5, 3.25, 0.0, 9.75]).unwrap();
        let rank3 = Tensor::<f64>::new(vec![2, 2, 2], (0..8).map(f64::from).collect()).unwrap();
        let mut buf = Vec::new();
        write_tensors(
            &mut buf,
            &[
                ("a".to_string(), rank1.clone()),
                ("b".to_string(), rank3.clone()),
            ],
        )
        .unwrap();
        let loaded = read_tensors::<f64>(buf.as_slice()).unwrap();
        assert_eq!(loaded[0].1, rank1);
        assert_eq!(loaded[1].1, rank3);
    }

    #[test]
    fn corrupted_magic_is_detected() {
        let model = BasModel::<f64>::init(toy_config(HeadKind::Baseline), 1).unwrap();
        let mut bytes = checkpoint_bytes(&model);
        bytes[0] = b'X';
        assert!(matches!(
            read_tensors::<f64>(bytes.as_slice()),
            Err(Error::CheckpointMagic)
        ));
    }

    #[test]
    fn wrong_version_is_distinct_from_bad_magic() {
        let model = BasModel::<f64>::init(toy_config(HeadKind::Baseline), 1).unwrap();
        let mut bytes = checkpoint_bytes(&model);
        bytes[7] = b'2';
        assert!(matches!(
            read_tensors::<f64>(bytes.as_slice()),
            Err(Error::CheckpointVersion { found: b'2', .. })
        ));
    }

    #[test]
    fn truncation_names_the_tensor() {
        let model = BasModel::<f64>::init(toy_config(HeadKind::Baseline), 1).unwrap();
        let bytes = checkpoint_bytes(&model);

        // Cut in the middle of the first tensor's payload: header is
        // 13 bytes, then name length + name + rank + two u32 dims.
        let first_values = 13 + 2 + "encoder.token_embedding".len() + 1 + 8;
        let err = read_tensors::<f64>(&bytes[..first_values + 16]).unwrap_err();
        match err {
            Error::CheckpointTruncated { name } => assert_eq!(name, "encoder.token_embedding"),
            other => panic!("expected truncation, got {other}"),
        }

        // Cut near the end: the last tensor is named instead.
        let err = read_tensors::<f64>(&bytes[..bytes.len() - 5]).unwrap_err();
        match err {
            Error::CheckpointTruncated { name } => assert_eq!(name, "head.fc.b2"),
            other => panic!("expected truncation, got {other}"),
        }
    }

    #[test]
    fn trailing_bytes_are_rejected() {
        let model = BasModel::<f64>::init(toy_config(HeadKind::Baseline), 1).unwrap();
        let mut bytes = checkpoint_bytes(&model);
        bytes.push(0);
        assert!(matches!(
            read_tensors::<f64>(bytes.as_slice()),
            Err(Error::CheckpointShape { .. })
        ));
    }

    #[test]
    fn loading_into_a_different_geometry_is_a_shape_error() {
        let model = BasModel::<f64>::init(toy_config(HeadKind::Baseline), 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_model(&model, &path).unwrap();

        let mut other = toy_config(HeadKind::Baseline);
        other.encoder.hidden = 8;
        other.encoder.heads = 4;
        assert!(matches!(
            load_model::<f64>(&path, &other),
            Err(Error::CheckpointShape { .. })
        ));

        // A different head kind misses tensors entirely.
        assert!(matches!(
            load_model::<f64>(&path, &toy_config(HeadKind::Cnn)),
            Err(Error::CheckpointShape { .. })
        ));
    }

    #[test]
    fn cross_precision_load_converts_values() {
        let model = BasModel::<f32>::init(toy_config(HeadKind::Baseline), 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model32.ckpt");
        save_model(&model, &path).unwrap();
        let as_f64 = load_model::<f64>(&path, &toy_config(HeadKind::Baseline)).unwrap();
        let (a, b) = (model.param_tensors(), as_f64.param_tensors());
        for (x, y) in a.iter().zip(&b) {
            for (p, q) in x.data().iter().zip(y.data()) {
                assert_eq!(*p as f64, *q);
            }
        }
    }
}
