//! IDX files as distributed for MNIST: big-endian `u32` magic and dimensions, `u8` payload.

use super::DataError;

pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;

#[derive(Debug, Clone, PartialEq)]
pub enum IdxPart {
    /// `count` images of `rows x cols`, scaled by 1/255.
    Images {
        count: usize,
        rows: usize,
        cols: usize,
        data: Vec<f32>,
    },
    Labels(Vec<u8>),
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32, DataError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or(DataError::Truncated {
            needed: at + 4,
            available: bytes.len(),
        })
}

fn payload(bytes: &[u8], header: usize, len: usize) -> Result<&[u8], DataError> {
    let needed = header.checked_add(len).ok_or(DataError::DimensionOverflow)?;
    if bytes.len() < needed {
        return Err(DataError::Truncated {
            needed,
            available: bytes.len(),
        });
    }
    if bytes.len() > needed {
        return Err(DataError::TrailingBytes(bytes.len() - needed));
    }
    Ok(&bytes[header..])
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxPart, DataError> {
    match read_u32(bytes, 0)? {
        IDX_LABELS_MAGIC => {
            let count = read_u32(bytes, 4)? as usize;
            Ok(IdxPart::Labels(payload(bytes, 8, count)?.to_vec()))
        }
        IDX_IMAGES_MAGIC => {
            let count = read_u32(bytes, 4)? as usize;
            let rows = read_u32(bytes, 8)? as usize;
            let cols = read_u32(bytes, 12)? as usize;
            let len = count
                .checked_mul(rows)
                .and_then(|v| v.checked_mul(cols))
                .ok_or(DataError::DimensionOverflow)?;
            let data = payload(bytes, 16, len)?
                .iter()
                .map(|&b| b as f32 / 255.0)
                .collect();
            Ok(IdxPart::Images { count, rows, cols, data })
        }
        found => Err(DataError::BadMagic { found }),
    }
}

pub fn serialize_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Inverse of the image branch of [`parse_idx`]; values are mapped back with `round(v * 255)`.
pub fn serialize_idx_images(count: usize, rows: usize, cols: usize, data: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + data.len());
    out.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    for d in [count, rows, cols] {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend(data.iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_built_label_file() {
        let bytes = [0, 0, 8, 1, 0, 0, 0, 3, 7, 0, 9];
        assert_eq!(parse_idx(&bytes).unwrap(), IdxPart::Labels(vec![7, 0, 9]));
    }

    #[test]
    fn hand_built_image_file() {
        let mut bytes = vec![0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 2];
        bytes.extend_from_slice(&[0, 255, 128, 64]);
        match parse_idx(&bytes).unwrap() {
            IdxPart::Images { count, rows, cols, data } => {
                assert_eq!((count, rows, cols), (1, 2, 2));
                assert_eq!(data, vec![0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_magic() {
        assert_eq!(
            parse_idx(&[0, 0, 8, 2, 0, 0, 0, 0]).unwrap_err(),
            DataError::BadMagic { found: 0x802 }
        );
    }

    #[test]
    fn truncated_payload() {
        let bytes = [0, 0, 8, 1, 0, 0, 0, 5, 1, 2];
        assert!(matches!(parse_idx(&bytes), Err(DataError::Truncated { needed: 13, available: 10 })));
    }

    #[test]
    fn overflowing_dimensions() {
        let bytes = [0, 0, 8, 3, 255, 255, 255, 255, 255, 255, 255, 255, 255, 255, 255, 255];
        let err = parse_idx(&bytes).unwrap_err();
        assert!(matches!(err, DataError::DimensionOverflow | DataError::Truncated { .. }));
    }

    proptest! {
        #[test]
        fn image_round_trip(rows in 1usize..6, cols in 1usize..6, count in 0usize..5, seed in any::<u64>()) {
            let raw: Vec<u8> = (0..rows * cols * count)
                .map(|i| (seed.wrapping_mul(i as u64 + 1) >> 7) as u8)
                .collect();
            let mut bytes = IDX_IMAGES_MAGIC.to_be_bytes().to_vec();
            for d in [count, rows, cols] {
                bytes.extend_from_slice(&(d as u32).to_be_bytes());
            }
            bytes.extend_from_slice(&raw);
            let IdxPart::Images { data, .. } = parse_idx(&bytes).unwrap() else { panic!() };
            prop_assert_eq!(serialize_idx_images(count, rows, cols, &data), bytes);
        }

        #[test]
        fn label_round_trip(labels in prop::collection::vec(any::<u8>(), 0..50)) {
            let bytes = serialize_idx_labels(&labels);
            prop_assert_eq!(parse_idx(&bytes).unwrap(), IdxPart::Labels(labels));
        }

        #[test]
        fn never_panics(bytes in prop::collection::vec(any::<u8>(), 0..64)) {
            let _ = parse_idx(&bytes);
        }
    }
}
