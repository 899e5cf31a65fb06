use super::{DataError, LabeledImages, Split};

/// One label byte followed by a 32x32x3 channel-planar image.
pub const CIFAR_RECORD_LEN: usize = 1 + 32 * 32 * 3;

pub fn parse_cifar_binary(bytes: &[u8]) -> Result<LabeledImages, DataError> {
    if !bytes.len().is_multiple_of(CIFAR_RECORD_LEN) {
        return Err(DataError::RecordSize(bytes.len()));
    }
    let n = bytes.len() / CIFAR_RECORD_LEN;
    let mut labels = Vec::with_capacity(n);
    let mut images = Vec::with_capacity(n * (CIFAR_RECORD_LEN - 1));
    for (index, rec) in bytes.chunks_exact(CIFAR_RECORD_LEN).enumerate() {
        if rec[0] > 9 {
            return Err(DataError::LabelRange { index, label: rec[0] });
        }
        labels.push(rec[0]);
        images.extend(rec[1..].iter().map(|&b| b as f32 / 255.0));
    }
    LabeledImages::new(images, labels, vec![3, 32, 32], Split::Train)
}
