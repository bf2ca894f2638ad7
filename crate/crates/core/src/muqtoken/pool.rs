use super::TokenError;

/// Averages an `(L, T, H)` row-major block over the time axis into `(L, H)`.
pub fn pool_temporal(raw: &[f32], layers: usize, frames: usize, dim: usize) -> Result<Vec<f32>, TokenError> {
    if frames == 0 {
        return Err(TokenError::EmptySequence);
    }
    if raw.len() != layers * frames * dim {
        return Err(TokenError::Dimension {
            expected: layers * frames * dim,
            actual: raw.len(),
        });
    }
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(TokenError::NonFinite);
    }
    let mut out = Vec::with_capacity(layers * dim);
    for l in 0..layers {
        let block = &raw[l * frames * dim..(l + 1) * frames * dim];
        let mut acc = vec![0.0f64; dim];
        for frame in block.chunks_exact(dim) {
            for (a, &v) in acc.iter_mut().zip(frame) {
                *a += f64::from(v);
            }
        }
        out.extend(acc.iter().map(|a| (a / frames as f64) as f32));
    }
    Ok(out)
}
