use super::nn::Scalar;

/// Turns a `(K, c_in, kh, kw)` filter bank into a `(K, m, kh, kw)` one: each kernel's
/// channel-mean is replicated `m` times and scaled by `c_in / m`, so an input made of one
/// plane repeated across channels gets the same response as before.
pub fn adapt_first_layer<T: Scalar>(
    filters: &[T],
    kernels: usize,
    c_in: usize,
    kernel_area: usize,
    m: usize,
) -> Vec<T> {
    assert!(c_in >= 1 && m >= 1, "channel counts must be positive");
    assert_eq!(filters.len(), kernels * c_in * kernel_area, "filter bank shape");
    let scale = T::of(c_in as f64 / m as f64);
    let inv_c = T::of(1.0 / c_in as f64);
    let mut out = Vec::with_capacity(kernels * m * kernel_area);
    for k in filters.chunks(c_in * kernel_area) {
        let mean: Vec<T> = (0..kernel_area)
            .map(|a| (0..c_in).map(|c| k[c * kernel_area + a]).sum::<T>() * inv_c)
            .collect();
        for _ in 0..m {
            out.extend(mean.iter().map(|&v| v * scale));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_slices_unchanged() {
        let f = [1.0f64, 2.0, 1.0, 2.0];
        assert_eq!(adapt_first_layer(&f, 1, 2, 2, 2), f.to_vec());
    }

    #[test]
    fn single_channel_halved() {
        assert_eq!(adapt_first_layer(&[4.0f64, -2.0], 1, 1, 2, 2), vec![2.0, -1.0, 2.0, -1.0]);
    }
}
