use ndarray::Array2;

use super::AffineLayer;
use crate::error::{Error, Result};

/// Per-axis interpolation taps: `(source index, weight)` for each output index.
///
/// Pixel centers are mapped proportionally without corner alignment:
/// `src = (dst + 0.5) * src_len / dst_len - 0.5`, clamped into the image.
fn axis_taps(src_len: usize, dst_len: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src_len as f64 / dst_len as f64;
    (0..dst_len)
        .map(|d| {
            let pos = ((d as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (pos.floor() as usize).min(src_len - 1);
            let i1 = (i0 + 1).min(src_len - 1);
            let frac = if i0 == i1 { 0.0 } else { pos - i0 as f64 };
            if frac == 0.0 {
                vec![(i0, 1.0)]
            } else {
                vec![(i0, 1.0 - frac), (i1, frac)]
            }
        })
        .collect()
}

/// Bilinear resize from `src_h × src_w` to `dst_h × dst_w` as a zero-bias
/// affine layer over channel-major (`c, y, x`) flattened images.
///
/// Every output row has at most four nonzero, nonnegative entries summing to
/// one, so constant images are preserved exactly.
pub fn bilinear_rescale_matrix(
    src_h: usize,
    src_w: usize,
    dst_h: usize,
    dst_w: usize,
    channels: usize,
) -> Result<AffineLayer> {
    if [src_h, src_w, dst_h, dst_w, channels].contains(&0) {
        return Err(Error::InvalidArgument("rescale dimensions must be at least 1".into()));
    }
    let rows = axis_taps(src_h, dst_h);
    let cols = axis_taps(src_w, dst_w);
    let (src_plane, dst_plane) = (src_h * src_w, dst_h * dst_w);
    let mut weight = Array2::zeros((dst_plane * channels, src_plane * channels));
    for c in 0..channels {
        for (dy, ytaps) in rows.iter().enumerate() {
            for (dx, xtaps) in cols.iter().enumerate() {
                let out = c * dst_plane + dy * dst_w + dx;
                for &(sy, wy) in ytaps {
                    for &(sx, wx) in xtaps {
                        weight[[out, c * src_plane + sy * src_w + sx]] += wy * wx;
                    }
                }
            }
        }
    }
    AffineLayer::linear(weight)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array1, Array2};

    #[test]
    fn same_size_is_identity() {
        let layer = bilinear_rescale_matrix(3, 4, 3, 4, 2).unwrap();
        assert_eq!(layer.weight(), &Array2::eye(24));
    }

    #[test]
    fn two_by_two_to_one_is_mean() {
        let layer = bilinear_rescale_matrix(2, 2, 1, 1, 1).unwrap();
        let img = Array1::from(vec![0.1, 0.2, 0.7, 0.4]);
        let out = layer.apply(img.view());
        assert!((out[0] - 0.35).abs() < 1e-15);
        assert!((layer.weight().row(0).sum() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn upscale_single_pixel_copies_it() {
        let layer = bilinear_rescale_matrix(1, 1, 2, 2, 1).unwrap();
        for row in layer.weight().rows() {
            assert_eq!(row.iter().filter(|&&w| w != 0.0).count(), 1);
            assert_eq!(row.sum(), 1.0);
        }
        let out = layer.apply(Array1::from(vec![0.42]).view());
        assert!(out.iter().all(|&v| v == 0.42));
    }

    #[test]
    fn rows_are_stochastic_and_sparse() {
        for &(sh, sw, dh, dw) in &[(8, 8, 4, 4), (4, 4, 8, 8), (5, 7, 3, 11), (16, 16, 8, 8)] {
            let layer = bilinear_rescale_matrix(sh, sw, dh, dw, 3).unwrap();
            for row in layer.weight().rows() {
                let nz: Vec<f64> = row.iter().copied().filter(|&w| w != 0.0).collect();
                assert!(nz.len() <= 4);
                assert!(nz.iter().all(|&w| w > 0.0));
                assert!((row.sum() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_image_preserved() {
        let layer = bilinear_rescale_matrix(6, 5, 9, 4, 2).unwrap();
        let img = Array1::from_elem(60, 0.625);
        let out = layer.apply(img.view());
        assert!(out.iter().all(|&v| (v - 0.625).abs() < 1e-15));
    }

    #[test]
    fn exact_half_downscale_averages_blocks() {
        let layer = bilinear_rescale_matrix(4, 4, 2, 2, 1).unwrap();
        let img = Array1::from_iter((0..16).map(|v| v as f64));
        let out = layer.apply(img.view());
        // top-left output averages pixels 0, 1, 4, 5
        assert!((out[0] - 2.5).abs() < 1e-12);
    }

    #[test]
    fn zero_dimension_rejected() {
        assert!(bilinear_rescale_matrix(0, 2, 2, 2, 1).is_err());
    }
}
