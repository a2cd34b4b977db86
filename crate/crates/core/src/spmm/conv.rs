//! Implicit-GEMM 2-D convolution over a shuffled block-wise weight matrix.
//!
//! The input feature map `[C][H][W][N]` (batch innermost) is never unfolded
//! in full. Each stitched staging tile reads the taps it needs straight from
//! the input: weight column `c` decodes to `(channel, r, s)` and GEMM column
//! `j` to `(p, q, n)`.

use std::ops::Range;

use super::{execute, RowSource, TileConfig};
use crate::error::{Error, Result};
use crate::formats::{DenseMatrix, ShflBWMatrix};

/// Row-major 4-D tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    dims: [usize; 4],
    data: Vec<f32>,
}

impl Tensor4 {
    pub fn new(dims: [usize; 4], data: Vec<f32>) -> Result<Self> {
        if data.len() != dims.iter().product::<usize>() {
            return Err(Error::shape(format!(
                "{} values for a tensor of shape {dims:?}",
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidValue("non-finite tensor value".into()));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: [usize; 4]) -> Self {
        Self {
            dims,
            data: vec![0.0; dims.iter().product()],
        }
    }

    #[inline]
    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    fn offset(&self, i: [usize; 4]) -> usize {
        let [_, d1, d2, d3] = self.dims;
        ((i[0] * d1 + i[1]) * d2 + i[2]) * d3 + i[3]
    }

    #[inline]
    pub fn get(&self, i: [usize; 4]) -> f32 {
        self.data[self.offset(i)]
    }

    #[inline]
    pub fn set(&mut self, i: [usize; 4], x: f32) {
        let o = self.offset(i);
        self.data[o] = x;
    }

    /// Views the tensor as a `dims[0] x (dims[1]*dims[2]*dims[3])` matrix.
    pub fn to_matrix(&self) -> DenseMatrix {
        let [d0, d1, d2, d3] = self.dims;
        DenseMatrix::from_parts(d0, d1 * d2 * d3, self.data.clone())
    }

    /// Inverse of [`to_matrix`](Self::to_matrix).
    pub fn from_matrix(m: DenseMatrix, dims: [usize; 4]) -> Result<Self> {
        if m.rows() != dims[0] || m.cols() != dims[1] * dims[2] * dims[3] {
            return Err(Error::shape(format!(
                "{}x{} matrix cannot hold shape {dims:?}",
                m.rows(),
                m.cols()
            )));
        }
        Ok(Self {
            dims,
            data: m.into_values(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeometry {
    /// Output height and width for an `h x w` input.
    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        if self.stride == 0 || self.kernel_h == 0 || self.kernel_w == 0 {
            return Err(Error::BadGeometry("stride and kernel size must be positive".into()));
        }
        let (ph, pw) = (h + 2 * self.pad, w + 2 * self.pad);
        if ph < self.kernel_h || pw < self.kernel_w {
            return Err(Error::BadGeometry(format!(
                "{}x{} kernel larger than padded {ph}x{pw} input",
                self.kernel_h, self.kernel_w
            )));
        }
        Ok((
            (ph - self.kernel_h) / self.stride + 1,
            (pw - self.kernel_w) / self.stride + 1,
        ))
    }
}

struct Unfolded<'a> {
    input: &'a Tensor4,
    geom: ConvGeometry,
    p: usize,
    q: usize,
}

impl RowSource for Unfolded<'_> {
    fn rows(&self) -> usize {
        self.input.dims[0] * self.geom.kernel_h * self.geom.kernel_w
    }

    fn cols(&self) -> usize {
        self.p * self.q * self.input.dims[3]
    }

    fn load_row(&self, k: usize, cols: Range<usize>, out: &mut [f32]) {
        let [_, h, w, n] = self.input.dims;
        let taps = self.geom.kernel_h * self.geom.kernel_w;
        let (ch, r, s) = (k / taps, (k % taps) / self.geom.kernel_w, k % self.geom.kernel_w);
        for (o, j) in out.iter_mut().zip(cols) {
            let b = j % n;
            let oq = (j / n) % self.q;
            let op = j / (n * self.q);
            let y = (op * self.geom.stride + r).checked_sub(self.geom.pad);
            let x = (oq * self.geom.stride + s).checked_sub(self.geom.pad);
            *o = match (y, x) {
                (Some(y), Some(x)) if y < h && x < w => self.input.get([ch, y, x, b]),
                _ => 0.0,
            };
        }
    }
}

fn check_weights(weight_cols: usize, input: &Tensor4, geom: &ConvGeometry) -> Result<(usize, usize)> {
    let [c, h, w, _] = input.dims;
    let (p, q) = geom.output_hw(h, w)?;
    if weight_cols != c * geom.kernel_h * geom.kernel_w {
        return Err(Error::BadGeometry(format!(
            "weights have {weight_cols} columns, expected C*R*S = {}",
            c * geom.kernel_h * geom.kernel_w
        )));
    }
    Ok((p, q))
}

/// Sparse convolution: `[K_f][P][Q][N]` output from `[C][H][W][N]` input and
/// a `K_f x (C*R*S)` weight matrix.
pub fn conv2d(
    weights: &ShflBWMatrix,
    input: &Tensor4,
    geom: &ConvGeometry,
    cfg: &TileConfig,
) -> Result<Tensor4> {
    let (p, q) = check_weights(weights.cols(), input, geom)?;
    let view = Unfolded {
        input,
        geom: *geom,
        p,
        q,
    };
    let out = execute(weights, &view, cfg)?;
    Tensor4::from_matrix(out, [weights.rows(), p, q, input.dims[3]])
}

/// Direct convolution loop over a dense weight matrix; the reference for
/// [`conv2d`]. Taps accumulate in `(channel, r, s)` order.
pub fn conv2d_direct(weights: &DenseMatrix, input: &Tensor4, geom: &ConvGeometry) -> Result<Tensor4> {
    let (p, q) = check_weights(weights.cols(), input, geom)?;
    let [c, h, w, n] = input.dims;
    let (kh, kw) = (geom.kernel_h, geom.kernel_w);
    let mut out = Tensor4::zeros([weights.rows(), p, q, n]);
    for f in 0..weights.rows() {
        for op in 0..p {
            for oq in 0..q {
                for b in 0..n {
                    let mut acc = 0.0f32;
                    for ch in 0..c {
                        for r in 0..kh {
                            for s in 0..kw {
                                let y = op * geom.stride + r;
                                let x = oq * geom.stride + s;
                                if y < geom.pad || x < geom.pad || y - geom.pad >= h || x - geom.pad >= w {
                                    continue;
                                }
                                let wt = weights.get(f, (ch * kh + r) * kw + s);
                                acc += wt * input.get([ch, y - geom.pad, x - geom.pad, b]);
                            }
                        }
                    }
                    out.set([f, op, oq, b], acc);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formats::{compress_shflbw, SparsityMask};
    use crate::spmm::spmm_execute;

    fn ramp(dims: [usize; 4]) -> Tensor4 {
        let n = dims.iter().product::<usize>();
        Tensor4::new(dims, (0..n).map(|i| ((i * 7) % 11) as f32 - 5.0).collect()).unwrap()
    }

    #[test]
    fn one_by_one_is_gemm() {
        let input = ramp([3, 4, 4, 2]);
        let w = DenseMatrix::new(4, 3, (0..12).map(|i| i as f32 * 0.5 - 1.0).collect()).unwrap();
        let a = compress_shflbw(&w, &SparsityMask::ones(4, 3), 2).unwrap();
        let geom = ConvGeometry { kernel_h: 1, kernel_w: 1, stride: 1, pad: 0 };
        let cfg = TileConfig::with_tiles(2, 8, 2);
        let conv = conv2d(&a, &input, &geom, &cfg).unwrap();
        let gemm = spmm_execute(&a, &input.to_matrix(), &cfg).unwrap();
        assert!(conv.to_matrix().bit_eq(&gemm));
    }

    #[test]
    fn centre_tap_copies_channel() {
        let input = ramp([2, 5, 5, 3]);
        // one output filter selecting channel 1 through the centre of a 3x3 kernel
        let mut w = DenseMatrix::zeros(2, 18);
        w.set(0, 9 + 4, 1.0);
        w.set(1, 9 + 4, 1.0);
        let mask = w.values().iter().map(|&x| x != 0.0).collect();
        let mask = SparsityMask::new(2, 18, mask).unwrap();
        let a = compress_shflbw(&w, &mask, 2).unwrap();
        let geom = ConvGeometry { kernel_h: 3, kernel_w: 3, stride: 1, pad: 1 };
        let out = conv2d(&a, &input, &geom, &TileConfig::default()).unwrap();
        assert_eq!(out.dims(), [2, 5, 5, 3]);
        for y in 0..5 {
            for x in 0..5 {
                for b in 0..3 {
                    assert_eq!(out.get([0, y, x, b]), input.get([1, y, x, b]));
                }
            }
        }
    }

    #[test]
    fn strided_padded_matches_direct() {
        let input = ramp([2, 6, 5, 2]);
        let w = DenseMatrix::new(2, 18, (0..36).map(|i| ((i * 5) % 7) as f32 - 3.0).collect()).unwrap();
        let a = compress_shflbw(&w, &SparsityMask::ones(2, 18), 2).unwrap();
        let geom = ConvGeometry { kernel_h: 3, kernel_w: 3, stride: 2, pad: 1 };
        let sparse = conv2d(&a, &input, &geom, &TileConfig::with_tiles(2, 3, 4)).unwrap();
        let direct = conv2d_direct(&w, &input, &geom).unwrap();
        assert_eq!(sparse.dims(), [2, 3, 3, 2]);
        assert!(sparse.to_matrix().bit_eq(&direct.to_matrix()));
    }

    #[test]
    fn geometry_errors() {
        let input = ramp([2, 2, 2, 1]);
        let w = DenseMatrix::zeros(2, 18);
        let a = compress_shflbw(&w, &SparsityMask::zeros(2, 18), 2).unwrap();
        let big = ConvGeometry { kernel_h: 3, kernel_w: 3, stride: 1, pad: 0 };
        assert!(matches!(
            conv2d(&a, &input, &big, &TileConfig::default()),
            Err(Error::BadGeometry(_))
        ));
        let zero_stride = ConvGeometry { kernel_h: 1, kernel_w: 1, stride: 0, pad: 0 };
        assert!(conv2d_direct(&w, &input, &zero_stride).is_err());
        let wrong_cols = ConvGeometry { kernel_h: 1, kernel_w: 1, stride: 1, pad: 0 };
        assert!(matches!(
            conv2d_direct(&w, &input, &wrong_cols),
            Err(Error::BadGeometry(_))
        ));
    }
}
