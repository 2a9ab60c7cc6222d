//! A small reference convolution engine: dense and masked forward passes
//! with stride 1 and zero padding, precise enough to check that pruned
//! layers compute what their dense originals would.

use crate::error::{Error, Result};
use crate::model::WeightTensor;
use crate::pruner::MaskPattern;

/// An activation tensor with shape `(channels, height, width)`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::Shape(format!(
                "feature map dimensions must all be at least 1, got ({channels}, {height}, {width})"
            )));
        }
        let expected = channels
            .checked_mul(height)
            .and_then(|n| n.checked_mul(width))
            .ok_or_else(|| Error::Shape("feature map element count overflows".into()))?;
        if data.len() != expected {
            return Err(Error::Shape(format!(
                "feature map ({channels}, {height}, {width}) needs {expected} values, got {}",
                data.len()
            )));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                index,
                context: "feature map".into(),
            });
        }
        Ok(FeatureMap {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Result<Self> {
        FeatureMap::new(channels, height, width, vec![0.0; channels * height * width])
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    /// Copies the listed channels into a new map, in the order given.
    pub fn gather_channels(&self, channels: &[usize]) -> Result<FeatureMap> {
        if let Some(&bad) = channels.iter().find(|&&c| c >= self.channels) {
            return Err(Error::Shape(format!(
                "channel {bad} out of range for a map with {} channels",
                self.channels
            )));
        }
        let plane = self.height * self.width;
        let mut data = Vec::with_capacity(channels.len() * plane);
        for &c in channels {
            data.extend_from_slice(&self.data[c * plane..(c + 1) * plane]);
        }
        FeatureMap::new(channels.len(), self.height, self.width, data)
    }
}

fn output_extent(input: usize, kernel: usize, padding: usize) -> Result<usize> {
    let padded = input + 2 * padding;
    if padded < kernel {
        return Err(Error::Shape(format!(
            "kernel of extent {kernel} does not fit an input of extent {input} with padding {padding}"
        )));
    }
    Ok(padded - kernel + 1)
}

/// Dense convolution with stride 1 and zero padding.
///
/// For each output position the accumulation order is fixed: input channels
/// outermost, then kernel rows, then kernel columns.
pub fn dense_forward(x: &FeatureMap, w: &WeightTensor, padding: usize) -> Result<FeatureMap> {
    forward_impl(x, w, None, padding)
}

/// Like [`dense_forward`] but skipping every kernel whose mask bit is off.
///
/// Numerically this matches convolving with zeroed-out kernels; the masked
/// terms are simply never touched.
pub fn masked_forward(
    x: &FeatureMap,
    w: &WeightTensor,
    mask: &MaskPattern,
    padding: usize,
) -> Result<FeatureMap> {
    if mask.rows() != w.c_out() || mask.cols() != w.c_in() {
        return Err(Error::Shape(format!(
            "mask is {}x{} but the weights have {} output and {} input channels",
            mask.rows(),
            mask.cols(),
            w.c_out(),
            w.c_in()
        )));
    }
    forward_impl(x, w, Some(mask), padding)
}

fn forward_impl(
    x: &FeatureMap,
    w: &WeightTensor,
    mask: Option<&MaskPattern>,
    padding: usize,
) -> Result<FeatureMap> {
    if x.channels() != w.c_in() {
        return Err(Error::Shape(format!(
            "input has {} channels but the weights expect {}",
            x.channels(),
            w.c_in()
        )));
    }
    let out_h = output_extent(x.height(), w.k_h(), padding)?;
    let out_w = output_extent(x.width(), w.k_w(), padding)?;
    let mut out = FeatureMap::zeros(w.c_out(), out_h, out_w)?;
    for oc in 0..w.c_out() {
        for oy in 0..out_h {
            for ox in 0..out_w {
                let mut acc = 0.0;
                for ic in 0..w.c_in() {
                    if let Some(mask) = mask {
                        if !mask.at(oc, ic) {
                            continue;
                        }
                    }
                    for ky in 0..w.k_h() {
                        let iy = oy + ky;
                        if iy < padding || iy - padding >= x.height() {
                            continue;
                        }
                        for kx in 0..w.k_w() {
                            let ix = ox + kx;
                            if ix < padding || ix - padding >= x.width() {
                                continue;
                            }
                            acc += w.at(oc, ic, ky, kx) * x.at(ic, iy - padding, ix - padding);
                        }
                    }
                }
                out.set(oc, oy, ox, acc);
            }
        }
    }
    Ok(out)
}
