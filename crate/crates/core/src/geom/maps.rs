//! Dense row-major image maps.
//!
//! Pixel `(u, v)` lives at index `v * width + u`; `u` runs along a row.

use crate::error::{invalid, shape, Result};

/// Single-channel real map (depth in meters, gradient weights, soft masks).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarMap {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl ScalarMap {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(shape(format!(
                "scalar map {height}x{width} needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(invalid("scalar map contains non-finite values"));
        }
        Ok(Self { height, width, data })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self { height, width, data: vec![value; height * width] }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for v in 0..height {
            for u in 0..width {
                data.push(f(u, v));
            }
        }
        Self { height, width, data }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.data[v * self.width + u]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, value: f64) {
        self.data[v * self.width + u] = value;
    }

    pub fn same_size<T: Dims>(&self, other: &T) -> bool {
        self.height == other.dims().0 && self.width == other.dims().1
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Multi-channel real map, `channels` values per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorMap {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl VectorMap {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 {
            return Err(invalid("vector map needs at least one channel"));
        }
        if data.len() != height * width * channels {
            return Err(shape(format!(
                "vector map {height}x{width}x{channels} needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(invalid("vector map contains non-finite values"));
        }
        Ok(Self { height, width, channels, data })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self { height, width, channels, data: vec![0.0; height * width * channels] }
    }

    #[inline]
    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn pixel(&self, index: usize) -> &[f64] {
        &self.data[index * self.channels..(index + 1) * self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, index: usize) -> &mut [f64] {
        &mut self.data[index * self.channels..(index + 1) * self.channels]
    }

    #[inline]
    pub fn at(&self, u: usize, v: usize) -> &[f64] {
        self.pixel(v * self.width + u)
    }

    /// Pixel as a 3-vector. Panics unless `channels == 3`.
    #[inline]
    pub fn vec3(&self, index: usize) -> nalgebra::Vector3<f64> {
        assert_eq!(self.channels, 3, "vec3 on a {}-channel map", self.channels);
        let p = self.pixel(index);
        nalgebra::Vector3::new(p[0], p[1], p[2])
    }

    #[inline]
    pub fn set_vec3(&mut self, index: usize, value: &nalgebra::Vector3<f64>) {
        self.pixel_mut(index).copy_from_slice(value.as_slice());
    }

    /// Extracts one channel as a scalar map.
    pub fn channel(&self, c: usize) -> ScalarMap {
        ScalarMap {
            height: self.height,
            width: self.width,
            data: self.data.iter().skip(c).step_by(self.channels).copied().collect(),
        }
    }
}

impl From<ScalarMap> for VectorMap {
    fn from(m: ScalarMap) -> Self {
        Self { height: m.height, width: m.width, channels: 1, data: m.data }
    }
}

/// Per-pixel instance ownership; 0 means "no instance".
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceMap {
    pub height: usize,
    pub width: usize,
    pub data: Vec<u16>,
}

impl InstanceMap {
    pub fn new(height: usize, width: usize, data: Vec<u16>) -> Result<Self> {
        if data.len() != height * width {
            return Err(shape(format!(
                "instance map {height}x{width} needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(Self { height, width, data })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self { height, width, data: vec![0; height * width] }
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> u16 {
        self.data[v * self.width + u]
    }

    /// Distinct non-zero ids in ascending order.
    pub fn ids(&self) -> Vec<u16> {
        let mut ids: Vec<u16> = self.data.iter().copied().filter(|&i| i > 0).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn mask_of(&self, id: u16) -> Mask {
        Mask { height: self.height, width: self.width, data: self.data.iter().map(|&i| i == id).collect() }
    }
}

/// Boolean per-pixel mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub height: usize,
    pub width: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn new(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != height * width {
            return Err(shape(format!("mask {height}x{width} got {} values", data.len())));
        }
        Ok(Self { height, width, data })
    }

    pub fn full(height: usize, width: usize, value: bool) -> Self {
        Self { height, width, data: vec![value; height * width] }
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn and(&self, other: &Mask) -> Mask {
        debug_assert_eq!(self.data.len(), other.data.len());
        Mask {
            height: self.height,
            width: self.width,
            data: self.data.iter().zip(&other.data).map(|(a, b)| *a && *b).collect(),
        }
    }

    /// `true` when every pixel set here is also set in `other`.
    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.data.iter().zip(&other.data).all(|(a, b)| !*a || *b)
    }

    pub fn to_scalar(&self) -> ScalarMap {
        ScalarMap {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }
}

/// Anything with a `(height, width)` pixel grid.
pub trait Dims {
    fn dims(&self) -> (usize, usize);
}

macro_rules! impl_dims {
    ($($t:ty),*) => {$(
        impl Dims for $t {
            fn dims(&self) -> (usize, usize) {
                (self.height, self.width)
            }
        }
    )*};
}

impl_dims!(ScalarMap, VectorMap, InstanceMap, Mask);

pub(crate) fn check_dims<A: Dims, B: Dims>(a: &A, b: &B, what: &str) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(shape(format!("{what}: {:?} vs {:?}", a.dims(), b.dims())));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_map_rejects_wrong_length_and_nan() {
        assert!(ScalarMap::new(2, 2, vec![0.0; 3]).is_err());
        assert!(ScalarMap::new(1, 2, vec![0.0, f64::NAN]).is_err());
    }

    #[test]
    fn vector_map_channel_extraction() {
        let m = VectorMap::new(1, 2, 3, vec![1., 2., 3., 4., 5., 6.]).unwrap();
        assert_eq!(m.channel(1).data, vec![2., 5.]);
        assert_eq!(m.at(1, 0), &[4., 5., 6.]);
    }

    #[test]
    fn instance_ids_sorted_unique() {
        let m = InstanceMap::new(1, 5, vec![3, 0, 1, 3, 1]).unwrap();
        assert_eq!(m.ids(), vec![1, 3]);
        assert_eq!(m.mask_of(3).count(), 2);
    }
}
