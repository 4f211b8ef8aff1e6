use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Upper bound on the number of scalars in one tensor.
const MAX_TENSOR_LEN: usize = 1 << 26;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub vocab_size: usize,
    pub d_embed: usize,
    pub d_hidden: usize,
}

impl Dims {
    pub fn validate(&self) -> Result<()> {
        let Dims {
            vocab_size,
            d_embed,
            d_hidden,
        } = *self;
        if vocab_size == 0 || d_embed == 0 || d_hidden == 0 {
            return Err(Error::invalid(format!(
                "dimensions must be positive: {self:?}"
            )));
        }
        for (a, b) in [
            (vocab_size, d_embed),
            (d_hidden, d_hidden),
            (d_hidden, d_embed),
            (vocab_size, d_hidden),
        ] {
            match a.checked_mul(b) {
                Some(n) if n <= MAX_TENSOR_LEN => {}
                _ => return Err(Error::invalid(format!("dimensions overflow: {self:?}"))),
            }
        }
        Ok(())
    }
}

/// Trainable tensors of the recurrent prompter.
///
/// The same type doubles as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    /// `vocab × d_embed`
    pub embedding: Array2<f64>,
    /// `d_hidden × d_hidden`
    pub recur_h: Array2<f64>,
    /// `d_hidden × d_embed`
    pub recur_x: Array2<f64>,
    pub recur_b: Array1<f64>,
    /// `vocab × d_hidden`
    pub out_w: Array2<f64>,
    pub out_b: Array1<f64>,
}

pub const TENSOR_NAMES: [&str; 6] = [
    "embedding",
    "recur_h",
    "recur_x",
    "recur_b",
    "out_w",
    "out_b",
];

impl PolicyParams {
    pub fn zeros(dims: Dims) -> Result<Self> {
        dims.validate()?;
        let Dims {
            vocab_size: v,
            d_embed: e,
            d_hidden: h,
        } = dims;
        Ok(PolicyParams {
            embedding: Array2::zeros((v, e)),
            recur_h: Array2::zeros((h, h)),
            recur_x: Array2::zeros((h, e)),
            recur_b: Array1::zeros(h),
            out_w: Array2::zeros((v, h)),
            out_b: Array1::zeros(v),
        })
    }

    pub fn zeros_like(&self) -> Self {
        PolicyParams::zeros(self.dims()).expect("existing dims are valid")
    }

    pub fn dims(&self) -> Dims {
        Dims {
            vocab_size: self.embedding.nrows(),
            d_embed: self.embedding.ncols(),
            d_hidden: self.recur_h.nrows(),
        }
    }

    pub fn shapes(&self) -> [Vec<usize>; 6] {
        [
            self.embedding.shape().to_vec(),
            self.recur_h.shape().to_vec(),
            self.recur_x.shape().to_vec(),
            self.recur_b.shape().to_vec(),
            self.out_w.shape().to_vec(),
            self.out_b.shape().to_vec(),
        ]
    }

    /// Row-major views of every tensor, in [`TENSOR_NAMES`] order.
    pub fn tensors(&self) -> [&[f64]; 6] {
        fn s(a: Option<&[f64]>) -> &[f64] {
            a.expect("parameters are kept in standard layout")
        }
        [
            s(self.embedding.as_slice()),
            s(self.recur_h.as_slice()),
            s(self.recur_x.as_slice()),
            s(self.recur_b.as_slice()),
            s(self.out_w.as_slice()),
            s(self.out_b.as_slice()),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 6] {
        fn s(a: Option<&mut [f64]>) -> &mut [f64] {
            a.expect("parameters are kept in standard layout")
        }
        [
            s(self.embedding.as_slice_mut()),
            s(self.recur_h.as_slice_mut()),
            s(self.recur_x.as_slice_mut()),
            s(self.recur_b.as_slice_mut()),
            s(self.out_w.as_slice_mut()),
            s(self.out_b.as_slice_mut()),
        ]
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|x| x.is_finite()))
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &PolicyParams, scale: f64) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }

    pub fn same_shape(&self, other: &PolicyParams) -> bool {
        self.shapes() == other.shapes()
    }

    /// Flat coordinate access across all tensors, for finite-difference checks.
    pub fn get_flat(&self, mut i: usize) -> f64 {
        for t in self.tensors() {
            if i < t.len() {
                return t[i];
            }
            i -= t.len();
        }
        panic!("flat index out of range")
    }

    pub fn set_flat(&mut self, mut i: usize, value: f64) {
        for t in self.tensors_mut() {
            if i < t.len() {
                t[i] = value;
                return;
            }
            i -= t.len();
        }
        panic!("flat index out of range")
    }
}

/// Uniform init in `[-s, s]` with `s = 1/sqrt(d_hidden)`.
pub fn init_params(seed: u64, dims: Dims) -> Result<PolicyParams> {
    let mut params = PolicyParams::zeros(dims)?;
    let bound = 1.0 / (dims.d_hidden as f64).sqrt();
    let mut rng = rng_from_seed(seed);
    for t in params.tensors_mut() {
        for x in t.iter_mut() {
            *x = rng.gen_range(-bound..=bound);
        }
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims(v: usize, e: usize, h: usize) -> Dims {
        Dims {
            vocab_size: v,
            d_embed: e,
            d_hidden: h,
        }
    }

    #[test]
    fn init_is_deterministic() {
        let a = init_params(7, dims(10, 4, 6)).unwrap();
        let b = init_params(7, dims(10, 4, 6)).unwrap();
        assert_eq!(a, b);
        let c = init_params(8, dims(10, 4, 6)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn init_respects_bound() {
        let p = init_params(3, dims(12, 5, 16)).unwrap();
        assert!(p.is_finite());
        for t in p.tensors() {
            assert!(t.iter().all(|x| x.abs() <= 0.25));
        }
    }

    #[test]
    fn degenerate_dims_rejected() {
        assert!(init_params(1, dims(8, 4, 0)).is_err());
        assert!(init_params(1, dims(0, 4, 4)).is_err());
        assert!(init_params(1, dims(usize::MAX, 4, 4)).is_err());
    }

    #[test]
    fn flat_access_covers_all() {
        let mut p = PolicyParams::zeros(dims(3, 2, 2)).unwrap();
        let n = p.len();
        assert_eq!(n, 6 + 4 + 4 + 2 + 6 + 3);
        p.set_flat(n - 1, 2.5);
        assert_eq!(p.out_b[2], 2.5);
        assert_eq!(p.get_flat(n - 1), 2.5);
    }
}
