//! Dense row-major tensors of rank at most four.
//!
//! Images and feature maps use NHWC order (batch, height, width, channels).
//! Storage is either single or double precision; every kernel requires its
//! operands to share one precision.

use std::fmt;

use num_traits::Float;

use crate::error::{Error, Result};

pub const MAX_RANK: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DType {
    Single,
    Double,
}

impl DType {
    /// Code used by the checkpoint format.
    pub fn code(self) -> u8 {
        match self {
            DType::Single => 0,
            DType::Double => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DType::Single),
            1 => Some(DType::Double),
            _ => None,
        }
    }

    pub fn size_of(self) -> usize {
        match self {
            DType::Single => 4,
            DType::Double => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DType::Single => "single",
            DType::Double => "double",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "single" | "f32" => Some(DType::Single),
            "double" | "f64" => Some(DType::Double),
            _ => None,
        }
    }
}

/// Floating point element types a [`Tensor`] can hold.
pub trait Element: Float + Default + Send + Sync + fmt::Debug + 'static {
    const DTYPE: DType;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn view(data: &Data) -> Option<&[Self]>;
    fn wrap(values: Vec<Self>) -> Data;
}

impl Element for f32 {
    const DTYPE: DType = DType::Single;
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn view(data: &Data) -> Option<&[Self]> {
        match data {
            Data::F32(v) => Some(v),
            Data::F64(_) => None,
        }
    }
    fn wrap(values: Vec<Self>) -> Data {
        Data::F32(values)
    }
}

impl Element for f64 {
    const DTYPE: DType = DType::Double;
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn view(data: &Data) -> Option<&[Self]> {
        match data {
            Data::F64(v) => Some(v),
            Data::F32(_) => None,
        }
    }
    fn wrap(values: Vec<Self>) -> Data {
        Data::F64(values)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Data {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl Data {
    pub fn len(&self) -> usize {
        match self {
            Data::F32(v) => v.len(),
            Data::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype(&self) -> DType {
        match self {
            Data::F32(_) => DType::Single,
            Data::F64(_) => DType::Double,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(dims: &[usize]) -> Result<Self> {
        if dims.len() > MAX_RANK {
            return Err(Error::RankExceeded(dims.len()));
        }
        Ok(Shape(dims.to_vec()))
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    /// Product of the extents; 1 for a scalar.
    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

/// How [`Tensor::create`] populates a new buffer.
#[derive(Debug, Clone)]
pub enum Fill<'a> {
    Scalar(f64),
    Values(&'a [f64]),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Data,
}

impl Tensor {
    pub fn create(dims: &[usize], fill: Fill<'_>, dtype: DType) -> Result<Self> {
        let shape = Shape::new(dims)?;
        let n = shape.numel();
        let values: Vec<f64> = match fill {
            Fill::Scalar(v) => vec![v; n],
            Fill::Values(vs) => {
                if vs.len() != n {
                    return Err(Error::LengthMismatch {
                        expected: n,
                        actual: vs.len(),
                    });
                }
                vs.to_vec()
            }
        };
        let data = match dtype {
            DType::Single => Data::F32(values.into_iter().map(|v| v as f32).collect()),
            DType::Double => Data::F64(values),
        };
        Ok(Tensor { shape, data })
    }

    pub fn from_vec<T: Element>(dims: &[usize], values: Vec<T>) -> Result<Self> {
        let shape = Shape::new(dims)?;
        if values.len() != shape.numel() {
            return Err(Error::LengthMismatch {
                expected: shape.numel(),
                actual: values.len(),
            });
        }
        Ok(Tensor {
            shape,
            data: T::wrap(values),
        })
    }

    /// Builds from raw storage; caller guarantees the length matches.
    pub(crate) fn from_data(dims: &[usize], data: Data) -> Self {
        debug_assert!(dims.len() <= MAX_RANK);
        debug_assert_eq!(dims.iter().product::<usize>(), data.len());
        Tensor {
            shape: Shape(dims.to_vec()),
            data,
        }
    }

    pub fn zeros(dims: &[usize], dtype: DType) -> Result<Self> {
        Self::create(dims, Fill::Scalar(0.0), dtype)
    }

    pub fn scalar(value: f64, dtype: DType) -> Self {
        Self::create(&[], Fill::Scalar(value), dtype).expect("rank 0 is always valid")
    }

    pub fn zeros_like(&self) -> Self {
        let data = match &self.data {
            Data::F32(v) => Data::F32(vec![0.0; v.len()]),
            Data::F64(v) => Data::F64(vec![0.0; v.len()]),
        };
        Tensor {
            shape: self.shape.clone(),
            data,
        }
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    pub fn rank(&self) -> usize {
        self.shape.rank()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }

    pub fn data(&self) -> &Data {
        &self.data
    }

    pub fn as_slice<T: Element>(&self) -> Option<&[T]> {
        T::view(&self.data)
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        match &self.data {
            Data::F32(v) => v.iter().map(|&x| x as f64).collect(),
            Data::F64(v) => v.clone(),
        }
    }

    /// Element at a flat row-major offset, widened to double.
    pub fn get(&self, index: usize) -> f64 {
        match &self.data {
            Data::F32(v) => v[index] as f64,
            Data::F64(v) => v[index],
        }
    }

    /// Overwrites one element; used by finite-difference probes.
    pub fn set(&mut self, index: usize, value: f64) {
        match &mut self.data {
            Data::F32(v) => v[index] = value as f32,
            Data::F64(v) => v[index] = value,
        }
    }

    /// The value of a rank-0 tensor (or the first element of any other).
    pub fn item(&self) -> f64 {
        self.get(0)
    }

    pub fn reshape(&self, dims: &[usize]) -> Result<Self> {
        let shape = Shape::new(dims)?;
        if shape.numel() != self.len() {
            return Err(Error::shape(format!(
                "cannot reshape {} into {}",
                self.shape, shape
            )));
        }
        Ok(Tensor {
            shape,
            data: self.data.clone(),
        })
    }

    pub fn cast(&self, dtype: DType) -> Self {
        if dtype == self.dtype() {
            return self.clone();
        }
        let data = match &self.data {
            Data::F32(v) => Data::F64(v.iter().map(|&x| x as f64).collect()),
            Data::F64(v) => Data::F32(v.iter().map(|&x| x as f32).collect()),
        };
        Tensor {
            shape: self.shape.clone(),
            data,
        }
    }

    pub fn all_finite(&self) -> bool {
        match &self.data {
            Data::F32(v) => v.iter().all(|x| x.is_finite()),
            Data::F64(v) => v.iter().all(|x| x.is_finite()),
        }
    }

    /// Little-endian element bytes, row-major.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        match &self.data {
            Data::F32(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            Data::F64(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
        }
    }

    pub fn from_le_bytes(dims: &[usize], dtype: DType, bytes: &[u8]) -> Result<Self> {
        let shape = Shape::new(dims)?;
        let n = shape.numel();
        if bytes.len() != n * dtype.size_of() {
            return Err(Error::LengthMismatch {
                expected: n * dtype.size_of(),
                actual: bytes.len(),
            });
        }
        let data = match dtype {
            DType::Single => Data::F32(
                bytes
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            DType::Double => Data::F64(
                bytes
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
        };
        Ok(Tensor { shape, data })
    }

    /// Same shape, same precision, same bytes.
    pub fn bitwise_eq(&self, other: &Tensor) -> bool {
        self.shape == other.shape
            && self.dtype() == other.dtype()
            && self.to_le_bytes() == other.to_le_bytes()
    }
}
