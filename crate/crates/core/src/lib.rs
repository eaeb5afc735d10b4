//! A small deep-learning toolkit built around the ClaRet classifier: a
//! stack of convolution blocks and shrinking dense blocks, optionally on top
//! of a frozen VGG-19-shaped feature extractor.

pub mod autodiff;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod kernels;
pub mod model;
pub mod params;
pub mod rng;
pub mod tensor;
pub mod training;
pub mod verify;

pub use error::{Error, ErrorKind, Result};
pub use params::{Bindings, Param, ParamSet};
pub use tensor::{DType, Element, Fill, Shape, Tensor};
