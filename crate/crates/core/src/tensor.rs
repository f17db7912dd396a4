use crate::error::{Error, Result};

/// Dense channel-major (C × H × W) tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub dims: [usize; 3],
    pub data: Vec<T>,
}

pub type IntTensor = Tensor<i32>;
pub type RealTensor = Tensor<f32>;

impl<T: Clone + Default> Tensor<T> {
    pub fn zeros(dims: [usize; 3]) -> Self {
        Tensor {
            dims,
            data: vec![T::default(); dims.iter().product()],
        }
    }
}

impl<T> Tensor<T> {
    pub fn from_vec(dims: [usize; 3], data: Vec<T>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if data.len() != n {
            return Err(Error::Shape(format!("{dims:?} needs {n} elements, got {}", data.len())));
        }
        Ok(Tensor { dims, data })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.dims[0]
    }

    pub fn height(&self) -> usize {
        self.dims[1]
    }

    pub fn width(&self) -> usize {
        self.dims[2]
    }
}
