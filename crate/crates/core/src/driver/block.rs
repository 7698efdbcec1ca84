use serde::{Deserialize, Serialize};

/// Dense `(n_paths, n_rows, width)` array stored path-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block3<T> {
    n_paths: usize,
    n_rows: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Copy + Default> Block3<T> {
    pub fn zeros(n_paths: usize, n_rows: usize, width: usize) -> Self {
        Self {
            n_paths,
            n_rows,
            width,
            data: vec![T::default(); n_paths * n_rows * width],
        }
    }
}

impl<T> Block3<T> {
    /// Panics if `data.len()` does not match the shape.
    pub fn from_vec(n_paths: usize, n_rows: usize, width: usize, data: Vec<T>) -> Self {
        assert_eq!(
            data.len(),
            n_paths * n_rows * width,
            "block data does not match shape"
        );
        Self {
            n_paths,
            n_rows,
            width,
            data,
        }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.n_paths, self.n_rows, self.width)
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn row(&self, path: usize, row: usize) -> &[T] {
        let w = self.width;
        let start = (path * self.n_rows + row) * w;
        &self.data[start..start + w]
    }

    #[inline]
    pub fn row_mut(&mut self, path: usize, row: usize) -> &mut [T] {
        let w = self.width;
        let start = (path * self.n_rows + row) * w;
        &mut self.data[start..start + w]
    }

    /// All rows of one path, concatenated.
    pub fn path(&self, path: usize) -> &[T] {
        let len = self.n_rows * self.width;
        &self.data[path * len..(path + 1) * len]
    }

    pub fn path_mut(&mut self, path: usize) -> &mut [T] {
        let len = self.n_rows * self.width;
        &mut self.data[path * len..(path + 1) * len]
    }
}
