use std::collections::HashMap;

use ndarray::{ArrayD, ArrayView1, ArrayView2, ArrayView3, Ix1, Ix2, Ix3};

use crate::error::{Error, Result};

/// Ordered collection of named parameter arrays.
///
/// Names are unique, shapes are fixed at insertion, and iteration follows
/// insertion order so that serialization and optimizer sweeps are
/// deterministic.
#[derive(Debug, Clone, Default)]
pub struct ParameterStore {
    names: Vec<String>,
    arrays: Vec<ArrayD<f64>>,
    index: HashMap<String, usize>,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, array: ArrayD<f64>) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::DuplicateParameter(name));
        }
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.arrays.push(array);
        Ok(())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Option<&ArrayD<f64>> {
        self.index.get(name).map(|&i| &self.arrays[i])
    }

    /// Mutable access to a parameter's values. The shape must not be changed.
    pub fn get_mut(&mut self, name: &str) -> Option<&mut ArrayD<f64>> {
        let i = *self.index.get(name)?;
        Some(&mut self.arrays[i])
    }

    pub fn view1(&self, name: &str) -> Result<ArrayView1<'_, f64>> {
        self.view_dim::<Ix1>(name).map(|v| v)
    }

    pub fn view2(&self, name: &str) -> Result<ArrayView2<'_, f64>> {
        self.view_dim::<Ix2>(name)
    }

    pub fn view3(&self, name: &str) -> Result<ArrayView3<'_, f64>> {
        self.view_dim::<Ix3>(name)
    }

    fn view_dim<D: ndarray::Dimension>(&self, name: &str) -> Result<ndarray::ArrayView<'_, f64, D>> {
        let arr = self
            .get(name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))?;
        arr.view()
            .into_dimensionality::<D>()
            .map_err(|_| Error::ShapeMismatch {
                name: name.to_string(),
                expected: vec![D::NDIM.unwrap_or(0)],
                got: arr.shape().to_vec(),
            })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.arrays.iter().map(|a| a.len()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ArrayD<f64>)> {
        self.names
            .iter()
            .map(String::as_str)
            .zip(self.arrays.iter())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }

    /// A store with the same names and shapes, all values zero. Used as a
    /// gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        let mut out = Self::new();
        for (name, arr) in self.iter() {
            out.insert(name, ArrayD::zeros(arr.raw_dim())).unwrap();
        }
        out
    }

    /// Accumulate `delta` into the named entry, creating it (zeroed) if absent.
    pub fn add_to(&mut self, name: &str, delta: &ArrayD<f64>) -> Result<()> {
        if let Some(arr) = self.get_mut(name) {
            if arr.shape() != delta.shape() {
                return Err(Error::ShapeMismatch {
                    name: name.to_string(),
                    expected: arr.shape().to_vec(),
                    got: delta.shape().to_vec(),
                });
            }
            *arr += delta;
            Ok(())
        } else {
            self.insert(name, delta.clone())
        }
    }

    /// Overwrite values from `other` for every name present in `self`.
    /// Every entry of `self` must exist in `other` with a matching shape.
    pub fn load_values(&mut self, other: &ParameterStore) -> Result<()> {
        for i in 0..self.names.len() {
            let name = &self.names[i];
            let src = other
                .get(name)
                .ok_or_else(|| Error::UnknownParameter(name.clone()))?;
            if src.shape() != self.arrays[i].shape() {
                return Err(Error::ShapeMismatch {
                    name: name.clone(),
                    expected: self.arrays[i].shape().to_vec(),
                    got: src.shape().to_vec(),
                });
            }
            self.arrays[i].assign(src);
        }
        Ok(())
    }

    /// Scale every entry in place. Used to average accumulated gradients.
    pub fn scale(&mut self, factor: f64) {
        for arr in &mut self.arrays {
            arr.mapv_inplace(|x| x * factor);
        }
    }

    /// Merge all entries of `other` into `self`, keeping `other`'s values.
    /// Names must not collide.
    pub fn absorb(&mut self, other: ParameterStore) -> Result<()> {
        for (name, arr) in other.names.into_iter().zip(other.arrays) {
            self.insert(name, arr)?;
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.arrays
            .iter()
            .flat_map(|a| a.iter())
            .fold(0.0, |acc, &x| acc.max(x.abs()))
    }
}
