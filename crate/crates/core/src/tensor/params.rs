use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::Tensor;
use crate::error::{Error, Result};

/// Ordered named parameters, each with a gradient slot of the same shape.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterSet {
    names: Vec<String>,
    values: Vec<Tensor>,
    grads: Vec<Tensor>,
    index: BTreeMap<String, usize>,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::invalid(format!("duplicate parameter `{name}`")));
        }
        self.index.insert(name.clone(), self.names.len());
        self.grads.push(Tensor::zeros(value.shape()));
        self.values.push(value);
        self.names.push(name);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.values.iter().map(Tensor::numel).sum()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index_of(name).map(|i| &self.values[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index_of(name).map(move |i| &mut self.values[i])
    }

    pub fn grad(&self, name: &str) -> Option<&Tensor> {
        self.index_of(name).map(|i| &self.grads[i])
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn grads(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.grads)
    }

    pub fn value_by_index(&self, i: usize) -> &Tensor {
        &self.values[i]
    }

    pub fn value_by_index_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.values[i]
    }

    pub fn grad_by_index(&self, i: usize) -> &Tensor {
        &self.grads[i]
    }

    pub(crate) fn grad_by_index_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.grads[i]
    }

    pub(crate) fn value_and_grad_mut(&mut self, i: usize) -> (&mut Tensor, &Tensor) {
        (&mut self.values[i], &self.grads[i])
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.data_mut().iter_mut().for_each(|x| *x = 0.0);
        }
    }

    /// Copy of the parameters whose names satisfy `keep`, in order, with
    /// zeroed gradient slots.
    pub fn subset(&self, keep: impl Fn(&str) -> bool) -> ParameterSet {
        let mut out = ParameterSet::new();
        for (name, value) in self.iter().filter(|(n, _)| keep(n)) {
            out.insert(name, value.clone()).expect("names are unique");
        }
        out
    }

    /// Overwrites values of every parameter present in both sets; shapes must
    /// agree.
    pub fn copy_shared_from(&mut self, other: &ParameterSet) -> Result<usize> {
        let mut copied = 0;
        for (i, name) in self.names.iter().enumerate() {
            if let Some(src) = other.get(name) {
                if src.shape() != self.values[i].shape() {
                    return Err(Error::Shape {
                        op: "copy_shared_from",
                        lhs: self.values[i].shape().to_vec(),
                        rhs: src.shape().to_vec(),
                    });
                }
                self.values[i] = src.clone();
                copied += 1;
            }
        }
        Ok(copied)
    }

    /// Bit-level equality of values (gradients ignored).
    pub fn values_bit_equal(&self, other: &ParameterSet) -> bool {
        self.names == other.names
            && self.values.iter().zip(&other.values).all(|(a, b)| {
                a.shape() == b.shape()
                    && a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn names_are_unique_and_ordered() {
        let mut p = ParameterSet::new();
        p.insert("b", Tensor::zeros(&[2])).unwrap();
        p.insert("a", Tensor::zeros(&[1, 3])).unwrap();
        assert!(p.insert("a", Tensor::zeros(&[1])).is_err());
        assert_eq!(p.names(), &["b".to_string(), "a".to_string()]);
        assert_eq!(p.numel(), 5);
        assert_eq!(p.grad("a").unwrap().shape(), &[1, 3]);
        let sub = p.subset(|n| n == "a");
        assert_eq!(sub.len(), 1);
    }

    #[test]
    fn copy_shared_checks_shapes() {
        let mut a = ParameterSet::new();
        a.insert("w", Tensor::zeros(&[2])).unwrap();
        let mut b = ParameterSet::new();
        b.insert("w", Tensor::new(vec![2], vec![1.0, 2.0]).unwrap()).unwrap();
        assert_eq!(a.copy_shared_from(&b).unwrap(), 1);
        assert_eq!(a.get("w").unwrap().data(), &[1.0, 2.0]);
        let mut c = ParameterSet::new();
        c.insert("w", Tensor::zeros(&[3])).unwrap();
        assert!(a.copy_shared_from(&c).is_err());
    }
}
