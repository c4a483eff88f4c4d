use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};

/// Dense symmetric matrix over a keyed set of cities, zero diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct PairMatrix {
    keys: Vec<u64>,
    index: HashMap<u64, usize>,
    values: Vec<f64>,
}

impl PairMatrix {
    /// Evaluates `f(i, j)` once per unordered pair `i < j` and mirrors it,
    /// so the result is symmetric bit for bit.
    pub fn from_fn<F>(keys: Vec<u64>, exec: Execution, f: F) -> Result<Self>
    where
        F: Fn(usize, usize) -> f64 + Sync + Send,
    {
        let n = keys.len();
        let mut index = HashMap::with_capacity(n);
        for (i, &k) in keys.iter().enumerate() {
            if index.insert(k, i).is_some() {
                return Err(Error::domain(format!("duplicate key {k}")));
            }
        }
        let upper = map_indexed(exec, n, |i| ((i + 1)..n).map(|j| f(i, j)).collect::<Vec<f64>>());
        let mut values = vec![0.0; n * n];
        for (i, row) in upper.into_iter().enumerate() {
            for (off, v) in row.into_iter().enumerate() {
                let j = i + 1 + off;
                values[i * n + j] = v;
                values[j * n + i] = v;
            }
        }
        Ok(PairMatrix { keys, index, values })
    }

    pub fn keys(&self) -> &[u64] {
        &self.keys
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn index_of(&self, key: u64) -> Option<usize> {
        self.index.get(&key).copied()
    }

    pub fn contains(&self, key: u64) -> bool {
        self.index.contains_key(&key)
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.keys.len() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.keys.len();
        &self.values[i * n..(i + 1) * n]
    }

    /// Entry for two keys, or [`Error::MissingKey`] naming the absent one.
    pub fn get(&self, a: u64, b: u64) -> Result<f64> {
        let i = self.index_of(a).ok_or(Error::MissingKey(a))?;
        let j = self.index_of(b).ok_or(Error::MissingKey(b))?;
        Ok(self.at(i, j))
    }

    /// Largest off-diagonal entry; 0 for fewer than two keys.
    pub fn max_off_diagonal(&self) -> f64 {
        let n = self.keys.len();
        let mut max = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                max = max.max(self.at(i, j));
            }
        }
        max
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.keys.len();
        (0..n).all(|i| self.at(i, i) == 0.0 && (0..i).all(|j| self.at(i, j) == self.at(j, i)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mirrors_upper_triangle() {
        let m = PairMatrix::from_fn(vec![10, 20, 30], Execution::Sequential, |i, j| (i * 10 + j) as f64).unwrap();
        assert_eq!(m.at(0, 2), 2.0);
        assert_eq!(m.at(2, 0), 2.0);
        assert_eq!(m.get(20, 30).unwrap(), 12.0);
        assert_eq!(m.at(1, 1), 0.0);
        assert!(m.is_symmetric());
        assert_eq!(m.max_off_diagonal(), 12.0);
        assert!(matches!(m.get(20, 99), Err(Error::MissingKey(99))));
    }

    #[test]
    fn duplicate_keys_rejected() {
        assert!(PairMatrix::from_fn(vec![1, 1], Execution::Sequential, |_, _| 0.0).is_err());
    }
}
