//! Dense row-major matrices, GEMM wrappers and the flat named parameter store.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// `c = alpha * op(a) * op(b) + beta * c` on row-major slices, where `op(a)`
/// is `m x k` and `op(b)` is `k x n`.
#[allow(clippy::too_many_arguments)]
pub fn gemm(m: usize, k: usize, n: usize, alpha: f64, a: &[f64], ta: bool, b: &[f64], tb: bool, beta: f64, c: &mut [f64]) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in &mut c[..m * n] {
            *v *= beta;
        }
        return;
    }
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: strides and extents describe in-bounds views of the slices checked above.
    unsafe {
        matrixmultiply::dgemm(m, k, n, alpha, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta, c.as_mut_ptr(), n as isize, 1);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Adds `bias` to every row of a `rows x bias.len()` buffer.
pub fn add_bias(x: &mut [f64], bias: &[f64]) {
    for row in x.chunks_mut(bias.len()) {
        for (v, b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
}

/// Accumulates column sums of `dy` into `db`.
pub fn bias_grad(dy: &[f64], db: &mut [f64]) {
    for row in dy.chunks(db.len()) {
        for (g, v) in db.iter_mut().zip(row) {
            *g += v;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Encoder,
    Projection,
    ContextEncoder,
    Backbone,
    LmHead,
    NspHead,
}

impl Group {
    pub const ALL: [Group; 6] =
        [Group::Encoder, Group::Projection, Group::ContextEncoder, Group::Backbone, Group::LmHead, Group::NspHead];
}

/// Handle to one tensor in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TensorId(pub usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub group: Group,
    pub offset: usize,
    pub len: usize,
}

/// All trainable tensors in one flat buffer, addressed by name or handle.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    specs: Vec<TensorSpec>,
    index: BTreeMap<String, usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub enum Init {
    Zeros,
    Ones,
    Normal(f64),
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self { specs: Vec::new(), index: BTreeMap::new(), data: Vec::new() }
    }

    pub fn add<R: Rng>(&mut self, name: &str, shape: &[usize], group: Group, init: Init, rng: &mut R) -> TensorId {
        assert!(!self.index.contains_key(name), "duplicate tensor {name}");
        let len: usize = shape.iter().product();
        let offset = self.data.len();
        match init {
            Init::Zeros => self.data.resize(offset + len, 0.0),
            Init::Ones => self.data.resize(offset + len, 1.0),
            Init::Normal(std) => {
                let d = Normal::new(0.0, std).expect("finite std");
                self.data.extend((0..len).map(|_| d.sample(rng)));
            }
        }
        let id = self.specs.len();
        self.specs.push(TensorSpec { name: name.to_string(), shape: shape.to_vec(), group, offset, len });
        self.index.insert(name.to_string(), id);
        TensorId(id)
    }

    pub fn id(&self, name: &str) -> Option<TensorId> {
        self.index.get(name).map(|&i| TensorId(i))
    }

    pub fn spec(&self, id: TensorId) -> &TensorSpec {
        &self.specs[id.0]
    }

    pub fn specs(&self) -> &[TensorSpec] {
        &self.specs
    }

    pub fn get(&self, id: TensorId) -> &[f64] {
        let s = &self.specs[id.0];
        &self.data[s.offset..s.offset + s.len]
    }

    pub fn get_mut(&mut self, id: TensorId) -> &mut [f64] {
        let s = &self.specs[id.0];
        &mut self.data[s.offset..s.offset + s.len]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Same layout, all zeros; used for gradients.
    pub fn zeros_like(&self) -> Self {
        Self { specs: self.specs.clone(), index: self.index.clone(), data: vec![0.0; self.data.len()] }
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    /// Flat index ranges belonging to `group`.
    pub fn group_ranges(&self, group: Group) -> Vec<std::ops::Range<usize>> {
        self.specs.iter().filter(|s| s.group == group).map(|s| s.offset..s.offset + s.len).collect()
    }

    pub fn group_len(&self, group: Group) -> usize {
        self.specs.iter().filter(|s| s.group == group).map(|s| s.len).sum()
    }

    /// Zeroes every entry outside `groups`.
    pub fn retain_groups(&mut self, groups: &[Group]) {
        for s in &self.specs {
            if !groups.contains(&s.group) {
                self.data[s.offset..s.offset + s.len].iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }

    pub fn same_layout(&self, other: &ParamStore) -> bool {
        self.specs == other.specs
    }

    pub(crate) fn from_parts(specs: Vec<TensorSpec>, data: Vec<f64>) -> Self {
        let index = specs.iter().enumerate().map(|(i, s)| (s.name.clone(), i)).collect();
        Self { specs, index, data }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(m: usize, k: usize, n: usize, a: &[f64], ta: bool, b: &[f64], tb: bool) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    let av = if ta { a[p * m + i] } else { a[i * k + p] };
                    let bv = if tb { b[j * k + p] } else { b[p * n + j] };
                    c[i * n + j] += av * bv;
                }
            }
        }
        c
    }

    #[test]
    fn gemm_matches_naive_for_all_transposes() {
        let (m, k, n) = (3, 5, 4);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.91).cos()).collect();
        for ta in [false, true] {
            for tb in [false, true] {
                let mut c = vec![0.0; m * n];
                gemm(m, k, n, 1.0, &a, ta, &b, tb, 0.0, &mut c);
                let e = naive(m, k, n, &a, ta, &b, tb);
                for (x, y) in c.iter().zip(&e) {
                    assert!((x - y).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn store_layout() {
        let mut rng = rand::rngs::mock::StepRng::new(0, 1);
        let mut s = ParamStore::new();
        let a = s.add("a", &[2, 3], Group::Encoder, Init::Ones, &mut rng);
        let b = s.add("b", &[4], Group::Backbone, Init::Zeros, &mut rng);
        assert_eq!(s.len(), 10);
        assert_eq!(s.get(a), &[1.0; 6]);
        assert_eq!(s.get(b), &[0.0; 4]);
        assert_eq!(s.id("b"), Some(b));
        let mut g = s.clone();
        g.retain_groups(&[Group::Backbone]);
        assert!(g.get(a).iter().all(|v| *v == 0.0));
    }
}
