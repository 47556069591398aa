use super::{Kernel, SvmParams};
use crate::par;

/// Dense symmetric kernel matrix over a training set.
#[derive(Debug, Clone)]
pub struct Gram {
    n: usize,
    values: Vec<f64>,
}

/// Pairwise dot products, reusable across kernels and gammas.
#[derive(Debug, Clone)]
pub(crate) struct DotMatrix {
    n: usize,
    dots: Vec<f64>,
}

impl DotMatrix {
    pub(crate) fn new(x: &[Vec<f64>]) -> Self {
        let n = x.len();
        let mut dots = vec![0.0; n * n];
        par::for_each_chunk_mut(&mut dots, n.max(1), |i, row| {
            for (j, v) in row.iter_mut().enumerate() {
                *v = x[i].iter().zip(&x[j]).map(|(a, b)| a * b).sum();
            }
        });
        DotMatrix { n, dots }
    }

    pub(crate) fn gram(&self, params: &SvmParams) -> Gram {
        let n = self.n;
        let values = match params.kernel {
            Kernel::Linear => self.dots.clone(),
            Kernel::Rbf => {
                let mut v = vec![0.0; n * n];
                let dots = &self.dots;
                par::for_each_chunk_mut(&mut v, n.max(1), |i, row| {
                    for (j, out) in row.iter_mut().enumerate() {
                        let d = (dots[i * n + i] + dots[j * n + j] - 2.0 * dots[i * n + j]).max(0.0);
                        *out = if i == j { 1.0 } else { (-params.gamma * d).exp() };
                    }
                });
                v
            }
        };
        Gram { n, values }
    }

    /// Restricts to the given rows/columns.
    pub(crate) fn subset(&self, idx: &[usize]) -> DotMatrix {
        let m = idx.len();
        let mut dots = Vec::with_capacity(m * m);
        for &i in idx {
            for &j in idx {
                dots.push(self.dots[i * self.n + j]);
            }
        }
        DotMatrix { n: m, dots }
    }
}

impl Gram {
    pub fn compute(x: &[Vec<f64>], params: &SvmParams) -> Self {
        let n = x.len();
        let mut values = vec![0.0; n * n];
        par::for_each_chunk_mut(&mut values, n.max(1), |i, row| {
            for (j, v) in row.iter_mut().enumerate() {
                *v = params.eval(&x[i], &x[j]);
            }
        });
        Gram { n, values }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }
}
