//! A small reverse-mode automatic differentiation tape over dense matrices.
//!
//! Nodes are appended in evaluation order; `backward` walks them in reverse and
//! accumulates adjoints. Leaves created with [`Tape::param`] map onto a slice of the flat
//! parameter vector so their gradients can be scattered back.

use nalgebra::DMatrix;

pub type Mat = DMatrix<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param { offset: usize },
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Relu(Var),
    ConcatCols(Var, Var),
    SoftmaxRows(Var),
    Affine(Var, f64),
    Mean(Var),
}

#[derive(Debug, Default)]
pub struct Tape {
    values: Vec<Mat>,
    ops: Vec<Op>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        self.values.push(value);
        self.ops.push(op);
        Var(self.values.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.values[v.0]
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.values[v.0][(0, 0)]
    }

    /// A constant input.
    pub fn constant(&mut self, m: Mat) -> Var {
        self.push(m, Op::Leaf)
    }

    /// A `rows × cols` parameter block read row-major from `params[offset..]`.
    pub fn param(&mut self, params: &[f64], offset: usize, rows: usize, cols: usize) -> Var {
        let m = Mat::from_row_slice(rows, cols, &params[offset..offset + rows * cols]);
        self.push(m, Op::Param { offset })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(v, Op::MatMul(a, b))
    }

    /// Adds the `1 × m` row `bias` to every row of `a`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Var {
        let mut v = self.value(a).clone();
        let b = self.value(bias);
        for mut row in v.row_iter_mut() {
            row += b;
        }
        self.push(v, Op::AddBias(a, bias))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).component_mul(self.value(b));
        self.push(v, Op::Mul(a, b))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        let mut v = Mat::zeros(va.nrows(), va.ncols() + vb.ncols());
        v.columns_mut(0, va.ncols()).copy_from(va);
        v.columns_mut(va.ncols(), vb.ncols()).copy_from(vb);
        self.push(v, Op::ConcatCols(a, b))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        for mut row in v.row_iter_mut() {
            let max = row.max();
            row.apply(|x| *x = (*x - max).exp());
            let sum = row.sum();
            row /= sum;
        }
        self.push(v, Op::SoftmaxRows(a))
    }

    /// `scale · a`.
    pub fn scale(&mut self, a: Var, scale: f64) -> Var {
        let v = self.value(a) * scale;
        self.push(v, Op::Affine(a, scale))
    }

    /// Mean of all entries as a `1 × 1` matrix.
    pub fn mean(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let v = Mat::from_element(1, 1, m.sum() / (m.nrows() * m.ncols()) as f64);
        self.push(v, Op::Mean(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.mul(a, a)
    }

    /// Adjoints of every node with respect to the scalar `root`, then the parameter
    /// gradient scattered into a vector of length `n_params`.
    pub fn backward(&self, root: Var, n_params: usize) -> Vec<f64> {
        let mut adj: Vec<Option<Mat>> = vec![None; root.0 + 1];
        adj[root.0] = Some(Mat::from_element(1, 1, 1.0));
        let mut grad = vec![0.0; n_params];
        fn acc(adj: &mut [Option<Mat>], v: Var, g: Mat) {
            match &mut adj[v.0] {
                Some(existing) => *existing += g,
                slot => *slot = Some(g),
            }
        }
        for idx in (0..=root.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            match &self.ops[idx] {
                Op::Leaf => {}
                Op::Param { offset } => {
                    let cols = g.ncols();
                    for r in 0..g.nrows() {
                        for c in 0..cols {
                            grad[offset + r * cols + c] += g[(r, c)];
                        }
                    }
                }
                Op::MatMul(a, b) => {
                    let ga = &g * self.value(*b).transpose();
                    let gb = self.value(*a).transpose() * &g;
                    acc(&mut adj, *a, ga);
                    acc(&mut adj, *b, gb);
                }
                Op::AddBias(a, b) => {
                    let gb = Mat::from_fn(1, g.ncols(), |_, c| g.column(c).sum());
                    acc(&mut adj, *b, gb);
                    acc(&mut adj, *a, g);
                }
                Op::Add(a, b) => {
                    acc(&mut adj, *b, g.clone());
                    acc(&mut adj, *a, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut adj, *b, -g.clone());
                    acc(&mut adj, *a, g);
                }
                Op::Mul(a, b) => {
                    let ga = g.component_mul(self.value(*b));
                    let gb = g.component_mul(self.value(*a));
                    acc(&mut adj, *a, ga);
                    acc(&mut adj, *b, gb);
                }
                Op::Relu(a) => {
                    let x = self.value(*a);
                    let ga = g.zip_map(x, |gv, xv| if xv > 0.0 { gv } else { 0.0 });
                    acc(&mut adj, *a, ga);
                }
                Op::ConcatCols(a, b) => {
                    let na = self.value(*a).ncols();
                    let nb = self.value(*b).ncols();
                    acc(&mut adj, *a, g.columns(0, na).into_owned());
                    acc(&mut adj, *b, g.columns(na, nb).into_owned());
                }
                Op::SoftmaxRows(a) => {
                    let s = &self.values[idx];
                    let mut ga = g.clone();
                    for r in 0..s.nrows() {
                        let dot: f64 = (0..s.ncols()).map(|c| g[(r, c)] * s[(r, c)]).sum();
                        for c in 0..s.ncols() {
                            ga[(r, c)] = s[(r, c)] * (g[(r, c)] - dot);
                        }
                    }
                    acc(&mut adj, *a, ga);
                }
                Op::Affine(a, s) => acc(&mut adj, *a, g * *s),
                Op::Mean(a) => {
                    let x = self.value(*a);
                    let n = (x.nrows() * x.ncols()) as f64;
                    acc(&mut adj, *a, Mat::from_element(x.nrows(), x.ncols(), g[(0, 0)] / n));
                }
            }
        }
        grad
    }
}
