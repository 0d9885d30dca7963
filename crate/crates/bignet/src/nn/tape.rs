//! Minimal reverse-mode autodiff over dense `f64` matrices, covering exactly
//! the operations the attention networks and losses need. Every operation
//! here is exercised by central finite-difference checks in the test suite.

use ndarray::{Array2, Axis};

use crate::error::{BignetError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    Matmul(Var, Var),
    Add(Var, Var),
    AddBias(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    Mul(Var, Var),
    LeakyRelu(Var, f64),
    Prelu(Var, Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize, usize),
    MeanVars(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    ScatterAddRows(Var, Vec<usize>, usize),
    EdgeSoftmax(Var, Vec<usize>),
    MulCol(Var, Var),
    MaskRows(Var, Var, Vec<bool>),
    CosineLossRows(Var, Array2<f64>, Vec<usize>, f64, f64),
    WeightedCrossEntropy(Var, Vec<usize>, Vec<usize>, Vec<f64>),
}

struct Node {
    value: Array2<f64>,
    op: Op,
}

/// A computation tape: values are recorded on the forward pass, gradients
/// are accumulated by a single reverse sweep.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

const NORM_EPS: f64 = 1e-12;

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn leaf(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        self.push(value, Op::Matmul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) + self.value(b);
        self.push(value, Op::Add(a, b))
    }

    /// Broadcast-add a 1-row bias to every row of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Var {
        let value = self.value(x) + self.value(bias);
        self.push(value, Op::AddBias(x, bias))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) - self.value(b);
        self.push(value, Op::Sub(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a) * c;
        self.push(value, Op::Scale(a, c))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) * self.value(b);
        self.push(value, Op::Mul(a, b))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let value = self.value(x).mapv(|v| if v > 0.0 { v } else { slope * v });
        self.push(value, Op::LeakyRelu(x, slope))
    }

    /// Parametric rectifier with a learnable 1x1 negative-slope parameter.
    pub fn prelu(&mut self, x: Var, alpha: Var) -> Var {
        let a = self.value(alpha)[(0, 0)];
        let value = self.value(x).mapv(|v| if v > 0.0 { v } else { a * v });
        self.push(value, Op::Prelu(x, alpha))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|v| self.value(*v).view()).collect();
        let value = ndarray::concatenate(Axis(1), &views).expect("column concat");
        self.push(value, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|v| self.value(*v).view()).collect();
        let value = ndarray::concatenate(Axis(0), &views).expect("row concat");
        self.push(value, Op::ConcatRows(parts.to_vec()))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let value = self.value(a).slice(ndarray::s![start..start + len, ..]).to_owned();
        self.push(value, Op::SliceRows(a, start, len))
    }

    pub fn mean_vars(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let mut value = self.value(parts[0]).clone();
        for p in &parts[1..] {
            value = value + self.value(*p);
        }
        value /= parts.len() as f64;
        self.push(value, Op::MeanVars(parts.to_vec()))
    }

    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let src = self.value(a);
        let mut value = Array2::zeros((idx.len(), src.ncols()));
        for (r, &i) in idx.iter().enumerate() {
            value.row_mut(r).assign(&src.row(i));
        }
        self.push(value, Op::GatherRows(a, idx.to_vec()))
    }

    pub fn scatter_add_rows(&mut self, a: Var, idx: &[usize], n_rows: usize) -> Var {
        let src = self.value(a);
        assert_eq!(src.nrows(), idx.len());
        let mut value = Array2::zeros((n_rows, src.ncols()));
        for (r, &i) in idx.iter().enumerate() {
            let mut row = value.row_mut(i);
            row += &src.row(r);
        }
        self.push(value, Op::ScatterAddRows(a, idx.to_vec(), n_rows))
    }

    /// Softmax of a column of logits over groups sharing a destination id.
    pub fn edge_softmax(&mut self, logits: Var, dst: &[usize]) -> Var {
        let l = self.value(logits);
        assert_eq!(l.ncols(), 1);
        assert_eq!(l.nrows(), dst.len());
        let n_groups = dst.iter().copied().max().map_or(0, |m| m + 1);
        let mut max = vec![f64::NEG_INFINITY; n_groups];
        for (e, &d) in dst.iter().enumerate() {
            max[d] = max[d].max(l[(e, 0)]);
        }
        let mut sums = vec![0.0; n_groups];
        let mut value = Array2::zeros((dst.len(), 1));
        for (e, &d) in dst.iter().enumerate() {
            let x = (l[(e, 0)] - max[d]).exp();
            value[(e, 0)] = x;
            sums[d] += x;
        }
        for (e, &d) in dst.iter().enumerate() {
            value[(e, 0)] /= sums[d];
        }
        self.push(value, Op::EdgeSoftmax(logits, dst.to_vec()))
    }

    /// Scale row `e` of `x` by the scalar in row `e` of `w` (a single column).
    pub fn mul_col(&mut self, x: Var, w: Var) -> Var {
        let xs = self.value(x);
        let ws = self.value(w);
        assert_eq!(ws.ncols(), 1);
        assert_eq!(xs.nrows(), ws.nrows());
        let mut value = xs.clone();
        for (e, mut row) in value.rows_mut().into_iter().enumerate() {
            row *= ws[(e, 0)];
        }
        self.push(value, Op::MulCol(x, w))
    }

    /// Replace masked rows of `x` with the (learnable) 1-row token.
    pub fn mask_rows(&mut self, x: Var, token: Var, mask: &[bool]) -> Var {
        let xs = self.value(x);
        let t = self.value(token);
        assert_eq!(xs.nrows(), mask.len());
        assert_eq!(t.nrows(), 1);
        assert_eq!(t.ncols(), xs.ncols());
        let mut value = xs.clone();
        for (r, &m) in mask.iter().enumerate() {
            if m {
                value.row_mut(r).assign(&t.row(0));
            }
        }
        self.push(value, Op::MaskRows(x, token, mask.to_vec()))
    }

    /// `scale * sum over rows of (1 - cos(pred_row, target_row))`, with the
    /// cosine of a zero-norm row defined as 0 (contribution 1).
    pub fn cosine_loss_rows(
        &mut self,
        pred: Var,
        target: &Array2<f64>,
        rows: &[usize],
        scale: f64,
    ) -> Var {
        self.cosine_loss_rows_gamma(pred, target, rows, scale, 1.0)
    }

    /// Scaled-cosine variant: each row contributes `(1 - cos)^gamma`.
    pub fn cosine_loss_rows_gamma(
        &mut self,
        pred: Var,
        target: &Array2<f64>,
        rows: &[usize],
        scale: f64,
        gamma: f64,
    ) -> Var {
        assert!(gamma >= 1.0, "gamma < 1 makes the loss non-smooth at 0");
        let p = self.value(pred);
        let mut total = 0.0;
        for &r in rows {
            total += (1.0 - row_cosine(p, target, r)).powf(gamma);
        }
        let value = Array2::from_elem((1, 1), scale * total);
        self.push(
            value,
            Op::CosineLossRows(pred, target.clone(), rows.to_vec(), scale, gamma),
        )
    }

    /// Class-weighted softmax cross-entropy over the given rows:
    /// `sum_r w[y_r] * nll_r / sum_r w[y_r]`.
    pub fn weighted_cross_entropy(
        &mut self,
        logits: Var,
        rows: &[usize],
        labels: &[usize],
        class_weights: &[f64],
    ) -> Var {
        assert_eq!(rows.len(), labels.len());
        let l = self.value(logits);
        let mut num = 0.0;
        let mut denom = 0.0;
        for (&r, &y) in rows.iter().zip(labels) {
            let (log_probs, _) = row_log_softmax(l, r);
            num += class_weights[y] * (-log_probs[y]);
            denom += class_weights[y];
        }
        let value = Array2::from_elem((1, 1), if denom > 0.0 { num / denom } else { 0.0 });
        self.push(
            value,
            Op::WeightedCrossEntropy(logits, rows.to_vec(), labels.to_vec(), class_weights.to_vec()),
        )
    }

    /// Reverse sweep from a scalar loss; returns one gradient per variable.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let l = self.value(loss);
        if l.dim() != (1, 1) {
            return Err(BignetError::Shape("backward target must be 1x1".into()));
        }
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Array2::ones((1, 1)));

        for i in (0..self.nodes.len()).rev() {
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            match &self.nodes[i].op {
                Op::Leaf => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::Matmul(a, b) => {
                    let da = g.dot(&self.value(*b).t());
                    let db = self.value(*a).t().dot(&g);
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::AddBias(x, bias) => {
                    let db = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    accumulate(&mut grads, *x, g);
                    accumulate(&mut grads, *bias, db);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, -g);
                }
                Op::Scale(a, c) => accumulate(&mut grads, *a, g * *c),
                Op::Mul(a, b) => {
                    let da = &g * self.value(*b);
                    let db = &g * self.value(*a);
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::LeakyRelu(x, slope) => {
                    let xs = self.value(*x);
                    let mut dx = g;
                    dx.zip_mut_with(xs, |gv, &xv| {
                        if xv <= 0.0 {
                            *gv *= slope;
                        }
                    });
                    accumulate(&mut grads, *x, dx);
                }
                Op::Prelu(x, alpha) => {
                    let xs = self.value(*x);
                    let a = self.value(*alpha)[(0, 0)];
                    let mut da = 0.0;
                    let mut dx = g;
                    ndarray::Zip::from(&mut dx).and(xs).for_each(|gv, &xv| {
                        if xv <= 0.0 {
                            da += *gv * xv;
                            *gv *= a;
                        }
                    });
                    accumulate(&mut grads, *x, dx);
                    accumulate(&mut grads, *alpha, Array2::from_elem((1, 1), da));
                }
                Op::ConcatCols(parts) => {
                    let mut col = 0;
                    for p in parts {
                        let w = self.value(*p).ncols();
                        let dp = g.slice(ndarray::s![.., col..col + w]).to_owned();
                        accumulate(&mut grads, *p, dp);
                        col += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut row = 0;
                    for p in parts {
                        let h = self.value(*p).nrows();
                        let dp = g.slice(ndarray::s![row..row + h, ..]).to_owned();
                        accumulate(&mut grads, *p, dp);
                        row += h;
                    }
                }
                Op::SliceRows(a, start, len) => {
                    let src = self.value(*a);
                    let mut da = Array2::zeros(src.dim());
                    da.slice_mut(ndarray::s![*start..*start + *len, ..]).assign(&g);
                    accumulate(&mut grads, *a, da);
                }
                Op::MeanVars(parts) => {
                    let k = parts.len() as f64;
                    for p in parts {
                        accumulate(&mut grads, *p, &g / k);
                    }
                }
                Op::GatherRows(a, idx) => {
                    let src = self.value(*a);
                    let mut da = Array2::zeros(src.dim());
                    for (r, &i) in idx.iter().enumerate() {
                        let mut row = da.row_mut(i);
                        row += &g.row(r);
                    }
                    accumulate(&mut grads, *a, da);
                }
                Op::ScatterAddRows(a, idx, _n) => {
                    let src = self.value(*a);
                    let mut da = Array2::zeros(src.dim());
                    for (r, &i) in idx.iter().enumerate() {
                        da.row_mut(r).assign(&g.row(i));
                    }
                    accumulate(&mut grads, *a, da);
                }
                Op::EdgeSoftmax(logits, dst) => {
                    let alpha = &self.nodes[i].value;
                    let n_groups = dst.iter().copied().max().map_or(0, |m| m + 1);
                    let mut group_dot = vec![0.0; n_groups];
                    for (e, &d) in dst.iter().enumerate() {
                        group_dot[d] += alpha[(e, 0)] * g[(e, 0)];
                    }
                    let mut dl = Array2::zeros((dst.len(), 1));
                    for (e, &d) in dst.iter().enumerate() {
                        dl[(e, 0)] = alpha[(e, 0)] * (g[(e, 0)] - group_dot[d]);
                    }
                    accumulate(&mut grads, *logits, dl);
                }
                Op::MulCol(x, w) => {
                    let xs = self.value(*x);
                    let ws = self.value(*w);
                    let mut dx = g.clone();
                    let mut dw = Array2::zeros((xs.nrows(), 1));
                    for e in 0..xs.nrows() {
                        let scale = ws[(e, 0)];
                        let mut row = dx.row_mut(e);
                        dw[(e, 0)] = g.row(e).dot(&xs.row(e));
                        row *= scale;
                    }
                    accumulate(&mut grads, *x, dx);
                    accumulate(&mut grads, *w, dw);
                }
                Op::MaskRows(x, token, mask) => {
                    let mut dx = g.clone();
                    let mut dtoken = Array2::zeros((1, g.ncols()));
                    for (r, &m) in mask.iter().enumerate() {
                        if m {
                            {
                                let mut trow = dtoken.row_mut(0);
                                trow += &g.row(r);
                            }
                            dx.row_mut(r).fill(0.0);
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                    accumulate(&mut grads, *token, dtoken);
                }
                Op::CosineLossRows(pred, target, rows, scale, gamma) => {
                    let p = self.value(*pred);
                    let g0 = g[(0, 0)] * *scale;
                    let mut dp = Array2::zeros(p.dim());
                    for &r in rows {
                        let x = p.row(r);
                        let t = target.row(r);
                        let nx = x.dot(&x).sqrt();
                        let nt = t.dot(&t).sqrt();
                        if nx < NORM_EPS || nt < NORM_EPS {
                            continue; // cosine pinned to 0; zero subgradient
                        }
                        let c = x.dot(&t) / (nx * nt);
                        // d/dx (1-cos)^g = g*(1-cos)^(g-1) * (cos*x/|x|^2 - t/(|x||t|))
                        let outer = if *gamma == 1.0 {
                            1.0
                        } else {
                            *gamma * (1.0 - c).powf(*gamma - 1.0)
                        };
                        let mut row = dp.row_mut(r);
                        for j in 0..p.ncols() {
                            row[j] += g0 * outer * (c * x[j] / (nx * nx) - t[j] / (nx * nt));
                        }
                    }
                    accumulate(&mut grads, *pred, dp);
                }
                Op::WeightedCrossEntropy(logits, rows, labels, class_weights) => {
                    let l = self.value(*logits);
                    let denom: f64 = labels.iter().map(|&y| class_weights[y]).sum();
                    let mut dl = Array2::zeros(l.dim());
                    if denom > 0.0 {
                        let g0 = g[(0, 0)] / denom;
                        for (&r, &y) in rows.iter().zip(labels) {
                            let (log_probs, _) = row_log_softmax(l, r);
                            let w = class_weights[y];
                            let mut row = dl.row_mut(r);
                            for j in 0..l.ncols() {
                                let p = log_probs[j].exp();
                                let indicator = if j == y { 1.0 } else { 0.0 };
                                row[j] += g0 * w * (p - indicator);
                            }
                        }
                    }
                    accumulate(&mut grads, *logits, dl);
                }
            }
        }

        Ok(Gradients {
            grads: grads
                .into_iter()
                .enumerate()
                .map(|(i, g)| g.unwrap_or_else(|| Array2::zeros(self.nodes[i].value.dim())))
                .collect(),
        })
    }
}

fn accumulate(grads: &mut [Option<Array2<f64>>], v: Var, g: Array2<f64>) {
    match &mut grads[v.0] {
        Some(existing) => *existing += &g,
        slot @ None => *slot = Some(g),
    }
}

fn row_cosine(p: &Array2<f64>, t: &Array2<f64>, r: usize) -> f64 {
    let x = p.row(r);
    let y = t.row(r);
    let nx = x.dot(&x).sqrt();
    let ny = y.dot(&y).sqrt();
    if nx < NORM_EPS || ny < NORM_EPS {
        0.0
    } else {
        x.dot(&y) / (nx * ny)
    }
}

fn row_log_softmax(l: &Array2<f64>, r: usize) -> (Vec<f64>, f64) {
    let row = l.row(r);
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum: f64 = row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln() + max;
    (row.iter().map(|&v| v - log_sum).collect(), log_sum)
}

pub struct Gradients {
    grads: Vec<Array2<f64>>,
}

impl Gradients {
    pub fn of(&self, v: Var) -> &Array2<f64> {
        &self.grads[v.0]
    }
}
