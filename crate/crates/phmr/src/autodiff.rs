//! Reverse-mode automatic differentiation over `ndarray` matrices.
//!
//! A [`Tape`] records one forward pass as a topologically ordered list of
//! nodes; [`Tape::backward`] walks it in reverse accumulating adjoints.
//! Everything is `f64` so analytic gradients can be checked against central
//! finite differences to tight tolerances. Sequences are plain `rows x d`
//! matrices; batching happens at the episode level outside this module.
//!
//! Masking convention: masks are `bool` slices attached to ops as constants
//! (never differentiated). Masked key columns in a softmax receive an exact
//! zero weight, and masked rows in a mean contribute nothing, so values
//! stored in padded positions can never leak into results.

use ndarray::{concatenate, s, Array2, Axis};

/// Index of a node on the tape.
pub type NodeId = usize;

enum Op {
    /// Constant input (episode features, ids already embedded, etc.).
    Leaf,
    /// Trainable leaf; the payload indexes the external parameter store.
    Param(usize),
    MatMul(NodeId, NodeId),
    /// `a · b^T` without materializing the transpose.
    MatMulNT(NodeId, NodeId),
    Add(NodeId, NodeId),
    /// `a + row` with `row` shaped `1 x d`, broadcast over rows of `a`.
    AddRowBroadcast(NodeId, NodeId),
    Scale(NodeId, f64),
    ConcatRows(Vec<NodeId>),
    ConcatCols(Vec<NodeId>),
    ColSlice {
        x: NodeId,
        start: usize,
        len: usize,
    },
    /// Row-wise softmax over unmasked key columns; masked columns are
    /// exactly zero. Caches the probabilities (= the node value).
    SoftmaxRowsMasked {
        x: NodeId,
        key_mask: Vec<bool>,
    },
    LayerNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        /// Cached per-row normalized activations.
        xhat: Array2<f64>,
        /// Cached per-row 1/sqrt(var + eps).
        inv_std: Vec<f64>,
    },
    /// Mean over unmasked rows -> `1 x d`. All-masked input yields zeros.
    MaskedMeanRows {
        x: NodeId,
        row_mask: Vec<bool>,
    },
    /// Embedding lookup: rows of `table` selected by `ids`.
    Gather {
        table: NodeId,
        ids: Vec<usize>,
    },
    /// Inverted-scale dropout; `keep` already contains 0 or 1/(1-p).
    Dropout {
        x: NodeId,
        keep: Array2<f64>,
    },
    /// Fused softmax + cross-entropy on a `1 x k` logit row. The softmax
    /// denominator sums its addends in ascending order so the result is
    /// invariant to how the logits were ordered before assembly.
    SoftmaxCrossEntropy {
        logits: NodeId,
        probs: Array2<f64>,
        gold: usize,
    },
    /// Sum of independent binary cross-entropies on a `1 x k` logit row.
    BceSum {
        logits: NodeId,
        targets: Vec<f64>,
    },
    /// Test/diagnostic reduction: `sum(x ⊙ w)` as a `1 x 1` scalar.
    WeightedSum(NodeId, Array2<f64>),
}

struct Node {
    op: Op,
    value: Array2<f64>,
}

/// Softmax of a small logit slice with the denominator summed in ascending
/// order of addend value, making the normalizer (and hence every output
/// probability) bit-identical under any permutation of the inputs.
pub fn softmax_sorted(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let mut sorted = exps.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let denom: f64 = sorted.iter().sum();
    exps.iter().map(|&e| e / denom).collect()
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn value(&self, id: NodeId) -> &Array2<f64> {
        &self.nodes[id].value
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        debug_assert_eq!(self.nodes[id].value.len(), 1);
        self.nodes[id].value[[0, 0]]
    }

    fn push(&mut self, op: Op, value: Array2<f64>) -> NodeId {
        self.nodes.push(Node { op, value });
        self.nodes.len() - 1
    }

    pub fn leaf(&mut self, value: Array2<f64>) -> NodeId {
        self.push(Op::Leaf, value)
    }

    /// Trainable leaf bound to slot `param_idx` of the parameter store.
    pub fn param(&mut self, param_idx: usize, value: Array2<f64>) -> NodeId {
        self.push(Op::Param(param_idx), value)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.nodes[a].value.dot(&self.nodes[b].value);
        self.push(Op::MatMul(a, b), v)
    }

    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.nodes[a].value.dot(&self.nodes[b].value.t());
        self.push(Op::MatMulNT(a, b), v)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = &self.nodes[a].value + &self.nodes[b].value;
        self.push(Op::Add(a, b), v)
    }

    pub fn add_row_broadcast(&mut self, a: NodeId, row: NodeId) -> NodeId {
        debug_assert_eq!(self.nodes[row].value.nrows(), 1);
        let v = &self.nodes[a].value + &self.nodes[row].value;
        self.push(Op::AddRowBroadcast(a, row), v)
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.nodes[a].value.mapv(|x| x * c);
        self.push(Op::Scale(a, c), v)
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> NodeId {
        let views: Vec<_> = parts.iter().map(|&p| self.nodes[p].value.view()).collect();
        let v = concatenate(Axis(0), &views).expect("row concat shape mismatch");
        self.push(Op::ConcatRows(parts.to_vec()), v)
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        let views: Vec<_> = parts.iter().map(|&p| self.nodes[p].value.view()).collect();
        let v = concatenate(Axis(1), &views).expect("col concat shape mismatch");
        self.push(Op::ConcatCols(parts.to_vec()), v)
    }

    pub fn col_slice(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let v = self.nodes[x].value.slice(s![.., start..start + len]).to_owned();
        self.push(Op::ColSlice { x, start, len }, v)
    }

    /// Row-wise softmax where `key_mask[j] == false` forces column `j` to an
    /// exact zero. At least one key must be unmasked.
    pub fn softmax_rows_masked(&mut self, x: NodeId, key_mask: &[bool]) -> NodeId {
        let logits = &self.nodes[x].value;
        debug_assert_eq!(logits.ncols(), key_mask.len());
        assert!(
            key_mask.iter().any(|&m| m),
            "softmax over an all-masked key set; callers must fall back first"
        );
        let mut v = Array2::zeros(logits.raw_dim());
        for (r, row) in logits.outer_iter().enumerate() {
            let m = row
                .iter()
                .zip(key_mask)
                .filter(|(_, &keep)| keep)
                .map(|(&z, _)| z)
                .fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            for (j, &z) in row.iter().enumerate() {
                if key_mask[j] {
                    denom += (z - m).exp();
                }
            }
            for (j, &z) in row.iter().enumerate() {
                if key_mask[j] {
                    v[[r, j]] = (z - m).exp() / denom;
                }
            }
        }
        self.push(
            Op::SoftmaxRowsMasked {
                x,
                key_mask: key_mask.to_vec(),
            },
            v,
        )
    }

    /// Per-row layer normalization with trainable `1 x d` scale and shift.
    pub fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId) -> NodeId {
        const EPS: f64 = 1e-5;
        let xv = &self.nodes[x].value;
        let g = &self.nodes[gamma].value;
        let b = &self.nodes[beta].value;
        let d = xv.ncols() as f64;
        let mut xhat = Array2::zeros(xv.raw_dim());
        let mut inv_std = Vec::with_capacity(xv.nrows());
        for (r, row) in xv.outer_iter().enumerate() {
            let mean = row.sum() / d;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / d;
            let istd = 1.0 / (var + EPS).sqrt();
            inv_std.push(istd);
            for (c, &v) in row.iter().enumerate() {
                xhat[[r, c]] = (v - mean) * istd;
            }
        }
        let mut v = xhat.clone();
        for mut row in v.outer_iter_mut() {
            for (c, val) in row.iter_mut().enumerate() {
                *val = *val * g[[0, c]] + b[[0, c]];
            }
        }
        self.push(
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            v,
        )
    }

    /// Mean over unmasked rows as a `1 x d` row; zeros if nothing is real.
    pub fn masked_mean_rows(&mut self, x: NodeId, row_mask: &[bool]) -> NodeId {
        let xv = &self.nodes[x].value;
        debug_assert_eq!(xv.nrows(), row_mask.len());
        let n = row_mask.iter().filter(|&&m| m).count();
        let mut v = Array2::zeros((1, xv.ncols()));
        if n > 0 {
            for (r, row) in xv.outer_iter().enumerate() {
                if row_mask[r] {
                    for (c, &val) in row.iter().enumerate() {
                        v[[0, c]] += val;
                    }
                }
            }
            v.mapv_inplace(|s| s / n as f64);
        }
        self.push(
            Op::MaskedMeanRows {
                x,
                row_mask: row_mask.to_vec(),
            },
            v,
        )
    }

    /// Embedding lookup. The table gradient scatter-adds one row per id.
    pub fn gather(&mut self, table: NodeId, ids: &[usize]) -> NodeId {
        let t = &self.nodes[table].value;
        let mut v = Array2::zeros((ids.len(), t.ncols()));
        for (r, &id) in ids.iter().enumerate() {
            v.row_mut(r).assign(&t.row(id));
        }
        self.push(
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            v,
        )
    }

    /// Inverted-scale dropout with a caller-supplied keep pattern. Every
    /// entry of `keep` must be 0 or 1/(1-p); p = 0 callers should skip the
    /// op entirely.
    pub fn dropout(&mut self, x: NodeId, keep: Array2<f64>) -> NodeId {
        let v = &self.nodes[x].value * &keep;
        self.push(Op::Dropout { x, keep }, v)
    }

    /// Cross-entropy of a `1 x k` logit row against `gold`, with the
    /// permutation-stable softmax of [`softmax_sorted`].
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, gold: usize) -> NodeId {
        let z = &self.nodes[logits].value;
        debug_assert_eq!(z.nrows(), 1);
        let row: Vec<f64> = z.row(0).to_vec();
        let p = softmax_sorted(&row);
        let loss = -p[gold].ln();
        let probs = Array2::from_shape_vec((1, row.len()), p).unwrap();
        self.push(
            Op::SoftmaxCrossEntropy {
                logits,
                probs,
                gold,
            },
            Array2::from_elem((1, 1), loss),
        )
    }

    /// Sum of binary cross-entropies of a `1 x k` logit row against targets.
    pub fn bce_with_logits_sum(&mut self, logits: NodeId, targets: &[f64]) -> NodeId {
        let z = &self.nodes[logits].value;
        debug_assert_eq!(z.nrows(), 1);
        debug_assert_eq!(z.ncols(), targets.len());
        let mut loss = 0.0;
        for (&zi, &t) in z.row(0).iter().zip(targets) {
            loss += zi.max(0.0) - zi * t + (-zi.abs()).exp().ln_1p();
        }
        self.push(
            Op::BceSum {
                logits,
                targets: targets.to_vec(),
            },
            Array2::from_elem((1, 1), loss),
        )
    }

    /// `sum(x ⊙ w)` as a scalar node (used by tests to build losses).
    pub fn weighted_sum(&mut self, x: NodeId, w: Array2<f64>) -> NodeId {
        let v = (&self.nodes[x].value * &w).sum();
        self.push(Op::WeightedSum(x, w), Array2::from_elem((1, 1), v))
    }

    /// Reverse pass from a scalar loss node. Returns one adjoint per node
    /// (None where nothing flowed).
    pub fn backward(&self, loss: NodeId) -> Vec<Option<Array2<f64>>> {
        assert_eq!(self.nodes[loss].value.len(), 1, "loss must be scalar");
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        grads[loss] = Some(Array2::from_elem((1, 1), 1.0));
        for id in (0..=loss).rev() {
            let Some(g) = grads[id].take() else {
                continue;
            };
            self.propagate(id, &g, &mut grads);
            grads[id] = Some(g);
        }
        grads
    }

    fn accumulate(slot: &mut Option<Array2<f64>>, delta: Array2<f64>) {
        match slot {
            Some(acc) => *acc += &delta,
            None => *slot = Some(delta),
        }
    }

    fn propagate(&self, id: NodeId, g: &Array2<f64>, grads: &mut [Option<Array2<f64>>]) {
        match &self.nodes[id].op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let ga = g.dot(&self.nodes[*b].value.t());
                let gb = self.nodes[*a].value.t().dot(g);
                Self::accumulate(&mut grads[*a], ga);
                Self::accumulate(&mut grads[*b], gb);
            }
            Op::MatMulNT(a, b) => {
                // value = a · b^T
                let ga = g.dot(&self.nodes[*b].value);
                let gb = g.t().dot(&self.nodes[*a].value);
                Self::accumulate(&mut grads[*a], ga);
                Self::accumulate(&mut grads[*b], gb);
            }
            Op::Add(a, b) => {
                Self::accumulate(&mut grads[*a], g.clone());
                Self::accumulate(&mut grads[*b], g.clone());
            }
            Op::AddRowBroadcast(a, row) => {
                Self::accumulate(&mut grads[*a], g.clone());
                let grow = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                Self::accumulate(&mut grads[*row], grow);
            }
            Op::Scale(a, c) => {
                Self::accumulate(&mut grads[*a], g.mapv(|x| x * c));
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let rows = self.nodes[p].value.nrows();
                    let slice = g.slice(s![offset..offset + rows, ..]).to_owned();
                    Self::accumulate(&mut grads[p], slice);
                    offset += rows;
                }
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let cols = self.nodes[p].value.ncols();
                    let slice = g.slice(s![.., offset..offset + cols]).to_owned();
                    Self::accumulate(&mut grads[p], slice);
                    offset += cols;
                }
            }
            Op::ColSlice { x, start, len } => {
                let mut gx = Array2::zeros(self.nodes[*x].value.raw_dim());
                gx.slice_mut(s![.., *start..*start + *len]).assign(g);
                Self::accumulate(&mut grads[*x], gx);
            }
            Op::SoftmaxRowsMasked { x, key_mask } => {
                let p = &self.nodes[id].value;
                let mut gx = Array2::zeros(p.raw_dim());
                for r in 0..p.nrows() {
                    let mut dot = 0.0;
                    for j in 0..p.ncols() {
                        if key_mask[j] {
                            dot += g[[r, j]] * p[[r, j]];
                        }
                    }
                    for j in 0..p.ncols() {
                        if key_mask[j] {
                            gx[[r, j]] = p[[r, j]] * (g[[r, j]] - dot);
                        }
                    }
                }
                Self::accumulate(&mut grads[*x], gx);
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let gv = &self.nodes[*gamma].value;
                let d = xhat.ncols() as f64;
                let mut gx = Array2::zeros(xhat.raw_dim());
                let mut ggamma = Array2::zeros((1, xhat.ncols()));
                let mut gbeta = Array2::zeros((1, xhat.ncols()));
                for r in 0..xhat.nrows() {
                    let mut sum_gy_g = 0.0; // sum_c g*gamma
                    let mut sum_gy_g_xh = 0.0; // sum_c g*gamma*xhat
                    for c in 0..xhat.ncols() {
                        let gy = g[[r, c]];
                        ggamma[[0, c]] += gy * xhat[[r, c]];
                        gbeta[[0, c]] += gy;
                        let gg = gy * gv[[0, c]];
                        sum_gy_g += gg;
                        sum_gy_g_xh += gg * xhat[[r, c]];
                    }
                    for c in 0..xhat.ncols() {
                        let gg = g[[r, c]] * gv[[0, c]];
                        gx[[r, c]] = inv_std[r]
                            * (gg - sum_gy_g / d - xhat[[r, c]] * sum_gy_g_xh / d);
                    }
                }
                Self::accumulate(&mut grads[*x], gx);
                Self::accumulate(&mut grads[*gamma], ggamma);
                Self::accumulate(&mut grads[*beta], gbeta);
            }
            Op::MaskedMeanRows { x, row_mask } => {
                let n = row_mask.iter().filter(|&&m| m).count();
                let mut gx = Array2::zeros(self.nodes[*x].value.raw_dim());
                if n > 0 {
                    for (r, &keep) in row_mask.iter().enumerate() {
                        if keep {
                            for c in 0..gx.ncols() {
                                gx[[r, c]] = g[[0, c]] / n as f64;
                            }
                        }
                    }
                }
                Self::accumulate(&mut grads[*x], gx);
            }
            Op::Gather { table, ids } => {
                let mut gt = Array2::zeros(self.nodes[*table].value.raw_dim());
                for (r, &tid) in ids.iter().enumerate() {
                    for c in 0..gt.ncols() {
                        gt[[tid, c]] += g[[r, c]];
                    }
                }
                Self::accumulate(&mut grads[*table], gt);
            }
            Op::Dropout { x, keep } => {
                Self::accumulate(&mut grads[*x], g * keep);
            }
            Op::SoftmaxCrossEntropy {
                logits,
                probs,
                gold,
            } => {
                let scale = g[[0, 0]];
                let mut gl = probs.clone();
                gl[[0, *gold]] -= 1.0;
                gl.mapv_inplace(|v| v * scale);
                Self::accumulate(&mut grads[*logits], gl);
            }
            Op::BceSum { logits, targets } => {
                let scale = g[[0, 0]];
                let z = &self.nodes[*logits].value;
                let mut gl = Array2::zeros(z.raw_dim());
                for (c, &t) in targets.iter().enumerate() {
                    let sig = 1.0 / (1.0 + (-z[[0, c]]).exp());
                    gl[[0, c]] = (sig - t) * scale;
                }
                Self::accumulate(&mut grads[*logits], gl);
            }
            Op::WeightedSum(x, w) => {
                let scale = g[[0, 0]];
                Self::accumulate(&mut grads[*x], w.mapv(|v| v * scale));
            }
        }
    }

    /// Indices and adjoints of every parameter leaf that received gradient.
    pub fn param_grads(
        &self,
        grads: &[Option<Array2<f64>>],
    ) -> Vec<(usize, Array2<f64>)> {
        let mut out = Vec::new();
        for (id, node) in self.nodes.iter().enumerate() {
            if let Op::Param(pidx) = node.op {
                if let Some(g) = &grads[id] {
                    out.push((pidx, g.clone()));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn randn(rng: &mut ChaCha20Rng, r: usize, c: usize) -> Array2<f64> {
        Array2::from_shape_fn((r, c), |_| rng.random_range(-1.0..1.0))
    }

    /// Central finite differences of `f` w.r.t. one input matrix.
    fn finite_diff(
        base: &Array2<f64>,
        mut f: impl FnMut(&Array2<f64>) -> f64,
    ) -> Array2<f64> {
        let h = 1e-5;
        let mut grad = Array2::zeros(base.raw_dim());
        for r in 0..base.nrows() {
            for c in 0..base.ncols() {
                let mut plus = base.clone();
                plus[[r, c]] += h;
                let mut minus = base.clone();
                minus[[r, c]] -= h;
                grad[[r, c]] = (f(&plus) - f(&minus)) / (2.0 * h);
            }
        }
        grad
    }

    fn assert_close(analytic: &Array2<f64>, numeric: &Array2<f64>, tol: f64, what: &str) {
        for (a, n) in analytic.iter().zip(numeric.iter()) {
            let denom = 1.0f64.max(n.abs());
            assert!(
                ((a - n) / denom).abs() < tol,
                "{what}: analytic {a} vs numeric {n}"
            );
        }
    }

    /// Gradient-check a single-input op through a weighted-sum loss.
    fn check_unary(
        name: &str,
        x0: Array2<f64>,
        build: impl Fn(&mut Tape, NodeId) -> NodeId,
    ) {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let mut tape = Tape::new();
        let x = tape.leaf(x0.clone());
        let y = build(&mut tape, x);
        let w = randn(&mut rng, tape.value(y).nrows(), tape.value(y).ncols());
        let loss = tape.weighted_sum(y, w.clone());
        let grads = tape.backward(loss);
        let analytic = grads[x].clone().unwrap();

        let numeric = finite_diff(&x0, |xv| {
            let mut t = Tape::new();
            let x = t.leaf(xv.clone());
            let y = build(&mut t, x);
            let loss = t.weighted_sum(y, w.clone());
            t.scalar(loss)
        });
        assert_close(&analytic, &numeric, 1e-6, name);
    }

    #[test]
    fn matmul_grads() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let a0 = randn(&mut rng, 3, 4);
        let b0 = randn(&mut rng, 4, 5);
        let w = randn(&mut rng, 3, 5);

        let mut tape = Tape::new();
        let a = tape.leaf(a0.clone());
        let b = tape.leaf(b0.clone());
        let y = tape.matmul(a, b);
        let loss = tape.weighted_sum(y, w.clone());
        let grads = tape.backward(loss);

        let na = finite_diff(&a0, |av| {
            let mut t = Tape::new();
            let a = t.leaf(av.clone());
            let b = t.leaf(b0.clone());
            let y = t.matmul(a, b);
            let l = t.weighted_sum(y, w.clone());
            t.scalar(l)
        });
        let nb = finite_diff(&b0, |bv| {
            let mut t = Tape::new();
            let a = t.leaf(a0.clone());
            let b = t.leaf(bv.clone());
            let y = t.matmul(a, b);
            let l = t.weighted_sum(y, w.clone());
            t.scalar(l)
        });
        assert_close(grads[a].as_ref().unwrap(), &na, 1e-6, "matmul/a");
        assert_close(grads[b].as_ref().unwrap(), &nb, 1e-6, "matmul/b");
    }

    #[test]
    fn matmul_nt_grads() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let a0 = randn(&mut rng, 3, 4);
        let b0 = randn(&mut rng, 5, 4);
        let w = randn(&mut rng, 3, 5);
        let mut tape = Tape::new();
        let a = tape.leaf(a0.clone());
        let b = tape.leaf(b0.clone());
        let y = tape.matmul_nt(a, b);
        let loss = tape.weighted_sum(y, w.clone());
        let grads = tape.backward(loss);
        let nb = finite_diff(&b0, |bv| {
            let mut t = Tape::new();
            let a = t.leaf(a0.clone());
            let b = t.leaf(bv.clone());
            let y = t.matmul_nt(a, b);
            let l = t.weighted_sum(y, w.clone());
            t.scalar(l)
        });
        assert_close(grads[b].as_ref().unwrap(), &nb, 1e-6, "matmul_nt/b");
    }

    #[test]
    fn broadcast_scale_concat_slice_grads() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let row0 = randn(&mut rng, 1, 4);
        check_unary("add_row_broadcast", randn(&mut rng, 3, 4), |t, x| {
            let row = t.leaf(row0.clone());
            t.add_row_broadcast(x, row)
        });
        check_unary("scale", randn(&mut rng, 2, 3), |t, x| t.scale(x, -2.5));
        let other = randn(&mut rng, 2, 4);
        check_unary("concat_rows", randn(&mut rng, 3, 4), |t, x| {
            let o = t.leaf(other.clone());
            t.concat_rows(&[x, o, x])
        });
        let other2 = randn(&mut rng, 3, 2);
        check_unary("concat_cols", randn(&mut rng, 3, 4), |t, x| {
            let o = t.leaf(other2.clone());
            t.concat_cols(&[o, x])
        });
        check_unary("col_slice", randn(&mut rng, 3, 6), |t, x| {
            t.col_slice(x, 2, 3)
        });
    }

    #[test]
    fn masked_softmax_grads_and_exact_zeros() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let mask = vec![true, false, true, true, false];
        let x0 = randn(&mut rng, 3, 5);
        {
            let mut t = Tape::new();
            let x = t.leaf(x0.clone());
            let y = t.softmax_rows_masked(x, &mask);
            let v = t.value(y);
            for r in 0..3 {
                assert_eq!(v[[r, 1]], 0.0);
                assert_eq!(v[[r, 4]], 0.0);
                let sum: f64 = (0..5).map(|j| v[[r, j]]).sum();
                assert!((sum - 1.0).abs() < 1e-12);
            }
        }
        let m = mask.clone();
        check_unary("softmax_rows_masked", x0, move |t, x| {
            t.softmax_rows_masked(x, &m)
        });
    }

    #[test]
    #[should_panic(expected = "all-masked")]
    fn softmax_rejects_all_masked() {
        let mut t = Tape::new();
        let x = t.leaf(Array2::zeros((1, 3)));
        t.softmax_rows_masked(x, &[false, false, false]);
    }

    #[test]
    fn layer_norm_grads_all_inputs() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let x0 = randn(&mut rng, 4, 6);
        let g0 = randn(&mut rng, 1, 6);
        let b0 = randn(&mut rng, 1, 6);
        let w = randn(&mut rng, 4, 6);

        let run = |xv: &Array2<f64>, gv: &Array2<f64>, bv: &Array2<f64>| {
            let mut t = Tape::new();
            let x = t.leaf(xv.clone());
            let g = t.leaf(gv.clone());
            let b = t.leaf(bv.clone());
            let y = t.layer_norm(x, g, b);
            let l = t.weighted_sum(y, w.clone());
            t.scalar(l)
        };

        let mut tape = Tape::new();
        let x = tape.leaf(x0.clone());
        let g = tape.leaf(g0.clone());
        let b = tape.leaf(b0.clone());
        let y = tape.layer_norm(x, g, b);
        let loss = tape.weighted_sum(y, w.clone());
        let grads = tape.backward(loss);

        let nx = finite_diff(&x0, |v| run(v, &g0, &b0));
        let ng = finite_diff(&g0, |v| run(&x0, v, &b0));
        let nb = finite_diff(&b0, |v| run(&x0, &g0, v));
        assert_close(grads[x].as_ref().unwrap(), &nx, 1e-5, "ln/x");
        assert_close(grads[g].as_ref().unwrap(), &ng, 1e-6, "ln/gamma");
        assert_close(grads[b].as_ref().unwrap(), &nb, 1e-6, "ln/beta");
    }

    #[test]
    fn masked_mean_grads_and_all_masked_zeros() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let mask = vec![true, false, true];
        let m = mask.clone();
        check_unary("masked_mean_rows", randn(&mut rng, 3, 4), move |t, x| {
            t.masked_mean_rows(x, &m)
        });
        let mut t = Tape::new();
        let x = t.leaf(randn(&mut rng, 2, 3));
        let y = t.masked_mean_rows(x, &[false, false]);
        assert!(t.value(y).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gather_scatter_adds_repeated_ids() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let table0 = randn(&mut rng, 5, 3);
        let ids = vec![2usize, 0, 2, 4];
        let w = randn(&mut rng, 4, 3);
        let mut tape = Tape::new();
        let table = tape.leaf(table0.clone());
        let y = tape.gather(table, &ids);
        let loss = tape.weighted_sum(y, w.clone());
        let grads = tape.backward(loss);
        let numeric = finite_diff(&table0, |tv| {
            let mut t = Tape::new();
            let table = t.leaf(tv.clone());
            let y = t.gather(table, &ids);
            let l = t.weighted_sum(y, w.clone());
            t.scalar(l)
        });
        assert_close(grads[table].as_ref().unwrap(), &numeric, 1e-6, "gather");
        // row 2 was selected twice: its grad is the sum of both output rows
        let gt = grads[table].as_ref().unwrap();
        for c in 0..3 {
            assert!((gt[[2, c]] - (w[[0, c]] + w[[2, c]])).abs() < 1e-12);
        }
        // unselected rows get exactly zero
        for c in 0..3 {
            assert_eq!(gt[[1, c]], 0.0);
            assert_eq!(gt[[3, c]], 0.0);
        }
    }

    #[test]
    fn dropout_grads_follow_keep_pattern() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let p = 0.5;
        let keep0 = Array2::from_shape_fn((3, 4), |_| {
            if rng.random_range(0.0..1.0) < p {
                0.0
            } else {
                1.0 / (1.0 - p)
            }
        });
        let k = keep0.clone();
        check_unary("dropout", randn(&mut rng, 3, 4), move |t, x| {
            t.dropout(x, k.clone())
        });
    }

    #[test]
    fn softmax_cross_entropy_grad_and_value() {
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let z0 = randn(&mut rng, 1, 4);
        let mut tape = Tape::new();
        let z = tape.leaf(z0.clone());
        let loss = tape.softmax_cross_entropy(z, 2);
        let grads = tape.backward(loss);
        let numeric = finite_diff(&z0, |zv| {
            let mut t = Tape::new();
            let z = t.leaf(zv.clone());
            let l = t.softmax_cross_entropy(z, 2);
            t.scalar(l)
        });
        assert_close(grads[z].as_ref().unwrap(), &numeric, 1e-6, "ce");
        // analytic value: -log softmax[2]
        let probs = softmax_sorted(&z0.row(0).to_vec());
        assert!((tape.scalar(loss) + probs[2].ln()).abs() < 1e-12);
    }

    #[test]
    fn bce_sum_grad_and_analytic_midpoint() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let z0 = randn(&mut rng, 1, 4);
        let targets = vec![1.0, 0.0, 1.0, 0.0];
        let t2 = targets.clone();
        let mut tape = Tape::new();
        let z = tape.leaf(z0.clone());
        let loss = tape.bce_with_logits_sum(z, &targets);
        let grads = tape.backward(loss);
        let numeric = finite_diff(&z0, |zv| {
            let mut t = Tape::new();
            let z = t.leaf(zv.clone());
            let l = t.bce_with_logits_sum(z, &t2);
            t.scalar(l)
        });
        assert_close(grads[z].as_ref().unwrap(), &numeric, 1e-6, "bce");
        // all-zero logits = scores 0.5 -> loss is 4 ln 2
        let mut tape = Tape::new();
        let z = tape.leaf(Array2::zeros((1, 4)));
        let loss = tape.bce_with_logits_sum(z, &targets);
        assert!((tape.scalar(loss) - 4.0 * std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn sorted_softmax_is_exactly_permutation_equivariant() {
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        for _ in 0..200 {
            let z: Vec<f64> = (0..4).map(|_| rng.random_range(-5.0..5.0)).collect();
            let p = softmax_sorted(&z);
            let perm = [2usize, 0, 3, 1];
            let zp: Vec<f64> = perm.iter().map(|&i| z[i]).collect();
            let pp = softmax_sorted(&zp);
            for (k, &i) in perm.iter().enumerate() {
                assert_eq!(p[i].to_bits(), pp[k].to_bits());
            }
            let sum: f64 = p.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn grad_flows_through_shared_subexpressions() {
        // y = x·x (same node used twice) exercises adjoint accumulation
        let x0 = Array2::from_shape_vec((2, 2), vec![0.5, -1.0, 2.0, 0.25]).unwrap();
        let w = Array2::from_elem((2, 2), 1.0);
        let mut tape = Tape::new();
        let x = tape.leaf(x0.clone());
        let y = tape.matmul(x, x);
        let loss = tape.weighted_sum(y, w.clone());
        let grads = tape.backward(loss);
        let numeric = finite_diff(&x0, |xv| {
            let mut t = Tape::new();
            let x = t.leaf(xv.clone());
            let y = t.matmul(x, x);
            let l = t.weighted_sum(y, w.clone());
            t.scalar(l)
        });
        assert_close(grads[x].as_ref().unwrap(), &numeric, 1e-6, "shared");
    }
}
