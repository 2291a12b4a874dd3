//! Trainable-parameter plumbing shared by the reasoner and the personality
//! predictor: a named parameter store with two learning-rate groups, Adam,
//! deterministic initialization, the standard attention block (scaled
//! dot-product, multi-head, residual + post-layer-norm), and a versioned
//! binary checkpoint container.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::autodiff::{NodeId, Tape};
use crate::error::{Error, Result};

/// Which learning rate a parameter follows: the feature-fusion linear maps
/// (the per-modality score heads) train fast, everything else slow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrGroup {
    FusionLinear,
    Rest,
}

pub struct Param {
    pub name: String,
    pub value: Array2<f64>,
    pub grad: Array2<f64>,
    m: Array2<f64>,
    v: Array2<f64>,
    pub group: LrGroup,
    /// Row 0 is pinned to zero (embedding pad row).
    pub freeze_row0: bool,
}

/// All trainable state of one model plus Adam moments.
#[derive(Default)]
pub struct ParamStore {
    params: Vec<Param>,
    by_name: HashMap<String, usize>,
    step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn register(&mut self, name: &str, value: Array2<f64>, group: LrGroup) -> usize {
        self.register_full(name, value, group, false)
    }

    pub fn register_full(
        &mut self,
        name: &str,
        mut value: Array2<f64>,
        group: LrGroup,
        freeze_row0: bool,
    ) -> usize {
        assert!(
            !self.by_name.contains_key(name),
            "duplicate parameter {name}"
        );
        if freeze_row0 {
            value.row_mut(0).fill(0.0);
        }
        let dim = value.raw_dim();
        let idx = self.params.len();
        self.params.push(Param {
            name: name.to_string(),
            value,
            grad: Array2::zeros(dim.clone()),
            m: Array2::zeros(dim.clone()),
            v: Array2::zeros(dim),
            group,
            freeze_row0,
        });
        self.by_name.insert(name.to_string(), idx);
        idx
    }

    pub fn index(&self, name: &str) -> Result<usize> {
        self.by_name
            .get(name)
            .copied()
            .ok_or_else(|| Error::Checkpoint(format!("parameter {name} missing")))
    }

    /// Moves a parameter to a different learning-rate group.
    pub fn set_group(&mut self, name: &str, group: LrGroup) -> Result<()> {
        let idx = self.index(name)?;
        self.params[idx].group = group;
        Ok(())
    }

    /// Scalar counts per learning-rate group as (fusion, rest).
    pub fn group_counts(&self) -> (usize, usize) {
        let mut fusion = 0;
        let mut rest = 0;
        for p in &self.params {
            match p.group {
                LrGroup::FusionLinear => fusion += p.value.len(),
                LrGroup::Rest => rest += p.value.len(),
            }
        }
        (fusion, rest)
    }

    pub fn get(&self, idx: usize) -> &Param {
        &self.params[idx]
    }

    pub fn get_mut(&mut self, idx: usize) -> &mut Param {
        &mut self.params[idx]
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    /// Total number of trainable scalars (frozen pad row excluded).
    pub fn scalar_count(&self) -> usize {
        self.params
            .iter()
            .map(|p| p.value.len() - if p.freeze_row0 { p.value.ncols() } else { 0 })
            .sum()
    }

    /// Put this parameter's current value on a tape as a trainable leaf.
    pub fn bind(&self, tape: &mut Tape, idx: usize) -> NodeId {
        tape.param(idx, self.params[idx].value.clone())
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    /// Accumulate `scale *` the tape's parameter adjoints into stored grads.
    pub fn accumulate_scaled(
        &mut self,
        tape: &Tape,
        grads: &[Option<Array2<f64>>],
        scale: f64,
    ) {
        for (idx, g) in tape.param_grads(grads) {
            self.params[idx].grad.scaled_add(scale, &g);
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.params
            .iter()
            .map(|p| p.grad.iter().map(|g| g * g).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    /// One Adam update. `lr_mult` carries the warmup schedule.
    pub fn adam_step(&mut self, lr_fusion: f64, lr_rest: f64, lr_mult: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - B1.powi(t);
        let bc2 = 1.0 - B2.powi(t);
        for p in &mut self.params {
            if p.freeze_row0 {
                p.grad.row_mut(0).fill(0.0);
            }
            let lr = match p.group {
                LrGroup::FusionLinear => lr_fusion,
                LrGroup::Rest => lr_rest,
            } * lr_mult;
            azip_update(&mut p.m, &p.grad, |m, g| B1 * m + (1.0 - B1) * g);
            azip_update(&mut p.v, &p.grad, |v, g| B2 * v + (1.0 - B2) * g * g);
            for ((val, &m), &v) in p.value.iter_mut().zip(p.m.iter()).zip(p.v.iter()) {
                let mhat = m / bc1;
                let vhat = v / bc2;
                *val -= lr * mhat / (vhat.sqrt() + EPS);
            }
            if p.freeze_row0 {
                p.value.row_mut(0).fill(0.0);
            }
        }
    }

    pub fn optimizer_step_count(&self) -> u64 {
        self.step
    }

    /// Snapshot of all values (for best-epoch restore).
    pub fn snapshot(&self) -> Vec<Array2<f64>> {
        self.params.iter().map(|p| p.value.clone()).collect()
    }

    pub fn restore(&mut self, snapshot: &[Array2<f64>]) {
        assert_eq!(snapshot.len(), self.params.len());
        for (p, s) in self.params.iter_mut().zip(snapshot) {
            p.value.assign(s);
        }
    }
}

fn azip_update(dst: &mut Array2<f64>, src: &Array2<f64>, f: impl Fn(f64, f64) -> f64) {
    for (d, &s) in dst.iter_mut().zip(src.iter()) {
        *d = f(*d, s);
    }
}

/// Uniform Xavier/Glorot initialization.
pub fn xavier(rng: &mut ChaCha20Rng, rows: usize, cols: usize) -> Array2<f64> {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-a..a))
}

/// Embedding initialization: uniform with variance 1/d; the caller freezes
/// row 0 to zero via `register_full`.
pub fn embedding_init(rng: &mut ChaCha20Rng, n: usize, d: usize) -> Array2<f64> {
    let a = (3.0 / d as f64).sqrt();
    Array2::from_shape_fn((n, d), |_| rng.random_range(-a..a))
}

/// Dropout driver owned by the training loop: inactive (or p = 0) means
/// every `apply` is the identity and adds nothing to the tape.
pub struct DropoutState {
    pub p: f64,
    rng: ChaCha20Rng,
    active: bool,
}

impl DropoutState {
    pub fn off() -> Self {
        DropoutState {
            p: 0.0,
            rng: ChaCha20Rng::seed_from_u64(0),
            active: false,
        }
    }

    pub fn new(p: f64, seed: u64) -> Self {
        DropoutState {
            p,
            rng: ChaCha20Rng::seed_from_u64(seed),
            active: p > 0.0,
        }
    }

    pub fn apply(&mut self, tape: &mut Tape, x: NodeId) -> NodeId {
        if !self.active || self.p == 0.0 {
            return x;
        }
        let shape = tape.value(x).raw_dim();
        let keep = Array2::from_shape_fn(shape, |_| {
            if self.rng.random_range(0.0..1.0) < self.p {
                0.0
            } else {
                1.0 / (1.0 - self.p)
            }
        });
        tape.dropout(x, keep)
    }
}

/// A trainable affine map `x · W + b`.
pub struct Linear {
    pub w: usize,
    pub b: usize,
}

impl Linear {
    pub fn register(
        store: &mut ParamStore,
        prefix: &str,
        d_in: usize,
        d_out: usize,
        group: LrGroup,
        rng: &mut ChaCha20Rng,
    ) -> Self {
        Linear {
            w: store.register(&format!("{prefix}.w"), xavier(rng, d_in, d_out), group),
            b: store.register(&format!("{prefix}.b"), Array2::zeros((1, d_out)), group),
        }
    }

    /// Zero-initialized variant: the map outputs exactly zero until trained,
    /// which makes untrained score heads produce uniform answer
    /// distributions and untrained sigmoid heads produce 0.5.
    pub fn register_zeroed(
        store: &mut ParamStore,
        prefix: &str,
        d_in: usize,
        d_out: usize,
        group: LrGroup,
    ) -> Self {
        Linear {
            w: store.register(&format!("{prefix}.w"), Array2::zeros((d_in, d_out)), group),
            b: store.register(&format!("{prefix}.b"), Array2::zeros((1, d_out)), group),
        }
    }

    pub fn bind(store: &ParamStore, prefix: &str) -> Result<Self> {
        Ok(Linear {
            w: store.index(&format!("{prefix}.w"))?,
            b: store.index(&format!("{prefix}.b"))?,
        })
    }

    pub fn apply(&self, tape: &mut Tape, store: &ParamStore, x: NodeId) -> NodeId {
        let w = store.bind(tape, self.w);
        let b = store.bind(tape, self.b);
        let xw = tape.matmul(x, w);
        tape.add_row_broadcast(xw, b)
    }
}

/// One attention block: multi-head scaled dot-product attention with
/// trainable query/key/value/output maps, followed by a residual connection
/// from the query and layer normalization.
pub struct AttentionBlock {
    pub wq: usize,
    pub bq: usize,
    pub wk: usize,
    pub bk: usize,
    pub wv: usize,
    pub bv: usize,
    pub wo: usize,
    pub bo: usize,
    pub ln_g: usize,
    pub ln_b: usize,
    pub d: usize,
    pub h: usize,
}

impl AttentionBlock {
    pub fn register(
        store: &mut ParamStore,
        prefix: &str,
        d: usize,
        h: usize,
        rng: &mut ChaCha20Rng,
    ) -> Self {
        assert!(h > 0 && d % h == 0, "width {d} must divide into {h} heads");
        let lin = |suffix: &str, store: &mut ParamStore, rng: &mut ChaCha20Rng| {
            (
                store.register(&format!("{prefix}.{suffix}.w"), xavier(rng, d, d), LrGroup::Rest),
                store.register(&format!("{prefix}.{suffix}.b"), Array2::zeros((1, d)), LrGroup::Rest),
            )
        };
        let (wq, bq) = lin("q", store, rng);
        let (wk, bk) = lin("k", store, rng);
        let (wv, bv) = lin("v", store, rng);
        let (wo, bo) = lin("o", store, rng);
        let ln_g = store.register(&format!("{prefix}.ln.g"), Array2::ones((1, d)), LrGroup::Rest);
        let ln_b = store.register(&format!("{prefix}.ln.b"), Array2::zeros((1, d)), LrGroup::Rest);
        AttentionBlock {
            wq,
            bq,
            wk,
            bk,
            wv,
            bv,
            wo,
            bo,
            ln_g,
            ln_b,
            d,
            h,
        }
    }

    pub fn bind(store: &ParamStore, prefix: &str, d: usize, h: usize) -> Result<Self> {
        let f = |s: &str| store.index(&format!("{prefix}.{s}"));
        Ok(AttentionBlock {
            wq: f("q.w")?,
            bq: f("q.b")?,
            wk: f("k.w")?,
            bk: f("k.b")?,
            wv: f("v.w")?,
            bv: f("v.b")?,
            wo: f("o.w")?,
            bo: f("o.b")?,
            ln_g: f("ln.g")?,
            ln_b: f("ln.b")?,
            d,
            h,
        })
    }

    /// `query` and `kv` are `rows x d`; `key_mask` marks real kv rows and
    /// must contain at least one true entry (callers handle the all-masked
    /// fallback). Returns `LN(query + MultiHead(query, kv, kv))`.
    pub fn apply(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        query: NodeId,
        kv: NodeId,
        key_mask: &[bool],
        dropout: &mut DropoutState,
    ) -> NodeId {
        let dh = self.d / self.h;
        let bind = |t: &mut Tape, w, b| (store.bind(t, w), store.bind(t, b));
        let (wq, bq) = bind(tape, self.wq, self.bq);
        let (wk, bk) = bind(tape, self.wk, self.bk);
        let (wv, bv) = bind(tape, self.wv, self.bv);
        let q = {
            let m = tape.matmul(query, wq);
            tape.add_row_broadcast(m, bq)
        };
        let k = {
            let m = tape.matmul(kv, wk);
            tape.add_row_broadcast(m, bk)
        };
        let v = {
            let m = tape.matmul(kv, wv);
            tape.add_row_broadcast(m, bv)
        };
        let mut heads = Vec::with_capacity(self.h);
        for i in 0..self.h {
            let qh = tape.col_slice(q, i * dh, dh);
            let kh = tape.col_slice(k, i * dh, dh);
            let vh = tape.col_slice(v, i * dh, dh);
            let scores = tape.matmul_nt(qh, kh);
            let scaled = tape.scale(scores, 1.0 / (dh as f64).sqrt());
            let probs = tape.softmax_rows_masked(scaled, key_mask);
            let probs = dropout.apply(tape, probs);
            heads.push(tape.matmul(probs, vh));
        }
        let ctx = tape.concat_cols(&heads);
        let (wo, bo) = bind(tape, self.wo, self.bo);
        let out = {
            let m = tape.matmul(ctx, wo);
            tape.add_row_broadcast(m, bo)
        };
        let res = tape.add(query, out);
        let (g, b) = bind(tape, self.ln_g, self.ln_b);
        tape.layer_norm(res, g, b)
    }
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"PRMCKPT1";

/// Save every parameter (name, group, freeze flag, shape, f64 LE values)
/// together with an arbitrary JSON config blob.
pub fn save_checkpoint(path: &Path, store: &ParamStore, config_json: &str) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&1u32.to_le_bytes())?;
    let cfg = config_json.as_bytes();
    w.write_all(&(cfg.len() as u32).to_le_bytes())?;
    w.write_all(cfg)?;
    w.write_all(&(store.len() as u32).to_le_bytes())?;
    for p in store.iter() {
        w.write_all(&(p.name.len() as u32).to_le_bytes())?;
        w.write_all(p.name.as_bytes())?;
        w.write_all(&[match p.group {
            LrGroup::FusionLinear => 1u8,
            LrGroup::Rest => 0u8,
        }])?;
        w.write_all(&[p.freeze_row0 as u8])?;
        w.write_all(&(p.value.nrows() as u32).to_le_bytes())?;
        w.write_all(&(p.value.ncols() as u32).to_le_bytes())?;
        for &x in p.value.iter() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Load a checkpoint; returns the config blob and a fresh store (optimizer
/// moments start at zero — checkpoints carry weights, not training state).
pub fn load_checkpoint(path: &Path) -> Result<(String, ParamStore)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)?;
    let version = u32::from_le_bytes(u32buf);
    if version != 1 {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    r.read_exact(&mut u32buf)?;
    let cfg_len = u32::from_le_bytes(u32buf) as usize;
    let mut cfg = vec![0u8; cfg_len];
    r.read_exact(&mut cfg)?;
    let config_json = String::from_utf8(cfg)
        .map_err(|_| Error::Checkpoint("config blob is not UTF-8".into()))?;
    r.read_exact(&mut u32buf)?;
    let n_params = u32::from_le_bytes(u32buf) as usize;
    let mut store = ParamStore::new();
    for _ in 0..n_params {
        r.read_exact(&mut u32buf)?;
        let name_len = u32::from_le_bytes(u32buf) as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?;
        let mut flags = [0u8; 2];
        r.read_exact(&mut flags)?;
        let group = if flags[0] == 1 {
            LrGroup::FusionLinear
        } else {
            LrGroup::Rest
        };
        r.read_exact(&mut u32buf)?;
        let rows = u32::from_le_bytes(u32buf) as usize;
        r.read_exact(&mut u32buf)?;
        let cols = u32::from_le_bytes(u32buf) as usize;
        let mut value = Array2::zeros((rows, cols));
        let mut f64buf = [0u8; 8];
        for x in value.iter_mut() {
            r.read_exact(&mut f64buf)?;
            *x = f64::from_le_bytes(f64buf);
        }
        store.register_full(&name, value, group, flags[1] == 1);
    }
    Ok((config_json, store))
}
