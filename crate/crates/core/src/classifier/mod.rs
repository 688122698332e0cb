//! TrajFormer: a one-layer encoder/decoder attention classifier over a
//! track's most recent observations.
//!
//! Forward pass for a window `o_1..o_L` (oldest first):
//!
//! 1. positions are made relative to `o_1`, then every feature is
//!    standardised with the mean/std stored in the weights,
//! 2. `h_i = W_in o_i + b_in + pos_i`,
//! 3. encoder (pre-norm): `a = h + MHA(LN1 h, LN1 h)`, `e = a + FFN(LN2 a)`,
//! 4. decoder with the single query `q = h_L`:
//!    `d = q + MHA(LN1 q, e)`, `u = d + FFN(LN2 d)`,
//! 5. `softmax(W_head u + b_head)` gives `(p_false, p_true)`.
//!
//! All arithmetic is f32.

pub mod weights;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::read_jsonl;
use crate::tracker::{Track, TrackStatus, TrackVerifier};
pub use weights::{Hyper, TensorFile};

const LN_EPS: f32 = 1e-5;

/// Exactly L observations `(x, y, z, v_d, snr, scr, nl, sp, rp)`, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajWindow(Vec<[f64; 9]>);

impl TrajWindow {
    pub fn new(obs: Vec<[f64; 9]>, expected: usize) -> Result<Self> {
        if obs.len() != expected {
            return Err(Error::WindowLength {
                expected,
                got: obs.len(),
            });
        }
        Ok(Self(obs))
    }

    pub fn observations(&self) -> &[[f64; 9]] {
        &self.0
    }

    /// The newest `len` entries of a track history.
    pub fn from_track(track: &Track, len: usize) -> Result<Self> {
        let h = &track.history;
        if h.len() < len {
            return Err(Error::WindowLength {
                expected: len,
                got: h.len(),
            });
        }
        Ok(Self(h.iter().skip(h.len() - len).copied().collect()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub p_true: f64,
    pub p_false: f64,
}

impl Verdict {
    pub fn is_true(&self) -> bool {
        self.p_true > 0.5
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Linear {
    out: usize,
    inp: usize,
    w: Vec<f32>,
    b: Vec<f32>,
}

impl Linear {
    fn apply(&self, x: &[f32], y: &mut [f32]) {
        for (o, yo) in y.iter_mut().enumerate() {
            let row = &self.w[o * self.inp..(o + 1) * self.inp];
            let mut acc = self.b[o];
            for (wi, xi) in row.iter().zip(x) {
                acc += wi * xi;
            }
            *yo = acc;
        }
    }

    fn take(f: &mut TensorFile, w: &str, b: &str, out: usize, inp: usize) -> Result<Self> {
        Ok(Self {
            out,
            inp,
            w: f.take(w, &[out, inp])?,
            b: f.take(b, &[out])?,
        })
    }

    fn put(&self, f: &mut TensorFile, w: &str, b: &str) {
        f.tensors.insert(w.into(), (vec![self.out, self.inp], self.w.clone()));
        f.tensors.insert(b.into(), (vec![self.out], self.b.clone()));
    }
}

#[derive(Debug, Clone, PartialEq)]
struct LayerNorm {
    gain: Vec<f32>,
    bias: Vec<f32>,
}

impl LayerNorm {
    fn apply(&self, x: &[f32], y: &mut [f32]) {
        let n = x.len() as f32;
        let mean = x.iter().sum::<f32>() / n;
        let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / n;
        let inv = 1.0 / (var + LN_EPS).sqrt();
        for i in 0..x.len() {
            y[i] = (x[i] - mean) * inv * self.gain[i] + self.bias[i];
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Block {
    ln1: LayerNorm,
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    ln2: LayerNorm,
    w1: Linear,
    w2: Linear,
}

impl Block {
    fn take(f: &mut TensorFile, p: &str, h: &Hyper) -> Result<Self> {
        let d = h.d_model;
        let mut ln = |name: &str| -> Result<LayerNorm> {
            Ok(LayerNorm {
                gain: f.take(&format!("{p}.{name}.gain"), &[d])?,
                bias: f.take(&format!("{p}.{name}.bias"), &[d])?,
            })
        };
        let ln1 = ln("ln1")?;
        let ln2 = ln("ln2")?;
        let mut proj = |n: &str| Linear::take(f, &format!("{p}.attn.{n}.weight"), &format!("{p}.attn.{n}.bias"), d, d);
        let q = proj("q")?;
        let k = proj("k")?;
        let v = proj("v")?;
        let o = proj("o")?;
        let w1 = Linear::take(f, &format!("{p}.ffn.w1"), &format!("{p}.ffn.b1"), h.ffn_dim, d)?;
        let w2 = Linear::take(f, &format!("{p}.ffn.w2"), &format!("{p}.ffn.b2"), d, h.ffn_dim)?;
        Ok(Self { ln1, q, k, v, o, ln2, w1, w2 })
    }

    fn put(&self, f: &mut TensorFile, p: &str) {
        let d = self.ln1.gain.len();
        for (name, ln) in [("ln1", &self.ln1), ("ln2", &self.ln2)] {
            f.tensors.insert(format!("{p}.{name}.gain"), (vec![d], ln.gain.clone()));
            f.tensors.insert(format!("{p}.{name}.bias"), (vec![d], ln.bias.clone()));
        }
        for (n, l) in [("q", &self.q), ("k", &self.k), ("v", &self.v), ("o", &self.o)] {
            l.put(f, &format!("{p}.attn.{n}.weight"), &format!("{p}.attn.{n}.bias"));
        }
        self.w1.put(f, &format!("{p}.ffn.w1"), &format!("{p}.ffn.b1"));
        self.w2.put(f, &format!("{p}.ffn.w2"), &format!("{p}.ffn.b2"));
    }

    /// Multi-head attention of `queries` over `memory`, returning the output
    /// rows and the attention weights `[head][query][key]`.
    fn attend(&self, queries: &[Vec<f32>], memory: &[Vec<f32>], heads: usize) -> (Vec<Vec<f32>>, Vec<Vec<Vec<f32>>>) {
        let d = self.q.out;
        let dh = d / heads;
        let scale = 1.0 / (dh as f32).sqrt();
        let project = |l: &Linear, rows: &[Vec<f32>]| -> Vec<Vec<f32>> {
            rows.iter()
                .map(|r| {
                    let mut y = vec![0.0; d];
                    l.apply(r, &mut y);
                    y
                })
                .collect()
        };
        let qs = project(&self.q, queries);
        let ks = project(&self.k, memory);
        let vs = project(&self.v, memory);
        let mut concat = vec![vec![0.0f32; d]; queries.len()];
        let mut att = vec![vec![Vec::new(); queries.len()]; heads];
        for h in 0..heads {
            let r = h * dh..(h + 1) * dh;
            for (qi, q) in qs.iter().enumerate() {
                let scores: Vec<f32> = ks
                    .iter()
                    .map(|k| q[r.clone()].iter().zip(&k[r.clone()]).map(|(a, b)| a * b).sum::<f32>() * scale)
                    .collect();
                let top = scores.iter().copied().fold(f32::NEG_INFINITY, f32::max);
                let ex: Vec<f32> = scores.iter().map(|s| (s - top).exp()).collect();
                let z: f32 = ex.iter().sum();
                let w: Vec<f32> = ex.iter().map(|e| e / z).collect();
                for (wk, v) in w.iter().zip(&vs) {
                    for (c, vv) in concat[qi][r.clone()].iter_mut().zip(&v[r.clone()]) {
                        *c += wk * vv;
                    }
                }
                att[h][qi] = w;
            }
        }
        let out = project(&self.o, &concat);
        (out, att)
    }

    fn ffn(&self, x: &[f32]) -> Vec<f32> {
        let mut hidden = vec![0.0; self.w1.out];
        self.w1.apply(x, &mut hidden);
        for v in &mut hidden {
            *v = v.max(0.0);
        }
        let mut y = vec![0.0; self.w2.out];
        self.w2.apply(&hidden, &mut y);
        y
    }

    fn norm_rows(ln: &LayerNorm, rows: &[Vec<f32>]) -> Vec<Vec<f32>> {
        rows.iter()
            .map(|r| {
                let mut y = vec![0.0; r.len()];
                ln.apply(r, &mut y);
                y
            })
            .collect()
    }

    /// Pre-norm residual block; `memory = None` means self-attention.
    fn run(&self, x: &[Vec<f32>], memory: Option<&[Vec<f32>]>, heads: usize) -> (Vec<Vec<f32>>, Vec<Vec<Vec<f32>>>) {
        let nx = Self::norm_rows(&self.ln1, x);
        let (a, att) = match memory {
            Some(m) => self.attend(&nx, m, heads),
            None => self.attend(&nx, &nx, heads),
        };
        let mut out: Vec<Vec<f32>> = x
            .iter()
            .zip(&a)
            .map(|(xi, ai)| xi.iter().zip(ai).map(|(p, q)| p + q).collect())
            .collect();
        for row in &mut out {
            let mut n = vec![0.0; row.len()];
            self.ln2.apply(row, &mut n);
            for (r, f) in row.iter_mut().zip(self.ffn(&n)) {
                *r += f;
            }
        }
        (out, att)
    }
}

/// Loaded, shape-checked model. Immutable; `forward` is pure.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajFormer {
    pub hyper: Hyper,
    mean: Vec<f32>,
    std: Vec<f32>,
    input: Linear,
    pos: Vec<f32>,
    enc: Block,
    dec: Block,
    head: Linear,
}

/// Attention weights from one forward pass, for inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionTrace {
    /// `[head][query][key]` for the encoder self-attention.
    pub encoder: Vec<Vec<Vec<f32>>>,
    /// `[head][0][key]` for the decoder cross-attention.
    pub decoder: Vec<Vec<Vec<f32>>>,
}

impl TrajFormer {
    pub fn from_tensors(mut f: TensorFile) -> Result<Self> {
        let h = f.hyper;
        h.validate()?;
        let (d, n) = (h.d_model, h.features);
        let mean = f.take("norm.mean", &[n])?;
        let std = f.take("norm.std", &[n])?;
        if std.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Weights {
                tensor: "norm.std".into(),
                message: "standard deviations must be positive".into(),
            });
        }
        let input = Linear::take(&mut f, "input.weight", "input.bias", d, n)?;
        let pos = f.take("pos_embedding", &[h.window, d])?;
        let enc = Block::take(&mut f, "enc", &h)?;
        let dec = Block::take(&mut f, "dec", &h)?;
        let head = Linear::take(&mut f, "head.weight", "head.bias", 2, d)?;
        if let Some(extra) = f.tensors.keys().min() {
            return Err(Error::Weights {
                tensor: extra.clone(),
                message: "unexpected tensor".into(),
            });
        }
        Ok(Self {
            hyper: h,
            mean,
            std,
            input,
            pos,
            enc,
            dec,
            head,
        })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::from_tensors(TensorFile::parse(bytes)?)
    }

    pub fn to_tensors(&self) -> TensorFile {
        let mut f = TensorFile {
            hyper: self.hyper,
            tensors: Default::default(),
        };
        let (d, n) = (self.hyper.d_model, self.hyper.features);
        f.tensors.insert("norm.mean".into(), (vec![n], self.mean.clone()));
        f.tensors.insert("norm.std".into(), (vec![n], self.std.clone()));
        self.input.put(&mut f, "input.weight", "input.bias");
        f.tensors.insert("pos_embedding".into(), (vec![self.hyper.window, d], self.pos.clone()));
        self.enc.put(&mut f, "enc");
        self.dec.put(&mut f, "dec");
        self.head.put(&mut f, "head.weight", "head.bias");
        f
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let order: Vec<String> = self.hyper.expected_tensors().into_iter().map(|t| t.0).collect();
        self.to_tensors().to_bytes(&order)
    }

    /// Deterministic pseudo-random weights, mainly for tests and demos.
    pub fn seeded(hyper: Hyper, seed: u64) -> Result<Self> {
        use rand::{RngExt, SeedableRng};
        hyper.validate()?;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut f = TensorFile {
            hyper,
            tensors: Default::default(),
        };
        for (name, shape) in hyper.expected_tensors() {
            let count: usize = shape.iter().product();
            let fan_in = *shape.last().unwrap_or(&1) as f32;
            let data: Vec<f32> = if name.ends_with(".gain") || name == "norm.std" {
                vec![1.0; count]
            } else if name == "norm.mean" || name.ends_with(".bias") && name.contains(".ln") {
                vec![0.0; count]
            } else {
                let s = 1.0 / fan_in.sqrt();
                (0..count).map(|_| rng.random_range(-s..s)).collect()
            };
            f.tensors.insert(name, (shape, data));
        }
        Self::from_tensors(f)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_tensors(TensorFile::read(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    /// Standardised f32 features for a window.
    pub fn preprocess(&self, window: &TrajWindow) -> Vec<Vec<f32>> {
        let first = window.0[0];
        window
            .0
            .iter()
            .map(|o| {
                (0..9)
                    .map(|j| {
                        let raw = if j < 3 { o[j] - first[j] } else { o[j] };
                        (raw as f32 - self.mean[j]) / self.std[j]
                    })
                    .collect()
            })
            .collect()
    }

    fn logits(&self, window: &TrajWindow) -> Result<([f32; 2], AttentionTrace)> {
        let l = self.hyper.window;
        if window.0.len() != l {
            return Err(Error::WindowLength {
                expected: l,
                got: window.0.len(),
            });
        }
        let d = self.hyper.d_model;
        let feats = self.preprocess(window);
        let h: Vec<Vec<f32>> = feats
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let mut y = vec![0.0; d];
                self.input.apply(x, &mut y);
                for (yv, p) in y.iter_mut().zip(&self.pos[i * d..(i + 1) * d]) {
                    *yv += p;
                }
                y
            })
            .collect();
        let (e, enc_att) = self.enc.run(&h, None, self.hyper.n_heads);
        let q = vec![h[l - 1].clone()];
        let (u, dec_att) = self.dec.run(&q, Some(&e), self.hyper.n_heads);
        let mut logits = [0.0f32; 2];
        self.head.apply(&u[0], &mut logits);
        Ok((
            logits,
            AttentionTrace {
                encoder: enc_att,
                decoder: dec_att,
            },
        ))
    }

    pub fn forward(&self, window: &TrajWindow) -> Result<Verdict> {
        Ok(softmax_verdict(self.logits(window)?.0))
    }

    /// Forward pass that also returns the attention weights.
    pub fn forward_debug(&self, window: &TrajWindow) -> Result<(Verdict, AttentionTrace)> {
        let (l, t) = self.logits(window)?;
        Ok((softmax_verdict(l), t))
    }
}

fn softmax_verdict(logits: [f32; 2]) -> Verdict {
    let (a, b) = (logits[0] as f64, logits[1] as f64);
    let m = a.max(b);
    let (ea, eb) = ((a - m).exp(), (b - m).exp());
    Verdict {
        p_false: ea / (ea + eb),
        p_true: eb / (ea + eb),
    }
}

/// Anything that scores windows.
pub trait WindowClassifier {
    fn window_len(&self) -> usize;
    fn classify(&self, window: &TrajWindow) -> Result<Verdict>;
}

impl WindowClassifier for TrajFormer {
    fn window_len(&self) -> usize {
        self.hyper.window
    }
    fn classify(&self, window: &TrajWindow) -> Result<Verdict> {
        self.forward(window)
    }
}

/// Verification thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerificationPolicy {
    /// Consecutive true verdicts that verify a track.
    pub verify_after: u32,
    /// Consecutive false verdicts that reject a confirmed track.
    pub reject_after: u32,
}

impl Default for VerificationPolicy {
    fn default() -> Self {
        Self {
            verify_after: 1,
            reject_after: 5,
        }
    }
}

/// Score the newest window of a confirmed track and advance its status.
/// Verified is sticky; a track that is never verified is rejected after
/// `reject_after` consecutive false verdicts. Windows that cannot be scored
/// count as false.
pub fn classify_track<C: WindowClassifier + ?Sized>(model: &C, track: &mut Track, policy: &VerificationPolicy) {
    if !matches!(track.status, TrackStatus::Confirmed) {
        return;
    }
    let verdict = TrajWindow::from_track(track, model.window_len()).and_then(|w| model.classify(&w));
    if matches!(verdict, Ok(v) if v.is_true()) {
        track.verify_streak += 1;
        track.reject_streak = 0;
        if track.verify_streak >= policy.verify_after {
            track.status = TrackStatus::Verified;
        }
    } else {
        track.reject_streak += 1;
        track.verify_streak = 0;
        if track.reject_streak >= policy.reject_after {
            track.status = TrackStatus::Rejected;
        }
    }
}

/// Adapter that plugs a classifier into [`crate::tracker::Tracker::step_with`].
pub struct Verifier<'a, C: WindowClassifier + ?Sized> {
    pub model: &'a C,
    pub policy: VerificationPolicy,
}

impl<C: WindowClassifier + ?Sized> TrackVerifier for Verifier<'_, C> {
    fn review(&self, track: &mut Track) {
        classify_track(self.model, track, &self.policy);
    }
}

/// Weights shipped with the crate.
pub const BUNDLED_WEIGHTS: &[u8] = include_bytes!("../../assets/trajformer.weights");
/// Parity corpus recorded by the trainer for [`BUNDLED_WEIGHTS`].
pub const BUNDLED_PARITY: &str = include_str!("../../assets/trajformer.parity.jsonl");

pub fn bundled() -> Result<TrajFormer> {
    TrajFormer::from_bytes(BUNDLED_WEIGHTS)
}

pub fn bundled_parity() -> Result<Vec<ParityVector>> {
    crate::io::parse_jsonl(BUNDLED_PARITY)
}

/// One parity vector: a raw window and the trainer's output for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParityVector {
    pub window: Vec<[f64; 9]>,
    pub p_true: f64,
}

pub fn load_parity(path: &Path) -> Result<Vec<ParityVector>> {
    read_jsonl(path)
}

/// Largest `|p_true - expected|` over a parity corpus.
pub fn parity_max_error(model: &TrajFormer, vectors: &[ParityVector]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for v in vectors {
        let w = TrajWindow::new(v.window.clone(), model.hyper.window)?;
        worst = worst.max((model.forward(&w)?.p_true - v.p_true).abs());
    }
    Ok(worst)
}
