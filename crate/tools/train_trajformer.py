#!/usr/bin/env python3
"""Train the TrajFormer window classifier and export weights plus a parity corpus.

Input windows come from `aerotrack windows`: JSONL rows with
`window` (6 x 9 floats), `label` (bool) and `case` ("seed:segment").

    python tools/train_trajformer.py --windows data/windows.jsonl \
        --weights crates/core/assets/trajformer.weights \
        --parity crates/core/assets/trajformer.parity.jsonl

The forward pass mirrors `aerotrack::classifier::TrajFormer` exactly:
relative positions in float64 cast to float32, pre-norm blocks, a single
decoder query taken from the newest embedding, ReLU feed-forward.
"""

import argparse
import json
import math
import random
import sys

import numpy as np
import torch
from torch import nn

MAGIC = b"TRAJW 1"
HYPER = {"d_model": 32, "n_heads": 2, "ffn_dim": 64, "window": 6, "features": 9}
LN_EPS = 1e-5


def relative(windows):
    """Positions relative to the first observation, computed in float64."""
    w = np.asarray(windows, dtype=np.float64)
    w[:, :, :3] -= w[:, :1, :3]
    return w.astype(np.float32)


class Block(nn.Module):
    def __init__(self, d, heads, ffn):
        super().__init__()
        self.heads = heads
        self.ln1 = nn.LayerNorm(d, eps=LN_EPS)
        self.q = nn.Linear(d, d)
        self.k = nn.Linear(d, d)
        self.v = nn.Linear(d, d)
        self.o = nn.Linear(d, d)
        self.ln2 = nn.LayerNorm(d, eps=LN_EPS)
        self.w1 = nn.Linear(d, ffn)
        self.w2 = nn.Linear(ffn, d)

    def attend(self, x, mem):
        b, nq, d = x.shape
        nk = mem.shape[1]
        dh = d // self.heads
        q = self.q(x).view(b, nq, self.heads, dh).transpose(1, 2)
        k = self.k(mem).view(b, nk, self.heads, dh).transpose(1, 2)
        v = self.v(mem).view(b, nk, self.heads, dh).transpose(1, 2)
        att = torch.softmax(q @ k.transpose(-1, -2) / math.sqrt(dh), dim=-1)
        y = (att @ v).transpose(1, 2).reshape(b, nq, d)
        return self.o(y)

    def forward(self, x, memory=None):
        nx = self.ln1(x)
        x = x + self.attend(nx, nx if memory is None else memory)
        return x + self.w2(torch.relu(self.w1(self.ln2(x))))


class TrajFormer(nn.Module):
    def __init__(self, mean, std):
        super().__init__()
        d, f, l, n = HYPER["d_model"], HYPER["ffn_dim"], HYPER["window"], HYPER["features"]
        self.register_buffer("mean", torch.tensor(mean, dtype=torch.float32))
        self.register_buffer("std", torch.tensor(std, dtype=torch.float32))
        self.input = nn.Linear(n, d)
        self.pos = nn.Parameter(torch.randn(l, d) * 0.1)
        self.enc = Block(d, HYPER["n_heads"], f)
        self.dec = Block(d, HYPER["n_heads"], f)
        self.head = nn.Linear(d, 2)

    def forward(self, rel):
        h = self.input((rel - self.mean) / self.std) + self.pos
        e = self.enc(h)
        u = self.dec(h[:, -1:, :], e)
        return self.head(u[:, 0, :])


def tensors(model):
    out = [
        ("norm.mean", model.mean),
        ("norm.std", model.std),
        ("input.weight", model.input.weight),
        ("input.bias", model.input.bias),
        ("pos_embedding", model.pos),
    ]
    for name, blk in (("enc", model.enc), ("dec", model.dec)):
        out += [
            (f"{name}.ln1.gain", blk.ln1.weight),
            (f"{name}.ln1.bias", blk.ln1.bias),
            (f"{name}.ln2.gain", blk.ln2.weight),
            (f"{name}.ln2.bias", blk.ln2.bias),
        ]
        for p in "qkvo":
            lin = getattr(blk, p)
            out += [(f"{name}.attn.{p}.weight", lin.weight), (f"{name}.attn.{p}.bias", lin.bias)]
        out += [
            (f"{name}.ffn.w1", blk.w1.weight),
            (f"{name}.ffn.b1", blk.w1.bias),
            (f"{name}.ffn.w2", blk.w2.weight),
            (f"{name}.ffn.b2", blk.w2.bias),
        ]
    out += [("head.weight", model.head.weight), ("head.bias", model.head.bias)]
    return [(n, t.detach().cpu().numpy().astype("<f4")) for n, t in out]


def export_weights(model, path):
    entries, payload = [], bytearray()
    for name, arr in tensors(model):
        entries.append({"name": name, "shape": list(arr.shape), "offset": len(payload), "count": int(arr.size)})
        payload += arr.tobytes(order="C")
    header = json.dumps({"hyper": HYPER, "tensors": entries}, separators=(",", ":")).encode()
    with open(path, "wb") as f:
        f.write(MAGIC + b"\n" + str(len(header)).encode() + b"\n" + header + bytes(payload))


def p_true(model, rel):
    with torch.no_grad():
        logits = model(torch.from_numpy(rel)).numpy().astype(np.float64)
    m = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - m)
    return e[:, 1] / e.sum(axis=1)


def fit(rows, feats, labels, seed, epochs, lr):
    torch.manual_seed(seed)
    flat = feats.reshape(-1, feats.shape[-1]).astype(np.float64)
    mean = flat.mean(axis=0).astype(np.float32)
    std = np.maximum(flat.std(axis=0), 1e-3).astype(np.float32)
    model = TrajFormer(mean, std)
    x = torch.from_numpy(feats)
    y = torch.from_numpy(labels.astype(np.int64))
    pos = float(labels.mean())
    weight = torch.tensor([0.5 / max(1.0 - pos, 1e-6), 0.5 / max(pos, 1e-6)], dtype=torch.float32)
    loss_fn = nn.CrossEntropyLoss(weight=weight)
    opt = torch.optim.AdamW(model.parameters(), lr=lr, weight_decay=1e-4)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=epochs)
    gen = torch.Generator().manual_seed(seed)
    n = len(rows)
    for _ in range(epochs):
        perm = torch.randperm(n, generator=gen)
        model.train()
        for i in range(0, n, 256):
            idx = perm[i : i + 256]
            opt.zero_grad()
            loss = loss_fn(model(x[idx]), y[idx])
            loss.backward()
            opt.step()
        sched.step()
    model.eval()
    return model


def case_folds(rows, k, seed):
    cases = sorted({r["case"] for r in rows})
    random.Random(seed).shuffle(cases)
    fold_of = {c: i % k for i, c in enumerate(cases)}
    return np.array([fold_of[r["case"]] for r in rows])


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--windows", nargs="+", required=True)
    ap.add_argument("--weights", required=True)
    ap.add_argument("--parity", required=True)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--epochs", type=int, default=30)
    ap.add_argument("--lr", type=float, default=2e-3)
    ap.add_argument("--folds", type=int, default=5, help="case-split folds to report, 0 to skip")
    ap.add_argument("--parity-count", type=int, default=64)
    args = ap.parse_args()

    torch.set_num_threads(1)
    torch.use_deterministic_algorithms(True)

    rows = []
    for p in args.windows:
        with open(p) as f:
            rows += [json.loads(line) for line in f if line.strip()]
    if not rows:
        sys.exit("no windows")
    raw = [r["window"] for r in rows]
    feats = relative(raw)
    labels = np.array([bool(r["label"]) for r in rows])
    print(f"{len(rows)} windows, {labels.sum()} positive, {len({r['case'] for r in rows})} cases")

    if args.folds > 1:
        folds = case_folds(rows, args.folds, args.seed)
        accs = []
        for k in range(args.folds):
            tr, te = folds != k, folds == k
            m = fit([r for r, t in zip(rows, tr) if t], feats[tr], labels[tr], args.seed, args.epochs, args.lr)
            acc = float(((p_true(m, feats[te]) > 0.5) == labels[te]).mean())
            accs.append(acc)
            print(f"fold {k}: held-out accuracy {acc:.4f} on {te.sum()} windows")
        print(f"mean held-out accuracy {np.mean(accs):.4f}")

    model = fit(rows, feats, labels, args.seed, args.epochs, args.lr)
    acc = float(((p_true(model, feats) > 0.5) == labels).mean())
    print(f"training accuracy {acc:.4f}")
    export_weights(model, args.weights)

    rng = random.Random(args.seed + 1)
    pos_idx = [i for i, l in enumerate(labels) if l]
    neg_idx = [i for i, l in enumerate(labels) if not l]
    half = args.parity_count // 2
    pick = rng.sample(pos_idx, min(half, len(pos_idx)))
    pick += rng.sample(neg_idx, min(args.parity_count - len(pick), len(neg_idx)))
    probs = p_true(model, feats[pick])
    with open(args.parity, "w") as f:
        for i, p in zip(pick, probs):
            f.write(json.dumps({"window": raw[i], "p_true": float(p)}) + "\n")
    print(f"wrote {args.weights} and {len(pick)} parity vectors to {args.parity}")


if __name__ == "__main__":
    main()
