"""Experiment harness: configuration, dataset and model assembly,
checkpoints, and the five commands behind the command line.

File contracts owned here:
  metrics CSV   header  epoch,train_loss,train_acc,test_loss,test_acc,seconds
  sweep CSV     header  variant,hidden,eta,forget,best_test_acc,best_epoch,final_train_acc
  config file   one "key = value" per line, # starts a comment, keys are
                the CLI flag names without their leading dashes
  checkpoint    text header (variant, dims, activation, forget constant,
                tensor name+shape list) then the tensors as little-endian
                float64, concatenated in header order
"""

from __future__ import annotations

import concurrent.futures
import itertools
import sys
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .cells import (ADAPTIVE_FIELDS, CellParams, OutputLayer, VARIANTS,
                    init_cell, init_output, param_count, run_cell,
                    step_mac_count)
from .data import (EmbeddingTable, SequenceBatch, SYNTH_KINDS, VectorBatch,
                   build_vocab, encode_tokens, init_embedding,
                   load_tsv_corpus, pad_or_truncate, synth_generate)
from .numerics import ACTIVATIONS, make_rng
from .training import (LOSSES, MetricsRecord, OPTIMIZERS, OptimizerState,
                       SequenceClassifier, bptt_gradients,
                       finite_difference_oracle, gradient_rel_error,
                       model_gradients, train_epoch)

METRICS_HEADER = "epoch,train_loss,train_acc,test_loss,test_acc,seconds"
SWEEP_HEADER = "variant,hidden,eta,forget,best_test_acc,best_epoch,final_train_acc"
CHECKPOINT_MAGIC = "slimrnn-ckpt 1"


@dataclass
class ExperimentConfig:
    """Everything one training run needs. Field names double as config
    file keys (with _ spelled -, matching the CLI flags)."""

    variant: str = "lstm"
    activation: str = "sigmoid"
    hidden: int = 100
    embed: int = 32
    seq_len: int = 500
    vocab: int = 5000
    eta: float = 1e-3
    forget: float = 0.59
    epochs: int = 100
    batch: int = 32
    optimizer: str = "adam"
    loss: str = "bce"
    seed: int = 1234
    bidirectional: bool = False
    data: str = "synth:keyword_count"
    samples: int = 2500
    out: str = "run_out"

    def validate(self):
        """Reject unusable values before any compute or file I/O."""
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")
        for name in ("hidden", "embed", "seq_len", "epochs", "batch"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.vocab < 4:
            raise ValueError(f"vocab must be >= 4, got {self.vocab}")
        if self.samples < 10:
            raise ValueError(f"samples must be >= 10, got {self.samples}")
        if self.eta <= 0.0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if not -1.0 < self.forget < 1.0:
            raise ValueError(f"forget must satisfy -1 < f < 1, got {self.forget}")
        kind, _, rest = self.data.partition(":")
        if kind == "synth":
            if rest not in SYNTH_KINDS:
                raise ValueError(f"unknown synthetic task {rest!r}")
        elif kind == "tsv":
            if not rest:
                raise ValueError("tsv data source needs a path: tsv:<path>")
        else:
            raise ValueError(f"data must be synth:<kind> or tsv:<path>, got {self.data!r}")


_CONFIG_FIELDS = [f.name for f in fields(ExperimentConfig)]


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


def config_to_text(cfg: ExperimentConfig) -> str:
    """Canonical serialization: every field, declaration order, one
    key = value per line. Parsing this text reproduces cfg exactly."""
    lines = [f"{name.replace('_', '-')} = {_format_value(getattr(cfg, name))}"
             for name in _CONFIG_FIELDS]
    return "\n".join(lines) + "\n"


def parse_config_text(text: str) -> dict:
    """Parse config-file text into a field -> typed value dict. Unknown
    keys and malformed lines raise; # starts a comment."""
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip().replace("-", "_")
        value = value.strip()
        if key not in _CONFIG_FIELDS:
            raise ValueError(f"line {lineno}: unknown config key {key!r}")
        kind = ExperimentConfig.__dataclass_fields__[key].type
        if kind == "int":
            out[key] = int(value)
        elif kind == "float":
            out[key] = float(value)
        elif kind == "bool":
            if value not in ("true", "false"):
                raise ValueError(f"line {lineno}: boolean must be true/false, got {value!r}")
            out[key] = value == "true"
        else:
            out[key] = value
    return out


def load_config_file(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def build_dataset(cfg: ExperimentConfig):
    """Materialize (train, test) batches for a config's data source.

    synth:<kind> draws from the task generator with the run seed.
    tsv:<path> loads label<TAB>text lines, shuffles with the run seed,
    splits 80/20, builds the vocabulary on the training split only,
    then encodes and pre-pads both splits to seq_len.
    """
    kind, _, rest = cfg.data.partition(":")
    if kind == "synth":
        return synth_generate(rest, cfg.samples, cfg.seq_len, cfg.vocab,
                              make_rng(cfg.seed))
    corpus = load_tsv_corpus(rest)
    if len(corpus) < 10:
        raise ValueError(f"{rest}: need at least 10 samples, got {len(corpus)}")
    labels = sorted({label for label, _ in corpus})
    n_classes = max(labels) + 1
    if min(labels) < 0:
        raise ValueError(f"labels must be >= 0, got {min(labels)}")
    if cfg.loss == "bce" and not set(labels) <= {0, 1}:
        raise ValueError(f"bce needs labels in {{0, 1}}, file has {labels}")
    order = make_rng(cfg.seed).permutation(len(corpus))
    cut = int(round(0.8 * len(corpus)))
    train_rows = [corpus[i] for i in order[:cut]]
    test_rows = [corpus[i] for i in order[cut:]]
    vocab = build_vocab([toks for _, toks in train_rows], cfg.vocab)

    def encode_split(rows):
        toks = np.array([pad_or_truncate(encode_tokens(vocab, t), cfg.seq_len)
                         for _, t in rows], dtype=np.int64)
        labs = np.array([label for label, _ in rows], dtype=np.int64)
        return SequenceBatch(tokens=toks, labels=labs, n_classes=n_classes)

    return encode_split(train_rows), encode_split(test_rows)


def build_model(cfg: ExperimentConfig, n_classes: int) -> SequenceClassifier:
    """Fresh model for a config: embedding, cell(s), output layer, all
    drawn from one generator seeded with cfg.seed in that fixed order."""
    rng = make_rng(cfg.seed)
    emb = init_embedding(rng, cfg.vocab, cfg.embed)
    cell = init_cell(cfg.variant, cfg.embed, cfg.hidden, cfg.activation,
                     cfg.forget, rng)
    cell_bwd = None
    if cfg.bidirectional:
        cell_bwd = init_cell(cfg.variant, cfg.embed, cfg.hidden, cfg.activation,
                             cfg.forget, rng)
    out_dim = 1 if cfg.loss == "bce" else n_classes
    in_dim = 2 * cfg.hidden if cfg.bidirectional else cfg.hidden
    out = init_output(rng, in_dim, out_dim)
    return SequenceClassifier(cell=cell, out=out, emb=emb, cell_bwd=cell_bwd)


def format_metrics_row(rec: MetricsRecord) -> str:
    return (f"{rec.epoch},{rec.train_loss!r},{rec.train_acc!r},"
            f"{rec.test_loss!r},{rec.test_acc!r},{rec.seconds!r}")


def save_checkpoint(path, model: SequenceClassifier, cfg: ExperimentConfig):
    """Write the text header and the little-endian float64 payload."""
    tensors = model.param_arrays(include_frozen=True)
    lines = [CHECKPOINT_MAGIC,
             f"variant {model.cell.variant}",
             f"m {model.cell.m}",
             f"n {model.cell.n}",
             f"activation {model.cell.act}",
             f"forget {model.cell.forget_const!r}",
             f"bidirectional {'true' if model.bidirectional else 'false'}",
             f"loss {cfg.loss}",
             f"tensors {len(tensors)}"]
    for name, arr in tensors.items():
        dims = " ".join(str(d) for d in arr.shape)
        lines.append(f"{name} {dims}")
    lines.append("end")
    header = ("\n".join(lines) + "\n").encode("utf-8")
    payload = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes()
                       for a in tensors.values())
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def load_checkpoint(path) -> tuple[SequenceClassifier, dict]:
    """Rebuild a model from a checkpoint. Forward passes through the
    result are bit-identical to the model that was saved."""
    with open(path, "rb") as fh:
        blob = fh.read()
    head_end = blob.index(b"\nend\n") + len(b"\nend\n")
    lines = blob[:head_end].decode("utf-8").splitlines()
    if lines[0] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file (bad magic {lines[0]!r})")
    meta: dict = {}
    shapes: list[tuple[str, tuple[int, ...]]] = []
    n_tensors = None
    it = iter(lines[1:])
    for line in it:
        if line == "end":
            break
        key, _, rest = line.partition(" ")
        if key == "tensors":
            n_tensors = int(rest)
            for _ in range(n_tensors):
                tline = next(it)
                name, *dims = tline.split()
                shapes.append((name, tuple(int(d) for d in dims)))
        else:
            meta[key] = rest
    payload = np.frombuffer(blob[head_end:], dtype="<f8")
    arrays: dict[str, np.ndarray] = {}
    at = 0
    for name, shape in shapes:
        size = int(np.prod(shape)) if shape else 1
        arrays[name] = payload[at:at + size].reshape(shape).copy()
        at += size
    if at != payload.size:
        raise ValueError(f"{path}: payload holds {payload.size} values, header "
                         f"describes {at}")

    variant, m, n = meta["variant"], int(meta["m"]), int(meta["n"])
    act, f = meta["activation"], float(meta["forget"])

    def rebuild_cell(prefix: str) -> CellParams:
        kw = {name: arrays[prefix + name] for name in ADAPTIVE_FIELDS[variant]}
        return CellParams(variant=variant, m=m, n=n, act=act, forget_const=f, **kw)

    cell = rebuild_cell("fwd.")
    cell_bwd = rebuild_cell("bwd.") if meta.get("bidirectional") == "true" else None
    out = OutputLayer(W_hy=arrays["out.W_hy"], b_y=arrays["out.b_y"])
    emb = None
    if "emb.E" in arrays:
        emb = EmbeddingTable(E=arrays["emb.E"])
    model = SequenceClassifier(cell=cell, out=out, emb=emb, cell_bwd=cell_bwd)
    return model, meta


def cmd_train(cfg: ExperimentConfig, log=None):
    """Run one training job: per-epoch metrics CSV plus a final
    checkpoint under cfg.out. Returns a result dict with the paths and
    the metric records."""
    cfg.validate()
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    train, test = build_dataset(cfg)
    model = build_model(cfg, train.n_classes)
    opt = OptimizerState(kind=cfg.optimizer, eta=cfg.eta)
    (out_dir / "config.txt").write_text(config_to_text(cfg), encoding="utf-8")
    csv_path = out_dir / "metrics.csv"
    records: list[MetricsRecord] = []
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write(METRICS_HEADER + "\n")
        for epoch in range(1, cfg.epochs + 1):
            rec = train_epoch(model, train, test, opt, cfg.loss, cfg.batch,
                              cfg.seed, epoch)
            records.append(rec)
            fh.write(format_metrics_row(rec) + "\n")
            fh.flush()
            if log is not None:
                log(f"epoch {rec.epoch}: train_acc={rec.train_acc:.4f} "
                    f"test_acc={rec.test_acc:.4f} ({rec.seconds:.2f}s)")
    ckpt_path = out_dir / "model.ckpt"
    save_checkpoint(ckpt_path, model, cfg)
    return {"csv": str(csv_path), "checkpoint": str(ckpt_path), "records": records}


@dataclass
class SweepSpec:
    """Grid of training runs: the cross product of the lists below over
    a shared base config. Cell i trains with seed base.seed + i."""

    base: ExperimentConfig
    variants: list = field(default_factory=lambda: ["lstm"])
    hiddens: list = field(default_factory=lambda: [100])
    etas: list = field(default_factory=lambda: [1e-3])
    forgets: list = field(default_factory=lambda: [0.59])
    workers: int = 1


def _sweep_cells(spec: SweepSpec):
    cells = []
    grid = itertools.product(spec.variants, spec.hiddens, spec.etas, spec.forgets)
    for idx, (variant, hidden, eta, forget) in enumerate(grid):
        sub = Path(spec.base.out) / "cells" / f"cell{idx:03d}_{variant}_h{hidden}"
        cfg = replace(spec.base, variant=variant, hidden=int(hidden),
                      eta=float(eta), forget=float(forget),
                      seed=spec.base.seed + idx, out=str(sub))
        cells.append(cfg)
    return cells


def _run_sweep_cell(cfg: ExperimentConfig) -> str:
    """One grid cell -> one summary CSV row. Never raises: a failed cell
    reports nan metrics so the rest of the sweep still runs."""
    try:
        result = cmd_train(cfg)
        records = result["records"]
        best = max(r.test_acc for r in records)
        best_epoch = next(r.epoch for r in records if r.test_acc == best)
        final_train = records[-1].train_acc
        return (f"{cfg.variant},{cfg.hidden},{cfg.eta!r},{cfg.forget!r},"
                f"{best!r},{best_epoch},{final_train!r}")
    except Exception as exc:  # noqa: BLE001 - cell isolation is the point
        print(f"sweep cell failed ({cfg.out}): {exc}", file=sys.stderr)
        return f"{cfg.variant},{cfg.hidden},{cfg.eta!r},{cfg.forget!r},nan,0,nan"


def cmd_sweep(spec: SweepSpec):
    """Run every cell of the grid (optionally across processes) and
    write summary.csv under the base output directory. Per-cell seeds
    make the summary independent of worker count."""
    spec.base.validate()
    cells = _sweep_cells(spec)
    out_dir = Path(spec.base.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if spec.workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=spec.workers) as pool:
            rows = list(pool.map(_run_sweep_cell, cells))
    else:
        rows = [_run_sweep_cell(cfg) for cfg in cells]
    summary = out_dir / "summary.csv"
    with open(summary, "w", encoding="utf-8") as fh:
        fh.write(SWEEP_HEADER + "\n")
        for row in rows:
            fh.write(row + "\n")
    return {"summary": str(summary), "rows": rows}


def _relu_kink_margin(p: CellParams, caches) -> float:
    """Smallest |pre-activation| a relu net saw across a forward pass.

    Central differences are unreliable when any relu argument sits
    within the probe step of its kink, so relu checks skip such nets.
    The candidate pre-activation is rebuilt from the cache; the cell
    state c_t is itself the argument of the output squash.
    """
    margin = np.inf
    for k in caches:
        if p.variant == "srnn":
            a = p.W_hx @ k.x_t + p.W_hh @ k.h_prev + p.b_h
            margin = min(margin, float(np.min(np.abs(a))))
            continue
        if p.variant == "lstm_c6":
            a = p.W_c @ k.x_t + p.u_c * k.h_prev + p.b_c
        else:
            a = p.W_c @ k.x_t + p.U_c @ k.h_prev + p.b_c
        margin = min(margin, float(np.min(np.abs(a))),
                     float(np.min(np.abs(k.c_t))))
    return margin


def cmd_gradcheck(m: int = 4, n: int = 4, seq_len: int = 3, seeds: int = 3,
                  batch: int = 2, tolerance: float = 1e-6,
                  activations=("sigmoid", "tanh", "relu"), corrupt: str | None = None):
    """Certify the analytic gradients against central finite differences.

    m, n, seq_len cap desk-scale nets (m, n <= 8, seq_len <= 5 enforced);
    each seed draws dims at or below the caps, builds a fresh net with a
    trainable embedding, and compares every tensor's gradient. relu nets
    whose pre-activations graze a kink (within 1e-4) are skipped. The
    corrupt argument injects an error into one named tensor's analytic
    gradient so the failure path itself stays testable.

    Returns (report_rows, ok). Each row carries variant, activation,
    tensor group, worst relative error, and a pass/fail/skip status.
    """
    if not 1 <= m <= 8 or not 1 <= n <= 8:
        raise ValueError(f"gradcheck dims are capped at 8, got m={m} n={n}")
    if not 1 <= seq_len <= 5:
        raise ValueError(f"gradcheck sequence length is capped at 5, got {seq_len}")
    if not 1 <= batch <= 8:
        raise ValueError(f"gradcheck batch is capped at 8, got {batch}")
    report = []
    ok = True
    vocab = 7
    for variant in VARIANTS:
        for act in activations:
            worst: dict[str, float] = {}
            used = 0
            for s in range(seeds):
                rng = make_rng(9000 + 131 * s)
                mm = int(rng.integers(2, m + 1)) if m > 2 else m
                nn = int(rng.integers(2, n + 1)) if n > 2 else n
                tt = int(rng.integers(2, seq_len + 1)) if seq_len > 2 else seq_len
                bb = int(rng.integers(1, batch + 1))
                emb = init_embedding(rng, vocab, mm)
                cell = init_cell(variant, mm, nn, act, 0.59, rng)
                out = init_output(rng, nn, 1)
                tokens = rng.integers(0, vocab, size=(bb, tt))
                labels = rng.integers(0, 2, size=bb)
                batch_data = SequenceBatch(tokens=tokens, labels=labels)
                if act == "relu":
                    margins = [
                        _relu_kink_margin(cell, run_cell(cell, emb.E[tokens[i]])[2])
                        for i in range(bb)]
                    if min(margins) < 1e-4:
                        continue
                used += 1
                _, analytic = bptt_gradients(cell, out, emb, batch_data, "bce")
                if corrupt is not None and corrupt in analytic:
                    analytic[corrupt] = analytic[corrupt] + 1.0
                oracle = finite_difference_oracle(cell, out, emb, batch_data, "bce")
                for name in analytic:
                    err = gradient_rel_error(analytic[name], oracle[name])
                    worst[name] = max(worst.get(name, 0.0), err)
            if used == 0:
                report.append({"variant": variant, "activation": act,
                               "group": "-", "max_rel_err": float("nan"),
                               "status": "skip"})
                continue
            for name, err in worst.items():
                status = "pass" if err <= tolerance else "FAIL"
                if status == "FAIL":
                    ok = False
                report.append({"variant": variant, "activation": act,
                               "group": name, "max_rel_err": err,
                               "status": status})
    return report, ok


def cmd_params(variant: str, m: int, n: int, bidirectional: bool = False) -> dict:
    """Parameter and per-step multiply-accumulate counts for one cell."""
    return {"variant": variant, "m": m, "n": n, "bidirectional": bidirectional,
            "params": param_count(variant, m, n, bidirectional),
            "macs": step_mac_count(variant, m, n)}


def cmd_bench(variant: str, m: int = 32, n: int = 100, seq_len: int = 500,
              reps: int = 5, seed: int = 7) -> dict:
    """Median wall-clock of one forward+backward pass over a synthetic
    sequence, single thread, plus the MAC-count ratio against the full
    lstm cell as the model-predicted speedup."""
    if reps < 1:
        raise ValueError(f"reps must be >= 1, got {reps}")
    rng = make_rng(seed)
    cell = init_cell(variant, m, n, "sigmoid", 0.59, rng)
    out = init_output(rng, n, 1)
    xs = rng.uniform(-1.0, 1.0, size=(1, seq_len, m))
    batch = VectorBatch(inputs=xs, labels=np.array([1]), n_classes=2)
    model = SequenceClassifier(cell=cell, out=out)
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        model_gradients(model, batch, "bce")
        times.append(time.perf_counter() - t0)
    median = float(np.median(times))
    macs = step_mac_count(variant, m, n)
    return {"variant": variant, "m": m, "n": n, "seq_len": seq_len, "reps": reps,
            "median_seconds": median,
            "per_step_seconds": median / seq_len,
            "macs": macs,
            "mac_ratio_vs_lstm": step_mac_count("lstm", m, n) / macs}
