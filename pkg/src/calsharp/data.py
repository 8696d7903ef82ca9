"""Prediction dumps: validation, ingestion, splitting and the confidence view."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError

ROW_SUM_TOL = 1e-6
INGEST_ROW_SUM_TOL = 1e-4


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.flags.writeable = False
    return arr


def stable_softmax(logits) -> np.ndarray:
    """Softmax over the last axis, shifted by the row maximum.

    Accepts a single row or an ``(n, k)`` array. Non-finite entries raise.
    """
    z = np.asarray(logits, dtype=np.float64)
    if z.shape[-1] < 2:
        raise ValidationError("softmax needs at least 2 classes")
    if not np.all(np.isfinite(z)):
        raise ValidationError("logits must be finite")
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass(frozen=True, eq=False)
class PredictionSet:
    """Class-probability rows ``probs`` (n x k) with integer ``labels``.

    ``logits`` is kept when the dump provided them; temperature scaling
    prefers them over ``log(probs)``.
    """

    probs: np.ndarray
    labels: np.ndarray
    logits: np.ndarray | None = None

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        labels = np.asarray(self.labels)
        if probs.ndim != 2:
            raise ValidationError(f"probs must be 2-D, got shape {probs.shape}")
        n, k = probs.shape
        if n < 1:
            raise ValidationError("need at least one sample")
        if k < 2:
            raise ValidationError("need at least two classes")
        if labels.shape != (n,):
            raise ValidationError(f"labels must have shape ({n},), got {labels.shape}")
        if labels.dtype.kind not in "iu":
            if not np.all(np.equal(np.mod(labels, 1), 0)):
                raise ValidationError("labels must be integers")
        labels = labels.astype(np.int64)
        if labels.min() < 0 or labels.max() >= k:
            raise ValidationError(f"labels must lie in [0, {k})")
        if not np.all(np.isfinite(probs)) or probs.min() < 0:
            raise ValidationError("probs must be finite and nonnegative")
        dev = np.abs(probs.sum(axis=1) - 1.0)
        if dev.max() > ROW_SUM_TOL:
            i = int(dev.argmax())
            raise ValidationError(f"row {i} sums to {probs[i].sum():.10g}, not 1")
        logits = self.logits
        if logits is not None:
            logits = np.asarray(logits, dtype=np.float64)
            if logits.shape != probs.shape:
                raise ValidationError("logits and probs shapes differ")
            if np.abs(stable_softmax(logits) - probs).max() > ROW_SUM_TOL:
                raise ValidationError("probs do not match softmax(logits)")
            logits = _frozen(logits)
        object.__setattr__(self, "probs", _frozen(probs))
        object.__setattr__(self, "labels", _frozen(labels))
        object.__setattr__(self, "logits", logits)

    @property
    def n(self) -> int:
        return self.probs.shape[0]

    @property
    def k(self) -> int:
        return self.probs.shape[1]

    def __len__(self) -> int:
        return self.n

    def subset(self, idx) -> "PredictionSet":
        idx = np.asarray(idx)
        logits = None if self.logits is None else self.logits[idx]
        return PredictionSet(self.probs[idx], self.labels[idx], logits)

    @classmethod
    def from_logits(cls, logits, labels) -> "PredictionSet":
        logits = np.asarray(logits, dtype=np.float64)
        return cls(stable_softmax(logits), labels, logits)


@dataclass(frozen=True, eq=False)
class ConfidenceView:
    """Top-label reduction: predicted class, its confidence, and correctness."""

    pred: np.ndarray
    conf: np.ndarray
    hit: np.ndarray

    def __post_init__(self):
        pred = np.asarray(self.pred, dtype=np.int64)
        conf = np.asarray(self.conf, dtype=np.float64)
        hit = np.asarray(self.hit, dtype=np.float64)
        if not (pred.shape == conf.shape == hit.shape) or conf.ndim != 1:
            raise ValidationError("pred, conf and hit must be 1-D arrays of equal length")
        if conf.size < 1:
            raise ValidationError("need at least one sample")
        if conf.min() < 0 or conf.max() > 1:
            raise ValidationError("confidences must lie in [0, 1]")
        if not np.all((hit == 0) | (hit == 1)):
            raise ValidationError("hit must be 0/1")
        object.__setattr__(self, "pred", _frozen(pred))
        object.__setattr__(self, "conf", _frozen(conf))
        object.__setattr__(self, "hit", _frozen(hit))

    @property
    def n(self) -> int:
        return self.conf.shape[0]

    def __len__(self) -> int:
        return self.n

    def subset(self, idx) -> "ConfidenceView":
        idx = np.asarray(idx)
        return ConfidenceView(self.pred[idx], self.conf[idx], self.hit[idx])


def confidence_view(ps: PredictionSet, pred=None) -> ConfidenceView:
    """Reduce ``ps`` to (predicted class, confidence, correctness).

    By default the predicted class is the row argmax with ties going to the
    lowest index. A stored classification function can be supplied through
    ``pred``; the confidence is then the probability assigned to that class.
    """
    if pred is None:
        pred = np.argmax(ps.probs, axis=1)
    else:
        pred = np.asarray(pred, dtype=np.int64)
        if pred.shape != (ps.n,):
            raise ValidationError("pred must have one entry per sample")
    conf = ps.probs[np.arange(ps.n), pred]
    hit = (ps.labels == pred).astype(np.float64)
    return ConfidenceView(pred, conf, hit)


@dataclass(frozen=True)
class SplitSpec:
    calib_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.calib_fraction < 1:
            raise ValidationError("calib_fraction must lie in (0, 1)")
        if self.seed < 0:
            raise ValidationError("seed must be nonnegative")


def split_indices(n: int, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray]:
    """Seeded uniform (unstratified) split of ``range(n)``; both halves sorted."""
    if int(np.floor(n * spec.calib_fraction)) < 1 or round(n * spec.calib_fraction) > n - 1:
        raise ValidationError(
            f"split of n={n} at fraction {spec.calib_fraction} leaves a side empty"
        )
    m = round(n * spec.calib_fraction)
    perm = np.random.default_rng(spec.seed).permutation(n)
    return np.sort(perm[:m]), np.sort(perm[m:])


def split(ps: PredictionSet, spec: SplitSpec) -> tuple[PredictionSet, PredictionSet]:
    calib_idx, test_idx = split_indices(ps.n, spec)
    return ps.subset(calib_idx), ps.subset(test_idx)


# --- ingestion -------------------------------------------------------------


def _indexed_columns(names: list[str], prefix: str) -> list[int] | None:
    cols = {}
    for pos, name in enumerate(names):
        if name.startswith(prefix) and name[len(prefix):].isdigit():
            cols[int(name[len(prefix):])] = pos
    if not cols:
        return None
    k = len(cols)
    if sorted(cols) != list(range(k)):
        raise ParseError(f"{prefix}* columns must be numbered 0..{k - 1}", line=1)
    return [cols[i] for i in range(k)]


def _finish_row(values: list[float], kind: str, lineno: int) -> np.ndarray:
    row = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(row)):
        raise ParseError("non-finite value", line=lineno)
    if kind == "logits":
        return stable_softmax(row)
    if row.min() < 0:
        raise ParseError("negative probability", line=lineno)
    s = row.sum()
    if abs(s - 1.0) > INGEST_ROW_SUM_TOL:
        raise ParseError(f"row sum {s:.6g} exceeds tolerance {INGEST_ROW_SUM_TOL:g}", line=lineno)
    # rows already inside the in-memory tolerance are kept verbatim so that
    # save/load round-trips are bit-exact
    if abs(s - 1.0) > ROW_SUM_TOL:
        row = row / s
    return row


def _parse_label(raw, k: int, lineno: int) -> int:
    try:
        value = float(raw)
    except (TypeError, ValueError):
        raise ParseError(f"label {raw!r} is not an integer", line=lineno) from None
    if not value.is_integer():
        raise ParseError(f"label {raw!r} is not an integer", line=lineno)
    label = int(value)
    if not 0 <= label < k:
        raise ParseError(f"label {label} out of range [0, {k})", line=lineno)
    return label


def _read_csv(path: Path):
    rows, labels, logit_rows = [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError("empty file", line=1) from None
        if "label" not in header:
            raise ParseError("missing 'label' column", line=1)
        label_pos = header.index("label")
        kind, cols = "probs", _indexed_columns(header, "prob_")
        if cols is None:
            kind, cols = "logits", _indexed_columns(header, "logit_")
        if cols is None:
            raise ParseError("missing prob_* or logit_* columns", line=1)
        k = len(cols)
        for lineno, record in enumerate(reader, start=2):
            if not record or all(not f.strip() for f in record):
                continue
            if len(record) != len(header):
                raise ParseError(
                    f"ragged row: expected {len(header)} fields, got {len(record)}", line=lineno
                )
            try:
                values = [float(record[c]) for c in cols]
            except ValueError as exc:
                raise ParseError(f"bad number ({exc})", line=lineno) from None
            rows.append(_finish_row(values, kind, lineno))
            if kind == "logits":
                logit_rows.append(values)
            labels.append(_parse_label(record[label_pos], k, lineno))
    return rows, labels, logit_rows if kind == "logits" else None


def _read_jsonl(path: Path):
    rows, labels, logit_rows = [], [], []
    kind, k = None, None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON ({exc.msg})", line=lineno) from None
            if not isinstance(obj, dict) or "label" not in obj:
                raise ParseError("missing 'label' field", line=lineno)
            this_kind = "probs" if "probs" in obj else "logits" if "logits" in obj else None
            if this_kind is None:
                raise ParseError("missing 'probs' or 'logits' field", line=lineno)
            if kind is None:
                kind = this_kind
            elif this_kind != kind:
                raise ParseError("mixed probs/logits records", line=lineno)
            values = obj[kind]
            if not isinstance(values, list):
                raise ParseError(f"'{kind}' must be an array", line=lineno)
            if k is None:
                k = len(values)
                if k < 2:
                    raise ParseError("need at least two classes", line=lineno)
            elif len(values) != k:
                raise ParseError(f"ragged row: expected {k} values, got {len(values)}", line=lineno)
            try:
                values = [float(v) for v in values]
            except (TypeError, ValueError):
                raise ParseError("non-numeric value", line=lineno) from None
            rows.append(_finish_row(values, kind, lineno))
            if kind == "logits":
                logit_rows.append(values)
            labels.append(_parse_label(obj["label"], k, lineno))
    return rows, labels, logit_rows if kind == "logits" else None


def infer_format(path) -> str:
    suffix = Path(path).suffix.lower()
    if suffix in (".jsonl", ".ndjson"):
        return "jsonl"
    return "csv"


def load_predictions(path, format: str | None = None) -> PredictionSet:
    """Read a CSV or JSONL prediction dump into a validated PredictionSet.

    Probability rows within 1e-4 of summing to one are renormalized; logit
    rows are passed through :func:`stable_softmax`. Errors carry the line
    number of the offending record.
    """
    path = Path(path)
    format = format or infer_format(path)
    if format == "csv":
        rows, labels, logit_rows = _read_csv(path)
    elif format == "jsonl":
        rows, labels, logit_rows = _read_jsonl(path)
    else:
        raise ValidationError(f"unknown format {format!r}")
    if not rows:
        raise ParseError("no data rows")
    logits = None if logit_rows is None else np.asarray(logit_rows, dtype=np.float64)
    return PredictionSet(np.vstack(rows), np.asarray(labels, dtype=np.int64), logits)


def save_predictions(ps: PredictionSet, path, format: str | None = None) -> None:
    """Write ``ps`` with 17 significant digits so a reload is bit-exact."""
    path = Path(path)
    format = format or infer_format(path)
    use_logits = ps.logits is not None
    values = ps.logits if use_logits else ps.probs
    if format == "csv":
        prefix = "logit_" if use_logits else "prob_"
        header = [f"{prefix}{j}" for j in range(ps.k)] + ["label"]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(",".join(header) + "\n")
            for row, label in zip(values, ps.labels):
                fh.write(",".join(format_float(v) for v in row) + f",{int(label)}\n")
    elif format == "jsonl":
        key = "logits" if use_logits else "probs"
        with open(path, "w", encoding="utf-8") as fh:
            for row, label in zip(values, ps.labels):
                fh.write(json.dumps({key: [float(v) for v in row], "label": int(label)}) + "\n")
    else:
        raise ValidationError(f"unknown format {format!r}")


def format_float(x: float) -> str:
    return format(float(x), ".17g")
