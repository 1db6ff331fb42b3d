"""Post-hoc calibrators: feature/logit clipping, temperature scaling, ETS,
classwise temperatures, ordered compositions, and the clip-threshold sweep.

Every fit minimizes validation NLL (never a binned metric, to avoid coupling
the fitted parameter to a bin count) and records a FitReport whose NLL may
not regress against the identity transform on the same validation split.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import metrics
from .datastore import Dataset, canonical_logits, compute_logits
from .errors import CalibratorSpecError, DataError, MissingHeadError

TIE_EPS = 1e-12
TEMPERATURE_RANGE = (0.05, 20.0)
COARSE_SCAN_POINTS = 50
TEMPERATURE_TOL = 1e-4
CLIP_QUANTILE_POINTS = 256
CLIP_QUANTILE_LO = 0.50
ETS_GRID_STEP = 0.02
ETS_REFINE_STEP = 0.002
CTS_MAX_SWEEPS = 3
CTS_MIN_IMPROVEMENT = 1e-8


# ---------------------------------------------------------------------------
# Pipeline stages
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FeatureClip:
    c: float


@dataclass(frozen=True)
class LogitClip:
    c: float


@dataclass(frozen=True)
class Temperature:
    T: float


@dataclass(frozen=True)
class Ets:
    T: float
    w: tuple[float, float, float]


@dataclass(frozen=True)
class ClasswiseTemperature:
    T: tuple[float, ...]


@dataclass(frozen=True)
class Identity:
    pass


_STAGE_KINDS = {
    FeatureClip: "feature_clip",
    LogitClip: "logit_clip",
    Temperature: "temperature",
    Ets: "ets",
    ClasswiseTemperature: "classwise_temperature",
    Identity: "identity",
}


@dataclass(frozen=True)
class CalibratorSpec:
    """Ordered calibration pipeline.

    Constraints: at most one feature-clip stage and it must precede every
    logit/probability stage; an ETS stage produces the final probabilities so
    nothing may follow it; all temperatures and thresholds positive; ETS
    weights on the simplex.
    """

    stages: tuple

    def __post_init__(self):
        validate_spec(self)

    def to_dict(self) -> dict:
        out = []
        for stage in self.stages:
            kind = _STAGE_KINDS[type(stage)]
            entry: dict = {"kind": kind}
            if isinstance(stage, (FeatureClip, LogitClip)):
                entry["c"] = stage.c
            elif isinstance(stage, Temperature):
                entry["T"] = stage.T
            elif isinstance(stage, Ets):
                entry["T"] = stage.T
                entry["w"] = list(stage.w)
            elif isinstance(stage, ClasswiseTemperature):
                entry["T"] = list(stage.T)
            out.append(entry)
        return {"stages": out}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @staticmethod
    def from_dict(data: dict) -> "CalibratorSpec":
        stages = []
        for entry in data.get("stages", []):
            kind = entry.get("kind")
            if kind == "feature_clip":
                stages.append(FeatureClip(c=float(entry["c"])))
            elif kind == "logit_clip":
                stages.append(LogitClip(c=float(entry["c"])))
            elif kind == "temperature":
                stages.append(Temperature(T=float(entry["T"])))
            elif kind == "ets":
                stages.append(Ets(T=float(entry["T"]), w=tuple(float(x) for x in entry["w"])))
            elif kind == "classwise_temperature":
                stages.append(ClasswiseTemperature(T=tuple(float(x) for x in entry["T"])))
            elif kind == "identity":
                stages.append(Identity())
            else:
                raise CalibratorSpecError(f"unknown stage kind '{kind}'")
        return CalibratorSpec(stages=tuple(stages))

    @staticmethod
    def from_json(text: str) -> "CalibratorSpec":
        return CalibratorSpec.from_dict(json.loads(text))


def validate_spec(spec: CalibratorSpec) -> None:
    seen_logit_stage = False
    seen_feature_clip = False
    seen_ets = False
    for stage in spec.stages:
        if seen_ets:
            raise CalibratorSpecError("no stage may follow an ETS stage")
        if isinstance(stage, FeatureClip):
            if seen_feature_clip:
                raise CalibratorSpecError("at most one feature-clip stage")
            if seen_logit_stage:
                raise CalibratorSpecError(
                    "feature clipping must precede all logit/probability stages")
            if not stage.c > 0:
                raise CalibratorSpecError(f"feature clip c must be positive, got {stage.c}")
            seen_feature_clip = True
        elif isinstance(stage, LogitClip):
            if not stage.c > 0:
                raise CalibratorSpecError(f"logit clip c must be positive, got {stage.c}")
            seen_logit_stage = True
        elif isinstance(stage, Temperature):
            if not stage.T > 0:
                raise CalibratorSpecError(f"temperature must be positive, got {stage.T}")
            seen_logit_stage = True
        elif isinstance(stage, ClasswiseTemperature):
            if not all(t > 0 for t in stage.T):
                raise CalibratorSpecError("classwise temperatures must all be positive")
            seen_logit_stage = True
        elif isinstance(stage, Ets):
            if not stage.T > 0:
                raise CalibratorSpecError(f"ETS temperature must be positive, got {stage.T}")
            w = np.asarray(stage.w, dtype=np.float64)
            if w.shape != (3,) or w.min() < 0 or abs(w.sum() - 1.0) > 1e-9:
                raise CalibratorSpecError(
                    f"ETS weights must be a 3-vector on the simplex, got {stage.w}")
            seen_logit_stage = True
            seen_ets = True
        elif not isinstance(stage, Identity):
            raise CalibratorSpecError(f"unknown stage type {type(stage).__name__}")


# ---------------------------------------------------------------------------
# Clipping primitives
# ---------------------------------------------------------------------------

def clip_features(x: np.ndarray, c: float) -> np.ndarray:
    """Clamp every entry to [-c, c]. Entries already inside are returned
    bit-exactly; for nonnegative (post-ReLU) inputs this is min(x, c)."""
    if not c > 0:
        raise DataError(f"clip threshold must be positive, got {c}")
    return np.clip(np.asarray(x, dtype=np.float64), -c, c)


def clip_logits(z: np.ndarray, c: float) -> np.ndarray:
    """Same clamp contract as clip_features, applied to logits."""
    return clip_features(z, c)


# ---------------------------------------------------------------------------
# Applying a pipeline
# ---------------------------------------------------------------------------

def apply(spec: CalibratorSpec, ds: Dataset, idx: np.ndarray | None = None) -> np.ndarray:
    """Run the pipeline on the selected rows and return probabilities.

    Feature clipping recomputes logits from the clipped features; logit
    stages transform logits in order; an ETS stage emits probabilities;
    otherwise a final softmax does. Pure function of (spec, ds, idx).
    """
    validate_spec(spec)
    uses_feature_clip = any(isinstance(s, FeatureClip) for s in spec.stages)
    if uses_feature_clip and not ds.has_head:
        raise MissingHeadError(
            "feature clipping needs head weights/bias; for logits-only "
            "datasets use a logit_clip stage instead")
    features = ds.features if idx is None else ds.features[idx]
    logits = None
    probs = None
    for stage in spec.stages:
        if isinstance(stage, FeatureClip):
            features = clip_features(features, stage.c)
        elif isinstance(stage, Identity):
            continue
        else:
            if logits is None:
                logits = _base_logits(ds, idx, features, uses_feature_clip)
            if isinstance(stage, LogitClip):
                logits = clip_logits(logits, stage.c)
            elif isinstance(stage, Temperature):
                logits = logits / stage.T
            elif isinstance(stage, ClasswiseTemperature):
                t = np.asarray(stage.T, dtype=np.float64)
                if t.shape != (ds.k,):
                    raise CalibratorSpecError(
                        f"classwise temperatures have length {len(t)}, dataset has k={ds.k}")
                logits = logits / t[None, :]
            elif isinstance(stage, Ets):
                probs = ets_probs(logits, stage.T, np.asarray(stage.w))
    if probs is not None:
        return probs
    if logits is None:
        logits = _base_logits(ds, idx, features, uses_feature_clip)
    return metrics.softmax(logits)


def _base_logits(ds, idx, features, features_transformed):
    if features_transformed or ds.logits is None:
        return compute_logits(ds, features)
    return canonical_logits(ds, idx)


def ets_probs(logits: np.ndarray, T: float, w: np.ndarray) -> np.ndarray:
    """w1 * softmax(z/T) + w2 * softmax(z) + w3 / K."""
    k = logits.shape[1]
    return (w[0] * metrics.softmax(logits / T)
            + w[1] * metrics.softmax(logits)
            + w[2] / k)


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------

@dataclass
class FitReport:
    """Chosen hyperparameters, validation NLL before/after, and search trace."""

    method: str
    params: dict
    nll_before: float
    nll_after: float
    trace: list = field(default_factory=list)
    wall_time_s: float = 0.0
    note: str | None = None

    def to_dict(self) -> dict:
        out = {
            "method": self.method,
            "params": self.params,
            "val_nll_before": self.nll_before,
            "val_nll_after": self.nll_after,
            "wall_time_s": self.wall_time_s,
            "trace": self.trace,
        }
        if self.note:
            out["note"] = self.note
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def _golden_section(f, lo, hi, tol, trace=None):
    """Golden-section minimization on [lo, hi] down to interval width tol.

    Returns the best evaluated (x, f(x)) so a non-unimodal objective can
    never look better than the points actually probed.
    """
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    x1 = hi - invphi * (hi - lo)
    x2 = lo + invphi * (hi - lo)
    f1, f2 = f(x1), f(x2)
    best_x, best_f = (x1, f1) if f1 <= f2 else (x2, f2)
    if trace is not None:
        trace.extend([[x1, f1], [x2, f2]])
    while hi - lo > tol:
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - invphi * (hi - lo)
            f1 = f(x1)
            if trace is not None:
                trace.append([x1, f1])
            if f1 < best_f:
                best_x, best_f = x1, f1
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + invphi * (hi - lo)
            f2 = f(x2)
            if trace is not None:
                trace.append([x2, f2])
            if f2 < best_f:
                best_x, best_f = x2, f2
    return best_x, best_f


def _temperature_nll(logits, labels):
    def objective(T):
        return metrics.nll(metrics.softmax(logits / T), labels)
    return objective


def _scan_then_refine(objective, candidates, tol, trace):
    """Coarse scan over sorted candidates, then golden-section between the
    best candidate's neighbors. Ties during the scan keep the earlier
    candidate; a strict improvement (beyond 1e-12) is required to move."""
    values = []
    for cand in candidates:
        v = objective(cand)
        values.append(v)
        trace.append([float(cand), v])
    best_i = 0
    for i in range(1, len(candidates)):
        if values[i] < values[best_i] - TIE_EPS:
            best_i = i
    lo = candidates[max(best_i - 1, 0)]
    hi = candidates[min(best_i + 1, len(candidates) - 1)]
    best_x, best_f = candidates[best_i], values[best_i]
    if hi - lo > tol:
        gx, gf = _golden_section(objective, lo, hi, tol, trace)
        if gf < best_f - TIE_EPS:
            best_x, best_f = gx, gf
    return float(best_x), float(best_f)


def fit_temperature(logits_val: np.ndarray, labels_val: np.ndarray
                    ) -> tuple[float, FitReport]:
    """Temperature minimizing validation NLL of softmax(z / T).

    Coarse scan of 50 log-spaced candidates on [0.05, 20], golden-section on
    the bracketing interval down to |dT| <= 1e-4; returns T = 1 unless some
    candidate beats the identity by more than 1e-12.
    """
    t0 = time.perf_counter()
    logits_val, labels_val = _check_val(logits_val, labels_val)
    objective = _temperature_nll(logits_val, labels_val)
    nll_identity = objective(1.0)
    trace: list = []
    candidates = np.geomspace(*TEMPERATURE_RANGE, COARSE_SCAN_POINTS)
    best_t, best_nll = _scan_then_refine(objective, candidates, TEMPERATURE_TOL, trace)
    if best_nll >= nll_identity - TIE_EPS:
        best_t, best_nll = 1.0, nll_identity
    report = FitReport(
        method="temperature",
        params={"T": best_t},
        nll_before=nll_identity,
        nll_after=best_nll,
        trace=trace,
        wall_time_s=time.perf_counter() - t0,
    )
    return best_t, report


def _check_val(logits, labels):
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    if logits.ndim != 2 or len(logits) == 0:
        raise DataError("empty validation set")
    if len(labels) != len(logits):
        raise DataError("validation labels length mismatch")
    return logits, labels


def _clip_candidates(abs_values: np.ndarray, global_max: float) -> np.ndarray:
    levels = np.linspace(CLIP_QUANTILE_LO, 1.0, CLIP_QUANTILE_POINTS)
    cands = np.quantile(abs_values, levels)
    cands = np.unique(np.append(cands, global_max))
    cands = cands[cands > 0]
    if cands.size == 0:
        raise DataError("no positive clip candidates (all values zero?)")
    return cands


def _fit_clip_threshold(objective, candidates, trace):
    """Ascending scan with ties broken toward larger c (less information
    loss), then golden-section between the best candidate's neighbors."""
    values = []
    best_i = 0
    for i, cand in enumerate(candidates):
        v = objective(cand)
        values.append(v)
        trace.append([float(cand), v])
        if v < values[best_i] + TIE_EPS:  # '<=' within eps: prefer larger c
            best_i = i
    best_c, best_nll = float(candidates[best_i]), values[best_i]
    lo = candidates[max(best_i - 1, 0)]
    hi = candidates[min(best_i + 1, len(candidates) - 1)]
    if hi - lo > 0:
        gx, gf = _golden_section(objective, lo, hi, 1e-6 * float(candidates[-1]), trace)
        if gf < best_nll - TIE_EPS:
            best_c, best_nll = float(gx), gf
    return best_c, best_nll


def fit_feature_clip(ds: Dataset, val_idx: np.ndarray) -> tuple[float, FitReport]:
    """Clip threshold minimizing validation NLL of softmax(head(clip(x, c))).

    Candidates are 256 quantile levels (0.50..1.00) of |features| over the
    validation rows plus the global feature max-abs (so the identity
    transform is always on the table); feature scales differ by orders of
    magnitude across models, which is why the grid is quantile- rather than
    value-spaced.
    """
    if not ds.has_head:
        raise MissingHeadError(
            "feature clipping needs head weights/bias; for logits-only "
            "datasets fit a logit clip instead")
    t0 = time.perf_counter()
    val_idx = np.asarray(val_idx)
    if val_idx.size == 0:
        raise DataError("empty validation set")
    feats = ds.features[val_idx]
    labels = ds.labels[val_idx]
    global_max = float(np.max(np.abs(ds.features)))

    def objective(c):
        probs = metrics.softmax(compute_logits(ds, clip_features(feats, c)))
        return metrics.nll(probs, labels)

    nll_identity = objective(global_max)
    trace: list = []
    candidates = _clip_candidates(np.abs(feats).ravel(), global_max)
    best_c, best_nll = _fit_clip_threshold(objective, candidates, trace)
    report = FitReport(
        method="feature_clip",
        params={"c": best_c},
        nll_before=nll_identity,
        nll_after=best_nll,
        trace=trace,
        wall_time_s=time.perf_counter() - t0,
    )
    return best_c, report


def fit_logit_clip(logits_val: np.ndarray, labels_val: np.ndarray,
                   global_max: float | None = None) -> tuple[float, FitReport]:
    """Clip threshold for logits, same quantile-candidate scheme as
    fit_feature_clip."""
    t0 = time.perf_counter()
    logits_val, labels_val = _check_val(logits_val, labels_val)
    if global_max is None:
        global_max = float(np.max(np.abs(logits_val)))

    def objective(c):
        return metrics.nll(metrics.softmax(clip_logits(logits_val, c)), labels_val)

    nll_identity = metrics.nll(metrics.softmax(logits_val), labels_val)
    trace: list = []
    candidates = _clip_candidates(np.abs(logits_val).ravel(), global_max)
    best_c, best_nll = _fit_clip_threshold(objective, candidates, trace)
    if best_nll >= nll_identity - TIE_EPS:
        best_c, best_nll = global_max, nll_identity
    report = FitReport(
        method="logit_clip",
        params={"c": best_c},
        nll_before=nll_identity,
        nll_after=best_nll,
        trace=trace,
        wall_time_s=time.perf_counter() - t0,
    )
    return best_c, report


def fit_ets(logits_val: np.ndarray, labels_val: np.ndarray, T: float
            ) -> tuple[np.ndarray, FitReport]:
    """Simplex weights for w1*softmax(z/T) + w2*softmax(z) + w3/K minimizing
    validation NLL: 0.02-step grid then 0.002-step local refinement.

    Candidates are visited with w1 descending so ties resolve toward the
    tempered component; (1, 0, 0) reproduces plain temperature scaling, so
    the optimum can never be worse than TS on the same split.
    """
    t0 = time.perf_counter()
    logits_val, labels_val = _check_val(logits_val, labels_val)
    n, k = logits_val.shape
    rows = np.arange(n)
    p_tempered = metrics.softmax(logits_val / T)[rows, labels_val]
    p_plain = metrics.softmax(logits_val)[rows, labels_val]
    uniform = 1.0 / k

    def objective(w1, w2, w3):
        mix = w1 * p_tempered + w2 * p_plain + w3 * uniform
        return float(-np.mean(np.log(np.maximum(mix, metrics.NLL_FLOOR))))

    trace: list = []

    def grid_search(w1s, w2s, best):
        best_w, best_f = best
        for w1 in w1s:
            for w2 in w2s:
                w3 = 1.0 - w1 - w2
                if w2 < -1e-12 or w3 < -1e-12:
                    continue
                w2c, w3c = max(w2, 0.0), max(w3, 0.0)
                f = objective(w1, w2c, w3c)
                trace.append([[w1, w2c, w3c], f])
                if f < best_f - TIE_EPS:
                    best_w, best_f = (w1, w2c, w3c), f
        return best_w, best_f

    steps = int(round(1.0 / ETS_GRID_STEP))
    w1s = [i / steps for i in range(steps, -1, -1)]  # descending: tempered first
    w2s = [i / steps for i in range(steps + 1)]
    best = grid_search([1.0], [0.0], ((1.0, 0.0, 0.0), np.inf))
    best = grid_search(w1s, w2s, best)
    (w1, w2, _), _ = best
    span = np.arange(-ETS_GRID_STEP, ETS_GRID_STEP + ETS_REFINE_STEP / 2, ETS_REFINE_STEP)
    w1s = sorted((min(max(w1 + d, 0.0), 1.0) for d in span), reverse=True)
    w2s = [min(max(w2 + d, 0.0), 1.0) for d in span]
    best = grid_search(w1s, w2s, best)
    (w1, w2, w3), best_f = best
    w = np.array([w1, w2, w3])
    w = np.maximum(w, 0.0)
    w /= w.sum()
    report = FitReport(
        method="ets",
        params={"T": T, "w": w.tolist()},
        nll_before=objective(0.0, 1.0, 0.0),
        nll_after=best_f,
        trace=trace,
        wall_time_s=time.perf_counter() - t0,
        note="reconstructed baseline",
    )
    return w, report


def fit_cts(logits_val: np.ndarray, labels_val: np.ndarray
            ) -> tuple[np.ndarray, FitReport]:
    """Per-class temperatures via coordinate descent on validation NLL.

    Initialized at the shared TS temperature; each coordinate is solved by
    the same scan+golden-section line search; at most 3 full sweeps or until
    a sweep improves NLL by less than 1e-8. Updates only ever improve the
    objective, so the result can never regress against plain TS.
    """
    t0 = time.perf_counter()
    logits_val, labels_val = _check_val(logits_val, labels_val)
    k = logits_val.shape[1]
    if k < 2:
        raise DataError("classwise temperature scaling needs k >= 2")
    t_shared, _ = fit_temperature(logits_val, labels_val)
    temps = np.full(k, t_shared, dtype=np.float64)

    def nll_at(ts):
        return metrics.nll(metrics.softmax(logits_val / ts[None, :]), labels_val)

    current = nll_at(temps)
    nll_before = metrics.nll(metrics.softmax(logits_val), labels_val)
    trace: list = [[temps.tolist(), current]]
    for _ in range(CTS_MAX_SWEEPS):
        sweep_start = current
        for cls in range(k):
            def objective(t, cls=cls):
                trial = temps.copy()
                trial[cls] = t
                return nll_at(trial)

            candidates = np.sort(np.append(
                np.geomspace(*TEMPERATURE_RANGE, COARSE_SCAN_POINTS), temps[cls]))
            inner_trace: list = []
            best_t, best_f = _scan_then_refine(
                objective, candidates, TEMPERATURE_TOL, inner_trace)
            if best_f < current - TIE_EPS:
                temps[cls] = best_t
                current = best_f
        trace.append([temps.tolist(), current])
        if sweep_start - current < CTS_MIN_IMPROVEMENT:
            break
    report = FitReport(
        method="classwise_temperature",
        params={"T": temps.tolist()},
        nll_before=nll_before,
        nll_after=current,
        trace=trace,
        wall_time_s=time.perf_counter() - t0,
        note="reconstructed baseline",
    )
    return temps, report


# ---------------------------------------------------------------------------
# Clip-threshold sweep
# ---------------------------------------------------------------------------

def sweep_clip(ds: Dataset, idx: np.ndarray, c_grid,
               bins: int = metrics.DEFAULT_BINS) -> list[dict]:
    """Evaluate feature clipping at each threshold; rows ordered by c."""
    if not ds.has_head:
        raise MissingHeadError("sweep_clip needs head weights/bias")
    c_grid = sorted(float(c) for c in c_grid)
    if not c_grid:
        raise DataError("empty clip grid")
    feats = ds.features[idx]
    labels = ds.labels[idx]
    rows = []
    for c in c_grid:
        probs = metrics.softmax(compute_logits(ds, clip_features(feats, c)))
        report = metrics.evaluate(probs, labels, bins)
        rows.append({
            "c": c,
            "ece": report.ece,
            "adaptive_ece": report.adaptive_ece,
            "accuracy": report.accuracy,
            "nll": report.nll,
        })
    return rows


def sweep_to_csv(rows: list[dict]) -> str:
    lines = ["c,ece,adaptive_ece,accuracy,nll"]
    for r in rows:
        lines.append(f"{r['c']!r},{r['ece']!r},{r['adaptive_ece']!r},"
                     f"{r['accuracy']!r},{r['nll']!r}")
    return "\n".join(lines) + "\n"
