"""Monte-Carlo DoA trials: scenario -> render -> STFT -> weights -> criterion -> error."""

from __future__ import annotations

import itertools
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from functools import lru_cache

import numpy as np

from .array import AngleGrid, ArrayGeometry, angular_distance, build_steering_field
from .criteria import METHODS, SpatialSpectrum, compute_spectrum, estimate_doa
from .masks import MaskTensor, PostProc, load_mask, oracle_irm, post_process
from .room import render_scenario, sample_scenario
from .signals import (SAMPLE_RATE, SnapshotTensor, StftConfig, compute_stft, stack_snapshots,
                      synth_interference, synth_speech_like)

log = logging.getLogger(__name__)

__all__ = [
    "SUCCESS_THRESHOLD_DEG",
    "ExperimentConfig",
    "TrialResult",
    "ExperimentSummary",
    "TrialError",
    "prepare_trial",
    "trial_spectrum",
    "run_trial",
    "run_experiment",
    "expand_sweep",
    "run_sweep",
    "emit_report",
    "REPORT_HEADER",
]

SUCCESS_THRESHOLD_DEG = 3.0
MIN_RENDER_FRAMES = 50
SWEEP_AXES = ("method", "postproc", "mask_source", "rt60", "snr_db", "sir_db", "K",
              "T_frames", "trials", "base_seed", "resolution")
REPORT_HEADER = "method,postproc,rt60_s,snr_db,sir_db,K,T,trials,accuracy,mae_deg,seed"


class TrialError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    """One Monte-Carlo condition.

    ``mask_source`` is ``"oracle"`` (ideal ratio masks from the rendered
    images), ``"constant"`` (all ones), or ``"file:<pattern>"`` where the
    pattern may contain ``{trial}`` and names a TFW1 mask per trial.
    """

    method: str = "proposed"
    postproc: PostProc = field(default_factory=lambda: PostProc("hadamard"))
    mask_source: str = "oracle"
    rt60: float = 0.3
    snr_db: float = 20.0
    sir_db: float = 0.0
    K: int = 2
    T_frames: int = 50
    trials: int = 200
    base_seed: int = 0
    resolution: float = 0.5

    def __post_init__(self):
        if isinstance(self.postproc, str):
            object.__setattr__(self, "postproc", PostProc.parse(self.postproc))
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if not (self.mask_source in ("oracle", "constant") or self.mask_source.startswith("file:")):
            raise ValueError(f"unknown mask source {self.mask_source!r}")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.T_frames < 1:
            raise ValueError("T_frames must be at least 1")
        if self.K < 0:
            raise ValueError("K must be nonnegative")
        if self.rt60 <= 0:
            raise ValueError("rt60 must be positive")
        AngleGrid(self.resolution)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["postproc"] = str(self.postproc)
        if not np.isfinite(self.snr_db):
            d["snr_db"] = "inf"
        return d

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        doc = dict(doc)
        for key in ("rt60", "snr_db", "sir_db", "resolution"):
            if key in doc:
                doc[key] = float(doc[key])
        for key in ("K", "T_frames", "trials", "base_seed"):
            if key in doc:
                doc[key] = int(doc[key])
        return cls(**doc)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))

    @property
    def scene_key(self) -> tuple:
        """Fields that determine the rendered audio of every trial."""
        return (self.rt60, self.snr_db, self.sir_db, self.K, self.base_seed,
                max(self.T_frames, MIN_RENDER_FRAMES))


@dataclass(frozen=True)
class TrialResult:
    theta_hat: float
    theta_gt: float
    abs_error_deg: float
    success: bool

    @classmethod
    def from_estimate(cls, theta_hat: float, theta_gt: float) -> "TrialResult":
        err = angular_distance(theta_hat, theta_gt)
        return cls(theta_hat, theta_gt, err, bool(err < SUCCESS_THRESHOLD_DEG))


@dataclass(frozen=True)
class ExperimentSummary:
    config: ExperimentConfig
    results: tuple[TrialResult, ...]
    wall_time: float = 0.0

    @property
    def accuracy(self) -> float:
        return sum(r.success for r in self.results) / len(self.results)

    @property
    def mae_deg(self) -> float:
        return float(np.mean([r.abs_error_deg for r in self.results]))


@dataclass(frozen=True)
class PreparedTrial:
    """Rendered trial audio in the STFT domain, shared by every method and weighting."""

    Y: SnapshotTensor
    G: MaskTensor
    theta_gt: float
    geometry: ArrayGeometry


def trial_seeds(base_seed: int, trial_index: int) -> np.ndarray:
    """Four independent 32-bit seeds (scenario, speech, interference, noise) per trial."""
    ss = np.random.SeedSequence(entropy=base_seed, spawn_key=(trial_index,))
    return ss.generate_state(4)


@lru_cache(maxsize=4)
def prepare_trial(scene_key: tuple, trial_index: int) -> PreparedTrial:
    rt60, snr_db, sir_db, K, base_seed, n_frames = scene_key
    s_scene, s_speech, s_interf, s_noise = (int(s) for s in trial_seeds(base_seed, trial_index))
    sc = sample_scenario(rt60, snr_db, sir_db, K, s_scene)
    stft = StftConfig()
    n = stft.samples_for(n_frames)
    duration = n / SAMPLE_RATE
    speech = synth_speech_like(s_speech, duration)
    interf = [synth_interference(kind, s_interf + k, duration)
              for k, kind in enumerate(sc.interferer_kinds)]
    rendered = render_scenario(sc, speech, interf, noise_seed=s_noise)

    def to_tensor(chans):
        return stack_snapshots([compute_stft(x, stft) for x in chans])

    Y = to_tensor(rendered.mixture)
    G = oracle_irm(to_tensor(rendered.speech_images), to_tensor(rendered.nonspeech_images))
    return PreparedTrial(Y, G, sc.speaker.theta, sc.array)


_FIELDS: dict = {}


def _steering_field(geom: ArrayGeometry, resolution: float, bin_freqs: np.ndarray):
    key = (geom.to_json(), resolution, bin_freqs.tobytes())
    if key not in _FIELDS:
        if len(_FIELDS) > 4:
            _FIELDS.clear()
        _FIELDS[key] = build_steering_field(geom, AngleGrid(resolution), bin_freqs)
    return _FIELDS[key]


def _weights(cfg: ExperimentConfig, prep: PreparedTrial, trial_index: int, shape) -> MaskTensor:
    if cfg.mask_source == "oracle":
        G = MaskTensor(prep.G.weights[:, :shape[1], :]) if prep.G.shape[1] >= shape[1] \
            else MaskTensor(np.pad(prep.G.weights, ((0, 0), (0, shape[1] - prep.G.shape[1]), (0, 0))))
    elif cfg.mask_source == "constant":
        G = MaskTensor.ones(shape)
    else:
        path = cfg.mask_source[len("file:"):].format(trial=trial_index)
        G = load_mask(path, shape)
    return post_process(cfg.postproc, G)


def trial_spectrum(cfg: ExperimentConfig, prep: PreparedTrial, trial_index: int) -> SpatialSpectrum:
    Y = prep.Y.first_frames(cfg.T_frames)
    W = _weights(cfg, prep, trial_index, Y.shape)
    fld = _steering_field(prep.geometry, cfg.resolution, Y.bin_freqs)
    return compute_spectrum(cfg.method, Y, W, fld)


def evaluate_prepared(cfg: ExperimentConfig, prep: PreparedTrial, trial_index: int) -> TrialResult:
    spec = trial_spectrum(cfg, prep, trial_index)
    return TrialResult.from_estimate(estimate_doa(spec), prep.theta_gt)


def run_trial(cfg: ExperimentConfig, trial_index: int) -> TrialResult:
    try:
        return evaluate_prepared(cfg, prepare_trial(cfg.scene_key, trial_index), trial_index)
    except Exception as exc:
        raise TrialError(f"trial {trial_index}: {exc}") from exc


def _run_group(configs: tuple, trial_index: int) -> list:
    """Evaluate every config that shares one rendered trial; None where out of range."""
    key = configs[0].scene_key
    prep = None
    out = []
    for cfg in configs:
        if trial_index >= cfg.trials:
            out.append(None)
            continue
        try:
            if prep is None:
                prep = prepare_trial(key, trial_index)
            out.append(evaluate_prepared(cfg, prep, trial_index))
        except Exception as exc:
            raise TrialError(f"trial {trial_index}: {exc}") from exc
    return out


def run_sweep(configs, workers: int = 1) -> list[ExperimentSummary]:
    """Run several conditions, rendering each trial once per scene and reusing it.

    Summaries come back in the order of ``configs``.
    """
    configs = list(configs)
    if not configs:
        raise ValueError("empty sweep")
    t0 = time.perf_counter()
    groups: dict = {}
    for i, cfg in enumerate(configs):
        groups.setdefault(cfg.scene_key, []).append(i)
    tasks = []
    for key, idx in groups.items():
        group = tuple(configs[i] for i in idx)
        for t in range(max(c.trials for c in group)):
            tasks.append((idx, group, t))

    results: list[list] = [[None] * c.trials for c in configs]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            outs = ex.map(_run_group, [g for _, g, _ in tasks], [t for _, _, t in tasks])
            for (idx, _, t), out in zip(tasks, outs):
                for i, r in zip(idx, out):
                    if r is not None:
                        results[i][t] = r
    else:
        for n, (idx, group, t) in enumerate(tasks):
            for i, r in zip(idx, _run_group(group, t)):
                if r is not None:
                    results[i][t] = r
            if (n + 1) % 10 == 0:
                log.info("finished %d/%d trial groups", n + 1, len(tasks))
    wall = time.perf_counter() - t0
    return [ExperimentSummary(cfg, tuple(res), wall) for cfg, res in zip(configs, results)]


def run_experiment(cfg: ExperimentConfig, workers: int = 1) -> ExperimentSummary:
    return run_sweep([cfg], workers)[0]


def expand_sweep(base: ExperimentConfig, axes: dict) -> list[ExperimentConfig]:
    """Cartesian product over ``axes`` in declaration order (last axis varies fastest)."""
    if not axes:
        return [base]
    for name, values in axes.items():
        if name not in SWEEP_AXES:
            raise ValueError(f"invalid sweep axis {name!r}")
        if not values:
            raise ValueError(f"sweep axis {name!r} has no values")
    names = list(axes)
    out = []
    for combo in itertools.product(*(axes[n] for n in names)):
        doc = base.to_dict()
        doc.update(dict(zip(names, combo)))
        out.append(ExperimentConfig.from_dict(doc))
    return out


def load_sweep(text: str) -> list[ExperimentConfig]:
    """Sweep JSON: ``{"base": {<config fields>}, "axes": {"sir_db": [-6, 0, 6], ...}}``."""
    doc = json.loads(text)
    base = ExperimentConfig.from_dict(doc.get("base", {}))
    return expand_sweep(base, doc.get("axes", {}))


def _fmt(x) -> str:
    return "inf" if x == float("inf") else f"{x:.6f}"


def report_rows(summaries) -> list[str]:
    rows = [REPORT_HEADER]
    for s in summaries:
        c = s.config
        rows.append(",".join([
            c.method, str(c.postproc), _fmt(c.rt60), _fmt(c.snr_db), _fmt(c.sir_db),
            str(c.K), str(c.T_frames), str(c.trials), _fmt(s.accuracy), _fmt(s.mae_deg),
            str(c.base_seed),
        ]))
    return rows


def emit_report(summaries, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(report_rows(summaries)) + "\n")


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    kw = {k: v for k, v in kw.items() if v is not None}
    return replace(cfg, **kw) if kw else cfg
